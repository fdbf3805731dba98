use std::f64::consts::PI;

use cgolab::expr::{Expr, ExprSum};
use cgolab::geometry::{build_domain, Domain, DomainSpec};
use cgolab::holo::{HolomorphicFunction, PhaseField, PhaseFunction};
use cgolab::pde::*;
use cgolab::transforms::GridFunction;
use cgolab::C64;
use proptest::prelude::*;

const J0_1: f64 = 0.7651976865579666;
const J1_1: f64 = 0.44005058574493355;

fn default_domain() -> Domain {
    build_domain(&DomainSpec::default()).unwrap()
}

fn constant(value: f64) -> ExprSum {
    ExprSum(vec![Expr::Constant { value }])
}

#[test]
fn helmholtz_solution_is_a_bessel_function() {
    // Δu + u = 0, u = 1 on the circle: u = J₀(r)/J₀(1)
    let d = default_domain();
    let q = Potential::from_expr(&constant(1.0), &d).unwrap();
    let g = vec![C64::new(1.0, 0.0); d.boundary.len()];
    let s = solve_dirichlet(&q, &GridFunction::zeros(&d), &g, &d).unwrap();
    let inner = (0..d.n_nodes()).min_by(|&i, &j| d.grid.nodes[i].norm().total_cmp(&d.grid.nodes[j].norm())).unwrap();
    let r = d.grid.nodes[inner].norm();
    // J₀(r) ≈ 1 − r²/4 for the innermost Gauss-Legendre ring
    let expected = (1.0 - r * r / 4.0 + r.powi(4) / 64.0) / J0_1;
    assert!((s.u.values[inner].re - expected).abs() < 1e-10, "{} vs {expected}", s.u.values[inner]);
    let flux = -J1_1 / J0_1;
    assert!(s.flux.iter().all(|f| (f.re - flux).abs() < 1e-9 && f.im.abs() < 1e-12));
    assert!(s.residual < 1e-8);
}

#[test]
fn harmonic_polynomials_are_reproduced() {
    let d = default_domain();
    let q = Potential::zero(&d);
    for m in 1..6u32 {
        let g: Vec<C64> = d.boundary.iter().map(|p| C64::new(p.z.powu(m).re, 0.0)).collect();
        let s = solve_dirichlet(&q, &GridFunction::zeros(&d), &g, &d).unwrap();
        let err = d.grid.nodes.iter().zip(&s.u.values).map(|(z, v)| (z.powu(m).re - v.re).abs()).fold(0.0, f64::max);
        assert!(err < 1e-11, "m = {m}: {err}");
        // ∂_ν Re z^m = m Re z^m on the unit circle
        let ferr = d.boundary.iter().zip(&s.flux).map(|(p, f)| (m as f64 * p.z.powu(m).re - f.re).abs()).fold(0.0, f64::max);
        assert!(ferr < 1e-9, "m = {m}: flux {ferr}");
    }
}

#[test]
fn reciprocity_gap_vanishes_for_a_common_potential() {
    let d = default_domain();
    let q = Potential::from_expr(&ExprSum(vec![Expr::GaussianBump { center: [0.1, -0.2], width: 0.3, height: 2.0 }]), &d).unwrap();
    let basis = gamma_tilde_basis(&d, 4);
    let f = GridFunction::zeros(&d);
    let u = solve_dirichlet(&q, &f, &basis[0], &d).unwrap();
    let v = solve_dirichlet(&q, &f, &basis[2], &d).unwrap();
    assert!(reciprocity_gap(&u, &v, &d).norm() < 1e-9);
}

#[test]
fn cauchy_data_distinguishes_potentials() {
    let d = default_domain();
    let q1 = Potential::zero(&d);
    let q2 = Potential::from_expr(&ExprSum(vec![Expr::GaussianBump { center: [0.0, 0.3], width: 0.3, height: 3.0 }]), &d).unwrap();
    let a = cauchy_data(&q1, &d, 3).unwrap();
    let b = cauchy_data(&q2, &d, 3).unwrap();
    assert!(a.max_residual < 1e-5 && b.max_residual < 1e-5);
    assert_eq!(a.max_flux_difference(&a), 0.0);
    assert!(a.max_flux_difference(&b) > 1e-3);
}

#[test]
fn exponential_conductivity_gives_a_constant_potential() {
    // √γ = e^{k·x/2}, so Δ√γ/√γ = |k|²/4
    let d = default_domain();
    let gamma = Conductivity::Expr(ExprSum(vec![Expr::ExpLinear { k: [1.2, -0.4], scale: 2.0 }]));
    let q = conductivity_to_potential(&gamma, &d).unwrap();
    let expected = (1.2f64 * 1.2 + 0.4 * 0.4) / 4.0;
    assert!(q.values.iter().all(|v| (v.re - expected).abs() < 1e-12));
    let sampled = Conductivity::Sampled(GridFunction::from_fn(&d, |z| C64::new(2.0 * (1.2 * z.re - 0.4 * z.im).exp(), 0.0)));
    let qs = conductivity_to_potential(&sampled, &d).unwrap();
    assert!(qs.values.iter().all(|v| (v.re - expected).abs() < 1e-6));
}

#[test]
fn random_samples_are_seeded() {
    let d = default_domain();
    let a = random_h10_samples(&d, 3, 42);
    let b = random_h10_samples(&d, 3, 42);
    let c = random_h10_samples(&d, 3, 43);
    assert_eq!(a[2].values, b[2].values);
    assert_ne!(a[0].values, c[0].values);
    assert!(a.iter().all(|u| u.boundary.as_ref().unwrap().iter().all(|v| *v == C64::new(0.0, 0.0))));
}

#[test]
fn carleman_check_requires_zero_trace() {
    let d = default_domain();
    let phase = PhaseFunction::from_holomorphic(HolomorphicFunction::quadratic(C64::new(0.0, 0.0)), &d).unwrap();
    let field = PhaseField::new(&phase, &d);
    let u = GridFunction::from_fn(&d, |_| C64::new(1.0, 0.0));
    assert!(carleman_estimate_check(&u, &field, &[5.0], &d).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn carleman_ratios_are_scale_invariant(seed in 0u64..1000, lambda in 1e-3f64..1e3) {
        let d = build_domain(&DomainSpec::unit_disk(32, 128, 128, [0.0, PI])).unwrap();
        let phase = PhaseFunction::from_holomorphic(HolomorphicFunction::quadratic(C64::new(0.0, 0.0)), &d).unwrap();
        let field = PhaseField::new(&phase, &d);
        let u = random_h10_samples(&d, 1, seed).remove(0);
        let taus = [5.0, 10.0];
        let a = carleman_estimate_check(&u, &field, &taus, &d).unwrap();
        let b = carleman_estimate_check(&u.scale(C64::new(lambda, 0.0)), &field, &taus, &d).unwrap();
        for (x, y) in a.ratios.iter().zip(&b.ratios) {
            prop_assert!((x - y).abs() <= 1e-10 * x.abs());
        }
    }

    #[test]
    fn dirichlet_solve_is_linear_in_the_data(s in -3.0f64..3.0, k in 1u32..5) {
        let d = build_domain(&DomainSpec::unit_disk(24, 64, 64, [0.0, PI])).unwrap();
        let q = Potential::from_expr(&constant(0.5), &d).unwrap();
        let f = GridFunction::zeros(&d);
        let g1: Vec<C64> = d.boundary.iter().map(|p| C64::new(p.z.powu(k).re, 0.0)).collect();
        let g2: Vec<C64> = d.boundary.iter().map(|p| C64::new(1.0 + p.z.im, 0.0)).collect();
        let g: Vec<C64> = g1.iter().zip(&g2).map(|(a, b)| a + b * s).collect();
        let u1 = solve_dirichlet(&q, &f, &g1, &d).unwrap().u;
        let u2 = solve_dirichlet(&q, &f, &g2, &d).unwrap().u;
        let u = solve_dirichlet(&q, &f, &g, &d).unwrap().u;
        let err = (0..d.n_nodes()).map(|i| (u.values[i] - u1.values[i] - u2.values[i] * s).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-9 * (1.0 + s.abs()));
    }
}
