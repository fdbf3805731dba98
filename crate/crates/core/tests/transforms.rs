use cgolab::geometry::{build_domain, Domain, DomainSpec};
use cgolab::holo::{HolomorphicFunction, PhaseField, PhaseFunction};
use cgolab::transforms::*;
use cgolab::C64;
use proptest::prelude::*;

fn disk(nr: usize, nt: usize) -> Domain {
    build_domain(&DomainSpec::unit_disk(nr, nt, nt, [0.0, std::f64::consts::PI])).unwrap()
}

fn max_err(f: &GridFunction, d: &Domain, exact: impl Fn(C64) -> C64) -> f64 {
    d.grid.nodes.iter().zip(&f.values).map(|(z, v)| (exact(*z) - v).norm()).fold(0.0, f64::max)
}

/// Cauchy transform of z^m z̄^n over the unit disk, from the power series of
/// 1/(z − w): z^m z̄^{n+1}/(n+1), minus z^{m−n−1}/(n+1) when m > n.
fn monomial_transform(m: u32, n: u32, z: C64) -> C64 {
    let main = z.powu(m) * z.conj().powu(n + 1) / (n + 1) as f64;
    if m > n {
        main - z.powu(m - n - 1) / (n + 1) as f64
    } else {
        main
    }
}

#[test]
fn dbar_inverse_of_one_is_conj_z() {
    let d = disk(64, 256);
    let one = GridFunction::from_fn(&d, |_| C64::new(1.0, 0.0));
    assert!(max_err(&dbar_inverse(&one, &d).unwrap(), &d, |z| z.conj()) < 1e-10);
    assert!(max_err(&dz_inverse(&one, &d).unwrap(), &d, |z| z) < 1e-10);
}

#[test]
fn dbar_inverse_of_z_vanishes_on_the_circle() {
    let d = disk(48, 128);
    let g = GridFunction::from_fn(&d, |z| z);
    let t = dbar_inverse(&g, &d).unwrap();
    assert!(max_err(&t, &d, |z| C64::new(z.norm_sqr() - 1.0, 0.0)) < 1e-10);
    let on_circle = dbar_inverse_at(&g, &d, &[C64::from_polar(1.0, 0.3), C64::from_polar(1.0, -2.0)]).unwrap();
    assert!(on_circle.iter().all(|v| v.norm() < 1e-10), "{on_circle:?}");
}

/// The direct quadrature is low order (its integrand has a bounded jump at
/// the target), so the check is agreement that improves under refinement.
#[test]
fn modal_and_direct_routes_agree_on_a_gaussian() {
    let gap = |nr: usize, nt: usize| {
        let d = disk(nr, nt);
        let g = GridFunction::from_fn(&d, |z| C64::new((-(z - C64::new(0.1, 0.2)).norm_sqr() / 0.05).exp(), 0.0));
        let fast = dbar_inverse(&g, &d).unwrap();
        let targets: Vec<usize> = (0..d.n_nodes()).step_by(97).collect();
        let direct = dbar_inverse_direct(&g, &d, &targets).unwrap();
        let e = targets.iter().zip(&direct).map(|(&i, v)| (fast.values[i] - v).norm()).fold(0.0, f64::max);
        e / fast.sup_norm()
    };
    let coarse = gap(32, 128);
    let fine = gap(64, 256);
    assert!(fine < 5e-3, "{fine}");
    assert!(fine < 0.5 * coarse, "{coarse} -> {fine}");
}

#[test]
fn transport_solutions_satisfy_their_equations_by_finite_differences() {
    let d = disk(128, 512);
    let phase = PhaseFunction::from_holomorphic(HolomorphicFunction::quadratic(C64::new(0.0, 0.0)), &d).unwrap();
    let field = PhaseField::new(&phase, &d);
    let g = GridFunction::from_fn(&d, |z| C64::new((-z.norm_sqr() / 0.0144).exp(), 0.0));
    for tau in [5.0, 20.0] {
        let r = r_phi_tau(&g, &field, tau, &d).unwrap();
        let rt = r_tilde_phi_tau(&g, &field, tau, &d).unwrap();
        assert!(transport_residual_fd(&g, &r, &field, tau, &d, false, 0.0) < 1e-3);
        assert!(transport_residual_fd(&g, &rt, &field, tau, &d, true, 0.0) < 1e-3);
    }
}

#[test]
fn transforms_beyond_the_oscillation_budget_are_refused() {
    let d = disk(32, 64);
    let phase = PhaseFunction::from_holomorphic(HolomorphicFunction::quadratic(C64::new(0.0, 0.0)), &d).unwrap();
    let field = PhaseField::new(&phase, &d);
    let g = GridFunction::from_fn(&d, |_| C64::new(1.0, 0.0));
    let tau = 2.0 * d.tau_budget(1.0);
    assert!(matches!(r_phi_tau(&g, &field, tau, &d), Err(cgolab::Error::OscillationBudget { .. })));
}

#[test]
fn energy_identities_hold_for_exp_z() {
    let d = disk(64, 256);
    let phase = PhaseFunction::from_holomorphic(HolomorphicFunction::quadratic(C64::new(0.0, 0.0)), &d).unwrap();
    let field = PhaseField::new(&phase, &d);
    let v = GridFunction::from_fn(&d, |z| z.exp());
    for case in [EnergyCase::DzCase, EnergyCase::DbarCase] {
        for tau in [3.0, 5.0, 10.0] {
            let gap = energy_identity_check(&v, &field, tau, case, &d).unwrap();
            assert!(gap < 1e-6, "{case:?} tau {tau}: {gap}");
        }
    }
}

#[test]
fn loglog_slope_recovers_a_power_law() {
    let x = [10.0, 20.0, 40.0, 80.0];
    let y: Vec<f64> = x.iter().map(|t: &f64| 3.0 * t.powf(-1.5)).collect();
    let (slope, _) = loglog_slope(&x, &y).unwrap();
    assert!((slope + 1.5).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dbar_inverse_matches_monomial_transforms(m in 0u32..5, n in 0u32..4, re in -1.0f64..1.0, im in -1.0f64..1.0) {
        let d = disk(40, 96);
        let c = C64::new(re, im);
        let g = GridFunction::from_fn(&d, |z| c * z.powu(m) * z.conj().powu(n));
        let t = dbar_inverse(&g, &d).unwrap();
        prop_assert!(max_err(&t, &d, |z| c * monomial_transform(m, n, z)) < 1e-9);
    }

    #[test]
    fn dz_inverse_is_the_conjugate_route(m in 0u32..4, n in 0u32..4, shift in -0.5f64..0.5) {
        let d = disk(32, 64);
        let g = GridFunction::from_fn(&d, |z| (z + shift).powu(m) * z.conj().powu(n) * C64::new(1.0, 0.5));
        let a = dz_inverse(&g, &d).unwrap();
        let b = dbar_inverse(&g.conj(), &d).unwrap().conj();
        let diff = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        prop_assert!(diff < 1e-12);
    }

    #[test]
    fn dbar_inverse_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, w in 0.1f64..0.5) {
        let d = disk(32, 96);
        let f = GridFunction::from_fn(&d, |z| C64::new((-z.norm_sqr() / (w * w)).exp(), 0.0));
        let g = GridFunction::from_fn(&d, |z| z * z.conj().powu(2));
        let lhs = dbar_inverse(&f.scale(C64::new(a, 0.0)).add(&g.scale(C64::new(0.0, b))), &d).unwrap();
        let rhs = dbar_inverse(&f, &d).unwrap().scale(C64::new(a, 0.0)).add(&dbar_inverse(&g, &d).unwrap().scale(C64::new(0.0, b)));
        let diff = lhs.values.iter().zip(&rhs.values).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        prop_assert!(diff < 1e-12 * (1.0 + a.abs() + b.abs()));
    }
}
