use std::f64::consts::PI;

use cgolab::geometry::{build_domain, Domain, DomainSpec};
use cgolab::holo::*;
use cgolab::C64;
use proptest::prelude::*;

fn default_domain() -> Domain {
    build_domain(&DomainSpec::default()).unwrap()
}

#[test]
fn derivative_matches_central_differences() {
    let f = HolomorphicFunction::new(vec![C64::new(1.0, 2.0), C64::new(-0.5, 0.0), C64::new(0.0, 3.0), C64::new(0.25, -1.0)]);
    let z = C64::new(0.3, -0.2);
    let h = 1e-5;
    let fd = (f.eval(z + h) - f.eval(z - h)) / (2.0 * h);
    assert!((f.derivative().eval(z) - fd).norm() < 1e-8);
    // holomorphic: the same quotient along the imaginary axis
    let ih = C64::new(0.0, h);
    let fd_i = (f.eval(z + ih) - f.eval(z - ih)) / (2.0 * ih);
    assert!((fd - fd_i).norm() < 1e-8);
}

#[test]
fn quadratic_phase_has_a_single_critical_point() {
    let d = default_domain();
    let z0 = C64::new(0.2, 0.1);
    let p = PhaseFunction::from_holomorphic(HolomorphicFunction::quadratic(z0), &d).unwrap();
    assert_eq!(p.critical_points.len(), 1);
    assert!((p.critical_points[0].z - z0).norm() < 1e-12);
    assert!((p.critical_points[0].second - 1.0).norm() < 1e-12);
}

#[test]
fn schwarz_phase_meets_the_admissibility_conditions() {
    let d = default_domain();
    let xhat = C64::new(0.0, 0.6);
    let phase = build_phase(&d, xhat, 0.0, 0.0, &PhaseOptions::default()).unwrap();
    let [_, d1, d2] = phase.phi.jet(xhat);
    assert!(d1.norm() < 1e-10);
    assert!((d2.norm() - 1.0).abs() < 1e-8);
    // Im Φ on a fine sampling of the lower semicircle, not just the grid nodes
    let worst = (0..4000)
        .map(|k| C64::from_polar(1.0, PI + PI * (k as f64 + 0.5) / 4000.0))
        .map(|z| phase.phi.eval(z).im.abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-10, "{worst}");
    let report = validate_phase(&phase, &d, xhat, 1e-10);
    assert!(report.passed, "{report:?}");
    assert_eq!(report.critical_point_count, 1);
}

#[test]
fn schwarz_amplitude_is_normalized_and_imaginary_on_gamma0() {
    let d = default_domain();
    let xhat = C64::new(-0.2, 0.5);
    let a = schwarz_amplitude(&d, xhat).unwrap().a;
    assert!((a.eval(xhat) - 1.0).norm() < 1e-12);
    let worst = (0..2000).map(|k| a.eval(C64::from_polar(1.0, PI + PI * k as f64 / 2000.0)).re.abs()).fold(0.0, f64::max);
    assert!(worst < 1e-10, "{worst}");
}

#[test]
fn targets_in_the_boundary_collar_are_refused() {
    let d = default_domain();
    assert!(build_phase(&d, C64::new(0.0, 0.999), 0.0, 0.0, &PhaseOptions::default()).is_err());
}

#[test]
fn cauchy_riemann_sweep_reproduces_a_holomorphic_trace() {
    let d = default_domain();
    let order = gamma0_arc_order(&d);
    let b: Vec<C64> = order.iter().map(|&k| d.boundary[k].z.powu(2)).collect();
    let b1: Vec<f64> = b.iter().map(|v| v.re).collect();
    let b2: Vec<f64> = b.iter().map(|v| v.im).collect();
    let sweep = cauchy_riemann_sweep(&d, &b1, &b2, &[1e-1, 1e-2, 1e-3], 16).unwrap();
    assert!(sweep.monotone);
    assert!(sweep.steps[2].relative_misfit < 1e-2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn roots_are_recovered_from_products(
        roots in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..7)
    ) {
        let mut p = HolomorphicFunction::constant(C64::new(1.0, 0.0));
        let rs: Vec<C64> = roots.iter().map(|&(a, b)| C64::new(a, b)).collect();
        for r in &rs {
            p = p.mul(&HolomorphicFunction::new(vec![-r, C64::new(1.0, 0.0)]));
        }
        let found = polynomial_roots(&p.coefficients);
        prop_assert_eq!(found.len(), rs.len());
        // every found root is a root: residual relative to the coefficient scale
        let scale: f64 = p.coefficients.iter().map(|c| c.norm()).sum();
        for z in &found {
            prop_assert!(p.eval(*z).norm() < 1e-9 * scale);
        }
    }

    #[test]
    fn product_rule_for_derivatives(
        a in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..6),
        b in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..6),
        x in -0.9f64..0.9, y in -0.4f64..0.4,
    ) {
        let f = HolomorphicFunction::new(a.iter().map(|&(r, i)| C64::new(r, i)).collect());
        let g = HolomorphicFunction::new(b.iter().map(|&(r, i)| C64::new(r, i)).collect());
        let z = C64::new(x, y);
        let lhs = f.mul(&g).derivative().eval(z);
        let rhs = f.derivative().eval(z) * g.eval(z) + f.eval(z) * g.derivative().eval(z);
        prop_assert!((lhs - rhs).norm() < 1e-12);
    }
}
