use std::f64::consts::PI;

use cgolab::geometry::{build_domain, mask_area, o_epsilon_mask, DomainSpec};
use cgolab::{Error, C64};
use proptest::prelude::*;

#[test]
fn default_grid_budget_at_unit_gradient() {
    let d = build_domain(&DomainSpec::default()).unwrap();
    assert!((d.tau_budget(1.0) - 32.0).abs() < 1e-12);
    assert!(d.check_budget(32.0, 1.0).is_ok());
    match d.check_budget(64.0, 1.0) {
        Err(Error::OscillationBudget { tau_max, needed_angular, .. }) => {
            assert!((tau_max - 32.0).abs() < 1e-12);
            assert_eq!(needed_angular, 512);
        }
        other => panic!("expected a budget error, got {other:?}"),
    }
}

#[test]
fn gamma0_is_the_complement_of_gamma_tilde() {
    let d = build_domain(&DomainSpec::default()).unwrap();
    let g0 = d.gamma0_indices();
    let gt = d.gamma_tilde_indices();
    assert_eq!(g0.len() + gt.len(), d.boundary.len());
    assert!(gt.iter().all(|&k| d.boundary[k].theta < PI));
    assert!(g0.iter().all(|&k| d.boundary[k].theta >= PI));
    let len: f64 = d.boundary.iter().map(|p| p.weight).sum();
    assert!((len - 2.0 * PI).abs() < 1e-12);
}

#[test]
fn malformed_specs_are_rejected() {
    let bad = [
        DomainSpec { gamma_tilde: [0.0, 2.0 * PI], ..Default::default() },
        DomainSpec { gamma_tilde: [1.0, 0.5], ..Default::default() },
        DomainSpec { angular_nodes: 63, ..Default::default() },
        DomainSpec { radial_nodes: 4, ..Default::default() },
        DomainSpec { radius: 2.0, ..Default::default() },
    ];
    for spec in bad {
        assert!(matches!(build_domain(&spec), Err(Error::InvalidDomain(_))), "{spec:?}");
    }
}

#[test]
fn collar_mask_and_area() {
    let d = build_domain(&DomainSpec::default()).unwrap();
    let eps = 0.1;
    let mask = o_epsilon_mask(&d, eps).unwrap();
    assert!(mask.iter().all(|&i| d.grid.nodes[i].norm() >= 1.0 - eps - 1e-12));
    let exact = PI * (1.0 - (1.0 - eps) * (1.0 - eps));
    assert!((mask_area(&d, eps).unwrap() - exact).abs() < 1e-10);
    assert!(o_epsilon_mask(&d, 0.0).is_err());
    assert!(o_epsilon_mask(&d, 1.5).is_err());
}

#[test]
fn contains_respects_the_closed_disk() {
    let d = build_domain(&DomainSpec::default()).unwrap();
    assert!(d.contains(C64::from_polar(1.0, 0.7)));
    assert!(!d.contains(C64::new(0.8, 0.7)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// ∫_disk z^m z̄^n dA = π/(m+1) when m = n and 0 otherwise.
    #[test]
    fn quadrature_integrates_monomials(m in 0u32..12, n in 0u32..12) {
        let d = build_domain(&DomainSpec::unit_disk(32, 64, 64, [0.0, PI])).unwrap();
        let s: C64 = d.grid.nodes.iter().zip(&d.grid.weights).map(|(z, w)| z.powu(m) * z.conj().powu(n) * *w).sum();
        let exact = if m == n { PI / (m + 1) as f64 } else { 0.0 };
        prop_assert!((s - exact).norm() < 1e-12);
    }

    #[test]
    fn budget_scales_inversely_with_gradient(g in 0.1f64..20.0) {
        let d = build_domain(&DomainSpec::default()).unwrap();
        prop_assert!((d.tau_budget(g) * g - d.tau_budget(1.0)).abs() < 1e-9);
    }
}
