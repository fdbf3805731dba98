//! Stationary phase, the orthogonality identity between two CGO solutions,
//! and pointwise recovery of q₁ − q₂ from a τ-sweep.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cgo::{build_cgo, CGOSolution, CgoOptions};
use crate::exec;
use crate::geometry::Domain;
use crate::holo::{build_phase, schwarz_amplitude, HolomorphicFunction, PhaseField, PhaseFunction, PhaseOptions};
use crate::numeric::pairwise_sum_by;
use crate::pde::Potential;
use crate::transforms::{interpolate, support_gradient, GridFunction};
use crate::{Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

// ---------------------------------------------------------------------------
// Stationary phase.

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HessianData {
    /// det Im Φ'' = −|Φ''|².
    pub det: f64,
    pub signature: i32,
    pub im_phi: f64,
}

/// Hessian of ψ = Im Φ at a critical point. For holomorphic Φ the Hessian
/// is [[−Im Φ'', Re Φ''], [Re Φ'', Im Φ'']]: trace zero, determinant −|Φ''|².
pub fn hessian_data(phase: &PhaseFunction, z: C64) -> Result<HessianData> {
    let [value, d1, d2] = phase.phi.jet(z);
    let scale = 1.0 + d2.norm();
    if d1.norm() > 1e-8 * scale {
        return Err(Error::InvalidInput(format!("{z} is not a critical point (|Phi'| = {:.3e})", d1.norm())));
    }
    let second = d2.norm();
    if second < 1e-10 {
        return Err(Error::DegenerateCritical { z, second });
    }
    let h = [[-d2.im, d2.re], [d2.re, d2.im]];
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    // eigenvalues ±|Φ''|
    let signature = 0;
    Ok(HessianData { det, signature, im_phi: value.im })
}

/// ∫ h (e^{2iτψ} + e^{−2iτψ}) dx by direct quadrature.
pub fn oscillatory_integral(h: &GridFunction, field: &PhaseField, tau: f64, domain: &Domain) -> Result<C64> {
    h.check(domain, "oscillatory integrand")?;
    if !tau.is_finite() {
        return Err(Error::NonFinite("tau"));
    }
    if tau != 0.0 {
        domain.check_budget(tau, support_gradient(&h.values, field))?;
    }
    let w = &domain.grid.weights;
    Ok(pairwise_sum_by(h.len(), &|i| h.values[i] * (2.0 * (2.0 * tau * field.phi[i].im).cos() * w[i])))
}

/// 2π Σ_k h(z̃_k) cos(2τ Im Φ(z̃_k)) / (τ |det Im Φ''(z̃_k)|^{1/2}).
pub fn stationary_phase_leading(h: &GridFunction, phase: &PhaseFunction, tau: f64, domain: &Domain) -> Result<C64> {
    let values: Result<Vec<C64>> =
        phase.critical_points.iter().map(|c| interpolate(h, domain, c.z)).collect();
    stationary_phase_from_values(&values?, phase, tau)
}

/// The leading term with h already evaluated at the critical points.
pub fn stationary_phase_from_values(h_at: &[C64], phase: &PhaseFunction, tau: f64) -> Result<C64> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidInput(format!("tau must be positive, got {tau}")));
    }
    if h_at.len() != phase.critical_points.len() {
        return Err(Error::InvalidInput("one value per critical point required".into()));
    }
    let mut s = ZERO;
    for (c, h) in phase.critical_points.iter().zip(h_at) {
        let hd = hessian_data(phase, c.z)?;
        s += h * (2.0 * PI * (2.0 * tau * hd.im_phi).cos() / (tau * hd.det.abs().sqrt()));
    }
    Ok(s)
}

// ---------------------------------------------------------------------------
// The orthogonality identity.

/// Every term of the expansion of ∫(q₁ − q₂)u₁v dx, τ fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityBreakdown {
    pub tau: f64,
    /// ∫ q u₁ v dx from the assembled solutions.
    pub direct: C64,
    /// ∫ q (a² + ā²) dx.
    pub t_aa: C64,
    /// Stationary-phase value of ∫ q|a|²(e^{2iτψ} + e^{−2iτψ}) dx.
    pub stationary_sum: C64,
    /// (1/τ) ∫ q (a(a₀ + b₀) + ā(ā₁ + b̄₁)) dx.
    pub corrector_cross: C64,
    /// ∫ q (a₀b₀ + ā₁b̄₁) dx (enters the expansion divided by τ²).
    pub corrector_integral: C64,
    /// −(1/4τ) ∫ q (a D₁/Φ' + ā D₃/Φ̄') dx, from the u₁ build.
    pub minus_integrals: C64,
    /// +(1/4τ) ∫ q (a D₂/Φ' + ā D₄/Φ̄') dx, from the v build.
    pub plus_integrals: C64,
    /// Oscillatory transform and quotient terms, each o(1/τ).
    pub i2: C64,
    pub i3: C64,
    pub j2: C64,
    pub j3: C64,
    pub expansion_total: C64,
    pub gap: f64,
}

impl IdentityBreakdown {
    /// D(τ): the direct integral minus every non-stationary term.
    pub fn stationary_signal(&self) -> C64 {
        self.direct - (self.expansion_total - self.stationary_sum)
    }
}

fn same_poly(a: &HolomorphicFunction, b: &HolomorphicFunction) -> bool {
    a.coefficients == b.coefficients
}

/// Evaluates the identity terms from the u₁ (sign +1) and v (sign −1) builds.
/// `q` is q₁ − q₂ on the nodes.
pub fn identity_terms(
    q: &Potential,
    u: &CGOSolution,
    v: &CGOSolution,
    field: &PhaseField,
    domain: &Domain,
) -> Result<IdentityBreakdown> {
    if u.sign != 1 || v.sign != -1 {
        return Err(Error::InvalidInput("expected the u₁ build (sign +1) and the v build (sign −1)".into()));
    }
    if u.tau != v.tau {
        return Err(Error::InvalidInput(format!("builds at different tau: {} and {}", u.tau, v.tau)));
    }
    if !same_poly(&u.a, &v.a) {
        return Err(Error::InvalidInput("builds use different amplitudes".into()));
    }
    let n = domain.n_nodes();
    if q.values.len() != n || u.total.len() != n || v.total.len() != n || field.phi.len() != n {
        return Err(Error::InvalidInput("builds, potential and phase field use different grids".into()));
    }
    let tau = u.tau;
    let w = &domain.grid.weights;
    let qv = &q.values;
    let av = u.a.sample(&domain.grid.nodes);
    let (a0, a1) = (&u.correctors.0, &u.correctors.1);
    let (b0, b1) = (&v.correctors.0, &v.correctors.1);
    let a0v = a0.sample(&domain.grid.nodes);
    let a1v = a1.sample(&domain.grid.nodes);
    let b0v = b0.sample(&domain.grid.nodes);
    let b1v = b1.sample(&domain.grid.nodes);
    // e^{2iτψ}
    let osc: Vec<C64> = field.phi.iter().map(|p| C64::from_polar(1.0, 2.0 * tau * p.im)).collect();
    let e2 = &u.partition.e2.values;
    let lu = &u.first_layer;
    let lv = &v.first_layer;
    let dp = &field.dphi;
    let integral = |f: &(dyn Fn(usize) -> C64 + Sync)| pairwise_sum_by(n, &|i| if qv[i] == ZERO { ZERO } else { qv[i] * f(i) * w[i] });

    let direct = integral(&|i| u.total.values[i] * v.total.values[i]);
    let t_aa = integral(&|i| av[i] * av[i] + av[i].conj() * av[i].conj());
    let corrector_cross =
        integral(&|i| av[i] * (a0v[i] + b0v[i]) + av[i].conj() * (a1v[i] + b1v[i]).conj()) / tau;
    let corrector_integral = integral(&|i| a0v[i] * b0v[i] + (a1v[i] * b1v[i]).conj());
    let quot = |num: C64, den: C64| if num == ZERO { ZERO } else { num / den };
    let minus_integrals = -integral(&|i| {
        av[i] * quot(lu.d1.values[i], dp[i]) + av[i].conj() * quot(lu.d3.values[i], dp[i].conj())
    }) / (4.0 * tau);
    let plus_integrals = integral(&|i| {
        av[i] * quot(lv.d1.values[i], dp[i]) + av[i].conj() * quot(lv.d3.values[i], dp[i].conj())
    }) / (4.0 * tau);
    let i2 = -0.25 * integral(&|i| av[i].conj() * lu.rt.values[i] * osc[i] + av[i] * lu.rr.values[i] * osc[i].conj());
    let i3 = -integral(&|i| {
        if e2[i] == ZERO {
            return ZERO;
        }
        e2[i] * (av[i].conj() * osc[i] * lu.d1.values[i] / dp[i] + av[i] * osc[i].conj() * lu.d3.values[i] / dp[i].conj())
    }) / (4.0 * tau);
    let j2 = -0.25 * integral(&|i| av[i].conj() * osc[i].conj() * lv.rt.values[i] + av[i] * osc[i] * lv.rr.values[i]);
    let j3 = integral(&|i| {
        if e2[i] == ZERO {
            return ZERO;
        }
        e2[i] * (av[i].conj() * osc[i].conj() * lv.d1.values[i] / dp[i] + av[i] * osc[i] * lv.d3.values[i] / dp[i].conj())
    }) / (4.0 * tau);

    let q_at: Result<Vec<C64>> = field
        .phase
        .critical_points
        .iter()
        .map(|c| Ok(interpolate(&q.grid(), domain, c.z)? * u.a.eval(c.z).norm_sqr()))
        .collect();
    let stationary_sum = stationary_phase_from_values(&q_at?, &field.phase, tau)?;
    let expansion_total =
        t_aa + stationary_sum + corrector_cross + corrector_integral / (tau * tau) + minus_integrals + plus_integrals;
    let gap = (direct - expansion_total).norm();
    Ok(IdentityBreakdown {
        tau,
        direct,
        t_aa,
        stationary_sum,
        corrector_cross,
        corrector_integral,
        minus_integrals,
        plus_integrals,
        i2,
        i3,
        j2,
        j3,
        expansion_total,
        gap,
    })
}

// ---------------------------------------------------------------------------
// Pointwise recovery.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryOptions {
    pub phase: PhaseOptions,
    pub cgo: CgoOptions,
    /// Shrink ρ and ε when the default halo would reach the boundary collar.
    pub adaptive_halo: bool,
    /// Fits with a larger column-equilibrated condition number are rejected.
    pub max_condition: f64,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        RecoveryOptions { phase: PhaseOptions::default(), cgo: CgoOptions::default(), adaptive_halo: true, max_condition: 1e6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub xhat: C64,
    /// τ values actually used (the requested sweep capped by the budget).
    pub tau_sweep: Vec<f64>,
    /// D(τ) for each τ used.
    pub signal: Vec<C64>,
    pub fitted: C64,
    /// Coefficients of the 2π cos/τ², 2π sin/τ² and 1/τ² columns.
    pub correction: [C64; 3],
    pub truth: Option<C64>,
    pub relative_error: Option<f64>,
    pub condition: f64,
    /// max |D − fit| / max |D|.
    pub fit_residual: f64,
    pub max_phase_gradient: f64,
}

/// Largest τ at which a full CGO build fits the grid: the remainder's
/// Carleman transforms run at τ/2 against the full-disk gradient.
pub fn cgo_tau_limit(field: &PhaseField, domain: &Domain) -> f64 {
    2.0 * domain.tau_budget(field.max_grad_where(|_| true))
}

/// CGO options for a probe at x̂, shrinking the partition halo near ∂Ω when
/// `adaptive_halo` is set.
pub fn cgo_options_for(domain: &Domain, xhat: C64, opts: &RecoveryOptions) -> CgoOptions {
    let mut c = opts.cgo;
    if opts.adaptive_halo {
        let inr = domain.inradius();
        let room = domain.radius() - xhat.norm();
        if (2.0 * c.rho + c.eps) * inr >= room {
            let s = room / (3.2 * inr);
            c.rho = s;
            c.eps = s;
        }
    }
    c
}

/// Columns of the recovery design at τ: the leading stationary-phase term
/// 2π cos(2τ Im Φ(x̂))/(τ|Φ''(x̂)|), its next order 2π cos/τ² and 2π sin/τ²,
/// and a non-oscillating 1/τ².
fn design_row(t: f64, im_phi: f64, hess: f64) -> [f64; 4] {
    let (s, c) = (2.0 * t * im_phi).sin_cos();
    [2.0 * PI * c / (t * hess), 2.0 * PI * c / (t * t), 2.0 * PI * s / (t * t), 1.0 / (t * t)]
}

struct SignalFit {
    c: C64,
    correction: [C64; 3],
    condition: f64,
    residual: f64,
}

/// Least squares of D(τ) against [`design_row`], with the condition number
/// of the column-equilibrated design.
fn fit_signal(taus: &[f64], d: &[C64], im_phi: f64, hess: f64, max_condition: f64) -> Result<SignalFit> {
    let m = taus.len();
    let a = DMatrix::<f64>::from_fn(m, 4, |k, j| design_row(taus[k], im_phi, hess)[j]);
    let norms: Vec<f64> = (0..4).map(|j| a.column(j).norm()).collect();
    if norms.iter().any(|&n| n == 0.0) {
        return Err(Error::IllConditioned(f64::INFINITY));
    }
    let mut s = a.clone();
    for j in 0..4 {
        s.column_mut(j).scale_mut(1.0 / norms[j]);
    }
    let sv = s.svd(true, true);
    let smax = sv.singular_values.max();
    let smin = sv.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= max_condition) {
        return Err(Error::IllConditioned(condition));
    }
    let solve = |rhs: DVector<f64>| -> Result<DVector<f64>> {
        let x = sv.solve(&rhs, 1e-14).map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(DVector::from_iterator(4, (0..4).map(|j| x[j] / norms[j])))
    };
    let xr = solve(DVector::from_iterator(m, d.iter().map(|v| v.re)))?;
    let xi = solve(DVector::from_iterator(m, d.iter().map(|v| v.im)))?;
    let x: Vec<C64> = (0..4).map(|j| C64::new(xr[j], xi[j])).collect();
    let dmax = d.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let res = (0..m)
        .map(|k| (d[k] - (0..4).map(|j| x[j] * a[(k, j)]).sum::<C64>()).norm())
        .fold(0.0, f64::max);
    Ok(SignalFit {
        c: x[0],
        correction: [x[1], x[2], x[3]],
        condition,
        residual: if dmax > 0.0 { res / dmax } else { 0.0 },
    })
}

/// Builds the phase and amplitude for x̂, the two CGO solutions per τ, and
/// extracts q(x̂) from the stationary-phase signal.
pub fn recover_pointwise(
    q1: &Potential,
    q2: &Potential,
    domain: &Domain,
    xhat: C64,
    taus: &[f64],
    opts: &RecoveryOptions,
) -> Result<RecoveryResult> {
    let phase = build_phase(domain, xhat, 0.0, 0.0, &opts.phase)?;
    if phase.critical_points.len() != 1 {
        return Err(Error::PhaseValidation(format!(
            "{} critical points; the extraction needs x̂ as the only one",
            phase.critical_points.len()
        )));
    }
    let field = PhaseField::new(&phase, domain);
    let a = schwarz_amplitude(domain, xhat)?.a;
    let limit = cgo_tau_limit(&field, domain);
    let used: Vec<f64> = taus.iter().cloned().filter(|&t| t <= limit).collect();
    if used.len() < 4 {
        let mut sorted = taus.to_vec();
        sorted.sort_by(f64::total_cmp);
        let Some(&t4) = sorted.get(3) else {
            return Err(Error::InvalidInput(format!("the fit needs at least 4 τ values, got {}", taus.len())));
        };
        let g = field.max_grad_where(|_| true);
        return Err(match domain.check_budget(t4 / 2.0, g) {
            Err(Error::OscillationBudget { needed_angular, needed_radial, .. }) => {
                Error::OscillationBudget { tau: t4, tau_max: limit, needed_angular, needed_radial }
            }
            _ => Error::InvalidInput(format!("only {} τ values within the budget {limit:.3}", used.len())),
        });
    }
    let cgo = cgo_options_for(domain, xhat, opts);
    let q = Potential::sampled(q1.values.iter().zip(&q2.values).map(|(a, b)| a - b).collect(), domain)?;
    let mut signal = Vec::with_capacity(used.len());
    for &tau in &used {
        let u = build_cgo(q1, &field, &a, tau, 1, domain, &cgo)?;
        let v = build_cgo(q2, &field, &a, tau, -1, domain, &cgo)?;
        let b = identity_terms(&q, &u, &v, &field, domain)?;
        signal.push(b.stationary_signal());
    }
    let hd = hessian_data(&phase, phase.critical_points[0].z)?;
    let fit = fit_signal(&used, &signal, hd.im_phi, hd.det.abs().sqrt(), opts.max_condition)?;
    let fitted = fit.c;
    let truth = interpolate(&q.grid(), domain, xhat).ok();
    let relative_error = truth.and_then(|t| if t.norm() > 0.0 { Some((fitted - t).norm() / t.norm()) } else { None });
    Ok(RecoveryResult {
        xhat,
        tau_sweep: used,
        signal,
        fitted,
        correction: fit.correction,
        truth,
        relative_error,
        condition: fit.condition,
        fit_residual: fit.residual,
        max_phase_gradient: field.max_grad_where(|_| true),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub xhat: C64,
    pub result: Option<RecoveryResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryMap {
    pub probes: Vec<ProbeOutcome>,
}

/// Runs `recover_pointwise` at every probe; failures are recorded per point.
pub fn recovery_map(
    q1: &Potential,
    q2: &Potential,
    domain: &Domain,
    probes: &[C64],
    taus: &[f64],
    opts: &RecoveryOptions,
) -> RecoveryMap {
    let probes = exec::map_range(probes.len(), |k| {
        let xhat = probes[k];
        match recover_pointwise(q1, q2, domain, xhat, taus, opts) {
            Ok(r) => ProbeOutcome { xhat, result: Some(r), error: None },
            Err(e) => ProbeOutcome { xhat, result: None, error: Some(e.to_string()) },
        }
    });
    RecoveryMap { probes }
}

impl RecoveryMap {
    pub fn succeeded(&self) -> impl Iterator<Item = &RecoveryResult> {
        self.probes.iter().filter_map(|p| p.result.as_ref())
    }

    /// One row per probe: x1, x2, re_c, im_c, truth_re, truth_im, rel_err
    /// (empty cells where unavailable).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x1", "x2", "re_c", "im_c", "truth_re", "truth_im", "rel_err"])?;
        let f = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for p in &self.probes {
            let r = p.result.as_ref();
            w.write_record([
                format!("{:e}", p.xhat.re),
                format!("{:e}", p.xhat.im),
                f(r.map(|r| r.fitted.re)),
                f(r.map(|r| r.fitted.im)),
                f(r.and_then(|r| r.truth.map(|t| t.re))),
                f(r.and_then(|r| r.truth.map(|t| t.im))),
                f(r.and_then(|r| r.relative_error)),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
