//! Area Cauchy transforms and the conjugated operators built on them.
//!
//! `T g = ∂_z̄⁻¹ g = −(1/π) ∫_Ω g(ζ)/(ζ − z) dA` is evaluated mode by mode on
//! the polar grid (see [`crate::polar`]). A direct singularity-subtracted
//! quadrature is kept as an independent route for cross-checks.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::geometry::{o_epsilon_mask, Domain};
use crate::holo::PhaseField;
use crate::numeric::{pairwise_sum, pairwise_sum_by};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Complex samples on the quadrature nodes, optionally with a boundary trace.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub values: Vec<C64>,
    pub boundary: Option<Vec<C64>>,
}

impl GridFunction {
    pub fn new(values: Vec<C64>) -> Self {
        GridFunction { values, boundary: None }
    }

    pub fn with_boundary(values: Vec<C64>, boundary: Vec<C64>) -> Self {
        GridFunction { values, boundary: Some(boundary) }
    }

    pub fn zeros(domain: &Domain) -> Self {
        GridFunction { values: vec![ZERO; domain.n_nodes()], boundary: Some(vec![ZERO; domain.boundary.len()]) }
    }

    /// Samples `f` on the nodes and the boundary.
    pub fn from_fn(domain: &Domain, f: impl Fn(C64) -> C64) -> Self {
        let values = domain.grid.nodes.iter().map(|&z| f(z)).collect();
        let boundary = domain.boundary.iter().map(|p| f(p.z)).collect();
        GridFunction { values, boundary: Some(boundary) }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check(&self, domain: &Domain, what: &'static str) -> Result<()> {
        if self.values.len() != domain.n_nodes() {
            return Err(Error::InvalidInput(format!(
                "{what}: {} samples for {} nodes",
                self.values.len(),
                domain.n_nodes()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(what));
        }
        if let Some(b) = &self.boundary {
            if b.len() != domain.boundary.len() {
                return Err(Error::InvalidInput(format!("{what}: boundary trace has wrong length")));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(what));
            }
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        GridFunction {
            values: self.values.iter().map(|&v| f(v)).collect(),
            boundary: self.boundary.as_ref().map(|b| b.iter().map(|&v| f(v)).collect()),
        }
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map(|v| v * s)
    }

    /// Pointwise `f(self, other)`; the trace is kept only when both have one.
    pub fn zip(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Self {
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        let boundary = match (&self.boundary, &other.boundary) {
            (Some(a), Some(b)) => Some(a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()),
            _ => None,
        };
        GridFunction { values, boundary }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a * b)
    }

    pub fn integrate(&self, domain: &Domain) -> C64 {
        let w = &domain.grid.weights;
        pairwise_sum_by(self.values.len(), &|i| self.values[i] * w[i])
    }

    pub fn l2_norm(&self, domain: &Domain) -> f64 {
        let w = &domain.grid.weights;
        let parts: Vec<f64> = self.values.iter().zip(w).map(|(v, w)| v.norm_sqr() * w).collect();
        pairwise_sum(&parts).sqrt()
    }

    /// L² norm over the nodes selected by `keep`.
    pub fn l2_norm_where(&self, domain: &Domain, keep: impl Fn(usize) -> bool) -> f64 {
        let w = &domain.grid.weights;
        let parts: Vec<f64> =
            (0..self.values.len()).filter(|&i| keep(i)).map(|i| self.values[i].norm_sqr() * w[i]).collect();
        pairwise_sum(&parts).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// L² norm of the trace over boundary nodes with `on_gamma0 == gamma0`
    /// (or all nodes when `gamma0` is `None`).
    pub fn boundary_l2(&self, domain: &Domain, gamma0: Option<bool>) -> f64 {
        let Some(b) = &self.boundary else { return f64::NAN };
        let parts: Vec<f64> = domain
            .boundary
            .iter()
            .zip(b)
            .filter(|(p, _)| gamma0.is_none_or(|g| p.on_gamma0 == g))
            .map(|(p, v)| v.norm_sqr() * p.weight)
            .collect();
        pairwise_sum(&parts).sqrt()
    }

    /// CSV with columns x1, x2, re, im (nodes, then boundary nodes when present).
    pub fn write_csv(&self, domain: &Domain, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x1", "x2", "re", "im"])?;
        for (z, v) in domain.grid.nodes.iter().zip(&self.values) {
            w.serialize((z.re, z.im, v.re, v.im))?;
        }
        if let Some(b) = &self.boundary {
            for (p, v) in domain.boundary.iter().zip(b) {
                w.serialize((p.z.re, p.z.im, v.re, v.im))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn zero_input(g: &GridFunction) -> bool {
    g.values.iter().all(|v| *v == ZERO)
}

/// ∂_z̄⁻¹ g on every node, with the trace on the boundary nodes.
pub fn dbar_inverse(g: &GridFunction, domain: &Domain) -> Result<GridFunction> {
    g.check(domain, "dbar_inverse input")?;
    Ok(dbar_inverse_unchecked(&g.values, domain))
}

pub(crate) fn dbar_inverse_unchecked(values: &[C64], domain: &Domain) -> GridFunction {
    let ops = &domain.polar;
    let gm = ops.to_modes(values);
    let (modes, rmodes) = ops.cauchy_modes(&gm);
    GridFunction::with_boundary(ops.from_modes(&modes), ops.boundary_from_modes(&rmodes))
}

/// ∂_z̄⁻¹ g at arbitrary points of the closed disk.
pub fn dbar_inverse_at(g: &GridFunction, domain: &Domain, targets: &[C64]) -> Result<Vec<C64>> {
    g.check(domain, "dbar_inverse input")?;
    if let Some(z) = targets.iter().find(|z| !domain.contains(**z)) {
        return Err(Error::TargetOutside(*z));
    }
    let ops = &domain.polar;
    let (modes, _) = ops.cauchy_modes(&ops.to_modes(&g.values));
    Ok(targets.iter().map(|&z| ops.eval_point(&modes, z)).collect())
}

/// ∂_z̄⁻¹ g at the listed nodes by global quadrature of
/// (g(ζ) − g(z))/(ζ − z) plus g(z)·z̄ (the transform of 1 on a disk).
/// O(N) per target; independent of the modal route.
pub fn dbar_inverse_direct(g: &GridFunction, domain: &Domain, targets: &[usize]) -> Result<Vec<C64>> {
    g.check(domain, "dbar_inverse input")?;
    let n = domain.n_nodes();
    if let Some(&t) = targets.iter().find(|&&t| t >= n) {
        return Err(Error::InvalidInput(format!("target node {t} out of range")));
    }
    let nodes = &domain.grid.nodes;
    let w = &domain.grid.weights;
    Ok(exec::map_range(targets.len(), |k| {
        let t = targets[k];
        let z = nodes[t];
        let gz = g.values[t];
        let s = pairwise_sum_by(n, &|j| if j == t { ZERO } else { (g.values[j] - gz) * (w[j] / (nodes[j] - z)) });
        -s / PI + gz * z.conj()
    }))
}

/// ∂_z⁻¹ g = conj(∂_z̄⁻¹ conj g).
pub fn dz_inverse(g: &GridFunction, domain: &Domain) -> Result<GridFunction> {
    Ok(dbar_inverse(&g.conj(), domain)?.conj())
}

/// max |∇ψ| over the support of `values` (|g| > 10⁻¹⁴ max |g|).
pub fn support_gradient(values: &[C64], field: &PhaseField) -> f64 {
    let m = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if m == 0.0 {
        return 0.0;
    }
    field.max_grad_where(|i| values[i].norm() > 1e-14 * m)
}

fn conjugated(g: &GridFunction, field: &PhaseField, tau: f64, domain: &Domain, tilde: bool) -> Result<GridFunction> {
    g.check(domain, "transform input")?;
    if !tau.is_finite() {
        return Err(Error::NonFinite("tau"));
    }
    if tau == 0.0 {
        return if tilde { dz_inverse(g, domain) } else { dbar_inverse(g, domain) };
    }
    if zero_input(g) {
        return Ok(GridFunction::zeros(domain));
    }
    domain.check_budget(tau, support_gradient(&g.values, field))?;
    // e^{τ(Φ − Φ̄)} = e^{2iτψ}
    let input: Vec<C64> =
        g.values.iter().zip(&field.phi).map(|(v, p)| v * C64::from_polar(1.0, 2.0 * tau * p.im)).collect();
    let t = if tilde {
        dbar_inverse_unchecked(&input.iter().map(|v| v.conj()).collect::<Vec<_>>(), domain).conj()
    } else {
        dbar_inverse_unchecked(&input, domain)
    };
    let values = t.values.iter().zip(&field.phi).map(|(v, p)| v * C64::from_polar(1.0, -2.0 * tau * p.im)).collect();
    let boundary = t.boundary.map(|b| {
        b.iter().zip(&field.phi_b).map(|(v, p)| v * C64::from_polar(1.0, -2.0 * tau * p.im)).collect()
    });
    Ok(GridFunction { values, boundary })
}

/// R_{Φ,τ} g = e^{τ(Φ̄−Φ)} ∂_z̄⁻¹(g e^{τ(Φ−Φ̄)}).
pub fn r_phi_tau(g: &GridFunction, field: &PhaseField, tau: f64, domain: &Domain) -> Result<GridFunction> {
    conjugated(g, field, tau, domain, false)
}

/// R̃_{Φ,τ} g = e^{τ(Φ̄−Φ)} ∂_z⁻¹(g e^{τ(Φ−Φ̄)}).
pub fn r_tilde_phi_tau(g: &GridFunction, field: &PhaseField, tau: f64, domain: &Domain) -> Result<GridFunction> {
    conjugated(g, field, tau, domain, true)
}

// ---------------------------------------------------------------------------
// Spectral derivatives.

/// (∂_z f, ∂_z̄ f) on the nodes.
pub fn dz_dzbar(f: &GridFunction, domain: &Domain) -> (GridFunction, GridFunction) {
    let ops = &domain.polar;
    let (dz, dzb) = ops.dz_dzbar_modes(&ops.to_modes(&f.values));
    (GridFunction::new(ops.from_modes(&dz)), GridFunction::new(ops.from_modes(&dzb)))
}

pub fn dz(f: &GridFunction, domain: &Domain) -> GridFunction {
    dz_dzbar(f, domain).0
}

pub fn dzbar(f: &GridFunction, domain: &Domain) -> GridFunction {
    dz_dzbar(f, domain).1
}

pub fn laplacian(f: &GridFunction, domain: &Domain) -> GridFunction {
    let ops = &domain.polar;
    GridFunction::new(ops.from_modes(&ops.laplacian_modes(&ops.to_modes(&f.values))))
}

/// Spectral interpolation of a grid field at a point of the closed disk.
pub fn interpolate(f: &GridFunction, domain: &Domain, z: C64) -> Result<C64> {
    if !domain.contains(z) {
        return Err(Error::TargetOutside(z));
    }
    let ops = &domain.polar;
    Ok(ops.eval_point(&ops.to_modes(&f.values), z))
}

/// Trace on the boundary nodes and its derivative ∂_θ, from the field's
/// own trace when present and otherwise by radial extrapolation.
pub fn boundary_trace(f: &GridFunction, domain: &Domain) -> (Vec<C64>, Vec<C64>) {
    let ops = &domain.polar;
    let bm = match &f.boundary {
        Some(b) => ops.boundary_to_modes(b),
        None => ops.modes_at_boundary(&ops.to_modes(&f.values)),
    };
    let nt = ops.nt;
    let dm: Vec<C64> =
        bm.iter().enumerate().map(|(k, c)| c * C64::new(0.0, crate::polar::mode_of(k, nt) as f64)).collect();
    let vals = match &f.boundary {
        Some(b) => b.clone(),
        None => ops.boundary_from_modes(&bm),
    };
    (vals, ops.boundary_from_modes(&dm))
}

/// Relative transport residuals: sup |∂_z̄(Rg) − τ(∂_zΦ)‾Rg − g| / sup |g|
/// (or the R̃ analogue with ∂_z and +τ∂_zΦ) over nodes at distance ≥ `margin`
/// from ∂Ω.
pub fn transport_residual(
    g: &GridFunction,
    rg: &GridFunction,
    field: &PhaseField,
    tau: f64,
    domain: &Domain,
    tilde: bool,
    margin: f64,
) -> f64 {
    let (dz, dzb) = dz_dzbar(rg, domain);
    let gmax = g.sup_norm().max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for i in 0..g.len() {
        if domain.grid.boundary_distance[i] < margin {
            continue;
        }
        let r = if tilde {
            dz.values[i] + tau * field.dphi[i] * rg.values[i] - g.values[i]
        } else {
            dzb.values[i] - tau * field.dphi[i].conj() * rg.values[i] - g.values[i]
        };
        worst = worst.max(r.norm());
    }
    worst / gmax
}

/// [`transport_residual`] with local finite differences in place of the
/// spectral derivatives: a sixth-order centred difference in θ and a 15-point
/// Fornberg stencil across rings in r, so the θ stencil dominates the error.
/// Only nodes in the support of g (|g| > 10⁻¹⁴ max |g|, the set the
/// oscillation budget is checked on) at distance ≥ `margin` from ∂Ω count.
pub fn transport_residual_fd(
    g: &GridFunction,
    rg: &GridFunction,
    field: &PhaseField,
    tau: f64,
    domain: &Domain,
    tilde: bool,
    margin: f64,
) -> f64 {
    const C: [f64; 3] = [3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];
    let radii = &domain.grid.radii;
    let nr = radii.len();
    let nt = domain.grid.thetas.len();
    let dth = 2.0 * PI / nt as f64;
    let pts = 15.min(nr);
    let gmax = g.sup_norm();
    if gmax == 0.0 {
        return 0.0;
    }
    let f = &rg.values;
    let rows = exec::map_range(nr, |i| {
        let lo = i.saturating_sub(pts / 2).min(nr - pts);
        let wr = crate::numeric::fornberg_weights(radii[i], &radii[lo..lo + pts], 1).swap_remove(1);
        let mut worst: f64 = 0.0;
        for j in 0..nt {
            let k = i * nt + j;
            if domain.grid.boundary_distance[k] < margin || g.values[k].norm() <= 1e-14 * gmax {
                continue;
            }
            let dr: C64 = wr.iter().enumerate().map(|(m, w)| f[(lo + m) * nt + j] * *w).sum();
            let dt = C
                .iter()
                .enumerate()
                .map(|(m, c)| (f[i * nt + (j + m + 1) % nt] - f[i * nt + (j + nt - m - 1) % nt]) * *c)
                .sum::<C64>()
                / dth;
            let e = C64::from_polar(1.0, domain.grid.thetas[j]);
            let ir = C64::new(0.0, 1.0 / radii[i]);
            let r = if tilde {
                0.5 * e.conj() * (dr - ir * dt) + tau * field.dphi[k] * f[k] - g.values[k]
            } else {
                0.5 * e * (dr + ir * dt) - tau * field.dphi[k].conj() * f[k] - g.values[k]
            };
            worst = worst.max(r.norm());
        }
        worst
    });
    rows.into_iter().fold(0.0, f64::max) / gmax
}

// ---------------------------------------------------------------------------
// Decay probes.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayMode {
    CollarSup,
    L2ROfZ,
    Refined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub mode: DecayMode,
    pub tau_values: Vec<f64>,
    /// sup over 𝒪_{ε/2} of |Rg| + |R̃g|.
    pub sup_norm_on_collar: Vec<f64>,
    /// collar_sup: ‖Rg‖ + ‖R̃g‖; l2_r_of_z: ‖R̃(r̄g)‖ + ‖R(rg)‖;
    /// refined: τ‖Rg + g/(τ(∂_zΦ)‾)‖ + τ‖R̃g − g/(τ∂_zΦ)‖.
    pub l2_norm: Vec<f64>,
    /// refined only: the two scaled residual sequences separately.
    pub refined_r: Vec<f64>,
    pub refined_r_tilde: Vec<f64>,
    /// Log–log slope of the mode's primary sequence (None when undefined).
    pub fitted_slope: Option<f64>,
    pub slope_ci: Option<f64>,
    pub strictly_decreasing: bool,
}

/// Least-squares slope of log y against log x, with its standard error.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if x.len() < 2 || y.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let se = if lx.len() > 2 {
        let rss: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some((slope, se))
}

/// Sweeps τ and reports the decay quantities of the chosen mode. `eps` is
/// the collar width ε (the collar used is 𝒪_{ε/2}).
pub fn decay_probe(
    g: &GridFunction,
    field: &PhaseField,
    tau_sweep: &[f64],
    mode: DecayMode,
    eps: f64,
    domain: &Domain,
) -> Result<DecayReport> {
    g.check(domain, "decay_probe input")?;
    if tau_sweep.len() < 4 {
        return Err(Error::InvalidInput("decay_probe needs at least 4 tau values".into()));
    }
    if tau_sweep.windows(2).any(|w| !(w[1] > w[0] && w[0] > 0.0)) {
        return Err(Error::InvalidInput("tau sweep must be positive and strictly increasing".into()));
    }
    let collar = o_epsilon_mask(domain, eps / 2.0)?;
    let gmax = g.sup_norm();
    if mode == DecayMode::Refined && gmax > 0.0 {
        let inner = o_epsilon_mask(domain, eps)?;
        let on_collar = inner.iter().map(|&i| g.values[i].norm()).fold(0.0, f64::max);
        if on_collar > 1e-10 * gmax {
            return Err(Error::Hypothesis(format!("g does not vanish on the collar (max {on_collar:.3e})")));
        }
        let ops = &domain.polar;
        let gm = ops.to_modes(&g.values);
        for cp in &field.phase.critical_points {
            let v = ops.eval_point(&gm, cp.z).norm();
            if v > 1e-6 * gmax {
                return Err(Error::Hypothesis(format!("g does not vanish at the critical point {} ({v:.3e})", cp.z)));
            }
        }
    }
    let mut rep = DecayReport {
        mode,
        tau_values: tau_sweep.to_vec(),
        sup_norm_on_collar: Vec::new(),
        l2_norm: Vec::new(),
        refined_r: Vec::new(),
        refined_r_tilde: Vec::new(),
        fitted_slope: None,
        slope_ci: None,
        strictly_decreasing: false,
    };
    let rpoly = field.phase.r();
    let rvals = rpoly.sample(&domain.grid.nodes);
    for &tau in tau_sweep {
        match mode {
            DecayMode::CollarSup => {
                let r = r_phi_tau(g, field, tau, domain)?;
                let rt = r_tilde_phi_tau(g, field, tau, domain)?;
                let sup = collar.iter().map(|&i| r.values[i].norm() + rt.values[i].norm()).fold(0.0, f64::max);
                rep.sup_norm_on_collar.push(sup);
                rep.l2_norm.push(r.l2_norm(domain) + rt.l2_norm(domain));
            }
            DecayMode::L2ROfZ => {
                let rbg = g.zip(&GridFunction::new(rvals.clone()), |a, r| a * r.conj());
                let rg = g.zip(&GridFunction::new(rvals.clone()), |a, r| a * r);
                let a = r_tilde_phi_tau(&rbg, field, tau, domain)?;
                let b = r_phi_tau(&rg, field, tau, domain)?;
                let sup = collar.iter().map(|&i| a.values[i].norm() + b.values[i].norm()).fold(0.0, f64::max);
                rep.sup_norm_on_collar.push(sup);
                rep.l2_norm.push(a.l2_norm(domain) + b.l2_norm(domain));
            }
            DecayMode::Refined => {
                let r = r_phi_tau(g, field, tau, domain)?;
                let rt = r_tilde_phi_tau(g, field, tau, domain)?;
                let quotient = |i: usize, conj: bool| -> C64 {
                    let d = if conj { field.dphi[i].conj() } else { field.dphi[i] };
                    if g.values[i] == ZERO {
                        ZERO
                    } else {
                        g.values[i] / (tau * d)
                    }
                };
                let e1: Vec<C64> = (0..g.len()).map(|i| r.values[i] + quotient(i, true)).collect();
                let e2: Vec<C64> = (0..g.len()).map(|i| rt.values[i] - quotient(i, false)).collect();
                let n1 = tau * GridFunction::new(e1).l2_norm(domain);
                let n2 = tau * GridFunction::new(e2).l2_norm(domain);
                let sup = collar.iter().map(|&i| r.values[i].norm() + rt.values[i].norm()).fold(0.0, f64::max);
                rep.sup_norm_on_collar.push(sup);
                rep.refined_r.push(n1);
                rep.refined_r_tilde.push(n2);
                rep.l2_norm.push(n1 + n2);
            }
        }
    }
    let primary = match mode {
        DecayMode::CollarSup => &rep.sup_norm_on_collar,
        _ => &rep.l2_norm,
    };
    if let Some((s, se)) = loglog_slope(tau_sweep, primary) {
        rep.fitted_slope = Some(s);
        rep.slope_ci = Some(se);
    }
    rep.strictly_decreasing = primary.windows(2).all(|w| w[1] < w[0]);
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Energy identities.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyCase {
    /// f̃ = 2∂_zṽ − τ∂_zΦ ṽ.
    DzCase,
    /// f̃ = 2∂_z̄ṽ − τ(∂_zΦ)‾ ṽ.
    DbarCase,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyTerms {
    pub grad_x1: f64,
    pub grad_x2: f64,
    pub normal_term: f64,
    pub tangential_term: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// Assembles both sides of the energy identity for the first-order operator
/// selected by `case` and returns the relative gap |LHS − ‖f̃‖²| / ‖f̃‖².
pub fn energy_identity_check(v: &GridFunction, field: &PhaseField, tau: f64, case: EnergyCase, domain: &Domain) -> Result<f64> {
    Ok(energy_identity_terms(v, field, tau, case, domain)?.gap)
}

pub fn energy_identity_terms(
    v: &GridFunction,
    field: &PhaseField,
    tau: f64,
    case: EnergyCase,
    domain: &Domain,
) -> Result<EnergyTerms> {
    v.check(domain, "energy identity input")?;
    let (dzv, dzbv) = dz_dzbar(v, domain);
    let n = v.len();
    // W = e^{∓iτψ}ṽ, so |∂_j W| = |∂_j ṽ ∓ iτ(∂_jψ)ṽ| with ∂₁ψ = Im Φ', ∂₂ψ = Re Φ'.
    let s = match case {
        EnergyCase::DzCase => -1.0,
        EnergyCase::DbarCase => 1.0,
    };
    let i = C64::new(0.0, 1.0);
    let w = &domain.grid.weights;
    let mut p1 = Vec::with_capacity(n);
    let mut p2 = Vec::with_capacity(n);
    let mut pf = Vec::with_capacity(n);
    for k in 0..n {
        let d1 = dzv.values[k] + dzbv.values[k];
        let d2 = i * (dzv.values[k] - dzbv.values[k]);
        let dp = field.dphi[k];
        let vk = v.values[k];
        let w1 = d1 + s * i * tau * dp.im * vk;
        let w2 = d2 + s * i * tau * dp.re * vk;
        p1.push(w1.norm_sqr() * w[k]);
        p2.push(w2.norm_sqr() * w[k]);
        let f = match case {
            EnergyCase::DzCase => 2.0 * dzv.values[k] - tau * dp * vk,
            EnergyCase::DbarCase => 2.0 * dzbv.values[k] - tau * dp.conj() * vk,
        };
        pf.push(f.norm_sqr() * w[k]);
    }
    let grad_x1 = pairwise_sum(&p1);
    let grad_x2 = pairwise_sum(&p2);
    let rhs = pairwise_sum(&pf);
    let (vb, dth) = boundary_trace(v, domain);
    let r = domain.radius();
    let mut pn = Vec::new();
    let mut pt = Vec::new();
    for (k, p) in domain.boundary.iter().enumerate() {
        let dp = field.dphi_b[k];
        // (∇φ, ν) with ∇φ = (Re Φ', −Im Φ')
        let gn = dp.re * p.normal[0] - dp.im * p.normal[1];
        pn.push(gn * vb[k].norm_sqr() * p.weight);
        // ∂_τ = ν₂∂₁ − ν₁∂₂ = −(1/R)∂_θ on the circle
        let dt = -dth[k] / r;
        pt.push((i * dt * vb[k].conj()).re * p.weight);
    }
    let normal_term = -tau * pairwise_sum(&pn);
    let tangential_term = -s * pairwise_sum(&pt);
    let lhs = grad_x1 + grad_x2 + normal_term + tangential_term;
    let gap = if rhs == 0.0 && lhs == 0.0 { 0.0 } else { (lhs - rhs).abs() / rhs.max(1e-300) };
    Ok(EnergyTerms { grad_x1, grad_x2, normal_term, tangential_term, lhs, rhs, gap })
}
