//! Configuration-driven runners. Each `cmd_*` reads an [`ExperimentConfig`],
//! runs one pipeline, writes its artifacts under `output_dir` and returns a
//! [`RunReport`] (also written as `<command>.json`). Reports hold no timings
//! or other run-dependent data, so identical configs give identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{cgo_options_for, cgo_tau_limit, hessian_data, identity_terms, recover_pointwise, recovery_map};
use crate::analysis::{IdentityBreakdown, RecoveryOptions};
use crate::cgo::{build_cgo, CgoOptions};
use crate::error::{Error, Result};
use crate::expr::ExprSum;
use crate::geometry::{build_domain, Domain, DomainSpec};
use crate::holo::{build_phase, validate_phase, HolomorphicFunction, PhaseField, PhaseFunction, PhaseOptions};
use crate::pde::{carleman_constant, carleman_estimate_check, random_h10_samples, Potential};
use crate::transforms::{
    dbar_inverse, dbar_inverse_direct, dz_inverse, r_phi_tau, r_tilde_phi_tau, support_gradient, transport_residual_fd,
    GridFunction,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Interior error of the Cauchy-transform oracles.
    pub transform: f64,
    /// Relative finite-difference transport residual.
    pub transport: f64,
    /// Relative recovery error at probes where the truth is at least 0.2·max.
    pub recovery: f64,
    /// Bound on |c| where the truth is below 0.01·max.
    pub off_support: f64,
    pub max_condition: f64,
    /// Scale invariance of the Carleman ratios.
    pub carleman_scale: f64,
    /// Allowed max/min of the Carleman constant across τ.
    pub carleman_spread: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            transform: 1e-3,
            transport: 1e-2,
            recovery: 0.15,
            off_support: 0.1,
            max_condition: 1e6,
            carleman_scale: 1e-10,
            carleman_spread: 3.0,
        }
    }
}

/// A rectangular probe lattice: `n[0]` points across `x`, `n[1]` across `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeGrid {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub n: [usize; 2],
}

impl ProbeGrid {
    pub fn points(&self) -> Vec<C64> {
        let lin = |r: [f64; 2], n: usize, k: usize| if n == 1 { r[0] } else { r[0] + (r[1] - r[0]) * k as f64 / (n - 1) as f64 };
        let mut out = Vec::with_capacity(self.n[0] * self.n[1]);
        for j in 0..self.n[1] {
            for i in 0..self.n[0] {
                out.push(C64::new(lin(self.x, self.n[0], i), lin(self.y, self.n[1], j)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub domain: DomainSpec,
    pub xhat: [f64; 2],
    pub phase: PhaseOptions,
    pub cgo: CgoOptions,
    pub q1: ExprSum,
    pub q2: ExprSum,
    pub tau_sweep: Vec<f64>,
    pub probes: Option<ProbeGrid>,
    pub tolerances: Tolerances,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub carleman_samples: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            domain: DomainSpec::default(),
            xhat: [0.0, 0.6],
            phase: PhaseOptions::default(),
            cgo: CgoOptions::default(),
            q1: ExprSum::default(),
            q2: ExprSum::default(),
            tau_sweep: vec![10.0, 20.0, 40.0, 80.0],
            probes: None,
            tolerances: Tolerances::default(),
            output_dir: PathBuf::from("out"),
            seed: 7,
            carleman_samples: 20,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.q1.validate().map_err(|e| Error::Config(format!("q1: {e}")))?;
        self.q2.validate().map_err(|e| Error::Config(format!("q2: {e}")))?;
        if self.tau_sweep.is_empty() || self.tau_sweep.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::Config("tau_sweep must be a nonempty list of positive numbers".into()));
        }
        if self.tau_sweep.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("tau_sweep must be strictly increasing".into()));
        }
        let xh = self.xhat();
        if !(xh.norm() < self.domain.radius) {
            return Err(Error::Config(format!("xhat {xh} must lie inside the disk")));
        }
        if let Some(p) = &self.probes {
            if p.n[0] == 0 || p.n[1] == 0 {
                return Err(Error::Config("probe grid needs at least one point per axis".into()));
            }
            if let Some(z) = p.points().into_iter().find(|z| !(z.norm() < self.domain.radius)) {
                return Err(Error::Config(format!("probe {z} lies outside the disk")));
            }
        }
        if self.carleman_samples == 0 {
            return Err(Error::Config("carleman_samples must be positive".into()));
        }
        Ok(())
    }

    pub fn xhat(&self) -> C64 {
        C64::new(self.xhat[0], self.xhat[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    fn below(name: impl Into<String>, value: f64, limit: f64) -> Check {
        Check { name: name.into(), value, limit, passed: value < limit }
    }

    fn flag(name: impl Into<String>, ok: bool) -> Check {
        Check { name: name.into(), value: if ok { 1.0 } else { 0.0 }, limit: 1.0, passed: ok }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub config: ExperimentConfig,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub artifacts: Vec<PathBuf>,
    pub data: Value,
}

impl RunReport {
    fn new(command: &str, cfg: &ExperimentConfig, checks: Vec<Check>, data: Value) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        RunReport { command: command.into(), config: cfg.clone(), checks, passed, artifacts: Vec::new(), data }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `<output_dir>/<command>.json` and records it as an artifact.
    fn finish(mut self) -> Result<Self> {
        let path = self.config.output_dir.join(format!("{}.json", self.command));
        self.artifacts.push(path.clone());
        fs::write(&path, self.to_json()?)?;
        Ok(self)
    }
}

fn prepare(cfg: &ExperimentConfig) -> Result<Domain> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    build_domain(&cfg.domain)
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

fn interior_error(f: &GridFunction, domain: &Domain, exact: impl Fn(C64) -> C64) -> f64 {
    domain.grid.nodes.iter().zip(&f.values).map(|(z, v)| (exact(*z) - v).norm()).fold(0.0, f64::max)
}

fn quadratic_field(domain: &Domain, center: C64) -> Result<PhaseField> {
    let phase = PhaseFunction::from_holomorphic(HolomorphicFunction::quadratic(center), domain)?;
    Ok(PhaseField::new(&phase, domain))
}

/// Cauchy-transform oracles, the direct-versus-modal cross-check, and finite
/// difference transport residuals for Φ = (z − x̂)²/2 and a Gaussian of
/// width 0.12 at x̂.
pub fn cmd_transforms_selftest(cfg: &ExperimentConfig) -> Result<RunReport> {
    let d = prepare(cfg)?;
    let tol = &cfg.tolerances;
    let one = GridFunction::from_fn(&d, |_| C64::new(1.0, 0.0));
    let e_dbar = interior_error(&dbar_inverse(&one, &d)?, &d, |z| z.conj());
    let e_dz = interior_error(&dz_inverse(&one, &d)?, &d, |z| z);
    let xh = cfg.xhat();
    let g = GridFunction::from_fn(&d, |z| C64::new((-(z - xh).norm_sqr() / 0.0144).exp(), 0.0));
    let fast = dbar_inverse(&g, &d)?;
    let targets: Vec<usize> = (0..d.n_nodes()).step_by((d.n_nodes() / 64).max(1)).collect();
    let direct = dbar_inverse_direct(&g, &d, &targets)?;
    let e_routes = targets.iter().zip(&direct).map(|(&i, v)| (fast.values[i] - v).norm()).fold(0.0, f64::max);
    let mut checks = vec![
        Check::below("dbar_inverse(1) vs conj(z)", e_dbar, tol.transform),
        Check::below("dz_inverse(1) vs z", e_dz, tol.transform),
        Check::below("modal vs direct quadrature", e_routes, tol.transform),
    ];
    let field = quadratic_field(&d, xh)?;
    let budget = d.tau_budget(support_gradient(&g.values, &field));
    let mut rows = Vec::new();
    for &tau in &cfg.tau_sweep {
        if tau > budget {
            rows.push(json!({ "tau": tau, "skipped": format!("beyond the oscillation budget {budget:.3}") }));
            continue;
        }
        let r = transport_residual_fd(&g, &r_phi_tau(&g, &field, tau, &d)?, &field, tau, &d, false, 0.0);
        let rt = transport_residual_fd(&g, &r_tilde_phi_tau(&g, &field, tau, &d)?, &field, tau, &d, true, 0.0);
        checks.push(Check::below(format!("transport residual R, tau {tau}"), r, tol.transport));
        checks.push(Check::below(format!("transport residual R~, tau {tau}"), rt, tol.transport));
        rows.push(json!({ "tau": tau, "r_phi_tau": r, "r_tilde_phi_tau": rt }));
    }
    let data = json!({
        "dbar_inverse_one_error": e_dbar,
        "dz_inverse_one_error": e_dz,
        "route_difference": e_routes,
        "tau_budget": budget,
        "transport": rows,
    });
    RunReport::new("transforms_selftest", cfg, checks, data).finish()
}

struct Setup {
    domain: Domain,
    phase: PhaseFunction,
    field: PhaseField,
    amplitude: HolomorphicFunction,
    limit: f64,
}

fn phase_setup(cfg: &ExperimentConfig) -> Result<Setup> {
    let domain = prepare(cfg)?;
    let phase = build_phase(&domain, cfg.xhat(), 0.0, 0.0, &cfg.phase)?;
    let field = PhaseField::new(&phase, &domain);
    let amplitude = crate::holo::schwarz_amplitude(&domain, cfg.xhat())?.a;
    let limit = cgo_tau_limit(&field, &domain);
    Ok(Setup { domain, phase, field, amplitude, limit })
}

/// Builds and validates the phase at x̂ and reports the τ range it admits.
pub fn cmd_phase_build(cfg: &ExperimentConfig) -> Result<RunReport> {
    let s = phase_setup(cfg)?;
    let report = validate_phase(&s.phase, &s.domain, cfg.xhat(), cfg.phase.gamma0_tol);
    let hess = hessian_data(&s.phase, cfg.xhat())?;
    let checks = vec![Check::flag("phase validation", report.passed)];
    let data = json!({
        "coefficients": s.phase.phi.coefficients.iter().map(|c| [c.re, c.im]).collect::<Vec<_>>(),
        "validation": report,
        "hessian": hess,
        "max_phase_gradient": s.field.max_grad_where(|_| true),
        "cgo_tau_limit": s.limit,
    });
    RunReport::new("phase_build", cfg, checks, data).finish()
}

fn potentials(cfg: &ExperimentConfig, d: &Domain) -> Result<(Potential, Potential)> {
    Ok((Potential::from_expr(&cfg.q1, d)?, Potential::from_expr(&cfg.q2, d)?))
}

fn sweep_within(cfg: &ExperimentConfig, limit: f64) -> (Vec<f64>, Vec<Value>) {
    let mut used = Vec::new();
    let mut skipped = Vec::new();
    for &t in &cfg.tau_sweep {
        if t <= limit {
            used.push(t);
        } else {
            skipped.push(json!({ "tau": t, "reason": format!("beyond the CGO tau limit {limit:.3}") }));
        }
    }
    (used, skipped)
}

/// Builds u₁ (sign +1, potential q1) for each τ of the sweep the grid admits
/// and reports the per-layer ledgers.
pub fn cmd_cgo_build(cfg: &ExperimentConfig) -> Result<RunReport> {
    let s = phase_setup(cfg)?;
    let (q1, _) = potentials(cfg, &s.domain)?;
    let opts = cgo_options_for(&s.domain, cfg.xhat(), &RecoveryOptions { cgo: cfg.cgo, ..Default::default() });
    let (used, skipped) = sweep_within(cfg, s.limit);
    let mut checks = Vec::new();
    let mut ledgers = Vec::new();
    let mut scaled_u12 = Vec::new();
    for &tau in &used {
        let u = build_cgo(&q1, &s.field, &s.amplitude, tau, 1, &s.domain, &opts)?;
        checks.push(Check::flag(format!("PDE residual, tau {tau}"), u.ledger.pde_ok));
        checks.push(Check::flag(format!("Gamma0 trace, tau {tau}"), u.ledger.trace_ok));
        scaled_u12.push(tau * u.ledger.norms.remainder);
        ledgers.push(u.ledger);
    }
    if used.len() >= 2 {
        checks.push(Check::flag("tau*||u12|| decreasing", strictly_decreasing(&scaled_u12)));
    }
    let data = json!({ "tau_used": used, "skipped": skipped, "ledgers": ledgers, "tau_u12": scaled_u12 });
    RunReport::new("cgo_build", cfg, checks, data).finish()
}

/// Evaluates every identity term for each admissible τ. With q1 = q2 all
/// terms must vanish; otherwise τ·gap and τ|I₂|, τ|I₃|, τ|J₂|, τ|J₃| must
/// decrease along the sweep.
pub fn cmd_identity(cfg: &ExperimentConfig) -> Result<RunReport> {
    let s = phase_setup(cfg)?;
    let (q1, q2) = potentials(cfg, &s.domain)?;
    let q = Potential::sampled(q1.values.iter().zip(&q2.values).map(|(a, b)| a - b).collect(), &s.domain)?;
    let opts = cgo_options_for(&s.domain, cfg.xhat(), &RecoveryOptions { cgo: cfg.cgo, ..Default::default() });
    let (used, skipped) = sweep_within(cfg, s.limit);
    let mut rows: Vec<IdentityBreakdown> = Vec::new();
    for &tau in &used {
        let u = build_cgo(&q1, &s.field, &s.amplitude, tau, 1, &s.domain, &opts)?;
        let v = build_cgo(&q2, &s.field, &s.amplitude, tau, -1, &s.domain, &opts)?;
        rows.push(identity_terms(&q, &u, &v, &s.field, &s.domain)?);
    }
    let mut checks = Vec::new();
    if q.is_zero() {
        let worst = rows
            .iter()
            .flat_map(|b| {
                [b.direct, b.t_aa, b.stationary_sum, b.corrector_cross, b.corrector_integral, b.minus_integrals]
                    .into_iter()
                    .chain([b.plus_integrals, b.i2, b.i3, b.j2, b.j3, b.expansion_total])
            })
            .map(|v| v.norm())
            .fold(0.0, f64::max);
        checks.push(Check::below("all terms with q1 = q2", worst, 1e-10));
    } else {
        let seq = |f: &dyn Fn(&IdentityBreakdown) -> f64| rows.iter().map(|b| b.tau * f(b)).collect::<Vec<f64>>();
        checks.push(Check::flag("tau*gap decreasing", strictly_decreasing(&seq(&|b| b.gap))));
        checks.push(Check::flag("tau*|I2| decreasing", strictly_decreasing(&seq(&|b| b.i2.norm()))));
        checks.push(Check::flag("tau*|I3| decreasing", strictly_decreasing(&seq(&|b| b.i3.norm()))));
        checks.push(Check::flag("tau*|J2| decreasing", strictly_decreasing(&seq(&|b| b.j2.norm()))));
        checks.push(Check::flag("tau*|J3| decreasing", strictly_decreasing(&seq(&|b| b.j3.norm()))));
    }
    let data = json!({ "tau_used": used, "skipped": skipped, "breakdowns": rows });
    RunReport::new("identity", cfg, checks, data).finish()
}

/// Pointwise recovery at x̂, or over the probe grid when one is configured
/// (then also written to `recovery.csv`).
pub fn cmd_recover(cfg: &ExperimentConfig) -> Result<RunReport> {
    let d = prepare(cfg)?;
    let (q1, q2) = potentials(cfg, &d)?;
    let tol = &cfg.tolerances;
    let opts = RecoveryOptions { phase: cfg.phase, cgo: cfg.cgo, max_condition: tol.max_condition, ..Default::default() };
    let qmax = q1.values.iter().zip(&q2.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let mut checks = Vec::new();
    let mut artifacts = Vec::new();
    let data;
    match &cfg.probes {
        None => {
            let r = recover_pointwise(&q1, &q2, &d, cfg.xhat(), &cfg.tau_sweep, &opts)?;
            if let (Some(t), Some(e)) = (r.truth, r.relative_error) {
                if t.norm() >= 0.2 * qmax {
                    checks.push(Check::below("relative error at xhat", e, tol.recovery));
                }
            }
            data = json!({ "result": r });
        }
        Some(grid) => {
            let map = recovery_map(&q1, &q2, &d, &grid.points(), &cfg.tau_sweep, &opts);
            let csv = cfg.output_dir.join("recovery.csv");
            map.write_csv(&csv)?;
            artifacts.push(csv);
            for r in map.succeeded() {
                let Some(t) = r.truth else { continue };
                if t.norm() >= 0.2 * qmax {
                    checks.push(Check::below(format!("relative error at {}", r.xhat), r.relative_error.unwrap_or(f64::INFINITY), tol.recovery));
                } else if t.norm() < 0.01 * qmax {
                    checks.push(Check::below(format!("off-support |c| at {}", r.xhat), r.fitted.norm(), tol.off_support * qmax.max(f64::MIN_POSITIVE)));
                }
            }
            let failed = map.probes.iter().filter(|p| p.result.is_none()).count();
            data = json!({ "probes": map.probes, "failed": failed });
        }
    }
    let mut report = RunReport::new("recover", cfg, checks, data);
    report.artifacts = artifacts;
    report.finish()
}

/// Carleman estimate over seeded random H¹₀ samples with Φ = (z − x̂)²/2.
pub fn cmd_carleman(cfg: &ExperimentConfig) -> Result<RunReport> {
    let d = prepare(cfg)?;
    let tol = &cfg.tolerances;
    let field = quadratic_field(&d, cfg.xhat())?;
    let samples = random_h10_samples(&d, cfg.carleman_samples, cfg.seed);
    let reports =
        samples.iter().map(|u| carleman_estimate_check(u, &field, &cfg.tau_sweep, &d)).collect::<Result<Vec<_>>>()?;
    let constant = carleman_constant(&reports)?;
    // u ↦ λu leaves every ratio unchanged
    let scaled = carleman_estimate_check(&samples[0].scale(C64::new(37.5, 0.0)), &field, &cfg.tau_sweep, &d)?;
    let scale_gap = scaled.ratios.iter().zip(&reports[0].ratios).map(|(a, b)| (a - b).abs() / b.abs()).fold(0.0, f64::max);
    let checks = vec![
        Check::below("constant spread across tau", constant.spread, tol.carleman_spread),
        Check::below("scale invariance", scale_gap, tol.carleman_scale),
    ];
    let data = json!({ "constant": constant, "reports": reports, "scale_invariance_gap": scale_gap });
    RunReport::new("carleman", cfg, checks, data).finish()
}

pub const COMMANDS: [&str; 6] = ["transforms-selftest", "phase-build", "cgo-build", "identity", "recover", "carleman"];

/// Dispatches by command name (as listed in [`COMMANDS`]).
pub fn run_command(name: &str, cfg: &ExperimentConfig) -> Result<RunReport> {
    match name {
        "transforms-selftest" => cmd_transforms_selftest(cfg),
        "phase-build" => cmd_phase_build(cfg),
        "cgo-build" => cmd_cgo_build(cfg),
        "identity" => cmd_identity(cfg),
        "recover" => cmd_recover(cfg),
        "carleman" => cmd_carleman(cfg),
        other => Err(Error::Config(format!("unknown command {other:?}; expected one of {}", COMMANDS.join(", ")))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probe_grid_is_row_major_and_inclusive() {
        let g = ProbeGrid { x: [-1.0, 1.0], y: [0.0, 0.5], n: [3, 2] };
        let p = g.points();
        assert_eq!(p.len(), 6);
        assert_eq!(p[0], C64::new(-1.0, 0.0));
        assert_eq!(p[2], C64::new(1.0, 0.0));
        assert_eq!(p[5], C64::new(1.0, 0.5));
    }

    #[test]
    fn config_rejects_bad_sweeps_and_targets() {
        let mut c = ExperimentConfig::default();
        c.tau_sweep = vec![10.0, 5.0];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = ExperimentConfig::default();
        c.xhat = [1.0, 0.5];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        assert!(ExperimentConfig::from_json("{\"tau_sweep\": []}").is_err());
        assert!(ExperimentConfig::from_json("{}").is_ok());
    }
}
