//! Acceptance suite: one check per criterion, each printed as a PASS/FAIL
//! line. Every tolerance is pinned below. Criteria listed in
//! `EXPECTED_FAILURES` are known not to be met by this implementation (see
//! the README); the run fails if the set of failing criteria differs from
//! that list in either direction.
//!
//! `cargo test --test acceptance -- 3 7` runs a subset.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use cgolab::analysis::*;
use cgolab::cgo::{build_cgo, CGOSolution};
use cgolab::experiment::{cmd_identity, ExperimentConfig};
use cgolab::expr::{Expr, ExprSum};
use cgolab::geometry::{build_domain, Domain, DomainSpec};
use cgolab::holo::*;
use cgolab::pde::{carleman_constant, carleman_estimate_check, random_h10_samples, Potential};
use cgolab::transforms::*;
use cgolab::C64;

const EXPECTED_FAILURES: &[u32] = &[7, 8, 9, 10];

// criterion 1
const CAUCHY_MAX_ERR: f64 = 1e-3;
const CAUCHY_MAX_SECS: f64 = 60.0;
// criterion 2
const TRANSPORT_MAX_RESIDUAL: f64 = 1e-2;
const TRANSPORT_REFINE_FACTOR: f64 = 0.5;
// criterion 3
const PLAIN_SLOPE: [f64; 2] = [-1.3, -0.9];
const VANISHING_SLOPE_MAX: f64 = -1.8;
// criterion 4
const ENERGY_MAX_GAP: f64 = 1e-3;
// criterion 5
const CGO_PDE_FACTOR: f64 = 1e-1;
const CGO_TRACE_FACTOR: f64 = 1e-6;
const CGO_LAYER_FACTOR: f64 = 10.0;
// criterion 6
const STATIONARY_RATIO_TOL: f64 = 0.05;
const BEAT_TOL: f64 = 0.05;
// criterion 7
const IDENTITY_ZERO_TOL: f64 = 1e-10;
// criterion 8
const RECOVERY_REL_TOL: f64 = 0.15;
const OFF_SUPPORT_MAX: f64 = 0.1;
const OFF_SUPPORT_TRUTH: f64 = 0.02;
const MAP_MAX_SECS: f64 = 1800.0;
// criterion 9
const CR_FINAL_MISFIT: f64 = 1e-4;
// criterion 10
const CARLEMAN_SPREAD_MAX: f64 = 3.0;
const CARLEMAN_SCALE_TOL: f64 = 1e-10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn disk(nr: usize, nt: usize) -> Domain {
    build_domain(&DomainSpec::unit_disk(nr, nt, nt, [0.0, PI])).unwrap()
}

fn quadratic_field(d: &Domain) -> (PhaseFunction, PhaseField) {
    let p = PhaseFunction::from_holomorphic(HolomorphicFunction::quadratic(c(0.0, 0.0)), d).unwrap();
    let f = PhaseField::new(&p, d);
    (p, f)
}

fn gaussian(x: f64, y: f64, width: f64, height: f64) -> ExprSum {
    ExprSum(vec![Expr::GaussianBump { center: [x, y], width, height }])
}

/// exp(1 − 1/(1 − |z − z₀|²/s²)) inside the disk of radius s, zero outside.
fn compact_bump(z: C64, z0: C64, s: f64) -> f64 {
    let x = (z - z0).norm_sqr() / (s * s);
    if x >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - x)).exp()
    }
}

fn decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

fn fmt(xs: &[f64]) -> String {
    let v: Vec<String> = xs.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", v.join(", "))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let d = build_domain(&DomainSpec::default()).unwrap();
    let one = GridFunction::from_fn(&d, |_| c(1.0, 0.0));
    let tb = dbar_inverse(&one, &d).unwrap();
    let tz = dz_inverse(&one, &d).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let err = |f: &GridFunction, exact: &dyn Fn(C64) -> C64| {
        d.grid.nodes.iter().zip(&f.values).map(|(z, v)| (exact(*z) - v).norm()).fold(0.0, f64::max)
    };
    let eb = err(&tb, &|z| z.conj());
    let ez = err(&tz, &|z| z);
    Outcome {
        pass: eb < CAUCHY_MAX_ERR && ez < CAUCHY_MAX_ERR && secs < CAUCHY_MAX_SECS,
        detail: format!("dbar err {eb:.2e}, dz err {ez:.2e}, {secs:.2} s"),
    }
}

fn criterion_2() -> Outcome {
    let taus = [10.0, 20.0, 40.0];
    let residuals = |nt: usize| -> Vec<[f64; 2]> {
        let d = build_domain(&DomainSpec::unit_disk(64, nt, 256, [0.0, PI])).unwrap();
        let (_, f) = quadratic_field(&d);
        let g = GridFunction::from_fn(&d, |z| c((-z.norm_sqr() / 0.0144).exp(), 0.0));
        taus.iter()
            .map(|&t| {
                let r = r_phi_tau(&g, &f, t, &d).unwrap();
                let rt = r_tilde_phi_tau(&g, &f, t, &d).unwrap();
                [
                    transport_residual_fd(&g, &r, &f, t, &d, false, 0.0),
                    transport_residual_fd(&g, &rt, &f, t, &d, true, 0.0),
                ]
            })
            .collect()
    };
    let base = residuals(256);
    let fine = residuals(512);
    let small = base.iter().flatten().all(|&r| r < TRANSPORT_MAX_RESIDUAL);
    let halves = base.iter().flatten().zip(fine.iter().flatten()).all(|(b, f)| *f <= TRANSPORT_REFINE_FACTOR * b);
    let worst_base = base.iter().flatten().cloned().fold(0.0, f64::max);
    let worst_ratio = base.iter().flatten().zip(fine.iter().flatten()).map(|(b, f)| f / b).fold(0.0, f64::max);
    Outcome {
        pass: small && halves,
        detail: format!("max residual {worst_base:.2e} at tau <= 40, max refined/base ratio {worst_ratio:.3}"),
    }
}

fn criterion_3() -> Outcome {
    let d = disk(512, 2048);
    let (_, f) = quadratic_field(&d);
    let eps = 0.15;
    let plain = GridFunction::from_fn(&d, |z| c(compact_bump(z, c(0.0, 0.0), 0.8), 0.0));
    let vanishing = GridFunction::from_fn(&d, |z| z * compact_bump(z, c(0.0, 0.0), 0.8));
    let p = decay_probe(&plain, &f, &[10.0, 20.0, 40.0, 80.0], DecayMode::CollarSup, eps, &d).unwrap();
    let v = decay_probe(&vanishing, &f, &[10.0, 20.0, 40.0, 80.0, 160.0], DecayMode::CollarSup, eps, &d).unwrap();
    let r = decay_probe(&vanishing, &f, &[10.0, 20.0, 40.0, 80.0], DecayMode::Refined, eps, &d).unwrap();
    let sp = p.fitted_slope.unwrap_or(f64::NAN);
    let sv = v.fitted_slope.unwrap_or(f64::NAN);
    let refined_ok = decreasing(&r.refined_r) && decreasing(&r.refined_r_tilde);
    Outcome {
        pass: (PLAIN_SLOPE[0]..=PLAIN_SLOPE[1]).contains(&sp) && sv <= VANISHING_SLOPE_MAX && refined_ok,
        detail: format!(
            "plain slope {sp:.3}, vanishing slope {sv:.3}, tau*refined R {}, R~ {}",
            fmt(&r.refined_r),
            fmt(&r.refined_r_tilde)
        ),
    }
}

fn criterion_4() -> Outcome {
    let d = build_domain(&DomainSpec::default()).unwrap();
    let (_, f) = quadratic_field(&d);
    let v = GridFunction::from_fn(&d, |z| z.exp());
    let mut worst: f64 = 0.0;
    for case in [EnergyCase::DzCase, EnergyCase::DbarCase] {
        for tau in [3.0, 5.0, 10.0] {
            worst = worst.max(energy_identity_terms(&v, &f, tau, case, &d).unwrap().gap);
        }
    }
    Outcome { pass: worst < ENERGY_MAX_GAP, detail: format!("max relative gap {worst:.2e}") }
}

struct Builder {
    d: Domain,
    field: PhaseField,
    a: HolomorphicFunction,
    opts: cgolab::cgo::CgoOptions,
}

impl Builder {
    fn new(nr: usize, nt: usize, xhat: C64) -> Builder {
        let d = disk(nr, nt);
        let phase = build_phase(&d, xhat, 0.0, 0.0, &PhaseOptions::default()).unwrap();
        let field = PhaseField::new(&phase, &d);
        let a = schwarz_amplitude(&d, xhat).unwrap().a;
        let opts = cgo_options_for(&d, xhat, &RecoveryOptions::default());
        Builder { d, field, a, opts }
    }

    fn build(&self, q: &Potential, tau: f64, sign: i8) -> CGOSolution {
        build_cgo(q, &self.field, &self.a, tau, sign, &self.d, &self.opts).unwrap()
    }
}

fn criterion_5() -> Outcome {
    let b = Builder::new(256, 1024, c(0.0, 0.5));
    let q1 = Potential::from_expr(&gaussian(0.3, 0.1, 0.2, 1.0), &b.d).unwrap();
    let q2 = Potential::from_expr(&gaussian(-0.3, 0.1, 0.2, 0.7), &b.d).unwrap();
    let taus = [10.0, 20.0, 40.0, 80.0];
    let mut ok = true;
    let mut notes = Vec::new();
    for (q, sign, name) in [(&q1, 1i8, "u"), (&q2, -1i8, "v")] {
        let mut scaled = Vec::new();
        for &tau in &taus {
            let s = b.build(q, tau, sign);
            let l = &s.ledger;
            let pde = l.total_pde_residual <= CGO_PDE_FACTOR * l.norms.total * l.max_q;
            let trace = l.gamma0_trace <= CGO_TRACE_FACTOR * l.total_sup;
            if !(pde && trace) {
                ok = false;
                notes.push(format!("{name} tau {tau}: pde {pde} trace {trace}"));
            }
            if tau == 40.0 {
                let n = &l.norms;
                let order = n.leading > CGO_LAYER_FACTOR * n.first && n.first > n.remainder;
                ok &= order;
                notes.push(format!("{name} tau 40 norms {:.3e} > 10*{:.3e} > {:.3e}: {order}", n.leading, n.first, n.remainder));
            }
            scaled.push(tau * l.norms.remainder);
        }
        ok &= decreasing(&scaled);
        notes.push(format!("{name} tau*|u12| {}", fmt(&scaled)));
    }
    Outcome { pass: ok, detail: notes.join("; ") }
}

fn criterion_6() -> Outcome {
    // Gaussian h, Φ = z²/2, largest τ the default grid admits
    let d = build_domain(&DomainSpec::default()).unwrap();
    let (p, f) = quadratic_field(&d);
    let h = GridFunction::from_fn(&d, |z| c((-z.norm_sqr() / (0.35 * 0.35)).exp(), 0.0));
    let tau = d.tau_budget(support_gradient(&h.values, &f));
    let ratio = oscillatory_integral(&h, &f, tau, &d).unwrap().re / stationary_phase_leading(&h, &p, tau, &d).unwrap().re;
    let single_ok = (ratio - 1.0).abs() <= STATIONARY_RATIO_TOL;

    // two critical points ±z₁ of Φ = z³/3 − z₁²z + 2z₁³/3, with Im Φ differing
    // between them, so the leading term beats as cos(2τ Im Φ(−z₁)) varies
    let d = disk(128, 512);
    let z1 = C64::from_polar(-0.4, -PI / 6.0);
    let phi = HolomorphicFunction::new(vec![z1.powu(3) * (2.0 / 3.0), -z1 * z1, c(0.0, 0.0), c(1.0 / 3.0, 0.0)]);
    let p2 = PhaseFunction::from_holomorphic(phi, &d).unwrap();
    let f2 = PhaseField::new(&p2, &d);
    let h2 = GridFunction::from_fn(&d, |z| c(compact_bump(z, z1, 0.35) + compact_bump(z, -z1, 0.35), 0.0));
    let budget = d.tau_budget(support_gradient(&h2.values, &f2));
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let mut t = 104.0;
    while t <= budget {
        let direct = oscillatory_integral(&h2, &f2, t, &d).unwrap();
        let lead = stationary_phase_leading(&h2, &p2, t, &d).unwrap();
        let envelope: f64 = p2.critical_points.iter().map(|cp| 2.0 * PI / (t * cp.second.norm())).sum();
        worst = worst.max((direct - lead).norm() / envelope);
        count += 1;
        t += 4.0;
    }
    let beat_ok = p2.critical_points.len() == 2 && count >= 10 && worst <= BEAT_TOL;
    Outcome {
        pass: single_ok && beat_ok,
        detail: format!(
            "Gaussian direct/leading {ratio:.4} at tau {tau:.1}; beat max |direct-leading|/envelope {worst:.4} over {count} tau in [104, {budget:.0}]"
        ),
    }
}

fn criterion_7() -> Outcome {
    let b = Builder::new(128, 512, c(0.0, 0.6));
    let q1 = Potential::from_expr(&gaussian(0.0, 0.6, 0.3, 1.0), &b.d).unwrap();
    let q2 = Potential::from_expr(&gaussian(0.1, 0.55, 0.25, 0.5), &b.d).unwrap();
    let taus = [10.0, 20.0, 40.0, 80.0];
    let diff = |a: &Potential, c: &Potential| {
        Potential::sampled(a.values.iter().zip(&c.values).map(|(x, y)| x - y).collect(), &b.d).unwrap()
    };
    let same = diff(&q1, &q1);
    let q = diff(&q1, &q2);
    let mut worst_equal: f64 = 0.0;
    let mut rows = Vec::new();
    for &tau in &taus {
        let u = b.build(&q1, tau, 1);
        let v1 = b.build(&q1, tau, -1);
        let e = identity_terms(&same, &u, &v1, &b.field, &b.d).unwrap();
        for t in [e.direct, e.t_aa, e.stationary_sum, e.corrector_cross, e.corrector_integral, e.minus_integrals]
            .into_iter()
            .chain([e.plus_integrals, e.i2, e.i3, e.j2, e.j3, e.expansion_total])
        {
            worst_equal = worst_equal.max(t.norm());
        }
        worst_equal = worst_equal.max(e.gap);
        let v2 = b.build(&q2, tau, -1);
        rows.push(identity_terms(&q, &u, &v2, &b.field, &b.d).unwrap());
    }
    let seq = |f: &dyn Fn(&IdentityBreakdown) -> f64| rows.iter().map(|r| r.tau * f(r)).collect::<Vec<f64>>();
    let gap = seq(&|r| r.gap);
    let terms = [
        ("I2", seq(&|r| r.i2.norm())),
        ("I3", seq(&|r| r.i3.norm())),
        ("J2", seq(&|r| r.j2.norm())),
        ("J3", seq(&|r| r.j3.norm())),
    ];
    let equal_ok = worst_equal < IDENTITY_ZERO_TOL;
    let mut pass = equal_ok && decreasing(&gap);
    let mut detail = format!("q1=q2 max term {worst_equal:.1e}; tau*gap {}", fmt(&gap));
    for (name, s) in &terms {
        pass &= decreasing(s);
        detail.push_str(&format!("; tau*|{name}| {}", fmt(s)));
    }
    Outcome { pass, detail }
}

fn criterion_8() -> Outcome {
    let d = disk(128, 512);
    let center = c(-0.2, 0.6);
    let q1 = Potential::from_expr(&gaussian(center.re, center.im, 0.3, 1.0), &d).unwrap();
    let q2 = Potential::zero(&d);
    let opts = RecoveryOptions::default();
    let sweep = [10.0, 15.0, 20.0, 30.0, 40.0, 60.0, 80.0];
    let r = recover_pointwise(&q1, &q2, &d, center, &sweep, &opts).unwrap();
    let center_err = (r.fitted - 1.0).norm();
    let center_ok = center_err <= RECOVERY_REL_TOL;

    let probes: Vec<C64> = (0..9).flat_map(|j| (0..9).map(move |i| c(-0.4 + 0.1 * i as f64, 0.4 + 0.05 * j as f64))).collect();
    let start = Instant::now();
    let map = recovery_map(&q1, &q2, &d, &probes, &sweep, &opts);
    let secs = start.elapsed().as_secs_f64();
    let mut off = 0;
    let mut off_worst: f64 = 0.0;
    let mut worst_at = C64::new(0.0, 0.0);
    for res in map.succeeded() {
        if res.truth.is_some_and(|t| t.norm() < OFF_SUPPORT_TRUTH) {
            off += 1;
            if res.fitted.norm() > off_worst {
                off_worst = res.fitted.norm();
                worst_at = res.xhat;
            }
        }
    }
    let failed: Vec<String> = map.probes.iter().filter(|p| p.result.is_none()).map(|p| format!("{:.2}", p.xhat)).collect();
    let off_ok = off > 0 && off_worst < OFF_SUPPORT_MAX;
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    Outcome {
        pass: center_ok && off_ok && secs < MAP_MAX_SECS && failed.is_empty(),
        detail: format!(
            "center {:.4} (err {center_err:.3}); {off} off-support probes, max |c| {off_worst:.3e} at {worst_at:.2}; 9x9 map {secs:.0} s on {threads} thread(s), probes failed: [{}]",
            r.fitted,
            failed.join(", ")
        ),
    }
}

fn criterion_9() -> Outcome {
    let d = build_domain(&DomainSpec::default()).unwrap();
    let order = gamma0_arc_order(&d);
    let b: Vec<C64> = order.iter().map(|&k| d.boundary[k].z.powu(2)).collect();
    let b1: Vec<f64> = b.iter().map(|v| v.re).collect();
    let b2: Vec<f64> = b.iter().map(|v| v.im).collect();
    let sweep = cauchy_riemann_sweep(&d, &b1, &b2, &[1e-1, 1e-2, 1e-3, 1e-4], 16).unwrap();
    let misfits: Vec<f64> = sweep.steps.iter().map(|s| s.misfit).collect();
    let last = *misfits.last().unwrap();
    Outcome {
        pass: sweep.monotone && decreasing(&misfits) && last < CR_FINAL_MISFIT,
        detail: format!(
            "misfits {}, relative {}",
            fmt(&misfits),
            fmt(&sweep.steps.iter().map(|s| s.relative_misfit).collect::<Vec<_>>())
        ),
    }
}

fn criterion_10() -> Outcome {
    let d = build_domain(&DomainSpec::default()).unwrap();
    let (_, f) = quadratic_field(&d);
    let taus = [5.0, 10.0, 20.0, 40.0];
    let samples = random_h10_samples(&d, 20, 7);
    let reports: Vec<_> = samples.iter().map(|u| carleman_estimate_check(u, &f, &taus, &d).unwrap()).collect();
    let k = carleman_constant(&reports).unwrap();
    let mut scale_gap: f64 = 0.0;
    for (u, rep) in samples.iter().zip(&reports) {
        let scaled = carleman_estimate_check(&u.scale(c(-3.7, 0.0)), &f, &taus, &d).unwrap();
        for (a, b) in scaled.ratios.iter().zip(&rep.ratios) {
            scale_gap = scale_gap.max((a - b).abs() / b.abs());
        }
    }
    Outcome {
        pass: k.spread < CARLEMAN_SPREAD_MAX && scale_gap < CARLEMAN_SCALE_TOL,
        detail: format!("per-tau constants {}, spread {:.3}, scale invariance {scale_gap:.1e}", fmt(&k.per_tau), k.spread),
    }
}

fn criterion_11() -> Outcome {
    let dir = std::env::temp_dir().join(format!("cgolab-acceptance-{}", std::process::id()));
    let cfg = ExperimentConfig {
        xhat: [0.0, 0.6],
        q1: gaussian(0.0, 0.6, 0.3, 1.0),
        q2: gaussian(0.1, 0.55, 0.25, 0.5),
        tau_sweep: vec![5.0, 8.0, 11.0, 14.0],
        output_dir: dir.clone(),
        ..Default::default()
    };
    let path = dir.join("identity.json");
    cmd_identity(&cfg).unwrap();
    let first = std::fs::read(&path).unwrap();
    cmd_identity(&cfg).unwrap();
    let second = std::fs::read(&path).unwrap();
    let _ = std::fs::remove_dir_all(&dir);
    Outcome {
        pass: !first.is_empty() && first == second,
        detail: format!("{} bytes, identical: {}", first.len(), first == second),
    }
}

fn main() -> ExitCode {
    let criteria: [(u32, fn() -> Outcome); 11] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failing = Vec::new();
    let mut total = Duration::ZERO;
    for (n, run) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        total += start.elapsed();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let note = if !o.pass && EXPECTED_FAILURES.contains(&n) { " (expected)" } else { "" };
        println!("criterion {n}: {tag}{note} {} [{:.1} s]", o.detail, start.elapsed().as_secs_f64());
        if !o.pass {
            failing.push(n);
        }
    }
    let expected: Vec<u32> =
        EXPECTED_FAILURES.iter().copied().filter(|n| selected.is_empty() || selected.contains(n)).collect();
    println!("failing {failing:?}, expected {expected:?}, total {:.0} s", total.as_secs_f64());
    if failing == expected {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
