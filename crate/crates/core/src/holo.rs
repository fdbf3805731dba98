//! Holomorphic amplitudes and phases.
//!
//! Every holomorphic object is a polynomial in z, so ∂_z̄ vanishes by
//! representation and jets are exact. Boundary conditions on Γ₀ are imposed
//! by (constrained) least squares over the real and imaginary parts of the
//! coefficients.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::numeric::{constrained_lstsq, lstsq};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HolomorphicFunction {
    /// c₀..c_D of Σ c_k z^k.
    pub coefficients: Vec<C64>,
}

impl HolomorphicFunction {
    pub fn new(coefficients: Vec<C64>) -> Self {
        HolomorphicFunction { coefficients }
    }

    pub fn zero() -> Self {
        HolomorphicFunction { coefficients: vec![ZERO] }
    }

    pub fn constant(c: C64) -> Self {
        HolomorphicFunction { coefficients: vec![c] }
    }

    /// (z − z₀)^k expanded about the origin.
    pub fn shifted_power(z0: C64, k: usize) -> Self {
        let mut c = vec![ZERO; k + 1];
        let mut binom = 1.0;
        for j in 0..=k {
            // C(k, j) z^j (−z₀)^{k−j}
            c[j] = binom * (-z0).powu((k - j) as u32);
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
        HolomorphicFunction { coefficients: c }
    }

    /// (z − z₀)²/2.
    pub fn quadratic(z0: C64) -> Self {
        Self::shifted_power(z0, 2).scale(C64::new(0.5, 0.0))
    }

    pub fn degree(&self) -> usize {
        self.coefficients.iter().rposition(|c| *c != ZERO).unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.iter().all(|c| *c == ZERO)
    }

    pub fn eval(&self, z: C64) -> C64 {
        self.coefficients.iter().rev().fold(ZERO, |acc, c| acc * z + c)
    }

    pub fn derivative(&self) -> Self {
        if self.coefficients.len() <= 1 {
            return Self::zero();
        }
        let c = self.coefficients.iter().enumerate().skip(1).map(|(k, c)| c * k as f64).collect();
        HolomorphicFunction { coefficients: c }
    }

    pub fn nth_derivative(&self, n: usize) -> Self {
        (0..n).fold(self.clone(), |f, _| f.derivative())
    }

    /// (f, f', f'') at z.
    pub fn jet(&self, z: C64) -> [C64; 3] {
        let d = self.derivative();
        [self.eval(z), d.eval(z), d.derivative().eval(z)]
    }

    pub fn scale(&self, s: C64) -> Self {
        HolomorphicFunction { coefficients: self.coefficients.iter().map(|c| c * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coefficients.len().max(other.coefficients.len());
        let c = (0..n)
            .map(|k| {
                self.coefficients.get(k).copied().unwrap_or(ZERO) + other.coefficients.get(k).copied().unwrap_or(ZERO)
            })
            .collect();
        HolomorphicFunction { coefficients: c }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut c = vec![ZERO; self.coefficients.len() + other.coefficients.len() - 1];
        for (i, a) in self.coefficients.iter().enumerate() {
            for (j, b) in other.coefficients.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        HolomorphicFunction { coefficients: c }
    }

    pub fn sample(&self, points: &[C64]) -> Vec<C64> {
        crate::exec::map_range(points.len(), |i| self.eval(points[i]))
    }

    /// Values on the quadrature nodes and on the boundary nodes.
    pub fn sample_domain(&self, domain: &Domain) -> (Vec<C64>, Vec<C64>) {
        let b: Vec<C64> = domain.boundary.iter().map(|p| p.z).collect();
        (self.sample(&domain.grid.nodes), self.sample(&b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub z: C64,
    /// ∂_z²Φ at z.
    pub second: C64,
    pub im_phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseFunction {
    pub phi: HolomorphicFunction,
    pub critical_points: Vec<CriticalPoint>,
    /// Coefficients of r(z) = Π (z − z̃_k).
    pub r_polynomial: Vec<C64>,
    pub epsilon: f64,
    pub delta: f64,
}

impl PhaseFunction {
    /// Wraps Φ after locating and validating its interior critical points.
    pub fn from_holomorphic(phi: HolomorphicFunction, domain: &Domain) -> Result<Self> {
        let critical_points = find_critical_points(&phi, domain)?;
        Ok(Self::assemble(phi, critical_points, 0.0, 0.0))
    }

    fn assemble(phi: HolomorphicFunction, critical_points: Vec<CriticalPoint>, epsilon: f64, delta: f64) -> Self {
        let mut r = HolomorphicFunction::constant(C64::new(1.0, 0.0));
        for cp in &critical_points {
            r = r.mul(&HolomorphicFunction::new(vec![-cp.z, C64::new(1.0, 0.0)]));
        }
        PhaseFunction { phi, critical_points, r_polynomial: r.coefficients, epsilon, delta }
    }

    pub fn r(&self) -> HolomorphicFunction {
        HolomorphicFunction::new(self.r_polynomial.clone())
    }

    /// Critical point nearest to `z`.
    pub fn nearest_critical(&self, z: C64) -> Option<&CriticalPoint> {
        self.critical_points.iter().min_by(|a, b| (a.z - z).norm().total_cmp(&(b.z - z).norm()))
    }
}

/// Φ and ∂_zΦ sampled on the grid and on the boundary.
#[derive(Debug, Clone)]
pub struct PhaseField {
    pub phase: PhaseFunction,
    pub phi: Vec<C64>,
    pub dphi: Vec<C64>,
    pub phi_b: Vec<C64>,
    pub dphi_b: Vec<C64>,
}

impl PhaseField {
    pub fn new(phase: &PhaseFunction, domain: &Domain) -> Self {
        let d = phase.phi.derivative();
        let (phi, phi_b) = phase.phi.sample_domain(domain);
        let (dphi, dphi_b) = d.sample_domain(domain);
        PhaseField { phase: phase.clone(), phi, dphi, phi_b, dphi_b }
    }

    /// max |∇ψ| = max |∂_zΦ| over the nodes selected by `keep`.
    pub fn max_grad_where(&self, keep: impl Fn(usize) -> bool) -> f64 {
        self.dphi.iter().enumerate().filter(|(i, _)| keep(*i)).map(|(_, d)| d.norm()).fold(0.0, f64::max)
    }
}

fn trimmed(c: &[C64]) -> Vec<C64> {
    let scale = c.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut v = c.to_vec();
    while v.len() > 1 && v.last().unwrap().norm() <= 1e-14 * scale {
        v.pop();
    }
    v
}

/// All complex roots of Σ c_k z^k via companion-matrix eigenvalues, Newton-polished.
pub fn polynomial_roots(c: &[C64]) -> Vec<C64> {
    let c = trimmed(c);
    let n = c.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let lead = c[n];
    let mut m = DMatrix::<C64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    for i in 0..n {
        m[(i, n - 1)] = -c[i] / lead;
    }
    let (_, t) = m.schur().unpack();
    let p = HolomorphicFunction::new(c.clone());
    let dp = p.derivative();
    (0..n)
        .map(|i| {
            let mut z = t[(i, i)];
            for _ in 0..4 {
                let d = dp.eval(z);
                if d.norm() == 0.0 {
                    break;
                }
                let step = p.eval(z) / d;
                if !step.is_finite() {
                    break;
                }
                z -= step;
            }
            z
        })
        .collect()
}

fn max_second_on_domain(phi: &HolomorphicFunction, domain: &Domain) -> f64 {
    let d2 = phi.nth_derivative(2);
    let nb = domain.boundary.iter().map(|p| d2.eval(p.z).norm()).fold(0.0, f64::max);
    let ng = domain.grid.nodes.iter().step_by(7).map(|&z| d2.eval(z).norm()).fold(0.0, f64::max);
    nb.max(ng)
}

/// Boundary clearance required of every critical point.
pub fn boundary_clearance(domain: &Domain) -> f64 {
    2.0 * domain.grid_spacing()
}

const COMPANION_MAX_DEGREE: usize = 64;

/// Zeros of a polynomial inside |z| < ρ by the argument principle.
fn zeros_inside(p: &HolomorphicFunction, rho: f64) -> i64 {
    let n = (16 * p.degree()).max(4096);
    let vals: Vec<C64> = (0..=n).map(|k| p.eval(C64::from_polar(rho, 2.0 * PI * k as f64 / n as f64))).collect();
    let turn: f64 = vals.windows(2).map(|w| (w[1] / w[0]).arg()).sum();
    (turn / (2.0 * PI)).round() as i64
}

/// Roots of a long series in the closed disk. Companion eigenvalues are
/// unreliable near the circle, where truncated series accumulate zeros, so
/// the interior count comes from the argument principle and the roots from
/// Newton iterations seeded on a polar net.
fn series_roots(p: &HolomorphicFunction, r: f64, clearance: f64) -> Result<Vec<C64>> {
    let inner = zeros_inside(p, r - clearance);
    let outer = zeros_inside(p, r);
    if inner != outer {
        return Err(Error::PhaseValidation(format!(
            "{} critical point(s) within {clearance:.3e} of the boundary",
            outer - inner
        )));
    }
    let dp = p.derivative();
    let scale = p.coefficients.iter().enumerate().map(|(k, c)| c.norm() * r.powi(k as i32)).sum::<f64>();
    let mut found: Vec<C64> = Vec::new();
    'seeds: for i in 0..24 {
        for j in 0..64 {
            if found.len() as i64 >= inner {
                break 'seeds;
            }
            let rho = (r - clearance) * (i as f64 + 0.5) / 24.0;
            let mut z = C64::from_polar(rho, 2.0 * PI * (j as f64 + 0.5 * (i % 2) as f64) / 64.0);
            for _ in 0..60 {
                let d = dp.eval(z);
                if d.norm() == 0.0 {
                    break;
                }
                let step = p.eval(z) / d;
                z -= step;
                if !z.is_finite() || z.norm() > 2.0 * r || step.norm() < 1e-15 * r {
                    break;
                }
            }
            if z.is_finite() && z.norm() < r - clearance && p.eval(z).norm() <= 1e-12 * scale && found.iter().all(|w| (w - z).norm() > 1e-8 * r) {
                found.push(z);
            }
        }
    }
    if found.len() as i64 != inner {
        return Err(Error::PhaseValidation(format!("located {} of {inner} interior critical points", found.len())));
    }
    Ok(found)
}

/// Interior critical points of Φ. Degenerate points and interior points
/// within the clearance band inside ∂Ω are errors.
pub fn find_critical_points(phi: &HolomorphicFunction, domain: &Domain) -> Result<Vec<CriticalPoint>> {
    let d1 = phi.derivative();
    if d1.is_zero() {
        return Err(Error::Hypothesis("constant phase has no isolated critical points".into()));
    }
    let d2 = d1.derivative();
    let r_out = domain.radius();
    let clearance = boundary_clearance(domain);
    let tol = 1e-6 * max_second_on_domain(phi, domain);
    let mut roots: Vec<C64> = if d1.degree() <= COMPANION_MAX_DEGREE {
        polynomial_roots(&d1.coefficients)
    } else {
        series_roots(&d1, r_out, clearance)?
    };
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let mut out = Vec::new();
    for z in roots {
        // Roots outside the closed disk do not enter any integral; for long
        // truncated series they cluster just outside the circle.
        if z.norm() > r_out {
            continue;
        }
        if r_out - z.norm() < clearance {
            return Err(Error::PhaseValidation(format!(
                "critical point {z} lies within {clearance:.3e} of the boundary"
            )));
        }
        let second = d2.eval(z);
        if second.norm() < tol {
            return Err(Error::DegenerateCritical { z, second: second.norm() });
        }
        out.push(CriticalPoint { z, second, im_phi: phi.eval(z).im });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Least-squares plumbing. Unknowns are x = [Re c₀..Re c_D, Im c₀..Im c_D].

/// Row pair (Re, Im) of the real-linear functional c ↦ Σ c_k v_k.
fn functional_rows(v: &[C64]) -> (Vec<f64>, Vec<f64>) {
    let n = v.len();
    let mut re = vec![0.0; 2 * n];
    let mut im = vec![0.0; 2 * n];
    for (k, vk) in v.iter().enumerate() {
        re[k] = vk.re;
        re[n + k] = -vk.im;
        im[k] = vk.im;
        im[n + k] = vk.re;
    }
    (re, im)
}

fn powers(z: C64, degree: usize) -> Vec<C64> {
    let mut v = Vec::with_capacity(degree + 1);
    let mut p = C64::new(1.0, 0.0);
    for _ in 0..=degree {
        v.push(p);
        p *= z;
    }
    v
}

/// Basis values of the j-th derivative of z^k at z.
fn derivative_powers(z: C64, degree: usize, j: usize) -> Vec<C64> {
    (0..=degree)
        .map(|k| {
            if k < j {
                ZERO
            } else {
                let f: f64 = ((k - j + 1)..=k).map(|v| v as f64).product();
                z.powu((k - j) as u32) * f
            }
        })
        .collect()
}

fn coefficients_from(x: &DVector<f64>, degree: usize) -> HolomorphicFunction {
    let n = degree + 1;
    HolomorphicFunction::new((0..n).map(|k| C64::new(x[k], x[n + k])).collect())
}

fn matrix_from_rows(rows: &[Vec<f64>], ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}

/// Weighted rows of Re f (or Im f) on Γ₀.
fn gamma0_rows(domain: &Domain, degree: usize, imaginary: bool, weight: f64) -> Vec<Vec<f64>> {
    domain
        .gamma0_indices()
        .iter()
        .map(|&k| {
            let p = &domain.boundary[k];
            let (re, im) = functional_rows(&powers(p.z, degree));
            let s = (weight * p.weight).sqrt();
            let row = if imaginary { im } else { re };
            row.into_iter().map(|v| v * s).collect()
        })
        .collect()
}

/// Diagonal rows of a coefficient penalty Σ μ_k |c_k|².
fn coefficient_penalty(weights: &[f64]) -> DMatrix<f64> {
    let n = weights.len();
    let mut l = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for (k, w) in weights.iter().enumerate() {
        let s = w.sqrt();
        l[(k, k)] = s;
        l[(n + k, n + k)] = s;
    }
    l
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmplitudeFit {
    pub a: HolomorphicFunction,
    pub max_re_on_gamma0: f64,
}

/// Holomorphic a with Re a ≈ 0 on Γ₀ and a(x̂) = 1.
pub fn fit_amplitude(domain: &Domain, degree: usize, xhat: C64) -> Result<AmplitudeFit> {
    if degree < 1 {
        return Err(Error::InvalidInput("amplitude degree must be at least 1".into()));
    }
    if !domain.contains(xhat) || (domain.radius() - xhat.norm()) <= 0.0 {
        return Err(Error::TargetOutside(xhat));
    }
    let n = degree + 1;
    let rows = gamma0_rows(domain, degree, false, 1.0);
    let a = matrix_from_rows(&rows, 2 * n);
    let b = DVector::zeros(rows.len());
    let r = domain.radius();
    let l = coefficient_penalty(&(0..n).map(|k| 1e-12 * 2.0 * PI * r.powi(2 * k as i32 + 1)).collect::<Vec<_>>());
    let (re, im) = functional_rows(&powers(xhat, degree));
    let c = matrix_from_rows(&[re, im], 2 * n);
    let d = DVector::from_vec(vec![1.0, 0.0]);
    let (x, _) = constrained_lstsq(&a, &b, &l, &c, &d).map_err(|_| Error::InfeasibleNormalization)?;
    let f = coefficients_from(&x, degree);
    if (f.eval(xhat) - C64::new(1.0, 0.0)).norm() > 1e-8 {
        return Err(Error::InfeasibleNormalization);
    }
    let max_re = domain.gamma0_indices().iter().map(|&k| f.eval(domain.boundary[k].z).re.abs()).fold(0.0, f64::max);
    Ok(AmplitudeFit { a: f, max_re_on_gamma0: max_re })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JetPoint {
    pub z: C64,
    pub value: C64,
    pub d1: C64,
    pub d2: C64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JetSpec {
    pub points: Vec<JetPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JetOptions {
    /// Weight of Σ_{Γ₀} |Im u|² in the objective.
    pub gamma0_weight: f64,
    /// Weight of the Dirichlet energy π Σ k |c_k|² R^{2k}.
    pub dirichlet_reg: f64,
}

impl Default for JetOptions {
    fn default() -> Self {
        JetOptions { gamma0_weight: 1.0, dirichlet_reg: 1e-10 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JetFit {
    pub u: HolomorphicFunction,
    pub constraint_residual: f64,
    pub max_im_on_gamma0: f64,
}

/// Holomorphic u with prescribed (u, ∂_zu, ∂_z²u) at each jet point and Im u ≈ 0 on Γ₀.
pub fn jet_interpolate(domain: &Domain, jets: &JetSpec, degree: usize) -> Result<JetFit> {
    jet_interpolate_with(domain, jets, degree, JetOptions::default())
}

pub fn jet_interpolate_with(domain: &Domain, jets: &JetSpec, degree: usize, opts: JetOptions) -> Result<JetFit> {
    let m = jets.points.len();
    if degree + 1 < 3 * m {
        return Err(Error::InvalidInput(format!("degree {degree} too small for {m} jet points")));
    }
    let h = domain.grid_spacing();
    for (i, p) in jets.points.iter().enumerate() {
        if !domain.contains(p.z) || domain.radius() - p.z.norm() <= 0.0 {
            return Err(Error::TargetOutside(p.z));
        }
        for q in &jets.points[i + 1..] {
            if (p.z - q.z).norm() <= h {
                return Err(Error::Confluent(format!("jet points {} and {} closer than the grid spacing", p.z, q.z)));
            }
        }
    }
    let n = degree + 1;
    let rows = gamma0_rows(domain, degree, true, opts.gamma0_weight);
    let a = matrix_from_rows(&rows, 2 * n);
    let b = DVector::zeros(rows.len());
    let r = domain.radius();
    let l = coefficient_penalty(
        &(0..n).map(|k| opts.dirichlet_reg * (PI * k as f64 * r.powi(2 * k as i32)).max(1e-3 * PI)).collect::<Vec<_>>(),
    );
    let mut crow = Vec::new();
    let mut d = Vec::new();
    for p in &jets.points {
        for (j, target) in [p.value, p.d1, p.d2].into_iter().enumerate() {
            let (re, im) = functional_rows(&derivative_powers(p.z, degree, j));
            crow.push(re);
            crow.push(im);
            d.push(target.re);
            d.push(target.im);
        }
    }
    let c = matrix_from_rows(&crow, 2 * n);
    let d = DVector::from_vec(d);
    let (x, _) = constrained_lstsq(&a, &b, &l, &c, &d)?;
    let u = coefficients_from(&x, degree);
    let mut resid: f64 = 0.0;
    for p in &jets.points {
        let j = u.jet(p.z);
        resid = resid.max((j[0] - p.value).norm()).max((j[1] - p.d1).norm()).max((j[2] - p.d2).norm());
    }
    if resid > 1e-8 {
        return Err(Error::RankDeficient { achieved: resid });
    }
    let max_im = domain.gamma0_indices().iter().map(|&k| u.eval(domain.boundary[k].z).im.abs()).fold(0.0, f64::max);
    Ok(JetFit { u, constraint_residual: resid, max_im_on_gamma0: max_im })
}

// ---------------------------------------------------------------------------
// Regularized Cauchy–Riemann extension.

/// Γ₀ node indices in arc order (starting just after Γ̃ ends).
pub fn gamma0_arc_order(domain: &Domain) -> Vec<usize> {
    let b = domain.spec.gamma_tilde[1];
    let mut idx = domain.gamma0_indices();
    idx.sort_by(|&i, &j| {
        let ti = (domain.boundary[i].theta - b).rem_euclid(2.0 * PI);
        let tj = (domain.boundary[j].theta - b).rem_euclid(2.0 * PI);
        ti.total_cmp(&tj)
    });
    idx
}

/// Rows (value, first and second tangential differences) of a discrete
/// H² norm on a sequence of equally spaced nodes. The sequence is either
/// an open arc (differences only at interior nodes) or a closed loop.
fn h2_operator(n: usize, h: f64, closed: bool) -> Vec<(f64, Vec<(usize, f64)>)> {
    let mut ops = Vec::new();
    let w = h;
    for j in 0..n {
        ops.push((w, vec![(j, 1.0)]));
    }
    let nb = |j: usize, o: i64| -> Option<usize> {
        let k = j as i64 + o;
        if closed {
            Some(k.rem_euclid(n as i64) as usize)
        } else if k >= 0 && (k as usize) < n {
            Some(k as usize)
        } else {
            None
        }
    };
    for j in 0..n {
        if let (Some(a), Some(b)) = (nb(j, -1), nb(j, 1)) {
            ops.push((w, vec![(b, 0.5 / h), (a, -0.5 / h)]));
            ops.push((w, vec![(b, 1.0 / (h * h)), (j, -2.0 / (h * h)), (a, 1.0 / (h * h))]));
        }
    }
    ops
}

fn apply_h2(ops: &[(f64, Vec<(usize, f64)>)], f: &[C64]) -> Vec<C64> {
    ops.iter().map(|(w, terms)| terms.iter().fold(ZERO, |s, &(j, c)| s + f[j] * c) * w.sqrt()).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrExtension {
    pub f: HolomorphicFunction,
    pub eps_reg: f64,
    /// ‖f − B‖ in the discrete H²(Γ₀) norm.
    pub misfit: f64,
    /// misfit / ‖B‖_{H²(Γ₀)}.
    pub relative_misfit: f64,
    pub objective: f64,
}

/// Minimizes ‖f − B‖²_{H²(Γ₀)} + ε‖f‖²_{H²(∂Ω)} over polynomials f = φ + iψ.
/// `b1`, `b2` are sampled at [`gamma0_arc_order`]. The ΔL term of the
/// functional vanishes identically on this class.
pub fn cauchy_riemann_extend(domain: &Domain, b1: &[f64], b2: &[f64], eps_reg: f64, degree: usize) -> Result<CrExtension> {
    let order = gamma0_arc_order(domain);
    if b1.len() != order.len() || b2.len() != order.len() {
        return Err(Error::InvalidInput(format!("boundary data must have {} Γ₀ samples", order.len())));
    }
    if !(eps_reg > 0.0 && eps_reg <= 1.0) {
        return Err(Error::InvalidInput(format!("eps_reg {eps_reg} must lie in (0, 1]")));
    }
    let n = degree + 1;
    let h = domain.boundary[0].weight;
    let op0 = h2_operator(order.len(), h, false);
    let nb = domain.boundary.len();
    let opb = h2_operator(nb, h, true);
    let basis0: Vec<Vec<C64>> = order.iter().map(|&k| powers(domain.boundary[k].z, degree)).collect();
    let basisb: Vec<Vec<C64>> = domain.boundary.iter().map(|p| powers(p.z, degree)).collect();
    // Column k of each operator applied to the basis.
    let col = |ops: &[(f64, Vec<(usize, f64)>)], basis: &[Vec<C64>], k: usize| {
        let f: Vec<C64> = basis.iter().map(|v| v[k]).collect();
        apply_h2(ops, &f)
    };
    let cols0: Vec<Vec<C64>> = (0..n).map(|k| col(&op0, &basis0, k)).collect();
    let colsb: Vec<Vec<C64>> = (0..n).map(|k| col(&opb, &basisb, k)).collect();
    let bvals: Vec<C64> = b1.iter().zip(b2).map(|(x, y)| C64::new(*x, *y)).collect();
    let bh = apply_h2(&op0, &bvals);
    let m0 = op0.len();
    let mb = opb.len();
    let rows = 2 * (m0 + mb);
    let se = eps_reg.sqrt();
    let mut a = DMatrix::<f64>::zeros(rows, 2 * n);
    let mut rhs = DVector::<f64>::zeros(rows);
    for k in 0..n {
        for i in 0..m0 {
            let v = cols0[k][i];
            a[(2 * i, k)] = v.re;
            a[(2 * i, n + k)] = -v.im;
            a[(2 * i + 1, k)] = v.im;
            a[(2 * i + 1, n + k)] = v.re;
        }
        for i in 0..mb {
            let v = colsb[k][i] * se;
            let r0 = 2 * (m0 + i);
            a[(r0, k)] = v.re;
            a[(r0, n + k)] = -v.im;
            a[(r0 + 1, k)] = v.im;
            a[(r0 + 1, n + k)] = v.re;
        }
    }
    for i in 0..m0 {
        rhs[2 * i] = bh[i].re;
        rhs[2 * i + 1] = bh[i].im;
    }
    let x = lstsq(&a, &rhs, 1e-15);
    let f = coefficients_from(&x, degree);
    let fvals: Vec<C64> = order.iter().map(|&k| f.eval(domain.boundary[k].z)).collect();
    let diff: Vec<C64> = fvals.iter().zip(&bvals).map(|(a, b)| a - b).collect();
    let misfit = norm_h2(&op0, &diff);
    let bnorm = norm_h2(&op0, &bvals);
    let fb: Vec<C64> = domain.boundary.iter().map(|p| f.eval(p.z)).collect();
    let objective = misfit * misfit + eps_reg * norm_h2(&opb, &fb).powi(2);
    Ok(CrExtension {
        f,
        eps_reg,
        misfit,
        relative_misfit: if bnorm > 0.0 { misfit / bnorm } else { 0.0 },
        objective,
    })
}

fn norm_h2(ops: &[(f64, Vec<(usize, f64)>)], f: &[C64]) -> f64 {
    apply_h2(ops, f).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrSweep {
    pub steps: Vec<CrExtension>,
    pub monotone: bool,
    /// Misfit stalls (last step improves by less than 2×): the datum is not
    /// the trace of a holomorphic function to the resolution available.
    pub stagnates: bool,
}

pub fn cauchy_riemann_sweep(domain: &Domain, b1: &[f64], b2: &[f64], eps: &[f64], degree: usize) -> Result<CrSweep> {
    let steps = eps.iter().map(|&e| cauchy_riemann_extend(domain, b1, b2, e, degree)).collect::<Result<Vec<_>>>()?;
    let monotone = steps.windows(2).all(|w| w[1].misfit < w[0].misfit);
    let stagnates = steps.len() >= 2 && {
        let k = steps.len();
        steps[k - 1].misfit > 0.5 * steps[k - 2].misfit
    };
    Ok(CrSweep { steps, monotone, stagnates })
}

// ---------------------------------------------------------------------------
// Schwarz-integral constructions. For real h on the circle,
// S[h](z) = ĥ₀ + 2 Σ_{m≥1} ĥ_m (z/R)^m is holomorphic with Re S[h] = h on ∂Ω.
// Supporting h on Γ̃ makes Re S[h] (or Im of i·S[h]) vanish on Γ₀ up to
// truncation of the series.

const SCHWARZ_SAMPLES: usize = 8192;
const SCHWARZ_MAX_DEGREE: usize = 512;

/// Smooth real profiles sin^k(s)·{cos js, sin js}, s ∈ [0, π) mapped onto Γ̃.
fn gamma_tilde_profiles(domain: &Domain, k: i32, j_max: usize) -> Vec<Vec<f64>> {
    let [a, b] = domain.spec.gamma_tilde;
    let s_of = |t: f64| if t >= a && t < b { Some(PI * (t - a) / (b - a)) } else { None };
    let mut out = Vec::new();
    for j in 0..=j_max {
        let mut kinds: Vec<fn(f64) -> f64> = vec![f64::cos];
        if j > 0 {
            kinds.push(f64::sin);
        }
        for trig in kinds {
            out.push(
                (0..SCHWARZ_SAMPLES)
                    .map(|i| {
                        let t = 2.0 * PI * i as f64 / SCHWARZ_SAMPLES as f64;
                        s_of(t).map_or(0.0, |s| s.sin().powi(k) * trig(j as f64 * s))
                    })
                    .collect(),
            );
        }
    }
    out
}

/// Coefficients of S[h] for h sampled uniformly on the circle.
fn schwarz_series(h: &[f64], radius: f64) -> Vec<C64> {
    let n = h.len();
    let mut buf: Vec<C64> = h.iter().map(|&v| C64::new(v, 0.0)).collect();
    rustfft::FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    (0..=SCHWARZ_MAX_DEGREE)
        .map(|m| {
            let c = buf[m] * scale;
            if m == 0 {
                c
            } else {
                2.0 * c / radius.powi(m as i32)
            }
        })
        .collect()
}

/// Drops the tail once Σ_{m>N} |c_m| R^m falls below `rel` of the total.
fn truncate_series(c: &[C64], radius: f64, rel: f64) -> Vec<C64> {
    let mags: Vec<f64> = c.iter().enumerate().map(|(m, v)| v.norm() * radius.powi(m as i32)).collect();
    let total: f64 = mags.iter().sum();
    let mut tail = 0.0;
    let mut n = c.len();
    while n > 1 && tail + mags[n - 1] <= rel * total {
        tail += mags[n - 1];
        n -= 1;
    }
    c[..n].to_vec()
}

fn rms_derivative(h: &[f64]) -> f64 {
    let n = h.len();
    let dt = 2.0 * PI / n as f64;
    let s: f64 = (0..n).map(|i| ((h[(i + 1) % n] - h[(i + n - 1) % n]) / (2.0 * dt)).powi(2)).sum();
    (s / n as f64).sqrt().max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchwarzOptions {
    /// Powers k of the sin^k envelope tried.
    pub powers: [i32; 2],
    /// Highest trigonometric frequency j tried.
    pub max_frequency: usize,
    /// Directions of Φ''(x̂) tried, evenly spaced in [0, π).
    pub directions: usize,
    /// Required min |Φ'| on ∂Ω relative to max |Φ'|.
    pub min_boundary_grad: f64,
    /// Relative series truncation.
    pub truncation: f64,
}

impl Default for SchwarzOptions {
    fn default() -> Self {
        SchwarzOptions {
            powers: [6, 8],
            max_frequency: 2,
            directions: 12,
            min_boundary_grad: 1e-3,
            truncation: 1e-15,
        }
    }
}


/// u = c + i·S[h] with h supported on Γ̃, u'(x̂) = 0, |u''(x̂)| = 1 and
/// Re u(x̂) = 0, so Im u vanishes on Γ₀. Among the envelope, frequency and
/// Hessian-direction candidates, the admissible one (single nondegenerate
/// critical point at x̂, no boundary near-critical points) with the smallest
/// max |u'| on ∂Ω wins.
pub fn schwarz_phase(domain: &Domain, xhat: C64, opts: &SchwarzOptions) -> Result<HolomorphicFunction> {
    if !domain.contains(xhat) {
        return Err(Error::TargetOutside(xhat));
    }
    let r = domain.radius();
    let i = C64::new(0.0, 1.0);
    let mut candidates: Vec<(f64, HolomorphicFunction)> = Vec::new();
    for &k in &opts.powers {
        for j_max in 1..=opts.max_frequency.max(1) {
            let profiles = gamma_tilde_profiles(domain, k, j_max);
            let series: Vec<HolomorphicFunction> =
                profiles.iter().map(|h| HolomorphicFunction::new(schwarz_series(h, r)).scale(i)).collect();
            let w: Vec<f64> = profiles.iter().map(|h| rms_derivative(h)).collect();
            let d1: Vec<C64> = series.iter().map(|s| s.derivative().eval(xhat)).collect();
            let d2: Vec<C64> = series.iter().map(|s| s.nth_derivative(2).eval(xhat)).collect();
            let nb = series.len();
            let a = DMatrix::from_fn(4, nb, |row, col| {
                let v = match row {
                    0 => d1[col].re,
                    1 => d1[col].im,
                    2 => d2[col].re,
                    _ => d2[col].im,
                };
                v / w[col]
            });
            for d in 0..opts.directions.max(1) {
                let target = C64::from_polar(1.0, PI * d as f64 / opts.directions.max(1) as f64);
                let mut b = DVector::zeros(4);
                b[2] = target.re;
                b[3] = target.im;
                let alpha = lstsq(&a, &b, 1e-13);
                let mut c = vec![ZERO; SCHWARZ_MAX_DEGREE + 1];
                for (s, (al, wk)) in series.iter().zip(alpha.iter().zip(&w)) {
                    for (cm, sm) in c.iter_mut().zip(&s.coefficients) {
                        *cm += sm * (al / wk);
                    }
                }
                let mut u = HolomorphicFunction::new(truncate_series(&c, r, opts.truncation));
                let shift = u.eval(xhat).re;
                u.coefficients[0] -= shift;
                let du = u.derivative();
                if (du.eval(xhat)).norm() > 1e-10 || (du.derivative().eval(xhat) - target).norm() > 1e-8 {
                    continue;
                }
                let g: Vec<f64> = domain.boundary.iter().map(|p| du.eval(p.z).norm()).collect();
                let gmax = g.iter().cloned().fold(0.0, f64::max);
                let gmin = g.iter().cloned().fold(f64::INFINITY, f64::min);
                if gmin >= opts.min_boundary_grad * gmax && zeros_inside(&du, r) == 1 {
                    candidates.push((gmax, u));
                }
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut last = String::from("no candidate passed the boundary gradient screen");
    for (_, u) in candidates {
        match find_critical_points(&u, domain) {
            Ok(cps) if cps.len() == 1 && (cps[0].z - xhat).norm() < 1e-8 => return Ok(u),
            Ok(cps) => last = format!("{} interior critical points", cps.len()),
            Err(e) => last = e.to_string(),
        }
    }
    Err(Error::PhaseValidation(format!("no admissible Schwarz phase at {xhat}: {last}")))
}

/// a = S[h] + iκ with h = α·sin⁶ on Γ̃, normalized so a(x̂) = 1; Re a
/// vanishes on Γ₀ up to truncation.
pub fn schwarz_amplitude(domain: &Domain, xhat: C64) -> Result<AmplitudeFit> {
    if !domain.contains(xhat) {
        return Err(Error::TargetOutside(xhat));
    }
    let r = domain.radius();
    let h = gamma_tilde_profiles(domain, 6, 0).remove(0);
    let s = HolomorphicFunction::new(truncate_series(&schwarz_series(&h, r), r, 1e-15));
    let v = s.eval(xhat);
    if v.re.abs() < 1e-8 {
        return Err(Error::InfeasibleNormalization);
    }
    let mut a = s.scale(C64::new(1.0 / v.re, 0.0));
    let kappa = a.eval(xhat).im;
    a.coefficients[0] -= C64::new(0.0, kappa);
    let max_re = domain.gamma0_indices().iter().map(|&k| a.eval(domain.boundary[k].z).re.abs()).fold(0.0, f64::max);
    Ok(AmplitudeFit { a, max_re_on_gamma0: max_re })
}

// ---------------------------------------------------------------------------
// Phase construction.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UMode {
    /// u = (z − x̂)²/2.
    Quadratic,
    /// u from jets (0, 0, 1) at x̂ with Im u ≈ 0 on Γ₀.
    Adapted,
    /// u = c + i·S[h] with h supported on Γ̃ (see [`schwarz_phase`]).
    Schwarz,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseOptions {
    pub u_mode: UMode,
    pub degree_u: usize,
    pub degree_p: usize,
    /// Degree of w; 0 selects 3m + 6.
    pub degree_w: usize,
    pub attempts: usize,
    /// Accepted max |Im Φ| on Γ₀.
    pub gamma0_tol: f64,
    #[serde(default)]
    pub schwarz: SchwarzOptions,
}

impl Default for PhaseOptions {
    fn default() -> Self {
        PhaseOptions {
            u_mode: UMode::Schwarz,
            degree_u: 16,
            degree_p: 12,
            degree_w: 0,
            attempts: 16,
            gamma0_tol: 1e-10,
            schwarz: SchwarzOptions::default(),
        }
    }
}

/// p with Re p ≈ 0 on Γ₀ and ∂Im p/∂τ⃗ ≤ −0.1 there, by an active-set
/// hinge iteration.
pub fn fit_p(domain: &Domain, degree: usize) -> Result<HolomorphicFunction> {
    let n = degree + 1;
    let margin = 0.1;
    let r = domain.radius();
    let g0 = gamma0_arc_order(domain);
    let base = gamma0_rows(domain, degree, false, 1.0);
    // ∂_τ Im p = −(1/R) Re(z p'(z)) on the circle.
    let tangential: Vec<Vec<f64>> = g0
        .iter()
        .map(|&k| {
            let z = domain.boundary[k].z;
            let v: Vec<C64> = derivative_powers(z, degree, 1).iter().map(|d| -d * z / r).collect();
            functional_rows(&v).0
        })
        .collect();
    let l = coefficient_penalty(&vec![1e-8; n]);
    let mut active = vec![false; g0.len()];
    let mut x = DVector::<f64>::zeros(2 * n);
    for _ in 0..64 {
        let mut rows = base.clone();
        let mut rhs = vec![0.0; rows.len()];
        for (j, on) in active.iter().enumerate() {
            if *on {
                rows.push(tangential[j].iter().map(|v| v * 10.0).collect());
                rhs.push(-margin * 10.0);
            }
        }
        let a = matrix_from_rows(&rows, 2 * n);
        let mut full = DMatrix::<f64>::zeros(rows.len() + 2 * n, 2 * n);
        full.view_mut((0, 0), (rows.len(), 2 * n)).copy_from(&a);
        full.view_mut((rows.len(), 0), (2 * n, 2 * n)).copy_from(&l);
        let mut b = DVector::<f64>::zeros(rows.len() + 2 * n);
        for (i, v) in rhs.iter().enumerate() {
            b[i] = *v;
        }
        x = lstsq(&full, &b, 1e-15);
        let mut changed = false;
        for (j, row) in tangential.iter().enumerate() {
            let val: f64 = row.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
            if val > -margin * 0.999 && !active[j] {
                active[j] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(coefficients_from(&x, degree))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub max_im_on_gamma0: f64,
    pub min_pair_separation: Option<f64>,
    pub min_separation_from_xhat: Option<f64>,
    pub min_second: f64,
    pub boundary_clearance: f64,
    pub critical_point_count: usize,
    pub gamma0_ok: bool,
    pub separation_ok: bool,
    pub nondegenerate_ok: bool,
    pub clearance_ok: bool,
    pub passed: bool,
}

/// Pure report on the phase conditions at x̂.
pub fn validate_phase(phase: &PhaseFunction, domain: &Domain, xhat: C64, gamma0_tol: f64) -> PhaseReport {
    let max_im = domain
        .gamma0_indices()
        .iter()
        .map(|&k| phase.phi.eval(domain.boundary[k].z).im.abs())
        .fold(0.0, f64::max);
    let cps = &phase.critical_points;
    let ims: Vec<f64> = cps.iter().map(|c| c.im_phi).collect();
    let range = ims.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - ims.iter().cloned().fold(f64::INFINITY, f64::min);
    let sep_tol = 1e-8 * if range.is_finite() { range.max(1.0) } else { 1.0 };
    let mut min_pair: Option<f64> = None;
    for i in 0..ims.len() {
        for j in i + 1..ims.len() {
            let s = (ims[i] - ims[j]).abs();
            min_pair = Some(min_pair.map_or(s, |m: f64| m.min(s)));
        }
    }
    let xi = cps
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1.z - xhat).norm().total_cmp(&(b.1.z - xhat).norm()))
        .map(|(i, _)| i);
    let min_x = xi.and_then(|i| {
        cps.iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, c)| (c.im_phi - cps[i].im_phi).abs())
            .fold(None, |m: Option<f64>, s| Some(m.map_or(s, |m| m.min(s))))
    });
    let min_second = cps.iter().map(|c| c.second.norm()).fold(f64::INFINITY, f64::min);
    let clearance = cps.iter().map(|c| domain.radius() - c.z.norm()).fold(f64::INFINITY, f64::min);
    let tol2 = 1e-6 * max_second_on_domain(&phase.phi, domain);
    let gamma0_ok = max_im <= gamma0_tol;
    let separation_ok = min_x.is_none_or(|s| s > sep_tol);
    let nondegenerate_ok = cps.is_empty() || min_second >= tol2;
    let clearance_ok = cps.is_empty() || clearance >= boundary_clearance(domain);
    PhaseReport {
        max_im_on_gamma0: max_im,
        min_pair_separation: min_pair,
        min_separation_from_xhat: min_x,
        min_second: if cps.is_empty() { 0.0 } else { min_second },
        boundary_clearance: if cps.is_empty() { f64::INFINITY } else { clearance },
        critical_point_count: cps.len(),
        gamma0_ok,
        separation_ok,
        nondegenerate_ok,
        clearance_ok,
        passed: gamma0_ok && separation_ok && nondegenerate_ok && clearance_ok && xi.is_some(),
    }
}

/// Φ = u + εp + δw with a validated critical set. ε is retried along
/// ε, ε/2, ε/4, … (a single attempt when ε = 0).
pub fn build_phase(domain: &Domain, xhat: C64, eps: f64, delta: f64, opts: &PhaseOptions) -> Result<PhaseFunction> {
    if !domain.contains(xhat) || domain.radius() - xhat.norm() < boundary_clearance(domain) {
        return Err(Error::TargetOutside(xhat));
    }
    let u = match opts.u_mode {
        UMode::Quadratic => HolomorphicFunction::quadratic(xhat),
        UMode::Adapted => {
            let jets = JetSpec {
                points: vec![JetPoint { z: xhat, value: ZERO, d1: ZERO, d2: C64::new(1.0, 0.0) }],
            };
            let opts_u = JetOptions { gamma0_weight: 1.0, dirichlet_reg: 1e-10 };
            jet_interpolate_with(domain, &jets, opts.degree_u, opts_u)?.u
        }
        UMode::Schwarz => schwarz_phase(domain, xhat, &opts.schwarz)?,
    };
    let p = if eps != 0.0 { Some(fit_p(domain, opts.degree_p)?) } else { None };
    let attempts = if eps == 0.0 { 1 } else { opts.attempts.max(1) };
    let mut last = String::new();
    for k in 0..attempts {
        let e = eps * 0.5f64.powi(k as i32);
        let base = match &p {
            Some(p) => u.add(&p.scale(C64::new(e, 0.0))),
            None => u.clone(),
        };
        let cps = match find_critical_points(&base, domain) {
            Ok(c) => c,
            Err(err) => {
                last = err.to_string();
                continue;
            }
        };
        let (phi, cps) = if delta != 0.0 && cps.len() > 1 {
            let m = cps.len();
            let jets = JetSpec {
                points: cps
                    .iter()
                    .enumerate()
                    .map(|(i, c)| JetPoint { z: c.z, value: C64::new(0.0, i as f64), d1: ZERO, d2: C64::new(1.0, 0.0) })
                    .collect(),
            };
            let dw = if opts.degree_w == 0 { 3 * m + 6 } else { opts.degree_w };
            let w = match jet_interpolate(domain, &jets, dw) {
                Ok(f) => f.u,
                Err(err) => {
                    last = err.to_string();
                    continue;
                }
            };
            let phi = base.add(&w.scale(C64::new(delta, 0.0)));
            match find_critical_points(&phi, domain) {
                Ok(c) => (phi, c),
                Err(err) => {
                    last = err.to_string();
                    continue;
                }
            }
        } else {
            (base, cps)
        };
        let phase = PhaseFunction::assemble(phi, cps, e, delta);
        let rep = validate_phase(&phase, domain, xhat, opts.gamma0_tol);
        if rep.passed {
            return Ok(phase);
        }
        last = format!("{rep:?}");
    }
    Err(Error::PhaseValidation(format!("no admissible phase after {attempts} attempts; last: {last}")))
}
