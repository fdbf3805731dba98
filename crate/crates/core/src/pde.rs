//! Schrödinger solves Δu + qu = f on the disk, partial Cauchy data,
//! Carleman-weighted solvability and the Carleman estimate check.
//!
//! The zero-Dirichlet inverse of Δ is built from the Cauchy transforms:
//! `¼ ∂_z̄⁻¹ ∂_z⁻¹ f` solves Δv = f, and subtracting the harmonic extension
//! of its trace fixes the boundary values. Potentials enter through GMRES on
//! the second-kind equation `w + Δ₀⁻¹(q w) = rhs`.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::expr::ExprSum;
use crate::geometry::Domain;
use crate::holo::PhaseField;
use crate::numeric::{gmres, pairwise_sum, GmresOptions};
use crate::polar::mode_of;
use crate::transforms::{dz_dzbar, laplacian, r_phi_tau, r_tilde_phi_tau, GridFunction};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothness {
    AnalyticExpr,
    Sampled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub values: Vec<C64>,
    pub tag: Smoothness,
}

impl Potential {
    pub fn zero(domain: &Domain) -> Self {
        Potential { values: vec![ZERO; domain.n_nodes()], tag: Smoothness::AnalyticExpr }
    }

    pub fn from_expr(expr: &ExprSum, domain: &Domain) -> Result<Self> {
        expr.validate().map_err(Error::InvalidInput)?;
        let values = domain.grid.nodes.iter().map(|&z| C64::new(expr.value(z), 0.0)).collect();
        Potential::checked(values, Smoothness::AnalyticExpr, domain)
    }

    pub fn sampled(values: Vec<C64>, domain: &Domain) -> Result<Self> {
        Potential::checked(values, Smoothness::Sampled, domain)
    }

    fn checked(values: Vec<C64>, tag: Smoothness, domain: &Domain) -> Result<Self> {
        if values.len() != domain.n_nodes() {
            return Err(Error::InvalidInput(format!("potential has {} samples for {} nodes", values.len(), domain.n_nodes())));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("potential"));
        }
        Ok(Potential { values, tag })
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == ZERO)
    }

    pub fn grid(&self) -> GridFunction {
        GridFunction::new(self.values.clone())
    }
}

// ---------------------------------------------------------------------------
// Zero-Dirichlet inverse of the Laplacian.

/// Solution of Δv = f, v|∂Ω = 0, with its normal derivative on the boundary nodes.
struct LaplaceSolve {
    values: Vec<C64>,
    flux: Vec<C64>,
}

fn laplace_zero_dirichlet(f: &[C64], domain: &Domain, want_flux: bool) -> LaplaceSolve {
    let ops = &domain.polar;
    let nt = ops.nt;
    let r_out = ops.radius;
    // Y = ∂_z⁻¹ f = conj T conj f
    let fc: Vec<C64> = f.iter().map(|v| v.conj()).collect();
    let (ym, yrm) = ops.cauchy_modes(&ops.to_modes(&fc));
    let y: Vec<C64> = ops.from_modes(&ym).iter().map(|v| v.conj()).collect();
    // U = ¼ T Y
    let (fm, frm) = ops.cauchy_modes(&ops.to_modes(&y));
    let mut wm: Vec<C64> = fm.iter().map(|v| v * 0.25).collect();
    let b: Vec<C64> = frm.iter().map(|v| v * 0.25).collect();
    for i in 0..ops.nr {
        let rho = ops.radii[i] / r_out;
        for k in 0..nt {
            let m = mode_of(k, nt).unsigned_abs() as i32;
            wm[i * nt + k] -= b[k] * rho.powi(m);
        }
    }
    let values = ops.from_modes(&wm);
    let flux = if want_flux {
        // Y at r = R in modes: the trace of conj(T conj f) has modes conj(c_{-m}).
        let mut y_r = vec![ZERO; nt];
        for k in 0..nt {
            let m = mode_of(k, nt);
            if let Some(s) = crate::polar::slot_of(-m, nt) {
                y_r[k] = yrm[s].conj();
            }
        }
        let mut dm = vec![ZERO; nt];
        for k in 0..nt {
            let m = mode_of(k, nt);
            let ym1 = crate::polar::slot_of(m + 1, nt).map(|s| y_r[s]).unwrap_or(ZERO);
            // ∂_r F_m = 2 Y_{m+1} + m F_m / r for F = T Y
            let dfr = 2.0 * ym1 + frm[k] * (m as f64 / r_out);
            dm[k] = 0.25 * dfr - b[k] * (m.unsigned_abs() as f64 / r_out);
        }
        ops.boundary_from_modes(&dm)
    } else {
        Vec::new()
    };
    LaplaceSolve { values, flux }
}

/// Harmonic extension of boundary data and its normal derivative.
fn harmonic_with_flux(g: &[C64], domain: &Domain) -> (Vec<C64>, Vec<C64>) {
    let ops = &domain.polar;
    let (values, bm) = ops.harmonic_extension(g);
    let nt = ops.nt;
    let dm: Vec<C64> = bm.iter().enumerate().map(|(k, c)| c * (mode_of(k, nt).unsigned_abs() as f64 / ops.radius)).collect();
    (values, ops.boundary_from_modes(&dm))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub rel_tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { rel_tol: 1e-12, restart: 60, max_iter: 600 }
    }
}

impl SolverOptions {
    fn gmres(&self) -> GmresOptions {
        GmresOptions { restart: self.restart, max_iter: self.max_iter, rel_tol: self.rel_tol }
    }
}

/// Accept a GMRES outcome whose residual is within a small factor of the target.
fn accept(rel: f64, converged: bool, tol: f64) -> Result<()> {
    if converged || rel <= 100.0 * tol {
        Ok(())
    } else {
        Err(Error::SolverStalled(rel))
    }
}

#[derive(Debug, Clone)]
pub struct DirichletSolution {
    /// Values on the nodes, with the prescribed data as boundary trace.
    pub u: GridFunction,
    /// ∂_ν u on the boundary nodes.
    pub flux: Vec<C64>,
    /// ‖Δu + qu − f‖ / (‖f‖ + ‖qu‖) over the nodes.
    pub residual: f64,
    pub iterations: usize,
}

pub fn solve_dirichlet(q: &Potential, f: &GridFunction, g: &[C64], domain: &Domain) -> Result<DirichletSolution> {
    solve_dirichlet_with(q, f, g, domain, SolverOptions::default())
}

pub fn solve_dirichlet_with(
    q: &Potential,
    f: &GridFunction,
    g: &[C64],
    domain: &Domain,
    opts: SolverOptions,
) -> Result<DirichletSolution> {
    f.check(domain, "right-hand side")?;
    if q.values.len() != domain.n_nodes() {
        return Err(Error::InvalidInput("potential size does not match the grid".into()));
    }
    if g.len() != domain.boundary.len() {
        return Err(Error::InvalidInput(format!("{} boundary values for {} boundary nodes", g.len(), domain.boundary.len())));
    }
    if g.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonFinite("boundary data"));
    }
    let (hg, hflux) = harmonic_with_flux(g, domain);
    let mut iterations = 0;
    let u_vals: Vec<C64> = if q.is_zero() {
        let p = laplace_zero_dirichlet(&f.values, domain, false);
        hg.iter().zip(&p.values).map(|(a, b)| a + b).collect()
    } else {
        let qv = &q.values;
        let src: Vec<C64> = (0..hg.len()).map(|i| f.values[i] - qv[i] * hg[i]).collect();
        let rhs = laplace_zero_dirichlet(&src, domain, false).values;
        let out = gmres(
            |w| {
                let qw: Vec<C64> = w.iter().zip(qv).map(|(a, b)| a * b).collect();
                let p = laplace_zero_dirichlet(&qw, domain, false).values;
                w.iter().zip(&p).map(|(a, b)| a + b).collect()
            },
            &rhs,
            None,
            opts.gmres(),
        );
        accept(out.rel_residual, out.converged, opts.rel_tol)?;
        iterations = out.iterations;
        hg.iter().zip(&out.x).map(|(a, b)| a + b).collect()
    };
    // flux from u = H(g) + Δ₀⁻¹(f − qu)
    let src: Vec<C64> = (0..u_vals.len()).map(|i| f.values[i] - q.values[i] * u_vals[i]).collect();
    let p = laplace_zero_dirichlet(&src, domain, true);
    let flux: Vec<C64> = hflux.iter().zip(&p.flux).map(|(a, b)| a + b).collect();
    let u = GridFunction::with_boundary(u_vals, g.to_vec());
    let lap = laplacian(&u, domain);
    let res: Vec<C64> = (0..u.len()).map(|i| lap.values[i] + q.values[i] * u.values[i] - f.values[i]).collect();
    let qu: Vec<C64> = (0..u.len()).map(|i| q.values[i] * u.values[i]).collect();
    let scale = GridFunction::new(f.values.clone()).l2_norm(domain) + GridFunction::new(qu).l2_norm(domain);
    let rn = GridFunction::new(res).l2_norm(domain);
    let residual = if scale > 0.0 { rn / scale } else { rn };
    Ok(DirichletSolution { u, flux, residual, iterations })
}

// ---------------------------------------------------------------------------
// Partial Cauchy data.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyDataSet {
    /// Indices of the Γ̃ boundary nodes, in angular order.
    pub nodes: Vec<usize>,
    pub theta: Vec<f64>,
    /// Dirichlet input on all boundary nodes, per basis element.
    pub basis: Vec<Vec<C64>>,
    /// u|Γ̃ per basis element.
    pub traces: Vec<Vec<C64>>,
    /// ∂_νu|Γ̃ per basis element.
    pub fluxes: Vec<Vec<C64>>,
    pub max_residual: f64,
}

fn smooth_bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

/// Smooth bumps in θ with evenly spaced centers, each supported inside Γ̃.
pub fn gamma_tilde_basis(domain: &Domain, n_basis: usize) -> Vec<Vec<C64>> {
    let [a, b] = domain.spec.gamma_tilde;
    let step = (b - a) / (n_basis + 1) as f64;
    (0..n_basis)
        .map(|k| {
            let c = a + (k + 1) as f64 * step;
            domain.boundary.iter().map(|p| C64::new(smooth_bump((p.theta - c) / step), 0.0)).collect()
        })
        .collect()
}

pub fn cauchy_data(q: &Potential, domain: &Domain, n_basis: usize) -> Result<CauchyDataSet> {
    let nodes = domain.gamma_tilde_indices();
    if n_basis == 0 || n_basis > nodes.len() {
        return Err(Error::InvalidInput(format!("n_basis {n_basis} must lie in 1..={}", nodes.len())));
    }
    let basis = gamma_tilde_basis(domain, n_basis);
    let f = GridFunction::zeros(domain);
    let sols: Vec<Result<DirichletSolution>> = exec::map_range(n_basis, |k| solve_dirichlet(q, &f, &basis[k], domain));
    let mut traces = Vec::with_capacity(n_basis);
    let mut fluxes = Vec::with_capacity(n_basis);
    let mut max_residual: f64 = 0.0;
    for (k, s) in sols.into_iter().enumerate() {
        let s = s?;
        traces.push(nodes.iter().map(|&j| basis[k][j]).collect());
        fluxes.push(nodes.iter().map(|&j| s.flux[j]).collect());
        max_residual = max_residual.max(s.residual);
    }
    let theta = nodes.iter().map(|&j| domain.boundary[j].theta).collect();
    Ok(CauchyDataSet { nodes, theta, basis, traces, fluxes, max_residual })
}

impl CauchyDataSet {
    /// One row per Γ̃ node per basis element.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["basis_id", "theta", "trace_re", "trace_im", "flux_re", "flux_im"])?;
        for (k, (tr, fl)) in self.traces.iter().zip(&self.fluxes).enumerate() {
            for (j, th) in self.theta.iter().enumerate() {
                w.write_record([
                    k.to_string(),
                    format!("{th:.17e}"),
                    format!("{:.17e}", tr[j].re),
                    format!("{:.17e}", tr[j].im),
                    format!("{:.17e}", fl[j].re),
                    format!("{:.17e}", fl[j].im),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// max |flux₁ − flux₂| over all basis elements and nodes.
    pub fn max_flux_difference(&self, other: &CauchyDataSet) -> f64 {
        self.fluxes
            .iter()
            .zip(&other.fluxes)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max)
    }
}

/// ∫_Γ̃ (v ∂_νu − u ∂_νv) dσ for two solutions given by boundary values and fluxes.
pub fn reciprocity_gap(u: &DirichletSolution, v: &DirichletSolution, domain: &Domain) -> C64 {
    let ub = u.u.boundary.as_ref().expect("solution carries its trace");
    let vb = v.u.boundary.as_ref().expect("solution carries its trace");
    let terms: Vec<C64> = domain
        .gamma_tilde_indices()
        .into_iter()
        .map(|k| (vb[k] * u.flux[k] - ub[k] * v.flux[k]) * domain.boundary[k].weight)
        .collect();
    crate::numeric::pairwise_sum_c(&terms)
}

// ---------------------------------------------------------------------------
// Carleman-weighted solve.

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarlemanOptions {
    /// Degree of the holomorphic pair (α, β) spanning the homogeneous solutions.
    pub degree: usize,
    /// Tikhonov weight on the disk L² norm of (α, β).
    pub lambda: f64,
    pub tau0: f64,
    /// Bound ratios above this are flagged.
    pub c_max: f64,
    pub solver: SolverOptions,
}

impl Default for CarlemanOptions {
    fn default() -> Self {
        CarlemanOptions { degree: 24, lambda: 1e-12, tau0: 5.0, c_max: 1e3, solver: SolverOptions::default() }
    }
}

#[derive(Debug, Clone)]
pub struct CarlemanSolution {
    /// w = e^{−τφ} u, with its boundary trace.
    pub w: GridFunction,
    pub tau: f64,
    /// ‖w‖ / (‖f̃‖/√|τ| + ‖g̃‖_{L²(Γ₀)}); zero when all three vanish.
    pub ratio: f64,
    pub flagged: bool,
    /// Relative residual of the weighted equation, measured by spectral differentiation.
    pub pde_residual: f64,
    /// max |w − g̃| over the Γ₀ nodes.
    pub gamma0_error: f64,
    pub iterations: usize,
}

impl CarlemanSolution {
    /// u = e^{τφ} w on the nodes and the boundary.
    pub fn unweighted(&self, field: &PhaseField) -> GridFunction {
        weight(&self.w, field, self.tau)
    }
}

/// Multiplies by e^{τφ} on the nodes and, when present, on the boundary.
pub fn weight(f: &GridFunction, field: &PhaseField, tau: f64) -> GridFunction {
    let values = f.values.iter().zip(&field.phi).map(|(v, p)| v * (tau * p.re).exp()).collect();
    let boundary = f.boundary.as_ref().map(|b| b.iter().zip(&field.phi_b).map(|(v, p)| v * (tau * p.re).exp()).collect());
    GridFunction { values, boundary }
}

/// Homogeneous solutions e^{iτψ}α + e^{−iτψ}β̄ of the weighted operator,
/// fitted to Γ₀ data through a fixed pseudo-inverse.
struct HomogeneousFit {
    degree: usize,
    radius: f64,
    pinv: DMatrix<C64>,
    gamma0: Vec<usize>,
}

impl HomogeneousFit {
    fn new(field: &PhaseField, tau: f64, domain: &Domain, degree: usize, lambda: f64) -> Result<Self> {
        let gamma0 = domain.gamma0_indices();
        let nc = 2 * (degree + 1);
        let n0 = gamma0.len();
        let r = domain.radius();
        let mut a = DMatrix::<C64>::zeros(n0 + nc, nc);
        for (row, &k) in gamma0.iter().enumerate() {
            let p = &domain.boundary[k];
            let sw = p.weight.sqrt();
            let e = C64::from_polar(1.0, tau * field.phi_b[k].im);
            let zs = p.z / r;
            let mut pw = C64::new(1.0, 0.0);
            for j in 0..=degree {
                a[(row, j)] = e * pw * sw;
                a[(row, degree + 1 + j)] = (pw * e).conj() * sw;
                pw *= zs;
            }
        }
        // ‖(z/R)^j‖²_{L²(disk)} = πR²/(j+1)
        for j in 0..=degree {
            let d = (lambda * std::f64::consts::PI * r * r / (j + 1) as f64).sqrt();
            a[(n0 + j, j)] = C64::new(d, 0.0);
            a[(n0 + degree + 1 + j, degree + 1 + j)] = C64::new(d, 0.0);
        }
        let pinv = a.pseudo_inverse(1e-14).map_err(|e| Error::InvalidInput(format!("homogeneous fit: {e}")))?;
        // keep only the Γ₀ block; the regularization rows have zero target
        let pinv = pinv.columns(0, n0).into_owned();
        let scaled = DMatrix::from_fn(nc, n0, |i, j| pinv[(i, j)] * domain.boundary[gamma0[j]].weight.sqrt());
        Ok(HomogeneousFit { degree, radius: r, pinv: scaled, gamma0 })
    }

    /// Coefficients (α, β̄ in conjugated form) fitting the Γ₀ entries of `bvals`.
    fn coefficients(&self, bvals: &[C64]) -> Vec<C64> {
        let t = nalgebra::DVector::from_iterator(self.gamma0.len(), self.gamma0.iter().map(|&k| bvals[k]));
        (&self.pinv * t).iter().copied().collect()
    }

    fn eval(&self, c: &[C64], z: C64, psi: f64, tau: f64) -> C64 {
        let zs = z / self.radius;
        let d = self.degree;
        let mut a = ZERO;
        let mut b = ZERO;
        for j in (0..=d).rev() {
            a = a * zs + c[j];
            b = b * zs.conj() + c[d + 1 + j];
        }
        let e = C64::from_polar(1.0, tau * psi);
        e * a + e.conj() * b
    }

    fn extend(&self, bvals: &[C64], field: &PhaseField, tau: f64, domain: &Domain) -> GridFunction {
        let c = self.coefficients(bvals);
        let values = exec::map_range(domain.n_nodes(), |i| self.eval(&c, domain.grid.nodes[i], field.phi[i].im, tau));
        let boundary =
            domain.boundary.iter().enumerate().map(|(k, p)| self.eval(&c, p.z, field.phi_b[k].im, tau)).collect();
        GridFunction::with_boundary(values, boundary)
    }
}

/// S y = ¼ R_{Φ,−τ/2} R̃_{Φ,τ/2} y solves (2∂_z + τΦ')(2∂_z̄ + τΦ̄') S y = y.
fn weighted_particular(y: &GridFunction, field: &PhaseField, tau: f64, domain: &Domain) -> Result<GridFunction> {
    let x = r_tilde_phi_tau(y, field, 0.5 * tau, domain)?;
    let s = r_phi_tau(&GridFunction::new(x.values), field, -0.5 * tau, domain)?;
    Ok(s.scale(C64::new(0.25, 0.0)))
}

/// Applies (2∂_z + τΦ')(2∂_z̄ + τΦ̄') spectrally.
pub fn weighted_operator(w: &GridFunction, field: &PhaseField, tau: f64, domain: &Domain) -> GridFunction {
    let (_, dzb) = dz_dzbar(w, domain);
    let inner: Vec<C64> =
        (0..w.len()).map(|i| 2.0 * dzb.values[i] + tau * field.dphi[i].conj() * w.values[i]).collect();
    let inner = GridFunction::new(inner);
    let (dz, _) = dz_dzbar(&inner, domain);
    GridFunction::new((0..w.len()).map(|i| 2.0 * dz.values[i] + tau * field.dphi[i] * inner.values[i]).collect())
}

/// Solves Δu + q u = f with u|Γ₀ = g in the weighted unknown w = e^{−τφ}u.
/// Inputs are already weighted: `f_w = e^{−τφ} f`, `g_w = e^{−τφ} g` on the
/// boundary nodes (only Γ₀ entries are read). Among the solutions, the one
/// whose homogeneous part has least disk norm in the (α, β) representation
/// is selected; u|Γ̃ is left free.
pub fn carleman_solve_weighted(
    q: &Potential,
    f_w: &GridFunction,
    g_w: &[C64],
    field: &PhaseField,
    tau: f64,
    domain: &Domain,
    opts: &CarlemanOptions,
) -> Result<CarlemanSolution> {
    f_w.check(domain, "weighted source")?;
    if g_w.len() != domain.boundary.len() {
        return Err(Error::InvalidInput(format!("{} boundary values for {} boundary nodes", g_w.len(), domain.boundary.len())));
    }
    if !tau.is_finite() || tau.abs() < opts.tau0 {
        return Err(Error::InvalidInput(format!("|tau| = {} below tau0 = {}", tau.abs(), opts.tau0)));
    }
    let fit = HomogeneousFit::new(field, tau, domain, opts.degree, opts.lambda)?;
    // L y = S y − E (S y)|Γ₀
    let apply_l = |y: &GridFunction| -> Result<GridFunction> {
        let s = weighted_particular(y, field, tau, domain)?;
        let e = fit.extend(s.boundary.as_ref().expect("transforms carry traces"), field, tau, domain);
        Ok(s.sub(&e))
    };
    let eg = fit.extend(g_w, field, tau, domain);
    let qv = &q.values;
    let mut iterations = 0;
    let w_vals: Vec<C64> = if q.is_zero() {
        apply_l(f_w)?.add(&eg).values
    } else {
        let rhs = apply_l(f_w)?.add(&eg).values;
        let mut err = None;
        let out = gmres(
            |x| {
                let qx = GridFunction::new(x.iter().zip(qv).map(|(a, b)| a * b).collect());
                match apply_l(&qx) {
                    Ok(l) => x.iter().zip(&l.values).map(|(a, b)| a + b).collect(),
                    Err(e) => {
                        err = Some(e);
                        vec![ZERO; x.len()]
                    }
                }
            },
            &rhs,
            None,
            opts.solver.gmres(),
        );
        if let Some(e) = err {
            return Err(e);
        }
        accept(out.rel_residual, out.converged, opts.solver.rel_tol)?;
        iterations = out.iterations;
        out.x
    };
    // Re-assemble with traces: w = L(f̃ − q w) + E g̃
    let src = GridFunction::new((0..w_vals.len()).map(|i| f_w.values[i] - qv[i] * w_vals[i]).collect());
    let w = apply_l(&src)?.add(&eg);
    let wb = w.boundary.as_ref().expect("trace");
    let gamma0_error = domain.gamma0_indices().iter().map(|&k| (wb[k] - g_w[k]).norm()).fold(0.0, f64::max);
    let lw = weighted_operator(&w, field, tau, domain);
    let res = GridFunction::new((0..w.len()).map(|i| lw.values[i] + qv[i] * w.values[i] - f_w.values[i]).collect());
    let fn_ = f_w.l2_norm(domain);
    let wn = w.l2_norm(domain);
    let pde_residual = {
        let scale = fn_.max(tau * tau * wn * 1e-3).max(f64::MIN_POSITIVE);
        res.l2_norm(domain) / scale
    };
    let gn = boundary_norm(g_w, domain, true);
    let denom = fn_ / tau.abs().sqrt() + gn;
    let ratio = if wn == 0.0 { 0.0 } else { wn / denom };
    Ok(CarlemanSolution { w, tau, ratio, flagged: !(ratio <= opts.c_max), pde_residual, gamma0_error, iterations })
}

/// Unweighted entry point: f on the nodes and g on the boundary nodes.
pub fn carleman_solve(
    q: &Potential,
    f: &GridFunction,
    g: &[C64],
    field: &PhaseField,
    tau: f64,
    domain: &Domain,
    opts: &CarlemanOptions,
) -> Result<CarlemanSolution> {
    let f_w = weight(f, field, -tau);
    let g_w: Vec<C64> = g.iter().zip(&field.phi_b).map(|(v, p)| v * (-tau * p.re).exp()).collect();
    carleman_solve_weighted(q, &f_w, &g_w, field, tau, domain, opts)
}

/// L² norm over Γ₀ (or Γ̃) of samples given on the boundary nodes.
fn boundary_norm(vals: &[C64], domain: &Domain, gamma0: bool) -> f64 {
    let t: Vec<f64> = domain
        .boundary
        .iter()
        .zip(vals)
        .filter(|(p, _)| p.on_gamma0 == gamma0)
        .map(|(p, v)| v.norm_sqr() * p.weight)
        .collect();
    pairwise_sum(&t).sqrt()
}

// ---------------------------------------------------------------------------
// Carleman estimate check.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlemanReport {
    pub tau_values: Vec<f64>,
    /// [τ‖ue^{τφ}‖², ‖ue^{τφ}‖²_{H¹}, ‖∂_νu e^{τφ}‖²_{L²(Γ₀)}, τ²‖|Φ'|ue^{τφ}‖²]
    pub lhs_terms: Vec<[f64; 4]>,
    /// [‖Δu e^{τφ}‖², τ∫_Γ̃ |∂_νu|² e^{2τφ}]
    pub rhs_terms: Vec<[f64; 2]>,
    pub ratios: Vec<f64>,
    pub ratio_max: f64,
}

pub fn carleman_estimate_check(u: &GridFunction, field: &PhaseField, taus: &[f64], domain: &Domain) -> Result<CarlemanReport> {
    u.check(domain, "carleman sample")?;
    let umax = u.sup_norm();
    if u.values.iter().any(|v| v.im.abs() > 1e-12 * umax.max(1e-300)) {
        return Err(Error::Hypothesis("u must be real-valued".into()));
    }
    let ops = &domain.polar;
    let modes = ops.to_modes(&u.values);
    let bvals = match &u.boundary {
        Some(b) => b.clone(),
        None => ops.boundary_from_modes(&ops.modes_at_boundary(&modes)),
    };
    let bmax = bvals.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if bmax > 1e-8 * umax.max(1e-300) {
        return Err(Error::Hypothesis(format!("u does not vanish on the boundary (max |u| = {bmax:.3e})")));
    }
    let dn = ops.boundary_from_modes(&ops.radial_derivative_at_boundary(&modes));
    let (dzu, dzbu) = dz_dzbar(u, domain);
    let lap = laplacian(u, domain);
    let w = &domain.grid.weights;
    let n = u.len();
    let mut lhs_terms = Vec::with_capacity(taus.len());
    let mut rhs_terms = Vec::with_capacity(taus.len());
    let mut ratios = Vec::with_capacity(taus.len());
    for &tau in taus {
        let mut p_l2 = Vec::with_capacity(n);
        let mut p_grad = Vec::with_capacity(n);
        let mut p_phi = Vec::with_capacity(n);
        let mut p_lap = Vec::with_capacity(n);
        for i in 0..n {
            let e = (tau * field.phi[i].re).exp();
            let uv = u.values[i].re;
            let d1 = (dzu.values[i] + dzbu.values[i]).re;
            let d2 = (C64::new(0.0, 1.0) * (dzu.values[i] - dzbu.values[i])).re;
            let dp = field.dphi[i];
            // ∇(u e^{τφ}) = e^{τφ}(∇u + τu∇φ), ∇φ = (Re Φ', −Im Φ')
            let g1 = e * (d1 + tau * uv * dp.re);
            let g2 = e * (d2 - tau * uv * dp.im);
            let v2 = (e * uv).powi(2);
            p_l2.push(v2 * w[i]);
            p_grad.push((g1 * g1 + g2 * g2) * w[i]);
            p_phi.push(dp.norm_sqr() * v2 * w[i]);
            p_lap.push((e * lap.values[i].re).powi(2) * w[i]);
        }
        let l2 = pairwise_sum(&p_l2);
        let grad = pairwise_sum(&p_grad);
        let phi_term = pairwise_sum(&p_phi);
        let lap_term = pairwise_sum(&p_lap);
        let mut p_g0 = Vec::new();
        let mut p_gt = Vec::new();
        for (k, p) in domain.boundary.iter().enumerate() {
            let v = dn[k].re.powi(2) * (2.0 * tau * field.phi_b[k].re).exp() * p.weight;
            if p.on_gamma0 {
                p_g0.push(v);
            } else {
                p_gt.push(v);
            }
        }
        let lhs = [tau * l2, l2 + grad, pairwise_sum(&p_g0), tau * tau * phi_term];
        let rhs = [lap_term, tau * pairwise_sum(&p_gt)];
        let l: f64 = lhs.iter().sum();
        let r: f64 = rhs.iter().sum();
        ratios.push(if l == 0.0 { 0.0 } else { l / r });
        lhs_terms.push(lhs);
        rhs_terms.push(rhs);
    }
    let ratio_max = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(CarlemanReport { tau_values: taus.to_vec(), lhs_terms, rhs_terms, ratios, ratio_max })
}

/// Smallest constant covering every report at each τ, and its spread across τ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlemanConstant {
    pub tau_values: Vec<f64>,
    pub per_tau: Vec<f64>,
    pub constant: f64,
    /// max/min of `per_tau`.
    pub spread: f64,
}

pub fn carleman_constant(reports: &[CarlemanReport]) -> Result<CarlemanConstant> {
    let first = reports.first().ok_or_else(|| Error::InvalidInput("no reports".into()))?;
    let nt = first.tau_values.len();
    if reports.iter().any(|r| r.tau_values != first.tau_values) {
        return Err(Error::InvalidInput("reports use different tau sweeps".into()));
    }
    let per_tau: Vec<f64> = (0..nt).map(|j| reports.iter().map(|r| r.ratios[j]).fold(0.0, f64::max)).collect();
    let constant = per_tau.iter().cloned().fold(0.0, f64::max);
    let lo = per_tau.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = if lo > 0.0 { constant / lo } else { f64::INFINITY };
    Ok(CarlemanConstant { tau_values: first.tau_values.clone(), per_tau, constant, spread })
}

/// Real H¹₀ samples (1 − |z|²/R²)·p(x₁, x₂) with p a random polynomial of
/// total degree ≤ 4, coefficients uniform in [−1, 1].
pub fn random_h10_samples(domain: &Domain, count: usize, seed: u64) -> Vec<GridFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r2 = domain.radius().powi(2);
    (0..count)
        .map(|_| {
            let mut c = Vec::new();
            for i in 0..=4 {
                for j in 0..=(4 - i) {
                    c.push((i, j, rng.random_range(-1.0..1.0)));
                }
            }
            GridFunction::from_fn(domain, |z| {
                let p: f64 = c.iter().map(|&(i, j, a)| a * z.re.powi(i) * z.im.powi(j as i32)).sum();
                C64::new((1.0 - z.norm_sqr() / r2) * p, 0.0)
            })
        })
        .map(|mut g| {
            // the boundary factor is exactly zero there
            if let Some(b) = g.boundary.as_mut() {
                b.iter_mut().for_each(|v| *v = ZERO);
            }
            g
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Conductivity reduction.

#[derive(Debug, Clone, PartialEq)]
pub enum Conductivity {
    Expr(ExprSum),
    Sampled(GridFunction),
}

/// q = Δ√γ / √γ.
pub fn conductivity_to_potential(gamma: &Conductivity, domain: &Domain) -> Result<Potential> {
    match gamma {
        Conductivity::Expr(e) => {
            e.validate().map_err(Error::InvalidInput)?;
            let mut q = Vec::with_capacity(domain.n_nodes());
            for &z in &domain.grid.nodes {
                let j = e.jet(z);
                if !(j.value > 0.0) {
                    return Err(Error::InvalidInput(format!("conductivity {} not positive at {z}", j.value)));
                }
                let g2 = j.grad[0] * j.grad[0] + j.grad[1] * j.grad[1];
                q.push(C64::new(j.laplacian / (2.0 * j.value) - g2 / (4.0 * j.value * j.value), 0.0));
            }
            Potential::checked(q, Smoothness::AnalyticExpr, domain)
        }
        Conductivity::Sampled(g) => {
            g.check(domain, "conductivity")?;
            if let Some(v) = g.values.iter().find(|v| !(v.re > 0.0)) {
                return Err(Error::InvalidInput(format!("conductivity real part {} not positive", v.re)));
            }
            let s = g.map(|v| v.sqrt());
            let lap = laplacian(&s, domain);
            let q = lap.values.iter().zip(&s.values).map(|(l, v)| l / v).collect();
            Potential::checked(q, Smoothness::Sampled, domain)
        }
    }
}
