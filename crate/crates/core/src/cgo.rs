//! Layered CGO solutions of (Δ + q)u = 0 vanishing on Γ₀.
//!
//! With τ_s = ±τ the solution is
//!
//! ```text
//! u = e^{τ_sΦ}(a + c₀/τ_s) + e^{τ_sΦ̄}conj(a + c₁/τ_s) + e^{τ_sφ}(w₁₁ + w₁₂)
//! ```
//!
//! where τ_s = τ for u₁ (potential q₁) and τ_s = −τ for v (potential q₂).
//! Every layer is stored in weighted form, i.e. multiplied by e^{−τ_sφ}, so
//! that large τ never overflows and u₁·v pairs without exponentials.
//! Correctors are reported in the conventions u₁ = e^{τΦ}(a + a₀/τ) + …
//! and v = e^{−τΦ}(a + b₀/τ) + …, hence (b₀, b₁) = −(c₀, c₁).

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{o_epsilon_mask, Domain};
use crate::holo::{CriticalPoint, HolomorphicFunction, PhaseField};
use crate::pde::{carleman_solve_weighted, weighted_operator, CarlemanOptions, Potential};
use crate::transforms::{dbar_inverse, dz_inverse, laplacian, r_phi_tau, r_tilde_phi_tau, GridFunction};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

// ---------------------------------------------------------------------------
// Hermite polynomials.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HermiteKind {
    /// Matches ∂_z-jets of ∂_z̄⁻¹(a q₁); polynomial in z.
    M1,
    /// Matches ∂_z-jets of ∂_z̄⁻¹(a q₂); polynomial in z.
    M2,
    /// Matches ∂_z̄-jets of ∂_z⁻¹(ā q₁); polynomial in z̄.
    M3,
    /// Matches ∂_z̄-jets of ∂_z⁻¹(ā q₂); polynomial in z̄.
    M4,
}

impl HermiteKind {
    pub fn in_zbar(self) -> bool {
        matches!(self, HermiteKind::M3 | HermiteKind::M4)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermitePolynomial {
    pub kind: HermiteKind,
    /// Σ c_k w^k with w = z (M1, M2) or w = z̄ (M3, M4).
    pub coefficients: Vec<C64>,
    /// max over points and j ≤ 2 of |jet mismatch|.
    pub jet_residual: f64,
}

impl HermitePolynomial {
    fn variable(&self, z: C64) -> C64 {
        if self.kind.in_zbar() {
            z.conj()
        } else {
            z
        }
    }

    pub fn eval(&self, z: C64) -> C64 {
        let w = self.variable(z);
        self.coefficients.iter().rev().fold(ZERO, |acc, c| acc * w + c)
    }

    /// (M, M', M'') in its own variable.
    pub fn jet(&self, z: C64) -> [C64; 3] {
        let p = HolomorphicFunction::new(self.coefficients.clone());
        p.jet(self.variable(z))
    }
}

/// Coefficients of the polynomial of degree < 3ℓ with prescribed values and
/// first two derivatives at ℓ distinct points, by confluent divided
/// differences in Newton form.
pub fn hermite_interpolate(points: &[C64], jets: &[[C64; 3]]) -> Result<Vec<C64>> {
    if points.len() != jets.len() {
        return Err(Error::InvalidInput(format!("{} points for {} jets", points.len(), jets.len())));
    }
    if points.is_empty() {
        return Ok(vec![ZERO]);
    }
    let scale = points.iter().map(|z| z.norm()).fold(1.0, f64::max);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if (points[i] - points[j]).norm() <= 1e-8 * scale {
                return Err(Error::Confluent(format!("{} and {} coincide", points[i], points[j])));
            }
        }
    }
    let n = 3 * points.len();
    let x: Vec<C64> = points.iter().flat_map(|&z| [z; 3]).collect();
    let src = |i: usize| i / 3;
    // table[k][i] = f[x_i, …, x_{i+k}]
    let mut col: Vec<C64> = (0..n).map(|i| jets[src(i)][0]).collect();
    let mut newton = vec![col[0]];
    for k in 1..n {
        let next: Vec<C64> = (0..n - k)
            .map(|i| {
                if (x[i + k] - x[i]).norm() == 0.0 {
                    let d = jets[src(i)][k];
                    if k == 1 {
                        d
                    } else {
                        d / 2.0
                    }
                } else {
                    (col[i + 1] - col[i]) / (x[i + k] - x[i])
                }
            })
            .collect();
        newton.push(next[0]);
        col = next;
    }
    // Horner expansion of Σ d_k Π_{j<k}(w − x_j) into monomials.
    let mut c = vec![ZERO; n];
    for k in (0..n).rev() {
        // c ← c·(w − x_k) + d_k
        let mut shifted = vec![ZERO; n];
        for m in 0..n {
            if m + 1 < n {
                shifted[m + 1] += c[m];
            }
            shifted[m] -= c[m] * x[k];
        }
        shifted[0] += newton[k];
        c = shifted;
    }
    Ok(c)
}

/// The same interpolant from the confluent Vandermonde system; an
/// independent route used to cross-check [`hermite_interpolate`].
pub fn hermite_vandermonde(points: &[C64], jets: &[[C64; 3]]) -> Result<Vec<C64>> {
    let n = 3 * points.len();
    let mut a = DMatrix::<C64>::zeros(n, n);
    let mut b = nalgebra::DVector::<C64>::zeros(n);
    for (p, (&z, jet)) in points.iter().zip(jets).enumerate() {
        for j in 0..3 {
            let row = 3 * p + j;
            b[row] = jet[j];
            for k in j..n {
                let f: f64 = ((k - j + 1)..=k).map(|v| v as f64).product();
                a[(row, k)] = z.powu((k - j) as u32) * f;
            }
        }
    }
    a.lu().solve(&b).map(|x| x.iter().copied().collect()).ok_or_else(|| Error::Confluent("singular confluent Vandermonde system".into()))
}

/// ∂_z-jets (or ∂_z̄-jets) of a grid field at the given points by spectral
/// differentiation of its polar expansion.
pub fn field_jets(f: &GridFunction, domain: &Domain, points: &[C64], in_zbar: bool) -> Result<Vec<[C64; 3]>> {
    f.check(domain, "jet source")?;
    if let Some(z) = points.iter().find(|z| !domain.contains(**z)) {
        return Err(Error::TargetOutside(*z));
    }
    let ops = &domain.polar;
    let m0 = ops.to_modes(&f.values);
    let pick = |m: &[C64]| {
        let (dz, dzb) = ops.dz_dzbar_modes(m);
        if in_zbar {
            dzb
        } else {
            dz
        }
    };
    let m1 = pick(&m0);
    let m2 = pick(&m1);
    Ok(points.iter().map(|&z| [ops.eval_point(&m0, z), ops.eval_point(&m1, z), ops.eval_point(&m2, z)]).collect())
}

/// Hermite polynomial matching the jets of `f` at the critical set.
pub fn hermite_polynomials(f: &GridFunction, domain: &Domain, critical: &[CriticalPoint], kind: HermiteKind) -> Result<HermitePolynomial> {
    let in_zbar = kind.in_zbar();
    let pts: Vec<C64> = critical.iter().map(|c| c.z).collect();
    let jets = field_jets(f, domain, &pts, in_zbar)?;
    // Interpolate in the variable w; for z̄-polynomials the nodes are z̄_k.
    let nodes: Vec<C64> = if in_zbar { pts.iter().map(|z| z.conj()).collect() } else { pts.clone() };
    let coefficients = hermite_interpolate(&nodes, &jets)?;
    let mut h = HermitePolynomial { kind, coefficients, jet_residual: 0.0 };
    let scale = jets.iter().flat_map(|j| j.iter()).map(|v| v.norm()).fold(1.0, f64::max);
    h.jet_residual = pts
        .iter()
        .zip(&jets)
        .map(|(&z, jet)| {
            let m = h.jet(z);
            (0..3).map(|j| (m[j] - jet[j]).norm()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    if h.jet_residual > 1e-8 * scale {
        return Err(Error::FitResidual { residual: h.jet_residual, tol: 1e-8 * scale });
    }
    Ok(h)
}

// ---------------------------------------------------------------------------
// Partition of unity.

#[derive(Debug, Clone)]
pub struct Partition {
    pub e1: GridFunction,
    pub e2: GridFunction,
    pub rho: f64,
    pub eps: f64,
}

/// C^∞ step: 0 for t ≤ 0, 1 for t ≥ 1.
fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    a / (a + b)
}

/// e₂ = Π_k s((|z − z̃_k| − ρ)/ρ) vanishes on ∪B(z̃_k, ρ) and equals one
/// outside ∪B(z̃_k, 2ρ); e₁ = 1 − e₂ is supported in the halos and must
/// avoid the collar 𝒪_ε.
pub fn partition_e1e2(domain: &Domain, critical: &[C64], eps: f64, rho: f64) -> Result<Partition> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidInput(format!("halo radius {rho} must be positive")));
    }
    o_epsilon_mask(domain, eps)?;
    let r = domain.radius();
    for &z in critical {
        if z.norm() + 2.0 * rho > r - eps {
            return Err(Error::PartitionOverlap(format!(
                "halo of radius {:.3} around {z} reaches the collar of width {eps:.3}; use a smaller rho or eps",
                2.0 * rho
            )));
        }
    }
    let e2_at = |z: C64| critical.iter().map(|&c| smooth_step(((z - c).norm() - rho) / rho)).product::<f64>();
    let e2v: Vec<C64> = domain.grid.nodes.iter().map(|&z| C64::new(e2_at(z), 0.0)).collect();
    let e2b: Vec<C64> = domain.boundary.iter().map(|p| C64::new(e2_at(p.z), 0.0)).collect();
    let e1v = e2v.iter().map(|v| C64::new(1.0 - v.re, 0.0)).collect();
    let e1b = e2b.iter().map(|v| C64::new(1.0 - v.re, 0.0)).collect();
    Ok(Partition { e1: GridFunction::with_boundary(e1v, e1b), e2: GridFunction::with_boundary(e2v, e2b), rho, eps })
}

// ---------------------------------------------------------------------------
// First corrector.

/// Everything the first layer produces; reused by the identity analysis.
#[derive(Debug, Clone)]
pub struct FirstLayer {
    /// τ_s = ±τ.
    pub tau_s: f64,
    /// D₁ = ∂_z̄⁻¹(a q) − M (with trace).
    pub d1: GridFunction,
    /// D₃ = ∂_z⁻¹(ā q) − M̃ (with trace).
    pub d3: GridFunction,
    /// R̃_{Φ,τ_s}(e₁D₁), with trace.
    pub rt: GridFunction,
    /// R_{Φ,−τ_s}(e₁D₃), with trace.
    pub rr: GridFunction,
    /// X₁ = e₂D₁/(4τ_sΦ'), X₃ = e₂D₃/(4τ_sΦ̄'), with traces.
    pub x1: GridFunction,
    pub x3: GridFunction,
    /// w₁₁ in weighted form, with trace.
    pub w11: GridFunction,
    /// ‖w₁₁ operator residual‖ / ‖aq‖ for the cancellation identity.
    pub cancellation_residual: f64,
}

fn psi_factor(field: &PhaseField, tau_s: f64) -> (Vec<C64>, Vec<C64>) {
    let e = field.phi.iter().map(|p| C64::from_polar(1.0, tau_s * p.im)).collect();
    let eb = field.phi_b.iter().map(|p| C64::from_polar(1.0, tau_s * p.im)).collect();
    (e, eb)
}

fn quotient(e2: &[C64], d: &[C64], den: &[C64], scale: f64) -> Vec<C64> {
    e2.iter()
        .zip(d)
        .zip(den)
        .map(|((e, d), g)| if e.re == 0.0 { ZERO } else { e * d / (g * scale) })
        .collect()
}

/// Assembles w₁₁ for the sign carried by `tau_s` and checks that the
/// weighted operator maps it to −q(a e^{iτ_sψ} + ā e^{−iτ_sψ}) minus the two
/// Laplacian terms of the e₂ quotients.
pub fn assemble_first_corrector(
    a: &HolomorphicFunction,
    q: &Potential,
    field: &PhaseField,
    tau_s: f64,
    m_pair: (&HermitePolynomial, &HermitePolynomial),
    partition: &Partition,
    f_pair: (&GridFunction, &GridFunction),
    domain: &Domain,
) -> Result<FirstLayer> {
    let n = domain.n_nodes();
    let nb = domain.boundary.len();
    let (m1, m3) = m_pair;
    let (f1, f3) = f_pair;
    let sub_poly = |f: &GridFunction, m: &HermitePolynomial| -> GridFunction {
        let values = domain.grid.nodes.iter().zip(&f.values).map(|(&z, v)| v - m.eval(z)).collect();
        let boundary = f.boundary.as_ref().map(|b| domain.boundary.iter().zip(b).map(|(p, v)| v - m.eval(p.z)).collect());
        GridFunction { values, boundary }
    };
    let d1 = sub_poly(f1, m1);
    let d3 = sub_poly(f3, m3);
    let g1 = GridFunction::new(partition.e1.values.iter().zip(&d1.values).map(|(e, d)| e * d).collect());
    let g3 = GridFunction::new(partition.e1.values.iter().zip(&d3.values).map(|(e, d)| e * d).collect());
    let rt = r_tilde_phi_tau(&g1, field, tau_s, domain)?;
    let rr = r_phi_tau(&g3, field, -tau_s, domain)?;
    let rt = with_zero_trace(rt, nb);
    let rr = with_zero_trace(rr, nb);
    let dphi_c: Vec<C64> = field.dphi.iter().map(|d| d.conj()).collect();
    let dphi_bc: Vec<C64> = field.dphi_b.iter().map(|d| d.conj()).collect();
    let e2b = partition.e2.boundary.as_ref().expect("partition carries traces");
    let d1b = d1.boundary.as_ref().ok_or(Error::InvalidInput("D1 trace missing".into()))?;
    let d3b = d3.boundary.as_ref().ok_or(Error::InvalidInput("D3 trace missing".into()))?;
    let x1 = GridFunction::with_boundary(
        quotient(&partition.e2.values, &d1.values, &field.dphi, 4.0 * tau_s),
        quotient(e2b, d1b, &field.dphi_b, 4.0 * tau_s),
    );
    let x3 = GridFunction::with_boundary(
        quotient(&partition.e2.values, &d3.values, &dphi_c, 4.0 * tau_s),
        quotient(e2b, d3b, &dphi_bc, 4.0 * tau_s),
    );
    let (e, eb) = psi_factor(field, tau_s);
    let combine =
        |e: C64, rt: C64, rr: C64, x1: C64, x3: C64| -0.25 * e * rt - 0.25 * e.conj() * rr - e * x1 - e.conj() * x3;
    let values: Vec<C64> =
        (0..n).map(|i| combine(e[i], rt.values[i], rr.values[i], x1.values[i], x3.values[i])).collect();
    let rtb = rt.boundary.as_ref().unwrap();
    let rrb = rr.boundary.as_ref().unwrap();
    let x1b = x1.boundary.as_ref().unwrap();
    let x3b = x3.boundary.as_ref().unwrap();
    let boundary: Vec<C64> = (0..nb).map(|k| combine(eb[k], rtb[k], rrb[k], x1b[k], x3b[k])).collect();
    let w11 = GridFunction::with_boundary(values, boundary);

    // Cancellation: L w₁₁ + q(a e + ā ē) + e ΔX₁ + ē ΔX₃ = 0.
    let lw = weighted_operator(&w11, field, tau_s, domain);
    let lx1 = laplacian(&x1, domain);
    let lx3 = laplacian(&x3, domain);
    let av = a.sample(&domain.grid.nodes);
    let mut res = Vec::with_capacity(n);
    let mut aq = Vec::with_capacity(n);
    for i in 0..n {
        let src = q.values[i] * (av[i] * e[i] + av[i].conj() * e[i].conj());
        res.push(lw.values[i] + src + e[i] * lx1.values[i] + e[i].conj() * lx3.values[i]);
        aq.push(q.values[i] * av[i]);
    }
    let aq_norm = GridFunction::new(aq).l2_norm(domain);
    let resg = GridFunction::new(res);
    let res_norm = resg.l2_norm(domain);
    let cancellation_residual = if aq_norm == 0.0 { res_norm } else { res_norm / aq_norm };
    Ok(FirstLayer { tau_s, d1, d3, rt, rr, x1, x3, w11, cancellation_residual })
}

fn with_zero_trace(f: GridFunction, nb: usize) -> GridFunction {
    if f.boundary.is_some() {
        f
    } else {
        GridFunction::with_boundary(f.values, vec![ZERO; nb])
    }
}

// ---------------------------------------------------------------------------
// Correctors.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectorFit {
    /// (c₀, c₁) with c₀ + conj(c₁) = rhs on ∂Ω, in the τ_s convention.
    pub c0: HolomorphicFunction,
    pub c1: HolomorphicFunction,
    /// max |c₀ + c̄₁ − rhs| over the Γ₀ nodes.
    pub gamma0_misfit: f64,
    pub rhs_scale: f64,
}

/// Holomorphic (c₀, c₁) with (c₀ + c̄₁)|Γ₀ = D₁/(4Φ') + D₃/(4Φ̄').
///
/// The right side is smooth on the whole circle (Φ' has no boundary zeros),
/// so its Fourier series splits into nonnegative modes (c₀) and negative
/// modes (c̄₁); the condition then holds on all of ∂Ω up to truncation.
pub fn fit_correctors(layer: &FirstLayer, field: &PhaseField, domain: &Domain) -> Result<CorrectorFit> {
    let d1b = layer.d1.boundary.as_ref().ok_or(Error::InvalidInput("D1 trace missing".into()))?;
    let d3b = layer.d3.boundary.as_ref().ok_or(Error::InvalidInput("D3 trace missing".into()))?;
    let rhs: Vec<C64> = (0..domain.boundary.len())
        .map(|k| {
            let g = field.dphi_b[k];
            d1b[k] / (4.0 * g) + d3b[k] / (4.0 * g.conj())
        })
        .collect();
    if rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("corrector boundary data"));
    }
    let nb = rhs.len();
    let r = domain.radius();
    let half = (nb / 2) as i64 - 1;
    let coef = |m: i64| -> C64 {
        let s: Vec<C64> =
            domain.boundary.iter().zip(&rhs).map(|(p, v)| v * C64::from_polar(1.0, -(m as f64) * p.theta)).collect();
        crate::numeric::pairwise_sum_c(&s) / nb as f64
    };
    let c0: Vec<C64> = (0..=half).map(|m| coef(m) / r.powi(m as i32)).collect();
    let mut c1: Vec<C64> = vec![ZERO];
    c1.extend((1..=half).map(|m| coef(-m).conj() / r.powi(m as i32)));
    let trim = |mut v: Vec<C64>| {
        let scale = v.iter().enumerate().map(|(m, c)| c.norm() * r.powi(m as i32)).fold(0.0, f64::max);
        while v.len() > 1 && v.last().unwrap().norm() * r.powi(v.len() as i32 - 1) <= 1e-16 * scale {
            v.pop();
        }
        v
    };
    let c0 = HolomorphicFunction::new(trim(c0));
    let c1 = HolomorphicFunction::new(trim(c1));
    let rhs_scale = rhs.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let gamma0_misfit = domain
        .gamma0_indices()
        .iter()
        .map(|&k| {
            let z = domain.boundary[k].z;
            (c0.eval(z) + c1.eval(z).conj() - rhs[k]).norm()
        })
        .fold(0.0, f64::max);
    Ok(CorrectorFit { c0, c1, gamma0_misfit, rhs_scale })
}

// ---------------------------------------------------------------------------
// Remainder and full build.

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgoOptions {
    /// Halo radius ρ around the critical set, relative to the inradius.
    pub rho: f64,
    /// Collar width ε, relative to the inradius.
    pub eps: f64,
    pub carleman: CarlemanOptions,
}

impl Default for CgoOptions {
    fn default() -> Self {
        CgoOptions { rho: 0.15, eps: 0.15, carleman: CarlemanOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNorms {
    pub leading: f64,
    pub first: f64,
    pub first_on_boundary: f64,
    pub remainder: f64,
    pub total: f64,
}

/// Per-layer diagnostics, serialized as the build ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgoLedger {
    pub sign: i8,
    pub tau: f64,
    pub norms: LayerNorms,
    pub hermite_residual: f64,
    pub cancellation_residual: f64,
    pub corrector_misfit: f64,
    pub remainder_ratio: f64,
    pub remainder_pde_residual: f64,
    pub remainder_gamma0_error: f64,
    pub remainder_iterations: usize,
    /// ‖e^{−τ_sφ}(Δ + q)u‖_{L²}.
    pub total_pde_residual: f64,
    /// max |e^{−τ_sφ}u| over the Γ₀ nodes.
    pub gamma0_trace: f64,
    /// sup |e^{−τ_sφ}u| over nodes and boundary.
    pub total_sup: f64,
    pub max_q: f64,
    pub pde_ok: bool,
    pub trace_ok: bool,
}

#[derive(Debug, Clone)]
pub struct CGOSolution {
    /// +1 for u₁, −1 for v.
    pub sign: i8,
    pub tau: f64,
    pub a: HolomorphicFunction,
    /// (a₀, a₁) for u₁ or (b₀, b₁) for v, in the conventions of the module docs.
    pub correctors: (HolomorphicFunction, HolomorphicFunction),
    pub m_polys: (HermitePolynomial, HermitePolynomial),
    pub partition: Partition,
    pub first_layer: FirstLayer,
    /// Weighted layers e^{−τ_sφ}·(…), each with its boundary trace.
    pub leading: GridFunction,
    pub u11: GridFunction,
    pub u12: GridFunction,
    pub total: GridFunction,
    pub ledger: CgoLedger,
}

impl CGOSolution {
    pub fn tau_s(&self) -> f64 {
        self.sign as f64 * self.tau
    }

    /// The solution itself, e^{τ_sφ}·total; overflows for large τ·max|φ|.
    pub fn unweighted_total(&self, field: &PhaseField) -> GridFunction {
        crate::pde::weight(&self.total, field, self.tau_s())
    }

    pub fn ledger_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.ledger)?)
    }
}

/// Solves for w₁₂ with e^{−τ_sφ}(Δ + q)(e^{τ_sφ}w₁₂) = −q w₁₁ + h and the Γ₀
/// trace that makes the full solution vanish there.
pub fn solve_remainder(
    q: &Potential,
    field: &PhaseField,
    tau_s: f64,
    w11: &GridFunction,
    h: &GridFunction,
    gamma0_target: &[C64],
    domain: &Domain,
    opts: &CarlemanOptions,
) -> Result<crate::pde::CarlemanSolution> {
    let f: GridFunction = GridFunction::new((0..domain.n_nodes()).map(|i| -q.values[i] * w11.values[i] + h.values[i]).collect());
    carleman_solve_weighted(q, &f, gamma0_target, field, tau_s, domain, opts)
}

fn sup_with_trace(f: &GridFunction) -> f64 {
    let b = f.boundary.as_ref().map_or(0.0, |b| b.iter().map(|v| v.norm()).fold(0.0, f64::max));
    f.sup_norm().max(b)
}

/// Builds u₁ (sign = +1, potential q₁) or v (sign = −1, potential q₂).
pub fn build_cgo(
    q: &Potential,
    field: &PhaseField,
    a: &HolomorphicFunction,
    tau: f64,
    sign: i8,
    domain: &Domain,
    opts: &CgoOptions,
) -> Result<CGOSolution> {
    if sign != 1 && sign != -1 {
        return Err(Error::InvalidInput(format!("sign must be +1 or -1, got {sign}")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidInput(format!("tau must be positive, got {tau}")));
    }
    let tau_s = sign as f64 * tau;
    let n = domain.n_nodes();
    let nb = domain.boundary.len();
    let critical = field.phase.critical_points.clone();
    let (k1, k3) = if sign > 0 { (HermiteKind::M1, HermiteKind::M3) } else { (HermiteKind::M2, HermiteKind::M4) };

    let (av, avb) = a.sample_domain(domain);
    let aq = GridFunction::new((0..n).map(|i| av[i] * q.values[i]).collect());
    let abq = GridFunction::new((0..n).map(|i| av[i].conj() * q.values[i]).collect());
    let f1 = dbar_inverse(&aq, domain).map_err(|e| e.in_layer("hermite"))?;
    let f3 = dz_inverse(&abq, domain).map_err(|e| e.in_layer("hermite"))?;
    let m1 = hermite_polynomials(&f1, domain, &critical, k1).map_err(|e| e.in_layer("hermite"))?;
    let m3 = hermite_polynomials(&f3, domain, &critical, k3).map_err(|e| e.in_layer("hermite"))?;

    let inr = domain.inradius();
    let pts: Vec<C64> = critical.iter().map(|c| c.z).collect();
    let partition = partition_e1e2(domain, &pts, opts.eps * inr, opts.rho * inr).map_err(|e| e.in_layer("partition"))?;

    let layer = assemble_first_corrector(a, q, field, tau_s, (&m1, &m3), &partition, (&f1, &f3), domain)
        .map_err(|e| e.in_layer("first_corrector"))?;
    let corr = fit_correctors(&layer, field, domain).map_err(|e| e.in_layer("correctors"))?;

    // Leading part e^{iτ_sψ}(a + c₀/τ_s) + e^{−iτ_sψ}conj(a + c₁/τ_s).
    let (e, eb) = psi_factor(field, tau_s);
    let (c0v, c0b) = corr.c0.sample_domain(domain);
    let (c1v, c1b) = corr.c1.sample_domain(domain);
    let lead_at = |e: C64, a: C64, c0: C64, c1: C64| e * (a + c0 / tau_s) + (e * (a + c1 / tau_s)).conj();
    let leading = GridFunction::with_boundary(
        (0..n).map(|i| lead_at(e[i], av[i], c0v[i], c1v[i])).collect(),
        (0..nb).map(|k| lead_at(eb[k], avb[k], c0b[k], c1b[k])).collect(),
    );

    // h = e ΔX₁ + ē ΔX₃ − q(e c₀ + ē c̄₁)/τ_s
    let lx1 = laplacian(&layer.x1, domain);
    let lx3 = laplacian(&layer.x3, domain);
    let h = GridFunction::new(
        (0..n)
            .map(|i| {
                e[i] * lx1.values[i] + e[i].conj() * lx3.values[i]
                    - q.values[i] * (e[i] * c0v[i] + e[i].conj() * c1v[i].conj()) / tau_s
            })
            .collect(),
    );
    let lb = leading.boundary.as_ref().unwrap();
    let wb = layer.w11.boundary.as_ref().unwrap();
    let target: Vec<C64> = (0..nb).map(|k| -(lb[k] + wb[k])).collect();
    let rem = if q.is_zero() && target.iter().all(|v| v.norm() == 0.0) {
        None
    } else {
        Some(
            solve_remainder(q, field, tau_s, &layer.w11, &h, &target, domain, &opts.carleman)
                .map_err(|e| e.in_layer("remainder"))?,
        )
    };
    let u12 = match &rem {
        Some(s) => s.w.clone(),
        None => GridFunction::with_boundary(vec![ZERO; n], vec![ZERO; nb]),
    };
    let total = leading.add(&layer.w11).add(&u12);
    let total = GridFunction {
        values: total.values,
        boundary: Some((0..nb).map(|k| lb[k] + wb[k] + u12.boundary.as_ref().unwrap()[k]).collect()),
    };

    // Diagnostics.
    let lt = weighted_operator(&total, field, tau_s, domain);
    let res = GridFunction::new((0..n).map(|i| lt.values[i] + q.values[i] * total.values[i]).collect());
    let total_pde_residual = res.l2_norm(domain);
    let tb = total.boundary.as_ref().unwrap();
    let gamma0_trace = domain.gamma0_indices().iter().map(|&k| tb[k].norm()).fold(0.0, f64::max);
    let total_sup = sup_with_trace(&total);
    let total_l2 = total.l2_norm(domain);
    let max_q = q.sup_norm();
    let norms = LayerNorms {
        leading: leading.l2_norm(domain),
        first: layer.w11.l2_norm(domain),
        first_on_boundary: layer.w11.boundary_l2(domain, None),
        remainder: u12.l2_norm(domain),
        total: total_l2,
    };
    let ledger = CgoLedger {
        sign,
        tau,
        norms,
        hermite_residual: m1.jet_residual.max(m3.jet_residual),
        cancellation_residual: layer.cancellation_residual,
        corrector_misfit: corr.gamma0_misfit,
        remainder_ratio: rem.as_ref().map_or(0.0, |s| s.ratio),
        remainder_pde_residual: rem.as_ref().map_or(0.0, |s| s.pde_residual),
        remainder_gamma0_error: rem.as_ref().map_or(0.0, |s| s.gamma0_error),
        remainder_iterations: rem.as_ref().map_or(0, |s| s.iterations),
        total_pde_residual,
        gamma0_trace,
        total_sup,
        max_q,
        pde_ok: total_pde_residual <= 0.1 * total_l2 * max_q.max(f64::MIN_POSITIVE) || total_pde_residual <= 1e-10 * total_l2,
        trace_ok: gamma0_trace <= 1e-6 * total_sup,
    };
    let s = -(sign as f64);
    // (a₀, a₁) = (c₀, c₁) for u₁ and (b₀, b₁) = −(c₀, c₁) for v
    let correctors = if sign > 0 {
        (corr.c0, corr.c1)
    } else {
        (corr.c0.scale(C64::new(s, 0.0)), corr.c1.scale(C64::new(s, 0.0)))
    };
    Ok(CGOSolution {
        sign,
        tau,
        a: a.clone(),
        correctors,
        m_polys: (m1, m3),
        partition,
        u11: layer.w11.clone(),
        first_layer: layer,
        leading,
        u12,
        total,
        ledger,
    })
}

/// Tangential derivative identity (∇φ, ν) = ∂ψ/∂τ⃗ at every boundary node;
/// returns the max mismatch and max |(∇φ, ν)| over Γ₀.
pub fn normal_gradient_check(field: &PhaseField, domain: &Domain) -> (f64, f64) {
    let mut mismatch: f64 = 0.0;
    let mut on_g0: f64 = 0.0;
    for (k, p) in domain.boundary.iter().enumerate() {
        let d = field.dphi_b[k];
        // ∇φ = (Re Φ', −Im Φ'), ∇ψ = (Im Φ', Re Φ')
        let grad_phi = [d.re, -d.im];
        let grad_psi = [d.im, d.re];
        let normal = grad_phi[0] * p.normal[0] + grad_phi[1] * p.normal[1];
        // τ⃗ = (−ν₂, ν₁) is the counter-clockwise tangent
        let tangential = -grad_psi[0] * p.normal[1] + grad_psi[1] * p.normal[0];
        mismatch = mismatch.max((normal - tangential).abs());
        if p.on_gamma0 {
            on_g0 = on_g0.max(normal.abs());
        }
    }
    (mismatch, on_g0)
}
