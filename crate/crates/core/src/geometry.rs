//! The disk domain, its Γ₀/Γ̃ boundary partition and the polar quadrature.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{gauss_legendre, pairwise_sum};
use crate::polar::PolarOps;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    UnitDisk,
    ScaledDisk,
}

fn default_radius() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Γ̃ = {θ_a ≤ θ < θ_b}; Γ₀ is the complement.
    pub gamma_tilde: [f64; 2],
    pub boundary_nodes: usize,
    pub radial_nodes: usize,
    pub angular_nodes: usize,
}

impl Default for DomainSpec {
    fn default() -> Self {
        DomainSpec {
            kind: DomainKind::UnitDisk,
            radius: 1.0,
            gamma_tilde: [0.0, PI],
            boundary_nodes: 256,
            radial_nodes: 64,
            angular_nodes: 256,
        }
    }
}

impl DomainSpec {
    pub fn unit_disk(radial_nodes: usize, angular_nodes: usize, boundary_nodes: usize, gamma_tilde: [f64; 2]) -> Self {
        DomainSpec { kind: DomainKind::UnitDisk, radius: 1.0, gamma_tilde, boundary_nodes, radial_nodes, angular_nodes }
    }

    pub fn validate(&self) -> Result<()> {
        let [a, b] = self.gamma_tilde;
        if !(a.is_finite() && b.is_finite() && 0.0 <= a && a < b && b < 2.0 * PI) {
            return Err(Error::InvalidDomain(format!(
                "gamma_tilde [{a}, {b}) must satisfy 0 <= a < b < 2*pi so that both arcs are nonempty"
            )));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::InvalidDomain(format!("radius {} must be positive", self.radius)));
        }
        if self.kind == DomainKind::UnitDisk && self.radius != 1.0 {
            return Err(Error::InvalidDomain("unit_disk requires radius 1".into()));
        }
        if self.boundary_nodes < 64 {
            return Err(Error::InvalidDomain(format!("boundary_nodes {} < 64", self.boundary_nodes)));
        }
        if self.radial_nodes < 16 {
            return Err(Error::InvalidDomain(format!("radial_nodes {} < 16", self.radial_nodes)));
        }
        if self.angular_nodes < 64 || self.angular_nodes % 2 != 0 {
            return Err(Error::InvalidDomain(format!("angular_nodes {} must be even and >= 64", self.angular_nodes)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub z: C64,
    pub theta: f64,
    pub normal: [f64; 2],
    /// Direction of ∂_τ = ν₂∂₁ − ν₁∂₂.
    pub tangent: [f64; 2],
    pub weight: f64,
    pub on_gamma0: bool,
}

#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub nodes: Vec<C64>,
    pub weights: Vec<f64>,
    pub boundary_distance: Vec<f64>,
    pub radii: Vec<f64>,
    pub thetas: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Domain {
    pub spec: DomainSpec,
    pub boundary: Vec<BoundaryPoint>,
    pub grid: QuadratureGrid,
    pub(crate) polar: Arc<PolarOps>,
}

pub fn build_domain(spec: &DomainSpec) -> Result<Domain> {
    spec.validate()?;
    let r_out = spec.radius;
    let nr = spec.radial_nodes;
    let nt = spec.angular_nodes;
    let (gx, gw) = gauss_legendre(nr);
    let radii: Vec<f64> = gx.iter().map(|x| 0.5 * r_out * (x + 1.0)).collect();
    let rw: Vec<f64> = gw.iter().map(|w| 0.5 * r_out * w).collect();
    let thetas: Vec<f64> = (0..nt).map(|j| 2.0 * PI * j as f64 / nt as f64).collect();
    let dth = 2.0 * PI / nt as f64;
    let mut nodes = Vec::with_capacity(nr * nt);
    let mut weights = Vec::with_capacity(nr * nt);
    let mut dist = Vec::with_capacity(nr * nt);
    for i in 0..nr {
        for &th in &thetas {
            nodes.push(C64::from_polar(radii[i], th));
            weights.push(radii[i] * rw[i] * dth);
            dist.push(r_out - radii[i]);
        }
    }
    let nb = spec.boundary_nodes;
    let [a, b] = spec.gamma_tilde;
    let boundary: Vec<BoundaryPoint> = (0..nb)
        .map(|k| {
            let th = 2.0 * PI * k as f64 / nb as f64;
            let (s, c) = th.sin_cos();
            BoundaryPoint {
                z: C64::from_polar(r_out, th),
                theta: th,
                normal: [c, s],
                tangent: [s, -c],
                weight: 2.0 * PI * r_out / nb as f64,
                on_gamma0: !(a <= th && th < b),
            }
        })
        .collect();
    let bthetas = boundary.iter().map(|p| p.theta).collect();
    let polar = Arc::new(PolarOps::new(radii.clone(), r_out, nt, bthetas));
    Ok(Domain {
        spec: spec.clone(),
        boundary,
        grid: QuadratureGrid { nodes, weights, boundary_distance: dist, radii, thetas },
        polar,
    })
}

impl Domain {
    pub fn n_nodes(&self) -> usize {
        self.grid.nodes.len()
    }

    pub fn radius(&self) -> f64 {
        self.spec.radius
    }

    pub fn inradius(&self) -> f64 {
        self.spec.radius
    }

    pub fn area(&self) -> f64 {
        pairwise_sum(&self.grid.weights)
    }

    pub fn boundary_length(&self) -> f64 {
        let w: Vec<f64> = self.boundary.iter().map(|p| p.weight).collect();
        pairwise_sum(&w)
    }

    pub fn gamma0_indices(&self) -> Vec<usize> {
        (0..self.boundary.len()).filter(|&k| self.boundary[k].on_gamma0).collect()
    }

    pub fn gamma_tilde_indices(&self) -> Vec<usize> {
        (0..self.boundary.len()).filter(|&k| !self.boundary[k].on_gamma0).collect()
    }

    /// Arclength spacing of the outer angular ring.
    pub fn angular_spacing(&self) -> f64 {
        2.0 * PI * self.spec.radius / self.spec.angular_nodes as f64
    }

    /// Largest gap between consecutive radial nodes (including the ends).
    pub fn radial_spacing(&self) -> f64 {
        let r = &self.grid.radii;
        let mut g = r[0].max(self.spec.radius - r[r.len() - 1]);
        for w in r.windows(2) {
            g = g.max(w[1] - w[0]);
        }
        g
    }

    pub fn grid_spacing(&self) -> f64 {
        self.angular_spacing().max(self.radial_spacing())
    }

    /// Largest |τ| for which e^{iτψ} keeps at least 8 samples per period in
    /// both grid directions, given G = max|∇ψ| over the relevant support.
    pub fn tau_budget(&self, max_grad: f64) -> f64 {
        if max_grad <= 0.0 {
            return f64::INFINITY;
        }
        let ang = self.spec.angular_nodes as f64 / (8.0 * max_grad * self.spec.radius);
        let rad = 2.0 * PI / (8.0 * max_grad * self.radial_spacing());
        ang.min(rad)
    }

    pub fn check_budget(&self, tau: f64, max_grad: f64) -> Result<()> {
        let tmax = self.tau_budget(max_grad);
        if tau.abs() > tmax * (1.0 + 1e-12) {
            let needed_angular = (8.0 * max_grad * self.spec.radius * tau.abs()).ceil() as usize;
            let needed_radial = (self.spec.radial_nodes as f64 * tau.abs() / tmax).ceil() as usize;
            return Err(Error::OscillationBudget { tau, tau_max: tmax, needed_angular, needed_radial });
        }
        Ok(())
    }

    pub fn contains(&self, z: C64) -> bool {
        z.norm() <= self.spec.radius * (1.0 + 1e-12)
    }
}

/// Indices of nodes with boundary distance ≤ ε.
pub fn o_epsilon_mask(domain: &Domain, eps: f64) -> Result<Vec<usize>> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("epsilon {eps} must be positive")));
    }
    if eps >= domain.inradius() {
        return Err(Error::InvalidInput(format!("epsilon {eps} >= inradius {}", domain.inradius())));
    }
    Ok((0..domain.n_nodes()).filter(|&i| domain.grid.boundary_distance[i] <= eps).collect())
}

/// Area of 𝒪_ε measured with the quadrature cells: each ring owns the
/// annulus whose area equals its radial weight, and the ring straddling
/// r = R − ε contributes the covered fraction of its cell.
pub fn mask_area(domain: &Domain, eps: f64) -> Result<f64> {
    o_epsilon_mask(domain, eps)?;
    let r_out = domain.spec.radius;
    let cut = r_out - eps;
    let nt = domain.spec.angular_nodes;
    let mut b2 = 0.0;
    let mut parts = Vec::with_capacity(domain.spec.radial_nodes);
    for i in 0..domain.spec.radial_nodes {
        let ring_area: f64 = domain.grid.weights[i * nt..(i + 1) * nt].iter().sum();
        let cell = ring_area / PI;
        let lo2 = b2;
        let hi2 = b2 + cell;
        let covered = (hi2 - (cut * cut).max(lo2)).clamp(0.0, cell);
        parts.push(ring_area * covered / cell);
        b2 = hi2;
    }
    Ok(pairwise_sum(&parts))
}
