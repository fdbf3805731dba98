//! Fixed catalog of analytic fields used for potentials and conductivities.
//! Each entry knows its value, gradient and Laplacian in closed form.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::geometry::Domain;
use crate::transforms::GridFunction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Expr {
    /// height · exp(−|z − center|² / width²)
    GaussianBump { center: [f64; 2], width: f64, height: f64 },
    Constant { value: f64 },
    /// scale · exp(k₁x₁ + k₂x₂)
    ExpLinear { k: [f64; 2], scale: f64 },
}

/// Value, gradient and Laplacian at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub grad: [f64; 2],
    pub laplacian: f64,
}

impl Expr {
    pub fn jet(&self, z: C64) -> Jet2 {
        match *self {
            Expr::GaussianBump { center, width, height } => {
                let dx = z.re - center[0];
                let dy = z.im - center[1];
                let w2 = width * width;
                let v = height * (-(dx * dx + dy * dy) / w2).exp();
                let gx = -2.0 * dx / w2 * v;
                let gy = -2.0 * dy / w2 * v;
                let lap = v * (4.0 * (dx * dx + dy * dy) / (w2 * w2) - 4.0 / w2);
                Jet2 { value: v, grad: [gx, gy], laplacian: lap }
            }
            Expr::Constant { value } => Jet2 { value, grad: [0.0, 0.0], laplacian: 0.0 },
            Expr::ExpLinear { k, scale } => {
                let v = scale * (k[0] * z.re + k[1] * z.im).exp();
                Jet2 { value: v, grad: [k[0] * v, k[1] * v], laplacian: (k[0] * k[0] + k[1] * k[1]) * v }
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            Expr::GaussianBump { center, width, height } => {
                center.iter().all(|c| c.is_finite()) && width > 0.0 && width.is_finite() && height.is_finite()
            }
            Expr::Constant { value } => value.is_finite(),
            Expr::ExpLinear { k, scale } => k.iter().all(|c| c.is_finite()) && scale.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("invalid expression parameters: {self:?}"))
        }
    }
}

/// A sum of catalog terms.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExprSum(pub Vec<Expr>);

impl ExprSum {
    pub fn jet(&self, z: C64) -> Jet2 {
        self.0.iter().fold(Jet2 { value: 0.0, grad: [0.0, 0.0], laplacian: 0.0 }, |acc, e| {
            let j = e.jet(z);
            Jet2 {
                value: acc.value + j.value,
                grad: [acc.grad[0] + j.grad[0], acc.grad[1] + j.grad[1]],
                laplacian: acc.laplacian + j.laplacian,
            }
        })
    }

    pub fn value(&self, z: C64) -> f64 {
        self.jet(z).value
    }

    pub fn sample(&self, domain: &Domain) -> GridFunction {
        GridFunction::from_fn(domain, |z| C64::new(self.value(z), 0.0))
    }

    pub fn validate(&self) -> Result<(), String> {
        self.0.iter().try_for_each(|e| e.validate())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_laplacian_matches_differences() {
        let e = Expr::GaussianBump { center: [0.1, -0.2], width: 0.3, height: 1.5 };
        let z = C64::new(0.25, 0.05);
        let h = 1e-4;
        let f = |dx: f64, dy: f64| e.jet(z + C64::new(dx, dy)).value;
        let lap = (f(h, 0.0) + f(-h, 0.0) + f(0.0, h) + f(0.0, -h) - 4.0 * f(0.0, 0.0)) / (h * h);
        assert!((lap - e.jet(z).laplacian).abs() < 1e-5 * e.jet(z).laplacian.abs().max(1.0));
        let gx = (f(h, 0.0) - f(-h, 0.0)) / (2.0 * h);
        assert!((gx - e.jet(z).grad[0]).abs() < 1e-6);
    }

    #[test]
    fn serde_shape() {
        let s = r#"[{"type":"gaussian_bump","center":[0.0,0.5],"width":0.3,"height":1.0},{"type":"constant","value":0.2}]"#;
        let e: ExprSum = serde_json::from_str(s).unwrap();
        assert_eq!(e.0.len(), 2);
        assert!((e.value(C64::new(0.0, 0.5)) - 1.2).abs() < 1e-15);
    }
}
