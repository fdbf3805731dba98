//! Small numerical kernels shared by every module: deterministic
//! summation, Gauss–Legendre rules, finite-difference weights on
//! scattered nodes, restarted GMRES and constrained least squares.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

const PAIRWISE_LEAF: usize = 32;

/// Pairwise (cascade) summation; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn pairwise_sum_c(xs: &[C64]) -> C64 {
    if xs.len() <= PAIRWISE_LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum_c(&xs[..mid]) + pairwise_sum_c(&xs[mid..])
}

/// Pairwise sum of `f(i)` for `i in 0..n` without materializing a buffer
/// larger than one leaf per recursion level.
pub fn pairwise_sum_by<F: Fn(usize) -> C64>(n: usize, f: &F) -> C64 {
    fn rec<F: Fn(usize) -> C64>(lo: usize, hi: usize, f: &F) -> C64 {
        if hi - lo <= PAIRWISE_LEAF {
            let mut s = C64::new(0.0, 0.0);
            for i in lo..hi {
                s += f(i);
            }
            return s;
        }
        let mid = lo + (hi - lo) / 2;
        rec(lo, mid, f) + rec(mid, hi, f)
    }
    rec(0, n, f)
}

/// Gauss–Legendre nodes and weights on [-1, 1], ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, t);
            dp = d;
            let dt = p / d;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, t);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - t * t) * dp * dp);
        x[i] = -t;
        x[n - 1 - i] = t;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, t: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = t;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, d)
}

/// Fornberg's finite-difference weights: `w[k][j]` approximates the k-th
/// derivative at `x0` from values at `nodes[j]`, for k = 0..=max_order.
pub fn fornberg_weights(x0: f64, nodes: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

pub fn dot_c(a: &[C64], b: &[C64]) -> C64 {
    pairwise_sum_by(a.len(), &|i| a[i].conj() * b[i])
}

pub fn norm_c(a: &[C64]) -> f64 {
    pairwise_sum_by(a.len(), &|i| C64::new(a[i].norm_sqr(), 0.0)).re.sqrt()
}

#[derive(Debug, Clone, Copy)]
pub struct GmresOptions {
    pub restart: usize,
    pub max_iter: usize,
    pub rel_tol: f64,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions { restart: 40, max_iter: 200, rel_tol: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<C64>,
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
}

/// Restarted GMRES with modified Gram–Schmidt and Givens rotations.
pub fn gmres<A>(mut apply: A, b: &[C64], x0: Option<&[C64]>, opts: GmresOptions) -> GmresOutcome
where
    A: FnMut(&[C64]) -> Vec<C64>,
{
    let n = b.len();
    let bnorm = norm_c(b);
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![C64::new(0.0, 0.0); n]);
    if bnorm == 0.0 {
        return GmresOutcome { x: vec![C64::new(0.0, 0.0); n], iterations: 0, rel_residual: 0.0, converged: true };
    }
    let mut total = 0;
    let mut rel = f64::INFINITY;
    while total < opts.max_iter {
        let ax = apply(&x);
        let r: Vec<C64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm_c(&r);
        rel = beta / bnorm;
        if rel <= opts.rel_tol {
            return GmresOutcome { x, iterations: total, rel_residual: rel, converged: true };
        }
        let m = opts.restart.min(opts.max_iter - total);
        let mut v: Vec<Vec<C64>> = Vec::with_capacity(m + 1);
        v.push(r.iter().map(|ri| ri / beta).collect());
        let mut h = vec![vec![C64::new(0.0, 0.0); m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![C64::new(0.0, 0.0); m];
        let mut g = vec![C64::new(0.0, 0.0); m + 1];
        g[0] = C64::new(beta, 0.0);
        let mut k_used = 0;
        for k in 0..m {
            let mut w = apply(&v[k]);
            for (j, vj) in v.iter().enumerate() {
                let hjk = dot_c(vj, &w);
                h[j][k] = hjk;
                for (wi, vji) in w.iter_mut().zip(vj) {
                    *wi -= hjk * vji;
                }
            }
            let wn = norm_c(&w);
            h[k + 1][k] = C64::new(wn, 0.0);
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j].conj() * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let (c, s) = givens(h[k][k], h[k + 1][k]);
            cs[k] = c;
            sn[k] = s;
            h[k][k] = c * h[k][k] + s * h[k + 1][k];
            h[k + 1][k] = C64::new(0.0, 0.0);
            g[k + 1] = -s.conj() * g[k];
            g[k] *= c;
            k_used = k + 1;
            total += 1;
            rel = g[k + 1].norm() / bnorm;
            if rel <= opts.rel_tol || wn == 0.0 {
                break;
            }
            v.push(w.iter().map(|wi| wi / wn).collect());
        }
        let mut y = vec![C64::new(0.0, 0.0); k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, vji) in x.iter_mut().zip(&v[j]) {
                *xi += yj * vji;
            }
        }
        if rel <= opts.rel_tol {
            let ax = apply(&x);
            let r: Vec<C64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            rel = norm_c(&r) / bnorm;
            return GmresOutcome { x, iterations: total, rel_residual: rel, converged: rel <= 10.0 * opts.rel_tol };
        }
    }
    GmresOutcome { x, iterations: total, rel_residual: rel, converged: false }
}

fn givens(a: C64, b: C64) -> (f64, C64) {
    let an = a.norm();
    let bn = b.norm();
    if bn == 0.0 {
        return (1.0, C64::new(0.0, 0.0));
    }
    if an == 0.0 {
        return (0.0, b.conj() / bn);
    }
    let r = (an * an + bn * bn).sqrt();
    let c = an / r;
    let s = (a / an) * b.conj() / r;
    (c, s)
}

/// Singular-value pseudo-inverse solve of `A x = b`, dropping singular
/// values below `rcond * s_max`.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, rcond: f64) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = (rcond * smax).max(f64::MIN_POSITIVE);
    svd.solve(b, eps).expect("svd computed with u and v")
}

/// Nullspace basis and a particular minimum-norm solution of `C x = d`.
pub fn constrained_split(c: &DMatrix<f64>, d: &DVector<f64>, rcond: f64) -> Result<(DVector<f64>, DMatrix<f64>, f64)> {
    let n = c.ncols();
    if c.nrows() == 0 {
        return Ok((DVector::zeros(n), DMatrix::identity(n, n), 0.0));
    }
    // Full V is needed for the nullspace, so go through C^T C's eigenbasis-free route:
    // pad C to a square matrix so nalgebra's thin SVD returns all right vectors.
    let rows = c.nrows().max(n);
    let mut cp = DMatrix::<f64>::zeros(rows, n);
    cp.view_mut((0, 0), (c.nrows(), n)).copy_from(c);
    let svd = cp.svd(true, true);
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = rcond * smax.max(f64::MIN_POSITIVE);
    let mut range = Vec::new();
    let mut null = Vec::new();
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s > tol {
            range.push(i);
        } else {
            null.push(i);
        }
    }
    let u = svd.u.as_ref().expect("u requested");
    let mut dp = DVector::<f64>::zeros(rows);
    dp.rows_mut(0, c.nrows()).copy_from(d);
    let mut xp = DVector::<f64>::zeros(n);
    for &i in &range {
        let coef = u.column(i).dot(&dp) / svd.singular_values[i];
        xp += v_t.row(i).transpose() * coef;
    }
    let resid = (c * &xp - d).amax();
    let mut nb = DMatrix::<f64>::zeros(n, null.len());
    for (k, &i) in null.iter().enumerate() {
        nb.set_column(k, &v_t.row(i).transpose());
    }
    if range.len() < c.nrows() && resid > 1e-8 * (1.0 + d.amax()) {
        return Err(Error::RankDeficient { achieved: resid });
    }
    Ok((xp, nb, resid))
}

/// Minimize `|A x - b|^2 + |L x|^2` subject to `C x = d`.
pub fn constrained_lstsq(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    l: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DVector<f64>,
) -> Result<(DVector<f64>, f64)> {
    let (xp, nb, cres) = constrained_split(c, d, 1e-13)?;
    if nb.ncols() == 0 {
        return Ok((xp, cres));
    }
    let an = a * &nb;
    let ln = l * &nb;
    let rows = an.nrows() + ln.nrows();
    let mut m = DMatrix::<f64>::zeros(rows, nb.ncols());
    m.view_mut((0, 0), (an.nrows(), nb.ncols())).copy_from(&an);
    m.view_mut((an.nrows(), 0), (ln.nrows(), nb.ncols())).copy_from(&ln);
    let mut rhs = DVector::<f64>::zeros(rows);
    rhs.rows_mut(0, an.nrows()).copy_from(&(b - a * &xp));
    rhs.rows_mut(an.nrows(), ln.nrows()).copy_from(&(-(l * &xp)));
    let y = lstsq(&m, &rhs, 1e-15);
    let x = xp + nb * y;
    let cres = (c * &x - d).amax();
    Ok((x, cres))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        for k in 0..14 {
            let num: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k)).sum();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((num - exact).abs() < 1e-14, "k={k} {num} {exact}");
        }
        let (x, w) = gauss_legendre(512);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-12);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn fornberg_matches_polynomial_derivatives() {
        let nodes = [-0.3, 0.1, 0.25, 0.7, 1.1];
        let w = fornberg_weights(0.4, &nodes, 2);
        let f = |x: f64| 1.0 + 2.0 * x - x * x + 0.5 * x.powi(3);
        let df = |x: f64| 2.0 - 2.0 * x + 1.5 * x * x;
        let d2f = |x: f64| -2.0 + 3.0 * x;
        let v: Vec<f64> = nodes.iter().map(|&x| f(x)).collect();
        let app = |k: usize| w[k].iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        assert!((app(0) - f(0.4)).abs() < 1e-13);
        assert!((app(1) - df(0.4)).abs() < 1e-12);
        assert!((app(2) - d2f(0.4)).abs() < 1e-11);
    }

    #[test]
    fn gmres_solves_small_system() {
        let a = [[C64::new(4.0, 1.0), C64::new(1.0, 0.0)], [C64::new(0.5, -1.0), C64::new(3.0, 0.0)]];
        let b = vec![C64::new(1.0, 2.0), C64::new(-1.0, 0.5)];
        let out = gmres(
            |x| vec![a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]],
            &b,
            None,
            GmresOptions::default(),
        );
        assert!(out.converged);
        let r0 = a[0][0] * out.x[0] + a[0][1] * out.x[1] - b[0];
        assert!(r0.norm() < 1e-12);
    }

    #[test]
    fn pairwise_is_order_stable() {
        let xs: Vec<f64> = (0..1000).map(|i| 1.0 / (1.0 + i as f64)).collect();
        assert_eq!(pairwise_sum(&xs), pairwise_sum(&xs.clone()));
        assert!((pairwise_sum(&xs) - xs.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn constrained_lstsq_meets_constraints() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let l = DMatrix::zeros(0, 3);
        let c = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let d = DVector::from_vec(vec![0.0]);
        let (x, res) = constrained_lstsq(&a, &b, &l, &c, &d).unwrap();
        assert!(res < 1e-12);
        assert!(x.sum().abs() < 1e-12);
    }
}
