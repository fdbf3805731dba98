//! Spectral operators on the polar tensor grid.
//!
//! Fields are stored ring-major (`index = i_r * nt + j_theta`). Angular
//! structure is handled by FFT; radial structure by local high-order
//! Lagrange stencils on the Gauss–Legendre radii, extended across the
//! origin with the parity rule `f_m(-r) = (-1)^m f_m(r)`.
//!
//! The Cauchy transform uses the Fourier-mode representation
//! `[Tg]_m(r) = -2 ∫_r^R (r/ρ)^m g_{m+1}(ρ) dρ` for m ≥ 0 and
//! `[Tg]_m(r) = 2 ∫_0^r (ρ/r)^{-m} g_{m+1}(ρ) dρ` for m < 0,
//! integrated exactly between consecutive radii with a sub-interval
//! Gauss rule on the interpolated profile.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use crate::exec;
use crate::numeric::{fornberg_weights, gauss_legendre};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const STENCIL_POINTS: usize = 10;
const DERIV_POINTS: usize = 12;
const SUB_POINTS: usize = 6;
const UNDERFLOW: f64 = 1e-200;

#[derive(Debug, Clone)]
pub(crate) struct Stencil {
    start: usize,
    even: Vec<f64>,
    odd: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Interval {
    lo: f64,
    hi: f64,
    pts: Vec<f64>,
    wts: Vec<f64>,
    interp: Vec<Stencil>,
}

pub struct PolarOps {
    pub nr: usize,
    pub nt: usize,
    pub nb: usize,
    pub radius: f64,
    pub radii: Vec<f64>,
    boundary_thetas: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    bfwd: Arc<dyn Fft<f64>>,
    d1: Vec<Stencil>,
    d2: Vec<Stencil>,
    at_boundary: Stencil,
    d1_at_boundary: Stencil,
    intervals: Vec<Interval>,
    mode_cap: Vec<usize>,
}

impl std::fmt::Debug for PolarOps {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PolarOps").field("nr", &self.nr).field("nt", &self.nt).field("nb", &self.nb).finish()
    }
}

/// Signed mode number of FFT slot `k`.
#[inline]
pub fn mode_of(k: usize, nt: usize) -> i64 {
    if k < nt / 2 {
        k as i64
    } else {
        k as i64 - nt as i64
    }
}

/// FFT slot of signed mode `m`, if representable.
#[inline]
pub fn slot_of(m: i64, nt: usize) -> Option<usize> {
    let h = (nt / 2) as i64;
    if m >= -h && m < h {
        Some(if m >= 0 { m as usize } else { (m + nt as i64) as usize })
    } else {
        None
    }
}

impl PolarOps {
    pub fn new(radii: Vec<f64>, radius: f64, nt: usize, boundary_thetas: Vec<f64>) -> PolarOps {
        let nr = radii.len();
        let nb = boundary_thetas.len();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(nt);
        let inv = planner.plan_fft_inverse(nt);
        let bfwd = planner.plan_fft_forward(nb);
        let ext = extended_nodes(&radii);
        let d1 = radii.iter().map(|&r| make_stencil(&ext, nr, r, DERIV_POINTS, 1)).collect();
        let d2 = radii.iter().map(|&r| make_stencil(&ext, nr, r, DERIV_POINTS, 2)).collect();
        let at_boundary = make_stencil(&ext, nr, radius, STENCIL_POINTS, 0);
        let d1_at_boundary = make_stencil(&ext, nr, radius, DERIV_POINTS, 1);
        let (gx, gw) = gauss_legendre(SUB_POINTS);
        let mut intervals = Vec::with_capacity(nr + 1);
        for j in 0..=nr {
            let lo = if j == 0 { 0.0 } else { radii[j - 1] };
            let hi = if j == nr { radius } else { radii[j] };
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            let pts: Vec<f64> = gx.iter().map(|x| mid + half * x).collect();
            let wts: Vec<f64> = gw.iter().map(|w| half * w).collect();
            let interp = pts.iter().map(|&t| make_stencil(&ext, nr, t, STENCIL_POINTS, 0)).collect();
            intervals.push(Interval { lo, hi, pts, wts, interp });
        }
        let half = nt / 2;
        let mode_cap = radii
            .iter()
            .map(|&r| ((half as f64 * r / radius).ceil() as usize + 8).min(half))
            .collect();
        PolarOps {
            nr,
            nt,
            nb,
            radius,
            radii,
            boundary_thetas,
            fwd,
            inv,
            bfwd,
            d1,
            d2,
            at_boundary,
            d1_at_boundary,
            intervals,
            mode_cap,
        }
    }

    /// Ring-wise angular Fourier coefficients, normalized so that
    /// `f(r_i, θ) = Σ_k modes[i*nt+k] e^{i m(k) θ}`.
    pub fn to_modes(&self, values: &[C64]) -> Vec<C64> {
        assert_eq!(values.len(), self.nr * self.nt);
        let mut buf = values.to_vec();
        let scale = 1.0 / self.nt as f64;
        let fft = self.fwd.clone();
        exec::for_each_chunk(&mut buf, self.nt, |_, ring| {
            fft.process(ring);
            for v in ring.iter_mut() {
                *v *= scale;
            }
        });
        buf
    }

    pub fn from_modes(&self, modes: &[C64]) -> Vec<C64> {
        assert_eq!(modes.len(), self.nr * self.nt);
        let mut buf = modes.to_vec();
        let fft = self.inv.clone();
        exec::for_each_chunk(&mut buf, self.nt, |_, ring| fft.process(ring));
        buf
    }

    /// Values at the boundary nodes from a ring of modes at r = R.
    pub fn boundary_from_modes(&self, rmodes: &[C64]) -> Vec<C64> {
        if self.nb == self.nt {
            let mut buf = rmodes.to_vec();
            self.inv.process(&mut buf);
            return buf;
        }
        self.boundary_thetas
            .iter()
            .map(|&th| {
                let mut s = ZERO;
                for (k, c) in rmodes.iter().enumerate() {
                    let m = mode_of(k, self.nt) as f64;
                    s += c * C64::from_polar(1.0, m * th);
                }
                s
            })
            .collect()
    }

    /// Modes (length nt) of data given at the boundary nodes.
    pub fn boundary_to_modes(&self, bvals: &[C64]) -> Vec<C64> {
        assert_eq!(bvals.len(), self.nb);
        let mut buf = bvals.to_vec();
        self.bfwd.process(&mut buf);
        let scale = 1.0 / self.nb as f64;
        let mut out = vec![ZERO; self.nt];
        let hb = (self.nb / 2) as i64;
        for (k, c) in buf.iter().enumerate() {
            let m = if (k as i64) < hb { k as i64 } else { k as i64 - self.nb as i64 };
            if let Some(s) = slot_of(m, self.nt) {
                out[s] = c * scale;
            }
        }
        out
    }

    fn apply_stencil(&self, st: &Stencil, modes: &[C64], out: &mut [C64]) {
        let nt = self.nt;
        for (s, (we, wo)) in st.even.iter().zip(&st.odd).enumerate() {
            let row = &modes[(st.start + s) * nt..(st.start + s + 1) * nt];
            for (pair_o, pair_r) in out.chunks_exact_mut(2).zip(row.chunks_exact(2)) {
                pair_o[0] += pair_r[0] * we;
                pair_o[1] += pair_r[1] * wo;
            }
        }
    }

    fn capped(&self, modes: &[C64]) -> Vec<C64> {
        let mut m = modes.to_vec();
        let nt = self.nt;
        for (i, ring) in m.chunks_exact_mut(nt).enumerate() {
            let cap = self.mode_cap[i] as i64;
            for (k, v) in ring.iter_mut().enumerate() {
                if mode_of(k, nt).abs() > cap {
                    *v = ZERO;
                }
            }
        }
        m
    }

    /// Radial derivative (order 1 or 2) of every mode profile at the nodes.
    pub fn radial_derivative_modes(&self, modes: &[C64], order: usize) -> Vec<C64> {
        let st = if order == 1 { &self.d1 } else { &self.d2 };
        let nt = self.nt;
        let mut out = vec![ZERO; modes.len()];
        exec::for_each_chunk(&mut out, nt, |i, ring| self.apply_stencil(&st[i], modes, ring));
        out
    }

    /// Mode profiles extrapolated to r = R.
    pub fn modes_at_boundary(&self, modes: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; self.nt];
        self.apply_stencil(&self.at_boundary, modes, &mut out);
        out
    }

    /// Radial derivative of the mode profiles at r = R (one-sided stencil).
    pub fn radial_derivative_at_boundary(&self, modes: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; self.nt];
        self.apply_stencil(&self.d1_at_boundary, modes, &mut out);
        out
    }

    /// Modes of ∂_z f and ∂_z̄ f from modes of f.
    pub fn dz_dzbar_modes(&self, modes: &[C64]) -> (Vec<C64>, Vec<C64>) {
        let fm = self.capped(modes);
        let d = self.radial_derivative_modes(&fm, 1);
        let nt = self.nt;
        let mut dz = vec![ZERO; modes.len()];
        let mut dzb = vec![ZERO; modes.len()];
        for i in 0..self.nr {
            let r = self.radii[i];
            for k in 0..nt {
                let m = mode_of(k, nt);
                let f = fm[i * nt + k];
                let fr = d[i * nt + k];
                let t = f * (m as f64 / r);
                if let Some(s) = slot_of(m - 1, nt) {
                    dz[i * nt + s] = 0.5 * (fr + t);
                }
                if let Some(s) = slot_of(m + 1, nt) {
                    dzb[i * nt + s] = 0.5 * (fr - t);
                }
            }
        }
        (dz, dzb)
    }

    pub fn laplacian_modes(&self, modes: &[C64]) -> Vec<C64> {
        let fm = self.capped(modes);
        let d1 = self.radial_derivative_modes(&fm, 1);
        let d2 = self.radial_derivative_modes(&fm, 2);
        let nt = self.nt;
        let mut out = vec![ZERO; modes.len()];
        for i in 0..self.nr {
            let r = self.radii[i];
            for k in 0..nt {
                let m = mode_of(k, nt) as f64;
                let idx = i * nt + k;
                out[idx] = d2[idx] + d1[idx] / r - fm[idx] * (m * m / (r * r));
            }
        }
        out
    }

    /// Cauchy transform in mode space. Returns the modes at the nodes and the
    /// ring of modes at r = R.
    pub fn cauchy_modes(&self, gmodes: &[C64]) -> (Vec<C64>, Vec<C64>) {
        let nt = self.nt;
        let nr = self.nr;
        let half = nt / 2;
        // Per interval: IA[m] (m >= 0, kernel (lo/ρ)^m) and IB[n] (n = -m >= 1, kernel (ρ/hi)^n).
        let rows: Vec<(Vec<C64>, Vec<C64>)> = exec::map_range(nr + 1, |j| {
            let iv = &self.intervals[j];
            let mut ia = vec![ZERO; half];
            let mut ib = vec![ZERO; half + 1];
            let mut gi = vec![ZERO; nt];
            for (p, st) in iv.interp.iter().enumerate() {
                gi.iter_mut().for_each(|v| *v = ZERO);
                self.apply_stencil(st, gmodes, &mut gi);
                let t = iv.pts[p];
                let w = iv.wts[p];
                if j > 0 {
                    let b = iv.lo / t;
                    let mut pw = w;
                    for (m, slot) in ia.iter_mut().enumerate().take(half - 1) {
                        *slot += gi[m + 1] * pw;
                        pw *= b;
                        if pw < UNDERFLOW {
                            break;
                        }
                    }
                }
                let b = t / iv.hi;
                let mut pw = w * b;
                for n in 1..=half {
                    // input mode 1 - n
                    let s = slot_of(1 - n as i64, nt).expect("in range");
                    ib[n] += gi[s] * pw;
                    pw *= b;
                    if pw < UNDERFLOW {
                        break;
                    }
                }
            }
            (ia, ib)
        });
        let mut out = vec![ZERO; nr * nt];
        let mut rmodes = vec![ZERO; nt];
        // m >= 0: accumulate inward from R.
        let mut acc = vec![ZERO; half];
        let mut pc = vec![0.0; half];
        for i in (0..nr).rev() {
            let j = i + 1;
            let iv = &self.intervals[j];
            let c = iv.lo / iv.hi;
            power_table(c, &mut pc);
            for m in 0..half {
                acc[m] = acc[m] * pc[m] + rows[j].0[m];
                out[i * nt + m] = -2.0 * acc[m];
            }
        }
        // m < 0: accumulate outward from the origin.
        let mut accb = vec![ZERO; half + 1];
        let mut pcb = vec![0.0; half + 1];
        for j in 0..=nr {
            let iv = &self.intervals[j];
            let c = iv.lo / iv.hi;
            power_table(c, &mut pcb);
            for n in 1..=half {
                accb[n] = accb[n] * pcb[n] + rows[j].1[n];
            }
            let s0 = nt - half;
            if j < nr {
                for n in 1..=half {
                    out[j * nt + s0 + half - n] = 2.0 * accb[n];
                }
            } else {
                for n in 1..=half {
                    rmodes[s0 + half - n] = 2.0 * accb[n];
                }
            }
        }
        (out, rmodes)
    }

    /// Value of a field (given by its modes) at an arbitrary point of the closed disk.
    pub fn eval_point(&self, modes: &[C64], z: C64) -> C64 {
        let r = z.norm().min(self.radius);
        let th = z.arg();
        let ext = extended_nodes(&self.radii);
        let st = make_stencil(&ext, self.nr, r, STENCIL_POINTS, 0);
        let mut prof = vec![ZERO; self.nt];
        self.apply_stencil(&st, modes, &mut prof);
        let mut s = ZERO;
        for (k, c) in prof.iter().enumerate() {
            let m = mode_of(k, self.nt) as f64;
            s += c * C64::from_polar(1.0, m * th);
        }
        s
    }

    /// Harmonic extension of boundary data: grid values and the boundary ring of modes.
    pub fn harmonic_extension(&self, bvals: &[C64]) -> (Vec<C64>, Vec<C64>) {
        let bm = self.boundary_to_modes(bvals);
        let nt = self.nt;
        let mut modes = vec![ZERO; self.nr * nt];
        for i in 0..self.nr {
            let rho = self.radii[i] / self.radius;
            for k in 0..nt {
                let m = mode_of(k, nt).unsigned_abs() as i32;
                let f = rho.powi(m);
                if f > UNDERFLOW {
                    modes[i * nt + k] = bm[k] * f;
                }
            }
        }
        (self.from_modes(&modes), bm)
    }
}

fn power_table(c: f64, out: &mut [f64]) {
    let mut p = 1.0;
    for v in out.iter_mut() {
        *v = p;
        p *= c;
        if p < UNDERFLOW {
            p = 0.0;
        }
    }
}

/// Nodes mirrored through the origin: (position, node index, sign flag).
fn extended_nodes(radii: &[f64]) -> Vec<(f64, usize, bool)> {
    let mut ext: Vec<(f64, usize, bool)> = radii.iter().enumerate().rev().map(|(i, &r)| (-r, i, true)).collect();
    ext.extend(radii.iter().enumerate().map(|(i, &r)| (r, i, false)));
    ext
}

fn make_stencil(ext: &[(f64, usize, bool)], nr: usize, t: f64, npts: usize, order: usize) -> Stencil {
    let npts = npts.min(ext.len());
    // window of consecutive extended nodes nearest to t
    let pos = ext.partition_point(|e| e.0 < t);
    let mut lo = pos.saturating_sub(npts / 2);
    if lo + npts > ext.len() {
        lo = ext.len() - npts;
    }
    // slide to minimize the farthest node distance
    loop {
        let far_lo = (t - ext[lo].0).abs();
        let far_hi = (ext[lo + npts - 1].0 - t).abs();
        if lo + npts < ext.len() && far_lo > (ext[lo + npts].0 - t).abs() && far_lo > far_hi {
            lo += 1;
        } else if lo > 0 && far_hi > (t - ext[lo - 1].0).abs() && far_hi > far_lo {
            lo -= 1;
        } else {
            break;
        }
    }
    let win = &ext[lo..lo + npts];
    let xs: Vec<f64> = win.iter().map(|e| e.0).collect();
    let w = fornberg_weights(t, &xs, order);
    let wk = &w[order];
    let imin = win.iter().map(|e| e.1).min().unwrap();
    let imax = win.iter().map(|e| e.1).max().unwrap();
    let len = imax - imin + 1;
    let mut even = vec![0.0; len];
    let mut odd = vec![0.0; len];
    for (e, &wv) in win.iter().zip(wk) {
        let s = e.1 - imin;
        even[s] += wv;
        odd[s] += if e.2 { -wv } else { wv };
    }
    debug_assert!(imax < nr);
    Stencil { start: imin, even, odd }
}
