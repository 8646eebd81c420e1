//! Space-time Fourier diagnostics on recorded trajectories: temporal and
//! modulation projectors and discrete versions of the adapted norms
//! `S^{s,a,b}_λ` (Schrödinger) and `W^{l,α,β}_λ` (wave).
//!
//! The space-time transform is `û(τ, ξ) = Σ_t Σ_x u(t, x) e^{-i(τt + ξ·x)}`,
//! so `e^{i(τ₀t + ξ₀·x)}` sits at `(τ₀, ξ₀)`. The symbol of `i∂_t + Δ` is then
//! `σ(τ, ξ) = -τ - |ξ|²` and that of `i∂_t + |∇|` is `|ξ| - τ`.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::lp_besov::{dyadic_scales, eta_le, smooth_step, DyadicWindow};
use crate::scalar::{cst, from_usize, Real};
use crate::spectral::{Spectral, C};

/// Fewest temporal samples accepted by a block.
pub const MIN_FRAMES: usize = 16;

/// Uniformly sampled fields on a window `[t0, t0 + (n-1) dt]`.
#[derive(Clone)]
pub struct SpaceTimeBlock<T: Real> {
    spec: Arc<Spectral<T>>,
    pub t0: T,
    pub dt: T,
    pub frames: Vec<Vec<C<T>>>,
    /// Ramp length at each end as a fraction of the window, in `[0, 1/2]`.
    pub taper: T,
}

impl<T: Real> std::fmt::Debug for SpaceTimeBlock<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpaceTimeBlock")
            .field("t0", &self.t0)
            .field("dt", &self.dt)
            .field("frames", &self.frames.len())
            .field("taper", &self.taper)
            .finish()
    }
}

impl<T: Real> SpaceTimeBlock<T> {
    pub fn new(spec: Arc<Spectral<T>>, t0: T, dt: T, frames: Vec<Vec<C<T>>>, taper: T) -> Result<Self> {
        if frames.len() < MIN_FRAMES {
            return Err(invalid(format!(
                "window has {} temporal samples, need at least {MIN_FRAMES}",
                frames.len()
            )));
        }
        if frames.iter().any(|f| f.len() != spec.len()) {
            return Err(invalid("frame size does not match the grid"));
        }
        if !(dt > T::zero()) {
            return Err(invalid("dt must be positive"));
        }
        if !(taper >= T::zero() && taper <= cst(0.5)) {
            return Err(invalid(format!("taper fraction {taper} outside [0, 1/2]")));
        }
        Ok(Self { spec, t0, dt, frames, taper })
    }

    /// Samples `f(t)` at `t0 + j dt` for `j < n`.
    pub fn from_fn(
        spec: Arc<Spectral<T>>,
        t0: T,
        dt: T,
        n: usize,
        taper: T,
        f: impl Fn(T) -> Vec<C<T>>,
    ) -> Result<Self> {
        let frames = (0..n).map(|j| f(t0 + dt * from_usize(j))).collect();
        Self::new(spec, t0, dt, frames, taper)
    }

    pub fn spectral(&self) -> &Arc<Spectral<T>> {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn duration(&self) -> T {
        self.dt * from_usize(self.len())
    }

    /// Signed temporal frequency of bin `j`.
    pub fn tau(&self, j: usize) -> T {
        let n = self.len();
        let k = if 2 * j < n { j as i64 } else { j as i64 - n as i64 };
        T::TAU() * cst(k as f64) / self.duration()
    }

    pub fn temporal_nyquist(&self) -> T {
        T::PI() / self.dt
    }

    /// Largest `|σ|` representable on the block.
    pub fn max_modulation(&self) -> T {
        let xi2max = self.spec.xi2().iter().fold(T::zero(), |m, &k| m.max(k));
        self.temporal_nyquist() + xi2max
    }

    pub fn modulation_symbol(&self, j: usize, f: usize) -> T {
        -self.tau(j) - self.spec.xi2()[f]
    }

    /// Smooth-step taper weights.
    pub fn taper_weights(&self) -> Vec<T> {
        let n = self.len();
        let ramp = self.taper * from_usize(n - 1);
        (0..n)
            .map(|j| {
                if ramp <= T::zero() {
                    return T::one();
                }
                let x = from_usize::<T>(j).min(from_usize::<T>(n - 1 - j));
                smooth_step(x / ramp)
            })
            .collect()
    }

    fn plans(&self) -> (Arc<dyn Fft<T>>, Arc<dyn Fft<T>>) {
        let mut p = FftPlanner::new();
        (p.plan_fft_forward(self.len()), p.plan_fft_inverse(self.len()))
    }

    /// Space-time coefficients of the tapered block, indexed `[j][f]`.
    pub fn spacetime_coeffs(&self) -> Vec<Vec<C<T>>> {
        let w = self.taper_weights();
        let mut g: Vec<Vec<C<T>>> = self
            .frames
            .iter()
            .zip(&w)
            .map(|(fr, &wj)| {
                let mut c: Vec<C<T>> = fr.iter().map(|z| z * wj).collect();
                self.spec.forward(&mut c);
                c
            })
            .collect();
        self.temporal(&mut g, true);
        g
    }

    /// Physical frames from space-time coefficients.
    pub fn frames_from_coeffs(&self, mut g: Vec<Vec<C<T>>>) -> Vec<Vec<C<T>>> {
        self.temporal(&mut g, false);
        for fr in g.iter_mut() {
            self.spec.inverse(fr);
        }
        g
    }

    fn temporal(&self, g: &mut [Vec<C<T>>], forward: bool) {
        let (fw, inv) = self.plans();
        let plan = if forward { fw } else { inv };
        let n = self.len();
        let scale = if forward { T::one() } else { T::one() / from_usize(n) };
        let mut line = vec![Complex::new(T::zero(), T::zero()); n];
        for f in 0..self.spec.len() {
            for j in 0..n {
                line[j] = g[j][f];
            }
            plan.process(&mut line);
            for j in 0..n {
                g[j][f] = line[j] * scale;
            }
        }
    }

    /// `‖·‖²_{L²_{t,x}}` of the field with space-time coefficients `g`.
    fn energy_coeffs(&self, g: &[Vec<C<T>>]) -> T {
        let nx = from_usize::<T>(self.spec.len());
        let nt = from_usize::<T>(self.len());
        let sum = g.iter().flatten().fold(T::zero(), |a, z| a + z.norm_sqr());
        sum * self.spec.grid().volume() / (nx * nx) * self.dt / nt
    }

    /// `‖·‖²_{L²_{t,x}}` of the tapered block.
    pub fn energy(&self) -> T {
        let w = self.taper_weights();
        let vol = self.spec.grid().cell_volume();
        self.frames
            .iter()
            .zip(&w)
            .fold(T::zero(), |a, (fr, &wj)| {
                a + fr.iter().fold(T::zero(), |b, z| b + z.norm_sqr()) * wj * wj
            })
            * vol
            * self.dt
    }

    fn with_frames(&self, frames: Vec<Vec<C<T>>>, taper: T) -> Self {
        Self { spec: self.spec.clone(), t0: self.t0, dt: self.dt, frames, taper }
    }

    fn multiply(&self, m: impl Fn(usize, usize) -> T) -> Vec<Vec<C<T>>> {
        let mut g = self.spacetime_coeffs();
        for (j, row) in g.iter_mut().enumerate() {
            for (f, z) in row.iter_mut().enumerate() {
                *z = *z * m(j, f);
            }
        }
        g
    }
}

/// `C_λ u`: multiplication by the dyadic window at `|σ(τ, ξ)|`. The output is
/// the projected tapered block, with taper fraction reset to zero.
pub fn modulation_project<T: Real>(block: &SpaceTimeBlock<T>, w: DyadicWindow<T>) -> Result<SpaceTimeBlock<T>> {
    if w.lambda * cst(0.625) > block.max_modulation() {
        return Err(invalid(format!(
            "modulation scale {} above the block's resolvable range {}",
            w.lambda,
            block.max_modulation()
        )));
    }
    let g = block.multiply(|j, f| w.weight(block.modulation_symbol(j, f)));
    Ok(block.with_frames(block.frames_from_coeffs(g), T::zero()))
}

/// `C_{>m} u = (1 - η_{≤m}(|σ|)) u`.
pub fn modulation_above<T: Real>(block: &SpaceTimeBlock<T>, m: T) -> SpaceTimeBlock<T> {
    let g = block.multiply(|j, f| T::one() - eta_le(block.modulation_symbol(j, f), m));
    block.with_frames(block.frames_from_coeffs(g), T::zero())
}

/// `Σ_λ C_λ u` over all dyadic `λ` up to the resolvable modulation.
pub fn modulation_reconstruct<T: Real>(block: &SpaceTimeBlock<T>) -> SpaceTimeBlock<T> {
    let top = block.max_modulation();
    let mut g = block.spacetime_coeffs();
    let mut acc = vec![vec![Complex::new(T::zero(), T::zero()); block.spec.len()]; block.len()];
    let mut lam = T::one();
    loop {
        let w = DyadicWindow::inhomogeneous(lam);
        for (j, row) in acc.iter_mut().enumerate() {
            for (f, z) in row.iter_mut().enumerate() {
                *z = *z + g[j][f] * w.weight(block.modulation_symbol(j, f));
            }
        }
        if lam * cst(1.25) >= top {
            break;
        }
        lam = lam * cst(2.0);
    }
    g.clear();
    block.with_frames(block.frames_from_coeffs(acc), T::zero())
}

/// One dyadic row of an adapted-norm evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleRow<T> {
    pub lambda: T,
    /// Summands in the order of the norm's definition.
    pub terms: Vec<T>,
    pub value: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptedNorm<T> {
    pub per_scale: Vec<ScaleRow<T>>,
    /// `ℓ²` sum of the per-scale values.
    pub total: T,
}

impl<T: Real> AdaptedNorm<T> {
    fn from_rows(per_scale: Vec<ScaleRow<T>>) -> Self {
        let total = per_scale.iter().fold(T::zero(), |a, r| a + r.value * r.value).sqrt();
        Self { per_scale, total }
    }

    /// Same table with the row at `lambda` set to zero.
    pub fn without_scale(&self, lambda: T) -> Self {
        let rows = self
            .per_scale
            .iter()
            .map(|r| {
                if r.lambda == lambda {
                    ScaleRow { lambda, terms: vec![T::zero(); r.terms.len()], value: T::zero() }
                } else {
                    r.clone()
                }
            })
            .collect();
        Self::from_rows(rows)
    }
}

struct Scaled<'a, T: Real> {
    block: &'a SpaceTimeBlock<T>,
    g: Vec<Vec<C<T>>>,
    lambda: T,
    w: DyadicWindow<T>,
}

impl<'a, T: Real> Scaled<'a, T> {
    fn new(block: &'a SpaceTimeBlock<T>, g: &[Vec<C<T>>], lambda: T) -> Self {
        let w = DyadicWindow::inhomogeneous(lambda);
        let spec = &block.spec;
        let g = g
            .iter()
            .map(|row| row.iter().enumerate().map(|(f, z)| *z * w.weight(spec.xi_abs(f))).collect())
            .collect();
        Self { block, g, lambda, w }
    }

    /// `sup_t ‖P_λ u(t)‖_{L²}` on the untapered frames.
    fn sup_l2(&self) -> T {
        let spec = &self.block.spec;
        self.block
            .frames
            .iter()
            .map(|fr| {
                let mut c = fr.clone();
                spec.forward(&mut c);
                for (f, z) in c.iter_mut().enumerate() {
                    *z = *z * self.w.weight(spec.xi_abs(f));
                }
                spec.l2_norm_coeffs(&c)
            })
            .fold(T::zero(), |m, v| m.max(v))
    }

    fn weighted(&self, m: impl Fn(usize, usize) -> T) -> Vec<Vec<C<T>>> {
        self.g
            .iter()
            .enumerate()
            .map(|(j, row)| row.iter().enumerate().map(|(f, z)| *z * m(j, f)).collect())
            .collect()
    }

    fn l2tx(&self, m: impl Fn(usize, usize) -> T) -> T {
        self.block.energy_coeffs(&self.weighted(m)).sqrt()
    }

    fn l2t_lpx(&self, m: impl Fn(usize, usize) -> T, p: T) -> T {
        let frames = self.block.frames_from_coeffs(self.weighted(m));
        let spec = &self.block.spec;
        let sq = frames.iter().fold(T::zero(), |a, fr| a + spec.lp_norm(fr, p).powi(2));
        (sq * self.block.dt).sqrt()
    }

    fn linf_l2(&self, m: impl Fn(usize, usize) -> T) -> T {
        let frames = self.block.frames_from_coeffs(self.weighted(m));
        frames.iter().map(|fr| self.block.spec.l2_norm(fr)).fold(T::zero(), |a, v| a.max(v))
    }
}

fn scales<T: Real>(block: &SpaceTimeBlock<T>) -> Vec<T> {
    dyadic_scales(block.spec.grid(), block.spec.grid().nyquist() / cst(0.625), false)
}

/// Discrete `S^{s,a,b}` norm (requires `d >= 3`). With `tilde` the split
/// variant with the separate high-modulation summand is evaluated.
pub fn s_norm<T: Real>(block: &SpaceTimeBlock<T>, s: T, a: T, b: T, tilde: bool) -> Result<AdaptedNorm<T>> {
    let d = block.spec.grid().d;
    if d < 3 {
        return Err(invalid(format!("S norm needs d >= 3, got d = {d}")));
    }
    let p_star = cst::<T>((2 * d) as f64 / (d as f64 - 2.0));
    let g = block.spacetime_coeffs();
    let mut rows = Vec::new();
    for lam in scales(block) {
        let sc = Scaled::new(block, &g, lam);
        let tau = |j: usize| block.tau(j).abs();
        let sigma = |j: usize, f: usize| block.modulation_symbol(j, f);
        let ratio = |j: usize| ((lam + tau(j)) / (lam * lam + tau(j))).powf(a);
        let t1 = lam.powf(s) * sc.sup_l2();
        let t2 = lam.powf(s - cst::<T>(2.0) * a) * sc.l2t_lpx(|j, _| (lam + tau(j)).powf(a), p_star);
        let mut terms = vec![t1, t2];
        if tilde {
            let m = lam * lam / cst(8.0);
            let high = |j: usize, f: usize| {
                let r = sigma(j, f);
                // C_{>=m} = 1 - η_{<=m/2}
                (T::one() - eta_le(r, m / cst(2.0))) * r.abs()
            };
            terms.push(lam.powf(s - T::one() + b) * sc.l2tx(high));
            terms.push(lam.powf(s - T::one()) * sc.l2tx(|j, f| ratio(j) * sigma(j, f).abs()));
        } else {
            terms.push(lam.powf(s - T::one() + b) * sc.l2tx(|j, f| ratio(j) * sigma(j, f).abs()));
        }
        let value = terms.iter().fold(T::zero(), |a, &t| a + t);
        rows.push(ScaleRow { lambda: sc.lambda, terms, value });
    }
    Ok(AdaptedNorm::from_rows(rows))
}

/// Discrete `W^{l,α,β}` norm.
pub fn w_norm<T: Real>(block: &SpaceTimeBlock<T>, l: T, alpha: T, beta: T) -> Result<AdaptedNorm<T>> {
    let g = block.spacetime_coeffs();
    let mut rows = Vec::new();
    for lam in scales(block) {
        let sc = Scaled::new(block, &g, lam);
        let tau = |j: usize| block.tau(j);
        let cut = (lam / cst(256.0)).powi(2);
        let t1 = lam.powf(l) * sc.sup_l2();
        let t2 = lam.powf(l - alpha) * sc.linf_l2(|j, _| (lam + tau(j).abs()).powf(alpha) * eta_le(tau(j), cut));
        let t3 = lam.powf(beta - T::one()) * sc.l2tx(|j, f| (block.spec.xi_abs(f) - tau(j)).abs());
        let terms = vec![t1, t2, t3];
        let value = t1 + t2 + t3;
        rows.push(ScaleRow { lambda: lam, terms, value });
    }
    Ok(AdaptedNorm::from_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::TorusGrid;
    use std::f64::consts::PI;

    fn line(n: usize) -> Arc<Spectral<f64>> {
        Spectral::shared(TorusGrid::new(1, n, 2.0 * PI).unwrap())
    }

    #[test]
    fn short_window_is_rejected() {
        let spec = line(8);
        let r = SpaceTimeBlock::from_fn(spec, 0.0, 0.1, 15, 0.0, |_| vec![Complex::new(0.0, 0.0); 8]);
        assert!(r.is_err());
    }

    #[test]
    fn taper_weights_shape() {
        let spec = line(8);
        let b = SpaceTimeBlock::from_fn(spec, 0.0, 0.1, 33, 0.25, |_| vec![Complex::new(1.0, 0.0); 8]).unwrap();
        let w = b.taper_weights();
        assert_eq!(w[0], 0.0);
        assert_eq!(w[32], 0.0);
        assert_eq!(w[16], 1.0);
        assert!((w[4] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spacetime_round_trip() {
        let spec = line(16);
        let b = SpaceTimeBlock::from_fn(spec.clone(), 0.0, 0.05, 32, 0.0, |t| {
            (0..16).map(|i| Complex::new((i as f64 * 0.3 + t).sin(), t * i as f64)).collect()
        })
        .unwrap();
        let back = b.frames_from_coeffs(b.spacetime_coeffs());
        for (x, y) in back.iter().flatten().zip(b.frames.iter().flatten()) {
            assert!((x - y).norm() < 1e-12);
        }
        let e = b.energy_coeffs(&b.spacetime_coeffs());
        assert!((e - b.energy()).abs() < 1e-10 * e);
    }

    #[test]
    fn zero_block_norms_vanish() {
        let spec = Spectral::shared(TorusGrid::new(3, 8, 2.0 * PI).unwrap());
        let b = SpaceTimeBlock::from_fn(spec, 0.0, 0.01, 16, 0.25, |_| vec![Complex::new(0.0, 0.0); 512]).unwrap();
        assert_eq!(s_norm(&b, 1.0, 0.25, 0.0, false).unwrap().total, 0.0);
        assert_eq!(w_norm(&b, 0.0, 0.25, 0.5).unwrap().total, 0.0);
    }

    #[test]
    fn s_norm_needs_three_dimensions() {
        let b = SpaceTimeBlock::from_fn(line(8), 0.0, 0.01, 16, 0.0, |_| vec![Complex::new(1.0, 0.0); 8]).unwrap();
        assert!(s_norm(&b, 0.0, 0.0, 0.0, false).is_err());
        assert!(w_norm(&b, 0.0, 0.0, 0.0).is_ok());
    }
}
