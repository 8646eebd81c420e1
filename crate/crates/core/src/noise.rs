//! Driving noise: coefficient fields, Brownian families, correction terms,
//! rescaling coefficients and geometric Brownian motions.
//!
//! `W1 = sum_k i phi1_k beta1_k` and `W2 = sum_k phi2_k beta2_k`.

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZnlError};
use crate::scalar::{cst, from_usize, Real};
use crate::spectral::{Spectral, C};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    Conservative,
    Nonconservative,
    Off,
}

/// One spatial coefficient `phi_k`.
#[derive(Debug, Clone, PartialEq)]
pub enum Coeff<T> {
    Constant(C<T>),
    /// `amp * cos(xi_k . x + phase)` with `xi_k = 2 pi k / L`.
    FourierMode { k: Vec<i64>, amp: C<T>, phase: T },
    /// `amp * exp(-|x - center|^2 / (2 width^2))`, periodized by minimal image.
    Bump { center: Vec<T>, width: T, amp: C<T> },
    /// Grid samples in the layout of the simulation grid.
    Samples(Vec<C<T>>),
}

impl<T: Real> Coeff<T> {
    pub fn is_constant(&self) -> bool {
        matches!(self, Coeff::Constant(_))
    }

    pub fn is_real(&self) -> bool {
        match self {
            Coeff::Constant(a) | Coeff::FourierMode { amp: a, .. } | Coeff::Bump { amp: a, .. } => {
                a.im == T::zero()
            }
            Coeff::Samples(v) => v.iter().all(|z| z.im == T::zero()),
        }
    }

    /// Samples the coefficient on the grid of `spec`.
    pub fn sample(&self, spec: &Spectral<T>) -> Result<Vec<C<T>>> {
        let g = spec.grid();
        let n = spec.len();
        match self {
            Coeff::Constant(a) => Ok(vec![*a; n]),
            Coeff::FourierMode { k, amp, phase } => {
                if k.len() != g.d {
                    return Err(ZnlError::InvalidArgument(format!(
                        "fourier-mode wavevector has {} entries for d = {}",
                        k.len(),
                        g.d
                    )));
                }
                Ok((0..n)
                    .map(|f| {
                        let x = g.coords(f);
                        let arg = x
                            .iter()
                            .zip(k)
                            .fold(*phase, |a, (&xi, &ki)| a + g.dxi() * cst(ki as f64) * xi);
                        *amp * arg.cos()
                    })
                    .collect())
            }
            Coeff::Bump { center, width, amp } => {
                if center.len() != g.d || !(*width > T::zero()) {
                    return Err(ZnlError::InvalidArgument("bump needs d center entries and width > 0".into()));
                }
                let half = g.length / cst(2.0);
                Ok((0..n)
                    .map(|f| {
                        let x = g.coords(f);
                        let r2 = x.iter().zip(center).fold(T::zero(), |a, (&xi, &ci)| {
                            let mut dx = xi - ci;
                            while dx > half {
                                dx = dx - g.length;
                            }
                            while dx < -half {
                                dx = dx + g.length;
                            }
                            a + dx * dx
                        });
                        *amp * (-r2 / (cst::<T>(2.0) * *width * *width)).exp()
                    })
                    .collect())
            }
            Coeff::Samples(v) => {
                if v.len() != n {
                    return Err(ZnlError::InvalidArgument(format!(
                        "sampled coefficient has {} values, grid has {n}",
                        v.len()
                    )));
                }
                Ok(v.clone())
            }
        }
    }
}

/// Noise coefficients and mode.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec<T> {
    pub mode: NoiseMode,
    pub schro: Vec<Coeff<T>>,
    pub wave: Vec<Coeff<T>>,
}

impl<T: Real> NoiseSpec<T> {
    pub fn off() -> Self {
        Self { mode: NoiseMode::Off, schro: vec![], wave: vec![] }
    }

    /// Non-conservative noise `phi1_k = i c_k`, `W2 = 0`.
    pub fn constant_imag(c: &[T]) -> Self {
        Self {
            mode: NoiseMode::Nonconservative,
            schro: c.iter().map(|&ck| Coeff::Constant(Complex::new(T::zero(), ck))).collect(),
            wave: vec![],
        }
    }

    pub fn k1(&self) -> usize {
        if self.mode == NoiseMode::Off {
            0
        } else {
            self.schro.len()
        }
    }

    pub fn k2(&self) -> usize {
        if self.mode == NoiseMode::Off {
            0
        } else {
            self.wave.len()
        }
    }

    /// Checks the structural requirements of the selected mode.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.wave.iter().any(|c| !c.is_real()) {
            errs.push("wave coefficients must be real-valued".to_string());
        }
        match self.mode {
            NoiseMode::Conservative => {
                if self.schro.iter().any(|c| !c.is_real()) {
                    errs.push("conservative noise needs real Schrödinger coefficients".into());
                }
            }
            NoiseMode::Nonconservative => {
                if self.schro.iter().any(|c| !c.is_constant()) {
                    errs.push("non-conservative noise needs spatially constant coefficients".into());
                }
                if self.c_norm() <= T::zero() {
                    errs.push("non-conservative noise needs sum (Im phi_k)^2 > 0".into());
                }
                if !self.wave.is_empty() {
                    errs.push("non-conservative noise requires W2 = 0".into());
                }
            }
            NoiseMode::Off => {}
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ZnlError::Validation(errs))
        }
    }

    /// `c_k = Im phi1_k` for constant coefficients (zero otherwise).
    pub fn c_vec(&self) -> Vec<T> {
        self.schro
            .iter()
            .map(|c| match c {
                Coeff::Constant(a) => a.im,
                _ => T::zero(),
            })
            .collect()
    }

    /// `||c||_{l^2}`.
    pub fn c_norm(&self) -> T {
        self.c_vec().iter().fold(T::zero(), |a, &c| a + c * c).sqrt()
    }

    /// `mu_hat = (sum |phi_k|^2 - sum phi_k^2) / 2` for constant coefficients.
    pub fn mu_hat(&self) -> Result<C<T>> {
        let mut acc = Complex::new(T::zero(), T::zero());
        for c in self.schro.iter().take(self.k1()) {
            match c {
                Coeff::Constant(a) => acc = acc + Complex::new(a.norm_sqr(), T::zero()) - a * a,
                _ => {
                    return Err(ZnlError::InvalidArgument(
                        "mu_hat is a constant only for spatially constant coefficients".into(),
                    ))
                }
            }
        }
        Ok(acc / cst::<T>(2.0))
    }

    /// Pointwise fields of the spec on a grid.
    pub fn materialize(&self, spec: &Spectral<T>) -> Result<NoiseFields<T>> {
        self.validate()?;
        let d = spec.grid().d;
        let n = spec.len();
        let mut phi1 = Vec::new();
        let mut grad1 = Vec::new();
        let mut lap1 = Vec::new();
        let mut mu = vec![T::zero(); n];
        let mut mu_hat = vec![Complex::new(T::zero(), T::zero()); n];
        for c in self.schro.iter().take(self.k1()) {
            let f = c.sample(spec)?;
            for i in 0..n {
                mu[i] = mu[i] + f[i].norm_sqr() / cst(2.0);
                mu_hat[i] = mu_hat[i] + (Complex::new(f[i].norm_sqr(), T::zero()) - f[i] * f[i]) / cst::<T>(2.0);
            }
            let grads = (0..d)
                .map(|a| {
                    let mut g = f.clone();
                    spec.derivative(&mut g, a);
                    g
                })
                .collect();
            let mut l = f.clone();
            spec.laplacian(&mut l);
            phi1.push(f);
            grad1.push(grads);
            lap1.push(l);
        }
        let phi2 = self
            .wave
            .iter()
            .take(self.k2())
            .map(|c| c.sample(spec))
            .collect::<Result<Vec<_>>>()?;
        let constant = self.schro.iter().all(|c| c.is_constant());
        Ok(NoiseFields { phi1, grad1, lap1, phi2, mu, mu_hat, constant })
    }
}

/// Coefficient fields sampled on a grid, with spectral derivatives.
#[derive(Debug, Clone)]
pub struct NoiseFields<T> {
    pub phi1: Vec<Vec<C<T>>>,
    /// `grad1[k][axis]`.
    pub grad1: Vec<Vec<Vec<C<T>>>>,
    pub lap1: Vec<Vec<C<T>>>,
    pub phi2: Vec<Vec<C<T>>>,
    /// `mu = sum |phi1_k|^2 / 2`.
    pub mu: Vec<T>,
    /// Pointwise `mu_hat`.
    pub mu_hat: Vec<C<T>>,
    pub constant: bool,
}

impl<T: Real> NoiseFields<T> {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn k1(&self) -> usize {
        self.phi1.len()
    }

    pub fn k2(&self) -> usize {
        self.phi2.len()
    }

    /// `W1(x) = sum_k i phi1_k(x) beta_k` for given Brownian values.
    pub fn w1(&self, beta: &[T]) -> Vec<C<T>> {
        let mut out = vec![Complex::new(T::zero(), T::zero()); self.len()];
        for (f, &b) in self.phi1.iter().zip(beta) {
            let ib = Complex::new(T::zero(), b);
            for (o, p) in out.iter_mut().zip(f) {
                *o = *o + ib * p;
            }
        }
        out
    }

    /// `W2(x) = sum_k phi2_k(x) beta_k`.
    pub fn w2(&self, beta: &[T]) -> Vec<C<T>> {
        let mut out = vec![Complex::new(T::zero(), T::zero()); self.len()];
        for (f, &b) in self.phi2.iter().zip(beta) {
            for (o, p) in out.iter_mut().zip(f) {
                *o = *o + p * b;
            }
        }
        out
    }

    /// `b = 2 grad W1`, one field per axis.
    pub fn coeff_b(&self, beta: &[T]) -> Vec<Vec<C<T>>> {
        let d = self.grad1.first().map_or(0, |g| g.len());
        (0..d)
            .map(|a| {
                let mut out = vec![Complex::new(T::zero(), T::zero()); self.len()];
                for (g, &b) in self.grad1.iter().zip(beta) {
                    let f = Complex::new(T::zero(), cst::<T>(2.0) * b);
                    for (o, p) in out.iter_mut().zip(&g[a]) {
                        *o = *o + f * p;
                    }
                }
                out
            })
            .collect()
    }

    /// `c = sign * (grad W1 . grad W1) + Delta W1`, using the bilinear square
    /// so that `c = -sum_j (sum_k d_j phi_k beta_k)^2 + i sum_k Delta phi_k beta_k`
    /// for real coefficients. `sign = +1` is the standard form.
    pub fn coeff_c(&self, beta: &[T], sign: CSign) -> Vec<C<T>> {
        let n = self.len();
        let d = self.grad1.first().map_or(0, |g| g.len());
        let mut out = vec![Complex::new(T::zero(), T::zero()); n];
        for a in 0..d {
            let mut gw = vec![Complex::new(T::zero(), T::zero()); n];
            for (g, &b) in self.grad1.iter().zip(beta) {
                let ib = Complex::new(T::zero(), b);
                for (o, p) in gw.iter_mut().zip(&g[a]) {
                    *o = *o + ib * p;
                }
            }
            for (o, w) in out.iter_mut().zip(&gw) {
                *o = *o + w * w * sign.factor::<T>();
            }
        }
        for (l, &b) in self.lap1.iter().zip(beta) {
            let ib = Complex::new(T::zero(), b);
            for (o, p) in out.iter_mut().zip(l) {
                *o = *o + ib * p;
            }
        }
        out
    }
}

/// Sign in front of the quadratic part of the rescaled potential `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CSign {
    /// `c = (grad W1)^2 + Delta W1` with the bilinear square, which equals
    /// `-|grad W1|^2 + Delta W1` for real coefficients.
    #[default]
    Standard,
    /// The opposite sign on the quadratic term.
    Flipped,
}

impl CSign {
    pub fn factor<T: Real>(self) -> T {
        match self {
            CSign::Standard => T::one(),
            CSign::Flipped => -T::one(),
        }
    }
}

/// Independent Brownian increments on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPathSet<T> {
    pub times: Vec<T>,
    /// `schro[k][n]` is `beta1_k(t_{n+1}) - beta1_k(t_n)`.
    pub schro: Vec<Vec<T>>,
    pub wave: Vec<Vec<T>>,
    pub seed: u64,
}

/// Samples exact `N(0, dt_n)` increments for `k1` Schrödinger and `k2` wave
/// Brownian motions. Streams are drawn per `k` in order, Schrödinger first.
pub fn sample_brownian<T: Real>(k1: usize, k2: usize, times: &[T], seed: u64) -> Result<BrownianPathSet<T>> {
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(ZnlError::InvalidArgument("time grid must be strictly increasing".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = times.len().saturating_sub(1);
    let mut draw = |_| -> Vec<T> {
        (0..steps)
            .map(|n| {
                let z: f64 = StandardNormal.sample(&mut rng);
                cst::<T>(z) * (times[n + 1] - times[n]).sqrt()
            })
            .collect()
    };
    let schro = (0..k1).map(&mut draw).collect();
    let wave = (0..k2).map(&mut draw).collect();
    Ok(BrownianPathSet { times: times.to_vec(), schro, wave, seed })
}

/// Uniform grid `0, dt, ..., steps * dt`.
pub fn uniform_grid<T: Real>(dt: T, steps: usize) -> Vec<T> {
    (0..=steps).map(|n| dt * from_usize(n)).collect()
}

impl<T: Real> BrownianPathSet<T> {
    pub fn steps(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    fn cumulative(incs: &[Vec<T>]) -> Vec<Vec<T>> {
        incs.iter()
            .map(|inc| {
                let mut b = Vec::with_capacity(inc.len() + 1);
                let mut acc = T::zero();
                b.push(acc);
                for &x in inc {
                    acc = acc + x;
                    b.push(acc);
                }
                b
            })
            .collect()
    }

    /// `beta1[k][n]` at grid points.
    pub fn beta1(&self) -> Vec<Vec<T>> {
        Self::cumulative(&self.schro)
    }

    pub fn beta2(&self) -> Vec<Vec<T>> {
        Self::cumulative(&self.wave)
    }

    /// Path restarted at grid index `n0`: `beta(t_{n0} + t) - beta(t_{n0})`.
    pub fn shifted(&self, n0: usize) -> Result<Self> {
        if n0 >= self.times.len() {
            return Err(ZnlError::InvalidArgument(format!("shift index {n0} is off the grid")));
        }
        let t0 = self.times[n0];
        Ok(Self {
            times: self.times[n0..].iter().map(|&t| t - t0).collect(),
            schro: self.schro.iter().map(|v| v[n0..].to_vec()).collect(),
            wave: self.wave.iter().map(|v| v[n0..].to_vec()).collect(),
            seed: self.seed,
        })
    }

    /// Rows `(t, k, beta)` for CSV export; wave motions follow with indices
    /// offset by the Schrödinger count.
    pub fn rows(&self) -> Vec<(T, usize, T)> {
        let mut out = Vec::new();
        for (k, b) in self.beta1().into_iter().chain(self.beta2()).enumerate() {
            for (n, v) in b.into_iter().enumerate() {
                out.push((self.times[n], k, v));
            }
        }
        out
    }
}

/// Time-gridded geometric Brownian motion `h_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct GbmPath<T> {
    pub times: Vec<T>,
    pub values: Vec<T>,
    pub c_norm: T,
}

/// `h(t) = exp(-2 sum_k c_k beta_k(t) - 2 |c|^2 t)` on the path grid.
pub fn gbm_from_coeffs<T: Real>(c_vec: &[T], paths: &BrownianPathSet<T>) -> Result<GbmPath<T>> {
    if c_vec.len() != paths.schro.len() {
        return Err(ZnlError::InvalidArgument(format!(
            "{} coefficients for {} Brownian motions",
            c_vec.len(),
            paths.schro.len()
        )));
    }
    let c2 = c_vec.iter().fold(T::zero(), |a, &c| a + c * c);
    let t0 = paths.times.first().copied().unwrap_or(T::zero());
    let mut expo = vec![T::zero(); paths.times.len()];
    for (c, inc) in c_vec.iter().zip(&paths.schro) {
        let mut acc = T::zero();
        for (n, &x) in inc.iter().enumerate() {
            acc = acc + x;
            expo[n + 1] = expo[n + 1] - cst::<T>(2.0) * *c * acc;
        }
    }
    let values = paths
        .times
        .iter()
        .zip(&expo)
        .map(|(&t, &e)| (e - cst::<T>(2.0) * c2 * (t - t0)).exp())
        .collect();
    Ok(GbmPath { times: paths.times.clone(), values, c_norm: c2.sqrt() })
}

/// Extension operator `psi_{c,t0}[g](t)`: `exp(-2 g(t) - 2 c^2 t)` for
/// `t >= t0`, a linear ramp `(c^2 (t - t0) + 1) exp(-2 g(t0) - 2 c^2 t0)` on
/// `[t0 - 1/c^2, t0)`, zero before. `g_t` and `g_t0` are `g(t)` and `g(t0)`.
pub fn psi_value<T: Real>(c: T, t0: T, g_t0: T, t: T, g_t: T) -> T {
    let two = cst::<T>(2.0);
    let c2 = c * c;
    if t >= t0 {
        (-two * g_t - two * c2 * t).exp()
    } else if t >= t0 - T::one() / c2 {
        (-two * g_t0 - two * c2 * t0).exp() * (c2 * (t - t0) + T::one())
    } else {
        T::zero()
    }
}

/// Samples `psi_{c,t0}[g]` on the grid `t0 + j dt`, `j = -m..`, where
/// `m = ceil(1/(c^2 dt))` and `g` is given on `j dt`, `j = 0..`. Returns the
/// first grid time and the values.
pub fn extend_gbm<T: Real>(g: &[T], dt: T, c: T, t0: T) -> Result<(T, Vec<T>)> {
    if !(c > T::zero()) {
        return Err(ZnlError::InvalidArgument(format!("extension needs c > 0, got {c}")));
    }
    if t0 < T::zero() || !(dt > T::zero()) {
        return Err(ZnlError::InvalidArgument("extension needs t0 >= 0 and dt > 0".into()));
    }
    let i0 = (t0 / dt).round().to_usize().unwrap_or(usize::MAX);
    if i0 >= g.len() {
        return Err(ZnlError::InvalidArgument("t0 beyond the sampled path".into()));
    }
    let t0 = dt * from_usize(i0);
    let m = (T::one() / (c * c * dt)).ceil().to_usize().unwrap_or(0);
    let start = t0 - dt * from_usize(m);
    let mut out = Vec::with_capacity(m + g.len() - i0);
    for j in 0..m {
        let t = start + dt * from_usize(j);
        out.push(psi_value(c, t0, g[i0], t, g[i0]));
    }
    for (i, &gi) in g.iter().enumerate().skip(i0) {
        out.push(psi_value(c, t0, g[i0], dt * from_usize(i), gi));
    }
    Ok((start, out))
}

/// Stochastic wave convolution `T_t(W2)` on the path grid via the exact
/// recursion `T_{n+1} = e^{i dt |nabla|} (T_n - i dW2_n)`.
pub fn wave_convolution<T: Real>(
    spec: &Spectral<T>,
    fields: &NoiseFields<T>,
    paths: &BrownianPathSet<T>,
) -> Vec<Vec<C<T>>> {
    let n = spec.len();
    let mut cur = vec![Complex::new(T::zero(), T::zero()); n];
    let mut out = vec![cur.clone()];
    let minus_i = Complex::new(T::zero(), -T::one());
    for step in 0..paths.steps() {
        let dt = paths.times[step + 1] - paths.times[step];
        let inc: Vec<T> = paths.wave.iter().map(|w| w[step]).collect();
        let dw2 = fields.w2(&inc);
        for (c, w) in cur.iter_mut().zip(&dw2) {
            *c = *c + minus_i * w;
        }
        spec.apply_symbol(&mut cur, &spec.wave_symbol(dt));
        out.push(cur.clone());
    }
    out
}

/// Truncated sums of the summability hypothesis on the noise coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HypothesisReport<T> {
    /// `sum_k ||phi1_k||^2_{H^{d/2 + 2 + (s-1)_+}}`.
    pub sum1: T,
    /// `sum_l sum_k int sup_{y perp e_l} |grad phi1_k(r e_l + y)| dr`.
    pub lateral_sum: T,
    /// `sum_k ||phi2_k||^2_{H^{d/2 + s - 1}}`.
    pub sum2: T,
    pub pass: bool,
}

pub fn check_hypothesis_h<T: Real>(
    spec: &Spectral<T>,
    fields: &NoiseFields<T>,
    s: T,
    budget: T,
) -> HypothesisReport<T> {
    let d = cst::<T>(spec.grid().d as f64);
    let two = cst::<T>(2.0);
    let r1 = d / two + two + (s - T::one()).max(T::zero());
    let r2 = d / two + s - T::one();
    let sum1 = fields.phi1.iter().fold(T::zero(), |a, f| a + spec.hs_norm(f, r1).powi(2));
    let sum2 = fields.phi2.iter().fold(T::zero(), |a, f| a + spec.hs_norm(f, r2).powi(2));
    let mut lateral_sum = T::zero();
    for g in &fields.grad1 {
        let mag: Vec<C<T>> = (0..spec.len())
            .map(|i| {
                let m = g.iter().fold(T::zero(), |a, ga| a + ga[i].norm_sqr()).sqrt();
                Complex::new(m, T::zero())
            })
            .collect();
        for axis in 0..spec.grid().d {
            lateral_sum = lateral_sum + spec.lateral_norm_l1inf(&mag, axis);
        }
    }
    let ok = |x: T| x.is_finite() && x <= budget;
    HypothesisReport { sum1, lateral_sum, sum2, pass: ok(sum1) && ok(lateral_sum) && ok(sum2) }
}
