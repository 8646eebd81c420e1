//! Split-step integrators for the three formulations of the stochastic
//! Zakharov system, the rescaling transforms between them, and the run
//! driver with norm monitoring.
//!
//! * Itô form: `dX = iΔX dt - i Re(Y) X dt - μ X dt + X dW1`,
//!   `dY = i|∇|Y dt + i|∇||X|² dt - i w2_inc`.
//! * Rescaled conservative: `u = e^{-W1} X`, `v = Y - T_t(W2)`,
//!   `∂u = iΔu - i(Re v + Re T)u + i b·∇u + i c u`, `∂v = i|∇|v + i|∇||u|²`.
//! * Rescaled non-conservative: `z = e^{μ̂t - W1} X`, `v = Y`,
//!   `∂z = iΔz - i Re(v) z`, `∂v = i|∇|v + i h |∇||z|²`.

use std::sync::Arc;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZnlError};
use crate::noise::{gbm_from_coeffs, sample_brownian, BrownianPathSet, CSign, NoiseFields, NoiseMode, NoiseSpec};
use crate::regimes::endpoint;
use crate::scalar::{cst, from_usize, Real};
use crate::spectral::{Spectral, TorusGrid, C};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formulation {
    Ito,
    RescaledConservative,
    RescaledNonconservative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Lie,
    #[default]
    Strang,
}

/// Schrödinger and wave components on one grid, tagged with their meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct ZakharovState<T> {
    /// `X`, `u` or `z`.
    pub schro: Vec<C<T>>,
    /// `Y` or `v`.
    pub wave: Vec<C<T>>,
    /// Stochastic wave convolution `T_t(W2)` carried by the rescaled
    /// conservative form; empty otherwise.
    pub conv: Vec<C<T>>,
    pub t: T,
    pub formulation: Formulation,
}

impl<T: Real> ZakharovState<T> {
    pub fn new(schro: Vec<C<T>>, wave: Vec<C<T>>, formulation: Formulation) -> Self {
        let conv = if formulation == Formulation::RescaledConservative {
            vec![zero(); schro.len()]
        } else {
            Vec::new()
        };
        Self { schro, wave, conv, t: T::zero(), formulation }
    }

    fn is_finite(&self) -> bool {
        let ok = |v: &[C<T>]| v.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        ok(&self.schro) && ok(&self.wave) && ok(&self.conv)
    }

    fn expect(&self, f: Formulation) -> Result<()> {
        if self.formulation == f {
            Ok(())
        } else {
            Err(ZnlError::InvalidArgument(format!(
                "state is in {:?} form, expected {f:?}",
                self.formulation
            )))
        }
    }
}

fn zero<T: Real>() -> C<T> {
    Complex::new(T::zero(), T::zero())
}

fn iu<T: Real>() -> C<T> {
    Complex::new(T::zero(), T::one())
}

struct Flows<T> {
    dt: T,
    half_s: Vec<C<T>>,
    half_w: Vec<C<T>>,
    full_s: Vec<C<T>>,
    full_w: Vec<C<T>>,
}

/// Stepper for one grid. Holds cached flow symbols for the last `dt` used.
pub struct Integrator<T: Real> {
    spec: Arc<Spectral<T>>,
    pub scheme: Scheme,
    pub dealias: bool,
    pub c_sign: CSign,
    /// Disables both nonlinear couplings (linear test runs).
    pub linear: bool,
    abs_grad: Vec<T>,
    keep: Vec<bool>,
    xi_axes: Vec<Vec<T>>,
    flows: Option<Flows<T>>,
}

impl<T: Real> Integrator<T> {
    pub fn new(spec: Arc<Spectral<T>>, scheme: Scheme, dealias: bool) -> Self {
        let abs_grad = spec.xi2().iter().map(|k| k.sqrt()).collect();
        let keep = spec.dealias_mask();
        let n = spec.grid().n as i64;
        let xi_axes = (0..spec.grid().d)
            .map(|a| {
                (0..spec.len())
                    .map(|f| {
                        if n % 2 == 0 && spec.mode_k(f, a) == -n / 2 {
                            T::zero()
                        } else {
                            spec.xi(f, a)
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            spec,
            scheme,
            dealias,
            c_sign: CSign::Standard,
            linear: false,
            abs_grad,
            keep,
            xi_axes,
            flows: None,
        }
    }

    pub fn spectral(&self) -> &Arc<Spectral<T>> {
        &self.spec
    }

    fn flows(&mut self, dt: T) -> &Flows<T> {
        if self.flows.as_ref().is_none_or(|f| f.dt != dt) {
            let h = dt / cst(2.0);
            self.flows = Some(Flows {
                dt,
                half_s: self.spec.schroedinger_symbol(h),
                half_w: self.spec.wave_symbol(h),
                full_s: self.spec.schroedinger_symbol(dt),
                full_w: self.spec.wave_symbol(dt),
            });
        }
        self.flows.as_ref().expect("flows set above")
    }

    /// `|∇|(|x|²)`, dealiased when enabled; real-valued.
    pub fn wave_source(&self, x: &[C<T>]) -> Vec<C<T>> {
        let mut r: Vec<C<T>> = x.iter().map(|z| Complex::new(z.norm_sqr(), T::zero())).collect();
        self.spec.forward(&mut r);
        for (i, c) in r.iter_mut().enumerate() {
            *c = if self.dealias && !self.keep[i] { zero() } else { *c * self.abs_grad[i] };
        }
        self.spec.inverse(&mut r);
        for c in r.iter_mut() {
            c.im = T::zero();
        }
        r
    }

    /// Exact flow of the local part: `x <- e^{-i dt (Re y + extra)} x`, then
    /// `y <- y + i dt h |∇||x|²`. `Re y` is invariant under the second update.
    fn local(&self, x: &mut [C<T>], y: &mut [C<T>], extra: Option<&[C<T>]>, src_of: Option<&[C<T>]>, dt: T, h: T) {
        if self.linear {
            return;
        }
        for (i, (xi, yi)) in x.iter_mut().zip(y.iter()).enumerate() {
            let pot = yi.re + extra.map_or(T::zero(), |e| e[i].re);
            *xi = *xi * Complex::from_polar(T::one(), -dt * pot);
        }
        let s = self.wave_source(src_of.unwrap_or(x));
        let f = iu::<T>() * (dt * h);
        for (yi, si) in y.iter_mut().zip(&s) {
            *yi = *yi + f * si;
        }
    }

    fn add_wave_noise(y: &mut [C<T>], dw2: &[C<T>]) {
        for (yi, w) in y.iter_mut().zip(dw2) {
            *yi = *yi - iu::<T>() * w;
        }
    }

    fn check(&self, st: &ZakharovState<T>) -> Result<()> {
        if st.is_finite() {
            Ok(())
        } else {
            Err(ZnlError::BlowupNumerical { t: st.t.to_f64().unwrap_or(f64::NAN) })
        }
    }

    /// One step of the Itô form with the exact multiplicative factor
    /// `e^{ΔW1 - μ̂ dt}` (pointwise `μ̂`).
    pub fn step_ito(
        &mut self,
        st: &mut ZakharovState<T>,
        fields: &NoiseFields<T>,
        dw1: &[T],
        dw2: &[T],
        dt: T,
    ) -> Result<()> {
        st.expect(Formulation::Ito)?;
        let spec = self.spec.clone();
        let w2_inc = fields.w2(dw2);
        let noise_factor = |x: &mut [C<T>]| {
            if fields.k1() == 0 {
                return;
            }
            let w = fields.w1(dw1);
            for ((xi, wi), mh) in x.iter_mut().zip(&w).zip(&fields.mu_hat) {
                *xi = *xi * (*wi - *mh * dt).exp();
            }
        };
        match self.scheme {
            Scheme::Strang => {
                let fl = self.flows(dt);
                let (hs, hw) = (fl.half_s.clone(), fl.half_w.clone());
                spec.apply_symbol(&mut st.schro, &hs);
                Self::add_wave_noise(&mut st.wave, &w2_inc);
                spec.apply_symbol(&mut st.wave, &hw);
                self.local(&mut st.schro, &mut st.wave, None, None, dt, T::one());
                noise_factor(&mut st.schro);
                spec.apply_symbol(&mut st.schro, &hs);
                spec.apply_symbol(&mut st.wave, &hw);
            }
            Scheme::Lie => {
                let fl = self.flows(dt);
                let (fs, fw) = (fl.full_s.clone(), fl.full_w.clone());
                spec.apply_symbol(&mut st.schro, &fs);
                Self::add_wave_noise(&mut st.wave, &w2_inc);
                spec.apply_symbol(&mut st.wave, &fw);
                self.local(&mut st.schro, &mut st.wave, None, None, dt, T::one());
                noise_factor(&mut st.schro);
            }
        }
        st.t = st.t + dt;
        self.check(st)
    }

    /// Literal Itô step (exponential Euler–Maruyama): linear flows exact,
    /// drift and noise explicit. For cross-validation only.
    pub fn step_ito_em(
        &mut self,
        st: &mut ZakharovState<T>,
        fields: &NoiseFields<T>,
        dw1: &[T],
        dw2: &[T],
        dt: T,
    ) -> Result<()> {
        st.expect(Formulation::Ito)?;
        let spec = self.spec.clone();
        let w1 = fields.w1(dw1);
        let w2 = fields.w2(dw2);
        let src = if self.linear { vec![zero(); st.schro.len()] } else { self.wave_source(&st.schro) };
        for i in 0..st.schro.len() {
            let x = st.schro[i];
            let pot = if self.linear { T::zero() } else { st.wave[i].re };
            let drift = -iu::<T>() * pot * x - x * fields.mu[i];
            st.schro[i] = x + drift * dt + x * w1[i];
            st.wave[i] = st.wave[i] + iu::<T>() * src[i] * dt - iu::<T>() * w2[i];
        }
        let fl = self.flows(dt);
        let (fs, fw) = (fl.full_s.clone(), fl.full_w.clone());
        spec.apply_symbol(&mut st.schro, &fs);
        spec.apply_symbol(&mut st.wave, &fw);
        st.t = st.t + dt;
        self.check(st)
    }

    /// `u' = i b·∇u + i c u` with frozen coefficients, RK4 under a CFL bound.
    fn transport(&self, u: &mut [C<T>], b: &[Vec<C<T>>], c: &[C<T>], dt: T) {
        let bmax = b
            .iter()
            .flat_map(|ba| ba.iter())
            .fold(T::zero(), |m, z| m.max(z.norm()));
        let cmax = c.iter().fold(T::zero(), |m, z| m.max(z.norm()));
        if bmax == T::zero() && cmax == T::zero() {
            return;
        }
        let kmax = self.spec.grid().nyquist();
        let rate = cst::<T>(2.0) * (bmax * kmax + cmax);
        let nsub = (dt * rate).ceil().to_usize().unwrap_or(1).max(1);
        let h = dt / from_usize(nsub);
        let rhs = |w: &[C<T>]| -> Vec<C<T>> {
            let mut wh = w.to_vec();
            self.spec.forward(&mut wh);
            let mut acc = vec![zero::<T>(); w.len()];
            for (a, ba) in b.iter().enumerate() {
                let mut g: Vec<C<T>> = wh
                    .iter()
                    .zip(&self.xi_axes[a])
                    .map(|(z, &k)| *z * Complex::new(T::zero(), k))
                    .collect();
                self.spec.inverse(&mut g);
                for ((o, gi), bi) in acc.iter_mut().zip(&g).zip(ba) {
                    *o = *o + bi * gi;
                }
            }
            if self.dealias {
                self.spec.dealias(&mut acc);
            }
            acc.iter()
                .zip(w)
                .zip(c)
                .map(|((a, wi), ci)| iu::<T>() * (a + ci * wi))
                .collect()
        };
        let two = cst::<T>(2.0);
        let six = cst::<T>(6.0);
        for _ in 0..nsub {
            let k1 = rhs(u);
            let tmp: Vec<_> = u.iter().zip(&k1).map(|(x, k)| x + k * (h / two)).collect();
            let k2 = rhs(&tmp);
            let tmp: Vec<_> = u.iter().zip(&k2).map(|(x, k)| x + k * (h / two)).collect();
            let k3 = rhs(&tmp);
            let tmp: Vec<_> = u.iter().zip(&k3).map(|(x, k)| x + k * h).collect();
            let k4 = rhs(&tmp);
            for i in 0..u.len() {
                u[i] = u[i] + (k1[i] + (k2[i] + k3[i]) * two + k4[i]) * (h / six);
            }
        }
    }

    /// One step of the rescaled conservative form. `beta` holds
    /// `beta1_k(t_n)`; coefficients `b`, `c` are frozen at the step midpoint.
    pub fn step_rescaled_conservative(
        &mut self,
        st: &mut ZakharovState<T>,
        fields: &NoiseFields<T>,
        beta: &[T],
        dw1: &[T],
        dw2: &[T],
        dt: T,
    ) -> Result<()> {
        st.expect(Formulation::RescaledConservative)?;
        let spec = self.spec.clone();
        let w2_inc = fields.w2(dw2);
        let mid: Vec<T> = beta.iter().zip(dw1).map(|(&b, &d)| b + d / cst(2.0)).collect();
        let (b, c) = if fields.k1() > 0 && !fields.constant {
            (fields.coeff_b(&mid), fields.coeff_c(&mid, self.c_sign))
        } else {
            (Vec::new(), vec![zero(); st.schro.len()])
        };
        match self.scheme {
            Scheme::Strang => {
                let fl = self.flows(dt);
                let (hs, hw) = (fl.half_s.clone(), fl.half_w.clone());
                spec.apply_symbol(&mut st.schro, &hs);
                spec.apply_symbol(&mut st.wave, &hw);
                if fields.k2() > 0 {
                    Self::add_wave_noise(&mut st.conv, &w2_inc);
                    spec.apply_symbol(&mut st.conv, &hw);
                }
                let conv = (fields.k2() > 0).then(|| st.conv.clone());
                self.local(&mut st.schro, &mut st.wave, conv.as_deref(), None, dt, T::one());
                self.transport(&mut st.schro, &b, &c, dt);
                spec.apply_symbol(&mut st.schro, &hs);
                spec.apply_symbol(&mut st.wave, &hw);
                if fields.k2() > 0 {
                    spec.apply_symbol(&mut st.conv, &hw);
                }
            }
            Scheme::Lie => {
                let fl = self.flows(dt);
                let (fs, fw) = (fl.full_s.clone(), fl.full_w.clone());
                spec.apply_symbol(&mut st.schro, &fs);
                spec.apply_symbol(&mut st.wave, &fw);
                if fields.k2() > 0 {
                    Self::add_wave_noise(&mut st.conv, &w2_inc);
                    spec.apply_symbol(&mut st.conv, &fw);
                }
                let conv = (fields.k2() > 0).then(|| st.conv.clone());
                self.local(&mut st.schro, &mut st.wave, conv.as_deref(), None, dt, T::one());
                self.transport(&mut st.schro, &b, &c, dt);
            }
        }
        st.t = st.t + dt;
        self.check(st)
    }

    /// One step of the non-conservative random system with wave-source
    /// factor `h` (midpoint value for Strang, left value for Lie).
    pub fn step_nonconservative(&mut self, st: &mut ZakharovState<T>, h: T, dt: T) -> Result<()> {
        st.expect(Formulation::RescaledNonconservative)?;
        let spec = self.spec.clone();
        match self.scheme {
            Scheme::Strang => {
                let fl = self.flows(dt);
                let (hs, hw) = (fl.half_s.clone(), fl.half_w.clone());
                spec.apply_symbol(&mut st.schro, &hs);
                spec.apply_symbol(&mut st.wave, &hw);
                self.local(&mut st.schro, &mut st.wave, None, None, dt, h);
                spec.apply_symbol(&mut st.schro, &hs);
                spec.apply_symbol(&mut st.wave, &hw);
            }
            Scheme::Lie => {
                let fl = self.flows(dt);
                let (fs, fw) = (fl.full_s.clone(), fl.full_w.clone());
                spec.apply_symbol(&mut st.schro, &fs);
                spec.apply_symbol(&mut st.wave, &fw);
                self.local(&mut st.schro, &mut st.wave, None, None, dt, h);
            }
        }
        st.t = st.t + dt;
        self.check(st)
    }
}

/// Non-conservative Strang state with merged half flows: Fourier
/// coefficients right after the last local step, owing a half flow of
/// `pending`.
#[derive(Debug, Clone)]
pub struct FusedNc<T> {
    xh: Vec<C<T>>,
    yh: Vec<C<T>>,
    pending: Option<T>,
    pub t: T,
}

impl<T: Real> Integrator<T> {
    fn half_symbols(&mut self, dt: T) -> (Vec<C<T>>, Vec<C<T>>) {
        let fl = self.flows(dt);
        (fl.half_s.clone(), fl.half_w.clone())
    }

    /// Starts fused Strang stepping from a non-conservative state.
    pub fn fused_start(&self, st: &ZakharovState<T>) -> Result<FusedNc<T>> {
        st.expect(Formulation::RescaledNonconservative)?;
        let mut xh = st.schro.clone();
        let mut yh = st.wave.clone();
        self.spec.forward(&mut xh);
        self.spec.forward(&mut yh);
        Ok(FusedNc { xh, yh, pending: None, t: st.t })
    }

    /// One step of [`Integrator::step_nonconservative`] (Strang) on the fused
    /// state, four transforms per step.
    pub fn fused_step(&mut self, f: &mut FusedNc<T>, h: T, dt: T) -> Result<()> {
        let (hs, hw) = self.half_symbols(dt);
        let prev = f.pending.map(|p| self.half_symbols(p));
        for i in 0..f.xh.len() {
            let (mut a, mut b) = (hs[i], hw[i]);
            if let Some((ps, pw)) = &prev {
                a = a * ps[i];
                b = b * pw[i];
            }
            f.xh[i] = f.xh[i] * a;
            f.yh[i] = f.yh[i] * b;
        }
        if !self.linear {
            let mut x = f.xh.clone();
            let mut y = f.yh.clone();
            self.spec.inverse(&mut x);
            self.spec.inverse(&mut y);
            for (xi, yi) in x.iter_mut().zip(&y) {
                *xi = *xi * Complex::from_polar(T::one(), -dt * yi.re);
            }
            let mut src: Vec<C<T>> = x.iter().map(|z| Complex::new(z.norm_sqr(), T::zero())).collect();
            self.spec.forward(&mut src);
            let fac = iu::<T>() * (dt * h);
            for (i, (yi, si)) in f.yh.iter_mut().zip(&src).enumerate() {
                if !self.dealias || self.keep[i] {
                    *yi = *yi + fac * si * self.abs_grad[i];
                }
            }
            self.spec.forward(&mut x);
            f.xh = x;
        }
        f.pending = Some(dt);
        f.t = f.t + dt;
        let finite = f.xh.iter().chain(&f.yh).all(|z| z.re.is_finite() && z.im.is_finite());
        if finite {
            Ok(())
        } else {
            Err(ZnlError::BlowupNumerical { t: f.t.to_f64().unwrap_or(f64::NAN) })
        }
    }

    /// Physical non-conservative state at the fused state's time.
    pub fn fused_state(&mut self, f: &FusedNc<T>) -> ZakharovState<T> {
        let mut x = f.xh.clone();
        let mut y = f.yh.clone();
        if let Some(p) = f.pending {
            let (hs, hw) = self.half_symbols(p);
            Spectral::mul_coeffs(&mut x, &hs);
            Spectral::mul_coeffs(&mut y, &hw);
        }
        self.spec.inverse(&mut x);
        self.spec.inverse(&mut y);
        ZakharovState { schro: x, wave: y, conv: Vec::new(), t: f.t, formulation: Formulation::RescaledNonconservative }
    }
}

/// Pointwise `e^{W1}` for Brownian values `beta`.
fn exp_w1<T: Real>(fields: &NoiseFields<T>, beta: &[T]) -> Vec<C<T>> {
    fields.w1(beta).into_iter().map(|w| w.exp()).collect()
}

/// Maps an Itô-form state to a rescaled form.
///
/// `beta` holds `beta1_k(t)`; `conv` is `T_t(W2)` and is only used for the
/// conservative target.
pub fn rescale_forward<T: Real>(
    st: &ZakharovState<T>,
    target: Formulation,
    fields: &NoiseFields<T>,
    beta: &[T],
    conv: Option<&[C<T>]>,
) -> Result<ZakharovState<T>> {
    st.expect(Formulation::Ito)?;
    let e = exp_w1(fields, beta);
    let mut out = st.clone();
    out.formulation = target;
    match target {
        Formulation::Ito => return Err(ZnlError::InvalidArgument("target must be a rescaled form".into())),
        Formulation::RescaledConservative => {
            for (x, f) in out.schro.iter_mut().zip(&e) {
                *x = *x / f;
            }
            out.conv = conv.map_or_else(|| vec![zero(); st.schro.len()], |c| c.to_vec());
            for (y, c) in out.wave.iter_mut().zip(&out.conv) {
                *y = *y - c;
            }
        }
        Formulation::RescaledNonconservative => {
            for ((x, f), mh) in out.schro.iter_mut().zip(&e).zip(&fields.mu_hat) {
                *x = *x * (*mh * st.t).exp() / f;
            }
            out.conv = Vec::new();
        }
    }
    Ok(out)
}

/// Inverse of [`rescale_forward`].
pub fn rescale_backward<T: Real>(st: &ZakharovState<T>, fields: &NoiseFields<T>, beta: &[T]) -> Result<ZakharovState<T>> {
    let e = exp_w1(fields, beta);
    let mut out = st.clone();
    out.formulation = Formulation::Ito;
    match st.formulation {
        Formulation::Ito => return Err(ZnlError::InvalidArgument("state is already in Itô form".into())),
        Formulation::RescaledConservative => {
            for (x, f) in out.schro.iter_mut().zip(&e) {
                *x = *x * f;
            }
            for (y, c) in out.wave.iter_mut().zip(&st.conv) {
                *y = *y + c;
            }
        }
        Formulation::RescaledNonconservative => {
            for ((x, f), mh) in out.schro.iter_mut().zip(&e).zip(&fields.mu_hat) {
                *x = *x * f * (-*mh * st.t).exp();
            }
        }
    }
    out.conv = Vec::new();
    Ok(out)
}

/// Rebases a rescaled conservative trajectory at grid time `sigma = t_{n0}`:
/// `u_σ(t) = e^{W1(σ)} u(σ+t)`, `v_σ(t) = v(σ+t) + e^{it|∇|} T_σ(W2)`.
/// `beta_sigma` is `beta1(σ)` and `conv_sigma` is `T_σ(W2)`.
pub fn refined_rescale<T: Real>(
    spec: &Spectral<T>,
    traj: &[ZakharovState<T>],
    n0: usize,
    fields: &NoiseFields<T>,
    beta_sigma: &[T],
    conv_sigma: &[C<T>],
) -> Result<Vec<ZakharovState<T>>> {
    if n0 >= traj.len() {
        return Err(ZnlError::InvalidArgument(format!("sigma index {n0} is off the trajectory grid")));
    }
    let sigma = traj[n0].t;
    let e = exp_w1(fields, beta_sigma);
    traj[n0..]
        .iter()
        .map(|st| {
            st.expect(Formulation::RescaledConservative)?;
            let t = st.t - sigma;
            let mut out = st.clone();
            out.t = t;
            for (x, f) in out.schro.iter_mut().zip(&e) {
                *x = *x * f;
            }
            let mut shift = conv_sigma.to_vec();
            spec.apply_symbol(&mut shift, &spec.wave_symbol(t));
            for (y, s) in out.wave.iter_mut().zip(&shift) {
                *y = *y + s;
            }
            Ok(out)
        })
        .collect()
}

/// Inverse of [`refined_rescale`]: `u(t) = e^{-W1(σ)} u_σ(t-σ)`,
/// `v(t) = v_σ(t-σ) - e^{i(t-σ)|∇|} T_σ(W2)`.
pub fn refined_unscale<T: Real>(
    spec: &Spectral<T>,
    rebased: &[ZakharovState<T>],
    sigma: T,
    fields: &NoiseFields<T>,
    beta_sigma: &[T],
    conv_sigma: &[C<T>],
) -> Vec<ZakharovState<T>> {
    let e = exp_w1(fields, beta_sigma);
    rebased
        .iter()
        .map(|st| {
            let mut out = st.clone();
            for (x, f) in out.schro.iter_mut().zip(&e) {
                *x = *x / f;
            }
            let mut shift = conv_sigma.to_vec();
            spec.apply_symbol(&mut shift, &spec.wave_symbol(st.t));
            for (y, s) in out.wave.iter_mut().zip(&shift) {
                *y = *y - s;
            }
            out.t = st.t + sigma;
            out
        })
        .collect()
}

/// `m(u) = ½ ∫ |u|²`.
pub fn mass<T: Real>(spec: &Spectral<T>, u: &[C<T>]) -> T {
    spec.l2_norm(u).powi(2) / cst(2.0)
}

/// `e_Z(u, v) = ∫ ½|∇u|² + ¼|v|² + ½ Re(v)|u|²`.
pub fn energy_zakharov<T: Real>(spec: &Spectral<T>, u: &[C<T>], v: &[C<T>]) -> T {
    let mut uh = u.to_vec();
    spec.forward(&mut uh);
    let tot = from_usize::<T>(spec.len());
    let grad2 = uh
        .iter()
        .zip(spec.xi2())
        .fold(T::zero(), |a, (c, &k2)| a + k2 * c.norm_sqr())
        * spec.grid().volume()
        / (tot * tot);
    let vol = spec.grid().cell_volume();
    let rest = u
        .iter()
        .zip(v)
        .fold(T::zero(), |a, (x, y)| a + y.norm_sqr() / cst(4.0) + y.re * x.norm_sqr() / cst(2.0));
    grad2 / cst(2.0) + rest * vol
}

/// Fraction of `∫|u|²` within `width` of the box faces.
pub fn wrap_fraction<T: Real>(grid: &TorusGrid<T>, u: &[C<T>], width: T) -> T {
    let mut idx = vec![0; grid.d];
    let (mut edge, mut total) = (T::zero(), T::zero());
    for (f, z) in u.iter().enumerate() {
        grid.unflatten(f, &mut idx);
        let m = z.norm_sqr();
        total = total + m;
        let near = idx.iter().any(|&i| {
            let x = from_usize::<T>(i) * grid.dx();
            x < width || grid.length - x < width
        });
        if near {
            edge = edge + m;
        }
    }
    if total > T::zero() {
        edge / total
    } else {
        T::zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WrapAction {
    #[default]
    Abort,
    Record,
}

/// Norm monitoring and stopping rules.
#[derive(Debug, Clone, PartialEq)]
pub struct Monitor<T> {
    /// Schrödinger exponent of the monitored `H^s` norm.
    pub s_exp: T,
    /// Wave exponent of the monitored `H^l` norm.
    pub l_exp: T,
    /// Threshold on `||X||_{H^s} + ||Y||_{H^l}`.
    pub m_threshold: T,
    /// Threshold on `∫ ||X||²_{W^{s,2d/(d-2)}} dt`.
    pub budget_threshold: T,
    pub stop_on_threshold: bool,
    pub wrap_tolerance: T,
    /// Width of the face layer used by [`wrap_fraction`], as a fraction of `L`.
    pub wrap_width: T,
    pub wrap_action: WrapAction,
}

impl<T: Real> Monitor<T> {
    /// Endpoint exponents `((d-3)/2, (d-4)/2)` for `d >= 4`; `(1, 0)` below.
    pub fn default_exponents(d: usize) -> (T, T) {
        if d >= 4 {
            let (s, l) = endpoint::<f64>(d as u32);
            (cst(s), cst(l))
        } else {
            (T::one(), T::zero())
        }
    }

    pub fn for_dim(d: usize) -> Self {
        let (s_exp, l_exp) = Self::default_exponents(d);
        Self {
            s_exp,
            l_exp,
            m_threshold: cst(100.0),
            budget_threshold: cst(1e6),
            stop_on_threshold: true,
            wrap_tolerance: cst(1e-6),
            wrap_width: cst(1.0 / 16.0),
            wrap_action: WrapAction::Abort,
        }
    }

    /// Lebesgue exponent `2d/(d-2)` of the dispersive budget, infinite for `d <= 2`.
    pub fn budget_p(d: usize) -> T {
        if d <= 2 {
            T::infinity()
        } else {
            cst((2 * d) as f64 / (d as f64 - 2.0))
        }
    }
}

/// Pullback sampling window for the scattering test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterWindow<T> {
    /// Window length `W`; samples are taken on `[T_max - W, T_max]`.
    pub length: T,
    pub samples: usize,
}

/// Everything needed for one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig<T> {
    pub grid: TorusGrid<T>,
    pub dt: T,
    pub t_max: T,
    /// Optional fine initial phase `(dt_fine, t_fine)`: steps of `dt_fine`
    /// until `t_fine`, then `dt`.
    pub fine_start: Option<(T, T)>,
    pub scheme: Scheme,
    pub dealias: bool,
    pub c_sign: CSign,
    pub formulation: Formulation,
    pub noise: NoiseSpec<T>,
    pub linear: bool,
    pub record_every: usize,
    pub snapshot_every: usize,
    pub monitor: Monitor<T>,
    pub scatter: Option<ScatterWindow<T>>,
}

impl<T: Real> SimConfig<T> {
    pub fn new(grid: TorusGrid<T>, dt: T, t_max: T) -> Self {
        Self {
            grid,
            dt,
            t_max,
            fine_start: None,
            scheme: Scheme::Strang,
            dealias: true,
            c_sign: CSign::Standard,
            formulation: Formulation::Ito,
            noise: NoiseSpec::off(),
            linear: false,
            record_every: 1,
            snapshot_every: 0,
            monitor: Monitor::for_dim(grid.d),
            scatter: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.dt > T::zero()) {
            errs.push(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_max >= self.dt) {
            errs.push(format!("t_max ({}) must be at least dt ({})", self.t_max, self.dt));
        }
        if let Some((df, tf)) = self.fine_start {
            if !(df > T::zero() && df <= self.dt && tf >= T::zero()) {
                errs.push("fine start needs 0 < dt_fine <= dt and t_fine >= 0".into());
            }
        }
        if self.record_every == 0 {
            errs.push("record_every must be at least 1".into());
        }
        match (self.formulation, self.noise.mode) {
            (Formulation::RescaledNonconservative, NoiseMode::Conservative)
            | (Formulation::RescaledConservative, NoiseMode::Nonconservative) => {
                errs.push("formulation does not match the noise mode".into())
            }
            _ => {}
        }
        if let Some(w) = self.scatter {
            if !(w.length > T::zero() && w.length <= self.t_max) || w.samples < 2 {
                errs.push("scattering window must lie in (0, t_max] with at least 2 samples".into());
            }
        }
        if let Err(ZnlError::Validation(e)) = self.noise.validate() {
            errs.extend(e);
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ZnlError::Validation(errs))
        }
    }

    /// Step times `t_0 = 0 < ... < t_N = t_max`.
    pub fn time_grid(&self) -> Vec<T> {
        let mut times = vec![T::zero()];
        let eps = self.dt * cst(1e-9);
        if let Some((df, tf)) = self.fine_start {
            let tf = tf.min(self.t_max);
            let n = ((tf / df) - cst(1e-9)).ceil().to_usize().unwrap_or(0);
            for j in 1..=n {
                times.push((df * from_usize(j)).min(tf));
            }
        }
        let start = *times.last().expect("nonempty");
        let rem = self.t_max - start;
        if rem > eps {
            let n = (rem / self.dt - cst(1e-9)).ceil().to_usize().unwrap_or(0).max(1);
            for j in 1..=n {
                times.push((start + self.dt * from_usize(j)).min(self.t_max));
            }
        }
        times.dedup_by(|a, b| (*a - *b).abs() <= eps);
        times
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormRow<T> {
    pub t: T,
    pub mass: T,
    pub energy: T,
    pub hs_schro: T,
    pub hl_wave: T,
    pub budget: T,
    pub h_value: T,
    pub wrap: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlowupReason {
    /// Endpoint norm sum above threshold.
    NormThreshold,
    /// Integrated dispersive budget above threshold.
    BudgetThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RunOutcome {
    Completed,
    BlowupNumerical { t: f64 },
    ThresholdBlowup { t: f64, reason: BlowupReason },
    BoundaryContamination { t: f64, wrap: f64 },
}

/// Pulled-back Fourier coefficients at one time of the scattering window:
/// `e^{-itΔ} e^{μ̂t - W1} X` and `e^{-it|∇|} Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pullback<T> {
    pub t: T,
    pub schro: Vec<C<T>>,
    pub wave: Vec<C<T>>,
}

#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub rows: Vec<NormRow<T>>,
    /// `(t, X, Y)` in physical space.
    pub snapshots: Vec<(T, Vec<C<T>>, Vec<C<T>>)>,
    pub pullbacks: Vec<Pullback<T>>,
    pub outcome: RunOutcome,
    pub final_state: ZakharovState<T>,
    pub steps: usize,
    pub max_wrap: T,
}

impl<T: Real> Trajectory<T> {
    /// Turns numerical failures into errors.
    pub fn into_result(self) -> Result<Self> {
        match self.outcome {
            RunOutcome::BlowupNumerical { t } => Err(ZnlError::BlowupNumerical { t }),
            RunOutcome::BoundaryContamination { t, wrap } => Err(ZnlError::BoundaryContamination { t, wrap }),
            _ => Ok(self),
        }
    }
}

/// Itô-form fields `(X, Y)` of a state. `beta` is `beta1(t)`.
fn physical<T: Real>(st: &ZakharovState<T>, fields: &NoiseFields<T>, beta: &[T]) -> (Vec<C<T>>, Vec<C<T>>) {
    match st.formulation {
        Formulation::Ito => (st.schro.clone(), st.wave.clone()),
        _ => {
            let back = rescale_backward(st, fields, beta).expect("rescaled state");
            (back.schro, back.wave)
        }
    }
}

/// Brownian paths driving [`run_simulation`]. Non-conservative Strang runs
/// sample on the grid refined by step midpoints.
pub fn simulation_paths<T: Real>(cfg: &SimConfig<T>, fields: &NoiseFields<T>, seed: u64) -> Result<BrownianPathSet<T>> {
    let times = cfg.time_grid();
    let path_times: Vec<T> = if cfg.formulation == Formulation::RescaledNonconservative && cfg.scheme == Scheme::Strang {
        let mut v = Vec::with_capacity(2 * times.len());
        for w in times.windows(2) {
            v.push(w[0]);
            v.push((w[0] + w[1]) / cst(2.0));
        }
        v.push(*times.last().expect("nonempty grid"));
        v
    } else {
        times
    };
    sample_brownian(fields.k1(), fields.k2(), &path_times, seed)
}

/// Runs one simulation from `(x0, y0)` (Itô-form initial data) with Brownian
/// paths drawn from `seed`.
pub fn run_simulation<T: Real>(cfg: &SimConfig<T>, x0: Vec<C<T>>, y0: Vec<C<T>>, seed: u64) -> Result<Trajectory<T>> {
    cfg.validate()?;
    let spec = Spectral::shared(cfg.grid);
    if x0.len() != spec.len() || y0.len() != spec.len() {
        return Err(ZnlError::InvalidArgument("initial data do not match the grid".into()));
    }
    let fields = cfg.noise.materialize(&spec)?;
    let nonc = cfg.formulation == Formulation::RescaledNonconservative;
    let midpoints = nonc && cfg.scheme == Scheme::Strang;
    let paths = simulation_paths(cfg, &fields, seed)?;
    let path_times = paths.times.clone();
    let times = cfg.time_grid();
    let beta_all = paths.beta1();
    let stride = if midpoints { 2 } else { 1 };
    let h_path = if nonc {
        gbm_from_coeffs(&cfg.noise.c_vec(), &paths)?.values
    } else {
        vec![T::one(); path_times.len()]
    };
    let beta_at = |j: usize| -> Vec<T> { beta_all.iter().map(|b| b[j]).collect() };
    let incr = |inc: &[Vec<T>], n: usize| -> Vec<T> {
        inc.iter().map(|v| (0..stride).fold(T::zero(), |a, s| a + v[stride * n + s])).collect()
    };

    let mut integ = Integrator::new(spec.clone(), cfg.scheme, cfg.dealias);
    integ.c_sign = cfg.c_sign;
    integ.linear = cfg.linear;

    let ito0 = ZakharovState::new(x0, y0, Formulation::Ito);
    let mut st = match cfg.formulation {
        Formulation::Ito => ito0,
        f => rescale_forward(&ito0, f, &fields, &beta_at(0), None)?,
    };

    let d = cfg.grid.d;
    let mon = &cfg.monitor;
    let p_budget = Monitor::<T>::budget_p(d);
    let wrap_w = mon.wrap_width * cfg.grid.length;
    let mut rows: Vec<NormRow<T>> = Vec::new();
    let mut snapshots = Vec::new();
    let mut pullbacks = Vec::new();
    let mut budget = T::zero();
    let mut last_budget_density: Option<(T, T)> = None;
    let mut outcome = RunOutcome::Completed;
    let mut max_wrap = T::zero();
    let t_max = *times.last().expect("nonempty grid");
    let scatter_times: Vec<T> = cfg.scatter.map_or_else(Vec::new, |w| {
        (0..w.samples)
            .map(|i| t_max - w.length + w.length * from_usize(i) / from_usize(w.samples - 1))
            .collect()
    });
    let mut next_scatter = 0usize;
    let nsteps = times.len() - 1;
    let mut steps_done = 0;
    let mut fused = if midpoints { Some(integ.fused_start(&st)?) } else { None };

    for n in 0..=nsteps {
        let j = n * stride;
        let is_last = n == nsteps;
        let want_scatter = next_scatter < scatter_times.len()
            && (st.t >= scatter_times[next_scatter] - cfg.dt * cst(1e-6) || is_last);
        let record = n % cfg.record_every == 0 || is_last;
        if record || want_scatter {
            if let Some(f) = &fused {
                st = integ.fused_state(f);
            }
            let beta = beta_at(j);
            let (x, y) = physical(&st, &fields, &beta);
            if record {
                let dens = spec.wsp_norm(&x, mon.s_exp, p_budget).powi(2);
                if let Some((t_prev, d_prev)) = last_budget_density {
                    budget = budget + (st.t - t_prev) * (dens + d_prev) / cst(2.0);
                }
                last_budget_density = Some((st.t, dens));
                let wrap = wrap_fraction(&cfg.grid, &x, wrap_w);
                max_wrap = max_wrap.max(wrap);
                let row = NormRow {
                    t: st.t,
                    mass: mass(&spec, &x),
                    energy: energy_zakharov(&spec, &x, &y),
                    hs_schro: spec.hs_norm(&x, mon.s_exp),
                    hl_wave: spec.hs_norm(&y, mon.l_exp),
                    budget,
                    h_value: h_path[j],
                    wrap,
                };
                rows.push(row);
                if cfg.snapshot_every > 0 && (n % (cfg.snapshot_every * cfg.record_every) == 0 || is_last) {
                    snapshots.push((st.t, x.clone(), y.clone()));
                }
                let tf = st.t.to_f64().unwrap_or(f64::NAN);
                if !(row.hs_schro.is_finite() && row.hl_wave.is_finite()) {
                    outcome = RunOutcome::BlowupNumerical { t: tf };
                    break;
                }
                if wrap > mon.wrap_tolerance && mon.wrap_action == WrapAction::Abort {
                    outcome = RunOutcome::BoundaryContamination { t: tf, wrap: wrap.to_f64().unwrap_or(f64::NAN) };
                    break;
                }
                if mon.stop_on_threshold {
                    if row.hs_schro + row.hl_wave > mon.m_threshold {
                        outcome = RunOutcome::ThresholdBlowup { t: tf, reason: BlowupReason::NormThreshold };
                        break;
                    }
                    if budget > mon.budget_threshold {
                        outcome = RunOutcome::ThresholdBlowup { t: tf, reason: BlowupReason::BudgetThreshold };
                        break;
                    }
                }
            }
            while want_scatter && next_scatter < scatter_times.len() && st.t >= scatter_times[next_scatter] - cfg.dt * cst(1e-6) {
                next_scatter += 1;
            }
            if want_scatter {
                // the rescaled unknowns are already e^{μ̂t - W1} X
                let mut z: Vec<C<T>> = match st.formulation {
                    Formulation::Ito => x
                        .iter()
                        .zip(fields.w1(&beta))
                        .zip(&fields.mu_hat)
                        .map(|((xi, w), mh)| *xi * (*mh * st.t - w).exp())
                        .collect(),
                    _ => st.schro.clone(),
                };
                spec.forward(&mut z);
                Spectral::mul_coeffs(&mut z, &spec.schroedinger_symbol(-st.t));
                let mut yw = y.clone();
                spec.forward(&mut yw);
                Spectral::mul_coeffs(&mut yw, &spec.wave_symbol(-st.t));
                pullbacks.push(Pullback { t: st.t, schro: z, wave: yw });
            }
        }
        if is_last {
            break;
        }
        let dt = times[n + 1] - times[n];
        let res = match cfg.formulation {
            Formulation::Ito => integ.step_ito(&mut st, &fields, &incr(&paths.schro, n), &incr(&paths.wave, n), dt),
            Formulation::RescaledConservative => integ.step_rescaled_conservative(
                &mut st,
                &fields,
                &beta_at(j),
                &incr(&paths.schro, n),
                &incr(&paths.wave, n),
                dt,
            ),
            Formulation::RescaledNonconservative => match fused.as_mut() {
                Some(f) => {
                    let r = integ.fused_step(f, h_path[j + 1], dt);
                    st.t = f.t;
                    r
                }
                None => integ.step_nonconservative(&mut st, h_path[j], dt),
            },
        };
        steps_done += 1;
        match res {
            Ok(()) => {}
            Err(ZnlError::BlowupNumerical { t }) => {
                outcome = RunOutcome::BlowupNumerical { t };
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Trajectory { rows, snapshots, pullbacks, outcome, final_state: st, steps: steps_done, max_wrap })
}

/// Relative `L^2` distance `||a - b|| / ||b||`.
pub fn relative_l2<T: Real>(spec: &Spectral<T>, a: &[C<T>], b: &[C<T>]) -> T {
    let diff: Vec<C<T>> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    spec.l2_norm(&diff) / spec.l2_norm(b)
}

/// Result of integrating the Itô and rescaled conservative forms on shared
/// paths and comparing at the final time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransformReport<T> {
    pub t: T,
    pub dt: T,
    /// Relative `L^2` discrepancy of the Schrödinger components in `u` variables.
    pub schro: T,
    /// Relative `L^2` discrepancy of the wave components in `v` variables.
    pub wave: T,
}

/// Solves the Itô form and the rescaled conservative form with the same
/// Brownian increments and compares `rescale_forward(X)` with `u`.
pub fn transform_check<T: Real>(cfg: &SimConfig<T>, x0: Vec<C<T>>, y0: Vec<C<T>>, seed: u64) -> Result<TransformReport<T>> {
    let mut c = cfg.clone();
    c.formulation = Formulation::Ito;
    c.record_every = usize::MAX / 4;
    c.scatter = None;
    c.snapshot_every = 0;
    c.monitor.stop_on_threshold = false;
    c.monitor.wrap_action = WrapAction::Record;
    let spec = Spectral::shared(c.grid);
    let fields = c.noise.materialize(&spec)?;
    let ito = run_simulation(&c, x0.clone(), y0.clone(), seed)?.into_result()?;
    c.formulation = Formulation::RescaledConservative;
    let resc = run_simulation(&c, x0, y0, seed)?.into_result()?;
    let times = c.time_grid();
    let paths = sample_brownian(fields.k1(), fields.k2(), &times, seed)?;
    let beta: Vec<T> = paths.beta1().iter().map(|b| *b.last().expect("nonempty")).collect();
    let mapped = rescale_forward(&ito.final_state, Formulation::RescaledConservative, &fields, &beta, Some(&resc.final_state.conv))?;
    Ok(TransformReport {
        t: ito.final_state.t,
        dt: c.dt,
        schro: relative_l2(&spec, &resc.final_state.schro, &mapped.schro),
        wave: relative_l2(&spec, &resc.final_state.wave, &mapped.wave),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{uniform_grid, Coeff};
    use std::f64::consts::PI;

    fn gauss(spec: &Spectral<f64>, amp: f64, w: f64) -> Vec<C<f64>> {
        let l = spec.grid().length;
        (0..spec.len())
            .map(|i| {
                let x = spec.grid().coords(i);
                let r2: f64 = x.iter().map(|xi| (xi - l / 2.0).powi(2)).sum();
                Complex::new(amp * (-r2 / (2.0 * w * w)).exp(), 0.0)
            })
            .collect()
    }

    #[test]
    fn zero_data_stays_zero() {
        let spec = Spectral::shared(TorusGrid::new(2, 16, 10.0).unwrap());
        let mut integ = Integrator::new(spec.clone(), Scheme::Strang, true);
        let fields = NoiseSpec::off().materialize(&spec).unwrap();
        let mut st = ZakharovState::new(vec![zero(); 256], vec![zero(); 256], Formulation::Ito);
        for _ in 0..10 {
            integ.step_ito(&mut st, &fields, &[], &[], 0.01).unwrap();
        }
        assert!(st.schro.iter().chain(&st.wave).all(|z| z.norm() == 0.0));
    }

    #[test]
    fn small_free_data_follows_linear_flow() {
        let spec = Spectral::shared(TorusGrid::new(1, 64, 20.0).unwrap());
        let fields = NoiseSpec::off().materialize(&spec).unwrap();
        let x0 = gauss(&spec, 1e-3, 1.5);
        let err = |dt: f64| {
            let mut integ = Integrator::new(spec.clone(), Scheme::Strang, true);
            let mut st = ZakharovState::new(x0.clone(), vec![zero(); 64], Formulation::Ito);
            integ.step_ito(&mut st, &fields, &[], &[], dt).unwrap();
            let mut exact = x0.clone();
            spec.apply_symbol(&mut exact, &spec.schroedinger_symbol(dt));
            relative_l2(&spec, &st.schro, &exact)
        };
        let (e1, e2) = (err(0.1), err(0.05));
        assert!(e1 < 1e-6, "{e1}");
        assert!(e2 < e1 / 3.0 || e2 < 1e-14, "{e1} {e2}");
    }

    #[test]
    fn transforms_round_trip() {
        let spec = Spectral::shared(TorusGrid::new(1, 32, 2.0 * PI).unwrap());
        let ns = NoiseSpec {
            mode: NoiseMode::Conservative,
            schro: vec![Coeff::FourierMode { k: vec![1], amp: Complex::new(0.4, 0.0), phase: 0.3 }],
            wave: vec![Coeff::Constant(Complex::new(0.2, 0.0))],
        };
        let fields = ns.materialize(&spec).unwrap();
        let x = gauss(&spec, 1.0, 0.7);
        let y: Vec<_> = x.iter().map(|z| z * Complex::new(0.3, 0.1)).collect();
        let mut st = ZakharovState::new(x.clone(), y.clone(), Formulation::Ito);
        st.t = 0.7;
        let conv: Vec<_> = (0..32).map(|i| Complex::new(0.01 * i as f64, -0.02)).collect();
        let u = rescale_forward(&st, Formulation::RescaledConservative, &fields, &[0.8], Some(&conv)).unwrap();
        // |u| = |X| for purely imaginary W1
        for (a, b) in u.schro.iter().zip(&x) {
            assert!((a.norm() - b.norm()).abs() < 1e-14);
        }
        let back = rescale_backward(&u, &fields, &[0.8]).unwrap();
        for (a, b) in back.schro.iter().zip(&x).chain(back.wave.iter().zip(&y)) {
            assert!((a - b).norm() < 1e-14);
        }
        let zero_w = rescale_forward(&st, Formulation::RescaledConservative, &fields, &[0.0], None).unwrap();
        assert_eq!(zero_w.schro, x);
        assert!(rescale_backward(&st, &fields, &[0.0]).is_err());
        let nc = NoiseSpec::constant_imag(&[1.5]).materialize(&spec).unwrap();
        let z = rescale_forward(&st, Formulation::RescaledNonconservative, &nc, &[0.4], None).unwrap();
        let back = rescale_backward(&z, &nc, &[0.4]).unwrap();
        for (a, b) in back.schro.iter().zip(&x) {
            assert!((a - b).norm() < 1e-14 * b.norm().max(1.0));
        }
    }

    #[test]
    fn rescaled_without_w1_matches_ito() {
        let spec = Spectral::shared(TorusGrid::new(2, 16, 12.0).unwrap());
        let ns = NoiseSpec {
            mode: NoiseMode::Conservative,
            schro: vec![],
            wave: vec![Coeff::FourierMode { k: vec![1, 0], amp: Complex::new(0.5, 0.0), phase: 0.0 }],
        };
        let fields = ns.materialize(&spec).unwrap();
        let paths = sample_brownian::<f64>(0, 1, &uniform_grid(0.01, 50), 4).unwrap();
        let x0 = gauss(&spec, 1.0, 1.5);
        let mut ito = ZakharovState::new(x0.clone(), vec![zero(); 256], Formulation::Ito);
        let mut res = ZakharovState::new(x0, vec![zero(); 256], Formulation::RescaledConservative);
        let mut a = Integrator::new(spec.clone(), Scheme::Strang, true);
        let mut b = Integrator::new(spec.clone(), Scheme::Strang, true);
        for n in 0..50 {
            let dw2 = [paths.wave[0][n]];
            a.step_ito(&mut ito, &fields, &[], &dw2, 0.01).unwrap();
            b.step_rescaled_conservative(&mut res, &fields, &[], &[], &dw2, 0.01).unwrap();
            for i in 0..256 {
                assert!((ito.schro[i] - res.schro[i]).norm() < 1e-12);
                assert!((ito.wave[i] - res.wave[i] - res.conv[i]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn mass_and_energy_of_simple_states() {
        let spec = Spectral::new(TorusGrid::<f64>::new(2, 8, 3.0).unwrap());
        let z = vec![zero(); 64];
        assert_eq!(mass(&spec, &z), 0.0);
        assert_eq!(energy_zakharov(&spec, &z, &z), 0.0);
        let pw = vec![Complex::new(0.0, 2.0); 64];
        assert!((mass(&spec, &pw) - 0.5 * 4.0 * 9.0).abs() < 1e-12);
    }

    #[test]
    fn time_grid_with_fine_start() {
        let mut cfg = SimConfig::new(TorusGrid::new(1, 8, 1.0).unwrap(), 0.25, 1.0);
        assert_eq!(cfg.time_grid(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        cfg.fine_start = Some((0.125, 0.25));
        assert_eq!(cfg.time_grid(), vec![0.0, 0.125, 0.25, 0.5, 0.75, 1.0]);
        cfg.dt = 0.0;
        assert!(matches!(cfg.validate(), Err(ZnlError::Validation(_))));
    }

    #[test]
    fn fused_stepping_matches_plain_strang() {
        let spec = Spectral::shared(TorusGrid::new(2, 16, 10.0).unwrap());
        let x0 = gauss(&spec, 2.0, 1.2);
        let y0: Vec<_> = x0.iter().map(|z| z * Complex::new(-0.5, 0.2)).collect();
        let st0 = ZakharovState::new(x0, y0, Formulation::RescaledNonconservative);
        let mut a = Integrator::new(spec.clone(), Scheme::Strang, true);
        let mut b = Integrator::new(spec.clone(), Scheme::Strang, true);
        let mut plain = st0.clone();
        let mut fused = b.fused_start(&st0).unwrap();
        let steps = [(0.01, 0.9), (0.01, 0.5), (0.02, 0.3), (0.02, 0.2), (0.005, 0.1)];
        for (dt, h) in steps {
            a.step_nonconservative(&mut plain, h, dt).unwrap();
            b.fused_step(&mut fused, h, dt).unwrap();
        }
        let got = b.fused_state(&fused);
        assert!((got.t - plain.t).abs() < 1e-15);
        for (p, q) in got.schro.iter().zip(&plain.schro).chain(got.wave.iter().zip(&plain.wave)) {
            assert!((p - q).norm() < 1e-12, "{p} {q}");
        }
    }

    #[test]
    fn wrong_tag_is_rejected() {
        let spec = Spectral::shared(TorusGrid::new(1, 8, 1.0).unwrap());
        let mut integ = Integrator::new(spec, Scheme::Lie, false);
        let mut st = ZakharovState::new(vec![zero::<f64>(); 8], vec![zero(); 8], Formulation::Ito);
        assert!(integ.step_nonconservative(&mut st, 1.0, 0.1).is_err());
    }
}
