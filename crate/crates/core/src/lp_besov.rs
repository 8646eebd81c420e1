//! Littlewood-Paley projectors and the Besov, Hölder, Sobolev and lateral
//! norms built on them.
//!
//! Frequencies are angular (`xi = 2 pi k / L`). `P_1` is the low-pass piece
//! `eta0(|xi|)`; `P_lambda` for `lambda >= 2` is the annulus
//! `eta0(|xi|/lambda) - eta0(2|xi|/lambda)`.

use num_complex::Complex;

use crate::error::{Result, ZnlError};
use crate::scalar::{cst, from_usize, Real};
use crate::spectral::{lp_quadrature, Spectral, TorusGrid, C};

/// Smooth step `q(x)/(q(x)+q(1-x))` with `q(x) = e^{-1/x}` for `x > 0`.
pub fn smooth_step<T: Real>(x: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    if x >= T::one() {
        return T::one();
    }
    let q = |y: T| (-T::one() / y).exp();
    let a = q(x);
    a / (a + q(T::one() - x))
}

/// Radial bump: 1 on `|r| <= 5/4`, 0 on `|r| >= 8/5`, smooth in between.
pub fn eta0<T: Real>(r: T) -> T {
    let r = r.abs();
    let lo = cst::<T>(1.25);
    let hi = cst::<T>(1.6);
    if r <= lo {
        T::one()
    } else if r >= hi {
        T::zero()
    } else {
        smooth_step((hi - r) / (hi - lo))
    }
}

/// `eta_lambda(r) = eta0(r/lambda) - eta0(2r/lambda)`.
pub fn eta_lambda<T: Real>(r: T, lambda: T) -> T {
    eta0(r / lambda) - eta0(cst::<T>(2.0) * r / lambda)
}

/// `eta_{<=lambda}(r) = eta0(r/lambda)`.
pub fn eta_le<T: Real>(r: T, lambda: T) -> T {
    eta0(r / lambda)
}

/// A single dyadic window: either the annulus at `lambda` or the low-pass
/// ball below it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DyadicWindow<T> {
    pub lambda: T,
    pub low_pass: bool,
}

impl<T: Real> DyadicWindow<T> {
    pub fn annulus(lambda: T) -> Self {
        Self { lambda, low_pass: false }
    }

    pub fn low(lambda: T) -> Self {
        Self { lambda, low_pass: true }
    }

    /// Inhomogeneous block: `P_1` is low-pass, larger scales are annuli.
    pub fn inhomogeneous(lambda: T) -> Self {
        if lambda <= T::one() {
            Self::low(lambda)
        } else {
            Self::annulus(lambda)
        }
    }

    pub fn weight(&self, r: T) -> T {
        if self.low_pass {
            eta_le(r, self.lambda)
        } else {
            eta_lambda(r, self.lambda)
        }
    }
}

/// Output of [`lp_project`].
#[derive(Debug, Clone)]
pub struct Projection<T> {
    pub values: Vec<C<T>>,
    /// Set when the window lies above the grid's Nyquist frequency; the
    /// values are then identically zero.
    pub above_nyquist: bool,
}

fn radius<T: Real>(spec: &Spectral<T>, f: usize, axis: Option<usize>) -> T {
    match axis {
        None => spec.xi_abs(f),
        Some(a) => spec.xi(f, a).abs(),
    }
}

/// Multiplies Fourier coefficients by a window and returns physical values.
pub fn project_coeffs<T: Real>(
    spec: &Spectral<T>,
    coeffs: &[C<T>],
    w: DyadicWindow<T>,
    axis: Option<usize>,
) -> Vec<C<T>> {
    let mut out: Vec<C<T>> = coeffs
        .iter()
        .enumerate()
        .map(|(f, c)| *c * w.weight(radius(spec, f, axis)))
        .collect();
    spec.inverse(&mut out);
    out
}

/// `P_lambda f` (or `P_{<=1} f` for `lambda = 1`), radially or along one axis.
pub fn lp_project<T: Real>(
    spec: &Spectral<T>,
    f: &[C<T>],
    lambda: T,
    axis: Option<usize>,
) -> Projection<T> {
    let nyq = spec.grid().nyquist();
    // the window support starts at lambda * 5/8
    if lambda * cst(0.625) > nyq {
        return Projection {
            values: vec![Complex::new(T::zero(), T::zero()); f.len()],
            above_nyquist: true,
        };
    }
    let mut c = f.to_vec();
    spec.forward(&mut c);
    Projection {
        values: project_coeffs(spec, &c, DyadicWindow::inhomogeneous(lambda), axis),
        above_nyquist: false,
    }
}

/// Per-scale table and supremum of a `B^s_{p,inf}` estimate.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BesovEstimate<T> {
    pub s: T,
    pub p: T,
    pub lambda_max: T,
    pub homogeneous: bool,
    /// `(lambda, lambda^s ||P_lambda f||_p)`.
    pub per_scale: Vec<(T, T)>,
    pub value: T,
}

/// Dyadic scales `2^j <= lambda_max`, starting at 1 (inhomogeneous) or at the
/// smallest dyadic not below the fundamental frequency (homogeneous).
pub fn dyadic_scales<T: Real>(grid: &TorusGrid<T>, lambda_max: T, homogeneous: bool) -> Vec<T> {
    let two = cst::<T>(2.0);
    let mut lam = if homogeneous {
        two.powi(grid.dxi().log2().ceil().to_i32().unwrap_or(0))
    } else {
        T::one()
    };
    let mut out = Vec::new();
    while lam <= lambda_max {
        out.push(lam);
        lam = lam * two;
    }
    out
}

/// Besov `B^s_{p,inf}` (or homogeneous `\dot B`) norm of a field on its grid,
/// truncated at `lambda_max` (default Nyquist/4).
pub fn besov_norm_field<T: Real>(
    spec: &Spectral<T>,
    f: &[C<T>],
    s: T,
    p: T,
    lambda_max: Option<T>,
    homogeneous: bool,
) -> Result<BesovEstimate<T>> {
    if !(p >= T::one()) {
        return Err(ZnlError::InvalidArgument(format!("Besov exponent p must be >= 1, got {p}")));
    }
    let nyq = spec.grid().nyquist();
    let lambda_max = lambda_max.unwrap_or(nyq / cst(4.0));
    if lambda_max > nyq {
        return Err(ZnlError::InvalidArgument(format!(
            "lambda_max {lambda_max} exceeds the Nyquist frequency {nyq}"
        )));
    }
    let mut c = f.to_vec();
    spec.forward(&mut c);
    let vol = spec.grid().cell_volume();
    let mut per_scale = Vec::new();
    let mut value = T::zero();
    for lam in dyadic_scales(spec.grid(), lambda_max, homogeneous) {
        let w = if homogeneous {
            DyadicWindow::annulus(lam)
        } else {
            DyadicWindow::inhomogeneous(lam)
        };
        let g = project_coeffs(spec, &c, w, None);
        let v = lam.powf(s) * lp_quadrature(g.iter().map(|z| z.norm()), p, vol);
        value = value.max(v);
        per_scale.push((lam, v));
    }
    Ok(BesovEstimate { s, p, lambda_max, homogeneous, per_scale, value })
}

/// Besov norm of real samples `f(j dt)`, `j < n`, treated as periodic.
pub fn besov_norm<T: Real>(
    samples: &[T],
    dt: T,
    s: T,
    p: T,
    lambda_max: Option<T>,
) -> Result<BesovEstimate<T>> {
    let (spec, buf) = line_field(samples, dt)?;
    besov_norm_field(&spec, &buf, s, p, lambda_max, false)
}

/// Homogeneous variant of [`besov_norm`].
pub fn besov_norm_homogeneous<T: Real>(
    samples: &[T],
    dt: T,
    s: T,
    p: T,
    lambda_max: Option<T>,
) -> Result<BesovEstimate<T>> {
    let (spec, buf) = line_field(samples, dt)?;
    besov_norm_field(&spec, &buf, s, p, lambda_max, true)
}

fn line_field<T: Real>(samples: &[T], dt: T) -> Result<(Spectral<T>, Vec<C<T>>)> {
    if !(dt > T::zero()) {
        return Err(ZnlError::InvalidArgument("sample spacing must be positive".into()));
    }
    let grid = TorusGrid::line(samples.len(), dt * from_usize(samples.len()))?;
    let buf = samples.iter().map(|&x| Complex::new(x, T::zero())).collect();
    Ok((Spectral::new(grid), buf))
}

/// Zero-padded continuous extension of samples on `[a, b]`: a linear ramp
/// from 0 up to `f(a)` over `ramp` time units before `a`, the samples, a ramp
/// from `f(b)` down to 0 after `b`, then zeros up to a power-of-two length.
///
/// The left ramp is the one of the GBM extension operator; the right ramp
/// mirrors it so the periodic transform sees no jump.
pub fn ramp_extension<T: Real>(samples: &[T], dt: T, ramp: T) -> Result<Vec<T>> {
    if samples.is_empty() {
        return Err(ZnlError::InvalidArgument("no samples to extend".into()));
    }
    if !(dt > T::zero()) || ramp < T::zero() {
        return Err(ZnlError::InvalidArgument("invalid extension spacing".into()));
    }
    let m = (ramp / dt).round().to_usize().unwrap_or(0);
    let total = (samples.len() + 2 * m + 1).next_power_of_two().max(8);
    let mut out = vec![T::zero(); total];
    let (first, last) = (samples[0], samples[samples.len() - 1]);
    for j in 0..m {
        // j = 0 is the ramp foot where the value vanishes
        out[j] = first * from_usize::<T>(j) / from_usize::<T>(m);
    }
    out[m..m + samples.len()].copy_from_slice(samples);
    for j in 1..=m {
        out[m + samples.len() - 1 + j] = last * from_usize::<T>(m - j) / from_usize::<T>(m);
    }
    Ok(out)
}

/// Besov norm on an interval via [`ramp_extension`]: an upper-bound estimator
/// for the restriction norm.
pub fn besov_norm_interval<T: Real>(
    samples: &[T],
    dt: T,
    ramp: T,
    s: T,
    p: T,
    homogeneous: bool,
) -> Result<BesovEstimate<T>> {
    let ext = ramp_extension(samples, dt, ramp)?;
    let (spec, buf) = line_field(&ext, dt)?;
    besov_norm_field(&spec, &buf, s, p, None, homogeneous)
}

/// Largest pair count evaluated exactly by [`holder_norm`].
pub const HOLDER_EXACT_MAX: usize = 4096;

/// Hölder seminorm `sup |g(t)-g(s)| / |t-s|^alpha` over sample pairs.
///
/// Exact over all pairs up to [`HOLDER_EXACT_MAX`] samples; above that only
/// gaps `1, 2, 4, ...` are visited, which can underestimate.
pub fn holder_norm<T: Real>(samples: &[T], dt: T, alpha: T) -> Result<T> {
    if samples.len() < 2 {
        return Err(ZnlError::InvalidArgument("Hölder norm needs at least 2 samples".into()));
    }
    if !(alpha > T::zero() && alpha <= T::one()) {
        return Err(ZnlError::InvalidArgument(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let n = samples.len();
    let gap_term = |g: usize| -> T {
        let den = (dt * from_usize(g)).powf(alpha);
        let mut m = T::zero();
        for i in 0..n - g {
            m = m.max((samples[i + g] - samples[i]).abs());
        }
        m / den
    };
    let mut best = T::zero();
    if n <= HOLDER_EXACT_MAX {
        for g in 1..n {
            best = best.max(gap_term(g));
        }
    } else {
        let mut g = 1;
        while g < n {
            best = best.max(gap_term(g));
            g *= 2;
        }
        best = best.max(gap_term(n - 1));
    }
    Ok(best)
}

/// Fourier-weighted `H^s` norm; see [`Spectral::hs_norm`].
pub fn sobolev_norm<T: Real>(spec: &Spectral<T>, f: &[C<T>], s: T) -> T {
    spec.hs_norm(f, s)
}

/// Lateral `L^{1,inf}` norm in direction `axis`; see
/// [`Spectral::lateral_norm_l1inf`].
pub fn lateral_norm_l1inf<T: Real>(spec: &Spectral<T>, f: &[C<T>], axis: usize) -> T {
    spec.lateral_norm_l1inf(f, axis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn eta0_plateau_and_support() {
        assert_eq!(eta0(0.0), 1.0);
        assert_eq!(eta0(1.25), 1.0);
        assert_eq!(eta0(-1.25), 1.0);
        assert_eq!(eta0(1.6), 0.0);
        assert_eq!(eta0(3.0), 0.0);
        let mut prev = 1.0;
        for i in 0..=100 {
            let v = eta0(1.25 + 0.35 * i as f64 / 100.0);
            assert!((0.0..=1.0).contains(&v) && v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn windows_telescope() {
        for &r in &[0.3f64, 1.0, 1.4, 2.7, 9.9, 17.0, 100.0] {
            let mut sum: f64 = eta_le(r, 1.0);
            let mut lam = 2.0;
            while lam < 1024.0 {
                sum += eta_lambda(r, lam);
                lam *= 2.0;
            }
            assert!((sum - 1.0).abs() < 1e-14, "r={r} sum={sum}");
        }
    }

    #[test]
    fn projection_of_constants() {
        let spec = Spectral::new(TorusGrid::new(1, 64, 2.0 * PI).unwrap());
        let f = vec![Complex::new(3.0, 0.0); 64];
        let p1 = lp_project(&spec, &f, 1.0, None);
        assert!(p1.values.iter().all(|z| (z.re - 3.0).abs() < 1e-12));
        let p4 = lp_project(&spec, &f, 4.0, None);
        assert!(p4.values.iter().all(|z| z.norm() < 1e-12));
        let hi = lp_project(&spec, &f, 1024.0, None);
        assert!(hi.above_nyquist && hi.values.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn besov_of_constant_and_zero() {
        let est = besov_norm(&[2.0; 64], 0.1, 0.3, f64::INFINITY, None).unwrap();
        assert!((est.value - 2.0).abs() < 1e-12);
        let est = besov_norm(&[0.0; 64], 0.1, 0.3, 2.0, None).unwrap();
        assert_eq!(est.value, 0.0);
        assert!(besov_norm(&[0.0; 64], 0.1, 0.3, 2.0, Some(1e9)).is_err());
        assert!(besov_norm(&[0.0; 64], 0.1, 0.3, 0.5, None).is_err());
    }

    #[test]
    fn holder_examples() {
        let n = 101;
        let lin: Vec<f64> = (0..n).map(|i| i as f64 / 100.0).collect();
        assert!((holder_norm(&lin, 0.01, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(holder_norm(&[5.0; 10], 0.1, 0.5).unwrap(), 0.0);
        let sq: Vec<f64> = (0..n).map(|i| (i as f64 / 100.0).sqrt()).collect();
        assert!((holder_norm(&sq, 0.01, 0.5).unwrap() - 1.0).abs() < 1e-12);
        assert!(holder_norm(&[1.0], 0.1, 0.5).is_err());
        assert!(holder_norm(&lin, 0.01, 0.0).is_err());
    }

    #[test]
    fn ramp_extension_shape() {
        let e = ramp_extension(&[2.0, 2.0, 2.0], 0.25, 1.0).unwrap();
        assert_eq!(e.len(), 16);
        assert_eq!(&e[..8], &[0.0, 0.5, 1.0, 1.5, 2.0, 2.0, 2.0, 1.5]);
        assert_eq!(&e[8..], &[1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }
}
