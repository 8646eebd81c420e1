//! Periodic torus grids and Fourier multipliers.
//!
//! Conventions: the forward transform is unnormalized, the inverse divides by
//! the number of grid points, and mode `k` has angular frequency
//! `xi = 2 pi k / L`. Fields are stored row-major with the last axis fastest.

use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Result, ZnlError};
use crate::scalar::{cst, from_usize, Real};

pub type C<T> = Complex<T>;

/// Cubic periodic box `[0, L)^d` sampled with `n` points per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusGrid<T> {
    pub d: usize,
    pub n: usize,
    pub length: T,
}

impl<T: Real> TorusGrid<T> {
    pub fn new(d: usize, n: usize, length: T) -> Result<Self> {
        if d == 0 {
            return Err(ZnlError::Grid("dimension must be at least 1".into()));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(ZnlError::Grid(format!(
                "points per axis must be a power of two >= 8, got {n}"
            )));
        }
        if !(length > T::zero()) || !length.is_finite() {
            return Err(ZnlError::Grid(format!("box length must be positive, got {length}")));
        }
        let total = n
            .checked_pow(d as u32)
            .ok_or_else(|| ZnlError::Grid("grid too large".into()))?;
        if total > 1 << 28 {
            return Err(ZnlError::Grid(format!("grid of {total} points is too large")));
        }
        Ok(Self { d, n, length })
    }

    /// One-dimensional grid of arbitrary length `n >= 2`, for sampled paths.
    pub fn line(n: usize, length: T) -> Result<Self> {
        if n < 2 {
            return Err(ZnlError::Grid(format!("need at least 2 samples, got {n}")));
        }
        if !(length > T::zero()) || !length.is_finite() {
            return Err(ZnlError::Grid(format!("line length must be positive, got {length}")));
        }
        Ok(Self { d: 1, n, length })
    }

    pub fn total(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn dx(&self) -> T {
        self.length / from_usize(self.n)
    }

    /// Volume element `dx^d`.
    pub fn cell_volume(&self) -> T {
        self.dx().powi(self.d as i32)
    }

    pub fn volume(&self) -> T {
        self.length.powi(self.d as i32)
    }

    /// Angular frequency spacing `2 pi / L`.
    pub fn dxi(&self) -> T {
        T::TAU() / self.length
    }

    /// Largest resolved angular frequency along an axis.
    pub fn nyquist(&self) -> T {
        self.dxi() * from_usize(self.n / 2)
    }

    /// Per-axis indices of a flat index.
    pub fn unflatten(&self, mut flat: usize, out: &mut [usize]) {
        for a in (0..self.d).rev() {
            out[a] = flat % self.n;
            flat /= self.n;
        }
    }

    /// Physical coordinates of a flat index.
    pub fn coords(&self, flat: usize) -> Vec<T> {
        let mut idx = vec![0; self.d];
        self.unflatten(flat, &mut idx);
        idx.iter().map(|&i| from_usize::<T>(i) * self.dx()).collect()
    }

    /// Signed integer wavenumber of per-axis index `i`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        if 2 * i < self.n {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }
}

/// Transform context for one grid: FFT plans and precomputed wavenumbers.
///
/// Immutable after construction and safe to share across threads; every
/// method works on caller-owned buffers.
pub struct Spectral<T: Real> {
    grid: TorusGrid<T>,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
    xi2: Vec<T>,
}

impl<T: Real> std::fmt::Debug for Spectral<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

/// Square `n x n` transpose in cache-sized tiles.
fn transpose<T: Copy>(src: &[T], dst: &mut [T], n: usize) {
    const TILE: usize = 16;
    for bi in (0..n).step_by(TILE) {
        for bj in (0..n).step_by(TILE) {
            for i in bi..(bi + TILE).min(n) {
                for j in bj..(bj + TILE).min(n) {
                    dst[j * n + i] = src[i * n + j];
                }
            }
        }
    }
}

impl<T: Real> Spectral<T> {
    pub fn new(grid: TorusGrid<T>) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(grid.n);
        let inv = planner.plan_fft_inverse(grid.n);
        let total = grid.total();
        let mut idx = vec![0; grid.d];
        let dxi = grid.dxi();
        let xi2 = (0..total)
            .map(|f| {
                grid.unflatten(f, &mut idx);
                idx.iter().fold(T::zero(), |acc, &i| {
                    let xi = cst::<T>(grid.wavenumber(i) as f64) * dxi;
                    acc + xi * xi
                })
            })
            .collect();
        Self { grid, fwd, inv, xi2 }
    }

    pub fn shared(grid: TorusGrid<T>) -> Arc<Self> {
        Arc::new(Self::new(grid))
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.xi2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi2.is_empty()
    }

    /// `|xi|^2` of every mode.
    pub fn xi2(&self) -> &[T] {
        &self.xi2
    }

    pub fn xi_abs(&self, flat: usize) -> T {
        self.xi2[flat].sqrt()
    }

    /// Signed integer wavenumber of a flat mode along `axis`.
    pub fn mode_k(&self, flat: usize, axis: usize) -> i64 {
        let stride = self.grid.n.pow((self.grid.d - 1 - axis) as u32);
        self.grid.wavenumber((flat / stride) % self.grid.n)
    }

    pub fn xi(&self, flat: usize, axis: usize) -> T {
        cst::<T>(self.mode_k(flat, axis) as f64) * self.grid.dxi()
    }

    fn transform(&self, buf: &mut [C<T>], plan: &Arc<dyn Fft<T>>) {
        assert_eq!(buf.len(), self.len(), "buffer does not match grid");
        let n = self.grid.n;
        let mut scratch = vec![C::new(T::zero(), T::zero()); plan.get_inplace_scratch_len()];
        // last axis: lines are contiguous
        plan.process_with_scratch(buf, &mut scratch);
        if self.grid.d == 1 {
            return;
        }
        if self.grid.d == 2 {
            let mut t = vec![C::new(T::zero(), T::zero()); buf.len()];
            transpose(buf, &mut t, n);
            plan.process_with_scratch(&mut t, &mut scratch);
            transpose(&t, buf, n);
            return;
        }
        let total = buf.len();
        let mut lines = vec![C::new(T::zero(), T::zero()); total];
        for axis in 0..self.grid.d - 1 {
            let stride = n.pow((self.grid.d - 1 - axis) as u32);
            let block = stride * n;
            let mut li = 0;
            for base in (0..total).step_by(block) {
                for inner in 0..stride {
                    let line = &mut lines[li * n..(li + 1) * n];
                    for (j, x) in line.iter_mut().enumerate() {
                        *x = buf[base + inner + j * stride];
                    }
                    li += 1;
                }
            }
            plan.process_with_scratch(&mut lines, &mut scratch);
            li = 0;
            for base in (0..total).step_by(block) {
                for inner in 0..stride {
                    let line = &lines[li * n..(li + 1) * n];
                    for (j, x) in line.iter().enumerate() {
                        buf[base + inner + j * stride] = *x;
                    }
                    li += 1;
                }
            }
        }
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, buf: &mut [C<T>]) {
        self.transform(buf, &self.fwd);
    }

    /// Inverse transform in place, divided by the number of points.
    pub fn inverse(&self, buf: &mut [C<T>]) {
        self.transform(buf, &self.inv);
        let s = T::one() / from_usize(buf.len());
        for x in buf.iter_mut() {
            *x = *x * s;
        }
    }

    /// Tabulates a symbol `m(xi)` on all modes; errors on non-finite values.
    pub fn symbol<F>(&self, m: F) -> Result<Vec<C<T>>>
    where
        F: Fn(&[T]) -> C<T>,
    {
        let d = self.grid.d;
        let mut xi = vec![T::zero(); d];
        let mut out = Vec::with_capacity(self.len());
        for f in 0..self.len() {
            for (a, x) in xi.iter_mut().enumerate() {
                *x = self.xi(f, a);
            }
            let v = m(&xi);
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(ZnlError::NanSymbol(f));
            }
            out.push(v);
        }
        Ok(out)
    }

    /// Radial symbol `m(|xi|)` tabulated on all modes.
    pub fn radial_symbol<F>(&self, m: F) -> Vec<C<T>>
    where
        F: Fn(T) -> C<T>,
    {
        self.xi2.iter().map(|&k2| m(k2.sqrt())).collect()
    }

    /// Multiplies Fourier coefficients (already transformed) by a symbol.
    pub fn mul_coeffs(coeffs: &mut [C<T>], sym: &[C<T>]) {
        for (c, s) in coeffs.iter_mut().zip(sym) {
            *c = *c * *s;
        }
    }

    /// `f <- F^{-1}[sym * F f]` in physical space.
    pub fn apply_symbol(&self, buf: &mut [C<T>], sym: &[C<T>]) {
        self.forward(buf);
        Self::mul_coeffs(buf, sym);
        self.inverse(buf);
    }

    /// Applies the multiplier `m(xi)` to a physical-space buffer.
    pub fn apply_multiplier<F>(&self, buf: &mut [C<T>], m: F) -> Result<()>
    where
        F: Fn(&[T]) -> C<T>,
    {
        let sym = self.symbol(m)?;
        self.apply_symbol(buf, &sym);
        Ok(())
    }

    /// Symbol of the free Schrödinger flow `e^{i t Delta}`.
    pub fn schroedinger_symbol(&self, t: T) -> Vec<C<T>> {
        self.xi2
            .iter()
            .map(|&k2| C::from_polar(T::one(), -t * k2))
            .collect()
    }

    /// Symbol of the half-wave flow `e^{i t |nabla|}`.
    pub fn wave_symbol(&self, t: T) -> Vec<C<T>> {
        self.xi2
            .iter()
            .map(|&k2| C::from_polar(T::one(), t * k2.sqrt()))
            .collect()
    }

    /// Symbol of `|nabla|`.
    pub fn abs_grad_symbol(&self) -> Vec<C<T>> {
        self.radial_symbol(|r| C::new(r, T::zero()))
    }

    /// True for modes kept by the two-thirds rule.
    pub fn dealias_mask(&self) -> Vec<bool> {
        let cut = (self.grid.n / 3) as i64;
        (0..self.len())
            .map(|f| (0..self.grid.d).all(|a| self.mode_k(f, a).abs() <= cut))
            .collect()
    }

    /// Zeroes every mode with some `|k_i| > n/3`, in physical space.
    pub fn dealias(&self, buf: &mut [C<T>]) {
        self.forward(buf);
        self.dealias_coeffs(buf);
        self.inverse(buf);
    }

    pub fn dealias_coeffs(&self, coeffs: &mut [C<T>]) {
        let cut = (self.grid.n / 3) as i64;
        for (f, c) in coeffs.iter_mut().enumerate() {
            if (0..self.grid.d).any(|a| self.mode_k(f, a).abs() > cut) {
                *c = C::new(T::zero(), T::zero());
            }
        }
    }

    /// Spectral partial derivative along `axis`; the Nyquist mode is dropped.
    pub fn derivative(&self, buf: &mut [C<T>], axis: usize) {
        let n = self.grid.n as i64;
        self.forward(buf);
        for (f, c) in buf.iter_mut().enumerate() {
            let k = self.mode_k(f, axis);
            *c = if n % 2 == 0 && k == -n / 2 {
                C::new(T::zero(), T::zero())
            } else {
                *c * C::new(T::zero(), self.xi(f, axis))
            };
        }
        self.inverse(buf);
    }

    /// Spectral Laplacian.
    pub fn laplacian(&self, buf: &mut [C<T>]) {
        self.forward(buf);
        for (c, &k2) in buf.iter_mut().zip(&self.xi2) {
            *c = *c * (-k2);
        }
        self.inverse(buf);
    }

    /// `||f||_{L^2}` by physical quadrature.
    pub fn l2_norm(&self, buf: &[C<T>]) -> T {
        let s = buf.iter().fold(T::zero(), |a, z| a + z.norm_sqr());
        (s * self.grid.cell_volume()).sqrt()
    }

    /// `||f||_{L^2}` from Fourier coefficients (Parseval).
    pub fn l2_norm_coeffs(&self, coeffs: &[C<T>]) -> T {
        self.hs_norm_coeffs(coeffs, T::zero())
    }

    /// Discrete `L^p` norm, `p = inf` allowed.
    pub fn lp_norm(&self, buf: &[C<T>], p: T) -> T {
        lp_quadrature(buf.iter().map(|z| z.norm()), p, self.grid.cell_volume())
    }

    /// `(sum (1+|xi|^2)^s |f_hat|^2)^{1/2}` normalized so that `s = 0` is the
    /// physical `L^2` norm.
    pub fn hs_norm_coeffs(&self, coeffs: &[C<T>], s: T) -> T {
        let tot = from_usize::<T>(self.len());
        let w = self.grid.volume() / (tot * tot);
        let acc = coeffs
            .iter()
            .zip(&self.xi2)
            .fold(T::zero(), |a, (c, &k2)| a + (T::one() + k2).powf(s) * c.norm_sqr());
        (acc * w).sqrt()
    }

    pub fn hs_norm(&self, buf: &[C<T>], s: T) -> T {
        let mut c = buf.to_vec();
        self.forward(&mut c);
        self.hs_norm_coeffs(&c, s)
    }

    /// `||<nabla>^s f||_{L^p}`: the Bessel-potential proxy of `W^{s,p}`.
    pub fn wsp_norm(&self, buf: &[C<T>], s: T, p: T) -> T {
        let mut c = buf.to_vec();
        if s != T::zero() {
            self.forward(&mut c);
            for (z, &k2) in c.iter_mut().zip(&self.xi2) {
                *z = *z * (T::one() + k2).powf(s / cst(2.0));
            }
            self.inverse(&mut c);
        }
        self.lp_norm(&c, p)
    }

    /// Lateral norm `int sup_{y perp e_j} |f(r e_j + y)| dr`.
    pub fn lateral_norm_l1inf(&self, buf: &[C<T>], axis: usize) -> T {
        assert!(axis < self.grid.d, "axis out of range");
        let n = self.grid.n;
        let stride = n.pow((self.grid.d - 1 - axis) as u32);
        let mut sup = vec![T::zero(); n];
        for (f, z) in buf.iter().enumerate() {
            let i = (f / stride) % n;
            let m = z.norm();
            if m > sup[i] {
                sup[i] = m;
            }
        }
        sup.into_iter().fold(T::zero(), |a, b| a + b) * self.grid.dx()
    }
}

/// `(sum |x|^p w)^{1/p}`, or `max |x|` when `p` is infinite.
pub fn lp_quadrature<T: Real>(vals: impl Iterator<Item = T>, p: T, weight: T) -> T {
    if p.is_infinite() {
        vals.fold(T::zero(), |a, b| a.max(b))
    } else if p == cst(2.0) {
        (vals.fold(T::zero(), |a, b| a + b * b) * weight).sqrt()
    } else {
        (vals.fold(T::zero(), |a, b| a + b.powf(p)) * weight).powf(T::one() / p)
    }
}

/// A grid function with a lazily computed Fourier-side cache.
#[derive(Debug, Clone)]
pub struct SpectralField<T: Real> {
    spec: Arc<Spectral<T>>,
    values: Vec<C<T>>,
    coeffs: Option<Vec<C<T>>>,
}

impl<T: Real> SpectralField<T> {
    pub fn zeros(spec: Arc<Spectral<T>>) -> Self {
        let n = spec.len();
        Self::from_values(spec, vec![C::new(T::zero(), T::zero()); n])
    }

    pub fn from_values(spec: Arc<Spectral<T>>, values: Vec<C<T>>) -> Self {
        assert_eq!(values.len(), spec.len(), "values do not match grid");
        Self { spec, values, coeffs: None }
    }

    /// Samples `f(x)` at every grid point.
    pub fn from_fn(spec: Arc<Spectral<T>>, f: impl Fn(&[T]) -> C<T>) -> Self {
        let values = (0..spec.len()).map(|i| f(&spec.grid().coords(i))).collect();
        Self::from_values(spec, values)
    }

    pub fn spectral(&self) -> &Arc<Spectral<T>> {
        &self.spec
    }

    pub fn values(&self) -> &[C<T>] {
        &self.values
    }

    /// Mutable access; invalidates the Fourier cache.
    pub fn values_mut(&mut self) -> &mut [C<T>] {
        self.coeffs = None;
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C<T>> {
        self.values
    }

    /// Fourier coefficients, recomputed only after a mutation.
    pub fn coeffs(&mut self) -> &[C<T>] {
        if self.coeffs.is_none() {
            let mut c = self.values.clone();
            self.spec.forward(&mut c);
            self.coeffs = Some(c);
        }
        self.coeffs.as_deref().expect("cache filled above")
    }

    pub fn apply_multiplier<F>(&mut self, m: F) -> Result<()>
    where
        F: Fn(&[T]) -> C<T>,
    {
        let sym = self.spec.symbol(m)?;
        self.coeffs();
        let mut c = self.coeffs.take().expect("cache filled above");
        Spectral::mul_coeffs(&mut c, &sym);
        let mut v = c.clone();
        self.spec.inverse(&mut v);
        self.values = v;
        self.coeffs = Some(c);
        Ok(())
    }

    pub fn dealias(&mut self) {
        self.coeffs();
        let mut c = self.coeffs.take().expect("cache filled above");
        self.spec.dealias_coeffs(&mut c);
        let mut v = c.clone();
        self.spec.inverse(&mut v);
        self.values = v;
        self.coeffs = Some(c);
    }

    pub fn l2_norm(&self) -> T {
        self.spec.l2_norm(&self.values)
    }

    pub fn hs_norm(&mut self, s: T) -> T {
        let spec = self.spec.clone();
        spec.hs_norm_coeffs(self.coeffs(), s)
    }
}

/// One serialized field.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub d: u32,
    pub n: u32,
    pub length: f64,
    pub time: f64,
    pub name: String,
    pub values: Vec<C<f64>>,
}

impl Snapshot {
    pub fn from_buffer<T: Real>(grid: &TorusGrid<T>, time: T, name: &str, buf: &[C<T>]) -> Self {
        Self {
            d: grid.d as u32,
            n: grid.n as u32,
            length: grid.length.to_f64().unwrap_or(f64::NAN),
            time: time.to_f64().unwrap_or(f64::NAN),
            name: name.to_string(),
            values: buf
                .iter()
                .map(|z| C::new(z.re.to_f64().unwrap_or(f64::NAN), z.im.to_f64().unwrap_or(f64::NAN)))
                .collect(),
        }
    }

    pub fn grid(&self) -> Result<TorusGrid<f64>> {
        TorusGrid::new(self.d as usize, self.n as usize, self.length)
    }

    /// Little-endian record: `d, n: u32; L, time: f64; name_len: u32; name;
    /// then interleaved re/im f64`.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.d.to_le_bytes())?;
        w.write_all(&self.n.to_le_bytes())?;
        w.write_all(&self.length.to_le_bytes())?;
        w.write_all(&self.time.to_le_bytes())?;
        w.write_all(&(self.name.len() as u32).to_le_bytes())?;
        w.write_all(self.name.as_bytes())?;
        let mut bytes = Vec::with_capacity(self.values.len() * 16);
        for z in &self.values {
            bytes.extend_from_slice(&z.re.to_le_bytes());
            bytes.extend_from_slice(&z.im.to_le_bytes());
        }
        w.write_all(&bytes)?;
        Ok(())
    }

    /// Reads every record until end of input.
    pub fn read_all(r: &mut impl Read) -> Result<Vec<Snapshot>> {
        let mut data = Vec::new();
        r.read_to_end(&mut data)?;
        let mut pos = 0usize;
        let mut out = Vec::new();
        let bad = |m: &str| ZnlError::InvalidArgument(format!("malformed snapshot container: {m}"));
        fn take<'a>(data: &'a [u8], pos: &mut usize, n: usize) -> Option<&'a [u8]> {
            let s = data.get(*pos..*pos + n)?;
            *pos += n;
            Some(s)
        }
        while pos < data.len() {
            let u32_at = |pos: &mut usize| -> Result<u32> {
                let b = take(&data, pos, 4).ok_or_else(|| bad("truncated header"))?;
                Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
            };
            let f64_at = |pos: &mut usize| -> Result<f64> {
                let b = take(&data, pos, 8).ok_or_else(|| bad("truncated header"))?;
                Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
            };
            let d = u32_at(&mut pos)?;
            let n = u32_at(&mut pos)?;
            let length = f64_at(&mut pos)?;
            let time = f64_at(&mut pos)?;
            let name_len = u32_at(&mut pos)? as usize;
            let name = take(&data, &mut pos, name_len).ok_or_else(|| bad("truncated name"))?;
            let name = String::from_utf8(name.to_vec()).map_err(|_| bad("name is not UTF-8"))?;
            let count = (n as usize)
                .checked_pow(d)
                .ok_or_else(|| bad("grid size overflow"))?;
            let mut values = Vec::with_capacity(count);
            for _ in 0..count {
                let re = f64_at(&mut pos).map_err(|_| bad("truncated values"))?;
                let im = f64_at(&mut pos).map_err(|_| bad("truncated values"))?;
                values.push(C::new(re, im));
            }
            out.push(Snapshot { d, n, length, time, name, values });
        }
        Ok(out)
    }
}
