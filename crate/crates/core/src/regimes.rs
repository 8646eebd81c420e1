//! Regularity regions of the stochastic Zakharov system and the exponent map
//! `(s, l) -> (a, b)` of the adapted function spaces.
//!
//! Every predicate is generic over an ordered field so the same code runs on
//! `f64`, `f32` and exact rationals (`num_rational::Rational64`). Boundary
//! membership is decided by exact comparison; callers wanting exact answers
//! on decimal grids should use a rational scalar or dyadic grid steps.

use num_rational::Rational64;
use num_traits::{FromPrimitive, Num};
use serde::Serialize;

/// Ordered scalar usable by the regime classifiers.
pub trait RegimeScalar: Num + PartialOrd + Copy + FromPrimitive {}

impl<T: Num + PartialOrd + Copy + FromPrimitive> RegimeScalar for T {}

fn int<T: RegimeScalar>(n: i64) -> T {
    T::from_i64(n).expect("small integer representable")
}

fn half<T: RegimeScalar>() -> T {
    T::one() / int(2)
}

fn max<T: RegimeScalar>(a: T, b: T) -> T {
    if a >= b {
        a
    } else {
        b
    }
}

/// Noise-regularization sub-regimes of the `(s, l)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Regime {
    I,
    II,
    III,
    Outside,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::I => "I",
            Regime::II => "II",
            Regime::III => "III",
            Regime::Outside => "Outside",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Regularity bookkeeping: dimension, Schrödinger/wave regularities and the
/// derived adapted-space parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityParams<T> {
    pub d: u32,
    pub s: T,
    pub l: T,
    pub a: T,
    pub b: T,
    /// Wave parameter `beta = s - 1/2`.
    pub beta: T,
}

impl<T: RegimeScalar> RegularityParams<T> {
    /// Canonical constructor: `a`, `b`, `beta` are derived from `(s, l)`.
    pub fn new(d: u32, s: T, l: T) -> Self {
        Self {
            d,
            s,
            l,
            a: param_a_star(s, l),
            b: param_b_star(s, l),
            beta: s - half(),
        }
    }

    pub fn in_lwp_region(&self) -> bool {
        lwp_region_contains(self.d, self.s, self.l)
    }

    pub fn regime(&self) -> Regime {
        classify_regime(self.d, self.s, self.l)
    }
}

fn d_over_2<T: RegimeScalar>(d: u32) -> T {
    int::<T>(d as i64) / int(2)
}

fn low_line<T: RegimeScalar>(d: u32, l: T) -> T {
    // l/2 + (d-2)/4
    l / int(2) + (int::<T>(d as i64) - int(2)) / int(4)
}

/// Local well-posedness region:
/// `l >= d/2 - 2`, `max{l-1, l/2 + (d-2)/4} <= s <= l + 2`,
/// excluding `(d/2, d/2 - 2)` and `(d/2, d/2 + 1)`.
pub fn lwp_region_contains<T: RegimeScalar>(d: u32, s: T, l: T) -> bool {
    let dh = d_over_2::<T>(d);
    let excluded = (s == dh && l == dh - int(2)) || (s == dh && l == dh + T::one());
    l >= dh - int(2) && max(l - T::one(), low_line(d, l)) <= s && s <= l + int(2) && !excluded
}

/// Noise-regularization region:
/// `l >= d/2 - 2`, `s > l - 1/2`, `l + 2 >= s >= l/2 + (d-2)/4`,
/// excluding `(d/2, d/2 - 2)`.
pub fn noise_reg_region_contains<T: RegimeScalar>(d: u32, s: T, l: T) -> bool {
    let dh = d_over_2::<T>(d);
    let excluded = s == dh && l == dh - int(2);
    l >= dh - int(2) && s > l - half() && l + int(2) >= s && s >= low_line(d, l) && !excluded
}

fn regime_i<T: RegimeScalar>(d: u32, s: T, l: T) -> bool {
    let dh = d_over_2::<T>(d);
    let excluded = s == dh && l == dh - int(2);
    l >= dh - int(2) && l + int(2) >= s && s > max(l, low_line(d, l)) && !excluded
}

fn regime_ii<T: RegimeScalar>(d: u32, s: T, l: T) -> bool {
    let dh = d_over_2::<T>(d);
    dh - T::one() > l && l >= dh - int(2) && s == low_line(d, l)
}

fn regime_iii<T: RegimeScalar>(d: u32, s: T, l: T) -> bool {
    l >= s && s > l - half() && s >= low_line(d, l)
}

/// All sub-regimes whose defining inequalities hold at `(s, l)`, in table
/// order. The rows are disjoint, so this has at most one element; the grid
/// tests enforce that.
pub fn matching_regimes<T: RegimeScalar>(d: u32, s: T, l: T) -> Vec<Regime> {
    let mut out = Vec::with_capacity(1);
    if regime_i(d, s, l) {
        out.push(Regime::I);
    }
    if regime_ii(d, s, l) {
        out.push(Regime::II);
    }
    if regime_iii(d, s, l) {
        out.push(Regime::III);
    }
    out
}

/// First matching sub-regime in the order I, II, III; `Outside` if none.
pub fn classify_regime<T: RegimeScalar>(d: u32, s: T, l: T) -> Regime {
    classify_regime_checked(d, s, l).0
}

/// Like [`classify_regime`] but also reports whether more than one row
/// matched (the first match is still returned).
pub fn classify_regime_checked<T: RegimeScalar>(d: u32, s: T, l: T) -> (Regime, bool) {
    let m = matching_regimes(d, s, l);
    match m.first() {
        Some(&r) => {
            if m.len() > 1 {
                log_overlap(d, &m);
            }
            (r, m.len() > 1)
        }
        None => (Regime::Outside, false),
    }
}

fn log_overlap(d: u32, m: &[Regime]) {
    eprintln!("warning: overlapping regime rows {m:?} in d = {d}; first match used");
}

/// `a*(s, l)`: `3/4 (s - l) - 1/2` if `s - l >= 1`, else `0`.
pub fn param_a_star<T: RegimeScalar>(s: T, l: T) -> T {
    if s - l >= T::one() {
        int::<T>(3) / int(4) * (s - l) - half()
    } else {
        T::zero()
    }
}

/// `b*(s, l)`: `0` if `s - l > 0`, else `(l - s)/2 + 1/2`.
pub fn param_b_star<T: RegimeScalar>(s: T, l: T) -> T {
    if s - l > T::zero() {
        T::zero()
    } else {
        (l - s) / int(2) + half()
    }
}

/// Endpoint regularity `((d-3)/2, (d-4)/2)`, the lower-left corner of the
/// well-posedness region.
pub fn endpoint<T: RegimeScalar>(d: u32) -> (T, T) {
    let d = int::<T>(d as i64);
    ((d - int(3)) / int(2), (d - int(4)) / int(2))
}

/// One row of a regime map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionRow {
    pub s: f64,
    pub l: f64,
    pub in_lwp: bool,
    pub regime: Regime,
}

/// Samples the `(s, l)` square `[-1, d]^2` with the given step.
///
/// The step is converted to the nearest rational and all membership tests run
/// in exact arithmetic, so boundary points are classified without rounding.
pub fn region_map(d: u32, step: f64) -> Vec<RegionRow> {
    assert!(step > 0.0 && step.is_finite(), "grid step must be positive");
    let h = Rational64::approximate_float(step).expect("grid step representable as a ratio");
    let span = Rational64::from_integer(d as i64 + 1);
    let n = (span / h).floor().to_integer() as usize;
    let to_f = |x: Rational64| *x.numer() as f64 / *x.denom() as f64;
    let mut rows = Vec::with_capacity((n + 1) * (n + 1));
    for i in 0..=n {
        let l = Rational64::from_integer(-1) + h * Rational64::from_integer(i as i64);
        for j in 0..=n {
            let s = Rational64::from_integer(-1) + h * Rational64::from_integer(j as i64);
            rows.push(RegionRow {
                s: to_f(s),
                l: to_f(l),
                in_lwp: lwp_region_contains(d, s, l),
                regime: classify_regime(d, s, l),
            });
        }
    }
    rows
}
