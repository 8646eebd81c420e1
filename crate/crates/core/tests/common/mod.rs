#![allow(dead_code)]

use num_complex::Complex;
use znl_core::{TorusGrid, C};

pub fn zero() -> C<f64> {
    Complex::new(0.0, 0.0)
}

/// `amp exp(-|x - L/2|² / (2 w²))`.
pub fn gaussian(grid: &TorusGrid<f64>, amp: f64, w: f64) -> Vec<C<f64>> {
    let c = grid.length / 2.0;
    (0..grid.total())
        .map(|i| {
            let r2: f64 = grid.coords(i).iter().map(|x| (x - c).powi(2)).sum();
            Complex::new(amp * (-r2 / (2.0 * w * w)).exp(), 0.0)
        })
        .collect()
}

/// `√2 sech(x - L/2)` on a line grid.
pub fn soliton_profile(grid: &TorusGrid<f64>) -> Vec<f64> {
    let c = grid.length / 2.0;
    (0..grid.total()).map(|i| std::f64::consts::SQRT_2 / (grid.coords(i)[0] - c).cosh()).collect()
}

/// Second transcription of the region inequalities, in integer arithmetic on
/// the lattice `s = i/16`, `l = j/16`.
pub mod regime_oracle {
    fn ge_floor(j: i64, d: i64) -> bool {
        // l >= d/2 - 2
        j >= 8 * d - 32
    }

    fn above_low(i: i64, j: i64, d: i64) -> i64 {
        // sign of s - (l/2 + (d-2)/4), scaled by 32
        2 * i - j - 8 * (d - 2)
    }

    fn hole(i: i64, j: i64, d: i64) -> bool {
        i == 8 * d && j == 8 * d - 32
    }

    pub fn lwp(d: i64, i: i64, j: i64) -> bool {
        ge_floor(j, d)
            && i >= j - 16
            && above_low(i, j, d) >= 0
            && i <= j + 32
            && !hole(i, j, d)
            && !(i == 8 * d && j == 8 * d + 16)
    }

    pub fn noise_reg(d: i64, i: i64, j: i64) -> bool {
        ge_floor(j, d) && i > j - 8 && i <= j + 32 && above_low(i, j, d) >= 0 && !hole(i, j, d)
    }

    /// "I", "II", "III" or "Outside".
    pub fn regime(d: i64, i: i64, j: i64) -> &'static str {
        if ge_floor(j, d) && i <= j + 32 && i > j && above_low(i, j, d) > 0 && !hole(i, j, d) {
            "I"
        } else if 8 * d - 16 > j && ge_floor(j, d) && above_low(i, j, d) == 0 {
            "II"
        } else if j >= i && i > j - 8 && above_low(i, j, d) >= 0 {
            "III"
        } else {
            "Outside"
        }
    }
}
