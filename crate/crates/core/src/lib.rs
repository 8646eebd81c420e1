//! Pseudospectral simulator and property-test lab for the stochastic
//! Zakharov system
//!
//! ```text
//! i dX + ΔX dt = Re(Y) X dt - i μ X dt + i X dW₁
//! i dY + |∇|Y dt = -|∇||X|² dt + dW₂
//! ```
//!
//! on a periodic box, together with the rescaled random-PDE formulations,
//! geometric Brownian motion regularity tools and Monte Carlo drivers.
//!
//! Numerical modules are generic over [`Real`] (`f32`/`f64`); the regime
//! classifiers accept any ordered field, including exact rationals.

pub mod config;
pub mod error;
pub mod experiments;
pub mod lp_besov;
pub mod noise;
pub mod regimes;
pub mod restriction_norms;
pub mod scalar;
pub mod solver;
pub mod spectral;

pub use error::{Result, ZnlError};
pub use regimes::{classify_regime, lwp_region_contains, noise_reg_region_contains, Regime, RegularityParams};
pub use scalar::Real;
pub use spectral::{Snapshot, Spectral, SpectralField, TorusGrid, C};

pub type Complex64 = num_complex::Complex<f64>;

pub type Grid64 = TorusGrid<f64>;
pub type Grid32 = TorusGrid<f32>;
pub type Spectral64 = Spectral<f64>;
pub type Spectral32 = Spectral<f32>;
pub type Field64 = SpectralField<f64>;
pub type Field32 = SpectralField<f32>;
pub type Params64 = RegularityParams<f64>;
pub type ParamsExact = RegularityParams<num_rational::Rational64>;
