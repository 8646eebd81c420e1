//! Run configuration: one flat TOML file with sections `[grid]`, `[time]`,
//! `[noise]`, `[initial]`, `[detectors]` and `[output]`. Unknown keys are
//! rejected; semantic problems are collected and reported together.

use std::path::Path;

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, ZnlError};
use crate::experiments::{Detectors, ScatterScenario};
use crate::noise::{CSign, Coeff, NoiseMode, NoiseSpec};
use crate::solver::{Formulation, Monitor, Scheme, SimConfig, WrapAction};
use crate::spectral::{TorusGrid, C};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub d: usize,
    pub n: usize,
    pub length: f64,
    pub dealias: bool,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { d: 2, n: 64, length: 20.0, dealias: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    pub dt: f64,
    pub t_max: f64,
    pub scheme: Scheme,
    /// Integrated form; defaults by noise mode (Itô for conservative and no
    /// noise, rescaled for non-conservative).
    pub formulation: Option<Formulation>,
    /// Time between norm records.
    pub record_interval: f64,
    /// Time between field snapshots; zero disables snapshots.
    pub snapshot_interval: f64,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self {
            dt: 1.0 / 128.0,
            t_max: 20.0,
            scheme: Scheme::Strang,
            formulation: None,
            record_interval: 0.1,
            snapshot_interval: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoisePreset {
    /// `phi1_k = i c_k`.
    ConstantImag,
    /// `phi1 = amplitude cos(xi_k . x + phase)`.
    FourierMode,
    /// `phi1 = amplitude exp(-|x - center|² / (2 width²))`.
    Bump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub mode: NoiseMode,
    pub preset: NoisePreset,
    pub c: Vec<f64>,
    pub amplitude: f64,
    pub k: Vec<i64>,
    pub phase: f64,
    pub center: Option<Vec<f64>>,
    pub width: f64,
    /// Constant real wave coefficient; zero means `W2 = 0`.
    pub wave_amplitude: f64,
    pub c_sign: CSign,
    /// Noise strengths of the scattering curve.
    pub c_grid: Vec<f64>,
    /// Initial steps of `min(dt, fine_factor / c²)` over `[0, fine_span / c²]`.
    pub fine_factor: f64,
    pub fine_span: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            mode: NoiseMode::Off,
            preset: NoisePreset::ConstantImag,
            c: vec![1.0],
            amplitude: 0.5,
            k: vec![],
            phase: 0.0,
            center: None,
            width: 1.0,
            wave_amplitude: 0.0,
            c_sign: CSign::Standard,
            c_grid: vec![0.0, 1.0, 4.0, 16.0],
            fine_factor: 0.125,
            fine_span: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    Zero,
    Gaussian,
    /// `(Q, -Q²)` with `Q = √2 sech(x - center)`; `d = 1` only.
    Soliton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WaveInit {
    Zero,
    /// `Y0 = -wave_factor |X0|²`.
    MinusSquare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    pub kind: InitialKind,
    pub amplitude: f64,
    pub width: f64,
    /// Defaults to the box centre.
    pub center: Option<Vec<f64>>,
    pub wave: WaveInit,
    pub wave_factor: f64,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self { kind: InitialKind::Gaussian, amplitude: 4.0, width: 1.0, center: None, wave: WaveInit::Zero, wave_factor: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    pub m_threshold: f64,
    pub budget_threshold: f64,
    pub stop_on_threshold: bool,
    /// Monitored exponents; default to the endpoint (or `(1, 0)` for `d <= 3`).
    pub s_exp: Option<f64>,
    pub l_exp: Option<f64>,
    pub scatter_window: f64,
    pub scatter_samples: usize,
    pub scatter_eps: f64,
    /// Pullback exponents of the scattering test; default to `L²` for
    /// `d <= 3` and to the monitored exponents otherwise.
    pub scatter_s: Option<f64>,
    pub scatter_l: Option<f64>,
    pub wrap_tolerance: f64,
    pub wrap_width: f64,
    pub wrap_action: WrapAction,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            m_threshold: 100.0,
            budget_threshold: 1e6,
            stop_on_threshold: true,
            s_exp: None,
            l_exp: None,
            scatter_window: 5.0,
            scatter_samples: 11,
            scatter_eps: 1e-2,
            scatter_s: None,
            scatter_l: None,
            wrap_tolerance: 1e-6,
            wrap_width: 1.0 / 16.0,
            wrap_action: WrapAction::Abort,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// File name stem for outputs.
    pub prefix: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { prefix: "run".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub grid: GridSection,
    pub time: TimeSection,
    pub noise: NoiseSection,
    pub initial: InitialSection,
    pub detectors: DetectorSection,
    pub output: OutputSection,
}

impl Config {
    /// Parses and validates TOML text.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| ZnlError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ZnlError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Canonical JSON: object keys sorted at every level.
    pub fn canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&v).expect("value serializes")
    }

    /// Hex SHA-256 of [`Config::canonical_json`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let mut e = Vec::new();
        let g = &self.grid;
        if !(1..=6).contains(&g.d) {
            e.push(format!("grid.d must be in 1..=6, got {}", g.d));
        }
        if g.n < 8 || !g.n.is_power_of_two() {
            e.push(format!("grid.n must be a power of two >= 8, got {}", g.n));
        }
        if (1..=6).contains(&g.d) && g.n.checked_pow(g.d as u32).is_none_or(|t| t > 1 << 28) {
            e.push("grid.n^d exceeds 2^28 points".into());
        }
        if !(g.length > 0.0 && g.length.is_finite()) {
            e.push(format!("grid.length must be positive, got {}", g.length));
        }
        let t = &self.time;
        if !(t.dt > 0.0 && t.dt.is_finite()) {
            e.push(format!("time.dt must be positive, got {}", t.dt));
        }
        if !(t.t_max >= t.dt && t.t_max.is_finite()) {
            e.push(format!("time.t_max must be at least dt, got {}", t.t_max));
        }
        if !(t.record_interval > 0.0) {
            e.push("time.record_interval must be positive".into());
        }
        if !(t.snapshot_interval >= 0.0) {
            e.push("time.snapshot_interval must be non-negative".into());
        }
        let nz = &self.noise;
        if nz.c_grid.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            e.push("noise.c_grid entries must be finite and non-negative".into());
        }
        if !(nz.fine_factor > 0.0 && nz.fine_span >= 0.0) {
            e.push("noise.fine_factor must be positive and noise.fine_span non-negative".into());
        }
        if nz.mode != NoiseMode::Off {
            match nz.preset {
                NoisePreset::ConstantImag if nz.c.is_empty() => e.push("noise.c must be nonempty".into()),
                NoisePreset::FourierMode if nz.k.len() != g.d => {
                    e.push(format!("noise.k needs {} entries, got {}", g.d, nz.k.len()))
                }
                NoisePreset::Bump if !(nz.width > 0.0) => e.push("noise.width must be positive".into()),
                _ => {}
            }
            if nz.mode == NoiseMode::Nonconservative && nz.preset != NoisePreset::ConstantImag {
                e.push("non-conservative noise uses the constant-imag preset".into());
            }
            if nz.mode == NoiseMode::Conservative && nz.preset == NoisePreset::ConstantImag {
                e.push("conservative noise needs real coefficients: use fourier-mode or bump".into());
            }
            if let Some(c) = &nz.center {
                if c.len() != g.d {
                    e.push(format!("noise.center needs {} entries", g.d));
                }
            }
            if e.is_empty() {
                if let Err(ZnlError::Validation(v)) = self.noise_spec().validate() {
                    e.extend(v.into_iter().map(|m| format!("noise: {m}")));
                }
            }
        }
        if let (Some(f), Some(Formulation::RescaledNonconservative)) = (Some(nz.mode), t.formulation) {
            if f == NoiseMode::Conservative {
                e.push("time.formulation does not match noise.mode".into());
            }
        }
        let i = &self.initial;
        if i.kind == InitialKind::Soliton && g.d != 1 {
            e.push("initial.kind = soliton needs grid.d = 1".into());
        }
        if i.kind == InitialKind::Gaussian && !(i.width > 0.0) {
            e.push("initial.width must be positive".into());
        }
        if let Some(c) = &i.center {
            if c.len() != g.d {
                e.push(format!("initial.center needs {} entries", g.d));
            }
        }
        let dsec = &self.detectors;
        if !(dsec.m_threshold > 0.0 && dsec.budget_threshold > 0.0) {
            e.push("detector thresholds must be positive".into());
        }
        if !(dsec.scatter_window > 0.0) {
            e.push(format!("detectors.scatter_window must be positive, got {}", dsec.scatter_window));
        }
        if dsec.scatter_samples < 2 {
            e.push("detectors.scatter_samples must be at least 2".into());
        }
        if !(dsec.scatter_eps > 0.0) {
            e.push("detectors.scatter_eps must be positive".into());
        }
        if !(dsec.wrap_tolerance > 0.0) || !(dsec.wrap_width > 0.0 && dsec.wrap_width < 0.5) {
            e.push("detectors.wrap_tolerance must be positive and wrap_width in (0, 1/2)".into());
        }
        if self.output.prefix.is_empty() || self.output.prefix.contains(['/', '\\']) {
            e.push("output.prefix must be a nonempty file stem".into());
        }
        if e.is_empty() {
            Ok(())
        } else {
            Err(ZnlError::Validation(e))
        }
    }

    pub fn grid(&self) -> Result<TorusGrid<f64>> {
        TorusGrid::new(self.grid.d, self.grid.n, self.grid.length)
    }

    fn center(&self, c: &Option<Vec<f64>>) -> Vec<f64> {
        c.clone().unwrap_or_else(|| vec![self.grid.length / 2.0; self.grid.d])
    }

    pub fn noise_spec(&self) -> NoiseSpec<f64> {
        let nz = &self.noise;
        if nz.mode == NoiseMode::Off {
            return NoiseSpec::off();
        }
        let amp = Complex::new(nz.amplitude, 0.0);
        let schro = match nz.preset {
            NoisePreset::ConstantImag => return NoiseSpec::constant_imag(&nz.c),
            NoisePreset::FourierMode => vec![Coeff::FourierMode { k: nz.k.clone(), amp, phase: nz.phase }],
            NoisePreset::Bump => vec![Coeff::Bump { center: self.center(&nz.center), width: nz.width, amp }],
        };
        let wave = if nz.wave_amplitude != 0.0 {
            vec![Coeff::Constant(Complex::new(nz.wave_amplitude, 0.0))]
        } else {
            vec![]
        };
        NoiseSpec { mode: nz.mode, schro, wave }
    }

    pub fn formulation(&self) -> Formulation {
        self.time.formulation.unwrap_or(match self.noise.mode {
            NoiseMode::Nonconservative => Formulation::RescaledNonconservative,
            _ => Formulation::Ito,
        })
    }

    pub fn monitor(&self) -> Monitor<f64> {
        let d = &self.detectors;
        let mut m = Monitor::for_dim(self.grid.d);
        m.s_exp = d.s_exp.unwrap_or(m.s_exp);
        m.l_exp = d.l_exp.unwrap_or(m.l_exp);
        m.m_threshold = d.m_threshold;
        m.budget_threshold = d.budget_threshold;
        m.stop_on_threshold = d.stop_on_threshold;
        m.wrap_tolerance = d.wrap_tolerance;
        m.wrap_width = d.wrap_width;
        m.wrap_action = d.wrap_action;
        m
    }

    fn steps_per(&self, interval: f64) -> usize {
        ((interval / self.time.dt).round() as usize).max(1)
    }

    pub fn sim_config(&self) -> Result<SimConfig<f64>> {
        let mut s = SimConfig::new(self.grid()?, self.time.dt, self.time.t_max);
        s.scheme = self.time.scheme;
        s.dealias = self.grid.dealias;
        s.c_sign = self.noise.c_sign;
        s.formulation = self.formulation();
        s.noise = self.noise_spec();
        s.record_every = self.steps_per(self.time.record_interval);
        s.snapshot_every = if self.time.snapshot_interval > 0.0 {
            (self.time.snapshot_interval / self.time.record_interval).round().max(1.0) as usize
        } else {
            0
        };
        s.monitor = self.monitor();
        s.validate()?;
        Ok(s)
    }

    /// Itô-form initial data `(X0, Y0)` on the configured grid.
    pub fn initial_data(&self) -> Result<(Vec<C<f64>>, Vec<C<f64>>)> {
        let grid = self.grid()?;
        let i = &self.initial;
        let center = self.center(&i.center);
        let n = grid.total();
        let x0: Vec<C<f64>> = (0..n)
            .map(|f| {
                let x = grid.coords(f);
                let r2: f64 = x.iter().zip(&center).map(|(a, b)| (a - b).powi(2)).sum();
                let v = match i.kind {
                    InitialKind::Zero => 0.0,
                    InitialKind::Gaussian => i.amplitude * (-r2 / (2.0 * i.width * i.width)).exp(),
                    InitialKind::Soliton => std::f64::consts::SQRT_2 / r2.sqrt().cosh(),
                };
                Complex::new(v, 0.0)
            })
            .collect();
        let y0 = match (i.kind, i.wave) {
            (InitialKind::Soliton, _) => x0.iter().map(|z| Complex::new(-z.norm_sqr(), 0.0)).collect(),
            (_, WaveInit::Zero) => vec![Complex::new(0.0, 0.0); n],
            (_, WaveInit::MinusSquare) => {
                x0.iter().map(|z| Complex::new(-i.wave_factor * z.norm_sqr(), 0.0)).collect()
            }
        };
        Ok((x0, y0))
    }

    pub fn detectors(&self) -> Detectors {
        let d = &self.detectors;
        let m = self.monitor();
        let low = self.grid.d <= 3;
        Detectors {
            m_threshold: d.m_threshold,
            budget_threshold: d.budget_threshold,
            scatter_window: d.scatter_window,
            scatter_samples: d.scatter_samples,
            scatter_eps: d.scatter_eps,
            scatter_s: d.scatter_s.unwrap_or(if low { 0.0 } else { m.s_exp }),
            scatter_l: d.scatter_l.unwrap_or(if low { 0.0 } else { m.l_exp }),
        }
    }

    /// Scattering-curve scenario; the direction of `c` is `noise.c`.
    pub fn scenario(&self) -> Result<ScatterScenario> {
        if self.detectors.scatter_window > self.time.t_max {
            return Err(ZnlError::Config(format!(
                "detectors.scatter_window {} exceeds time.t_max {}",
                self.detectors.scatter_window, self.time.t_max
            )));
        }
        let mut sim = self.sim_config()?;
        sim.noise = NoiseSpec::off();
        let (x0, y0) = self.initial_data()?;
        let direction = if self.noise.c.iter().any(|&c| c != 0.0) { self.noise.c.clone() } else { vec![1.0] };
        Ok(ScatterScenario {
            sim,
            x0,
            y0,
            direction,
            detectors: self.detectors(),
            fine_factor: self.noise.fine_factor,
            fine_span: self.noise.fine_span,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.grid.n, 64);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = Config::from_toml("[grid]\nsize = 3\n").unwrap_err().to_string();
        assert!(err.contains("size"), "{err}");
        let err = Config::from_toml("[gird]\n").unwrap_err().to_string();
        assert!(err.contains("gird"), "{err}");
    }

    #[test]
    fn validation_errors_are_collected() {
        let err = Config::from_toml("[time]\ndt = 0.0\n[grid]\nn = 12\n").unwrap_err();
        match err {
            ZnlError::Validation(v) => {
                assert!(v.iter().any(|m| m.contains("dt")));
                assert!(v.iter().any(|m| m.contains("grid.n")));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn hash_ignores_key_order() {
        let a = Config::from_toml("[grid]\nn = 32\nd = 1\n[time]\ndt = 0.01\n").unwrap();
        let b = Config::from_toml("[time]\ndt = 0.01\n[grid]\nd = 1\nn = 32\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = Config::from_toml("[grid]\nn = 32\nd = 1\n[time]\ndt = 0.02\n").unwrap();
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn presets_materialize() {
        let c = Config::from_toml(
            "[noise]\nmode = \"conservative\"\npreset = \"fourier-mode\"\nk = [1, 0]\nwave_amplitude = 0.2\n",
        )
        .unwrap();
        let ns = c.noise_spec();
        assert_eq!((ns.k1(), ns.k2()), (1, 1));
        assert_eq!(c.formulation(), Formulation::Ito);
        let c = Config::from_toml("[noise]\nmode = \"nonconservative\"\nc = [2.0]\n").unwrap();
        assert_eq!(c.formulation(), Formulation::RescaledNonconservative);
        assert_eq!(c.noise_spec().c_norm(), 2.0);
        assert!(Config::from_toml("[noise]\nmode = \"conservative\"\n").is_err());
    }
}
