//! Ensemble drivers: blow-up and scattering detectors, the scattering
//! probability curve in the noise strength, and the geometric Brownian motion
//! regularity experiments.
//!
//! Path `i` of an ensemble with master seed `m` uses seed
//! `splitmix64(m ^ splitmix64(i))`, so results do not depend on scheduling.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::lp_besov::besov_norm_interval;
use crate::noise::{gbm_from_coeffs, sample_brownian, uniform_grid, NoiseSpec};
use crate::solver::{run_simulation, BlowupReason, Formulation, NormRow, RunOutcome, ScatterWindow, SimConfig, Trajectory};
use crate::spectral::{Spectral, C};

/// One SplitMix64 output for state `x`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of path `index` under `master`.
pub fn path_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// z-value of the reported intervals.
pub const WILSON_Z: f64 = 1.96;

/// Weighted isotonic (non-decreasing) least-squares fit by pool-adjacent-violators.
pub fn isotonic_fit(values: &[f64], weights: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, f64, usize)> = Vec::new();
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (v2, w2, n2) = blocks[blocks.len() - 1];
            let (v1, w1, n1) = blocks[blocks.len() - 2];
            if v1 <= v2 {
                break;
            }
            blocks.pop();
            let w = w1 + w2;
            let m = if w > 0.0 { (v1 * w1 + v2 * w2) / w } else { (v1 + v2) / 2.0 };
            *blocks.last_mut().expect("two blocks") = (m, w, n1 + n2);
        }
    }
    blocks.into_iter().flat_map(|(v, _, n)| std::iter::repeat_n(v, n)).collect()
}

/// Largest absolute deviation of the values from their isotonic fit.
pub fn isotonic_residual(values: &[f64], weights: &[f64], increasing: bool) -> f64 {
    let sign = if increasing { 1.0 } else { -1.0 };
    let flipped: Vec<f64> = values.iter().map(|v| sign * v).collect();
    let fit = isotonic_fit(&flipped, weights);
    flipped.iter().zip(&fit).fold(0.0, |m, (v, f)| m.max((v - f).abs()))
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// First recorded time at which the endpoint-norm sum or the dispersive
/// budget exceeds its threshold.
pub fn detect_blowup(rows: &[NormRow<f64>], m_threshold: f64, budget_threshold: f64) -> Option<(BlowupReason, f64)> {
    rows.iter().find_map(|r| {
        if !(r.hs_schro + r.hl_wave <= m_threshold) {
            Some((BlowupReason::NormThreshold, r.t))
        } else if !(r.budget <= budget_threshold) {
            Some((BlowupReason::BudgetThreshold, r.t))
        } else {
            None
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScatterVerdict {
    pub scattered: bool,
    /// Largest pairwise `H^s` distance of the Schrödinger pullbacks over the
    /// window.
    pub schro_spread: f64,
    pub wave_spread: f64,
}

/// Cauchy test on the pullbacks recorded over the scattering window.
pub fn detect_scattering(
    spec: &Spectral<f64>,
    traj: &Trajectory<f64>,
    window: f64,
    s: f64,
    l: f64,
    eps: f64,
) -> Result<ScatterVerdict> {
    let pb = &traj.pullbacks;
    let (first, last) = match (pb.first(), pb.last()) {
        (Some(a), Some(b)) if pb.len() >= 2 => (a.t, b.t),
        _ => return Err(invalid("trajectory has no scattering window samples")),
    };
    if last - first < window * (1.0 - 1e-6) {
        return Err(invalid(format!("run covers {} of the {window} scattering window", last - first)));
    }
    let spread = |v: Vec<&[C<f64>]>, r: f64| {
        let mut m = 0.0f64;
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                let d: Vec<C<f64>> = v[i].iter().zip(v[j]).map(|(a, b)| a - b).collect();
                m = m.max(spec.hs_norm_coeffs(&d, r));
            }
        }
        m
    };
    let schro_spread = spread(pb.iter().map(|q| q.schro.as_slice()).collect(), s);
    let wave_spread = spread(pb.iter().map(|q| q.wave.as_slice()).collect(), l);
    Ok(ScatterVerdict { scattered: schro_spread < eps && wave_spread < eps, schro_spread, wave_spread })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Scattered,
    BlewupNumerical,
    ThresholdBlowup,
    Undecided,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Scattered => "scattered",
            Outcome::BlewupNumerical => "blewup_numerical",
            Outcome::ThresholdBlowup => "threshold_blowup",
            Outcome::Undecided => "undecided",
        }
    }
}

/// Detector settings for classifying a path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Detectors {
    pub m_threshold: f64,
    pub budget_threshold: f64,
    pub scatter_window: f64,
    pub scatter_samples: usize,
    pub scatter_eps: f64,
    pub scatter_s: f64,
    pub scatter_l: f64,
}

impl Default for Detectors {
    fn default() -> Self {
        Self {
            m_threshold: 100.0,
            budget_threshold: 1e6,
            scatter_window: 5.0,
            scatter_samples: 11,
            scatter_eps: 1e-2,
            scatter_s: 0.0,
            scatter_l: 0.0,
        }
    }
}

/// Classifies a finished trajectory. Numerical failures, including aborts on
/// boundary contamination, count as `BlewupNumerical`.
pub fn classify(spec: &Spectral<f64>, traj: &Trajectory<f64>, det: &Detectors) -> Result<(Outcome, f64)> {
    let t_end = traj.rows.last().map_or(0.0, |r| r.t);
    match traj.outcome {
        RunOutcome::BlowupNumerical { t } | RunOutcome::BoundaryContamination { t, .. } => {
            return Ok((Outcome::BlewupNumerical, t))
        }
        RunOutcome::ThresholdBlowup { t, .. } => return Ok((Outcome::ThresholdBlowup, t)),
        RunOutcome::Completed => {}
    }
    if let Some((_, t)) = detect_blowup(&traj.rows, det.m_threshold, det.budget_threshold) {
        return Ok((Outcome::ThresholdBlowup, t));
    }
    let v = detect_scattering(spec, traj, det.scatter_window, det.scatter_s, det.scatter_l, det.scatter_eps)?;
    Ok((if v.scattered { Outcome::Scattered } else { Outcome::Undecided }, t_end))
}

/// Base scenario for the scattering curve: simulation settings, Itô-form
/// initial data, and the direction of `c` in `R^{K1}`.
#[derive(Debug, Clone)]
pub struct ScatterScenario {
    pub sim: SimConfig<f64>,
    pub x0: Vec<C<f64>>,
    pub y0: Vec<C<f64>>,
    pub direction: Vec<f64>,
    pub detectors: Detectors,
    /// Initial steps of `min(dt, fine_factor / c²)` over `[0, fine_span / c²]`
    /// resolve the fast decay of `h`.
    pub fine_factor: f64,
    pub fine_span: f64,
}

impl ScatterScenario {
    /// Simulation settings for noise strength `c = ||c||`.
    pub fn config_for(&self, c: f64) -> Result<SimConfig<f64>> {
        let mut cfg = self.sim.clone();
        cfg.formulation = Formulation::RescaledNonconservative;
        let dn = self.direction.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(dn > 0.0) {
            return Err(invalid("noise direction must be nonzero"));
        }
        if c > 0.0 {
            let cv: Vec<f64> = self.direction.iter().map(|x| c * x / dn).collect();
            cfg.noise = NoiseSpec::constant_imag(&cv);
            let c2 = c * c;
            let df = cfg.dt.min(self.fine_factor / c2);
            if df < cfg.dt {
                cfg.fine_start = Some((df, (self.fine_span / c2).min(cfg.t_max)));
            }
        } else {
            cfg.noise = NoiseSpec::off();
        }
        cfg.scatter = Some(ScatterWindow { length: self.detectors.scatter_window, samples: self.detectors.scatter_samples });
        cfg.monitor.m_threshold = self.detectors.m_threshold;
        cfg.monitor.budget_threshold = self.detectors.budget_threshold;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathResult {
    pub index: usize,
    pub seed: u64,
    pub outcome: Outcome,
    /// Time at which the outcome was decided.
    pub t_decision: f64,
    pub final_hs_schro: f64,
    pub final_hl_wave: f64,
    pub steps: usize,
}

/// Runs and classifies one path of the scenario at strength `c`.
pub fn run_path(scn: &ScatterScenario, cfg: &SimConfig<f64>, index: usize, seed: u64) -> Result<PathResult> {
    let spec = Spectral::new(cfg.grid);
    let traj = run_simulation(cfg, scn.x0.clone(), scn.y0.clone(), seed)?;
    let (outcome, t_decision) = classify(&spec, &traj, &scn.detectors)?;
    let last = traj.rows.last().copied();
    Ok(PathResult {
        index,
        seed,
        outcome,
        t_decision,
        final_hs_schro: last.map_or(f64::NAN, |r| r.hs_schro),
        final_hl_wave: last.map_or(f64::NAN, |r| r.hl_wave),
        steps: traj.steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleResult {
    pub c: f64,
    pub paths: Vec<PathResult>,
    pub runtime_secs: f64,
}

impl EnsembleResult {
    pub fn count(&self, o: Outcome) -> usize {
        self.paths.iter().filter(|p| p.outcome == o).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub c: f64,
    pub n: usize,
    pub n_scattered: usize,
    pub n_threshold: usize,
    pub n_numerical: usize,
    pub n_undecided: usize,
    pub p_hat: f64,
    pub lo: f64,
    pub hi: f64,
    pub mean_decision_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterCurve {
    pub points: Vec<CurvePoint>,
    /// Largest deviation of `p_hat` from its non-decreasing isotonic fit.
    pub isotonic_residual: f64,
    pub ensembles: Vec<EnsembleResult>,
}

/// Path `i` at grid index `g` uses `path_seed(master, g * n_paths + i)`.
pub fn mc_scattering_curve(scn: &ScatterScenario, c_grid: &[f64], n_paths: usize, master: u64) -> Result<ScatterCurve> {
    let mut points = Vec::new();
    let mut ensembles = Vec::new();
    for (g, &c) in c_grid.iter().enumerate() {
        let cfg = scn.config_for(c)?;
        let start = Instant::now();
        let paths = (0..n_paths)
            .into_par_iter()
            .map(|i| run_path(scn, &cfg, i, path_seed(master, (g * n_paths + i) as u64)))
            .collect::<Result<Vec<_>>>()?;
        let ens = EnsembleResult { c, paths, runtime_secs: start.elapsed().as_secs_f64() };
        let k = ens.count(Outcome::Scattered);
        let (lo, hi) = wilson_interval(k, n_paths, WILSON_Z);
        points.push(CurvePoint {
            c,
            n: n_paths,
            n_scattered: k,
            n_threshold: ens.count(Outcome::ThresholdBlowup),
            n_numerical: ens.count(Outcome::BlewupNumerical),
            n_undecided: ens.count(Outcome::Undecided),
            p_hat: k as f64 / n_paths.max(1) as f64,
            lo,
            hi,
            mean_decision_time: ens.paths.iter().map(|p| p.t_decision).sum::<f64>() / n_paths.max(1) as f64,
        });
        ensembles.push(ens);
    }
    let p: Vec<f64> = points.iter().map(|q| q.p_hat).collect();
    let w: Vec<f64> = points.iter().map(|q| q.n as f64).collect();
    Ok(ScatterCurve { isotonic_residual: isotonic_residual(&p, &w, true), points, ensembles })
}

/// Horizon and step used for the GBM at strength `c`: `dt_c = min(base, 1/(16 c²))`
/// and `T_c = 1/c + tail/c²`.
pub fn gbm_window(c: f64, base_dt: f64, tail: f64) -> (f64, f64) {
    let dt = base_dt.min(1.0 / (16.0 * c * c));
    (dt, 1.0 / c + tail / (c * c))
}

/// Settings of the interval-Besov experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GbmDecayConfig {
    pub base_dt: f64,
    /// Horizon tail in units of `1/c²`.
    pub tail: f64,
    pub seed: u64,
}

impl Default for GbmDecayConfig {
    fn default() -> Self {
        Self { base_dt: 1.0 / 64.0, tail: 40.0, seed: 0 }
    }
}

/// `||h_c||_{B^s_{p,∞}([1/c, T_c])}` for one path, via the ramp extension with
/// ramp length `1/c²`.
pub fn gbm_interval_norm(c: f64, s: f64, p: f64, cfg: &GbmDecayConfig, seed: u64) -> Result<f64> {
    let (dt, t_end) = gbm_window(c, cfg.base_dt, cfg.tail);
    let steps = (t_end / dt).ceil() as usize;
    let times = uniform_grid(dt, steps);
    let paths = sample_brownian(1, 0, &times, seed)?;
    let h = gbm_from_coeffs(&[c], &paths)?.values;
    let i0 = (1.0 / (c * dt)).round() as usize;
    let est = besov_norm_interval(&h[i0.min(h.len() - 1)..], dt, 1.0 / (c * c), s, p, false)?;
    Ok(est.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayRow {
    pub c: f64,
    pub s: f64,
    pub p: f64,
    pub eps: f64,
    pub n: usize,
    pub n_exceed: usize,
    pub p_hat: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Estimates `P(||h_c||_{B^s_{p,∞}([1/c, T_c])} >= eps)` for each `c`.
pub fn gbm_decay_experiment(
    c_grid: &[f64],
    s: f64,
    p: f64,
    n_paths: usize,
    eps: f64,
    cfg: &GbmDecayConfig,
) -> Result<Vec<DecayRow>> {
    if !(0.0..0.5).contains(&s) || !(p >= 1.0) {
        return Err(invalid(format!("need s in [0, 1/2) and p >= 1, got s = {s}, p = {p}")));
    }
    c_grid
        .iter()
        .enumerate()
        .map(|(g, &c)| {
            if !(c > 0.0) {
                return Err(invalid(format!("noise strength must be positive, got {c}")));
            }
            let norms = (0..n_paths)
                .into_par_iter()
                .map(|i| gbm_interval_norm(c, s, p, cfg, path_seed(cfg.seed, (g * n_paths + i) as u64)))
                .collect::<Result<Vec<_>>>()?;
            let k = norms.iter().filter(|&&v| v >= eps).count();
            let (lo, hi) = wilson_interval(k, n_paths, WILSON_Z);
            Ok(DecayRow { c, s, p, eps, n: n_paths, n_exceed: k, p_hat: k as f64 / n_paths as f64, lo, hi })
        })
        .collect()
}

/// Homogeneous Besov norm of `h_c` on `[0, span]` with `samples` points and
/// ramp `ramp`.
fn gbm_window_norm(c: f64, span: f64, samples: usize, ramp: f64, s: f64, p: f64, seed: u64) -> Result<f64> {
    let dt = span / samples as f64;
    let paths = sample_brownian(1, 0, &uniform_grid(dt, samples - 1), seed)?;
    let h = gbm_from_coeffs(&[c], &paths)?.values;
    Ok(besov_norm_interval(&h, dt, ramp, s, p, true)?.value)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingResult {
    pub c: f64,
    pub s: f64,
    pub p: f64,
    pub n: usize,
    /// KS statistic between `||h_c||` on `[0, 1/c]` and
    /// `c^{2s - 2/p} ||h_1||` on `[0, c]`.
    pub ks: f64,
    pub lhs_mean: f64,
    pub rhs_mean: f64,
}

/// Samples both sides of the GBM Besov scaling identity with independent
/// seed streams (`seed_lhs`, `seed_rhs`). Both windows use `samples` points;
/// the ramp is `ramp / c²` on the left and `ramp` on the right.
pub fn gbm_scaling_experiment(
    c: f64,
    s: f64,
    p: f64,
    n_paths: usize,
    samples: usize,
    ramp: f64,
    seed_lhs: u64,
    seed_rhs: u64,
) -> Result<ScalingResult> {
    if !(c > 0.0) || samples < 2 {
        return Err(invalid("scaling experiment needs c > 0 and at least 2 samples"));
    }
    let factor = c.powf(2.0 * s - 2.0 / p);
    let lhs = (0..n_paths)
        .into_par_iter()
        .map(|i| gbm_window_norm(c, 1.0 / c, samples, ramp / (c * c), s, p, path_seed(seed_lhs, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let rhs = (0..n_paths)
        .into_par_iter()
        .map(|i| gbm_window_norm(1.0, c, samples, ramp, s, p, path_seed(seed_rhs, i as u64)).map(|v| v * factor))
        .collect::<Result<Vec<_>>>()?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(ScalingResult { c, s, p, n: n_paths, ks: ks_two_sample(&lhs, &rhs), lhs_mean: mean(&lhs), rhs_mean: mean(&rhs) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentRow {
    pub c: f64,
    pub t: f64,
    pub n: usize,
    pub mean: f64,
    /// Sample standard error of the mean.
    pub se: f64,
    /// `|mean - 1| / se`.
    pub z: f64,
}

/// Monte Carlo estimate of `E[h_c(t)]` from exact lognormal samples
/// `h_c(t) = exp(-2 c sqrt(t) Z - 2 c² t)`.
pub fn gbm_moment(c: f64, t: f64, n: usize, seed: u64) -> Result<MomentRow> {
    if n < 2 || !(t > 0.0) {
        return Err(invalid("moment estimate needs t > 0 and n >= 2"));
    }
    let paths = sample_brownian(n, 0, &[0.0, t], seed)?;
    let vals: Vec<f64> = paths.schro.iter().map(|b| (-2.0 * c * b[0] - 2.0 * c * c * t).exp()).collect();
    let mean = vals.iter().sum::<f64>() / n as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let se = (var / n as f64).sqrt();
    Ok(MomentRow { c, t, n, mean, se, z: (mean - 1.0).abs() / se })
}
