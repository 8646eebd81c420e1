//! Subcommand bodies.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};
use znl_core::config::Config;
use znl_core::experiments::{
    gbm_decay_experiment, gbm_scaling_experiment, mc_scattering_curve, splitmix64, GbmDecayConfig,
};
use znl_core::lp_besov::{besov_norm, holder_norm};
use znl_core::noise::NoiseMode;
use znl_core::regimes::region_map;
use znl_core::restriction_norms::{s_norm, w_norm, SpaceTimeBlock};
use znl_core::solver::{run_simulation, simulation_paths, transform_check, RunOutcome};
use znl_core::{Snapshot, Spectral};

use crate::output::{CliResult, Failure, Run};
use crate::{Cli, Command};

pub fn dispatch(cli: &Cli) -> CliResult<()> {
    configure_threads(cli.threads)?;
    match &cli.command {
        Command::Regimes { d, grid_step, out } => regimes(cli, *d, *grid_step, out),
        Command::Simulate { export_paths } => simulate(cli, *export_paths),
        Command::TransformCheck { refinements } => transform(cli, *refinements),
        Command::Norms { input, column, k, besov, holder, lambda_max, out } => {
            norms(cli, input, column.as_deref(), *k, besov.as_deref(), *holder, *lambda_max, out)
        }
        Command::Diagnose { input, s_norm, w_norm, window, tilde, taper, out } => {
            diagnose(cli, input, s_norm.as_deref(), w_norm.as_deref(), window.as_deref(), *tilde, *taper, out)
        }
        Command::McScatter { n_paths, c_grid } => mc_scatter(cli, *n_paths, c_grid.as_deref()),
        Command::GbmDecay { c_grid, s, p, eps, n_paths, base_dt, tail, out } => {
            let cfg = GbmDecayConfig { base_dt: *base_dt, tail: *tail, seed: cli.seed };
            gbm_decay(cli, c_grid, *s, *p, *eps, *n_paths, cfg, out)
        }
        Command::GbmScaling { c, s, p, n_paths, samples, ramp, out } => {
            gbm_scaling(cli, *c, *s, *p, *n_paths, *samples, *ramp, out)
        }
    }
}

fn configure_threads(flag: Option<usize>) -> CliResult<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("ZNL_THREADS") {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| Failure::invalid(format!("ZNL_THREADS={v} is not a count")))?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Failure::invalid("thread count must be positive"));
        }
        // A pool built earlier in the process keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn load_config(cli: &Cli, required: bool) -> CliResult<Option<Config>> {
    match &cli.config {
        Some(p) => Config::load(p).map(Some).map_err(Failure::invalid),
        None if required => Err(Failure::invalid("this subcommand needs --config")),
        None => Ok(None),
    }
}

fn require_config(cli: &Cli) -> CliResult<Config> {
    Ok(load_config(cli, true)?.expect("required config present"))
}

#[derive(Serialize)]
struct RegionCsv {
    s: f64,
    l: f64,
    in_lwp: bool,
    regime: &'static str,
}

fn regimes(cli: &Cli, d: u32, step: f64, out: &Path) -> CliResult<()> {
    if d == 0 || d > 12 {
        return Err(Failure::invalid(format!("--d must be in 1..=12, got {d}")));
    }
    if !(step > 0.0 && step.is_finite()) || (d as f64 + 1.0) / step > 4096.0 {
        return Err(Failure::invalid(format!("--grid-step {step} gives an empty or oversized grid")));
    }
    let config = load_config(cli, false)?;
    let mut run = Run::new("regimes", &cli.out_dir, cli.seed, config, out)?;
    let rows: Vec<RegionCsv> = region_map(d, step)
        .into_iter()
        .map(|r| RegionCsv { s: r.s, l: r.l, in_lwp: r.in_lwp, regime: r.regime.as_str() })
        .collect();
    let primary = run.primary.clone();
    let res = run.write_csv(&primary, &rows).map(|_| rows.len());
    run.conclude(res, |n| json!({ "d": d, "grid_step": step, "rows": n }))?;
    Ok(())
}

#[derive(Serialize)]
struct NormCsv {
    t: f64,
    mass: f64,
    energy: f64,
    #[serde(rename = "Hs_schro")]
    hs_schro: f64,
    #[serde(rename = "Hl_wave")]
    hl_wave: f64,
    budget: f64,
    h_value: f64,
}

#[derive(Serialize)]
struct PathCsv {
    t: f64,
    k: usize,
    beta: f64,
}

fn simulate(cli: &Cli, export_paths: bool) -> CliResult<()> {
    let cfg = require_config(cli)?;
    let sim = cfg.sim_config().map_err(Failure::invalid)?;
    let (x0, y0) = cfg.initial_data().map_err(Failure::invalid)?;
    let primary = PathBuf::from(format!("{}_norms.csv", cfg.output.prefix));
    let mut run = Run::new("simulate", &cli.out_dir, cli.seed, Some(cfg.clone()), &primary)?;
    let res = simulate_body(&mut run, &cfg, &sim, x0, y0, cli.seed, export_paths);
    run.conclude(res, |(o, steps)| json!({ "run": o, "steps": steps }))?;
    Ok(())
}

fn simulate_body(
    run: &mut Run,
    cfg: &Config,
    sim: &znl_core::solver::SimConfig<f64>,
    x0: Vec<znl_core::C<f64>>,
    y0: Vec<znl_core::C<f64>>,
    seed: u64,
    export_paths: bool,
) -> CliResult<(RunOutcome, usize)> {
    let traj = run_simulation(sim, x0, y0, seed)?;
    let rows: Vec<NormCsv> = traj
        .rows
        .iter()
        .map(|r| NormCsv {
            t: r.t,
            mass: r.mass,
            energy: r.energy,
            hs_schro: r.hs_schro,
            hl_wave: r.hl_wave,
            budget: r.budget,
            h_value: r.h_value,
        })
        .collect();
    let primary = run.primary.clone();
    run.write_csv(&primary, &rows)?;
    if export_paths {
        let spec = Spectral::shared(sim.grid);
        let fields = sim.noise.materialize(&spec)?;
        let paths = simulation_paths(sim, &fields, seed)?;
        let rows: Vec<PathCsv> = paths.rows().into_iter().map(|(t, k, beta)| PathCsv { t, k, beta }).collect();
        let p = run.sibling(&format!("{}_paths.csv", cfg.output.prefix));
        run.write_csv(&p, &rows)?;
    }
    if !traj.snapshots.is_empty() {
        let mut bytes = Vec::new();
        for (t, x, y) in &traj.snapshots {
            Snapshot::from_buffer(&sim.grid, *t, "X", x).write_to(&mut bytes)?;
            Snapshot::from_buffer(&sim.grid, *t, "Y", y).write_to(&mut bytes)?;
        }
        let p = run.sibling(&format!("{}_snapshots.bin", cfg.output.prefix));
        run.write_bytes(&p, &bytes)?;
    }
    match traj.outcome {
        RunOutcome::BlowupNumerical { t } => Err(Failure::runtime(format!("non-finite state at t = {t}"))),
        RunOutcome::BoundaryContamination { t, wrap } => {
            Err(Failure::runtime(format!("boundary wrap-around {wrap:e} exceeded the tolerance at t = {t}")))
        }
        o => Ok((o, traj.steps)),
    }
}

fn transform(cli: &Cli, refinements: u32) -> CliResult<()> {
    let cfg = require_config(cli)?;
    if cfg.noise.mode != NoiseMode::Conservative {
        return Err(Failure::invalid("transform-check needs noise.mode = \"conservative\""));
    }
    if refinements > 8 {
        return Err(Failure::invalid("at most 8 refinements"));
    }
    let sim = cfg.sim_config().map_err(Failure::invalid)?;
    let (x0, y0) = cfg.initial_data().map_err(Failure::invalid)?;
    let primary = PathBuf::from(format!("{}_transform.json", cfg.output.prefix));
    let mut run = Run::new("transform-check", &cli.out_dir, cli.seed, Some(cfg), &primary)?;
    let res = (0..=refinements)
        .map(|j| {
            let mut c = sim.clone();
            c.dt = sim.dt / 2f64.powi(j as i32);
            transform_check(&c, x0.clone(), y0.clone(), cli.seed).map_err(Failure::from)
        })
        .collect::<CliResult<Vec<_>>>();
    let res = res.and_then(|reports| {
        let ratios: Vec<Value> = reports
            .windows(2)
            .map(|w| json!({ "schro": w[0].schro / w[1].schro, "wave": w[0].wave / w[1].wave }))
            .collect();
        let body = json!({ "reports": reports, "ratios": ratios });
        let p = run.primary.clone();
        run.write_json(&p, body.clone())?;
        Ok(body)
    });
    run.conclude(res, |b| b.clone())?;
    Ok(())
}

/// Reads `(t, value)` samples from a CSV with a header row.
fn read_series(path: &Path, column: Option<&str>, k: usize) -> CliResult<(Vec<f64>, f64)> {
    let file = File::open(path).map_err(|e| Failure::invalid(format!("cannot open {}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(BufReader::new(file));
    let headers = rdr.headers().map_err(Failure::invalid)?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let t_col = find("t").ok_or_else(|| Failure::invalid("input needs a `t` column"))?;
    let v_col = match column {
        Some(c) => find(c).ok_or_else(|| Failure::invalid(format!("no column named `{c}`")))?,
        None => headers.len().checked_sub(1).ok_or_else(|| Failure::invalid("empty header"))?,
    };
    let k_col = find("k");
    let mut ts = Vec::new();
    let mut vs = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(Failure::invalid)?;
        let num = |c: usize| -> CliResult<f64> {
            rec.get(c)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Failure::invalid(format!("row {}: column {c} is not a number", i + 1)))
        };
        if let Some(kc) = k_col {
            if num(kc)? != k as f64 {
                continue;
            }
        }
        ts.push(num(t_col)?);
        vs.push(num(v_col)?);
    }
    if vs.len() < 2 {
        return Err(Failure::invalid("need at least two samples"));
    }
    let dt = (ts[ts.len() - 1] - ts[0]) / (ts.len() - 1) as f64;
    let uniform = ts.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-6 * dt.abs());
    if !(dt > 0.0) || !uniform {
        return Err(Failure::invalid("samples must be on a uniform increasing time grid"));
    }
    Ok((vs, dt))
}

#[allow(clippy::too_many_arguments)]
fn norms(
    cli: &Cli,
    input: &Path,
    column: Option<&str>,
    k: usize,
    besov: Option<&[f64]>,
    holder: Option<f64>,
    lambda_max: Option<f64>,
    out: &Path,
) -> CliResult<()> {
    if besov.is_none() && holder.is_none() {
        return Err(Failure::invalid("give --besov s,p and/or --holder a"));
    }
    if besov.is_some_and(|b| b.len() != 2) {
        return Err(Failure::invalid("--besov takes s,p"));
    }
    let (samples, dt) = read_series(input, column, k)?;
    let config = load_config(cli, false)?;
    let mut run = Run::new("norms", &cli.out_dir, cli.seed, config, out)?;
    let res = (|| -> CliResult<Value> {
        let b = match besov {
            Some(b) => Some(besov_norm(&samples, dt, b[0], b[1], lambda_max)?),
            None => None,
        };
        let h = match holder {
            Some(a) => Some(json!({ "alpha": a, "value": holder_norm(&samples, dt, a)? })),
            None => None,
        };
        Ok(json!({ "input": input.display().to_string(), "n": samples.len(), "dt": dt, "besov": b, "holder": h }))
    })();
    let res = res.and_then(|body| {
        let p = run.primary.clone();
        run.write_json(&p, body)?;
        Ok(())
    });
    run.conclude(res, |_| json!({}))?;
    Ok(())
}

fn frames_in(snaps: &[Snapshot], name: &str, window: Option<&[f64]>) -> Vec<Snapshot> {
    snaps
        .iter()
        .filter(|s| s.name == name && window.is_none_or(|w| s.time >= w[0] && s.time <= w[1]))
        .cloned()
        .collect()
}

fn block_of(frames: &[Snapshot], taper: f64) -> CliResult<SpaceTimeBlock<f64>> {
    let first = frames.first().ok_or_else(|| Failure::invalid("no frames in the window"))?;
    let grid = first.grid()?;
    let n = frames.len();
    let dt = if n > 1 { (frames[n - 1].time - first.time) / (n - 1) as f64 } else { 0.0 };
    if !frames.windows(2).all(|w| ((w[1].time - w[0].time) - dt).abs() <= 1e-6 * dt.abs()) {
        return Err(Failure::invalid("frames are not uniformly spaced in time"));
    }
    if frames.iter().any(|f| f.d != first.d || f.n != first.n || f.length != first.length) {
        return Err(Failure::invalid("frames live on different grids"));
    }
    let spec = Arc::new(Spectral::new(grid));
    SpaceTimeBlock::new(spec, first.time, dt, frames.iter().map(|f| f.values.clone()).collect(), taper)
        .map_err(Failure::invalid)
}

#[allow(clippy::too_many_arguments)]
fn diagnose(
    cli: &Cli,
    input: &Path,
    s_args: Option<&[f64]>,
    w_args: Option<&[f64]>,
    window: Option<&[f64]>,
    tilde: bool,
    taper: f64,
    out: &Path,
) -> CliResult<()> {
    if s_args.is_none() && w_args.is_none() {
        return Err(Failure::invalid("give --s-norm s,a,b and/or --w-norm l,alpha,beta"));
    }
    for (flag, a) in [("--s-norm", s_args), ("--w-norm", w_args)] {
        if a.is_some_and(|v| v.len() != 3) {
            return Err(Failure::invalid(format!("{flag} takes three numbers")));
        }
    }
    if window.is_some_and(|w| w.len() != 2 || !(w[0] <= w[1])) {
        return Err(Failure::invalid("--window takes t1,t2 with t1 <= t2"));
    }
    let file = File::open(input).map_err(|e| Failure::invalid(format!("cannot open {}: {e}", input.display())))?;
    let snaps = Snapshot::read_all(&mut BufReader::new(file)).map_err(Failure::invalid)?;
    let xb = match s_args {
        Some(_) => Some(block_of(&frames_in(&snaps, "X", window), taper)?),
        None => None,
    };
    let yb = match w_args {
        Some(_) => Some(block_of(&frames_in(&snaps, "Y", window), taper)?),
        None => None,
    };
    let config = load_config(cli, false)?;
    let mut run = Run::new("diagnose", &cli.out_dir, cli.seed, config, out)?;
    let res = (|| -> CliResult<Value> {
        let s = match (s_args, &xb) {
            (Some(a), Some(b)) => Some(json!({
                "s": a[0], "a": a[1], "b": a[2], "tilde": tilde, "frames": b.len(), "t0": b.t0, "dt": b.dt,
                "norm": s_norm(b, a[0], a[1], a[2], tilde)?,
            })),
            _ => None,
        };
        let w = match (w_args, &yb) {
            (Some(a), Some(b)) => Some(json!({
                "l": a[0], "alpha": a[1], "beta": a[2], "frames": b.len(), "t0": b.t0, "dt": b.dt,
                "norm": w_norm(b, a[0], a[1], a[2])?,
            })),
            _ => None,
        };
        Ok(json!({ "input": input.display().to_string(), "taper": taper, "s_norm": s, "w_norm": w }))
    })();
    let res = res.and_then(|body| {
        let p = run.primary.clone();
        run.write_json(&p, body)
    });
    run.conclude(res, |_| json!({}))?;
    Ok(())
}

#[derive(Serialize)]
struct McCsv {
    c: f64,
    n: usize,
    n_scattered: usize,
    p_hat: f64,
    lo: f64,
    hi: f64,
}

fn mc_scatter(cli: &Cli, n_paths: usize, c_grid: Option<&[f64]>) -> CliResult<()> {
    let cfg = require_config(cli)?;
    let grid: Vec<f64> = c_grid.map(<[f64]>::to_vec).unwrap_or_else(|| cfg.noise.c_grid.clone());
    if n_paths == 0 || grid.is_empty() || grid.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
        return Err(Failure::invalid("need n_paths > 0 and a nonempty grid of finite c >= 0"));
    }
    let scn = cfg.scenario().map_err(Failure::invalid)?;
    let primary = PathBuf::from(format!("{}_mc_scatter.csv", cfg.output.prefix));
    let mut run = Run::new("mc-scatter", &cli.out_dir, cli.seed, Some(cfg), &primary)?;
    let res = mc_scattering_curve(&scn, &grid, n_paths, cli.seed).map_err(Failure::from).and_then(|curve| {
        let rows: Vec<McCsv> = curve
            .points
            .iter()
            .map(|q| McCsv { c: q.c, n: q.n, n_scattered: q.n_scattered, p_hat: q.p_hat, lo: q.lo, hi: q.hi })
            .collect();
        let p = run.primary.clone();
        run.write_csv(&p, &rows)?;
        Ok(curve)
    });
    run.conclude(res, |c| {
        json!({ "points": c.points, "isotonic_residual": c.isotonic_residual, "ensembles": c.ensembles })
    })?;
    Ok(())
}

#[derive(Serialize)]
struct DecayCsv {
    c: f64,
    s: f64,
    p: f64,
    eps: f64,
    p_hat: f64,
    lo: f64,
    hi: f64,
}

#[allow(clippy::too_many_arguments)]
fn gbm_decay(
    cli: &Cli,
    c_grid: &[f64],
    s: f64,
    p: f64,
    eps: f64,
    n_paths: usize,
    cfg: GbmDecayConfig,
    out: &Path,
) -> CliResult<()> {
    if n_paths == 0 || c_grid.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
        return Err(Failure::invalid("need n_paths > 0 and positive finite c values"));
    }
    if !(0.0..0.5).contains(&s) || !(p >= 1.0) || !(eps >= 0.0) {
        return Err(Failure::invalid("need 0 <= s < 1/2, p >= 1 and eps >= 0"));
    }
    if !(cfg.base_dt > 0.0 && cfg.tail > 0.0) {
        return Err(Failure::invalid("--base-dt and --tail must be positive"));
    }
    let config = load_config(cli, false)?;
    let mut run = Run::new("gbm-decay", &cli.out_dir, cli.seed, config, out)?;
    let res = gbm_decay_experiment(c_grid, s, p, n_paths, eps, &cfg).map_err(Failure::from).and_then(|rows| {
        let csv: Vec<DecayCsv> = rows
            .iter()
            .map(|r| DecayCsv { c: r.c, s: r.s, p: r.p, eps: r.eps, p_hat: r.p_hat, lo: r.lo, hi: r.hi })
            .collect();
        let path = run.primary.clone();
        run.write_csv(&path, &csv)?;
        Ok(rows)
    });
    run.conclude(res, |rows| json!({ "rows": rows, "settings": cfg }))?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn gbm_scaling(cli: &Cli, c: f64, s: f64, p: f64, n_paths: usize, samples: usize, ramp: f64, out: &Path) -> CliResult<()> {
    if !(c > 0.0 && c.is_finite()) || n_paths < 2 || samples < 2 || !(ramp >= 0.0) || !(p >= 1.0) {
        return Err(Failure::invalid("need c > 0, n_paths >= 2, samples >= 2, ramp >= 0 and p >= 1"));
    }
    let config = load_config(cli, false)?;
    let mut run = Run::new("gbm-scaling", &cli.out_dir, cli.seed, config, out)?;
    let (lhs, rhs) = (splitmix64(2 * cli.seed), splitmix64(2 * cli.seed + 1));
    let res = gbm_scaling_experiment(c, s, p, n_paths, samples, ramp, lhs, rhs).map_err(Failure::from).and_then(|r| {
        let body = json!({ "result": r, "samples": samples, "ramp": ramp });
        let path = run.primary.clone();
        run.write_json(&path, body.clone())?;
        Ok(body)
    });
    run.conclude(res, |b| b.clone())?;
    Ok(())
}
