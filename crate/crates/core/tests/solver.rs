mod common;

use num_complex::Complex;
use znl_core::noise::{Coeff, NoiseMode, NoiseSpec};
use znl_core::solver::{
    refined_rescale, refined_unscale, run_simulation, Formulation, RunOutcome, SimConfig, WrapAction,
    ZakharovState,
};
use znl_core::{Spectral, TorusGrid, C};

use common::{gaussian, soliton_profile, zero};

fn line_setup(dt: f64, t_max: f64) -> (SimConfig<f64>, Vec<C<f64>>, Vec<C<f64>>) {
    let grid = TorusGrid::line(128, 20.0).unwrap();
    let mut cfg = SimConfig::new(grid, dt, t_max);
    cfg.monitor.wrap_action = WrapAction::Record;
    (cfg, gaussian(&grid, 1.5, 1.0), vec![zero(); grid.total()])
}

fn energy_drift(dt: f64) -> f64 {
    let (mut cfg, x0, y0) = line_setup(dt, 1.0);
    cfg.record_every = 1;
    let traj = run_simulation(&cfg, x0, y0, 0).unwrap().into_result().unwrap();
    let e0 = traj.rows[0].energy;
    traj.rows.iter().map(|r| (r.energy - e0).abs()).fold(0.0, f64::max) / e0.abs()
}

#[test]
fn strang_energy_error_is_second_order() {
    let (a, b) = (energy_drift(0.02), energy_drift(0.01));
    assert!(a / b >= 3.5, "drift {a:.2e} -> {b:.2e}");
}

#[test]
fn runs_are_reproducible_from_the_seed() {
    let (mut cfg, x0, y0) = line_setup(0.01, 0.5);
    cfg.noise = NoiseSpec {
        mode: NoiseMode::Conservative,
        schro: vec![Coeff::FourierMode { k: vec![1], amp: Complex::new(0.4, 0.0), phase: 0.0 }],
        wave: vec![Coeff::Constant(Complex::new(0.2, 0.0))],
    };
    let rows = |seed| run_simulation(&cfg, x0.clone(), y0.clone(), seed).unwrap().rows;
    assert_eq!(rows(3), rows(3));
    assert_ne!(rows(3), rows(4));
}

#[test]
fn zero_noise_reproduces_deterministic_run() {
    let (cfg, x0, y0) = line_setup(0.01, 0.5);
    let mut noisy = cfg.clone();
    noisy.noise = NoiseSpec {
        mode: NoiseMode::Conservative,
        schro: vec![Coeff::Constant(Complex::new(0.0, 0.0))],
        wave: vec![Coeff::Constant(Complex::new(0.0, 0.0))],
    };
    let a = run_simulation(&cfg, x0.clone(), y0.clone(), 1).unwrap();
    let b = run_simulation(&noisy, x0, y0, 1).unwrap();
    for (r, s) in a.rows.iter().zip(&b.rows) {
        assert!((r.hs_schro - s.hs_schro).abs() < 1e-12 && (r.energy - s.energy).abs() < 1e-12);
    }
}

#[test]
fn soliton_completes_without_blowup_flags() {
    let grid = TorusGrid::line(256, 40.0).unwrap();
    let q = soliton_profile(&grid);
    let x0: Vec<C<f64>> = q.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let y0: Vec<C<f64>> = q.iter().map(|&v| Complex::new(-v * v, 0.0)).collect();
    let traj = run_simulation(&SimConfig::new(grid, 2e-3, 2.0), x0, y0, 0).unwrap();
    assert_eq!(traj.outcome, RunOutcome::Completed);
}

#[test]
fn growing_data_stops_at_the_threshold() {
    let grid = TorusGrid::new(2, 32, 20.0).unwrap();
    let mut cfg = SimConfig::new(grid, 1.0 / 128.0, 3.0);
    cfg.monitor.m_threshold = 20.0;
    cfg.monitor.wrap_action = WrapAction::Record;
    let traj = run_simulation(&cfg, gaussian(&grid, 4.0, 1.0), vec![zero(); grid.total()], 0).unwrap();
    assert!(matches!(traj.outcome, RunOutcome::ThresholdBlowup { .. }), "{:?}", traj.outcome);
}

#[test]
fn refined_rescaling_round_trips() {
    let grid = TorusGrid::new(2, 16, 2.0 * std::f64::consts::PI).unwrap();
    let spec = Spectral::new(grid);
    let noise = NoiseSpec {
        mode: NoiseMode::Conservative,
        schro: vec![Coeff::FourierMode { k: vec![1, 1], amp: Complex::new(0.6, 0.0), phase: 0.2 }],
        wave: vec![Coeff::Constant(Complex::new(0.3, 0.0))],
    };
    let fields = noise.materialize(&spec).unwrap();
    let x = gaussian(&grid, 1.0, 0.8);
    let traj: Vec<ZakharovState<f64>> = (0..5)
        .map(|j| {
            let mut st = ZakharovState::new(x.clone(), x.iter().map(|z| z * 0.5).collect(), Formulation::RescaledConservative);
            st.t = 0.1 * j as f64;
            st
        })
        .collect();
    let conv: Vec<C<f64>> = x.iter().map(|z| z * Complex::new(0.1, -0.2)).collect();
    let rebased = refined_rescale(&spec, &traj, 2, &fields, &[0.7], &conv).unwrap();
    assert!((rebased[0].t).abs() < 1e-15);
    let back = refined_unscale(&spec, &rebased, traj[2].t, &fields, &[0.7], &conv);
    for (a, b) in back.iter().zip(&traj[2..]) {
        assert!((a.t - b.t).abs() < 1e-14);
        let e = a.schro.iter().zip(&b.schro).chain(a.wave.iter().zip(&b.wave)).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max);
        assert!(e < 1e-13, "{e}");
    }
    let identity = refined_rescale(&spec, &traj, 0, &fields, &[0.0], &vec![zero(); grid.total()]).unwrap();
    assert_eq!(identity[3].schro, traj[3].schro);
    assert!(refined_rescale(&spec, &traj, 9, &fields, &[0.0], &conv).is_err());
}
