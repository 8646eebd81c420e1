mod common;

use std::sync::Arc;

use num_complex::Complex;
use znl_core::restriction_norms::{s_norm, w_norm, SpaceTimeBlock};
use znl_core::{Spectral, TorusGrid, C};

/// Observed `||e^{itΔ}f||_S / ||f||_{H^s}` is 6.80 on this grid.
const FREE_S_BOUND: f64 = 7.5;
/// Observed `||e^{it|∇|}g||_W / ||g||_{L^2}` is 4.22.
const FREE_W_BOUND: f64 = 4.7;

fn spec3() -> Arc<Spectral<f64>> {
    Arc::new(Spectral::new(TorusGrid::new(3, 16, 2.0 * std::f64::consts::PI).unwrap()))
}

fn data(spec: &Spectral<f64>) -> Vec<C<f64>> {
    let g = spec.grid();
    common::gaussian(g, 1.0, 0.7)
        .into_iter()
        .enumerate()
        .map(|(i, z)| z * Complex::from_polar(1.0, g.coords(i)[0]))
        .collect()
}

fn free_block(spec: &Arc<Spectral<f64>>, wave: bool, f: &[C<f64>]) -> SpaceTimeBlock<f64> {
    SpaceTimeBlock::from_fn(spec.clone(), 0.0, 1.0 / 64.0, 64, 0.25, |t| {
        let mut u = f.to_vec();
        let sym = if wave { spec.wave_symbol(t) } else { spec.schroedinger_symbol(t) };
        spec.apply_symbol(&mut u, &sym);
        u
    })
    .unwrap()
}

#[test]
fn free_evolutions_stay_within_frozen_bounds() {
    let spec = spec3();
    let f = data(&spec);
    let s = 1.0;
    let sn = s_norm(&free_block(&spec, false, &f), s, 2.0, 1.0, false).unwrap().total / spec.hs_norm(&f, s);
    let wn = w_norm(&free_block(&spec, true, &f), 0.0, 0.5, 0.5).unwrap().total / spec.hs_norm(&f, 0.0);
    println!("S ratio {sn:.4}, W ratio {wn:.4}");
    assert!(sn.is_finite() && sn > 0.0 && sn <= FREE_S_BOUND, "{sn}");
    assert!(wn.is_finite() && wn > 0.0 && wn <= FREE_W_BOUND, "{wn}");
}

#[test]
fn norms_are_homogeneous() {
    let spec = spec3();
    let f = data(&spec);
    let g: Vec<C<f64>> = f.iter().map(|z| z * Complex::new(0.0, -2.5)).collect();
    let (a, b) = (free_block(&spec, false, &f), free_block(&spec, false, &g));
    let (na, nb) = (s_norm(&a, 1.0, 2.0, 1.0, true).unwrap().total, s_norm(&b, 1.0, 2.0, 1.0, true).unwrap().total);
    assert!((nb - 2.5 * na).abs() < 1e-10 * nb, "{na} {nb}");
    let (wa, wb) = (w_norm(&a, 0.5, 0.5, 0.5).unwrap().total, w_norm(&b, 0.5, 0.5, 0.5).unwrap().total);
    assert!((wb - 2.5 * wa).abs() < 1e-10 * wb, "{wa} {wb}");
}

#[test]
fn removing_high_frequencies_does_not_increase_wave_norm() {
    let spec = spec3();
    let f = data(&spec);
    let mut low = f.clone();
    spec.forward(&mut low);
    for (i, z) in low.iter_mut().enumerate() {
        if spec.xi_abs(i) > 2.5 {
            *z = Complex::new(0.0, 0.0);
        }
    }
    spec.inverse(&mut low);
    let (a, b) = (free_block(&spec, true, &f), free_block(&spec, true, &low));
    let (na, nb) = (w_norm(&a, 0.0, 0.5, 0.5).unwrap(), w_norm(&b, 0.0, 0.5, 0.5).unwrap());
    assert!(nb.total <= na.total * (1.0 + 1e-12));
    for (ra, rb) in na.per_scale.iter().zip(&nb.per_scale) {
        assert!(rb.value <= ra.value * (1.0 + 1e-12) + 1e-15, "scale {}", ra.lambda);
    }
}

#[test]
fn dropping_a_scale_lowers_the_total() {
    let spec = spec3();
    let n = s_norm(&free_block(&spec, false, &data(&spec)), 1.0, 2.0, 1.0, false).unwrap();
    let lam = n.per_scale[0].lambda;
    let m = n.without_scale(lam);
    assert!(m.total < n.total);
    let want = (n.total.powi(2) - n.per_scale[0].value.powi(2)).max(0.0).sqrt();
    assert!((m.total - want).abs() < 1e-10 * n.total);
}
