mod common;

use num_complex::Complex;
use znl_core::{Grid32, Spectral, Spectral32, TorusGrid, C};

fn pseudo_random(n: usize, seed: u64) -> Vec<C<f64>> {
    let mut x = seed;
    let mut next = move || {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    (0..n).map(|_| Complex::new(next(), next())).collect()
}

#[test]
fn parseval_and_round_trip() {
    for (d, n) in [(1, 128), (2, 32), (3, 8)] {
        let spec = Spectral::new(TorusGrid::new(d, n, 5.0).unwrap());
        let f = pseudo_random(spec.len(), d as u64);
        let mut c = f.clone();
        spec.forward(&mut c);
        let (a, b) = (spec.l2_norm(&f), spec.l2_norm_coeffs(&c));
        assert!((a - b).abs() <= 1e-12 * a, "d={d}: {a} vs {b}");
        spec.inverse(&mut c);
        let err = c.iter().zip(&f).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-14, "d={d}: round trip {err}");
    }
}

#[test]
fn f32_round_trip() {
    let spec = Spectral32::new(Grid32::new(2, 16, 3.0).unwrap());
    let f: Vec<C<f32>> = pseudo_random(spec.len(), 9).iter().map(|z| Complex::new(z.re as f32, z.im as f32)).collect();
    let mut c = f.clone();
    spec.forward(&mut c);
    spec.inverse(&mut c);
    let err = c.iter().zip(&f).map(|(x, y)| (x - y).norm()).fold(0.0f32, f32::max);
    assert!(err < 1e-5, "{err}");
}

#[test]
fn propagators_compose_and_preserve_l2() {
    let spec = Spectral::new(TorusGrid::new(2, 32, 7.0).unwrap());
    let f = pseudo_random(spec.len(), 3);
    for sym in [|s: &Spectral<f64>, t| s.schroedinger_symbol(t), |s: &Spectral<f64>, t| s.wave_symbol(t)] {
        let mut two_steps = f.clone();
        spec.apply_symbol(&mut two_steps, &sym(&spec, 0.3));
        spec.apply_symbol(&mut two_steps, &sym(&spec, 0.45));
        let mut one_step = f.clone();
        spec.apply_symbol(&mut one_step, &sym(&spec, 0.75));
        let err = two_steps.iter().zip(&one_step).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12, "composition {err}");
        let (a, b) = (spec.l2_norm(&f), spec.l2_norm(&one_step));
        assert!((a - b).abs() < 1e-12 * a);
    }
}

#[test]
fn gaussian_h1_norm_matches_closed_form() {
    // ||f||² = w√π and ||f'||² = √π / (2w) for f = exp(-x²/(2w²)) on the line
    let grid = TorusGrid::line(256, 40.0).unwrap();
    let spec = Spectral::new(grid);
    let w = 1.3;
    let f = common::gaussian(&grid, 1.0, w);
    let pi = std::f64::consts::PI;
    let want = (w * pi.sqrt() + pi.sqrt() / (2.0 * w)).sqrt();
    let got = znl_core::lp_besov::sobolev_norm(&spec, &f, 1.0);
    assert!((got - want).abs() < 1e-6 * want, "{got} vs {want}");
}
