mod common;

use common::*;
use mtpgd::hodmd::{hodmd_fit, hodmd_forecast, select_lag, HodmdOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn opts(lag: usize) -> HodmdOptions {
    HodmdOptions {
        lag,
        ..Default::default()
    }
}

#[test]
fn damped_cosine_eigenvalues_are_recurrence_roots() {
    let series: Vec<f64> = (0..40).map(|j| 0.95f64.powi(j) * (0.3 * j as f64).cos()).collect();
    let model = hodmd_fit(&series, &opts(2)).unwrap();
    // x² − 2r cos θ x + r² = 0
    let (r, theta) = (0.95f64, 0.3f64);
    let disc = Complex64::new((r * theta.cos()).powi(2) - r * r, 0.0).sqrt();
    let roots = [r * theta.cos() + disc, r * theta.cos() - disc];
    assert_eq!(model.eigenvalues.len(), 2);
    for root in roots {
        let nearest = model.eigenvalues.iter().map(|mu| (mu - root).norm()).fold(f64::INFINITY, f64::min);
        assert!(nearest <= 1e-8, "root {root} missed by {nearest:e}");
    }
}

#[test]
fn recurrence_forecast_is_exact_at_long_horizon() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let roots = [
            Complex64::from_polar(0.99, 0.4),
            Complex64::from_polar(0.99, -0.4),
            Complex64::new(rng.gen_range(0.5..0.9), 0.0),
        ];
        let coeffs = recurrence_coefficients(&roots);
        let start: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let series = step_recurrence(&coeffs, &start, 230);
        let model = hodmd_fit(&series[..30], &opts(4)).unwrap();
        let fc = hodmd_forecast(&model, 200).unwrap();
        assert!(relative_l2(&fc.values, &series[30..]) <= 1e-8);
        assert!(!fc.unstable);
    }
}

#[test]
fn series_from_roots_matches_stepped_recurrence() {
    let roots = [Complex64::from_polar(0.9, 1.1), Complex64::from_polar(0.9, -1.1)];
    let a = Complex64::new(0.5, -0.25);
    let series = recurrence_series(&roots, &[a, a.conj()], 50);
    let stepped = step_recurrence(&recurrence_coefficients(&roots), &series, 50);
    assert!(relative_l2(&stepped, &series) <= 1e-12);
}

#[test]
fn lag_selection_prefers_exact_order() {
    let series: Vec<f64> = (0..60).map(|j| 0.97f64.powi(j) * (0.5 * j as f64).sin()).collect();
    assert_eq!(select_lag(&series, &[1, 2, 3], 0.25, &HodmdOptions::default()).unwrap(), 2);
    assert_eq!(select_lag(&[3.0; 40], &[1, 2, 3], 0.25, &HodmdOptions::default()).unwrap(), 1);
}

#[test]
fn selected_lag_beats_first_order_on_noisy_cosine() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let n: usize = 80;
    let clean: Vec<f64> = (0..n).map(|j| 0.98f64.powi(j as i32) * (0.35 * j as f64).cos()).collect();
    let noisy: Vec<f64> = clean.iter().map(|v| v + rng.gen_range(-1e-3..1e-3)).collect();
    let train = 60;
    let d = select_lag(&noisy[..train], &[1, 2, 3, 4, 6], 0.25, &HodmdOptions::default()).unwrap();
    let tail_error = |lag: usize| {
        let fc = hodmd_forecast(&hodmd_fit(&noisy[..train], &opts(lag)).unwrap(), n - train).unwrap();
        relative_l2(&fc.values, &clean[train..])
    };
    assert!(tail_error(d) < tail_error(1), "lag {d}");
}
