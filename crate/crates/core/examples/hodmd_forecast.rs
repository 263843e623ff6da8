//! Fits a lagged DMD model to a slowly drifting, damped oscillation and
//! extrapolates it three times past the training window.

use mtpgd::hodmd::{hodmd_fit, hodmd_forecast, select_lag, HodmdOptions};

fn series(j: usize) -> f64 {
    let t = j as f64;
    1.0 + 0.01 * t + 0.4 * 0.97f64.powf(t) * (0.45 * t).cos()
}

fn main() -> mtpgd::Result<()> {
    let train: Vec<f64> = (0..30).map(series).collect();
    let base = HodmdOptions::default();
    let lag = select_lag(&train, &[2, 3, 4, 6, 8], 0.25, &base)?;
    let model = hodmd_fit(&train, &HodmdOptions { lag, ..base })?;
    println!("lag {lag}, fit error {:.2e}", model.fit_error);
    for (mu, a) in model.eigenvalues.iter().zip(&model.amplitudes) {
        println!("  |μ| = {:.5}, arg μ = {:+.4}, |a| = {:.4}", mu.norm(), mu.arg(), a.norm());
    }
    let fc = hodmd_forecast(&model, 90)?;
    for (h, v) in fc.values.iter().enumerate().step_by(15) {
        let j = train.len() + h;
        println!("j = {j:>3}: forecast {v:.6}, exact {:.6}", series(j));
    }
    Ok(())
}
