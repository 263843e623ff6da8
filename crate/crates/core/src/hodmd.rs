//! Higher-order dynamic mode decomposition of scalar series.
//!
//! A depth-d model assumes `v_{j+d} ≈ c_1 v_j + … + c_d v_{j+d−1}`. The
//! d-lagged snapshot matrix is truncated by SVD, the reduced Koopman operator
//! `Z₂ Z₁⁺` gives the eigenvalues μ_i, and amplitudes a_i are fitted by least
//! squares so that `v_j ≈ Re Σ a_i μ_i^j`.

use std::io::Write;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type C64 = Complex<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HodmdOptions {
    /// Lag depth d.
    pub lag: usize,
    /// Singular values below `tol_svd·σ_max` are discarded.
    pub tol_svd: f64,
    /// Modes contributing less than `tol_spectral` of the largest are dropped.
    pub tol_spectral: f64,
    /// Eigenvalues with `|μ| > 1 + growth_guard` flag the forecast as unstable.
    pub growth_guard: f64,
    /// Fit on roughly this many resampled macro points instead of every cycle.
    pub resample: Option<usize>,
}

impl Default for HodmdOptions {
    fn default() -> Self {
        HodmdOptions {
            lag: 10,
            tol_svd: 1e-8,
            tol_spectral: 1e-6,
            growth_guard: 0.05,
            resample: None,
        }
    }
}

/// Fitted model; index 0 is the first training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct HodmdModel {
    pub lag: usize,
    pub eigenvalues: Vec<C64>,
    pub amplitudes: Vec<C64>,
    /// Length of the training series.
    pub n_train: usize,
    /// Sample spacing of the fitted series in training-index units (1 without resampling).
    pub stride: usize,
    /// Training index of the first fitted sample.
    pub origin: usize,
    /// Samples actually fitted (resampled when `stride > 1`).
    pub fitted: Vec<f64>,
    /// Relative ℓ2 reconstruction error on the fitted samples.
    pub fit_error: f64,
    /// The lagged matrix kept fewer singular values than the lag depth.
    pub degenerate: bool,
    pub growth_guard: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub values: Vec<f64>,
    /// Some retained eigenvalue exceeds the growth guard.
    pub unstable: bool,
    /// Largest discarded imaginary part.
    pub max_imaginary: f64,
}

impl HodmdModel {
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().map(|m| m.norm()).fold(0.0, f64::max)
    }

    /// Complex model value at fitted-sample index `k`.
    fn value(&self, k: usize) -> C64 {
        self.eigenvalues
            .iter()
            .zip(&self.amplitudes)
            .map(|(mu, a)| a * mu.powu(k as u32))
            .sum()
    }

    /// Model values at training indices `0..n_train`.
    pub fn reconstruct(&self) -> Vec<f64> {
        self.evaluate_range(0, self.n_train).0
    }

    fn evaluate_range(&self, start: usize, count: usize) -> (Vec<f64>, f64) {
        if self.stride == 1 {
            let mut imag = 0.0f64;
            let vals = (start..start + count)
                .map(|j| {
                    let z = self.value(j);
                    imag = imag.max(z.im.abs());
                    z.re
                })
                .collect();
            return (vals, imag);
        }
        // coarse samples at origin + stride·k, extended past the training window
        let last_needed = start + count;
        let mut k_max = self.fitted.len();
        while self.origin + self.stride * (k_max - 1) < last_needed + self.stride {
            k_max += 1;
        }
        let mut imag = 0.0f64;
        let xs: Vec<f64> = (0..k_max).map(|k| (self.origin + self.stride * k) as f64).collect();
        let ys: Vec<f64> = (0..k_max)
            .map(|k| {
                if k < self.fitted.len() {
                    self.fitted[k]
                } else {
                    let z = self.value(k);
                    imag = imag.max(z.im.abs());
                    z.re
                }
            })
            .collect();
        let spline = NaturalSpline::new(&xs, &ys);
        ((start..start + count).map(|j| spline.eval(j as f64)).collect(), imag)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["re_mu", "im_mu", "re_amplitude", "im_amplitude"])?;
        for (mu, a) in self.eigenvalues.iter().zip(&self.amplitudes) {
            out.serialize((mu.re, mu.im, a.re, a.im))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Fits a depth-`opts.lag` model to `series`.
pub fn hodmd_fit(series: &[f64], opts: &HodmdOptions) -> Result<HodmdModel> {
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("series contains non-finite values".into()));
    }
    let d = opts.lag;
    if d == 0 {
        return Err(Error::Argument("lag depth must be at least 1".into()));
    }
    let (stride, origin, fitted) = resample(series, opts.resample)?;
    let n = fitted.len();
    if n <= 2 * d {
        return Err(Error::Argument(format!(
            "series of {n} samples is too short for lag depth {d} (need more than {})",
            2 * d
        )));
    }
    let mut model = HodmdModel {
        lag: d,
        eigenvalues: vec![],
        amplitudes: vec![],
        n_train: series.len(),
        stride,
        origin,
        fitted: fitted.clone(),
        fit_error: 0.0,
        degenerate: false,
        growth_guard: opts.growth_guard,
    };
    let scale = fitted.iter().map(|v| v * v).sum::<f64>().sqrt();
    if scale == 0.0 {
        model.degenerate = true;
        return Ok(model);
    }

    let cols = n - d + 1;
    let z = DMatrix::from_fn(d, cols, |i, j| fitted[i + j]);
    let svd = z.svd(true, true);
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > opts.tol_svd * smax)
        .collect();
    let vt = svd.v_t.expect("right vectors requested").select_rows(&keep);
    let sigma = DMatrix::from_diagonal(&DVector::from_iterator(keep.len(), keep.iter().map(|&i| svd.singular_values[i])));
    let zr = sigma * vt;
    let z1 = zr.columns(0, cols - 1).into_owned();
    let z2 = zr.columns(1, cols - 1).into_owned();
    let pinv = z1
        .clone()
        .pseudo_inverse(1e-14 * smax)
        .map_err(|e| Error::Numeric(format!("reduced Koopman operator: {e}")))?;
    let koopman = z2 * pinv;
    let mut mu: Vec<C64> = koopman.complex_eigenvalues().iter().copied().collect();
    sort_spectrum(&mut mu);

    let (mut amps, _) = fit_amplitudes(&fitted, &mu)?;
    // drop negligible modes, then refit
    let contrib: Vec<f64> = mu
        .iter()
        .zip(&amps)
        .map(|(m, a)| a.norm() * m.norm().max(1.0).powi(n as i32 - 1))
        .collect();
    let top = contrib.iter().copied().fold(0.0, f64::max);
    let kept: Vec<usize> = (0..mu.len()).filter(|&i| contrib[i] > opts.tol_spectral * top).collect();
    if kept.len() < mu.len() {
        mu = kept.iter().map(|&i| mu[i]).collect();
        amps = fit_amplitudes(&fitted, &mu)?.0;
    }
    model.degenerate = keep.len() < d;
    model.eigenvalues = mu;
    model.amplitudes = amps;
    let recon: Vec<f64> = (0..n).map(|k| model.value(k).re).collect();
    model.fit_error = fitted.iter().zip(&recon).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / scale;
    Ok(model)
}

/// Conjugate pairs adjacent, ordered by decreasing modulus then argument.
fn sort_spectrum(mu: &mut [C64]) {
    mu.sort_by(|a, b| {
        b.norm()
            .partial_cmp(&a.norm())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.im.abs().total_cmp(&b.im.abs()))
            .then(b.im.total_cmp(&a.im))
    });
}

/// Least-squares amplitudes of `v_k ≈ Σ a_i μ_i^k` over the fitted window.
fn fit_amplitudes(series: &[f64], mu: &[C64]) -> Result<(Vec<C64>, f64)> {
    let n = series.len();
    if mu.is_empty() {
        return Ok((vec![], 1.0));
    }
    let v = DMatrix::from_fn(n, mu.len(), |k, i| mu[i].powu(k as u32));
    let rhs = DVector::from_iterator(n, series.iter().map(|&x| C64::new(x, 0.0)));
    let svd = v.svd(true, true);
    let smax = svd.singular_values.max();
    let a = svd
        .solve(&rhs, 1e-13 * smax)
        .map_err(|e| Error::Numeric(format!("amplitude fit: {e}")))?;
    Ok((a.iter().copied().collect(), smax))
}

fn resample(series: &[f64], target: Option<usize>) -> Result<(usize, usize, Vec<f64>)> {
    match target {
        None => Ok((1, 0, series.to_vec())),
        Some(t) => {
            if t < 2 {
                return Err(Error::Argument("resampling needs at least two points".into()));
            }
            let n = series.len();
            let stride = n.div_ceil(t).max(1);
            // keep the last sample on the coarse grid
            let origin = (n - 1) % stride;
            let fitted: Vec<f64> = (origin..n).step_by(stride).map(|j| series[j]).collect();
            Ok((stride, origin, fitted))
        }
    }
}

/// Forecast at training indices `n_train .. n_train + horizon`.
pub fn hodmd_forecast(model: &HodmdModel, horizon: usize) -> Result<Forecast> {
    if horizon == 0 {
        return Err(Error::Argument("forecast horizon must be positive".into()));
    }
    let (values, max_imaginary) = model.evaluate_range(model.n_train, horizon);
    let unstable = model.spectral_radius() > 1.0 + model.growth_guard;
    if unstable {
        log::warn!(
            "HODMD forecast uses eigenvalue of modulus {:.6} beyond the growth guard",
            model.spectral_radius()
        );
    }
    Ok(Forecast {
        values,
        unstable,
        max_imaginary,
    })
}

/// Chooses the lag depth with the smallest error on a held-out tail.
///
/// Errors within 1e-9 (relative to the tail norm) of the best count as ties,
/// resolved towards the smallest depth.
pub fn select_lag(series: &[f64], candidates: &[usize], validation_fraction: f64, opts: &HodmdOptions) -> Result<usize> {
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(Error::Argument(format!("validation fraction {validation_fraction} outside (0, 1)")));
    }
    let n = series.len();
    let n_val = ((validation_fraction * n as f64).round() as usize).max(1);
    if n_val >= n {
        return Err(Error::Argument("validation tail leaves no training data".into()));
    }
    let (train, tail) = series.split_at(n - n_val);
    let tail_norm = tail.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let mut scores = Vec::new();
    for &d in candidates {
        let Ok(model) = hodmd_fit(train, &HodmdOptions { lag: d, ..*opts }) else { continue };
        let Ok(fc) = hodmd_forecast(&model, n_val) else { continue };
        let err = fc.values.iter().zip(tail).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / tail_norm;
        if err.is_finite() {
            scores.push((d, err));
        }
    }
    if scores.is_empty() {
        return Err(Error::Argument(format!("no feasible lag depth among {candidates:?}")));
    }
    let best = scores.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    Ok(scores
        .iter()
        .filter(|s| s.1 <= best + 1e-9)
        .map(|s| s.0)
        .min()
        .expect("non-empty"))
}

/// Natural cubic spline through strictly increasing abscissae.
struct NaturalSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    m: Vec<f64>,
}

impl NaturalSpline {
    fn new(xs: &[f64], ys: &[f64]) -> Self {
        let n = xs.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            let k = n - 2;
            let mut a = DMatrix::zeros(k, k);
            let mut r = DVector::zeros(k);
            for i in 1..n - 1 {
                let (h0, h1) = (xs[i] - xs[i - 1], xs[i + 1] - xs[i]);
                a[(i - 1, i - 1)] = 2.0 * (h0 + h1);
                if i > 1 {
                    a[(i - 1, i - 2)] = h0;
                }
                if i < n - 2 {
                    a[(i - 1, i)] = h1;
                }
                r[i - 1] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
            }
            if let Some(sol) = a.lu().solve(&r) {
                m[1..n - 1].copy_from_slice(sol.as_slice());
            }
        }
        NaturalSpline {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            m,
        }
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if n == 1 {
            return self.ys[0];
        }
        let i = match self.xs.iter().position(|&xi| xi > x) {
            Some(0) => 0,
            Some(p) => p - 1,
            None => n - 2,
        };
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let (t0, t1) = (x1 - x, x - x0);
        self.m[i] * t0.powi(3) / (6.0 * h)
            + self.m[i + 1] * t1.powi(3) / (6.0 * h)
            + (self.ys[i] / h - self.m[i] * h / 6.0) * t0
            + (self.ys[i + 1] / h - self.m[i + 1] * h / 6.0) * t1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(lag: usize) -> HodmdOptions {
        HodmdOptions { lag, ..Default::default() }
    }

    #[test]
    fn constant_series_is_a_fixed_point() {
        let model = hodmd_fit(&[5.0; 12], &opts(1)).unwrap();
        assert_eq!(model.rank(), 1);
        assert!((model.eigenvalues[0] - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((model.amplitudes[0].re - 5.0).abs() < 1e-12);
        let fc = hodmd_forecast(&model, 7).unwrap();
        assert!(fc.values.iter().all(|v| (v - 5.0).abs() < 1e-12));
    }

    #[test]
    fn geometric_series_forecast_is_exact() {
        let s: Vec<f64> = (0..10).map(|j| 0.9f64.powi(j)).collect();
        let model = hodmd_fit(&s, &opts(1)).unwrap();
        assert!((model.eigenvalues[0].re - 0.9).abs() < 1e-13);
        let fc = hodmd_forecast(&model, 30).unwrap();
        for (k, v) in fc.values.iter().enumerate() {
            assert!((v - 0.9f64.powi(10 + k as i32)).abs() < 1e-13);
        }
    }

    #[test]
    fn short_series_is_rejected() {
        assert!(matches!(hodmd_fit(&[1.0; 6], &opts(3)), Err(Error::Argument(_))));
        assert!(matches!(hodmd_forecast(&hodmd_fit(&[1.0; 7], &opts(3)).unwrap(), 0), Err(Error::Argument(_))));
    }

    #[test]
    fn spline_interpolates_cubic_exactly_inside() {
        let xs: Vec<f64> = (0..6).map(|i| 2.0 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        let s = NaturalSpline::new(&xs, &ys);
        assert!((s.eval(5.0) - 14.0).abs() < 1e-12);
    }

    #[test]
    fn resampled_fit_forecasts_slow_trend() {
        let s: Vec<f64> = (0..80).map(|j| 1.0 - 0.5 * 0.97f64.powi(j)).collect();
        let model = hodmd_fit(&s, &HodmdOptions { lag: 3, resample: Some(20), ..Default::default() }).unwrap();
        assert!(model.stride > 1);
        let fc = hodmd_forecast(&model, 40).unwrap();
        for (k, v) in fc.values.iter().enumerate() {
            let exact = 1.0 - 0.5 * 0.97f64.powi(80 + k as i32);
            assert!((v - exact).abs() < 1e-6, "step {k}: {v} vs {exact}");
        }
    }
}
