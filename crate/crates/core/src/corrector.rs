//! Forecast of the plastic strain and its correction on a few reference points.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::element::GAUSS_PER_ELEMENT;
use crate::fem::COMPONENTS;
use crate::hodmd::{hodmd_fit, hodmd_forecast, HodmdModel, HodmdOptions};
use crate::plasticity::PlasticState;
use crate::separated::{decompose_matrix, DecomposeOptions, Decomposition, SeparatedField, TimeGrid};

/// Elements whose Gauss points carry the sparse constitutive integration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceSet {
    pub elements: Vec<usize>,
    /// Gauss-point indices, `GAUSS_PER_ELEMENT` per element, in element order.
    pub points: Vec<usize>,
    /// Selection used the elastic fallback score because no point had yielded.
    pub fallback: bool,
}

impl ReferenceSet {
    pub fn from_elements(elements: Vec<usize>) -> Self {
        let points = elements
            .iter()
            .flat_map(|&e| (0..GAUSS_PER_ELEMENT).map(move |q| GAUSS_PER_ELEMENT * e + q))
            .collect();
        ReferenceSet {
            elements,
            points,
            fallback: false,
        }
    }

    /// Snapshot rows of the reference points.
    pub fn rows(&self) -> Vec<usize> {
        self.points
            .iter()
            .flat_map(|&p| (0..COMPONENTS).map(move |c| COMPONENTS * p + c))
            .collect()
    }

    /// Per-row area weights restricted to the reference points.
    pub fn row_weights(&self, gauss_weights: &[f64]) -> Vec<f64> {
        self.points
            .iter()
            .flat_map(|&p| std::iter::repeat(gauss_weights[p]).take(COMPONENTS))
            .collect()
    }
}

/// Picks the `count` elements with the largest element-wise maximum of ε̄^p.
///
/// When no point has yielded, `fallback_scores` (one per Gauss point,
/// typically an elastic von Mises stress) is used instead. Ties go to the
/// lowest element index.
pub fn select_reference_points(
    state: &PlasticState,
    count: usize,
    fallback_scores: Option<&[f64]>,
) -> Result<ReferenceSet> {
    let n_el = state.len() / GAUSS_PER_ELEMENT;
    if count == 0 || count >= n_el {
        return Err(Error::Argument(format!(
            "reference element count {count} must lie in [1, {n_el})"
        )));
    }
    let mut scores: &[f64] = &state.eps_bar_p;
    let mut fallback = false;
    if scores.iter().all(|&v| v == 0.0) {
        if let Some(f) = fallback_scores {
            if f.len() != state.len() {
                return Err(Error::shape(state.len(), f.len(), "fallback scores"));
            }
            log::warn!("no plastic strain at the end of training; selecting reference points by elastic stress");
            scores = f;
            fallback = true;
        }
    }
    let element_score = |e: usize| {
        scores[GAUSS_PER_ELEMENT * e..GAUSS_PER_ELEMENT * (e + 1)]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut order: Vec<(usize, f64)> = (0..n_el).map(|e| (e, element_score(e))).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut set = ReferenceSet::from_elements(order[..count].iter().map(|p| p.0).collect());
    set.fallback = fallback;
    Ok(set)
}

/// One HODMD model per macro mode, fitted in parallel.
pub fn fit_macro_modes(base: &SeparatedField, opts: &HodmdOptions) -> Result<Vec<HodmdModel>> {
    (0..base.rank())
        .into_par_iter()
        .map(|k| {
            let series: Vec<f64> = base.macro_.column(k).iter().copied().collect();
            hodmd_fit(&series, opts).map_err(|e| Error::Argument(format!("macro mode {}: {e}", k + 1)))
        })
        .collect()
}

/// Spatial and micro modes of the training decomposition with macro modes
/// replaced by their forecasts over the next `horizon` cycles.
pub fn predict_nonlinear(base: &SeparatedField, models: &[HodmdModel], horizon: usize) -> Result<SeparatedField> {
    if horizon == 0 {
        return Err(Error::Argument("forecast horizon must be positive".into()));
    }
    if models.len() != base.rank() {
        return Err(Error::shape(base.rank(), models.len(), "one forecasting model per macro mode"));
    }
    let mut macro_ = DMatrix::zeros(horizon, base.rank());
    for (k, model) in models.iter().enumerate() {
        let fc = hodmd_forecast(model, horizon)?;
        if fc.unstable {
            log::warn!("macro mode {} forecast exceeds the growth guard", k + 1);
        }
        macro_.set_column(k, &nalgebra::DVector::from_vec(fc.values));
    }
    base.with_macro(macro_)
}

/// Macro-mode update system: `a ΔΨ^T(T) = b(T)` at every macro node.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinSystem {
    /// m × m, symmetric positive semidefinite.
    pub a: DMatrix<f64>,
    /// One row per macro node, one column per mode.
    pub b: DMatrix<f64>,
}

/// Assembles the update system on the reference points.
///
/// `truth` holds the reference-point rows of the integrated plastic strain
/// over the forecast window; the error is taken as truth minus predictor so
/// that the update moves the predictor towards the truth. Spatial integrals
/// use the Gauss-point areas, micro integrals the rectangle rule.
pub fn build_galerkin_system(
    predictor: &SeparatedField,
    reference: &ReferenceSet,
    gauss_weights: &[f64],
    truth: &DMatrix<f64>,
    grid: &TimeGrid,
) -> Result<GalerkinSystem> {
    predictor.check_grid(grid)?;
    let rows = reference.rows();
    if truth.nrows() != rows.len() || truth.ncols() != grid.total() {
        return Err(Error::shape(rows.len() * grid.total(), truth.nrows() * truth.ncols(), "reference-point truth"));
    }
    let w = reference.row_weights(gauss_weights);
    let s = predictor.spatial.select_rows(&rows);
    let mut ws = s.clone();
    for (mut row, &wi) in ws.row_iter_mut().zip(&w) {
        row *= wi;
    }
    let dt = grid.dt_micro;
    let micro = &predictor.micro;
    let a = (s.transpose() * &ws).component_mul(&(micro.transpose() * micro)) * dt;
    let e = truth - predictor.evaluate_rows(&rows)?;
    let g = ws.transpose() * e;
    let (nt, m) = (grid.n_micro, predictor.rank());
    let b = DMatrix::from_fn(grid.n_macro, m, |big, k| {
        dt * (0..nt).map(|i| g[(k, big * nt + i)] * micro[(i, k)]).sum::<f64>()
    });
    Ok(GalerkinSystem { a, b })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroUpdate {
    /// ΔΨ^T, one row per macro node.
    pub delta: DMatrix<f64>,
    /// `a` was singular and a minimum-norm least-squares solution was used.
    pub least_squares: bool,
    /// Ratio of extreme singular values of `a`.
    pub condition: f64,
}

/// Solves the update system node by node.
///
/// With a nodal macro basis and nodal quadrature the time-FE system is block
/// diagonal, one m × m solve per macro node, all sharing the matrix `a`.
pub fn correct_update(system: &GalerkinSystem) -> Result<MacroUpdate> {
    let m = system.a.nrows();
    if system.b.ncols() != m {
        return Err(Error::shape(m, system.b.ncols(), "right-hand side modes"));
    }
    if m == 0 {
        return Ok(MacroUpdate {
            delta: DMatrix::zeros(system.b.nrows(), 0),
            least_squares: false,
            condition: 1.0,
        });
    }
    let sv = system.a.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let bt = system.b.transpose();
    if condition < 1e12 {
        if let Some(ch) = system.a.clone().cholesky() {
            return Ok(MacroUpdate {
                delta: ch.solve(&bt).transpose(),
                least_squares: false,
                condition,
            });
        }
    }
    log::warn!("macro update matrix is singular (condition {condition:e}); using minimum-norm solution");
    let pinv = system
        .a
        .clone()
        .pseudo_inverse(1e-12 * smax.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Numeric(format!("macro update: {e}")))?;
    Ok(MacroUpdate {
        delta: (pinv * bt).transpose(),
        least_squares: true,
        condition,
    })
}

/// Largest normalized inner product between a residual on the reference
/// points and the update test functions Ψ^x_k Ψ^τ_k φ_node(T).
pub fn galerkin_orthogonality(
    predictor: &SeparatedField,
    reference: &ReferenceSet,
    gauss_weights: &[f64],
    residual: &DMatrix<f64>,
    grid: &TimeGrid,
) -> Result<f64> {
    let rows = reference.rows();
    if residual.nrows() != rows.len() || residual.ncols() != grid.total() {
        return Err(Error::shape(rows.len(), residual.nrows(), "residual rows"));
    }
    let w = reference.row_weights(gauss_weights);
    let s = predictor.spatial.select_rows(&rows);
    let mut ws = s.clone();
    for (mut row, &wi) in ws.row_iter_mut().zip(&w) {
        row *= wi;
    }
    let r_norm = residual
        .row_iter()
        .zip(&w)
        .map(|(r, wi)| wi * r.norm_squared())
        .sum::<f64>()
        .sqrt();
    if r_norm == 0.0 {
        return Ok(0.0);
    }
    let g = ws.transpose() * residual;
    let nt = grid.n_micro;
    let mut worst = 0.0f64;
    for k in 0..predictor.rank() {
        let sk = s.column(k).dot(&ws.column(k)).sqrt() * predictor.micro.column(k).norm();
        if sk == 0.0 {
            continue;
        }
        for big in 0..grid.n_macro {
            let inner: f64 = (0..nt).map(|i| g[(k, big * nt + i)] * predictor.micro[(i, k)]).sum();
            worst = worst.max(inner.abs() / (sk * r_norm));
        }
    }
    Ok(worst)
}

/// How enrichment spatial modes are extended outside the reference points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Extension {
    /// Zero away from the reference points.
    #[default]
    Zero,
    /// Least-squares fit in the span of the training spatial modes away from
    /// the reference points; exact values on them.
    Gappy,
}

/// New triads fitted to the post-update residual on the reference points.
///
/// The returned decomposition lives on the reference rows only.
pub fn correct_enrich(
    residual: &DMatrix<f64>,
    row_weights: &[f64],
    grid: &TimeGrid,
    tol: f64,
    max_extra_rank: usize,
) -> Result<Decomposition> {
    let opts = DecomposeOptions {
        tol,
        max_rank: max_extra_rank,
        ..Default::default()
    };
    if max_extra_rank == 0 {
        let empty = SeparatedField::zeros(residual.nrows(), grid.n_micro, grid.n_macro, COMPONENTS);
        return Ok(Decomposition {
            field: empty,
            residual_history: vec![if residual.amax() == 0.0 { 0.0 } else { 1.0 }],
            sweeps: vec![],
            status: crate::separated::DecompositionStatus::MaxRank,
        });
    }
    decompose_matrix(residual, COMPONENTS, grid, Some(row_weights), &opts)
}

/// Lifts enrichment triads from the reference rows to the full spatial layout.
pub fn extend_enrichment(
    enrichment: &SeparatedField,
    reference: &ReferenceSet,
    full_rows: usize,
    extension: Extension,
    training_spatial: &DMatrix<f64>,
    gauss_weights: &[f64],
) -> Result<SeparatedField> {
    let rows = reference.rows();
    if enrichment.rows() != rows.len() {
        return Err(Error::shape(rows.len(), enrichment.rows(), "enrichment rows"));
    }
    let m = enrichment.rank();
    let mut spatial = match extension {
        Extension::Zero => DMatrix::zeros(full_rows, m),
        Extension::Gappy => {
            if training_spatial.nrows() != full_rows {
                return Err(Error::shape(full_rows, training_spatial.nrows(), "training spatial modes"));
            }
            let w = reference.row_weights(gauss_weights);
            let mut sr = training_spatial.select_rows(&rows);
            let mut er = enrichment.spatial.clone();
            for ((mut a, mut b), &wi) in sr.row_iter_mut().zip(er.row_iter_mut()).zip(&w) {
                a *= wi.sqrt();
                b *= wi.sqrt();
            }
            let coeff = sr
                .svd(true, true)
                .solve(&er, 1e-12)
                .map_err(|e| Error::Numeric(format!("gappy extension: {e}")))?;
            training_spatial * coeff
        }
    };
    for (i, &r) in rows.iter().enumerate() {
        spatial.row_mut(r).copy_from(&enrichment.spatial.row(i));
    }
    SeparatedField::new(spatial, enrichment.micro.clone(), enrichment.macro_.clone(), COMPONENTS)
}

/// Forecast, macro corrections and enrichment on a common forecast window.
#[derive(Debug, Clone)]
pub struct PredictionBundle {
    /// Training modes with forecast macro modes Ψ̂^T_k.
    pub base: SeparatedField,
    /// ΔΨ^T_k, one row per macro node.
    pub corrections: DMatrix<f64>,
    /// Triads m+1..m★ on the full spatial layout.
    pub enrichment: SeparatedField,
    pub reference: ReferenceSet,
}

impl PredictionBundle {
    pub fn updated(&self) -> Result<SeparatedField> {
        self.base.with_macro(&self.base.macro_ + &self.corrections)
    }

    /// Σ Ψ^x Ψ^τ (Ψ̂^T + ΔΨ^T) + Σ enrichment triads.
    pub fn corrected(&self) -> Result<SeparatedField> {
        self.updated()?.concat(&self.enrichment)
    }

    pub fn rank(&self) -> usize {
        self.base.rank() + self.enrichment.rank()
    }
}

/// Relative weighted L2 distance over the given rows and all instants.
///
/// Returns `f64::INFINITY` when the reference is identically zero.
pub fn prediction_error(candidate: &DMatrix<f64>, reference: &DMatrix<f64>, row_weights: Option<&[f64]>) -> Result<f64> {
    if candidate.shape() != reference.shape() {
        return Err(Error::shape(reference.len(), candidate.len(), "fields compared for error"));
    }
    if let Some(w) = row_weights {
        if w.len() != reference.nrows() {
            return Err(Error::shape(reference.nrows(), w.len(), "row weights"));
        }
    }
    let weight = |r: usize| row_weights.map_or(1.0, |w| w[r]);
    let (mut num, mut den) = (0.0, 0.0);
    for r in 0..reference.nrows() {
        let wr = weight(r);
        for c in 0..reference.ncols() {
            let d = candidate[(r, c)] - reference[(r, c)];
            num += wr * d * d;
            den += wr * reference[(r, c)] * reference[(r, c)];
        }
    }
    if den == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn state(values: &[f64]) -> PlasticState {
        PlasticState {
            eps_p: vec![[0.0; 3]; values.len()],
            eps_bar_p: values.to_vec(),
        }
    }

    #[test]
    fn uniform_field_selects_first_elements() {
        let set = select_reference_points(&state(&[1.0; 20]), 2, None).unwrap();
        assert_eq!(set.elements, vec![0, 1]);
        assert_eq!(set.points, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn ordered_field_selects_top_elements() {
        let vals: Vec<f64> = (0..24).map(|i| ((i * 7) % 24) as f64).collect();
        let set = select_reference_points(&state(&vals), 3, None).unwrap();
        let mut expect: Vec<(usize, f64)> = (0..6)
            .map(|e| (e, vals[4 * e..4 * e + 4].iter().copied().fold(0.0, f64::max)))
            .collect();
        expect.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        assert_eq!(set.elements, expect[..3].iter().map(|p| p.0).collect::<Vec<_>>());
    }

    #[test]
    fn zero_plasticity_uses_fallback_scores() {
        let mut scores = vec![0.0; 16];
        scores[13] = 5.0;
        let set = select_reference_points(&state(&[0.0; 16]), 1, Some(&scores)).unwrap();
        assert!(set.fallback);
        assert_eq!(set.elements, vec![3]);
    }

    #[test]
    fn invalid_count_is_rejected() {
        assert!(select_reference_points(&state(&[1.0; 8]), 2, None).is_err());
        assert!(select_reference_points(&state(&[1.0; 8]), 0, None).is_err());
    }

    #[test]
    fn scalar_update_divides() {
        let b = DMatrix::from_fn(6, 1, |j, _| 4.0 * (j as f64).sin());
        let up = correct_update(&GalerkinSystem { a: DMatrix::from_element(1, 1, 2.0), b: b.clone() }).unwrap();
        assert!((up.delta - b / 2.0).amax() < 1e-15);
    }

    #[test]
    fn singular_update_falls_back_to_minimum_norm() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DMatrix::from_row_slice(1, 2, &[2.0, 2.0]);
        let up = correct_update(&GalerkinSystem { a, b }).unwrap();
        assert!(up.least_squares);
        assert!((up.delta[(0, 0)] - 1.0).abs() < 1e-12 && (up.delta[(0, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn error_sentinels() {
        let r = DMatrix::from_element(3, 4, 2.0);
        assert_eq!(prediction_error(&r, &r, None).unwrap(), 0.0);
        assert!((prediction_error(&DMatrix::zeros(3, 4), &r, None).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(prediction_error(&r, &DMatrix::zeros(3, 4), None).unwrap(), f64::INFINITY);
    }

    #[test]
    fn zero_extension_only_fills_reference_rows() {
        let set = ReferenceSet::from_elements(vec![1]);
        let mut e = SeparatedField::zeros(12, 2, 2, 3);
        e.push(&DVector::from_element(12, 1.0), &DVector::from_element(2, 1.0), &DVector::from_element(2, 1.0));
        let full = extend_enrichment(&e, &set, 24, Extension::Zero, &DMatrix::zeros(24, 0), &[1.0; 8]).unwrap();
        assert_eq!(full.spatial.rows(0, 12).amax(), 0.0);
        assert_eq!(full.spatial.rows(12, 12).min(), 1.0);
    }
}
