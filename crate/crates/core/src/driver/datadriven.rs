use std::time::Instant;

use nalgebra::DMatrix;

use super::config::{Acceleration, CorrectionConfig, HodmdConfig, RunConfig};
use super::problem::{Anderson, Problem};
use crate::corrector::{
    build_galerkin_system, correct_enrich, correct_update, extend_enrichment, galerkin_orthogonality,
    predict_nonlinear, prediction_error, select_reference_points, MacroUpdate, PredictionBundle, ReferenceSet,
};
use crate::error::{Error, PhaseExt, Result};
use crate::hodmd::{hodmd_fit, select_lag, HodmdModel, HodmdOptions};
use crate::plasticity::{integrate_history_sparse, HistorySnapshot, PlasticState};
use crate::separated::{
    equilibrium_residual, mtpgd_decompose, strain_field, DecomposeOptions, Decomposition, SeparatedField, TimeGrid,
};

#[derive(Debug, Clone, PartialEq)]
pub struct DataDrivenOptions {
    pub decomposition: DecomposeOptions,
    pub mtpgd: DecomposeOptions,
    pub hodmd: HodmdConfig,
    pub correction: CorrectionConfig,
    pub acceleration: Acceleration,
}

impl DataDrivenOptions {
    pub fn from_config(config: &RunConfig) -> Self {
        DataDrivenOptions {
            decomposition: config.decomposition,
            mtpgd: config.mtpgd,
            hodmd: config.hodmd.clone(),
            correction: config.correction,
            acceleration: config.outer.acceleration,
        }
    }
}

/// Relative errors on the reference points, weighted by quadrature area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledErrors {
    pub predictor: f64,
    pub updated: f64,
    pub corrected: f64,
}

#[derive(Debug, Clone)]
pub struct DataDrivenRun {
    pub grid: TimeGrid,
    pub training: Decomposition,
    pub models: Vec<HodmdModel>,
    pub bundle: PredictionBundle,
    pub update: MacroUpdate,
    /// Residual history of the enrichment on the reference points.
    pub enrichment_residuals: Vec<f64>,
    /// Full-dof displacement over the forecast window.
    pub displacement: SeparatedField,
    /// Plastic strain at the reference points from sparse integration, 3J_points × N_t.
    pub sampled_truth: DMatrix<f64>,
    pub sampled_errors: SampledErrors,
    /// Largest normalized projection of the updated residual on the base test triads.
    pub orthogonality: f64,
    /// Relative equilibrium residual of the final separated solve after each enrichment.
    pub mtpgd_residuals: Vec<f64>,
    pub equilibrium_residual: f64,
    /// Relative change of the reference-point strain after each pass.
    pub pass_residuals: Vec<f64>,
    pub evaluations: u64,
    pub evaluations_per_pass: u64,
    pub timings: Vec<(String, f64)>,
}

struct Clock(Vec<(String, f64)>);

impl Clock {
    fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f();
        let dt = start.elapsed().as_secs_f64();
        match self.0.iter_mut().find(|p| p.0 == phase) {
            Some(p) => p.1 += dt,
            None => self.0.push((phase.to_string(), dt)),
        }
        out
    }
}

/// Fits one model per macro mode, choosing each lag on a held-out tail when
/// candidates are configured.
pub fn fit_modes(base: &SeparatedField, config: &HodmdConfig) -> Result<Vec<HodmdModel>> {
    (0..base.rank())
        .map(|k| {
            let series: Vec<f64> = base.macro_.column(k).iter().copied().collect();
            let lag = if config.lag_candidates.is_empty() {
                config.options.lag
            } else {
                select_lag(&series, &config.lag_candidates, config.validation_fraction, &config.options)?
            };
            hodmd_fit(&series, &HodmdOptions { lag, ..config.options })
                .map_err(|e| Error::Argument(format!("macro mode {}: {e}", k + 1)))
        })
        .collect()
}

/// Training modes with forecast macro modes, before any correction.
#[derive(Debug, Clone)]
pub struct Forecasted {
    pub reference: ReferenceSet,
    pub decomposition: Decomposition,
    pub models: Vec<HodmdModel>,
    /// Training spatial and micro modes with forecast macro modes over the window.
    pub base: SeparatedField,
}

/// Selects the reference elements, decomposes the training history and
/// forecasts its macro modes `horizon` cycles ahead.
pub fn forecast_training(
    problem: &Problem,
    training_grid: &TimeGrid,
    training: &HistorySnapshot,
    training_state: &PlasticState,
    horizon: usize,
    opts: &DataDrivenOptions,
) -> Result<Forecasted> {
    forecast_timed(problem, training_grid, training, training_state, horizon, opts, &mut Clock(Vec::new()))
}

fn forecast_timed(
    problem: &Problem,
    training_grid: &TimeGrid,
    training: &HistorySnapshot,
    training_state: &PlasticState,
    horizon: usize,
    opts: &DataDrivenOptions,
    clock: &mut Clock,
) -> Result<Forecasted> {
    let reference = clock
        .time("select", || {
            let scores = problem.elastic_scores()?;
            select_reference_points(training_state, opts.correction.elements, Some(&scores))
        })
        .phase("select")?;
    // more macro modes than sampled points leaves the Galerkin fit on the
    // reference points underdetermined away from them
    let decomposition_opts = DecomposeOptions {
        max_rank: opts.decomposition.max_rank.min(reference.points.len()),
        ..opts.decomposition
    };
    let decomposition = clock
        .time("decompose", || mtpgd_decompose(training, training_grid, &decomposition_opts))
        .phase("decompose")?;
    log::info!(
        "training decomposition: rank {}, relative error {:.3e}",
        decomposition.field.rank(),
        decomposition.relative_error()
    );
    let models = clock
        .time("fit", || fit_modes(&decomposition.field, &opts.hodmd))
        .phase("fit")?;
    let base = clock
        .time("predict", || predict_nonlinear(&decomposition.field, &models, horizon))
        .phase("predict")?;
    Ok(Forecasted {
        reference,
        decomposition,
        models,
        base,
    })
}

/// Forecast of the plastic strain over `grid` from a training history,
/// corrected on a few reference elements and fed to a final separated solve.
///
/// Correction passes alternate sparse integration along the current strain
/// at the reference points, Galerkin update plus enrichment, and a separated
/// solve, until that strain settles to `correction.pass_tol`.
pub fn solve_datadriven(
    problem: &Problem,
    training_grid: &TimeGrid,
    training: &HistorySnapshot,
    training_state: &PlasticState,
    grid: &TimeGrid,
    opts: &DataDrivenOptions,
) -> Result<DataDrivenRun> {
    let mut clock = Clock(Vec::new());
    if grid.n_micro != training_grid.n_micro || grid.first_cycle != training_grid.first_cycle + training_grid.n_macro {
        return Err(Error::Argument("forecast window must continue the training grid".into()));
    }
    let Forecasted {
        reference,
        decomposition,
        models,
        base,
    } = forecast_timed(problem, training_grid, training, training_state, grid.n_macro, opts, &mut clock)?;

    let rows = reference.rows();
    let row_weights = reference.row_weights(&problem.gauss_weights);
    let full_rows = base.rows();

    let sample = |u: &SeparatedField| strain_field(&problem.mesh, u)?.evaluate_at_points(&reference.points);
    let predicted = clock
        .time("solve", || problem.solve_separated(grid, &base, &opts.mtpgd))
        .phase("solve")?;
    let mut strain = sample(&predicted.displacement).phase("integrate")?;
    let mut anderson = match opts.acceleration {
        Acceleration::None => None,
        Acceleration::Anderson { depth } => Some(Anderson::new(depth)),
    };
    let mut evaluations = 0;
    let mut per_pass = 0;
    let mut pass_residuals = Vec::new();
    let mut outcome = None;
    for pass in 1..=opts.correction.max_passes {
        let integration = clock
            .time("integrate", || {
                integrate_history_sparse(&problem.material, &strain, training_state, &reference.points)
            })
            .phase("integrate")?;
        evaluations += integration.evaluations;
        per_pass = integration.evaluations;
        let truth = integration.snapshot.into_matrix();

        let (bundle, update, enrichment, orthogonality, errors) = clock
            .time("correct", || {
                let system = build_galerkin_system(&base, &reference, &problem.gauss_weights, &truth, grid)?;
                let update = correct_update(&system)?;
                let bundle = PredictionBundle {
                    base: base.clone(),
                    corrections: update.delta.clone(),
                    enrichment: SeparatedField::zeros(full_rows, grid.n_micro, grid.n_macro, 3),
                    reference: reference.clone(),
                };
                let updated = bundle.updated()?;
                let residual = &truth - updated.evaluate_rows(&rows)?;
                let orthogonality =
                    galerkin_orthogonality(&base, &reference, &problem.gauss_weights, &residual, grid)?;
                let enrichment = correct_enrich(
                    &residual,
                    &row_weights,
                    grid,
                    opts.correction.enrichment_tol,
                    opts.correction.max_extra_rank,
                )?;
                let extended = extend_enrichment(
                    &enrichment.field,
                    &reference,
                    full_rows,
                    opts.correction.extension,
                    &decomposition.field.spatial,
                    &problem.gauss_weights,
                )?;
                let bundle = PredictionBundle {
                    enrichment: extended,
                    ..bundle
                };
                let errors = SampledErrors {
                    predictor: prediction_error(&base.evaluate_rows(&rows)?, &truth, Some(&row_weights))?,
                    updated: prediction_error(&updated.evaluate_rows(&rows)?, &truth, Some(&row_weights))?,
                    corrected: prediction_error(&bundle.corrected()?.evaluate_rows(&rows)?, &truth, Some(&row_weights))?,
                };
                Ok((bundle, update, enrichment, orthogonality, errors))
            })
            .phase("correct")?;
        log::info!(
            "pass {pass}: sampled error {:.3e} → {:.3e} (update) → {:.3e} (enriched, +{} modes)",
            errors.predictor,
            errors.updated,
            errors.corrected,
            bundle.enrichment.rank()
        );

        let corrected = bundle.corrected().phase("correct")?;
        let solution = clock
            .time("solve", || problem.solve_separated(grid, &corrected, &opts.mtpgd))
            .phase("solve")?;
        let g = sample(&solution.displacement).phase("integrate")?;
        let change = (&g - &strain).norm() / g.norm().max(f64::MIN_POSITIVE);
        pass_residuals.push(change);
        log::info!("pass {pass}: relative reference strain change {change:.3e}");
        if change < opts.correction.pass_tol {
            outcome = Some((bundle, update, enrichment, orthogonality, errors, truth, solution, corrected));
            break;
        }
        strain = match anderson.as_mut() {
            Some(a) => a.step(&strain, g),
            None => g,
        };
    }
    let Some(outcome) = outcome else {
        return Err(Error::Convergence {
            message: format!(
                "correction passes did not converge in {} passes",
                opts.correction.max_passes
            ),
            history: pass_residuals,
        })
        .phase("correct");
    };
    let (bundle, update, enrichment, orthogonality, sampled_errors, sampled_truth, solution, corrected) =
        outcome;
    let equilibrium = clock
        .time("residual", || {
            let rhs = problem.rhs(grid, Some(&corrected))?;
            equilibrium_residual(&problem.system, &rhs, &problem.lift(grid)?, &solution.displacement)
        })
        .phase("residual")?;
    Ok(DataDrivenRun {
        grid: *grid,
        training: decomposition,
        models,
        bundle,
        update,
        enrichment_residuals: enrichment.residual_history,
        displacement: solution.displacement,
        sampled_truth,
        sampled_errors,
        orthogonality,
        mtpgd_residuals: solution.residual_history,
        equilibrium_residual: equilibrium,
        pass_residuals,
        evaluations,
        evaluations_per_pass: per_pass,
        timings: clock.0,
    })
}
