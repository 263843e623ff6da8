use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::datadriven::DataDrivenRun;
use super::problem::ReferenceRun;
use crate::corrector::{prediction_error, ReferenceSet};
use crate::error::{Error, Result};
use crate::fem::{gauss_weights, COMPONENTS};
use crate::separated::{SeparatedField, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Full-order run over the training interval (0, T_K].
    Reference,
    /// Full-order run over (T_K, T_N], restarted from the training end state.
    ExtendedReference,
    /// Forecast and sparse correction over (T_K, T_N].
    DataDriven,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Reference => "reference",
            Method::ExtendedReference => "extended-reference",
            Method::DataDriven => "data-driven",
        }
    }
}

/// Return-mapping call counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationCounts {
    pub total: u64,
    /// One pass over the window, `points · instants`.
    pub per_pass: u64,
    pub passes: usize,
    /// Gauss points integrated per instant.
    pub points: usize,
    pub instants: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataDrivenSummary {
    /// Rank m of the training decomposition.
    pub training_rank: usize,
    /// Rank m★ after enrichment.
    pub corrected_rank: usize,
    pub training_error: f64,
    pub reference_elements: Vec<usize>,
    pub reference_fallback: bool,
    /// Errors on the reference points against the sparse integration.
    pub sampled_predictor_error: f64,
    pub sampled_updated_error: f64,
    pub sampled_corrected_error: f64,
    pub orthogonality: f64,
    pub update_condition: f64,
    pub hodmd_lags: Vec<usize>,
    pub unstable_modes: usize,
    pub enrichment_residuals: Vec<f64>,
    pub mtpgd_residuals: Vec<f64>,
}

/// Deterministic summary of a run; wall-clock figures live in [`Timings`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub method: Method,
    pub first_cycle: usize,
    pub cycles: usize,
    pub n_micro: usize,
    /// Outer-pass residuals: displacement change for full-order runs,
    /// reference-point strain change for data-driven runs.
    pub outer_residuals: Vec<f64>,
    pub equilibrium_residual: f64,
    pub evaluations: EvaluationCounts,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub datadriven: Option<DataDrivenSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTime {
    pub phase: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
    /// Seconds spent in return mapping.
    pub integration_seconds: f64,
    pub phases: Vec<PhaseTime>,
}

impl RunReport {
    pub fn from_reference(config: &RunConfig, method: Method, run: &ReferenceRun) -> Self {
        RunReport {
            name: config.name.clone(),
            method,
            first_cycle: run.grid.first_cycle,
            cycles: run.grid.n_macro,
            n_micro: run.grid.n_micro,
            outer_residuals: run.outer_residuals.clone(),
            equilibrium_residual: run.equilibrium_residual,
            evaluations: EvaluationCounts {
                total: run.evaluations,
                per_pass: run.evaluations_per_pass,
                passes: run.outer_residuals.len(),
                points: run.initial_state.len(),
                instants: run.grid.total(),
            },
            datadriven: None,
        }
    }

    pub fn from_datadriven(config: &RunConfig, run: &DataDrivenRun) -> Self {
        let reference = &run.bundle.reference;
        RunReport {
            name: config.name.clone(),
            method: Method::DataDriven,
            first_cycle: run.grid.first_cycle,
            cycles: run.grid.n_macro,
            n_micro: run.grid.n_micro,
            outer_residuals: run.pass_residuals.clone(),
            equilibrium_residual: run.equilibrium_residual,
            evaluations: EvaluationCounts {
                total: run.evaluations,
                per_pass: run.evaluations_per_pass,
                passes: run.pass_residuals.len(),
                points: reference.points.len(),
                instants: run.grid.total(),
            },
            datadriven: Some(DataDrivenSummary {
                training_rank: run.training.field.rank(),
                corrected_rank: run.bundle.rank(),
                training_error: run.training.relative_error(),
                reference_elements: reference.elements.clone(),
                reference_fallback: reference.fallback,
                sampled_predictor_error: run.sampled_errors.predictor,
                sampled_updated_error: run.sampled_errors.updated,
                sampled_corrected_error: run.sampled_errors.corrected,
                orthogonality: run.orthogonality,
                update_condition: run.update.condition,
                hodmd_lags: run.models.iter().map(|m| m.lag).collect(),
                unstable_modes: run
                    .models
                    .iter()
                    .filter(|m| m.spectral_radius() > 1.0 + m.growth_guard)
                    .count(),
                enrichment_residuals: run.enrichment_residuals.clone(),
                mtpgd_residuals: run.mtpgd_residuals.clone(),
            }),
        }
    }

    pub fn grid(&self, cycle_duration: f64) -> Result<TimeGrid> {
        TimeGrid::new(self.n_micro, self.first_cycle + self.cycles, cycle_duration)?.window(self.first_cycle, self.cycles)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

impl Timings {
    pub fn from_reference(run: &ReferenceRun) -> Self {
        Timings {
            total_seconds: run.seconds,
            integration_seconds: run.integration_seconds,
            phases: vec![
                PhaseTime {
                    phase: "integrate".into(),
                    seconds: run.integration_seconds,
                },
                PhaseTime {
                    phase: "solve".into(),
                    seconds: run.seconds - run.integration_seconds,
                },
            ],
        }
    }

    pub fn from_datadriven(run: &DataDrivenRun) -> Self {
        let phases: Vec<PhaseTime> = run
            .timings
            .iter()
            .map(|(phase, seconds)| PhaseTime {
                phase: phase.clone(),
                seconds: *seconds,
            })
            .collect();
        Timings {
            total_seconds: phases.iter().map(|p| p.seconds).sum(),
            integration_seconds: phases.iter().filter(|p| p.phase == "integrate").map(|p| p.seconds).sum(),
            phases,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Plastic strain over a run's window, dense or separated.
#[derive(Debug, Clone)]
pub enum PlasticField {
    Dense(DMatrix<f64>),
    Separated {
        predictor: SeparatedField,
        corrected: SeparatedField,
    },
}

impl PlasticField {
    /// The run's final plastic strain, 3N_points × N_t.
    pub fn dense(&self) -> DMatrix<f64> {
        match self {
            PlasticField::Dense(m) => m.clone(),
            PlasticField::Separated { corrected, .. } => corrected.to_dense(),
        }
    }

    /// Uncorrected forecast when there is one.
    pub fn predictor(&self) -> Option<DMatrix<f64>> {
        match self {
            PlasticField::Dense(_) => None,
            PlasticField::Separated { predictor, .. } => Some(predictor.to_dense()),
        }
    }
}

/// What a comparison needs from a run, in memory or loaded from disk.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub config: RunConfig,
    pub report: RunReport,
    pub timings: Timings,
    pub plastic: PlasticField,
}

impl RunArtifacts {
    pub fn from_reference(config: &RunConfig, method: Method, run: &ReferenceRun) -> Self {
        RunArtifacts {
            config: config.clone(),
            report: RunReport::from_reference(config, method, run),
            timings: Timings::from_reference(run),
            plastic: PlasticField::Dense(run.plastic.matrix().clone()),
        }
    }

    pub fn from_datadriven(config: &RunConfig, run: &DataDrivenRun) -> Result<Self> {
        Ok(RunArtifacts {
            config: config.clone(),
            report: RunReport::from_datadriven(config, run),
            timings: Timings::from_datadriven(run),
            plastic: PlasticField::Separated {
                predictor: run.bundle.base.clone(),
                corrected: run.bundle.corrected()?,
            },
        })
    }
}

/// Errors, speed-ups and call-count ratios of a candidate run against a
/// full-order reference over the same window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    /// ε̂ of the uncorrected forecast over Ω × Î (the candidate field itself
    /// when it has no forecast).
    pub predictor_error: f64,
    /// ε̂★ over Ω × Î.
    pub corrected_error: f64,
    /// The same two errors restricted to the reference elements.
    pub predictor_error_sampled: Option<f64>,
    pub corrected_error_sampled: Option<f64>,
    /// Candidate over reference return-mapping calls for one pass.
    pub evaluation_ratio: f64,
    /// Candidate over reference integrated points.
    pub point_ratio: f64,
    pub speedup_integration: f64,
    pub speedup_overall: f64,
}

/// Compares `candidate` against the full-order `reference`.
///
/// Both must describe the same problem and window; only the method may differ.
pub fn compare_runs(reference: &RunArtifacts, candidate: &RunArtifacts) -> Result<Comparison> {
    if !reference.config.same_problem(&candidate.config) {
        return Err(Error::Argument("runs were made with different problem settings".into()));
    }
    let (r, c) = (&reference.report, &candidate.report);
    if r.method == Method::DataDriven {
        return Err(Error::Argument("the reference run must be a full-order run".into()));
    }
    if (r.first_cycle, r.cycles, r.n_micro) != (c.first_cycle, c.cycles, c.n_micro) {
        return Err(Error::Argument(format!(
            "runs cover different windows: cycles {}..{} and {}..{}",
            r.first_cycle,
            r.first_cycle + r.cycles,
            c.first_cycle,
            c.first_cycle + c.cycles
        )));
    }
    let truth = reference.plastic.dense();
    let corrected = candidate.plastic.dense();
    if truth.shape() != corrected.shape() {
        return Err(Error::Argument("plastic fields have different shapes".into()));
    }
    let predictor = candidate.plastic.predictor().unwrap_or_else(|| corrected.clone());
    let mesh = candidate.config.mesh.build()?;
    let w = gauss_weights(&mesh);
    let row_w: Vec<f64> = w.iter().flat_map(|&x| [x; COMPONENTS]).collect();
    let predictor_error = prediction_error(&predictor, &truth, Some(&row_w))?;
    let corrected_error = prediction_error(&corrected, &truth, Some(&row_w))?;
    let (predictor_error_sampled, corrected_error_sampled) = match &c.datadriven {
        Some(dd) => {
            let set = ReferenceSet::from_elements(dd.reference_elements.clone());
            let rows = set.rows();
            let rw = set.row_weights(&w);
            let t = truth.select_rows(&rows);
            (
                Some(prediction_error(&predictor.select_rows(&rows), &t, Some(&rw))?),
                Some(prediction_error(&corrected.select_rows(&rows), &t, Some(&rw))?),
            )
        }
        None => (None, None),
    };
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { f64::NAN };
    Ok(Comparison {
        predictor_error,
        corrected_error,
        predictor_error_sampled,
        corrected_error_sampled,
        evaluation_ratio: ratio(c.evaluations.per_pass as f64, r.evaluations.per_pass as f64),
        point_ratio: ratio(c.evaluations.points as f64, r.evaluations.points as f64),
        speedup_integration: ratio(reference.timings.integration_seconds, candidate.timings.integration_seconds),
        speedup_overall: ratio(reference.timings.total_seconds, candidate.timings.total_seconds),
    })
}

impl Comparison {
    /// One row per metric: `metric,value,unit`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["metric", "value", "unit"])?;
        let mut rows = vec![
            ("predictor_error", Some(self.predictor_error), "relative"),
            ("corrected_error", Some(self.corrected_error), "relative"),
            ("predictor_error_sampled", self.predictor_error_sampled, "relative"),
            ("corrected_error_sampled", self.corrected_error_sampled, "relative"),
            ("evaluation_ratio", Some(self.evaluation_ratio), "calls/calls"),
            ("point_ratio", Some(self.point_ratio), "points/points"),
            ("speedup_integration", Some(self.speedup_integration), "s/s"),
            ("speedup_overall", Some(self.speedup_overall), "s/s"),
        ];
        rows.retain(|r| r.1.is_some());
        for (metric, value, unit) in rows {
            out.write_record([metric, &format!("{:.17e}", value.unwrap_or(f64::NAN)), unit])?;
        }
        out.flush()?;
        Ok(())
    }
}
