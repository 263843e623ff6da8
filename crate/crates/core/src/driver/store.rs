//! Run directories: manifest, config copy, reports, binary fields and CSV diagnostics.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::config::{MeshSource, RunConfig};
use super::datadriven::{solve_datadriven, DataDrivenOptions, DataDrivenRun};
use super::problem::{solve_reference, Problem, ReferenceRun};
use super::report::{Method, PlasticField, RunArtifacts, RunReport, Timings};
use crate::error::{Error, Result};
use crate::plasticity::{read_matrix_binary, write_matrix_binary, HistorySnapshot, PlasticState};
use crate::separated::{write_matrix_csv, SeparatedField, TimeGrid};

pub const FORMAT_VERSION: u32 = 1;
const CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub method: Method,
    pub producer: String,
    pub files: Vec<String>,
}

/// End of a training run as needed by the forecast.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub grid: TimeGrid,
    pub plastic: HistorySnapshot,
    pub final_state: PlasticState,
}

impl From<&ReferenceRun> for TrainingData {
    fn from(run: &ReferenceRun) -> Self {
        TrainingData {
            grid: run.grid,
            plastic: run.plastic.clone(),
            final_state: run.final_state.clone(),
        }
    }
}

/// Full-order run over the training interval (0, T_K].
pub fn run_reference(config: &RunConfig) -> Result<ReferenceRun> {
    let problem = Problem::from_config(config)?;
    let grid = config.training_grid()?;
    solve_reference(
        &problem,
        &grid,
        &PlasticState::zeros(problem.gauss_count()),
        &config.outer,
        &config.mtpgd,
    )
}

/// Full-order run over (T_K, T_N] restarted from the training end state.
pub fn run_extended_reference(config: &RunConfig, training: &TrainingData) -> Result<ReferenceRun> {
    let problem = Problem::from_config(config)?;
    check_training(config, training)?;
    solve_reference(
        &problem,
        &config.forecast_grid()?,
        &training.final_state,
        &config.outer,
        &config.mtpgd,
    )
}

/// Data-driven run over (T_K, T_N] from a training run.
pub fn run_datadriven(config: &RunConfig, training: &TrainingData) -> Result<DataDrivenRun> {
    let problem = Problem::from_config(config)?;
    check_training(config, training)?;
    solve_datadriven(
        &problem,
        &training.grid,
        &training.plastic,
        &training.final_state,
        &config.forecast_grid()?,
        &DataDrivenOptions::from_config(config),
    )
}

fn check_training(config: &RunConfig, training: &TrainingData) -> Result<()> {
    if training.grid != config.training_grid()? {
        return Err(Error::Argument("training data does not match the configured training grid".into()));
    }
    Ok(())
}

/// `<output_dir>/<name>-<method>`.
pub fn run_dir(config: &RunConfig, method: Method) -> PathBuf {
    config.output_dir.join(format!("{}-{}", config.name, method.as_str()))
}

struct RunWriter {
    dir: PathBuf,
    files: Vec<String>,
}

impl RunWriter {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn file(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        let mut f = self.file(name)?;
        f.write_all(text.as_bytes())?;
        f.flush()?;
        Ok(())
    }

    fn matrix(&mut self, name: &str, m: &DMatrix<f64>, components: usize) -> Result<()> {
        let f = self.file(name)?;
        write_matrix_binary(m, components, CHUNK, f)
    }

    fn separated(&mut self, prefix: &str, field: &SeparatedField) -> Result<()> {
        self.matrix(&format!("{prefix}_spatial.bin"), &field.spatial, field.components)?;
        self.matrix(&format!("{prefix}_micro.bin"), &field.micro, 1)?;
        self.matrix(&format!("{prefix}_macro.bin"), &field.macro_, 1)
    }

    fn finish(mut self, method: Method) -> Result<()> {
        let mut files = std::mem::take(&mut self.files);
        files.push("manifest.toml".into());
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            method,
            producer: format!("mtpgd {}", env!("CARGO_PKG_VERSION")),
            files,
        };
        let text = toml::to_string(&manifest).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(self.dir.join("manifest.toml"), text)?;
        Ok(())
    }

    fn common(&mut self, config: &RunConfig, report: &RunReport, timings: &Timings) -> Result<()> {
        self.text("config.toml", &portable_config(config)?.to_toml()?)?;
        self.text("report.toml", &report.to_toml()?)?;
        self.text("timings.toml", &timings.to_toml()?)?;
        let mut csv = csv::Writer::from_writer(self.file("outer_residuals.csv")?);
        csv.write_record(["pass", "relative_change"])?;
        for (k, r) in report.outer_residuals.iter().enumerate() {
            csv.write_record([(k + 1).to_string(), format!("{r:.17e}")])?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// Mesh paths made absolute so the copy stays valid inside the run directory.
fn portable_config(config: &RunConfig) -> Result<RunConfig> {
    let mut c = config.clone();
    if let MeshSource::File { path } = &mut c.mesh {
        *path = fs::canonicalize(&*path)?;
    }
    Ok(c)
}

fn state_matrix(state: &PlasticState) -> DMatrix<f64> {
    DMatrix::from_fn(4 * state.len(), 1, |r, _| {
        let (p, c) = (r / 4, r % 4);
        if c < 3 {
            state.eps_p[p][c]
        } else {
            state.eps_bar_p[p]
        }
    })
}

fn matrix_state(m: &DMatrix<f64>) -> Result<PlasticState> {
    if m.ncols() != 1 || m.nrows() % 4 != 0 {
        return Err(Error::Parse("plastic state must be a single column of 4 entries per point".into()));
    }
    let n = m.nrows() / 4;
    let mut s = PlasticState::zeros(n);
    for p in 0..n {
        s.eps_p[p] = [m[4 * p], m[4 * p + 1], m[4 * p + 2]];
        s.eps_bar_p[p] = m[4 * p + 3];
    }
    Ok(s)
}

/// Writes a full-order run to `dir`.
pub fn save_reference(dir: &Path, config: &RunConfig, method: Method, run: &ReferenceRun) -> Result<RunReport> {
    let report = RunReport::from_reference(config, method, run);
    let mut w = RunWriter::create(dir)?;
    w.common(config, &report, &Timings::from_reference(run))?;
    w.matrix("displacement.bin", &run.displacement, 2)?;
    w.matrix("plastic_strain.bin", run.plastic.matrix(), 3)?;
    w.matrix("eps_bar.bin", &run.eps_bar, 1)?;
    w.matrix("initial_state.bin", &state_matrix(&run.initial_state), 4)?;
    w.matrix("final_state.bin", &state_matrix(&run.final_state), 4)?;
    w.finish(method)?;
    Ok(report)
}

/// Writes a data-driven run to `dir`.
pub fn save_datadriven(dir: &Path, config: &RunConfig, run: &DataDrivenRun) -> Result<RunReport> {
    let report = RunReport::from_datadriven(config, run);
    let mut w = RunWriter::create(dir)?;
    w.common(config, &report, &Timings::from_datadriven(run))?;
    w.matrix("displacement.bin", &run.displacement.to_dense(), 2)?;
    w.separated("predictor", &run.bundle.base)?;
    w.separated("corrected", &run.bundle.corrected()?)?;
    w.separated("training", &run.training.field)?;
    w.matrix("sampled_truth.bin", &run.sampled_truth, 3)?;

    let mut csv = csv::Writer::from_writer(w.file("hodmd_models.csv")?);
    csv.write_record(["mode", "lag", "re_mu", "im_mu", "re_amplitude", "im_amplitude", "fit_error"])?;
    for (k, m) in run.models.iter().enumerate() {
        for (mu, a) in m.eigenvalues.iter().zip(&m.amplitudes) {
            csv.write_record([
                (k + 1).to_string(),
                m.lag.to_string(),
                format!("{:.17e}", mu.re),
                format!("{:.17e}", mu.im),
                format!("{:.17e}", a.re),
                format!("{:.17e}", a.im),
                format!("{:.17e}", m.fit_error),
            ])?;
        }
    }
    csv.flush()?;
    drop(csv);
    write_matrix_csv(&run.bundle.base.macro_, "cycle", w.file("forecast_macro_modes.csv")?)?;
    write_matrix_csv(&run.update.delta, "cycle", w.file("macro_corrections.csv")?)?;
    w.finish(Method::DataDriven)?;
    Ok(report)
}

fn read_text(dir: &Path, name: &str) -> Result<String> {
    Ok(fs::read_to_string(dir.join(name))?)
}

fn read_matrix(dir: &Path, name: &str) -> Result<DMatrix<f64>> {
    Ok(read_matrix_binary(BufReader::new(File::open(dir.join(name))?))?.0)
}

fn read_separated(dir: &Path, prefix: &str) -> Result<SeparatedField> {
    let (spatial, components) =
        read_matrix_binary(BufReader::new(File::open(dir.join(format!("{prefix}_spatial.bin")))?))?;
    SeparatedField::new(
        spatial,
        read_matrix(dir, &format!("{prefix}_micro.bin"))?,
        read_matrix(dir, &format!("{prefix}_macro.bin"))?,
        components,
    )
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let m: Manifest = toml::from_str(&read_text(dir, "manifest.toml")?).map_err(|e| Error::Parse(e.to_string()))?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::Parse(format!(
            "run format version {} is not supported (expected {FORMAT_VERSION})",
            m.format_version
        )));
    }
    Ok(m)
}

pub fn load_config(dir: &Path) -> Result<RunConfig> {
    RunConfig::from_toml(&read_text(dir, "config.toml")?)
}

/// Report, timings and plastic field of a stored run.
pub fn load_run(dir: &Path) -> Result<RunArtifacts> {
    let manifest = load_manifest(dir)?;
    let report = RunReport::from_toml(&read_text(dir, "report.toml")?)?;
    if report.method != manifest.method {
        return Err(Error::Parse("manifest and report disagree on the run method".into()));
    }
    let plastic = match manifest.method {
        Method::DataDriven => PlasticField::Separated {
            predictor: read_separated(dir, "predictor")?,
            corrected: read_separated(dir, "corrected")?,
        },
        _ => PlasticField::Dense(read_matrix(dir, "plastic_strain.bin")?),
    };
    Ok(RunArtifacts {
        config: load_config(dir)?,
        report,
        timings: Timings::from_toml(&read_text(dir, "timings.toml")?)?,
        plastic,
    })
}

/// Training history and end state of a stored full-order training run.
pub fn load_training(dir: &Path) -> Result<TrainingData> {
    let manifest = load_manifest(dir)?;
    if manifest.method != Method::Reference {
        return Err(Error::Argument(format!("{} is not a training run", dir.display())));
    }
    let config = load_config(dir)?;
    let report = RunReport::from_toml(&read_text(dir, "report.toml")?)?;
    Ok(TrainingData {
        grid: report.grid(config.time.cycle_duration)?,
        plastic: HistorySnapshot::new(read_matrix(dir, "plastic_strain.bin")?)?,
        final_state: matrix_state(&read_matrix(dir, "final_state.bin")?)?,
    })
}

/// Displacement history of a stored run, N_dof × N_t.
pub fn load_displacement(dir: &Path) -> Result<DMatrix<f64>> {
    read_matrix(dir, "displacement.bin")
}

/// Training modes of a stored data-driven run.
pub fn load_training_modes(dir: &Path) -> Result<SeparatedField> {
    read_separated(dir, "training")
}
