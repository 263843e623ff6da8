use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corrector::Extension;
use crate::error::{Error, Result};
use crate::fem::{DogBone, LinearSolverKind, LoadProgram, Material, Mesh, Waveform};
use crate::hodmd::HodmdOptions;
use crate::separated::{DecomposeOptions, TimeGrid};

/// Where the mesh comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MeshSource {
    Bar {
        length: f64,
        height: f64,
        nx: usize,
        ny: usize,
    },
    DogBone(DogBone),
    File { path: PathBuf },
}

impl Default for MeshSource {
    fn default() -> Self {
        MeshSource::Bar {
            length: 100.0,
            height: 10.0,
            nx: 10,
            ny: 5,
        }
    }
}

impl MeshSource {
    pub fn build(&self) -> Result<Mesh> {
        match self {
            MeshSource::Bar { length, height, nx, ny } => Mesh::rectangular_bar(*length, *height, *nx, *ny),
            MeshSource::DogBone(p) => Mesh::dog_bone(p),
            MeshSource::File { path } => Mesh::read(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WaveformKind {
    FullyReversed,
    Pulsating,
    /// Breakpoints `[phase, value]` over one cycle.
    Custom(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadConfig {
    /// Peak prescribed end displacement u_D^max (mm).
    pub amplitude: f64,
    pub waveform: WaveformKind,
    /// Superimpose a linearly increasing average with slope u_D^max / T_N.
    pub drift: bool,
    /// Constant body force (N/mm³).
    pub body_force: [f64; 2],
}

impl Default for LoadConfig {
    fn default() -> Self {
        LoadConfig {
            amplitude: 0.125,
            waveform: WaveformKind::Pulsating,
            drift: false,
            body_force: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    /// Steps per cycle N_τ.
    pub n_micro: usize,
    /// Cycle duration T_1 (s).
    pub cycle_duration: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig {
            n_micro: 200,
            cycle_duration: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearMode {
    /// One sparse solve per time instant.
    #[default]
    Direct,
    /// Separated space-time solve of the whole interval.
    Mtpgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Acceleration {
    /// Plain fixed point, the next iterate is `G(u)`.
    None,
    /// Anderson mixing over the last `depth` displacement iterates.
    Anderson { depth: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuterOptions {
    /// Relative change of the displacement history between passes.
    pub tol: f64,
    pub max_iterations: usize,
    pub linear: LinearMode,
    pub acceleration: Acceleration,
}

impl Default for OuterOptions {
    fn default() -> Self {
        OuterOptions {
            tol: 1e-4,
            max_iterations: 100,
            linear: LinearMode::Direct,
            acceleration: Acceleration::Anderson { depth: 5 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HodmdConfig {
    #[serde(flatten)]
    pub options: HodmdOptions,
    /// When non-empty, each macro mode picks its lag from these candidates on
    /// a held-out tail of the training series.
    pub lag_candidates: Vec<usize>,
    pub validation_fraction: f64,
}

impl Default for HodmdConfig {
    fn default() -> Self {
        HodmdConfig {
            options: HodmdOptions {
                lag: 4,
                ..Default::default()
            },
            lag_candidates: Vec::new(),
            validation_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectionConfig {
    /// Number J of reference elements.
    pub elements: usize,
    pub enrichment_tol: f64,
    pub max_extra_rank: usize,
    pub extension: Extension,
    /// Passes over the forecast window stop once the reference-point strain
    /// changes by less than this (relative).
    pub pass_tol: f64,
    pub max_passes: usize,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        CorrectionConfig {
            elements: 4,
            enrichment_tol: 1e-3,
            max_extra_rank: 5,
            extension: Extension::Zero,
            pass_tol: 1e-3,
            max_passes: 100,
        }
    }
}

/// Complete description of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub mesh: MeshSource,
    pub material: Material,
    pub load: LoadConfig,
    pub time: TimeConfig,
    /// Training cycles K.
    pub training_cycles: usize,
    /// Target cycles N.
    pub target_cycles: usize,
    pub outer: OuterOptions,
    /// Snapshot decomposition of the training plastic strain.
    pub decomposition: DecomposeOptions,
    /// Separated equilibrium solver.
    pub mtpgd: DecomposeOptions,
    pub hodmd: HodmdConfig,
    pub correction: CorrectionConfig,
    pub linear_solver: LinearSolverKind,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            name: "run".into(),
            mesh: MeshSource::default(),
            material: Material::steel(),
            load: LoadConfig::default(),
            time: TimeConfig::default(),
            training_cycles: 20,
            target_cycles: 60,
            outer: OuterOptions::default(),
            decomposition: DecomposeOptions {
                tol: 1e-4,
                ..Default::default()
            },
            mtpgd: DecomposeOptions::default(),
            hodmd: HodmdConfig::default(),
            correction: CorrectionConfig::default(),
            linear_solver: LinearSolverKind::default(),
            output_dir: PathBuf::from("runs"),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_table(text.parse::<toml::Table>().map_err(|e| Error::Parse(e.to_string()))?)
    }

    /// Reads a config file and applies `key=value` overrides; dotted keys
    /// address nested tables (`hodmd.lag=6`). Relative mesh paths are taken
    /// from the config file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Argument(format!("cannot read config {}: {e}", path.display())))?;
        let mut table = text
            .parse::<toml::Table>()
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut config = Self::from_table(table)?;
        if let MeshSource::File { path: mesh } = &mut config.mesh {
            if mesh.is_relative() {
                if let Some(dir) = path.parent() {
                    *mesh = dir.join(&*mesh);
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    /// Defaults with `key=value` overrides applied, validated.
    pub fn from_overrides(overrides: &[String]) -> Result<Self> {
        let mut table = toml::Table::new();
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config = Self::from_table(table)?;
        config.validate()?;
        Ok(config)
    }

    /// Missing keys take their defaults at any depth, so a partial table such
    /// as `[hodmd] lag = 6` keeps the other defaults of that section.
    fn from_table(table: toml::Table) -> Result<Self> {
        let mut merged = toml::Table::try_from(RunConfig::default()).map_err(|e| Error::Parse(e.to_string()))?;
        merge(&mut merged, table);
        let config: RunConfig = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.material.validate()?;
        if self.training_cycles == 0 || self.training_cycles >= self.target_cycles {
            return Err(Error::Argument(format!(
                "need 0 < K < N, got K = {} and N = {}",
                self.training_cycles, self.target_cycles
            )));
        }
        let tols = [
            ("outer.tol", self.outer.tol),
            ("decomposition.tol", self.decomposition.tol),
            ("decomposition.sweep_tol", self.decomposition.sweep_tol),
            ("mtpgd.tol", self.mtpgd.tol),
            ("mtpgd.sweep_tol", self.mtpgd.sweep_tol),
            ("hodmd.tol_svd", self.hodmd.options.tol_svd),
            ("hodmd.tol_spectral", self.hodmd.options.tol_spectral),
            ("correction.enrichment_tol", self.correction.enrichment_tol),
            ("correction.pass_tol", self.correction.pass_tol),
        ];
        for (key, v) in tols {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Argument(format!("{key} must be positive, got {v}")));
            }
        }
        if self.outer.max_iterations == 0 || self.correction.max_passes == 0 {
            return Err(Error::Argument("iteration counts must be positive".into()));
        }
        if let MeshSource::File { path } = &self.mesh {
            if !path.is_file() {
                return Err(Error::Argument(format!("mesh file {} does not exist", path.display())));
            }
        }
        self.load_program()?;
        self.training_grid()?;
        Ok(())
    }

    pub fn waveform(&self) -> Result<Waveform> {
        Ok(match &self.load.waveform {
            WaveformKind::FullyReversed => Waveform::fully_reversed(),
            WaveformKind::Pulsating => Waveform::pulsating(),
            WaveformKind::Custom(points) => Waveform::new(points.clone())?,
        })
    }

    pub fn load_program(&self) -> Result<LoadProgram> {
        let mut lp = LoadProgram::new(self.load.amplitude, self.time.cycle_duration, self.target_cycles)?;
        lp.waveform = self.waveform()?;
        lp.body_force = self.load.body_force;
        if self.load.drift {
            let t_final = lp.total_duration();
            lp = lp.with_drift_over(t_final);
        }
        Ok(lp)
    }

    /// Grid over the training interval (0, T_K].
    pub fn training_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.time.n_micro, self.training_cycles, self.time.cycle_duration)
    }

    /// Grid over the forecast interval (T_K, T_N].
    pub fn forecast_grid(&self) -> Result<TimeGrid> {
        self.training_grid()?
            .window(self.training_cycles, self.target_cycles - self.training_cycles)
    }

    /// True when both configs describe the same physical problem and time span.
    pub fn same_problem(&self, other: &RunConfig) -> bool {
        self.mesh == other.mesh
            && self.material == other.material
            && self.load == other.load
            && self.time == other.time
            && self.training_cycles == other.training_cycles
            && self.target_cycles == other.target_cycles
    }
}

/// Sets `key=value` in a TOML table; the value is parsed as TOML and falls
/// back to a plain string.
/// Deep merge; a table carrying a `kind` tag replaces the default wholesale
/// since its fields depend on the variant.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if !o.contains_key("kind") => merge(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Argument(format!("override `{assignment}` is not of the form key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Argument(format!("malformed override key `{key}`")));
    }
    let mut current = table;
    for part in &parts[..parts.len() - 1] {
        let entry = current
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        current = entry
            .as_table_mut()
            .ok_or_else(|| Error::Argument(format!("override `{key}`: `{part}` is not a table")))?;
    }
    current.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_sections_keep_defaults() {
        let c = RunConfig::from_toml("[hodmd]\ntol_svd = 1e-9\n[outer.acceleration]\nkind = \"none\"\n").unwrap();
        assert_eq!(c.hodmd.options.lag, RunConfig::default().hodmd.options.lag);
        assert_eq!(c.hodmd.options.tol_svd, 1e-9);
        assert_eq!(c.outer.acceleration, Acceleration::None);
        assert_eq!(c.outer.tol, RunConfig::default().outer.tol);
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig::default();
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        c.validate().unwrap();
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let mut t = toml::Table::new();
        apply_override(&mut t, "hodmd.lag=6").unwrap();
        apply_override(&mut t, "correction.extension = gappy").unwrap();
        apply_override(&mut t, "target_cycles=80").unwrap();
        let c = RunConfig::from_table(t).unwrap();
        assert_eq!(c.hodmd.options.lag, 6);
        assert_eq!(c.correction.extension, Extension::Gappy);
        assert_eq!(c.target_cycles, 80);
    }

    #[test]
    fn rejects_training_longer_than_target() {
        let c = RunConfig {
            training_cycles: 60,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::Argument(_))));
    }

    #[test]
    fn unknown_keys_are_parse_errors() {
        assert!(matches!(RunConfig::from_toml("trainig_cycles = 3"), Err(Error::Parse(_))));
    }
}
