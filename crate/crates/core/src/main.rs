use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mtpgd::driver::{
    compare_runs, forecast_training, load_run, load_training, load_training_modes, run_datadriven, run_dir,
    run_extended_reference, run_reference, save_datadriven, save_reference, DataDrivenOptions, Method, PlasticField,
    Problem, RunConfig, TrainingData,
};
use mtpgd::plasticity::HistorySnapshot;
use mtpgd::separated::{mtpgd_decompose, write_matrix_csv};
use mtpgd::{Error, Result};

#[derive(Parser)]
#[command(name = "mtpgd", version, about = "Multi-time PGD for cyclic elasto-plasticity with data-driven forecasting")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set hodmd.lag=6`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured mesh to a text file.
    GenerateMesh {
        #[arg(long)]
        out: PathBuf,
    },
    /// Full-order run over the training cycles.
    RunReference {
        /// Also run the full-order solution over the remaining cycles.
        #[arg(long)]
        extend: bool,
        /// Reuse a stored training run instead of recomputing it.
        #[arg(long)]
        training: Option<PathBuf>,
    },
    /// Forecast, correct and solve over the remaining cycles.
    RunDatadriven {
        /// Stored training run; defaults to the configured reference run directory.
        #[arg(long)]
        training: Option<PathBuf>,
    },
    /// Decompose a training run and forecast its macro modes (no correction).
    Forecast {
        #[arg(long)]
        training: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a candidate run against a full-order run over the same cycles.
    Compare {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        candidate: PathBuf,
        /// CSV destination; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the separated modes of a stored run as CSV.
    ExportModes {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Ok(n) = std::env::var("MTPGD_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("cannot set thread count: {e}");
                }
            }
            _ => {
                eprintln!("error: MTPGD_THREADS must be a positive integer, got `{n}`");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Convergence { .. } | Error::Numeric(_) | Error::RigidBody(_) => 3,
        Error::Io(_) | Error::Csv(_) => 4,
        _ => 2,
    }
}

fn config(common: &Common) -> Result<RunConfig> {
    match &common.config {
        Some(path) => RunConfig::load(path, &common.overrides),
        None => RunConfig::from_overrides(&common.overrides),
    }
}

fn training_data(config: &RunConfig, dir: Option<&Path>) -> Result<TrainingData> {
    let dir = dir.map(Path::to_path_buf).unwrap_or_else(|| run_dir(config, Method::Reference));
    load_training(&dir)
}

fn run(cli: Cli) -> Result<()> {
    let config = config(&cli.common)?;
    match cli.command {
        Command::GenerateMesh { out } => {
            let mesh = config.mesh.build()?;
            mesh.write(&out)?;
            println!(
                "{}: {} nodes, {} elements",
                out.display(),
                mesh.node_count(),
                mesh.element_count()
            );
        }
        Command::RunReference { extend, training } => {
            let training = match training {
                Some(dir) => load_training(&dir)?,
                None => {
                    let run = run_reference(&config)?;
                    let dir = run_dir(&config, Method::Reference);
                    save_reference(&dir, &config, Method::Reference, &run)?;
                    println!(
                        "training: {} outer passes, equilibrium residual {:.3e} -> {}",
                        run.outer_residuals.len(),
                        run.equilibrium_residual,
                        dir.display()
                    );
                    TrainingData::from(&run)
                }
            };
            if extend {
                let run = run_extended_reference(&config, &training)?;
                let dir = run_dir(&config, Method::ExtendedReference);
                save_reference(&dir, &config, Method::ExtendedReference, &run)?;
                println!(
                    "extended: {} outer passes, equilibrium residual {:.3e} -> {}",
                    run.outer_residuals.len(),
                    run.equilibrium_residual,
                    dir.display()
                );
            }
        }
        Command::RunDatadriven { training } => {
            let training = training_data(&config, training.as_deref())?;
            let run = run_datadriven(&config, &training)?;
            let dir = run_dir(&config, Method::DataDriven);
            let report = save_datadriven(&dir, &config, &run)?;
            let dd = report.datadriven.as_ref().expect("data-driven summary");
            println!(
                "data-driven: rank {} -> {}, {} passes, sampled error {:.3e} -> {:.3e}, equilibrium residual {:.3e} -> {}",
                dd.training_rank,
                dd.corrected_rank,
                report.outer_residuals.len(),
                dd.sampled_predictor_error,
                dd.sampled_corrected_error,
                report.equilibrium_residual,
                dir.display()
            );
        }
        Command::Forecast { training, out } => {
            let training = training_data(&config, training.as_deref())?;
            let problem = Problem::from_config(&config)?;
            let horizon = config.target_cycles - config.training_cycles;
            let f = forecast_training(
                &problem,
                &training.grid,
                &training.plastic,
                &training.final_state,
                horizon,
                &DataDrivenOptions::from_config(&config),
            )?;
            std::fs::create_dir_all(&out)?;
            write_matrix_csv(&f.decomposition.field.macro_, "cycle", csv_file(&out.join("training_macro_modes.csv"))?)?;
            write_matrix_csv(&f.base.macro_, "cycle", csv_file(&out.join("forecast_macro_modes.csv"))?)?;
            for (k, m) in f.models.iter().enumerate() {
                m.write_csv(csv_file(&out.join(format!("hodmd_mode_{}.csv", k + 1)))?)?;
            }
            println!(
                "forecast: rank {}, training error {:.3e}, {} cycles ahead -> {}",
                f.decomposition.field.rank(),
                f.decomposition.relative_error(),
                horizon,
                out.display()
            );
        }
        Command::Compare { reference, candidate, out } => {
            let cmp = compare_runs(&load_run(&reference)?, &load_run(&candidate)?)?;
            match out {
                Some(path) => cmp.write_csv(csv_file(&path)?)?,
                None => cmp.write_csv(std::io::stdout().lock())?,
            }
        }
        Command::ExportModes { run, out } => {
            let stored = load_run(&run)?;
            match &stored.plastic {
                PlasticField::Separated { predictor, corrected } => {
                    load_training_modes(&run)?.write_modes_csv(&out, "training")?;
                    predictor.write_modes_csv(&out, "predictor")?;
                    corrected.write_modes_csv(&out, "corrected")?;
                }
                PlasticField::Dense(m) => {
                    let grid = stored.report.grid(stored.config.time.cycle_duration)?;
                    let d = mtpgd_decompose(&HistorySnapshot::new(m.clone())?, &grid, &stored.config.decomposition)?;
                    d.field.write_modes_csv(&out, "plastic")?;
                }
            }
            println!("modes -> {}", out.display());
        }
    }
    Ok(())
}

fn csv_file(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}
