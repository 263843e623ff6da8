//! Training, forecast and correction on the cyclically loaded bar, compared
//! with a full-order run over the same forecast window.
//!
//! `cargo run --release --example cyclic_bar [-- key=value ...]`

use mtpgd::driver::{
    compare_runs, run_datadriven, run_extended_reference, run_reference, Method, RunArtifacts, RunConfig, TrainingData,
};

fn main() -> mtpgd::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let overrides: Vec<String> = std::env::args().skip(1).collect();
    let config = RunConfig::from_overrides(&overrides)?;

    let training = run_reference(&config)?;
    println!(
        "training: cycles 1..{}, {} outer passes, {:.1} s",
        config.training_cycles,
        training.outer_residuals.len(),
        training.seconds
    );
    let training = TrainingData::from(&training);
    let extended = run_extended_reference(&config, &training)?;
    println!(
        "full order: cycles {}..{}, {:.1} s",
        config.training_cycles + 1,
        config.target_cycles,
        extended.seconds
    );
    let dd = run_datadriven(&config, &training)?;
    println!(
        "data-driven: rank {} -> {}, {} passes, reference elements {:?}",
        dd.training.field.rank(),
        dd.bundle.rank(),
        dd.pass_residuals.len(),
        dd.bundle.reference.elements
    );

    let cmp = compare_runs(
        &RunArtifacts::from_reference(&config, Method::ExtendedReference, &extended),
        &RunArtifacts::from_datadriven(&config, &dd)?,
    )?;
    println!("error before correction {:.4}", cmp.predictor_error);
    println!("error after correction  {:.4}", cmp.corrected_error);
    println!("return-map calls per pass, ratio {:.4}", cmp.evaluation_ratio);
    println!(
        "speed-up: integration {:.2}, overall {:.2}",
        cmp.speedup_integration, cmp.speedup_overall
    );
    cmp.write_csv(std::io::stdout().lock())?;
    Ok(())
}
