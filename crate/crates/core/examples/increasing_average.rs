//! Cyclic loading on a linearly increasing mean displacement: the forecast
//! has to follow a non-stationary trend.

use mtpgd::corrector::prediction_error;
use mtpgd::driver::{run_datadriven, run_extended_reference, run_reference, RunConfig, TrainingData};

fn main() -> mtpgd::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut config = RunConfig::default();
    config.load.drift = true;
    let training = TrainingData::from(&run_reference(&config)?);
    let extended = run_extended_reference(&config, &training)?;
    let dd = run_datadriven(&config, &training)?;

    let reference = &dd.bundle.reference;
    let rows = reference.rows();
    let mesh = config.mesh.build()?;
    let weights = reference.row_weights(&mtpgd::fem::gauss_weights(&mesh));
    let truth = extended.plastic.matrix().select_rows(&rows);
    let predictor = dd.bundle.base.evaluate_rows(&rows)?;
    let corrected = dd.bundle.corrected()?.evaluate_rows(&rows)?;
    println!("reference elements {:?}", reference.elements);
    println!("sampled error: forecast {:.4}", prediction_error(&predictor, &truth, Some(&weights))?);
    println!("sampled error: corrected {:.4}", prediction_error(&corrected, &truth, Some(&weights))?);

    // ε11 at the first reference point, end of every fifth cycle
    let nt = config.time.n_micro;
    for c in (0..dd.grid.n_macro).step_by(5) {
        let j = (c + 1) * nt - 1;
        println!(
            "cycle {:>2}: full order {:+.4e}, forecast {:+.4e}, corrected {:+.4e}",
            dd.grid.first_cycle + c + 1,
            truth[(0, j)],
            predictor[(0, j)],
            corrected[(0, j)]
        );
    }
    Ok(())
}
