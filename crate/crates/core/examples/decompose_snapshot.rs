//! Full-order training run on the desk bar, then a separated decomposition
//! of its plastic strain history.

use mtpgd::driver::{run_reference, RunConfig};
use mtpgd::separated::{mtpgd_decompose, DecomposeOptions};

fn main() -> mtpgd::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut config = RunConfig::default();
    config.training_cycles = 10;
    config.target_cycles = 20;
    let run = run_reference(&config)?;
    println!(
        "{} instants, {} outer passes, {} return-map calls",
        run.grid.total(),
        run.outer_residuals.len(),
        run.evaluations
    );
    let opts = DecomposeOptions {
        tol: 1e-4,
        max_rank: 20,
        ..Default::default()
    };
    let d = mtpgd_decompose(&run.plastic, &run.grid, &opts)?;
    for (m, r) in d.residual_history.iter().enumerate() {
        println!("rank {m:>2}: relative residual {r:.3e}");
    }
    println!("first macro mode: {:?}", d.field.macro_.column(0).iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());
    Ok(())
}
