//! End-to-end acceptance checks; one line per criterion, non-zero exit on failure.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::*;
use mtpgd::driver::{
    compare_runs, run_datadriven, run_extended_reference, run_reference, DataDrivenRun, Method, Problem,
    ReferenceRun, RunArtifacts, RunConfig, TrainingData,
};
use mtpgd::fem::{gauss_weights, LinearSolverKind, LoadProgram, Material, Mesh};
use mtpgd::hodmd::{hodmd_fit, hodmd_forecast, HodmdOptions};
use mtpgd::plasticity::{integrate_history, integrate_history_sparse, return_map_point, PlasticState, PointState};
use mtpgd::separated::{DecomposeOptions, SeparatedField, TimeGrid};
use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Random loading path: a drifting direction with per-step scatter and
/// occasional reversals.
fn loading_path(rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let dir: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    let scatter = 5e-5;
    (0..20)
        .map(|_| {
            let s = rng.gen_range(-1.5e-4..4e-4) / n;
            std::array::from_fn(|i| s * dir[i] + rng.gen_range(-scatter..scatter))
        })
        .collect()
}

fn constitutive_oracle() -> Outcome {
    let start = Instant::now();
    let m = Material::steel();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst, mut plastic_paths, mut kkt) = (0.0f64, 0, true);
    for _ in 0..200 {
        let path = loading_path(&mut rng);
        let mut strain = [0.0; 3];
        let mut state = PointState::default();
        let mut oracle = RateState::default();
        let (mut got, mut want) = (Vec::new(), Vec::new());
        for d in &path {
            for i in 0..3 {
                strain[i] += d[i];
            }
            let r = return_map_point(strain, state, &m).expect("return map");
            kkt &= r.yield_value <= 1e-8 * m.yield_stress_initial && r.delta_gamma >= 0.0;
            state = r.state;
            oracle = explicit_step(&oracle, *d, 1000, &m);
            got.push(state.eps_bar_p);
            want.push(oracle.eps_bar);
        }
        if want.iter().any(|v| *v > 0.0) {
            plastic_paths += 1;
            worst = worst.max(relative_l2(&got, &want));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-3 && kkt && plastic_paths > 100 && secs < 10.0,
        format!("worst ε̄p error {worst:.2e} over {plastic_paths} yielding paths, KKT {kkt}, {secs:.1} s"),
    )
}

fn locality() -> Outcome {
    let mesh = Mesh::rectangular_bar(100.0, 20.0, 10, 2).expect("mesh");
    let m = Material::steel();
    let np = mesh.gauss_count();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let strain = DMatrix::from_fn(3 * np, 30, |_, _| rng.gen_range(-4e-3..4e-3));
    let full = integrate_history(&m, &strain, &PlasticState::zeros(np)).expect("full");
    let mut identical = true;
    for _ in 0..5 {
        let k = rng.gen_range(1..=np);
        let points = sample(&mut rng, np, k).into_vec();
        let rows: Vec<usize> = points.iter().flat_map(|p| [3 * p, 3 * p + 1, 3 * p + 2]).collect();
        let sparse = integrate_history_sparse(&m, &strain.select_rows(&rows), &PlasticState::zeros(np), &points)
            .expect("sparse");
        identical &= sparse.snapshot.matrix() == &full.snapshot.matrix().select_rows(&rows)
            && sparse.eps_bar == full.eps_bar.select_rows(&points)
            && points.iter().enumerate().all(|(k, &p)| sparse.final_state.point(k) == full.final_state.point(p));
    }
    outcome(identical, format!("5 subsets of {np} points, bit-identical {identical}"))
}

fn solver_equivalence() -> Outcome {
    let start = Instant::now();
    let mesh = Mesh::rectangular_bar(20.0, 10.0, 2, 2).expect("mesh");
    let load = LoadProgram::new(0.01, 1.0, 5).expect("load");
    let problem = Problem::new(mesh, Material::steel(), load, LinearSolverKind::Cholesky).expect("problem");
    let grid = TimeGrid::new(20, 5, 1.0).expect("grid");
    let np = problem.gauss_count();
    let direct = problem.solve_direct(&grid, &DMatrix::zeros(3 * np, grid.total())).expect("direct");
    let opts = DecomposeOptions {
        tol: 1e-10,
        ..Default::default()
    };
    let zero = SeparatedField::zeros(3 * np, grid.n_micro, grid.n_macro, 3);
    let pgd = problem.solve_separated(&grid, &zero, &opts).expect("mtpgd").displacement.to_dense();
    let worst = (0..grid.total())
        .map(|j| (pgd.column(j) - direct.column(j)).norm() / direct.column(j).norm().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-6 && secs < 30.0,
        format!("worst instant error {worst:.2e}, {secs:.2} s"),
    )
}

fn hodmd_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let opts = HodmdOptions::default();
    let d = opts.lag;
    let train = 60;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let order = rng.gen_range(1..=d);
        let mut roots = Vec::new();
        while roots.len() < order {
            let r = rng.gen_range(0.6..1.02);
            let candidate = if order - roots.len() >= 2 && rng.gen_bool(0.7) {
                let theta = rng.gen_range(0.05..3.0);
                vec![Complex64::from_polar(r, theta), Complex64::from_polar(r, -theta)]
            } else {
                vec![Complex64::new(if rng.gen_bool(0.5) { r } else { -r }, 0.0)]
            };
            if candidate.iter().all(|c| roots.iter().all(|x: &Complex64| (x - c).norm() > 0.15)) {
                roots.extend(candidate);
            }
        }
        let coeffs = recurrence_coefficients(&roots);
        let start: Vec<f64> = (0..order).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let series = step_recurrence(&coeffs, &start, 2 * train);
        let model = hodmd_fit(&series[..train], &opts).expect("fit");
        let fc = hodmd_forecast(&model, train).expect("forecast");
        worst = worst.max(relative_l2(&fc.values, &series[train..]));
    }
    outcome(worst <= 1e-8, format!("worst forecast error {worst:.2e} over 50 recurrences (d = {d})"))
}

fn row_weights(config: &RunConfig, points: &[usize]) -> Vec<f64> {
    let w = gauss_weights(&config.mesh.build().expect("mesh"));
    points.iter().flat_map(|&p| [w[p]; 3]).collect()
}

fn weighted_error(candidate: &DMatrix<f64>, truth: &DMatrix<f64>, w: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (r, wr) in w.iter().enumerate() {
        for j in 0..truth.ncols() {
            num += wr * (candidate[(r, j)] - truth[(r, j)]).powi(2);
            den += wr * truth[(r, j)].powi(2);
        }
    }
    (num / den).sqrt()
}

struct Desk {
    config: RunConfig,
    extended: ReferenceRun,
    dd: DataDrivenRun,
    seconds: f64,
}

fn desk(config: RunConfig) -> Desk {
    let start = Instant::now();
    let training = run_reference(&config).expect("training run");
    let training = TrainingData::from(&training);
    let extended = run_extended_reference(&config, &training).expect("extended reference");
    let dd = run_datadriven(&config, &training).expect("data-driven run");
    Desk {
        config,
        extended,
        dd,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn all_points(config: &RunConfig) -> Vec<usize> {
    (0..config.mesh.build().expect("mesh").gauss_count()).collect()
}

fn end_to_end(run: &Desk) -> Outcome {
    let w = row_weights(&run.config, &all_points(&run.config));
    let truth = run.extended.plastic.matrix();
    let predictor = weighted_error(&run.dd.bundle.base.to_dense(), truth, &w);
    let corrected = weighted_error(&run.dd.bundle.corrected().expect("corrected").to_dense(), truth, &w);
    let eq = run.dd.equilibrium_residual;
    let pass = corrected <= 0.5 * predictor && corrected <= 0.05 && eq <= 1e-4 && run.seconds < 300.0;
    outcome(
        pass,
        format!(
            "ε̂ {predictor:.4}, ε̂★ {corrected:.4}, equilibrium {eq:.1e}, J = {} elements, {:.0} s",
            run.dd.bundle.reference.elements.len(),
            run.seconds
        ),
    )
}

fn complexity(run: &Desk) -> Outcome {
    let nt = run.dd.grid.total() as u64;
    let j_points = run.dd.bundle.reference.points.len() as u64;
    let n_points = all_points(&run.config).len() as u64;
    let dd = run.dd.evaluations_per_pass;
    let ext = run.extended.evaluations_per_pass;
    let reference = RunArtifacts::from_reference(&run.config, Method::ExtendedReference, &run.extended);
    let candidate = RunArtifacts::from_datadriven(&run.config, &run.dd).expect("artifacts");
    let cmp = compare_runs(&reference, &candidate).expect("compare");
    let exact = dd == j_points * nt && ext == n_points * nt && dd * n_points == ext * j_points;
    outcome(
        exact,
        format!(
            "{dd} vs {ext} calls per pass (ratio {:.4} = {j_points}/{n_points}); speed-up {:.2} integration, {:.2} overall",
            cmp.evaluation_ratio, cmp.speedup_integration, cmp.speedup_overall
        ),
    )
}

fn orthogonality(run: &Desk) -> Outcome {
    let dd = &run.dd;
    let grid = &dd.grid;
    let base = &dd.bundle.base;
    let rows = dd.bundle.reference.rows();
    let w = row_weights(&run.config, &dd.bundle.reference.points);
    let updated = base.with_macro(&base.macro_ + &dd.bundle.corrections).expect("updated");
    let residual = &dd.sampled_truth - updated.to_dense().select_rows(&rows);
    let dt = grid.dt_micro;
    let inner = |a: &DMatrix<f64>, b: &DMatrix<f64>| -> f64 {
        (0..a.nrows()).map(|r| w[r] * dt * a.row(r).dot(&b.row(r))).sum()
    };
    let r_norm = inner(&residual, &residual).sqrt();
    let mut worst = 0.0f64;
    for k in 0..base.rank() {
        for big in 0..grid.n_macro {
            let test = DMatrix::from_fn(rows.len(), grid.total(), |r, j| {
                if j / grid.n_micro == big {
                    base.spatial[(rows[r], k)] * base.micro[(j % grid.n_micro, k)]
                } else {
                    0.0
                }
            });
            let t_norm = inner(&test, &test).sqrt();
            if t_norm > 0.0 {
                worst = worst.max(inner(&residual, &test).abs() / (t_norm * r_norm));
            }
        }
    }
    outcome(
        worst <= 1e-8,
        format!("largest normalized projection {worst:.2e} over {} test triads", base.rank() * grid.n_macro),
    )
}

fn increasing_average(run: &Desk) -> Outcome {
    let dd = &run.dd;
    let rows = dd.bundle.reference.rows();
    let w = row_weights(&run.config, &dd.bundle.reference.points);
    let truth = run.extended.plastic.matrix().select_rows(&rows);
    let predictor = weighted_error(&dd.bundle.base.to_dense().select_rows(&rows), &truth, &w);
    let corrected = weighted_error(&dd.bundle.corrected().expect("corrected").to_dense().select_rows(&rows), &truth, &w);
    outcome(
        corrected <= 0.05,
        format!("ε̂ {predictor:.4}, ε̂★ {corrected:.4} on the reference elements, {:.0} s", run.seconds),
    )
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |n: usize, name: &str, o: Outcome| {
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n} ({name}): {status} ({})", o.detail);
        if !o.pass {
            failures += 1;
        }
    };
    report(1, "constitutive oracle", constitutive_oracle());
    report(2, "locality", locality());
    report(3, "solver equivalence", solver_equivalence());
    report(4, "forecast exactness", hodmd_exactness());
    let cyclic = desk(RunConfig::default());
    report(5, "desk pipeline", end_to_end(&cyclic));
    report(6, "complexity", complexity(&cyclic));
    report(7, "orthogonality", orthogonality(&cyclic));
    let mut drift = RunConfig::default();
    drift.load.drift = true;
    report(8, "increasing average", increasing_average(&desk(drift)));
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
