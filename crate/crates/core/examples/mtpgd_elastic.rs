//! Separated space × cycle-time × cycle-number solve of an elastic bar under
//! cyclic end displacement, checked against one direct solve per instant.

use mtpgd::driver::Problem;
use mtpgd::fem::{LinearSolverKind, LoadProgram, Material, Mesh};
use mtpgd::separated::{DecomposeOptions, SeparatedField, TimeGrid};
use nalgebra::DMatrix;

fn main() -> mtpgd::Result<()> {
    let mesh = Mesh::rectangular_bar(100.0, 10.0, 20, 4)?;
    let load = LoadProgram::new(0.05, 1.0, 50)?.with_drift_over(50.0);
    let problem = Problem::new(mesh, Material::steel(), load, LinearSolverKind::Cholesky)?;
    let grid = TimeGrid::new(100, 50, 1.0)?;
    let np = problem.gauss_count();

    let zero = SeparatedField::zeros(3 * np, grid.n_micro, grid.n_macro, 3);
    let opts = DecomposeOptions {
        tol: 1e-10,
        ..Default::default()
    };
    let start = std::time::Instant::now();
    let sol = problem.solve_separated(&grid, &zero, &opts)?;
    let t_sep = start.elapsed();
    let start = std::time::Instant::now();
    let direct = problem.solve_direct(&grid, &DMatrix::zeros(3 * np, grid.total()))?;
    let t_dir = start.elapsed();

    let u = sol.displacement.to_dense();
    println!(
        "rank {}, residual {:.2e}, difference to direct {:.2e}",
        sol.displacement.rank(),
        sol.relative_residual(),
        (&u - &direct).norm() / direct.norm()
    );
    println!("separated {t_sep:.2?}, instant-wise {t_dir:.2?} for {} instants", grid.total());
    Ok(())
}
