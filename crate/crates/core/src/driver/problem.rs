use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;

use super::config::{Acceleration, LinearMode, OuterOptions, RunConfig};
use crate::error::{Error, Result};
use crate::fem::{
    assemble_body_force, assemble_stiffness, assemble_traction_force, gauss_weights, plastic_force_operator,
    strain_operator, ConstrainedSystem, LinearSolverKind, LoadProgram, Material, Mesh,
};
use crate::plasticity::{elastic_stress, integrate_history, von_mises, HistorySnapshot, PlasticState};
use crate::separated::{
    mtpgd_decompose, mtpgd_solve, DecomposeOptions, DirichletLift, MtpgdSolution, SeparatedField, SeparatedRhs,
    TimeGrid,
};

/// Discretized problem: mesh, operators and loading, shared by every phase.
pub struct Problem {
    pub mesh: Mesh,
    pub material: Material,
    pub load: LoadProgram,
    pub system: ConstrainedSystem,
    /// Nodal force per unit plastic strain, `f^p = A·ε^p`.
    pub plastic_operator: CsrMatrix<f64>,
    /// Engineering strain at Gauss points, `ε = B·u`.
    pub strain_operator: CsrMatrix<f64>,
    /// Neumann force at unit waveform value.
    pub traction: DVector<f64>,
    pub body: DVector<f64>,
    pub gauss_weights: Vec<f64>,
}

impl Problem {
    pub fn new(mesh: Mesh, material: Material, load: LoadProgram, solver: LinearSolverKind) -> Result<Self> {
        material.validate()?;
        load.validate()?;
        let k = assemble_stiffness(&mesh, &material)?;
        let system = ConstrainedSystem::from_mesh(&mesh, &k, solver)?;
        Ok(Problem {
            plastic_operator: plastic_force_operator(&mesh, &material),
            strain_operator: strain_operator(&mesh),
            traction: assemble_traction_force(&mesh),
            body: assemble_body_force(&mesh, load.body_force),
            gauss_weights: gauss_weights(&mesh),
            mesh,
            material,
            load,
            system,
        })
    }

    pub fn from_config(config: &RunConfig) -> Result<Self> {
        Problem::new(
            config.mesh.build()?,
            config.material,
            config.load_program()?,
            config.linear_solver,
        )
    }

    pub fn gauss_count(&self) -> usize {
        self.mesh.gauss_count()
    }

    pub fn dirichlet_signal(&self, grid: &TimeGrid) -> Vec<f64> {
        grid.times().iter().map(|&t| self.load.dirichlet_amplitude(t)).collect()
    }

    pub fn waveform_signal(&self, grid: &TimeGrid) -> Vec<f64> {
        grid.times().iter().map(|&t| self.load.waveform_value(t)).collect()
    }

    pub fn lift(&self, grid: &TimeGrid) -> Result<DirichletLift> {
        DirichletLift::new(self.system.bc().clone(), &self.dirichlet_signal(grid), grid)
    }

    /// External loads in separated form, with the nonlinear term set from `plastic`.
    pub fn rhs(&self, grid: &TimeGrid, plastic: Option<&SeparatedField>) -> Result<SeparatedRhs> {
        let mut rhs = SeparatedRhs::new(self.mesh.dof_count(), grid);
        if self.traction.amax() > 0.0 {
            rhs.add_external(&self.traction, &self.waveform_signal(grid), grid)?;
        }
        if self.body.amax() > 0.0 {
            rhs.add_external(&self.body, &vec![1.0; grid.total()], grid)?;
        }
        if let Some(p) = plastic {
            rhs.set_plastic(&self.plastic_operator, p)?;
        }
        Ok(rhs)
    }

    /// Full nodal load history `f_ext(t) + A·ε^p(t)`, one column per instant.
    fn load_history(&self, grid: &TimeGrid, plastic: &DMatrix<f64>) -> DMatrix<f64> {
        let mut f = &self.plastic_operator * plastic;
        let w = self.waveform_signal(grid);
        for (j, mut col) in f.column_iter_mut().enumerate() {
            col.axpy(w[j], &self.traction, 1.0);
            col += &self.body;
        }
        f
    }

    /// Displacement history from one sparse solve per instant.
    pub fn solve_direct(&self, grid: &TimeGrid, plastic: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let nt = grid.total();
        if plastic.ncols() != nt {
            return Err(Error::shape(nt, plastic.ncols(), "plastic history columns"));
        }
        let ud = DMatrix::from_row_slice(1, nt, &self.dirichlet_signal(grid));
        let scales = DMatrix::from_column_slice(self.system.bc().len(), 1, self.system.bc().scales.as_slice());
        let coupling = self.system.coupling(&scales);
        let rhs = self.system.restrict(&self.load_history(grid, plastic)) - &coupling * &ud;
        let free = self.system.solve_free(&rhs)?;
        let lift = DMatrix::from_column_slice(self.mesh.dof_count(), 1, self.system.bc().lift(self.mesh.dof_count()).as_slice());
        Ok(self.system.expand_free_rows(&free) + lift * ud)
    }

    /// Separated solve with the nonlinear term `plastic`.
    pub fn solve_separated(
        &self,
        grid: &TimeGrid,
        plastic: &SeparatedField,
        opts: &DecomposeOptions,
    ) -> Result<MtpgdSolution> {
        let rhs = self.rhs(grid, Some(plastic))?;
        mtpgd_solve(&self.system, &rhs, &self.lift(grid)?, opts)
    }

    /// Relative equilibrium residual of `u` against the loads built from `plastic`.
    pub fn residual_direct(&self, grid: &TimeGrid, u: &DMatrix<f64>, plastic: &DMatrix<f64>) -> Result<f64> {
        let ud = DMatrix::from_row_slice(1, grid.total(), &self.dirichlet_signal(grid));
        let scales = DMatrix::from_column_slice(self.system.bc().len(), 1, self.system.bc().scales.as_slice());
        let f = self.system.restrict(&self.load_history(grid, plastic)) - self.system.coupling(&scales) * ud;
        let r = self.system.free_stiffness() * &self.system.restrict(u) - &f;
        let den = f.norm();
        Ok(if den == 0.0 { r.norm() } else { r.norm() / den })
    }

    /// Elastic von Mises stress at every Gauss point under unit prescribed
    /// amplitude and unit waveform value; used to rank points before yielding.
    pub fn elastic_scores(&self) -> Result<Vec<f64>> {
        let f = &self.traction + &self.body;
        let u = self.system.solve(&f, &self.system.bc().values(1.0))?;
        let eps = &self.strain_operator * &u;
        Ok((0..self.gauss_count())
            .map(|p| von_mises(&elastic_stress([eps[3 * p], eps[3 * p + 1], eps[3 * p + 2]], [0.0; 3], &self.material)))
            .collect())
    }
}

/// Converged full-order solution over one time window.
#[derive(Debug, Clone)]
pub struct ReferenceRun {
    pub grid: TimeGrid,
    /// N_dof × N_t.
    pub displacement: DMatrix<f64>,
    pub plastic: HistorySnapshot,
    /// N_points × N_t.
    pub eps_bar: DMatrix<f64>,
    pub initial_state: PlasticState,
    pub final_state: PlasticState,
    /// Relative displacement change after each outer pass.
    pub outer_residuals: Vec<f64>,
    /// Return-mapping evaluations over all passes.
    pub evaluations: u64,
    /// Return-mapping evaluations of one pass, N_points · N_t.
    pub evaluations_per_pass: u64,
    pub equilibrium_residual: f64,
    pub seconds: f64,
    /// Part of `seconds` spent in constitutive integration.
    pub integration_seconds: f64,
}

/// Anderson mixing of the displacement iterates (type II, fixed depth).
pub(super) struct Anderson {
    depth: usize,
    history: std::collections::VecDeque<(DMatrix<f64>, DMatrix<f64>)>,
}

impl Anderson {
    pub(super) fn new(depth: usize) -> Self {
        Anderson {
            depth,
            history: Default::default(),
        }
    }

    /// Next iterate from the current one `x` and its image `g = G(x)`.
    pub(super) fn step(&mut self, x: &DMatrix<f64>, g: DMatrix<f64>) -> DMatrix<f64> {
        let f = &g - x;
        self.history.push_back((g, f));
        if self.history.len() > self.depth + 1 {
            self.history.pop_front();
        }
        let n = self.history.len() - 1;
        let (g_k, f_k) = self.history.back().expect("just pushed");
        if n == 0 {
            return g_k.clone();
        }
        let df: Vec<DMatrix<f64>> = (0..n).map(|j| &self.history[j + 1].1 - &self.history[j].1).collect();
        let gram = DMatrix::from_fn(n, n, |i, j| df[i].dot(&df[j]));
        let rhs = DVector::from_fn(n, |i, _| df[i].dot(f_k));
        let smax = gram.amax();
        let Ok(pinv) = gram.pseudo_inverse(1e-12 * smax.max(f64::MIN_POSITIVE)) else {
            return g_k.clone();
        };
        let gamma = pinv * rhs;
        let mut next = g_k.clone();
        for j in 0..n {
            next -= (&self.history[j + 1].0 - &self.history[j].0) * gamma[j];
        }
        next
    }
}

/// Outer fixed point between the constitutive update and the elastic solve.
///
/// Every pass restarts the plastic integration from `initial`, feeds it the
/// strain of the current displacement iterate `u` and solves equilibrium with
/// the resulting plastic force, giving `G(u)`. Stops when
/// `‖G(u) − u‖ < outer.tol·‖G(u)‖`; the returned plastic history is the
/// constitutive response of the returned displacement.
pub fn solve_reference(
    problem: &Problem,
    grid: &TimeGrid,
    initial: &PlasticState,
    outer: &OuterOptions,
    separated: &DecomposeOptions,
) -> Result<ReferenceRun> {
    let clock = Instant::now();
    let np = problem.gauss_count();
    if initial.len() != np {
        return Err(Error::shape(np, initial.len(), "initial plastic state points"));
    }
    let solve = |plastic: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        match outer.linear {
            LinearMode::Direct => problem.solve_direct(grid, plastic),
            LinearMode::Mtpgd => {
                let snap = HistorySnapshot::new(plastic.clone())?;
                let field = mtpgd_decompose(&snap, grid, separated)?.field;
                Ok(problem.solve_separated(grid, &field, separated)?.displacement.to_dense())
            }
        }
    };
    let spent = std::cell::Cell::new(0.0);
    let integrate = |u: &DMatrix<f64>| {
        let start = Instant::now();
        let out = integrate_history(&problem.material, &(&problem.strain_operator * u), initial);
        spent.set(spent.get() + start.elapsed().as_secs_f64());
        out
    };

    let mut anderson = match outer.acceleration {
        Acceleration::None => None,
        Acceleration::Anderson { depth } => Some(Anderson::new(depth)),
    };
    let mut u = solve(&DMatrix::zeros(3 * np, grid.total()))?;
    let mut residuals = Vec::new();
    let mut evaluations = 0;
    for pass in 1..=outer.max_iterations {
        let integration = integrate(&u)?;
        evaluations += integration.evaluations;
        let g = solve(integration.snapshot.matrix())?;
        let change = (&g - &u).norm() / g.norm().max(f64::MIN_POSITIVE);
        residuals.push(change);
        log::info!("outer pass {pass}: relative displacement change {change:.3e}");
        if change < outer.tol {
            let integration = if g == u {
                integration
            } else {
                let last = integrate(&g)?;
                evaluations += last.evaluations;
                last
            };
            let plastic = integration.snapshot;
            let equilibrium_residual = problem.residual_direct(grid, &g, plastic.matrix())?;
            return Ok(ReferenceRun {
                grid: *grid,
                displacement: g,
                plastic,
                eps_bar: integration.eps_bar,
                initial_state: initial.clone(),
                final_state: integration.final_state,
                outer_residuals: residuals,
                evaluations,
                evaluations_per_pass: integration.evaluations,
                equilibrium_residual,
                seconds: clock.elapsed().as_secs_f64(),
                integration_seconds: spent.get(),
            });
        }
        u = match anderson.as_mut() {
            Some(a) => a.step(&u, g),
            None => g,
        };
    }
    Err(Error::Convergence {
        message: format!("outer iteration did not reach {} in {} passes", outer.tol, outer.max_iterations),
        history: residuals,
    })
}
