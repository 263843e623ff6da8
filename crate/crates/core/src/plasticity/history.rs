use nalgebra::DMatrix;
use rayon::prelude::*;

use super::return_map::{return_map_point, PointState};
use crate::error::{Error, Result};
use crate::fem::{Material, COMPONENTS};

/// Plastic strain and accumulated effective plastic strain at every Gauss point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlasticState {
    pub eps_p: Vec<[f64; 3]>,
    pub eps_bar_p: Vec<f64>,
}

impl PlasticState {
    pub fn zeros(points: usize) -> Self {
        PlasticState {
            eps_p: vec![[0.0; 3]; points],
            eps_bar_p: vec![0.0; points],
        }
    }

    pub fn len(&self) -> usize {
        self.eps_bar_p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps_bar_p.is_empty()
    }

    pub fn point(&self, i: usize) -> PointState {
        PointState {
            eps_p: self.eps_p[i],
            eps_bar_p: self.eps_bar_p[i],
        }
    }

    pub fn set_point(&mut self, i: usize, s: PointState) {
        self.eps_p[i] = s.eps_p;
        self.eps_bar_p[i] = s.eps_bar_p;
    }

    pub fn restrict(&self, points: &[usize]) -> Result<PlasticState> {
        let mut out = PlasticState::zeros(points.len());
        for (k, &p) in points.iter().enumerate() {
            if p >= self.len() {
                return Err(Error::Argument(format!("point {p} out of range ({} points)", self.len())));
            }
            out.set_point(k, self.point(p));
        }
        Ok(out)
    }

    /// Flattened plastic strain, three entries per point.
    pub fn eps_p_flat(&self) -> Vec<f64> {
        self.eps_p.iter().flatten().copied().collect()
    }
}

/// Plastic strain history, one column per time instant and three rows per
/// point in the order (ε11, ε12, ε22).
#[derive(Debug, Clone, PartialEq)]
pub struct HistorySnapshot {
    data: DMatrix<f64>,
}

impl HistorySnapshot {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() % COMPONENTS != 0 {
            return Err(Error::shape(
                COMPONENTS * (data.nrows() / COMPONENTS + 1),
                data.nrows(),
                "snapshot rows must be a multiple of three",
            ));
        }
        Ok(HistorySnapshot { data })
    }

    pub fn zeros(points: usize, times: usize) -> Self {
        HistorySnapshot {
            data: DMatrix::zeros(COMPONENTS * points, times),
        }
    }

    pub fn points(&self) -> usize {
        self.data.nrows() / COMPONENTS
    }

    pub fn times(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// Rows belonging to a set of points, in the given order.
    pub fn restrict(&self, points: &[usize]) -> HistorySnapshot {
        let rows: Vec<usize> = points.iter().flat_map(|&p| (0..COMPONENTS).map(move |c| 3 * p + c)).collect();
        HistorySnapshot {
            data: self.data.select_rows(&rows),
        }
    }

    /// Snapshot restricted to a column range.
    pub fn columns(&self, start: usize, count: usize) -> HistorySnapshot {
        HistorySnapshot {
            data: self.data.columns(start, count).into_owned(),
        }
    }
}

/// Result of integrating the constitutive law along strain histories.
#[derive(Debug, Clone)]
pub struct Integration {
    pub snapshot: HistorySnapshot,
    /// ε̄^p trajectory, one row per point.
    pub eps_bar: DMatrix<f64>,
    pub final_state: PlasticState,
    /// Number of return-mapping evaluations performed.
    pub evaluations: u64,
}

struct PointTrajectory {
    eps_p: Vec<[f64; 3]>,
    eps_bar: Vec<f64>,
    last: PointState,
    evaluations: u64,
}

fn integrate_point(
    material: &Material,
    strain: &DMatrix<f64>,
    row: usize,
    label: usize,
    initial: PointState,
) -> Result<PointTrajectory> {
    let nt = strain.ncols();
    let mut eps_p = Vec::with_capacity(nt);
    let mut eps_bar = Vec::with_capacity(nt);
    let mut state = initial;
    let mut evaluations = 0;
    for j in 0..nt {
        let eps = [strain[(3 * row, j)], strain[(3 * row + 1, j)], strain[(3 * row + 2, j)]];
        let out = return_map_point(eps, state, material)
            .map_err(|e| Error::Numeric(format!("point {label}, time step {j}: {e}")))?;
        evaluations += 1;
        state = out.state;
        eps_p.push(state.eps_p);
        eps_bar.push(state.eps_bar_p);
    }
    Ok(PointTrajectory {
        eps_p,
        eps_bar,
        last: state,
        evaluations,
    })
}

fn assemble(trajectories: Vec<PointTrajectory>, nt: usize) -> Integration {
    let np = trajectories.len();
    let mut snap = DMatrix::zeros(COMPONENTS * np, nt);
    let mut eps_bar = DMatrix::zeros(np, nt);
    let mut final_state = PlasticState::zeros(np);
    let mut evaluations = 0;
    for (p, tr) in trajectories.into_iter().enumerate() {
        for j in 0..nt {
            for c in 0..COMPONENTS {
                snap[(3 * p + c, j)] = tr.eps_p[j][c];
            }
            eps_bar[(p, j)] = tr.eps_bar[j];
        }
        final_state.set_point(p, tr.last);
        evaluations += tr.evaluations;
    }
    Integration {
        snapshot: HistorySnapshot { data: snap },
        eps_bar,
        final_state,
        evaluations,
    }
}

fn check_strain(strain: &DMatrix<f64>, points: usize) -> Result<()> {
    if strain.nrows() != COMPONENTS * points {
        return Err(Error::shape(COMPONENTS * points, strain.nrows(), "strain history rows"));
    }
    Ok(())
}

/// Integrates every Gauss point along its strain history.
///
/// `strain_history` has three rows per point (ε11, ε22, γ12) and one column
/// per time instant. Points run in parallel; each time loop is sequential.
pub fn integrate_history(
    material: &Material,
    strain_history: &DMatrix<f64>,
    initial: &PlasticState,
) -> Result<Integration> {
    check_strain(strain_history, initial.len())?;
    let trajectories = (0..initial.len())
        .into_par_iter()
        .map(|p| integrate_point(material, strain_history, p, p, initial.point(p)))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(trajectories, strain_history.ncols()))
}

/// Integrates only the reference points.
///
/// `strain_at_points` carries three rows per entry of `points`, in the same
/// order; `initial` is the full-field state from which the points are read.
pub fn integrate_history_sparse(
    material: &Material,
    strain_at_points: &DMatrix<f64>,
    initial: &PlasticState,
    points: &[usize],
) -> Result<Integration> {
    if points.is_empty() {
        return Err(Error::Argument("reference point set is empty".into()));
    }
    check_strain(strain_at_points, points.len())?;
    let start = initial.restrict(points)?;
    let trajectories = (0..points.len())
        .into_par_iter()
        .map(|k| integrate_point(material, strain_at_points, k, points[k], start.point(k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(trajectories, strain_at_points.ncols()))
}
