use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-scale time grid: `n_micro` steps per cycle times `n_macro` cycles.
///
/// Instant `j` (0-based) sits at `t_j = (first_cycle·N_τ + j + 1)·Δτ`, so a
/// grid covers the half-open interval (T_start, T_end] with T_start a whole
/// number of cycles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub n_micro: usize,
    pub n_macro: usize,
    pub dt_micro: f64,
    pub cycle_duration: f64,
    /// Index of the first cycle covered by this grid.
    pub first_cycle: usize,
}

impl TimeGrid {
    pub fn new(n_micro: usize, n_macro: usize, cycle_duration: f64) -> Result<Self> {
        if n_micro == 0 || n_macro == 0 {
            return Err(Error::Argument(format!(
                "time grid needs at least one step per scale (got {n_micro} × {n_macro})"
            )));
        }
        if !(cycle_duration > 0.0 && cycle_duration.is_finite()) {
            return Err(Error::Argument(format!("cycle duration must be positive, got {cycle_duration}")));
        }
        Ok(TimeGrid {
            n_micro,
            n_macro,
            dt_micro: cycle_duration / n_micro as f64,
            cycle_duration,
            first_cycle: 0,
        })
    }

    pub fn total(&self) -> usize {
        self.n_micro * self.n_macro
    }

    pub fn time(&self, j: usize) -> f64 {
        (self.first_cycle * self.n_micro + j + 1) as f64 * self.dt_micro
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.total()).map(|j| self.time(j)).collect()
    }

    pub fn start_time(&self) -> f64 {
        self.first_cycle as f64 * self.cycle_duration
    }

    pub fn end_time(&self) -> f64 {
        (self.first_cycle + self.n_macro) as f64 * self.cycle_duration
    }

    /// Flat column index of micro step `i` in macro step `k`.
    pub fn index(&self, i: usize, k: usize) -> usize {
        k * self.n_micro + i
    }

    /// Grid covering `count` cycles starting `offset` cycles after this one.
    pub fn window(&self, offset: usize, count: usize) -> Result<TimeGrid> {
        if count == 0 {
            return Err(Error::Argument("empty time window".into()));
        }
        Ok(TimeGrid {
            n_macro: count,
            first_cycle: self.first_cycle + offset,
            ..*self
        })
    }

    /// Grid with the same origin extended (or shortened) to `n_macro` cycles.
    pub fn with_cycles(&self, n_macro: usize) -> Result<TimeGrid> {
        self.window(0, n_macro)
    }
}

/// Rearranges a length-N_t signal into an N_τ × N_T matrix (one column per cycle).
pub fn reshape_time(signal: &[f64], grid: &TimeGrid) -> Result<DMatrix<f64>> {
    if signal.len() != grid.total() {
        return Err(Error::shape(grid.total(), signal.len(), "signal length must equal N_τ·N_T"));
    }
    Ok(DMatrix::from_column_slice(grid.n_micro, grid.n_macro, signal))
}

/// Inverse of [`reshape_time`].
pub fn flatten_time(matrix: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(matrix.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reshape_places_cycles_in_columns() {
        let grid = TimeGrid::new(3, 2, 1.0).unwrap();
        let m = reshape_time(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &grid).unwrap();
        assert_eq!(m.column(0).as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(m.column(1).as_slice(), &[4.0, 5.0, 6.0]);
        assert_eq!(flatten_time(&m).as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn length_mismatch_is_shape_error() {
        let grid = TimeGrid::new(3, 2, 1.0).unwrap();
        assert!(matches!(reshape_time(&[1.0; 5], &grid), Err(Error::Shape { .. })));
    }

    #[test]
    fn instants_are_right_endpoints() {
        let grid = TimeGrid::new(4, 3, 2.0).unwrap();
        assert_eq!(grid.time(0), 0.5);
        assert_eq!(grid.time(grid.total() - 1), 6.0);
        let tail = grid.window(1, 2).unwrap();
        assert_eq!(tail.time(0), 2.5);
        assert_eq!(tail.end_time(), 6.0);
    }
}
