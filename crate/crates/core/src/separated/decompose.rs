//! Separated decomposition of space-time snapshots.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::field::{weighted_gram, SeparatedField};
use super::time::TimeGrid;
use crate::error::{Error, Result};
use crate::plasticity::HistorySnapshot;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecomposeOptions {
    /// Target relative residual.
    pub tol: f64,
    pub max_rank: usize,
    /// Alternating sweeps per rank-one enrichment.
    pub max_sweeps: usize,
    /// Stop sweeping once the triad changes by less than this (relative).
    pub sweep_tol: f64,
    /// Global alternating least-squares sweeps over all modes after each enrichment.
    pub refine_sweeps: usize,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions {
            tol: 1e-6,
            max_rank: 50,
            max_sweeps: 50,
            sweep_tol: 1e-8,
            refine_sweeps: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecompositionStatus {
    Converged,
    /// `max_rank` reached before the tolerance.
    MaxRank,
    /// A new triad no longer reduced the residual; the best field is kept.
    Stagnated,
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub field: SeparatedField,
    /// Relative residual after 0, 1, …, m triads.
    pub residual_history: Vec<f64>,
    /// Alternating sweeps used by each enrichment.
    pub sweeps: Vec<usize>,
    pub status: DecompositionStatus,
}

impl Decomposition {
    pub fn relative_error(&self) -> f64 {
        *self.residual_history.last().unwrap_or(&0.0)
    }
}

/// Decomposes a plastic strain snapshot (three rows per Gauss point).
pub fn mtpgd_decompose(snapshot: &HistorySnapshot, grid: &TimeGrid, opts: &DecomposeOptions) -> Result<Decomposition> {
    decompose_matrix(snapshot.matrix(), 3, grid, None, opts)
}

/// Greedy rank-one enrichment with alternating directions (x, then τ, then T),
/// each new triad followed by a global alternating least-squares pass.
///
/// `weights` defines a weighted norm over the rows, e.g. Gauss-point areas.
pub fn decompose_matrix(
    x: &DMatrix<f64>,
    components: usize,
    grid: &TimeGrid,
    weights: Option<&[f64]>,
    opts: &DecomposeOptions,
) -> Result<Decomposition> {
    if x.ncols() != grid.total() {
        return Err(Error::shape(grid.total(), x.ncols(), "snapshot columns must match the time grid"));
    }
    if let Some(w) = weights {
        if w.len() != x.nrows() {
            return Err(Error::shape(x.nrows(), w.len(), "row weights"));
        }
    }
    if !(opts.tol > 0.0) || opts.max_sweeps == 0 {
        return Err(Error::Argument("decomposition tolerance and sweep count must be positive".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("snapshot contains non-finite values".into()));
    }
    let (nt, nm) = (grid.n_micro, grid.n_macro);
    let norm_x = weighted_norm(x, weights);
    let mut field = SeparatedField::zeros(x.nrows(), nt, nm, components);
    let mut history = vec![if norm_x == 0.0 { 0.0 } else { 1.0 }];
    let mut sweeps = Vec::new();
    if norm_x == 0.0 {
        return Ok(Decomposition {
            field,
            residual_history: history,
            sweeps,
            status: DecompositionStatus::Converged,
        });
    }
    let mut residual = x.clone();
    let mut status = DecompositionStatus::MaxRank;
    while field.rank() < opts.max_rank {
        let last = *history.last().unwrap();
        if last <= opts.tol {
            status = DecompositionStatus::Converged;
            break;
        }
        let (a, b, c, used) = rank_one(&residual, weights, nt, nm, opts);
        let mut candidate = field.clone();
        candidate.push(&a, &b, &c);
        if opts.refine_sweeps > 0 && candidate.rank() > 1 {
            candidate = refine(x, weights, candidate, opts);
        }
        let cand_residual = x - candidate.to_dense();
        let err = weighted_norm(&cand_residual, weights) / norm_x;
        if err >= last * (1.0 - 1e-12) {
            status = DecompositionStatus::Stagnated;
            log::warn!("decomposition stagnated at rank {} with relative residual {last:e}", field.rank());
            break;
        }
        field = candidate;
        residual = cand_residual;
        history.push(err);
        sweeps.push(used);
    }
    if field.rank() == opts.max_rank && *history.last().unwrap() <= opts.tol {
        status = DecompositionStatus::Converged;
    }
    Ok(Decomposition {
        field: field.normalized(),
        residual_history: history,
        sweeps,
        status,
    })
}

fn weighted_norm(m: &DMatrix<f64>, weights: Option<&[f64]>) -> f64 {
    match weights {
        None => m.norm(),
        Some(w) => m.row_iter().zip(w).map(|(r, wi)| wi * r.norm_squared()).sum::<f64>().sqrt(),
    }
}

fn weighted_dot(a: &DVector<f64>, b: &DVector<f64>, weights: Option<&[f64]>) -> f64 {
    match weights {
        None => a.dot(b),
        Some(w) => a.iter().zip(b.iter()).zip(w).map(|((x, y), wi)| x * y * wi).sum(),
    }
}

fn scale_rows(a: &DVector<f64>, weights: Option<&[f64]>) -> DVector<f64> {
    match weights {
        None => a.clone(),
        Some(w) => DVector::from_iterator(a.len(), a.iter().zip(w).map(|(x, wi)| x * wi)),
    }
}

pub(crate) fn time_product(b: &DVector<f64>, c: &DVector<f64>) -> DVector<f64> {
    let nt = b.len();
    DVector::from_fn(nt * c.len(), |j, _| b[j % nt] * c[j / nt])
}

/// Best rank-one triad of `r` by alternating least squares; time modes are
/// returned with unit norm.
fn rank_one(
    r: &DMatrix<f64>,
    weights: Option<&[f64]>,
    nt: usize,
    nm: usize,
    opts: &DecomposeOptions,
) -> (DVector<f64>, DVector<f64>, DVector<f64>, usize) {
    // start from the dominant cycle of the dominant row
    let row_norms: Vec<f64> = (0..r.nrows())
        .map(|s| r.row(s).norm_squared() * weights.map_or(1.0, |w| w[s]))
        .collect();
    let s_max = argmax(&row_norms);
    let v0 = DMatrix::from_column_slice(nt, nm, r.row(s_max).transpose().as_slice());
    let col_norms: Vec<f64> = (0..nm).map(|k| v0.column(k).norm()).collect();
    let mut b = v0.column(argmax(&col_norms)).into_owned();
    b /= b.norm().max(f64::MIN_POSITIVE);
    let mut c = v0.transpose() * &b;
    let nc = c.norm();
    if nc > 0.0 {
        c /= nc;
    } else {
        c = DVector::from_element(nm, 1.0 / (nm as f64).sqrt());
    }

    let mut a = r * time_product(&b, &c);
    let mut used = 0;
    for sweep in 1..=opts.max_sweeps {
        used = sweep;
        let na = weighted_dot(&a, &a, weights);
        if na == 0.0 {
            break;
        }
        let g = r.transpose() * scale_rows(&a, weights);
        let v = DMatrix::from_column_slice(nt, nm, g.as_slice());
        let mut b_new = &v * &c / na;
        let nb = b_new.norm();
        if nb == 0.0 {
            break;
        }
        b_new /= nb;
        let mut c_new = v.transpose() * &b_new / na;
        let nc = c_new.norm();
        if nc == 0.0 {
            break;
        }
        c_new /= nc;
        let a_new = r * time_product(&b_new, &c_new);
        // ‖a b c − a' b' c'‖² with unit time modes
        let na_new = weighted_dot(&a_new, &a_new, weights);
        let cross = weighted_dot(&a, &a_new, weights) * b.dot(&b_new) * c.dot(&c_new);
        let change = ((na + na_new - 2.0 * cross).max(0.0) / na_new.max(f64::MIN_POSITIVE)).sqrt();
        a = a_new;
        b = b_new;
        c = c_new;
        if change < opts.sweep_tol {
            break;
        }
    }
    (a, b, c, used)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `rhs · gram⁺` through a truncated SVD.
pub(crate) fn solve_gram(rhs: &DMatrix<f64>, gram: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = gram.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let pinv = svd
        .pseudo_inverse(1e-13 * smax.max(f64::MIN_POSITIVE))
        .unwrap_or_else(|_| DMatrix::zeros(gram.ncols(), gram.nrows()));
    rhs * pinv
}

/// Global alternating least squares over all triads of `field`.
fn refine(x: &DMatrix<f64>, weights: Option<&[f64]>, mut field: SeparatedField, opts: &DecomposeOptions) -> SeparatedField {
    let (nt, nm, m) = (field.n_micro(), field.n_macro(), field.rank());
    let norm_x = weighted_norm(x, weights);
    let mut err = weighted_norm(&(x - field.to_dense()), weights) / norm_x;
    for _ in 0..opts.refine_sweeps {
        let mut next = field.clone();
        let gb = next.micro.transpose() * &next.micro;
        let gc = next.macro_.transpose() * &next.macro_;
        let mut w = DMatrix::zeros(nt * nm, m);
        for k in 0..m {
            w.set_column(k, &time_product(&next.micro.column(k).into_owned(), &next.macro_.column(k).into_owned()));
        }
        next.spatial = solve_gram(&(x * w), &gb.component_mul(&gc));

        let ga = weighted_gram(&next.spatial, weights);
        let mut wa = next.spatial.clone();
        if let Some(wt) = weights {
            for (mut row, &wi) in wa.row_iter_mut().zip(wt) {
                row *= wi;
            }
        }
        let g = x.transpose() * wa;
        let views: Vec<DMatrix<f64>> = (0..m)
            .map(|k| DMatrix::from_column_slice(nt, nm, g.column(k).into_owned().as_slice()))
            .collect();
        let mut mb = DMatrix::zeros(nt, m);
        for k in 0..m {
            mb.set_column(k, &(&views[k] * next.macro_.column(k)));
        }
        next.micro = solve_gram(&mb, &ga.component_mul(&gc));
        let gb = next.micro.transpose() * &next.micro;
        let mut mc = DMatrix::zeros(nm, m);
        for k in 0..m {
            mc.set_column(k, &(views[k].transpose() * next.micro.column(k)));
        }
        next.macro_ = solve_gram(&mc, &ga.component_mul(&gb));

        let next = next.normalized();
        if next.rank() != m {
            break;
        }
        let e = weighted_norm(&(x - next.to_dense()), weights) / norm_x;
        if !(e <= err) {
            break;
        }
        let gain = (err - e) / err.max(f64::MIN_POSITIVE);
        field = next;
        err = e;
        if gain < opts.sweep_tol {
            break;
        }
    }
    field
}

/// Truncated higher-order SVD (Tucker form), intended for small cross-checks.
#[derive(Debug, Clone)]
pub struct Tucker {
    pub spatial: DMatrix<f64>,
    pub micro: DMatrix<f64>,
    pub macro_: DMatrix<f64>,
    /// Core tensor unfolded as r_x × (r_T·r_τ), column index `k_T·r_τ + k_τ`.
    pub core: DMatrix<f64>,
}

impl Tucker {
    pub fn ranks(&self) -> (usize, usize, usize) {
        (self.spatial.ncols(), self.micro.ncols(), self.macro_.ncols())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        &self.spatial * &self.core * self.macro_.kronecker(&self.micro).transpose()
    }
}

/// HOSVD keeping, per mode, singular values above `tol` relative to the largest.
pub fn hosvd(x: &DMatrix<f64>, grid: &TimeGrid, tol: f64) -> Result<Tucker> {
    if x.ncols() != grid.total() {
        return Err(Error::shape(grid.total(), x.ncols(), "snapshot columns must match the time grid"));
    }
    let (nt, nm, rows) = (grid.n_micro, grid.n_macro, x.nrows());
    // mode-τ and mode-T unfoldings
    let mut x2 = DMatrix::zeros(nt, rows * nm);
    let mut x3 = DMatrix::zeros(nm, rows * nt);
    for s in 0..rows {
        for big in 0..nm {
            for i in 0..nt {
                let v = x[(s, big * nt + i)];
                x2[(i, s * nm + big)] = v;
                x3[(big, s * nt + i)] = v;
            }
        }
    }
    let u1 = leading_vectors(x.clone(), tol);
    let u2 = leading_vectors(x2, tol);
    let u3 = leading_vectors(x3, tol);
    let core = u1.transpose() * x * u3.kronecker(&u2);
    Ok(Tucker {
        spatial: u1,
        micro: u2,
        macro_: u3,
        core,
    })
}

fn leading_vectors(unfolding: DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let svd = unfolding.svd(true, false);
    let u = svd.u.expect("left vectors requested");
    let top = svd.singular_values.max();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let keep: Vec<usize> = order.into_iter().filter(|&i| svd.singular_values[i] > tol * top).collect();
    u.select_columns(&keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(rank: usize, rows: usize, grid: &TimeGrid, seed: u64) -> SeparatedField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SeparatedField::new(
            DMatrix::from_fn(rows, rank, |_, _| rng.gen_range(-1.0..1.0)),
            DMatrix::from_fn(grid.n_micro, rank, |_, _| rng.gen_range(-1.0..1.0)),
            DMatrix::from_fn(grid.n_macro, rank, |_, _| rng.gen_range(-1.0..1.0)),
            3,
        )
        .unwrap()
    }

    #[test]
    fn exact_rank_one_is_recovered() {
        let grid = TimeGrid::new(7, 5, 1.0).unwrap();
        let truth = random_field(1, 9, &grid, 1);
        let d = decompose_matrix(&truth.to_dense(), 3, &grid, None, &DecomposeOptions::default()).unwrap();
        assert_eq!(d.field.rank(), 1);
        assert!(d.relative_error() <= 1e-10);
    }

    #[test]
    fn residual_is_nonincreasing_in_rank() {
        let grid = TimeGrid::new(8, 6, 1.0).unwrap();
        let x = random_field(4, 12, &grid, 2).to_dense() + DMatrix::from_fn(12, 48, |r, c| 1e-3 * ((r * c) as f64).cos());
        let opts = DecomposeOptions { max_rank: 8, ..Default::default() };
        let d = decompose_matrix(&x, 3, &grid, None, &opts).unwrap();
        for w in d.residual_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn zero_snapshot_gives_rank_zero() {
        let grid = TimeGrid::new(3, 3, 1.0).unwrap();
        let d = decompose_matrix(&DMatrix::zeros(6, 9), 3, &grid, None, &DecomposeOptions::default()).unwrap();
        assert_eq!(d.field.rank(), 0);
        assert_eq!(d.status, DecompositionStatus::Converged);
    }

    #[test]
    fn hosvd_reconstructs_low_rank_tensor() {
        let grid = TimeGrid::new(6, 5, 1.0).unwrap();
        let x = random_field(2, 9, &grid, 3).to_dense();
        let t = hosvd(&x, &grid, 1e-10).unwrap();
        assert_eq!(t.ranks(), (2, 2, 2));
        assert!((t.to_dense() - &x).norm() <= 1e-10 * x.norm());
    }

    #[test]
    fn weights_enter_the_norm() {
        let grid = TimeGrid::new(4, 4, 1.0).unwrap();
        let x = random_field(2, 6, &grid, 4).to_dense();
        let w = vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0];
        let opts = DecomposeOptions { tol: 1e-9, ..Default::default() };
        let d = decompose_matrix(&x, 3, &grid, Some(&w), &opts).unwrap();
        assert!(d.relative_error() <= 1e-9);
        assert!((d.field.to_dense() - &x).norm() <= 1e-8 * x.norm());
    }
}
