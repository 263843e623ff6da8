use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::time::TimeGrid;
use crate::error::{Error, Result};

/// Rank-m sum of space × microtime × macrotime products.
///
/// Column `k` of `spatial`, `micro` and `macro_` form triad `k`. Spatial rows
/// group `components` consecutive entries per spatial sample (Gauss point or
/// node), so sample `p`, component `c` is row `components·p + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparatedField {
    pub spatial: DMatrix<f64>,
    pub micro: DMatrix<f64>,
    pub macro_: DMatrix<f64>,
    pub components: usize,
}

impl SeparatedField {
    pub fn new(spatial: DMatrix<f64>, micro: DMatrix<f64>, macro_: DMatrix<f64>, components: usize) -> Result<Self> {
        let m = spatial.ncols();
        if micro.ncols() != m || macro_.ncols() != m {
            return Err(Error::shape(m, micro.ncols().max(macro_.ncols()), "mode counts must agree"));
        }
        if components == 0 || spatial.nrows() % components != 0 {
            return Err(Error::Argument(format!(
                "{} spatial rows do not split into {components} components",
                spatial.nrows()
            )));
        }
        Ok(SeparatedField {
            spatial,
            micro,
            macro_,
            components,
        })
    }

    pub fn zeros(rows: usize, n_micro: usize, n_macro: usize, components: usize) -> Self {
        SeparatedField {
            spatial: DMatrix::zeros(rows, 0),
            micro: DMatrix::zeros(n_micro, 0),
            macro_: DMatrix::zeros(n_macro, 0),
            components,
        }
    }

    pub fn rank(&self) -> usize {
        self.spatial.ncols()
    }

    pub fn rows(&self) -> usize {
        self.spatial.nrows()
    }

    pub fn samples(&self) -> usize {
        self.spatial.nrows() / self.components
    }

    pub fn n_micro(&self) -> usize {
        self.micro.nrows()
    }

    pub fn n_macro(&self) -> usize {
        self.macro_.nrows()
    }

    pub fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        if self.n_micro() != grid.n_micro || self.n_macro() != grid.n_macro {
            return Err(Error::Argument(format!(
                "field is {} × {} in time, grid is {} × {}",
                self.n_micro(),
                self.n_macro(),
                grid.n_micro,
                grid.n_macro
            )));
        }
        Ok(())
    }

    pub fn push(&mut self, spatial: &DVector<f64>, micro: &DVector<f64>, macro_: &DVector<f64>) {
        let m = self.rank();
        self.spatial = self.spatial.clone().insert_column(m, 0.0);
        self.spatial.set_column(m, spatial);
        self.micro = self.micro.clone().insert_column(m, 0.0);
        self.micro.set_column(m, micro);
        self.macro_ = self.macro_.clone().insert_column(m, 0.0);
        self.macro_.set_column(m, macro_);
    }

    /// Triads of `self` followed by those of `other`.
    pub fn concat(&self, other: &SeparatedField) -> Result<SeparatedField> {
        if other.rows() != self.rows() || other.n_micro() != self.n_micro() || other.n_macro() != self.n_macro() {
            return Err(Error::Argument("cannot concatenate fields of different shape".into()));
        }
        let cat = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
            let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
            out.columns_mut(0, a.ncols()).copy_from(a);
            out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
            out
        };
        Ok(SeparatedField {
            spatial: cat(&self.spatial, &other.spatial),
            micro: cat(&self.micro, &other.micro),
            macro_: cat(&self.macro_, &other.macro_),
            components: self.components,
        })
    }

    /// First `m` triads.
    pub fn truncate(&self, m: usize) -> SeparatedField {
        let m = m.min(self.rank());
        SeparatedField {
            spatial: self.spatial.columns(0, m).into_owned(),
            micro: self.micro.columns(0, m).into_owned(),
            macro_: self.macro_.columns(0, m).into_owned(),
            components: self.components,
        }
    }

    /// Same spatial and micro modes with the macro modes replaced.
    pub fn with_macro(&self, macro_: DMatrix<f64>) -> Result<SeparatedField> {
        SeparatedField::new(self.spatial.clone(), self.micro.clone(), macro_, self.components)
    }

    /// Spatial rows restricted to the listed rows.
    pub fn select_rows(&self, rows: &[usize]) -> SeparatedField {
        SeparatedField {
            spatial: self.spatial.select_rows(rows),
            micro: self.micro.clone(),
            macro_: self.macro_.clone(),
            components: self.components,
        }
    }

    /// Spatial rows of the listed samples, all components.
    pub fn select_samples(&self, samples: &[usize]) -> Result<SeparatedField> {
        Ok(self.select_rows(&self.sample_rows(samples)?))
    }

    fn sample_rows(&self, samples: &[usize]) -> Result<Vec<usize>> {
        let n = self.samples();
        let c = self.components;
        samples
            .iter()
            .map(|&p| {
                if p >= n {
                    Err(Error::Argument(format!("sample {p} out of range ({n} samples)")))
                } else {
                    Ok(p)
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(|ps| ps.iter().flat_map(|&p| (0..c).map(move |k| c * p + k)).collect())
    }

    /// Time-basis matrix: column `k` is Ψ^τ_k ⊗ Ψ^T_k flattened to length N_t.
    fn time_basis(&self) -> DMatrix<f64> {
        let (nt, nm) = (self.n_micro(), self.n_macro());
        let mut w = DMatrix::zeros(nt * nm, self.rank());
        for k in 0..self.rank() {
            for big in 0..nm {
                let c = self.macro_[(big, k)];
                for i in 0..nt {
                    w[(big * nt + i, k)] = self.micro[(i, k)] * c;
                }
            }
        }
        w
    }

    /// Dense rows × N_t reconstruction.
    pub fn to_dense(&self) -> DMatrix<f64> {
        if self.rank() == 0 {
            return DMatrix::zeros(self.rows(), self.n_micro() * self.n_macro());
        }
        &self.spatial * self.time_basis().transpose()
    }

    /// Dense trajectories of selected spatial rows.
    pub fn evaluate_rows(&self, rows: &[usize]) -> Result<DMatrix<f64>> {
        if let Some(&r) = rows.iter().find(|&&r| r >= self.rows()) {
            return Err(Error::Argument(format!("row {r} out of range ({} rows)", self.rows())));
        }
        let s = self.spatial.select_rows(rows);
        if self.rank() == 0 {
            return Ok(DMatrix::zeros(rows.len(), self.n_micro() * self.n_macro()));
        }
        Ok(s * self.time_basis().transpose())
    }

    /// Dense trajectories at selected samples, `components` rows per sample.
    ///
    /// Cost grows with the number of samples and the rank, not with the size
    /// of the spatial mesh.
    pub fn evaluate_at_points(&self, samples: &[usize]) -> Result<DMatrix<f64>> {
        let rows = self.sample_rows(samples)?;
        self.evaluate_rows(&rows)
    }

    /// Field at one flat time index.
    pub fn instant(&self, j: usize) -> DVector<f64> {
        let nt = self.n_micro();
        let (i, big) = (j % nt, j / nt);
        let coeff = DVector::from_fn(self.rank(), |k, _| self.micro[(i, k)] * self.macro_[(big, k)]);
        &self.spatial * coeff
    }

    /// Squared Frobenius norm computed from Gram matrices; `weights` applies
    /// per spatial row.
    pub fn norm_squared(&self, weights: Option<&[f64]>) -> f64 {
        let gs = weighted_gram(&self.spatial, weights);
        let gt = self.micro.transpose() * &self.micro;
        let gm = self.macro_.transpose() * &self.macro_;
        gs.component_mul(&gt).component_mul(&gm).sum().max(0.0)
    }

    /// Unit-norm micro and macro modes with the amplitude moved into the
    /// spatial modes. Each time mode's largest-magnitude entry is made
    /// positive; zero triads are dropped.
    pub fn normalized(&self) -> SeparatedField {
        let mut out = SeparatedField::zeros(self.rows(), self.n_micro(), self.n_macro(), self.components);
        for k in 0..self.rank() {
            let mut s = self.spatial.column(k).into_owned();
            let mut a = self.micro.column(k).into_owned();
            let mut b = self.macro_.column(k).into_owned();
            let (na, nb) = (a.norm(), b.norm());
            if na == 0.0 || nb == 0.0 || s.norm() == 0.0 {
                continue;
            }
            a /= na;
            b /= nb;
            s *= na * nb;
            if leading_sign(&a) < 0.0 {
                a.neg_mut();
                s.neg_mut();
            }
            if leading_sign(&b) < 0.0 {
                b.neg_mut();
                s.neg_mut();
            }
            out.push(&s, &a, &b);
        }
        out
    }

    /// Writes `<prefix>_spatial.csv`, `<prefix>_micro.csv` and `<prefix>_macro.csv`.
    pub fn write_modes_csv(&self, dir: &Path, prefix: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, m, index) in [
            ("spatial", &self.spatial, "row"),
            ("micro", &self.micro, "micro_step"),
            ("macro", &self.macro_, "cycle"),
        ] {
            let file = std::fs::File::create(dir.join(format!("{prefix}_{name}.csv")))?;
            write_matrix_csv(m, index, std::io::BufWriter::new(file))?;
        }
        Ok(())
    }
}

fn leading_sign(v: &DVector<f64>) -> f64 {
    v.iter().copied().fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best }).signum()
}

/// `Aᵀ W A` with `W` diagonal (identity when `weights` is `None`).
pub(crate) fn weighted_gram(a: &DMatrix<f64>, weights: Option<&[f64]>) -> DMatrix<f64> {
    match weights {
        None => a.transpose() * a,
        Some(w) => {
            let mut wa = a.clone();
            for (mut row, &wi) in wa.row_iter_mut().zip(w) {
                row *= wi;
            }
            a.transpose() * wa
        }
    }
}

/// Columns as `mode_1 … mode_m`, first column the row index; values dimensionless.
pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, index: &str, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec![index.to_string()];
    header.extend((1..=m.ncols()).map(|k| format!("mode_{k}")));
    out.write_record(&header)?;
    for r in 0..m.nrows() {
        let mut rec = vec![r.to_string()];
        rec.extend(m.row(r).iter().map(|v| format!("{v:.17e}")));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SeparatedField {
        SeparatedField::new(
            DMatrix::from_fn(6, 3, |r, k| (r as f64 + 1.0) * (k as f64 - 0.7)),
            DMatrix::from_fn(4, 3, |i, k| ((i + 2 * k) as f64).sin()),
            DMatrix::from_fn(5, 3, |j, k| 1.0 + 0.1 * (j * (k + 1)) as f64),
            3,
        )
        .unwrap()
    }

    #[test]
    fn dense_entry_is_sum_of_triad_products() {
        let f = sample();
        let d = f.to_dense();
        let (s, i, big) = (4, 2, 3);
        let direct: f64 = (0..3).map(|k| f.spatial[(s, k)] * f.micro[(i, k)] * f.macro_[(big, k)]).sum();
        assert!((d[(s, big * 4 + i)] - direct).abs() < 1e-12);
        assert!((f.instant(big * 4 + i)[s] - direct).abs() < 1e-12);
    }

    #[test]
    fn normalization_keeps_reconstruction() {
        let f = sample();
        let n = f.normalized();
        assert!((f.to_dense() - n.to_dense()).amax() < 1e-12);
        for k in 0..n.rank() {
            assert!((n.micro.column(k).norm() - 1.0).abs() < 1e-12);
            assert!((n.macro_.column(k).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gram_norm_matches_dense() {
        let f = sample();
        assert!((f.norm_squared(None) - f.to_dense().norm_squared()).abs() < 1e-9 * f.norm_squared(None));
    }

    #[test]
    fn point_evaluation_rejects_out_of_range() {
        assert!(matches!(sample().evaluate_at_points(&[2]), Err(Error::Argument(_))));
        let rows = sample().evaluate_at_points(&[1]).unwrap();
        assert_eq!(rows, sample().to_dense().rows(3, 3).into_owned());
    }
}
