use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix, CsrMatrix};
use serde::{Deserialize, Serialize};

use super::mesh::Mesh;
use crate::error::{Error, Result};

/// Prescribed degrees of freedom, each driven as `scale · u_D(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletBc {
    pub dofs: Vec<usize>,
    pub scales: Vec<f64>,
}

impl DirichletBc {
    pub fn from_mesh(mesh: &Mesh) -> Self {
        let mut pairs: Vec<(usize, f64)> = mesh
            .dirichlet()
            .iter()
            .flat_map(|d| {
                (0..2)
                    .filter(move |&c| d.mask[c])
                    .map(move |c| (2 * d.node + c, d.scale[c]))
            })
            .collect();
        pairs.sort_by_key(|p| p.0);
        DirichletBc {
            dofs: pairs.iter().map(|p| p.0).collect(),
            scales: pairs.iter().map(|p| p.1).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    /// Prescribed values for a given amplitude u_D.
    pub fn values(&self, amplitude: f64) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.scales.iter().map(|s| s * amplitude))
    }

    /// Full-length vector carrying the scale factors at the prescribed dofs.
    pub fn lift(&self, n_dof: usize) -> DVector<f64> {
        let mut v = DVector::zeros(n_dof);
        for (&d, &s) in self.dofs.iter().zip(&self.scales) {
            v[d] = s;
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LinearSolverKind {
    /// Sparse Cholesky of the constrained stiffness.
    #[default]
    Cholesky,
    /// Jacobi-preconditioned conjugate gradients.
    ConjugateGradient { tolerance: f64, max_iterations: usize },
}

/// Stiffness with Dirichlet rows and columns eliminated, ready to solve.
pub struct ConstrainedSystem {
    n_dof: usize,
    free: Vec<usize>,
    bc: DirichletBc,
    k_full: CsrMatrix<f64>,
    k_ff: CsrMatrix<f64>,
    k_fp: CsrMatrix<f64>,
    cholesky: Option<CscCholesky<f64>>,
    kind: LinearSolverKind,
}

impl std::fmt::Debug for ConstrainedSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConstrainedSystem")
            .field("n_dof", &self.n_dof)
            .field("n_free", &self.free.len())
            .field("kind", &self.kind)
            .finish()
    }
}

impl ConstrainedSystem {
    pub fn new(k: &CsrMatrix<f64>, bc: &DirichletBc, kind: LinearSolverKind) -> Result<Self> {
        let n = k.nrows();
        if k.ncols() != n {
            return Err(Error::shape(n, k.ncols(), "stiffness must be square"));
        }
        if bc.is_empty() {
            return Err(Error::RigidBody("no Dirichlet condition: rigid-body modes are unconstrained".into()));
        }
        let mut map = vec![usize::MAX; n];
        let mut pmap = vec![usize::MAX; n];
        for (i, &d) in bc.dofs.iter().enumerate() {
            if d >= n {
                return Err(Error::Argument(format!("prescribed dof {d} out of range")));
            }
            pmap[d] = i;
        }
        let free: Vec<usize> = (0..n).filter(|&d| pmap[d] == usize::MAX).collect();
        for (i, &d) in free.iter().enumerate() {
            map[d] = i;
        }
        let nf = free.len();
        let mut ff = CooMatrix::new(nf, nf);
        let mut fp = CooMatrix::new(nf, bc.len());
        for (i, j, &v) in k.triplet_iter() {
            if map[i] == usize::MAX {
                continue;
            }
            if map[j] != usize::MAX {
                ff.push(map[i], map[j], v);
            } else {
                fp.push(map[i], pmap[j], v);
            }
        }
        let k_ff = CsrMatrix::from(&ff);
        let cholesky = match kind {
            LinearSolverKind::Cholesky => {
                let csc = CscMatrix::from(&ff);
                Some(CscCholesky::factor(&csc).map_err(|e| {
                    Error::RigidBody(format!(
                        "constrained stiffness is not positive definite ({e:?}); check Dirichlet tagging"
                    ))
                })?)
            }
            LinearSolverKind::ConjugateGradient { .. } => None,
        };
        Ok(ConstrainedSystem {
            n_dof: n,
            free,
            bc: bc.clone(),
            k_full: k.clone(),
            k_ff,
            k_fp: CsrMatrix::from(&fp),
            cholesky,
            kind,
        })
    }

    pub fn from_mesh(mesh: &Mesh, k: &CsrMatrix<f64>, kind: LinearSolverKind) -> Result<Self> {
        ConstrainedSystem::new(k, &DirichletBc::from_mesh(mesh), kind)
    }

    pub fn n_dof(&self) -> usize {
        self.n_dof
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    pub fn bc(&self) -> &DirichletBc {
        &self.bc
    }

    pub fn stiffness(&self) -> &CsrMatrix<f64> {
        &self.k_full
    }

    pub fn free_stiffness(&self) -> &CsrMatrix<f64> {
        &self.k_ff
    }

    /// Rows of a full-length vector (or matrix) at the free dofs.
    pub fn restrict(&self, full: &DMatrix<f64>) -> DMatrix<f64> {
        full.select_rows(&self.free)
    }

    /// Right-hand side on free dofs: `f_f − K_fp · u_p`.
    pub fn constrained_rhs(&self, rhs: &DVector<f64>, prescribed: &DVector<f64>) -> Result<DVector<f64>> {
        if rhs.len() != self.n_dof {
            return Err(Error::shape(self.n_dof, rhs.len(), "right-hand side"));
        }
        if prescribed.len() != self.bc.len() {
            return Err(Error::shape(self.bc.len(), prescribed.len(), "prescribed values"));
        }
        let rf = DVector::from_iterator(self.free.len(), self.free.iter().map(|&d| rhs[d]));
        Ok(rf - &self.k_fp * prescribed)
    }

    /// `K_fp` applied to prescribed values.
    pub fn coupling(&self, prescribed: &DMatrix<f64>) -> DMatrix<f64> {
        &self.k_fp * prescribed
    }

    /// Solves `K_ff X = B` for a block of free-dof right-hand sides.
    pub fn solve_free(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if rhs.nrows() != self.free.len() {
            return Err(Error::shape(self.free.len(), rhs.nrows(), "free-dof right-hand side"));
        }
        match (&self.cholesky, self.kind) {
            (Some(ch), _) => {
                let x = ch.solve(rhs);
                if x.iter().all(|v| v.is_finite()) {
                    Ok(x)
                } else {
                    Err(Error::Numeric("Cholesky solve produced non-finite values".into()))
                }
            }
            (None, LinearSolverKind::ConjugateGradient { tolerance, max_iterations }) => {
                let mut out = DMatrix::zeros(rhs.nrows(), rhs.ncols());
                for c in 0..rhs.ncols() {
                    let b = rhs.column(c).into_owned();
                    let x = conjugate_gradient(&self.k_ff, &b, tolerance, max_iterations)?;
                    out.set_column(c, &x);
                }
                Ok(out)
            }
            (None, LinearSolverKind::Cholesky) => unreachable!("factor built at construction"),
        }
    }

    /// Full displacement for a right-hand side and prescribed values.
    pub fn solve(&self, rhs: &DVector<f64>, prescribed: &DVector<f64>) -> Result<DVector<f64>> {
        let rf = self.constrained_rhs(rhs, prescribed)?;
        let uf = self.solve_free(&DMatrix::from_column_slice(rf.len(), 1, rf.as_slice()))?;
        Ok(self.expand(&uf.column(0).into_owned(), prescribed))
    }

    /// Scatters free and prescribed parts into a full-length vector.
    pub fn expand(&self, free: &DVector<f64>, prescribed: &DVector<f64>) -> DVector<f64> {
        let mut u = DVector::zeros(self.n_dof);
        for (i, &d) in self.free.iter().enumerate() {
            u[d] = free[i];
        }
        for (i, &d) in self.bc.dofs.iter().enumerate() {
            u[d] = prescribed[i];
        }
        u
    }

    /// Scatters free-dof rows into full-length rows, zero at prescribed dofs.
    pub fn expand_free_rows(&self, free: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n_dof, free.ncols());
        for (i, &d) in self.free.iter().enumerate() {
            out.row_mut(d).copy_from(&free.row(i));
        }
        out
    }
}

/// Solves one elastic problem `K u = rhs` with `u_p = scale · amplitude`.
pub fn solve_elastic(
    k: &CsrMatrix<f64>,
    rhs: &DVector<f64>,
    bc: &DirichletBc,
    amplitude: f64,
    kind: LinearSolverKind,
) -> Result<DVector<f64>> {
    let sys = ConstrainedSystem::new(k, bc, kind)?;
    sys.solve(rhs, &bc.values(amplitude))
}

fn conjugate_gradient(a: &CsrMatrix<f64>, b: &DVector<f64>, tol: f64, max_iter: usize) -> Result<DVector<f64>> {
    let n = b.len();
    let diag = DVector::from_iterator(
        n,
        (0..n).map(|i| a.get_entry(i, i).map(|e| e.into_value()).unwrap_or(1.0)),
    );
    let bnorm = b.norm();
    let mut x = DVector::zeros(n);
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.clone();
    let mut z = r.component_div(&diag);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for _ in 0..max_iter {
        let ap = a * &p;
        let alpha = rz / p.dot(&ap);
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        if r.norm() <= tol * bnorm {
            return Ok(x);
        }
        z = r.component_div(&diag);
        let rz_new = r.dot(&z);
        p = &z + &p * (rz_new / rz);
        rz = rz_new;
    }
    Err(Error::Numeric(format!(
        "conjugate gradients did not reach {tol:e} in {max_iter} iterations (residual {:e})",
        r.norm() / bnorm
    )))
}
