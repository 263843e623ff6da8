//! Multi-time PGD solution of the linear equilibrium problem.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;

use super::decompose::{solve_gram, DecomposeOptions};
use super::field::SeparatedField;
use super::time::{reshape_time, TimeGrid};
use crate::error::{Error, Result};
use crate::fem::{strain_operator, ConstrainedSystem, DirichletBc, Mesh};

/// Splits a scalar time signal into micro × macro triads by SVD of its
/// N_τ × N_T rearrangement. The result has one spatial row holding the
/// singular values.
pub fn separate_signal(signal: &[f64], grid: &TimeGrid) -> Result<SeparatedField> {
    let m = reshape_time(signal, grid)?;
    let mut out = SeparatedField::zeros(1, grid.n_micro, grid.n_macro, 1);
    if m.amax() == 0.0 {
        return Ok(out);
    }
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let smax = svd.singular_values.max();
    for k in 0..svd.singular_values.len() {
        let s = svd.singular_values[k];
        if s > 1e-13 * smax {
            out.push(
                &DVector::from_element(1, s),
                &u.column(k).into_owned(),
                &vt.row(k).transpose(),
            );
        }
    }
    Ok(out.normalized())
}

/// Time-dependent Dirichlet data `u_p(t) = scale · u_D(t)` with u_D separated.
#[derive(Debug, Clone)]
pub struct DirichletLift {
    pub bc: DirichletBc,
    /// Scalar amplitude u_D as a one-row separated field.
    pub amplitude: SeparatedField,
}

impl DirichletLift {
    pub fn new(bc: DirichletBc, amplitude_signal: &[f64], grid: &TimeGrid) -> Result<Self> {
        Ok(DirichletLift {
            bc,
            amplitude: separate_signal(amplitude_signal, grid)?,
        })
    }

    /// Prescribed dof values at flat time index `j`.
    pub fn values(&self, j: usize) -> DVector<f64> {
        let a = if self.amplitude.rank() == 0 { 0.0 } else { self.amplitude.instant(j)[0] };
        self.bc.values(a)
    }

    /// Full-dof displacement triads carried by the lift.
    pub fn field(&self, n_dof: usize) -> SeparatedField {
        let lift = self.bc.lift(n_dof);
        let spatial = &lift * self.amplitude.spatial.row(0);
        SeparatedField {
            spatial,
            micro: self.amplitude.micro.clone(),
            macro_: self.amplitude.macro_.clone(),
            components: 2,
        }
    }
}

/// Separated right-hand side: external load triads and plastic-force triads.
#[derive(Debug, Clone)]
pub struct SeparatedRhs {
    pub external: SeparatedField,
    pub nonlinear: SeparatedField,
}

impl SeparatedRhs {
    pub fn new(n_dof: usize, grid: &TimeGrid) -> Self {
        SeparatedRhs {
            external: SeparatedField::zeros(n_dof, grid.n_micro, grid.n_macro, 2),
            nonlinear: SeparatedField::zeros(n_dof, grid.n_micro, grid.n_macro, 2),
        }
    }

    /// Adds `spatial · signal(t)`, separating the signal in time.
    pub fn add_external(&mut self, spatial: &DVector<f64>, signal: &[f64], grid: &TimeGrid) -> Result<()> {
        if spatial.len() != self.external.rows() {
            return Err(Error::shape(self.external.rows(), spatial.len(), "external load vector"));
        }
        if spatial.amax() == 0.0 {
            return Ok(());
        }
        let s = separate_signal(signal, grid)?;
        for k in 0..s.rank() {
            let v = spatial * s.spatial[(0, k)];
            self.external
                .push(&v, &s.micro.column(k).into_owned(), &s.macro_.column(k).into_owned());
        }
        Ok(())
    }

    /// Sets the nonlinear triads to `P · Ψ^x_k` for a separated plastic strain.
    pub fn set_plastic(&mut self, operator: &CsrMatrix<f64>, plastic: &SeparatedField) -> Result<()> {
        if operator.ncols() != plastic.rows() || operator.nrows() != self.nonlinear.rows() {
            return Err(Error::shape(operator.ncols(), plastic.rows(), "plastic field rows"));
        }
        let spatial = if plastic.rank() == 0 {
            DMatrix::zeros(operator.nrows(), 0)
        } else {
            operator * &plastic.spatial
        };
        self.nonlinear = SeparatedField::new(spatial, plastic.micro.clone(), plastic.macro_.clone(), 2)?;
        Ok(())
    }

    pub fn combined(&self) -> SeparatedField {
        self.external.concat(&self.nonlinear).expect("external and nonlinear triads share a shape")
    }
}

#[derive(Debug, Clone)]
pub struct MtpgdSolution {
    /// Full-dof displacement, lift included.
    pub displacement: SeparatedField,
    /// Relative equilibrium residual after 0, 1, …, m enrichments.
    pub residual_history: Vec<f64>,
    pub sweeps: Vec<usize>,
}

impl MtpgdSolution {
    pub fn relative_residual(&self) -> f64 {
        *self.residual_history.last().unwrap_or(&0.0)
    }
}

/// Norm of Σ_k e_k ⊗ t1_k ⊗ t2_k, computed through QR of the time factors so
/// that small residuals are not lost to cancellation.
fn separated_norm(e: &DMatrix<f64>, t1: &DMatrix<f64>, t2: &DMatrix<f64>) -> f64 {
    let p = e.ncols();
    if p == 0 {
        return 0.0;
    }
    let r1 = upper_factor(t1);
    let r2 = upper_factor(t2);
    let mut sum = 0.0;
    for a in 0..r1.nrows() {
        for b in 0..r2.nrows() {
            let coeff = DVector::from_fn(p, |k, _| r1[(a, k)] * r2[(b, k)]);
            sum += (e * coeff).norm_squared();
        }
    }
    sum.sqrt()
}

fn upper_factor(t: &DMatrix<f64>) -> DMatrix<f64> {
    if t.nrows() >= t.ncols() {
        t.clone().qr().r()
    } else {
        t.clone()
    }
}

struct Target {
    f: DMatrix<f64>,
    y: DMatrix<f64>,
    beta: DMatrix<f64>,
    gamma: DMatrix<f64>,
}

/// Solves `K u(τ, T) = f(τ, T)` with `u = u_lift + Σ_k X_k ⊗ b_k ⊗ c_k`.
///
/// Each load triad is first mapped through `K⁻¹` once; modes are then built
/// greedily by alternating directions in the energy inner product of `K`,
/// followed by a global alternating pass over all modes. Enrichment stops
/// when the relative equilibrium residual falls below `opts.tol`. If greedy
/// enrichment stagnates or would reach the number of load triads (or
/// `opts.max_rank`) first, the solution is the load image itself, which is
/// exact at the load rank.
pub fn mtpgd_solve(
    system: &ConstrainedSystem,
    rhs: &SeparatedRhs,
    lift: &DirichletLift,
    opts: &DecomposeOptions,
) -> Result<MtpgdSolution> {
    let n_dof = system.n_dof();
    let combined = rhs.combined();
    if combined.rows() != n_dof {
        return Err(Error::shape(n_dof, combined.rows(), "right-hand side rows"));
    }
    if lift.bc != *system.bc() {
        return Err(Error::Argument("lift and constrained system use different Dirichlet data".into()));
    }
    let (nt, nm) = (combined.n_micro(), combined.n_macro());
    if lift.amplitude.n_micro() != nt || lift.amplitude.n_macro() != nm {
        return Err(Error::Argument("lift and right-hand side use different time grids".into()));
    }

    // free-dof load triads: f_f − K_fp u_p
    let mut f = system.restrict(&combined.spatial);
    let mut beta = combined.micro.clone();
    let mut gamma = combined.macro_.clone();
    if lift.amplitude.rank() > 0 {
        let p = lift.bc.values(1.0);
        let kp = system.coupling(&DMatrix::from_column_slice(p.len(), 1, p.as_slice()));
        let r = lift.amplitude.rank();
        let mut fl = DMatrix::zeros(f.nrows(), r);
        for k in 0..r {
            fl.set_column(k, &(kp.column(0) * (-lift.amplitude.spatial[(0, k)])));
        }
        let extra = SeparatedField {
            spatial: fl,
            micro: lift.amplitude.micro.clone(),
            macro_: lift.amplitude.macro_.clone(),
            components: 1,
        };
        let base = SeparatedField {
            spatial: f,
            micro: beta,
            macro_: gamma,
            components: 1,
        };
        let all = base.concat(&extra)?;
        f = all.spatial;
        beta = all.micro;
        gamma = all.macro_;
    }
    let keep: Vec<usize> = (0..f.ncols())
        .filter(|&k| f.column(k).amax() > 0.0 && beta.column(k).amax() > 0.0 && gamma.column(k).amax() > 0.0)
        .collect();
    let target = Target {
        y: system.solve_free(&f.select_columns(&keep))?,
        f: f.select_columns(&keep),
        beta: beta.select_columns(&keep),
        gamma: gamma.select_columns(&keep),
    };

    let nf = system.n_free();
    let mut x = DMatrix::zeros(nf, 0);
    let mut kx = DMatrix::zeros(nf, 0);
    let mut b = DMatrix::zeros(nt, 0);
    let mut c = DMatrix::zeros(nm, 0);
    let f_norm = separated_norm(&target.f, &target.beta, &target.gamma);
    let mut history = vec![if f_norm == 0.0 { 0.0 } else { 1.0 }];
    let mut sweeps = Vec::new();

    // K⁻¹ maps each load triad to a displacement triad, so the image of the
    // load is itself an exact separated solution of rank `n_load`; greedy
    // enrichment is only worth it while it stays below that rank.
    let n_load = target.f.ncols();
    let mut exact = false;
    if f_norm > 0.0 {
        loop {
            let last = *history.last().unwrap();
            if last <= opts.tol {
                break;
            }
            if x.ncols() >= n_load.min(opts.max_rank) {
                exact = true;
                break;
            }
            let (xn, kxn, bn, cn, used) = enrich(&target, &x, &kx, &b, &c, opts);
            let mut cand = (hcat(&x, &xn), hcat(&kx, &kxn), hcat(&b, &bn), hcat(&c, &cn));
            if opts.refine_sweeps > 0 && cand.0.ncols() > 1 {
                cand = refine(&target, cand, opts);
            }
            let res = residual_norm(&target, &cand.1, &cand.2, &cand.3) / f_norm;
            if !(res < last * (1.0 - 1e-12)) {
                exact = true;
                break;
            }
            (x, kx, b, c) = cand;
            history.push(res);
            sweeps.push(used);
        }
    }
    if exact {
        log::debug!("greedy enrichment stopped at rank {}; using the exact load image of rank {n_load}", x.ncols());
        x = target.y.clone();
        kx = system.free_stiffness() * &x;
        b = target.beta.clone();
        c = target.gamma.clone();
        history.push(residual_norm(&target, &kx, &b, &c) / f_norm);
        sweeps.push(0);
    }

    let free_field = SeparatedField {
        spatial: system.expand_free_rows(&x),
        micro: b,
        macro_: c,
        components: 2,
    };
    let displacement = free_field.concat(&lift.field(n_dof))?.normalized();
    Ok(MtpgdSolution {
        displacement,
        residual_history: history,
        sweeps,
    })
}

fn hcat(a: &DMatrix<f64>, v: &DVector<f64>) -> DMatrix<f64> {
    let mut out = a.clone().insert_column(a.ncols(), 0.0);
    out.set_column(a.ncols(), v);
    out
}

fn residual_norm(t: &Target, kx: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    let cat = |a: &DMatrix<f64>, z: &DMatrix<f64>, sign: f64| {
        let mut out = DMatrix::zeros(a.nrows(), a.ncols() + z.ncols());
        out.columns_mut(0, a.ncols()).copy_from(a);
        out.columns_mut(a.ncols(), z.ncols()).copy_from(&(z * sign));
        out
    };
    separated_norm(&cat(kx, &t.f, 1.0), &cat(b, &t.beta, -1.0), &cat(c, &t.gamma, 1.0))
}

type Enrichment = (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>, usize);

fn enrich(
    t: &Target,
    x: &DMatrix<f64>,
    kx: &DMatrix<f64>,
    b_modes: &DMatrix<f64>,
    c_modes: &DMatrix<f64>,
    opts: &DecomposeOptions,
) -> Enrichment {
    // initial time modes from the heaviest load triad not yet captured
    let weights: Vec<f64> = (0..t.f.ncols())
        .map(|j| t.f.column(j).norm() * t.beta.column(j).norm() * t.gamma.column(j).norm())
        .collect();
    let j0 = (0..weights.len()).fold(0, |best, j| if weights[j] > weights[best] { j } else { best });
    let mut b = t.beta.column(j0).normalize();
    let mut c = t.gamma.column(j0).normalize();
    let spatial = |b: &DVector<f64>, c: &DVector<f64>| {
        let wt = (t.beta.transpose() * b).component_mul(&(t.gamma.transpose() * c));
        let wx = (b_modes.transpose() * b).component_mul(&(c_modes.transpose() * c));
        (&t.y * &wt - x * &wx, &t.f * &wt - kx * &wx)
    };
    let mut used = 0;
    for sweep in 1..=opts.max_sweeps {
        used = sweep;
        let (xn, kxn) = spatial(&b, &c);
        let e = xn.dot(&kxn);
        if !(e > 0.0) {
            break;
        }
        let fx = t.f.transpose() * &xn;
        let kxx = kx.transpose() * &xn;
        let bn = (&t.beta * fx.component_mul(&(t.gamma.transpose() * &c)) - b_modes * kxx.component_mul(&(c_modes.transpose() * &c))) / e;
        let nb = bn.norm();
        if nb == 0.0 {
            break;
        }
        let bn = bn / nb;
        let cn = (&t.gamma * fx.component_mul(&(t.beta.transpose() * &bn)) - c_modes * kxx.component_mul(&(b_modes.transpose() * &bn))) / e;
        let nc = cn.norm();
        if nc == 0.0 {
            break;
        }
        let cn = cn / nc;
        let change = 1.0 - (b.dot(&bn) * c.dot(&cn)).abs();
        b = bn;
        c = cn;
        if change < opts.sweep_tol {
            break;
        }
    }
    let (xn, kxn) = spatial(&b, &c);
    (xn, kxn, b, c, used)
}

type Modes = (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>);

fn refine(t: &Target, modes: Modes, opts: &DecomposeOptions) -> Modes {
    let (mut x, mut kx, mut b, mut c) = modes;
    let mut err = residual_norm(t, &kx, &b, &c);
    for _ in 0..opts.refine_sweeps {
        let gram = (b.transpose() * &b).component_mul(&(c.transpose() * &c));
        let w = (t.beta.transpose() * &b).component_mul(&(t.gamma.transpose() * &c));
        let coeff = solve_gram(&w, &gram);
        let xn = &t.y * &coeff;
        let kxn = &t.f * &coeff;
        let m = xn.transpose() * &kxn;
        let n = xn.transpose() * &t.f;
        let bn = solve_gram(
            &(&t.beta * n.component_mul(&(c.transpose() * &t.gamma)).transpose()),
            &m.component_mul(&(c.transpose() * &c)),
        );
        let cn = solve_gram(
            &(&t.gamma * n.component_mul(&(bn.transpose() * &t.beta)).transpose()),
            &m.component_mul(&(bn.transpose() * &bn)),
        );
        let (mut xn, mut kxn, mut bn, mut cn) = (xn, kxn, bn, cn);
        for k in 0..xn.ncols() {
            let (sb, sc) = (bn.column(k).norm(), cn.column(k).norm());
            if sb == 0.0 || sc == 0.0 {
                continue;
            }
            bn.column_mut(k).unscale_mut(sb);
            cn.column_mut(k).unscale_mut(sc);
            xn.column_mut(k).scale_mut(sb * sc);
            kxn.column_mut(k).scale_mut(sb * sc);
        }
        let e = residual_norm(t, &kxn, &bn, &cn);
        if !(e < err) {
            break;
        }
        let gain = (err - e) / err.max(f64::MIN_POSITIVE);
        (x, kx, b, c) = (xn, kxn, bn, cn);
        err = e;
        if gain < opts.sweep_tol {
            break;
        }
    }
    (x, kx, b, c)
}

/// Engineering strain field `B · u` of a separated displacement.
pub fn strain_field(mesh: &Mesh, displacement: &SeparatedField) -> Result<SeparatedField> {
    if displacement.rows() != mesh.dof_count() {
        return Err(Error::shape(mesh.dof_count(), displacement.rows(), "displacement rows"));
    }
    let op = strain_operator(mesh);
    let spatial = if displacement.rank() == 0 {
        DMatrix::zeros(op.nrows(), 0)
    } else {
        &op * &displacement.spatial
    };
    SeparatedField::new(spatial, displacement.micro.clone(), displacement.macro_.clone(), 3)
}

/// Relative equilibrium residual `‖K_ff u_f − (f_f − K_fp u_p)‖` summed over
/// every instant, computed instant by instant from the dense fields.
pub fn equilibrium_residual(
    system: &ConstrainedSystem,
    rhs: &SeparatedRhs,
    lift: &DirichletLift,
    displacement: &SeparatedField,
) -> Result<f64> {
    let combined = rhs.combined();
    let nt = combined.n_micro() * combined.n_macro();
    let free = system.free_dofs();
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..nt {
        let u = displacement.instant(j);
        let p = lift.values(j);
        let f = system.constrained_rhs(&combined.instant(j), &p)?;
        let uf = DVector::from_iterator(free.len(), free.iter().map(|&d| u[d]));
        let r = system.free_stiffness() * &uf - &f;
        num += r.norm_squared();
        den += f.norm_squared();
    }
    Ok(if den == 0.0 { num.sqrt() } else { (num / den).sqrt() })
}
