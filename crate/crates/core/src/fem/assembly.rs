//! Global operators: stiffness, plastic force, external force, strain.
//!
//! Gauss-point fields use three entries per point. Total strains are stored
//! in engineering order (ε11, ε22, γ12); plastic strains in tensor order
//! (ε11, ε12, ε22) with ε33 = −(ε11 + ε22) implied by plastic incompressibility.

use nalgebra::{DVector, Vector3};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rayon::prelude::*;

use super::element::{ElementMatrix, ElementVector, GAUSS_PER_ELEMENT};
use super::material::Material;
use super::mesh::Mesh;
use crate::error::{Error, Result};

/// Components stored per Gauss point.
pub const COMPONENTS: usize = 3;

pub fn element_stiffness(mesh: &Mesh, material: &Material, element: usize) -> ElementMatrix {
    let d = material.plane_strain_matrix();
    let mut ke = ElementMatrix::zeros();
    for g in mesh.element_gauss(element) {
        ke += g.b.transpose() * d * g.b * g.weight;
    }
    ke
}

/// Global stiffness `k(u, v) = ∫ ε(v) : C : ε(u)`, unconstrained.
///
/// Element matrices are computed in parallel and scattered in element order,
/// so the result is deterministic.
pub fn assemble_stiffness(mesh: &Mesh, material: &Material) -> Result<CsrMatrix<f64>> {
    material.validate()?;
    let n = mesh.dof_count();
    let blocks: Vec<ElementMatrix> = (0..mesh.element_count())
        .into_par_iter()
        .map(|e| element_stiffness(mesh, material, e))
        .collect();
    let mut coo = CooMatrix::new(n, n);
    for (e, ke) in blocks.iter().enumerate() {
        let dofs = mesh.element_dofs(e);
        for (a, &i) in dofs.iter().enumerate() {
            for (b, &j) in dofs.iter().enumerate() {
                // average of the pair keeps the assembled matrix exactly symmetric
                coo.push(i, j, 0.5 * (ke[(a, b)] + ke[(b, a)]));
            }
        }
    }
    Ok(CsrMatrix::from(&coo))
}

/// In-plane stress (σ11, σ22, σ12) produced by a plastic strain through C.
pub fn plastic_stress(material: &Material, eps_p: [f64; 3]) -> Vector3<f64> {
    let lambda = material.lame_lambda();
    let mu = material.shear_modulus();
    let [e11, e12, e22] = eps_p;
    let e33 = -(e11 + e22);
    let tr = e11 + e22 + e33;
    Vector3::new(lambda * tr + 2.0 * mu * e11, lambda * tr + 2.0 * mu * e22, 2.0 * mu * e12)
}

/// Plastic force `f^p(v) = ∫ ε(v) : C : ε^p` for one time instant.
pub fn assemble_plastic_force(mesh: &Mesh, material: &Material, eps_p: &[f64]) -> Result<DVector<f64>> {
    let expected = COMPONENTS * mesh.gauss_count();
    if eps_p.len() != expected {
        return Err(Error::shape(expected, eps_p.len(), "plastic strain quadrature layout"));
    }
    let mut f = DVector::zeros(mesh.dof_count());
    for e in 0..mesh.element_count() {
        let mut fe = ElementVector::zeros();
        for (q, g) in mesh.element_gauss(e).iter().enumerate() {
            let gp = GAUSS_PER_ELEMENT * e + q;
            let s = plastic_stress(material, [eps_p[3 * gp], eps_p[3 * gp + 1], eps_p[3 * gp + 2]]);
            fe += g.b.transpose() * s * g.weight;
        }
        for (a, dof) in mesh.element_dofs(e).into_iter().enumerate() {
            f[dof] += fe[a];
        }
    }
    Ok(f)
}

/// Sparse operator `A` with `assemble_plastic_force(ε^p) = A·ε^p`.
pub fn plastic_force_operator(mesh: &Mesh, material: &Material) -> CsrMatrix<f64> {
    let mu = material.shear_modulus();
    // stress per unit plastic component (ε11, ε12, ε22); traceless, so λ drops out
    let sigma_of = [
        Vector3::new(2.0 * mu, 0.0, 0.0),
        Vector3::new(0.0, 0.0, 2.0 * mu),
        Vector3::new(0.0, 2.0 * mu, 0.0),
    ];
    let mut coo = CooMatrix::new(mesh.dof_count(), COMPONENTS * mesh.gauss_count());
    for e in 0..mesh.element_count() {
        let dofs = mesh.element_dofs(e);
        for (q, g) in mesh.element_gauss(e).iter().enumerate() {
            let gp = GAUSS_PER_ELEMENT * e + q;
            for (c, s) in sigma_of.iter().enumerate() {
                let col = g.b.transpose() * s * g.weight;
                for (a, &dof) in dofs.iter().enumerate() {
                    if col[a] != 0.0 {
                        coo.push(dof, 3 * gp + c, col[a]);
                    }
                }
            }
        }
    }
    CsrMatrix::from(&coo)
}

/// Sparse strain operator `B` with `evaluate_strain(u) = B·u`.
pub fn strain_operator(mesh: &Mesh) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(COMPONENTS * mesh.gauss_count(), mesh.dof_count());
    for e in 0..mesh.element_count() {
        let dofs = mesh.element_dofs(e);
        for (q, g) in mesh.element_gauss(e).iter().enumerate() {
            let gp = GAUSS_PER_ELEMENT * e + q;
            for c in 0..COMPONENTS {
                for (a, &dof) in dofs.iter().enumerate() {
                    let v = g.b[(c, a)];
                    if v != 0.0 {
                        coo.push(3 * gp + c, dof, v);
                    }
                }
            }
        }
    }
    CsrMatrix::from(&coo)
}

/// Engineering strains (ε11, ε22, γ12) at every Gauss point.
pub fn evaluate_strain(mesh: &Mesh, u: &DVector<f64>) -> Result<DVector<f64>> {
    if u.len() != mesh.dof_count() {
        return Err(Error::shape(mesh.dof_count(), u.len(), "displacement vector"));
    }
    let mut eps = DVector::zeros(COMPONENTS * mesh.gauss_count());
    for e in 0..mesh.element_count() {
        let dofs = mesh.element_dofs(e);
        let ue = ElementVector::from_fn(|a, _| u[dofs[a]]);
        for (q, g) in mesh.element_gauss(e).iter().enumerate() {
            let gp = GAUSS_PER_ELEMENT * e + q;
            let s = g.b * ue;
            eps.fixed_rows_mut::<3>(3 * gp).copy_from(&s);
        }
    }
    Ok(eps)
}

/// Neumann load vector for a unit waveform value.
pub fn assemble_traction_force(mesh: &Mesh) -> DVector<f64> {
    let mut f = DVector::zeros(mesh.dof_count());
    let nodes = mesh.nodes();
    for edge in mesh.neumann() {
        let [a, b] = edge.nodes;
        let len = ((nodes[b][0] - nodes[a][0]).powi(2) + (nodes[b][1] - nodes[a][1]).powi(2)).sqrt();
        for c in 0..2 {
            if edge.mask[c] {
                // linear edge interpolation, constant traction: half to each end
                f[2 * a + c] += 0.5 * len * edge.traction[c];
                f[2 * b + c] += 0.5 * len * edge.traction[c];
            }
        }
    }
    f
}

/// Consistent load vector of a uniform body force density (N/mm³).
pub fn assemble_body_force(mesh: &Mesh, body: [f64; 2]) -> DVector<f64> {
    let mut f = DVector::zeros(mesh.dof_count());
    if body == [0.0, 0.0] {
        return f;
    }
    for (e, conn) in mesh.elements().iter().enumerate() {
        for g in mesh.element_gauss(e) {
            for (a, &node) in conn.iter().enumerate() {
                f[2 * node] += g.shape[a] * body[0] * g.weight;
                f[2 * node + 1] += g.shape[a] * body[1] * g.weight;
            }
        }
    }
    f
}

/// Area weight of every Gauss point.
pub fn gauss_weights(mesh: &Mesh) -> Vec<f64> {
    mesh.gauss_points().iter().map(|g| g.weight).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::Mesh;

    fn unit_square() -> Mesh {
        Mesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![[0, 1, 2, 3]],
            vec![],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn unit_square_matches_closed_form_stiffness() {
        // closed-form bilinear-quad stiffness for E = 1, ν = 0, unit thickness
        let k = [0.5, 0.125, -0.25, -0.125, -0.25, -0.125, 0.0, 0.125];
        let pattern = [
            [0, 1, 2, 3, 4, 5, 6, 7],
            [1, 0, 7, 6, 5, 4, 3, 2],
            [2, 7, 0, 5, 6, 3, 4, 1],
            [3, 6, 5, 0, 7, 2, 1, 4],
            [4, 5, 6, 7, 0, 1, 2, 3],
            [5, 4, 3, 2, 1, 0, 7, 6],
            [6, 3, 4, 1, 2, 7, 0, 5],
            [7, 2, 1, 4, 3, 6, 5, 0],
        ];
        let mat = Material::new(1.0, 0.0, 1.0, 0.0).unwrap();
        let kg = nalgebra::DMatrix::from(&assemble_stiffness(&unit_square(), &mat).unwrap());
        for i in 0..8 {
            for j in 0..8 {
                assert!((kg[(i, j)] - k[pattern[i][j]]).abs() < 1e-14, "({i},{j})");
            }
            let row_sum: f64 = (0..8).map(|j| kg[(i, j)]).sum();
            assert!(row_sum.abs() < 1e-14);
        }
    }

    #[test]
    fn zero_plastic_strain_gives_zero_force() {
        let mesh = unit_square();
        let f = assemble_plastic_force(&mesh, &Material::steel(), &[0.0; 12]).unwrap();
        assert_eq!(f.amax(), 0.0);
    }

    #[test]
    fn plastic_force_is_linear() {
        let mesh = Mesh::rectangular_bar(4.0, 2.0, 2, 1).unwrap();
        let mat = Material::steel();
        let eps: Vec<f64> = (0..3 * mesh.gauss_count()).map(|i| ((i * 7 % 11) as f64 - 5.0) * 1e-4).collect();
        let scaled: Vec<f64> = eps.iter().map(|v| 2.5 * v).collect();
        let f1 = assemble_plastic_force(&mesh, &mat, &eps).unwrap();
        let f2 = assemble_plastic_force(&mesh, &mat, &scaled).unwrap();
        assert!((f2 - f1 * 2.5).amax() < 1e-12 * 2.5);
    }

    #[test]
    fn constant_plastic_strain_on_one_element_matches_hand_quadrature() {
        // For a constant ε^p on the unit square, ∫ Bᵀ σ^p = Σ_a n_a σ^p over edges,
        // i.e. node a receives σ^p · (∫ ∇N_a) with ∫ ∇N_a = ½ (±1, ±1).
        let mesh = unit_square();
        let mat = Material::steel();
        let ep = [2e-3, -0.7e-3, -1.1e-3];
        let mut field = vec![0.0; 12];
        for g in 0..4 {
            field[3 * g..3 * g + 3].copy_from_slice(&ep);
        }
        let f = assemble_plastic_force(&mesh, &mat, &field).unwrap();
        let mu = mat.shear_modulus();
        let (s11, s22, s12) = (2.0 * mu * ep[0], 2.0 * mu * ep[2], 2.0 * mu * ep[1]);
        let grads = [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)];
        for (a, (gx, gy)) in grads.iter().enumerate() {
            let fx = s11 * gx + s12 * gy;
            let fy = s12 * gx + s22 * gy;
            assert!((f[2 * a] - fx).abs() < 1e-9, "node {a} x");
            assert!((f[2 * a + 1] - fy).abs() < 1e-9, "node {a} y");
        }
    }

    #[test]
    fn plastic_operator_matches_direct_assembly() {
        let mesh = Mesh::rectangular_bar(4.0, 2.0, 3, 2).unwrap();
        let mat = Material::steel();
        let eps: Vec<f64> = (0..3 * mesh.gauss_count()).map(|i| (i as f64).sin() * 1e-3).collect();
        let direct = assemble_plastic_force(&mesh, &mat, &eps).unwrap();
        let via_op = &plastic_force_operator(&mesh, &mat) * &DVector::from_vec(eps);
        assert!((direct - via_op).amax() < 1e-9);
    }

    #[test]
    fn strain_of_rigid_translation_vanishes() {
        let mesh = Mesh::rectangular_bar(4.0, 2.0, 3, 2).unwrap();
        let u = DVector::from_fn(mesh.dof_count(), |i, _| if i % 2 == 0 { 0.3 } else { -1.2 });
        assert!(evaluate_strain(&mesh, &u).unwrap().amax() < 1e-14);
    }

    #[test]
    fn strain_reproduces_affine_field() {
        let mesh = Mesh::rectangular_bar(4.0, 2.0, 3, 2).unwrap();
        let mut u = DVector::zeros(mesh.dof_count());
        for (n, p) in mesh.nodes().iter().enumerate() {
            u[2 * n] = p[0];
        }
        let eps = evaluate_strain(&mesh, &u).unwrap();
        for g in 0..mesh.gauss_count() {
            assert!((eps[3 * g] - 1.0).abs() < 1e-13);
            assert!(eps[3 * g + 1].abs() < 1e-13);
            assert!(eps[3 * g + 2].abs() < 1e-13);
        }
    }

    #[test]
    fn strain_shape_mismatch_is_reported() {
        let mesh = unit_square();
        let err = evaluate_strain(&mesh, &DVector::zeros(3)).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn body_force_integrates_to_total_load() {
        let mesh = Mesh::rectangular_bar(4.0, 2.0, 3, 2).unwrap();
        let f = assemble_body_force(&mesh, [0.0, -2.0]);
        let total_y: f64 = (0..mesh.node_count()).map(|n| f[2 * n + 1]).sum();
        assert!((total_y + 2.0 * mesh.area()).abs() < 1e-12);
    }
}
