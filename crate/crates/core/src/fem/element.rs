//! Bilinear quadrilateral with 2×2 Gauss quadrature.
//!
//! Local node order is counter-clockwise: (−1,−1), (1,−1), (1,1), (−1,1).
//! Element dofs are interleaved `[u0x, u0y, u1x, u1y, ...]`.

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};

pub const NODES_PER_ELEMENT: usize = 4;
pub const GAUSS_PER_ELEMENT: usize = 4;
pub const ELEMENT_DOFS: usize = 8;

/// Strain-displacement matrix for engineering strains (ε11, ε22, γ12).
pub type BMatrix = SMatrix<f64, 3, ELEMENT_DOFS>;
pub type ElementMatrix = SMatrix<f64, ELEMENT_DOFS, ELEMENT_DOFS>;
pub type ElementVector = SVector<f64, ELEMENT_DOFS>;

const NODE_SIGNS: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];

/// Gauss point natural coordinates, same counter-clockwise order as the nodes.
pub fn gauss_points() -> [(f64, f64); GAUSS_PER_ELEMENT] {
    let g = 1.0 / 3f64.sqrt();
    [(-g, -g), (g, -g), (g, g), (-g, g)]
}

pub fn shape_functions(xi: f64, eta: f64) -> [f64; 4] {
    NODE_SIGNS.map(|(sx, sy)| 0.25 * (1.0 + sx * xi) * (1.0 + sy * eta))
}

/// Derivatives `[dN/dξ, dN/dη]` for each node.
pub fn shape_derivatives(xi: f64, eta: f64) -> [[f64; 2]; 4] {
    NODE_SIGNS.map(|(sx, sy)| [0.25 * sx * (1.0 + sy * eta), 0.25 * sy * (1.0 + sx * xi)])
}

/// Quadrature data at one Gauss point.
#[derive(Debug, Clone, Copy)]
pub struct GaussPoint {
    pub position: [f64; 2],
    pub shape: [f64; 4],
    pub b: BMatrix,
    /// Quadrature weight times Jacobian determinant (unit thickness).
    pub weight: f64,
}

/// Evaluates geometry at a natural point. Fails on a non-positive Jacobian.
pub fn evaluate_at(coords: &[[f64; 2]; 4], xi: f64, eta: f64) -> Result<(BMatrix, f64, [f64; 2])> {
    let dn = shape_derivatives(xi, eta);
    let mut jac = [[0.0; 2]; 2];
    for (a, c) in coords.iter().enumerate() {
        for i in 0..2 {
            jac[0][i] += dn[a][0] * c[i];
            jac[1][i] += dn[a][1] * c[i];
        }
    }
    // jac = [[dx/dξ, dy/dξ], [dx/dη, dy/dη]]
    let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
    if !(det > 0.0) || !det.is_finite() {
        return Err(Error::Geometry(format!(
            "non-positive Jacobian determinant {det:e} at (ξ, η) = ({xi}, {eta})"
        )));
    }
    let inv = [
        [jac[1][1] / det, -jac[0][1] / det],
        [-jac[1][0] / det, jac[0][0] / det],
    ];
    let mut b = BMatrix::zeros();
    let n = shape_functions(xi, eta);
    let mut pos = [0.0; 2];
    for a in 0..4 {
        let dx = inv[0][0] * dn[a][0] + inv[0][1] * dn[a][1];
        let dy = inv[1][0] * dn[a][0] + inv[1][1] * dn[a][1];
        b[(0, 2 * a)] = dx;
        b[(1, 2 * a + 1)] = dy;
        b[(2, 2 * a)] = dy;
        b[(2, 2 * a + 1)] = dx;
        pos[0] += n[a] * coords[a][0];
        pos[1] += n[a] * coords[a][1];
    }
    Ok((b, det, pos))
}

pub fn gauss_data(coords: &[[f64; 2]; 4]) -> Result<[GaussPoint; GAUSS_PER_ELEMENT]> {
    let pts = gauss_points();
    let mut out = [GaussPoint {
        position: [0.0; 2],
        shape: [0.0; 4],
        b: BMatrix::zeros(),
        weight: 0.0,
    }; GAUSS_PER_ELEMENT];
    for (q, &(xi, eta)) in pts.iter().enumerate() {
        let (b, det, position) = evaluate_at(coords, xi, eta)?;
        out[q] = GaussPoint {
            position,
            shape: shape_functions(xi, eta),
            b,
            weight: det,
        };
    }
    Ok(out)
}
