//! J2 return mapping with linear isotropic hardening in plane strain.

use crate::error::{Error, Result};
use crate::fem::Material;

/// Plastic state of a single Gauss point.
///
/// `eps_p` holds the tensor components (ε11, ε12, ε22); ε33 = −(ε11 + ε22).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointState {
    pub eps_p: [f64; 3],
    pub eps_bar_p: f64,
}

/// Outcome of one backward-Euler step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnMap {
    pub state: PointState,
    /// Stress (σ11, σ22, σ33, σ12) in MPa.
    pub stress: [f64; 4],
    /// Plastic multiplier Δγ, equal to the increment of ε̄^p.
    pub delta_gamma: f64,
    /// Yield function at the returned stress.
    pub yield_value: f64,
    /// Von Mises stress of the elastic trial state.
    pub trial_von_mises: f64,
}

impl ReturnMap {
    pub fn is_plastic(&self) -> bool {
        self.delta_gamma > 0.0
    }
}

/// Von Mises equivalent stress of (σ11, σ22, σ33, σ12).
pub fn von_mises(stress: &[f64; 4]) -> f64 {
    let p = (stress[0] + stress[1] + stress[2]) / 3.0;
    let s = [stress[0] - p, stress[1] - p, stress[2] - p];
    (1.5 * (s[0] * s[0] + s[1] * s[1] + s[2] * s[2] + 2.0 * stress[3] * stress[3])).sqrt()
}

/// Elastic stress C : (ε − ε^p) for an engineering total strain (ε11, ε22, γ12).
pub fn elastic_stress(strain: [f64; 3], eps_p: [f64; 3], material: &Material) -> [f64; 4] {
    let lambda = material.lame_lambda();
    let mu = material.shear_modulus();
    let [p11, p12, p22] = eps_p;
    let e = [strain[0] - p11, strain[1] - p22, p11 + p22, 0.5 * strain[2] - p12];
    let tr = e[0] + e[1] + e[2];
    [
        lambda * tr + 2.0 * mu * e[0],
        lambda * tr + 2.0 * mu * e[1],
        lambda * tr + 2.0 * mu * e[2],
        2.0 * mu * e[3],
    ]
}

/// Elastic predictor followed by radial return onto the hardened yield surface.
///
/// Δγ = (q_trial − σ_y(ε̄^p)) / (3G + H) when the trial state is outside the
/// surface by more than `1e-8·σ_y0`.
pub fn return_map_point(strain: [f64; 3], state: PointState, material: &Material) -> Result<ReturnMap> {
    let finite = strain.iter().chain(state.eps_p.iter()).all(|v| v.is_finite()) && state.eps_bar_p.is_finite();
    if !finite {
        return Err(Error::Numeric(format!(
            "non-finite input to return mapping: strain {strain:?}, state {state:?}"
        )));
    }
    let mu = material.shear_modulus();
    let h = material.hardening_modulus;
    let trial = elastic_stress(strain, state.eps_p, material);
    let p = (trial[0] + trial[1] + trial[2]) / 3.0;
    let s = [trial[0] - p, trial[1] - p, trial[2] - p, trial[3]];
    let q = (1.5 * (s[0] * s[0] + s[1] * s[1] + s[2] * s[2] + 2.0 * s[3] * s[3])).sqrt();
    let f_trial = q - material.yield_stress(state.eps_bar_p);

    if f_trial <= material.yield_tolerance() {
        return Ok(ReturnMap {
            state,
            stress: trial,
            delta_gamma: 0.0,
            yield_value: f_trial,
            trial_von_mises: q,
        });
    }

    let dg = f_trial / (3.0 * mu + h);
    // flow direction N = (3/2) s / q, so that sqrt(2/3 Δε^p : Δε^p) = Δγ
    let k = 1.5 * dg / q;
    let [p11, p12, p22] = state.eps_p;
    let eps_p = [p11 + k * s[0], p12 + k * s[3], p22 + k * s[1]];
    let scale = 2.0 * mu * k;
    let stress = [
        trial[0] - scale * s[0],
        trial[1] - scale * s[1],
        trial[2] - scale * s[2],
        trial[3] - scale * s[3],
    ];
    let eps_bar_p = state.eps_bar_p + dg;
    Ok(ReturnMap {
        state: PointState { eps_p, eps_bar_p },
        stress,
        delta_gamma: dg,
        yield_value: von_mises(&stress) - material.yield_stress(eps_bar_p),
        trial_von_mises: q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shear_strain_for(q: f64, mat: &Material) -> [f64; 3] {
        // pure shear: σ12 = G γ and q = √3 |σ12|
        [0.0, 0.0, q / (3f64.sqrt() * mat.shear_modulus())]
    }

    #[test]
    fn trial_inside_yield_surface_is_elastic() {
        let mat = Material::steel();
        let out = return_map_point(shear_strain_for(100.0, &mat), PointState::default(), &mat).unwrap();
        assert_eq!(out.delta_gamma, 0.0);
        assert_eq!(out.state, PointState::default());
        assert!((out.trial_von_mises - 100.0).abs() < 1e-9);
    }

    #[test]
    fn deviatoric_trial_gives_closed_form_multiplier() {
        let mat = Material::steel();
        let out = return_map_point(shear_strain_for(300.0, &mat), PointState::default(), &mat).unwrap();
        let g = mat.shear_modulus();
        let expected = (300.0 - 205.0) / (3.0 * g + 2000.0);
        assert!((out.delta_gamma - expected).abs() < 1e-15);
        assert!(out.yield_value.abs() <= mat.yield_tolerance());
        assert!((von_mises(&out.stress) - mat.yield_stress(out.state.eps_bar_p)).abs() < 1e-8);
    }

    #[test]
    fn returned_stress_equals_hooke_with_implied_out_of_plane_strain() {
        // σ must equal C : (ε − ε^p) with ε^p_33 = −(ε^p_11 + ε^p_22)
        let mat = Material::steel();
        let strain = [3e-3, -1e-3, 2.5e-3];
        let out = return_map_point(strain, PointState::default(), &mat).unwrap();
        assert!(out.is_plastic());
        let direct = elastic_stress(strain, out.state.eps_p, &mat);
        for i in 0..4 {
            assert!((direct[i] - out.stress[i]).abs() < 1e-9, "component {i}");
        }
    }

    #[test]
    fn non_finite_strain_is_rejected() {
        let mat = Material::steel();
        let err = return_map_point([f64::NAN, 0.0, 0.0], PointState::default(), &mat).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
    }

    #[test]
    fn elastic_unloading_keeps_plastic_state() {
        let mat = Material::steel();
        let loaded = return_map_point([4e-3, 0.0, 0.0], PointState::default(), &mat).unwrap();
        assert!(loaded.is_plastic());
        let unloaded = return_map_point([3e-3, 0.0, 0.0], loaded.state, &mat).unwrap();
        assert_eq!(unloaded.delta_gamma, 0.0);
        assert_eq!(unloaded.state, loaded.state);
    }
}
