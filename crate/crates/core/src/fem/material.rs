use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Isotropic elasto-plastic material with linear isotropic hardening.
///
/// Units follow the rest of the crate: stresses and moduli in MPa.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub young_modulus: f64,
    pub poisson_ratio: f64,
    pub yield_stress_initial: f64,
    pub hardening_modulus: f64,
}

impl Material {
    pub fn new(
        young_modulus: f64,
        poisson_ratio: f64,
        yield_stress_initial: f64,
        hardening_modulus: f64,
    ) -> Result<Self> {
        let m = Material {
            young_modulus,
            poisson_ratio,
            yield_stress_initial,
            hardening_modulus,
        };
        m.validate()?;
        Ok(m)
    }

    /// Structural steel of the dog-bone specimen: E = 210 GPa, ν = 0.3,
    /// σ_y0 = 205 MPa, H = 2 GPa.
    pub fn steel() -> Self {
        Material {
            young_modulus: 210_000.0,
            poisson_ratio: 0.3,
            yield_stress_initial: 205.0,
            hardening_modulus: 2_000.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.young_modulus,
            self.poisson_ratio,
            self.yield_stress_initial,
            self.hardening_modulus,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Argument("material constants must be finite".into()));
        }
        if self.young_modulus <= 0.0 {
            return Err(Error::Argument("Young modulus must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.poisson_ratio) {
            return Err(Error::Argument("Poisson ratio must lie in [0, 0.5)".into()));
        }
        if self.yield_stress_initial <= 0.0 {
            return Err(Error::Argument("initial yield stress must be positive".into()));
        }
        if self.hardening_modulus < 0.0 {
            return Err(Error::Argument("hardening modulus must be non-negative".into()));
        }
        Ok(())
    }

    pub fn shear_modulus(&self) -> f64 {
        self.young_modulus / (2.0 * (1.0 + self.poisson_ratio))
    }

    pub fn lame_lambda(&self) -> f64 {
        let (e, nu) = (self.young_modulus, self.poisson_ratio);
        e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    }

    pub fn bulk_modulus(&self) -> f64 {
        self.young_modulus / (3.0 * (1.0 - 2.0 * self.poisson_ratio))
    }

    /// Plane-strain elasticity matrix acting on engineering strains (ε11, ε22, γ12).
    pub fn plane_strain_matrix(&self) -> Matrix3<f64> {
        let lambda = self.lame_lambda();
        let mu = self.shear_modulus();
        Matrix3::new(
            lambda + 2.0 * mu,
            lambda,
            0.0,
            lambda,
            lambda + 2.0 * mu,
            0.0,
            0.0,
            0.0,
            mu,
        )
    }

    /// Current yield stress for a given accumulated plastic strain.
    pub fn yield_stress(&self, eps_bar_p: f64) -> f64 {
        self.yield_stress_initial + self.hardening_modulus * eps_bar_p
    }

    /// Absolute tolerance on the yield function, 1e-8·σ_y0.
    pub fn yield_tolerance(&self) -> f64 {
        1e-8 * self.yield_stress_initial
    }
}

impl Default for Material {
    fn default() -> Self {
        Material::steel()
    }
}
