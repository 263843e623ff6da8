//! Two-dimensional bilinear finite elements in plane strain.

mod assembly;
pub mod element;
mod load;
mod material;
mod mesh;
mod solver;

pub use assembly::{
    assemble_body_force, assemble_plastic_force, assemble_stiffness, assemble_traction_force,
    element_stiffness, evaluate_strain, gauss_weights, plastic_force_operator, plastic_stress,
    strain_operator, COMPONENTS,
};
pub use load::{LoadProgram, Waveform};
pub use material::Material;
pub use mesh::{DirichletNode, DogBone, Mesh, NeumannEdge};
pub use solver::{solve_elastic, ConstrainedSystem, DirichletBc, LinearSolverKind};
