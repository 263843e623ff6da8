//! Builds the bar and dog-bone meshes and writes them in the text format.
//!
//! `cargo run --example generate_mesh -- out_dir`

use std::path::PathBuf;

use mtpgd::fem::{DogBone, Mesh};

fn main() -> mtpgd::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "meshes".into()));
    std::fs::create_dir_all(&dir)?;
    for (name, mesh) in [
        ("bar.mesh", Mesh::rectangular_bar(100.0, 10.0, 10, 5)?),
        ("dog_bone.mesh", Mesh::dog_bone(&DogBone::default())?),
    ] {
        let path = dir.join(name);
        mesh.write(&path)?;
        let back = Mesh::read(&path)?;
        println!(
            "{}: {} nodes, {} elements, {} Gauss points, area {:.2} mm²",
            path.display(),
            back.node_count(),
            back.element_count(),
            back.gauss_count(),
            back.area()
        );
    }
    Ok(())
}
