//! Radial return at one material point along a strain cycle in pure shear.

use mtpgd::fem::Material;
use mtpgd::plasticity::{return_map_point, PointState};

fn main() -> mtpgd::Result<()> {
    let m = Material::steel();
    let gamma_y = m.yield_stress_initial / (3f64.sqrt() * m.shear_modulus());
    let mut state = PointState::default();
    println!("{:>10} {:>10} {:>12} {:>12}", "gamma/gy", "tau", "eps_bar_p", "f");
    let steps = 24;
    for k in 0..=steps {
        // 0 → 3γy → −3γy → 0
        let s = k as f64 / steps as f64;
        let phase = if s < 0.25 { 4.0 * s } else if s < 0.75 { 2.0 - 4.0 * s } else { 4.0 * s - 4.0 };
        let gamma = 3.0 * gamma_y * phase;
        let r = return_map_point([0.0, 0.0, gamma], state, &m)?;
        state = r.state;
        println!(
            "{:>10.3} {:>10.2} {:>12.4e} {:>12.2e}",
            gamma / gamma_y,
            r.stress[3],
            state.eps_bar_p,
            r.yield_value
        );
    }
    Ok(())
}
