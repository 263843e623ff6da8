mod common;

use common::*;
use mtpgd::fem::Material;
use mtpgd::plasticity::{integrate_history, return_map_point, PlasticState, PointState};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Engineering strain whose trial stress is purely deviatoric with von Mises value `q`.
fn shear_strain_for(q: f64, m: &Material) -> [f64; 3] {
    [0.0, 0.0, q / (3f64.sqrt() * m.shear_modulus())]
}

#[test]
fn closed_form_multiplier_agrees_with_substepped_oracle() {
    let m = Material::steel();
    let strain = shear_strain_for(300.0, &m);
    let r = return_map_point(strain, PointState::default(), &m).unwrap();
    let closed = (300.0 - m.yield_stress_initial) / (3.0 * m.shear_modulus() + m.hardening_modulus);
    assert!((r.trial_von_mises - 300.0).abs() < 1e-9);
    assert!((r.delta_gamma - closed).abs() <= 1e-12 * closed);
    let oracle = explicit_step(&RateState::default(), strain, 1000, &m);
    assert!((oracle.eps_bar - closed).abs() <= 1e-6 * closed);
}

#[test]
fn shear_ramp_follows_bilinear_curve() {
    let m = Material::steel();
    let g = m.shear_modulus();
    let gamma_y = m.yield_stress_initial / (3f64.sqrt() * g);
    let mut state = PointState::default();
    let steps = 40;
    for k in 1..=steps {
        let gamma = 3.0 * gamma_y * k as f64 / steps as f64;
        let r = return_map_point([0.0, 0.0, gamma], state, &m).unwrap();
        state = r.state;
        let tangent = g * m.hardening_modulus / (3.0 * g + m.hardening_modulus);
        let expected = if gamma <= gamma_y {
            g * gamma
        } else {
            g * gamma_y + tangent * (gamma - gamma_y)
        };
        assert!((r.stress[3] - expected).abs() <= 1e-9 * expected, "step {k}");
    }
}

#[test]
fn chained_calls_equal_sequential_integration() {
    let m = Material::steel();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let path = random_path(&mut rng, 10, 1.5e-3);
    let mut strain = [0.0; 3];
    let mut cols = Vec::new();
    for d in &path {
        for i in 0..3 {
            strain[i] += d[i];
        }
        cols.push(strain);
    }
    let history = DMatrix::from_fn(3, 10, |r, j| cols[j][r]);
    let integrated = integrate_history(&m, &history, &PlasticState::zeros(1)).unwrap();
    let mut state = PointState::default();
    for (j, s) in cols.iter().enumerate() {
        state = return_map_point(*s, state, &m).unwrap().state;
        assert_eq!(integrated.eps_bar[(0, j)], state.eps_bar_p);
    }
    assert_eq!(integrated.final_state.point(0), state);
    assert_eq!(integrated.evaluations, 10);
}

proptest! {
    #[test]
    fn return_map_satisfies_kkt(
        e in prop::array::uniform3(-5e-3f64..5e-3),
        ep in prop::array::uniform3(-1e-3f64..1e-3),
        eps_bar in 0.0f64..1e-2,
    ) {
        let m = Material::steel();
        let r = return_map_point(e, PointState { eps_p: ep, eps_bar_p: eps_bar }, &m).unwrap();
        prop_assert!(r.delta_gamma >= 0.0);
        prop_assert!(r.yield_value <= 1e-8 * m.yield_stress_initial);
        prop_assert!((r.state.eps_bar_p - eps_bar - r.delta_gamma).abs() <= 1e-15);
        if r.delta_gamma > 0.0 {
            prop_assert!(r.yield_value.abs() <= 1e-8 * m.yield_stress_initial);
        }
    }

    #[test]
    fn equivalent_plastic_strain_never_decreases(seed in any::<u64>()) {
        let m = Material::steel();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut strain = [0.0; 3];
        let mut state = PointState::default();
        for _ in 0..20 {
            for s in strain.iter_mut() {
                *s += rng.gen_range(-1e-3..1e-3);
            }
            let next = return_map_point(strain, state, &m).unwrap().state;
            prop_assert!(next.eps_bar_p >= state.eps_bar_p);
            state = next;
        }
    }
}
