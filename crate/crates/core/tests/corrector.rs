use mtpgd::corrector::{
    build_galerkin_system, correct_enrich, correct_update, fit_macro_modes, predict_nonlinear, prediction_error,
    GalerkinSystem, ReferenceSet,
};
use mtpgd::hodmd::HodmdOptions;
use mtpgd::separated::{SeparatedField, TimeGrid};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

#[test]
fn galerkin_terms_match_direct_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let grid = TimeGrid::new(7, 5, 2.0).unwrap();
    let np = 4 * 3;
    let predictor = SeparatedField::new(random(&mut rng, 3 * np, 2), random(&mut rng, 7, 2), random(&mut rng, 5, 2), 3).unwrap();
    let reference = ReferenceSet::from_elements(vec![2, 0]);
    let weights: Vec<f64> = (0..np).map(|_| rng.gen_range(0.5..2.0)).collect();
    let rows = reference.rows();
    let truth = random(&mut rng, rows.len(), grid.total());
    let sys = build_galerkin_system(&predictor, &reference, &weights, &truth, &grid).unwrap();

    let dt = grid.dt_micro;
    let w: Vec<f64> = reference.points.iter().flat_map(|&p| [weights[p]; 3]).collect();
    let pred = predictor.to_dense();
    let (nt, m) = (grid.n_micro, 2);
    for k in 0..m {
        for l in 0..m {
            let mut a = 0.0;
            for (r, &row) in rows.iter().enumerate() {
                for i in 0..nt {
                    a += w[r] * dt * predictor.spatial[(row, k)] * predictor.spatial[(row, l)]
                        * predictor.micro[(i, k)] * predictor.micro[(i, l)];
                }
            }
            assert!((sys.a[(k, l)] - a).abs() <= 1e-10 * a.abs().max(1.0));
        }
        for big in 0..grid.n_macro {
            let mut b = 0.0;
            for (r, &row) in rows.iter().enumerate() {
                for i in 0..nt {
                    let j = big * nt + i;
                    b += w[r] * dt * (truth[(r, j)] - pred[(row, j)]) * predictor.spatial[(row, k)] * predictor.micro[(i, k)];
                }
            }
            assert!((sys.b[(big, k)] - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
    }
}

#[test]
fn update_matches_dense_solve_per_node() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let q = random(&mut rng, 4, 4);
    let a = &q * q.transpose() + DMatrix::identity(4, 4);
    let b = random(&mut rng, 9, 4);
    let u = correct_update(&GalerkinSystem { a: a.clone(), b: b.clone() }).unwrap();
    for big in 0..9 {
        let x = a.clone().lu().solve(&b.row(big).transpose()).unwrap();
        assert!((u.delta.row(big).transpose() - x).amax() <= 1e-12);
    }
}

#[test]
fn separable_residual_is_recovered_by_one_triad() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let grid = TimeGrid::new(8, 6, 1.0).unwrap();
    let f = SeparatedField::new(random(&mut rng, 24, 1), random(&mut rng, 8, 1), random(&mut rng, 6, 1), 3).unwrap();
    let residual = f.to_dense();
    let d = correct_enrich(&residual, &vec![1.0; 24], &grid, 1e-8, 5).unwrap();
    assert_eq!(d.field.rank(), 1);
    assert!(d.relative_error() <= 1e-8);
}

#[test]
fn enrichment_residual_decays_over_three_triads() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let grid = TimeGrid::new(8, 6, 1.0).unwrap();
    let f = SeparatedField::new(random(&mut rng, 24, 3), random(&mut rng, 8, 3), random(&mut rng, 6, 3), 3).unwrap();
    let d = correct_enrich(&f.to_dense(), &vec![1.0; 24], &grid, 1e-14, 3).unwrap();
    assert_eq!(d.residual_history.len(), 4);
    for w in d.residual_history.windows(2) {
        assert!(w[1] < w[0]);
    }
}

#[test]
fn recurrent_macro_dynamics_are_predicted_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let (k, n) = (20, 50);
    let spatial = random(&mut rng, 12, 2);
    let micro = random(&mut rng, 10, 2);
    let macro_all = DMatrix::from_fn(n, 2, |j, c| match c {
        0 => 1.0 + 0.5 * 0.9f64.powi(j as i32),
        _ => 0.98f64.powi(j as i32) * (0.4 * j as f64).cos(),
    });
    let training = SeparatedField::new(spatial.clone(), micro.clone(), macro_all.rows(0, k).into_owned(), 3).unwrap();
    let truth = SeparatedField::new(spatial, micro, macro_all.rows(k, n - k).into_owned(), 3).unwrap();
    let opts = HodmdOptions {
        lag: 4,
        ..Default::default()
    };
    let models = fit_macro_modes(&training, &opts).unwrap();
    let predicted = predict_nonlinear(&training, &models, n - k).unwrap();
    assert!(prediction_error(&predicted.to_dense(), &truth.to_dense(), None).unwrap() <= 1e-8);
}

#[test]
fn prediction_error_limits() {
    let mut rng = ChaCha8Rng::seed_from_u64(46);
    let truth = random(&mut rng, 6, 10);
    assert_eq!(prediction_error(&truth, &truth, None).unwrap(), 0.0);
    let zero = DMatrix::zeros(6, 10);
    assert!((prediction_error(&zero, &truth, Some(&[1.0, 2.0, 3.0, 1.0, 1.0, 1.0])).unwrap() - 1.0).abs() < 1e-15);
}
