//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use mtpgd::fem::Material;
use nalgebra::Complex;

pub type Complex64 = Complex<f64>;
use rand::Rng;

/// Stress (σ11, σ22, σ33, σ12), plastic strain (11, 22, 33, 12) and ε̄^p.
#[derive(Debug, Clone, Copy, Default)]
pub struct RateState {
    pub stress: [f64; 4],
    pub eps_p: [f64; 4],
    pub eps_bar: f64,
}

fn deviator(s: &[f64; 4]) -> ([f64; 4], f64) {
    let p = (s[0] + s[1] + s[2]) / 3.0;
    let d = [s[0] - p, s[1] - p, s[2] - p, s[3]];
    let q = (1.5 * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2] + 2.0 * d[3] * d[3])).sqrt();
    (d, q)
}

fn yield_value(y: &RateState, m: &Material) -> f64 {
    deviator(&y.stress).1 - (m.yield_stress_initial + m.hardening_modulus * y.eps_bar)
}

/// Elastic stress increment for a tensor strain increment (11, 22, 33, 12).
fn elastic_increment(de: &[f64; 4], m: &Material) -> [f64; 4] {
    let (lambda, mu) = (m.lame_lambda(), m.shear_modulus());
    let tr = de[0] + de[1] + de[2];
    [
        lambda * tr + 2.0 * mu * de[0],
        lambda * tr + 2.0 * mu * de[1],
        lambda * tr + 2.0 * mu * de[2],
        2.0 * mu * de[3],
    ]
}

fn add(y: &RateState, dy: &RateState, scale: f64) -> RateState {
    let mut out = *y;
    for i in 0..4 {
        out.stress[i] += scale * dy.stress[i];
        out.eps_p[i] += scale * dy.eps_p[i];
    }
    out.eps_bar += scale * dy.eps_bar;
    out
}

/// Continuum elasto-plastic rate for a strain increment, assuming the state
/// lies on the yield surface.
fn plastic_rate(y: &RateState, de: &[f64; 4], m: &Material) -> RateState {
    let mu = m.shear_modulus();
    let (s, q) = deviator(&y.stress);
    let s_de = s[0] * de[0] + s[1] * de[1] + s[2] * de[2] + 2.0 * s[3] * de[3];
    let dgamma = if q > 0.0 && s_de > 0.0 {
        3.0 * mu * s_de / q / (3.0 * mu + m.hardening_modulus)
    } else {
        0.0
    };
    let dep: [f64; 4] = std::array::from_fn(|i| if q > 0.0 { dgamma * 1.5 * s[i] / q } else { 0.0 });
    let de_el: [f64; 4] = std::array::from_fn(|i| de[i] - dep[i]);
    RateState {
        stress: elastic_increment(&de_el, m),
        eps_p: dep,
        eps_bar: dgamma,
    }
}

fn elastic_step(y: &RateState, de: &[f64; 4], m: &Material) -> RateState {
    let mut out = *y;
    let ds = elastic_increment(de, m);
    for i in 0..4 {
        out.stress[i] += ds[i];
    }
    out
}

fn heun(y: &RateState, de: &[f64; 4], m: &Material) -> RateState {
    let k1 = plastic_rate(y, de, m);
    let k2 = plastic_rate(&add(y, &k1, 1.0), de, m);
    let mut out = add(y, &k1, 0.5);
    out = add(&out, &k2, 0.5);
    out
}

/// Integrates the rate equations along a linear strain increment with
/// `substeps` explicit second-order substeps; yield onset inside a substep
/// is located by bisection. Engineering increment (ε11, ε22, γ12), plane strain.
pub fn explicit_step(y: &RateState, d_strain: [f64; 3], substeps: usize, m: &Material) -> RateState {
    let h = 1.0 / substeps as f64;
    let de = [d_strain[0] * h, d_strain[1] * h, 0.0, 0.5 * d_strain[2] * h];
    let tol = 1e-9 * m.yield_stress_initial;
    let mut y = *y;
    for _ in 0..substeps {
        let f0 = yield_value(&y, m);
        let trial = elastic_step(&y, &de, m);
        if yield_value(&trial, m) <= tol {
            y = trial;
            continue;
        }
        let alpha = if f0 < -tol {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let part: [f64; 4] = std::array::from_fn(|i| mid * de[i]);
                if yield_value(&elastic_step(&y, &part, m), m) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            lo
        } else {
            0.0
        };
        let first: [f64; 4] = std::array::from_fn(|i| alpha * de[i]);
        let rest: [f64; 4] = std::array::from_fn(|i| (1.0 - alpha) * de[i]);
        y = heun(&elastic_step(&y, &first, m), &rest, m);
    }
    y
}

/// Random strain path of `steps` increments, engineering components.
pub fn random_path<R: Rng>(rng: &mut R, steps: usize, size: f64) -> Vec<[f64; 3]> {
    (0..steps)
        .map(|_| std::array::from_fn(|_| rng.gen_range(-size..size)))
        .collect()
}

/// Series `v_j = Re Σ a_i μ_i^j` of a real recurrence with the given roots
/// (complex roots paired with their conjugates by the caller).
pub fn recurrence_series(roots: &[Complex64], amplitudes: &[Complex64], len: usize) -> Vec<f64> {
    (0..len)
        .map(|j| {
            roots
                .iter()
                .zip(amplitudes)
                .map(|(mu, a)| a * mu.powu(j as u32))
                .sum::<Complex64>()
                .re
        })
        .collect()
}

/// Steps `v_{j+p} = Σ c_i v_{j+i}` forward from the first `p` samples.
pub fn step_recurrence(coeffs: &[f64], start: &[f64], len: usize) -> Vec<f64> {
    let p = coeffs.len();
    let mut v = start[..p].to_vec();
    while v.len() < len {
        let n = v.len();
        v.push((0..p).map(|i| coeffs[i] * v[n - p + i]).sum());
    }
    v
}

/// Coefficients of the monic polynomial with the given (conjugate-closed) roots,
/// as recurrence weights `c_0..c_{p-1}` of `v_{j+p} = Σ c_i v_{j+i}`.
pub fn recurrence_coefficients(roots: &[Complex64]) -> Vec<f64> {
    let mut poly = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); poly.len() + 1];
        for (i, c) in poly.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= c * r;
        }
        poly = next;
    }
    let p = roots.len();
    (0..p).map(|i| -poly[i].re).collect()
}

pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}
