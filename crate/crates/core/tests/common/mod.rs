#![allow(dead_code)]

use memlqr::*;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix64 {
    DMatrix::from_row_slice(rows, cols, data)
}

pub fn scalar_system(a: f64, b: f64) -> LinearSystem64 {
    LinearSystem::new(m(1, 1, &[a]), m(1, 1, &[b]), 0).unwrap()
}

/// `Q = R = Σ₀ = 1`.
pub fn unit_scalar_cost() -> QuadraticCost64 {
    QuadraticCost::new(m(1, 1, &[1.0]), m(1, 1, &[1.0]), m(1, 1, &[1.0])).unwrap()
}

pub fn k1(v: f64) -> Matrix64 {
    m(1, 1, &[v])
}

/// Random SPD matrix with eigenvalues bounded away from zero.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize, floor: f64) -> Matrix64 {
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &g * g.transpose() + DMatrix::identity(n, n) * floor
}

/// A random stabilizing `(system, cost, K)` with `n` states and `m` inputs
/// and closed-loop spectral radius in `[0.3, 0.9]`.
pub fn random_instance(seed: u64, n: usize, mi: usize) -> (LinearSystem64, QuadraticCost64, Matrix64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(n, mi, |_, _| rng.random_range(-1.0..1.0));
        let k = DMatrix::from_fn(mi, n, |_, _| rng.random_range(-0.5..0.5));
        let f = &a - &b * &k;
        let rho = spectral_radius(&f);
        if rho < 1e-3 {
            continue;
        }
        let target = rng.random_range(0.3..0.9);
        // Rescale A and B together so the closed loop hits the target radius.
        let scale = target / rho;
        let system = LinearSystem::new(a * scale, b * scale, 0).unwrap();
        let cost = QuadraticCost::new(random_spd(&mut rng, n, 0.1), random_spd(&mut rng, mi, 0.5), random_spd(&mut rng, n, 0.5))
            .unwrap();
        return (system, cost, k);
    }
}

pub fn rel_err(a: &Matrix64, b: &Matrix64) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// Central finite-difference gradient of a scalar function of a matrix.
pub fn fd_gradient(k: &Matrix64, h: f64, f: impl Fn(&Matrix64) -> f64) -> Matrix64 {
    let mut g = DMatrix::zeros(k.nrows(), k.ncols());
    for i in 0..k.nrows() {
        for j in 0..k.ncols() {
            let mut kp = k.clone();
            let mut km = k.clone();
            kp[(i, j)] += h;
            km[(i, j)] -= h;
            g[(i, j)] = (f(&kp) - f(&km)) / (2.0 * h);
        }
    }
    g
}

/// Scalar Riccati value iteration `p ← q + a²p - (abp)²/(r + b²p)`.
pub fn scalar_dare_oracle(a: f64, b: f64, q: f64, r: f64) -> (f64, f64) {
    let mut p = q;
    for _ in 0..1_000_000 {
        let next = q + a * a * p - (a * b * p).powi(2) / (r + b * b * p);
        if (next - p).abs() <= 1e-15 * (1.0 + p) {
            p = next;
            break;
        }
        p = next;
    }
    (p, a * b * p / (r + b * b * p))
}

pub fn benchmark() -> (UncertainFamily64, QuadraticCost64) {
    (presets::benchmark_family(), presets::benchmark_cost())
}
