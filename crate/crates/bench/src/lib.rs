//! Fixed-seed workloads shared by the criterion benches.

use polyinv_core::benchmark::random_sparse_polynomial;
use polyinv_core::controller::PolynomialMap;
use polyinv_core::{SparsePolynomial, SystemData, UnivariatePolynomial};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random `m`-component map in `2m` variables with `n_s` terms per component.
pub fn random_map(m: usize, d_p: u32, n_s: usize, seed: u64) -> PolynomialMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comps = random_sparse_polynomial(m, d_p, n_s, &mut rng).expect("valid cell");
    PolynomialMap::new(comps, m, m).expect("valid split")
}

pub fn random_point(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn random_univariate(degree: usize, seed: u64) -> UnivariatePolynomial {
    UnivariatePolynomial::new(random_point(degree + 1, seed))
}

pub fn first_component(m: usize, d_p: u32, n_s: usize, seed: u64) -> SparsePolynomial {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_sparse_polynomial(m, d_p, n_s, &mut rng).expect("valid cell").remove(0)
}

/// SISO record of `y_t = 0.6 y_{t-1} + u_{t-1} - 0.3 u_{t-1}^3` under uniform input.
pub fn cubic_record(len: usize, seed: u64) -> SystemData {
    let u = random_point(len, seed);
    let mut y = vec![0.0];
    for t in 1..len {
        y.push(0.6 * y[t - 1] + u[t - 1] - 0.3 * u[t - 1].powi(3));
    }
    SystemData::siso(&u, &y, 0.1).expect("consistent record")
}
