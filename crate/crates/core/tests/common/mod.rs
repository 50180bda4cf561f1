#![allow(dead_code)]

use mmbm::Model;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Irreducible random model: a ring of positive rates plus random extra
/// edges. `fluid` is the chance that a state has σ² = 0.
#[allow(clippy::needless_range_loop)]
pub fn random_model(rng: &mut ChaCha8Rng, n: usize, fluid: f64) -> Model {
    loop {
        let mut q = vec![vec![0.0; n]; n];
        for i in 0..n {
            if n > 1 {
                q[i][(i + 1) % n] = rng.random_range(0.3..2.0);
            }
            for j in 0..n {
                if j != i && rng.random_bool(0.4) {
                    q[i][j] += rng.random_range(0.1..1.5);
                }
            }
            q[i][i] = -q[i].iter().sum::<f64>();
        }
        let mut mu = Vec::with_capacity(n);
        let mut s2 = Vec::with_capacity(n);
        for _ in 0..n {
            let fluid_state = rng.random_bool(fluid);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            mu.push(sign * rng.random_range(0.2..2.0));
            s2.push(if fluid_state { 0.0 } else { rng.random_range(0.2..2.0) });
        }
        let rows: Vec<&[f64]> = q.iter().map(|r| r.as_slice()).collect();
        if let Ok(m) = Model::from_rows(&rows, &mu, &s2) {
            if m.validate().is_ok() && m.asymptotic_drift().abs() > 0.05 {
                return m;
            }
        }
    }
}

pub fn max_abs_diff(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> f64 {
    (a - b).amax()
}
