//! Fixtures shared by the kernel benchmarks.

use banditlab::dueling::LogisticProblem;
use banditlab::linalg::normalize;
use banditlab::{RidgeState, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_vectors(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vector> {
    (0..n)
        .map(|_| normalize(Vector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0))))
        .collect()
}

/// Ridge state after `n` random unit-norm updates.
pub fn warm_ridge(dim: usize, n: usize, rng: &mut ChaCha8Rng) -> RidgeState {
    let mut s = RidgeState::new(dim, 1.0).expect("ridge");
    for x in unit_vectors(n, dim, rng) {
        let r = rng.gen_range(-1.0..1.0);
        s.update(&x, r, 1.0).expect("update");
    }
    s
}

/// Preference data labelled by a random linear score.
pub fn logistic_problem(dim: usize, n: usize, rng: &mut ChaCha8Rng) -> LogisticProblem {
    let theta = normalize(Vector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0)));
    let mut p = LogisticProblem::default();
    for z in unit_vectors(n, dim, rng) {
        let y = z.dot(&theta) > 0.0;
        p.push(z, y);
    }
    p
}
