use banditlab::dueling::{
    kappa_mu, logistic_gradient, logistic_mle, logistic_objective, Coldb, ColdbParams, LogisticProblem,
};
use banditlab::env::{logistic, EnvKind, EnvSpec};
use banditlab::linalg::normalize;
use banditlab::{gen_env, Context, DuelingPolicy, Matrix, Vector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Root of `mu(t) + t - 1` by bisection.
fn scalar_root() -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if logistic(mid) + mid - 1.0 > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn one_sample_mle_matches_root() {
    let mut p = LogisticProblem::default();
    p.push(Vector::from_vec(vec![1.0]), true);
    let th = logistic_mle(&[&p], 1.0, 1, None).unwrap();
    let root = scalar_root();
    assert!((th[0] - root).abs() < 1e-9, "{} vs {root}", th[0]);
    assert!((root - 0.401_058_137_5).abs() < 1e-9);
}

fn problem(rng: &mut ChaCha8Rng, d: usize, n: usize) -> LogisticProblem {
    let truth = normalize(Vector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)));
    let mut p = LogisticProblem::default();
    for _ in 0..n {
        let z = Vector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        let y = rng.gen::<f64>() < logistic(2.0 * z.dot(&truth));
        p.push(z, y);
    }
    p
}

fn dueling_env(users: usize, clusters: usize, seed: u64, threshold: bool) -> banditlab::Environment {
    gen_env(&EnvSpec {
        kind: EnvKind::Dueling,
        users,
        clusters,
        dim: 4,
        pool_size: 20,
        arms_per_round: 6,
        horizon: 500,
        threshold_feedback: threshold,
        seed,
        ..EnvSpec::default()
    })
    .unwrap()
}

fn duel(pol: &mut Coldb, env: &mut banditlab::Environment, rounds: usize, mut each: impl FnMut(&Coldb, usize, Vector)) {
    for t in 1..=rounds {
        let round = env.sample_round(t);
        let ctx = Context {
            t,
            user: round.user,
            arms: &round.arms,
        };
        let pair = pol.select_pair(&ctx).unwrap();
        let bit = env.duel_feedback(&round, pair.0, pair.1).unwrap().bit().unwrap();
        pol.update(&ctx, pair, bit).unwrap();
        each(pol, round.user, env.arm(pair.0) - env.arm(pair.1));
    }
}

#[test]
fn identical_users_stay_linked() {
    // Two users of the same cluster with deterministic preference bits.
    let mut env = dueling_env(2, 1, 4, true);
    let mut pol = Coldb::new(env.arms(), 2, ColdbParams::new(1.0)).unwrap();
    duel(&mut pol, &mut env, 500, |_, _, _| {});
    assert!(pol.graph().has_edge(0, 1));
}

#[test]
fn single_user_has_no_edges() {
    let mut env = dueling_env(1, 1, 5, false);
    let mut pol = Coldb::new(env.arms(), 1, ColdbParams::new(1.0)).unwrap();
    duel(&mut pol, &mut env, 200, |_, _, _| {});
    assert_eq!(pol.graph().edge_count(), 0);
}

#[test]
fn information_matrix_is_logged_differences() {
    let mut env = dueling_env(3, 2, 6, false);
    let params = ColdbParams::new(1.0);
    let mut pol = Coldb::new(env.arms(), 3, params).unwrap();
    let reg = params.lambda / kappa_mu(params.score_bound);
    let mut oracle = vec![Matrix::identity(4, 4) * reg; 3];
    duel(&mut pol, &mut env, 300, |_, user, z| oracle[user] += &z * z.transpose());
    for (u, m) in oracle.iter().enumerate() {
        assert!((pol.user_info(u).matrix() - m).amax() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn gradient_matches_central_differences(seed in 0u64..10_000, d in 1usize..=10, n in 1usize..=200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = problem(&mut rng, d, n);
        let lambda = rng.gen_range(0.1..2.0);
        let theta = Vector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        let g = logistic_gradient(&[&p], lambda, &theta);
        let h = 1e-5;
        for j in 0..d {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (logistic_objective(&[&p], lambda, &up) - logistic_objective(&[&p], lambda, &dn)) / (2.0 * h);
            prop_assert!((g[j] - fd).abs() <= 1e-6 * g.amax().max(1.0), "coord {}: {} vs {}", j, g[j], fd);
        }
    }

    #[test]
    fn mle_is_a_local_minimum(seed in 0u64..10_000, d in 1usize..=6, n in 0usize..=100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = problem(&mut rng, d, n);
        let th = logistic_mle(&[&p], 1.0, d, None).unwrap();
        let best = logistic_objective(&[&p], 1.0, &th);
        for _ in 0..100 {
            let xi = normalize(Vector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0))) * 1e-3;
            prop_assert!(best <= logistic_objective(&[&p], 1.0, &(&th + xi)));
        }
    }
}
