use approx::assert_abs_diff_eq;
use banditlab::baselines::LinUcb;
use banditlab::conbandit::{
    barycentric_spanner, conversation_budget, spanner_coefficients, ConLinUcb, ConversationalPolicy,
    KeyTermGraph, KeyTermStrategy,
};
use banditlab::env::{BudgetFn, EnvKind, EnvSpec, LogBase};
use banditlab::linalg::normalize;
use banditlab::{gen_env, Context, Matrix, Policy, Vector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn log_budget() -> BudgetFn {
    BudgetFn::Log {
        scale: 5.0,
        base: LogBase::E,
    }
}

fn random_features(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vector> {
    (0..n)
        .map(|_| normalize(Vector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0))))
        .collect()
}

fn basis(d: usize) -> Vec<Vector> {
    (0..d)
        .map(|i| {
            let mut v = Vector::zeros(d);
            v[i] = 1.0;
            v
        })
        .collect()
}

#[test]
fn spanner_of_random_features() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let feats = random_features(30, 5, &mut rng);
    let spanner = barycentric_spanner(&feats).unwrap();
    assert_eq!(spanner.len(), 5);
    for x in &feats {
        let c = spanner_coefficients(&feats, &spanner, x).unwrap();
        assert!(c.amax() <= 1.0 + 1e-9, "{c}");
    }
}

#[test]
fn log_budget_telescopes() {
    let b = log_budget();
    assert_eq!(conversation_budget(&b, 2), 5);
    assert_eq!(conversation_budget(&b, 3), 0);
    let total: u64 = (1..=1000).map(|t| conversation_budget(&b, t)).sum();
    assert_eq!(total as f64, b.eval(1000).floor());
    assert_eq!(conversation_budget(&BudgetFn::Linear { rate: 1.0 }, 17), 1);
    assert_eq!(conversation_budget(&BudgetFn::Constant { value: 4.0 }, 17), 0);
}

#[test]
fn mcr_cold_start_prefers_longest_key() {
    let arms = basis(2);
    let w = Matrix::from_row_slice(2, 2, &[0.5, 0.5, 0.0, 1.0]);
    let keys = KeyTermGraph::from_weights(&arms, &w).unwrap();
    assert!(keys.features()[0].norm() > keys.features()[1].norm());
    let learner = ConLinUcb::new(2, 1.0, 0.1, log_budget(), KeyTermStrategy::Mcr).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(learner.select_key(&keys, &[0, 1], &mut rng).unwrap(), 0);
}

#[test]
fn mcr_moves_off_a_queried_key() {
    let arms = basis(3);
    let keys = KeyTermGraph::from_weights(&arms, &Matrix::identity(3, 3)).unwrap();
    let mut learner = ConLinUcb::new(3, 1.0, 0.1, log_budget(), KeyTermStrategy::Mcr).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut last = usize::MAX;
    for _ in 0..9 {
        let k = learner.select_key(&keys, &[0, 1, 2], &mut rng).unwrap();
        assert_ne!(k, last);
        learner.absorb(&keys.features()[k], 0.0).unwrap();
        last = k;
    }
}

#[test]
fn bs_samples_spanner_uniformly() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let arms = random_features(40, 4, &mut rng);
    let keys = KeyTermGraph::generate(&arms, 12, 5, &mut rng).unwrap();
    let learner = ConLinUcb::new(4, 1.0, 0.1, log_budget(), KeyTermStrategy::Bs)
        .unwrap()
        .with_spanner(&keys)
        .unwrap();
    let spanner = barycentric_spanner(keys.features()).unwrap();
    let all: Vec<usize> = (0..keys.len()).collect();
    let n = 10_000;
    let mut counts = vec![0usize; keys.len()];
    for _ in 0..n {
        counts[learner.select_key(&keys, &all, &mut rng).unwrap()] += 1;
    }
    let p = 1.0 / spanner.len() as f64;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    for (k, &c) in counts.iter().enumerate() {
        if spanner.contains(&k) {
            assert!((c as f64 - n as f64 * p).abs() < 3.5 * sd, "key {k}: {c}");
        } else {
            assert_eq!(c, 0);
        }
    }
}

#[test]
fn key_feedback_tightens_radius() {
    let x = Vector::from_vec(vec![1.0]);
    let mut with = ConLinUcb::new(1, 1.0, 0.1, log_budget(), KeyTermStrategy::Mcr).unwrap();
    with.absorb(&x, 1.0).unwrap();
    with.absorb(&x, 1.0).unwrap();
    let mut without = ConLinUcb::new(1, 1.0, 0.1, log_budget(), KeyTermStrategy::None).unwrap();
    without.absorb(&x, 1.0).unwrap();
    assert_abs_diff_eq!(with.state().mnorm(&x), (1.0f64 / 3.0).sqrt(), epsilon = 1e-12);
    assert_abs_diff_eq!(without.state().mnorm(&x), 0.5f64.sqrt(), epsilon = 1e-12);
}

fn conversational_env(seed: u64) -> banditlab::Environment {
    gen_env(&EnvSpec {
        kind: EnvKind::Conversational,
        users: 4,
        clusters: 4,
        dim: 5,
        pool_size: 40,
        arms_per_round: 8,
        horizon: 1500,
        noise: 0.1,
        key_terms: 15,
        max_arms_per_key: 5,
        seed,
        ..EnvSpec::default()
    })
    .unwrap()
}

#[test]
fn no_conversations_is_linucb() {
    let mut env = conversational_env(3);
    let keys = env.key_terms().unwrap().clone();
    let template = ConLinUcb::new(5, 1.0, 0.1, log_budget(), KeyTermStrategy::None)
        .unwrap()
        .with_alpha(0.4);
    let mut con = ConversationalPolicy::new(env.arms(), 4, &keys, template, ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut lin = LinUcb::new(env.arms(), 4, 1.0, 0.4, false).unwrap();
    for t in 1..=1500 {
        let round = env.sample_round(t);
        let ctx = Context {
            t,
            user: round.user,
            arms: &round.arms,
        };
        assert_eq!(con.converse(&ctx, &mut env).unwrap(), 0);
        let a = con.select(&ctx).unwrap();
        assert_eq!(a, lin.select(&ctx).unwrap());
        let ev = env.feedback(&round, a).unwrap();
        con.update(&ctx, a, &ev).unwrap();
        lin.update(&ctx, a, &ev).unwrap();
    }
    assert_eq!(con.queries(), 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn joint_state_is_sum_of_queried_and_pulled(seed in 0u64..1000, mcr in any::<bool>()) {
        let mut env = conversational_env(seed);
        let keys = env.key_terms().unwrap().clone();
        let strategy = if mcr { KeyTermStrategy::Mcr } else { KeyTermStrategy::Ucb };
        let mut learner = ConLinUcb::new(5, 0.7, 0.1, log_budget(), strategy).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let all: Vec<usize> = (0..keys.len()).collect();
        let mut oracle = Matrix::identity(5, 5) * 0.7;
        for t in 1..=200 {
            let round = env.sample_round(t);
            for _ in 0..learner.begin_round() {
                let k = learner.select_key(&keys, &all, &mut rng).unwrap();
                let x = &keys.features()[k];
                oracle += x * x.transpose();
                learner.absorb(x, env.key_feedback(round.user, k).unwrap()).unwrap();
            }
            let arms: Vec<&Vector> = round.arms.iter().map(|&a| env.arm(a)).collect();
            let a = round.arms[learner.select_arm(&arms).unwrap()];
            let x = env.arm(a).clone();
            oracle += &x * x.transpose();
            let r = env.feedback(&round, a).unwrap().reward().unwrap();
            learner.absorb(&x, r).unwrap();
        }
        prop_assert!((learner.state().matrix() - oracle).amax() < 1e-10);
    }

    #[test]
    fn conversations_never_widen_radius(
        seed in 0u64..1000,
        v in prop::collection::vec(-1.0..1.0f64, 5),
        q in 1usize..6,
    ) {
        let mut env = conversational_env(seed);
        let keys = env.key_terms().unwrap().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut base = ConLinUcb::new(5, 1.0, 0.1, log_budget(), KeyTermStrategy::Mcr).unwrap();
        for t in 1..=30 {
            let round = env.sample_round(t);
            let a = round.arms[0];
            base.absorb(env.arm(a), 0.1).unwrap();
        }
        let mut talked = base.clone();
        let all: Vec<usize> = (0..keys.len()).collect();
        for _ in 0..q {
            let k = talked.select_key(&keys, &all, &mut rng).unwrap();
            talked.absorb(&keys.features()[k], 0.0).unwrap();
        }
        let x = env.arm(3).clone();
        base.absorb(&x, 0.2).unwrap();
        talked.absorb(&x, 0.2).unwrap();
        let v = Vector::from_column_slice(&v);
        prop_assert!(talked.state().mnorm(&v) <= base.state().mnorm(&v) + 1e-12);
    }
}
