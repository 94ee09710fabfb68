use approx::assert_abs_diff_eq;
use banditlab::env::{
    logistic, svd_ingest, truncated_svd, CorruptionMode, DriftSchedule, EnvKind, EnvSpec, Observation,
};
use banditlab::{gen_env, Matrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cbmum(users: usize, misspec: f64, noise: f64) -> EnvSpec {
    EnvSpec {
        kind: EnvKind::Cbmum,
        users,
        clusters: 2.min(users),
        dim: 5,
        pool_size: 30,
        arms_per_round: 10,
        horizon: 1000,
        misspec,
        noise,
        gamma: 0.3,
        seed: 4,
        ..EnvSpec::default()
    }
}

fn nonstat(budget: f64, horizon: usize) -> EnvSpec {
    EnvSpec {
        kind: EnvKind::Nonstat2arm,
        users: 1,
        clusters: 1,
        dim: 2,
        pool_size: 2,
        arms_per_round: 2,
        horizon,
        drift_budget: budget,
        ..EnvSpec::default()
    }
}

#[test]
fn desk_cbmum_env_shape() {
    let spec = EnvSpec {
        users: 1000,
        clusters: 10,
        dim: 50,
        pool_size: 1000,
        arms_per_round: 20,
        misspec: 0.2,
        gamma: 0.5,
        ..EnvSpec::default()
    };
    let mut env = gen_env(&spec).unwrap();
    assert_eq!(env.arms().len(), 1000);
    assert!(env.arms().iter().all(|x| (x.norm() - 1.0).abs() < 1e-12));
    let round = env.sample_round(1);
    assert_eq!(round.arms.len(), 20);
    assert!(round.arms.windows(2).all(|w| w[0] < w[1]));
    let devs = (0..1000).map(|a| env.deviation(3, a));
    assert!(devs.clone().all(|e| e.abs() <= 0.2));
    assert!(devs.map(f64::abs).fold(0.0, f64::max) > 0.19);
}

#[test]
fn zero_misspec_gives_exact_linear_reward() {
    let mut env = gen_env(&cbmum(10, 0.0, 0.0)).unwrap();
    for t in 1..=200 {
        let round = env.sample_round(t);
        assert!((0..30).all(|a| env.deviation(round.user, a) == 0.0));
        let arm = round.arms[t % round.arms.len()];
        let ev = env.feedback(&round, arm).unwrap();
        assert_eq!(ev.reward(), Some(env.score(round.user, arm, t)));
    }
}

#[test]
fn single_user_always_arrives() {
    let mut env = gen_env(&cbmum(1, 0.0, 0.1)).unwrap();
    assert!((1..=500).all(|t| env.sample_round(t).user == 0));
}

#[test]
fn arrivals_are_uniform() {
    let users = 20;
    let n = 100_000;
    let mut env = gen_env(&cbmum(users, 0.0, 0.1)).unwrap();
    let mut counts = vec![0usize; users];
    for t in 1..=n {
        counts[env.sample_round(t).user] += 1;
    }
    let p = 1.0 / users as f64;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - n as f64 * p).abs() < 3.5 * sd, "count {c}");
    }
}

#[test]
fn flip_corruption_negates_reward_and_tallies() {
    let spec = EnvSpec {
        kind: EnvKind::Locud,
        users: 10,
        clusters: 2,
        corruption: CorruptionMode::FlipFirstK,
        corrupted_fraction: 0.3,
        flip_k: Some(300),
        noise: 0.0,
        horizon: 600,
        ..cbmum(10, 0.0, 0.0)
    };
    let mut env = gen_env(&spec).unwrap();
    assert_eq!(env.corruption().corrupted.iter().filter(|&&c| c).count(), 3);
    let mut flipped = 0.0;
    for t in 1..=600 {
        let round = env.sample_round(t);
        let arm = round.arms[0];
        let lin = env.score(round.user, arm, t);
        let ev = env.feedback(&round, arm).unwrap();
        if env.corruption().corrupted[round.user] && t <= 300 {
            assert_eq!(ev.reward(), Some(-lin));
            assert_eq!(ev.corruption, -2.0 * lin);
            flipped += 2.0 * lin.abs();
        } else {
            assert_eq!(ev.reward(), Some(lin));
            assert_eq!(ev.corruption, 0.0);
        }
    }
    assert!(flipped > 0.0);
    assert_abs_diff_eq!(env.corruption().tally, flipped, epsilon = 1e-9);
}

#[test]
fn nonstat_arms_and_means() {
    let spec = nonstat(1.0, 1000);
    let mut env = gen_env(&spec).unwrap();
    for k in [1, 7, 250, 1000] {
        let round = env.sample_round(k);
        assert_eq!(round.arms, vec![0, 1]);
        let phase = 5.0 * std::f64::consts::PI * k as f64 / 1000.0;
        assert_abs_diff_eq!(env.mean_reward(0, 0, k), 0.5 + 0.3 * phase.sin(), epsilon = 1e-12);
        let ev = env.feedback(&round, 0).unwrap();
        assert_eq!(ev.sigma, Some(DriftSchedule::sigma(k)));
    }
}

#[test]
fn sinusoid_variation_closed_form() {
    // Both coordinates move by 0.3 |d sin|, and sin(5 B pi k / K) sweeps 5B half periods.
    for (budget, horizon) in [(1.0, 1000), (1.0, 30_000), (10.0, 30_000), (2.0, 5000)] {
        let tv = DriftSchedule { budget, horizon }.total_variation();
        let expect = 3.0 * 2f64.sqrt() * budget;
        // The discrete sum can only undershoot the continuous variation.
        assert!(tv <= expect + 1e-9 && (expect - tv) / expect < 5e-3, "B={budget} K={horizon}: {tv} vs {expect}");
    }
}

#[test]
fn bernoulli_decay_variance() {
    let horizon = 30_000;
    let mut total = 0.0;
    for k in 1..=horizon {
        let p = 0.5 / k as f64;
        assert_abs_diff_eq!(DriftSchedule::sigma(k).powi(2), p * (1.0 - p), epsilon = 1e-15);
        total += p * (1.0 - p);
    }
    assert!(total <= 0.5 * (1.0 + (horizon as f64).ln()));
}

#[test]
fn duel_probabilities() {
    assert_eq!(logistic(0.0), 0.5);
    assert_abs_diff_eq!(logistic(3f64.ln()), 0.75, epsilon = 1e-12);

    let spec = EnvSpec {
        kind: EnvKind::Dueling,
        users: 1,
        clusters: 1,
        dim: 3,
        pool_size: 4,
        arms_per_round: 4,
        seed: 9,
        ..EnvSpec::default()
    };
    let mut env = gen_env(&spec).unwrap();
    let (a, b) = (0, 1);
    let p = logistic(env.score(0, a, 1) - env.score(0, b, 1));
    let n = 100_000;
    let mut wins = 0;
    for t in 1..=n {
        let round = env.sample_round(t);
        if env.duel_feedback(&round, a, b).unwrap().value == Observation::Preference(true) {
            wins += 1;
        }
    }
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    assert!((wins as f64 - n as f64 * p).abs() < 3.5 * sd, "wins {wins}, p {p}");
}

#[test]
fn event_streams_are_seed_deterministic() {
    let run = |seed| {
        let mut env = gen_env(&EnvSpec { seed, ..cbmum(8, 0.1, 0.2) }).unwrap();
        (1..=300)
            .map(|t| {
                let r = env.sample_round(t);
                let arm = r.arms[t % r.arms.len()];
                env.feedback(&r, arm).unwrap()
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(run(3), run(3));
    assert_ne!(run(3), run(4));
}

#[test]
fn svd_examples() {
    let id = Matrix::identity(4, 4);
    let (users, arms) = svd_ingest(&id, 4).unwrap();
    assert_abs_diff_eq!(truncated_svd(&id, 4).unwrap().reconstruct(), id, epsilon = 1e-12);
    for i in 0..4 {
        for j in 0..4 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(users[i].dot(&users[j]), want, epsilon = 1e-12);
            assert_abs_diff_eq!(arms[i].dot(&arms[j]), want, epsilon = 1e-12);
        }
    }

    let ones = Matrix::from_element(4, 4, 1.0);
    let svd = truncated_svd(&ones, 2).unwrap();
    assert_eq!(svd.singular_values[1], 0.0);
    assert!(svd.u.column(1).iter().all(|&v| v == 0.0));
    let (users, _) = svd_ingest(&ones, 2).unwrap();
    assert!(users.iter().all(|u| u[1] == 0.0));
}

#[test]
fn truncated_svd_meets_eckart_young() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let r = Matrix::from_fn(20, 30, |_, _| if rng.gen_bool(0.4) { 1.0 } else { 0.0 });
    let mut sv: Vec<f64> = r.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let tail = sv[5..].iter().map(|s| s * s).sum::<f64>().sqrt();
    let err = (&r - truncated_svd(&r, 5).unwrap().reconstruct()).norm();
    assert_abs_diff_eq!(err, tail, epsilon = 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flip_tally_matches_event_corruption(seed in 0u64..1000, fraction in 0.0..1.0f64) {
        let spec = EnvSpec {
            kind: EnvKind::Locud,
            corruption: CorruptionMode::FlipFirstK,
            corrupted_fraction: fraction,
            flip_k: Some(100),
            seed,
            horizon: 300,
            ..cbmum(6, 0.0, 0.1)
        };
        let mut env = gen_env(&spec).unwrap();
        let mut sum = 0.0;
        for t in 1..=300 {
            let r = env.sample_round(t);
            sum += env.feedback(&r, r.arms[0]).unwrap().corruption.abs();
        }
        prop_assert!((env.corruption().tally - sum).abs() < 1e-9);
    }
}
