use banditlab::linalg::normalize;
use banditlab::nonstat::{sigma_bar, Radius, RwOful, RwOfulParams, SavePlus, SavePlusParams};
use banditlab::{Context, FeedbackEvent, Matrix, Observation, Policy, Vector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pool(n: usize, d: usize, seed: u64) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| normalize(Vector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0))))
        .collect()
}

fn event(t: usize, arm: usize, r: f64, sigma: Option<f64>) -> FeedbackEvent {
    FeedbackEvent {
        t,
        user: 0,
        presented: vec![],
        chosen: vec![arm],
        value: Observation::Reward(r),
        oracle_best_value: 0.0,
        sigma,
        corruption: 0.0,
    }
}

#[test]
fn rw_oful_matches_straight_line_weighted_ofu() {
    let arms = pool(6, 3, 1);
    let ids: Vec<usize> = (0..6).collect();
    let theta = Vector::from_vec(vec![0.4, -0.2, 0.3]);
    let (lambda, alpha, gamma, beta, sigma) = (1.0, 0.5, 1.5, 0.8, 0.3);
    let params = RwOfulParams {
        lambda,
        alpha,
        gamma,
        window: 1000,
        radius: Radius::Fixed(beta),
        ..RwOfulParams::default()
    };
    let mut pol = RwOful::new(&arms, params).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);

    let mut a = Matrix::identity(3, 3) * lambda;
    let mut b = Vector::zeros(3);
    for t in 1..=100 {
        let inv = a.clone().try_inverse().unwrap();
        let est = &inv * &b;
        let norm = |x: &Vector| (x.transpose() * &inv * x)[(0, 0)].sqrt();
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for (i, x) in arms.iter().enumerate() {
            let v = x.dot(&est) + beta * norm(x);
            if v > best_v {
                best = i;
                best_v = v;
            }
        }
        let ctx = Context { t, user: 0, arms: &ids };
        assert_eq!(pol.select(&ctx).unwrap(), best, "round {t}");
        let r = arms[best].dot(&theta) + sigma * rng.gen_range(-1.0..1.0);
        let sb = sigma.max(alpha).max(gamma * norm(&arms[best]).sqrt());
        let w = 1.0 / (sb * sb);
        a += w * &arms[best] * arms[best].transpose();
        b += w * r * &arms[best];
        pol.update(&ctx, best, &event(t, best, r, Some(sigma))).unwrap();
    }
    let est = a.try_inverse().unwrap() * b;
    assert!((pol.state().estimate().unwrap() - est).amax() < 1e-9);
    assert_eq!(pol.restarts(), 0);
}

#[test]
fn sigma_bar_floor_and_variance() {
    assert_eq!(sigma_bar(0.0, 0.3, 1.0, 0.0), 0.3);
    assert_eq!(sigma_bar(2.0, 1.0, 1.0, 0.25), 2.0);
    assert_eq!(sigma_bar(0.1, 0.2, 0.0, 9.0), 0.2);
}

fn save(window: usize, alpha: f64) -> SavePlusParams {
    SavePlusParams {
        alpha,
        window,
        ..SavePlusParams::default()
    }
}

fn stream(n: usize, seed: u64) -> Vec<(Vector, f64)> {
    let arms = pool(8, 3, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    (0..n)
        .map(|_| {
            let x = arms[rng.gen_range(0..arms.len())].clone();
            let r = rng.gen_range(-1.0..1.0);
            (x, r)
        })
        .collect()
}

fn feed(s: &mut SavePlus, data: &[(Vector, f64)]) {
    for (x, r) in data {
        s.begin_round().unwrap();
        s.observe(x, *r).unwrap();
    }
}

#[test]
fn skipped_rounds_touch_nothing() {
    let arms = pool(1, 2, 5);
    let mut s = SavePlus::new(&arms, save(10_000, 0.25)).unwrap();
    let mut skipped = 0;
    for _ in 0..500 {
        s.begin_round().unwrap();
        let before: Vec<(Matrix, Vector, f64)> = (1..=s.num_layers())
            .map(|l| (s.layer_state(l).gram().clone(), s.layer_state(l).resp().clone(), s.layer_beta(l)))
            .collect();
        if s.observe(&arms[0], 0.5).unwrap().is_none() {
            skipped += 1;
            for (l, (g, b, beta)) in before.iter().enumerate() {
                assert_eq!(s.layer_state(l + 1).gram(), g);
                assert_eq!(s.layer_state(l + 1).resp(), b);
                assert_eq!(s.layer_beta(l + 1), *beta);
            }
        }
    }
    assert!(skipped > 0);
    assert_eq!(s.skipped(), skipped);
}

#[test]
fn restart_forgets_history() {
    let window = 50;
    let data = stream(130, 9);
    let mut full = SavePlus::new(&pool(1, 3, 0), save(window, 1.0 / 16.0)).unwrap();
    feed(&mut full, &data);
    assert_eq!(full.restarts(), 2);
    // The 31 replayed rounds stay inside one window, so the replay never restarts.
    let mut tail = SavePlus::new(&pool(1, 3, 0), save(window, 1.0 / 16.0)).unwrap();
    feed(&mut tail, &data[99..]);
    for l in 1..=full.num_layers() {
        assert_eq!(full.layer_state(l).gram(), tail.layer_state(l).gram());
        assert_eq!(full.layer_state(l).resp(), tail.layer_state(l).resp());
        assert_eq!(full.layer_beta(l), tail.layer_beta(l));
        assert_eq!(full.layer_size(l), tail.layer_size(l));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn layers_partition_rounds(seed in 0u64..1000, window in 5usize..80, n in 1usize..300, log_alpha in 1i32..7) {
        let data = stream(n, seed);
        let mut s = SavePlus::new(&pool(1, 3, 0), save(window, 0.5f64.powi(log_alpha))).unwrap();
        for (k, (x, r)) in data.iter().enumerate() {
            let k = k + 1;
            s.begin_round().unwrap();
            s.observe(x, *r).unwrap();
            let since = if k < window { k } else { k - window * (k / window) + 1 };
            let total: usize = (1..=s.num_layers()).map(|l| s.layer_size(l)).sum::<usize>() + s.skipped();
            prop_assert_eq!(total, since);
        }
        prop_assert!(s.max_identity_error() < 1e-10);
    }
}
