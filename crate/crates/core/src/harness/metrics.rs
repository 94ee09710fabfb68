//! Regret, AUC and cross-trial aggregation.

use crate::env::{EnvKind, Environment, FeedbackEvent, Observation};
use crate::error::{Error, Result};

/// Instantaneous regret given the expected value of every presented arm.
///
/// Scalar feedback: `max v - v[chosen]`. Dueling: `2 max v - v[x1] - v[x2]`.
pub fn regret_from_values(values: &[f64], chosen: &[usize], dueling: bool) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyArmSet);
    }
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let get = |i: usize| {
        values
            .get(i)
            .copied()
            .ok_or_else(|| Error::param(format!("chosen position {i} out of range")))
    };
    match (dueling, chosen) {
        (false, [a]) => Ok(best - get(*a)?),
        (true, [a, b]) => Ok(2.0 * best - get(*a)? - get(*b)?),
        _ => Err(Error::Config("feedback kind does not match the number of chosen arms".into())),
    }
}

/// Regret of a feedback event against the environment's exact oracle.
pub fn compute_regret(event: &FeedbackEvent, env: &Environment) -> Result<f64> {
    let dueling = matches!(event.value, Observation::Preference(_));
    if dueling != (env.kind() == EnvKind::Dueling) {
        return Err(Error::Config("feedback kind does not match the environment".into()));
    }
    let values: Vec<f64> = event
        .presented
        .iter()
        .map(|&a| {
            if dueling {
                env.score(event.user, a, event.t)
            } else {
                env.mean_reward(event.user, a, event.t)
            }
        })
        .collect();
    let pos = |arm: usize| {
        event
            .presented
            .iter()
            .position(|&a| a == arm)
            .ok_or_else(|| Error::param(format!("arm {arm} was not presented")))
    };
    let chosen = event.chosen.iter().map(|&a| pos(a)).collect::<Result<Vec<_>>>()?;
    regret_from_values(&values, &chosen, dueling)
}

/// Normalised Mann-Whitney statistic; ties count one half.
pub fn compute_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("AUC score"));
    }
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(s, _)| *s).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::UndefinedAuc("labels contain a single class"));
    }
    let mut sorted = neg.clone();
    sorted.sort_by(f64::total_cmp);
    let mut u = 0.0;
    for p in &pos {
        let below = sorted.partition_point(|n| n < p);
        let upto = sorted.partition_point(|n| n <= p);
        u += below as f64 + 0.5 * (upto - below) as f64;
    }
    Ok(u / (pos.len() * neg.len()) as f64)
}

/// Pointwise mean and standard error (sample std / sqrt(n)) over equal-length series.
pub fn mean_stderr(series: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = series.len();
    if n == 0 {
        return Err(Error::param("no trials to aggregate"));
    }
    let len = series[0].len();
    if series.iter().any(|s| s.len() != len) {
        return Err(Error::param("trial series have different lengths"));
    }
    let mut mean = vec![0.0; len];
    let mut stderr = vec![0.0; len];
    for i in 0..len {
        let m = series.iter().map(|s| s[i]).sum::<f64>() / n as f64;
        mean[i] = m;
        if n > 1 {
            let var = series.iter().map(|s| (s[i] - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            stderr[i] = (var / n as f64).sqrt();
        }
    }
    Ok((mean, stderr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn misspecified_oracle_uses_deviation() {
        // theta = 1: arm 0 has 1.0 - 0.3, arm 1 has 0.5 + 0.4.
        let v = [1.0 - 0.3, 0.5 + 0.4];
        assert_relative_eq!(regret_from_values(&v, &[0], false).unwrap(), 0.2, epsilon = 1e-12);
        assert_eq!(regret_from_values(&v, &[1], false).unwrap(), 0.0);
    }

    #[test]
    fn dueling_double_optimal_is_zero() {
        let v = [0.1, 0.7, 0.3];
        assert_eq!(regret_from_values(&v, &[1, 1], true).unwrap(), 0.0);
        assert_relative_eq!(regret_from_values(&v, &[0, 2], true).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(compute_auc(&[0.9, 0.8, 0.3], &[true, false, true]).unwrap(), 0.5);
        assert_eq!(compute_auc(&[2.0, 1.0, 0.0], &[true, true, false]).unwrap(), 1.0);
        assert_eq!(compute_auc(&[1.0; 4], &[true, false, true, false]).unwrap(), 0.5);
        assert!(matches!(compute_auc(&[1.0, 2.0], &[true, true]), Err(Error::UndefinedAuc(_))));
    }

    #[test]
    fn single_trial_has_zero_stderr() {
        let (m, s) = mean_stderr(&[vec![1.0, 2.0]]).unwrap();
        assert_eq!(m, vec![1.0, 2.0]);
        assert_eq!(s, vec![0.0, 0.0]);
    }
}
