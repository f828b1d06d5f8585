//! Numeric kernels for PPO training: GAE advantages, discounted returns, the
//! clipped surrogate objective and the critic's squared-error loss.
//!
//! These are reference implementations over plain slices; the networks that
//! produce values and probability ratios live in the trainer.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RlError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("{name} must lie in [0, 1], got {value}")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("empty input")]
    Empty,
}

fn unit_interval(name: &'static str, value: f64) -> Result<(), RlError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(RlError::OutOfRange { name, value })
    }
}

fn same_len(left: usize, right: usize) -> Result<(), RlError> {
    if left == right {
        Ok(())
    } else {
        Err(RlError::LengthMismatch { left, right })
    }
}

/// One trajectory's rewards `r_t`, value estimates `V(s_t)` and the value of
/// the state after the last step (0 for terminated episodes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryNumerics {
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(default)]
    pub bootstrap_value: f64,
    pub gamma: f64,
    pub lam: f64,
}

impl TrajectoryNumerics {
    pub fn validate(&self) -> Result<(), RlError> {
        same_len(self.rewards.len(), self.values.len())?;
        unit_interval("gamma", self.gamma)?;
        unit_interval("lam", self.lam)
    }

    /// `V(s_{t+1})`, using the bootstrap value past the end.
    fn next_value(&self, t: usize) -> f64 {
        self.values.get(t + 1).copied().unwrap_or(self.bootstrap_value)
    }

    /// TD residuals `r_t + gamma * V(s_{t+1}) - V(s_t)`.
    pub fn td_residuals(&self) -> Result<Vec<f64>, RlError> {
        self.validate()?;
        Ok((0..self.rewards.len())
            .map(|t| self.rewards[t] + self.gamma * self.next_value(t) - self.values[t])
            .collect())
    }
}

/// Generalized advantage estimates via the backward recursion
/// `A_t = delta_t + gamma * lam * A_{t+1}`.
pub fn gae_advantages(traj: &TrajectoryNumerics) -> Result<Vec<f64>, RlError> {
    let deltas = traj.td_residuals()?;
    let decay = traj.gamma * traj.lam;
    let mut advantages = vec![0.0; deltas.len()];
    let mut running = 0.0;
    for t in (0..deltas.len()).rev() {
        running = deltas[t] + decay * running;
        advantages[t] = running;
    }
    Ok(advantages)
}

/// `R_t = r_t + gamma * R_{t+1}` with `R_T = bootstrap_value`.
pub fn discounted_returns(rewards: &[f64], gamma: f64, bootstrap_value: f64) -> Result<Vec<f64>, RlError> {
    unit_interval("gamma", gamma)?;
    let mut returns = vec![0.0; rewards.len()];
    let mut running = bootstrap_value;
    for t in (0..rewards.len()).rev() {
        running = rewards[t] + gamma * running;
        returns[t] = running;
    }
    Ok(returns)
}

pub fn clip(x: f64, lo: f64, hi: f64) -> f64 {
    x.max(lo).min(hi)
}

/// Mean over steps of `min(r * A, clip(r, 1 - eps, 1 + eps) * A)`; the
/// quantity PPO maximizes.
pub fn ppo_clip_objective(ratios: &[f64], advantages: &[f64], epsilon: f64) -> Result<f64, RlError> {
    same_len(ratios.len(), advantages.len())?;
    if ratios.is_empty() {
        return Err(RlError::Empty);
    }
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(RlError::BadEpsilon(epsilon));
    }
    let sum: f64 = ratios
        .iter()
        .zip(advantages)
        .map(|(&r, &a)| (r * a).min(clip(r, 1.0 - epsilon, 1.0 + epsilon) * a))
        .sum();
    Ok(sum / ratios.len() as f64)
}

/// Mean of `(V(s_t) - R_t)^2`.
pub fn value_loss(predicted: &[f64], returns: &[f64]) -> Result<f64, RlError> {
    same_len(predicted.len(), returns.len())?;
    if predicted.is_empty() {
        return Err(RlError::Empty);
    }
    let sum: f64 = predicted.iter().zip(returns).map(|(v, r)| (v - r).powi(2)).sum();
    Ok(sum / predicted.len() as f64)
}

pub const DEFAULT_CLIP_EPSILON: f64 = 0.2;

fn default_epsilon() -> f64 {
    DEFAULT_CLIP_EPSILON
}

/// A trajectory plus optional probability ratios for the clip objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryInput {
    #[serde(flatten)]
    pub numerics: TrajectoryNumerics,
    #[serde(default)]
    pub ratios: Option<Vec<f64>>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub value_loss: Option<f64>,
    pub clip_objective: Option<f64>,
}

/// Advantages, returns, the critic loss against those returns and, when
/// ratios are given, the clipped objective over the advantages.
pub fn score_trajectory(input: &TrajectoryInput) -> Result<TrajectoryReport, RlError> {
    let t = &input.numerics;
    let advantages = gae_advantages(t)?;
    let returns = discounted_returns(&t.rewards, t.gamma, t.bootstrap_value)?;
    let value_loss = if t.values.is_empty() {
        None
    } else {
        Some(value_loss(&t.values, &returns)?)
    };
    let clip_objective = match &input.ratios {
        Some(r) => Some(ppo_clip_objective(r, &advantages, input.epsilon)?),
        None => None,
    };
    Ok(TrajectoryReport {
        advantages,
        returns,
        value_loss,
        clip_objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(rewards: &[f64], values: &[f64], gamma: f64, lam: f64) -> TrajectoryNumerics {
        TrajectoryNumerics {
            rewards: rewards.to_vec(),
            values: values.to_vec(),
            bootstrap_value: 0.0,
            gamma,
            lam,
        }
    }

    #[test]
    fn gae_small_cases() {
        let a = gae_advantages(&traj(&[0.0; 4], &[0.0; 4], 0.9, 0.95)).unwrap();
        assert_eq!(a, vec![0.0; 4]);

        let a = gae_advantages(&traj(&[1.0, 2.0, 3.0], &[0.0; 3], 1.0, 1.0)).unwrap();
        assert_eq!(a, vec![6.0, 5.0, 3.0]);

        // delta_1 = 0 - 0.5 = -0.5; delta_0 = 1 + 0.9*0.5 - 0.5 = 0.95;
        // A_0 = 0.95 + 0.855 * -0.5 = 0.5225
        let a = gae_advantages(&traj(&[1.0, 0.0], &[0.5, 0.5], 0.9, 0.95)).unwrap();
        assert!((a[0] - 0.5225).abs() < 1e-12);
        assert!((a[1] + 0.5).abs() < 1e-12);

        assert!(matches!(
            gae_advantages(&traj(&[1.0], &[], 0.9, 0.9)),
            Err(RlError::LengthMismatch { .. })
        ));
        assert!(gae_advantages(&traj(&[1.0], &[1.0], 1.1, 0.9)).is_err());
    }

    #[test]
    fn returns_cases() {
        assert_eq!(
            discounted_returns(&[1.0, 1.0, 1.0], 1.0, 0.0).unwrap(),
            vec![3.0, 2.0, 1.0]
        );
        assert_eq!(
            discounted_returns(&[0.3, -2.0, 5.0], 0.0, 7.0).unwrap(),
            vec![0.3, -2.0, 5.0]
        );
        let r = discounted_returns(&[1.0, 0.5, -1.0, 2.0, 0.0, 0.25], 0.9, 3.0).unwrap();
        for t in 0..6 {
            let mut direct = 0.0;
            let rewards = [1.0, 0.5, -1.0, 2.0, 0.0, 0.25];
            for k in t..6 {
                direct += 0.9f64.powi((k - t) as i32) * rewards[k];
            }
            direct += 0.9f64.powi((6 - t) as i32) * 3.0;
            assert!((r[t] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn clip_objective_cases() {
        assert_eq!(ppo_clip_objective(&[1.5], &[1.0], 0.2).unwrap(), 1.2);
        assert_eq!(ppo_clip_objective(&[0.5], &[-1.0], 0.2).unwrap(), -0.8);
        let adv = [0.5, -1.0, 2.0, 0.25];
        let mean = adv.iter().sum::<f64>() / 4.0;
        assert_eq!(ppo_clip_objective(&[1.0; 4], &adv, 0.2).unwrap(), mean);
        assert_eq!(ppo_clip_objective(&[], &[], 0.2), Err(RlError::Empty));
        assert!(ppo_clip_objective(&[1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn value_loss_cases() {
        assert_eq!(value_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(value_loss(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!(value_loss(&[0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn trajectory_report() {
        let input: TrajectoryInput =
            serde_json::from_str(r#"{"rewards":[1,2,3],"values":[0,0,0],"gamma":1,"lam":1,"ratios":[1,1,1]}"#).unwrap();
        assert_eq!(input.epsilon, 0.2);
        let r = score_trajectory(&input).unwrap();
        assert_eq!(r.advantages, vec![6.0, 5.0, 3.0]);
        assert_eq!(r.returns, vec![6.0, 5.0, 3.0]);
        assert_eq!(r.value_loss, Some(70.0 / 3.0));
        assert_eq!(r.clip_objective, Some(14.0 / 3.0));
    }
}
