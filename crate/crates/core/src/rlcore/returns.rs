use super::trajectory::Trajectory;

/// Reward-to-go `R_t = Σ_{j≥t} γ^{j−t} r_j`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    assert!((0.0..=1.0).contains(&gamma), "gamma {gamma} outside [0, 1]");
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Returns over a whole trial with explore-episode rewards removed from the
/// sum. Timesteps of explore episodes still receive the discounted exploit
/// rewards that follow them. Output is split back per episode.
pub fn masked_returns(trial: &[Trajectory], gamma: f64) -> Vec<Vec<f64>> {
    assert!(trial.iter().any(|t| !t.explore), "trial has no exploit episode");
    let masked: Vec<f64> = trial
        .iter()
        .flat_map(|t| t.rewards.iter().map(move |&r| if t.explore { 0.0 } else { r }))
        .collect();
    let flat = discounted_returns(&masked, gamma);
    let mut out = Vec::with_capacity(trial.len());
    let mut offset = 0;
    for t in trial {
        out.push(flat[offset..offset + t.len()].to_vec());
        offset += t.len();
    }
    out
}

/// Generalised advantage estimate for one episode. `values[t]` estimates the
/// state at `t`; the value after the last step is taken as zero.
pub fn gae_advantages(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    assert!((0.0..=1.0).contains(&lambda), "GAE lambda {lambda} outside [0, 1]");
    assert_eq!(rewards.len(), values.len(), "one value per reward");
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let next = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next - values[t];
        acc = delta + gamma * lambda * acc;
        adv[t] = acc;
    }
    adv
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageBatch {
    pub advantages: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub normalized: bool,
}

/// Shifts and scales to zero mean, unit (population) standard deviation.
/// Batches with fewer than two entries or no variance are left unchanged.
pub fn normalize_advantages(advantages: Vec<f64>) -> AdvantageBatch {
    let n = advantages.len() as f64;
    let mean = if advantages.is_empty() { 0.0 } else { advantages.iter().sum::<f64>() / n };
    let var = if advantages.is_empty() {
        0.0
    } else {
        advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n
    };
    let std = var.sqrt();
    if advantages.len() < 2 || std < 1e-12 {
        log::warn!("advantage batch of {} entries has no variance; left unnormalized", advantages.len());
        return AdvantageBatch { advantages, mean, std, normalized: false };
    }
    let advantages = advantages.iter().map(|a| (a - mean) / std).collect();
    AdvantageBatch { advantages, mean, std, normalized: true }
}
