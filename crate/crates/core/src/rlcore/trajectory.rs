use std::fmt::Write;

use crate::envs::StepInfo;

/// One episode.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Log-probability of each action under the sampling-time policy.
    pub log_probs: Vec<f64>,
    /// Explore episodes have their rewards masked out of trial returns.
    pub explore: bool,
    pub task_id: usize,
    /// Counters reported by the environment at the last step.
    pub info: StepInfo,
}

impl Trajectory {
    pub fn new(task_id: usize, explore: bool) -> Self {
        Trajectory { task_id, explore, ..Trajectory::default() }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn push(&mut self, obs: Vec<f64>, action: usize, log_prob: f64, reward: f64, done: bool) {
        assert!(log_prob.is_finite(), "non-finite log-probability recorded");
        self.observations.push(obs);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.dones.push(done);
    }

    /// Debug dump: one tab-separated line per step with
    /// `t, action, reward, done, log_prob, explore_flag`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for t in 0..self.len() {
            writeln!(
                out,
                "{t}\t{}\t{}\t{}\t{}\t{}",
                self.actions[t],
                self.rewards[t],
                u8::from(self.dones[t]),
                self.log_probs[t],
                u8::from(self.explore)
            )
            .expect("writing to a String");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_has_one_line_per_step() {
        let mut t = Trajectory::new(0, true);
        t.push(vec![0.0], 2, -1.5, 0.0, false);
        t.push(vec![0.0], 1, -0.25, 1.0, true);
        assert_eq!(t.dump(), "0\t2\t0\t0\t-1.5\t1\n1\t1\t1\t1\t-0.25\t1\n");
    }
}
