use rand::Rng;

use crate::autodiff::log_softmax_row;

/// Draws from the categorical distribution given by `logits` and returns the
/// action with its log-probability.
pub fn sample_action<R: Rng + ?Sized>(logits: &[f64], rng: &mut R) -> (usize, f64) {
    let lp = log_softmax_row(logits);
    sample_from_log_probs(&lp, rng)
}

/// Same as [`sample_action`] for already normalised log-probabilities.
pub fn sample_from_log_probs<R: Rng + ?Sized>(log_probs: &[f64], rng: &mut R) -> (usize, f64) {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (a, &lp) in log_probs.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return (a, lp);
        }
    }
    // Rounding left the cumulative sum just under u; take the last action
    // with nonzero mass.
    let a = log_probs
        .iter()
        .rposition(|lp| lp.exp() > 0.0)
        .expect("distribution has mass");
    (a, log_probs[a])
}
