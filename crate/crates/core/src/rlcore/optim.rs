use serde::{Deserialize, Serialize};

use crate::autodiff::Var;
use crate::policy::ParamVector;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("non-finite gradient in segment `{segment}`")]
pub struct NonFiniteGradient {
    pub segment: String,
}

/// Scales `grads` so that their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &ParamVector, max_norm: f64) -> Result<(ParamVector, f64), NonFiniteGradient> {
    if let Some(segment) = grads.non_finite_segment() {
        return Err(NonFiniteGradient { segment: segment.to_string() });
    }
    let norm = grads.norm();
    if norm > max_norm {
        Ok((grads.scale(max_norm / norm), norm))
    } else {
        Ok((grads.clone(), norm))
    }
}

/// `θ − α g`.
pub fn sgd_step(params: &ParamVector, grads: &ParamVector, alpha: f64) -> ParamVector {
    params.zip_map(grads, |p, g| p - alpha * g)
}

/// `θ − α g` recorded on the tape, so later losses can differentiate through it.
pub fn sgd_step_vars<'t>(params: &[Var<'t>], grads: &[Var<'t>], alpha: f64) -> Vec<Var<'t>> {
    assert_eq!(params.len(), grads.len(), "segment count mismatch");
    params.iter().zip(grads).map(|(&p, &g)| p - g.scale(alpha)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &ParamVector, grads: &ParamVector) -> ParamVector {
        assert!(params.same_schema(grads), "gradient schema does not match parameters");
        let g = grads.flatten();
        if self.m.is_empty() {
            self.m = vec![0.0; g.len()];
            self.v = vec![0.0; g.len()];
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut theta = params.flatten();
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g[i] * g[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            theta[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
        params.unflatten(&theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd(f64),
    Adam(f64),
}

/// Clips then applies one update. Adam state lives in `adam` and is created
/// on first use.
pub fn optimizer_step(
    kind: OptimizerKind,
    adam: &mut Option<Adam>,
    params: &ParamVector,
    grads: &ParamVector,
    max_grad_norm: f64,
) -> Result<ParamVector, NonFiniteGradient> {
    let (clipped, _) = clip_grad_norm(grads, max_grad_norm)?;
    Ok(match kind {
        OptimizerKind::Sgd(alpha) => sgd_step(params, &clipped, alpha),
        OptimizerKind::Adam(lr) => adam.get_or_insert_with(|| Adam::new(lr)).step(params, &clipped),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Tape, Tensor};

    fn pv(vals: &[f64]) -> ParamVector {
        let mut p = ParamVector::new();
        p.push("x", Tensor::vector(vals.to_vec()));
        p
    }

    #[test]
    fn clipping_rescales_to_max_norm() {
        let (g, before) = clip_grad_norm(&pv(&[1.2, 1.6]), 1.0).unwrap();
        assert_eq!(before, 2.0);
        assert!((g.norm() - 1.0).abs() < 1e-15);
        let (g, _) = clip_grad_norm(&pv(&[0.3, 0.4]), 1.0).unwrap();
        assert_eq!(g, pv(&[0.3, 0.4]));
    }

    #[test]
    fn non_finite_gradient_names_segment() {
        let err = clip_grad_norm(&pv(&[f64::NAN]), 1.0).unwrap_err();
        assert_eq!(err.segment, "x");
    }

    #[test]
    fn sgd_on_half_square() {
        let theta = pv(&[1.0]);
        // ∇(θ²/2) = θ
        assert_eq!(sgd_step(&theta, &theta, 0.01), pv(&[0.99]));
        let tape = Tape::new();
        let p = tape.param(Tensor::vector(vec![1.0]));
        let g = tape.grad_graph((p * p).scale(0.5).sum(), &[p]).unwrap();
        assert_eq!(sgd_step_vars(&[p], &g, 0.01)[0].value().data(), &[0.99]);
    }

    #[test]
    fn adam_first_steps_match_hand_recurrence() {
        let mut adam = Adam::new(1e-3);
        let theta = pv(&[0.5, -2.0]);
        let g1 = pv(&[0.1, -4.0]);
        let t1 = adam.step(&theta, &g1);
        // First step: m̂ = g, v̂ = g², so the step is lr·g/(|g|+eps).
        for (i, &g) in [0.1f64, -4.0].iter().enumerate() {
            let expected = theta.flatten()[i] - 1e-3 * g / (g.abs() + 1e-8);
            assert!((t1.flatten()[i] - expected).abs() < 1e-15);
        }
        let g2 = pv(&[0.3, 1.0]);
        let t2 = adam.step(&t1, &g2);
        for (i, (&a, &b)) in [0.1f64, -4.0].iter().zip(&[0.3f64, 1.0]).enumerate() {
            let m = 0.9 * (0.1 * a) + 0.1 * b;
            let v = 0.999 * (0.001 * a * a) + 0.001 * b * b;
            let mhat = m / (1.0 - 0.81);
            let vhat = v / (1.0 - 0.999f64.powi(2));
            let expected = t1.flatten()[i] - 1e-3 * mhat / (vhat.sqrt() + 1e-8);
            assert!((t2.flatten()[i] - expected).abs() < 1e-15);
        }
    }
}
