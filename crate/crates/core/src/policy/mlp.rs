use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::params::ParamVector;
use crate::autodiff::{Tape, Tensor, Var};

/// Feed-forward categorical policy with tanh hidden layers.
///
/// Segment layout: optional `bias` (the learned vector appended to every
/// observation), then `w0, b0, w1, b1, ...`, then `w_out, b_out`, then the
/// optional value head `v_w, v_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpPolicy {
    pub obs_len: usize,
    pub n_actions: usize,
    pub hidden: Vec<usize>,
    pub bias_len: usize,
    pub value_head: bool,
}

pub(crate) fn normal_tensor<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Tensor {
    let n: usize = shape.iter().product();
    if std == 0.0 {
        return Tensor::zeros(shape);
    }
    let d = Normal::new(0.0, std).expect("finite std");
    Tensor::new(shape.to_vec(), (0..n).map(|_| d.sample(rng)).collect())
}

impl MlpPolicy {
    pub fn new(obs_len: usize, n_actions: usize, hidden: Vec<usize>) -> Self {
        MlpPolicy {
            obs_len,
            n_actions,
            hidden,
            bias_len: 0,
            value_head: false,
        }
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.obs_len + self.bias_len];
        w.extend(&self.hidden);
        w
    }

    fn build(&self, mut tensor: impl FnMut(&[usize], f64) -> Tensor) -> ParamVector {
        let mut p = ParamVector::new();
        if self.bias_len > 0 {
            p.push("bias", tensor(&[self.bias_len], 0.0));
        }
        let widths = self.widths();
        for (i, pair) in widths.windows(2).enumerate() {
            p.push(format!("w{i}"), tensor(&[pair[0], pair[1]], (1.0 / pair[0] as f64).sqrt()));
            p.push(format!("b{i}"), tensor(&[pair[1]], 0.0));
        }
        let last = *widths.last().unwrap();
        p.push("w_out", tensor(&[last, self.n_actions], 0.01));
        p.push("b_out", tensor(&[self.n_actions], 0.0));
        if self.value_head {
            p.push("v_w", tensor(&[last, 1], 0.0));
            p.push("v_b", tensor(&[1], 0.0));
        }
        p
    }

    /// Hidden weights ~ N(0, 1/fan_in), output weights ~ N(0, 0.01²), biases
    /// and the value head zero.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        self.build(|shape, std| normal_tensor(shape, std, rng))
    }

    pub fn zeros(&self) -> ParamVector {
        self.build(|shape, _| Tensor::zeros(shape))
    }

    /// Logits `[n, A]` and, with a value head, values `[n]` for a batch of
    /// observations `[n, obs_len]`.
    pub fn forward<'t>(&self, p: &[Var<'t>], obs: Var<'t>) -> (Var<'t>, Option<Var<'t>>) {
        let n = obs.shape()[0];
        let mut k = 0;
        let mut h = obs;
        if self.bias_len > 0 {
            h = Var::concat(&[h, p[0].broadcast_rows(n)], 1);
            k = 1;
        }
        for _ in &self.hidden {
            h = h.matmul(p[k]).add_row(p[k + 1]).tanh();
            k += 2;
        }
        let logits = h.matmul(p[k]).add_row(p[k + 1]);
        let values = self
            .value_head
            .then(|| h.matmul(p[k + 2]).add_row(p[k + 3]).reshape(&[n]));
        (logits, values)
    }

    pub fn log_probs<'t>(&self, p: &[Var<'t>], obs: Var<'t>) -> Var<'t> {
        self.forward(p, obs).0.log_softmax()
    }

    /// Log-probabilities for one observation under frozen parameters.
    pub fn act(&self, params: &ParamVector, obs: &[f64]) -> Vec<f64> {
        let tape = Tape::new();
        let p = params.to_constants(&tape);
        let x = tape.constant(Tensor::matrix(1, obs.len(), obs.to_vec()));
        self.log_probs(&p, x).value().into_vec()
    }

    pub fn value(&self, params: &ParamVector, obs: &[f64]) -> Option<f64> {
        let tape = Tape::new();
        let p = params.to_constants(&tape);
        let x = tape.constant(Tensor::matrix(1, obs.len(), obs.to_vec()));
        self.forward(&p, x).1.map(|v| v.value().item())
    }
}
