use rand::Rng;

use super::mlp::normal_tensor;
use super::params::ParamVector;
use crate::autodiff::{Tape, Tensor, Var};

/// Gated recurrent policy for RL².
///
/// ```text
/// z  = σ(x W_z + h U_z + b_z)
/// r  = σ(x W_r + h U_r + b_r)
/// n  = tanh(x W_n + (r ⊙ h) U_n + b_n)
/// h' = h + z ⊙ (n − h)
/// logits = h' W_out + b_out
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GruPolicy {
    pub obs_len: usize,
    pub n_actions: usize,
    pub hidden: usize,
}

/// Recurrent input: current observation, one-hot previous action, previous
/// reward and previous done flag. `prev` is `None` at the start of a trial.
pub fn rl2_input(obs: &[f64], prev: Option<(usize, f64, bool)>, n_actions: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity(obs.len() + n_actions + 2);
    x.extend_from_slice(obs);
    let mut onehot = vec![0.0; n_actions];
    let (mut r, mut d) = (0.0, 0.0);
    if let Some((a, reward, done)) = prev {
        onehot[a] = 1.0;
        r = reward;
        d = if done { 1.0 } else { 0.0 };
    }
    x.extend(onehot);
    x.push(r);
    x.push(d);
    x
}

impl GruPolicy {
    pub fn new(obs_len: usize, n_actions: usize, hidden: usize) -> Self {
        GruPolicy { obs_len, n_actions, hidden }
    }

    pub fn input_len(&self) -> usize {
        self.obs_len + self.n_actions + 2
    }

    fn build(&self, mut tensor: impl FnMut(&[usize], f64) -> Tensor) -> ParamVector {
        let (i, h) = (self.input_len(), self.hidden);
        let mut p = ParamVector::new();
        for gate in ["z", "r", "n"] {
            p.push(format!("w_{gate}"), tensor(&[i, h], (1.0 / i as f64).sqrt()));
            p.push(format!("u_{gate}"), tensor(&[h, h], (1.0 / h as f64).sqrt()));
            p.push(format!("b_{gate}"), tensor(&[h], 0.0));
        }
        p.push("w_out", tensor(&[h, self.n_actions], 0.01));
        p.push("b_out", tensor(&[self.n_actions], 0.0));
        p
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        self.build(|shape, std| normal_tensor(shape, std, rng))
    }

    pub fn zeros(&self) -> ParamVector {
        self.build(|shape, _| Tensor::zeros(shape))
    }

    pub fn initial_state(&self) -> Vec<f64> {
        vec![0.0; self.hidden]
    }

    /// One recurrent step on rows `h: [n, H]`, `x: [n, input_len]`.
    /// Returns `(logits [n, A], h' [n, H])`.
    pub fn step<'t>(&self, p: &[Var<'t>], h: Var<'t>, x: Var<'t>) -> (Var<'t>, Var<'t>) {
        let gate = |k: usize, hin: Var<'t>| x.matmul(p[k]) + hin.matmul(p[k + 1]);
        let z = gate(0, h).add_row(p[2]).sigmoid();
        let r = gate(3, h).add_row(p[5]).sigmoid();
        let n = gate(6, r * h).add_row(p[8]).tanh();
        let h_next = h + z * (n - h);
        let logits = h_next.matmul(p[9]).add_row(p[10]);
        (logits, h_next)
    }

    /// Frozen single step: log-probabilities and the next hidden state.
    pub fn act(&self, params: &ParamVector, h: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let tape = Tape::new();
        let p = params.to_constants(&tape);
        let hv = tape.constant(Tensor::matrix(1, h.len(), h.to_vec()));
        let xv = tape.constant(Tensor::matrix(1, x.len(), x.to_vec()));
        let (logits, h_next) = self.step(&p, hv, xv);
        (logits.log_softmax().value().into_vec(), h_next.value().into_vec())
    }
}
