//! Finite-difference checks of every tape primitive and a few composed nets.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use super::Check;
use crate::autodiff::{finite_difference_check, Tape, Tensor, Var};
use crate::policy::{rl2_input, GruPolicy, MlpPolicy};
use crate::rlcore::{surrogate_loss, SurrogateKind, SurrogateSpec};
use crate::rng;

const H: f64 = 1e-5;
const FIRST_ORDER_TOL: f64 = 1e-6;
const SECOND_ORDER_TOL: f64 = 1e-4;

fn fd<F>(name: &str, f: F, theta: &[Tensor], tol: f64) -> Check
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    match finite_difference_check(f, theta, H) {
        Ok(err) => Check::at_most(name, err, tol),
        Err(e) => Check::failed(name, e.to_string()),
    }
}

/// Fixed pseudo-random weights of `v`'s shape, so reductions see every
/// element with a distinct coefficient.
fn readout<'t>(v: Var<'t>) -> Var<'t> {
    let shape = v.shape();
    let n: usize = shape.iter().product();
    let c: Vec<f64> = (0..n).map(|i| (0.7 * i as f64 + 0.3).cos()).collect();
    (v * v.tape().constant(Tensor::new(shape, c))).sum()
}

fn normal(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
}

/// Normal draws pushed at least 0.2 away from zero, for ops with a kink there.
fn away_from_zero(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    normal(shape, rng).map(|x| if x >= 0.0 { x + 0.2 } else { x - 0.2 })
}

pub fn primitives() -> Vec<Check> {
    let mut r = rng::seeded(11);
    let a = normal(&[3, 4], &mut r);
    let b = normal(&[3, 4], &mut r);
    let m = normal(&[4, 2], &mut r);
    let v = normal(&[4], &mut r);
    let s = normal(&[1], &mut r);
    let k = away_from_zero(&[3, 4], &mut r);
    let ab = vec![a.clone(), b.clone()];
    let one = vec![a.clone()];
    vec![
        fd("add", |_, p| readout(p[0] + p[1]), &ab, FIRST_ORDER_TOL),
        fd("sub", |_, p| readout(p[0] - p[1]), &ab, FIRST_ORDER_TOL),
        fd("mul", |_, p| readout(p[0] * p[1]), &ab, FIRST_ORDER_TOL),
        fd("div", |_, p| readout(p[0] / (p[1] * p[1]).offset(0.5)), &ab, FIRST_ORDER_TOL),
        fd("neg", |_, p| readout(-p[0]), &one, FIRST_ORDER_TOL),
        fd("scale", |_, p| readout(p[0].scale(-1.7)), &one, FIRST_ORDER_TOL),
        fd("offset", |_, p| readout(p[0].offset(0.4) * p[0]), &one, FIRST_ORDER_TOL),
        fd("matmul", |_, p| readout(p[0].matmul(p[1])), &[a.clone(), m.clone()], FIRST_ORDER_TOL),
        fd("transpose", |_, p| readout(p[0].t()), &one, FIRST_ORDER_TOL),
        fd("tanh", |_, p| readout(p[0].tanh()), &one, FIRST_ORDER_TOL),
        fd("sigmoid", |_, p| readout(p[0].sigmoid()), &one, FIRST_ORDER_TOL),
        fd("relu", |_, p| readout(p[0].relu()), std::slice::from_ref(&k), FIRST_ORDER_TOL),
        fd("exp", |_, p| readout(p[0].exp()), &one, FIRST_ORDER_TOL),
        fd("ln", |_, p| readout((p[0] * p[0]).offset(0.3).ln()), &one, FIRST_ORDER_TOL),
        fd("sum", |_, p| (p[0] * p[0]).sum(), &one, FIRST_ORDER_TOL),
        fd("mean", |_, p| (p[0] * p[0]).mean(), &one, FIRST_ORDER_TOL),
        fd("sum_last", |_, p| readout(p[0].sum_last()), &one, FIRST_ORDER_TOL),
        fd("broadcast_last", |_, p| readout(p[0].broadcast_last(3)), std::slice::from_ref(&v), FIRST_ORDER_TOL),
        fd("sum_rows", |_, p| readout(p[0].sum_rows()), &one, FIRST_ORDER_TOL),
        fd("broadcast_rows", |_, p| readout(p[0].broadcast_rows(3)), std::slice::from_ref(&v), FIRST_ORDER_TOL),
        fd("broadcast_scalar", |_, p| readout(p[0].broadcast_to(&[2, 3])), std::slice::from_ref(&s), FIRST_ORDER_TOL),
        fd("add_row", |_, p| readout(p[0].add_row(p[1])), &[a.clone(), v.clone()], FIRST_ORDER_TOL),
        fd("concat", |_, p| readout(Var::concat(&[p[0], p[1]], 1)), &ab, FIRST_ORDER_TOL),
        fd("slice", |_, p| readout(p[0].slice(1, 1, 2)), &one, FIRST_ORDER_TOL),
        fd("index_select", |_, p| readout(p[0].index_select(vec![0, 5, 5, 11])), &one, FIRST_ORDER_TOL),
        fd(
            "index_scatter",
            |_, p| readout(p[0].index_scatter(Arc::new(vec![2, 0, 2, 1]), &[5])),
            std::slice::from_ref(&v),
            FIRST_ORDER_TOL,
        ),
        fd("gather_rows", |_, p| readout(p[0].gather_rows(&[3, 0, 1])), &one, FIRST_ORDER_TOL),
        fd("log_softmax", |_, p| readout(p[0].log_softmax()), &one, FIRST_ORDER_TOL),
        fd("clip", |_, p| readout(p[0].clip(-0.1, 0.1)), std::slice::from_ref(&k), FIRST_ORDER_TOL),
        fd("clip_interior", |_, p| readout(p[0].scale(0.01).clip(-5.0, 5.0)), &one, FIRST_ORDER_TOL),
        fd("minimum", |_, p| readout(p[0].minimum(p[1])), &[k.clone(), k.map(|x| -x * 0.5)], FIRST_ORDER_TOL),
        fd("reshape", |_, p| readout(p[0].reshape(&[2, 6])), &one, FIRST_ORDER_TOL),
    ]
}

pub fn composed() -> Vec<Check> {
    let mut r = rng::seeded(12);
    let x = normal(&[5, 4], &mut r);
    let net = vec![normal(&[4, 8], &mut r), normal(&[8], &mut r), normal(&[8, 3], &mut r), normal(&[3], &mut r)];
    let two_layer = fd(
        "net: 4-8-3 log-softmax",
        |tape, p| {
            let h = tape.constant(x.clone()).matmul(p[0]).add_row(p[1]).tanh();
            h.matmul(p[2]).add_row(p[3]).log_softmax().gather_rows(&[0, 1, 2, 0, 1]).sum()
        },
        &net,
        FIRST_ORDER_TOL,
    );

    let policy = MlpPolicy::new(4, 3, vec![6]);
    let theta = policy.init(&mut r).map(|v| v + 0.3);
    let actions = [0, 2, 1, 1, 0];
    let old = [-1.0, -1.2, -0.9, -1.1, -1.05];
    let adv = [0.5, -1.0, 1.5, 0.2, -0.3];
    let spec = SurrogateSpec { kind: SurrogateKind::Ppo, clip: 0.2, ent_coeff: 0.01 };
    let ppo = fd(
        "net: policy PPO surrogate",
        |tape, p| surrogate_loss(policy.log_probs(p, tape.constant(x.clone())), &actions, &old, &adv, spec),
        &theta.tensors(),
        FIRST_ORDER_TOL,
    );

    let gru = GruPolicy::new(2, 4, 5);
    let gtheta = gru.init(&mut r);
    let inputs: Vec<Vec<f64>> = (0..4)
        .map(|t| rl2_input(&[0.1 * t as f64, -0.3], (t > 0).then_some((t % 4, 0.5, t == 2)), 4))
        .collect();
    let recurrent = fd(
        "net: GRU unrolled 4 steps",
        |tape, p| {
            let mut h = tape.constant(Tensor::matrix(1, 5, vec![0.0; 5]));
            let mut total = tape.scalar(0.0);
            for (t, x) in inputs.iter().enumerate() {
                let (logits, h2) = gru.step(p, h, tape.constant(Tensor::matrix(1, x.len(), x.clone())));
                total = total + logits.log_softmax().gather_rows(&[t % 4]).sum();
                h = h2;
            }
            total
        },
        &gtheta.tensors(),
        FIRST_ORDER_TOL,
    );

    let q = vec![normal(&[2, 3], &mut r)];
    let xs = Tensor::matrix(2, 2, vec![0.5, -1.0, 1.5, 0.25]);
    let second = fd(
        "second order: gradient through one SGD step",
        |tape, p| {
            let x = tape.constant(xs.clone());
            let inner = |w| x.matmul(w).log_softmax().gather_rows(&[0, 2]).sum().scale(-1.0);
            let g = tape.grad_graph(inner(p[0]), &[p[0]]).expect("finite inner gradient")[0];
            inner(p[0] - g.scale(0.3))
        },
        &q,
        SECOND_ORDER_TOL,
    );
    vec![two_layer, ppo, recurrent, second]
}

pub fn suite() -> Vec<Check> {
    let mut out = primitives();
    out.extend(composed());
    out
}
