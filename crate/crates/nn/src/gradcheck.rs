//! Central finite-difference verification of the analytic gradients.

use rand::Rng;

use crate::error::Result;
use crate::loss::{huber, log_softmax, softmax};
use crate::mlp::{Head, Mlp};

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Scalar losses on the network output used for checking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckHead {
    /// Weighted sum of the raw outputs.
    Linear,
    /// Huber loss of every output against a target.
    Huber,
    /// Negative weighted log-probability of one action plus an entropy
    /// bonus, through a softmax.
    Policy,
}

pub const ALL_HEADS: [CheckHead; 3] = [CheckHead::Linear, CheckHead::Huber, CheckHead::Policy];

struct Case {
    weights: Vec<f64>,
    action: usize,
}

fn loss_and_grad(head: CheckHead, case: &Case, out: &[f64], n: usize) -> (f64, Vec<f64>) {
    let k = out.len() / n;
    let mut loss = 0.0;
    let mut grad = vec![0.0; out.len()];
    for i in 0..n {
        let o = &out[i * k..(i + 1) * k];
        let g = &mut grad[i * k..(i + 1) * k];
        let w = &case.weights[i * k..(i + 1) * k];
        match head {
            CheckHead::Linear => {
                for j in 0..k {
                    loss += w[j] * o[j];
                    g[j] = w[j];
                }
            }
            CheckHead::Huber => {
                for j in 0..k {
                    let (l, d) = huber(o[j], 3.0 * w[j], 1.0);
                    loss += l;
                    g[j] = d;
                }
            }
            CheckHead::Policy => {
                let p = softmax(o);
                let lp = log_softmax(o);
                let a = case.action % k;
                let adv = w[0];
                let beta = 0.01;
                let h = -p.iter().zip(&lp).map(|(x, y)| x * y).sum::<f64>();
                loss += -adv * lp[a] - beta * h;
                for j in 0..k {
                    let onehot = if j == a { 1.0 } else { 0.0 };
                    g[j] = -adv * (onehot - p[j]) + beta * p[j] * (lp[j] + h);
                }
            }
        }
    }
    (loss, grad)
}

/// Largest relative error between analytic and central-difference
/// gradients over every parameter of one random network and batch.
/// Components whose absolute difference is below 1e-8 count as exact.
pub fn check_random_case<R: Rng + ?Sized>(head: CheckHead, rng: &mut R) -> Result<f64> {
    let nin = rng.gen_range(1..7);
    let nh1 = rng.gen_range(1..9);
    let nh2 = rng.gen_range(1..9);
    let nout = rng.gen_range(1..5);
    let sizes = [nin, nh1, nh2, nout];
    let mut net = Mlp::orthogonal(&sizes, Head::Linear, 1.4, 1.0, rng)?;
    for p in net.params_mut() {
        *p += rng.gen_range(-0.3..0.3);
    }
    let n = rng.gen_range(1..4);
    let x: Vec<f64> = (0..n * nin)
        .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(-2.0..2.0) })
        .collect();
    let case = Case { weights: (0..n * nout).map(|_| rng.gen_range(-1.0..1.0)).collect(), action: rng.gen_range(0..8) };
    let acts = net.forward(&x, n)?;
    let (_, dout) = loss_and_grad(head, &case, acts.output(), n);
    let mut g = vec![0.0; net.num_params()];
    net.backward(&x, &acts, &dout, &mut g)?;
    let mut worst: f64 = 0.0;
    for i in 0..net.num_params() {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + FD_STEP;
        let up = loss_and_grad(head, &case, net.forward(&x, n)?.output(), n).0;
        net.params_mut()[i] = orig - FD_STEP;
        let dn = loss_and_grad(head, &case, net.forward(&x, n)?.output(), n).0;
        net.params_mut()[i] = orig;
        let fd = (up - dn) / (2.0 * FD_STEP);
        let diff = (fd - g[i]).abs();
        if diff > 1e-8 {
            worst = worst.max(diff / fd.abs().max(g[i].abs()));
        }
    }
    Ok(worst)
}

/// Runs `cases` random checks cycling through the heads; returns the worst
/// relative error.
pub fn check_random_cases<R: Rng + ?Sized>(cases: usize, rng: &mut R) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for c in 0..cases {
        worst = worst.max(check_random_case(ALL_HEADS[c % ALL_HEADS.len()], rng)?);
    }
    Ok(worst)
}
