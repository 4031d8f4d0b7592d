//! Losses, categorical helpers and divergences, each with the derivative
//! the agents backpropagate.

use crate::error::{check_len, NnError, Result};

/// Floor applied to the second argument of [`kl_divergence`].
pub const KL_FLOOR: f64 = 1e-8;

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Huber loss of one prediction and its derivative in `pred`.
pub fn huber(pred: f64, target: f64, delta: f64) -> (f64, f64) {
    let e = pred - target;
    if e.abs() <= delta {
        (0.5 * e * e, e)
    } else {
        (delta * (e.abs() - 0.5 * delta), delta * e.signum())
    }
}

/// `min(ratio·A, clip(ratio, 1−ε, 1+ε)·A)` and its derivative in `ratio`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> (f64, f64) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    if unclipped <= clipped {
        (unclipped, advantage)
    } else {
        (clipped, 0.0)
    }
}

/// Shannon entropy in nats.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// Gradient of the entropy of `softmax(logits)` with respect to the logits.
pub fn entropy_logit_grad(probs: &[f64]) -> Vec<f64> {
    let logp: Vec<f64> = probs.iter().map(|p| p.max(f64::MIN_POSITIVE).ln()).collect();
    let h = entropy(probs);
    probs.iter().zip(&logp).map(|(p, lp)| -p * (lp + h)).collect()
}

/// `Σ p_i log(p_i / max(q_i, 1e-8))`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    check_len("categorical", p.len(), q.len())?;
    if p.iter().chain(q).any(|x| !x.is_finite() || *x < 0.0) {
        return Err(NnError::NonFinite("categorical probabilities".into()));
    }
    let kl: f64 = p
        .iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi.max(KL_FLOOR)).ln())
        .sum();
    Ok(kl.max(0.0))
}

/// Rescales `grads` in place to L2 norm at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}
