use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy_graph::PolicyParams;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayMode {
    /// `p <- p (1 - lr wd)` before the Adam step.
    #[default]
    Decoupled,
    /// `g <- g + wd p` before the moment updates.
    Coupled,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub decay: DecayMode,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 3e-4, weight_decay: 5e-5, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, decay: DecayMode::Decoupled }
    }
}

/// First and second moments plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: PolicyParams<T>,
    pub v: PolicyParams<T>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &PolicyParams<T>) -> Self {
        Self { m: params.zeros_like(), v: params.zeros_like(), t: 0 }
    }
}

pub fn adam_step<T: Real>(
    params: &mut PolicyParams<T>,
    grads: &PolicyParams<T>,
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    let gblocks = grads.blocks();
    if gblocks.len() != state.m.blocks().len() {
        return Err(Error::Shape("gradient and optimizer state disagree".into()));
    }
    for (name, _, g) in &gblocks {
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
    }
    state.t += 1;
    let lr = T::lit(cfg.learning_rate);
    let wd = T::lit(cfg.weight_decay);
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let eps = T::lit(cfg.epsilon);
    let t = state.t as i32;
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    let shrink = T::one() - lr * wd;
    let pblocks = params.blocks_mut();
    let mblocks = state.m.blocks_mut();
    let vblocks = state.v.blocks_mut();
    for ((((name, p), (_, m)), (_, v)), (_, _, g)) in pblocks.into_iter().zip(mblocks).zip(vblocks).zip(gblocks) {
        if p.len() != g.len() {
            return Err(Error::Shape(format!("block `{name}` size mismatch")));
        }
        for i in 0..p.len() {
            let mut gi = g[i];
            match cfg.decay {
                DecayMode::Decoupled => p[i] *= shrink,
                DecayMode::Coupled => gi += wd * p[i],
            }
            m[i] = b1 * m[i] + (T::one() - b1) * gi;
            v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            p[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
