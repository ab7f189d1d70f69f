//! Imitation training of the graph policy against the one-step expert.

mod adam;
mod backward;
mod loss;

pub use adam::{adam_step, AdamConfig, AdamState, DecayMode};
pub use backward::backward;
pub use loss::{margin_rank_loss, mse_loss, StepSupervision};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{sample_episode, Episode, FeaturePool, TaskProtocol};
use crate::error::{Error, Result};
use crate::policies::{argmax_by_id, expert_scores};
use crate::policy_graph::{forward_scores, PolicyConfig, PolicyParams};
use crate::protonet::compute_prototypes;
use crate::scalar::Real;
use crate::seed::{rng_for, Stream};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    #[default]
    MarginRank,
    Mse,
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossMode::MarginRank => "margin",
            LossMode::Mse => "mse",
        })
    }
}

impl FromStr for LossMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "margin" | "margin_rank" => Ok(LossMode::MarginRank),
            "mse" => Ok(LossMode::Mse),
            _ => Err(Error::Config(format!("unknown loss `{s}` (expected margin or mse)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_tasks: usize,
    pub optimizer: AdamConfig,
    pub loss_mode: LossMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { iterations: 2000, batch_tasks: 16, optimizer: AdamConfig::default(), loss_mode: LossMode::MarginRank, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let lr = self.optimizer.learning_rate;
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        if self.batch_tasks < 1 {
            return Err(Error::Config("batch_tasks must be at least 1".into()));
        }
        let o = &self.optimizer;
        if !(o.weight_decay >= 0.0 && (0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2) && o.epsilon > 0.0) {
            return Err(Error::Config("invalid optimizer hyperparameters".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iter: usize,
    pub mean_loss: f64,
    pub mean_eval_acc: f64,
}

/// Result of one supervised rollout.
#[derive(Clone, Debug)]
pub struct Rollout<T> {
    /// Summed over steps; divide by `steps` for the per-step mean.
    pub loss_sum: T,
    pub steps: usize,
    /// Summed over steps.
    pub grads: PolicyParams<T>,
    pub final_accuracy: T,
}

/// Accuracy of the current labeled set on E, or 0 when no class is labeled.
fn current_accuracy<T: Real>(episode: &Episode<'_, T>) -> Result<T> {
    if episode.labeled_len() == 0 {
        return Ok(T::zero());
    }
    compute_prototypes(episode.labeled()).evaluate_accuracy(episode.eval())
}

/// Rolls the episode forward with the policy's own picks until the budget
/// is spent, collecting the expert-supervised loss and gradients per step.
pub fn rollout<T: Real>(mut episode: Episode<'_, T>, params: &PolicyParams<T>, mode: LossMode) -> Result<Rollout<T>> {
    let mut grads = params.zeros_like();
    let mut loss_sum = T::zero();
    let mut steps = 0;
    while episode.remaining_budget() > 0 {
        let step = steps;
        let attach = |e: Error| Error::AtStep { step, source: Box::new(e) };
        let expert = expert_scores(&episode).map_err(attach)?;
        let trace = forward_scores(&episode, params).map_err(attach)?;
        let scores = trace.scores.to_vec();
        let current_accuracy = match mode {
            LossMode::MarginRank => T::zero(),
            LossMode::Mse => current_accuracy(&episode).map_err(attach)?,
        };
        let sup = StepSupervision { ids: expert.ids, expert: expert.accuracies, scores, current_accuracy };
        let (loss, dscores) = match mode {
            LossMode::MarginRank => margin_rank_loss(&sup),
            LossMode::Mse => mse_loss(&sup),
        }
        .map_err(attach)?;
        if dscores.iter().any(|g| *g != T::zero()) {
            let g = backward(&trace, params, &dscores).map_err(attach)?;
            grads.add_scaled(&g, T::one());
        }
        loss_sum += loss;
        let pick = argmax_by_id(&sup.ids, &sup.scores);
        episode.reveal_label(sup.ids[pick]).map_err(attach)?;
        steps += 1;
    }
    let final_accuracy = if episode.labeled_len() == 0 {
        T::one() / T::from_usize(episode.ways()).unwrap()
    } else {
        current_accuracy(&episode)?
    };
    Ok(Rollout { loss_sum, steps, grads, final_accuracy })
}

/// Stateful meta-training loop; one [`Trainer::step`] is one optimizer update.
pub struct Trainer<'p, T> {
    pool: &'p FeaturePool<T>,
    protocol: TaskProtocol,
    config: TrainConfig,
    params: PolicyParams<T>,
    adam: AdamState<T>,
    iteration: usize,
}

impl<'p, T: Real> Trainer<'p, T> {
    pub fn new(
        pool: &'p FeaturePool<T>,
        protocol: TaskProtocol,
        policy: &PolicyConfig,
        config: TrainConfig,
    ) -> Result<Self> {
        let params = PolicyParams::init(policy, &mut rng_for(config.seed, 0, Stream::Init))?;
        Self::with_params(pool, protocol, params, config)
    }

    /// Starts from given weights instead of a fresh initialization.
    pub fn with_params(
        pool: &'p FeaturePool<T>,
        protocol: TaskProtocol,
        params: PolicyParams<T>,
        config: TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        protocol.validate()?;
        let pc = &params.config;
        pc.validate()?;
        if pc.ways != protocol.ways || pc.setting != protocol.setting || pc.feature_dim != pool.dim() {
            return Err(Error::Config(format!(
                "policy built for {}-way {} start on dim {}, but tasks are {}-way {} start on dim {}",
                pc.ways,
                pc.setting,
                pc.feature_dim,
                protocol.ways,
                protocol.setting,
                pool.dim()
            )));
        }
        if pool.classes().len() < protocol.ways {
            return Err(Error::NotEnoughClasses { have: pool.classes().len(), need: protocol.ways });
        }
        let adam = AdamState::new(&params);
        Ok(Self { pool, protocol, config, params, adam, iteration: 0 })
    }

    pub fn params(&self) -> &PolicyParams<T> {
        &self.params
    }

    pub fn into_params(self) -> PolicyParams<T> {
        self.params
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.config.iterations
    }

    /// Samples a batch, rolls every task out in parallel, reduces the
    /// gradients in batch order and applies one Adam update.
    pub fn step(&mut self) -> Result<IterationLog> {
        let iter = self.iteration;
        let batch = self.config.batch_tasks;
        let pool = self.pool;
        let protocol = &self.protocol;
        let params = &self.params;
        let seed = self.config.seed;
        let mode = self.config.loss_mode;
        let results: Vec<Result<Rollout<T>>> = (0..batch)
            .into_par_iter()
            .map(|b| {
                let index = (iter * batch + b) as u64;
                let mut rng = rng_for(seed, index, Stream::Episode);
                let episode = sample_episode(pool, protocol, &mut rng)?;
                rollout(episode, params, mode)
            })
            .collect();
        let mut grads = self.params.zeros_like();
        let mut loss = T::zero();
        let mut acc = T::zero();
        let mut steps = 0usize;
        for r in results {
            let r = r?;
            grads.add_scaled(&r.grads, T::one());
            loss += r.loss_sum;
            acc += r.final_accuracy;
            steps += r.steps;
        }
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss(iter));
        }
        let mean_loss = if steps > 0 { loss / T::from_usize(steps).unwrap() } else { T::zero() };
        if steps > 0 {
            grads.scale(T::one() / T::from_usize(steps).unwrap());
            adam_step(&mut self.params, &grads, &mut self.adam, &self.config.optimizer)?;
        }
        self.iteration += 1;
        Ok(IterationLog {
            iter,
            mean_loss: mean_loss.to_f64_lossy(),
            mean_eval_acc: (acc / T::from_usize(batch).unwrap()).to_f64_lossy(),
        })
    }
}

/// Runs `config.iterations` updates from a seeded initialization.
pub fn meta_train<T: Real>(
    pool: &FeaturePool<T>,
    protocol: TaskProtocol,
    policy: &PolicyConfig,
    config: TrainConfig,
) -> Result<(PolicyParams<T>, Vec<IterationLog>)> {
    let mut trainer = Trainer::new(pool, protocol, policy, config)?;
    let mut log = Vec::with_capacity(trainer.config.iterations);
    while !trainer.is_done() {
        log.push(trainer.step()?);
    }
    Ok((trainer.into_params(), log))
}
