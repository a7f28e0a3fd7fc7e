use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ops::{RfSample, TimestepDist};
use super::optim::{AdamState, AdamW};
use crate::conditioning::ConditioningPack;
use crate::error::{ensure, Error, Result};
use crate::graph::Grads;
use crate::model::VelocityModel;
use crate::rng::rng_for;
use crate::{Mat, Scalar};

const STEP_STREAM: u64 = 0x57E9;

/// Ground-truth latent window plus the pack that conditions it.
#[derive(Debug, Clone)]
pub struct TrainExample<S> {
    pub x1: Mat<S>,
    pub pack: ConditioningPack<S>,
}

/// One optimizer step on the batch-mean loss. Returns the loss measured
/// before the update.
pub fn train_step<S: Scalar>(
    model: &mut VelocityModel<S>,
    batch: &[(RfSample<S>, &ConditioningPack<S>)],
    opt: &AdamW,
    state: &mut AdamState<S>,
) -> Result<S> {
    ensure!(!batch.is_empty(), InvalidArgument, "training batch is empty");
    let k = S::one() / S::lit(batch.len() as f64);
    let mut total = Grads::zeros_like(model.params());
    let mut loss = S::zero();
    for (sample, pack) in batch {
        let (l, g) = model.loss_and_grads(&sample.xt, pack, sample.t, &sample.vt)?;
        loss += l * k;
        total.accumulate(&g, k);
    }
    if !loss.is_finite() || !total.all_finite() {
        return Err(Error::NonFinite(format!(
            "training loss {loss} or its gradient is not finite; aborting before the update"
        )));
    }
    opt.update(model.params_mut(), &mut total, state)?;
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub timestep: TimestepDist,
    pub optimizer: AdamW,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 2,
            seed: 0,
            timestep: TimestepDist::Uniform,
            optimizer: AdamW::default(),
        }
    }
}

/// Model, optimizer state and step counter. All randomness of step `n`
/// comes from `(seed, n)`, so a run resumed from a checkpoint continues
/// exactly as an uninterrupted one would.
#[derive(Debug, Clone)]
pub struct Trainer<S> {
    pub model: VelocityModel<S>,
    pub state: AdamState<S>,
    pub config: TrainConfig,
}

impl<S: Scalar> Trainer<S> {
    pub fn new(model: VelocityModel<S>, config: TrainConfig) -> Self {
        let state = AdamState::new(model.params());
        Self { model, state, config }
    }

    pub fn step_count(&self) -> u64 {
        self.state.step
    }

    /// Draws a batch (with replacement), noise and timesteps for the next
    /// step and applies it.
    pub fn step(&mut self, examples: &[TrainExample<S>]) -> Result<S> {
        ensure!(!examples.is_empty(), InvalidArgument, "no training examples");
        let mut rng = rng_for(self.config.seed ^ STEP_STREAM, self.state.step);
        let mut batch = Vec::with_capacity(self.config.batch_size);
        for _ in 0..self.config.batch_size.max(1) {
            let ex = &examples[rng.random_range(0..examples.len())];
            let sample = RfSample::draw(ex.x1.clone(), &self.config.timestep, &mut rng)?;
            batch.push((sample, &ex.pack));
        }
        train_step(&mut self.model, &batch, &self.config.optimizer, &mut self.state)
    }

    /// Runs until `config.steps`, calling `on_step(step, loss)` after each.
    pub fn run(&mut self, examples: &[TrainExample<S>], mut on_step: impl FnMut(u64, S)) -> Result<()> {
        while self.state.step < self.config.steps {
            let loss = self.step(examples)?;
            on_step(self.state.step, loss);
        }
        Ok(())
    }
}
