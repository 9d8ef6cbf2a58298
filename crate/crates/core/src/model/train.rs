//! Single-threaded training loop with deterministic batching, dropout and
//! resumable optimizer state.

use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::batch::{Batch, Example};
use super::checkpoint;
use super::objective::{forward, loss_and_grad, BatchStats};
use super::optim::{AdamState, OptimizerConfig};
use super::params::ModelParams;
use super::tensor::argmax;
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from, stage_seed};

const DIVERGENCE_LOSS: f64 = 1e4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub log_every: usize,
    /// Write a checkpoint every this many steps (0 disables).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 1000,
            batch_size: 32,
            optimizer: OptimizerConfig::default(),
            seed: 0,
            log_every: 50,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad value {value:?} for {key}")))
        }
        let o = &mut self.optimizer;
        match key {
            "steps" => self.steps = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "log_every" => self.log_every = parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "lr" => o.lr = parse(key, value)?,
            "beta1" => o.beta1 = parse(key, value)?,
            "beta2" => o.beta2 = parse(key, value)?,
            "eps" => o.eps = parse(key, value)?,
            "weight_decay" => o.weight_decay = parse(key, value)?,
            "warmup_frac" => o.warmup_frac = parse(key, value)?,
            "clip_norm" => {
                let v: f64 = parse(key, value)?;
                o.clip_norm = (v > 0.0).then_some(v);
            }
            _ => return Ok(false),
        }
        Ok(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub loss: f64,
    pub token_acc: f64,
    pub op_acc: f64,
}

pub struct Trainer<'a> {
    params: ModelParams<f32>,
    state: AdamState<f32>,
    data: &'a [Example],
    cfg: TrainConfig,
    curve: Vec<CurvePoint>,
    perm: Option<(usize, Vec<usize>)>,
    checkpoint_path: Option<PathBuf>,
}

impl<'a> Trainer<'a> {
    pub fn new(params: ModelParams<f32>, data: &'a [Example], cfg: TrainConfig) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if cfg.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        let state = AdamState::new(&params);
        Ok(Trainer {
            params,
            state,
            data,
            cfg,
            curve: Vec::new(),
            perm: None,
            checkpoint_path: None,
        })
    }

    /// Continues from a checkpoint written by [`Trainer::save`].
    pub fn resume(path: &Path, data: &'a [Example], cfg: TrainConfig) -> Result<Self> {
        let params = checkpoint::load(path)?;
        let state = checkpoint::load_optimizer(&checkpoint::optimizer_path(path))?;
        let mut t = Trainer::new(params, data, cfg)?;
        t.state = state;
        Ok(t)
    }

    /// Periodic checkpoints go to `path` (and its `.opt` sibling).
    pub fn with_checkpoints(mut self, path: PathBuf) -> Self {
        self.checkpoint_path = Some(path);
        self
    }

    pub fn step_count(&self) -> usize {
        self.state.step
    }

    pub fn params(&self) -> &ModelParams<f32> {
        &self.params
    }

    pub fn into_params(self) -> ModelParams<f32> {
        self.params
    }

    pub fn curve(&self) -> &[CurvePoint] {
        &self.curve
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(&self.params, path)?;
        checkpoint::save_optimizer(&self.state, &self.params.config, &checkpoint::optimizer_path(path))
    }

    fn example_index(&mut self, global: usize) -> usize {
        let n = self.data.len();
        let epoch = global / n;
        if self.perm.as_ref().map(|(e, _)| *e) != Some(epoch) {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng_from(derive_seed(stage_seed(self.cfg.seed, "order"), epoch as u64)));
            self.perm = Some((epoch, order));
        }
        self.perm.as_ref().unwrap().1[global % n]
    }

    /// One optimizer step on the next batch.
    pub fn step(&mut self) -> Result<BatchStats> {
        let step = self.state.step;
        let bs = self.cfg.batch_size;
        let idx: Vec<usize> = (0..bs).map(|r| self.example_index(step * bs + r)).collect();
        let rows: Vec<&Example> = idx.iter().map(|&i| &self.data[i]).collect();
        let batch = Batch::from_examples(&rows);
        let dropout_seed = derive_seed(stage_seed(self.cfg.seed, "dropout"), step as u64);
        let (stats, mut grads) = match loss_and_grad(&self.params, &batch, Some(dropout_seed)) {
            Err(Error::NoSupervisedPositions) => {
                // Nothing to learn from; count the step and move on.
                self.state.step += 1;
                return Ok(BatchStats::default());
            }
            other => other?,
        };
        if !stats.loss.is_finite() || stats.loss > DIVERGENCE_LOSS {
            return Err(Error::Diverged {
                step,
                loss: stats.loss,
            });
        }
        let lr = self.cfg.optimizer.lr_at(step, self.cfg.steps);
        self.state
            .update(&mut self.params, &mut grads, &self.cfg.optimizer, lr);
        if let Some(name) = self.params.first_non_finite() {
            return Err(Error::NonFiniteParameter(name));
        }
        let step = self.state.step;
        if self.cfg.log_every > 0 && (step % self.cfg.log_every == 0 || step == 1) {
            self.curve.push(CurvePoint {
                step,
                loss: stats.loss,
                token_acc: stats.token_acc(),
                op_acc: stats.op_acc(),
            });
            info!(
                "step {step}: loss {:.4} token_acc {:.3} op_acc {:.3} lr {lr:.2e}",
                stats.loss,
                stats.token_acc(),
                stats.op_acc()
            );
        }
        if self.cfg.checkpoint_every > 0 && step % self.cfg.checkpoint_every == 0 {
            if let Some(path) = self.checkpoint_path.clone() {
                self.save(&path)?;
            }
        }
        Ok(stats)
    }

    /// Steps until `target` (capped at the configured total).
    pub fn run_until(&mut self, target: usize) -> Result<()> {
        while self.state.step < target.min(self.cfg.steps) {
            self.step()?;
        }
        Ok(())
    }

    pub fn run(&mut self) -> Result<()> {
        self.run_until(self.cfg.steps)
    }
}

/// Trains `params` on `data` for `cfg.steps` steps.
pub fn train(
    params: ModelParams<f32>,
    data: &[Example],
    cfg: &TrainConfig,
) -> Result<(ModelParams<f32>, Vec<CurvePoint>)> {
    let mut t = Trainer::new(params, data, cfg.clone())?;
    t.run()?;
    let curve = t.curve.clone();
    Ok((t.into_params(), curve))
}

/// Evaluation-mode loss and accuracies over supervised positions.
pub fn evaluate(params: &ModelParams<f32>, data: &[Example], batch_size: usize) -> Result<BatchStats> {
    let mut stats = BatchStats::default();
    let mut tok_loss = 0.0;
    let mut op_loss = 0.0;
    for chunk in data.chunks(batch_size.max(1)) {
        let batch = Batch::from_examples(chunk);
        let logits = forward(params, &batch)?;
        for k in (0..batch.input_ids.len()).filter(|&k| batch.loss_mask[k]) {
            let t = logits.token_at(k);
            let o = logits.op_at(k);
            let tt = batch.target_ids[k] as usize;
            let ot = batch.target_ops[k].label();
            tok_loss += (super::tensor::log_sum_exp(t) - t[tt]) as f64;
            op_loss += (super::tensor::log_sum_exp(o) - o[ot]) as f64;
            stats.token_correct += usize::from(argmax(t) == tt);
            stats.op_correct += usize::from(argmax(o) == ot);
            stats.supervised += 1;
        }
    }
    if stats.supervised == 0 {
        warn!("evaluation set has no supervised positions");
        return Ok(stats);
    }
    stats.token_loss = tok_loss / stats.supervised as f64;
    stats.op_loss = op_loss / stats.supervised as f64;
    stats.loss = stats.token_loss + stats.op_loss;
    Ok(stats)
}
