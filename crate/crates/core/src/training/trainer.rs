use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{loss_gradients, optimizer_step, total_loss, OptimizerState, TrainConfig, TrainError};
use crate::data::{rescale, Dataset};
use crate::eval::{mape_by_lane, mape_overall};
use crate::model::{backward, forward, init_params, stack_lanes, ArchConfig, Batch, Checkpoint, ModelError, ModelParams};
use crate::nn::{Matrix, Parameters};
use crate::seed::derive_seed;

/// Rows per forward pass when scoring a whole dataset.
const EVAL_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub lane_losses: Vec<f64>,
    pub val_mape: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Training-set loss of the initial parameters.
    pub initial: Option<EpochLog>,
    /// One entry per completed epoch.
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn last(&self) -> Option<&EpochLog> {
        self.epochs.last()
    }

    /// Comma-separated table with columns `epoch,L,L_1..L_N,val_mape`; the
    /// initial loss is row `0`.
    pub fn to_delimited(&self) -> String {
        let lanes = self.epochs.first().or(self.initial.as_ref()).map_or(0, |e| e.lane_losses.len());
        let mut out = String::from("epoch,L");
        for n in 1..=lanes {
            out.push_str(&format!(",L_{n}"));
        }
        out.push_str(",val_mape\n");
        for e in self.initial.iter().chain(&self.epochs) {
            out.push_str(&format!("{},{}", e.epoch, e.loss));
            for l in &e.lane_losses {
                out.push_str(&format!(",{l}"));
            }
            match e.val_mape {
                Some(v) => out.push_str(&format!(",{v}\n")),
                None => out.push_str(",\n"),
            }
        }
        out
    }
}

/// Predictions for every row of `data`, `M x N`, in training scale.
pub fn predict_dataset(params: &ModelParams, arch: &ArchConfig, data: &Dataset) -> Result<Matrix, ModelError> {
    let mut out = Matrix::zeros(data.len(), arch.num_lanes);
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let (batch, _) = data.batch(chunk);
        let (o, _) = forward(&batch, params, arch)?;
        let p = stack_lanes(&o.predictions);
        for (r, &i) in chunk.iter().enumerate() {
            out.row_mut(i).copy_from_slice(p.row(r));
        }
    }
    Ok(out)
}

/// Total and per-lane loss over all of `data` from a fresh forward pass.
pub fn dataset_loss(params: &ModelParams, arch: &ArchConfig, data: &Dataset) -> Result<(f64, Vec<f64>), TrainError> {
    let preds = predict_dataset(params, arch, data)?;
    let columns: Vec<Matrix> = (0..preds.cols()).map(|n| Matrix::column_vector(&preds.column(n))).collect();
    total_loss(&columns, &data.targets)
}

fn validation_mape(params: &ModelParams, arch: &ArchConfig, data: &Dataset) -> Result<f64, TrainError> {
    let preds = predict_dataset(params, arch, data)?;
    Ok(mape_overall(&mape_by_lane(&rescale(&preds), &rescale(&data.targets))?)?)
}

/// Stateful optimizer loop over one model.
#[derive(Clone, Debug)]
pub struct Trainer {
    arch: ArchConfig,
    config: TrainConfig,
    params: ModelParams,
    state: OptimizerState,
    epoch: usize,
}

impl Trainer {
    /// Fresh parameters drawn from the `init` stream of `config.seed`.
    pub fn new(arch: ArchConfig, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let params = init_params(&arch, derive_seed(config.seed, "init"))?;
        Self::with_params(arch, config, params)
    }

    pub fn with_params(arch: ArchConfig, config: TrainConfig, params: ModelParams) -> Result<Self, TrainError> {
        config.validate()?;
        params.check_shapes(&arch)?;
        let state = OptimizerState::new(config.optimizer, params.num_params());
        Ok(Trainer { arch, config, params, state, epoch: 0 })
    }

    /// Resumes from `ck`. Optimizer memory is restored when the checkpoint
    /// carries state for the configured optimizer, and reset otherwise.
    pub fn from_checkpoint(ck: &Checkpoint, config: TrainConfig) -> Result<Self, TrainError> {
        let mut t = Self::with_params(ck.arch.clone(), config, ck.params.clone())?;
        if let Some(state) = &ck.optimizer {
            if state.kind() == t.config.optimizer {
                t.state = state.clone();
            } else {
                log::warn!("checkpoint optimizer {:?} differs from configured {:?}; state reset", state.kind(), t.config.optimizer);
            }
        }
        t.epoch = ck.epoch;
        Ok(t)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// One optimizer update on `batch`; returns the loss before the update.
    pub fn step(&mut self, batch: &Batch, targets: &Matrix) -> Result<(f64, Vec<f64>), TrainError> {
        let (out, cache) = forward(batch, &self.params, &self.arch)?;
        let loss = total_loss(&out.predictions, targets)?;
        let grads = backward(&loss_gradients(&out.predictions, targets)?, &cache, &self.params, &self.arch)?;
        optimizer_step(&mut self.params, &grads, &mut self.state, &self.config)?;
        Ok(loss)
    }

    /// Row visiting order for the next epoch.
    pub fn epoch_order(&self, len: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..len).collect();
        if self.config.shuffle {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, &format!("shuffle/{}", self.epoch)));
            order.shuffle(&mut rng);
        }
        order
    }

    /// One pass over `data` in mini-batches; the last batch may be short.
    pub fn run_epoch(&mut self, data: &Dataset) -> Result<(), TrainError> {
        let order = self.epoch_order(data.len());
        for chunk in order.chunks(self.config.batch_size) {
            let (batch, targets) = data.batch(chunk);
            self.step(&batch, &targets)?;
        }
        self.epoch += 1;
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(self.arch.clone(), self.config.seed, self.params.clone());
        ck.epoch = self.epoch;
        ck.optimizer = Some(self.state.clone());
        ck
    }
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub final_checkpoint: Checkpoint,
    /// Checkpoint with the lowest validation MAPE, when validation data was given.
    pub best_checkpoint: Option<Checkpoint>,
    pub log: TrainLog,
}

fn check_dataset(arch: &ArchConfig, data: &Dataset, what: &str) -> Result<(), TrainError> {
    if data.is_empty() {
        return Err(TrainError::InvalidConfig(format!("{what} set is empty")));
    }
    if data.num_lanes() != arch.num_lanes || data.aux_dim() != arch.aux_dim || data.series.cols() != arch.series_len {
        return Err(TrainError::InvalidConfig(format!(
            "{what} set has {} lanes, {} aux columns, series length {}; architecture expects {}, {}, {}",
            data.num_lanes(),
            data.aux_dim(),
            data.series.cols(),
            arch.num_lanes,
            arch.aux_dim,
            arch.series_len
        )));
    }
    Ok(())
}

fn is_divergence(e: &TrainError) -> bool {
    matches!(e, TrainError::NonFiniteGradient | TrainError::Model(ModelError::NonFinite(_)))
}

/// Trains a fresh model for `config.epochs` epochs.
///
/// Losses are recomputed on the whole training set after every epoch. A
/// non-finite loss or gradient stops training with
/// [`TrainError::Diverged`], which carries the log so far.
pub fn fit(train: &Dataset, val: Option<&Dataset>, arch: &ArchConfig, config: &TrainConfig) -> Result<FitOutcome, TrainError> {
    config.validate()?;
    arch.validate()?;
    check_dataset(arch, train, "training")?;
    if let Some(v) = val {
        check_dataset(arch, v, "validation")?;
    }
    let mut trainer = Trainer::new(arch.clone(), config.clone())?;
    let mut log = TrainLog::default();
    let (l0, ln0) = dataset_loss(trainer.params(), arch, train)?;
    log.initial = Some(EpochLog { epoch: 0, loss: l0, lane_losses: ln0, val_mape: None });
    let mut best: Option<(f64, Checkpoint)> = None;

    for _ in 0..config.epochs {
        let epoch = trainer.epoch() + 1;
        let diverged = |reason: String, log: &TrainLog| TrainError::Diverged { epoch, reason, log: Box::new(log.clone()) };
        match trainer.run_epoch(train) {
            Err(e) if is_divergence(&e) => return Err(diverged(e.to_string(), &log)),
            r => r?,
        }
        let (loss, lane_losses) = match dataset_loss(trainer.params(), arch, train) {
            Err(e) if is_divergence(&e) => return Err(diverged(e.to_string(), &log)),
            r => r?,
        };
        if !loss.is_finite() {
            return Err(diverged(format!("training loss {loss}"), &log));
        }
        let val_mape = val.map(|v| validation_mape(trainer.params(), arch, v)).transpose()?;
        if let Some(m) = val_mape {
            if best.as_ref().is_none_or(|(b, _)| m < *b) {
                best = Some((m, trainer.checkpoint()));
            }
        }
        log::debug!("epoch {epoch}: L = {loss:.6e}");
        log.epochs.push(EpochLog { epoch, loss, lane_losses, val_mape });
    }
    Ok(FitOutcome { final_checkpoint: trainer.checkpoint(), best_checkpoint: best.map(|(_, c)| c), log })
}
