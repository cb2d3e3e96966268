//! Mini-batch training loop with seeded shuffling, deterministic parallel
//! gradient reduction, validation-based model selection, and early stopping.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::schema::FeatureSchema;
use crate::data::windows::WindowSet;
use crate::error::{Error, Result};
use crate::evaluation::evaluate_windows;
use crate::layers::model::{model_backward, ModelConfig, ModelParams, Task};
use crate::training::loss::LossMode;
use crate::training::optimizer::{
    axpy_bundle, global_norm, optimizer_step, scale_bundle, AdamHyper, OptimizerState,
};
use crate::util::mix_seed;

/// Everything the training loop needs beyond the architecture itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: Task,
    pub loss_mode: LossMode,
    pub sequence_length: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout_rate: f64,
    pub seed: u64,
    pub early_stop_patience: usize,
    /// Worker-thread cap for batch parallelism; 0 uses the runtime default.
    pub threads: usize,
    /// Optional global-norm gradient clip.
    pub grad_clip: Option<f64>,
    /// Emit one log line per epoch to stdout.
    pub log_stdout: bool,
}

impl TrainConfig {
    pub fn new(task: Task, loss_mode: LossMode, sequence_length: usize, seed: u64) -> Self {
        Self {
            task,
            loss_mode,
            sequence_length,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 128,
            epochs: 100,
            dropout_rate: 0.5,
            seed,
            early_stop_patience: 10,
            threads: 0,
            grad_clip: None,
            log_stdout: true,
        }
    }

    pub fn adam(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// One row of the training log.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
    pub val_f1: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters with the best validation accuracy (final parameters when
    /// no validation set was given).
    pub params: ModelParams,
    pub history: Vec<EpochStats>,
    /// Training stopped because the loss went non-finite; `params` is the
    /// last good state.
    pub diverged: bool,
    pub best_epoch: Option<usize>,
    pub best_val_accuracy: Option<f64>,
}

/// Write the history as CSV (header + one row per epoch). The seconds
/// column is wall-clock measurement and varies across runs.
pub fn history_to_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,train_loss,val_accuracy,val_f1,seconds\n");
    for e in history {
        let fmt_opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.9}"));
        out.push_str(&format!(
            "{},{:.9},{},{},{:.3}\n",
            e.epoch,
            e.train_loss,
            fmt_opt(e.val_accuracy),
            fmt_opt(e.val_f1),
            e.seconds
        ));
    }
    out
}

/// Windows within one reduction chunk accumulate sequentially; chunk results
/// combine in chunk order. The tree shape is fixed by this constant, so the
/// result is bit-identical for any worker-thread count.
const REDUCTION_CHUNK: usize = 8;

fn batch_gradients(
    params: &ModelParams,
    windows: &WindowSet,
    batch: &[usize],
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<(f64, ModelParams)> {
    let pieces: Vec<(f64, ModelParams)> = batch
        .par_chunks(REDUCTION_CHUNK)
        .map(|chunk| -> Result<(f64, ModelParams)> {
            let mut loss = 0.0;
            let mut acc: Option<ModelParams> = None;
            for &wi in chunk {
                let window = windows.window(wi);
                let target_id = windows.targets()[wi] as u64;
                let mut drng = ChaCha8Rng::seed_from_u64(mix_seed(&[
                    cfg.seed,
                    0x44524f50,
                    epoch as u64,
                    target_id,
                ]));
                let (l, g) =
                    model_backward(params, &window, cfg.loss_mode, cfg.dropout_rate, &mut drng)?;
                loss += l;
                match &mut acc {
                    None => acc = Some(g),
                    Some(a) => axpy_bundle(a, &g, 1.0),
                }
            }
            Ok((loss, acc.expect("nonempty chunk")))
        })
        .collect::<Result<_>>()?;

    let mut iter = pieces.into_iter();
    let (mut loss, mut grads) = iter.next().expect("nonempty batch");
    for (l, g) in iter {
        loss += l;
        axpy_bundle(&mut grads, &g, 1.0);
    }
    let inv = 1.0 / batch.len() as f64;
    loss *= inv;
    scale_bundle(&mut grads, inv);
    Ok((loss, grads))
}

/// Train a freshly initialized model. Windows are shuffled each epoch
/// (seeded); gradients are batch means; model selection tracks the best
/// validation accuracy with early stopping after `early_stop_patience`
/// epochs without improvement. Bit-reproducible for fixed config and seed,
/// regardless of thread count.
pub fn train(
    model_cfg: &ModelConfig,
    schema: &FeatureSchema,
    train_windows: &WindowSet,
    val_windows: &WindowSet,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if model_cfg.task != cfg.task {
        return Err(Error::InvalidArgument(format!(
            "model task {} does not match training task {}",
            model_cfg.task, cfg.task
        )));
    }
    if train_windows.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if train_windows.seq_len() != cfg.sequence_length
        || (!val_windows.is_empty() && val_windows.seq_len() != cfg.sequence_length)
    {
        return Err(Error::InvalidArgument(format!(
            "window sets were built with a different sequence length than the config ({})",
            cfg.sequence_length
        )));
    }

    let mut params = ModelParams::init(model_cfg, schema, cfg.seed)?;
    let mut history = Vec::new();
    if cfg.epochs == 0 {
        return Ok(TrainOutcome {
            params,
            history,
            diverged: false,
            best_epoch: None,
            best_val_accuracy: None,
        });
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;

    let mut state = OptimizerState::new(&params);
    let hyper = cfg.adam();
    let mut best: Option<(usize, f64, ModelParams)> = None;
    let mut stall = 0usize;
    let mut diverged = false;

    let n = train_windows.len();
    let mut order: Vec<usize> = (0..n).collect();

    'epochs: for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, 0x53485546, epoch as u64]));
        order.shuffle(&mut shuffle_rng);

        let mut loss_weighted = 0.0;
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let step = pool.install(|| batch_gradients(&params, train_windows, batch, cfg, epoch));
            let (batch_loss, mut grads) = match step {
                Ok(x) => x,
                Err(Error::NonFiniteGradient { tensor }) => {
                    eprintln!(
                        "training diverged at epoch {epoch} (non-finite gradient in {tensor}); \
                         keeping last good parameters"
                    );
                    diverged = true;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            if !batch_loss.is_finite() {
                eprintln!("training diverged at epoch {epoch} (non-finite loss); keeping last good parameters");
                diverged = true;
                break 'epochs;
            }
            if let Some(clip) = cfg.grad_clip {
                let norm = global_norm(&grads);
                if norm > clip {
                    scale_bundle(&mut grads, clip / norm);
                }
            }
            optimizer_step(&mut params, &grads, &mut state, &hyper)?;
            loss_weighted += batch_loss * batch.len() as f64;
        }
        let train_loss = loss_weighted / n as f64;

        let (val_accuracy, val_f1) = if val_windows.is_empty() {
            (None, None)
        } else {
            let report = pool.install(|| evaluate_windows(&params, val_windows))?;
            (Some(report.accuracy), report.f1)
        };
        let seconds = started.elapsed().as_secs_f64();
        if cfg.log_stdout {
            println!(
                "epoch={epoch} loss={train_loss:.6} val_acc={} val_f1={} secs={seconds:.2}",
                val_accuracy.map_or("-".into(), |v| format!("{v:.4}")),
                val_f1.map_or("-".into(), |v| format!("{v:.4}")),
            );
        }
        history.push(EpochStats { epoch, train_loss, val_accuracy, val_f1, seconds });

        if let Some(acc) = val_accuracy {
            let improved = best.as_ref().map_or(true, |(_, b, _)| acc > *b);
            if improved {
                best = Some((epoch, acc, params.clone()));
                stall = 0;
            } else {
                stall += 1;
                if stall >= cfg.early_stop_patience {
                    break;
                }
            }
        }
    }

    let (best_epoch, best_val_accuracy, params) = match best {
        Some((e, a, p)) => (Some(e), Some(a), p),
        None => (None, None, params),
    };
    Ok(TrainOutcome { params, history, diverged, best_epoch, best_val_accuracy })
}
