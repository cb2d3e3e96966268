//! Train-and-evaluate over a list of sequence lengths.

use crate::data::schema::{FeatureSchema, FlowRecord};
use crate::data::windows::{make_windows, split_validation};
use crate::error::{Error, Result};
use crate::evaluation::evaluate_windows;
use crate::layers::model::ModelConfig;
use crate::training::trainer::{train, TrainConfig};

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub seq_len: usize,
    pub val_accuracy: f64,
    pub best_epoch: Option<usize>,
}

/// Render sweep rows as CSV.
pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("seq_len,val_accuracy,best_epoch\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.9},{}\n",
            r.seq_len,
            r.val_accuracy,
            r.best_epoch.map_or(String::new(), |e| e.to_string())
        ));
    }
    out
}

/// Train one model per sequence length under identical seeds and
/// hyperparameters and report the best validation accuracy per length.
pub fn sweep_sequence_length(
    model_cfg: &ModelConfig,
    schema: &FeatureSchema,
    records: &[FlowRecord],
    cfg: &TrainConfig,
    lengths: &[usize],
    val_fraction: f64,
) -> Result<Vec<SweepRow>> {
    if lengths.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one sequence length".into()));
    }
    let mut rows = Vec::with_capacity(lengths.len());
    for &seq_len in lengths {
        let windows = make_windows(records.to_vec(), seq_len)?;
        let (train_ws, val_ws) = split_validation(&windows, val_fraction, cfg.seed)?;
        let mut run_cfg = cfg.clone();
        run_cfg.sequence_length = seq_len;
        let outcome = train(model_cfg, schema, &train_ws, &val_ws, &run_cfg)?;
        let val_accuracy = match outcome.best_val_accuracy {
            Some(acc) => acc,
            None => evaluate_windows(&outcome.params, &val_ws)?.accuracy,
        };
        rows.push(SweepRow { seq_len, val_accuracy, best_epoch: outcome.best_epoch });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{synth_generate, SynthConfig};
    use crate::layers::model::{EmbedMode, ModelKind, Task};
    use crate::training::loss::LossMode;

    #[test]
    fn single_length_gives_one_row() {
        let (schema, records) = synth_generate(&SynthConfig::new(150, 2, 2, 3)).unwrap();
        let mcfg = ModelConfig::new(&schema, Task::Binary, ModelKind::Lstm, EmbedMode::Learned)
            .with_hidden(4);
        let mut cfg = TrainConfig::new(Task::Binary, LossMode::M2M, 2, 3);
        cfg.epochs = 2;
        cfg.batch_size = 32;
        cfg.log_stdout = false;
        cfg.dropout_rate = 0.0;
        let rows = sweep_sequence_length(&mcfg, &schema, &records, &cfg, &[2], 0.1).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].seq_len, 2);
        assert!(rows[0].val_accuracy >= 0.0 && rows[0].val_accuracy <= 1.0);
        assert!(sweep_sequence_length(&mcfg, &schema, &records, &cfg, &[], 0.1).is_err());
        let csv = sweep_to_csv(&rows);
        assert!(csv.starts_with("seq_len,"));
        assert_eq!(csv.lines().count(), 2);
    }
}
