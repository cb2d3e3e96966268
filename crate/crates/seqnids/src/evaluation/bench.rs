//! Per-sequence prediction-time measurement across sequence lengths.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::schema::FlowRecord;
use crate::data::windows::make_windows;
use crate::error::{Error, Result};
use crate::layers::model::{predict_probs, ModelParams};

#[derive(Clone, Debug)]
pub struct TimingRow {
    pub seq_len: usize,
    pub seconds_per_sequence: f64,
}

pub fn timing_to_csv(rows: &[TimingRow]) -> String {
    let mut out = String::from("seq_len,seconds_per_sequence\n");
    for r in rows {
        out.push_str(&format!("{},{:.9}\n", r.seq_len, r.seconds_per_sequence));
    }
    out
}

const WARMUP_RUNS: usize = 5;

fn synthetic_records(params: &ModelParams, n: usize, seed: u64) -> Vec<FlowRecord> {
    let cfg = &params.config;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| FlowRecord {
            continuous: (0..cfg.n_continuous).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            cats: cfg.vocab_sizes.iter().map(|&t| rng.gen_range(0..t) as u32).collect(),
            multi_label: 0,
            binary_label: 0,
        })
        .collect()
}

/// Median wall-clock seconds of one full-window forward pass (dropout
/// disabled) per sequence length, after warm-up runs. At least 30
/// repetitions are required for the median to mean anything.
pub fn benchmark_prediction_time(
    params: &ModelParams,
    lengths: &[usize],
    repetitions: usize,
) -> Result<Vec<TimingRow>> {
    if lengths.is_empty() || lengths.iter().any(|&l| l < 1) {
        return Err(Error::InvalidArgument("lengths must be nonempty, each >= 1".into()));
    }
    if repetitions < 30 {
        return Err(Error::InvalidArgument(format!(
            "need at least 30 repetitions for a stable median, got {repetitions}"
        )));
    }
    let mut rows = Vec::with_capacity(lengths.len());
    for &seq_len in lengths {
        let records = synthetic_records(params, seq_len, 0x42454e43 ^ seq_len as u64);
        let windows = make_windows(records, seq_len)?;
        let window = windows.window(seq_len - 1); // fully populated, no padding

        for _ in 0..WARMUP_RUNS {
            std::hint::black_box(predict_probs(params, &window)?);
        }
        let mut samples = Vec::with_capacity(repetitions);
        for _ in 0..repetitions {
            let t0 = Instant::now();
            std::hint::black_box(predict_probs(params, &window)?);
            samples.push(t0.elapsed().as_secs_f64());
        }
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mid = samples.len() / 2;
        let median = if samples.len() % 2 == 0 {
            0.5 * (samples[mid - 1] + samples[mid])
        } else {
            samples[mid]
        };
        rows.push(TimingRow { seq_len, seconds_per_sequence: median });
    }
    Ok(rows)
}

/// Least-squares fit `seconds = intercept + slope * seq_len`; returns
/// `(slope, intercept, r_squared)`.
pub fn linear_fit_r2(rows: &[TimingRow]) -> (f64, f64, f64) {
    let n = rows.len() as f64;
    let mean_x = rows.iter().map(|r| r.seq_len as f64).sum::<f64>() / n;
    let mean_y = rows.iter().map(|r| r.seconds_per_sequence).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for r in rows {
        let dx = r.seq_len as f64 - mean_x;
        let dy = r.seconds_per_sequence - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
    }
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let intercept = mean_y - slope * mean_x;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for r in rows {
        let fit = intercept + slope * r.seq_len as f64;
        ss_res += (r.seconds_per_sequence - fit).powi(2);
        ss_tot += (r.seconds_per_sequence - mean_y).powi(2);
    }
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    (slope, intercept, r2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{synth_generate, SynthConfig};
    use crate::layers::model::{EmbedMode, ModelConfig, ModelKind, ModelParams, Task};

    fn small_params() -> ModelParams {
        let (schema, _) = synth_generate(&SynthConfig::new(50, 2, 2, 1)).unwrap();
        let cfg = ModelConfig::new(&schema, Task::Binary, ModelKind::Lstm, EmbedMode::Learned)
            .with_hidden(8);
        ModelParams::init(&cfg, &schema, 1).unwrap()
    }

    #[test]
    fn single_length_single_row() {
        let params = small_params();
        let rows = benchmark_prediction_time(&params, &[5], 30).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].seconds_per_sequence > 0.0);
        assert!(benchmark_prediction_time(&params, &[5], 10).is_err());
        assert!(benchmark_prediction_time(&params, &[], 30).is_err());
    }

    #[test]
    fn fit_recovers_an_exact_line() {
        let rows: Vec<TimingRow> = [10usize, 60, 110, 160]
            .iter()
            .map(|&l| TimingRow { seq_len: l, seconds_per_sequence: 2e-5 * l as f64 + 1e-4 })
            .collect();
        let (slope, intercept, r2) = linear_fit_r2(&rows);
        assert!((slope - 2e-5).abs() < 1e-12);
        assert!((intercept - 1e-4).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_flags_nonlinearity() {
        let rows: Vec<TimingRow> = [10usize, 60, 110, 160, 210]
            .iter()
            .map(|&l| TimingRow {
                seq_len: l,
                seconds_per_sequence: 1e-6 * (l as f64) * (l as f64),
            })
            .collect();
        let (_, _, r2) = linear_fit_r2(&rows);
        assert!(r2 < 0.999, "quadratic growth should not fit a line perfectly: {r2}");
    }
}
