//! Per-feature z-score normalization, fit on training data only.

use serde::{Deserialize, Serialize};

use crate::data::schema::{FeatureSchema, FlowRecord};

/// Mean and population standard deviation per continuous feature. The
/// standard deviation is floored at 1e-8 so constant features normalize to
/// zero instead of dividing by zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

const STD_FLOOR: f64 = 1e-8;

/// Fit stats over the training records. Call with the training partition
/// only; the API takes the records to fit on so test data never leaks in.
pub fn fit_normalization(records: &[FlowRecord], schema: &FeatureSchema) -> NormalizationStats {
    let n_feat = schema.n_continuous();
    let n = records.len().max(1) as f64;
    let mut mean = vec![0.0; n_feat];
    for r in records {
        for (m, &v) in mean.iter_mut().zip(&r.continuous) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let mut var = vec![0.0; n_feat];
    for r in records {
        for ((s, &m), &v) in var.iter_mut().zip(&mean).zip(&r.continuous) {
            let d = v - m;
            *s += d * d;
        }
    }
    let std = var
        .into_iter()
        .map(|s| (s / n).sqrt().max(STD_FLOOR))
        .collect();
    NormalizationStats { mean, std }
}

/// Apply z-scoring in place. Binary features pass through unchanged.
pub fn apply_normalization(
    records: &mut [FlowRecord],
    stats: &NormalizationStats,
    schema: &FeatureSchema,
) {
    for r in records {
        for (i, v) in r.continuous.iter_mut().enumerate() {
            if !schema.continuous[i].binary {
                *v = (*v - stats.mean[i]) / stats.std[i];
            }
        }
    }
}
