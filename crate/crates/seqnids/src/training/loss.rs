//! Cross-entropy and its per-sequence aggregation modes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How per-step losses of a window combine into one training signal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossMode {
    /// Many-to-many: every unmasked step's error trains the model (their
    /// mean). Labels of earlier packets carry signal that speeds training.
    M2M,
    /// Many-to-one: only the final step's error trains the model.
    M2O,
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossMode::M2M => write!(f, "m2m"),
            LossMode::M2O => write!(f, "m2o"),
        }
    }
}

impl FromStr for LossMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m2m" => Ok(LossMode::M2M),
            "m2o" => Ok(LossMode::M2O),
            other => Err(Error::InvalidArgument(format!("unknown loss mode `{other}`"))),
        }
    }
}

/// Negative log-likelihood of the labeled class, with the probability
/// floored at 1e-12 so a confidently wrong model yields a large finite loss.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    if label >= probs.len() {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            probs.len()
        )));
    }
    Ok(-probs[label].max(1e-12).ln())
}

/// Aggregate per-step losses: the final step for `M2O`, the mean of
/// unmasked steps for `M2M`. The mask flags real (non-padding) steps; the
/// final step must be real.
pub fn sequence_loss(step_losses: &[f64], step_mask: &[bool], mode: LossMode) -> Result<f64> {
    if step_losses.len() != step_mask.len() || step_losses.is_empty() {
        return Err(Error::InvalidArgument(
            "sequence_loss needs equal-length, nonempty losses and mask".into(),
        ));
    }
    if !step_mask.iter().any(|&m| m) {
        return Err(Error::InvalidArgument("all steps masked; nothing to train on".into()));
    }
    if !step_mask[step_mask.len() - 1] {
        return Err(Error::InvalidArgument("final step must be unmasked".into()));
    }
    Ok(match mode {
        LossMode::M2O => step_losses[step_losses.len() - 1],
        LossMode::M2M => {
            let n = step_mask.iter().filter(|&&m| m).count() as f64;
            step_losses
                .iter()
                .zip(step_mask)
                .filter(|(_, &m)| m)
                .map(|(&l, _)| l)
                .sum::<f64>()
                / n
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_reference_values() {
        assert_eq!(cross_entropy(&[0.0, 1.0], 1).unwrap(), 0.0);
        let uniform = vec![0.1; 10];
        assert!((cross_entropy(&uniform, 3).unwrap() - 2.302585092994046).abs() < 1e-12);
        assert!((cross_entropy(&[0.7, 0.3], 1).unwrap() - 1.2039728043259361).abs() < 1e-12);
        assert!(cross_entropy(&[0.5, 0.5], 2).is_err());
    }

    #[test]
    fn cross_entropy_is_finite_at_zero_probability() {
        let loss = cross_entropy(&[1.0, 0.0], 1).unwrap();
        assert!(loss.is_finite());
        assert!(loss > 20.0);
    }

    #[test]
    fn modes_coincide_for_single_step() {
        let l = [0.37];
        let m = [true];
        assert_eq!(
            sequence_loss(&l, &m, LossMode::M2M).unwrap(),
            sequence_loss(&l, &m, LossMode::M2O).unwrap()
        );
    }

    #[test]
    fn hand_computed_aggregations() {
        let losses = [1.0, 2.0, 3.0];
        let mask = [true, true, true];
        assert!((sequence_loss(&losses, &mask, LossMode::M2M).unwrap() - 2.0).abs() < 1e-15);
        assert!((sequence_loss(&losses, &mask, LossMode::M2O).unwrap() - 3.0).abs() < 1e-15);

        let losses = [9.0, 1.0, 2.0];
        let mask = [false, true, true];
        assert!((sequence_loss(&losses, &mask, LossMode::M2M).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn degenerate_masks_rejected() {
        assert!(sequence_loss(&[1.0], &[false], LossMode::M2M).is_err());
        assert!(sequence_loss(&[], &[], LossMode::M2M).is_err());
        assert!(sequence_loss(&[1.0, 2.0], &[true, false], LossMode::M2O).is_err());
    }

    #[test]
    fn m2m_is_a_convex_combination_and_m2o_its_final_term() {
        let losses = [0.3, 0.9, 2.1, 0.4];
        let mask = [false, true, true, true];
        let m2m = sequence_loss(&losses, &mask, LossMode::M2M).unwrap();
        let lo = losses
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(&l, _)| l)
            .fold(f64::INFINITY, f64::min);
        let hi = losses
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(&l, _)| l)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(m2m >= lo && m2m <= hi);
        assert_eq!(sequence_loss(&losses, &mask, LossMode::M2O).unwrap(), losses[3]);
    }
}
