//! Adam with bias correction, over named tensor bundles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::model::ModelParams;
use crate::numerics::TensorBundle;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moment accumulators, shaped exactly like the parameters,
/// plus the step counter driving bias correction.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    m: ModelParams,
    v: ModelParams,
    step: u64,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> Self {
        Self { m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update, in place. Deterministic given inputs; rejects non-finite
/// gradients naming the offending tensor.
pub fn optimizer_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut OptimizerState,
    hyper: &AdamHyper,
) -> Result<()> {
    if let Some(tensor) = grads.first_non_finite() {
        return Err(Error::NonFiniteGradient { tensor: tensor.to_string() });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);

    for i in 0..params.tensor_count() {
        let g = grads.tensor(i).data().to_vec();
        let m = state.m.tensor_mut(i).data_mut();
        for (mj, &gj) in m.iter_mut().zip(&g) {
            *mj = hyper.beta1 * *mj + (1.0 - hyper.beta1) * gj;
        }
        let m_snapshot = state.m.tensor(i).data().to_vec();
        let v = state.v.tensor_mut(i).data_mut();
        for (vj, &gj) in v.iter_mut().zip(&g) {
            *vj = hyper.beta2 * *vj + (1.0 - hyper.beta2) * gj * gj;
        }
        let v_snapshot = state.v.tensor(i).data().to_vec();
        let p = params.tensor_mut(i).data_mut();
        for ((pj, &mj), &vj) in p.iter_mut().zip(&m_snapshot).zip(&v_snapshot) {
            let m_hat = mj / bc1;
            let v_hat = vj / bc2;
            *pj -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.epsilon);
        }
    }
    Ok(())
}

/// `dst += scale * src`, tensor by tensor.
pub(crate) fn axpy_bundle(dst: &mut ModelParams, src: &ModelParams, scale: f64) {
    for i in 0..dst.tensor_count() {
        let s = src.tensor(i).data().to_vec();
        for (d, &x) in dst.tensor_mut(i).data_mut().iter_mut().zip(&s) {
            *d += scale * x;
        }
    }
}

/// Multiply every parameter by `scale`.
pub(crate) fn scale_bundle(dst: &mut ModelParams, scale: f64) {
    for i in 0..dst.tensor_count() {
        for d in dst.tensor_mut(i).data_mut() {
            *d *= scale;
        }
    }
}

/// Euclidean norm across all tensors.
pub(crate) fn global_norm(bundle: &ModelParams) -> f64 {
    let mut acc = 0.0;
    for i in 0..bundle.tensor_count() {
        for &x in bundle.tensor(i).data() {
            acc += x * x;
        }
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::schema::FeatureSchema;
    use crate::layers::model::{EmbedMode, ModelConfig, ModelKind, Task};

    fn small_params(seed: u64) -> ModelParams {
        let schema = small_schema();
        let cfg = ModelConfig::new(&schema, Task::Binary, ModelKind::Lstm, EmbedMode::Learned)
            .with_hidden(2)
            .with_fc(2, 2);
        ModelParams::init(&cfg, &schema, seed).unwrap()
    }

    fn small_schema() -> FeatureSchema {
        use crate::data::schema::{CategoricalFeature, ContinuousFeature, Vocabulary};
        FeatureSchema {
            continuous: vec![ContinuousFeature { name: "f0".into(), binary: false }],
            categorical: vec![CategoricalFeature {
                name: "c0".into(),
                vocab: Vocabulary::from_values(["a", "b"]),
                embed_dim: 2,
            }],
            multi_label_column: "attack_cat".into(),
            binary_label_column: "label".into(),
            class_names: vec!["Normal".into(), "Attack".into()],
        }
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = small_params(1);
        let before = params.clone();
        let grads = params.zeros_like();
        let mut state = OptimizerState::new(&params);
        optimizer_step(&mut params, &grads, &mut state, &AdamHyper::default()).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_about_the_learning_rate() {
        // Scalar parameter 1.0, gradient 1.0, lr 0.1: bias-corrected first
        // step is lr * g/|g| up to epsilon.
        let mut params = small_params(2);
        let mut grads = params.zeros_like();
        let before = params.tensor(0).data()[0];
        grads.tensor_mut(0).data_mut()[0] = 1.0;
        let mut state = OptimizerState::new(&params);
        let hyper = AdamHyper { learning_rate: 0.1, ..AdamHyper::default() };
        optimizer_step(&mut params, &grads, &mut state, &hyper).unwrap();
        let after = params.tensor(0).data()[0];
        assert!((before - after - 0.1).abs() < 1e-7, "moved {}", before - after);
        // Untouched coordinates stay put.
        assert_eq!(params.tensor(0).data()[1], {
            let p = small_params(2);
            p.tensor(0).data()[1]
        });
    }

    #[test]
    fn nan_gradient_is_rejected_with_tensor_name() {
        let mut params = small_params(3);
        let mut grads = params.zeros_like();
        let idx = params.tensor_count() - 2; // head.w
        grads.tensor_mut(idx).data_mut()[0] = f64::NAN;
        let mut state = OptimizerState::new(&params);
        let err =
            optimizer_step(&mut params, &grads, &mut state, &AdamHyper::default()).unwrap_err();
        match err {
            Error::NonFiniteGradient { tensor } => assert_eq!(tensor, "head.w"),
            other => panic!("wrong error {other}"),
        }
    }

    #[test]
    fn identical_inputs_give_bit_identical_trajectories() {
        let run = || {
            let mut params = small_params(4);
            let mut state = OptimizerState::new(&params);
            for step in 0..20 {
                let mut grads = params.zeros_like();
                for i in 0..grads.tensor_count() {
                    for (j, g) in grads.tensor_mut(i).data_mut().iter_mut().enumerate() {
                        *g = ((step * 31 + i * 7 + j) % 5) as f64 * 0.1 - 0.2;
                    }
                }
                optimizer_step(&mut params, &grads, &mut state, &AdamHyper::default()).unwrap();
            }
            params
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
    }
}
