//! Model assembly: embeddings (or ordinal encoding) feeding an LSTM (or a
//! same-width dense layer for the context-free baseline), followed by the
//! fully connected stack and a softmax head.
//!
//! Layer order per step: input -> LSTM hidden state -> fc1 -> leaky ReLU ->
//! dropout -> (fc2 -> leaky ReLU, binary task only) -> head -> softmax.
//! The MLP baseline replaces the LSTM with `dense(hidden)` + leaky ReLU and
//! reads only the final record of a window, so it produces a single output.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::schema::{FeatureSchema, FlowRecord};
use crate::data::windows::SequenceWindow;
use crate::error::{Error, Result};
use crate::layers::dense::{dense_forward, dropout};
use crate::layers::embedding::{assemble_input, assemble_input_ordinal, EmbeddingTable};
use crate::layers::lstm::{lstm_step_backward, lstm_step_cached, LstmParams, LstmStepCache};
use crate::numerics::{
    add_outer, add_scaled, leaky_relu_grad, leaky_relu_scalar, matvec_t_add, softmax, DenseMatrix,
    TensorBundle,
};
use crate::training::loss::{cross_entropy, LossMode};
use crate::util::mix_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Lstm,
    /// Context-free baseline: the LSTM layer is replaced by a dense layer of
    /// the same width and only the final record of each window is used.
    Mlp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    /// Two-way head trained on the binary labels; fc2 is part of the stack.
    Binary,
    /// Multi-class head over all attack categories plus normal.
    Multi,
    /// Structurally identical to `Multi`; predictions are merged to binary
    /// at evaluation time.
    M2b,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmbedMode {
    /// Learned embedding tables for categorical features.
    Learned,
    /// Categorical indices appended to the continuous features as plain
    /// ordinal numbers (the no-embedding comparator).
    Ordinal,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Lstm => write!(f, "lstm"),
            ModelKind::Mlp => write!(f, "mlp"),
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(ModelKind::Lstm),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(Error::InvalidArgument(format!("unknown model kind `{other}`"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Binary => write!(f, "binary"),
            Task::Multi => write!(f, "multi"),
            Task::M2b => write!(f, "m2b"),
        }
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "binary" => Ok(Task::Binary),
            "multi" => Ok(Task::Multi),
            "m2b" => Ok(Task::M2b),
            other => Err(Error::InvalidArgument(format!("unknown task `{other}`"))),
        }
    }
}

impl fmt::Display for EmbedMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmbedMode::Learned => write!(f, "on"),
            EmbedMode::Ordinal => write!(f, "off"),
        }
    }
}

impl FromStr for EmbedMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "on" | "learned" => Ok(EmbedMode::Learned),
            "off" | "ordinal" => Ok(EmbedMode::Ordinal),
            other => Err(Error::InvalidArgument(format!("unknown embed mode `{other}`"))),
        }
    }
}

/// Architecture description, kept alongside the parameters and stored in
/// checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub task: Task,
    pub embed_mode: EmbedMode,
    /// LSTM state width (or the width of the MLP replacement layer).
    pub hidden: usize,
    pub fc1: usize,
    /// Second fully connected layer, used only for the binary task.
    pub fc2: usize,
    pub embed_dims: Vec<usize>,
    pub vocab_sizes: Vec<usize>,
    pub n_continuous: usize,
    /// Number of classes in the data schema (head size for multi/m2b).
    pub n_classes_data: usize,
    pub forget_bias: f64,
    pub leaky_slope: f64,
}

impl ModelConfig {
    pub fn new(schema: &FeatureSchema, task: Task, kind: ModelKind, embed_mode: EmbedMode) -> Self {
        Self {
            kind,
            task,
            embed_mode,
            hidden: 100,
            fc1: 50,
            fc2: 10,
            embed_dims: schema.categorical.iter().map(|c| c.embed_dim).collect(),
            vocab_sizes: schema.categorical.iter().map(|c| c.vocab.len()).collect(),
            n_continuous: schema.n_continuous(),
            n_classes_data: schema.n_classes(),
            forget_bias: 1.0,
            leaky_slope: 0.01,
        }
    }

    pub fn with_hidden(mut self, hidden: usize) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn with_fc(mut self, fc1: usize, fc2: usize) -> Self {
        self.fc1 = fc1;
        self.fc2 = fc2;
        self
    }

    pub fn with_forget_bias(mut self, b: f64) -> Self {
        self.forget_bias = b;
        self
    }

    /// Width of the assembled per-record input vector.
    pub fn input_dim(&self) -> usize {
        match self.embed_mode {
            EmbedMode::Learned => self.embed_dims.iter().sum::<usize>() + self.n_continuous,
            EmbedMode::Ordinal => self.vocab_sizes.len() + self.n_continuous,
        }
    }

    /// Output classes: 2 for the binary task, the schema's class count
    /// otherwise.
    pub fn head_dim(&self) -> usize {
        match self.task {
            Task::Binary => 2,
            Task::Multi | Task::M2b => self.n_classes_data,
        }
    }

    pub fn uses_fc2(&self) -> bool {
        self.task == Task::Binary
    }

    /// Label of one record under this task.
    pub fn label_of(&self, record: &FlowRecord) -> usize {
        match self.task {
            Task::Binary => record.binary_label as usize,
            Task::Multi | Task::M2b => record.multi_label as usize,
        }
    }
}

const LSTM_TENSOR_NAMES: [&str; 12] = [
    "lstm.w_i", "lstm.u_i", "lstm.b_i", "lstm.w_f", "lstm.u_f", "lstm.b_f", "lstm.w_o",
    "lstm.u_o", "lstm.b_o", "lstm.w_g", "lstm.u_g", "lstm.b_g",
];

/// All trainable tensors of a model, with the architecture they belong to.
/// Gradients and optimizer moments reuse this type, zeroed, so every
/// consumer walks tensors in the same order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub embeddings: Vec<EmbeddingTable>,
    emb_names: Vec<String>,
    pub lstm: Option<LstmParams>,
    pub mlp_w: Option<DenseMatrix>,
    pub mlp_b: Option<DenseMatrix>,
    pub fc1_w: DenseMatrix,
    pub fc1_b: DenseMatrix,
    pub fc2_w: Option<DenseMatrix>,
    pub fc2_b: Option<DenseMatrix>,
    pub head_w: DenseMatrix,
    pub head_b: DenseMatrix,
}

impl ModelParams {
    /// Initialize parameters for the given architecture. Embedding rows are
    /// uniform(-0.05, 0.05); dense and recurrent weights uniform
    /// (+-1/sqrt(fan_in)); biases zero except the LSTM forget gate.
    pub fn init(config: &ModelConfig, schema: &FeatureSchema, seed: u64) -> Result<Self> {
        let schema_sizes: Vec<usize> = schema.categorical.iter().map(|c| c.vocab.len()).collect();
        if schema_sizes != config.vocab_sizes || schema.n_continuous() != config.n_continuous {
            return Err(Error::InvalidArgument(
                "model config does not match the schema it is initialized against".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 0x494e_4954]));

        let (embeddings, emb_names) = match config.embed_mode {
            EmbedMode::Learned => (
                config
                    .vocab_sizes
                    .iter()
                    .zip(&config.embed_dims)
                    .map(|(&t, &d)| EmbeddingTable::init(t, d, &mut rng))
                    .collect(),
                schema
                    .categorical
                    .iter()
                    .map(|c| format!("emb.{}", c.name))
                    .collect(),
            ),
            EmbedMode::Ordinal => (Vec::new(), Vec::new()),
        };

        let input_dim = config.input_dim();
        fn dense_init(rng: &mut impl Rng, rows: usize, cols: usize) -> DenseMatrix {
            let bound = 1.0 / (cols as f64).sqrt();
            DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-bound..bound))
        }

        let (lstm, mlp_w, mlp_b) = match config.kind {
            ModelKind::Lstm => (
                Some(LstmParams::init(config.hidden, input_dim, config.forget_bias, &mut rng)),
                None,
                None,
            ),
            ModelKind::Mlp => (
                None,
                Some(dense_init(&mut rng, config.hidden, input_dim)),
                Some(DenseMatrix::zeros(config.hidden, 1)),
            ),
        };

        let fc1_w = dense_init(&mut rng, config.fc1, config.hidden);
        let fc1_b = DenseMatrix::zeros(config.fc1, 1);
        let (fc2_w, fc2_b, head_in) = if config.uses_fc2() {
            (
                Some(dense_init(&mut rng, config.fc2, config.fc1)),
                Some(DenseMatrix::zeros(config.fc2, 1)),
                config.fc2,
            )
        } else {
            (None, None, config.fc1)
        };
        let head_w = dense_init(&mut rng, config.head_dim(), head_in);
        let head_b = DenseMatrix::zeros(config.head_dim(), 1);

        Ok(Self {
            config: config.clone(),
            embeddings,
            emb_names,
            lstm,
            mlp_w,
            mlp_b,
            fc1_w,
            fc1_b,
            fc2_w,
            fc2_b,
            head_w,
            head_b,
        })
    }

    /// Total number of scalar parameters.
    pub fn n_parameters(&self) -> usize {
        (0..self.tensor_count())
            .map(|i| self.tensor(i).data().len())
            .sum()
    }

    /// Name of the first tensor holding a non-finite value, if any.
    pub fn first_non_finite(&self) -> Option<&str> {
        (0..self.tensor_count())
            .find(|&i| !self.tensor(i).is_finite())
            .map(|i| self.tensor_name(i))
    }

    fn assemble(&self, record: &FlowRecord) -> Result<Vec<f64>> {
        match self.config.embed_mode {
            EmbedMode::Learned => assemble_input(record, &self.embeddings),
            EmbedMode::Ordinal => Ok(assemble_input_ordinal(record)),
        }
    }

    fn validate_window(&self, window: &SequenceWindow) -> Result<()> {
        let r = window.step(window.target_index());
        if r.cats.len() != self.config.vocab_sizes.len()
            || r.continuous.len() != self.config.n_continuous
        {
            return Err(Error::InvalidArgument(format!(
                "window records have {} categorical / {} continuous features, \
                 model expects {} / {}",
                r.cats.len(),
                r.continuous.len(),
                self.config.vocab_sizes.len(),
                self.config.n_continuous
            )));
        }
        Ok(())
    }
}

impl TensorBundle for ModelParams {
    fn tensor_count(&self) -> usize {
        self.embeddings.len()
            + if self.lstm.is_some() { 12 } else { 0 }
            + if self.mlp_w.is_some() { 2 } else { 0 }
            + 2
            + if self.fc2_w.is_some() { 2 } else { 0 }
            + 2
    }

    fn tensor_name(&self, idx: usize) -> &str {
        let ne = self.embeddings.len();
        if idx < ne {
            return &self.emb_names[idx];
        }
        let mut i = idx - ne;
        if self.lstm.is_some() {
            if i < 12 {
                return LSTM_TENSOR_NAMES[i];
            }
            i -= 12;
        }
        if self.mlp_w.is_some() {
            match i {
                0 => return "mlp.w",
                1 => return "mlp.b",
                _ => i -= 2,
            }
        }
        match i {
            0 => return "fc1.w",
            1 => return "fc1.b",
            _ => i -= 2,
        }
        if self.fc2_w.is_some() {
            match i {
                0 => return "fc2.w",
                1 => return "fc2.b",
                _ => i -= 2,
            }
        }
        match i {
            0 => "head.w",
            1 => "head.b",
            _ => panic!("tensor index {idx} out of range"),
        }
    }

    fn tensor(&self, idx: usize) -> &DenseMatrix {
        let ne = self.embeddings.len();
        if idx < ne {
            return self.embeddings[idx].weights();
        }
        let mut i = idx - ne;
        if let Some(l) = &self.lstm {
            if i < 12 {
                return match i {
                    0 => &l.w_i,
                    1 => &l.u_i,
                    2 => &l.b_i,
                    3 => &l.w_f,
                    4 => &l.u_f,
                    5 => &l.b_f,
                    6 => &l.w_o,
                    7 => &l.u_o,
                    8 => &l.b_o,
                    9 => &l.w_g,
                    10 => &l.u_g,
                    _ => &l.b_g,
                };
            }
            i -= 12;
        }
        if let Some(w) = &self.mlp_w {
            match i {
                0 => return w,
                1 => return self.mlp_b.as_ref().unwrap(),
                _ => i -= 2,
            }
        }
        match i {
            0 => return &self.fc1_w,
            1 => return &self.fc1_b,
            _ => i -= 2,
        }
        if let Some(w) = &self.fc2_w {
            match i {
                0 => return w,
                1 => return self.fc2_b.as_ref().unwrap(),
                _ => i -= 2,
            }
        }
        match i {
            0 => &self.head_w,
            1 => &self.head_b,
            _ => panic!("tensor index {idx} out of range"),
        }
    }

    fn tensor_mut(&mut self, idx: usize) -> &mut DenseMatrix {
        let ne = self.embeddings.len();
        if idx < ne {
            return self.embeddings[idx].weights_mut();
        }
        let mut i = idx - ne;
        if self.lstm.is_some() {
            if i < 12 {
                let l = self.lstm.as_mut().unwrap();
                return match i {
                    0 => &mut l.w_i,
                    1 => &mut l.u_i,
                    2 => &mut l.b_i,
                    3 => &mut l.w_f,
                    4 => &mut l.u_f,
                    5 => &mut l.b_f,
                    6 => &mut l.w_o,
                    7 => &mut l.u_o,
                    8 => &mut l.b_o,
                    9 => &mut l.w_g,
                    10 => &mut l.u_g,
                    _ => &mut l.b_g,
                };
            }
            i -= 12;
        }
        if self.mlp_w.is_some() {
            match i {
                0 => return self.mlp_w.as_mut().unwrap(),
                1 => return self.mlp_b.as_mut().unwrap(),
                _ => i -= 2,
            }
        }
        match i {
            0 => return &mut self.fc1_w,
            1 => return &mut self.fc1_b,
            _ => i -= 2,
        }
        if self.fc2_w.is_some() {
            match i {
                0 => return self.fc2_w.as_mut().unwrap(),
                1 => return self.fc2_b.as_mut().unwrap(),
                _ => i -= 2,
            }
        }
        match i {
            0 => &mut self.head_w,
            1 => &mut self.head_b,
            _ => panic!("tensor index {idx} out of range"),
        }
    }
}

struct HeadCache {
    input: Vec<f64>,
    z1: Vec<f64>,
    mask: Vec<f64>,
    d1: Vec<f64>,
    z2: Option<Vec<f64>>,
    head_in: Vec<f64>,
    probs: Vec<f64>,
}

struct ForwardCache {
    /// Assembled input per produced step (one entry for the MLP).
    xs: Vec<Vec<f64>>,
    lstm_steps: Vec<LstmStepCache>,
    mlp_z0: Option<Vec<f64>>,
    heads: Vec<HeadCache>,
}

fn head_forward(
    p: &ModelParams,
    input: Vec<f64>,
    training: bool,
    dropout_rate: f64,
    rng: &mut impl Rng,
) -> Result<HeadCache> {
    let slope = p.config.leaky_slope;
    let z1 = dense_forward(&p.fc1_w, p.fc1_b.data(), &input)?;
    let a1: Vec<f64> = z1.iter().map(|&z| leaky_relu_scalar(z, slope)).collect();
    let (d1, mask) = dropout(&a1, dropout_rate, training, rng)?;
    let (z2, head_in) = if let (Some(w2), Some(b2)) = (&p.fc2_w, &p.fc2_b) {
        let z2 = dense_forward(w2, b2.data(), &d1)?;
        let a2: Vec<f64> = z2.iter().map(|&z| leaky_relu_scalar(z, slope)).collect();
        (Some(z2), a2)
    } else {
        (None, d1.clone())
    };
    let logits = dense_forward(&p.head_w, p.head_b.data(), &head_in)?;
    let probs = softmax(&logits)?;
    Ok(HeadCache { input, z1, mask, d1, z2, head_in, probs })
}

/// Head backward for one step. `dlogits` already carries the step's loss
/// weight. Returns the gradient w.r.t. the head input (h_t or the MLP
/// activation).
fn head_backward(p: &ModelParams, cache: &HeadCache, dlogits: &[f64], grads: &mut ModelParams) -> Vec<f64> {
    let slope = p.config.leaky_slope;
    add_outer(&mut grads.head_w, dlogits, &cache.head_in);
    add_scaled(grads.head_b.data_mut(), dlogits, 1.0);

    let mut d_head_in = vec![0.0; cache.head_in.len()];
    matvec_t_add(&mut d_head_in, &p.head_w, dlogits);

    let dd1 = if let Some(z2) = &cache.z2 {
        let dz2: Vec<f64> = d_head_in
            .iter()
            .zip(z2)
            .map(|(&d, &z)| d * leaky_relu_grad(z, slope))
            .collect();
        add_outer(grads.fc2_w.as_mut().unwrap(), &dz2, &cache.d1);
        add_scaled(grads.fc2_b.as_mut().unwrap().data_mut(), &dz2, 1.0);
        let mut dd1 = vec![0.0; cache.d1.len()];
        matvec_t_add(&mut dd1, p.fc2_w.as_ref().unwrap(), &dz2);
        dd1
    } else {
        d_head_in
    };

    let dz1: Vec<f64> = dd1
        .iter()
        .zip(&cache.mask)
        .zip(&cache.z1)
        .map(|((&d, &m), &z)| d * m * leaky_relu_grad(z, slope))
        .collect();
    add_outer(&mut grads.fc1_w, &dz1, &cache.input);
    add_scaled(grads.fc1_b.data_mut(), &dz1, 1.0);

    let mut d_input = vec![0.0; cache.input.len()];
    matvec_t_add(&mut d_input, &p.fc1_w, &dz1);
    d_input
}

fn forward_cached(
    params: &ModelParams,
    window: &SequenceWindow,
    training: bool,
    dropout_rate: f64,
    rng: &mut impl Rng,
) -> Result<ForwardCache> {
    params.validate_window(window)?;
    match params.config.kind {
        ModelKind::Lstm => {
            let lstm = params.lstm.as_ref().expect("lstm params present");
            let mut h = vec![0.0; params.config.hidden];
            let mut c = vec![0.0; params.config.hidden];
            let mut xs = Vec::with_capacity(window.len());
            let mut steps = Vec::with_capacity(window.len());
            let mut heads = Vec::with_capacity(window.len());
            for t in 0..window.len() {
                let x = params.assemble(window.step(t))?;
                let cache = lstm_step_cached(lstm, &x, &h, &c)?;
                h = cache.h.clone();
                c = cache.c.clone();
                heads.push(head_forward(params, cache.h.clone(), training, dropout_rate, rng)?);
                steps.push(cache);
                xs.push(x);
            }
            Ok(ForwardCache { xs, lstm_steps: steps, mlp_z0: None, heads })
        }
        ModelKind::Mlp => {
            let x = params.assemble(window.target_record())?;
            let w = params.mlp_w.as_ref().expect("mlp params present");
            let b = params.mlp_b.as_ref().expect("mlp params present");
            let z0 = dense_forward(w, b.data(), &x)?;
            let a0: Vec<f64> = z0
                .iter()
                .map(|&z| leaky_relu_scalar(z, params.config.leaky_slope))
                .collect();
            let head = head_forward(params, a0, training, dropout_rate, rng)?;
            Ok(ForwardCache { xs: vec![x], lstm_steps: Vec::new(), mlp_z0: Some(z0), heads: vec![head] })
        }
    }
}

/// Class-probability vectors, one per step for the LSTM and a single final
/// entry for the MLP baseline. Each vector sums to 1.
pub fn model_forward(
    params: &ModelParams,
    window: &SequenceWindow,
    training: bool,
    dropout_rate: f64,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<f64>>> {
    let cache = forward_cached(params, window, training, dropout_rate, rng)?;
    Ok(cache.heads.into_iter().map(|h| h.probs).collect())
}

/// Final-step class probabilities with dropout disabled; the inference path.
pub fn predict_probs(params: &ModelParams, window: &SequenceWindow) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut out = model_forward(params, window, false, 0.0, &mut rng)?;
    Ok(out.pop().expect("at least one step"))
}

/// Per-step loss weights under the aggregation mode: the final step only for
/// many-to-one, the mean of unmasked steps for many-to-many. Padding steps
/// never carry weight.
fn step_weights(window: &SequenceWindow, n_outputs: usize, mode: LossMode) -> Vec<f64> {
    if n_outputs == 1 {
        return vec![1.0];
    }
    let l = window.len();
    let mut w = vec![0.0; l];
    match mode {
        LossMode::M2O => {
            debug_assert!(window.mask(l - 1), "target step must be real");
            w[l - 1] = 1.0;
        }
        LossMode::M2M => {
            let unmasked = (0..l).filter(|&t| window.mask(t)).count().max(1);
            let share = 1.0 / unmasked as f64;
            for (t, wt) in w.iter_mut().enumerate() {
                if window.mask(t) {
                    *wt = share;
                }
            }
        }
    }
    w
}

/// Smallest |pre-activation| feeding a leaky ReLU anywhere in the window's
/// forward pass (dropout disabled). The loss is non-differentiable at those
/// kinks, so finite-difference harnesses check this distance and resample
/// draws whose probes would straddle one; the analytic gradient itself is
/// one-sided there by definition.
pub fn min_kink_distance(params: &ModelParams, window: &SequenceWindow) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cache = forward_cached(params, window, false, 0.0, &mut rng)?;
    let mut min = f64::INFINITY;
    for head in &cache.heads {
        for &z in &head.z1 {
            min = min.min(z.abs());
        }
        if let Some(z2) = &head.z2 {
            for &z in z2 {
                min = min.min(z.abs());
            }
        }
    }
    if let Some(z0) = &cache.mlp_z0 {
        for &z in z0 {
            min = min.min(z.abs());
        }
    }
    Ok(min)
}

/// Aggregated cross-entropy of a window under the given mode, dropout
/// disabled. This is the loss that `model_backward` differentiates; the
/// finite-difference oracle probes it directly.
pub fn window_loss(params: &ModelParams, window: &SequenceWindow, mode: LossMode) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let outputs = model_forward(params, window, false, 0.0, &mut rng)?;
    aggregate_loss(params, window, &outputs, mode)
}

fn aggregate_loss(
    params: &ModelParams,
    window: &SequenceWindow,
    outputs: &[Vec<f64>],
    mode: LossMode,
) -> Result<f64> {
    let weights = step_weights(window, outputs.len(), mode);
    let offset = window.len() - outputs.len();
    let mut loss = 0.0;
    for (k, probs) in outputs.iter().enumerate() {
        let wt = weights[k];
        if wt == 0.0 {
            continue;
        }
        let label = params.config.label_of(window.step(offset + k));
        loss += wt * cross_entropy(probs, label)?;
    }
    Ok(loss)
}

/// Forward plus backward through time. Returns the aggregated loss and the
/// gradient of every parameter (same shapes as `params`). Dropout is active
/// when `dropout_rate > 0`; pass 0 for the deterministic path used by
/// gradient verification.
pub fn model_backward(
    params: &ModelParams,
    window: &SequenceWindow,
    mode: LossMode,
    dropout_rate: f64,
    rng: &mut impl Rng,
) -> Result<(f64, ModelParams)> {
    let cache = forward_cached(params, window, dropout_rate > 0.0, dropout_rate, rng)?;
    let mut grads = params.zeros_like();
    let n_out = cache.heads.len();
    let weights = step_weights(window, n_out, mode);
    let offset = window.len() - n_out;

    // Loss and head-side gradients per produced step.
    let mut loss = 0.0;
    let mut d_inputs: Vec<Option<Vec<f64>>> = Vec::with_capacity(n_out);
    for (k, head) in cache.heads.iter().enumerate() {
        let wt = weights[k];
        if wt == 0.0 {
            d_inputs.push(None);
            continue;
        }
        let label = params.config.label_of(window.step(offset + k));
        loss += wt * cross_entropy(&head.probs, label)?;
        let mut dlogits = head.probs.clone();
        dlogits[label] -= 1.0;
        dlogits.iter_mut().for_each(|d| *d *= wt);
        d_inputs.push(Some(head_backward(params, head, &dlogits, &mut grads)));
    }

    match params.config.kind {
        ModelKind::Lstm => {
            let lstm = params.lstm.as_ref().expect("lstm params present");
            let hidden = params.config.hidden;
            let mut dh_next = vec![0.0; hidden];
            let mut dc_next = vec![0.0; hidden];
            let mut dx = vec![0.0; params.config.input_dim()];
            for t in (0..window.len()).rev() {
                let mut dh = dh_next;
                if let Some(d) = &d_inputs[t] {
                    add_scaled(&mut dh, d, 1.0);
                }
                dx.iter_mut().for_each(|v| *v = 0.0);
                let (dh_prev, dc_prev) = {
                    let lstm_grads = grads.lstm.as_mut().expect("lstm grads present");
                    lstm_step_backward(lstm, &cache.lstm_steps[t], &dh, &dc_next, lstm_grads, &mut dx)
                };
                if params.config.embed_mode == EmbedMode::Learned {
                    accumulate_embedding_grads(params, &mut grads, window.step(t), &dx);
                }
                dh_next = dh_prev;
                dc_next = dc_prev;
            }
        }
        ModelKind::Mlp => {
            if let Some(d_a0) = &d_inputs[0] {
                let z0 = cache.mlp_z0.as_ref().expect("mlp cache present");
                let slope = params.config.leaky_slope;
                let dz0: Vec<f64> = d_a0
                    .iter()
                    .zip(z0)
                    .map(|(&d, &z)| d * leaky_relu_grad(z, slope))
                    .collect();
                add_outer(grads.mlp_w.as_mut().unwrap(), &dz0, &cache.xs[0]);
                add_scaled(grads.mlp_b.as_mut().unwrap().data_mut(), &dz0, 1.0);
                if params.config.embed_mode == EmbedMode::Learned {
                    let mut dx = vec![0.0; params.config.input_dim()];
                    matvec_t_add(&mut dx, params.mlp_w.as_ref().unwrap(), &dz0);
                    accumulate_embedding_grads(params, &mut grads, window.target_record(), &dx);
                }
            }
        }
    }

    if let Some(tensor) = grads.first_non_finite() {
        return Err(Error::NonFiniteGradient { tensor: tensor.to_string() });
    }
    Ok((loss, grads))
}

/// Route the input gradient's embedding segments into the looked-up rows.
fn accumulate_embedding_grads(
    params: &ModelParams,
    grads: &mut ModelParams,
    record: &FlowRecord,
    dx: &[f64],
) {
    let mut offset = 0;
    for (fi, table) in params.embeddings.iter().enumerate() {
        let dim = table.dim();
        let row = record.cats[fi] as usize;
        let dst = grads.embeddings[fi].weights_mut().row_mut(row);
        for (d, &g) in dst.iter_mut().zip(&dx[offset..offset + dim]) {
            *d += g;
        }
        offset += dim;
    }
}
