//! LSTM cell and sequence unroll, with the analytic backward pass.
//!
//! Gate equations (no peephole connections):
//!
//! ```text
//! i_t = sigmoid(W_i x_t + U_i h_{t-1} + b_i)
//! f_t = sigmoid(W_f x_t + U_f h_{t-1} + b_f)
//! o_t = sigmoid(W_o x_t + U_o h_{t-1} + b_o)
//! g_t = tanh  (W_g x_t + U_g h_{t-1} + b_g)
//! c_t = f_t . c_{t-1} + i_t . g_t
//! h_t = o_t . tanh(c_t)
//! ```

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{add_outer, add_scaled, affine, matvec_add, matvec_t_add, sigmoid_scalar, DenseMatrix};

/// Per-gate input weights (`hidden x input`), recurrent weights
/// (`hidden x hidden`), and biases (`hidden x 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub w_i: DenseMatrix,
    pub u_i: DenseMatrix,
    pub b_i: DenseMatrix,
    pub w_f: DenseMatrix,
    pub u_f: DenseMatrix,
    pub b_f: DenseMatrix,
    pub w_o: DenseMatrix,
    pub u_o: DenseMatrix,
    pub b_o: DenseMatrix,
    pub w_g: DenseMatrix,
    pub u_g: DenseMatrix,
    pub b_g: DenseMatrix,
}

impl LstmParams {
    /// Weights from uniform(+-1/sqrt(fan_in)); biases zero except the forget
    /// gate, which starts at `forget_bias`.
    pub fn init(hidden: usize, input: usize, forget_bias: f64, rng: &mut impl Rng) -> Self {
        fn mat(rng: &mut impl Rng, bound: f64, r: usize, c: usize) -> DenseMatrix {
            DenseMatrix::from_fn(r, c, |_, _| rng.gen_range(-bound..bound))
        }
        let wb = 1.0 / (input as f64).sqrt();
        let ub = 1.0 / (hidden as f64).sqrt();
        Self {
            w_i: mat(rng, wb, hidden, input),
            u_i: mat(rng, ub, hidden, hidden),
            b_i: DenseMatrix::zeros(hidden, 1),
            w_f: mat(rng, wb, hidden, input),
            u_f: mat(rng, ub, hidden, hidden),
            b_f: DenseMatrix::from_fn(hidden, 1, |_, _| forget_bias),
            w_o: mat(rng, wb, hidden, input),
            u_o: mat(rng, ub, hidden, hidden),
            b_o: DenseMatrix::zeros(hidden, 1),
            w_g: mat(rng, wb, hidden, input),
            u_g: mat(rng, ub, hidden, hidden),
            b_g: DenseMatrix::zeros(hidden, 1),
        }
    }

    pub fn zeros(hidden: usize, input: usize) -> Self {
        Self {
            w_i: DenseMatrix::zeros(hidden, input),
            u_i: DenseMatrix::zeros(hidden, hidden),
            b_i: DenseMatrix::zeros(hidden, 1),
            w_f: DenseMatrix::zeros(hidden, input),
            u_f: DenseMatrix::zeros(hidden, hidden),
            b_f: DenseMatrix::zeros(hidden, 1),
            w_o: DenseMatrix::zeros(hidden, input),
            u_o: DenseMatrix::zeros(hidden, hidden),
            b_o: DenseMatrix::zeros(hidden, 1),
            w_g: DenseMatrix::zeros(hidden, input),
            u_g: DenseMatrix::zeros(hidden, hidden),
            b_g: DenseMatrix::zeros(hidden, 1),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_i.rows()
    }

    pub fn input(&self) -> usize {
        self.w_i.cols()
    }

    fn check_step_dims(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<()> {
        if x.len() != self.input() || h_prev.len() != self.hidden() || c_prev.len() != self.hidden()
        {
            return Err(Error::InvalidArgument(format!(
                "lstm_step dimension mismatch: params expect input {} / hidden {}, \
                 got x={} h={} c={}",
                self.input(),
                self.hidden(),
                x.len(),
                h_prev.len(),
                c_prev.len()
            )));
        }
        Ok(())
    }
}

/// Intermediate values of one step, kept for the backward pass.
#[derive(Clone, Debug)]
pub(crate) struct LstmStepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub g: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

pub(crate) fn lstm_step_cached(
    p: &LstmParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<LstmStepCache> {
    p.check_step_dims(x, h_prev, c_prev)?;
    let mut pre_i = affine(&p.w_i, x, p.b_i.data());
    matvec_add(&mut pre_i, &p.u_i, h_prev);
    let mut pre_f = affine(&p.w_f, x, p.b_f.data());
    matvec_add(&mut pre_f, &p.u_f, h_prev);
    let mut pre_o = affine(&p.w_o, x, p.b_o.data());
    matvec_add(&mut pre_o, &p.u_o, h_prev);
    let mut pre_g = affine(&p.w_g, x, p.b_g.data());
    matvec_add(&mut pre_g, &p.u_g, h_prev);

    let i: Vec<f64> = pre_i.iter().map(|&z| sigmoid_scalar(z)).collect();
    let f: Vec<f64> = pre_f.iter().map(|&z| sigmoid_scalar(z)).collect();
    let o: Vec<f64> = pre_o.iter().map(|&z| sigmoid_scalar(z)).collect();
    let g: Vec<f64> = pre_g.iter().map(|&z| z.tanh()).collect();

    let c: Vec<f64> = (0..p.hidden())
        .map(|j| f[j] * c_prev[j] + i[j] * g[j])
        .collect();
    let tanh_c: Vec<f64> = c.iter().map(|&z| z.tanh()).collect();
    let h: Vec<f64> = (0..p.hidden()).map(|j| o[j] * tanh_c[j]).collect();

    Ok(LstmStepCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        i,
        f,
        o,
        g,
        c,
        tanh_c,
        h,
    })
}

/// One cell update; returns the new hidden and cell states.
pub fn lstm_step(
    p: &LstmParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let cache = lstm_step_cached(p, x, h_prev, c_prev)?;
    Ok((cache.h, cache.c))
}

/// Left fold of `lstm_step` over the inputs; returns every hidden state in
/// order.
pub fn lstm_sequence(
    p: &LstmParams,
    xs: &[Vec<f64>],
    h0: &[f64],
    c0: &[f64],
) -> Result<Vec<Vec<f64>>> {
    if xs.is_empty() {
        return Err(Error::InvalidArgument("lstm_sequence on empty input".into()));
    }
    let mut h = h0.to_vec();
    let mut c = c0.to_vec();
    let mut out = Vec::with_capacity(xs.len());
    for x in xs {
        let (nh, nc) = lstm_step(p, x, &h, &c)?;
        h = nh.clone();
        c = nc;
        out.push(nh);
    }
    Ok(out)
}

/// Backward through one step.
///
/// `dh` is the loss gradient w.r.t. this step's hidden state (head
/// contribution plus recurrent flow from the next step); `dc_next` the
/// gradient w.r.t. this step's cell state from the next step. Parameter
/// gradients accumulate into `grads`; `dx` receives the gradient w.r.t. the
/// step input. Returns `(dh_prev, dc_prev)`.
pub(crate) fn lstm_step_backward(
    p: &LstmParams,
    cache: &LstmStepCache,
    dh: &[f64],
    dc_next: &[f64],
    grads: &mut LstmParams,
    dx: &mut [f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = p.hidden();
    let mut dc = vec![0.0; n];
    for j in 0..n {
        dc[j] = dh[j] * cache.o[j] * (1.0 - cache.tanh_c[j] * cache.tanh_c[j]) + dc_next[j];
    }

    let mut da_i = vec![0.0; n];
    let mut da_f = vec![0.0; n];
    let mut da_o = vec![0.0; n];
    let mut da_g = vec![0.0; n];
    for j in 0..n {
        da_o[j] = dh[j] * cache.tanh_c[j] * cache.o[j] * (1.0 - cache.o[j]);
        da_f[j] = dc[j] * cache.c_prev[j] * cache.f[j] * (1.0 - cache.f[j]);
        da_i[j] = dc[j] * cache.g[j] * cache.i[j] * (1.0 - cache.i[j]);
        da_g[j] = dc[j] * cache.i[j] * (1.0 - cache.g[j] * cache.g[j]);
    }

    for (da, wg, ug, bg) in [
        (&da_i, &mut grads.w_i, &mut grads.u_i, &mut grads.b_i),
        (&da_f, &mut grads.w_f, &mut grads.u_f, &mut grads.b_f),
        (&da_o, &mut grads.w_o, &mut grads.u_o, &mut grads.b_o),
        (&da_g, &mut grads.w_g, &mut grads.u_g, &mut grads.b_g),
    ] {
        add_outer(wg, da, &cache.x);
        add_outer(ug, da, &cache.h_prev);
        add_scaled(bg.data_mut(), da, 1.0);
    }

    let mut dh_prev = vec![0.0; n];
    for (da, w, u) in [
        (&da_i, &p.w_i, &p.u_i),
        (&da_f, &p.w_f, &p.u_f),
        (&da_o, &p.w_o, &p.u_o),
        (&da_g, &p.w_g, &p.u_g),
    ] {
        matvec_t_add(dx, w, da);
        matvec_t_add(&mut dh_prev, u, da);
    }

    let dc_prev: Vec<f64> = (0..n).map(|j| dc[j] * cache.f[j]).collect();
    (dh_prev, dc_prev)
}
