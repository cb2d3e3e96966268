//! Dense-matrix arithmetic, activation functions, and a finite-difference
//! gradient oracle.
//!
//! Everything runs in 64-bit floats. Training and gradient verification both
//! go through this module; checkpoints may down-convert to 32-bit on disk but
//! no arithmetic happens at that precision.

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`. Vectors are represented as `n x 1`
/// matrices where a matrix is required, and as plain slices in the hot paths.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "matrix data length {} does not match shape {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Build from nested rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        Ok(Self { rows: r, cols: c, data: rows.concat() })
    }

    /// Column vector from a slice.
    pub fn col_vec(v: &[f64]) -> Self {
        Self { rows: v.len(), cols: 1, data: v.to_vec() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Elementwise map into a new matrix.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Standard matrix product, row-major.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.rows {
        return Err(Error::ShapeMismatch { op: "matmul", lhs: a.shape(), rhs: b.shape() });
    }
    let mut out = DenseMatrix::zeros(a.rows, b.cols);
    // i-k-j order keeps the inner loop streaming over contiguous rows of b.
    for i in 0..a.rows {
        let arow = a.row(i);
        let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in arow.iter().enumerate() {
            let brow = b.row(k);
            for (o, &bkj) in orow.iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Elementwise logistic sigmoid; saturates cleanly, never NaN on finite input.
pub fn sigmoid(x: &DenseMatrix) -> DenseMatrix {
    x.map(sigmoid_scalar)
}

/// Elementwise hyperbolic tangent.
pub fn tanh_act(x: &DenseMatrix) -> DenseMatrix {
    x.map(f64::tanh)
}

/// Elementwise leaky rectifier: `x` if `x >= 0` else `slope * x`.
pub fn leaky_relu(x: &DenseMatrix, slope: f64) -> Result<DenseMatrix> {
    if slope < 0.0 || !slope.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "leaky_relu slope must be nonnegative, got {slope}"
        )));
    }
    Ok(x.map(|v| if v >= 0.0 { v } else { slope * v }))
}

pub(crate) fn leaky_relu_scalar(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

/// Derivative of the leaky rectifier w.r.t. its input, evaluated at `x`.
/// The kink at zero takes the nonnegative branch.
pub(crate) fn leaky_relu_grad(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        slope
    }
}

/// Numerically stable softmax over a nonempty vector: subtracts the maximum
/// before exponentiating, then normalizes.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::InvalidArgument("softmax of empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("softmax of non-finite input".into()));
    }
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = v.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= sum);
    Ok(out)
}

// --- slice kernels used by the layer forward/backward paths ---

/// `out = w . x + b` where `w` is `rows x cols`, `x` has `cols` entries,
/// `b` has `rows` entries.
pub(crate) fn affine(w: &DenseMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(w.cols(), x.len());
    debug_assert_eq!(w.rows(), b.len());
    let mut out = b.to_vec();
    for (o, row) in out.iter_mut().zip(0..w.rows()) {
        let mut acc = 0.0;
        for (&wv, &xv) in w.row(row).iter().zip(x) {
            acc += wv * xv;
        }
        *o += acc;
    }
    out
}

/// `out += w . x`.
pub(crate) fn matvec_add(out: &mut [f64], w: &DenseMatrix, x: &[f64]) {
    debug_assert_eq!(w.cols(), x.len());
    debug_assert_eq!(w.rows(), out.len());
    for (r, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (&wv, &xv) in w.row(r).iter().zip(x) {
            acc += wv * xv;
        }
        *o += acc;
    }
}

/// `out += w^T . y`; `y` has `w.rows()` entries, `out` has `w.cols()`.
pub(crate) fn matvec_t_add(out: &mut [f64], w: &DenseMatrix, y: &[f64]) {
    debug_assert_eq!(w.rows(), y.len());
    debug_assert_eq!(w.cols(), out.len());
    for (r, &yv) in y.iter().enumerate() {
        if yv == 0.0 {
            continue;
        }
        for (o, &wv) in out.iter_mut().zip(w.row(r)) {
            *o += yv * wv;
        }
    }
}

/// Rank-1 accumulation `dw += y . x^T`.
pub(crate) fn add_outer(dw: &mut DenseMatrix, y: &[f64], x: &[f64]) {
    debug_assert_eq!(dw.rows(), y.len());
    debug_assert_eq!(dw.cols(), x.len());
    let cols = dw.cols();
    for (r, &yv) in y.iter().enumerate() {
        if yv == 0.0 {
            continue;
        }
        let row = &mut dw.data_mut()[r * cols..(r + 1) * cols];
        for (d, &xv) in row.iter_mut().zip(x) {
            *d += yv * xv;
        }
    }
}

pub(crate) fn add_scaled(out: &mut [f64], src: &[f64], scale: f64) {
    debug_assert_eq!(out.len(), src.len());
    for (o, &s) in out.iter_mut().zip(src) {
        *o += scale * s;
    }
}

// --- finite-difference gradient oracle ---

/// An ordered collection of named tensors. Model parameters, gradients, and
/// optimizer moments all share one layout so they can be iterated in
/// lockstep; order and names are fixed by construction.
pub trait TensorBundle: Clone {
    fn tensor_count(&self) -> usize;
    fn tensor_name(&self, idx: usize) -> &str;
    fn tensor(&self, idx: usize) -> &DenseMatrix;
    fn tensor_mut(&mut self, idx: usize) -> &mut DenseMatrix;

    /// Same shapes, all zeros.
    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for i in 0..z.tensor_count() {
            z.tensor_mut(i).fill(0.0);
        }
        z
    }
}

/// Central-difference gradient estimate of `loss_fn` at `params`, one entry
/// per parameter: `(f(p + eps) - f(p - eps)) / (2 eps)`.
///
/// The loss function must be deterministic (dropout disabled or its mask
/// frozen); this is checked by evaluating it twice at the unperturbed point.
pub fn finite_diff_grad<B, F>(loss_fn: F, params: &B, epsilon: f64) -> Result<B>
where
    B: TensorBundle,
    F: Fn(&B) -> f64,
{
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference epsilon must be positive, got {epsilon}"
        )));
    }
    let l0 = loss_fn(params);
    let l1 = loss_fn(params);
    if l0.to_bits() != l1.to_bits() {
        return Err(Error::NonDeterministicLoss);
    }

    let mut theta = params.clone();
    let mut grad = params.zeros_like();
    for t in 0..theta.tensor_count() {
        let n = theta.tensor(t).data().len();
        for j in 0..n {
            let orig = theta.tensor(t).data()[j];
            theta.tensor_mut(t).data_mut()[j] = orig + epsilon;
            let lp = loss_fn(&theta);
            theta.tensor_mut(t).data_mut()[j] = orig - epsilon;
            let lm = loss_fn(&theta);
            theta.tensor_mut(t).data_mut()[j] = orig;
            grad.tensor_mut(t).data_mut()[j] = (lp - lm) / (2.0 * epsilon);
        }
    }
    Ok(grad)
}

/// Relative error between an analytic and a numeric gradient entry, with the
/// denominator floored so that near-zero pairs compare absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}
