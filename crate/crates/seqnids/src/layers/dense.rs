//! Fully connected layer and inverted dropout.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{affine, DenseMatrix};

/// `w . x + b`.
pub fn dense_forward(w: &DenseMatrix, b: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if w.cols() != x.len() {
        return Err(Error::ShapeMismatch { op: "dense_forward", lhs: w.shape(), rhs: (x.len(), 1) });
    }
    if w.rows() != b.len() {
        return Err(Error::ShapeMismatch { op: "dense_forward", lhs: w.shape(), rhs: (b.len(), 1) });
    }
    Ok(affine(w, x, b))
}

/// Inverted dropout. In training each element is zeroed with probability
/// `rate` and survivors are scaled by `1/(1-rate)`, so inference is a pure
/// passthrough. Returns `(y, mask)` where `y = x .* mask`; the same mask
/// multiplies the gradient on the way back.
pub fn dropout(
    x: &[f64],
    rate: f64,
    training: bool,
    rng: &mut impl Rng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    if !training || rate == 0.0 {
        return Ok((x.to_vec(), vec![1.0; x.len()]));
    }
    let keep_scale = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = x
        .iter()
        .map(|_| if rng.gen_bool(rate) { 0.0 } else { keep_scale })
        .collect();
    let y = x.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Ok((y, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::matmul;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn identity_weight_passes_input_through() {
        let w = DenseMatrix::from_fn(3, 3, |r, c| if r == c { 1.0 } else { 0.0 });
        let x = [0.5, -1.0, 2.0];
        assert_eq!(dense_forward(&w, &[0.0; 3], &x).unwrap(), x.to_vec());
    }

    #[test]
    fn zero_weight_passes_bias_through() {
        let w = DenseMatrix::zeros(2, 3);
        let y = dense_forward(&w, &[1.0, 2.0], &[9.0, 9.0, 9.0]).unwrap();
        assert_eq!(y, vec![1.0, 2.0]);
    }

    #[test]
    fn random_case_matches_matmul_oracle() {
        let mut rng = StdRng::seed_from_u64(8);
        let w = DenseMatrix::from_fn(4, 6, |_, _| rng.gen_range(-1.0..1.0));
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = dense_forward(&w, &b, &x).unwrap();
        let xm = DenseMatrix::col_vec(&x);
        let prod = matmul(&w, &xm).unwrap();
        for j in 0..4 {
            assert!((y[j] - (prod.get(j, 0) + b[j])).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let w = DenseMatrix::zeros(2, 3);
        assert!(dense_forward(&w, &[0.0; 2], &[1.0]).is_err());
        assert!(dense_forward(&w, &[0.0; 3], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn dropout_inference_is_passthrough() {
        let mut rng = StdRng::seed_from_u64(1);
        let x = [1.0, 2.0, 3.0];
        let (y, mask) = dropout(&x, 0.8, false, &mut rng).unwrap();
        assert_eq!(y, x.to_vec());
        assert_eq!(mask, vec![1.0; 3]);
        let (y0, _) = dropout(&x, 0.0, true, &mut rng).unwrap();
        assert_eq!(y0, x.to_vec());
    }

    #[test]
    fn dropout_rejects_rate_one() {
        let mut rng = StdRng::seed_from_u64(1);
        assert!(dropout(&[1.0], 1.0, true, &mut rng).is_err());
        assert!(dropout(&[1.0], -0.1, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_statistics_at_half_rate() {
        let mut rng = StdRng::seed_from_u64(42);
        let n = 100_000;
        let x = vec![1.0; n];
        let (y, mask) = dropout(&x, 0.5, true, &mut rng).unwrap();
        let zero_fraction = mask.iter().filter(|&&m| m == 0.0).count() as f64 / n as f64;
        assert!((zero_fraction - 0.5).abs() < 0.01, "zero fraction {zero_fraction}");
        let mean_y: f64 = y.iter().sum::<f64>() / n as f64;
        // Inverted scaling keeps the expectation of y equal to the mean of x.
        assert!((mean_y - 1.0).abs() < 0.02, "mean {mean_y}");
    }
}
