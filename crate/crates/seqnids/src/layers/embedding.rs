//! Learned embeddings for categorical features.
//!
//! A table of shape `T x D` maps a categorical index to its row, which is
//! exactly the product of the transposed table with the index's one-hot
//! vector; the row select is just the efficient implementation.

use rand::Rng;

use crate::data::schema::FlowRecord;
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

/// Trainable `T x D` embedding table. Row 0 belongs to the UNK/PAD index.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    weights: DenseMatrix,
}

impl EmbeddingTable {
    pub fn new(weights: DenseMatrix) -> Self {
        Self { weights }
    }

    /// Rows drawn from uniform(-0.05, 0.05).
    pub fn init(vocab_size: usize, dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            weights: DenseMatrix::from_fn(vocab_size, dim, |_, _| rng.gen_range(-0.05..0.05)),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &DenseMatrix {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut DenseMatrix {
        &mut self.weights
    }
}

/// The vector for `index`: row `index` of the table. The data pipeline maps
/// unknown values to 0 before this point, so an out-of-range index here is
/// a caller bug and is rejected.
pub fn embed_lookup(table: &EmbeddingTable, index: usize) -> Result<&[f64]> {
    if index >= table.vocab_size() {
        return Err(Error::InvalidArgument(format!(
            "embedding index {index} out of range for vocabulary of {}",
            table.vocab_size()
        )));
    }
    Ok(table.weights.row(index))
}

/// Model input for one record with learned embeddings: the per-feature
/// embedding rows concatenated in feature order, followed by the continuous
/// features.
pub fn assemble_input(record: &FlowRecord, tables: &[EmbeddingTable]) -> Result<Vec<f64>> {
    if record.cats.len() != tables.len() {
        return Err(Error::InvalidArgument(format!(
            "record has {} categorical values but {} embedding tables were given",
            record.cats.len(),
            tables.len()
        )));
    }
    let total: usize = tables.iter().map(EmbeddingTable::dim).sum::<usize>()
        + record.continuous.len();
    let mut out = Vec::with_capacity(total);
    for (table, &idx) in tables.iter().zip(&record.cats) {
        out.extend_from_slice(embed_lookup(table, idx as usize)?);
    }
    out.extend_from_slice(&record.continuous);
    Ok(out)
}

/// Model input with the ordinal encoding: categorical indices appended to
/// the continuous features as plain numbers. This is the no-embedding
/// comparator; it is a fixed untrained projection of the one-hot vectors.
pub fn assemble_input_ordinal(record: &FlowRecord) -> Vec<f64> {
    let mut out = Vec::with_capacity(record.continuous.len() + record.cats.len());
    out.extend_from_slice(&record.continuous);
    out.extend(record.cats.iter().map(|&c| c as f64));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn table(rows: &[Vec<f64>]) -> EmbeddingTable {
        EmbeddingTable::new(DenseMatrix::from_rows(rows).unwrap())
    }

    #[test]
    fn lookup_selects_the_row() {
        let t = table(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        assert_eq!(embed_lookup(&t, 2).unwrap(), &[5.0, 6.0]);
        assert!(embed_lookup(&t, 3).is_err());
    }

    #[test]
    fn lookup_equals_one_hot_product() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..10 {
            let t_size = rng.gen_range(1..8);
            let dim = rng.gen_range(1..5);
            let t = EmbeddingTable::init(t_size, dim, &mut rng);
            for idx in 0..t_size {
                // W^T e, with e the one-hot at idx.
                let mut by_product = vec![0.0; dim];
                for r in 0..t_size {
                    let e = if r == idx { 1.0 } else { 0.0 };
                    for (o, &w) in by_product.iter_mut().zip(t.weights().row(r)) {
                        *o += e * w;
                    }
                }
                assert_eq!(embed_lookup(&t, idx).unwrap(), by_product.as_slice());
            }
        }
    }

    fn record(cats: Vec<u32>, continuous: Vec<f64>) -> FlowRecord {
        FlowRecord { continuous, cats, multi_label: 0, binary_label: 0 }
    }

    #[test]
    fn assemble_concatenates_in_order() {
        let t1 = table(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let t2 = table(&[vec![9.0], vec![8.0]]);
        let r = record(vec![1, 0], vec![0.5, -0.5]);
        let v = assemble_input(&r, &[t1, t2]).unwrap();
        assert_eq!(v, vec![3.0, 4.0, 9.0, 0.5, -0.5]);
    }

    #[test]
    fn assemble_degenerate_is_the_embedding_row() {
        let t = table(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let r = record(vec![1], vec![]);
        assert_eq!(assemble_input(&r, &[t]).unwrap(), vec![3.0, 4.0]);
    }

    #[test]
    fn assemble_rejects_arity_mismatch() {
        let t = table(&[vec![1.0]]);
        let r = record(vec![0, 0], vec![]);
        assert!(assemble_input(&r, &[t]).is_err());
    }

    #[test]
    fn permuting_continuous_features_permutes_output() {
        let t = table(&[vec![1.0]]);
        let a = assemble_input(&record(vec![0], vec![7.0, 8.0, 9.0]), std::slice::from_ref(&t)).unwrap();
        let b = assemble_input(&record(vec![0], vec![7.0, 9.0, 8.0]), std::slice::from_ref(&t)).unwrap();
        assert_eq!(a[1], b[1]);
        assert_eq!(a[2], b[3]);
        assert_eq!(a[3], b[2]);
    }

    #[test]
    fn ordinal_encoding_appends_indices() {
        let r = record(vec![3, 1], vec![0.25, 0.75]);
        assert_eq!(assemble_input_ordinal(&r), vec![0.25, 0.75, 3.0, 1.0]);
    }
}
