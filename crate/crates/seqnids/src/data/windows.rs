//! Sliding windows over chronologically ordered records.
//!
//! Every record becomes the target (last position) of exactly one window of
//! length `L`; positions before the start of the stream are padding steps
//! whose labels are masked out of the loss. Windows are views into one
//! shared record buffer, so window sets stay cheap even at L in the
//! hundreds.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::schema::FlowRecord;
use crate::error::{Error, Result};

/// A set of fixed-length windows over a shared record stream.
#[derive(Clone, Debug)]
pub struct WindowSet {
    records: Arc<Vec<FlowRecord>>,
    pad: Arc<FlowRecord>,
    seq_len: usize,
    /// Source index of each window's target (= last) record.
    targets: Vec<usize>,
}

/// Borrowed view of one window: `seq_len` chronologically contiguous steps
/// ending at the target record.
#[derive(Clone, Copy)]
pub struct SequenceWindow<'a> {
    records: &'a [FlowRecord],
    pad: &'a FlowRecord,
    seq_len: usize,
    target: usize,
}

impl<'a> SequenceWindow<'a> {
    pub fn len(&self) -> usize {
        self.seq_len
    }

    pub fn is_empty(&self) -> bool {
        self.seq_len == 0
    }

    /// Source index of step `t`, or `None` for padding steps.
    fn source_index(&self, t: usize) -> Option<usize> {
        debug_assert!(t < self.seq_len);
        (self.target + t + 1).checked_sub(self.seq_len)
    }

    /// Record at step `t` (oldest first); padding steps yield the shared
    /// PAD record (zero continuous features, UNK categories).
    pub fn step(&self, t: usize) -> &'a FlowRecord {
        match self.source_index(t) {
            Some(i) => &self.records[i],
            None => self.pad,
        }
    }

    /// True where step `t` is a real record whose label may enter the loss.
    pub fn mask(&self, t: usize) -> bool {
        self.source_index(t).is_some()
    }

    /// Position of the classification target; always the final step.
    pub fn target_index(&self) -> usize {
        self.seq_len - 1
    }

    pub fn target_record(&self) -> &'a FlowRecord {
        &self.records[self.target]
    }

    pub fn n_padding(&self) -> usize {
        (0..self.seq_len).filter(|&t| !self.mask(t)).count()
    }
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn window(&self, i: usize) -> SequenceWindow<'_> {
        SequenceWindow {
            records: &self.records,
            pad: &self.pad,
            seq_len: self.seq_len,
            target: self.targets[i],
        }
    }

    pub fn windows(&self) -> impl Iterator<Item = SequenceWindow<'_>> {
        (0..self.len()).map(move |i| self.window(i))
    }

    /// Target-record source indices, one per window.
    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    /// New set over the same records, keeping the given window positions.
    pub fn subset(&self, keep: &[usize]) -> WindowSet {
        WindowSet {
            records: Arc::clone(&self.records),
            pad: Arc::clone(&self.pad),
            seq_len: self.seq_len,
            targets: keep.iter().map(|&i| self.targets[i]).collect(),
        }
    }
}

/// Build one window per record with stride 1; window `i` covers source
/// records `i-L+1 ..= i` with PAD steps where the index would be negative.
pub fn make_windows(records: Vec<FlowRecord>, seq_len: usize) -> Result<WindowSet> {
    if seq_len < 1 {
        return Err(Error::InvalidArgument(format!(
            "sequence length must be >= 1, got {seq_len}"
        )));
    }
    let (n_cont, n_cat) = records
        .first()
        .map(|r| (r.continuous.len(), r.cats.len()))
        .unwrap_or((0, 0));
    let targets = (0..records.len()).collect();
    Ok(WindowSet {
        records: Arc::new(records),
        pad: Arc::new(FlowRecord::pad(n_cont, n_cat)),
        seq_len,
        targets,
    })
}

/// Uniform random partition of windows into train and validation, without
/// replacement, deterministic per seed. Validation size is
/// `round(fraction * n)` (half rounds up). Both partitions keep
/// chronological order of their targets.
pub fn split_validation(
    windows: &WindowSet,
    fraction: f64,
    seed: u64,
) -> Result<(WindowSet, WindowSet)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "validation fraction must be in (0, 1), got {fraction}"
        )));
    }
    let n = windows.len();
    let n_val = ((fraction * n as f64) + 0.5).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut val_idx: Vec<usize> = order[..n_val].to_vec();
    let mut train_idx: Vec<usize> = order[n_val..].to_vec();
    val_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok((windows.subset(&train_idx), windows.subset(&val_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(tag: usize) -> FlowRecord {
        FlowRecord {
            continuous: vec![tag as f64],
            cats: vec![tag as u32 + 1],
            multi_label: (tag % 2) as u8,
            binary_label: (tag % 2) as u8,
        }
    }

    fn recs(n: usize) -> Vec<FlowRecord> {
        (0..n).map(rec).collect()
    }

    #[test]
    fn length_one_windows_have_no_padding() {
        let ws = make_windows(recs(4), 1).unwrap();
        assert_eq!(ws.len(), 4);
        for w in ws.windows() {
            assert_eq!(w.len(), 1);
            assert_eq!(w.n_padding(), 0);
            assert!(w.mask(0));
        }
    }

    #[test]
    fn hand_enumerated_padding() {
        let ws = make_windows(recs(5), 3).unwrap();
        assert_eq!(ws.len(), 5);

        let w0 = ws.window(0);
        assert_eq!(w0.n_padding(), 2);
        assert!(!w0.mask(0) && !w0.mask(1) && w0.mask(2));
        assert_eq!(w0.step(0).cats, vec![0]); // PAD uses UNK indices
        assert_eq!(w0.step(2).continuous, vec![0.0]);

        let w4 = ws.window(4);
        assert_eq!(w4.n_padding(), 0);
        let sources: Vec<f64> = (0..3).map(|t| w4.step(t).continuous[0]).collect();
        assert_eq!(sources, vec![2.0, 3.0, 4.0]);
        assert_eq!(w4.target_record().continuous, vec![4.0]);
    }

    #[test]
    fn every_record_is_a_target_exactly_once() {
        for seq_len in [1, 2, 5, 9] {
            let ws = make_windows(recs(7), seq_len).unwrap();
            let mut targets: Vec<usize> = ws.targets().to_vec();
            targets.sort_unstable();
            assert_eq!(targets, (0..7).collect::<Vec<_>>());
        }
    }

    #[test]
    fn chronology_is_preserved_inside_windows() {
        let ws = make_windows(recs(10), 4).unwrap();
        for w in ws.windows() {
            let vals: Vec<f64> = (0..4)
                .filter(|&t| w.mask(t))
                .map(|t| w.step(t).continuous[0])
                .collect();
            for pair in vals.windows(2) {
                assert!(pair[0] + 1.0 == pair[1], "non-contiguous {vals:?}");
            }
        }
    }

    #[test]
    fn zero_length_rejected() {
        assert!(make_windows(recs(3), 0).is_err());
    }

    #[test]
    fn split_is_disjoint_complete_and_seeded() {
        let ws = make_windows(recs(100), 3).unwrap();
        let (train, val) = split_validation(&ws, 0.1, 42).unwrap();
        assert_eq!(train.len(), 90);
        assert_eq!(val.len(), 10);
        let mut all: Vec<usize> = train.targets().iter().chain(val.targets()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());

        let (train2, val2) = split_validation(&ws, 0.1, 42).unwrap();
        assert_eq!(train.targets(), train2.targets());
        assert_eq!(val.targets(), val2.targets());

        let (_, val3) = split_validation(&ws, 0.1, 43).unwrap();
        assert_ne!(val.targets(), val3.targets());
    }

    #[test]
    fn split_rounds_half_up() {
        let ws = make_windows(recs(3), 1).unwrap();
        let (train, val) = split_validation(&ws, 0.5, 1).unwrap();
        assert_eq!(val.len(), 2);
        assert_eq!(train.len(), 1);
        assert!(split_validation(&ws, 0.0, 1).is_err());
        assert!(split_validation(&ws, 1.0, 1).is_err());
    }
}
