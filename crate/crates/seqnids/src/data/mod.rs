//! Dataset ingestion and preparation: schema and vocabularies, CSV loading,
//! normalization, sliding windows, the validation split, the synthetic
//! generator, and the preprocessed binary cache.

pub mod cache;
pub mod loader;
pub mod normalize;
pub mod schema;
pub mod synth;
pub mod windows;

pub use cache::{read_cache, read_cache_checked, write_cache};
pub use loader::{
    build_vocab, class_histogram, encode_records, fit_vocabularies, load_csv, load_csv_raw,
    RawRecord, UnknownTally,
};
pub use normalize::{apply_normalization, fit_normalization, NormalizationStats};
pub use schema::{
    CategoricalFeature, ContinuousFeature, FeatureSchema, FlowRecord, Vocabulary, UNK,
};
pub use synth::{
    class_priors, context_free_bayes_accuracy, synth_generate, synth_schema, SynthConfig,
    SynthRule,
};
pub use windows::{make_windows, split_validation, SequenceWindow, WindowSet};
