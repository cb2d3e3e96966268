//! CSV ingestion for flow-record datasets.
//!
//! Loading is two-phase: `load_csv_raw` parses rows against the schema's
//! column names without needing vocabularies, `build_vocab` derives a
//! vocabulary per categorical feature from training rows, and
//! `encode_records` maps raw rows to `FlowRecord`s under fixed vocabularies
//! (unknown categories go to index 0 and are tallied, never rejected).
//! `load_csv` composes the phases for the common fixed-vocabulary case.

use std::fs::File;
use std::io::BufRead;
use std::path::Path;

use crate::data::schema::{FeatureSchema, FlowRecord};
use crate::data::Vocabulary;
use crate::error::{Error, Result};

/// A parsed but not yet vocabulary-encoded row.
#[derive(Clone, Debug)]
pub struct RawRecord {
    pub continuous: Vec<f64>,
    pub cats: Vec<String>,
    pub multi_label: u8,
    pub binary_label: u8,
}

/// Count of raw values that fell outside a vocabulary and were mapped to
/// the UNK index, per categorical feature.
#[derive(Clone, Debug, Default)]
pub struct UnknownTally {
    pub per_feature: Vec<(String, usize)>,
}

impl UnknownTally {
    pub fn total(&self) -> usize {
        self.per_feature.iter().map(|(_, n)| n).sum()
    }
}

struct ColumnMap {
    continuous: Vec<usize>,
    categorical: Vec<usize>,
    multi: usize,
    binary: usize,
}

fn resolve_columns(headers: &csv::StringRecord, schema: &FeatureSchema) -> Result<ColumnMap> {
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    Ok(ColumnMap {
        continuous: schema
            .continuous
            .iter()
            .map(|f| find(&f.name))
            .collect::<Result<_>>()?,
        categorical: schema
            .categorical
            .iter()
            .map(|f| find(&f.name))
            .collect::<Result<_>>()?,
        multi: find(&schema.multi_label_column)?,
        binary: find(&schema.binary_label_column)?,
    })
}

/// Parse a CSV file into raw records, in file order. File order is treated
/// as chronological. Row numbers in errors are 1-based data rows.
pub fn load_csv_raw(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Vec<RawRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let cols = resolve_columns(&headers, schema)?;

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let rownum = i + 1;
        let cell = |idx: usize| row.get(idx).unwrap_or("").trim();

        let mut continuous = Vec::with_capacity(cols.continuous.len());
        for (&ci, feat) in cols.continuous.iter().zip(&schema.continuous) {
            let raw = cell(ci);
            let v: f64 = raw.parse().map_err(|_| Error::BadNumber {
                row: rownum,
                column: feat.name.clone(),
                value: raw.to_string(),
            })?;
            continuous.push(v);
        }

        let cats = cols
            .categorical
            .iter()
            .map(|&ci| cell(ci).to_string())
            .collect();

        let multi_raw = cell(cols.multi);
        let multi_label = schema.class_index(multi_raw).ok_or_else(|| Error::BadLabel {
            row: rownum,
            column: schema.multi_label_column.clone(),
            value: multi_raw.to_string(),
        })? as u8;

        let binary_raw = cell(cols.binary);
        let binary_label: u8 = match binary_raw {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::BadLabel {
                    row: rownum,
                    column: schema.binary_label_column.clone(),
                    value: other.to_string(),
                })
            }
        };
        if (binary_label == 0) != (multi_label == 0) {
            return Err(Error::BadLabel {
                row: rownum,
                column: schema.binary_label_column.clone(),
                value: format!("label {binary_label} inconsistent with attack_cat `{multi_raw}`"),
            });
        }

        records.push(RawRecord { continuous, cats, multi_label, binary_label });
    }
    Ok(records)
}

/// Derive the vocabulary for one categorical feature from training rows:
/// distinct values sorted lexicographically at indices 1.., index 0 reserved
/// for UNK/PAD.
pub fn build_vocab(
    records: &[RawRecord],
    schema: &FeatureSchema,
    feature: &str,
) -> Result<Vocabulary> {
    let idx = schema
        .categorical
        .iter()
        .position(|f| f.name == feature)
        .ok_or_else(|| {
            Error::InvalidArgument(format!("feature `{feature}` is not categorical in the schema"))
        })?;
    Ok(Vocabulary::from_values(
        records.iter().map(|r| r.cats[idx].as_str()),
    ))
}

/// Build vocabularies for every categorical feature and return a schema
/// carrying them. Fit on training rows only.
pub fn fit_vocabularies(records: &[RawRecord], schema: &FeatureSchema) -> Result<FeatureSchema> {
    let mut out = schema.clone();
    for i in 0..out.categorical.len() {
        let name = out.categorical[i].name.clone();
        out.categorical[i].vocab = build_vocab(records, schema, &name)?;
    }
    Ok(out)
}

/// Encode raw rows under the schema's (fixed) vocabularies. Unknown
/// categorical values map to index 0 and are counted in the tally.
pub fn encode_records(
    raw: &[RawRecord],
    schema: &FeatureSchema,
) -> (Vec<FlowRecord>, UnknownTally) {
    let mut tally: Vec<usize> = vec![0; schema.n_categorical()];
    let records = raw
        .iter()
        .map(|r| {
            let cats = r
                .cats
                .iter()
                .enumerate()
                .map(|(fi, value)| {
                    let vocab = &schema.categorical[fi].vocab;
                    if !vocab.contains(value) {
                        tally[fi] += 1;
                    }
                    vocab.index_of(value) as u32
                })
                .collect();
            FlowRecord {
                continuous: r.continuous.clone(),
                cats,
                multi_label: r.multi_label,
                binary_label: r.binary_label,
            }
        })
        .collect();
    let per_feature = schema
        .categorical
        .iter()
        .zip(tally)
        .map(|(f, n)| (f.name.clone(), n))
        .collect();
    (records, UnknownTally { per_feature })
}

/// One-shot load under a schema whose vocabularies are already fixed.
/// Returns unnormalized records in file (chronological) order.
pub fn load_csv(
    path: impl AsRef<Path>,
    schema: &FeatureSchema,
) -> Result<(Vec<FlowRecord>, UnknownTally)> {
    let raw = load_csv_raw(path, schema)?;
    Ok(encode_records(&raw, schema))
}

/// Per-class record counts.
pub fn class_histogram(records: &[FlowRecord], n_classes: usize) -> Vec<usize> {
    let mut hist = vec![0usize; n_classes];
    for r in records {
        hist[r.multi_label as usize] += 1;
    }
    hist
}

/// Count data rows of a CSV quickly (header excluded), without parsing.
/// Handy for sanity-reporting on large files.
pub fn count_csv_rows(path: impl AsRef<Path>) -> Result<usize> {
    let file = File::open(path.as_ref())?;
    let reader = std::io::BufReader::new(file);
    let mut n = 0usize;
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            n += 1;
        }
    }
    Ok(n.saturating_sub(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn tiny_schema() -> FeatureSchema {
        FeatureSchema {
            continuous: vec![
                crate::data::schema::ContinuousFeature { name: "dur".into(), binary: false },
                crate::data::schema::ContinuousFeature { name: "flag".into(), binary: true },
            ],
            categorical: vec![crate::data::schema::CategoricalFeature {
                name: "proto".into(),
                vocab: Vocabulary::empty(),
                embed_dim: 2,
            }],
            multi_label_column: "attack_cat".into(),
            binary_label_column: "label".into(),
            class_names: vec!["Normal".into(), "Dos".into(), "Worms".into()],
        }
    }

    fn write_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    const FIXTURE: &str = "\
id,dur,proto,flag,attack_cat,label
1,0.5,tcp,0,Normal,0
2,1.25,udp,1,Dos,1
3,2.0,tcp,0,Worms,1
";

    #[test]
    fn loads_fixture_with_exact_values() {
        let schema = tiny_schema();
        let raw = load_csv_raw(write_csv(FIXTURE).path(), &schema).unwrap();
        assert_eq!(raw.len(), 3);
        assert_eq!(raw[0].continuous, vec![0.5, 0.0]);
        assert_eq!(raw[1].cats, vec!["udp".to_string()]);
        assert_eq!(raw[1].multi_label, 1);
        assert_eq!(raw[2].multi_label, 2);
        assert_eq!(raw[2].binary_label, 1);
    }

    #[test]
    fn vocab_and_encode_round() {
        let schema = tiny_schema();
        let raw = load_csv_raw(write_csv(FIXTURE).path(), &schema).unwrap();
        let schema = fit_vocabularies(&raw, &schema).unwrap();
        let vocab = &schema.categorical[0].vocab;
        assert_eq!(vocab.len(), 3); // UNK + tcp + udp
        assert_eq!(vocab.index_of("tcp"), 1);

        let (records, tally) = encode_records(&raw, &schema);
        assert_eq!(records[0].cats, vec![1]);
        assert_eq!(records[1].cats, vec![2]);
        assert_eq!(tally.total(), 0);
        assert_eq!(class_histogram(&records, 3), vec![1, 1, 1]);
    }

    #[test]
    fn unknown_categories_map_to_zero_and_are_tallied() {
        let schema = tiny_schema();
        let train = load_csv_raw(write_csv(FIXTURE).path(), &schema).unwrap();
        let schema = fit_vocabularies(&train, &schema).unwrap();

        let test_csv = "\
id,dur,proto,flag,attack_cat,label
1,0.1,sctp,0,Normal,0
2,0.2,tcp,1,Dos,1
";
        let (records, tally) = load_csv(write_csv(test_csv).path(), &schema).unwrap();
        assert_eq!(records[0].cats, vec![0]);
        assert_eq!(records[1].cats, vec![1]);
        assert_eq!(tally.total(), 1);
        assert_eq!(tally.per_feature[0], ("proto".to_string(), 1));
    }

    #[test]
    fn missing_column_is_named() {
        let schema = tiny_schema();
        let bad = "id,dur,proto,attack_cat,label\n1,0.5,tcp,Normal,0\n";
        let err = load_csv_raw(write_csv(bad).path(), &schema).unwrap_err();
        assert!(err.to_string().contains("`flag`"), "{err}");
    }

    #[test]
    fn bad_number_reports_row() {
        let schema = tiny_schema();
        let bad = "id,dur,proto,flag,attack_cat,label\n1,0.5,tcp,0,Normal,0\n2,oops,udp,0,Normal,0\n";
        let err = load_csv_raw(write_csv(bad).path(), &schema).unwrap_err();
        match err {
            Error::BadNumber { row, column, value } => {
                assert_eq!(row, 2);
                assert_eq!(column, "dur");
                assert_eq!(value, "oops");
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn inconsistent_binary_label_rejected() {
        let schema = tiny_schema();
        let bad = "id,dur,proto,flag,attack_cat,label\n1,0.5,tcp,0,Dos,0\n";
        assert!(load_csv_raw(write_csv(bad).path(), &schema).is_err());
    }

    #[test]
    fn build_vocab_rejects_non_categorical() {
        let schema = tiny_schema();
        let raw = load_csv_raw(write_csv(FIXTURE).path(), &schema).unwrap();
        assert!(build_vocab(&raw, &schema, "dur").is_err());
    }
}
