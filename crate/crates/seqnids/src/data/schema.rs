//! Feature schema: which columns are continuous, categorical, and labels,
//! plus the categorical vocabularies learned from training data.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::util::fnv1a64;

/// Name reserved for index 0 in every vocabulary: unknown values and
/// sequence padding both map here.
pub const UNK: &str = "<unk>";

/// String-to-index mapping for one categorical feature. Index 0 is always
/// the UNK/PAD slot; training-set values occupy indices `1..len()` in
/// lexicographic order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    names: Vec<String>,
    map: HashMap<String, usize>,
}

impl Vocabulary {
    /// Vocabulary containing only the UNK slot.
    pub fn empty() -> Self {
        Self::from_names(vec![UNK.to_string()])
    }

    fn from_names(names: Vec<String>) -> Self {
        let map = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Self { names, map }
    }

    /// Build from distinct raw values: sorted lexicographically, assigned
    /// indices starting at 1.
    pub fn from_values<'a>(values: impl IntoIterator<Item = &'a str>) -> Self {
        let mut distinct: Vec<&str> = values.into_iter().collect();
        distinct.sort_unstable();
        distinct.dedup();
        let mut names = Vec::with_capacity(distinct.len() + 1);
        names.push(UNK.to_string());
        names.extend(distinct.into_iter().map(String::from));
        Self::from_names(names)
    }

    /// Total size T, including the UNK slot.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.len() <= 1
    }

    /// Index for a value; unknown values map to 0.
    pub fn index_of(&self, value: &str) -> usize {
        self.map.get(value).copied().unwrap_or(0)
    }

    /// True if the value is present (not mapped to UNK).
    pub fn contains(&self, value: &str) -> bool {
        self.map.contains_key(value)
    }

    pub fn name_of(&self, index: usize) -> &str {
        &self.names[index]
    }
}

impl From<Vec<String>> for Vocabulary {
    fn from(names: Vec<String>) -> Self {
        Self::from_names(names)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.names
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousFeature {
    pub name: String,
    /// Binary indicator columns pass through normalization unchanged.
    pub binary: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalFeature {
    pub name: String,
    pub vocab: Vocabulary,
    /// Embedding width used when the model runs with learned embeddings.
    pub embed_dim: usize,
}

/// Column layout of the flow-record CSVs plus learned vocabularies and the
/// class set. The schema fingerprint ties caches and checkpoints to the data
/// they were built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub continuous: Vec<ContinuousFeature>,
    pub categorical: Vec<CategoricalFeature>,
    pub multi_label_column: String,
    pub binary_label_column: String,
    /// Class names indexed by class id; index 0 is the normal class.
    pub class_names: Vec<String>,
}

impl FeatureSchema {
    /// Schema for the UNSW-NB15 partition CSVs
    /// (`UNSW_NB15_training-set.csv` layout): 37 numeric and 2 binary
    /// continuous features, 3 nominal features, `attack_cat` and `label`
    /// columns. Vocabularies start empty and are filled from training data.
    pub fn unsw() -> Self {
        const NUMERIC: &[&str] = &[
            "dur", "spkts", "dpkts", "sbytes", "dbytes", "rate", "sttl", "dttl", "sload", "dload",
            "sloss", "dloss", "sinpkt", "dinpkt", "sjit", "djit", "swin", "stcpb", "dtcpb", "dwin",
            "tcprtt", "synack", "ackdat", "smean", "dmean", "trans_depth", "response_body_len",
            "ct_srv_src", "ct_state_ttl", "ct_dst_ltm", "ct_src_dport_ltm", "ct_dst_sport_ltm",
            "ct_dst_src_ltm", "is_ftp_login", "ct_ftp_cmd", "ct_flw_http_mthd", "ct_src_ltm",
            "ct_srv_dst", "is_sm_ips_ports",
        ];
        const BINARY: &[&str] = &["is_ftp_login", "is_sm_ips_ports"];
        let continuous = NUMERIC
            .iter()
            .map(|&name| ContinuousFeature { name: name.into(), binary: BINARY.contains(&name) })
            .collect();
        let categorical = [("proto", 5), ("service", 3), ("state", 2)]
            .iter()
            .map(|&(name, embed_dim)| CategoricalFeature {
                name: name.into(),
                vocab: Vocabulary::empty(),
                embed_dim,
            })
            .collect();
        Self {
            continuous,
            categorical,
            multi_label_column: "attack_cat".into(),
            binary_label_column: "label".into(),
            class_names: [
                "Normal", "Analysis", "Backdoor", "DoS", "Exploits", "Fuzzers", "Generic",
                "Reconnaissance", "Shellcode", "Worms",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        }
    }

    pub fn n_continuous(&self) -> usize {
        self.continuous.len()
    }

    pub fn n_categorical(&self) -> usize {
        self.categorical.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Case-insensitive class lookup with whitespace trimmed; tolerates the
    /// plural spelling of the backdoor class that appears in some UNSW-NB15
    /// exports.
    pub fn class_index(&self, name: &str) -> Option<usize> {
        let trimmed = name.trim();
        let pos = self
            .class_names
            .iter()
            .position(|c| c.eq_ignore_ascii_case(trimmed));
        pos.or_else(|| {
            if trimmed.eq_ignore_ascii_case("backdoors") {
                self.class_names
                    .iter()
                    .position(|c| c.eq_ignore_ascii_case("backdoor"))
            } else {
                None
            }
        })
    }

    /// Stable fingerprint over the full schema, vocabularies included.
    pub fn hash(&self) -> u64 {
        let json = serde_json::to_string(self).expect("schema serializes");
        fnv1a64(json.as_bytes())
    }
}

/// One preprocessed flow record: continuous features (raw or normalized,
/// depending on pipeline stage), categorical indices, and both label views.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowRecord {
    pub continuous: Vec<f64>,
    pub cats: Vec<u32>,
    /// Class id; 0 is the normal class.
    pub multi_label: u8,
    /// 0 = normal, 1 = attack. Zero exactly when `multi_label` is zero.
    pub binary_label: u8,
}

impl FlowRecord {
    /// Padding record: zero continuous features, UNK categorical indices.
    /// Its labels are never read by a correctly masked loss.
    pub fn pad(n_continuous: usize, n_categorical: usize) -> Self {
        Self {
            continuous: vec![0.0; n_continuous],
            cats: vec![0; n_categorical],
            multi_label: 0,
            binary_label: 0,
        }
    }
}
