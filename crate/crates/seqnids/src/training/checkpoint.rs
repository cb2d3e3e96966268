//! Model checkpoints.
//!
//! Self-describing binary container: magic, format version, schema
//! fingerprint, a JSON metadata section (schema with vocabularies, model
//! and training configs, normalization stats), then named tensors as
//! little-endian row-major 32-bit floats. Loading restores parameters
//! bit-exactly at the stored precision.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::normalize::NormalizationStats;
use crate::data::schema::FeatureSchema;
use crate::error::{Error, Result};
use crate::layers::model::{ModelConfig, ModelParams};
use crate::numerics::TensorBundle;
use crate::training::trainer::TrainConfig;

const MAGIC: &[u8; 8] = b"SNIDCKP\x01";
const VERSION: u32 = 1;
const DTYPE_F32: u8 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    schema: FeatureSchema,
    model: ModelConfig,
    train: TrainConfig,
    stats: NormalizationStats,
}

/// Everything needed to score new data exactly like the training run.
pub struct Checkpoint {
    pub schema: FeatureSchema,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub stats: NormalizationStats,
    pub params: ModelParams,
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &ModelParams,
    train: &TrainConfig,
    schema: &FeatureSchema,
    stats: &NormalizationStats,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&schema.hash().to_le_bytes())?;

    let meta = CheckpointMeta {
        schema: schema.clone(),
        model: params.config.clone(),
        train: train.clone(),
        stats: stats.clone(),
    };
    let json = serde_json::to_vec(&meta)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;

    out.write_all(&(params.tensor_count() as u32).to_le_bytes())?;
    for i in 0..params.tensor_count() {
        let name = params.tensor_name(i).as_bytes();
        let tensor = params.tensor(i);
        out.write_all(&(name.len() as u16).to_le_bytes())?;
        out.write_all(name)?;
        out.write_all(&[DTYPE_F32])?;
        out.write_all(&(tensor.rows() as u32).to_le_bytes())?;
        out.write_all(&(tensor.cols() as u32).to_le_bytes())?;
        for &v in tensor.data() {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::BadFormat(format!("checkpoint truncated while reading {what}")))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let mut input = BufReader::new(File::open(path.as_ref())?);

    let mut magic = [0u8; 8];
    read_exact(&mut input, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::BadFormat("not a model checkpoint (bad magic)".into()));
    }
    let mut b4 = [0u8; 4];
    read_exact(&mut input, &mut b4, "version")?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(Error::BadFormat(format!(
            "unsupported checkpoint version {version}, expected {VERSION}"
        )));
    }
    let mut b8 = [0u8; 8];
    read_exact(&mut input, &mut b8, "schema hash")?;
    let stored_hash = u64::from_le_bytes(b8);

    read_exact(&mut input, &mut b8, "metadata length")?;
    let json_len = u64::from_le_bytes(b8) as usize;
    let mut json = vec![0u8; json_len];
    read_exact(&mut input, &mut json, "metadata")?;
    let meta: CheckpointMeta = serde_json::from_slice(&json)?;
    let got = meta.schema.hash();
    if got != stored_hash {
        return Err(Error::SchemaHashMismatch { expected: stored_hash, got });
    }

    let mut params = ModelParams::init(&meta.model, &meta.schema, 0)?;
    read_exact(&mut input, &mut b4, "tensor count")?;
    let count = u32::from_le_bytes(b4) as usize;
    if count != params.tensor_count() {
        return Err(Error::BadFormat(format!(
            "checkpoint holds {count} tensors, architecture expects {}",
            params.tensor_count()
        )));
    }
    let mut b2 = [0u8; 2];
    let mut b1 = [0u8; 1];
    for i in 0..count {
        read_exact(&mut input, &mut b2, "tensor name length")?;
        let name_len = u16::from_le_bytes(b2) as usize;
        let mut name = vec![0u8; name_len];
        read_exact(&mut input, &mut name, "tensor name")?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::BadFormat("tensor name is not UTF-8".into()))?;
        if name != params.tensor_name(i) {
            return Err(Error::BadFormat(format!(
                "tensor {i} is `{name}`, architecture expects `{}`",
                params.tensor_name(i)
            )));
        }
        read_exact(&mut input, &mut b1, "tensor dtype")?;
        if b1[0] != DTYPE_F32 {
            return Err(Error::BadFormat(format!("unsupported tensor dtype {}", b1[0])));
        }
        read_exact(&mut input, &mut b4, "tensor rows")?;
        let rows = u32::from_le_bytes(b4) as usize;
        read_exact(&mut input, &mut b4, "tensor cols")?;
        let cols = u32::from_le_bytes(b4) as usize;
        let dst = params.tensor_mut(i);
        if (rows, cols) != dst.shape() {
            return Err(Error::BadFormat(format!(
                "tensor `{name}` has shape {rows}x{cols}, architecture expects {}x{}",
                dst.shape().0,
                dst.shape().1
            )));
        }
        for v in dst.data_mut() {
            read_exact(&mut input, &mut b4, "tensor payload")?;
            *v = f32::from_le_bytes(b4) as f64;
        }
    }

    Ok(Checkpoint {
        schema: meta.schema,
        model: meta.model,
        train: meta.train,
        stats: meta.stats,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::normalize::fit_normalization;
    use crate::data::synth::{synth_generate, SynthConfig};
    use crate::data::windows::make_windows;
    use crate::layers::model::{predict_probs, EmbedMode, ModelKind, Task};
    use crate::training::loss::LossMode;

    fn setup() -> (FeatureSchema, ModelParams, TrainConfig, NormalizationStats, crate::data::windows::WindowSet) {
        let (schema, records) = synth_generate(&SynthConfig::new(120, 2, 2, 9)).unwrap();
        let stats = fit_normalization(&records, &schema);
        let windows = make_windows(records, 4).unwrap();
        let mcfg = ModelConfig::new(&schema, Task::Binary, ModelKind::Lstm, EmbedMode::Learned)
            .with_hidden(6)
            .with_fc(5, 3);
        let params = ModelParams::init(&mcfg, &schema, 77).unwrap();
        let mut tcfg = TrainConfig::new(Task::Binary, LossMode::M2M, 4, 77);
        tcfg.log_stdout = false;
        (schema, params, tcfg, stats, windows)
    }

    #[test]
    fn save_load_resave_is_byte_identical() {
        let (schema, params, tcfg, stats, _) = setup();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        save_checkpoint(&p1, &params, &tcfg, &schema, &stats).unwrap();
        let loaded = load_checkpoint(&p1).unwrap();
        save_checkpoint(&p2, &loaded.params, &loaded.train, &loaded.schema, &loaded.stats).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn forward_outputs_survive_the_round_trip() {
        let (schema, params, tcfg, stats, windows) = setup();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &params, &tcfg, &schema, &stats).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        for i in [0usize, 50, 119] {
            let before = predict_probs(&params, &windows.window(i)).unwrap();
            let after = predict_probs(&loaded.params, &windows.window(i)).unwrap();
            for (a, b) in before.iter().zip(&after) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn truncation_and_corruption_are_rejected() {
        let (schema, params, tcfg, stats, _) = setup();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &params, &tcfg, &schema, &stats).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        for cut in [4usize, 30, bytes.len() / 2, bytes.len() - 2] {
            let p = dir.path().join(format!("cut{cut}.ckpt"));
            std::fs::write(&p, &bytes[..cut]).unwrap();
            assert!(load_checkpoint(&p).is_err(), "cut {cut} loaded");
        }

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'Z';
        let p = dir.path().join("magic.ckpt");
        std::fs::write(&p, &bad_magic).unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::BadFormat(_))));

        let mut bad_version = bytes.clone();
        bad_version[8] = 99;
        let p = dir.path().join("version.ckpt");
        std::fs::write(&p, &bad_version).unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::BadFormat(_))));
    }
}
