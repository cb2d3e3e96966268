//! Preprocessed binary record cache.
//!
//! Versioned little-endian container holding the schema (JSON, vocabularies
//! included) and the encoded records, so repeated runs skip CSV parsing.
//! A schema fingerprint ties the cache to the schema that produced it;
//! loading under a different schema is rejected.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::schema::{FeatureSchema, FlowRecord};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SNIDCAC\x01";
const VERSION: u32 = 1;

pub fn write_cache(
    path: impl AsRef<Path>,
    schema: &FeatureSchema,
    records: &[FlowRecord],
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&schema.hash().to_le_bytes())?;

    let json = serde_json::to_vec(schema)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;

    let n_cont = schema.n_continuous() as u32;
    let n_cat = schema.n_categorical() as u32;
    out.write_all(&(records.len() as u64).to_le_bytes())?;
    out.write_all(&n_cont.to_le_bytes())?;
    out.write_all(&n_cat.to_le_bytes())?;
    for r in records {
        debug_assert_eq!(r.continuous.len(), n_cont as usize);
        debug_assert_eq!(r.cats.len(), n_cat as usize);
        for &v in &r.continuous {
            out.write_all(&v.to_le_bytes())?;
        }
        for &c in &r.cats {
            out.write_all(&c.to_le_bytes())?;
        }
        out.write_all(&[r.multi_label, r.binary_label])?;
    }
    out.flush()?;
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::BadFormat(format!("cache truncated while reading {what}")))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

/// Load a cache file, returning the embedded schema and the records.
pub fn read_cache(path: impl AsRef<Path>) -> Result<(FeatureSchema, Vec<FlowRecord>)> {
    let mut input = BufReader::new(File::open(path.as_ref())?);

    let mut magic = [0u8; 8];
    read_exact(&mut input, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::BadFormat("not a record cache (bad magic)".into()));
    }
    let version = read_u32(&mut input, "version")?;
    if version != VERSION {
        return Err(Error::BadFormat(format!(
            "unsupported cache version {version}, expected {VERSION}"
        )));
    }
    let stored_hash = read_u64(&mut input, "schema hash")?;

    let json_len = read_u64(&mut input, "schema length")? as usize;
    let mut json = vec![0u8; json_len];
    read_exact(&mut input, &mut json, "schema json")?;
    let schema: FeatureSchema = serde_json::from_slice(&json)?;
    if schema.hash() != stored_hash {
        return Err(Error::BadFormat(
            "cache schema does not match its stored fingerprint".into(),
        ));
    }

    let n = read_u64(&mut input, "record count")? as usize;
    let n_cont = read_u32(&mut input, "continuous arity")? as usize;
    let n_cat = read_u32(&mut input, "categorical arity")? as usize;
    if n_cont != schema.n_continuous() || n_cat != schema.n_categorical() {
        return Err(Error::BadFormat("record arity disagrees with schema".into()));
    }

    let mut records = Vec::with_capacity(n);
    let mut f8 = [0u8; 8];
    let mut f4 = [0u8; 4];
    let mut f2 = [0u8; 2];
    for _ in 0..n {
        let mut continuous = Vec::with_capacity(n_cont);
        for _ in 0..n_cont {
            read_exact(&mut input, &mut f8, "record payload")?;
            continuous.push(f64::from_le_bytes(f8));
        }
        let mut cats = Vec::with_capacity(n_cat);
        for _ in 0..n_cat {
            read_exact(&mut input, &mut f4, "record payload")?;
            cats.push(u32::from_le_bytes(f4));
        }
        read_exact(&mut input, &mut f2, "record labels")?;
        records.push(FlowRecord {
            continuous,
            cats,
            multi_label: f2[0],
            binary_label: f2[1],
        });
    }
    Ok((schema, records))
}

/// Load a cache and require it to match an expected schema fingerprint.
pub fn read_cache_checked(
    path: impl AsRef<Path>,
    expected_schema_hash: u64,
) -> Result<(FeatureSchema, Vec<FlowRecord>)> {
    let (schema, records) = read_cache(path)?;
    let got = schema.hash();
    if got != expected_schema_hash {
        return Err(Error::SchemaHashMismatch { expected: expected_schema_hash, got });
    }
    Ok((schema, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{synth_generate, SynthConfig};

    #[test]
    fn round_trip_is_exact() {
        let (schema, records) = synth_generate(&SynthConfig::new(300, 2, 2, 1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.bin");
        write_cache(&path, &schema, &records).unwrap();
        let (schema2, records2) = read_cache(&path).unwrap();
        assert_eq!(schema, schema2);
        assert_eq!(records, records2);
    }

    #[test]
    fn truncated_file_is_rejected_cleanly() {
        let (schema, records) = synth_generate(&SynthConfig::new(100, 2, 2, 2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.bin");
        write_cache(&path, &schema, &records).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        for cut in [3usize, 20, bytes.len() / 2, bytes.len() - 1] {
            let trunc = dir.path().join(format!("cut{cut}.bin"));
            std::fs::write(&trunc, &bytes[..cut]).unwrap();
            let err = read_cache(&trunc).unwrap_err();
            assert!(matches!(err, Error::BadFormat(_)), "cut at {cut}: {err}");
        }
    }

    #[test]
    fn wrong_magic_and_schema_hash_are_rejected() {
        let (schema, records) = synth_generate(&SynthConfig::new(60, 2, 2, 3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.bin");
        write_cache(&path, &schema, &records).unwrap();

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        let bad = dir.path().join("bad.bin");
        std::fs::write(&bad, &bytes).unwrap();
        assert!(matches!(read_cache(&bad), Err(Error::BadFormat(_))));

        let err = read_cache_checked(&path, schema.hash() ^ 1).unwrap_err();
        assert!(matches!(err, Error::SchemaHashMismatch { .. }));
    }
}
