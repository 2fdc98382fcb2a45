//! Binary model container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "CINTMDL\0"
//! version      u32
//! fingerprint  u64      schema fingerprint
//! input_dim    u32
//! hidden_dim   u32
//! scaled_cols  u32      number of scaler columns
//! meta_len     u32
//! meta         meta_len bytes of UTF-8 JSON (schema, training metadata, scaler columns)
//! w_input      4H·I f64, row-major, gates i f g o
//! w_recurrent  4H·H f64
//! bias         4H f64
//! dense_w      H f64
//! dense_b      1 f64
//! scaler_mean  scaled_cols f64
//! scaler_std   scaled_cols f64
//! checksum     32 bytes SHA-256 of everything above
//! ```

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::trainer::{TrainedModel, TrainingMeta};
use crate::ingest::{ColumnStats, FeatureSchema, Scaler, SchemaFingerprint};
use crate::seqmath::{DenseParams, LstmParams, Network};
use crate::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"CINTMDL\0";
pub const MODEL_FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 4 + 4 + 4 + 4;
const CHECKSUM_LEN: usize = 32;

#[derive(Serialize, Deserialize)]
struct Meta {
    schema: FeatureSchema,
    training: TrainingMeta,
    scaler_columns: Vec<usize>,
}

pub fn save_model<W: Write>(model: &TrainedModel, mut sink: W) -> Result<()> {
    let net = &model.network;
    net.validate()?;
    if model.schema.fingerprint() != model.scaler.fingerprint {
        return Err(Error::Schema("model schema and scaler fingerprints differ".into()));
    }
    let meta = serde_json::to_vec(&Meta {
        schema: model.schema.clone(),
        training: model.meta.clone(),
        scaler_columns: model.scaler.columns.iter().map(|c| c.column).collect(),
    })?;
    let mut buf = Vec::with_capacity(HEADER_LEN + meta.len() + 8 * net.param_count() + CHECKSUM_LEN);
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&model.fingerprint().0.to_le_bytes());
    buf.extend_from_slice(&(net.input_dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(net.hidden_dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(model.scaler.columns.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    buf.extend_from_slice(&meta);
    for tensor in net.tensors() {
        for x in tensor {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    for c in &model.scaler.columns {
        buf.extend_from_slice(&c.mean.to_le_bytes());
    }
    for c in &model.scaler.columns {
        buf.extend_from_slice(&c.std.to_le_bytes());
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    sink.write_all(&buf)?;
    sink.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Integrity(format!("model payload truncated at byte {} (need {n} more)", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Integrity("size overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

pub fn load_model<R: Read>(mut source: R) -> Result<TrainedModel> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    if bytes.len() < 12 {
        return Err(Error::Integrity(format!("model payload is only {} bytes", bytes.len())));
    }
    if &bytes[..8] != MODEL_MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::Version { found: version, expected: MODEL_FORMAT_VERSION });
    }
    if bytes.len() < HEADER_LEN + CHECKSUM_LEN {
        return Err(Error::Integrity("model payload truncated inside the header".into()));
    }
    let (body, stored) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    if Sha256::digest(body).as_slice() != stored {
        return Err(Error::Integrity("checksum mismatch (corrupt or truncated model file)".into()));
    }

    let mut cur = Cursor { bytes: body, pos: 12 };
    let fingerprint = SchemaFingerprint(cur.u64()?);
    let input_dim = cur.u32()? as usize;
    let hidden_dim = cur.u32()? as usize;
    let ncols = cur.u32()? as usize;
    let meta_len = cur.u32()? as usize;
    let meta: Meta = serde_json::from_slice(cur.take(meta_len)?)?;

    let h4 = 4 * hidden_dim;
    let w_input = Array2::from_shape_vec((h4, input_dim), cur.f64s(h4 * input_dim)?)
        .map_err(|e| Error::Integrity(e.to_string()))?;
    let w_recurrent = Array2::from_shape_vec((h4, hidden_dim), cur.f64s(h4 * hidden_dim)?)
        .map_err(|e| Error::Integrity(e.to_string()))?;
    let bias = Array1::from(cur.f64s(h4)?);
    let weights = Array1::from(cur.f64s(hidden_dim)?);
    let dense_bias = cur.f64s(1)?[0];
    let means = cur.f64s(ncols)?;
    let stds = cur.f64s(ncols)?;
    if cur.pos != body.len() {
        return Err(Error::Integrity(format!("{} trailing bytes after weights", body.len() - cur.pos)));
    }
    if meta.scaler_columns.len() != ncols {
        return Err(Error::Integrity("scaler column count disagrees with header".into()));
    }
    if meta.schema.fingerprint() != fingerprint {
        return Err(Error::Integrity("embedded schema does not match header fingerprint".into()));
    }
    if meta.schema.width() != input_dim {
        return Err(Error::Integrity("schema width disagrees with input_dim".into()));
    }

    let network = Network { lstm: LstmParams { w_input, w_recurrent, bias }, dense: DenseParams { weights, bias: dense_bias } };
    network.validate()?;
    let columns = meta
        .scaler_columns
        .iter()
        .zip(means.iter().zip(&stds))
        .map(|(&column, (&mean, &std))| ColumnStats { column, mean, std })
        .collect();
    Ok(TrainedModel {
        network,
        scaler: Scaler { fingerprint, width: input_dim, columns },
        schema: meta.schema,
        meta: meta.training,
    })
}

fn with_path(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

pub fn write_model_file(model: &TrainedModel, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| with_path(path, e))?;
    let mut w = BufWriter::new(file);
    save_model(model, &mut w)?;
    w.into_inner().map_err(|e| Error::Io(e.into_error()))?.sync_all()?;
    Ok(())
}

pub fn read_model_file(path: &Path) -> Result<TrainedModel> {
    load_model(File::open(path).map_err(|e| with_path(path, e))?)
}
