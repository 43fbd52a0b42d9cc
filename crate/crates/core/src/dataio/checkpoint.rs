//! Checkpoint container:
//!
//! ```text
//! "XDRCKPT1"                 8 bytes
//! header length              u64 LE
//! header                     UTF-8 JSON (see `Header`)
//! params                     param_count × f64 LE, in `layout` order
//! optimizer first moments    m_len × f64 LE
//! optimizer second moments   v_len × f64 LE
//! ```
//!
//! `m_len` and `v_len` are either `param_count` (Adam) or 0 (SGD).

use super::write_atomic;
use crate::error::{Error, Result};
use crate::heads::{HeadConfig, HeadModel, HeadVariant};
use crate::numeric::RngStream;
use crate::training::{Checkpoint, TargetStats, TrainConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"XDRCKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;
const PREFIX: usize = 16;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    variant: HeadVariant,
    c_m: usize,
    c_f: usize,
    epoch: usize,
    head: HeadConfig,
    config: TrainConfig,
    target_stats: Option<TargetStats>,
    layout: Vec<(String, usize)>,
    param_count: usize,
    optimizer_step: u64,
    m_len: usize,
    v_len: usize,
}

fn layout(head: &HeadConfig) -> Result<Vec<(String, usize)>> {
    let model = HeadModel::<f64>::build(head.clone(), &mut RngStream::new(0))?;
    Ok(model.params().into_iter().map(|(n, p)| (n, p.len())).collect())
}

/// Checkpoint bytes exactly as [`save_checkpoint`] writes them.
pub fn encode(ck: &Checkpoint) -> Result<Vec<u8>> {
    let layout = layout(&ck.head)?;
    let param_count: usize = layout.iter().map(|(_, n)| n).sum();
    if ck.params.len() != param_count {
        return Err(Error::Contract(format!(
            "checkpoint has {} parameters, head needs {param_count}",
            ck.params.len()
        )));
    }
    for (name, buf) in [("m", &ck.optimizer_m), ("v", &ck.optimizer_v)] {
        if !buf.is_empty() && buf.len() != param_count {
            return Err(Error::Contract(format!("optimizer {name} has {} values", buf.len())));
        }
    }
    let header = Header {
        version: CHECKPOINT_VERSION,
        variant: ck.head.variant,
        c_m: ck.head.c_m,
        c_f: ck.head.c_f,
        epoch: ck.epoch,
        head: ck.head.clone(),
        config: ck.config.clone(),
        target_stats: ck.target_stats,
        layout,
        param_count,
        optimizer_step: ck.optimizer_step,
        m_len: ck.optimizer_m.len(),
        v_len: ck.optimizer_v.len(),
    };
    let json = serde_json::to_vec(&header)?;
    let n = ck.params.len() + ck.optimizer_m.len() + ck.optimizer_v.len();
    let mut buf = Vec::with_capacity(PREFIX + json.len() + 8 * n);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for v in ck.params.iter().chain(&ck.optimizer_m).chain(&ck.optimizer_v) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    write_atomic(path, &encode(ck)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(path, &bytes)
}

fn decode(path: &Path, bytes: &[u8]) -> Result<Checkpoint> {
    let incompatible = |msg: String| Error::Incompatible { path: path.into(), msg };
    let format = |offset: usize, msg: String| Error::Format {
        path: path.into(),
        offset: offset as u64,
        msg,
    };
    if bytes.len() < 8 || &bytes[..8] != CHECKPOINT_MAGIC {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(8)]).into_owned();
        return Err(if found.starts_with("XDRCKPT") {
            incompatible(format!("checkpoint version {found:?}, this build reads XDRCKPT1"))
        } else {
            incompatible(format!("not a checkpoint (magic {found:?})"))
        });
    }
    if bytes.len() < PREFIX {
        return Err(format(bytes.len(), "truncated header length".into()));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let body = usize::try_from(hlen)
        .ok()
        .and_then(|h| h.checked_add(PREFIX))
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| format(8, format!("header length {hlen} exceeds file size {}", bytes.len())))?;
    let header: Header =
        serde_json::from_slice(&bytes[PREFIX..body]).map_err(|e| format(PREFIX, format!("bad header: {e}")))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(incompatible(format!("header version {}", header.version)));
    }
    if header.variant != header.head.variant || (header.c_m, header.c_f) != (header.head.c_m, header.head.c_f) {
        return Err(format(PREFIX, "header variant or dims disagree with head config".into()));
    }
    let expected_layout = layout(&header.head).map_err(|e| format(PREFIX, format!("bad head config: {e}")))?;
    if expected_layout != header.layout {
        return Err(incompatible("parameter layout differs from this build".into()));
    }
    let pc = header.param_count;
    if expected_layout.iter().map(|(_, n)| n).sum::<usize>() != pc {
        return Err(format(PREFIX, "param_count disagrees with layout".into()));
    }
    for (name, len) in [("m", header.m_len), ("v", header.v_len)] {
        if len != 0 && len != pc {
            return Err(format(PREFIX, format!("optimizer {name} length {len}")));
        }
    }
    let n = pc + header.m_len + header.v_len;
    let end = body + 8 * n;
    if bytes.len() != end {
        return Err(format(
            end.min(bytes.len()),
            format!("expected {end} bytes for {n} arrays values, file has {}", bytes.len()),
        ));
    }
    let mut vals = bytes[body..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut take = |k: usize| (&mut vals).take(k).collect::<Vec<f64>>();
    let params = take(pc);
    let optimizer_m = take(header.m_len);
    let optimizer_v = take(header.v_len);
    Ok(Checkpoint {
        epoch: header.epoch,
        head: header.head,
        config: header.config,
        target_stats: header.target_stats,
        params,
        optimizer_step: header.optimizer_step,
        optimizer_m,
        optimizer_v,
    })
}
