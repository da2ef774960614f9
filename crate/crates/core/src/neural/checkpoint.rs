//! Versioned binary checkpoint container.
//!
//! Layout: header (magic, version, parameter count), then one manifest entry
//! per parameter (name, dtype, shape, byte offset into the payload), then
//! the little-endian payload. f64 saves are bit-exact round trips; f32 saves
//! quantize.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{PipelineError, Result};
use crate::neural::param::ParamCollection;
use crate::neural::Precision;

const MAGIC: &[u8; 4] = b"CKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub name: String,
    pub dtype: Precision,
    pub shape: Vec<usize>,
    pub offset: u64,
}

pub fn save_checkpoint(
    params: &mut impl ParamCollection,
    path: impl AsRef<Path>,
    precision: Precision,
) -> Result<()> {
    let path = path.as_ref();
    let mut entries: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::new();
    params.visit_params(&mut |p| {
        entries.push((p.name.clone(), p.value.shape().to_vec(), p.value.data().to_vec()));
    });

    let mut manifest = Vec::new();
    let mut payload: Vec<u8> = Vec::new();
    for (name, shape, data) in &entries {
        let offset = payload.len() as u64;
        manifest.push((name, shape, offset));
        match precision {
            Precision::F64 => {
                for &v in data {
                    payload.extend_from_slice(&v.to_le_bytes());
                }
            }
            Precision::F32 => {
                for &v in data {
                    payload.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
        }
    }

    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(entries.len() as u64).to_le_bytes());
    for (name, shape, offset) in manifest {
        let bytes = name.as_bytes();
        buf.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
        buf.extend_from_slice(bytes);
        buf.push(match precision {
            Precision::F64 => 0,
            Precision::F32 => 1,
        });
        buf.push(shape.len() as u8);
        for &d in shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        buf.extend_from_slice(&offset.to_le_bytes());
    }
    buf.extend_from_slice(&payload);

    let mut file = fs::File::create(path).map_err(|e| PipelineError::io(path, e))?;
    file.write_all(&buf).map_err(|e| PipelineError::io(path, e))
}

/// Read the manifest without loading values.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let (entries, _) = read_all(path.as_ref())?;
    Ok(entries)
}

/// Load a checkpoint into an existing model. Every model parameter must be
/// present with a matching shape; extra entries in the file are an error.
pub fn load_checkpoint(params: &mut impl ParamCollection, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (entries, payload) = read_all(path)?;
    let mut by_name: HashMap<&str, &ManifestEntry> =
        entries.iter().map(|e| (e.name.as_str(), e)).collect();

    let mut failure: Option<PipelineError> = None;
    params.visit_params(&mut |p| {
        if failure.is_some() {
            return;
        }
        let Some(entry) = by_name.remove(p.name.as_str()) else {
            failure = Some(PipelineError::Integrity(format!(
                "checkpoint missing parameter {}",
                p.name
            )));
            return;
        };
        if entry.shape != p.value.shape() {
            failure = Some(PipelineError::Integrity(format!(
                "checkpoint parameter {} has shape {:?}, model expects {:?}",
                p.name,
                entry.shape,
                p.value.shape()
            )));
            return;
        }
        let n = p.value.len();
        let width = match entry.dtype {
            Precision::F64 => 8,
            Precision::F32 => 4,
        };
        let start = entry.offset as usize;
        let end = start + n * width;
        if end > payload.len() {
            failure = Some(PipelineError::Integrity(format!(
                "checkpoint payload truncated for {}",
                p.name
            )));
            return;
        }
        let bytes = &payload[start..end];
        for (i, v) in p.value.data_mut().iter_mut().enumerate() {
            *v = match entry.dtype {
                Precision::F64 => f64::from_le_bytes(
                    bytes[i * 8..(i + 1) * 8].try_into().expect("width checked"),
                ),
                Precision::F32 => f32::from_le_bytes(
                    bytes[i * 4..(i + 1) * 4].try_into().expect("width checked"),
                ) as f64,
            };
        }
    });
    if let Some(err) = failure {
        return Err(err);
    }
    if let Some(extra) = by_name.keys().next() {
        return Err(PipelineError::Integrity(format!(
            "checkpoint contains unknown parameter {extra}"
        )));
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.at + n > self.bytes.len() {
            return Err(PipelineError::Integrity(format!(
                "checkpoint truncated reading {what}"
            )));
        }
        let out = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(out)
    }

    fn take_u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn take_u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn take_u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

fn read_all(path: &Path) -> Result<(Vec<ManifestEntry>, Vec<u8>)> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| PipelineError::io(path, e))?;
    let mut r = Reader { bytes: &bytes, at: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(PipelineError::Integrity(format!(
            "checkpoint {}: bad magic",
            path.display()
        )));
    }
    let version = r.take_u32("version")?;
    if version != VERSION {
        return Err(PipelineError::Integrity(format!(
            "checkpoint {}: unsupported version {version}",
            path.display()
        )));
    }
    let count = r.take_u64("parameter count")? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.take_u16("name length")? as usize;
        let name = String::from_utf8(r.take(name_len, "name")?.to_vec())
            .map_err(|_| PipelineError::Integrity("checkpoint name is not utf-8".into()))?;
        let dtype = match r.take(1, "dtype")?[0] {
            0 => Precision::F64,
            1 => Precision::F32,
            other => {
                return Err(PipelineError::Integrity(format!(
                    "checkpoint: unknown dtype {other}"
                )))
            }
        };
        let ndim = r.take(1, "rank")?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.take_u64("shape")? as usize);
        }
        let offset = r.take_u64("offset")?;
        entries.push(ManifestEntry {
            name,
            dtype,
            shape,
            offset,
        });
    }
    let payload = bytes[r.at..].to_vec();
    Ok((entries, payload))
}
