//! Model checkpoint container.
//!
//! Layout:
//!
//! ```text
//! "CEWT" | version (1 byte) | header length (u64 LE) | JSON header |
//! blob 0 | blob 1 | ...
//! ```
//!
//! The JSON header lists every entry's name and shape along with the
//! training step count and whether optimizer state is included; the blobs
//! are little-endian 32-bit floats, one per entry, in header order.
//! Optimizer moments are stored as ordinary entries (conventionally named
//! `<param>.adam_m` / `<param>.adam_v`) with the flag set.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// File magic for checkpoints.
const MAGIC: &[u8; 4] = b"CEWT";
/// Container format version.
const VERSION: u8 = 1;

/// One named parameter blob.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry {
    /// Unique entry name, e.g. `enc1.conv1.weight`.
    pub name: String,
    /// Tensor shape of the blob.
    pub shape: Vec<usize>,
    /// Row-major values.
    pub data: Vec<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct HeaderLayer {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    step: u64,
    optimizer_state: bool,
    layers: Vec<HeaderLayer>,
}

/// A complete checkpoint: step counter, optimizer-state flag, and entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Training steps completed when the checkpoint was taken.
    pub step: u64,
    /// Whether optimizer-moment entries are included.
    pub optimizer_state: bool,
    /// Entries in file order.
    pub entries: Vec<CheckpointEntry>,
}

impl Checkpoint {
    /// Look up an entry by name.
    pub fn entry(&self, name: &str) -> Option<&CheckpointEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Write the checkpoint to `path`.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidConfig`] for duplicate entry names or a
    /// shape/data length mismatch, and I/O errors from writing.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.name.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate checkpoint entry name: {}",
                    e.name
                )));
            }
            let len: usize = e.shape.iter().product();
            if len != e.data.len() {
                return Err(Error::InvalidConfig(format!(
                    "entry {} shape {:?} does not match {} values",
                    e.name,
                    e.shape,
                    e.data.len()
                )));
            }
        }
        let header = Header {
            step: self.step,
            optimizer_state: self.optimizer_state,
            layers: self
                .entries
                .iter()
                .map(|e| HeaderLayer {
                    name: e.name.clone(),
                    shape: e.shape.clone(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)
            .map_err(|e| Error::Format(format!("checkpoint header serialization failed: {e}")))?;
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION])?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for e in &self.entries {
            for v in &e.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Read a checkpoint from `path`.
    ///
    /// # Errors
    ///
    /// Returns [`Error::Format`] for a wrong magic, version, or malformed
    /// header, and I/O errors (including truncation) from reading.
    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!(
                "bad checkpoint magic {magic:?}, expected {MAGIC:?}"
            )));
        }
        let mut version = [0u8; 1];
        r.read_exact(&mut version)?;
        if version[0] != VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {}, expected {VERSION}",
                version[0]
            )));
        }
        let mut len_bytes = [0u8; 8];
        r.read_exact(&mut len_bytes)?;
        let json_len = u64::from_le_bytes(len_bytes) as usize;
        let mut json = vec![0u8; json_len];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json)
            .map_err(|e| Error::Format(format!("checkpoint header parse failed: {e}")))?;
        let mut entries = Vec::with_capacity(header.layers.len());
        for layer in header.layers {
            let len: usize = layer.shape.iter().product();
            let mut bytes = vec![0u8; len * 4];
            r.read_exact(&mut bytes)?;
            let data: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
                .collect();
            entries.push(CheckpointEntry {
                name: layer.name,
                shape: layer.shape,
                data,
            });
        }
        Ok(Self {
            step: header.step,
            optimizer_state: header.optimizer_state,
            entries,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_checkpoint() -> Checkpoint {
        Checkpoint {
            step: 42,
            optimizer_state: true,
            entries: vec![
                CheckpointEntry {
                    name: "fc.weight".into(),
                    shape: vec![2, 3],
                    data: vec![0.5, -1.25, 3.0, -0.0, 1e-20, 7.5],
                },
                CheckpointEntry {
                    name: "fc.weight.adam_m".into(),
                    shape: vec![2, 3],
                    data: vec![0.1; 6],
                },
                CheckpointEntry {
                    name: "fc.bias".into(),
                    shape: vec![2],
                    data: vec![0.25, -0.75],
                },
            ],
        }
    }

    #[test]
    fn test_round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.cewt");
        let ckpt = sample_checkpoint();
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded, ckpt);
        assert_eq!(loaded.entry("fc.bias").unwrap().data, vec![0.25, -0.75]);
        assert!(loaded.entry("missing").is_none());
    }

    #[test]
    fn test_file_layout_magic_version_then_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("layout.cewt");
        sample_checkpoint().save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"CEWT");
        assert_eq!(bytes[4], 1);
        let json_len = u64::from_le_bytes(bytes[5..13].try_into().unwrap()) as usize;
        let header = std::str::from_utf8(&bytes[13..13 + json_len]).unwrap();
        assert!(header.contains("\"fc.weight\""));
        assert!(header.contains("\"optimizer_state\":true"));
        // Blob section: 6 + 6 + 2 floats, 4 bytes each, in header order.
        assert_eq!(bytes.len(), 13 + json_len + 14 * 4);
        let first = f32::from_le_bytes(bytes[13 + json_len..17 + json_len].try_into().unwrap());
        assert_eq!(first, 0.5);
    }

    #[test]
    fn test_rejects_corrupt_headers_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let bad_magic = dir.path().join("bad.cewt");
        std::fs::write(&bad_magic, b"NOPE\x01\x00\x00\x00\x00\x00\x00\x00\x00").unwrap();
        assert!(Checkpoint::load(&bad_magic).is_err());

        let bad_version = dir.path().join("badver.cewt");
        std::fs::write(&bad_version, b"CEWT\x07\x00\x00\x00\x00\x00\x00\x00\x00").unwrap();
        assert!(Checkpoint::load(&bad_version).is_err());

        // Truncate mid-blob.
        let path = dir.path().join("trunc.cewt");
        sample_checkpoint().save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }

    #[test]
    fn test_save_rejects_bad_entries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.cewt");
        let mut ckpt = sample_checkpoint();
        ckpt.entries[1].name = "fc.weight".into();
        assert!(ckpt.save(&path).is_err(), "duplicate names rejected");

        let mut ckpt = sample_checkpoint();
        ckpt.entries[0].data.pop();
        assert!(ckpt.save(&path).is_err(), "shape/data mismatch rejected");
    }
}
