//! Checkpoint container.
//!
//! Layout: the magic `OZSLCKP1`, a little-endian `u32` byte length, a JSON
//! header holding [`CheckpointMeta`] and the section table, then every
//! section's matrices in `OZSLMAT1` encoding, in table order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"OZSLCKP1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub embedding_dim: usize,
    pub feature_dim: usize,
    pub width_divisor: usize,
    pub leaky_slope: f64,
    pub seed: u64,
    pub generator_steps: usize,
    pub critic_steps: usize,
    /// Seen classes, in the order of the pretrained classifier's outputs.
    pub seen_classes: Vec<String>,
    #[serde(default)]
    pub sampler_fixed_sigma: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: CheckpointMeta,
    sections: Vec<SectionEntry>,
}

#[derive(Serialize, Deserialize)]
struct SectionEntry {
    name: String,
    matrices: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    sections: Vec<(String, Vec<Matrix>)>,
}

impl Checkpoint {
    pub fn new(meta: CheckpointMeta) -> Self {
        Checkpoint { meta, sections: Vec::new() }
    }

    /// Adds or replaces a named section.
    pub fn put(&mut self, name: &str, matrices: Vec<Matrix>) {
        match self.sections.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = matrices,
            None => self.sections.push((name.to_string(), matrices)),
        }
    }

    pub fn section(&self, name: &str) -> Result<&[Matrix]> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m.as_slice())
            .ok_or_else(|| Error::Format(format!("checkpoint has no `{name}` section")))
    }

    pub fn has_section(&self, name: &str) -> bool {
        self.sections.iter().any(|(n, _)| n == name)
    }

    pub fn section_names(&self) -> impl Iterator<Item = &str> {
        self.sections.iter().map(|(n, _)| n.as_str())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            meta: self.meta.clone(),
            sections: self
                .sections
                .iter()
                .map(|(name, m)| SectionEntry { name: name.clone(), matrices: m.len() })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
        let len = u32::try_from(json.len()).map_err(|_| Error::Format("checkpoint header too large".into()))?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(&json)?;
        for (_, matrices) in &self.sections {
            for m in matrices {
                m.write_to(&mut w)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| Error::Format("truncated checkpoint".into()))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("not an OZSLCKP1 checkpoint".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word).map_err(|_| Error::Format("truncated checkpoint".into()))?;
        let mut json = vec![0u8; u32::from_le_bytes(word) as usize];
        r.read_exact(&mut json).map_err(|_| Error::Format("truncated checkpoint header".into()))?;
        let header: Header =
            serde_json::from_slice(&json).map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        let mut sections = Vec::with_capacity(header.sections.len());
        for entry in header.sections {
            let matrices = (0..entry.matrices).map(|_| Matrix::read_from(&mut r)).collect::<Result<Vec<_>>>()?;
            sections.push((entry.name, matrices));
        }
        Ok(Checkpoint { meta: header.meta, sections })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}
