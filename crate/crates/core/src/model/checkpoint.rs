//! Binary checkpoint container.
//!
//! ```text
//! magic    8 bytes  "SWMNNCKP"
//! version  u32 LE
//! hlen     u64 LE   length of the JSON header in bytes
//! header   JSON     {format_version, config, variant, arrays: [{name, shape, offset}]}
//! payload  f64 LE   arrays back to back; `offset` counts bytes from payload start
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SwmConfig, SwmParams, Variant};
use crate::autodiff::Tensor;
use crate::error::write_file;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SWMNNCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: SwmConfig,
    variant: Variant,
    arrays: Vec<ArrayEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: SwmConfig,
    pub variant: Variant,
    pub params: SwmParams,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.params.check_shapes(&self.config)?;
        let mut arrays = Vec::new();
        let mut offset = 0u64;
        for (name, t) in self.params.named() {
            arrays.push(ArrayEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                offset,
            });
            offset += 8 * t.len() as u64;
        }
        let header = serde_json::to_vec(&Header {
            format_version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            variant: self.variant,
            arrays,
        })?;
        let mut out = Vec::with_capacity(20 + header.len() + offset as usize);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in self.params.named() {
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(corrupt("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(corrupt(format!("unsupported format version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let header_end = 20usize
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| corrupt("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[20..header_end])?;
        if header.format_version != version {
            return Err(corrupt("header version disagrees with preamble"));
        }
        header.config.validate()?;
        let payload = &bytes[header_end..];

        let mut params = SwmParams::zeros(&header.config);
        for (name, slot) in params.named_mut() {
            let entry = header
                .arrays
                .iter()
                .find(|a| a.name == name)
                .ok_or_else(|| corrupt(format!("missing parameter `{name}`")))?;
            if entry.shape != slot.shape() {
                return Err(Error::ParamShape {
                    name: name.to_string(),
                    expected: slot.shape().to_vec(),
                    found: entry.shape.clone(),
                });
            }
            let start = entry.offset as usize;
            let end = start + 8 * slot.len();
            let raw = payload
                .get(start..end)
                .ok_or_else(|| corrupt(format!("payload too short for `{name}`")))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            *slot = Tensor::from_vec(&entry.shape, data)?;
        }
        Ok(Checkpoint {
            config: header.config,
            variant: header.variant,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let config = SwmConfig::new(12, 9).with_dims(3);
        let params = SwmParams::init(&config, &mut ChaCha8Rng::seed_from_u64(4));
        Checkpoint {
            config,
            variant: Variant::WoMatch,
            params,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let bytes = ck.to_bytes().unwrap();
        assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn header_lists_field_names() {
        let bytes = sample().to_bytes().unwrap();
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[20..20 + hlen]).unwrap();
        let names: Vec<&str> = header["arrays"]
            .as_array()
            .unwrap()
            .iter()
            .map(|a| a["name"].as_str().unwrap())
            .collect();
        assert_eq!(names[0], "word_embedding");
        assert!(names.contains(&"sememe_attention.context"));
        assert_eq!(header["variant"], "wo-match");
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..10]).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 8]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
    }

    #[test]
    fn shape_mismatch_names_parameter() {
        let mut ck = sample();
        ck.params.match_sense = Tensor::zeros(&[2, 2]);
        let err = ck.to_bytes().unwrap_err();
        assert!(err.to_string().contains("match_sense"), "{err}");
    }
}
