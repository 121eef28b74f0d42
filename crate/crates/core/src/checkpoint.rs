//! Binary parameter container shared by both networks.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        4 bytes   "YNET" or "PNET"
//! version      u16
//! config_len   u32, then config_len bytes of UTF-8 JSON
//! param_count  u32
//! per parameter:
//!   name_len u32, name bytes
//!   rank     u32, rank x u32 extents
//!   values   product(extents) x f32
//! crc32        u32 over every preceding byte
//! ```

use std::fs;
use std::path::Path;

use crate::nn::{NamedTensors, Tensor};

pub const FORMAT_VERSION: u16 = 1;
pub const YNET_MAGIC: [u8; 4] = *b"YNET";
pub const PNET_MAGIC: [u8; 4] = *b"PNET";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
    #[error("bad magic {found:?}, expected {expected:?}")]
    Magic { expected: String, found: String },
    #[error("unsupported checkpoint version {found}, expected {expected}")]
    Version { expected: u16, found: u16 },
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("truncated checkpoint: {0}")]
    Truncated(String),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("shape audit failed: {0}")]
    ShapeAudit(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub magic: [u8; 4],
    pub config_json: String,
    pub params: NamedTensors<f32>,
}

pub fn encode(c: &Container) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&c.magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(c.config_json.len() as u32).to_le_bytes());
    out.extend_from_slice(c.config_json.as_bytes());
    out.extend_from_slice(&(c.params.len() as u32).to_le_bytes());
    for (name, t) in c.params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &e in t.shape() {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Truncated(format!(
                "reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }
}

pub fn decode(bytes: &[u8], expected_magic: [u8; 4]) -> Result<Container, CheckpointError> {
    if bytes.len() < 4 + 2 + 4 {
        return Err(CheckpointError::Truncated(format!("{} bytes", bytes.len())));
    }
    if bytes[..4] != expected_magic {
        return Err(CheckpointError::Magic {
            expected: String::from_utf8_lossy(&expected_magic).into_owned(),
            found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version {
            expected: FORMAT_VERSION,
            found: version,
        });
    }
    let body = &bytes[..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(CheckpointError::Checksum { stored, computed });
    }

    let mut r = Reader { buf: body, pos: 6 };
    let config_len = r.u32("config length")? as usize;
    let config_json = std::str::from_utf8(r.take(config_len, "config")?)
        .map_err(|e| CheckpointError::Malformed(format!("config is not UTF-8: {e}")))?
        .to_string();
    let count = r.u32("parameter count")?;
    let mut params = NamedTensors::new();
    for i in 0..count {
        let name_len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|e| CheckpointError::Malformed(format!("parameter {i} name: {e}")))?
            .to_string();
        let rank = r.u32("rank")? as usize;
        if rank == 0 || rank > 8 {
            return Err(CheckpointError::Malformed(format!(
                "parameter `{name}` has rank {rank}"
            )));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("extent")? as usize);
        }
        let len: usize = shape.iter().product();
        let raw = r.take(len * 4, &format!("values of `{name}`"))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let t = Tensor::new(&shape, data)
            .map_err(|e| CheckpointError::Malformed(format!("`{name}`: {e}")))?;
        params.push(name, t);
    }
    if r.pos != body.len() {
        return Err(CheckpointError::Malformed(format!(
            "{} trailing bytes",
            body.len() - r.pos
        )));
    }
    Ok(Container {
        magic: expected_magic,
        config_json,
        params,
    })
}

/// Writes through a temporary file so a failed write leaves no partial
/// checkpoint behind.
pub fn write_file(c: &Container, path: &Path) -> Result<(), CheckpointError> {
    crate::atomic::write_atomic(path, &encode(c))
        .map_err(|e| CheckpointError::Io(path.display().to_string(), e))
}

pub fn read_file(path: &Path, magic: [u8; 4]) -> Result<Container, CheckpointError> {
    let bytes = fs::read(path).map_err(|e| CheckpointError::Io(path.display().to_string(), e))?;
    decode(&bytes, magic)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Container {
        let mut params = NamedTensors::new();
        params.push(
            "a.weight",
            Tensor::from_fn(&[2, 1, 3, 3], |i| i as f32 * 0.5 - 2.0),
        );
        params.push("a.bias", Tensor::new(&[2], vec![0.25, -1.0]).unwrap());
        Container {
            magic: YNET_MAGIC,
            config_json: "{\"k\":1}".into(),
            params,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let bytes = encode(&c);
        let back = decode(&bytes, YNET_MAGIC).unwrap();
        assert_eq!(back, c);
        assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn corruption_and_version_rejected() {
        let bytes = encode(&sample());
        // first extent of the first parameter lives after the header and name
        let shape_byte = 4 + 2 + 4 + 7 + 4 + 4 + 8 + 4;
        let mut bad = bytes.clone();
        bad[shape_byte] ^= 0x01;
        assert!(matches!(
            decode(&bad, YNET_MAGIC),
            Err(CheckpointError::Checksum { .. })
        ));

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            decode(&bad, YNET_MAGIC),
            Err(CheckpointError::Version { found: 9, .. })
        ));

        assert!(matches!(
            decode(&bytes, PNET_MAGIC),
            Err(CheckpointError::Magic { .. })
        ));
        assert!(decode(&bytes[..bytes.len() / 2], YNET_MAGIC).is_err());
    }
}
