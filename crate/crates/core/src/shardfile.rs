//! On-disk shard format and the plain-text manifest.
//!
//! A shard file is a little-endian header followed by the node's payload:
//!
//! ```text
//! "PMBA" | version u8 = 1 | q u16 | n u16 | k u16 | delta u16
//!        | node_index u32 | stripe_count u64 | original_length u64
//!        | n evaluation points, u16 each
//! payload: stripe_count * alpha symbols, u16 each
//! ```

use std::fs;
use std::io::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::params::{CodeParams, ParamsError};

pub const MAGIC: &[u8; 4] = b"PMBA";
pub const FORMAT_VERSION: u8 = 1;
const FIXED_HEADER_LEN: usize = 4 + 1 + 2 * 4 + 4 + 8 + 8;

#[derive(Debug, Error)]
pub enum ShardFileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a shard file (bad magic)")]
    BadMagic,
    #[error("unsupported shard format version {0}")]
    Version(u8),
    #[error("shard file truncated: need {needed} bytes, have {actual}")]
    Truncated { needed: usize, actual: usize },
    #[error("payload is {actual} bytes, expected {expected}")]
    PayloadLength { expected: usize, actual: usize },
    #[error("payload symbol {value} at position {position} is not below q = {q}")]
    SymbolOutOfRange { position: usize, value: u32, q: u32 },
    #[error("node index {index} out of range 1..={n}")]
    NodeIndex { index: u32, n: u16 },
    #[error("q = {0} does not fit the 2-byte symbol encoding")]
    ModulusTooLarge(u32),
    #[error("invalid code parameters in header: {0}")]
    Params(#[from] ParamsError),
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ShardFileError + '_ {
    move |source| ShardFileError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Everything in a shard file except the payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardHeader {
    pub q: u16,
    pub n: u16,
    pub k: u16,
    pub delta: u16,
    pub node_index: u32,
    pub stripe_count: u64,
    pub original_length: u64,
    pub eval_points: Vec<u16>,
}

impl ShardHeader {
    pub fn for_params(params: &CodeParams, node_index: usize, stripe_count: u64, original_length: u64) -> Result<Self, ShardFileError> {
        let q = u16::try_from(params.q()).map_err(|_| ShardFileError::ModulusTooLarge(params.q()))?;
        Ok(Self {
            q,
            n: params.n() as u16,
            k: params.k() as u16,
            delta: params.delta() as u16,
            node_index: node_index as u32,
            stripe_count,
            original_length,
            eval_points: params.eval_points().iter().map(|e| e.value() as u16).collect(),
        })
    }

    /// Rebuilds the code parameters the header describes.
    pub fn params(&self) -> Result<CodeParams, ShardFileError> {
        let params = CodeParams::derive(self.k as usize, self.delta as usize, self.n as usize, Some(self.q as u64))?;
        let field = params.field();
        let points = self.eval_points.iter().map(|&e| field.element(e as u64)).collect();
        Ok(params.with_eval_points(points)?)
    }

    /// Whether two headers describe shards of the same encoded file.
    pub fn same_code(&self, other: &ShardHeader) -> bool {
        ShardHeader {
            node_index: other.node_index,
            ..self.clone()
        } == *other
    }

    pub fn encoded_len(&self) -> usize {
        FIXED_HEADER_LEN + 2 * self.eval_points.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardFile {
    pub header: ShardHeader,
    /// `stripe_count * alpha` symbols, stripe after stripe.
    pub payload: Vec<u32>,
}

impl ShardFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::with_capacity(h.encoded_len() + 2 * self.payload.len());
        out.extend_from_slice(MAGIC);
        out.push(FORMAT_VERSION);
        for v in [h.q, h.n, h.k, h.delta] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&h.node_index.to_le_bytes());
        out.extend_from_slice(&h.stripe_count.to_le_bytes());
        out.extend_from_slice(&h.original_length.to_le_bytes());
        for e in &h.eval_points {
            out.extend_from_slice(&e.to_le_bytes());
        }
        out.extend_from_slice(&payload_bytes(&self.payload));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ShardFileError> {
        let need = |needed: usize| {
            if bytes.len() < needed {
                Err(ShardFileError::Truncated {
                    needed,
                    actual: bytes.len(),
                })
            } else {
                Ok(())
            }
        };
        need(5)?;
        if &bytes[..4] != MAGIC {
            return Err(ShardFileError::BadMagic);
        }
        if bytes[4] != FORMAT_VERSION {
            return Err(ShardFileError::Version(bytes[4]));
        }
        need(FIXED_HEADER_LEN)?;
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        let (q, n, k, delta) = (u16_at(5), u16_at(7), u16_at(9), u16_at(11));
        let node_index = u32::from_le_bytes(bytes[13..17].try_into().expect("4 bytes"));
        let stripe_count = u64_at(17);
        let original_length = u64_at(25);
        need(FIXED_HEADER_LEN + 2 * n as usize)?;
        let eval_points = (0..n as usize).map(|i| u16_at(FIXED_HEADER_LEN + 2 * i)).collect();
        let header = ShardHeader {
            q,
            n,
            k,
            delta,
            node_index,
            stripe_count,
            original_length,
            eval_points,
        };
        if node_index == 0 || node_index > n as u32 {
            return Err(ShardFileError::NodeIndex { index: node_index, n });
        }
        let params = header.params()?;
        let body = &bytes[header.encoded_len()..];
        let expected = (stripe_count as u128) * (params.alpha() as u128) * 2;
        if body.len() as u128 != expected {
            return Err(ShardFileError::PayloadLength {
                expected: usize::try_from(expected).unwrap_or(usize::MAX),
                actual: body.len(),
            });
        }
        let payload: Vec<u32> = body
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as u32)
            .collect();
        if let Some((position, &value)) = payload.iter().enumerate().find(|(_, &v)| v >= q as u32) {
            return Err(ShardFileError::SymbolOutOfRange {
                position,
                value,
                q: q as u32,
            });
        }
        Ok(Self { header, payload })
    }

    pub fn read(path: &Path) -> Result<Self, ShardFileError> {
        Self::from_bytes(&fs::read(path).map_err(io_err(path))?)
    }

    pub fn write(&self, path: &Path) -> Result<(), ShardFileError> {
        write_atomic(path, &self.to_bytes())
    }

    /// CRC-32 of the serialized payload.
    pub fn checksum(&self) -> u32 {
        crc32fast::hash(&payload_bytes(&self.payload))
    }
}

fn payload_bytes(payload: &[u32]) -> Vec<u8> {
    payload.iter().flat_map(|&s| (s as u16).to_le_bytes()).collect()
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ShardFileError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(())
}

/// Conventional shard file name for node `j`.
pub fn shard_file_name(node_index: usize) -> String {
    format!("shard_{node_index:03}.pmba")
}

pub const MANIFEST_NAME: &str = "manifest.txt";

/// `key=value` sidecar listing the encoded file and one CRC-32 per shard.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub file_name: String,
    pub length: u64,
    pub q: u32,
    pub n: usize,
    pub k: usize,
    pub delta: usize,
    /// `(node_index, shard file name, payload CRC-32)`.
    pub shards: Vec<(usize, String, u32)>,
}

impl Manifest {
    pub fn render(&self) -> String {
        let mut out = format!(
            "file={}\nlength={}\nq={}\nn={}\nk={}\ndelta={}\n",
            self.file_name, self.length, self.q, self.n, self.k, self.delta
        );
        for (j, name, crc) in &self.shards {
            out.push_str(&format!("shard.{j}={name} crc32={crc:08x}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ShardFileError> {
        let mut m = Manifest {
            file_name: String::new(),
            length: 0,
            q: 0,
            n: 0,
            k: 0,
            delta: 0,
            shards: Vec::new(),
        };
        for (i, line) in text.lines().enumerate() {
            let bad = |reason: &str| ShardFileError::Manifest {
                line: i + 1,
                reason: reason.to_string(),
            };
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            let num = |v: &str| v.parse::<u64>().map_err(|_| bad("expected a number"));
            match key {
                "file" => m.file_name = value.to_string(),
                "length" => m.length = num(value)?,
                "q" => m.q = num(value)? as u32,
                "n" => m.n = num(value)? as usize,
                "k" => m.k = num(value)? as usize,
                "delta" => m.delta = num(value)? as usize,
                _ => {
                    let j = key
                        .strip_prefix("shard.")
                        .and_then(|j| j.parse().ok())
                        .ok_or_else(|| bad("unknown key"))?;
                    let (name, crc) = value
                        .rsplit_once(" crc32=")
                        .ok_or_else(|| bad("expected `<name> crc32=<hex>`"))?;
                    let crc = u32::from_str_radix(crc, 16).map_err(|_| bad("bad crc32"))?;
                    m.shards.push((j, name.to_string(), crc));
                }
            }
        }
        Ok(m)
    }

    pub fn checksum_for(&self, node_index: usize) -> Option<u32> {
        self.shards.iter().find(|(j, _, _)| *j == node_index).map(|s| s.2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ShardFile {
        let params = CodeParams::derive(3, 2, 7, Some(263)).unwrap();
        ShardFile {
            header: ShardHeader::for_params(&params, 7, 2, 13).unwrap(),
            payload: vec![1, 262, 0, 5, 7, 8, 9, 10],
        }
    }

    #[test]
    fn header_layout_is_bit_exact() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..5], b"PMBA\x01");
        assert_eq!(&bytes[5..13], &[7, 1, 7, 0, 3, 0, 2, 0]);
        assert_eq!(&bytes[13..17], &[7, 0, 0, 0]);
        assert_eq!(&bytes[17..25], &2u64.to_le_bytes());
        assert_eq!(&bytes[25..33], &13u64.to_le_bytes());
        assert_eq!(&bytes[33..47], &[1, 0, 2, 0, 3, 0, 4, 0, 5, 0, 6, 0, 7, 0]);
        assert_eq!(&bytes[47..51], &[1, 0, 6, 1]);
        assert_eq!(bytes.len(), 47 + 16);
    }

    #[test]
    fn round_trip_is_identity() {
        let s = sample();
        let bytes = s.to_bytes();
        let back = ShardFile::from_bytes(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn rejects_malformed_input() {
        let bytes = sample().to_bytes();
        assert!(matches!(ShardFile::from_bytes(b"PMBX\x01"), Err(ShardFileError::BadMagic)));
        let mut v = bytes.clone();
        v[4] = 2;
        assert!(matches!(ShardFile::from_bytes(&v), Err(ShardFileError::Version(2))));
        assert!(matches!(ShardFile::from_bytes(&bytes[..20]), Err(ShardFileError::Truncated { .. })));
        assert!(matches!(
            ShardFile::from_bytes(&bytes[..bytes.len() - 2]),
            Err(ShardFileError::PayloadLength { .. })
        ));
        let mut v = bytes.clone();
        v[47] = 7;
        v[48] = 1;
        assert!(matches!(
            ShardFile::from_bytes(&v),
            Err(ShardFileError::SymbolOutOfRange { position: 0, value: 263, q: 263 })
        ));
        let mut v = bytes.clone();
        v[13] = 8;
        assert!(matches!(ShardFile::from_bytes(&v), Err(ShardFileError::NodeIndex { .. })));
        let mut v = bytes;
        v[5] = 8;
        v[6] = 1;
        assert!(matches!(ShardFile::from_bytes(&v), Err(ShardFileError::Params(_))));
    }

    #[test]
    fn manifest_round_trip() {
        let m = Manifest {
            file_name: "data.bin".into(),
            length: 13,
            q: 263,
            n: 7,
            k: 3,
            delta: 2,
            shards: vec![(1, shard_file_name(1), 0xdeadbeef), (2, shard_file_name(2), 7)],
        };
        let text = m.render();
        assert!(text.contains("shard.1=shard_001.pmba crc32=deadbeef\n"));
        assert_eq!(Manifest::parse(&text).unwrap(), m);
        assert_eq!(m.checksum_for(2), Some(7));
        assert!(Manifest::parse("bogus").is_err());
    }

    #[test]
    fn atomic_write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(shard_file_name(7));
        let s = sample();
        s.write(&path).unwrap();
        assert_eq!(ShardFile::read(&path).unwrap(), s);
        assert_eq!(fs::read(&path).unwrap(), s.to_bytes());
    }
}
