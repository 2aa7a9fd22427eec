//! Shared binary container: magic, version, JSON header, little-endian f64
//! payload and a trailing SHA-256 digest of every preceding byte.
//!
//! ```text
//! magic[8] | version u32 | header_len u64 | header (JSON) | payload_len u64 | payload (f64 LE) | sha256[32]
//! ```

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DIGEST_LEN: usize = 32;

pub fn encode<H: Serialize>(magic: &[u8; 8], version: u32, header: &H, payload: &[f64]) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(header).map_err(|e| Error::SchemaMismatch(e.to_string()))?;
    let mut out = Vec::with_capacity(8 + 4 + 16 + header.len() + 8 * payload.len() + DIGEST_LEN);
    out.extend_from_slice(magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::SchemaMismatch("truncated file".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Verifies the digest, the magic and the version, then parses the header
/// and the payload. Nothing is returned unless every check passes.
pub fn decode<H: DeserializeOwned>(bytes: &[u8], magic: &[u8; 8], supported: u32) -> Result<(H, Vec<f64>)> {
    if bytes.len() < 8 + 4 + 16 + DIGEST_LEN {
        return Err(Error::SchemaMismatch("file too short".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::DigestMismatch);
    }
    let mut cur = Cursor { bytes: body, at: 0 };
    if cur.take(8)? != magic {
        return Err(Error::SchemaMismatch(format!(
            "expected a `{}` file",
            String::from_utf8_lossy(magic)
        )));
    }
    let version = u32::from_le_bytes(cur.take(4)?.try_into().expect("4 bytes"));
    if version == 0 || version > supported {
        return Err(Error::VersionUnsupported {
            found: version,
            supported,
        });
    }
    let header_len = cur.u64()? as usize;
    let header: H =
        serde_json::from_slice(cur.take(header_len)?).map_err(|e| Error::SchemaMismatch(e.to_string()))?;
    let n = cur.u64()? as usize;
    let raw = cur.take(n.checked_mul(8).ok_or_else(|| Error::SchemaMismatch("payload size".into()))?)?;
    if cur.at != body.len() {
        return Err(Error::SchemaMismatch("trailing bytes after payload".into()));
    }
    let payload = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((header, payload))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Splits `payload` into consecutive slices of the given lengths.
pub fn split_payload<'a>(payload: &'a [f64], lens: &[usize]) -> Result<Vec<&'a [f64]>> {
    let total: usize = lens.iter().sum();
    if total != payload.len() {
        return Err(Error::SchemaMismatch(format!(
            "payload holds {} values, header describes {total}",
            payload.len()
        )));
    }
    let mut at = 0;
    Ok(lens
        .iter()
        .map(|&n| {
            let s = &payload[at..at + n];
            at += n;
            s
        })
        .collect())
}
