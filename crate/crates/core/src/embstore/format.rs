//! The `SYNCEMB1` embedding file format and its `.ids` sidecar.
//!
//! ```text
//! bytes 0..8    ASCII magic "SYNCEMB1"
//! bytes 8..16   n, u64 little-endian
//! bytes 16..20  d, u32 little-endian
//! bytes 20..24  flags, u32 little-endian (bit 0: rows L2-normalized)
//! bytes 24..    n*d f32 little-endian, row-major
//! ```
//!
//! The sidecar lives at `<path>.ids` and holds one UTF-8 ID per line, in row
//! order, each terminated by `\n`.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use super::matrix::EmbeddingMatrix;
use crate::atomic::{with_suffix, write_atomic};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SYNCEMB1";
pub const HEADER_LEN: usize = 24;
pub const FLAG_NORMALIZED: u32 = 1;

const READ_CHUNK: usize = 1 << 16;

/// How a flagged matrix's unit-norm claim is handled on read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormCheck {
    /// Verify every row while loading.
    #[default]
    Eager,
    /// Trust the flag; callers may run [`EmbeddingMatrix::check_normalization`] later.
    Deferred,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    pub norm_check: NormCheck,
}

/// Path of the ID sidecar for an embedding file.
pub fn ids_path(path: &Path) -> PathBuf {
    with_suffix(path, ".ids")
}

/// Header bytes for a matrix of the given shape.
pub fn encode_header(rows: u64, dim: u32, normalized: bool) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[0..8].copy_from_slice(MAGIC);
    h[8..16].copy_from_slice(&rows.to_le_bytes());
    h[16..20].copy_from_slice(&dim.to_le_bytes());
    let flags = if normalized { FLAG_NORMALIZED } else { 0 };
    h[20..24].copy_from_slice(&flags.to_le_bytes());
    h
}

/// Writes `m` and its ID sidecar. Both files are replaced atomically.
pub fn write_matrix(m: &EmbeddingMatrix, path: &Path) -> Result<()> {
    let dim = u32::try_from(m.dim()).map_err(|_| Error::Shape {
        context: path.display().to_string(),
        reason: format!("d={} does not fit in u32", m.dim()),
    })?;
    write_atomic(path, |w| {
        w.write_all(&encode_header(m.rows() as u64, dim, m.is_normalized()))
            .map_err(|e| Error::io(path, e))?;
        let mut buf = Vec::with_capacity(READ_CHUNK);
        for chunk in m.as_slice().chunks(READ_CHUNK / 4) {
            buf.clear();
            for v in chunk {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    })?;
    write_ids(m.ids(), &ids_path(path))
}

pub fn write_ids(ids: &[String], path: &Path) -> Result<()> {
    if let Some((row, _)) = ids
        .iter()
        .enumerate()
        .find(|(_, id)| id.is_empty() || id.contains(['\n', '\r']))
    {
        return Err(Error::Parse {
            path: path.into(),
            line: row + 1,
            reason: "ids must be non-empty and contain no line breaks".into(),
        });
    }
    write_atomic(path, |w| {
        for id in ids {
            w.write_all(id.as_bytes())
                .and_then(|_| w.write_all(b"\n"))
                .map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    })
}

pub fn read_matrix(path: &Path) -> Result<EmbeddingMatrix> {
    read_matrix_with(path, ReadOptions::default())
}

pub fn read_matrix_with(path: &Path, opts: ReadOptions) -> Result<EmbeddingMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let mut r = BufReader::with_capacity(1 << 20, file);

    let mut header = [0u8; HEADER_LEN];
    let header_present = read_up_to(&mut r, &mut header).map_err(|e| Error::io(path, e))?;
    let (rows, dim, normalized) = decode_header(path, &header[..header_present])?;

    let needed = rows
        .checked_mul(u64::from(dim))
        .and_then(|v| v.checked_mul(4))
        .unwrap_or(u64::MAX);
    let present = file_len - HEADER_LEN as u64;
    if present < needed {
        return Err(Error::Truncated {
            path: path.into(),
            rows,
            dim,
            needed,
            present,
        });
    }
    if present > needed {
        return Err(Error::TrailingBytes {
            path: path.into(),
            extra: present - needed,
        });
    }
    let count = usize::try_from(needed / 4).map_err(|_| Error::Shape {
        context: path.display().to_string(),
        reason: "payload does not fit in memory on this platform".into(),
    })?;

    let mut data = Vec::with_capacity(count);
    let mut buf = vec![0u8; READ_CHUNK];
    while data.len() < count {
        let take = ((count - data.len()) * 4).min(READ_CHUNK);
        r.read_exact(&mut buf[..take])
            .map_err(|e| Error::io(path, e))?;
        data.extend(
            buf[..take]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
        );
    }

    let ids = read_ids(&ids_path(path), rows as usize)?;
    EmbeddingMatrix::with_context(
        &path.display().to_string(),
        dim as usize,
        data,
        ids,
        normalized,
        opts.norm_check == NormCheck::Eager,
    )
}

fn decode_header(path: &Path, h: &[u8]) -> Result<(u64, u32, bool)> {
    if h.len() < 8 || &h[..8] != MAGIC {
        let found = String::from_utf8_lossy(&h[..h.len().min(8)]).into_owned();
        let path = path.into();
        return Err(if h.len() >= 8 && h[..7] == MAGIC[..7] {
            Error::VersionMismatch { path, found }
        } else {
            Error::BadMagic { path, found }
        });
    }
    if h.len() < HEADER_LEN {
        return Err(Error::Truncated {
            path: path.into(),
            rows: 0,
            dim: 0,
            needed: HEADER_LEN as u64,
            present: h.len() as u64,
        });
    }
    let rows = u64::from_le_bytes(h[8..16].try_into().unwrap());
    let dim = u32::from_le_bytes(h[16..20].try_into().unwrap());
    let flags = u32::from_le_bytes(h[20..24].try_into().unwrap());
    if flags & !FLAG_NORMALIZED != 0 {
        return Err(Error::UnknownFlags {
            path: path.into(),
            flags,
        });
    }
    if dim == 0 {
        return Err(Error::Shape {
            context: path.display().to_string(),
            reason: "header declares d=0".into(),
        });
    }
    Ok((rows, dim, flags & FLAG_NORMALIZED != 0))
}

/// Reads and validates an ID sidecar holding exactly `expected` IDs.
pub fn read_ids(path: &Path, expected: usize) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let body = text.strip_suffix('\n').unwrap_or(&text);
    let ids: Vec<String> = if text.is_empty() {
        Vec::new()
    } else {
        body.split('\n').map(str::to_owned).collect()
    };
    if let Some(i) = ids.iter().position(|s| s.is_empty()) {
        return Err(Error::Parse {
            path: path.into(),
            line: i + 1,
            reason: "blank line".into(),
        });
    }
    if ids.len() != expected {
        return Err(Error::Parse {
            path: path.into(),
            line: ids.len(),
            reason: format!("expected {expected} ids, found {}", ids.len()),
        });
    }
    Ok(ids)
}

fn read_up_to(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}
