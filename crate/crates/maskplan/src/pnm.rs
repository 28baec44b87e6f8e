//! Minimal binary PPM (P6) and PGM (P5) IO.
//!
//! Hand-rolled on purpose: the on-disk bytes are part of the artifact's
//! contract (golden-file and determinism tests compare them directly), so the
//! writer must be trivially auditable. Headers are exactly
//! `P6\n<w> <h>\n255\n` followed by the raw payload.

use std::fs;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PnmError {
    #[error("{path}: io error: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: byte {offset}: {msg}")]
    Format {
        path: String,
        offset: usize,
        msg: String,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> PnmError {
    PnmError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, offset: usize, msg: impl Into<String>) -> PnmError {
    PnmError::Format {
        path: path.display().to_string(),
        offset,
        msg: msg.into(),
    }
}

pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<(), PnmError> {
    assert_eq!(rgb.len(), width * height * 3, "payload size mismatch");
    write_pnm(path, b"P6", width, height, rgb)
}

pub fn write_pgm(path: &Path, width: usize, height: usize, gray: &[u8]) -> Result<(), PnmError> {
    assert_eq!(gray.len(), width * height, "payload size mismatch");
    write_pnm(path, b"P5", width, height, gray)
}

fn write_pnm(
    path: &Path,
    magic: &[u8],
    width: usize,
    height: usize,
    payload: &[u8],
) -> Result<(), PnmError> {
    let mut buf = Vec::with_capacity(payload.len() + 32);
    buf.extend_from_slice(magic);
    buf.push(b'\n');
    write!(&mut buf, "{} {}\n255\n", width, height).expect("vec write");
    buf.extend_from_slice(payload);
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(&buf).map_err(|e| io_err(path, e))
}

pub fn read_ppm(path: &Path) -> Result<(usize, usize, Vec<u8>), PnmError> {
    read_pnm(path, b"P6", 3)
}

pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>), PnmError> {
    read_pnm(path, b"P5", 1)
}

fn read_pnm(
    path: &Path,
    magic: &[u8],
    channels: usize,
) -> Result<(usize, usize, Vec<u8>), PnmError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let mut pos = 0usize;

    // Header tokens separated by whitespace; '#' starts a comment to EOL.
    let next_token = |pos: &mut usize| -> Result<(usize, String), PnmError> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        if *pos >= bytes.len() {
            return Err(format_err(path, bytes.len(), "unexpected end of header"));
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        Ok((
            start,
            String::from_utf8_lossy(&bytes[start..*pos]).into_owned(),
        ))
    };

    let (off, tok) = next_token(&mut pos)?;
    let want = String::from_utf8_lossy(magic).into_owned();
    if tok.as_bytes() != magic {
        return Err(format_err(path, off, format!("expected {}, found {}", want, tok)));
    }
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        let (off, tok) = next_token(&mut pos)?;
        *d = tok
            .parse()
            .map_err(|_| format_err(path, off, format!("bad header number {:?}", tok)))?;
    }
    let [width, height, maxval] = dims;
    if maxval != 255 {
        return Err(format_err(path, 0, format!("unsupported maxval {}", maxval)));
    }
    // Exactly one whitespace byte separates the header from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(format_err(path, pos, "missing header terminator"));
    }
    pos += 1;
    let need = width * height * channels;
    if bytes.len() - pos < need {
        return Err(format_err(
            path,
            bytes.len(),
            format!("payload truncated: need {} bytes, have {}", need, bytes.len() - pos),
        ));
    }
    Ok((width, height, bytes[pos..pos + need].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ppm");
        let rgb: Vec<u8> = (0..2 * 3 * 3).map(|i| (i * 7 % 256) as u8).collect();
        write_ppm(&path, 2, 3, &rgb).unwrap();
        let (w, h, data) = read_ppm(&path).unwrap();
        assert_eq!((w, h), (2, 3));
        assert_eq!(data, rgb);
    }

    #[test]
    fn pgm_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        let gray: Vec<u8> = (0..16).map(|i| (i * 16) as u8).collect();
        write_pgm(&path, 4, 4, &gray).unwrap();
        let (w, h, data) = read_pgm(&path).unwrap();
        assert_eq!((w, h), (4, 4));
        assert_eq!(data, gray);
    }

    #[test]
    fn header_bytes_are_exactly_canonical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        write_pgm(&path, 64, 64, &vec![0u8; 64 * 64]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n64 64\n255\n"));
        assert_eq!(bytes.len(), 13 + 64 * 64);
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pgm");
        std::fs::write(&path, b"P5\n4 4\n255\nshort").unwrap();
        let err = read_pgm(&path).unwrap_err();
        match err {
            PnmError::Format { offset, ref msg, .. } => {
                assert_eq!(offset, 16, "offset should be file length");
                assert!(msg.contains("truncated"), "msg was {:?}", msg);
            }
            other => panic!("wrong error kind: {:?}", other),
        }
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        std::fs::write(&path, b"P6\n1 1\n255\nxxx").unwrap();
        assert!(read_pgm(&path).is_err());
    }
}
