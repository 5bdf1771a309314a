//! NPY v1.0 reader/writer plus the `<name>.meta.json` spacing sidecar.
//!
//! Supported element types are `<f4`, `<f8` and `|u1`, C order only.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DType, Tensor, TensorData};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    spacing_mm: Vec<f64>,
}

/// Path of the spacing sidecar for a tensor file: `dir/name.npy` -> `dir/name.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.meta.json"))
}

/// Serializes the NPY header and payload.
pub fn encode(t: &Tensor) -> Vec<u8> {
    let shape = match t.shape() {
        [n] => format!("({n},)"),
        dims => format!(
            "({})",
            dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    let mut header = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        t.dtype().descr(),
        shape
    );
    // magic(6) + version(2) + length(2) + header + '\n' is a multiple of 64
    let unpadded = MAGIC.len() + 4 + header.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    header.extend(std::iter::repeat_n(' ', pad));
    header.push('\n');

    let payload = t.data().to_le_bytes();
    let mut out = Vec::with_capacity(MAGIC.len() + 4 + header.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&payload);
    out
}

/// Parses an NPY byte image (spacing is not part of the format).
pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(Error::MalformedFile("bad magic bytes".into()));
    }
    let (header_len, header_start) = match (bytes[6], bytes[7]) {
        (1, 0) => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        (2, 0) => {
            if bytes.len() < 12 {
                return Err(Error::MalformedFile("truncated header length".into()));
            }
            (
                u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize,
                12,
            )
        }
        (major, minor) => {
            return Err(Error::MalformedFile(format!(
                "unsupported format version {major}.{minor}"
            )))
        }
    };
    let header_end = header_start + header_len;
    if bytes.len() < header_end {
        return Err(Error::MalformedFile("truncated header".into()));
    }
    let header = std::str::from_utf8(&bytes[header_start..header_end])
        .map_err(|_| Error::MalformedFile("header is not ASCII".into()))?;
    let parsed = parse_header(header)?;
    if parsed.fortran_order {
        return Err(Error::MalformedFile("fortran_order=True is not supported".into()));
    }
    let dtype = DType::from_descr(&parsed.descr)?;
    let count: usize = parsed.shape.iter().product();
    let expected = count * dtype.size();
    let payload = &bytes[header_end..];
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::MalformedFile(format!(
            "{} trailing bytes after payload",
            payload.len() - expected
        )));
    }
    Tensor::new(parsed.shape, TensorData::from_le_bytes(dtype, payload))
        .map_err(|e| Error::MalformedFile(e.to_string()))
}

/// Reads a tensor file and, if present, its spacing sidecar.
pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let tensor = decode(&bytes)?;
    let meta = sidecar_path(path);
    if !meta.exists() {
        return Ok(tensor);
    }
    let text = fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text)
        .map_err(|e| Error::MalformedFile(format!("{}: {e}", meta.display())))?;
    tensor.with_spacing(sidecar.spacing_mm)
}

/// Writes a tensor file; spacing goes to the sidecar, and a stale sidecar is
/// removed when the tensor has no spacing.
pub fn save_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(t)).map_err(|e| Error::io(path, e))?;
    let meta = sidecar_path(path);
    match t.spacing() {
        Some(spacing) => {
            let text = serde_json::to_string(&Sidecar {
                spacing_mm: spacing.to_vec(),
            })
            .expect("sidecar serializes");
            fs::write(&meta, text).map_err(|e| Error::io(&meta, e))?;
        }
        None if meta.exists() => fs::remove_file(&meta).map_err(|e| Error::io(&meta, e))?,
        None => {}
    }
    Ok(())
}

struct Header {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

fn malformed(msg: &str) -> Error {
    Error::MalformedFile(format!("header: {msg}"))
}

/// Parses the Python dict literal of an NPY header.
fn parse_header(text: &str) -> Result<Header> {
    let body = text
        .trim()
        .strip_prefix('{')
        .and_then(|s| s.strip_suffix('}'))
        .ok_or_else(|| malformed("not a dict literal"))?;
    let mut descr = None;
    let mut fortran_order = None;
    let mut shape = None;
    let mut rest = body.trim_start();
    while !rest.is_empty() {
        let (key, after) = take_quoted(rest)?;
        let after = after
            .trim_start()
            .strip_prefix(':')
            .ok_or_else(|| malformed("missing ':'"))?
            .trim_start();
        let after = match key {
            "descr" => {
                let (v, a) = take_quoted(after)?;
                descr = Some(v.to_string());
                a
            }
            "fortran_order" => {
                if let Some(a) = after.strip_prefix("False") {
                    fortran_order = Some(false);
                    a
                } else if let Some(a) = after.strip_prefix("True") {
                    fortran_order = Some(true);
                    a
                } else {
                    return Err(malformed("fortran_order must be True or False"));
                }
            }
            "shape" => {
                let inner = after.strip_prefix('(').ok_or_else(|| malformed("shape is not a tuple"))?;
                let close = inner.find(')').ok_or_else(|| malformed("unterminated shape"))?;
                let dims = inner[..close]
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.trim_end_matches('L').parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| malformed("non-integer shape entry"))?;
                shape = Some(dims);
                &inner[close + 1..]
            }
            other => return Err(malformed(&format!("unexpected key {other:?}"))),
        };
        let after = after.trim_start();
        rest = after.strip_prefix(',').unwrap_or(after).trim_start();
        if !after.starts_with(',') && !rest.is_empty() {
            return Err(malformed("missing ',' between entries"));
        }
    }
    Ok(Header {
        descr: descr.ok_or_else(|| malformed("missing 'descr'"))?,
        fortran_order: fortran_order.ok_or_else(|| malformed("missing 'fortran_order'"))?,
        shape: shape.ok_or_else(|| malformed("missing 'shape'"))?,
    })
}

fn take_quoted(s: &str) -> Result<(&str, &str)> {
    let quote = s.chars().next().ok_or_else(|| malformed("unexpected end"))?;
    if quote != '\'' && quote != '"' {
        return Err(malformed("expected a quoted string"));
    }
    let inner = &s[1..];
    let end = inner.find(quote).ok_or_else(|| malformed("unterminated string"))?;
    Ok((&inner[..end], &inner[end + 1..]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_64_byte_aligned_and_newline_terminated() {
        let t = Tensor::from_f64(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = encode(&t);
        let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((10 + hlen) % 64, 0);
        assert_eq!(bytes[10 + hlen - 1], b'\n');
        let header = std::str::from_utf8(&bytes[10..10 + hlen]).unwrap();
        assert!(header.starts_with("{'descr': '<f8', 'fortran_order': False, 'shape': (2, 2), }"));
        assert_eq!(bytes.len(), 10 + hlen + 32);
    }

    #[test]
    fn decodes_known_values() {
        let t = Tensor::from_f64(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let back = decode(&encode(&t)).unwrap();
        assert_eq!(back.shape(), &[2, 2]);
        assert_eq!(back.to_f64(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn one_dimensional_shape_has_trailing_comma() {
        let t = Tensor::from_f64(vec![1], vec![0.0]).unwrap();
        let bytes = encode(&t);
        assert!(std::str::from_utf8(&bytes[10..70]).unwrap().contains("'shape': (1,)"));
        assert_eq!(decode(&bytes).unwrap().shape(), &[1]);
    }

    #[test]
    fn rejects_bad_magic() {
        let t = Tensor::from_f64(vec![1], vec![0.0]).unwrap();
        let mut bytes = encode(&t);
        bytes[1] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::MalformedFile(_))));
    }

    #[test]
    fn rejects_truncated_payload() {
        let t = Tensor::from_f64(vec![4], vec![0.0; 4]).unwrap();
        let bytes = encode(&t);
        let err = decode(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::TruncatedPayload { expected: 32, found: 29 }));
    }

    #[test]
    fn rejects_unsupported_dtype_and_fortran_order() {
        let t = Tensor::from_f64(vec![1], vec![0.0]).unwrap();
        let good = encode(&t);
        let replace = |from: &[u8], to: &[u8]| {
            let mut b = good.clone();
            let at = b.windows(from.len()).position(|w| w == from).unwrap();
            b[at..at + from.len()].copy_from_slice(to);
            b
        };
        assert!(matches!(decode(&replace(b"<f8", b"<i8")), Err(Error::UnsupportedDtype(_))));
        assert!(matches!(decode(&replace(b"False", b"True ")), Err(Error::MalformedFile(_))));
    }

    #[test]
    fn parses_reordered_keys() {
        let h = parse_header("{'shape': (3, 4), 'fortran_order': False, 'descr': '|u1'}").unwrap();
        assert_eq!(h.shape, vec![3, 4]);
        assert_eq!(h.descr, "|u1");
    }

    #[test]
    fn sidecar_name() {
        assert_eq!(
            sidecar_path(Path::new("/tmp/a/img.npy")),
            PathBuf::from("/tmp/a/img.meta.json")
        );
    }
}
