//! Reading and writing the numpy `.npy` format, version 1.0.
//!
//! Only C-order, little-endian payloads of `float32`, `uint8`, `uint16` and
//! `bool` are supported. Anything else is rejected with
//! [`Error::Unsupported`].

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::tensor::{DType, Tensor, TensorData};
use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

fn descr(dtype: DType) -> &'static str {
    match dtype {
        DType::F32 => "<f4",
        DType::U8 => "|u1",
        DType::U16 => "<u2",
        DType::Bool => "|b1",
    }
}

fn parse_descr(s: &str) -> Result<DType> {
    match s {
        "<f4" => Ok(DType::F32),
        "|u1" | "<u1" => Ok(DType::U8),
        "<u2" => Ok(DType::U16),
        "|b1" | "<b1" => Ok(DType::Bool),
        other => Err(Error::Unsupported(format!("npy dtype {other:?}"))),
    }
}

struct Header {
    dtype: DType,
    fortran_order: bool,
    shape: Vec<usize>,
}

fn header_string(dtype: DType, shape: &[usize]) -> String {
    let shape = match shape {
        [] => "()".to_string(),
        [n] => format!("({n},)"),
        dims => format!(
            "({})",
            dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    let mut dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        descr(dtype),
        shape
    );
    // magic(6) + version(2) + len(2) + dict + '\n' is padded to a multiple of ALIGN
    let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    dict.extend(std::iter::repeat_n(' ', pad));
    dict.push('\n');
    dict
}

/// Splits a python literal on top-level commas.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts.into_iter().map(str::trim).filter(|p| !p.is_empty()).collect()
}

fn unquote(s: &str) -> Result<&str> {
    let s = s.trim();
    if s.len() >= 2
        && ((s.starts_with('\'') && s.ends_with('\'')) || (s.starts_with('"') && s.ends_with('"')))
    {
        Ok(&s[1..s.len() - 1])
    } else {
        Err(Error::Format(format!("expected a quoted string, got {s:?}")))
    }
}

fn parse_header(text: &str) -> Result<Header> {
    let text = text.trim();
    let inner = text
        .strip_prefix('{')
        .and_then(|t| t.strip_suffix('}'))
        .ok_or_else(|| Error::Format("npy header is not a dict".into()))?;

    let mut dtype = None;
    let mut fortran_order = None;
    let mut shape = None;
    for entry in split_top_level(inner) {
        let (key, value) = entry
            .split_once(':')
            .ok_or_else(|| Error::Format(format!("malformed header entry {entry:?}")))?;
        match unquote(key)? {
            "descr" => dtype = Some(parse_descr(unquote(value)?)?),
            "fortran_order" => {
                fortran_order = Some(match value.trim() {
                    "False" => false,
                    "True" => true,
                    v => return Err(Error::Format(format!("bad fortran_order {v:?}"))),
                })
            }
            "shape" => {
                let v = value.trim();
                let dims = v
                    .strip_prefix('(')
                    .and_then(|t| t.strip_suffix(')'))
                    .ok_or_else(|| Error::Format(format!("bad shape {v:?}")))?;
                let dims = split_top_level(dims)
                    .into_iter()
                    .map(|d| {
                        d.trim_end_matches('L')
                            .parse::<usize>()
                            .map_err(|_| Error::Format(format!("bad shape extent {d:?}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                shape = Some(dims);
            }
            k => return Err(Error::Format(format!("unexpected header key {k:?}"))),
        }
    }
    Ok(Header {
        dtype: dtype.ok_or_else(|| Error::Format("header lacks 'descr'".into()))?,
        fortran_order: fortran_order
            .ok_or_else(|| Error::Format("header lacks 'fortran_order'".into()))?,
        shape: shape.ok_or_else(|| Error::Format("header lacks 'shape'".into()))?,
    })
}

/// Decodes an in-memory npy image.
pub fn decode_npy(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(Error::Format("missing npy magic".into()));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(Error::Unsupported(format!("npy version {major}.{minor}")));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let body_start = 10 + header_len;
    if bytes.len() < body_start {
        return Err(Error::Format("truncated npy header".into()));
    }
    let text = std::str::from_utf8(&bytes[10..body_start])
        .map_err(|_| Error::Format("npy header is not ASCII".into()))?;
    let header = parse_header(text)?;
    if header.fortran_order {
        return Err(Error::Unsupported("Fortran-order npy arrays".into()));
    }

    let count: usize = header.shape.iter().product();
    let body = &bytes[body_start..];
    let width = match header.dtype {
        DType::F32 => 4,
        DType::U16 => 2,
        DType::U8 | DType::Bool => 1,
    };
    if body.len() != count * width {
        return Err(Error::Format(format!(
            "npy payload has {} bytes, shape {:?} needs {}",
            body.len(),
            header.shape,
            count * width
        )));
    }
    let data = match header.dtype {
        DType::F32 => TensorData::F32(
            body.chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        ),
        DType::U16 => TensorData::U16(
            body.chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]))
                .collect(),
        ),
        DType::U8 => TensorData::U8(body.to_vec()),
        DType::Bool => TensorData::Bool(
            body.iter()
                .map(|&b| match b {
                    0 => Ok(false),
                    1 => Ok(true),
                    v => Err(Error::Format(format!("bool payload byte {v}"))),
                })
                .collect::<Result<_>>()?,
        ),
    };
    Tensor::new(header.shape, data)
}

/// Encodes a tensor as an npy v1.0 image.
pub fn encode_npy(tensor: &Tensor) -> Vec<u8> {
    let header = header_string(tensor.dtype(), tensor.shape());
    let mut out = Vec::with_capacity(10 + header.len() + tensor.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    match tensor.data() {
        TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        TensorData::U16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        TensorData::U8(v) => out.extend_from_slice(v),
        TensorData::Bool(v) => out.extend(v.iter().map(|&b| b as u8)),
    }
    out
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    Ok(bytes)
}

fn with_path(path: &Path, err: Error) -> Error {
    match err {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        Error::Unsupported(m) => Error::Unsupported(format!("{}: {m}", path.display())),
        Error::Shape(m) => Error::Shape(format!("{}: {m}", path.display())),
        e => e,
    }
}

/// Loads an npy file, rejecting NaN and infinite float values.
pub fn read_npy(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let tensor = decode_npy(&read_bytes(path)?).map_err(|e| with_path(path, e))?;
    if let TensorData::F32(v) = tensor.data() {
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::Format(format!(
                "{}: non-finite value at flat index {i}",
                path.display()
            )));
        }
    }
    Ok(tensor)
}

/// Loads an npy file, replacing non-finite float values by zero.
///
/// The returned validity channel (one flag per value) is present only for
/// float tensors.
pub fn read_npy_with_validity(path: impl AsRef<Path>) -> Result<(Tensor, Option<Vec<bool>>)> {
    let path = path.as_ref();
    let tensor = decode_npy(&read_bytes(path)?).map_err(|e| with_path(path, e))?;
    let shape = tensor.shape().to_vec();
    match tensor.into_data() {
        TensorData::F32(mut v) => {
            let valid: Vec<bool> = v.iter().map(|x| x.is_finite()).collect();
            for (x, ok) in v.iter_mut().zip(&valid) {
                if !ok {
                    *x = 0.0;
                }
            }
            Ok((Tensor::new(shape, TensorData::F32(v))?, Some(valid)))
        }
        data => Ok((Tensor::new(shape, data)?, None)),
    }
}

pub fn write_npy(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    let path = path.as_ref();
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&encode_npy(tensor)))
        .map_err(|e| Error::io(path, e))
}
