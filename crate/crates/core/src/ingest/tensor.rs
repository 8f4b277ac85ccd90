//! `ACT1` and NPY v1.0 tensor files.
//!
//! `ACT1` layout (all integers little-endian):
//!
//! ```text
//! b"ACT1" | dtype: u8 (1 = f32, 2 = f64) | ndim: u8 (1..=4) | dims: ndim × u32 | row-major payload
//! ```
//!
//! The NPY reader accepts version 1.0 files holding little-endian `f4`/`f8`
//! data in C order with 1 to 4 axes, and rejects everything else.

use std::path::Path;

use super::{read_bytes, write_atomic, IngestError};
use crate::scalar::Real;
use crate::svcca::{flatten_conv, ActivationMatrix};

pub const ACT1_MAGIC: &[u8; 4] = b"ACT1";
pub const NPY_MAGIC: &[u8; 6] = b"\x93NUMPY";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    fn code(self) -> u8 {
        match self {
            DType::F32 => 1,
            DType::F64 => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

/// A dense row-major tensor with 1 to 4 axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    pub fn f32(shape: Vec<usize>, values: Vec<f32>) -> Self {
        Self { shape, data: TensorData::F32(values) }
    }

    pub fn f64(shape: Vec<usize>, values: Vec<f64>) -> Self {
        Self { shape, data: TensorData::F64(values) }
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values widened (or converted) to `T`.
    pub fn values<T: Real>(&self) -> Vec<T> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| T::lit(f64::from(x))).collect(),
            TensorData::F64(v) => v.iter().map(|&x| T::lit(x)).collect(),
        }
    }
}

/// Element count of `shape`, or a description of why it is invalid.
fn element_count(shape: &[usize]) -> Result<usize, String> {
    if shape.is_empty() || shape.len() > 4 {
        return Err(format!("{} axes (expected 1 to 4)", shape.len()));
    }
    if shape.contains(&0) {
        return Err(format!("shape {shape:?} has a zero dimension"));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| format!("shape {shape:?} overflows"))
}

/// Decodes `count` little-endian values of `dtype` from `payload`.
fn decode_payload(origin: &str, dtype: DType, count: usize, payload: &[u8]) -> Result<TensorData, IngestError> {
    let expected = count.checked_mul(dtype.size()).ok_or_else(|| IngestError::BadHeader {
        origin: origin.to_string(),
        detail: "payload size overflows".into(),
    })?;
    if payload.len() < expected {
        return Err(IngestError::TruncatedPayload { origin: origin.to_string(), expected, actual: payload.len() });
    }
    if payload.len() > expected {
        return Err(IngestError::TrailingBytes { origin: origin.to_string(), extra: payload.len() - expected });
    }
    let non_finite = |index| IngestError::NonFiniteValue { origin: origin.to_string(), index };
    Ok(match dtype {
        DType::F32 => {
            let v: Vec<f32> = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(non_finite(i));
            }
            TensorData::F32(v)
        }
        DType::F64 => {
            let v: Vec<f64> = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(non_finite(i));
            }
            TensorData::F64(v)
        }
    })
}

pub fn parse_act1(bytes: &[u8], origin: &str) -> Result<Tensor, IngestError> {
    let bad_header = |detail: String| IngestError::BadHeader { origin: origin.to_string(), detail };
    if bytes.len() < 4 || &bytes[..4] != ACT1_MAGIC {
        return Err(IngestError::BadMagic { origin: origin.to_string() });
    }
    if bytes.len() < 6 {
        return Err(bad_header("missing dtype/ndim bytes".into()));
    }
    let dtype = match bytes[4] {
        1 => DType::F32,
        2 => DType::F64,
        code => return Err(IngestError::UnsupportedDtype { origin: origin.to_string(), dtype: format!("code {code}") }),
    };
    let ndim = usize::from(bytes[5]);
    if !(1..=4).contains(&ndim) {
        return Err(IngestError::UnsupportedLayout { origin: origin.to_string(), detail: format!("{ndim} axes") });
    }
    let dims_end = 6 + 4 * ndim;
    if bytes.len() < dims_end {
        return Err(bad_header(format!("expected {ndim} dimensions")));
    }
    let shape: Vec<usize> = bytes[6..dims_end]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let count = element_count(&shape).map_err(bad_header)?;
    let data = decode_payload(origin, dtype, count, &bytes[dims_end..])?;
    Ok(Tensor { shape, data })
}

pub fn encode_act1(tensor: &Tensor) -> Result<Vec<u8>, IngestError> {
    let unwritable = |reason: String| IngestError::Unwritable { origin: "ACT1".into(), what: "tensor".into(), reason };
    let count = element_count(&tensor.shape).map_err(unwritable)?;
    if count != tensor.len() {
        return Err(unwritable(format!("shape {:?} does not match {} values", tensor.shape, tensor.len())));
    }
    let mut out = Vec::with_capacity(6 + 4 * tensor.shape.len() + count * tensor.dtype().size());
    out.extend_from_slice(ACT1_MAGIC);
    out.push(tensor.dtype().code());
    out.push(tensor.shape.len() as u8);
    for &d in &tensor.shape {
        let d = u32::try_from(d).map_err(|_| unwritable(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    match &tensor.data {
        TensorData::F32(v) => {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(unwritable("non-finite value".into()));
            }
            v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        }
        TensorData::F64(v) => {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(unwritable("non-finite value".into()));
            }
            v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        }
    }
    Ok(out)
}

pub fn write_act1(tensor: &Tensor, path: &Path) -> Result<(), IngestError> {
    write_atomic(path, &encode_act1(tensor)?)
}

/// Python literal values appearing in an NPY header dictionary.
#[derive(Debug, PartialEq)]
enum PyValue {
    Str(String),
    Bool(bool),
    Tuple(Vec<u64>),
}

struct HeaderParser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> HeaderParser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, b: u8) -> Result<(), String> {
        match self.peek() {
            Some(c) if c == b => {
                self.pos += 1;
                Ok(())
            }
            other => Err(format!("expected `{}` at byte {}, found {:?}", b as char, self.pos, other.map(char::from))),
        }
    }

    fn string(&mut self) -> Result<String, String> {
        let quote = match self.peek() {
            Some(q @ (b'\'' | b'"')) => q,
            _ => return Err(format!("expected a string at byte {}", self.pos)),
        };
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos] != quote {
            self.pos += 1;
        }
        if self.pos >= self.src.len() {
            return Err("unterminated string".into());
        }
        let s = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
        self.pos += 1;
        Ok(s)
    }

    fn integer(&mut self) -> Result<u64, String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let digits = std::str::from_utf8(&self.src[start..self.pos]).map_err(|e| e.to_string())?;
        let value = digits.parse().map_err(|_| format!("invalid integer at byte {start}"))?;
        // legacy long suffix
        if self.src.get(self.pos) == Some(&b'L') {
            self.pos += 1;
        }
        Ok(value)
    }

    fn value(&mut self) -> Result<PyValue, String> {
        match self.peek() {
            Some(b'\'' | b'"') => Ok(PyValue::Str(self.string()?)),
            Some(b'(') => {
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    if self.peek() == Some(b')') {
                        self.pos += 1;
                        break;
                    }
                    items.push(self.integer()?);
                    match self.peek() {
                        Some(b',') => self.pos += 1,
                        Some(b')') => {}
                        _ => return Err(format!("malformed tuple at byte {}", self.pos)),
                    }
                }
                Ok(PyValue::Tuple(items))
            }
            Some(b'T') if self.src[self.pos..].starts_with(b"True") => {
                self.pos += 4;
                Ok(PyValue::Bool(true))
            }
            Some(b'F') if self.src[self.pos..].starts_with(b"False") => {
                self.pos += 5;
                Ok(PyValue::Bool(false))
            }
            _ => Err(format!("unsupported value at byte {}", self.pos)),
        }
    }

    fn dict(&mut self) -> Result<Vec<(String, PyValue)>, String> {
        self.expect(b'{')?;
        let mut entries = Vec::new();
        loop {
            if self.peek() == Some(b'}') {
                self.pos += 1;
                break;
            }
            let key = self.string()?;
            self.expect(b':')?;
            let value = self.value()?;
            entries.push((key, value));
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b'}') => {}
                _ => return Err(format!("malformed dictionary at byte {}", self.pos)),
            }
        }
        self.skip_ws();
        if self.pos != self.src.len() {
            return Err("unexpected bytes after the header dictionary".into());
        }
        Ok(entries)
    }
}

pub fn parse_npy(bytes: &[u8], origin: &str) -> Result<Tensor, IngestError> {
    let bad_header = |detail: String| IngestError::BadHeader { origin: origin.to_string(), detail };
    if bytes.len() < 6 || &bytes[..6] != NPY_MAGIC {
        return Err(IngestError::BadMagic { origin: origin.to_string() });
    }
    if bytes.len() < 10 {
        return Err(bad_header("truncated preamble".into()));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(IngestError::UnsupportedVersion { origin: origin.to_string(), major, minor });
    }
    let header_len = usize::from(u16::from_le_bytes([bytes[8], bytes[9]]));
    let header_end = 10 + header_len;
    if bytes.len() < header_end {
        return Err(bad_header(format!("header claims {header_len} bytes")));
    }
    let entries = HeaderParser { src: &bytes[10..header_end], pos: 0 }.dict().map_err(bad_header)?;

    let (mut descr, mut fortran, mut shape) = (None, None, None);
    for (key, value) in entries {
        match (key.as_str(), value) {
            ("descr", PyValue::Str(s)) if descr.is_none() => descr = Some(s),
            ("fortran_order", PyValue::Bool(b)) if fortran.is_none() => fortran = Some(b),
            ("shape", PyValue::Tuple(t)) if shape.is_none() => shape = Some(t),
            (k, v) => return Err(bad_header(format!("unexpected entry `{k}`: {v:?}"))),
        }
    }
    let descr = descr.ok_or_else(|| bad_header("missing `descr`".into()))?;
    let fortran = fortran.ok_or_else(|| bad_header("missing `fortran_order`".into()))?;
    let shape = shape.ok_or_else(|| bad_header("missing `shape`".into()))?;

    let dtype = match descr.as_str() {
        "<f4" => DType::F32,
        "<f8" => DType::F64,
        other => return Err(IngestError::UnsupportedDtype { origin: origin.to_string(), dtype: other.to_string() }),
    };
    if fortran {
        return Err(IngestError::UnsupportedLayout { origin: origin.to_string(), detail: "Fortran (column-major) order".into() });
    }
    if shape.is_empty() || shape.len() > 4 {
        return Err(IngestError::UnsupportedLayout { origin: origin.to_string(), detail: format!("{} axes", shape.len()) });
    }
    let shape: Vec<usize> = shape
        .into_iter()
        .map(|d| usize::try_from(d).map_err(|_| bad_header(format!("dimension {d} too large"))))
        .collect::<Result<_, _>>()?;
    let count = element_count(&shape).map_err(bad_header)?;
    let data = decode_payload(origin, dtype, count, &bytes[header_end..])?;
    Ok(Tensor { shape, data })
}

/// Parses either format, chosen by magic bytes.
pub fn parse_tensor(bytes: &[u8], origin: &str) -> Result<Tensor, IngestError> {
    if bytes.starts_with(ACT1_MAGIC) {
        parse_act1(bytes, origin)
    } else if bytes.starts_with(NPY_MAGIC) {
        parse_npy(bytes, origin)
    } else {
        Err(IngestError::BadMagic { origin: origin.to_string() })
    }
}

pub fn read_tensor(path: &Path) -> Result<Tensor, IngestError> {
    parse_tensor(&read_bytes(path)?, &path.display().to_string())
}

/// Interprets a 2-axis tensor as `(datapoints, neurons)` and flattens a
/// 4-axis `(N, C, H, W)` tensor to `(N·H·W, C)`.
pub fn tensor_to_activation<T: Real>(
    tensor: &Tensor,
    layer_id: &str,
    origin: &str,
) -> Result<ActivationMatrix<T>, IngestError> {
    let values = tensor.values::<T>();
    let wrap = |source| IngestError::Activation { origin: origin.to_string(), source };
    match tensor.shape.as_slice() {
        &[rows, cols] => ActivationMatrix::from_row_major(layer_id, rows, cols, &values).map_err(wrap),
        &[n, c, h, w] => flatten_conv(layer_id, [n, c, h, w], &values).map_err(wrap),
        other => Err(IngestError::ActivationLayout { origin: origin.to_string(), ndim: other.len() }),
    }
}
