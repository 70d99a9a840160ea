//! Feature files: the binary BPAF format and plain CSV.
//!
//! BPAF layout, all integers little-endian:
//!
//! | offset | size      | field                         |
//! |--------|-----------|-------------------------------|
//! | 0      | 4         | magic `b"BPAF"`               |
//! | 4      | 4         | version, `u32`, always 1      |
//! | 8      | 4         | rows `n`, `u32`, at least 1   |
//! | 12     | 4         | columns `d`, `u32`, at least 1|
//! | 16     | `4 * n*d` | `f32` values, row-major       |
//!
//! Files whose name ends in `.csv` are read and written as comma-separated
//! rows of numbers without a header.

use std::fmt;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 4] = b"BPAF";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeError {
    pub offset: usize,
    pub reason: String,
}

impl fmt::Display for DecodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "byte offset {}: {}", self.offset, self.reason)
    }
}

fn fail<T>(offset: usize, reason: impl Into<String>) -> Result<T, DecodeError> {
    Err(DecodeError {
        offset,
        reason: reason.into(),
    })
}

fn read_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4-byte slice"))
}

pub fn encode(values: ArrayView2<'_, f32>) -> Vec<u8> {
    let (n, d) = values.dim();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * n * d);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for v in values.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Array2<f32>, DecodeError> {
    if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
        return fail(0, "bad magic, expected \"BPAF\"");
    }
    if bytes.len() < HEADER_LEN {
        return fail(
            bytes.len(),
            format!("truncated header, need {HEADER_LEN} bytes"),
        );
    }
    let version = read_u32(bytes, 4);
    if version != VERSION {
        return fail(4, format!("unsupported version {version}"));
    }
    let n = read_u32(bytes, 8) as usize;
    if n == 0 {
        return fail(8, "row count must be at least 1");
    }
    let d = read_u32(bytes, 12) as usize;
    if d == 0 {
        return fail(12, "column count must be at least 1");
    }
    let payload = (n as u64) * (d as u64) * 4;
    let have = (bytes.len() - HEADER_LEN) as u64;
    if have < payload {
        return fail(
            bytes.len(),
            format!(
                "truncated payload, {n}x{d} needs {payload} bytes after the header, found {have}"
            ),
        );
    }
    if have > payload {
        return fail(
            HEADER_LEN + payload as usize,
            format!("{} unexpected trailing bytes", have - payload),
        );
    }
    let mut values = Vec::with_capacity(n * d);
    for (k, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        if !v.is_finite() {
            return fail(
                HEADER_LEN + 4 * k,
                format!("non-finite value at row {}, column {}", k / d, k % d),
            );
        }
        values.push(v);
    }
    Ok(Array2::from_shape_vec((n, d), values).expect("length checked above"))
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn parse_csv(text: &[u8]) -> Result<Array2<f64>, String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text);
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| e.to_string())?;
        let line = line + 1;
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(format!(
                    "line {line}: expected {w} fields, found {}",
                    record.len()
                ))
            }
            _ => {}
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| format!("line {line}, field {}: not a number: {field:?}", col + 1))?;
            if !v.is_finite() {
                return Err(format!("line {line}, field {}: non-finite value", col + 1));
            }
            values.push(v);
        }
        rows += 1;
    }
    let width = match width {
        Some(w) if w > 0 && rows > 0 => w,
        _ => return Err("no data rows".into()),
    };
    Ok(Array2::from_shape_vec((rows, width), values).expect("rectangular by construction"))
}

/// Reads a feature matrix, choosing the format from the file name.
pub fn read_features(path: &Path) -> CliResult<Array2<f64>> {
    let bytes = std::fs::read(path).map_err(|e| CliError::malformed(path, e.to_string()))?;
    if is_csv(path) {
        parse_csv(&bytes).map_err(|reason| CliError::malformed(path, reason))
    } else {
        decode(&bytes)
            .map(|a| a.mapv(f64::from))
            .map_err(|e| CliError::malformed(path, e.to_string()))
    }
}

/// Writes a feature matrix; BPAF stores values rounded to `f32`.
pub fn write_features(path: &Path, values: ArrayView2<'_, f64>) -> CliResult<()> {
    let bytes = if is_csv(path) {
        let mut writer = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(Vec::new());
        for row in values.rows() {
            writer
                .write_record(row.iter().map(|v| v.to_string()))
                .map_err(|e| CliError::output(path, e.into()))?;
        }
        writer
            .into_inner()
            .map_err(|e| CliError::output(path, e.into_error()))?
    } else {
        encode(values.mapv(|v| v as f32).view())
    };
    std::fs::write(path, bytes).map_err(|e| CliError::output(path, e))
}
