//! `.hsic` cube and `.hsil` label containers.
//!
//! Both files start with a one-line JSON header followed by `\n` and a NUL
//! byte, then a little-endian payload:
//!
//! ```text
//! {"height":H,"width":W,"bands":C,"dtype":"f32","order":"band-interleaved-by-pixel"}\n\0
//! H·W·C × f32
//!
//! {"height":H,"width":W,"classes":K,"dtype":"u16"}\n\0
//! H·W × u16
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::cube::{HsiCube, LabelRaster};
use crate::error::{Error, Result};

pub const CUBE_ORDER: &str = "band-interleaved-by-pixel";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CubeHeader {
    height: usize,
    width: usize,
    bands: usize,
    dtype: String,
    order: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelHeader {
    height: usize,
    width: usize,
    classes: usize,
    dtype: String,
}

fn load_err(offset: usize, msg: impl Into<String>) -> Error {
    Error::Load { offset: offset as u64, msg: msg.into() }
}

/// Splits a container into its header text and payload, returning the
/// payload offset.
fn split_header(bytes: &[u8]) -> Result<(&str, &[u8], usize)> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| load_err(bytes.len(), "header is not terminated by a newline"))?;
    match bytes.get(nl + 1) {
        Some(0) => {}
        Some(_) => return Err(load_err(nl + 1, "expected NUL byte after header newline")),
        None => return Err(load_err(nl + 1, "file ends before the header NUL byte")),
    }
    let text = std::str::from_utf8(&bytes[..nl]).map_err(|e| load_err(e.valid_up_to(), "header is not UTF-8"))?;
    Ok((text, &bytes[nl + 2..], nl + 2))
}

fn parse_header<'a, H: Deserialize<'a>>(text: &'a str) -> Result<H> {
    serde_json::from_str(text).map_err(|e| {
        // serde_json reports 1-based columns on a single line
        load_err(e.column().saturating_sub(1), format!("malformed header: {e}"))
    })
}

fn check_payload(payload: &[u8], offset: usize, expected: usize) -> Result<()> {
    if payload.len() != expected {
        return Err(load_err(
            offset + payload.len().min(expected),
            format!("payload should be {expected} bytes, found {}", payload.len()),
        ));
    }
    Ok(())
}

pub fn decode_cube(bytes: &[u8]) -> Result<HsiCube> {
    let (text, payload, offset) = split_header(bytes)?;
    let h: CubeHeader = parse_header(text)?;
    if h.dtype != "f32" {
        return Err(load_err(0, format!("unsupported cube dtype {:?}", h.dtype)));
    }
    if h.order != CUBE_ORDER {
        return Err(load_err(0, format!("unsupported cube order {:?}", h.order)));
    }
    if h.height == 0 || h.width == 0 || h.bands == 0 {
        return Err(load_err(0, "header dimensions must be positive"));
    }
    let n = h.height * h.width * h.bands;
    check_payload(payload, offset, n * 4)?;
    let mut values = Vec::with_capacity(n);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        if !v.is_finite() {
            return Err(load_err(offset + 4 * i, format!("non-finite value {v}")));
        }
        values.push(v);
    }
    HsiCube::new(h.height, h.width, h.bands, values)
}

pub fn decode_labels(bytes: &[u8]) -> Result<LabelRaster> {
    let (text, payload, offset) = split_header(bytes)?;
    let h: LabelHeader = parse_header(text)?;
    if h.dtype != "u16" {
        return Err(load_err(0, format!("unsupported label dtype {:?}", h.dtype)));
    }
    if h.height == 0 || h.width == 0 {
        return Err(load_err(0, "header dimensions must be positive"));
    }
    check_payload(payload, offset, h.height * h.width * 2)?;
    let labels: Vec<u16> = payload.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
    if let Some(i) = labels.iter().position(|&l| l as usize > h.classes) {
        return Err(load_err(
            offset + 2 * i,
            format!("label {} exceeds declared class count {}", labels[i], h.classes),
        ));
    }
    LabelRaster::new(h.height, h.width, labels)
}

fn with_header(header: &impl Serialize, payload_len: usize) -> Vec<u8> {
    let mut out = serde_json::to_vec(header).expect("header serializes");
    out.reserve(payload_len + 2);
    out.push(b'\n');
    out.push(0);
    out
}

pub fn encode_cube(cube: &HsiCube) -> Vec<u8> {
    let header = CubeHeader {
        height: cube.height(),
        width: cube.width(),
        bands: cube.bands(),
        dtype: "f32".into(),
        order: CUBE_ORDER.into(),
    };
    let mut out = with_header(&header, cube.values().len() * 4);
    for v in cube.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn encode_labels(labels: &LabelRaster) -> Vec<u8> {
    let header = LabelHeader {
        height: labels.height(),
        width: labels.width(),
        classes: labels.max_label() as usize,
        dtype: "u16".into(),
    };
    let mut out = with_header(&header, labels.labels().len() * 2);
    for l in labels.labels() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out
}

pub fn read_cube(path: &Path) -> Result<HsiCube> {
    decode_cube(&fs::read(path)?)
}

pub fn read_labels(path: &Path) -> Result<LabelRaster> {
    decode_labels(&fs::read(path)?)
}

pub fn write_cube(path: &Path, cube: &HsiCube) -> Result<()> {
    Ok(fs::write(path, encode_cube(cube))?)
}

pub fn write_labels(path: &Path, labels: &LabelRaster) -> Result<()> {
    Ok(fs::write(path, encode_labels(labels))?)
}

/// Companion label path: same stem with the `.hsil` extension.
pub fn label_path_for(cube_path: &Path) -> PathBuf {
    cube_path.with_extension("hsil")
}

/// Loads a cube and its companion `.hsil` raster, checking their
/// dimensions agree.
pub fn load_cube(path: &Path) -> Result<(HsiCube, LabelRaster)> {
    let cube = read_cube(path)?;
    let labels = read_labels(&label_path_for(path))?;
    labels.check_matches(&cube)?;
    Ok((cube, labels))
}

/// Element type of a raw export.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RawDtype {
    F32,
    I16,
    U16,
}

impl RawDtype {
    fn size(self) -> usize {
        match self {
            RawDtype::F32 => 4,
            RawDtype::I16 | RawDtype::U16 => 2,
        }
    }
}

/// Interleave of a raw export.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interleave {
    /// Band sequential: `C×H×W`.
    Bsq,
    /// Band interleaved by line: `H×C×W`.
    Bil,
    /// Band interleaved by pixel: `H×W×C`.
    Bip,
}

/// Decodes a headerless little-endian raw cube with explicit dimensions.
pub fn decode_raw_cube(
    bytes: &[u8],
    height: usize,
    width: usize,
    bands: usize,
    dtype: RawDtype,
    interleave: Interleave,
) -> Result<HsiCube> {
    let n = height * width * bands;
    check_payload(bytes, 0, n * dtype.size())?;
    let raw: Vec<f32> = match dtype {
        RawDtype::F32 => bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect(),
        RawDtype::I16 => bytes.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]]) as f32).collect(),
        RawDtype::U16 => bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]]) as f32).collect(),
    };
    if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
        return Err(load_err(i * dtype.size(), "non-finite value in raw cube"));
    }
    let mut values = vec![0.0f32; n];
    for r in 0..height {
        for c in 0..width {
            for b in 0..bands {
                let src = match interleave {
                    Interleave::Bsq => (b * height + r) * width + c,
                    Interleave::Bil => (r * bands + b) * width + c,
                    Interleave::Bip => (r * width + c) * bands + b,
                };
                values[(r * width + c) * bands + b] = raw[src];
            }
        }
    }
    HsiCube::new(height, width, bands, values)
}

/// Decodes a headerless raw label raster of `u8` or little-endian `u16`.
pub fn decode_raw_labels(bytes: &[u8], height: usize, width: usize, wide: bool) -> Result<LabelRaster> {
    let labels = if wide {
        check_payload(bytes, 0, height * width * 2)?;
        bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect()
    } else {
        check_payload(bytes, 0, height * width)?;
        bytes.iter().map(|&b| b as u16).collect()
    };
    LabelRaster::new(height, width, labels)
}
