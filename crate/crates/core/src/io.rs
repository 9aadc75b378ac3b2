//! Persistence for stacks, dynamic images, label masks and filter reports.
//!
//! The `.dstk` container is a single JSON header line terminated by `\n`
//! followed by the raw little-endian payload in x, y, t order:
//!
//! ```text
//! {"magic":"DSTK","version":1,"width":W,"height":H,"frames":T,"dtype":"f32","frame_rate_hz":null,"wavelength_nm":null}\n
//! <W*H*T samples, little-endian>
//! ```
//!
//! A 2D image is the same container with `frames = 1`. Masks may also be
//! binary PGM (`P5`) files.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, ParseErrorKind, Result};
use crate::stack::{DynamicImage, Stack};

pub const MAGIC: &str = "DSTK";
pub const VERSION: u64 = 1;

/// Headers longer than this are rejected before JSON parsing.
const MAX_HEADER_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    U16,
    F32,
}

impl Dtype {
    pub fn size(self) -> u64 {
        match self {
            Dtype::U16 => 2,
            Dtype::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackFileHeader {
    pub magic: String,
    pub version: u64,
    pub width: u64,
    pub height: u64,
    pub frames: u64,
    pub dtype: Dtype,
    pub frame_rate_hz: Option<f64>,
    pub wavelength_nm: Option<f64>,
}

impl StackFileHeader {
    pub fn new(width: usize, height: usize, frames: usize, dtype: Dtype) -> Self {
        Self {
            magic: MAGIC.to_string(),
            version: VERSION,
            width: width as u64,
            height: height as u64,
            frames: frames as u64,
            dtype,
            frame_rate_hz: None,
            wavelength_nm: None,
        }
    }

    /// Header line including the trailing newline.
    pub fn to_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("header serializes");
        line.push('\n');
        line
    }

    pub fn payload_len(&self) -> std::result::Result<u64, ParseErrorKind> {
        self.width
            .checked_mul(self.height)
            .and_then(|n| n.checked_mul(self.frames))
            .and_then(|n| n.checked_mul(self.dtype.size()))
            .ok_or(ParseErrorKind::DimsOverflow)
    }

    /// Splits `bytes` into a validated header and the remaining payload.
    pub fn parse(bytes: &[u8]) -> std::result::Result<(Self, &[u8]), ParseErrorKind> {
        if !bytes.starts_with(b"{") {
            return Err(ParseErrorKind::BadMagic);
        }
        let end = bytes
            .iter()
            .take(MAX_HEADER_BYTES)
            .position(|&b| b == b'\n')
            .ok_or_else(|| ParseErrorKind::MalformedHeader("missing header terminator".into()))?;
        let value: Value = serde_json::from_slice(&bytes[..end])
            .map_err(|e| ParseErrorKind::MalformedHeader(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| ParseErrorKind::MalformedHeader("header is not an object".into()))?;
        if obj.get("magic").and_then(Value::as_str) != Some(MAGIC) {
            return Err(ParseErrorKind::BadMagic);
        }
        let version = uint_field(obj, "version")?;
        if version != VERSION {
            return Err(ParseErrorKind::UnsupportedVersion(version));
        }
        let dtype = match obj.get("dtype") {
            Some(Value::String(s)) if s == "u16" => Dtype::U16,
            Some(Value::String(s)) if s == "f32" => Dtype::F32,
            Some(Value::String(s)) => return Err(ParseErrorKind::UnknownDtype(s.clone())),
            other => {
                return Err(ParseErrorKind::MalformedHeader(format!(
                    "dtype must be a string, got {other:?}"
                )))
            }
        };
        let header = Self {
            magic: MAGIC.to_string(),
            version,
            width: uint_field(obj, "width")?,
            height: uint_field(obj, "height")?,
            frames: uint_field(obj, "frames")?,
            dtype,
            frame_rate_hz: opt_float_field(obj, "frame_rate_hz")?,
            wavelength_nm: opt_float_field(obj, "wavelength_nm")?,
        };
        Ok((header, &bytes[end + 1..]))
    }
}

fn uint_field(
    obj: &serde_json::Map<String, Value>,
    key: &str,
) -> std::result::Result<u64, ParseErrorKind> {
    obj.get(key)
        .and_then(Value::as_u64)
        .ok_or_else(|| ParseErrorKind::MalformedHeader(format!("`{key}` must be an unsigned integer")))
}

fn opt_float_field(
    obj: &serde_json::Map<String, Value>,
    key: &str,
) -> std::result::Result<Option<f64>, ParseErrorKind> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| ParseErrorKind::MalformedHeader(format!("`{key}` must be a number"))),
    }
}

/// Header plus decoded samples, before any shape-specific validation.
struct RawContainer {
    header: StackFileHeader,
    samples: Vec<f32>,
}

fn decode_container(bytes: &[u8]) -> std::result::Result<RawContainer, ParseErrorKind> {
    let (header, payload) = StackFileHeader::parse(bytes)?;
    let expected = header.payload_len()?;
    let n_samples = usize::try_from(header.width * header.height * header.frames)
        .map_err(|_| ParseErrorKind::DimsOverflow)?;
    let found = payload.len() as u64;
    if found < expected {
        return Err(ParseErrorKind::Truncated { expected, found });
    }
    if found > expected {
        return Err(ParseErrorKind::TrailingData(found - expected));
    }
    let samples: Vec<f32> = match header.dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        Dtype::U16 => payload
            .chunks_exact(2)
            .map(|c| f32::from(u16::from_le_bytes([c[0], c[1]])))
            .collect(),
    };
    debug_assert_eq!(samples.len(), n_samples);
    if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
        return Err(ParseErrorKind::NonFinite(i));
    }
    Ok(RawContainer { header, samples })
}

/// Parses an in-memory `.dstk` stack.
pub fn parse_stack(bytes: &[u8]) -> std::result::Result<Stack, ParseErrorKind> {
    let RawContainer { header, samples } = decode_container(bytes)?;
    if header.width == 0 || header.height == 0 || header.frames < 2 {
        return Err(ParseErrorKind::InvalidDims(format!(
            "stack must be at least 1x1x2, got {}x{}x{}",
            header.width, header.height, header.frames
        )));
    }
    let stack = Stack::new(
        header.width as usize,
        header.height as usize,
        header.frames as usize,
        samples,
    )
    .map_err(|e| ParseErrorKind::InvalidDims(e.to_string()))?;
    Ok(stack.with_metadata(header.frame_rate_hz, header.wavelength_nm))
}

pub fn read_stack(path: impl AsRef<Path>) -> Result<Stack> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_stack(&bytes).map_err(|kind| Error::parse(path, kind))
}

/// Reads only the header line of a `.dstk` file.
pub fn read_header(path: impl AsRef<Path>) -> Result<StackFileHeader> {
    use std::io::Read;
    let path = path.as_ref();
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|f| f.take(MAX_HEADER_BYTES as u64).read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    StackFileHeader::parse(&buf)
        .map(|(h, _)| h)
        .map_err(|kind| Error::parse(path, kind))
}

fn write_container(
    path: &Path,
    header: &StackFileHeader,
    samples: impl Iterator<Item = f32>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = (|| -> std::io::Result<()> {
        w.write_all(header.to_line().as_bytes())?;
        for v in samples {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

/// Serializes a stack as f32 `.dstk`.
pub fn write_stack(stack: &Stack, path: impl AsRef<Path>) -> Result<()> {
    let mut header = StackFileHeader::new(stack.width(), stack.height(), stack.frames(), Dtype::F32);
    header.frame_rate_hz = stack.frame_rate_hz;
    header.wavelength_nm = stack.wavelength_nm;
    write_container(path.as_ref(), &header, stack.data().iter().copied())
}

/// Serializes a stack as u16 `.dstk`; samples must already be integers in
/// `0..=65535`.
pub fn write_stack_u16(stack: &Stack, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(i) = stack
        .data()
        .iter()
        .position(|&v| !(0.0..=65535.0).contains(&v) || v.fract() != 0.0)
    {
        return Err(Error::param(
            "stack",
            format!("sample {} at index {i} is not representable as u16", stack.data()[i]),
        ));
    }
    let mut header = StackFileHeader::new(stack.width(), stack.height(), stack.frames(), Dtype::U16);
    header.frame_rate_hz = stack.frame_rate_hz;
    header.wavelength_nm = stack.wavelength_nm;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = (|| -> std::io::Result<()> {
        w.write_all(header.to_line().as_bytes())?;
        for &v in stack.data() {
            w.write_all(&(v as u16).to_le_bytes())?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    /// `.dstk` container with `frames = 1`; bit-exact.
    Dstk2d,
    /// Binary 16-bit PGM, min-max scaled to `0..=65535`; preview only.
    Pgm16,
}

pub fn write_image(image: &DynamicImage, path: impl AsRef<Path>, format: ImageFormat) -> Result<()> {
    let path = path.as_ref();
    match format {
        ImageFormat::Dstk2d => {
            let header = StackFileHeader::new(image.width(), image.height(), 1, Dtype::F32);
            write_container(path, &header, image.values().iter().copied())
        }
        ImageFormat::Pgm16 => {
            let scaled = min_max_to_u16(image.values());
            write_pgm16(path, image.width(), image.height(), &scaled)
        }
    }
}

/// Min-max scaling to the full u16 range; a constant input maps to zeros.
pub fn min_max_to_u16(values: &[f32]) -> Vec<u16> {
    let (lo, hi) = values
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return vec![0; values.len()];
    }
    let span = f64::from(hi) - f64::from(lo);
    values
        .iter()
        .map(|&v| ((f64::from(v) - f64::from(lo)) / span * 65535.0).round() as u16)
        .collect()
}

pub fn parse_image(bytes: &[u8]) -> std::result::Result<DynamicImage, ParseErrorKind> {
    let RawContainer { header, samples } = decode_container(bytes)?;
    if header.frames != 1 || header.width == 0 || header.height == 0 {
        return Err(ParseErrorKind::InvalidDims(format!(
            "image must be WxHx1, got {}x{}x{}",
            header.width, header.height, header.frames
        )));
    }
    DynamicImage::new(header.width as usize, header.height as usize, samples)
        .map_err(|e| ParseErrorKind::InvalidDims(e.to_string()))
}

/// Reads a `dstk-2d` dynamic image.
pub fn read_image(path: impl AsRef<Path>) -> Result<DynamicImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_image(&bytes).map_err(|kind| Error::parse(path, kind))
}

fn write_pgm16(path: &Path, width: usize, height: usize, samples: &[u16]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = (|| -> std::io::Result<()> {
        write!(w, "P5\n{width} {height}\n65535\n")?;
        for &v in samples {
            w.write_all(&v.to_be_bytes())?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

/// Decoded binary PGM.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

pub fn parse_pgm(bytes: &[u8]) -> std::result::Result<Pgm, ParseErrorKind> {
    let bad = |msg: &str| ParseErrorKind::MalformedPgm(msg.to_string());
    if !bytes.starts_with(b"P5") {
        return Err(bad("missing P5 signature"));
    }
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for field in &mut fields {
        // whitespace and comments between tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(bad("header ends early")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos || pos - start > 10 {
            return Err(bad("expected a decimal header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("header field out of range"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad("missing whitespace after maxval"));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(ParseErrorKind::InvalidDims(format!("{width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(bad("maxval must be in 1..=65535"));
    }
    let bps: u64 = if maxval < 256 { 1 } else { 2 };
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(bps))
        .ok_or(ParseErrorKind::DimsOverflow)?;
    let payload = &bytes[pos..];
    let found = payload.len() as u64;
    if found < expected {
        return Err(ParseErrorKind::Truncated { expected, found });
    }
    if found > expected {
        return Err(ParseErrorKind::TrailingData(found - expected));
    }
    let samples = if bps == 1 {
        payload.iter().map(|&b| u16::from(b)).collect()
    } else {
        payload
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    Ok(Pgm {
        width: width as usize,
        height: height as usize,
        maxval: maxval as u16,
        samples,
    })
}

/// Integer label map: 0 is background, `n > 0` is cell `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskImage {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl MaskImage {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 || width.checked_mul(height) != Some(labels.len()) {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} mask with {} labels",
                labels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Sorted distinct nonzero labels.
    pub fn cell_ids(&self) -> Vec<u32> {
        self.labels
            .iter()
            .copied()
            .filter(|&l| l != 0)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn n_cells(&self) -> usize {
        self.cell_ids().len()
    }
}

pub fn parse_mask(bytes: &[u8]) -> std::result::Result<MaskImage, ParseErrorKind> {
    if bytes.starts_with(b"P") {
        let pgm = parse_pgm(bytes)?;
        let labels = pgm.samples.into_iter().map(u32::from).collect();
        return MaskImage::new(pgm.width, pgm.height, labels)
            .map_err(|e| ParseErrorKind::InvalidDims(e.to_string()));
    }
    let RawContainer { header, samples } = decode_container(bytes)?;
    if header.frames != 1 || header.width == 0 || header.height == 0 {
        return Err(ParseErrorKind::InvalidDims(format!(
            "mask must be WxHx1, got {}x{}x{}",
            header.width, header.height, header.frames
        )));
    }
    let mut labels = Vec::with_capacity(samples.len());
    for (index, &value) in samples.iter().enumerate() {
        if value.fract() != 0.0 || value < 0.0 || f64::from(value) > f64::from(u32::MAX) {
            return Err(ParseErrorKind::NonIntegerLabel { index, value });
        }
        labels.push(value as u32);
    }
    MaskImage::new(header.width as usize, header.height as usize, labels)
        .map_err(|e| ParseErrorKind::InvalidDims(e.to_string()))
}

/// Reads a label mask from a 16-bit (or 8-bit) PGM or an integer `dstk-2d`.
pub fn read_mask(path: impl AsRef<Path>) -> Result<MaskImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_mask(&bytes).map_err(|kind| Error::parse(path, kind))
}

/// Writes a mask as a 16-bit PGM (labels must fit in u16).
pub fn write_mask(mask: &MaskImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let samples = mask
        .labels()
        .iter()
        .map(|&l| u16::try_from(l))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::param("mask", "label exceeds 65535"))?;
    write_pgm16(path, mask.width(), mask.height(), &samples)
}

/// Detector evidence for one tile (the whole frame when untiled).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileEvidence {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
    pub rejected_indices: Vec<usize>,
    /// Zero-crossing count per temporal eigenvector.
    pub zcr: Vec<u32>,
    /// |zcr[i+1] - zcr[i]| over the numerically non-null spectrum.
    pub dzcr: Vec<f64>,
    /// Jump from the removed pixel mean (zero crossings) into component 0,
    /// present when the decomposition was mean-centred.
    pub lead_dzcr: Option<f64>,
    pub threshold_value: f64,
    pub singular_values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorMode {
    DzcrThreshold,
    Manual,
}

/// Audit record of one `filter_stack` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub detector: DetectorMode,
    pub threshold_multiplier: f64,
    pub max_candidate_index: Option<usize>,
    pub centered: bool,
    /// Sorted union of the per-tile rejections.
    pub rejected_indices: Vec<usize>,
    pub tiles: Vec<TileEvidence>,
    /// Measured run time; drop it before writing when the report must be
    /// reproducible byte for byte.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_seconds: Option<f64>,
}

pub fn write_report(report: &FilterReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, report)
        .map_err(std::io::Error::from)
        .and_then(|_| w.write_all(b"\n"))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<FilterReport> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| Error::parse(path, ParseErrorKind::MalformedHeader(e.to_string())))
}
