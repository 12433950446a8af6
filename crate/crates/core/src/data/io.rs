//! Volume container: a text header followed by a little-endian payload.
//!
//! ```text
//! AGVOL 1
//! kind: volume
//! extents: 32 32 32
//! spacing: 0.35 0.35 0.7
//! origin: 0 0 0
//! dtype: f64
//! end
//! <D*H*W values, raster order with W fastest>
//! ```
//!
//! Reals are written in shortest round-trip form, so geometry survives a
//! save/load exactly. Masks use `dtype: u8`. Loading also accepts a minimal
//! NRRD subset (attached raw payload, `sizes`, `type`, `endian`, `spacings`).

use std::path::Path;

use super::{DataError, Geometry, LabelMask, Result, Volume};

pub const FORMAT_MAGIC: &str = "AGVOL";
pub const FORMAT_VERSION: u32 = 1;
const MAX_HEADER: usize = 64 * 1024;

fn io_err(path: &Path, e: std::io::Error) -> DataError {
    DataError::Io { path: path.display().to_string(), message: e.to_string() }
}

fn join(v: &[impl std::fmt::Display]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn header(kind: &str, g: &Geometry, dtype: &str) -> String {
    format!(
        "{FORMAT_MAGIC} {FORMAT_VERSION}\nkind: {kind}\nextents: {}\nspacing: {}\norigin: {}\ndtype: {dtype}\nend\n",
        join(&g.extents),
        join(&g.spacing),
        join(&g.origin)
    )
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub fn save_volume(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    v.geometry.validate()?;
    let mut bytes = header("volume", &v.geometry, "f64").into_bytes();
    bytes.reserve(v.intensities.len() * 8);
    for x in &v.intensities {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    write(path.as_ref(), &bytes)
}

pub fn save_mask(m: &LabelMask, path: impl AsRef<Path>) -> Result<()> {
    m.geometry.validate()?;
    let mut bytes = header("mask", &m.geometry, "u8").into_bytes();
    bytes.extend_from_slice(&m.values);
    write(path.as_ref(), &bytes)
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let (geometry, values) = decode(&bytes)?;
    Ok(Volume::new(geometry, values))
}

/// Loads a mask; any dtype is accepted as long as every value is 0 or 1.
pub fn load_mask(path: impl AsRef<Path>) -> Result<LabelMask> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let (geometry, values) = decode(&bytes)?;
    let mut labels = Vec::with_capacity(values.len());
    for v in values {
        if v != 0.0 && v != 1.0 {
            return Err(DataError::MalformedHeader(format!("mask value {v} is not 0 or 1")));
        }
        labels.push(v as u8);
    }
    Ok(LabelMask::new(geometry, labels))
}

fn decode(bytes: &[u8]) -> Result<(Geometry, Vec<f64>)> {
    if bytes.starts_with(b"NRRD") {
        decode_nrrd(bytes)
    } else if bytes.starts_with(FORMAT_MAGIC.as_bytes()) {
        decode_native(bytes)
    } else {
        Err(DataError::MalformedHeader("unrecognized magic".into()))
    }
}

/// Splits at the first line equal to `terminator`; returns header lines and
/// the payload offset.
fn header_lines<'a>(bytes: &'a [u8], terminator: &str) -> Result<(Vec<&'a str>, usize)> {
    let mut lines = Vec::new();
    let mut pos = 0;
    while pos < bytes.len().min(MAX_HEADER) {
        let end = bytes[pos..].iter().position(|&b| b == b'\n').map(|i| pos + i);
        let Some(end) = end else { break };
        let line = std::str::from_utf8(&bytes[pos..end])
            .map_err(|_| DataError::MalformedHeader("header is not UTF-8".into()))?
            .trim_end_matches('\r');
        pos = end + 1;
        if line == terminator {
            return Ok((lines, pos));
        }
        lines.push(line);
    }
    Err(DataError::MalformedHeader(format!("no {terminator:?} line ending the header")))
}

fn numbers<T: std::str::FromStr>(field: &str, text: &str, n: usize) -> Result<Vec<T>> {
    let parsed: Vec<T> = text
        .split_whitespace()
        .map(|t| t.parse::<T>().map_err(|_| DataError::MalformedHeader(format!("{field}: cannot parse {t:?}"))))
        .collect::<Result<_>>()?;
    if parsed.len() != n {
        return Err(DataError::MalformedHeader(format!("{field}: expected {n} values, found {}", parsed.len())));
    }
    Ok(parsed)
}

fn check_payload(payload: &[u8], expected: usize) -> Result<()> {
    if payload.len() < expected {
        return Err(DataError::TruncatedPayload { expected, actual: payload.len() });
    }
    if payload.len() > expected {
        return Err(DataError::MalformedHeader(format!("{} trailing bytes after payload", payload.len() - expected)));
    }
    Ok(())
}

fn decode_native(bytes: &[u8]) -> Result<(Geometry, Vec<f64>)> {
    let (lines, offset) = header_lines(bytes, "end")?;
    let first = lines.first().ok_or_else(|| DataError::MalformedHeader("empty header".into()))?;
    let version = first
        .strip_prefix(FORMAT_MAGIC)
        .map(str::trim)
        .ok_or_else(|| DataError::MalformedHeader("missing magic line".into()))?;
    if version != FORMAT_VERSION.to_string() {
        return Err(DataError::UnsupportedVersion(version.to_string()));
    }
    let mut fields = std::collections::HashMap::new();
    for line in &lines[1..] {
        let (k, v) = line.split_once(':').ok_or_else(|| DataError::MalformedHeader(format!("bad line {line:?}")))?;
        if fields.insert(k.trim(), v.trim()).is_some() {
            return Err(DataError::MalformedHeader(format!("duplicate field {}", k.trim())));
        }
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| DataError::MalformedHeader(format!("missing field {k}")));
    let extents: Vec<usize> = numbers("extents", get("extents")?, 3)?;
    let spacing: Vec<f64> = numbers("spacing", get("spacing")?, 3)?;
    let origin: Vec<f64> = numbers("origin", get("origin")?, 3)?;
    let geometry = Geometry {
        extents: [extents[0], extents[1], extents[2]],
        spacing: [spacing[0], spacing[1], spacing[2]],
        origin: [origin[0], origin[1], origin[2]],
    };
    geometry.validate().map_err(|e| DataError::MalformedHeader(e.to_string()))?;
    let n = geometry.voxel_count();
    let payload = &bytes[offset..];
    let values = match get("dtype")? {
        "f64" => {
            check_payload(payload, n * 8)?;
            payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect()
        }
        "u8" => {
            check_payload(payload, n)?;
            payload.iter().map(|&b| b as f64).collect()
        }
        other => return Err(DataError::MalformedHeader(format!("unsupported dtype {other}"))),
    };
    Ok((geometry, values))
}

fn decode_nrrd(bytes: &[u8]) -> Result<(Geometry, Vec<f64>)> {
    let (lines, offset) = header_lines(bytes, "")?;
    let magic = lines.first().copied().unwrap_or_default();
    match magic.strip_prefix("NRRD000").and_then(|v| v.parse::<u32>().ok()) {
        Some(1..=5) => {}
        _ => return Err(DataError::UnsupportedVersion(magic.to_string())),
    }
    let mut fields = std::collections::HashMap::new();
    for line in &lines[1..] {
        if line.starts_with('#') {
            continue;
        }
        // key:=value lines are free-form metadata
        if line.contains(":=") {
            continue;
        }
        let (k, v) = line.split_once(": ").ok_or_else(|| DataError::MalformedHeader(format!("bad line {line:?}")))?;
        fields.insert(k.trim().to_ascii_lowercase(), v.trim());
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| DataError::MalformedHeader(format!("missing field {k}")));
    if get("dimension")? != "3" {
        return Err(DataError::MalformedHeader("only 3-dimensional data is supported".into()));
    }
    if fields.contains_key("data file") || fields.contains_key("datafile") {
        return Err(DataError::MalformedHeader("detached data files are not supported".into()));
    }
    if let Ok(enc) = get("encoding") {
        if enc != "raw" {
            return Err(DataError::MalformedHeader(format!("unsupported encoding {enc}")));
        }
    }
    // NRRD lists the fastest axis first
    let sizes: Vec<usize> = numbers("sizes", get("sizes")?, 3)?;
    let spacings: Vec<f64> = match fields.get("spacings") {
        Some(s) => numbers("spacings", s, 3)?,
        None => vec![1.0; 3],
    };
    let geometry = Geometry {
        extents: [sizes[2], sizes[1], sizes[0]],
        spacing: [spacings[2], spacings[1], spacings[0]],
        origin: [0.0; 3],
    };
    geometry.validate().map_err(|e| DataError::MalformedHeader(e.to_string()))?;
    let big = match fields.get("endian").copied() {
        None | Some("little") => false,
        Some("big") => true,
        Some(other) => return Err(DataError::MalformedHeader(format!("unknown endian {other}"))),
    };
    let ty = get("type")?;
    let width = match ty {
        "uchar" | "unsigned char" | "uint8" | "uint8_t" | "signed char" | "int8" | "int8_t" => 1,
        "short" | "int16" | "int16_t" | "ushort" | "unsigned short" | "uint16" | "uint16_t" => 2,
        "int" | "int32" | "int32_t" | "uint" | "unsigned int" | "uint32" | "uint32_t" | "float" => 4,
        "double" => 8,
        other => return Err(DataError::MalformedHeader(format!("unsupported type {other}"))),
    };
    let payload = &bytes[offset..];
    check_payload(payload, geometry.voxel_count() * width)?;
    let values = payload
        .chunks_exact(width)
        .map(|c| {
            let mut b = [0u8; 8];
            b[..width].copy_from_slice(c);
            if big {
                b[..width].reverse();
            }
            match ty {
                "uchar" | "unsigned char" | "uint8" | "uint8_t" => b[0] as f64,
                "signed char" | "int8" | "int8_t" => b[0] as i8 as f64,
                "short" | "int16" | "int16_t" => i16::from_le_bytes([b[0], b[1]]) as f64,
                "ushort" | "unsigned short" | "uint16" | "uint16_t" => u16::from_le_bytes([b[0], b[1]]) as f64,
                "int" | "int32" | "int32_t" => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
                "float" => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
                "double" => f64::from_le_bytes(b),
                _ => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            }
        })
        .collect();
    Ok((geometry, values))
}
