//! Persistence of extraction results: one text file of keypoint records per
//! bundle entry, and optional red-cross overlay rendering.
//!
//! File format: a header line `DIFET-KP 1 <algorithm> <count>` followed by
//! one record per keypoint, `x y response scale angle [desc]`. Reals print
//! with exactly 6 significant digits in scientific notation, angle prints
//! `-` when absent, binary descriptors are 64 lowercase hex chars, float
//! descriptors are `f32:` plus comma-separated 9-significant-digit reals.

use crate::describe::{BinaryDescriptor, Descriptors, FloatDescriptor};
use crate::detect::Keypoint;
use crate::engine::{Algorithm, JobSpec, TaskResult};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeatIoError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
}

fn real6(v: f64) -> String {
    format!("{v:.5e}")
}

fn real9(v: f32) -> String {
    format!("{v:.8e}")
}

/// Canonical record order: response descending, then (y, x, scale, angle)
/// ascending with unoriented keypoints first.
fn record_order(a: &Keypoint, b: &Keypoint) -> std::cmp::Ordering {
    b.response
        .total_cmp(&a.response)
        .then(a.y.total_cmp(&b.y))
        .then(a.x.total_cmp(&b.x))
        .then(a.scale.total_cmp(&b.scale))
        .then_with(|| match (a.angle, b.angle) {
            (None, None) => std::cmp::Ordering::Equal,
            (None, Some(_)) => std::cmp::Ordering::Less,
            (Some(_), None) => std::cmp::Ordering::Greater,
            (Some(x), Some(y)) => x.total_cmp(&y),
        })
}

fn render(result: &TaskResult, algorithm: Algorithm) -> String {
    let mut order: Vec<usize> = (0..result.keypoints.len()).collect();
    order.sort_by(|&i, &j| record_order(&result.keypoints[i], &result.keypoints[j]));

    let mut out = format!("DIFET-KP 1 {} {}\n", algorithm.as_str(), result.keypoints.len());
    for &i in &order {
        let kp = &result.keypoints[i];
        let angle = match kp.angle {
            Some(a) => real6(a),
            None => "-".to_string(),
        };
        out.push_str(&format!(
            "{} {} {} {} {}",
            real6(kp.x),
            real6(kp.y),
            real6(kp.response),
            real6(kp.scale),
            angle
        ));
        match &result.descriptors {
            None => {}
            Some(Descriptors::Binary(descs)) => {
                out.push(' ');
                for byte in descs[i].0 {
                    out.push_str(&format!("{byte:02x}"));
                }
            }
            Some(Descriptors::Float(descs)) => {
                out.push_str(" f32:");
                let parts: Vec<String> = descs[i].values.iter().map(|&v| real9(v)).collect();
                out.push_str(&parts.join(","));
            }
        }
        out.push('\n');
    }
    out
}

/// Write one entry's keypoint file: `<entry_index padded to 6 digits>.kp`.
/// Byte-deterministic for a given result.
pub fn write_result(result: &TaskResult, spec: &JobSpec, dir: &Path) -> Result<PathBuf, FeatIoError> {
    let path = dir.join(format!("{:06}.kp", result.entry_index));
    let text = render(result, spec.algorithm);
    std::fs::write(&path, text).map_err(|source| FeatIoError::Io { path: path.clone(), source })?;
    Ok(path)
}

/// Parse a keypoint file back into a result. The entry index comes from the
/// file name; dropped_count and elapsed_micros are not represented in the
/// format and read back as zero.
pub fn read_result(path: &Path) -> Result<(Algorithm, TaskResult), FeatIoError> {
    let parse_err = |line: usize, msg: String| FeatIoError::Parse { path: path.to_path_buf(), line, msg };
    let text = std::fs::read_to_string(path)
        .map_err(|source| FeatIoError::Io { path: path.to_path_buf(), source })?;
    let entry_index = path
        .file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.parse::<u32>().ok())
        .ok_or_else(|| parse_err(0, "file name does not encode an entry index".into()))?;

    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err(1, "missing header".into()))?;
    let fields: Vec<&str> = header.split(' ').collect();
    if fields.len() != 4 || fields[0] != "DIFET-KP" || fields[1] != "1" {
        return Err(parse_err(1, format!("bad header {header:?}")));
    }
    let algorithm = Algorithm::from_str(fields[2])
        .ok_or_else(|| parse_err(1, format!("unknown algorithm {:?}", fields[2])))?;
    let count: usize =
        fields[3].parse().map_err(|_| parse_err(1, format!("bad count {:?}", fields[3])))?;

    let mut keypoints = Vec::with_capacity(count);
    let mut binary: Vec<BinaryDescriptor> = Vec::new();
    let mut float: Vec<FloatDescriptor> = Vec::new();
    let mut records = 0usize;
    for (lineno, line) in lines.enumerate() {
        let lineno = lineno + 2;
        if line.is_empty() {
            return Err(parse_err(lineno, "blank record line".into()));
        }
        let parts: Vec<&str> = line.split(' ').collect();
        if parts.len() != 5 && parts.len() != 6 {
            return Err(parse_err(lineno, format!("expected 5 or 6 fields, got {}", parts.len())));
        }
        let num = |s: &str, what: &str| {
            s.parse::<f64>().map_err(|_| parse_err(lineno, format!("bad {what} {s:?}")))
        };
        let x = num(parts[0], "x")?;
        let y = num(parts[1], "y")?;
        let response = num(parts[2], "response")?;
        let scale = num(parts[3], "scale")?;
        let angle = if parts[4] == "-" { None } else { Some(num(parts[4], "angle")?) };
        keypoints.push(Keypoint { x, y, response, scale, angle });
        if parts.len() == 6 {
            let desc = parts[5];
            if let Some(list) = desc.strip_prefix("f32:") {
                let values: Vec<f32> = list
                    .split(',')
                    .map(|t| t.parse::<f32>().map_err(|_| parse_err(lineno, format!("bad descriptor value {t:?}"))))
                    .collect::<Result<_, _>>()?;
                float.push(FloatDescriptor { values });
            } else {
                if desc.len() != 64 || !desc.bytes().all(|b| b.is_ascii_hexdigit()) {
                    return Err(parse_err(lineno, "binary descriptor must be 64 hex chars".into()));
                }
                let mut raw = [0u8; 32];
                for (i, chunk) in desc.as_bytes().chunks_exact(2).enumerate() {
                    let hex = std::str::from_utf8(chunk).unwrap();
                    raw[i] = u8::from_str_radix(hex, 16)
                        .map_err(|_| parse_err(lineno, "bad hex byte".into()))?;
                }
                binary.push(BinaryDescriptor(raw));
            }
        }
        records += 1;
    }
    if records != count {
        return Err(parse_err(
            1,
            format!("header claims {count} records but the body has {records}"),
        ));
    }
    let descriptors = match (binary.len(), float.len()) {
        (0, 0) => None,
        (b, 0) if b == records => Some(Descriptors::Binary(binary)),
        (0, f) if f == records => Some(Descriptors::Float(float)),
        _ => {
            return Err(parse_err(1, "records mix descriptor kinds or omit some".into()));
        }
    };
    Ok((
        algorithm,
        TaskResult { entry_index, keypoints, descriptors, dropped_count: 0, elapsed_micros: 0 },
    ))
}

/// Copy of the image with a red 3x3 cross (center plus the four orthogonal
/// neighbors) at each keypoint, clipped at the borders. Output is RGB.
pub fn render_overlay(img: &crate::raster::PixelImage, keypoints: &[Keypoint]) -> crate::raster::PixelImage {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut rgb = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let px = img.pixel(x as u32, y as u32);
            match img.channels() {
                1 => rgb.extend_from_slice(&[px[0], px[0], px[0]]),
                _ => rgb.extend_from_slice(&[px[0], px[1], px[2]]),
            }
        }
    }
    for kp in keypoints {
        let cx = kp.x.round() as isize;
        let cy = kp.y.round() as isize;
        for (dx, dy) in [(0isize, 0isize), (1, 0), (-1, 0), (0, 1), (0, -1)] {
            let (x, y) = (cx + dx, cy + dy);
            if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
                continue;
            }
            let i = (y as usize * w + x as usize) * 3;
            rgb[i] = 255;
            rgb[i + 1] = 0;
            rgb[i + 2] = 0;
        }
    }
    crate::raster::PixelImage::new(w as u32, h as u32, 3, rgb).expect("valid overlay raster")
}
