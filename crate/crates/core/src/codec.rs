//! On-disk frame container and CSV scan import.
//!
//! Container layout, one file per frame:
//!
//! ```text
//! LRI1 rows cols has_labels frame_id timestamp\n
//! <rows*cols little-endian f32: distance, row-major>
//! <rows*cols little-endian f32: intensity, row-major>
//! <rows*cols u8 label codes, only if has_labels = 1>
//! ```
//!
//! Label codes: 0 = valid, 1 = rain, 2 = fog, 255 = no-return.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{Label, LabelImage};
use crate::sensor::{LidarReturn, PointCloud};
use crate::Frame;

const MAGIC: &str = "LRI1";

pub fn encode_frame(image: &Frame, labels: Option<&LabelImage>) -> Result<Vec<u8>> {
    if let Some(l) = labels {
        l.check_shape(image.rows, image.cols)?;
    }
    let frame_id = if image.frame_id.is_empty() {
        "-"
    } else {
        &image.frame_id
    };
    if frame_id.contains(char::is_whitespace) {
        return Err(Error::InvalidParameter(format!(
            "frame id {frame_id:?} must not contain whitespace"
        )));
    }
    let header = format!(
        "{MAGIC} {} {} {} {} {}\n",
        image.rows,
        image.cols,
        labels.is_some() as u8,
        frame_id,
        image.timestamp
    );
    let n = image.rows * image.cols;
    let mut out = Vec::with_capacity(header.len() + n * 9);
    out.extend_from_slice(header.as_bytes());
    for d in &image.distance {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for i in &image.intensity {
        out.extend_from_slice(&i.to_le_bytes());
    }
    if let Some(l) = labels {
        out.extend(l.labels.iter().map(|l| l.to_code()));
    }
    Ok(out)
}

pub fn decode_frame(bytes: &[u8]) -> Result<(Frame, Option<LabelImage>)> {
    let newline = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| Error::Decode {
            offset: bytes.len(),
            reason: "missing header line".into(),
        })?;
    let header = std::str::from_utf8(&bytes[..newline]).map_err(|e| Error::Decode {
        offset: e.valid_up_to(),
        reason: "header is not utf-8".into(),
    })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 6 || fields[0] != MAGIC {
        return Err(Error::Decode {
            offset: 0,
            reason: format!("bad header {header:?}, expected '{MAGIC} rows cols has_labels frame_id timestamp'"),
        });
    }
    let parse_usize = |s: &str, name: &str| {
        s.parse::<usize>().map_err(|_| Error::Decode {
            offset: 0,
            reason: format!("invalid {name} {s:?}"),
        })
    };
    let rows = parse_usize(fields[1], "rows")?;
    let cols = parse_usize(fields[2], "cols")?;
    let has_labels = match fields[3] {
        "0" => false,
        "1" => true,
        other => {
            return Err(Error::Decode {
                offset: 0,
                reason: format!("invalid has_labels flag {other:?}"),
            })
        }
    };
    let frame_id = if fields[4] == "-" { String::new() } else { fields[4].to_string() };
    let timestamp = fields[5].parse::<f64>().map_err(|_| Error::Decode {
        offset: 0,
        reason: format!("invalid timestamp {:?}", fields[5]),
    })?;

    let n = rows * cols;
    let body_len = n * 8 + if has_labels { n } else { 0 };
    let body = &bytes[newline + 1..];
    if body.len() != body_len {
        return Err(Error::Decode {
            offset: newline + 1 + body.len().min(body_len),
            reason: format!("expected {body_len} body bytes, got {}", body.len()),
        });
    }
    let read_f32s = |chunk: &[u8]| -> Vec<f32> {
        chunk
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect()
    };
    let distance = read_f32s(&body[..n * 4]);
    let intensity = read_f32s(&body[n * 4..n * 8]);
    let labels = if has_labels {
        let mut labels = Vec::with_capacity(n);
        for (i, code) in body[n * 8..].iter().enumerate() {
            labels.push(Label::from_code(*code).ok_or_else(|| Error::Decode {
                offset: newline + 1 + n * 8 + i,
                reason: format!("unknown label code {code}"),
            })?);
        }
        Some(LabelImage { rows, cols, labels })
    } else {
        None
    };
    Ok((
        Frame {
            rows,
            cols,
            distance,
            intensity,
            frame_id,
            timestamp,
        },
        labels,
    ))
}

pub fn write_frame(path: &Path, image: &Frame, labels: Option<&LabelImage>) -> Result<()> {
    fs::write(path, encode_frame(image, labels)?)?;
    Ok(())
}

pub fn read_frame(path: &Path) -> Result<(Frame, Option<LabelImage>)> {
    decode_frame(&fs::read(path)?)
}

/// Parse a CSV scan with columns `ring,azimuth_deg,distance_m,intensity`.
/// A header line is skipped if present.
pub fn read_csv_scan(text: &str) -> Result<PointCloud<f32>> {
    let mut cloud = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if lineno == 0 && line.starts_with("ring") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::InvalidReturn {
                index: lineno,
                reason: format!("expected 4 CSV fields, got {}", fields.len()),
            });
        }
        let bad = |what: &str| Error::InvalidReturn {
            index: lineno,
            reason: format!("invalid {what}"),
        };
        cloud.push(LidarReturn {
            ring: fields[0].parse().map_err(|_| bad("ring"))?,
            azimuth_deg: fields[1].parse().map_err(|_| bad("azimuth_deg"))?,
            distance: fields[2].parse().map_err(|_| bad("distance_m"))?,
            intensity: fields[3].parse().map_err(|_| bad("intensity"))?,
        });
    }
    Ok(cloud)
}
