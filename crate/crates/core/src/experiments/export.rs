//! Plain-text matrix CSVs and grayscale PGM heatmaps.
//!
//! CSV numbers use 17 significant digits, so reading them back recovers
//! every `f64` exactly. Heatmaps are min–max scaled to `0..=255`; a
//! `<file>.meta` sidecar records the scaling and where the kernel came from.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::math::Matrix;

/// Where a heatmap came from.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatmapMeta {
    pub kind: String,
    pub normalized: bool,
    pub epoch: Option<usize>,
    pub seed: u64,
}

pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn csv_string(m: &Matrix) -> String {
    let mut s = String::with_capacity(m.rows() * m.cols() * 24);
    for row in m.row_iter() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            s.push_str(&format_f64(*v));
        }
        s.push('\n');
    }
    s
}

fn check_finite(m: &Matrix) -> Result<()> {
    if !m.is_finite() {
        return Err(Error::InvalidArgument("cannot export non-finite entries".into()));
    }
    Ok(())
}

/// Headerless CSV, one matrix row per line.
pub fn export_csv(m: &Matrix, path: &Path) -> Result<()> {
    check_finite(m)?;
    fs::write(path, csv_string(m)).map_err(|e| Error::io(path, e))
}

/// CSV with a header row.
pub fn export_table(header: &[&str], rows: &[Vec<f64>], path: &Path) -> Result<()> {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::ShapeMismatch {
                context: "export_table",
                expected: format!("{} columns", header.len()),
                found: format!("{} columns", row.len()),
            });
        }
        let cells: Vec<String> = row.iter().map(|&v| format_f64(v)).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row: std::result::Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| parse_err(format!("line {}: {e}", n + 1)))?);
    }
    Matrix::from_rows(&rows).map_err(|e| parse_err(e.to_string()))
}

/// Min–max scaled pixels; a constant matrix maps to all zeros.
pub fn heatmap_pixels(m: &Matrix) -> (Vec<u8>, f64, f64) {
    let (min, max) = m
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = max - min;
    let pixels = m
        .as_slice()
        .iter()
        .map(|&v| {
            if span > 0.0 {
                (255.0 * (v - min) / span).round() as u8
            } else {
                0
            }
        })
        .collect();
    (pixels, min, max)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Binary PGM (`P5`) plus a `key = value` sidecar next to it.
pub fn export_heatmap(m: &Matrix, path: &Path, meta: &HeatmapMeta) -> Result<()> {
    check_finite(m)?;
    let (pixels, min, max) = heatmap_pixels(m);
    let mut bytes = format!("P5\n{} {}\n255\n", m.cols(), m.rows()).into_bytes();
    bytes.extend_from_slice(&pixels);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let text = format!(
        "min = {}\nmax = {}\nnormalization = {}\nkind = {}\nepoch = {}\nseed = {}\n",
        format_f64(min),
        format_f64(max),
        if meta.normalized { "trace" } else { "none" },
        meta.kind,
        meta.epoch.map_or("none".to_string(), |e| e.to_string()),
        meta.seed,
    );
    fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

/// Reads a `P5` file written by [`export_heatmap`].
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: &str| Error::Parse {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(bad("not a binary PGM"));
    }
    let cols: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let rows: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let pixels = bytes
        .get(pos + 1..pos + 1 + rows * cols)
        .ok_or_else(|| bad("truncated pixels"))?;
    Ok((rows, cols, pixels.to_vec()))
}

/// Parses a sidecar into `(key, value)` pairs.
pub fn read_sidecar(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect())
}
