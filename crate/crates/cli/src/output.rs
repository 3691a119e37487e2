//! Artifact writers. Every file goes through [`Artifacts`] so the manifest
//! lists exactly what a run produced.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
    warnings: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new(), warnings: Vec::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)?;
        self.files.push(name.to_string());
        Ok(path)
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let message = message.into();
        eprintln!("warning: {message}");
        self.warnings.push(message);
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    /// `manifest.toml`; the only output that is not byte-reproducible
    /// (wall time).
    pub fn finish(self, subcommand: &str, config_hash: &str, wall_time: f64) -> Result<PathBuf, CliError> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            subcommand: &'a str,
            config_hash: &'a str,
            version: &'a str,
            wall_time_s: f64,
            outputs: &'a [String],
            warnings: &'a [String],
        }
        let m = Manifest {
            subcommand,
            config_hash,
            version: env!("CARGO_PKG_VERSION"),
            wall_time_s: wall_time,
            outputs: &self.files,
            warnings: &self.warnings,
        };
        let text = toml::to_string(&m).map_err(|e| CliError::Numerical(e.to_string()))?;
        let path = self.dir.join("manifest.toml");
        fs::write(&path, text)?;
        Ok(path)
    }
}

pub fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

/// Comma-separated table with a header row and LF line endings.
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self { text: format!("{}\n", header.join(",")), columns: header.len() }
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.columns);
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

/// Shortest round-trip form, in exponent notation for very small or large
/// magnitudes; `inf`/`nan` spelled out.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        let a = v.abs();
        if a != 0.0 && !(1e-4..1e15).contains(&a) {
            format!("{v:e}")
        } else {
            format!("{v}")
        }
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// 16-bit binary PGM of values in [0, 1], row-major.
pub fn pgm16(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for &v in values {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

/// Minimal line plot: one polyline per series on shared axes.
pub fn svg_plot(title: &str, xlabel: &str, ylabel: &str, series: &[(&str, Vec<(f64, f64)>)]) -> Vec<u8> {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 50.0;
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let pts = series.iter().flat_map(|s| s.1.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    if !(y1 > y0) {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let sy = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<polyline points="{M},{M} {M},{b} {r},{b}" fill="none" stroke="black"/>"#,
        b = H - M,
        r = W - M
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, escape(xlabel));
    let _ = writeln!(s, r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{}</text>"#, H / 2.0, H / 2.0, escape(ylabel));
    for (v, x, anchor) in [(x0, sx(x0), "start"), (x1, sx(x1), "end")] {
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{}" text-anchor="{anchor}">{}</text>"#, H - M + 16.0, tick(v));
    }
    for (v, y) in [(y0, sy(y0)), (y1, sy(y1))] {
        let _ = writeln!(s, r#"<text x="{}" y="{y:.1}" text-anchor="end">{}</text>"#, M - 4.0, tick(v));
    }
    for (i, (name, data)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = data
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, points.join(" "));
        let _ = writeln!(s, r#"<text x="{}" y="{}" fill="{color}">{}</text>"#, W - M - 80.0, M + 14.0 * i as f64, escape(name));
    }
    s.push_str("</svg>\n");
    s.into_bytes()
}

fn tick(v: f64) -> String {
    format!("{v:.3}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// `key = value` lines, aligned.
pub fn report(rows: &[(&str, String)]) -> Vec<u8> {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let mut s = String::new();
    for (k, v) in rows {
        let _ = writeln!(s, "{k:<width$} = {v}");
    }
    s.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_header_and_depth() {
        let b = pgm16(2, 1, &[0.0, 1.0]);
        assert!(b.starts_with(b"P5\n2 1\n65535\n"));
        assert_eq!(&b[b.len() - 4..], &[0, 0, 255, 255]);
    }

    #[test]
    fn csv_layout() {
        let mut c = Csv::new(&["a", "b"]);
        c.row(&[num(0.5), num(f64::INFINITY)]);
        c.row(&[num(3e-7), num(-0.0)]);
        assert_eq!(String::from_utf8(c.into_bytes()).unwrap(), "a,b\n0.5,inf\n3e-7,-0\n");
    }

    #[test]
    fn hash_separates_parts() {
        assert_ne!(sha256_hex(&[b"ab", b"c"]), sha256_hex(&[b"a", b"bc"]));
    }
}
