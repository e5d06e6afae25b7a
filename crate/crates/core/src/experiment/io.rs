use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::{Histogram, MetricsRow};

pub const METRICS_HEADER: [&str; 5] = ["t", "grad_evals", "pair_evals", "w1", "stein_fisher"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        w.write_record([
            r.time.to_string(),
            r.grad_evals.to_string(),
            r.pair_evals.to_string(),
            opt(r.w1),
            opt(r.stein_fisher),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a metrics file written by [`write_metrics_csv`].
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let parse_opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse()
                .map(Some)
                .map_err(|_| Error::invalid(format!("bad number {s:?}")))
        }
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        rows.push(MetricsRow {
            time: field(0).parse().map_err(|_| Error::invalid("bad time"))?,
            grad_evals: field(1).parse().map_err(|_| Error::invalid("bad grad_evals"))?,
            pair_evals: field(2).parse().map_err(|_| Error::invalid("bad pair_evals"))?,
            w1: parse_opt(field(3))?,
            stein_fisher: parse_opt(field(4))?,
            extras: Vec::new(),
        });
    }
    Ok(rows)
}

/// `particle_id, x_1, ..., x_d`.
pub fn write_positions_csv(path: &Path, positions: &[f64], dim: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["particle_id".to_string()];
    header.extend((1..=dim).map(|c| format!("x_{c}")));
    w.write_record(&header)?;
    for (i, p) in positions.chunks(dim).enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(p.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a point cloud: every column except an optional leading
/// `particle_id` is a coordinate. Returns row-major points and the dimension.
pub fn read_points_csv(path: &Path) -> Result<(Vec<f64>, usize)> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let skip = usize::from(headers.get(0) == Some("particle_id"));
    let dim = headers.len() - skip;
    if dim == 0 {
        return Err(Error::invalid(format!("{} has no coordinate columns", path.display())));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        for v in rec.iter().skip(skip) {
            out.push(
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad coordinate {v:?} in {}", path.display())))?,
            );
        }
    }
    Ok((out, dim))
}

/// First two columns of a CSV with header, as `(x, value)`; `x` must be
/// strictly increasing.
pub fn read_xy_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let (flat, cols) = read_points_csv(path)?;
    if cols < 2 {
        return Err(Error::invalid(format!("{} needs two columns x, value", path.display())));
    }
    let xs: Vec<f64> = flat.chunks(cols).map(|r| r[0]).collect();
    let ys: Vec<f64> = flat.chunks(cols).map(|r| r[1]).collect();
    if xs.len() < 2 || xs.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid(format!(
            "{}: x must be strictly increasing",
            path.display()
        )));
    }
    Ok((xs, ys))
}

pub fn write_histogram_csv(path: &Path, h: &Histogram<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bin_lo", "bin_hi", "density"])?;
    let width = h.bin_width();
    for (b, d) in h.densities.iter().enumerate() {
        let lo = h.lo + b as f64 * width;
        w.write_record([lo.to_string(), (lo + width).to_string(), d.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `(header, rows)` of numbers.
pub fn write_table_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| if v.is_nan() { String::new() } else { v.to_string() }))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Provenance record of a run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub files: Vec<ManifestEntry>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Hashes `files` (relative to `dir`) and writes `manifest.json`.
pub fn write_manifest(dir: &Path, seed: u64, files: &[PathBuf]) -> Result<Manifest> {
    let mut entries = Vec::with_capacity(files.len());
    for f in files {
        let full = dir.join(f);
        entries.push(ManifestEntry {
            file: f.to_string_lossy().into_owned(),
            bytes: fs::metadata(&full)?.len(),
            sha256: sha256_file(&full)?,
        });
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        files: entries,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
