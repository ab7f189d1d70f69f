//! On-disk pool formats.
//!
//! Directory format: `meta.json` (`{dim, n_instances, classes, split}`),
//! `features.bin` (little-endian f32, row-major `n_instances x dim`) and
//! `labels.txt` (one decimal class id per line, row-aligned). Instance ids
//! are row indices.
//!
//! CSV format: header `class,f0,...,f{dim-1}`, one row per instance.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pool::{FeaturePool, Split};
use crate::error::{Error, Result};
use crate::ids::{ClassId, InstanceId};
use crate::scalar::Real;

fn read_error(path: &Path, e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::NotFound {
        Error::format(path, "file is missing")
    } else {
        Error::io(path, e)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    dim: usize,
    n_instances: usize,
    classes: Vec<ClassId>,
    split: Split,
}

/// Loads a CSV pool when `path` is a file, a directory-format pool
/// otherwise. Values are kept exactly as stored.
pub fn load_pool<T: Real>(path: impl AsRef<Path>) -> Result<FeaturePool<T>> {
    let path = path.as_ref();
    if path.is_file() {
        load_csv(path, Split::MetaTrain)
    } else {
        load_dir(path)
    }
}

pub fn load_dir<T: Real>(dir: impl AsRef<Path>) -> Result<FeaturePool<T>> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| read_error(&meta_path, e))?;
    let meta: Meta = serde_json::from_str(&meta_text).map_err(|e| Error::format(&meta_path, e.to_string()))?;
    if meta.dim == 0 {
        return Err(Error::format(&meta_path, "dim must be positive"));
    }

    let feat_path = dir.join("features.bin");
    let bytes = fs::read(&feat_path).map_err(|e| read_error(&feat_path, e))?;
    let expected = 4 * meta.n_instances * meta.dim;
    if bytes.len() != expected {
        return Err(Error::format(
            &feat_path,
            format!("{} bytes, expected {expected} (4 x {} rows x {} dims)", bytes.len(), meta.n_instances, meta.dim),
        ));
    }
    let mut features = Vec::with_capacity(meta.n_instances * meta.dim);
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(Error::Data { row: i / meta.dim, msg: format!("non-finite value in column {}", i % meta.dim) });
        }
        features.push(T::from_f32_exact(v));
    }

    let labels_path = dir.join("labels.txt");
    let text = fs::read_to_string(&labels_path).map_err(|e| read_error(&labels_path, e))?;
    let labels = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<u32>()
                .map(ClassId)
                .map_err(|e| Error::format(&labels_path, format!("line {}: {e}", i + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    if labels.len() != meta.n_instances {
        return Err(Error::format(&labels_path, format!("{} labels, expected {}", labels.len(), meta.n_instances)));
    }

    let ids = (0..meta.n_instances as u32).map(InstanceId).collect();
    FeaturePool::from_parts(meta.dim, meta.split, meta.classes, ids, labels, features)
}

/// Writes the directory format. Values are stored as f32.
pub fn save_dir<T: Real>(pool: &FeaturePool<T>, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = Meta { dim: pool.dim(), n_instances: pool.len(), classes: pool.classes().to_vec(), split: pool.split() };
    let meta_path = dir.join("meta.json");
    let json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    fs::write(&meta_path, json + "\n").map_err(|e| Error::io(&meta_path, e))?;

    let feat_path = dir.join("features.bin");
    let mut bytes = Vec::with_capacity(4 * pool.features().len());
    for &v in pool.features() {
        let x = v.to_f32().unwrap_or(f32::NAN);
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(&feat_path, bytes).map_err(|e| Error::io(&feat_path, e))?;

    let labels_path = dir.join("labels.txt");
    let mut labels = String::with_capacity(pool.len() * 3);
    for l in pool.labels() {
        labels.push_str(&l.0.to_string());
        labels.push('\n');
    }
    fs::write(&labels_path, labels).map_err(|e| Error::io(&labels_path, e))
}

pub fn load_csv<T: Real>(path: impl AsRef<Path>, split: Split) -> Result<FeaturePool<T>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let header = reader.headers().map_err(|e| Error::format(path, e.to_string()))?.clone();
    if header.len() < 2 || &header[0] != "class" {
        return Err(Error::format(path, "header must be `class,f0,...`"));
    }
    for (j, name) in header.iter().skip(1).enumerate() {
        if name != format!("f{j}") {
            return Err(Error::format(path, format!("column {} named `{name}`, expected `f{j}`", j + 1)));
        }
    }
    let dim = header.len() - 1;
    let mut rows = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        if record.len() != dim + 1 {
            return Err(Error::format(path, format!("row {row} has {} fields, expected {}", record.len(), dim + 1)));
        }
        let class = record[0]
            .parse::<u32>()
            .map_err(|e| Error::format(path, format!("row {row}: bad class id: {e}")))?;
        let mut v = Vec::with_capacity(dim);
        for field in record.iter().skip(1) {
            let x: f64 = field.parse().map_err(|e| Error::format(path, format!("row {row}: {e}")))?;
            if !x.is_finite() {
                return Err(Error::Data { row, msg: "non-finite value".into() });
            }
            v.push(T::lit(x));
        }
        rows.push((InstanceId(row as u32), ClassId(class), v));
    }
    FeaturePool::from_rows(dim, split, rows)
}

/// Writes the CSV format with shortest round-trip decimal values.
pub fn save_csv<T: Real>(pool: &FeaturePool<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut line = String::from("class");
    for j in 0..pool.dim() {
        line.push_str(&format!(",f{j}"));
    }
    writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    for row in 0..pool.len() {
        line.clear();
        line.push_str(&pool.label(row).0.to_string());
        for &x in pool.vector(row) {
            line.push(',');
            line.push_str(&x.to_string());
        }
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
