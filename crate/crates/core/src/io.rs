//! `famseq-v1` interchange format: a JSON manifest plus features and labels CSV tables.
//!
//! Features are written as `cell_id,<family>.<idx>,...` with empty cells for missing values.
//! Floats use Rust's shortest round-trip formatting, so a save/load cycle is bit-exact.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::schema::{FamilySchema, LabelSpace, Species, SCHEMA_VERSION};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub schema: FamilySchema,
    pub species: Species,
    pub label_space: LabelSpace,
    /// Paths relative to the manifest's directory.
    pub features: String,
    pub labels: String,
    pub n_rows: usize,
    pub checksum: String,
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn sibling(manifest: &Path, suffix: &str) -> (String, PathBuf) {
    let stem = manifest
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let name = format!("{stem}.{suffix}");
    let path = manifest.with_file_name(&name);
    (name, path)
}

/// Write `ds` as `<path>` (manifest) plus `<stem>.features.csv` and `<stem>.labels.csv`.
pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let (features_name, features_path) = sibling(path, "features.csv");
    let (labels_name, labels_path) = sibling(path, "labels.csv");

    let csv_err = |p: &Path| {
        let p = p.to_path_buf();
        move |source| Error::Csv { path: p, source }
    };

    let mut w = csv::Writer::from_path(&features_path).map_err(csv_err(&features_path))?;
    let mut header = vec!["cell_id".to_string()];
    header.extend(ds.schema().column_names());
    w.write_record(&header).map_err(csv_err(&features_path))?;
    let mut record = Vec::with_capacity(header.len());
    for (r, id) in ds.cell_ids().iter().enumerate() {
        record.clear();
        record.push(id.clone());
        for (v, &m) in ds.x().row(r).iter().zip(ds.missing().row(r)) {
            record.push(if m { String::new() } else { format!("{v}") });
        }
        w.write_record(&record).map_err(csv_err(&features_path))?;
    }
    w.flush().map_err(|e| Error::io(&features_path, e))?;

    let mut w = csv::Writer::from_path(&labels_path).map_err(csv_err(&labels_path))?;
    w.write_record(["cell_id", "label"]).map_err(csv_err(&labels_path))?;
    let space = ds.label_space();
    for (id, &c) in ds.cell_ids().iter().zip(ds.y()) {
        w.write_record([id.as_str(), space.name_of(c)?])
            .map_err(csv_err(&labels_path))?;
    }
    w.flush().map_err(|e| Error::io(&labels_path, e))?;

    let manifest = Manifest {
        format: SCHEMA_VERSION.to_string(),
        schema: ds.schema().clone(),
        species: ds.species(),
        label_space: ds.label_space(),
        features: features_name,
        labels: labels_name,
        n_rows: ds.n_rows(),
        checksum: ds.checksum(),
    };
    write_json(path, &manifest)
}

pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest: Manifest = read_json(manifest_path)?;
    if manifest.format != SCHEMA_VERSION {
        return Err(Error::Schema(format!(
            "unsupported format `{}` (expected `{SCHEMA_VERSION}`)",
            manifest.format
        )));
    }
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let features_path = dir.join(&manifest.features);
    let labels_path = dir.join(&manifest.labels);
    let schema = &manifest.schema;
    let width = schema.total_width();

    let mut rdr = csv::Reader::from_path(&features_path).map_err(|source| Error::Csv {
        path: features_path.clone(),
        source,
    })?;
    let header = rdr
        .headers()
        .map_err(|source| Error::Csv {
            path: features_path.clone(),
            source,
        })?
        .clone();
    if header.get(0) != Some("cell_id") {
        return Err(Error::Parse {
            path: features_path,
            message: "first column must be `cell_id`".into(),
        });
    }
    if header.len() - 1 != width {
        return Err(Error::WidthMismatch {
            expected: width,
            found: header.len() - 1,
            context: features_path.display().to_string(),
        });
    }
    // file column -> schema column
    let mut placement = Vec::with_capacity(width);
    let mut seen = HashSet::new();
    for name in header.iter().skip(1) {
        let col = schema.column_index(name).ok_or_else(|| {
            Error::Schema(format!("unknown feature column `{name}` in {}", features_path.display()))
        })?;
        if !seen.insert(col) {
            return Err(Error::Schema(format!("feature column `{name}` repeated")));
        }
        placement.push(col);
    }

    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut mask = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|source| Error::Csv {
            path: features_path.clone(),
            source,
        })?;
        if rec.len() != width + 1 {
            return Err(Error::WidthMismatch {
                expected: width,
                found: rec.len().saturating_sub(1),
                context: format!("{} row {}", features_path.display(), line + 1),
            });
        }
        ids.push(rec[0].to_string());
        let mut row = vec![0.0; width];
        let mut row_mask = vec![false; width];
        for (field, &col) in rec.iter().skip(1).zip(&placement) {
            if field.is_empty() {
                row_mask[col] = true;
            } else {
                row[col] = field.parse().map_err(|_| Error::Parse {
                    path: features_path.clone(),
                    message: format!("row {}: cannot parse `{field}` as a number", line + 1),
                })?;
            }
        }
        values.extend(row);
        mask.extend(row_mask);
    }
    let n = ids.len();
    if n != manifest.n_rows {
        return Err(Error::InvalidDataset(format!(
            "manifest declares {} rows, features table has {n}",
            manifest.n_rows
        )));
    }

    let mut rdr = csv::Reader::from_path(&labels_path).map_err(|source| Error::Csv {
        path: labels_path.clone(),
        source,
    })?;
    let mut labels: HashMap<String, usize> = HashMap::with_capacity(n);
    for rec in rdr.records() {
        let rec = rec.map_err(|source| Error::Csv {
            path: labels_path.clone(),
            source,
        })?;
        if rec.len() != 2 {
            return Err(Error::Parse {
                path: labels_path.clone(),
                message: format!("expected 2 fields, found {}", rec.len()),
            });
        }
        let class = manifest.label_space.parse_label(&rec[1])?;
        if labels.insert(rec[0].to_string(), class).is_some() {
            return Err(Error::DuplicateCellId(rec[0].to_string()));
        }
    }
    let y = ids
        .iter()
        .map(|id| {
            labels.get(id).copied().ok_or_else(|| Error::InvalidDataset(format!("cell `{id}` has no label")))
        })
        .collect::<Result<Vec<_>>>()?;

    let x = Array2::from_shape_vec((n, width), values).expect("shape");
    let missing = Array2::from_shape_vec((n, width), mask).expect("shape");
    let ds = Dataset::new(
        manifest.schema.clone(),
        manifest.species,
        manifest.label_space,
        ids,
        x,
        missing,
        y,
    )?;
    let actual = ds.checksum();
    if actual != manifest.checksum {
        return Err(Error::Checksum {
            expected: manifest.checksum,
            actual,
        });
    }
    Ok(ds)
}
