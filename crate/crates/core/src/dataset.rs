//! The cell × feature table and its per-cell sequence view.

use std::collections::HashSet;

use ndarray::{Array2, ArrayView1, Axis};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::schema::{harmonize_labels, FamilySchema, LabelSpace, Species};

/// Cells × features with a missing-value mask.
///
/// Construction validates every invariant; afterwards the value is never mutated in place.
/// Transformations return new datasets.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    schema: FamilySchema,
    species: Species,
    label_space: LabelSpace,
    cell_ids: Vec<String>,
    x: Array2<f64>,
    missing: Array2<bool>,
    y: Vec<usize>,
}

impl Dataset {
    pub fn new(
        schema: FamilySchema,
        species: Species,
        label_space: LabelSpace,
        cell_ids: Vec<String>,
        mut x: Array2<f64>,
        missing: Array2<bool>,
        y: Vec<usize>,
    ) -> Result<Self> {
        let n = cell_ids.len();
        if x.ncols() != schema.total_width() {
            return Err(Error::WidthMismatch {
                expected: schema.total_width(),
                found: x.ncols(),
                context: "feature matrix".into(),
            });
        }
        if x.nrows() != n || missing.nrows() != n || y.len() != n {
            return Err(Error::InvalidDataset(format!(
                "row counts disagree: ids {n}, X {}, mask {}, labels {}",
                x.nrows(),
                missing.nrows(),
                y.len()
            )));
        }
        if missing.dim() != x.dim() {
            return Err(Error::InvalidDataset("mask shape differs from X".into()));
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &cell_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateCellId(id.clone()));
            }
        }
        let k = label_space.n_classes();
        if let Some(&bad) = y.iter().find(|&&c| c >= k) {
            return Err(Error::UnknownClassIndex {
                index: bad,
                space: label_space.to_string(),
            });
        }
        // masked entries are canonically zero
        ndarray::Zip::from(&mut x).and(&missing).for_each(|v, &m| {
            if m {
                *v = 0.0;
            }
        });
        for ((r, c), v) in x.indexed_iter() {
            if !missing[[r, c]] && !v.is_finite() {
                return Err(Error::InvalidDataset(format!(
                    "non-finite observed value at row {r}, column {}",
                    schema.column_name(c)
                )));
            }
        }
        Ok(Dataset {
            schema,
            species,
            label_space,
            cell_ids,
            x,
            missing,
            y,
        })
    }

    /// Dataset with no missing values.
    pub fn complete(
        schema: FamilySchema,
        species: Species,
        label_space: LabelSpace,
        cell_ids: Vec<String>,
        x: Array2<f64>,
        y: Vec<usize>,
    ) -> Result<Self> {
        let missing = Array2::from_elem(x.dim(), false);
        Self::new(schema, species, label_space, cell_ids, x, missing, y)
    }

    pub fn schema(&self) -> &FamilySchema {
        &self.schema
    }
    pub fn species(&self) -> Species {
        self.species
    }
    pub fn label_space(&self) -> LabelSpace {
        self.label_space
    }
    pub fn cell_ids(&self) -> &[String] {
        &self.cell_ids
    }
    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }
    pub fn missing(&self) -> &Array2<bool> {
        &self.missing
    }
    pub fn y(&self) -> &[usize] {
        &self.y
    }
    pub fn n_rows(&self) -> usize {
        self.cell_ids.len()
    }
    pub fn n_classes(&self) -> usize {
        self.label_space.n_classes()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        class_counts(&self.y, self.n_classes())
    }

    /// Rows in the given order (duplicates not allowed, ids must stay unique).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        Dataset::new(
            self.schema.clone(),
            self.species,
            self.label_space,
            rows.iter().map(|&r| self.cell_ids[r].clone()).collect(),
            self.x.select(Axis(0), rows),
            self.missing.select(Axis(0), rows),
            rows.iter().map(|&r| self.y[r]).collect(),
        )
    }

    /// Same cells with a replaced feature matrix (mask kept).
    pub fn with_values(&self, x: Array2<f64>) -> Result<Dataset> {
        Dataset::new(
            self.schema.clone(),
            self.species,
            self.label_space,
            self.cell_ids.clone(),
            x,
            self.missing.clone(),
            self.y.clone(),
        )
    }

    pub(crate) fn with_values_and_mask(&self, x: Array2<f64>, missing: Array2<bool>) -> Result<Dataset> {
        Dataset::new(
            self.schema.clone(),
            self.species,
            self.label_space,
            self.cell_ids.clone(),
            x,
            missing,
            self.y.clone(),
        )
    }

    /// Relabel into the aligned 4-class space (Sncg → Vip).
    pub fn harmonized(&self) -> Result<Dataset> {
        let y = harmonize_labels(&self.y, self.label_space, LabelSpace::Aligned4)?;
        Dataset::new(
            self.schema.clone(),
            self.species,
            LabelSpace::Aligned4,
            self.cell_ids.clone(),
            self.x.clone(),
            self.missing.clone(),
            y,
        )
    }

    /// Content hash over ids, bit patterns of values, mask and labels.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.schema.version().as_bytes());
        for f in self.schema.families() {
            h.update(f.name.as_bytes());
            h.update((f.width as u64).to_le_bytes());
        }
        h.update(self.species.to_string().as_bytes());
        h.update(self.label_space.to_string().as_bytes());
        for (r, id) in self.cell_ids.iter().enumerate() {
            h.update((id.len() as u64).to_le_bytes());
            h.update(id.as_bytes());
            for (v, &m) in self.x.row(r).iter().zip(self.missing.row(r)) {
                if m {
                    h.update([0u8]);
                } else {
                    h.update([1u8]);
                    h.update(v.to_bits().to_le_bytes());
                }
            }
            h.update((self.y[r] as u64).to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

pub fn class_counts(y: &[usize], k: usize) -> Vec<usize> {
    let mut counts = vec![0; k];
    for &c in y {
        counts[c] += 1;
    }
    counts
}

/// One cell as a sequence of family steps.
///
/// Step `t` is full width, nonzero only inside family `t`'s column block. Only the
/// block is stored; [`dense_step`](Self::dense_step) materializes the full vector.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSequence {
    width: usize,
    blocks: Vec<(usize, Vec<f64>)>,
}

impl CellSequence {
    /// Build from a full feature row. Missing entries are taken as zero by the caller.
    pub fn from_row(schema: &FamilySchema, row: ArrayView1<'_, f64>) -> Self {
        assert_eq!(row.len(), schema.total_width(), "row width");
        let blocks = (0..schema.n_families())
            .map(|f| {
                let r = schema.range(f);
                (r.start, row.slice(ndarray::s![r]).to_vec())
            })
            .collect();
        CellSequence {
            width: schema.total_width(),
            blocks,
        }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Column offset and values of the populated block of step `t`.
    pub fn block(&self, t: usize) -> (usize, &[f64]) {
        let (off, ref v) = self.blocks[t];
        (off, v)
    }

    pub fn dense_step(&self, t: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.width];
        let (off, v) = self.block(t);
        out[off..off + v.len()].copy_from_slice(v);
        out
    }

    /// Concatenate the blocks in schema order, reconstructing the source row.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.width];
        for (off, v) in &self.blocks {
            out[*off..off + v.len()].copy_from_slice(v);
        }
        out
    }
}

/// Sequence view of one dataset row. Missing entries become zero.
pub fn to_sequence(ds: &Dataset, row: usize) -> Result<CellSequence> {
    if row >= ds.n_rows() {
        return Err(Error::InvalidArgument(format!(
            "row {row} out of bounds for {} rows",
            ds.n_rows()
        )));
    }
    let mut values = ds.x().row(row).to_owned();
    for (v, &m) in values.iter_mut().zip(ds.missing().row(row)) {
        if m {
            *v = 0.0;
        }
    }
    Ok(CellSequence::from_row(ds.schema(), values.view()))
}
