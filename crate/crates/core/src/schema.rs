//! Feature-family layout and label spaces.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: &str = "famseq-v1";

/// Canonical family order. Every dataset stores its columns in this order.
pub const FAMILY_NAMES: [&str; 12] = [
    "first_ap_v",
    "first_ap_dv",
    "isi_shape",
    "inst_freq",
    "spiking_threshold_v",
    "spiking_peak_v",
    "spiking_width",
    "spiking_fast_trough_v",
    "spiking_upstroke_downstroke_ratio",
    "step_subthresh",
    "subthresh_norm",
    "psth",
];

pub const N_FAMILIES: usize = FAMILY_NAMES.len();

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Family {
    pub name: String,
    pub width: usize,
}

/// Ordered list of the 12 feature families with their per-family widths.
///
/// Widths are data-driven; only the family names and their order are fixed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct FamilySchema {
    families: Vec<Family>,
    offsets: Vec<usize>,
    version: String,
}

#[derive(Serialize, Deserialize)]
struct RawSchema {
    version: String,
    families: Vec<Family>,
}

impl TryFrom<RawSchema> for FamilySchema {
    type Error = Error;

    fn try_from(raw: RawSchema) -> Result<Self> {
        if raw.version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported schema version `{}` (expected `{SCHEMA_VERSION}`)",
                raw.version
            )));
        }
        FamilySchema::new(raw.families)
    }
}

impl From<FamilySchema> for RawSchema {
    fn from(s: FamilySchema) -> Self {
        RawSchema {
            version: s.version,
            families: s.families,
        }
    }
}

impl FamilySchema {
    pub fn new(families: Vec<Family>) -> Result<Self> {
        if families.len() != N_FAMILIES {
            return Err(Error::Schema(format!(
                "expected {N_FAMILIES} families, found {}",
                families.len()
            )));
        }
        let mut offsets = Vec::with_capacity(N_FAMILIES + 1);
        let mut acc = 0;
        for (fam, expected) in families.iter().zip(FAMILY_NAMES) {
            if fam.name != expected {
                return Err(Error::Schema(format!(
                    "family `{}` out of canonical order (expected `{expected}`)",
                    fam.name
                )));
            }
            if fam.width == 0 {
                return Err(Error::Schema(format!("family `{}` has zero width", fam.name)));
            }
            offsets.push(acc);
            acc += fam.width;
        }
        offsets.push(acc);
        Ok(FamilySchema {
            families,
            offsets,
            version: SCHEMA_VERSION.to_string(),
        })
    }

    /// Canonical families with the given widths, in order.
    pub fn with_widths(widths: &[usize]) -> Result<Self> {
        if widths.len() != N_FAMILIES {
            return Err(Error::Schema(format!(
                "expected {N_FAMILIES} widths, found {}",
                widths.len()
            )));
        }
        Self::new(
            FAMILY_NAMES
                .iter()
                .zip(widths)
                .map(|(name, &width)| Family {
                    name: name.to_string(),
                    width,
                })
                .collect(),
        )
    }

    pub fn uniform(width: usize) -> Result<Self> {
        Self::with_widths(&[width; N_FAMILIES])
    }

    pub fn families(&self) -> &[Family] {
        &self.families
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn n_families(&self) -> usize {
        self.families.len()
    }

    pub fn total_width(&self) -> usize {
        self.offsets[N_FAMILIES]
    }

    pub fn width(&self, family: usize) -> usize {
        self.families[family].width
    }

    /// Column range occupied by `family`.
    pub fn range(&self, family: usize) -> Range<usize> {
        self.offsets[family]..self.offsets[family + 1]
    }

    /// Column headers in storage order, `<family>.<idx>`.
    pub fn column_names(&self) -> Vec<String> {
        self.families
            .iter()
            .flat_map(|f| (0..f.width).map(move |i| format!("{}.{i}", f.name)))
            .collect()
    }

    pub fn column_name(&self, col: usize) -> String {
        let fam = self
            .offsets
            .windows(2)
            .position(|w| col >= w[0] && col < w[1])
            .expect("column in range");
        format!("{}.{}", self.families[fam].name, col - self.offsets[fam])
    }

    /// Inverse of [`column_name`](Self::column_name).
    pub fn column_index(&self, name: &str) -> Option<usize> {
        let (fam, idx) = name.rsplit_once('.')?;
        let fam = self.families.iter().position(|f| f.name == fam)?;
        let idx: usize = idx.parse().ok()?;
        (idx < self.families[fam].width).then(|| self.offsets[fam] + idx)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Species {
    Mouse,
    Human,
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Species::Mouse => f.write_str("mouse"),
            Species::Human => f.write_str("human"),
        }
    }
}

/// The two subclass label spaces. `Aligned4` merges Sncg into Vip.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelSpace {
    Mouse5,
    Aligned4,
}

const MOUSE5: [&str; 5] = ["Lamp5", "Pvalb", "Sncg", "Sst", "Vip"];
const ALIGNED4: [&str; 4] = ["Lamp5", "Pvalb", "Sst", "Vip"];

impl LabelSpace {
    pub fn classes(self) -> &'static [&'static str] {
        match self {
            LabelSpace::Mouse5 => &MOUSE5,
            LabelSpace::Aligned4 => &ALIGNED4,
        }
    }

    pub fn n_classes(self) -> usize {
        self.classes().len()
    }

    pub fn index_of(self, name: &str) -> Option<usize> {
        self.classes().iter().position(|c| *c == name)
    }

    pub fn name_of(self, index: usize) -> Result<&'static str> {
        self.classes()
            .get(index)
            .copied()
            .ok_or(Error::UnknownClassIndex {
                index,
                space: self.to_string(),
            })
    }

    pub fn parse_label(self, name: &str) -> Result<usize> {
        self.index_of(name).ok_or_else(|| Error::LabelOutsideSpace {
            label: name.to_string(),
            space: self.to_string(),
        })
    }
}

impl fmt::Display for LabelSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelSpace::Mouse5 => f.write_str("Mouse5"),
            LabelSpace::Aligned4 => f.write_str("Aligned4"),
        }
    }
}

/// Map labels into `target`. Sncg folds into Vip; every other class keeps its name.
///
/// Labels may come from either space; harmonizing `Aligned4` labels is the identity.
pub fn harmonize_labels(y: &[usize], from: LabelSpace, target: LabelSpace) -> Result<Vec<usize>> {
    if target != LabelSpace::Aligned4 {
        return Err(Error::InvalidArgument(format!(
            "harmonization target must be Aligned4, got {target}"
        )));
    }
    y.iter()
        .map(|&idx| {
            let name = from.name_of(idx)?;
            let name = if name == "Sncg" { "Vip" } else { name };
            target.parse_label(name)
        })
        .collect()
}
