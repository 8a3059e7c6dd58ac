//! Seeded synthetic datasets with class-conditional Gaussian families, controllable
//! imbalance and a mean shift for the second "species".

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::schema::{FamilySchema, LabelSpace, Species};

/// Mouse class counts after QC, in `Mouse5` order (Lamp5, Pvalb, Sncg, Sst, Vip).
pub const MOUSE_COUNTS: [usize; 5] = [402, 745, 198, 1663, 691];
/// Human class counts after QC, in `Aligned4` order (Lamp5, Pvalb, Sst, Vip).
pub const HUMAN_COUNTS: [usize; 4] = [50, 293, 96, 67];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub schema: FamilySchema,
    pub species: Species,
    pub label_space: LabelSpace,
    /// K × total_width.
    pub class_means: Vec<Vec<f64>>,
    pub sigma: f64,
    /// Optional per-family multiplier on `sigma`.
    #[serde(default)]
    pub family_scale: Option<Vec<f64>>,
    pub class_counts: Vec<usize>,
    /// Added to the class means of the target species in [`generate_pair`].
    #[serde(default)]
    pub shift: Option<Vec<f64>>,
    pub missing_rate: f64,
    pub seed: u64,
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        let k = self.label_space.n_classes();
        let w = self.schema.total_width();
        if self.class_means.len() != k || self.class_means.iter().any(|m| m.len() != w) {
            return Err(Error::InvalidArgument(format!("class_means must be {k} × {w}")));
        }
        if self.class_counts.len() != k {
            return Err(Error::InvalidArgument(format!("class_counts must have {k} entries")));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::InvalidArgument(format!(
                "missing_rate must be in [0, 1), got {}",
                self.missing_rate
            )));
        }
        if let Some(s) = &self.family_scale {
            if s.len() != self.schema.n_families() || s.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::InvalidArgument("family_scale needs 12 positive entries".into()));
            }
        }
        if let Some(s) = &self.shift {
            if s.len() != w {
                return Err(Error::InvalidArgument(format!("shift must have {w} entries")));
            }
        }
        Ok(())
    }

    /// Class means drawn i.i.d. `N(0, separation²)`. With `informative_family` set, means
    /// are zero outside that family, so it alone carries class signal.
    pub fn random_means(
        schema: &FamilySchema,
        k: usize,
        separation: f64,
        informative_family: Option<usize>,
        seed: u64,
    ) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols = informative_family.map(|f| schema.range(f));
        (0..k)
            .map(|_| {
                (0..schema.total_width())
                    .map(|c| {
                        let v: f64 = rng.sample(StandardNormal);
                        match &cols {
                            Some(r) if !r.contains(&c) => 0.0,
                            _ => separation * v,
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Entries drawn i.i.d. `N(0, scale²)`.
pub fn random_shift(width: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..width)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn draw(
    schema: &FamilySchema,
    species: Species,
    label_space: LabelSpace,
    means: &[Vec<f64>],
    counts: &[usize],
    sigma: f64,
    family_scale: Option<&[f64]>,
    missing_rate: f64,
    seed: u64,
    id_prefix: &str,
) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = schema.total_width();
    let col_sigma: Vec<f64> = (0..schema.n_families())
        .flat_map(|f| {
            let s = sigma * family_scale.map_or(1.0, |fs| fs[f]);
            std::iter::repeat_n(s, schema.width(f))
        })
        .collect();
    let mut y: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
        .collect();
    y.shuffle(&mut rng);
    let n = y.len();
    let mut x = Array2::zeros((n, w));
    let mut missing = Array2::from_elem((n, w), false);
    for (r, &c) in y.iter().enumerate() {
        for j in 0..w {
            let z: f64 = StandardNormal.sample(&mut rng);
            x[[r, j]] = means[c][j] + col_sigma[j] * z;
            if missing_rate > 0.0 && rng.random_bool(missing_rate) {
                missing[[r, j]] = true;
            }
        }
    }
    let ids = (0..n).map(|i| format!("{id_prefix}{i:05}")).collect();
    Dataset::new(schema.clone(), species, label_space, ids, x, missing, y)
}

/// Rows drawn class-conditionally from `N(mean_c, σ²I)`, entries masked at `missing_rate`.
pub fn generate(spec: &GenSpec) -> Result<Dataset> {
    spec.validate()?;
    draw(
        &spec.schema,
        spec.species,
        spec.label_space,
        &spec.class_means,
        &spec.class_counts,
        spec.sigma,
        spec.family_scale.as_deref(),
        spec.missing_rate,
        spec.seed,
        &format!("{}_", spec.species),
    )
}

/// Source dataset from `spec` and a target dataset with means shifted by `shift`.
///
/// The target's label space follows the length of `target_counts` (4 → `Aligned4`, matching
/// source classes by name so Vip keeps the source Vip mean). Target species is the other one.
pub fn generate_pair(spec: &GenSpec, shift: &[f64], target_counts: &[usize]) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let w = spec.schema.total_width();
    if shift.len() != w {
        return Err(Error::InvalidArgument(format!("shift must have {w} entries")));
    }
    let target_space = match target_counts.len() {
        4 => LabelSpace::Aligned4,
        5 => LabelSpace::Mouse5,
        n => return Err(Error::InvalidArgument(format!("target_counts has {n} entries"))),
    };
    let source = generate(spec)?;
    let means: Vec<Vec<f64>> = target_space
        .classes()
        .iter()
        .map(|name| {
            let src = spec.label_space.index_of(name).ok_or_else(|| {
                Error::InvalidArgument(format!("target class {name} missing from source space"))
            })?;
            Ok(spec.class_means[src].iter().zip(shift).map(|(m, d)| m + d).collect())
        })
        .collect::<Result<_>>()?;
    let species = match spec.species {
        Species::Mouse => Species::Human,
        Species::Human => Species::Mouse,
    };
    let target = draw(
        &spec.schema,
        species,
        target_space,
        &means,
        target_counts,
        spec.sigma,
        spec.family_scale.as_deref(),
        spec.missing_rate,
        spec.seed ^ 0x9E37_79B9_7F4A_7C15,
        &format!("{species}_"),
    )?;
    Ok((source, target))
}

/// Compact description of a synthetic experiment, expanded into a [`GenSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthRecipe {
    /// Per-family widths (12 entries).
    pub widths: Vec<usize>,
    pub label_space: LabelSpace,
    #[serde(default = "default_species")]
    pub species: Species,
    pub counts: Vec<usize>,
    pub separation: f64,
    pub sigma: f64,
    #[serde(default)]
    pub missing_rate: f64,
    #[serde(default)]
    pub informative_family: Option<usize>,
    #[serde(default)]
    pub family_scale: Option<Vec<f64>>,
    pub seed: u64,
    /// Present for two-species experiments.
    #[serde(default)]
    pub target: Option<TargetRecipe>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetRecipe {
    pub counts: Vec<usize>,
    pub shift_scale: f64,
    pub shift_seed: u64,
}

fn default_species() -> Species {
    Species::Mouse
}

impl SynthRecipe {
    pub fn gen_spec(&self) -> Result<GenSpec> {
        let schema = FamilySchema::with_widths(&self.widths)?;
        let k = self.label_space.n_classes();
        let class_means =
            GenSpec::random_means(&schema, k, self.separation, self.informative_family, self.seed ^ 0xA5A5);
        let shift = self
            .target
            .as_ref()
            .map(|t| random_shift(schema.total_width(), t.shift_scale, t.shift_seed));
        let spec = GenSpec {
            schema,
            species: self.species,
            label_space: self.label_space,
            class_means,
            sigma: self.sigma,
            family_scale: self.family_scale.clone(),
            class_counts: self.counts.clone(),
            shift,
            missing_rate: self.missing_rate,
            seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// One dataset, or (source, target) when a target is described.
    pub fn generate(&self) -> Result<(Dataset, Option<Dataset>)> {
        let spec = self.gen_spec()?;
        match (&self.target, &spec.shift) {
            (Some(t), Some(shift)) => {
                let (s, tg) = generate_pair(&spec, shift, &t.counts)?;
                Ok((s, Some(tg)))
            }
            _ => Ok((generate(&spec)?, None)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_spec(counts: Vec<usize>, sigma: f64, seed: u64) -> GenSpec {
        let schema = FamilySchema::uniform(2).unwrap();
        let k = counts.len();
        let space = if k == 5 { LabelSpace::Mouse5 } else { LabelSpace::Aligned4 };
        GenSpec {
            class_means: GenSpec::random_means(&schema, k, 2.0, None, seed),
            schema,
            species: Species::Mouse,
            label_space: space,
            sigma,
            family_scale: None,
            class_counts: counts,
            shift: None,
            missing_rate: 0.0,
            seed,
        }
    }

    #[test]
    fn tiny_sigma_reproduces_means() {
        let mut spec = base_spec(vec![3, 3, 3, 3], 1e-300, 1);
        spec.missing_rate = 0.2;
        let ds = generate(&spec).unwrap();
        for r in 0..ds.n_rows() {
            let c = ds.y()[r];
            for j in 0..24 {
                if !ds.missing()[[r, j]] {
                    assert_eq!(ds.x()[[r, j]], spec.class_means[c][j]);
                }
            }
        }
    }

    #[test]
    fn mouse_proportions() {
        let spec = base_spec(MOUSE_COUNTS.to_vec(), 1.0, 2);
        let ds = generate(&spec).unwrap();
        assert_eq!(ds.class_counts(), MOUSE_COUNTS.to_vec());
        let frac = ds.class_counts()[3] as f64 / ds.n_rows() as f64;
        assert!((frac - 0.450).abs() < 5e-4, "Sst fraction {frac}");
    }

    #[test]
    fn empirical_means_within_clt_bound() {
        let spec = base_spec(vec![2500; 4], 1.5, 3);
        let ds = generate(&spec).unwrap();
        let n = 2500.0;
        for c in 0..4 {
            let rows: Vec<usize> = (0..ds.n_rows()).filter(|&r| ds.y()[r] == c).collect();
            for j in 0..24 {
                let m: f64 = rows.iter().map(|&r| ds.x()[[r, j]]).sum::<f64>() / n;
                assert!((m - spec.class_means[c][j]).abs() < 4.5 * 1.5 / n.sqrt());
            }
        }
    }

    #[test]
    fn deterministic_and_valid() {
        let spec = base_spec(vec![5, 6, 7, 8], 1.0, 9);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<GenSpec>(&json).unwrap(), spec);
    }

    #[test]
    fn pair_uses_human_proportions() {
        let spec = base_spec(MOUSE_COUNTS.to_vec(), 1.0, 4);
        let shift = vec![0.0; 24];
        let (src, tgt) = generate_pair(&spec, &shift, &HUMAN_COUNTS).unwrap();
        assert_eq!(src.label_space(), LabelSpace::Mouse5);
        assert_eq!(tgt.label_space(), LabelSpace::Aligned4);
        assert_eq!(tgt.species(), Species::Human);
        assert_eq!(tgt.class_counts(), HUMAN_COUNTS.to_vec());
        let pv = tgt.class_counts()[1] as f64 / tgt.n_rows() as f64;
        assert!((pv - 0.579).abs() < 5e-4);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = base_spec(vec![1, 1, 1, 1], 1.0, 0);
        spec.sigma = 0.0;
        assert!(generate(&spec).is_err());
        let mut spec = base_spec(vec![1, 1, 1, 1], 1.0, 0);
        spec.missing_rate = 1.0;
        assert!(generate(&spec).is_err());
    }
}
