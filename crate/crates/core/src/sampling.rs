//! Stratified hold-out and k-fold plans, and SMOTE oversampling of a training partition.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::class_counts;
use crate::error::{Error, Result};
use crate::preprocess::Partition;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SplitKind {
    Holdout { ratios: [f64; 3] },
    KFold { k: usize },
}

/// Assignment of every cell to one partition (hold-out: 0 train, 1 val, 2 test; k-fold: fold id).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub kind: SplitKind,
    pub seed: u64,
    assignments: Vec<usize>,
}

impl SplitPlan {
    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn n_parts(&self) -> usize {
        match self.kind {
            SplitKind::Holdout { .. } => 3,
            SplitKind::KFold { k } => k,
        }
    }

    /// Indices assigned to part `p`, ascending.
    pub fn part(&self, p: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == p)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn partition(&self, p: Partition) -> Vec<usize> {
        self.part(match p {
            Partition::Train => 0,
            Partition::Val => 1,
            Partition::Test => 2,
        })
    }

    /// (train, test) index sets for fold `f`: test is fold `f`, train the rest.
    pub fn fold(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        let (test, train): (Vec<usize>, Vec<usize>) =
            (0..self.assignments.len()).partition(|&i| self.assignments[i] == f);
        (train, test)
    }

    /// `cell_id → partition` records for audit output.
    pub fn audit(&self, cell_ids: &[String]) -> Vec<AuditRecord> {
        assert_eq!(cell_ids.len(), self.assignments.len());
        cell_ids
            .iter()
            .zip(&self.assignments)
            .map(|(id, &a)| AuditRecord {
                cell_id: id.clone(),
                partition: match self.kind {
                    SplitKind::Holdout { .. } => ["train", "val", "test"][a].to_string(),
                    SplitKind::KFold { .. } => format!("fold{a}"),
                },
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub cell_id: String,
    pub partition: String,
}

fn members_by_class(y: &[usize]) -> Vec<Vec<usize>> {
    let k = y.iter().max().map_or(0, |&m| m + 1);
    let mut members = vec![Vec::new(); k];
    for (i, &c) in y.iter().enumerate() {
        members[c].push(i);
    }
    members
}

/// Largest-remainder apportionment of `n` items over `ratios`.
///
/// Equal fractional parts are ordered by `tie_rank`. A positive-ratio part left empty
/// borrows one item from a part that was rounded up.
fn apportion(n: usize, ratios: &[f64], tie_rank: &[usize]) -> Vec<usize> {
    let quotas: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(tie_rank[a].cmp(&tie_rank[b]))
    });
    for &p in order.iter().take(n.saturating_sub(assigned)) {
        counts[p] += 1;
    }
    for p in 0..ratios.len() {
        if ratios[p] > 0.0 && counts[p] == 0 {
            let donor = (0..ratios.len())
                .filter(|&d| counts[d] > 1 && (counts[d] as f64) > quotas[d])
                .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)));
            if let Some(d) = donor {
                counts[d] -= 1;
                counts[p] += 1;
            }
        }
    }
    counts
}

/// Stratified three-way hold-out. Cells are shuffled within class only.
pub fn stratified_holdout(y: &[usize], ratios: [f64; 3], seed: u64) -> Result<SplitPlan> {
    if ratios.iter().any(|&r| !(0.0..=1.0).contains(&r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("ratios {ratios:?} must be in [0,1] and sum to 1")));
    }
    let members = members_by_class(y);
    for (c, m) in members.iter().enumerate() {
        if !m.is_empty() && m.len() < 3 {
            return Err(Error::ClassTooSmall {
                class: format!("class {c}"),
                count: m.len(),
                required: 3,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![usize::MAX; y.len()];
    for mut m in members {
        if m.is_empty() {
            continue;
        }
        m.shuffle(&mut rng);
        let mut rank = [0usize, 1, 2];
        rank.shuffle(&mut rng);
        let counts = apportion(m.len(), &ratios, &rank);
        let mut it = m.into_iter();
        for (p, &cnt) in counts.iter().enumerate() {
            for i in it.by_ref().take(cnt) {
                assignments[i] = p;
            }
        }
    }
    debug_assert!(assignments.iter().all(|&a| a < 3));
    Ok(SplitPlan {
        kind: SplitKind::Holdout { ratios },
        seed,
        assignments,
    })
}

/// Stratified k-fold. Per-class fold counts differ by at most one.
pub fn stratified_kfold(y: &[usize], k: usize, seed: u64) -> Result<SplitPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k-fold needs k >= 2, got {k}")));
    }
    let members = members_by_class(y);
    for (c, m) in members.iter().enumerate() {
        if !m.is_empty() && m.len() < k {
            return Err(Error::ClassTooSmall {
                class: format!("class {c}"),
                count: m.len(),
                required: k,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![0; y.len()];
    // dealing continues across classes so fold totals also stay within one
    let mut start = 0;
    for mut m in members {
        m.shuffle(&mut rng);
        for (j, &i) in m.iter().enumerate() {
            assignments[i] = (start + j) % k;
        }
        start = (start + m.len()) % k;
    }
    Ok(SplitPlan {
        kind: SplitKind::KFold { k },
        seed,
        assignments,
    })
}

/// Training rows after SMOTE. The first `n_original` rows are the input verbatim.
#[derive(Clone, Debug, PartialEq)]
pub struct Oversampled {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub n_original: usize,
    /// Always [`Partition::Train`]: synthetic rows never leave the training partition.
    pub partition: Partition,
}

impl Oversampled {
    pub fn n_synthetic(&self) -> usize {
        self.y.len() - self.n_original
    }
}

fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Indices (into `members`) of the `k` nearest same-class neighbours of each member,
/// by Euclidean distance, ties by index.
pub fn class_neighbours(x: ArrayView2<'_, f64>, members: &[usize], k: usize) -> Vec<Vec<usize>> {
    members
        .iter()
        .enumerate()
        .map(|(a, &ia)| {
            let mut d: Vec<(f64, usize)> = members
                .iter()
                .enumerate()
                .filter(|&(b, _)| b != a)
                .map(|(b, &ib)| (sq_dist(x.row(ia), x.row(ib)), b))
                .collect();
            d.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
            d.into_iter().take(k).map(|(_, b)| b).collect()
        })
        .collect()
}

/// Oversample every class up to the majority count with `s = x + u·(x_nn − x)`.
///
/// `x_nn` is one of `x`'s `k_neighbors` nearest same-class neighbours (capped at
/// class size − 1) and `u ~ U[0, 1)`.
pub fn smote_oversample(
    x: ArrayView2<'_, f64>,
    y: &[usize],
    k_neighbors: usize,
    seed: u64,
) -> Result<Oversampled> {
    if x.nrows() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "{} rows but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    if k_neighbors == 0 {
        return Err(Error::InvalidArgument("k_neighbors must be positive".into()));
    }
    let members = members_by_class(y);
    let counts = class_counts(y, members.len());
    let target = counts.iter().copied().max().unwrap_or(0);
    for (c, m) in members.iter().enumerate() {
        if m.len() == 1 && target > 1 {
            return Err(Error::ClassTooSmall {
                class: format!("class {c}"),
                count: 1,
                required: 2,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = x.ncols();
    let mut rows: Vec<f64> = x.iter().copied().collect();
    let mut labels = y.to_vec();
    for (c, m) in members.iter().enumerate() {
        let deficit = target - m.len();
        if m.is_empty() || deficit == 0 {
            continue;
        }
        let k = k_neighbors.min(m.len() - 1);
        let nbrs = class_neighbours(x, m, k);
        for _ in 0..deficit {
            let a = rng.random_range(0..m.len());
            let b = nbrs[a][rng.random_range(0..k)];
            let u: f64 = rng.random();
            let (xa, xb) = (x.row(m[a]), x.row(m[b]));
            rows.extend(xa.iter().zip(xb).map(|(p, q)| p + u * (q - p)));
            labels.push(c);
        }
    }
    let n = labels.len();
    Ok(Oversampled {
        x: Array2::from_shape_vec((n, width), rows).expect("shape"),
        y: labels,
        n_original: x.nrows(),
        partition: Partition::Train,
    })
}
