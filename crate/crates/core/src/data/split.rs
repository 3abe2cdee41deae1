use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest allowed excess of a class's share in any partition over the nominal fraction.
const STRATUM_TOLERANCE: f64 = 0.05;

/// Partition fractions plus the shuffling seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_frac: 0.70, val_frac: 0.10, test_frac: 0.20, seed: 42 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let f = [self.train_frac, self.val_frac, self.test_frac];
        if f.iter().any(|v| !(0.0..=1.0).contains(v)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions {f:?} must lie in [0,1] and sum to 1")));
        }
        Ok(())
    }

    fn fractions(&self) -> [f64; 3] {
        [self.train_frac, self.val_frac, self.test_frac]
    }
}

/// Record indices per partition.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

fn group_shuffled(strata: &[usize], rng: &mut ChaCha8Rng) -> BTreeMap<usize, Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &s) in strata.iter().enumerate() {
        groups.entry(s).or_default().push(i);
    }
    for members in groups.values_mut() {
        members.shuffle(rng);
    }
    groups
}

/// Largest-remainder apportionment of `n` over `fractions`.
fn apportion(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let exact = fractions.map(|f| f * n as f64);
    let mut counts = exact.map(|e| e.floor() as usize);
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let mut left = n - counts.iter().sum::<usize>();
    for &p in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[p] += 1;
        left -= 1;
    }
    counts
}

/// Stratified train/val/test split over `strata` (one class label per record).
///
/// Each class is apportioned within one record of the exact fractions, and the
/// leftover records are steered so partition totals match the global quotas.
/// Classes with fewer than three records go entirely to training.
pub fn stratified_split(strata: &[usize], spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    if strata.is_empty() {
        return Err(Error::Empty("cannot split an empty dataset".into()));
    }
    let fractions = spec.fractions();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let groups = group_shuffled(strata, &mut rng);

    let mut split = Split::default();
    let mut eligible = Vec::new();
    for (&class, members) in &groups {
        if members.len() < 3 {
            log::warn!("membrane class {class} has {} records; placing all in train", members.len());
            split.train.extend(members);
        } else {
            eligible.push((class, members));
        }
    }

    let n_eligible: usize = eligible.iter().map(|(_, m)| m.len()).sum();
    let targets = apportion(n_eligible, &fractions);

    let mut counts: Vec<[usize; 3]> = Vec::with_capacity(eligible.len());
    let mut spare: Vec<usize> = Vec::with_capacity(eligible.len());
    let mut remainders = Vec::new();
    for (c, (_, members)) in eligible.iter().enumerate() {
        let exact = fractions.map(|f| f * members.len() as f64);
        let floors = exact.map(|e| e.floor() as usize);
        spare.push(members.len() - floors.iter().sum::<usize>());
        counts.push(floors);
        for p in 0..3 {
            remainders.push((exact[p] - exact[p].floor(), c, p));
        }
    }
    let mut deficit: [isize; 3] = [0, 1, 2].map(|p| targets[p] as isize - counts.iter().map(|c| c[p] as isize).sum::<isize>());

    let sizes: Vec<usize> = eligible.iter().map(|(_, m)| m.len()).collect();
    let overshoot = |c: usize, p: usize, k: usize| (k + 1) as f64 / sizes[c] as f64 - fractions[p];

    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for &(frac, c, p) in &remainders {
        if spare[c] > 0 && deficit[p] > 0 && frac > 0.0 && overshoot(c, p, counts[c][p]) <= STRATUM_TOLERANCE {
            counts[c][p] += 1;
            spare[c] -= 1;
            deficit[p] -= 1;
        }
    }
    // whatever is left could not match the global quota exactly; keep per-class rounding
    for c in 0..eligible.len() {
        while spare[c] > 0 {
            let p = (0..3)
                .min_by(|&a, &b| overshoot(c, a, counts[c][a]).total_cmp(&overshoot(c, b, counts[c][b])))
                .unwrap_or(0);
            counts[c][p] += 1;
            spare[c] -= 1;
        }
    }

    for ((_, members), n) in eligible.iter().zip(&counts) {
        let (train, rest) = members.split_at(n[0]);
        let (val, test) = rest.split_at(n[1]);
        split.train.extend(train);
        split.val.extend(val);
        split.test.extend(test);
    }
    Ok(split)
}

/// Stratified k-fold assignment; returns the held-out indices of each fold.
pub fn stratified_kfold(strata: &[usize], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    if strata.len() < folds {
        return Err(Error::Empty(format!("{} records cannot fill {folds} folds", strata.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = group_shuffled(strata, &mut rng);
    let mut out = vec![Vec::new(); folds];
    // dealing class-ordered records round-robin keeps every fold stratified and balanced
    for (k, i) in groups.values().flatten().enumerate() {
        out[k % folds].push(*i);
    }
    Ok(out)
}
