use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::rng::{derive_seed, XorShift64Star};
use super::{ClassLabel, Manifest, ManifestRecord, SplitSet, NUM_CLASSES};
use crate::error::{Error, Result};

/// Requested train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.6,
            validation: 0.2,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self> {
        let r = Self {
            train,
            validation,
            test,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidRatios(format!("{parts:?} must be non-negative")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidRatios(format!("{parts:?} sum to {sum}, not 1")));
        }
        Ok(())
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.validation, self.test]
    }
}

/// Per-set image counts for a class of `n` images.
///
/// Validation and test take `floor(ratio · n)`. The leftover goes to train
/// first (one image), and anything beyond that to whichever of validation
/// and test has the larger fractional remainder (validation on ties), so
/// every count stays within one image of `ratio · n`.
pub fn split_counts(n: usize, ratios: &SplitRatios) -> [usize; 3] {
    let targets = ratios.as_array().map(|r| r * n as f64);
    let mut counts = targets.map(|t| (t + 1e-9).floor() as usize);
    let mut leftover = n.saturating_sub(counts.iter().sum());
    if leftover > 0 {
        counts[0] += 1;
        leftover -= 1;
    }
    let mut order = [1usize, 2];
    order.sort_by(|&a, &b| {
        let fa = targets[a] - counts[a] as f64;
        let fb = targets[b] - counts[b] as f64;
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for k in order {
        if leftover == 0 {
            break;
        }
        counts[k] += 1;
        leftover -= 1;
    }
    counts[0] += leftover;
    counts
}

/// Deterministic image → set assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub seed: u64,
    pub assignment: BTreeMap<String, SplitSet>,
}

impl Split {
    pub fn get(&self, id: &str) -> Option<SplitSet> {
        self.assignment.get(id).copied()
    }

    /// Copies the manifest with every record's `split` set from its id.
    pub fn apply(&self, manifest: &Manifest) -> Result<Manifest> {
        let records = manifest
            .records()
            .iter()
            .map(|r| ManifestRecord {
                split: self.get(&r.id),
                ..r.clone()
            })
            .collect();
        Manifest::new(records)
    }

    pub fn count(&self, set: SplitSet) -> usize {
        self.assignment.values().filter(|&&s| s == set).count()
    }
}

/// Stratified split: each class is shuffled independently with a generator
/// seeded by `derive_seed(seed, class_code)` over its lexicographically
/// sorted ids, then cut into train, validation and test in that order.
pub fn make_split(manifest: &Manifest, ratios: &SplitRatios, seed: u64) -> Result<Split> {
    ratios.validate()?;
    let mut per_class: [Vec<String>; NUM_CLASSES] = Default::default();
    for (id, label) in manifest.labels_by_id() {
        per_class[label.code()].push(id);
    }
    let mut assignment = BTreeMap::new();
    for class in ClassLabel::ALL {
        let ids = &mut per_class[class.code()];
        if ids.is_empty() {
            return Err(Error::EmptyClass(class.name()));
        }
        let mut rng = XorShift64Star::new(derive_seed(seed, class.code() as u64));
        rng.shuffle(ids);
        let [n_train, n_val, _] = split_counts(ids.len(), ratios);
        for (i, id) in ids.drain(..).enumerate() {
            let set = if i < n_train {
                SplitSet::Train
            } else if i < n_train + n_val {
                SplitSet::Validation
            } else {
                SplitSet::Test
            };
            assignment.insert(id, set);
        }
    }
    Ok(Split { seed, assignment })
}
