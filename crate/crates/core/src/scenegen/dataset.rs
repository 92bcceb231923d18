use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::ops::RangeInclusive;

use super::vocab::{AttributeKey, Layer};
use crate::error::{Error, Result};
use crate::rng;

/// Which layers a dataset contains and which of their attributes vary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub layers: BTreeSet<Layer>,
    pub rollable: BTreeSet<AttributeKey>,
    pub seed: u64,
}

/// Ranges for the random dataset generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRanges {
    pub extra_object_layers: RangeInclusive<usize>,
    pub rollable: RangeInclusive<usize>,
}

impl Default for DatasetRanges {
    fn default() -> Self {
        DatasetRanges {
            extra_object_layers: 1..=3,
            rollable: 6..=8,
        }
    }
}

impl DatasetSpec {
    pub fn object_layers(&self) -> impl Iterator<Item = Layer> + '_ {
        self.layers.iter().copied().filter(|l| l.is_object())
    }

    pub fn is_rollable(&self, key: AttributeKey) -> bool {
        self.rollable.contains(&key)
    }

    /// Keys a blindspot definition may use: the rollable keys plus the
    /// meta-attributes of the dataset's layers.
    pub fn blindspot_keys(&self) -> BTreeSet<AttributeKey> {
        let mut keys = self.rollable.clone();
        for &l in &self.layers {
            for &a in l.meta_attributes() {
                keys.insert(AttributeKey::new(l, a));
            }
        }
        keys
    }

    /// Checks the structural invariants against the default ranges.
    pub fn validate(&self) -> Result<()> {
        self.validate_with(&DatasetRanges::default())
    }

    pub fn validate_with(&self, ranges: &DatasetRanges) -> Result<()> {
        let fail = |m: String| Err(Error::InfeasibleSpec(m));
        if !self.layers.contains(&Layer::Background) || !self.layers.contains(&Layer::Square) {
            return fail("background and square layers are mandatory".into());
        }
        let extra = self.layers.len() - 2;
        if !ranges.extra_object_layers.contains(&extra) {
            return fail(format!("{extra} extra object layers"));
        }
        if !ranges.rollable.contains(&self.rollable.len()) {
            return fail(format!("{} rollable attributes", self.rollable.len()));
        }
        for l in self.object_layers() {
            if !self.rollable.contains(&AttributeKey::presence(l)) {
                return fail(format!("presence of {l} is not rollable"));
            }
        }
        for k in &self.rollable {
            if !k.is_valid() || k.is_meta() {
                return fail(format!("{k} cannot be rollable"));
            }
            if !self.layers.contains(&k.layer) {
                return fail(format!("{k} belongs to a layer outside the dataset"));
            }
        }
        Ok(())
    }
}

pub fn sample_dataset_spec(seed: u64) -> DatasetSpec {
    sample_dataset_spec_with(&DatasetRanges::default(), seed)
        .expect("default ranges never exceed the attribute budget")
}

/// Samples layers first, then presence keys, then the remaining rollable
/// attributes by picking a layer and then one of its fixed attributes.
pub fn sample_dataset_spec_with(ranges: &DatasetRanges, seed: u64) -> Result<DatasetSpec> {
    let mut r = rng::rng(seed);
    let extra = r.random_range(ranges.extra_object_layers.clone());
    if extra > Layer::OPTIONAL_OBJECTS.len() {
        return Err(Error::InfeasibleSpec(format!("{extra} extra layers requested")));
    }
    let mut layers: BTreeSet<Layer> = [Layer::Background, Layer::Square].into();
    layers.extend(
        Layer::OPTIONAL_OBJECTS
            .choose_multiple(&mut r, extra)
            .copied(),
    );
    let target = r.random_range(ranges.rollable.clone());

    let mut rollable: BTreeSet<AttributeKey> = layers
        .iter()
        .filter(|l| l.is_object())
        .map(|&l| AttributeKey::presence(l))
        .collect();
    let available: usize = layers.iter().map(|l| l.attributes().len()).sum();
    if target > available || target < rollable.len() {
        return Err(Error::InfeasibleSpec(format!(
            "cannot make {target} attributes rollable with {} layers",
            layers.len()
        )));
    }

    while rollable.len() < target {
        let fixed = |l: Layer, rollable: &BTreeSet<AttributeKey>| -> Vec<AttributeKey> {
            l.attributes()
                .iter()
                .map(|&a| AttributeKey::new(l, a))
                .filter(|k| !rollable.contains(k))
                .collect()
        };
        let candidates: Vec<Layer> = layers
            .iter()
            .copied()
            .filter(|&l| !fixed(l, &rollable).is_empty())
            .collect();
        let layer = *candidates.choose(&mut r).expect("budget checked above");
        let key = *fixed(layer, &rollable).choose(&mut r).expect("non-empty");
        rollable.insert(key);
    }

    Ok(DatasetSpec {
        layers,
        rollable,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mandatory_layers_and_presences() {
        for seed in 0..200 {
            let spec = sample_dataset_spec(seed);
            assert!(spec.layers.contains(&Layer::Background));
            assert!(spec.layers.contains(&Layer::Square));
            for l in spec.object_layers() {
                assert!(spec.is_rollable(AttributeKey::presence(l)));
            }
        }
    }

    #[test]
    fn rollable_count_is_uniform() {
        let n = 10_000;
        let mut counts = [0usize; 3];
        for seed in 0..n {
            counts[sample_dataset_spec(seed as u64).rollable.len() - 6] += 1;
        }
        // Each count is Binomial(n, 1/3); allow 3 standard deviations.
        let p = 1.0 / 3.0;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sd, "{counts:?}");
        }
        // Chi-square with 2 dof, 0.999 quantile 13.82.
        let e = n as f64 / 3.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        assert!(chi2 < 13.82, "chi2 = {chi2}");
    }

    #[test]
    fn deterministic() {
        assert_eq!(sample_dataset_spec(42), sample_dataset_spec(42));
    }

    #[test]
    fn validator_rejects_bad_specs() {
        let mut spec = sample_dataset_spec(3);
        spec.rollable.insert(AttributeKey::RELATIVE_POSITION);
        assert!(spec.validate().is_err());
        let mut spec = sample_dataset_spec(3);
        spec.layers.remove(&Layer::Square);
        assert!(spec.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn sampled_specs_are_valid(seed in any::<u64>()) {
            prop_assert!(sample_dataset_spec(seed).validate().is_ok());
        }
    }
}
