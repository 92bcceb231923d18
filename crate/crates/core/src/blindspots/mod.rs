//! Blindspot definitions, membership, and constrained random generation.

use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::ops::RangeInclusive;

use crate::error::{Error, Result};
use crate::rng;
use crate::scenegen::{
    Attribute, AttributeKey, DatasetSpec, Layer, SceneDescription, Value, ValueAssignment,
};

/// Sampling budget for a whole blindspot set.
pub const SET_ATTEMPTS: usize = 10_000;

/// Failed draws for one slot before the partial set is discarded.
const SLOT_ATTEMPTS: usize = 500;

/// A true blindspot: the images whose triplet list contains all of `triplets`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlindspotSpec {
    pub id: usize,
    pub triplets: BTreeSet<ValueAssignment>,
}

impl BlindspotSpec {
    pub fn new(id: usize, triplets: impl IntoIterator<Item = ValueAssignment>) -> Self {
        BlindspotSpec {
            id,
            triplets: triplets.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn value(&self, key: AttributeKey) -> Option<Value> {
        self.triplets.iter().find(|t| t.key() == key).map(|t| t.value)
    }

    pub fn keys(&self) -> impl Iterator<Item = AttributeKey> + '_ {
        self.triplets.iter().map(|t| t.key())
    }

    pub fn contains_key(&self, key: AttributeKey) -> bool {
        self.keys().any(|k| k == key)
    }

    /// Whether the blindspot can contain images of the positive class.
    pub fn admits_squares(&self) -> bool {
        self.value(AttributeKey::presence(Layer::Square)) != Some(Value::False)
            && self.value(AttributeKey::RELATIVE_POSITION) != Some(Value::NoSquare)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlindspotSet {
    pub blindspots: Vec<BlindspotSpec>,
}

impl BlindspotSet {
    pub fn len(&self) -> usize {
        self.blindspots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blindspots.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, BlindspotSpec> {
        self.blindspots.iter()
    }

    /// Does any blindspot contain this scene.
    pub fn any_match(&self, scene: &SceneDescription) -> bool {
        self.blindspots.iter().any(|b| matches(b, scene))
    }

    /// Re-checks keys, feasibility and pairwise ambiguity against the dataset.
    pub fn validate(&self, spec: &DatasetSpec) -> Result<()> {
        let allowed = spec.blindspot_keys();
        for b in &self.blindspots {
            if let Some(k) = b.keys().find(|k| !allowed.contains(k)) {
                return Err(Error::Invalid(format!(
                    "blindspot {} uses {k}, which the dataset does not vary",
                    b.id
                )));
            }
            if !is_feasible(b) {
                return Err(Error::Invalid(format!("blindspot {} is infeasible", b.id)));
            }
        }
        for (i, a) in self.blindspots.iter().enumerate() {
            for b in &self.blindspots[i + 1..] {
                if !ambiguity_ok(a, b) {
                    return Err(Error::Invalid(format!(
                        "blindspots {} and {} violate the ambiguity constraint",
                        a.id, b.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Subset membership of the blindspot's triplets in a triplet list.
pub fn matches_triplets(b: &BlindspotSpec, triplets: &[ValueAssignment]) -> bool {
    b.triplets.iter().all(|t| triplets.contains(t))
}

pub fn matches(b: &BlindspotSpec, scene: &SceneDescription) -> bool {
    matches_triplets(b, &scene.triplets)
}

/// Feasibility: every non-presence object attribute implies that object's
/// presence, a relative position of 0/1 implies a square, and no key repeats.
pub fn is_feasible(b: &BlindspotSpec) -> bool {
    let mut keys = BTreeSet::new();
    if !b.triplets.iter().all(|t| keys.insert(t.key()) && t.is_valid()) {
        return false;
    }
    for t in &b.triplets {
        if t.layer.is_object() && t.attribute != Attribute::Presence {
            let presence = ValueAssignment::new(AttributeKey::presence(t.layer), Value::True);
            if !b.triplets.contains(&presence) {
                return false;
            }
        }
    }
    let square = b.value(AttributeKey::presence(Layer::Square));
    match b.value(AttributeKey::RELATIVE_POSITION) {
        Some(Value::Above | Value::Below) => square != Some(Value::False),
        Some(Value::NoSquare) => square != Some(Value::True),
        _ => true,
    }
}

/// The pair shares at least two keys whose values differ.
pub fn ambiguity_ok(a: &BlindspotSpec, b: &BlindspotSpec) -> bool {
    let differing = a
        .triplets
        .iter()
        .filter(|t| matches!(b.value(t.key()), Some(v) if v != t.value))
        .count();
    differing >= 2
}

fn uniform_value(key: AttributeKey, r: &mut rng::Rng) -> Value {
    if key == AttributeKey::RELATIVE_POSITION {
        // -1 (no square) is never drawn: the blindspots of interest contain squares.
        *[Value::Below, Value::Above].choose(r).unwrap()
    } else if r.random_bool(0.5) {
        key.alternative_value()
    } else {
        key.default_value()
    }
}

/// Random blindspot of 5-7 (by default) triplets over the dataset's rollable
/// and meta keys. Object layers contribute their presence first; any later
/// attribute of that layer forces the presence to True.
pub fn sample_blindspot(
    spec: &DatasetSpec,
    size_range: RangeInclusive<usize>,
    id: usize,
    seed: u64,
) -> Result<BlindspotSpec> {
    let mut r = rng::rng(seed);
    let keys = spec.blindspot_keys();
    let size = r.random_range(size_range);
    if size > keys.len() {
        return Err(Error::InfeasibleSpec(format!(
            "blindspot of {size} triplets needs more than the {} available keys",
            keys.len()
        )));
    }
    let square_presence = AttributeKey::presence(Layer::Square);
    let mut chosen: BTreeMap<AttributeKey, Value> = BTreeMap::new();
    while chosen.len() < size {
        let open = |l: Layer, chosen: &BTreeMap<AttributeKey, Value>| -> Vec<AttributeKey> {
            keys.iter()
                .copied()
                .filter(|k| k.layer == l && !chosen.contains_key(k))
                .collect()
        };
        let layers: Vec<Layer> = spec
            .layers
            .iter()
            .copied()
            .filter(|&l| !open(l, &chosen).is_empty())
            .collect();
        let layer = *layers.choose(&mut r).expect("size checked against available keys");
        let presence = AttributeKey::presence(layer);
        if layer.is_object() && keys.contains(&presence) && !chosen.contains_key(&presence) {
            let mut v = uniform_value(presence, &mut r);
            if layer == Layer::Square && chosen.contains_key(&AttributeKey::RELATIVE_POSITION) {
                v = Value::True;
            }
            chosen.insert(presence, v);
            continue;
        }
        let key = *open(layer, &chosen).choose(&mut r).unwrap();
        let value = uniform_value(key, &mut r);
        chosen.insert(key, value);
        if layer.is_object() && keys.contains(&presence) {
            chosen.insert(presence, Value::True);
        }
        if key == AttributeKey::RELATIVE_POSITION && chosen.contains_key(&square_presence) {
            chosen.insert(square_presence, Value::True);
        }
    }
    Ok(BlindspotSpec::new(
        id,
        chosen.into_iter().map(|(k, v)| ValueAssignment::new(k, v)),
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlindspotRanges {
    pub count: RangeInclusive<usize>,
    pub triplets: RangeInclusive<usize>,
}

impl Default for BlindspotRanges {
    fn default() -> Self {
        BlindspotRanges {
            count: 1..=3,
            triplets: 5..=7,
        }
    }
}

/// `m` blindspots, pairwise ambiguity-safe. Blindspots that exclude squares are
/// redrawn since the positive-class images would never contain them.
pub fn sample_blindspot_set(
    spec: &DatasetSpec,
    m: usize,
    triplets: RangeInclusive<usize>,
    seed: u64,
) -> Result<BlindspotSet> {
    let mut set: Vec<BlindspotSpec> = Vec::with_capacity(m);
    let mut slot_failures = 0;
    for attempt in 0..SET_ATTEMPTS {
        if set.len() == m {
            break;
        }
        let b = sample_blindspot(
            spec,
            triplets.clone(),
            set.len(),
            rng::derive(seed, "blindspot", attempt as u64),
        )?;
        if b.admits_squares() && set.iter().all(|prev| ambiguity_ok(prev, &b)) {
            set.push(b);
            slot_failures = 0;
        } else {
            slot_failures += 1;
            if slot_failures >= SLOT_ATTEMPTS {
                set.clear();
                slot_failures = 0;
            }
        }
    }
    if set.len() < m {
        return Err(Error::GenerationExhausted {
            attempts: SET_ATTEMPTS,
        });
    }
    Ok(BlindspotSet { blindspots: set })
}

/// The finite attribute space of a dataset: every combination of rollable
/// values, crossed with the relative positions compatible with it.
pub fn enumerate_attribute_space(spec: &DatasetSpec) -> Vec<Vec<ValueAssignment>> {
    let keys: Vec<AttributeKey> = spec.rollable.iter().copied().collect();
    let square = AttributeKey::presence(Layer::Square);
    let mut points = Vec::new();
    for bits in 0u64..(1 << keys.len()) {
        let base: Vec<ValueAssignment> = keys
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let v = if bits >> i & 1 == 1 {
                    k.alternative_value()
                } else {
                    k.default_value()
                };
                ValueAssignment::new(k, v)
            })
            .collect();
        let has_square = base.contains(&ValueAssignment::new(square, Value::True));
        let positions: &[Value] = if has_square {
            &[Value::Below, Value::Above]
        } else {
            &[Value::NoSquare]
        };
        for &p in positions {
            let mut point = base.clone();
            point.push(ValueAssignment::new(AttributeKey::RELATIVE_POSITION, p));
            points.push(point);
        }
    }
    points
}

/// Brute-force extensional check: pairs (i, j) whose extension in the
/// attribute space satisfies ext(i) ⊆ ext(j).
pub fn nested_pairs(set: &BlindspotSet, spec: &DatasetSpec) -> Vec<(usize, usize)> {
    let space = enumerate_attribute_space(spec);
    let ext: Vec<Vec<bool>> = set
        .blindspots
        .iter()
        .map(|b| space.iter().map(|p| matches_triplets(b, p)).collect())
        .collect();
    let mut out = Vec::new();
    for i in 0..ext.len() {
        for j in 0..ext.len() {
            if i != j && ext[i].iter().zip(&ext[j]).all(|(&a, &b)| !a || b) {
                out.push((i, j));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests;
