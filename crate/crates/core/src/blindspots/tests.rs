use super::*;
use crate::scenegen::{sample_dataset_spec, Placement};
use proptest::prelude::*;

fn t(l: Layer, a: Attribute, v: Value) -> ValueAssignment {
    ValueAssignment::new(AttributeKey::new(l, a), v)
}

// X and Y of the two-attribute worked example, mapped onto background keys.
fn x(v: u8) -> ValueAssignment {
    t(Layer::Background, Attribute::Color, if v == 1 { Value::Grey } else { Value::White })
}
fn y(v: u8) -> ValueAssignment {
    t(Layer::Background, Attribute::Texture, if v == 1 { Value::SaltAndPepper } else { Value::Solid })
}

fn scene(triplets: Vec<ValueAssignment>) -> SceneDescription {
    SceneDescription {
        image_id: 0,
        seed: 0,
        triplets,
        placements: vec![Placement { layer: Layer::Square, x: 0, y: 0 }],
    }
}

#[test]
fn membership_examples() {
    let b = BlindspotSpec::new(
        0,
        [
            t(Layer::Square, Attribute::Presence, Value::True),
            t(Layer::Circle, Attribute::Presence, Value::True),
        ],
    );
    let s = scene(vec![
        t(Layer::Square, Attribute::Presence, Value::True),
        t(Layer::Circle, Attribute::Presence, Value::True),
        t(Layer::Circle, Attribute::Color, Value::Orange),
    ]);
    assert!(matches(&b, &s));
    assert!(matches(&BlindspotSpec::new(1, []), &s));
    let blue = BlindspotSpec::new(2, [t(Layer::Circle, Attribute::Presence, Value::True), t(Layer::Circle, Attribute::Color, Value::Blue)]);
    assert!(!matches(&blue, &s));
}

#[test]
fn ambiguity_examples() {
    // S1 = {[X=1], [X=0, Y=1]}: one shared differing key
    assert!(!ambiguity_ok(&BlindspotSpec::new(0, [x(1)]), &BlindspotSpec::new(1, [x(0), y(1)])));
    assert!(ambiguity_ok(&BlindspotSpec::new(0, [x(0), y(0)]), &BlindspotSpec::new(1, [x(1), y(1)])));
    let a = BlindspotSpec::new(0, [x(0), y(1)]);
    assert!(!ambiguity_ok(&a, &a.clone()));
}

#[test]
fn feasibility_checker() {
    let bad = BlindspotSpec::new(0, [t(Layer::Circle, Attribute::Presence, Value::False), t(Layer::Circle, Attribute::Color, Value::Blue)]);
    assert!(!is_feasible(&bad));
    let missing = BlindspotSpec::new(0, [t(Layer::Circle, Attribute::Color, Value::Blue)]);
    assert!(!is_feasible(&missing));
    let ok = BlindspotSpec::new(0, [t(Layer::Circle, Attribute::Presence, Value::True), t(Layer::Circle, Attribute::Color, Value::Blue)]);
    assert!(is_feasible(&ok));
    let pos = BlindspotSpec::new(
        0,
        [t(Layer::Square, Attribute::Presence, Value::False), ValueAssignment::new(AttributeKey::RELATIVE_POSITION, Value::Above)],
    );
    assert!(!is_feasible(&pos));
    let dup = BlindspotSpec::new(0, [x(0), x(1)]);
    assert!(!is_feasible(&dup));
}

#[test]
fn sampled_blindspots_are_feasible() {
    for i in 0..2000u64 {
        let spec = sample_dataset_spec(i % 100);
        let b = sample_blindspot(&spec, 5..=7, 0, rng::derive(5, "b", i)).unwrap();
        assert!(is_feasible(&b), "{:?}", b.triplets);
        assert!((5..=7).contains(&b.len()));
        let keys = spec.blindspot_keys();
        assert!(b.keys().all(|k| keys.contains(&k)));
        for tr in &b.triplets {
            if tr.layer.is_object() && tr.attribute != Attribute::Presence {
                assert_eq!(b.value(AttributeKey::presence(tr.layer)), Some(Value::True));
            }
        }
    }
}

#[test]
fn triplet_count_is_uniform() {
    let n = 1000;
    let mut counts = [0usize; 3];
    for i in 0..n {
        let spec = sample_dataset_spec(i);
        counts[sample_blindspot(&spec, 5..=7, 0, rng::derive(6, "b", i)).unwrap().len() - 5] += 1;
    }
    let e = n as f64 / 3.0;
    let sd = (n as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
    for c in counts {
        assert!((c as f64 - e).abs() < 3.0 * sd, "{counts:?}");
    }
}

#[test]
fn too_large_blindspot_is_infeasible() {
    let spec = sample_dataset_spec(0);
    let n = spec.blindspot_keys().len();
    assert!(matches!(
        sample_blindspot(&spec, n + 1..=n + 1, 0, 1),
        Err(Error::InfeasibleSpec(_))
    ));
}

#[test]
fn single_blindspot_sets_have_no_pair_constraint() {
    for i in 0..50 {
        let spec = sample_dataset_spec(i);
        let set = sample_blindspot_set(&spec, 1, 5..=7, i).unwrap();
        assert_eq!(set.len(), 1);
        set.validate(&spec).unwrap();
    }
}

#[test]
fn sets_are_pairwise_unambiguous_and_never_nested() {
    let mut generated = 0;
    for i in 0..500u64 {
        let spec = sample_dataset_spec(rng::derive(9, "spec", i));
        let m = 1 + (i % 3) as usize;
        let set = match sample_blindspot_set(&spec, m, 5..=7, rng::derive(9, "set", i)) {
            Ok(s) => s,
            Err(Error::GenerationExhausted { .. }) => continue,
            Err(e) => panic!("{e}"),
        };
        generated += 1;
        for (a_i, a) in set.iter().enumerate() {
            for b in &set.blindspots[a_i + 1..] {
                assert!(ambiguity_ok(a, b));
            }
        }
        set.validate(&spec).unwrap();
        assert!(nested_pairs(&set, &spec).is_empty(), "{set:?}");
    }
    assert!(generated >= 490, "{generated}");
}

#[test]
fn extension_frequency_matches_fixed_keys() {
    // Small specs without the meta key in the blindspot: a blindspot fixing t'
    // rollable keys matches exactly 2^-t' of the rollable combinations.
    for i in 0..30u64 {
        let spec = sample_dataset_spec(i);
        let b = (0..)
            .map(|j| sample_blindspot(&spec, 3..=5, 0, rng::derive(i, "f", j)).unwrap())
            .find(|b| !b.contains_key(AttributeKey::RELATIVE_POSITION))
            .unwrap();
        let space = enumerate_attribute_space(&spec);
        // collapse the relative-position axis
        let combos: Vec<_> = space
            .iter()
            .filter(|p| p.last().unwrap().value != Value::Above)
            .collect();
        let hits = combos.iter().filter(|p| matches_triplets(&b, p)).count();
        assert_eq!(hits * (1 << b.len()), combos.len());
    }
}

proptest! {
    #[test]
    fn adding_triplets_never_grows_extension(seed in any::<u64>(), extra in 0usize..20) {
        let spec = sample_dataset_spec(seed);
        let b = sample_blindspot(&spec, 1..=3, 0, seed ^ 1).unwrap();
        let keys: Vec<_> = spec.blindspot_keys().into_iter().filter(|k| !b.contains_key(*k)).collect();
        prop_assume!(!keys.is_empty());
        let k = keys[extra % keys.len()];
        let mut bigger = b.clone();
        bigger.triplets.insert(ValueAssignment::new(k, k.values()[extra % 2]));
        for p in enumerate_attribute_space(&spec) {
            prop_assert!(!matches_triplets(&bigger, &p) || matches_triplets(&b, &p));
        }
    }
}
