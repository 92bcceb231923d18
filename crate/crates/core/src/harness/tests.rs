use super::*;
use crate::cluster::{HypothesisList, PlaneSpotConfig};
use crate::metrics::{aggregate, evaluate, MetricThresholds};
use crate::models::{oracle_model, SplitTag};
use crate::rng;

fn small_suite(name: &str, count: usize, seed: u64) -> Vec<ExperimentConfiguration> {
    let cfg = SuiteConfig {
        name: name.into(),
        count,
        ..Default::default()
    };
    generate_ec_suite(&cfg, seed).unwrap()
}

fn oracle_inputs(ec: &ExperimentConfiguration) -> (ExperimentConfiguration, EcInputs) {
    let mut ec = ec.clone();
    let data = ec.data(false).unwrap();
    let (model, induction) = build_model(&ec, &data, None).unwrap();
    ec.status.induction = Some(induction);
    let inputs = prepare_inputs(&ec, model.as_ref(), &data.test).unwrap();
    (ec, inputs)
}

#[test]
fn suite_respects_ranges() {
    for ec in small_suite("eval", 40, 3) {
        let rollable = ec.dataset.rollable.len();
        assert!((6..=8).contains(&rollable), "{}: {rollable} rollable", ec.id);
        assert!((1..=3).contains(&ec.blindspots.len()));
        for b in ec.blindspots.iter() {
            assert!((5..=7).contains(&b.len()));
        }
        ec.validate().unwrap();
    }
}

#[test]
fn split_ids_are_contiguous_and_disjoint() {
    let s = SplitSizes { train: 5, val: 3, test: 2 };
    assert_eq!(s.ids(SplitTag::Train), 0..5);
    assert_eq!(s.ids(SplitTag::Val), 5..8);
    assert_eq!(s.ids(SplitTag::Test), 8..10);
}

#[test]
fn manifests_are_byte_identical_across_generations() {
    let cfg = SuiteConfig { count: 5, ..Default::default() };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let ecs = generate_ec_suite(&cfg, 11).unwrap();
        save_suite(&SuiteStore::new(dir.path()), &cfg, 11, &ecs, false, false).unwrap();
    }
    for id in ["eval-000", "eval-004"] {
        let read = |d: &tempfile::TempDir| std::fs::read(d.path().join(id).join("manifest.json")).unwrap();
        assert_eq!(read(&a), read(&b));
    }
    let (index, ecs) = load_suite(&SuiteStore::new(a.path())).unwrap();
    assert_eq!(index.ec_ids.len(), 5);
    assert_eq!(ecs, generate_ec_suite(&cfg, 11).unwrap());
}

#[test]
fn different_master_seeds_differ() {
    assert_ne!(small_suite("eval", 3, 1), small_suite("eval", 3, 2));
}

#[test]
fn tuning_and_evaluation_suites_are_disjoint() {
    let tune = generate_ec_suite(&SuiteConfig { count: 20, ..SuiteConfig::tuning() }, 5).unwrap();
    let eval = small_suite("eval", 100, 5);
    check_disjoint(&tune, &eval).unwrap();
    assert!(check_disjoint(&eval, &eval).is_err());
}

#[test]
fn invalid_suite_names_rejected() {
    for name in ["", "a/b", "x y"] {
        let cfg = SuiteConfig { name: name.into(), ..Default::default() };
        assert!(matches!(generate_ec_suite(&cfg, 0), Err(Error::Invalid(_))));
    }
}

#[test]
fn truths_are_positive_test_images_in_each_blindspot() {
    let ec = &small_suite("eval", 1, 8)[0];
    let test = ec.split(SplitTag::Test, false).unwrap();
    let truths = ec.truths(&test);
    assert_eq!(truths.len(), ec.blindspots.len());
    let ids = ec.sizes.ids(SplitTag::Test);
    for (b, t) in ec.blindspots.iter().zip(&truths) {
        for i in 0..test.len() {
            let s = &test.scenes[i];
            assert!(ids.contains(&s.image_id));
            let expected = test.clean[i] && crate::blindspots::matches(b, s);
            assert_eq!(t.contains(&s.image_id), expected);
        }
    }
}

#[test]
fn oracle_run_scores_a_bounded_list() {
    let (ec, inputs) = oracle_inputs(&small_suite("eval", 1, 21)[0]);
    assert!(ec.verified());
    let bdm = Bdm::PlaneSpot(PlaneSpotConfig::default());
    let rec = run_ec(&ec, &inputs, &bdm, &RunSettings::default(), None).unwrap();
    assert!((0.0..=1.0).contains(&rec.report.dr));
    assert!(rec.report.n_hypotheses <= 10);
    assert!(rec.n_hypotheses >= rec.report.n_hypotheses);
    // PlaneSpot partitions its input, so nothing is ever left unreturned.
    for f in &rec.untruncated_failures {
        assert_eq!(f.breakdown.not_returned, 0.0);
    }
    let again = run_ec(&ec, &inputs, &bdm, &RunSettings::default(), None).unwrap();
    assert_eq!(
        serde_json::to_string(&rec.report).unwrap(),
        serde_json::to_string(&again.report).unwrap()
    );
}

#[test]
fn unverified_ec_is_refused() {
    let (mut ec, inputs) = oracle_inputs(&small_suite("eval", 1, 21)[0]);
    ec.status.induction = None;
    let bdm = Bdm::PlaneSpot(PlaneSpotConfig::default());
    assert!(matches!(
        run_ec(&ec, &inputs, &bdm, &RunSettings::default(), None),
        Err(Error::UnverifiedEc(_))
    ));
}

#[test]
fn blindspot_blind_model_fails_verification() {
    let ec = &small_suite("eval", 1, 21)[0];
    let data = ec.data(false).unwrap();
    // An oracle for an unrelated blindspot set never errs where this EC's
    // training labels were flipped.
    let other = &small_suite("other", 1, 99)[0];
    let model = oracle_model(&ec.dataset, &other.blindspots, ec.model.oracle, 0).unwrap();
    let report = crate::models::verify_induction(&model, &data.val, &ec.blindspots, ec.model.verification).unwrap();
    if ec.blindspots.iter().all(|b| !other.blindspots.iter().any(|o| o == b)) {
        assert!(!report.all_verified());
    }
}

#[test]
fn imported_lists_are_scored_and_validated() {
    let (ec, inputs) = oracle_inputs(&small_suite("eval", 1, 21)[0]);
    let truth: Vec<u64> = inputs.truths[0].iter().copied().collect();
    let json = format!(r#"[{{"rank":1,"importance":1.0,"image_ids":{truth:?}}}]"#);
    let hyps = HypothesisList::from_json(&json, &inputs.known_ids()).unwrap();
    let bdm = Bdm::Imported { name: "external".into(), hypotheses: hyps };
    let rec = run_ec(&ec, &inputs, &bdm, &RunSettings::default(), None).unwrap();
    assert_eq!(rec.bdm, "external");
    assert!(rec.report.covered[0]);

    let bogus = 9_999_999u64;
    let json = format!(r#"[{{"rank":1,"importance":1.0,"image_ids":[{bogus}]}}]"#);
    match HypothesisList::from_json(&json, &inputs.known_ids()) {
        Err(Error::ImportFormat(msg)) => assert!(msg.contains(&bogus.to_string()), "{msg}"),
        other => panic!("expected ImportFormat, got {other:?}"),
    }
}

#[test]
fn config_hash_tracks_configuration() {
    let a = Bdm::PlaneSpot(PlaneSpotConfig::default());
    let b = Bdm::PlaneSpot(PlaneSpotConfig { w: 0.05, ..Default::default() });
    let s = RunSettings::default();
    let h = config_hash(&a, &s).unwrap();
    assert_eq!(h.len(), 16);
    assert_eq!(h, config_hash(&a, &s).unwrap());
    assert_ne!(h, config_hash(&b, &s).unwrap());
    let k5 = RunSettings { k_return: 5, ..s };
    assert_ne!(h, config_hash(&a, &k5).unwrap());
}

#[test]
fn parallel_map_keeps_order() {
    let items: Vec<u64> = (0..50).collect();
    let out = parallel_map(&items, 4, |&x| x * x);
    assert_eq!(out, items.iter().map(|x| x * x).collect::<Vec<_>>());
    assert!(parallel_map(&Vec::<u64>::new(), 3, |&x| x).is_empty());
}

#[test]
fn store_appends_and_runs_at_most_once() {
    let dir = tempfile::tempdir().unwrap();
    let store = SuiteStore::new(dir.path());
    let cfg = SuiteConfig { count: 2, ..Default::default() };
    let ecs = generate_ec_suite(&cfg, 21).unwrap();
    save_suite(&store, &cfg, 21, &ecs, false, false).unwrap();
    let bdm = Bdm::PlaneSpot(PlaneSpotConfig::default());
    let settings = RunSettings::default();

    let first = run_suite(&ecs, &bdm, &settings, Some(&store), 2, false);
    let recs: Vec<RunRecord> = first.iter().map(|j| j.record.as_ref().unwrap().clone().unwrap()).collect();
    assert!(first.iter().all(|j| j.ec.verified()));
    assert_eq!(store.results().unwrap().len(), 2);
    assert!(store.read_manifest(&ecs[0].id).unwrap().verified());
    let ec_dir = store.runs_dir(&ecs[0].id);
    let stem = &recs[0].run_id;
    for ext in ["json", "hypotheses.json", "outputs.csv", "scatter.csv"] {
        assert!(ec_dir.join(format!("{stem}.{ext}")).exists(), "{ext}");
    }

    // Same configuration: served from the store, nothing new written.
    let second = run_suite(&ecs, &bdm, &settings, Some(&store), 1, false);
    for (j, r) in second.iter().zip(&recs) {
        assert_eq!(j.record.as_ref().unwrap().as_ref().unwrap(), r);
    }
    assert_eq!(store.results().unwrap().len(), 2);

    // A forced re-run appends a new record with an identical report.
    let third = run_suite(&ecs[..1], &bdm, &settings, Some(&store), 1, true);
    let rerun = third[0].record.as_ref().unwrap().as_ref().unwrap();
    assert_ne!(rerun.run_id, recs[0].run_id);
    assert_eq!(rerun.report, recs[0].report);
    assert_eq!(store.run_records(&ecs[0].id).unwrap().len(), 2);
    assert_eq!(store.results().unwrap().len(), 3);
    assert!(store.write_record(&recs[0]).is_err());
}

#[test]
fn lock_is_exclusive_until_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let lock = EcLock::acquire(dir.path(), std::time::Duration::from_millis(50)).unwrap();
    assert!(EcLock::acquire(dir.path(), std::time::Duration::from_millis(50)).is_err());
    drop(lock);
    EcLock::acquire(dir.path(), std::time::Duration::from_millis(50)).unwrap();
}

#[test]
fn truth_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let store = SuiteStore::new(dir.path());
    let cfg = SuiteConfig {
        count: 1,
        sizes: SplitSizes { train: 20, val: 10, test: 30 },
        ..Default::default()
    };
    let ecs = generate_ec_suite(&cfg, 4).unwrap();
    save_suite(&store, &cfg, 4, &ecs, true, true).unwrap();
    let test = ecs[0].split(SplitTag::Test, false).unwrap();
    let truth = store.read_truth(&ecs[0].id, "test").unwrap();
    assert_eq!(truth, store::TruthFile::of(&ecs[0], &test));
    let png = store.ec_dir(&ecs[0].id).join("images").join("test");
    assert_eq!(std::fs::read_dir(png).unwrap().count(), 30);
}

fn row(label: &str, dr: &[f64], fdr: Option<&[f64]>) -> SweepRow {
    SweepRow {
        label: label.into(),
        dr: aggregate(dr),
        fdr: fdr.map(aggregate),
    }
}

#[test]
fn select_best_prefers_dr_then_fdr() {
    assert_eq!(select_best(&[]), None);
    assert_eq!(select_best(&[row("only", &[0.1], None)]), Some(0));
    let rows = [
        row("a", &[0.5], Some(&[0.3])),
        row("b", &[0.9], Some(&[0.4])),
        row("c", &[0.9], Some(&[0.2])),
        row("d", &[0.9], None),
    ];
    assert_eq!(select_best(&rows), Some(2));
}

#[test]
fn single_point_sweep_returns_it() {
    let tune = generate_ec_suite(&SuiteConfig { count: 2, ..SuiteConfig::tuning() }, 6).unwrap();
    let grid = SweepPoint::w_grid(&PlaneSpotConfig::default(), &[0.025]);
    let res = sweep(&tune, &grid, &RunSettings::default(), 2, ).unwrap();
    assert_eq!(res.best, 0);
    assert_eq!(res.best_row().label, "w=0.025");
    assert_eq!(res.rows[0].dr.n + res.excluded.len(), 2);
    assert!(sweep(&tune, &[], &RunSettings::default(), 1).is_err());
}

/// A record for `ec` whose hypotheses are exactly the first `hit` truths.
fn fake_entry(ec: &ExperimentConfiguration, hit: usize, salt: u64) -> ReportEntry {
    let truths: Vec<crate::metrics::ImageSet> = (0..ec.blindspots.len() as u64)
        .map(|b| (0..10).map(|i| salt * 1000 + b * 100 + i).collect())
        .collect();
    let th = MetricThresholds::synthetic();
    let hyps: Vec<_> = truths[..hit].to_vec();
    let report = evaluate(&hyps, &truths, &th).unwrap();
    ReportEntry {
        ec: ec.clone(),
        record: RunRecord {
            run_id: format!("r{salt}"),
            ec_id: ec.id.clone(),
            bdm: "planespot".into(),
            config_hash: "0".into(),
            bdm_seed: 0,
            n_hypotheses: hyps.len(),
            hypotheses_file: None,
            untruncated_failures: report.failures.clone(),
            report,
            duration_secs: 0.0,
        },
    }
}

#[test]
fn blindspot_count_grouping_matches_hand_tally() {
    let ecs = small_suite("eval", 30, 17);
    let pick = |m: usize| ecs.iter().filter(move |e| e.blindspots.len() == m);
    let one: Vec<_> = pick(1).take(2).collect();
    let three: Vec<_> = pick(3).take(2).collect();
    assert!(one.len() == 2 && three.len() == 2);
    let entries = vec![
        fake_entry(one[0], 1, 1),
        fake_entry(one[1], 0, 2),
        fake_entry(three[0], 3, 3),
        fake_entry(three[1], 1, 4),
    ];
    // DRs: 1, 0 for one blindspot; 1, 1/3 for three. No 2-blindspot EC: row omitted.
    let tables = report(&entries).unwrap();
    let t = tables.iter().find(|t| t.name == "dr_by_blindspot_count").unwrap();
    assert_eq!(t.column("blindspots").unwrap(), ["1", "3"]);
    let dr: Vec<f64> = t.column("dr").unwrap().iter().map(|v| v.parse().unwrap()).collect();
    assert!((dr[0] - 0.5).abs() < 1e-6);
    assert!((dr[1] - 2.0 / 3.0).abs() < 1e-6);
    assert_eq!(t.column("n").unwrap(), ["2", "2"]);

    let f = tables.iter().find(|t| t.name == "failures").unwrap();
    for r in &f.rows {
        let sum: f64 = r[3..7].iter().map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-5, "{r:?}");
    }
    let per_ec = tables.iter().find(|t| t.name == "per_ec").unwrap();
    assert_eq!(per_ec.rows.len(), 4);
    let dir = tempfile::tempdir().unwrap();
    write_tables(dir.path(), &tables).unwrap();
    assert!(dir.path().join("covered_by_triplets.csv").exists());
}

#[test]
fn report_rejects_empty_and_mismatched_input() {
    assert!(report(&[]).is_err());
    let ecs = small_suite("eval", 2, 17);
    let mut e = fake_entry(&ecs[0], 0, 1);
    e.record.ec_id = ecs[1].id.clone();
    assert!(report(&[e]).is_err());
}

#[test]
fn derived_seeds_differ_between_ecs() {
    let ecs = small_suite("eval", 10, rng::derive(1, "t", 0));
    let seeds: std::collections::BTreeSet<u64> = ecs.iter().map(|e| e.seeds.scenes).collect();
    assert_eq!(seeds.len(), 10);
}
