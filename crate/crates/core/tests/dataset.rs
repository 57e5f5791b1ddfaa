mod common;

use std::path::PathBuf;

use common::ts;
use tkge_core::dataset::{load_tsv, save_tsv, split, stats, DataSource, DatasetError, DatasetManifest, SplitRatios};
use tkge_core::kg::FilterScope;

fn toy_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/toy")
}

#[test]
fn toy_dataset_statistics() {
    let kg = DatasetManifest::directory(toy_dir()).load(FilterScope::TrainValid).unwrap();
    let s = stats(&kg);
    assert_eq!((s.entities, s.relations), (8, 3));
    assert_eq!((s.train, s.valid, s.test, s.quadruples), (14, 3, 3, 20));
    assert_eq!(s.timestamps, 17);
    assert_eq!(s.first_date, Some(ts(2013, 11, 5)));
    assert_eq!(s.last_date, Some(ts(2022, 10, 3)));
    assert_eq!(s.span_days, 3254);
}

#[test]
fn single_file_split_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = DatasetManifest::directory(toy_dir());
    let mut all = Vec::new();
    for name in ["train.tsv", "valid.tsv", "test.tsv"] {
        all.extend(load_tsv(toy_dir().join(name), &manifest).unwrap());
    }
    let path = dir.path().join("all.tsv");
    save_tsv(&path, &all).unwrap();
    assert_eq!(load_tsv(&path, &manifest).unwrap(), all);

    let ratios = SplitRatios::new(0.7, 0.15, 0.15).unwrap();
    let kg = DatasetManifest::single(&path, ratios, 4).load(FilterScope::TrainValid).unwrap();
    assert_eq!(kg.train().len() + kg.valid().len() + kg.test().len(), all.len());
    for q in kg.valid().iter().chain(kg.test()) {
        assert!(kg.train().iter().any(|t| t.head == q.head || t.tail == q.head));
        assert!(kg.train().iter().any(|t| t.relation == q.relation));
    }

    let again = split(&all, ratios, 4).unwrap();
    let once_more = split(&all, ratios, 4).unwrap();
    assert_eq!(again, once_more);
}

#[test]
fn chronological_split_keeps_train_before_cut() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = DatasetManifest::directory(toy_dir());
    let all = load_tsv(toy_dir().join("train.tsv"), &manifest).unwrap();
    let path = dir.path().join("all.tsv");
    save_tsv(&path, &all).unwrap();
    let cut = ts(2019, 1, 1);
    let source = DataSource::Single {
        path,
        ratios: SplitRatios::default(),
        seed: 0,
        split_by_time: Some(cut),
    };
    let kg = DatasetManifest::with_source(source).load(FilterScope::TrainValid).unwrap();
    for q in kg.valid().iter().chain(kg.test()) {
        assert!(q.time >= cut);
    }
    // Anything after the cut that landed in train was moved there because it
    // mentions a name that never occurs before the cut.
    let early: Vec<_> = all.iter().filter(|q| q.time < cut).collect();
    for q in kg.train().iter().filter(|q| q.time >= cut) {
        let raw = kg.to_raw(q);
        let known = |name: &str| early.iter().any(|e| e.head == name || e.tail == name);
        let known_relation = early.iter().any(|e| e.relation == raw.relation);
        assert!(!(known(&raw.head) && known(&raw.tail) && known_relation), "{raw:?}");
    }
}

#[test]
fn malformed_lines_report_their_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.tsv");
    std::fs::write(&path, "a\tr\tb\t2020-01-01\n# comment\na\tr\t2020-01-01\n").unwrap();
    let err = load_tsv(&path, &DatasetManifest::directory(dir.path())).unwrap_err();
    assert!(matches!(err, DatasetError::Parse { line: 3, .. }));
    assert!(err.to_string().contains("line 3: expected 4 fields, got 3"), "{err}");

    std::fs::write(&path, "a\tr\tb\t2020-13-01\n").unwrap();
    let err = load_tsv(&path, &DatasetManifest::directory(dir.path())).unwrap_err();
    assert!(matches!(err, DatasetError::Parse { line: 1, .. }), "{err}");
}

#[test]
fn test_facts_join_the_filter_on_request() {
    let manifest = DatasetManifest::directory(toy_dir());
    let default = manifest.load(FilterScope::TrainValid).unwrap();
    let all = manifest.load(FilterScope::AllSplits).unwrap();
    assert_eq!(default.filter().len(), 17);
    assert_eq!(all.filter().len(), 20);
    assert!(default.test().iter().all(|q| !default.filter().contains(q)));
    assert!(all.test().iter().all(|q| all.filter().contains(q)));
}
