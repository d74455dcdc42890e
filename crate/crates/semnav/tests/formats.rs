use proptest::prelude::*;
use semnav::bundled;
use semnav::formats::{export_triples, import_triples, parse_classes, parse_corpus, read_trace, write_trace, FormatError, TRIPLES_HEADER};
use semnav::harness::{run_one, Policy};
use semnav_core::knowledge::{ingest_corpus, BetaMode, KnowledgeParams, SceneGraph, SceneObject, TripleStore};
use semnav_core::perception::ClassTable;

fn classes() -> ClassTable {
    parse_classes("classes", bundled::CLASSES).unwrap()
}

fn shipped_store() -> TripleStore {
    let corpus = parse_corpus("corpus", bundled::CORPUS).unwrap();
    ingest_corpus(&corpus, KnowledgeParams::default(), &classes()).unwrap()
}

const NAMES: [&str; 6] = ["cup", "bottle", "table", "chair", "tv", "sofa"];

/// Objects as (name index, x, y, w, h) plus an optional zone index.
type RawScene = (Vec<(usize, f64, f64, f64, f64)>, Option<u8>);

fn scene() -> impl Strategy<Value = RawScene> {
    let o = (0..NAMES.len(), 0.0..=1.0f64, 0.0..=1.0f64, 0.01..0.5f64, 0.01..0.5f64);
    (prop::collection::vec(o, 0..6), prop::option::of(0..3u8))
}

fn graph(i: usize, raw: &RawScene) -> SceneGraph {
    SceneGraph {
        scene_id: format!("g{i}"),
        objects: raw
            .0
            .iter()
            .map(|&(c, x, y, w, h)| SceneObject { class_name: NAMES[c].into(), centroid: [x, y], size: [w, h] })
            .collect(),
        zone_label: raw.1.map(|z| format!("zone{z}")),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn export_import_round_trip(
        corpus in prop::collection::vec(scene(), 1..8),
        online in prop::collection::vec(scene(), 0..3),
        density in prop::bool::ANY,
        lambda in 0.05..2.0f64,
    ) {
        let p = KnowledgeParams {
            beta_mode: if density { BetaMode::Density } else { BetaMode::Fixed },
            lambda,
            ..KnowledgeParams::default()
        };
        let corpus: Vec<SceneGraph> = corpus.iter().enumerate().map(|(i, g)| graph(i, g)).collect();
        let mut store = ingest_corpus(&corpus, p, &classes()).unwrap();
        for (i, g) in online.iter().enumerate() {
            store.add_online_scene(&graph(100 + i, g));
        }
        let text = export_triples(&store);
        let back = import_triples(&text).unwrap();
        prop_assert_eq!(back.stats(), store.stats());
        prop_assert_eq!(back.params(), store.params());
        prop_assert_eq!(back.facts(), store.facts());
        prop_assert_eq!(export_triples(&back), text);
    }
}

#[test]
fn empty_store_is_header_only() {
    let store = TripleStore::empty(KnowledgeParams::default(), &classes()).unwrap();
    assert_eq!(export_triples(&store), format!("{TRIPLES_HEADER}\n"));
    let back = import_triples(&export_triples(&store)).unwrap();
    assert!(back.facts().is_empty());
}

#[test]
fn shipped_corpus_cup_table_line() {
    let store = shipped_store();
    let text = export_triples(&store);
    let line = text.lines().find(|l| l.starts_with("coLocatedWith cup table ")).expect("cup/table fact");
    assert!(line.ends_with(" src=corpus"), "{line}");
    let p: f64 = line.split_whitespace().find_map(|t| t.strip_prefix("p=")).unwrap().parse().unwrap();
    assert_eq!(p, store.rp("cup", "table").unwrap());
    assert!(p > 0.0);
    let facts: Vec<&str> = text.lines().filter(|l| !l.starts_with('#') && !l.starts_with('@')).collect();
    let mut sorted = facts.clone();
    sorted.sort();
    assert_eq!(facts, sorted);
}

#[test]
fn import_errors_carry_line_numbers() {
    let text = export_triples(&shipped_store());
    let err = import_triples("not a header\n").unwrap_err();
    assert!(matches!(err, FormatError::Triples { line: 1, .. }), "{err}");

    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let at = lines.iter().position(|l| l.starts_with("coLocatedWith ")).unwrap();
    lines[at] = lines[at].replace(" p=", " p=0.123456789");
    let err = import_triples(&lines.join("\n")).unwrap_err();
    assert!(matches!(err, FormatError::Triples { line, .. } if line == at + 1), "{err}");

    let err = import_triples(&format!("{TRIPLES_HEADER}\n@bogus x\n")).unwrap_err();
    assert!(matches!(err, FormatError::Triples { line: 2, .. }), "{err}");
}

#[test]
fn traces_round_trip() {
    let cfg = semnav::config::RunConfig::default();
    let r = run_one(&cfg.prepare().unwrap(), Policy::Agent, 0).unwrap();
    let mut buf = Vec::new();
    write_trace(&mut buf, &r.trace).unwrap();
    assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), r.trace.len());
    assert_eq!(read_trace(&buf[..]).unwrap(), r.trace);
    let err = read_trace(&b"{\"step_index\": 0}\n"[..]).unwrap_err();
    assert!(matches!(err, FormatError::Trace { line: 1, .. }), "{err}");
}
