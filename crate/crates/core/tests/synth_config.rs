use dehash_core::aggregate::compute_bow;
use dehash_core::io::{encode_descriptors, ingest_dataset};
use dehash_core::pipeline::load_or_train_tree;
use dehash_core::synth::{pooled_words, synthesize_dataset, SyntheticSpec};
use dehash_core::vocab::LeafSearch;
use dehash_core::{run_pipeline, Error, ExperimentConfig, Report};

fn small() -> SyntheticSpec {
    SyntheticSpec { num_images: 120, num_queries: 10, ..Default::default() }
}

#[test]
fn generator_is_deterministic() {
    let tree = load_or_train_tree(&ExperimentConfig::default(), None).unwrap();
    let a = synthesize_dataset(&small(), &tree).unwrap();
    let b = synthesize_dataset(&small(), &tree).unwrap();
    for (x, y) in a.images.iter().zip(&b.images) {
        assert_eq!(x.entry, y.entry);
        assert_eq!(encode_descriptors(&x.descriptors).unwrap(), encode_descriptors(&y.descriptors).unwrap());
    }
    let c = synthesize_dataset(&SyntheticSpec { seed: 99, ..small() }, &tree).unwrap();
    assert!(a.images.iter().zip(&c.images).any(|(x, y)| x.descriptors != y.descriptors));
}

#[test]
fn noise_free_bow_equals_sampled_multiset() {
    let tree = load_or_train_tree(&ExperimentConfig::default(), None).unwrap();
    let ds = synthesize_dataset(&small(), &tree).unwrap();
    for im in &ds.images {
        for mode in [LeafSearch::ExhaustiveSubtree, LeafSearch::GreedyPath] {
            assert_eq!(compute_bow(&tree, &im.descriptors, mode).unwrap(), im.sampled, "image {}", im.entry.id);
        }
    }
    for (i, p) in ds.pools.iter().enumerate() {
        for q in &ds.pools[i + 1..] {
            assert!(p.iter().all(|t| !q.contains(t)));
        }
    }
    assert!(pooled_words(&ds).len() <= ds.pools.iter().map(Vec::len).sum());
}

#[test]
fn queries_have_relevant_database_images() {
    let tree = load_or_train_tree(&ExperimentConfig::default(), None).unwrap();
    let ds = synthesize_dataset(&small(), &tree).unwrap();
    let queries: Vec<_> = ds.images.iter().filter(|im| im.entry.is_query()).collect();
    assert_eq!(queries.len(), 10);
    assert_eq!(ds.images.len() - queries.len(), 120);
    for q in queries {
        let rel = q.entry.relevant.as_ref().unwrap();
        assert!(!rel.is_empty());
        for id in rel {
            let db = ds.images.iter().find(|im| im.entry.id == *id && !im.entry.is_query()).unwrap();
            assert_eq!(db.entry.category, q.entry.category);
        }
    }
}

#[test]
fn infeasible_specs_are_rejected() {
    let tree = load_or_train_tree(&ExperimentConfig::default(), None).unwrap();
    let too_many = SyntheticSpec { num_categories: 10_000, ..small() };
    assert!(synthesize_dataset(&too_many, &tree).is_err());
    assert!(synthesize_dataset(&SyntheticSpec { clutter_fraction: 1.5, ..small() }, &tree).is_err());
    assert!(synthesize_dataset(&SyntheticSpec { min_descriptors: 0, ..small() }, &tree).is_err());
}

#[test]
fn written_dataset_reloads_identically() {
    let tree = load_or_train_tree(&ExperimentConfig::default(), None).unwrap();
    let ds = synthesize_dataset(&SyntheticSpec { num_images: 20, num_queries: 3, ..Default::default() }, &tree).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = ds.write(dir.path()).unwrap();
    let loaded = ingest_dataset(&manifest).unwrap();
    let expected = ds.to_dataset();
    assert_eq!(loaded.entries, expected.entries);
    assert_eq!(loaded.descriptors, expected.descriptors);
}

#[test]
fn config_toml_round_trip_and_hash() {
    let cfg = ExperimentConfig::default();
    let text = cfg.to_toml().unwrap();
    assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    assert_eq!(ExperimentConfig::from_toml("").unwrap(), cfg);
    let h = cfg.hash().unwrap();
    assert_eq!(h.len(), 16);
    assert_eq!(h, ExperimentConfig::from_toml(&text).unwrap().hash().unwrap());
    let changed = ExperimentConfig::from_toml("[reconstruction]\nlambda = 0.05\n").unwrap();
    assert_eq!(changed.reconstruction.lambda, 0.05);
    assert_ne!(changed.hash().unwrap(), h);
}

#[test]
fn config_errors() {
    for text in [
        "[tree]\nbranchez = 3\n",
        "bogus = 1\n",
        "[reconstruction]\nalpha = 1.0\n",
        "[reconstruction]\nlambda = -1.0\n",
        "[reconstruction]\ncues = [\"weather\"]\n",
        "[tree]\nvlad_level = 3\nlevels = 3\n",
        "[hashing]\nvariant = \"nope\"\n",
        "[hashing]\nvariant = \"shared\"\nbits = 30\n",
        "modes = [\"bow\", \"teleport\"]\n",
        "[retrieval]\npq_bits = 9\n",
        "[dataset.synthetic]\nsubset_fraction = 0.0\n",
    ] {
        assert!(ExperimentConfig::from_toml(text).is_err(), "{text}");
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "bogus = 1\n").unwrap();
    assert!(ExperimentConfig::load(&path).unwrap_err().to_string().contains("bad.toml"));
    assert!(matches!(ExperimentConfig::from_toml("[tree\n"), Err(Error::Config(_))));
}

#[test]
fn small_report_has_valid_metrics() {
    let mut cfg = ExperimentConfig::default();
    cfg.dataset.synthetic.num_images = 150;
    cfg.dataset.synthetic.num_queries = 8;
    cfg.hashing.bits = 32;
    cfg.modes = ["bow", "vlad", "hamming", "approx-vlad"].map(String::from).to_vec();
    let report = run_pipeline(&cfg).unwrap();
    assert_eq!(report.modes.len(), 4);
    for row in &report.modes {
        assert!((0.0..=1.0).contains(&row.map), "{}: {}", row.mode, row.map);
        assert!((0.0..=1.0).contains(&row.ndcg));
        for w in row.recall.windows(2) {
            assert!(w[0].1 <= w[1].1);
        }
    }
    assert_eq!(report.config_hash, cfg.hash().unwrap());
    // timings are not serialized
    let mut untimed = report.clone();
    untimed.timings.clear();
    assert_eq!(Report::from_json(&report.to_json().unwrap()).unwrap(), untimed);
    assert!(report.summary().contains("approx-vlad"));
}
