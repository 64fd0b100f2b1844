use std::sync::OnceLock;

use dehash_core::hashing::BinaryCode;
use dehash_core::io::{
    decode_code, decode_descriptors, decode_hashing_model, decode_index, decode_tree, encode_code, encode_descriptors,
    encode_hashing_model, encode_index, encode_tree, format_manifest, parse_manifest, read_index, read_tree, wire_decode,
    wire_encode, write_index, write_tree,
};
use dehash_core::pipeline::{prepare_experiment, Experiment};
use dehash_core::reconstruct::ContextTag;
use dehash_core::retrieval::{GeoPoint, ImageId};
use dehash_core::vocab::DescriptorSet;
use dehash_core::{Error, ExperimentConfig};
use proptest::prelude::*;

fn experiment() -> &'static Experiment {
    static EXP: OnceLock<Experiment> = OnceLock::new();
    EXP.get_or_init(|| {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset.synthetic.num_images = 60;
        cfg.dataset.synthetic.num_queries = 4;
        cfg.hashing.bits = 32;
        prepare_experiment(&cfg).unwrap()
    })
}

/// Every encoded artifact used by the corruption tests.
fn artifacts() -> Vec<(&'static str, Vec<u8>)> {
    let exp = experiment();
    let code = exp.queries[0].code.clone();
    let ctx = ContextTag { gps: Some(GeoPoint::new(51.5, -0.1).unwrap()), category: Some(3), binary_ranking: None };
    let desc = DescriptorSet::from_rows(2, &[vec![1.0, 2.0], vec![3.0, -4.5]]).unwrap();
    vec![
        ("tree", encode_tree(&exp.tree).unwrap()),
        ("model", encode_hashing_model(&exp.model).unwrap()),
        ("code", encode_code(&code).unwrap()),
        ("wire", wire_encode(&code, &ctx).unwrap()),
        ("index", encode_index(&exp.index).unwrap()),
        ("descriptors", encode_descriptors(&desc).unwrap()),
    ]
}

fn decode(kind: &str, bytes: &[u8]) -> Result<Vec<u8>, Error> {
    match kind {
        "tree" => encode_tree(&decode_tree(bytes)?),
        "model" => encode_hashing_model(&decode_hashing_model(bytes)?),
        "code" => encode_code(&decode_code(bytes)?),
        "wire" => {
            let (c, ctx) = wire_decode(bytes)?;
            wire_encode(&c, &ctx)
        }
        "index" => encode_index(&decode_index(bytes)?),
        "descriptors" => encode_descriptors(&decode_descriptors(bytes)?),
        _ => unreachable!(),
    }
}

#[test]
fn every_format_round_trips_bytewise() {
    for (kind, bytes) in artifacts() {
        assert_eq!(decode(kind, &bytes).unwrap(), bytes, "{kind}");
    }
    let exp = experiment();
    assert_eq!(decode_tree(&encode_tree(&exp.tree).unwrap()).unwrap().leaf_centers(), exp.tree.leaf_centers());
    assert_eq!(decode_hashing_model(&encode_hashing_model(&exp.model).unwrap()).unwrap(), exp.model);
    let index = decode_index(&encode_index(&exp.index).unwrap()).unwrap();
    assert_eq!(index.images(), exp.index.images());
    assert_eq!(index.normalization(), exp.index.normalization());
    assert_eq!(index.pq(), exp.index.pq());
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let exp = experiment();
    write_tree(&dir.path().join("t.bin"), &exp.tree).unwrap();
    let tree = read_tree(&dir.path().join("t.bin")).unwrap();
    assert_eq!(encode_tree(&tree).unwrap(), encode_tree(&exp.tree).unwrap());
    write_index(&dir.path().join("nested/i.bin"), &exp.index).unwrap();
    assert_eq!(read_index(&dir.path().join("nested/i.bin")).unwrap().images(), exp.index.images());
    let err = read_tree(&dir.path().join("missing.bin")).unwrap_err().to_string();
    assert!(err.contains("missing.bin"), "{err}");
}

#[test]
fn wrong_magic_and_trailing_bytes_are_rejected() {
    for (kind, bytes) in artifacts() {
        let mut bad = bytes.clone();
        bad[0] ^= 0xff;
        assert!(matches!(decode(kind, &bad), Err(Error::Format { offset: 0, .. })), "{kind}");
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode(kind, &long), Err(Error::Format { .. })), "{kind}");
    }
    // a tree file is not a model file
    let tree = encode_tree(&experiment().tree).unwrap();
    assert!(decode_hashing_model(&tree).is_err());
}

#[test]
fn wire_payload_flags() {
    let code = BinaryCode::from_bits([true, false, true]);
    let bare = wire_encode(&code, &ContextTag::default()).unwrap();
    // magic, K, one packed byte, flags
    assert_eq!(bare.len(), 8 + 4 + 1 + 1);
    assert_eq!(wire_decode(&bare).unwrap(), (code.clone(), ContextTag::default()));
    let mut unknown = bare.clone();
    *unknown.last_mut().unwrap() = 0x80;
    match wire_decode(&unknown) {
        Err(Error::Format { offset, .. }) => assert_eq!(offset, 13),
        other => panic!("{other:?}"),
    }
    let mut announced = bare;
    *announced.last_mut().unwrap() = 0x01;
    assert!(wire_decode(&announced).is_err());
}

#[test]
fn manifest_round_trip_and_errors() {
    let text = "# comment\n1\tdesc/1.bin\t51.5\t-0.1\t3\t-\n2\tdesc/2.bin\t-\t-\t-\t-\n\n9\tq.bin\t51.6\t-0.2\t3\t1,2\n";
    let entries = parse_manifest(text).unwrap();
    assert_eq!(entries.len(), 3);
    assert_eq!(entries[2].relevant, Some(vec![ImageId(1), ImageId(2)]));
    assert!(entries[2].is_query() && !entries[0].is_query());
    assert_eq!(parse_manifest(&format_manifest(&entries)).unwrap(), entries);

    let offset = |t: &str| match parse_manifest(t) {
        Err(Error::Format { offset, .. }) => offset,
        other => panic!("{other:?}"),
    };
    assert_eq!(offset("1\ta\t-\t-\t-\n"), 0);
    assert_eq!(offset("1\ta\t-\t-\t-\t-\nx\tb\t-\t-\t-\t-\n"), 12);
    assert_eq!(offset("1\ta\t-\t-\t-\t-\n1\tb\t-\t-\t-\t-\n"), 12);
    assert_eq!(offset("1\ta\t95\t0\t-\t-\n"), 4);
    assert_eq!(offset("1\ta\t5\t-\t-\t-\n"), 4);
    assert_eq!(offset("1\ta\t-\t-\tcat\t-\n"), 8);
    assert_eq!(offset("1\ta\t-\t-\t-\t2,z\n"), 10);
    assert_eq!(offset("1\t-\t-\t-\t-\t-\n"), 2);
    assert!(matches!(parse_manifest("# nothing\n"), Err(Error::EmptyInput(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn truncation_never_panics(pick in 0usize..6, frac in 0.0f64..1.0) {
        let (kind, bytes) = artifacts().swap_remove(pick);
        let cut = ((bytes.len() as f64) * frac) as usize;
        prop_assert!(decode(kind, &bytes[..cut]).is_err());
    }

    #[test]
    fn corruption_never_panics(pick in 0usize..6, flips in proptest::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 1..8)) {
        let (kind, mut bytes) = artifacts().swap_remove(pick);
        for (i, x) in flips {
            let at = i.index(bytes.len());
            bytes[at] ^= x;
        }
        // either a clean error or a value that re-encodes
        if let Ok(out) = decode(kind, &bytes) {
            prop_assert!(decode(kind, &out).is_ok());
        }
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..200), pick in 0usize..6) {
        let kind = ["tree", "model", "code", "wire", "index", "descriptors"][pick];
        let _ = decode(kind, &bytes);
    }
}
