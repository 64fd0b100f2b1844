mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{brute_average_precision, brute_ranking, ids};
use dehash_core::aggregate::{normalize_vlad, BowHistogram, Normalization, VladVector};
use dehash_core::hashing::BinaryCode;
use dehash_core::io::{format_ranking_dump, parse_ranking_dump};
use dehash_core::retrieval::{
    average_precision, haversine, ndcg, rank_adc, rank_bow, rank_bow_inverted, rank_gps, rank_hamming, rank_vlad,
    simulate_gps, train_pq, DatabaseIndex, GeoPoint, ImageId, IndexedImage, Ranking,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DIM: usize = 4;
const CENTERS: usize = 3;
const VOCAB: usize = 12;
const BITS: usize = 16;

fn random_bow(rng: &mut ChaCha8Rng) -> BowHistogram {
    let n = rng.random_range(1..6);
    BowHistogram::from_entries(VOCAB, (0..n).map(|_| (rng.random_range(0..VOCAB as u32), rng.random_range(1..4) as f64))).unwrap()
}

fn random_vlad(rng: &mut ChaCha8Rng) -> VladVector {
    let vals = (0..DIM * CENTERS).map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(-1.0..1.0) }).collect();
    VladVector::from_values(DIM, CENTERS, vals, Normalization::None).unwrap()
}

fn random_code(rng: &mut ChaCha8Rng) -> BinaryCode {
    BinaryCode::from_bits((0..BITS).map(|_| rng.random_bool(0.5)))
}

fn database(seed: u64, n: usize, norm: Normalization) -> DatabaseIndex {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // shuffled ids so the index has to sort them
    let mut idv: Vec<u32> = (0..n as u32).map(|i| i * 3 + 1).collect();
    for i in (1..idv.len()).rev() {
        idv.swap(i, rng.random_range(0..=i));
    }
    let images = idv
        .into_iter()
        .map(|id| IndexedImage {
            id: ImageId(id),
            bow: Some(random_bow(&mut rng)),
            vlad: Some(random_vlad(&mut rng)),
            code: Some(random_code(&mut rng)),
            gps: Some(GeoPoint::new(rng.random_range(-60.0..60.0), rng.random_range(-170.0..170.0)).unwrap()),
            ..Default::default()
        })
        .collect();
    DatabaseIndex::new(images, norm).unwrap()
}

fn dense_l1(h: &BowHistogram) -> Vec<f64> {
    let mass: f64 = h.iter().map(|(_, w)| w).sum();
    let mut d = vec![0.0; VOCAB];
    for (t, w) in h.iter() {
        d[t as usize] = w / mass;
    }
    d
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Scores agree with the oracle and the order is (score, id).
fn check(ranking: &Ranking, oracle: &BTreeMap<u32, f64>, tol: f64) {
    assert_eq!(ranking.len(), oracle.len());
    for e in ranking.entries() {
        assert!((e.score - oracle[&e.id.0]).abs() <= tol, "image {}: {} vs {}", e.id, e.score, oracle[&e.id.0]);
    }
    let ours: Vec<(u32, f64)> = ranking.entries().iter().map(|e| (e.id.0, e.score)).collect();
    assert_eq!(ids(ranking), brute_ranking(ours));
}

#[test]
fn bow_rankings_match_dense_l1() {
    let index = database(1, 60, Normalization::None);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..30 {
        let q = random_bow(&mut rng);
        let qd = dense_l1(&q);
        let oracle: BTreeMap<u32, f64> = index
            .images()
            .iter()
            .map(|im| {
                let d = dense_l1(im.bow.as_ref().unwrap());
                (im.id.0, qd.iter().zip(&d).map(|(a, b)| (a - b).abs()).sum())
            })
            .collect();
        let linear = rank_bow(&index, &q).unwrap();
        let inverted = rank_bow_inverted(&index, &q).unwrap();
        check(&linear, &oracle, 1e-12);
        check(&inverted, &oracle, 1e-12);
        for (a, b) in linear.entries().iter().zip(inverted.entries()) {
            assert!((a.score - b.score).abs() < 1e-12);
        }
    }
}

#[test]
fn inverted_file_equals_linear_scan_on_integer_histograms() {
    // equal-mass histograms make every score a multiple of 1/mass, so ties are exact
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let images = (0..40)
        .map(|i| IndexedImage {
            id: ImageId(i),
            bow: Some(BowHistogram::from_entries(VOCAB, (0..4).map(|_| (rng.random_range(0..VOCAB as u32), 1.0))).unwrap()),
            ..Default::default()
        })
        .collect();
    let index = DatabaseIndex::new(images, Normalization::None).unwrap();
    for _ in 0..30 {
        let q = BowHistogram::from_entries(VOCAB, (0..4).map(|_| (rng.random_range(0..VOCAB as u32), 1.0))).unwrap();
        assert_eq!(ids(&rank_bow(&index, &q).unwrap()), ids(&rank_bow_inverted(&index, &q).unwrap()));
    }
}

#[test]
fn empty_query_ranks_by_id() {
    let index = database(4, 10, Normalization::None);
    let r = rank_bow(&index, &BowHistogram::new(VOCAB)).unwrap();
    assert!(r.degenerate);
    let expected: Vec<u32> = index.images().iter().map(|im| im.id.0).collect();
    assert_eq!(ids(&r), expected);
}

#[test]
fn vlad_ranking_matches_normalized_l2() {
    for norm in [Normalization::None, Normalization::GlobalL2, Normalization::IntraThenGlobalL2] {
        let index = database(5, 50, norm);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let q = random_vlad(&mut rng);
            let qn = normalize_vlad(&q, norm);
            let oracle = index
                .images()
                .iter()
                .map(|im| (im.id.0, l2(qn.values(), normalize_vlad(im.vlad.as_ref().unwrap(), norm).values())))
                .collect();
            check(&rank_vlad(&index, &q).unwrap(), &oracle, 1e-12);
        }
    }
}

#[test]
fn hamming_ranking_counts_differing_bits() {
    let index = database(7, 80, Normalization::None);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let q = random_code(&mut rng);
        let oracle = index
            .images()
            .iter()
            .map(|im| (im.id.0, im.code.as_ref().unwrap().iter().zip(q.iter()).filter(|(a, b)| a != b).count() as f64))
            .collect();
        check(&rank_hamming(&index, &q).unwrap(), &oracle, 0.0);
    }
    assert!(rank_hamming(&index, &BinaryCode::zeros(BITS + 1)).is_err());
}

#[test]
fn adc_ranking_matches_codeword_distances() {
    let index = database(9, 60, Normalization::GlobalL2);
    let vlads: Vec<VladVector> = index.images().iter().map(|im| im.vlad.clone().unwrap()).collect();
    let normalized: Vec<VladVector> = vlads.iter().map(|v| normalize_vlad(v, Normalization::GlobalL2)).collect();
    let pq = train_pq(&normalized, 3, 3, 1).unwrap();
    let index = index.with_pq(pq.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..20 {
        let q = random_vlad(&mut rng);
        let qn = normalize_vlad(&q, Normalization::GlobalL2);
        let sub = pq.sub_dim();
        let oracle = index
            .images()
            .iter()
            .map(|im| {
                let code = im.pq_code.as_ref().unwrap();
                let d: f64 = (0..pq.num_subspaces())
                    .map(|j| {
                        let c = pq.center(j, code[j] as usize);
                        qn.values()[j * sub..(j + 1) * sub].iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
                    })
                    .sum();
                (im.id.0, d)
            })
            .collect();
        check(&rank_adc(&index, &q, &pq).unwrap(), &oracle, 1e-12);
    }
}

#[test]
fn gps_ranking_with_zero_noise_puts_truth_first() {
    let index = database(11, 40, Normalization::None);
    for im in index.images() {
        let g = im.gps.unwrap();
        assert_eq!(simulate_gps(g, 0.0, 3).unwrap(), g);
        let r = rank_gps(&index, g).unwrap();
        assert_eq!(r.entries()[0].id, im.id);
        assert_eq!(r.entries()[0].score, 0.0);
    }
}

#[test]
fn gps_noise_has_rayleigh_mean() {
    let sigma = 50.0;
    let truth = GeoPoint::new(48.85, 2.35).unwrap();
    let n = 20_000;
    let mean = (0..n).map(|s| haversine(truth, simulate_gps(truth, sigma, s).unwrap())).sum::<f64>() / n as f64;
    let expected = sigma * (std::f64::consts::PI / 2.0).sqrt();
    assert!((mean / expected - 1.0).abs() < 0.03, "{mean} vs {expected}");
    assert!(simulate_gps(truth, -1.0, 0).is_err());
    assert!(GeoPoint::new(91.0, 0.0).is_err());
}

#[test]
fn metric_spot_values() {
    let r = Ranking::from_scored(vec![(ImageId(5), 0.1), (ImageId(2), 0.2), (ImageId(9), 0.3), (ImageId(1), 0.4)]);
    let rel = BTreeSet::from([ImageId(2), ImageId(1)]);
    // hits at ranks 2 and 4
    assert!((average_precision(&r, &rel).unwrap() - 0.5).abs() < 1e-15);
    let order = ids(&r);
    assert!((brute_average_precision(&order, &BTreeSet::from([2, 1])) - 0.5).abs() < 1e-15);
    assert_eq!(ndcg(1), 1.0);
    assert!((ndcg(3) - 0.5).abs() < 1e-15);
    assert!(average_precision(&r, &BTreeSet::new()).is_err());
}

#[test]
fn ranking_dump_round_trip() {
    let index = database(12, 25, Normalization::IntraThenGlobalL2);
    let q = random_vlad(&mut ChaCha8Rng::seed_from_u64(13));
    let r = rank_vlad(&index, &q).unwrap();
    let parsed = parse_ranking_dump(&format_ranking_dump(ImageId(77), &r)).unwrap();
    assert_eq!(parsed.len(), r.len());
    for (i, (e, (qid, id, rank, score))) in r.entries().iter().zip(parsed).enumerate() {
        assert_eq!((qid, id, rank, score), (ImageId(77), e.id, i + 1, e.score));
    }
    assert!(parse_ranking_dump("1 2 x 0.5\n").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bow_distance_is_a_metric_in_range(seed in any::<u64>()) {
        let index = database(seed, 8, Normalization::None);
        let q = random_bow(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        for e in rank_bow(&index, &q).unwrap().entries() {
            prop_assert!((-1e-12..=2.0 + 1e-12).contains(&e.score));
        }
        let own = index.images()[0].bow.clone().unwrap();
        let r = rank_bow(&index, &own).unwrap();
        prop_assert!(r.entries()[0].score.abs() < 1e-12);
    }
}
