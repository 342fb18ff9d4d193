mod common;

use queuesense::{extract_all, preprocess_trace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn extract_all_matches_brute_force_on_random_traces() {
    let (mut vectors, mut similar, mut correlated, mut approaching) = (0, 0, 0, 0);
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (packets, cfg) = common::random_case(&mut rng);
        let got = extract_all(&preprocess_trace(&packets, &cfg).unwrap(), &cfg).unwrap();
        let want = common::reference_features(&packets, &cfg);
        if let Some(diff) = common::compare(&got, &want, 1e-9) {
            panic!("seed {seed}: {diff}");
        }
        vectors += got.len();
        similar += got.iter().filter(|v| v.f8).count();
        correlated += got.iter().filter(|v| v.f9.is_some()).count();
        approaching += got.iter().filter(|v| v.f2).count();
    }
    // the generator must exercise every branch worth comparing
    assert!(vectors > 500 && similar > 20 && correlated > 50 && approaching > 5, "{vectors} {similar} {correlated} {approaching}");
}

#[test]
fn reference_pearson_agrees_with_library() {
    let a = [Some(1.0), Some(2.0), Some(3.0), Some(4.0)];
    let b = [Some(2.0), Some(4.0), Some(5.0), Some(9.0)];
    let lib = queuesense::features::pearson(&a, &b, 3).unwrap();
    let reference = common::reference_pearson(&a, &b, 3).unwrap();
    assert!((lib - 11.0 / 130f64.sqrt()).abs() < 1e-12);
    assert!((lib - reference).abs() < 1e-12);
}
