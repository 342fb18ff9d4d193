mod common;

use proptest::prelude::*;
use queuesense::model::partition_into_windows;
use queuesense::preprocess::aggregate;
use queuesense::{desf, extract_all, preprocess_trace, AdvertisingPacket, Deployment, DeviceId, RssiSample, SnifferRole};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn case(seed: u64) -> (Vec<AdvertisingPacket>, queuesense::PipelineConfig) {
    common::random_case(&mut ChaCha8Rng::seed_from_u64(seed))
}

fn features(packets: &[AdvertisingPacket], cfg: &queuesense::PipelineConfig) -> Vec<queuesense::FeatureVector> {
    extract_all(&preprocess_trace(packets, cfg).unwrap(), cfg).unwrap()
}

fn series(values: &[f64]) -> Vec<RssiSample> {
    values.iter().enumerate().map(|(i, &v)| RssiSample::new(i as i64 * 30_000, v)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn feature_ranges_hold(seed in any::<u64>()) {
        let (packets, cfg) = case(seed);
        for v in features(&packets, &cfg) {
            if v.f2 {
                prop_assert!(v.f1 > cfg.tau_f2);
            }
            if let Some(r) = v.f9 {
                prop_assert!((-1.0..=1.0).contains(&r));
            }
            for var in [v.f4, v.f5, v.f6].into_iter().flatten() {
                prop_assert!(var >= 0.0);
            }
            prop_assert!(v.f7 >= 0.0);
            prop_assert!(v.window >= cfg.backtrack);
        }
    }

    #[test]
    fn rssi_shift_only_moves_near_counter(seed in any::<u64>(), shift in 1i16..15) {
        let (packets, cfg) = case(seed);
        prop_assume!(packets.iter().all(|p| p.rssi - shift >= -127));
        let shifted: Vec<_> = packets.iter().map(|p| AdvertisingPacket { rssi: p.rssi - shift, ..p.clone() }).collect();
        let a = features(&packets, &cfg);
        let b = features(&shifted, &cfg);
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.f1 - y.f1).abs() < 1e-9);
            prop_assert_eq!(x.f2, y.f2);
            for (p, q) in [(x.f4, y.f4), (x.f5, y.f5), (x.f6, y.f6), (x.f9, y.f9)] {
                match (p, q) {
                    (Some(p), Some(q)) => prop_assert!((p - q).abs() < 1e-9),
                    (p, q) => prop_assert_eq!(p.is_some(), q.is_some()),
                }
            }
            prop_assert_eq!(x.f7, y.f7);
            prop_assert_eq!(x.f8, y.f8);
            // a lower signal can only stop looking near the counter
            prop_assert!(!y.f3 || x.f3);
        }
    }

    #[test]
    fn extraction_is_deterministic(seed in any::<u64>()) {
        let (packets, cfg) = case(seed);
        prop_assert_eq!(features(&packets, &cfg), features(&packets, &cfg));
    }

    #[test]
    fn desf_stays_within_input_range(values in prop::collection::vec(-127.0f64..0.0, 1..60), alpha in 0.0f64..=1.0) {
        let out = desf(&series(&values), alpha);
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(out.len(), values.len());
        for s in out {
            prop_assert!(s.value >= lo - 1e-9 && s.value <= hi + 1e-9);
        }
    }

    #[test]
    fn desf_fixes_constant_input(v in -127.0f64..0.0, n in 1usize..40, alpha in 0.0f64..=1.0) {
        prop_assert!(desf(&series(&vec![v; n]), alpha).iter().all(|s| s.value == v));
    }

    #[test]
    fn windows_partition_samples(times in prop::collection::btree_set(0i64..600_000, 0..50), w in 1i64..120_000) {
        let samples: Vec<RssiSample> = times.iter().map(|&t| RssiSample::new(t, -60.0)).collect();
        let windows = partition_into_windows(&samples, w, 0).unwrap();
        let flat: Vec<RssiSample> = windows.values().flatten().copied().collect();
        prop_assert_eq!(flat, samples);
        for (k, win) in &windows {
            for s in win {
                prop_assert!(s.t_ms >= *k as i64 * w && s.t_ms < (*k as i64 + 1) * w);
            }
        }
    }

    #[test]
    fn aggregating_one_packet_per_bucket_is_identity(buckets in prop::collection::btree_set(0i64..100, 1..30), rssi in -100i16..-30) {
        let sn = Deployment::default().sniffer(SnifferRole::Counter);
        let dev = DeviceId::new("d").unwrap();
        let packets: Vec<_> = buckets.iter().map(|&b| AdvertisingPacket::new(b * 30_000, sn, dev.clone(), rssi).unwrap()).collect();
        let once = aggregate(&packets, 30_000, 0).unwrap();
        prop_assert_eq!(once.len(), packets.len());
        for (s, p) in once.iter().zip(&packets) {
            prop_assert_eq!(s.t_ms, p.t_ms);
            prop_assert_eq!(s.value, f64::from(p.rssi));
        }
    }
}

#[test]
fn desf_reduces_variance_of_noisy_trace() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let values: Vec<f64> = (0..500).map(|_| -65.0 + rng.random_range(-8.0..8.0)).collect();
    let var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
    };
    let smoothed: Vec<f64> = desf(&series(&values), 0.9).iter().map(|s| s.value).collect();
    assert!(var(&smoothed) < var(&values) / 2.0);
}
