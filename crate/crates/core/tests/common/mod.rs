//! Brute-force reference implementation of the feature pipeline and a
//! generator of small random traces to compare it against.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use queuesense::{AdvertisingPacket, Deployment, DeviceId, FeatureVector, PipelineConfig, SnifferRole};
use rand::Rng;

const ROLES: [SnifferRole; 3] = [SnifferRole::Counter, SnifferRole::Left, SnifferRole::Right];

/// A smoothed sample: bucket start, value, window index.
#[derive(Debug, Clone, Copy)]
struct Sample {
    t_ms: i64,
    value: f64,
    window: i64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn variance(v: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    let m = mean(v);
    Some(v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64)
}

pub fn reference_pearson(a: &[Option<f64>], b: &[Option<f64>], min_paired: usize) -> Option<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..a.len().min(b.len()) {
        if let (Some(x), Some(y)) = (a[i], b[i]) {
            xs.push(x);
            ys.push(y);
        }
    }
    if xs.len() < min_paired || xs.len() < 2 {
        return None;
    }
    if xs.iter().all(|x| *x == xs[0]) || ys.iter().all(|y| *y == ys[0]) {
        return None;
    }
    let (mx, my) = (mean(&xs), mean(&ys));
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    Some(cov / (vx.sqrt() * vy.sqrt()))
}

/// Recomputes every feature vector from raw packets. Mobility similarity
/// checks every peer instead of stopping early.
pub fn reference_features(packets: &[AdvertisingPacket], cfg: &PipelineConfig) -> Vec<FeatureVector> {
    let Some(epoch) = packets.iter().map(|p| p.t_ms).min() else { return Vec::new() };
    let lambda = (cfg.aggregation_s * 1000.0).round() as i64;
    let w = (cfg.window_s * 1000.0).round() as i64;

    let mut raw: BTreeMap<(DeviceId, usize), Vec<(i64, f64)>> = BTreeMap::new();
    for p in packets {
        let r = ROLES.iter().position(|x| *x == p.sniffer.role).unwrap();
        raw.entry((p.device.clone(), r)).or_default().push((p.t_ms, f64::from(p.rssi)));
    }
    let mut streams: BTreeMap<(DeviceId, usize), Vec<Sample>> = BTreeMap::new();
    for (key, mut pk) in raw {
        pk.sort_by_key(|x| x.0);
        let mut buckets: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
        for (t, v) in pk {
            buckets.entry((t - epoch).div_euclid(lambda)).or_default().push(v);
        }
        let mut out = Vec::new();
        let mut prev: Option<f64> = None;
        for (idx, vals) in buckets {
            let x = mean(&vals);
            let o = match prev {
                None => x,
                Some(p) if x < p => cfg.alpha * p + (1.0 - cfg.alpha) * x,
                Some(p) => (1.0 - cfg.alpha) * p + cfg.alpha * x,
            };
            prev = Some(o);
            let t = epoch + idx * lambda;
            out.push(Sample { t_ms: t, value: o, window: (t - epoch).div_euclid(w) });
        }
        streams.insert(key, out);
    }

    let devices: BTreeSet<DeviceId> = streams.keys().map(|(d, _)| d.clone()).collect();
    let last = streams.values().flatten().map(|s| s.window).max().unwrap_or(-1);
    let b = cfg.backtrack as i64;
    let empty: Vec<Sample> = Vec::new();
    let stream = |d: &DeviceId, r: usize| streams.get(&(d.clone(), r));
    let reps = |d: &DeviceId, r: usize, k: i64| -> Vec<Option<f64>> {
        let s = stream(d, r).unwrap_or(&empty);
        (k - b..=k)
            .map(|win| {
                let v: Vec<f64> = s.iter().filter(|x| x.window == win).map(|x| x.value).collect();
                (!v.is_empty()).then(|| mean(&v))
            })
            .collect()
    };

    let mut out = Vec::new();
    for d in &devices {
        for k in b..=last {
            let all: Vec<Vec<Option<f64>>> = (0..3).map(|r| reps(d, r, k)).collect();
            if all.iter().flatten().all(Option::is_none) {
                continue;
            }
            let counter = stream(d, 0).unwrap_or(&empty);
            let cur: Vec<f64> = counter.iter().filter(|x| x.window == k).map(|x| x.value).collect();
            let degenerate = cur.len() < 2;
            let f1 = if degenerate { 0.0 } else { cur[cur.len() - 1] - cur[0] };
            let pooled = |r: usize| -> Option<f64> {
                let v: Vec<f64> = stream(d, r)?
                    .iter()
                    .filter(|x| x.window >= k - b && x.window <= k)
                    .map(|x| x.value)
                    .collect();
                variance(&v)
            };
            let heard: Vec<&Sample> = counter.iter().filter(|x| x.window <= k).collect();
            let f7 = match (heard.iter().map(|x| x.t_ms).min(), heard.iter().map(|x| x.t_ms).max()) {
                (Some(a), Some(z)) => (z - a) as f64 / 1000.0,
                _ => 0.0,
            };
            let f8 = stream(d, 0).is_some() && {
                let hits = devices
                    .iter()
                    .filter(|p| *p != d && stream(p, 0).is_some())
                    .filter(|p| {
                        reference_pearson(&all[0], &reps(p, 0, k), cfg.min_paired_windows).is_some_and(|r| r > cfg.tau_f8)
                    })
                    .count();
                hits >= cfg.peer_count
            };
            out.push(FeatureVector {
                device: d.clone(),
                window: k as usize,
                f1,
                degenerate,
                f2: !degenerate && f1 > cfg.tau_f2,
                f3: !cur.is_empty() && cur.iter().all(|v| *v > cfg.tau_f3),
                f4: pooled(0),
                f5: pooled(1),
                f6: pooled(2),
                f7,
                f8,
                f9: reference_pearson(&all[1], &all[2], cfg.min_paired_windows),
            });
        }
    }
    out
}

/// A small random trace (at most 5 devices and 12 windows) and pipeline
/// settings to go with it.
pub fn random_case<R: Rng>(rng: &mut R) -> (Vec<AdvertisingPacket>, PipelineConfig) {
    let (aggregation_s, window_s) = if rng.random_bool(0.5) { (30.0, 60.0) } else { (10.0, 30.0) };
    let cfg = PipelineConfig {
        aggregation_s,
        window_s,
        alpha: rng.random_range(0.0..=1.0),
        backtrack: rng.random_range(1..=4),
        tau_f2: rng.random_range(0.0..4.0),
        tau_f3: rng.random_range(-70.0..-50.0),
        peer_count: rng.random_range(1..=3),
        tau_f8: rng.random_range(-0.5..0.8),
        min_paired_windows: rng.random_range(2..=4),
    };
    let windows = rng.random_range(3..=12);
    let span_ms = (window_s * 1000.0) as i64 * windows;
    let start = rng.random_range(0..5_000);
    let deployment = Deployment::default();
    let mut packets = Vec::new();
    for d in 0..rng.random_range(1..=5) {
        let device = DeviceId::new(format!("dev{d}")).unwrap();
        let base = rng.random_range(-85.0..-45.0);
        let trend = rng.random_range(-3.0..3.0) / 60_000.0;
        for role in ROLES {
            if !rng.random_bool(0.8) {
                continue;
            }
            let sniffer = deployment.sniffer(role);
            let gap_from = rng.random_range(0..span_ms);
            let gap_to = gap_from + rng.random_range(0..span_ms / 2);
            let mut t = start + rng.random_range(0..3_000);
            while t < start + span_ms {
                if t < gap_from || t >= gap_to {
                    let v: f64 = base + trend * t as f64 + rng.random_range(-6.0..6.0);
                    let rssi = v.round().clamp(-127.0, 0.0) as i16;
                    packets.push(AdvertisingPacket::new(t, sniffer, device.clone(), rssi).unwrap());
                }
                t += rng.random_range(1_000..12_000);
            }
        }
    }
    packets.sort_by(|a, b| a.t_ms.cmp(&b.t_ms).then(a.device.cmp(&b.device)));
    (packets, cfg)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn close_opt(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => close(x, y, tol),
        (None, None) => true,
        _ => false,
    }
}

/// First mismatch between two feature tables, if any.
pub fn compare(got: &[FeatureVector], want: &[FeatureVector], tol: f64) -> Option<String> {
    if got.len() != want.len() {
        return Some(format!("{} vectors, expected {}", got.len(), want.len()));
    }
    for (g, w) in got.iter().zip(want) {
        let same = g.device == w.device
            && g.window == w.window
            && close(g.f1, w.f1, tol)
            && g.degenerate == w.degenerate
            && g.f2 == w.f2
            && g.f3 == w.f3
            && close_opt(g.f4, w.f4, tol)
            && close_opt(g.f5, w.f5, tol)
            && close_opt(g.f6, w.f6, tol)
            && close(g.f7, w.f7, tol)
            && g.f8 == w.f8
            && close_opt(g.f9, w.f9, tol);
        if !same {
            return Some(format!("got {g:?}\nexpected {w:?}"));
        }
    }
    None
}
