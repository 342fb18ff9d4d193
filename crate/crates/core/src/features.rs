//! The nine per-(device, window) features.
//!
//! Single-device features (f1..f7) come from each device's own streams,
//! mobility similarity (f8) compares a device's counter-sniffer trajectory
//! against its peers, and mobility correlation (f9) compares the two flank
//! sniffers' views of the same device.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{DeviceId, FeatureVector, PipelineConfig, RssiSample, SnifferRole, WindowedStream};

/// f1: last minus first sample value in the window. Windows with fewer
/// than two samples yield `(0.0, true)`.
pub fn accumulated_slope(window: &[RssiSample]) -> (f64, bool) {
    match window {
        [first, .., last] => (last.value - first.value, false),
        _ => (0.0, true),
    }
}

/// f2: the accumulated slope strictly exceeds `tau`.
pub fn approaching_counter(window: &[RssiSample], tau: f64) -> bool {
    let (slope, degenerate) = accumulated_slope(window);
    !degenerate && slope > tau
}

/// f3: every sample strictly exceeds `tau`. False for an empty window.
pub fn near_counter(window: &[RssiSample], tau: f64) -> bool {
    !window.is_empty() && window.iter().all(|s| s.value > tau)
}

/// Population variance; `None` with fewer than two values.
pub fn population_variance<I: IntoIterator<Item = f64>>(values: I) -> Option<f64> {
    let v: Vec<f64> = values.into_iter().collect();
    if v.len() < 2 {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    Some(v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n)
}

/// f7: seconds between the first sample ever heard and the latest sample
/// heard up to the end of window `k`.
pub fn stay_duration(stream: Option<&WindowedStream>, k: usize) -> f64 {
    let Some(stream) = stream else { return 0.0 };
    let mut it = stream.samples_between(0, k);
    let Some(first) = it.next() else { return 0.0 };
    let last = it.last().unwrap_or(first);
    (last.t_ms - first.t_ms) as f64 / 1000.0
}

/// Mean sample value of a window, used to align correlation sequences.
pub fn window_representative(window: &[RssiSample]) -> Option<f64> {
    if window.is_empty() {
        None
    } else {
        Some(window.iter().map(|s| s.value).sum::<f64>() / window.len() as f64)
    }
}

/// Pearson correlation over positions where both sequences have a value.
/// `None` when fewer than `min_paired` positions pair up or either side is constant.
pub fn pearson(a: &[Option<f64>], b: &[Option<f64>], min_paired: usize) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .unzip();
    if xs.len() < min_paired.max(2) {
        return None;
    }
    let constant = |v: &[f64]| v.iter().all(|x| *x == v[0]);
    if constant(&xs) || constant(&ys) {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let denom = (sxx * syy).sqrt();
    if denom == 0.0 {
        return None;
    }
    Some((sxy / denom).clamp(-1.0, 1.0))
}

fn role_slot(role: SnifferRole) -> usize {
    match role {
        SnifferRole::Counter => 0,
        SnifferRole::Left => 1,
        SnifferRole::Right => 2,
    }
}

/// One device's streams viewed over windows `k-b..=k`.
#[derive(Debug, Clone)]
pub struct BacktrackContext<'a> {
    pub device: &'a DeviceId,
    pub window: usize,
    pub depth: usize,
    streams: [Option<&'a WindowedStream>; 3],
    representatives: [Vec<Option<f64>>; 3],
}

impl<'a> BacktrackContext<'a> {
    pub fn new(device: &'a DeviceId, streams: [Option<&'a WindowedStream>; 3], window: usize, depth: usize) -> Self {
        let representatives = streams.map(|s| {
            (0..=depth)
                .map(|i| {
                    let pos = window as isize - depth as isize + i as isize;
                    match (s, usize::try_from(pos)) {
                        (Some(s), Ok(k)) => window_representative(s.window(k)),
                        _ => None,
                    }
                })
                .collect()
        });
        BacktrackContext { device, window, depth, streams, representatives }
    }

    pub fn stream(&self, role: SnifferRole) -> Option<&'a WindowedStream> {
        self.streams[role_slot(role)]
    }

    /// Per-window mean RSSI over `k-b..=k`, oldest first.
    pub fn representatives(&self, role: SnifferRole) -> &[Option<f64>] {
        &self.representatives[role_slot(role)]
    }

    fn first_window(&self) -> usize {
        self.window.saturating_sub(self.depth)
    }

    /// f4/f5/f6: population variance of every sample the sniffer heard from
    /// this device across the backtracked windows.
    pub fn stability(&self, role: SnifferRole) -> Option<f64> {
        let s = self.stream(role)?;
        population_variance(s.samples_between(self.first_window(), self.window).map(|x| x.value))
    }

    /// f9: correlation between the left and right sniffers' sequences.
    pub fn mobility_correlation(&self, min_paired: usize) -> Option<f64> {
        pearson(self.representatives(SnifferRole::Left), self.representatives(SnifferRole::Right), min_paired)
    }

    /// Whether any sniffer heard the device within the backtracked span.
    pub fn observed(&self) -> bool {
        self.representatives.iter().flatten().any(Option::is_some)
    }
}

/// A peer considered for mobility similarity, with its counter-sniffer
/// stability used for ordering.
#[derive(Debug, Clone)]
pub struct Peer<'a> {
    pub device: &'a DeviceId,
    pub stability: Option<f64>,
    pub sequence: &'a [Option<f64>],
}

/// Orders peers most-stable first; peers without a variance go last.
pub fn sort_peers(peers: &mut [Peer<'_>]) {
    peers.sort_by(|a, b| match (a.stability, b.stability) {
        (Some(x), Some(y)) => x.total_cmp(&y).then_with(|| a.device.cmp(b.device)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.device.cmp(b.device),
    });
}

/// f8: scans the sorted peers and stops as soon as `m` of them correlate
/// with the target above `tau`.
pub fn mobility_similarity(target: &[Option<f64>], sorted_peers: &[Peer<'_>], m: usize, tau: f64, min_paired: usize) -> bool {
    if sorted_peers.len() < m || target.iter().all(Option::is_none) {
        return false;
    }
    let mut hits = 0;
    for peer in sorted_peers {
        if pearson(target, peer.sequence, min_paired).is_some_and(|r| r > tau) {
            hits += 1;
            if hits >= m {
                return true;
            }
        }
    }
    false
}

type DeviceStreams<'a> = BTreeMap<&'a DeviceId, [Option<&'a WindowedStream>; 3]>;

fn index_streams(streams: &[WindowedStream]) -> Result<DeviceStreams<'_>> {
    let mut by_device: DeviceStreams<'_> = BTreeMap::new();
    if let Some(first) = streams.first() {
        for s in streams {
            if s.epoch_ms != first.epoch_ms || s.window_ms != first.window_ms {
                return Err(Error::Config(format!(
                    "streams do not share one window grid: {}@{} has epoch {} / window {} ms, expected {} / {}",
                    s.device, s.sniffer.id, s.epoch_ms, s.window_ms, first.epoch_ms, first.window_ms
                )));
            }
            let slot = &mut by_device.entry(&s.device).or_default()[role_slot(s.sniffer.role)];
            if slot.is_some() {
                return Err(Error::Config(format!("duplicate {:?} stream for device {}", s.sniffer.role, s.device)));
            }
            *slot = Some(s);
        }
    }
    Ok(by_device)
}

fn window_features(by_device: &DeviceStreams<'_>, k: usize, config: &PipelineConfig) -> Vec<FeatureVector> {
    let b = config.backtrack;
    let contexts: Vec<BacktrackContext<'_>> = by_device
        .iter()
        .map(|(dev, streams)| BacktrackContext::new(dev, *streams, k, b))
        .collect();
    let counter_variance: Vec<Option<f64>> = contexts.iter().map(|c| c.stability(SnifferRole::Counter)).collect();

    contexts
        .iter()
        .enumerate()
        .filter(|(_, ctx)| ctx.observed())
        .map(|(i, ctx)| {
            let counter = ctx.stream(SnifferRole::Counter);
            let current = counter.map(|s| s.window(k)).unwrap_or(&[]);
            let (f1, degenerate) = accumulated_slope(current);

            let f8 = if counter.is_some() {
                let mut peers: Vec<Peer<'_>> = contexts
                    .iter()
                    .enumerate()
                    .filter(|(j, c)| *j != i && c.stream(SnifferRole::Counter).is_some())
                    .map(|(j, c)| Peer {
                        device: c.device,
                        stability: counter_variance[j],
                        sequence: c.representatives(SnifferRole::Counter),
                    })
                    .collect();
                sort_peers(&mut peers);
                mobility_similarity(
                    ctx.representatives(SnifferRole::Counter),
                    &peers,
                    config.peer_count,
                    config.tau_f8,
                    config.min_paired_windows,
                )
            } else {
                false
            };

            FeatureVector {
                device: ctx.device.clone(),
                window: k,
                f1,
                degenerate,
                f2: approaching_counter(current, config.tau_f2),
                f3: near_counter(current, config.tau_f3),
                f4: counter_variance[i],
                f5: ctx.stability(SnifferRole::Left),
                f6: ctx.stability(SnifferRole::Right),
                f7: stay_duration(counter, k),
                f8,
                f9: ctx.mobility_correlation(config.min_paired_windows),
            }
        })
        .collect()
}

/// Feature vectors for every observed device at every window `k >= b`, up
/// to the last window any stream reaches. Sorted by device, then window.
pub fn extract_all(streams: &[WindowedStream], config: &PipelineConfig) -> Result<Vec<FeatureVector>> {
    config.validate()?;
    let by_device = index_streams(streams)?;
    let Some(last) = streams.iter().filter_map(WindowedStream::last_index).max() else {
        return Ok(Vec::new());
    };
    if last < config.backtrack {
        return Ok(Vec::new());
    }
    let mut out: Vec<FeatureVector> = (config.backtrack..=last)
        .into_par_iter()
        .flat_map_iter(|k| window_features(&by_device, k, config))
        .collect();
    out.sort_by(|a, b| a.device.cmp(&b.device).then(a.window.cmp(&b.window)));
    Ok(out)
}
