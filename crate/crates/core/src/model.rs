//! Shared data model: packets, samples, time windows, per-sniffer streams,
//! feature vectors and labels.
//!
//! Every other module depends only on these types. All values are immutable
//! after construction and are `Send + Sync`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Position of a sniffer in the deployment: the counter sits at the head of
/// the queue, the two flank sniffers are mirrored about the queue axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnifferRole {
    Counter,
    Left,
    Right,
}

impl SnifferRole {
    pub const ALL: [SnifferRole; 3] = [SnifferRole::Counter, SnifferRole::Left, SnifferRole::Right];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SnifferId {
    pub id: u8,
    pub role: SnifferRole,
}

/// Maps the integer sniffer ids found in traces onto roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Deployment {
    pub counter: u8,
    pub left: u8,
    pub right: u8,
}

impl Default for Deployment {
    fn default() -> Self {
        Deployment { counter: 1, left: 2, right: 3 }
    }
}

impl Deployment {
    pub fn validate(&self) -> Result<()> {
        if self.counter == self.left || self.counter == self.right || self.left == self.right {
            return Err(Error::Config(format!(
                "sniffer ids must be unique (counter={}, left={}, right={})",
                self.counter, self.left, self.right
            )));
        }
        Ok(())
    }

    pub fn resolve(&self, id: u8) -> Option<SnifferId> {
        let role = if id == self.counter {
            SnifferRole::Counter
        } else if id == self.left {
            SnifferRole::Left
        } else if id == self.right {
            SnifferRole::Right
        } else {
            return None;
        };
        Some(SnifferId { id, role })
    }

    pub fn sniffer(&self, role: SnifferRole) -> SnifferId {
        let id = match role {
            SnifferRole::Counter => self.counter,
            SnifferRole::Left => self.left,
            SnifferRole::Right => self.right,
        };
        SnifferId { id, role }
    }
}

/// Opaque BLE device identifier. Never empty and never contains whitespace,
/// so it can be written verbatim into whitespace-delimited files.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DeviceId(String);

impl DeviceId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(Error::Config(format!("invalid device id {id:?}")));
        }
        Ok(DeviceId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for DeviceId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        DeviceId::new(s)
    }
}

impl From<DeviceId> for String {
    fn from(d: DeviceId) -> String {
        d.0
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One sniffed advertisement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdvertisingPacket {
    /// Milliseconds since the trace epoch.
    pub t_ms: i64,
    pub sniffer: SnifferId,
    pub device: DeviceId,
    pub rssi: i16,
}

impl AdvertisingPacket {
    pub fn new(t_ms: i64, sniffer: SnifferId, device: DeviceId, rssi: i16) -> Result<Self> {
        if t_ms < 0 {
            return Err(Error::Config(format!("negative packet timestamp {t_ms}")));
        }
        if rssi > 0 {
            return Err(Error::Config(format!("positive RSSI {rssi} dBm")));
        }
        Ok(AdvertisingPacket { t_ms, sniffer, device, rssi })
    }
}

/// Half-open interval `[start_ms, end_ms)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeWindow {
    pub index: usize,
    pub start_ms: i64,
    pub end_ms: i64,
}

impl TimeWindow {
    pub fn new(index: usize, epoch_ms: i64, window_ms: i64) -> Self {
        let start_ms = epoch_ms + index as i64 * window_ms;
        TimeWindow { index, start_ms, end_ms: start_ms + window_ms }
    }

    pub fn contains(&self, t_ms: i64) -> bool {
        self.start_ms <= t_ms && t_ms < self.end_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RssiSample {
    pub t_ms: i64,
    pub value: f64,
}

impl RssiSample {
    pub fn new(t_ms: i64, value: f64) -> Self {
        RssiSample { t_ms, value }
    }
}

/// Window index -> samples inside that window. Windows with no samples are absent.
pub type Windows = BTreeMap<usize, Vec<RssiSample>>;

/// Splits time-ordered samples into contiguous windows of `window_ms`
/// starting at `epoch_ms`. A sample at exactly a window's end belongs to
/// the next window.
pub fn partition_into_windows(samples: &[RssiSample], window_ms: i64, epoch_ms: i64) -> Result<Windows> {
    if window_ms <= 0 {
        return Err(Error::Config(format!("window duration must be positive, got {window_ms} ms")));
    }
    let mut windows = Windows::new();
    let mut prev: Option<i64> = None;
    for s in samples {
        if let Some(p) = prev {
            if s.t_ms < p {
                return Err(Error::Unsorted { earlier_ms: p, later_ms: s.t_ms });
            }
        }
        prev = Some(s.t_ms);
        if s.t_ms < epoch_ms {
            return Err(Error::Config(format!("sample at {} ms precedes epoch {epoch_ms} ms", s.t_ms)));
        }
        let k = ((s.t_ms - epoch_ms) / window_ms) as usize;
        windows.entry(k).or_default().push(*s);
    }
    Ok(windows)
}

/// Preprocessed samples of one device as heard by one sniffer, split into windows.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedStream {
    pub sniffer: SnifferId,
    pub device: DeviceId,
    pub epoch_ms: i64,
    pub window_ms: i64,
    pub windows: Windows,
}

impl WindowedStream {
    pub fn new(
        sniffer: SnifferId,
        device: DeviceId,
        samples: &[RssiSample],
        window_ms: i64,
        epoch_ms: i64,
    ) -> Result<Self> {
        let windows = partition_into_windows(samples, window_ms, epoch_ms)?;
        Ok(WindowedStream { sniffer, device, epoch_ms, window_ms, windows })
    }

    /// Samples in window `k`; empty when nothing was heard.
    pub fn window(&self, k: usize) -> &[RssiSample] {
        self.windows.get(&k).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn time_window(&self, k: usize) -> TimeWindow {
        TimeWindow::new(k, self.epoch_ms, self.window_ms)
    }

    pub fn last_index(&self) -> Option<usize> {
        self.windows.keys().next_back().copied()
    }

    /// All samples in windows `from..=to`, in time order.
    pub fn samples_between(&self, from: usize, to: usize) -> impl Iterator<Item = &RssiSample> {
        self.windows.range(from..=to).flat_map(|(_, v)| v.iter())
    }

    pub fn len(&self) -> usize {
        self.windows.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// Ground-truth or predicted device status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    InQueue,
    NotInQueue,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::InQueue => "in_queue",
            Label::NotInQueue => "not_in_queue",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "in_queue" => Some(Label::InQueue),
            "not_in_queue" => Some(Label::NotInQueue),
            _ => None,
        }
    }

    pub(crate) fn index(self) -> usize {
        match self {
            Label::InQueue => 0,
            Label::NotInQueue => 1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Number of features per vector.
pub const FEATURE_COUNT: usize = 9;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = ["f1", "f2", "f3", "f4", "f5", "f6", "f7", "f8", "f9"];

/// The nine features of one device at one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub device: DeviceId,
    pub window: usize,
    /// Accumulated slope at the counter sniffer, dBm.
    pub f1: f64,
    /// Fewer than two counter samples in the current window.
    pub degenerate: bool,
    /// Approaching-counter pattern.
    pub f2: bool,
    /// Near-counter RSSI.
    pub f3: bool,
    /// Pooled RSSI variance at counter, left and right sniffers, dBm².
    pub f4: Option<f64>,
    pub f5: Option<f64>,
    pub f6: Option<f64>,
    /// Stay duration at the counter, seconds.
    pub f7: f64,
    /// Mobility similarity with peer devices.
    pub f8: bool,
    /// Left/right sniffer mobility correlation.
    pub f9: Option<f64>,
}

impl FeatureVector {
    /// Raw values in f1..f9 order with missing entries as `None`.
    pub fn values(&self) -> [Option<f64>; FEATURE_COUNT] {
        let b = |v: bool| Some(if v { 1.0 } else { 0.0 });
        [
            Some(self.f1),
            b(self.f2),
            b(self.f3),
            self.f4,
            self.f5,
            self.f6,
            Some(self.f7),
            b(self.f8),
            self.f9,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: FeatureVector,
    pub label: Label,
}

/// Preprocessing and feature-extraction parameters. Defaults are the
/// controllable-experiment settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Aggregation period λ, seconds.
    pub aggregation_s: f64,
    /// Smoothing weight α.
    pub alpha: f64,
    pub window_s: f64,
    /// Backtracking depth b, in windows.
    pub backtrack: usize,
    /// τ_f2, dBm.
    pub tau_f2: f64,
    /// τ_f3, dBm.
    pub tau_f3: f64,
    /// m, peers needed for mobility similarity.
    pub peer_count: usize,
    /// τ_f8, correlation threshold.
    pub tau_f8: f64,
    /// Fewest paired windows for which a correlation is defined.
    pub min_paired_windows: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            aggregation_s: 30.0,
            alpha: 0.9,
            window_s: 60.0,
            backtrack: 8,
            tau_f2: 5.0,
            tau_f3: -55.0,
            peer_count: 3,
            tau_f8: 0.3,
            min_paired_windows: 3,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.aggregation_s > 0.0) {
            return bad(format!("aggregation period must be positive, got {}", self.aggregation_s));
        }
        if !(self.window_s >= self.aggregation_s) {
            return bad(format!(
                "window duration {} s shorter than aggregation period {} s",
                self.window_s, self.aggregation_s
            ));
        }
        if self.backtrack < 1 {
            return bad("backtrack depth must be at least 1".into());
        }
        if self.peer_count < 1 {
            return bad("peer count must be at least 1".into());
        }
        if !(-1.0..=1.0).contains(&self.tau_f8) {
            return bad(format!("tau_f8 must lie in [-1, 1], got {}", self.tau_f8));
        }
        if self.min_paired_windows < 2 {
            return bad("min_paired_windows must be at least 2".into());
        }
        if self.aggregation_ms() <= 0 || self.window_ms() <= 0 {
            return bad("durations must be at least 1 ms".into());
        }
        Ok(())
    }

    pub fn aggregation_ms(&self) -> i64 {
        (self.aggregation_s * 1000.0).round() as i64
    }

    pub fn window_ms(&self) -> i64 {
        (self.window_s * 1000.0).round() as i64
    }
}
