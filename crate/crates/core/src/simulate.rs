//! Deterministic generator of labeled multi-sniffer RSSI traces.
//!
//! Devices follow one of three behaviors: they stand in a straight queue
//! that advances one slot toward the counter every advance period, they
//! random-walk inside a rectangle, or they stay put. Served queue devices
//! turn into random walkers. Each sniffer hears each advertisement
//! independently through a log-distance path-loss channel.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AdvertisingPacket, Deployment, DeviceId, Label, SnifferRole, TimeWindow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: Point,
    pub max: Point,
}

impl Bounds {
    fn validate(&self) -> Result<()> {
        if !(self.min.x < self.max.x && self.min.y < self.max.y) {
            return Err(Error::Config(format!("empty walk bounds {self:?}")));
        }
        Ok(())
    }

    fn reflect(lo: f64, hi: f64, mut v: f64) -> f64 {
        let span = hi - lo;
        // fold into [lo, hi] by mirroring at the walls
        v = (v - lo).rem_euclid(2.0 * span);
        lo + if v > span { 2.0 * span - v } else { v }
    }

    pub fn contains(&self, p: &Point) -> bool {
        (self.min.x..=self.max.x).contains(&p.x) && (self.min.y..=self.max.y).contains(&p.y)
    }

    fn clamp(&self, p: Point) -> Point {
        Point::new(Bounds::reflect(self.min.x, self.max.x, p.x), Bounds::reflect(self.min.y, self.max.y, p.y))
    }
}

/// Log-distance path loss with log-normal shadowing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioParams {
    /// RSSI at 1 m, dBm.
    pub p0_dbm: f64,
    pub path_loss_exponent: f64,
    /// Standard deviation of per-packet shadowing, dB.
    pub shadowing_db: f64,
    /// Per-device antenna offsets are drawn uniformly from ±this range, dB.
    pub antenna_offset_db: f64,
    /// Independent chance that a sniffer misses a packet.
    pub drop_probability: f64,
    /// Packets weaker than this are not heard, dBm.
    pub sensitivity_dbm: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams {
            p0_dbm: -45.0,
            path_loss_exponent: 2.0,
            shadowing_db: 4.0,
            antenna_offset_db: 6.0,
            drop_probability: 0.1,
            sensitivity_dbm: -100.0,
        }
    }
}

impl RadioParams {
    /// Noise-free channel: no shadowing, offsets or drops.
    pub fn ideal() -> Self {
        RadioParams { shadowing_db: 0.0, antenna_offset_db: 0.0, drop_probability: 0.0, ..RadioParams::default() }
    }
}

/// Expected RSSI plus one shadowing draw. Distances below 0.1 m are clamped.
pub fn rssi_at<R: Rng + ?Sized>(distance_m: f64, radio: &RadioParams, antenna_offset_db: f64, rng: &mut R) -> f64 {
    let d = if distance_m.is_nan() { 0.1 } else { distance_m.max(0.1) };
    let mean = radio.p0_dbm - 10.0 * radio.path_loss_exponent * d.log10() + antenna_offset_db;
    if radio.shadowing_db > 0.0 {
        mean + Normal::new(0.0, radio.shadowing_db).expect("positive sigma").sample(rng)
    } else {
        mean
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Behavior {
    /// Starts at queue slot `slot` (0 is the head) and advances with the queue.
    InQueue { slot: usize },
    /// Gaussian steps of `step_m` per axis per emission, reflected at the bounds.
    /// Starts at `start`, or uniformly inside the bounds.
    RandomWalk {
        bounds: Bounds,
        step_m: f64,
        #[serde(default)]
        start: Option<Point>,
    },
    Static { position: Point },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub id: DeviceId,
    pub behavior: Behavior,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SnifferLayout {
    pub counter: Point,
    pub left: Point,
    pub right: Point,
}

impl Default for SnifferLayout {
    fn default() -> Self {
        SnifferLayout { counter: Point::new(0.0, 0.0), left: Point::new(5.0, 1.0), right: Point::new(5.0, -1.0) }
    }
}

impl SnifferLayout {
    pub fn position(&self, role: SnifferRole) -> Point {
        match role {
            SnifferRole::Counter => self.counter,
            SnifferRole::Left => self.left,
            SnifferRole::Right => self.right,
        }
    }
}

/// A straight queue along +x from the counter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QueueGeometry {
    /// Distance from the counter to the head slot, m.
    pub head_distance_m: f64,
    pub slot_spacing_m: f64,
    pub advance_period_s: f64,
}

impl Default for QueueGeometry {
    fn default() -> Self {
        QueueGeometry { head_distance_m: 1.0, slot_spacing_m: 0.5, advance_period_s: 120.0 }
    }
}

impl QueueGeometry {
    pub fn slot_position(&self, counter: Point, slot: usize) -> Point {
        Point::new(counter.x + self.head_distance_m + slot as f64 * self.slot_spacing_m, counter.y)
    }
}

/// How served devices move after leaving the queue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AfterService {
    pub bounds: Bounds,
    pub step_m: f64,
}

impl Default for AfterService {
    fn default() -> Self {
        AfterService { bounds: default_room(), step_m: 0.5 }
    }
}

fn default_room() -> Bounds {
    Bounds { min: Point::new(-6.0, -8.0), max: Point::new(12.0, 8.0) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSpec {
    pub deployment: Deployment,
    pub sniffers: SnifferLayout,
    pub queue: QueueGeometry,
    pub after_service: AfterService,
    pub devices: Vec<DeviceSpec>,
    pub emission_period_s: f64,
    pub duration_s: f64,
    pub radio: RadioParams,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    /// Seven queued beacons plus two walkers and four static devices, 15 minutes.
    fn default() -> Self {
        let mut devices: Vec<DeviceSpec> = (0..7)
            .map(|i| DeviceSpec { id: dev(&format!("beacon{i}")), behavior: Behavior::InQueue { slot: i } })
            .collect();
        devices.extend(walkers(2));
        devices.extend(statics(&[(2.0, 3.0), (6.0, -2.5), (1.0, -2.0), (4.0, 2.5)]));
        ScenarioSpec {
            deployment: Deployment::default(),
            sniffers: SnifferLayout::default(),
            queue: QueueGeometry::default(),
            after_service: AfterService::default(),
            devices,
            emission_period_s: 1.0,
            duration_s: 900.0,
            radio: RadioParams::default(),
            seed: 1,
        }
    }
}

fn dev(s: &str) -> DeviceId {
    DeviceId::new(s).expect("valid literal id")
}

fn walkers(n: usize) -> impl Iterator<Item = DeviceSpec> {
    (0..n).map(|i| DeviceSpec {
        id: dev(&format!("walker{i}")),
        behavior: Behavior::RandomWalk { bounds: default_room(), step_m: 0.3, start: None },
    })
}

fn statics(at: &[(f64, f64)]) -> Vec<DeviceSpec> {
    at.iter()
        .enumerate()
        .map(|(i, &(x, y))| DeviceSpec { id: dev(&format!("static{i}")), behavior: Behavior::Static { position: Point::new(x, y) } })
        .collect()
}

impl ScenarioSpec {
    /// Six queued people, three wandering and two standing, 15 minutes.
    pub fn team_event() -> Self {
        let mut devices: Vec<DeviceSpec> = (0..6)
            .map(|i| DeviceSpec { id: dev(&format!("guest{i}")), behavior: Behavior::InQueue { slot: i } })
            .collect();
        devices.extend(walkers(3));
        devices.extend(statics(&[(2.0, 3.0), (6.0, -2.5)]));
        ScenarioSpec { devices, ..ScenarioSpec::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.deployment.validate()?;
        if !(self.duration_s > 0.0) {
            return bad(format!("duration must be positive, got {}", self.duration_s));
        }
        if !(self.emission_period_s > 0.0) || self.emission_ms() == 0 {
            return bad(format!("emission period must be positive, got {}", self.emission_period_s));
        }
        if !(self.queue.advance_period_s > 0.0) {
            return bad(format!("advance period must be positive, got {}", self.queue.advance_period_s));
        }
        if !(0.0..=1.0).contains(&self.radio.drop_probability) {
            return bad(format!("drop probability must lie in [0, 1], got {}", self.radio.drop_probability));
        }
        if self.radio.shadowing_db < 0.0 || self.radio.antenna_offset_db < 0.0 {
            return bad("noise parameters must be non-negative".into());
        }
        self.after_service.bounds.validate()?;
        let mut seen = BTreeSet::new();
        for d in &self.devices {
            if !seen.insert(&d.id) {
                return bad(format!("duplicate device id {}", d.id));
            }
            if let Behavior::RandomWalk { bounds, step_m, .. } = &d.behavior {
                bounds.validate()?;
                if *step_m < 0.0 {
                    return bad(format!("negative step for {}", d.id));
                }
            }
        }
        Ok(())
    }

    fn emission_ms(&self) -> i64 {
        (self.emission_period_s * 1000.0).round() as i64
    }

    fn duration_ms(&self) -> i64 {
        (self.duration_s * 1000.0).round() as i64
    }

    fn advance_ms(&self) -> i64 {
        (self.queue.advance_period_s * 1000.0).round() as i64
    }
}

/// Simulator truth: when each device was queued and where it was.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Trace epoch (earliest packet), the origin of window indices.
    pub epoch_ms: i64,
    pub duration_ms: i64,
    /// Queue membership interval `[start, end)` per queued device; `end` is
    /// the service-completion time, `None` if still queued at the end.
    pub queued: BTreeMap<DeviceId, (i64, Option<i64>)>,
    pub devices: Vec<DeviceId>,
    /// Emission times and positions per device.
    pub trajectories: BTreeMap<DeviceId, Vec<(i64, Point)>>,
}

impl GroundTruth {
    pub fn service_completion_ms(&self, device: &DeviceId) -> Option<i64> {
        self.queued.get(device).and_then(|(_, end)| *end)
    }

    /// InQueue iff the device is queued for the whole window.
    pub fn label(&self, device: &DeviceId, window: &TimeWindow) -> Label {
        match self.queued.get(device) {
            Some((start, end)) if *start <= window.start_ms && end.is_none_or(|e| window.end_ms <= e) => Label::InQueue,
            _ => Label::NotInQueue,
        }
    }

    /// Labels for every device and every window that starts before the
    /// scenario ends, on the grid starting at the trace epoch.
    pub fn window_labels(&self, window_ms: i64) -> BTreeMap<(DeviceId, usize), Label> {
        self.window_labels_from(window_ms, self.epoch_ms)
    }

    /// As [`GroundTruth::window_labels`] with an explicit grid origin, for
    /// traces whose epoch differs (e.g. after dropping sniffers).
    pub fn window_labels_from(&self, window_ms: i64, epoch_ms: i64) -> BTreeMap<(DeviceId, usize), Label> {
        let mut out = BTreeMap::new();
        let span = (self.duration_ms - epoch_ms).max(0);
        let windows = (span + window_ms - 1) / window_ms;
        for d in &self.devices {
            for k in 0..windows as usize {
                out.insert((d.clone(), k), self.label(d, &TimeWindow::new(k, epoch_ms, window_ms)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
enum State {
    Queued { slot: usize },
    Walking { pos: Point, bounds: Bounds, step_m: f64 },
    Still { pos: Point },
}

/// Runs the scenario. Identical specs give identical traces.
pub fn simulate(spec: &ScenarioSpec) -> Result<(Vec<AdvertisingPacket>, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let radio = &spec.radio;
    let emit = spec.emission_ms();
    let duration = spec.duration_ms();
    let advance = spec.advance_ms();
    let counter = spec.sniffers.counter;

    let offsets: Vec<f64> = spec
        .devices
        .iter()
        .map(|_| {
            if radio.antenna_offset_db > 0.0 {
                rng.random_range(-radio.antenna_offset_db..=radio.antenna_offset_db)
            } else {
                0.0
            }
        })
        .collect();
    let mut states: Vec<State> = spec
        .devices
        .iter()
        .map(|d| match d.behavior {
            Behavior::InQueue { slot } => State::Queued { slot },
            Behavior::RandomWalk { bounds, step_m, start } => {
                let pos = start.unwrap_or_else(|| {
                    Point::new(
                        rng.random_range(bounds.min.x..=bounds.max.x),
                        rng.random_range(bounds.min.y..=bounds.max.y),
                    )
                });
                State::Walking { pos: bounds.clamp(pos), bounds, step_m }
            }
            Behavior::Static { position } => State::Still { pos: position },
        })
        .collect();

    let mut queued = BTreeMap::new();
    for d in &spec.devices {
        if let Behavior::InQueue { slot } = d.behavior {
            let end = (slot as i64 + 1) * advance;
            queued.insert(d.id.clone(), (0, (end < duration).then_some(end)));
        }
    }

    let sniffers: Vec<_> = SnifferRole::ALL
        .iter()
        .map(|&r| (spec.deployment.sniffer(r), spec.sniffers.position(r)))
        .collect();
    let mut packets = Vec::new();
    let mut trajectories: BTreeMap<DeviceId, Vec<(i64, Point)>> = BTreeMap::new();
    let mut t = 0;
    while t < duration {
        let advances = (t / advance) as usize;
        for (i, d) in spec.devices.iter().enumerate() {
            if let State::Queued { slot } = states[i] {
                if slot < advances {
                    // served: leave from the head slot and start wandering
                    states[i] = State::Walking {
                        pos: spec.after_service.bounds.clamp(spec.queue.slot_position(counter, 0)),
                        bounds: spec.after_service.bounds,
                        step_m: spec.after_service.step_m,
                    };
                }
            }
            let pos = match &mut states[i] {
                State::Queued { slot } => spec.queue.slot_position(counter, *slot - advances),
                State::Walking { pos, bounds, step_m } => {
                    if *step_m > 0.0 {
                        let n = Normal::new(0.0, *step_m).expect("positive step");
                        let moved = Point::new(pos.x + n.sample(&mut rng), pos.y + n.sample(&mut rng));
                        *pos = bounds.clamp(moved);
                    }
                    *pos
                }
                State::Still { pos } => *pos,
            };
            trajectories.entry(d.id.clone()).or_default().push((t, pos));
            for (sniffer, at) in &sniffers {
                let heard = rng.random::<f64>() >= radio.drop_probability;
                let rssi = rssi_at(pos.distance(at), radio, offsets[i], &mut rng);
                if heard && rssi >= radio.sensitivity_dbm {
                    let rssi = rssi.round().clamp(-127.0, 0.0) as i16;
                    packets.push(AdvertisingPacket { t_ms: t, sniffer: *sniffer, device: d.id.clone(), rssi });
                }
            }
        }
        t += emit;
    }

    let epoch_ms = packets.iter().map(|p| p.t_ms).min().unwrap_or(0);
    let truth = GroundTruth {
        epoch_ms,
        duration_ms: duration,
        queued,
        devices: spec.devices.iter().map(|d| d.id.clone()).collect(),
        trajectories,
    };
    Ok((packets, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> ScenarioSpec {
        ScenarioSpec { radio: RadioParams::ideal(), ..ScenarioSpec::default() }
    }

    #[test]
    fn rssi_reference_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = RadioParams::ideal();
        assert!((rssi_at(1.0, &r, 0.0, &mut rng) + 45.0).abs() < 1e-12);
        assert!((rssi_at(10.0, &r, 0.0, &mut rng) + 65.0).abs() < 1e-12);
        assert_eq!(rssi_at(0.0, &r, 0.0, &mut rng), rssi_at(0.1, &r, 0.0, &mut rng));
        assert_eq!(rssi_at(-3.0, &r, 0.0, &mut rng), rssi_at(0.1, &r, 0.0, &mut rng));
    }

    #[test]
    fn rssi_decreases_with_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = RadioParams::ideal();
        let v: Vec<f64> = (1..200).map(|i| rssi_at(i as f64 * 0.1, &r, 0.0, &mut rng)).collect();
        assert!(v.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn front_beacon_served_after_first_advance() {
        let (_, truth) = simulate(&ScenarioSpec::default()).unwrap();
        assert_eq!(truth.service_completion_ms(&dev("beacon0")), Some(120_000));
        assert_eq!(truth.service_completion_ms(&dev("beacon6")), Some(840_000));
        assert_eq!(truth.service_completion_ms(&dev("walker0")), None);
    }

    #[test]
    fn same_seed_same_trace() {
        let a = simulate(&ScenarioSpec::default()).unwrap();
        let b = simulate(&ScenarioSpec::default()).unwrap();
        assert_eq!(a.0, b.0);
        let c = simulate(&ScenarioSpec { seed: 2, ..ScenarioSpec::default() }).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn zero_duration_rejected() {
        assert!(simulate(&ScenarioSpec { duration_s: 0.0, ..ScenarioSpec::default() }).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut s = ScenarioSpec::default();
        s.devices.push(s.devices[0].clone());
        assert!(s.validate().is_err());
    }

    #[test]
    fn labels_follow_queue_membership() {
        let (_, truth) = simulate(&quiet()).unwrap();
        let labels = truth.window_labels(60_000);
        assert_eq!(labels.len(), 13 * 15);
        assert_eq!(labels[&(dev("beacon0"), 1)], Label::InQueue);
        assert_eq!(labels[&(dev("beacon0"), 2)], Label::NotInQueue);
        assert_eq!(labels[&(dev("beacon6"), 13)], Label::InQueue);
        assert_eq!(labels[&(dev("beacon6"), 14)], Label::NotInQueue);
        assert!((0..15).all(|k| labels[&(dev("static0"), k)] == Label::NotInQueue));
    }

    #[test]
    fn in_queue_positions_lie_on_queue_line() {
        let spec = ScenarioSpec::default();
        let (_, truth) = simulate(&spec).unwrap();
        let head = spec.queue.slot_position(spec.sniffers.counter, 0);
        let tail = spec.queue.slot_position(spec.sniffers.counter, 6);
        for ((d, k), label) in truth.window_labels(60_000) {
            if label != Label::InQueue {
                continue;
            }
            let w = TimeWindow::new(k, truth.epoch_ms, 60_000);
            for (t, p) in &truth.trajectories[&d] {
                if w.contains(*t) {
                    assert_eq!(p.y, head.y);
                    assert!(p.x >= head.x && p.x <= tail.x, "{d} at {p:?}");
                }
            }
        }
    }

    #[test]
    fn emissions_are_periodic() {
        let (packets, truth) = simulate(&ScenarioSpec::default()).unwrap();
        for traj in truth.trajectories.values() {
            assert!(traj.windows(2).all(|w| w[1].0 - w[0].0 == 1000));
        }
        let mut per_device: BTreeMap<&DeviceId, BTreeSet<i64>> = BTreeMap::new();
        for p in &packets {
            assert_eq!(p.t_ms % 1000, 0);
            assert!(p.rssi <= 0);
            per_device.entry(&p.device).or_default().insert(p.t_ms);
        }
        assert_eq!(per_device.len(), 13);
    }

    #[test]
    fn walkers_stay_in_bounds() {
        let (_, truth) = simulate(&ScenarioSpec::default()).unwrap();
        let room = default_room();
        for (d, traj) in &truth.trajectories {
            for (_, p) in traj {
                assert!(room.contains(p), "{d} escaped to {p:?}");
            }
        }
    }

    #[test]
    fn reflect_folds_into_range() {
        assert_eq!(Bounds::reflect(0.0, 10.0, 12.0), 8.0);
        assert_eq!(Bounds::reflect(0.0, 10.0, -3.0), 3.0);
        assert_eq!(Bounds::reflect(0.0, 10.0, 5.0), 5.0);
    }

    #[test]
    fn team_event_mix() {
        let s = ScenarioSpec::team_event();
        assert_eq!(s.devices.len(), 11);
        let (_, truth) = simulate(&s).unwrap();
        assert_eq!(truth.queued.len(), 6);
        let labels = truth.window_labels(60_000);
        assert_eq!(labels[&(dev("guest5"), 11)], Label::InQueue);
        assert_eq!(labels[&(dev("walker2"), 3)], Label::NotInQueue);
    }
}
