//! Aggregation and dynamic exponential smoothing of raw packet streams.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{AdvertisingPacket, DeviceId, PipelineConfig, RssiSample, SnifferId, WindowedStream};

/// Packets of one (sniffer, device) pair falling in one aggregation period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregationBucket {
    pub start_ms: i64,
    pub mean_rssi: f64,
    pub count: usize,
}

impl From<AggregationBucket> for RssiSample {
    fn from(b: AggregationBucket) -> Self {
        RssiSample::new(b.start_ms, b.mean_rssi)
    }
}

/// Groups time-sorted packets of a single (sniffer, device) pair into
/// `period_ms` buckets aligned on `epoch_ms`. Empty buckets are skipped.
pub fn aggregate_buckets(
    packets: &[AdvertisingPacket],
    period_ms: i64,
    epoch_ms: i64,
) -> Result<Vec<AggregationBucket>> {
    if period_ms <= 0 {
        return Err(Error::Config(format!("aggregation period must be positive, got {period_ms} ms")));
    }
    let Some(first) = packets.first() else {
        return Ok(Vec::new());
    };
    let mut buckets: Vec<AggregationBucket> = Vec::new();
    let mut sum = 0.0;
    let mut prev_t = i64::MIN;
    for p in packets {
        if p.sniffer != first.sniffer || p.device != first.device {
            return Err(Error::MixedStream {
                expected: format!("{}@{}", first.device, first.sniffer.id),
                found: format!("{}@{}", p.device, p.sniffer.id),
            });
        }
        if p.t_ms < prev_t {
            return Err(Error::Unsorted { earlier_ms: prev_t, later_ms: p.t_ms });
        }
        if p.t_ms < epoch_ms {
            return Err(Error::Config(format!("packet at {} ms precedes epoch {epoch_ms} ms", p.t_ms)));
        }
        prev_t = p.t_ms;
        let start = epoch_ms + (p.t_ms - epoch_ms) / period_ms * period_ms;
        match buckets.last_mut() {
            Some(b) if b.start_ms == start => {
                b.count += 1;
                sum += f64::from(p.rssi);
                b.mean_rssi = sum / b.count as f64;
            }
            _ => {
                sum = f64::from(p.rssi);
                buckets.push(AggregationBucket { start_ms: start, mean_rssi: sum, count: 1 });
            }
        }
    }
    Ok(buckets)
}

/// One sample per non-empty aggregation bucket: the bucket's mean RSSI,
/// stamped with the bucket start.
pub fn aggregate(packets: &[AdvertisingPacket], period_ms: i64, epoch_ms: i64) -> Result<Vec<RssiSample>> {
    Ok(aggregate_buckets(packets, period_ms, epoch_ms)?.into_iter().map(RssiSample::from).collect())
}

/// Dynamic exponential smoothing. A falling input keeps weight `alpha` on
/// the previous output; a rising or equal input gets weight `alpha` itself.
/// The first output equals the first input.
pub fn desf(samples: &[RssiSample], alpha: f64) -> Vec<RssiSample> {
    let mut out = Vec::with_capacity(samples.len());
    let mut prev: Option<f64> = None;
    for s in samples {
        let o = match prev {
            None => s.value,
            // interpolation form keeps a constant input exactly fixed
            Some(p) if s.value < p => s.value + alpha * (p - s.value),
            Some(p) => p + alpha * (s.value - p),
        };
        prev = Some(o);
        out.push(RssiSample::new(s.t_ms, o));
    }
    out
}

/// Earliest packet timestamp of the trace, the shared window epoch.
pub fn trace_epoch(packets: &[AdvertisingPacket]) -> Option<i64> {
    packets.iter().map(|p| p.t_ms).min()
}

/// Aggregate, smooth and window every (sniffer, device) stream of a trace.
/// All streams share the trace epoch so window indices line up.
/// Output is ordered by device, then sniffer role.
pub fn preprocess_trace(packets: &[AdvertisingPacket], config: &PipelineConfig) -> Result<Vec<WindowedStream>> {
    config.validate()?;
    let Some(epoch) = trace_epoch(packets) else {
        return Ok(Vec::new());
    };
    let mut groups: BTreeMap<(DeviceId, SnifferId), Vec<AdvertisingPacket>> = BTreeMap::new();
    for p in packets {
        groups.entry((p.device.clone(), p.sniffer)).or_default().push(p.clone());
    }
    let period = config.aggregation_ms();
    let window = config.window_ms();
    groups
        .into_par_iter()
        .map(|((device, sniffer), mut pkts)| {
            pkts.sort_by_key(|p| p.t_ms);
            let smoothed = desf(&aggregate(&pkts, period, epoch)?, config.alpha);
            WindowedStream::new(sniffer, device, &smoothed, window, epoch)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Deployment, SnifferRole};

    fn pkt(t_ms: i64, rssi: i16) -> AdvertisingPacket {
        let sn = Deployment::default().sniffer(SnifferRole::Counter);
        AdvertisingPacket::new(t_ms, sn, DeviceId::new("d").unwrap(), rssi).unwrap()
    }

    fn vals(s: &[RssiSample]) -> Vec<f64> {
        s.iter().map(|x| x.value).collect()
    }

    fn series(v: &[f64]) -> Vec<RssiSample> {
        v.iter().enumerate().map(|(i, &x)| RssiSample::new(i as i64 * 1000, x)).collect()
    }

    #[test]
    fn mean_of_one_bucket() {
        let out = aggregate(&[pkt(0, -60), pkt(1000, -62), pkt(2000, -64)], 30_000, 0).unwrap();
        assert_eq!(out, vec![RssiSample::new(0, -62.0)]);
    }

    #[test]
    fn singleton_bucket_start_snaps_to_grid() {
        let out = aggregate(&[pkt(31_000, -70)], 30_000, 0).unwrap();
        assert_eq!(out, vec![RssiSample::new(30_000, -70.0)]);
    }

    #[test]
    fn two_buckets() {
        let out = aggregate(&[pkt(0, -50), pkt(29_900, -54), pkt(30_100, -80)], 30_000, 0).unwrap();
        assert_eq!(out, vec![RssiSample::new(0, -52.0), RssiSample::new(30_000, -80.0)]);
    }

    #[test]
    fn empty_buckets_produce_nothing() {
        let out = aggregate(&[pkt(0, -50), pkt(95_000, -60)], 30_000, 0).unwrap();
        assert_eq!(out.iter().map(|s| s.t_ms).collect::<Vec<_>>(), vec![0, 90_000]);
    }

    #[test]
    fn mixed_stream_rejected() {
        let mut other = pkt(10, -50);
        other.device = DeviceId::new("e").unwrap();
        assert!(matches!(aggregate(&[pkt(0, -50), other], 30_000, 0), Err(Error::MixedStream { .. })));
        let mut other = pkt(10, -50);
        other.sniffer = Deployment::default().sniffer(SnifferRole::Left);
        assert!(matches!(aggregate(&[pkt(0, -50), other], 30_000, 0), Err(Error::MixedStream { .. })));
    }

    #[test]
    fn desf_constant_is_fixed_point() {
        assert_eq!(vals(&desf(&series(&[-60.0, -60.0, -60.0]), 0.9)), vec![-60.0, -60.0, -60.0]);
    }

    #[test]
    fn desf_falling_branch() {
        let out = desf(&series(&[-60.0, -80.0]), 0.9);
        assert!((out[1].value - (-62.0)).abs() < 1e-12);
    }

    #[test]
    fn desf_rising_branch() {
        let out = desf(&series(&[-80.0, -60.0]), 0.9);
        assert!((out[1].value - (-62.0)).abs() < 1e-12);
    }

    #[test]
    fn desf_alpha_zero() {
        // falling: O = I; rising: O = O_prev
        let out = desf(&series(&[-60.0, -70.0, -50.0]), 0.0);
        assert_eq!(vals(&out), vec![-60.0, -70.0, -70.0]);
    }

    #[test]
    fn desf_keeps_timestamps_and_length() {
        let input = series(&[-50.0, -55.0, -52.0, -70.0]);
        let out = desf(&input, 0.9);
        assert_eq!(out.len(), input.len());
        assert!(out.iter().zip(&input).all(|(o, i)| o.t_ms == i.t_ms));
        assert!(desf(&[], 0.9).is_empty());
    }

    #[test]
    fn preprocess_empty_trace() {
        assert!(preprocess_trace(&[], &PipelineConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn preprocess_single_stream() {
        let packets: Vec<_> = (0..120).map(|i| pkt(i * 1000, -60)).collect();
        let streams = preprocess_trace(&packets, &PipelineConfig::default()).unwrap();
        assert_eq!(streams.len(), 1);
        assert_eq!(streams[0].windows.len(), 2);
        assert_eq!(streams[0].len(), 4);
    }

    #[test]
    fn preprocess_sorts_unsorted_input() {
        let mut packets: Vec<_> = (0..90).map(|i| pkt(i * 1000, -60 - (i % 7) as i16)).collect();
        packets.reverse();
        let streams = preprocess_trace(&packets, &PipelineConfig::default()).unwrap();
        assert_eq!(streams[0].len(), 3);
    }
}
