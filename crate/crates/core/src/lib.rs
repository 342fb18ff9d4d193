//! Queue detection from received signal strength alone.
//!
//! Bluetooth Low Energy advertisements are overheard by three fixed sniffers:
//! one at the service counter and one on each side of the queue area. Each
//! (device, sniffer) RSSI stream is aggregated, smoothed and cut into
//! windows; per-window features describe how the device approaches and
//! lingers near the counter; a trained classifier decides whether the
//! device is standing in the queue.
//!
//! ```
//! use queuesense::{simulate, PipelineConfig, ScenarioSpec};
//! use queuesense::experiment::simulated_dataset;
//!
//! let scenario = ScenarioSpec { duration_s: 300.0, ..ScenarioSpec::default() };
//! let pipeline = PipelineConfig { backtrack: 2, ..PipelineConfig::default() };
//! let data = simulated_dataset(&scenario, &pipeline, 3).unwrap();
//! assert!(!data.is_empty());
//! # let _ = simulate;
//! ```

pub mod classify;
pub mod config;
pub mod error;
pub mod experiment;
pub mod features;
pub mod io;
pub mod model;
pub mod preprocess;
pub mod simulate;

pub use classify::{evaluate, predict, train, Dataset, EvalReport, ModelKind, ModelSpec, Protocol, TrainedModel};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use features::extract_all;
pub use model::{
    AdvertisingPacket, Deployment, DeviceId, FeatureVector, Label, LabeledExample, PipelineConfig, RssiSample,
    SnifferId, SnifferRole, TimeWindow, WindowedStream,
};
pub use preprocess::{aggregate, desf, preprocess_trace};
pub use simulate::{simulate, GroundTruth, ScenarioSpec};
