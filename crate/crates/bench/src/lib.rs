//! Experiment runner for adversarial shallow watermarking: batch embedding
//! over an image folder, distortion sweeps with per-trial CSV and aggregate
//! JSON reports, and the decoder depth-sensitivity probe.
//!
//! Results are a pure function of the plan. Images run in parallel on a
//! pool capped by `ASW_THREADS`; every random stream is derived from the
//! decoder key and the image index, so the thread count never changes a
//! report.

pub mod plan;
pub mod probe;
pub mod runner;

pub use plan::{BenchPlan, DecoderSettings, EmbedSettings, GridEntry};
pub use probe::{run_depth_probe, ProbeOptions, ProbeRow};
pub use runner::{run_bench, run_bench_on, BenchReport, CellStats, HostImage, TrialRecord};
