//! Deterministic mission simulation, evaluation metrics, configuration and artifacts.

mod config;
mod metrics;
mod output;
mod run;

pub use config::MissionConfig;
pub use metrics::{
    explored_volume, fused_surface, reconstruction_metrics, reconstruction_metrics_with, safety_histogram, ObservedGrid,
    PointIndex, ReconstructionMetrics, SafetyHistogram, SAFETY_BIN,
};
pub use output::write_outputs;
pub use run::{
    load_environment, run_mission, run_mission_in, run_scripted, visibility_params, ClearanceSample, ClosureRecord,
    CollisionReport, MemoryProxy, MetricsReport, MissionOutput, Termination, Timing, TrajectorySample, VolumeSample,
};
