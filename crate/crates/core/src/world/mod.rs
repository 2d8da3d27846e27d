//! Ground-truth environment, scene files, sensor simulation and visibility oracles.

mod environment;
mod scene;
mod sensor;
mod visibility;

pub use environment::Environment;
pub use scene::{depot_analog, load_scene, parse_scene, scene_text};
pub use sensor::{simulate_scan, RayKind, Scan, ScanRay, Scanner, SensorKind, SensorModel};
pub use visibility::{observable_volume, ObservableVolume, VisibilityParams};
