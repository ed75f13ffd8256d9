//! Harness side of the workspace: synthetic scenes, the toy end-to-end
//! detector, the benchmark loop, binary file containers, and the flat
//! config format. The `bench` binary is a thin argument layer over these
//! modules.

pub mod benchmark;
pub mod config;
pub mod detector;
pub mod imageio;
pub mod scene;

pub use benchmark::{corrupt_scene, run_benchmark, run_benchmark_with_threads};
pub use config::BenchConfig;
pub use detector::{toy_detect, PipelineParams};
pub use imageio::{read_feature, read_ppm, write_feature, write_ppm};
pub use scene::{scene_depth, synth_scene, SyntheticScene, FOCAL, GROUND_Z};
