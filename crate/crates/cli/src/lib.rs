//! Experiment harness for the `pr` binary: configuration files, presets,
//! image I/O and sweep execution with per-cell artifacts.

pub mod config;
pub mod error;
pub mod experiment;
pub mod image_io;
pub mod pgm;
pub mod presets;

pub use config::{apply_config, parse_config, BaselineSettings, ExperimentSpec, Pattern};
pub use error::{CliError, Result};
pub use experiment::{run_experiment, run_simulation, simulate, ExperimentReport, Geometry, Simulated};
pub use image_io::{load_image, load_image_pair, ImageSource};
pub use presets::{preset, PRESET_NAMES};
