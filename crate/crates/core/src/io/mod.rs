//! On-disk formats and synthetic instance generation.

pub mod instance;
pub mod results;
pub mod synth;

pub use instance::{load_family, load_instance, parse_instance, write_instance, InstanceFile, InstanceIoError};
pub use results::{read_results, write_results, Repetition, ResultRow, ResultsError};
pub use synth::{generate_synthetic, SynthError, SyntheticSpec};
