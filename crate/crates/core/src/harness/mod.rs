//! Experiment drivers behind the CLI: validated configs, deterministic
//! parallel runs, and CSV/JSON reports with a manifest.

mod report;
mod runs;

pub use report::{Cell, Format, Report, RunManifest};
pub use runs::*;
