//! Persistence, batch processing and reporting around `umimo-core`.

pub mod config;
pub mod error;
pub mod manifest;
pub mod records;
pub mod report;
pub mod suite;
pub mod tensor_io;

pub use config::RunConfig;
pub use error::{PipelineError, Result};
pub use manifest::{import_external, DatasetManifest, LinkEntry, Provenance};
pub use report::write_reports;
pub use suite::{run_manifest_suite, run_scenario_suite, SuiteReport};
pub use tensor_io::{load_tensor, save_tensor};
