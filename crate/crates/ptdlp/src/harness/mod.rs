//! Configuration, dataset ingestion, experiment orchestration, and
//! persistence. The CLI in `src/bin/ptdlp.rs` is a thin wrapper over
//! [`run_experiment`] and friends.

pub mod config;
pub mod idx;
pub mod run;

pub use config::{Algorithm, AutoOr, ExperimentConfig, ExperimentKind, SwapConfig};
pub use idx::{load_idx_dataset, parse_idx_images, write_idx_images};
pub use run::{
    hex_sha256, mode_initialize, rerun_from_manifest, run_experiment, Manifest, RunArtifacts,
    CSV_SCHEMA_VERSION,
};
