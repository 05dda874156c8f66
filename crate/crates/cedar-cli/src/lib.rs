//! Pipeline crate behind the `cedar` binary: configuration loading, the
//! solve/figures/simulate stages, manifests with checksums, and the
//! verification suite.

pub mod config;
pub mod figures;
pub mod manifest;
pub mod pipeline;
pub mod verify;

pub use config::{FigureId, GridConfig, RunConfig};
pub use manifest::Manifest;
pub use pipeline::{load_artifacts, run_simulate, run_solve, SolveArtifacts};
pub use verify::{run_verify, VerifyReport};
