//! File formats, pipeline stages and the serving simulator around
//! [`glsm_core`].
//!
//! A pipeline run lives in one working directory. Each stage reads the
//! artifacts of earlier stages from it and replaces its own outputs
//! atomically, so an interrupted run never leaves a half-written file behind.

pub mod artifacts;
pub mod config;
pub mod logfile;
pub mod report;
pub mod serve;
pub mod stages;

pub use artifacts::{Artifact, MissingArtifact, Stage, Workspace};
pub use config::PipelineConfig;
pub use glsm_core as core;
