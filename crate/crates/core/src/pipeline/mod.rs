mod config;
mod manifest;
mod stages;

pub use config::{
    model_seed, AnalysisSection, DatasetSection, ExperimentConfig, FamilySection, ModelSpec,
    CONFIG_SCHEMA_VERSION,
};
pub use manifest::{digest_of, RunManifest, StageRecord, RUN_MANIFEST_VERSION};
pub use stages::{ModelSelector, Pipeline, RunLayout, StageReport};
