//! Config-driven experiment runner behind the `hmmlab` binary.

mod commands;
mod config;
mod manifest;

pub use commands::{constants_for, run, Command};
pub use config::{
    ConstantsBlock, ContractionBlock, DivergenceBlock, ExperimentConfig, FisherBlock, KappaBlock, LanBlock,
    PosteriorBlock, SimulateBlock, TailBlock, TestsBlock,
};
pub use manifest::{config_hash, summarize, RunManifest, TOOL, VERSION};
