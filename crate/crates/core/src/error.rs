use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("cannot read topology file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse topology file {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("topology has {0} nodes, at least 2 are required")]
    TooFewNodes(usize),
    #[error("duplicate node id {0:?}")]
    DuplicateNode(String),
    #[error("node {id:?} has generation probability {prob} outside [0, 1]")]
    ProbabilityRange { id: String, prob: f64 },
    #[error("probabilities sum to {0}, expected 1")]
    ProbabilitySum(f64),
    #[error("link {a}-{b} references unknown node {missing:?}")]
    UnknownNode {
        a: String,
        b: String,
        missing: String,
    },
    #[error("link {a}-{b} is a self-loop")]
    SelfLoop { a: String, b: String },
    #[error("duplicate link {a}-{b}")]
    DuplicateLink { a: String, b: String },
    #[error("link {a}-{b} has nonpositive length {length_km} km")]
    NonpositiveLength { a: String, b: String, length_km: f64 },
    #[error("topology is disconnected: node {0:?} is unreachable")]
    Disconnected(String),
}

/// Violations of the spectrum grid's ownership rules. These indicate an
/// engine bug; the simulation aborts when one surfaces.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpectrumError {
    #[error("slot collision on link {link}, band {band}, slot {slot} (owned by lightpath {owner})")]
    Collision {
        link: usize,
        band: usize,
        slot: usize,
        owner: u64,
    },
    #[error("lightpath {0} is already allocated")]
    DuplicateLightpath(u64),
    #[error("lightpath {0} owns no slots")]
    UnknownLightpath(u64),
    #[error("slot range {start}+{len} exceeds band size {slots}")]
    OutOfRange {
        start: usize,
        len: usize,
        slots: usize,
    },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid override {0:?}: expected KEY=VALUE")]
    BadOverride(String),
    #[error("override key {0:?} does not name a config field")]
    UnknownKey(String),
    #[error("config after overrides is invalid: {0}")]
    Schema(#[source] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("spectrum invariant violated at tick {tick}: {source}")]
    Spectrum {
        tick: u64,
        #[source]
        source: SpectrumError,
    },
    #[error("conservation violated at tick {tick}: grid holds {grid} slot-links, active lightpaths account for {expected}")]
    Conservation { tick: u64, grid: u64, expected: u64 },
    #[error("seed {seed}: {source}")]
    Seed {
        seed: u64,
        #[source]
        source: Box<SimError>,
    },
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot encode {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("cannot encode {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}
