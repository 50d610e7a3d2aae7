//! Simulation configuration: one JSON document with defaults for every
//! key, dotted `key=value` overrides, and validation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::ConfigError;
use crate::provisioning::StrategyKind;
use crate::qot::QotSpec;
use crate::routing::RoutingConfig;
use crate::schedule::{PeakSchedule, ScheduleConfig};
use crate::spectrum::{BandPlan, BandPlanKind, DEFAULT_SLOTS_PER_BAND, DEFAULT_SLOT_WIDTH_GHZ};
use crate::traffic::{default_traffic_types, TrafficTypeSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    pub slots_per_band: usize,
    pub slot_width_ghz: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            slots_per_band: DEFAULT_SLOTS_PER_BAND,
            slot_width_ghz: DEFAULT_SLOT_WIDTH_GHZ,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    /// Multiplier on every arrival rate.
    pub load_scale: f64,
    /// Hour of day 0 at which arrivals begin.
    pub start_hour: f64,
    pub types: Vec<TrafficTypeSpec>,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            load_scale: 1.0,
            start_hour: 0.0,
            types: default_traffic_types(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Leave requests arriving on day 0 out of every count.
    pub exclude_first_day: bool,
    /// Day whose hourly utilization fills the util_hNN columns.
    pub snapshot_day: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub strategies: Vec<StrategyKind>,
    pub band_plans: Vec<BandPlanKind>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            strategies: StrategyKind::ALL.to_vec(),
            band_plans: vec![BandPlanKind::C, BandPlanKind::CL],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Relative paths resolve against the config file's directory.
    pub topology: PathBuf,
    pub band_plan: BandPlanKind,
    pub strategy: StrategyKind,
    pub seeds: Vec<u64>,
    pub demands_per_seed: u64,
    pub horizon_days: u64,
    pub spectrum: SpectrumConfig,
    pub traffic: TrafficConfig,
    pub qot: QotSpec,
    pub routing: RoutingConfig,
    pub schedule: ScheduleConfig,
    pub metrics: MetricsConfig,
    pub sweep: SweepConfig,
    /// Write one CSV line per request outcome.
    pub event_log: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            topology: PathBuf::from("topology.json"),
            band_plan: BandPlanKind::C,
            strategy: StrategyKind::DACA,
            seeds: vec![1],
            demands_per_seed: 15_000,
            horizon_days: 3,
            spectrum: SpectrumConfig::default(),
            traffic: TrafficConfig::default(),
            qot: QotSpec::default(),
            routing: RoutingConfig::default(),
            schedule: ScheduleConfig::default(),
            metrics: MetricsConfig::default(),
            sweep: SweepConfig::default(),
            event_log: false,
        }
    }
}

fn parse_override(raw: &str) -> Result<(&str, Value), ConfigError> {
    let (key, value) = raw
        .split_once('=')
        .filter(|(k, _)| !k.trim().is_empty())
        .ok_or_else(|| ConfigError::BadOverride(raw.to_string()))?;
    let value = value.trim();
    let parsed = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    Ok((key.trim(), parsed))
}

/// Set `key` (dotted; numeric segments index arrays) in `doc`. The key
/// must already exist, which catches typos.
pub fn apply_override(doc: &mut Value, raw: &str) -> Result<(), ConfigError> {
    let (key, value) = parse_override(raw)?;
    let unknown = || ConfigError::UnknownKey(key.to_string());
    let mut node = doc;
    for seg in key.split('.') {
        node = match node {
            Value::Object(map) => map.get_mut(seg).ok_or_else(unknown)?,
            Value::Array(items) => {
                let i: usize = seg.parse().map_err(|_| unknown())?;
                items.get_mut(i).ok_or_else(unknown)?
            }
            _ => return Err(unknown()),
        };
    }
    *node = value;
    Ok(())
}

impl SimConfig {
    pub fn from_json_str(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let parsed: SimConfig = serde_json::from_str(text).map_err(ConfigError::Schema)?;
        parsed.with_overrides(overrides)
    }

    /// Read `path`, apply overrides, resolve the topology path and validate.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let parsed: SimConfig = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = parsed.with_overrides(overrides)?;
        if config.topology.is_relative() {
            if let Some(dir) = path.parent() {
                config.topology = dir.join(&config.topology);
            }
        }
        Ok(config)
    }

    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut doc = serde_json::to_value(self).map_err(ConfigError::Schema)?;
        for raw in overrides {
            apply_override(&mut doc, raw)?;
        }
        let config: SimConfig = serde_json::from_value(doc).map_err(ConfigError::Schema)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.demands_per_seed == 0 {
            return bad("demands_per_seed must be positive".into());
        }
        if self.horizon_days == 0 {
            return bad("horizon_days must be positive".into());
        }
        if self.spectrum.slots_per_band == 0 || !(self.spectrum.slot_width_ghz > 0.0) {
            return bad("spectrum needs positive slots_per_band and slot_width_ghz".into());
        }
        if !(self.traffic.load_scale >= 0.0 && self.traffic.load_scale.is_finite()) {
            return bad(format!("traffic.load_scale must be nonnegative, got {}", self.traffic.load_scale));
        }
        if !(0.0..24.0).contains(&self.traffic.start_hour) {
            return bad(format!("traffic.start_hour must be within [0, 24), got {}", self.traffic.start_hour));
        }
        let mut seen = Vec::new();
        for spec in &self.traffic.types {
            spec.validate().map_err(ConfigError::Invalid)?;
            if seen.contains(&spec.type_id) {
                return bad(format!("traffic type {} listed twice", spec.type_id));
            }
            seen.push(spec.type_id);
        }
        self.qot.validate().map_err(ConfigError::Invalid)?;
        if self.routing.k == 0 || self.routing.max_slots_per_lightpath == 0 {
            return bad("routing.k and routing.max_slots_per_lightpath must be positive".into());
        }
        PeakSchedule::from_config(&self.schedule).map_err(ConfigError::Invalid)?;
        if self.metrics.snapshot_day as u64 >= self.horizon_days {
            return bad(format!(
                "metrics.snapshot_day {} is outside the {}-day horizon",
                self.metrics.snapshot_day, self.horizon_days
            ));
        }
        if self.sweep.strategies.is_empty() || self.sweep.band_plans.is_empty() {
            return bad("sweep axes must not be empty".into());
        }
        Ok(())
    }

    pub fn band_plan(&self) -> BandPlan {
        BandPlan::new(self.band_plan, self.spectrum.slots_per_band, self.spectrum.slot_width_ghz)
    }

    pub fn schedule(&self) -> PeakSchedule {
        PeakSchedule::from_config(&self.schedule).expect("validated schedule")
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// First 16 hex digits of sha256 over the canonical JSON rendering.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(text.as_bytes())[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = SimConfig::default();
        c.validate().unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(SimConfig::from_json_str(&text, &[]).unwrap(), c);
        assert_eq!(SimConfig::from_json_str("{}", &[]).unwrap(), c);
    }

    #[test]
    fn overrides_apply_before_validation() {
        let c = SimConfig::from_json_str("{}", &["routing.k=5".into(), "band_plan=C+L".into()]).unwrap();
        assert_eq!(c.routing.k, 5);
        assert_eq!(c.band_plan, BandPlanKind::CL);
        let c = SimConfig::from_json_str("{}", &["traffic.types.1.lambda_peak=7".into()]).unwrap();
        assert_eq!(c.traffic.types[1].lambda_peak, 7.0);
        assert!(matches!(
            SimConfig::from_json_str("{}", &["routing.kk=5".into()]),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            SimConfig::from_json_str("{}", &["routing.k".into()]),
            Err(ConfigError::BadOverride(_))
        ));
        assert!(matches!(
            SimConfig::from_json_str("{}", &["routing.k=0".into()]),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn rejects_bad_values() {
        for o in ["seeds=[]", "demands_per_seed=0", "traffic.start_hour=24", "schedule.peak_start_hour=21"] {
            assert!(SimConfig::from_json_str("{}", &[o.into()]).is_err(), "{o}");
        }
        assert!(SimConfig::from_json_str(r#"{"bogus": 1}"#, &[]).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = SimConfig::default();
        let b = a.with_overrides(&["routing.k=4".into()]).unwrap();
        assert_eq!(a.hash(), SimConfig::default().hash());
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn topology_path_resolves_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"topology": "net.json"}"#).unwrap();
        let c = SimConfig::load(&path, &[]).unwrap();
        assert_eq!(c.topology, dir.path().join("net.json"));
    }
}
