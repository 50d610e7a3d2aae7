//! Quality-of-transmission estimation.
//!
//! GSNR estimation sits behind the [`QotEstimator`] trait. The shipped
//! analytic model charges ASE noise per amplified span, a linear penalty for
//! co-band occupancy along the path and a fixed offset for L-band slots.
//! GSNR is mapped to a per-slot rate through a table of GSNR windows.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::spectrum::{Band, Lightpath, LightpathId, SlotRange, SpectrumGrid};
use crate::topology::{LinkIx, Topology};

/// One GSNR window: rows apply from `min_gsnr_db` (inclusive) upwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationRow {
    pub min_gsnr_db: f64,
    pub modulation: String,
    pub slot_rate_gbps: f64,
}

impl ModulationRow {
    pub fn new(min_gsnr_db: f64, modulation: &str, slot_rate_gbps: f64) -> Self {
        Self {
            min_gsnr_db,
            modulation: modulation.to_string(),
            slot_rate_gbps,
        }
    }
}

pub fn default_modulation_table() -> Vec<ModulationRow> {
    vec![
        ModulationRow::new(9.0, "DP-QPSK", 100.0),
        ModulationRow::new(13.0, "DP-16QAM", 200.0),
        ModulationRow::new(16.0, "DP-32QAM", 300.0),
        ModulationRow::new(19.5, "DP-64QAM", 400.0),
    ]
}

/// Rows must be strictly increasing in both threshold and rate.
pub fn validate_table(table: &[ModulationRow]) -> Result<(), String> {
    if table.is_empty() {
        return Err("modulation table is empty".into());
    }
    for r in table {
        if !r.min_gsnr_db.is_finite() || !(r.slot_rate_gbps > 0.0) {
            return Err(format!("bad modulation row {r:?}"));
        }
    }
    for w in table.windows(2) {
        if !(w[1].min_gsnr_db > w[0].min_gsnr_db && w[1].slot_rate_gbps > w[0].slot_rate_gbps) {
            return Err(format!(
                "modulation rows not strictly increasing: {:?} then {:?}",
                w[0], w[1]
            ));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GsnrReport {
    pub gsnr_db: f64,
    pub slot_rate_gbps: f64,
    pub modulation: Option<String>,
}

/// Highest window whose lower edge is at or below `gsnr_db`; zero rate
/// below the first window.
pub fn slot_capacity(table: &[ModulationRow], gsnr_db: f64) -> GsnrReport {
    match table.iter().rev().find(|r| r.min_gsnr_db <= gsnr_db) {
        Some(r) => GsnrReport {
            gsnr_db,
            slot_rate_gbps: r.slot_rate_gbps,
            modulation: Some(r.modulation.clone()),
        },
        None => GsnrReport {
            gsnr_db,
            slot_rate_gbps: 0.0,
            modulation: None,
        },
    }
}

pub trait QotEstimator: Send + Sync {
    /// GSNR in dB of `candidate` on the path `links`, with the network in
    /// the state it would have once the candidate is in place.
    fn estimate_gsnr(&self, topology: &Topology, links: &[LinkIx], candidate: SlotRange, grid: &SpectrumGrid) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QotKind {
    AnalyticDefault,
    ExternalTable,
}

/// Precomputed GSNR for one path and band, used by the external-table
/// estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalGsnr {
    pub path: Vec<String>,
    pub band: Band,
    pub gsnr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QotSpec {
    pub kind: QotKind,
    pub ref_gsnr_db: f64,
    pub span_km: f64,
    pub load_penalty_db: f64,
    pub lband_offset_db: f64,
    pub table: Vec<ModulationRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub external: Vec<ExternalGsnr>,
}

impl Default for QotSpec {
    fn default() -> Self {
        Self {
            kind: QotKind::AnalyticDefault,
            ref_gsnr_db: 26.0,
            span_km: 80.0,
            load_penalty_db: 1.0,
            lband_offset_db: -0.5,
            table: default_modulation_table(),
            external: Vec::new(),
        }
    }
}

impl QotSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.span_km > 0.0) {
            return Err(format!("qot.span_km must be positive, got {}", self.span_km));
        }
        if !(self.load_penalty_db >= 0.0) {
            return Err(format!(
                "qot.load_penalty_db must be nonnegative, got {}",
                self.load_penalty_db
            ));
        }
        validate_table(&self.table).map_err(|e| format!("qot.table: {e}"))
    }

    pub fn estimator(&self, topology: &Topology) -> Result<Box<dyn QotEstimator>, String> {
        Ok(match self.kind {
            QotKind::AnalyticDefault => Box::new(AnalyticQot::from_spec(self)),
            QotKind::ExternalTable => Box::new(TableQot::new(topology, &self.external)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticQot {
    pub ref_gsnr_db: f64,
    pub span_km: f64,
    pub load_penalty_db: f64,
    pub lband_offset_db: f64,
}

impl AnalyticQot {
    pub fn from_spec(spec: &QotSpec) -> Self {
        Self {
            ref_gsnr_db: spec.ref_gsnr_db,
            span_km: spec.span_km,
            load_penalty_db: spec.load_penalty_db,
            lband_offset_db: spec.lband_offset_db,
        }
    }

    pub fn span_count(&self, topology: &Topology, links: &[LinkIx]) -> u32 {
        links
            .iter()
            .map(|&l| (topology.length_km(l) / self.span_km).ceil().max(1.0) as u32)
            .sum()
    }
}

impl QotEstimator for AnalyticQot {
    fn estimate_gsnr(&self, topology: &Topology, links: &[LinkIx], candidate: SlotRange, grid: &SpectrumGrid) -> f64 {
        if links.is_empty() {
            return f64::NEG_INFINITY;
        }
        let spans = self.span_count(topology, links);
        let per_slot = 1.0 / grid.slots_per_band() as f64;
        let load: f64 = links
            .iter()
            .map(|&l| {
                let occ = grid.band_occupancy(l, candidate.band);
                // count the candidate itself when it is not yet allocated
                if grid.is_free(l, candidate.band, candidate.start) {
                    occ + candidate.len as f64 * per_slot
                } else {
                    occ
                }
            })
            .sum::<f64>()
            / links.len() as f64;
        let offset = match candidate.band {
            Band::C => 0.0,
            Band::L => self.lband_offset_db,
        };
        self.ref_gsnr_db - 10.0 * f64::from(spans).log10() - self.load_penalty_db * load.min(1.0) + offset
    }
}

/// Load-independent GSNR looked up per (path, band). Unknown paths are
/// infeasible.
#[derive(Debug, Clone)]
pub struct TableQot {
    by_links: HashMap<(Vec<LinkIx>, Band), f64>,
}

impl TableQot {
    pub fn new(topology: &Topology, entries: &[ExternalGsnr]) -> Result<Self, String> {
        let mut by_links = HashMap::new();
        for e in entries {
            let nodes = e
                .path
                .iter()
                .map(|id| topology.node_index(id).ok_or_else(|| format!("unknown node {id:?} in qot.external")))
                .collect::<Result<Vec<_>, _>>()?;
            let mut links = topology
                .path_links(&nodes)
                .ok_or_else(|| format!("qot.external path {:?} is not a path", e.path))?;
            if links.is_empty() {
                return Err(format!("qot.external path {:?} has no links", e.path));
            }
            by_links.insert((links.clone(), e.band), e.gsnr_db);
            links.reverse();
            by_links.entry((links, e.band)).or_insert(e.gsnr_db);
        }
        Ok(Self { by_links })
    }
}

impl QotEstimator for TableQot {
    fn estimate_gsnr(&self, _topology: &Topology, links: &[LinkIx], candidate: SlotRange, _grid: &SpectrumGrid) -> f64 {
        self.by_links
            .get(&(links.to_vec(), candidate.band))
            .copied()
            .unwrap_or(f64::NEG_INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reestimate {
    pub id: LightpathId,
    pub gsnr_db: f64,
    pub slot_rate_gbps: f64,
    pub retained: bool,
}

/// Re-evaluate every active lightpath under the current grid. A lightpath is
/// retained while its slots still carry at least its SLA floor.
pub fn reestimate_all<'a>(
    estimator: &dyn QotEstimator,
    table: &[ModulationRow],
    topology: &Topology,
    grid: &SpectrumGrid,
    active: impl IntoIterator<Item = &'a Lightpath>,
) -> Vec<Reestimate> {
    active
        .into_iter()
        .map(|lp| {
            let gsnr_db = estimator.estimate_gsnr(topology, &lp.links, lp.slots, grid);
            let report = slot_capacity(table, gsnr_db);
            let achievable = report.slot_rate_gbps * lp.slots.len as f64;
            Reestimate {
                id: lp.id,
                gsnr_db,
                slot_rate_gbps: report.slot_rate_gbps,
                retained: achievable >= lp.min_rate_gbps,
            }
        })
        .collect()
}
