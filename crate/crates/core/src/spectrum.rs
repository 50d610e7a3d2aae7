//! Per-link, per-band frequency slot occupancy and first-fit allocation.
//!
//! Each undirected link carries one grid per band. Occupancy is kept as a
//! bitset (for the first-fit scans) alongside an owner table (for release
//! and invariant checks).

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::SpectrumError;
use crate::topology::{LinkIx, NodeIx};

pub const DEFAULT_SLOTS_PER_BAND: usize = 133;
pub const DEFAULT_SLOT_WIDTH_GHZ: f64 = 37.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Band {
    C,
    L,
}

impl Band {
    /// Position of the band in every plan; C always comes first.
    pub fn index(self) -> usize {
        match self {
            Band::C => 0,
            Band::L => 1,
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Band::C => f.write_str("C"),
            Band::L => f.write_str("L"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BandPlanKind {
    #[serde(rename = "C")]
    C,
    #[serde(rename = "C+L")]
    CL,
}

impl BandPlanKind {
    pub fn bands(self) -> &'static [Band] {
        match self {
            BandPlanKind::C => &[Band::C],
            BandPlanKind::CL => &[Band::C, Band::L],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            BandPlanKind::C => "C",
            BandPlanKind::CL => "C+L",
        }
    }
}

impl fmt::Display for BandPlanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandPlan {
    pub kind: BandPlanKind,
    pub slots_per_band: usize,
    pub slot_width_ghz: f64,
}

impl BandPlan {
    pub fn new(kind: BandPlanKind, slots_per_band: usize, slot_width_ghz: f64) -> Self {
        Self {
            kind,
            slots_per_band,
            slot_width_ghz,
        }
    }

    pub fn c_only() -> Self {
        Self::new(BandPlanKind::C, DEFAULT_SLOTS_PER_BAND, DEFAULT_SLOT_WIDTH_GHZ)
    }

    pub fn c_plus_l() -> Self {
        Self::new(BandPlanKind::CL, DEFAULT_SLOTS_PER_BAND, DEFAULT_SLOT_WIDTH_GHZ)
    }

    pub fn bands(&self) -> &'static [Band] {
        self.kind.bands()
    }

    pub fn total_slots(&self) -> usize {
        self.bands().len() * self.slots_per_band
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SlotRange {
    pub band: Band,
    pub start: usize,
    pub len: usize,
}

impl SlotRange {
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

impl fmt::Display for SlotRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}..{})", self.band, self.start, self.end())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LightpathId(pub u64);

impl fmt::Display for LightpathId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// An admitted connection: same slot range on every link of its path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lightpath {
    pub id: LightpathId,
    pub request_id: u64,
    pub path: Vec<NodeIx>,
    pub links: Vec<LinkIx>,
    pub slots: SlotRange,
    /// Rate carried for the request (compressed rate when compressed).
    pub rate_gbps: f64,
    /// SLA floor.
    pub min_rate_gbps: f64,
    /// Rate the slots support at the last estimate.
    pub capacity_gbps: f64,
    pub gsnr_db: f64,
    pub modulation: String,
    pub compressed: bool,
    pub provisioned_at: u64,
    pub expires_at: u64,
}

impl Lightpath {
    pub fn slot_links(&self) -> u64 {
        (self.slots.len * self.links.len()) as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Allocation {
    links: Vec<LinkIx>,
    range: SlotRange,
}

/// Slot occupancy over all links and bands of a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumGrid {
    n_links: usize,
    n_bands: usize,
    slots: usize,
    words: usize,
    occupied: Vec<u64>,
    owner: Vec<Option<LightpathId>>,
    band_counts: Vec<u32>,
    total: u64,
    allocations: HashMap<LightpathId, Allocation>,
}

impl SpectrumGrid {
    pub fn new(n_links: usize, plan: &BandPlan) -> Self {
        let n_bands = plan.bands().len();
        let slots = plan.slots_per_band;
        let words = slots.div_ceil(64);
        Self {
            n_links,
            n_bands,
            slots,
            words,
            occupied: vec![0; n_links * n_bands * words],
            owner: vec![None; n_links * n_bands * slots],
            band_counts: vec![0; n_links * n_bands],
            total: 0,
            allocations: HashMap::new(),
        }
    }

    pub fn link_count(&self) -> usize {
        self.n_links
    }

    pub fn slots_per_band(&self) -> usize {
        self.slots
    }

    fn words_of(&self, link: LinkIx, band: usize) -> &[u64] {
        let base = (link * self.n_bands + band) * self.words;
        &self.occupied[base..base + self.words]
    }

    fn owner_index(&self, link: LinkIx, band: usize, slot: usize) -> usize {
        (link * self.n_bands + band) * self.slots + slot
    }

    pub fn is_free(&self, link: LinkIx, band: Band, slot: usize) -> bool {
        self.owner_of(link, band, slot).is_none()
    }

    pub fn owner_of(&self, link: LinkIx, band: Band, slot: usize) -> Option<LightpathId> {
        self.owner[self.owner_index(link, band.index(), slot)]
    }

    /// Occupied slot·links over the whole grid.
    pub fn occupied_slot_links(&self) -> u64 {
        self.total
    }

    pub fn capacity_slot_links(&self) -> u64 {
        (self.n_links * self.n_bands * self.slots) as u64
    }

    /// Fraction of slots in use on one band of one link.
    pub fn band_occupancy(&self, link: LinkIx, band: Band) -> f64 {
        f64::from(self.band_counts[link * self.n_bands + band.index()]) / self.slots as f64
    }

    pub fn active_count(&self) -> usize {
        self.allocations.len()
    }

    pub fn range_of(&self, id: LightpathId) -> Option<(&[LinkIx], SlotRange)> {
        self.allocations.get(&id).map(|a| (a.links.as_slice(), a.range))
    }

    /// Lowest start of `n_slots` contiguous slots free on every link, within
    /// one band.
    pub fn first_fit_in_band(&self, links: &[LinkIx], band: Band, n_slots: usize) -> Option<SlotRange> {
        let b = band.index();
        if n_slots == 0 || n_slots > self.slots || b >= self.n_bands {
            return None;
        }
        if self.words > 8 {
            return self.first_fit_slow(links, band, n_slots);
        }
        let mut mask = [0u64; 8];
        for &l in links {
            for (m, w) in mask.iter_mut().zip(self.words_of(l, b)) {
                *m |= w;
            }
        }
        let mut run = 0;
        for slot in 0..self.slots {
            if mask[slot / 64] >> (slot % 64) & 1 == 0 {
                run += 1;
                if run == n_slots {
                    return Some(SlotRange {
                        band,
                        start: slot + 1 - n_slots,
                        len: n_slots,
                    });
                }
            } else {
                run = 0;
            }
        }
        None
    }

    fn first_fit_slow(&self, links: &[LinkIx], band: Band, n_slots: usize) -> Option<SlotRange> {
        let mut run = 0;
        for slot in 0..self.slots {
            if links.iter().all(|&l| self.is_free(l, band, slot)) {
                run += 1;
                if run == n_slots {
                    return Some(SlotRange {
                        band,
                        start: slot + 1 - n_slots,
                        len: n_slots,
                    });
                }
            } else {
                run = 0;
            }
        }
        None
    }

    pub fn allocate(&mut self, id: LightpathId, links: &[LinkIx], range: SlotRange) -> Result<(), SpectrumError> {
        if range.end() > self.slots || range.len == 0 {
            return Err(SpectrumError::OutOfRange {
                start: range.start,
                len: range.len,
                slots: self.slots,
            });
        }
        if self.allocations.contains_key(&id) {
            return Err(SpectrumError::DuplicateLightpath(id.0));
        }
        let b = range.band.index();
        for &l in links {
            for slot in range.start..range.end() {
                if let Some(owner) = self.owner[self.owner_index(l, b, slot)] {
                    return Err(SpectrumError::Collision {
                        link: l,
                        band: b,
                        slot,
                        owner: owner.0,
                    });
                }
            }
        }
        for &l in links {
            self.set_range(l, b, range, Some(id));
        }
        self.allocations.insert(
            id,
            Allocation {
                links: links.to_vec(),
                range,
            },
        );
        Ok(())
    }

    pub fn release(&mut self, id: LightpathId) -> Result<(), SpectrumError> {
        let alloc = self
            .allocations
            .remove(&id)
            .ok_or(SpectrumError::UnknownLightpath(id.0))?;
        let b = alloc.range.band.index();
        for &l in &alloc.links {
            self.set_range(l, b, alloc.range, None);
        }
        Ok(())
    }

    fn set_range(&mut self, link: LinkIx, band: usize, range: SlotRange, owner: Option<LightpathId>) {
        let base = (link * self.n_bands + band) * self.words;
        for slot in range.start..range.end() {
            let bit = 1u64 << (slot % 64);
            let word = &mut self.occupied[base + slot / 64];
            match owner {
                Some(_) => *word |= bit,
                None => *word &= !bit,
            }
            let oi = self.owner_index(link, band, slot);
            self.owner[oi] = owner;
        }
        let n = range.len as u32;
        let count = &mut self.band_counts[link * self.n_bands + band];
        match owner {
            Some(_) => {
                *count += n;
                self.total += u64::from(n);
            }
            None => {
                *count -= n;
                self.total -= u64::from(n);
            }
        }
    }

    /// Occupied slot·links over total slot·links; every slot weighs the same.
    pub fn utilization(&self) -> f64 {
        let cap = self.capacity_slot_links();
        if cap == 0 {
            0.0
        } else {
            self.total as f64 / cap as f64
        }
    }

    /// Debug dump: one `link_id,band,slot,owner` row per occupied slot.
    pub fn write_snapshot_csv<W: Write>(&self, mut out: W, plan: &BandPlan) -> std::io::Result<()> {
        writeln!(out, "link_id,band,slot,owner")?;
        for link in 0..self.n_links {
            for &band in plan.bands() {
                for slot in 0..self.slots {
                    if let Some(id) = self.owner_of(link, band, slot) {
                        writeln!(out, "{link},{band},{slot},{id}")?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// First fit over the bands of a plan, C before L.
pub fn first_fit(grid: &SpectrumGrid, links: &[LinkIx], plan: &BandPlan, n_slots: usize) -> Option<SlotRange> {
    plan.bands()
        .iter()
        .find_map(|&band| grid.first_fit_in_band(links, band, n_slots))
}

pub fn utilization(grid: &SpectrumGrid) -> f64 {
    grid.utilization()
}
