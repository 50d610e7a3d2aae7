//! Discrete-event driver. Events at one tick are handled in the order
//! departures, re-estimation, arrivals, retry sweep; arrivals within a tick
//! follow request id.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::SimConfig;
use crate::error::{ConfigError, SimError};
use crate::metrics::{hourly_utilization, MetricsReport, TypeCounts};
use crate::provisioning::{handle, retry_pending, Network, Outcome, PendingEntry, PendingQueue};
use crate::qot::{reestimate_all, slot_capacity, QotEstimator};
use crate::routing::{CandidatePlan, Router};
use crate::schedule::{PeakSchedule, TICKS_PER_DAY, TICKS_PER_HOUR};
use crate::spectrum::{BandPlan, Lightpath, LightpathId, SpectrumGrid};
use crate::topology::{load_topology, Topology};
use crate::traffic::{Request, TrafficGenerator, TrafficType};

/// A validated configuration with its topology and QoT model loaded.
pub struct Experiment {
    pub config: SimConfig,
    pub topology: Topology,
    estimator: Box<dyn QotEstimator>,
    plan: BandPlan,
    schedule: PeakSchedule,
    config_hash: String,
}

impl Experiment {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        let topology = load_topology(&config.topology).map_err(ConfigError::from)?;
        Self::with_topology(config, topology)
    }

    pub fn with_topology(config: SimConfig, topology: Topology) -> Result<Self, SimError> {
        config.validate()?;
        let estimator = config.qot.estimator(&topology).map_err(ConfigError::Invalid)?;
        Ok(Self {
            plan: config.band_plan(),
            schedule: config.schedule(),
            config_hash: config.hash(),
            config,
            topology,
            estimator,
        })
    }

    pub fn plan(&self) -> &BandPlan {
        &self.plan
    }

    pub fn schedule(&self) -> &PeakSchedule {
        &self.schedule
    }

    /// The same experiment with a different strategy and band plan.
    pub fn cell(&self, strategy: crate::provisioning::StrategyKind, band: crate::spectrum::BandPlanKind) -> Result<Self, SimError> {
        let mut config = self.config.clone();
        config.strategy = strategy;
        config.band_plan = band;
        Self::with_topology(config, self.topology.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKind {
    Departure,
    Reestimate,
    Arrival,
    RetrySweep,
}

/// One line of the optional event log.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeRecord {
    pub tick: u64,
    pub request_id: u64,
    pub type_id: TrafficType,
    pub outcome: &'static str,
    pub rate_gbps: f64,
    pub path: Vec<usize>,
    pub slots: Option<String>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Check slot conservation after every tick.
    pub audit: bool,
    pub record_outcomes: bool,
}

struct Active {
    lightpath: Lightpath,
    type_id: TrafficType,
    counted: bool,
}

struct Fabric<'r, 'a> {
    router: &'r Router<'a>,
    grid: &'r mut SpectrumGrid,
    plan: &'r BandPlan,
    error: Option<crate::error::SpectrumError>,
}

impl Network for Fabric<'_, '_> {
    fn rsa(&self, request: &Request, rate_gbps: f64) -> Option<CandidatePlan> {
        self.router.rsa(request.s, request.d, rate_gbps, self.grid, self.plan)
    }
}

pub struct Simulation<'a> {
    exp: &'a Experiment,
    router: Router<'a>,
    grid: SpectrumGrid,
    generator: TrafficGenerator<'a>,
    queue: PendingQueue,
    events: BinaryHeap<Reverse<(u64, EventKind, u64)>>,
    active: BTreeMap<LightpathId, Active>,
    counts: [TypeCounts; 5],
    samples: Vec<(u64, f64)>,
    last_util: f64,
    hasher: Sha256,
    log: Vec<OutcomeRecord>,
    options: RunOptions,
    horizon: u64,
    now: u64,
    seed: u64,
}

impl<'a> Simulation<'a> {
    pub fn new(exp: &'a Experiment, seed: u64, options: RunOptions) -> Self {
        let c = &exp.config;
        let router = Router::new(&exp.topology, &c.routing, exp.estimator.as_ref(), &c.qot.table);
        let start = (c.traffic.start_hour * TICKS_PER_HOUR as f64).round() as u64;
        let generator = TrafficGenerator::new(
            &c.traffic.types,
            &exp.topology,
            exp.schedule,
            c.traffic.load_scale,
            start,
            c.demands_per_seed,
            seed,
        );
        let mut events = BinaryHeap::new();
        events.push(Reverse((0, EventKind::Reestimate, 0)));
        Self {
            exp,
            router,
            grid: SpectrumGrid::new(exp.topology.link_count(), &exp.plan),
            generator,
            queue: PendingQueue::new(),
            events,
            active: BTreeMap::new(),
            counts: Default::default(),
            samples: Vec::new(),
            last_util: 0.0,
            hasher: Sha256::new(),
            log: Vec::new(),
            options,
            horizon: c.horizon_days * TICKS_PER_DAY,
            now: 0,
            seed,
        }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn grid(&self) -> &SpectrumGrid {
        &self.grid
    }

    pub fn active_lightpaths(&self) -> impl Iterator<Item = &Lightpath> {
        self.active.values().map(|a| &a.lightpath)
    }

    pub fn pending(&self) -> &PendingQueue {
        &self.queue
    }

    pub fn outcomes(&self) -> &[OutcomeRecord] {
        &self.log
    }

    /// Utilization step function: (tick, value) at every change.
    pub fn samples(&self) -> &[(u64, f64)] {
        &self.samples
    }

    fn finished(&self) -> bool {
        self.generator.peek_tick().is_none() && self.active.is_empty() && self.queue.is_empty()
    }

    fn next_tick(&self) -> Option<u64> {
        let heap = self.events.peek().map(|Reverse((t, _, _))| *t);
        let arrival = self.generator.peek_tick();
        let t = match (heap, arrival) {
            (Some(a), Some(b)) => a.min(b),
            (a, b) => a.or(b)?,
        };
        (t < self.horizon).then_some(t)
    }

    /// Process every event at the next tick. Returns `false` once the run
    /// is over.
    pub fn step(&mut self) -> Result<bool, SimError> {
        if self.finished() {
            return Ok(false);
        }
        let Some(t) = self.next_tick() else {
            return Ok(false);
        };
        self.now = t;
        let mut departures = Vec::new();
        let mut reestimate = false;
        let mut sweep = false;
        while let Some(&Reverse((at, kind, id))) = self.events.peek() {
            if at != t {
                break;
            }
            self.events.pop();
            match kind {
                EventKind::Departure => departures.push(id),
                EventKind::Reestimate => reestimate = true,
                EventKind::RetrySweep => sweep = true,
                EventKind::Arrival => unreachable!("arrivals come from the generator"),
            }
        }
        let mut freed = false;
        for id in departures {
            // lightpaths dropped earlier have already left
            if self.active.remove(&LightpathId(id)).is_some() {
                self.release(LightpathId(id))?;
                freed = true;
            }
        }
        if reestimate {
            freed |= self.reestimate()?;
            let next = self.exp.schedule.next_reestimate(t);
            self.events.push(Reverse((next, EventKind::Reestimate, 0)));
        }
        while self.generator.peek_tick() == Some(t) {
            let request = self.generator.next().expect("peeked");
            self.arrive(request)?;
        }
        if sweep || freed {
            self.sweep(freed)?;
        }
        let u = self.grid.utilization();
        if u != self.last_util {
            self.samples.push((t, u));
            self.last_util = u;
        }
        if self.options.audit {
            self.audit()?;
        }
        Ok(true)
    }

    pub fn audit(&self) -> Result<(), SimError> {
        let expected: u64 = self.active.values().map(|a| a.lightpath.slot_links()).sum();
        let grid = self.grid.occupied_slot_links();
        if grid != expected || self.grid.active_count() != self.active.len() {
            return Err(SimError::Conservation {
                tick: self.now,
                grid,
                expected,
            });
        }
        Ok(())
    }

    fn counted(&self, r: &Request) -> bool {
        !(self.exp.config.metrics.exclude_first_day && r.arrived_at < TICKS_PER_DAY)
    }

    fn tally(&mut self, r: &Request, f: impl FnOnce(&mut TypeCounts)) {
        if self.counted(r) {
            f(&mut self.counts[r.type_id.index()]);
        }
    }

    fn record(&mut self, t: u64, r: &Request, outcome: &'static str, plan: Option<(&CandidatePlan, f64)>) {
        if !self.options.record_outcomes {
            return;
        }
        self.log.push(OutcomeRecord {
            tick: t,
            request_id: r.id,
            type_id: r.type_id,
            outcome,
            rate_gbps: plan.map_or(r.gamma_gbps, |(_, rate)| rate),
            path: plan.map(|(p, _)| p.path.clone()).unwrap_or_default(),
            slots: plan.map(|(p, _)| p.slots.to_string()),
        });
    }

    fn release(&mut self, id: LightpathId) -> Result<(), SimError> {
        self.grid
            .release(id)
            .map_err(|source| SimError::Spectrum { tick: self.now, source })
    }

    fn arrive(&mut self, mut request: Request) -> Result<(), SimError> {
        let t = self.now;
        self.hasher.update(request.canonical().as_bytes());
        self.hasher.update(b"\n");
        self.tally(&request, |c| c.requests += 1);
        let strategy = self.exp.config.strategy;
        let fabric = Fabric {
            router: &self.router,
            grid: &mut self.grid,
            plan: &self.exp.plan,
            error: None,
        };
        let outcome = handle(strategy, &mut request, t, &self.exp.schedule, false, &fabric);
        if let Outcome::Provisioned { plan, .. } = &outcome {
            fabric
                .grid
                .allocate(LightpathId(request.id), &plan.links, plan.slots)
                .map_err(|source| SimError::Spectrum { tick: t, source })?;
        }
        self.resolve(request, outcome, t, true);
        Ok(())
    }

    fn sweep(&mut self, freed: bool) -> Result<(), SimError> {
        let t = self.now;
        let strategy = self.exp.config.strategy;
        let mut fabric = Fabric {
            router: &self.router,
            grid: &mut self.grid,
            plan: &self.exp.plan,
            error: None,
        };
        let retries = retry_pending(strategy, &mut self.queue, t, &self.exp.schedule, freed, &mut fabric, |net, r, o| {
            if let Outcome::Provisioned { plan, .. } = o {
                if let Err(e) = net.grid.allocate(LightpathId(r.id), &plan.links, plan.slots) {
                    net.error.get_or_insert(e);
                }
            }
        });
        if let Some(source) = fabric.error {
            return Err(SimError::Spectrum { tick: t, source });
        }
        for retry in retries {
            match retry.outcome {
                Outcome::Delayed {
                    deferred_until: Some(at),
                } => {
                    self.events.push(Reverse((at, EventKind::RetrySweep, retry.request.id)));
                    self.record(t, &retry.request, "deferred", None);
                }
                Outcome::Delayed { .. } => {}
                outcome => self.resolve(retry.request, outcome, t, false),
            }
        }
        Ok(())
    }

    /// Bookkeeping for a decided request. Spectrum for provisioned outcomes
    /// is already allocated.
    fn resolve(&mut self, request: Request, outcome: Outcome, t: u64, fresh: bool) {
        match outcome {
            Outcome::Provisioned {
                plan,
                rate_gbps,
                compressed,
            } => {
                self.tally(&request, |c| {
                    c.provisioned += 1;
                    c.compressed += compressed as u64;
                });
                self.record(t, &request, if compressed { "provisioned_compressed" } else { "provisioned" }, Some((&plan, rate_gbps)));
                let id = LightpathId(request.id);
                let expires_at = t + request.tau_ticks;
                self.events.push(Reverse((expires_at, EventKind::Departure, id.0)));
                let counted = self.counted(&request);
                self.active.insert(
                    id,
                    Active {
                        lightpath: Lightpath {
                            id,
                            request_id: request.id,
                            path: plan.path,
                            links: plan.links,
                            slots: plan.slots,
                            rate_gbps,
                            min_rate_gbps: request.gamma_min_gbps,
                            capacity_gbps: plan.rate_gbps,
                            gsnr_db: plan.gsnr_db,
                            modulation: plan.modulation,
                            compressed,
                            provisioned_at: t,
                            expires_at,
                        },
                        type_id: request.type_id,
                        counted,
                    },
                );
            }
            Outcome::Delayed { deferred_until } => {
                debug_assert!(fresh);
                self.tally(&request, |c| c.delayed += 1);
                let entry = PendingEntry::new(request, t, deferred_until);
                for at in entry.wake_ticks() {
                    self.events.push(Reverse((at, EventKind::RetrySweep, entry.request.id)));
                }
                let label = if deferred_until.is_some() { "deferred" } else { "delayed" };
                self.record(t, &entry.request, label, None);
                self.queue.push(entry);
            }
            Outcome::Blocked => {
                self.tally(&request, |c| c.blocked += 1);
                self.record(t, &request, "blocked", None);
            }
        }
    }

    /// Re-evaluate every active lightpath and drop those below their SLA
    /// floor. Returns whether any spectrum was freed.
    fn reestimate(&mut self) -> Result<bool, SimError> {
        if self.active.is_empty() {
            return Ok(false);
        }
        let c = &self.exp.config;
        let results = reestimate_all(
            self.exp.estimator.as_ref(),
            &c.qot.table,
            &self.exp.topology,
            &self.grid,
            self.active.values().map(|a| &a.lightpath),
        );
        let mut freed = false;
        for r in results {
            if r.retained {
                let a = self.active.get_mut(&r.id).expect("active");
                a.lightpath.gsnr_db = r.gsnr_db;
                a.lightpath.capacity_gbps = r.slot_rate_gbps * a.lightpath.slots.len as f64;
                a.lightpath.modulation = slot_capacity(&c.qot.table, r.gsnr_db).modulation.unwrap_or_default();
                continue;
            }
            let a = self.active.remove(&r.id).expect("active");
            self.release(r.id)?;
            freed = true;
            if a.counted {
                self.counts[a.type_id.index()].dropped += 1;
            }
            if self.options.record_outcomes {
                self.log.push(OutcomeRecord {
                    tick: self.now,
                    request_id: a.lightpath.request_id,
                    type_id: a.type_id,
                    outcome: "dropped",
                    rate_gbps: a.lightpath.rate_gbps,
                    path: a.lightpath.path.clone(),
                    slots: Some(a.lightpath.slots.to_string()),
                });
            }
        }
        Ok(freed)
    }

    /// Run to completion and build the report.
    pub fn run(mut self) -> Result<(MetricsReport, Vec<OutcomeRecord>), SimError> {
        while self.step()? {}
        let pending: Vec<Request> = self.queue.iter().map(|e| e.request.clone()).collect();
        for r in &pending {
            self.tally(r, |c| c.pending += 1);
        }
        let c = &self.exp.config;
        let n_days = c.horizon_days as usize;
        let per_type = TrafficType::ALL
            .iter()
            .map(|&t| (t, self.counts[t.index()].clone()))
            .filter(|(t, _)| c.traffic.types.iter().any(|s| s.type_id == *t))
            .collect::<BTreeMap<_, _>>();
        let sum = |f: fn(&TypeCounts) -> u64| self.counts.iter().map(f).sum::<u64>();
        let report = MetricsReport {
            seed: self.seed,
            strategy: c.strategy,
            band_plan: c.band_plan,
            config_hash: self.exp.config_hash.clone(),
            stream_hash: hex::encode(self.hasher.finalize_reset()),
            n_requests: sum(|c| c.requests),
            n_blocked: sum(|c| c.blocked),
            n_dropped: sum(|c| c.dropped),
            n_provisioned: sum(|c| c.provisioned),
            n_compressed: sum(|c| c.compressed),
            n_delayed: sum(|c| c.delayed),
            n_pending: sum(|c| c.pending),
            per_type,
            hourly_utilization: hourly_utilization(&self.samples, n_days),
            snapshot_day: c.metrics.snapshot_day,
            end_tick: self.now,
        };
        Ok((report, self.log))
    }
}

pub fn run_with(exp: &Experiment, seed: u64, options: RunOptions) -> Result<(MetricsReport, Vec<OutcomeRecord>), SimError> {
    Simulation::new(exp, seed, options).run()
}

pub fn run(exp: &Experiment, seed: u64) -> Result<MetricsReport, SimError> {
    run_with(exp, seed, RunOptions::default()).map(|(r, _)| r)
}

/// Run every configured seed in parallel; results come back sorted by seed.
pub fn run_batch_with(exp: &Experiment, options: RunOptions) -> Result<Vec<(MetricsReport, Vec<OutcomeRecord>)>, SimError> {
    let mut seeds = exp.config.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    seeds
        .par_iter()
        .map(|&seed| {
            run_with(exp, seed, options).map_err(|e| SimError::Seed {
                seed,
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn run_batch(exp: &Experiment) -> Result<Vec<MetricsReport>, SimError> {
    Ok(run_batch_with(exp, RunOptions::default())?
        .into_iter()
        .map(|(r, _)| r)
        .collect())
}

/// One CSV line per outcome: tick, request_id, type, outcome, rate_gbps,
/// path (node ids joined by `-`), slots.
pub fn write_event_log(path: &std::path::Path, records: &[OutcomeRecord], topology: &Topology) -> Result<(), crate::error::ExportError> {
    let err = |source| crate::error::ExportError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["tick", "request_id", "type", "outcome", "rate_gbps", "path", "slots"])
        .map_err(err)?;
    for r in records {
        let nodes: Vec<&str> = r.path.iter().map(|&n| topology.node_id(n)).collect();
        w.write_record([
            r.tick.to_string(),
            r.request_id.to_string(),
            r.type_id.to_string(),
            r.outcome.to_string(),
            r.rate_gbps.to_string(),
            nodes.join("-"),
            r.slots.clone().unwrap_or_default(),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| crate::error::ExportError::Io {
        path: path.to_path_buf(),
        source: e.into_error(),
    })?;
    crate::metrics::write_atomic(path, &bytes)
}

/// Run the strategy × band-plan cross product over the configured seeds.
/// Reports are ordered by band plan, then strategy, then seed, following
/// the sweep axes.
pub fn run_sweep(exp: &Experiment) -> Result<Vec<MetricsReport>, SimError> {
    let sweep = &exp.config.sweep;
    let cells = sweep
        .band_plans
        .iter()
        .flat_map(|&b| sweep.strategies.iter().map(move |&s| (s, b)))
        .map(|(s, b)| exp.cell(s, b))
        .collect::<Result<Vec<_>, _>>()?;
    let per_cell = cells.par_iter().map(run_batch).collect::<Result<Vec<_>, _>>()?;
    Ok(per_cell.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provisioning::StrategyKind;
    use crate::topology::{LinkSpec, NodeSpec, TopologyFile};
    use crate::traffic::{Minutes, TrafficTypeSpec};

    fn pair() -> Topology {
        Topology::from_file(TopologyFile {
            name: None,
            nodes: ["a", "b"]
                .iter()
                .map(|id| NodeSpec {
                    id: id.to_string(),
                    gen_prob: 0.5,
                })
                .collect(),
            links: vec![LinkSpec {
                a: "a".into(),
                b: "b".into(),
                length_km: 50.0,
            }],
        })
        .unwrap()
    }

    fn type1(lambda: f64, holding: f64) -> TrafficTypeSpec {
        TrafficTypeSpec {
            type_id: TrafficType::T1,
            holding_min: Minutes::Fixed(holding),
            lambda_peak: lambda,
            lambda_offpeak: lambda,
            phi: None,
            delta_min: None,
            rates_gbps: vec![100.0],
        }
    }

    fn config(slots: usize, lambda: f64, demands: u64) -> SimConfig {
        let mut c = SimConfig::default();
        c.strategy = StrategyKind::NDNC;
        c.spectrum.slots_per_band = slots;
        c.traffic.types = vec![type1(lambda, 10.0)];
        c.demands_per_seed = demands;
        c.horizon_days = 1;
        c
    }

    #[test]
    fn singleton_is_provisioned_and_leaves() {
        let exp = Experiment::with_topology(config(133, 1e-3, 1), pair()).unwrap();
        let (r, log) = run_with(
            &exp,
            1,
            RunOptions {
                audit: true,
                record_outcomes: true,
            },
        )
        .unwrap();
        assert_eq!((r.n_requests, r.n_provisioned, r.n_blocked), (1, 1, 0));
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].outcome, "provisioned");
        r.check_conservation().unwrap();
    }

    #[test]
    fn single_slot_two_overlapping_requests() {
        let exp = Experiment::with_topology(config(1, 1.0, 2), pair()).unwrap();
        let r = run(&exp, 3).unwrap();
        assert_eq!(r.n_requests, 2);
        // arrivals at rate 1/s against a 600 s holding time overlap
        assert_eq!(r.n_blocked, 1);
        assert_eq!(r.n_provisioned, 1);
    }

    #[test]
    fn same_seed_same_report() {
        let mut c = config(8, 0.05, 300);
        c.traffic.types[0].rates_gbps = vec![100.0, 400.0];
        let exp = Experiment::with_topology(c, pair()).unwrap();
        assert_eq!(run(&exp, 9).unwrap(), run(&exp, 9).unwrap());
    }

    #[test]
    fn batch_matches_separate_runs() {
        let mut c = config(4, 0.05, 100);
        c.seeds = vec![5, 2];
        let exp = Experiment::with_topology(c, pair()).unwrap();
        let batch = run_batch(&exp).unwrap();
        assert_eq!(batch, vec![run(&exp, 2).unwrap(), run(&exp, 5).unwrap()]);
    }

    #[test]
    fn departure_exactly_tau_after_provisioning() {
        let exp = Experiment::with_topology(config(133, 0.01, 50), pair()).unwrap();
        let mut sim = Simulation::new(&exp, 4, RunOptions::default());
        let mut seen: BTreeMap<LightpathId, (u64, u64)> = BTreeMap::new();
        let mut left = Vec::new();
        while sim.step().unwrap() {
            let now = sim.now();
            let ids: Vec<_> = sim.active_lightpaths().map(|l| l.id).collect();
            for lp in sim.active_lightpaths() {
                seen.entry(lp.id).or_insert((lp.provisioned_at, lp.expires_at));
            }
            for (id, &(_, exp_at)) in &seen {
                if !ids.contains(id) && !left.iter().any(|(l, _)| l == id) {
                    left.push((*id, now));
                    assert_eq!(now, exp_at);
                }
            }
        }
        assert_eq!(left.len(), 50);
        for (id, _) in left {
            let (p, e) = seen[&id];
            assert_eq!(e - p, 600);
        }
    }

    #[test]
    fn horizon_leaves_pending_and_active() {
        let mut c = config(133, 1.0, 10);
        c.traffic.types[0].holding_min = Minutes::Fixed(10_000.0);
        let exp = Experiment::with_topology(c, pair()).unwrap();
        let r = run(&exp, 1).unwrap();
        assert_eq!(r.n_provisioned, 10);
        assert!(r.end_tick < TICKS_PER_DAY);
        r.check_conservation().unwrap();
    }
}
