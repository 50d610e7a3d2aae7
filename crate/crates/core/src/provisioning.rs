//! Provisioning strategies and the pending (delayed) request queue.
//!
//! Every strategy first tries to route the request at its full rate. What
//! happens on failure depends on the strategy and the traffic type:
//!
//! | type | NDNC  | DA                 | CA       | DACA                          |
//! |------|-------|--------------------|----------|-------------------------------|
//! | 1    | block | block              | block    | block                         |
//! | 2a   | block | delay, then block  | compress | delay, then compress          |
//! | 2b   | block | block              | compress | compress                      |
//! | 3a   | block | delay, then block  | block    | delay, then block             |
//! | 3b   | block | defer/delay, block | block    | defer/delay, then block       |
//!
//! "Defer" is the 3b window rule: a 3b request whose deadline `t + δ`
//! lands inside `(p_s, p'_e)` is held until `p'_e` with its budget zeroed.
//! Delays advance one tick at a time, decrementing `δ` by one per tick.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::routing::CandidatePlan;
use crate::schedule::{PeakSchedule, TICKS_PER_DAY};
use crate::traffic::{Request, TrafficType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StrategyKind {
    NDNC,
    DA,
    CA,
    DACA,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::NDNC,
        StrategyKind::DA,
        StrategyKind::CA,
        StrategyKind::DACA,
    ];

    pub fn delays(self) -> bool {
        matches!(self, StrategyKind::DA | StrategyKind::DACA)
    }

    pub fn compresses(self) -> bool {
        matches!(self, StrategyKind::CA | StrategyKind::DACA)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Provisioned {
        plan: CandidatePlan,
        /// Rate granted to the request: γ, or φ·γ when compressed.
        rate_gbps: f64,
        compressed: bool,
    },
    /// Held for retry; `deferred_until` is set by the 3b window rule.
    Delayed { deferred_until: Option<u64> },
    Blocked,
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Provisioned { compressed: true, .. } => "provisioned_compressed",
            Outcome::Provisioned { .. } => "provisioned",
            Outcome::Delayed {
                deferred_until: Some(_),
            } => "deferred",
            Outcome::Delayed { .. } => "delayed",
            Outcome::Blocked => "blocked",
        }
    }
}

/// Read access to routing and spectrum assignment.
pub trait Network {
    fn rsa(&self, request: &Request, rate_gbps: f64) -> Option<CandidatePlan>;
}

fn provision(net: &impl Network, request: &Request, rate_gbps: f64, compressed: bool) -> Option<Outcome> {
    net.rsa(request, rate_gbps).map(|plan| Outcome::Provisioned {
        plan,
        rate_gbps,
        compressed,
    })
}

fn compress_or_block(net: &impl Network, request: &Request) -> Outcome {
    let phi = request.phi.expect("compressible types carry phi");
    provision(net, request, phi * request.gamma_gbps, true).unwrap_or(Outcome::Blocked)
}

fn delay(request: &mut Request) -> Outcome {
    request.delta_ticks -= 1;
    Outcome::Delayed { deferred_until: None }
}

/// Decide what happens to `request` at tick `t`. `deferred` marks a 3b
/// request that has already been held by the window rule; it is never
/// held a second time. The request's remaining `delta_ticks` is updated in
/// place.
pub fn handle(
    strategy: StrategyKind,
    request: &mut Request,
    t: u64,
    schedule: &PeakSchedule,
    deferred: bool,
    net: &impl Network,
) -> Outcome {
    if let Some(done) = provision(net, request, request.gamma_gbps, false) {
        return done;
    }
    use StrategyKind::*;
    use TrafficType::*;
    match (strategy, request.type_id) {
        (NDNC, _) | (_, T1) => Outcome::Blocked,
        (CA, T2a | T2b) | (DACA, T2b) => compress_or_block(net, request),
        (CA, _) => Outcome::Blocked,
        (DA | DACA, T2a) if request.delta_ticks > 0 => delay(request),
        (DA, T2a) => Outcome::Blocked,
        (DACA, T2a) => compress_or_block(net, request),
        (DA, T2b) => Outcome::Blocked,
        (DA | DACA, T3a) if request.delta_ticks > 0 => delay(request),
        (DA | DACA, T3b) if !deferred && schedule.in_deferral_window(t, request.delta_ticks) => {
            request.delta_ticks = 0;
            Outcome::Delayed {
                deferred_until: Some(schedule.deferral_target(t)),
            }
        }
        (DA | DACA, T3b) if request.delta_ticks > 0 => delay(request),
        // budget exhausted: one last attempt at full rate
        (DA | DACA, T3a | T3b) => provision(net, request, request.gamma_gbps, false).unwrap_or(Outcome::Blocked),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendingEntry {
    pub request: Request,
    pub enqueued_at: u64,
    /// Tick at which the delay budget reaches zero.
    pub deadline: u64,
    pub deferred_until: Option<u64>,
}

impl PendingEntry {
    /// Entry for a request that was just delayed at tick `t`. `request`
    /// already carries the decremented budget.
    pub fn new(request: Request, t: u64, deferred_until: Option<u64>) -> Self {
        let deadline = match deferred_until {
            Some(at) => at,
            None => t + request.delta_ticks + 1,
        };
        Self {
            request,
            enqueued_at: t,
            deadline,
            deferred_until,
        }
    }

    /// Next tick at which this entry must be retried even if no capacity
    /// frees up.
    pub fn wake_at(&self) -> u64 {
        self.deferred_until.unwrap_or(self.deadline)
    }

    /// Every tick at which this entry must be retried regardless of
    /// releases: its deadline or deferral end, plus any midnight before the
    /// deadline of a 3b entry, since the window test depends on the time of
    /// day.
    pub fn wake_ticks(&self) -> Vec<u64> {
        let mut ticks = Vec::new();
        if self.deferred_until.is_none() && self.request.type_id == TrafficType::T3b {
            let mut day = PeakSchedule::day_start(self.enqueued_at) + TICKS_PER_DAY;
            while day < self.deadline {
                ticks.push(day);
                day += TICKS_PER_DAY;
            }
        }
        ticks.push(self.wake_at());
        ticks
    }

    fn must_retry(&self, t: u64) -> bool {
        t == self.wake_at()
            || (self.deferred_until.is_none() && self.request.type_id == TrafficType::T3b && t % TICKS_PER_DAY == 0)
    }

    fn eligible(&self, t: u64) -> bool {
        t > self.enqueued_at && self.deferred_until.is_none_or(|at| at <= t)
    }
}

/// Delayed requests, kept in FIFO order of original arrival.
#[derive(Debug, Clone, Default)]
pub struct PendingQueue {
    entries: BTreeMap<u64, PendingEntry>,
}

impl PendingQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: PendingEntry) {
        self.entries.insert(entry.request.id, entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PendingEntry> {
        self.entries.values()
    }

    /// Ids to retry at tick `t`. Every eligible entry is retried after
    /// capacity was freed; otherwise only entries at one of their
    /// `wake_ticks`. Between releases RSA cannot succeed and no other input
    /// to the decision changes, so skipping those ticks changes no outcome.
    pub fn due(&self, t: u64, capacity_freed: bool) -> Vec<u64> {
        self.entries
            .values()
            .filter(|e| e.eligible(t) && (capacity_freed || e.must_retry(t)))
            .map(|e| e.request.id)
            .collect()
    }

    pub fn take(&mut self, id: u64) -> Option<PendingEntry> {
        self.entries.remove(&id)
    }
}

/// Result of retrying one pending entry. A `Delayed` outcome carrying
/// `deferred_until` means the entry was deferred during this retry.
#[derive(Debug, Clone, PartialEq)]
pub struct Retry {
    pub request: Request,
    pub outcome: Outcome,
    pub enqueued_at: u64,
}

/// Retry due entries at tick `t` in FIFO order. `commit` is called for each
/// provisioned entry before the next entry is tried, so later entries see
/// the spectrum it took. Entries still delayed stay queued.
pub fn retry_pending<N: Network>(
    strategy: StrategyKind,
    queue: &mut PendingQueue,
    t: u64,
    schedule: &PeakSchedule,
    capacity_freed: bool,
    net: &mut N,
    mut commit: impl FnMut(&mut N, &Request, &Outcome),
) -> Vec<Retry> {
    let mut out = Vec::new();
    for id in queue.due(t, capacity_freed) {
        let mut entry = queue.take(id).expect("due id is queued");
        let deferred = entry.deferred_until.is_some();
        entry.request.delta_ticks = if deferred { 0 } else { entry.deadline - t };
        let outcome = handle(strategy, &mut entry.request, t, schedule, deferred, net);
        match &outcome {
            Outcome::Delayed { deferred_until } => {
                if let Some(at) = *deferred_until {
                    entry.deferred_until = Some(at);
                    entry.deadline = at;
                }
                let enqueued_at = entry.enqueued_at;
                let request = entry.request.clone();
                queue.push(entry);
                out.push(Retry {
                    request,
                    outcome,
                    enqueued_at,
                });
            }
            _ => {
                if matches!(outcome, Outcome::Provisioned { .. }) {
                    commit(net, &entry.request, &outcome);
                }
                out.push(Retry {
                    request: entry.request,
                    outcome,
                    enqueued_at: entry.enqueued_at,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::TICKS_PER_HOUR;
    use crate::spectrum::{Band, SlotRange};
    use std::cell::Cell;

    /// Admits any rate up to `limit`; counts RSA calls.
    struct Capacity {
        limit: f64,
        calls: Cell<usize>,
    }

    impl Capacity {
        fn new(limit: f64) -> Self {
            Self {
                limit,
                calls: Cell::new(0),
            }
        }
    }

    fn plan(rate: f64) -> CandidatePlan {
        CandidatePlan {
            path: vec![0, 1],
            links: vec![0],
            slots: SlotRange {
                band: Band::C,
                start: 0,
                len: 1,
            },
            n_slots: 1,
            gsnr_db: 20.0,
            slot_rate_gbps: rate,
            rate_gbps: rate,
            modulation: "x".into(),
        }
    }

    impl Network for Capacity {
        fn rsa(&self, _r: &Request, rate: f64) -> Option<CandidatePlan> {
            self.calls.set(self.calls.get() + 1);
            (rate <= self.limit).then(|| plan(self.limit))
        }
    }

    fn request(t: TrafficType, gamma: f64, delta: u64) -> Request {
        Request {
            id: 1,
            s: 0,
            d: 1,
            gamma_gbps: gamma,
            gamma_min_gbps: if t.is_compressible() { gamma / 2.0 } else { gamma },
            type_id: t,
            phi: t.is_compressible().then_some(0.5),
            delta_ticks: delta,
            tau_ticks: 60,
            arrived_at: 0,
        }
    }

    const H: u64 = TICKS_PER_HOUR;

    fn run(s: StrategyKind, r: &mut Request, t: u64, limit: f64) -> Outcome {
        handle(s, r, t, &PeakSchedule::default(), false, &Capacity::new(limit))
    }

    #[test]
    fn daca_delays_2a_and_decrements_budget() {
        let mut r = request(TrafficType::T2a, 400.0, 2);
        assert_eq!(
            run(StrategyKind::DACA, &mut r, 0, 0.0),
            Outcome::Delayed { deferred_until: None }
        );
        assert_eq!(r.delta_ticks, 1);
    }

    #[test]
    fn daca_compresses_2b_immediately() {
        let mut r = request(TrafficType::T2b, 400.0, 0);
        match run(StrategyKind::DACA, &mut r, 0, 200.0) {
            Outcome::Provisioned {
                rate_gbps,
                compressed,
                ..
            } => {
                assert_eq!(rate_gbps, 200.0);
                assert!(compressed);
            }
            o => panic!("unexpected {o:?}"),
        }
    }

    #[test]
    fn daca_compresses_2a_only_after_budget() {
        let mut r = request(TrafficType::T2a, 400.0, 0);
        assert!(matches!(
            run(StrategyKind::DACA, &mut r, 0, 200.0),
            Outcome::Provisioned { compressed: true, .. }
        ));
        let mut r = request(TrafficType::T2a, 400.0, 0);
        assert_eq!(run(StrategyKind::DACA, &mut r, 0, 100.0), Outcome::Blocked);
    }

    #[test]
    fn ndnc_blocks_without_delay_or_compression() {
        let mut r = request(TrafficType::T2a, 400.0, 5);
        let net = Capacity::new(200.0);
        let o = handle(StrategyKind::NDNC, &mut r, 0, &PeakSchedule::default(), false, &net);
        assert_eq!(o, Outcome::Blocked);
        assert_eq!(net.calls.get(), 1);
        assert_eq!(r.delta_ticks, 5);
    }

    #[test]
    fn daca_defers_3b_inside_window() {
        let s = PeakSchedule::default();
        let mut r = request(TrafficType::T3b, 400.0, 6 * H);
        let o = run(StrategyKind::DACA, &mut r, 9 * H, 0.0);
        assert_eq!(
            o,
            Outcome::Delayed {
                deferred_until: Some(s.p_e_prime)
            }
        );
        assert_eq!(r.delta_ticks, 0);
        // arriving late at night: deadline falls outside the window
        let mut r = request(TrafficType::T3b, 400.0, 6 * H);
        assert_eq!(
            run(StrategyKind::DACA, &mut r, 23 * H, 0.0),
            Outcome::Delayed { deferred_until: None }
        );
        assert_eq!(r.delta_ticks, 6 * H - 1);
        // a deferred entry is never deferred again
        let mut r = request(TrafficType::T3b, 400.0, 0);
        let o = handle(StrategyKind::DACA, &mut r, 12 * H, &s, true, &Capacity::new(0.0));
        assert_eq!(o, Outcome::Blocked);
    }

    #[test]
    fn da_applies_window_rule_but_ca_does_not() {
        let mut r = request(TrafficType::T3b, 400.0, 6 * H);
        assert!(matches!(
            run(StrategyKind::DA, &mut r, 9 * H, 0.0),
            Outcome::Delayed {
                deferred_until: Some(_)
            }
        ));
        let mut r = request(TrafficType::T3b, 400.0, 6 * H);
        assert_eq!(run(StrategyKind::CA, &mut r, 9 * H, 0.0), Outcome::Blocked);
    }

    #[test]
    fn permitted_outcome_kinds() {
        use TrafficType::*;
        for t in TrafficType::ALL {
            for delta in [0, 3] {
                for limit in [0.0, 100.0, 200.0] {
                    for (s, can_delay, can_compress) in [
                        (StrategyKind::NDNC, false, false),
                        (StrategyKind::DA, true, false),
                        (StrategyKind::CA, false, true),
                        (StrategyKind::DACA, true, true),
                    ] {
                        let mut r = request(t, if t == T3b { 400.0 } else { 200.0 }, delta);
                        match run(s, &mut r, 9 * H, limit) {
                            Outcome::Delayed { .. } => {
                                assert!(can_delay && t.is_delayable(), "{s} {t}")
                            }
                            Outcome::Provisioned {
                                compressed: true,
                                rate_gbps,
                                ..
                            } => {
                                assert!(can_compress && t.is_compressible(), "{s} {t}");
                                assert_eq!(rate_gbps, 0.5 * r.gamma_gbps);
                            }
                            _ => {}
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn type_1_is_never_delayed_or_compressed() {
        for s in StrategyKind::ALL {
            let mut r = request(TrafficType::T1, 200.0, 0);
            assert_eq!(run(s, &mut r, 0, 100.0), Outcome::Blocked);
        }
    }

    #[test]
    fn pending_entry_deadline_tracks_budget() {
        let mut r = request(TrafficType::T3a, 100.0, 3);
        let o = run(StrategyKind::DACA, &mut r, 10, 0.0);
        assert!(matches!(o, Outcome::Delayed { .. }));
        let e = PendingEntry::new(r, 10, None);
        assert_eq!(e.deadline, 13);
        assert!(!e.eligible(10));
        assert!(e.eligible(11));
    }

    /// A mock network with an integer number of free units; each
    /// provisioned request takes one.
    struct Units {
        free: u32,
    }

    impl Network for Units {
        fn rsa(&self, _r: &Request, rate: f64) -> Option<CandidatePlan> {
            (self.free > 0).then(|| plan(rate))
        }
    }

    fn take_unit(n: &mut Units, _r: &Request, _o: &Outcome) {
        n.free -= 1;
    }

    #[test]
    fn retry_after_release_provisions_uncompressed() {
        let s = PeakSchedule::default();
        let mut net = Units { free: 0 };
        let mut q = PendingQueue::new();
        let mut r = request(TrafficType::T2a, 400.0, 4);
        let o = handle(StrategyKind::DACA, &mut r, 0, &s, false, &net);
        let Outcome::Delayed { deferred_until } = o else {
            panic!()
        };
        q.push(PendingEntry::new(r, 0, deferred_until));
        // nothing frees at tick 1: not retried
        assert!(retry_pending(StrategyKind::DACA, &mut q, 1, &s, false, &mut net, take_unit).is_empty());
        net.free = 1;
        let out = retry_pending(StrategyKind::DACA, &mut q, 2, &s, true, &mut net, take_unit);
        assert_eq!(out.len(), 1);
        assert!(matches!(
            out[0].outcome,
            Outcome::Provisioned {
                compressed: false,
                rate_gbps,
                ..
            } if rate_gbps == 400.0
        ));
        assert!(q.is_empty());
    }

    #[test]
    fn exhausted_3a_is_blocked_at_deadline() {
        let s = PeakSchedule::default();
        let mut net = Units { free: 0 };
        let mut q = PendingQueue::new();
        let mut r = request(TrafficType::T3a, 100.0, 2);
        handle(StrategyKind::DACA, &mut r, 5, &s, false, &net);
        let e = PendingEntry::new(r, 5, None);
        assert_eq!(e.wake_at(), 7);
        q.push(e);
        let out = retry_pending(StrategyKind::DACA, &mut q, 6, &s, true, &mut net, take_unit);
        assert!(matches!(out[0].outcome, Outcome::Delayed { .. }));
        assert_eq!(out[0].request.delta_ticks, 0);
        let out = retry_pending(StrategyKind::DACA, &mut q, 7, &s, false, &mut net, take_unit);
        assert_eq!(out[0].outcome, Outcome::Blocked);
        assert!(q.is_empty());
    }

    #[test]
    fn fifo_gives_capacity_to_earlier_arrival() {
        let s = PeakSchedule::default();
        let mut net = Units { free: 0 };
        let mut q = PendingQueue::new();
        for (id, t) in [(7u64, 1u64), (3, 0)] {
            let mut r = request(TrafficType::T3a, 100.0, 10);
            r.id = id;
            r.arrived_at = t;
            handle(StrategyKind::DA, &mut r, t, &s, false, &net);
            q.push(PendingEntry::new(r, t, None));
        }
        net.free = 1;
        let out = retry_pending(StrategyKind::DA, &mut q, 4, &s, true, &mut net, take_unit);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].request.id, 3);
        assert!(matches!(out[0].outcome, Outcome::Provisioned { .. }));
        assert_eq!(out[1].request.id, 7);
        assert!(matches!(out[1].outcome, Outcome::Delayed { .. }));
        assert_eq!(q.len(), 1);
    }

    #[test]
    fn late_3b_is_deferred_once_its_deadline_falls_in_tomorrows_window() {
        let s = PeakSchedule::default();
        let mut net = Units { free: 0 };
        let mut q = PendingQueue::new();
        let mut r = request(TrafficType::T3b, 400.0, 10 * H);
        let o = handle(StrategyKind::DACA, &mut r, 23 * H, &s, false, &net);
        assert_eq!(o, Outcome::Delayed { deferred_until: None });
        let e = PendingEntry::new(r, 23 * H, None);
        assert_eq!(e.wake_ticks(), vec![24 * H, 33 * H]);
        q.push(e);
        let out = retry_pending(StrategyKind::DACA, &mut q, 24 * H, &s, false, &mut net, take_unit);
        assert_eq!(
            out[0].outcome,
            Outcome::Delayed {
                deferred_until: Some(46 * H)
            }
        );
        assert_eq!(q.iter().next().unwrap().wake_at(), 46 * H);
        net.free = 1;
        assert!(retry_pending(StrategyKind::DACA, &mut q, 30 * H, &s, true, &mut net, take_unit).is_empty());
    }

    #[test]
    fn deferred_entry_waits_for_target() {
        let s = PeakSchedule::default();
        let mut net = Units { free: 0 };
        let mut q = PendingQueue::new();
        let mut r = request(TrafficType::T3b, 400.0, 7 * H);
        let Outcome::Delayed { deferred_until } = handle(StrategyKind::DACA, &mut r, 9 * H, &s, false, &net) else {
            panic!()
        };
        q.push(PendingEntry::new(r, 9 * H, deferred_until));
        net.free = 5;
        assert!(retry_pending(StrategyKind::DACA, &mut q, 10 * H, &s, true, &mut net, take_unit).is_empty());
        let out = retry_pending(StrategyKind::DACA, &mut q, s.p_e_prime, &s, false, &mut net, take_unit);
        assert!(matches!(out[0].outcome, Outcome::Provisioned { .. }));
    }
}
