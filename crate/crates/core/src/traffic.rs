//! Dynamic request stream: five traffic classes with piecewise-Poisson
//! arrivals over the peak/off-peak clock and gravity-model endpoints.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::schedule::{PeakSchedule, TICKS_PER_MINUTE};
use crate::topology::{NodeIx, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TrafficType {
    #[serde(rename = "1")]
    T1,
    #[serde(rename = "2a")]
    T2a,
    #[serde(rename = "2b")]
    T2b,
    #[serde(rename = "3a")]
    T3a,
    #[serde(rename = "3b")]
    T3b,
}

impl TrafficType {
    pub const ALL: [TrafficType; 5] = [
        TrafficType::T1,
        TrafficType::T2a,
        TrafficType::T2b,
        TrafficType::T3a,
        TrafficType::T3b,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            TrafficType::T1 => "1",
            TrafficType::T2a => "2a",
            TrafficType::T2b => "2b",
            TrafficType::T3a => "3a",
            TrafficType::T3b => "3b",
        }
    }

    pub fn is_compressible(self) -> bool {
        matches!(self, TrafficType::T2a | TrafficType::T2b)
    }

    pub fn is_delayable(self) -> bool {
        matches!(self, TrafficType::T2a | TrafficType::T3a | TrafficType::T3b)
    }
}

impl fmt::Display for TrafficType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A duration in minutes: fixed, or uniform over `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Minutes {
    Fixed(f64),
    Uniform([f64; 2]),
}

impl Minutes {
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Minutes::Fixed(m) => (m, m),
            Minutes::Uniform([lo, hi]) => (lo, hi),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Minutes::Fixed(m) => m,
            Minutes::Uniform([lo, hi]) => rng.random_range(lo..=hi),
        }
    }

    pub fn sample_ticks<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        (self.sample(rng) * TICKS_PER_MINUTE as f64).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficTypeSpec {
    pub type_id: TrafficType,
    pub holding_min: Minutes,
    /// Arrivals per second during the peak window.
    pub lambda_peak: f64,
    pub lambda_offpeak: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_min: Option<Minutes>,
    pub rates_gbps: Vec<f64>,
}

impl TrafficTypeSpec {
    pub fn validate(&self) -> Result<(), String> {
        let t = self.type_id;
        if self.phi.is_some() != t.is_compressible() {
            return Err(format!("type {t}: phi must be set exactly for types 2a and 2b"));
        }
        if let Some(phi) = self.phi {
            if !(phi > 0.0 && phi <= 1.0) {
                return Err(format!("type {t}: phi {phi} outside (0, 1]"));
            }
        }
        if self.delta_min.is_some() != t.is_delayable() {
            return Err(format!("type {t}: delta_min must be set exactly for types 2a, 3a and 3b"));
        }
        let (lo, hi) = self.holding_min.bounds();
        if !(lo > 0.0 && lo <= hi) {
            return Err(format!("type {t}: holding time bounds [{lo}, {hi}] invalid"));
        }
        if let Some(d) = self.delta_min {
            let (lo, hi) = d.bounds();
            if !(lo >= 0.0 && lo <= hi) {
                return Err(format!("type {t}: delay bounds [{lo}, {hi}] invalid"));
            }
        }
        if !(self.lambda_peak >= 0.0 && self.lambda_offpeak >= 0.0) {
            return Err(format!("type {t}: arrival rates must be nonnegative"));
        }
        if self.rates_gbps.is_empty() || self.rates_gbps.iter().any(|&r| !(r > 0.0)) {
            return Err(format!("type {t}: rates_gbps must be a nonempty set of positive rates"));
        }
        Ok(())
    }

    /// SLA floor for a request of this type at rate `gamma`.
    pub fn sla_floor(&self, gamma: f64) -> f64 {
        match self.phi {
            Some(phi) => phi * gamma,
            None => gamma,
        }
    }
}

/// Traffic classes with their holding times, arrival rates, compression
/// factors, delay budgets and rate sets.
pub fn default_traffic_types() -> Vec<TrafficTypeSpec> {
    use Minutes::{Fixed, Uniform};
    vec![
        TrafficTypeSpec {
            type_id: TrafficType::T1,
            holding_min: Fixed(5.0),
            lambda_peak: 8.0,
            lambda_offpeak: 2.0,
            phi: None,
            delta_min: None,
            rates_gbps: vec![100.0, 200.0],
        },
        TrafficTypeSpec {
            type_id: TrafficType::T2a,
            holding_min: Uniform([30.0, 90.0]),
            lambda_peak: 100.0,
            lambda_offpeak: 25.0,
            phi: Some(0.5),
            delta_min: Some(Uniform([3.0, 5.0])),
            rates_gbps: vec![200.0, 400.0],
        },
        TrafficTypeSpec {
            type_id: TrafficType::T2b,
            holding_min: Uniform([20.0, 40.0]),
            lambda_peak: 48.0,
            lambda_offpeak: 12.0,
            phi: Some(0.5),
            delta_min: None,
            rates_gbps: vec![200.0, 400.0],
        },
        TrafficTypeSpec {
            type_id: TrafficType::T3a,
            holding_min: Uniform([8.0, 12.0]),
            lambda_peak: 8.0,
            lambda_offpeak: 2.0,
            phi: None,
            delta_min: Some(Uniform([2.0, 4.0])),
            rates_gbps: vec![100.0, 200.0],
        },
        TrafficTypeSpec {
            type_id: TrafficType::T3b,
            holding_min: Uniform([360.0, 600.0]),
            lambda_peak: 4.0,
            lambda_offpeak: 1.0,
            phi: None,
            delta_min: Some(Uniform([360.0, 720.0])),
            rates_gbps: vec![400.0],
        },
    ]
}

/// One connection demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub s: NodeIx,
    pub d: NodeIx,
    pub gamma_gbps: f64,
    pub gamma_min_gbps: f64,
    pub type_id: TrafficType,
    pub phi: Option<f64>,
    /// Remaining delay budget.
    pub delta_ticks: u64,
    pub tau_ticks: u64,
    pub arrived_at: u64,
}

impl Request {
    /// Stable one-line rendering, used for stream hashing and logs.
    pub fn canonical(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.id,
            self.arrived_at,
            self.type_id,
            self.s,
            self.d,
            self.gamma_gbps,
            self.gamma_min_gbps,
            self.delta_ticks,
            self.tau_ticks
        )
    }
}

/// Arrival rate per second in force at `t`.
fn rate_at(spec: &TrafficTypeSpec, schedule: &PeakSchedule, load_scale: f64, t: f64) -> f64 {
    let base = if schedule.is_peak_at(t) {
        spec.lambda_peak
    } else {
        spec.lambda_offpeak
    };
    base * load_scale
}

/// Next arrival time (seconds, continuous) after `now`. An exponential gap
/// is drawn at the rate in force; if it crosses a peak boundary the draw
/// restarts from the boundary under the new rate. `None` when both rates
/// are zero.
pub fn next_arrival<R: Rng + ?Sized>(
    spec: &TrafficTypeSpec,
    load_scale: f64,
    now: f64,
    schedule: &PeakSchedule,
    rng: &mut R,
) -> Option<f64> {
    if spec.lambda_peak * load_scale <= 0.0 && spec.lambda_offpeak * load_scale <= 0.0 {
        return None;
    }
    let mut t = now;
    loop {
        let rate = rate_at(spec, schedule, load_scale, t);
        let boundary = schedule.next_boundary_at(t);
        if rate > 0.0 {
            let gap = Exp::new(rate).expect("positive rate").sample(rng);
            if t + gap < boundary {
                return Some(t + gap);
            }
        }
        t = boundary;
    }
}

pub fn make_request<R: Rng + ?Sized>(
    spec: &TrafficTypeSpec,
    topology: &Topology,
    id: u64,
    now: u64,
    rng: &mut R,
) -> Request {
    let (s, d) = topology.sample_endpoints(rng);
    let gamma = spec.rates_gbps[rng.random_range(0..spec.rates_gbps.len())];
    let tau_ticks = spec.holding_min.sample_ticks(rng).max(1);
    let delta_ticks = spec.delta_min.map_or(0, |d| d.sample_ticks(rng));
    Request {
        id,
        s,
        d,
        gamma_gbps: gamma,
        gamma_min_gbps: spec.sla_floor(gamma),
        type_id: spec.type_id,
        phi: spec.phi,
        delta_ticks,
        tau_ticks,
        arrived_at: now,
    }
}

struct TypeStream {
    spec: TrafficTypeSpec,
    rng: ChaCha8Rng,
    next: Option<f64>,
}

/// Merges the per-type arrival streams into one request sequence ordered
/// by (tick, type order). Each type draws from its own ChaCha substream.
pub struct TrafficGenerator<'a> {
    topology: &'a Topology,
    schedule: PeakSchedule,
    load_scale: f64,
    streams: Vec<TypeStream>,
    next_id: u64,
    remaining: u64,
}

impl<'a> TrafficGenerator<'a> {
    pub fn new(
        specs: &[TrafficTypeSpec],
        topology: &'a Topology,
        schedule: PeakSchedule,
        load_scale: f64,
        start_tick: u64,
        demands: u64,
        seed: u64,
    ) -> Self {
        let mut specs = specs.to_vec();
        specs.sort_by_key(|s| s.type_id);
        let streams = specs
            .into_iter()
            .map(|spec| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(1 + spec.type_id.index() as u64);
                let next = next_arrival(&spec, load_scale, start_tick as f64, &schedule, &mut rng);
                TypeStream { spec, rng, next }
            })
            .collect();
        Self {
            topology,
            schedule,
            load_scale,
            streams,
            next_id: 0,
            remaining: demands,
        }
    }

    /// Tick of the next request, if any remain.
    pub fn peek_tick(&self) -> Option<u64> {
        if self.remaining == 0 {
            return None;
        }
        self.streams
            .iter()
            .filter_map(|s| s.next.map(|t| t.floor() as u64))
            .min()
    }
}

impl Iterator for TrafficGenerator<'_> {
    type Item = Request;

    fn next(&mut self) -> Option<Request> {
        if self.remaining == 0 {
            return None;
        }
        let (idx, t) = self
            .streams
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.next.map(|t| (i, t)))
            .min_by_key(|&(i, t)| (t.floor() as u64, i))?;
        let tick = t.floor() as u64;
        let stream = &mut self.streams[idx];
        let request = make_request(&stream.spec, self.topology, self.next_id, tick, &mut stream.rng);
        stream.next = next_arrival(&stream.spec, self.load_scale, t, &self.schedule, &mut stream.rng);
        self.next_id += 1;
        self.remaining -= 1;
        Some(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{TICKS_PER_DAY, TICKS_PER_HOUR};
    use crate::topology::{LinkSpec, NodeSpec, TopologyFile};

    fn spec(t: TrafficType) -> TrafficTypeSpec {
        default_traffic_types().into_iter().find(|s| s.type_id == t).unwrap()
    }

    fn topo() -> Topology {
        Topology::from_file(TopologyFile {
            name: None,
            nodes: vec![
                NodeSpec {
                    id: "A".into(),
                    gen_prob: 0.5,
                },
                NodeSpec {
                    id: "B".into(),
                    gen_prob: 0.5,
                },
            ],
            links: vec![LinkSpec {
                a: "A".into(),
                b: "B".into(),
                length_km: 10.0,
            }],
        })
        .unwrap()
    }

    #[test]
    fn table_values() {
        let table = default_traffic_types();
        assert_eq!(table.len(), 5);
        assert!(table.iter().all(|s| s.validate().is_ok()));
        assert_eq!(spec(TrafficType::T2a).phi, Some(0.5));
        assert_eq!(spec(TrafficType::T2b).phi, Some(0.5));
        assert_eq!(spec(TrafficType::T3b).rates_gbps, vec![400.0]);
        assert_eq!(spec(TrafficType::T1).delta_min, None);
        assert_eq!(spec(TrafficType::T1).holding_min, Minutes::Fixed(5.0));
        assert_eq!(spec(TrafficType::T2a).lambda_peak, 100.0);
        assert_eq!(spec(TrafficType::T2b).lambda_offpeak, 12.0);
        assert_eq!(spec(TrafficType::T3b).delta_min, Some(Minutes::Uniform([360.0, 720.0])));
        assert_eq!(spec(TrafficType::T3a).holding_min, Minutes::Uniform([8.0, 12.0]));
    }

    #[test]
    fn validation_enforces_type_shape() {
        let mut s = spec(TrafficType::T1);
        s.phi = Some(0.5);
        assert!(s.validate().is_err());
        let mut s = spec(TrafficType::T2b);
        s.delta_min = Some(Minutes::Fixed(1.0));
        assert!(s.validate().is_err());
        let mut s = spec(TrafficType::T3a);
        s.rates_gbps.clear();
        assert!(s.validate().is_err());
    }

    #[test]
    fn zero_rate_slice_defers_to_boundary() {
        let sched = PeakSchedule::default();
        let mut s = spec(TrafficType::T1);
        s.lambda_offpeak = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let t = next_arrival(&s, 1.0, 0.0, &sched, &mut rng).unwrap();
            assert!(t >= sched.p_s as f64 && t < sched.p_e as f64);
        }
        s.lambda_peak = 0.0;
        assert_eq!(next_arrival(&s, 1.0, 0.0, &sched, &mut rng), None);
    }

    #[test]
    fn constant_rate_mean_gap() {
        let sched = PeakSchedule::default();
        let mut s = spec(TrafficType::T1);
        s.lambda_peak = 0.5;
        s.lambda_offpeak = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let mut t = 0.0;
        for _ in 0..n {
            t = next_arrival(&s, 1.0, t, &sched, &mut rng).unwrap();
        }
        let mean = t / n as f64;
        assert!((mean - 2.0).abs() / 2.0 < 0.02, "mean gap {mean}");
    }

    #[test]
    fn peak_window_count_is_poisson() {
        let sched = PeakSchedule::default();
        let s = spec(TrafficType::T3b);
        let scale = 0.01;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (p_s, p_e) = (sched.p_s as f64, sched.p_e as f64);
        let mut t = 0.0;
        let mut in_peak = 0u64;
        while t < TICKS_PER_DAY as f64 {
            t = next_arrival(&s, scale, t, &sched, &mut rng).unwrap();
            if t >= p_s && t < p_e {
                in_peak += 1;
            }
        }
        let expected = s.lambda_peak * scale * (p_e - p_s);
        let sigma = expected.sqrt();
        assert!((in_peak as f64 - expected).abs() < 3.0 * sigma, "{in_peak} vs {expected}");
    }

    #[test]
    fn request_fields_follow_type() {
        let t = topo();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let r = make_request(&spec(TrafficType::T3b), &t, 0, 0, &mut rng);
            assert_eq!(r.gamma_gbps, 400.0);
            assert_eq!(r.gamma_min_gbps, 400.0);
            assert!((360 * 60..=720 * 60).contains(&r.delta_ticks));
            assert!((360 * 60..=600 * 60).contains(&r.tau_ticks));
            assert_ne!(r.s, r.d);
        }
        let r = make_request(&spec(TrafficType::T1), &t, 0, 0, &mut rng);
        assert_eq!(r.delta_ticks, 0);
        assert_eq!(r.tau_ticks, 300);
        let r = make_request(&spec(TrafficType::T2b), &t, 0, 0, &mut rng);
        assert_eq!(r.gamma_min_gbps, 0.5 * r.gamma_gbps);
    }

    #[test]
    fn rate_choice_is_uniform() {
        let t = topo();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let low = (0..n)
            .filter(|&i| make_request(&spec(TrafficType::T2a), &t, i, 0, &mut rng).gamma_gbps == 200.0)
            .count();
        assert!((low as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn generator_orders_by_tick_then_type() {
        let t = topo();
        let gen = TrafficGenerator::new(
            &default_traffic_types(),
            &t,
            PeakSchedule::default(),
            0.1,
            7 * TICKS_PER_HOUR,
            5000,
            9,
        );
        let reqs: Vec<_> = gen.collect();
        assert_eq!(reqs.len(), 5000);
        for (i, w) in reqs.windows(2).enumerate() {
            assert_eq!(w[0].id, i as u64);
            assert!((w[0].arrived_at, w[0].type_id) <= (w[1].arrived_at, w[1].type_id));
        }
    }

    #[test]
    fn realized_mix_tracks_rate_ratios() {
        let t = topo();
        let sched = PeakSchedule::default();
        let n = 50_000u64;
        let gen = TrafficGenerator::new(&default_traffic_types(), &t, sched, 1.0, sched.p_s, n, 10);
        let mut counts = [0f64; 5];
        for r in gen {
            counts[r.type_id.index()] += 1.0;
        }
        let total_rate: f64 = default_traffic_types().iter().map(|s| s.lambda_peak).sum();
        for s in default_traffic_types() {
            let p = s.lambda_peak / total_rate;
            let expected = p * n as f64;
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            let got = counts[s.type_id.index()];
            assert!((got - expected).abs() < 3.0 * sigma, "type {}: {got} vs {expected}", s.type_id);
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let t = topo();
        let a: Vec<_> =
            TrafficGenerator::new(&default_traffic_types(), &t, PeakSchedule::default(), 0.02, 0, 300, 42).collect();
        let b: Vec<_> =
            TrafficGenerator::new(&default_traffic_types(), &t, PeakSchedule::default(), 0.02, 0, 300, 42).collect();
        let c: Vec<_> =
            TrafficGenerator::new(&default_traffic_types(), &t, PeakSchedule::default(), 0.02, 0, 300, 43).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
