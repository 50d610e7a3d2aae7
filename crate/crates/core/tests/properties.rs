use std::path::PathBuf;

use eonsim::engine::{Experiment, RunOptions, Simulation};
use eonsim::metrics::{hourly_utilization, relative_bp};
use eonsim::schedule::{PeakSchedule, TICKS_PER_DAY};
use eonsim::spectrum::{first_fit, LightpathId};
use eonsim::traffic::{default_traffic_types, TrafficGenerator};
use eonsim::{blocking_probability, load_topology, BandPlan, SimConfig, SpectrumGrid, StrategyKind, Topology};
use proptest::prelude::*;

fn uk22() -> Topology {
    load_topology(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/uk22.json")).unwrap()
}

#[derive(Debug, Clone)]
enum Op {
    Alloc { links: Vec<usize>, n: usize },
    Release(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (proptest::sample::subsequence((0..5).collect::<Vec<_>>(), 1..=5), 1usize..5)
            .prop_map(|(links, n)| Op::Alloc { links, n }),
        (0usize..64).prop_map(Op::Release),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn grid_occupancy_matches_live_lightpaths(ops in proptest::collection::vec(op(), 1..120)) {
        let plan = BandPlan::new(eonsim::BandPlanKind::CL, 12, 37.5);
        let mut grid = SpectrumGrid::new(5, &plan);
        let mut live: Vec<(LightpathId, u64)> = Vec::new();
        for (i, op) in ops.into_iter().enumerate() {
            match op {
                Op::Alloc { links, n } => {
                    if let Some(range) = first_fit(&grid, &links, &plan, n) {
                        grid.allocate(LightpathId(i as u64), &links, range).unwrap();
                        live.push((LightpathId(i as u64), (links.len() * n) as u64));
                    }
                }
                Op::Release(k) if !live.is_empty() => {
                    let (id, _) = live.remove(k % live.len());
                    grid.release(id).unwrap();
                }
                Op::Release(_) => prop_assert!(grid.release(LightpathId(u64::MAX)).is_err()),
            }
            prop_assert_eq!(grid.occupied_slot_links(), live.iter().map(|(_, w)| w).sum::<u64>());
            prop_assert_eq!(grid.active_count(), live.len());
        }
        for (id, _) in live {
            grid.release(id).unwrap();
        }
        prop_assert_eq!(grid, SpectrumGrid::new(5, &plan));
    }

    #[test]
    fn hourly_utilization_stays_within_sample_range(
        mut samples in proptest::collection::vec((0u64..2 * TICKS_PER_DAY, 0.0f64..1.0), 0..40)
    ) {
        samples.sort_by_key(|s| s.0);
        samples.dedup_by_key(|s| s.0);
        let hi = samples.iter().map(|s| s.1).fold(0.0, f64::max);
        let table = hourly_utilization(&samples, 2);
        prop_assert_eq!(table.len(), 2);
        for day in &table {
            prop_assert_eq!(day.len(), 24);
            for &u in day {
                prop_assert!((-1e-12..=hi + 1e-12).contains(&u));
            }
        }
    }

    #[test]
    fn relative_bp_sign_follows_ordering(bp in 0.0f64..1.0, base in 1e-6f64..1.0) {
        let r = relative_bp(bp, base).unwrap();
        prop_assert!(r >= -1.0);
        prop_assert_eq!(r <= 0.0, bp <= base);
    }

    #[test]
    fn reestimation_always_moves_forward(t in 0u64..3 * TICKS_PER_DAY) {
        let s = PeakSchedule::default();
        let next = s.next_reestimate(t);
        prop_assert!(next > t);
        prop_assert!(next - t <= s.t_p.max(s.t_o));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_requests_are_well_formed(seed in any::<u64>(), scale in 0.001f64..0.05) {
        let topo = uk22();
        let specs = default_traffic_types();
        let make = || TrafficGenerator::new(&specs, &topo, PeakSchedule::default(), scale, 0, 300, seed);
        let requests: Vec<_> = make().collect();
        prop_assert_eq!(&requests, &make().collect::<Vec<_>>());
        for (i, r) in requests.iter().enumerate() {
            prop_assert_eq!(r.id, i as u64);
            prop_assert_ne!(r.s, r.d);
            prop_assert!(r.gamma_min_gbps <= r.gamma_gbps);
            prop_assert!(r.tau_ticks > 0);
            if i > 0 {
                prop_assert!(requests[i - 1].arrived_at <= r.arrived_at);
            }
        }
    }

    #[test]
    fn small_grid_runs_conserve_slots_and_requests(
        seed in 0u64..1000,
        strategy in proptest::sample::select(StrategyKind::ALL.to_vec()),
        plan in proptest::sample::select(vec!["C", "C+L"]),
    ) {
        let config = SimConfig::from_json_str("{}", &[
            "demands_per_seed=150".into(),
            "horizon_days=2".into(),
            "spectrum.slots_per_band=6".into(),
            "traffic.load_scale=0.01".into(),
            format!("strategy={strategy}"),
            format!("band_plan={plan}"),
        ]).unwrap();
        let exp = Experiment::with_topology(config, uk22()).unwrap();
        let mut sim = Simulation::new(&exp, seed, RunOptions { audit: true, record_outcomes: false });
        while sim.step().unwrap() {}
        let (report, _) = sim.run().unwrap();
        report.check_conservation().map_err(TestCaseError::fail)?;
        let bp = blocking_probability(&report).total.unwrap();
        prop_assert!((0.0..=1.0).contains(&bp));
    }
}
