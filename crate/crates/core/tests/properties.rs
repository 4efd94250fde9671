//! Property tests for the module invariants.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use common::nodal::random_feeder;
use common::spatial;
use evtcosim_core::adoption::{
    allocate_proportional, base_case_fractions, extend_to_extreme, tract_to_taz, AdoptionInputs, CensusTract,
    MarketHistory, PredictionLevel,
};
use evtcosim_core::grid::{apply_charging_loads, feeder_partition, validate_network, LoadKind};
use evtcosim_core::linker::{self, link_parcels, load_buses, Parcel, VehicleEstimator};
use evtcosim_core::powerflow::{detect_violations, power_balance, solve_feeder};
use evtcosim_core::scenario::{assign_schedules, build_charging_series, generate_vehicles, ScenarioConfig};
use evtcosim_core::synth::{generate_city, CityParams};
use evtcosim_core::traffic::{
    simulate_traffic, simulate_traffic_observed, RoadEdge, RoadNetwork, RoadNode, SimOptions, VehicleTrip,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mini_params(seed: u64) -> CityParams {
    let mut p = CityParams::preset("small").unwrap();
    p.name = "mini".into();
    p.seed = seed;
    p.substations = 1;
    p.feeders_per_substation = 2;
    p.buses_per_feeder = 12;
    p.road_rows = 3;
    p.road_cols = 4;
    p.parcel_count = 40;
    p.taz_rows = 1;
    p.taz_cols = 2;
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generated_cities_are_radial_clean_and_fully_linked(seed in any::<u64>()) {
        let city = generate_city(&mini_params(seed)).unwrap();
        prop_assert!(validate_network(&city.grid).is_valid());

        // The partition is disjoint and covering; each tree is connected and
        // has one branch fewer than buses.
        let trees = feeder_partition(&city.grid).unwrap();
        let mut seen_buses = HashSet::new();
        let mut seen_branches = HashSet::new();
        for t in &trees {
            prop_assert_eq!(t.branches.len() + 1, t.buses.len());
            let mut reached = vec![false; t.buses.len()];
            reached[0] = true;
            for b in &t.branches {
                prop_assert!(reached[b.from]);
                reached[b.to] = true;
            }
            prop_assert!(reached.iter().all(|r| *r));
            for b in &t.buses {
                prop_assert!(seen_buses.insert(b.id.clone()));
            }
            for b in &t.branches {
                prop_assert!(seen_branches.insert(b.id.clone()));
            }
        }
        prop_assert_eq!(seen_buses.len(), city.grid.buses.len());
        prop_assert_eq!(seen_branches.len(), city.grid.branches.len());

        // Clean baseline: no overloads at zero charging.
        for t in &trees {
            let sol = solve_feeder(t, 1.0).unwrap();
            prop_assert!(sol.converged);
            prop_assert!(detect_violations(&sol, t, 0.95).unwrap().overloads.is_empty());
        }

        let (linked, summary) = link_parcels(
            &city.parcels,
            &load_buses(&city.grid),
            &city.roads,
            &city.tazs,
            &VehicleEstimator::with_defaults(),
        )
        .unwrap();
        prop_assert!(summary.unassigned_parcels.is_empty());
        prop_assert!(linked.iter().all(|p| p.bus_id.is_some() && p.edge_id.is_some() && p.taz_id.is_some()));
    }
}

proptest! {
    #[test]
    fn charging_loads_add_exactly_and_keep_base_load(
        seed in any::<u64>(),
        picks in prop::collection::vec((0usize..1000, 0u32..20), 0..15),
    ) {
        let city = generate_city(&mini_params(seed % 4)).unwrap();
        let buses = &city.grid.buses;
        let mut charging = BTreeMap::new();
        for (i, n) in picks {
            *charging.entry(buses[i % buses.len()].id.clone()).or_insert(0.0) += 7.2 * f64::from(n);
        }
        let once = apply_charging_loads(&city.grid, &charging).unwrap();
        let twice = apply_charging_loads(&once, &charging).unwrap();
        let added: f64 = charging.values().sum();
        for net in [&once, &twice] {
            prop_assert_eq!(net.load_kw(LoadKind::Base), city.grid.load_kw(LoadKind::Base));
            prop_assert!((net.load_kw(LoadKind::EvCharging) - added).abs() <= 1e-9 * added.max(1.0));
        }
    }

    #[test]
    fn random_feeders_conserve_power_and_current(seed in any::<u64>()) {
        let tree = random_feeder(seed, 12);
        let sol = solve_feeder(&tree, 1.0).unwrap();
        prop_assume!(sol.converged);
        let b = power_balance(&tree, &sol);
        prop_assert!(b.relative_error() <= 1e-6, "balance {}", b.relative_error());
        prop_assert!(b.kcl_residual_pu <= 1e-6, "kcl {}", b.kcl_residual_pu);
    }
}

/// A corridor of `n` edges, each `k * speed` meters long so free-flow times
/// are whole seconds.
fn corridor(lengths: &[u32], flow: f64, jam: f64) -> RoadNetwork {
    let nodes = (0..=lengths.len())
        .map(|i| RoadNode {
            id: format!("n{i}"),
            x: i as f64 * 100.0,
            y: 0.0,
        })
        .collect();
    let edges = lengths
        .iter()
        .enumerate()
        .map(|(i, k)| RoadEdge {
            id: format!("e{i}"),
            from_node: format!("n{i}"),
            to_node: format!("n{}", i + 1),
            length: f64::from(*k) * 8.0,
            speed: 8.0,
            lanes: 1,
            saturation_flow: flow,
            jam_density: jam,
        })
        .collect();
    RoadNetwork::new(nodes, edges)
}

fn trips_on(net: &RoadNetwork, departures: &[u32]) -> Vec<VehicleTrip> {
    let route: Vec<String> = net.edges.iter().map(|e| e.id.clone()).collect();
    departures
        .iter()
        .enumerate()
        .map(|(i, d)| VehicleTrip {
            vehicle_id: format!("v{i:03}"),
            origin_edge: route[0].clone(),
            dest_edge: route.last().unwrap().clone(),
            scheduled_departure: f64::from(*d),
            route: route.clone(),
            is_electric: i % 2 == 0,
        })
        .collect()
}

proptest! {
    #[test]
    fn corridor_traffic_is_fifo_conserving_and_deterministic(
        lengths in prop::collection::vec(1u32..20, 1..5),
        departures in prop::collection::vec(0u32..60, 1..40),
        flow in 0.1f64..2.0,
        jam in 0.01f64..0.2,
    ) {
        let net = corridor(&lengths, flow, jam);
        let trips = trips_on(&net, &departures);
        let mut steps = 0;
        let r = simulate_traffic_observed(&net, &trips, &SimOptions::default(), |c| {
            steps += 1;
            assert_eq!(c.inserted, c.arrived + c.en_route + c.queued);
        })
        .unwrap();
        prop_assert!(steps > 0);
        prop_assert_eq!(r.arrived(), trips.len());

        // One shared route: exit order follows insertion order (ties by id).
        let mut order: Vec<usize> = (0..trips.len()).collect();
        order.sort_by(|&a, &b| {
            r.vehicles[a].insertion_time.unwrap().total_cmp(&r.vehicles[b].insertion_time.unwrap())
                .then(trips[a].vehicle_id.cmp(&trips[b].vehicle_id))
        });
        for w in order.windows(2) {
            prop_assert!(r.vehicles[w[0]].arrival_time.unwrap() <= r.vehicles[w[1]].arrival_time.unwrap());
        }

        let curve = r.cumulative_curve();
        for w in curve.windows(2) {
            prop_assert!(w[0].cumulative_departures <= w[1].cumulative_departures);
            prop_assert!(w[0].cumulative_arrivals <= w[1].cumulative_arrivals);
        }
        prop_assert!(curve.iter().all(|p| p.cumulative_arrivals <= p.cumulative_departures));

        prop_assert_eq!(simulate_traffic(&net, &trips, &SimOptions::default()).unwrap(), r);
    }

    #[test]
    fn uncongested_vehicles_travel_at_free_flow(
        lengths in prop::collection::vec(1u32..20, 1..5),
        departures in prop::collection::vec(0u32..600, 1..30),
    ) {
        let net = corridor(&lengths, 1e6, 1e3);
        let r = simulate_traffic(&net, &trips_on(&net, &departures), &SimOptions::default()).unwrap();
        let free: f64 = lengths.iter().map(|k| f64::from(*k)).sum();
        for v in &r.vehicles {
            prop_assert_eq!(v.duration, Some(free));
            prop_assert_eq!(v.waiting_time, 0.0);
        }
    }

    #[test]
    fn nearest_links_match_exhaustive_search(seed in any::<u64>(), n in 1usize..60, m in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let parcels = spatial::random_parcels(&mut rng, n, 1000.0);
        let buses = spatial::random_buses(&mut rng, m, 1000.0);
        let roads = spatial::random_roads(&mut rng, 12, m.max(2), 1000.0);
        for p in &parcels {
            prop_assert_eq!(linker::nearest_bus(p, &buses).unwrap().id, spatial::nearest_bus(p.point(), &buses));
            prop_assert_eq!(linker::nearest_edge(p, &roads).unwrap().id, spatial::nearest_edge(p.point(), &roads).0);
        }
    }

    #[test]
    fn allocation_conserves_and_stays_within_one(
        total in 0u64..1_000_000,
        weights in prop::collection::vec(0.0f64..1e6, 1..30),
    ) {
        let sum: f64 = weights.iter().sum();
        prop_assume!(sum > 0.0);
        let counts = allocate_proportional(total, &weights).unwrap();
        prop_assert_eq!(counts.iter().sum::<u64>(), total);
        for (c, w) in counts.iter().zip(&weights) {
            prop_assert!((*c as f64 - total as f64 * w / sum).abs() < 1.0);
        }
    }

    #[test]
    fn tract_to_taz_conserves_scaled_totals(
        tracts in prop::collection::vec((0.0f64..=1.0, 1usize..5, 0u64..10_000), 1..10),
    ) {
        let ts: Vec<CensusTract> = tracts
            .iter()
            .enumerate()
            .map(|(i, (area, zones, _))| CensusTract {
                id: format!("t{i}"),
                households: 1,
                median_income: 1.0,
                mean_income: 1.0,
                land_area_in_study: *area,
                taz_ids: (0..*zones).map(|z| format!("z{i}_{z}")).collect(),
                avg_vehicle_age_by_year: BTreeMap::new(),
            })
            .collect();
        let counts: BTreeMap<String, u64> = tracts.iter().enumerate().map(|(i, t)| (format!("t{i}"), t.2)).collect();
        let out = tract_to_taz(&counts, &ts).unwrap();
        let expected: u64 = tracts.iter().map(|(a, _, n)| (a * *n as f64).round() as u64).sum();
        prop_assert_eq!(out.values().sum::<u64>(), expected);
    }

    #[test]
    fn extreme_top_up_only_adds_evs(
        flags in prop::collection::vec(any::<bool>(), 0..200),
        extra in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let ids: Vec<String> = (0..flags.len()).map(|i| format!("v{i}")).collect();
        let current = if flags.is_empty() { 0.0 } else { flags.iter().filter(|f| **f).count() as f64 / flags.len() as f64 };
        let target = current + (1.0 - current) * extra;
        let out = extend_to_extreme(&ids, &flags, target, seed).unwrap();
        for (before, after) in flags.iter().zip(&out) {
            prop_assert!(!before || *after);
        }
        prop_assert_eq!(out.len(), flags.len());
        if !out.is_empty() {
            let rate = out.iter().filter(|f| **f).count() as f64 / out.len() as f64;
            prop_assert!(rate + 1e-12 >= target);
        }
    }
}

fn linked_parcels(count: usize) -> Vec<Parcel> {
    (0..count)
        .map(|i| {
            let mut p = Parcel::new(&format!("p{i:04}"), 0.0, 0.0, "RESIDENTIAL", "01-SFR");
            p.vehicle_count = 1 + (i % 4) as u32;
            p.bus_id = Some(format!("b{}", i % 7));
            p.bus_distance = Some(10.0);
            p.edge_id = Some("e".into());
            p.taz_id = Some(if i % 3 == 0 { "z1" } else { "z2" }.into());
            p
        })
        .collect()
}

fn fixed_rate_config(rate: f64, seed: u64) -> ScenarioConfig {
    let mut c = ScenarioConfig::example();
    c.ev_penetration_rate = rate;
    c.prediction_level = None;
    c.tazs_to_evacuate = vec!["z1".into(), "z2".into()];
    c.rng_seed = seed;
    c
}

proptest! {
    #[test]
    fn ev_sets_nest_with_penetration(p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0, seed in any::<u64>()) {
        let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
        let parcels = linked_parcels(300);
        let evs = |rate: f64| -> BTreeSet<String> {
            generate_vehicles(&fixed_rate_config(rate, seed), &parcels, &BTreeMap::new())
                .unwrap()
                .into_iter()
                .filter(|v| v.is_electric)
                .map(|v| v.vehicle_id)
                .collect()
        };
        prop_assert!(evs(lo).is_subset(&evs(hi)));
    }

    #[test]
    fn charging_energy_balances_on_aligned_windows(
        rate in 0.0f64..=1.0,
        seed in any::<u64>(),
        slots in 1u32..8,
        windows in 0u32..4,
    ) {
        // Charging time and departure window are whole intervals, and every
        // departure is snapped to an interval boundary.
        let mut c = fixed_rate_config(rate, seed);
        c.interval_length = 900.0;
        c.charging_time = 900.0 * f64::from(slots);
        c.departure_window = 900.0 * f64::from(windows);
        let vehicles = generate_vehicles(&c, &linked_parcels(120), &BTreeMap::new()).unwrap();
        let scheduled: Vec<_> = assign_schedules(&vehicles, &c)
            .into_iter()
            .map(|mut v| {
                let d = (v.scheduled_departure / 900.0).floor() * 900.0;
                v.scheduled_departure = d;
                if v.is_electric {
                    v.charge_start = Some(d - c.charging_time);
                    v.charge_end = Some(d);
                }
                v
            })
            .collect();
        let series = build_charging_series(&scheduled, &c);
        let energy: f64 = (0..series.len()).map(|i| series.total_kw(i) * 0.25).sum();
        let evs = scheduled.iter().filter(|v| v.charges()).count() as f64;
        let expected = evs * c.load_per_charging_ev * c.charging_time / 3600.0;
        prop_assert!((energy - expected).abs() <= 1e-9 * expected.max(1.0), "{} vs {}", energy, expected);

        let again = build_charging_series(&assign_schedules(&vehicles, &c), &c);
        prop_assert_eq!(again, build_charging_series(&assign_schedules(&vehicles, &c), &c));
    }
}

fn synth_inputs() -> AdoptionInputs {
    let city = generate_city(&mini_params(3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    city.write(dir.path()).unwrap();
    AdoptionInputs::load(dir.path()).unwrap()
}

#[test]
fn fractions_stay_in_unit_interval_for_every_level_and_year() {
    let inputs = synth_inputs();
    for level in PredictionLevel::ALL {
        for year in 2020..=2060 {
            for p in inputs.fractions(level, year).unwrap() {
                assert!((0.0..=1.0).contains(&p.ev_fraction), "{level:?} {year} {p:?}");
                assert!(p.ev_vehicles <= p.total_vehicles);
            }
        }
    }
}

#[test]
fn base_case_ev_counts_never_fall() {
    let inputs = synth_inputs();
    let seed_year = inputs.history.seed_year;
    let profiles = base_case_fractions(&inputs.tracts, &inputs.history, seed_year, 2060).unwrap();
    let mut by_taz: BTreeMap<&str, Vec<(i32, u64, f64)>> = BTreeMap::new();
    for p in &profiles {
        by_taz.entry(&p.taz_id).or_default().push((p.year, p.ev_vehicles, p.ev_fraction));
    }
    for series in by_taz.values() {
        for w in series.windows(2) {
            assert!(w[0].0 < w[1].0);
            assert!(w[0].1 <= w[1].1, "{w:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// With a constant fleet and nonnegative sales shares the base-case
    /// fractions never fall.
    #[test]
    fn base_case_fractions_rise_with_a_constant_fleet(
        shares in prop::collection::vec(0.0f64..0.5, 30),
        seed_evs in 0u64..500,
        households in prop::collection::vec(1u64..5000, 1..5),
    ) {
        let tracts: Vec<CensusTract> = households
            .iter()
            .enumerate()
            .map(|(i, h)| CensusTract {
                id: format!("t{i}"),
                households: *h,
                median_income: 40_000.0 + 10_000.0 * i as f64,
                mean_income: 50_000.0,
                land_area_in_study: 1.0,
                taz_ids: vec![format!("z{i}")],
                avg_vehicle_age_by_year: BTreeMap::from([(2000, 8.0), (2060, 12.0)]),
            })
            .collect();
        let history = MarketHistory {
            ev_share_by_year: (2000..2030).zip(shares).collect(),
            fleet_total_by_year: (2010..=2040).map(|y| (y, 100_000)).collect(),
            county_share: 0.5,
            seed_year: 2015,
            seed_evs,
        };
        let profiles = base_case_fractions(&tracts, &history, 2015, 2040).unwrap();
        let mut last: BTreeMap<&str, f64> = BTreeMap::new();
        for p in &profiles {
            prop_assert!((0.0..=1.0).contains(&p.ev_fraction));
            if let Some(prev) = last.insert(&p.taz_id, p.ev_fraction) {
                prop_assert!(p.ev_fraction >= prev, "{} fell from {} to {}", p.taz_id, prev, p.ev_fraction);
            }
        }
    }
}
