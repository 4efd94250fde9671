//! Shared fixtures for the benchmarks.

use evtcosim_core::grid::{feeder_partition, FeederTree};
use evtcosim_core::linker::{link_parcels, load_buses, VehicleEstimator};
use evtcosim_core::synth::{generate_city, CityDataset, CityParams};
use evtcosim_core::traffic::{Router, VehicleTrip};

pub fn small_city() -> CityDataset {
    generate_city(&CityParams::preset("small").expect("preset")).expect("synthesis")
}

/// The feeder with the most buses.
pub fn largest_feeder(city: &CityDataset) -> FeederTree {
    feeder_partition(&city.grid)
        .expect("radial")
        .into_iter()
        .max_by_key(|t| t.buses.len())
        .expect("at least one feeder")
}

/// Distinct parcel origin edges, in parcel order.
pub fn origin_edges(city: &CityDataset) -> Vec<String> {
    let (linked, _) = link_parcels(
        &city.parcels,
        &load_buses(&city.grid),
        &city.roads,
        &city.tazs,
        &VehicleEstimator::with_defaults(),
    )
    .expect("link");
    let mut seen = std::collections::HashSet::new();
    linked
        .into_iter()
        .filter_map(|p| p.edge_id)
        .filter(|e| seen.insert(e.clone()))
        .collect()
}

/// `n` evacuation trips cycling over the origins, departing one per second.
pub fn evacuation_trips(city: &CityDataset, origins: &[String], n: usize) -> Vec<VehicleTrip> {
    let dest = &city.scenario.evac_edge;
    let routes: Vec<_> = Router::new(&city.roads)
        .routes_to(origins, dest)
        .into_iter()
        .filter_map(Result::ok)
        .collect();
    (0..n)
        .map(|i| {
            let r = &routes[i % routes.len()];
            VehicleTrip {
                vehicle_id: format!("v{i:05}"),
                origin_edge: r.edges[0].clone(),
                dest_edge: dest.clone(),
                scheduled_departure: i as f64,
                route: r.edges.clone(),
                is_electric: false,
            }
        })
        .collect()
}
