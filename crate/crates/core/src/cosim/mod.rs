//! The staged workflow. Every stage reads its inputs from files and writes
//! its outputs under `working_dir/scenario_name/`, so stages can be rerun
//! one at a time and always rewrite identical bytes for identical inputs.

mod bundle;
mod power;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use bundle::{
    compare_runs, report_stage, taz_overload_map, ComparisonReport, ComparisonRow, ResultBundle, RunReport, OUTSIDE_TAZ,
};
pub use power::{power_stage, IntervalOutcome, PowerMeta, PowerSummaryRow, SolveIssue, ViolationRow};

use crate::adoption::{profile_rows, read_profile_rows, AdoptionInputs, ProfileRow};
use crate::error::{Error, Result};
use crate::grid::DistributionNetwork;
use crate::io::{read_csv, read_json, write_csv_with_header, write_json};
use crate::linker::{link_parcels, load_buses, read_parcels, read_tazs, LinkSummary, Parcel, VehicleEstimator};
use crate::scenario::{
    assign_schedules, build_charging_series, generate_vehicles, ChargingRow, ChargingSeries, ScenarioConfig,
    SimVehicle,
};
use crate::synth::{GRID_FILE, PARCELS_FILE, ROADS_FILE, TAZS_FILE};
use crate::traffic::{
    simulate_traffic, traffic_metrics, CurvePoint, MetricsSummary, RoadNetwork, Router, SimOptions,
    TrafficResult, VehicleRecord, VehicleTrip,
};

/// Optional overrides of the shipped vehicle-estimate table, in the data dir.
pub const ESTIMATES_FILE: &str = "vehicle_estimates.csv";
pub const MANUAL_COUNTS_FILE: &str = "manual_counts.csv";

pub const CONFIG_SNAPSHOT: &str = "scenario_config.json";
pub const LINKED_PARCELS: &str = "linked_parcels.csv";
pub const LINK_SUMMARY: &str = "link_summary.json";
pub const PROFILES: &str = "ev_profiles.csv";
pub const VEHICLES: &str = "vehicles.csv";
pub const CHARGING_SERIES: &str = "charging_series.csv";
pub const CHARGING_META: &str = "charging_meta.json";
pub const TRIPS: &str = "trips.csv";
pub const VEHICLE_RESULTS: &str = "vehicle_results.csv";
pub const EVAC_CURVE: &str = "evacuation_curve.csv";
pub const TRAFFIC_SUMMARY: &str = "traffic_summary.json";
pub const VIOLATIONS: &str = "violations.csv";
pub const POWER_SUMMARY: &str = "power_summary.csv";
pub const SEVERITY_HISTOGRAM: &str = "severity_histogram.csv";
pub const POWER_META: &str = "power_meta.json";
pub const RUN_REPORT: &str = "run_report.json";
pub const TAZ_OVERLOADS: &str = "taz_overloads.csv";

/// Workflow stages in dependency order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Link,
    Predict,
    Scenario,
    Traffic,
    Power,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Link => "link",
            Stage::Predict => "predict",
            Stage::Scenario => "scenario",
            Stage::Traffic => "simulate",
            Stage::Power => "simulate",
            Stage::Report => "report",
        }
    }
}

pub(crate) fn require(dir: &Path, file: &str, stage: Stage, upstream: Stage) -> Result<PathBuf> {
    let path = dir.join(file);
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::StageOrder(format!(
            "the {} stage needs {}; run the {} stage first",
            stage.name(),
            path.display(),
            upstream.name()
        )))
    }
}

fn data_file(config: &ScenarioConfig, file: &str) -> Result<PathBuf> {
    let path = config.data_dir.join(file);
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::Data(format!("missing dataset file {}", path.display())))
    }
}

pub(crate) fn read_grid(config: &ScenarioConfig) -> Result<DistributionNetwork> {
    DistributionNetwork::read_json(&data_file(config, GRID_FILE)?)
}

fn read_roads(config: &ScenarioConfig) -> Result<RoadNetwork> {
    let roads = RoadNetwork::read_json(&data_file(config, ROADS_FILE)?)?;
    roads.validate()?;
    Ok(roads)
}

/// Links parcels to buses, edges and TAZs and attaches vehicle estimates.
pub fn link_stage(config: &ScenarioConfig) -> Result<LinkSummary> {
    config.validate()?;
    let dir = config.run_dir();
    let grid = read_grid(config)?;
    let roads = read_roads(config)?;
    let parcels = read_parcels(&data_file(config, PARCELS_FILE)?)?;
    let tazs = read_tazs(&data_file(config, TAZS_FILE)?)?;
    let optional = |f: &str| Some(config.data_dir.join(f)).filter(|p| p.is_file());
    let estimator = VehicleEstimator::from_files(
        optional(ESTIMATES_FILE).as_deref(),
        optional(MANUAL_COUNTS_FILE).as_deref(),
        1.0,
    )?;
    let (linked, summary) = link_parcels(&parcels, &load_buses(&grid), &roads, &tazs, &estimator)?;
    write_json(&dir.join(CONFIG_SNAPSHOT), config)?;
    write_csv_with_header(
        &dir.join(LINKED_PARCELS),
        &["id", "x", "y", "category", "subcategory", "vehicle_count", "bus_id", "bus_distance", "edge_id", "taz_id"],
        &linked,
    )?;
    write_json(&dir.join(LINK_SUMMARY), &summary)?;
    log::info!("linked {} parcels, {} vehicles", summary.parcels, summary.vehicles);
    Ok(summary)
}

/// Writes the per-TAZ EV fractions of the configured level and year. With
/// a fixed penetration rate there is nothing to predict and the table is
/// left empty.
pub fn predict_stage(config: &ScenarioConfig) -> Result<Vec<ProfileRow>> {
    config.validate()?;
    let rows = match (config.fixed_rate(), config.prediction_level) {
        (None, Some(level)) => {
            let inputs = AdoptionInputs::load(&config.data_dir)?;
            profile_rows(&inputs.fractions(level, config.year_prediction)?)
        }
        _ => Vec::new(),
    };
    write_csv_with_header(
        &config.run_dir().join(PROFILES),
        &["year", "taz_index", "taz_id", "total_vehicles", "ev_vehicles", "fraction"],
        &rows,
    )?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargingMeta {
    pub interval_length: f64,
    pub offset: f64,
    pub load_per_ev_kw: f64,
    pub intervals: usize,
    pub ev_count: usize,
    pub connected_ev_count: usize,
}

/// Materializes vehicles, departure times and the charging series.
pub fn scenario_stage(config: &ScenarioConfig) -> Result<ChargingSeries> {
    config.validate()?;
    let dir = config.run_dir();
    let parcels: Vec<Parcel> = read_csv(&require(&dir, LINKED_PARCELS, Stage::Scenario, Stage::Link)?)?;
    let mut fractions = BTreeMap::new();
    if config.fixed_rate().is_none() {
        let profiles = read_profile_rows(&require(&dir, PROFILES, Stage::Scenario, Stage::Predict)?)?;
        fractions = profiles
            .into_iter()
            .filter(|p| p.year == config.year_prediction)
            .map(|p| (p.taz_id, p.ev_fraction))
            .collect();
    }
    let vehicles = generate_vehicles(config, &parcels, &fractions)?;
    let vehicles = assign_schedules(&vehicles, config);
    let series = build_charging_series(&vehicles, config);
    write_csv_with_header(
        &dir.join(VEHICLES),
        &[
            "vehicle_id",
            "parcel_id",
            "taz_id",
            "bus_id",
            "origin_edge",
            "is_electric",
            "scheduled_departure",
            "charge_start",
            "charge_end",
        ],
        &vehicles,
    )?;
    write_csv_with_header(&dir.join(CHARGING_SERIES), &["interval", "bus_id", "kw"], &series.rows())?;
    write_json(
        &dir.join(CHARGING_META),
        &ChargingMeta {
            interval_length: series.interval_length,
            offset: series.offset,
            load_per_ev_kw: series.load_per_ev_kw,
            intervals: series.len(),
            ev_count: series.ev_count,
            connected_ev_count: series.connected_ev_count,
        },
    )?;
    log::info!(
        "{} vehicles, {} EVs ({} on the grid), {} intervals",
        vehicles.len(),
        series.ev_count,
        series.connected_ev_count,
        series.len()
    );
    Ok(series)
}

pub(crate) fn read_vehicles(dir: &Path, stage: Stage) -> Result<Vec<SimVehicle>> {
    read_csv(&require(dir, VEHICLES, stage, Stage::Scenario)?)
}

/// Rebuilds the charging series written by the scenario stage.
pub fn read_charging_series(dir: &Path, stage: Stage) -> Result<ChargingSeries> {
    let meta: ChargingMeta = read_json(&require(dir, CHARGING_META, stage, Stage::Scenario)?)?;
    let rows: Vec<ChargingRow> = read_csv(&require(dir, CHARGING_SERIES, stage, Stage::Scenario)?)?;
    let mut intervals = vec![BTreeMap::new(); meta.intervals];
    for r in rows {
        let slot = intervals
            .get_mut(r.interval)
            .ok_or_else(|| Error::Data(format!("charging row for interval {} beyond the horizon", r.interval)))?;
        let count = (r.kw / meta.load_per_ev_kw).round();
        slot.insert(r.bus_id, count as u32);
    }
    Ok(ChargingSeries {
        interval_length: meta.interval_length,
        offset: meta.offset,
        load_per_ev_kw: meta.load_per_ev_kw,
        intervals,
        ev_count: meta.ev_count,
        connected_ev_count: meta.connected_ev_count,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRow {
    pub vehicle_id: String,
    pub origin_edge: String,
    pub dest_edge: String,
    pub scheduled_departure: f64,
    pub is_electric: bool,
    /// Space-separated edge ids.
    pub route: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficSummary {
    pub vehicles: usize,
    pub routed: usize,
    pub unreachable_vehicles: Vec<String>,
    pub steps: u64,
    pub end_time: f64,
    pub metrics: Option<MetricsSummary>,
}

/// Routes every vehicle to the evacuation edge on free-flow times and runs
/// the traffic simulation. Vehicles with no route are left out and listed.
pub fn traffic_stage(config: &ScenarioConfig) -> Result<TrafficSummary> {
    config.validate()?;
    let dir = config.run_dir();
    let vehicles = read_vehicles(&dir, Stage::Traffic)?;
    let roads = read_roads(config)?;
    if !roads.edges.iter().any(|e| e.id == config.evac_edge) {
        return Err(Error::Config(format!(
            "evac_edge {:?} is not in the road network",
            config.evac_edge
        )));
    }
    let router = Router::new(&roads);
    let origins: Vec<String> = vehicles
        .iter()
        .map(|v| v.origin_edge.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let routes: BTreeMap<&str, _> = origins
        .iter()
        .map(String::as_str)
        .zip(router.routes_to(&origins, &config.evac_edge))
        .collect();

    let mut trips = Vec::new();
    let mut unreachable = Vec::new();
    for v in &vehicles {
        match &routes[v.origin_edge.as_str()] {
            Ok(route) => trips.push(VehicleTrip {
                vehicle_id: v.vehicle_id.clone(),
                origin_edge: v.origin_edge.clone(),
                dest_edge: config.evac_edge.clone(),
                scheduled_departure: v.scheduled_departure,
                route: route.edges.clone(),
                is_electric: v.is_electric,
            }),
            Err(e) => {
                log::debug!("{}: {e}", v.vehicle_id);
                unreachable.push(v.vehicle_id.clone());
            }
        }
    }
    if !unreachable.is_empty() {
        log::warn!("{} vehicles cannot reach {}", unreachable.len(), config.evac_edge);
    }

    let result = if trips.is_empty() {
        TrafficResult {
            vehicles: Vec::new(),
            steps: 0,
            end_time: 0.0,
        }
    } else {
        let opts = SimOptions {
            dt: config.dt,
            max_sim_time: config.max_sim_time,
        };
        simulate_traffic(&roads, &trips, &opts)?
    };
    let metrics = if result.vehicles.is_empty() {
        None
    } else {
        Some(traffic_metrics(&result)?)
    };
    if metrics.as_ref().is_some_and(|m| m.incomplete) {
        log::warn!("traffic stopped at max_sim_time with vehicles still on the road");
    }

    let rows: Vec<TripRow> = trips
        .iter()
        .map(|t| TripRow {
            vehicle_id: t.vehicle_id.clone(),
            origin_edge: t.origin_edge.clone(),
            dest_edge: t.dest_edge.clone(),
            scheduled_departure: t.scheduled_departure,
            is_electric: t.is_electric,
            route: t.route.join(" "),
        })
        .collect();
    write_csv_with_header(
        &dir.join(TRIPS),
        &["vehicle_id", "origin_edge", "dest_edge", "scheduled_departure", "is_electric", "route"],
        &rows,
    )?;
    write_csv_with_header(
        &dir.join(VEHICLE_RESULTS),
        &[
            "vehicle_id",
            "is_electric",
            "scheduled_departure",
            "insertion_time",
            "arrival_time",
            "departure_delay",
            "duration",
            "waiting_time",
            "time_loss",
            "route_length",
            "free_flow_time",
        ],
        &result.vehicles,
    )?;
    write_csv_with_header(
        &dir.join(EVAC_CURVE),
        &["time_s", "cumulative_departures", "cumulative_arrivals"],
        &result.cumulative_curve(),
    )?;
    let summary = TrafficSummary {
        vehicles: vehicles.len(),
        routed: trips.len(),
        unreachable_vehicles: unreachable,
        steps: result.steps,
        end_time: result.end_time,
        metrics,
    };
    write_json(&dir.join(TRAFFIC_SUMMARY), &summary)?;
    Ok(summary)
}

pub(crate) fn read_traffic(dir: &Path, stage: Stage) -> Result<(TrafficSummary, TrafficResult, Vec<CurvePoint>)> {
    let summary: TrafficSummary = read_json(&require(dir, TRAFFIC_SUMMARY, stage, Stage::Traffic)?)?;
    let vehicles: Vec<VehicleRecord> = read_csv(&require(dir, VEHICLE_RESULTS, stage, Stage::Traffic)?)?;
    let curve: Vec<CurvePoint> = read_csv(&require(dir, EVAC_CURVE, stage, Stage::Traffic)?)?;
    let result = TrafficResult {
        vehicles,
        steps: summary.steps,
        end_time: summary.end_time,
    };
    Ok((summary, result, curve))
}

/// Traffic and power, the two simulators, which only share the scenario
/// outputs.
pub fn simulate_stage(config: &ScenarioConfig) -> Result<(TrafficSummary, PowerMeta)> {
    let traffic = traffic_stage(config)?;
    let power = power_stage(config)?;
    Ok((traffic, power))
}

/// Every stage from linking to the report.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ResultBundle> {
    link_stage(config)?;
    predict_stage(config)?;
    scenario_stage(config)?;
    simulate_stage(config)?;
    report_stage(config)
}
