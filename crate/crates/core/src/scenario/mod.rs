//! Scenario configuration and its materialization into vehicles, departure
//! times, charging windows and per-interval charging load.

mod config;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adoption::{extend_to_extreme, PredictionLevel, EXTREME_TARGET_RATE};
use crate::linker::Parcel;
use crate::rng::{keyed_uniform, Stream};

pub use config::{ScenarioConfig, FIXED_RATE_SENTINEL};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("no EV profile for evacuated TAZ {0:?}")]
    MissingProfile(String),
    #[error("parcel {0:?} has not been linked")]
    UnlinkedParcel(String),
    #[error(transparent)]
    Adoption(#[from] crate::adoption::AdoptionError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimVehicle {
    pub vehicle_id: String,
    pub parcel_id: String,
    pub taz_id: String,
    /// Bus the vehicle charges at; empty outside grid coverage.
    pub bus_id: Option<String>,
    pub origin_edge: String,
    pub is_electric: bool,
    pub scheduled_departure: f64,
    pub charge_start: Option<f64>,
    pub charge_end: Option<f64>,
}

impl SimVehicle {
    /// Electric and inside grid coverage.
    pub fn charges(&self) -> bool {
        self.is_electric && self.bus_id.is_some()
    }
}

/// Emits `vehicle_count` vehicles for every parcel in an evacuated TAZ.
/// A vehicle is electric when its keyed uniform draw falls below the TAZ
/// fraction, so raising fractions only ever adds EVs.
pub fn generate_vehicles(
    config: &ScenarioConfig,
    parcels: &[Parcel],
    fractions: &BTreeMap<String, f64>,
) -> Result<Vec<SimVehicle>, ScenarioError> {
    config.validate()?;
    let evacuated: BTreeSet<&str> = config.tazs_to_evacuate.iter().map(String::as_str).collect();
    let fixed = config.fixed_rate();
    if fixed.is_none() {
        if let Some(missing) = evacuated.iter().find(|t| !fractions.contains_key(**t)) {
            return Err(ScenarioError::MissingProfile(missing.to_string()));
        }
    }
    let mut vehicles = Vec::new();
    for p in parcels {
        let Some(taz) = p.taz_id.as_deref().filter(|t| evacuated.contains(t)) else { continue };
        let edge = p
            .edge_id
            .clone()
            .ok_or_else(|| ScenarioError::UnlinkedParcel(p.id.clone()))?;
        let bus = match (&p.bus_id, p.bus_distance) {
            (Some(b), Some(d)) if d <= config.coverage_radius => Some(b.clone()),
            (Some(_), Some(_)) => None,
            _ => return Err(ScenarioError::UnlinkedParcel(p.id.clone())),
        };
        let fraction = fixed.unwrap_or_else(|| fractions[taz]);
        for k in 0..p.vehicle_count {
            let vehicle_id = format!("{}-{}", p.id, k);
            let u = keyed_uniform(config.rng_seed, Stream::Electric, &vehicle_id);
            vehicles.push(SimVehicle {
                is_electric: u < fraction,
                vehicle_id,
                parcel_id: p.id.clone(),
                taz_id: taz.to_string(),
                bus_id: bus.clone(),
                origin_edge: edge.clone(),
                scheduled_departure: 0.0,
                charge_start: None,
                charge_end: None,
            });
        }
    }
    if fixed.is_none() && config.prediction_level == Some(PredictionLevel::Extreme) && !vehicles.is_empty() {
        let ids: Vec<String> = vehicles.iter().map(|v| v.vehicle_id.clone()).collect();
        let flags: Vec<bool> = vehicles.iter().map(|v| v.is_electric).collect();
        let current = flags.iter().filter(|f| **f).count() as f64 / flags.len() as f64;
        let flags = extend_to_extreme(&ids, &flags, EXTREME_TARGET_RATE.max(current), config.rng_seed)?;
        for (v, e) in vehicles.iter_mut().zip(flags) {
            v.is_electric = e;
        }
    }
    Ok(vehicles)
}

/// Uniform departures over the window and charging windows that end at
/// departure.
pub fn assign_schedules(vehicles: &[SimVehicle], config: &ScenarioConfig) -> Vec<SimVehicle> {
    vehicles
        .iter()
        .map(|v| {
            let mut out = v.clone();
            out.scheduled_departure = if config.departure_window > 0.0 {
                keyed_uniform(config.rng_seed, Stream::Departure, &v.vehicle_id) * config.departure_window
            } else {
                0.0
            };
            if v.is_electric {
                out.charge_start = Some(out.scheduled_departure - config.charging_time);
                out.charge_end = Some(out.scheduled_departure);
            } else {
                out.charge_start = None;
                out.charge_end = None;
            }
            out
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargingSeries {
    pub interval_length: f64,
    /// Added to schedule times to get series time; the earliest nominal
    /// charging start lands on zero.
    pub offset: f64,
    pub load_per_ev_kw: f64,
    /// Charging EV count per bus for each interval.
    pub intervals: Vec<BTreeMap<String, u32>>,
    pub ev_count: usize,
    pub connected_ev_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargingRow {
    pub interval: usize,
    pub bus_id: String,
    pub kw: f64,
}

impl ChargingSeries {
    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn kw(&self, interval: usize) -> BTreeMap<String, f64> {
        self.intervals[interval]
            .iter()
            .map(|(b, n)| (b.clone(), f64::from(*n) * self.load_per_ev_kw))
            .collect()
    }

    pub fn total_kw(&self, interval: usize) -> f64 {
        f64::from(self.intervals[interval].values().sum::<u32>()) * self.load_per_ev_kw
    }

    pub fn rows(&self) -> Vec<ChargingRow> {
        (0..self.len())
            .flat_map(|i| {
                self.kw(i)
                    .into_iter()
                    .map(move |(bus_id, kw)| ChargingRow { interval: i, bus_id, kw })
            })
            .collect()
    }
}

/// Bins every charging window into fixed-length intervals. An EV adds its
/// full rate to every interval that overlaps its half-open window. The
/// horizon spans all vehicles' nominal windows, EV or not, so runs that
/// differ only in penetration share the same intervals.
pub fn build_charging_series(vehicles: &[SimVehicle], config: &ScenarioConfig) -> ChargingSeries {
    let l = config.interval_length;
    let mut series = ChargingSeries {
        interval_length: l,
        offset: 0.0,
        load_per_ev_kw: config.load_per_charging_ev,
        intervals: Vec::new(),
        ev_count: vehicles.iter().filter(|v| v.is_electric).count(),
        connected_ev_count: vehicles.iter().filter(|v| v.charges()).count(),
    };
    if vehicles.is_empty() {
        return series;
    }
    let start = vehicles
        .iter()
        .map(|v| v.scheduled_departure - config.charging_time)
        .fold(f64::INFINITY, f64::min);
    let end = vehicles
        .iter()
        .map(|v| v.scheduled_departure)
        .fold(f64::NEG_INFINITY, f64::max);
    series.offset = -start;
    let n = (((end - start) / l).ceil() as usize).max(1);
    series.intervals = vec![BTreeMap::new(); n];
    for v in vehicles.iter().filter(|v| v.charges()) {
        let (Some(s), Some(e), Some(bus)) = (v.charge_start, v.charge_end, &v.bus_id) else { continue };
        let (s, e) = (s + series.offset, e + series.offset);
        if e <= s {
            continue;
        }
        let first = (s / l).floor().max(0.0) as usize;
        let last = ((e / l).ceil() as usize).min(n);
        for slot in &mut series.intervals[first..last] {
            *slot.entry(bus.clone()).or_insert(0) += 1;
        }
    }
    series
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> ScenarioConfig {
        let mut c = ScenarioConfig::example();
        c.ev_penetration_rate = 0.5;
        c.prediction_level = None;
        c.tazs_to_evacuate = vec!["z".into()];
        c
    }

    fn parcel(id: &str, n: u32) -> Parcel {
        let mut p = Parcel::new(id, 0.0, 0.0, "RESIDENTIAL", "01-SFR");
        p.vehicle_count = n;
        p.bus_id = Some("b".into());
        p.bus_distance = Some(10.0);
        p.edge_id = Some("e".into());
        p.taz_id = Some("z".into());
        p
    }

    fn ev(id: &str, dep: f64, ct: f64) -> SimVehicle {
        SimVehicle {
            vehicle_id: id.into(),
            parcel_id: "p".into(),
            taz_id: "z".into(),
            bus_id: Some("b".into()),
            origin_edge: "e".into(),
            is_electric: true,
            scheduled_departure: dep,
            charge_start: Some(dep - ct),
            charge_end: Some(dep),
        }
    }

    #[test]
    fn fraction_extremes() {
        let mut c = config();
        let parcels = [parcel("p1", 50)];
        c.ev_penetration_rate = 0.0;
        assert!(generate_vehicles(&c, &parcels, &BTreeMap::new()).unwrap().iter().all(|v| !v.is_electric));
        c.ev_penetration_rate = 1.0;
        assert!(generate_vehicles(&c, &parcels, &BTreeMap::new()).unwrap().iter().all(|v| v.is_electric));
    }

    #[test]
    fn ev_sets_are_nested() {
        let mut c = config();
        let parcels = [parcel("p1", 2000)];
        c.ev_penetration_rate = 0.3;
        let low = generate_vehicles(&c, &parcels, &BTreeMap::new()).unwrap();
        c.ev_penetration_rate = 0.5;
        let high = generate_vehicles(&c, &parcels, &BTreeMap::new()).unwrap();
        assert!(low.iter().zip(&high).all(|(a, b)| !a.is_electric || b.is_electric));
    }

    #[test]
    fn missing_profile_is_reported() {
        let mut c = config();
        c.ev_penetration_rate = FIXED_RATE_SENTINEL;
        c.prediction_level = Some(PredictionLevel::Medium);
        assert!(matches!(
            generate_vehicles(&c, &[parcel("p", 1)], &BTreeMap::new()),
            Err(ScenarioError::MissingProfile(_))
        ));
    }

    #[test]
    fn outside_coverage_does_not_charge() {
        let mut c = config();
        c.ev_penetration_rate = 1.0;
        let mut p = parcel("p", 3);
        p.bus_distance = Some(c.coverage_radius + 1.0);
        let v = generate_vehicles(&c, &[p], &BTreeMap::new()).unwrap();
        assert!(v.iter().all(|v| v.is_electric && v.bus_id.is_none() && !v.charges()));
    }

    #[test]
    fn zero_window_departs_at_once() {
        let mut c = config();
        c.departure_window = 0.0;
        c.charging_time = 28_800.0;
        let v = assign_schedules(&[ev("a", 5.0, 0.0)], &c);
        assert_eq!(v[0].scheduled_departure, 0.0);
        assert_eq!(v[0].charge_start, Some(-28_800.0));
    }

    #[test]
    fn overlapping_pair_doubles_the_load() {
        let mut c = config();
        c.charging_time = 1800.0;
        let s = build_charging_series(&[ev("a", 1800.0, 1800.0), ev("b", 1800.0, 1800.0)], &c);
        assert_eq!(s.len(), 2);
        assert_eq!(s.kw(0)["b"], 14.4);
        assert_eq!(s.total_kw(1), 14.4);
    }

    #[test]
    fn single_interval_window_hits_one_interval() {
        let mut c = config();
        c.charging_time = 900.0;
        let mut late = ev("b", 2700.0, 900.0);
        late.is_electric = false;
        late.charge_start = None;
        late.charge_end = None;
        let s = build_charging_series(&[ev("a", 900.0, 900.0), late], &c);
        assert_eq!(s.len(), 3);
        assert_eq!(s.total_kw(0), 7.2);
        assert_eq!(s.total_kw(1), 0.0);
        assert_eq!(s.total_kw(2), 0.0);
    }

    #[test]
    fn empty_vehicle_list_gives_empty_series() {
        assert!(build_charging_series(&[], &config()).is_empty());
    }
}
