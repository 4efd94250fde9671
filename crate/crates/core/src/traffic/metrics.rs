use serde::{Deserialize, Serialize};

use super::{TrafficError, TrafficResult};

/// Evacuation summary. Averages are over arrived vehicles and absent when
/// nobody arrived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub vehicles: usize,
    pub arrived: usize,
    pub unarrived: usize,
    pub incomplete: bool,
    pub total_time_to_evacuate: Option<f64>,
    pub average_speed: Option<f64>,
    pub average_duration: Option<f64>,
    pub average_waiting_time: Option<f64>,
    pub average_time_loss: Option<f64>,
    pub average_departure_delay: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn traffic_metrics(result: &TrafficResult) -> Result<MetricsSummary, TrafficError> {
    if result.vehicles.is_empty() {
        return Err(TrafficError::EmptyResult);
    }
    let arrived: Vec<_> = result
        .vehicles
        .iter()
        .filter(|v| v.arrival_time.is_some() && v.duration.is_some())
        .collect();
    let earliest = result
        .vehicles
        .iter()
        .map(|v| v.scheduled_departure)
        .fold(f64::INFINITY, f64::min);
    let last_arrival = arrived
        .iter()
        .filter_map(|v| v.arrival_time)
        .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.max(t))));
    Ok(MetricsSummary {
        vehicles: result.vehicles.len(),
        arrived: arrived.len(),
        unarrived: result.vehicles.len() - arrived.len(),
        incomplete: arrived.len() < result.vehicles.len(),
        total_time_to_evacuate: last_arrival.map(|t| t - earliest),
        average_speed: mean(
            arrived
                .iter()
                .filter_map(|v| v.duration.filter(|d| *d > 0.0).map(|d| v.route_length / d)),
        ),
        average_duration: mean(arrived.iter().filter_map(|v| v.duration)),
        average_waiting_time: mean(arrived.iter().map(|v| v.waiting_time)),
        average_time_loss: mean(arrived.iter().filter_map(|v| v.time_loss)),
        average_departure_delay: mean(arrived.iter().filter_map(|v| v.departure_delay)),
    })
}
