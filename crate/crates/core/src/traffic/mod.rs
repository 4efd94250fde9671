//! Mesoscopic link-queue traffic simulation with free-flow routing.

mod metrics;
mod routing;
mod sim;

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{traffic_metrics, MetricsSummary};
pub use routing::{route_free_flow, Route, Router};
pub use sim::{
    simulate_traffic, simulate_traffic_observed, CurvePoint, SimOptions, StepCounts, TrafficResult,
    VehicleRecord,
};

pub const DEFAULT_SATURATION_FLOW: f64 = 0.5;
pub const DEFAULT_JAM_DENSITY: f64 = 0.145;

#[derive(Debug, Error)]
pub enum TrafficError {
    #[error("unknown edge {0:?}")]
    UnknownEdge(String),
    #[error("edge {dest:?} is unreachable from {origin:?}")]
    Unreachable { origin: String, dest: String },
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("trip {vehicle:?} has no valid route: {reason}")]
    UnroutedTrip { vehicle: String, reason: String },
    #[error("invalid road network: {0}")]
    InvalidNetwork(String),
    #[error("no vehicles in traffic result")]
    EmptyResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadNode {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

fn default_saturation_flow() -> f64 {
    DEFAULT_SATURATION_FLOW
}

fn default_jam_density() -> f64 {
    DEFAULT_JAM_DENSITY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadEdge {
    pub id: String,
    pub from_node: String,
    pub to_node: String,
    /// Meters.
    pub length: f64,
    /// Free-flow speed, m/s.
    pub speed: f64,
    pub lanes: u32,
    /// Vehicles per second per lane.
    #[serde(default = "default_saturation_flow")]
    pub saturation_flow: f64,
    /// Vehicles per meter per lane.
    #[serde(default = "default_jam_density")]
    pub jam_density: f64,
}

impl RoadEdge {
    pub fn free_flow_time(&self) -> f64 {
        self.length / self.speed
    }

    /// Maximum number of vehicles the edge can hold.
    pub fn storage(&self) -> f64 {
        self.length * f64::from(self.lanes) * self.jam_density
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadNetwork {
    pub format_version: u32,
    pub nodes: Vec<RoadNode>,
    pub edges: Vec<RoadEdge>,
}

impl RoadNetwork {
    pub fn new(nodes: Vec<RoadNode>, edges: Vec<RoadEdge>) -> Self {
        RoadNetwork {
            format_version: 1,
            nodes,
            edges,
        }
    }

    pub fn read_json(path: &Path) -> crate::Result<Self> {
        crate::io::read_json(path)
    }

    pub fn write_json(&self, path: &Path) -> crate::Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn validate(&self) -> Result<(), TrafficError> {
        let bad = |m: String| Err(TrafficError::InvalidNetwork(m));
        let mut nodes = HashSet::new();
        for n in &self.nodes {
            if !nodes.insert(n.id.as_str()) {
                return bad(format!("duplicate node {:?}", n.id));
            }
        }
        let mut edges = HashSet::new();
        for e in &self.edges {
            if !edges.insert(e.id.as_str()) {
                return bad(format!("duplicate edge {:?}", e.id));
            }
            if !nodes.contains(e.from_node.as_str()) || !nodes.contains(e.to_node.as_str()) {
                return bad(format!("edge {:?} references a missing node", e.id));
            }
            let positive = [e.length, e.speed, e.saturation_flow, e.jam_density]
                .iter()
                .all(|v| *v > 0.0 && v.is_finite());
            if !positive || e.lanes < 1 {
                return bad(format!("edge {:?} has nonpositive attributes", e.id));
            }
        }
        Ok(())
    }

    pub fn node_positions(&self) -> HashMap<&str, (f64, f64)> {
        self.nodes.iter().map(|n| (n.id.as_str(), (n.x, n.y))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleTrip {
    pub vehicle_id: String,
    pub origin_edge: String,
    pub dest_edge: String,
    /// Seconds on the evacuation clock.
    pub scheduled_departure: f64,
    pub route: Vec<String>,
    pub is_electric: bool,
}
