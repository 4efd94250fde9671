//! Spatial and tabular links from parcels to buses, road edges, vehicle
//! counts and traffic analysis zones.

mod estimate;
pub mod geometry;

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Bus, DistributionNetwork, LoadKind};
use crate::traffic::RoadNetwork;

pub use estimate::{
    Estimate, EstimateRow, EstimateSource, ManualCount, VehicleEstimator, DEFAULT_ESTIMATES_CSV,
};

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("no buses to link against")]
    NoBuses,
    #[error("no road edges to link against")]
    NoEdges,
    #[error("edge {edge:?} references missing node {node:?}")]
    MissingNode { edge: String, node: String },
    #[error("degenerate TAZ polygon {0:?}")]
    DegeneratePolygon(String),
    #[error("duplicate TAZ id {0:?}")]
    DuplicateTaz(String),
    #[error("vehicle estimate table: {0}")]
    Table(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parcel {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub category: String,
    pub subcategory: String,
    #[serde(default)]
    pub vehicle_count: u32,
    #[serde(default)]
    pub bus_id: Option<String>,
    #[serde(default)]
    pub bus_distance: Option<f64>,
    #[serde(default)]
    pub edge_id: Option<String>,
    #[serde(default)]
    pub taz_id: Option<String>,
}

impl Parcel {
    pub fn new(id: &str, x: f64, y: f64, category: &str, subcategory: &str) -> Self {
        Parcel {
            id: id.into(),
            x,
            y,
            category: category.into(),
            subcategory: subcategory.into(),
            vehicle_count: 0,
            bus_id: None,
            bus_distance: None,
            edge_id: None,
            taz_id: None,
        }
    }

    pub fn point(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

/// Unlinked parcel table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParcelRow {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub category: String,
    pub subcategory: String,
}

impl From<&Parcel> for ParcelRow {
    fn from(p: &Parcel) -> Self {
        ParcelRow {
            id: p.id.clone(),
            x: p.x,
            y: p.y,
            category: p.category.clone(),
            subcategory: p.subcategory.clone(),
        }
    }
}

/// Reads a parcel table; link columns are optional.
pub fn read_parcels(path: &Path) -> crate::Result<Vec<Parcel>> {
    crate::io::read_csv(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Taz {
    pub id: String,
    /// Outer ring, open or closed.
    pub polygon: Vec<[f64; 2]>,
    pub census_tract_id: String,
    /// Square meters.
    pub land_area: f64,
}

impl Taz {
    pub fn validate(&self) -> Result<(), LinkError> {
        let ring = geometry::open_ring(&self.polygon);
        let distinct: HashSet<(u64, u64)> =
            ring.iter().map(|p| (p[0].to_bits(), p[1].to_bits())).collect();
        if distinct.len() < 3
            || geometry::ring_area(ring) <= 0.0
            || geometry::self_intersects(ring)
            || !(self.land_area > 0.0)
        {
            return Err(LinkError::DegeneratePolygon(self.id.clone()));
        }
        Ok(())
    }

    pub fn contains(&self, p: (f64, f64)) -> bool {
        geometry::point_in_polygon(p, geometry::open_ring(&self.polygon))
    }

    pub fn centroid(&self) -> (f64, f64) {
        let ring = geometry::open_ring(&self.polygon);
        let n = ring.len().max(1) as f64;
        let (sx, sy) = ring.iter().fold((0.0, 0.0), |(x, y), p| (x + p[0], y + p[1]));
        (sx / n, sy / n)
    }
}

pub fn read_tazs(path: &Path) -> crate::Result<Vec<Taz>> {
    crate::io::read_json(path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Nearest {
    pub id: String,
    pub distance: f64,
}

fn better(d: f64, id: &str, best: &Option<(f64, &str)>) -> bool {
    match best {
        None => true,
        Some((bd, bid)) => d < *bd || (d == *bd && id < *bid),
    }
}

/// Closest bus by planar distance; equal distances go to the smaller id.
pub fn nearest_bus(parcel: &Parcel, buses: &[Bus]) -> Result<Nearest, LinkError> {
    let p = parcel.point();
    let mut best: Option<(f64, &str)> = None;
    for b in buses {
        let d2 = (b.x - p.0).powi(2) + (b.y - p.1).powi(2);
        if better(d2, &b.id, &best) {
            best = Some((d2, &b.id));
        }
    }
    best.map(|(d2, id)| Nearest {
        id: id.to_string(),
        distance: d2.sqrt(),
    })
    .ok_or(LinkError::NoBuses)
}

/// Road edges as straight segments between their node coordinates.
#[derive(Debug, Clone)]
pub struct EdgeSegments {
    segments: Vec<(String, (f64, f64), (f64, f64))>,
}

impl EdgeSegments {
    pub fn new(road: &RoadNetwork) -> Result<Self, LinkError> {
        let pos = road.node_positions();
        let lookup = |edge: &str, node: &str| {
            pos.get(node).copied().ok_or_else(|| LinkError::MissingNode {
                edge: edge.to_string(),
                node: node.to_string(),
            })
        };
        let segments = road
            .edges
            .iter()
            .map(|e| Ok((e.id.clone(), lookup(&e.id, &e.from_node)?, lookup(&e.id, &e.to_node)?)))
            .collect::<Result<_, LinkError>>()?;
        Ok(EdgeSegments { segments })
    }

    /// Closest edge by point-to-segment distance; ties go to the smaller id.
    pub fn nearest(&self, p: (f64, f64)) -> Result<Nearest, LinkError> {
        let mut best: Option<(f64, &str)> = None;
        for (id, a, b) in &self.segments {
            let d = geometry::point_segment_distance(p, *a, *b);
            if better(d, id, &best) {
                best = Some((d, id));
            }
        }
        best.map(|(distance, id)| Nearest {
            id: id.to_string(),
            distance,
        })
        .ok_or(LinkError::NoEdges)
    }
}

pub fn nearest_edge(parcel: &Parcel, road: &RoadNetwork) -> Result<Nearest, LinkError> {
    EdgeSegments::new(road)?.nearest(parcel.point())
}

/// Containing TAZ with the smallest id, or `None` when the parcel lies
/// outside every zone.
pub fn assign_taz(parcel: &Parcel, tazs: &[Taz]) -> Result<Option<String>, LinkError> {
    for t in tazs {
        t.validate()?;
    }
    Ok(assign_validated(parcel.point(), tazs))
}

fn assign_validated(p: (f64, f64), tazs: &[Taz]) -> Option<String> {
    tazs.iter()
        .filter(|t| t.contains(p))
        .map(|t| t.id.as_str())
        .min()
        .map(str::to_string)
}

/// Buses carrying base load, the attachment points for parcels. Falls back
/// to every bus when the network has no base loads.
pub fn load_buses(net: &DistributionNetwork) -> Vec<Bus> {
    let loaded: HashSet<&str> = net
        .loads
        .iter()
        .filter(|l| l.kind == LoadKind::Base)
        .map(|l| l.bus_id.as_str())
        .collect();
    if loaded.is_empty() {
        return net.buses.clone();
    }
    net.buses
        .iter()
        .filter(|b| loaded.contains(b.id.as_str()))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSummary {
    pub parcels: usize,
    pub vehicles: u64,
    pub unassigned_parcels: Vec<String>,
    pub missing_estimates: Vec<String>,
    pub manual_estimates: usize,
}

/// Resolves every link of every parcel. Runs per parcel in parallel; the
/// output keeps the input order.
pub fn link_parcels(
    parcels: &[Parcel],
    buses: &[Bus],
    road: &RoadNetwork,
    tazs: &[Taz],
    estimator: &VehicleEstimator,
) -> Result<(Vec<Parcel>, LinkSummary), LinkError> {
    if buses.is_empty() {
        return Err(LinkError::NoBuses);
    }
    let mut seen = HashSet::new();
    for t in tazs {
        t.validate()?;
        if !seen.insert(t.id.as_str()) {
            return Err(LinkError::DuplicateTaz(t.id.clone()));
        }
    }
    let segments = EdgeSegments::new(road)?;
    let linked: Vec<(Parcel, EstimateSource)> = parcels
        .par_iter()
        .map(|p| {
            let bus = nearest_bus(p, buses)?;
            let edge = segments.nearest(p.point())?;
            let est = estimator.estimate(&p.id, &p.category, &p.subcategory);
            let mut out = p.clone();
            out.bus_id = Some(bus.id);
            out.bus_distance = Some(bus.distance);
            out.edge_id = Some(edge.id);
            out.taz_id = assign_validated(p.point(), tazs);
            out.vehicle_count = est.vehicles;
            Ok((out, est.source))
        })
        .collect::<Result<_, LinkError>>()?;
    let mut summary = LinkSummary {
        parcels: linked.len(),
        vehicles: 0,
        unassigned_parcels: Vec::new(),
        missing_estimates: Vec::new(),
        manual_estimates: 0,
    };
    for (p, source) in &linked {
        summary.vehicles += u64::from(p.vehicle_count);
        if p.taz_id.is_none() {
            summary.unassigned_parcels.push(p.id.clone());
        }
        match source {
            EstimateSource::Missing => {
                log::warn!("no vehicle estimate for parcel {} ({} / {})", p.id, p.category, p.subcategory);
                summary.missing_estimates.push(p.id.clone());
            }
            EstimateSource::Manual => summary.manual_estimates += 1,
            EstimateSource::Table => {}
        }
    }
    Ok((linked.into_iter().map(|(p, _)| p).collect(), summary))
}
