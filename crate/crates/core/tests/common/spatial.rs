//! Exhaustive spatial oracles and random instance generators.

use evtcosim_core::grid::{Bus, PhaseSet};
use evtcosim_core::linker::{Parcel, Taz};
use evtcosim_core::traffic::{RoadEdge, RoadNetwork, RoadNode};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_parcels(rng: &mut ChaCha8Rng, n: usize, extent: f64) -> Vec<Parcel> {
    (0..n)
        .map(|i| {
            Parcel::new(
                &format!("p{i:04}"),
                rng.gen_range(0.0..extent),
                rng.gen_range(0.0..extent),
                "RESIDENTIAL",
                "01-SFR",
            )
        })
        .collect()
}

pub fn random_buses(rng: &mut ChaCha8Rng, n: usize, extent: f64) -> Vec<Bus> {
    (0..n)
        .map(|i| Bus {
            id: format!("bus{i:04}"),
            feeder_id: "f".into(),
            x: rng.gen_range(0.0..extent),
            y: rng.gen_range(0.0..extent),
            phases: PhaseSet::ABC,
            base_voltage: 240.0,
            vmin_pu: 0.95,
            vmax_pu: 1.05,
        })
        .collect()
}

/// Random nodes joined by random directed edges, some of them two-way.
pub fn random_roads(rng: &mut ChaCha8Rng, nodes: usize, edges: usize, extent: f64) -> RoadNetwork {
    let ns: Vec<RoadNode> = (0..nodes)
        .map(|i| RoadNode {
            id: format!("n{i:04}"),
            x: rng.gen_range(0.0..extent),
            y: rng.gen_range(0.0..extent),
        })
        .collect();
    let mut es = Vec::new();
    while es.len() < edges {
        let a = rng.gen_range(0..nodes);
        let b = rng.gen_range(0..nodes);
        if a == b {
            continue;
        }
        let mut push = |from: usize, to: usize| {
            es.push(RoadEdge {
                id: format!("e{:04}", es.len()),
                from_node: ns[from].id.clone(),
                to_node: ns[to].id.clone(),
                length: 100.0,
                speed: 10.0,
                lanes: 1,
                saturation_flow: 0.5,
                jam_density: 0.145,
            })
        };
        push(a, b);
        if rng.gen_bool(0.3) {
            push(b, a);
        }
    }
    es.truncate(edges);
    RoadNetwork::new(ns, es)
}

/// Random triangles and quadrilaterals, possibly overlapping.
pub fn random_tazs(rng: &mut ChaCha8Rng, n: usize, extent: f64) -> Vec<Taz> {
    (0..n)
        .map(|i| {
            let cx = rng.gen_range(0.0..extent);
            let cy = rng.gen_range(0.0..extent);
            let r = rng.gen_range(0.03..0.15) * extent;
            let k = rng.gen_range(3..=4);
            // Sorted angles give a simple, counter-clockwise ring.
            let mut angles: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
            angles.sort_by(f64::total_cmp);
            let polygon = angles.iter().map(|a| [cx + r * a.cos(), cy + r * a.sin()]).collect();
            Taz {
                id: format!("taz{i:03}"),
                polygon,
                census_tract_id: "t".into(),
                land_area: 1.0,
            }
        })
        .filter(|t| t.validate().is_ok())
        .collect()
}

/// Nearest bus by exhaustive scan of squared distances; ties to the
/// smaller id.
pub fn nearest_bus(p: (f64, f64), buses: &[Bus]) -> String {
    let mut best: Option<(f64, &str)> = None;
    for b in buses {
        let d = (b.x - p.0) * (b.x - p.0) + (b.y - p.1) * (b.y - p.1);
        let better = match best {
            None => true,
            Some((bd, bid)) => d < bd || (d == bd && b.id.as_str() < bid),
        };
        if better {
            best = Some((d, &b.id));
        }
    }
    best.unwrap().1.to_string()
}

/// Distance from `p` to segment `ab` via the clamped projection parameter.
pub fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// Nearest edge id and distance. Distances within a relative 1e-12 count as
/// ties (a two-way street is two coincident segments) and go to the
/// smaller id.
pub fn nearest_edge(p: (f64, f64), road: &RoadNetwork) -> (String, f64) {
    let pos = road.node_positions();
    let dists: Vec<(f64, &str)> = road
        .edges
        .iter()
        .map(|e| (segment_distance(p, pos[e.from_node.as_str()], pos[e.to_node.as_str()]), e.id.as_str()))
        .collect();
    let min = dists.iter().map(|d| d.0).fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * min.max(1.0);
    let id = dists.iter().filter(|d| d.0 <= min + tol).map(|d| d.1).min().unwrap();
    (id.to_string(), min)
}

/// Winding-number containment test.
pub fn inside(p: (f64, f64), ring: &[[f64; 2]]) -> bool {
    let n = ring.len();
    let mut winding = 0i32;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        let cross = (b[0] - a[0]) * (p.1 - a[1]) - (p.0 - a[0]) * (b[1] - a[1]);
        if a[1] <= p.1 {
            if b[1] > p.1 && cross > 0.0 {
                winding += 1;
            }
        } else if b[1] <= p.1 && cross < 0.0 {
            winding -= 1;
        }
    }
    winding != 0
}

pub fn assign_taz(p: (f64, f64), tazs: &[Taz]) -> Option<String> {
    tazs.iter().filter(|t| inside(p, &t.polygon)).map(|t| t.id.clone()).min()
}
