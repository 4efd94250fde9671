use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{RoadNetwork, TrafficError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub edges: Vec<String>,
    /// Free-flow travel time over every edge of the route, seconds.
    pub travel_time: f64,
    pub length: f64,
}

#[derive(PartialEq)]
struct Label {
    cost: f64,
    edge: usize,
}

impl Eq for Label {}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.edge.cmp(&self.edge))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Label-setting shortest paths on the edge graph of a road network.
///
/// Costs are free-flow travel times and include both the origin and the
/// destination edge. Among equal-cost routes the one whose edge-id sequence
/// is lexicographically smallest wins.
pub struct Router<'a> {
    net: &'a RoadNetwork,
    index: HashMap<&'a str, usize>,
    successors: Vec<Vec<usize>>,
    cost: Vec<f64>,
}

impl<'a> Router<'a> {
    pub fn new(net: &'a RoadNetwork) -> Self {
        let index: HashMap<&str, usize> = net
            .edges
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.as_str(), i))
            .collect();
        let mut leaving: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, e) in net.edges.iter().enumerate() {
            leaving.entry(e.from_node.as_str()).or_default().push(i);
        }
        for list in leaving.values_mut() {
            list.sort_by(|&a, &b| net.edges[a].id.cmp(&net.edges[b].id));
        }
        let successors = net
            .edges
            .iter()
            .map(|e| leaving.get(e.to_node.as_str()).cloned().unwrap_or_default())
            .collect();
        let cost = net.edges.iter().map(|e| e.free_flow_time()).collect();
        Router {
            net,
            index,
            successors,
            cost,
        }
    }

    fn edge_index(&self, id: &str) -> Result<usize, TrafficError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| TrafficError::UnknownEdge(id.to_string()))
    }

    fn path(pred: &[usize], mut e: usize) -> Vec<usize> {
        let mut out = vec![e];
        while pred[e] != usize::MAX {
            e = pred[e];
            out.push(e);
        }
        out.reverse();
        out
    }

    fn lex_less(&self, a: &[usize], b: &[usize]) -> bool {
        let ids = |p: &[usize]| p.iter().map(|&i| self.net.edges[i].id.as_str()).collect::<Vec<_>>();
        ids(a) < ids(b)
    }

    pub fn route(&self, origin: &str, dest: &str) -> Result<Route, TrafficError> {
        let o = self.edge_index(origin)?;
        let d = self.edge_index(dest)?;
        let n = self.net.edges.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![usize::MAX; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[o] = self.cost[o];
        heap.push(Label {
            cost: dist[o],
            edge: o,
        });
        while let Some(Label { cost, edge }) = heap.pop() {
            if done[edge] || cost > dist[edge] {
                continue;
            }
            done[edge] = true;
            if edge == d {
                break;
            }
            for &next in &self.successors[edge] {
                if done[next] {
                    continue;
                }
                let candidate = cost + self.cost[next];
                let better = match candidate.total_cmp(&dist[next]) {
                    Ordering::Less => true,
                    Ordering::Equal => {
                        let mut via = Self::path(&pred, edge);
                        via.push(next);
                        self.lex_less(&via, &Self::path(&pred, next))
                    }
                    Ordering::Greater => false,
                };
                if better {
                    dist[next] = candidate;
                    pred[next] = edge;
                    heap.push(Label {
                        cost: candidate,
                        edge: next,
                    });
                }
            }
        }
        if !done[d] {
            return Err(TrafficError::Unreachable {
                origin: origin.to_string(),
                dest: dest.to_string(),
            });
        }
        let path = Self::path(&pred, d);
        Ok(Route {
            length: path.iter().map(|&i| self.net.edges[i].length).sum(),
            travel_time: dist[d],
            edges: path.iter().map(|&i| self.net.edges[i].id.clone()).collect(),
        })
    }

    /// Routes from many origins to one destination, computed in parallel.
    /// The result order follows `origins`.
    pub fn routes_to(&self, origins: &[String], dest: &str) -> Vec<Result<Route, TrafficError>> {
        origins.par_iter().map(|o| self.route(o, dest)).collect()
    }
}

/// Free-flow fastest route from `origin_edge` to `dest_edge`.
pub fn route_free_flow(
    net: &RoadNetwork,
    origin_edge: &str,
    dest_edge: &str,
) -> Result<Route, TrafficError> {
    Router::new(net).route(origin_edge, dest_edge)
}
