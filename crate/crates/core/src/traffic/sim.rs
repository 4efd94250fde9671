//! Discrete-time link-queue stepper.
//!
//! A vehicle entering an edge travels it at free-flow speed, then joins the
//! edge's FIFO exit queue. Each step an edge discharges up to its capacity,
//! but only while the next edge on the head vehicle's route has free
//! storage. Discharge capacity accrues fractionally so that rates below one
//! vehicle per step still move traffic.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{RoadNetwork, TrafficError, VehicleTrip};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Step length, seconds.
    pub dt: f64,
    /// Hard stop, seconds.
    pub max_sim_time: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            dt: 1.0,
            max_sim_time: 48.0 * 3600.0,
        }
    }
}

/// Vehicle counts at the end of a step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StepCounts {
    pub step: u64,
    pub inserted: usize,
    pub arrived: usize,
    /// On an edge, still inside its free-flow travel time.
    pub en_route: usize,
    /// On an edge, done travelling, waiting to discharge.
    pub queued: usize,
    /// Scheduled to depart but blocked at a full origin edge.
    pub waiting_to_insert: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub vehicle_id: String,
    pub is_electric: bool,
    pub scheduled_departure: f64,
    pub insertion_time: Option<f64>,
    pub arrival_time: Option<f64>,
    pub departure_delay: Option<f64>,
    pub duration: Option<f64>,
    pub waiting_time: f64,
    pub time_loss: Option<f64>,
    pub route_length: f64,
    pub free_flow_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub time_s: f64,
    pub cumulative_departures: usize,
    pub cumulative_arrivals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficResult {
    /// Same order as the input trips.
    pub vehicles: Vec<VehicleRecord>,
    pub steps: u64,
    pub end_time: f64,
}

impl TrafficResult {
    pub fn arrived(&self) -> usize {
        self.vehicles.iter().filter(|v| v.arrival_time.is_some()).count()
    }

    /// Step curves of insertions and arrivals, one point per distinct event time.
    pub fn cumulative_curve(&self) -> Vec<CurvePoint> {
        let mut events: Vec<(f64, bool)> = Vec::new();
        for v in &self.vehicles {
            if let Some(t) = v.insertion_time {
                events.push((t, false));
            }
            if let Some(t) = v.arrival_time {
                events.push((t, true));
            }
        }
        events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut out: Vec<CurvePoint> = Vec::new();
        let (mut dep, mut arr) = (0, 0);
        for (t, is_arrival) in events {
            if is_arrival {
                arr += 1;
            } else {
                dep += 1;
            }
            match out.last_mut() {
                Some(last) if last.time_s == t => {
                    last.cumulative_departures = dep;
                    last.cumulative_arrivals = arr;
                }
                _ => out.push(CurvePoint {
                    time_s: t,
                    cumulative_departures: dep,
                    cumulative_arrivals: arr,
                }),
            }
        }
        out
    }
}

struct EdgeState {
    queue: VecDeque<usize>,
    occupancy: usize,
    storage: f64,
    rate: f64,
    budget: f64,
    accrued_to: u64,
    tau: f64,
}

impl EdgeState {
    fn has_room(&self) -> bool {
        (self.occupancy as f64) < self.storage
    }

    fn accrue(&mut self, step: u64) {
        if step > self.accrued_to {
            let cap = self.rate.max(1.0);
            self.budget = (self.budget + self.rate * (step - self.accrued_to) as f64).min(cap);
            self.accrued_to = step;
        }
    }
}

struct VehState {
    route: Vec<usize>,
    pos: usize,
    ready: f64,
    entry_step: u64,
    waited: f64,
    inserted: Option<f64>,
    arrived: Option<f64>,
}

fn check_route(
    trip: &VehicleTrip,
    net: &RoadNetwork,
    index: &HashMap<&str, usize>,
) -> Result<Vec<usize>, TrafficError> {
    let unrouted = |reason: &str| TrafficError::UnroutedTrip {
        vehicle: trip.vehicle_id.clone(),
        reason: reason.to_string(),
    };
    if trip.route.first() != Some(&trip.origin_edge) || trip.route.last() != Some(&trip.dest_edge) {
        return Err(unrouted("route must start at the origin and end at the destination"));
    }
    let route = trip
        .route
        .iter()
        .map(|id| index.get(id.as_str()).copied().ok_or_else(|| unrouted("unknown edge")))
        .collect::<Result<Vec<_>, _>>()?;
    for pair in route.windows(2) {
        if net.edges[pair[0]].to_node != net.edges[pair[1]].from_node {
            return Err(unrouted("consecutive edges do not share a node"));
        }
    }
    if !trip.scheduled_departure.is_finite() || trip.scheduled_departure < 0.0 {
        return Err(unrouted("scheduled departure must be a nonnegative time"));
    }
    Ok(route)
}

pub fn simulate_traffic(
    net: &RoadNetwork,
    trips: &[VehicleTrip],
    opts: &SimOptions,
) -> Result<TrafficResult, TrafficError> {
    simulate_traffic_observed(net, trips, opts, |_| {})
}

/// Like [`simulate_traffic`], calling `observe` after every simulated step.
pub fn simulate_traffic_observed(
    net: &RoadNetwork,
    trips: &[VehicleTrip],
    opts: &SimOptions,
    mut observe: impl FnMut(&StepCounts),
) -> Result<TrafficResult, TrafficError> {
    if !(opts.dt > 0.0) || !opts.dt.is_finite() {
        return Err(TrafficError::NonPositiveStep(opts.dt));
    }
    net.validate()?;
    let dt = opts.dt;
    let index: HashMap<&str, usize> = net
        .edges
        .iter()
        .enumerate()
        .map(|(i, e)| (e.id.as_str(), i))
        .collect();

    // Process edges in id order.
    let mut order: Vec<usize> = (0..net.edges.len()).collect();
    order.sort_by(|&a, &b| net.edges[a].id.cmp(&net.edges[b].id));
    let mut rank_of_edge = vec![0; net.edges.len()];
    for (r, &e) in order.iter().enumerate() {
        rank_of_edge[e] = r;
    }
    let mut edges: Vec<EdgeState> = order
        .iter()
        .map(|&i| {
            let e = &net.edges[i];
            EdgeState {
                queue: VecDeque::new(),
                occupancy: 0,
                storage: e.storage(),
                rate: f64::from(e.lanes) * e.saturation_flow * dt,
                budget: 0.0,
                accrued_to: 0,
                tau: e.free_flow_time(),
            }
        })
        .collect();

    let mut vehicles = Vec::with_capacity(trips.len());
    for trip in trips {
        let route = check_route(trip, net, &index)?;
        vehicles.push(VehState {
            route: route.into_iter().map(|e| rank_of_edge[e]).collect(),
            pos: 0,
            ready: 0.0,
            entry_step: 0,
            waited: 0.0,
            inserted: None,
            arrived: None,
        });
    }

    // Same-step entries onto an edge are ordered by vehicle id.
    let mut id_order: Vec<usize> = (0..trips.len()).collect();
    id_order.sort_by(|&a, &b| trips[a].vehicle_id.cmp(&trips[b].vehicle_id));
    let mut id_rank = vec![0; trips.len()];
    for (r, &v) in id_order.iter().enumerate() {
        id_rank[v] = r;
    }

    let mut pending: Vec<usize> = (0..trips.len()).collect();
    pending.sort_by(|&a, &b| {
        trips[a]
            .scheduled_departure
            .total_cmp(&trips[b].scheduled_departure)
            .then(id_rank[a].cmp(&id_rank[b]))
    });
    let mut next_pending = 0;
    let mut blocked: BTreeMap<usize, VecDeque<usize>> = BTreeMap::new();
    let mut blocked_count = 0;
    let mut active: BTreeSet<usize> = BTreeSet::new();
    let mut incoming: BTreeMap<usize, Vec<usize>> = BTreeMap::new();

    let max_step = (opts.max_sim_time / dt).floor() as u64;
    let eligible = |v: &VehState| -> u64 {
        let ready_step = (v.ready / dt).ceil().max(0.0) as u64;
        ready_step.max(v.entry_step + 1)
    };
    let first_step = |t: f64| (t / dt).ceil().max(0.0) as u64;

    let mut counts = StepCounts::default();
    let mut step: u64 = 0;
    loop {
        if counts.arrived == trips.len() {
            break;
        }
        if active.is_empty() && blocked_count == 0 {
            // Nothing moving; jump to the next departure.
            match pending.get(next_pending) {
                Some(&v) => step = step.max(first_step(trips[v].scheduled_departure)),
                None => break,
            }
        }
        if step > max_step {
            break;
        }
        let t = step as f64 * dt;

        let snapshot: Vec<usize> = active.iter().copied().collect();
        for e in snapshot {
            edges[e].accrue(step);
            while edges[e].budget >= 1.0 - 1e-9 {
                let Some(&v) = edges[e].queue.front() else { break };
                let due = eligible(&vehicles[v]);
                if step < due {
                    break;
                }
                let exit = if step == due { vehicles[v].ready } else { t };
                let veh = &vehicles[v];
                let last = veh.pos + 1 == veh.route.len();
                if !last && !edges[veh.route[veh.pos + 1]].has_room() {
                    break;
                }
                edges[e].queue.pop_front();
                edges[e].occupancy -= 1;
                edges[e].budget -= 1.0;
                let veh = &mut vehicles[v];
                veh.waited += exit - veh.ready;
                if last {
                    veh.arrived = Some(exit);
                    counts.arrived += 1;
                } else {
                    veh.pos += 1;
                    let next = veh.route[veh.pos];
                    veh.ready = exit + edges[next].tau;
                    veh.entry_step = step;
                    edges[next].occupancy += 1;
                    incoming.entry(next).or_default().push(v);
                }
            }
            if edges[e].queue.is_empty() {
                active.remove(&e);
            }
        }

        while let Some(&v) = pending.get(next_pending) {
            if first_step(trips[v].scheduled_departure) > step {
                break;
            }
            blocked.entry(vehicles[v].route[0]).or_default().push_back(v);
            blocked_count += 1;
            next_pending += 1;
        }
        blocked.retain(|&e, waiting| {
            while let Some(&v) = waiting.front() {
                if !edges[e].has_room() {
                    break;
                }
                waiting.pop_front();
                blocked_count -= 1;
                let scheduled = trips[v].scheduled_departure;
                let at = if step == first_step(scheduled) { scheduled } else { t };
                let veh = &mut vehicles[v];
                veh.inserted = Some(at);
                veh.ready = at + edges[e].tau;
                veh.entry_step = step;
                edges[e].occupancy += 1;
                counts.inserted += 1;
                incoming.entry(e).or_default().push(v);
            }
            !waiting.is_empty()
        });

        for (e, mut list) in std::mem::take(&mut incoming) {
            list.sort_by_key(|&v| id_rank[v]);
            edges[e].queue.extend(list);
            active.insert(e);
        }

        counts.step = step;
        counts.waiting_to_insert = blocked_count;
        counts.en_route = 0;
        counts.queued = 0;
        for &e in &active {
            for &v in &edges[e].queue {
                if vehicles[v].ready > t {
                    counts.en_route += 1;
                } else {
                    counts.queued += 1;
                }
            }
        }
        observe(&counts);
        step += 1;
    }

    let records = trips
        .iter()
        .zip(&vehicles)
        .map(|(trip, v)| {
            let route_length = v.route.iter().map(|&e| net.edges[order[e]].length).sum();
            let free_flow_time: f64 = v.route.iter().map(|&e| edges[e].tau).sum();
            let duration = match (v.inserted, v.arrived) {
                (Some(a), Some(b)) => Some(b - a),
                _ => None,
            };
            VehicleRecord {
                vehicle_id: trip.vehicle_id.clone(),
                is_electric: trip.is_electric,
                scheduled_departure: trip.scheduled_departure,
                insertion_time: v.inserted,
                arrival_time: v.arrived,
                departure_delay: v.inserted.map(|t| t - trip.scheduled_departure),
                duration,
                waiting_time: v.waited,
                time_loss: duration.map(|d| (d - free_flow_time).max(0.0)),
                route_length,
                free_flow_time,
            }
        })
        .collect();
    Ok(TrafficResult {
        vehicles: records,
        steps: step,
        end_time: step as f64 * dt,
    })
}
