use std::collections::HashMap;

use num_complex::Complex64;

use super::validate::feeder_heads;
use super::{
    validate_network, BranchKind, DistributionNetwork, GridError, PhaseMatrix, PhaseSet, TapRange,
};

#[derive(Debug, Clone, PartialEq)]
pub enum BranchModel {
    Line {
        impedance: PhaseMatrix,
    },
    /// `turns` is the nominal voltage ratio `base_to / base_from`; the
    /// effective per-phase ratio is `turns * tap[p]`.
    Transformer {
        impedance: [Complex64; 3],
        tap: [f64; 3],
        turns: f64,
        tap_range: Option<TapRange>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeBus {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub phases: PhaseSet,
    pub base_voltage: f64,
    pub vmin_pu: f64,
    pub vmax_pu: f64,
    /// Constant-power demand per phase in VA (base plus charging).
    pub load_va: [Complex64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeBranch {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub model: BranchModel,
    pub i_rated: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeCapacitor {
    pub id: String,
    pub bus: usize,
    pub kvar_per_phase: f64,
    pub on: bool,
    pub v_on_pu: f64,
    pub v_off_pu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeRegulator {
    pub branch: usize,
    pub regulated_bus: usize,
    pub target_pu: f64,
    pub band_pu: f64,
    pub step_count: u32,
    pub step_size: f64,
}

/// One radial feeder in breadth-first order.
///
/// `buses[0]` is the head bus and `branches[k]` always feeds `buses[k + 1]`,
/// so iterating branches forward is a forward sweep and backward is a
/// backward sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederTree {
    pub feeder_id: String,
    pub buses: Vec<TreeBus>,
    pub branches: Vec<TreeBranch>,
    pub capacitors: Vec<TreeCapacitor>,
    /// Sorted by branch id.
    pub regulators: Vec<TreeRegulator>,
}

impl FeederTree {
    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn branch_index(&self, id: &str) -> Option<usize> {
        self.branches.iter().position(|b| b.id == id)
    }

    pub fn parent_branch(&self, bus: usize) -> Option<usize> {
        bus.checked_sub(1)
    }

    pub fn total_load_va(&self) -> Complex64 {
        self.buses.iter().flat_map(|b| b.load_va).sum()
    }

    /// Signed tap position of a regulated phase, from the ratio.
    pub fn tap_position(&self, reg: &TreeRegulator, phase: usize) -> i32 {
        match &self.branches[reg.branch].model {
            BranchModel::Transformer { tap, .. } => ((tap[phase] - 1.0) / reg.step_size).round() as i32,
            BranchModel::Line { .. } => 0,
        }
    }
}

/// Splits a validated network into its feeder trees, sorted by feeder id.
pub fn feeder_partition(net: &DistributionNetwork) -> Result<Vec<FeederTree>, GridError> {
    let report = validate_network(net);
    if !report.is_valid() {
        return Err(GridError::Invalid(report));
    }

    let heads = feeder_heads(net);
    let bus_pos: HashMap<&str, usize> = net
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| (b.id.as_str(), i))
        .collect();

    let mut children: Vec<Vec<usize>> = vec![Vec::new(); net.buses.len()];
    for (k, br) in net.branches.iter().enumerate() {
        children[bus_pos[br.from_bus.as_str()]].push(k);
    }
    for list in &mut children {
        list.sort_by(|&a, &b| net.branches[a].to_bus.cmp(&net.branches[b].to_bus));
    }

    let mut load_va = vec![[Complex64::new(0.0, 0.0); 3]; net.buses.len()];
    for load in &net.loads {
        let i = bus_pos[load.bus_id.as_str()];
        for p in 0..3 {
            load_va[i][p] += Complex64::new(load.phase_kw[p], load.phase_kvar[p]) * 1e3;
        }
    }

    let mut trees = Vec::with_capacity(heads.len());
    for (feeder_id, head_list) in &heads {
        let head = bus_pos[head_list[0].as_str()];
        let mut order = vec![head];
        let mut local = HashMap::from([(head, 0usize)]);
        let mut branches = Vec::new();
        let mut cursor = 0;
        while cursor < order.len() {
            let u = order[cursor];
            cursor += 1;
            for &k in &children[u] {
                let br = &net.branches[k];
                let v = bus_pos[br.to_bus.as_str()];
                local.insert(v, order.len());
                order.push(v);
                let model = match &br.kind {
                    BranchKind::Line { impedance } => BranchModel::Line {
                        impedance: *impedance,
                    },
                    BranchKind::Transformer {
                        impedance,
                        tap,
                        tap_range,
                    } => BranchModel::Transformer {
                        impedance: *impedance,
                        tap: *tap,
                        turns: net.buses[v].base_voltage / net.buses[u].base_voltage,
                        tap_range: *tap_range,
                    },
                };
                branches.push(TreeBranch {
                    id: br.id.clone(),
                    from: local[&u],
                    to: local[&v],
                    model,
                    i_rated: br.i_rated,
                });
            }
        }

        let buses = order
            .iter()
            .map(|&i| {
                let b = &net.buses[i];
                TreeBus {
                    id: b.id.clone(),
                    x: b.x,
                    y: b.y,
                    phases: b.phases,
                    base_voltage: b.base_voltage,
                    vmin_pu: b.vmin_pu,
                    vmax_pu: b.vmax_pu,
                    load_va: load_va[i],
                }
            })
            .collect();

        let mut capacitors: Vec<TreeCapacitor> = net
            .capacitors
            .iter()
            .filter_map(|c| {
                let bus = *local.get(&bus_pos[c.bus_id.as_str()])?;
                Some(TreeCapacitor {
                    id: c.id.clone(),
                    bus,
                    kvar_per_phase: c.kvar_per_phase,
                    on: c.switched_on,
                    v_on_pu: c.v_on_pu,
                    v_off_pu: c.v_off_pu,
                })
            })
            .collect();
        capacitors.sort_by(|a, b| a.id.cmp(&b.id));

        let branch_local: HashMap<&str, usize> = branches
            .iter()
            .enumerate()
            .map(|(k, b): (usize, &TreeBranch)| (b.id.as_str(), k))
            .collect();
        let mut regulators: Vec<(String, TreeRegulator)> = net
            .regulators
            .iter()
            .filter_map(|r| {
                let branch = *branch_local.get(r.branch_id.as_str())?;
                let regulated_bus = *local.get(&bus_pos[r.regulated_bus.as_str()])?;
                Some((
                    r.branch_id.clone(),
                    TreeRegulator {
                        branch,
                        regulated_bus,
                        target_pu: r.target_pu,
                        band_pu: r.band_pu,
                        step_count: r.step_count,
                        step_size: r.step_size,
                    },
                ))
            })
            .collect();
        regulators.sort_by(|a, b| a.0.cmp(&b.0));

        trees.push(FeederTree {
            feeder_id: feeder_id.clone(),
            buses,
            branches,
            capacitors,
            regulators: regulators.into_iter().map(|(_, r)| r).collect(),
        });
    }
    Ok(trees)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;

    #[test]
    fn single_feeder_yields_one_tree() {
        let trees = feeder_partition(&chain3()).unwrap();
        assert_eq!(trees.len(), 1);
        let t = &trees[0];
        assert_eq!(t.buses.len(), 3);
        assert_eq!(t.buses[0].id, "b1");
        for (k, br) in t.branches.iter().enumerate() {
            assert_eq!(br.to, k + 1);
            assert!(br.from < br.to);
        }
        assert!((t.buses[2].load_va[0].re - 100e3).abs() < 1e-9);
    }

    #[test]
    fn empty_network_has_no_feeders() {
        let trees = feeder_partition(&DistributionNetwork::empty()).unwrap();
        assert!(trees.is_empty());
    }

    #[test]
    fn invalid_network_is_refused() {
        let mut net = chain3();
        net.branches
            .push(line("l13", "b1", "b3", Complex64::new(0.1, 0.2), 200.0));
        assert!(matches!(feeder_partition(&net), Err(GridError::Invalid(_))));
    }

    #[test]
    fn two_feeders_partition_the_buses() {
        let mut net = chain3();
        for (id, from, to) in [("m1", "", "c1"), ("m2", "c1", "c2")] {
            net.buses.push(bus(to, "f2", PhaseSet::ABC, 7200.0));
            if !from.is_empty() {
                net.branches
                    .push(line(id, from, to, Complex64::new(0.1, 0.2), 100.0));
            }
        }
        let trees = feeder_partition(&net).unwrap();
        assert_eq!(trees.len(), 2);
        let total: usize = trees.iter().map(|t| t.buses.len()).sum();
        assert_eq!(total, net.buses.len());
        assert_eq!(trees[1].buses[0].id, "c1");
    }
}
