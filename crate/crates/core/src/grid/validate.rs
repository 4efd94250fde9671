use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use super::{BranchKind, DistributionNetwork, LoadKind, FORMAT_VERSION};

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    UnsupportedVersion(u32),
    DuplicateId { entity: &'static str, id: String },
    InvalidBus { id: String, reason: String },
    InvalidBranch { id: String, reason: String },
    DanglingReference { entity: &'static str, id: String, missing: String },
    NonPositiveRating { id: String, rating: f64 },
    PhaseMismatch { branch: String },
    InvalidLoad { bus: String, reason: String },
    InvalidCapacitor { id: String, reason: String },
    InvalidRegulator { branch: String, reason: String },
    CrossFeederBranch { branch: String },
    FeederHead { feeder: String, reason: String },
    Cycle { feeder: String, branch: String },
    Disconnected { feeder: String, bus: String },
    Orientation { feeder: String, bus: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            UnsupportedVersion(v) => write!(f, "unsupported format_version {v}"),
            DuplicateId { entity, id } => write!(f, "duplicate {entity} id {id:?}"),
            InvalidBus { id, reason } => write!(f, "bus {id:?}: {reason}"),
            InvalidBranch { id, reason } => write!(f, "branch {id:?}: {reason}"),
            DanglingReference { entity, id, missing } => {
                write!(f, "{entity} {id:?} references missing {missing:?}")
            }
            NonPositiveRating { id, rating } => {
                write!(f, "branch {id:?} has nonpositive rating {rating}")
            }
            PhaseMismatch { branch } => {
                write!(f, "branch {branch:?} serves phases absent upstream")
            }
            InvalidLoad { bus, reason } => write!(f, "load at {bus:?}: {reason}"),
            InvalidCapacitor { id, reason } => write!(f, "capacitor {id:?}: {reason}"),
            InvalidRegulator { branch, reason } => write!(f, "regulator on {branch:?}: {reason}"),
            CrossFeederBranch { branch } => write!(f, "branch {branch:?} joins two feeders"),
            FeederHead { feeder, reason } => write!(f, "feeder {feeder:?}: {reason}"),
            Cycle { feeder, branch } => write!(f, "feeder {feeder:?}: branch {branch:?} closes a cycle"),
            Disconnected { feeder, bus } => {
                write!(f, "feeder {feeder:?}: bus {bus:?} unreachable from head")
            }
            Orientation { feeder, bus } => {
                write!(f, "feeder {feeder:?}: bus {bus:?} must be fed by exactly one branch")
            }
        }
    }
}

/// All problems found in a network; empty iff the network is usable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, v: Violation) {
        self.violations.push(v);
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    /// False when `a` and `b` were already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra] = rb;
        true
    }
}

/// Resolves the head bus of every feeder: explicit substation heads first,
/// otherwise the single bus of the feeder that no branch feeds.
pub(crate) fn feeder_heads(net: &DistributionNetwork) -> BTreeMap<String, Vec<String>> {
    let mut heads: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let bus_feeder: HashMap<&str, &str> = net
        .buses
        .iter()
        .map(|b| (b.id.as_str(), b.feeder_id.as_str()))
        .collect();
    for sub in &net.substations {
        for head in &sub.feeder_heads {
            if let Some(f) = bus_feeder.get(head.as_str()) {
                heads.entry((*f).to_string()).or_default().push(head.clone());
            }
        }
    }
    let explicit: HashSet<String> = heads.keys().cloned().collect();
    let fed: HashSet<&str> = net.branches.iter().map(|b| b.to_bus.as_str()).collect();
    for bus in &net.buses {
        if explicit.contains(&bus.feeder_id) {
            continue;
        }
        if !fed.contains(bus.id.as_str()) {
            heads.entry(bus.feeder_id.clone()).or_default().push(bus.id.clone());
        }
    }
    for list in heads.values_mut() {
        list.sort();
        list.dedup();
    }
    heads
}

pub fn validate_network(net: &DistributionNetwork) -> ValidationReport {
    let mut report = ValidationReport::default();
    if net.format_version != FORMAT_VERSION {
        report.push(Violation::UnsupportedVersion(net.format_version));
    }

    let mut bus_index: HashMap<&str, usize> = HashMap::new();
    for (i, bus) in net.buses.iter().enumerate() {
        if bus_index.insert(bus.id.as_str(), i).is_some() {
            report.push(Violation::DuplicateId {
                entity: "bus",
                id: bus.id.clone(),
            });
        }
        let mut bad = |reason: &str| {
            report.push(Violation::InvalidBus {
                id: bus.id.clone(),
                reason: reason.into(),
            })
        };
        if !(bus.base_voltage > 0.0 && bus.base_voltage.is_finite()) {
            bad("base_voltage must be positive");
        }
        if bus.phases.is_empty() {
            bad("no phases");
        }
        if !(bus.vmin_pu < 1.0 && 1.0 < bus.vmax_pu) {
            bad("voltage limits must bracket 1.0 pu");
        }
    }

    let mut branch_ids = HashSet::new();
    for br in &net.branches {
        if !branch_ids.insert(br.id.as_str()) {
            report.push(Violation::DuplicateId {
                entity: "branch",
                id: br.id.clone(),
            });
        }
        let from = bus_index.get(br.from_bus.as_str()).map(|&i| &net.buses[i]);
        let to = bus_index.get(br.to_bus.as_str()).map(|&i| &net.buses[i]);
        for (end, found) in [(&br.from_bus, from), (&br.to_bus, to)] {
            if found.is_none() {
                report.push(Violation::DanglingReference {
                    entity: "branch",
                    id: br.id.clone(),
                    missing: end.clone(),
                });
            }
        }
        if br.from_bus == br.to_bus {
            report.push(Violation::InvalidBranch {
                id: br.id.clone(),
                reason: "from_bus equals to_bus".into(),
            });
        }
        if !(br.i_rated > 0.0 && br.i_rated.is_finite()) {
            report.push(Violation::NonPositiveRating {
                id: br.id.clone(),
                rating: br.i_rated,
            });
        }
        if let (Some(f), Some(t)) = (from, to) {
            if !t.phases.is_subset_of(f.phases) {
                report.push(Violation::PhaseMismatch {
                    branch: br.id.clone(),
                });
            }
        }
        match &br.kind {
            BranchKind::Line { impedance } => {
                let asym = (0..3).any(|i| {
                    (0..3).any(|j| (impedance[i][j] - impedance[j][i]).norm() > SYMMETRY_TOL)
                });
                if asym {
                    report.push(Violation::InvalidBranch {
                        id: br.id.clone(),
                        reason: "impedance matrix not symmetric".into(),
                    });
                }
                if impedance.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    report.push(Violation::InvalidBranch {
                        id: br.id.clone(),
                        reason: "non-finite impedance".into(),
                    });
                }
            }
            BranchKind::Transformer {
                impedance,
                tap,
                tap_range,
            } => {
                if tap.iter().any(|t| !(0.9 - 1e-12..=1.1 + 1e-12).contains(t)) {
                    report.push(Violation::InvalidBranch {
                        id: br.id.clone(),
                        reason: "tap ratio outside [0.9, 1.1]".into(),
                    });
                }
                if impedance.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    report.push(Violation::InvalidBranch {
                        id: br.id.clone(),
                        reason: "non-finite impedance".into(),
                    });
                }
                if let Some(range) = tap_range {
                    if !(range.step_size > 0.0) {
                        report.push(Violation::InvalidBranch {
                            id: br.id.clone(),
                            reason: "tap step size must be positive".into(),
                        });
                    }
                }
            }
        }
    }

    for load in &net.loads {
        match bus_index.get(load.bus_id.as_str()) {
            None => report.push(Violation::DanglingReference {
                entity: "load",
                id: load.bus_id.clone(),
                missing: load.bus_id.clone(),
            }),
            Some(&i) => {
                let phases = net.buses[i].phases;
                for p in super::Phase::ALL {
                    let on_phase = load.phase_kw[p.index()] != 0.0 || load.phase_kvar[p.index()] != 0.0;
                    if on_phase && !phases.contains(p) {
                        report.push(Violation::InvalidLoad {
                            bus: load.bus_id.clone(),
                            reason: format!("load on absent phase {p}"),
                        });
                    }
                }
            }
        }
        if load.phase_kw.iter().chain(&load.phase_kvar).any(|v| !v.is_finite()) {
            report.push(Violation::InvalidLoad {
                bus: load.bus_id.clone(),
                reason: "non-finite power".into(),
            });
        }
        if load.phase_kw.iter().any(|kw| *kw < 0.0) {
            let reason = match load.kind {
                LoadKind::Base => "negative base load",
                LoadKind::EvCharging => "negative charging load",
            };
            report.push(Violation::InvalidLoad {
                bus: load.bus_id.clone(),
                reason: reason.into(),
            });
        }
    }

    let mut cap_ids = HashSet::new();
    for cap in &net.capacitors {
        if !cap_ids.insert(cap.id.as_str()) {
            report.push(Violation::DuplicateId {
                entity: "capacitor",
                id: cap.id.clone(),
            });
        }
        if !bus_index.contains_key(cap.bus_id.as_str()) {
            report.push(Violation::DanglingReference {
                entity: "capacitor",
                id: cap.id.clone(),
                missing: cap.bus_id.clone(),
            });
        }
        if !(cap.v_on_pu < cap.v_off_pu) {
            report.push(Violation::InvalidCapacitor {
                id: cap.id.clone(),
                reason: "v_on_pu must be below v_off_pu".into(),
            });
        }
        if !(cap.kvar_per_phase >= 0.0) {
            report.push(Violation::InvalidCapacitor {
                id: cap.id.clone(),
                reason: "negative kvar".into(),
            });
        }
    }

    let branch_by_id: HashMap<&str, &super::Branch> =
        net.branches.iter().map(|b| (b.id.as_str(), b)).collect();
    let mut regulated = HashSet::new();
    for reg in &net.regulators {
        let mut bad = |reason: String| {
            report.push(Violation::InvalidRegulator {
                branch: reg.branch_id.clone(),
                reason,
            })
        };
        if !regulated.insert(reg.branch_id.as_str()) {
            bad("branch has more than one regulator".into());
        }
        if !(reg.band_pu > 0.0) {
            bad("band_pu must be positive".into());
        }
        if !(reg.step_size > 0.0) {
            bad("step_size must be positive".into());
        }
        if !bus_index.contains_key(reg.regulated_bus.as_str()) {
            bad(format!("regulated bus {:?} missing", reg.regulated_bus));
        }
        match branch_by_id.get(reg.branch_id.as_str()) {
            None => bad("branch missing".into()),
            Some(br) => match &br.kind {
                BranchKind::Transformer { tap, .. } => {
                    for t in tap {
                        let pos = ((t - 1.0) / reg.step_size).round();
                        if pos.abs() > f64::from(reg.step_count) {
                            bad(format!("tap {t} beyond {} steps", reg.step_count));
                        }
                    }
                    let same_feeder = match (
                        bus_index.get(br.to_bus.as_str()),
                        bus_index.get(reg.regulated_bus.as_str()),
                    ) {
                        (Some(&a), Some(&b)) => net.buses[a].feeder_id == net.buses[b].feeder_id,
                        _ => true,
                    };
                    if !same_feeder {
                        bad("regulated bus lies on another feeder".into());
                    }
                }
                BranchKind::Line { .. } => bad("regulators must sit on transformers".into()),
            },
        }
    }

    for sub in &net.substations {
        for head in &sub.feeder_heads {
            if !bus_index.contains_key(head.as_str()) {
                report.push(Violation::DanglingReference {
                    entity: "substation",
                    id: sub.id.clone(),
                    missing: head.clone(),
                });
            }
        }
    }

    check_radiality(net, &bus_index, &mut report);
    report
}

fn check_radiality(
    net: &DistributionNetwork,
    bus_index: &HashMap<&str, usize>,
    report: &mut ValidationReport,
) {
    let heads = feeder_heads(net);
    let mut feeders: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, bus) in net.buses.iter().enumerate() {
        feeders.entry(bus.feeder_id.as_str()).or_default().push(i);
    }

    let mut uf = UnionFind::new(net.buses.len());
    let mut parents = vec![0usize; net.buses.len()];
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); net.buses.len()];
    for br in &net.branches {
        let (Some(&f), Some(&t)) = (bus_index.get(br.from_bus.as_str()), bus_index.get(br.to_bus.as_str())) else {
            continue;
        };
        if f == t {
            continue;
        }
        if net.buses[f].feeder_id != net.buses[t].feeder_id {
            report.push(Violation::CrossFeederBranch {
                branch: br.id.clone(),
            });
            continue;
        }
        if !uf.union(f, t) {
            report.push(Violation::Cycle {
                feeder: net.buses[f].feeder_id.clone(),
                branch: br.id.clone(),
            });
        }
        parents[t] += 1;
        adjacency[f].push(t);
        adjacency[t].push(f);
    }

    for (feeder, members) in feeders {
        let head = match heads.get(feeder).map(Vec::as_slice) {
            Some([only]) => only.as_str(),
            Some([]) | None => {
                report.push(Violation::FeederHead {
                    feeder: feeder.to_string(),
                    reason: "no head bus".into(),
                });
                continue;
            }
            Some(many) => {
                report.push(Violation::FeederHead {
                    feeder: feeder.to_string(),
                    reason: format!("multiple head buses {many:?}"),
                });
                continue;
            }
        };
        let Some(&head_idx) = bus_index.get(head) else { continue };
        if parents[head_idx] != 0 {
            report.push(Violation::Orientation {
                feeder: feeder.to_string(),
                bus: head.to_string(),
            });
        }

        let mut seen = vec![false; net.buses.len()];
        let mut stack = vec![head_idx];
        seen[head_idx] = true;
        while let Some(u) = stack.pop() {
            for &v in &adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        for &m in &members {
            if !seen[m] {
                report.push(Violation::Disconnected {
                    feeder: feeder.to_string(),
                    bus: net.buses[m].id.clone(),
                });
            } else if m != head_idx && parents[m] != 1 {
                report.push(Violation::Orientation {
                    feeder: feeder.to_string(),
                    bus: net.buses[m].id.clone(),
                });
            }
        }
    }
}
