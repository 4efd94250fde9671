//! Randomized radial feeders with calibrated impedances and ratings.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::{Rect, SynthError};
use crate::grid::{
    feeder_partition, BranchModel, Branch, BranchKind, Bus, Capacitor, DistributionNetwork, FeederTree, Load,
    LoadKind, Phase, PhaseSet, Regulator, TapRange,
};
use crate::powerflow::{solve_feeder, PowerFlowSolution};

pub const TEMPLATES_JSON: &str = include_str!("../../data/synth_templates.json");

#[derive(Debug, Clone, Deserialize)]
pub struct Templates {
    pub mv_base_voltage: f64,
    pub lv_base_voltage: f64,
    pub mv_line: LineTemplate,
    pub service_transformer: ServiceTemplate,
    pub regulator: RegulatorTemplate,
    pub capacitor: CapacitorTemplate,
    pub household: HouseholdTemplate,
    pub utilization: [f64; 2],
    pub target_min_voltage_pu: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct LineTemplate {
    pub r_self_ohm_per_km: f64,
    pub x_self_ohm_per_km: f64,
    pub r_mutual_ohm_per_km: f64,
    pub x_mutual_ohm_per_km: f64,
    pub min_length_m: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ServiceTemplate {
    pub r_pu: f64,
    pub x_pu: f64,
    pub kva_per_household: f64,
    pub min_kva: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RegulatorTemplate {
    pub r_ohm: f64,
    pub x_ohm: f64,
    pub step_count: u32,
    pub step_size: f64,
    pub target_pu: f64,
    pub band_pu: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CapacitorTemplate {
    pub kvar_per_phase: f64,
    pub v_on_pu: f64,
    pub v_off_pu: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct HouseholdTemplate {
    pub kw: f64,
    pub power_factor: f64,
}

impl Templates {
    pub fn builtin() -> Self {
        serde_json::from_str(TEMPLATES_JSON).expect("bundled templates parse")
    }
}

/// Bus positions and tree shape of one feeder, before any electrical data.
#[derive(Debug, Clone)]
pub(super) struct Skeleton {
    pub feeder_id: String,
    pub head: (f64, f64),
    pub reg: (f64, f64),
    /// Trunk bus positions; `trunk_parent[i]` is `None` for the regulator bus.
    pub trunk: Vec<(f64, f64)>,
    pub trunk_parent: Vec<Option<usize>>,
    /// LV bus position, the trunk bus it hangs off and its phase.
    pub lv: Vec<((f64, f64), usize, Phase)>,
}

impl Skeleton {
    pub fn head_id(&self) -> String {
        format!("{}_head", self.feeder_id)
    }
    pub fn reg_id(&self) -> String {
        format!("{}_reg", self.feeder_id)
    }
    pub fn trunk_id(&self, i: usize) -> String {
        format!("{}_t{:03}", self.feeder_id, i)
    }
    pub fn lv_id(&self, i: usize) -> String {
        format!("{}_l{:03}", self.feeder_id, i)
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Lays out `buses` buses: head, regulator output, then trunk and LV buses
/// in roughly equal numbers. Trunk buses are scattered over `cell` and each
/// joins the nearest bus already placed, closest to the regulator first.
pub(super) fn skeleton(
    feeder_id: String,
    head: (f64, f64),
    cell: Rect,
    buses: usize,
    rng: &mut ChaCha8Rng,
) -> Skeleton {
    let rest = buses - 2;
    let m = rest.div_ceil(2);
    let l = rest - m;
    // The regulator sits at the cell edge nearest the substation.
    let reg = (
        head.0.clamp(cell.x0, cell.x1),
        head.1.clamp(cell.y0, cell.y1),
    );
    let mut pts: Vec<(f64, f64)> = (0..m)
        .map(|_| (rng.gen_range(cell.x0..cell.x1), rng.gen_range(cell.y0..cell.y1)))
        .collect();
    pts.sort_by(|a, b| dist(*a, reg).total_cmp(&dist(*b, reg)));

    let mut trunk_parent = Vec::with_capacity(m);
    for i in 0..m {
        let parent = (0..i)
            .min_by(|&a, &b| dist(pts[a], pts[i]).total_cmp(&dist(pts[b], pts[i])).then(a.cmp(&b)))
            .filter(|&j| dist(pts[j], pts[i]) < dist(reg, pts[i]));
        trunk_parent.push(parent);
    }

    let mut hosts: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        hosts.swap(i, rng.gen_range(0..=i));
    }
    let lv = (0..l)
        .map(|i| {
            let host = hosts[i % m];
            let p = pts[host];
            let off = (rng.gen_range(-40.0..40.0), rng.gen_range(-40.0..40.0));
            let pos = (
                (p.0 + off.0).clamp(cell.x0, cell.x1),
                (p.1 + off.1).clamp(cell.y0, cell.y1),
            );
            (pos, host, Phase::from_index(i % 3))
        })
        .collect();

    Skeleton {
        feeder_id,
        head,
        reg,
        trunk: pts,
        trunk_parent,
        lv,
    }
}

fn line_matrix(t: &LineTemplate, length_m: f64) -> [[Complex64; 3]; 3] {
    let km = length_m.max(t.min_length_m) / 1000.0;
    let s = Complex64::new(t.r_self_ohm_per_km, t.x_self_ohm_per_km) * km;
    let m = Complex64::new(t.r_mutual_ohm_per_km, t.x_mutual_ohm_per_km) * km;
    let mut z = [[m; 3]; 3];
    for (p, row) in z.iter_mut().enumerate() {
        row[p] = s;
    }
    z
}

/// One feeder as a standalone network, before calibration.
pub(super) fn build(sk: &Skeleton, households: &[u32], t: &Templates) -> DistributionNetwork {
    let fid = &sk.feeder_id;
    let mv = t.mv_base_voltage;
    let bus = |id: String, (x, y): (f64, f64), phases: PhaseSet, base: f64| Bus {
        id,
        feeder_id: fid.clone(),
        x,
        y,
        phases,
        base_voltage: base,
        vmin_pu: 0.95,
        vmax_pu: 1.05,
    };
    let mut net = DistributionNetwork::empty();
    net.buses.push(bus(sk.head_id(), sk.head, PhaseSet::ABC, mv));
    net.buses.push(bus(sk.reg_id(), sk.reg, PhaseSet::ABC, mv));
    for (i, p) in sk.trunk.iter().enumerate() {
        net.buses.push(bus(sk.trunk_id(i), *p, PhaseSet::ABC, mv));
    }
    for (i, (p, _, phase)) in sk.lv.iter().enumerate() {
        net.buses.push(bus(sk.lv_id(i), *p, PhaseSet::single(*phase), t.lv_base_voltage));
    }

    let rt = &t.regulator;
    net.branches.push(Branch {
        id: format!("{fid}_vr"),
        from_bus: sk.head_id(),
        to_bus: sk.reg_id(),
        kind: BranchKind::Transformer {
            impedance: [Complex64::new(rt.r_ohm, rt.x_ohm); 3],
            tap: [1.0; 3],
            tap_range: Some(TapRange {
                step_count: rt.step_count,
                step_size: rt.step_size,
            }),
        },
        i_rated: 1.0,
    });
    for (i, p) in sk.trunk.iter().enumerate() {
        let (from, from_pos) = match sk.trunk_parent[i] {
            Some(j) => (sk.trunk_id(j), sk.trunk[j]),
            None => (sk.reg_id(), sk.reg),
        };
        net.branches.push(Branch {
            id: format!("{fid}_ln{i:03}"),
            from_bus: from,
            to_bus: sk.trunk_id(i),
            kind: BranchKind::Line {
                impedance: line_matrix(&t.mv_line, dist(from_pos, *p)),
            },
            i_rated: 1.0,
        });
    }

    let st = &t.service_transformer;
    let pf = t.household.power_factor;
    let q_per_p = (1.0 - pf * pf).sqrt() / pf;
    for (i, (_, host, phase)) in sk.lv.iter().enumerate() {
        // Every LV bus carries at least one household so it is a load bus.
        let h = f64::from(households[i].max(1));
        let kva = (h * st.kva_per_household).max(st.min_kva);
        let z_base = t.lv_base_voltage * t.lv_base_voltage / (kva * 1000.0);
        net.branches.push(Branch {
            id: format!("{fid}_xf{i:03}"),
            from_bus: sk.trunk_id(*host),
            to_bus: sk.lv_id(i),
            kind: BranchKind::Transformer {
                impedance: [Complex64::new(st.r_pu, st.x_pu) * z_base; 3],
                tap: [1.0; 3],
                tap_range: None,
            },
            i_rated: 1.0,
        });
        let mut kw = [0.0; 3];
        let mut kvar = [0.0; 3];
        kw[phase.index()] = h * t.household.kw;
        kvar[phase.index()] = h * t.household.kw * q_per_p;
        net.loads.push(Load {
            bus_id: sk.lv_id(i),
            phase_kw: kw,
            phase_kvar: kvar,
            kind: LoadKind::Base,
        });
    }
    net.source_bus = format!("{fid}_source");
    net
}

fn scaled_tree(tree: &FeederTree, skip: usize, k: f64) -> FeederTree {
    let mut out = tree.clone();
    for (i, br) in out.branches.iter_mut().enumerate() {
        if i == skip {
            continue;
        }
        match &mut br.model {
            BranchModel::Line { impedance } => {
                for z in impedance.iter_mut().flatten() {
                    *z *= k;
                }
            }
            BranchModel::Transformer { impedance, .. } => {
                for z in impedance.iter_mut() {
                    *z *= k;
                }
            }
        }
    }
    out
}

fn min_load_voltage(tree: &FeederTree, sol: &PowerFlowSolution) -> f64 {
    let mut v = f64::INFINITY;
    for (i, b) in tree.buses.iter().enumerate() {
        if b.load_va.iter().all(|s| s.norm() == 0.0) {
            continue;
        }
        for p in b.phases.iter() {
            v = v.min(sol.voltage_pu(tree, i, p.index()));
        }
    }
    v
}

/// Scales series impedances so the lowest loaded-bus voltage hits the
/// template target, then rates every branch from its base-load current at a
/// random utilization, and adds the regulator and capacitor.
pub(super) fn calibrate(
    mut net: DistributionNetwork,
    t: &Templates,
    rng: &mut ChaCha8Rng,
) -> Result<DistributionNetwork, SynthError> {
    let mut trees = feeder_partition(&net)?;
    let tree = trees.remove(0);
    let fid = tree.feeder_id.clone();
    let reg_branch = tree
        .branch_index(&format!("{fid}_vr"))
        .expect("regulator branch exists");

    let eval = |k: f64| -> f64 {
        match solve_feeder(&scaled_tree(&tree, reg_branch, k), 1.0) {
            Ok(sol) if sol.converged => min_load_voltage(&tree, &sol),
            _ => 0.0,
        }
    };
    let target = t.target_min_voltage_pu;
    let has_load = tree.total_load_va().norm() > 0.0;
    let k = if !has_load || eval(1.0e3) >= target {
        1.0
    } else {
        let (mut lo, mut hi) = (1.0e-3_f64.ln(), 1.0e3_f64.ln());
        if eval(lo.exp()) < target {
            return Err(SynthError::Infeasible(format!(
                "feeder {fid}: base load too heavy for any impedance scale"
            )));
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if eval(mid.exp()) >= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo.exp()
    };

    let tree = scaled_tree(&tree, reg_branch, k);
    let sol = solve_feeder(&tree, 1.0)?;
    if !sol.converged {
        return Err(SynthError::Infeasible(format!("feeder {fid}: calibrated base case diverges")));
    }

    for br in net.branches.iter_mut() {
        let ti = tree.branch_index(&br.id).expect("same branches");
        if br.id != tree.branches[reg_branch].id {
            match (&mut br.kind, &tree.branches[ti].model) {
                (BranchKind::Line { impedance }, BranchModel::Line { impedance: z }) => *impedance = *z,
                (BranchKind::Transformer { impedance, .. }, BranchModel::Transformer { impedance: z, .. }) => {
                    *impedance = *z
                }
                _ => unreachable!("partition keeps branch kinds"),
            }
        }
        let peak = sol.currents[ti].iter().map(|c| c.norm()).fold(0.0, f64::max);
        let u = rng.gen_range(t.utilization[0]..t.utilization[1]);
        // Unloaded stubs still need a positive rating.
        br.i_rated = (peak / u).max(10.0);
    }

    // Regulate at the weakest trunk bus and put the capacitor there.
    let trunk_prefix = format!("{fid}_t");
    let weakest = tree
        .buses
        .iter()
        .enumerate()
        .filter(|(_, b)| b.id.starts_with(&trunk_prefix))
        .map(|(i, b)| {
            let v = b.phases.iter().map(|p| sol.voltage_pu(&tree, i, p.index())).fold(f64::INFINITY, f64::min);
            (v, b.id.clone())
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)))
        .map(|(_, id)| id)
        .unwrap_or_else(|| format!("{fid}_reg"));
    net.regulators.push(Regulator {
        branch_id: format!("{fid}_vr"),
        regulated_bus: weakest.clone(),
        target_pu: t.regulator.target_pu,
        band_pu: t.regulator.band_pu,
        step_count: t.regulator.step_count,
        step_size: t.regulator.step_size,
    });
    net.capacitors.push(Capacitor {
        id: format!("{fid}_cap"),
        bus_id: weakest,
        kvar_per_phase: t.capacitor.kvar_per_phase,
        switched_on: false,
        v_on_pu: t.capacitor.v_on_pu,
        v_off_pu: t.capacitor.v_off_pu,
    });
    Ok(net)
}
