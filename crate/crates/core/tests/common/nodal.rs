//! Dense nodal-equation power-flow oracle and a random radial feeder
//! generator.
//!
//! The oracle stamps every line, transformer and capacitor into one complex
//! admittance matrix over all bus phases, fixes the head phases, and solves
//! `Y_uu V_u = -I_load(V_u) - Y_uh V_h` by current-injection iteration with
//! a single LU factorization. It shares no code with the sweep solver.

use std::f64::consts::PI;

use evtcosim_core::grid::{BranchModel, FeederTree, PhaseSet, TreeBranch, TreeBus, TreeCapacitor};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Bus voltages in volts, `[bus][phase]`, zero on absent phases. `None`
/// when the iteration fails to settle.
pub fn nodal_voltages(tree: &FeederTree, source_pu: f64) -> Option<Vec<[Complex64; 3]>> {
    let n = tree.buses.len();
    // Node numbering over (bus, phase).
    let mut node = vec![[usize::MAX; 3]; n];
    let mut count = 0;
    for (b, bus) in tree.buses.iter().enumerate() {
        for p in bus.phases.iter() {
            node[b][p.index()] = count;
            count += 1;
        }
    }
    let mut y = DMatrix::<Complex64>::zeros(count, count);
    let mut stamp = |i: usize, j: usize, v: Complex64| y[(i, j)] += v;

    for br in &tree.branches {
        let phases: Vec<usize> = tree.buses[br.to].phases.iter().map(|p| p.index()).collect();
        match &br.model {
            BranchModel::Line { impedance } => {
                let k = phases.len();
                let z = DMatrix::from_fn(k, k, |r, s| impedance[phases[r]][phases[s]]);
                let yb = z.try_inverse().expect("invertible line impedance");
                for r in 0..k {
                    for s in 0..k {
                        let v = yb[(r, s)];
                        let (fr, fs) = (node[br.from][phases[r]], node[br.from][phases[s]]);
                        let (tr, ts) = (node[br.to][phases[r]], node[br.to][phases[s]]);
                        stamp(fr, fs, v);
                        stamp(tr, ts, v);
                        stamp(fr, ts, -v);
                        stamp(tr, fs, -v);
                    }
                }
            }
            BranchModel::Transformer { impedance, tap, turns, .. } => {
                for &p in &phases {
                    let a = tap[p] * turns;
                    let yz = impedance[p].inv();
                    let (f, t) = (node[br.from][p], node[br.to][p]);
                    stamp(f, f, yz * a * a);
                    stamp(t, t, yz);
                    stamp(f, t, -yz * a);
                    stamp(t, f, -yz * a);
                }
            }
        }
    }
    for cap in tree.capacitors.iter().filter(|c| c.on) {
        let bus = &tree.buses[cap.bus];
        let b = cap.kvar_per_phase * 1e3 / (bus.base_voltage * bus.base_voltage);
        for p in bus.phases.iter() {
            let i = node[cap.bus][p.index()];
            stamp(i, i, c(0.0, b));
        }
    }

    let head = &tree.buses[0];
    let fixed: Vec<usize> = head.phases.iter().map(|p| node[0][p.index()]).collect();
    let vh = DVector::from_iterator(
        fixed.len(),
        head.phases
            .iter()
            .map(|p| Complex64::from_polar(source_pu * head.base_voltage, -2.0 * PI / 3.0 * p.index() as f64)),
    );
    let free: Vec<usize> = (fixed.len()..count).collect();
    let m = free.len();
    let yuu = DMatrix::from_fn(m, m, |r, s| y[(free[r], free[s])]);
    let yuh = DMatrix::from_fn(m, fixed.len(), |r, s| y[(free[r], fixed[s])]);
    let lu = yuu.lu();
    let rhs_fixed = -(&yuh * &vh);

    // (bus, phase, load VA) for every free node.
    let mut loads = Vec::with_capacity(m);
    for (b, bus) in tree.buses.iter().enumerate().skip(1) {
        for p in bus.phases.iter() {
            loads.push((b, bus.load_va[p.index()]));
        }
    }

    let mut v = lu.solve(&rhs_fixed)?;
    let mut settled = false;
    for _ in 0..1000 {
        let inj = DVector::from_iterator(
            m,
            loads.iter().zip(v.iter()).map(|((_, s), vi)| if *s == ZERO { ZERO } else { -(s / vi).conj() }),
        );
        let next = lu.solve(&(&rhs_fixed + inj))?;
        let change = loads
            .iter()
            .zip(next.iter().zip(v.iter()))
            .map(|((b, _), (a, o))| (a - o).norm() / tree.buses[*b].base_voltage)
            .fold(0.0, f64::max);
        v = next;
        if change < 1e-12 {
            settled = true;
            break;
        }
    }
    if !settled {
        return None;
    }

    let mut out = vec![[ZERO; 3]; n];
    for p in head.phases.iter() {
        out[0][p.index()] = vh[fixed.iter().position(|&i| i == node[0][p.index()]).unwrap()];
    }
    for (b, bus) in tree.buses.iter().enumerate().skip(1) {
        for p in bus.phases.iter() {
            out[b][p.index()] = v[node[b][p.index()] - fixed.len()];
        }
    }
    Some(out)
}

fn subset(rng: &mut ChaCha8Rng, of: PhaseSet) -> PhaseSet {
    let phases: Vec<_> = of.iter().collect();
    if phases.len() == 1 || rng.gen_bool(0.6) {
        return of;
    }
    loop {
        let s: String = phases
            .iter()
            .filter(|_| rng.gen_bool(0.5))
            .map(|p| p.to_string())
            .collect();
        if !s.is_empty() {
            return s.parse().unwrap();
        }
    }
}

const MV: f64 = 7200.0;
const LV: f64 = 240.0;

/// Random radial feeder of 2 to `max_buses` buses: a 7.2 kV backbone with
/// laterals of fewer phases, tapped service transformers to 240 V, mutual
/// line coupling and at most one capacitor.
pub fn random_feeder(seed: u64, max_buses: usize) -> FeederTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_buses);
    let mut buses = vec![TreeBus {
        id: "b00".into(),
        x: 0.0,
        y: 0.0,
        phases: PhaseSet::ABC,
        base_voltage: MV,
        vmin_pu: 0.95,
        vmax_pu: 1.05,
        load_va: [ZERO; 3],
    }];
    let mut branches = Vec::new();
    for i in 1..n {
        let parent = rng.gen_range(0..i);
        let pb = buses[parent].clone();
        let transformer = pb.base_voltage == MV && rng.gen_bool(0.25);
        let phases = subset(&mut rng, pb.phases);
        let base = if transformer { LV } else { pb.base_voltage };
        let model = if transformer {
            let zbase = LV * LV / 50e3;
            let z = c(rng.gen_range(0.005..0.02), rng.gen_range(0.015..0.04)) * zbase;
            let mut tap = [1.0; 3];
            for t in &mut tap {
                *t = 1.0 + 0.00625 * f64::from(rng.gen_range(-4i32..=4));
            }
            BranchModel::Transformer {
                impedance: [z; 3],
                tap,
                turns: LV / MV,
                tap_range: None,
            }
        } else {
            let scale = (base / MV).powi(2) * rng.gen_range(0.2..1.5);
            let zs = c(0.3, 0.6) * scale;
            let zm = c(0.1, 0.25) * scale;
            let mut m = [[zm; 3]; 3];
            for (p, row) in m.iter_mut().enumerate() {
                row[p] = zs;
            }
            BranchModel::Line { impedance: m }
        };
        let mut load_va = [ZERO; 3];
        let kva = if base == MV { 250e3 } else { 12e3 };
        for p in phases.iter() {
            if rng.gen_bool(0.8) {
                load_va[p.index()] = c(rng.gen_range(0.0..kva), rng.gen_range(-0.2 * kva..0.5 * kva));
            }
        }
        buses.push(TreeBus {
            id: format!("b{i:02}"),
            x: 0.0,
            y: 0.0,
            phases,
            base_voltage: base,
            vmin_pu: 0.95,
            vmax_pu: 1.05,
            load_va,
        });
        branches.push(TreeBranch {
            id: format!("br{i:02}"),
            from: parent,
            to: i,
            model,
            i_rated: 400.0,
        });
    }
    let mut capacitors = Vec::new();
    let mv: Vec<usize> = (1..n).filter(|&b| buses[b].base_voltage == MV).collect();
    if !mv.is_empty() && rng.gen_bool(0.5) {
        capacitors.push(TreeCapacitor {
            id: "cap".into(),
            bus: mv[rng.gen_range(0..mv.len())],
            kvar_per_phase: rng.gen_range(50.0..300.0),
            on: rng.gen_bool(0.7),
            v_on_pu: 0.95,
            v_off_pu: 1.05,
        });
    }
    FeederTree {
        feeder_id: format!("rand{seed}"),
        buses,
        branches,
        capacitors,
        regulators: Vec::new(),
    }
}
