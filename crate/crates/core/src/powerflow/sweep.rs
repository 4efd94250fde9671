use std::f64::consts::PI;

use num_complex::Complex64;

use super::{PowerFlowError, PowerFlowSolution, S_BASE_VA};
use crate::grid::{BranchModel, FeederTree};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Per-unit voltage change between iterations at which the sweep stops.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-8,
            max_iterations: 100,
        }
    }
}

/// Complex power bookkeeping of a solved feeder, in VA.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerBalance {
    pub source: Complex64,
    pub loads: Complex64,
    pub losses: Complex64,
    /// Largest per-unit Kirchhoff current residual over all non-head buses.
    pub kcl_residual_pu: f64,
}

impl PowerBalance {
    pub fn relative_error(&self) -> f64 {
        let scale = self.source.norm().max(self.loads.norm()).max(f64::MIN_POSITIVE);
        (self.source - self.loads - self.losses).norm() / scale
    }
}

fn rotation(phase: usize) -> Complex64 {
    Complex64::from_polar(1.0, -2.0 * PI / 3.0 * phase as f64)
}

fn check_structure(feeder: &FeederTree) -> Result<(), PowerFlowError> {
    if feeder.buses.is_empty() {
        return Ok(());
    }
    if feeder.branches.len() + 1 != feeder.buses.len() {
        return Err(PowerFlowError::NonRadial {
            feeder: feeder.feeder_id.clone(),
            reason: format!(
                "{} branches for {} buses",
                feeder.branches.len(),
                feeder.buses.len()
            ),
        });
    }
    for (k, br) in feeder.branches.iter().enumerate() {
        if br.to != k + 1 || br.from >= br.to {
            return Err(PowerFlowError::NonRadial {
                feeder: feeder.feeder_id.clone(),
                reason: format!("branch {:?} out of breadth-first order", br.id),
            });
        }
        if let BranchModel::Transformer { tap, turns, .. } = &br.model {
            let bad = tap
                .iter()
                .any(|t| !(t * turns).is_finite() || t * turns <= 0.0);
            if bad {
                return Err(PowerFlowError::SingularTransformer {
                    branch: br.id.clone(),
                });
            }
        }
    }
    Ok(())
}

fn ratio(model: &BranchModel, p: usize) -> f64 {
    match model {
        BranchModel::Transformer { tap, turns, .. } => tap[p] * turns,
        BranchModel::Line { .. } => 1.0,
    }
}

/// Current drawn by the loads and capacitors of one bus at voltage `v`.
fn bus_injection(feeder: &FeederTree, bus: usize, v: &[Complex64; 3], out: &mut [Complex64; 3]) {
    let b = &feeder.buses[bus];
    *out = [ZERO; 3];
    for p in b.phases.iter().map(|p| p.index()) {
        let s = b.load_va[p];
        if s != ZERO {
            out[p] = (s / v[p]).conj();
        }
    }
    for cap in feeder.capacitors.iter().filter(|c| c.on && c.bus == bus) {
        let y = Complex64::new(0.0, cap.kvar_per_phase * 1e3 / (b.base_voltage * b.base_voltage));
        for p in b.phases.iter().map(|p| p.index()) {
            out[p] += y * v[p];
        }
    }
}

/// Backward sweep: branch currents (to side) and source current for fixed voltages.
fn backward(
    feeder: &FeederTree,
    voltages: &[[Complex64; 3]],
    currents: &mut [[Complex64; 3]],
    acc: &mut [[Complex64; 3]],
) {
    for (bus, slot) in acc.iter_mut().enumerate() {
        bus_injection(feeder, bus, &voltages[bus], slot);
    }
    for k in (0..feeder.branches.len()).rev() {
        let br = &feeder.branches[k];
        let to_phases = feeder.buses[br.to].phases;
        let j = acc[br.to];
        currents[k] = j;
        for p in to_phases.iter().map(|p| p.index()) {
            acc[br.from][p] += ratio(&br.model, p) * j[p];
        }
    }
}

/// Forward sweep; returns the largest per-unit voltage change.
fn forward(
    feeder: &FeederTree,
    voltages: &mut [[Complex64; 3]],
    currents: &[[Complex64; 3]],
) -> f64 {
    let mut mismatch: f64 = 0.0;
    for (k, br) in feeder.branches.iter().enumerate() {
        let to = &feeder.buses[br.to];
        let vf = voltages[br.from];
        let j = currents[k];
        let mut next = [ZERO; 3];
        for p in to.phases.iter().map(|p| p.index()) {
            next[p] = match &br.model {
                BranchModel::Line { impedance } => {
                    let drop: Complex64 = to
                        .phases
                        .iter()
                        .map(|q| impedance[p][q.index()] * j[q.index()])
                        .sum();
                    vf[p] - drop
                }
                BranchModel::Transformer { impedance, .. } => {
                    ratio(&br.model, p) * vf[p] - impedance[p] * j[p]
                }
            };
            let change = (next[p] - voltages[br.to][p]).norm() / to.base_voltage;
            if !change.is_finite() {
                mismatch = f64::INFINITY;
            } else {
                mismatch = mismatch.max(change);
            }
        }
        voltages[br.to] = next;
    }
    mismatch
}

pub fn solve_feeder(
    feeder: &FeederTree,
    source_voltage_pu: f64,
) -> Result<PowerFlowSolution, PowerFlowError> {
    solve_feeder_with(feeder, source_voltage_pu, &SolverOptions::default())
}

pub fn solve_feeder_with(
    feeder: &FeederTree,
    source_voltage_pu: f64,
    opts: &SolverOptions,
) -> Result<PowerFlowSolution, PowerFlowError> {
    check_structure(feeder)?;
    let n = feeder.buses.len();
    let mut voltages = vec![[ZERO; 3]; n];
    let mut currents = vec![[ZERO; 3]; feeder.branches.len()];
    if n == 0 {
        return Ok(PowerFlowSolution {
            voltages,
            currents,
            converged: true,
            iterations: 0,
            max_mismatch: 0.0,
        });
    }

    let head = &feeder.buses[0];
    for p in head.phases.iter().map(|p| p.index()) {
        voltages[0][p] = rotation(p) * source_voltage_pu * head.base_voltage;
    }
    for br in &feeder.branches {
        for p in feeder.buses[br.to].phases.iter().map(|p| p.index()) {
            voltages[br.to][p] = ratio(&br.model, p) * voltages[br.from][p];
        }
    }

    let mut acc = vec![[ZERO; 3]; n];
    let mut converged = false;
    let mut iterations = 0;
    let mut mismatch = f64::INFINITY;
    while iterations < opts.max_iterations {
        iterations += 1;
        backward(feeder, &voltages, &mut currents, &mut acc);
        mismatch = forward(feeder, &mut voltages, &currents);
        if !mismatch.is_finite() {
            break;
        }
        if mismatch <= opts.tolerance {
            converged = true;
            break;
        }
    }
    // Currents consistent with the final voltages.
    backward(feeder, &voltages, &mut currents, &mut acc);

    Ok(PowerFlowSolution {
        voltages,
        currents,
        converged,
        iterations,
        max_mismatch: mismatch,
    })
}

/// Source power, consumed power and series losses of a solution, plus the
/// worst Kirchhoff current residual.
pub fn power_balance(feeder: &FeederTree, sol: &PowerFlowSolution) -> PowerBalance {
    let n = feeder.buses.len();
    let mut draw = vec![[ZERO; 3]; n];
    for (bus, slot) in draw.iter_mut().enumerate() {
        bus_injection(feeder, bus, &sol.voltages[bus], slot);
    }

    let mut outflow = vec![[ZERO; 3]; n];
    let mut losses = ZERO;
    for (k, br) in feeder.branches.iter().enumerate() {
        let j = sol.currents[k];
        let to_phases = feeder.buses[br.to].phases;
        for p in to_phases.iter().map(|p| p.index()) {
            outflow[br.from][p] += ratio(&br.model, p) * j[p];
            losses += match &br.model {
                BranchModel::Line { impedance } => {
                    let zj: Complex64 = to_phases
                        .iter()
                        .map(|q| impedance[p][q.index()] * j[q.index()])
                        .sum();
                    zj * j[p].conj()
                }
                BranchModel::Transformer { impedance, .. } => impedance[p] * j[p].norm_sqr(),
            };
        }
    }

    let mut loads = ZERO;
    for bus in 0..n {
        for p in 0..3 {
            loads += sol.voltages[bus][p] * draw[bus][p].conj();
        }
    }

    let mut source = ZERO;
    let mut kcl: f64 = 0.0;
    if n > 0 {
        for p in 0..3 {
            source += sol.voltages[0][p] * (draw[0][p] + outflow[0][p]).conj();
        }
    }
    for (k, br) in feeder.branches.iter().enumerate() {
        let bus = br.to;
        let i_base = S_BASE_VA / feeder.buses[bus].base_voltage;
        for p in feeder.buses[bus].phases.iter().map(|p| p.index()) {
            let residual = sol.currents[k][p] - draw[bus][p] - outflow[bus][p];
            kcl = kcl.max(residual.norm() / i_base);
        }
    }

    PowerBalance {
        source,
        loads,
        losses,
        kcl_residual_pu: kcl,
    }
}
