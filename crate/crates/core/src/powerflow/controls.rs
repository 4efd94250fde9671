//! Discrete voltage control: regulator tap changes and switched capacitors.
//!
//! Each round solves the feeder, then lets every device make at most one
//! discrete move. Regulators act before capacitors, each group in id order.

use serde::Serialize;

use super::sweep::{solve_feeder_with, SolverOptions};
use super::{PowerFlowError, PowerFlowSolution};
use crate::grid::{BranchModel, FeederTree, Phase};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOptions {
    pub max_rounds: usize,
    pub solver: SolverOptions,
}

impl Default for ControlOptions {
    fn default() -> Self {
        ControlOptions {
            max_rounds: 30,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlKind {
    TapRaise,
    TapLower,
    CapacitorOn,
    CapacitorOff,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlAction {
    pub round: usize,
    pub device: String,
    pub phase: Option<Phase>,
    pub kind: ControlKind,
    /// Voltage that triggered the move.
    pub v_pu: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ControlLog {
    pub actions: Vec<ControlAction>,
    pub rounds: usize,
    /// Devices still wanted to move when the round cap stopped the loop.
    pub cap_hit: bool,
}

fn requested_moves(
    feeder: &FeederTree,
    sol: &PowerFlowSolution,
    round: usize,
) -> Vec<ControlAction> {
    let mut moves = Vec::new();
    for reg in &feeder.regulators {
        let br = &feeder.branches[reg.branch];
        let bus = &feeder.buses[reg.regulated_bus];
        let served = feeder.buses[br.to].phases;
        let low = reg.target_pu - reg.band_pu;
        let high = reg.target_pu + reg.band_pu;
        for p in bus.phases.iter().filter(|p| served.contains(*p)) {
            let v = sol.voltage_pu(feeder, reg.regulated_bus, p.index());
            let pos = feeder.tap_position(reg, p.index());
            let kind = if v < low && pos < reg.step_count as i32 {
                ControlKind::TapRaise
            } else if v > high && pos > -(reg.step_count as i32) {
                ControlKind::TapLower
            } else {
                continue;
            };
            moves.push(ControlAction {
                round,
                device: br.id.clone(),
                phase: Some(p),
                kind,
                v_pu: v,
            });
        }
    }
    for cap in &feeder.capacitors {
        let bus = &feeder.buses[cap.bus];
        let mags = bus.phases.iter().map(|p| sol.voltage_pu(feeder, cap.bus, p.index()));
        let (vmin, vmax) = mags.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        let (kind, v) = if !cap.on && vmin < cap.v_on_pu {
            (ControlKind::CapacitorOn, vmin)
        } else if cap.on && vmax > cap.v_off_pu {
            (ControlKind::CapacitorOff, vmax)
        } else {
            continue;
        };
        moves.push(ControlAction {
            round,
            device: cap.id.clone(),
            phase: None,
            kind,
            v_pu: v,
        });
    }
    moves
}

fn apply(feeder: &mut FeederTree, action: &ControlAction) {
    match action.kind {
        ControlKind::TapRaise | ControlKind::TapLower => {
            let Some(reg) = feeder
                .regulators
                .iter()
                .find(|r| feeder.branches[r.branch].id == action.device)
                .cloned()
            else {
                return;
            };
            let p = action.phase.map(Phase::index).unwrap_or(0);
            let delta = if action.kind == ControlKind::TapRaise { 1 } else { -1 };
            let pos = feeder.tap_position(&reg, p) + delta;
            if let BranchModel::Transformer { tap, .. } = &mut feeder.branches[reg.branch].model {
                tap[p] = (1.0 + f64::from(pos) * reg.step_size).clamp(0.9, 1.1);
            }
        }
        ControlKind::CapacitorOn | ControlKind::CapacitorOff => {
            if let Some(cap) = feeder.capacitors.iter_mut().find(|c| c.id == action.device) {
                cap.on = action.kind == ControlKind::CapacitorOn;
            }
        }
    }
}

/// Alternates solves with one-step device adjustments until no device asks
/// to move or the round cap is reached. Always terminates.
///
/// An unconverged solve ends the loop early; the returned solution then has
/// `converged == false`.
pub fn run_discrete_controls(
    feeder: &FeederTree,
    source_voltage_pu: f64,
    opts: &ControlOptions,
) -> Result<(FeederTree, PowerFlowSolution, ControlLog), PowerFlowError> {
    let mut current = feeder.clone();
    let mut log = ControlLog::default();
    for round in 1..=opts.max_rounds {
        let sol = solve_feeder_with(&current, source_voltage_pu, &opts.solver)?;
        log.rounds = round;
        if !sol.converged {
            return Ok((current, sol, log));
        }
        let moves = requested_moves(&current, &sol, round);
        if moves.is_empty() {
            return Ok((current, sol, log));
        }
        for m in &moves {
            apply(&mut current, m);
        }
        log.actions.extend(moves);
    }
    let sol = solve_feeder_with(&current, source_voltage_pu, &opts.solver)?;
    log.cap_hit = sol.converged && !requested_moves(&current, &sol, opts.max_rounds + 1).is_empty();
    Ok((current, sol, log))
}
