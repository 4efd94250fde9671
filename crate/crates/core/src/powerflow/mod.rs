//! Unbalanced three-phase power flow for radial feeders.
//!
//! The solver is a forward-backward sweep in physical units (volts, amps,
//! ohms). Each iteration aggregates constant-power load currents toward the
//! head (backward), then recomputes bus voltages from the head outward
//! (forward). The head bus is an ideal source.

mod controls;
mod sweep;
mod violations;

use std::collections::BTreeMap;

use num_complex::Complex64;
use thiserror::Error;

use crate::grid::FeederTree;

pub use controls::{run_discrete_controls, ControlAction, ControlKind, ControlLog, ControlOptions};
pub use sweep::{power_balance, solve_feeder, solve_feeder_with, PowerBalance, SolverOptions};
pub use violations::{
    classify_severity, detect_violations, Overload, SeverityBucket, Undervoltage, ViolationReport,
    DEFAULT_UNDERVOLTAGE_PU,
};

/// Per-phase power base used to express currents and mismatches in per-unit.
pub const S_BASE_VA: f64 = 1.0e6;

#[derive(Debug, Error)]
pub enum PowerFlowError {
    #[error("feeder {feeder:?} is not in radial sweep order: {reason}")]
    NonRadial { feeder: String, reason: String },
    #[error("transformer {branch:?} has a singular or non-finite ratio")]
    SingularTransformer { branch: String },
    #[error("feeder {feeder:?}: solution did not converge")]
    Unconverged { feeder: String },
}

/// Bus voltages and branch currents of one feeder solve.
///
/// `voltages[i]` belongs to `feeder.buses[i]` and `currents[k]` to
/// `feeder.branches[k]` (current entering the `to` bus, amps). Phases a bus
/// or branch does not carry hold zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub voltages: Vec<[Complex64; 3]>,
    pub currents: Vec<[Complex64; 3]>,
    pub converged: bool,
    pub iterations: usize,
    /// Largest per-unit voltage change in the final iteration.
    pub max_mismatch: f64,
}

impl PowerFlowSolution {
    pub fn bus_voltages(&self, feeder: &FeederTree) -> BTreeMap<String, [Complex64; 3]> {
        feeder
            .buses
            .iter()
            .zip(&self.voltages)
            .map(|(b, v)| (b.id.clone(), *v))
            .collect()
    }

    pub fn branch_currents(&self, feeder: &FeederTree) -> BTreeMap<String, [Complex64; 3]> {
        feeder
            .branches
            .iter()
            .zip(&self.currents)
            .map(|(b, i)| (b.id.clone(), *i))
            .collect()
    }

    /// Voltage magnitude in per-unit of the bus base.
    pub fn voltage_pu(&self, feeder: &FeederTree, bus: usize, phase: usize) -> f64 {
        self.voltages[bus][phase].norm() / feeder.buses[bus].base_voltage
    }
}
