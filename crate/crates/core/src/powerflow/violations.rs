use std::fmt;

use serde::{Deserialize, Serialize};

use super::{PowerFlowError, PowerFlowSolution};
use crate::grid::{FeederTree, Phase};

pub const DEFAULT_UNDERVOLTAGE_PU: f64 = 0.95;

/// Overload severity class. Each bucket is half-open on the left:
/// (0, 10%], (10%, 50%], (50%, 100%], (100%, inf).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SeverityBucket {
    #[serde(rename = "<10%")]
    UpTo10,
    #[serde(rename = "10-50%")]
    From10To50,
    #[serde(rename = "50-100%")]
    From50To100,
    #[serde(rename = ">100%")]
    Over100,
}

impl SeverityBucket {
    pub const ALL: [SeverityBucket; 4] = [
        SeverityBucket::UpTo10,
        SeverityBucket::From10To50,
        SeverityBucket::From50To100,
        SeverityBucket::Over100,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SeverityBucket::UpTo10 => "<10%",
            SeverityBucket::From10To50 => "10-50%",
            SeverityBucket::From50To100 => "50-100%",
            SeverityBucket::Over100 => ">100%",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.label() == s)
    }
}

impl fmt::Display for SeverityBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// `None` for severities that are not overloads (≤ 0).
pub fn classify_severity(severity: f64) -> Option<SeverityBucket> {
    if !(severity > 0.0) {
        None
    } else if severity <= 0.10 {
        Some(SeverityBucket::UpTo10)
    } else if severity <= 0.50 {
        Some(SeverityBucket::From10To50)
    } else if severity <= 1.00 {
        Some(SeverityBucket::From50To100)
    } else {
        Some(SeverityBucket::Over100)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overload {
    pub branch_id: String,
    pub phase: Phase,
    pub current_a: f64,
    /// `|I| / i_rated - 1` on the most loaded phase.
    pub severity: f64,
    pub bucket: SeverityBucket,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Undervoltage {
    pub bus_id: String,
    pub phase: Phase,
    pub v_pu: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub interval_index: usize,
    pub overloads: Vec<Overload>,
    pub undervoltages: Vec<Undervoltage>,
}

impl ViolationReport {
    pub fn merge(&mut self, other: ViolationReport) {
        self.overloads.extend(other.overloads);
        self.undervoltages.extend(other.undervoltages);
    }

    pub fn bucket_counts(&self) -> [usize; 4] {
        let mut counts = [0; 4];
        for o in &self.overloads {
            counts[o.bucket.index()] += 1;
        }
        counts
    }
}

/// Overloads (current strictly above rating) and undervoltages (any phase
/// strictly below `v_threshold_pu`) of a converged solution.
pub fn detect_violations(
    solution: &PowerFlowSolution,
    feeder: &FeederTree,
    v_threshold_pu: f64,
) -> Result<ViolationReport, PowerFlowError> {
    if !solution.converged {
        return Err(PowerFlowError::Unconverged {
            feeder: feeder.feeder_id.clone(),
        });
    }
    let mut report = ViolationReport::default();
    for (k, br) in feeder.branches.iter().enumerate() {
        let phases = feeder.buses[br.to].phases;
        let worst = phases
            .iter()
            .map(|p| (p, solution.currents[k][p.index()].norm()))
            .fold(None, |acc: Option<(Phase, f64)>, (p, i)| match acc {
                Some((_, best)) if best >= i => acc,
                _ => Some((p, i)),
            });
        let Some((phase, current)) = worst else { continue };
        if current > br.i_rated {
            let severity = current / br.i_rated - 1.0;
            if let Some(bucket) = classify_severity(severity) {
                report.overloads.push(Overload {
                    branch_id: br.id.clone(),
                    phase,
                    current_a: current,
                    severity,
                    bucket,
                });
            }
        }
    }
    for (i, bus) in feeder.buses.iter().enumerate() {
        for p in bus.phases.iter() {
            let v = solution.voltage_pu(feeder, i, p.index());
            if v < v_threshold_pu {
                report.undervoltages.push(Undervoltage {
                    bus_id: bus.id.clone(),
                    phase: p,
                    v_pu: v,
                });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use num_complex::Complex64;

    use super::*;
    use crate::grid::{BranchModel, PhaseSet, TreeBranch, TreeBus};

    const ZERO: Complex64 = Complex64::new(0.0, 0.0);

    fn feeder(rated: f64) -> FeederTree {
        let bus = |id: &str| TreeBus {
            id: id.into(),
            x: 0.0,
            y: 0.0,
            phases: PhaseSet::ABC,
            base_voltage: 1000.0,
            vmin_pu: 0.95,
            vmax_pu: 1.05,
            load_va: [ZERO; 3],
        };
        FeederTree {
            feeder_id: "f".into(),
            buses: vec![bus("a"), bus("b")],
            branches: vec![TreeBranch {
                id: "l".into(),
                from: 0,
                to: 1,
                model: BranchModel::Line {
                    impedance: [[ZERO; 3]; 3],
                },
                i_rated: rated,
            }],
            capacitors: vec![],
            regulators: vec![],
        }
    }

    fn solution(current: f64, v_end: f64) -> PowerFlowSolution {
        PowerFlowSolution {
            voltages: vec![[Complex64::new(1000.0, 0.0); 3], [Complex64::new(v_end, 0.0); 3]],
            currents: vec![[Complex64::new(current, 0.0), Complex64::new(10.0, 0.0), ZERO]],
            converged: true,
            iterations: 1,
            max_mismatch: 0.0,
        }
    }

    #[test]
    fn quarter_overload_lands_in_ten_to_fifty() {
        let r = detect_violations(&solution(125.0, 1000.0), &feeder(100.0), 0.95).unwrap();
        assert_eq!(r.overloads.len(), 1);
        assert!((r.overloads[0].severity - 0.25).abs() < 1e-15);
        assert_eq!(r.overloads[0].bucket, SeverityBucket::From10To50);
        assert_eq!(r.overloads[0].phase, Phase::A);
    }

    #[test]
    fn rated_current_is_not_an_overload() {
        let r = detect_violations(&solution(100.0, 1000.0), &feeder(100.0), 0.95).unwrap();
        assert!(r.overloads.is_empty());
    }

    #[test]
    fn low_voltage_is_reported_per_phase() {
        let r = detect_violations(&solution(1.0, 940.0), &feeder(100.0), 0.95).unwrap();
        assert_eq!(r.undervoltages.len(), 3);
        assert!((r.undervoltages[0].v_pu - 0.94).abs() < 1e-12);
    }

    #[test]
    fn unconverged_solution_is_rejected() {
        let mut s = solution(1.0, 1000.0);
        s.converged = false;
        assert!(detect_violations(&s, &feeder(100.0), 0.95).is_err());
    }

    #[test]
    fn bucket_edges_are_closed_on_the_right() {
        assert_eq!(classify_severity(0.0), None);
        assert_eq!(classify_severity(-0.1), None);
        assert_eq!(classify_severity(0.10), Some(SeverityBucket::UpTo10));
        assert_eq!(classify_severity(0.50), Some(SeverityBucket::From10To50));
        assert_eq!(classify_severity(1.00), Some(SeverityBucket::From50To100));
        assert_eq!(classify_severity(1.0000001), Some(SeverityBucket::Over100));
    }
}
