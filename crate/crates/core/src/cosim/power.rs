use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{read_charging_series, read_grid, Stage, POWER_META, POWER_SUMMARY, SEVERITY_HISTOGRAM, VIOLATIONS};
use crate::error::Result;
use crate::grid::{apply_charging_loads, feeder_partition, DistributionNetwork, FeederTree};
use crate::io::{write_csv_with_header, write_json};
use crate::powerflow::{
    detect_violations, run_discrete_controls, solve_feeder, ControlOptions, PowerFlowSolution, ViolationReport,
};
use crate::scenario::{ChargingSeries, ScenarioConfig};

/// A feeder solve that did not converge, or whose controls hit the round cap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveIssue {
    pub interval: usize,
    pub feeder: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalOutcome {
    pub report: ViolationReport,
    pub ev_kw: f64,
    pub unconverged: Vec<String>,
    pub cap_hits: Vec<String>,
    pub control_actions: usize,
}

/// One row of the violation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationRow {
    pub interval: usize,
    pub component_id: String,
    /// `overload` or `undervoltage`.
    pub kind: String,
    pub phase: String,
    /// Overload severity, or the voltage in per-unit for undervoltages.
    pub severity_or_vpu: f64,
    /// Severity bucket label; empty for undervoltages.
    pub bucket: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSummaryRow {
    pub interval: usize,
    /// Interval start on the evacuation clock, seconds.
    pub time_s: f64,
    pub ev_kw: f64,
    pub overloads: usize,
    pub undervoltages: usize,
    pub unconverged_feeders: usize,
    pub control_actions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(super) struct HistogramRow {
    pub interval: usize,
    #[serde(rename = "<10%")]
    pub up_to_10: usize,
    #[serde(rename = "10-50%")]
    pub from_10_to_50: usize,
    #[serde(rename = "50-100%")]
    pub from_50_to_100: usize,
    #[serde(rename = ">100%")]
    pub over_100: usize,
}

impl HistogramRow {
    pub fn counts(&self) -> [usize; 4] {
        [self.up_to_10, self.from_10_to_50, self.from_50_to_100, self.over_100]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerMeta {
    pub controls: bool,
    pub intervals: usize,
    pub interval_length: f64,
    pub offset: f64,
    pub unconverged: Vec<SolveIssue>,
    pub control_cap_hits: Vec<SolveIssue>,
}

fn solve_tree(tree: &FeederTree, config: &ScenarioConfig) -> Result<(FeederTree, PowerFlowSolution, usize, bool)> {
    if config.controls {
        let (t, sol, log) = run_discrete_controls(tree, config.source_voltage_pu, &ControlOptions::default())?;
        Ok((t, sol, log.actions.len(), log.cap_hit))
    } else {
        let sol = solve_feeder(tree, config.source_voltage_pu)?;
        Ok((tree.clone(), sol, 0, false))
    }
}

/// Solves every feeder for one interval of charging load. Controls start
/// from the taps and capacitor states stored in the network.
pub fn solve_interval(
    net: &DistributionNetwork,
    series: &ChargingSeries,
    interval: usize,
    config: &ScenarioConfig,
) -> Result<IntervalOutcome> {
    let loaded = apply_charging_loads(net, &series.kw(interval))?;
    let trees = feeder_partition(&loaded)?;
    let solved: Vec<_> = trees.par_iter().map(|t| solve_tree(t, config)).collect::<Result<_>>()?;
    let mut out = IntervalOutcome {
        report: ViolationReport {
            interval_index: interval,
            ..Default::default()
        },
        ev_kw: series.total_kw(interval),
        unconverged: Vec::new(),
        cap_hits: Vec::new(),
        control_actions: 0,
    };
    for (tree, sol, actions, cap_hit) in solved {
        out.control_actions += actions;
        if cap_hit {
            out.cap_hits.push(tree.feeder_id.clone());
        }
        if !sol.converged {
            log::warn!("interval {interval}: feeder {} did not converge", tree.feeder_id);
            out.unconverged.push(tree.feeder_id.clone());
            continue;
        }
        out.report.merge(detect_violations(&sol, &tree, config.undervoltage_threshold)?);
    }
    Ok(out)
}

pub(super) fn violation_rows(report: &ViolationReport) -> impl Iterator<Item = ViolationRow> + '_ {
    let i = report.interval_index;
    report
        .overloads
        .iter()
        .map(move |o| ViolationRow {
            interval: i,
            component_id: o.branch_id.clone(),
            kind: "overload".into(),
            phase: o.phase.to_string(),
            severity_or_vpu: o.severity,
            bucket: o.bucket.label().into(),
        })
        .chain(report.undervoltages.iter().map(move |u| ViolationRow {
            interval: i,
            component_id: u.bus_id.clone(),
            kind: "undervoltage".into(),
            phase: u.phase.to_string(),
            severity_or_vpu: u.v_pu,
            bucket: String::new(),
        }))
}

/// Time-series power flow over every interval of the charging series.
/// Intervals and feeders solve in parallel; outputs are merged in interval
/// and feeder order.
pub fn power_stage(config: &ScenarioConfig) -> Result<PowerMeta> {
    config.validate()?;
    let dir = config.run_dir();
    let series = read_charging_series(&dir, Stage::Power)?;
    let net = read_grid(config)?;
    let outcomes: Vec<IntervalOutcome> = (0..series.len())
        .into_par_iter()
        .map(|i| solve_interval(&net, &series, i, config))
        .collect::<Result<_>>()?;

    let rows: Vec<ViolationRow> = outcomes.iter().flat_map(|o| violation_rows(&o.report)).collect();
    write_csv_with_header(
        &dir.join(VIOLATIONS),
        &["interval", "component_id", "kind", "phase", "severity_or_vpu", "bucket"],
        &rows,
    )?;
    let summary: Vec<PowerSummaryRow> = outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| PowerSummaryRow {
            interval: i,
            time_s: i as f64 * series.interval_length - series.offset,
            ev_kw: o.ev_kw,
            overloads: o.report.overloads.len(),
            undervoltages: o.report.undervoltages.len(),
            unconverged_feeders: o.unconverged.len(),
            control_actions: o.control_actions,
        })
        .collect();
    write_csv_with_header(
        &dir.join(POWER_SUMMARY),
        &["interval", "time_s", "ev_kw", "overloads", "undervoltages", "unconverged_feeders", "control_actions"],
        &summary,
    )?;
    let histogram: Vec<HistogramRow> = outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let c = o.report.bucket_counts();
            HistogramRow {
                interval: i,
                up_to_10: c[0],
                from_10_to_50: c[1],
                from_50_to_100: c[2],
                over_100: c[3],
            }
        })
        .collect();
    write_csv_with_header(
        &dir.join(SEVERITY_HISTOGRAM),
        &["interval", "<10%", "10-50%", "50-100%", ">100%"],
        &histogram,
    )?;
    let issues = |pick: fn(&IntervalOutcome) -> &Vec<String>| -> Vec<SolveIssue> {
        outcomes
            .iter()
            .enumerate()
            .flat_map(|(i, o)| {
                pick(o).iter().map(move |f| SolveIssue {
                    interval: i,
                    feeder: f.clone(),
                })
            })
            .collect()
    };
    let meta = PowerMeta {
        controls: config.controls,
        intervals: series.len(),
        interval_length: series.interval_length,
        offset: series.offset,
        unconverged: issues(|o| &o.unconverged),
        control_cap_hits: issues(|o| &o.cap_hits),
    };
    write_json(&dir.join(POWER_META), &meta)?;
    log::info!(
        "{} intervals: {} overloads, {} undervoltages",
        series.len(),
        rows.iter().filter(|r| r.kind == "overload").count(),
        rows.iter().filter(|r| r.kind == "undervoltage").count()
    );
    Ok(meta)
}
