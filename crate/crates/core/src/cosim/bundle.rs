use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::power::{HistogramRow, SolveIssue, ViolationRow};
use super::{
    read_grid, read_traffic, read_vehicles, require, LinkSummary, PowerMeta, Stage, TrafficSummary, LINKED_PARCELS,
    LINK_SUMMARY, POWER_META, RUN_REPORT, SEVERITY_HISTOGRAM, TAZ_OVERLOADS, VIOLATIONS,
};
use crate::error::{Error, Result};
use crate::grid::{DistributionNetwork, Phase};
use crate::io::{read_csv, read_json, write_csv_with_header, write_json};
use crate::linker::Parcel;
use crate::powerflow::{Overload, SeverityBucket, Undervoltage, ViolationReport};
use crate::scenario::ScenarioConfig;
use crate::traffic::{CurvePoint, MetricsSummary, TrafficResult};

/// TAZ key for overloaded components no parcel TAZ can be traced to.
pub const OUTSIDE_TAZ: &str = "(outside)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario_name: String,
    pub rng_seed: u64,
    pub controls: bool,
    pub vehicles: usize,
    pub electric_vehicles: usize,
    /// Electric vehicles that charge on the grid.
    pub connected_evs: usize,
    pub routed_vehicles: usize,
    pub unreachable_vehicles: Vec<String>,
    pub intervals: usize,
    pub interval_length: f64,
    pub unconverged_intervals: Vec<SolveIssue>,
    pub control_cap_hits: Vec<SolveIssue>,
    pub total_overloads: usize,
    pub total_undervoltages: usize,
    pub peak_overloads: usize,
    pub peak_overload_interval: Option<usize>,
    pub total_time_to_evacuate: Option<f64>,
    pub warnings: Vec<String>,
}

/// Everything one scenario run produced. Overloads read back from the
/// violation table carry no current (`NaN`); the severity is exact.
#[derive(Debug, Clone)]
pub struct ResultBundle {
    pub traffic: TrafficResult,
    pub metrics: Option<MetricsSummary>,
    pub curve: Vec<CurvePoint>,
    /// One report per interval, indices 0..n.
    pub power: Vec<ViolationReport>,
    pub controls: bool,
    pub interval_length: f64,
    pub severity_histogram: Vec<[usize; 4]>,
    /// Overloads per TAZ summed over every interval.
    pub taz_overload_counts: BTreeMap<String, usize>,
    pub run_report: RunReport,
}

fn parse_phase(s: &str) -> Result<Phase> {
    match s {
        "A" => Ok(Phase::A),
        "B" => Ok(Phase::B),
        "C" => Ok(Phase::C),
        other => Err(Error::Data(format!("bad phase {other:?} in violation table"))),
    }
}

fn read_power(dir: &Path, stage: Stage) -> Result<(PowerMeta, Vec<ViolationReport>)> {
    let meta: PowerMeta = read_json(&require(dir, POWER_META, stage, Stage::Power)?)?;
    let rows: Vec<ViolationRow> = read_csv(&require(dir, VIOLATIONS, stage, Stage::Power)?)?;
    let mut reports: Vec<ViolationReport> = (0..meta.intervals)
        .map(|i| ViolationReport {
            interval_index: i,
            ..Default::default()
        })
        .collect();
    for r in rows {
        let report = reports
            .get_mut(r.interval)
            .ok_or_else(|| Error::Data(format!("violation for interval {} beyond the horizon", r.interval)))?;
        let phase = parse_phase(&r.phase)?;
        match r.kind.as_str() {
            "overload" => report.overloads.push(Overload {
                branch_id: r.component_id,
                phase,
                current_a: f64::NAN,
                severity: r.severity_or_vpu,
                bucket: SeverityBucket::from_label(&r.bucket)
                    .ok_or_else(|| Error::Data(format!("bad severity bucket {:?}", r.bucket)))?,
            }),
            "undervoltage" => report.undervoltages.push(Undervoltage {
                bus_id: r.component_id,
                phase,
                v_pu: r.severity_or_vpu,
            }),
            other => return Err(Error::Data(format!("bad violation kind {other:?}"))),
        }
    }
    Ok((meta, reports))
}

fn nearest_parcel_taz<'a>(x: f64, y: f64, parcels: &'a [Parcel]) -> Option<&'a str> {
    parcels
        .iter()
        .map(|p| ((p.x - x).powi(2) + (p.y - y).powi(2), p))
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)))
        .and_then(|(_, p)| p.taz_id.as_deref())
}

/// Overloads of one interval per TAZ. Each overloaded branch is traced to
/// its downstream bus and then to the TAZ of the parcel nearest that bus.
pub fn taz_overload_map(
    bundle: &ResultBundle,
    grid: &DistributionNetwork,
    parcels: &[Parcel],
    interval: usize,
) -> Result<BTreeMap<String, usize>> {
    let report = bundle.power.get(interval).ok_or_else(|| {
        Error::Data(format!("interval {interval} is outside the {} run intervals", bundle.power.len()))
    })?;
    overload_map(&[report], grid, parcels)
}

fn overload_map(
    reports: &[&ViolationReport],
    grid: &DistributionNetwork,
    parcels: &[Parcel],
) -> Result<BTreeMap<String, usize>> {
    let branches: BTreeMap<&str, &str> = grid.branches.iter().map(|b| (b.id.as_str(), b.to_bus.as_str())).collect();
    let buses: BTreeMap<&str, (f64, f64)> = grid.buses.iter().map(|b| (b.id.as_str(), (b.x, b.y))).collect();
    let mut cache: BTreeMap<&str, String> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for o in reports.iter().flat_map(|r| &r.overloads) {
        let id = o.branch_id.as_str();
        if !cache.contains_key(id) {
            let to = branches
                .get(id)
                .ok_or_else(|| Error::Data(format!("overloaded branch {id:?} is not in the grid")))?;
            let (x, y) = buses[to];
            let taz = nearest_parcel_taz(x, y, parcels).unwrap_or(OUTSIDE_TAZ).to_string();
            cache.insert(id, taz);
        }
        *out.entry(cache[id].clone()).or_insert(0) += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TazOverloadRow {
    interval: String,
    taz_id: String,
    overloads: usize,
}

impl ResultBundle {
    /// Reads a finished run directory.
    pub fn load(run_dir: &Path) -> Result<Self> {
        let report: RunReport = read_json(&require(run_dir, RUN_REPORT, Stage::Report, Stage::Report)?)?;
        let (summary, traffic, curve) = read_traffic(run_dir, Stage::Report)?;
        let (meta, power) = read_power(run_dir, Stage::Report)?;
        let rows: Vec<TazOverloadRow> = read_csv(&require(run_dir, TAZ_OVERLOADS, Stage::Report, Stage::Report)?)?;
        let taz_overload_counts = rows
            .into_iter()
            .filter(|r| r.interval == "all")
            .map(|r| (r.taz_id, r.overloads))
            .collect();
        Ok(ResultBundle {
            severity_histogram: power.iter().map(ViolationReport::bucket_counts).collect(),
            traffic,
            metrics: summary.metrics,
            curve,
            power,
            controls: meta.controls,
            interval_length: meta.interval_length,
            taz_overload_counts,
            run_report: report,
        })
    }

    pub fn overload_counts(&self) -> Vec<usize> {
        self.power.iter().map(|r| r.overloads.len()).collect()
    }

    pub fn undervoltage_counts(&self) -> Vec<usize> {
        self.power.iter().map(|r| r.undervoltages.len()).collect()
    }

    pub fn total_time_to_evacuate(&self) -> Option<f64> {
        self.metrics.as_ref().and_then(|m| m.total_time_to_evacuate)
    }
}

/// Assembles the result bundle from the simulator outputs and writes the
/// run report and the per-TAZ overload table.
pub fn report_stage(config: &ScenarioConfig) -> Result<ResultBundle> {
    config.validate()?;
    let dir = config.run_dir();
    let (meta, power) = read_power(&dir, Stage::Report)?;
    let (summary, traffic, curve): (TrafficSummary, _, _) = read_traffic(&dir, Stage::Report)?;
    let vehicles = read_vehicles(&dir, Stage::Report)?;
    let parcels: Vec<Parcel> = read_csv(&require(&dir, LINKED_PARCELS, Stage::Report, Stage::Link)?)?;
    let link: LinkSummary = read_json(&require(&dir, LINK_SUMMARY, Stage::Report, Stage::Link)?)?;
    let hist: Vec<HistogramRow> = read_csv(&require(&dir, SEVERITY_HISTOGRAM, Stage::Report, Stage::Power)?)?;
    let severity_histogram: Vec<[usize; 4]> = hist.iter().map(HistogramRow::counts).collect();
    let grid = read_grid(config)?;

    let mut table = Vec::new();
    for r in &power {
        for (taz_id, overloads) in overload_map(&[r], &grid, &parcels)? {
            table.push(TazOverloadRow {
                interval: r.interval_index.to_string(),
                taz_id,
                overloads,
            });
        }
    }
    let all: Vec<&ViolationReport> = power.iter().collect();
    let taz_overload_counts = overload_map(&all, &grid, &parcels)?;
    for (taz_id, overloads) in &taz_overload_counts {
        table.push(TazOverloadRow {
            interval: "all".into(),
            taz_id: taz_id.clone(),
            overloads: *overloads,
        });
    }
    write_csv_with_header(&dir.join(TAZ_OVERLOADS), &["interval", "taz_id", "overloads"], &table)?;

    let overloads: Vec<usize> = power.iter().map(|r| r.overloads.len()).collect();
    let peak = overloads.iter().copied().max().unwrap_or(0);
    let mut warnings = Vec::new();
    if !link.unassigned_parcels.is_empty() {
        warnings.push(format!("{} parcels lie outside every TAZ", link.unassigned_parcels.len()));
    }
    if !link.missing_estimates.is_empty() {
        warnings.push(format!("{} parcels have no vehicle estimate", link.missing_estimates.len()));
    }
    if !summary.unreachable_vehicles.is_empty() {
        warnings.push(format!(
            "{} vehicles cannot reach the evacuation edge",
            summary.unreachable_vehicles.len()
        ));
    }
    if summary.metrics.as_ref().is_some_and(|m| m.incomplete) {
        warnings.push("traffic simulation ended before every vehicle arrived".into());
    }
    if !meta.unconverged.is_empty() {
        warnings.push(format!("{} feeder solves did not converge", meta.unconverged.len()));
    }
    if !meta.control_cap_hits.is_empty() {
        warnings.push(format!("{} control loops hit the round cap", meta.control_cap_hits.len()));
    }
    let run_report = RunReport {
        scenario_name: config.scenario_name.clone(),
        rng_seed: config.rng_seed,
        controls: meta.controls,
        vehicles: vehicles.len(),
        electric_vehicles: vehicles.iter().filter(|v| v.is_electric).count(),
        connected_evs: vehicles.iter().filter(|v| v.charges()).count(),
        routed_vehicles: summary.routed,
        unreachable_vehicles: summary.unreachable_vehicles.clone(),
        intervals: meta.intervals,
        interval_length: meta.interval_length,
        unconverged_intervals: meta.unconverged.clone(),
        control_cap_hits: meta.control_cap_hits.clone(),
        total_overloads: overloads.iter().sum(),
        total_undervoltages: power.iter().map(|r| r.undervoltages.len()).sum(),
        peak_overloads: peak,
        peak_overload_interval: overloads.iter().position(|n| *n == peak).filter(|_| peak > 0),
        total_time_to_evacuate: summary.metrics.as_ref().and_then(|m| m.total_time_to_evacuate),
        warnings,
    };
    write_json(&dir.join(RUN_REPORT), &run_report)?;
    Ok(ResultBundle {
        traffic,
        metrics: summary.metrics,
        curve,
        power,
        controls: meta.controls,
        interval_length: meta.interval_length,
        severity_histogram,
        taz_overload_counts,
        run_report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub interval: usize,
    pub overloads_a: usize,
    pub overloads_b: usize,
    pub overload_delta: i64,
    pub undervoltages_a: usize,
    pub undervoltages_b: usize,
    pub undervoltage_delta: i64,
    #[serde(rename = "delta_<10%")]
    pub delta_up_to_10: i64,
    #[serde(rename = "delta_10-50%")]
    pub delta_10_to_50: i64,
    #[serde(rename = "delta_50-100%")]
    pub delta_50_to_100: i64,
    #[serde(rename = "delta_>100%")]
    pub delta_over_100: i64,
}

/// Run `b` minus run `a`, per interval and overall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    #[serde(skip)]
    pub rows: Vec<ComparisonRow>,
    pub intervals: usize,
    pub total_overload_delta: i64,
    pub total_undervoltage_delta: i64,
    pub peak_overloads_a: usize,
    pub peak_overloads_b: usize,
    pub evacuation_time_a: Option<f64>,
    pub evacuation_time_b: Option<f64>,
    pub evacuation_time_delta_s: Option<f64>,
    pub evacuation_time_delta_pct: Option<f64>,
    pub waiting_time_a: Option<f64>,
    pub waiting_time_b: Option<f64>,
}

impl ComparisonReport {
    /// Writes `comparison.csv` and `comparison_summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_csv_with_header(
            &dir.join("comparison.csv"),
            &[
                "interval",
                "overloads_a",
                "overloads_b",
                "overload_delta",
                "undervoltages_a",
                "undervoltages_b",
                "undervoltage_delta",
                "delta_<10%",
                "delta_10-50%",
                "delta_50-100%",
                "delta_>100%",
            ],
            &self.rows,
        )?;
        write_json(&dir.join("comparison_summary.json"), self)
    }
}

fn delta(a: usize, b: usize) -> i64 {
    b as i64 - a as i64
}

pub fn compare_runs(a: &ResultBundle, b: &ResultBundle) -> Result<ComparisonReport> {
    if a.power.len() != b.power.len() || a.interval_length != b.interval_length {
        return Err(Error::Data(format!(
            "runs cover different horizons: {} x {} s vs {} x {} s",
            a.power.len(),
            a.interval_length,
            b.power.len(),
            b.interval_length
        )));
    }
    let rows: Vec<ComparisonRow> = a
        .power
        .iter()
        .zip(&b.power)
        .enumerate()
        .map(|(i, (ra, rb))| {
            let (ca, cb) = (ra.bucket_counts(), rb.bucket_counts());
            ComparisonRow {
                interval: i,
                overloads_a: ra.overloads.len(),
                overloads_b: rb.overloads.len(),
                overload_delta: delta(ra.overloads.len(), rb.overloads.len()),
                undervoltages_a: ra.undervoltages.len(),
                undervoltages_b: rb.undervoltages.len(),
                undervoltage_delta: delta(ra.undervoltages.len(), rb.undervoltages.len()),
                delta_up_to_10: delta(ca[0], cb[0]),
                delta_10_to_50: delta(ca[1], cb[1]),
                delta_50_to_100: delta(ca[2], cb[2]),
                delta_over_100: delta(ca[3], cb[3]),
            }
        })
        .collect();
    let (ta, tb) = (a.total_time_to_evacuate(), b.total_time_to_evacuate());
    let time_delta = ta.zip(tb).map(|(x, y)| y - x);
    let wait = |r: &ResultBundle| r.metrics.as_ref().and_then(|m| m.average_waiting_time);
    Ok(ComparisonReport {
        intervals: rows.len(),
        total_overload_delta: rows.iter().map(|r| r.overload_delta).sum(),
        total_undervoltage_delta: rows.iter().map(|r| r.undervoltage_delta).sum(),
        peak_overloads_a: a.overload_counts().into_iter().max().unwrap_or(0),
        peak_overloads_b: b.overload_counts().into_iter().max().unwrap_or(0),
        evacuation_time_a: ta,
        evacuation_time_b: tb,
        evacuation_time_delta_s: time_delta,
        evacuation_time_delta_pct: ta.zip(time_delta).filter(|(x, _)| *x > 0.0).map(|(x, d)| 100.0 * d / x),
        waiting_time_a: wait(a),
        waiting_time_b: wait(b),
        rows,
    })
}
