//! Per-TAZ electric vehicle fractions: the base case projects historical
//! sales forward, the medium and high cases follow penetration curves, and
//! the extreme case tops up the high case at random.

mod allocate;
mod cases;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use allocate::{allocate_proportional, tract_to_taz};
pub use cases::{base_case_fractions, curve_case_fractions, extend_to_extreme, tract_weight};

/// Overall rate the extreme case tops up to.
pub const EXTREME_TARGET_RATE: f64 = 0.8;

#[derive(Debug, Error)]
pub enum AdoptionError {
    #[error("weight {0} is negative or not finite")]
    NegativeWeight(f64),
    #[error("weights sum to zero with a nonzero total")]
    ZeroWeights,
    #[error("tract {0:?} lists no TAZs")]
    TractWithoutTaz(String),
    #[error("{series} has no value for year {year}")]
    MissingYear { series: &'static str, year: i32 },
    #[error("tract {0:?} has no vehicle age data")]
    MissingAge(String),
    #[error("target year {target} precedes start year {start}")]
    YearOrder { start: i32, target: i32 },
    #[error("target rate {target} is below the current rate {current}")]
    TargetBelowCurrent { target: f64, current: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionLevel {
    Base,
    Medium,
    High,
    Extreme,
}

impl PredictionLevel {
    pub const ALL: [PredictionLevel; 4] = [
        PredictionLevel::Base,
        PredictionLevel::Medium,
        PredictionLevel::High,
        PredictionLevel::Extreme,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PredictionLevel::Base => "base",
            PredictionLevel::Medium => "medium",
            PredictionLevel::High => "high",
            PredictionLevel::Extreme => "extreme",
        }
    }
}

impl fmt::Display for PredictionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusTract {
    pub id: String,
    pub households: u64,
    pub median_income: f64,
    pub mean_income: f64,
    /// Share of the tract's land inside the study area.
    pub land_area_in_study: f64,
    pub taz_ids: Vec<String>,
    pub avg_vehicle_age_by_year: BTreeMap<i32, f64>,
}

impl CensusTract {
    /// Average vehicle age, held at the nearest tabulated year outside the
    /// table and interpolated linearly inside it.
    pub fn avg_age(&self, year: i32) -> Option<f64> {
        let table = &self.avg_vehicle_age_by_year;
        if let Some(v) = table.get(&year) {
            return Some(*v);
        }
        let below = table.range(..year).next_back();
        let above = table.range(year..).next();
        match (below, above) {
            (Some((y0, v0)), Some((y1, v1))) => {
                let t = f64::from(year - y0) / f64::from(y1 - y0);
                Some(v0 + t * (v1 - v0))
            }
            (Some((_, v)), None) | (None, Some((_, v))) => Some(*v),
            (None, None) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketHistory {
    pub ev_share_by_year: BTreeMap<i32, f64>,
    pub fleet_total_by_year: BTreeMap<i32, u64>,
    /// County share of the projected fleet.
    pub county_share: f64,
    /// Year of the registration count the base case starts from.
    pub seed_year: i32,
    /// Registered EVs in the county at `seed_year`.
    pub seed_evs: u64,
}

impl MarketHistory {
    pub fn share(&self, year: i32) -> Result<f64, AdoptionError> {
        self.ev_share_by_year
            .get(&year)
            .copied()
            .ok_or(AdoptionError::MissingYear {
                series: "ev share history",
                year,
            })
    }

    /// County fleet for `year`.
    pub fn county_fleet(&self, year: i32) -> Result<u64, AdoptionError> {
        self.fleet_total_by_year
            .get(&year)
            .map(|f| (*f as f64 * self.county_share).round() as u64)
            .ok_or(AdoptionError::MissingYear {
                series: "fleet projection",
                year,
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveCase {
    Medium,
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdoptionCurve {
    pub case: CurveCase,
    pub penetration_by_year: BTreeMap<i32, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TazEvProfile {
    pub taz_id: String,
    pub year: i32,
    pub total_vehicles: u64,
    pub ev_vehicles: u64,
    pub ev_fraction: f64,
}

/// Row of the heatmap-style profile table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub year: i32,
    pub taz_index: usize,
    pub taz_id: String,
    pub total_vehicles: u64,
    pub ev_vehicles: u64,
    pub fraction: f64,
}

/// Rows ordered by year, then TAZ id; `taz_index` is the TAZ's rank by id.
pub fn profile_rows(profiles: &[TazEvProfile]) -> Vec<ProfileRow> {
    let mut ids: Vec<&str> = profiles.iter().map(|p| p.taz_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    let mut rows: Vec<ProfileRow> = profiles
        .iter()
        .map(|p| ProfileRow {
            year: p.year,
            taz_index: ids.binary_search(&p.taz_id.as_str()).unwrap_or(0),
            taz_id: p.taz_id.clone(),
            total_vehicles: p.total_vehicles,
            ev_vehicles: p.ev_vehicles,
            fraction: p.ev_fraction,
        })
        .collect();
    rows.sort_by(|a, b| a.year.cmp(&b.year).then(a.taz_index.cmp(&b.taz_index)));
    rows
}

pub fn read_profile_rows(path: &Path) -> crate::Result<Vec<TazEvProfile>> {
    let rows: Vec<ProfileRow> = crate::io::read_csv(path)?;
    Ok(rows
        .into_iter()
        .map(|r| TazEvProfile {
            taz_id: r.taz_id,
            year: r.year,
            total_vehicles: r.total_vehicles,
            ev_vehicles: r.ev_vehicles,
            ev_fraction: r.fraction,
        })
        .collect())
}

#[derive(Debug, Deserialize, Serialize)]
pub struct TractRow {
    pub id: String,
    pub households: u64,
    pub median_income: f64,
    pub mean_income: f64,
    pub land_area_in_study: f64,
    /// Semicolon-separated TAZ ids.
    pub taz_ids: String,
}

#[derive(Debug, Deserialize, Serialize)]
pub struct AgeRow {
    /// Upper income bound of the bracket; the last bracket may be empty.
    pub income_max: Option<f64>,
    pub year: i32,
    pub avg_age: f64,
}

#[derive(Debug, Deserialize, Serialize)]
pub struct ShareRow {
    pub year: i32,
    pub ev_share: f64,
}

#[derive(Debug, Deserialize, Serialize)]
pub struct FleetRow {
    pub year: i32,
    pub fleet_total: u64,
}

#[derive(Debug, Deserialize, Serialize)]
pub struct CurveRow {
    pub year: i32,
    pub medium: f64,
    pub high: f64,
}

#[derive(Debug, Deserialize, Serialize)]
pub struct MarketFile {
    pub county_share: f64,
    pub seed_year: i32,
    pub seed_evs: u64,
}

pub const TRACTS_FILE: &str = "tracts.csv";
pub const AGE_FILE: &str = "vehicle_age_by_income.csv";
pub const SHARE_FILE: &str = "ev_share_history.csv";
pub const FLEET_FILE: &str = "fleet_projection.csv";
pub const CURVES_FILE: &str = "adoption_curves.csv";
pub const MARKET_FILE: &str = "market.json";

/// Everything the adoption cases read, loaded from one data directory.
#[derive(Debug, Clone, PartialEq)]
pub struct AdoptionInputs {
    pub tracts: Vec<CensusTract>,
    pub history: MarketHistory,
    pub medium: AdoptionCurve,
    pub high: AdoptionCurve,
}

/// Attaches each tract's age series from the bracket its mean income falls in.
pub fn tracts_with_ages(rows: Vec<TractRow>, ages: &[AgeRow]) -> Result<Vec<CensusTract>, AdoptionError> {
    let mut bounds: Vec<Option<f64>> = ages.iter().map(|a| a.income_max).collect();
    bounds.sort_by(|a, b| match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    bounds.dedup();
    rows.into_iter()
        .map(|r| {
            if !(r.median_income > 0.0 && r.mean_income > 0.0) {
                return Err(AdoptionError::Invalid(format!("tract {} needs positive incomes", r.id)));
            }
            if !(0.0..=1.0).contains(&r.land_area_in_study) {
                return Err(AdoptionError::Invalid(format!("tract {} land share outside [0, 1]", r.id)));
            }
            let bracket = bounds
                .iter()
                .find(|b| b.map_or(true, |max| r.mean_income <= max))
                .copied()
                .ok_or_else(|| AdoptionError::MissingAge(r.id.clone()))?;
            let avg_vehicle_age_by_year: BTreeMap<i32, f64> = ages
                .iter()
                .filter(|a| a.income_max == bracket)
                .map(|a| (a.year, a.avg_age))
                .collect();
            Ok(CensusTract {
                taz_ids: r
                    .taz_ids
                    .split(';')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect(),
                id: r.id,
                households: r.households,
                median_income: r.median_income,
                mean_income: r.mean_income,
                land_area_in_study: r.land_area_in_study,
                avg_vehicle_age_by_year,
            })
        })
        .collect()
}

impl AdoptionInputs {
    pub fn load(dir: &Path) -> crate::Result<Self> {
        let tracts: Vec<TractRow> = crate::io::read_csv(&dir.join(TRACTS_FILE))?;
        let ages: Vec<AgeRow> = crate::io::read_csv(&dir.join(AGE_FILE))?;
        let shares: Vec<ShareRow> = crate::io::read_csv(&dir.join(SHARE_FILE))?;
        let fleet: Vec<FleetRow> = crate::io::read_csv(&dir.join(FLEET_FILE))?;
        let curves: Vec<CurveRow> = crate::io::read_csv(&dir.join(CURVES_FILE))?;
        let market: MarketFile = crate::io::read_json(&dir.join(MARKET_FILE))?;
        let curve = |case, pick: fn(&CurveRow) -> f64| AdoptionCurve {
            case,
            penetration_by_year: curves.iter().map(|c| (c.year, pick(c))).collect(),
        };
        let inputs = AdoptionInputs {
            tracts: tracts_with_ages(tracts, &ages)?,
            history: MarketHistory {
                ev_share_by_year: shares.iter().map(|s| (s.year, s.ev_share)).collect(),
                fleet_total_by_year: fleet.iter().map(|f| (f.year, f.fleet_total)).collect(),
                county_share: market.county_share,
                seed_year: market.seed_year,
                seed_evs: market.seed_evs,
            },
            medium: curve(CurveCase::Medium, |c| c.medium),
            high: curve(CurveCase::High, |c| c.high),
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn validate(&self) -> Result<(), AdoptionError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !self.history.ev_share_by_year.values().all(|v| unit(*v)) || !unit(self.history.county_share) {
            return Err(AdoptionError::Invalid("shares must lie in [0, 1]".into()));
        }
        if self.history.fleet_total_by_year.values().any(|f| *f == 0) {
            return Err(AdoptionError::Invalid("fleet totals must be positive".into()));
        }
        for c in [&self.medium, &self.high] {
            let values: Vec<f64> = c.penetration_by_year.values().copied().collect();
            if !values.iter().all(|v| unit(*v)) || values.windows(2).any(|w| w[1] < w[0]) {
                return Err(AdoptionError::Invalid(format!(
                    "{:?} curve must be non-decreasing within [0, 1]",
                    c.case
                )));
            }
        }
        Ok(())
    }

    /// Fractions for one prediction level and year. The extreme case shares
    /// the high-case fractions; its top-up happens per vehicle.
    pub fn fractions(&self, level: PredictionLevel, year: i32) -> Result<Vec<TazEvProfile>, AdoptionError> {
        match level {
            PredictionLevel::Base => {
                base_case_fractions(&self.tracts, &self.history, year, year)
            }
            PredictionLevel::Medium => curve_case_fractions(&self.tracts, &self.medium, &self.history, year),
            PredictionLevel::High | PredictionLevel::Extreme => {
                curve_case_fractions(&self.tracts, &self.high, &self.history, year)
            }
        }
    }
}
