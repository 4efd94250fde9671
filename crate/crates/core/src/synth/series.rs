//! Exogenous adoption inputs for synthetic cities: sales-share history,
//! fleet projection, penetration curves and vehicle age by income.

use crate::adoption::{AgeRow, CurveRow, FleetRow, MarketFile, ShareRow};

pub const FIRST_YEAR: i32 = 2005;
pub const LAST_YEAR: i32 = 2060;
const FLEET_2015: f64 = 8.0e6;
const FLEET_GROWTH: f64 = 0.004;

/// (year, medium, high) anchors; other years interpolate linearly.
const CURVE_ANCHORS: [(i32, f64, f64); 7] = [
    (2005, 0.0, 0.0),
    (2020, 0.005, 0.008),
    (2030, 0.03, 0.07),
    (2040, 0.083, 0.208),
    (2045, 0.12, 0.32),
    (2050, 0.17, 0.43),
    (2060, 0.28, 0.6),
];

/// (income upper bound, age in the first table year, age in the last).
const AGE_BRACKETS: [(Option<f64>, f64, f64); 4] = [
    (Some(35_000.0), 12.5, 13.5),
    (Some(75_000.0), 11.0, 12.0),
    (Some(150_000.0), 10.0, 11.0),
    (None, 9.0, 10.0),
];

/// Logistic new-sales share of electric vehicles.
pub fn sales_share(year: i32) -> f64 {
    0.6 / (1.0 + (-0.22 * f64::from(year - 2035)).exp())
}

pub fn fleet_total(year: i32) -> u64 {
    (FLEET_2015 * (1.0 + FLEET_GROWTH).powi(year - 2015)).round() as u64
}

fn curve(year: i32) -> (f64, f64) {
    let i = CURVE_ANCHORS
        .windows(2)
        .position(|w| year <= w[1].0)
        .unwrap_or(CURVE_ANCHORS.len() - 2);
    let (a, b) = (CURVE_ANCHORS[i], CURVE_ANCHORS[i + 1]);
    let s = f64::from(year - a.0) / f64::from(b.0 - a.0);
    (a.1 + s * (b.1 - a.1), a.2 + s * (b.2 - a.2))
}

pub fn share_rows() -> Vec<ShareRow> {
    (FIRST_YEAR..=LAST_YEAR)
        .map(|year| ShareRow {
            year,
            ev_share: (sales_share(year) * 1e6).round() / 1e6,
        })
        .collect()
}

pub fn fleet_rows() -> Vec<FleetRow> {
    (FIRST_YEAR..=LAST_YEAR)
        .map(|year| FleetRow {
            year,
            fleet_total: fleet_total(year),
        })
        .collect()
}

pub fn curve_rows() -> Vec<CurveRow> {
    (2020..=LAST_YEAR)
        .map(|year| {
            let (medium, high) = curve(year);
            CurveRow {
                year,
                medium: (medium * 1e6).round() / 1e6,
                high: (high * 1e6).round() / 1e6,
            }
        })
        .collect()
}

pub fn age_rows() -> Vec<AgeRow> {
    AGE_BRACKETS
        .iter()
        .flat_map(|&(income_max, first, last)| {
            [(2017, first), (LAST_YEAR, last)].map(|(year, avg_age)| AgeRow {
                income_max,
                year,
                avg_age,
            })
        })
        .collect()
}

/// Sizes the county so its fleet in the seed year matches the city's
/// vehicle count; the seed EV stock follows the sales share of that year.
pub fn market(city_vehicles: u64) -> MarketFile {
    let seed_year = 2019;
    let county_share = city_vehicles.max(1) as f64 / fleet_total(seed_year) as f64;
    MarketFile {
        county_share,
        seed_year,
        seed_evs: (city_vehicles as f64 * sales_share(seed_year) * 0.3).round() as u64,
    }
}
