use std::collections::{BTreeMap, HashSet};

use super::{
    allocate_proportional, tract_to_taz, AdoptionCurve, AdoptionError, CensusTract, MarketHistory,
    TazEvProfile,
};
use crate::rng::{keyed_uniform, Stream};

/// Allocation weight of a tract for EV counts.
pub fn tract_weight(t: &CensusTract) -> f64 {
    t.households as f64 * t.median_income
}

fn by_tract(tracts: &[CensusTract], counts: Vec<u64>) -> BTreeMap<String, u64> {
    tracts.iter().map(|t| t.id.clone()).zip(counts).collect()
}

/// County fleet for `year` split over tracts by household count.
fn tract_fleet(tracts: &[CensusTract], history: &MarketHistory, year: i32) -> Result<Vec<u64>, AdoptionError> {
    let households: Vec<f64> = tracts.iter().map(|t| t.households as f64).collect();
    allocate_proportional(history.county_fleet(year)?, &households)
}

fn profiles(
    tracts: &[CensusTract],
    year: i32,
    evs: Vec<u64>,
    fleet: Vec<u64>,
) -> Result<Vec<TazEvProfile>, AdoptionError> {
    let ev_taz = tract_to_taz(&by_tract(tracts, evs), tracts)?;
    let fleet_taz = tract_to_taz(&by_tract(tracts, fleet), tracts)?;
    Ok(fleet_taz
        .into_iter()
        .map(|(taz_id, total)| {
            let ev = ev_taz.get(&taz_id).copied().unwrap_or(0).min(total);
            TazEvProfile {
                taz_id,
                year,
                total_vehicles: total,
                ev_vehicles: ev,
                ev_fraction: if total > 0 { ev as f64 / total as f64 } else { 0.0 },
            }
        })
        .collect())
}

/// Base case: each year a tract replaces `fleet / average age` vehicles, and
/// the EV share of that replacement equals the share of new sales one
/// vehicle age earlier. Accumulates from the registration seed.
pub fn base_case_fractions(
    tracts: &[CensusTract],
    history: &MarketHistory,
    start_year: i32,
    target_year: i32,
) -> Result<Vec<TazEvProfile>, AdoptionError> {
    if target_year < start_year {
        return Err(AdoptionError::YearOrder {
            start: start_year,
            target: target_year,
        });
    }
    if start_year < history.seed_year {
        return Err(AdoptionError::YearOrder {
            start: history.seed_year,
            target: start_year,
        });
    }
    let weights: Vec<f64> = tracts.iter().map(tract_weight).collect();
    let mut evs: Vec<f64> = allocate_proportional(history.seed_evs, &weights)?
        .into_iter()
        .map(|n| n as f64)
        .collect();
    let mut out = Vec::new();
    for year in history.seed_year..=target_year {
        let fleet = tract_fleet(tracts, history, year)?;
        if year > history.seed_year {
            for (i, t) in tracts.iter().enumerate() {
                let age = t.avg_age(year).ok_or_else(|| AdoptionError::MissingAge(t.id.clone()))?;
                if !(age > 0.0) {
                    return Err(AdoptionError::MissingAge(t.id.clone()));
                }
                let lagged = year - age.round() as i32;
                let turnover = fleet[i] as f64 / age;
                evs[i] = (evs[i] + turnover * history.share(lagged)?).min(fleet[i] as f64);
            }
        }
        if year >= start_year {
            let rounded = evs.iter().map(|e| e.round() as u64).collect();
            out.extend(profiles(tracts, year, rounded, fleet)?);
        }
    }
    Ok(out)
}

/// Medium and high cases: the county EV total follows the penetration curve
/// and is distributed by tract weight.
pub fn curve_case_fractions(
    tracts: &[CensusTract],
    curve: &AdoptionCurve,
    history: &MarketHistory,
    year: i32,
) -> Result<Vec<TazEvProfile>, AdoptionError> {
    let p = *curve
        .penetration_by_year
        .get(&year)
        .ok_or(AdoptionError::MissingYear {
            series: "adoption curve",
            year,
        })?;
    let fleet_total = *history
        .fleet_total_by_year
        .get(&year)
        .ok_or(AdoptionError::MissingYear {
            series: "fleet projection",
            year,
        })?;
    let county_evs = (p * fleet_total as f64 * history.county_share).round() as u64;
    let weights: Vec<f64> = tracts.iter().map(tract_weight).collect();
    let evs = allocate_proportional(county_evs, &weights)?;
    let fleet = tract_fleet(tracts, history, year)?;
    let evs = evs.into_iter().zip(&fleet).map(|(e, f)| e.min(*f)).collect();
    profiles(tracts, year, evs, fleet)
}

/// Flips the fewest non-electric vehicles needed to reach `target_rate`,
/// choosing those with the smallest seeded draw. Existing EVs never flip.
pub fn extend_to_extreme(
    vehicle_ids: &[String],
    electric: &[bool],
    target_rate: f64,
    seed: u64,
) -> Result<Vec<bool>, AdoptionError> {
    if vehicle_ids.len() != electric.len() {
        return Err(AdoptionError::Invalid("vehicle ids and flags differ in length".into()));
    }
    let n = electric.len();
    let current = electric.iter().filter(|e| **e).count();
    let current_rate = if n > 0 { current as f64 / n as f64 } else { 0.0 };
    if target_rate < current_rate - 1e-12 || !(0.0..=1.0).contains(&target_rate) {
        return Err(AdoptionError::TargetBelowCurrent {
            target: target_rate,
            current: current_rate,
        });
    }
    let needed = ((target_rate * n as f64 - 1e-9).ceil().max(0.0) as usize).saturating_sub(current);
    let unique: HashSet<&str> = vehicle_ids.iter().map(String::as_str).collect();
    if unique.len() != n {
        return Err(AdoptionError::Invalid("duplicate vehicle ids".into()));
    }
    let mut candidates: Vec<(f64, usize)> = (0..n)
        .filter(|&i| !electric[i])
        .map(|i| (keyed_uniform(seed, Stream::Extreme, &vehicle_ids[i]), i))
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| vehicle_ids[a.1].cmp(&vehicle_ids[b.1])));
    let mut out = electric.to_vec();
    for &(_, i) in candidates.iter().take(needed) {
        out[i] = true;
    }
    Ok(out)
}
