use std::collections::BTreeMap;

use super::{AdoptionError, CensusTract};

/// Splits `total` into integers proportional to `weights` by the largest
/// remainder method. Remainder ties go to the smaller index.
pub fn allocate_proportional(total: u64, weights: &[f64]) -> Result<Vec<u64>, AdoptionError> {
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
        return Err(AdoptionError::NegativeWeight(*w));
    }
    if total == 0 {
        return Ok(vec![0; weights.len()]);
    }
    let sum: f64 = weights.iter().sum();
    if !(sum > 0.0) {
        return Err(AdoptionError::ZeroWeights);
    }
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let remaining = total.saturating_sub(assigned) as usize;
    for &i in order.iter().take(remaining) {
        counts[i] += 1;
    }
    Ok(counts)
}

/// Scales each tract's count by its land area inside the study region, then
/// splits it equally over the tract's TAZs.
pub fn tract_to_taz(
    by_tract: &BTreeMap<String, u64>,
    tracts: &[CensusTract],
) -> Result<BTreeMap<String, u64>, AdoptionError> {
    let mut out = BTreeMap::new();
    for t in tracts {
        if t.taz_ids.is_empty() {
            return Err(AdoptionError::TractWithoutTaz(t.id.clone()));
        }
        for taz in &t.taz_ids {
            out.entry(taz.clone()).or_insert(0);
        }
        let Some(&count) = by_tract.get(&t.id) else { continue };
        let scaled = (t.land_area_in_study * count as f64).round() as u64;
        let split = allocate_proportional(scaled, &vec![1.0; t.taz_ids.len()])?;
        for (taz, n) in t.taz_ids.iter().zip(split) {
            *out.get_mut(taz).expect("inserted above") += n;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tract(id: &str, area: f64, tazs: &[&str]) -> CensusTract {
        CensusTract {
            id: id.into(),
            households: 100,
            median_income: 50_000.0,
            mean_income: 60_000.0,
            land_area_in_study: area,
            taz_ids: tazs.iter().map(|s| s.to_string()).collect(),
            avg_vehicle_age_by_year: BTreeMap::new(),
        }
    }

    #[test]
    fn exact_and_forced_splits() {
        assert_eq!(allocate_proportional(30, &[100.0 * 50_000.0, 100.0 * 100_000.0]).unwrap(), vec![10, 20]);
        assert_eq!(allocate_proportional(10, &[1.0, 1.0, 1.0]).unwrap(), vec![4, 3, 3]);
        assert_eq!(allocate_proportional(0, &[1.0, 2.0]).unwrap(), vec![0, 0]);
        assert_eq!(allocate_proportional(0, &[0.0]).unwrap(), vec![0]);
    }

    #[test]
    fn bad_weights() {
        assert!(matches!(allocate_proportional(3, &[1.0, -1.0]), Err(AdoptionError::NegativeWeight(_))));
        assert!(matches!(allocate_proportional(3, &[0.0, 0.0]), Err(AdoptionError::ZeroWeights)));
    }

    #[test]
    fn tract_splits() {
        let by = |n: u64| BTreeMap::from([("t".to_string(), n)]);
        let one = tract_to_taz(&by(7), &[tract("t", 1.0, &["z"])]).unwrap();
        assert_eq!(one["z"], 7);
        let three = tract_to_taz(&by(9), &[tract("t", 1.0, &["a", "b", "c"])]).unwrap();
        assert_eq!(three.values().copied().collect::<Vec<_>>(), vec![3, 3, 3]);
        let half = tract_to_taz(&by(10), &[tract("t", 0.5, &["a", "b"])]).unwrap();
        assert_eq!((half["a"], half["b"]), (3, 2));
        assert!(matches!(
            tract_to_taz(&by(1), &[tract("t", 1.0, &[])]),
            Err(AdoptionError::TractWithoutTaz(_))
        ));
    }
}
