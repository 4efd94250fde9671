//! Vehicle counts per parcel from category lookups and manual counts.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LinkError;

/// Category table shipped with the crate.
pub const DEFAULT_ESTIMATES_CSV: &str = include_str!("../../data/vehicle_estimates.csv");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub category: String,
    pub subcategory: String,
    pub vehicles: u32,
    #[serde(default)]
    pub comment: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManualCount {
    pub parcel_id: String,
    pub vehicles: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateSource {
    Table,
    Manual,
    Missing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Estimate {
    pub vehicles: u32,
    pub source: EstimateSource,
}

fn key(category: &str, subcategory: &str) -> (String, String) {
    (category.trim().to_uppercase(), subcategory.trim().to_uppercase())
}

#[derive(Debug, Clone)]
pub struct VehicleEstimator {
    table: HashMap<(String, String), u32>,
    manual: HashMap<String, f64>,
    /// Multiplier applied to manual counts.
    pub manual_scale: f64,
}

impl VehicleEstimator {
    pub fn new(rows: &[EstimateRow], manual: &[ManualCount], manual_scale: f64) -> Self {
        VehicleEstimator {
            table: rows
                .iter()
                .map(|r| (key(&r.category, &r.subcategory), r.vehicles))
                .collect(),
            manual: manual.iter().map(|m| (m.parcel_id.clone(), m.vehicles)).collect(),
            manual_scale,
        }
    }

    pub fn default_rows() -> Result<Vec<EstimateRow>, LinkError> {
        csv::Reader::from_reader(DEFAULT_ESTIMATES_CSV.as_bytes())
            .deserialize()
            .collect::<Result<_, _>>()
            .map_err(|e| LinkError::Table(e.to_string()))
    }

    /// Estimator over the shipped category table with no manual counts.
    pub fn with_defaults() -> Self {
        let rows = Self::default_rows().expect("shipped estimate table parses");
        Self::new(&rows, &[], 1.0)
    }

    pub fn from_files(
        table: Option<&Path>,
        manual: Option<&Path>,
        manual_scale: f64,
    ) -> crate::Result<Self> {
        let rows = match table {
            Some(p) => crate::io::read_csv(p)?,
            None => Self::default_rows()?,
        };
        let manual = match manual {
            Some(p) => crate::io::read_csv(p)?,
            None => Vec::new(),
        };
        Ok(Self::new(&rows, &manual, manual_scale))
    }

    pub fn lookup(&self, category: &str, subcategory: &str) -> Option<u32> {
        self.table.get(&key(category, subcategory)).copied()
    }

    /// Table value, else scaled manual count, else zero.
    pub fn estimate(&self, parcel_id: &str, category: &str, subcategory: &str) -> Estimate {
        if let Some(v) = self.lookup(category, subcategory) {
            return Estimate {
                vehicles: v,
                source: EstimateSource::Table,
            };
        }
        if let Some(count) = self.manual.get(parcel_id) {
            return Estimate {
                vehicles: (count * self.manual_scale).round().max(0.0) as u32,
                source: EstimateSource::Manual,
            };
        }
        Estimate {
            vehicles: 0,
            source: EstimateSource::Missing,
        }
    }
}
