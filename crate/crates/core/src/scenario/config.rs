use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ScenarioError;
use crate::adoption::PredictionLevel;

/// `ev_penetration_rate` value meaning "use the predicted rates".
pub const FIXED_RATE_SENTINEL: f64 = -1.0;

fn default_working_dir() -> PathBuf {
    PathBuf::from("runs")
}
fn default_data_dir() -> PathBuf {
    PathBuf::from("city")
}
fn default_load() -> f64 {
    7.2
}
fn default_interval() -> f64 {
    900.0
}
fn default_coverage() -> f64 {
    3000.0
}
fn default_true() -> bool {
    true
}
fn default_threshold() -> f64 {
    crate::powerflow::DEFAULT_UNDERVOLTAGE_PU
}
fn default_dt() -> f64 {
    1.0
}
fn default_max_sim_time() -> f64 {
    48.0 * 3600.0
}
fn default_source_pu() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario_name: String,
    #[serde(default = "default_working_dir")]
    pub working_dir: PathBuf,
    /// In [0, 1] for a fixed rate, or -1 to use `prediction_level`.
    pub ev_penetration_rate: f64,
    pub year_prediction: i32,
    #[serde(default)]
    pub prediction_level: Option<PredictionLevel>,
    /// kW per charging vehicle.
    #[serde(default = "default_load")]
    pub load_per_charging_ev: f64,
    /// Seconds of charging before departure.
    pub charging_time: f64,
    /// Seconds over which departures spread; 0 is all at once.
    pub departure_window: f64,
    pub tazs_to_evacuate: Vec<String>,
    pub evac_edge: String,

    #[serde(default)]
    pub rng_seed: u64,
    /// Power-flow snapshot length, seconds.
    #[serde(default = "default_interval")]
    pub interval_length: f64,
    /// Directory holding the city dataset.
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    /// Parcels farther than this from their bus evacuate without charging.
    #[serde(default = "default_coverage")]
    pub coverage_radius: f64,
    #[serde(default = "default_true")]
    pub controls: bool,
    #[serde(default = "default_threshold")]
    pub undervoltage_threshold: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_max_sim_time")]
    pub max_sim_time: f64,
    #[serde(default = "default_source_pu")]
    pub source_voltage_pu: f64,
}

impl ScenarioConfig {
    /// A complete, valid config for tests and templates.
    pub fn example() -> Self {
        ScenarioConfig {
            scenario_name: "example".into(),
            working_dir: default_working_dir(),
            ev_penetration_rate: FIXED_RATE_SENTINEL,
            year_prediction: 2040,
            prediction_level: Some(PredictionLevel::Medium),
            load_per_charging_ev: default_load(),
            charging_time: 3600.0,
            departure_window: 7200.0,
            tazs_to_evacuate: Vec::new(),
            evac_edge: "evac".into(),
            rng_seed: 0,
            interval_length: default_interval(),
            data_dir: default_data_dir(),
            coverage_radius: default_coverage(),
            controls: true,
            undervoltage_threshold: default_threshold(),
            dt: default_dt(),
            max_sim_time: default_max_sim_time(),
            source_voltage_pu: default_source_pu(),
        }
    }

    /// Reads a config; relative `working_dir` and `data_dir` resolve against
    /// the config file's directory.
    pub fn load(path: &Path) -> crate::Result<Self> {
        let mut config: ScenarioConfig = crate::io::read_json(path).map_err(|e| match e {
            crate::Error::Json { path, source } => crate::Error::Config(format!("{}: {source}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        if config.working_dir.is_relative() {
            config.working_dir = base.join(&config.working_dir);
        }
        if config.data_dir.is_relative() {
            config.data_dir = base.join(&config.data_dir);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> crate::Result<()> {
        crate::io::write_json(path, self)
    }

    /// Fixed penetration rate, if one is set.
    pub fn fixed_rate(&self) -> Option<f64> {
        (self.ev_penetration_rate >= 0.0).then_some(self.ev_penetration_rate)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::InvalidConfig(m.to_string()));
        if self.scenario_name.is_empty()
            || self.scenario_name.contains(['/', '\\'])
            || self.scenario_name.starts_with('.')
        {
            return bad("scenario_name must be a plain, nonempty directory name");
        }
        let rate = self.ev_penetration_rate;
        if rate == FIXED_RATE_SENTINEL {
            if self.prediction_level.is_none() {
                return bad("ev_penetration_rate is -1 but no prediction_level is set");
            }
        } else if (0.0..=1.0).contains(&rate) {
            if self.prediction_level.is_some() {
                return bad("set either a fixed ev_penetration_rate or a prediction_level, not both");
            }
        } else {
            return bad("ev_penetration_rate must lie in [0, 1] or be -1");
        }
        if !(self.load_per_charging_ev > 0.0) {
            return bad("load_per_charging_ev must be positive");
        }
        if !(self.charging_time >= 0.0) || !(self.departure_window >= 0.0) {
            return bad("charging_time and departure_window must be nonnegative");
        }
        if !(self.interval_length > 0.0) {
            return bad("interval_length must be positive");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(self.max_sim_time > 0.0) || !(self.coverage_radius >= 0.0) {
            return bad("max_sim_time must be positive and coverage_radius nonnegative");
        }
        if !(self.source_voltage_pu > 0.0) || !(self.undervoltage_threshold > 0.0) {
            return bad("voltages must be positive");
        }
        if self.evac_edge.is_empty() {
            return bad("evac_edge must be set");
        }
        Ok(())
    }

    /// Output directory of this scenario.
    pub fn run_dir(&self) -> PathBuf {
        self.working_dir.join(&self.scenario_name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentinel_rule() {
        let mut c = ScenarioConfig::example();
        c.validate().unwrap();
        c.prediction_level = None;
        assert!(c.validate().is_err());
        c.ev_penetration_rate = 0.4;
        c.validate().unwrap();
        c.prediction_level = Some(PredictionLevel::High);
        assert!(c.validate().is_err());
        c.prediction_level = None;
        c.ev_penetration_rate = 1.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_uses_parameter_names() {
        let json = r#"{"scenario_name":"s","ev_penetration_rate":-1,"year_prediction":2040,
            "prediction_level":"high","charging_time":3600,"departure_window":0,
            "tazs_to_evacuate":["a"],"evac_edge":"evac"}"#;
        let c: ScenarioConfig = serde_json::from_str(json).unwrap();
        assert_eq!(c.load_per_charging_ev, 7.2);
        assert_eq!(c.interval_length, 900.0);
        assert_eq!(c.prediction_level, Some(PredictionLevel::High));
        c.validate().unwrap();
        assert!(serde_json::from_str::<ScenarioConfig>(&json.replace("evac_edge", "evac_road")).is_err());
    }
}
