//! Distribution network data model: substations, feeders, buses, branches,
//! constant-power loads and discrete voltage-control devices.
//!
//! Every feeder is a radial tree hanging off one head bus. Head buses are
//! held at a fixed voltage by the upstream (sub)transmission system, which is
//! not modeled beyond that.

mod complex_serde;
mod feeder;
mod validate;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use feeder::{feeder_partition, BranchModel, FeederTree, TreeBranch, TreeBus, TreeCapacitor, TreeRegulator};
pub use validate::{validate_network, ValidationReport, Violation};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("network failed validation with {} violation(s); first: {}", .0.violations.len(), .0.violations.first().map(|v| v.to_string()).unwrap_or_default())]
    Invalid(ValidationReport),
    #[error("unknown bus id {0:?}")]
    UnknownBus(String),
    #[error("charging load at bus {bus:?} must be finite and non-negative, got {kw}")]
    BadCharging { bus: String, kw: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Phase {
        Phase::ALL[i]
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::A => "A",
            Phase::B => "B",
            Phase::C => "C",
        };
        f.write_str(s)
    }
}

/// Subset of {A, B, C}. Serialized as a string such as `"ABC"` or `"B"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PhaseSet(u8);

impl PhaseSet {
    pub const ABC: PhaseSet = PhaseSet(0b111);

    pub fn single(p: Phase) -> Self {
        PhaseSet(1 << p.index())
    }

    pub fn contains(self, p: Phase) -> bool {
        self.0 & (1 << p.index()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset_of(self, other: PhaseSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = Phase> {
        Phase::ALL.into_iter().filter(move |p| self.contains(*p))
    }
}

impl fmt::Display for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.iter() {
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

impl FromStr for PhaseSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut bits = 0u8;
        for ch in s.chars() {
            let p = match ch.to_ascii_uppercase() {
                'A' => Phase::A,
                'B' => Phase::B,
                'C' => Phase::C,
                other => return Err(format!("invalid phase letter {other:?}")),
            };
            bits |= 1 << p.index();
        }
        Ok(PhaseSet(bits))
    }
}

impl Serialize for PhaseSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PhaseSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub type PhaseMatrix = [[Complex64; 3]; 3];

fn default_vmin() -> f64 {
    0.95
}

fn default_vmax() -> f64 {
    1.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: String,
    pub feeder_id: String,
    /// Planar coordinates in meters.
    pub x: f64,
    pub y: f64,
    pub phases: PhaseSet,
    /// Line-to-neutral base voltage in volts.
    pub base_voltage: f64,
    #[serde(default = "default_vmin")]
    pub vmin_pu: f64,
    #[serde(default = "default_vmax")]
    pub vmax_pu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TapRange {
    pub step_count: u32,
    pub step_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BranchKind {
    /// Series phase-impedance matrix in ohms.
    Line {
        #[serde(with = "complex_serde::matrix3")]
        impedance: PhaseMatrix,
    },
    /// Ideal transformer with per-phase tap followed by a series impedance,
    /// in ohms referred to the `to_bus` side.
    Transformer {
        #[serde(with = "complex_serde::array3")]
        impedance: [Complex64; 3],
        #[serde(default = "unity_taps")]
        tap: [f64; 3],
        #[serde(default)]
        tap_range: Option<TapRange>,
    },
}

fn unity_taps() -> [f64; 3] {
    [1.0; 3]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: String,
    pub from_bus: String,
    pub to_bus: String,
    #[serde(flatten)]
    pub kind: BranchKind,
    /// Normal current limit in amps. Transformers are rated on the `to_bus` side.
    pub i_rated: f64,
}

impl Branch {
    pub fn is_transformer(&self) -> bool {
        matches!(self.kind, BranchKind::Transformer { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadKind {
    Base,
    EvCharging,
}

/// Constant-power wye load, indexed by phase A/B/C.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub bus_id: String,
    pub phase_kw: [f64; 3],
    pub phase_kvar: [f64; 3],
    pub kind: LoadKind,
}

impl Load {
    pub fn total_kw(&self) -> f64 {
        self.phase_kw.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capacitor {
    pub id: String,
    pub bus_id: String,
    /// Rated kvar per phase at nominal voltage.
    pub kvar_per_phase: f64,
    pub switched_on: bool,
    pub v_on_pu: f64,
    pub v_off_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regulator {
    pub branch_id: String,
    pub regulated_bus: String,
    pub target_pu: f64,
    pub band_pu: f64,
    pub step_count: u32,
    pub step_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Substation {
    pub id: String,
    pub x: f64,
    pub y: f64,
    /// Head bus of every feeder leaving this substation.
    pub feeder_heads: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionNetwork {
    pub format_version: u32,
    /// Label of the fixed-voltage transmission interface.
    pub source_bus: String,
    #[serde(default)]
    pub substations: Vec<Substation>,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    #[serde(default)]
    pub loads: Vec<Load>,
    #[serde(default)]
    pub capacitors: Vec<Capacitor>,
    #[serde(default)]
    pub regulators: Vec<Regulator>,
}

impl DistributionNetwork {
    pub fn empty() -> Self {
        DistributionNetwork {
            format_version: FORMAT_VERSION,
            source_bus: "source".into(),
            substations: Vec::new(),
            buses: Vec::new(),
            branches: Vec::new(),
            loads: Vec::new(),
            capacitors: Vec::new(),
            regulators: Vec::new(),
        }
    }

    pub fn bus(&self, id: &str) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn load_kw(&self, kind: LoadKind) -> f64 {
        self.loads
            .iter()
            .filter(|l| l.kind == kind)
            .map(Load::total_kw)
            .sum()
    }

    pub fn from_json_str(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    pub fn read_json(path: &Path) -> crate::Result<Self> {
        crate::io::read_json(path)
    }

    pub fn write_json(&self, path: &Path) -> crate::Result<()> {
        crate::io::write_json(path, self)
    }
}

/// Replaces all EV charging loads with one constant-power, unity power
/// factor load per bus in `charging` (kW), split equally over the bus phases.
pub fn apply_charging_loads(
    net: &DistributionNetwork,
    charging: &BTreeMap<String, f64>,
) -> Result<DistributionNetwork, GridError> {
    let bus_ids: HashSet<&str> = net.buses.iter().map(|b| b.id.as_str()).collect();
    for (bus, kw) in charging {
        if !bus_ids.contains(bus.as_str()) {
            return Err(GridError::UnknownBus(bus.clone()));
        }
        if !kw.is_finite() || *kw < 0.0 {
            return Err(GridError::BadCharging {
                bus: bus.clone(),
                kw: *kw,
            });
        }
    }

    let mut out = net.clone();
    out.loads.retain(|l| l.kind != LoadKind::EvCharging);
    for (bus_id, &kw) in charging {
        if kw == 0.0 {
            continue;
        }
        let phases = net.bus(bus_id).map(|b| b.phases).unwrap_or(PhaseSet::ABC);
        let share = kw / phases.len() as f64;
        let mut phase_kw = [0.0; 3];
        for p in phases.iter() {
            phase_kw[p.index()] = share;
        }
        out.loads.push(Load {
            bus_id: bus_id.clone(),
            phase_kw,
            phase_kvar: [0.0; 3],
            kind: LoadKind::EvCharging,
        });
    }
    Ok(out)
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn phase_set_round_trips_through_strings() {
        let p: PhaseSet = "CA".parse().unwrap();
        assert_eq!(p.to_string(), "AC");
        assert_eq!(p.len(), 2);
        assert!("AX".parse::<PhaseSet>().is_err());
    }

    #[test]
    fn empty_charging_map_is_identity() {
        let net = chain3();
        let out = apply_charging_loads(&net, &BTreeMap::new()).unwrap();
        assert_eq!(out, net);
    }

    #[test]
    fn two_vehicles_split_over_phases() {
        let net = chain3();
        let charging = BTreeMap::from([("b2".to_string(), 2.0 * 7.2)]);
        let out = apply_charging_loads(&net, &charging).unwrap();
        let ev: Vec<_> = out
            .loads
            .iter()
            .filter(|l| l.kind == LoadKind::EvCharging)
            .collect();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].bus_id, "b2");
        for kw in ev[0].phase_kw {
            assert!((kw - 4.8).abs() < 1e-12);
        }
        assert_eq!(ev[0].phase_kvar, [0.0; 3]);
        assert_eq!(out.load_kw(LoadKind::Base), net.load_kw(LoadKind::Base));
        assert!((out.load_kw(LoadKind::EvCharging) - 14.4).abs() < 1e-12);
    }

    #[test]
    fn charging_replacement_is_idempotent() {
        let net = chain3();
        let charging = BTreeMap::from([("b2".to_string(), 7.2), ("b3".to_string(), 21.6)]);
        let once = apply_charging_loads(&net, &charging).unwrap();
        let twice = apply_charging_loads(&once, &charging).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn charging_at_unknown_bus_is_rejected() {
        let net = chain3();
        let charging = BTreeMap::from([("nope".to_string(), 7.2)]);
        assert!(matches!(
            apply_charging_loads(&net, &charging),
            Err(GridError::UnknownBus(b)) if b == "nope"
        ));
    }

    #[test]
    fn network_json_round_trip() {
        let mut net = chain3();
        net.branches.push(Branch {
            id: "t1".into(),
            from_bus: "b3".into(),
            to_bus: "b4".into(),
            kind: BranchKind::Transformer {
                impedance: [Complex64::new(0.01, 0.03); 3],
                tap: [1.0, 1.0125, 0.99375],
                tap_range: Some(TapRange {
                    step_count: 16,
                    step_size: 0.00625,
                }),
            },
            i_rated: 50.0,
        });
        let s = serde_json::to_string(&net).unwrap();
        assert!(s.contains("\"kind\":\"transformer\""));
        assert!(s.contains("\"phases\":\"ABC\""));
        let back = DistributionNetwork::from_json_str(&s).unwrap();
        assert_eq!(back, net);
    }
}
