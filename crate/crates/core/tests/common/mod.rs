//! Independent oracles and shared fixtures for the integration tests.
#![allow(dead_code)]

pub mod nodal;
pub mod spatial;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use evtcosim_core::adoption::PredictionLevel;
use evtcosim_core::cosim::{run_scenario, ResultBundle};
use evtcosim_core::scenario::ScenarioConfig;
use evtcosim_core::synth::{generate_city, CityDataset, CityParams};
use evtcosim_core::traffic::RoadNetwork;
use tempfile::TempDir;

pub struct City {
    _dir: TempDir,
    pub root: PathBuf,
    pub data: CityDataset,
}

impl City {
    pub fn generate(preset: &str) -> City {
        let dir = tempfile::tempdir().expect("tempdir");
        let root = dir.path().to_path_buf();
        let data = generate_city(&CityParams::preset(preset).expect("preset")).expect("synth");
        data.write(&root.join("city")).expect("write city");
        City { _dir: dir, root, data }
    }

    /// The generated scenario, pointed at this city's directories.
    pub fn config(&self, name: &str) -> ScenarioConfig {
        let mut c = self.data.scenario.clone();
        c.scenario_name = name.into();
        c.working_dir = self.root.join("runs");
        c.data_dir = self.root.join("city");
        c
    }
}

/// The "small" preset city, generated once per test binary.
pub fn small_city() -> &'static City {
    static CITY: OnceLock<City> = OnceLock::new();
    CITY.get_or_init(|| City::generate("small"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Variant {
    pub level: PredictionLevel,
    pub spread: bool,
    pub controls: bool,
}

impl Variant {
    pub fn name(&self) -> String {
        format!(
            "{}_{}_{}",
            self.level.name(),
            if self.spread { "spread" } else { "burst" },
            if self.controls { "on" } else { "off" }
        )
    }
}

/// Small-preset run for one variant, computed at most once per test binary
/// even when several tests ask for it concurrently.
pub fn small_run(v: Variant) -> Arc<ResultBundle> {
    type Slot = Arc<OnceLock<Arc<ResultBundle>>>;
    static RUNS: OnceLock<Mutex<HashMap<Variant, Slot>>> = OnceLock::new();
    let slot = RUNS
        .get_or_init(Default::default)
        .lock()
        .unwrap()
        .entry(v)
        .or_default()
        .clone();
    slot.get_or_init(|| {
        let city = small_city();
        let mut c = city.config(&v.name());
        c.prediction_level = Some(v.level);
        c.controls = v.controls;
        if !v.spread {
            c.departure_window = 0.0;
        }
        Arc::new(run_scenario(&c).expect("scenario run"))
    })
    .clone()
}

/// Every file below `dir`, relative path to bytes, sorted by path.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("read_dir") {
            let path = entry.expect("entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_path_buf();
                out.push((rel, std::fs::read(&path).expect("read")));
            }
        }
    }
    out.sort();
    out
}

/// Minimum route cost by depth-first enumeration of every simple edge path
/// (no node visited twice), the exhaustive oracle for routing.
pub fn brute_force_route_cost(net: &RoadNetwork, origin: &str, dest: &str) -> Option<f64> {
    let by_id: HashMap<&str, usize> = net.edges.iter().enumerate().map(|(i, e)| (e.id.as_str(), i)).collect();
    let start = by_id[origin];
    let goal = by_id[dest];
    let cost = |i: usize| net.edges[i].length / net.edges[i].speed;
    if start == goal {
        return Some(cost(start));
    }

    fn dfs(
        net: &RoadNetwork,
        at: usize,
        goal: usize,
        acc: f64,
        visited: &mut Vec<String>,
        best: &mut Option<f64>,
    ) {
        let e = &net.edges[at];
        let here = acc + e.length / e.speed;
        if at == goal {
            if best.map_or(true, |b| here < b) {
                *best = Some(here);
            }
            return;
        }
        for (i, next) in net.edges.iter().enumerate() {
            if next.from_node == e.to_node && !visited.contains(&next.to_node) {
                visited.push(next.to_node.clone());
                dfs(net, i, goal, here, visited, best);
                visited.pop();
            }
        }
    }

    let first = &net.edges[start];
    let mut visited = vec![first.from_node.clone(), first.to_node.clone()];
    let mut best = None;
    dfs(net, start, goal, 0.0, &mut visited, &mut best);
    best
}

/// Severity bucket by direct comparison with the edges, written without
/// reference to the library classifier. Index 0..3 for "<10%" .. ">100%".
pub fn bucket_oracle(severity: f64) -> Option<usize> {
    if !(severity > 0.0) {
        None
    } else if severity <= 0.10 {
        Some(0)
    } else if severity <= 0.50 {
        Some(1)
    } else if severity <= 1.00 {
        Some(2)
    } else {
        Some(3)
    }
}
