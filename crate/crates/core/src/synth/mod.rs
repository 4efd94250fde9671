//! Synthetic cities: feeders, a Manhattan road grid with one evacuation
//! exit, parcels, TAZs, census tracts and the exogenous adoption series.

mod feeder;
mod series;

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use feeder::{Templates, TEMPLATES_JSON};

use crate::adoption::{
    AgeRow, CurveRow, FleetRow, MarketFile, PredictionLevel, ShareRow, TractRow, AGE_FILE, CURVES_FILE, FLEET_FILE,
    MARKET_FILE, SHARE_FILE, TRACTS_FILE,
};
use crate::grid::{Bus, DistributionNetwork, GridError, PhaseSet, Substation};
use crate::linker::{nearest_bus, Parcel, ParcelRow, Taz, VehicleEstimator};
use crate::powerflow::PowerFlowError;
use crate::scenario::{ScenarioConfig, FIXED_RATE_SENTINEL};
use crate::traffic::{RoadEdge, RoadNetwork, RoadNode, DEFAULT_JAM_DENSITY, DEFAULT_SATURATION_FLOW};

pub const GRID_FILE: &str = "grid.json";
pub const ROADS_FILE: &str = "roads.json";
pub const PARCELS_FILE: &str = "parcels.csv";
pub const TAZS_FILE: &str = "tazs.json";
pub const PARAMS_FILE: &str = "city.json";
pub const EVAC_EDGE: &str = "evac";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible city parameters: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryWeight {
    pub category: String,
    pub subcategory: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityParams {
    pub name: String,
    pub seed: u64,
    pub substations: usize,
    pub feeders_per_substation: usize,
    pub buses_per_feeder: usize,
    /// Road intersections per column and per row.
    pub road_rows: usize,
    pub road_cols: usize,
    /// Meters between adjacent intersections.
    pub block_length: f64,
    pub parcel_count: usize,
    pub taz_rows: usize,
    pub taz_cols: usize,
    pub category_mix: Vec<CategoryWeight>,
    /// Share of the city width, from the west edge, served by the grid.
    pub grid_coverage: f64,
    /// Parcels farther than this from every LV bus add no base load.
    pub coverage_radius: f64,
    pub evac_lanes: u32,
    /// Every n-th row and column is a two-lane arterial.
    pub arterial_every: usize,
    pub year_prediction: i32,
    pub prediction_level: PredictionLevel,
    pub departure_window: f64,
    pub charging_time: f64,
}

fn mix(entries: &[(&str, &str, f64)]) -> Vec<CategoryWeight> {
    entries
        .iter()
        .map(|(c, s, w)| CategoryWeight {
            category: c.to_string(),
            subcategory: s.to_string(),
            weight: *w,
        })
        .collect()
}

fn default_mix() -> Vec<CategoryWeight> {
    mix(&[
        ("RESIDENTIAL", "01-SFR", 0.78),
        ("RESIDENTIAL", "08-DUPLEX/TRIPLEX", 0.08),
        ("APART", "07-APT<5 UNITS", 0.08),
        ("CONDO", "04-CONDO", 0.04),
        ("COMM", "01-SFR", 0.02),
    ])
}

impl CityParams {
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "small" => Some(CityParams {
                name: "small".into(),
                seed: 7,
                substations: 2,
                feeders_per_substation: 3,
                buses_per_feeder: 170,
                road_rows: 13,
                road_cols: 13,
                block_length: 150.0,
                parcel_count: 5350,
                taz_rows: 2,
                taz_cols: 3,
                category_mix: default_mix(),
                grid_coverage: 1.0,
                coverage_radius: 3000.0,
                evac_lanes: 1,
                arterial_every: 4,
                year_prediction: 2040,
                prediction_level: PredictionLevel::Medium,
                departure_window: 7200.0,
                charging_time: 3600.0,
            }),
            "large" => Some(CityParams {
                name: "large".into(),
                seed: 11,
                substations: 4,
                feeders_per_substation: 3,
                buses_per_feeder: 170,
                road_rows: 31,
                road_cols: 51,
                block_length: 250.0,
                parcel_count: 14300,
                taz_rows: 10,
                taz_cols: 10,
                category_mix: default_mix(),
                grid_coverage: 0.5,
                coverage_radius: 3000.0,
                evac_lanes: 2,
                arterial_every: 4,
                year_prediction: 2045,
                prediction_level: PredictionLevel::High,
                departure_window: 28800.0,
                charging_time: 3600.0,
            }),
            _ => None,
        }
    }

    pub fn width(&self) -> f64 {
        (self.road_cols - 1) as f64 * self.block_length
    }

    pub fn height(&self) -> f64 {
        (self.road_rows - 1) as f64 * self.block_length
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Infeasible(m));
        let counts = [
            ("substations", self.substations),
            ("feeders_per_substation", self.feeders_per_substation),
            ("parcel_count", self.parcel_count),
            ("taz_rows", self.taz_rows),
            ("taz_cols", self.taz_cols),
            ("arterial_every", self.arterial_every),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, n)| *n < 1) {
            return bad(format!("{name} must be at least 1"));
        }
        if self.buses_per_feeder < 3 {
            return bad("a feeder needs at least 3 buses (head, regulator, one more)".into());
        }
        if self.road_rows < 2 || self.road_cols < 2 {
            return bad("the road grid needs at least 2 x 2 intersections".into());
        }
        if !(self.block_length > 0.0) || !(self.grid_coverage > 0.0 && self.grid_coverage <= 1.0) {
            return bad("block_length must be positive and grid_coverage in (0, 1]".into());
        }
        if self.evac_lanes < 1 || !(self.coverage_radius >= 0.0) {
            return bad("evac_lanes must be at least 1 and coverage_radius nonnegative".into());
        }
        if self.category_mix.is_empty() || self.category_mix.iter().any(|c| !(c.weight >= 0.0)) {
            return bad("category_mix needs nonnegative weights".into());
        }
        let total: f64 = self.category_mix.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("category_mix weights sum to {total}, not 1"));
        }
        let (cw, ch) = self.feeder_cell_size();
        if cw < MIN_CELL_M || ch < MIN_CELL_M {
            return bad(format!(
                "{} feeders do not fit the road area ({cw:.1} m x {ch:.1} m per feeder)",
                self.substations * self.feeders_per_substation
            ));
        }
        Ok(())
    }

    fn feeder_cell_size(&self) -> (f64, f64) {
        (
            self.width() * self.grid_coverage / self.substations as f64,
            self.height() / self.feeders_per_substation as f64,
        )
    }

    /// Scenario config evacuating every TAZ of this city.
    pub fn scenario_template(&self, tazs: &[Taz]) -> ScenarioConfig {
        let mut c = ScenarioConfig::example();
        c.scenario_name = self.name.clone();
        c.working_dir = ".".into();
        c.data_dir = "city".into();
        c.ev_penetration_rate = FIXED_RATE_SENTINEL;
        c.year_prediction = self.year_prediction;
        c.prediction_level = Some(self.prediction_level);
        c.departure_window = self.departure_window;
        c.charging_time = self.charging_time;
        c.tazs_to_evacuate = tazs.iter().map(|t| t.id.clone()).collect();
        c.evac_edge = EVAC_EDGE.into();
        c.rng_seed = self.seed;
        c.coverage_radius = self.coverage_radius;
        c
    }
}

const MIN_CELL_M: f64 = 50.0;
const PARCEL_MARGIN_M: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

/// Everything one synthetic city consists of.
#[derive(Debug)]
pub struct CityDataset {
    pub params: CityParams,
    pub grid: DistributionNetwork,
    pub roads: RoadNetwork,
    pub parcels: Vec<Parcel>,
    pub tazs: Vec<Taz>,
    pub tracts: Vec<TractRow>,
    pub ages: Vec<AgeRow>,
    pub shares: Vec<ShareRow>,
    pub fleet: Vec<FleetRow>,
    pub curves: Vec<CurveRow>,
    pub market: MarketFile,
    pub scenario: ScenarioConfig,
}

impl CityDataset {
    /// Writes every file of the city into `dir`.
    pub fn write(&self, dir: &Path) -> crate::Result<()> {
        use crate::io::{write_csv, write_json};
        crate::io::ensure_dir(dir)?;
        write_json(&dir.join(PARAMS_FILE), &self.params)?;
        self.grid.write_json(&dir.join(GRID_FILE))?;
        self.roads.write_json(&dir.join(ROADS_FILE))?;
        write_csv(&dir.join(PARCELS_FILE), self.parcels.iter().map(ParcelRow::from))?;
        write_json(&dir.join(TAZS_FILE), &self.tazs)?;
        write_csv(&dir.join(TRACTS_FILE), &self.tracts)?;
        write_csv(&dir.join(AGE_FILE), &self.ages)?;
        write_csv(&dir.join(SHARE_FILE), &self.shares)?;
        write_csv(&dir.join(FLEET_FILE), &self.fleet)?;
        write_csv(&dir.join(CURVES_FILE), &self.curves)?;
        write_json(&dir.join(MARKET_FILE), &self.market)
    }
}

fn road_grid(p: &CityParams) -> RoadNetwork {
    let node = |r: usize, c: usize| format!("n{r:02}_{c:02}");
    let mid = p.road_rows / 2;
    let mut nodes: Vec<RoadNode> = (0..p.road_rows)
        .flat_map(|r| {
            (0..p.road_cols).map(move |c| RoadNode {
                id: node(r, c),
                x: c as f64 * p.block_length,
                y: r as f64 * p.block_length,
            })
        })
        .collect();
    let road = |id: String, from: String, to: String, length: f64, arterial: bool| RoadEdge {
        id,
        from_node: from,
        to_node: to,
        length,
        speed: if arterial { 20.0 } else { 13.4 },
        lanes: if arterial { 2 } else { 1 },
        saturation_flow: DEFAULT_SATURATION_FLOW,
        jam_density: DEFAULT_JAM_DENSITY,
    };
    let mut edges = Vec::new();
    for r in 0..p.road_rows {
        for c in 0..p.road_cols {
            if c + 1 < p.road_cols {
                let art = r % p.arterial_every == 0 || r == mid;
                edges.push(road(format!("h{r:02}_{c:02}e"), node(r, c), node(r, c + 1), p.block_length, art));
                edges.push(road(format!("h{r:02}_{c:02}w"), node(r, c + 1), node(r, c), p.block_length, art));
            }
            if r + 1 < p.road_rows {
                let art = c % p.arterial_every == 0;
                edges.push(road(format!("v{r:02}_{c:02}n"), node(r, c), node(r + 1, c), p.block_length, art));
                edges.push(road(format!("v{r:02}_{c:02}s"), node(r + 1, c), node(r, c), p.block_length, art));
            }
        }
    }
    let exit_len = 500.0;
    nodes.push(RoadNode {
        id: "exit".into(),
        x: p.width() + exit_len,
        y: mid as f64 * p.block_length,
    });
    let mut evac = road(EVAC_EDGE.into(), node(mid, p.road_cols - 1), "exit".into(), exit_len, true);
    evac.lanes = p.evac_lanes;
    edges.push(evac);
    RoadNetwork::new(nodes, edges)
}

fn taz_grid(p: &CityParams) -> Vec<Taz> {
    let (w, h) = (p.width() / p.taz_cols as f64, p.height() / p.taz_rows as f64);
    let mut out = Vec::new();
    for r in 0..p.taz_rows {
        for c in 0..p.taz_cols {
            let k = r * p.taz_cols + c;
            let (x0, y0) = (c as f64 * w, r as f64 * h);
            out.push(Taz {
                id: format!("taz{:03}", k + 1),
                polygon: vec![[x0, y0], [x0 + w, y0], [x0 + w, y0 + h], [x0, y0 + h]],
                census_tract_id: format!("tr{:03}", k / 2 + 1),
                land_area: w * h,
            });
        }
    }
    out
}

fn taz_of(p: &CityParams, x: f64, y: f64) -> usize {
    let c = ((x / p.width() * p.taz_cols as f64) as usize).min(p.taz_cols - 1);
    let r = ((y / p.height() * p.taz_rows as f64) as usize).min(p.taz_rows - 1);
    r * p.taz_cols + c
}

fn scatter_parcels(p: &CityParams, rng: &mut ChaCha8Rng) -> Vec<Parcel> {
    let m = PARCEL_MARGIN_M.min(p.block_length / 4.0);
    let cumulative: Vec<f64> = p
        .category_mix
        .iter()
        .scan(0.0, |acc, c| {
            *acc += c.weight;
            Some(*acc)
        })
        .collect();
    (0..p.parcel_count)
        .map(|i| {
            let x = rng.gen_range(m..p.width() - m);
            let y = rng.gen_range(m..p.height() - m);
            let u: f64 = rng.gen();
            let k = cumulative.iter().position(|c| u < *c).unwrap_or(cumulative.len() - 1);
            let cat = &p.category_mix[k];
            Parcel::new(&format!("p{:05}", i + 1), x, y, &cat.category, &cat.subcategory)
        })
        .collect()
}

/// Builds a complete city. The same parameters always give the same city.
pub fn generate_city(params: &CityParams) -> Result<CityDataset, SynthError> {
    params.validate()?;
    let p = params;
    let templates = Templates::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);

    let roads = road_grid(p);
    let tazs = taz_grid(p);
    let parcels = scatter_parcels(p, &mut rng);
    let estimator = VehicleEstimator::with_defaults();
    let vehicles: Vec<u32> = parcels
        .iter()
        .map(|q| estimator.estimate(&q.id, &q.category, &q.subcategory).vehicles)
        .collect();

    // Feeder layout: one vertical strip per substation, one cell per feeder.
    let (cw, ch) = p.feeder_cell_size();
    let mut skeletons = Vec::new();
    let mut substations = Vec::new();
    for s in 0..p.substations {
        let pos = ((s as f64 + 0.5) * cw, p.height() / 2.0);
        let mut heads = Vec::new();
        for f in 0..p.feeders_per_substation {
            let cell = Rect {
                x0: s as f64 * cw,
                x1: (s + 1) as f64 * cw,
                y0: f as f64 * ch,
                y1: (f + 1) as f64 * ch,
            };
            let id = format!("s{:02}f{:02}", s + 1, f + 1);
            let sk = feeder::skeleton(id, pos, cell, p.buses_per_feeder, &mut rng);
            heads.push(sk.head_id());
            skeletons.push(sk);
        }
        substations.push(Substation {
            id: format!("sub{:02}", s + 1),
            x: pos.0,
            y: pos.1,
            feeder_heads: heads,
        });
    }

    // Households of each LV bus: the vehicles of parcels it would serve.
    let lv_buses: Vec<(Bus, usize, usize)> = skeletons
        .iter()
        .enumerate()
        .flat_map(|(f, sk)| {
            sk.lv.iter().enumerate().map(move |(i, (pos, _, _))| {
                let bus = Bus {
                    id: sk.lv_id(i),
                    feeder_id: sk.feeder_id.clone(),
                    x: pos.0,
                    y: pos.1,
                    phases: PhaseSet::ABC,
                    base_voltage: 1.0,
                    vmin_pu: 0.95,
                    vmax_pu: 1.05,
                };
                (bus, f, i)
            })
        })
        .collect();
    let mut households: Vec<Vec<u32>> = skeletons.iter().map(|sk| vec![0; sk.lv.len()]).collect();
    if !lv_buses.is_empty() {
        let buses: Vec<Bus> = lv_buses.iter().map(|b| b.0.clone()).collect();
        let index: BTreeMap<&str, (usize, usize)> =
            lv_buses.iter().map(|(b, f, i)| (b.id.as_str(), (*f, *i))).collect();
        let nearest: Vec<_> = parcels
            .par_iter()
            .map(|q| nearest_bus(q, &buses).expect("nonempty bus list"))
            .collect();
        for (n, v) in nearest.iter().zip(&vehicles) {
            if n.distance <= p.coverage_radius {
                let (f, i) = index[n.id.as_str()];
                households[f][i] += v;
            }
        }
    }

    let seeds: Vec<u64> = skeletons.iter().map(|_| rng.gen()).collect();
    let feeders: Vec<DistributionNetwork> = skeletons
        .par_iter()
        .zip(&households)
        .zip(&seeds)
        .map(|((sk, h), seed)| {
            let net = feeder::build(sk, h, &templates);
            feeder::calibrate(net, &templates, &mut ChaCha8Rng::seed_from_u64(*seed))
        })
        .collect::<Result<_, _>>()?;
    let mut grid = DistributionNetwork::empty();
    grid.substations = substations;
    for f in feeders {
        grid.buses.extend(f.buses);
        grid.branches.extend(f.branches);
        grid.loads.extend(f.loads);
        grid.capacitors.extend(f.capacitors);
        grid.regulators.extend(f.regulators);
    }

    // Tracts pair consecutive TAZs; households follow parcel vehicles.
    let mut taz_vehicles = vec![0u64; tazs.len()];
    for (q, v) in parcels.iter().zip(&vehicles) {
        taz_vehicles[taz_of(p, q.x, q.y)] += u64::from(*v);
    }
    let mut tracts = Vec::new();
    for (k, pair) in tazs.chunks(2).enumerate() {
        let cars: u64 = (0..pair.len()).map(|j| taz_vehicles[2 * k + j]).sum();
        let median = (rng.gen_range(30_000.0..130_000.0_f64) / 100.0).round() * 100.0;
        let mean = (median * rng.gen_range(1.1..1.3) / 100.0).round() * 100.0;
        tracts.push(TractRow {
            id: format!("tr{:03}", k + 1),
            households: ((cars as f64 / 1.8).round() as u64).max(1),
            median_income: median,
            mean_income: mean,
            land_area_in_study: 1.0,
            taz_ids: pair.iter().map(|t| t.id.as_str()).collect::<Vec<_>>().join(";"),
        });
    }

    let city_vehicles: u64 = vehicles.iter().map(|v| u64::from(*v)).sum();
    let scenario = p.scenario_template(&tazs);
    Ok(CityDataset {
        params: p.clone(),
        grid,
        roads,
        parcels,
        tazs,
        tracts,
        ages: series::age_rows(),
        shares: series::share_rows(),
        fleet: series::fleet_rows(),
        curves: series::curve_rows(),
        market: series::market(city_vehicles),
        scenario,
    })
}
