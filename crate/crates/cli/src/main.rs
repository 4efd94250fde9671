//! `evtcosim`: command-line driver for the co-simulation workflow.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evtcosim_core::adoption::PredictionLevel;
use evtcosim_core::cosim::{self, compare_runs, ResultBundle};
use evtcosim_core::scenario::ScenarioConfig;
use evtcosim_core::synth::{generate_city, CityParams};
use evtcosim_core::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "evtcosim", version, about = "EV charging and evacuation traffic co-simulation")]
struct Cli {
    /// Pick stages from a menu instead of naming a subcommand.
    #[arg(long)]
    interactive: bool,

    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    Small,
    Large,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Level {
    Base,
    Medium,
    High,
    Extreme,
}

impl From<Level> for PredictionLevel {
    fn from(l: Level) -> Self {
        match l {
            Level::Base => PredictionLevel::Base,
            Level::Medium => PredictionLevel::Medium,
            Level::High => PredictionLevel::High,
            Level::Extreme => PredictionLevel::Extreme,
        }
    }
}

/// Flags shared by every subcommand. Each scenario flag overrides the
/// config field of the same name.
#[derive(Debug, Clone, Args)]
struct Common {
    /// Scenario config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    working_dir: Option<PathBuf>,
    /// Random seed (scenario `rng_seed`; city seed for `synth`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    controls: Option<OnOff>,
    /// Power-flow snapshot length (`interval_length`).
    #[arg(long, global = true)]
    interval_seconds: Option<f64>,
    #[arg(long, global = true)]
    preset: Option<Preset>,

    #[arg(long, global = true)]
    scenario_name: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    ev_penetration_rate: Option<f64>,
    #[arg(long, global = true)]
    year_prediction: Option<i32>,
    #[arg(long, global = true)]
    prediction_level: Option<Level>,
    #[arg(long, global = true)]
    load_per_charging_ev: Option<f64>,
    #[arg(long, global = true)]
    charging_time: Option<f64>,
    #[arg(long, global = true)]
    departure_window: Option<f64>,
    /// Comma-separated TAZ ids.
    #[arg(long, global = true, value_delimiter = ',')]
    tazs_to_evacuate: Option<Vec<String>>,
    #[arg(long, global = true)]
    evac_edge: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic city and a scenario config for it.
    Synth,
    /// Link parcels to buses, road edges and TAZs.
    Link,
    /// Predict per-TAZ EV fractions.
    Predict,
    /// Generate vehicles, schedules and the charging series.
    Scenario,
    /// Run the traffic and power simulations.
    Simulate,
    /// Assemble the run report and per-TAZ overload table.
    Report,
    /// Compare two finished runs (b minus a).
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Output directory; defaults to the working directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Every stage, link through report.
    Run,
}

impl Common {
    fn scenario(&self) -> Result<ScenarioConfig> {
        let path = self
            .config
            .as_deref()
            .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
        if !path.is_file() {
            return Err(Error::Config(format!("config file {} not found", path.display())));
        }
        let mut c = ScenarioConfig::load(path)?;
        if let Some(v) = &self.working_dir {
            c.working_dir = v.clone();
        }
        if let Some(v) = self.seed {
            c.rng_seed = v;
        }
        if let Some(v) = self.controls {
            c.controls = v == OnOff::On;
        }
        if let Some(v) = self.interval_seconds {
            c.interval_length = v;
        }
        if let Some(v) = &self.scenario_name {
            c.scenario_name = v.clone();
        }
        if let Some(v) = self.ev_penetration_rate {
            c.ev_penetration_rate = v;
            if v >= 0.0 && self.prediction_level.is_none() {
                c.prediction_level = None;
            }
        }
        if let Some(v) = self.year_prediction {
            c.year_prediction = v;
        }
        if let Some(v) = self.prediction_level {
            c.prediction_level = Some(v.into());
        }
        if let Some(v) = self.load_per_charging_ev {
            c.load_per_charging_ev = v;
        }
        if let Some(v) = self.charging_time {
            c.charging_time = v;
        }
        if let Some(v) = self.departure_window {
            c.departure_window = v;
        }
        if let Some(v) = &self.tazs_to_evacuate {
            // An empty value means no zones.
            c.tazs_to_evacuate = v.iter().filter(|t| !t.is_empty()).cloned().collect();
        }
        if let Some(v) = &self.evac_edge {
            c.evac_edge = v.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

fn synth(common: &Common) -> Result<()> {
    let name = match common.preset.unwrap_or(Preset::Small) {
        Preset::Small => "small",
        Preset::Large => "large",
    };
    let mut params = CityParams::preset(name).expect("known preset");
    if let Some(seed) = common.seed {
        params.seed = seed;
    }
    let out = common.working_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let city = generate_city(&params)?;
    city.write(&out.join("city"))?;
    let config_path = out.join(format!("{name}.json"));
    city.scenario.save(&config_path)?;
    println!(
        "wrote {} buses, {} road edges, {} parcels and {} TAZs to {}; config {}",
        city.grid.buses.len(),
        city.roads.edges.len(),
        city.parcels.len(),
        city.tazs.len(),
        out.join("city").display(),
        config_path.display()
    );
    Ok(())
}

fn print_bundle(bundle: &ResultBundle, dir: &Path) {
    let r = &bundle.run_report;
    println!(
        "{}: {} vehicles ({} EVs, {} on the grid), {} intervals, {} overloads (peak {}), {} undervoltages",
        r.scenario_name,
        r.vehicles,
        r.electric_vehicles,
        r.connected_evs,
        r.intervals,
        r.total_overloads,
        r.peak_overloads,
        r.total_undervoltages
    );
    if let Some(t) = r.total_time_to_evacuate {
        println!("total time to evacuate: {t:.0} s");
    }
    for w in &r.warnings {
        println!("warning: {w}");
    }
    println!("outputs in {}", dir.display());
}

fn run_stage(command: &Command, common: &Common) -> Result<()> {
    match command {
        Command::Synth => synth(common),
        Command::Compare { a, b, out } => {
            let ra = ResultBundle::load(a)?;
            let rb = ResultBundle::load(b)?;
            let report = compare_runs(&ra, &rb)?;
            let out = out
                .clone()
                .or_else(|| common.working_dir.clone())
                .unwrap_or_else(|| PathBuf::from("."));
            evtcosim_core::io::ensure_dir(&out)?;
            report.write(&out)?;
            println!(
                "overload delta {}, undervoltage delta {}, peak overloads {} -> {}",
                report.total_overload_delta,
                report.total_undervoltage_delta,
                report.peak_overloads_a,
                report.peak_overloads_b
            );
            if let (Some(d), Some(p)) = (report.evacuation_time_delta_s, report.evacuation_time_delta_pct) {
                println!("evacuation time delta {d:.0} s ({p:+.2}%)");
            }
            println!("wrote {}", out.join("comparison.csv").display());
            Ok(())
        }
        other => {
            let config = common.scenario()?;
            let dir = config.run_dir();
            match other {
                Command::Link => {
                    let s = cosim::link_stage(&config)?;
                    println!("linked {} parcels with {} vehicles", s.parcels, s.vehicles);
                }
                Command::Predict => {
                    let rows = cosim::predict_stage(&config)?;
                    println!("wrote {} TAZ profiles", rows.len());
                }
                Command::Scenario => {
                    let s = cosim::scenario_stage(&config)?;
                    println!(
                        "{} EVs ({} on the grid) over {} intervals",
                        s.ev_count,
                        s.connected_ev_count,
                        s.len()
                    );
                }
                Command::Simulate => {
                    let (t, p) = cosim::simulate_stage(&config)?;
                    println!(
                        "simulated {} vehicles and {} power intervals",
                        t.routed, p.intervals
                    );
                }
                Command::Report => print_bundle(&cosim::report_stage(&config)?, &dir),
                Command::Run => print_bundle(&cosim::run_scenario(&config)?, &dir),
                Command::Synth | Command::Compare { .. } => unreachable!(),
            }
            Ok(())
        }
    }
}

const MENU: [(&str, fn() -> Command); 6] = [
    ("link parcels", || Command::Link),
    ("predict EV fractions", || Command::Predict),
    ("generate scenario", || Command::Scenario),
    ("run simulations", || Command::Simulate),
    ("build report", || Command::Report),
    ("all of the above", || Command::Run),
];

/// Menu loop: the user picks stages by number until `q` or end of input.
fn interactive(common: &Common) -> Result<()> {
    let stdin = std::io::stdin();
    let mut lines = stdin.lock().lines();
    loop {
        println!("stages:");
        for (i, (label, _)) in MENU.iter().enumerate() {
            println!("  {}) {label}", i + 1);
        }
        print!("choose a stage (q to quit): ");
        std::io::stdout().flush().ok();
        let Some(Ok(line)) = lines.next() else { return Ok(()) };
        let choice = line.trim();
        if choice.eq_ignore_ascii_case("q") {
            return Ok(());
        }
        match choice.parse::<usize>().ok().and_then(|n| MENU.get(n.wrapping_sub(1))) {
            Some((_, make)) => run_stage(&make(), common)?,
            None => println!("unknown choice {choice:?}"),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EVTCOSIM_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.common.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let result = match (&cli.command, cli.interactive) {
        (_, true) => interactive(&cli.common),
        (Some(c), false) => run_stage(c, &cli.common),
        (None, false) => Err(Error::Config("no subcommand given; see --help".into())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let category = e.category();
            eprintln!("error ({category:?}): {e}");
            ExitCode::from(category.exit_code() as u8)
        }
    }
}
