//! Experiment runner for the movable-antenna UAV ISAC pipeline.
//!
//! Subcommands: `run` (one scheme, full artifacts), `sweep` (final metrics
//! versus one scan axis for a list of schemes), `beampattern` (spatial gain
//! grid from saved run artifacts), and `verify` (the independent oracle
//! suite). All outputs are deterministic for fixed inputs and seeds; timing
//! goes to stderr only.

mod report;
mod verify;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use isac_core::ao::{self, AoOptions};
use isac_core::baselines::{self, PsoOptions};
use isac_core::scenario::{Scenario, ScenarioFile};
use isac_core::{load_scenario, metrics};
use nalgebra::Vector2;
use rayon::prelude::*;
use report::RunReport;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "isac", version, about = "UAV ISAC experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scheme {
    Proposed,
    Fpa,
    Rpa,
    Pso,
    SensingOnly,
    CommOnly,
}

impl Scheme {
    fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Fpa => "fpa",
            Scheme::Rpa => "rpa",
            Scheme::Pso => "pso",
            Scheme::SensingOnly => "sensing-only",
            Scheme::CommOnly => "comm-only",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Axis {
    Power,
    Antennas,
    Altitude,
    Weight,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::Power => "power",
            Axis::Antennas => "antennas",
            Axis::Altitude => "altitude",
            Axis::Weight => "weight",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scheme on a scenario and write trace/trajectory/metrics/report.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum)]
        scheme: Scheme,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        #[arg(long, default_value_t = 50)]
        max_outer: usize,
        #[arg(long, default_value_t = 20)]
        pso_swarm: usize,
        #[arg(long, default_value_t = 30)]
        pso_iters: usize,
    },
    /// Scan one axis for a list of schemes; one CSV row per (scheme, value).
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated axis values (dBm for power, count for antennas,
        /// meters for altitude, weight in [0,1]).
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = vec![Scheme::Proposed])]
        schemes: Vec<Scheme>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        #[arg(long, default_value_t = 50)]
        max_outer: usize,
        #[arg(long, default_value_t = 20)]
        pso_swarm: usize,
        #[arg(long, default_value_t = 30)]
        pso_iters: usize,
    },
    /// Evaluate the transmit beampattern of a finished run on a ground grid.
    Beampattern {
        /// Directory holding run.json from a previous `run`.
        #[arg(long)]
        run: PathBuf,
        /// 1-based slot index.
        #[arg(long)]
        slot: usize,
        /// Grid as xmin,xmax,ymin,ymax,step (meters).
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
        /// Output CSV path; defaults to `<run>/beampattern_slot<N>.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the independent oracle suite; nonzero exit on any violation.
    Verify {
        /// Scenario file; defaults to the bundled small scenario.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        mc_samples: usize,
    },
}

fn init_workers() {
    if let Ok(v) = std::env::var("ISAC_WORKERS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
    }
}

fn apply_scheme_weights(sc: &mut Scenario, scheme: Scheme) {
    match scheme {
        Scheme::SensingOnly => {
            sc.xi_c = 0.0;
            sc.xi_s = 1.0;
        }
        Scheme::CommOnly => {
            sc.xi_c = 1.0;
            sc.xi_s = 0.0;
        }
        _ => {}
    }
}

fn execute_scheme(
    sc: &Scenario,
    scheme: Scheme,
    seed: u64,
    opts: &AoOptions,
    pso: &PsoOptions,
) -> Result<ao::AoState, ao::PipelineError> {
    let mut sc = sc.clone();
    apply_scheme_weights(&mut sc, scheme);
    match scheme {
        Scheme::Fpa => baselines::run_fpa(&sc, opts),
        Scheme::Rpa => baselines::run_rpa(&sc, seed, opts),
        Scheme::Pso => baselines::run_pso(&sc, pso, seed, opts),
        _ => ao::run(&sc, opts),
    }
}

fn cmd_run(
    scenario: &Path,
    scheme: Scheme,
    seed: u64,
    out: &Path,
    eps: f64,
    max_outer: usize,
    pso: &PsoOptions,
) -> anyhow::Result<()> {
    let started = std::time::Instant::now();
    let mut sc = load_scenario(scenario).context("loading scenario")?;
    apply_scheme_weights(&mut sc, scheme);
    let opts = AoOptions { eps, max_outer, ..AoOptions::default() };
    let state = execute_scheme(&sc, scheme, seed, &opts, pso)?;
    let breakdown = state.objective(&sc)?;

    std::fs::create_dir_all(out)?;
    let report = RunReport::build(scheme.name(), seed, eps, max_outer, &sc, &state, &breakdown);
    report.save(out)?;
    report::write_trace_csv(out, &report)?;
    report::write_trajectory_csv(out, &report)?;
    report::write_metrics_csv(out, &breakdown, sc.num_users())?;
    eprintln!(
        "{} finished in {:.1} s: objective {:.6e} after {} iterations (converged: {})",
        scheme.name(),
        started.elapsed().as_secs_f64(),
        breakdown.objective,
        state.iterations,
        state.converged
    );
    Ok(())
}

fn scenario_with_axis(base: &ScenarioFile, axis: Axis, value: f64) -> anyhow::Result<Scenario> {
    let mut file = base.clone();
    match axis {
        Axis::Power => file.radio.pmax_dbm = value,
        Axis::Antennas => {
            let n = value.round() as usize;
            if n == 0 || (value - n as f64).abs() > 1e-9 {
                bail!("antenna count must be a positive integer, got {value}");
            }
            file.arrays.n_tx = n;
            file.arrays.n_rx = n;
        }
        Axis::Altitude => file.geometry.altitude_m = value,
        Axis::Weight => {
            file.objective.xi_c = value;
            file.objective.xi_s = None;
        }
    }
    Ok(Scenario::from_config(&file)?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    scenario: &Path,
    axis: Axis,
    values: &[f64],
    schemes: &[Scheme],
    seed: u64,
    out: &Path,
    eps: f64,
    max_outer: usize,
    pso: &PsoOptions,
) -> anyhow::Result<()> {
    if values.is_empty() {
        bail!("sweep needs at least one value");
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        bail!("sweep values must be strictly increasing");
    }
    let base = load_scenario(scenario)?.to_config();

    let mut points = Vec::new();
    for &scheme in schemes {
        for &value in values {
            points.push((scheme, value));
        }
    }
    let opts = AoOptions { eps, max_outer, ..AoOptions::default() };
    let rows: Vec<String> = points
        .par_iter()
        .map(|&(scheme, value)| {
            let started = std::time::Instant::now();
            let outcome = scenario_with_axis(&base, axis, value).and_then(|mut sc| {
                apply_scheme_weights(&mut sc, scheme);
                let state = execute_scheme(&sc, scheme, seed, &opts, pso)?;
                let bd = state.objective(&sc)?;
                Ok((state, bd))
            });
            let row = match outcome {
                Ok((state, bd)) => format!(
                    "{},{},{},{},{},{},{}",
                    scheme.name(),
                    value,
                    bd.objective,
                    bd.sum_rate,
                    bd.total_inv_crb,
                    state.iterations,
                    if state.converged { "converged" } else { "max-outer" }
                ),
                Err(e) => format!(
                    "{},{},,,,,error: {}",
                    scheme.name(),
                    value,
                    e.to_string().replace(',', ";")
                ),
            };
            eprintln!(
                "sweep point {} {}={} done in {:.1} s",
                scheme.name(),
                axis.name(),
                value,
                started.elapsed().as_secs_f64()
            );
            row
        })
        .collect();

    std::fs::create_dir_all(out)?;
    let path = out.join(format!("sweep_{}.csv", axis.name()));
    let mut f = std::fs::File::create(&path)?;
    writeln!(f, "scheme,value,objective,sum_rate,total_inv_crb,outer_iters,status")?;
    for row in rows {
        writeln!(f, "{row}")?;
    }
    Ok(())
}

fn cmd_beampattern(run: &Path, slot: usize, grid: &[f64], out: Option<PathBuf>) -> anyhow::Result<()> {
    if grid.len() != 5 {
        bail!("--grid expects xmin,xmax,ymin,ymax,step");
    }
    let (xmin, xmax, ymin, ymax, step) = (grid[0], grid[1], grid[2], grid[3], grid[4]);
    if step <= 0.0 || xmax < xmin || ymax < ymin {
        bail!("degenerate grid specification");
    }
    let report = RunReport::load(run).context("loading run.json")?;
    let sc = Scenario::from_config(&report.scenario)?;
    if slot == 0 || slot > report.slot_covariance.len() {
        bail!("run has no slot {slot} (1..={})", report.slot_covariance.len());
    }
    let n0 = slot - 1;
    let iv = sc.interval_of_slot0(n0);
    let tx = isac_core::ArrayLayout::new(report.tx_layouts[iv].clone(), isac_core::ArrayKind::Transmit);
    let cov = report::unpack_cov(&report.slot_covariance[n0]);
    let uav = Vector2::new(report.trajectory[n0][0], report.trajectory[n0][1]);

    let path = out.unwrap_or_else(|| run.join(format!("beampattern_slot{slot}.csv")));
    let mut f = std::fs::File::create(&path)?;
    writeln!(f, "x_m,y_m,gain_linear,gain_db")?;
    let nx = ((xmax - xmin) / step).floor() as usize;
    let ny = ((ymax - ymin) / step).floor() as usize;
    for i in 0..=nx {
        for j in 0..=ny {
            let p = Vector2::new(xmin + i as f64 * step, ymin + j as f64 * step);
            let g = metrics::beampattern_gain_of_cov(&tx, &cov, &uav, sc.altitude, &p, sc.wavelength);
            writeln!(f, "{},{},{},{}", p.x, p.y, g, 10.0 * g.max(1e-300).log10())?;
        }
    }
    Ok(())
}

fn main() {
    init_workers();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { scenario, scheme, seed, out, eps, max_outer, pso_swarm, pso_iters } => {
            let pso = PsoOptions { swarm: pso_swarm, iters: pso_iters, ..PsoOptions::default() };
            match cmd_run(&scenario, scheme, seed, &out, eps, max_outer, &pso) {
                Ok(()) => 0,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    1
                }
            }
        }
        Command::Sweep {
            scenario,
            axis,
            values,
            schemes,
            seed,
            out,
            eps,
            max_outer,
            pso_swarm,
            pso_iters,
        } => {
            let pso = PsoOptions { swarm: pso_swarm, iters: pso_iters, ..PsoOptions::default() };
            match cmd_sweep(&scenario, axis, &values, &schemes, seed, &out, eps, max_outer, &pso) {
                Ok(()) => 0,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    1
                }
            }
        }
        Command::Beampattern { run, slot, grid, out } => {
            match cmd_beampattern(&run, slot, &grid, out) {
                Ok(()) => 0,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    1
                }
            }
        }
        Command::Verify { scenario, trials, seed, mc_samples } => {
            match verify::cmd_verify(scenario.as_deref(), trials, seed, mc_samples) {
                Ok(true) => 0,
                Ok(false) => 1,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    1
                }
            }
        }
    };
    std::process::exit(code);
}
