//! Run artifacts: the serializable report behind `run.json` and the CSV
//! emitters. Reports carry everything a later `beampattern` invocation
//! needs (scenario echo, trajectory, layouts, per-slot transmit covariance)
//! and nothing nondeterministic.

use isac_core::ao::{AoState, IterationRecord};
use isac_core::metrics::{self, ObjectiveBreakdown};
use isac_core::scenario::{Scenario, ScenarioFile};
use isac_solver::CMat;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub scheme: String,
    pub seed: u64,
    pub eps: f64,
    pub max_outer: usize,
    pub converged: bool,
    pub iterations: usize,
    pub final_objective: f64,
    pub final_sum_rate: f64,
    pub final_total_inv_crb: f64,
    pub rank_one_ratio_min: f64,
    pub rank_one_fallbacks: usize,
    pub scenario: ScenarioFile,
    pub trace: Vec<TraceRow>,
    pub trajectory: Vec<[f64; 2]>,
    pub tx_layouts: Vec<Vec<f64>>,
    pub rx_layouts: Vec<Vec<f64>>,
    /// Per-slot transmit covariance entries as `[re, im]`, row major.
    pub slot_covariance: Vec<Vec<Vec<[f64; 2]>>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub sum_rate: f64,
    pub total_inv_crb: f64,
    pub after_beamforming: f64,
    pub after_tx_array: f64,
    pub after_rx_array: f64,
    pub after_trajectory: f64,
    pub solver_iterations: usize,
    pub rank_one_fallbacks: usize,
    pub warnings: Vec<String>,
}

impl From<&IterationRecord> for TraceRow {
    fn from(r: &IterationRecord) -> Self {
        Self {
            iteration: r.iteration,
            objective: r.objective,
            sum_rate: r.sum_rate,
            total_inv_crb: r.total_inv_crb,
            after_beamforming: r.after_beamforming,
            after_tx_array: r.after_tx_array,
            after_rx_array: r.after_rx_array,
            after_trajectory: r.after_trajectory,
            solver_iterations: r.solver_iterations,
            rank_one_fallbacks: r.rank_one_fallbacks,
            warnings: r.warnings.clone(),
        }
    }
}

fn pack_cov(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn unpack_cov(rows: &[Vec<[f64; 2]>]) -> CMat {
    let n = rows.len();
    CMat::from_fn(n, n, |i, j| num_complex::Complex64::new(rows[i][j][0], rows[i][j][1]))
}

impl RunReport {
    pub fn build(
        scheme: &str,
        seed: u64,
        eps: f64,
        max_outer: usize,
        sc: &Scenario,
        state: &AoState,
        breakdown: &ObjectiveBreakdown,
    ) -> Self {
        let mut ratio_min = 1.0f64;
        let mut fallbacks = 0;
        for rec in &state.trace {
            for &r in &rec.rank_one_ratios {
                ratio_min = ratio_min.min(r);
            }
            fallbacks += rec.rank_one_fallbacks;
        }
        Self {
            scheme: scheme.to_string(),
            seed,
            eps,
            max_outer,
            converged: state.converged,
            iterations: state.iterations,
            final_objective: breakdown.objective,
            final_sum_rate: breakdown.sum_rate,
            final_total_inv_crb: breakdown.total_inv_crb,
            rank_one_ratio_min: ratio_min,
            rank_one_fallbacks: fallbacks,
            scenario: sc.to_config(),
            trace: state.trace.iter().map(TraceRow::from).collect(),
            trajectory: state.trajectory.points.iter().map(|p| [p.x, p.y]).collect(),
            tx_layouts: state.tx_layouts.iter().map(|l| l.coords.clone()).collect(),
            rx_layouts: state.rx_layouts.iter().map(|l| l.coords.clone()).collect(),
            slot_covariance: state
                .beamforming
                .iter()
                .map(|sol| pack_cov(&metrics::tx_covariance(sol)))
                .collect(),
        }
    }

    pub fn save(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join("run.json"), json + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(dir.join("run.json"))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn write_trace_csv(dir: &Path, report: &RunReport) -> anyhow::Result<()> {
    let mut f = std::fs::File::create(dir.join("trace.csv"))?;
    writeln!(f, "iteration,objective,sum_rate,total_inv_crb")?;
    for row in &report.trace {
        writeln!(f, "{},{},{},{}", row.iteration, row.objective, row.sum_rate, row.total_inv_crb)?;
    }
    Ok(())
}

pub fn write_trajectory_csv(dir: &Path, report: &RunReport) -> anyhow::Result<()> {
    let mut f = std::fs::File::create(dir.join("trajectory.csv"))?;
    writeln!(f, "slot,x_m,y_m")?;
    for (n, p) in report.trajectory.iter().enumerate() {
        writeln!(f, "{},{},{}", n + 1, p[0], p[1])?;
    }
    Ok(())
}

pub fn write_metrics_csv(
    dir: &Path,
    breakdown: &ObjectiveBreakdown,
    num_users: usize,
) -> anyhow::Result<()> {
    let mut f = std::fs::File::create(dir.join("metrics.csv"))?;
    let user_cols: Vec<String> = (0..num_users).map(|m| format!("rate_{m}")).collect();
    writeln!(f, "slot,sum_rate,inv_crb,{}", user_cols.join(","))?;
    for n in 0..breakdown.inv_crb.len() {
        let rates = &breakdown.rates[n];
        let sum: f64 = rates.iter().sum();
        let cols: Vec<String> = rates.iter().map(|r| r.to_string()).collect();
        writeln!(f, "{},{},{},{}", n + 1, sum, breakdown.inv_crb[n], cols.join(","))?;
    }
    Ok(())
}
