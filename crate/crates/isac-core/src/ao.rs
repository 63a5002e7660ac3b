//! Alternating optimization over the four variable blocks: per-slot
//! beamforming, per-interval transmit positions, closed-form receive
//! positions, and the trajectory, in that order, with auxiliary updates
//! before each of the first two. The exact weighted objective is recomputed
//! after every sub-step for the monotonicity bookkeeping.

use crate::beamforming::{self, FpAuxiliaries, SlotContext};
use crate::channel::{self, ChannelStats};
use crate::metrics::{self, BeamformingSolution, MetricsError, ObjectiveBreakdown};
use crate::rxarray;
use crate::scenario::{ArrayKind, ArrayLayout, Scenario, ScenarioError};
use crate::trajectory::{self, Trajectory};
use crate::txarray::{self, TxIntervalContext};
use isac_solver::{CMat, SolveOptions, SolverError};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("solver failed during {step} (outer iteration {iteration}): {source}")]
    Solver {
        step: &'static str,
        iteration: usize,
        #[source]
        source: SolverError,
    },
}

/// Driver configuration. `eps` is relative to `max(1, |objective|)`.
#[derive(Debug, Clone)]
pub struct AoOptions {
    pub eps: f64,
    pub max_outer: usize,
    pub solver: SolveOptions,
    /// Auxiliary-update + solve rounds per outer iteration for the
    /// beamforming and position blocks.
    pub inner_rounds: usize,
    pub optimize_tx_positions: bool,
    pub optimize_rx_positions: bool,
}

impl Default for AoOptions {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            max_outer: 50,
            solver: SolveOptions::default(),
            inner_rounds: 1,
            optimize_tx_positions: true,
            optimize_rx_positions: true,
        }
    }
}

/// Tolerances for the monotonicity bookkeeping, relative to
/// `max(1, |objective|)`.
const SUBSTEP_TOL: f64 = 1e-6;
const END_TO_END_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub sum_rate: f64,
    pub total_inv_crb: f64,
    pub after_beamforming: f64,
    pub after_tx_array: f64,
    pub after_rx_array: f64,
    pub after_trajectory: f64,
    /// Newton iterations spent across all solves this outer iteration.
    pub solver_iterations: usize,
    /// Dominant-eigenvalue ratios of every lifted matrix solved this
    /// iteration.
    pub rank_one_ratios: Vec<f64>,
    pub rank_one_fallbacks: usize,
    pub warnings: Vec<String>,
}

/// Full iterate of the alternating loop.
#[derive(Debug, Clone)]
pub struct AoState {
    pub trajectory: Trajectory,
    pub tx_layouts: Vec<ArrayLayout>,
    pub rx_layouts: Vec<ArrayLayout>,
    pub beamforming: Vec<BeamformingSolution>,
    pub fp: FpAuxiliaries,
    pub trace: Vec<IterationRecord>,
    pub iterations: usize,
    pub converged: bool,
}

impl AoState {
    pub fn objective(&self, sc: &Scenario) -> Result<ObjectiveBreakdown, MetricsError> {
        metrics::evaluate_objective(
            sc,
            &self.trajectory.points,
            &self.tx_layouts,
            &self.rx_layouts,
            &self.beamforming,
        )
    }

    /// Every structural invariant of the iterate.
    pub fn validate(&self, sc: &Scenario) -> Result<(), String> {
        self.trajectory.validate(sc).map_err(|e| e.to_string())?;
        for l in self.tx_layouts.iter().chain(&self.rx_layouts) {
            l.validate(sc.d_min, sc.segment_len).map_err(|e| e.to_string())?;
        }
        for (n, sol) in self.beamforming.iter().enumerate() {
            sol.validate(sc.pmax).map_err(|e| format!("slot {n}: {e}"))?;
        }
        Ok(())
    }
}

/// Channel summaries for every (slot, user) pair at the given geometry.
fn all_stats(sc: &Scenario, traj: &Trajectory, tx_layouts: &[ArrayLayout]) -> Vec<Vec<ChannelStats>> {
    (0..sc.slots)
        .map(|n| {
            let iv = sc.interval_of_slot0(n);
            sc.users
                .iter()
                .map(|u| channel::channel_stats(sc, &traj.points[n], u, &tx_layouts[iv]))
                .collect()
        })
        .collect()
}

/// Starting iterate: straight-line trajectory, uniform transmit array,
/// closed-form receive array, equal-power MRT beamforming with no dedicated
/// sensing signal, auxiliaries from one update pass.
pub fn initialize(sc: &Scenario) -> Result<AoState, PipelineError> {
    sc.validate()?;
    let trajectory = Trajectory::straight_line(sc);
    let tx_layouts =
        vec![ArrayLayout::ula(sc.n_tx, sc.d_min, sc.segment_len, ArrayKind::Transmit); sc.intervals];
    let rx_layouts = vec![rxarray::optimal_rx_positions(sc.n_rx, sc.d_min, sc.segment_len)?; sc.intervals];

    let users = sc.num_users();
    let mut beamforming = Vec::with_capacity(sc.slots);
    for n in 0..sc.slots {
        let iv = sc.interval_of_slot0(n);
        if users == 0 {
            // no one to serve: all power to the sensing covariance
            let mut sol = BeamformingSolution::zeros(0, sc.n_tx);
            sol.r0 = CMat::identity(sc.n_tx, sc.n_tx)
                * Complex64::new(sc.pmax / sc.n_tx as f64, 0.0);
            beamforming.push(sol);
            continue;
        }
        let share = sc.pmax / users as f64;
        let vecs: Vec<_> = (0..users)
            .map(|m| {
                let stats =
                    channel::channel_stats(sc, &trajectory.points[n], &sc.users[m], &tx_layouts[iv]);
                &stats.hbar * Complex64::new((share / stats.hbar.norm_squared()).sqrt(), 0.0)
            })
            .collect();
        beamforming.push(BeamformingSolution::from_vectors(vecs, sc.n_tx));
    }

    let stats = all_stats(sc, &trajectory, &tx_layouts);
    let fp = FpAuxiliaries::update_all(sc, &stats, &beamforming);
    let state = AoState {
        trajectory,
        tx_layouts,
        rx_layouts,
        beamforming,
        fp,
        trace: Vec::new(),
        iterations: 0,
        converged: false,
    };
    state.validate(sc).map_err(ScenarioError::Invariant)?;
    Ok(state)
}

/// Run the alternating loop from a given iterate until the objective
/// increase falls below `eps` (relative) or the iteration cap is hit.
pub fn run_from(sc: &Scenario, mut state: AoState, opts: &AoOptions) -> Result<AoState, PipelineError> {
    let mut prev = state.objective(sc)?.objective;
    for iteration in 1..=opts.max_outer {
        let mut warnings = Vec::new();
        let mut solver_iterations = 0;
        let mut rank_one_ratios = Vec::new();
        let mut rank_one_fallbacks = 0;

        let rel = |v: f64| v.abs().max(1.0);

        // auxiliary update + per-slot beamforming
        for _ in 0..opts.inner_rounds {
            let stats = all_stats(sc, &state.trajectory, &state.tx_layouts);
            state.fp = FpAuxiliaries::update_all(sc, &stats, &state.beamforming);
            for n in 0..sc.slots {
                let iv = sc.interval_of_slot0(n);
                let q = &state.trajectory.points[n];
                let theta_t = channel::elevation_angle(q, &sc.target, sc.altitude);
                let dist_t = channel::link_distance(q, &sc.target, sc.altitude);
                let sens_weight = metrics::alpha_factor(sc, theta_t, dist_t)
                    * metrics::tss(&state.rx_layouts[iv].coords);
                let steer_t =
                    channel::steering(&state.tx_layouts[iv].coords, theta_t, sc.wavelength);
                let ctx = SlotContext {
                    sc,
                    stats: &stats[n],
                    steer_t: &steer_t,
                    sens_weight,
                    omega: &state.fp.omega[n],
                    varpi: &state.fp.varpi[n],
                    prev: &state.beamforming[n],
                };
                let (sol, report, ratios) =
                    beamforming::solve_p22(&ctx, &opts.solver).map_err(|source| {
                        PipelineError::Solver { step: "beamforming", iteration, source }
                    })?;
                solver_iterations += report.iterations;
                for &r in &ratios {
                    if r < beamforming::RANK_ONE_THRESHOLD {
                        rank_one_fallbacks += 1;
                    }
                }
                rank_one_ratios.extend(ratios);
                state.beamforming[n] = sol;
            }
        }
        let after_beamforming = state.objective(sc)?.objective;
        if after_beamforming < prev - SUBSTEP_TOL * rel(prev) {
            warnings.push(format!(
                "beamforming step decreased the objective: {prev} -> {after_beamforming}"
            ));
        }

        // auxiliary update + per-interval transmit positions
        let mut after_tx_array = after_beamforming;
        if opts.optimize_tx_positions {
            for _ in 0..opts.inner_rounds {
                let stats = all_stats(sc, &state.trajectory, &state.tx_layouts);
                state.fp = FpAuxiliaries::update_all(sc, &stats, &state.beamforming);
                for interval0 in 0..sc.intervals {
                    let ctx = TxIntervalContext {
                        sc,
                        interval0,
                        prev: &state.tx_layouts[interval0],
                        rx_layout: &state.rx_layouts[interval0],
                        trajectory: &state.trajectory.points,
                        sols: &state.beamforming,
                        fp: &state.fp,
                    };
                    let (layout, report, _) =
                        txarray::solve_p32(&ctx, &opts.solver).map_err(|source| {
                            PipelineError::Solver { step: "tx-array", iteration, source }
                        })?;
                    solver_iterations += report.iterations;
                    state.tx_layouts[interval0] = layout;
                }
            }
            after_tx_array = state.objective(sc)?.objective;
            if after_tx_array < after_beamforming - SUBSTEP_TOL * rel(after_beamforming) {
                warnings.push(format!(
                    "tx-array step decreased the objective: {after_beamforming} -> {after_tx_array}"
                ));
            }
        }

        // closed-form receive placement (its optimum is state-independent,
        // recomputed anyway to keep the loop uniform)
        let mut after_rx_array = after_tx_array;
        if opts.optimize_rx_positions {
            let rx = rxarray::optimal_rx_positions(sc.n_rx, sc.d_min, sc.segment_len)?;
            for l in state.rx_layouts.iter_mut() {
                *l = rx.clone();
            }
            after_rx_array = state.objective(sc)?.objective;
            if after_rx_array < after_tx_array - SUBSTEP_TOL * rel(after_tx_array) {
                warnings.push(format!(
                    "rx-array step decreased the objective: {after_tx_array} -> {after_rx_array}"
                ));
            }
        }

        // trajectory
        let step = trajectory::optimize_trajectory(
            sc,
            &state.trajectory,
            &state.tx_layouts,
            &state.rx_layouts,
            &state.beamforming,
            &state.fp,
            &opts.solver,
        )
        .map_err(|source| PipelineError::Solver { step: "trajectory", iteration, source })?;
        solver_iterations += step.report.iterations;
        if step.new_frozen < step.prev_frozen - SUBSTEP_TOL * rel(step.prev_frozen) {
            warnings.push(format!(
                "trajectory step decreased the frozen objective: {} -> {}",
                step.prev_frozen, step.new_frozen
            ));
        }

        // The frozen-steering model can overestimate the realized gain when
        // the waypoints move far (beams were aimed under the old angles), so
        // the step is damped onto the segment toward the new trajectory:
        // feasibility is preserved by convexity of the kinematic set, and
        // the no-move endpoint guarantees the realized objective cannot
        // drop.
        let old_points = state.trajectory.points.clone();
        let mut best_points = old_points.clone();
        let mut best_value = after_rx_array;
        for alpha in [1.0, 0.5, 0.25, 0.125] {
            let cand: Vec<_> = old_points
                .iter()
                .zip(&step.trajectory.points)
                .map(|(o, n)| o * (1.0 - alpha) + n * alpha)
                .collect();
            let value = metrics::evaluate_objective(
                sc,
                &cand,
                &state.tx_layouts,
                &state.rx_layouts,
                &state.beamforming,
            )?
            .objective;
            if value > best_value {
                best_value = value;
                best_points = cand;
                break;
            }
        }
        state.trajectory = Trajectory { points: best_points };

        let breakdown = state.objective(sc)?;
        let after_trajectory = breakdown.objective;
        if after_trajectory < prev - END_TO_END_TOL * rel(prev) {
            warnings.push(format!(
                "outer iteration decreased the objective: {prev} -> {after_trajectory}"
            ));
        }

        let delta = after_trajectory - prev;
        state.trace.push(IterationRecord {
            iteration,
            objective: after_trajectory,
            sum_rate: breakdown.sum_rate,
            total_inv_crb: breakdown.total_inv_crb,
            after_beamforming,
            after_tx_array,
            after_rx_array,
            after_trajectory,
            solver_iterations,
            rank_one_ratios,
            rank_one_fallbacks,
            warnings,
        });
        state.iterations = iteration;
        prev = after_trajectory;

        if delta < opts.eps * rel(after_trajectory) {
            state.converged = true;
            break;
        }
    }
    state.validate(sc).map_err(ScenarioError::Invariant)?;
    Ok(state)
}

/// Initialize and run.
pub fn run(sc: &Scenario, opts: &AoOptions) -> Result<AoState, PipelineError> {
    run_from(sc, initialize(sc)?, opts)
}

/// Coarse upper bound on the achievable objective, from the power budget and
/// geometry alone: every link is at least the altitude away and the
/// beamforming gain is at most `n_tx * pmax`.
pub fn objective_upper_bound(sc: &Scenario) -> f64 {
    let beta_max = sc.h0 / (sc.altitude * sc.altitude);
    let rate_cap = (1.0 + beta_max * sc.n_tx as f64 * sc.pmax / sc.noise_user).log2();
    let k = 2.0 * std::f64::consts::PI / sc.wavelength;
    let alpha_max = sc.rcs * sc.rcs * sc.frame_len * k * k
        / (2.0 * sc.altitude * sc.altitude * sc.noise_radar);
    let tss_max = sc.n_rx as f64 * sc.segment_len * sc.segment_len / 4.0;
    sc.xi_c * (sc.slots * sc.num_users()) as f64 * rate_cap
        + sc.xi_s * sc.slots as f64 * alpha_max * sc.pmax * sc.n_tx as f64 * tss_max
}
