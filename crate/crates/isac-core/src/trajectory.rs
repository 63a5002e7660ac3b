//! UAV trajectory optimization.
//!
//! Steering vectors are frozen at the previous trajectory, which leaves the
//! per-slot rates and inverse CRB as functions of link distances only. Those
//! are bracketed by tangent bounds in the squared distances (convex
//! epigraphs), plus an exponential reformulation of the interference term,
//! producing one convex program over all slots coupled by the speed
//! constraints.

use crate::beamforming::FpAuxiliaries;
use crate::channel;
use crate::metrics::{self, BeamformingSolution};
use crate::scenario::{ArrayLayout, Scenario, ScenarioError};
use isac_solver::{
    solve, ConicProgram, LinExpr, LogExpTerm, RMat, RVec, SolveOptions, SolverError, SolverReport,
};
use nalgebra::Vector2;
use serde::Serialize;

/// Horizontal UAV waypoints, one per slot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub points: Vec<Vector2<f64>>,
}

impl Trajectory {
    pub fn straight_line(sc: &Scenario) -> Self {
        let n = sc.slots;
        let points = (0..n)
            .map(|k| {
                let t = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
                sc.uav_start + (sc.uav_end - sc.uav_start) * t
            })
            .collect();
        Self { points }
    }

    pub fn validate(&self, sc: &Scenario) -> Result<(), ScenarioError> {
        if self.points.len() != sc.slots {
            return Err(ScenarioError::Invariant(format!(
                "trajectory has {} points, expected {}",
                self.points.len(),
                sc.slots
            )));
        }
        let tol = 1e-9;
        if (self.points[0] - sc.uav_start).norm() > tol {
            return Err(ScenarioError::Invariant("trajectory must start at uav_start".into()));
        }
        if (self.points[sc.slots - 1] - sc.uav_end).norm() > tol {
            return Err(ScenarioError::Invariant("trajectory must end at uav_end".into()));
        }
        let step_cap = sc.vmax * sc.slot_duration;
        for (k, w) in self.points.windows(2).enumerate() {
            let step = (w[1] - w[0]).norm();
            if step > step_cap * (1.0 + 1e-9) {
                return Err(ScenarioError::Invariant(format!(
                    "step {k} length {step:.3} exceeds vmax * tau = {step_cap:.3}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-slot constants frozen at the previous trajectory. Rate constants are
/// noise-normalized.
#[derive(Debug, Clone)]
pub struct SlotLinearization {
    /// Desired-signal constants per user (`m^2`-scaled by the squared
    /// distance factored out of the path loss).
    pub b: Vec<f64>,
    /// Interference constants per user.
    pub c: Vec<f64>,
    /// Squared link distances per user at the expansion point.
    pub d2: Vec<f64>,
    /// Rate-term tangent value per user.
    pub ri_const: Vec<f64>,
    /// Rate-term tangent slope per user (nonpositive).
    pub ri_grad: Vec<f64>,
    /// Sensing constant: inverse CRB times squared target distance.
    pub a_sens: f64,
    /// Squared target distance at the expansion point.
    pub d2_t: f64,
    /// Expansion waypoint.
    pub q_prev: Vector2<f64>,
}

#[derive(Debug, Clone)]
pub struct TrajectoryLinearization {
    pub slots: Vec<SlotLinearization>,
}

/// Freeze steering at the previous trajectory and collect the per-slot
/// constants for the distance-only objective.
pub fn linearize(
    sc: &Scenario,
    prev: &Trajectory,
    tx_layouts: &[ArrayLayout],
    rx_layouts: &[ArrayLayout],
    sols: &[BeamformingSolution],
) -> TrajectoryLinearization {
    let mut slots = Vec::with_capacity(sc.slots);
    for n in 0..sc.slots {
        let iv = sc.interval_of_slot0(n);
        let q = prev.points[n];
        let sol = &sols[n];

        let users = sc.num_users();
        let mut b = vec![0.0; users];
        let mut c = vec![0.0; users];
        let mut d2 = vec![0.0; users];
        let mut ri_const = vec![0.0; users];
        let mut ri_grad = vec![0.0; users];
        for m in 0..users {
            let stats = channel::channel_stats(sc, &q, &sc.users[m], &tx_layouts[iv]);
            let (e, f) = metrics::rate_powers(&stats, sol, sc.noise_user, m);
            let dd = stats.dist * stats.dist;
            b[m] = dd * e / sc.noise_user;
            c[m] = dd * (f - sc.noise_user) / sc.noise_user;
            d2[m] = dd;
            let bc = b[m] + c[m];
            ri_const[m] = (bc / dd + 1.0).log2();
            ri_grad[m] = if bc > 0.0 {
                -std::f64::consts::LOG2_E * bc / (dd * (bc + dd))
            } else {
                0.0
            };
        }

        let theta_t = channel::elevation_angle(&q, &sc.target, sc.altitude);
        let dist_t = channel::link_distance(&q, &sc.target, sc.altitude);
        let d2_t = dist_t * dist_t;
        let a_sens = match metrics::inv_crb_closed(
            &tx_layouts[iv],
            &rx_layouts[iv],
            theta_t,
            dist_t,
            sol,
            sc,
        ) {
            Ok(v) => v * d2_t,
            Err(_) => 0.0,
        };

        slots.push(SlotLinearization { b, c, d2, ri_const, ri_grad, a_sens, d2_t, q_prev: q });
    }
    TrajectoryLinearization { slots }
}

/// Exact frozen-steering objective at arbitrary waypoints: per-slot rates
/// `log2(1 + B/d^2 / (C/d^2 + 1))` plus `A / d_T^2` sensing terms.
pub fn frozen_objective(sc: &Scenario, lin: &TrajectoryLinearization, points: &[Vector2<f64>]) -> f64 {
    assert_eq!(points.len(), lin.slots.len());
    let h2 = sc.altitude * sc.altitude;
    let mut total = 0.0;
    for (n, slot) in lin.slots.iter().enumerate() {
        for m in 0..slot.b.len() {
            let dd = (points[n] - sc.users[m]).norm_squared() + h2;
            let rate = (1.0 + (slot.b[m] / dd) / (slot.c[m] / dd + 1.0)).log2();
            total += sc.xi_c * rate;
        }
        let dd_t = (points[n] - sc.target).norm_squared() + h2;
        total += sc.xi_s * slot.a_sens / dd_t;
    }
    total
}

/// The convex bound the program maximizes, evaluated at arbitrary waypoints
/// with slacks at their optimal values. Returns `None` when a linearized
/// interference distance leaves its positivity region even after the
/// `1e-6 H^2` floor would apply (the bound is vacuous there).
pub fn surrogate_objective(
    sc: &Scenario,
    lin: &TrajectoryLinearization,
    points: &[Vector2<f64>],
) -> Option<f64> {
    let h2 = sc.altitude * sc.altitude;
    let mut total = 0.0;
    for (n, slot) in lin.slots.iter().enumerate() {
        let q = points[n];
        for m in 0..slot.b.len() {
            let dd = (q - sc.users[m]).norm_squared() + h2;
            total += sc.xi_c * (slot.ri_const[m] + slot.ri_grad[m] * (dd - slot.d2[m]));
            if slot.c[m] > 0.0 {
                let u = slot.d2[m] + 2.0 * (slot.q_prev - sc.users[m]).dot(&(q - slot.q_prev));
                if u <= 0.0 {
                    return None;
                }
                let eta = -u.ln();
                total -= sc.xi_c * (slot.c[m] * eta.exp() + 1.0).log2();
            }
        }
        if slot.a_sens > 0.0 {
            let dd_t = (q - sc.target).norm_squared() + h2;
            total += sc.xi_s * slot.a_sens * (2.0 / slot.d2_t - dd_t / (slot.d2_t * slot.d2_t));
        }
    }
    Some(total)
}

pub struct BuiltTrajectoryProgram {
    pub prog: ConicProgram,
    /// Flat variable indices `(x, y)` per slot; `None` for the fixed
    /// endpoints.
    pub q_idx: Vec<Option<(usize, usize)>>,
    pub init: RVec,
    /// Exact expansion point with slacks at their tight values; feasible but
    /// on the boundary, for objective evaluation only.
    pub tangency: RVec,
    /// Frozen objective at the expansion trajectory (the ascent reference).
    pub prev_objective: f64,
}

/// Squared-distance constraint `||q - p||^2 + h2 <= s` between a waypoint
/// variable and a fixed point.
fn add_dist_epigraph(
    prog: &mut ConicProgram,
    q: (usize, usize),
    p: Vector2<f64>,
    h2: f64,
    s: usize,
) {
    let mut lin = LinExpr::constant(p.norm_squared() + h2);
    lin.push(q.0, -2.0 * p.x);
    lin.push(q.1, -2.0 * p.y);
    lin.push(s, -1.0);
    let mut pm = RMat::zeros(2, 2);
    pm[(0, 0)] = 2.0;
    pm[(1, 1)] = 2.0;
    prog.add_quad_le(vec![q.0, q.1], pm, lin);
}

/// Assemble the trajectory program about `prev`.
pub fn build_p51(sc: &Scenario, lin: &TrajectoryLinearization, prev: &Trajectory) -> BuiltTrajectoryProgram {
    let n_slots = sc.slots;
    let h2 = sc.altitude * sc.altitude;
    let step_cap = sc.vmax * sc.slot_duration;

    let mut prog = ConicProgram::maximize();
    let mut q_idx: Vec<Option<(usize, usize)>> = vec![None; n_slots];
    for (n, slot) in q_idx.iter_mut().enumerate().take(n_slots.saturating_sub(1)).skip(1) {
        let blk = prog.add_free(2);
        *slot = Some((prog.free_index(blk, 0), prog.free_index(blk, 1)));
        let _ = n;
    }

    // Strictly interior start: previous trajectory nudged toward the straight
    // line, which has strict speed slack by the scenario invariant.
    let line = Trajectory::straight_line(sc);
    let blend = 1e-6;
    let q_init: Vec<Vector2<f64>> = (0..n_slots)
        .map(|n| prev.points[n] * (1.0 - blend) + line.points[n] * blend)
        .collect();

    let mut objective = LinExpr::default();
    let mut init_vals: Vec<(usize, f64)> = Vec::new();
    let mut tangency_vals: Vec<(usize, f64)> = Vec::new();
    let mut log_terms: Vec<LogExpTerm> = Vec::new();
    let mut log_cons: Vec<(LinExpr, usize)> = Vec::new();

    // Natural compact bounds for the slack variables. Objective terms of one
    // kind can be negligible next to the other at realistic constants (rates
    // vs inverse CRB differ by many orders), leaving their slacks with no
    // effective pull; without bounds the central path then drifts out of
    // float range. The caps provably never bind at an optimum.
    let total_travel = n_slots as f64 * step_cap;
    let eta_cap = -(1e-6 * h2).ln() + 20.0;

    for (n, slot) in lin.slots.iter().enumerate() {
        let Some(q) = q_idx[n] else {
            // fixed endpoint: contributes constants only
            let qf = prev.points[n];
            for m in 0..slot.b.len() {
                let dd = (qf - sc.users[m]).norm_squared() + h2;
                let rate = (1.0 + (slot.b[m] / dd) / (slot.c[m] / dd + 1.0)).log2();
                objective.constant += sc.xi_c * rate;
            }
            let dd_t = (qf - sc.target).norm_squared() + h2;
            objective.constant += sc.xi_s * slot.a_sens / dd_t;
            continue;
        };

        for m in 0..slot.b.len() {
            objective.constant += sc.xi_c * (slot.ri_const[m] - slot.ri_grad[m] * slot.d2[m]);
            if slot.ri_grad[m] < 0.0 {
                let s = prog.add_scalar();
                objective.push(s, sc.xi_c * slot.ri_grad[m]);
                add_dist_epigraph(&mut prog, q, sc.users[m], h2, s);
                let dd0 = (q_init[n] - sc.users[m]).norm_squared() + h2;
                let cap = (dd0.sqrt() + total_travel).powi(2) * 2.0;
                let mut hi = LinExpr::term(s, 1.0);
                hi.constant = -cap;
                prog.add_lin_le(hi);
                init_vals.push((s, dd0 * 1.001));
                tangency_vals.push((s, (prev.points[n] - sc.users[m]).norm_squared() + h2));
            }
            if slot.c[m] > 0.0 {
                let eta = prog.add_scalar();
                log_terms.push(LogExpTerm { weight: sc.xi_c, coef: slot.c[m], offset: 1.0, eta });
                let g = slot.q_prev - sc.users[m];
                let mut u = LinExpr::constant(slot.d2[m] - 2.0 * g.dot(&slot.q_prev));
                u.push(q.0, 2.0 * g.x);
                u.push(q.1, 2.0 * g.y);
                log_cons.push((u.clone(), eta));
                let mut hi = LinExpr::term(eta, 1.0);
                hi.constant = -eta_cap;
                prog.add_lin_le(hi);
                let u0 = u.constant + 2.0 * g.dot(&q_init[n]);
                init_vals.push((eta, -(u0.max(1e-6 * h2)).ln() + 1e-2));
                tangency_vals.push((eta, -slot.d2[m].ln()));
            }
        }

        if sc.xi_s > 0.0 && slot.a_sens > 0.0 {
            objective.constant += sc.xi_s * slot.a_sens * 2.0 / slot.d2_t;
            let s = prog.add_scalar();
            objective.push(s, -sc.xi_s * slot.a_sens / (slot.d2_t * slot.d2_t));
            add_dist_epigraph(&mut prog, q, sc.target, h2, s);
            let dd0 = (q_init[n] - sc.target).norm_squared() + h2;
            let cap = (dd0.sqrt() + total_travel).powi(2) * 2.0;
            let mut hi = LinExpr::term(s, 1.0);
            hi.constant = -cap;
            prog.add_lin_le(hi);
            init_vals.push((s, dd0 * 1.001));
            tangency_vals.push((s, (prev.points[n] - sc.target).norm_squared() + h2));
        }
    }

    // Speed constraints between consecutive slots.
    for n in 1..n_slots {
        let a = q_idx[n - 1];
        let b = q_idx[n];
        let cap = -(step_cap * step_cap);
        match (a, b) {
            (None, None) => {}
            (Some(ia), None) | (None, Some(ia)) => {
                let fixed = if a.is_none() { prev.points[n - 1] } else { prev.points[n] };
                let mut lin = LinExpr::constant(fixed.norm_squared() + cap);
                lin.push(ia.0, -2.0 * fixed.x);
                lin.push(ia.1, -2.0 * fixed.y);
                let mut pm = RMat::zeros(2, 2);
                pm[(0, 0)] = 2.0;
                pm[(1, 1)] = 2.0;
                prog.add_quad_le(vec![ia.0, ia.1], pm, lin);
            }
            (Some(ia), Some(ib)) => {
                let mut pm = RMat::zeros(4, 4);
                for k in 0..2 {
                    pm[(k, k)] = 2.0;
                    pm[(k + 2, k + 2)] = 2.0;
                    pm[(k, k + 2)] = -2.0;
                    pm[(k + 2, k)] = -2.0;
                }
                prog.add_quad_le(vec![ia.0, ia.1, ib.0, ib.1], pm, LinExpr::constant(cap));
            }
        }
    }

    for t in log_terms {
        prog.add_objective_logexp(t);
    }
    for (u, eta) in log_cons {
        prog.add_log_affine(u, eta);
    }
    prog.set_objective(objective);

    let mut init = prog.zero_point();
    let mut tangency = prog.zero_point();
    for (n, q) in q_idx.iter().enumerate() {
        if let Some((ix, iy)) = q {
            init[*ix] = q_init[n].x;
            init[*iy] = q_init[n].y;
            tangency[*ix] = prev.points[n].x;
            tangency[*iy] = prev.points[n].y;
        }
    }
    for (idx, v) in init_vals {
        init[idx] = v;
    }
    for (idx, v) in tangency_vals {
        tangency[idx] = v;
    }

    BuiltTrajectoryProgram {
        prog,
        q_idx,
        init,
        tangency,
        prev_objective: frozen_objective(sc, lin, &prev.points),
    }
}

/// Solve the trajectory subproblem. Returns the previous trajectory when
/// there are no interior waypoints or no strict speed slack to move in.
pub fn solve_p51(
    sc: &Scenario,
    lin: &TrajectoryLinearization,
    prev: &Trajectory,
    opts: &SolveOptions,
) -> Result<(Trajectory, SolverReport), SolverError> {
    let skip_report = || SolverReport {
        status: isac_solver::SolveStatus::Optimal,
        objective: frozen_objective(sc, lin, &prev.points),
        iterations: 0,
        primal_residual: 0.0,
        dual_gap_bound: 0.0,
        wall_time_s: 0.0,
    };
    if sc.slots <= 2 {
        return Ok((prev.clone(), skip_report()));
    }
    let line_step = (sc.uav_end - sc.uav_start).norm() / (sc.slots - 1) as f64;
    if line_step >= sc.vmax * sc.slot_duration * (1.0 - 1e-9) {
        // the straight line is the only feasible trajectory
        return Ok((prev.clone(), skip_report()));
    }

    let built = build_p51(sc, lin, prev);
    let solution = solve(&built.prog, &built.init, opts)?;
    let mut points = prev.points.clone();
    for (n, q) in built.q_idx.iter().enumerate() {
        if let Some((ix, iy)) = q {
            points[n] = Vector2::new(solution.z[*ix], solution.z[*iy]);
        }
    }
    let traj = Trajectory { points };
    traj.validate(sc)
        .map_err(|e| SolverError::Numerical(format!("solved trajectory invalid: {e}")))?;
    Ok((traj, solution.report))
}

/// Convenience wrapper tying the pieces together for the driver.
pub struct TrajectoryStep {
    pub trajectory: Trajectory,
    pub report: SolverReport,
    /// Frozen objective at the previous trajectory.
    pub prev_frozen: f64,
    /// Frozen objective at the new trajectory.
    pub new_frozen: f64,
}

pub fn optimize_trajectory(
    sc: &Scenario,
    prev: &Trajectory,
    tx_layouts: &[ArrayLayout],
    rx_layouts: &[ArrayLayout],
    sols: &[BeamformingSolution],
    _fp: &FpAuxiliaries,
    opts: &SolveOptions,
) -> Result<TrajectoryStep, SolverError> {
    let lin = linearize(sc, prev, tx_layouts, rx_layouts, sols);
    let prev_frozen = frozen_objective(sc, &lin, &prev.points);
    let (trajectory, report) = solve_p51(sc, &lin, prev, opts)?;
    let new_frozen = frozen_objective(sc, &lin, &trajectory.points);
    Ok(TrajectoryStep { trajectory, report, prev_frozen, new_frozen })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::tests_support::random_solution;
    use crate::rxarray::optimal_rx_positions;
    use crate::scenario::tests_support::desk_file;
    use crate::scenario::ArrayKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn desk() -> Scenario {
        Scenario::from_config(&desk_file()).unwrap()
    }

    fn setup(sc: &Scenario, seed: u64) -> (Trajectory, Vec<ArrayLayout>, Vec<ArrayLayout>, Vec<BeamformingSolution>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let traj = Trajectory::straight_line(sc);
        let tx = vec![ArrayLayout::ula(sc.n_tx, sc.d_min, sc.segment_len, ArrayKind::Transmit); sc.intervals];
        let rx = vec![optimal_rx_positions(sc.n_rx, sc.d_min, sc.segment_len).unwrap(); sc.intervals];
        let sols = (0..sc.slots)
            .map(|_| random_solution(&mut rng, sc.num_users(), sc.n_tx, sc.pmax))
            .collect();
        (traj, tx, rx, sols)
    }

    #[test]
    fn straight_line_is_valid() {
        let sc = desk();
        let t = Trajectory::straight_line(&sc);
        t.validate(&sc).unwrap();
        assert_eq!(t.points[0], sc.uav_start);
        assert_eq!(t.points[sc.slots - 1], sc.uav_end);
    }

    #[test]
    fn speed_violation_is_caught() {
        let sc = desk();
        let mut t = Trajectory::straight_line(&sc);
        t.points[2].y += sc.vmax * sc.slot_duration * 2.0;
        assert!(t.validate(&sc).is_err());
    }

    #[test]
    fn zero_beamforming_linearizes_to_zero() {
        let sc = desk();
        let (traj, tx, rx, _) = setup(&sc, 1);
        let sols = vec![BeamformingSolution::zeros(sc.num_users(), sc.n_tx); sc.slots];
        let lin = linearize(&sc, &traj, &tx, &rx, &sols);
        for slot in &lin.slots {
            assert!(slot.b.iter().all(|&v| v == 0.0));
            assert!(slot.c.iter().all(|&v| v == 0.0));
            assert_eq!(slot.a_sens, 0.0);
        }
        assert_eq!(frozen_objective(&sc, &lin, &traj.points), 0.0);
    }

    #[test]
    fn single_user_no_sensing_has_zero_interference_constant() {
        let mut sc = desk();
        sc.users.truncate(1);
        let (traj, tx, rx, _) = setup(&sc, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut sols = Vec::new();
        for _ in 0..sc.slots {
            let mut s = random_solution(&mut rng, 1, sc.n_tx, sc.pmax);
            s.r0 = isac_solver::CMat::zeros(sc.n_tx, sc.n_tx);
            sols.push(s);
        }
        let lin = linearize(&sc, &traj, &tx, &rx, &sols);
        for slot in &lin.slots {
            assert!(slot.c[0].abs() < 1e-12 * slot.b[0].max(1.0));
        }
    }

    #[test]
    fn freezing_is_tangent_to_the_exact_objective() {
        let sc = desk();
        let (traj, tx, rx, sols) = setup(&sc, 4);
        let lin = linearize(&sc, &traj, &tx, &rx, &sols);
        let frozen = frozen_objective(&sc, &lin, &traj.points);
        let exact = metrics::evaluate_objective(&sc, &traj.points, &tx, &rx, &sols)
            .unwrap()
            .objective;
        assert!(
            (frozen - exact).abs() <= 1e-9 * exact.abs().max(1.0),
            "frozen {frozen} vs exact {exact}"
        );
    }

    #[test]
    fn surrogate_is_tangent_and_below_frozen_objective() {
        let sc = desk();
        let (traj, tx, rx, sols) = setup(&sc, 5);
        let lin = linearize(&sc, &traj, &tx, &rx, &sols);
        let at_prev = surrogate_objective(&sc, &lin, &traj.points).unwrap();
        let frozen_prev = frozen_objective(&sc, &lin, &traj.points);
        assert!(
            (at_prev - frozen_prev).abs() <= 1e-9 * frozen_prev.abs().max(1.0),
            "tangency: {at_prev} vs {frozen_prev}"
        );

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cap = sc.vmax * sc.slot_duration;
        for _ in 0..200 {
            let mut pts = traj.points.clone();
            for p in pts.iter_mut().take(sc.slots - 1).skip(1) {
                p.x += rng.gen_range(-0.4..0.4) * cap;
                p.y += rng.gen_range(-0.4..0.4) * cap;
            }
            if let Some(bound) = surrogate_objective(&sc, &lin, &pts) {
                let truth = frozen_objective(&sc, &lin, &pts);
                assert!(
                    bound <= truth + 1e-9 * truth.abs().max(1.0),
                    "bound {bound} above frozen objective {truth}"
                );
            }
        }
    }

    #[test]
    fn program_objective_matches_tangency_at_init() {
        let sc = desk();
        let (traj, tx, rx, sols) = setup(&sc, 7);
        let lin = linearize(&sc, &traj, &tx, &rx, &sols);
        let built = build_p51(&sc, &lin, &traj);
        let at_tangency = built.prog.objective_value(&built.tangency);
        assert!(
            (at_tangency - built.prev_objective).abs()
                <= 1e-9 * built.prev_objective.abs().max(1.0),
            "program tangency {at_tangency} vs frozen {}",
            built.prev_objective
        );
    }

    #[test]
    fn solve_improves_frozen_objective_and_stays_feasible() {
        let sc = desk();
        let (traj, tx, rx, sols) = setup(&sc, 8);
        let fp = FpAuxiliaries::default();
        let step = optimize_trajectory(&sc, &traj, &tx, &rx, &sols, &fp, &SolveOptions::default()).unwrap();
        step.trajectory.validate(&sc).unwrap();
        assert!(
            step.new_frozen >= step.prev_frozen - 1e-6 * step.prev_frozen.abs().max(1.0),
            "frozen objective decreased: {} -> {}",
            step.prev_frozen,
            step.new_frozen
        );
        assert!(step.report.objective >= step.prev_frozen - 1e-6 * step.prev_frozen.abs().max(1.0));
    }

    #[test]
    fn sensing_only_middle_slot_chases_target_like_grid_search() {
        let mut sc = desk();
        sc.xi_c = 0.0;
        sc.xi_s = 1.0;
        sc.slots = 3;
        sc.intervals = 3;
        sc.mu = 1;
        sc.uav_start = Vector2::new(0.0, 0.0);
        sc.uav_end = Vector2::new(300.0, 0.0);
        sc.target = Vector2::new(150.0, 500.0);
        let (_, tx, rx, sols) = setup(&sc, 9);
        let traj = Trajectory::straight_line(&sc);
        let lin = linearize(&sc, &traj, &tx, &rx, &sols);
        let (solved, report) = solve_p51(&sc, &lin, &traj, &SolveOptions::default()).unwrap();
        solved.validate(&sc).unwrap();

        // grid oracle over the intersection of the two speed discs
        let cap = sc.vmax * sc.slot_duration;
        let mut best = f64::NEG_INFINITY;
        let steps = 400;
        for i in 0..=steps {
            for j in 0..=steps {
                let p = Vector2::new(
                    -cap + 2.0 * cap * i as f64 / steps as f64,
                    -cap + 2.0 * cap * j as f64 / steps as f64 * 1.0,
                ) + Vector2::new(150.0, 0.0);
                if (p - traj.points[0]).norm() <= cap && (p - traj.points[2]).norm() <= cap {
                    let pts = vec![traj.points[0], p, traj.points[2]];
                    if let Some(v) = surrogate_objective(&sc, &lin, &pts) {
                        best = best.max(v);
                    }
                }
            }
        }
        assert!(
            report.objective >= best - 1e-3 * best.abs().max(1e-300),
            "solver {} below grid {best}",
            report.objective
        );
        // the solved midpoint must have moved toward the target
        let d_line = (traj.points[1] - sc.target).norm();
        let d_solved = (solved.points[1] - sc.target).norm();
        assert!(d_solved < d_line, "midpoint did not approach the target");
    }
}
