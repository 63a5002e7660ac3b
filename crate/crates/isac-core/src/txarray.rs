//! Transmit-array position optimization.
//!
//! The steered power `h(x)^H C h(x) = sum_pq |C_pq| cos(theta_slope (x_p -
//! x_q) - arg C_pq)` is non-concave in the positions. Each cosine is bracketed
//! by its second-order expansion with the curvature replaced by the global
//! bound `|cos| <= 1`, which yields quadratic lower/upper surrogates whose
//! curvature matrices are (negated) weighted graph Laplacians of the
//! magnitude matrix - negative semidefinite for the lower bound, positive
//! semidefinite for the upper bound, with the all-ones vector in the
//! nullspace. One convex program per interval then maximizes the surrogate
//! objective over the spacing polytope.

use crate::beamforming::{fp_surrogate_rate, FpAuxiliaries};
use crate::channel;
use crate::metrics::{self, BeamformingSolution};
use crate::scenario::{ArrayKind, ArrayLayout, Scenario};
use isac_solver::{
    solve, BlockId, CMat, ConicProgram, LinExpr, RMat, RVec, SolveOptions, SolverError,
    SolverReport,
};
use nalgebra::Vector2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurrogateSense {
    Lower,
    Upper,
}

/// Quadratic bracket `1/2 x' S x + t' x + u` of a steered power around an
/// expansion point.
#[derive(Debug, Clone)]
pub struct QuadraticSurrogate {
    pub s_mat: RMat,
    pub t_vec: RVec,
    pub u_scalar: f64,
    pub sense: SurrogateSense,
    pub about: Vec<f64>,
}

impl QuadraticSurrogate {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let mut v = self.u_scalar;
        for p in 0..n {
            v += self.t_vec[p] * x[p];
            for q in 0..n {
                v += 0.5 * x[p] * self.s_mat[(p, q)] * x[q];
            }
        }
        v
    }
}

/// Direct evaluation of the steered power for a Hermitian coefficient
/// matrix; the quantity the surrogates bracket.
pub fn steered_power(coef: &CMat, coords: &[f64], theta: f64, wavelength: f64) -> f64 {
    let h = channel::steering(coords, theta, wavelength);
    metrics::quad_form(&h, coef)
}

/// Build the lower or upper quadratic surrogate of
/// `h(x)^H coef h(x)` about `about`.
pub fn build_surrogate(
    coef: &CMat,
    theta: f64,
    wavelength: f64,
    about: &[f64],
    sense: SurrogateSense,
) -> QuadraticSurrogate {
    let n = about.len();
    assert_eq!(coef.nrows(), n);
    let slope = 2.0 * std::f64::consts::PI / wavelength * theta.sin();
    let sign = match sense {
        SurrogateSense::Lower => -1.0,
        SurrogateSense::Upper => 1.0,
    };

    let mut s = RMat::zeros(n, n);
    let mut t = RVec::zeros(n);
    let mut u = 0.0;
    for p in 0..n {
        for q in 0..n {
            let mag = coef[(p, q)].norm();
            if mag == 0.0 {
                // zero magnitude carries an undefined phase; contributes nothing
                continue;
            }
            let phase = coef[(p, q)].arg();
            let delta = about[p] - about[q];
            let psi = slope * delta - phase;

            // curvature: sign * 2 theta^2 (diag(V^I) - V^II) restricted to (p,q)
            s[(p, p)] += 2.0 * sign * slope * slope * mag;
            s[(p, q)] -= 2.0 * sign * slope * slope * mag;

            t[p] += mag * (-2.0 * slope * psi.sin() - sign * 2.0 * slope * slope * delta) / 2.0;
            t[q] -= mag * (-2.0 * slope * psi.sin() - sign * 2.0 * slope * slope * delta) / 2.0;

            u += mag * (psi.cos() + slope * psi.sin() * delta + sign * 0.5 * slope * slope * delta * delta);
        }
    }
    QuadraticSurrogate { s_mat: s, t_vec: t, u_scalar: u, sense, about: about.to_vec() }
}

/// True when the curvature matrix respects the sense tag within
/// `1e-9 * ||S||`.
pub fn psd_sign_check(s: &QuadraticSurrogate) -> bool {
    let tol = 1e-9 * s.s_mat.norm().max(1.0);
    let eig = s.s_mat.clone().symmetric_eigen().eigenvalues;
    match s.sense {
        SurrogateSense::Lower => eig.iter().all(|&v| v <= tol),
        SurrogateSense::Upper => eig.iter().all(|&v| v >= -tol),
    }
}

/// Inputs for one interval's transmit-position subproblem.
pub struct TxIntervalContext<'a> {
    pub sc: &'a Scenario,
    /// 0-based interval index.
    pub interval0: usize,
    /// Current positions for this interval (the expansion point).
    pub prev: &'a ArrayLayout,
    /// Receive layout for this interval.
    pub rx_layout: &'a ArrayLayout,
    /// Full trajectory (all slots).
    pub trajectory: &'a [Vector2<f64>],
    /// Per-slot beamforming solutions (all slots).
    pub sols: &'a [BeamformingSolution],
    pub fp: &'a FpAuxiliaries,
}

pub struct BuiltTxProgram {
    pub prog: ConicProgram,
    pub x_block: BlockId,
    pub init: RVec,
    /// Surrogate objective value at the expansion point (tangency), i.e. the
    /// quantity the solve is guaranteed not to decrease.
    pub prev_objective: f64,
}

/// Interior point of the spacing polytope, used to nudge warm starts off the
/// boundary.
fn polytope_center(n: usize, d_min: f64, segment: f64) -> Vec<f64> {
    let slack = segment - (n - 1) as f64 * d_min;
    (0..n)
        .map(|k| (k + 1) as f64 * slack / (n + 1) as f64 + k as f64 * d_min)
        .collect()
}

/// Assemble the per-interval convex program with the previous positions as a
/// feasible point. Requires strictly positive segment slack.
pub fn build_p32(ctx: &TxIntervalContext) -> BuiltTxProgram {
    let sc = ctx.sc;
    let n = sc.n_tx;
    let users = sc.num_users();
    let sigma = sc.noise_user;
    let about = &ctx.prev.coords;

    let mut prog = ConicProgram::maximize();
    let x_block = prog.add_free(n);
    let x_idx: Vec<usize> = (0..n).map(|k| prog.free_index(x_block, k)).collect();

    // Spacing polytope: x1 >= 0, gaps >= d_min, xn <= segment.
    prog.add_lin_le(LinExpr::term(x_idx[0], -1.0));
    for k in 0..n.saturating_sub(1) {
        let mut gap = LinExpr::constant(sc.d_min);
        gap.push(x_idx[k], 1.0);
        gap.push(x_idx[k + 1], -1.0);
        prog.add_lin_le(gap);
    }
    let mut seg = LinExpr::term(x_idx[n - 1], 1.0);
    seg.constant = -sc.segment_len;
    prog.add_lin_le(seg);

    // Strictly interior warm start.
    let center = polytope_center(n, sc.d_min, sc.segment_len);
    let blend = 1e-3;
    let x_init: Vec<f64> = about
        .iter()
        .zip(&center)
        .map(|(&p, &c)| (1.0 - blend) * p + blend * c)
        .collect();

    let mut objective = LinExpr::default();
    let mut prev_objective = 0.0;
    let spread = metrics::tss(&ctx.rx_layout.coords);

    // One slack per surrogate, sharing the interval's position variable.
    // Each slack also gets the far bound of the surrogate's range over the
    // segment so a slack with negligible objective pull cannot drift out of
    // float range along the central path (rate and sensing weights can differ
    // by many orders at realistic constants).
    let range_bound = |sur: &QuadraticSurrogate| -> f64 {
        let d = sc.segment_len;
        let mut r = sur.u_scalar.abs() + 1.0;
        for k in 0..n {
            r += sur.t_vec[k].abs() * d;
        }
        for p in 0..n {
            for q in 0..n {
                r += 0.5 * sur.s_mat[(p, q)].abs() * d * d;
            }
        }
        r
    };
    let mut pending_inits: Vec<(usize, f64)> = Vec::new();
    let add_lower = |prog: &mut ConicProgram,
                         pending: &mut Vec<(usize, f64)>,
                         coef: &CMat,
                         theta: f64|
     -> Option<(usize, QuadraticSurrogate)> {
        if coef.norm() == 0.0 {
            return None;
        }
        let sur = build_surrogate(coef, theta, sc.wavelength, about, SurrogateSense::Lower);
        let phi = prog.add_scalar();
        let mut lin = LinExpr::term(phi, -1.0);
        lin.constant = sur.u_scalar;
        for k in 0..n {
            lin.push(x_idx[k], sur.t_vec[k]);
        }
        prog.add_quad_ge(x_idx.clone(), sur.s_mat.clone(), lin);
        let mut lo = LinExpr::term(phi, -1.0);
        lo.constant = -range_bound(&sur);
        prog.add_lin_le(lo);
        let val = sur.eval(&x_init);
        pending.push((phi, val - 1e-6 * val.abs().max(1.0)));
        Some((phi, sur))
    };
    let add_upper = |prog: &mut ConicProgram,
                         pending: &mut Vec<(usize, f64)>,
                         coef: &CMat,
                         theta: f64|
     -> Option<usize> {
        if coef.norm() == 0.0 {
            return None;
        }
        let sur = build_surrogate(coef, theta, sc.wavelength, about, SurrogateSense::Upper);
        let psi = prog.add_scalar();
        let mut lin = LinExpr::term(psi, -1.0);
        lin.constant = sur.u_scalar;
        for k in 0..n {
            lin.push(x_idx[k], sur.t_vec[k]);
        }
        prog.add_quad_le(x_idx.clone(), sur.s_mat.clone(), lin);
        let mut hi = LinExpr::term(psi, 1.0);
        hi.constant = -range_bound(&sur);
        prog.add_lin_le(hi);
        let val = sur.eval(&x_init);
        pending.push((psi, val + 1e-6 * val.abs().max(1.0)));
        Some(psi)
    };

    for slot in sc.slots_of_interval0(ctx.interval0) {
        let q = &ctx.trajectory[slot];
        let sol = &ctx.sols[slot];

        {
            for m in 0..users {
                let stats = channel::channel_stats(sc, q, &sc.users[m], ctx.prev);
                let (zl, zn) = (stats.zeta_los / sigma, stats.zeta_nlos / sigma);
                let omega = ctx.fp.omega[slot][m];
                let varpi = ctx.fp.varpi[slot][m];
                prev_objective += sc.xi_c * ((1.0 + omega).log2() - omega);
                objective.constant += sc.xi_c * ((1.0 + omega).log2() - omega);
                if varpi <= 0.0 {
                    continue;
                }

                // true (normalized) powers at the expansion point, for the
                // tangency value
                let e_true = zl * steered_power(&sol.w_mats[m], about, stats.theta, sc.wavelength)
                    + zn * sol.w_mats[m].trace().re;
                let mut f_true = zl * steered_power(&sol.r0, about, stats.theta, sc.wavelength)
                    + zn * sol.r0.trace().re
                    + 1.0;
                for i in 0..users {
                    if i != m {
                        f_true += zl * steered_power(&sol.w_mats[i], about, stats.theta, sc.wavelength)
                            + zn * sol.w_mats[i].trace().re;
                    }
                }
                prev_objective +=
                    sc.xi_c * (fp_surrogate_rate(omega, varpi, e_true, f_true) - ((1.0 + omega).log2() - omega));

                // E lower bound -> epigraph r^2 <= zl * phi + zn tr(W_m).
                // Skipped for starved links where the available signal power
                // is below the init margin: the dropped term is O(sqrt(E)),
                // so the surrogate stays a valid bound with negligible
                // tangency loss.
                let e_los = e_true - zn * sol.w_mats[m].trace().re;
                let e_margin = 2e-6 * zl.max(e_los.abs());
                if e_true > e_margin {
                    let own = add_lower(&mut prog, &mut pending_inits, &sol.w_mats[m], stats.theta);
                    if let Some((phi, _)) = own {
                        let r = prog.add_scalar();
                        objective.push(r, sc.xi_c * 2.0 * varpi * (1.0 + omega).sqrt());
                        let mut lin = LinExpr::constant(-zn * sol.w_mats[m].trace().re);
                        lin.push(phi, -zl);
                        let mut p = RMat::zeros(1, 1);
                        p[(0, 0)] = 2.0;
                        prog.add_quad_le(vec![r], p, lin);
                        let e_init = (e_true).max(0.0);
                        pending_inits.push((r, 0.5 * e_init.sqrt()));
                    }
                }

                // E upper + F upper, entering with -varpi^2
                let pen = -sc.xi_c * varpi * varpi;
                objective.constant += pen * (zn * sol.w_mats[m].trace().re + 1.0);
                if let Some(psi) = add_upper(&mut prog, &mut pending_inits, &sol.w_mats[m], stats.theta) {
                    objective.push(psi, pen * zl);
                }
                for i in 0..users {
                    if i == m {
                        continue;
                    }
                    objective.constant += pen * zn * sol.w_mats[i].trace().re;
                    if let Some(psi) = add_upper(&mut prog, &mut pending_inits, &sol.w_mats[i], stats.theta) {
                        objective.push(psi, pen * zl);
                    }
                }
                objective.constant += pen * zn * sol.r0.trace().re;
                if let Some(psi) = add_upper(&mut prog, &mut pending_inits, &sol.r0, stats.theta) {
                    objective.push(psi, pen * zl);
                }
            }
        }

        // Sensing term: xi_s * alpha * TSS(y) * (a^H R_x a lower bound).
        if sc.xi_s > 0.0 && spread > 0.0 {
            let theta_t = channel::elevation_angle(q, &sc.target, sc.altitude);
            let dist_t = channel::link_distance(q, &sc.target, sc.altitude);
            if theta_t.cos() > 1e-12 {
                let weight = sc.xi_s * metrics::alpha_factor(sc, theta_t, dist_t) * spread;
                let rx_cov = metrics::tx_covariance(sol);
                prev_objective += weight * steered_power(&rx_cov, about, theta_t, sc.wavelength);
                if let Some((phi, _)) = add_lower(&mut prog, &mut pending_inits, &rx_cov, theta_t) {
                    objective.push(phi, weight);
                }
            }
        }
    }

    prog.set_objective(objective);
    let mut full_init = prog.zero_point();
    prog.set_free(&mut full_init, x_block, &x_init);
    for (idx, v) in pending_inits {
        full_init[idx] = v;
    }
    BuiltTxProgram { prog, x_block, init: full_init, prev_objective }
}

/// Solve one interval's position subproblem. Returns the previous layout
/// unchanged when the polytope has no interior (zero slack).
pub fn solve_p32(
    ctx: &TxIntervalContext,
    opts: &SolveOptions,
) -> Result<(ArrayLayout, SolverReport, f64), SolverError> {
    let sc = ctx.sc;
    let slack = sc.segment_len - (sc.n_tx - 1) as f64 * sc.d_min;
    if slack <= 1e-12 * sc.segment_len {
        let report = SolverReport {
            status: isac_solver::SolveStatus::Optimal,
            objective: 0.0,
            iterations: 0,
            primal_residual: 0.0,
            dual_gap_bound: 0.0,
            wall_time_s: 0.0,
        };
        return Ok((ctx.prev.clone(), report, 0.0));
    }
    let built = build_p32(ctx);
    let solution = solve(&built.prog, &built.init, opts)?;
    let x = built.prog.free_value(&solution.z, built.x_block);
    let layout = ArrayLayout::new(x.iter().copied().collect(), ArrayKind::Transmit);
    layout
        .validate(sc.d_min, sc.segment_len)
        .map_err(|e| SolverError::Numerical(format!("solved layout invalid: {e}")))?;
    Ok((layout, solution.report, built.prev_objective))
}
