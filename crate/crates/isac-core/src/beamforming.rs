//! Per-slot transmit beamforming: quadratic-transform auxiliary updates, the
//! lifted SDP with the sensing term, and rank-one extraction with a Gaussian
//! randomization fallback.

use crate::channel::ChannelStats;
use crate::metrics::{self, BeamformingSolution};
use crate::scenario::Scenario;
use isac_solver::{
    solve, BlockId, CMat, CVec, ConicProgram, LinExpr, RMat, SolveOptions, SolverError,
    SolverReport,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

/// Dominant-eigenvalue share above which a lifted matrix counts as rank-one.
pub const RANK_ONE_THRESHOLD: f64 = 1.0 - 1e-3;

/// Frobenius consistency required before extracted vectors are stored on the
/// solution.
const VECTOR_CONSISTENCY: f64 = 1e-6;

/// Quadratic-transform auxiliaries, one pair per (slot, user). Both are kept
/// in noise-normalized units: the update is fed signal and interference
/// powers divided by the receiver noise, which leaves the transform's value
/// and maximizers unchanged while keeping the solver inputs well scaled.
#[derive(Debug, Clone, Default, Serialize)]
pub struct FpAuxiliaries {
    /// `omega[slot][user]`.
    pub omega: Vec<Vec<f64>>,
    /// `varpi[slot][user]`.
    pub varpi: Vec<Vec<f64>>,
}

/// Auxiliary update from a signal power `e >= 0` and an
/// interference-plus-noise power `f > 0` (consistent units):
/// `omega = e / f`, `varpi = sqrt(e (1 + omega)) / (e + f)`.
/// Signal powers evaluated on solved covariances can carry negative dust at
/// the solver tolerance; it is clamped away.
pub fn fp_update(e: f64, f: f64) -> (f64, f64) {
    debug_assert!(e.is_finite() && f > 0.0);
    let e = e.max(0.0);
    let omega = e / f;
    let varpi = (e * (1.0 + omega)).sqrt() / (e + f);
    (omega, varpi)
}

impl FpAuxiliaries {
    /// One full update pass over all slots and users at the current iterate.
    /// `stats[slot][user]` must be evaluated at the geometry the solutions
    /// refer to.
    pub fn update_all(sc: &Scenario, stats: &[Vec<ChannelStats>], sols: &[BeamformingSolution]) -> Self {
        let mut omega = Vec::with_capacity(sc.slots);
        let mut varpi = Vec::with_capacity(sc.slots);
        for n in 0..sc.slots {
            let mut om = Vec::with_capacity(sc.num_users());
            let mut vp = Vec::with_capacity(sc.num_users());
            for m in 0..sc.num_users() {
                let (e, f) = metrics::rate_powers(&stats[n][m], &sols[n], sc.noise_user, m);
                let (o, v) = fp_update(e / sc.noise_user, f / sc.noise_user);
                om.push(o);
                vp.push(v);
            }
            omega.push(om);
            varpi.push(vp);
        }
        Self { omega, varpi }
    }
}

/// The transform evaluated at fixed auxiliaries (all powers in the same
/// units as the auxiliaries were produced with).
pub fn fp_surrogate_rate(omega: f64, varpi: f64, e: f64, f: f64) -> f64 {
    (1.0 + omega).log2() + 2.0 * varpi * (e * (1.0 + omega)).sqrt()
        - omega
        - varpi * varpi * (e + f)
}

/// Everything one slot's beamforming subproblem needs.
pub struct SlotContext<'a> {
    pub sc: &'a Scenario,
    /// Channel summaries for this slot, one per user.
    pub stats: &'a [ChannelStats],
    /// Sensing steering vector at this slot's target angle over the current
    /// transmit layout.
    pub steer_t: &'a CVec,
    /// Sensing weight `alpha * TSS(y)` multiplying `a^H R_x a`.
    pub sens_weight: f64,
    /// Auxiliaries for this slot: `(omega[user], varpi[user])`.
    pub omega: &'a [f64],
    pub varpi: &'a [f64],
    /// Previous iterate, used as the strictly-feasible warm start.
    pub prev: &'a BeamformingSolution,
}

pub struct BuiltSlotProgram {
    pub prog: ConicProgram,
    pub w_blocks: Vec<BlockId>,
    pub r0_block: BlockId,
    pub init: isac_solver::RVec,
}

/// Assemble the lifted per-slot program: PSD blocks per user plus the sensing
/// covariance, the sum-power constraint, epigraph slacks `r <= sqrt(E)` for
/// the concave signal terms, and the linear sensing gain in the objective.
pub fn build_p22(ctx: &SlotContext) -> BuiltSlotProgram {
    let sc = ctx.sc;
    let users = ctx.stats.len();
    let n = sc.n_tx;
    let sigma = sc.noise_user;

    let mut prog = ConicProgram::maximize();
    let w_blocks: Vec<BlockId> = (0..users).map(|_| prog.add_hermitian_psd(n)).collect();
    let r0_block = prog.add_hermitian_psd(n);

    // Noise-normalized signal power of user m as carried by matrix `w`:
    // zeta_los/sigma * hbar^H W hbar + zeta_nlos/sigma * tr(W).
    let power_expr = |prog: &ConicProgram, stats: &ChannelStats, block: BlockId| -> LinExpr {
        let outer = &stats.hbar * stats.hbar.adjoint();
        let mut expr = LinExpr::default();
        expr.add(&prog.herm_trace_product(block, &outer), stats.zeta_los / sigma);
        expr.add(&prog.herm_trace(block), stats.zeta_nlos / sigma);
        expr
    };

    // Power budget, plus redundant per-block trace caps. The caps are
    // implied by PSD-ness and the sum constraint, but they keep every block
    // bounded even when floating-point Cholesky tolerates a microscopically
    // indefinite iterate, which otherwise lets one block's trace run away
    // against another's.
    let mut power = LinExpr::constant(-sc.pmax);
    for &w in &w_blocks {
        power.add(&prog.herm_trace(w), 1.0);
    }
    power.add(&prog.herm_trace(r0_block), 1.0);
    prog.add_lin_le(power);
    for &b in w_blocks.iter().chain(std::iter::once(&r0_block)) {
        let mut cap = prog.herm_trace(b);
        cap.constant = -sc.pmax * 1.0001;
        prog.add_lin_le(cap);
    }

    let mut objective = LinExpr::default();

    // Sensing gain: xi_s * sens_weight * a^H R_x a.
    if sc.xi_s * ctx.sens_weight > 0.0 {
        let steer_outer = ctx.steer_t * ctx.steer_t.adjoint();
        let coef = sc.xi_s * ctx.sens_weight;
        for &w in &w_blocks {
            objective.add(&prog.herm_trace_product(w, &steer_outer), coef);
        }
        objective.add(&prog.herm_trace_product(r0_block, &steer_outer), coef);
    }

    // Rate terms are built for any xi_c (with zero weight they exert no
    // pull but keep the program structure, and hence the optimization path,
    // continuous in the weights).
    let mut init = prog.zero_point();
    let mut r_inits: Vec<(usize, usize)> = Vec::new();
    {
        for m in 0..users {
            let (omega, varpi) = (ctx.omega[m], ctx.varpi[m]);
            objective.constant += sc.xi_c * ((1.0 + omega).log2() - omega);
            if varpi <= 0.0 {
                continue;
            }
            // -varpi^2 * (E_m + F_m), all linear in the blocks.
            let e_expr = power_expr(&prog, &ctx.stats[m], w_blocks[m]);
            let mut ef = e_expr.clone();
            for (i, &w) in w_blocks.iter().enumerate() {
                if i != m {
                    ef.add(&power_expr(&prog, &ctx.stats[m], w), 1.0);
                }
            }
            ef.add(&power_expr(&prog, &ctx.stats[m], r0_block), 1.0);
            ef.constant += 1.0; // normalized noise
            objective.add(&ef, -sc.xi_c * varpi * varpi);

            // 2 varpi sqrt((1 + omega) E_m) via r^2 <= E_m.
            let r = prog.add_scalar();
            objective.push(r, sc.xi_c * 2.0 * varpi * (1.0 + omega).sqrt());
            let mut lin = LinExpr::default();
            lin.add(&e_expr, -1.0);
            let mut p = RMat::zeros(1, 1);
            p[(0, 0)] = 2.0;
            prog.add_quad_le(vec![r], p, lin);
            r_inits.push((r, m));
        }
    }
    prog.set_objective(objective);

    // Strictly interior warm start: shrink the previous blocks and add a
    // sliver of identity, keeping the power sum strictly inside the budget.
    if init.len() < prog.dim() {
        let mut grown = prog.zero_point();
        grown.rows_mut(0, init.len()).copy_from(&init);
        init = grown;
    }
    let blocks = users + 1;
    let ridge = 0.025 * sc.pmax / (blocks as f64 * n as f64);
    let eye = CMat::identity(n, n);
    for (m, &w) in w_blocks.iter().enumerate() {
        let shrunk = &ctx.prev.w_mats[m] * Complex64::new(0.95, 0.0) + &eye * Complex64::new(ridge, 0.0);
        prog.set_hermitian(&mut init, w, &shrunk);
    }
    let r0_init = &ctx.prev.r0 * Complex64::new(0.95, 0.0) + &eye * Complex64::new(ridge, 0.0);
    prog.set_hermitian(&mut init, r0_block, &r0_init);
    for &(r, m) in &r_inits {
        let w_init = prog.hermitian_value(&init, w_blocks[m]);
        let e0 = (ctx.stats[m].zeta_los * metrics::quad_form(&ctx.stats[m].hbar, &w_init)
            + ctx.stats[m].zeta_nlos * w_init.trace().re)
            / sigma;
        init[r] = 0.5 * e0.max(0.0).sqrt();
    }

    BuiltSlotProgram { prog, w_blocks, r0_block, init }
}

/// Solve one slot's beamforming subproblem. Returns the new solution (with
/// extracted vectors when each block is numerically rank-one) together with
/// the per-user dominant-eigenvalue ratios.
pub fn solve_p22(
    ctx: &SlotContext,
    opts: &SolveOptions,
) -> Result<(BeamformingSolution, SolverReport, Vec<f64>), SolverError> {
    let sc = ctx.sc;
    if sc.pmax <= 0.0 {
        // Degenerate budget: the zero design is the only feasible point.
        let sol = BeamformingSolution::zeros(ctx.stats.len(), sc.n_tx);
        let report = SolverReport {
            status: isac_solver::SolveStatus::Optimal,
            objective: 0.0,
            iterations: 0,
            primal_residual: 0.0,
            dual_gap_bound: 0.0,
            wall_time_s: 0.0,
        };
        return Ok((sol, report, vec![1.0; ctx.stats.len()]));
    }

    let built = build_p22(ctx);
    let solution = solve(&built.prog, &built.init, opts)?;

    let w_mats: Vec<CMat> = built
        .w_blocks
        .iter()
        .map(|&b| built.prog.hermitian_value(&solution.z, b))
        .collect();
    let r0 = built.prog.hermitian_value(&solution.z, built.r0_block);

    let mut ratios = Vec::with_capacity(w_mats.len());
    let mut vecs = Vec::with_capacity(w_mats.len());
    let mut all_consistent = true;
    for w in &w_mats {
        let ext = extract_rank_one(w);
        ratios.push(ext.ratio);
        if ext.ratio < 1.0 - VECTOR_CONSISTENCY {
            all_consistent = false;
        }
        vecs.push(ext.vector);
    }
    let sol = BeamformingSolution {
        w_mats,
        r0,
        w_vecs: if all_consistent { Some(vecs) } else { None },
    };
    Ok((sol, solution.report, ratios))
}

/// Dominant eigenpair of a lifted matrix.
#[derive(Debug, Clone)]
pub struct RankOneExtraction {
    /// `sqrt(lambda_1) * u_1`, phase-fixed so the largest-magnitude entry is
    /// real positive.
    pub vector: CVec,
    /// `lambda_1 / tr(W)`; 1 means exactly rank-one.
    pub ratio: f64,
}

pub fn extract_rank_one(w: &CMat) -> RankOneExtraction {
    let n = w.nrows();
    let sym = (w + w.adjoint()) * Complex64::new(0.5, 0.0);
    let trace = sym.trace().re;
    if trace <= 0.0 {
        return RankOneExtraction { vector: CVec::zeros(n), ratio: 1.0 };
    }
    let eig = sym.symmetric_eigen();
    let (mut best, mut best_val) = (0, f64::NEG_INFINITY);
    for (i, &v) in eig.eigenvalues.iter().enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    let mut u = eig.eigenvectors.column(best).into_owned();
    // deterministic global phase
    let (mut k0, mut mag) = (0, 0.0);
    for (i, v) in u.iter().enumerate() {
        if v.norm() > mag {
            mag = v.norm();
            k0 = i;
        }
    }
    if mag > 0.0 {
        let phase = u[k0] / Complex64::new(mag, 0.0);
        u /= phase;
    }
    RankOneExtraction {
        vector: u * Complex64::new(best_val.max(0.0).sqrt(), 0.0),
        ratio: best_val.max(0.0) / trace,
    }
}

/// Gaussian-rounding fallback for blurred lifted matrices: draws candidates
/// `W^(1/2) g`, rescales each to the trace of `W`, and keeps the best under
/// `eval`. Deterministic for a fixed seed.
pub fn randomized_rounding(
    w: &CMat,
    eval: &dyn Fn(&CVec) -> f64,
    samples: usize,
    seed: u64,
) -> (CVec, f64) {
    let n = w.nrows();
    let sym = (w + w.adjoint()) * Complex64::new(0.5, 0.0);
    let trace = sym.trace().re.max(0.0);
    let eig = sym.symmetric_eigen();
    let sqrt_w = {
        let mut d = CMat::zeros(n, n);
        for i in 0..n {
            d[(i, i)] = Complex64::new(eig.eigenvalues[i].max(0.0).sqrt(), 0.0);
        }
        &eig.eigenvectors * d * eig.eigenvectors.adjoint()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = extract_rank_one(w).vector;
    let mut best = base.clone();
    let mut best_val = eval(&base);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    for _ in 0..samples {
        let g = CVec::from_fn(n, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * scale, im * scale)
        });
        let mut cand = &sqrt_w * g;
        let norm2 = cand.norm_squared();
        if norm2 > 0.0 {
            cand *= Complex64::new((trace / norm2).sqrt(), 0.0);
        }
        let v = eval(&cand);
        if v > best_val {
            best_val = v;
            best = cand;
        }
    }
    (best, best_val)
}
