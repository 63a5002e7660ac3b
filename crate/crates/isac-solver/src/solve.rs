//! Feasible-start barrier method.
//!
//! Centering is damped Newton with a Jacobi-scaled dense factorization; the
//! outer loop follows the classical path `t <- mu * t` until the barrier gap
//! bound `nu / t` is below the requested relative tolerance. All pivoting is
//! deterministic so repeated solves of the same program are bit-identical.

use crate::program::{BlockId, BlockKind, CMat, ConicProgram, RMat, RVec};
use nalgebra::{Cholesky, LU};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("infeasible starting point: {0}")]
    InfeasibleStart(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    MaxIters,
    Infeasible,
    NumericalFailure,
}

/// Outcome bookkeeping for one solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolverReport {
    pub status: SolveStatus,
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_gap_bound: f64,
    #[serde(skip)]
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Relative duality-gap target.
    pub tol_gap: f64,
    /// Feasibility tolerance for the starting point (equalities).
    pub tol_feas: f64,
    /// Cap on total Newton iterations.
    pub max_iters: usize,
    /// Barrier parameter growth factor.
    pub mu: f64,
    /// Initial barrier parameter.
    pub t0: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol_gap: 1e-7, tol_feas: 1e-8, max_iters: 200, mu: 10.0, t0: 1.0 }
    }
}

/// Feasible iterate plus report.
#[derive(Debug, Clone)]
pub struct Solution {
    pub z: RVec,
    pub report: SolverReport,
}

const NEWTON_DECREMENT_TOL: f64 = 1e-8;
const MAX_NEWTON_PER_STAGE: usize = 80;
const ARMIJO: f64 = 0.25;

fn trace_enabled() -> bool {
    static ENABLED: std::sync::OnceLock<bool> = std::sync::OnceLock::new();
    *ENABLED.get_or_init(|| std::env::var("ISAC_SOLVER_TRACE").ok().as_deref() == Some("1"))
}

/// Hermitian LDL^H with unit lower factor and real pivots. Returns `None`
/// unless every pivot is strictly positive, which is the correct positive
/// definiteness test for Hermitian matrices. (A complex Cholesky based on
/// `try_sqrt` is useless here: complex square roots always exist, so an
/// indefinite matrix still "factors".)
fn herm_ldl(h: &CMat) -> Option<(CMat, RVec)> {
    let n = h.nrows();
    let mut l = CMat::identity(n, n);
    let mut d = RVec::zeros(n);
    for j in 0..n {
        let mut dj = h[(j, j)].re;
        for k in 0..j {
            dj -= l[(j, k)].norm_sqr() * d[k];
        }
        if !(dj > 0.0) || !dj.is_finite() {
            return None;
        }
        d[j] = dj;
        for i in (j + 1)..n {
            let mut v = h[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)].conj() * Complex64::new(d[k], 0.0);
            }
            l[(i, j)] = v / Complex64::new(dj, 0.0);
        }
    }
    Some((l, d))
}

/// Inverse of a Hermitian positive definite matrix from its LDL^H factors.
fn herm_inverse(l: &CMat, d: &RVec) -> CMat {
    let n = l.nrows();
    // columns of the inverse by forward/back substitution
    let mut inv = CMat::zeros(n, n);
    for col in 0..n {
        // L y = e_col
        let mut y = CVecLocal::zeros(n);
        for i in 0..n {
            let mut v = if i == col { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
            for k in 0..i {
                v -= l[(i, k)] * y[k];
            }
            y[i] = v;
        }
        // D z = y
        for i in 0..n {
            y[i] /= Complex64::new(d[i], 0.0);
        }
        // L^H x = z
        for i in (0..n).rev() {
            let mut v = y[i];
            for k in (i + 1)..n {
                v -= l[(k, i)].conj() * y[k];
            }
            y[i] = v;
        }
        for i in 0..n {
            inv[(i, col)] = y[i];
        }
    }
    // symmetrize away substitution rounding
    let sym = (&inv + inv.adjoint()) * Complex64::new(0.5, 0.0);
    sym
}

type CVecLocal = nalgebra::DVector<Complex64>;

struct Workspace {
    grad: RVec,
    hess: RMat,
}

/// Barrier degree used in the gap bound.
fn barrier_degree(prog: &ConicProgram) -> f64 {
    let mut nu = 0.0;
    for b in &prog.blocks {
        if let BlockKind::HermitianPsd { n } = b.kind {
            nu += n as f64;
        }
    }
    nu += prog.lin_ineq.len() as f64;
    nu += 2.0 * prog.quad.len() as f64;
    nu += 2.0 * prog.log_affine.len() as f64;
    nu.max(1.0)
}

/// Scaled minimization objective `(shift - objective) / scale`. The additive
/// shift removes the objective constant so the merit function is not drowned
/// by large fixed offsets, and the scale keeps values near unity.
fn f0(prog: &ConicProgram, z: &RVec, shift: f64, scale: f64) -> f64 {
    (shift - prog.objective_value(z)) / scale
}

fn f0_grad(prog: &ConicProgram, z: &RVec, scale: f64, out: &mut RVec) {
    prog.obj_lin.accumulate(-1.0 / scale, out);
    let ln2 = std::f64::consts::LN_2;
    for t in &prog.obj_exp {
        let v = t.coef * z[t.eta].exp();
        out[t.eta] += t.weight / scale / ln2 * v / (v + t.offset);
    }
}

fn f0_hess(prog: &ConicProgram, z: &RVec, scale: f64, out: &mut RMat) {
    let ln2 = std::f64::consts::LN_2;
    for t in &prog.obj_exp {
        let v = t.coef * z[t.eta].exp();
        let d = v + t.offset;
        out[(t.eta, t.eta)] += t.weight / scale / ln2 * v * t.offset / (d * d);
    }
}

/// Names the first constraint a point is not strictly inside of.
fn diagnose_infeasibility(prog: &ConicProgram, z: &RVec) -> String {
    if z.iter().any(|v| !v.is_finite()) {
        return "non-finite entries".into();
    }
    for (bi, b) in prog.blocks.iter().enumerate() {
        if let BlockKind::HermitianPsd { n } = b.kind {
            let h = prog.hermitian_value(z, BlockId(bi));
            if herm_ldl(&h).is_none() {
                return format!("PSD block {bi} (side {n}) not positive definite");
            }
        }
    }
    for (k, c) in prog.lin_ineq.iter().enumerate() {
        let s = -c.eval(z);
        if !(s > 0.0) {
            return format!("linear inequality {k} slack {s:.3e}");
        }
    }
    for (k, q) in prog.quad.iter().enumerate() {
        let s = -q.eval(z);
        if !(s > 0.0) {
            return format!("quadratic constraint {k} slack {s:.3e} (support {:?})", q.support);
        }
    }
    for (k, la) in prog.log_affine.iter().enumerate() {
        let u = la.u.eval(z);
        if !(u > 0.0) {
            return format!("log-affine constraint {k} rhs {u:.3e}");
        }
        let w = u.ln() + z[la.eta];
        if !(w > 0.0) {
            return format!("log-affine constraint {k} margin {w:.3e}");
        }
    }
    "unknown".into()
}

/// Barrier value, or `None` when `z` is not strictly feasible.
fn barrier_value(prog: &ConicProgram, z: &RVec) -> Option<f64> {
    if z.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut phi = 0.0;
    for (bi, b) in prog.blocks.iter().enumerate() {
        if let BlockKind::HermitianPsd { .. } = b.kind {
            let h = prog.hermitian_value(z, BlockId(bi));
            let (_, d) = herm_ldl(&h)?;
            let mut log_det = 0.0;
            for i in 0..d.len() {
                log_det += d[i].ln();
            }
            phi -= log_det;
        }
    }
    for c in &prog.lin_ineq {
        let s = -c.eval(z);
        if !(s > 0.0) {
            return None;
        }
        phi -= s.ln();
    }
    for q in &prog.quad {
        let s = -q.eval(z);
        if !(s > 0.0) {
            return None;
        }
        phi -= s.ln();
    }
    for la in &prog.log_affine {
        let u = la.u.eval(z);
        if !(u > 0.0) {
            return None;
        }
        let w = u.ln() + z[la.eta];
        if !(w > 0.0) {
            return None;
        }
        phi -= w.ln() + u.ln();
    }
    phi.is_finite().then_some(phi)
}

/// Gradient and Hessian of the barrier at a strictly feasible point.
fn barrier_derivs(prog: &ConicProgram, z: &RVec, ws: &mut Workspace) -> Result<(), SolverError> {
    // Hermitian PSD blocks: -log det H.
    for (bi, b) in prog.blocks.iter().enumerate() {
        let n = match b.kind {
            BlockKind::HermitianPsd { n } => n,
            _ => continue,
        };
        let off = b.offset;
        let h = prog.hermitian_value(z, BlockId(bi));
        let (l, d) = herm_ldl(&h)
            .ok_or_else(|| SolverError::Numerical("PSD block left the cone".into()))?;
        let g: CMat = herm_inverse(&l, &d);

        // Gradient: extraction of -G over the parameter basis.
        let mut k = off;
        for i in 0..n {
            for j in i..n {
                if i == j {
                    ws.grad[k] -= g[(i, i)].re;
                    k += 1;
                } else {
                    ws.grad[k] -= 2.0 * g[(i, j)].re;
                    ws.grad[k + 1] -= 2.0 * g[(i, j)].im;
                    k += 2;
                }
            }
        }

        // Hessian column for basis element b: extract(G E_b G), built from
        // columns of G (G is Hermitian, so G e_i is its i-th column).
        let cols: Vec<nalgebra::DVector<Complex64>> =
            (0..n).map(|i| g.column(i).into_owned()).collect();
        let mut bb = off;
        for bi2 in 0..n {
            for bj in bi2..n {
                let variants: &[(bool, bool)] =
                    if bi2 == bj { &[(true, false)] } else { &[(true, false), (false, true)] };
                for &(_, is_im) in variants {
                    // M = G E G for this basis element.
                    let m: CMat = if bi2 == bj {
                        &cols[bi2] * cols[bi2].adjoint()
                    } else if !is_im {
                        &cols[bi2] * cols[bj].adjoint() + &cols[bj] * cols[bi2].adjoint()
                    } else {
                        (&cols[bi2] * cols[bj].adjoint() - &cols[bj] * cols[bi2].adjoint())
                            * Complex64::i()
                    };
                    let mut aa = off;
                    for i in 0..n {
                        for j in i..n {
                            if i == j {
                                ws.hess[(aa, bb)] += m[(i, i)].re;
                                aa += 1;
                            } else {
                                ws.hess[(aa, bb)] += 2.0 * m[(i, j)].re;
                                ws.hess[(aa + 1, bb)] += 2.0 * m[(i, j)].im;
                                aa += 2;
                            }
                        }
                    }
                    bb += 1;
                }
            }
        }
    }

    // Linear inequalities: -ln(-a'z + b).
    for c in &prog.lin_ineq {
        let s = -c.eval(z);
        let inv = 1.0 / s;
        for &(i, a) in &c.terms {
            ws.grad[i] += inv * a;
        }
        for &(i, ai) in &c.terms {
            for &(j, aj) in &c.terms {
                ws.hess[(i, j)] += inv * inv * ai * aj;
            }
        }
    }

    // Quadratic constraints: -ln(-g), grad g = P z_s + lin.
    for q in &prog.quad {
        let s = -q.eval(z);
        let inv = 1.0 / s;
        let msz = q.support.len();
        let mut sparse_grad: Vec<(usize, f64)> = Vec::with_capacity(msz + q.lin.terms.len());
        for a in 0..msz {
            let mut gval = 0.0;
            for b in 0..msz {
                gval += q.p[(a, b)] * z[q.support[b]];
            }
            sparse_grad.push((q.support[a], gval));
        }
        for &(i, c) in &q.lin.terms {
            sparse_grad.push((i, c));
        }
        for &(i, gi) in &sparse_grad {
            ws.grad[i] += inv * gi;
        }
        for a in 0..msz {
            for b in 0..msz {
                ws.hess[(q.support[a], q.support[b])] += inv * q.p[(a, b)];
            }
        }
        for &(i, gi) in &sparse_grad {
            for &(j, gj) in &sparse_grad {
                ws.hess[(i, j)] += inv * inv * gi * gj;
            }
        }
    }

    // Log-affine: -ln(ln u + eta) - ln u.
    for la in &prog.log_affine {
        let u = la.u.eval(z);
        let w = u.ln() + z[la.eta];
        let (iu, iw) = (1.0 / u, 1.0 / w);
        for &(i, a) in &la.u.terms {
            ws.grad[i] -= a * (iw * iu + iu);
        }
        ws.grad[la.eta] -= iw;
        let czz = (1.0 + w) * iw * iw * iu * iu + iu * iu;
        let cze = iw * iw * iu;
        for &(i, ai) in &la.u.terms {
            for &(j, aj) in &la.u.terms {
                ws.hess[(i, j)] += czz * ai * aj;
            }
            ws.hess[(i, la.eta)] += cze * ai;
            ws.hess[(la.eta, i)] += cze * ai;
        }
        ws.hess[(la.eta, la.eta)] += iw * iw;
    }

    Ok(())
}

/// Solve a Newton/KKT system with Jacobi scaling and a ridge fallback.
fn newton_step(
    hess: &RMat,
    grad: &RVec,
    eq_rows: &[(Vec<(usize, f64)>, f64)],
    dim: usize,
) -> Result<RVec, SolverError> {
    let mut d = RVec::from_element(dim, 1.0);
    for i in 0..dim {
        let h = hess[(i, i)];
        if h > 0.0 && h.is_finite() {
            d[i] = 1.0 / h.sqrt();
        }
    }

    let neq = eq_rows.len();
    if neq == 0 {
        let mut hs = RMat::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                hs[(i, j)] = hess[(i, j)] * d[i] * d[j];
            }
        }
        let gs = RVec::from_fn(dim, |i, _| grad[i] * d[i]);
        let mut ridge = 0.0;
        loop {
            let mut m = hs.clone();
            if ridge > 0.0 {
                for i in 0..dim {
                    m[(i, i)] += ridge;
                }
            }
            if let Some(ch) = Cholesky::new(m) {
                let dy = ch.solve(&(-&gs));
                return Ok(RVec::from_fn(dim, |i, _| dy[i] * d[i]));
            }
            ridge = if ridge == 0.0 { 1e-12 } else { ridge * 100.0 };
            if ridge > 1.0 {
                return Err(SolverError::Numerical("Newton system not factorizable".into()));
            }
        }
    }

    // Equality-constrained KKT system.
    let kdim = dim + neq;
    let mut kkt = RMat::zeros(kdim, kdim);
    let mut rhs = RVec::zeros(kdim);
    for i in 0..dim {
        for j in 0..dim {
            kkt[(i, j)] = hess[(i, j)] * d[i] * d[j];
        }
        rhs[i] = -grad[i] * d[i];
    }
    for (r, (row, resid)) in eq_rows.iter().enumerate() {
        for &(i, a) in row {
            kkt[(dim + r, i)] = a * d[i];
            kkt[(i, dim + r)] = a * d[i];
        }
        rhs[dim + r] = -resid;
    }
    let lu = LU::new(kkt);
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| SolverError::Numerical("KKT system singular".into()))?;
    Ok(RVec::from_fn(dim, |i, _| sol[i] * d[i]))
}

/// Run the barrier method from a strictly feasible starting point.
pub fn solve(prog: &ConicProgram, init: &RVec, opts: &SolveOptions) -> Result<Solution, SolverError> {
    let start = std::time::Instant::now();
    let dim = prog.dim();
    assert_eq!(init.len(), dim, "initial point has wrong dimension");

    for (k, e) in prog.lin_eq.iter().enumerate() {
        let r = e.eval(init);
        if r.abs() > opts.tol_feas * (1.0 + e.constant.abs()) {
            return Err(SolverError::InfeasibleStart(format!(
                "equality {k} residual {r:.3e}"
            )));
        }
    }
    if barrier_value(prog, init).is_none() {
        return Err(SolverError::InfeasibleStart(format!(
            "point is not strictly interior: {}",
            diagnose_infeasibility(prog, init)
        )));
    }

    let nu = barrier_degree(prog);
    let shift = prog.obj_lin.constant;
    let scale = (shift - prog.objective_value(init)).abs().max(1.0);
    let eq_rows: Vec<(Vec<(usize, f64)>, f64)> = prog
        .lin_eq
        .iter()
        .map(|e| (e.terms.clone(), 0.0))
        .collect();

    let mut z = init.clone();
    let mut t = opts.t0;
    let mut iters = 0usize;
    let status;
    let mut stalled = false;

    'outer: loop {
        // Center at the current t.
        let mut stage_iters = 0usize;
        loop {
            let mut ws = Workspace { grad: RVec::zeros(dim), hess: RMat::zeros(dim, dim) };
            f0_grad(prog, &z, scale, &mut ws.grad);
            ws.grad *= t;
            f0_hess(prog, &z, scale, &mut ws.hess);
            ws.hess *= t;
            barrier_derivs(prog, &z, &mut ws)?;

            let mut eq = eq_rows.clone();
            for (k, e) in prog.lin_eq.iter().enumerate() {
                eq[k].1 = e.eval(&z);
            }
            let dz = newton_step(&ws.hess, &ws.grad, &eq, dim)?;
            let decrement2 = dz.dot(&(&ws.hess * &dz));
            iters += 1;
            stage_iters += 1;

            if !(decrement2.is_finite()) {
                return Err(SolverError::Numerical("non-finite Newton decrement".into()));
            }
            if decrement2 / 2.0 <= NEWTON_DECREMENT_TOL {
                break;
            }

            // Backtracking line search preserving strict feasibility. The
            // comparison carries a float-noise allowance so sub-epsilon
            // differences at large merit magnitudes do not read as failure.
            let phi0 = t * f0(prog, &z, shift, scale) + barrier_value(prog, &z).unwrap();
            let slope = ws.grad.dot(&dz);
            let noise = 8.0 * f64::EPSILON * (1.0 + phi0.abs());
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha > 1e-13 {
                let cand = &z + alpha * &dz;
                if let Some(bar) = barrier_value(prog, &cand) {
                    let phi = t * f0(prog, &cand, shift, scale) + bar;
                    if phi <= phi0 + ARMIJO * alpha * slope + noise {
                        z = cand;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if accepted && trace_enabled() {
                let viol = prog.max_violation(&z);
                if viol > 1e-6 {
                    eprintln!(
                        "solver escaped feasibility: t={t:.3e} iter={iters} violation={viol:.3e} ({})",
                        diagnose_infeasibility(prog, &z)
                    );
                    for (bi, b) in prog.blocks.iter().enumerate() {
                        if let BlockKind::HermitianPsd { .. } = b.kind {
                            let h = prog.hermitian_value(&z, BlockId(bi));
                            let eig = h.clone().symmetric_eigen().eigenvalues;
                            let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
                            let maxe = h.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
                            if min < -1e-6 {
                                eprintln!(
                                    "  block {bi}: trace {:.3e} min_eig {min:.3e} max|entry| {maxe:.3e} chol {}",
                                    h.trace().re,
                                    herm_ldl(&h).is_some()
                                );
                            }
                        }
                    }
                }
            }
            if !accepted {
                if trace_enabled() {
                    eprintln!(
                        "solver stall: t={t:.3e} decr2={decrement2:.3e} slope={slope:.3e} phi0={phi0:.6e}"
                    );
                }
                stalled = true;
                break;
            }
            if stage_iters >= MAX_NEWTON_PER_STAGE || iters >= opts.max_iters {
                break;
            }
        }

        let gap_scaled = nu / t;
        let f_now = f0(prog, &z, shift, scale).abs();
        if gap_scaled <= opts.tol_gap * f_now.max(1.0) {
            status = SolveStatus::Optimal;
            break 'outer;
        }
        if iters >= opts.max_iters {
            status = SolveStatus::MaxIters;
            break 'outer;
        }
        if stalled {
            if gap_scaled <= 100.0 * opts.tol_gap * f_now.max(1.0) {
                status = SolveStatus::MaxIters;
                break 'outer;
            }
            return Err(SolverError::Numerical(format!(
                "line search stalled at gap bound {gap_scaled:.3e} (target {:.3e})",
                opts.tol_gap * f_now.max(1.0)
            )));
        }
        t *= opts.mu;
    }

    let mut primal_residual: f64 = 0.0;
    for e in &prog.lin_eq {
        primal_residual = primal_residual.max(e.eval(&z).abs());
    }

    let report = SolverReport {
        status,
        objective: prog.objective_value(&z),
        iterations: iters,
        primal_residual,
        dual_gap_bound: nu / t * scale,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok(Solution { z, report })
}
