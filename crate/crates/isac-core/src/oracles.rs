//! Independent verification oracles: Monte-Carlo ergodic rates against the
//! exact per-draw SINR, a finite-difference rebuild of the CRB trace
//! expression, and bound-validity sweeps for every surrogate family. These
//! deliberately avoid the implementation paths they check, sharing only the
//! channel-model primitives.

use crate::channel::{self, ChannelStats};
use crate::metrics::{BeamformingSolution, MetricsError};
use crate::scenario::{ArrayKind, ArrayLayout, Scenario};
use crate::trajectory::{self, Trajectory};
use crate::txarray::{self, SurrogateSense};
use isac_solver::{CMat, CVec};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MonteCarloRate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Monte-Carlo ergodic rate of user `m`: draws Rician channels and averages
/// `log2(1 + SINR)` with the exact per-draw SINR.
pub fn mc_ergodic_rate(
    stats: &ChannelStats,
    w_vecs: &[CVec],
    r0: &CMat,
    noise: f64,
    m: usize,
    samples: usize,
    seed: u64,
) -> MonteCarloRate {
    assert!(samples >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let h = channel::sample_channel_with(stats, &mut rng);
        let signal = (h.adjoint() * &w_vecs[m])[(0, 0)].norm_sqr();
        let mut denom = noise + (h.adjoint() * r0 * &h)[(0, 0)].re;
        for (i, w) in w_vecs.iter().enumerate() {
            if i != m {
                denom += (h.adjoint() * w)[(0, 0)].norm_sqr();
            }
        }
        let rate = (1.0 + signal / denom).log2();
        sum += rate;
        sum_sq += rate * rate;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    MonteCarloRate { mean, std_error: (var / n).sqrt(), samples }
}

/// CRB rebuilt with the angle derivative of the receive steering taken by
/// central finite differences, then pushed through the raw trace expression.
/// Agrees with the analytic-derivative trace form to the stencil order.
pub fn fim_numeric_crb(
    tx_layout: &ArrayLayout,
    rx_layout: &ArrayLayout,
    theta_t: f64,
    dist_t: f64,
    sol: &BeamformingSolution,
    sc: &Scenario,
    fd_step: f64,
) -> Result<f64, MetricsError> {
    let lam = sc.wavelength;
    let a = channel::steering(&tx_layout.coords, theta_t, lam);
    let b_plus = channel::steering(&rx_layout.coords, theta_t + fd_step, lam);
    let b_minus = channel::steering(&rx_layout.coords, theta_t - fd_step, lam);
    let b = channel::steering(&rx_layout.coords, theta_t, lam);
    let bdot = (b_plus - b_minus) / Complex64::new(2.0 * fd_step, 0.0);

    // transmit covariance assembled locally
    let n = sol.n_tx();
    let mut rx_cov = sol.r0.clone();
    for w in &sol.w_mats {
        rx_cov += w;
    }
    debug_assert_eq!(rx_cov.nrows(), n);

    let big_a = &b * a.adjoint();
    let big_adot = &bdot * a.adjoint();
    let t1 = (big_adot.adjoint() * &big_adot * &rx_cov).trace().re;
    let t2 = (big_adot.adjoint() * &big_a * &rx_cov).trace();
    let t3 = (big_a.adjoint() * &big_a * &rx_cov).trace().re;
    if t3 <= 1e-300 {
        return Err(MetricsError::SingularFisher(t3));
    }
    let fisher = t1 - t2.norm_sqr() / t3;
    if fisher <= 1e-12 * t1.abs().max(1e-300) {
        return Err(MetricsError::SingularFisher(fisher));
    }
    let scale = sc.rcs / (2.0 * dist_t);
    Ok(sc.noise_radar / (2.0 * scale * scale * sc.frame_len * fisher))
}

/// Outcome of a bound-validity sweep.
#[derive(Debug, Clone, Default, Serialize)]
pub struct BoundSweepReport {
    pub trials: usize,
    pub violations: usize,
    pub worst_violation: f64,
    pub max_tangency_gap: f64,
}

impl BoundSweepReport {
    pub fn ok(&self) -> bool {
        self.violations == 0 && self.max_tangency_gap <= 1e-9
    }

    fn record_bound(&mut self, violation: f64) {
        self.trials += 1;
        if violation > 1e-9 {
            self.violations += 1;
            self.worst_violation = self.worst_violation.max(violation);
        }
    }

    fn record_tangency(&mut self, gap: f64) {
        self.max_tangency_gap = self.max_tangency_gap.max(gap);
    }
}

/// Random Hermitian PSD matrix with the given trace scale.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> CMat {
    let b = CMat::from_fn(n, n, |_, _| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    &b * b.adjoint() * Complex64::new(scale / n as f64, 0.0)
}

/// Random feasible layout with gaps of at least `d_min` inside the segment.
pub fn random_layout(rng: &mut ChaCha8Rng, n: usize, d_min: f64, segment: f64, kind: ArrayKind) -> ArrayLayout {
    let slack = segment - (n - 1) as f64 * d_min;
    let mut extras: Vec<f64> = (0..=n).map(|_| rng.gen_range(0.0f64..1.0)).collect();
    let total: f64 = extras.iter().sum::<f64>().max(1e-12);
    for e in extras.iter_mut() {
        *e *= slack / total;
    }
    let mut coords = Vec::with_capacity(n);
    let mut x = extras[0];
    coords.push(x);
    for k in 1..n {
        x += d_min + extras[k];
        coords.push(x);
    }
    ArrayLayout::new(coords, kind)
}

/// Direct evaluation of the steered power, kept independent of the surrogate
/// code path.
fn direct_power(coef: &CMat, coords: &[f64], theta: f64, wavelength: f64) -> f64 {
    let h = channel::steering(coords, theta, wavelength);
    (h.adjoint() * coef * h)[(0, 0)].re
}

/// Random general-rank transmit design drawn inside the power budget.
pub fn random_solution(rng: &mut ChaCha8Rng, users: usize, n_tx: usize, pmax: f64) -> BeamformingSolution {
    let mut sol = BeamformingSolution::zeros(users, n_tx);
    for w in sol.w_mats.iter_mut() {
        *w = random_psd(rng, n_tx, 1.0);
    }
    sol.r0 = random_psd(rng, n_tx, 1.0);
    let total = sol.total_power();
    let budget = pmax * rng.gen_range(0.3..1.0) / total;
    for w in sol.w_mats.iter_mut() {
        *w *= Complex64::new(budget, 0.0);
    }
    sol.r0 *= Complex64::new(budget, 0.0);
    sol
}

/// Random rank-one beamformers plus a PSD sensing covariance, for checks
/// that need explicit vectors.
pub fn random_rank_one_solution(
    rng: &mut ChaCha8Rng,
    users: usize,
    n_tx: usize,
    pmax: f64,
) -> (Vec<CVec>, CMat) {
    let r0_share = rng.gen_range(0.0..0.3);
    let mut vecs: Vec<CVec> = (0..users)
        .map(|_| {
            CVec::from_fn(n_tx, |_, _| {
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            })
        })
        .collect();
    let share = pmax * (1.0 - r0_share) / users as f64;
    for v in vecs.iter_mut() {
        let norm2 = v.norm_squared();
        *v *= Complex64::new((share / norm2).sqrt(), 0.0);
    }
    let mut r0 = random_psd(rng, n_tx, 1.0);
    r0 *= Complex64::new(pmax * r0_share / r0.trace().re.max(1e-30), 0.0);
    (vecs, r0)
}

/// Beamformers pointed at the users with a random power split plus a random
/// PSD sensing covariance: the configuration class the statistical-rate
/// approximation is consumed on (served links).
pub fn random_served_solution(
    rng: &mut ChaCha8Rng,
    stats: &[ChannelStats],
    pmax: f64,
) -> (Vec<CVec>, CMat) {
    let users = stats.len();
    let n_tx = stats[0].hbar.len();
    let r0_share = rng.gen_range(0.0..0.3);
    let mut shares: Vec<f64> = (0..users).map(|_| rng.gen_range(0.5..1.5)).collect();
    let total: f64 = shares.iter().sum();
    for s in shares.iter_mut() {
        *s *= pmax * (1.0 - r0_share) / total;
    }
    let vecs: Vec<CVec> = stats
        .iter()
        .zip(&shares)
        .map(|(s, &p)| &s.hbar * Complex64::new((p / s.hbar.norm_squared()).sqrt(), 0.0))
        .collect();
    let mut r0 = random_psd(rng, n_tx, 1.0);
    r0 *= Complex64::new(pmax * r0_share / r0.trace().re.max(1e-30), 0.0);
    (vecs, r0)
}

/// Sweep the transmit-position surrogate families: lower and upper brackets
/// must hold at random probes and be tangent at the expansion point.
pub fn position_surrogate_sweep(sc: &Scenario, trials: usize, seed: u64) -> BoundSweepReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = BoundSweepReport::default();
    for _ in 0..trials {
        let n = rng.gen_range(2..=sc.n_tx.max(2));
        let scale = rng.gen_range(0.1..2.0);
        let coef = random_psd(&mut rng, n, scale);
        let about = random_layout(&mut rng, n, sc.d_min, sc.segment_len, ArrayKind::Transmit);
        let theta = rng.gen_range(0.02..std::f64::consts::FRAC_PI_2);
        let lower = txarray::build_surrogate(&coef, theta, sc.wavelength, &about.coords, SurrogateSense::Lower);
        let upper = txarray::build_surrogate(&coef, theta, sc.wavelength, &about.coords, SurrogateSense::Upper);

        let truth0 = direct_power(&coef, &about.coords, theta, sc.wavelength);
        let norm0 = truth0.abs().max(1.0);
        report.record_tangency((lower.eval(&about.coords) - truth0).abs() / norm0);
        report.record_tangency((upper.eval(&about.coords) - truth0).abs() / norm0);

        let probe = random_layout(&mut rng, n, sc.d_min, sc.segment_len, ArrayKind::Transmit);
        let truth = direct_power(&coef, &probe.coords, theta, sc.wavelength);
        let norm = truth.abs().max(1.0);
        report.record_bound((lower.eval(&probe.coords) - truth) / norm);
        report.record_bound((truth - upper.eval(&probe.coords)) / norm);
    }
    report
}

/// Sweep the trajectory bounds: the built surrogate must stay below the
/// frozen-steering objective at random feasible trajectories and match it at
/// the expansion point.
pub fn trajectory_surrogate_sweep(
    sc: &Scenario,
    sols: &[BeamformingSolution],
    tx_layouts: &[ArrayLayout],
    rx_layouts: &[ArrayLayout],
    trials: usize,
    seed: u64,
) -> BoundSweepReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = BoundSweepReport::default();
    let prev = Trajectory::straight_line(sc);
    let lin = trajectory::linearize(sc, &prev, tx_layouts, rx_layouts, sols);

    let frozen0 = trajectory::frozen_objective(sc, &lin, &prev.points);
    let sur0 = trajectory::surrogate_objective(sc, &lin, &prev.points).unwrap();
    report.record_tangency((sur0 - frozen0).abs() / frozen0.abs().max(1.0));

    let cap = sc.vmax * sc.slot_duration;
    for _ in 0..trials {
        let mut pts = prev.points.clone();
        for p in pts.iter_mut().take(sc.slots.saturating_sub(1)).skip(1) {
            p.x += rng.gen_range(-0.45..0.45) * cap;
            p.y += rng.gen_range(-0.45..0.45) * cap;
        }
        let Some(bound) = trajectory::surrogate_objective(sc, &lin, &pts) else {
            continue;
        };
        let truth = trajectory::frozen_objective(sc, &lin, &pts);
        report.record_bound((bound - truth) / truth.abs().max(1.0));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{self, tests_support::random_solution};
    use crate::rxarray::optimal_rx_positions;
    use crate::scenario::tests_support::desk_file;
    use nalgebra::Vector2;

    fn desk() -> Scenario {
        Scenario::from_config(&desk_file()).unwrap()
    }

    fn mrt_vectors(sc: &Scenario, stats: &[ChannelStats]) -> Vec<CVec> {
        stats
            .iter()
            .map(|s| {
                &s.hbar
                    * Complex64::new(
                        (sc.pmax / stats.len() as f64 / s.hbar.norm_squared()).sqrt(),
                        0.0,
                    )
            })
            .collect()
    }

    #[test]
    fn pure_los_mc_rate_is_deterministic() {
        let sc = desk();
        let tx = ArrayLayout::ula(sc.n_tx, sc.d_min, sc.segment_len, ArrayKind::Transmit);
        let uav = Vector2::new(300.0, 300.0);
        let mut stats: Vec<ChannelStats> = sc
            .users
            .iter()
            .map(|u| channel::channel_stats(&sc, &uav, u, &tx))
            .collect();
        for s in stats.iter_mut() {
            s.zeta_los = s.beta;
            s.zeta_nlos = 0.0;
        }
        let vecs = mrt_vectors(&sc, &stats);
        let r0 = CMat::zeros(sc.n_tx, sc.n_tx);
        let sol = BeamformingSolution { w_mats: vecs.iter().map(|v| v * v.adjoint()).collect(), r0: r0.clone(), w_vecs: None };
        let mc = mc_ergodic_rate(&stats[0], &vecs, &r0, sc.noise_user, 0, 2000, 5);
        assert!(mc.std_error < 1e-12, "pure LoS draws must have zero variance");
        let det = metrics::approx_rate(&stats[0], &sol, sc.noise_user, 0);
        assert!((mc.mean - det).abs() < 1e-9 * det);
    }

    #[test]
    fn std_error_shrinks_with_sample_count() {
        let sc = desk();
        let tx = ArrayLayout::ula(sc.n_tx, sc.d_min, sc.segment_len, ArrayKind::Transmit);
        let uav = Vector2::new(250.0, 350.0);
        let stats: Vec<ChannelStats> = sc
            .users
            .iter()
            .map(|u| channel::channel_stats(&sc, &uav, u, &tx))
            .collect();
        let vecs = mrt_vectors(&sc, &stats);
        let r0 = CMat::zeros(sc.n_tx, sc.n_tx);
        let a = mc_ergodic_rate(&stats[1], &vecs, &r0, sc.noise_user, 1, 4000, 7);
        let b = mc_ergodic_rate(&stats[1], &vecs, &r0, sc.noise_user, 1, 8000, 7);
        let ratio = a.std_error / b.std_error;
        assert!(
            (ratio - std::f64::consts::SQRT_2).abs() < 0.25,
            "doubling samples should shrink the error by ~sqrt(2), got {ratio}"
        );
    }

    #[test]
    fn approx_rate_tracks_monte_carlo() {
        let sc = desk();
        let tx = ArrayLayout::ula(sc.n_tx, sc.d_min, sc.segment_len, ArrayKind::Transmit);
        let uav = Vector2::new(420.0, 260.0);
        let stats: Vec<ChannelStats> = sc
            .users
            .iter()
            .map(|u| channel::channel_stats(&sc, &uav, u, &tx))
            .collect();
        let vecs = mrt_vectors(&sc, &stats);
        let sol = BeamformingSolution::from_vectors(vecs.clone(), sc.n_tx);
        for m in 0..sc.num_users() {
            let mc = mc_ergodic_rate(&stats[m], &vecs, &sol.r0, sc.noise_user, m, 100_000, 11 + m as u64);
            let approx = metrics::approx_rate(&stats[m], &sol, sc.noise_user, m);
            let rel = (approx - mc.mean).abs() / mc.mean;
            assert!(rel < 0.10, "user {m}: approx {approx} vs MC {} (rel {rel:.3})", mc.mean);
        }
    }

    #[test]
    fn fd_crb_agrees_with_analytic_trace_form() {
        let sc = desk();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let tx = random_layout(&mut rng, sc.n_tx, sc.d_min, sc.segment_len, ArrayKind::Transmit);
            let rx = random_layout(&mut rng, sc.n_rx, sc.d_min, sc.segment_len, ArrayKind::Receive);
            let sol = random_solution(&mut rng, sc.num_users(), sc.n_tx, sc.pmax);
            let theta = rng.gen_range(0.1..1.4);
            let dist = rng.gen_range(sc.altitude..600.0);
            let fd = fim_numeric_crb(&tx, &rx, theta, dist, &sol, &sc, 1e-6).unwrap();
            let analytic = metrics::crb_trace_form(&tx, &rx, theta, dist, &sol, &sc).unwrap();
            assert!(
                (fd - analytic).abs() / analytic <= 1e-5,
                "fd {fd} vs analytic {analytic}"
            );
            let inv = metrics::inv_crb_closed(&tx, &rx, theta, dist, &sol, &sc).unwrap();
            assert!((fd * inv - 1.0).abs() <= 1e-5);
        }
    }

    #[test]
    fn fd_error_decays_with_the_stencil_order() {
        let sc = desk();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let tx = random_layout(&mut rng, sc.n_tx, sc.d_min, sc.segment_len, ArrayKind::Transmit);
        let rx = random_layout(&mut rng, sc.n_rx, sc.d_min, sc.segment_len, ArrayKind::Receive);
        let sol = random_solution(&mut rng, sc.num_users(), sc.n_tx, sc.pmax);
        let (theta, dist) = (0.8, 250.0);
        let analytic = metrics::crb_trace_form(&tx, &rx, theta, dist, &sol, &sc).unwrap();
        let err = |h: f64| {
            (fim_numeric_crb(&tx, &rx, theta, dist, &sol, &sc, h).unwrap() - analytic).abs()
        };
        // large steps so truncation dominates roundoff
        let e1 = err(1e-2);
        let e2 = err(5e-3);
        let order = (e1 / e2).log2();
        assert!(
            (order - 2.0).abs() < 0.4,
            "central differences should be second order, got {order:.2}"
        );
    }

    #[test]
    fn position_surrogates_sweep_clean() {
        let sc = desk();
        let report = position_surrogate_sweep(&sc, 1000, 17);
        assert!(report.ok(), "{report:?}");
        assert_eq!(report.violations, 0);
    }

    #[test]
    fn trajectory_surrogates_sweep_clean() {
        let sc = desk();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let sols: Vec<BeamformingSolution> = (0..sc.slots)
            .map(|_| random_solution(&mut rng, sc.num_users(), sc.n_tx, sc.pmax))
            .collect();
        let tx = vec![ArrayLayout::ula(sc.n_tx, sc.d_min, sc.segment_len, ArrayKind::Transmit); sc.intervals];
        let rx = vec![optimal_rx_positions(sc.n_rx, sc.d_min, sc.segment_len).unwrap(); sc.intervals];
        let report = trajectory_surrogate_sweep(&sc, &sols, &tx, &rx, 1000, 23);
        assert!(report.ok(), "{report:?}");
    }
}
