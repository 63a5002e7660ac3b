//! The `verify` subcommand: every closed form and bound gets checked against
//! its independent oracle, one pass/fail line per check.

use isac_core::metrics::{self, tss, BeamformingSolution};
use isac_core::scenario::{ArrayKind, ArrayLayout, Scenario, ScenarioFile};
use isac_core::{channel, oracles, rxarray};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

const BUNDLED_SCENARIO: &str = include_str!("../../../scenarios/desk.json");

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn report(checks: &[Check]) -> bool {
    let mut all = true;
    for c in checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        println!("{tag} {}: {}", c.name, c.detail);
        all &= c.passed;
    }
    all
}

pub fn cmd_verify(
    scenario: Option<&Path>,
    trials: usize,
    seed: u64,
    mc_samples: usize,
) -> anyhow::Result<bool> {
    let sc = match scenario {
        Some(p) => isac_core::load_scenario(p)?,
        None => {
            let file: ScenarioFile = serde_json::from_str(BUNDLED_SCENARIO)?;
            Scenario::from_config(&file)?
        }
    };
    let mut checks = Vec::new();

    // 1. CRB closed form vs trace expression vs finite differences.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0FFEE);
        let mut worst_product = 0.0f64;
        let mut worst_fd = 0.0f64;
        for _ in 0..100 {
            let tx = oracles::random_layout(&mut rng, sc.n_tx, sc.d_min, sc.segment_len, ArrayKind::Transmit);
            let rx = oracles::random_layout(&mut rng, sc.n_rx, sc.d_min, sc.segment_len, ArrayKind::Receive);
            let sol = oracles::random_solution(&mut rng, sc.num_users().max(1), sc.n_tx, sc.pmax);
            let theta = rng.gen_range(0.1..1.45);
            let dist = rng.gen_range(sc.altitude..6.0 * sc.altitude);
            let crb = metrics::crb_trace_form(&tx, &rx, theta, dist, &sol, &sc)?;
            let inv = metrics::inv_crb_closed(&tx, &rx, theta, dist, &sol, &sc)?;
            worst_product = worst_product.max((crb * inv - 1.0).abs());
            let fd = oracles::fim_numeric_crb(&tx, &rx, theta, dist, &sol, &sc, 1e-6)?;
            worst_fd = worst_fd.max((fd - crb).abs() / crb);
        }
        checks.push(Check {
            name: "crb-equivalence",
            passed: worst_product <= 1e-8 && worst_fd <= 1e-5,
            detail: format!(
                "max |crb*inv_crb - 1| = {worst_product:.2e} (<= 1e-8), max fd mismatch {worst_fd:.2e} (<= 1e-5)"
            ),
        });
    }

    // 2. Receive placement: closed form vs brute force and the uniform layout.
    {
        let mut ok = true;
        let mut detail = String::new();
        for n in 2..=12 {
            let closed = rxarray::optimal_rx_positions(n, sc.d_min, sc.segment_len)?;
            let brute = rxarray::brute_force_rx(n, sc.d_min, sc.segment_len, 1e-3 * sc.wavelength);
            let ula = ArrayLayout::ula(n, sc.d_min, sc.segment_len, ArrayKind::Receive);
            let t_closed = tss(&closed.coords);
            if t_closed < tss(&brute.coords) - 1e-12 {
                ok = false;
                detail = format!("n = {n}: brute force beat the closed form");
                break;
            }
            let slack = sc.segment_len - (n - 1) as f64 * sc.d_min;
            if slack > 1e-9 && n > 2 && t_closed <= tss(&ula.coords) {
                ok = false;
                detail = format!("n = {n}: closed form does not beat the uniform layout");
                break;
            }
        }
        if ok {
            detail = "closed form matches brute force and beats uniform layouts for n in 2..=12".into();
        }
        checks.push(Check { name: "receive-placement", passed: ok, detail });
    }

    // 3. Position surrogate bounds.
    {
        let rep = oracles::position_surrogate_sweep(&sc, trials, seed ^ 0xA11CE);
        checks.push(Check {
            name: "position-surrogates",
            passed: rep.ok(),
            detail: format!(
                "{} checks, {} violations, max tangency gap {:.2e}",
                rep.trials, rep.violations, rep.max_tangency_gap
            ),
        });
    }

    // 4. Trajectory surrogate bounds.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xBEEF);
        let sols: Vec<BeamformingSolution> = (0..sc.slots)
            .map(|_| oracles::random_solution(&mut rng, sc.num_users(), sc.n_tx, sc.pmax))
            .collect();
        let tx = vec![ArrayLayout::ula(sc.n_tx, sc.d_min, sc.segment_len, ArrayKind::Transmit); sc.intervals];
        let rx = vec![rxarray::optimal_rx_positions(sc.n_rx, sc.d_min, sc.segment_len)?; sc.intervals];
        let rep = oracles::trajectory_surrogate_sweep(&sc, &sols, &tx, &rx, trials, seed ^ 0xD00D);
        checks.push(Check {
            name: "trajectory-surrogates",
            passed: rep.ok(),
            detail: format!(
                "{} checks, {} violations, max tangency gap {:.2e}",
                rep.trials, rep.violations, rep.max_tangency_gap
            ),
        });
    }

    // 5. Statistical-rate approximation vs Monte Carlo.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
        let mut worst = 0.0f64;
        let configs = 5;
        for k in 0..configs {
            let tx = oracles::random_layout(&mut rng, sc.n_tx, sc.d_min, sc.segment_len, ArrayKind::Transmit);
            let t: f64 = rng.gen_range(0.0..1.0);
            let uav = sc.uav_start + (sc.uav_end - sc.uav_start) * t;
            let stats: Vec<_> = sc.users.iter().map(|u| channel::channel_stats(&sc, &uav, u, &tx)).collect();
            if stats.is_empty() {
                break;
            }
            let (vecs, r0) = oracles::random_served_solution(&mut rng, &stats, sc.pmax);
            let sol = BeamformingSolution {
                w_mats: vecs.iter().map(|v| v * v.adjoint()).collect(),
                r0: r0.clone(),
                w_vecs: None,
            };
            for m in 0..sc.num_users() {
                let mc = oracles::mc_ergodic_rate(
                    &stats[m],
                    &vecs,
                    &r0,
                    sc.noise_user,
                    m,
                    mc_samples,
                    seed ^ (k as u64 * 101 + m as u64),
                );
                let approx = metrics::approx_rate(&stats[m], &sol, sc.noise_user, m);
                worst = worst.max((approx - mc.mean).abs() / mc.mean.abs().max(1e-12));
            }
        }
        checks.push(Check {
            name: "rate-approximation",
            passed: worst <= 0.10,
            detail: format!("max relative gap to Monte Carlo = {worst:.3} (<= 0.10)"),
        });
    }

    Ok(report(&checks))
}
