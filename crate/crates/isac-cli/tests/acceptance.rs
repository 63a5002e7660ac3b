//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL line. Numeric tolerances on objective-valued quantities are
//! relative with a floor of one, since the sensing summand reaches ~1e14
//! at the stock radio constants.

use isac_core::ao::{self, AoOptions};
use isac_core::baselines::{self, PsoOptions};
use isac_core::beamforming::RANK_ONE_THRESHOLD;
use isac_core::metrics::{self, tss, BeamformingSolution};
use isac_core::scenario::{ArrayKind, ArrayLayout, Scenario, ScenarioFile};
use isac_core::trajectory::Trajectory;
use isac_core::txarray::{build_surrogate, psd_sign_check, SurrogateSense};
use isac_core::{channel, oracles, rxarray};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn desk() -> Scenario {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/desk.json");
    isac_core::load_scenario(std::path::Path::new(path)).expect("desk scenario")
}

fn desk_with(f: impl FnOnce(&mut ScenarioFile)) -> Scenario {
    let mut file = desk().to_config();
    f(&mut file);
    Scenario::from_config(&file).expect("modified desk scenario")
}

fn verdict(criterion: &str, passed: bool, detail: &str) {
    println!("{} criterion {criterion}: {detail}", if passed { "PASS" } else { "FAIL" });
    assert!(passed, "criterion {criterion}: {detail}");
}

fn rel_ge(a: f64, b: f64, tol: f64) -> bool {
    a >= b - tol * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn criterion_01_crb_equivalence() {
    let start = Instant::now();
    let sc = desk();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_product = 0.0f64;
    let mut worst_fd = 0.0f64;
    for _ in 0..100 {
        let tx = oracles::random_layout(&mut rng, sc.n_tx, sc.d_min, sc.segment_len, ArrayKind::Transmit);
        let rx = oracles::random_layout(&mut rng, sc.n_rx, sc.d_min, sc.segment_len, ArrayKind::Receive);
        let sol = oracles::random_solution(&mut rng, sc.num_users(), sc.n_tx, sc.pmax);
        let theta = rng.gen_range(0.1..1.45);
        let dist = rng.gen_range(sc.altitude..600.0);
        let crb = metrics::crb_trace_form(&tx, &rx, theta, dist, &sol, &sc).unwrap();
        let inv = metrics::inv_crb_closed(&tx, &rx, theta, dist, &sol, &sc).unwrap();
        worst_product = worst_product.max((crb * inv - 1.0).abs());
        let fd = oracles::fim_numeric_crb(&tx, &rx, theta, dist, &sol, &sc, 1e-6).unwrap();
        worst_fd = worst_fd.max((fd - crb).abs() / crb);
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        "1 (CRB equivalence)",
        worst_product <= 1e-8 && worst_fd <= 1e-5 && elapsed < 5.0,
        &format!(
            "100 instances: max |crb*inv_crb - 1| = {worst_product:.2e} (<= 1e-8), \
             max finite-difference mismatch {worst_fd:.2e} (<= 1e-5), {elapsed:.2} s (< 5 s)"
        ),
    );
}

#[test]
fn criterion_02_receive_placement() {
    let start = Instant::now();
    let sc = desk();
    let mut ok = true;
    let mut detail = String::new();
    for n in 2..=12 {
        let closed = rxarray::optimal_rx_positions(n, sc.d_min, sc.segment_len).unwrap();
        let brute = rxarray::brute_force_rx(n, sc.d_min, sc.segment_len, 1e-3 * sc.wavelength);
        let ula = ArrayLayout::ula(n, sc.d_min, sc.segment_len, ArrayKind::Receive);
        let t = tss(&closed.coords);
        if t < tss(&brute.coords) - 1e-12 {
            ok = false;
            detail = format!("n = {n}: closed form below brute-force maximum");
            break;
        }
        let slack = sc.segment_len - (n - 1) as f64 * sc.d_min;
        if n > 2 && slack > 1e-9 && t <= tss(&ula.coords) {
            ok = false;
            detail = format!("n = {n}: no strict gain over the uniform layout");
            break;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    if ok {
        detail = format!(
            "closed form equals brute-force TSS and strictly beats uniform layouts for n in 2..=12, {elapsed:.2} s (< 10 s)"
        );
    }
    verdict("2 (receive placement optimality)", ok && elapsed < 10.0, &detail);
}

#[test]
fn criterion_03_surrogate_validity() {
    let sc = desk();
    let pos = oracles::position_surrogate_sweep(&sc, 1000, 103);
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let sols: Vec<BeamformingSolution> = (0..sc.slots)
        .map(|_| oracles::random_solution(&mut rng, sc.num_users(), sc.n_tx, sc.pmax))
        .collect();
    let tx = vec![ArrayLayout::ula(sc.n_tx, sc.d_min, sc.segment_len, ArrayKind::Transmit); sc.intervals];
    let rx = vec![rxarray::optimal_rx_positions(sc.n_rx, sc.d_min, sc.segment_len).unwrap(); sc.intervals];
    let traj = oracles::trajectory_surrogate_sweep(&sc, &sols, &tx, &rx, 1000, 105);
    verdict(
        "3 (surrogate validity)",
        pos.ok() && traj.ok(),
        &format!(
            "position bounds: {} checks, {} violations, tangency {:.1e}; \
             trajectory bounds: {} checks, {} violations, tangency {:.1e} (>= 1e-9 counts as violation)",
            pos.trials, pos.violations, pos.max_tangency_gap, traj.trials, traj.violations, traj.max_tangency_gap
        ),
    );
}

#[test]
fn criterion_04_curvature_sign_structure() {
    let sc = desk();
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut lower_ok = 0usize;
    let mut upper_ok = 0usize;
    let trials = 1000;
    for _ in 0..trials {
        let n = rng.gen_range(2..=8);
        let scale = rng.gen_range(0.1..3.0);
        let coef = oracles::random_psd(&mut rng, n, scale);
        let about = oracles::random_layout(&mut rng, n, sc.d_min, sc.segment_len, ArrayKind::Transmit);
        let theta = rng.gen_range(0.02..1.55);
        let lo = build_surrogate(&coef, theta, sc.wavelength, &about.coords, SurrogateSense::Lower);
        let hi = build_surrogate(&coef, theta, sc.wavelength, &about.coords, SurrogateSense::Upper);
        lower_ok += usize::from(psd_sign_check(&lo));
        upper_ok += usize::from(psd_sign_check(&hi));
    }
    verdict(
        "4 (curvature sign structure)",
        lower_ok == trials && upper_ok == trials,
        &format!(
            "{trials} random coefficient matrices: {lower_ok} lower surrogates NSD, {upper_ok} upper surrogates PSD \
             (eigenvalue tolerance -1e-9 * norm)"
        ),
    );
}

#[test]
fn criterion_05_rank_one_share() {
    let sc = desk();
    let state = ao::run(&sc, &AoOptions { max_outer: 3, ..AoOptions::default() }).unwrap();
    let mut ratios: Vec<f64> = Vec::new();
    let mut fallbacks = 0usize;
    for rec in &state.trace {
        ratios.extend(rec.rank_one_ratios.iter().copied());
        fallbacks += rec.rank_one_fallbacks;
    }
    let first50: Vec<f64> = ratios.iter().copied().take(50).collect();
    let good = first50.iter().filter(|&&r| r >= 0.999).count();
    let below_threshold = first50.iter().filter(|&&r| r < RANK_ONE_THRESHOLD).count();
    let share = good as f64 / first50.len() as f64;
    verdict(
        "5 (rank-one share)",
        first50.len() == 50 && share >= 0.95,
        &format!(
            "50 solved per-slot instances: {good}/50 with dominant-eigenvalue ratio >= 0.999 \
             (need >= 95%), {below_threshold} below the fallback threshold, {fallbacks} fallback events logged"
        ),
    );
}

#[test]
fn criterion_06_ao_convergence() {
    let start = Instant::now();
    let sc = desk();
    let opts = AoOptions { eps: 1e-3, max_outer: 30, ..AoOptions::default() };
    let state = ao::run(&sc, &opts).unwrap();
    let warnings: Vec<String> = state.trace.iter().flat_map(|r| r.warnings.clone()).collect();
    let mut monotone = true;
    let mut last = 0.0f64;
    for rec in &state.trace {
        if rec.objective < last - 1e-4 * last.abs().max(1.0) {
            monotone = false;
        }
        last = rec.objective;
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        "6 (AO convergence)",
        state.converged && state.iterations <= 30 && warnings.is_empty() && monotone && elapsed < 600.0,
        &format!(
            "converged in {} outer iterations (<= 30, relative eps 1e-3), monotone trace \
             (sub-step 1e-6, end-to-end 1e-4, relative), {} warnings, {elapsed:.1} s (< 600 s)",
            state.iterations,
            warnings.len()
        ),
    );
}

#[test]
fn criterion_07_rate_approximation() {
    let sc = desk();
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for k in 0..20u64 {
        let tx = oracles::random_layout(&mut rng, sc.n_tx, sc.d_min, sc.segment_len, ArrayKind::Transmit);
        let t: f64 = rng.gen_range(0.0..1.0);
        let uav = sc.uav_start + (sc.uav_end - sc.uav_start) * t;
        let stats: Vec<_> = sc.users.iter().map(|u| channel::channel_stats(&sc, &uav, u, &tx)).collect();
        let (vecs, r0) = oracles::random_served_solution(&mut rng, &stats, sc.pmax);
        let sol = BeamformingSolution {
            w_mats: vecs.iter().map(|v| v * v.adjoint()).collect(),
            r0: r0.clone(),
            w_vecs: None,
        };
        for m in 0..sc.num_users() {
            let mc = oracles::mc_ergodic_rate(&stats[m], &vecs, &r0, sc.noise_user, m, 100_000, 1_000 + 31 * k + m as u64);
            let approx = metrics::approx_rate(&stats[m], &sol, sc.noise_user, m);
            worst = worst.max((approx - mc.mean).abs() / mc.mean.abs().max(1e-12));
            checked += 1;
        }
    }
    verdict(
        "7 (statistical rate accuracy)",
        worst <= 0.10,
        &format!(
            "{checked} served links over 20 configurations at 1e5 samples: \
             max relative gap to Monte Carlo {worst:.3} (<= 0.10)"
        ),
    );
}

#[test]
fn criterion_08_scheme_ordering() {
    let sc = desk();
    let opts = AoOptions { max_outer: 8, ..AoOptions::default() };
    let pso_opts = PsoOptions { swarm: 6, iters: 4, ..PsoOptions::default() };

    let proposed = ao::run(&sc, &opts).unwrap().objective(&sc).unwrap().objective;
    let fpa = baselines::run_fpa(&sc, &opts).unwrap().objective(&sc).unwrap().objective;

    let seeds = [11u64, 22, 33, 44, 55];
    let mut ok = true;
    let mut detail = String::new();
    let mut rpa_values = Vec::new();
    for &seed in &seeds {
        let pso = baselines::run_pso(&sc, &pso_opts, seed, &opts)
            .unwrap()
            .objective(&sc)
            .unwrap()
            .objective;
        let rpa = baselines::run_rpa(&sc, seed, &opts).unwrap().objective(&sc).unwrap().objective;
        rpa_values.push(rpa);
        if !rel_ge(proposed, pso, 1e-6) {
            ok = false;
            detail = format!("seed {seed}: proposed {proposed:.4e} < pso {pso:.4e}");
            break;
        }
        if !rel_ge(pso, rpa, 1e-6) {
            ok = false;
            detail = format!("seed {seed}: pso {pso:.4e} < rpa {rpa:.4e}");
            break;
        }
    }
    let rpa_mean = rpa_values.iter().sum::<f64>() / rpa_values.len().max(1) as f64;
    if ok && !rel_ge(proposed, fpa, 1e-6) {
        ok = false;
        detail = format!("proposed {proposed:.4e} < fpa {fpa:.4e}");
    }
    if ok {
        detail = format!(
            "5 matched seeds: proposed {proposed:.3e} >= pso >= rpa (per seed, mean rpa {rpa_mean:.3e}), \
             proposed >= fpa {fpa:.3e}, margins within solver tolerance"
        );
    }
    verdict("8 (scheme ordering)", ok, &detail);
}

#[test]
fn criterion_09_tradeoff_monotonicity() {
    let weights = [0.0, 0.25, 0.5, 0.75, 1.0];
    let opts = AoOptions { max_outer: 12, ..AoOptions::default() };
    let mut rates = Vec::new();
    let mut invs = Vec::new();
    for &w in &weights {
        let sc = desk_with(|f| {
            f.objective.xi_c = w;
            f.objective.xi_s = None;
        });
        let bd = ao::run(&sc, &opts).unwrap().objective(&sc).unwrap();
        rates.push(bd.sum_rate);
        invs.push(bd.total_inv_crb);
    }
    // runs at adjacent interior weights are numerically tied (the sensing
    // summand dominates by ~13 orders at the stock constants), so ties are
    // compared at the convergence resolution
    let mut ok = true;
    let mut detail = String::new();
    for k in 1..weights.len() {
        if !rel_ge(rates[k], rates[k - 1], 1e-9) {
            ok = false;
            detail = format!(
                "sum rate decreased: xi_c {} -> {}: {:.6} -> {:.6}",
                weights[k - 1],
                weights[k],
                rates[k - 1],
                rates[k]
            );
            break;
        }
        if !rel_ge(invs[k - 1], invs[k], 1e-4) {
            ok = false;
            detail = format!(
                "inverse CRB increased: xi_c {} -> {}: {:.6e} -> {:.6e}",
                weights[k - 1],
                weights[k],
                invs[k - 1],
                invs[k]
            );
            break;
        }
    }
    if ok {
        detail = format!(
            "sum rate nondecreasing {:?}, inverse CRB nonincreasing {:?} over xi_c {:?}",
            rates.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>(),
            invs.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>(),
            weights
        );
    }
    verdict("9 (trade-off monotonicity)", ok, &detail);
}

#[test]
fn criterion_10_sweep_trends() {
    let opts = AoOptions { max_outer: 6, ..AoOptions::default() };
    let pso_opts = PsoOptions { swarm: 4, iters: 3, ..PsoOptions::default() };
    let seed = 7u64;

    #[derive(Clone, Copy, PartialEq)]
    enum S {
        Proposed,
        Fpa,
        Rpa,
        Pso,
    }
    let schemes = [(S::Proposed, "proposed"), (S::Fpa, "fpa"), (S::Rpa, "rpa"), (S::Pso, "pso")];
    let run = |sc: &Scenario, s: S| -> f64 {
        let state = match s {
            S::Proposed => ao::run(sc, &opts),
            S::Fpa => baselines::run_fpa(sc, &opts),
            S::Rpa => baselines::run_rpa(sc, seed, &opts),
            S::Pso => baselines::run_pso(sc, &pso_opts, seed, &opts),
        }
        .unwrap();
        state.objective(sc).unwrap().objective
    };

    let mut ok = true;
    let mut detail = String::new();

    for (s, name) in schemes {
        let power: Vec<f64> = [20.0, 25.0, 30.0]
            .iter()
            .map(|&dbm| run(&desk_with(|f| f.radio.pmax_dbm = dbm), s))
            .collect();
        if !(rel_ge(power[1], power[0], 1e-6) && rel_ge(power[2], power[1], 1e-6)) {
            ok = false;
            detail = format!("{name}: objective not nondecreasing in power: {power:?}");
            break;
        }
        let antennas: Vec<f64> = [4usize, 6, 8]
            .iter()
            .map(|&n| {
                run(
                    &desk_with(|f| {
                        f.arrays.n_tx = n;
                        f.arrays.n_rx = n;
                    }),
                    s,
                )
            })
            .collect();
        if !(rel_ge(antennas[1], antennas[0], 1e-6) && rel_ge(antennas[2], antennas[1], 1e-6)) {
            ok = false;
            detail = format!("{name}: objective not nondecreasing in antenna count: {antennas:?}");
            break;
        }
        let alts: Vec<f64> = (1..=8)
            .map(|k| run(&desk_with(|f| f.geometry.altitude_m = 50.0 * k as f64), s))
            .collect();
        let argmax = alts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if argmax == 0 || argmax == alts.len() - 1 {
            ok = false;
            detail = format!("{name}: altitude argmax at the sweep boundary: {alts:?}");
            break;
        }
    }
    if ok {
        detail = "objective nondecreasing in power {20,25,30} dBm and antennas {4,6,8}, \
                  altitude argmax interior on {50..400} m, for proposed/fpa/rpa/pso"
            .to_string();
    }
    verdict("10 (sweep trends)", ok, &detail);
}

#[test]
fn criterion_11_cli_determinism() {
    let bin = env!("CARGO_BIN_EXE_isac");
    let scenario = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/desk.json");
    let tmp = std::env::temp_dir().join(format!("isac-accept-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&tmp);

    let run_all = |dir: &std::path::Path| {
        let out = dir.join("run");
        let status = std::process::Command::new(bin)
            .args(["run", "--scenario", scenario, "--scheme", "rpa", "--seed", "9"])
            .arg("--out")
            .arg(&out)
            .args(["--max-outer", "3"])
            .status()
            .unwrap();
        assert!(status.success());
        let status = std::process::Command::new(bin)
            .args(["beampattern", "--slot", "4", "--grid", "0,800,0,800,200"])
            .arg("--run")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        let sweep = dir.join("sweep");
        let status = std::process::Command::new(bin)
            .args(["sweep", "--scenario", scenario, "--axis", "power", "--values", "25,30"])
            .args(["--schemes", "fpa", "--seed", "9", "--max-outer", "2"])
            .arg("--out")
            .arg(&sweep)
            .status()
            .unwrap();
        assert!(status.success());
    };

    run_all(&tmp.join("a"));
    run_all(&tmp.join("b"));

    let mut compared = 0usize;
    let mut ok = true;
    let mut detail = String::new();
    for rel in [
        "run/run.json",
        "run/trace.csv",
        "run/trajectory.csv",
        "run/metrics.csv",
        "run/beampattern_slot4.csv",
        "sweep/sweep_power.csv",
    ] {
        let a = std::fs::read(tmp.join("a").join(rel)).unwrap();
        let b = std::fs::read(tmp.join("b").join(rel)).unwrap();
        compared += 1;
        if a != b {
            ok = false;
            detail = format!("{rel} differs between identical invocations");
            break;
        }
    }
    if ok {
        detail = format!("{compared} output files byte-identical across repeated invocations");
    }
    let _ = std::fs::remove_dir_all(&tmp);
    verdict("11 (CLI determinism)", ok, &detail);
}
