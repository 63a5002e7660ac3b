//! Benchmark schemes: fixed uniform arrays, random positions, and a particle
//! swarm over the gap-parameterized position space. Each reuses the same
//! alternating loop for every other variable block.

use crate::ao::{self, AoOptions, AoState, PipelineError};
use crate::beamforming::{self, SlotContext};
use crate::channel;
use crate::metrics;
use crate::scenario::{ArrayKind, ArrayLayout, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform layouts on both sides, positions never touched again.
pub fn run_fpa(sc: &Scenario, opts: &AoOptions) -> Result<AoState, PipelineError> {
    let mut state = ao::initialize(sc)?;
    let tx = ArrayLayout::ula(sc.n_tx, sc.d_min, sc.segment_len, ArrayKind::Transmit);
    let rx = ArrayLayout::ula(sc.n_rx, sc.d_min, sc.segment_len, ArrayKind::Receive);
    state.tx_layouts = vec![tx; sc.intervals];
    state.rx_layouts = vec![rx; sc.intervals];
    let opts = AoOptions {
        optimize_tx_positions: false,
        optimize_rx_positions: false,
        ..opts.clone()
    };
    ao::run_from(sc, state, &opts)
}

/// Uniform draw from the spacing polytope: the gap excesses, the leading
/// shift, and the trailing leftover are jointly Dirichlet over the slack.
pub fn sample_layout(rng: &mut ChaCha8Rng, n: usize, d_min: f64, segment: f64, kind: ArrayKind) -> ArrayLayout {
    let slack = segment - (n - 1) as f64 * d_min;
    let parts = n + 1; // shift + (n-1) gap excesses + leftover
    let draws: Vec<f64> = (0..parts)
        .map(|_| {
            let u: f64 = rng.gen_range(0.0..1.0);
            (-(1.0 - u).ln()).max(1e-12)
        })
        .collect();
    let total: f64 = draws.iter().sum();
    let mut coords = Vec::with_capacity(n);
    let mut x = slack * draws[0] / total;
    coords.push(x);
    for k in 1..n {
        x += d_min + slack * draws[k] / total;
        coords.push(x);
    }
    ArrayLayout::new(coords, kind)
}

/// Random fixed positions per interval, everything else optimized.
pub fn run_rpa(sc: &Scenario, seed: u64, opts: &AoOptions) -> Result<AoState, PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = ao::initialize(sc)?;
    state.tx_layouts = (0..sc.intervals)
        .map(|_| sample_layout(&mut rng, sc.n_tx, sc.d_min, sc.segment_len, ArrayKind::Transmit))
        .collect();
    state.rx_layouts = (0..sc.intervals)
        .map(|_| sample_layout(&mut rng, sc.n_rx, sc.d_min, sc.segment_len, ArrayKind::Receive))
        .collect();
    let opts = AoOptions {
        optimize_tx_positions: false,
        optimize_rx_positions: false,
        ..opts.clone()
    };
    ao::run_from(sc, state, &opts)
}

/// Stick-breaking map from the unit box to the spacing polytope: coordinate
/// `k` consumes a fraction of the remaining slack, so boundary-clustered
/// layouts (all slack in one gap) are reachable.
pub fn layout_from_box(raw: &[f64], n: usize, d_min: f64, segment: f64, kind: ArrayKind) -> ArrayLayout {
    assert_eq!(raw.len(), n);
    let mut remaining = segment - (n - 1) as f64 * d_min;
    let mut extras = Vec::with_capacity(n - 1);
    for &r in raw.iter().take(n - 1) {
        let e = r.clamp(0.0, 1.0) * remaining;
        extras.push(e);
        remaining -= e;
    }
    let shift = raw[n - 1].clamp(0.0, 1.0) * remaining;
    let mut coords = Vec::with_capacity(n);
    let mut x = shift;
    coords.push(x);
    for e in extras {
        x += d_min + e;
        coords.push(x);
    }
    ArrayLayout::new(coords, kind)
}

#[derive(Debug, Clone)]
pub struct PsoOptions {
    pub swarm: usize,
    pub iters: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
}

impl Default for PsoOptions {
    fn default() -> Self {
        Self { swarm: 20, iters: 30, inertia: 0.7, cognitive: 1.5, social: 1.5 }
    }
}

/// Exact weighted objective of one interval's slots with beamforming
/// refreshed by a single auxiliary-update + solve pass from `base`.
fn interval_fitness(
    sc: &Scenario,
    interval0: usize,
    tx: &ArrayLayout,
    rx: &ArrayLayout,
    trajectory: &[nalgebra::Vector2<f64>],
    base: &[metrics::BeamformingSolution],
    solver: &isac_solver::SolveOptions,
) -> f64 {
    let mut value = 0.0;
    for n in sc.slots_of_interval0(interval0) {
        let q = &trajectory[n];
        let stats: Vec<_> = sc.users.iter().map(|u| channel::channel_stats(sc, q, u, tx)).collect();
        let mut omega = Vec::with_capacity(stats.len());
        let mut varpi = Vec::with_capacity(stats.len());
        for m in 0..stats.len() {
            let (e, f) = metrics::rate_powers(&stats[m], &base[n], sc.noise_user, m);
            let (o, v) = beamforming::fp_update(e / sc.noise_user, f / sc.noise_user);
            omega.push(o);
            varpi.push(v);
        }
        let theta_t = channel::elevation_angle(q, &sc.target, sc.altitude);
        let dist_t = channel::link_distance(q, &sc.target, sc.altitude);
        let sens_weight = metrics::alpha_factor(sc, theta_t, dist_t) * metrics::tss(&rx.coords);
        let steer_t = channel::steering(&tx.coords, theta_t, sc.wavelength);
        let ctx = SlotContext {
            sc,
            stats: &stats,
            steer_t: &steer_t,
            sens_weight,
            omega: &omega,
            varpi: &varpi,
            prev: &base[n],
        };
        let Ok((sol, _, _)) = beamforming::solve_p22(&ctx, solver) else {
            return f64::NEG_INFINITY;
        };
        for m in 0..stats.len() {
            value += sc.xi_c * metrics::approx_rate(&stats[m], &sol, sc.noise_user, m);
        }
        value += sc.xi_s
            * metrics::inv_crb_closed(tx, rx, theta_t, dist_t, &sol, sc).unwrap_or(0.0);
    }
    value
}

/// Particle-swarm search over the per-interval (transmit, receive) gap
/// space at the initial trajectory, then the usual loop with the found
/// positions fixed. `swarm = 1, iters = 0` degenerates to a random draw.
pub fn run_pso(
    sc: &Scenario,
    pso: &PsoOptions,
    seed: u64,
    opts: &AoOptions,
) -> Result<AoState, PipelineError> {
    let mut state = ao::initialize(sc)?;
    let dim = sc.n_tx + sc.n_rx;
    let solver = &opts.solver;

    for interval0 in 0..sc.intervals {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e3779b97f4a7c15u64.wrapping_mul(interval0 as u64 + 1)));
        let decode = |x: &[f64]| {
            (
                layout_from_box(&x[..sc.n_tx], sc.n_tx, sc.d_min, sc.segment_len, ArrayKind::Transmit),
                layout_from_box(&x[sc.n_tx..], sc.n_rx, sc.d_min, sc.segment_len, ArrayKind::Receive),
            )
        };
        let fitness = |x: &[f64]| {
            let (tx, rx) = decode(x);
            interval_fitness(sc, interval0, &tx, &rx, &state.trajectory.points, &state.beamforming, solver)
        };

        let mut pos: Vec<Vec<f64>> = (0..pso.swarm)
            .map(|_| (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let mut vel: Vec<Vec<f64>> = (0..pso.swarm)
            .map(|_| (0..dim).map(|_| rng.gen_range(-0.2..0.2)).collect())
            .collect();
        let mut pbest = pos.clone();
        let mut pbest_val: Vec<f64> = pos.iter().map(|x| fitness(x)).collect();
        let (mut gbest, mut gbest_val) = {
            let mut bi = 0;
            for (i, v) in pbest_val.iter().enumerate() {
                if *v > pbest_val[bi] {
                    bi = i;
                }
            }
            (pbest[bi].clone(), pbest_val[bi])
        };

        for _ in 0..pso.iters {
            for p in 0..pso.swarm {
                for d in 0..dim {
                    let r1: f64 = rng.gen_range(0.0..1.0);
                    let r2: f64 = rng.gen_range(0.0..1.0);
                    vel[p][d] = pso.inertia * vel[p][d]
                        + pso.cognitive * r1 * (pbest[p][d] - pos[p][d])
                        + pso.social * r2 * (gbest[d] - pos[p][d]);
                    pos[p][d] += vel[p][d];
                    // reflective boundary handling in the unit box
                    if pos[p][d] < 0.0 {
                        pos[p][d] = -pos[p][d];
                        vel[p][d] = -vel[p][d];
                    }
                    if pos[p][d] > 1.0 {
                        pos[p][d] = 2.0 - pos[p][d];
                        vel[p][d] = -vel[p][d];
                    }
                    pos[p][d] = pos[p][d].clamp(0.0, 1.0);
                }
                let v = fitness(&pos[p]);
                if v > pbest_val[p] {
                    pbest_val[p] = v;
                    pbest[p] = pos[p].clone();
                }
                if v > gbest_val {
                    gbest_val = v;
                    gbest = pos[p].clone();
                }
            }
        }

        let (tx, rx) = decode(&gbest);
        state.tx_layouts[interval0] = tx;
        state.rx_layouts[interval0] = rx;
    }

    let opts = AoOptions {
        optimize_tx_positions: false,
        optimize_rx_positions: false,
        ..opts.clone()
    };
    ao::run_from(sc, state, &opts)
}
