//! Geometry-to-channel mapping: elevation angles, angle-dependent Rician
//! statistics, array steering vectors, and seeded Monte-Carlo channel draws.

use crate::scenario::{ArrayKind, ArrayLayout, Scenario};
use isac_solver::CVec;
use nalgebra::Vector2;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Per-link deterministic channel summary.
#[derive(Debug, Clone)]
pub struct ChannelStats {
    /// Elevation angle from the UAV toward the ground node (rad).
    pub theta: f64,
    /// Link distance (m).
    pub dist: f64,
    /// Large-scale path loss `h0 * dist^-2` (linear).
    pub beta: f64,
    /// Rician factor (linear).
    pub kappa: f64,
    /// `kappa * beta / (kappa + 1)`.
    pub zeta_los: f64,
    /// `beta / (kappa + 1)`.
    pub zeta_nlos: f64,
    /// Unit-modulus line-of-sight steering vector over the transmit array.
    pub hbar: CVec,
}

/// Elevation angle from a UAV at height `h` above `uav_xy` toward a ground
/// point: `arcsin(h / sqrt(||uav - ground||^2 + h^2))`, in `(0, pi/2]`.
pub fn elevation_angle(uav_xy: &Vector2<f64>, ground_xy: &Vector2<f64>, h: f64) -> f64 {
    let horiz = (uav_xy - ground_xy).norm();
    (h / (horiz * horiz + h * h).sqrt()).asin()
}

/// Link distance including altitude.
pub fn link_distance(uav_xy: &Vector2<f64>, ground_xy: &Vector2<f64>, h: f64) -> f64 {
    let horiz = (uav_xy - ground_xy).norm();
    (horiz * horiz + h * h).sqrt()
}

/// Angle-dependent Rician factor `c1 * exp(c2 * theta)`.
pub fn rician_factor(theta: f64, c1: f64, c2: f64) -> f64 {
    c1 * (c2 * theta).exp()
}

/// Steering vector over arbitrary coordinates: entry k is
/// `exp(j * (2 pi / lambda) * x_k * sin(theta))`.
pub fn steering(coords: &[f64], theta: f64, wavelength: f64) -> CVec {
    let k = 2.0 * std::f64::consts::PI / wavelength * theta.sin();
    CVec::from_iterator(
        coords.len(),
        coords.iter().map(|&x| Complex64::from_polar(1.0, k * x)),
    )
}

/// Transmit-array response vector; the same formula serves the LoS channel
/// direction and the sensing steering vector.
pub fn tx_steering(layout: &ArrayLayout, theta: f64, wavelength: f64) -> CVec {
    debug_assert_eq!(layout.kind, ArrayKind::Transmit);
    steering(&layout.coords, theta, wavelength)
}

/// Receive-array response vector.
pub fn rx_steering(layout: &ArrayLayout, theta: f64, wavelength: f64) -> CVec {
    debug_assert_eq!(layout.kind, ArrayKind::Receive);
    steering(&layout.coords, theta, wavelength)
}

/// Assemble the full channel summary for one UAV-user link.
pub fn channel_stats(
    sc: &Scenario,
    uav_xy: &Vector2<f64>,
    ground_xy: &Vector2<f64>,
    tx_layout: &ArrayLayout,
) -> ChannelStats {
    let theta = elevation_angle(uav_xy, ground_xy, sc.altitude);
    let dist = link_distance(uav_xy, ground_xy, sc.altitude);
    let beta = sc.h0 / (dist * dist);
    let kappa = rician_factor(theta, sc.rician_c1, sc.rician_c2);
    ChannelStats {
        theta,
        dist,
        beta,
        kappa,
        zeta_los: kappa * beta / (kappa + 1.0),
        zeta_nlos: beta / (kappa + 1.0),
        hbar: steering(&tx_layout.coords, theta, sc.wavelength),
    }
}

/// One Rician channel draw using the caller's stream.
pub fn sample_channel_with(stats: &ChannelStats, rng: &mut impl Rng) -> CVec {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut h = stats.hbar.clone() * Complex64::new(stats.zeta_los.sqrt(), 0.0);
    let nlos = stats.zeta_nlos.sqrt();
    for i in 0..h.len() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        h[i] += Complex64::new(re * scale, im * scale) * nlos;
    }
    h
}

/// One Rician channel draw, deterministic under a fixed seed.
pub fn sample_channel(stats: &ChannelStats, rng_seed: u64) -> CVec {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_channel_with(stats, &mut rng)
}
