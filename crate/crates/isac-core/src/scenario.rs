//! World model: mission geometry, time discretization, radio constants, and
//! antenna-array layouts.
//!
//! Scenario files carry powers and gains in dB/dBm to match how such numbers
//! are usually tabulated; everything is converted to linear units once at
//! load time and stored linear from then on.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("failed to read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse scenario file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("slot index {0} out of range 1..={1}")]
    SlotOutOfRange(usize, usize),
}

/// dB ratio to linear ratio.
pub fn db_to_linear(v: f64) -> f64 {
    10f64.powf(v / 10.0)
}

/// dBm power to watts.
pub fn dbm_to_watts(v: f64) -> f64 {
    10f64.powf((v - 30.0) / 10.0)
}

pub fn linear_to_db(v: f64) -> f64 {
    10.0 * v.log10()
}

pub fn watts_to_dbm(v: f64) -> f64 {
    10.0 * v.log10() + 30.0
}

// ---------------------------------------------------------------------------
// File schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub users: Vec<[f64; 2]>,
    pub target: [f64; 2],
    pub uav_start: [f64; 2],
    pub uav_end: [f64; 2],
    pub altitude_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub mission_s: f64,
    pub slots: usize,
    pub intervals: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraysSection {
    pub n_tx: usize,
    pub n_rx: usize,
    pub segment_wavelengths: f64,
    pub dmin_wavelengths: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioSection {
    pub wavelength_m: f64,
    pub h0_db: f64,
    pub noise_user_dbm: f64,
    pub noise_radar_dbm: f64,
    pub pmax_dbm: f64,
    pub rcs_m2: f64,
    pub frame_len: usize,
}

fn default_c1() -> f64 {
    1.0
}

fn default_kappa_zenith() -> f64 {
    100.0
}

/// Rician coefficients. The angle-dependent factor is `c1 * exp(c2 * theta)`
/// with `c2 = (2/pi) * ln(kappa_zenith)`, so kappa is `c1` toward the horizon
/// and `c1 * kappa_zenith` at zenith. The literature this model follows does
/// not pin numeric values; both knobs are configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RicianSection {
    #[serde(default = "default_c1")]
    pub c1: f64,
    #[serde(default = "default_kappa_zenith")]
    pub kappa_zenith: f64,
}

impl Default for RicianSection {
    fn default() -> Self {
        Self { c1: default_c1(), kappa_zenith: default_kappa_zenith() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    pub xi_c: f64,
    /// Optional; defaults to `1 - xi_c` and must sum to one with `xi_c`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_s: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsSection {
    pub vmax_mps: f64,
}

/// On-disk scenario description. Unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub geometry: GeometrySection,
    pub time: TimeSection,
    pub arrays: ArraysSection,
    pub radio: RadioSection,
    #[serde(default)]
    pub rician: RicianSection,
    pub objective: ObjectiveSection,
    pub limits: LimitsSection,
}

// ---------------------------------------------------------------------------
// Validated scenario
// ---------------------------------------------------------------------------

/// Immutable world description with all quantities in linear SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub users: Vec<Vector2<f64>>,
    pub target: Vector2<f64>,
    pub uav_start: Vector2<f64>,
    pub uav_end: Vector2<f64>,
    /// Flight altitude H (m).
    pub altitude: f64,
    /// Number of time slots N.
    pub slots: usize,
    /// Number of medium-timescale intervals.
    pub intervals: usize,
    /// Slots per interval.
    pub mu: usize,
    /// Slot duration tau (s).
    pub slot_duration: f64,
    /// Maximum UAV speed (m/s).
    pub vmax: f64,
    /// Transmit power budget (W).
    pub pmax: f64,
    pub n_tx: usize,
    pub n_rx: usize,
    /// Antenna mobility segment length D_FA (m).
    pub segment_len: f64,
    /// Minimum inter-antenna spacing (m).
    pub d_min: f64,
    /// Carrier wavelength (m).
    pub wavelength: f64,
    /// Reference channel power gain at 1 m (linear).
    pub h0: f64,
    /// Radar cross-section magnitude (m^2). Only its square enters the
    /// sensing formulas, so phase is dropped.
    pub rcs: f64,
    /// Sensing frame length (symbols).
    pub frame_len: f64,
    /// Noise power at each user receiver (W).
    pub noise_user: f64,
    /// Noise power at the radar receiver (W).
    pub noise_radar: f64,
    pub rician_c1: f64,
    pub rician_c2: f64,
    /// Communication weight.
    pub xi_c: f64,
    /// Sensing weight.
    pub xi_s: f64,
}

impl Scenario {
    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        let file: ScenarioFile = serde_json::from_str(&text)?;
        Self::from_config(&file)
    }

    pub fn from_config(file: &ScenarioFile) -> Result<Self, ScenarioError> {
        let t = &file.time;
        let a = &file.arrays;
        let r = &file.radio;
        let xi_c = file.objective.xi_c;
        let xi_s = file.objective.xi_s.unwrap_or(1.0 - xi_c);

        let slot_duration = t.mission_s / t.slots.max(1) as f64;
        let sc = Scenario {
            users: file.geometry.users.iter().map(|p| Vector2::new(p[0], p[1])).collect(),
            target: Vector2::new(file.geometry.target[0], file.geometry.target[1]),
            uav_start: Vector2::new(file.geometry.uav_start[0], file.geometry.uav_start[1]),
            uav_end: Vector2::new(file.geometry.uav_end[0], file.geometry.uav_end[1]),
            altitude: file.geometry.altitude_m,
            slots: t.slots,
            intervals: t.intervals,
            mu: if t.intervals > 0 { t.slots / t.intervals } else { 0 },
            slot_duration,
            vmax: file.limits.vmax_mps,
            pmax: dbm_to_watts(r.pmax_dbm),
            n_tx: a.n_tx,
            n_rx: a.n_rx,
            segment_len: a.segment_wavelengths * r.wavelength_m,
            d_min: a.dmin_wavelengths * r.wavelength_m,
            wavelength: r.wavelength_m,
            h0: db_to_linear(r.h0_db),
            rcs: r.rcs_m2,
            frame_len: r.frame_len as f64,
            noise_user: dbm_to_watts(r.noise_user_dbm),
            noise_radar: dbm_to_watts(r.noise_radar_dbm),
            rician_c1: file.rician.c1,
            rician_c2: (2.0 / std::f64::consts::PI) * file.rician.kappa_zenith.ln(),
            xi_c,
            xi_s,
        };
        sc.validate()?;
        Ok(sc)
    }

    /// Back to the file schema (linear quantities re-expressed in dB/dBm).
    pub fn to_config(&self) -> ScenarioFile {
        ScenarioFile {
            geometry: GeometrySection {
                users: self.users.iter().map(|p| [p.x, p.y]).collect(),
                target: [self.target.x, self.target.y],
                uav_start: [self.uav_start.x, self.uav_start.y],
                uav_end: [self.uav_end.x, self.uav_end.y],
                altitude_m: self.altitude,
            },
            time: TimeSection {
                mission_s: self.slot_duration * self.slots as f64,
                slots: self.slots,
                intervals: self.intervals,
            },
            arrays: ArraysSection {
                n_tx: self.n_tx,
                n_rx: self.n_rx,
                segment_wavelengths: self.segment_len / self.wavelength,
                dmin_wavelengths: self.d_min / self.wavelength,
            },
            radio: RadioSection {
                wavelength_m: self.wavelength,
                h0_db: linear_to_db(self.h0),
                noise_user_dbm: watts_to_dbm(self.noise_user),
                noise_radar_dbm: watts_to_dbm(self.noise_radar),
                pmax_dbm: watts_to_dbm(self.pmax),
                rcs_m2: self.rcs,
                frame_len: self.frame_len as usize,
            },
            rician: RicianSection {
                c1: self.rician_c1,
                kappa_zenith: (std::f64::consts::PI / 2.0 * self.rician_c2).exp(),
            },
            objective: ObjectiveSection { xi_c: self.xi_c, xi_s: Some(self.xi_s) },
            limits: LimitsSection { vmax_mps: self.vmax },
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |msg: String| Err(ScenarioError::Invariant(msg));
        if self.slots == 0 || self.intervals == 0 {
            return fail("slots and intervals must be positive".into());
        }
        if self.slots % self.intervals != 0 {
            return fail(format!(
                "slots ({}) must be divisible by intervals ({})",
                self.slots, self.intervals
            ));
        }
        if !(0.0..=1.0).contains(&self.xi_c) || !(0.0..=1.0).contains(&self.xi_s) {
            return fail("objective weights must lie in [0, 1]".into());
        }
        if (self.xi_c + self.xi_s - 1.0).abs() > 1e-9 {
            return fail(format!(
                "objective weights must sum to 1 (got xi_c={} xi_s={})",
                self.xi_c, self.xi_s
            ));
        }
        for (name, v) in [
            ("altitude", self.altitude),
            ("slot_duration", self.slot_duration),
            ("vmax", self.vmax),
            ("pmax", self.pmax),
            ("segment_len", self.segment_len),
            ("d_min", self.d_min),
            ("wavelength", self.wavelength),
            ("h0", self.h0),
            ("frame_len", self.frame_len),
            ("noise_user", self.noise_user),
            ("noise_radar", self.noise_radar),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return fail(format!("{name} must be strictly positive (got {v})"));
            }
        }
        if self.rcs < 0.0 || !self.rcs.is_finite() {
            return fail("rcs must be nonnegative".into());
        }
        if self.rician_c1 < 0.0 {
            return fail("rician c1 must be nonnegative".into());
        }
        if self.n_tx == 0 || self.n_rx == 0 {
            return fail("antenna counts must be positive".into());
        }
        if (self.n_tx - 1) as f64 * self.d_min > self.segment_len * (1.0 + 1e-12) {
            return fail(format!(
                "transmit array infeasible: ({} - 1) * d_min > segment",
                self.n_tx
            ));
        }
        if (self.n_rx - 1) as f64 * self.d_min > self.segment_len * (1.0 + 1e-12) {
            return fail(format!(
                "receive array infeasible: ({} - 1) * d_min > segment",
                self.n_rx
            ));
        }
        let reach = (self.slots.saturating_sub(1)) as f64 * self.slot_duration * self.vmax;
        let span = (self.uav_end - self.uav_start).norm();
        if span > reach * (1.0 + 1e-12) {
            return fail(format!(
                "endpoints unreachable: span {span:.2} m exceeds (N-1)*tau*vmax = {reach:.2} m"
            ));
        }
        Ok(())
    }

    /// Interval containing 1-based slot index, also 1-based.
    pub fn interval_of(&self, slot: usize) -> Result<usize, ScenarioError> {
        if slot == 0 || slot > self.slots {
            return Err(ScenarioError::SlotOutOfRange(slot, self.slots));
        }
        Ok((slot - 1) / self.mu + 1)
    }

    /// Interval of a 0-based slot index (internal convention).
    pub fn interval_of_slot0(&self, slot0: usize) -> usize {
        debug_assert!(slot0 < self.slots);
        slot0 / self.mu
    }

    /// 0-based slots covered by the 0-based interval index.
    pub fn slots_of_interval0(&self, interval0: usize) -> std::ops::Range<usize> {
        interval0 * self.mu..(interval0 + 1) * self.mu
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn mission_duration(&self) -> f64 {
        self.slot_duration * self.slots as f64
    }
}

/// Convenience loader matching the CLI surface.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    Scenario::from_file(path)
}

// ---------------------------------------------------------------------------
// Array layouts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArrayKind {
    Transmit,
    Receive,
}

/// Ordered antenna coordinates along the mobility segment `[0, D_FA]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayLayout {
    pub coords: Vec<f64>,
    pub kind: ArrayKind,
}

impl ArrayLayout {
    pub fn new(coords: Vec<f64>, kind: ArrayKind) -> Self {
        Self { coords, kind }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Spacing/segment feasibility: the linear system `P x >= l_p`.
    pub fn validate(&self, d_min: f64, segment_len: f64) -> Result<(), ScenarioError> {
        let tol = 1e-9;
        let c = &self.coords;
        if c.is_empty() {
            return Err(ScenarioError::Invariant("layout has no antennas".into()));
        }
        if c[0] < -tol {
            return Err(ScenarioError::Invariant(format!(
                "first coordinate {} below segment start",
                c[0]
            )));
        }
        if *c.last().unwrap() > segment_len + tol {
            return Err(ScenarioError::Invariant(format!(
                "last coordinate {} beyond segment end {segment_len}",
                c.last().unwrap()
            )));
        }
        for w in c.windows(2) {
            if w[1] - w[0] < d_min - tol {
                return Err(ScenarioError::Invariant(format!(
                    "spacing {} below d_min {d_min}",
                    w[1] - w[0]
                )));
            }
        }
        Ok(())
    }

    /// Uniform layout with spacing `max(d_min, segment/(n-1))`, clipped to the
    /// segment. For any feasible scenario this spans exactly `[0, segment]`.
    pub fn ula(n: usize, d_min: f64, segment_len: f64, kind: ArrayKind) -> Self {
        if n == 1 {
            return Self::new(vec![0.0], kind);
        }
        let spacing = (segment_len / (n - 1) as f64).max(d_min);
        let coords = (0..n).map(|k| (k as f64 * spacing).min(segment_len)).collect();
        Self::new(coords, kind)
    }

    pub fn gaps(&self) -> Vec<f64> {
        self.coords.windows(2).map(|w| w[1] - w[0]).collect()
    }
}
