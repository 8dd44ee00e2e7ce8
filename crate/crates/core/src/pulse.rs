//! Trapezoidal frequency excursion of a swap-spectroscopy gate.
//!
//! The qubit sits at `f_idle`, ramps linearly to `f_pl` in `t_r`, holds for
//! `t_p`, and ramps back. In units of `t_r` the pulse lives on `[0, T]` with
//! `T = 2 + t_p/t_r`.

use crate::error::{Error, Result};
use crate::units;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trajectory {
    /// Idle frequency (rad/ns).
    pub f_idle: f64,
    /// Plateau frequency (rad/ns).
    pub f_pl: f64,
    /// Ramp duration (ns).
    pub t_r: f64,
    /// Plateau duration (ns).
    pub t_p: f64,
}

/// JSON form of a [`Trajectory`] in plain units.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrajectoryJson {
    pub f_idle_ghz: f64,
    pub f_pl_ghz: f64,
    pub t_r_ns: f64,
    pub t_p_ns: f64,
}

impl Trajectory {
    pub fn new(f_idle: f64, f_pl: f64, t_r: f64, t_p: f64) -> Result<Self> {
        if !(t_r > 0.0) || !(t_p >= 0.0) || !f_idle.is_finite() || !f_pl.is_finite() || !t_p.is_finite() {
            return Err(Error::Invalid(format!("trajectory needs t_r > 0 and t_p ≥ 0 (t_r={t_r}, t_p={t_p})")));
        }
        Ok(Trajectory { f_idle, f_pl, t_r, t_p })
    }

    /// Builds a trajectory from GHz frequencies and ns times.
    pub fn from_ghz(f_idle_ghz: f64, f_pl_ghz: f64, t_r: f64, t_p: f64) -> Result<Self> {
        Self::new(units::ghz(f_idle_ghz), units::ghz(f_pl_ghz), t_r, t_p)
    }

    pub fn with_plateau(&self, f_pl: f64, t_p: f64) -> Result<Self> {
        Self::new(self.f_idle, f_pl, self.t_r, t_p)
    }

    /// Signed excursion ε_m = f_pl − f_idle.
    pub fn eps_m(&self) -> f64 {
        self.f_pl - self.f_idle
    }

    pub fn t_tot(&self) -> f64 {
        2.0 * self.t_r + self.t_p
    }

    /// Total duration in units of t_r.
    pub fn t_units(&self) -> f64 {
        2.0 + self.t_p / self.t_r
    }

    fn check(&self, x: f64) -> Result<f64> {
        let t = self.t_units();
        let tol = 1e-12 * t;
        if !(x >= -tol && x <= t + tol) {
            return Err(Error::Range(format!("x={x} outside [0, {t}]")));
        }
        Ok(x.clamp(0.0, t))
    }

    /// Normalized shape μ(x) ∈ [0, 1].
    pub fn mu(&self, x: f64) -> Result<f64> {
        let x = self.check(x)?;
        Ok(mu_unchecked(self.t_units(), x))
    }

    /// Φ(x) = ∫₀ˣ μ.
    pub fn phase_phi(&self, x: f64) -> Result<f64> {
        let x = self.check(x)?;
        Ok(phi_unchecked(self.t_units(), x))
    }

    /// Qubit frequency at physical time t (ns).
    pub fn frequency_at(&self, t: f64) -> f64 {
        let x = (t / self.t_r).clamp(0.0, self.t_units());
        self.f_idle + self.eps_m() * mu_unchecked(self.t_units(), x)
    }

    pub fn to_json(&self) -> TrajectoryJson {
        TrajectoryJson {
            f_idle_ghz: units::to_ghz(self.f_idle),
            f_pl_ghz: units::to_ghz(self.f_pl),
            t_r_ns: self.t_r,
            t_p_ns: self.t_p,
        }
    }
}

impl TryFrom<TrajectoryJson> for Trajectory {
    type Error = Error;
    fn try_from(j: TrajectoryJson) -> Result<Self> {
        Trajectory::from_ghz(j.f_idle_ghz, j.f_pl_ghz, j.t_r_ns, j.t_p_ns)
    }
}

pub(crate) fn mu_unchecked(t: f64, x: f64) -> f64 {
    if x < 1.0 {
        x
    } else if x < t - 1.0 {
        1.0
    } else {
        t - x
    }
}

pub(crate) fn phi_unchecked(t: f64, x: f64) -> f64 {
    if x < 1.0 {
        0.5 * x * x
    } else if x < t - 1.0 {
        x - 0.5
    } else {
        let r = t - x;
        t - 1.0 - 0.5 * r * r
    }
}
