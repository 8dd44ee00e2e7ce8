//! Coherent qubit–TLS dynamics in the single-excitation subspace.
//!
//! Basis (|1,0⟩, |0,1⟩) with the TLS excitation listed first. The Hamiltonian is
//!
//! H(t) = [[Δ(t)/2, λ], [λ, −Δ(t)/2]],  Δ = f_q − ω_TLS,
//!
//! and the qubit starts in |0,1⟩. Along a linear ramp Δ = Δ₀ + v t the amplitudes
//! solve Weber's equation: with a = √(iv), τ = Δ/v, z = aτ and ν = −iλ²/v the
//! columns
//!
//! (D_ν(z), (aλ/v) D_{ν−1}(z))  and  (λ D_{−ν−1}(iz), a D_{−ν}(iz))
//!
//! form a fundamental matrix M(z), independent even at λ = 0, and the ramp
//! propagator is M(z₁) M(z₀)⁻¹.

use crate::error::{Error, Result};
use crate::pulse::Trajectory;
use crate::specfun::pcf_d;
use num_complex::Complex64;
use std::f64::consts::PI;

type C = Complex64;
const I: C = C::new(0.0, 1.0);

/// |ν| beyond which ramps are integrated numerically instead of through D_ν.
const NU_MAX: f64 = 20.0;

/// SU(2) element [[u11, −conj u21], [u21, conj u11]].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelUnitary {
    pub u11: C,
    pub u21: C,
    /// ||u11|² + |u21|² − 1| before normalization.
    pub residual: f64,
}

impl TwoLevelUnitary {
    pub fn identity() -> Self {
        TwoLevelUnitary { u11: C::new(1.0, 0.0), u21: C::new(0.0, 0.0), residual: 0.0 }
    }

    /// Normalizes (u11, u21) onto SU(2), recording the pre-normalization residual.
    pub fn normalized(u11: C, u21: C) -> Self {
        let n2 = u11.norm_sqr() + u21.norm_sqr();
        let n = n2.sqrt();
        TwoLevelUnitary { u11: u11 / n, u21: u21 / n, residual: (n2 - 1.0).abs() }
    }

    pub fn matrix(&self) -> [[C; 2]; 2] {
        [[self.u11, -self.u21.conj()], [self.u21, self.u11.conj()]]
    }

    /// Matrix product `self · rhs`.
    pub fn then_after(&self, rhs: &TwoLevelUnitary) -> TwoLevelUnitary {
        let (a, b, c, d) = (self.u11, self.u21, rhs.u11, rhs.u21);
        TwoLevelUnitary {
            u11: a * c - b.conj() * d,
            u21: b * c + a.conj() * d,
            residual: self.residual.max(rhs.residual),
        }
    }

    /// Transpose, the propagator of the time-reversed protocol.
    pub fn transpose(&self) -> TwoLevelUnitary {
        TwoLevelUnitary { u11: self.u11, u21: -self.u21.conj(), residual: self.residual }
    }

    /// |⟨1,0|U|0,1⟩|².
    pub fn transfer_probability(&self) -> f64 {
        self.u21.norm_sqr().min(1.0)
    }
}

/// A linear sweep of the qubit–TLS gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampSpec {
    /// Gap at the start (rad/ns).
    pub delta0: f64,
    /// Gap at the end (rad/ns).
    pub delta1: f64,
    /// Sweep velocity dΔ/dt (rad/ns²).
    pub v: f64,
    /// Coupling (rad/ns).
    pub lambda: f64,
}

impl RampSpec {
    /// Ramp from `delta0` to `delta1` in `duration` ns.
    pub fn new(delta0: f64, delta1: f64, duration: f64, lambda: f64) -> Result<Self> {
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(Error::Invalid(format!("ramp duration must be positive, got {duration}")));
        }
        let v = (delta1 - delta0) / duration;
        if v == 0.0 {
            return Err(Error::Invalid("ramp with zero sweep velocity".into()));
        }
        if !delta0.is_finite() || !delta1.is_finite() || !lambda.is_finite() {
            return Err(Error::NonFinite("RampSpec"));
        }
        Ok(RampSpec { delta0, delta1, v, lambda })
    }

    pub fn duration(&self) -> f64 {
        (self.delta1 - self.delta0) / self.v
    }

    /// The same sweep run backwards.
    pub fn reversed(&self) -> RampSpec {
        RampSpec { delta0: self.delta1, delta1: self.delta0, v: -self.v, lambda: self.lambda }
    }

    /// ν = −iλ²/v.
    pub fn nu(&self) -> C {
        C::new(0.0, -self.lambda * self.lambda / self.v)
    }
}

fn fundamental(nu: C, a: C, lambda: f64, v: f64, z: C) -> Result<[[C; 2]; 2]> {
    let iz = I * z;
    Ok([
        [pcf_d(nu, z)?, lambda * pcf_d(-nu - 1.0, iz)?],
        [a * lambda / v * pcf_d(nu - 1.0, z)?, a * pcf_d(-nu, iz)?],
    ])
}

fn mat_mul(a: &[[C; 2]; 2], b: &[[C; 2]; 2]) -> [[C; 2]; 2] {
    let mut m = [[C::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            m[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    m
}

fn mat_inv(a: &[[C; 2]; 2]) -> [[C; 2]; 2] {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]]
}

/// Propagator of a linear ramp.
///
/// Uses the parabolic-cylinder fundamental matrix; when |ν| is beyond the
/// special-function range the ramp is integrated with a fourth-order Magnus
/// scheme instead.
pub fn ramp_unitary(spec: &RampSpec) -> Result<TwoLevelUnitary> {
    if spec.lambda == 0.0 {
        // Pure phase: ∫Δ dt = (Δ₁² − Δ₀²)/(2v).
        let phase = (spec.delta1 * spec.delta1 - spec.delta0 * spec.delta0) / (2.0 * spec.v);
        return Ok(TwoLevelUnitary { u11: C::from_polar(1.0, -0.5 * phase), u21: C::new(0.0, 0.0), residual: 0.0 });
    }
    let nu = spec.nu();
    if nu.norm() > NU_MAX {
        return Ok(magnus_ramp(spec));
    }
    let a = (I * spec.v).sqrt();
    let z0 = a * (spec.delta0 / spec.v);
    let z1 = a * (spec.delta1 / spec.v);
    let m0 = fundamental(nu, a, spec.lambda, spec.v, z0)?;
    let m1 = fundamental(nu, a, spec.lambda, spec.v, z1)?;
    let u = mat_mul(&m1, &mat_inv(&m0));
    if u.iter().flatten().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::NonFinite("ramp_unitary"));
    }
    Ok(TwoLevelUnitary::normalized(u[0][0], u[1][0]))
}

/// Fourth-order Magnus integration of a ramp.
fn magnus_ramp(spec: &RampSpec) -> TwoLevelUnitary {
    let dur = spec.duration();
    let scale = spec.delta0.abs().max(spec.delta1.abs()) * 0.5 + spec.lambda.abs();
    let steps = ((dur * scale / 0.01).ceil() as usize).max(16);
    let h = dur / steps as f64;
    let c = 3f64.sqrt() / 6.0;
    let mut u = TwoLevelUnitary::identity();
    for k in 0..steps {
        let t0 = k as f64 * h;
        let d1 = spec.delta0 + spec.v * (t0 + (0.5 - c) * h);
        let d2 = spec.delta0 + spec.v * (t0 + (0.5 + c) * h);
        // Ω = −i(h/2)(H₁ + H₂) − (√3/12)h²[H₂, H₁] with [H₂, H₁] = iλ(Δ₂ − Δ₁)σ_y.
        let hz = 0.25 * h * (d1 + d2);
        let hx = h * spec.lambda;
        let hy = 3f64.sqrt() / 12.0 * h * h * spec.lambda * (d2 - d1);
        let (a, b) = su2_exp(hz, hx, hy);
        u = TwoLevelUnitary { u11: a, u21: b, residual: 0.0 }.then_after(&u);
    }
    u
}

/// exp(−i(h_z σ_z + h_x σ_x + h_y σ_y)) as (u11, u21).
fn su2_exp(hz: f64, hx: f64, hy: f64) -> (C, C) {
    let k = (hz * hz + hx * hx + hy * hy).sqrt();
    if k == 0.0 {
        return (C::new(1.0, 0.0), C::new(0.0, 0.0));
    }
    let (s, c) = k.sin_cos();
    (C::new(c, -s * hz / k), -I * s * C::new(hx / k, hy / k))
}

/// Propagator of a constant gap held for `t_p` ns.
pub fn plateau_unitary(delta1: f64, lambda: f64, t_p: f64) -> TwoLevelUnitary {
    let (a, b) = su2_exp(0.5 * delta1 * t_p, lambda * t_p, 0.0);
    TwoLevelUnitary { u11: a, u21: b, residual: 0.0 }
}

/// Rabi transfer probability of a rectangular pulse.
pub fn p_rec(delta1: f64, lambda: f64, t_p: f64) -> f64 {
    let w2 = 4.0 * lambda * lambda + delta1 * delta1;
    if w2 == 0.0 {
        return 0.0;
    }
    let s = (0.5 * t_p * w2.sqrt()).sin();
    4.0 * lambda * lambda / w2 * s * s
}

/// Ramp-up and ramp-down propagators of a trapezoidal pulse; the plateau is
/// supplied per hold time.
#[derive(Debug, Clone, Copy)]
pub struct TrapezoidRamps {
    pub up: TwoLevelUnitary,
    pub down: TwoLevelUnitary,
    /// Plateau gap Δ₁ (rad/ns).
    pub delta1: f64,
    pub lambda: f64,
}

impl TrapezoidRamps {
    pub fn new(traj: &Trajectory, lambda: f64, omega_tls: f64) -> Result<Self> {
        let d0 = traj.f_idle - omega_tls;
        let d1 = traj.f_pl - omega_tls;
        let (up, down) = if d0 == d1 {
            let s = plateau_unitary(d0, lambda, traj.t_r);
            (s, s)
        } else {
            let spec = RampSpec::new(d0, d1, traj.t_r, lambda)?;
            (ramp_unitary(&spec)?, ramp_unitary(&spec.reversed())?)
        };
        Ok(TrapezoidRamps { up, down, delta1: d1, lambda })
    }

    pub fn unitary(&self, t_p: f64) -> TwoLevelUnitary {
        self.down.then_after(&plateau_unitary(self.delta1, self.lambda, t_p)).then_after(&self.up)
    }

    pub fn probability(&self, t_p: f64) -> f64 {
        self.unitary(t_p).transfer_probability()
    }
}

/// Landau–Zener–Rabi transfer probability |⟨1,0|U₃U₂U₁|0,1⟩|² of a trapezoid.
pub fn p_lzr(traj: &Trajectory, lambda: f64, omega_tls: f64) -> Result<f64> {
    Ok(TrapezoidRamps::new(traj, lambda, omega_tls)?.probability(traj.t_p))
}

/// [`p_lzr`] multiplied by e^{−Γ₂ t_tot}.
///
/// Not a physical decoherence model; a display aid that fades long-time fringes.
pub fn p_lzr_enveloped(traj: &Trajectory, lambda: f64, omega_tls: f64, gamma2: f64) -> Result<f64> {
    Ok(p_lzr(traj, lambda, omega_tls)? * (-gamma2 * traj.t_tot()).exp())
}

/// Landau–Zener transfer estimate 2πλ²/v for a single crossing.
pub fn lz_transition_estimate(lambda: f64, v: f64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::Invalid(format!("sweep velocity must be positive, got {v}")));
    }
    Ok(2.0 * PI * lambda * lambda / v)
}

/// Phase θ = 2λ(Δ₀ + Δ₁)/v that the two ramps add to the plateau Rabi oscillation.
pub fn ramp_phase_shift(lambda: f64, delta_sum: f64, v: f64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::Invalid(format!("sweep velocity must be positive, got {v}")));
    }
    Ok(2.0 * lambda * delta_sum / v)
}

/// Whether θ is small enough (θ < 0.1) for the ramps to leave the Rabi phase alone.
pub fn ramp_phase_negligible(theta: f64) -> bool {
    theta.abs() < 0.1
}

/// Gap bound v/(4λ) below which the ramp phase stays negligible.
pub fn ramp_phase_threshold(lambda: f64, v: f64) -> f64 {
    v / (4.0 * lambda)
}
