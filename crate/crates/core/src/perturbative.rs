//! Weak-coupling decay of a qubit swept through a TLS resonance.
//!
//! In units of the ramp time the decay probability is P = (λ t_r)² R with
//!
//! R = Re ∬_{[0,T]²} e^{−γ|x−y|} e^{i(θ(x)−θ(y))} dx dy,  θ(x) = εx + ηΦ(x),
//!
//! where γ = t_r Γ₂, ε = t_r (f_idle − ω_TLS), η = t_r ε_m and Φ is the
//! accumulated pulse shape. The square splits into the 3×3 blocks formed by the
//! ramp-up A = [0,1], plateau B = [1,T−1] and ramp-down C = [T−1,T] segments.
//!
//! Two evaluators are provided. [`decay_prob_numeric`] integrates every block to
//! a requested tolerance and serves as the reference. [`decay_prob_spa`] is the
//! fast closed form: it keeps the exact plateau algebra, uses Gaussian (erf)
//! integrals for the ramp factors, and reduces the ramp-ramp block to a single
//! smooth integral across the stationary point, where the swept frequency
//! crosses the TLS.

use crate::error::{Error, Result};
use crate::pulse::{phi_unchecked, Trajectory};
use crate::quad::{adaptive, GaussLegendre};
use crate::specfun::erf_complex;
use crate::units;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

type C = Complex64;
const ZERO: C = C::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TlsParams {
    /// Qubit–TLS coupling (rad/ns).
    pub lambda: f64,
    /// TLS frequency (rad/ns).
    pub omega_tls: f64,
    /// TLS dephasing rate (1/ns, angular).
    pub gamma_tls_phi: f64,
    /// Qubit dephasing rate (1/ns, angular).
    pub gamma_2q: f64,
}

/// JSON form of [`TlsParams`] in plain units.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TlsParamsJson {
    pub lambda_mhz: f64,
    pub omega_tls_ghz: f64,
    #[serde(default)]
    pub gamma_tls_phi_mhz: f64,
    #[serde(default)]
    pub gamma_2q_mhz: f64,
}

impl TlsParams {
    /// All dephasing attributed to the TLS.
    pub fn new(lambda: f64, omega_tls: f64, gamma2: f64) -> Result<Self> {
        Self::with_split(lambda, omega_tls, gamma2, 0.0)
    }

    pub fn with_split(lambda: f64, omega_tls: f64, gamma_tls_phi: f64, gamma_2q: f64) -> Result<Self> {
        let p = TlsParams { lambda, omega_tls, gamma_tls_phi, gamma_2q };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.lambda, self.omega_tls, self.gamma_tls_phi, self.gamma_2q];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("TlsParams"));
        }
        if self.lambda < 0.0 || self.gamma_tls_phi < 0.0 || self.gamma_2q < 0.0 {
            return Err(Error::Invalid("coupling and rates must be non-negative".into()));
        }
        Ok(())
    }

    /// Total dephasing Γ₂ = Γ_TLS,φ + Γ_2,q.
    pub fn gamma2(&self) -> f64 {
        self.gamma_tls_phi + self.gamma_2q
    }

    pub fn to_json(&self) -> TlsParamsJson {
        TlsParamsJson {
            lambda_mhz: units::to_mhz(self.lambda),
            omega_tls_ghz: units::to_ghz(self.omega_tls),
            gamma_tls_phi_mhz: units::to_mhz(self.gamma_tls_phi),
            gamma_2q_mhz: units::to_mhz(self.gamma_2q),
        }
    }
}

impl TryFrom<TlsParamsJson> for TlsParams {
    type Error = Error;
    fn try_from(j: TlsParamsJson) -> Result<Self> {
        TlsParams::with_split(
            units::mhz(j.lambda_mhz),
            units::ghz(j.omega_tls_ghz),
            units::mhz(j.gamma_tls_phi_mhz),
            units::mhz(j.gamma_2q_mhz),
        )
    }
}

/// A decay probability together with how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decay {
    /// Probability clamped to [0, 1].
    pub probability: f64,
    /// Unclamped perturbative value (λ t_r)² R.
    pub raw: f64,
    pub clamped: bool,
    /// λ·t_tot above 0.5: outside the weak-coupling regime.
    pub strong_coupling: bool,
}

impl Decay {
    fn from_raw(raw: f64, lambda_ttot: f64) -> Self {
        let probability = raw.clamp(0.0, 1.0);
        Decay { probability, raw, clamped: probability != raw, strong_coupling: lambda_ttot > 0.5 }
    }
}

/// Region labels of the 3×3 block decomposition.
pub const REGIONS: [&str; 3] = ["ramp-up", "plateau", "ramp-down"];

/// Block contributions of the decay integral.
///
/// `r[a][b]` is the integral over x in region `a` and y in region `b`; the
/// matrix is Hermitian, so mirrored blocks carry equal real parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaDecomposition {
    pub r: [[C; 3]; 3],
    /// Stationary point in units of t_r, when the ramp crosses the TLS.
    pub x_c: Option<f64>,
    /// η = t_r |ε_m| below 5, where the stationary-phase term is unreliable.
    pub eta_small: bool,
}

impl SpaDecomposition {
    /// Σ Re r_ab.
    pub fn total(&self) -> f64 {
        self.r.iter().flatten().map(|c| c.re).sum()
    }
}

/// Dimensionless description of one (params, trajectory) evaluation.
#[derive(Debug, Clone, Copy)]
struct Unitless {
    gamma: f64,
    eps: f64,
    eta: f64,
    l: f64,
    t: f64,
}

impl Unitless {
    fn new(p: &TlsParams, tr: &Trajectory) -> Self {
        Unitless {
            gamma: tr.t_r * p.gamma2(),
            eps: tr.t_r * (tr.f_idle - p.omega_tls),
            eta: tr.t_r * tr.eps_m(),
            l: tr.t_p / tr.t_r,
            t: tr.t_units(),
        }
    }

    fn theta(&self, x: f64) -> f64 {
        self.eps * x + self.eta * phi_unchecked(self.t, x)
    }

    fn g(&self, x: f64) -> C {
        C::from_polar(1.0, self.theta(x))
    }

    /// Plateau detuning rate k = ε + η and c = ik − γ.
    fn c(&self) -> C {
        C::new(-self.gamma, self.eps + self.eta)
    }

    /// ∫_B e^{−γ(x−1)} g(x) dx.
    fn plateau_from_start(&self) -> C {
        self.g(1.0) * self.l * phi1(self.c() * self.l)
    }

    /// ∫_B e^{−γ((T−1)−y)} conj g(y) dy.
    fn plateau_to_end(&self) -> C {
        self.g(self.t - 1.0).conj() * self.l * phi1(self.c() * self.l)
    }

    /// Plateau–plateau block, 2 Re[L² φ₂(cL)].
    fn plateau_block(&self) -> f64 {
        2.0 * (self.l * self.l * phi2(self.c() * self.l)).re
    }

    fn assemble(&self, aa: f64, cc: f64, fa: C, fc: C) -> [[C; 3]; 3] {
        let pa = self.plateau_from_start();
        let pc = self.plateau_to_end();
        let ba = pa * fa;
        let cb = fc * pc;
        let ca = fc * fa * (-self.gamma * self.l).exp();
        [
            [C::new(aa, 0.0), ba.conj(), ca.conj()],
            [ba, C::new(self.plateau_block(), 0.0), cb.conj()],
            [ca, cb, C::new(cc, 0.0)],
        ]
    }
}

/// (e^z − 1)/z.
fn phi1(z: C) -> C {
    if z.norm() < 1e-4 {
        C::new(1.0, 0.0) + z * 0.5 + z * z / 6.0 + z * z * z / 24.0
    } else {
        z.exp_m1() / z
    }
}

/// (e^z − 1 − z)/z².
fn phi2(z: C) -> C {
    if z.norm() < 1e-3 {
        C::new(0.5, 0.0) + z / 6.0 + z * z / 24.0 + z * z * z / 120.0
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

trait ExpM1 {
    fn exp_m1(self) -> Self;
}

impl ExpM1 for C {
    fn exp_m1(self) -> C {
        // e^{a+ib} − 1 = (e^a − 1)cos b + (cos b − 1) + i e^a sin b
        let (s, c) = self.im.sin_cos();
        let em1 = self.re.exp_m1();
        let cm1 = -2.0 * (0.5 * self.im).sin().powi(2);
        C::new(em1 * c + cm1, (em1 + 1.0) * s)
    }
}

/// Stationary point of the ramp phase, x_c = (f_idle − ω_TLS)/(f_idle − f_pl),
/// when it lies in [0, 1].
pub fn stationary_point(params: &TlsParams, traj: &Trajectory) -> Option<f64> {
    let em = traj.eps_m();
    if em == 0.0 {
        return if traj.f_idle == params.omega_tls { Some(0.0) } else { None };
    }
    let x = (params.omega_tls - traj.f_idle) / em;
    (0.0..=1.0).contains(&x).then_some(x)
}

// ---------------------------------------------------------------------------
// Reference evaluation

/// Block-by-block reference evaluation of the decay integral.
///
/// Ramp-ramp blocks are iterated adaptive Gauss–Kronrod integrals over the
/// triangle x > y; blocks with one variable on the plateau separate because
/// e^{−γ|x−y|} factorizes there, and the plateau factor is integrated exactly.
/// `quad_tol` is the absolute tolerance on the dimensionless integral R.
pub fn numeric_decomposition(params: &TlsParams, traj: &Trajectory, quad_tol: f64) -> Result<[[C; 3]; 3]> {
    if !(quad_tol > 0.0) {
        return Err(Error::Invalid("quad_tol must be positive".into()));
    }
    params.validate()?;
    let u = Unitless::new(params, traj);
    let tol = quad_tol / 16.0;
    let max_panels = 20_000;
    let t = u.t;
    // Ramp-ramp blocks: 2 Re ∫ dx g(x) ∫_{lo}^{x} e^{−γ(x−y)} conj g(y) dy.
    let same_block = |lo: f64| -> Result<f64> {
        let inner_err = std::cell::Cell::new(None);
        let outer = adaptive(
            |x| {
                let inner = adaptive(|y| (-u.gamma * (x - y)).exp() * u.g(y).conj(), lo, x, tol, 0.0, max_panels);
                match inner {
                    Ok(i) => u.g(x) * i.value,
                    Err(e) => {
                        inner_err.set(Some(e));
                        ZERO
                    }
                }
            },
            lo,
            lo + 1.0,
            tol,
            0.0,
            max_panels,
        )?;
        if let Some(e) = inner_err.take() {
            return Err(e);
        }
        Ok(2.0 * outer.value.re)
    };
    let aa = same_block(0.0)?;
    let cc = same_block(t - 1.0)?;
    let fa = adaptive(|y| (-u.gamma * (1.0 - y)).exp() * u.g(y).conj(), 0.0, 1.0, tol, 0.0, max_panels)?.value;
    let fc = adaptive(
        |x| (-u.gamma * (x - (t - 1.0))).exp() * u.g(x),
        t - 1.0,
        t,
        tol / (1.0 + u.l),
        0.0,
        max_panels,
    )?
    .value;
    Ok(u.assemble(aa, cc, fa, fc))
}

/// Reference decay probability.
pub fn decay_prob_numeric(params: &TlsParams, traj: &Trajectory, quad_tol: f64) -> Result<Decay> {
    if params.lambda == 0.0 {
        params.validate()?;
        return Ok(Decay::from_raw(0.0, 0.0));
    }
    let r = numeric_decomposition(params, traj, quad_tol)?;
    let total: f64 = r.iter().flatten().map(|c| c.re).sum();
    let s = params.lambda * traj.t_r;
    Ok(Decay::from_raw(s * s * total, params.lambda * traj.t_tot()))
}

// ---------------------------------------------------------------------------
// Closed form

/// ∫₀¹ exp(−a y² + b y) dy for a ≠ 0 via the error function.
fn gauss_unit(a: C, b: C) -> Result<C> {
    let sa = a.sqrt();
    let m = b / (a * 2.0);
    let e = erf_complex(sa * (1.0 - m))? + erf_complex(sa * m)?;
    Ok((std::f64::consts::PI / a).sqrt() * 0.5 * (a * m * m).exp() * e)
}

fn gl16() -> &'static GaussLegendre {
    static R: OnceLock<GaussLegendre> = OnceLock::new();
    R.get_or_init(|| GaussLegendre::new(16))
}

/// Panel count resolving the total ramp phase with 16-point panels.
fn ramp_panels(u: &Unitless) -> usize {
    let swing = u.eps.abs() + u.eta.abs() + u.gamma;
    1 + (swing / 12.0).ceil() as usize
}

/// Ramp-up factor ∫₀¹ e^{−γ(1−y)} conj g(y) dy by composite Gauss–Legendre.
fn ramp_factor_quadrature(u: &Unitless) -> C {
    gl16().integrate_composite(|y| (-u.gamma * (1.0 - y)).exp() * u.g(y).conj(), 0.0, 1.0, ramp_panels(u))
}

/// Ramp-up block ∬_{[0,1]²} e^{−γ|x−y|} g(x) conj g(y).
///
/// On the ramp θ(x) − θ(y) = u q(w) with u = x − y, w = (x + y)/2 and
/// q(w) = ε + ηw, so the u-integral over |u| ≤ U(w) = 2 min(w, 1 − w) is
/// elementary: 2 Re[U φ₁(−(γ − iq)U)]. The remaining w-integral is smooth apart
/// from the kink of U at ½ and the stationary peak at q = 0, which are panel edges.
fn ramp_block(u: &Unitless) -> f64 {
    let kernel = |w: f64| {
        let span = 2.0 * w.min(1.0 - w);
        let z = C::new(u.gamma, -(u.eps + u.eta * w));
        C::new(2.0 * (span * phi1(-z * span)).re, 0.0)
    };
    let mut edges = vec![0.0, 0.5, 1.0];
    if u.eta != 0.0 {
        let xc = -u.eps / u.eta;
        if xc > 0.0 && xc < 1.0 && (xc - 0.5).abs() > 1e-12 {
            edges.push(xc);
        }
    }
    edges.sort_by(f64::total_cmp);
    let per_unit = 2 + (u.eta.abs() / 6.0).ceil() as usize;
    edges
        .windows(2)
        .map(|e| {
            let panels = 1 + (per_unit as f64 * (e[1] - e[0])).ceil() as usize;
            gl16().integrate_composite(kernel, e[0], e[1], panels).re
        })
        .sum()
}

/// Fast closed-form decay probability and its block decomposition.
pub fn decay_prob_spa(params: &TlsParams, traj: &Trajectory) -> Result<(Decay, SpaDecomposition)> {
    Ok(SpaColumn::new(params, traj)?.evaluate(traj.t_p))
}

/// [`decay_prob_spa`] along the hold-time axis at fixed plateau frequency.
///
/// The ramp factor and the ramp-ramp block do not depend on t_p, so they are
/// computed once and only the plateau algebra is redone per hold time.
#[derive(Debug, Clone, Copy)]
pub struct SpaColumn {
    params: TlsParams,
    traj: Trajectory,
    fa: C,
    aa: f64,
    x_c: Option<f64>,
    eta_small: bool,
}

impl SpaColumn {
    /// `traj.t_p` is ignored.
    pub fn new(params: &TlsParams, traj: &Trajectory) -> Result<Self> {
        params.validate()?;
        let u = Unitless::new(params, traj);
        // Ramp factor: e^{−γ} ∫₀¹ exp(−(iη/2) y² + (γ − iε) y) dy.
        let fa = if u.eta != 0.0 {
            (-u.gamma).exp() * gauss_unit(C::new(0.0, u.eta * 0.5), C::new(u.gamma, -u.eps))?
        } else {
            ramp_factor_quadrature(&u)
        };
        Ok(SpaColumn {
            params: *params,
            traj: *traj,
            fa,
            aa: ramp_block(&u),
            x_c: stationary_point(params, traj),
            eta_small: u.eta.abs() < 5.0,
        })
    }

    pub fn evaluate(&self, t_p: f64) -> (Decay, SpaDecomposition) {
        let traj = Trajectory { t_p, ..self.traj };
        let u = Unitless::new(&self.params, &traj);
        // Time reversal maps the ramp-down segment onto the ramp-up one:
        // θ(T−s) = θ(T) − θ(s), so F_C = e^{iθ(T)} F_A and the C-C block equals the A-A block.
        let fc = C::from_polar(1.0, u.theta(u.t)) * self.fa;
        let r = u.assemble(self.aa, self.aa, self.fa, fc);
        let dec = SpaDecomposition { r, x_c: self.x_c, eta_small: self.eta_small };
        let s = self.params.lambda * traj.t_r;
        (Decay::from_raw(s * s * dec.total(), self.params.lambda * traj.t_tot()), dec)
    }
}
