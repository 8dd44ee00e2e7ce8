//! Kraus channel of a two-qubit swap-type gate with one TLS next to each qubit.
//!
//! Basis order is |q₁q₂⟩ ∈ {|00⟩, |01⟩, |10⟩, |11⟩}. The ideal gate comes from the
//! Bose–Hubbard Hamiltonian restricted to at most one excitation per qubit, with the
//! doubly-occupied leakage folded into the |11⟩ amplitude w₁₁. The TLS coupling
//! λ(σ⁺σ⁻_TLS + σ⁻σ⁺_TLS) is treated to second order in the interaction picture of
//! the ideal gate, with every TLS starting in its ground state and its operators
//! damped by e^{−Γτ}. Contracting the TLS final state gives four Kraus operators:
//! E₀₀ (no TLS excited), E₁₀ and E₀₁ (one excited), E₁₁ (both).

use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt::Write as _;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64 as C;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::quad::GaussLegendre;
use crate::units;
use crate::{Error, Exec, Result};

const ZERO: C = C::new(0.0, 0.0);
const ONE: C = C::new(1.0, 0.0);
const I: C = C::new(0.0, 1.0);

/// Hilbert-space dimension of two qubits.
pub const DIM: usize = 4;

/// A 4×4 complex matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat4(pub [[C; 4]; 4]);

impl Mat4 {
    pub fn zeros() -> Self {
        Mat4([[ZERO; 4]; 4])
    }

    pub fn identity() -> Self {
        let mut m = Self::zeros();
        for k in 0..4 {
            m.0[k][k] = ONE;
        }
        m
    }

    pub fn dagger(&self) -> Self {
        let mut m = Self::zeros();
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = self.0[j][i].conj();
            }
        }
        m
    }

    pub fn trace(&self) -> C {
        (0..4).map(|k| self.0[k][k]).sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.0.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: C) -> Self {
        let mut m = *self;
        m.0.iter_mut().flatten().for_each(|z| *z *= s);
        m
    }

    /// Kronecker product of two 2×2 matrices, first factor on qubit 1.
    pub fn kron(a: &[[C; 2]; 2], b: &[[C; 2]; 2]) -> Self {
        let mut m = Self::zeros();
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = a[i / 2][j / 2] * b[i % 2][j % 2];
            }
        }
        m
    }

    pub fn apply(&self, v: &[C; 4]) -> [C; 4] {
        std::array::from_fn(|i| (0..4).map(|j| self.0[i][j] * v[j]).sum())
    }
}

impl Add for Mat4 {
    type Output = Mat4;
    fn add(mut self, o: Mat4) -> Mat4 {
        for i in 0..4 {
            for j in 0..4 {
                self.0[i][j] += o.0[i][j];
            }
        }
        self
    }
}

impl Sub for Mat4 {
    type Output = Mat4;
    fn sub(self, o: Mat4) -> Mat4 {
        self + o.scale(-ONE)
    }
}

impl Mul for Mat4 {
    type Output = Mat4;
    fn mul(self, o: Mat4) -> Mat4 {
        let mut m = Mat4::zeros();
        for i in 0..4 {
            for k in 0..4 {
                let a = self.0[i][k];
                if a == ZERO {
                    continue;
                }
                for j in 0..4 {
                    m.0[i][j] += a * o.0[k][j];
                }
            }
        }
        m
    }
}

/// Single-qubit Pauli matrices I, X, Y, Z.
pub fn pauli(k: usize) -> [[C; 2]; 2] {
    match k {
        0 => [[ONE, ZERO], [ZERO, ONE]],
        1 => [[ZERO, ONE], [ONE, ZERO]],
        2 => [[ZERO, -I], [I, ZERO]],
        3 => [[ONE, ZERO], [ZERO, -ONE]],
        _ => panic!("Pauli index {k} out of range"),
    }
}

/// Lowering operator of qubit `alpha` (1 or 2) in the two-qubit basis.
pub fn sigma_minus(alpha: usize) -> Mat4 {
    let mut m = Mat4::zeros();
    match alpha {
        1 => {
            m.0[0][2] = ONE;
            m.0[1][3] = ONE;
        }
        2 => {
            m.0[0][1] = ONE;
            m.0[2][3] = ONE;
        }
        _ => panic!("qubit index {alpha} out of range"),
    }
    m
}

/// Gate parameters, internal units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateSpec {
    /// Qubit–qubit coupling (rad/ns).
    pub g: f64,
    /// Gate time (ns).
    pub t2: f64,
    /// Common interaction frequency (rad/ns).
    pub f_q: f64,
    /// Bose–Hubbard anharmonicity (rad/ns).
    pub eta_bh: f64,
    /// Idle frequency (rad/ns); carried for reporting.
    pub f_idle: f64,
}

impl GateSpec {
    pub fn new(g: f64, t2: f64, f_q: f64, eta_bh: f64, f_idle: f64) -> Result<Self> {
        let s = GateSpec { g, t2, f_q, eta_bh, f_idle };
        s.validate()?;
        Ok(s)
    }

    /// √iSWAP-type gate: g·t₂ = π/4 with the anharmonicity chosen so that the
    /// |11⟩ population fully returns at t₂ (√(16g² + η²)·t₂ = 2π).
    pub fn sqrt_iswap(g: f64, f_q: f64, f_idle: f64) -> Result<Self> {
        Self::new(g, FRAC_PI_4 / g, f_q, 4.0 * 3f64.sqrt() * g, f_idle)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.g, self.t2, self.f_q, self.eta_bh, self.f_idle].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("GateSpec"));
        }
        if self.g <= 0.0 || self.t2 <= 0.0 {
            return Err(Error::Invalid(format!("gate needs g > 0 and t2 > 0, got g = {}, t2 = {}", self.g, self.t2)));
        }
        Ok(())
    }

    /// Rotation angle g·t₂.
    pub fn theta(&self) -> f64 {
        self.g * self.t2
    }

    /// Population lost from |11⟩ at the end of the gate.
    pub fn leakage(&self) -> f64 {
        1.0 - w11_at(self.g, self.eta_bh, self.t2).norm_sqr()
    }

    pub fn to_json(&self) -> GateSpecJson {
        GateSpecJson {
            g_mhz: units::to_mhz(self.g),
            g_int_mhz: None,
            t2_ns: Some(self.t2),
            f_q_ghz: units::to_ghz(self.f_q),
            eta_bh_mhz: Some(units::to_mhz(self.eta_bh)),
            f_idle_ghz: units::to_ghz(self.f_idle),
        }
    }
}

/// JSON form of [`GateSpec`] in plain units.
///
/// A missing `t2_ns` becomes π/(4·g_int), with `g_int_mhz` defaulting to `g_mhz`.
/// A missing `eta_bh_mhz` is set so the gate is leakage-free at t₂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateSpecJson {
    pub g_mhz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_int_mhz: Option<f64>,
    #[serde(default)]
    pub t2_ns: Option<f64>,
    pub f_q_ghz: f64,
    #[serde(default)]
    pub eta_bh_mhz: Option<f64>,
    #[serde(default = "default_idle")]
    pub f_idle_ghz: f64,
}

fn default_idle() -> f64 {
    5.7
}

impl TryFrom<GateSpecJson> for GateSpec {
    type Error = Error;
    fn try_from(j: GateSpecJson) -> Result<Self> {
        let g = units::mhz(j.g_mhz);
        let g_int = units::mhz(j.g_int_mhz.unwrap_or(j.g_mhz));
        if g_int <= 0.0 {
            return Err(Error::Invalid(format!("g_int must be positive, got {g_int}")));
        }
        let t2 = j.t2_ns.unwrap_or(FRAC_PI_4 / g_int);
        let eta = match j.eta_bh_mhz {
            Some(e) => units::mhz(e),
            None => {
                // Smallest η with √(16g² + η²)·t₂ a multiple of 2π.
                let n = (4.0 * g * t2 / (2.0 * PI)).floor() + 1.0;
                let omega = 2.0 * PI * n / t2;
                (omega * omega - 16.0 * g * g).max(0.0).sqrt()
            }
        };
        GateSpec::new(g, t2, units::ghz(j.f_q_ghz), eta, units::ghz(j.f_idle_ghz))
    }
}

/// One TLS coupled to one qubit, internal units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TlsSide {
    /// Coupling (rad/ns).
    pub lambda: f64,
    /// TLS frequency (rad/ns).
    pub omega_tls: f64,
    /// TLS dephasing rate (1/ns, angular).
    pub gamma_phi: f64,
}

impl TlsSide {
    pub fn new(lambda: f64, omega_tls: f64, gamma_phi: f64) -> Result<Self> {
        if ![lambda, omega_tls, gamma_phi].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("TlsSide"));
        }
        if lambda < 0.0 || gamma_phi < 0.0 {
            return Err(Error::Invalid(format!("TLS needs λ ≥ 0 and Γ ≥ 0, got λ = {lambda}, Γ = {gamma_phi}")));
        }
        Ok(TlsSide { lambda, omega_tls, gamma_phi })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TlsSideJson {
    pub lambda_mhz: f64,
    pub omega_tls_ghz: f64,
    #[serde(default)]
    pub gamma_tls_phi_mhz: f64,
}

impl TryFrom<TlsSideJson> for TlsSide {
    type Error = Error;
    fn try_from(j: TlsSideJson) -> Result<Self> {
        TlsSide::new(units::mhz(j.lambda_mhz), units::ghz(j.omega_tls_ghz), units::mhz(j.gamma_tls_phi_mhz))
    }
}

impl TlsSide {
    pub fn to_json(&self) -> TlsSideJson {
        TlsSideJson {
            lambda_mhz: units::to_mhz(self.lambda),
            omega_tls_ghz: units::to_ghz(self.omega_tls),
            gamma_tls_phi_mhz: units::to_mhz(self.gamma_phi),
        }
    }
}

/// The TLS next to each qubit; an absent side means λ = 0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TlsEnv {
    pub q1: Option<TlsSide>,
    pub q2: Option<TlsSide>,
}

impl TlsEnv {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn side(&self, alpha: usize) -> Option<&TlsSide> {
        match alpha {
            1 => self.q1.as_ref(),
            2 => self.q2.as_ref(),
            _ => None,
        }
    }

    /// Notes on sides where λ·t₂ is too large for second-order theory.
    pub fn warnings(&self, spec: &GateSpec) -> Vec<String> {
        [1, 2]
            .iter()
            .filter_map(|&a| {
                let s = self.side(a)?;
                let x = s.lambda * spec.t2;
                (x >= 0.5).then(|| format!("qubit {a}: λ·t₂ = {x:.3} ≥ 0.5, perturbative Kraus operators unreliable"))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TlsEnvJson {
    #[serde(default)]
    pub q1: Option<TlsSideJson>,
    #[serde(default)]
    pub q2: Option<TlsSideJson>,
}

impl TryFrom<TlsEnvJson> for TlsEnv {
    type Error = Error;
    fn try_from(j: TlsEnvJson) -> Result<Self> {
        Ok(TlsEnv { q1: j.q1.map(TryInto::try_into).transpose()?, q2: j.q2.map(TryInto::try_into).transpose()? })
    }
}

impl TlsEnv {
    pub fn to_json(&self) -> TlsEnvJson {
        TlsEnvJson { q1: self.q1.map(|s| s.to_json()), q2: self.q2.map(|s| s.to_json()) }
    }
}

/// |11⟩ amplitude after time `t` under coupling `g` and anharmonicity `eta`.
pub fn w11_at(g: f64, eta: f64, t: f64) -> C {
    let omega = (16.0 * g * g + eta * eta).sqrt();
    let (s, c) = (0.5 * omega * t).sin_cos();
    let r = if omega > 0.0 { eta / omega } else { 0.0 };
    C::from_polar(1.0, 0.5 * eta * t) * C::new(c, -r * s)
}

/// |11⟩ amplitude at the end of the gate.
pub fn w11_amplitude(spec: &GateSpec) -> C {
    w11_at(spec.g, spec.eta_bh, spec.t2)
}

/// Ideal gate restricted to the qubit subspace after time `t`.
pub fn u2_at(spec: &GateSpec, t: f64) -> Mat4 {
    let (s, c) = (spec.g * t).sin_cos();
    let p = C::from_polar(1.0, -spec.f_q * t);
    let mut m = Mat4::zeros();
    m.0[0][0] = ONE;
    m.0[1][1] = p * c;
    m.0[2][2] = p * c;
    m.0[1][2] = -I * p * s;
    m.0[2][1] = -I * p * s;
    m.0[3][3] = p * p * w11_at(spec.g, spec.eta_bh, t);
    m
}

/// Ideal gate at t₂.
pub fn u2_ideal(spec: &GateSpec) -> Mat4 {
    u2_at(spec, spec.t2)
}

/// General swap-type gate with rotation θ, single-excitation phase φ and
/// conditional phase ψ.
pub fn u2_general(theta: f64, phi: f64, psi: f64) -> Mat4 {
    let (s, c) = theta.sin_cos();
    let p = C::from_polar(1.0, -phi);
    let mut m = Mat4::zeros();
    m.0[0][0] = ONE;
    m.0[1][1] = p * c;
    m.0[2][2] = p * c;
    m.0[1][2] = -I * p * s;
    m.0[2][1] = -I * p * s;
    m.0[3][3] = C::from_polar(1.0, -2.0 * phi + psi);
    m
}

/// The four TLS kernel integrals up to time t:
/// ∫₀ᵗ e^{−Γτ} e^{−iδτ} h(τ) dτ with δ = f_q − ω_TLS and
/// h ∈ {sin gτ, cos gτ, sin gτ·w₁₁(τ), cos gτ·w₁₁(τ)}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernels {
    pub fst: C,
    pub fct: C,
    pub fswt: C,
    pub fcwt: C,
}

/// (e^{zt} − 1)/z, continuous at z = 0.
fn exp_integral(z: C, t: f64) -> C {
    let x = z * t;
    if x.norm() < 1e-2 {
        let mut term = C::new(t, 0.0);
        let mut sum = term;
        for k in 2..10 {
            term *= x / k as f64;
            sum += term;
        }
        sum
    } else {
        (x.exp() - 1.0) / z
    }
}

/// Closed-form kernel integrals for one TLS side.
pub fn kernel_integrals(spec: &GateSpec, side: &TlsSide, t: f64) -> Result<Kernels> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Range(format!("kernel upper limit must be finite and ≥ 0, got {t}")));
    }
    let delta = spec.f_q - side.omega_tls;
    let a0 = C::new(-side.gamma_phi, -delta);
    let ig = I * spec.g;
    let sin_cos = |shift: C| {
        let p = exp_integral(a0 + shift + ig, t);
        let m = exp_integral(a0 + shift - ig, t);
        ((p - m) / (2.0 * I), (p + m) * 0.5)
    };
    let (fst, fct) = sin_cos(ZERO);
    // w₁₁(τ) = A e^{i(η+Ω)τ/2} + B e^{i(η−Ω)τ/2}
    let omega = (16.0 * spec.g * spec.g + spec.eta_bh * spec.eta_bh).sqrt();
    let r = if omega > 0.0 { spec.eta_bh / omega } else { 0.0 };
    let (sa, ca) = sin_cos(I * 0.5 * (spec.eta_bh + omega));
    let (sb, cb) = sin_cos(I * 0.5 * (spec.eta_bh - omega));
    let (wa, wb) = (0.5 * (1.0 - r), 0.5 * (1.0 + r));
    Ok(Kernels { fst, fct, fswt: sa * wa + sb * wb, fcwt: ca * wa + cb * wb })
}

/// Interaction-picture jump amplitude e^{−Γτ}e^{iωτ}·U(τ)†σ⁻_α U(τ).
pub fn jump_operator(spec: &GateSpec, alpha: usize, side: &TlsSide, tau: f64) -> Mat4 {
    let u = u2_at(spec, tau);
    let f = C::from_polar((-side.gamma_phi * tau).exp(), side.omega_tls * tau);
    (u.dagger() * sigma_minus(alpha) * u).scale(f)
}

/// ∫₀ᵗ of [`jump_operator`], assembled from the kernel integrals.
pub fn integrated_jump(spec: &GateSpec, alpha: usize, side: &TlsSide, t: f64) -> Result<Mat4> {
    let k = kernel_integrals(spec, side, t)?;
    let mut m = Mat4::zeros();
    match alpha {
        1 => {
            m.0[0][1] = -I * k.fst;
            m.0[0][2] = k.fct;
            m.0[1][3] = k.fcwt;
            m.0[2][3] = I * k.fswt;
        }
        2 => {
            m.0[0][1] = k.fct;
            m.0[0][2] = -I * k.fst;
            m.0[1][3] = I * k.fswt;
            m.0[2][3] = k.fcwt;
        }
        _ => return Err(Error::Invalid(format!("qubit index {alpha} out of range"))),
    }
    Ok(m)
}

/// Kraus operators labelled by the final TLS state (TLS₁, TLS₂).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrausSet {
    pub e00: Mat4,
    pub e01: Mat4,
    pub e10: Mat4,
    pub e11: Mat4,
}

impl KrausSet {
    pub fn ops(&self) -> [Mat4; 4] {
        [self.e00, self.e01, self.e10, self.e11]
    }

    /// ‖Σ E†E − I‖ (Frobenius).
    pub fn trace_deviation(&self) -> f64 {
        completeness_deviation(&self.ops())
    }

    /// Kraus operators of the full gate, U₂·E_k.
    pub fn physical(&self, u: &Mat4) -> [Mat4; 4] {
        self.ops().map(|e| *u * e)
    }
}

pub fn completeness_deviation(ops: &[Mat4]) -> f64 {
    let s = ops.iter().fold(Mat4::zeros(), |acc, e| acc + e.dagger() * *e);
    (s - Mat4::identity()).norm()
}

/// Time-ordered ∫₀ᵀ dt F(t) with a smooth matrix integrand, by composite
/// Gauss–Legendre with panels sized to the fastest frequency present.
fn ordered_integral<F: FnMut(f64) -> Result<Mat4>>(mut f: F, t: f64, max_rate: f64) -> Result<Mat4> {
    let panels = ((t * max_rate / 2.0).ceil() as usize).clamp(1, 10_000);
    let gl = GaussLegendre::new(20);
    let h = t / panels as f64;
    let mut acc = Mat4::zeros();
    for p in 0..panels {
        let (lo, hi) = (p as f64 * h, (p + 1) as f64 * h);
        let (c, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        for (x, w) in gl.nodes.iter().zip(&gl.weights) {
            acc = acc + f(c + r * x)?.scale(C::new(w * r, 0.0));
        }
    }
    Ok(acc)
}

fn max_rate(spec: &GateSpec, env: &TlsEnv) -> f64 {
    let omega = (16.0 * spec.g * spec.g + spec.eta_bh * spec.eta_bh).sqrt();
    let tls = [env.q1, env.q2]
        .iter()
        .flatten()
        .map(|s| (spec.f_q - s.omega_tls).abs() + s.gamma_phi)
        .fold(0.0, f64::max);
    2.0 * (tls + 2.0 * spec.g + spec.eta_bh.abs() + omega) + 1.0
}

/// Second-order Kraus operators of the gate in the interaction picture.
///
/// E₀₀ = I − Σ_α λ_α² ∫₀ᵀ a_α(t)† b_α(t) dt, E_α = −iλ_α b_α(T) and
/// E₁₁ = −λ₁λ₂ ∫₀ᵀ [a₁(t) b₂(t) + a₂(t) b₁(t)] dt, where a_α is the jump
/// amplitude and b_α its running integral.
pub fn build_kraus(spec: &GateSpec, env: &TlsEnv) -> Result<KrausSet> {
    spec.validate()?;
    let t = spec.t2;
    let rate = max_rate(spec, env);
    let mut set = KrausSet { e00: Mat4::identity(), e01: Mat4::zeros(), e10: Mat4::zeros(), e11: Mat4::zeros() };
    for alpha in [1, 2] {
        let Some(side) = env.side(alpha) else { continue };
        if side.lambda == 0.0 {
            continue;
        }
        let second = ordered_integral(
            |s| Ok(jump_operator(spec, alpha, side, s).dagger() * integrated_jump(spec, alpha, side, s)?),
            t,
            rate,
        )?;
        set.e00 = set.e00 - second.scale(C::new(side.lambda * side.lambda, 0.0));
        let first = integrated_jump(spec, alpha, side, t)?.scale(-I * side.lambda);
        if alpha == 1 {
            set.e10 = first;
        } else {
            set.e01 = first;
        }
    }
    if let (Some(s1), Some(s2)) = (env.q1.filter(|s| s.lambda > 0.0), env.q2.filter(|s| s.lambda > 0.0)) {
        let cross = ordered_integral(
            |s| {
                Ok(jump_operator(spec, 1, &s1, s) * integrated_jump(spec, 2, &s2, s)?
                    + jump_operator(spec, 2, &s2, s) * integrated_jump(spec, 1, &s1, s)?)
            },
            t,
            rate,
        )?;
        set.e11 = cross.scale(C::new(-s1.lambda * s2.lambda, 0.0));
    }
    Ok(set)
}

/// F_e = Σ_k |Tr[U V_k†]|² / d².
pub fn entanglement_fidelity(u: &Mat4, kraus: &[Mat4]) -> f64 {
    kraus.iter().map(|v| (*u * v.dagger()).trace().norm_sqr()).sum::<f64>() / (DIM * DIM) as f64
}

/// F_avg = (d·F_e + 1)/(d + 1).
pub fn average_fidelity(f_e: f64, d: usize) -> f64 {
    let d = d as f64;
    (d * f_e + 1.0) / (d + 1.0)
}

/// Normalised two-qubit Pauli basis element P_k = σ_{k/4} ⊗ σ_{k%4} / 2.
pub fn pauli_basis(k: usize) -> Mat4 {
    Mat4::kron(&pauli(k / 4), &pauli(k % 4)).scale(C::new(0.5, 0.0))
}

/// Pauli transfer matrix R_ij = Σ_k Tr[P_i V_k P_j V_k†].
pub fn transfer_matrix(kraus: &[Mat4]) -> [[f64; 16]; 16] {
    let basis: Vec<Mat4> = (0..16).map(pauli_basis).collect();
    let mut r = [[0.0; 16]; 16];
    for j in 0..16 {
        let out = kraus.iter().fold(Mat4::zeros(), |acc, v| acc + *v * basis[j] * v.dagger());
        for i in 0..16 {
            r[i][j] = (basis[i] * out).trace().re;
        }
    }
    r
}

/// Unitarity u and rescaled form u′ = (1 − √u)(d − 1)/d.
///
/// u is the squared Frobenius norm of the traceless block of the transfer
/// matrix over d² − 1.
pub fn unitarity(kraus: &[Mat4]) -> Result<(f64, f64)> {
    let dev = completeness_deviation(kraus);
    if !(dev < 0.1) {
        return Err(Error::Range(format!("channel far from trace preserving (‖ΣE†E − I‖ = {dev:.3e})")));
    }
    let r = transfer_matrix(kraus);
    let s: f64 = (1..16).flat_map(|i| (1..16).map(move |j| (i, j))).map(|(i, j)| r[i][j] * r[i][j]).sum();
    let u = s / 15.0;
    let d = DIM as f64;
    Ok((u, (1.0 - u.sqrt()) * (d - 1.0) / d))
}

/// Gate quality figures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateMetrics {
    pub f_avg: f64,
    pub f_e: f64,
    pub u: f64,
    pub u_rescaled: f64,
    pub err: f64,
}

/// Metrics of the TLS channel against the ideal gate in the same frame.
pub fn metrics_of(kraus: &KrausSet) -> Result<GateMetrics> {
    let ops = kraus.ops();
    let f_e = entanglement_fidelity(&Mat4::identity(), &ops);
    let f_avg = average_fidelity(f_e, DIM);
    let (u, u_rescaled) = unitarity(&ops)?;
    Ok(GateMetrics { f_avg, f_e, u, u_rescaled, err: 1.0 - f_avg })
}

pub fn gate_metrics(spec: &GateSpec, env: &TlsEnv) -> Result<GateMetrics> {
    metrics_of(&build_kraus(spec, env)?)
}

fn haar_state(seed: u64, index: u64) -> [C; 4] {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut v: [C; 4] = std::array::from_fn(|_| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        C::new(re, im)
    });
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|z| *z /= n);
    v
}

fn apply_channel(kraus: &[Mat4], rho: &Mat4) -> Mat4 {
    kraus.iter().fold(Mat4::zeros(), |acc, v| acc + *v * *rho * v.dagger())
}

fn projector(psi: &[C; 4]) -> Mat4 {
    let mut m = Mat4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            m.0[i][j] = psi[i] * psi[j].conj();
        }
    }
    m
}

/// Sampling estimate of the average fidelity ∫dψ ⟨ψ|U†ε(ψ)U|ψ⟩ over `n`
/// Haar-random pure states.
pub fn sampled_average_fidelity(u: &Mat4, kraus: &[Mat4], n: usize, seed: u64, exec: Exec) -> f64 {
    let vals = exec.map(n, |k| {
        let psi = haar_state(seed, k as u64);
        let out = apply_channel(kraus, &projector(&psi));
        let phi = u.apply(&psi);
        let o = out.apply(&phi);
        (0..4).map(|i| phi[i].conj() * o[i]).sum::<C>().re
    });
    vals.iter().sum::<f64>() / n as f64
}

/// Sampling estimate of the unitarity, d/(d−1)·∫dψ Tr[ε′(ψ)†ε′(ψ)] with
/// ε′(ψ) = ε(ψ − I/d), over `n` Haar-random pure states.
pub fn sampled_unitarity(kraus: &[Mat4], n: usize, seed: u64, exec: Exec) -> f64 {
    let d = DIM as f64;
    let vals = exec.map(n, |k| {
        let psi = haar_state(seed, k as u64);
        let a = projector(&psi) - Mat4::identity().scale(C::new(1.0 / d, 0.0));
        let out = apply_channel(kraus, &a);
        (out.dagger() * out).trace().re
    });
    d / (d - 1.0) * vals.iter().sum::<f64>() / n as f64
}

/// Pauli amplitudes c_ab = Tr[(σ_a ⊗ σ_b) E]/4, so E = Σ c_ab σ_a ⊗ σ_b.
pub fn pauli_amplitudes(e: &Mat4) -> [[C; 4]; 4] {
    std::array::from_fn(|a| {
        std::array::from_fn(|b| (Mat4::kron(&pauli(a), &pauli(b)) * *e).trace() / 4.0)
    })
}

/// Table of the non-negligible Pauli amplitudes of each Kraus operator.
pub fn pauli_table(kraus: &KrausSet, threshold: f64) -> String {
    const NAMES: [char; 4] = ['I', 'X', 'Y', 'Z'];
    let mut out = String::from("kraus,pauli,re,im\n");
    for (label, e) in ["E00", "E01", "E10", "E11"].iter().zip(kraus.ops()) {
        let amps = pauli_amplitudes(&e);
        for a in 0..4 {
            for b in 0..4 {
                let c = amps[a][b];
                if c.norm() > threshold {
                    let _ = writeln!(out, "{label},{}{},{:.9e},{:.9e}", NAMES[a], NAMES[b], c.re, c.im);
                }
            }
        }
    }
    out
}

/// Average gate error from independent amplitude damping of both qubits over
/// the gate time (relaxation time `t1`, ns). Auxiliary; added to the TLS error.
pub fn relaxation_error(t2: f64, t1: f64) -> Result<f64> {
    if !(t1 > 0.0) || !(t2 >= 0.0) {
        return Err(Error::Invalid(format!("relaxation needs t1 > 0 and t2 ≥ 0, got t1 = {t1}, t2 = {t2}")));
    }
    let keep = (-0.5 * t2 / t1).exp();
    let f_single = (1.0 + keep).powi(2) / 4.0;
    Ok(1.0 - average_fidelity(f_single * f_single, DIM))
}

/// Swept variable of a fidelity sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Interaction frequency, GHz.
    FQ,
    /// Coupling of every present TLS, MHz.
    Lambda,
    /// Dephasing of every present TLS, MHz.
    GammaTlsPhi,
    /// Rotation angle g·t₂ (rad) via the gate time.
    Theta,
    /// TLS detunings ω_TLS,α − f_q (MHz): x for qubit 1, y for qubit 2.
    Detunings,
}

impl SweepAxis {
    /// Plain-unit value to internal units.
    pub fn to_internal(self, v: f64) -> f64 {
        match self {
            SweepAxis::FQ => units::ghz(v),
            SweepAxis::Theta => v,
            _ => units::mhz(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    /// Swept value, plain units.
    pub x: f64,
    /// Second swept value for two-axis sweeps, plain units.
    pub y: Option<f64>,
    pub metrics: GateMetrics,
}

/// Point of the sweep at plain-unit values `x` (and `y`).
pub fn sweep_point(spec: &GateSpec, env: &TlsEnv, axis: SweepAxis, x: f64, y: Option<f64>) -> Result<(GateSpec, TlsEnv)> {
    let mut spec = *spec;
    let mut env = *env;
    let v = axis.to_internal(x);
    match axis {
        SweepAxis::FQ => spec.f_q = v,
        SweepAxis::Theta => spec.t2 = v / spec.g,
        SweepAxis::Lambda => env.q1.iter_mut().chain(env.q2.iter_mut()).for_each(|s| s.lambda = v),
        SweepAxis::GammaTlsPhi => env.q1.iter_mut().chain(env.q2.iter_mut()).for_each(|s| s.gamma_phi = v),
        SweepAxis::Detunings => {
            let y = y.ok_or_else(|| Error::Invalid("detuning sweep needs a second value".into()))?;
            let (Some(s1), Some(s2)) = (env.q1.as_mut(), env.q2.as_mut()) else {
                return Err(Error::Invalid("detuning sweep needs a TLS on both qubits".into()));
            };
            s1.omega_tls = spec.f_q + v;
            s2.omega_tls = spec.f_q + units::mhz(y);
        }
    }
    spec.validate()?;
    Ok((spec, env))
}

/// Gate metrics over the plain-unit values `xs` (times `ys` for two-axis
/// sweeps, y outermost).
pub fn sweep(spec: &GateSpec, env: &TlsEnv, axis: SweepAxis, xs: &[f64], ys: &[f64], exec: Exec) -> Result<Vec<SweepRow>> {
    let pts: Vec<(f64, Option<f64>)> = if axis == SweepAxis::Detunings {
        if ys.is_empty() {
            return Err(Error::Invalid("detuning sweep needs second-axis values".into()));
        }
        ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, Some(y)))).collect()
    } else {
        xs.iter().map(|&x| (x, None)).collect()
    };
    exec.map(pts.len(), |k| {
        let (x, y) = pts[k];
        let (s, e) = sweep_point(spec, env, axis, x, y)?;
        Ok(SweepRow { x, y, metrics: gate_metrics(&s, &e)? })
    })
    .into_iter()
    .collect()
}

/// CSV of a sweep: `x,err,u_rescaled,f_avg`, with a `y` column for two-axis sweeps.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let two = rows.iter().any(|r| r.y.is_some());
    let mut out = String::from(if two { "x,y,err,u_rescaled,f_avg\n" } else { "x,err,u_rescaled,f_avg\n" });
    for r in rows {
        let m = &r.metrics;
        match r.y {
            Some(y) => writeln!(out, "{:.6},{:.6},{:.9e},{:.9e},{:.12}", r.x, y, m.err, m.u_rescaled, m.f_avg),
            None => writeln!(out, "{:.6},{:.9e},{:.9e},{:.12}", r.x, m.err, m.u_rescaled, m.f_avg),
        }
        .expect("write to String");
    }
    out
}

/// `n` values from `lo` to `hi`, evenly spaced or log-spaced.
pub fn axis_values(lo: f64, hi: f64, n: usize, log: bool) -> Result<Vec<f64>> {
    if n == 0 || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Invalid(format!("bad sweep range [{lo}, {hi}] with {n} points")));
    }
    if log && (lo <= 0.0 || hi <= 0.0) {
        return Err(Error::Invalid("log sweep needs positive bounds".into()));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n)
        .map(|k| {
            let s = k as f64 / (n - 1) as f64;
            if log {
                (lo.ln() + s * (hi.ln() - lo.ln())).exp()
            } else {
                lo + s * (hi - lo)
            }
        })
        .collect())
}
