//! Complex error function, Gamma function and Whittaker's parabolic cylinder
//! function D_ν(z).

use crate::error::{Error, Result};
use errorfunctions::ComplexErrorFunctions;
use num_complex::Complex64;
use std::f64::consts::PI;

pub const EULER_GAMMA: f64 = 0.5772156649015329;

const SQRT_2PI: f64 = 2.5066282746310002;

fn finite(z: Complex64, func: &'static str) -> Result<()> {
    if z.re.is_finite() && z.im.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(func))
    }
}

/// erf(z) for complex z.
pub fn erf_complex(z: Complex64) -> Result<Complex64> {
    finite(z, "erf")?;
    Ok(z.erf())
}

/// erfc(z) = 1 − erf(z) for complex z, accurate where erf(z) is close to 1.
pub fn erfc_complex(z: Complex64) -> Result<Complex64> {
    finite(z, "erfc")?;
    Ok(z.erfc())
}

/// erfi(z) = −i·erf(iz) for complex z.
pub fn erfi_complex(z: Complex64) -> Result<Complex64> {
    finite(z, "erfi")?;
    Ok(z.erfi())
}

// Lanczos approximation, g = 7, nine terms.
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

fn is_pole(z: Complex64) -> bool {
    z.im == 0.0 && z.re <= 0.0 && z.re == z.re.round()
}

/// ln Γ(z) for Re z ≥ 0.5 (principal branch not tracked; only exp of it is used).
fn ln_gamma_right(z: Complex64) -> Complex64 {
    let z = z - 1.0;
    let mut a = Complex64::new(LANCZOS[0], 0.0);
    for (k, c) in LANCZOS.iter().enumerate().skip(1) {
        a += *c / (z + k as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    SQRT_2PI.ln() + (z + 0.5) * t.ln() - t + a.ln()
}

/// Γ(z) for complex z.
pub fn gamma_complex(z: Complex64) -> Result<Complex64> {
    finite(z, "gamma")?;
    if is_pole(z) {
        return Err(Error::Pole { func: "gamma", at: z.re });
    }
    if z.re < 0.5 {
        // Reflection: Γ(z)Γ(1−z) = π / sin(πz).
        let s = (z * PI).sin();
        Ok(PI / (s * ln_gamma_right(1.0 - z).exp()))
    } else {
        Ok(ln_gamma_right(z).exp())
    }
}

/// 1/Γ(z), entire; exactly zero at the poles of Γ.
pub fn rgamma_complex(z: Complex64) -> Result<Complex64> {
    finite(z, "rgamma")?;
    if is_pole(z) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    if z.re < 0.5 {
        let s = (z * PI).sin();
        Ok(s * ln_gamma_right(1.0 - z).exp() / PI)
    } else {
        Ok((-ln_gamma_right(z)).exp())
    }
}

const SERIES_RADIUS: f64 = 4.0;
const ASYMPTOTIC_RADIUS: f64 = 9.0;
const STEP: f64 = 0.5;

/// Parabolic cylinder function D_ν(z) (Whittaker's notation).
///
/// Evaluation strategy:
/// * |z| ≤ 4: Maclaurin series built from D_ν(0) and D_ν'(0).
/// * |z| ≥ 9: Poincaré asymptotic expansion, including the second exponential
///   when |ph z| > π/4.
/// * otherwise: Taylor-series continuation of Weber's equation along the ray
///   through z, started from whichever end keeps the solution dominant
///   (inward from the asymptotic radius when |ph z| < π/4, outward from the
///   series radius elsewhere).
pub fn pcf_d(nu: Complex64, z: Complex64) -> Result<Complex64> {
    pcf_d_with_derivative(nu, z).map(|(d, _)| d)
}

/// D_ν(z) together with its z-derivative.
pub fn pcf_d_with_derivative(nu: Complex64, z: Complex64) -> Result<(Complex64, Complex64)> {
    finite(nu, "pcf_d")?;
    finite(z, "pcf_d")?;
    let r = z.norm();
    let mut series = None;
    if r <= SERIES_RADIUS {
        let (y, dy, peak) = maclaurin_peak(nu, z);
        // A recessive D_ν inside the disk is the small remainder of large
        // terms; inward continuation may then do better.
        if peak <= 1e4 * y.norm() || z.arg().abs() > 0.75 * PI {
            return Ok((y, dy));
        }
        series = Some((y, dy, (peak / y.norm()).ln()));
    }
    if r >= ASYMPTOTIC_RADIUS {
        if let Some(v) = asymptotic(nu, z) {
            return Ok(v);
        }
    }
    let ph = z.arg();
    let dir = z / r;
    if ph.abs() > 0.75 * PI {
        // The connection formula is exact but can cancel when |Im ν| is large;
        // D_ν is then dominant along the ray and outward continuation is stable.
        let (v, dv, cancel) = connection(nu, z)?;
        if cancel < 1e4 {
            return Ok((v, dv));
        }
        let start = dir * SERIES_RADIUS;
        let (d0, dd0) = maclaurin(nu, start);
        return Ok(continue_ode(nu, start, d0, dd0, z));
    }
    // Continue along the ray from whichever end amplifies the companion
    // solution least: outward from the series disk or inward from a radius
    // where the asymptotic expansion converges.
    let growth_out = match series {
        Some((_, _, loss)) => loss,
        None => companion_growth(nu, z, SERIES_RADIUS, r),
    };
    let mut best: Option<(f64, Complex64, Complex64, Complex64)> = None;
    for &radius in &[ASYMPTOTIC_RADIUS, 12.0, 16.0, 22.0, 30.0] {
        if radius < r {
            continue;
        }
        let growth_in = companion_growth(nu, z, r, radius);
        if best.as_ref().is_some_and(|b| b.0 <= growth_in) {
            continue;
        }
        let start = dir * radius;
        if let Some((d0, dd0)) = asymptotic(nu, start) {
            best = Some((growth_in, start, d0, dd0));
        }
    }
    match best {
        Some((g, start, d0, dd0)) if g <= growth_out => Ok(continue_ode(nu, start, d0, dd0, z)),
        _ if growth_out < 20.0 || series.is_some() => {
            if let Some((y, dy, _)) = series {
                return Ok((y, dy));
            }
            let start = dir * SERIES_RADIUS;
            let (d0, dd0) = maclaurin(nu, start);
            Ok(continue_ode(nu, start, d0, dd0, z))
        }
        _ => Err(Error::Convergence {
            func: "pcf_d",
            detail: format!("no stable continuation path for nu={nu}, z={z}"),
        }),
    }
}

/// Log-amplification of the companion solution relative to D_ν when continuing
/// along the ray through `z` between radii `lo` and `hi` towards |z|.
///
/// Uses the leading asymptotic size ψ(s) = ln|D_ν| − ln|companion|
/// = −Re(w²)/2 + (2 Re ν + 1) ln s − 2 Im ν · ph z at w = s e^{i ph z}.
fn companion_growth(nu: Complex64, z: Complex64, lo: f64, hi: f64) -> f64 {
    let ph = z.arg();
    let c2 = (2.0 * ph).cos();
    let psi = |s: f64| -0.5 * s * s * c2 + (2.0 * nu.re + 1.0) * s.ln() - 2.0 * nu.im * ph;
    let end = psi(z.norm());
    (0..=64)
        .map(|k| psi(lo + (hi - lo) * k as f64 / 64.0) - end)
        .fold(0.0, f64::max)
}

/// D_ν(z) = e^{∓iπν} D_ν(−z) + √(2π)/Γ(−ν) · e^{∓iπ(ν+1)/2} D_{−ν−1}(±iz),
/// upper signs for ph z > 0. Both right-hand terms are evaluated in sectors
/// where they are computed stably.
/// Also returns the cancellation ratio max(|terms|)/|sum|.
fn connection(nu: Complex64, z: Complex64) -> Result<(Complex64, Complex64, f64)> {
    let sgn = if z.im > 0.0 || (z.im == 0.0 && z.re < 0.0) { 1.0 } else { -1.0 };
    let i = Complex64::new(0.0, 1.0);
    let (a, da) = pcf_d_with_derivative(nu, -z)?;
    let w = i * sgn * z;
    let (b, db) = pcf_d_with_derivative(-nu - 1.0, w)?;
    let e1 = (-i * sgn * PI * nu).exp();
    let e2 = SQRT_2PI * rgamma_complex(-nu)? * (-i * sgn * PI * (nu + 1.0) * 0.5).exp();
    let (t1, t2) = (e1 * a, e2 * b);
    let v = t1 + t2;
    let cancel = t1.norm().max(t2.norm()) / v.norm().max(f64::MIN_POSITIVE);
    Ok((v, -e1 * da + e2 * i * sgn * db, cancel))
}

fn maclaurin(nu: Complex64, z: Complex64) -> (Complex64, Complex64) {
    let (y, dy, _) = maclaurin_peak(nu, z);
    (y, dy)
}

/// Maclaurin sum together with its largest term in magnitude.
fn maclaurin_peak(nu: Complex64, z: Complex64) -> (Complex64, Complex64, f64) {
    // D_ν(0) = 2^{ν/2}√π / Γ((1−ν)/2), D_ν'(0) = −2^{(ν+1)/2}√π / Γ(−ν/2).
    let two = Complex64::new(2.0, 0.0);
    let sqrt_pi = PI.sqrt();
    let c0 = two.powc(nu * 0.5) * sqrt_pi * rgamma_complex((1.0 - nu) * 0.5).expect("finite");
    let c1 = -two.powc((nu + 1.0) * 0.5) * sqrt_pi * rgamma_complex(-nu * 0.5).expect("finite");
    taylor_sum_peak(nu, Complex64::new(0.0, 0.0), c0, c1, z)
}

/// Sums the local Taylor series of Weber's equation y'' = (z²/4 − ν − ½) y about
/// `z0` with y(z0) = `y0`, y'(z0) = `dy0`, evaluated at z0 + `h`.
/// Returns (y, y').
fn taylor_sum(nu: Complex64, z0: Complex64, y0: Complex64, dy0: Complex64, h: Complex64) -> (Complex64, Complex64) {
    let (y, dy, _) = taylor_sum_peak(nu, z0, y0, dy0, h);
    (y, dy)
}

fn taylor_sum_peak(
    nu: Complex64,
    z0: Complex64,
    y0: Complex64,
    dy0: Complex64,
    h: Complex64,
) -> (Complex64, Complex64, f64) {
    // (k+2)(k+1) c_{k+2} = q0·c_k + (z0/2)·c_{k−1} + ¼·c_{k−2}
    let q0 = z0 * z0 * 0.25 - nu - 0.5;
    let half_z0 = z0 * 0.5;
    let zero = Complex64::new(0.0, 0.0);
    let (mut cm2, mut cm1, mut c0, mut c1) = (zero, zero, y0, dy0);
    let mut y = y0 + dy0 * h;
    let mut dy = dy0;
    let mut hk = h; // h^{k+1}
    let mut quiet = 0;
    let mut peak = y0.norm().max((dy0 * h).norm());
    for k in 0..3000usize {
        let kf = k as f64;
        let c2 = (q0 * c0 + half_z0 * cm1 + cm2 * 0.25) / ((kf + 2.0) * (kf + 1.0));
        // c2 multiplies h^{k+2} in y and (k+2) h^{k+1} in y'.
        let t_dy = c2 * (kf + 2.0) * hk;
        hk *= h;
        let t_y = c2 * hk;
        y += t_y;
        dy += t_dy;
        peak = peak.max(t_y.norm());
        if t_y.norm() + t_dy.norm() <= 1e-17 * (y.norm() + dy.norm()) {
            quiet += 1;
            if quiet >= 4 {
                break;
            }
        } else {
            quiet = 0;
        }
        cm2 = cm1;
        cm1 = c0;
        c0 = c1;
        c1 = c2;
    }
    (y, dy, peak)
}

fn continue_ode(nu: Complex64, from: Complex64, y0: Complex64, dy0: Complex64, to: Complex64) -> (Complex64, Complex64) {
    let span = to - from;
    let steps = (span.norm() / STEP).ceil().max(1.0) as usize;
    let h = span / steps as f64;
    let (mut y, mut dy) = (y0, dy0);
    let mut z = from;
    for _ in 0..steps {
        let (ny, ndy) = taylor_sum(nu, z, y, dy, h);
        y = ny;
        dy = ndy;
        z += h;
    }
    (y, dy)
}

/// Sums Σ_s a_s with a_{s+1}/a_s = ratio(s), truncated at the smallest term.
/// Returns (sum, derivative-helper sum Σ s·a_s, last term magnitude).
fn asymptotic_series<R: Fn(usize) -> Complex64>(ratio: R) -> (Complex64, Complex64, f64) {
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    let mut sum_s = Complex64::new(0.0, 0.0);
    let mut last = 1.0f64;
    for s in 0..200usize {
        let next = term * ratio(s);
        let m = next.norm();
        if m >= last {
            break;
        }
        term = next;
        sum += term;
        sum_s += term * (s + 1) as f64;
        last = m;
        if m < 1e-17 * sum.norm() {
            break;
        }
    }
    (sum, sum_s, last)
}

const STOKES_BAND: f64 = 0.2;

fn asymptotic(nu: Complex64, z: Complex64) -> Option<(Complex64, Complex64)> {
    let z2 = z * z;
    // Dominant expansion e^{−z²/4} z^ν Σ_s (−1)^s (−ν)_{2s}/(s!(2z²)^s).
    let (s1, s1d, e1) = asymptotic_series(|s| {
        let sf = s as f64;
        -(nu - 2.0 * sf) * (nu - 2.0 * sf - 1.0) / (2.0 * (sf + 1.0) * z2)
    });
    let lz = z.ln();
    let pre1 = (-z2 * 0.25 + nu * lz).exp();
    let mut val = pre1 * s1;
    // d/dz of e^{−z²/4} z^ν Σ a_s z^{−2s}: pre·[(−z/2 + ν/z) Σ a_s − (2/z) Σ s a_s].
    let mut der = pre1 * ((-z * 0.5 + nu / z) * s1 - s1d * 2.0 / z);
    let mut err = e1 * pre1.norm();
    let ph = z.arg();
    if ph.abs() > PI / 4.0 {
        // Companion e^{z²/4} z^{−ν−1} series. Its Stokes multiplier switches on
        // across |ph z| = π/2; near that line the expansion is only usable when
        // the companion is negligible.
        let sign = if ph > 0.0 || (ph == PI) { 1.0 } else { -1.0 };
        let (s2, s2d, e2) = asymptotic_series(|s| {
            let sf = s as f64;
            (nu + 2.0 * sf + 1.0) * (nu + 2.0 * sf + 2.0) / (2.0 * (sf + 1.0) * z2)
        });
        let rg = rgamma_complex(-nu).ok()?;
        let coef = -SQRT_2PI * rg * (Complex64::new(0.0, sign * PI) * nu).exp();
        let pre2 = coef * (z2 * 0.25 - (nu + 1.0) * lz).exp();
        let companion = pre2 * s2;
        if (ph.abs() - PI / 2.0).abs() < STOKES_BAND {
            err += companion.norm();
        } else if ph.abs() > PI / 2.0 {
            val += companion;
            der += pre2 * ((z * 0.5 - (nu + 1.0) / z) * s2 - s2d * 2.0 / z);
            err += e2 * pre2.norm();
        }
    }
    if err <= 1e-13 * val.norm().max(1e-300) {
        Some((val, der))
    } else {
        None
    }
}
