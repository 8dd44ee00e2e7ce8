//! Swap-spectroscopy data (TSSD): decay probability over a grid of hold times
//! and plateau frequencies.
//!
//! Frames are synthesized from one of the decay models, optionally passed
//! through a readout/shot-noise model, and stored as CSV with a JSON sidecar.
//! Points where the model fails are kept as NaN and written as empty cells.

use crate::coherent::TrapezoidRamps;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::perturbative::{decay_prob_numeric, SpaColumn, TlsParams, TlsParamsJson};
use crate::pulse::{Trajectory, TrajectoryJson};
use crate::units;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemporalMode {
    Uniform,
    Logarithmic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingGrid {
    /// Plateau frequencies (rad/ns), strictly increasing.
    pub f_pl_values: Vec<f64>,
    /// Hold times (ns), strictly increasing.
    pub t_p_values: Vec<f64>,
    pub temporal_mode: TemporalMode,
}

impl SamplingGrid {
    pub fn from_values(f_pl_values: Vec<f64>, t_p_values: Vec<f64>, temporal_mode: TemporalMode) -> Result<Self> {
        for (name, v) in [("f_pl", &f_pl_values), ("t_p", &t_p_values)] {
            if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Invalid(format!("{name} axis must be non-empty and finite")));
            }
            if v.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Invalid(format!("{name} axis must be strictly increasing")));
            }
        }
        if temporal_mode == TemporalMode::Logarithmic {
            if t_p_values[0] <= 0.0 {
                return Err(Error::Invalid("logarithmic t_p axis must be positive".into()));
            }
            let r0 = t_p_values.get(1).map(|t| t / t_p_values[0]);
            if let Some(r0) = r0 {
                if t_p_values.windows(2).any(|w| ((w[1] / w[0]) / r0 - 1.0).abs() > 1e-9) {
                    return Err(Error::Invalid("logarithmic t_p axis needs a constant ratio".into()));
                }
            }
        }
        Ok(SamplingGrid { f_pl_values, t_p_values, temporal_mode })
    }

    pub fn n_t(&self) -> usize {
        self.t_p_values.len()
    }

    pub fn n_f(&self) -> usize {
        self.f_pl_values.len()
    }

    /// Mean spacing of the hold-time axis.
    pub fn mean_t_step(&self) -> f64 {
        let n = self.n_t();
        if n < 2 {
            return 0.0;
        }
        (self.t_p_values[n - 1] - self.t_p_values[0]) / (n - 1) as f64
    }
}

/// Uniform frequency axis `f_lo, f_lo + df, …` up to `f_hi`, and `n_t` hold times
/// on `[t_lo, t_hi]`, uniform or geometric.
pub fn make_grid(f_lo: f64, f_hi: f64, df: f64, t_lo: f64, t_hi: f64, n_t: usize, mode: TemporalMode) -> Result<SamplingGrid> {
    if !(f_lo < f_hi) || !(df > 0.0) {
        return Err(Error::Invalid(format!("frequency range [{f_lo}, {f_hi}] with step {df}")));
    }
    if !(t_lo < t_hi) || n_t < 2 {
        return Err(Error::Invalid(format!("time range [{t_lo}, {t_hi}] with {n_t} points")));
    }
    let n_f = ((f_hi - f_lo) / df + 1e-9).floor() as usize + 1;
    let f = (0..n_f).map(|k| f_lo + df * k as f64).collect();
    let last = (n_t - 1) as f64;
    let t = match mode {
        TemporalMode::Uniform => (0..n_t).map(|k| t_lo + (t_hi - t_lo) * k as f64 / last).collect(),
        TemporalMode::Logarithmic => {
            if t_lo <= 0.0 {
                return Err(Error::Invalid("logarithmic grid needs t_lo > 0".into()));
            }
            let ratio = (t_hi / t_lo).ln();
            (0..n_t).map(|k| t_lo * (ratio * k as f64 / last).exp()).collect()
        }
    };
    SamplingGrid::from_values(f, t, mode)
}

/// Readout resonator causing Purcell decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Purcell {
    /// Resonator frequency (rad/ns).
    pub omega_r: f64,
    /// Qubit–resonator coupling (rad/ns).
    pub g_jc: f64,
    /// Resonator linewidth (1/ns).
    pub kappa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Probability that the ground state is read as excited.
    pub e0: f64,
    /// Probability that the excited state is read as ground.
    pub e1: f64,
    /// Shots per point; `None` means infinitely many.
    pub shots: Option<u64>,
    pub purcell: Option<Purcell>,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { e0: 0.01, e1: 0.05, shots: Some(1000), purcell: None }
    }
}

impl NoiseSpec {
    pub fn off() -> Self {
        NoiseSpec { e0: 0.0, e1: 0.0, shots: None, purcell: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.e0) || !(0.0..0.5).contains(&self.e1) {
            return Err(Error::Invalid(format!("readout errors must lie in [0, 0.5): e0={}, e1={}", self.e0, self.e1)));
        }
        if self.shots == Some(0) {
            return Err(Error::Invalid("shots must be at least 1".into()));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.e0 == 0.0 && self.e1 == 0.0 && self.shots.is_none()
    }
}

/// JSON form of [`NoiseSpec`]; `shots: null` means infinitely many.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseSpecJson {
    pub e0: f64,
    pub e1: f64,
    pub shots: Option<u64>,
    #[serde(default)]
    pub purcell: Option<PurcellJson>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PurcellJson {
    pub omega_r_ghz: f64,
    pub g_jc_mhz: f64,
    pub kappa_mhz: f64,
}

impl NoiseSpec {
    pub fn to_json(&self) -> NoiseSpecJson {
        NoiseSpecJson {
            e0: self.e0,
            e1: self.e1,
            shots: self.shots,
            purcell: self.purcell.map(|p| PurcellJson {
                omega_r_ghz: units::to_ghz(p.omega_r),
                g_jc_mhz: units::to_mhz(p.g_jc),
                kappa_mhz: units::to_mhz(p.kappa),
            }),
        }
    }
}

impl TryFrom<NoiseSpecJson> for NoiseSpec {
    type Error = Error;
    fn try_from(j: NoiseSpecJson) -> Result<Self> {
        let n = NoiseSpec {
            e0: j.e0,
            e1: j.e1,
            shots: j.shots,
            purcell: j.purcell.map(|p| Purcell {
                omega_r: units::ghz(p.omega_r_ghz),
                g_jc: units::mhz(p.g_jc_mhz),
                kappa: units::mhz(p.kappa_mhz),
            }),
        };
        n.validate()?;
        Ok(n)
    }
}

/// Observed excited fraction for a true decay probability.
///
/// The readout flips are applied as an affine map; with finitely many shots the
/// result is a binomial sample of that probability.
pub fn apply_noise<R: Rng + ?Sized>(p_true: f64, noise: &NoiseSpec, rng: &mut R) -> f64 {
    let p = p_true * (1.0 - noise.e1) + (1.0 - p_true) * noise.e0;
    match noise.shots {
        None => p,
        Some(n) => {
            let p = p.clamp(0.0, 1.0);
            Binomial::new(n, p).map(|b| b.sample(rng) as f64 / n as f64).unwrap_or(p)
        }
    }
}

/// Purcell decay rate κ g²/Δ² through a resonator at `omega_r`.
pub fn purcell_rate(f_q: f64, omega_r: f64, g_jc: f64, kappa: f64) -> Result<f64> {
    let d = f_q - omega_r;
    if d == 0.0 {
        return Err(Error::Pole { func: "purcell_rate", at: f_q });
    }
    Ok(kappa * g_jc * g_jc / (d * d))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    PerturbativeSpa,
    PerturbativeNumeric,
    Coherent,
}

/// Tolerance of the reference quadrature when synthesizing with it.
pub const NUMERIC_QUAD_TOL: f64 = 1e-8;

/// Decay probabilities of one plateau frequency along the hold-time axis.
///
/// Several TLS combine as independent channels, P = 1 − Π(1 − P_i). A point is
/// NaN when any model evaluation there fails.
pub fn model_column(model: Model, params: &[TlsParams], traj: &Trajectory, t_p_values: &[f64]) -> Vec<f64> {
    let mut survive = vec![1.0; t_p_values.len()];
    for p in params {
        match model {
            Model::PerturbativeSpa => match SpaColumn::new(p, traj) {
                Ok(col) => {
                    for (s, &t) in survive.iter_mut().zip(t_p_values) {
                        *s *= 1.0 - col.evaluate(t).0.probability;
                    }
                }
                Err(_) => survive.fill(f64::NAN),
            },
            Model::PerturbativeNumeric => {
                for (s, &t) in survive.iter_mut().zip(t_p_values) {
                    let pd = Trajectory::new(traj.f_idle, traj.f_pl, traj.t_r, t)
                        .and_then(|tr| decay_prob_numeric(p, &tr, NUMERIC_QUAD_TOL));
                    *s *= pd.map(|d| 1.0 - d.probability).unwrap_or(f64::NAN);
                }
            }
            Model::Coherent => match TrapezoidRamps::new(traj, p.lambda, p.omega_tls) {
                Ok(r) => {
                    for (s, &t) in survive.iter_mut().zip(t_p_values) {
                        *s *= 1.0 - r.probability(t);
                    }
                }
                Err(_) => survive.fill(f64::NAN),
            },
        }
    }
    survive.into_iter().map(|s| 1.0 - s).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameMeta {
    pub model: Model,
    pub params: Vec<TlsParamsJson>,
    /// Pulse template; its plateau frequency and hold time are overridden per point.
    pub trajectory: TrajectoryJson,
    pub noise: NoiseSpecJson,
    pub seed: u64,
    pub temporal_mode: TemporalMode,
    #[serde(default)]
    pub invalid_points: usize,
}

#[derive(Debug, Clone)]
pub struct TssdFrame {
    pub grid: SamplingGrid,
    /// Row-major `[t_p][f_pl]`; NaN marks an invalid point.
    pub p: Vec<f64>,
    pub meta: FrameMeta,
}

impl TssdFrame {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.p[row * self.grid.n_f() + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.grid.n_t()).map(|r| self.at(r, col)).collect()
    }

    /// Index of the column at `f_pl` (rad/ns), matched to 1 kHz.
    pub fn column_index(&self, f_pl: f64) -> Result<usize> {
        self.grid
            .f_pl_values
            .iter()
            .position(|f| (f - f_pl).abs() < units::mhz(1e-3))
            .ok_or_else(|| Error::Range(format!("no column at {} GHz", units::to_ghz(f_pl))))
    }

    pub fn invalid_count(&self) -> usize {
        self.p.iter().filter(|v| v.is_nan()).count()
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["t_p_ns".to_string()];
        header.extend(self.grid.f_pl_values.iter().map(|f| format!("{}", units::to_ghz(*f))));
        w.write_record(&header).map_err(csv_err)?;
        for (r, t) in self.grid.t_p_values.iter().enumerate() {
            let mut rec = vec![format!("{t}")];
            rec.extend((0..self.grid.n_f()).map(|c| {
                let v = self.at(r, c);
                if v.is_nan() {
                    String::new()
                } else {
                    format!("{v}")
                }
            }));
            w.write_record(&rec).map_err(csv_err)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.to_string()))?).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_csv_str(text: &str, meta: FrameMeta) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let header = rd.headers().map_err(csv_err)?.clone();
        if header.get(0) != Some("t_p_ns") {
            return Err(Error::Format("first column must be t_p_ns".into()));
        }
        let f: Vec<f64> = header.iter().skip(1).map(|h| parse(h).map(units::ghz)).collect::<Result<_>>()?;
        let mut t = Vec::new();
        let mut p = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != f.len() + 1 {
                return Err(Error::Dimension { expected: f.len() + 1, got: rec.len() });
            }
            t.push(parse(&rec[0])?);
            for cell in rec.iter().skip(1) {
                p.push(if cell.trim().is_empty() { f64::NAN } else { parse(cell)? });
            }
        }
        let grid = SamplingGrid::from_values(f, t, meta.temporal_mode)?;
        Ok(TssdFrame { grid, p, meta })
    }

    /// Writes `<dir>/<name>.csv` and `<dir>/<name>.meta.json`.
    pub fn save(&self, dir: &Path, name: &str) -> Result<PathBuf> {
        let csv_path = dir.join(format!("{name}.csv"));
        std::fs::write(&csv_path, self.to_csv_string()?)?;
        std::fs::write(dir.join(format!("{name}.meta.json")), serde_json::to_string_pretty(&self.meta)? + "\n")?;
        Ok(csv_path)
    }

    /// Reads a frame saved by [`TssdFrame::save`] from its CSV path.
    pub fn load(csv_path: &Path) -> Result<Self> {
        let stem = csv_path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Invalid(format!("bad frame path {}", csv_path.display())))?;
        let meta_path = csv_path.with_file_name(format!("{stem}.meta.json"));
        let meta: FrameMeta = serde_json::from_str(&std::fs::read_to_string(&meta_path)?)?;
        TssdFrame::from_csv_str(&std::fs::read_to_string(csv_path)?, meta)
    }
}

fn parse(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Format(format!("not a number: {s:?}")))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Random stream of one grid point. Streams are indexed by position, so the
/// result does not depend on evaluation order.
pub fn point_rng(seed: u64, row: usize, col: usize, n_f: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream((row * n_f + col) as u64);
    rng
}

/// Forward model over a grid, with noise.
///
/// The Purcell rate, when configured, is added to the qubit dephasing of every
/// TLS at each plateau frequency; the coherent model has no dephasing and
/// ignores it.
pub fn synthesize(
    model: Model,
    params: &[TlsParams],
    template: &Trajectory,
    grid: &SamplingGrid,
    noise: &NoiseSpec,
    seed: u64,
    exec: Exec,
) -> Result<TssdFrame> {
    if params.is_empty() {
        return Err(Error::Invalid("at least one TLS is required".into()));
    }
    for p in params {
        p.validate()?;
    }
    noise.validate()?;
    let (n_t, n_f) = (grid.n_t(), grid.n_f());
    let columns = exec.map(n_f, |c| {
        let f = grid.f_pl_values[c];
        let traj = Trajectory { f_pl: f, ..*template };
        let extra = match noise.purcell {
            Some(pc) => purcell_rate(f, pc.omega_r, pc.g_jc, pc.kappa),
            None => Ok(0.0),
        };
        match extra {
            Ok(extra) => {
                let ps: Vec<TlsParams> = params.iter().map(|p| TlsParams { gamma_2q: p.gamma_2q + extra, ..*p }).collect();
                model_column(model, &ps, &traj, &grid.t_p_values)
            }
            Err(_) => vec![f64::NAN; n_t],
        }
    });
    let mut p = vec![0.0; n_t * n_f];
    for (c, col) in columns.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            p[r * n_f + c] = if v.is_nan() || noise.is_identity() {
                v
            } else {
                apply_noise(v, noise, &mut point_rng(seed, r, c, n_f))
            };
        }
    }
    let invalid_points = p.iter().filter(|v| v.is_nan()).count();
    let meta = FrameMeta {
        model,
        params: params.iter().map(|p| p.to_json()).collect(),
        trajectory: template.to_json(),
        noise: noise.to_json(),
        seed,
        temporal_mode: grid.temporal_mode,
        invalid_points,
    };
    Ok(TssdFrame { grid: grid.clone(), p, meta })
}

/// Dominant oscillation period of a sequence, in samples.
///
/// The mean-subtracted sequence is Fourier transformed and the largest
/// non-constant bin is refined by parabolic interpolation of its power. Invalid
/// (NaN) samples are replaced by the mean.
pub fn dominant_period(samples: &[f64]) -> Result<f64> {
    let n = samples.len();
    if n < 4 {
        return Err(Error::NoPeak(format!("{n} samples")));
    }
    let valid: Vec<f64> = samples.iter().copied().filter(|v| v.is_finite()).collect();
    if valid.is_empty() {
        return Err(Error::NoPeak("no valid samples".into()));
    }
    let mean = valid.iter().sum::<f64>() / valid.len() as f64;
    let mut buf: Vec<Complex<f64>> =
        samples.iter().map(|&v| Complex::new(if v.is_finite() { v - mean } else { 0.0 }, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let power: Vec<f64> = buf[..=half].iter().map(|c| c.norm_sqr()).collect();
    let (k, &peak) = power[1..].iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, p)| (i + 1, p)).unwrap();
    let rest = (power[1..].iter().sum::<f64>() - peak) / (half - 1).max(1) as f64;
    if !(peak > 0.0) || peak < 4.0 * rest {
        return Err(Error::NoPeak(format!("peak power {peak:e} against mean {rest:e}")));
    }
    let shift = if k > 1 && k < half {
        let (a, b, c) = (power[k - 1], peak, power[k + 1]);
        let den = a - 2.0 * b + c;
        if den != 0.0 {
            (0.5 * (a - c) / den).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    } else {
        0.0
    };
    Ok(n as f64 / (k as f64 + shift))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoireReport {
    /// Dominant period of the first frame's column, in rows.
    pub index_period_a: f64,
    pub index_period_b: f64,
    /// Index period times the mean hold-time step (ns).
    pub time_period_a: f64,
    pub time_period_b: f64,
    /// Ratio of apparent periods in time, a over b.
    pub amplification: f64,
    /// Ratio of periods in rows, a over b.
    pub index_ratio: f64,
}

/// Magnification of the apparent oscillation period in `a` (typically
/// log-sampled) relative to `b` (typically uniform), on the column at `at_f_pl`.
pub fn moire_amplification(a: &TssdFrame, b: &TssdFrame, at_f_pl: f64) -> Result<MoireReport> {
    let pa = dominant_period(&a.column(a.column_index(at_f_pl)?))?;
    let pb = dominant_period(&b.column(b.column_index(at_f_pl)?))?;
    let ta = pa * a.grid.mean_t_step();
    let tb = pb * b.grid.mean_t_step();
    Ok(MoireReport {
        index_period_a: pa,
        index_period_b: pb,
        time_period_a: ta,
        time_period_b: tb,
        amplification: ta / tb,
        index_ratio: pa / pb,
    })
}

/// Frequency windows around a TLS at 5.04 GHz probed from a 5.6 GHz idle point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Far below the TLS: the ramps cross it and the plateau is off resonance.
    FarBelow,
    Below,
    Near,
    /// Between the TLS and the idle point: no crossing.
    Above,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::FarBelow, Regime::Below, Regime::Near, Regime::Above];

    /// Plateau frequency span in GHz.
    pub fn span_ghz(self) -> (f64, f64) {
        match self {
            Regime::FarBelow => (4.60, 4.70),
            Regime::Below => (4.90, 5.00),
            Regime::Near => (5.02, 5.06),
            Regime::Above => (5.08, 5.18),
        }
    }

    /// `n_f` plateau frequencies across the span and `n_t` uniform hold times on
    /// `[0, t_hi]`.
    pub fn grid(self, n_f: usize, n_t: usize, t_hi: f64) -> Result<SamplingGrid> {
        let (lo, hi) = self.span_ghz();
        if n_f < 2 {
            return Err(Error::Invalid("a window needs at least two frequencies".into()));
        }
        let f = (0..n_f).map(|k| units::ghz(lo + (hi - lo) * k as f64 / (n_f - 1) as f64)).collect();
        let t = (0..n_t).map(|k| t_hi * k as f64 / (n_t.max(2) - 1) as f64).collect();
        SamplingGrid::from_values(f, t, TemporalMode::Uniform)
    }
}
