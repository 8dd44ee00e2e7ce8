//! TLS parameter inference from swap-spectroscopy frames.
//!
//! The fitted quantities are (λ, Γ₂, ω_TLS, t_r). All fitters minimize the
//! squared residual between measured frames and the forward model. The main
//! fitter trains a small fully connected network with an evolution strategy: the
//! network maps a flattened frame to parameters, perturbed copies are scored by
//! the cost, and the weights move along the reward-weighted mean perturbation.
//! Nelder–Mead and exhaustive grid search serve as baselines.

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::perturbative::TlsParams;
use crate::pulse::Trajectory;
use crate::tssd::{model_column, Model, TssdFrame};
use crate::units;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Names of the fitted quantities, in vector order.
pub const PARAM_NAMES: [&str; 4] = ["lambda", "gamma2", "omega_tls", "t_r"];

/// Fitted quantities in internal units (rad/ns, 1/ns, rad/ns, ns).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitParams {
    pub lambda: f64,
    pub gamma2: f64,
    pub omega_tls: f64,
    pub t_r: f64,
}

impl FitParams {
    pub fn from_array(v: [f64; 4]) -> Self {
        FitParams { lambda: v[0], gamma2: v[1], omega_tls: v[2], t_r: v[3] }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.lambda, self.gamma2, self.omega_tls, self.t_r]
    }

    /// All dephasing is attributed to the TLS.
    pub fn tls(&self) -> Result<TlsParams> {
        TlsParams::new(self.lambda, self.omega_tls, self.gamma2)
    }

    pub fn to_json(&self) -> FitParamsJson {
        FitParamsJson {
            lambda_mhz: units::to_mhz(self.lambda),
            gamma2_mhz: units::to_mhz(self.gamma2),
            omega_tls_ghz: units::to_ghz(self.omega_tls),
            t_r_ns: self.t_r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParamsJson {
    pub lambda_mhz: f64,
    pub gamma2_mhz: f64,
    pub omega_tls_ghz: f64,
    pub t_r_ns: f64,
}

impl From<FitParamsJson> for FitParams {
    fn from(j: FitParamsJson) -> Self {
        FitParams {
            lambda: units::mhz(j.lambda_mhz),
            gamma2: units::mhz(j.gamma2_mhz),
            omega_tls: units::ghz(j.omega_tls_ghz),
            t_r: j.t_r_ns,
        }
    }
}

/// Box constraints on the fitted quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: [f64; 4],
    pub hi: [f64; 4],
}

impl Bounds {
    pub fn new(lo: [f64; 4], hi: [f64; 4]) -> Result<Self> {
        if (0..4).any(|i| !(lo[i] < hi[i]) || !lo[i].is_finite() || !hi[i].is_finite()) {
            return Err(Error::Invalid(format!("bounds need lo < hi: {lo:?} {hi:?}")));
        }
        Ok(Bounds { lo, hi })
    }

    /// λ ∈ [0.1, 50] MHz, Γ₂ ∈ [0.1, 100] MHz, ω_TLS over the scanned band,
    /// t_r ∈ [1, 20] ns.
    pub fn for_frames(frames: &[TssdFrame]) -> Result<Self> {
        let f = frames.iter().flat_map(|fr| fr.grid.f_pl_values.iter().copied());
        let (lo, hi) = f.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        Bounds::new([units::mhz(0.1), units::mhz(0.1), lo, 1.0], [units::mhz(50.0), units::mhz(100.0), hi, 20.0])
    }

    pub fn contains(&self, p: &FitParams) -> bool {
        let v = p.to_array();
        (0..4).all(|i| v[i] >= self.lo[i] && v[i] <= self.hi[i])
    }

    /// Uniform draw from the box.
    pub fn sample(&self, seed: u64) -> FitParams {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        FitParams::from_array(std::array::from_fn(|i| rng.gen_range(self.lo[i]..=self.hi[i])))
    }

    pub fn from_json(lo: FitParamsJson, hi: FitParamsJson) -> Result<Self> {
        Bounds::new(FitParams::from(lo).to_array(), FitParams::from(hi).to_array())
    }

    fn to_unit(&self, p: &FitParams) -> [f64; 4] {
        let v = p.to_array();
        std::array::from_fn(|i| (v[i] - self.lo[i]) / (self.hi[i] - self.lo[i]))
    }

    fn from_unit(&self, u: &[f64]) -> FitParams {
        FitParams::from_array(std::array::from_fn(|i| self.lo[i] + u[i] * (self.hi[i] - self.lo[i])))
    }
}

/// Residual sum of squares and the number of points left out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cost {
    pub value: f64,
    /// Points where either the data or the model is invalid.
    pub excluded: usize,
}

/// Σ |P_exp − P_model|² over the valid points of every frame.
///
/// The model pulse uses each frame's idle frequency and the candidate ramp time.
pub fn cost(frames: &[TssdFrame], p: &FitParams, model: Model) -> Result<Cost> {
    if frames.is_empty() {
        return Err(Error::Invalid("no frames to fit".into()));
    }
    let tls = p.tls()?;
    let mut value = 0.0;
    let mut excluded = 0;
    for fr in frames {
        let tpl = Trajectory::new(units::ghz(fr.meta.trajectory.f_idle_ghz), 0.0, p.t_r, 0.0)?;
        let n_f = fr.grid.n_f();
        for (c, &f) in fr.grid.f_pl_values.iter().enumerate() {
            let col = model_column(model, &[tls], &Trajectory { f_pl: f, ..tpl }, &fr.grid.t_p_values);
            for (r, m) in col.iter().enumerate() {
                let d = fr.p[r * n_f + c];
                if d.is_finite() && m.is_finite() {
                    value += (d - m) * (d - m);
                } else {
                    excluded += 1;
                }
            }
        }
    }
    Ok(Cost { value, excluded })
}

/// |p̂ᵢ − p*ᵢ| / |p*ᵢ| per fitted quantity.
pub fn relative_error(p_hat: &FitParams, p_star: &FitParams) -> Result<[f64; 4]> {
    let (a, b) = (p_hat.to_array(), p_star.to_array());
    if b.iter().any(|&x| x == 0.0) {
        return Err(Error::Invalid("relative error against a zero true value".into()));
    }
    Ok(std::array::from_fn(|i| (a[i] - b[i]).abs() / b[i].abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Preprocessing of the flattened frame before the first layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InputScaling {
    /// Probabilities as measured.
    #[default]
    Raw,
    /// Divided by the Euclidean norm of the window.
    UnitNorm,
    /// Shifted and scaled to zero mean and unit variance.
    Standardize,
}

impl InputScaling {
    pub fn apply(self, x: &[f64]) -> Vec<f64> {
        match self {
            InputScaling::Raw => x.to_vec(),
            InputScaling::UnitNorm => {
                let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > 0.0 {
                    x.iter().map(|v| v / n).collect()
                } else {
                    x.to_vec()
                }
            }
            InputScaling::Standardize => {
                let m = x.iter().sum::<f64>() / x.len() as f64;
                let sd = (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt();
                let sd = if sd > 0.0 { sd } else { 1.0 };
                x.iter().map(|v| (v - m) / sd).collect()
            }
        }
    }
}

/// Hidden widths of the default network.
pub const DEFAULT_HIDDEN: [usize; 3] = [10, 30, 12];
/// Alternative hidden widths.
pub const WIDE_HIDDEN: [usize; 3] = [20, 30, 12];

/// Fully connected network whose four outputs are squashed into [`Bounds`].
///
/// Hidden layers use `activation`; the output layer is affine followed by a
/// scaled sigmoid, so a zero pre-activation lands on the middle of each range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layer_dims: Vec<usize>,
    /// Row-major `dims[l+1] × dims[l]` matrices.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub activation: Activation,
    /// Output ranges in internal units (rad/ns, 1/ns, rad/ns, ns).
    pub output_ranges: Bounds,
    #[serde(default)]
    pub input_scaling: InputScaling,
}

impl Mlp {
    pub fn zeros(layer_dims: &[usize], activation: Activation, output_ranges: Bounds) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) || *layer_dims.last().unwrap() != 4 {
            return Err(Error::Invalid(format!("layer dims {layer_dims:?} must be non-zero and end in 4")));
        }
        let weights = layer_dims.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = layer_dims[1..].iter().map(|&n| vec![0.0; n]).collect();
        Ok(Mlp { layer_dims: layer_dims.to_vec(), weights, biases, activation, output_ranges, input_scaling: InputScaling::default() })
    }

    /// Gaussian weights with variance 1/fan-in, zero biases.
    pub fn random(layer_dims: &[usize], activation: Activation, output_ranges: Bounds, seed: u64) -> Result<Self> {
        let mut m = Mlp::zeros(layer_dims, activation, output_ranges)?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        for (l, w) in m.weights.iter_mut().enumerate() {
            let scale = 1.0 / (layer_dims[l] as f64).sqrt();
            for x in w.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x = scale * z;
            }
        }
        Ok(m)
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(|v| v.len()).sum()
    }

    /// Weights of every layer followed by biases of every layer.
    pub fn to_flat(&self) -> Vec<f64> {
        self.weights.iter().chain(&self.biases).flatten().copied().collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Dimension { expected: self.n_params(), got: flat.len() });
        }
        let mut it = flat.iter();
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            for x in v.iter_mut() {
                *x = *it.next().unwrap();
            }
        }
        Ok(())
    }

    /// Number of leading entries of [`Mlp::to_flat`] that are weights.
    pub fn n_weights(&self) -> usize {
        self.weights.iter().map(|v| v.len()).sum()
    }

    pub fn forward(&self, input: &[f64]) -> Result<FitParams> {
        if input.len() != self.input_dim() {
            return Err(Error::Dimension { expected: self.input_dim(), got: input.len() });
        }
        let mut y = self.input_scaling.apply(input);
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let n_in = self.layer_dims[l];
            y = b
                .iter()
                .enumerate()
                .map(|(o, &bo)| {
                    let z = bo + w[o * n_in..(o + 1) * n_in].iter().zip(&y).map(|(a, x)| a * x).sum::<f64>();
                    if l == last {
                        z
                    } else {
                        self.activation.apply(z)
                    }
                })
                .collect();
        }
        let r = &self.output_ranges;
        Ok(FitParams::from_array(std::array::from_fn(|i| r.lo[i] + (r.hi[i] - r.lo[i]) * sigmoid(y[i]))))
    }
}

/// Network input for a frame: probabilities in row-major order, invalid points as 0.
pub fn flatten_window(frame: &TssdFrame) -> Vec<f64> {
    frame.p.iter().map(|&v| if v.is_finite() { v } else { 0.0 }).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardShaping {
    /// Reward = −cost.
    Raw,
    /// Reward minus the batch mean.
    Centered,
    /// Centered ranks scaled to [−0.5, 0.5].
    Rank,
}

/// How the reward-weighted perturbation sum becomes a weight step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UpdateScale {
    /// lr · (1/b) Σ f ξ with ξ ~ N(0, σ²), as written.
    #[default]
    Literal,
    /// lr · (1/(bσ)) Σ f ε with ε ~ N(0, 1): lr multiplies an estimate of the
    /// gradient of the smoothed reward.
    Gradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EaConfig {
    pub sigma_w: f64,
    pub sigma_b: f64,
    pub lr_w: f64,
    pub lr_b: f64,
    /// Steps per data window.
    pub n_steps: usize,
    /// Perturbations per step.
    pub batch: usize,
    pub seed: u64,
    pub reward_shaping: RewardShaping,
    #[serde(default)]
    pub update_scale: UpdateScale,
}

impl Default for EaConfig {
    fn default() -> Self {
        EaConfig {
            sigma_w: 0.01,
            sigma_b: 0.01,
            lr_w: 0.0031,
            lr_b: 0.0031,
            n_steps: 100,
            batch: 50,
            seed: 42,
            reward_shaping: RewardShaping::Centered,
            update_scale: UpdateScale::Literal,
        }
    }
}

impl EaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_w > 0.0 && self.sigma_b > 0.0 && self.lr_w > 0.0 && self.lr_b > 0.0) {
            return Err(Error::Invalid("EA sigmas and learning rates must be positive".into()));
        }
        if self.batch < 2 {
            return Err(Error::Invalid("EA batch must be at least 2".into()));
        }
        Ok(())
    }
}

/// Applies the reward shaping; non-finite rewards become the batch minimum.
pub fn shape_rewards(rewards: &[f64], shaping: RewardShaping) -> Vec<f64> {
    let worst = rewards.iter().copied().filter(|r| r.is_finite()).fold(f64::INFINITY, f64::min);
    let worst = if worst.is_finite() { worst } else { 0.0 };
    let r: Vec<f64> = rewards.iter().map(|&x| if x.is_finite() { x } else { worst }).collect();
    let n = r.len() as f64;
    match shaping {
        RewardShaping::Raw => r,
        RewardShaping::Centered => {
            let mean = r.iter().sum::<f64>() / n;
            r.iter().map(|x| x - mean).collect()
        }
        RewardShaping::Rank => {
            let mut idx: Vec<usize> = (0..r.len()).collect();
            idx.sort_by(|&a, &b| r[a].total_cmp(&r[b]));
            let mut out = vec![0.0; r.len()];
            for (rank, &i) in idx.iter().enumerate() {
                out[i] = rank as f64 / (n - 1.0).max(1.0) - 0.5;
            }
            out
        }
    }
}

/// Standard-normal perturbation number `index` of step `step`.
pub fn perturbation(seed: u64, step: u64, index: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// One evolution-strategy update, (1/batch) Σ f_j ξ_j.
///
/// `reward` scores θ + s ⊙ ξ_j, with per-coordinate noise scale `s`. The returned
/// direction has to be multiplied by the learning rate. Each perturbation is
/// drawn from its own counter-based stream, so `exec` does not change the result.
pub fn es_direction<F>(theta: &[f64], scale: &[f64], reward: F, batch: usize, shaping: RewardShaping, seed: u64, step: u64, exec: Exec) -> (Vec<f64>, Vec<f64>)
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    let raw = exec.map(batch, |j| {
        let xi = perturbation(seed, step, j as u64, theta.len());
        let probe: Vec<f64> = theta.iter().zip(&xi).zip(scale).map(|((t, x), s)| t + s * x).collect();
        reward(&probe)
    });
    let f = shape_rewards(&raw, shaping);
    let mut dir = vec![0.0; theta.len()];
    for (j, fj) in f.iter().enumerate() {
        if *fj == 0.0 {
            continue;
        }
        let xi = perturbation(seed, step, j as u64, theta.len());
        for (d, x) in dir.iter_mut().zip(&xi) {
            *d += fj * x;
        }
    }
    for d in dir.iter_mut() {
        *d /= batch as f64;
    }
    (dir, raw)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: FitParams,
    pub cost: f64,
    /// Present when the true parameters are known.
    pub rel_error: Option<[f64; 4]>,
    pub wall_time: f64,
    /// Best cost seen so far, one entry per step or iteration.
    pub trace: Vec<f64>,
    pub evaluations: usize,
    pub excluded: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn with_truth(mut self, truth: &FitParams) -> Result<Self> {
        self.rel_error = Some(relative_error(&self.params, truth)?);
        Ok(self)
    }
}

/// Trains `mlp0` with the evolution strategy over the data windows in turn.
///
/// For each window, `n_steps` updates are made using that window as the network
/// input and its cost as the (negated) reward. After every update the
/// unperturbed network's output for the current window is scored on all
/// windows; the best such point is returned.
pub fn ea_train(frames: &[TssdFrame], mlp0: &Mlp, cfg: &EaConfig, model: Model, exec: Exec) -> Result<(Mlp, FitResult)> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(Error::Invalid("no frames to fit".into()));
    }
    let start = Instant::now();
    let inputs: Vec<Vec<f64>> = frames.iter().map(flatten_window).collect();
    for x in &inputs {
        if x.len() != mlp0.input_dim() {
            return Err(Error::Dimension { expected: mlp0.input_dim(), got: x.len() });
        }
    }
    let n_w = mlp0.n_weights();
    let scale: Vec<f64> = (0..mlp0.n_params()).map(|i| if i < n_w { cfg.sigma_w } else { cfg.sigma_b }).collect();
    // es_direction returns (1/b) Σ f ε; fold the σ factor of the chosen update into the step.
    let lr: Vec<f64> = (0..mlp0.n_params())
        .map(|i| {
            let (a, s) = if i < n_w { (cfg.lr_w, cfg.sigma_w) } else { (cfg.lr_b, cfg.sigma_b) };
            match cfg.update_scale {
                UpdateScale::Literal => a * s,
                UpdateScale::Gradient => a / s,
            }
        })
        .collect();
    let mut mlp = mlp0.clone();
    let mut theta = mlp.to_flat();
    let total = |p: &FitParams| cost(frames, p, model).map(|c| c.value).unwrap_or(f64::INFINITY);

    let mut best = mlp.forward(&inputs[0])?;
    let mut best_cost = total(&best);
    let mut evaluations = frames.len();
    let mut trace = vec![best_cost];
    let mut step = 0u64;
    for (d, frame) in frames.iter().enumerate() {
        let window = std::slice::from_ref(frame);
        let input = &inputs[d];
        let reward = |flat: &[f64]| {
            let mut net = mlp0.clone();
            net.set_flat(flat).ok();
            match net.forward(input) {
                Ok(p) => cost(window, &p, model).map(|c| -c.value).unwrap_or(f64::NEG_INFINITY),
                Err(_) => f64::NEG_INFINITY,
            }
        };
        for _ in 0..cfg.n_steps {
            let (dir, _) = es_direction(&theta, &scale, reward, cfg.batch, cfg.reward_shaping, cfg.seed, step, exec);
            for ((t, g), a) in theta.iter_mut().zip(&dir).zip(&lr) {
                *t += a * g;
            }
            mlp.set_flat(&theta)?;
            let cand = mlp.forward(input)?;
            let c = total(&cand);
            evaluations += cfg.batch + frames.len();
            if c < best_cost {
                best_cost = c;
                best = cand;
            }
            trace.push(best_cost);
            step += 1;
        }
    }
    let excluded = cost(frames, &best, model).map(|c| c.excluded).unwrap_or(0);
    let result = FitResult {
        params: best,
        cost: best_cost,
        rel_error: None,
        wall_time: start.elapsed().as_secs_f64(),
        trace,
        evaluations,
        excluded,
        converged: best_cost.is_finite(),
    };
    Ok((mlp, result))
}

/// Outcome of [`nelder_mead`].
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best value after each iteration.
    pub trace: Vec<f64>,
}

/// Reflects `x` into `[lo, hi]`.
fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    let w = hi - lo;
    let mut y = (x - lo).rem_euclid(2.0 * w);
    if y > w {
        y = 2.0 * w - y;
    }
    lo + y
}

/// Nelder–Mead simplex minimization inside a box; points leaving the box are
/// reflected back at its faces.
///
/// Stops when the spread of values is below `ftol` (absolute) and the simplex
/// diameter below `xtol`, or after `max_iter` iterations.
#[allow(clippy::too_many_arguments)]
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    step: f64,
    lo: &[f64],
    hi: &[f64],
    max_iter: usize,
    ftol: f64,
    xtol: f64,
) -> Minimum {
    let n = x0.len();
    let clamp = |x: &mut Vec<f64>| {
        for i in 0..n {
            x[i] = reflect(x[i], lo[i], hi[i]);
        }
    };
    let mut evaluations = 0;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += if x[i] + step <= hi[i] { step } else { -step };
        clamp(&mut x);
        simplex.push(x);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x)).collect();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        trace.push(values[0]);
        let diam = simplex[1..]
            .iter()
            .map(|x| x.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if (values[n] - values[0]).abs() <= ftol && diam <= xtol {
            converged = true;
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> = (0..n).map(|i| simplex[..n].iter().map(|x| x[i]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| {
            let mut x: Vec<f64> = (0..n).map(|i| centroid[i] + t * (simplex[n][i] - centroid[i])).collect();
            clamp(&mut x);
            x
        };
        let xr = along(-1.0);
        let fr = eval(&xr);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = eval(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
        } else {
            let (xc, fc) = if fr < values[n] {
                let x = along(-0.5);
                let v = eval(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = eval(&x);
                (x, v)
            };
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
            } else {
                for k in 1..=n {
                    let x: Vec<f64> = (0..n).map(|i| simplex[0][i] + 0.5 * (simplex[k][i] - simplex[0][i])).collect();
                    values[k] = eval(&x);
                    simplex[k] = x;
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    Minimum { x: simplex[best].clone(), f: values[best], iterations, evaluations, converged, trace }
}

/// Iteration cap of [`simplex_fit`].
pub const SIMPLEX_MAX_ITER: usize = 2000;

/// Nelder–Mead on the cost, in coordinates scaled to the unit box.
pub fn simplex_fit(frames: &[TssdFrame], p0: &FitParams, bounds: &Bounds, model: Model) -> Result<FitResult> {
    if !bounds.contains(p0) {
        return Err(Error::Range(format!("start point {p0:?} outside bounds")));
    }
    cost(frames, p0, model)?;
    let start = Instant::now();
    let f = |u: &[f64]| cost(frames, &bounds.from_unit(u), model).map(|c| c.value).unwrap_or(f64::INFINITY);
    let m = nelder_mead(f, &bounds.to_unit(p0), 0.05, &[0.0; 4], &[1.0; 4], SIMPLEX_MAX_ITER, 1e-14, 1e-10);
    let params = bounds.from_unit(&m.x);
    Ok(FitResult {
        params,
        cost: m.f,
        rel_error: None,
        wall_time: start.elapsed().as_secs_f64(),
        trace: m.trace,
        evaluations: m.evaluations,
        excluded: cost(frames, &params, model)?.excluded,
        converged: m.converged,
    })
}

/// Exhaustive search over `resolution[i]` evenly spaced values per axis,
/// endpoints included.
pub fn grid_fit(frames: &[TssdFrame], bounds: &Bounds, resolution: [usize; 4], model: Model, exec: Exec) -> Result<FitResult> {
    if resolution.iter().any(|&r| r < 2) {
        return Err(Error::Invalid("grid resolution must be at least 2 per axis".into()));
    }
    let start = Instant::now();
    let total: usize = resolution.iter().product();
    let point = |k: usize| {
        let mut rem = k;
        let u: [f64; 4] = std::array::from_fn(|i| {
            let j = rem % resolution[i];
            rem /= resolution[i];
            j as f64 / (resolution[i] - 1) as f64
        });
        bounds.from_unit(&u)
    };
    let costs = exec.map(total, |k| cost(frames, &point(k), model).map(|c| c.value).unwrap_or(f64::INFINITY));
    let best = (0..total).min_by(|&a, &b| costs[a].total_cmp(&costs[b])).unwrap();
    let params = point(best);
    let mut trace = Vec::with_capacity(total);
    let mut run = f64::INFINITY;
    for c in &costs {
        run = run.min(*c);
        trace.push(run);
    }
    Ok(FitResult {
        params,
        cost: costs[best],
        rel_error: None,
        wall_time: start.elapsed().as_secs_f64(),
        trace,
        evaluations: total,
        excluded: cost(frames, &params, model)?.excluded,
        converged: costs[best].is_finite(),
    })
}

/// JSON fit report in plain units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub method: String,
    pub params: FitParamsJson,
    pub cost: f64,
    pub rel_error: Option<[f64; 4]>,
    pub trace: Vec<f64>,
    pub evaluations: usize,
    pub excluded: usize,
    pub converged: bool,
    pub seed: u64,
    /// Left out of saved reports so repeated runs give identical files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
    pub config: serde_json::Value,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl FitReport {
    pub fn new(method: &str, r: &FitResult, seed: u64, config: serde_json::Value) -> Self {
        FitReport {
            method: method.to_string(),
            params: r.params.to_json(),
            cost: r.cost,
            rel_error: r.rel_error,
            trace: r.trace.clone(),
            evaluations: r.evaluations,
            excluded: r.excluded,
            converged: r.converged,
            seed,
            wall_time_s: Some(r.wall_time),
            config,
            warnings: Vec::new(),
        }
    }
}
