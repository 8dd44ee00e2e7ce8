//! JSON run documents, one per command.
//!
//! Plain units throughout (GHz, MHz, ns); conversion to internal units happens
//! when a document is turned into core types. Unknown fields are rejected.

use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use tlsscope_core::channel::{GateSpecJson, SweepAxis, TlsEnvJson};
use tlsscope_core::fit::{Activation, FitParamsJson, InputScaling, RewardShaping, UpdateScale};
use tlsscope_core::perturbative::TlsParamsJson;
use tlsscope_core::tssd::{Model, NoiseSpecJson, Regime, TemporalMode};

pub const DEFAULT_SEED: u64 = 42;

fn spa() -> Model {
    Model::PerturbativeSpa
}

fn coherent() -> Model {
    Model::Coherent
}

fn idle() -> f64 {
    5.6
}

fn uniform() -> TemporalMode {
    TemporalMode::Uniform
}

/// One sampling window of a synthetic frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub name: String,
    /// Named frequency window; `f_lo_ghz`/`f_hi_ghz` override its span.
    #[serde(default)]
    pub regime: Option<Regime>,
    #[serde(default)]
    pub f_lo_ghz: Option<f64>,
    #[serde(default)]
    pub f_hi_ghz: Option<f64>,
    pub n_f: usize,
    pub n_t: usize,
    #[serde(default)]
    pub t_lo_ns: f64,
    pub t_hi_ns: f64,
    #[serde(default = "uniform")]
    pub temporal_mode: TemporalMode,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "spa")]
    pub model: Model,
    pub tls: Vec<TlsParamsJson>,
    #[serde(default = "idle")]
    pub f_idle_ghz: f64,
    pub t_r_ns: f64,
    pub windows: Vec<WindowConfig>,
    /// Missing means the default readout and shot noise.
    #[serde(default)]
    pub noise: Option<NoiseSpecJson>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ea,
    Simplex,
    Grid,
}

/// Where a fit gets its frames.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DataConfig {
    /// CSV paths written by `simulate`, relative to the config file.
    Frames(Vec<PathBuf>),
    Synthesize(SimulateConfig),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub lo: FitParamsJson,
    pub hi: FitParamsJson,
}

/// Overrides of the evolution-strategy defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EaSection {
    pub sigma: Option<f64>,
    pub lr: Option<f64>,
    pub sigma_b: Option<f64>,
    pub lr_b: Option<f64>,
    pub n_steps: Option<usize>,
    pub batch: Option<usize>,
    pub reward_shaping: Option<RewardShaping>,
    pub update_scale: Option<UpdateScale>,
    pub hidden: Option<Vec<usize>>,
    pub activation: Option<Activation>,
    pub input_scaling: Option<InputScaling>,
    pub seed: Option<u64>,
    /// Seed of the initial weights; defaults to the training seed.
    pub init_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimplexSection {
    /// Start point; missing means a seeded uniform draw from the bounds.
    pub start: Option<FitParamsJson>,
    /// Number of random starts, best result kept.
    pub starts: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Resolution {
    Same(usize),
    PerAxis([usize; 4]),
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution::Same(4)
    }
}

impl Resolution {
    pub fn per_axis(self) -> [usize; 4] {
        match self {
            Resolution::Same(r) => [r; 4],
            Resolution::PerAxis(r) => r,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub resolution: Resolution,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub method: Method,
    #[serde(default = "spa")]
    pub model: Model,
    pub data: DataConfig,
    /// True parameters; when missing they are read from the frame metadata if
    /// all frames share a single TLS.
    #[serde(default)]
    pub truth: Option<FitParamsJson>,
    #[serde(default)]
    pub bounds: Option<BoundsConfig>,
    #[serde(default)]
    pub ea: EaSection,
    #[serde(default)]
    pub simplex: SimplexSection,
    #[serde(default)]
    pub grid: GridSection,
    /// Earlier fit report whose cost a local fit should reach.
    #[serde(default)]
    pub reference_report: Option<PathBuf>,
    #[serde(default)]
    pub reference_cost: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisRange {
    pub range: [f64; 2],
    pub points: usize,
    #[serde(default)]
    pub log: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepEntry {
    pub name: String,
    pub axis: SweepAxis,
    pub range: [f64; 2],
    pub points: usize,
    #[serde(default)]
    pub log: bool,
    /// Qubit-2 detunings of a two-axis sweep.
    #[serde(default)]
    pub second: Option<AxisRange>,
    #[serde(default)]
    pub gate: Option<GateSpecJson>,
    #[serde(default)]
    pub env: Option<TlsEnvJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxationConfig {
    pub t1_us: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PauliTableConfig {
    #[serde(default = "pauli_threshold")]
    pub threshold: f64,
}

fn pauli_threshold() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub gate: GateSpecJson,
    #[serde(default)]
    pub env: TlsEnvJson,
    pub sweeps: Vec<SweepEntry>,
    #[serde(default)]
    pub relaxation: Option<RelaxationConfig>,
    #[serde(default)]
    pub pauli_table: Option<PauliTableConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeAxis {
    pub mode: TemporalMode,
    pub t_lo_ns: f64,
    pub t_hi_ns: f64,
    pub n_t: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoireConfig {
    #[serde(default = "coherent")]
    pub model: Model,
    pub tls: TlsParamsJson,
    #[serde(default = "idle")]
    pub f_idle_ghz: f64,
    pub t_r_ns: f64,
    /// Column to compare; defaults to the TLS frequency.
    #[serde(default)]
    pub f_pl_ghz: Option<f64>,
    pub sampled: TimeAxis,
    pub reference: TimeAxis,
    /// Missing means noiseless.
    #[serde(default)]
    pub noise: Option<NoiseSpecJson>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    /// Dataset template; dataset k uses seed + k.
    pub data: SimulateConfig,
    pub datasets: usize,
    #[serde(default = "spa")]
    pub model: Model,
    #[serde(default)]
    pub bounds: Option<BoundsConfig>,
    #[serde(default)]
    pub ea: EaSection,
    #[serde(default)]
    pub simplex: SimplexSection,
    #[serde(default)]
    pub seed: Option<u64>,
}
