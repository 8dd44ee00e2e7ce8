use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use tlsscope_core::perturbative::TlsParams;
use tlsscope_core::pulse::Trajectory;
use tlsscope_core::tssd::*;
use tlsscope_core::units::{ghz, mhz};
use tlsscope_core::Exec;

fn fitted() -> TlsParams {
    TlsParams::new(mhz(8.959), ghz(5.04), mhz(10.0)).unwrap()
}

fn template() -> Trajectory {
    Trajectory::from_ghz(5.6, 5.6, 6.0, 0.0).unwrap()
}

#[test]
fn grid_examples() {
    let g = make_grid(ghz(4.6), ghz(5.8), ghz(0.001), 0.0, 100.0, 2, TemporalMode::Uniform).unwrap();
    assert_eq!(g.n_f(), 1201);
    assert_eq!(g.t_p_values, vec![0.0, 100.0]);
    let g = make_grid(ghz(4.6), ghz(5.8), ghz(0.1), 10.0, 1e5, 20, TemporalMode::Logarithmic).unwrap();
    let r = 1e4f64.powf(1.0 / 19.0);
    for w in g.t_p_values.windows(2) {
        assert!((w[1] / w[0] - r).abs() < 1e-12);
    }
    assert!((g.t_p_values[19] - 1e5).abs() < 1e-8);
    assert!(make_grid(2.0, 1.0, 0.1, 0.0, 1.0, 5, TemporalMode::Uniform).is_err());
    assert!(make_grid(1.0, 2.0, 0.1, 5.0, 1.0, 5, TemporalMode::Uniform).is_err());
    assert!(make_grid(1.0, 2.0, 0.1, 0.0, 1.0, 1, TemporalMode::Uniform).is_err());
    assert!(make_grid(1.0, 2.0, 0.1, 0.0, 1.0, 5, TemporalMode::Logarithmic).is_err());
    assert!(SamplingGrid::from_values(vec![1.0, 1.0], vec![0.0], TemporalMode::Uniform).is_err());
}

fn small_grid() -> SamplingGrid {
    make_grid(ghz(4.98), ghz(5.10), ghz(0.01), 0.0, 200.0, 11, TemporalMode::Uniform).unwrap()
}

#[test]
fn zero_coupling_gives_zero_frame() {
    let p = TlsParams::new(0.0, ghz(5.04), mhz(10.0)).unwrap();
    for model in [Model::PerturbativeSpa, Model::PerturbativeNumeric, Model::Coherent] {
        let f = synthesize(model, &[p], &template(), &small_grid(), &NoiseSpec::off(), 1, Exec::Serial).unwrap();
        assert!(f.p.iter().all(|&v| v == 0.0), "{model:?}");
    }
}

#[test]
fn infinite_shots_without_flips_is_noise_free() {
    let quiet = NoiseSpec { e0: 0.0, e1: 0.0, shots: None, purcell: None };
    let a = synthesize(Model::PerturbativeSpa, &[fitted()], &template(), &small_grid(), &quiet, 3, Exec::Serial).unwrap();
    let b = synthesize(Model::PerturbativeSpa, &[fitted()], &template(), &small_grid(), &NoiseSpec::off(), 9, Exec::Serial).unwrap();
    assert_eq!(a.p, b.p);
}

#[test]
fn synthesis_is_deterministic_and_order_independent() {
    let g = small_grid();
    let noise = NoiseSpec::default();
    let a = synthesize(Model::PerturbativeSpa, &[fitted()], &template(), &g, &noise, 42, Exec::Serial).unwrap();
    let b = synthesize(Model::PerturbativeSpa, &[fitted()], &template(), &g, &noise, 42, Exec::Parallel).unwrap();
    let c = synthesize(Model::PerturbativeSpa, &[fitted()], &template(), &g, &noise, 43, Exec::Serial).unwrap();
    assert_eq!(a.p.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.p.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_ne!(a.p, c.p);
}

#[test]
fn noise_examples() {
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    assert_eq!(apply_noise(0.37, &NoiseSpec::off(), &mut rng), 0.37);
    let floor = NoiseSpec { e0: 0.01, e1: 0.0, shots: None, purcell: None };
    assert_eq!(apply_noise(0.0, &floor, &mut rng), 0.01);
    assert!(NoiseSpec { e0: 0.5, ..NoiseSpec::off() }.validate().is_err());
    assert!(NoiseSpec { shots: Some(0), ..NoiseSpec::off() }.validate().is_err());
}

#[test]
fn shot_noise_variance_is_binomial() {
    let shots = 200;
    let noise = NoiseSpec { e0: 0.0, e1: 0.0, shots: Some(shots), purcell: None };
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for p in [0.05, 0.3, 0.5] {
        let draws: Vec<f64> = (0..10_000).map(|_| apply_noise(p, &noise, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        let expect = p * (1.0 - p) / shots as f64;
        assert!((var / expect - 1.0).abs() < 0.1, "p={p}: {var} vs {expect}");
    }
}

proptest! {
    #[test]
    fn infinite_shot_noise_is_affine_and_monotone(e0 in 0.0f64..0.49, e1 in 0.0f64..0.49, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let n = NoiseSpec { e0, e1, shots: None, purcell: None };
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let (fa, fb) = (apply_noise(a, &n, &mut rng), apply_noise(b, &n, &mut rng));
        let mid = apply_noise(0.5 * (a + b), &n, &mut rng);
        prop_assert!((mid - 0.5 * (fa + fb)).abs() < 1e-14);
        if a < b {
            prop_assert!(fa <= fb);
        }
    }
}

#[test]
fn purcell_examples() {
    let (g, k) = (mhz(100.0), mhz(5.0));
    assert!(purcell_rate(1e12, ghz(4.0), g, k).unwrap() < 1e-20);
    let r1 = purcell_rate(ghz(5.0), ghz(4.0), g, k).unwrap();
    let r2 = purcell_rate(ghz(4.5), ghz(4.0), g, k).unwrap();
    assert!((r2 / r1 - 4.0).abs() < 1e-12);
    assert!(purcell_rate(ghz(4.0), ghz(4.0), g, k).is_err());
    // A resonator below the scan raises decay at the low-frequency edge only.
    let lo = purcell_rate(ghz(4.6), ghz(4.0), g, k).unwrap();
    let hi = purcell_rate(ghz(5.8), ghz(4.0), g, k).unwrap();
    assert!((lo / hi - 9.0).abs() < 1e-12);
}

#[test]
fn single_and_multiple_tls_combination() {
    let g = small_grid();
    let other = TlsParams::new(mhz(5.0), ghz(5.0), mhz(3.0)).unwrap();
    let one = synthesize(Model::Coherent, &[fitted()], &template(), &g, &NoiseSpec::off(), 0, Exec::Serial).unwrap();
    let two = synthesize(Model::Coherent, &[other], &template(), &g, &NoiseSpec::off(), 0, Exec::Serial).unwrap();
    let both = synthesize(Model::Coherent, &[fitted(), other], &template(), &g, &NoiseSpec::off(), 0, Exec::Serial).unwrap();
    for i in 0..both.p.len() {
        let expect = 1.0 - (1.0 - one.p[i]) * (1.0 - two.p[i]);
        assert!((both.p[i] - expect).abs() < 1e-15);
    }
    let col = model_column(Model::Coherent, &[fitted()], &Trajectory { f_pl: g.f_pl_values[3], ..template() }, &g.t_p_values);
    assert_eq!(col, one.column(3));
    assert!(synthesize(Model::Coherent, &[], &template(), &g, &NoiseSpec::off(), 0, Exec::Serial).is_err());
}

#[test]
fn regime_frames_show_the_resonance_stripe() {
    let g = make_grid(ghz(4.60), ghz(5.18), ghz(0.02), 0.0, 285.0, 20, TemporalMode::Uniform).unwrap();
    let f = synthesize(Model::PerturbativeSpa, &[fitted()], &template(), &g, &NoiseSpec::off(), 0, Exec::Parallel).unwrap();
    let means: Vec<f64> = (0..g.n_f()).map(|c| f.column(c).iter().sum::<f64>() / g.n_t() as f64).collect();
    let best = (0..g.n_f()).max_by(|&a, &b| means[a].total_cmp(&means[b])).unwrap();
    assert!((g.f_pl_values[best] - ghz(5.04)).abs() < ghz(0.021), "stripe at {}", g.f_pl_values[best]);
    assert!(means[best] > 5.0 * means[0]);
}

#[test]
fn csv_round_trip_preserves_values_and_gaps() {
    let mut f = synthesize(Model::PerturbativeSpa, &[fitted()], &template(), &small_grid(), &NoiseSpec::default(), 5, Exec::Serial).unwrap();
    f.p[7] = f64::NAN;
    let dir = tempfile::tempdir().unwrap();
    let path = f.save(dir.path(), "frame").unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("t_p_ns,4.98,"));
    assert!(dir.path().join("frame.meta.json").exists());
    let back = TssdFrame::load(&path).unwrap();
    assert_eq!(back.grid.t_p_values, f.grid.t_p_values);
    for (a, b) in back.grid.f_pl_values.iter().zip(&f.grid.f_pl_values) {
        assert!((a - b).abs() < 1e-12 * b);
    }
    for (a, b) in back.p.iter().zip(&f.p) {
        assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
    }
    assert_eq!(back.invalid_count(), 1);
    assert_eq!(back.meta.seed, 5);
}

#[test]
fn dominant_period_of_sinusoids() {
    let n = 256;
    let col = |period: f64| (0..n).map(|k| 0.3 + 0.2 * (2.0 * std::f64::consts::PI * k as f64 / period).sin()).collect::<Vec<_>>();
    assert_eq!(dominant_period(&col(16.0)).unwrap(), 16.0);
    assert_eq!(dominant_period(&col(32.0)).unwrap(), 32.0);
    assert!(dominant_period(&vec![0.4; n]).is_err());
}

fn sinusoid_frame(period: f64, dt: f64) -> TssdFrame {
    let g = SamplingGrid::from_values(vec![ghz(5.04)], (0..128).map(|k| k as f64 * dt).collect(), TemporalMode::Uniform).unwrap();
    let mut f = synthesize(Model::Coherent, &[fitted()], &template(), &g, &NoiseSpec::off(), 0, Exec::Serial).unwrap();
    f.p = (0..128).map(|k| (2.0 * std::f64::consts::PI * k as f64 / period).cos()).collect();
    f
}

#[test]
fn amplification_of_known_sinusoids() {
    let a = sinusoid_frame(32.0, 4.0);
    let b = sinusoid_frame(8.0, 1.0);
    let r = moire_amplification(&a, &b, ghz(5.04)).unwrap();
    assert_eq!(r.index_ratio, 4.0);
    assert_eq!(r.amplification, 16.0);
    assert_eq!(moire_amplification(&b, &b, ghz(5.04)).unwrap().amplification, 1.0);
    assert!(moire_amplification(&a, &b, ghz(5.0)).is_err());
}

#[test]
fn log_sampling_magnifies_the_rabi_period() {
    let p = TlsParams::new(mhz(10.0), ghz(5.04), mhz(10.0)).unwrap();
    let tpl = Trajectory::from_ghz(5.6, 5.04, 6.0, 0.0).unwrap();
    let log = make_grid(ghz(5.04), ghz(5.041), ghz(0.01), 10.0, 1e5, 200, TemporalMode::Logarithmic).unwrap();
    let uni = make_grid(ghz(5.04), ghz(5.041), ghz(0.01), 10.0, 209.0, 200, TemporalMode::Uniform).unwrap();
    let a = synthesize(Model::Coherent, &[p], &tpl, &log, &NoiseSpec::off(), 0, Exec::Serial).unwrap();
    let b = synthesize(Model::Coherent, &[p], &tpl, &uni, &NoiseSpec::off(), 0, Exec::Serial).unwrap();
    let r = moire_amplification(&a, &b, ghz(5.04)).unwrap();
    // Rabi period π/λ = 50 ns on the uniform grid.
    assert!((r.time_period_b - 50.0).abs() < 0.5);
    assert!(r.amplification >= 100.0, "{r:?}");
}
