use proptest::prelude::*;
use tlsscope_core::fit::*;
use tlsscope_core::pulse::Trajectory;
use tlsscope_core::tssd::*;
use tlsscope_core::units::{ghz, mhz};
use tlsscope_core::Exec;

const MODEL: Model = Model::PerturbativeSpa;

fn truth() -> FitParams {
    FitParams { lambda: mhz(8.959), gamma2: mhz(10.0), omega_tls: ghz(5.04), t_r: 6.0 }
}

fn frames(regimes: &[Regime], n_f: usize, n_t: usize, noise: &NoiseSpec, seed: u64) -> Vec<TssdFrame> {
    let tpl = Trajectory::from_ghz(5.6, 5.6, 6.0, 0.0).unwrap();
    regimes
        .iter()
        .map(|r| synthesize(MODEL, &[truth().tls().unwrap()], &tpl, &r.grid(n_f, n_t, 285.0).unwrap(), noise, seed, Exec::Serial).unwrap())
        .collect()
}

fn small() -> Vec<TssdFrame> {
    frames(&[Regime::Near], 10, 8, &NoiseSpec::off(), 0)
}

#[test]
fn cost_vanishes_at_the_generating_parameters() {
    let f = frames(&[Regime::Below, Regime::Near, Regime::Above], 12, 6, &NoiseSpec::off(), 0);
    let c = cost(&f, &truth(), MODEL).unwrap();
    assert!(c.value < 1e-10);
    assert_eq!(c.excluded, 0);
    assert!(cost(&[], &truth(), MODEL).is_err());
}

#[test]
fn cost_at_truth_matches_shot_noise_variance() {
    let shots = 1000;
    let noise = NoiseSpec { e0: 0.0, e1: 0.0, shots: Some(shots), purcell: None };
    let clean = frames(&[Regime::Below, Regime::Near, Regime::Above], 40, 20, &NoiseSpec::off(), 0);
    let expect: f64 = clean.iter().flat_map(|f| f.p.iter()).map(|p| p * (1.0 - p) / shots as f64).sum();
    let noisy = frames(&[Regime::Below, Regime::Near, Regime::Above], 40, 20, &noise, 17);
    let got = cost(&noisy, &truth(), MODEL).unwrap().value;
    assert!((got / expect - 1.0).abs() < 0.15, "{got} vs {expect}");
}

#[test]
fn cost_is_additive_and_order_free() {
    let f = frames(&[Regime::Below, Regime::Near, Regime::Above], 8, 5, &NoiseSpec::default(), 3);
    let p = FitParams { lambda: mhz(7.0), t_r: 5.0, ..truth() };
    let total = cost(&f, &p, MODEL).unwrap().value;
    let parts: f64 = f.iter().map(|fr| cost(std::slice::from_ref(fr), &p, MODEL).unwrap().value).sum();
    let rev: Vec<TssdFrame> = f.iter().rev().cloned().collect();
    assert!((total - parts).abs() < 1e-12 * total);
    assert!((total - cost(&rev, &p, MODEL).unwrap().value).abs() < 1e-12 * total);
}

#[test]
fn invalid_points_are_excluded_and_counted() {
    let mut f = small();
    let p = FitParams { lambda: mhz(7.0), ..truth() };
    let before = cost(&f, &p, MODEL).unwrap();
    let d = f[0].p[3] - tlsscope_core::tssd::model_column(MODEL, &[p.tls().unwrap()], &Trajectory::from_ghz(5.6, 5.02, 6.0, 0.0).unwrap().with_plateau(f[0].grid.f_pl_values[3], 0.0).unwrap(), &[0.0])[0];
    f[0].p[3] = f64::NAN;
    let after = cost(&f, &p, MODEL).unwrap();
    assert_eq!(after.excluded, 1);
    assert!((before.value - after.value - d * d).abs() < 1e-12);
}

#[test]
fn relative_error_examples() {
    let t = truth();
    assert_eq!(relative_error(&t, &t).unwrap(), [0.0; 4]);
    let scaled = FitParams::from_array(t.to_array().map(|v| 1.1 * v));
    for e in relative_error(&scaled, &t).unwrap() {
        assert!((e - 0.1).abs() < 1e-12);
    }
    let mixed = FitParams { lambda: t.lambda * 0.5, t_r: 6.3, ..t };
    let e = relative_error(&mixed, &t).unwrap();
    assert!((e[0] - 0.5).abs() < 1e-15 && e[1] == 0.0 && e[2] == 0.0 && (e[3] - 0.05).abs() < 1e-15);
    assert!(relative_error(&t, &FitParams { gamma2: 0.0, ..t }).is_err());
}

fn bounds() -> Bounds {
    Bounds::for_frames(&frames(&[Regime::Below, Regime::Above], 2, 2, &NoiseSpec::off(), 0)).unwrap()
}

#[test]
fn zero_network_outputs_range_midpoints() {
    let b = bounds();
    let m = Mlp::zeros(&[800, 10, 30, 12, 4], Activation::Tanh, b).unwrap();
    let out = m.forward(&vec![0.3; 800]).unwrap().to_array();
    for i in 0..4 {
        assert!((out[i] - 0.5 * (b.lo[i] + b.hi[i])).abs() < 1e-12 * b.hi[i]);
    }
    assert!(matches!(m.forward(&[0.0; 799]), Err(tlsscope_core::Error::Dimension { expected: 800, got: 799 })));
    assert!(Mlp::zeros(&[800, 10, 3], Activation::Tanh, b).is_err());
    assert_eq!(Mlp::zeros(&[800, 20, 30, 12, 4], Activation::Relu, b).unwrap().n_params(), 800 * 20 + 20 * 30 + 30 * 12 + 12 * 4 + 20 + 30 + 12 + 4);
}

#[test]
fn seeded_network_output_is_frozen() {
    let m = Mlp::random(&[800, 10, 30, 12, 4], Activation::Tanh, bounds(), 7).unwrap();
    let x: Vec<f64> = (0..800).map(|k| ((k * 37) % 101) as f64 / 100.0).collect();
    let p = m.forward(&x).unwrap().to_json();
    let got = [p.lambda_mhz, p.gamma2_mhz, p.omega_tls_ghz, p.t_r_ns];
    let frozen = [FROZEN_LAMBDA_MHZ, FROZEN_GAMMA2_MHZ, FROZEN_OMEGA_GHZ, FROZEN_T_R_NS];
    for i in 0..4 {
        assert!((got[i] - frozen[i]).abs() < 1e-9 * frozen[i].abs(), "{got:?}");
    }
}

const FROZEN_LAMBDA_MHZ: f64 = 20.36158292168014;
const FROZEN_GAMMA2_MHZ: f64 = 58.20099499752244;
const FROZEN_OMEGA_GHZ: f64 = 5.05169860283071;
const FROZEN_T_R_NS: f64 = 11.372968206627347;

#[test]
fn outputs_stay_inside_bounds_for_random_weights() {
    let b = bounds();
    let x = vec![0.7; 40];
    for seed in 0..1000 {
        let mut m = Mlp::random(&[40, 6, 4], Activation::Tanh, b, seed).unwrap();
        let flat: Vec<f64> = m.to_flat().iter().map(|w| 50.0 * w).collect();
        m.set_flat(&flat).unwrap();
        assert!(b.contains(&m.forward(&x).unwrap()));
    }
}

#[test]
fn network_checkpoint_round_trip() {
    let m = Mlp::random(&[12, 5, 4], Activation::Sigmoid, bounds(), 1).unwrap();
    let text = serde_json::to_string(&m).unwrap();
    assert!(text.contains("\"layer_dims\"") && text.contains("\"sigmoid\""));
    assert_eq!(serde_json::from_str::<Mlp>(&text).unwrap(), m);
}

#[test]
fn reward_shaping() {
    let r = [-3.0, f64::NAN, -1.0, -2.0];
    assert_eq!(shape_rewards(&r, RewardShaping::Raw), vec![-3.0, -3.0, -1.0, -2.0]);
    let c = shape_rewards(&r, RewardShaping::Centered);
    assert!(c.iter().sum::<f64>().abs() < 1e-15);
    let k = shape_rewards(&[5.0, 1.0, 3.0], RewardShaping::Rank);
    assert_eq!(k, vec![0.5, -0.5, 0.0]);
}

/// One linear layer y = Wx + b with reward −‖y − target‖².
fn linear_problem() -> (Vec<f64>, impl Fn(&[f64]) -> f64 + Sync + Send, Vec<f64>) {
    let (n_in, n_out) = (5, 4);
    let x: Vec<f64> = (0..n_in).map(|i| 0.2 * i as f64 - 0.3).collect();
    let target = [0.5, -0.2, 0.1, 0.3];
    let theta: Vec<f64> = (0..n_in * n_out + n_out).map(|k| 0.05 * ((k * 7) % 11) as f64 - 0.25).collect();
    let forward = move |t: &[f64]| -> Vec<f64> {
        (0..n_out).map(|o| t[n_in * n_out + o] + (0..n_in).map(|i| t[o * n_in + i] * x[i]).sum::<f64>()).collect()
    };
    let y = forward(&theta);
    let mut grad = vec![0.0; theta.len()];
    let xs: Vec<f64> = (0..n_in).map(|i| 0.2 * i as f64 - 0.3).collect();
    for o in 0..n_out {
        let r = -2.0 * (y[o] - target[o]);
        for i in 0..n_in {
            grad[o * n_in + i] = r * xs[i];
        }
        grad[n_in * n_out + o] = r;
    }
    let reward = move |t: &[f64]| -forward(t).iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    (theta, reward, grad)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
}

#[test]
fn es_update_estimates_the_gradient() {
    let (theta, reward, grad) = linear_problem();
    let scale = vec![0.01; theta.len()];
    let (dir, _) = es_direction(&theta, &scale, &reward, 10_000, RewardShaping::Centered, 5, 0, Exec::Serial);
    assert!(cosine(&dir, &grad) > 0.95, "{}", cosine(&dir, &grad));
}

#[test]
fn centering_keeps_the_expected_direction() {
    let (theta, reward, grad) = linear_problem();
    let scale = vec![0.05; theta.len()];
    let mut raw = vec![0.0; theta.len()];
    let mut cen = vec![0.0; theta.len()];
    for step in 0..20 {
        let (a, _) = es_direction(&theta, &scale, &reward, 5_000, RewardShaping::Raw, 9, step, Exec::Serial);
        let (b, _) = es_direction(&theta, &scale, &reward, 5_000, RewardShaping::Centered, 9, step, Exec::Serial);
        for i in 0..theta.len() {
            raw[i] += a[i];
            cen[i] += b[i];
        }
    }
    assert!(cosine(&raw, &cen) > 0.95, "{}", cosine(&raw, &cen));
    assert!(cosine(&raw, &grad) > 0.9);
}

#[test]
fn es_direction_is_independent_of_execution_policy() {
    let (theta, reward, _) = linear_problem();
    let scale = vec![0.01; theta.len()];
    let a = es_direction(&theta, &scale, &reward, 64, RewardShaping::Centered, 1, 3, Exec::Serial);
    let b = es_direction(&theta, &scale, &reward, 64, RewardShaping::Centered, 1, 3, Exec::Parallel);
    assert_eq!(a, b);
}

fn tiny_net(seed: u64) -> Mlp {
    Mlp::random(&[80, 6, 4], Activation::Tanh, Bounds::for_frames(&small()).unwrap(), seed).unwrap()
}

fn tiny_cfg(seed: u64) -> EaConfig {
    EaConfig { n_steps: 6, batch: 8, seed, update_scale: UpdateScale::Gradient, ..EaConfig::default() }
}

#[test]
fn ea_is_deterministic_and_elitist() {
    let f = small();
    let (m1, r1) = ea_train(&f, &tiny_net(1), &tiny_cfg(4), MODEL, Exec::Serial).unwrap();
    let (m2, r2) = ea_train(&f, &tiny_net(1), &tiny_cfg(4), MODEL, Exec::Parallel).unwrap();
    assert_eq!(r1.trace, r2.trace);
    assert_eq!(m1, m2);
    assert!(r1.trace.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(r1.trace.len(), 7);
    assert!(Bounds::for_frames(&f).unwrap().contains(&r1.params));
    assert!((cost(&f, &r1.params, MODEL).unwrap().value - r1.cost).abs() < 1e-12);
}

#[test]
fn vanishing_perturbations_leave_the_network_unchanged() {
    let f = small();
    let cfg = EaConfig { sigma_w: 1e-300, sigma_b: 1e-300, ..tiny_cfg(2) };
    let net = tiny_net(3);
    let (m, r) = ea_train(&f, &net, &cfg, MODEL, Exec::Serial).unwrap();
    assert_eq!(m, net);
    assert!(r.trace.iter().all(|&c| c == r.trace[0]));
}

#[test]
fn ea_rejects_bad_configs_and_inputs() {
    let f = small();
    assert!(ea_train(&f, &tiny_net(1), &EaConfig { batch: 1, ..tiny_cfg(1) }, MODEL, Exec::Serial).is_err());
    assert!(ea_train(&f, &tiny_net(1), &EaConfig { sigma_w: 0.0, ..tiny_cfg(1) }, MODEL, Exec::Serial).is_err());
    let wide = Mlp::zeros(&[81, 4], Activation::Tanh, bounds()).unwrap();
    assert!(ea_train(&f, &wide, &tiny_cfg(1), MODEL, Exec::Serial).is_err());
}

#[test]
fn nelder_mead_finds_quadratic_minimum() {
    let f = |x: &[f64]| (x[0] - 0.3).powi(2) + 4.0 * (x[1] + 0.2).powi(2) + (x[0] - x[2]).powi(2) + 0.5 * (x[2] - 0.3).powi(2);
    let m = nelder_mead(f, &[0.9, 0.9, -0.9], 0.2, &[-1.0; 3], &[1.0; 3], 5000, 1e-20, 1e-10);
    assert!(m.converged);
    for (x, t) in m.x.iter().zip([0.3, -0.2, 0.3]) {
        assert!((x - t).abs() < 1e-8, "{:?}", m.x);
    }
    assert!(m.trace.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn nelder_mead_stays_in_the_box() {
    // Unconstrained minimum at (2, 2); the box corner (1, 1) is the answer.
    let f = |x: &[f64]| {
        assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        (x[0] - 2.0).powi(2) + (x[1] - 2.0).powi(2)
    };
    let m = nelder_mead(f, &[0.5, 0.5], 0.3, &[0.0; 2], &[1.0; 2], 5000, 1e-18, 1e-12);
    assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
}

#[test]
fn simplex_converges_from_a_nearby_start() {
    let f = frames(&[Regime::Below, Regime::Near, Regime::Above], 12, 8, &NoiseSpec::off(), 0);
    let b = Bounds::for_frames(&f).unwrap();
    let t = truth();
    let p0 = FitParams { lambda: t.lambda * 1.01, gamma2: t.gamma2 * 0.99, omega_tls: t.omega_tls * 1.0005, t_r: t.t_r * 1.01 };
    let r = simplex_fit(&f, &p0, &b, MODEL).unwrap().with_truth(&t).unwrap();
    assert!(r.rel_error.unwrap().iter().all(|&e| e < 1e-3), "{:?}", r.rel_error);
    assert!(b.contains(&r.params));
    let outside = FitParams { t_r: 40.0, ..t };
    assert!(simplex_fit(&f, &outside, &b, MODEL).is_err());
}

#[test]
fn grid_search_examples() {
    let f = small();
    let b = Bounds::for_frames(&f).unwrap();
    let r = grid_fit(&f, &b, [2; 4], MODEL, Exec::Serial).unwrap();
    assert_eq!(r.evaluations, 16);
    assert!(b.contains(&r.params));
    for k in 0..16u32 {
        let u: Vec<f64> = (0..4).map(|i| ((k >> i) & 1) as f64).collect();
        let p = FitParams::from_array(std::array::from_fn(|i| b.lo[i] + u[i] * (b.hi[i] - b.lo[i])));
        assert!(r.cost <= cost(&f, &p, MODEL).unwrap().value);
    }
    assert!(grid_fit(&f, &b, [1, 2, 2, 2], MODEL, Exec::Serial).is_err());
}

#[test]
fn grid_containing_the_truth_selects_it() {
    let f = frames(&[Regime::Below, Regime::Near, Regime::Above], 8, 6, &NoiseSpec::off(), 0);
    let t = truth();
    // Node spacing puts the truth on the fifth node of every axis.
    let b = Bounds::new([mhz(0.959), mhz(2.0), ghz(5.0), 2.0], [mhz(18.959), mhz(20.0), ghz(5.09), 11.0]).unwrap();
    let r = grid_fit(&f, &b, [10; 4], MODEL, Exec::Parallel).unwrap();
    assert_eq!(r.evaluations, 10_000);
    assert!(r.cost < 1e-12, "{}", r.cost);
    let e = relative_error(&r.params, &t).unwrap();
    assert!(e.iter().all(|&x| x < 1e-9), "{e:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn random_probes_never_beat_the_grid(u in prop::array::uniform4(0.0f64..1.0)) {
        let f = small();
        let b = Bounds::for_frames(&f).unwrap();
        let r = grid_fit(&f, &b, [3; 4], MODEL, Exec::Serial).unwrap();
        let p = FitParams::from_array(std::array::from_fn(|i| b.lo[i] + u[i] * (b.hi[i] - b.lo[i])));
        let c = cost(&f, &p, MODEL).unwrap().value;
        // The grid minimum is the minimum over its own nodes only.
        let nodes: Vec<f64> = (0..81).map(|k| {
            let mut rem = k;
            let q = FitParams::from_array(std::array::from_fn(|i| { let j = rem % 3; rem /= 3; b.lo[i] + j as f64 * 0.5 * (b.hi[i] - b.lo[i]) }));
            cost(&f, &q, MODEL).unwrap().value
        }).collect();
        prop_assert!(nodes.iter().all(|&n| r.cost <= n));
        prop_assert!(c.is_finite());
    }
}
