use crate::config::*;
use crate::{cfg_err, comp_err, CliResult, Loaded, RunOpts};
use std::fmt::Write as _;
use std::path::Path;
use tlsscope_core::channel::{self, GateSpec, TlsEnv};
use tlsscope_core::fit::{
    self, Activation, Bounds, EaConfig, FitParams, FitReport, FitResult, Mlp, DEFAULT_HIDDEN, PARAM_NAMES,
};
use tlsscope_core::perturbative::TlsParams;
use tlsscope_core::pulse::Trajectory;
use tlsscope_core::tssd::{self, Model, NoiseSpec, SamplingGrid, TemporalMode, TssdFrame};
use tlsscope_core::units::ghz;
use tlsscope_core::Exec;

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| cfg_err(format!("{}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> CliResult<()> {
    write_file(path, &(serde_json::to_string_pretty(v).map_err(comp_err)? + "\n"))
}

fn unique_names<'a>(names: impl Iterator<Item = &'a String>) -> CliResult<()> {
    let mut seen = std::collections::BTreeSet::new();
    for n in names {
        if n.is_empty() || n.contains(['/', '\\']) {
            return Err(cfg_err(format!("bad output name {n:?}")));
        }
        if !seen.insert(n) {
            return Err(cfg_err(format!("duplicate output name {n:?}")));
        }
    }
    Ok(())
}

fn window_grid(w: &WindowConfig) -> tlsscope_core::Result<SamplingGrid> {
    let (lo, hi) = match (w.f_lo_ghz, w.f_hi_ghz, w.regime) {
        (Some(lo), Some(hi), _) => (lo, hi),
        (None, None, Some(r)) => r.span_ghz(),
        _ => {
            return Err(tlsscope_core::Error::Invalid(format!(
                "window {}: give a regime or both f_lo_ghz and f_hi_ghz",
                w.name
            )))
        }
    };
    let f = channel::axis_values(lo, hi, w.n_f, false)?.into_iter().map(ghz).collect();
    let t = channel::axis_values(w.t_lo_ns, w.t_hi_ns, w.n_t, w.temporal_mode == TemporalMode::Logarithmic)?;
    SamplingGrid::from_values(f, t, w.temporal_mode)
}

/// Frames of one synthetic dataset with the count of model values outside [0, 1].
pub struct Dataset {
    pub names: Vec<String>,
    pub frames: Vec<TssdFrame>,
    pub clamped: Vec<usize>,
}

/// Window `k` draws its noise with seed `seed + k`.
pub fn synthesize_set(cfg: &SimulateConfig, seed: u64, exec: Exec) -> CliResult<Dataset> {
    if cfg.windows.is_empty() {
        return Err(cfg_err("at least one window is required"));
    }
    unique_names(cfg.windows.iter().map(|w| &w.name))?;
    let tls: Vec<TlsParams> = cfg.tls.iter().map(|&j| j.try_into()).collect::<Result<_, _>>().map_err(cfg_err)?;
    if tls.is_empty() {
        return Err(cfg_err("at least one TLS is required"));
    }
    let noise = match cfg.noise {
        Some(j) => NoiseSpec::try_from(j).map_err(cfg_err)?,
        None => NoiseSpec::default(),
    };
    let template = Trajectory::from_ghz(cfg.f_idle_ghz, cfg.f_idle_ghz, cfg.t_r_ns, 0.0).map_err(cfg_err)?;
    let grids: Vec<SamplingGrid> = cfg.windows.iter().map(window_grid).collect::<Result<_, _>>().map_err(cfg_err)?;
    let clean_noise = NoiseSpec { purcell: noise.purcell, ..NoiseSpec::off() };
    let mut out = Dataset { names: Vec::new(), frames: Vec::new(), clamped: Vec::new() };
    for (k, (w, grid)) in cfg.windows.iter().zip(&grids).enumerate() {
        let s = seed.wrapping_add(k as u64);
        let mut frame = tssd::synthesize(cfg.model, &tls, &template, grid, &clean_noise, s, exec).map_err(comp_err)?;
        let clamped = frame.p.iter().filter(|&&v| v < 0.0 || v > 1.0).count();
        if !noise.is_identity() {
            let n_f = grid.n_f();
            for (i, v) in frame.p.iter_mut().enumerate() {
                if v.is_finite() {
                    *v = tssd::apply_noise(*v, &noise, &mut tssd::point_rng(s, i / n_f, i % n_f, n_f));
                }
            }
        }
        frame.meta.noise = noise.to_json();
        out.names.push(w.name.clone());
        out.frames.push(frame);
        out.clamped.push(clamped);
    }
    Ok(out)
}

pub fn simulate(l: &Loaded<SimulateConfig>, opts: &RunOpts) -> CliResult<String> {
    let seed = opts.seed.or(l.doc.seed).unwrap_or(DEFAULT_SEED);
    let set = synthesize_set(&l.doc, seed, opts.exec)?;
    let mut s = String::new();
    for ((name, frame), clamped) in set.names.iter().zip(&set.frames).zip(&set.clamped) {
        let path = frame.save(&opts.out, name).map_err(cfg_err)?;
        let finite = frame.p.iter().copied().filter(|v| v.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        writeln!(
            s,
            "{name}: {} x {} points, min P {lo:.6}, max P {hi:.6}, clamped {clamped}, invalid {} -> {}",
            frame.grid.n_f(),
            frame.grid.n_t(),
            frame.meta.invalid_points,
            path.display()
        )
        .unwrap();
    }
    Ok(s)
}

fn truth_from_meta(frames: &[TssdFrame]) -> Option<FitParams> {
    let one = |f: &TssdFrame| -> Option<[f64; 4]> {
        let [j] = f.meta.params.as_slice() else { return None };
        let p = TlsParams::try_from(*j).ok()?;
        Some([p.lambda, p.gamma2(), p.omega_tls, f.meta.trajectory.t_r_ns])
    };
    let first = one(frames.first()?)?;
    frames.iter().all(|f| one(f) == Some(first)).then(|| FitParams::from_array(first))
}

fn bounds_for(cfg: Option<BoundsConfig>, frames: &[TssdFrame]) -> CliResult<Bounds> {
    match cfg {
        Some(b) => Bounds::from_json(b.lo, b.hi).map_err(cfg_err),
        None => Bounds::for_frames(frames).map_err(cfg_err),
    }
}

fn ea_config(sec: &EaSection, seed: u64) -> CliResult<EaConfig> {
    let d = EaConfig::default();
    let c = EaConfig {
        sigma_w: sec.sigma.unwrap_or(d.sigma_w),
        sigma_b: sec.sigma_b.or(sec.sigma).unwrap_or(d.sigma_b),
        lr_w: sec.lr.unwrap_or(d.lr_w),
        lr_b: sec.lr_b.or(sec.lr).unwrap_or(d.lr_b),
        n_steps: sec.n_steps.unwrap_or(d.n_steps),
        batch: sec.batch.unwrap_or(d.batch),
        seed,
        reward_shaping: sec.reward_shaping.unwrap_or(d.reward_shaping),
        update_scale: sec.update_scale.unwrap_or(d.update_scale),
    };
    c.validate().map_err(cfg_err)?;
    Ok(c)
}

fn initial_network(sec: &EaSection, frames: &[TssdFrame], bounds: Bounds, seed: u64) -> CliResult<Mlp> {
    let input = frames[0].p.len();
    if frames.iter().any(|f| f.p.len() != input) {
        return Err(cfg_err("the network fitter needs windows of equal size"));
    }
    let mut dims = vec![input];
    dims.extend(sec.hidden.clone().unwrap_or_else(|| DEFAULT_HIDDEN.to_vec()));
    dims.push(4);
    let mut m = Mlp::random(&dims, sec.activation.unwrap_or(Activation::Tanh), bounds, seed).map_err(cfg_err)?;
    m.input_scaling = sec.input_scaling.unwrap_or_default();
    Ok(m)
}

fn simplex_starts(sec: &SimplexSection, bounds: &Bounds, seed: u64) -> CliResult<Vec<FitParams>> {
    if let Some(p) = sec.start {
        return Ok(vec![p.into()]);
    }
    let n = sec.starts.unwrap_or(1);
    if n == 0 {
        return Err(cfg_err("simplex needs at least one start"));
    }
    Ok((0..n as u64).map(|k| bounds.sample(seed.wrapping_add(k))).collect())
}

/// Best of the Nelder–Mead runs; evaluations are summed over all starts.
fn best_simplex(frames: &[TssdFrame], starts: &[FitParams], bounds: &Bounds, model: Model) -> CliResult<FitResult> {
    let mut best: Option<FitResult> = None;
    let mut evaluations = 0;
    for p0 in starts {
        let r = fit::simplex_fit(frames, p0, bounds, model).map_err(comp_err)?;
        evaluations += r.evaluations;
        if best.as_ref().map_or(true, |b| r.cost < b.cost) {
            best = Some(r);
        }
    }
    let mut best = best.expect("at least one start");
    best.evaluations = evaluations;
    Ok(best)
}

fn load_frames(data: &DataConfig, base: &Path, seed: Option<u64>, exec: Exec) -> CliResult<Vec<TssdFrame>> {
    let frames = match data {
        DataConfig::Frames(paths) => paths
            .iter()
            .map(|p| TssdFrame::load(&base.join(p)).map_err(|e| cfg_err(format!("{}: {e}", base.join(p).display()))))
            .collect::<CliResult<Vec<_>>>()?,
        DataConfig::Synthesize(sim) => {
            synthesize_set(sim, seed.or(sim.seed).unwrap_or(DEFAULT_SEED), exec)?.frames
        }
    };
    if frames.is_empty() {
        return Err(cfg_err("no frames to fit"));
    }
    Ok(frames)
}

fn param_lines(s: &mut String, r: &FitResult) {
    let j = r.params.to_json();
    let vals = [j.lambda_mhz, j.gamma2_mhz, j.omega_tls_ghz, j.t_r_ns];
    let units = ["MHz", "MHz", "GHz", "ns"];
    for i in 0..4 {
        write!(s, "{:<10} {:>14.6} {}", PARAM_NAMES[i], vals[i], units[i]).unwrap();
        if let Some(e) = r.rel_error {
            write!(s, "  rel error {:.6}", e[i]).unwrap();
        }
        s.push('\n');
    }
}

pub fn fit(l: &Loaded<FitConfig>, opts: &RunOpts) -> CliResult<String> {
    let doc = &l.doc;
    let seed = opts.seed.or(doc.seed).unwrap_or(DEFAULT_SEED);
    let frames = load_frames(&doc.data, &l.base, opts.seed.or(doc.seed), opts.exec)?;
    let truth = doc.truth.map(FitParams::from).or_else(|| truth_from_meta(&frames));
    let bounds = bounds_for(doc.bounds, &frames)?;
    let reference = match (&doc.reference_report, doc.reference_cost) {
        (Some(p), _) => {
            let r: Loaded<FitReport> = crate::load(&l.base.join(p))?;
            Some(r.doc.cost)
        }
        (None, c) => c,
    };
    let mut network = None;
    let (name, used_seed, result) = match doc.method {
        Method::Ea => {
            let s = opts.seed.or(doc.ea.seed).unwrap_or(seed);
            let cfg = ea_config(&doc.ea, s)?;
            let init = opts.seed.or(doc.ea.init_seed).unwrap_or(s);
            let mlp0 = initial_network(&doc.ea, &frames, bounds, init)?;
            let (net, r) = fit::ea_train(&frames, &mlp0, &cfg, doc.model, opts.exec).map_err(comp_err)?;
            network = Some(net);
            ("ea", s, r)
        }
        Method::Simplex => {
            let s = opts.seed.or(doc.simplex.seed).unwrap_or(seed);
            let starts = simplex_starts(&doc.simplex, &bounds, s)?;
            ("simplex", s, best_simplex(&frames, &starts, &bounds, doc.model)?)
        }
        Method::Grid => {
            let r = fit::grid_fit(&frames, &bounds, doc.grid.resolution.per_axis(), doc.model, opts.exec).map_err(comp_err)?;
            ("grid", seed, r)
        }
    };
    let result = match truth {
        Some(t) => result.with_truth(&t).map_err(comp_err)?,
        None => result,
    };
    eprintln!("{name} fit took {:.2} s", result.wall_time);
    if opts.verbose > 0 {
        for (k, c) in result.trace.iter().enumerate() {
            eprintln!("trace {k} {c:.9e}");
        }
    }
    let mut report = FitReport::new(name, &result, used_seed, l.raw.clone());
    report.wall_time_s = None;
    if result.excluded > 0 {
        report.warnings.push(format!("{} invalid points left out of the cost", result.excluded));
    }
    if let (Method::Simplex, Some(c)) = (doc.method, reference) {
        if result.cost > c {
            report.warnings.push(format!(
                "final cost {:.6e} exceeds the reference cost {c:.6e}: likely a local minimum",
                result.cost
            ));
        }
    }
    write_json(&opts.out.join("fit_report.json"), &report)?;
    if let Some(net) = &network {
        write_json(&opts.out.join("network.json"), net)?;
    }
    let mut s = format!("method {name}, evaluations {}, cost {:.9e}\n", result.evaluations, result.cost);
    param_lines(&mut s, &result);
    for w in &report.warnings {
        eprintln!("warning: {w}");
        writeln!(s, "warning: {w}").unwrap();
    }
    Ok(s)
}

fn min_max(v: impl Iterator<Item = f64>) -> (f64, f64) {
    v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)))
}

pub fn sweep(l: &Loaded<SweepConfig>, opts: &RunOpts) -> CliResult<String> {
    let doc = &l.doc;
    let base_spec = GateSpec::try_from(doc.gate).map_err(cfg_err)?;
    let base_env = TlsEnv::try_from(doc.env).map_err(cfg_err)?;
    unique_names(doc.sweeps.iter().map(|e| &e.name))?;
    let mut s = String::new();
    for e in &doc.sweeps {
        let spec = e.gate.map(GateSpec::try_from).transpose().map_err(cfg_err)?.unwrap_or(base_spec);
        let env = e.env.map(TlsEnv::try_from).transpose().map_err(cfg_err)?.unwrap_or(base_env);
        for w in env.warnings(&spec) {
            eprintln!("warning: {}: {w}", e.name);
        }
        let xs = channel::axis_values(e.range[0], e.range[1], e.points, e.log).map_err(cfg_err)?;
        let ys = match (e.axis, e.second) {
            (channel::SweepAxis::Detunings, Some(a)) => channel::axis_values(a.range[0], a.range[1], a.points, a.log).map_err(cfg_err)?,
            (channel::SweepAxis::Detunings, None) => return Err(cfg_err(format!("{}: detuning sweep needs `second`", e.name))),
            (_, Some(_)) => return Err(cfg_err(format!("{}: `second` only applies to detuning sweeps", e.name))),
            (_, None) => Vec::new(),
        };
        let rows = channel::sweep(&spec, &env, e.axis, &xs, &ys, opts.exec).map_err(comp_err)?;
        let path = opts.out.join(format!("{}.csv", e.name));
        write_file(&path, &channel::sweep_csv(&rows))?;
        let (elo, ehi) = min_max(rows.iter().map(|r| r.metrics.err));
        let (ulo, uhi) = min_max(rows.iter().map(|r| r.metrics.u_rescaled));
        writeln!(
            s,
            "{}: {} points, err {elo:.3e} to {ehi:.3e}, u_rescaled {ulo:.3e} to {uhi:.3e} -> {}",
            e.name,
            rows.len(),
            path.display()
        )
        .unwrap();
    }
    if let Some(r) = &doc.relaxation {
        let mut csv = String::from("t1_us,err\n");
        for &t1 in &r.t1_us {
            let err = channel::relaxation_error(base_spec.t2, t1 * 1e3).map_err(cfg_err)?;
            writeln!(csv, "{t1:.6},{err:.9e}").unwrap();
        }
        let path = opts.out.join("relaxation.csv");
        write_file(&path, &csv)?;
        writeln!(s, "relaxation: {} points -> {}", r.t1_us.len(), path.display()).unwrap();
    }
    if let Some(p) = doc.pauli_table {
        let kraus = channel::build_kraus(&base_spec, &base_env).map_err(comp_err)?;
        let path = opts.out.join("pauli_table.csv");
        write_file(&path, &channel::pauli_table(&kraus, p.threshold))?;
        writeln!(s, "pauli table -> {}", path.display()).unwrap();
    }
    Ok(s)
}

fn time_grid(f_pl: f64, a: &TimeAxis) -> tlsscope_core::Result<SamplingGrid> {
    let t = channel::axis_values(a.t_lo_ns, a.t_hi_ns, a.n_t, a.mode == TemporalMode::Logarithmic)?;
    SamplingGrid::from_values(vec![f_pl], t, a.mode)
}

pub fn moire(l: &Loaded<MoireConfig>, opts: &RunOpts) -> CliResult<String> {
    let doc = &l.doc;
    let seed = opts.seed.or(doc.seed).unwrap_or(DEFAULT_SEED);
    let tls = TlsParams::try_from(doc.tls).map_err(cfg_err)?;
    let f_pl = ghz(doc.f_pl_ghz.unwrap_or(doc.tls.omega_tls_ghz));
    let template = Trajectory::from_ghz(doc.f_idle_ghz, doc.f_idle_ghz, doc.t_r_ns, 0.0).map_err(cfg_err)?;
    let noise = doc.noise.map(NoiseSpec::try_from).transpose().map_err(cfg_err)?.unwrap_or_else(NoiseSpec::off);
    let ga = time_grid(f_pl, &doc.sampled).map_err(cfg_err)?;
    let gb = time_grid(f_pl, &doc.reference).map_err(cfg_err)?;
    let fa = tssd::synthesize(doc.model, &[tls], &template, &ga, &noise, seed, opts.exec).map_err(comp_err)?;
    let fb = tssd::synthesize(doc.model, &[tls], &template, &gb, &noise, seed, opts.exec).map_err(comp_err)?;
    let r = tssd::moire_amplification(&fa, &fb, f_pl).map_err(comp_err)?;
    fa.save(&opts.out, "sampled").map_err(cfg_err)?;
    fb.save(&opts.out, "reference").map_err(cfg_err)?;
    write_json(&opts.out.join("moire.json"), &serde_json::json!({ "seed": seed, "report": r, "config": l.raw }))?;
    Ok(format!(
        "amplification {:.3}\nperiod sampled {:.3} ns ({:.3} rows)\nperiod reference {:.3} ns ({:.3} rows)\nrow period ratio {:.6}\n",
        r.amplification, r.time_period_a, r.index_period_a, r.time_period_b, r.index_period_b, r.index_ratio
    ))
}

fn max_rel(r: &FitResult) -> f64 {
    r.rel_error.map_or(f64::NAN, |e| e.iter().copied().fold(0.0, f64::max))
}

/// Dataset `k` uses seed `seed + k` for its noise, the network weights, the
/// evolution strategy and the simplex start.
pub fn compare(l: &Loaded<CompareConfig>, opts: &RunOpts) -> CliResult<String> {
    let doc = &l.doc;
    if doc.datasets == 0 {
        return Err(cfg_err("datasets must be at least 1"));
    }
    let seed = opts.seed.or(doc.seed).unwrap_or(DEFAULT_SEED);
    let mut csv = String::from("dataset,seed,ea_cost,simplex_cost,ea_lower,ea_max_rel_error,simplex_max_rel_error\n");
    let mut s = String::new();
    let mut wins = 0;
    for k in 0..doc.datasets {
        let sk = seed.wrapping_add(k as u64);
        let frames = synthesize_set(&doc.data, sk, opts.exec)?.frames;
        let truth = truth_from_meta(&frames);
        let bounds = bounds_for(doc.bounds, &frames)?;
        let mlp0 = initial_network(&doc.ea, &frames, bounds, sk)?;
        let (_, ea) = fit::ea_train(&frames, &mlp0, &ea_config(&doc.ea, sk)?, doc.model, opts.exec).map_err(comp_err)?;
        let starts = simplex_starts(&SimplexSection { start: None, ..doc.simplex.clone() }, &bounds, sk)?;
        let sx = best_simplex(&frames, &starts, &bounds, doc.model)?;
        let (ea, sx) = match truth {
            Some(t) => (ea.with_truth(&t).map_err(comp_err)?, sx.with_truth(&t).map_err(comp_err)?),
            None => (ea, sx),
        };
        let lower = ea.cost < sx.cost;
        wins += lower as usize;
        let line = format!(
            "{k},{sk},{:.9e},{:.9e},{},{:.6},{:.6}",
            ea.cost,
            sx.cost,
            lower,
            max_rel(&ea),
            max_rel(&sx)
        );
        if opts.verbose > 0 {
            eprintln!("{line}");
        }
        writeln!(csv, "{line}").unwrap();
        writeln!(s, "dataset {k} (seed {sk}): ea cost {:.6e}, simplex cost {:.6e}", ea.cost, sx.cost).unwrap();
    }
    let path = opts.out.join("compare.csv");
    write_file(&path, &csv)?;
    writeln!(s, "EA lower cost in {wins} of {} datasets -> {}", doc.datasets, path.display()).unwrap();
    Ok(s)
}
