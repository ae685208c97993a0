//! Acceptance suite: one pass/fail line per criterion, non-zero exit on any
//! failure. Criteria 3, 4 and 6 share one fully trained model.

use std::sync::Arc;
use std::time::Instant;

use ndarray::{Array, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use denoise_assist::dae::{decode, encoder_step, loss_and_grad, loss_batch, Dims, EncoderState, ModelParams};
use denoise_assist::drivers::{generate_dataset, GenConfig, UnskilledDriver};
use denoise_assist::evaluator::{
    closed_loop_run, closed_loop_session, compare, paired_experiment, welch_t_test, DriverKind,
};
use denoise_assist::preprocess::{denormalize_ci, ControlVector};
use denoise_assist::service::{blend, interpolate, AssistSession, SessionConfig};
use denoise_assist::trainer::{inject_noise, make_windows, train, TrainConfig};
use denoise_assist::ModelParams64;

type Outcome = Result<String, String>;

fn random_params(dims: Dims, seed: u64, scale: f64) -> ModelParams64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::zeros(dims);
    for t in p.tensors_mut() {
        t.iter_mut().for_each(|v| *v = rng.gen_range(-scale..scale));
    }
    p
}

fn random_window(dims: Dims, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array::from_shape_fn((dims.window, dims.input), |_| rng.gen::<f64>())
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Every parameter of a random micro model against central differences.
fn gradient_exactness() -> Outcome {
    let start = Instant::now();
    let dims = Dims::MICRO;
    let p = random_params(dims, 1, 0.5);
    let w = random_window(dims, 2);
    let target = [0.3, 0.7];
    let (_, g) = loss_and_grad(w.view(), target, &p).map_err(|e| e.to_string())?;
    let loss_at = |q: &ModelParams64| loss_batch(&[w.view()], &[target], q).unwrap();
    let eps = 1e-5;
    let (mut worst, mut count) = (0.0f64, 0usize);
    let mut probe = p.clone();
    for (ti, gt) in g.tensors().iter().enumerate() {
        for idx in 0..gt.len() {
            let orig = probe.tensors()[ti][idx];
            probe.tensors_mut()[ti][idx] = orig + eps;
            let plus = loss_at(&probe);
            probe.tensors_mut()[ti][idx] = orig - eps;
            let minus = loss_at(&probe);
            probe.tensors_mut()[ti][idx] = orig;
            let fd = (plus - minus) / (2.0 * eps);
            let rel = (gt[idx] - fd).abs() / gt[idx].abs().max(fd.abs()).max(1e-7);
            worst = worst.max(rel);
            count += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst < 1e-4 && secs < 60.0 && count == p.param_count(),
        format!("{count} parameters, max relative error {worst:.2e}, {secs:.1} s"),
    )
}

/// Skip pass-through, textbook LSTM equivalence and the neutral decoder.
fn architecture_fidelity() -> Outcome {
    let dims = Dims::MICRO;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut rand_vec = |n: usize| Array1::from_iter((0..n).map(|_| rng.gen_range(-2.0..2.0)));

    // Zeroed parameters keep the cell state at zero from the window start,
    // so only the hidden history is arbitrary.
    let zero = ModelParams64::zeros(dims);
    let prev = EncoderState {
        h: rand_vec(dims.hidden),
        c: Array1::zeros(dims.hidden),
        h_prev: rand_vec(dims.hidden),
    };
    let skip_only = encoder_step(rand_vec(dims.feature).view(), &prev, &zero);
    let skip_exact = skip_only.h == prev.h_prev;

    // Textbook LSTM: same gates, no skip term.
    let p = random_params(dims, 4, 0.6);
    let hid = dims.hidden;
    let mut state = EncoderState::<f64>::zeros(hid);
    let (mut h, mut c) = (vec![0.0; hid], vec![0.0; hid]);
    let mut worst = 0.0f64;
    for _ in 0..dims.window {
        let r = rand_vec(dims.feature);
        state.h_prev = Array1::zeros(hid);
        state = encoder_step(r.view(), &state, &p);
        let z: Vec<f64> = h.iter().chain(r.iter()).copied().collect();
        let pre = |row: usize| p.enc.b[row] + z.iter().enumerate().map(|(j, v)| p.enc.w[[row, j]] * v).sum::<f64>();
        let mut hn = vec![0.0; hid];
        for u in 0..hid {
            let (i, f, o, g) = (sig(pre(u)), sig(pre(hid + u)), sig(pre(2 * hid + u)), pre(3 * hid + u).tanh());
            c[u] = f * c[u] + i * g;
            hn[u] = o * c[u].tanh();
        }
        h = hn;
        for u in 0..hid {
            worst = worst.max((state.h[u] - h[u]).abs()).max((state.c[u] - c[u]).abs());
        }
    }

    let out = decode(rand_vec(dims.feature).view(), &prev, &zero);
    let half = out.iter().all(|v| *v == 0.5) && out.len() == dims.input;
    check(
        skip_exact && worst < 1e-12 && half,
        format!("skip pass-through exact: {skip_exact}; LSTM oracle max error {worst:.1e}; zero decoder all 0.5: {half}"),
    )
}

/// Trains the full model on 30 minutes of data and scores a held-out set.
fn denoising_gain(model: &mut Option<Arc<ModelParams64>>) -> Outcome {
    let start = Instant::now();
    let seeds: Vec<u64> = (1..=10).collect();
    let data = generate_dataset(&seeds, 30.0, &GenConfig::default()).map_err(|e| e.to_string())?;
    let minutes = data.total_steps() as f64 / 600.0;
    let cfg = TrainConfig::default();
    let out = train(&data, &cfg).map_err(|e| e.to_string())?;
    let params = Arc::new(out.params);
    *model = Some(params.clone());

    // Held-out terrains never seen in training.
    let test = generate_dataset(&[901, 902, 903], 6.0, &GenConfig::default()).map_err(|e| e.to_string())?;
    let set = make_windows(&test, cfg.dims.window).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut model_se, mut noisy_se) = (0.0, 0.0);
    let mut windows = Vec::with_capacity(set.len());
    let mut targets = Vec::with_capacity(set.len());
    for i in 0..set.len() {
        let w = inject_noise(set.window(i), &cfg.noise, &mut rng);
        let t = set.target(i);
        let last = w.nrows() - 1;
        noisy_se += (w[[last, 0]] - t[0]).powi(2) + (w[[last, 1]] - t[1]).powi(2);
        windows.push(w);
        targets.push(t);
    }
    for (ws, ts) in windows.chunks(256).zip(targets.chunks(256)) {
        let views: Vec<_> = ws.iter().map(|w| w.view()).collect();
        model_se += loss_batch(&views, ts, &params).map_err(|e| e.to_string())? * 2.0 * ws.len() as f64;
    }
    let n = 2.0 * set.len() as f64;
    let (model_mse, noisy_mse) = (model_se / n, noisy_se / n);
    let secs = start.elapsed().as_secs_f64();
    check(
        minutes >= 30.0 && model_mse <= 0.5 * noisy_mse && secs < 1800.0,
        format!(
            "{minutes:.0} min data, best epoch {}/{}; held-out MSE {model_mse:.5} vs noisy {noisy_mse:.5} (ratio {:.3}); {secs:.0} s",
            out.best_epoch,
            cfg.epochs,
            model_mse / noisy_mse
        ),
    )
}

/// Paired assisted/unassisted runs with the correlated-noise driver.
fn closed_loop_direction(model: &Option<Arc<ModelParams64>>) -> Outcome {
    let params = model.clone().ok_or("no trained model (criterion 3 failed)")?;
    let seeds: Vec<u64> = (100..120).collect();
    let runs = paired_experiment(params, &seeds, &DriverKind::Correlated.config()).map_err(|e| e.to_string())?;
    let cmp = compare(&runs);
    let get = |name: &str| cmp.iter().find(|c| c.metric == name).unwrap();
    let (sdlp, sm, crash) = (get("SDLP"), get("SM"), get("Crash"));
    let p = |c: &denoise_assist::evaluator::Comparison| c.welch.map_or(f64::NAN, |w| w.p);
    let ok = sdlp.assisted_mean < sdlp.unassisted_mean
        && sm.assisted_mean < sm.unassisted_mean
        && crash.assisted_mean < crash.unassisted_mean
        && p(sdlp) < 0.05
        && p(sm) < 0.05;
    check(
        ok,
        format!(
            "{} seeds: SDLP {:.3}→{:.3} m (p={:.1e}), SM {:.3}→{:.3} m/s (p={:.1e}), crashes/run {:.2}→{:.2}",
            runs.len(),
            sdlp.unassisted_mean,
            sdlp.assisted_mean,
            p(sdlp),
            sm.unassisted_mean,
            sm.assisted_mean,
            p(sm),
            crash.unassisted_mean,
            crash.assisted_mean
        ),
    )
}

/// Samples of size `n` with exactly the given mean and sample SD.
fn with_moments(mean: f64, sd: f64, n: usize) -> Vec<f64> {
    let base: Vec<f64> = (0..n).map(|i| i as f64 - (n - 1) as f64 / 2.0).collect();
    let s = (base.iter().map(|b| b * b).sum::<f64>() / (n - 1) as f64).sqrt();
    base.iter().map(|b| mean + sd * b / s).collect()
}

fn statistics_validation() -> Outcome {
    let a = with_moments(1.417, 0.212, 24);
    let b = with_moments(1.268, 0.196, 24);
    let w = welch_t_test(&a, &b).map_err(|e| e.to_string())?;
    check(
        (w.t - 2.526).abs() <= 0.01 && (w.df - 45.7).abs() <= 0.1,
        format!("t = {:.4}, df = {:.2}, p = {:.4}", w.t, w.df, w.p),
    )
}

/// A 5-minute assisted session with the full model, timed per stage.
fn realtime_budget(model: &Option<Arc<ModelParams64>>) -> Outcome {
    let params = model.clone().ok_or("no trained model (criterion 3 failed)")?;
    let mut cfg = SessionConfig {
        max_ticks: 3000,
        ..SessionConfig::new(321, true)
    };
    // Long enough that 5 minutes of driving never reaches the finish.
    cfg.terrain.length_m = 6000.0;
    let mut session = AssistSession::new(cfg, Some(params)).map_err(|e| e.to_string())?;
    let mut driver = UnskilledDriver::new(DriverKind::Correlated.config(), 321);
    let track = session.world().track().clone();
    let vehicle = session.world().vehicle().clone();
    let (mut max_inf, mut max_proc, mut ticks) = (0.0f64, 0.0f64, 0u64);
    while !session.is_over() {
        let raw = driver.control(session.world().state(), &track, &vehicle);
        let r = session.step(raw).map_err(|e| e.to_string())?;
        session.record_latency(&r.timings);
        max_inf = max_inf.max(r.timings.inference);
        max_proc = max_proc.max(r.timings.processing());
        ticks += 1;
    }
    let stats = session.latency();
    check(
        ticks == 3000 && max_inf < 10.0 && max_proc < 50.0 && stats.missed_deadlines == 0,
        format!(
            "{ticks} ticks: inference mean {:.2} / max {max_inf:.2} ms, processing max {max_proc:.2} ms, tick max {:.2} ms, missed deadlines {}",
            stats.inference.mean, stats.end_to_end.max, stats.missed_deadlines
        ),
    )
}

fn blending_arithmetic() -> Outcome {
    let b = blend(ControlVector::new(0.6, 0.6), ControlVector::new(0.1, 0.1));
    let blend_exact = b == ControlVector::new(0.5, 0.5);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut endpoints = true;
    for _ in 0..10_000 {
        let p = ControlVector::new(rng.gen(), rng.gen());
        let n = ControlVector::new(rng.gen(), rng.gen());
        endpoints &= interpolate(p, n, 0.0) == p && interpolate(p, n, 1.0) == n;
    }

    // Within a tick the world slews linearly from the previous applied
    // command to the new one; no sub-step may jump further than that slope.
    let model = Arc::new(random_params(Dims::MICRO, 6, 0.4));
    let mut session = AssistSession::new(SessionConfig::new(11, true), Some(model)).map_err(|e| e.to_string())?;
    let mut driver = UnskilledDriver::new(DriverKind::Correlated.config(), 11);
    let n = session.world().config().substeps as f64;
    let mut prev = session.world().last_command();
    let (mut worst, mut ends_exact) = (0.0f64, true);
    for _ in 0..600 {
        let track = session.world().track().clone();
        let vehicle = session.world().vehicle().clone();
        let raw = driver.control(session.world().state(), &track, &vehicle);
        let r = session.step(raw).map_err(|e| e.to_string())?;
        let bound_s = (r.applied.steer - prev.steer).abs() / n + 1e-12;
        let bound_p = (r.applied.pedal - prev.pedal).abs() / n + 1e-12;
        let mut last = prev;
        for c in &r.outcome.substep_commands {
            worst = worst
                .max((c.steer - last.steer).abs() - bound_s)
                .max((c.pedal - last.pedal).abs() - bound_p);
            last = *c;
        }
        ends_exact &= last == r.applied;
        prev = r.applied;
    }
    // Applied stays inside the physical range after denormalizing a blend.
    let edge = denormalize_ci(blend(ControlVector::new(1.0, 0.0), ControlVector::new(1.0, 0.0)));
    let in_range = edge.steer <= 1.0 && edge.pedal >= -1.0;
    check(
        blend_exact && endpoints && worst <= 0.0 && ends_exact && in_range,
        format!(
            "blend exact: {blend_exact}; endpoints exact: {endpoints}; max slew excess {:.1e}; tick ends on applied: {ends_exact}",
            worst.max(0.0)
        ),
    )
}

fn determinism() -> Outcome {
    let gen = || {
        let d = generate_dataset(&[3, 4], 2.0, &GenConfig::default()).unwrap();
        let mut buf = Vec::new();
        d.write(&mut buf).unwrap();
        (d, buf)
    };
    let ((d1, b1), (_, b2)) = (gen(), gen());
    let data_same = b1 == b2;

    let cfg = TrainConfig {
        dims: Dims::MICRO,
        epochs: 3,
        seed: 9,
        ..TrainConfig::default()
    };
    let h1 = train(&d1, &cfg).map_err(|e| e.to_string())?;
    let h2 = train(&d1, &cfg).map_err(|e| e.to_string())?;
    let loss_diff = h1
        .history
        .iter()
        .zip(&h2.history)
        .map(|(a, b)| (a.train_mse - b.train_mse).abs().max((a.val_mse - b.val_mse).abs()))
        .fold(0.0f64, f64::max);
    let params_same = h1.params == h2.params;

    let model = Arc::new(h1.params);
    let run = |assist| {
        let l = closed_loop_run(Some(model.clone()), 12, &DriverKind::Correlated.config(), assist, 12).unwrap();
        serde_json::to_string(&l).unwrap()
    };
    let logs_same = run(true) == run(true) && run(false) == run(false);
    let (_, lat) = closed_loop_session(
        Some(model.clone()),
        SessionConfig::new(12, true),
        &DriverKind::Correlated.config(),
        12,
    )
    .map_err(|e| e.to_string())?;
    check(
        data_same && loss_diff <= 1e-10 && params_same && logs_same && lat.ticks() > 0,
        format!(
            "dataset bytes identical: {data_same}; loss history max diff {loss_diff:.1e}; parameters identical: {params_same}; closed-loop logs identical: {logs_same}"
        ),
    )
}

fn main() {
    let total = Instant::now();
    let mut model = None;
    let mut failures = 0;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let r = f();
        let secs = start.elapsed().as_secs_f64();
        let (tag, msg) = match &r {
            Ok(m) => ("PASS", m),
            Err(m) => ("FAIL", m),
        };
        if r.is_err() {
            failures += 1;
        }
        println!("criterion {n} {tag} {name}: {msg} [{secs:.1} s]");
    };
    report(1, "gradient exactness", &mut gradient_exactness);
    report(2, "architecture fidelity", &mut architecture_fidelity);
    report(3, "denoising gain", &mut || denoising_gain(&mut model));
    report(4, "closed-loop direction", &mut || closed_loop_direction(&model));
    report(5, "statistics validation", &mut statistics_validation);
    report(6, "real-time budget", &mut || realtime_budget(&model));
    report(7, "blending and interpolation", &mut blending_arithmetic);
    report(8, "determinism", &mut determinism);
    println!(
        "acceptance: {} of 8 criteria passed in {:.0} s",
        8 - failures,
        total.elapsed().as_secs_f64()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
