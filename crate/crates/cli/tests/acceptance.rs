// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rfa_core::dct::{dct2, idct2};
use rfa_core::envelope::EnvelopeKind;
use rfa_core::features::combined_features;
use rfa_core::models::smo::KKT_TOLERANCE;
use rfa_core::models::svm::{svm_train_with_solution, Kernel, SvmParams, SvrParams};
use rfa_core::models::{
    classification_metrics, dt_train, pearson, regression_metrics, rmse, svr_train, MetricSet, ModelFamily, Task,
    TreeParams,
};
use rfa_core::pipeline::{extract_features, load_prepared, spectrogram_of, train};
use rfa_core::signal_io::write_wav_pcm16;
use rfa_core::synth::{gen_am_tone, gen_pulse_train, gen_two_class_corpus, AmTone, CorpusSpec, F0Pattern, PulseTrain};
use rfa_core::{AudioBuffer, RhythmSpectrogram, RunConfig};

type Outcome = (bool, String);

fn am_tone(mod_hz: f64, duration_s: f64) -> AudioBuffer {
    gen_am_tone(&AmTone {
        carrier_hz: 200.0,
        mod_hz,
        depth: 0.8,
        duration_s,
        sample_rate_hz: 16000,
    })
    .unwrap()
}

fn vibrato(duration_s: f64) -> AudioBuffer {
    gen_pulse_train(&PulseTrain {
        pattern: F0Pattern::Vibrato {
            base_hz: 150.0,
            vibrato_hz: 2.0,
            vibrato_depth_hz: 20.0,
        },
        duration_s,
        sample_rate_hz: 16000,
        gaps: None,
    })
    .unwrap()
}

fn hits(spec: &RhythmSpectrogram, target: f64, tol: f64) -> usize {
    spec.slice_argmax_hz().iter().filter(|f| (*f - target).abs() <= tol).count()
}

fn am_recovery() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::default();
    let mut ok = true;
    let mut detail = Vec::new();
    for mod_hz in [1.5, 3.0, 5.0, 8.0] {
        let path = dir.path().join(format!("am_{mod_hz}.wav"));
        write_wav_pcm16(&path, &am_tone(mod_hz, 60.0)).unwrap();
        let t0 = Instant::now();
        let audio = load_prepared(&path, None, &cfg.speaker).unwrap();
        let spec = spectrogram_of(&audio, EnvelopeKind::Am, &cfg).unwrap();
        let secs = t0.elapsed().as_secs_f64();
        let h = hits(&spec, mod_hz, 0.2);
        ok &= spec.n_slices() == 100 && h >= 95 && secs < 5.0;
        detail.push(format!("{mod_hz} Hz: {h}/100 in {secs:.2} s"));
    }
    (ok, detail.join(", "))
}

fn fm_recovery() -> Outcome {
    let cfg = RunConfig::default();
    let spec = spectrogram_of(&vibrato(60.0), EnvelopeKind::Fm, &cfg).unwrap();
    let h = hits(&spec, 2.0, 0.3);
    (h >= 90, format!("{h}/100 slices within 0.3 Hz of 2 Hz"))
}

fn shape_invariants() -> Outcome {
    let cfg = RunConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise: Vec<f64> = (0..16000 * 7).map(|_| rng.random_range(-0.5..0.5)).collect();
    let cases: Vec<(&str, AudioBuffer, EnvelopeKind)> = vec![
        ("am 5.0 s", am_tone(4.0, 5.0), EnvelopeKind::Am),
        ("am 5.01 s", am_tone(2.5, 5.01), EnvelopeKind::Am),
        ("am 30 s", am_tone(7.0, 30.0), EnvelopeKind::Am),
        ("am 17.9 s", am_tone(6.0, 17.9), EnvelopeKind::Am),
        ("noise 7 s", AudioBuffer::new(noise, 16000, "noise").unwrap(), EnvelopeKind::Am),
        ("fm 5.0 s", vibrato(5.0), EnvelopeKind::Fm),
        ("fm 5.01 s", vibrato(5.01), EnvelopeKind::Fm),
        ("fm 30 s", vibrato(30.0), EnvelopeKind::Fm),
    ];
    let mut bad = Vec::new();
    for (name, audio, kind) in &cases {
        let spec = spectrogram_of(audio, *kind, &cfg).unwrap();
        let f = spec.freq_axis_hz();
        let axis_ok = f.iter().all(|&v| v > 0.0 && v <= 10.0) && f.windows(2).all(|w| w[1] > w[0]);
        let max_ok = spec
            .magnitudes()
            .iter()
            .all(|row| row.iter().copied().fold(f64::MIN, f64::max) == 1.0);
        if spec.n_slices() != 100 || !axis_ok || !max_ok {
            bad.push(*name);
        }
    }
    (
        bad.is_empty(),
        format!("{} inputs checked, failing: {:?}", cases.len(), bad),
    )
}

fn feature_dims() -> Outcome {
    let cfg = RunConfig::default();
    let am = spectrogram_of(&am_tone(3.0, 10.0), EnvelopeKind::Am, &cfg).unwrap();
    let fm = spectrogram_of(&vibrato(10.0), EnvelopeKind::Fm, &cfg).unwrap();
    let mut dims = Vec::new();
    for c in [2, 3, 4] {
        let v = combined_features(&am, &fm, 6, c, &cfg.features.picking).unwrap();
        dims.push(v.values.len());
    }
    (dims == [20, 30, 44], format!("N=6, C=2/3/4 -> {dims:?}"))
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows).map(|_| (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn dct_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for (r, c) in [(8, 8), (100, 200)] {
        for _ in 0..3 {
            let m = random_matrix(&mut rng, r, c);
            let back = idct2(&dct2(&m));
            for (a, b) in m.iter().flatten().zip(back.iter().flatten()) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    let mut single = true;
    for (r, c) in [(8, 8), (100, 200)] {
        let coeffs = dct2(&vec![vec![3.5; c]; r]);
        let dc = 3.5 * ((r * c) as f64).sqrt();
        single &= (coeffs[0][0] - dc).abs() < 1e-9 * dc;
        let nonzero = coeffs.iter().flatten().filter(|v| v.abs() > 1e-9 * dc).count();
        single &= nonzero == 1;
    }
    (
        worst < 1e-9 && single,
        format!("max round-trip error {worst:.2e}, constant matrix single coefficient: {single}"),
    )
}

/// Brute-force dual solver: projected gradient ascent on
/// `sum(a) - a'Qa/2` over `0 <= a <= C`, `y'a = 0`.
fn projected_gradient_svm(k: &[Vec<f64>], y: &[f64], c: f64, iters: usize) -> (Vec<f64>, f64) {
    let n = y.len();
    let q: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| y[i] * y[j] * k[i][j]).collect()).collect();
    // Largest eigenvalue of Q by power iteration bounds the step size.
    let mut v = vec![1.0; n];
    let mut lambda = 1.0;
    for _ in 0..500 {
        let w: Vec<f64> = (0..n).map(|i| (0..n).map(|j| q[i][j] * v[j]).sum()).collect();
        lambda = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if lambda == 0.0 {
            break;
        }
        v = w.iter().map(|x| x / lambda).collect();
    }
    let step = 1.0 / lambda.max(1e-12);
    let project = |u: &[f64]| -> Vec<f64> {
        let h = |l: f64| -> f64 { (0..n).map(|i| y[i] * (u[i] - l * y[i]).clamp(0.0, c)).sum() };
        let bound = u.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
        let (mut lo, mut hi) = (-bound, bound);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let l = 0.5 * (lo + hi);
        (0..n).map(|i| (u[i] - l * y[i]).clamp(0.0, c)).collect()
    };
    let mut a = vec![0.0; n];
    for _ in 0..iters {
        let g: Vec<f64> = (0..n).map(|i| 1.0 - (0..n).map(|j| q[i][j] * a[j]).sum::<f64>()).collect();
        let u: Vec<f64> = (0..n).map(|i| a[i] + step * g[i]).collect();
        a = project(&u);
    }
    // Bias from margin support vectors, else the midpoint of the feasible range.
    let f = |i: usize| (0..n).map(|j| a[j] * y[j] * k[i][j]).sum::<f64>();
    let tol = 1e-6 * c;
    let free: Vec<usize> = (0..n).filter(|&i| a[i] > tol && a[i] < c - tol).collect();
    let b = if free.is_empty() {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..n {
            let r = y[i] - f(i);
            let at_zero = a[i] <= tol;
            // y(f + b) >= 1 at zero, <= 1 at C.
            if (y[i] > 0.0) == at_zero {
                lo = lo.max(r);
            } else {
                hi = hi.min(r);
            }
        }
        0.5 * (lo + hi)
    } else {
        free.iter().map(|&i| y[i] - f(i)).sum::<f64>() / free.len() as f64
    };
    (a, b)
}

fn svm_problem(seed: u64, flips: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let mut x = Vec::new();
    let mut y = Vec::new();
    while x.len() < 20 {
        let p: Vec<f64> = vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let s = w[0] * p[0] + w[1] * p[1] + 0.1;
        if s.abs() < 0.1 {
            continue;
        }
        y.push(s.signum());
        x.push(p);
    }
    for i in 0..flips {
        y[i * 7 % 20] *= -1.0;
    }
    if y.iter().all(|&v| v == y[0]) {
        y[0] = -y[0];
    }
    (x, y)
}

fn ml_oracles() -> Outcome {
    let mut notes = Vec::new();
    // SVM against the projected-gradient oracle.
    let configs = [
        (Kernel::Linear, 1.0, 0),
        (Kernel::Linear, 100.0, 0),
        (Kernel::Rbf { gamma: 0.5 }, 10.0, 0),
        (Kernel::Rbf { gamma: 2.0 }, 1.0, 3),
        (Kernel::Linear, 0.5, 3),
    ];
    let mut agree = 0;
    let mut total = 0;
    let mut probe_agree = 0;
    let mut probe_total = 0;
    for seed in 0..4u64 {
        for &(kernel, c, flips) in &configs {
            let (x, y) = svm_problem(seed, flips);
            let (model, _) = svm_train_with_solution(&x, &y, SvmParams { c, kernel }).unwrap();
            let k: Vec<Vec<f64>> = x.iter().map(|a| x.iter().map(|b| kernel.eval(a, b)).collect()).collect();
            let (alpha, b) = projected_gradient_svm(&k, &y, c, 100_000);
            let oracle = |p: &[f64]| (0..x.len()).map(|j| alpha[j] * y[j] * kernel.eval(&x[j], p)).sum::<f64>() + b;
            let sign = |v: f64| if v >= 0.0 { 1 } else { -1 };
            for p in &x {
                total += 1;
                agree += usize::from(sign(model.decision(p).unwrap()) == sign(oracle(p)));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            for _ in 0..50 {
                let p = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
                probe_total += 1;
                probe_agree += usize::from(sign(model.decision(&p).unwrap()) == sign(oracle(&p)));
            }
        }
    }
    let mut ok = agree == total && probe_agree == probe_total;
    notes.push(format!(
        "SVM vs oracle: {agree}/{total} training, {probe_agree}/{probe_total} probe signs (KKT tol {KKT_TOLERANCE})"
    ));

    // SVR on an exact line.
    let xs: Vec<Vec<f64>> = (0..=40).map(|i| vec![i as f64 / 4.0]).collect();
    let ys: Vec<f64> = xs.iter().map(|r| 2.0 * r[0] + 1.0).collect();
    let svr = svr_train(
        &xs,
        &ys,
        SvrParams {
            c: 100.0,
            epsilon: 0.01,
            kernel: Kernel::Linear,
        },
    )
    .unwrap();
    let dev = svr
        .predict(&xs)
        .unwrap()
        .iter()
        .zip(&ys)
        .fold(0.0f64, |m, (p, t)| m.max((p - t).abs()));
    ok &= dev <= 0.05;
    notes.push(format!("SVR y=2x+1 max deviation {dev:.4}"));

    // Memorizing tree.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xt: Vec<Vec<f64>> = (0..60).map(|_| (0..3).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let yt: Vec<f64> = (0..60).map(|_| rng.random_range(0.0..30.0)).collect();
    let tree = dt_train(
        &xt,
        &yt,
        TreeParams {
            max_depth: None,
            min_samples_leaf: 1,
        },
    )
    .unwrap();
    let tree_rmse = rmse(&yt, &tree.predict(&xt).unwrap()).unwrap();
    ok &= tree_rmse == 0.0;
    notes.push(format!("DT training RMSE {tree_rmse}"));

    // Hand-computed fixtures.
    let mut fixture_err: f64 = 0.0;
    let c1 = classification_metrics(&[1.0, -1.0, 1.0, -1.0], &[1.0, 1.0, -1.0, -1.0]).unwrap();
    fixture_err = fixture_err.max((c1.accuracy - 0.5).abs()).max((c1.f1 - 0.5).abs());
    let c2 = classification_metrics(&[1.0, 1.0, 1.0, -1.0], &[1.0, 1.0, -1.0, -1.0]).unwrap();
    fixture_err = fixture_err.max((c2.accuracy - 0.75).abs()).max((c2.f1 - 0.8).abs());
    let t = [1.0, 2.0, 3.0, 4.0];
    let p = [1.5, 2.0, 2.5, 5.0];
    let r = regression_metrics(&t, &p).unwrap();
    fixture_err = fixture_err
        .max((r.rmse - 0.375f64.sqrt()).abs())
        .max((r.pearson_rho.unwrap() - 5.5 / (5.0f64 * 7.25).sqrt()).abs());
    let anti = pearson(&t, &[4.0, 3.0, 2.0, 1.0]).unwrap();
    fixture_err = fixture_err.max((anti + 1.0).abs());
    ok &= fixture_err <= 1e-12;
    notes.push(format!("metric fixtures max error {fixture_err:.1e}"));
    (ok, notes.join("; "))
}

fn desk_experiment() -> Outcome {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::default();
    let manifest = gen_two_class_corpus(&CorpusSpec::default(), dir.path()).unwrap();
    let ex = extract_features(&manifest, &cfg).unwrap();
    let layout = cfg.features.layout().unwrap();
    let clf = train(&ex.table, layout, Task::Classification, ModelFamily::Svm, &cfg, String::new()).unwrap();
    let reg = train(&ex.table, layout, Task::Regression, ModelFamily::Svr, &cfg, String::new()).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let acc = match &clf.cv_report.summary {
        MetricSet::Classification(m) => m.accuracy,
        _ => f64::NAN,
    };
    let (rho, err) = match &reg.cv_report.summary {
        MetricSet::Regression(m) => (m.pearson_rho.unwrap_or(f64::NAN), m.rmse),
        _ => (f64::NAN, f64::NAN),
    };
    let ok = ex.table.rows.len() == 40 && clf.cv_report.folds.len() == 5 && acc >= 0.9 && rho >= 0.8 && secs < 180.0;
    (
        ok,
        format!(
            "{} utterances, CV accuracy {acc:.3}, SVR rho {rho:.3} (RMSE {err:.2}), {secs:.1} s",
            ex.table.rows.len()
        ),
    )
}

fn rfa(dir: &Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_rfa"))
        .current_dir(dir)
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn cli_run(dir: &Path, jobs: &str) -> Vec<(String, Vec<u8>)> {
    let steps: [&[&str]; 7] = [
        &["--seed", "7", "synth", "corpus", "--out-dir", "corpus", "--n-per-class", "8"],
        &["--jobs", jobs, "features", "--manifest", "corpus/manifest.csv", "--out", "feats.csv"],
        &["--seed", "7", "--jobs", jobs, "train", "--features", "feats.csv", "--task", "clf", "--model", "svm", "--out", "clf.json"],
        &["--seed", "7", "--jobs", jobs, "train", "--features", "feats.csv", "--task", "reg", "--model", "dt", "--out", "dt.json"],
        &["synth", "am-tone", "--mod-hz", "3", "--duration-s", "12", "--out", "tone.wav"],
        &["spectrogram", "--wav", "tone.wav", "--out-dir", "spec"],
        &["render", "--input", "spec/tone_am.csv", "--out", "tone_am.png"],
    ];
    for s in steps {
        assert!(rfa(dir, s), "rfa {s:?} failed");
    }
    assert!(rfa(dir, &["render", "--input", "spec/tone_fm.csv", "--out", "tone_fm.png"]));
    [
        "corpus/manifest.csv",
        "feats.csv",
        "feats.csv.meta.json",
        "clf.json",
        "clf.json.report.json",
        "dt.json",
        "spec/tone_am.csv",
        "spec/tone_fm.csv",
        "tone_am.png",
        "tone_fm.png",
    ]
    .iter()
    .map(|f| (f.to_string(), std::fs::read(dir.join(f)).unwrap()))
    .collect()
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = cli_run(a.path(), "1");
    let second = cli_run(b.path(), "4");
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    (
        differing.is_empty(),
        format!("{} outputs compared across two runs (1 and 4 threads), differing: {differing:?}", first.len()),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("AM rhythm-formant recovery", am_recovery),
        ("FM rhythm-formant recovery", fm_recovery),
        ("spectrogram shape invariants", shape_invariants),
        ("feature dimensionality", feature_dims),
        ("2D-DCT correctness", dct_correctness),
        ("ML oracle equivalence", ml_oracles),
        ("desk-scale experiment", desk_experiment),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (ok, detail) = match std::panic::catch_unwind(run) {
            Ok(r) => r,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        failed += usize::from(!ok);
        println!("criterion {} {name}: {} | {detail}", i + 1, if ok { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
