//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.
//!
//! Trained networks are cached under the cargo test scratch directory, so
//! only the first run pays for training.

use std::path::{Path, PathBuf};
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use foldcast::config::RunConfig;
use foldcast::datagen::{read_dataset, write_dataset, ClassLabel, Dataset, Sample};
use foldcast::eval::Verdict;
use foldcast::experiment::{
    band_test_sets, dataset_accuracy, evaluate_on, test_datasets, train_cached, TargetEval, TrainedModel,
};
use foldcast::nn::{forward, loss_and_grads, read_checkpoint, write_checkpoint, NetShape, NetworkParams, TENSOR_NAMES};
use foldcast::preprocess::{minmax_scale, moving_mean, transform_signals, PipelineKind, PipelineSpec};
use foldcast::systems::{
    integrate, locate_fold_numeric, reference_fold, rk4_step, NldParams, StopRule, SystemKind, SystemModel,
    SystemParams,
};

struct Report {
    failed: Vec<String>,
}

impl Report {
    fn record(&mut self, name: &str, ok: bool, detail: &str) {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed.push(name.to_owned());
        }
    }
}

fn cache_root() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-cache")
}

fn log(line: &str) {
    eprintln!("  {line}");
}

// ---------------------------------------------------------------- folds

fn fold_oracles(r: &mut Report) {
    let start = Instant::now();
    let nld = |c1| SystemParams::Nld(NldParams { c1 });
    let cases = [
        ("nld c1=0.1", nld(0.1), (0.3, 0.6), 0.02),
        ("nld c1=0.5", nld(0.5), (1.5, 3.0), 0.02),
        ("mob", SystemParams::default_for(SystemKind::MassOnBelt), (1.6, 2.1), 0.02),
        ("vdp", SystemParams::default_for(SystemKind::VdpDuffing), (0.04, 0.09), 0.05),
        ("pnp", SystemParams::default_for(SystemKind::PitchPlunge), (0.85, 0.97), 0.015),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, params, bracket, tol) in cases {
        let reference = reference_fold(&params).unwrap();
        match locate_fold_numeric(&params, bracket, 1e-3 * reference) {
            Ok(found) => {
                let rel = (found - reference).abs() / reference;
                ok &= rel <= tol;
                parts.push(format!("{name} {found:.4} vs {reference:.4} ({:.2}%)", 100.0 * rel));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{name} failed: {e}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs <= 600.0;
    r.record("fold oracles", ok, &format!("{}; {secs:.0} s", parts.join(", ")));
}

// ------------------------------------------------------------ gradients

fn loss_and_relu_pattern(params: &NetworkParams<f64>, batch: &[(Vec<f64>, ClassLabel)]) -> (f64, Vec<bool>) {
    let mut loss = 0.0;
    let mut pattern = Vec::new();
    for (x, label) in batch {
        let (probs, cache) = forward(params, x).unwrap();
        loss -= probs[label.index()].ln();
        let (a, b) = cache.relu_inputs();
        pattern.extend(a.iter().chain(b).map(|&v| v > 0.0));
    }
    (loss / batch.len() as f64, pattern)
}

fn central_difference(
    params: &NetworkParams<f64>,
    batch: &[(Vec<f64>, ClassLabel)],
    at: (usize, usize),
    h: f64,
) -> (f64, Vec<bool>, Vec<bool>) {
    let mut plus = params.clone();
    plus.tensors_mut()[at.0].data[at.1] += h;
    let mut minus = params.clone();
    minus.tensors_mut()[at.0].data[at.1] -= h;
    let (lp, pp) = loss_and_relu_pattern(&plus, batch);
    let (lm, pm) = loss_and_relu_pattern(&minus, batch);
    ((lp - lm) / (2.0 * h), pp, pm)
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

struct GradientCheck {
    /// Against the Richardson-extrapolated central difference.
    worst: f64,
    worst_at: String,
    /// Against the plain central difference.
    worst_plain: f64,
    checked: usize,
    skipped: usize,
}

/// Compares analytic gradients of one random network with central
/// differences at step `h`, skipping entries whose ±h perturbation moves a
/// ReLU input across zero.
fn gradient_instance(seed: u64, h: f64) -> GradientCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = NetShape {
        kernel: rng.gen_range(2..=6),
        filters1: rng.gen_range(2..=5),
        filters2: rng.gen_range(2..=5),
    };
    let mut params = NetworkParams::<f64>::init(shape, &mut rng);
    for t in params.tensors_mut() {
        for v in &mut t.data {
            *v += rng.gen_range(-0.5..0.5);
        }
    }
    let batch: Vec<(Vec<f64>, ClassLabel)> = (0..3)
        .map(|_| {
            let x = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (x, ClassLabel::from_index(rng.gen_range(0..3)).unwrap())
        })
        .collect();
    let refs: Vec<(&[f64], ClassLabel)> = batch.iter().map(|(x, l)| (x.as_slice(), *l)).collect();
    let (_, grads) = loss_and_grads(&params, &refs).unwrap();
    let (_, base) = loss_and_relu_pattern(&params, &batch);

    let mut out = GradientCheck {
        worst: 0.0,
        worst_at: String::new(),
        worst_plain: 0.0,
        checked: 0,
        skipped: 0,
    };
    for (ti, name) in TENSOR_NAMES.iter().enumerate() {
        for j in 0..params.tensors()[ti].len() {
            let (d1, pp, pm) = central_difference(&params, &batch, (ti, j), h);
            if pp != base || pm != base {
                out.skipped += 1;
                continue;
            }
            let (d2, _, _) = central_difference(&params, &batch, (ti, j), 0.5 * h);
            // cancels the h² term; a two-channel layer norm is steep enough
            // for it to dominate at this step
            let fd = (4.0 * d2 - d1) / 3.0;
            let a = grads.tensors()[ti].data[j];
            out.worst_plain = out.worst_plain.max(relative(a, d1));
            let rel = relative(a, fd);
            if rel >= out.worst {
                out.worst = rel;
                out.worst_at = format!("{name}[{j}]");
            }
            out.checked += 1;
        }
    }
    out
}

fn gradient_suite(r: &mut Report) {
    let runs: Vec<GradientCheck> = (0..5).map(|seed| gradient_instance(seed, 1e-4)).collect();
    let worst = runs.iter().max_by(|a, b| a.worst.total_cmp(&b.worst)).unwrap();
    let plain = runs.iter().map(|g| g.worst_plain).fold(0.0, f64::max);
    let checked: usize = runs.iter().map(|g| g.checked).sum();
    let skipped: usize = runs.iter().map(|g| g.skipped).sum();
    r.record(
        "gradient check",
        worst.worst <= 1e-4 && checked > 0,
        &format!(
            "worst relative error {:.2e} at {} (plain central difference {plain:.2e}); \
             {checked} entries checked, {skipped} at ReLU kinks skipped",
            worst.worst, worst.worst_at
        ),
    );
}

// ----------------------------------------------------------- integrator

fn integrator(r: &mut Report) {
    // c1 = 0 is outside the damped family; a vanishing c1 is the harmonic oscillator
    let m = SystemModel::new(SystemParams::Nld(NldParams { c1: 1e-300 }), 0.0).unwrap();
    let horizon = 10.0;
    let err = |dt: f64| {
        let mut s = [1.0, 0.0];
        let mut out = [0.0; 2];
        for _ in 0..(horizon / dt).round() as usize {
            rk4_step(&m, &s, dt, &mut out);
            s = out;
        }
        (s[0] - horizon.cos()).hypot(s[1] + horizon.sin())
    };
    let dts = [0.08, 0.04, 0.02, 0.01];
    let e: Vec<f64> = dts.iter().map(|&h| err(h)).collect();
    // least-squares slope of log error against log step
    let xs: Vec<f64> = dts.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();

    let stop = StopRule {
        max_time: 200.0 * std::f64::consts::PI,
        ..StopRule::default()
    };
    let tr = integrate(&m, &[1.0, 0.0], 0.01, &stop).unwrap();
    let drift = (0..tr.n_steps())
        .map(|i| {
            let s = tr.state(i);
            (s[0] * s[0] + s[1] * s[1] - 1.0).abs()
        })
        .fold(0.0, f64::max);
    r.record(
        "rk4 order and energy",
        (slope - 4.0).abs() <= 0.3 && drift < 1e-8,
        &format!("slope {slope:.3}, max energy drift over 100 periods {drift:.2e}"),
    );
}

// ------------------------------------------------------------ pipelines

fn damped(zeta: f64, omega: f64, phase: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    (0..n)
        .map(|i| {
            let t = i as f64 * 0.01;
            let env = (-zeta * t).exp();
            let th = omega * t + phase;
            (env * th.cos(), -env * (th.sin() + zeta / omega * th.cos()))
        })
        .unzip()
}

fn run_property<S: Strategy>(
    name: &str,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| format!("{name}: {e}"))
}

fn random_dataset(kind: PipelineKind, len: usize, n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|_| {
            let system = SystemKind::ALL[rng.gen_range(0..4)];
            Sample {
                channel: (0..len).map(|_| rng.gen::<f32>() * 2.0 - 1.0).collect(),
                label: ClassLabel::from_index(rng.gen_range(0..3)).unwrap(),
                system,
                param: rng.gen_range(-10.0..10.0),
                seed: rng.gen(),
                ic: (0..system.state_dim()).map(|_| rng.gen_range(-5.0..5.0)).collect(),
            }
        })
        .collect();
    Dataset {
        pipeline: PipelineSpec {
            resample_len: len,
            ..PipelineSpec::new(kind)
        },
        samples,
    }
}

fn pipeline_properties(r: &mut Report) {
    let dir = tempfile::tempdir().unwrap();
    let polar = [
        PipelineKind::Polar,
        PipelineKind::PolarMovMean,
        PipelineKind::PolarLog,
        PipelineKind::PolarLogMovMean,
    ];
    let results = [
        run_property(
            "scale invariance",
            (1e-3f64..1e3, 0.02f64..0.3, 0.5f64..3.0, 0usize..4),
            |(k, zeta, omega, ix)| {
                let (q, qd) = damped(zeta, omega, 0.0, 3000);
                let spec = PipelineSpec::new(polar[ix]);
                let a = transform_signals(&q, &qd, &spec).unwrap();
                let qk: Vec<f64> = q.iter().map(|v| v * k).collect();
                let qdk: Vec<f64> = qd.iter().map(|v| v * k).collect();
                let b = transform_signals(&qk, &qdk, &spec).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
                }
                Ok(())
            },
        ),
        run_property(
            "frequency blindness",
            (0.01f64..0.05, 0.8f64..3.0, 0.8f64..3.0, 0.0f64..std::f64::consts::TAU, 0usize..2),
            |(zeta, w1, w2, phase, ix)| {
                let n = (10.0 / zeta / 0.01) as usize;
                let spec = PipelineSpec::new(polar[ix]);
                let (q1, qd1) = damped(zeta, w1, phase, n);
                let (q2, qd2) = damped(zeta, w2, phase, n);
                let a = transform_signals(&q1, &qd1, &spec).unwrap();
                let b = transform_signals(&q2, &qd2, &spec).unwrap();
                let rms = (a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt();
                prop_assert!(rms < 0.02, "rms {}", rms);
                Ok(())
            },
        ),
        run_property(
            "min-max range",
            prop::collection::vec(-1e6f64..1e6, 2..300),
            |s| {
                prop_assume!(s.iter().any(|&v| v != s[0]));
                let out = minmax_scale(&s).unwrap();
                let lo = out.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert_eq!((lo, hi), (-1.0, 1.0));
                Ok(())
            },
        ),
        run_property(
            "moving-mean constants",
            (-1e6f64..1e6, 1usize..2000, 0.001f64..0.49),
            |(c, n, frac)| {
                let s = vec![c; n];
                prop_assert_eq!(moving_mean(&s, frac), s);
                Ok(())
            },
        ),
        run_property(
            "dataset round trip",
            (0usize..5, 1usize..64, 0usize..6, any::<u64>()),
            |(ix, len, n, seed)| {
                let ds = random_dataset(PipelineKind::ALL[ix], len, n, seed);
                let path = dir.path().join("ds.fbds");
                write_dataset(&ds, &path).unwrap();
                prop_assert_eq!(read_dataset(&path).unwrap(), ds);
                Ok(())
            },
        ),
        run_property(
            "checkpoint round trip",
            (1usize..8, 1usize..6, 1usize..6, any::<u64>()),
            |(kernel, filters1, filters2, seed)| {
                let shape = NetShape { kernel, filters1, filters2 };
                let params = NetworkParams::<f32>::init(shape, &mut ChaCha8Rng::seed_from_u64(seed));
                let path = dir.path().join("m.fbnn");
                write_checkpoint(&params, &path).unwrap();
                prop_assert_eq!(read_checkpoint(&path).unwrap(), params);
                Ok(())
            },
        ),
    ];
    let failures: Vec<String> = results.into_iter().filter_map(Result::err).collect();
    let detail = if failures.is_empty() {
        "6 properties x 1000 cases".to_owned()
    } else {
        failures.join("; ")
    };
    r.record("pipeline properties", failures.is_empty(), &detail);
}

// ------------------------------------------------------------- training

fn trained(cfg: &RunConfig, pipeline: PipelineKind) -> TrainedModel {
    train_cached(cfg, pipeline, &cache_root(), &mut |l| log(l)).unwrap()
}

fn evaluate(model: &TrainedModel, cfg: &RunConfig, kind: SystemKind) -> TargetEval {
    let (system, mut grids) = test_datasets(cfg, kind, &[model.pipeline]).unwrap();
    evaluate_on(&model.params, &system, &grids.remove(0)).unwrap()
}

fn training_criteria(r: &mut Report) {
    let cfg = RunConfig::default();
    let plmm = trained(&cfg, PipelineKind::PolarLogMovMean);
    let val = plmm.final_val_accuracy();
    r.record(
        "training validation accuracy",
        val >= 0.99,
        &format!("Pol-log-MovMean {:.2}% on the held-out split", 100.0 * val),
    );

    // accuracy on runs drawn inside the class bands; the uniform grid also covers the unlabelled gaps
    let nld = SystemKind::NonlinearDamping;
    let models = [
        plmm.clone(),
        trained(&cfg, PipelineKind::PolarLog),
        trained(&cfg, PipelineKind::MinMax),
    ];
    let pipelines: Vec<PipelineKind> = models.iter().map(|m| m.pipeline).collect();
    let sets = band_test_sets(&cfg, &pipelines).unwrap();
    let n_traj = sets[0].len();
    let band: Vec<f64> = models.iter().zip(&sets).map(|(m, ds)| dataset_accuracy(&m.params, ds).unwrap()).collect();
    let grid: Vec<f64> = models.iter().map(|m| evaluate(m, &cfg, nld).accuracy).collect();
    let (a, b, c) = (band[0], band[1], band[2]);
    r.record(
        "extrapolation to c1 = 0.1",
        n_traj >= 300 && a >= 0.95 && b >= 0.95 && c <= 0.85 && a - c >= 0.15,
        &format!(
            "{n_traj} band-sampled runs: Pol-log-MovMean {:.1}%, Pol-log {:.1}%, Min-max {:.1}% \
             (uniform grid {:.1}% / {:.1}% / {:.1}%)",
            100.0 * a,
            100.0 * b,
            100.0 * c,
            100.0 * grid[0],
            100.0 * grid[1],
            100.0 * grid[2]
        ),
    );

    let targets = [SystemKind::MassOnBelt, SystemKind::VdpDuffing, SystemKind::PitchPlunge];
    let mut passes = 0;
    let mut parts = Vec::new();
    for (i, train_seed) in [None, Some(2), Some(3)].into_iter().enumerate() {
        if passes >= 2 || i - passes >= 2 {
            break;
        }
        let seeded = RunConfig { train_seed, ..cfg.clone() };
        let model = if i == 0 {
            plmm.clone()
        } else {
            trained(&seeded, PipelineKind::PolarLogMovMean)
        };
        let verdicts: Vec<Verdict> = targets.iter().map(|&k| evaluate(&model, &seeded, k).verdict).collect();
        if verdicts.iter().all(|&v| v == Verdict::Good) {
            passes += 1;
        }
        let seed = seeded.train_config().seed;
        let names: Vec<String> = verdicts.iter().map(|v| v.to_string()).collect();
        parts.push(format!("seed {seed}: {}", names.join("/")));
    }
    r.record(
        "transfer verdicts",
        passes >= 2,
        &format!("{} (mob/vdp/pnp); good on all three for {passes} seeds", parts.join(", ")),
    );
}

fn main() {
    let mut r = Report { failed: Vec::new() };
    fold_oracles(&mut r);
    gradient_suite(&mut r);
    integrator(&mut r);
    pipeline_properties(&mut r);
    training_criteria(&mut r);
    if !r.failed.is_empty() {
        println!("{} criteria failed: {}", r.failed.len(), r.failed.join(", "));
        std::process::exit(1);
    }
    println!("all criteria passed");
}
