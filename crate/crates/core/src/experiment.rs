//! End-to-end runs: cached training per pipeline, evaluation on the test
//! grids, and the summary table.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::datagen::{
    sample_test_grid_multi, sample_training_set, split, DatagenError, Dataset, IcBox,
};
use crate::eval::{
    build_diagram, combined_verdict, emit_scatter_svg, summary_table, write_diagram_csv,
    CellResult, EvalError, PredictionDiagram, SummaryTable, TableCell, Verdict, VerdictThresholds,
};
use crate::nn::{
    predict, read_checkpoint, train, write_checkpoint, write_history, EpochRecord, NetworkParams,
    NnError,
};
use crate::preprocess::{PipelineKind, PipelineSpec};
use crate::systems::{SystemKind, SystemParams};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Datagen {
        context: String,
        #[source]
        source: DatagenError,
    },
    #[error("{context}: {source}")]
    Nn {
        context: String,
        #[source]
        source: NnError,
    },
    #[error("{context}: {source}")]
    Eval {
        context: String,
        #[source]
        source: EvalError,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// First 16 hex digits of the SHA-256 of `text`.
pub fn short_hash(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

/// Cache directory of the model trained for `pipeline` under `cfg`.
pub fn model_dir(cfg: &RunConfig, pipeline: PipelineKind, cache_root: &Path) -> PathBuf {
    let key = short_hash(&cfg.model_fingerprint(pipeline));
    cache_root.join(format!("{}-{key}", pipeline.name()))
}

pub fn training_dataset(cfg: &RunConfig, pipeline: PipelineKind) -> Result<Dataset, ExperimentError> {
    sample_training_set(&cfg.sampling_plan(), &PipelineSpec::new(pipeline)).map_err(|source| {
        ExperimentError::Datagen {
            context: format!("generating the {} training set", pipeline.label()),
            source,
        }
    })
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub pipeline: PipelineKind,
    pub params: NetworkParams<f32>,
    pub history: Vec<EpochRecord>,
    pub dir: PathBuf,
    /// Loaded from the cache rather than trained in this call.
    pub cached: bool,
}

impl TrainedModel {
    pub fn final_val_accuracy(&self) -> f64 {
        self.history.last().map_or(0.0, |r| r.val_accuracy)
    }
}

pub fn read_history(path: &Path) -> Result<Vec<EpochRecord>, ExperimentError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| ExperimentError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    })?;
    let mut out = Vec::new();
    for rec in r.deserialize::<(usize, f64, f64)>() {
        let (epoch, train_loss, val_accuracy) = rec.map_err(|e| ExperimentError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        })?;
        out.push(EpochRecord {
            epoch,
            train_loss,
            val_accuracy,
        });
    }
    Ok(out)
}

const MODEL_FILE: &str = "model.fbnn";
const HISTORY_FILE: &str = "history.csv";

/// Trains `dataset` (split into train/validation by the config) and returns
/// the final parameters and history.
pub fn train_on(
    cfg: &RunConfig,
    dataset: &Dataset,
    log: &mut dyn FnMut(&str),
) -> Result<(NetworkParams<f32>, Vec<EpochRecord>), ExperimentError> {
    let label = dataset.pipeline.kind.label();
    let (tr, va) = split(dataset, cfg.val_fraction, cfg.split_seed()).map_err(|source| {
        ExperimentError::Datagen {
            context: format!("splitting the {label} training set"),
            source,
        }
    })?;
    train::<f32>(&tr, &va, &cfg.train_config(), |r| {
        log(&format!(
            "{label}: epoch {:>2}  loss {:.5}  val accuracy {:.4}",
            r.epoch, r.train_loss, r.val_accuracy
        ))
    })
    .map_err(|source| ExperimentError::Nn {
        context: format!("training the {label} network"),
        source,
    })
}

/// Returns the cached model for this config and pipeline, training and
/// storing it first if needed.
pub fn train_cached(
    cfg: &RunConfig,
    pipeline: PipelineKind,
    cache_root: &Path,
    log: &mut dyn FnMut(&str),
) -> Result<TrainedModel, ExperimentError> {
    let dir = model_dir(cfg, pipeline, cache_root);
    let (model_path, history_path) = (dir.join(MODEL_FILE), dir.join(HISTORY_FILE));
    if model_path.is_file() && history_path.is_file() {
        let params = read_checkpoint(&model_path).map_err(|source| ExperimentError::Nn {
            context: format!("reading {}", model_path.display()),
            source,
        })?;
        let history = read_history(&history_path)?;
        log(&format!("{}: using cached model {}", pipeline.label(), dir.display()));
        return Ok(TrainedModel {
            pipeline,
            params,
            history,
            dir,
            cached: true,
        });
    }

    log(&format!("{}: generating training set", pipeline.label()));
    let dataset = training_dataset(cfg, pipeline)?;
    let (params, history) = train_on(cfg, &dataset, log)?;

    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let nn_err = |p: &Path| {
        let context = format!("writing {}", p.display());
        move |source| ExperimentError::Nn { context, source }
    };
    // history last: its presence marks a complete cell
    let tmp = dir.join("model.fbnn.tmp");
    write_checkpoint(&params, &tmp).map_err(nn_err(&tmp))?;
    std::fs::rename(&tmp, &model_path).map_err(io_err(&model_path))?;
    let fp = dir.join("fingerprint.txt");
    std::fs::write(&fp, cfg.model_fingerprint(pipeline)).map_err(io_err(&fp))?;
    let tmp = dir.join("history.csv.tmp");
    write_history(&history, &tmp).map_err(nn_err(&tmp))?;
    std::fs::rename(&tmp, &history_path).map_err(io_err(&history_path))?;
    Ok(TrainedModel {
        pipeline,
        params,
        history,
        dir,
        cached: false,
    })
}

/// Test grids of one system: `[pipeline][coordinate]`.
pub fn test_datasets(
    cfg: &RunConfig,
    kind: SystemKind,
    pipelines: &[PipelineKind],
) -> Result<(SystemParams, Vec<Vec<Dataset>>), ExperimentError> {
    let (params, values) = cfg.grid(kind);
    let specs: Vec<PipelineSpec> = pipelines
        .iter()
        .flat_map(|&p| (0..kind.dof()).map(move |c| PipelineSpec::new(p).with_coord_pair(c)))
        .collect();
    let flat = sample_test_grid_multi(
        &params,
        &values,
        &IcBox::test_default(kind),
        cfg.grid_ics,
        &specs,
        cfg.test_seed(),
    )
    .map_err(|source| ExperimentError::Datagen {
        context: format!("generating the {kind} test grid"),
        source,
    })?;
    let mut it = flat.into_iter();
    let grouped = pipelines
        .iter()
        .map(|_| it.by_ref().take(kind.dof()).collect())
        .collect();
    Ok((params, grouped))
}

#[derive(Debug, Clone)]
pub struct TargetEval {
    pub pipeline: PipelineKind,
    pub system: SystemKind,
    /// One diagram per generalized coordinate.
    pub diagrams: Vec<PredictionDiagram>,
    /// Mean accuracy over the coordinate diagrams.
    pub accuracy: f64,
    /// Worst verdict over the coordinate diagrams.
    pub verdict: Verdict,
    /// Accuracy on the band-sampled set; nonlinear damping only.
    pub band_accuracy: Option<f64>,
}

/// Band-sampled nonlinear-damping accuracy sets, one per pipeline.
pub fn band_test_sets(
    cfg: &RunConfig,
    pipelines: &[PipelineKind],
) -> Result<Vec<Dataset>, ExperimentError> {
    let plan = cfg.band_test_plan();
    pipelines
        .iter()
        .map(|&p| {
            sample_training_set(&plan, &PipelineSpec::new(p)).map_err(|source| {
                ExperimentError::Datagen {
                    context: format!("generating the {} band test set", p.label()),
                    source,
                }
            })
        })
        .collect()
}

pub fn dataset_accuracy(params: &NetworkParams<f32>, ds: &Dataset) -> Result<f64, ExperimentError> {
    if ds.is_empty() {
        return Err(ExperimentError::Eval {
            context: "scoring a dataset".into(),
            source: EvalError::Empty,
        });
    }
    let mut hits = 0;
    for s in &ds.samples {
        let (label, _) = predict(params, &s.channel).map_err(|source| ExperimentError::Nn {
            context: "scoring a dataset".into(),
            source,
        })?;
        hits += usize::from(label == s.label);
    }
    Ok(hits as f64 / ds.len() as f64)
}

pub fn evaluate_on(
    params: &NetworkParams<f32>,
    system: &SystemParams,
    per_coord: &[Dataset],
) -> Result<TargetEval, ExperimentError> {
    let kind = system.kind();
    let first = per_coord.first().ok_or(ExperimentError::Eval {
        context: format!("evaluating on {kind}"),
        source: EvalError::Empty,
    })?;
    let pipeline = first.pipeline.kind;
    let wrap = |source| ExperimentError::Eval {
        context: format!("evaluating {} on {kind}", pipeline.label()),
        source,
    };
    let diagrams = per_coord
        .iter()
        .map(|ds| build_diagram(params, system, ds))
        .collect::<Result<Vec<_>, _>>()
        .map_err(wrap)?;
    let mut accuracy = 0.0;
    for d in &diagrams {
        accuracy += d.accuracy().map_err(wrap)?;
    }
    accuracy /= diagrams.len() as f64;
    let verdict = combined_verdict(&diagrams, &VerdictThresholds::default()).map_err(wrap)?;
    Ok(TargetEval {
        pipeline,
        system: kind,
        diagrams,
        accuracy,
        verdict,
        band_accuracy: None,
    })
}

/// Evaluates one model on one system's default test grid.
pub fn evaluate_target(
    cfg: &RunConfig,
    params: &NetworkParams<f32>,
    pipeline: PipelineKind,
    kind: SystemKind,
) -> Result<TargetEval, ExperimentError> {
    let (system, mut grids) = test_datasets(cfg, kind, &[pipeline])?;
    let mut ev = evaluate_on(params, &system, &grids.remove(0))?;
    if kind == SystemKind::NonlinearDamping {
        let band = band_test_sets(cfg, &[pipeline])?;
        ev.band_accuracy = Some(dataset_accuracy(params, &band[0])?);
    }
    Ok(ev)
}

/// Writes `<prefix>-<coordinate>.csv` and `.svg` for every diagram.
pub fn write_target_artifacts(
    ev: &TargetEval,
    dir: &Path,
) -> Result<Vec<PathBuf>, ExperimentError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for d in &ev.diagrams {
        let coord = ev.system.coord_names()[d.coord_pair];
        let stem = format!("{}-{}-{coord}", ev.pipeline.name(), ev.system.short_name());
        let csv = dir.join(format!("{stem}.csv"));
        let svg = dir.join(format!("{stem}.svg"));
        let wrap = |p: &Path| {
            let context = format!("writing {}", p.display());
            move |source| ExperimentError::Eval { context, source }
        };
        write_diagram_csv(d, &csv).map_err(wrap(&csv))?;
        emit_scatter_svg(d, &svg).map_err(wrap(&svg))?;
        written.push(csv);
        written.push(svg);
    }
    Ok(written)
}

pub fn table_cell(ev: &TargetEval) -> TableCell {
    TableCell {
        pipeline: ev.pipeline,
        system: ev.system,
        result: if ev.system == SystemKind::NonlinearDamping {
            CellResult::Accuracy(ev.band_accuracy.unwrap_or(ev.accuracy))
        } else {
            CellResult::Verdict(ev.verdict)
        },
    }
}

/// Trains (or loads) every configured pipeline and evaluates it on all four
/// test targets.
pub fn run_matrix(
    cfg: &RunConfig,
    cache_root: &Path,
    log: &mut dyn FnMut(&str),
) -> Result<(Vec<TrainedModel>, Vec<TargetEval>), ExperimentError> {
    let models = cfg
        .pipelines
        .iter()
        .map(|&p| train_cached(cfg, p, cache_root, log))
        .collect::<Result<Vec<_>, _>>()?;
    let mut evals = Vec::new();
    for kind in SystemKind::ALL {
        log(&format!("{kind}: simulating test grid"));
        let (system, grids) = test_datasets(cfg, kind, &cfg.pipelines)?;
        let band = if kind == SystemKind::NonlinearDamping {
            log("nld: simulating band test set");
            band_test_sets(cfg, &cfg.pipelines)?
        } else {
            Vec::new()
        };
        for (i, (model, per_coord)) in models.iter().zip(&grids).enumerate() {
            let mut ev = evaluate_on(&model.params, &system, per_coord)?;
            if let Some(ds) = band.get(i) {
                ev.band_accuracy = Some(dataset_accuracy(&model.params, ds)?);
            }
            let band_note = ev
                .band_accuracy
                .map(|a| format!(", band accuracy {a:.4}"))
                .unwrap_or_default();
            log(&format!(
                "{} on {kind}: grid accuracy {:.4}{band_note}, {}",
                model.pipeline.label(),
                ev.accuracy,
                ev.verdict
            ));
            evals.push(ev);
        }
    }
    Ok((models, evals))
}

pub fn table_from(evals: &[TargetEval]) -> Result<SummaryTable, ExperimentError> {
    let cells: Vec<TableCell> = evals.iter().map(table_cell).collect();
    summary_table(&cells).map_err(|source| ExperimentError::Eval {
        context: "assembling the summary table".into(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        RunConfig {
            n_per_class: 4,
            epochs: 1,
            grid_points: 4,
            grid_ics: 1,
            pipelines: vec![PipelineKind::PolarLogMovMean],
            ..RunConfig::default()
        }
    }

    #[test]
    fn cached_training_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        let mut lines = Vec::new();
        let a = train_cached(&cfg, PipelineKind::PolarLogMovMean, dir.path(), &mut |l| {
            lines.push(l.to_string())
        })
        .unwrap();
        assert!(!a.cached);
        assert!(lines.iter().any(|l| l.contains("epoch  1")));
        let b = train_cached(&cfg, PipelineKind::PolarLogMovMean, dir.path(), &mut |_| {}).unwrap();
        assert!(b.cached);
        assert_eq!(a.params, b.params);
        assert_eq!(a.history, b.history);
        assert_eq!(a.dir, b.dir);
    }

    #[test]
    fn grids_group_by_pipeline_and_coordinate() {
        let cfg = tiny();
        let pipes = [PipelineKind::MinMax, PipelineKind::PolarLog];
        let (_, g) = test_datasets(&cfg, SystemKind::PitchPlunge, &pipes).unwrap();
        assert_eq!(g.len(), 2);
        for (p, per_coord) in pipes.iter().zip(&g) {
            assert_eq!(per_coord.len(), 2);
            for (c, ds) in per_coord.iter().enumerate() {
                assert_eq!(ds.pipeline.kind, *p);
                assert_eq!(ds.pipeline.coord_pair, c);
                assert_eq!(ds.len(), 4);
            }
        }
    }

    #[test]
    fn band_sets_are_balanced_and_inside_the_bands() {
        let cfg = RunConfig { band_test_per_class: 3, ..tiny() };
        let sets = band_test_sets(&cfg, &[PipelineKind::PolarLog]).unwrap();
        let ds = &sets[0];
        assert_eq!(ds.len(), 9);
        let fold = 40.0 * cfg.test_c1 / 9.0;
        let bands = crate::datagen::ClassBands::default();
        for label in crate::datagen::ClassLabel::ALL {
            let of: Vec<_> = ds.samples.iter().filter(|s| s.label == label).collect();
            assert_eq!(of.len(), 3);
            for s in of {
                let (lo, hi) = bands.band(label);
                let f = s.param / fold;
                assert!(f >= lo && f <= hi, "{label:?} at {f}");
            }
        }
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
        let params = NetworkParams::init(crate::nn::NetShape::default(), &mut rng);
        let acc = dataset_accuracy(&params, ds).unwrap();
        assert!((0.0..=1.0).contains(&acc) && (acc * 9.0).fract() < 1e-9);
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(short_hash("abc"), "ba7816bf8f01cfea");
    }
}
