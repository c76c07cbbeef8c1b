//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::datagen::{derive_seed, ClassBands, Distribution1D, IcBox, IcComponent, SamplingPlan};
use crate::nn::TrainConfig;
use crate::preprocess::PipelineKind;
use crate::systems::{reference_fold, NldParams, SystemKind, SystemParams};

pub const SEED_ENV: &str = "FOLD_SEED";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("bad value for '{key}': {msg}")]
    BadValue { key: String, msg: String },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Training-only seed (initialization and shuffling); defaults to `seed`.
    pub train_seed: Option<u64>,
    pub pipelines: Vec<PipelineKind>,
    pub n_per_class: usize,
    pub train_c1: f64,
    pub distribution: Distribution1D,
    pub val_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub test_c1: f64,
    /// Runs per class of the band-sampled accuracy set at `test_c1`.
    pub band_test_per_class: usize,
    pub grid_points: usize,
    pub grid_ics: usize,
    /// Nonlinear-damping test range as fractions of the fold value.
    pub grid_nld: (f64, f64),
    pub grid_mob: (f64, f64),
    pub grid_vdp: (f64, f64),
    pub grid_pnp: (f64, f64),
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            train_seed: None,
            pipelines: PipelineKind::ALL.to_vec(),
            n_per_class: 2000,
            train_c1: 0.5,
            distribution: Distribution1D::TruncatedNormal,
            val_fraction: 0.2,
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            test_c1: 0.1,
            band_test_per_class: 100,
            grid_points: 61,
            grid_ics: 10,
            grid_nld: (0.05, 1.5),
            grid_mob: (1.55, 2.75),
            grid_vdp: (0.01, 0.09),
            grid_pnp: (0.55, 0.93),
            out_dir: PathBuf::from("runs"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.into(),
        msg: e.to_string(),
    })
}

fn parse_range(key: &str, v: &str) -> Result<(f64, f64), ConfigError> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    let [a, b] = parts[..] else {
        return Err(ConfigError::BadValue {
            key: key.into(),
            msg: "expected 'lo, hi'".into(),
        });
    };
    let (a, b): (f64, f64) = (parse_num(key, a)?, parse_num(key, b)?);
    if !(a < b) {
        return Err(ConfigError::BadValue {
            key: key.into(),
            msg: "range must satisfy lo < hi".into(),
        });
    }
    Ok((a, b))
}

impl RunConfig {
    /// Reduced sizes for plumbing checks.
    pub fn smoke() -> Self {
        Self {
            n_per_class: 50,
            epochs: 5,
            // coarsest resolution keeping close runs on every default grid
            grid_points: 15,
            grid_ics: 2,
            band_test_per_class: 20,
            ..Self::default()
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&Self::read(path)?)
    }

    pub fn read(path: &Path) -> Result<String, ConfigError> {
        std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    msg: format!("expected 'key = value', got '{line}'"),
                });
            };
            self.set(k.trim(), v.trim()).map_err(|e| match e {
                ConfigError::UnknownKey(_) | ConfigError::BadValue { .. } => ConfigError::Syntax {
                    line: i + 1,
                    msg: e.to_string(),
                },
                e => e,
            })?;
        }
        self.validate()
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "seed" => self.seed = parse_num(key, v)?,
            "train_seed" => self.train_seed = Some(parse_num(key, v)?),
            "pipelines" => {
                self.pipelines = if v == "all" {
                    PipelineKind::ALL.to_vec()
                } else {
                    v.split(',')
                        .map(|p| {
                            p.trim().parse().map_err(|_| ConfigError::BadValue {
                                key: key.into(),
                                msg: format!("unknown pipeline '{}'", p.trim()),
                            })
                        })
                        .collect::<Result<_, _>>()?
                }
            }
            "n_per_class" => self.n_per_class = parse_num(key, v)?,
            "train_c1" => self.train_c1 = parse_num(key, v)?,
            "distribution" => {
                self.distribution = match v {
                    "normal" => Distribution1D::TruncatedNormal,
                    "uniform" => Distribution1D::Uniform,
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: key.into(),
                            msg: "expected 'normal' or 'uniform'".into(),
                        })
                    }
                }
            }
            "val_fraction" => self.val_fraction = parse_num(key, v)?,
            "epochs" => self.epochs = parse_num(key, v)?,
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "learning_rate" => self.learning_rate = parse_num(key, v)?,
            "test_c1" => self.test_c1 = parse_num(key, v)?,
            "band_test_per_class" => self.band_test_per_class = parse_num(key, v)?,
            "grid_points" => self.grid_points = parse_num(key, v)?,
            "grid_ics" => self.grid_ics = parse_num(key, v)?,
            "grid_nld" => self.grid_nld = parse_range(key, v)?,
            "grid_mob" => self.grid_mob = parse_range(key, v)?,
            "grid_vdp" => self.grid_vdp = parse_range(key, v)?,
            "grid_pnp" => self.grid_pnp = parse_range(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Replaces the seed with the `FOLD_SEED` environment value if set.
    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = parse_num(SEED_ENV, v.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, msg: &str| {
            Err(ConfigError::BadValue {
                key: key.into(),
                msg: msg.into(),
            })
        };
        if self.pipelines.is_empty() {
            return bad("pipelines", "at least one pipeline is required");
        }
        if self.n_per_class == 0 {
            return bad("n_per_class", "must be at least 1");
        }
        if !(self.train_c1 > 0.0) {
            return bad("train_c1", "must be positive");
        }
        if !(self.test_c1 > 0.0) {
            return bad("test_c1", "must be positive");
        }
        if self.band_test_per_class == 0 {
            return bad("band_test_per_class", "must be at least 1");
        }
        if self.grid_points < 2 || self.grid_ics == 0 {
            return bad("grid_points", "need at least 2 grid points and 1 IC per point");
        }
        if let Err(e) = self.train_config().validate() {
            return bad("training", &e.to_string());
        }
        Ok(())
    }

    pub fn sampling_plan(&self) -> SamplingPlan {
        SamplingPlan {
            system: SystemParams::Nld(NldParams { c1: self.train_c1 }),
            n_per_class: self.n_per_class,
            bands: ClassBands::default(),
            ic_box: IcBox(vec![
                IcComponent::Range(0.7, 2.0),
                IcComponent::Range(0.7, 2.0),
            ]),
            distribution: self.distribution,
            seed: self.seed,
        }
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, 1 << 40)
    }

    pub fn test_seed(&self) -> u64 {
        derive_seed(self.seed, 2 << 40)
    }

    /// Uniform draws from the training class bands at `test_c1`, with the
    /// test initial-condition box.
    pub fn band_test_plan(&self) -> SamplingPlan {
        SamplingPlan {
            system: SystemParams::Nld(NldParams { c1: self.test_c1 }),
            n_per_class: self.band_test_per_class,
            bands: ClassBands::default(),
            ic_box: IcBox::test_default(SystemKind::NonlinearDamping),
            distribution: Distribution1D::Uniform,
            seed: derive_seed(self.seed, 3 << 40),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            max_epochs: self.epochs,
            learning_rate: self.learning_rate,
            seed: self.train_seed.unwrap_or(self.seed),
            val_fraction: self.val_fraction,
            ..TrainConfig::default()
        }
    }

    /// System parameters and bifurcation-parameter grid for one test target.
    pub fn grid(&self, kind: SystemKind) -> (SystemParams, Vec<f64>) {
        let params = match kind {
            SystemKind::NonlinearDamping => SystemParams::Nld(NldParams { c1: self.test_c1 }),
            k => SystemParams::default_for(k),
        };
        let (lo, hi, scale) = match kind {
            SystemKind::NonlinearDamping => {
                let fold = reference_fold(&params).expect("positive c1");
                (self.grid_nld.0, self.grid_nld.1, fold)
            }
            SystemKind::MassOnBelt => (self.grid_mob.0, self.grid_mob.1, 1.0),
            SystemKind::VdpDuffing => (self.grid_vdp.0, self.grid_vdp.1, 1.0),
            SystemKind::PitchPlunge => (self.grid_pnp.0, self.grid_pnp.1, 1.0),
        };
        let n = self.grid_points;
        let values = (0..n)
            .map(|i| scale * (lo + (hi - lo) * i as f64 / (n - 1) as f64))
            .collect();
        (params, values)
    }

    /// Canonical text of the settings that determine a trained model.
    pub fn model_fingerprint(&self, pipeline: PipelineKind) -> String {
        let t = self.train_config();
        let mut s = String::from("model-v1\n");
        let _ = writeln!(s, "pipeline={}", pipeline.name());
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "train_seed={}", t.seed);
        let _ = writeln!(s, "n_per_class={}", self.n_per_class);
        let _ = writeln!(s, "train_c1={:?}", self.train_c1);
        let _ = writeln!(s, "distribution={:?}", self.distribution);
        let _ = writeln!(s, "val_fraction={:?}", self.val_fraction);
        let _ = writeln!(s, "epochs={}", t.max_epochs);
        let _ = writeln!(s, "batch_size={}", t.batch_size);
        let _ = writeln!(
            s,
            "adam={:?},{:?},{:?},{:?}",
            t.learning_rate, t.beta1, t.beta2, t.epsilon
        );
        s
    }
}
