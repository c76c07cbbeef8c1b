//! Trajectory populations for training and testing, their labels, and
//! their on-disk form.

mod format;

pub use format::{read_dataset, write_dataset, write_manifest, DATASET_MAGIC, DATASET_VERSION};

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::preprocess::{apply_pipeline, PipelineSpec, PreprocessError};
use crate::systems::{
    integrate, reference_fold, StopRule, SystemError, SystemKind, SystemModel, SystemParams,
};

/// Integration step shared by every generated trajectory.
pub const SIM_DT: f64 = 0.01;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("sample {index}: {source}")]
    Simulation {
        index: usize,
        #[source]
        source: SystemError,
    },
    #[error("sample {index}: {source}")]
    Pipeline {
        index: usize,
        #[source]
        source: PreprocessError,
    },
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("parameter {param} lies in none of the class bands")]
    OutOfBands { param: f64 },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a dataset file (bad magic)")]
    BadMagic,
    #[error("dataset version {0} is not supported")]
    VersionMismatch(u16),
    #[error("dataset file is truncated")]
    Truncated,
    #[error("malformed dataset: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassLabel {
    Far = 0,
    Close = 1,
    After = 2,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [ClassLabel::Far, ClassLabel::Close, ClassLabel::After];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Far => "far",
            ClassLabel::Close => "close",
            ClassLabel::After => "after",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassLabel {
    type Err = DatagenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.name() == s.trim())
            .ok_or_else(|| DatagenError::Malformed(format!("unknown label '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distribution1D {
    /// Normal centered on the interval with σ = width/4, redrawn until inside.
    TruncatedNormal,
    Uniform,
}

impl Distribution1D {
    pub fn sample<R: Rng>(self, rng: &mut R, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return lo;
        }
        match self {
            Distribution1D::Uniform => rng.gen_range(lo..hi),
            Distribution1D::TruncatedNormal => {
                let normal = Normal::new(0.5 * (lo + hi), 0.25 * (hi - lo))
                    .expect("positive standard deviation");
                loop {
                    let x = normal.sample(rng);
                    if x > lo && x < hi {
                        return x;
                    }
                }
            }
        }
    }
}

/// How one initial-condition component is drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IcComponent {
    Range(f64, f64),
    /// Same value as an earlier component.
    CopyOf(usize),
    Fixed(f64),
}

/// Per-component initial-condition box.
#[derive(Debug, Clone, PartialEq)]
pub struct IcBox(pub Vec<IcComponent>);

impl IcBox {
    /// Initial-condition box used for each system's test trajectories.
    pub fn test_default(kind: SystemKind) -> Self {
        use IcComponent::*;
        IcBox(match kind {
            SystemKind::NonlinearDamping => vec![Range(0.7, 2.0), Range(0.7, 2.0)],
            SystemKind::MassOnBelt => vec![Range(2.0, 3.0), Range(1.0, 2.0)],
            // (x1, x2, ẋ1, ẋ2) with the absorber released from x2 = x1 at rest
            SystemKind::VdpDuffing => vec![Range(1.0, 2.0), CopyOf(0), Range(1.0, 2.0), Fixed(0.0)],
            // (y, α, ẏ, α̇)
            SystemKind::PitchPlunge => vec![
                Range(0.002, 0.01),
                Range(0.1, 0.3),
                Range(0.002, 0.005),
                Range(0.1, 0.3),
            ],
        })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R, dist: Distribution1D) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::with_capacity(self.0.len());
        for c in &self.0 {
            let v = match *c {
                IcComponent::Range(lo, hi) => dist.sample(rng, lo, hi),
                IcComponent::CopyOf(i) => out[i],
                IcComponent::Fixed(v) => v,
            };
            out.push(v);
        }
        out
    }

    fn validate(&self, kind: SystemKind) -> Result<(), DatagenError> {
        if self.0.len() != kind.state_dim() {
            return Err(DatagenError::InvalidPlan(format!(
                "{kind} needs {} initial-condition components, got {}",
                kind.state_dim(),
                self.0.len()
            )));
        }
        for (i, c) in self.0.iter().enumerate() {
            match *c {
                IcComponent::Range(lo, hi) if !(lo <= hi) => {
                    return Err(DatagenError::InvalidPlan(format!(
                        "initial-condition range {i} is empty"
                    )))
                }
                IcComponent::CopyOf(j) if j >= i => {
                    return Err(DatagenError::InvalidPlan(format!(
                        "component {i} copies a later component"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Class bands as fractions of the fold value, measured on the side where
/// the periodic branches are absent (fraction < 1) or present (> 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassBands {
    pub far: (f64, f64),
    pub close: (f64, f64),
    pub after: (f64, f64),
}

impl Default for ClassBands {
    fn default() -> Self {
        Self {
            far: (0.1, 0.5),
            close: (0.9, 0.995),
            after: (1.01, 1.5),
        }
    }
}

impl ClassBands {
    pub fn band(&self, label: ClassLabel) -> (f64, f64) {
        match label {
            ClassLabel::Far => self.far,
            ClassLabel::Close => self.close,
            ClassLabel::After => self.after,
        }
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        let ordered = |(a, b): (f64, f64)| a > 0.0 && a < b;
        if !(ordered(self.far) && ordered(self.close) && ordered(self.after)) {
            return Err(DatagenError::InvalidPlan("class bands must be non-empty".into()));
        }
        if !(self.far.1 <= self.close.0 && self.close.1 <= 1.0 && self.after.0 >= 1.0) {
            return Err(DatagenError::InvalidPlan(
                "class bands must be ordered far < close <= 1 <= after".into(),
            ));
        }
        Ok(())
    }
}

/// Maps a band fraction to a parameter value for a system whose branches
/// exist on the `direction` side of the fold.
pub fn param_from_fraction(fraction: f64, fold: f64, direction: f64) -> f64 {
    fold * (1.0 + direction * (fraction - 1.0))
}

pub fn fraction_from_param(param: f64, fold: f64, direction: f64) -> f64 {
    1.0 + direction * (param - fold) / fold
}

/// Ground-truth class of a parameter value.
///
/// In strict mode the value must fall inside one of the plan's bands.
/// Otherwise anything past the fold is `After`, anything from the lower
/// edge of the close band up to the fold is `Close`, and the rest is `Far`.
pub fn label_of(
    param: f64,
    fold: f64,
    direction: f64,
    bands: &ClassBands,
    strict: bool,
) -> Result<ClassLabel, DatagenError> {
    if !(fold > 0.0) {
        return Err(DatagenError::InvalidPlan("fold value must be positive".into()));
    }
    let f = fraction_from_param(param, fold, direction);
    if strict {
        let inside = |(lo, hi): (f64, f64)| f >= lo && f <= hi;
        return ClassLabel::ALL
            .into_iter()
            .find(|&l| inside(bands.band(l)))
            .ok_or(DatagenError::OutOfBands { param });
    }
    Ok(if f > 1.0 {
        ClassLabel::After
    } else if f >= bands.close.0 {
        ClassLabel::Close
    } else {
        ClassLabel::Far
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    pub system: SystemParams,
    pub n_per_class: usize,
    pub bands: ClassBands,
    pub ic_box: IcBox,
    pub distribution: Distribution1D,
    pub seed: u64,
}

impl SamplingPlan {
    /// Training protocol: nonlinear damping at `c1 = 0.5`, 2000 runs per
    /// class, normally distributed draws.
    pub fn paper(seed: u64) -> Self {
        Self {
            system: SystemParams::default_for(SystemKind::NonlinearDamping),
            n_per_class: 2000,
            bands: ClassBands::default(),
            ic_box: IcBox(vec![
                IcComponent::Range(0.7, 2.0),
                IcComponent::Range(0.7, 2.0),
            ]),
            distribution: Distribution1D::TruncatedNormal,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        self.system.validate()?;
        if self.n_per_class == 0 {
            return Err(DatagenError::InvalidPlan("n_per_class must be at least 1".into()));
        }
        self.bands.validate()?;
        self.ic_box.validate(self.system.kind())
    }
}

/// One labelled classifier input with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub channel: Vec<f32>,
    pub label: ClassLabel,
    pub system: SystemKind,
    pub param: f64,
    pub seed: u64,
    pub ic: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub pipeline: PipelineSpec,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for s in &self.samples {
            counts[s.label.index()] += 1;
        }
        counts
    }
}

/// Seed of the `index`-th sample's private random stream (splitmix64).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulates one run and preprocesses it.
pub fn simulate_sample(
    params: &SystemParams,
    param: f64,
    ic: &[f64],
    pipeline: &PipelineSpec,
    index: usize,
) -> Result<Vec<f32>, DatagenError> {
    let wrap = |source| DatagenError::Simulation { index, source };
    let model = SystemModel::new(*params, param).map_err(wrap)?;
    let traj = integrate(&model, ic, SIM_DT, &StopRule::for_model(&model)).map_err(wrap)?;
    let channel = apply_pipeline(&traj, pipeline)
        .map_err(|source| DatagenError::Pipeline { index, source })?;
    Ok(channel.values)
}

/// Draws `n_per_class` runs per class from the plan's bands and
/// initial-condition box. Samples are ordered class by class.
pub fn sample_training_set(
    plan: &SamplingPlan,
    pipeline: &PipelineSpec,
) -> Result<Dataset, DatagenError> {
    plan.validate()?;
    pipeline
        .validate()
        .map_err(|source| DatagenError::Pipeline { index: 0, source })?;
    let kind = plan.system.kind();
    let fold = reference_fold(&plan.system)?;
    let direction = kind.direction();

    let mut samples = Vec::with_capacity(3 * plan.n_per_class);
    for label in ClassLabel::ALL {
        let (lo, hi) = plan.bands.band(label);
        for i in 0..plan.n_per_class {
            let index = label.index() * plan.n_per_class + i;
            let seed = derive_seed(plan.seed, index as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fraction = plan.distribution.sample(&mut rng, lo, hi);
            let param = param_from_fraction(fraction, fold, direction);
            let ic = plan.ic_box.sample(&mut rng, plan.distribution);
            debug_assert_eq!(
                label_of(param, fold, direction, &plan.bands, true).ok(),
                Some(label)
            );
            let channel = simulate_sample(&plan.system, param, &ic, pipeline, index)?;
            samples.push(Sample {
                channel,
                label,
                system: kind,
                param,
                seed,
                ic,
            });
        }
    }
    Ok(Dataset {
        pipeline: *pipeline,
        samples,
    })
}

/// `n_per_param` uniformly drawn runs at every listed parameter value,
/// labelled by their position relative to the fold.
pub fn sample_test_grid(
    system: &SystemParams,
    param_values: &[f64],
    ic_box: &IcBox,
    n_per_param: usize,
    pipeline: &PipelineSpec,
    seed: u64,
) -> Result<Dataset, DatagenError> {
    let mut out = sample_test_grid_multi(
        system,
        param_values,
        ic_box,
        n_per_param,
        std::slice::from_ref(pipeline),
        seed,
    )?;
    Ok(out.remove(0))
}

/// Like [`sample_test_grid`], but integrates every run once and feeds it
/// through each of `pipelines`; returns one dataset per pipeline.
pub fn sample_test_grid_multi(
    system: &SystemParams,
    param_values: &[f64],
    ic_box: &IcBox,
    n_per_param: usize,
    pipelines: &[PipelineSpec],
    seed: u64,
) -> Result<Vec<Dataset>, DatagenError> {
    if param_values.is_empty() || pipelines.is_empty() {
        return Err(DatagenError::InvalidPlan(
            "no parameter values or pipelines given".into(),
        ));
    }
    if n_per_param == 0 {
        return Err(DatagenError::InvalidPlan("n_per_param must be at least 1".into()));
    }
    system.validate()?;
    let kind = system.kind();
    ic_box.validate(kind)?;
    for spec in pipelines {
        spec.validate()
            .map_err(|source| DatagenError::Pipeline { index: 0, source })?;
    }
    let fold = reference_fold(system)?;
    let bands = ClassBands::default();

    let n = param_values.len() * n_per_param;
    let mut out: Vec<Dataset> = pipelines
        .iter()
        .map(|p| Dataset {
            pipeline: *p,
            samples: Vec::with_capacity(n),
        })
        .collect();
    for (pi, &param) in param_values.iter().enumerate() {
        let label = label_of(param, fold, kind.direction(), &bands, false)?;
        let model = SystemModel::new(*system, param)?;
        let stop = StopRule::for_model(&model);
        for j in 0..n_per_param {
            let index = pi * n_per_param + j;
            let sample_seed = derive_seed(seed, index as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
            let ic = ic_box.sample(&mut rng, Distribution1D::Uniform);
            let traj = integrate(&model, &ic, SIM_DT, &stop)
                .map_err(|source| DatagenError::Simulation { index, source })?;
            for ds in &mut out {
                let channel = apply_pipeline(&traj, &ds.pipeline)
                    .map_err(|source| DatagenError::Pipeline { index, source })?;
                ds.samples.push(Sample {
                    channel: channel.values,
                    label,
                    system: kind,
                    param,
                    seed: sample_seed,
                    ic: ic.clone(),
                });
            }
        }
    }
    Ok(out)
}

/// Stratified random split into (train, validation). Each part keeps the
/// original sample order.
pub fn split(ds: &Dataset, val_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DatagenError> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(DatagenError::InvalidPlan(
            "val_fraction must lie in (0, 1)".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_val = vec![false; ds.len()];
    for label in ClassLabel::ALL {
        let mut idx: Vec<usize> = (0..ds.len())
            .filter(|&i| ds.samples[i].label == label)
            .collect();
        rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
        let n_val = (val_fraction * idx.len() as f64).round() as usize;
        for &i in &idx[..n_val] {
            in_val[i] = true;
        }
    }
    let (val, train): (Vec<_>, Vec<_>) = ds
        .samples
        .iter()
        .cloned()
        .zip(in_val)
        .partition(|(_, v)| *v);
    let strip = |v: Vec<(Sample, bool)>| Dataset {
        pipeline: ds.pipeline,
        samples: v.into_iter().map(|(s, _)| s).collect(),
    };
    Ok((strip(train), strip(val)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::PipelineKind;
    use crate::systems::NldParams;

    fn nld_bands() -> ClassBands {
        ClassBands::default()
    }

    #[test]
    fn labels_follow_the_fold_side() {
        let fold = 40.0 * 0.5 / 9.0;
        let b = nld_bands();
        assert_eq!(label_of(2.3, fold, 1.0, &b, true).unwrap(), ClassLabel::After);
        assert_eq!(
            label_of(0.5 * fold, fold, 1.0, &b, true).unwrap(),
            ClassLabel::Far
        );
        assert_eq!(label_of(1.5, 1.83, -1.0, &b, false).unwrap(), ClassLabel::After);
        assert_eq!(label_of(1.5, 1.83, -1.0, &b, true).unwrap(), ClassLabel::After);
        assert_eq!(label_of(0.95, 0.911, 1.0, &b, false).unwrap(), ClassLabel::After);
        // belt: just above the fold speed is close, well above is far
        assert_eq!(label_of(1.9, 1.83, -1.0, &b, false).unwrap(), ClassLabel::Close);
        assert_eq!(label_of(2.5, 1.83, -1.0, &b, false).unwrap(), ClassLabel::Far);
        // the gaps are only an error in strict mode
        assert!(matches!(
            label_of(0.7 * fold, fold, 1.0, &b, true),
            Err(DatagenError::OutOfBands { .. })
        ));
        assert_eq!(
            label_of(0.7 * fold, fold, 1.0, &b, false).unwrap(),
            ClassLabel::Far
        );
        assert_eq!(
            label_of(0.998 * fold, fold, 1.0, &b, false).unwrap(),
            ClassLabel::Close
        );
    }

    #[test]
    fn fraction_mapping_round_trips() {
        for dir in [1.0, -1.0] {
            for f in [0.1, 0.5, 0.95, 1.2] {
                let p = param_from_fraction(f, 1.83, dir);
                assert!((fraction_from_param(p, 1.83, dir) - f).abs() < 1e-12);
            }
        }
        assert!((param_from_fraction(0.9, 1.83, -1.0) - 1.83 * 1.1).abs() < 1e-12);
    }

    #[test]
    fn truncated_normal_stays_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws: Vec<f64> = (0..5000)
            .map(|_| Distribution1D::TruncatedNormal.sample(&mut rng, 0.9, 0.995))
            .collect();
        assert!(draws.iter().all(|&x| x > 0.9 && x < 0.995));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 0.9475).abs() < 0.002);
        // σ = width/4 truncated at ±2σ has std ≈ 0.88σ
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / draws.len() as f64;
        let sigma = 0.095 / 4.0;
        assert!((var.sqrt() / sigma - 0.88).abs() < 0.03);
    }

    #[test]
    fn vdp_test_ics_release_the_absorber_at_rest() {
        let b = IcBox::test_default(SystemKind::VdpDuffing);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let ic = b.sample(&mut rng, Distribution1D::Uniform);
            assert_eq!(ic[1], ic[0]);
            assert_eq!(ic[3], 0.0);
            assert!(ic[0] > 1.0 && ic[0] < 2.0 && ic[2] > 1.0 && ic[2] < 2.0);
        }
    }

    fn small_plan(n: usize, seed: u64) -> SamplingPlan {
        SamplingPlan {
            n_per_class: n,
            ..SamplingPlan::paper(seed)
        }
    }

    #[test]
    fn training_set_is_balanced_banded_and_deterministic() {
        let plan = small_plan(3, 11);
        let spec = PipelineSpec::new(PipelineKind::PolarLogMovMean);
        let a = sample_training_set(&plan, &spec).unwrap();
        let b = sample_training_set(&plan, &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.class_counts(), [3, 3, 3]);
        let fold = 40.0 * 0.5 / 9.0;
        for s in &a.samples {
            let (lo, hi) = plan.bands.band(s.label);
            let f = s.param / fold;
            assert!(f > lo && f < hi, "{f} outside {lo}..{hi}");
            assert_eq!(s.channel.len(), 1024);
            assert!(s.ic.iter().all(|&x| x > 0.7 && x < 2.0));
        }
        let c = sample_training_set(&small_plan(3, 12), &spec).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn far_polar_log_sample_trends_down_to_the_floor() {
        let plan = small_plan(1, 5);
        let ds = sample_training_set(&plan, &PipelineSpec::new(PipelineKind::PolarLog)).unwrap();
        let far = &ds.samples[0];
        assert_eq!(far.label, ClassLabel::Far);
        let ch: Vec<f64> = far.channel.iter().map(|&v| v as f64).collect();
        let trend = crate::preprocess::moving_mean_window(&ch, 50);
        let floor = -12.0 + 1e-6;
        for w in trend.windows(2) {
            if w[1] <= floor {
                break;
            }
            assert!(w[1] < w[0] || w[0] <= -10.0, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn test_grid_labels_and_errors() {
        let pnp = SystemParams::default_for(SystemKind::PitchPlunge);
        let spec = PipelineSpec::new(PipelineKind::Polar);
        let ds = sample_test_grid(
            &pnp,
            &[0.6, 0.95],
            &IcBox::test_default(SystemKind::PitchPlunge),
            1,
            &spec,
            1,
        )
        .unwrap();
        assert_eq!(ds.samples[0].label, ClassLabel::Far);
        assert_eq!(ds.samples[1].label, ClassLabel::After);
        assert!(sample_test_grid(
            &pnp,
            &[],
            &IcBox::test_default(SystemKind::PitchPlunge),
            1,
            &spec,
            1
        )
        .is_err());
        // a 2-component box does not fit a 4-state system
        assert!(sample_test_grid(
            &pnp,
            &[0.6],
            &IcBox::test_default(SystemKind::MassOnBelt),
            1,
            &spec,
            1
        )
        .is_err());
    }

    fn fake_dataset(per_class: usize) -> Dataset {
        let samples = ClassLabel::ALL
            .into_iter()
            .flat_map(|label| {
                (0..per_class).map(move |i| Sample {
                    channel: vec![i as f32; 4],
                    label,
                    system: SystemKind::NonlinearDamping,
                    param: i as f64,
                    seed: i as u64,
                    ic: vec![0.0, 1.0],
                })
            })
            .collect();
        Dataset {
            pipeline: PipelineSpec::new(PipelineKind::Polar),
            samples,
        }
    }

    #[test]
    fn split_is_stratified_and_complete() {
        let ds = fake_dataset(2000);
        let (train, val) = split(&ds, 0.2, 9).unwrap();
        assert_eq!(train.len(), 4800);
        assert_eq!(val.class_counts(), [400, 400, 400]);
        let (t2, v2) = split(&ds, 0.2, 9).unwrap();
        assert_eq!((train.clone(), val.clone()), (t2, v2));
        let mut all: Vec<(ClassLabel, u64)> = train
            .samples
            .iter()
            .chain(&val.samples)
            .map(|s| (s.label, s.seed))
            .collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 6000);

        let (t, v) = split(&fake_dataset(2), 0.5, 1).unwrap();
        assert_eq!(t.class_counts(), [1, 1, 1]);
        assert_eq!(v.class_counts(), [1, 1, 1]);
        assert!(split(&ds, 1.0, 1).is_err());
    }

    #[test]
    fn multi_grid_matches_single_grids() {
        let vdp = SystemParams::default_for(SystemKind::VdpDuffing);
        let specs = [
            PipelineSpec::new(PipelineKind::PolarLog),
            PipelineSpec::new(PipelineKind::MinMax).with_coord_pair(1),
        ];
        let ic_box = IcBox::test_default(SystemKind::VdpDuffing);
        let multi = sample_test_grid_multi(&vdp, &[0.02, 0.08], &ic_box, 2, &specs, 4).unwrap();
        for (ds, spec) in multi.iter().zip(&specs) {
            assert_eq!(*ds, sample_test_grid(&vdp, &[0.02, 0.08], &ic_box, 2, spec, 4).unwrap());
        }
        assert_ne!(multi[0].samples[0].channel, multi[1].samples[0].channel);
    }

    #[test]
    fn plan_validation() {
        let mut plan = small_plan(1, 0);
        plan.bands.close = (0.4, 0.995);
        assert!(plan.validate().is_err());
        let mut plan = small_plan(0, 0);
        assert!(plan.validate().is_err());
        plan.n_per_class = 1;
        plan.system = SystemParams::Nld(NldParams { c1: -1.0 });
        assert!(plan.validate().is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| derive_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }
}
