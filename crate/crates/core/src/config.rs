//! Run configuration, read from a TOML file.
//!
//! Every section is optional. Relative paths resolve against the directory
//! holding the config file. Example:
//!
//! ```toml
//! seed = 7
//! out_dir = "runs/demo"
//!
//! [model]
//! kind = "mlp"          # or "transformer"
//! hidden = [32]         # mlp hidden widths
//! context = 2           # mlp: previous tokens seen per prediction
//!
//! [data]
//! corpus = "corpus.txt"
//! seq_len = 128
//! calibration = 10
//!
//! [prune]
//! criterion = "moreau"  # plain | smooth | moreau | moreau-gs
//! ratio = 0.2
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::importance::{Agg, Criterion, ImportanceConfig};
use crate::moreau::{MoreauConfig, MoreauMode, DEFAULT_STEPS, DEFAULT_STEP_SAMPLES};
use crate::perturb::PerturbSpec;
use crate::smoothing::{NoiseScale, NoiseSpec, DEFAULT_RELATIVE_SCALE, SMOOTHGRAD_SAMPLES};
use crate::zoo::DEFAULT_SEQ_LEN;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Mlp {
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
        #[serde(default = "default_context")]
        context: usize,
    },
    Transformer {
        #[serde(default = "default_d_model")]
        d_model: usize,
        #[serde(default = "default_heads")]
        n_heads: usize,
        #[serde(default = "default_layers")]
        n_layers: usize,
    },
}

fn default_hidden() -> Vec<usize> {
    vec![32]
}
fn default_context() -> usize {
    2
}
fn default_d_model() -> usize {
    16
}
fn default_heads() -> usize {
    4
}
fn default_layers() -> usize {
    2
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Mlp { hidden: default_hidden(), context: default_context() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub corpus: PathBuf,
    pub seq_len: usize,
    /// Sequences in the calibration batch.
    pub calibration: usize,
    /// Sequences in the held-out batch used to report losses.
    pub heldout: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { corpus: PathBuf::from("corpus.txt"), seq_len: DEFAULT_SEQ_LEN, calibration: 10, heldout: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { epochs: 2, lr: 0.1, batch_size: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneSection {
    pub criterion: Criterion,
    pub ratio: f64,
    pub agg: Agg,
    pub global_pool: bool,
    pub protected_layers: Vec<String>,
}

impl Default for PruneSection {
    fn default() -> Self {
        Self {
            criterion: Criterion::Moreau,
            ratio: 0.2,
            agg: Agg::Sum,
            global_pool: false,
            protected_layers: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    Relative,
    Absolute,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoreauSection {
    pub rho: f64,
    pub gamma: f64,
    #[serde(default)]
    pub eta: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_step_samples")]
    pub samples: usize,
    #[serde(default = "default_noise_kind")]
    pub noise: NoiseKind,
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
}

fn default_steps() -> usize {
    DEFAULT_STEPS
}
fn default_step_samples() -> usize {
    DEFAULT_STEP_SAMPLES
}
fn default_noise_kind() -> NoiseKind {
    NoiseKind::Relative
}
fn default_noise_scale() -> f64 {
    DEFAULT_RELATIVE_SCALE
}

impl MoreauSection {
    fn from_config(c: &MoreauConfig) -> Self {
        let (noise, noise_scale) = match c.noise.scale {
            NoiseScale::Relative(s) => (NoiseKind::Relative, s),
            NoiseScale::Absolute(s) => (NoiseKind::Absolute, s),
        };
        Self { rho: c.rho, gamma: c.gamma, eta: c.eta, steps: c.steps, samples: c.noise.samples, noise, noise_scale }
    }

    fn to_config(&self, mode: MoreauMode, seed: u64) -> MoreauConfig {
        MoreauConfig {
            rho: self.rho,
            eta: if mode == MoreauMode::Plain { 0.0 } else { self.eta },
            gamma: self.gamma,
            steps: self.steps,
            noise: noise_spec(self.noise, self.noise_scale, self.samples, seed),
            mode,
        }
    }
}

fn noise_spec(kind: NoiseKind, scale: f64, samples: usize, seed: u64) -> NoiseSpec {
    match kind {
        NoiseKind::Relative => NoiseSpec::relative(scale, samples, seed),
        NoiseKind::Absolute => NoiseSpec::absolute(scale, samples, seed),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothSection {
    pub samples: usize,
    pub noise: NoiseKind,
    pub noise_scale: f64,
}

impl Default for SmoothSection {
    fn default() -> Self {
        Self { samples: SMOOTHGRAD_SAMPLES, noise: NoiseKind::Relative, noise_scale: DEFAULT_RELATIVE_SCALE }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessSection {
    pub criteria: Vec<Criterion>,
    pub first: PerturbSpec,
    pub second: PerturbSpec,
}

impl Default for RobustnessSection {
    fn default() -> Self {
        Self {
            criteria: vec![Criterion::Plain, Criterion::Moreau],
            first: PerturbSpec::Fp16,
            second: PerturbSpec::Bf16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoverSection {
    pub epochs: usize,
    pub lr: f64,
}

impl Default for RecoverSection {
    fn default() -> Self {
        Self { epochs: 2, lr: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Input checkpoint for prune, robustness and recover.
    pub checkpoint: Option<PathBuf>,
    pub strict: bool,
    pub model: ModelSpec,
    pub data: DataSection,
    pub train: TrainSection,
    pub prune: PruneSection,
    pub smooth: SmoothSection,
    pub moreau: MoreauSection,
    pub moreau_gs: MoreauSection,
    pub robustness: RobustnessSection,
    pub recover: RecoverSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            checkpoint: None,
            strict: false,
            model: ModelSpec::default(),
            data: DataSection::default(),
            train: TrainSection::default(),
            prune: PruneSection::default(),
            smooth: SmoothSection::default(),
            moreau: MoreauSection::from_config(&MoreauConfig::plain(0)),
            moreau_gs: MoreauSection::from_config(&MoreauConfig::group_sparse(0)),
            robustness: RobustnessSection::default(),
            recover: RecoverSection::default(),
        }
    }
}

/// Command-line values that replace their config keys when present.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub checkpoint: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub criterion: Option<Criterion>,
    pub ratio: Option<f64>,
    pub strict: bool,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.data.corpus = base.join(&cfg.data.corpus);
        cfg.out_dir = base.join(&cfg.out_dir);
        cfg.checkpoint = cfg.checkpoint.map(|c| base.join(c));
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(c) = &o.checkpoint {
            self.checkpoint = Some(c.clone());
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(c) = o.criterion {
            self.prune.criterion = c;
        }
        if let Some(r) = o.ratio {
            self.prune.ratio = r;
        }
        self.strict |= o.strict;
    }

    /// Checks value ranges and that the corpus exists.
    pub fn validate(&self) -> Result<()> {
        if !self.data.corpus.is_file() {
            return Err(Error::Config(format!("corpus {} does not exist", self.data.corpus.display())));
        }
        if self.data.seq_len == 0 || self.data.calibration == 0 {
            return Err(Error::Config("seq_len and calibration must be positive".into()));
        }
        if self.train.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.prune.ratio) {
            return Err(Error::Config(format!("pruning ratio must lie in [0, 1), got {}", self.prune.ratio)));
        }
        let imp = self.importance();
        imp.moreau.validate()?;
        imp.moreau_gs.validate()?;
        imp.smooth.validate()?;
        self.robustness.first.validate()?;
        self.robustness.second.validate()
    }

    pub fn importance(&self) -> ImportanceConfig {
        let mut c = ImportanceConfig::new(self.prune.ratio, self.seed);
        c.agg = self.prune.agg;
        c.global_pool = self.prune.global_pool;
        c.protected_layers = self.prune.protected_layers.clone();
        c.smooth = noise_spec(self.smooth.noise, self.smooth.noise_scale, self.smooth.samples, self.seed);
        c.moreau = self.moreau.to_config(MoreauMode::Plain, self.seed);
        c.moreau_gs = self.moreau_gs.to_config(MoreauMode::GroupSparse, self.seed);
        c
    }
}
