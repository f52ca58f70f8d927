//! Run configuration shared by every command, and its content hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::AdamConfig;
use crate::diffusion::{CaseConfig, DdpmTrainConfig, DEFAULT_LAMBDA_HYBRID};
use crate::error::{Error, Result};
use crate::imaging::{MtfConfig, DEFAULT_BINS};
use crate::ingest::{DEFAULT_GAIN, DEFAULT_SAMPLING_RATE_HZ};
use crate::jsonio;
use crate::metrics::EvalConfig;
use crate::signal::{DEFAULT_BEAT_LEN, DEFAULT_CUTOFF};
use crate::wgan::{CriticConfig, GeneratorConfig, GpConfig, WganTrainConfig};

/// One format-212 signal file and its annotation CSV. The record id is the
/// file stem of `dat`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordInput {
    pub dat: PathBuf,
    pub ann: PathBuf,
    #[serde(default = "default_rate")]
    pub sampling_rate_hz: u32,
    /// ADC units per mV.
    #[serde(default = "default_gain")]
    pub gain: f64,
}

fn default_rate() -> u32 {
    DEFAULT_SAMPLING_RATE_HZ
}

fn default_gain() -> f64 {
    DEFAULT_GAIN
}

impl RecordInput {
    pub fn new(dat: impl Into<PathBuf>, ann: impl Into<PathBuf>) -> Self {
        RecordInput { dat: dat.into(), ann: ann.into(), sampling_rate_hz: default_rate(), gain: default_gain() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DdpmSettings {
    pub cases: Vec<String>,
    pub steps: usize,
    pub batch_size: usize,
    pub diffusion_steps: usize,
    pub hidden: usize,
    pub time_dim: usize,
    pub lr: f64,
    pub lambda_hybrid: f64,
    /// Clamp the implied `x_0` prediction to `[-1, 1]` while sampling.
    pub clip_denoised: bool,
}

impl Default for DdpmSettings {
    fn default() -> Self {
        let t = DdpmTrainConfig::default();
        DdpmSettings {
            cases: vec!["00".into(), "01".into(), "02".into()],
            steps: t.steps,
            batch_size: t.batch_size,
            diffusion_steps: t.diffusion_steps,
            hidden: t.hidden,
            time_dim: t.time_dim,
            lr: t.lr,
            lambda_hybrid: DEFAULT_LAMBDA_HYBRID,
            clip_denoised: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WganSettings {
    pub steps: usize,
    pub n_critic: usize,
    pub batch_size: usize,
    pub lambda_gp: f64,
    pub adam: AdamConfig,
    pub generator_widths: [usize; 4],
    pub critic_widths: [usize; 4],
}

impl Default for WganSettings {
    fn default() -> Self {
        let t = WganTrainConfig::default();
        WganSettings {
            steps: t.steps,
            n_critic: t.n_critic,
            batch_size: t.batch_size,
            lambda_gp: t.gp.lambda_gp,
            adam: t.adam,
            generator_widths: t.generator.widths,
            critic_widths: t.critic.widths,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub beat_len: usize,
    pub cutoff: f64,
    pub mtf_bins: usize,
    /// Per-class fractions of real beats used for training and testing.
    pub train_fraction: f64,
    pub test_fraction: f64,
    /// Synthetic beats drawn per case; by default exactly what the
    /// augmentation scenario needs.
    pub synth_per_case: Option<usize>,
    pub ddpm: DdpmSettings,
    pub wgan: WganSettings,
    pub eval: EvalConfig,
    pub records: Vec<RecordInput>,
    /// Directory relative record paths resolve against: the config file's
    /// directory when loaded from disk. Not serialized, so not hashed.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            beat_len: DEFAULT_BEAT_LEN,
            cutoff: DEFAULT_CUTOFF,
            mtf_bins: DEFAULT_BINS,
            train_fraction: 0.7,
            test_fraction: 0.3,
            synth_per_case: None,
            ddpm: DdpmSettings::default(),
            wgan: WganSettings::default(),
            eval: EvalConfig::default(),
            records: Vec::new(),
            base_dir: PathBuf::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e.to_string()))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.beat_len < 2 {
            return Err(Error::Config("beat_len must be at least 2".into()));
        }
        if !(self.cutoff > 0.0 && self.cutoff < 1.0) {
            return Err(Error::Config(format!("cutoff must be in (0, 1), got {}", self.cutoff)));
        }
        if self.mtf_bins == 0 {
            return Err(Error::Config("mtf_bins must be positive".into()));
        }
        if !(self.train_fraction > 0.0 && self.test_fraction > 0.0 && self.train_fraction + self.test_fraction <= 1.0 + 1e-12) {
            return Err(Error::Config("train/test fractions must be positive and sum to at most 1".into()));
        }
        for case in &self.ddpm.cases {
            self.case(case)?.validate()?;
        }
        self.wgan_train().validate()?;
        self.eval.harness.validate()?;
        if self.eval.positive_label == self.eval.negative_label {
            return Err(Error::Config("positive and negative labels must differ".into()));
        }
        Ok(())
    }

    /// Lowercase hex SHA-256 of the canonical compact JSON form.
    pub fn hash(&self) -> Result<String> {
        let text = jsonio::to_string(self)?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }

    /// Record inputs with relative paths joined onto `base_dir`.
    pub fn resolved_records(&self) -> Vec<RecordInput> {
        self.records
            .iter()
            .map(|r| RecordInput { dat: self.base_dir.join(&r.dat), ann: self.base_dir.join(&r.ann), ..r.clone() })
            .collect()
    }

    pub fn mtf(&self) -> MtfConfig {
        MtfConfig { bins: self.mtf_bins }
    }

    pub fn case(&self, id: &str) -> Result<CaseConfig> {
        let mut c = CaseConfig::case(id)?;
        c.lambda_hybrid = self.ddpm.lambda_hybrid;
        Ok(c)
    }

    pub fn ddpm_train(&self) -> DdpmTrainConfig {
        let d = &self.ddpm;
        DdpmTrainConfig {
            steps: d.steps,
            batch_size: d.batch_size,
            diffusion_steps: d.diffusion_steps,
            hidden: d.hidden,
            time_dim: d.time_dim,
            lr: d.lr,
            seed: self.seed,
        }
    }

    pub fn wgan_train(&self) -> WganTrainConfig {
        let w = &self.wgan;
        WganTrainConfig {
            steps: w.steps,
            n_critic: w.n_critic,
            batch_size: w.batch_size,
            gp: GpConfig { lambda_gp: w.lambda_gp },
            adam: w.adam,
            generator: GeneratorConfig { widths: w.generator_widths, output_len: self.beat_len, ..Default::default() },
            critic: CriticConfig { widths: w.critic_widths, input_len: self.beat_len },
            seed: self.seed,
        }
    }
}
