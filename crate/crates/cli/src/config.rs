use std::fs;
use std::path::{Path, PathBuf};

use clipreel::background::SamplerConfig;
use clipreel::frames::PreprocessConfig;
use clipreel::model::{HeadKind, ModelConfig};
use clipreel::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::exit::{config_err, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Directory of `<video>.rgbc` files (or decoder inputs).
    pub data_root: PathBuf,
    /// Directory of per-game VIA projects named `<game>.json`.
    pub annotations: PathBuf,
    /// Prompt catalogue; the built-in one when absent.
    #[serde(default)]
    pub catalogue: Option<PathBuf>,
    /// Where artifacts go.
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Toy,
    Small,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_preset")]
    pub preset: Preset,
    #[serde(default)]
    pub linear_head: Option<usize>,
}

fn default_preset() -> Preset {
    Preset::Small
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { preset: default_preset(), linear_head: None }
    }
}

impl ModelSection {
    pub fn build(&self) -> ModelConfig {
        let mut cfg = match self.preset {
            Preset::Toy => ModelConfig::toy(),
            Preset::Small => ModelConfig::small(),
            Preset::Full => ModelConfig::full_scale(),
        };
        if let Some(width) = self.linear_head {
            cfg.head = HeadKind::Linear { width };
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormSection {
    #[serde(default = "default_mean")]
    pub mean: [f64; 3],
    #[serde(default = "default_std")]
    pub std: [f64; 3],
}

fn default_mean() -> [f64; 3] {
    PreprocessConfig::default().mean
}

fn default_std() -> [f64; 3] {
    PreprocessConfig::default().std
}

impl Default for NormSection {
    fn default() -> Self {
        Self { mean: default_mean(), std: default_std() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_buffer")]
    pub buffer_secs: f64,
    #[serde(default)]
    pub target_count: Option<u32>,
}

fn default_retries() -> u32 {
    SamplerConfig::default().max_retries
}

fn default_buffer() -> f64 {
    SamplerConfig::default().buffer_secs
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self { max_retries: default_retries(), buffer_secs: default_buffer(), target_count: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantSection {
    #[serde(default = "one")]
    pub calib_clips: usize,
}

fn one() -> usize {
    1
}

impl Default for QuantSection {
    fn default() -> Self {
        Self { calib_clips: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderSection {
    /// e.g. `ffmpeg -ss {start} -t {dur} -i {input} ...` writing `.rgbc` to stdout.
    pub template: String,
    #[serde(default = "default_ext")]
    pub extension: String,
    #[serde(default = "default_concurrency")]
    pub max_concurrent: usize,
}

fn default_ext() -> String {
    "mp4".into()
}

fn default_concurrency() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectSection {
    /// Labels a window may be promoted to; every non-background label of the
    /// prompt set when empty.
    #[serde(default)]
    pub targets: Vec<String>,
    #[serde(default = "default_pre")]
    pub pad_pre_s: f64,
    #[serde(default = "default_post")]
    pub pad_post_s: f64,
    #[serde(default)]
    pub cutter: Option<String>,
}

fn default_pre() -> f64 {
    clipreel::detection::PAD_PRE_S
}

fn default_post() -> f64 {
    clipreel::detection::PAD_POST_S
}

impl Default for DetectSection {
    fn default() -> Self {
        Self { targets: Vec::new(), pad_pre_s: default_pre(), pad_post_s: default_post(), cutter: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub paths: Paths,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub preprocess: NormSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub quantizer: QuantSection,
    #[serde(default)]
    pub decoder: Option<DecoderSection>,
    #[serde(default)]
    pub detect: DetectSection,
}

impl RunConfig {
    /// Parses `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.paths.data_root);
        fix(&mut cfg.paths.annotations);
        fix(&mut cfg.paths.out);
        if let Some(c) = cfg.paths.catalogue.as_mut() {
            fix(c);
        }
        Ok(cfg)
    }

    pub fn check(&self) -> CliResult<()> {
        for (what, p) in [("data_root", &self.paths.data_root), ("annotations", &self.paths.annotations)] {
            if !p.exists() {
                return Err(config_err(format!("paths.{what} {} does not exist", p.display())));
            }
        }
        if let Some(c) = &self.paths.catalogue {
            if !c.is_file() {
                return Err(config_err(format!("paths.catalogue {} does not exist", c.display())));
            }
        }
        let model = self.model.build();
        model.validate().map_err(|e| config_err(e.to_string()))?;
        self.train.validate().map_err(|e| config_err(e.to_string()))?;
        self.sampler().validate().map_err(|e| config_err(e.to_string()))?;
        self.preprocess_config().validate(model.video.patch as u32).map_err(|e| config_err(e.to_string()))?;
        if self.quantizer.calib_clips == 0 {
            return Err(config_err("quantizer.calib_clips must be at least 1"));
        }
        Ok(())
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            max_retries: self.sampler.max_retries,
            buffer_secs: self.sampler.buffer_secs,
            rng_seed: self.seed,
            target_count: self.sampler.target_count,
        }
    }

    pub fn preprocess_config(&self) -> PreprocessConfig {
        let m = self.model.build();
        PreprocessConfig {
            t_frames: m.video.t_frames as u32,
            side: m.video.side as u32,
            mean: self.preprocess.mean,
            std: self.preprocess.std,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }
}
