use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Byte tokens plus BOS, EOS and PAD.
pub const VOCAB: usize = 259;
pub const CONTEXT_LEN: usize = 77;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("invalid model config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub t_frames: usize,
    pub side: usize,
    pub patch: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_cct_layers: usize,
    pub n_mit_layers: usize,
    pub d_ffn: usize,
    /// Width of the shared video/text embedding space (the MIT runs here).
    pub d_embed: usize,
    pub mit_heads: usize,
    pub d_mit_ffn: usize,
}

impl EncoderConfig {
    pub fn n_patches(&self) -> usize {
        (self.side / self.patch).pow(2)
    }

    pub fn patch_dim(&self) -> usize {
        3 * self.patch * self.patch
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextConfig {
    pub d_text: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ffn: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptConfig {
    pub n_blocks: usize,
    pub n_heads: usize,
    pub d_ffn: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HeadKind {
    /// Scaled cosine similarity against prompt embeddings.
    Similarity,
    /// Fully connected layer over the video embedding, one output per
    /// global event label index.
    Linear { width: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub video: EncoderConfig,
    pub text: TextConfig,
    pub prompt: PromptConfig,
    pub head: HeadKind,
    pub logit_scale_init: f64,
}

impl ModelConfig {
    /// X-CLIP-B/16 at 32 frames.
    pub fn full_scale() -> Self {
        Self {
            video: EncoderConfig {
                t_frames: 32,
                side: 224,
                patch: 16,
                d_model: 768,
                n_heads: 12,
                n_cct_layers: 12,
                n_mit_layers: 1,
                d_ffn: 3072,
                d_embed: 512,
                mit_heads: 8,
                d_mit_ffn: 2048,
            },
            text: TextConfig { d_text: 512, n_heads: 8, n_layers: 12, d_ffn: 2048 },
            prompt: PromptConfig { n_blocks: 2, n_heads: 8, d_ffn: 2048, alpha: 0.1 },
            head: HeadKind::Similarity,
            logit_scale_init: 100.0,
        }
    }

    /// Smallest useful configuration: 2 frames of 4×4 pixels, 2×2 patches, width 8.
    pub fn toy() -> Self {
        Self {
            video: EncoderConfig {
                t_frames: 2,
                side: 4,
                patch: 2,
                d_model: 8,
                n_heads: 2,
                n_cct_layers: 1,
                n_mit_layers: 1,
                d_ffn: 16,
                d_embed: 8,
                mit_heads: 2,
                d_mit_ffn: 16,
            },
            text: TextConfig { d_text: 8, n_heads: 2, n_layers: 1, d_ffn: 16 },
            prompt: PromptConfig { n_blocks: 2, n_heads: 2, d_ffn: 16, alpha: 0.1 },
            head: HeadKind::Similarity,
            logit_scale_init: 100.0,
        }
    }

    /// Desk-scale configuration used by the bundled fixtures and the CLI default.
    pub fn small() -> Self {
        Self {
            video: EncoderConfig {
                t_frames: 4,
                side: 16,
                patch: 8,
                d_model: 32,
                n_heads: 4,
                n_cct_layers: 2,
                n_mit_layers: 1,
                d_ffn: 64,
                d_embed: 32,
                mit_heads: 4,
                d_mit_ffn: 64,
            },
            text: TextConfig { d_text: 32, n_heads: 4, n_layers: 1, d_ffn: 64 },
            prompt: PromptConfig { n_blocks: 2, n_heads: 4, d_ffn: 64, alpha: 0.1 },
            head: HeadKind::Similarity,
            logit_scale_init: 100.0,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = &self.video;
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if v.t_frames == 0 || v.patch == 0 || v.side == 0 {
            return bad("t_frames, side and patch must be positive".into());
        }
        if v.side % v.patch != 0 {
            return bad(format!("side {} not divisible by patch {}", v.side, v.patch));
        }
        for (d, h, what) in [
            (v.d_model, v.n_heads, "video"),
            (v.d_embed, v.mit_heads, "mit"),
            (self.text.d_text, self.text.n_heads, "text"),
            (v.d_embed, self.prompt.n_heads, "prompt"),
        ] {
            if h == 0 || d == 0 || d % h != 0 {
                return bad(format!("{what}: width {d} not divisible by {h} heads"));
            }
        }
        if let HeadKind::Linear { width } = self.head {
            if width == 0 {
                return bad("linear head width must be positive".into());
            }
        }
        if !self.prompt.alpha.is_finite() || !self.logit_scale_init.is_finite() {
            return bad("alpha and logit scale must be finite".into());
        }
        Ok(())
    }
}
