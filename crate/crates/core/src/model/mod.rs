//! X-CLIP style video classifier: video encoder, text encoder, video-specific
//! prompting and the classification head.

pub mod config;
pub mod nn;
pub mod params;
pub mod text;
pub mod video;

use std::collections::BTreeMap;
use std::sync::Arc;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{ConfigError, EncoderConfig, HeadKind, ModelConfig, PromptConfig, TextConfig};
pub use params::{ParamGroup, ParamStore};
pub use text::{PromptBook, PromptCache, PromptSet, PromptTemplate, TextError};

use crate::annotations::EventLabel;
use crate::autodiff::{Mat, Real, Var};
use crate::frames::ClipTensor;
use crate::quant::QuantParams;
use nn::{Ctx, QuantMode, Trainable};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("parameters do not match config: {0}")]
    Shape(String),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error("clip is {got:?} (frames, side), model expects {want:?}")]
    ClipShape { got: (usize, usize), want: (usize, usize) },
}

/// Where the base prompt embeddings come from inside a forward graph.
pub enum PromptInput<'a, F> {
    /// Precomputed `k×d` embeddings, treated as constants.
    Cached(&'a Mat<F>),
    /// Run the text encoder inside the graph.
    Encode,
}

#[derive(Debug, Clone)]
pub struct XClip<F> {
    pub cfg: ModelConfig,
    pub params: ParamStore<F>,
    text_stamp: [u8; 32],
}

impl<F: Real> XClip<F> {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let params = ParamStore::init(&cfg, seed);
        Ok(Self::assemble(cfg, params))
    }

    pub fn from_params(cfg: ModelConfig, params: ParamStore<F>) -> Result<Self, ModelError> {
        cfg.validate()?;
        params.check_shapes(&cfg).map_err(ModelError::Shape)?;
        Ok(Self::assemble(cfg, params))
    }

    fn assemble(cfg: ModelConfig, params: ParamStore<F>) -> Self {
        let mut m = Self { cfg, params, text_stamp: [0; 32] };
        m.refresh_stamp();
        m
    }

    /// Recomputes the text-side version stamp; call after mutating text or prompt tensors.
    pub fn refresh_stamp(&mut self) {
        let mut h = Sha256::new();
        for (name, m) in self.params.iter() {
            if matches!(ParamGroup::of(name), ParamGroup::TextEncoder | ParamGroup::PromptingModule) {
                h.update(name.as_bytes());
                for v in &m.data {
                    h.update(v.to_f64().unwrap().to_le_bytes());
                }
            }
        }
        self.text_stamp = h.finalize().into();
    }

    pub fn text_stamp(&self) -> [u8; 32] {
        self.text_stamp
    }

    pub fn check_clip(&self, clip: &ClipTensor) -> Result<(), ModelError> {
        let want = (self.cfg.video.t_frames, self.cfg.video.side);
        if (clip.t, clip.side) != want {
            return Err(ModelError::ClipShape { got: (clip.t, clip.side), want });
        }
        Ok(())
    }

    /// Video embedding `v` (`1×d_embed`).
    pub fn encode_video_with(&self, clip: &ClipTensor, quant: QuantMode<'_>) -> Mat<F> {
        let mut ctx = Ctx::new(&self.params, Trainable::None).with_quant(quant);
        let v = video::encode_video(&mut ctx, clip, &self.cfg.video);
        ctx.g.value(v).clone()
    }

    pub fn encode_video(&self, clip: &ClipTensor) -> Mat<F> {
        self.encode_video_with(clip, QuantMode::Off)
    }

    /// Base embeddings `c` for every prompt, `k×d_embed`.
    pub fn encode_prompts_with(&self, set: &PromptSet, quant: Option<&BTreeMap<String, QuantParams>>) -> Result<Mat<F>, TextError> {
        if set.is_empty() {
            return Err(TextError::EmptyPromptSet);
        }
        let mut rows = Vec::with_capacity(set.len());
        for p in &set.prompts {
            let tokens = p.tokens()?;
            let mode = quant.map_or(QuantMode::Off, QuantMode::Simulate);
            let mut ctx = Ctx::new(&self.params, Trainable::None).with_quant(mode);
            let c = text::encode_text(&mut ctx, &tokens, &self.cfg)?;
            rows.push(ctx.g.value(c).clone());
        }
        let cols = rows[0].cols;
        Ok(Mat::from_vec(rows.len(), cols, rows.into_iter().flat_map(|m| m.data).collect()))
    }

    pub fn encode_prompts(&self, set: &PromptSet) -> Result<Mat<F>, TextError> {
        self.encode_prompts_with(set, None)
    }

    /// Cache-backed [`Self::encode_prompts`].
    pub fn prompt_embeddings(&self, set: &PromptSet, cache: &PromptCache<F>) -> Result<Arc<Mat<F>>, TextError> {
        self.prompt_embeddings_with(set, cache, None)
    }

    fn prompt_embeddings_with(
        &self,
        set: &PromptSet,
        cache: &PromptCache<F>,
        quant: Option<&BTreeMap<String, QuantParams>>,
    ) -> Result<Arc<Mat<F>>, TextError> {
        let stamp = match quant {
            None => self.text_stamp,
            Some(table) => {
                let mut h = Sha256::new();
                h.update(self.text_stamp);
                for (k, qp) in table {
                    h.update(k.as_bytes());
                    h.update(qp.scale.to_le_bytes());
                }
                h.finalize().into()
            }
        };
        cache.get_or_insert(set.fingerprint(&stamp), || Ok((self.encode_prompts_with(set, quant)?, set.len())))
    }

    /// Class logits (`1×k`) for one clip in `ctx`.
    pub fn logits(
        &self,
        ctx: &mut Ctx<'_, F>,
        clip: &ClipTensor,
        set: &PromptSet,
        prompts: PromptInput<'_, F>,
    ) -> Result<Var, ModelError> {
        self.check_clip(clip)?;
        if set.is_empty() {
            return Err(TextError::EmptyPromptSet.into());
        }
        let v = video::encode_video(ctx, clip, &self.cfg.video);
        match self.cfg.head {
            HeadKind::Similarity => {
                let c = match prompts {
                    PromptInput::Cached(m) => {
                        if m.shape() != (set.len(), self.cfg.video.d_embed) {
                            return Err(TextError::ShapeMismatch(format!("prompt embeddings {:?}", m.shape())).into());
                        }
                        ctx.input(m.clone())
                    }
                    PromptInput::Encode => {
                        let mut rows = Vec::with_capacity(set.len());
                        for p in &set.prompts {
                            rows.push(text::encode_text(ctx, &p.tokens()?, &self.cfg)?);
                        }
                        ctx.g.concat_rows(&rows)
                    }
                };
                let cbar = text::video_prompt(ctx, c, v, &self.cfg);
                let cos = ctx.g.cosine(v, cbar);
                let s = ctx.p("text.logit_scale");
                Ok(ctx.g.scale_by(cos, s))
            }
            HeadKind::Linear { width } => {
                let all = ctx.linear(v, "head");
                let mut cols = Vec::with_capacity(set.len());
                for label in set.labels() {
                    if label.index() >= width {
                        return Err(TextError::ShapeMismatch(format!("head width {width} has no output for {label}")).into());
                    }
                    cols.push(ctx.g.slice_cols(all, label.index(), 1));
                }
                Ok(ctx.g.concat_cols(&cols))
            }
        }
    }

    /// Class probabilities, ordered as in `set`.
    pub fn classify(&self, clip: &ClipTensor, set: &PromptSet, cache: &PromptCache<F>) -> Result<Vec<(EventLabel, f64)>, ModelError> {
        self.classify_with(clip, set, cache, None)
    }

    /// [`Self::classify`] with optional activation fake-quantization.
    pub fn classify_with(
        &self,
        clip: &ClipTensor,
        set: &PromptSet,
        cache: &PromptCache<F>,
        quant: Option<&BTreeMap<String, QuantParams>>,
    ) -> Result<Vec<(EventLabel, f64)>, ModelError> {
        let c = match self.cfg.head {
            HeadKind::Similarity => Some(self.prompt_embeddings_with(set, cache, quant)?),
            HeadKind::Linear { .. } => None,
        };
        let mode = quant.map_or(QuantMode::Off, QuantMode::Simulate);
        let mut ctx = Ctx::new(&self.params, Trainable::None).with_quant(mode);
        let input = match &c {
            Some(m) => PromptInput::Cached(m),
            None => PromptInput::Encode,
        };
        let logits = self.logits(&mut ctx, clip, set, input)?;
        let probs = ctx.g.softmax_rows(logits, false);
        let p = ctx.g.value(probs);
        Ok(set.labels().into_iter().zip(p.data.iter().map(|x| x.to_f64().unwrap())).collect())
    }

    /// Full forward pass recording activation ranges at every matmul input,
    /// text side included.
    pub fn calibrate_forward(&self, clip: &ClipTensor, set: &PromptSet, rec: &mut crate::quant::RangeRecorder) -> Result<(), ModelError> {
        let mut ctx = Ctx::new(&self.params, Trainable::None).with_quant(QuantMode::Calibrate(rec));
        self.logits(&mut ctx, clip, set, PromptInput::Encode)?;
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.params.num_params()
    }

    pub fn cast<G: Real>(&self) -> XClip<G> {
        let mut m = XClip { cfg: self.cfg.clone(), params: self.params.cast(), text_stamp: [0; 32] };
        m.refresh_stamp();
        m
    }
}

/// Index of the largest probability; the first wins ties.
pub fn argmax(probs: &[(EventLabel, f64)]) -> Option<(EventLabel, f64)> {
    probs.iter().copied().fold(None, |best, (l, p)| match best {
        Some((_, bp)) if bp >= p => best,
        _ => Some((l, p)),
    })
}
