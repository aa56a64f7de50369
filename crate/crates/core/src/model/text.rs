//! Byte tokenizer, text encoder, video-conditioned prompting and the per-game
//! prompt catalogue.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::{ModelConfig, CONTEXT_LEN};
use super::nn::Ctx;
use crate::annotations::{EventLabel, GameId};
use crate::autodiff::{lit, Mat, Real, Var};

pub const BOS: usize = 256;
pub const EOS: usize = 257;
pub const PAD: usize = 258;
/// Bytes that fit between BOS and EOS.
pub const MAX_PROMPT_BYTES: usize = CONTEXT_LEN - 2;

const BUILTIN_CATALOGUE: &str = include_str!("prompts.json");

#[derive(Debug, Error, PartialEq)]
pub enum TextError {
    #[error("prompt is {len} bytes; at most {max} fit in the context", max = MAX_PROMPT_BYTES)]
    TooLong { len: usize },
    #[error("prompt set is empty")]
    EmptyPromptSet,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("prompt catalogue: {0}")]
    Catalogue(String),
    #[error("no prompts for game {0}")]
    NoPrompts(GameId),
}

/// `[BOS] + bytes + [EOS]`, padded with PAD to the context length.
pub fn tokenize(text: &str) -> Result<Vec<usize>, TextError> {
    let bytes = text.as_bytes();
    if bytes.len() > MAX_PROMPT_BYTES {
        return Err(TextError::TooLong { len: bytes.len() });
    }
    let mut out = Vec::with_capacity(CONTEXT_LEN);
    out.push(BOS);
    out.extend(bytes.iter().map(|&b| b as usize));
    out.push(EOS);
    out.resize(CONTEXT_LEN, PAD);
    Ok(out)
}

/// Text embedding `c`, `1×d_embed`: causal transformer state at EOS,
/// normalized and projected.
pub fn encode_text<F: Real>(ctx: &mut Ctx<'_, F>, tokens: &[usize], cfg: &ModelConfig) -> Result<Var, TextError> {
    if tokens.len() != CONTEXT_LEN {
        return Err(TextError::ShapeMismatch(format!("expected {CONTEXT_LEN} tokens, got {}", tokens.len())));
    }
    let eos = tokens
        .iter()
        .position(|&t| t == EOS)
        .ok_or_else(|| TextError::ShapeMismatch("no EOS token".into()))?;
    let tok = ctx.p("text.tok");
    let x = ctx.g.gather_rows(tok, tokens);
    let pos = ctx.p("text.pos");
    let mut x = ctx.g.add(x, pos);
    for l in 0..cfg.text.n_layers {
        x = ctx.block(x, &format!("text.layers.{l}"), cfg.text.n_heads, true);
    }
    let h = ctx.g.slice_rows(x, eos, 1);
    let h = ctx.ln(h, "text.ln_final");
    Ok(ctx.linear(h, "text.proj"))
}

/// `c̄ = c + α·c″` where each block applies `x ← x + MHSA(x, v)` then
/// `x ← x + FFN(x)`; `c` is `k×d`, `v` is `1×d`.
pub fn video_prompt<F: Real>(ctx: &mut Ctx<'_, F>, c: Var, v: Var, cfg: &ModelConfig) -> Var {
    let mut x = c;
    for b in 0..cfg.prompt.n_blocks {
        let a = ctx.cross_attn(x, v, &format!("prompt.{b}.attn"), cfg.prompt.n_heads);
        x = ctx.g.add(x, a);
        let f = ctx.ffn(x, &format!("prompt.{b}.ffn"));
        x = ctx.g.add(x, f);
    }
    let scaled = ctx.g.scale(x, lit(cfg.prompt.alpha));
    ctx.g.add(c, scaled)
}

/// "Game. event. description" with the description segment omitted when empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub game: String,
    pub event: EventLabel,
    /// Event name as written in the prompt.
    pub event_text: String,
    pub description: String,
}

impl PromptTemplate {
    pub fn new(game: &str, event: EventLabel, description: &str) -> Self {
        Self { game: game.into(), event, event_text: event.text().into(), description: description.into() }
    }

    pub fn render(&self) -> String {
        let mut s = format!("{}. {}.", self.game, self.event_text);
        if !self.description.is_empty() {
            s.push(' ');
            s.push_str(&self.description);
        }
        s
    }

    pub fn tokens(&self) -> Result<Vec<usize>, TextError> {
        tokenize(&self.render())
    }

    /// Drops trailing description words until the rendering fits the context.
    fn fit(mut self) -> Self {
        let before = self.render();
        while self.render().len() > MAX_PROMPT_BYTES && !self.description.is_empty() {
            match self.description.rfind(' ') {
                Some(i) => self.description.truncate(i),
                None => self.description.clear(),
            }
        }
        if self.render() != before {
            warn!("prompt shortened to fit the context: {:?} -> {:?}", before, self.render());
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogueEntry {
    pub game: String,
    pub event: String,
    pub description: String,
}

/// Parses a catalogue file: a JSON list of `{game, event, description}`.
pub fn parse_catalogue(json: &str) -> Result<Vec<PromptTemplate>, TextError> {
    let entries: Vec<CatalogueEntry> =
        serde_json::from_str(json).map_err(|e| TextError::Catalogue(e.to_string()))?;
    entries
        .into_iter()
        .map(|e| {
            let label = EventLabel::parse_loose(&e.event)
                .ok_or_else(|| TextError::Catalogue(format!("unknown event {:?}", e.event)))?;
            Ok(PromptTemplate { game: e.game, event: label, event_text: e.event, description: e.description })
        })
        .collect()
}

pub fn builtin_catalogue() -> Vec<PromptTemplate> {
    parse_catalogue(BUILTIN_CATALOGUE).expect("built-in catalogue parses")
}

/// Ordered prompts for one game; position is the class index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSet {
    pub game: GameId,
    pub prompts: Vec<PromptTemplate>,
}

impl PromptSet {
    pub fn new(game: GameId, prompts: Vec<PromptTemplate>) -> Result<Self, TextError> {
        if prompts.is_empty() {
            return Err(TextError::EmptyPromptSet);
        }
        let mut seen = BTreeSet::new();
        for p in &prompts {
            if !seen.insert(p.event) {
                return Err(TextError::Catalogue(format!("duplicate label {} for {game}", p.event)));
            }
            p.tokens()?;
        }
        Ok(Self { game, prompts })
    }

    /// Catalogue prompts for `game`, ordered by the game's class order.
    pub fn from_catalogue(catalogue: &[PromptTemplate], game: GameId) -> Result<Self, TextError> {
        if game == GameId::Unknown {
            return Ok(Self::unknown(&[EventLabel::Kill, EventLabel::Death, EventLabel::Background]));
        }
        let mut prompts = Vec::new();
        for &label in game.catalogue() {
            let found = catalogue.iter().find(|p| {
                p.event == label && p.game.parse::<GameId>().map(|g| g == game).unwrap_or(false)
            });
            match found {
                Some(p) => prompts.push(p.clone().fit()),
                None => prompts.push(PromptTemplate::new(game.name(), label, "")),
            }
        }
        if prompts.is_empty() {
            return Err(TextError::NoPrompts(game));
        }
        Self::new(game, prompts)
    }

    pub fn builtin(game: GameId) -> Self {
        Self::from_catalogue(&builtin_catalogue(), game).expect("built-in prompts are valid")
    }

    /// "Unknown. Kill." style prompts with no description.
    pub fn unknown(labels: &[EventLabel]) -> Self {
        let prompts = labels
            .iter()
            .map(|&l| PromptTemplate {
                game: GameId::Unknown.name().into(),
                event: l,
                event_text: l.title(),
                description: String::new(),
            })
            .collect();
        Self { game: GameId::Unknown, prompts }
    }

    pub fn labels(&self) -> Vec<EventLabel> {
        self.prompts.iter().map(|p| p.event).collect()
    }

    pub fn index_of(&self, label: EventLabel) -> Option<usize> {
        self.prompts.iter().position(|p| p.event == label)
    }

    pub fn rendered(&self) -> Vec<String> {
        self.prompts.iter().map(PromptTemplate::render).collect()
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    /// SHA-256 over the rendered prompts and a text-parameter stamp.
    pub fn fingerprint(&self, text_stamp: &[u8; 32]) -> [u8; 32] {
        let mut h = Sha256::new();
        for r in self.rendered() {
            h.update((r.len() as u64).to_le_bytes());
            h.update(r.as_bytes());
        }
        h.update(text_stamp);
        h.finalize().into()
    }
}

/// Prompt sets for every game.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBook {
    sets: BTreeMap<GameId, PromptSet>,
}

impl PromptBook {
    pub fn from_catalogue(catalogue: &[PromptTemplate]) -> Result<Self, TextError> {
        let mut sets = BTreeMap::new();
        for g in GameId::CATALOGUED.into_iter().chain([GameId::Unknown]) {
            sets.insert(g, PromptSet::from_catalogue(catalogue, g)?);
        }
        Ok(Self { sets })
    }

    pub fn builtin() -> Self {
        Self::from_catalogue(&builtin_catalogue()).expect("built-in prompts are valid")
    }

    pub fn get(&self, game: GameId) -> &PromptSet {
        &self.sets[&game]
    }

    pub fn set(&mut self, set: PromptSet) {
        self.sets.insert(set.game, set);
    }

    pub fn iter(&self) -> impl Iterator<Item = &PromptSet> {
        self.sets.values()
    }
}

/// Base prompt embeddings keyed by prompt-set fingerprint.
#[derive(Debug, Default)]
pub struct PromptCache<F> {
    map: RwLock<HashMap<[u8; 32], Arc<Mat<F>>>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
    encodes: AtomicUsize,
}

impl<F: Real> PromptCache<F> {
    pub fn new() -> Self {
        Self {
            map: RwLock::new(HashMap::new()),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
            encodes: AtomicUsize::new(0),
        }
    }

    /// Cached embeddings for `key`, or the result of `encode` (one call per
    /// prompt, reported through the returned count) inserted under it.
    pub fn get_or_insert(
        &self,
        key: [u8; 32],
        encode: impl FnOnce() -> Result<(Mat<F>, usize), TextError>,
    ) -> Result<Arc<Mat<F>>, TextError> {
        if let Some(m) = self.map.read().expect("cache lock").get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(Arc::clone(m));
        }
        let mut map = self.map.write().expect("cache lock");
        if let Some(m) = map.get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(Arc::clone(m));
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let (m, calls) = encode()?;
        self.encodes.fetch_add(calls, Ordering::Relaxed);
        let m = Arc::new(m);
        map.insert(key, Arc::clone(&m));
        Ok(m)
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    /// Total text-encoder invocations made on behalf of this cache.
    pub fn encode_calls(&self) -> usize {
        self.encodes.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
