//! Background ("nothing interesting happens") interval sampling.
//!
//! Each video's annotated events, plus `[0,0]` and `[duration,duration]`
//! sentinels, partition the timeline. A gap is the stretch between two
//! consecutive events shrunk by `buffer_secs` on both sides; only gaps at
//! least one second long are eligible. Sampling picks a file uniformly, a gap
//! uniformly, then a one-second window uniformly inside the gap. The window
//! joins the file's event list so later draws keep their distance from it.
//! Failed draws (no eligible gap) count against `max_retries`, cumulatively
//! and without reset.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{AnnotatedEvent, EventLabel, GameId};
use crate::seed::stream_rng;

pub const BACKGROUND_LEN_S: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("no background events: every gap is shorter than one second")]
    NoBackgroundEvents,
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_buffer")]
    pub buffer_secs: f64,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub target_count: Option<u32>,
}

fn default_max_retries() -> u32 {
    10
}

fn default_buffer() -> f64 {
    3.0
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            max_retries: default_max_retries(),
            buffer_secs: default_buffer(),
            rng_seed: 0,
            target_count: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.max_retries < 1 {
            return Err(SamplerError::InvalidConfig("max_retries must be >= 1".into()));
        }
        if !(self.buffer_secs >= 0.0 && self.buffer_secs.is_finite()) {
            return Err(SamplerError::InvalidConfig("buffer_secs must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start_s: f64,
    pub end_s: f64,
}

impl Interval {
    pub fn new(start_s: f64, end_s: f64) -> Self {
        Self { start_s, end_s }
    }

    pub fn len(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn is_empty(&self) -> bool {
        self.len() <= 0.0
    }

    /// Distance between two closed intervals (0 when they touch or overlap).
    pub fn distance(&self, other: &Interval) -> f64 {
        (other.start_s - self.end_s).max(self.start_s - other.end_s).max(0.0)
    }
}

/// An eligible gap, at least one second long.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gap {
    pub start_s: f64,
    pub end_s: f64,
}

/// Events of one file, kept with its boundary sentinels.
#[derive(Debug, Clone, PartialEq)]
pub struct FileEvents {
    pub duration_s: f64,
    events: Vec<Interval>,
}

impl FileEvents {
    pub fn new(duration_s: f64, events: impl IntoIterator<Item = Interval>) -> Self {
        let mut events: Vec<Interval> = events.into_iter().collect();
        events.push(Interval::new(0.0, 0.0));
        events.push(Interval::new(duration_s, duration_s));
        Self { duration_s, events }
    }

    pub fn events(&self) -> &[Interval] {
        &self.events
    }

    /// Eligible gaps in time order.
    ///
    /// Gap starts follow the running maximum of event ends, so an event
    /// nested inside a longer one cannot open a gap inside the longer one.
    pub fn gaps(&mut self, buffer_secs: f64) -> Vec<Gap> {
        self.events
            .sort_by(|a, b| a.start_s.total_cmp(&b.start_s).then(a.end_s.total_cmp(&b.end_s)));
        let mut gaps = Vec::new();
        let mut reach = f64::NEG_INFINITY;
        for pair in self.events.windows(2) {
            reach = reach.max(pair[0].end_s);
            let start_s = reach + buffer_secs;
            let end_s = pair[1].start_s - buffer_secs;
            if end_s - start_s >= BACKGROUND_LEN_S {
                gaps.push(Gap { start_s, end_s });
            }
        }
        gaps
    }
}

/// Draw one background interval from a file and record it in the file's events.
pub fn get_one_bkg_event<R: Rng + ?Sized>(
    file: &mut FileEvents,
    buffer_secs: f64,
    rng: &mut R,
) -> Result<Interval, SamplerError> {
    let gaps = file.gaps(buffer_secs);
    if gaps.is_empty() {
        return Err(SamplerError::NoBackgroundEvents);
    }
    let gap = gaps[rng.random_range(0..gaps.len())];
    let slack = gap.end_s - gap.start_s - BACKGROUND_LEN_S;
    let offset = if slack > 0.0 { rng.random::<f64>() * slack } else { 0.0 };
    let start = gap.start_s + offset;
    let picked = Interval::new(start, start + BACKGROUND_LEN_S);
    file.events.push(picked);
    Ok(picked)
}

/// Sample background intervals for one game's files.
///
/// `files` maps a video id to its duration and annotated events. Returns the
/// sampled intervals per file (files without samples are omitted), sorted by
/// start time.
pub fn get_bkg_events(
    game: GameId,
    files: &BTreeMap<String, (f64, Vec<AnnotatedEvent>)>,
    cfg: &SamplerConfig,
) -> Result<BTreeMap<String, Vec<Interval>>, SamplerError> {
    cfg.validate()?;
    let mut event_map: Vec<(&String, FileEvents)> = files
        .iter()
        .map(|(name, (duration, events))| {
            let ivs = events.iter().map(|e| Interval::new(e.start_s, e.end_s));
            (name, FileEvents::new(*duration, ivs))
        })
        .collect();

    let mut out: BTreeMap<String, Vec<Interval>> = BTreeMap::new();
    if event_map.is_empty() {
        return Ok(out);
    }
    let mut rng = stream_rng(cfg.rng_seed, &format!("sampler/{}", game.name()));
    let mut collected = 0u32;
    let mut retry_counter = 0u32;
    while retry_counter < cfg.max_retries {
        if cfg.target_count.is_some_and(|t| collected >= t) {
            break;
        }
        let idx = rng.random_range(0..event_map.len());
        let (name, file) = &mut event_map[idx];
        match get_one_bkg_event(file, cfg.buffer_secs, &mut rng) {
            Ok(iv) => {
                out.entry((*name).clone()).or_default().push(iv);
                collected += 1;
            }
            Err(SamplerError::NoBackgroundEvents) => retry_counter += 1,
            Err(e) => return Err(e),
        }
    }
    for ivs in out.values_mut() {
        ivs.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    }
    log::debug!(
        "{game}: sampled {collected} background intervals, {retry_counter} failed draws"
    );
    Ok(out)
}

pub fn to_background_events(
    game: GameId,
    sampled: &BTreeMap<String, Vec<Interval>>,
) -> Vec<AnnotatedEvent> {
    sampled
        .iter()
        .flat_map(|(video, ivs)| {
            ivs.iter().map(move |iv| AnnotatedEvent {
                video: video.clone(),
                start_s: iv.start_s,
                end_s: iv.end_s,
                label: EventLabel::Background,
                game,
            })
        })
        .collect()
}
