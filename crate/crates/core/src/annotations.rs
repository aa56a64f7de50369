//! Annotated events, the per-game event catalogue, VIA project parsing and
//! seeded train/test manifests.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::seed::stream_rng;

pub const MANIFEST_VERSION: &str = "1";
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("malformed VIA json: {0}")]
    MalformedJson(String),
    #[error("unknown label {label:?} for game {game}")]
    UnknownLabel { label: String, game: GameId },
    #[error("negative interval [{start_s}, {end_s}] in {video}")]
    NegativeInterval { video: String, start_s: f64, end_s: f64 },
    #[error("event [{start_s}, {end_s}] in {video} exceeds duration {duration_s}")]
    OutOfBounds {
        video: String,
        start_s: f64,
        end_s: f64,
        duration_s: f64,
    },
    #[error("video {video} is {duration_s}s long, clips need at least 1s")]
    DurationTooShort { video: String, duration_s: f64 },
    #[error("no duration known for video {0}")]
    MissingDuration(String),
    #[error("unknown game {0:?}")]
    UnknownGame(String),
    #[error("manifest: {0}")]
    Manifest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GameId {
    #[serde(rename = "CSGO")]
    Csgo,
    #[serde(rename = "PUBG")]
    Pubg,
    Valorant,
    #[serde(rename = "OW2")]
    Ow2,
    Fortnite,
    Unknown,
}

impl GameId {
    pub const CATALOGUED: [GameId; 5] = [
        GameId::Csgo,
        GameId::Pubg,
        GameId::Valorant,
        GameId::Ow2,
        GameId::Fortnite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GameId::Csgo => "CSGO",
            GameId::Pubg => "PUBG",
            GameId::Valorant => "Valorant",
            GameId::Ow2 => "OW2",
            GameId::Fortnite => "Fortnite",
            GameId::Unknown => "Unknown",
        }
    }

    /// Events that occur in this game, Background included, in class order.
    /// `Unknown` accepts every label.
    pub fn catalogue(self) -> &'static [EventLabel] {
        use EventLabel::*;
        match self {
            GameId::Csgo => &[Kill, Death, GrenadeThrow, Reload, BombPlanted, Background],
            GameId::Pubg => &[Kill, Death, GrenadeThrow, Reload, KnockedDown, Background],
            GameId::Valorant => &[Kill, Death, PowerUse, Reload, BombPlanted, Background],
            GameId::Ow2 => &[Kill, Death, PowerUse, Background],
            GameId::Fortnite => &[Kill, Death, Reload, KnockedDown, Background],
            GameId::Unknown => &EventLabel::ALL,
        }
    }

    pub fn supports(self, label: EventLabel) -> bool {
        self == GameId::Unknown || self.catalogue().contains(&label)
    }
}

impl fmt::Display for GameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GameId {
    type Err = AnnotationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match key.as_str() {
            "csgo" | "counterstrike" => GameId::Csgo,
            "pubg" => GameId::Pubg,
            "valorant" => GameId::Valorant,
            "ow2" | "overwatch2" => GameId::Ow2,
            "fortnite" => GameId::Fortnite,
            "unknown" => GameId::Unknown,
            _ => return Err(AnnotationError::UnknownGame(s.to_string())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventLabel {
    Kill,
    Death,
    GrenadeThrow,
    Reload,
    BombPlanted,
    KnockedDown,
    PowerUse,
    Background,
}

impl EventLabel {
    pub const ALL: [EventLabel; 8] = [
        EventLabel::Kill,
        EventLabel::Death,
        EventLabel::GrenadeThrow,
        EventLabel::Reload,
        EventLabel::BombPlanted,
        EventLabel::KnockedDown,
        EventLabel::PowerUse,
        EventLabel::Background,
    ];

    /// Lower-case spaced form used in annotations and prompts ("grenade throw").
    pub fn text(self) -> &'static str {
        match self {
            EventLabel::Kill => "kill",
            EventLabel::Death => "death",
            EventLabel::GrenadeThrow => "grenade throw",
            EventLabel::Reload => "reload",
            EventLabel::BombPlanted => "bomb planted",
            EventLabel::KnockedDown => "knocked down",
            EventLabel::PowerUse => "power use",
            EventLabel::Background => "background",
        }
    }

    /// Title-cased form ("Grenade Throw").
    pub fn title(self) -> String {
        self.text()
            .split(' ')
            .map(|w| {
                let mut c = w.chars();
                match c.next() {
                    Some(f) => f.to_ascii_uppercase().to_string() + c.as_str(),
                    None => String::new(),
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn index(self) -> usize {
        EventLabel::ALL.iter().position(|&l| l == self).unwrap()
    }

    /// Case, whitespace, '-' and '_' insensitive lookup.
    pub fn parse_loose(s: &str) -> Option<EventLabel> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Some(match key.as_str() {
            "kill" => EventLabel::Kill,
            "death" => EventLabel::Death,
            "grenadethrow" | "grenade" => EventLabel::GrenadeThrow,
            "reload" => EventLabel::Reload,
            "bombplanted" | "bombplant" => EventLabel::BombPlanted,
            "knockeddown" | "knock" => EventLabel::KnockedDown,
            "poweruse" => EventLabel::PowerUse,
            "background" | "bg" => EventLabel::Background,
            _ => return None,
        })
    }
}

impl fmt::Display for EventLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.text())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedEvent {
    pub video: String,
    pub start_s: f64,
    pub end_s: f64,
    pub label: EventLabel,
    pub game: GameId,
}

impl AnnotatedEvent {
    pub fn validate(&self, duration_s: Option<f64>) -> Result<(), AnnotationError> {
        if !(self.start_s >= 0.0 && self.start_s <= self.end_s) {
            return Err(AnnotationError::NegativeInterval {
                video: self.video.clone(),
                start_s: self.start_s,
                end_s: self.end_s,
            });
        }
        if let Some(d) = duration_s {
            if self.end_s > d {
                return Err(AnnotationError::OutOfBounds {
                    video: self.video.clone(),
                    start_s: self.start_s,
                    end_s: self.end_s,
                    duration_s: d,
                });
            }
        }
        if !self.game.supports(self.label) {
            return Err(AnnotationError::UnknownLabel {
                label: self.label.text().to_string(),
                game: self.game,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRef {
    pub video: String,
    pub clip_start_s: f64,
    pub label: EventLabel,
    pub game: GameId,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: String,
    pub seed: u64,
    pub entries: Vec<ClipRef>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ClipRef> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn to_json(&self) -> String {
        crate::json::to_canonical_string(self).expect("manifest serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, AnnotationError> {
        serde_json::from_str(s).map_err(|e| AnnotationError::Manifest(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, AnnotationError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| AnnotationError::Manifest(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }
}

/// Parse a VIA-3 project export. Temporal segments (metadata with an empty
/// `xy` and a two-element `z`) become events; every other VIA feature is
/// ignored. The label is the first non-empty attribute value, resolved
/// through the attribute's option table when it has one.
pub fn parse_via(json_bytes: &[u8], game: GameId) -> Result<Vec<AnnotatedEvent>, AnnotationError> {
    let root: Value = serde_json::from_slice(json_bytes)
        .map_err(|e| AnnotationError::MalformedJson(e.to_string()))?;
    let obj = root
        .as_object()
        .ok_or_else(|| AnnotationError::MalformedJson("top level is not an object".into()))?;

    let empty = serde_json::Map::new();
    let section = |key: &str| -> Result<&serde_json::Map<String, Value>, AnnotationError> {
        match obj.get(key) {
            None | Some(Value::Null) => Ok(&empty),
            Some(Value::Object(m)) => Ok(m),
            Some(_) => Err(AnnotationError::MalformedJson(format!("`{key}` is not an object"))),
        }
    };
    let files = section("file")?;
    let views = section("view")?;
    let attributes = section("attribute")?;
    let metadata = section("metadata")?;

    let mut events = Vec::new();
    for (mid, meta) in metadata {
        let meta = meta
            .as_object()
            .ok_or_else(|| AnnotationError::MalformedJson(format!("metadata {mid} is not an object")))?;
        let has_xy = meta
            .get("xy")
            .and_then(Value::as_array)
            .is_some_and(|a| !a.is_empty());
        let z = match meta.get("z").and_then(Value::as_array) {
            Some(z) => z,
            None => continue,
        };
        if has_xy || z.len() != 2 {
            continue;
        }
        let start_s = num(&z[0], mid)?;
        let end_s = num(&z[1], mid)?;

        let vid = meta
            .get("vid")
            .and_then(|v| v.as_str().map(str::to_string).or_else(|| v.as_u64().map(|n| n.to_string())))
            .ok_or_else(|| AnnotationError::MalformedJson(format!("metadata {mid} has no vid")))?;
        let video = resolve_video(&vid, views, files)?;

        let av = meta
            .get("av")
            .and_then(Value::as_object)
            .ok_or_else(|| AnnotationError::MalformedJson(format!("metadata {mid} has no av")))?;
        let raw = av
            .iter()
            .find_map(|(aid, val)| {
                let s = val.as_str()?.trim();
                if s.is_empty() {
                    return None;
                }
                let resolved = attributes
                    .get(aid)
                    .and_then(|a| a.get("options"))
                    .and_then(|o| o.get(s))
                    .and_then(Value::as_str)
                    .unwrap_or(s);
                Some(resolved.to_string())
            })
            .ok_or_else(|| AnnotationError::MalformedJson(format!("metadata {mid} has no label")))?;

        let label = EventLabel::parse_loose(&raw).ok_or_else(|| AnnotationError::UnknownLabel {
            label: raw.clone(),
            game,
        })?;
        let event = AnnotatedEvent {
            video,
            start_s,
            end_s,
            label,
            game,
        };
        event.validate(None)?;
        events.push(event);
    }
    sort_events(&mut events);
    Ok(events)
}

fn num(v: &Value, mid: &str) -> Result<f64, AnnotationError> {
    v.as_f64()
        .or_else(|| v.as_str().and_then(|s| s.parse().ok()))
        .filter(|x: &f64| x.is_finite())
        .ok_or_else(|| AnnotationError::MalformedJson(format!("metadata {mid}: bad time {v}")))
}

fn resolve_video(
    vid: &str,
    views: &serde_json::Map<String, Value>,
    files: &serde_json::Map<String, Value>,
) -> Result<String, AnnotationError> {
    let fid = views
        .get(vid)
        .and_then(|v| v.get("fid_list"))
        .and_then(Value::as_array)
        .and_then(|l| l.first())
        .and_then(|f| f.as_str().map(str::to_string).or_else(|| f.as_u64().map(|n| n.to_string())))
        .unwrap_or_else(|| vid.to_string());
    let fname = files
        .get(&fid)
        .and_then(|f| f.get("fname"))
        .and_then(Value::as_str)
        .ok_or_else(|| AnnotationError::MalformedJson(format!("no file entry for view {vid}")))?;
    Ok(video_id(fname))
}

/// Video id of a file name: the stem without directories or extension.
pub fn video_id(fname: &str) -> String {
    Path::new(fname)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| fname.to_string())
}

pub fn sort_events(events: &mut [AnnotatedEvent]) {
    events.sort_by(|a, b| {
        a.video
            .cmp(&b.video)
            .then(a.start_s.total_cmp(&b.start_s))
            .then(a.end_s.total_cmp(&b.end_s))
            .then(a.label.cmp(&b.label))
    });
}

/// Serialize events as a minimal VIA-3 project (one file and view per video,
/// one text attribute holding the label).
pub fn to_via(events: &[AnnotatedEvent]) -> String {
    let videos: BTreeSet<&str> = events.iter().map(|e| e.video.as_str()).collect();
    let ids: BTreeMap<&str, usize> = videos.iter().enumerate().map(|(i, v)| (*v, i + 1)).collect();
    let mut file = serde_json::Map::new();
    let mut view = serde_json::Map::new();
    for (v, id) in &ids {
        file.insert(
            id.to_string(),
            json!({"fid": id.to_string(), "fname": format!("{v}.mp4"), "type": 4, "loc": 1, "src": ""}),
        );
        view.insert(id.to_string(), json!({"fid_list": [id.to_string()]}));
    }
    let mut metadata = serde_json::Map::new();
    for (i, e) in events.iter().enumerate() {
        let id = ids[e.video.as_str()];
        metadata.insert(
            format!("{id}_{i}"),
            json!({"vid": id.to_string(), "flg": 0, "z": [e.start_s, e.end_s], "xy": [], "av": {"1": e.label.text()}}),
        );
    }
    let project = json!({
        "project": {"pid": "__VIA_PROJECT_ID__", "rev": "__VIA_PROJECT_REV_ID__", "pname": "clipreel export",
                    "vid_list": ids.values().map(|i| i.to_string()).collect::<Vec<_>>()},
        "config": {"file": {"loc_prefix": {"1": "", "2": "", "3": "", "4": ""}}},
        "attribute": {"1": {"aname": "event", "anchor_id": "FILE1_Z2_XY0", "type": 1, "desc": "", "options": {}, "default_option_id": ""}},
        "file": file,
        "view": view,
        "metadata": metadata,
    });
    crate::json::to_canonical_string(&project).expect("VIA project serializes")
}

/// One-second clip centered at the event midpoint, clamped to the video.
pub fn event_to_clip(
    e: &AnnotatedEvent,
    video_duration_s: f64,
    split: Split,
) -> Result<ClipRef, AnnotationError> {
    if !(video_duration_s >= 1.0) {
        return Err(AnnotationError::DurationTooShort {
            video: e.video.clone(),
            duration_s: video_duration_s,
        });
    }
    let mid = 0.5 * (e.start_s + e.end_s);
    let clip_start_s = (mid - 0.5).clamp(0.0, video_duration_s - 1.0);
    Ok(ClipRef {
        video: e.video.clone(),
        clip_start_s,
        label: e.label,
        game: e.game,
        split,
    })
}

/// Stratified (game, label) 80/20 split under a seeded shuffle.
///
/// Strata with fewer than two clips go wholly to train. Identical clip
/// references are collapsed. The result depends only on the inputs and the
/// seed, not on input order.
pub fn build_manifest(
    events: &[AnnotatedEvent],
    backgrounds: &[AnnotatedEvent],
    durations: &BTreeMap<String, f64>,
    seed: u64,
) -> Result<DatasetManifest, AnnotationError> {
    let mut strata: BTreeMap<(GameId, EventLabel), Vec<ClipRef>> = BTreeMap::new();
    for e in events.iter().chain(backgrounds) {
        let d = *durations
            .get(&e.video)
            .ok_or_else(|| AnnotationError::MissingDuration(e.video.clone()))?;
        e.validate(Some(d))?;
        let clip = event_to_clip(e, d, Split::Train)?;
        strata.entry((e.game, e.label)).or_default().push(clip);
    }

    let mut entries = Vec::new();
    for ((game, label), mut clips) in strata {
        clips.sort_by(|a, b| a.video.cmp(&b.video).then(a.clip_start_s.total_cmp(&b.clip_start_s)));
        let before = clips.len();
        clips.dedup_by(|a, b| a.video == b.video && a.clip_start_s.to_bits() == b.clip_start_s.to_bits());
        if clips.len() < before {
            log::warn!("{game}/{label}: collapsed {} duplicate clips", before - clips.len());
        }
        let n = clips.len();
        if n < 2 {
            log::warn!("{game}/{label}: stratum has {n} clip(s), assigned wholly to train");
            entries.extend(clips);
            continue;
        }
        let mut rng = stream_rng(seed, &format!("split/{}/{}", game.name(), label.text()));
        clips.shuffle(&mut rng);
        let n_train = (TRAIN_FRACTION * n as f64).round() as usize;
        for (i, mut c) in clips.into_iter().enumerate() {
            c.split = if i < n_train { Split::Train } else { Split::Test };
            entries.push(c);
        }
    }
    entries.sort_by(|a, b| {
        a.game
            .cmp(&b.game)
            .then(a.label.cmp(&b.label))
            .then(a.video.cmp(&b.video))
            .then(a.clip_start_s.total_cmp(&b.clip_start_s))
    });
    Ok(DatasetManifest {
        version: MANIFEST_VERSION.to_string(),
        seed,
        entries,
    })
}
