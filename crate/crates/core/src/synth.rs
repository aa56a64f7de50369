//! Deterministic synthetic gameplay footage for fixtures, tests and benches.
//!
//! Every event label has its own tint; seconds outside events are grey noise.

use rand::Rng;

use crate::annotations::{AnnotatedEvent, EventLabel};
use crate::frames::{Frame, RawClip};
use crate::seed::stream_rng;

pub fn label_color(label: EventLabel) -> [u8; 3] {
    match label {
        EventLabel::Kill => [220, 40, 40],
        EventLabel::Death => [40, 60, 220],
        EventLabel::GrenadeThrow => [40, 200, 60],
        EventLabel::Reload => [220, 200, 40],
        EventLabel::BombPlanted => [200, 40, 200],
        EventLabel::KnockedDown => [40, 200, 200],
        EventLabel::PowerUse => [240, 140, 20],
        EventLabel::Background => [110, 110, 110],
    }
}

fn render_frame(side: u32, label: EventLabel, phase: u32, rng: &mut impl Rng) -> Frame {
    let base = label_color(label);
    let mut data = Vec::with_capacity((side * side * 3) as usize);
    for y in 0..side {
        for x in 0..side {
            // a band sweeping across the frame gives some motion
            let band = (x + y + phase) % side < side / 4;
            for &b in &base {
                let jitter: i32 = rng.random_range(-20..=20);
                let lift = if band && label != EventLabel::Background { 30 } else { 0 };
                data.push((i32::from(b) + jitter + lift).clamp(0, 255) as u8);
            }
        }
    }
    Frame { width: side, height: side, data }
}

/// `duration_s` seconds of square `side`-pixel footage at `fps`; frames
/// whose midpoint falls inside an event show that event's tint.
pub fn render_session(duration_s: u32, fps: u32, side: u32, events: &[AnnotatedEvent], seed: u64) -> RawClip {
    let mut rng = stream_rng(seed, "synth");
    let n = duration_s * fps;
    let frames = (0..n)
        .map(|i| {
            let t = (f64::from(i) + 0.5) / f64::from(fps);
            let label = events
                .iter()
                .find(|e| e.start_s <= t && t < e.end_s)
                .map_or(EventLabel::Background, |e| e.label);
            render_frame(side, label, i, &mut rng)
        })
        .collect();
    RawClip::new(fps, 1, frames).expect("synthetic frames are consistent")
}

/// One second of footage showing `label`.
pub fn render_clip(label: EventLabel, fps: u32, side: u32, seed: u64) -> RawClip {
    let ev = AnnotatedEvent {
        video: String::new(),
        start_s: 0.0,
        end_s: 1.0,
        label,
        game: crate::annotations::GameId::Unknown,
    };
    render_session(1, fps, side, &[ev], seed)
}
