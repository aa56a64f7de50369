//! Regenerates the bundled toy fixture under `fixtures/toy`.
//!
//! cargo run -p clipreel-cli --example make_fixture

use std::fs;
use std::path::Path;

use clipreel::annotations::{to_via, AnnotatedEvent, EventLabel, GameId};
use clipreel::frames::save_rgbc;
use clipreel::synth::render_session;

const FPS: u32 = 4;
const SIDE: u32 = 16;

fn ev(video: &str, game: GameId, start_s: f64, end_s: f64, label: EventLabel) -> AnnotatedEvent {
    AnnotatedEvent { video: video.into(), start_s, end_s, label, game }
}

fn main() -> anyhow::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy");
    fs::create_dir_all(root.join("videos"))?;
    fs::create_dir_all(root.join("annotations"))?;
    fs::create_dir_all(root.join("session"))?;

    use EventLabel::*;
    let layout = [Kill, Death, Reload, Kill];
    for (game, stem) in [(GameId::Csgo, "csgo"), (GameId::Valorant, "valorant")] {
        let mut all = Vec::new();
        for (k, suffix) in ["a", "b"].iter().enumerate() {
            let video = format!("{stem}_{suffix}");
            let events: Vec<_> = layout
                .iter()
                .enumerate()
                .map(|(i, &l)| {
                    let s = 4.0 + 10.0 * i as f64;
                    ev(&video, game, s, s + 1.5, l)
                })
                .collect();
            let clip = render_session(40, FPS, SIDE, &events, 100 + k as u64);
            save_rgbc(&root.join(format!("videos/{video}.rgbc")), &clip)?;
            all.extend(events);
        }
        fs::write(root.join(format!("annotations/{stem}.json")), to_via(&all))?;
    }

    let session: Vec<_> = [(5.0, Kill), (14.0, Death), (22.0, Kill)]
        .iter()
        .map(|&(s, l)| ev("arena", GameId::Unknown, s, s + 1.0, l))
        .collect();
    save_rgbc(&root.join("session/arena.rgbc"), &render_session(30, FPS, SIDE, &session, 7))?;
    fs::write(root.join("session/arena.json"), to_via(&session))?;
    Ok(())
}
