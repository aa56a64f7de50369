use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use clap::Args;
use clipreel::annotations::{self, AnnotatedEvent, DatasetManifest, EventLabel, GameId, Split};
use clipreel::background::{get_bkg_events, to_background_events};
use clipreel::checkpoint::{self, MAGIC_FP32, MAGIC_INT8};
use clipreel::detection::{self, Classifier, SecondPrediction};
use clipreel::frames::{preprocess, read_rgbc, ClipSource, ExternalDecoder, RawClip, RgbcDir};
use clipreel::json::{to_canonical_line, to_canonical_string};
use clipreel::metrics::{self, EvalRecord};
use clipreel::model::text::{parse_catalogue, PromptBook, PromptCache, PromptSet};
use clipreel::model::XClip;
use clipreel::quant::{self, fp32_payload_bytes};
use clipreel::training::{self, resolve_samples, Sample, BEST_CHECKPOINT, HISTORY_FILE};
use serde::Serialize;

use crate::config::RunConfig;
use crate::exit::{config_err, data_err, CliResult};

#[derive(Debug, Args)]
pub struct SampleBackgroundArgs {
    #[arg(long)]
    pub game: GameId,
    /// Stop after this many intervals.
    #[arg(long)]
    pub target_count: Option<u32>,
    /// Output file; `<out>/background_<game>.json` by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl SampleBackgroundArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if self.target_count.is_some() {
            cfg.sampler.target_count = self.target_count;
        }
    }
}

#[derive(Debug, Args)]
pub struct BuildManifestArgs {
    /// Games to include; every `<game>.json` under the annotations directory by default.
    #[arg(long = "game")]
    pub games: Vec<GameId>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<u32>,
}

impl TrainArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// FP32 or INT8 checkpoint; `<out>/train/best.xckp` by default.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Split to evaluate.
    #[arg(long, value_parser = parse_split, default_value = "test")]
    pub split: Split,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Session footage (`.rgbc`, or a decoder input when a decoder is configured).
    #[arg(long)]
    pub session: PathBuf,
    #[arg(long, default_value = "Unknown")]
    pub game: GameId,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HighlightArgs {
    #[command(flatten)]
    pub detect: DetectArgs,
    /// VIA annotations of the session; enables window scoring.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Directory for cut clips; requires `detect.cutter`.
    #[arg(long)]
    pub cut_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub session: PathBuf,
    #[arg(long, default_value = "Unknown")]
    pub game: GameId,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Clip count of the small run.
    #[arg(long, default_value_t = 10)]
    pub clips_small: usize,
    /// Clip count of the large run.
    #[arg(long, default_value_t = 100)]
    pub clips_large: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PrintPromptsArgs {
    #[arg(long)]
    pub game: Option<GameId>,
}

fn parse_split(s: &str) -> Result<Split, String> {
    match s.to_ascii_lowercase().as_str() {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        _ => Err(format!("unknown split {s:?} (expected train or test)")),
    }
}

fn write_artifact(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn canonical<T: Serialize>(value: &T) -> String {
    let mut s = to_canonical_string(value).expect("artifacts serialize");
    s.push('\n');
    s
}

fn prompt_book(cfg: &RunConfig) -> CliResult<PromptBook> {
    match &cfg.paths.catalogue {
        None => Ok(PromptBook::builtin()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| data_err(format!("{}: {e}", p.display())))?;
            let templates = parse_catalogue(&text).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
            PromptBook::from_catalogue(&templates).map_err(|e| config_err(format!("{}: {e}", p.display())))
        }
    }
}

fn clip_source(cfg: &RunConfig) -> Box<dyn ClipSource> {
    match &cfg.decoder {
        Some(d) => Box::new(ExternalDecoder::new(&d.template, &cfg.paths.data_root, &d.extension, d.max_concurrent)),
        None => Box::new(RgbcDir::new(&cfg.paths.data_root)),
    }
}

fn annotation_path(cfg: &RunConfig, game: GameId) -> PathBuf {
    cfg.paths.annotations.join(format!("{}.json", game.name().to_ascii_lowercase()))
}

fn load_events(cfg: &RunConfig, game: GameId) -> CliResult<Vec<AnnotatedEvent>> {
    let path = annotation_path(cfg, game);
    load_via(&path, game)
}

fn load_via(path: &Path, game: GameId) -> CliResult<Vec<AnnotatedEvent>> {
    let bytes = fs::read(path).map_err(|e| data_err(format!("annotation file {}: {e}", path.display())))?;
    annotations::parse_via(&bytes, game).map_err(|e| data_err(format!("{}: {e}", path.display())))
}

fn available_games(cfg: &RunConfig) -> CliResult<Vec<GameId>> {
    let dir = &cfg.paths.annotations;
    let rd = fs::read_dir(dir).map_err(|e| data_err(format!("{}: {e}", dir.display())))?;
    let mut games = BTreeSet::new();
    for entry in rd {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        if let Ok(g) = stem.parse::<GameId>() {
            if g != GameId::Unknown {
                games.insert(g);
            }
        }
    }
    if games.is_empty() {
        return Err(data_err(format!("no <game>.json annotation files in {}", dir.display())));
    }
    Ok(games.into_iter().collect())
}

fn durations(source: &dyn ClipSource, events: &[AnnotatedEvent]) -> CliResult<BTreeMap<String, f64>> {
    let videos: BTreeSet<&str> = events.iter().map(|e| e.video.as_str()).collect();
    videos
        .into_iter()
        .map(|v| {
            let d = source.duration_s(v).map_err(|e| data_err(format!("video {v}: {e}")))?;
            Ok((v.to_string(), d))
        })
        .collect()
}

fn sample_game(cfg: &RunConfig, game: GameId, source: &dyn ClipSource) -> CliResult<(Vec<AnnotatedEvent>, Vec<AnnotatedEvent>, BTreeMap<String, f64>)> {
    let events = load_events(cfg, game)?;
    let durs = durations(source, &events)?;
    let mut files: BTreeMap<String, (f64, Vec<AnnotatedEvent>)> =
        durs.iter().map(|(v, &d)| (v.clone(), (d, Vec::new()))).collect();
    for e in &events {
        files.get_mut(&e.video).expect("duration known").1.push(e.clone());
    }
    let sampled = get_bkg_events(game, &files, &cfg.sampler()).map_err(|e| config_err(e.to_string()))?;
    let backgrounds = to_background_events(game, &sampled);
    Ok((events, backgrounds, durs))
}

pub fn sample_background(cfg: &RunConfig, args: &SampleBackgroundArgs) -> CliResult<()> {
    let source = clip_source(cfg);
    let (_, backgrounds, _) = sample_game(cfg, args.game, source.as_ref())?;
    let out = args.out.clone().unwrap_or_else(|| {
        cfg.paths.out.join(format!("background_{}.json", args.game.name().to_ascii_lowercase()))
    });
    log::info!("{}: {} background intervals", args.game, backgrounds.len());
    write_artifact(&out, &canonical(&backgrounds))
}

pub fn build_manifest(cfg: &RunConfig, args: &BuildManifestArgs) -> CliResult<()> {
    let games = if args.games.is_empty() { available_games(cfg)? } else { args.games.clone() };
    let source = clip_source(cfg);
    let (mut events, mut backgrounds, mut durs) = (Vec::new(), Vec::new(), BTreeMap::new());
    for g in games {
        let (e, b, d) = sample_game(cfg, g, source.as_ref())?;
        events.extend(e);
        backgrounds.extend(b);
        durs.extend(d);
    }
    let manifest = annotations::build_manifest(&events, &backgrounds, &durs, cfg.seed)
        .map_err(|e| data_err(e.to_string()))?;
    let (train, test) = (manifest.split(Split::Train).count(), manifest.split(Split::Test).count());
    log::info!("manifest: {train} train clips, {test} test clips");
    let out = args.out.clone().unwrap_or_else(|| default_manifest(cfg));
    write_artifact(&out, &manifest.to_json())
}

fn default_manifest(cfg: &RunConfig) -> PathBuf {
    cfg.paths.out.join("manifest.json")
}

fn default_checkpoint(cfg: &RunConfig) -> PathBuf {
    cfg.paths.out.join("train").join(BEST_CHECKPOINT)
}

fn load_manifest(cfg: &RunConfig, path: Option<&PathBuf>) -> CliResult<DatasetManifest> {
    let path = path.cloned().unwrap_or_else(|| default_manifest(cfg));
    DatasetManifest::load(&path).map_err(|e| data_err(format!("manifest {}: {e}", path.display())))
}

fn samples(cfg: &RunConfig, manifest: &DatasetManifest, split: Split) -> CliResult<Vec<Sample>> {
    let source = clip_source(cfg);
    resolve_samples(manifest, split, source.as_ref(), &cfg.preprocess_config()).map_err(|e| data_err(e.to_string()))
}

pub fn train(cfg: &RunConfig, args: &TrainArgs) -> CliResult<()> {
    let manifest = load_manifest(cfg, args.manifest.as_ref())?;
    let book = prompt_book(cfg)?;
    let train_set = samples(cfg, &manifest, Split::Train)?;
    let mut val_set = samples(cfg, &manifest, Split::Test)?;
    if val_set.is_empty() {
        log::warn!("test split is empty, validating on the train split");
        val_set = train_set.clone();
    }
    let mut model = XClip::<f32>::new(cfg.model.build(), cfg.seed).map_err(|e| config_err(e.to_string()))?;
    log::info!("model: {} parameters", model.num_params());
    let out_dir = cfg.paths.out.join("train");
    let outcome = training::train(&mut model, &train_set, &val_set, &book, &cfg.train_config(), Some(&out_dir))
        .map_err(|e| match e {
            training::TrainError::Config(_) | training::TrainError::LabelNotInPromptSet { .. } => config_err(e.to_string()),
            training::TrainError::EmptyTrainSet | training::TrainError::DataResolution { .. } => data_err(e.to_string()),
            other => anyhow::Error::new(other),
        })?;
    let last = outcome.history.last().expect("at least one epoch");
    log::info!(
        "done: best val_acc {:.3}, final train_acc {:.3}, history in {}",
        outcome.best_val_acc,
        last.train_acc,
        out_dir.join(HISTORY_FILE).display()
    );
    Ok(())
}

/// Either checkpoint kind, recognized by its magic bytes.
enum Loaded {
    Fp32(XClip<f32>),
    Int8(quant::QuantizedModel),
}

impl Loaded {
    fn classifier(&self) -> &dyn Classifier {
        match self {
            Loaded::Fp32(m) => m,
            Loaded::Int8(m) => m,
        }
    }

    fn cfg(&self) -> &clipreel::model::ModelConfig {
        match self {
            Loaded::Fp32(m) => &m.cfg,
            Loaded::Int8(m) => &m.cfg,
        }
    }
}

fn load_checkpoint(path: &Path) -> CliResult<Loaded> {
    let bytes = fs::read(path).map_err(|e| data_err(format!("checkpoint {}: {e}", path.display())))?;
    let bad = |e: checkpoint::CheckpointError| data_err(format!("checkpoint {}: {e}", path.display()));
    if bytes.starts_with(MAGIC_INT8) {
        Ok(Loaded::Int8(checkpoint::decode_int8(&bytes).map_err(bad)?.0))
    } else if bytes.starts_with(MAGIC_FP32) {
        Ok(Loaded::Fp32(checkpoint::decode_fp32(&bytes).map_err(bad)?.0))
    } else {
        Err(bad(checkpoint::CheckpointError::BadMagic { expected: "XCKP1 or XCKQ1".into() }))
    }
}

fn check_preset(cfg: &RunConfig, model: &clipreel::model::ModelConfig) -> CliResult<()> {
    let v = &model.video;
    let pre = cfg.preprocess_config();
    if v.t_frames as u32 != pre.t_frames || v.side as u32 != pre.side {
        return Err(config_err(format!(
            "checkpoint expects {} frames of {} px but the configured preset gives {} frames of {} px",
            v.t_frames, v.side, pre.t_frames, pre.side
        )));
    }
    Ok(())
}

pub fn eval(cfg: &RunConfig, args: &EvalArgs) -> CliResult<()> {
    let path = args.checkpoint.clone().unwrap_or_else(|| default_checkpoint(cfg));
    let model = load_checkpoint(&path)?;
    check_preset(cfg, model.cfg())?;
    let manifest = load_manifest(cfg, args.manifest.as_ref())?;
    let book = prompt_book(cfg)?;
    let set = samples(cfg, &manifest, args.split)?;
    if set.is_empty() {
        return Err(data_err(format!("{:?} split of the manifest is empty", args.split)));
    }
    let cache = PromptCache::new();
    let records = set
        .iter()
        .map(|s| {
            let probs = model.classifier().probabilities(&s.clip, book.get(s.game), &cache)?;
            Ok(EvalRecord::new(s.label, s.game, &probs))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let report = metrics::report(&records)?;
    log::info!(
        "{} clips: accuracy {:.3}, macro F1 {:.3}, OVO AUC {}",
        report.n,
        report.accuracy,
        report.avg_f,
        report.avg_auc.map_or("n/a".to_string(), |a| format!("{a:.3}"))
    );
    let out = args.out.clone().unwrap_or_else(|| cfg.paths.out.join("report.json"));
    write_artifact(&out, &canonical(&report))
}

pub fn quantize(cfg: &RunConfig, args: &QuantizeArgs) -> CliResult<()> {
    let path = args.checkpoint.clone().unwrap_or_else(|| default_checkpoint(cfg));
    let (model, meta) =
        checkpoint::load_fp32(&path).map_err(|e| data_err(format!("checkpoint {}: {e}", path.display())))?;
    check_preset(cfg, &model.cfg)?;
    let manifest = load_manifest(cfg, args.manifest.as_ref())?;
    let mut calib = samples(cfg, &manifest, Split::Train)?;
    calib.truncate(cfg.quantizer.calib_clips);
    if calib.is_empty() {
        return Err(data_err("no calibration clips in the train split"));
    }
    let book = prompt_book(cfg)?;
    let clips: Vec<_> = calib.iter().map(|s| s.clip.clone()).collect();
    let qm = quant::quantize_model(&model, &clips, |c| {
        book.get(c.provenance.as_ref().map_or(GameId::Unknown, |p| p.game)).clone()
    })?;
    let (q, f) = (qm.payload_bytes(), fp32_payload_bytes(&model.params));
    log::info!("payload {q} bytes INT8 vs {f} bytes FP32 (ratio {:.3})", q as f64 / f as f64);
    let out = args.out.clone().unwrap_or_else(|| cfg.paths.out.join("model.xckq"));
    if let Some(dir) = out.parent() {
        fs::create_dir_all(dir)?;
    }
    checkpoint::save_int8(&out, &qm, meta)?;
    log::info!("wrote {}", out.display());
    Ok(())
}

fn load_session(cfg: &RunConfig, path: &Path) -> CliResult<RawClip> {
    match &cfg.decoder {
        Some(d) => {
            let dir = path.parent().unwrap_or(Path::new("."));
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let ext = path.extension().and_then(|s| s.to_str()).unwrap_or(&d.extension);
            ExternalDecoder::new(&d.template, dir, ext, 1)
                .load(stem, 0.0, f64::MAX)
                .map_err(|e| data_err(format!("session {}: {e}", path.display())))
        }
        None => {
            let f = fs::File::open(path).map_err(|e| data_err(format!("session {}: {e}", path.display())))?;
            read_rgbc(&mut std::io::BufReader::new(f)).map_err(|e| data_err(format!("session {}: {e}", path.display())))
        }
    }
}

fn prompts_for(cfg: &RunConfig, game: GameId) -> CliResult<PromptSet> {
    Ok(prompt_book(cfg)?.get(game).clone())
}

fn predict_session(cfg: &RunConfig, args: &DetectArgs) -> CliResult<(RawClip, PromptSet, Vec<SecondPrediction>)> {
    let path = args.checkpoint.clone().unwrap_or_else(|| default_checkpoint(cfg));
    let model = load_checkpoint(&path)?;
    check_preset(cfg, model.cfg())?;
    let session = load_session(cfg, &args.session)?;
    let set = prompts_for(cfg, args.game)?;
    log::info!("{} prompts for {}: {:?}", set.len(), args.game, set.rendered());
    let cache = PromptCache::new();
    let preds = detection::classify_session(&session, &set, model.classifier(), &cfg.preprocess_config(), &cache)
        .map_err(|e| match e {
            detection::DetectError::EmptySession | detection::DetectError::Frames(_) => data_err(e.to_string()),
            other => anyhow::Error::new(other),
        })?;
    Ok((session, set, preds))
}

fn stem(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("session").to_string()
}

pub fn detect(cfg: &RunConfig, args: &DetectArgs) -> CliResult<()> {
    let (_, _, preds) = predict_session(cfg, args)?;
    let body: String = preds.iter().map(|p| to_canonical_line(p).expect("predictions serialize")).collect();
    let out = args.out.clone().unwrap_or_else(|| cfg.paths.out.join(format!("{}.predictions.jsonl", stem(&args.session))));
    write_artifact(&out, &body)
}

fn targets(cfg: &RunConfig, set: &PromptSet) -> CliResult<BTreeSet<EventLabel>> {
    if cfg.detect.targets.is_empty() {
        return Ok(set.labels().into_iter().filter(|&l| l != EventLabel::Background).collect());
    }
    cfg.detect
        .targets
        .iter()
        .map(|t| {
            let l = EventLabel::parse_loose(t).ok_or_else(|| config_err(format!("detect.targets: unknown label {t:?}")))?;
            if set.index_of(l).is_none() {
                return Err(config_err(format!("detect.targets: {l} is not in the prompt set")));
            }
            Ok(l)
        })
        .collect()
}

pub fn highlight(cfg: &RunConfig, args: &HighlightArgs) -> CliResult<()> {
    let (session, set, preds) = predict_session(cfg, &args.detect)?;
    let targets = targets(cfg, &set)?;
    let windows = detection::slide_windows(&preds, &targets);
    let name = stem(&args.detect.session);
    let edl = detection::build_edl(&windows, &name, session.duration_s(), cfg.detect.pad_pre_s, cfg.detect.pad_post_s);
    log::info!("{} windows, {} cuts", windows.len(), edl.cuts.len());
    let out = args.detect.out.clone().unwrap_or_else(|| cfg.paths.out.join(format!("{name}.edl.json")));
    write_artifact(&out, &canonical(&edl))?;
    if let Some(ann) = &args.annotations {
        let events: Vec<_> = load_via(ann, args.detect.game)?;
        let scores = detection::score_windows(&windows, &events);
        log::info!("window accuracy {:.3}", scores.average);
        let score_path = out.with_file_name(format!("{name}.window_scores.json"));
        write_artifact(&score_path, &canonical(&scores))?;
    }
    if let Some(dir) = &args.cut_dir {
        let template = cfg.detect.cutter.as_deref().ok_or_else(|| config_err("--cut-dir needs detect.cutter"))?;
        let clips = detection::run_cutter(&edl, template, &args.detect.session, dir)?;
        log::info!("cut {} clips into {}", clips.len(), dir.display());
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct BenchRun {
    clips: usize,
    text_encoder_calls: usize,
    latency_ms: Latency,
}

#[derive(Debug, Serialize)]
struct Latency {
    min: f64,
    p50: f64,
    p90: f64,
    max: f64,
    mean: f64,
}

fn latency(mut ms: Vec<f64>) -> Latency {
    ms.sort_by(f64::total_cmp);
    let q = |p: f64| ms[((p * (ms.len() - 1) as f64).round() as usize).min(ms.len() - 1)];
    Latency { min: ms[0], p50: q(0.5), p90: q(0.9), max: ms[ms.len() - 1], mean: ms.iter().sum::<f64>() / ms.len() as f64 }
}

fn bench_run(model: &dyn Classifier, clips: &[clipreel::frames::ClipTensor], n: usize, set: &PromptSet) -> CliResult<BenchRun> {
    let cache = PromptCache::new();
    let mut ms = Vec::with_capacity(n);
    for i in 0..n {
        let t = Instant::now();
        model.probabilities(&clips[i % clips.len()], set, &cache)?;
        ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    Ok(BenchRun { clips: n, text_encoder_calls: cache.encode_calls(), latency_ms: latency(ms) })
}

pub fn bench(cfg: &RunConfig, args: &BenchArgs) -> CliResult<()> {
    if args.clips_small == 0 || args.clips_large == 0 {
        return Err(config_err("clip counts must be positive"));
    }
    let path = args.checkpoint.clone().unwrap_or_else(|| default_checkpoint(cfg));
    let model = load_checkpoint(&path)?;
    check_preset(cfg, model.cfg())?;
    let session = load_session(cfg, &args.session)?;
    let n = session.whole_seconds();
    if n == 0 {
        return Err(data_err(format!("session {} has no whole second of footage", args.session.display())));
    }
    let pre = cfg.preprocess_config();
    let clips = (0..n)
        .map(|s| preprocess(&session.second(s), &pre))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| data_err(e.to_string()))?;
    let set = prompts_for(cfg, args.game)?;
    let small = bench_run(model.classifier(), &clips, args.clips_small, &set)?;
    let large = bench_run(model.classifier(), &clips, args.clips_large, &set)?;
    log::info!(
        "{} clips: p50 {:.2} ms, {} text encodes; {} clips: p50 {:.2} ms, {} text encodes",
        small.clips,
        small.latency_ms.p50,
        small.text_encoder_calls,
        large.clips,
        large.latency_ms.p50,
        large.text_encoder_calls
    );
    if small.text_encoder_calls != large.text_encoder_calls {
        anyhow::bail!(
            "text encoder calls depend on clip count: {} vs {}",
            small.text_encoder_calls,
            large.text_encoder_calls
        );
    }
    let report = serde_json::json!({ "prompts": set.len(), "runs": [small, large] });
    let body = serde_json::to_string_pretty(&report)? + "\n";
    match &args.out {
        Some(p) => write_artifact(p, &body),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

pub fn print_prompts(cfg: Option<&RunConfig>, args: &PrintPromptsArgs) -> CliResult<()> {
    let book = match cfg {
        Some(c) => prompt_book(c)?,
        None => PromptBook::builtin(),
    };
    let sets: Vec<&PromptSet> = match args.game {
        Some(g) => vec![book.get(g)],
        None => book.iter().collect(),
    };
    for set in sets {
        for (label, text) in set.labels().into_iter().zip(set.rendered()) {
            println!("{}\t{}\t{}", set.game, label, text);
        }
    }
    Ok(())
}
