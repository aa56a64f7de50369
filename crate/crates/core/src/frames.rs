//! Frame acquisition and preprocessing.
//!
//! A clip arrives as RGB24 frames (from an `.rgbc` file or an external
//! decoder writing the same format to stdout), `t` frames are picked with a
//! uniform stride, each is resized to `side`×`side` and normalized per
//! channel on the 0–255 scale.

use std::fs::File;
use std::io::{self, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::ClipRef;

pub const RGBC_MAGIC: &[u8; 4] = b"RGBC";
const RGBC_HEADER_LEN: u64 = 24;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("empty clip")]
    EmptyClip,
    #[error("zero dimension")]
    ZeroDimension,
    #[error("bad rgbc stream: {0}")]
    Format(String),
    #[error("frame size mismatch: expected {expected} bytes, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("decoder failed: {0}")]
    Decoder(String),
    #[error("invalid preprocess config: {0}")]
    Config(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FrameError + '_ {
    move |source| FrameError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One RGB24 frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl Frame {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, FrameError> {
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(FrameError::SizeMismatch { expected, got: data.len() });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(width as usize * height as usize * 3).collect();
        Self { width, height, data }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// Frames of a clip (one second) or a whole session, all the same size.
#[derive(Debug, Clone, PartialEq)]
pub struct RawClip {
    pub width: u32,
    pub height: u32,
    pub fps_num: u32,
    pub fps_den: u32,
    pub frames: Vec<Frame>,
}

impl RawClip {
    pub fn new(fps_num: u32, fps_den: u32, frames: Vec<Frame>) -> Result<Self, FrameError> {
        let first = frames.first().ok_or(FrameError::EmptyClip)?;
        let (width, height) = (first.width, first.height);
        if width == 0 || height == 0 {
            return Err(FrameError::ZeroDimension);
        }
        if fps_num == 0 || fps_den == 0 {
            return Err(FrameError::Format("fps must be positive".into()));
        }
        if let Some(f) = frames.iter().find(|f| f.width != width || f.height != height) {
            return Err(FrameError::Format(format!(
                "frame {}x{} in a {width}x{height} clip",
                f.width, f.height
            )));
        }
        Ok(Self { width, height, fps_num, fps_den, frames })
    }

    pub fn fps(&self) -> f64 {
        self.fps_num as f64 / self.fps_den as f64
    }

    pub fn duration_s(&self) -> f64 {
        self.frames.len() as f64 / self.fps()
    }

    /// Number of whole seconds covered.
    pub fn whole_seconds(&self) -> usize {
        // frames * den / num, floored, in integers
        (self.frames.len() as u64 * self.fps_den as u64 / self.fps_num as u64) as usize
    }

    /// Frame range `[first, first + count)` covering `[start_s, start_s + dur_s)`.
    pub fn frame_range(n_frames: usize, fps: f64, start_s: f64, dur_s: f64) -> (usize, usize) {
        let count = ((fps * dur_s).round() as usize).clamp(1, n_frames.max(1));
        let first = ((start_s * fps).round().max(0.0) as usize).min(n_frames.saturating_sub(count));
        (first, count)
    }

    /// Sub-clip covering `[start_s, start_s + dur_s)`, clamped to the available frames.
    pub fn window(&self, start_s: f64, dur_s: f64) -> RawClip {
        let (first, count) = Self::frame_range(self.frames.len(), self.fps(), start_s, dur_s);
        self.with_frames(self.frames[first..first + count].to_vec())
    }

    /// The `s`-th whole second of a session.
    pub fn second(&self, s: usize) -> RawClip {
        let first = (s as u64 * self.fps_num as u64 / self.fps_den as u64) as usize;
        let next = ((s as u64 + 1) * self.fps_num as u64 / self.fps_den as u64) as usize;
        let next = next.min(self.frames.len()).max(first + 1);
        self.with_frames(self.frames[first..next].to_vec())
    }

    fn with_frames(&self, frames: Vec<Frame>) -> RawClip {
        RawClip {
            width: self.width,
            height: self.height,
            fps_num: self.fps_num,
            fps_den: self.fps_den,
            frames,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RgbcHeader {
    pub width: u32,
    pub height: u32,
    pub frame_count: u32,
    pub fps_num: u32,
    pub fps_den: u32,
}

impl RgbcHeader {
    pub fn duration_s(&self) -> f64 {
        self.frame_count as f64 * self.fps_den as f64 / self.fps_num as f64
    }

    fn frame_bytes(&self) -> usize {
        self.width as usize * self.height as usize * 3
    }
}

pub fn read_rgbc_header<R: Read>(r: &mut R) -> Result<RgbcHeader, FrameError> {
    let mut buf = [0u8; RGBC_HEADER_LEN as usize];
    r.read_exact(&mut buf)
        .map_err(|e| FrameError::Format(format!("short header: {e}")))?;
    if &buf[..4] != RGBC_MAGIC {
        return Err(FrameError::Format("bad magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(buf[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let h = RgbcHeader {
        width: word(0),
        height: word(1),
        frame_count: word(2),
        fps_num: word(3),
        fps_den: word(4),
    };
    if h.width == 0 || h.height == 0 {
        return Err(FrameError::ZeroDimension);
    }
    if h.fps_num == 0 || h.fps_den == 0 {
        return Err(FrameError::Format("fps must be positive".into()));
    }
    Ok(h)
}

fn read_frames<R: Read>(r: &mut R, h: &RgbcHeader, count: usize) -> Result<Vec<Frame>, FrameError> {
    let mut frames = Vec::with_capacity(count);
    for i in 0..count {
        let mut data = vec![0u8; h.frame_bytes()];
        r.read_exact(&mut data)
            .map_err(|e| FrameError::Format(format!("frame {i}: {e}")))?;
        frames.push(Frame { width: h.width, height: h.height, data });
    }
    Ok(frames)
}

pub fn read_rgbc<R: Read>(r: &mut R) -> Result<RawClip, FrameError> {
    let h = read_rgbc_header(r)?;
    let frames = read_frames(r, &h, h.frame_count as usize)?;
    RawClip::new(h.fps_num, h.fps_den, frames)
}

pub fn write_rgbc<W: Write>(w: &mut W, clip: &RawClip) -> io::Result<()> {
    w.write_all(RGBC_MAGIC)?;
    for v in [clip.width, clip.height, clip.frames.len() as u32, clip.fps_num, clip.fps_den] {
        w.write_all(&v.to_le_bytes())?;
    }
    for f in &clip.frames {
        w.write_all(&f.data)?;
    }
    Ok(())
}

pub fn save_rgbc(path: &Path, clip: &RawClip) -> Result<(), FrameError> {
    let mut f = io::BufWriter::new(File::create(path).map_err(io_err(path))?);
    write_rgbc(&mut f, clip).map_err(io_err(path))?;
    f.flush().map_err(io_err(path))
}

/// Frame indices `round(i·(F−1)/(t−1))`, repeating when `F < t`.
pub fn frame_indices(n_frames: usize, t: usize) -> Vec<usize> {
    if t <= 1 || n_frames <= 1 {
        return vec![0; t];
    }
    let (f1, t1) = ((n_frames - 1) as u64, (t - 1) as u64);
    // round half up in integer arithmetic
    (0..t as u64).map(|i| ((2 * i * f1 + t1) / (2 * t1)) as usize).collect()
}

pub fn select_frames(raw: &RawClip, t: usize) -> Result<Vec<&Frame>, FrameError> {
    if raw.frames.is_empty() || t == 0 {
        return Err(FrameError::EmptyClip);
    }
    Ok(frame_indices(raw.frames.len(), t).into_iter().map(|i| &raw.frames[i]).collect())
}

/// Bilinear resize to `side`×`side` with half-pixel centers
/// (`align_corners = false`); output rounded half away from zero.
pub fn resize_bilinear(frame: &Frame, side: u32) -> Result<Frame, FrameError> {
    if frame.width == 0 || frame.height == 0 || side == 0 {
        return Err(FrameError::ZeroDimension);
    }
    if frame.width == side && frame.height == side {
        return Ok(frame.clone());
    }
    let axis = |src_len: u32| -> Vec<(usize, usize, f32)> {
        let scale = src_len as f32 / side as f32;
        (0..side)
            .map(|d| {
                let s = ((d as f32 + 0.5) * scale - 0.5).max(0.0);
                let i0 = (s.floor() as usize).min(src_len as usize - 1);
                let i1 = (i0 + 1).min(src_len as usize - 1);
                (i0, i1, s - i0 as f32)
            })
            .collect()
    };
    let xs = axis(frame.width);
    let ys = axis(frame.height);
    let w = frame.width as usize;
    let mut out = Vec::with_capacity(side as usize * side as usize * 3);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for c in 0..3 {
                let p = |x: usize, y: usize| frame.data[(y * w + x) * 3 + c] as f32;
                let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
                let bot = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
                let v = top * (1.0 - fy) + bot * fy;
                out.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Ok(Frame { width: side, height: side, data: out })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    pub t_frames: u32,
    pub side: u32,
    #[serde(default = "default_mean")]
    pub mean: [f64; 3],
    #[serde(default = "default_std")]
    pub std: [f64; 3],
}

fn default_mean() -> [f64; 3] {
    [123.675, 116.28, 103.55]
}

fn default_std() -> [f64; 3] {
    [58.395, 57.12, 57.375]
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            t_frames: 32,
            side: 224,
            mean: default_mean(),
            std: default_std(),
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self, patch: u32) -> Result<(), FrameError> {
        if self.t_frames < 1 {
            return Err(FrameError::Config("t_frames must be >= 1".into()));
        }
        if self.side < patch.max(1) {
            return Err(FrameError::Config(format!("side {} < patch {patch}", self.side)));
        }
        if self.std.iter().any(|s| !(*s > 0.0)) {
            return Err(FrameError::Config("std must be positive".into()));
        }
        Ok(())
    }
}

/// Normalized `T×S×S×3` frame stack.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipTensor {
    pub t: usize,
    pub side: usize,
    pub data: Vec<f32>,
    pub provenance: Option<ClipRef>,
}

impl ClipTensor {
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.t, self.side, self.side, 3)
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.side * self.side * 3;
        &self.data[t * n..(t + 1) * n]
    }
}

/// `(x − mean[c]) / std[c]` on the 0–255 scale.
pub fn normalize(frames: &[Frame], cfg: &PreprocessConfig) -> Result<ClipTensor, FrameError> {
    let first = frames.first().ok_or(FrameError::EmptyClip)?;
    if first.width != first.height {
        return Err(FrameError::Format("normalize expects square frames".into()));
    }
    let side = first.width as usize;
    let mut data = Vec::with_capacity(frames.len() * side * side * 3);
    for f in frames {
        if f.width as usize != side || f.height as usize != side {
            return Err(FrameError::Format("frames differ in size".into()));
        }
        for px in f.data.chunks_exact(3) {
            for c in 0..3 {
                data.push(((px[c] as f64 - cfg.mean[c]) / cfg.std[c]) as f32);
            }
        }
    }
    Ok(ClipTensor { t: frames.len(), side, data, provenance: None })
}

pub fn preprocess(raw: &RawClip, cfg: &PreprocessConfig) -> Result<ClipTensor, FrameError> {
    let picked = select_frames(raw, cfg.t_frames as usize)?;
    let resized = picked
        .into_iter()
        .map(|f| resize_bilinear(f, cfg.side))
        .collect::<Result<Vec<_>, _>>()?;
    normalize(&resized, cfg)
}

/// Anything that can hand out a window of a named video.
pub trait ClipSource: Sync {
    fn load(&self, video: &str, start_s: f64, dur_s: f64) -> Result<RawClip, FrameError>;
    fn duration_s(&self, video: &str) -> Result<f64, FrameError>;
}

/// Directory of `<video>.rgbc` files.
#[derive(Debug, Clone)]
pub struct RgbcDir {
    pub root: PathBuf,
}

impl RgbcDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path(&self, video: &str) -> PathBuf {
        self.root.join(format!("{video}.rgbc"))
    }

    pub fn header(&self, video: &str) -> Result<RgbcHeader, FrameError> {
        let path = self.path(video);
        let mut f = File::open(&path).map_err(io_err(&path))?;
        read_rgbc_header(&mut f)
    }

    pub fn load_all(&self, video: &str) -> Result<RawClip, FrameError> {
        let path = self.path(video);
        let mut f = BufReader::new(File::open(&path).map_err(io_err(&path))?);
        read_rgbc(&mut f)
    }
}

impl ClipSource for RgbcDir {
    fn load(&self, video: &str, start_s: f64, dur_s: f64) -> Result<RawClip, FrameError> {
        let path = self.path(video);
        let mut f = BufReader::new(File::open(&path).map_err(io_err(&path))?);
        let h = read_rgbc_header(&mut f)?;
        if h.frame_count == 0 {
            return Err(FrameError::EmptyClip);
        }
        let fps = h.fps_num as f64 / h.fps_den as f64;
        let (first, count) = RawClip::frame_range(h.frame_count as usize, fps, start_s, dur_s);
        f.seek(SeekFrom::Start(RGBC_HEADER_LEN + (first * h.frame_bytes()) as u64))
            .map_err(io_err(&path))?;
        let frames = read_frames(&mut f, &h, count)?;
        RawClip::new(h.fps_num, h.fps_den, frames)
    }

    fn duration_s(&self, video: &str) -> Result<f64, FrameError> {
        Ok(self.header(video)?.duration_s())
    }
}

/// Counting semaphore bounding concurrent decoder processes.
#[derive(Debug)]
pub struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

pub struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Self { permits: Mutex::new(permits.max(1)), cv: Condvar::new() }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.permits.lock().unwrap();
        while *n == 0 {
            n = self.cv.wait(n).unwrap();
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

/// External decoder run as a subprocess. The command template is split on
/// whitespace; `{input}`, `{start}` and `{dur}` are substituted per argument
/// (no shell is involved). The process must exit 0 and write an `.rgbc`
/// stream to stdout.
#[derive(Debug)]
pub struct ExternalDecoder {
    pub template: Vec<String>,
    pub video_root: PathBuf,
    pub extension: String,
    limit: Semaphore,
}

impl ExternalDecoder {
    pub fn new(template: &str, video_root: impl Into<PathBuf>, extension: &str, max_concurrent: usize) -> Self {
        Self {
            template: template.split_whitespace().map(str::to_string).collect(),
            video_root: video_root.into(),
            extension: extension.to_string(),
            limit: Semaphore::new(max_concurrent),
        }
    }

    fn input_path(&self, video: &str) -> PathBuf {
        self.video_root.join(format!("{video}.{}", self.extension))
    }

    fn run(&self, video: &str, start_s: f64, dur_s: f64) -> Result<RawClip, FrameError> {
        let input = self.input_path(video);
        let args: Vec<String> = self
            .template
            .iter()
            .map(|a| {
                a.replace("{input}", &input.to_string_lossy())
                    .replace("{start}", &format!("{start_s}"))
                    .replace("{dur}", &format!("{dur_s}"))
            })
            .collect();
        let (prog, rest) = args
            .split_first()
            .ok_or_else(|| FrameError::Decoder("empty decoder command".into()))?;
        let _permit = self.limit.acquire();
        let out = Command::new(prog)
            .args(rest)
            .stdin(Stdio::null())
            .stderr(Stdio::piped())
            .output()
            .map_err(|e| FrameError::Decoder(format!("{prog}: {e}")))?;
        if !out.status.success() {
            return Err(FrameError::Decoder(format!(
                "{prog} exited with {}: {}",
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        read_rgbc(&mut out.stdout.as_slice())
    }
}

impl ClipSource for ExternalDecoder {
    fn load(&self, video: &str, start_s: f64, dur_s: f64) -> Result<RawClip, FrameError> {
        let clip = self.run(video, start_s, dur_s)?;
        // Decoders may hand back more than asked for; keep the requested span.
        if clip.duration_s() > dur_s + 1e-9 {
            Ok(clip.window(0.0, dur_s))
        } else {
            Ok(clip)
        }
    }

    fn duration_s(&self, video: &str) -> Result<f64, FrameError> {
        Ok(self.run(video, 0.0, f64::MAX)?.duration_s())
    }
}
