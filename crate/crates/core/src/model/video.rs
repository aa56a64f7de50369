//! Video encoder: patch embedding, cross-frame communication layers and
//! multi-frame integration.
//!
//! Per frame `t`, patches are projected and prefixed with the class token,
//! then the positional table is added. Each layer derives one message token
//! per frame from the frame's incoming class-token state, lets the message
//! tokens attend to each other (fusion), appends each frame's message token
//! to its patch tokens for a round of intra-frame attention (diffusion,
//! message output discarded) and finishes with a feed-forward block. The
//! final class tokens, after `ln_post` and the output projection, go through
//! the integration transformer with a temporal table and are averaged.

use super::config::EncoderConfig;
use super::nn::Ctx;
use crate::autodiff::{Mat, Real, Var};
use crate::frames::ClipTensor;

/// Cut one `side×side×3` frame into `N` rows of `3·patch²` values.
///
/// Patches are taken in raster order; inside a patch the layout is
/// (row, column, channel), row-major.
pub fn patchify<F: Real>(frame: &[f32], side: usize, patch: usize) -> Mat<F> {
    let per_side = side / patch;
    let dim = 3 * patch * patch;
    let mut data = Vec::with_capacity(per_side * per_side * dim);
    for py in 0..per_side {
        for px in 0..per_side {
            for y in 0..patch {
                for x in 0..patch {
                    let base = ((py * patch + y) * side + px * patch + x) * 3;
                    for c in 0..3 {
                        data.push(F::from_f32(frame[base + c]).unwrap());
                    }
                }
            }
        }
    }
    Mat::from_vec(per_side * per_side, dim, data)
}

/// `[x_class, P·x_1, …, P·x_N] + pos`, shape `(N+1)×d`.
pub fn embed_frame<F: Real>(ctx: &mut Ctx<'_, F>, patches: Var) -> Var {
    let proj = ctx.linear(patches, "video.patch_proj");
    let cls = ctx.p("video.class");
    let tokens = ctx.g.concat_rows(&[cls, proj]);
    let pos = ctx.p("video.pos");
    ctx.g.add(tokens, pos)
}

/// One cross-frame communication layer over all `T` frames.
pub fn cct_layer<F: Real>(ctx: &mut Ctx<'_, F>, frames: &[Var], layer: usize, cfg: &EncoderConfig) -> Vec<Var> {
    let p = format!("video.cct.{layer}");
    let t = frames.len();
    let n1 = ctx.g.shape(frames[0]).0;

    // message tokens from the incoming class-token states
    let cls: Vec<Var> = frames.iter().map(|&z| ctx.g.slice_rows(z, 0, 1)).collect();
    let cls = ctx.g.concat_rows(&cls);
    let msgs = ctx.linear(cls, &format!("{p}.msg_fc"));

    // fusion across frames
    let h = ctx.ln(msgs, &format!("{p}.msg_ln"));
    let fused = ctx.self_attn(h, &format!("{p}.cfa"), cfg.n_heads, false);
    let msgs = ctx.g.add(msgs, fused);

    let mut out = Vec::with_capacity(t);
    for (i, &z) in frames.iter().enumerate() {
        // diffusion within the frame, message token appended last
        let m = ctx.g.slice_rows(msgs, i, 1);
        let x = ctx.g.concat_rows(&[z, m]);
        let h = ctx.ln(x, &format!("{p}.ln1"));
        let a = ctx.self_attn(h, &format!("{p}.ifa"), cfg.n_heads, false);
        let x = ctx.g.add(x, a);
        let z = ctx.g.slice_rows(x, 0, n1);

        let h = ctx.ln(z, &format!("{p}.ln2"));
        let f = ctx.ffn(h, &format!("{p}.ffn"));
        out.push(ctx.g.add(z, f));
    }
    out
}

/// `mean_T(MIT(H + temp))`, `T×d_e → 1×d_e`.
pub fn mit_pool<F: Real>(ctx: &mut Ctx<'_, F>, h: Var, cfg: &EncoderConfig) -> Var {
    let t = ctx.g.shape(h).0;
    let temp = ctx.p("video.mit.temp");
    let temp = if t == cfg.t_frames { temp } else { ctx.g.slice_rows(temp, 0, t) };
    let mut x = ctx.g.add(h, temp);
    for l in 0..cfg.n_mit_layers {
        x = ctx.block(x, &format!("video.mit.{l}"), cfg.mit_heads, false);
    }
    ctx.g.mean_rows(x)
}

/// Per-frame class-token states after the last layer, `T×d_model`.
pub fn frame_states<F: Real>(ctx: &mut Ctx<'_, F>, clip: &ClipTensor, cfg: &EncoderConfig) -> Var {
    let mut frames: Vec<Var> = (0..clip.t)
        .map(|t| {
            let patches = patchify::<F>(clip.frame(t), cfg.side, cfg.patch);
            let patches = ctx.input(patches);
            embed_frame(ctx, patches)
        })
        .collect();
    for l in 0..cfg.n_cct_layers {
        frames = cct_layer(ctx, &frames, l, cfg);
    }
    let cls: Vec<Var> = frames.iter().map(|&z| ctx.g.slice_rows(z, 0, 1)).collect();
    ctx.g.concat_rows(&cls)
}

/// Video embedding `v`, `1×d_embed`.
pub fn encode_video<F: Real>(ctx: &mut Ctx<'_, F>, clip: &ClipTensor, cfg: &EncoderConfig) -> Var {
    let h = frame_states(ctx, clip, cfg);
    let h = ctx.ln(h, "video.ln_post");
    let h = ctx.linear(h, "video.proj");
    mit_pool(ctx, h, cfg)
}
