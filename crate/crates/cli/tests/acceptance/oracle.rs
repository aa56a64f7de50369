//! Straight-line f64 reference for the model forward pass. Plain nested
//! vectors, no shared code with the library beyond reading its parameters.

use clipreel::model::params::ParamStore;

pub type M = Vec<Vec<f64>>;

pub struct Oracle<'a> {
    pub p: &'a ParamStore<f64>,
}

pub fn mm(a: &M, b: &M) -> M {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn add(a: &M, b: &M) -> M {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(u, v)| u + v).collect()).collect()
}

fn add_bias(a: &M, b: &[f64]) -> M {
    a.iter().map(|r| r.iter().zip(b).map(|(u, v)| u + v).collect()).collect()
}

fn scale(a: &M, s: f64) -> M {
    a.iter().map(|r| r.iter().map(|x| x * s).collect()).collect()
}

fn cols(a: &M, start: usize, len: usize) -> M {
    a.iter().map(|r| r[start..start + len].to_vec()).collect()
}

fn hcat(parts: &[M]) -> M {
    (0..parts[0].len()).map(|i| parts.iter().flat_map(|p| p[i].clone()).collect()).collect()
}

fn transpose(a: &M) -> M {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|x| (x - mx).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|x| x / z).collect()
}

pub fn softmax_row(row: &[f64]) -> Vec<f64> {
    softmax(row)
}

fn quick_gelu(a: &M) -> M {
    a.iter().map(|r| r.iter().map(|&x| x / (1.0 + (-1.702 * x).exp())).collect()).collect()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Multi-head scaled dot-product attention; `causal` masks keys after the query.
fn attention(q: &M, k: &M, v: &M, heads: usize, causal: bool) -> M {
    let d = q[0].len();
    let dh = d / heads;
    let mut outs = Vec::new();
    for h in 0..heads {
        let (qh, kh, vh) = (cols(q, h * dh, dh), cols(k, h * dh, dh), cols(v, h * dh, dh));
        let s = scale(&mm(&qh, &transpose(&kh)), 1.0 / (dh as f64).sqrt());
        let a: M = s
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let upto = if causal { i + 1 } else { row.len() };
                let mut p = softmax(&row[..upto]);
                p.resize(row.len(), 0.0);
                p
            })
            .collect();
        outs.push(mm(&a, &vh));
    }
    hcat(&outs)
}

impl Oracle<'_> {
    pub fn get(&self, name: &str) -> M {
        let m = self.p.get(name).unwrap_or_else(|| panic!("oracle: no {name}"));
        (0..m.rows).map(|r| m.data[r * m.cols..(r + 1) * m.cols].to_vec()).collect()
    }

    pub fn linear(&self, x: &M, prefix: &str) -> M {
        let y = mm(x, &self.get(&format!("{prefix}.w")));
        let b = format!("{prefix}.b");
        if self.p.contains(&b) {
            add_bias(&y, &self.get(&b)[0])
        } else {
            y
        }
    }

    pub fn ln(&self, x: &M, prefix: &str) -> M {
        let g = &self.get(&format!("{prefix}.g"))[0];
        let b = &self.get(&format!("{prefix}.b"))[0];
        x.iter()
            .map(|r| {
                let n = r.len() as f64;
                let mean = r.iter().sum::<f64>() / n;
                let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                r.iter().enumerate().map(|(c, x)| (x - mean) / (var + 1e-5).sqrt() * g[c] + b[c]).collect()
            })
            .collect()
    }

    pub fn self_attn(&self, x: &M, prefix: &str, heads: usize, causal: bool) -> M {
        let d = x[0].len();
        let qkv = self.linear(x, &format!("{prefix}.qkv"));
        let o = attention(&cols(&qkv, 0, d), &cols(&qkv, d, d), &cols(&qkv, 2 * d, d), heads, causal);
        self.linear(&o, &format!("{prefix}.out"))
    }

    pub fn cross_attn(&self, q_in: &M, kv_in: &M, prefix: &str, heads: usize) -> M {
        let d = q_in[0].len();
        let q = self.linear(q_in, &format!("{prefix}.q"));
        let kv = self.linear(kv_in, &format!("{prefix}.kv"));
        let o = attention(&q, &cols(&kv, 0, d), &cols(&kv, d, d), heads, false);
        self.linear(&o, &format!("{prefix}.out"))
    }

    pub fn ffn(&self, x: &M, prefix: &str) -> M {
        let h = quick_gelu(&self.linear(x, &format!("{prefix}.fc1")));
        self.linear(&h, &format!("{prefix}.fc2"))
    }

    fn block(&self, x: &M, prefix: &str, heads: usize, causal: bool) -> M {
        let x = add(x, &self.self_attn(&self.ln(x, &format!("{prefix}.ln1")), &format!("{prefix}.attn"), heads, causal));
        add(&x, &self.ffn(&self.ln(&x, &format!("{prefix}.ln2")), &format!("{prefix}.ffn")))
    }

    /// Frame `t` of a `T×S×S×3` tensor cut into raster-order patches.
    pub fn patches(data: &[f32], t: usize, side: usize, patch: usize) -> M {
        let per = side / patch;
        let frame = &data[t * side * side * 3..(t + 1) * side * side * 3];
        let mut out = Vec::new();
        for n in 0..per * per {
            let (py, px) = (n / per, n % per);
            let mut row = Vec::new();
            for y in 0..patch {
                for x in 0..patch {
                    for c in 0..3 {
                        row.push(f64::from(frame[((py * patch + y) * side + px * patch + x) * 3 + c]));
                    }
                }
            }
            out.push(row);
        }
        out
    }

    /// z⁽⁰⁾ = [x_class, P·x_1 … P·x_N] + pos
    pub fn embed(&self, patches: &M) -> M {
        let mut z = vec![self.get("video.class")[0].clone()];
        z.extend(self.linear(patches, "video.patch_proj"));
        add(&z, &self.get("video.pos"))
    }

    /// m_t = P′·z_t,cls
    pub fn messages(&self, frames: &[M], layer: usize) -> M {
        let cls: M = frames.iter().map(|z| z[0].clone()).collect();
        self.linear(&cls, &format!("video.cct.{layer}.msg_fc"))
    }

    /// M′ = M + CFA(LN(M))
    pub fn fuse(&self, m: &M, layer: usize, heads: usize) -> M {
        let p = format!("video.cct.{layer}");
        add(m, &self.self_attn(&self.ln(m, &format!("{p}.msg_ln")), &format!("{p}.cfa"), heads, false))
    }

    /// [z′, m″] = [z, m′] + IFA(LN([z, m′])), message row dropped
    pub fn diffuse(&self, z: &M, m: &[f64], layer: usize, heads: usize) -> M {
        let p = format!("video.cct.{layer}");
        let mut x = z.clone();
        x.push(m.to_vec());
        let y = add(&x, &self.self_attn(&self.ln(&x, &format!("{p}.ln1")), &format!("{p}.ifa"), heads, false));
        y[..z.len()].to_vec()
    }

    /// z = z′ + FFN(LN(z′))
    pub fn feed_forward(&self, z: &M, layer: usize) -> M {
        let p = format!("video.cct.{layer}");
        add(z, &self.ffn(&self.ln(z, &format!("{p}.ln2")), &format!("{p}.ffn")))
    }

    pub fn cct(&self, frames: &[M], layer: usize, heads: usize) -> Vec<M> {
        let m = self.fuse(&self.messages(frames, layer), layer, heads);
        frames
            .iter()
            .enumerate()
            .map(|(t, z)| self.feed_forward(&self.diffuse(z, &m[t], layer, heads), layer))
            .collect()
    }

    /// H = proj(LN(h_t)) for the final class tokens.
    pub fn frame_embeddings(&self, frames: &[M]) -> M {
        let h: M = frames.iter().map(|z| z[0].clone()).collect();
        self.linear(&self.ln(&h, "video.ln_post"), "video.proj")
    }

    /// v = AvgPool(MIT(H + temp))
    pub fn mit(&self, h: &M, layers: usize, heads: usize) -> Vec<f64> {
        let mut x = add(h, &self.get("video.mit.temp")[..h.len()].to_vec());
        for l in 0..layers {
            x = self.block(&x, &format!("video.mit.{l}"), heads, false);
        }
        let n = x.len() as f64;
        (0..x[0].len()).map(|c| x.iter().map(|r| r[c]).sum::<f64>() / n).collect()
    }

    pub fn video(&self, data: &[f32], cfg: &clipreel::model::config::EncoderConfig) -> Vec<f64> {
        let mut frames: Vec<M> =
            (0..cfg.t_frames).map(|t| self.embed(&Self::patches(data, t, cfg.side, cfg.patch))).collect();
        for l in 0..cfg.n_cct_layers {
            frames = self.cct(&frames, l, cfg.n_heads);
        }
        self.mit(&self.frame_embeddings(&frames), cfg.n_mit_layers, cfg.mit_heads)
    }

    /// Causal transformer over the tokens; EOS state, normalized and projected.
    pub fn text(&self, tokens: &[usize], eos: usize, layers: usize, heads: usize) -> Vec<f64> {
        let tok = self.get("text.tok");
        let x: M = tokens.iter().map(|&t| tok[t].clone()).collect();
        let mut x = add(&x, &self.get("text.pos"));
        for l in 0..layers {
            x = self.block(&x, &format!("text.layers.{l}"), heads, true);
        }
        self.linear(&self.ln(&[x[eos].clone()].to_vec(), "text.ln_final"), "text.proj")[0].clone()
    }

    /// c′ = c + MHSA(c, v)
    pub fn prompt_attn(&self, c: &M, v: &[f64], block: usize, heads: usize) -> M {
        add(c, &self.cross_attn(c, &vec![v.to_vec()], &format!("prompt.{block}.attn"), heads))
    }

    /// c″ = c′ + FFN(c′)
    pub fn prompt_ffn(&self, c: &M, block: usize) -> M {
        add(c, &self.ffn(c, &format!("prompt.{block}.ffn")))
    }

    /// c̄ = c + α·c″
    pub fn prompt(&self, c: &M, v: &[f64], blocks: usize, heads: usize, alpha: f64) -> M {
        let mut x = c.clone();
        for b in 0..blocks {
            x = self.prompt_ffn(&self.prompt_attn(&x, v, b, heads), b);
        }
        add(c, &scale(&x, alpha))
    }

    pub fn logits(&self, v: &[f64], cbar: &M) -> Vec<f64> {
        let s = self.get("text.logit_scale")[0][0];
        cbar.iter().map(|c| s * cosine(v, c)).collect()
    }
}
