//! Transformer encoder forward and backward passes over packed rows.
//!
//! Rows are concatenated along the token axis so the dense layers run as
//! one matrix product; attention stays within each row.
//!
//! Pre-norm blocks: `x + drop(attn(ln1(x)))`, then `x + drop(ffn(ln2(x)))`,
//! with a final layer norm feeding both heads. Keys flagged off in the mask
//! get exactly zero attention weight.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{Layer, LayerMut, ModelParams};
use super::tensor::{add_assign, cast, gemm, linear, linear_backward, softmax_in_place, Float, View, ViewMut};

const LN_EPS: f64 = 1e-5;

pub(crate) struct RowInput<'a> {
    pub ids: &'a [u32],
    pub positions: &'a [u32],
    pub slots: &'a [u32],
    pub key_mask: &'a [bool],
    /// `(start, len)` of each row; together they tile `0..ids.len()`.
    pub rows: &'a [(usize, usize)],
}

impl RowInput<'_> {
    fn len(&self) -> usize {
        self.ids.len()
    }
}

pub(crate) struct Dropout {
    rng: ChaCha8Rng,
    rate: f64,
}

impl Dropout {
    pub fn new(rng: ChaCha8Rng, rate: f64) -> Self {
        Dropout { rng, rate }
    }

    fn apply<T: Float>(&mut self, x: &mut [T]) -> Option<Vec<T>> {
        if self.rate <= 0.0 {
            return None;
        }
        let keep: T = cast(1.0 / (1.0 - self.rate));
        let mask: Vec<T> = x
            .iter()
            .map(|_| {
                if self.rng.random::<f64>() < self.rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        for (v, &m) in x.iter_mut().zip(&mask) {
            *v *= m;
        }
        Some(mask)
    }
}

fn apply_mask<T: Float>(x: &mut [T], mask: &Option<Vec<T>>) {
    if let Some(m) = mask {
        for (v, &k) in x.iter_mut().zip(m) {
            *v *= k;
        }
    }
}

struct LnCache<T> {
    xhat: Vec<T>,
    rstd: Vec<T>,
}

fn layer_norm<T: Float>(x: &[T], gain: &[T], bias: &[T], h: usize) -> (Vec<T>, LnCache<T>) {
    let rows = x.len() / h;
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); rows];
    let hf: T = cast(h as f64);
    let eps: T = cast(LN_EPS);
    for r in 0..rows {
        let row = &x[r * h..(r + 1) * h];
        let mean = row.iter().copied().sum::<T>() / hf;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / hf;
        let rs = T::one() / (var + eps).sqrt();
        rstd[r] = rs;
        for i in 0..h {
            let n = (row[i] - mean) * rs;
            xhat[r * h + i] = n;
            y[r * h + i] = n * gain[i] + bias[i];
        }
    }
    (y, LnCache { xhat, rstd })
}

fn layer_norm_backward<T: Float>(
    dy: &[T],
    cache: &LnCache<T>,
    gain: &[T],
    dgain: &mut [T],
    dbias: &mut [T],
    h: usize,
) -> Vec<T> {
    let rows = dy.len() / h;
    let mut dx = vec![T::zero(); dy.len()];
    let hf: T = cast(h as f64);
    let mut dxhat = vec![T::zero(); h];
    for r in 0..rows {
        let o = r * h;
        let mut sum = T::zero();
        let mut dot = T::zero();
        for i in 0..h {
            let g = dy[o + i];
            let xh = cache.xhat[o + i];
            dgain[i] += g * xh;
            dbias[i] += g;
            dxhat[i] = g * gain[i];
            sum += dxhat[i];
            dot += dxhat[i] * xh;
        }
        let scale = cache.rstd[r] / hf;
        for i in 0..h {
            dx[o + i] = scale * (hf * dxhat[i] - sum - cache.xhat[o + i] * dot);
        }
    }
    dx
}

fn gelu<T: Float>(x: T) -> T {
    let c: T = cast((2.0 / std::f64::consts::PI).sqrt());
    let k: T = cast(0.044715);
    let half: T = cast(0.5);
    half * x * (T::one() + (c * (x + k * x * x * x)).tanh())
}

fn gelu_grad<T: Float>(x: T) -> T {
    let c: T = cast((2.0 / std::f64::consts::PI).sqrt());
    let k: T = cast(0.044715);
    let half: T = cast(0.5);
    let three: T = cast(3.0);
    let t = (c * (x + k * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + three * k * x * x)
}

/// Attention applied row by row over a packed `[N x 3H]` qkv buffer.
/// Probabilities are concatenated per row as `[heads x len x len]`.
fn attention<T: Float>(
    qkv: &[T],
    rows: &[(usize, usize)],
    h: usize,
    heads: usize,
    key_mask: &[bool],
) -> (Vec<T>, Vec<T>) {
    let n = key_mask.len();
    let mut ctx = vec![T::zero(); n * h];
    let mut probs = Vec::with_capacity(rows.iter().map(|r| heads * r.1 * r.1).sum());
    for &(s, l) in rows {
        let (c, p) = attention_row(&qkv[s * 3 * h..(s + l) * 3 * h], l, h, heads, &key_mask[s..s + l]);
        ctx[s * h..(s + l) * h].copy_from_slice(&c);
        probs.extend(p);
    }
    (ctx, probs)
}

fn attention_backward<T: Float>(
    dctx: &[T],
    qkv: &[T],
    probs: &[T],
    rows: &[(usize, usize)],
    h: usize,
    heads: usize,
) -> Vec<T> {
    let mut dqkv = vec![T::zero(); qkv.len()];
    let mut offset = 0;
    for &(s, l) in rows {
        let p = &probs[offset..offset + heads * l * l];
        offset += heads * l * l;
        let d = attention_row_backward(
            &dctx[s * h..(s + l) * h],
            &qkv[s * 3 * h..(s + l) * 3 * h],
            p,
            l,
            h,
            heads,
        );
        dqkv[s * 3 * h..(s + l) * 3 * h].copy_from_slice(&d);
    }
    dqkv
}

/// Multi-head scaled dot-product attention over a fused `[L x 3H]` qkv buffer.
fn attention_row<T: Float>(qkv: &[T], l: usize, h: usize, heads: usize, key_mask: &[bool]) -> (Vec<T>, Vec<T>) {
    let d = h / heads;
    let scale: T = cast(1.0 / (d as f64).sqrt());
    let mut ctx = vec![T::zero(); l * h];
    let mut probs = vec![T::zero(); heads * l * l];
    for hd in 0..heads {
        let p = &mut probs[hd * l * l..(hd + 1) * l * l];
        gemm(
            scale,
            View::strided(qkv, hd * d, l, d, 3 * h, 1),
            View::strided(qkv, h + hd * d, l, d, 3 * h, 1).t(),
            T::zero(),
            ViewMut::new(p, l, l),
        );
        for row in p.chunks_exact_mut(l) {
            for (s, &keep) in row.iter_mut().zip(key_mask) {
                if !keep {
                    *s = T::neg_infinity();
                }
            }
            softmax_in_place(row);
        }
        gemm(
            T::one(),
            View::new(p, l, l),
            View::strided(qkv, 2 * h + hd * d, l, d, 3 * h, 1),
            T::zero(),
            ViewMut::strided(&mut ctx, hd * d, l, d, h, 1),
        );
    }
    (ctx, probs)
}

fn attention_row_backward<T: Float>(
    dctx: &[T],
    qkv: &[T],
    probs: &[T],
    l: usize,
    h: usize,
    heads: usize,
) -> Vec<T> {
    let d = h / heads;
    let scale: T = cast(1.0 / (d as f64).sqrt());
    let mut dqkv = vec![T::zero(); l * 3 * h];
    let mut dp = vec![T::zero(); l * l];
    for hd in 0..heads {
        let p = &probs[hd * l * l..(hd + 1) * l * l];
        let dctx_h = View::strided(dctx, hd * d, l, d, h, 1);
        gemm(
            T::one(),
            dctx_h,
            View::strided(qkv, 2 * h + hd * d, l, d, 3 * h, 1).t(),
            T::zero(),
            ViewMut::new(&mut dp, l, l),
        );
        gemm(
            T::one(),
            View::new(p, l, l).t(),
            dctx_h,
            T::zero(),
            ViewMut::strided(&mut dqkv, 2 * h + hd * d, l, d, 3 * h, 1),
        );
        // Softmax backward, in place: dS = P * (dP - rowsum(dP * P)).
        for (drow, prow) in dp.chunks_exact_mut(l).zip(p.chunks_exact(l)) {
            let dot: T = drow.iter().zip(prow).map(|(&a, &b)| a * b).sum();
            for (g, &pv) in drow.iter_mut().zip(prow) {
                *g = pv * (*g - dot);
            }
        }
        gemm(
            scale,
            View::new(&dp, l, l),
            View::strided(qkv, h + hd * d, l, d, 3 * h, 1),
            T::zero(),
            ViewMut::strided(&mut dqkv, hd * d, l, d, 3 * h, 1),
        );
        gemm(
            scale,
            View::new(&dp, l, l).t(),
            View::strided(qkv, hd * d, l, d, 3 * h, 1),
            T::zero(),
            ViewMut::strided(&mut dqkv, h + hd * d, l, d, 3 * h, 1),
        );
    }
    dqkv
}

struct LayerCache<T> {
    ln1: LnCache<T>,
    a1: Vec<T>,
    qkv: Vec<T>,
    probs: Vec<T>,
    ctx: Vec<T>,
    attn_mask: Option<Vec<T>>,
    ln2: LnCache<T>,
    a2: Vec<T>,
    ff_pre: Vec<T>,
    ff_act: Vec<T>,
    ff_mask: Option<Vec<T>>,
}

struct Dims {
    l: usize,
    h: usize,
    f: usize,
    heads: usize,
}

fn layer_forward<T: Float>(
    p: &Layer<T>,
    x: &[T],
    dims: &Dims,
    row: &RowInput,
    dropout: &mut Option<Dropout>,
) -> (Vec<T>, LayerCache<T>) {
    let Dims { l, h, f, heads } = *dims;
    let (a1, ln1) = layer_norm(x, p.ln1_gain, p.ln1_bias, h);
    let qkv = linear(&a1, p.qkv_weight, p.qkv_bias, l, h, 3 * h);
    let (ctx, probs) = attention(&qkv, row.rows, h, heads, row.key_mask);
    let mut attn = linear(&ctx, p.attn_out_weight, p.attn_out_bias, l, h, h);
    let attn_mask = dropout.as_mut().and_then(|d| d.apply(&mut attn));
    let mut x_mid = x.to_vec();
    add_assign(&mut x_mid, &attn);

    let (a2, ln2) = layer_norm(&x_mid, p.ln2_gain, p.ln2_bias, h);
    let ff_pre = linear(&a2, p.ff_in_weight, p.ff_in_bias, l, h, f);
    let ff_act: Vec<T> = ff_pre.iter().map(|&v| gelu(v)).collect();
    let mut ff_out = linear(&ff_act, p.ff_out_weight, p.ff_out_bias, l, f, h);
    let ff_mask = dropout.as_mut().and_then(|d| d.apply(&mut ff_out));
    add_assign(&mut x_mid, &ff_out);
    (
        x_mid,
        LayerCache {
            ln1,
            a1,
            qkv,
            probs,
            ctx,
            attn_mask,
            ln2,
            a2,
            ff_pre,
            ff_act,
            ff_mask,
        },
    )
}

fn layer_backward<T: Float>(
    p: &Layer<T>,
    g: LayerMut<T>,
    cache: &LayerCache<T>,
    d_out: &[T],
    dims: &Dims,
    rows: &[(usize, usize)],
) -> Vec<T> {
    let Dims { l, h, f, heads } = *dims;
    let mut d_ff_out = d_out.to_vec();
    apply_mask(&mut d_ff_out, &cache.ff_mask);
    let d_act = linear_backward(
        &cache.ff_act,
        p.ff_out_weight,
        &d_ff_out,
        g.ff_out_weight,
        g.ff_out_bias,
        l,
        f,
        h,
    );
    let d_pre: Vec<T> = d_act
        .iter()
        .zip(&cache.ff_pre)
        .map(|(&dv, &x)| dv * gelu_grad(x))
        .collect();
    let d_a2 = linear_backward(&cache.a2, p.ff_in_weight, &d_pre, g.ff_in_weight, g.ff_in_bias, l, h, f);
    let mut d_mid = d_out.to_vec();
    add_assign(
        &mut d_mid,
        &layer_norm_backward(&d_a2, &cache.ln2, p.ln2_gain, g.ln2_gain, g.ln2_bias, h),
    );

    let mut d_attn = d_mid.clone();
    apply_mask(&mut d_attn, &cache.attn_mask);
    let d_ctx = linear_backward(
        &cache.ctx,
        p.attn_out_weight,
        &d_attn,
        g.attn_out_weight,
        g.attn_out_bias,
        l,
        h,
        h,
    );
    let d_qkv = attention_backward(&d_ctx, &cache.qkv, &cache.probs, rows, h, heads);
    let d_a1 = linear_backward(&cache.a1, p.qkv_weight, &d_qkv, g.qkv_weight, g.qkv_bias, l, h, 3 * h);
    add_assign(
        &mut d_mid,
        &layer_norm_backward(&d_a1, &cache.ln1, p.ln1_gain, g.ln1_gain, g.ln1_bias, h),
    );
    d_mid
}

/// Everything the backward pass needs from a forward pass.
pub(crate) struct RowCache<T> {
    embed_mask: Option<Vec<T>>,
    layers: Vec<LayerCache<T>>,
    final_ln: LnCache<T>,
    /// Final hidden states `[L x H]`.
    pub hidden: Vec<T>,
}

pub(crate) fn encode<T: Float>(
    params: &ModelParams<T>,
    row: &RowInput,
    mut dropout: Option<Dropout>,
) -> RowCache<T> {
    let cfg = &params.config;
    let dims = Dims {
        l: row.len(),
        h: cfg.hidden_dim,
        f: cfg.feedforward_dim,
        heads: cfg.num_heads,
    };
    let h = dims.h;
    let tok = params.token_embedding();
    let pos = params.position_embedding();
    let slot = params.slot_embedding();
    let mut x = vec![T::zero(); dims.l * h];
    for i in 0..dims.l {
        let dst = &mut x[i * h..(i + 1) * h];
        let t = row.ids[i] as usize * h;
        let p = row.positions[i] as usize * h;
        for k in 0..h {
            dst[k] = tok[t + k] + pos[p + k];
        }
        if let Some(se) = slot {
            add_assign(dst, &se[row.slots[i] as usize * h..][..h]);
        }
    }
    let embed_mask = dropout.as_mut().and_then(|d| d.apply(&mut x));

    let mut layers = Vec::with_capacity(cfg.num_layers);
    for l in 0..cfg.num_layers {
        let (next, cache) = layer_forward(&params.layer(l), &x, &dims, row, &mut dropout);
        layers.push(cache);
        x = next;
    }
    let (gain, bias) = params.final_ln();
    let (hidden, final_ln) = layer_norm(&x, gain, bias, h);
    RowCache {
        embed_mask,
        layers,
        final_ln,
        hidden,
    }
}

/// Backpropagates `d_hidden` (gradient w.r.t. the final hidden states) into
/// `grads`. Head gradients are the caller's responsibility.
pub(crate) fn encode_backward<T: Float>(
    params: &ModelParams<T>,
    row: &RowInput,
    cache: &RowCache<T>,
    d_hidden: &[T],
    grads: &mut ModelParams<T>,
) {
    let cfg = &params.config;
    let dims = Dims {
        l: row.len(),
        h: cfg.hidden_dim,
        f: cfg.feedforward_dim,
        heads: cfg.num_heads,
    };
    let h = dims.h;
    let (gain, _) = params.final_ln();
    let mut d = {
        let (dg, db, ..) = grads.tail_mut();
        layer_norm_backward(d_hidden, &cache.final_ln, gain, dg, db, h)
    };
    for l in (0..cfg.num_layers).rev() {
        d = layer_backward(&params.layer(l), grads.layer_mut(l), &cache.layers[l], &d, &dims, row.rows);
    }
    apply_mask(&mut d, &cache.embed_mask);
    for i in 0..dims.l {
        let src = &d[i * h..(i + 1) * h];
        add_assign(&mut grads.token_embedding_mut()[row.ids[i] as usize * h..][..h], src);
        add_assign(&mut grads.position_embedding_mut()[row.positions[i] as usize * h..][..h], src);
        if let Some(se) = grads.slot_embedding_mut() {
            add_assign(&mut se[row.slots[i] as usize * h..][..h], src);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_grad_matches_difference() {
        for &x in &[-3.0f64, -0.7, 0.0, 0.4, 2.5] {
            let e = 1e-6;
            let fd = (gelu(x + e) - gelu(x - e)) / (2.0 * e);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn layer_norm_backward_matches_difference() {
        let h = 4;
        let x = vec![0.3f64, -1.2, 0.8, 2.0, 0.1, 0.1, -0.5, 0.9];
        let gain = vec![1.1, 0.9, 1.3, 0.7];
        let bias = vec![0.0, 0.1, -0.2, 0.3];
        let w = vec![0.5, -1.0, 2.0, 0.25, 1.5, -0.3, 0.2, 0.8];
        let f = |x: &[f64]| -> f64 {
            let (y, _) = layer_norm(x, &gain, &bias, h);
            y.iter().zip(&w).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = layer_norm(&x, &gain, &bias, h);
        let mut dg = vec![0.0; h];
        let mut db = vec![0.0; h];
        let dx = layer_norm_backward(&w, &cache, &gain, &mut dg, &mut db, h);
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += 1e-6;
            xm[i] -= 1e-6;
            let fd = (f(&xp) - f(&xm)) / 2e-6;
            assert!((fd - dx[i]).abs() < 1e-6, "{i}: {fd} vs {}", dx[i]);
        }
    }
}
