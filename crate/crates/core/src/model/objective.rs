//! Public forward pass, the summed two-head cross-entropy, and its gradient.

use super::batch::Batch;
use super::encoder::{encode, encode_backward, Dropout, RowInput};
use super::params::ModelParams;
use super::tensor::{argmax, cast, linear, linear_backward, log_sum_exp, softmax_in_place, Float};
use crate::error::{Error, Result};
use crate::seed::rng_from;
use crate::warping::WarpOp;

/// Head outputs for a whole batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits<T> {
    pub batch_size: usize,
    pub seq_len: usize,
    pub vocab_size: usize,
    /// `[B x L x vocab_size]`
    pub token: Vec<T>,
    /// `[B x L x 5]`
    pub op: Vec<T>,
}

impl<T: Float> Logits<T> {
    pub fn token_at(&self, k: usize) -> &[T] {
        &self.token[k * self.vocab_size..(k + 1) * self.vocab_size]
    }

    pub fn op_at(&self, k: usize) -> &[T] {
        &self.op[k * WarpOp::COUNT..(k + 1) * WarpOp::COUNT]
    }
}

/// Evaluation-mode forward pass (no dropout).
pub fn forward<T: Float>(params: &ModelParams<T>, batch: &Batch) -> Result<Logits<T>> {
    batch.validate(&params.config)?;
    let (b, l) = (batch.batch_size, batch.seq_len);
    let h = params.config.hidden_dim;
    let v = params.config.vocab_size;
    let mut out = Logits {
        batch_size: b,
        seq_len: l,
        vocab_size: v,
        token: Vec::new(),
        op: Vec::new(),
    };
    let (tw, tb) = params.token_head();
    let (ow, ob) = params.op_head();
    let rows: Vec<(usize, usize)> = (0..b).map(|r| (r * l, l)).collect();
    let row = RowInput {
        ids: &batch.input_ids,
        positions: &batch.position_ids,
        slots: &batch.slot_ids,
        key_mask: &batch.attention_mask,
        rows: &rows,
    };
    let cache = encode(params, &row, None);
    out.token = linear(&cache.hidden, tw, tb, b * l, h, v);
    out.op = linear(&cache.hidden, ow, ob, b * l, h, WarpOp::COUNT);
    Ok(out)
}

/// Mean token cross-entropy plus mean op cross-entropy over supervised
/// positions.
pub fn loss<T: Float>(logits: &Logits<T>, batch: &Batch) -> Result<T> {
    let n = logits.batch_size * logits.seq_len;
    if batch.batch_size != logits.batch_size
        || batch.seq_len != logits.seq_len
        || logits.token.len() != n * logits.vocab_size
        || logits.op.len() != n * WarpOp::COUNT
    {
        return Err(Error::Shape("logits do not match batch".into()));
    }
    let count = batch.supervised();
    if count == 0 {
        return Err(Error::NoSupervisedPositions);
    }
    let mut tok = 0.0f64;
    let mut op = 0.0f64;
    for k in (0..n).filter(|&k| batch.loss_mask[k]) {
        let t = logits.token_at(k);
        tok += (log_sum_exp(t) - t[batch.target_ids[k] as usize]).to_f64_lossy();
        let o = logits.op_at(k);
        op += (log_sum_exp(o) - o[batch.target_ops[k].label()]).to_f64_lossy();
    }
    Ok(cast((tok + op) / count as f64))
}

/// Loss and accuracy tallies over one batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchStats {
    pub loss: f64,
    pub token_loss: f64,
    pub op_loss: f64,
    pub supervised: usize,
    pub token_correct: usize,
    pub op_correct: usize,
}

impl BatchStats {
    pub fn token_acc(&self) -> f64 {
        self.token_correct as f64 / self.supervised.max(1) as f64
    }

    pub fn op_acc(&self) -> f64 {
        self.op_correct as f64 / self.supervised.max(1) as f64
    }
}

/// Cross-entropy rows: accumulates loss and writes `(softmax - onehot) * norm`
/// into `logits` in place.
fn ce_rows<T: Float>(logits: &mut [T], width: usize, targets: &[usize], norm: T) -> (f64, usize) {
    let mut total = 0.0;
    let mut correct = 0;
    for (row, &t) in logits.chunks_exact_mut(width).zip(targets) {
        total += (log_sum_exp(row) - row[t]).to_f64_lossy();
        correct += usize::from(argmax(row) == t);
        softmax_in_place(row);
        row[t] -= T::one();
        row.iter_mut().for_each(|g| *g *= norm);
    }
    (total, correct)
}

/// Loss and exact gradient. With `dropout_seed` set, dropout is active and
/// drawn from that seed; otherwise the pass is evaluation-mode. Padding is
/// stripped from each row before encoding,
/// which leaves the loss unchanged because padded keys get zero weight and
/// padded positions are never supervised.
pub fn loss_and_grad<T: Float>(
    params: &ModelParams<T>,
    batch: &Batch,
    dropout_seed: Option<u64>,
) -> Result<(BatchStats, ModelParams<T>)> {
    batch.validate(&params.config)?;
    let count = batch.supervised();
    if count == 0 {
        return Err(Error::NoSupervisedPositions);
    }
    let cfg = &params.config;
    let (h, v) = (cfg.hidden_dim, cfg.vocab_size);
    let norm: T = cast(1.0 / count as f64);
    let mut grads = params.zeros_like();
    let mut stats = BatchStats {
        supervised: count,
        ..BatchStats::default()
    };

    // Pack the non-padding positions of every row.
    let mut keep = Vec::with_capacity(batch.input_ids.len());
    let mut rows = Vec::with_capacity(batch.batch_size);
    for r in 0..batch.batch_size {
        let start = keep.len();
        keep.extend(batch.row(r).filter(|&k| batch.attention_mask[k]));
        if keep.len() > start {
            rows.push((start, keep.len() - start));
        }
    }
    let sel: Vec<usize> = (0..keep.len()).filter(|&i| batch.loss_mask[keep[i]]).collect();
    let ids: Vec<u32> = keep.iter().map(|&k| batch.input_ids[k]).collect();
    let positions: Vec<u32> = keep.iter().map(|&k| batch.position_ids[k]).collect();
    let slots: Vec<u32> = keep.iter().map(|&k| batch.slot_ids[k]).collect();
    let key_mask = vec![true; keep.len()];
    let row = RowInput {
        ids: &ids,
        positions: &positions,
        slots: &slots,
        key_mask: &key_mask,
        rows: &rows,
    };
    let dropout = dropout_seed
        .filter(|_| cfg.dropout_rate > 0.0)
        .map(|s| Dropout::new(rng_from(s), cfg.dropout_rate));
    let cache = encode(params, &row, dropout);

    let n = sel.len();
    let mut hs = Vec::with_capacity(n * h);
    for &i in &sel {
        hs.extend_from_slice(&cache.hidden[i * h..(i + 1) * h]);
    }
    let (tw, tb) = params.token_head();
    let (ow, ob) = params.op_head();
    let mut tok_logits = linear(&hs, tw, tb, n, h, v);
    let mut op_logits = linear(&hs, ow, ob, n, h, WarpOp::COUNT);
    let tok_targets: Vec<usize> = sel.iter().map(|&i| batch.target_ids[keep[i]] as usize).collect();
    let op_targets: Vec<usize> = sel.iter().map(|&i| batch.target_ops[keep[i]].label()).collect();
    let (tl, tc) = ce_rows(&mut tok_logits, v, &tok_targets, norm);
    let (ol, oc) = ce_rows(&mut op_logits, WarpOp::COUNT, &op_targets, norm);
    stats.token_loss += tl;
    stats.op_loss += ol;
    stats.token_correct += tc;
    stats.op_correct += oc;

    let (_, _, gtw, gtb, gow, gob) = grads.tail_mut();
    let mut d_hs = linear_backward(&hs, tw, &tok_logits, gtw, gtb, n, h, v);
    let d_op = linear_backward(&hs, ow, &op_logits, gow, gob, n, h, WarpOp::COUNT);
    for (a, b) in d_hs.iter_mut().zip(&d_op) {
        *a += *b;
    }
    let mut d_hidden = vec![T::zero(); keep.len() * h];
    for (j, &i) in sel.iter().enumerate() {
        d_hidden[i * h..(i + 1) * h].copy_from_slice(&d_hs[j * h..(j + 1) * h]);
    }
    encode_backward(params, &row, &cache, &d_hidden, &mut grads);
    stats.token_loss /= count as f64;
    stats.op_loss /= count as f64;
    stats.loss = stats.token_loss + stats.op_loss;
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::NonFiniteGradient(name));
    }
    Ok((stats, grads))
}

/// Evaluation-mode loss and exact gradients.
pub fn backward<T: Float>(params: &ModelParams<T>, batch: &Batch) -> Result<(T, ModelParams<T>)> {
    let (stats, grads) = loss_and_grad(params, batch, None)?;
    Ok((cast(stats.loss), grads))
}
