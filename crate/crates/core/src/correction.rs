//! Multi-hypothesis input assembly, top-segment inference, and sentence
//! reconstruction from per-position (token, op) predictions.

use serde::{Deserialize, Serialize};

use crate::alignment::{derive_warp_labels, insert_dum_tokens};
use crate::error::{Error, Result};
use crate::model::tensor::{argmax, softmax_in_place};
use crate::model::{forward, Batch, Example, ModelConfig, ModelParams};
use crate::vocab::{is_special, TokenId, TokenSeq, INSERT, PAD, UNK};
use crate::warping::WarpOp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHypothesis {
    pub text: TokenSeq,
    pub score: f64,
}

/// A transcription to correct plus its supporting n-best hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSet {
    pub id: String,
    pub golden: Option<TokenSeq>,
    /// ASR 1-best or a human transcription.
    pub top: TokenSeq,
    /// Confidence used for stratification (ASR 1-best confidence).
    pub top_score: f64,
    /// Sorted by descending score.
    pub additional: Vec<ScoredHypothesis>,
}

impl HypothesisSet {
    /// Top followed by the additional hypotheses, with scores.
    pub fn scored_hypotheses(&self) -> impl Iterator<Item = (&[TokenId], f64)> {
        std::iter::once((self.top.ids(), self.top_score))
            .chain(self.additional.iter().map(|h| (h.text.ids(), h.score)))
    }

    pub fn additional_texts(&self) -> Vec<&[TokenId]> {
        self.additional.iter().map(|h| h.text.ids()).collect()
    }

    /// Same set without additional hypotheses.
    pub fn top_only(&self) -> HypothesisSet {
        HypothesisSet {
            additional: Vec::new(),
            ..self.clone()
        }
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        if self.additional.len() + 1 > config.max_hypotheses {
            return Err(Error::Shape(format!(
                "{} additional hypotheses exceed the cap of {}",
                self.additional.len(),
                config.max_hypotheses - 1
            )));
        }
        if self.additional.windows(2).any(|w| w[0].score < w[1].score) {
            return Err(Error::Shape("additional hypotheses not sorted by score".into()));
        }
        for (hyp, _) in self.scored_hypotheses() {
            if let Some(&t) = hyp.iter().find(|&&t| is_special(t) && t != UNK) {
                return Err(Error::SpecialToken(t));
            }
        }
        Ok(())
    }
}

/// A model-ready row plus where the top segment lives in it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssembledInput {
    pub example: Example,
    /// The `[DUM]`-padded top hypothesis (segment 0, without trailing pads).
    pub padded_top: TokenSeq,
    /// Common segment length.
    pub segment_len: usize,
}

/// Concatenates the `[DUM]`-padded top hypothesis and the additional
/// hypotheses, each right-padded to a common length. Position ids restart at
/// zero in every segment; slot ids name the segment. Targets are left as
/// all-KEEP placeholders with no supervision.
pub fn assemble_input(set: &HypothesisSet, config: &ModelConfig) -> Result<AssembledInput> {
    set.validate(config)?;
    let padded_top = insert_dum_tokens(&set.top, &set.additional_texts());
    let mut segments: Vec<&[TokenId]> = vec![padded_top.ids()];
    segments.extend(set.additional_texts());
    let segment_len = segments.iter().map(|s| s.len()).max().unwrap_or(0);
    if segment_len > config.max_positions {
        return Err(Error::SequenceTooLong {
            len: segment_len,
            max: config.max_positions,
        });
    }
    let total = segment_len * segments.len();
    let mut ex = Example {
        input_ids: Vec::with_capacity(total),
        position_ids: Vec::with_capacity(total),
        slot_ids: Vec::with_capacity(total),
        target_ids: vec![PAD; total],
        target_ops: vec![WarpOp::Keep; total],
        loss_mask: vec![false; total],
    };
    for (slot, seg) in segments.iter().enumerate() {
        ex.input_ids.extend_from_slice(seg);
        ex.input_ids.extend(std::iter::repeat_n(PAD, segment_len - seg.len()));
        ex.position_ids.extend(0..segment_len as u32);
        ex.slot_ids.extend(std::iter::repeat_n(slot as u32, segment_len));
    }
    Ok(AssembledInput {
        example: ex,
        padded_top,
        segment_len,
    })
}

/// Fine-tuning row: every real position of every segment is supervised with
/// labels derived against the golden transcription. Returns the row and the
/// number of segments whose labels were lossy.
pub fn build_finetune_example(set: &HypothesisSet, config: &ModelConfig) -> Result<(Example, usize)> {
    let golden = set.golden.as_ref().ok_or_else(|| Error::MissingGolden(set.id.clone()))?;
    let mut assembled = assemble_input(set, config)?;
    let l = assembled.segment_len;
    let mut lossy = 0;
    let mut segments: Vec<&[TokenId]> = vec![assembled.padded_top.ids()];
    segments.extend(set.additional_texts());
    let ex = &mut assembled.example;
    for (slot, seg) in segments.iter().enumerate() {
        let labels = derive_warp_labels(seg, golden)?;
        lossy += usize::from(labels.lossy);
        for i in 0..seg.len() {
            ex.target_ids[slot * l + i] = labels.target_ids[i];
            ex.target_ops[slot * l + i] = labels.target_ops[i];
            ex.loss_mask[slot * l + i] = true;
        }
    }
    Ok((assembled.example, lossy))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionPrediction {
    pub token_id: TokenId,
    pub op: WarpOp,
    pub token_prob: f64,
    pub op_prob: f64,
}

impl PositionPrediction {
    /// A certain prediction, as used when replaying known labels.
    pub fn certain(token_id: TokenId, op: WarpOp) -> Self {
        PositionPrediction {
            token_id,
            op,
            token_prob: 1.0,
            op_prob: 1.0,
        }
    }
}

/// Predictions for every position of the padded top hypothesis (segment 0),
/// `[DUM]` slots included.
pub fn predict_top(params: &ModelParams<f32>, set: &HypothesisSet) -> Result<(TokenSeq, Vec<PositionPrediction>)> {
    if let Some(name) = params.first_non_finite() {
        return Err(Error::NonFiniteParameter(name));
    }
    let assembled = assemble_input(set, &params.config)?;
    let n = assembled.padded_top.len();
    if n == 0 {
        return Ok((assembled.padded_top, Vec::new()));
    }
    let batch = Batch::from_examples(&[assembled.example]);
    let logits = forward(params, &batch)?;
    let preds = (0..n)
        .map(|k| {
            let mut tok = logits.token_at(k).to_vec();
            let mut op = logits.op_at(k).to_vec();
            softmax_in_place(&mut tok);
            softmax_in_place(&mut op);
            let t = argmax(&tok);
            let o = argmax(&op);
            PositionPrediction {
                token_id: t as TokenId,
                op: WarpOp::from_label(o).expect("op head has five outputs"),
                token_prob: tok[t] as f64,
                op_prob: op[o] as f64,
            }
        })
        .collect();
    Ok((assembled.padded_top, preds))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Reconstruction {
    pub tokens: TokenSeq,
    /// Special-token predictions that were replaced rather than emitted.
    pub suppressed: usize,
}

fn is_placeholder(t: TokenId) -> bool {
    is_special(t) && t != UNK
}

/// Applies predicted operations to `input`:
///
/// * KEEP emits the input token (a kept `[DUM]` slot emits nothing),
/// * RAND and MASK emit the predicted token,
/// * DROP emits the predicted token and then the input token,
/// * INSERT emits nothing.
///
/// A special token predicted where a word is needed is never emitted; the
/// input token stands in for it.
pub fn reconstruct(input: &[TokenId], preds: &[PositionPrediction]) -> Result<Reconstruction> {
    if input.len() != preds.len() {
        return Err(Error::LengthMismatch(format!(
            "{} input tokens, {} predictions",
            input.len(),
            preds.len()
        )));
    }
    let mut out = Reconstruction::default();
    let emit = |t: TokenId, out: &mut Reconstruction| {
        if !is_placeholder(t) {
            out.tokens.0.push(t);
        }
    };
    for (&tok, p) in input.iter().zip(preds) {
        match p.op {
            WarpOp::Keep => emit(tok, &mut out),
            WarpOp::Insert => {}
            WarpOp::Rand | WarpOp::Mask => {
                if is_special(p.token_id) {
                    out.suppressed += 1;
                    emit(tok, &mut out);
                } else {
                    emit(p.token_id, &mut out);
                }
            }
            WarpOp::Drop => {
                if is_special(p.token_id) {
                    out.suppressed += 1;
                } else {
                    emit(p.token_id, &mut out);
                }
                emit(tok, &mut out);
            }
        }
    }
    Ok(out)
}

/// Replays known labels; panics on length mismatch.
pub fn reconstruct_from_labels(input: &[TokenId], targets: &[TokenId], ops: &[WarpOp]) -> Vec<TokenId> {
    let preds: Vec<_> = targets
        .iter()
        .zip(ops)
        .map(|(&t, &op)| PositionPrediction::certain(t, op))
        .collect();
    reconstruct(input, &preds)
        .expect("labels match input length")
        .tokens
        .into_inner()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectOptions {
    /// Edits whose op confidence is below this are treated as KEEP.
    pub op_threshold: f64,
    /// When false, additional hypotheses are ignored.
    pub use_additional: bool,
}

impl Default for CorrectOptions {
    fn default() -> Self {
        CorrectOptions {
            op_threshold: 0.0,
            use_additional: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edit {
    pub pos: usize,
    pub op: WarpOp,
    pub token: TokenId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub tokens: TokenSeq,
    pub padded_top: TokenSeq,
    pub edits: Vec<Edit>,
    pub suppressed: usize,
}

/// Pads, assembles, predicts and reconstructs.
pub fn correct(params: &ModelParams<f32>, set: &HypothesisSet, opts: &CorrectOptions) -> Result<Correction> {
    let owned;
    let set = if opts.use_additional {
        set
    } else {
        owned = set.top_only();
        &owned
    };
    let (padded_top, mut preds) = predict_top(params, set)?;
    for p in &mut preds {
        if p.op != WarpOp::Keep && p.op_prob < opts.op_threshold {
            p.op = WarpOp::Keep;
        }
    }
    let rec = reconstruct(&padded_top, &preds)?;
    let edits = preds
        .iter()
        .enumerate()
        .filter(|(_, p)| p.op != WarpOp::Keep)
        .map(|(pos, p)| Edit {
            pos,
            op: p.op,
            token: if p.op == WarpOp::Insert { INSERT } else { p.token_id },
        })
        .collect();
    Ok(Correction {
        tokens: rec.tokens,
        padded_top,
        edits,
        suppressed: rec.suppressed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::{DUM, MASK};

    const DELETE: TokenId = 10;
    const TIMER: TokenId = 11;
    const THIRTY: TokenId = 12;
    const SECOND: TokenId = 13;
    const MY: TokenId = 14;
    const THE: TokenId = 16;

    fn cfg() -> ModelConfig {
        ModelConfig {
            vocab_size: 20,
            hidden_dim: 8,
            num_layers: 1,
            num_heads: 2,
            feedforward_dim: 16,
            max_positions: 8,
            max_hypotheses: 5,
            dropout_rate: 0.0,
            use_slot_embedding: false,
            init_seed: 0,
        }
    }

    fn set(top: &[TokenId], rest: &[&[TokenId]]) -> HypothesisSet {
        HypothesisSet {
            id: "x".into(),
            golden: None,
            top: TokenSeq(top.to_vec()),
            top_score: 0.9,
            additional: rest
                .iter()
                .enumerate()
                .map(|(i, t)| ScoredHypothesis {
                    text: TokenSeq(t.to_vec()),
                    score: 0.8 - i as f64 * 0.1,
                })
                .collect(),
        }
    }

    #[test]
    fn assemble_repeats_positions_per_segment() {
        let s = set(&[DELETE, TIMER], &[&[DELETE, THIRTY, SECOND, TIMER]]);
        let a = assemble_input(&s, &cfg()).unwrap();
        assert_eq!(
            a.example.input_ids,
            vec![DELETE, DUM, DUM, TIMER, DELETE, THIRTY, SECOND, TIMER]
        );
        assert_eq!(a.example.position_ids, vec![0, 1, 2, 3, 0, 1, 2, 3]);
        assert_eq!(a.example.slot_ids, vec![0, 0, 0, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn assemble_single_segment() {
        let s = set(&[DELETE, TIMER], &[]);
        let a = assemble_input(&s, &cfg()).unwrap();
        assert_eq!(a.example.input_ids, vec![DELETE, TIMER]);
        assert_eq!(a.example.position_ids, vec![0, 1]);
    }

    #[test]
    fn assemble_pads_to_common_length() {
        // Top of length 3; additional of lengths 2 and 4.
        let s = set(&[DELETE, THE, TIMER], &[&[DELETE, TIMER], &[DELETE, THE, MY, TIMER]]);
        let a = assemble_input(&s, &cfg()).unwrap();
        assert_eq!(a.segment_len, 4);
        assert_eq!(a.example.input_ids.len(), 12);
        assert_eq!(&a.example.input_ids[4..8], &[DELETE, TIMER, PAD, PAD]);
        let batch = Batch::from_examples(&[a.example.clone()]);
        for k in 0..12 {
            assert_eq!(batch.attention_mask[k], batch.input_ids[k] != PAD);
        }
        for seg in 1..3 {
            assert_eq!(a.example.position_ids[seg * 4..seg * 4 + 4], a.example.position_ids[..4]);
        }
    }

    #[test]
    fn assemble_rejects_long_sequences() {
        let long = [DELETE; 9];
        let s = set(&long, &[]);
        assert!(matches!(
            assemble_input(&s, &cfg()),
            Err(Error::SequenceTooLong { len: 9, max: 8 })
        ));
    }

    #[test]
    fn assemble_rejects_too_many_hypotheses() {
        let h: &[TokenId] = &[DELETE];
        let s = set(&[DELETE], &[h, h, h, h, h]);
        assert!(assemble_input(&s, &cfg()).is_err());
    }

    #[test]
    fn reconstruct_fills_dum_slots() {
        let out = reconstruct_from_labels(
            &[DELETE, DUM, DUM, TIMER],
            &[DELETE, THIRTY, SECOND, TIMER],
            &[WarpOp::Keep, WarpOp::Mask, WarpOp::Mask, WarpOp::Keep],
        );
        assert_eq!(out, vec![DELETE, THIRTY, SECOND, TIMER]);
    }

    #[test]
    fn reconstruct_insert_deletes() {
        let out = reconstruct_from_labels(
            &[DELETE, MY, TIMER],
            &[DELETE, INSERT, TIMER],
            &[WarpOp::Keep, WarpOp::Insert, WarpOp::Keep],
        );
        assert_eq!(out, vec![DELETE, TIMER]);
    }

    #[test]
    fn reconstruct_drop_reinserts_before_anchor() {
        let out = reconstruct_from_labels(&[DELETE, TIMER], &[DELETE, THE], &[WarpOp::Keep, WarpOp::Drop]);
        assert_eq!(out, vec![DELETE, THE, TIMER]);
    }

    #[test]
    fn reconstruct_never_emits_specials() {
        let preds = [
            PositionPrediction::certain(PAD, WarpOp::Rand),
            PositionPrediction::certain(DUM, WarpOp::Keep),
            PositionPrediction::certain(MASK, WarpOp::Mask),
            PositionPrediction::certain(TIMER, WarpOp::Insert),
            PositionPrediction::certain(INSERT, WarpOp::Drop),
        ];
        let r = reconstruct(&[DELETE, DUM, DUM, MY, UNK], &preds).unwrap();
        assert_eq!(r.tokens.ids(), &[DELETE, UNK]);
        assert_eq!(r.suppressed, 3);
        assert!(reconstruct(&[DELETE], &[]).is_err());
    }

    #[test]
    fn finetune_example_labels_every_segment() {
        let mut s = set(&[DELETE, TIMER], &[&[DELETE, THIRTY, SECOND, TIMER]]);
        s.golden = Some(TokenSeq(vec![DELETE, THIRTY, SECOND, TIMER]));
        let (ex, lossy) = build_finetune_example(&s, &cfg()).unwrap();
        assert_eq!(lossy, 0);
        assert!(ex.loss_mask.iter().all(|&m| m));
        assert_eq!(
            &ex.target_ops[..4],
            &[WarpOp::Keep, WarpOp::Mask, WarpOp::Mask, WarpOp::Keep]
        );
        assert!(ex.target_ops[4..].iter().all(|&o| o == WarpOp::Keep));
    }
}
