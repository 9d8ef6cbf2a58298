use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::vocab::{TokenId, PAD};
use crate::warping::{WarpOp, WarpedSample};

/// One supervised row before padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub input_ids: Vec<TokenId>,
    pub position_ids: Vec<u32>,
    pub slot_ids: Vec<u32>,
    pub target_ids: Vec<TokenId>,
    pub target_ops: Vec<WarpOp>,
    pub loss_mask: Vec<bool>,
}

impl Example {
    pub fn len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_ids.is_empty()
    }

    /// Single-segment example from a warped sentence.
    pub fn from_warped(sample: &WarpedSample) -> Self {
        let n = sample.len();
        Example {
            input_ids: sample.input_ids.clone(),
            position_ids: (0..n as u32).collect(),
            slot_ids: vec![0; n],
            target_ids: sample.target_ids.clone(),
            target_ops: sample.target_ops.clone(),
            loss_mask: sample.loss_mask.clone(),
        }
    }

    pub fn supervised(&self) -> usize {
        self.loss_mask.iter().filter(|&&m| m).count()
    }
}

/// Right-padded `[batch_size x seq_len]` model input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub batch_size: usize,
    pub seq_len: usize,
    pub input_ids: Vec<TokenId>,
    pub position_ids: Vec<u32>,
    pub slot_ids: Vec<u32>,
    /// False exactly on `[PAD]`.
    pub attention_mask: Vec<bool>,
    pub target_ids: Vec<TokenId>,
    pub target_ops: Vec<WarpOp>,
    pub loss_mask: Vec<bool>,
}

impl Batch {
    pub fn from_examples<E: AsRef<Example>>(examples: &[E]) -> Self {
        let batch_size = examples.len();
        let seq_len = examples.iter().map(|e| e.as_ref().len()).max().unwrap_or(0);
        let n = batch_size * seq_len;
        let mut b = Batch {
            batch_size,
            seq_len,
            input_ids: vec![PAD; n],
            position_ids: vec![0; n],
            slot_ids: vec![0; n],
            attention_mask: vec![false; n],
            target_ids: vec![PAD; n],
            target_ops: vec![WarpOp::Keep; n],
            loss_mask: vec![false; n],
        };
        for (r, e) in examples.iter().enumerate() {
            let e = e.as_ref();
            let o = r * seq_len;
            for i in 0..e.len() {
                b.input_ids[o + i] = e.input_ids[i];
                b.position_ids[o + i] = e.position_ids[i];
                b.slot_ids[o + i] = e.slot_ids[i];
                b.attention_mask[o + i] = e.input_ids[i] != PAD;
                b.target_ids[o + i] = e.target_ids[i];
                b.target_ops[o + i] = e.target_ops[i];
                b.loss_mask[o + i] = e.loss_mask[i] && e.input_ids[i] != PAD;
            }
        }
        b
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let n = self.batch_size * self.seq_len;
        let lens = [
            self.input_ids.len(),
            self.position_ids.len(),
            self.slot_ids.len(),
            self.attention_mask.len(),
            self.target_ids.len(),
            self.target_ops.len(),
            self.loss_mask.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::Shape(format!(
                "batch fields must all have {n} entries, got {lens:?}"
            )));
        }
        for k in 0..n {
            if self.input_ids[k] as usize >= config.vocab_size
                || self.target_ids[k] as usize >= config.vocab_size
            {
                return Err(Error::Shape(format!("token id out of range at {k}")));
            }
            if self.position_ids[k] as usize >= config.max_positions {
                return Err(Error::SequenceTooLong {
                    len: self.position_ids[k] as usize + 1,
                    max: config.max_positions,
                });
            }
            if self.slot_ids[k] as usize >= config.max_hypotheses {
                return Err(Error::Shape(format!("slot id out of range at {k}")));
            }
            if self.loss_mask[k] && !self.attention_mask[k] {
                return Err(Error::Shape(format!("supervised padding at {k}")));
            }
        }
        Ok(())
    }

    pub fn row(&self, r: usize) -> std::ops::Range<usize> {
        r * self.seq_len..(r + 1) * self.seq_len
    }

    pub fn supervised(&self) -> usize {
        self.loss_mask.iter().filter(|&&m| m).count()
    }
}

impl AsRef<Example> for Example {
    fn as_ref(&self) -> &Example {
        self
    }
}
