//! Sentence warping: MASK, RAND, DROP, INSERT and KEEP corruptions with
//! per-position supervision for both prediction heads.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from};
use crate::vocab::{is_special, TokenId, Vocabulary, INSERT, MASK, NUM_SPECIAL};

/// The five warping operations. The discriminant is the label id used by
/// the operation head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum WarpOp {
    Mask = 0,
    Rand = 1,
    Drop = 2,
    Insert = 3,
    Keep = 4,
}

impl WarpOp {
    pub const COUNT: usize = 5;
    pub const ALL: [WarpOp; 5] = [
        WarpOp::Mask,
        WarpOp::Rand,
        WarpOp::Drop,
        WarpOp::Insert,
        WarpOp::Keep,
    ];

    pub fn label(self) -> usize {
        self as usize
    }

    pub fn from_label(label: usize) -> Option<WarpOp> {
        Self::ALL.get(label).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            WarpOp::Mask => "MASK",
            WarpOp::Rand => "RAND",
            WarpOp::Drop => "DROP",
            WarpOp::Insert => "INSERT",
            WarpOp::Keep => "KEEP",
        }
    }
}

impl std::fmt::Display for WarpOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpPolicy {
    /// Fraction of positions selected for warping.
    pub select_rate: f64,
    /// Probability of each op given selection, indexed by label.
    pub op_weights: [f64; WarpOp::COUNT],
    pub rng_seed: u64,
}

impl Default for WarpPolicy {
    fn default() -> Self {
        WarpPolicy {
            select_rate: 0.15,
            op_weights: [0.2; WarpOp::COUNT],
            rng_seed: 0,
        }
    }
}

impl WarpPolicy {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    /// Applies a `key = value` override. `op_weights` takes five
    /// comma-separated values in label order.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let bad = || Error::InvalidPolicy(format!("bad value {value:?} for {key}"));
        match key {
            "select_rate" => self.select_rate = value.trim().parse().map_err(|_| bad())?,
            "op_weights" => {
                let w: Vec<f64> = value
                    .split(',')
                    .map(|v| v.trim().parse().map_err(|_| bad()))
                    .collect::<Result<_>>()?;
                self.op_weights = w.try_into().map_err(|_| bad())?;
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.select_rate) {
            return Err(Error::InvalidPolicy(format!(
                "select_rate {} outside [0, 1]",
                self.select_rate
            )));
        }
        if self.op_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidPolicy("negative op weight".into()));
        }
        let sum: f64 = self.op_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidPolicy(format!("op weights sum to {sum}")));
        }
        Ok(())
    }
}

/// A warped sentence and its supervision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarpedSample {
    pub input_ids: Vec<TokenId>,
    pub target_ids: Vec<TokenId>,
    pub target_ops: Vec<WarpOp>,
    pub loss_mask: Vec<bool>,
}

impl WarpedSample {
    pub fn len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_ids.is_empty()
    }

    pub fn supervised(&self) -> usize {
        self.loss_mask.iter().filter(|&&m| m).count()
    }

    pub fn to_record(&self) -> WarpedRecord {
        WarpedRecord {
            input: self.input_ids.clone(),
            targets: self.target_ids.clone(),
            ops: self.target_ops.iter().map(|op| op.label() as u8).collect(),
            mask: self.loss_mask.iter().map(|&m| m as u8).collect(),
        }
    }

    pub fn from_record(rec: &WarpedRecord) -> Result<Self> {
        let target_ops = rec
            .ops
            .iter()
            .map(|&l| {
                WarpOp::from_label(l as usize)
                    .ok_or_else(|| Error::LengthMismatch(format!("bad op label {l}")))
            })
            .collect::<Result<_>>()?;
        Ok(WarpedSample {
            input_ids: rec.input.clone(),
            target_ids: rec.targets.clone(),
            target_ops,
            loss_mask: rec.mask.iter().map(|&m| m != 0).collect(),
        })
    }
}

/// JSON Lines form of a [`WarpedSample`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarpedRecord {
    pub input: Vec<TokenId>,
    pub targets: Vec<TokenId>,
    pub ops: Vec<u8>,
    pub mask: Vec<u8>,
}

fn draw_op<R: Rng>(rng: &mut R, weights: &[f64; WarpOp::COUNT], allow_drop: bool) -> WarpOp {
    let total: f64 = WarpOp::ALL
        .iter()
        .filter(|&&op| allow_drop || op != WarpOp::Drop)
        .map(|op| weights[op.label()])
        .sum();
    if total <= 0.0 {
        return WarpOp::Keep;
    }
    let mut u = rng.random::<f64>() * total;
    for op in WarpOp::ALL {
        if op == WarpOp::Drop && !allow_drop {
            continue;
        }
        let w = weights[op.label()];
        if u < w {
            return op;
        }
        u -= w;
    }
    // Rounding left `u` at the top edge; take the last admissible op.
    WarpOp::ALL
        .iter()
        .rev()
        .copied()
        .find(|&op| weights[op.label()] > 0.0 && (allow_drop || op != WarpOp::Drop))
        .unwrap_or(WarpOp::Keep)
}

fn random_regular<R: Rng>(rng: &mut R, vocab_size: usize, avoid: Option<TokenId>) -> TokenId {
    let regular = vocab_size - NUM_SPECIAL;
    match avoid {
        Some(a) if regular > 1 && !is_special(a) => {
            // Uniform over regular tokens other than `a`.
            let k = rng.random_range(0..regular - 1) as TokenId + NUM_SPECIAL as TokenId;
            if k >= a {
                k + 1
            } else {
                k
            }
        }
        _ => rng.random_range(NUM_SPECIAL..vocab_size) as TokenId,
    }
}

/// Warps a clean sentence under `policy`.
///
/// Selection is a Bernoulli draw per position. A DROP is only admitted when
/// the next position exists and is unselected, since the dropped token is
/// supervised on that surviving position; otherwise the op is re-drawn from
/// the remaining weights. INSERT places a random token directly before the
/// selected position, which itself stays unsupervised.
pub fn warp_sentence(
    tokens: &[TokenId],
    policy: &WarpPolicy,
    vocab: &Vocabulary,
) -> Result<WarpedSample> {
    policy.validate()?;
    if tokens.is_empty() {
        return Err(Error::EmptyInput);
    }
    vocab.check(tokens)?;
    if let Some(&t) = tokens.iter().find(|&&t| is_special(t)) {
        return Err(Error::SpecialToken(t));
    }
    if vocab.num_regular() == 0 {
        return Err(Error::InvalidVocab("no regular tokens".into()));
    }

    let mut rng = rng_from(policy.rng_seed);
    let selected: Vec<bool> = tokens
        .iter()
        .map(|_| rng.random::<f64>() < policy.select_rate)
        .collect();
    let mut ops = Vec::with_capacity(tokens.len());
    for i in 0..tokens.len() {
        if !selected[i] {
            ops.push(None);
            continue;
        }
        let allow_drop = i + 1 < tokens.len() && !selected[i + 1];
        ops.push(Some(draw_op(&mut rng, &policy.op_weights, allow_drop)));
    }

    let n = tokens.len() + 1;
    let mut out = WarpedSample {
        input_ids: Vec::with_capacity(n),
        target_ids: Vec::with_capacity(n),
        target_ops: Vec::with_capacity(n),
        loss_mask: Vec::with_capacity(n),
    };
    let mut push = |input: TokenId, target: TokenId, op: WarpOp, supervised: bool| {
        out.input_ids.push(input);
        out.target_ids.push(target);
        out.target_ops.push(op);
        out.loss_mask.push(supervised);
    };
    let mut dropped: Option<TokenId> = None;
    for (&tok, op) in tokens.iter().zip(&ops) {
        match op {
            None => match dropped.take() {
                Some(d) => push(tok, d, WarpOp::Drop, true),
                None => push(tok, tok, WarpOp::Keep, false),
            },
            Some(WarpOp::Mask) => push(MASK, tok, WarpOp::Mask, true),
            Some(WarpOp::Rand) => {
                let r = random_regular(&mut rng, vocab.len(), Some(tok));
                push(r, tok, WarpOp::Rand, true);
            }
            Some(WarpOp::Drop) => dropped = Some(tok),
            Some(WarpOp::Insert) => {
                let r = random_regular(&mut rng, vocab.len(), None);
                push(r, INSERT, WarpOp::Insert, true);
                push(tok, tok, WarpOp::Keep, false);
            }
            Some(WarpOp::Keep) => push(tok, tok, WarpOp::Keep, true),
        }
    }
    debug_assert!(dropped.is_none());
    Ok(out)
}

/// Warps every sentence with a per-sentence seed derived from the policy
/// seed and the sentence index.
pub fn warp_corpus<S: AsRef<[TokenId]>>(
    sentences: &[S],
    policy: &WarpPolicy,
    vocab: &Vocabulary,
) -> Result<Vec<WarpedSample>> {
    sentences
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let p = policy.with_seed(derive_seed(policy.rng_seed, i as u64));
            warp_sentence(s.as_ref(), &p, vocab)
        })
        .collect()
}

/// Checks every [`WarpedSample`] invariant.
pub fn verify_sample(sample: &WarpedSample, vocab: &Vocabulary) -> bool {
    let n = sample.input_ids.len();
    if sample.target_ids.len() != n || sample.target_ops.len() != n || sample.loss_mask.len() != n
    {
        return false;
    }
    if vocab.check(&sample.input_ids).is_err() || vocab.check(&sample.target_ids).is_err() {
        return false;
    }
    (0..n).all(|i| {
        let op = sample.target_ops[i];
        let target = sample.target_ids[i];
        if (op == WarpOp::Insert) != (target == INSERT) {
            return false;
        }
        sample.loss_mask[i] || (op == WarpOp::Keep && target == sample.input_ids[i])
    })
}
