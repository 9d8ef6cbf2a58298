//! Synthetic noisy channel producing n-best hypothesis sets with confidences.

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::correction::{HypothesisSet, ScoredHypothesis};
use crate::error::{Error, Result};
use crate::seed::rng_from;
use crate::vocab::{is_special, TokenId, TokenSeq};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub sub_rate: f64,
    pub del_rate: f64,
    pub ins_rate: f64,
    /// 1 samples replacements by unigram frequency; larger values flatten it.
    pub confusion_temperature: f64,
    pub n_best: usize,
    pub seed: u64,
}

impl NoiseProfile {
    pub fn noiseless() -> Self {
        NoiseProfile {
            sub_rate: 0.0,
            del_rate: 0.0,
            ins_rate: 0.0,
            confusion_temperature: 1.0,
            n_best: 1,
            seed: 0,
        }
    }

    /// ASR-like channel: about 15% WER on the selected top hypothesis.
    pub fn asr_default() -> Self {
        NoiseProfile {
            sub_rate: 0.26,
            del_rate: 0.06,
            ins_rate: 0.05,
            confusion_temperature: 2.0,
            n_best: 5,
            seed: 0,
        }
    }

    /// Human-like transcriber: a single draw near 12% WER.
    pub fn human_default() -> Self {
        NoiseProfile {
            sub_rate: 0.08,
            del_rate: 0.02,
            ins_rate: 0.02,
            confusion_temperature: 2.0,
            n_best: 1,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [self.sub_rate, self.del_rate, self.ins_rate];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::InvalidProfile(format!("rates {rates:?} outside [0, 1]")));
        }
        if rates.iter().sum::<f64>() > 1.0 + 1e-12 {
            return Err(Error::InvalidProfile(format!("rates {rates:?} sum above 1")));
        }
        if !(self.confusion_temperature > 0.0 && self.confusion_temperature.is_finite()) {
            return Err(Error::InvalidProfile("confusion_temperature must be positive".into()));
        }
        if !(1..=5).contains(&self.n_best) {
            return Err(Error::InvalidProfile(format!("n_best {} not in 1..=5", self.n_best)));
        }
        Ok(())
    }

    /// Applies a `key=value` override; returns false for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let bad = |_| Error::InvalidProfile(format!("bad value for {key}: {value}"));
        match key {
            "sub_rate" => self.sub_rate = value.parse().map_err(bad)?,
            "del_rate" => self.del_rate = value.parse().map_err(bad)?,
            "ins_rate" => self.ins_rate = value.parse().map_err(bad)?,
            "confusion_temperature" => self.confusion_temperature = value.parse().map_err(bad)?,
            "n_best" => self.n_best = value.parse().map_err(|_| Error::InvalidProfile(format!("bad n_best: {value}")))?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Replacement distribution: unigram frequencies raised to `1 / temperature`.
#[derive(Debug, Clone)]
pub struct ConfusionTable {
    tokens: Vec<TokenId>,
    dist: WeightedIndex<f64>,
}

impl ConfusionTable {
    pub fn from_counts(counts: &[(TokenId, usize)], temperature: f64) -> Result<Self> {
        let entries: Vec<_> = counts
            .iter()
            .filter(|(t, c)| *c > 0 && !is_special(*t))
            .copied()
            .collect();
        if entries.len() < 2 {
            return Err(Error::InvalidProfile(
                "confusion table needs at least two distinct tokens".into(),
            ));
        }
        let weights: Vec<f64> = entries
            .iter()
            .map(|&(_, c)| (c as f64).powf(1.0 / temperature))
            .collect();
        let dist = WeightedIndex::new(&weights).map_err(|e| Error::InvalidProfile(e.to_string()))?;
        Ok(ConfusionTable {
            tokens: entries.into_iter().map(|(t, _)| t).collect(),
            dist,
        })
    }

    /// Counts regular tokens over a corpus, ordered by id.
    pub fn from_corpus<S: AsRef<[TokenId]>>(corpus: &[S], temperature: f64) -> Result<Self> {
        let mut counts: HashMap<TokenId, usize> = HashMap::new();
        for seq in corpus {
            for &t in seq.as_ref() {
                *counts.entry(t).or_default() += 1;
            }
        }
        let mut counts: Vec<_> = counts.into_iter().collect();
        counts.sort_unstable();
        Self::from_counts(&counts, temperature)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TokenId {
        self.tokens[self.dist.sample(rng)]
    }

    /// Samples a token different from `original`.
    pub fn sample_other<R: Rng + ?Sized>(&self, rng: &mut R, original: TokenId) -> TokenId {
        loop {
            let t = self.sample(rng);
            if t != original {
                return t;
            }
        }
    }
}

/// Realized corruption events of one draw.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NoiseCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

impl NoiseCounts {
    pub fn total(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

/// Corrupts one transcription. Each token is substituted with probability
/// `sub_rate` or deleted with `del_rate`; independently, a token is inserted
/// after it with `ins_rate`. Confidence is one minus the number of events
/// per truth token, clipped to [0, 1].
pub fn corrupt(
    truth: &[TokenId],
    profile: &NoiseProfile,
    table: &ConfusionTable,
    draw_seed: u64,
) -> Result<(TokenSeq, f64)> {
    let (out, counts) = corrupt_counted(truth, profile, table, draw_seed)?;
    let confidence = (1.0 - counts.total() as f64 / truth.len() as f64).clamp(0.0, 1.0);
    Ok((out, confidence))
}

pub fn corrupt_counted(
    truth: &[TokenId],
    profile: &NoiseProfile,
    table: &ConfusionTable,
    draw_seed: u64,
) -> Result<(TokenSeq, NoiseCounts)> {
    if truth.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(&t) = truth.iter().find(|&&t| is_special(t)) {
        return Err(Error::SpecialToken(t));
    }
    let mut rng = rng_from(draw_seed);
    let mut out = Vec::with_capacity(truth.len() + 2);
    let mut counts = NoiseCounts::default();
    for &t in truth {
        let u: f64 = rng.random();
        if u < profile.sub_rate {
            out.push(table.sample_other(&mut rng, t));
            counts.substitutions += 1;
        } else if u < profile.sub_rate + profile.del_rate {
            counts.deletions += 1;
        } else {
            out.push(t);
        }
        if rng.random::<f64>() < profile.ins_rate {
            out.push(table.sample(&mut rng));
            counts.insertions += 1;
        }
    }
    Ok((TokenSeq(out), counts))
}

/// Draws `n_best` independent hypotheses; the most confident becomes the
/// top hypothesis, the rest follow by descending score.
pub fn simulate_set(
    id: impl Into<String>,
    truth: &[TokenId],
    profile: &NoiseProfile,
    table: &ConfusionTable,
) -> Result<HypothesisSet> {
    profile.validate()?;
    let mut draws = (0..profile.n_best)
        .map(|k| {
            corrupt(truth, profile, table, crate::seed::derive_seed(profile.seed, k as u64))
                .map(|(text, score)| ScoredHypothesis { text, score })
        })
        .collect::<Result<Vec<_>>>()?;
    draws.sort_by(|a, b| b.score.total_cmp(&a.score));
    let top = draws.remove(0);
    Ok(HypothesisSet {
        id: id.into(),
        golden: Some(TokenSeq(truth.to_vec())),
        top: top.text,
        top_score: top.score,
        additional: draws,
    })
}
