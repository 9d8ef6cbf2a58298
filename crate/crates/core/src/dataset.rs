//! Dataset records on disk and corpus generation through the noisy channel.

use serde::{Deserialize, Serialize};

use crate::correction::{HypothesisSet, ScoredHypothesis};
use crate::error::{Error, Result};
use crate::noisesim::{corrupt, simulate_set, ConfusionTable, NoiseProfile};
use crate::seed::{derive_seed, rng_from, stage_seed};
use crate::vocab::{normalize, TokenSeq, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypRecord {
    pub text: String,
    pub score: f64,
}

/// One utterance: golden text, ASR n-best with scores, and a human transcription.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub golden: String,
    pub hyps: Vec<HypRecord>,
    pub human: String,
}

impl DatasetRecord {
    fn sorted_hyps(&self, vocab: &Vocabulary) -> Result<Vec<ScoredHypothesis>> {
        if self.hyps.is_empty() {
            return Err(Error::NoHypotheses(self.id.clone()));
        }
        let mut hyps: Vec<_> = self
            .hyps
            .iter()
            .map(|h| ScoredHypothesis {
                text: vocab.tokenize(&h.text),
                score: h.score,
            })
            .collect();
        hyps.sort_by(|a, b| b.score.total_cmp(&a.score));
        Ok(hyps)
    }

    pub fn golden_ids(&self, vocab: &Vocabulary) -> TokenSeq {
        vocab.tokenize(&self.golden)
    }

    /// ASR 1-best as top, the next `max_hypotheses - 1` entries as additional.
    pub fn asr_set(&self, vocab: &Vocabulary, max_hypotheses: usize) -> Result<HypothesisSet> {
        let mut hyps = self.sorted_hyps(vocab)?;
        hyps.truncate(max_hypotheses.max(1));
        let top = hyps.remove(0);
        Ok(HypothesisSet {
            id: self.id.clone(),
            golden: Some(self.golden_ids(vocab)),
            top: top.text,
            top_score: top.score,
            additional: hyps,
        })
    }

    /// Human transcription as top; the ASR n-best supplies the additional
    /// hypotheses. The ASR 1-best confidence is kept as the set score.
    pub fn human_set(&self, vocab: &Vocabulary, max_hypotheses: usize) -> Result<HypothesisSet> {
        let mut hyps = self.sorted_hyps(vocab)?;
        let top_score = hyps[0].score;
        hyps.truncate(max_hypotheses.saturating_sub(1));
        Ok(HypothesisSet {
            id: self.id.clone(),
            golden: Some(self.golden_ids(vocab)),
            top: vocab.tokenize(&self.human),
            top_score,
            additional: hyps,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<DatasetRecord>,
    pub dev: Vec<DatasetRecord>,
    pub test: Vec<DatasetRecord>,
}

fn check_fractions(f: [f64; 3]) -> Result<()> {
    if f.iter().any(|x| !(0.0..=1.0).contains(x)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidSplit(format!("{f:?} must be in [0, 1] and sum to 1")));
    }
    Ok(())
}

/// Corrupts every nonempty source line through the ASR and human channels
/// and splits the records into disjoint train/dev/test sets.
///
/// Per-utterance draws are seeded from `seed` and the line index; the
/// profiles' own `seed` fields are not used.
pub fn generate_corpus<S: AsRef<str>>(
    source: &[S],
    vocab: &Vocabulary,
    asr: &NoiseProfile,
    human: &NoiseProfile,
    fractions: [f64; 3],
    seed: u64,
) -> Result<Splits> {
    check_fractions(fractions)?;
    asr.validate()?;
    human.validate()?;
    let lines: Vec<String> = source
        .iter()
        .map(|l| normalize(l.as_ref()))
        .filter(|l| !l.is_empty())
        .collect();
    if lines.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let tokenized: Vec<TokenSeq> = lines.iter().map(|l| vocab.tokenize(l)).collect();
    let asr_table = ConfusionTable::from_corpus(&tokenized, asr.confusion_temperature)?;
    let human_table = ConfusionTable::from_corpus(&tokenized, human.confusion_temperature)?;
    let asr_base = stage_seed(seed, "asr");
    let human_base = stage_seed(seed, "human");

    let mut records = Vec::with_capacity(lines.len());
    for (idx, (line, truth)) in lines.iter().zip(&tokenized).enumerate() {
        let id = format!("utt{idx:06}");
        let profile = asr.with_seed(derive_seed(asr_base, idx as u64));
        let set = simulate_set(id.clone(), truth, &profile, &asr_table)?;
        let (human_ids, _) = corrupt(truth, human, &human_table, derive_seed(human_base, idx as u64))?;
        let hyps = set
            .scored_hypotheses()
            .map(|(text, score)| Ok(HypRecord { text: vocab.detokenize(text)?, score }))
            .collect::<Result<Vec<_>>>()?;
        records.push(DatasetRecord {
            id,
            golden: line.clone(),
            hyps,
            human: vocab.detokenize(&human_ids)?,
        });
    }

    let mut order: Vec<usize> = (0..records.len()).collect();
    {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng_from(stage_seed(seed, "split")));
    }
    let n = records.len();
    let n_train = (n as f64 * fractions[0]).round() as usize;
    let n_dev = ((n as f64 * fractions[1]).round() as usize).min(n - n_train);
    let mut slots: Vec<Option<DatasetRecord>> = records.into_iter().map(Some).collect();
    let mut take = |range: &[usize]| -> Vec<DatasetRecord> {
        let mut idx = range.to_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| slots[i].take().expect("each index once")).collect()
    };
    Ok(Splits {
        train: take(&order[..n_train]),
        dev: take(&order[n_train..n_train + n_dev]),
        test: take(&order[n_train + n_dev..]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lines(n: usize) -> Vec<String> {
        let words = ["set", "a", "timer", "for", "five", "minutes", "play", "music", "stop", "the"];
        (0..n)
            .map(|i| {
                (0..4 + i % 5)
                    .map(|k| words[(i * 7 + k * 3) % words.len()])
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect()
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let src = lines(1000);
        let vocab = Vocabulary::build(&src, 1).unwrap();
        let s = generate_corpus(
            &src,
            &vocab,
            &NoiseProfile::asr_default(),
            &NoiseProfile::human_default(),
            [0.8, 0.1, 0.1],
            3,
        )
        .unwrap();
        assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (800, 100, 100));
        let mut ids: Vec<_> = s.train.iter().chain(&s.dev).chain(&s.test).map(|r| r.id.clone()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 1000);
        assert!(s.test.iter().all(|r| r.hyps.len() == 5));
    }

    #[test]
    fn bad_fractions() {
        let src = lines(10);
        let vocab = Vocabulary::build(&src, 1).unwrap();
        let p = NoiseProfile::asr_default();
        assert!(matches!(
            generate_corpus(&src, &vocab, &p, &p, [0.5, 0.1, 0.1], 0),
            Err(Error::InvalidSplit(_))
        ));
        let empty: Vec<String> = vec!["  ".into()];
        assert!(generate_corpus(&empty, &vocab, &p, &p, [1.0, 0.0, 0.0], 0).is_err());
    }

    #[test]
    fn record_to_sets() {
        let vocab = Vocabulary::build(["a b c d"], 1).unwrap();
        let rec = DatasetRecord {
            id: "u".into(),
            golden: "a b c".into(),
            hyps: vec![
                HypRecord { text: "a c".into(), score: 0.5 },
                HypRecord { text: "a b d".into(), score: 0.9 },
                HypRecord { text: "b c".into(), score: 0.7 },
            ],
            human: "a b".into(),
        };
        let asr = rec.asr_set(&vocab, 5).unwrap();
        assert_eq!(asr.top, vocab.tokenize("a b d"));
        assert_eq!(asr.top_score, 0.9);
        assert_eq!(asr.additional.len(), 2);
        assert_eq!(asr.additional[0].score, 0.7);
        let human = rec.human_set(&vocab, 5).unwrap();
        assert_eq!(human.top, vocab.tokenize("a b"));
        assert_eq!(human.additional.len(), 3);
        assert_eq!(human.top_score, 0.9);
        assert_eq!(rec.asr_set(&vocab, 2).unwrap().additional.len(), 1);
    }
}
