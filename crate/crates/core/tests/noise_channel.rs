use wlmsc::alignment::{corpus_wer, oracle_wer};
use wlmsc::corpus::generate_sentences;
use wlmsc::dataset::generate_corpus;
use wlmsc::io::to_jsonl;
use wlmsc::noisesim::{simulate_set, ConfusionTable, NoiseProfile};
use wlmsc::seed::derive_seed;
use wlmsc::{TokenSeq, Vocabulary};

fn setup(n: usize) -> (Vec<String>, Vocabulary, Vec<TokenSeq>) {
    let sents = generate_sentences(n, 4);
    let vocab = Vocabulary::build(&sents, 1).unwrap();
    let toks = sents.iter().map(|s| vocab.tokenize(s)).collect();
    (sents, vocab, toks)
}

fn top_wer(truths: &[TokenSeq], profile: &NoiseProfile, seed: u64) -> f64 {
    let table = ConfusionTable::from_corpus(truths, profile.confusion_temperature).unwrap();
    let tops: Vec<TokenSeq> = truths
        .iter()
        .enumerate()
        .map(|(i, t)| {
            simulate_set("", t, &profile.with_seed(derive_seed(seed, i as u64)), &table)
                .unwrap()
                .top
        })
        .collect();
    corpus_wer(&tops, truths).unwrap().wer
}

#[test]
fn wer_grows_with_every_rate() {
    let (_, _, truths) = setup(600);
    let base = NoiseProfile::asr_default();
    let grid = [0.0, 0.05, 0.1, 0.2];
    for which in 0..3 {
        let mut last = -1.0;
        for &r in &grid {
            let mut p = base;
            match which {
                0 => p.sub_rate = r,
                1 => p.del_rate = r,
                _ => p.ins_rate = r,
            }
            let mean = (0..3).map(|s| top_wer(&truths, &p, s)).sum::<f64>() / 3.0;
            assert!(mean >= last, "rate {which} at {r}: {mean} < {last}");
            last = mean;
        }
    }
}

#[test]
fn oracle_never_worse_than_top() {
    let (_, _, truths) = setup(300);
    let table = ConfusionTable::from_corpus(&truths, 2.0).unwrap();
    for seed in 0..3 {
        let sets: Vec<_> = truths
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let p = NoiseProfile::asr_default().with_seed(derive_seed(seed, i as u64));
                simulate_set(i.to_string(), t, &p, &table).unwrap()
            })
            .collect();
        let tops: Vec<TokenSeq> = sets.iter().map(|s| s.top.clone()).collect();
        let top = corpus_wer(&tops, &truths).unwrap();
        let oracle = oracle_wer(&sets).unwrap();
        assert!(oracle.total_edit_distance <= top.total_edit_distance);
    }
}

#[test]
fn corpus_generation_is_deterministic_and_human_beats_asr() {
    let (sents, vocab, _) = setup(3000);
    let asr = NoiseProfile::asr_default();
    let human = NoiseProfile::human_default();
    let a = generate_corpus(&sents, &vocab, &asr, &human, [0.8, 0.1, 0.1], 9).unwrap();
    let b = generate_corpus(&sents, &vocab, &asr, &human, [0.8, 0.1, 0.1], 9).unwrap();
    for (x, y) in [(&a.train, &b.train), (&a.dev, &b.dev), (&a.test, &b.test)] {
        assert_eq!(to_jsonl(x).unwrap(), to_jsonl(y).unwrap());
    }
    let golden: Vec<TokenSeq> = a.test.iter().map(|r| vocab.tokenize(&r.golden)).collect();
    let asr_top: Vec<TokenSeq> = a.test.iter().map(|r| r.asr_set(&vocab, 5).unwrap().top).collect();
    let human_top: Vec<TokenSeq> = a.test.iter().map(|r| vocab.tokenize(&r.human)).collect();
    let asr_wer = corpus_wer(&asr_top, &golden).unwrap().wer;
    let human_wer = corpus_wer(&human_top, &golden).unwrap().wer;
    assert!(human_wer < asr_wer, "{human_wer} vs {asr_wer}");
    assert!((10.0..20.0).contains(&asr_wer), "{asr_wer}");
    assert!((8.0..16.0).contains(&human_wer), "{human_wer}");
}
