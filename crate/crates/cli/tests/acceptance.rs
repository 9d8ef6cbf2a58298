//! Acceptance suite: one PASS/FAIL line per criterion.

use std::collections::{HashMap, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use wlmsc::alignment::{corpus_wer, derive_warp_labels, edit_distance, insert_dum_tokens, levenshtein};
use wlmsc::corpus::generate_sentences;
use wlmsc::correction::reconstruct_from_labels;
use wlmsc::model::{
    backward, evaluate, forward, loss, Batch, Example, Logits, ModelConfig, ModelParams, TrainConfig, Trainer,
};
use wlmsc::noisesim::{simulate_set, ConfusionTable, NoiseProfile};
use wlmsc::seed::derive_seed;
use wlmsc::vocab::TokenId;
use wlmsc::warping::{warp_corpus, WarpPolicy};
use wlmsc::{TokenSeq, Vocabulary, WarpOp};
use wlmsc_cli::{cmd_build_vocab, cmd_correct, cmd_evaluate, cmd_finetune, cmd_pretrain, cmd_simulate, EvalReport, RunConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn render(vocab: &Vocabulary, ids: &[TokenId]) -> String {
    ids.iter().map(|&t| vocab.token(t).unwrap()).collect::<Vec<_>>().join(" ")
}

// 1
fn round_trip() -> Outcome {
    let start = Instant::now();
    let sents = generate_sentences(10_000, 101);
    let vocab = Vocabulary::build(&sents, 1).unwrap();
    let truths: Vec<TokenSeq> = sents.iter().map(|s| vocab.tokenize(s)).collect();
    let thirty = NoiseProfile {
        sub_rate: 0.2,
        del_rate: 0.05,
        ins_rate: 0.05,
        ..NoiseProfile::asr_default()
    };
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, profile) in [("30% channel", thirty), ("default", NoiseProfile::asr_default())] {
        let table = ConfusionTable::from_corpus(&truths, profile.confusion_temperature).unwrap();
        let mut lossy = 0;
        let mut wrong = 0;
        for (i, t) in truths.iter().enumerate() {
            let set = simulate_set("", t, &profile.with_seed(derive_seed(7, i as u64)), &table).unwrap();
            let padded = insert_dum_tokens(&set.top, &set.additional_texts());
            let labels = derive_warp_labels(&padded, t).unwrap();
            if labels.lossy {
                lossy += 1;
            } else if reconstruct_from_labels(&padded, &labels.target_ids, &labels.target_ops) != t.ids() {
                wrong += 1;
            }
        }
        let frac = lossy as f64 / truths.len() as f64;
        pass &= wrong == 0 && frac < 0.05;
        detail.push(format!("{name}: {wrong} mismatches, lossy {:.2}%", 100.0 * frac));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 10.0;
    outcome(pass, format!("10000 pairs per profile; {}; {secs:.1}s < 10s", detail.join("; ")))
}

/// Minimum number of single-token edits, by breadth-first search over all
/// sequences of length <= 8 (longer detours cost more than 4 edits).
fn bfs_distances(src: &[TokenId], alphabet: &[TokenId]) -> HashMap<Vec<TokenId>, usize> {
    let mut dist = HashMap::new();
    let mut queue = VecDeque::new();
    dist.insert(src.to_vec(), 0);
    queue.push_back(src.to_vec());
    while let Some(s) = queue.pop_front() {
        let d = dist[&s];
        let mut next = Vec::new();
        for i in 0..s.len() {
            let mut del = s.clone();
            del.remove(i);
            next.push(del);
            for &a in alphabet {
                if a != s[i] {
                    let mut sub = s.clone();
                    sub[i] = a;
                    next.push(sub);
                }
            }
        }
        if s.len() < 8 {
            for i in 0..=s.len() {
                for &a in alphabet {
                    let mut ins = s.clone();
                    ins.insert(i, a);
                    next.push(ins);
                }
            }
        }
        for n in next {
            if !dist.contains_key(&n) {
                dist.insert(n.clone(), d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

// 2
fn brute_force_levenshtein() -> Outcome {
    let start = Instant::now();
    let alphabet: [TokenId; 3] = [5, 6, 7];
    let mut seqs: Vec<Vec<TokenId>> = vec![vec![]];
    let mut frontier = seqs.clone();
    for _ in 0..4 {
        frontier = frontier
            .iter()
            .flat_map(|s| alphabet.iter().map(move |&a| [s.clone(), vec![a]].concat()))
            .collect();
        seqs.extend(frontier.clone());
    }
    let mut pairs = 0;
    let mut mismatches = 0;
    for a in &seqs {
        let dist = bfs_distances(a, &alphabet);
        for b in &seqs {
            pairs += 1;
            let truth = dist[b];
            if levenshtein(a, b).total_cost != truth || edit_distance(a, b) != truth {
                mismatches += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < 30.0,
        format!("{pairs} pairs, {mismatches} mismatches; {secs:.1}s < 30s"),
    )
}

// 3
fn wer_definition() -> Outcome {
    // (hypothesis, golden, hand-counted distance)
    let cases = [
        ("set a timer", "set a timer", 0),
        ("delete alarm", "delete my alarm", 1),
        ("play the jazz song", "play jazz music", 2),
        ("please stop it now", "stop", 3),
        ("call tom on", "call mom on speaker", 2),
    ];
    let words: Vec<&str> = cases.iter().flat_map(|(h, g, _)| h.split(' ').chain(g.split(' '))).collect();
    let vocab = Vocabulary::build(&words, 1).unwrap();
    let hyps: Vec<TokenSeq> = cases.iter().map(|c| vocab.tokenize(c.0)).collect();
    let golds: Vec<TokenSeq> = cases.iter().map(|c| vocab.tokenize(c.1)).collect();
    let report = corpus_wer(&hyps, &golds).unwrap();
    let distances: Vec<usize> = report.per_utterance.iter().map(|u| u.distance).collect();
    let expected: Vec<usize> = cases.iter().map(|c| c.2).collect();
    let over = report.per_utterance[3].ratio();
    let pass = distances == expected
        && report.total_edit_distance == 8
        && report.total_golden_tokens == 14
        && report.wer == 100.0 * 8.0 / 14.0
        && over == 3.0;
    outcome(
        pass,
        format!(
            "distances {distances:?}, {}/{} = {:.4}%, one utterance at {:.0}%",
            report.total_edit_distance,
            report.total_golden_tokens,
            report.wer,
            100.0 * over
        ),
    )
}

// 4
fn padding_example() -> Outcome {
    let vocab = Vocabulary::build(["delete timer thirty second my please"], 1).unwrap();
    let top = vocab.tokenize("delete timer");
    let h1 = vocab.tokenize("delete thirty second timer");
    let h2 = vocab.tokenize("delete my timer please");
    let after1 = render(&vocab, &insert_dum_tokens(&top, &[&h1]));
    let after2 = render(&vocab, &insert_dum_tokens(&top, &[&h1, &h2]));
    outcome(
        after1 == "delete [DUM] [DUM] timer" && after2 == "delete [DUM] [DUM] timer [DUM]",
        format!("{after1:?} then {after2:?}"),
    )
}

fn tiny_batch() -> Batch {
    let mk = |ids: &[TokenId], slots: &[u32], pos: &[u32], tgt: &[TokenId], ops: &[usize]| Example {
        input_ids: ids.to_vec(),
        position_ids: pos.to_vec(),
        slot_ids: slots.to_vec(),
        target_ids: tgt.to_vec(),
        target_ops: ops.iter().map(|&o| WarpOp::from_label(o).unwrap()).collect(),
        loss_mask: vec![true; ids.len()],
    };
    Batch::from_examples(&[
        mk(
            &[5, 4, 7, 8, 5, 9, 7, 8],
            &[0, 0, 0, 0, 1, 1, 1, 1],
            &[0, 1, 2, 3, 0, 1, 2, 3],
            &[5, 6, 7, 8, 5, 9, 7, 8],
            &[4, 0, 4, 1, 4, 2, 3, 4],
        ),
        mk(&[10, 2, 11, 3, 6], &[0; 5], &[0, 1, 2, 3, 4], &[10, 9, 11, 3, 6], &[4, 0, 4, 3, 4]),
    ])
}

// 5
fn gradient_check() -> Outcome {
    let start = Instant::now();
    let cfg = ModelConfig {
        vocab_size: 12,
        hidden_dim: 16,
        num_layers: 2,
        num_heads: 2,
        feedforward_dim: 32,
        max_positions: 8,
        max_hypotheses: 3,
        dropout_rate: 0.0,
        use_slot_embedding: true,
        init_seed: 2024,
    };
    let params = ModelParams::<f32>::init(&cfg).unwrap().cast::<f64>();
    let batch = tiny_batch();
    let (_, grads) = backward(&params, &batch).unwrap();
    let f = |p: &ModelParams<f64>| loss(&forward(p, &batch).unwrap(), &batch).unwrap();
    let eps = 1e-4;
    let mut probe = params.clone();
    let mut worst = (0.0f64, String::new());
    for (t, spec) in params.specs().iter().enumerate() {
        let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
        for i in 0..params.tensors()[t].len() {
            let x = params.tensors()[t][i];
            probe.tensors_mut()[t][i] = x + eps;
            let up = f(&probe);
            probe.tensors_mut()[t][i] = x - eps;
            let down = f(&probe);
            probe.tensors_mut()[t][i] = x;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grads.tensors()[t][i];
            diff2 += (numeric - analytic).powi(2);
            a2 += analytic * analytic;
            n2 += numeric * numeric;
        }
        let scale = f64::max(a2.sqrt(), n2.sqrt());
        let rel = if scale == 0.0 { 0.0 } else { diff2.sqrt() / scale };
        if rel >= worst.0 {
            worst = (rel, spec.name.clone());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst.0 < 1e-3 && secs < 60.0,
        format!(
            "max relative error {:.2e} ({}) over {} tensors < 1e-3; {secs:.1}s < 60s",
            worst.0,
            worst.1,
            params.specs().len()
        ),
    )
}

// 6
fn loss_analytics() -> Outcome {
    let sents = generate_sentences(50, 5);
    let vocab = Vocabulary::build(&sents, 1).unwrap();
    let toks: Vec<TokenSeq> = sents.iter().map(|s| vocab.tokenize(s)).collect();
    let warped = warp_corpus(&toks, &WarpPolicy::default(), &vocab).unwrap();
    let examples: Vec<Example> = warped.iter().map(Example::from_warped).collect();
    let batch = Batch::from_examples(&examples);
    let v = vocab.len();
    let n = batch.input_ids.len();

    // A model with zeroed heads emits exactly uniform logits.
    let mut params = ModelParams::<f64>::init(&ModelConfig::desk(v)).unwrap();
    {
        let (_, _, tw, tb, ow, ob) = params.tail_mut();
        for s in [tw, tb, ow, ob] {
            s.fill(0.0);
        }
    }
    let uniform = loss(&forward(&params, &batch).unwrap(), &batch).unwrap();
    let expected = (v as f64).ln() + 5f64.ln();

    let mut sharp = Logits {
        batch_size: batch.batch_size,
        seq_len: batch.seq_len,
        vocab_size: v,
        token: vec![0.0f64; n * v],
        op: vec![0.0f64; n * WarpOp::COUNT],
    };
    for k in 0..n {
        sharp.token[k * v + batch.target_ids[k] as usize] = 30.0;
        sharp.op[k * WarpOp::COUNT + batch.target_ops[k].label()] = 30.0;
    }
    let perfect = loss(&sharp, &batch).unwrap();
    outcome(
        (uniform - expected).abs() < 1e-6 && perfect < 1e-9,
        format!(
            "uniform {uniform:.9} vs ln({v}) + ln(5) = {expected:.9} (|diff| {:.1e} < 1e-6); perfect {perfect:.1e} < 1e-9",
            (uniform - expected).abs()
        ),
    )
}

// 7
fn overfit() -> Outcome {
    let start = Instant::now();
    let sents = generate_sentences(64, 77);
    let vocab = Vocabulary::build(&sents, 1).unwrap();
    let toks: Vec<TokenSeq> = sents.iter().map(|s| vocab.tokenize(s)).collect();
    let warped = warp_corpus(&toks, &WarpPolicy::default().with_seed(3), &vocab).unwrap();
    let data: Vec<Example> = warped.iter().map(Example::from_warped).collect();
    let params = ModelParams::init(&ModelConfig::desk(vocab.len())).unwrap();
    let cfg = TrainConfig {
        steps: 2000,
        batch_size: 32,
        log_every: 0,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(params, &data, cfg).unwrap();
    let mut reached = None;
    let mut stats = evaluate(trainer.params(), &data, 64).unwrap();
    for target in (50..=2000).step_by(50) {
        trainer.run_until(target).unwrap();
        stats = evaluate(trainer.params(), &data, 64).unwrap();
        if stats.token_acc() >= 0.99 && stats.op_acc() >= 0.99 {
            reached = Some(target);
            break;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        reached.is_some() && secs < 300.0,
        format!(
            "token acc {:.3}, op acc {:.3} over {} supervised positions at step {}; {secs:.1}s < 300s",
            stats.token_acc(),
            stats.op_acc(),
            stats.supervised,
            reached.map_or("none".into(), |s| s.to_string())
        ),
    )
}

struct EndToEnd {
    full: EvalReport,
    alone: EvalReport,
    human: EvalReport,
    secs: f64,
}

fn end_to_end(dir: &Path) -> EndToEnd {
    let start = Instant::now();
    let corpus = dir.join("corpus.txt");
    std::fs::write(&corpus, generate_sentences(11_000, 42).join("\n")).unwrap();
    let mut cfg = RunConfig::default();
    cfg.split = [10.0 / 11.0, 0.0, 1.0 / 11.0];
    cfg.pretrain.steps = 2000;
    cfg.finetune.steps = 800;
    let seed = 7;
    let vocab = dir.join("vocab.txt");
    let data = dir.join("data");
    cmd_build_vocab(&corpus, &vocab, &cfg).unwrap();
    let sizes = cmd_simulate(&corpus, &vocab, &data, &cfg, seed).unwrap();
    assert_eq!(sizes, [10_000, 0, 1_000]);
    let train = data.join("train.jsonl");
    let test = data.join("test.jsonl");
    cmd_pretrain(&train, &vocab, &dir.join("pre.ckpt"), None, &cfg, seed).unwrap();
    cmd_finetune(&train, &vocab, &dir.join("pre.ckpt"), &dir.join("ft.ckpt"), &cfg, seed).unwrap();
    let model = dir.join("ft.ckpt");

    let run = |name: &str, cfg: &RunConfig| {
        let corrected = dir.join(format!("{name}.jsonl"));
        cmd_correct(&test, &vocab, &model, &corrected, cfg).unwrap();
        cmd_evaluate(&corrected, &test, &vocab, &dir.join(format!("{name}.report.json")), cfg).unwrap();
        // Criterion 10 reads the report back from disk.
        serde_json::from_slice::<EvalReport>(&std::fs::read(dir.join(format!("{name}.report.json"))).unwrap()).unwrap()
    };
    let full = run("full", &cfg);
    let secs = start.elapsed().as_secs_f64();
    let mut alone_cfg = cfg.clone();
    alone_cfg.correct.use_additional = false;
    let alone = run("alone", &alone_cfg);
    let mut human_cfg = cfg.clone();
    human_cfg.source = wlmsc_cli::Source::Human;
    let human = run("human", &human_cfg);
    EndToEnd {
        full,
        alone,
        human,
        secs,
    }
}

// 8
fn directional(e: &EndToEnd) -> Outcome {
    let r = &e.full;
    let rel = r.rel_diff.unwrap_or(0.0);
    outcome(
        rel >= 10.0 && r.oracle_wer <= r.original_wer && e.secs < 1800.0,
        format!(
            "WER original {:.2} -> corrected {:.2} (rel. diff. {rel:.1}% >= 10%), oracle {:.2} <= original; {:.0}s < 1800s",
            r.original_wer, r.corrected_wer, r.oracle_wer, e.secs
        ),
    )
}

// 9
fn ablation(e: &EndToEnd) -> Outcome {
    outcome(
        e.full.corrected_wer <= e.alone.corrected_wer,
        format!(
            "with additional hypotheses {:.2} <= top hypothesis alone {:.2} (original {:.2})",
            e.full.corrected_wer, e.alone.corrected_wer, e.full.original_wer
        ),
    )
}

// 10
fn stratification(e: &EndToEnd) -> Outcome {
    let r = &e.full;
    let mut ok = true;
    for bins in [&r.confidence_bins, &r.wer_bins] {
        ok &= bins.iter().map(|b| b.utterances).sum::<usize>() == r.utterances;
        ok &= bins.iter().map(|b| b.golden_tokens).sum::<usize>() == r.golden_tokens;
        ok &= bins.iter().map(|b| b.original_distance).sum::<usize>() == r.original_distance;
        ok &= bins.iter().map(|b| b.corrected_distance).sum::<usize>() == r.corrected_distance;
    }
    let rho = r.spearman_confidence_wer.unwrap_or(0.0);
    let sizes = |bins: &[wlmsc_cli::report::BinRow]| bins.iter().map(|b| b.utterances).collect::<Vec<_>>();
    outcome(
        ok && rho < 0.0,
        format!(
            "bins partition totals: {ok}; confidence bin sizes {:?}, WER bin sizes {:?}; spearman {rho:.3} < 0 over {}",
            sizes(&r.confidence_bins),
            sizes(&r.wer_bins),
            r.utterances
        ),
    )
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        outcome(false, format!("panicked: {msg}"))
    })
}

#[test]
fn acceptance() {
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "round-trip oracle", guarded(round_trip)),
        (2, "levenshtein brute force", guarded(brute_force_levenshtein)),
        (3, "WER definition", guarded(wer_definition)),
        (4, "[DUM] padding example", guarded(padding_example)),
        (5, "gradient check", guarded(gradient_check)),
        (6, "loss analytics", guarded(loss_analytics)),
        (7, "overfit memorization", guarded(overfit)),
    ];
    let dir = tempfile::tempdir().unwrap();
    match catch_unwind(AssertUnwindSafe(|| end_to_end(dir.path()))) {
        Ok(e) => {
            results.push((8, "end-to-end directional", guarded(|| directional(&e))));
            results.push((9, "ablation ordering", guarded(|| ablation(&e))));
            results.push((10, "stratification integrity", guarded(|| stratification(&e))));
            println!(
                "info: human transcriptions WER {:.2} -> {:.2} (rel. diff. {:.1}%)",
                e.human.original_wer,
                e.human.corrected_wer,
                e.human.rel_diff.unwrap_or(0.0)
            );
            println!("{}", e.full.to_text());
        }
        Err(_) => {
            for (n, name) in [(8, "end-to-end directional"), (9, "ablation ordering"), (10, "stratification integrity")] {
                results.push((n, name, outcome(false, "pipeline failed")));
            }
        }
    }
    println!();
    for (n, name, o) in &results {
        println!("[{}] {n:>2}. {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
