//! Pipeline stages behind the subcommands.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use wlmsc::alignment::{edit_distance, oracle_wer};
use wlmsc::correction::{build_finetune_example, correct, HypothesisSet};
use wlmsc::dataset::{generate_corpus, DatasetRecord};
use wlmsc::io::{read_jsonl, read_lines, write_atomic, write_jsonl};
use wlmsc::model::checkpoint::{self, write_curve};
use wlmsc::model::{evaluate, Example, ModelParams, TrainConfig, Trainer};
use wlmsc::seed::{derive_seed, stage_seed};
use wlmsc::warping::warp_corpus;
use wlmsc::{TokenSeq, Vocabulary, WarpOp};

use crate::config::{RunConfig, Source};
use crate::report::{build_report, EvalReport, UtteranceScore};

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("no such file: {}", path.display());
    }
    Ok(())
}

fn load_vocab(path: &Path) -> Result<Vocabulary> {
    require_file(path)?;
    Vocabulary::load(path).with_context(|| format!("loading vocabulary {}", path.display()))
}

fn load_model(path: &Path) -> Result<ModelParams<f32>> {
    require_file(path)?;
    checkpoint::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>> {
    require_file(path)?;
    read_jsonl(path).with_context(|| format!("reading {}", path.display()))
}

/// Clean sentences: plain text lines, or the golden side of a `.jsonl` dataset.
fn load_clean_text(path: &Path) -> Result<Vec<String>> {
    require_file(path)?;
    if path.extension().is_some_and(|e| e == "jsonl") {
        Ok(load_dataset(path)?.into_iter().map(|r| r.golden).collect())
    } else {
        Ok(read_lines(path)?)
    }
}

pub fn cmd_build_vocab(input: &Path, output: &Path, cfg: &RunConfig) -> Result<Vocabulary> {
    let lines = load_clean_text(input)?;
    let vocab = Vocabulary::build(&lines, cfg.min_count)?;
    vocab.save(output)?;
    info!("vocabulary of {} tokens written to {}", vocab.len(), output.display());
    Ok(vocab)
}

/// Writes `train.jsonl`, `dev.jsonl` and `test.jsonl` under `output`.
pub fn cmd_simulate(input: &Path, vocab: &Path, output: &Path, cfg: &RunConfig, seed: u64) -> Result<[usize; 3]> {
    let lines = load_clean_text(input)?;
    let vocab = load_vocab(vocab)?;
    let splits = generate_corpus(&lines, &vocab, &cfg.asr, &cfg.human, cfg.split, stage_seed(seed, "simulate"))?;
    fs::create_dir_all(output)?;
    for (name, recs) in [("train", &splits.train), ("dev", &splits.dev), ("test", &splits.test)] {
        write_jsonl(&output.join(format!("{name}.jsonl")), recs)?;
    }
    let sizes = [splits.train.len(), splits.dev.len(), splits.test.len()];
    info!("simulated {sizes:?} train/dev/test records into {}", output.display());
    Ok(sizes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub examples: usize,
    pub skipped: usize,
    pub steps: usize,
    pub final_loss: Option<f64>,
    pub token_acc: f64,
    pub op_acc: f64,
}

fn curve_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".curve.csv");
    PathBuf::from(s)
}

fn run_training(
    params: ModelParams<f32>,
    data: &[Example],
    train: &TrainConfig,
    output: &Path,
    skipped: usize,
) -> Result<TrainSummary> {
    if data.is_empty() {
        bail!("no usable training examples");
    }
    let mut trainer = Trainer::new(params, data, train.clone())?.with_checkpoints(output.to_path_buf());
    trainer.run()?;
    trainer.save(output)?;
    let mut csv = Vec::new();
    write_curve(&mut csv, trainer.curve())?;
    write_atomic(&curve_path(output), &csv)?;
    // Training-set fit on a bounded sample.
    let probe = &data[..data.len().min(512)];
    let stats = evaluate(trainer.params(), probe, 64)?;
    Ok(TrainSummary {
        examples: data.len(),
        skipped,
        steps: trainer.step_count(),
        final_loss: trainer.curve().last().map(|p| p.loss),
        token_acc: stats.token_acc(),
        op_acc: stats.op_acc(),
    })
}

/// Warped-LM pretraining on clean text. `init` continues from an existing
/// model instead of a fresh initialization.
pub fn cmd_pretrain(
    input: &Path,
    vocab: &Path,
    output: &Path,
    init: Option<&Path>,
    cfg: &RunConfig,
    seed: u64,
) -> Result<TrainSummary> {
    let lines = load_clean_text(input)?;
    let vocab = load_vocab(vocab)?;
    let params = match init {
        Some(p) => load_model(p)?,
        None => ModelParams::init(&cfg.model_config(vocab.len(), stage_seed(seed, "init"))?)?,
    };
    if params.config.vocab_size != vocab.len() {
        bail!("model vocabulary size {} != {}", params.config.vocab_size, vocab.len());
    }
    let sentences: Vec<TokenSeq> = lines
        .iter()
        .map(|l| vocab.tokenize(l))
        .filter(|s| !s.is_empty())
        .collect();
    let warp_base = stage_seed(seed, "warp");
    let max_len = params.config.max_positions;
    let mut data = Vec::new();
    let mut skipped = 0;
    for epoch in 0..cfg.warp_epochs {
        let policy = cfg.warp.with_seed(derive_seed(warp_base, epoch as u64));
        for sample in warp_corpus(&sentences, &policy, &vocab)? {
            if sample.len() > max_len {
                skipped += 1;
            } else {
                data.push(Example::from_warped(&sample));
            }
        }
    }
    if skipped > 0 {
        warn!("skipped {skipped} warped sentences longer than {max_len}");
    }
    let train = TrainConfig {
        seed: stage_seed(seed, "pretrain"),
        ..cfg.pretrain.clone()
    };
    let summary = run_training(params, &data, &train, output, skipped)?;
    info!("pretraining done: {summary:?}");
    Ok(summary)
}

fn hypothesis_set(rec: &DatasetRecord, vocab: &Vocabulary, source: Source, max_hyp: usize) -> Result<HypothesisSet> {
    Ok(match source {
        Source::Asr => rec.asr_set(vocab, max_hyp)?,
        Source::Human => rec.human_set(vocab, max_hyp)?,
    })
}

/// Fine-tunes a pretrained model on hypothesis sets labeled against the
/// golden transcriptions.
pub fn cmd_finetune(input: &Path, vocab: &Path, model: &Path, output: &Path, cfg: &RunConfig, seed: u64) -> Result<TrainSummary> {
    let records = load_dataset(input)?;
    let vocab = load_vocab(vocab)?;
    let params = load_model(model)?;
    let max_hyp = params.config.max_hypotheses;
    let mut data = Vec::new();
    let mut skipped = 0;
    let mut lossy = 0;
    for rec in &records {
        for &source in &cfg.finetune_sources {
            let set = hypothesis_set(rec, &vocab, source, max_hyp)?;
            match build_finetune_example(&set, &params.config) {
                Ok((ex, l)) => {
                    lossy += l;
                    data.push(ex);
                }
                Err(wlmsc::Error::SequenceTooLong { .. }) => skipped += 1,
                Err(e) => return Err(e).with_context(|| format!("record {}", rec.id)),
            }
        }
    }
    info!("{} fine-tuning rows, {lossy} lossy segments, {skipped} skipped", data.len());
    let train = TrainConfig {
        seed: stage_seed(seed, "finetune"),
        ..cfg.finetune.clone()
    };
    run_training(params, &data, &train, output, skipped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditRecord {
    pub pos: usize,
    pub op: WarpOp,
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRecord {
    pub id: String,
    pub source: Source,
    pub corrected: String,
    pub edits: Vec<EditRecord>,
}

/// Corrects the chosen top transcription of every record.
pub fn correct_records(
    records: &[DatasetRecord],
    vocab: &Vocabulary,
    params: &ModelParams<f32>,
    cfg: &RunConfig,
) -> Result<Vec<CorrectionRecord>> {
    let max_hyp = params.config.max_hypotheses;
    let mut out = Vec::with_capacity(records.len());
    let mut fallback = 0;
    for rec in records {
        let set = hypothesis_set(rec, vocab, cfg.source, max_hyp)?;
        let r = match correct(params, &set, &cfg.correct) {
            Ok(c) => CorrectionRecord {
                id: rec.id.clone(),
                source: cfg.source,
                corrected: vocab.detokenize(&c.tokens)?,
                edits: c
                    .edits
                    .iter()
                    .map(|e| {
                        Ok(EditRecord {
                            pos: e.pos,
                            op: e.op,
                            token: vocab.detokenize(&[e.token])?,
                        })
                    })
                    .collect::<Result<_>>()?,
            },
            Err(wlmsc::Error::SequenceTooLong { .. }) => {
                fallback += 1;
                CorrectionRecord {
                    id: rec.id.clone(),
                    source: cfg.source,
                    corrected: vocab.detokenize(&set.top)?,
                    edits: Vec::new(),
                }
            }
            Err(e) => return Err(e).with_context(|| format!("record {}", rec.id)),
        };
        out.push(r);
    }
    if fallback > 0 {
        warn!("{fallback} records too long to correct were left unchanged");
    }
    Ok(out)
}

pub fn cmd_correct(input: &Path, vocab: &Path, model: &Path, output: &Path, cfg: &RunConfig) -> Result<Vec<CorrectionRecord>> {
    let records = load_dataset(input)?;
    let vocab = load_vocab(vocab)?;
    let params = load_model(model)?;
    if params.config.vocab_size != vocab.len() {
        bail!("model vocabulary size {} != {}", params.config.vocab_size, vocab.len());
    }
    let out = correct_records(&records, &vocab, &params, cfg)?;
    write_jsonl(output, &out)?;
    info!("{} corrections written to {}", out.len(), output.display());
    Ok(out)
}

/// Scores corrections against the dataset they came from.
pub fn evaluate_records(
    corrected: &[CorrectionRecord],
    records: &[DatasetRecord],
    vocab: &Vocabulary,
    cfg: &RunConfig,
) -> Result<EvalReport> {
    let by_id: HashMap<&str, &CorrectionRecord> = corrected.iter().map(|c| (c.id.as_str(), c)).collect();
    let known: HashSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
    let missing: Vec<&str> = records.iter().map(|r| r.id.as_str()).filter(|id| !by_id.contains_key(id)).collect();
    let extra: Vec<&str> = corrected.iter().map(|c| c.id.as_str()).filter(|id| !known.contains(id)).collect();
    if !missing.is_empty() || !extra.is_empty() {
        bail!("id mismatch: missing corrections for {missing:?}; unknown ids {extra:?}");
    }
    let source = corrected.first().map_or(cfg.source, |c| c.source);
    if corrected.iter().any(|c| c.source != source) {
        bail!("corrections mix sources");
    }
    let mut scores = Vec::with_capacity(records.len());
    let mut asr_sets = Vec::with_capacity(records.len());
    for rec in records {
        let golden = rec.golden_ids(vocab);
        if golden.is_empty() {
            bail!("record {} has an empty golden transcription", rec.id);
        }
        let asr = rec.asr_set(vocab, usize::MAX)?;
        let original = match source {
            Source::Asr => asr.top.clone(),
            Source::Human => vocab.tokenize(&rec.human),
        };
        let fixed = vocab.tokenize(&by_id[rec.id.as_str()].corrected);
        let asr_distance = edit_distance(&asr.top, &golden);
        scores.push(UtteranceScore {
            id: rec.id.clone(),
            golden_len: golden.len(),
            original_distance: edit_distance(&original, &golden),
            corrected_distance: edit_distance(&fixed, &golden),
            oracle_distance: 0,
            confidence: asr.top_score,
            asr_wer: asr_distance as f64 / golden.len() as f64,
        });
        asr_sets.push(asr);
    }
    let oracle = oracle_wer(&asr_sets)?;
    for (s, u) in scores.iter_mut().zip(&oracle.per_utterance) {
        s.oracle_distance = u.distance;
    }
    let name = match source {
        Source::Asr => "asr",
        Source::Human => "human",
    };
    Ok(build_report(name, &scores, &cfg.confidence_edges, &cfg.wer_edges))
}

/// Writes the JSON report to `output` and the text tables next to it.
pub fn cmd_evaluate(corrected: &Path, dataset: &Path, vocab: &Path, output: &Path, cfg: &RunConfig) -> Result<EvalReport> {
    require_file(corrected)?;
    let fixes: Vec<CorrectionRecord> = read_jsonl(corrected).with_context(|| format!("reading {}", corrected.display()))?;
    let records = load_dataset(dataset)?;
    let vocab = load_vocab(vocab)?;
    let report = evaluate_records(&fixes, &records, &vocab, cfg)?;
    write_atomic(output, serde_json::to_string_pretty(&report)?.as_bytes())?;
    write_atomic(&output.with_extension("txt"), report.to_text().as_bytes())?;
    Ok(report)
}
