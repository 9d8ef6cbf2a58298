//! WER evaluation with stratification by confidence and by ASR WER.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Per-utterance quantities needed for the report.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceScore {
    pub id: String,
    pub golden_len: usize,
    pub original_distance: usize,
    pub corrected_distance: usize,
    pub oracle_distance: usize,
    /// ASR 1-best confidence.
    pub confidence: f64,
    /// Per-utterance WER of the ASR 1-best.
    pub asr_wer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub label: String,
    pub utterances: usize,
    pub golden_tokens: usize,
    pub original_distance: usize,
    pub corrected_distance: usize,
    pub original_wer: Option<f64>,
    pub corrected_wer: Option<f64>,
    pub rel_diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub source: String,
    pub utterances: usize,
    pub golden_tokens: usize,
    pub original_distance: usize,
    pub corrected_distance: usize,
    pub oracle_distance: usize,
    pub original_wer: f64,
    pub corrected_wer: f64,
    pub oracle_wer: f64,
    pub rel_diff: Option<f64>,
    pub confidence_bins: Vec<BinRow>,
    pub wer_bins: Vec<BinRow>,
    /// Spearman correlation of confidence with per-utterance ASR WER.
    pub spearman_confidence_wer: Option<f64>,
}

fn pct(distance: usize, tokens: usize) -> Option<f64> {
    (tokens > 0).then(|| 100.0 * distance as f64 / tokens as f64)
}

/// Positive when the correction lowers WER.
pub fn rel_diff(original: usize, corrected: usize) -> Option<f64> {
    (original > 0).then(|| 100.0 * (original as f64 - corrected as f64) / original as f64)
}

/// Confidence bins: `[0, e0], (e0, e1], ..., (e_last, 1]`.
pub fn confidence_bin(x: f64, edges: &[f64]) -> usize {
    edges.iter().filter(|&&e| e < x).count()
}

/// WER bins: `{0}, (0, e0), [e0, e1), ..., [e_last, inf]`.
pub fn wer_bin(x: f64, edges: &[f64]) -> usize {
    if x <= 0.0 {
        0
    } else {
        1 + edges.iter().filter(|&&e| e <= x).count()
    }
}

fn confidence_labels(edges: &[f64]) -> Vec<String> {
    let mut bounds = vec![0.0];
    bounds.extend_from_slice(edges);
    bounds.push(1.0);
    bounds
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let open = if i == 0 { '[' } else { '(' };
            format!("{open}{:.2}, {:.2}]", w[0], w[1])
        })
        .collect()
}

fn wer_labels(edges: &[f64]) -> Vec<String> {
    let mut labels = vec!["0".to_string()];
    let mut lo = 0.0;
    for (i, &e) in edges.iter().enumerate() {
        let open = if i == 0 { '(' } else { '[' };
        labels.push(format!("{open}{lo:.2}, {e:.2})"));
        lo = e;
    }
    labels.push(format!("[{lo:.2}, inf]"));
    labels
}

fn bin_rows<F: Fn(&UtteranceScore) -> usize>(scores: &[UtteranceScore], labels: Vec<String>, bin: F) -> Vec<BinRow> {
    let mut rows: Vec<BinRow> = labels
        .into_iter()
        .map(|label| BinRow {
            label,
            utterances: 0,
            golden_tokens: 0,
            original_distance: 0,
            corrected_distance: 0,
            original_wer: None,
            corrected_wer: None,
            rel_diff: None,
        })
        .collect();
    for s in scores {
        let r = &mut rows[bin(s)];
        r.utterances += 1;
        r.golden_tokens += s.golden_len;
        r.original_distance += s.original_distance;
        r.corrected_distance += s.corrected_distance;
    }
    for r in &mut rows {
        r.original_wer = pct(r.original_distance, r.golden_tokens);
        r.corrected_wer = pct(r.corrected_distance, r.golden_tokens);
        r.rel_diff = rel_diff(r.original_distance, r.corrected_distance);
    }
    rows
}

/// Average ranks (1-based), ties sharing the mean rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; `None` when either side is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

pub fn build_report(
    source: &str,
    scores: &[UtteranceScore],
    confidence_edges: &[f64],
    wer_edges: &[f64],
) -> EvalReport {
    let tokens: usize = scores.iter().map(|s| s.golden_len).sum();
    let orig: usize = scores.iter().map(|s| s.original_distance).sum();
    let corr: usize = scores.iter().map(|s| s.corrected_distance).sum();
    let oracle: usize = scores.iter().map(|s| s.oracle_distance).sum();
    let conf: Vec<f64> = scores.iter().map(|s| s.confidence).collect();
    let wer: Vec<f64> = scores.iter().map(|s| s.asr_wer).collect();
    EvalReport {
        source: source.to_string(),
        utterances: scores.len(),
        golden_tokens: tokens,
        original_distance: orig,
        corrected_distance: corr,
        oracle_distance: oracle,
        original_wer: pct(orig, tokens).unwrap_or(0.0),
        corrected_wer: pct(corr, tokens).unwrap_or(0.0),
        oracle_wer: pct(oracle, tokens).unwrap_or(0.0),
        rel_diff: rel_diff(orig, corr),
        confidence_bins: bin_rows(scores, confidence_labels(confidence_edges), |s| {
            confidence_bin(s.confidence, confidence_edges)
        }),
        wer_bins: bin_rows(scores, wer_labels(wer_edges), |s| wer_bin(s.asr_wer, wer_edges)),
        spearman_confidence_wer: if scores.len() > 1 { spearman(&conf, &wer) } else { None },
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or("-".to_string(), |v| format!("{v:.2}"))
}

fn table(out: &mut String, title: &str, rows: &[BinRow]) {
    let _ = writeln!(out, "\n{title}");
    let _ = writeln!(
        out,
        "{:<16} {:>7} {:>8} {:>9} {:>10} {:>10}",
        "bin", "size", "tokens", "Original", "Corrected", "Rel. Diff."
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<16} {:>7} {:>8} {:>9} {:>10} {:>10}",
            r.label,
            r.utterances,
            r.golden_tokens,
            opt(r.original_wer),
            opt(r.corrected_wer),
            opt(r.rel_diff)
        );
    }
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "source: {}  utterances: {}  golden tokens: {}", self.source, self.utterances, self.golden_tokens);
        let _ = writeln!(out, "{:<12} {:>8}", "", "WER %");
        let _ = writeln!(out, "{:<12} {:>8.2}", "original", self.original_wer);
        let _ = writeln!(out, "{:<12} {:>8.2}", "corrected", self.corrected_wer);
        let _ = writeln!(out, "{:<12} {:>8.2}", "oracle", self.oracle_wer);
        let _ = writeln!(out, "{:<12} {:>8}", "rel. diff.", opt(self.rel_diff));
        table(&mut out, "by ASR confidence", &self.confidence_bins);
        table(&mut out, "by ASR WER", &self.wer_bins);
        if let Some(rho) = self.spearman_confidence_wer {
            let _ = writeln!(out, "\nspearman(confidence, ASR WER) = {rho:.4}");
        }
        out
    }
}
