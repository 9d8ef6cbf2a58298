//! Edit-distance alignment, corpus WER, `[DUM]` slot padding and the mapping
//! from minimal edit scripts to warping labels.

use serde::{Deserialize, Serialize};

use crate::correction::HypothesisSet;
use crate::error::{Error, Result};
use crate::vocab::{is_special, TokenId, TokenSeq, DUM, INSERT};
use crate::warping::WarpOp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EditStep {
    Match(usize, usize),
    Substitute(usize, usize),
    DeleteFromA(usize),
    InsertIntoA(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditScript {
    pub steps: Vec<EditStep>,
    pub total_cost: usize,
}

impl EditScript {
    pub fn matches(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| matches!(s, EditStep::Match(..)))
            .count()
    }
}

#[derive(Clone, Copy)]
enum CostModel {
    Unit,
    /// `[DUM]` on the A side is a free slot: filling or discarding it costs 0.
    DumSlots,
}

impl CostModel {
    fn substitute(self, a: TokenId) -> usize {
        match self {
            CostModel::DumSlots if a == DUM => 0,
            _ => 1,
        }
    }

    fn delete(self, a: TokenId) -> usize {
        self.substitute(a)
    }
}

/// Minimal-cost alignment of `a` onto `b`.
///
/// Among scripts of minimal cost the one with the most matches is chosen;
/// remaining ties are broken during backtrace in the order
/// Match > Substitute > DeleteFromA > InsertIntoA.
fn align(a: &[TokenId], b: &[TokenId], costs: CostModel) -> EditScript {
    let (n, m) = (a.len(), b.len());
    // score = cost * w - matches, so minimizing it is lexicographic.
    let w = (n.min(m) + 1) as i64;
    let cols = m + 1;
    let mut score = vec![0i64; (n + 1) * cols];
    for i in 1..=n {
        score[i * cols] = score[(i - 1) * cols] + costs.delete(a[i - 1]) as i64 * w;
    }
    for j in 1..=m {
        score[j] = score[j - 1] + w;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = score[(i - 1) * cols + j - 1]
                + if a[i - 1] == b[j - 1] {
                    -1
                } else {
                    costs.substitute(a[i - 1]) as i64 * w
                };
            let del = score[(i - 1) * cols + j] + costs.delete(a[i - 1]) as i64 * w;
            let ins = score[i * cols + j - 1] + w;
            score[i * cols + j] = diag.min(del).min(ins);
        }
    }

    let mut steps = Vec::with_capacity(n.max(m));
    let mut cost = 0usize;
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = score[i * cols + j];
        if i > 0 && j > 0 {
            let prev = score[(i - 1) * cols + j - 1];
            if a[i - 1] == b[j - 1] && prev - 1 == here {
                steps.push(EditStep::Match(i - 1, j - 1));
                i -= 1;
                j -= 1;
                continue;
            }
            let c = costs.substitute(a[i - 1]);
            if a[i - 1] != b[j - 1] && prev + c as i64 * w == here {
                steps.push(EditStep::Substitute(i - 1, j - 1));
                cost += c;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 {
            let c = costs.delete(a[i - 1]);
            if score[(i - 1) * cols + j] + c as i64 * w == here {
                steps.push(EditStep::DeleteFromA(i - 1));
                cost += c;
                i -= 1;
                continue;
            }
        }
        debug_assert!(j > 0 && score[i * cols + j - 1] + w == here);
        steps.push(EditStep::InsertIntoA(j - 1));
        cost += 1;
        j -= 1;
    }
    steps.reverse();
    EditScript {
        steps,
        total_cost: cost,
    }
}

/// Unit-cost token edit script turning `a` into `b`.
pub fn levenshtein(a: &[TokenId], b: &[TokenId]) -> EditScript {
    align(a, b, CostModel::Unit)
}

/// Unit-cost edit distance, without building a script.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceWer {
    pub id: String,
    pub distance: usize,
    pub golden_len: usize,
}

impl UtteranceWer {
    /// Per-utterance WER as a ratio (may exceed 1).
    pub fn ratio(&self) -> f64 {
        self.distance as f64 / self.golden_len as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WerReport {
    pub total_edit_distance: usize,
    pub total_golden_tokens: usize,
    /// Percentage.
    pub wer: f64,
    pub per_utterance: Vec<UtteranceWer>,
}

impl WerReport {
    pub fn from_utterances(per_utterance: Vec<UtteranceWer>) -> Result<Self> {
        let total_edit_distance = per_utterance.iter().map(|u| u.distance).sum();
        let total_golden_tokens: usize = per_utterance.iter().map(|u| u.golden_len).sum();
        if total_golden_tokens == 0 {
            return Err(Error::EmptyGolden(0));
        }
        Ok(WerReport {
            total_edit_distance,
            total_golden_tokens,
            wer: 100.0 * total_edit_distance as f64 / total_golden_tokens as f64,
            per_utterance,
        })
    }
}

/// Corpus WER: summed edit distance over summed golden length.
pub fn corpus_wer<S: AsRef<[TokenId]>>(candidates: &[S], goldens: &[S]) -> Result<WerReport> {
    let ids: Vec<String> = (0..candidates.len()).map(|i| i.to_string()).collect();
    corpus_wer_with_ids(&ids, candidates, goldens)
}

pub fn corpus_wer_with_ids<S: AsRef<[TokenId]>>(
    ids: &[String],
    candidates: &[S],
    goldens: &[S],
) -> Result<WerReport> {
    if candidates.len() != goldens.len() || ids.len() != goldens.len() {
        return Err(Error::LengthMismatch(format!(
            "{} candidates, {} goldens, {} ids",
            candidates.len(),
            goldens.len(),
            ids.len()
        )));
    }
    let per_utterance = candidates
        .iter()
        .zip(goldens)
        .zip(ids)
        .enumerate()
        .map(|(k, ((c, g), id))| {
            let g = g.as_ref();
            if g.is_empty() {
                return Err(Error::EmptyGolden(k));
            }
            Ok(UtteranceWer {
                id: id.clone(),
                distance: edit_distance(c.as_ref(), g),
                golden_len: g.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if per_utterance.is_empty() {
        return Err(Error::EmptyDataset);
    }
    WerReport::from_utterances(per_utterance)
}

/// Picks, per utterance, the hypothesis closest to the golden transcription
/// (ties go to the higher confidence) and aggregates the result.
pub fn oracle_wer(sets: &[HypothesisSet]) -> Result<WerReport> {
    let mut per_utterance = Vec::with_capacity(sets.len());
    for (k, set) in sets.iter().enumerate() {
        let golden = set.golden.as_ref().ok_or(Error::EmptyGolden(k))?;
        if golden.is_empty() {
            return Err(Error::EmptyGolden(k));
        }
        let mut best: Option<(usize, f64)> = None;
        for (hyp, score) in set.scored_hypotheses() {
            let d = edit_distance(hyp, golden);
            let better = match best {
                None => true,
                Some((bd, bs)) => d < bd || (d == bd && score > bs),
            };
            if better {
                best = Some((d, score));
            }
        }
        let (distance, _) = best.ok_or(Error::EmptyHypothesisSet(k))?;
        per_utterance.push(UtteranceWer {
            id: set.id.clone(),
            distance,
            golden_len: golden.len(),
        });
    }
    if per_utterance.is_empty() {
        return Err(Error::EmptyDataset);
    }
    WerReport::from_utterances(per_utterance)
}

/// Pads `top` with `[DUM]` slots wherever a hypothesis needs a token
/// inserted into it, visiting hypotheses in the given (confidence) order.
/// Existing tokens are never changed.
pub fn insert_dum_tokens<S: AsRef<[TokenId]>>(top: &[TokenId], additional: &[S]) -> TokenSeq {
    let mut current = top.to_vec();
    for hyp in additional {
        let script = levenshtein(&current, hyp.as_ref());
        let mut padded = Vec::with_capacity(current.len() + script.total_cost);
        for step in &script.steps {
            match *step {
                EditStep::Match(i, _) | EditStep::Substitute(i, _) | EditStep::DeleteFromA(i) => {
                    padded.push(current[i])
                }
                EditStep::InsertIntoA(_) => padded.push(DUM),
            }
        }
        current = padded;
    }
    TokenSeq(current)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentLabels {
    pub target_ids: Vec<TokenId>,
    pub target_ops: Vec<WarpOp>,
    /// Set when a missing truth token had no position to ride on.
    pub lossy: bool,
}

/// Moves each insertion rightward past substitutions. The swap keeps cost
/// and match count, and leaves every insertion followed by a match, another
/// insertion or the end of the script.
fn canonicalize(steps: &mut [EditStep]) {
    let mut changed = true;
    while changed {
        changed = false;
        for k in 0..steps.len().saturating_sub(1) {
            if let (EditStep::InsertIntoA(j), EditStep::Substitute(i, j2)) = (steps[k], steps[k + 1])
            {
                steps[k] = EditStep::Substitute(i, j);
                steps[k + 1] = EditStep::InsertIntoA(j2);
                changed = true;
            }
        }
    }
}

/// Derives per-position warping labels that turn `hypothesis` (possibly
/// `[DUM]`-padded) into `truth`.
///
/// | script step                       | label                      |
/// |-----------------------------------|----------------------------|
/// | match                             | KEEP, same token           |
/// | real token substituted            | RAND, truth token          |
/// | `[DUM]` filled                    | MASK, truth token          |
/// | hypothesis token deleted          | INSERT, `[INSERT]`         |
/// | truth token missing               | DROP on the next position  |
///
/// Only the last of several consecutive missing tokens can be carried, and
/// missing tokens at the end have no carrier; both set `lossy`.
pub fn derive_warp_labels(hypothesis: &[TokenId], truth: &[TokenId]) -> Result<AlignmentLabels> {
    if truth.is_empty() {
        return Err(Error::EmptyGolden(0));
    }
    if let Some(&t) = truth.iter().find(|&&t| is_special(t)) {
        return Err(Error::SpecialToken(t));
    }
    let mut script = align(hypothesis, truth, CostModel::DumSlots);
    canonicalize(&mut script.steps);

    let n = hypothesis.len();
    let mut target_ids = vec![INSERT; n];
    let mut target_ops = vec![WarpOp::Insert; n];
    let mut lossy = false;
    let mut pending: Vec<TokenId> = Vec::new();
    for step in &script.steps {
        match *step {
            EditStep::InsertIntoA(j) => {
                pending.push(truth[j]);
                continue;
            }
            EditStep::Match(i, j) => {
                if let Some(&carried) = pending.last() {
                    target_ids[i] = carried;
                    target_ops[i] = WarpOp::Drop;
                    lossy |= pending.len() > 1;
                } else {
                    target_ids[i] = truth[j];
                    target_ops[i] = WarpOp::Keep;
                }
            }
            EditStep::Substitute(i, j) => {
                lossy |= !pending.is_empty();
                target_ids[i] = truth[j];
                target_ops[i] = if hypothesis[i] == DUM {
                    WarpOp::Mask
                } else {
                    WarpOp::Rand
                };
            }
            EditStep::DeleteFromA(_) => {
                lossy |= !pending.is_empty();
            }
        }
        pending.clear();
    }
    lossy |= !pending.is_empty();
    Ok(AlignmentLabels {
        target_ids,
        target_ops,
        lossy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correction::{reconstruct_from_labels, ScoredHypothesis};
    use proptest::prelude::*;

    // delete=10 timer=11 thirty=12 second=13 my=14 please=15 the=16
    const DELETE: TokenId = 10;
    const TIMER: TokenId = 11;
    const THIRTY: TokenId = 12;
    const SECOND: TokenId = 13;
    const MY: TokenId = 14;
    const PLEASE: TokenId = 15;
    const THE: TokenId = 16;

    #[test]
    fn identity_script() {
        let s = levenshtein(&[DELETE, TIMER], &[DELETE, TIMER]);
        assert_eq!(s.total_cost, 0);
        assert_eq!(s.steps, vec![EditStep::Match(0, 0), EditStep::Match(1, 1)]);
    }

    #[test]
    fn two_deletions() {
        let s = levenshtein(&[DELETE, THIRTY, SECOND, TIMER], &[DELETE, TIMER]);
        assert_eq!(s.total_cost, 2);
        let dels = s
            .steps
            .iter()
            .filter(|s| matches!(s, EditStep::DeleteFromA(_)))
            .count();
        assert_eq!(dels, 2);
    }

    #[test]
    fn empty_sequences() {
        assert_eq!(levenshtein(&[], &[]).total_cost, 0);
        assert_eq!(levenshtein(&[1], &[]).steps, vec![EditStep::DeleteFromA(0)]);
        assert_eq!(levenshtein(&[], &[1]).steps, vec![EditStep::InsertIntoA(0)]);
    }

    #[test]
    fn substitute_preferred_over_delete_insert() {
        let s = levenshtein(&[7], &[8]);
        assert_eq!(s.steps, vec![EditStep::Substitute(0, 0)]);
    }

    #[test]
    fn wer_examples() {
        let r = corpus_wer(&[vec![DELETE, TIMER]], &[vec![DELETE, TIMER]]).unwrap();
        assert_eq!(r.wer, 0.0);
        let r = corpus_wer(&[vec![DELETE, TIMER]], &[vec![DELETE, THE, TIMER]]).unwrap();
        assert!((r.wer - 100.0 / 3.0).abs() < 1e-12);
        let r = corpus_wer(&[vec![1u32, 2, 3, 4, 5, 6]], &[vec![7u32, 8]]).unwrap();
        assert_eq!(r.total_edit_distance, 6);
        assert!((r.wer - 300.0).abs() < 1e-12);
    }

    #[test]
    fn wer_errors() {
        assert!(corpus_wer(&[vec![1u32]], &[vec![1u32], vec![2]]).is_err());
        assert!(matches!(
            corpus_wer(&[vec![1u32]], &[vec![]]),
            Err(Error::EmptyGolden(0))
        ));
    }

    fn set(golden: &[TokenId], top: &[TokenId], rest: &[(&[TokenId], f64)]) -> HypothesisSet {
        HypothesisSet {
            id: "u".into(),
            golden: Some(TokenSeq(golden.to_vec())),
            top: TokenSeq(top.to_vec()),
            top_score: 0.9,
            additional: rest
                .iter()
                .map(|(t, s)| ScoredHypothesis {
                    text: TokenSeq(t.to_vec()),
                    score: *s,
                })
                .collect(),
        }
    }

    #[test]
    fn oracle_picks_exact_member() {
        let g = [DELETE, THE, TIMER];
        let s = set(
            &g,
            &[DELETE, TIMER],
            &[(&[DELETE, MY], 0.8), (&[PLEASE], 0.7), (&g, 0.6)],
        );
        let r = oracle_wer(&[s]).unwrap();
        assert_eq!(r.total_edit_distance, 0);
    }

    #[test]
    fn oracle_single_hypothesis_equals_top_wer() {
        let s1 = set(&[DELETE, THE, TIMER], &[DELETE, TIMER], &[]);
        let s2 = set(&[DELETE, TIMER], &[MY, TIMER, PLEASE], &[]);
        let o = oracle_wer(&[s1.clone(), s2.clone()]).unwrap();
        let tops = [s1.top.0.clone(), s2.top.0.clone()];
        let golds = [s1.golden.unwrap().0, s2.golden.unwrap().0];
        let t = corpus_wer(&tops, &golds).unwrap();
        assert_eq!(o.total_edit_distance, t.total_edit_distance);
        assert_eq!(o.wer, t.wer);
    }

    #[test]
    fn dum_padding_follows_hypotheses() {
        let top = [DELETE, TIMER];
        let h1 = vec![DELETE, THIRTY, SECOND, TIMER];
        let h2 = vec![DELETE, MY, TIMER, PLEASE];
        let once = insert_dum_tokens(&top, &[h1.clone()]);
        assert_eq!(once.ids(), &[DELETE, DUM, DUM, TIMER]);
        let twice = insert_dum_tokens(&top, &[h1, h2]);
        assert_eq!(twice.ids(), &[DELETE, DUM, DUM, TIMER, DUM]);
        let none: [Vec<TokenId>; 0] = [];
        assert_eq!(insert_dum_tokens(&top, &none).ids(), &top);
    }

    #[test]
    fn labels_fill_dum_slots_with_mask() {
        let l = derive_warp_labels(&[DELETE, DUM, DUM, TIMER], &[DELETE, THIRTY, SECOND, TIMER])
            .unwrap();
        assert_eq!(
            l.target_ops,
            vec![WarpOp::Keep, WarpOp::Mask, WarpOp::Mask, WarpOp::Keep]
        );
        assert_eq!(l.target_ids, vec![DELETE, THIRTY, SECOND, TIMER]);
        assert!(!l.lossy);
    }

    #[test]
    fn labels_mark_spurious_token_insert() {
        let l = derive_warp_labels(&[DELETE, MY, TIMER], &[DELETE, TIMER]).unwrap();
        assert_eq!(
            l.target_ops,
            vec![WarpOp::Keep, WarpOp::Insert, WarpOp::Keep]
        );
        assert_eq!(l.target_ids, vec![DELETE, INSERT, TIMER]);
    }

    #[test]
    fn labels_carry_missing_token_as_drop() {
        let l = derive_warp_labels(&[DELETE, TIMER], &[DELETE, THE, TIMER]).unwrap();
        assert_eq!(l.target_ops, vec![WarpOp::Keep, WarpOp::Drop]);
        assert_eq!(l.target_ids, vec![DELETE, THE]);
        assert!(!l.lossy);
    }

    #[test]
    fn labels_shift_insertion_past_substitution() {
        // x c -> a b c: RAND a on x, then DROP b carried by c.
        let l = derive_warp_labels(&[MY, TIMER], &[DELETE, THE, TIMER]).unwrap();
        assert!(!l.lossy);
        assert_eq!(l.target_ops, vec![WarpOp::Rand, WarpOp::Drop]);
        assert_eq!(
            reconstruct_from_labels(&[MY, TIMER], &l.target_ids, &l.target_ops),
            vec![DELETE, THE, TIMER]
        );
    }

    #[test]
    fn labels_flag_unrepresentable_cases() {
        // Two consecutive missing tokens.
        let l = derive_warp_labels(&[DELETE, TIMER], &[DELETE, THE, MY, TIMER]).unwrap();
        assert!(l.lossy);
        // Missing final token.
        let l = derive_warp_labels(&[DELETE], &[DELETE, TIMER]).unwrap();
        assert!(l.lossy);
        // Unused slot becomes INSERT.
        let l = derive_warp_labels(&[DELETE, DUM, TIMER], &[DELETE, TIMER]).unwrap();
        assert_eq!(l.target_ops[1], WarpOp::Insert);
        assert!(!l.lossy);
    }

    #[test]
    fn labels_reject_bad_truth() {
        assert!(derive_warp_labels(&[DELETE], &[]).is_err());
        assert!(derive_warp_labels(&[DELETE], &[DUM]).is_err());
    }

    fn seq() -> impl Strategy<Value = Vec<TokenId>> {
        prop::collection::vec(5u32..9, 0..8)
    }

    proptest! {
        #[test]
        fn distance_symmetric(a in seq(), b in seq()) {
            prop_assert_eq!(levenshtein(&a, &b).total_cost, levenshtein(&b, &a).total_cost);
        }

        #[test]
        fn script_is_consistent(a in seq(), b in seq()) {
            let s = levenshtein(&a, &b);
            prop_assert_eq!(s.total_cost, edit_distance(&a, &b));
            let (mut ia, mut ib) = (0, 0);
            for step in &s.steps {
                match *step {
                    EditStep::Match(i, j) => { prop_assert!(i == ia && j == ib && a[i] == b[j]); ia += 1; ib += 1; }
                    EditStep::Substitute(i, j) => { prop_assert!(i == ia && j == ib && a[i] != b[j]); ia += 1; ib += 1; }
                    EditStep::DeleteFromA(i) => { prop_assert_eq!(i, ia); ia += 1; }
                    EditStep::InsertIntoA(j) => { prop_assert_eq!(j, ib); ib += 1; }
                }
            }
            prop_assert_eq!((ia, ib), (a.len(), b.len()));
        }

        #[test]
        fn dum_padding_strips_back(top in seq(), hyps in prop::collection::vec(seq(), 0..4)) {
            let padded = insert_dum_tokens(&top, &hyps);
            prop_assert!(padded.len() >= top.len());
            prop_assert_eq!(padded.without_dum().0, top);
        }

        #[test]
        fn wer_permutation_invariant(pairs in prop::collection::vec((seq(), prop::collection::vec(5u32..9, 1..8)), 1..8), rot in 0usize..8) {
            let (c, g): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
            let r1 = corpus_wer(&c, &g).unwrap();
            let k = rot % pairs.len();
            let mut rotated = pairs.clone();
            rotated.rotate_left(k);
            rotated.reverse();
            let (c2, g2): (Vec<_>, Vec<_>) = rotated.into_iter().unzip();
            let r2 = corpus_wer(&c2, &g2).unwrap();
            prop_assert_eq!(r1.total_edit_distance, r2.total_edit_distance);
            prop_assert_eq!(r1.wer, r2.wer);
        }

        #[test]
        fn labels_round_trip(h in seq(), t in prop::collection::vec(5u32..9, 1..8), others in prop::collection::vec(seq(), 0..3)) {
            let padded = insert_dum_tokens(&h, &others);
            let l = derive_warp_labels(&padded, &t).unwrap();
            prop_assert_eq!(l.target_ids.len(), padded.len());
            for (op, id) in l.target_ops.iter().zip(&l.target_ids) {
                prop_assert_eq!(*op == WarpOp::Insert, *id == INSERT);
            }
            if !l.lossy {
                prop_assert_eq!(reconstruct_from_labels(&padded, &l.target_ids, &l.target_ops), t);
            }
        }
    }
}
