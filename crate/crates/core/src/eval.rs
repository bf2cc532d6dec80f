//! Precision/recall/F over predicted vs. gold links, with an error
//! breakdown into wrong-entity, spurious-mention, and missed-mention.
//!
//! Matching rule: a prediction is a true positive iff its normalized surface
//! equals a gold link's normalized surface AND the entity ids are equal;
//! each gold link matches at most one prediction (greedy by decode score).
//!
//! Note on reported third-party numbers: an F-score column is only
//! internally consistent when it is the harmonic mean of its own P and R
//! (0.714/0.712 -> 0.713 and 0.664/0.662 -> 0.663 both are). A published
//! 0.407/0.829 -> 0.579 row is not (the harmonic mean is ~0.546); this
//! harness always reports the harmonic mean and does not guess at other
//! conventions.

use serde::{Deserialize, Serialize};

use crate::corpus::GoldLink;
use crate::kg::normalize;
use crate::pipeline::LinkPrediction;

/// A gold link reduced to what matching needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldSpec {
    pub surface: String,
    pub qid: String,
}

impl From<&GoldLink> for GoldSpec {
    fn from(link: &GoldLink) -> Self {
        GoldSpec { surface: link.surface.clone(), qid: link.qid.clone() }
    }
}

/// Raw match counts for one sentence (or a micro-aggregated total).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub wrong_entity: usize,
    pub spurious_mention: usize,
    pub missed_mention: usize,
}

impl MatchCounts {
    pub fn add(&mut self, other: &MatchCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.wrong_entity += other.wrong_entity;
        self.spurious_mention += other.spurious_mention;
        self.missed_mention += other.missed_mention;
    }
}

/// Micro-averaged report: counts plus precision, recall, and harmonic-mean
/// F-score (each 0 when its denominator is 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub wrong_entity: usize,
    pub spurious_mention: usize,
    pub missed_mention: usize,
}

pub fn harmonic_f(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Greedy matching by decode score: higher-confidence predictions claim gold
/// links first. Every edge requires equal normalized surface and equal id,
/// so greedy matching attains the maximum matching size.
pub fn match_predictions(gold: &[GoldSpec], predictions: &[LinkPrediction]) -> MatchCounts {
    let gold_norm: Vec<String> = gold.iter().map(|g| normalize(&g.surface)).collect();
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&predictions[a], &predictions[b]);
        pb.decode_score
            .partial_cmp(&pa.decode_score)
            .expect("decode scores are finite")
            .then_with(|| pa.surface.cmp(&pb.surface))
            .then_with(|| pa.qid.cmp(&pb.qid))
    });

    let mut gold_taken = vec![false; gold.len()];
    let mut counts = MatchCounts::default();
    for &pi in &order {
        let pred = &predictions[pi];
        let pred_norm = normalize(&pred.surface);
        let matched = gold
            .iter()
            .enumerate()
            .position(|(gi, g)| !gold_taken[gi] && gold_norm[gi] == pred_norm && g.qid == pred.qid);
        match matched {
            Some(gi) => {
                gold_taken[gi] = true;
                counts.tp += 1;
            }
            None => {
                counts.fp += 1;
                let surface_hit_wrong_id = gold
                    .iter()
                    .enumerate()
                    .any(|(gi, g)| gold_norm[gi] == pred_norm && g.qid != pred.qid);
                if surface_hit_wrong_id {
                    counts.wrong_entity += 1;
                } else {
                    counts.spurious_mention += 1;
                }
            }
        }
    }
    counts.fn_ = gold_taken.iter().filter(|&&taken| !taken).count();
    counts.missed_mention = counts.fn_;
    counts
}

/// Per-sentence matching, parallel over sentences with deterministic
/// (ordered) results.
pub fn match_all(pairs: &[(Vec<GoldSpec>, Vec<LinkPrediction>)]) -> Vec<MatchCounts> {
    let run = |(gold, preds): &(Vec<GoldSpec>, Vec<LinkPrediction>)| match_predictions(gold, preds);
    #[cfg(feature = "parallel")]
    if pairs.len() >= 64 {
        use rayon::prelude::*;
        return pairs.par_iter().map(run).collect();
    }
    pairs.iter().map(run).collect()
}

/// Micro-aggregation: sum counts over sentences, then compute P/R/F.
pub fn aggregate<'a, I>(per_sentence: I) -> EvalReport
where
    I: IntoIterator<Item = &'a MatchCounts>,
{
    let mut total = MatchCounts::default();
    for counts in per_sentence {
        total.add(counts);
    }
    let precision = ratio(total.tp, total.tp + total.fp);
    let recall = ratio(total.tp, total.tp + total.fn_);
    EvalReport {
        true_positives: total.tp,
        false_positives: total.fp,
        false_negatives: total.fn_,
        precision,
        recall,
        f_score: harmonic_f(precision, recall),
        wrong_entity: total.wrong_entity,
        spurious_mention: total.spurious_mention,
        missed_mention: total.missed_mention,
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Fixed-width text table with Method, Precision, Recall, F-Score columns.
pub fn render_table(rows: &[(&str, f64, f64, f64)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<16} {:>9} {:>9} {:>9}\n",
        "Method", "Precision", "Recall", "F-Score"
    ));
    out.push_str(&format!("{:-<16} {:->9} {:->9} {:->9}\n", "", "", "", ""));
    for (method, p, r, f) in rows {
        out.push_str(&format!("{method:<16} {p:>9.3} {r:>9.3} {f:>9.3}\n"));
    }
    out
}
