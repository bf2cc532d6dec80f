//! Aligned-corpus parsing and example construction for the three training
//! tasks (surface-form extraction, disambiguation, end-to-end baseline).
//!
//! Corpus records are JSON lines: `{"text": ..., "annotations": [{"start",
//! "end", "surface", "qid"}]}` with character offsets into `text`.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{is_qid, KgError, KgIndex};
use crate::seq2seq::TrainExample;
use crate::util::seeded_rng;
use crate::vocab::{tokenize_with_offsets, Vocabulary, EOS, SEP};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("split ratio must be inside (0, 1), got {0}")]
    BadRatio(f64),
    #[error(transparent)]
    Kg(#[from] KgError),
}

/// One aligned annotation as it appears in the corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawAnnotation {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub qid: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub text: String,
    pub annotations: Vec<RawAnnotation>,
}

/// A gold link over token indices: span [start, end), the surface string as
/// joined span tokens, and the annotated entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldLink {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub qid: String,
}

/// Tokenized sentence plus its gold links; spans never overlap and always
/// lie within the (truncated) token bounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedSentence {
    pub tokens: Vec<String>,
    pub links: Vec<GoldLink>,
}

/// Alignment bookkeeping: every input annotation lands in exactly one bucket.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseCounts {
    pub sentences: u64,
    pub annotations_total: u64,
    pub kept: u64,
    pub dropped_misaligned: u64,
    pub dropped_truncated: u64,
}

/// Converts character-offset annotations into token spans. Annotations whose
/// offsets do not land exactly on token boundaries are dropped (counted), as
/// are overlaps with an earlier kept span; spans past the `max_tokens` cut
/// are dropped as truncated.
pub fn align_sentence(
    text: &str,
    annotations: &[RawAnnotation],
    max_tokens: usize,
    counts: &mut ParseCounts,
) -> AnnotatedSentence {
    let offsets = tokenize_with_offsets(text);
    let mut sorted: Vec<&RawAnnotation> = annotations.iter().collect();
    sorted.sort_by_key(|a| (a.start, a.end));
    counts.sentences += 1;
    counts.annotations_total += annotations.len() as u64;

    let mut links: Vec<GoldLink> = Vec::new();
    for ann in sorted {
        let start_tok = offsets.iter().position(|(_, s, _)| *s == ann.start);
        let end_tok = offsets.iter().position(|(_, _, e)| *e == ann.end);
        let (Some(i), Some(j)) = (start_tok, end_tok) else {
            counts.dropped_misaligned += 1;
            continue;
        };
        if j < i {
            counts.dropped_misaligned += 1;
            continue;
        }
        let (start, end) = (i, j + 1);
        if links.iter().any(|l| start < l.end && l.start < end) {
            // Overlap with an already kept span is an alignment defect too.
            counts.dropped_misaligned += 1;
            continue;
        }
        if end > max_tokens {
            counts.dropped_truncated += 1;
            continue;
        }
        counts.kept += 1;
        let surface = offsets[i..=j]
            .iter()
            .map(|(t, _, _)| t.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        links.push(GoldLink { start, end, surface, qid: ann.qid.clone() });
    }
    let mut tokens: Vec<String> = offsets.into_iter().map(|(t, _, _)| t).collect();
    tokens.truncate(max_tokens);
    AnnotatedSentence { tokens, links }
}

/// Parses a JSON-lines corpus file into annotated sentences.
pub fn parse_corpus(
    path: &Path,
    max_tokens: usize,
) -> Result<(Vec<AnnotatedSentence>, ParseCounts), CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut sentences = Vec::new();
    let mut counts = ParseCounts::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RawRecord = serde_json::from_str(&line).map_err(|e| {
            CorpusError::MalformedRecord { line: line_no, reason: e.to_string() }
        })?;
        for ann in &record.annotations {
            if !is_qid(&ann.qid) {
                return Err(CorpusError::MalformedRecord {
                    line: line_no,
                    reason: format!("annotation qid '{}' does not match Q<digits>", ann.qid),
                });
            }
        }
        sentences.push(align_sentence(&record.text, &record.annotations, max_tokens, &mut counts));
    }
    Ok((sentences, counts))
}

/// Deterministic seeded shuffle, then split at floor(ratio * n).
pub fn split_corpus<T>(
    mut items: Vec<T>,
    ratio: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), CorpusError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(CorpusError::BadRatio(ratio));
    }
    let mut rng = seeded_rng(seed);
    for i in (1..items.len()).rev() {
        let j = rand::Rng::random_range(&mut rng, 0..=i);
        items.swap(i, j);
    }
    let cut = (ratio * items.len() as f64).floor() as usize;
    let test = items.split_off(cut);
    Ok((items, test))
}

/// Extraction task: source is the sentence, target lists the surface forms
/// in textual order, SEP-separated and EOS-terminated. Sentences without
/// links get the bare-EOS target.
pub fn build_extractor_examples(
    sentences: &[AnnotatedSentence],
    vocab: &Vocabulary,
) -> Vec<TrainExample> {
    sentences
        .iter()
        .map(|sent| {
            let source = vocab.encode(&sent.tokens);
            let mut target = Vec::new();
            for (i, link) in sent.links.iter().enumerate() {
                if i > 0 {
                    target.push(SEP);
                }
                target.extend(vocab.encode(&sent.tokens[link.start..link.end]));
            }
            target.push(EOS);
            TrainExample { source, target }
        })
        .collect()
}

/// Whether disambiguation examples are built for training (gold candidate
/// guaranteed present) or evaluation (candidates exactly as retrieved).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExampleMode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy)]
pub struct DisambParams {
    pub threshold: f64,
    pub candidate_limit: usize,
    pub max_source_len: usize,
}

/// One disambiguation example: `surface SEP cand1-label SEP cand2-label ...`
/// as the source, the gold entity label as the target.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisambExample {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
    pub surface: String,
    pub gold_qid: String,
    pub candidate_qids: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisambCounts {
    pub built: u64,
    /// Gold entity absent from the KG store; no label to supervise with.
    pub skipped_gold_missing: u64,
    pub gold_injected: u64,
}

/// Builds disambiguation examples by searching the index for each gold
/// surface form. In training mode a gold entity missing from the hits is
/// appended (never during evaluation). Candidates keep the search order;
/// truncation drops whole trailing candidate segments but always retains the
/// surface form and at least one candidate (the gold one in training mode).
pub fn build_disambiguator_examples(
    sentences: &[AnnotatedSentence],
    index: &KgIndex,
    vocab: &Vocabulary,
    params: &DisambParams,
    mode: ExampleMode,
) -> Result<(Vec<DisambExample>, DisambCounts), CorpusError> {
    let mut out = Vec::new();
    let mut counts = DisambCounts::default();
    for sent in sentences {
        for link in &sent.links {
            let hits = index.search(&link.surface, params.threshold, params.candidate_limit)?;
            let mut candidate_ids: Vec<String> = hits.into_iter().map(|h| h.id).collect();
            let gold_entity = index.entity(&link.qid);
            if mode == ExampleMode::Train {
                let Some(gold) = gold_entity else {
                    counts.skipped_gold_missing += 1;
                    continue;
                };
                if !candidate_ids.iter().any(|id| id == &gold.id) {
                    candidate_ids.push(gold.id.clone());
                    counts.gold_injected += 1;
                }
            }
            let surface_ids = vocab.encode(&crate::vocab::tokenize(&link.surface));
            let segments: Vec<(String, Vec<usize>)> = candidate_ids
                .iter()
                .filter_map(|id| {
                    index.entity(id).map(|e| {
                        (id.clone(), vocab.encode(&crate::vocab::tokenize(&e.label)))
                    })
                })
                .collect();
            let must_keep = match mode {
                ExampleMode::Train => Some(link.qid.as_str()),
                ExampleMode::Eval => None,
            };
            let (source, kept_ids) =
                assemble_source(&surface_ids, &segments, params.max_source_len, must_keep);
            let target = match mode {
                ExampleMode::Train => {
                    let gold = gold_entity.expect("checked above in train mode");
                    let mut t = vocab.encode(&crate::vocab::tokenize(&gold.label));
                    t.push(EOS);
                    t
                }
                ExampleMode::Eval => match gold_entity {
                    Some(gold) => {
                        let mut t = vocab.encode(&crate::vocab::tokenize(&gold.label));
                        t.push(EOS);
                        t
                    }
                    None => vec![EOS],
                },
            };
            counts.built += 1;
            out.push(DisambExample {
                source,
                target,
                surface: link.surface.clone(),
                gold_qid: link.qid.clone(),
                candidate_qids: kept_ids,
            });
        }
    }
    Ok((out, counts))
}

/// Packs `surface SEP seg1 SEP seg2 ...` into `max_len` ids, dropping whole
/// trailing segments first. `must_keep` (the gold id in training) evicts
/// lower-ranked segments if needed; as a last resort the single remaining
/// segment is cut mid-label so at least one candidate survives.
pub(crate) fn assemble_source(
    surface_ids: &[usize],
    segments: &[(String, Vec<usize>)],
    max_len: usize,
    must_keep: Option<&str>,
) -> (Vec<usize>, Vec<String>) {
    let base = surface_ids.len();
    let cost = |seg: &[usize]| seg.len() + 1; // +1 for SEP
    let mut kept: Vec<usize> = Vec::new(); // indices into segments
    let mut used = base;
    for (i, (_, seg)) in segments.iter().enumerate() {
        if used + cost(seg) <= max_len {
            kept.push(i);
            used += cost(seg);
        }
    }
    if let Some(gold_id) = must_keep {
        let gold_idx = segments.iter().position(|(id, _)| id == gold_id);
        if let Some(gi) = gold_idx {
            if !kept.contains(&gi) {
                while let Some(&last) = kept.last() {
                    if used + cost(&segments[gi].1) <= max_len {
                        break;
                    }
                    used -= cost(&segments[last].1);
                    kept.pop();
                }
                if used + cost(&segments[gi].1) <= max_len {
                    kept.push(gi);
                }
                kept.sort_unstable();
                if !kept.contains(&gi) {
                    kept = vec![gi];
                }
            }
        }
    }
    if kept.is_empty() && !segments.is_empty() {
        kept.push(0);
    }
    let mut source = surface_ids.to_vec();
    let mut kept_ids = Vec::with_capacity(kept.len());
    for &i in &kept {
        source.push(SEP);
        source.extend_from_slice(&segments[i].1);
        kept_ids.push(segments[i].0.clone());
    }
    source.truncate(max_len.max(base + 2));
    (source, kept_ids)
}

/// Baseline task: source is the sentence, target is the gold entity labels
/// in textual order, SEP-separated and EOS-terminated. Links whose entity is
/// missing from the KG are skipped.
pub fn build_baseline_examples(
    sentences: &[AnnotatedSentence],
    index: &KgIndex,
    vocab: &Vocabulary,
) -> Vec<TrainExample> {
    sentences
        .iter()
        .map(|sent| {
            let source = vocab.encode(&sent.tokens);
            let mut target = Vec::new();
            let mut first = true;
            for link in &sent.links {
                let Some(entity) = index.entity(&link.qid) else { continue };
                if !first {
                    target.push(SEP);
                }
                first = false;
                target.extend(vocab.encode(&crate::vocab::tokenize(&entity.label)));
            }
            target.push(EOS);
            TrainExample { source, target }
        })
        .collect()
}

/// Corpus-level statistics reported by the preparation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub sentences: usize,
    pub mentions: usize,
    pub unique_entities: usize,
    /// Fraction of mentions whose normalized surface exactly matches some
    /// entity label in the index.
    pub exact_label_match_ratio: f64,
}

pub fn corpus_stats(sentences: &[AnnotatedSentence], index: &KgIndex) -> CorpusStats {
    let mut mentions = 0usize;
    let mut exact = 0usize;
    let mut entities: BTreeSet<&str> = BTreeSet::new();
    for sent in sentences {
        for link in &sent.links {
            mentions += 1;
            entities.insert(&link.qid);
            if index.label_to_id(&link.surface).is_some() {
                exact += 1;
            }
        }
    }
    CorpusStats {
        sentences: sentences.len(),
        mentions,
        unique_entities: entities.len(),
        exact_label_match_ratio: if mentions == 0 { 0.0 } else { exact as f64 / mentions as f64 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::EntityRecord;

    const S1: &str = "ASIC is an integrated circuit developed for particular use as opposed to a general-purpose device";

    fn ann(start: usize, end: usize, surface: &str, qid: &str) -> RawAnnotation {
        RawAnnotation { start, end, surface: surface.into(), qid: qid.into() }
    }

    #[test]
    fn s1_aligns_to_single_token_span() {
        let mut counts = ParseCounts::default();
        let sent = align_sentence(S1, &[ann(0, 4, "ASIC", "Q217302")], 25, &mut counts);
        assert_eq!(sent.links.len(), 1);
        let link = &sent.links[0];
        assert_eq!((link.start, link.end), (0, 1));
        assert_eq!(link.surface, "ASIC");
        assert_eq!(link.qid, "Q217302");
        assert_eq!(counts.kept, 1);
    }

    #[test]
    fn zero_annotation_record_keeps_empty_links() {
        let mut counts = ParseCounts::default();
        let sent = align_sentence("Nothing to see here", &[], 25, &mut counts);
        assert!(sent.links.is_empty());
        assert_eq!(sent.tokens.len(), 4);
    }

    #[test]
    fn misaligned_and_truncated_annotations_are_counted() {
        let text = "alpha beta gamma delta";
        let mut counts = ParseCounts::default();
        let sent = align_sentence(
            text,
            &[
                ann(0, 5, "alpha", "Q1"),
                ann(2, 5, "pha", "Q2"),        // start inside a token
                ann(6, 16, "beta gamma", "Q3"),
                ann(6, 10, "beta", "Q4"),      // overlaps the kept Q3 span
                ann(17, 22, "delta", "Q5"),    // beyond the 3-token cut
            ],
            3,
            &mut counts,
        );
        assert_eq!(counts.annotations_total, 5);
        assert_eq!(counts.kept, 2);
        assert_eq!(counts.dropped_misaligned, 2);
        assert_eq!(counts.dropped_truncated, 1);
        assert_eq!(
            counts.kept + counts.dropped_misaligned + counts.dropped_truncated,
            counts.annotations_total
        );
        assert_eq!(sent.tokens, ["alpha", "beta", "gamma"]);
        assert_eq!(sent.links.len(), 2);
    }

    #[test]
    fn span_conversion_matches_character_offset_oracle() {
        // Build text from known tokens so expected char offsets and spans
        // can be computed independently by accumulation.
        let tokens = ["one", "two", "three", "four", "five"];
        let text = tokens.join(" ");
        let mut starts = Vec::new();
        let mut pos = 0;
        for t in &tokens {
            starts.push(pos);
            pos += t.chars().count() + 1;
        }
        for (i, j) in [(0usize, 1usize), (1, 3), (2, 5), (4, 5)] {
            let start_char = starts[i];
            let end_char = starts[j - 1] + tokens[j - 1].chars().count();
            let mut counts = ParseCounts::default();
            let sent = align_sentence(
                &text,
                &[ann(start_char, end_char, "x", "Q1")],
                25,
                &mut counts,
            );
            assert_eq!(sent.links.len(), 1, "span ({i},{j})");
            assert_eq!((sent.links[0].start, sent.links[0].end), (i, j));
            assert_eq!(sent.links[0].surface, tokens[i..j].join(" "));
        }
    }

    #[test]
    fn parse_corpus_reports_malformed_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        std::fs::write(&path, "{\"text\": \"ok\", \"annotations\": []}\nnot json\n").unwrap();
        match parse_corpus(&path, 25).unwrap_err() {
            CorpusError::MalformedRecord { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(
            &path,
            "{\"text\": \"ok\", \"annotations\": [{\"start\":0,\"end\":2,\"surface\":\"ok\",\"qid\":\"bad\"}]}\n",
        )
        .unwrap();
        assert!(matches!(
            parse_corpus(&path, 25),
            Err(CorpusError::MalformedRecord { line: 1, .. })
        ));
    }

    #[test]
    fn split_is_deterministic_disjoint_exhaustive() {
        let items: Vec<usize> = (0..10).collect();
        let (train, test) = split_corpus(items.clone(), 0.8, 7).unwrap();
        assert_eq!(train.len(), 8);
        assert_eq!(test.len(), 2);
        let mut all: Vec<usize> = train.iter().chain(test.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, items);
        let (train2, test2) = split_corpus(items.clone(), 0.8, 7).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        assert!(split_corpus(items, 1.0, 7).is_err());
    }

    fn vocab_for(sentences: &[AnnotatedSentence]) -> Vocabulary {
        let tokens = sentences.iter().flat_map(|s| s.tokens.iter());
        Vocabulary::build(tokens, 1000, 1).unwrap()
    }

    #[test]
    fn extractor_targets_follow_sep_eos_format() {
        let mut counts = ParseCounts::default();
        let s1 = align_sentence(S1, &[ann(0, 4, "ASIC", "Q217302")], 25, &mut counts);
        let two = align_sentence(
            "alpha beta gamma",
            &[ann(0, 5, "alpha", "Q1"), ann(11, 16, "gamma", "Q2")],
            25,
            &mut counts,
        );
        let none = align_sentence("plain words", &[], 25, &mut counts);
        let sentences = vec![s1, two, none];
        let vocab = vocab_for(&sentences);
        let examples = build_extractor_examples(&sentences, &vocab);

        let asic = vocab.id_of("ASIC").unwrap();
        assert_eq!(examples[0].target, vec![asic, EOS]);

        let (a, g) = (vocab.id_of("alpha").unwrap(), vocab.id_of("gamma").unwrap());
        assert_eq!(examples[1].target, vec![a, SEP, g, EOS]);
        assert_eq!(examples[2].target, vec![EOS]);
        // Targets only contain source tokens, SEP, EOS.
        for (ex, sent) in examples.iter().zip(&sentences) {
            for id in &ex.target {
                assert!(*id == SEP || *id == EOS || ex.source.contains(id), "sentence {sent:?}");
            }
        }
    }

    fn mini_index() -> KgIndex {
        KgIndex::from_records([
            EntityRecord {
                id: "Q217302".into(),
                label: "application-specific integrated circuit".into(),
                aliases: vec!["ASIC".into(), "Custom Chip".into()],
            },
            EntityRecord { id: "Q1".into(), label: "alpha".into(), aliases: vec![] },
        ])
    }

    #[test]
    fn disambiguator_examples_inject_gold_when_missing() {
        let mut counts = ParseCounts::default();
        let sent = align_sentence("zork walks", &[ann(0, 4, "zork", "Q1")], 25, &mut counts);
        let vocab = Vocabulary::build(["zork", "alpha", "walks"], 100, 1).unwrap();
        let params = DisambParams { threshold: 0.85, candidate_limit: 8, max_source_len: 30 };
        let (examples, dcounts) = build_disambiguator_examples(
            std::slice::from_ref(&sent),
            &mini_index(),
            &vocab,
            &params,
            ExampleMode::Train,
        )
        .unwrap();
        assert_eq!(examples.len(), 1);
        // "zork" finds nothing; the gold label becomes the sole candidate.
        assert_eq!(examples[0].candidate_qids, vec!["Q1".to_string()]);
        assert_eq!(dcounts.gold_injected, 1);
        let alpha = vocab.id_of("alpha").unwrap();
        let zork = vocab.id_of("zork").unwrap();
        assert_eq!(examples[0].source, vec![zork, SEP, alpha]);
        assert_eq!(examples[0].target, vec![alpha, EOS]);

        // Evaluation mode never injects.
        let (eval_examples, _) = build_disambiguator_examples(
            &[sent],
            &mini_index(),
            &vocab,
            &params,
            ExampleMode::Eval,
        )
        .unwrap();
        assert!(eval_examples[0].candidate_qids.is_empty());
    }

    #[test]
    fn disambiguator_source_follows_walkthrough_shape() {
        let mut counts = ParseCounts::default();
        let sent = align_sentence(S1, &[ann(0, 4, "ASIC", "Q217302")], 25, &mut counts);
        let mut tokens: Vec<String> = sent.tokens.clone();
        tokens.extend(crate::vocab::tokenize(
            "application-specific integrated circuit",
        ));
        let vocab = Vocabulary::build(tokens.iter(), 1000, 1).unwrap();
        let params = DisambParams { threshold: 0.85, candidate_limit: 8, max_source_len: 40 };
        let (examples, _) = build_disambiguator_examples(
            &[sent],
            &mini_index(),
            &vocab,
            &params,
            ExampleMode::Train,
        )
        .unwrap();
        let ex = &examples[0];
        assert_eq!(ex.gold_qid, "Q217302");
        assert_eq!(ex.candidate_qids, vec!["Q217302".to_string()]);
        // source = surface ++ SEP ++ gold label tokens
        let asic = vocab.id_of("ASIC").unwrap();
        assert_eq!(ex.source[0], asic);
        assert_eq!(ex.source[1], SEP);
        let label_ids = vocab.encode(&crate::vocab::tokenize(
            "application-specific integrated circuit",
        ));
        assert_eq!(&ex.source[2..], label_ids.as_slice());
        let mut want_target = label_ids;
        want_target.push(EOS);
        assert_eq!(ex.target, want_target);
    }

    #[test]
    fn disambiguator_truncation_keeps_gold_segment() {
        // Many high-scoring candidates, tight budget: gold must survive.
        let records: Vec<EntityRecord> = (1..=9)
            .map(|i| EntityRecord {
                id: format!("Q{i}"),
                label: "shared name".into(),
                aliases: vec![],
            })
            .collect();
        let index = KgIndex::from_records(records);
        let mut counts = ParseCounts::default();
        let sent = align_sentence(
            "shared name here",
            &[ann(0, 11, "shared name", "Q9")],
            25,
            &mut counts,
        );
        let vocab = Vocabulary::build(["shared", "name", "here"], 100, 1).unwrap();
        // Budget fits surface (2) + two 3-id segments of (SEP + 2 tokens).
        let params = DisambParams { threshold: 0.85, candidate_limit: 16, max_source_len: 8 };
        let (examples, _) = build_disambiguator_examples(
            &[sent],
            &index,
            &vocab,
            &params,
            ExampleMode::Train,
        )
        .unwrap();
        let ex = &examples[0];
        assert!(ex.source.len() <= 8);
        assert!(ex.candidate_qids.contains(&"Q9".to_string()), "{:?}", ex.candidate_qids);
    }

    #[test]
    fn baseline_targets_are_label_sequences() {
        let mut counts = ParseCounts::default();
        let sent = align_sentence("alpha beta", &[ann(0, 5, "alpha", "Q1")], 25, &mut counts);
        let vocab = Vocabulary::build(["alpha", "beta"], 100, 1).unwrap();
        let examples = build_baseline_examples(&[sent], &mini_index(), &vocab);
        let alpha = vocab.id_of("alpha").unwrap();
        assert_eq!(examples[0].target, vec![alpha, EOS]);
    }

    #[test]
    fn stats_count_mentions_and_exact_matches() {
        let mut counts = ParseCounts::default();
        let s1 = align_sentence("alpha beta", &[ann(0, 5, "alpha", "Q1")], 25, &mut counts);
        let s2 = align_sentence("ASIC here", &[ann(0, 4, "ASIC", "Q217302")], 25, &mut counts);
        let stats = corpus_stats(&[s1, s2], &mini_index());
        assert_eq!(stats.sentences, 2);
        assert_eq!(stats.mentions, 2);
        assert_eq!(stats.unique_entities, 2);
        // "alpha" matches a label exactly; "ASIC" only matches an alias.
        assert!((stats.exact_label_match_ratio - 0.5).abs() < 1e-12);
    }
}
