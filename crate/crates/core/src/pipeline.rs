//! End-to-end linking: surface-form extraction, candidate generation from
//! the local KG, and disambiguation. A loaded pipeline is immutable and safe
//! for concurrent `link_text` calls.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::assemble_source;
use crate::kg::{CandidateHit, KgError, KgIndex};
use crate::seq2seq::{Seq2SeqError, Seq2SeqModel};
use crate::vocab::{tokenize, VocabError, Vocabulary, PAD, SEP, SOS};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Seq2Seq(#[from] Seq2SeqError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error("missing artifact: {path}")]
    MissingArtifact { path: String },
    #[error("checkpoint {path} was trained with a different vocabulary (hash {found:x}, vocabulary file has {expected:x})")]
    VocabMismatch { path: String, expected: u64, found: u64 },
    #[error("checkpoint {path} holds a '{found}' model, expected '{expected}'")]
    WrongTask { path: String, expected: String, found: String },
    #[error("threshold must be in (0, 1], got {0}")]
    BadThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineMode {
    /// Extraction, candidate generation, and neural disambiguation.
    Full,
    /// Ablation: extraction plus top-scored candidate, no disambiguator.
    TopCandidate,
    /// End-to-end model decoding entity labels straight from text.
    Baseline,
}

/// Everything needed to load a runnable pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub index_path: PathBuf,
    pub vocab_path: PathBuf,
    pub extractor_checkpoint: Option<PathBuf>,
    pub disambiguator_checkpoint: Option<PathBuf>,
    pub baseline_checkpoint: Option<PathBuf>,
    pub mode: PipelineMode,
    pub threshold: f64,
    pub candidate_limit: usize,
    pub max_sentence_tokens: usize,
}

/// One predicted link. `start`/`end` are token indices when the decoded
/// surface form was recovered in the source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkPrediction {
    pub surface: String,
    pub start: Option<usize>,
    pub end: Option<usize>,
    pub qid: String,
    pub candidate_score: f64,
    pub decode_score: f64,
}

/// JSON-lines record emitted for each input text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub text: String,
    pub predictions: Vec<LinkPrediction>,
}

/// A decoded surface form, with its token span when recoverable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurfaceForm {
    pub surface: String,
    pub span: Option<(usize, usize)>,
}

/// Splits decoder output on SEP and matches each segment back to the
/// leftmost unused occurrence of its token subsequence in the source.
/// Segments without a source occurrence keep a None span (the decoder may
/// have rewritten tokens, e.g. to UNK).
pub fn extract_surface_forms(
    extractor: &Seq2SeqModel,
    vocab: &Vocabulary,
    tokens: &[String],
) -> Result<Vec<SurfaceForm>, PipelineError> {
    if tokens.is_empty() {
        return Ok(Vec::new());
    }
    let source = vocab.encode(tokens);
    let decoded = extractor.greedy_decode(&source)?;
    let mut used = vec![false; source.len()];
    let mut forms = Vec::new();
    for segment in decoded.ids.split(|&id| id == SEP) {
        let segment: Vec<usize> = segment
            .iter()
            .copied()
            .filter(|&id| id != PAD && id != SOS)
            .collect();
        if segment.is_empty() {
            continue;
        }
        match leftmost_unused_span(&source, &segment, &mut used) {
            Some((start, end)) => forms.push(SurfaceForm {
                surface: tokens[start..end].join(" "),
                span: Some((start, end)),
            }),
            None => forms.push(SurfaceForm {
                surface: vocab.decode(&segment)?.join(" "),
                span: None,
            }),
        }
    }
    Ok(forms)
}

/// Finds the leftmost occurrence of `segment` in `source` that does not
/// overlap positions already claimed, and claims it.
pub(crate) fn leftmost_unused_span(
    source: &[usize],
    segment: &[usize],
    used: &mut [bool],
) -> Option<(usize, usize)> {
    if segment.is_empty() || segment.len() > source.len() {
        return None;
    }
    'outer: for start in 0..=source.len() - segment.len() {
        for (offset, want) in segment.iter().enumerate() {
            if source[start + offset] != *want || used[start + offset] {
                continue 'outer;
            }
        }
        for flag in &mut used[start..start + segment.len()] {
            *flag = true;
        }
        return Some((start, start + segment.len()));
    }
    None
}

/// Task 2: scored candidates for a surface form, straight from the index.
pub fn generate_candidates(
    index: &KgIndex,
    surface: &str,
    threshold: f64,
    limit: usize,
) -> Result<Vec<CandidateHit>, PipelineError> {
    Ok(index.search(surface, threshold, limit)?)
}

/// Task 3. Empty candidate lists yield None; a single candidate is returned
/// directly; otherwise the model decodes an entity label which is mapped
/// back to an id. Decodes that map to nothing (or to an id outside the
/// candidate list) fall back to the highest-scored candidate.
pub fn disambiguate(
    disambiguator: &Seq2SeqModel,
    vocab: &Vocabulary,
    index: &KgIndex,
    surface: &str,
    candidates: &[CandidateHit],
) -> Result<Option<(String, f64)>, PipelineError> {
    match candidates {
        [] => Ok(None),
        [only] => Ok(Some((only.id.clone(), 0.0))),
        _ => {
            let surface_ids = vocab.encode(&tokenize(surface));
            let segments: Vec<(String, Vec<usize>)> = candidates
                .iter()
                .filter_map(|hit| {
                    index
                        .entity(&hit.id)
                        .map(|e| (hit.id.clone(), vocab.encode(&tokenize(&e.label))))
                })
                .collect();
            let max_len = disambiguator.config().max_source_len;
            let (source, _) = assemble_source(&surface_ids, &segments, max_len, None);
            let decoded = disambiguator.greedy_decode(&source)?;
            let label = vocab.decode(&decoded.ids)?.join(" ");
            let mapped = index
                .label_to_id(&label)
                .filter(|id| candidates.iter().any(|hit| &hit.id == id))
                .map(str::to_string);
            let chosen = mapped.unwrap_or_else(|| candidates[0].id.clone());
            Ok(Some((chosen, decoded.mean_log_prob)))
        }
    }
}

/// Runtime knobs shared by every mode.
#[derive(Debug, Clone, Copy)]
pub struct PipelineSettings {
    pub mode: PipelineMode,
    pub threshold: f64,
    pub candidate_limit: usize,
    pub max_sentence_tokens: usize,
}

/// A fully loaded, immutable pipeline.
pub struct Pipeline {
    vocab: Vocabulary,
    index: KgIndex,
    extractor: Option<Seq2SeqModel>,
    disambiguator: Option<Seq2SeqModel>,
    baseline: Option<Seq2SeqModel>,
    mode: PipelineMode,
    threshold: f64,
    candidate_limit: usize,
    max_sentence_tokens: usize,
}

impl Pipeline {
    /// Loads index, vocabulary, and the checkpoints the mode needs,
    /// validating vocabulary hashes and task tags.
    pub fn load(config: &PipelineConfig) -> Result<Self, PipelineError> {
        if !(config.threshold > 0.0 && config.threshold <= 1.0) {
            return Err(PipelineError::BadThreshold(config.threshold));
        }
        let vocab = Vocabulary::load(&require(&config.vocab_path)?)?;
        let index = KgIndex::load(&require(&config.index_path)?)?;
        let load_model = |path: &Option<PathBuf>, task: &str| -> Result<Option<Seq2SeqModel>, PipelineError> {
            let Some(path) = path else { return Ok(None) };
            let path = require(path)?;
            let (model, found_task) = Seq2SeqModel::load(&path)?;
            if found_task != task {
                return Err(PipelineError::WrongTask {
                    path: path.display().to_string(),
                    expected: task.to_string(),
                    found: found_task,
                });
            }
            if model.vocab_hash() != vocab.hash() {
                return Err(PipelineError::VocabMismatch {
                    path: path.display().to_string(),
                    expected: vocab.hash(),
                    found: model.vocab_hash(),
                });
            }
            Ok(Some(model))
        };
        let extractor = load_model(&config.extractor_checkpoint, "extractor")?;
        let disambiguator = load_model(&config.disambiguator_checkpoint, "disambiguator")?;
        let baseline = load_model(&config.baseline_checkpoint, "baseline")?;
        let missing = |what: &str| PipelineError::MissingArtifact { path: what.to_string() };
        match config.mode {
            PipelineMode::Full => {
                if extractor.is_none() {
                    return Err(missing("extractor checkpoint (required by mode full)"));
                }
                if disambiguator.is_none() {
                    return Err(missing("disambiguator checkpoint (required by mode full)"));
                }
            }
            PipelineMode::TopCandidate => {
                if extractor.is_none() {
                    return Err(missing("extractor checkpoint (required by mode top-candidate)"));
                }
            }
            PipelineMode::Baseline => {
                if baseline.is_none() {
                    return Err(missing("baseline checkpoint (required by mode baseline)"));
                }
            }
        }
        Ok(Pipeline {
            vocab,
            index,
            extractor,
            disambiguator,
            baseline,
            mode: config.mode,
            threshold: config.threshold,
            candidate_limit: config.candidate_limit,
            max_sentence_tokens: config.max_sentence_tokens,
        })
    }

    /// Builds a pipeline from in-memory parts (used by tests and the
    /// training flow).
    pub fn from_parts(
        vocab: Vocabulary,
        index: KgIndex,
        extractor: Option<Seq2SeqModel>,
        disambiguator: Option<Seq2SeqModel>,
        baseline: Option<Seq2SeqModel>,
        settings: PipelineSettings,
    ) -> Self {
        Pipeline {
            vocab,
            index,
            extractor,
            disambiguator,
            baseline,
            mode: settings.mode,
            threshold: settings.threshold,
            candidate_limit: settings.candidate_limit,
            max_sentence_tokens: settings.max_sentence_tokens,
        }
    }

    pub fn index(&self) -> &KgIndex {
        &self.index
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Tokenizes, truncates to the sentence limit, and runs the configured
    /// stages. One prediction per surface form that survives disambiguation;
    /// deterministic for identical artifacts and text.
    pub fn link_text(&self, text: &str) -> Result<Vec<LinkPrediction>, PipelineError> {
        let mut tokens = tokenize(text);
        tokens.truncate(self.max_sentence_tokens);
        if tokens.is_empty() {
            return Ok(Vec::new());
        }
        match self.mode {
            PipelineMode::Baseline => self.link_baseline(&tokens),
            PipelineMode::Full | PipelineMode::TopCandidate => self.link_staged(&tokens),
        }
    }

    fn link_staged(&self, tokens: &[String]) -> Result<Vec<LinkPrediction>, PipelineError> {
        let extractor = self.extractor.as_ref().expect("validated at load");
        let forms = extract_surface_forms(extractor, &self.vocab, tokens)?;
        let mut predictions = Vec::new();
        for form in forms {
            let candidates =
                generate_candidates(&self.index, &form.surface, self.threshold, self.candidate_limit)?;
            if candidates.is_empty() {
                continue;
            }
            let (qid, decode_score) = match self.mode {
                PipelineMode::TopCandidate => (candidates[0].id.clone(), 0.0),
                _ => {
                    let disambiguator = self.disambiguator.as_ref().expect("validated at load");
                    match disambiguate(disambiguator, &self.vocab, &self.index, &form.surface, &candidates)? {
                        Some(result) => result,
                        None => continue,
                    }
                }
            };
            let candidate_score = candidates
                .iter()
                .find(|hit| hit.id == qid)
                .map(|hit| hit.score)
                .unwrap_or(0.0);
            predictions.push(LinkPrediction {
                surface: form.surface,
                start: form.span.map(|(s, _)| s),
                end: form.span.map(|(_, e)| e),
                qid,
                candidate_score,
                decode_score,
            });
        }
        Ok(predictions)
    }

    /// Baseline mode: the model decodes SEP-separated entity labels directly
    /// from the sentence; labels are mapped to ids by exact normalized
    /// lookup, unmappable segments are dropped.
    fn link_baseline(&self, tokens: &[String]) -> Result<Vec<LinkPrediction>, PipelineError> {
        let model = self.baseline.as_ref().expect("validated at load");
        let source = self.vocab.encode(tokens);
        let decoded = model.greedy_decode(&source)?;
        let mut predictions = Vec::new();
        for segment in decoded.ids.split(|&id| id == SEP) {
            let segment: Vec<usize> = segment
                .iter()
                .copied()
                .filter(|&id| id != PAD && id != SOS)
                .collect();
            if segment.is_empty() {
                continue;
            }
            let label = self.vocab.decode(&segment)?.join(" ");
            let Some(qid) = self.index.label_to_id(&label) else { continue };
            predictions.push(LinkPrediction {
                surface: label,
                start: None,
                end: None,
                qid: qid.to_string(),
                candidate_score: 1.0,
                decode_score: decoded.mean_log_prob,
            });
        }
        Ok(predictions)
    }
}

fn require(path: &Path) -> Result<PathBuf, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::MissingArtifact { path: path.display().to_string() });
    }
    Ok(path.to_path_buf())
}
