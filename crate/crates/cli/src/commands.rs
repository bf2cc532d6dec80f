//! Command implementations. Every artifact is written atomically
//! (write-then-rename) and every command echoes its effective config to
//! stderr.

use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use elink_core::corpus::{
    build_baseline_examples, build_disambiguator_examples, build_extractor_examples,
    corpus_stats, parse_corpus, split_corpus, AnnotatedSentence, CorpusError, DisambExample,
    DisambParams, ExampleMode, RawAnnotation, RawRecord,
};
use elink_core::embed::{EmbedError, EmbeddingTable};
use elink_core::eval::{aggregate, match_all, render_table, GoldSpec};
use elink_core::kg::{escape_alias, KgError, KgIndex};
use elink_core::pipeline::{
    Pipeline, PipelineConfig, PipelineError, PipelineMode, PredictionRecord,
};
use elink_core::seq2seq::{ModelConfig, Seq2SeqError, Seq2SeqModel, TrainExample, TrainOptions};
use elink_core::util::atomic_write;
use elink_core::vocab::{tokenize, VocabError, Vocabulary};

use crate::config::{Overrides, RunConfig};

/// Maps error types onto the documented exit codes: 2 input-format,
/// 3 missing artifact, 4 config error (1 for anything else).
pub fn classify_exit(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<PipelineError>() {
            return match e {
                PipelineError::MissingArtifact { .. } => 3,
                PipelineError::BadThreshold(_)
                | PipelineError::VocabMismatch { .. }
                | PipelineError::WrongTask { .. } => 4,
                _ => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<CorpusError>() {
            return match e {
                CorpusError::BadRatio(_) => 4,
                CorpusError::Io { source, .. }
                    if source.kind() == std::io::ErrorKind::NotFound =>
                {
                    3
                }
                _ => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<KgError>() {
            return match e {
                KgError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 3,
                _ => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<Seq2SeqError>() {
            return match e {
                Seq2SeqError::Io { source, .. }
                    if source.kind() == std::io::ErrorKind::NotFound =>
                {
                    3
                }
                _ => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<EmbedError>() {
            return match e {
                EmbedError::Io { source, .. }
                    if source.kind() == std::io::ErrorKind::NotFound =>
                {
                    3
                }
                _ => 2,
            };
        }
        if cause.downcast_ref::<VocabError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<std::io::Error>() {
            return if e.kind() == std::io::ErrorKind::NotFound { 3 } else { 2 };
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return 2;
        }
        if cause.downcast_ref::<ConfigProblem>().is_some() {
            return 4;
        }
    }
    1
}

/// Marker for configuration mistakes (unknown keys, missing paths).
#[derive(Debug)]
pub struct ConfigProblem(pub String);

impl std::fmt::Display for ConfigProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigProblem {}

pub fn build_index(dump: &Path, out: &Path) -> anyhow::Result<()> {
    let index = KgIndex::ingest_dump(dump)?;
    index.save(out)?;
    println!(
        "entities {}  strings {}  postings {}  skipped_no_label {}  duplicate_ids {}",
        index.entity_count(),
        index.string_count(),
        index.posting_count(),
        index.counts().skipped_no_label,
        index.counts().duplicate_ids,
    );
    Ok(())
}

pub fn prepare(corpus_path: &Path, index_path: &Path, out: &Path, overrides: &Overrides) -> anyhow::Result<()> {
    let config = resolve(overrides)?;
    let index = KgIndex::load(index_path)?;
    let (sentences, parse_counts) = parse_corpus(corpus_path, config.max_sentence_tokens)?;
    let stats = corpus_stats(&sentences, &index);
    let (train, test) = split_corpus(sentences, config.split_ratio, config.seed)?;

    // The vocabulary covers sentence tokens plus the labels of every entity
    // that can appear in a disambiguation example (candidates and golds).
    let mut tokens: Vec<String> = Vec::new();
    for sent in train.iter().chain(&test) {
        tokens.extend(sent.tokens.iter().cloned());
        for link in &sent.links {
            if let Some(gold) = index.entity(&link.qid) {
                tokens.extend(tokenize(&gold.label));
            }
            for hit in index.search(&link.surface, config.threshold, config.candidate_limit)? {
                if let Some(entity) = index.entity(&hit.id) {
                    tokens.extend(tokenize(&entity.label));
                }
            }
        }
    }
    let vocab = Vocabulary::build(tokens.iter(), config.max_vocab, config.min_count)?;

    std::fs::create_dir_all(out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    vocab.save(&out.join("vocab.txt"))?;

    let params = DisambParams {
        threshold: config.threshold,
        candidate_limit: config.candidate_limit,
        max_source_len: config.max_disamb_source,
    };
    let (train_disamb, train_counts) =
        build_disambiguator_examples(&train, &index, &vocab, &params, ExampleMode::Train)?;
    let (test_disamb, test_counts) =
        build_disambiguator_examples(&test, &index, &vocab, &params, ExampleMode::Eval)?;

    write_jsonl(&out.join("train_extractor.jsonl"), &build_extractor_examples(&train, &vocab))?;
    write_jsonl(&out.join("test_extractor.jsonl"), &build_extractor_examples(&test, &vocab))?;
    write_jsonl(&out.join("train_disambiguator.jsonl"), &train_disamb)?;
    write_jsonl(&out.join("test_disambiguator.jsonl"), &test_disamb)?;
    write_jsonl(&out.join("train_baseline.jsonl"), &build_baseline_examples(&train, &index, &vocab))?;
    write_jsonl(&out.join("test_baseline.jsonl"), &build_baseline_examples(&test, &index, &vocab))?;
    write_jsonl(&out.join("train_gold.jsonl"), &gold_records(&train))?;
    write_jsonl(&out.join("test_gold.jsonl"), &gold_records(&test))?;

    let stats_doc = serde_json::json!({
        "parse": parse_counts,
        "corpus": stats,
        "train_sentences": train.len(),
        "test_sentences": test.len(),
        "train_disambiguator": train_counts,
        "test_disambiguator": test_counts,
        "vocabulary_size": vocab.len(),
    });
    atomic_write(&out.join("stats.json"), format!("{stats_doc:#}\n").as_bytes())?;
    config.echo();
    println!(
        "sentences {} (train {} / test {})  mentions {}  vocab {}",
        parse_counts.sentences,
        train.len(),
        test.len(),
        stats.mentions,
        vocab.len()
    );
    Ok(())
}

/// Rebuilds corpus records (joined tokens, recomputed char offsets) for the
/// gold files so evaluate consumes the same format prepare reads.
fn gold_records(sentences: &[AnnotatedSentence]) -> Vec<RawRecord> {
    sentences
        .iter()
        .map(|sent| {
            let mut starts = Vec::with_capacity(sent.tokens.len());
            let mut pos = 0;
            for tok in &sent.tokens {
                starts.push(pos);
                pos += tok.chars().count() + 1;
            }
            let annotations = sent
                .links
                .iter()
                .map(|link| RawAnnotation {
                    start: starts[link.start],
                    end: starts[link.end - 1] + sent.tokens[link.end - 1].chars().count(),
                    surface: link.surface.clone(),
                    qid: link.qid.clone(),
                })
                .collect();
            RawRecord { text: sent.tokens.join(" "), annotations }
        })
        .collect()
}

pub fn train(
    task: &str,
    data: &Path,
    out: &Path,
    embeddings: Option<&Path>,
    overrides: &Overrides,
) -> anyhow::Result<()> {
    let config = resolve(overrides)?;
    let vocab = Vocabulary::load(&data.join("vocab.txt"))?;
    let embedding = match embeddings {
        Some(path) => {
            let (table, coverage) =
                EmbeddingTable::load_pretrained(path, &vocab, config.embed_dim, config.seed)?;
            eprintln!(
                "embeddings: {}/{} vocabulary words covered ({:.1}%)",
                coverage.matched,
                coverage.vocabulary_words,
                coverage.ratio() * 100.0
            );
            table
        }
        None => EmbeddingTable::random(&vocab, config.embed_dim, config.seed),
    };

    let (examples, max_source_len) = match task {
        "extractor" => (read_examples(&data.join("train_extractor.jsonl"))?, config.max_sentence_tokens),
        "baseline" => (read_examples(&data.join("train_baseline.jsonl"))?, config.max_sentence_tokens),
        "disambiguator" => {
            let disamb: Vec<DisambExample> = read_jsonl(&data.join("train_disambiguator.jsonl"))?;
            let examples = disamb
                .into_iter()
                .map(|d| TrainExample { source: d.source, target: d.target })
                .collect();
            (examples, config.max_disamb_source)
        }
        other => bail!(ConfigProblem(format!("unknown task '{other}'"))),
    };

    let model_config = ModelConfig {
        embed_dim: config.embed_dim,
        hidden: config.hidden,
        vocab_size: vocab.len(),
        max_source_len,
        max_decode_len: config.max_decode_len,
    };
    let mut model = Seq2SeqModel::new(model_config, embedding, vocab.hash(), config.seed)?;
    let opts = TrainOptions {
        epochs: config.epochs,
        adam: config.adam(),
        seed: config.seed,
        shuffle: true,
    };
    let trace = model.train(&examples, &opts)?;
    model.save(task, out)?;
    let trace_path = loss_trace_path(out);
    atomic_write(
        &trace_path,
        serde_json::to_string_pretty(&trace)
            .expect("trace serializes")
            .as_bytes(),
    )?;
    config.echo();
    println!(
        "trained {task} on {} examples for {} epochs, final loss {:.6}",
        examples.len(),
        trace.len(),
        trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn loss_trace_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".loss.json");
    PathBuf::from(s)
}

pub struct LinkPaths {
    pub index: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub extractor: Option<PathBuf>,
    pub disambiguator: Option<PathBuf>,
    pub baseline: Option<PathBuf>,
    pub mode: Option<String>,
}

pub fn link(paths: LinkPaths, overrides: &Overrides) -> anyhow::Result<()> {
    let mut config = resolve(overrides)?;
    if let Some(p) = paths.index {
        config.index_path = Some(p);
    }
    if let Some(p) = paths.vocab {
        config.vocab_path = Some(p);
    }
    if let Some(p) = paths.extractor {
        config.extractor_checkpoint = Some(p);
    }
    if let Some(p) = paths.disambiguator {
        config.disambiguator_checkpoint = Some(p);
    }
    if let Some(p) = paths.baseline {
        config.baseline_checkpoint = Some(p);
    }
    if let Some(mode) = &paths.mode {
        config.mode = match mode.as_str() {
            "full" => PipelineMode::Full,
            "top-candidate" => PipelineMode::TopCandidate,
            "baseline" => PipelineMode::Baseline,
            other => bail!(ConfigProblem(format!("unknown mode '{other}'"))),
        };
    }
    let pipeline_config = PipelineConfig {
        index_path: config
            .index_path
            .clone()
            .ok_or_else(|| ConfigProblem("index_path is required".into()))?,
        vocab_path: config
            .vocab_path
            .clone()
            .ok_or_else(|| ConfigProblem("vocab_path is required".into()))?,
        extractor_checkpoint: config.extractor_checkpoint.clone(),
        disambiguator_checkpoint: config.disambiguator_checkpoint.clone(),
        baseline_checkpoint: config.baseline_checkpoint.clone(),
        mode: config.mode,
        threshold: config.threshold,
        candidate_limit: config.candidate_limit,
        max_sentence_tokens: config.max_sentence_tokens,
    };
    let pipeline = Pipeline::load(&pipeline_config)?;
    config.echo();

    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    for line in stdin.lock().lines() {
        let text = line.context("reading standard input")?;
        let predictions = pipeline.link_text(&text)?;
        let record = PredictionRecord { text, predictions };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn evaluate(
    gold: &Path,
    pred: &Path,
    out: Option<&Path>,
    method: &str,
    overrides: &Overrides,
) -> anyhow::Result<()> {
    let config = resolve(overrides)?;
    let (sentences, _) = parse_corpus(gold, config.max_sentence_tokens)?;
    let records: Vec<PredictionRecord> = read_jsonl(pred)?;
    if sentences.len() != records.len() {
        bail!(
            "sentence count mismatch: gold {} has {} sentences, predictions {} has {}",
            gold.display(),
            sentences.len(),
            pred.display(),
            records.len()
        );
    }
    let pairs: Vec<(Vec<GoldSpec>, Vec<elink_core::pipeline::LinkPrediction>)> = sentences
        .iter()
        .zip(records)
        .map(|(sent, record)| {
            let gold_specs = sent.links.iter().map(GoldSpec::from).collect();
            (gold_specs, record.predictions)
        })
        .collect();
    let counts = match_all(&pairs);
    let report = aggregate(counts.iter());
    config.echo();
    print!(
        "{}",
        render_table(&[(method, report.precision, report.recall, report.f_score)])
    );
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match out {
        Some(path) => atomic_write(path, format!("{json}\n").as_bytes())?,
        None => println!("{json}"),
    }
    Ok(())
}

pub fn convert_dump(input: &Path, out: &Path) -> anyhow::Result<()> {
    let file = std::fs::File::open(input)
        .with_context(|| format!("opening {}", input.display()))?;
    let reader = std::io::BufReader::new(file);
    let mut lines_out = String::new();
    let mut written = 0u64;
    let mut skipped = 0u64;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim().trim_end_matches(',');
        if trimmed.is_empty() || trimmed == "[" || trimmed == "]" {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(trimmed)
            .with_context(|| format!("line {}: invalid JSON entity", i + 1))?;
        let Some(record) = wikidata_entity_to_record(&value) else {
            skipped += 1;
            continue;
        };
        lines_out.push_str(&record);
        lines_out.push('\n');
        written += 1;
    }
    atomic_write(out, lines_out.as_bytes())?;
    println!("written {written}  skipped {skipped}");
    Ok(())
}

/// `{"type": "item", "id": "Q...", "labels": {"en": {"value": ...}},
/// "aliases": {"en": [{"value": ...}]}}` to one dump line. Non-items and
/// entities without an English label yield None.
fn wikidata_entity_to_record(value: &serde_json::Value) -> Option<String> {
    if value.get("type").and_then(|t| t.as_str()) != Some("item") {
        return None;
    }
    let id = value.get("id")?.as_str()?;
    if !elink_core::kg::is_qid(id) {
        return None;
    }
    let label = value
        .get("labels")?
        .get("en")?
        .get("value")?
        .as_str()?
        .replace(['\t', '\n'], " ");
    if label.is_empty() {
        return None;
    }
    let aliases: Vec<String> = value
        .get("aliases")
        .and_then(|a| a.get("en"))
        .and_then(|en| en.as_array())
        .map(|list| {
            list.iter()
                .filter_map(|v| v.get("value").and_then(|s| s.as_str()))
                .map(|s| escape_alias(&s.replace(['\t', '\n'], " ")))
                .collect()
        })
        .unwrap_or_default();
    Some(format!("{id}\t{label}\t{}", aliases.join("|")))
}

pub fn convert_corpus(input: &Path, out: &Path) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(input)
        .with_context(|| format!("reading {}", input.display()))?;
    let documents: Vec<serde_json::Value> = if text.trim_start().starts_with('[') {
        serde_json::from_str(&text).context("parsing document array")?
    } else {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str(l).with_context(|| format!("line {}: invalid JSON", i + 1))
            })
            .collect::<anyhow::Result<_>>()?
    };
    let mut out_lines = String::new();
    let mut sentences = 0u64;
    let mut annotations = 0u64;
    for doc in &documents {
        for record in document_to_records(doc) {
            sentences += 1;
            annotations += record.annotations.len() as u64;
            out_lines.push_str(&serde_json::to_string(&record).expect("record serializes"));
            out_lines.push('\n');
        }
    }
    atomic_write(out, out_lines.as_bytes())?;
    println!("sentences {sentences}  annotations {annotations}");
    Ok(())
}

/// Splits one aligned document ({"text", "entities": [{uri|qid, boundaries,
/// surfaceform|surface}], "sentences_boundaries": [[s, e]]}) into per-sentence
/// records with rebased character offsets. Entities with null or out-of-
/// sentence boundaries are dropped.
fn document_to_records(doc: &serde_json::Value) -> Vec<RawRecord> {
    let Some(text) = doc.get("text").and_then(|t| t.as_str()) else {
        return Vec::new();
    };
    let chars: Vec<char> = text.chars().collect();
    let boundaries: Vec<(usize, usize)> = doc
        .get("sentences_boundaries")
        .and_then(|b| b.as_array())
        .map(|list| {
            list.iter()
                .filter_map(|pair| {
                    let pair = pair.as_array()?;
                    Some((pair.first()?.as_u64()? as usize, pair.get(1)?.as_u64()? as usize))
                })
                .collect()
        })
        .unwrap_or_else(|| vec![(0, chars.len())]);
    let entities: Vec<(usize, usize, String, String)> = doc
        .get("entities")
        .and_then(|e| e.as_array())
        .map(|list| {
            list.iter()
                .filter_map(|entity| {
                    let bounds = entity.get("boundaries")?.as_array()?;
                    let start = bounds.first()?.as_u64()? as usize;
                    let end = bounds.get(1)?.as_u64()? as usize;
                    let qid = entity
                        .get("qid")
                        .and_then(|q| q.as_str())
                        .map(str::to_string)
                        .or_else(|| {
                            let uri = entity.get("uri")?.as_str()?;
                            Some(uri.rsplit('/').next()?.to_string())
                        })?;
                    if !elink_core::kg::is_qid(&qid) {
                        return None;
                    }
                    let surface = entity
                        .get("surfaceform")
                        .or_else(|| entity.get("surface"))
                        .and_then(|s| s.as_str())
                        .unwrap_or_default()
                        .to_string();
                    Some((start, end, surface, qid))
                })
                .collect()
        })
        .unwrap_or_default();

    boundaries
        .iter()
        .filter_map(|&(s_start, s_end)| {
            if s_start >= s_end || s_end > chars.len() {
                return None;
            }
            let sentence: String = chars[s_start..s_end].iter().collect();
            let annotations: Vec<RawAnnotation> = entities
                .iter()
                .filter(|(a_start, a_end, _, _)| *a_start >= s_start && *a_end <= s_end)
                .map(|(a_start, a_end, surface, qid)| RawAnnotation {
                    start: a_start - s_start,
                    end: a_end - s_start,
                    surface: surface.clone(),
                    qid: qid.clone(),
                })
                .collect();
            Some(RawRecord { text: sentence, annotations })
        })
        .collect()
}

fn resolve(overrides: &Overrides) -> anyhow::Result<RunConfig> {
    overrides.resolve().map_err(|e| {
        // Config-file problems are exit code 4.
        anyhow::Error::new(ConfigProblem(format!("{e:#}")))
    })
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> anyhow::Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line)
                .with_context(|| format!("{}: line {}", path.display(), i + 1))
        })
        .collect()
}

fn read_examples(path: &Path) -> anyhow::Result<Vec<TrainExample>> {
    read_jsonl(path)
}
