//! Local knowledge graph: entity labels and aliases as indexed documents,
//! answering scored candidate queries for surface forms.
//!
//! Scoring is the max of a token-overlap Dice coefficient and a normalized
//! edit similarity, both on normalized strings, so an exact normalized match
//! scores exactly 1.0 and the scale is [0, 1].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::util::atomic_write;

#[derive(Debug, Error)]
pub enum KgError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("surface form is empty")]
    EmptySurface,
    #[error("invalid index file {path}: {reason}")]
    InvalidIndex { path: String, reason: String },
}

/// One KG entity: a Q-prefixed identifier, its canonical English label, and
/// any aliases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: String,
    pub label: String,
    pub aliases: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchKind {
    Label,
    Alias,
}

/// Scored (entity, matched string) result of a candidate search.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateHit {
    pub id: String,
    pub matched: String,
    pub kind: MatchKind,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Posting {
    id_num: u64,
    kind: MatchKind,
    text: String,
}

/// Ingest bookkeeping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestCounts {
    pub skipped_no_label: u64,
    pub duplicate_ids: u64,
}

/// Immutable alias index over entity records. Construction is single-writer;
/// reads are lock-free and safe to share across threads.
#[derive(Debug)]
pub struct KgIndex {
    entities: BTreeMap<u64, EntityRecord>,
    /// Sorted normalized strings.
    keys: Vec<String>,
    /// Postings parallel to `keys`, each sorted by (id, kind, text).
    postings: Vec<Vec<Posting>>,
    key_ids: HashMap<String, u32>,
    token_index: HashMap<String, Vec<u32>>,
    by_len: BTreeMap<usize, Vec<u32>>,
    counts: IngestCounts,
}

/// Unicode-normalizes (NFKC), lowercases, strips punctuation to single
/// spaces, and collapses whitespace. Pure and idempotent.
pub fn normalize(s: &str) -> String {
    let folded: String = s.nfkc().collect::<String>().to_lowercase();
    let spaced: String = folded
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    spaced.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Levenshtein distance over Unicode scalars.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            curr[j + 1] = sub.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// 1 - editDistance / max(len), on chars of normalized strings.
pub fn edit_similarity(a: &str, b: &str) -> f64 {
    let max_len = a.chars().count().max(b.chars().count());
    if max_len == 0 {
        return 1.0;
    }
    1.0 - edit_distance(a, b) as f64 / max_len as f64
}

fn token_counts(s: &str) -> BTreeMap<&str, usize> {
    let mut m: BTreeMap<&str, usize> = BTreeMap::new();
    for tok in s.split_whitespace() {
        *m.entry(tok).or_insert(0) += 1;
    }
    m
}

/// Dice coefficient over token multisets: 2|A∩B| / (|A|+|B|).
pub fn dice_tokens(a: &str, b: &str) -> f64 {
    let (ca, cb) = (token_counts(a), token_counts(b));
    let total_a: usize = ca.values().sum();
    let total_b: usize = cb.values().sum();
    if total_a + total_b == 0 {
        return 0.0;
    }
    let inter: usize = ca
        .iter()
        .map(|(tok, n)| n.min(cb.get(tok).unwrap_or(&0)))
        .sum();
    2.0 * inter as f64 / (total_a + total_b) as f64
}

/// The index's string-pair score: max of Dice and edit similarity.
pub fn similarity(query_norm: &str, candidate_norm: &str) -> f64 {
    dice_tokens(query_norm, candidate_norm).max(edit_similarity(query_norm, candidate_norm))
}

fn parse_id_num(id: &str) -> Option<u64> {
    let digits = id.strip_prefix('Q')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Whether a string is a well-formed entity id (`Q` followed by digits).
pub fn is_qid(id: &str) -> bool {
    parse_id_num(id).is_some()
}

/// Splits an alias field on unescaped `|`; `\|` is a literal pipe and `\\` a
/// literal backslash.
fn split_aliases(field: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some('|') => cur.push('|'),
                Some('\\') => cur.push('\\'),
                Some(other) => {
                    cur.push('\\');
                    cur.push(other);
                }
                None => cur.push('\\'),
            },
            '|' => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
            _ => cur.push(c),
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Escapes an alias for the dump format.
pub fn escape_alias(alias: &str) -> String {
    alias.replace('\\', "\\\\").replace('|', "\\|")
}

impl KgIndex {
    /// Builds an index from records. Later duplicates of an id replace
    /// earlier ones (counted).
    pub fn from_records<I>(records: I) -> Self
    where
        I: IntoIterator<Item = EntityRecord>,
    {
        let mut entities = BTreeMap::new();
        let mut counts = IngestCounts::default();
        for rec in records {
            let id_num = parse_id_num(&rec.id).expect("caller validates ids");
            if entities.insert(id_num, rec).is_some() {
                counts.duplicate_ids += 1;
            }
        }
        Self::build(entities, counts)
    }

    /// Streams a line-delimited dump: `id<TAB>label<TAB>alias1|alias2|...`.
    /// Records with an empty label are skipped and counted; malformed lines
    /// abort with the line number.
    pub fn ingest_dump(path: &Path) -> Result<Self, KgError> {
        let file = File::open(path).map_err(|source| KgError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let reader = BufReader::new(file);
        let mut entities: BTreeMap<u64, EntityRecord> = BTreeMap::new();
        let mut counts = IngestCounts::default();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|source| KgError::Io {
                path: path.display().to_string(),
                source,
            })?;
            if line.is_empty() {
                continue;
            }
            let mut fields = line.splitn(3, '\t');
            let id = fields.next().expect("splitn yields at least one field");
            let Some(label) = fields.next() else {
                return Err(KgError::MalformedLine {
                    line: line_no,
                    reason: "expected 3 tab-separated fields (id, label, aliases)".into(),
                });
            };
            let Some(alias_field) = fields.next() else {
                return Err(KgError::MalformedLine {
                    line: line_no,
                    reason: "missing alias field (may be empty but must be present)".into(),
                });
            };
            let Some(id_num) = parse_id_num(id) else {
                return Err(KgError::MalformedLine {
                    line: line_no,
                    reason: format!("id '{id}' does not match Q<digits>"),
                });
            };
            if label.is_empty() {
                counts.skipped_no_label += 1;
                continue;
            }
            let record = EntityRecord {
                id: id.to_string(),
                label: label.to_string(),
                aliases: split_aliases(alias_field),
            };
            if entities.insert(id_num, record).is_some() {
                counts.duplicate_ids += 1;
            }
        }
        Ok(Self::build(entities, counts))
    }

    fn build(entities: BTreeMap<u64, EntityRecord>, counts: IngestCounts) -> Self {
        let mut by_key: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        for (&id_num, rec) in &entities {
            let add =
                |text: &str, kind: MatchKind, by_key: &mut BTreeMap<String, Vec<Posting>>| {
                    let key = normalize(text);
                    if key.is_empty() {
                        return;
                    }
                    let posting = Posting { id_num, kind, text: text.to_string() };
                    let list = by_key.entry(key).or_default();
                    if !list.contains(&posting) {
                        list.push(posting);
                    }
                };
            add(&rec.label, MatchKind::Label, &mut by_key);
            for alias in &rec.aliases {
                add(alias, MatchKind::Alias, &mut by_key);
            }
        }
        let mut keys = Vec::with_capacity(by_key.len());
        let mut postings = Vec::with_capacity(by_key.len());
        for (key, mut list) in by_key {
            list.sort_by(|a, b| {
                a.id_num
                    .cmp(&b.id_num)
                    .then(a.kind.cmp(&b.kind))
                    .then_with(|| a.text.cmp(&b.text))
            });
            keys.push(key);
            postings.push(list);
        }
        Self::assemble(entities, keys, postings, counts)
    }

    fn assemble(
        entities: BTreeMap<u64, EntityRecord>,
        keys: Vec<String>,
        postings: Vec<Vec<Posting>>,
        counts: IngestCounts,
    ) -> Self {
        let mut key_ids = HashMap::with_capacity(keys.len());
        let mut token_index: HashMap<String, Vec<u32>> = HashMap::new();
        let mut by_len: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
        for (i, key) in keys.iter().enumerate() {
            let idx = i as u32;
            key_ids.insert(key.clone(), idx);
            by_len.entry(key.chars().count()).or_default().push(idx);
            let mut seen = BTreeSet::new();
            for tok in key.split_whitespace() {
                if seen.insert(tok) {
                    token_index.entry(tok.to_string()).or_default().push(idx);
                }
            }
        }
        KgIndex { entities, keys, postings, key_ids, token_index, by_len, counts }
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn string_count(&self) -> usize {
        self.keys.len()
    }

    pub fn posting_count(&self) -> usize {
        self.postings.iter().map(Vec::len).sum()
    }

    pub fn counts(&self) -> IngestCounts {
        self.counts
    }

    pub fn contains_id(&self, id: &str) -> bool {
        parse_id_num(id).is_some_and(|n| self.entities.contains_key(&n))
    }

    pub fn entity(&self, id: &str) -> Option<&EntityRecord> {
        self.entities.get(&parse_id_num(id)?)
    }

    pub fn entities(&self) -> impl Iterator<Item = &EntityRecord> {
        self.entities.values()
    }

    /// All candidate hits scoring at least `threshold` against the surface
    /// form, best per entity, ordered by (score desc, id asc), truncated to
    /// `limit`. An exact normalized match scores exactly 1.0.
    pub fn search(
        &self,
        surface: &str,
        threshold: f64,
        limit: usize,
    ) -> Result<Vec<CandidateHit>, KgError> {
        self.search_impl(surface, threshold, limit, true)
    }

    /// Sequential-scoring twin of [`Self::search`]; bit-identical results,
    /// kept callable so benchmarks can compare the two paths in one build.
    pub fn search_sequential(
        &self,
        surface: &str,
        threshold: f64,
        limit: usize,
    ) -> Result<Vec<CandidateHit>, KgError> {
        self.search_impl(surface, threshold, limit, false)
    }

    fn search_impl(
        &self,
        surface: &str,
        threshold: f64,
        limit: usize,
        parallel: bool,
    ) -> Result<Vec<CandidateHit>, KgError> {
        if surface.is_empty() {
            return Err(KgError::EmptySurface);
        }
        let query = normalize(surface);
        let candidates = self.candidate_keys(&query, threshold);
        let scored = self.score_keys(&query, &candidates, threshold, parallel);

        // Best hit per entity: by score, then label before alias, then text.
        let mut best: BTreeMap<u64, (f64, &Posting)> = BTreeMap::new();
        for &(key_idx, score) in &scored {
            for posting in &self.postings[key_idx as usize] {
                let replace = match best.get(&posting.id_num) {
                    None => true,
                    Some(&(old_score, old)) => {
                        score > old_score
                            || (score == old_score
                                && (posting.kind, &posting.text) < (old.kind, &old.text))
                    }
                };
                if replace {
                    best.insert(posting.id_num, (score, posting));
                }
            }
        }
        let mut hits: Vec<(u64, f64, &Posting)> =
            best.into_iter().map(|(id, (s, p))| (id, s, p)).collect();
        hits.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("scores are finite")
                .then(a.0.cmp(&b.0))
        });
        hits.truncate(limit);
        Ok(hits
            .into_iter()
            .map(|(id_num, score, posting)| CandidateHit {
                id: self.entities[&id_num].id.clone(),
                matched: posting.text.clone(),
                kind: posting.kind,
                score,
            })
            .collect())
    }

    /// Candidate key set: token-overlap postings (the Dice route) plus keys
    /// within the edit-distance length window (the edit route). A threshold
    /// of zero or less degenerates to a full scan.
    fn candidate_keys(&self, query: &str, threshold: f64) -> Vec<u32> {
        if threshold <= 0.0 {
            return (0..self.keys.len() as u32).collect();
        }
        let mut set: BTreeSet<u32> = BTreeSet::new();
        for tok in query.split_whitespace() {
            if let Some(list) = self.token_index.get(tok) {
                set.extend(list.iter().copied());
            }
        }
        // edit_sim >= t forces candidate length into [t*L, L/t].
        let len = query.chars().count();
        if len > 0 {
            let lo = (threshold * len as f64).ceil() as usize;
            let hi = (len as f64 / threshold).floor() as usize;
            for (_, idxs) in self.by_len.range(lo..=hi) {
                set.extend(idxs.iter().copied());
            }
        }
        set.into_iter().collect()
    }

    fn score_keys(
        &self,
        query: &str,
        candidates: &[u32],
        threshold: f64,
        parallel: bool,
    ) -> Vec<(u32, f64)> {
        let score_one = |&idx: &u32| {
            let s = similarity(query, &self.keys[idx as usize]);
            (s >= threshold).then_some((idx, s))
        };
        #[cfg(feature = "parallel")]
        if parallel && candidates.len() >= 128 {
            use rayon::prelude::*;
            return candidates.par_iter().filter_map(score_one).collect();
        }
        let _ = parallel;
        candidates.iter().filter_map(score_one).collect()
    }

    /// Exact normalized label lookup; with several owners the lowest
    /// numeric id wins.
    pub fn label_to_id(&self, label: &str) -> Option<&str> {
        let key = normalize(label);
        let idx = *self.key_ids.get(&key)?;
        self.postings[idx as usize]
            .iter()
            .find(|p| p.kind == MatchKind::Label)
            .map(|p| self.entities[&p.id_num].id.as_str())
    }

    // ── Binary serialization ─────────────────────────────────────────

    const MAGIC: &'static [u8; 4] = b"KGIX";
    const VERSION: u32 = 1;

    /// Versioned binary serialization: magic, version, ingest counters,
    /// entity records, then the normalized-string postings table.
    pub fn save(&self, path: &Path) -> Result<(), KgError> {
        atomic_write(path, &self.to_bytes()).map_err(|source| KgError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(Self::MAGIC);
        out.extend_from_slice(&Self::VERSION.to_le_bytes());
        out.extend_from_slice(&self.counts.skipped_no_label.to_le_bytes());
        out.extend_from_slice(&self.counts.duplicate_ids.to_le_bytes());
        out.extend_from_slice(&(self.entities.len() as u32).to_le_bytes());
        for (id_num, rec) in &self.entities {
            out.extend_from_slice(&id_num.to_le_bytes());
            write_str(&mut out, &rec.id);
            write_str(&mut out, &rec.label);
            out.extend_from_slice(&(rec.aliases.len() as u32).to_le_bytes());
            for alias in &rec.aliases {
                write_str(&mut out, alias);
            }
        }
        out.extend_from_slice(&(self.keys.len() as u32).to_le_bytes());
        for (key, postings) in self.keys.iter().zip(&self.postings) {
            write_str(&mut out, key);
            out.extend_from_slice(&(postings.len() as u32).to_le_bytes());
            for p in postings {
                out.extend_from_slice(&p.id_num.to_le_bytes());
                out.push(match p.kind {
                    MatchKind::Label => 0,
                    MatchKind::Alias => 1,
                });
                write_str(&mut out, &p.text);
            }
        }
        out
    }

    /// Loads a serialized index, rejecting version or format mismatches.
    pub fn load(path: &Path) -> Result<Self, KgError> {
        let bytes = std::fs::read(path).map_err(|source| KgError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let invalid = |reason: &str| KgError::InvalidIndex {
            path: path.display().to_string(),
            reason: reason.to_string(),
        };
        let mut r = ByteReader { bytes: &bytes, pos: 0 };
        if r.take(4).ok_or_else(|| invalid("truncated magic"))? != Self::MAGIC {
            return Err(invalid("bad magic bytes"));
        }
        let version = r.u32().ok_or_else(|| invalid("truncated version"))?;
        if version != Self::VERSION {
            return Err(invalid(&format!(
                "unsupported version {version}, want {}",
                Self::VERSION
            )));
        }
        let counts = IngestCounts {
            skipped_no_label: r.u64().ok_or_else(|| invalid("truncated counters"))?,
            duplicate_ids: r.u64().ok_or_else(|| invalid("truncated counters"))?,
        };
        let entity_count = r.u32().ok_or_else(|| invalid("truncated entity count"))? as usize;
        let mut entities = BTreeMap::new();
        for _ in 0..entity_count {
            let id_num = r.u64().ok_or_else(|| invalid("truncated entity"))?;
            let id = r.string().ok_or_else(|| invalid("truncated entity id"))?;
            let label = r.string().ok_or_else(|| invalid("truncated label"))?;
            let alias_count = r.u32().ok_or_else(|| invalid("truncated alias count"))? as usize;
            let mut aliases = Vec::with_capacity(alias_count);
            for _ in 0..alias_count {
                aliases.push(r.string().ok_or_else(|| invalid("truncated alias"))?);
            }
            entities.insert(id_num, EntityRecord { id, label, aliases });
        }
        let key_count = r.u32().ok_or_else(|| invalid("truncated key count"))? as usize;
        let mut keys = Vec::with_capacity(key_count);
        let mut postings = Vec::with_capacity(key_count);
        for _ in 0..key_count {
            keys.push(r.string().ok_or_else(|| invalid("truncated key"))?);
            let n = r.u32().ok_or_else(|| invalid("truncated posting count"))? as usize;
            let mut list = Vec::with_capacity(n);
            for _ in 0..n {
                let id_num = r.u64().ok_or_else(|| invalid("truncated posting"))?;
                let kind = match r.u8().ok_or_else(|| invalid("truncated posting kind"))? {
                    0 => MatchKind::Label,
                    1 => MatchKind::Alias,
                    other => return Err(invalid(&format!("unknown posting kind {other}"))),
                };
                let text = r.string().ok_or_else(|| invalid("truncated posting text"))?;
                list.push(Posting { id_num, kind, text });
            }
            postings.push(list);
        }
        if r.pos != bytes.len() {
            return Err(invalid("trailing bytes"));
        }
        Ok(Self::assemble(entities, keys, postings, counts))
    }
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return None;
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Some(out)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Option<String> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).ok()
    }
}
