//! Transcript parsing, preprocessing and vocabulary indexing.
//!
//! Raw input arrives as CHAT transcripts, plain text files, or JSON lines.
//! Everything is reduced to [`Document`]s holding lowercase alphabetic tokens,
//! then indexed by a [`Vocabulary`] whose id 0 is the `UNK` symbol.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symbol standing in for out-of-vocabulary words.
pub const UNK: &str = "UNK";

pub const UNK_ID: u32 = 0;

const FROZEN_STOP_LIST: &str = include_str!("../data/stopwords_en_v1.txt");
pub const FROZEN_STOP_LIST_VERSION: &str = "en-v1";

/// Binary class label; 0 is the control class.
pub type Label = u8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<String>,
    pub group_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

impl Document {
    pub fn new(id: impl Into<String>, tokens: Vec<String>, group_id: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            tokens,
            group_id: group_id.into(),
            label: None,
        }
    }

    pub fn with_label(mut self, label: Option<Label>) -> Self {
        self.label = label;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreprocessConfig {
    pub stop_words: BTreeSet<String>,
    pub fillers: BTreeSet<String>,
    /// Compared case-insensitively against the raw token, before punctuation is stripped.
    pub asr_artifacts: BTreeSet<String>,
    pub stop_list_version: String,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig::from_stop_list(FROZEN_STOP_LIST, FROZEN_STOP_LIST_VERSION)
    }
}

impl PreprocessConfig {
    /// Builds a config from a stop-list file body (one entry per line, `#` comments).
    pub fn from_stop_list(body: &str, version: &str) -> Self {
        let stop_words = body
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .filter_map(strip_to_letters)
            .collect();
        PreprocessConfig {
            stop_words,
            fillers: ["um", "uh"].iter().map(|s| s.to_string()).collect(),
            asr_artifacts: ["[unk]", "[noise]"].iter().map(|s| s.to_string()).collect(),
            stop_list_version: version.to_string(),
        }
    }

    pub fn load_stop_list(path: &Path, version: &str) -> Result<Self> {
        let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_stop_list(&body, version))
    }

    /// Normalizes one raw token, returning `None` when preprocessing removes it.
    pub fn normalize(&self, raw: &str) -> Option<String> {
        let lower = raw.to_lowercase();
        if self.asr_artifacts.contains(&lower) {
            return None;
        }
        if lower.chars().any(|c| c.is_numeric()) {
            return None;
        }
        let word = strip_to_letters(&lower)?;
        if self.fillers.contains(&word) || self.stop_words.contains(&word) {
            return None;
        }
        Some(word)
    }
}

fn strip_to_letters(s: &str) -> Option<String> {
    let w: String = s
        .chars()
        .filter(|c| c.is_alphabetic())
        .flat_map(char::to_lowercase)
        .collect();
    (!w.is_empty()).then_some(w)
}

/// Drops stop words, fillers, ASR artifacts, punctuation and digit-bearing
/// tokens, and lowercases the rest.
pub fn preprocess<S: AsRef<str>>(tokens: &[S], config: &PreprocessConfig) -> Vec<String> {
    tokens
        .iter()
        .filter_map(|t| config.normalize(t.as_ref()))
        .collect()
}

/// Whitespace tokenization of free text.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

// ---------------------------------------------------------------------------
// CHAT transcripts

#[derive(Debug, Clone, Default)]
pub struct ChatParse {
    pub documents: Vec<Document>,
    pub warnings: Vec<String>,
}

/// Parses CHAT-format text into one document per `@Begin`/`@End` block.
///
/// Only `*PAR:` tiers contribute words. Tokens are returned with their
/// original case and before stop-word filtering.
pub fn parse_chat(raw: &[u8], default_group: &str) -> Result<ChatParse> {
    if let Some(offset) = raw.iter().position(|&b| b == 0) {
        return Err(Error::Undecodable { offset });
    }
    let text = std::str::from_utf8(raw).map_err(|e| Error::Undecodable {
        offset: e.valid_up_to(),
    })?;

    let mut out = ChatParse::default();
    let mut current: Option<ChatBuilder> = None;
    let mut saw_begin = false;
    let mut warned_headerless = false;
    // tier name + text accumulated across continuation lines
    let mut tier: Option<(String, String)> = None;

    let flush_tier = |tier: &mut Option<(String, String)>, current: &mut Option<ChatBuilder>| {
        if let (Some((name, body)), Some(b)) = (tier.take(), current.as_mut()) {
            if name == "PAR" {
                b.words.extend(chat_utterance_words(&body));
            }
        }
    };

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if let Some(cont) = line.strip_prefix('\t') {
            if let Some((_, body)) = tier.as_mut() {
                body.push(' ');
                body.push_str(cont);
            }
            continue;
        }
        flush_tier(&mut tier, &mut current);

        if line.starts_with("@Begin") {
            if let Some(b) = current.take() {
                out.warnings
                    .push(format!("line {}: @Begin without preceding @End", lineno + 1));
                out.documents.push(b.finish(default_group, out.documents.len()));
            }
            saw_begin = true;
            current = Some(ChatBuilder::default());
        } else if line.starts_with("@End") {
            if let Some(b) = current.take() {
                out.documents.push(b.finish(default_group, out.documents.len()));
            }
        } else if let Some(id) = line.strip_prefix("@ID:") {
            if let Some(b) = current.as_mut() {
                b.absorb_id_header(id);
            }
        } else if let Some(rest) = line.strip_prefix('*') {
            if current.is_none() {
                if !saw_begin && !warned_headerless {
                    out.warnings
                        .push("malformed header: no @Begin; parsing continues".to_string());
                    warned_headerless = true;
                }
                current = Some(ChatBuilder::default());
            }
            if let Some((name, body)) = rest.split_once(':') {
                tier = Some((name.trim().to_string(), body.to_string()));
            }
        }
        // `%` annotation tiers, other headers and blank lines carry no words.
        else if line.starts_with('%') {
            tier = Some(("%".to_string(), String::new()));
        }
    }
    flush_tier(&mut tier, &mut current);
    if let Some(b) = current.take() {
        if saw_begin {
            out.warnings.push("missing @End at end of input".to_string());
        }
        out.documents.push(b.finish(default_group, out.documents.len()));
    }
    for w in &out.warnings {
        warn!("{default_group}: {w}");
    }
    Ok(out)
}

#[derive(Default)]
struct ChatBuilder {
    words: Vec<String>,
    label: Option<Label>,
}

impl ChatBuilder {
    fn absorb_id_header(&mut self, body: &str) {
        // language|corpus|code|age|sex|group|SES|role|education|custom|
        let fields: Vec<&str> = body.trim().split('|').collect();
        if fields.get(2).map(|s| s.trim()) != Some("PAR") {
            return;
        }
        if let Some(group) = fields.get(5) {
            self.label = label_from_chat_group(group.trim());
        }
    }

    fn finish(self, group: &str, index: usize) -> Document {
        let id = if index == 0 {
            group.to_string()
        } else {
            format!("{group}#{index}")
        };
        Document {
            id,
            tokens: self.words,
            group_id: group.to_string(),
            label: self.label,
        }
    }
}

fn label_from_chat_group(group: &str) -> Option<Label> {
    match group.to_ascii_lowercase().as_str() {
        "control" => Some(0),
        "probablead" | "possiblead" | "dementia" | "ad" => Some(1),
        _ => None,
    }
}

/// Strips CHAT markup from one utterance and returns the surface words.
pub fn chat_utterance_words(body: &str) -> Vec<String> {
    let mut cleaned = String::with_capacity(body.len());
    let mut bracket_depth = 0usize;
    let mut in_timing = false;
    for c in body.chars() {
        match c {
            '\u{15}' => in_timing = !in_timing,
            _ if in_timing => {}
            '[' => bracket_depth += 1,
            ']' if bracket_depth > 0 => bracket_depth -= 1,
            _ if bracket_depth > 0 => {}
            '<' | '>' => cleaned.push(' '),
            _ => cleaned.push(c),
        }
    }

    let mut words = Vec::new();
    for raw in cleaned.split_whitespace() {
        if raw.starts_with('&') || raw.starts_with('+') || raw.starts_with('0') {
            continue;
        }
        if matches!(raw, "xxx" | "yyy" | "www" | "(.)" | "(..)" | "(...)") {
            continue;
        }
        let raw = raw.split('@').next().unwrap_or("");
        for part in raw.split(['+', '_']) {
            let word: String = part.chars().filter(|&c| c != '(' && c != ')').collect();
            if word.chars().any(char::is_alphanumeric) {
                words.push(word);
            }
        }
    }
    words
}

// ---------------------------------------------------------------------------
// Vocabulary

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
    min_count: u64,
}

impl Vocabulary {
    /// Keeps words with corpus frequency ≥ `min_count`, ordered by descending
    /// frequency then lexicographically, after `UNK` at id 0.
    pub fn build<'a, I, S>(streams: I, min_count: u64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        if min_count == 0 {
            return Err(Error::InvalidArgument("min_count must be at least 1".into()));
        }
        let mut freq: HashMap<&str, u64> = HashMap::new();
        let mut total = 0u64;
        for stream in streams {
            for t in stream {
                *freq.entry(t.as_ref()).or_default() += 1;
                total += 1;
            }
        }
        if total == 0 {
            return Err(Error::EmptyCorpus);
        }
        let mut kept: Vec<(&str, u64)> = freq
            .iter()
            .filter(|(w, &c)| c >= min_count && **w != UNK)
            .map(|(w, &c)| (*w, c))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let kept_total: u64 = kept.iter().map(|(_, c)| c).sum();

        let mut words = Vec::with_capacity(kept.len() + 1);
        let mut counts = Vec::with_capacity(kept.len() + 1);
        words.push(UNK.to_string());
        counts.push(total - kept_total);
        for (w, c) in kept {
            words.push(w.to_string());
            counts.push(c);
        }
        Ok(Self::from_parts(words, counts, min_count))
    }

    pub fn from_documents(docs: &[Document], min_count: u64) -> Result<Self> {
        Self::build(docs.iter().map(|d| d.tokens.as_slice()), min_count)
    }

    /// Reassembles a vocabulary; `words[0]` must be `UNK`.
    pub fn from_parts(words: Vec<String>, counts: Vec<u64>, min_count: u64) -> Self {
        debug_assert_eq!(words.first().map(String::as_str), Some(UNK));
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Vocabulary {
            words,
            counts,
            index,
            min_count,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn unk_id(&self) -> u32 {
        UNK_ID
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Maps tokens to ids, sending out-of-vocabulary words to `UNK`.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens
            .iter()
            .map(|t| self.id(t.as_ref()).unwrap_or(UNK_ID))
            .collect()
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, (w, c)) in self.words.iter().zip(&self.counts).enumerate() {
            writeln!(out, "{w}\t{i}\t{c}")?;
        }
        Ok(())
    }

    pub fn read_tsv(body: &str, path: &str, min_count: u64) -> Result<Self> {
        let mut words = Vec::new();
        let mut counts = Vec::new();
        for (n, line) in body.lines().enumerate() {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::format(path, n + 1, "expected word, id, count"));
            }
            let id: usize = fields[1]
                .parse()
                .map_err(|_| Error::format(path, n + 1, "bad id"))?;
            if id != words.len() {
                return Err(Error::format(path, n + 1, "ids must be dense and ordered"));
            }
            let count = fields[2]
                .parse()
                .map_err(|_| Error::format(path, n + 1, "bad count"))?;
            words.push(fields[0].to_string());
            counts.push(count);
        }
        if words.first().map(String::as_str) != Some(UNK) {
            return Err(Error::format(path, 1, "first vocabulary row must be UNK"));
        }
        Ok(Self::from_parts(words, counts, min_count))
    }
}

// ---------------------------------------------------------------------------
// Corpus

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub vocabulary: Vocabulary,
    pub stop_list_version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    stop_list_version: String,
    min_count: u64,
    documents: usize,
}

const ARCHIVE_VERSION: u32 = 1;

impl Corpus {
    pub fn build(documents: Vec<Document>, min_count: u64, stop_list_version: &str) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let vocabulary = Vocabulary::from_documents(&documents, min_count)?;
        Ok(Corpus {
            documents,
            vocabulary,
            stop_list_version: stop_list_version.to_string(),
        })
    }

    pub fn encode(&self, doc: &Document) -> Vec<u32> {
        self.vocabulary.encode(&doc.tokens)
    }

    /// Encoded documents with `UNK` occurrences removed, as consumed by topic-model training.
    pub fn topic_model_documents(&self) -> Vec<Vec<u32>> {
        self.documents
            .iter()
            .map(|d| {
                self.encode(d)
                    .into_iter()
                    .filter(|&id| id != UNK_ID)
                    .collect()
            })
            .collect()
    }

    pub fn token_count(&self) -> usize {
        self.documents.iter().map(|d| d.tokens.len()).sum()
    }

    /// Writes `documents.jsonl`, `vocab.tsv` and `manifest.json` into `dir`.
    pub fn write_archive(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut docs = Vec::new();
        for d in &self.documents {
            serde_json::to_writer(&mut docs, d)?;
            docs.push(b'\n');
        }
        write_file(&dir.join("documents.jsonl"), &docs)?;

        let mut vocab = Vec::new();
        self.vocabulary
            .write_tsv(&mut vocab)
            .map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join("vocab.tsv"), &vocab)?;

        let manifest = Manifest {
            format_version: ARCHIVE_VERSION,
            stop_list_version: self.stop_list_version.clone(),
            min_count: self.vocabulary.min_count(),
            documents: self.documents.len(),
        };
        let mut body = serde_json::to_vec_pretty(&manifest)?;
        body.push(b'\n');
        write_file(&dir.join("manifest.json"), &body)
    }

    pub fn read_archive(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("manifest.json");
        let manifest: Manifest = serde_json::from_str(&read_file(&manifest_path)?)?;
        if manifest.format_version != ARCHIVE_VERSION {
            return Err(Error::format(
                manifest_path.display().to_string(),
                1,
                format!("unsupported archive version {}", manifest.format_version),
            ));
        }
        let docs_path = dir.join("documents.jsonl");
        let documents = read_jsonl::<Document>(&docs_path)?;
        let vocab_path = dir.join("vocab.tsv");
        let vocabulary = Vocabulary::read_tsv(
            &read_file(&vocab_path)?,
            &vocab_path.display().to_string(),
            manifest.min_count,
        )?;
        Ok(Corpus {
            documents,
            vocabulary,
            stop_list_version: manifest.stop_list_version,
        })
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let body = read_file(path)?;
    body.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::format(path.display().to_string(), n + 1, e.to_string()))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Raw input loading

#[derive(Debug, Deserialize)]
struct JsonlRecord {
    #[serde(default)]
    id: Option<String>,
    text: String,
    group_id: String,
    #[serde(default)]
    label: Option<Label>,
}

/// Loads raw documents from a `.jsonl` file or a directory of `.cha` / `.txt` files,
/// then preprocesses their tokens.
///
/// For CHAT files the group id is the file stem up to its first `-`
/// (`001-2.cha` belongs to speaker `001`); plain-text files use the whole stem.
pub fn load_documents(path: &Path, config: &PreprocessConfig) -> Result<Vec<Document>> {
    let mut docs = if path.is_dir() {
        load_directory(path)?
    } else {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        match ext {
            "jsonl" | "json" => read_jsonl::<JsonlRecord>(path)?
                .into_iter()
                .enumerate()
                .map(|(i, r)| Document {
                    id: r.id.unwrap_or_else(|| format!("doc{i:06}")),
                    tokens: tokenize(&r.text),
                    group_id: r.group_id,
                    label: r.label,
                })
                .collect(),
            _ => load_file(path)?,
        }
    };
    for d in &mut docs {
        d.tokens = preprocess(&d.tokens, config);
    }
    Ok(docs)
}

fn load_directory(dir: &Path) -> Result<Vec<Document>> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    entries.sort();
    let mut docs = Vec::new();
    for p in entries {
        match p.extension().and_then(|e| e.to_str()) {
            Some("cha") | Some("txt") => docs.extend(load_file(&p)?),
            _ => {}
        }
    }
    Ok(docs)
}

fn load_file(path: &Path) -> Result<Vec<Document>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("doc")
        .to_string();
    if path.extension().and_then(|e| e.to_str()) == Some("cha") {
        let group = stem.split('-').next().unwrap_or(&stem).to_string();
        let parsed = parse_chat(&bytes, &group)?;
        let n = parsed.documents.len();
        Ok(parsed
            .documents
            .into_iter()
            .enumerate()
            .map(|(i, mut d)| {
                d.id = if n == 1 { stem.clone() } else { format!("{stem}#{i}") };
                d
            })
            .collect())
    } else {
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::Undecodable {
            offset: e.valid_up_to(),
        })?;
        Ok(vec![Document::new(stem.clone(), tokenize(text), stem)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> PreprocessConfig {
        PreprocessConfig::default()
    }

    fn words(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn participant_tier_is_extracted() {
        let p = parse_chat(b"@Begin\n*PAR:\tthe boy is falling .\n@End\n", "s1").unwrap();
        assert_eq!(p.documents.len(), 1);
        assert_eq!(p.documents[0].tokens, words(&["the", "boy", "is", "falling"]));
        assert!(p.warnings.is_empty());
    }

    #[test]
    fn annotation_and_investigator_tiers_are_ignored() {
        let p = parse_chat(
            b"@Begin\n%mor:\tdet|the n|boy\n*INV:\tokay go on .\n@End\n",
            "s1",
        )
        .unwrap();
        assert!(p.documents[0].tokens.is_empty());
    }

    #[test]
    fn chat_markup_is_stripped() {
        let line = "*PAR:\t<the boy> [//] the &uh girl (be)cause [* m] xxx ice+cream \u{15}123_456\u{15} +... (.)";
        let p = parse_chat(format!("@Begin\n{line}\n@End\n").as_bytes(), "g").unwrap();
        assert_eq!(
            p.documents[0].tokens,
            words(&["the", "boy", "the", "girl", "because", "ice", "cream"])
        );
    }

    #[test]
    fn continuation_lines_join_their_tier() {
        let p = parse_chat(b"@Begin\n*PAR:\tthe cookie\n\tjar falls .\n%com:\tnoise\n\tmore\n@End\n", "g")
            .unwrap();
        assert_eq!(p.documents[0].tokens, words(&["the", "cookie", "jar", "falls"]));
    }

    #[test]
    fn missing_begin_warns_and_continues() {
        let p = parse_chat(b"*PAR:\tcookie jar .\n", "g").unwrap();
        assert_eq!(p.documents.len(), 1);
        assert_eq!(p.documents[0].tokens, words(&["cookie", "jar"]));
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn binary_input_is_rejected() {
        assert!(matches!(
            parse_chat(b"@Begin\n\xff\xfe\x00\x01", "g"),
            Err(Error::Undecodable { .. })
        ));
        assert!(matches!(parse_chat(&[0xc3, 0x28], "g"), Err(Error::Undecodable { offset: 0 })));
    }

    #[test]
    fn id_header_sets_label() {
        let p = parse_chat(
            b"@Begin\n@ID:\teng|Pitt|PAR|57;|female|ProbableAD||Participant|||\n*PAR:\tcookie .\n@End\n\
              @Begin\n@ID:\teng|Pitt|PAR|60;|male|Control||Participant|||\n*PAR:\tcookie .\n@End\n",
            "001",
        )
        .unwrap();
        assert_eq!(p.documents.len(), 2);
        assert_eq!(p.documents[0].label, Some(1));
        assert_eq!(p.documents[1].label, Some(0));
        assert_eq!(p.documents[1].id, "001#1");
    }

    #[test]
    fn preprocess_examples() {
        let out = preprocess(&["the", "um", "boy", "[NOISE]", "falls", "."], &cfg());
        assert_eq!(out, words(&["boy", "falls"]));
        assert!(preprocess::<&str>(&[], &cfg()).is_empty());
        assert!(preprocess(&["UM", "Uh"], &cfg()).is_empty());
        assert!(preprocess(&["[UNK]", "[unk]", "3rd", "1999", "--", "Cookie!"], &cfg()) == words(&["cookie"]));
    }

    #[test]
    fn vocabulary_threshold() {
        let docs = vec![Document::new("d", words(&["a", "a", "b"]), "g")];
        let v = Vocabulary::from_documents(&docs, 2).unwrap();
        assert_eq!(v.words(), &words(&[UNK, "a"])[..]);
        assert_eq!(v.count(UNK_ID), 1);
        assert_eq!(v.encode(&["a", "b", "zzz"]), vec![1, 0, 0]);

        let v1 = Vocabulary::from_documents(&docs, 1).unwrap();
        assert_eq!(v1.len(), 3);
    }

    #[test]
    fn vocabulary_rejects_empty_corpus() {
        assert!(matches!(Vocabulary::from_documents(&[], 1), Err(Error::EmptyCorpus)));
        let empty = vec![Document::new("d", vec![], "g")];
        assert!(matches!(Vocabulary::from_documents(&empty, 1), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn vocabulary_matches_brute_force_count() {
        let docs: Vec<Document> = [
            "cat dog dog bird",
            "dog fish cat cat",
            "owl",
            "fish fish dog bird owl",
            "cat",
        ]
        .iter()
        .enumerate()
        .map(|(i, t)| Document::new(format!("d{i}"), tokenize(t), "g"))
        .collect();
        for min_count in 1..=5u64 {
            let v = Vocabulary::from_documents(&docs, min_count).unwrap();
            let mut expected: Vec<&str> = Vec::new();
            for w in ["bird", "cat", "dog", "fish", "owl"] {
                let c = docs.iter().flat_map(|d| &d.tokens).filter(|t| *t == w).count() as u64;
                if c >= min_count {
                    expected.push(w);
                }
            }
            let mut got: Vec<&str> = v.words()[1..].iter().map(String::as_str).collect();
            got.sort();
            assert_eq!(got, expected, "min_count {min_count}");
        }
    }

    #[test]
    fn archive_round_trip_is_bit_exact() {
        let docs = vec![
            Document::new("a", words(&["cookie", "jar", "cookie"]), "g1").with_label(Some(1)),
            Document::new("b", words(&["sink", "water"]), "g2").with_label(Some(0)),
        ];
        let corpus = Corpus::build(docs, 1, FROZEN_STOP_LIST_VERSION).unwrap();
        let dir = tempfile::tempdir().unwrap();
        corpus.write_archive(dir.path()).unwrap();
        let back = Corpus::read_archive(dir.path()).unwrap();
        assert_eq!(back, corpus);
        let first = fs::read(dir.path().join("documents.jsonl")).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        back.write_archive(dir2.path()).unwrap();
        for f in ["documents.jsonl", "vocab.tsv", "manifest.json"] {
            assert_eq!(
                fs::read(dir.path().join(f)).unwrap(),
                fs::read(dir2.path().join(f)).unwrap()
            );
        }
        assert!(!first.is_empty());
    }

    fn token_strategy() -> impl Strategy<Value = String> {
        prop_oneof![
            "[a-zA-Z]{1,8}",
            "[a-z]{0,3}[0-9]{1,3}",
            "[.,!?;:'\"-]{1,3}",
            Just("um".to_string()),
            Just("UH".to_string()),
            Just("[NOISE]".to_string()),
            Just("[unk]".to_string()),
            Just("The".to_string()),
            Just("and".to_string()),
            "[a-z]{1,5}[.,!']",
        ]
    }

    proptest! {
        #[test]
        fn preprocess_is_idempotent(tokens in prop::collection::vec(token_strategy(), 0..40)) {
            let c = cfg();
            let once = preprocess(&tokens, &c);
            prop_assert_eq!(preprocess(&once, &c), once);
        }

        #[test]
        fn nothing_forbidden_survives(tokens in prop::collection::vec(token_strategy(), 0..40)) {
            let c = cfg();
            for t in preprocess(&tokens, &c) {
                prop_assert!(!t.is_empty());
                prop_assert!(t.chars().all(|ch| ch.is_alphabetic() && !ch.is_uppercase()));
                prop_assert!(!c.stop_words.contains(&t));
                prop_assert!(!c.fillers.contains(&t));
            }
        }

        #[test]
        fn vocabulary_round_trips(tokens in prop::collection::vec("[a-e]{1,2}", 1..60), min_count in 1u64..4) {
            let docs = vec![Document::new("d", tokens, "g")];
            let v = Vocabulary::from_documents(&docs, min_count).unwrap();
            for (i, w) in v.words().iter().enumerate() {
                prop_assert_eq!(v.id(w), Some(i as u32));
                if i > 0 {
                    prop_assert!(v.count(i as u32) >= min_count);
                }
            }
        }

        #[test]
        fn annotation_lines_do_not_change_token_count(
            utterances in prop::collection::vec("[a-z]{1,6}( [a-z]{1,6}){0,5} \\.", 1..8),
            inserts in prop::collection::vec((0usize..20, "[a-z ]{0,12}"), 0..6),
        ) {
            let mut lines = vec!["@Begin".to_string(), "@Participants:\tPAR Participant".to_string()];
            lines.extend(utterances.iter().map(|u| format!("*PAR:\t{u}")));
            lines.push("@End".to_string());
            let base = parse_chat(lines.join("\n").as_bytes(), "g").unwrap();
            let mut with = lines.clone();
            for (pos, body) in inserts {
                let at = pos % (with.len() + 1);
                with.insert(at, format!("%com:\t{body}"));
            }
            let after = parse_chat(with.join("\n").as_bytes(), "g").unwrap();
            let n = |p: &ChatParse| p.documents.iter().map(|d| d.tokens.len()).sum::<usize>();
            prop_assert_eq!(n(&base), n(&after));
        }
    }
}
