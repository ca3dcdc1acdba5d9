//! Corpus data model: prompt/reference pairs, continuations, model
//! configurations, and the on-disk manifest.
//!
//! A corpus directory holds one UTF-8 text file per chunk and a TOML manifest
//! tagged `styloshift-manifest/1`. Continuations live under a separate
//! directory, one text file and one JSON provenance record per
//! `(config_id, doc_id)` slot.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FORMAT: &str = "styloshift-manifest/1";
pub const DEFAULT_PROMPT_WORDS: usize = 500;
/// Continuations with fewer words are flagged degenerate-short.
pub const MIN_CONTINUATION_WORDS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPolicy {
    pub prompt_words: usize,
}

impl Default for SplitPolicy {
    fn default() -> Self {
        SplitPolicy {
            prompt_words: DEFAULT_PROMPT_WORDS,
        }
    }
}

/// Result of splitting a source text; `part1 + separator + part2` is the input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitText<'a> {
    pub part1: &'a str,
    pub separator: &'a str,
    pub part2: &'a str,
}

/// Number of maximal non-whitespace runs.
pub fn count_words(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Byte spans of each word (maximal run of non-whitespace characters).
fn word_spans(text: &str) -> impl Iterator<Item = (usize, usize)> + '_ {
    let mut iter = text.char_indices().peekable();
    std::iter::from_fn(move || {
        while let Some(&(_, c)) = iter.peek() {
            if c.is_whitespace() {
                iter.next();
            } else {
                break;
            }
        }
        let (start, _) = *iter.peek()?;
        let mut end = start;
        while let Some(&(i, c)) = iter.peek() {
            if c.is_whitespace() {
                break;
            }
            end = i + c.len_utf8();
            iter.next();
        }
        Some((start, end))
    })
}

/// Split `full_text` after its first `policy.prompt_words` words.
///
/// Leading whitespace stays with `part1`, the whitespace between the parts is
/// returned as `separator`, and everything after it (including trailing
/// whitespace) is `part2`.
pub fn split_document(full_text: &str, policy: SplitPolicy) -> Result<SplitText<'_>> {
    let n = policy.prompt_words;
    let mut spans = word_spans(full_text);
    let cut = if n == 0 {
        Some((0, 0))
    } else {
        spans.by_ref().nth(n - 1)
    };
    let next = spans.next();
    match (cut, next) {
        (Some((_, end1)), Some((start2, _))) => Ok(SplitText {
            part1: &full_text[..end1],
            separator: &full_text[end1..start2],
            part2: &full_text[start2..],
        }),
        _ => Err(Error::TooShort {
            words: count_words(full_text),
            needed: n,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentPair {
    pub doc_id: String,
    pub genre: String,
    pub language: String,
    pub part1_text: String,
    pub part2_text: String,
    pub word_count_part1: usize,
    /// False when the source was shorter than the prompt policy or part2 is empty.
    pub valid: bool,
}

impl DocumentPair {
    pub fn from_source(
        doc_id: impl Into<String>,
        genre: impl Into<String>,
        language: impl Into<String>,
        full_text: &str,
        policy: SplitPolicy,
    ) -> Result<Self> {
        let split = split_document(full_text, policy)?;
        Ok(DocumentPair {
            doc_id: doc_id.into(),
            genre: genre.into(),
            language: language.into(),
            part1_text: split.part1.to_string(),
            part2_text: split.part2.to_string(),
            word_count_part1: policy.prompt_words,
            valid: true,
        })
    }

    /// Build a pair from already split parts, checking them against `policy`.
    pub fn from_parts(
        doc_id: impl Into<String>,
        genre: impl Into<String>,
        language: impl Into<String>,
        part1_text: String,
        part2_text: String,
        policy: SplitPolicy,
    ) -> Self {
        let word_count_part1 = count_words(&part1_text);
        let valid = word_count_part1 == policy.prompt_words && count_words(&part2_text) > 0;
        DocumentPair {
            doc_id: doc_id.into(),
            genre: genre.into(),
            language: language.into(),
            part1_text,
            part2_text,
            word_count_part1,
            valid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointKind {
    Chat,
    Completion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemPromptId {
    None,
    Minimal,
    MinimalCzech,
    LongAssistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub config_id: String,
    pub endpoint_kind: EndpointKind,
    pub model_name: String,
    pub temperature: f64,
    pub system_prompt_id: SystemPromptId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub appended_instruction: Option<String>,
    /// Name of the endpoint profile serving this model.
    #[serde(default = "default_endpoint_name")]
    pub endpoint: String,
}

fn default_endpoint_name() -> String {
    "default".to_string()
}

/// Temperatures swept by default: deterministic, compromise, and native sampling.
pub const TEMPERATURE_PRESETS: [f64; 3] = [0.0, 0.5, 1.0];

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.config_id.trim().is_empty() {
            return Err(Error::Config("config_id must not be empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(Error::Config(format!(
                "{}: temperature {} outside [0, 2]",
                self.config_id, self.temperature
            )));
        }
        if self.endpoint_kind == EndpointKind::Completion
            && self.system_prompt_id != SystemPromptId::None
        {
            return Err(Error::Config(format!(
                "{}: completion endpoints take no system prompt",
                self.config_id
            )));
        }
        Ok(())
    }
}

/// Where and when a continuation came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_name: String,
    pub temperature: f64,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    /// Hex SHA-256 of the prompt payload.
    pub prompt_hash: String,
    #[serde(default)]
    pub retries: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Continuation {
    pub doc_id: String,
    pub model_config_id: String,
    #[serde(skip)]
    pub text: String,
    pub degenerate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degenerate_reason: Option<String>,
    pub provenance: Provenance,
}

// ---------------------------------------------------------------------------
// Manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub doc_id: String,
    pub genre: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    pub part1: PathBuf,
    pub part2: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestFile {
    format: String,
    corpus_id: String,
    language: String,
    #[serde(default = "default_prompt_words")]
    prompt_words: usize,
    #[serde(default)]
    genres: Vec<String>,
    #[serde(default, rename = "entry")]
    entries: Vec<ManifestEntry>,
}

fn default_prompt_words() -> usize {
    DEFAULT_PROMPT_WORDS
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub corpus_id: String,
    pub language: String,
    pub policy: SplitPolicy,
    pub genre_taxonomy: Vec<String>,
    pub entries: Vec<ManifestEntry>,
    /// Directory that entry paths are relative to.
    pub base_dir: PathBuf,
    /// Loaded pairs, in entry order.
    pub pairs: Vec<DocumentPair>,
}

impl CorpusManifest {
    pub fn pair(&self, doc_id: &str) -> Option<&DocumentPair> {
        self.pairs.iter().find(|p| p.doc_id == doc_id)
    }

    /// Pairs admitted to analysis.
    pub fn valid_pairs(&self) -> impl Iterator<Item = &DocumentPair> {
        self.pairs.iter().filter(|p| p.valid)
    }

    fn to_file(&self) -> ManifestFile {
        ManifestFile {
            format: MANIFEST_FORMAT.to_string(),
            corpus_id: self.corpus_id.clone(),
            language: self.language.clone(),
            prompt_words: self.policy.prompt_words,
            genres: self.genre_taxonomy.clone(),
            entries: self.entries.clone(),
        }
    }

    /// Canonical TOML text of the manifest (entries in stored order).
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_file()).expect("manifest serializes")
    }
}

fn read_text(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.replace("\r\n", "\n"))
}

pub fn load_manifest(path: &Path) -> Result<CorpusManifest> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ManifestFile =
        toml::from_str(&raw).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    let location = path.display().to_string();
    if file.format != MANIFEST_FORMAT {
        return Err(Error::parse(
            location,
            format!("field `format`: expected {MANIFEST_FORMAT}, found {}", file.format),
        ));
    }
    let mut seen = BTreeSet::new();
    for (i, entry) in file.entries.iter().enumerate() {
        if !seen.insert(entry.doc_id.as_str()) {
            return Err(Error::parse(
                location,
                format!("entry {}: duplicate doc_id `{}`", i + 1, entry.doc_id),
            ));
        }
        if !file.genres.is_empty() && !file.genres.contains(&entry.genre) {
            return Err(Error::parse(
                location,
                format!(
                    "entry {} (`{}`): genre `{}` not in genre taxonomy",
                    i + 1,
                    entry.doc_id,
                    entry.genre
                ),
            ));
        }
    }
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let missing: Vec<PathBuf> = file
        .entries
        .iter()
        .flat_map(|e| [&e.part1, &e.part2])
        .map(|p| base_dir.join(p))
        .filter(|p| !p.is_file())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingFile(missing));
    }
    let policy = SplitPolicy {
        prompt_words: file.prompt_words,
    };
    let pairs = file
        .entries
        .iter()
        .map(|e| {
            Ok(DocumentPair::from_parts(
                e.doc_id.clone(),
                e.genre.clone(),
                e.language.clone().unwrap_or_else(|| file.language.clone()),
                read_text(&base_dir.join(&e.part1))?,
                read_text(&base_dir.join(&e.part2))?,
                policy,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CorpusManifest {
        corpus_id: file.corpus_id,
        language: file.language,
        policy,
        genre_taxonomy: file.genres,
        entries: file.entries,
        base_dir,
        pairs,
    })
}

pub fn write_manifest(manifest: &CorpusManifest, path: &Path) -> Result<()> {
    write_atomic(path, manifest.to_toml().as_bytes())
}

/// Source document for [`build_corpus`].
#[derive(Debug, Clone)]
pub struct SourceDocument {
    pub doc_id: String,
    pub genre: String,
    pub text: String,
}

/// Split every source, write `texts/<doc>.part1.txt` / `.part2.txt` and a
/// manifest under `out_dir`. Sources that are too short are skipped and
/// returned alongside the manifest.
pub fn build_corpus(
    corpus_id: &str,
    language: &str,
    sources: &[SourceDocument],
    policy: SplitPolicy,
    out_dir: &Path,
) -> Result<(CorpusManifest, Vec<String>)> {
    let texts = out_dir.join("texts");
    fs::create_dir_all(&texts).map_err(|e| Error::io(&texts, e))?;
    let mut entries = Vec::new();
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    let mut genres = BTreeSet::new();
    for src in sources {
        let text = src.text.replace("\r\n", "\n");
        match DocumentPair::from_source(&src.doc_id, &src.genre, language, &text, policy) {
            Ok(pair) => {
                let p1 = PathBuf::from("texts").join(format!("{}.part1.txt", src.doc_id));
                let p2 = PathBuf::from("texts").join(format!("{}.part2.txt", src.doc_id));
                write_atomic(&out_dir.join(&p1), pair.part1_text.as_bytes())?;
                write_atomic(&out_dir.join(&p2), pair.part2_text.as_bytes())?;
                genres.insert(src.genre.clone());
                entries.push(ManifestEntry {
                    doc_id: src.doc_id.clone(),
                    genre: src.genre.clone(),
                    language: None,
                    part1: p1,
                    part2: p2,
                });
                pairs.push(pair);
            }
            Err(Error::TooShort { .. }) => skipped.push(src.doc_id.clone()),
            Err(e) => return Err(e),
        }
    }
    let manifest = CorpusManifest {
        corpus_id: corpus_id.to_string(),
        language: language.to_string(),
        policy,
        genre_taxonomy: genres.into_iter().collect(),
        entries,
        base_dir: out_dir.to_path_buf(),
        pairs,
    };
    write_manifest(&manifest, &out_dir.join("manifest.toml"))?;
    Ok((manifest, skipped))
}

/// Write via a sibling temporary file and rename, so readers never observe a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Continuations

/// In-memory continuation slots keyed by `(doc_id, config_id)`.
///
/// Mutation goes through `&mut self`, so a single writer owns the store.
#[derive(Debug, Default, Clone)]
pub struct ContinuationSet {
    slots: BTreeMap<(String, String), Continuation>,
}

impl ContinuationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn attach_continuation(
        &mut self,
        pair: &DocumentPair,
        cont: Continuation,
        force: bool,
    ) -> Result<()> {
        if cont.doc_id != pair.doc_id {
            return Err(Error::Precondition(format!(
                "continuation doc_id `{}` does not match pair `{}`",
                cont.doc_id, pair.doc_id
            )));
        }
        let key = (cont.doc_id.clone(), cont.model_config_id.clone());
        if !force && self.slots.contains_key(&key) {
            return Err(Error::DuplicateContinuation {
                doc_id: key.0,
                config_id: key.1,
            });
        }
        self.slots.insert(key, cont);
        Ok(())
    }

    pub fn get(&self, doc_id: &str, config_id: &str) -> Option<&Continuation> {
        self.slots.get(&(doc_id.to_string(), config_id.to_string()))
    }

    pub fn for_config<'a>(&'a self, config_id: &'a str) -> impl Iterator<Item = &'a Continuation> {
        self.slots.values().filter(move |c| c.model_config_id == config_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Continuation> {
        self.slots.values()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

/// Continuations persisted as `<root>/<config_id>/<doc_id>.txt` plus a
/// `<doc_id>.json` provenance record. The JSON record is written last and
/// marks the slot as complete.
#[derive(Debug, Clone)]
pub struct ContinuationStore {
    root: PathBuf,
}

impl ContinuationStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ContinuationStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn text_path(&self, doc_id: &str, config_id: &str) -> PathBuf {
        self.root.join(config_id).join(format!("{doc_id}.txt"))
    }

    fn meta_path(&self, doc_id: &str, config_id: &str) -> PathBuf {
        self.root.join(config_id).join(format!("{doc_id}.json"))
    }

    pub fn contains(&self, doc_id: &str, config_id: &str) -> bool {
        self.meta_path(doc_id, config_id).is_file() && self.text_path(doc_id, config_id).is_file()
    }

    pub fn save(&self, cont: &Continuation, force: bool) -> Result<()> {
        if !force && self.contains(&cont.doc_id, &cont.model_config_id) {
            return Err(Error::DuplicateContinuation {
                doc_id: cont.doc_id.clone(),
                config_id: cont.model_config_id.clone(),
            });
        }
        let meta = serde_json::to_string_pretty(cont).expect("continuation serializes");
        let meta_path = self.meta_path(&cont.doc_id, &cont.model_config_id);
        if force && meta_path.exists() {
            fs::remove_file(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        }
        write_atomic(
            &self.text_path(&cont.doc_id, &cont.model_config_id),
            cont.text.as_bytes(),
        )?;
        write_atomic(&meta_path, meta.as_bytes())
    }

    pub fn load(&self, doc_id: &str, config_id: &str) -> Result<Option<Continuation>> {
        if !self.contains(doc_id, config_id) {
            return Ok(None);
        }
        let meta_path = self.meta_path(doc_id, config_id);
        let raw = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let mut cont: Continuation = serde_json::from_str(&raw)
            .map_err(|e| Error::parse(meta_path.display().to_string(), e.to_string()))?;
        cont.text = read_text(&self.text_path(doc_id, config_id))?;
        Ok(Some(cont))
    }

    /// Load every stored continuation whose document is in `manifest`.
    pub fn load_all(&self, manifest: &CorpusManifest, configs: &[ModelConfig]) -> Result<ContinuationSet> {
        let mut set = ContinuationSet::new();
        for config in configs {
            for pair in &manifest.pairs {
                if let Some(cont) = self.load(&pair.doc_id, &config.config_id)? {
                    set.attach_continuation(pair, cont, false)?;
                }
            }
        }
        Ok(set)
    }
}
