//! Declarative end-to-end runs: generate, features, score, bench, cluster,
//! report. Each analysis stage records a hash of its inputs and is skipped
//! when the inputs and its outputs are unchanged.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cluster::{cluster_models, Dendrogram, Linkage, Metric, Tree};
use crate::corpus::{
    load_manifest, write_atomic, ContinuationSet, ContinuationStore, CorpusManifest, EndpointKind, ModelConfig, SystemPromptId,
};
use crate::dimensions::{builtin_model_source, parse_model_at, score_dimensions, DimensionModel, DimensionScores};
use crate::error::{Error, Result};
use crate::features::{english_registry_source, extract_features, parse_feature_matrix, parse_registry, FeatureDef};
use crate::generate::{
    run_batch, ApiStyle, BatchOptions, EndpointClient, EndpointProfile, GenerationJob, JobState, PromptTexts,
    DEFAULT_MAX_OUTPUT_WORDS, DEFAULT_RETRY_BUDGET,
};
use crate::report::{
    heatmap_table, pair_scores, ranking_table, render_heatmap, render_ranking, render_scatter, scatter_tables,
    shift_summary, ReportKind, ReportManifest, ReportSpec,
};
use crate::stats::{
    benchmark, doc_of, human_baseline, BenchmarkResult, BootstrapConfig, HumanBaseline, RngSeed, ShiftSample,
    DEFAULT_ITERS, MIN_ITERS,
};
use crate::tagger::tag_text;

pub const RUN_FORMAT: &str = "styloshift-run/1";
pub const RESULTS_FORMAT: &str = "styloshift-results/1";
pub const BUILTIN_PREFIX: &str = "builtin:";

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub max_output_words: usize,
    pub retry_budget: u32,
    pub concurrency: usize,
    pub serial: bool,
    pub force: bool,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            max_output_words: DEFAULT_MAX_OUTPUT_WORDS,
            retry_budget: DEFAULT_RETRY_BUDGET,
            concurrency: 4,
            serial: false,
            force: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StatsParams {
    pub iters: usize,
    pub seed: Option<u64>,
    pub m_tests: Option<usize>,
    pub linkage: Linkage,
}

impl Default for StatsParams {
    fn default() -> Self {
        StatsParams {
            iters: DEFAULT_ITERS,
            seed: None,
            m_tests: None,
            linkage: Linkage::default(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunFile {
    format: String,
    corpus: PathBuf,
    dimension_model: Option<String>,
    feature_registry: Option<String>,
    feature_matrix: Option<PathBuf>,
    workspace: Option<PathBuf>,
    continuations: Option<PathBuf>,
    long_system_prompt: Option<PathBuf>,
    #[serde(default)]
    truncate_to_reference: bool,
    #[serde(default)]
    generation: GenerationParams,
    #[serde(default)]
    stats: StatsParams,
    #[serde(default, rename = "endpoint")]
    endpoints: Vec<EndpointProfile>,
    #[serde(default, rename = "model")]
    models: Vec<toml::Spanned<ModelConfig>>,
    #[serde(default, rename = "report")]
    reports: Vec<ReportSpec>,
}

/// A loaded run configuration. Paths are already resolved against the
/// directory of the configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus: PathBuf,
    /// `builtin:<name>` or a path.
    pub dimension_model: Option<String>,
    pub feature_registry: Option<String>,
    /// Precomputed features used instead of the built-in tagger.
    pub feature_matrix: Option<PathBuf>,
    pub workspace: PathBuf,
    pub continuations: Option<PathBuf>,
    pub long_system_prompt: Option<PathBuf>,
    pub truncate_to_reference: bool,
    pub generation: GenerationParams,
    pub stats: StatsParams,
    pub endpoints: Vec<EndpointProfile>,
    pub models: Vec<ModelConfig>,
    /// Where each model was defined, for diagnostics.
    pub model_locations: Vec<String>,
    pub reports: Vec<ReportSpec>,
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

fn resolve_ref(base: &Path, r: Option<String>) -> Option<String> {
    r.map(|r| {
        if r.starts_with(BUILTIN_PREFIX) {
            r
        } else {
            resolve(base, PathBuf::from(r)).display().to_string()
        }
    })
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base, &path.display().to_string())
    }

    pub fn parse(text: &str, base: &Path, location: &str) -> Result<Self> {
        let file: RunFile = toml::from_str(text).map_err(|e| Error::parse(location, e.to_string()))?;
        if file.format != RUN_FORMAT {
            return Err(Error::parse(
                location,
                format!("field `format`: expected {RUN_FORMAT}, found {}", file.format),
            ));
        }
        let model_locations = file
            .models
            .iter()
            .map(|m| format!("{location}:{}", line_of(text, m.span().start)))
            .collect();
        Ok(RunConfig {
            corpus: resolve(base, file.corpus),
            dimension_model: resolve_ref(base, file.dimension_model),
            feature_registry: resolve_ref(base, file.feature_registry),
            feature_matrix: file.feature_matrix.map(|p| resolve(base, p)),
            workspace: resolve(base, file.workspace.unwrap_or_else(|| PathBuf::from("workspace"))),
            continuations: file.continuations.map(|p| resolve(base, p)),
            long_system_prompt: file.long_system_prompt.map(|p| resolve(base, p)),
            truncate_to_reference: file.truncate_to_reference,
            generation: file.generation,
            stats: file.stats,
            endpoints: file.endpoints,
            models: file.models.into_iter().map(|m| m.into_inner()).collect(),
            model_locations,
            reports: file.reports,
        })
    }

    /// Number of hypotheses for the Bonferroni correction: configurations
    /// times dimensions unless overridden.
    pub fn m_tests(&self, dims: usize) -> usize {
        self.stats.m_tests.unwrap_or(self.models.len() * dims)
    }

    pub fn continuation_root(&self) -> PathBuf {
        self.continuations
            .clone()
            .unwrap_or_else(|| self.workspace.join("continuations"))
    }

    fn model_source(&self) -> Result<(String, String)> {
        let r = self
            .dimension_model
            .as_deref()
            .ok_or_else(|| Error::Config("no dimension model configured".into()))?;
        match r.strip_prefix(BUILTIN_PREFIX) {
            Some(name) => builtin_model_source(name)
                .map(|s| (s.to_string(), r.to_string()))
                .ok_or_else(|| Error::Config(format!("unknown built-in dimension model `{name}`"))),
            None => Ok((fs::read_to_string(r).map_err(|e| Error::io(r, e))?, r.to_string())),
        }
    }

    pub fn load_dimension_model(&self) -> Result<(DimensionModel<f64>, String)> {
        let (text, loc) = self.model_source()?;
        Ok((parse_model_at(&text, &loc)?, text))
    }

    pub fn load_registry(&self) -> Result<(Vec<FeatureDef>, String)> {
        let text = match self.feature_registry.as_deref() {
            None | Some("builtin:en") => english_registry_source().to_string(),
            Some(r) if r.starts_with(BUILTIN_PREFIX) => {
                return Err(Error::Config(format!("unknown built-in feature registry `{r}`")))
            }
            Some(path) => fs::read_to_string(path).map_err(|e| Error::io(path, e))?,
        };
        Ok((parse_registry(&text)?, text))
    }

    fn report_specs(&self) -> Vec<ReportSpec> {
        if !self.reports.is_empty() {
            return self.reports.clone();
        }
        [
            (ReportKind::Heatmap, "heatmap.svg"),
            (ReportKind::Ranking, "ranking.svg"),
            (ReportKind::ScatterGrid, "scatter.svg"),
        ]
        .into_iter()
        .map(|(k, p)| ReportSpec::new(k, p))
        .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Info,
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub level: Level,
    pub location: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.level {
            Level::Info => "info",
            Level::Warning => "warning",
            Level::Error => "error",
        };
        write!(f, "{level}: {}: {}", self.location, self.message)
    }
}

fn style_matches(style: ApiStyle, kind: EndpointKind) -> bool {
    matches!(
        (style, kind),
        (ApiStyle::ChatJson, EndpointKind::Chat) | (ApiStyle::CompletionJson, EndpointKind::Completion)
    )
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(|d| d.level == Level::Error)
}

/// Check references and schema rules without doing any work.
pub fn validate(cfg: &RunConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut push = |level, location: &str, message: String| {
        out.push(Diagnostic {
            level,
            location: location.to_string(),
            message,
        })
    };

    if let Err(e) = load_manifest(&cfg.corpus) {
        push(Level::Error, "corpus", e.to_string());
    }

    let model = match &cfg.dimension_model {
        None => {
            push(Level::Error, "dimension_model", "no dimension model configured".into());
            None
        }
        Some(_) => match cfg.load_dimension_model() {
            Ok((m, _)) => Some(m),
            Err(e) => {
                push(Level::Error, "dimension_model", e.to_string());
                None
            }
        },
    };
    if let Some(m) = &model {
        for d in m.empty_dimensions() {
            push(
                Level::Error,
                "dimension_model",
                format!("dimension {d} has no member features; supply feature parameters"),
            );
        }
    }

    match &cfg.feature_matrix {
        Some(p) if !p.is_file() => push(Level::Error, "feature_matrix", format!("{} does not exist", p.display())),
        Some(_) => {}
        None => match cfg.load_registry() {
            Ok((reg, _)) => {
                if let Some(m) = &model {
                    let produced: BTreeSet<&str> = reg.iter().map(|d| d.feature_id.as_str()).collect();
                    let missing: Vec<&str> = m.feature_ids().filter(|f| !produced.contains(f)).collect();
                    if !missing.is_empty() {
                        push(
                            Level::Error,
                            "feature_registry",
                            format!("model features not produced by the registry: {}", missing.join(", ")),
                        );
                    }
                }
            }
            Err(e) => push(Level::Error, "feature_registry", e.to_string()),
        },
    }

    if cfg.models.is_empty() {
        push(Level::Error, "model", "nothing to benchmark: no model configurations".into());
    }
    let loc = |k: usize| cfg.model_locations.get(k).cloned().unwrap_or_else(|| format!("model[{k}]"));
    let mut first_seen: BTreeMap<&str, usize> = BTreeMap::new();
    for (k, m) in cfg.models.iter().enumerate() {
        if let Some(&j) = first_seen.get(m.config_id.as_str()) {
            push(
                Level::Error,
                &loc(k),
                format!("duplicate config_id `{}` (first defined at {}, again at {})", m.config_id, loc(j), loc(k)),
            );
        } else {
            first_seen.insert(&m.config_id, k);
        }
        if let Err(e) = m.validate() {
            push(Level::Error, &loc(k), e.to_string());
        }
        if m.config_id.contains(['#', '/', '\\']) || m.config_id.starts_with('.') {
            push(
                Level::Error,
                &loc(k),
                format!("config_id `{}` may not contain `#`, `/` or `\\` or start with `.`", m.config_id),
            );
        }
        if m.system_prompt_id == SystemPromptId::LongAssistant {
            match &cfg.long_system_prompt {
                None => push(
                    Level::Error,
                    &loc(k),
                    format!("{}: long_assistant needs `long_system_prompt`", m.config_id),
                ),
                Some(p) if !p.is_file() => {
                    push(Level::Error, "long_system_prompt", format!("{} does not exist", p.display()))
                }
                _ => {}
            }
            if m.appended_instruction.is_none() {
                push(
                    Level::Error,
                    &loc(k),
                    format!("{}: long_assistant needs an appended_instruction", m.config_id),
                );
            }
        }
        match cfg.endpoints.iter().find(|e| e.name == m.endpoint) {
            None if !cfg.endpoints.is_empty() => push(
                Level::Error,
                &loc(k),
                format!("{}: unknown endpoint `{}`", m.config_id, m.endpoint),
            ),
            Some(e) if !style_matches(e.api_style, m.endpoint_kind) => push(
                Level::Error,
                &loc(k),
                format!(
                    "{}: endpoint `{}` speaks {:?} but the configuration is {:?}",
                    m.config_id, e.name, e.api_style, m.endpoint_kind
                ),
            ),
            _ => {}
        }
    }
    if cfg.endpoints.is_empty() && !cfg.models.is_empty() {
        push(
            Level::Warning,
            "endpoint",
            "no endpoints configured; only stored continuations are used".into(),
        );
    }
    let mut names = BTreeSet::new();
    for e in &cfg.endpoints {
        if !names.insert(e.name.as_str()) {
            push(Level::Error, "endpoint", format!("duplicate endpoint name `{}`", e.name));
        }
    }

    if cfg.stats.seed.is_none() {
        push(Level::Error, "stats.seed", "a seed is mandatory for benchmarking".into());
    }
    if cfg.stats.iters < MIN_ITERS {
        push(
            Level::Error,
            "stats.iters",
            format!("at least {MIN_ITERS} bootstrap iterations required, got {}", cfg.stats.iters),
        );
    }
    if cfg.stats.m_tests == Some(0) {
        push(Level::Error, "stats.m_tests", "m_tests must be positive".into());
    }
    if let Some(m) = &model {
        let dims = m.dim_count();
        let m_tests = cfg.m_tests(dims);
        let how = if cfg.stats.m_tests.is_some() {
            "overridden".to_string()
        } else {
            format!("{} configs × {dims} dimensions", cfg.models.len())
        };
        push(Level::Info, "stats.m_tests", format!("m_tests = {m_tests} ({how})"));
    }

    let mut outputs = BTreeSet::new();
    for (k, r) in cfg.reports.iter().enumerate() {
        if !(r.color_cap_multiplier > 0.0 && r.color_cap_multiplier.is_finite()) {
            push(
                Level::Error,
                &format!("report[{k}]"),
                format!("color_cap_multiplier must be positive, got {}", r.color_cap_multiplier),
            );
        }
        if !outputs.insert(&r.output_path) {
            push(
                Level::Error,
                &format!("report[{k}]"),
                format!("output {} written twice", r.output_path.display()),
            );
        }
    }
    out.sort_by_key(|d| std::cmp::Reverse(d.level));
    out
}

// ---------------------------------------------------------------------------
// Seeds and hashing

/// Seed of a named random substream: the first eight bytes (little endian)
/// of `sha256(seed_le || label)`.
pub fn derive_seed(seed: u64, label: &str) -> RngSeed {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    RngSeed(u64::from_le_bytes(d[..8].try_into().expect("8 bytes")))
}

/// Length-prefixed field hashing, so field boundaries are unambiguous.
struct InputHash(Sha256);

impl InputHash {
    fn new(stage: &str) -> Self {
        let mut h = InputHash(Sha256::new());
        h.field(env!("CARGO_PKG_VERSION").as_bytes());
        h.field(stage.as_bytes());
        h
    }

    fn field(&mut self, bytes: &[u8]) -> &mut Self {
        self.0.update((bytes.len() as u64).to_le_bytes());
        self.0.update(bytes);
        self
    }

    fn finish(self) -> String {
        format!("{:x}", self.0.finalize())
    }
}

fn sha_file(path: &Path) -> Option<String> {
    fs::read(path).ok().map(|b| format!("{:x}", Sha256::digest(&b)))
}

#[derive(Debug, Serialize, Deserialize)]
struct Stamp {
    input_hash: String,
    outputs: BTreeMap<String, String>,
}

struct Workspace {
    root: PathBuf,
}

impl Workspace {
    fn stamp_path(&self, stage: &str) -> PathBuf {
        self.root.join("stamps").join(format!("{stage}.json"))
    }

    fn dir(&self, stage: &str) -> PathBuf {
        self.root.join(stage)
    }

    fn is_fresh(&self, stage: &str, input_hash: &str) -> bool {
        let Ok(raw) = fs::read_to_string(self.stamp_path(stage)) else {
            return false;
        };
        let Ok(stamp) = serde_json::from_str::<Stamp>(&raw) else {
            return false;
        };
        stamp.input_hash == input_hash
            && stamp
                .outputs
                .iter()
                .all(|(rel, sha)| sha_file(&self.root.join(rel)).as_deref() == Some(sha.as_str()))
    }

    /// Start a stage: drop its stamp and previous outputs.
    fn reset(&self, stage: &str) -> Result<PathBuf> {
        let stamp = self.stamp_path(stage);
        if stamp.exists() {
            fs::remove_file(&stamp).map_err(|e| Error::io(&stamp, e))?;
        }
        let dir = self.dir(stage);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }

    fn seal(&self, stage: &str, input_hash: String) -> Result<()> {
        let mut outputs = BTreeMap::new();
        let dir = self.dir(stage);
        let mut entries: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .flatten()
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        entries.sort();
        for p in entries {
            let rel = p.strip_prefix(&self.root).expect("inside workspace").to_string_lossy().replace('\\', "/");
            outputs.insert(rel, sha_file(&p).unwrap_or_default());
        }
        let json = serde_json::to_string_pretty(&Stamp { input_hash, outputs }).expect("stamp serializes");
        write_atomic(&self.stamp_path(stage), json.as_bytes())
    }

    fn read(&self, rel: &str) -> Result<String> {
        let p = self.root.join(rel);
        fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
    }
}

// ---------------------------------------------------------------------------
// Results files

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedConfig {
    pub config_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub format: String,
    pub model_id: String,
    pub dimensions: Vec<String>,
    pub iters: usize,
    pub seed: u64,
    pub m_tests: usize,
    pub baseline: HumanBaseline<f64>,
    pub results: Vec<BenchmarkResult<f64>>,
    pub skipped: Vec<SkippedConfig>,
}

impl ResultsFile {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DendrogramFile {
    pub linkage: Linkage,
    pub leaves: Vec<String>,
    pub leaf_order: Vec<usize>,
    pub merges: Vec<crate::cluster::Merge<f64>>,
    pub tree: Tree<f64>,
}

impl DendrogramFile {
    pub fn from_dendrogram(d: &Dendrogram<f64>) -> Self {
        DendrogramFile {
            linkage: d.linkage,
            leaves: d.leaves.clone(),
            leaf_order: d.leaf_order.clone(),
            merges: d.merges.clone(),
            tree: d.tree(),
        }
    }

    pub fn dendrogram(&self) -> Dendrogram<f64> {
        Dendrogram {
            linkage: self.linkage,
            leaves: self.leaves.clone(),
            merges: self.merges.clone(),
            leaf_order: self.leaf_order.clone(),
        }
    }
}

/// Scores table: `chunk_id` followed by one column per dimension.
pub fn write_scores_csv(scores: &[DimensionScores<f64>], dim_ids: &[String]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["chunk_id".to_string()];
    header.extend(dim_ids.iter().cloned());
    w.write_record(&header).expect("in-memory csv");
    for s in scores {
        let mut row = vec![s.chunk_id.clone()];
        row.extend(s.v.iter().map(|x| x.to_string()));
        w.write_record(&row).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn parse_scores_csv(text: &str, model_id: &str, location: &str) -> Result<Vec<DimensionScores<f64>>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(location, e.to_string()))?;
        let v = rec
            .iter()
            .skip(1)
            .map(|c| {
                c.parse::<f64>()
                    .map_err(|_| Error::parse(format!("{location}:{}", k + 2), format!("`{c}` is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(DimensionScores {
            model_id: model_id.to_string(),
            chunk_id: rec.get(0).unwrap_or_default().to_string(),
            v,
        });
    }
    Ok(out)
}

pub const PART1: &str = "part1";
pub const PART2: &str = "part2";

pub fn chunk_id(doc_id: &str, role: &str) -> String {
    format!("{doc_id}#{role}")
}

/// The first `n` words of `text`, keeping the original spacing between them.
pub fn truncate_words(text: &str, n: usize) -> &str {
    let mut count = 0;
    let mut in_word = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if in_word {
                count += 1;
                in_word = false;
                if count == n {
                    return &text[..i];
                }
            }
        } else {
            in_word = true;
        }
    }
    text
}

// ---------------------------------------------------------------------------
// Pipeline

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ran,
    Cached,
    Skipped,
}

impl fmt::Display for StageStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StageStatus::Ran => "ran",
            StageStatus::Cached => "cached",
            StageStatus::Skipped => "skipped",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageReport {
    pub stage: String,
    pub status: StageStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PipelineReport {
    pub stages: Vec<StageReport>,
}

impl PipelineReport {
    pub fn status(&self, stage: &str) -> Option<StageStatus> {
        self.stages.iter().find(|s| s.stage == stage).map(|s| s.status)
    }
}

/// What later stages need from loading the corpus.
struct Inputs {
    manifest: CorpusManifest,
    model: DimensionModel<f64>,
    model_text: String,
    seed: u64,
}

pub const STAGES: [&str; 6] = ["generate", "features", "score", "bench", "cluster", "report"];

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        e => Error::Stage {
            stage: name.to_string(),
            source: Box::new(e),
        },
    })
}

/// Run every stage in order. Validation errors are reported as
/// [`Error::Config`] before any work is done.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineReport> {
    run_stages(cfg, &STAGES)
}

/// Run the named stages (in pipeline order), reusing upstream outputs.
pub fn run_stages(cfg: &RunConfig, only: &[&str]) -> Result<PipelineReport> {
    let diags = validate(cfg);
    if has_errors(&diags) {
        let msgs: Vec<String> = diags.iter().filter(|d| d.level == Level::Error).map(|d| d.to_string()).collect();
        return Err(Error::Config(msgs.join("\n")));
    }
    for d in &diags {
        log::info!("{d}");
    }
    let manifest = load_manifest(&cfg.corpus)?;
    let (model, model_text) = cfg.load_dimension_model()?;
    let inputs = Inputs {
        manifest,
        model,
        model_text,
        seed: cfg.stats.seed.expect("validated"),
    };
    let ws = Workspace {
        root: cfg.workspace.clone(),
    };
    fs::create_dir_all(&ws.root).map_err(|e| Error::io(&ws.root, e))?;

    let mut report = PipelineReport { stages: Vec::new() };
    for name in STAGES {
        if !only.contains(&name) {
            continue;
        }
        let (status, detail) = match name {
            "generate" => stage(name, stage_generate(cfg, &inputs, &ws))?,
            "features" => stage(name, stage_features(cfg, &inputs, &ws))?,
            "score" => stage(name, stage_score(&inputs, &ws))?,
            "bench" => stage(name, stage_bench(cfg, &inputs, &ws))?,
            "cluster" => stage(name, stage_cluster(cfg, &ws))?,
            "report" => stage(name, stage_report(cfg, &inputs, &ws))?,
            _ => unreachable!(),
        };
        log::info!("stage {name}: {status} {detail}");
        report.stages.push(StageReport {
            stage: name.to_string(),
            status,
            detail,
        });
    }
    Ok(report)
}

fn stage_generate(cfg: &RunConfig, inputs: &Inputs, ws: &Workspace) -> Result<(StageStatus, String)> {
    if cfg.endpoints.is_empty() {
        return Ok((StageStatus::Skipped, "no endpoints; using stored continuations".into()));
    }
    let texts = match &cfg.long_system_prompt {
        Some(p) => PromptTexts::with_long_assistant_file(p)?,
        None => PromptTexts::default(),
    };
    let clients: BTreeMap<String, EndpointClient> = cfg
        .endpoints
        .iter()
        .map(|e| (e.name.clone(), EndpointClient::new(e.clone())))
        .collect();
    let pairs: Vec<_> = inputs.manifest.valid_pairs().collect();
    let jobs: Vec<GenerationJob> = pairs
        .iter()
        .flat_map(|p| {
            cfg.models.iter().map(|m| GenerationJob {
                pair: p,
                config: m,
                max_output_words: cfg.generation.max_output_words,
                retry_budget: cfg.generation.retry_budget,
            })
        })
        .collect();
    let store = ContinuationStore::new(cfg.continuation_root());
    let opts = BatchOptions {
        force: cfg.generation.force,
        serial: cfg.generation.serial,
        concurrency: cfg.generation.concurrency,
    };
    let ledger = run_batch(&jobs, &clients, &texts, &store, opts)?;
    ledger.write(&ws.dir("generate").join("run-ledger.json"))?;
    let (done, cached, failed) = (
        ledger.count(JobState::Done),
        ledger.count(JobState::Cached),
        ledger.count(JobState::Failed),
    );
    if failed > 0 {
        return Err(Error::Precondition(format!(
            "{failed} of {} generation jobs failed; see {}",
            jobs.len(),
            ws.dir("generate").join("run-ledger.json").display()
        )));
    }
    let status = if done == 0 { StageStatus::Cached } else { StageStatus::Ran };
    Ok((status, format!("{done} generated, {cached} cached")))
}

struct Chunk {
    id: String,
    text: String,
}

fn collect_chunks(cfg: &RunConfig, inputs: &Inputs) -> Result<Vec<Chunk>> {
    let store = ContinuationStore::new(cfg.continuation_root());
    let set: ContinuationSet = store.load_all(&inputs.manifest, &cfg.models)?;
    let mut chunks = Vec::new();
    for p in inputs.manifest.valid_pairs() {
        chunks.push(Chunk {
            id: chunk_id(&p.doc_id, PART1),
            text: p.part1_text.clone(),
        });
        chunks.push(Chunk {
            id: chunk_id(&p.doc_id, PART2),
            text: p.part2_text.clone(),
        });
        for m in &cfg.models {
            let Some(c) = set.get(&p.doc_id, &m.config_id) else { continue };
            if c.degenerate {
                log::info!(
                    "excluding degenerate continuation ({}, {}): {}",
                    p.doc_id,
                    m.config_id,
                    c.degenerate_reason.as_deref().unwrap_or("unspecified")
                );
                continue;
            }
            let text = if cfg.truncate_to_reference {
                truncate_words(&c.text, crate::corpus::count_words(&p.part2_text)).to_string()
            } else {
                c.text.clone()
            };
            chunks.push(Chunk {
                id: chunk_id(&p.doc_id, &m.config_id),
                text,
            });
        }
    }
    chunks.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(chunks)
}

fn stage_features(cfg: &RunConfig, inputs: &Inputs, ws: &Workspace) -> Result<(StageStatus, String)> {
    let mut h = InputHash::new("features");
    if let Some(matrix) = &cfg.feature_matrix {
        let raw = fs::read(matrix).map_err(|e| Error::io(matrix, e))?;
        h.field(b"matrix").field(&raw).field(inputs.model_text.as_bytes());
        let hash = h.finish();
        if ws.is_fresh("features", &hash) {
            return Ok((StageStatus::Cached, String::new()));
        }
        let dir = ws.reset("features")?;
        let text = String::from_utf8_lossy(&raw);
        let delim = if matrix.extension().is_some_and(|e| e == "tsv") { b'\t' } else { b',' };
        let m = parse_feature_matrix(&text, delim, &inputs.model, &matrix.display().to_string())?;
        let ids: Vec<String> = inputs.model.feature_ids().map(str::to_string).collect();
        let rows: Vec<(String, crate::features::FeatureVector<f64>)> = m.vectors.into_iter().collect();
        write_atomic(&dir.join("features.csv"), features_csv(&rows, &ids).as_bytes())?;
        ws.seal("features", hash)?;
        return Ok((StageStatus::Ran, format!("{} chunks ingested", rows.len())));
    }

    let (registry, registry_text) = cfg.load_registry()?;
    let chunks = collect_chunks(cfg, inputs)?;
    h.field(registry_text.as_bytes());
    for c in &chunks {
        h.field(c.id.as_bytes()).field(c.text.as_bytes());
    }
    let hash = h.finish();
    if ws.is_fresh("features", &hash) {
        return Ok((StageStatus::Cached, format!("{} chunks", chunks.len())));
    }
    let dir = ws.reset("features")?;
    let rows = chunks
        .par_iter()
        .map(|c| {
            let fv = extract_features::<f64>(&tag_text(&c.text), &registry)
                .map_err(|e| Error::Precondition(format!("chunk {}: {e}", c.id)))?;
            if fv.low_confidence {
                log::warn!("chunk {} has only {} word tokens", c.id, fv.token_count);
            }
            Ok((c.id.clone(), fv))
        })
        .collect::<Result<Vec<_>>>()?;
    let ids: Vec<String> = registry.iter().map(|d| d.feature_id.clone()).collect();
    write_atomic(&dir.join("features.csv"), features_csv(&rows, &ids).as_bytes())?;
    ws.seal("features", hash)?;
    Ok((StageStatus::Ran, format!("{} chunks tagged", rows.len())))
}

pub fn features_csv(rows: &[(String, crate::features::FeatureVector<f64>)], ids: &[String]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["chunk_id".to_string(), "token_count".to_string()];
    header.extend(ids.iter().cloned());
    w.write_record(&header).expect("in-memory csv");
    for (id, fv) in rows {
        let mut row = vec![id.clone(), fv.token_count.to_string()];
        row.extend(ids.iter().map(|f| fv.get(f).map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&row).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

fn stage_score(inputs: &Inputs, ws: &Workspace) -> Result<(StageStatus, String)> {
    let features = ws.read("features/features.csv")?;
    let mut h = InputHash::new("score");
    h.field(features.as_bytes()).field(inputs.model_text.as_bytes());
    let hash = h.finish();
    if ws.is_fresh("score", &hash) {
        return Ok((StageStatus::Cached, String::new()));
    }
    let dir = ws.reset("score")?;
    let m = parse_feature_matrix(&features, b',', &inputs.model, "features/features.csv")?;
    let scores = m
        .vectors
        .iter()
        .map(|(id, fv)| score_dimensions(fv, &inputs.model, id))
        .collect::<Result<Vec<_>>>()?;
    let dim_ids: Vec<String> = inputs.model.dim_ids().map(str::to_string).collect();
    write_atomic(&dir.join("scores.csv"), write_scores_csv(&scores, &dim_ids).as_bytes())?;
    ws.seal("score", hash)?;
    Ok((StageStatus::Ran, format!("{} chunks scored", scores.len())))
}

struct ScoreIndex {
    by_chunk: BTreeMap<String, Vec<f64>>,
}

impl ScoreIndex {
    fn get(&self, doc: &str, role: &str) -> Option<&Vec<f64>> {
        self.by_chunk.get(&chunk_id(doc, role))
    }
}

fn load_scores(inputs: &Inputs, ws: &Workspace) -> Result<(String, Vec<DimensionScores<f64>>)> {
    let text = ws.read("score/scores.csv")?;
    let scores = parse_scores_csv(&text, &inputs.model.model_id, "score/scores.csv")?;
    Ok((text, scores))
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn stage_bench(cfg: &RunConfig, inputs: &Inputs, ws: &Workspace) -> Result<(StageStatus, String)> {
    let (scores_text, scores) = load_scores(inputs, ws)?;
    let dims = inputs.model.dim_count();
    let m_tests = cfg.m_tests(dims);
    let mut h = InputHash::new("bench");
    h.field(scores_text.as_bytes())
        .field(&cfg.stats.iters.to_le_bytes())
        .field(&inputs.seed.to_le_bytes())
        .field(&m_tests.to_le_bytes());
    for m in &cfg.models {
        h.field(m.config_id.as_bytes());
    }
    for p in inputs.manifest.valid_pairs() {
        h.field(p.doc_id.as_bytes()).field(p.genre.as_bytes());
    }
    let hash = h.finish();
    if ws.is_fresh("bench", &hash) {
        return Ok((StageStatus::Cached, String::new()));
    }
    let dir = ws.reset("bench")?;

    let index = ScoreIndex {
        by_chunk: scores.into_iter().map(|s| (s.chunk_id, s.v)).collect(),
    };
    let mut baseline_samples = Vec::new();
    for p in inputs.manifest.valid_pairs() {
        if let (Some(v1), Some(v2)) = (index.get(&p.doc_id, PART1), index.get(&p.doc_id, PART2)) {
            let i = sub(v2, v1);
            baseline_samples.push(ShiftSample {
                doc_id: p.doc_id.clone(),
                genre: p.genre.clone(),
                delta_v: i.clone(),
                i,
            });
        }
    }
    let boot = |label: &str| BootstrapConfig {
        iters: cfg.stats.iters,
        seed: derive_seed(inputs.seed, label),
        m_tests,
    };
    let baseline = human_baseline(&baseline_samples, &boot("baseline"))?;

    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for m in &cfg.models {
        let samples: Vec<ShiftSample<f64>> = inputs
            .manifest
            .valid_pairs()
            .filter_map(|p| {
                let v1 = index.get(&p.doc_id, PART1)?;
                let v2 = index.get(&p.doc_id, PART2)?;
                let vm = index.get(&p.doc_id, &m.config_id)?;
                Some(ShiftSample {
                    doc_id: p.doc_id.clone(),
                    genre: p.genre.clone(),
                    delta_v: sub(v2, vm),
                    i: sub(v2, v1),
                })
            })
            .collect();
        match benchmark(&m.config_id, &samples, &boot(&format!("bench:{}", m.config_id))) {
            Ok(r) => results.push(r),
            Err(e @ Error::TooFewSamples { .. }) => {
                log::warn!("skipping {}: {e}", m.config_id);
                skipped.push(SkippedConfig {
                    config_id: m.config_id.clone(),
                    reason: e.to_string(),
                });
            }
            Err(e) => {
                return Err(Error::Precondition(format!("config {}: {e}", m.config_id)));
            }
        }
    }
    results.sort_by(|a, b| a.config_id.cmp(&b.config_id));
    let dim_ids: Vec<String> = inputs.model.dim_ids().map(str::to_string).collect();
    let file = ResultsFile {
        format: RESULTS_FORMAT.to_string(),
        model_id: inputs.model.model_id.clone(),
        dimensions: dim_ids.clone(),
        iters: cfg.stats.iters,
        seed: inputs.seed,
        m_tests,
        baseline,
        results,
        skipped,
    };
    let json = serde_json::to_string_pretty(&file).expect("results serialize");
    write_atomic(&dir.join("results.json"), json.as_bytes())?;
    write_atomic(&dir.join("results.csv"), results_csv(&file).as_bytes())?;
    write_atomic(&dir.join("baseline.csv"), baseline_csv(&file).as_bytes())?;
    ws.seal("bench", hash)?;
    Ok((
        StageStatus::Ran,
        format!("{} configs benchmarked, {} skipped", file.results.len(), file.skipped.len()),
    ))
}

pub fn results_csv(file: &ResultsFile) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "config_id", "n_docs", "dimension", "mean_delta", "mean_delta_ci_low", "mean_delta_ci_high", "se_i", "b",
        "b_ci_low", "b_ci_high", "p_value", "significant", "B", "B_ci_low", "B_ci_high",
    ])
    .expect("in-memory csv");
    for r in &file.results {
        for (d, dim) in file.dimensions.iter().enumerate() {
            w.write_record([
                r.config_id.clone(),
                r.n_docs.to_string(),
                dim.clone(),
                r.mean_delta[d].to_string(),
                r.mean_delta_ci_low[d].to_string(),
                r.mean_delta_ci_high[d].to_string(),
                r.se_i[d].to_string(),
                r.b[d].to_string(),
                r.b_ci_low[d].to_string(),
                r.b_ci_high[d].to_string(),
                r.p_values[d].to_string(),
                r.significant[d].to_string(),
                r.big_b.to_string(),
                r.big_b_ci.0.to_string(),
                r.big_b_ci.1.to_string(),
            ])
            .expect("in-memory csv");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

fn baseline_csv(file: &ResultsFile) -> String {
    let b = &file.baseline;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dimension", "n_docs", "mean_i", "ci_low", "ci_high", "se_i", "p_value", "significant"])
        .expect("in-memory csv");
    for (d, dim) in file.dimensions.iter().enumerate() {
        w.write_record([
            dim.clone(),
            b.n_docs.to_string(),
            b.mean_i[d].to_string(),
            b.ci_low[d].to_string(),
            b.ci_high[d].to_string(),
            b.se_i[d].to_string(),
            b.p_values[d].to_string(),
            b.significant[d].to_string(),
        ])
        .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

fn stage_cluster(cfg: &RunConfig, ws: &Workspace) -> Result<(StageStatus, String)> {
    let results_text = ws.read("bench/results.json")?;
    let mut h = InputHash::new("cluster");
    h.field(results_text.as_bytes())
        .field(format!("{:?}", cfg.stats.linkage).as_bytes());
    let hash = h.finish();
    if ws.is_fresh("cluster", &hash) {
        return Ok((StageStatus::Cached, String::new()));
    }
    let dir = ws.reset("cluster")?;
    let file: ResultsFile =
        serde_json::from_str(&results_text).map_err(|e| Error::parse("bench/results.json", e.to_string()))?;
    if file.results.len() < 2 {
        ws.seal("cluster", hash)?;
        return Ok((StageStatus::Skipped, "fewer than two benchmarked configs".into()));
    }
    let vectors: Vec<(String, Vec<f64>)> = file.results.iter().map(|r| (r.config_id.clone(), r.b.clone())).collect();
    let d = cluster_models(&vectors, cfg.stats.linkage, Metric::Euclidean)?;
    let json = serde_json::to_string_pretty(&DendrogramFile::from_dendrogram(&d)).expect("dendrogram serializes");
    write_atomic(&dir.join("dendrogram.json"), json.as_bytes())?;
    write_atomic(&dir.join("dendrogram.nwk"), format!("{}\n", d.to_newick()).as_bytes())?;
    ws.seal("cluster", hash)?;
    Ok((StageStatus::Ran, format!("{} leaves", d.leaves.len())))
}

fn stage_report(cfg: &RunConfig, inputs: &Inputs, ws: &Workspace) -> Result<(StageStatus, String)> {
    let results_text = ws.read("bench/results.json")?;
    let dendro_text = ws.read("cluster/dendrogram.json").ok();
    let (scores_text, scores) = load_scores(inputs, ws)?;
    let specs = cfg.report_specs();
    let genres: BTreeMap<String, String> = inputs
        .manifest
        .valid_pairs()
        .map(|p| (p.doc_id.clone(), p.genre.clone()))
        .collect();
    let mut h = InputHash::new("report");
    h.field(results_text.as_bytes())
        .field(dendro_text.as_deref().unwrap_or("").as_bytes())
        .field(scores_text.as_bytes())
        .field(serde_json::to_string(&specs).expect("specs serialize").as_bytes())
        .field(serde_json::to_string(&genres).expect("genres serialize").as_bytes())
        .field(&inputs.seed.to_le_bytes());
    let hash = h.finish();
    if ws.is_fresh("report", &hash) {
        return Ok((StageStatus::Cached, String::new()));
    }
    let dir = ws.reset("report")?;
    let file: ResultsFile =
        serde_json::from_str(&results_text).map_err(|e| Error::parse("bench/results.json", e.to_string()))?;
    let dendro = match &dendro_text {
        Some(t) => Some(
            serde_json::from_str::<DendrogramFile>(t)
                .map_err(|e| Error::parse("cluster/dendrogram.json", e.to_string()))?
                .dendrogram(),
        ),
        None => None,
    };
    let labels: Vec<String> = inputs
        .model
        .dimensions
        .iter()
        .map(|d| d.dim_id.clone())
        .collect();

    let by_role = |role: &str| -> Vec<DimensionScores<f64>> {
        scores
            .iter()
            .filter(|s| s.chunk_id.rsplit_once('#').is_some_and(|(_, r)| r == role))
            .cloned()
            .collect()
    };
    let part1 = by_role(PART1);
    let part2 = by_role(PART2);

    let first_spec = specs.first().cloned();
    let mut manifest = ReportManifest::new(
        first_spec.as_ref().map_or(crate::report::DEFAULT_COLOR_CAP, |s| s.color_cap_multiplier),
        first_spec.map(|s| s.palette).unwrap_or_default(),
    );
    for spec in &specs {
        let name = spec.output_path.to_string_lossy().replace('\\', "/");
        let stem = name.strip_suffix(".svg").unwrap_or(&name).to_string();
        match spec.kind {
            ReportKind::Heatmap => {
                if file.results.is_empty() {
                    continue;
                }
                let svg = render_heatmap(&file.results, dendro.as_ref(), &labels, spec)?;
                manifest.emit(&dir, &format!("{stem}.svg"), "heatmap", &svg)?;
                let table = heatmap_table(&file.results, dendro.as_ref(), &labels, spec)?;
                manifest.emit(&dir, &format!("{stem}.csv"), "heatmap-table", &table)?;
            }
            ReportKind::Ranking => {
                if file.results.is_empty() {
                    continue;
                }
                manifest.emit(&dir, &format!("{stem}.svg"), "ranking", &render_ranking(&file.results, spec)?)?;
                manifest.emit(&dir, &format!("{stem}.csv"), "ranking-table", &ranking_table(&file.results))?;
            }
            ReportKind::ScatterGrid => {
                let boot = BootstrapConfig {
                    iters: cfg.stats.iters,
                    seed: derive_seed(inputs.seed, &format!("scatter:{stem}:human")),
                    m_tests: 1,
                };
                scatter_report(
                    &mut manifest,
                    &dir,
                    &format!("{stem}.human"),
                    (&part1, &part2),
                    (PART1, PART2),
                    &genres,
                    &labels,
                    spec,
                    &boot,
                )?;
                for r in &file.results {
                    let model_scores = by_role(&r.config_id);
                    let docs: BTreeSet<&str> = model_scores.iter().map(|s| doc_of(&s.chunk_id)).collect();
                    let reference: Vec<DimensionScores<f64>> =
                        part2.iter().filter(|s| docs.contains(doc_of(&s.chunk_id))).cloned().collect();
                    let boot = BootstrapConfig {
                        seed: derive_seed(inputs.seed, &format!("scatter:{stem}:{}", r.config_id)),
                        ..boot
                    };
                    scatter_report(
                        &mut manifest,
                        &dir,
                        &format!("{stem}.{}", r.config_id),
                        (&reference, &model_scores),
                        (PART2, &r.config_id),
                        &genres,
                        &labels,
                        spec,
                        &boot,
                    )?;
                }
            }
        }
    }
    manifest.write(&dir)?;
    let n = manifest.artifacts.len();
    ws.seal("report", hash)?;
    Ok((StageStatus::Ran, format!("{n} artifacts")))
}

#[allow(clippy::too_many_arguments)]
fn scatter_report(
    manifest: &mut ReportManifest,
    dir: &Path,
    stem: &str,
    (xs, ys): (&[DimensionScores<f64>], &[DimensionScores<f64>]),
    axes: (&str, &str),
    genres: &BTreeMap<String, String>,
    labels: &[String],
    spec: &ReportSpec,
    boot: &BootstrapConfig,
) -> Result<()> {
    if xs.len() < 2 {
        return Ok(());
    }
    let svg = render_scatter(xs, ys, genres, labels, axes, spec, boot)?;
    let points = pair_scores(xs, ys, genres)?;
    let summary = shift_summary(&points, labels, boot);
    let (points_csv, summary_csv) = scatter_tables(&points, &summary, labels);
    manifest.emit(dir, &format!("{stem}.svg"), "scatter", &svg)?;
    manifest.emit(dir, &format!("{stem}.points.csv"), "scatter-points", &points_csv)?;
    manifest.emit(dir, &format!("{stem}.shift.csv"), "scatter-shift", &summary_csv)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_keeps_spacing() {
        assert_eq!(truncate_words("a  b\nc d", 3), "a  b\nc");
        assert_eq!(truncate_words("a b", 5), "a b");
        assert_eq!(truncate_words(" a b ", 1), " a");
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(42, "baseline"), derive_seed(42, "bench:x"));
        assert_eq!(derive_seed(42, "baseline"), derive_seed(42, "baseline"));
    }
}
