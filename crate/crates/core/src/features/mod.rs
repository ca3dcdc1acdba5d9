//! Lexico-grammatical feature extraction.
//!
//! Features are data: a registry file (`styloshift-features/1`) names each
//! feature, its unit, and a detection rule. Counter features are pattern
//! rules (see [`rule`]) normalized per 1000 word tokens; type/token ratio and
//! mean word length are built-in measures reported as-is.

pub mod rule;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dimensions::DimensionModel;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tagger::{verb_forms, TokenStream};
use rule::Pattern;

pub const REGISTRY_FORMAT: &str = "styloshift-features/1";
/// Chunks with fewer word tokens are scored but flagged low-confidence.
pub const LOW_CONFIDENCE_TOKENS: usize = 100;

const ENGLISH_REGISTRY: &str = include_str!("../../data/features-en.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    #[serde(rename = "per_1000_tokens")]
    Per1000Tokens,
    RawRatio,
    MeanValue,
}

#[derive(Debug, Clone)]
pub enum Rule {
    /// Union of pattern matches, one count per matching start position.
    Patterns(Vec<Pattern>),
    /// Moving-average type/token ratio over windows of `window` word tokens.
    MovingTtr { window: usize },
    /// Type/token ratio over the first `tokens` word tokens.
    LeadingTtr { tokens: usize },
    /// Mean length of word tokens in characters.
    MeanWordLength,
}

#[derive(Debug, Clone)]
pub struct FeatureDef {
    pub feature_id: String,
    pub name: String,
    pub unit: Unit,
    /// Rule text as written in the registry.
    pub source: Vec<String>,
    pub rule: Rule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector<T> {
    pub values: BTreeMap<String, T>,
    pub token_count: usize,
    #[serde(default)]
    pub low_confidence: bool,
}

impl<T: Scalar> FeatureVector<T> {
    pub fn get(&self, id: &str) -> Option<T> {
        self.values.get(id).copied()
    }
}

// ---------------------------------------------------------------------------
// Registry loading

#[derive(Debug, Deserialize)]
struct RegistryFile {
    format: String,
    #[serde(default, rename = "list")]
    lists: Vec<ListSpec>,
    #[serde(default, rename = "feature")]
    features: Vec<FeatureSpec>,
}

#[derive(Debug, Deserialize)]
struct ListSpec {
    name: String,
    #[serde(default)]
    inflect: Option<String>,
    #[serde(default)]
    words: Vec<String>,
    /// Names of earlier lists whose words are merged in.
    #[serde(default)]
    include: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct FeatureSpec {
    id: String,
    name: String,
    unit: Unit,
    #[serde(default)]
    rules: Vec<String>,
    #[serde(default)]
    builtin: Option<String>,
}

pub fn load_registry(path: &Path) -> Result<Vec<FeatureDef>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_registry_at(&raw, &path.display().to_string())
}

pub fn parse_registry(text: &str) -> Result<Vec<FeatureDef>> {
    parse_registry_at(text, "<registry>")
}

/// The shipped 67-feature English registry.
pub fn english_registry() -> Vec<FeatureDef> {
    parse_registry_at(ENGLISH_REGISTRY, "features-en.toml").expect("shipped registry is valid")
}

pub fn english_registry_source() -> &'static str {
    ENGLISH_REGISTRY
}

fn parse_registry_at(text: &str, location: &str) -> Result<Vec<FeatureDef>> {
    let file: RegistryFile = toml::from_str(text).map_err(|e| Error::parse(location, e.to_string()))?;
    if file.format != REGISTRY_FORMAT {
        return Err(Error::parse(
            location,
            format!("field `format`: expected {REGISTRY_FORMAT}, found {}", file.format),
        ));
    }
    let mut lists: HashMap<String, Arc<HashSet<String>>> = HashMap::new();
    for spec in &file.lists {
        let mut words = HashSet::new();
        for name in &spec.include {
            let other = lists.get(name).ok_or_else(|| {
                Error::parse(location, format!("list `{}` includes unknown list `{name}`", spec.name))
            })?;
            words.extend(other.iter().cloned());
        }
        for w in &spec.words {
            let w = w.to_lowercase();
            match spec.inflect.as_deref() {
                None => {
                    words.insert(w);
                }
                Some("verb") => words.extend(verb_forms(&w)),
                Some(other) => {
                    return Err(Error::parse(
                        location,
                        format!("list `{}`: unknown inflection `{other}`", spec.name),
                    ))
                }
            }
        }
        if lists.insert(spec.name.clone(), Arc::new(words)).is_some() {
            return Err(Error::parse(location, format!("duplicate list `{}`", spec.name)));
        }
    }
    let resolve = |name: &str| lists.get(name).cloned();
    let mut seen = HashSet::new();
    let mut defs = Vec::with_capacity(file.features.len());
    for spec in file.features {
        if !seen.insert(spec.id.clone()) {
            return Err(Error::DuplicateFeatureId(spec.id));
        }
        let at = |msg: String| Error::parse(format!("{location}: feature {}", spec.id), msg);
        let rule = match (&spec.builtin, spec.rules.is_empty()) {
            (Some(b), true) => parse_builtin(b).map_err(at)?,
            (None, false) => Rule::Patterns(
                spec.rules
                    .iter()
                    .map(|r| Pattern::parse(r, &resolve))
                    .collect::<std::result::Result<_, _>>()
                    .map_err(at)?,
            ),
            _ => return Err(at("exactly one of `rules` or `builtin` is required".into())),
        };
        let expected = match rule {
            Rule::Patterns(_) => Unit::Per1000Tokens,
            Rule::MovingTtr { .. } | Rule::LeadingTtr { .. } => Unit::RawRatio,
            Rule::MeanWordLength => Unit::MeanValue,
        };
        if spec.unit != expected {
            return Err(at(format!("unit {:?} does not fit its rule", spec.unit)));
        }
        defs.push(FeatureDef {
            feature_id: spec.id,
            name: spec.name,
            unit: spec.unit,
            source: spec.builtin.map(|b| vec![b]).unwrap_or(spec.rules),
            rule,
        });
    }
    Ok(defs)
}

fn parse_builtin(spec: &str) -> std::result::Result<Rule, String> {
    let (name, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let num = || {
        arg.parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| format!("builtin `{spec}` needs a positive size"))
    };
    match name {
        "ttr_moving" => Ok(Rule::MovingTtr { window: num()? }),
        "ttr_leading" => Ok(Rule::LeadingTtr { tokens: num()? }),
        "mean_word_length" => Ok(Rule::MeanWordLength),
        _ => Err(format!("unknown builtin `{spec}`")),
    }
}

// ---------------------------------------------------------------------------
// Extraction

fn word_tokens(stream: &TokenStream) -> impl Iterator<Item = &crate::tagger::TaggedToken> {
    stream.tokens.iter().filter(|t| !t.is_punct())
}

fn pattern_count(stream: &TokenStream, patterns: &[Pattern]) -> usize {
    stream
        .sentences()
        .map(|sent| {
            (0..sent.len())
                .filter(|&i| patterns.iter().any(|p| p.matches_at(sent, i)))
                .count()
        })
        .sum()
}

fn moving_ttr(words: &[&str], window: usize) -> f64 {
    if words.is_empty() {
        return 0.0;
    }
    if words.len() <= window {
        let types: HashSet<_> = words.iter().collect();
        return types.len() as f64 / words.len() as f64;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for w in &words[..window] {
        *counts.entry(w).or_default() += 1;
    }
    let mut total = counts.len();
    for i in window..words.len() {
        let out = words[i - window];
        let c = counts.get_mut(out).expect("outgoing word is counted");
        *c -= 1;
        if *c == 0 {
            counts.remove(out);
        }
        *counts.entry(words[i]).or_default() += 1;
        total += counts.len();
    }
    total as f64 / ((words.len() - window + 1) * window) as f64
}

/// Raw match counts for every pattern feature, keyed by feature id.
pub fn count_features(stream: &TokenStream, registry: &[FeatureDef]) -> BTreeMap<String, usize> {
    registry
        .iter()
        .filter_map(|def| match &def.rule {
            Rule::Patterns(p) => Some((def.feature_id.clone(), pattern_count(stream, p))),
            _ => None,
        })
        .collect()
}

pub fn extract_features<T: Scalar>(
    stream: &TokenStream,
    registry: &[FeatureDef],
) -> Result<FeatureVector<T>> {
    let words: Vec<&str> = word_tokens(stream).map(|t| t.lower.as_str()).collect();
    if words.is_empty() {
        return Err(Error::EmptyStream);
    }
    let n = words.len();
    let mut values = BTreeMap::new();
    for def in registry {
        let v = match &def.rule {
            Rule::Patterns(p) => pattern_count(stream, p) as f64 * 1000.0 / n as f64,
            Rule::MovingTtr { window } => moving_ttr(&words, *window),
            Rule::LeadingTtr { tokens } => {
                let head = &words[..n.min(*tokens)];
                let types: HashSet<_> = head.iter().collect();
                types.len() as f64 / head.len() as f64
            }
            Rule::MeanWordLength => {
                words.iter().map(|w| w.chars().count()).sum::<usize>() as f64 / n as f64
            }
        };
        values.insert(def.feature_id.clone(), T::of(v));
    }
    Ok(FeatureVector {
        values,
        token_count: n,
        low_confidence: n < LOW_CONFIDENCE_TOKENS,
    })
}

// ---------------------------------------------------------------------------
// Externally computed feature matrices

#[derive(Debug, Clone)]
pub struct IngestedMatrix<T> {
    pub vectors: BTreeMap<String, FeatureVector<T>>,
    /// Columns not used by the model.
    pub ignored_columns: Vec<String>,
}

/// Read a delimited table whose first column is the chunk id and whose other
/// columns are feature values. An optional `token_count` column fills
/// [`FeatureVector::token_count`]; without it the count is 0 (unknown).
pub fn ingest_feature_matrix<T: Scalar>(
    path: &Path,
    model: &DimensionModel<T>,
) -> Result<IngestedMatrix<T>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let delimiter = if path.extension().is_some_and(|e| e == "tsv") {
        b'\t'
    } else {
        b','
    };
    parse_feature_matrix(&raw, delimiter, model, &path.display().to_string())
}

pub fn parse_feature_matrix<T: Scalar>(
    text: &str,
    delimiter: u8,
    model: &DimensionModel<T>,
    location: &str,
) -> Result<IngestedMatrix<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::parse(location, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() {
        return Err(Error::parse(location, "missing header row"));
    }
    let missing: Vec<String> = model
        .feature_ids()
        .filter(|f| !headers[1..].iter().any(|h| h == f))
        .map(str::to_string)
        .collect();
    if !missing.is_empty() {
        return Err(Error::ColumnMismatch { missing });
    }
    let token_col = headers.iter().position(|h| h == "token_count");
    let mut ignored = Vec::new();
    let mut used = Vec::new();
    for (i, h) in headers.iter().enumerate().skip(1) {
        if Some(i) == token_col {
            continue;
        }
        if model.has_feature(h) {
            used.push(i);
        } else {
            ignored.push(h.clone());
        }
    }
    if !ignored.is_empty() {
        log::warn!("{location}: ignoring columns not in model: {}", ignored.join(", "));
    }
    let mut vectors = BTreeMap::new();
    for (row_no, record) in reader.records().enumerate() {
        let line = row_no + 2;
        let record = record.map_err(|e| Error::parse(format!("{location}:{line}"), e.to_string()))?;
        let id = record.get(0).unwrap_or_default().to_string();
        let num = |i: usize| -> Result<f64> {
            let cell = record.get(i).unwrap_or_default();
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    Error::parse(
                        format!("{location}:{line}"),
                        format!("column `{}`: `{cell}` is not a finite number", headers[i]),
                    )
                })
        };
        let mut values = BTreeMap::new();
        for &i in &used {
            values.insert(headers[i].clone(), T::of(num(i)?));
        }
        let token_count = match token_col {
            Some(i) => num(i)? as usize,
            None => 0,
        };
        let fv = FeatureVector {
            values,
            token_count,
            low_confidence: token_col.is_some() && token_count < LOW_CONFIDENCE_TOKENS,
        };
        if vectors.insert(id.clone(), fv).is_some() {
            return Err(Error::parse(
                format!("{location}:{line}"),
                format!("duplicate chunk id `{id}`"),
            ));
        }
    }
    Ok(IngestedMatrix {
        vectors,
        ignored_columns: ignored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tagger::{parse_tagged, TaggedToken};
    use proptest::prelude::*;

    fn stream(words: &[(&str, &str)]) -> TokenStream {
        let toks = words
            .iter()
            .enumerate()
            .map(|(i, (w, t))| TaggedToken::new(*w, *t, i))
            .collect();
        TokenStream::new(toks, vec![words.len()]).unwrap()
    }

    fn registry() -> Vec<FeatureDef> {
        english_registry()
    }

    #[test]
    fn shipped_registry_has_67_features() {
        assert_eq!(registry().len(), 67);
    }

    #[test]
    fn first_person_per_1000() {
        // 10 word tokens, "I" twice: 2 * 1000 / 10 = 200.
        let s = stream(&[
            ("I", "PRP"), ("think", "VBP"), ("so", "RB"), ("and", "CC"), ("I", "PRP"),
            ("said", "VBD"), ("it", "PRP"), ("to", "TO"), ("them", "PRP"), ("today", "NN"),
        ]);
        let fv: FeatureVector<f64> = extract_features(&s, &registry()).unwrap();
        assert_eq!(fv.token_count, 10);
        assert_eq!(fv.get("F06_first_person_pronouns"), Some(200.0));
        assert!(fv.low_confidence);
    }

    #[test]
    fn absent_past_tense_is_zero() {
        let s = stream(&[("dogs", "NNS"), ("bark", "VBP")]);
        let fv: FeatureVector<f64> = extract_features(&s, &registry()).unwrap();
        assert_eq!(fv.get("F01_past_tense"), Some(0.0));
    }

    #[test]
    fn mean_word_length() {
        let s = stream(&[("the", "DT"), ("dog", "NN"), ("the", "DT"), ("dog", "NN")]);
        let fv: FeatureVector<f64> = extract_features(&s, &registry()).unwrap();
        assert_eq!(fv.get("F44_mean_word_length"), Some(3.0));
        assert_eq!(fv.get("F43_type_token_ratio"), Some(0.5));
    }

    #[test]
    fn empty_stream_is_rejected() {
        let s = TokenStream::default();
        assert!(matches!(
            extract_features::<f64>(&s, &registry()),
            Err(Error::EmptyStream)
        ));
        let punct_only = stream(&[(".", ".")]);
        assert!(extract_features::<f64>(&punct_only, &registry()).is_err());
    }

    #[test]
    fn moving_ttr_matches_brute_force() {
        let words: Vec<String> = (0..250).map(|i| format!("w{}", (i * 7) % 37)).collect();
        let refs: Vec<&str> = words.iter().map(String::as_str).collect();
        let window = 100;
        let brute: f64 = (0..=refs.len() - window)
            .map(|s| {
                let set: HashSet<_> = refs[s..s + window].iter().collect();
                set.len() as f64 / window as f64
            })
            .sum::<f64>()
            / (refs.len() - window + 1) as f64;
        assert!((moving_ttr(&refs, window) - brute).abs() < 1e-12);
    }

    #[test]
    fn registry_errors() {
        let dup = format!(
            "format = \"{REGISTRY_FORMAT}\"\n[[feature]]\nid = \"a\"\nname = \"a\"\nunit = \"per_1000_tokens\"\nrules = [\"[*]\"]\n[[feature]]\nid = \"a\"\nname = \"b\"\nunit = \"per_1000_tokens\"\nrules = [\"[*]\"]\n"
        );
        assert!(matches!(parse_registry(&dup), Err(Error::DuplicateFeatureId(id)) if id == "a"));
        let empty = format!("format = \"{REGISTRY_FORMAT}\"\n");
        assert!(parse_registry(&empty).unwrap().is_empty());
        let bad_unit = format!(
            "format = \"{REGISTRY_FORMAT}\"\n[[feature]]\nid = \"a\"\nname = \"a\"\nunit = \"raw_ratio\"\nrules = [\"[*]\"]\n"
        );
        assert!(matches!(parse_registry(&bad_unit), Err(Error::Parse { .. })));
        assert!(matches!(parse_registry("format = 3"), Err(Error::Parse { .. })));
    }

    fn arb_stream() -> impl Strategy<Value = TokenStream> {
        let vocab = prop_oneof![
            Just(("I", "PRP")), Just(("was", "VBD")), Just(("taken", "VBN")), Just(("by", "IN")),
            Just(("the", "DT")), Just(("dog", "NN")), Just(("very", "RB")), Just(("good", "JJ")),
            Just(("that", "IN")), Just(("think", "VBP")), Just(("n't", "RB")), Just((".", ".")),
            Just(("and", "CC")), Just(("to", "TO")), Just(("go", "VB")), Just(("which", "WDT")),
        ];
        proptest::collection::vec(proptest::collection::vec(vocab, 1..12), 1..6).prop_map(|sents| {
            let mut text = String::new();
            for s in sents {
                for (w, t) in s {
                    text.push_str(&format!("{w}\t{t}\n"));
                }
                text.push('\n');
            }
            parse_tagged(&text).unwrap()
        })
    }

    proptest! {
        #[test]
        fn doubling_stream_keeps_rates(s in arb_stream()) {
            let reg = registry();
            prop_assume!(s.tokens.iter().any(|t| !t.is_punct()));
            let once: FeatureVector<f64> = extract_features(&s, &reg).unwrap();
            let twice: FeatureVector<f64> = extract_features(&s.concat(&s), &reg).unwrap();
            prop_assert_eq!(twice.token_count, 2 * once.token_count);
            for def in reg.iter().filter(|d| d.unit == Unit::Per1000Tokens) {
                let a = once.values[&def.feature_id];
                let b = twice.values[&def.feature_id];
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{} {} {}", def.feature_id, a, b);
                prop_assert!(a >= 0.0);
            }
        }

        #[test]
        fn adding_a_match_raises_the_rate(s in arb_stream()) {
            // Swap a filler sentence for one holding a single past-tense verb;
            // token count is unchanged and the feature strictly increases.
            let reg = registry();
            let filler = parse_tagged("dog\tNN\n").unwrap();
            let hit = parse_tagged("ran\tVBD\n").unwrap();
            let base: FeatureVector<f64> = extract_features(&s.concat(&filler), &reg).unwrap();
            let more: FeatureVector<f64> = extract_features(&s.concat(&hit), &reg).unwrap();
            prop_assert_eq!(base.token_count, more.token_count);
            prop_assert!(more.values["F01_past_tense"] > base.values["F01_past_tense"]);
        }
    }
}
