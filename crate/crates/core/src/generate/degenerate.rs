use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::MIN_CONTINUATION_WORDS;

/// A sentence of at least this many words may occur at most `MAX_REPEATS` times.
pub const MIN_REPEAT_SENTENCE_WORDS: usize = 5;
pub const MAX_REPEATS: usize = 3;
/// Share of the text, from the end, inspected for looping output.
pub const TRAILING_SHARE: f64 = 0.4;
pub const SHINGLE: usize = 8;
pub const MAX_DUPLICATION: f64 = 0.5;
/// Minimum stopword density for a text to count as written in English or
/// Czech. Czech inflects heavily, so its function words are rarer.
pub const EN_STOPWORD_DENSITY: f64 = 0.2;
pub const CS_STOPWORD_DENSITY: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegenerateReason {
    Repetition,
    TooShort,
    WrongLanguage,
}

impl DegenerateReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DegenerateReason::Repetition => "repetition",
            DegenerateReason::TooShort => "too_short",
            DegenerateReason::WrongLanguage => "wrong_language",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub degenerate: bool,
    pub reason: Option<DegenerateReason>,
}

impl Verdict {
    fn flag(reason: DegenerateReason) -> Self {
        Verdict {
            degenerate: true,
            reason: Some(reason),
        }
    }
}

// Kept disjoint so a word never counts for both languages.
const EN_STOPWORDS: &[&str] = &[
    "the", "of", "and", "in", "that", "is", "was", "it", "for", "with", "as", "he", "she", "his", "her", "be",
    "at", "had", "not", "but", "from", "this", "have", "they", "you", "which", "were", "are", "or", "an", "we",
    "my", "there", "would", "their", "been", "one", "all", "what", "if", "said", "will", "him", "when", "who",
    "has", "could", "them", "into", "than",
];

const CS_STOPWORDS: &[&str] = &[
    "v", "ve", "na", "se", "je", "že", "s", "z", "ze", "ale", "jako", "tak", "jsem", "jsou", "byl", "byla",
    "bylo", "pro", "po", "od", "za", "jak", "už", "ještě", "který", "která", "které", "co", "ten", "ta",
    "jeho", "její", "si", "mu", "jen", "když", "aby", "nebo", "také", "však", "při", "před", "bude", "být",
    "není", "tam", "jsme", "k", "o", "u",
];

fn stopwords(language: &str) -> Option<(&'static [&'static str], f64)> {
    let primary = language.split(['-', '_']).next().unwrap_or("").to_ascii_lowercase();
    match primary.as_str() {
        "en" => Some((EN_STOPWORDS, EN_STOPWORD_DENSITY)),
        "cs" => Some((CS_STOPWORDS, CS_STOPWORD_DENSITY)),
        _ => None,
    }
}

fn normalized_words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        cur.push(c);
        let end = matches!(c, '.' | '!' | '?' | '…') && chars.peek().is_none_or(|n| n.is_whitespace());
        if end || c == '\n' && chars.peek() == Some(&'\n') {
            out.push(std::mem::take(&mut cur));
        }
    }
    out.push(cur);
    out.into_iter()
        .map(|s| normalized_words(&s).join(" "))
        .filter(|s| !s.is_empty())
        .collect()
}

fn repeated_sentence(text: &str) -> bool {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for s in sentences(text) {
        if s.split(' ').count() >= MIN_REPEAT_SENTENCE_WORDS {
            let n = counts.entry(s).or_default();
            *n += 1;
            if *n > MAX_REPEATS {
                return true;
            }
        }
    }
    false
}

/// Fraction of word 8-grams in the trailing share of the text that duplicate
/// an earlier 8-gram of that same window.
pub fn trailing_duplication(text: &str) -> f64 {
    let words = normalized_words(text);
    let start = ((words.len() as f64) * (1.0 - TRAILING_SHARE)).floor() as usize;
    let tail = &words[start.min(words.len())..];
    if tail.len() < SHINGLE {
        return 0.0;
    }
    let shingles: Vec<&[String]> = tail.windows(SHINGLE).collect();
    let unique: HashSet<&[String]> = shingles.iter().copied().collect();
    1.0 - unique.len() as f64 / shingles.len() as f64
}

pub fn stopword_density(text: &str, language: &str) -> Option<f64> {
    let (list, _) = stopwords(language)?;
    let words = normalized_words(text);
    if words.is_empty() {
        return Some(0.0);
    }
    let hits = words.iter().filter(|w| list.contains(&w.as_str())).count();
    Some(hits as f64 / words.len() as f64)
}

fn wrong_language(text: &str, language: &str) -> bool {
    let Some(own) = stopword_density(text, language) else {
        return false;
    };
    let primary = language.split(['-', '_']).next().unwrap_or("");
    ["en", "cs"].iter().filter(|&&l| !l.eq_ignore_ascii_case(primary)).any(|other| {
        let (_, floor) = stopwords(other).expect("known language");
        stopword_density(text, other).is_some_and(|d| d > floor && d > own)
    })
}

/// Flag continuations that are too short, loop, or are written in another
/// language than `language`.
pub fn detect_degenerate(text: &str, language: &str) -> Verdict {
    if crate::corpus::count_words(text) < MIN_CONTINUATION_WORDS {
        return Verdict::flag(DegenerateReason::TooShort);
    }
    if repeated_sentence(text) || trailing_duplication(text) > MAX_DUPLICATION {
        return Verdict::flag(DegenerateReason::Repetition);
    }
    if wrong_language(text, language) {
        return Verdict::flag(DegenerateReason::WrongLanguage);
    }
    Verdict {
        degenerate: false,
        reason: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NORMAL: &str = "The harbour was quiet when the ferry came in, and the men on the pier \
        watched it without much interest. It had been a long winter for all of them. \
        Prices were up, the catch was down, and the council had spent most of the autumn \
        arguing about a new breakwater that nobody expected to see built. Still, there \
        was some comfort in the boat arriving on time. Mrs Harding said it was the only \
        thing in the town that did what it promised, and nobody disagreed with her.";

    #[test]
    fn same_sentence_fifty_times() {
        let text = "I will continue the story as requested. ".repeat(50);
        assert_eq!(detect_degenerate(&text, "en").reason, Some(DegenerateReason::Repetition));
    }

    #[test]
    fn normal_text_passes() {
        let v = detect_degenerate(NORMAL, "en");
        assert!(!v.degenerate, "{v:?}");
    }

    #[test]
    fn english_in_czech_corpus() {
        assert_eq!(detect_degenerate(NORMAL, "cs").reason, Some(DegenerateReason::WrongLanguage));
    }

    #[test]
    fn short_text() {
        assert_eq!(detect_degenerate("Only a few words.", "en").reason, Some(DegenerateReason::TooShort));
    }

    #[test]
    fn refrain_three_times_is_fine() {
        let text = format!("{NORMAL} Come home, come home, the sea is calling. {NORMAL_B} Come home, come home, the sea is calling. Then the lamps were lit. Come home, come home, the sea is calling.");
        assert!(!detect_degenerate(&text, "en").degenerate);
        let text = format!("{text} Come home, come home, the sea is calling.");
        assert!(detect_degenerate(&text, "en").degenerate);
    }

    const NORMAL_B: &str = "By evening the wind had turned and the gulls went inland.";

    #[test]
    fn looping_without_punctuation() {
        let text = format!("{NORMAL} {}", "and the rain kept falling on the old tin roof ".repeat(30));
        assert!(trailing_duplication(&text) > MAX_DUPLICATION);
        assert_eq!(detect_degenerate(&text, "en").reason, Some(DegenerateReason::Repetition));
    }
}
