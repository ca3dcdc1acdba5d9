//! Tokenization and part-of-speech tagging.
//!
//! Feature extraction runs over a [`TokenStream`] of Penn-tagged tokens. The
//! stream comes either from an external tagger via the tab-separated format
//! read by [`ingest_tagged`], or from the lexicon/rule tagger in
//! [`builtin_tag`].

mod conll;
mod lexicon;
mod tokenize;

pub use conll::{export_tagged, ingest_tagged, parse_tagged};
pub use lexicon::{builtin_tag, verb_forms};
pub use tokenize::{tokenize, Tokenized};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Penn Treebank tagset, including punctuation tags.
pub const PENN_TAGS: &[&str] = &[
    "CC", "CD", "DT", "EX", "FW", "IN", "JJ", "JJR", "JJS", "LS", "MD", "NN", "NNS", "NNP", "NNPS",
    "PDT", "POS", "PRP", "PRP$", "RB", "RBR", "RBS", "RP", "SYM", "TO", "UH", "VB", "VBD", "VBG",
    "VBN", "VBP", "VBZ", "WDT", "WP", "WP$", "WRB", ".", ",", ":", "``", "''", "(", ")", "#", "$",
    "-LRB-", "-RRB-",
];

/// Unicode default full case folding.
pub fn casefold(s: &str) -> String {
    caseless::default_case_fold_str(s)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedToken {
    pub surface: String,
    pub lower: String,
    pub tag: String,
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma: Option<String>,
}

impl TaggedToken {
    pub fn new(surface: impl Into<String>, tag: impl Into<String>, index: usize) -> Self {
        let surface = surface.into();
        TaggedToken {
            lower: casefold(&surface),
            surface,
            tag: tag.into(),
            index,
            lemma: None,
        }
    }

    /// True for tokens carrying a punctuation or symbol tag.
    pub fn is_punct(&self) -> bool {
        is_punct_tag(&self.tag)
    }
}

pub fn is_punct_tag(tag: &str) -> bool {
    matches!(
        tag,
        "." | "," | ":" | "``" | "''" | "(" | ")" | "-LRB-" | "-RRB-" | "#" | "$" | "SYM"
    ) || (!tag.is_empty() && tag.chars().all(|c| !c.is_alphanumeric()))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    pub tokens: Vec<TaggedToken>,
    /// Exclusive end index of each sentence.
    pub sentence_boundaries: Vec<usize>,
}

impl TokenStream {
    /// Build a stream, renumbering token indices and checking boundaries.
    pub fn new(mut tokens: Vec<TaggedToken>, sentence_boundaries: Vec<usize>) -> Result<Self> {
        for (i, t) in tokens.iter_mut().enumerate() {
            t.index = i;
        }
        let stream = TokenStream {
            tokens,
            sentence_boundaries,
        };
        stream.check()?;
        Ok(stream)
    }

    fn check(&self) -> Result<()> {
        let mut prev = 0;
        for &b in &self.sentence_boundaries {
            if b <= prev {
                return Err(Error::Precondition(format!(
                    "sentence boundaries must be strictly increasing (saw {b} after {prev})"
                )));
            }
            prev = b;
        }
        if prev != self.tokens.len() {
            return Err(Error::Precondition(format!(
                "last sentence boundary {prev} != token count {}",
                self.tokens.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens grouped by sentence.
    pub fn sentences(&self) -> impl Iterator<Item = &[TaggedToken]> {
        let mut start = 0;
        self.sentence_boundaries.iter().map(move |&end| {
            let s = &self.tokens[start..end];
            start = end;
            s
        })
    }

    /// Tokens whose tag is not in `tagset`.
    pub fn foreign_tags<'a>(&'a self, tagset: &'a [&str]) -> impl Iterator<Item = &'a TaggedToken> {
        self.tokens.iter().filter(move |t| !tagset.contains(&t.tag.as_str()))
    }

    /// Append `other`, shifting its indices and boundaries.
    pub fn concat(&self, other: &TokenStream) -> TokenStream {
        let offset = self.tokens.len();
        let mut tokens = self.tokens.clone();
        tokens.extend(other.tokens.iter().cloned().map(|mut t| {
            t.index += offset;
            t
        }));
        let mut boundaries = self.sentence_boundaries.clone();
        boundaries.extend(other.sentence_boundaries.iter().map(|b| b + offset));
        TokenStream {
            tokens,
            sentence_boundaries: boundaries,
        }
    }
}

/// Tokenize and tag raw English text with the built-in tagger.
pub fn tag_text(text: &str) -> TokenStream {
    builtin_tag(&tokenize(text))
}
