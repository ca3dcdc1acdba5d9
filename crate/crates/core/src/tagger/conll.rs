use std::fs;
use std::path::Path;

use super::{TaggedToken, TokenStream};
use crate::error::{Error, Result};

/// Read a tab-separated tagged file: `surface<TAB>tag[<TAB>lemma]`, one token
/// per line, blank line between sentences.
pub fn ingest_tagged(path: &Path) -> Result<TokenStream> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tagged_at(&raw, &path.display().to_string())
}

pub fn parse_tagged(input: &str) -> Result<TokenStream> {
    parse_tagged_at(input, "<input>")
}

fn parse_tagged_at(input: &str, source: &str) -> Result<TokenStream> {
    let mut tokens = Vec::new();
    let mut boundaries = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            if boundaries.last() != Some(&tokens.len()) && !tokens.is_empty() {
                boundaries.push(tokens.len());
            }
            continue;
        }
        if line.starts_with('#') && !line.contains('\t') {
            continue;
        }
        let mut cols = line.split('\t');
        let surface = cols.next().unwrap_or_default();
        let tag = cols.next().map(str::trim).unwrap_or_default();
        if surface.is_empty() || tag.is_empty() {
            return Err(Error::parse(
                format!("{source}:{}", n + 1),
                "expected `surface<TAB>tag`",
            ));
        }
        let lemma = cols.next().map(str::trim).filter(|l| !l.is_empty() && *l != "_");
        let mut tok = TaggedToken::new(surface, tag, tokens.len());
        tok.lemma = lemma.map(str::to_string);
        tokens.push(tok);
    }
    if !tokens.is_empty() && boundaries.last() != Some(&tokens.len()) {
        boundaries.push(tokens.len());
    }
    TokenStream::new(tokens, boundaries)
}

/// Inverse of [`parse_tagged`].
pub fn export_tagged(stream: &TokenStream) -> String {
    let mut out = String::new();
    for (i, sentence) in stream.sentences().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for t in sentence {
            out.push_str(&t.surface);
            out.push('\t');
            out.push_str(&t.tag);
            if let Some(lemma) = &t.lemma {
                out.push('\t');
                out.push_str(lemma);
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_lines() {
        let s = parse_tagged("I\tPRP\nran\tVBD\n.\t.\n").unwrap();
        let tags: Vec<_> = s.tokens.iter().map(|t| t.tag.as_str()).collect();
        assert_eq!(tags, ["PRP", "VBD", "."]);
        assert_eq!(s.sentence_boundaries, [3]);
    }

    #[test]
    fn blank_line_is_boundary() {
        let s = parse_tagged("I\tPRP\nran\tVBD\n\n\nHe\tPRP\n").unwrap();
        assert_eq!(s.sentence_boundaries, [2, 3]);
    }

    #[test]
    fn missing_tag_column() {
        match parse_tagged("I\tPRP\nran\n") {
            Err(Error::Parse { location, .. }) => assert_eq!(location, "<input>:2"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn lemma_column() {
        let s = parse_tagged("ran\tVBD\trun\nit\tPRP\t_\n").unwrap();
        assert_eq!(s.tokens[0].lemma.as_deref(), Some("run"));
        assert_eq!(s.tokens[1].lemma, None);
    }

    fn arb_stream() -> impl Strategy<Value = TokenStream> {
        let tok = ("[A-Za-z.,']{1,5}", "[A-Z$.,]{1,4}", proptest::option::of("[a-z]{1,4}"));
        proptest::collection::vec(proptest::collection::vec(tok, 1..6), 0..5).prop_map(|sents| {
            let mut tokens = Vec::new();
            let mut bounds = Vec::new();
            for s in sents {
                for (surface, tag, lemma) in s {
                    let mut t = TaggedToken::new(surface, tag, 0);
                    t.lemma = lemma;
                    tokens.push(t);
                }
                bounds.push(tokens.len());
            }
            TokenStream::new(tokens, bounds).unwrap()
        })
    }

    proptest! {
        #[test]
        fn export_then_ingest_is_identity(stream in arb_stream()) {
            prop_assert_eq!(parse_tagged(&export_tagged(&stream)).unwrap(), stream);
        }
    }
}
