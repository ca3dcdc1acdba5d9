/// Surface tokens plus exclusive sentence end indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Tokenized {
    pub tokens: Vec<String>,
    pub sentence_boundaries: Vec<usize>,
}

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "st", "jr", "sr", "vs", "etc", "e.g", "i.e", "inc", "ltd",
    "co", "corp", "mt", "gen", "col", "lt", "sgt", "capt", "rev", "gov", "sen", "rep", "jan",
    "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec", "fig", "approx",
    "dept", "est", "cf", "al", "no", "vol", "pp", "ed", "eds",
];

const OPENERS: &[char] = &['"', '\'', '“', '‘', '(', '[', '{', '«'];
const CLOSERS: &[char] = &[
    '"', '\'', '”', '’', ')', ']', '}', '»', '.', ',', ';', ':', '!', '?', '…',
];
const DASHES: &[char] = &['—', '–'];

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '’'
}

fn is_abbreviation(word: &str) -> bool {
    let Some(stem) = word.strip_suffix('.') else {
        return false;
    };
    let lower = stem.to_lowercase();
    if ABBREVIATIONS.contains(&lower.as_str()) {
        return true;
    }
    // Initials and dotted acronyms: "J.", "U.S.", "e.g."
    !stem.is_empty()
        && stem
            .split('.')
            .all(|part| part.chars().count() == 1 && part.chars().all(char::is_alphabetic))
}

/// Split a clitic off the end of a word, Penn style: `can't` -> `ca n't`,
/// `I'm` -> `I 'm`, `John's` -> `John 's`.
fn split_clitic(word: &str) -> (String, Option<String>) {
    let chars: Vec<char> = word.chars().collect();
    let n = chars.len();
    let lower: String = word.to_lowercase();
    let lower_chars: Vec<char> = lower.chars().collect();
    if n >= 4
        && lower_chars[n - 1] == 't'
        && is_apostrophe(chars[n - 2])
        && lower_chars[n - 3] == 'n'
    {
        let head: String = chars[..n - 3].iter().collect();
        let tail: String = chars[n - 3..].iter().collect();
        return (head, Some(tail));
    }
    for clitic in ["s", "m", "d", "re", "ve", "ll"] {
        let k = clitic.chars().count();
        if n > k + 1 && is_apostrophe(chars[n - k - 1]) {
            let suffix: String = lower_chars[n - k..].iter().collect();
            if suffix == clitic {
                let head: String = chars[..n - k - 1].iter().collect();
                let tail: String = chars[n - k - 1..].iter().collect();
                return (head, Some(tail));
            }
        }
    }
    (word.to_string(), None)
}

fn push_word(out: &mut Vec<String>, word: &str) {
    if word.is_empty() {
        return;
    }
    // Dashes glued between words become their own tokens.
    if let Some(pos) = word.find(DASHES) {
        let dash_len = word[pos..].chars().next().map_or(0, char::len_utf8);
        push_word(out, &word[..pos]);
        out.push(word[pos..pos + dash_len].to_string());
        push_word(out, &word[pos + dash_len..]);
        return;
    }
    if let Some(pos) = word.find("--") {
        push_word(out, &word[..pos]);
        out.push("--".to_string());
        push_word(out, &word[pos + 2..]);
        return;
    }
    let (head, clitic) = split_clitic(word);
    if !head.is_empty() {
        out.push(head);
    }
    if let Some(c) = clitic {
        out.push(c);
    }
}

fn tokenize_chunk(chunk: &str, out: &mut Vec<String>) {
    let mut rest = chunk;
    while let Some(c) = rest.chars().next() {
        if OPENERS.contains(&c) && rest.chars().count() > 1 {
            out.push(c.to_string());
            rest = &rest[c.len_utf8()..];
        } else {
            break;
        }
    }
    let mut trailing = Vec::new();
    loop {
        if rest.is_empty() || is_abbreviation(rest) {
            break;
        }
        if let Some(stripped) = rest.strip_suffix("...") {
            trailing.push("...".to_string());
            rest = stripped;
            continue;
        }
        let Some(c) = rest.chars().last() else { break };
        if CLOSERS.contains(&c) && rest.chars().count() > 1 {
            // Keep possessive/plural apostrophes such as "players'" attached
            // only when nothing else follows; treat as closing quote otherwise.
            trailing.push(c.to_string());
            rest = &rest[..rest.len() - c.len_utf8()];
        } else {
            break;
        }
    }
    push_word(out, rest);
    out.extend(trailing.into_iter().rev());
}

fn is_terminal(tok: &str) -> bool {
    matches!(tok, "." | "!" | "?" | "..." | "…")
}

fn is_closing(tok: &str) -> bool {
    matches!(tok, "\"" | "'" | "”" | "’" | ")" | "]" | "}" | "»")
}

fn starts_sentence(tok: &str) -> bool {
    tok.chars()
        .find(|c| c.is_alphanumeric())
        .is_some_and(|c| c.is_uppercase() || c.is_numeric())
}

/// Split text into surface tokens and sentences.
///
/// A sentence ends at `.`, `!` or `?` (plus any closing quotes or brackets)
/// when the next token starts with a capital letter, an opening quote, or the
/// text ends. Abbreviations such as `Dr.` stay single tokens and never end a
/// sentence.
pub fn tokenize(text: &str) -> Tokenized {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        tokenize_chunk(chunk, &mut tokens);
    }
    let mut boundaries = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if is_terminal(&tokens[i]) {
            let mut j = i + 1;
            while j < tokens.len() && is_closing(&tokens[j]) {
                j += 1;
            }
            let next_opens = j < tokens.len()
                && tokens[j].chars().count() == 1
                && tokens[j].starts_with(OPENERS)
                && tokens.get(j + 1).is_some_and(|t| starts_sentence(t));
            if j == tokens.len() || starts_sentence(&tokens[j]) || next_opens {
                boundaries.push(j);
            }
            i = j;
        } else {
            i += 1;
        }
    }
    if !tokens.is_empty() && boundaries.last() != Some(&tokens.len()) {
        boundaries.push(tokens.len());
    }
    Tokenized {
        tokens,
        sentence_boundaries: boundaries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(text: &str) -> Vec<String> {
        tokenize(text).tokens
    }

    #[test]
    fn single_sentence() {
        let t = tokenize("I hope so.");
        assert_eq!(t.tokens, ["I", "hope", "so", "."]);
        assert_eq!(t.sentence_boundaries, [4]);
    }

    #[test]
    fn empty() {
        assert_eq!(tokenize(""), Tokenized::default());
        assert_eq!(tokenize("  \n "), Tokenized::default());
    }

    #[test]
    fn abbreviation_is_not_a_boundary() {
        // Manual segmentation: [Dr. Smith left .] [He ran .]
        let t = tokenize("Dr. Smith left. He ran.");
        assert_eq!(t.tokens, ["Dr.", "Smith", "left", ".", "He", "ran", "."]);
        assert_eq!(t.sentence_boundaries, [4, 7]);
    }

    #[test]
    fn contractions_follow_penn() {
        assert_eq!(toks("can't"), ["ca", "n't"]);
        assert_eq!(toks("Don't"), ["Do", "n't"]);
        assert_eq!(toks("won’t"), ["wo", "n’t"]);
        assert_eq!(toks("I'm"), ["I", "'m"]);
        assert_eq!(toks("John's"), ["John", "'s"]);
        assert_eq!(toks("they'll"), ["they", "'ll"]);
    }

    #[test]
    fn quotes_and_punctuation() {
        let t = tokenize("\"Hope so!\" she said. (Maybe.) Yes, U.S. troops -- left");
        assert_eq!(
            t.tokens,
            [
                "\"", "Hope", "so", "!", "\"", "she", "said", ".", "(", "Maybe", ".", ")", "Yes",
                ",", "U.S.", "troops", "--", "left"
            ]
        );
        assert_eq!(t.sentence_boundaries, [8, 12, 18]);
    }

    #[test]
    fn lowercase_after_period_does_not_split() {
        let t = tokenize("It was 5 p.m. and late. then more");
        assert_eq!(t.sentence_boundaries, [t.tokens.len()]);
    }

    #[test]
    fn dashes_split() {
        assert_eq!(toks("hope—a word"), ["hope", "—", "a", "word"]);
    }
}
