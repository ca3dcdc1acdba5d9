//! Token-window patterns used by feature definitions.
//!
//! A pattern is a short sequence of bracketed token tests, optionally
//! preceded by look-behind groups and interleaved with look-ahead groups:
//!
//! ```text
//! !<([!punct]) [tag=WP|tag=WRB] [tag=MD|word@be]
//! [word@be] [tag^=RB]? [tag=VBN] !>([word=by])
//! ```
//!
//! Inside brackets, literals are joined with `&` (binds tighter) and `|`, and
//! may be negated with `!`. Literals: `*`, `punct`, `tag=X`, `tag^=PREFIX`,
//! `word=w`, `word@list`, `suffix=s`, `suffix@list`, `len>=n`. Steps take an
//! optional `?` or `{m,n}` quantifier. `<(..)`/`!<(..)` assert that the
//! tokens right before the match do/do not match; `>(..)`/`!>(..)` do the
//! same for the tokens that follow. Matches never cross sentence boundaries,
//! and the whole window (context plus longest match) spans at most
//! [`MAX_WINDOW`] tokens.

use std::collections::HashSet;
use std::sync::Arc;

use crate::tagger::TaggedToken;

pub const MAX_WINDOW: usize = 4;

#[derive(Debug, Clone)]
enum Atom {
    Any,
    Punct,
    Tag(String),
    TagPrefix(String),
    Word(String),
    WordList(Arc<HashSet<String>>),
    Suffix(String),
    SuffixList(Arc<HashSet<String>>),
    MinLen(usize),
}

impl Atom {
    fn test(&self, tok: &TaggedToken) -> bool {
        match self {
            Atom::Any => true,
            Atom::Punct => tok.is_punct(),
            Atom::Tag(t) => tok.tag == *t,
            Atom::TagPrefix(p) => tok.tag.starts_with(p.as_str()),
            Atom::Word(w) => tok.lower == *w,
            Atom::WordList(set) => set.contains(&tok.lower),
            Atom::Suffix(s) => tok.lower.len() > s.len() && tok.lower.ends_with(s.as_str()),
            Atom::SuffixList(set) => set
                .iter()
                .any(|s| tok.lower.len() > s.len() && tok.lower.ends_with(s.as_str())),
            Atom::MinLen(n) => tok.lower.chars().count() >= *n,
        }
    }
}

#[derive(Debug, Clone)]
struct Literal {
    negated: bool,
    atom: Atom,
}

/// Disjunction of conjunctions of literals.
#[derive(Debug, Clone)]
struct TokenTest(Vec<Vec<Literal>>);

impl TokenTest {
    fn test(&self, tok: &TaggedToken) -> bool {
        self.0
            .iter()
            .any(|conj| conj.iter().all(|l| l.atom.test(tok) != l.negated))
    }
}

#[derive(Debug, Clone)]
struct Step {
    test: TokenTest,
    min: usize,
    max: usize,
}

#[derive(Debug, Clone)]
struct Context {
    negated: bool,
    steps: Vec<TokenTest>,
}

impl Context {
    /// Does the fixed-length sequence match starting at `pos`?
    fn matches_from(&self, sent: &[TaggedToken], pos: usize) -> bool {
        pos + self.steps.len() <= sent.len()
            && self
                .steps
                .iter()
                .enumerate()
                .all(|(k, t)| t.test(&sent[pos + k]))
    }
}

#[derive(Debug, Clone)]
enum Item {
    Step(Step),
    Ahead(Context),
}

#[derive(Debug, Clone)]
pub struct Pattern {
    behind: Vec<Context>,
    items: Vec<Item>,
}

impl Pattern {
    pub fn parse(src: &str, lists: &dyn Fn(&str) -> Option<Arc<HashSet<String>>>) -> Result<Self, String> {
        Parser { src, pos: 0, lists }.pattern()
    }

    /// Largest number of tokens the pattern inspects, context included.
    pub fn window(&self) -> usize {
        let behind = self.behind.iter().map(|c| c.steps.len()).max().unwrap_or(0);
        let mut run = 0;
        let mut extent = 0;
        for item in &self.items {
            match item {
                Item::Step(s) => {
                    run += s.max;
                    extent = extent.max(run);
                }
                Item::Ahead(c) => extent = extent.max(run + c.steps.len()),
            }
        }
        behind + extent
    }

    /// Does a match start at `pos` within sentence `sent`?
    pub fn matches_at(&self, sent: &[TaggedToken], pos: usize) -> bool {
        for ctx in &self.behind {
            let hit = pos >= ctx.steps.len() && ctx.matches_from(sent, pos - ctx.steps.len());
            if hit == ctx.negated {
                return false;
            }
        }
        self.match_items(sent, 0, pos)
    }

    fn match_items(&self, sent: &[TaggedToken], idx: usize, pos: usize) -> bool {
        let Some(item) = self.items.get(idx) else {
            return true;
        };
        match item {
            Item::Ahead(ctx) => {
                ctx.matches_from(sent, pos) != ctx.negated && self.match_items(sent, idx + 1, pos)
            }
            Item::Step(step) => {
                let mut n = 0;
                while n < step.min {
                    if pos + n >= sent.len() || !step.test.test(&sent[pos + n]) {
                        return false;
                    }
                    n += 1;
                }
                loop {
                    if self.match_items(sent, idx + 1, pos + n) {
                        return true;
                    }
                    if n >= step.max || pos + n >= sent.len() || !step.test.test(&sent[pos + n]) {
                        return false;
                    }
                    n += 1;
                }
            }
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    lists: &'a dyn Fn(&str) -> Option<Arc<HashSet<String>>>,
}

impl Parser<'_> {
    fn rest(&self) -> &str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, s: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn err<T>(&self, msg: &str) -> Result<T, String> {
        Err(format!("{msg} at offset {} in `{}`", self.pos, self.src))
    }

    fn pattern(&mut self) -> Result<Pattern, String> {
        let mut behind = Vec::new();
        loop {
            if self.eat("!<(") {
                behind.push(self.context(true)?);
            } else if self.eat("<(") {
                behind.push(self.context(false)?);
            } else {
                break;
            }
        }
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            if self.rest().is_empty() {
                break;
            }
            if self.eat("!>(") {
                items.push(Item::Ahead(self.context(true)?));
            } else if self.eat(">(") {
                items.push(Item::Ahead(self.context(false)?));
            } else if self.rest().starts_with('[') {
                items.push(Item::Step(self.step()?));
            } else {
                return self.err("expected `[`, `>(` or `!>(`");
            }
        }
        match items.first() {
            Some(Item::Step(s)) if s.min >= 1 => {}
            _ => return self.err("pattern must start with a required token step"),
        }
        let p = Pattern { behind, items };
        if p.window() > MAX_WINDOW {
            return Err(format!(
                "pattern `{}` spans {} tokens (max {MAX_WINDOW})",
                self.src,
                p.window()
            ));
        }
        Ok(p)
    }

    fn context(&mut self, negated: bool) -> Result<Context, String> {
        let mut steps = Vec::new();
        while !self.eat(")") {
            self.skip_ws();
            if !self.rest().starts_with('[') {
                return self.err("expected `[` or `)` in context group");
            }
            let step = self.step()?;
            if step.min != 1 || step.max != 1 {
                return self.err("context steps cannot be quantified");
            }
            steps.push(step.test);
        }
        if steps.is_empty() {
            return self.err("empty context group");
        }
        Ok(Context { negated, steps })
    }

    fn step(&mut self) -> Result<Step, String> {
        if !self.eat("[") {
            return self.err("expected `[`");
        }
        let mut disj = Vec::new();
        let mut conj = Vec::new();
        loop {
            conj.push(self.literal()?);
            if self.eat("&") {
                continue;
            }
            if self.eat("|") {
                disj.push(std::mem::take(&mut conj));
                continue;
            }
            if self.eat("]") {
                disj.push(conj);
                break;
            }
            return self.err("expected `&`, `|` or `]`");
        }
        let (min, max) = if self.rest().starts_with('?') {
            self.pos += 1;
            (0, 1)
        } else if self.rest().starts_with('{') {
            let close = self.rest().find('}').ok_or("unterminated quantifier")?;
            let body = &self.rest()[1..close];
            let (a, b) = body.split_once(',').ok_or("quantifier needs `{m,n}`")?;
            let min = a.trim().parse::<usize>().map_err(|e| e.to_string())?;
            let max = b.trim().parse::<usize>().map_err(|e| e.to_string())?;
            if min > max {
                return self.err("quantifier min exceeds max");
            }
            self.pos += close + 1;
            (min, max)
        } else {
            (1, 1)
        };
        Ok(Step {
            test: TokenTest(disj),
            min,
            max,
        })
    }

    fn literal(&mut self) -> Result<Literal, String> {
        self.skip_ws();
        let mut negated = false;
        while self.rest().starts_with('!') {
            negated = !negated;
            self.pos += 1;
            self.skip_ws();
        }
        let atom = if self.eat("*") {
            Atom::Any
        } else if self.eat("punct") {
            Atom::Punct
        } else if self.eat("tag^=") {
            Atom::TagPrefix(self.value()?)
        } else if self.eat("tag=") {
            Atom::Tag(self.value()?)
        } else if self.eat("word=") {
            Atom::Word(self.value()?.to_lowercase())
        } else if self.eat("word@") {
            Atom::WordList(self.list()?)
        } else if self.eat("suffix=") {
            Atom::Suffix(self.value()?.to_lowercase())
        } else if self.eat("suffix@") {
            Atom::SuffixList(self.list()?)
        } else if self.eat("len>=") {
            Atom::MinLen(self.value()?.parse().map_err(|_| "bad length".to_string())?)
        } else {
            return self.err("unknown literal");
        };
        Ok(Literal { negated, atom })
    }

    fn value(&mut self) -> Result<String, String> {
        let rest = self.rest();
        let end = rest.find(['&', '|', ']']).unwrap_or(rest.len());
        let v = rest[..end].trim().to_string();
        if v.is_empty() {
            return self.err("empty value");
        }
        self.pos += end;
        Ok(v)
    }

    fn list(&mut self) -> Result<Arc<HashSet<String>>, String> {
        let name = self.value()?;
        (self.lists)(&name).ok_or_else(|| format!("unknown list `{name}` in `{}`", self.src))
    }
}
