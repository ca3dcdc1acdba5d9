//! Lexicon and suffix-rule tagger for English.
//!
//! Tagging runs in two passes: every token first gets a context-free tag from
//! closed-class lists, a small open-class lexicon, or suffix rules; a second
//! left-to-right pass fixes the common ambiguities (past tense vs. participle,
//! base verb vs. noun, `that`, `'s`, `there`).

use std::collections::HashMap;
use std::sync::OnceLock;

use super::{casefold, TaggedToken, TokenStream, Tokenized};

const CLOSED: &[(&str, &str)] = &[
    ("the", "DT"), ("a", "DT"), ("an", "DT"), ("this", "DT"), ("these", "DT"),
    ("those", "DT"), ("every", "DT"), ("each", "DT"), ("some", "DT"), ("any", "DT"),
    ("no", "DT"), ("another", "DT"), ("either", "DT"), ("neither", "DT"), ("all", "PDT"),
    ("both", "PDT"), ("half", "PDT"),
    ("i", "PRP"), ("me", "PRP"), ("you", "PRP"), ("he", "PRP"), ("him", "PRP"),
    ("she", "PRP"), ("it", "PRP"), ("we", "PRP"), ("us", "PRP"), ("they", "PRP"),
    ("them", "PRP"), ("myself", "PRP"), ("yourself", "PRP"), ("himself", "PRP"),
    ("herself", "PRP"), ("itself", "PRP"), ("ourselves", "PRP"), ("yourselves", "PRP"),
    ("themselves", "PRP"), ("one", "CD"),
    ("my", "PRP$"), ("your", "PRP$"), ("his", "PRP$"), ("her", "PRP$"), ("its", "PRP$"),
    ("our", "PRP$"), ("their", "PRP$"),
    ("can", "MD"), ("could", "MD"), ("may", "MD"), ("might", "MD"), ("must", "MD"),
    ("shall", "MD"), ("should", "MD"), ("will", "MD"), ("would", "MD"), ("ca", "MD"),
    ("wo", "MD"), ("'ll", "MD"), ("’ll", "MD"), ("'d", "MD"), ("’d", "MD"), ("ought", "MD"),
    ("of", "IN"), ("in", "IN"), ("on", "IN"), ("at", "IN"), ("by", "IN"), ("for", "IN"),
    ("with", "IN"), ("from", "IN"), ("about", "IN"), ("into", "IN"), ("over", "IN"),
    ("under", "IN"), ("after", "IN"), ("before", "IN"), ("since", "IN"), ("until", "IN"),
    ("till", "IN"), ("during", "IN"), ("through", "IN"), ("between", "IN"), ("among", "IN"),
    ("against", "IN"), ("without", "IN"), ("within", "IN"), ("upon", "IN"), ("because", "IN"),
    ("although", "IN"), ("though", "IN"), ("while", "IN"), ("whilst", "IN"), ("if", "IN"),
    ("unless", "IN"), ("whereas", "IN"), ("as", "IN"), ("than", "IN"), ("whether", "IN"),
    ("across", "IN"), ("along", "IN"), ("around", "IN"), ("behind", "IN"), ("beside", "IN"),
    ("beyond", "IN"), ("despite", "IN"), ("except", "IN"), ("near", "IN"), ("onto", "IN"),
    ("toward", "IN"), ("towards", "IN"), ("via", "IN"), ("per", "IN"), ("like", "IN"),
    ("throughout", "IN"), ("below", "IN"), ("above", "IN"), ("beneath", "IN"), ("inside", "IN"),
    ("outside", "IN"), ("off", "IN"), ("out", "RP"), ("up", "RP"), ("down", "RP"),
    ("to", "TO"),
    ("and", "CC"), ("or", "CC"), ("but", "CC"), ("nor", "CC"), ("plus", "CC"),
    ("which", "WDT"), ("whatever", "WDT"), ("whichever", "WDT"), ("who", "WP"), ("whom", "WP"),
    ("what", "WP"), ("whoever", "WP"), ("whose", "WP$"), ("when", "WRB"), ("where", "WRB"),
    ("why", "WRB"), ("how", "WRB"), ("whenever", "WRB"), ("wherever", "WRB"),
    ("there", "EX"), ("not", "RB"), ("n't", "RB"), ("n’t", "RB"), ("never", "RB"),
    ("very", "RB"), ("too", "RB"), ("also", "RB"), ("just", "RB"), ("only", "RB"),
    ("even", "RB"), ("still", "RB"), ("already", "RB"), ("always", "RB"), ("often", "RB"),
    ("quite", "RB"), ("rather", "RB"), ("so", "RB"), ("then", "RB"), ("now", "RB"),
    ("here", "RB"), ("ever", "RB"), ("yet", "RB"), ("perhaps", "RB"), ("almost", "RB"),
    ("soon", "RB"), ("again", "RB"), ("however", "RB"), ("therefore", "RB"), ("thus", "RB"),
    ("indeed", "RB"), ("away", "RB"), ("back", "RB"), ("sometimes", "RB"), ("maybe", "RB"),
    ("today", "NN"), ("tonight", "NN"), ("tomorrow", "NN"), ("yesterday", "NN"),
    ("well", "RB"), ("much", "JJ"), ("more", "JJR"), ("most", "JJS"), ("less", "JJR"),
    ("least", "JJS"), ("many", "JJ"), ("few", "JJ"), ("several", "JJ"), ("other", "JJ"),
    ("such", "JJ"), ("own", "JJ"), ("same", "JJ"), ("yes", "UH"), ("oh", "UH"), ("ah", "UH"),
    ("hello", "UH"), ("okay", "UH"), ("ok", "UH"), ("please", "UH"),
    ("someone", "NN"), ("somebody", "NN"), ("something", "NN"), ("anyone", "NN"),
    ("anybody", "NN"), ("anything", "NN"), ("everyone", "NN"), ("everybody", "NN"),
    ("everything", "NN"), ("nobody", "NN"), ("nothing", "NN"), ("none", "NN"),
    ("is", "VBZ"), ("are", "VBP"), ("am", "VBP"), ("was", "VBD"), ("were", "VBD"),
    ("be", "VB"), ("been", "VBN"), ("being", "VBG"), ("'re", "VBP"), ("’re", "VBP"),
    ("'m", "VBP"), ("’m", "VBP"), ("'ve", "VBP"), ("’ve", "VBP"),
    ("has", "VBZ"), ("had", "VBD"), ("having", "VBG"), ("does", "VBZ"), ("did", "VBD"),
    ("done", "VBN"), ("doing", "VBG"),
];

/// Irregular verbs: base, past, participle.
const IRREGULAR: &[(&str, &str, &str)] = &[
    ("run", "ran", "run"), ("go", "went", "gone"), ("say", "said", "said"),
    ("take", "took", "taken"), ("see", "saw", "seen"), ("come", "came", "come"),
    ("make", "made", "made"), ("get", "got", "gotten"), ("know", "knew", "known"),
    ("think", "thought", "thought"), ("tell", "told", "told"), ("find", "found", "found"),
    ("give", "gave", "given"), ("feel", "felt", "felt"), ("leave", "left", "left"),
    ("keep", "kept", "kept"), ("begin", "began", "begun"), ("write", "wrote", "written"),
    ("speak", "spoke", "spoken"), ("bring", "brought", "brought"), ("buy", "bought", "bought"),
    ("hold", "held", "held"), ("stand", "stood", "stood"),
    ("understand", "understood", "understood"), ("mean", "meant", "meant"),
    ("hear", "heard", "heard"), ("sit", "sat", "sat"), ("meet", "met", "met"),
    ("lead", "led", "led"), ("lose", "lost", "lost"), ("pay", "paid", "paid"),
    ("send", "sent", "sent"), ("build", "built", "built"), ("spend", "spent", "spent"),
    ("win", "won", "won"), ("become", "became", "become"), ("fall", "fell", "fallen"),
    ("choose", "chose", "chosen"), ("drive", "drove", "driven"), ("eat", "ate", "eaten"),
    ("grow", "grew", "grown"), ("throw", "threw", "thrown"), ("break", "broke", "broken"),
    ("forget", "forgot", "forgotten"), ("hide", "hid", "hidden"), ("rise", "rose", "risen"),
    ("shake", "shook", "shaken"), ("wake", "woke", "woken"), ("wear", "wore", "worn"),
    ("sing", "sang", "sung"), ("swim", "swam", "swum"), ("drink", "drank", "drunk"),
    ("ring", "rang", "rung"), ("sell", "sold", "sold"), ("teach", "taught", "taught"),
    ("catch", "caught", "caught"), ("fight", "fought", "fought"), ("seek", "sought", "sought"),
    ("sleep", "slept", "slept"), ("hang", "hung", "hung"), ("strike", "struck", "struck"),
    ("stick", "stuck", "stuck"), ("shoot", "shot", "shot"), ("feed", "fed", "fed"),
    ("flee", "fled", "fled"), ("lend", "lent", "lent"), ("bend", "bent", "bent"),
    ("fly", "flew", "flown"), ("draw", "drew", "drawn"), ("show", "showed", "shown"),
    ("lie", "lay", "lain"), ("lay", "laid", "laid"), ("ride", "rode", "ridden"),
    ("steal", "stole", "stolen"), ("tear", "tore", "torn"), ("bear", "bore", "borne"),
    ("forgive", "forgave", "forgiven"), ("freeze", "froze", "frozen"),
    ("deal", "dealt", "dealt"), ("dig", "dug", "dug"), ("light", "lit", "lit"),
    ("put", "put", "put"), ("set", "set", "set"), ("let", "let", "let"), ("cut", "cut", "cut"),
    ("hit", "hit", "hit"), ("hurt", "hurt", "hurt"), ("read", "read", "read"),
    ("quit", "quit", "quit"), ("shut", "shut", "shut"), ("spread", "spread", "spread"),
    ("cost", "cost", "cost"), ("have", "had", "had"), ("do", "did", "done"),
];

/// Base forms of common regular verbs (irregular bases come from `IRREGULAR`).
const VERBS: &[&str] = &[
    "want", "look", "use", "work", "call", "try", "ask", "need", "seem", "help", "talk", "turn",
    "start", "play", "move", "like", "live", "believe", "happen", "provide", "include",
    "continue", "learn", "change", "watch", "follow", "stop", "create", "allow", "add", "open",
    "walk", "offer", "remember", "love", "consider", "appear", "wait", "serve", "die", "expect",
    "stay", "reach", "kill", "remain", "suggest", "raise", "pass", "require", "report",
    "decide", "pull", "hope", "wish", "assume", "argue", "claim", "agree", "answer", "explain",
    "feel", "hate", "imagine", "notice", "prefer", "realize", "realise", "recognize", "suppose",
    "doubt", "fear", "guess", "accept", "admit", "announce", "complain", "declare", "deny",
    "insist", "mention", "promise", "reply", "state", "demand", "propose", "recommend", "urge",
    "ensure", "arrange", "determine", "decline", "laugh", "smile", "cry", "shout", "whisper",
    "jump", "climb", "carry", "finish", "enjoy", "visit", "travel", "return", "arrive",
    "describe", "discover", "develop", "establish", "improve", "increase", "reduce", "produce",
    "receive", "represent", "involve", "indicate", "suffer", "support", "plan", "pick", "drop",
    "touch", "kiss", "marry", "check", "close", "clean", "cook", "dance", "dress", "fill",
    "fix", "hurry", "join", "kick", "knock", "last", "listen", "miss", "need", "park", "pray",
    "push", "rain", "rest", "save", "share", "smell", "sound", "stare", "taste", "thank",
    "wonder", "worry", "yell", "manage", "prepare", "contain", "affect", "apply", "compare",
    "concern", "depend", "design", "discuss", "enter", "exist", "face", "form", "identify",
    "intend", "measure", "obtain", "occur", "perform", "prove", "publish", "refer", "relate",
    "remove", "replace", "result", "reveal", "seek", "select", "test", "treat", "vote",
    "assess", "conclude", "confirm", "define", "emphasize", "estimate", "examine", "observe",
    "predict", "calculate", "feature", "dream", "matter", "trust", "pretend", "reckon",
];

const NOUNS: &[&str] = &[
    "dog", "cat", "man", "woman", "time", "year", "way", "day", "thing", "world", "life",
    "hand", "part", "child", "eye", "place", "week", "case", "point", "government", "company",
    "number", "group", "problem", "fact", "house", "room", "book", "word", "night", "morning",
    "city", "school", "car", "door", "water", "money", "story", "mother", "father", "friend",
    "family", "home", "head", "face", "side", "war", "office", "name", "idea", "body", "road",
    "table", "street", "town", "country", "system", "question", "power", "area", "team",
    "minute", "hour", "moment", "line", "end", "kind", "sort", "letter", "job", "reason",
    "person", "husband", "wife", "doctor", "virus", "cough", "fever", "sofa", "station",
    "train", "window", "garden", "tree", "sun", "sky", "rain", "voice", "heart", "mind",
    "matter", "study", "result", "data", "analysis", "text", "model", "language", "style",
    "evidence", "research", "paper", "report", "court", "police", "party", "president",
    "minister", "market", "price", "rate", "level", "figure", "table", "film", "music",
    "art", "game", "field", "church", "law", "bank", "board", "member", "council", "boy",
    "girl", "baby", "brother", "sister", "son", "daughter", "king", "queen", "lady", "sir",
    "bed", "floor", "wall", "fire", "food", "tea", "coffee", "bread", "glass", "paper",
    "plan", "hope", "fear", "love", "need", "use", "work", "change", "help", "answer", "call",
    "look", "walk", "turn", "start", "play", "step", "sound", "promise", "smile", "wish",
    "concept", "belief", "doubt", "dose", "patient", "scale", "threat", "beginning", "pattern",
];

const ADJECTIVES: &[&str] = &[
    "good", "new", "first", "last", "long", "great", "little", "old", "right", "big", "high",
    "different", "small", "large", "next", "early", "young", "important", "public", "bad",
    "able", "late", "hard", "major", "better", "best", "real", "sure", "clear", "whole",
    "free", "full", "low", "strong", "true", "white", "black", "red", "green", "blue", "dark",
    "cold", "hot", "warm", "happy", "sad", "nice", "fine", "short", "easy", "simple", "certain",
    "likely", "possible", "poor", "rich", "deep", "quiet", "slight", "solid", "firm", "brave",
    "tangible", "genuine", "concrete", "real", "main", "open", "close", "ready", "aware",
    "glad", "afraid", "alone", "alive", "tired", "wrong", "whole", "entire", "human", "social",
    "political", "economic", "naive", "persistent", "brilliant", "fresh", "huge", "tiny",
];

/// Words that never take the `-s`/`-ed`/`-ing` verb readings from suffix rules.
const NOT_VERB_SUFFIX: &[&str] = &[
    "thing", "nothing", "something", "anything", "everything", "morning", "evening",
    "during", "ceiling", "king", "ring", "spring", "string", "wing", "sing", "bring", "sibling",
    "bed", "red", "need", "seed", "feed", "speed", "hundred", "indeed", "shed", "sled",
    "is", "was", "has", "his", "this", "its", "us", "thus", "yes", "less", "unless", "across",
    "always", "perhaps", "sometimes", "towards", "afterwards", "news", "series", "species",
    "its", "bus", "gas", "plus", "status", "focus", "process", "success", "business", "glass",
    "class", "boss", "loss", "kiss", "miss", "dress", "press", "stress", "address", "chess",
];

struct Lexicon {
    closed: HashMap<&'static str, &'static str>,
    forms: HashMap<String, &'static str>,
    verb_bases: std::collections::HashSet<String>,
}

fn regular_inflections(base: &str) -> [String; 3] {
    let s = if base.ends_with(['s', 'x', 'z']) || base.ends_with("ch") || base.ends_with("sh") {
        format!("{base}es")
    } else if base.ends_with('y') && !ends_with_vowel_y(base) {
        format!("{}ies", &base[..base.len() - 1])
    } else {
        format!("{base}s")
    };
    let ed = if base.ends_with('e') {
        format!("{base}d")
    } else if base.ends_with('y') && !ends_with_vowel_y(base) {
        format!("{}ied", &base[..base.len() - 1])
    } else if needs_doubling(base) {
        format!("{base}{}ed", &base[base.len() - 1..])
    } else {
        format!("{base}ed")
    };
    let ing = if let Some(stem) = base.strip_suffix("ie") {
        format!("{stem}ying")
    } else if base.ends_with('e') && !base.ends_with("ee") && base.len() > 2 {
        format!("{}ing", &base[..base.len() - 1])
    } else if needs_doubling(base) {
        format!("{base}{}ing", &base[base.len() - 1..])
    } else {
        format!("{base}ing")
    };
    [s, ed, ing]
}

/// All inflected forms of a verb base (base, -s, past, participle, -ing).
pub fn verb_forms(base: &str) -> Vec<String> {
    let mut out = vec![base.to_string()];
    let [s, ed, ing] = regular_inflections(base);
    out.push(s);
    out.push(ing);
    match IRREGULAR.iter().find(|(b, _, _)| *b == base) {
        Some(&(_, past, part)) => {
            out.push(past.to_string());
            out.push(part.to_string());
        }
        None => out.push(ed),
    }
    out.sort();
    out.dedup();
    out
}

fn ends_with_vowel_y(base: &str) -> bool {
    ["ay", "ey", "oy", "uy"].iter().any(|e| base.ends_with(e))
}

fn needs_doubling(base: &str) -> bool {
    matches!(base, "stop" | "plan" | "drop" | "admit" | "prefer" | "refer" | "occur" | "hop" | "skip" | "shop" | "nod" | "beg" | "rob" | "rub" | "hug" | "jog" | "pat" | "pet" | "grab" | "chat" | "fit" | "sit" | "run" | "swim" | "get" | "win" | "dig" | "cut" | "put" | "set" | "let" | "hit" | "shut" | "begin" | "forget")
}

fn lexicon() -> &'static Lexicon {
    static LEX: OnceLock<Lexicon> = OnceLock::new();
    LEX.get_or_init(|| {
        let closed: HashMap<_, _> = CLOSED.iter().copied().collect();
        let mut forms: HashMap<String, &'static str> = HashMap::new();
        let mut verb_bases = std::collections::HashSet::new();
        for &n in NOUNS {
            forms.insert(n.to_string(), "NN");
        }
        for &a in ADJECTIVES {
            forms.insert(a.to_string(), "JJ");
        }
        for &(p, tag) in &[
            ("people", "NNS"), ("children", "NNS"), ("men", "NNS"), ("women", "NNS"),
            ("feet", "NNS"), ("teeth", "NNS"), ("mice", "NNS"), ("lives", "NNS"),
            ("wives", "NNS"),
        ] {
            forms.insert(p.to_string(), tag);
        }
        for &v in VERBS {
            verb_bases.insert(v.to_string());
            let [s, ed, ing] = regular_inflections(v);
            forms.entry(v.to_string()).or_insert("VB");
            forms.entry(s).or_insert("VBZ");
            forms.insert(ed, "VBD");
            forms.insert(ing, "VBG");
        }
        for &(base, past, part) in IRREGULAR {
            verb_bases.insert(base.to_string());
            let [s, _, ing] = regular_inflections(base);
            forms.entry(base.to_string()).or_insert("VB");
            forms.entry(s).or_insert("VBZ");
            forms.insert(ing, "VBG");
            forms.insert(past.to_string(), "VBD");
            if part != past {
                forms.insert(part.to_string(), if part == base { "VB" } else { "VBN" });
            }
        }
        Lexicon {
            closed,
            forms,
            verb_bases,
        }
    })
}

fn punct_tag(surface: &str) -> Option<&'static str> {
    Some(match surface {
        "." | "!" | "?" | "..." | "…" => ".",
        "," => ",",
        ":" | ";" | "--" | "—" | "–" | "-" => ":",
        "\"" | "“" | "‘" | "«" | "``" => "``",
        "”" | "’" | "»" | "''" | "'" => "''",
        "(" | "[" | "{" => "(",
        ")" | "]" | "}" => ")",
        "$" | "£" | "€" => "$",
        "#" => "#",
        _ if !surface.is_empty() && surface.chars().all(|c| !c.is_alphanumeric()) => ":",
        _ => return None,
    })
}

fn is_number(s: &str) -> bool {
    s.chars().any(|c| c.is_ascii_digit())
        && s.chars().all(|c| c.is_ascii_digit() || matches!(c, '.' | ',' | '-' | '/' | '%'))
}

fn suffix_tag(lower: &str) -> &'static str {
    let ends = |s: &str| lower.len() > s.len() + 2 && lower.ends_with(s);
    if NOT_VERB_SUFFIX.contains(&lower) {
        return if lower.ends_with('s') { "NNS" } else { "NN" };
    }
    if ends("ing") {
        "VBG"
    } else if ends("ed") {
        "VBD"
    } else if ends("ly") {
        "RB"
    } else if ["ous", "ful", "ive", "able", "ible", "ical", "less", "ish", "ent", "ant", "ic", "al"]
        .iter()
        .any(|s| ends(s))
        && !["ment", "ist"].iter().any(|s| lower.ends_with(s))
    {
        "JJ"
    } else if ends("est") {
        "JJS"
    } else if lower.ends_with("ss") || lower.ends_with("us") || lower.ends_with("is") {
        "NN"
    } else if lower.ends_with('s') && lower.len() > 3 {
        "NNS"
    } else {
        "NN"
    }
}

fn initial_tag(surface: &str, lower: &str, sentence_start: bool) -> &'static str {
    let lex = lexicon();
    if let Some(t) = punct_tag(surface) {
        return t;
    }
    if is_number(surface) {
        return "CD";
    }
    if lower == "'s" || lower == "’s" {
        return "POS";
    }
    if lower == "that" {
        return "DT";
    }
    if let Some(&t) = lex.closed.get(lower) {
        return t;
    }
    if let Some(&t) = lex.forms.get(lower) {
        return t;
    }
    let capitalized = surface.chars().next().is_some_and(char::is_uppercase);
    if capitalized && !sentence_start {
        return "NNP";
    }
    if lower.contains('-') {
        return "JJ";
    }
    suffix_tag(lower)
}

fn is_be(lower: &str) -> bool {
    matches!(
        lower,
        "be" | "is" | "are" | "am" | "was" | "were" | "been" | "being" | "'re" | "’re" | "'m" | "’m"
    )
}

fn is_have(lower: &str) -> bool {
    matches!(lower, "have" | "has" | "had" | "having" | "'ve" | "’ve")
}

fn is_nominal(tag: &str) -> bool {
    matches!(tag, "NN" | "NNS" | "NNP" | "NNPS" | "PRP" | "CD")
}

/// Tag surface tokens with Penn tags. Every token receives exactly one tag.
pub fn builtin_tag(input: &Tokenized) -> TokenStream {
    let lex = lexicon();
    let lowers: Vec<String> = input.tokens.iter().map(|s| casefold(s)).collect();
    let mut starts = vec![false; input.tokens.len()];
    let mut prev = 0;
    for &b in std::iter::once(&0).chain(input.sentence_boundaries.iter()) {
        if b < starts.len() {
            starts[b] = true;
        }
        prev = prev.max(b);
    }
    // Sentence-initial after an opening quote.
    for i in 1..input.tokens.len() {
        if starts[i - 1] && punct_tag(&input.tokens[i - 1]) == Some("``") {
            starts[i] = true;
        }
    }
    let mut tags: Vec<&'static str> = input
        .tokens
        .iter()
        .zip(&lowers)
        .zip(&starts)
        .map(|((s, l), &st)| initial_tag(s, l, st))
        .collect();

    for i in 0..tags.len() {
        let lower = lowers[i].as_str();
        let prev_tag = if i > 0 { tags[i - 1] } else { "" };
        let prev_lower = if i > 0 { lowers[i - 1].as_str() } else { "" };
        // Auxiliary before this token, skipping one adverb.
        let aux = |pred: fn(&str) -> bool| {
            (i > 0 && pred(&lowers[i - 1]))
                || (i > 1 && tags[i - 1] == "RB" && pred(&lowers[i - 2]))
        };
        let modal_or_to = (i > 0 && matches!(tags[i - 1], "MD" | "TO"))
            || (i > 1 && tags[i - 1] == "RB" && matches!(tags[i - 2], "MD" | "TO"))
            || (i > 0 && matches!(prev_lower, "do" | "does" | "did"))
            || (i > 1 && tags[i - 1] == "RB" && matches!(lowers[i - 2].as_str(), "do" | "does" | "did"));
        let next_lower = lowers.get(i + 1).map(String::as_str).unwrap_or("");
        let next_tag = tags.get(i + 1).copied().unwrap_or("");

        let tag = tags[i];
        let new_tag = match tag {
            "VBD" | "VBN" if aux(is_have) || aux(is_be) => "VBN",
            "VBD" if matches!(prev_tag, "DT" | "PRP$" | "JJ" | "IN") && !starts[i] => "JJ",
            "VBD" if starts[i] && is_nominal(next_tag) => "VBN",
            "VB" | "VBP" | "VBZ" | "NN" | "NNS" | "JJ"
                if modal_or_to && lex.verb_bases.contains(lower) =>
            {
                "VB"
            }
            "VB" if matches!(prev_tag, "DT" | "PRP$" | "JJ" | "POS" | "IN") => "NN",
            "VBZ" if matches!(prev_tag, "DT" | "PRP$" | "JJ" | "POS" | "IN" | "CD") => "NNS",
            "VB" if matches!(prev_tag, "PRP" | "NNS" | "WDT" | "WP" | "NN" | "NNP") && !starts[i] => {
                if matches!(prev_lower, "he" | "she" | "it") {
                    "VB"
                } else {
                    "VBP"
                }
            }
            "VB" if starts[i] => "VB",
            "NN" if matches!(prev_lower, "i" | "we" | "they" | "you") && lex.verb_bases.contains(lower) => "VBP",
            "NNS" if matches!(prev_tag, "PRP" | "NNP") && lex.forms.get(lower) == Some(&"VBZ") => "VBZ",
            "EX" if !(is_be(next_lower)
                || matches!(next_lower, "'s" | "’s" | "seems" | "seem" | "appears" | "appear" | "may" | "might" | "must" | "will" | "would" | "could" | "can" | "should")) =>
            {
                "RB"
            }
            "POS" if matches!(prev_lower, "he" | "she" | "it" | "that" | "there" | "what" | "who" | "here" | "where" | "how" | "this") => "VBZ",
            "POS" if matches!(prev_tag, "PRP" | "EX") => "VBZ",
            "DT" if lower == "that" => {
                if i > 0 && (prev_tag.starts_with("NN")) && !starts[i] {
                    "WDT"
                } else if (i > 0 && (prev_tag.starts_with("VB") || prev_tag == "JJ" || prev_tag == "RB"))
                    || matches!(next_tag, "PRP" | "NNP")
                {
                    "IN"
                } else {
                    "DT"
                }
            }
            other => other,
        };
        tags[i] = new_tag;
    }

    let tokens = input
        .tokens
        .iter()
        .zip(lowers)
        .zip(tags)
        .enumerate()
        .map(|(index, ((surface, lower), tag))| TaggedToken {
            surface: surface.clone(),
            lower,
            tag: tag.to_string(),
            index,
            lemma: None,
        })
        .collect();
    TokenStream {
        tokens,
        sentence_boundaries: input.sentence_boundaries.clone(),
    }
}
