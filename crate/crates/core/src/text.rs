//! Narrative normalization, tokenization, stopword removal and lemmatization.
//!
//! The order is fixed: normalize, tokenize, remove stopwords, lemmatize.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

pub type TokenList = Vec<String>;

/// Lowercase, map everything outside `[a-z0-9 ]` to a space, collapse runs
/// of whitespace and trim.
pub fn normalize_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_ascii_lowercase() || ch.is_ascii_digit() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(ch);
        } else {
            pending_space = true;
        }
    }
    out
}

/// Normalizes, then splits on spaces.
pub fn tokenize(text: &str) -> TokenList {
    normalize_text(text)
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Stoplist {
    words: BTreeSet<String>,
}

const DEFAULT_STOPLIST: &str = include_str!("stopwords.txt");

impl Stoplist {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Parses one token per line; blank lines and `#` comments are ignored.
    /// Entries are normalized so they compare equal to pipeline tokens.
    pub fn parse(text: &str) -> Self {
        let words = text
            .lines()
            .map(|line| line.split('#').next().unwrap_or(""))
            .map(normalize_text)
            .filter(|w| !w.is_empty())
            .collect();
        Self { words }
    }

    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(&fs::read_to_string(path)?))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }
}

impl Stoplist {
    /// The bundled English function-word list.
    pub fn english() -> Self {
        static DEFAULT: std::sync::OnceLock<Stoplist> = std::sync::OnceLock::new();
        DEFAULT
            .get_or_init(|| Stoplist::parse(DEFAULT_STOPLIST))
            .clone()
    }
}

impl FromIterator<String> for Stoplist {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        Self {
            words: iter.into_iter().collect(),
        }
    }
}

pub fn remove_stopwords(tokens: &[String], stoplist: &Stoplist) -> TokenList {
    tokens
        .iter()
        .filter(|t| !stoplist.contains(t))
        .cloned()
        .collect()
}

/// Irregular forms and words the suffix rules would damage.
const LEMMA_EXCEPTIONS: &[(&str, &str)] = &[
    ("am", "be"),
    ("are", "be"),
    ("is", "be"),
    ("was", "be"),
    ("were", "be"),
    ("been", "be"),
    ("being", "be"),
    ("has", "have"),
    ("had", "have"),
    ("having", "have"),
    ("does", "do"),
    ("did", "do"),
    ("done", "do"),
    ("went", "go"),
    ("gone", "go"),
    ("goes", "go"),
    ("flew", "fly"),
    ("flown", "fly"),
    ("flies", "fly"),
    ("took", "take"),
    ("taken", "take"),
    ("came", "come"),
    ("saw", "see"),
    ("seen", "see"),
    ("began", "begin"),
    ("begun", "begin"),
    ("made", "make"),
    ("struck", "strike"),
    ("fell", "fall"),
    ("fallen", "fall"),
    ("caught", "catch"),
    ("brought", "bring"),
    ("thought", "think"),
    ("found", "find"),
    ("lost", "lose"),
    ("ran", "run"),
    ("held", "hold"),
    ("told", "tell"),
    ("said", "say"),
    ("stated", "state"),
    ("felt", "feel"),
    ("kept", "keep"),
    ("became", "become"),
    ("hit", "hit"),
    ("sank", "sink"),
    ("broke", "break"),
    ("broken", "break"),
    ("children", "child"),
    ("men", "man"),
    ("women", "woman"),
    ("feet", "foot"),
    ("aircraft", "aircraft"),
    ("during", "during"),
    ("nothing", "nothing"),
    ("something", "something"),
    ("anything", "anything"),
    ("ceiling", "ceiling"),
    ("wing", "wing"),
    ("string", "string"),
    ("thing", "thing"),
    ("this", "this"),
    ("thus", "thus"),
    ("gas", "gas"),
    ("bus", "bus"),
    ("status", "status"),
    ("always", "always"),
    ("series", "series"),
    ("species", "species"),
    ("need", "need"),
    ("speed", "speed"),
    ("feed", "feed"),
    ("red", "red"),
];

fn lemma_exception(token: &str) -> Option<&'static str> {
    LEMMA_EXCEPTIONS
        .iter()
        .find(|(form, _)| *form == token)
        .map(|(_, lemma)| *lemma)
}

fn has_vowel(s: &str) -> bool {
    s.bytes().any(|b| matches!(b, b'a' | b'e' | b'i' | b'o' | b'u'))
}

/// Reduces one token: exception table first, then the first suffix rule
/// that applies.
pub fn lemmatize_token(token: &str) -> String {
    if let Some(lemma) = lemma_exception(token) {
        return lemma.to_string();
    }
    if let Some(stem) = token.strip_suffix("ies") {
        return format!("{stem}y");
    }
    if let Some(stem) = token.strip_suffix("sses") {
        return format!("{stem}ss");
    }
    if token.len() > 3 && token.ends_with('s') && !token.ends_with("ss") {
        return token[..token.len() - 1].to_string();
    }
    for suffix in ["ing", "ed"] {
        if let Some(stem) = token.strip_suffix(suffix) {
            if has_vowel(stem) {
                return stem.to_string();
            }
        }
    }
    token.to_string()
}

pub fn lemmatize(tokens: &[String]) -> TokenList {
    tokens.iter().map(|t| lemmatize_token(t)).collect()
}

/// Full text pipeline for one narrative.
pub fn preprocess(text: &str, stoplist: &Stoplist) -> TokenList {
    lemmatize(&remove_stopwords(&tokenize(text), stoplist))
}
