//! Weak labels from unstructured auction descriptions: text cleanup,
//! word-frequency analysis, and multilingual keyword lexicons.

use crate::dataset::Label;
use crate::error::{Error, Result};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

/// Deduplicated, lowercase, punctuation-free tokens of one description.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenSet(BTreeSet<String>);

impl TokenSet {
    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<String> for TokenSet {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        TokenSet(iter.into_iter().collect())
    }
}

/// Lowercase, split on any non-letter (digits and punctuation are
/// separators, so catalogue references like "RIC V 6" cannot leak spurious
/// keywords), drop empties, deduplicate.
pub fn normalize_text(raw: &str) -> TokenSet {
    raw.to_lowercase()
        .split(|c: char| !c.is_alphabetic())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Document-presence counts over a corpus of token sets, sorted by count
/// descending with alphabetical tie-breaks.
pub fn word_frequency(corpus: &[TokenSet]) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in corpus {
        for token in doc.iter() {
            *counts.entry(token).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts
        .into_iter()
        .map(|(w, c)| (w.to_owned(), c))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Language {
    En,
    Fr,
    Es,
    De,
}

impl Language {
    pub const ALL: [Language; 4] = [Language::En, Language::Fr, Language::Es, Language::De];

    pub fn as_str(&self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Fr => "fr",
            Language::Es => "es",
            Language::De => "de",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "en" => Ok(Language::En),
            "fr" => Ok(Language::Fr),
            "es" => Ok(Language::Es),
            "de" => Ok(Language::De),
            other => Err(Error::Data(format!("unknown language {other:?}"))),
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum KeywordKind {
    Base,
    Translation,
    Plural,
    Synonym,
}

impl KeywordKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            KeywordKind::Base => "base",
            KeywordKind::Translation => "translation",
            KeywordKind::Plural => "plural",
            KeywordKind::Synonym => "synonym",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(KeywordKind::Base),
            "translation" => Ok(KeywordKind::Translation),
            "plural" => Ok(KeywordKind::Plural),
            "synonym" => Ok(KeywordKind::Synonym),
            other => Err(Error::Data(format!("unknown keyword kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct LexiconEntry {
    pub keyword: String,
    pub language: Language,
    pub kind: KeywordKind,
}

/// The static translation/synonym tables, loaded from a checked-in TSV file
/// (`concept<TAB>keyword<TAB>language<TAB>kind`, `#` comments). Using a file
/// instead of a live translation API keeps runs reproducible.
#[derive(Debug, Clone, Default)]
pub struct LexiconFile {
    entries: BTreeMap<String, Vec<LexiconEntry>>,
}

impl LexiconFile {
    pub fn new() -> Self {
        Self::default()
    }

    /// The lexicon shipped with the crate (the five default concepts).
    pub fn builtin() -> Self {
        Self::parse_str(include_str!("../../../data/lexicon.tsv"), "<builtin>")
            .expect("builtin lexicon is well-formed")
    }

    pub fn insert(&mut self, concept: &str, keyword: &str, language: Language, kind: KeywordKind) {
        self.entries
            .entry(concept.to_lowercase())
            .or_default()
            .push(LexiconEntry {
                keyword: keyword.to_lowercase(),
                language,
                kind,
            });
    }

    pub fn concepts(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading lexicon {}", path.display()), e))?;
        Self::parse_str(&content, &path.display().to_string())
    }

    fn parse_str(content: &str, origin: &str) -> Result<Self> {
        let mut file = LexiconFile::new();
        for (lineno, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::Data(format!(
                    "{origin}:{}: expected 4 tab-separated fields, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let language = Language::parse(fields[2]).map_err(|_| {
                Error::Data(format!(
                    "{origin}:{}: unknown language {:?}",
                    lineno + 1,
                    fields[2]
                ))
            })?;
            let kind = KeywordKind::parse(fields[3]).map_err(|_| {
                Error::Data(format!(
                    "{origin}:{}: unknown keyword kind {:?}",
                    lineno + 1,
                    fields[3]
                ))
            })?;
            file.insert(fields[0], fields[1], language, kind);
        }
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from("# concept\tkeyword\tlanguage\tkind\n");
        for (concept, entries) in &self.entries {
            for e in entries {
                out.push_str(&format!(
                    "{concept}\t{}\t{}\t{}\n",
                    e.keyword,
                    e.language.as_str(),
                    e.kind.as_str()
                ));
            }
        }
        std::fs::write(path, out)
            .map_err(|e| Error::io(format!("writing lexicon {}", path.display()), e))
    }
}

/// All keywords that mark one concept as present, across languages.
#[derive(Debug, Clone)]
pub struct Lexicon {
    pub concept: String,
    pub entries: BTreeSet<LexiconEntry>,
}

impl Lexicon {
    pub fn contains_keyword(&self, token: &str) -> bool {
        self.entries.iter().any(|e| e.keyword == token)
    }

    pub fn keywords(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.keyword.as_str()).collect()
    }
}

/// Expand a concept into its full keyword set: the file's base keywords,
/// translations, synonyms and irregular plurals, plus rule-generated plurals
/// (append "s") of every base/translation/synonym keyword.
pub fn expand_lexicon(concept: &str, file: &LexiconFile) -> Result<Lexicon> {
    let concept = concept.to_lowercase();
    let raw = file
        .entries
        .get(&concept)
        .ok_or_else(|| Error::Config(format!("unknown concept {concept:?} in lexicon")))?;
    if raw.is_empty() {
        return Err(Error::Config(format!("concept {concept:?} has no lexicon entries")));
    }
    let mut entries: BTreeSet<LexiconEntry> = raw.iter().cloned().collect();
    for e in raw {
        if e.kind != KeywordKind::Plural {
            entries.insert(LexiconEntry {
                keyword: format!("{}s", e.keyword),
                language: e.language,
                kind: KeywordKind::Plural,
            });
        }
    }
    Ok(Lexicon { concept, entries })
}

/// Positive iff the description mentions any keyword of the concept.
/// Deliberately no negation handling: "no eagle" is positive, faithful to
/// keyword-based weak labeling.
pub fn assign_label(tokens: &TokenSet, lexicon: &Lexicon) -> Label {
    if tokens.iter().any(|t| lexicon.contains_keyword(t)) {
        Label::Positive
    } else {
        Label::Negative
    }
}
