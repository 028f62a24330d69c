use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::Document;
use crate::error::{Error, Result};

/// Coarse part-of-speech classes known to the lexicon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pos {
    Noun,
    Adj,
    Adv,
    Other,
}

impl Pos {
    pub fn is_content(self) -> bool {
        !matches!(self, Pos::Other)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Pos::Noun => "NOUN",
            Pos::Adj => "ADJ",
            Pos::Adv => "ADV",
            Pos::Other => "OTHER",
        }
    }
}

impl FromStr for Pos {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "NOUN" => Ok(Pos::Noun),
            "ADJ" => Ok(Pos::Adj),
            "ADV" => Ok(Pos::Adv),
            "OTHER" => Ok(Pos::Other),
            other => Err(format!("unknown part of speech {other:?}")),
        }
    }
}

/// Picks the nouns, adjectives and adverbs out of a token sequence.
pub trait ContentTagger {
    fn content_words(&self, tokens: &[String]) -> BTreeSet<String>;
}

/// Dictionary lookup tagger; words missing from the lexicon are not
/// content words.
#[derive(Clone, Debug, Default)]
pub struct LexiconTagger {
    entries: HashMap<String, Pos>,
}

const BUNDLED_LEXICON: &str = include_str!("../../data/lexicon.tsv");

impl LexiconTagger {
    /// The lexicon shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LEXICON, Path::new("<bundled lexicon>"))
            .expect("bundled lexicon is well formed")
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&raw, path)
    }

    /// Parses `word<TAB>POS` lines; `#` starts a comment line.
    pub fn parse(raw: &str, origin: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        for (n, line) in raw.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, pos) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(origin, n + 1, "expected word<TAB>POS"))?;
            let pos: Pos = pos.trim().parse().map_err(|m| Error::parse(origin, n + 1, m))?;
            entries.insert(word.trim().to_lowercase(), pos);
        }
        Ok(LexiconTagger { entries })
    }

    pub fn insert(&mut self, word: &str, pos: Pos) {
        self.entries.insert(word.to_lowercase(), pos);
    }

    pub fn lookup(&self, word: &str) -> Option<Pos> {
        self.entries.get(&word.to_lowercase()).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries sorted by word, for writing lexicon files.
    pub fn sorted_entries(&self) -> Vec<(&str, Pos)> {
        let mut v: Vec<_> = self.entries.iter().map(|(w, &p)| (w.as_str(), p)).collect();
        v.sort_unstable_by(|a, b| a.0.cmp(b.0));
        v
    }
}

impl ContentTagger for LexiconTagger {
    fn content_words(&self, tokens: &[String]) -> BTreeSet<String> {
        tokens
            .iter()
            .map(|t| t.to_lowercase())
            .filter(|t| self.entries.get(t).is_some_and(|p| p.is_content()))
            .collect()
    }
}

/// Content words of a document. A precomputed list wins over the tagger.
pub fn content_words(doc: &Document, tagger: &dyn ContentTagger) -> BTreeSet<String> {
    if let Some(words) = &doc.content_words {
        return words.clone();
    }
    tagger.content_words(&doc.tokens())
}
