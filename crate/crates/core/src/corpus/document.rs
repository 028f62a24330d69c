use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::tokenize;
use crate::error::{Error, Result};

/// Sentiment polarity. Class index 0 is negative, 1 is positive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Negative => 0,
            Label::Positive => 1,
        }
    }

    pub fn from_index(i: usize) -> Result<Label> {
        match i {
            0 => Ok(Label::Negative),
            1 => Ok(Label::Positive),
            _ => Err(Error::domain(format!("no label with class index {i}"))),
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Negative => Label::Positive,
            Label::Positive => Label::Negative,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Negative => "neg",
            Label::Positive => "pos",
        })
    }
}

/// Star ratings up to 3 are negative, 4 and 5 positive.
pub fn label_from_rating(rating: u8) -> Result<Label> {
    match rating {
        1..=3 => Ok(Label::Negative),
        4 | 5 => Ok(Label::Positive),
        _ => Err(Error::domain(format!("rating {rating} outside 1..=5"))),
    }
}

/// One review.
#[derive(Clone, Debug, PartialEq)]
pub struct Document {
    pub id: String,
    pub domain: String,
    pub text: Option<String>,
    pub tokens: Option<Vec<String>>,
    pub rating: Option<u8>,
    pub label: Option<Label>,
    /// Precomputed content words; when present they override the tagger.
    pub content_words: Option<BTreeSet<String>>,
}

impl Document {
    pub fn from_text(id: impl Into<String>, domain: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            domain: domain.into(),
            text: Some(text.into()),
            tokens: None,
            rating: None,
            label: None,
            content_words: None,
        }
    }

    pub fn from_tokens(id: impl Into<String>, domain: impl Into<String>, tokens: Vec<String>) -> Self {
        Document {
            id: id.into(),
            domain: domain.into(),
            text: None,
            tokens: Some(tokens),
            rating: None,
            label: None,
            content_words: None,
        }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_rating(mut self, rating: u8) -> Result<Self> {
        self.label = Some(label_from_rating(rating)?);
        self.rating = Some(rating);
        Ok(self)
    }

    /// Token sequence, tokenising the raw text on demand.
    pub fn tokens(&self) -> Vec<String> {
        match (&self.tokens, &self.text) {
            (Some(t), _) => t.iter().map(|w| w.to_lowercase()).collect(),
            (None, Some(text)) => tokenize(text),
            (None, None) => Vec::new(),
        }
    }

    fn text_field(&self) -> String {
        match (&self.text, &self.tokens) {
            (Some(t), _) => t.clone(),
            (None, Some(toks)) => toks.join(" "),
            (None, None) => String::new(),
        }
    }
}

fn parse_label_field(field: &str) -> std::result::Result<(Option<u8>, Option<Label>), String> {
    match field {
        "?" => Ok((None, None)),
        "pos" => Ok((None, Some(Label::Positive))),
        "neg" => Ok((None, Some(Label::Negative))),
        other => {
            let rating: u8 = other
                .parse()
                .map_err(|_| format!("label field {other:?} is not 1-5, pos, neg or ?"))?;
            let label = label_from_rating(rating).map_err(|e| e.to_string())?;
            Ok((Some(rating), Some(label)))
        }
    }
}

/// Reads a document file: one tab-separated record per line with fields
/// `id, domain, rating|pos|neg|?, text` and an optional fifth field of
/// comma-separated content words. Blank lines are skipped.
pub fn ingest(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_documents(&raw, path)
}

pub fn parse_documents(raw: &str, origin: &Path) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (n, line) in raw.lines().enumerate() {
        let line_no = n + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !(4..=5).contains(&fields.len()) {
            return Err(Error::parse(
                origin,
                line_no,
                format!("expected 4 or 5 tab-separated fields, found {}", fields.len()),
            ));
        }
        if fields[0].is_empty() {
            return Err(Error::parse(origin, line_no, "empty document id"));
        }
        let (rating, label) =
            parse_label_field(fields[2]).map_err(|m| Error::parse(origin, line_no, m))?;
        let content_words = fields.get(4).map(|f| {
            f.split(',')
                .map(|w| w.trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect::<BTreeSet<_>>()
        });
        docs.push(Document {
            id: fields[0].to_string(),
            domain: fields[1].to_string(),
            text: Some(fields[3].to_string()),
            tokens: None,
            rating,
            label,
            content_words,
        });
    }
    Ok(docs)
}

/// Writes documents in the format read by [`ingest`].
pub fn write_documents(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for d in docs {
        let label = match (d.rating, d.label) {
            (Some(r), _) => r.to_string(),
            (None, Some(l)) => l.to_string(),
            (None, None) => "?".to_string(),
        };
        let text = d.text_field().replace(['\t', '\n', '\r'], " ");
        write!(out, "{}\t{}\t{}\t{}", d.id, d.domain, label, text).expect("write to Vec");
        if let Some(words) = &d.content_words {
            let joined: Vec<&str> = words.iter().map(String::as_str).collect();
            write!(out, "\t{}", joined.join(",")).expect("write to Vec");
        }
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
