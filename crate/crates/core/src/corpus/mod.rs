//! Document ingestion, tokenization, tf-idf scoring and news feature
//! extraction.
//!
//! Documents arrive as JSON lines. Text is either split on whitespace or,
//! when the producer already segmented it (e.g. Chinese), taken verbatim
//! from `tokens_title` / `tokens_body`.

mod features;
mod tfidf;

use std::collections::{BTreeSet, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

pub use features::{
    extract_features, FeatureBag, FeatureConfig, FeatureExtractor, Lexicon, Sentiment, WordCountBuckets, ELEMENT_PREFIX,
};
pub use tfidf::{compute_tfidf, extract_elements, ElementSelector, Field, RankMode, TfidfTable};

/// Part-of-speech tags aligned one-to-one with the pre-tokenized fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct PosTags {
    #[serde(default)]
    pub title: Vec<String>,
    #[serde(default)]
    pub body: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    #[serde(default)]
    pub body: String,
    #[serde(deserialize_with = "deserialize_date")]
    pub date: NaiveDate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens_title: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens_body: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos_tags: Option<PosTags>,
    /// Categorical side information such as the news type.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<String>,
}

/// Accepts `YYYY-MM-DD` or a full ISO-8601 timestamp (date part kept).
fn deserialize_date<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<NaiveDate, D::Error> {
    let raw = String::deserialize(d)?;
    parse_date(&raw).map_err(serde::de::Error::custom)
}

pub fn parse_date(raw: &str) -> std::result::Result<NaiveDate, String> {
    let raw = raw.trim();
    if let Ok(d) = NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
        return Ok(d);
    }
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(raw) {
        return Ok(dt.date_naive());
    }
    if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S") {
        return Ok(dt.date());
    }
    Err(format!("unparseable date `{raw}`"))
}

impl Document {
    pub fn new(id: impl Into<String>, title: impl Into<String>, body: impl Into<String>, date: NaiveDate) -> Self {
        Document {
            id: id.into(),
            title: title.into(),
            body: body.into(),
            date,
            tokens_title: None,
            tokens_body: None,
            pos_tags: None,
            labels: Vec::new(),
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.title.trim().is_empty() && self.tokens_title.as_ref().is_none_or(|t| t.is_empty()) {
            return Err(format!("document `{}` has an empty title", self.id));
        }
        if let Some(tags) = &self.pos_tags {
            let check = |field: &str, tokens: &Option<Vec<String>>, tags: &Vec<String>| match tokens {
                Some(t) if t.len() == tags.len() => Ok(()),
                Some(t) => Err(format!(
                    "document `{}`: {} {field} tokens but {} tags",
                    self.id,
                    t.len(),
                    tags.len()
                )),
                None if tags.is_empty() => Ok(()),
                None => Err(format!("document `{}`: {field} tags without tokens", self.id)),
            };
            check("title", &self.tokens_title, &tags.title)?;
            check("body", &self.tokens_body, &tags.body)?;
        }
        Ok(())
    }
}

/// Reads a JSONL corpus, enforcing unique ids and non-empty titles.
pub fn read_documents(path: &Path) -> Result<Vec<Document>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let location = format!("{}:{}", path.display(), lineno + 1);
        let doc: Document = serde_json::from_str(&line).map_err(|e| Error::parse(&location, e))?;
        doc.validate().map_err(|m| Error::parse(&location, m))?;
        if !seen.insert(doc.id.clone()) {
            return Err(Error::parse(location, format!("duplicate id `{}`", doc.id)));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_documents(path: &Path, docs: &[Document]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for doc in docs {
        let line = serde_json::to_string(doc).map_err(|e| Error::parse(path.display().to_string(), e))?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    /// Trim ASCII punctuation from token edges (whitespace mode only).
    pub strip_punctuation: bool,
    /// Tag prefixes that qualify a token as an element (entity/action/noun).
    /// Only consulted when the document carries `pos_tags`.
    pub pos_prefixes: Vec<String>,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            lowercase: true,
            strip_punctuation: true,
            pos_prefixes: vec!["n".into(), "v".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedDoc {
    pub id: String,
    pub title: Vec<String>,
    pub body: Vec<String>,
    /// Tokens allowed to become elements; `None` means every token.
    pub eligible: Option<BTreeSet<String>>,
}

impl TokenizedDoc {
    pub fn field(&self, field: Field) -> Vec<&str> {
        match field {
            Field::Title => self.title.iter().map(String::as_str).collect(),
            Field::Body => self.body.iter().map(String::as_str).collect(),
            Field::Combined => self.title.iter().chain(&self.body).map(String::as_str).collect(),
        }
    }

    pub fn word_count(&self) -> usize {
        self.title.len() + self.body.len()
    }

    pub fn is_eligible(&self, token: &str) -> bool {
        self.eligible.as_ref().is_none_or(|set| set.contains(token))
    }
}

fn split_text(text: &str, config: &TokenizerConfig) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let tok = if config.strip_punctuation {
                raw.trim_matches(|c: char| c.is_ascii_punctuation())
            } else {
                raw
            };
            if tok.is_empty() {
                None
            } else if config.lowercase {
                Some(tok.to_lowercase())
            } else {
                Some(tok.to_string())
            }
        })
        .collect()
}

pub fn tokenize(doc: &Document, config: &TokenizerConfig) -> TokenizedDoc {
    let title = doc
        .tokens_title
        .clone()
        .unwrap_or_else(|| split_text(&doc.title, config));
    let body = doc.tokens_body.clone().unwrap_or_else(|| split_text(&doc.body, config));
    let eligible = doc.pos_tags.as_ref().map(|tags| {
        let keep = |tag: &String| config.pos_prefixes.iter().any(|p| tag.starts_with(p.as_str()));
        title
            .iter()
            .zip(&tags.title)
            .chain(body.iter().zip(&tags.body))
            .filter(|(_, tag)| keep(tag))
            .map(|(tok, _)| tok.clone())
            .collect()
    });
    TokenizedDoc {
        id: doc.id.clone(),
        title,
        body,
        eligible,
    }
}

/// Featurises documents outside the training network: elements are the
/// document's eligible tokens that belong to the training element
/// vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub tokenizer: TokenizerConfig,
    pub vocabulary: BTreeSet<String>,
    pub extractor: FeatureExtractor,
}

impl Featurizer {
    pub fn elements(&self, tokens: &TokenizedDoc) -> BTreeSet<String> {
        tokens
            .title
            .iter()
            .chain(&tokens.body)
            .filter(|t| self.vocabulary.contains(*t) && tokens.is_eligible(t))
            .cloned()
            .collect()
    }

    pub fn bag(&self, doc: &Document) -> Result<FeatureBag> {
        let tokens = tokenize(doc, &self.tokenizer);
        let elements = self.elements(&tokens);
        self.extractor.extract(doc, &tokens, &elements)
    }
}
