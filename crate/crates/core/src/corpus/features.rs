use std::collections::BTreeSet;
use std::path::Path;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use super::{Document, TokenizedDoc};
use crate::error::{Error, Result};

pub const ELEMENT_PREFIX: &str = "elem:";

/// Namespaced feature identifiers (`elem:…`, `month:…`, …) describing one
/// news article. Iteration order is the sorted feature-id order, which is
/// also the summation order used when composing news vectors.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureBag(BTreeSet<String>);

impl FeatureBag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, feature: impl Into<String>) -> bool {
        self.0.insert(feature.into())
    }

    pub fn contains(&self, feature: &str) -> bool {
        self.0.contains(feature)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Only the `elem:` features.
    pub fn semantic(&self) -> FeatureBag {
        FeatureBag(
            self.0
                .iter()
                .filter(|f| f.starts_with(ELEMENT_PREFIX))
                .cloned()
                .collect(),
        )
    }

    pub fn union(&self, other: &FeatureBag) -> FeatureBag {
        FeatureBag(self.0.union(&other.0).cloned().collect())
    }
}

impl FromIterator<String> for FeatureBag {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        FeatureBag(iter.into_iter().collect())
    }
}

impl<'a> FromIterator<&'a str> for FeatureBag {
    fn from_iter<I: IntoIterator<Item = &'a str>>(iter: I) -> Self {
        FeatureBag(iter.into_iter().map(String::from).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Lexicon {
    pub positive: BTreeSet<String>,
    pub negative: BTreeSet<String>,
}

impl Lexicon {
    /// Word-per-line files; blank lines and `#` comments are skipped.
    pub fn load(positive: &Path, negative: &Path, lowercase: bool) -> Result<Self> {
        let read = |p: &Path| -> Result<BTreeSet<String>> {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Ok(text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| if lowercase { l.to_lowercase() } else { l.to_string() })
                .collect())
        };
        Ok(Lexicon {
            positive: read(positive)?,
            negative: read(negative)?,
        })
    }

    pub fn sentiment<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Sentiment {
        let mut diff = 0i64;
        for t in tokens {
            if self.positive.contains(t) {
                diff += 1;
            }
            if self.negative.contains(t) {
                diff -= 1;
            }
        }
        Sentiment::from_difference(diff)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sentiment {
    Negative,
    Neutral,
    Positive,
}

impl Sentiment {
    pub fn from_difference(diff: i64) -> Self {
        match diff.signum() {
            1 => Sentiment::Positive,
            -1 => Sentiment::Negative,
            _ => Sentiment::Neutral,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sentiment::Negative => "negative",
            Sentiment::Neutral => "neutral",
            Sentiment::Positive => "positive",
        }
    }
}

/// Ordinal word-count buckets `1..=boundaries.len() + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordCountBuckets {
    pub boundaries: Vec<usize>,
}

impl WordCountBuckets {
    pub fn new(mut boundaries: Vec<usize>) -> Self {
        boundaries.sort_unstable();
        boundaries.dedup();
        WordCountBuckets { boundaries }
    }

    /// Quartile boundaries (nearest rank) of the given word counts.
    pub fn quartiles(counts: &[usize]) -> Self {
        if counts.is_empty() {
            return Self::new(Vec::new());
        }
        let mut sorted = counts.to_vec();
        sorted.sort_unstable();
        let n = sorted.len();
        let at = |q: f64| sorted[((q * n as f64).ceil() as usize).clamp(1, n) - 1];
        Self::new(vec![at(0.25), at(0.5), at(0.75)])
    }

    pub fn bucket(&self, count: usize) -> usize {
        1 + self.boundaries.iter().filter(|&&b| b <= count).count()
    }

    pub fn n_buckets(&self) -> usize {
        self.boundaries.len() + 1
    }
}

/// Which labeled features accompany the semantic `elem:` features.
/// All switched off gives the semantic-only variant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// month, day of month and ISO weekday (Monday = 1)
    pub time: bool,
    pub sentiment: bool,
    pub words_count: bool,
    /// `type:<label>` for each document label
    pub labels: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            time: true,
            sentiment: true,
            words_count: true,
            labels: false,
        }
    }
}

impl FeatureConfig {
    pub fn semantic_only() -> Self {
        FeatureConfig {
            time: false,
            sentiment: false,
            words_count: false,
            labels: false,
        }
    }
}

pub fn extract_features(
    doc: &Document,
    tokens: &TokenizedDoc,
    elements: &BTreeSet<String>,
    lexicon: Option<&Lexicon>,
    buckets: &WordCountBuckets,
    config: &FeatureConfig,
) -> Result<FeatureBag> {
    let mut bag: FeatureBag = elements.iter().map(|e| format!("{ELEMENT_PREFIX}{e}")).collect();
    if config.time {
        bag.insert(format!("month:{}", doc.date.month()));
        bag.insert(format!("day:{}", doc.date.day()));
        bag.insert(format!("weekday:{}", doc.date.weekday().number_from_monday()));
    }
    if config.sentiment {
        let lexicon = lexicon.ok_or(Error::MissingLexicon)?;
        let words = tokens.title.iter().chain(&tokens.body).map(String::as_str);
        bag.insert(format!("sentiment:{}", lexicon.sentiment(words).as_str()));
    }
    if config.words_count {
        bag.insert(format!("words:{}", buckets.bucket(tokens.word_count())));
    }
    if config.labels {
        for label in &doc.labels {
            bag.insert(format!("type:{label}"));
        }
    }
    if bag.is_empty() {
        return Err(Error::EmptyFeatureBag(doc.id.clone()));
    }
    Ok(bag)
}

/// Everything needed to turn a document plus its elements into a feature
/// bag, kept together so unseen documents are featurised exactly like
/// training ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExtractor {
    pub config: FeatureConfig,
    pub lexicon: Option<Lexicon>,
    pub buckets: WordCountBuckets,
}

impl FeatureExtractor {
    pub fn new(config: FeatureConfig, lexicon: Option<Lexicon>, buckets: WordCountBuckets) -> Result<Self> {
        if config.sentiment && lexicon.is_none() {
            return Err(Error::MissingLexicon);
        }
        Ok(FeatureExtractor {
            config,
            lexicon,
            buckets,
        })
    }

    pub fn extract(&self, doc: &Document, tokens: &TokenizedDoc, elements: &BTreeSet<String>) -> Result<FeatureBag> {
        extract_features(
            doc,
            tokens,
            elements,
            self.lexicon.as_ref(),
            &self.buckets,
            &self.config,
        )
    }
}
