//! End-to-end news embedding: tokenise, select elements, build and prune
//! the news–element network, walk it, train the subnode model and embed
//! every document.

use serde::{Deserialize, Serialize};

use crate::corpus::{
    compute_tfidf, tokenize, Document, ElementSelector, FeatureBag, FeatureConfig, FeatureExtractor, Featurizer, Field,
    Lexicon, RankMode, TfidfTable, TokenizedDoc, TokenizerConfig, WordCountBuckets,
};
use crate::error::{Error, Result};
use crate::graph::{build_network, AttributedGraph, NewsEntry};
use crate::subnode::{decompose, embed_news, train, SubnodeModel, TrainConfig};
use crate::walk::{sample_walks, WalkConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElementConfig {
    pub quantile: f64,
    pub mode: RankMode,
}

impl Default for ElementConfig {
    fn default() -> Self {
        ElementConfig {
            quantile: 0.01,
            mode: RankMode::Corpus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    pub tokenizer: TokenizerConfig,
    pub elements: ElementConfig,
    pub features: FeatureConfig,
    pub walk: WalkConfig,
    pub train: TrainConfig,
}

/// Per-field tf-idf tables of a tokenised corpus.
pub struct TfidfTables {
    pub title: TfidfTable,
    pub body: TfidfTable,
    pub combined: TfidfTable,
}

impl TfidfTables {
    pub fn compute(tokens: &[TokenizedDoc]) -> Result<Self> {
        Ok(TfidfTables {
            title: compute_tfidf(tokens, Field::Title)?,
            body: compute_tfidf(tokens, Field::Body)?,
            combined: compute_tfidf(tokens, Field::Combined)?,
        })
    }
}

/// Feature bags of all documents plus the featurizer that reproduces them
/// for documents outside the corpus.
pub struct Featurized {
    pub tokens: Vec<TokenizedDoc>,
    pub entries: Vec<NewsEntry>,
    /// Documents whose feature bag came out empty.
    pub dropped: Vec<String>,
    pub featurizer: Featurizer,
}

/// Elements are ranked on the combined field; word-count buckets are the
/// corpus quartiles. Documents with an empty bag are dropped.
pub fn featurize(
    docs: &[Document],
    tables: &TfidfTables,
    lexicon: Option<Lexicon>,
    tokenizer: &TokenizerConfig,
    elements: &ElementConfig,
    features: &FeatureConfig,
) -> Result<Featurized> {
    let tokens: Vec<TokenizedDoc> = docs.iter().map(|d| tokenize(d, tokenizer)).collect();
    let selector = ElementSelector::new(&tables.combined, elements.quantile, elements.mode)?;
    let counts: Vec<usize> = tokens.iter().map(TokenizedDoc::word_count).collect();
    let extractor = FeatureExtractor::new(features.clone(), lexicon, WordCountBuckets::quartiles(&counts))?;
    let mut entries = Vec::with_capacity(docs.len());
    let mut dropped = Vec::new();
    for (doc, tok) in docs.iter().zip(&tokens) {
        let elems = selector.extract(tok)?;
        let bag = match extractor.extract(doc, tok, &elems) {
            Err(Error::EmptyFeatureBag(id)) => {
                dropped.push(id);
                continue;
            }
            other => other?,
        };
        entries.push(NewsEntry {
            id: doc.id.clone(),
            elements: elems,
            features: bag,
        });
    }
    let featurizer = Featurizer {
        tokenizer: tokenizer.clone(),
        vocabulary: selector.vocabulary(),
        extractor,
    };
    Ok(Featurized {
        tokens,
        entries,
        dropped,
        featurizer,
    })
}

pub struct EmbeddingRun {
    pub featurizer: Featurizer,
    pub graph: AttributedGraph,
    pub model: SubnodeModel,
    /// One vector per featurised document in corpus order, with the number
    /// of features skipped as out of vocabulary.
    pub vectors: Vec<(String, Vec<f64>, usize)>,
    pub dropped: Vec<String>,
}

/// Runs every embedding stage in memory.
pub fn embed_corpus(docs: &[Document], lexicon: Option<Lexicon>, config: &EmbedConfig) -> Result<EmbeddingRun> {
    let tokens: Vec<TokenizedDoc> = docs.iter().map(|d| tokenize(d, &config.tokenizer)).collect();
    let tables = TfidfTables::compute(&tokens)?;
    let feats = featurize(
        docs,
        &tables,
        lexicon,
        &config.tokenizer,
        &config.elements,
        &config.features,
    )?;
    let graph = build_network(&feats.entries, &tables.title, &tables.body)?.prune()?;
    let walks = sample_walks(&graph, &config.walk)?;
    let dec = decompose(&walks, &graph)?;
    let model = train(&dec, &config.train)?;
    let vectors = embed_bags(feats.entries.iter().map(|e| (e.id.as_str(), &e.features)), &model)?;
    Ok(EmbeddingRun {
        featurizer: feats.featurizer,
        graph,
        model,
        vectors,
        dropped: feats.dropped,
    })
}

pub fn embed_bags<'a>(
    bags: impl Iterator<Item = (&'a str, &'a FeatureBag)>,
    model: &SubnodeModel,
) -> Result<Vec<(String, Vec<f64>, usize)>> {
    bags.map(|(id, bag)| embed_news(bag, &model.features).map(|(v, skipped)| (id.to_string(), v, skipped)))
        .collect()
}
