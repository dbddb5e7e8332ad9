use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TokenizedDoc;
use crate::error::{Error, Result};

/// Which token stream of a document a table is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Title,
    Body,
    Combined,
}

/// Per-document tf-idf scores. Every term present in a document has an
/// entry, including terms whose idf is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TfidfTable {
    doc_ids: Vec<String>,
    doc_index: HashMap<String, usize>,
    scores: Vec<BTreeMap<String, f64>>,
    doc_freq: BTreeMap<String, usize>,
}

/// `tf(e, k) * ln(|D| / df(e))`, with tf normalised by the token count of
/// the field. Documents are scored in parallel; each score depends only on
/// its own document and the global document frequencies, so the result does
/// not depend on the thread count.
pub fn compute_tfidf(docs: &[TokenizedDoc], field: Field) -> Result<TfidfTable> {
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let counts: Vec<(BTreeMap<&str, usize>, usize)> = docs
        .par_iter()
        .map(|doc| {
            let tokens = doc.field(field);
            let mut c = BTreeMap::new();
            for t in &tokens {
                *c.entry(*t).or_insert(0) += 1;
            }
            (c, tokens.len())
        })
        .collect();

    let mut doc_freq: BTreeMap<String, usize> = BTreeMap::new();
    for (c, _) in &counts {
        for term in c.keys() {
            *doc_freq.entry((*term).to_string()).or_insert(0) += 1;
        }
    }

    let n_docs = docs.len() as f64;
    let scores = counts
        .par_iter()
        .map(|(c, total)| {
            c.iter()
                .map(|(term, &n)| {
                    let df = doc_freq[*term] as f64;
                    let tf = n as f64 / *total as f64;
                    ((*term).to_string(), tf * (n_docs / df).ln())
                })
                .collect()
        })
        .collect();

    let doc_ids: Vec<String> = docs.iter().map(|d| d.id.clone()).collect();
    let doc_index = doc_ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
    Ok(TfidfTable {
        doc_ids,
        doc_index,
        scores,
        doc_freq,
    })
}

impl TfidfTable {
    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.doc_freq.get(term).copied().unwrap_or(0)
    }

    pub fn contains_doc(&self, doc_id: &str) -> bool {
        self.doc_index.contains_key(doc_id)
    }

    pub fn doc_scores(&self, doc_id: &str) -> Option<&BTreeMap<String, f64>> {
        self.doc_index.get(doc_id).map(|&i| &self.scores[i])
    }

    /// Zero when the term is absent from the document or the document is unknown.
    pub fn score(&self, doc_id: &str, term: &str) -> f64 {
        self.doc_scores(doc_id)
            .and_then(|s| s.get(term))
            .copied()
            .unwrap_or(0.0)
    }

    /// Highest score each term reaches in any document.
    pub fn max_scores(&self) -> BTreeMap<&str, f64> {
        let mut best: BTreeMap<&str, f64> = BTreeMap::new();
        for doc in &self.scores {
            for (term, &s) in doc {
                let slot = best.entry(term.as_str()).or_insert(s);
                if s > *slot {
                    *slot = s;
                }
            }
        }
        best
    }

    /// TSV rows `doc_id \t element \t score`, documents in corpus order.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (id, scores) in self.doc_ids.iter().zip(&self.scores) {
            for (term, s) in scores {
                writeln!(out, "{id}\t{term}\t{s}")?;
            }
        }
        Ok(())
    }

    /// Inverse of [`TfidfTable::write_tsv`]. Document frequencies are
    /// recovered from the rows, so documents without any term are dropped.
    pub fn read_tsv<R: BufRead>(input: R, origin: &str) -> Result<Self> {
        let mut doc_ids: Vec<String> = Vec::new();
        let mut doc_index: HashMap<String, usize> = HashMap::new();
        let mut scores: Vec<BTreeMap<String, f64>> = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::parse(origin, e))?;
            if line.is_empty() {
                continue;
            }
            let loc = || format!("{origin}:{}", lineno + 1);
            let mut parts = line.split('\t');
            let (Some(doc), Some(term), Some(score), None) = (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(Error::parse(loc(), "expected 3 tab-separated columns"));
            };
            let score: f64 = score.parse().map_err(|e| Error::parse(loc(), e))?;
            let idx = *doc_index.entry(doc.to_string()).or_insert_with(|| {
                doc_ids.push(doc.to_string());
                scores.push(BTreeMap::new());
                doc_ids.len() - 1
            });
            scores[idx].insert(term.to_string(), score);
        }
        let mut doc_freq = BTreeMap::new();
        for s in &scores {
            for term in s.keys() {
                *doc_freq.entry(term.clone()).or_insert(0) += 1;
            }
        }
        Ok(TfidfTable {
            doc_ids,
            doc_index,
            scores,
            doc_freq,
        })
    }
}

/// How the top-quantile cut is ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RankMode {
    /// Rank terms by their maximum score over all documents.
    #[default]
    Corpus,
    /// Rank terms within each document separately.
    Document,
}

/// Terms whose score reaches the score at rank `ceil(quantile * n)`.
/// Ties at the cutoff are all kept.
fn top_quantile<'a>(scored: impl Iterator<Item = (&'a str, f64)>, quantile: f64) -> BTreeSet<String> {
    let mut ranked: Vec<(&str, f64)> = scored.collect();
    if ranked.is_empty() {
        return BTreeSet::new();
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let n = ranked.len();
    // 1e-9 guards against 0.01 * 1000 landing just above 10
    let k = ((quantile * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let threshold = ranked[k - 1].1;
    ranked
        .into_iter()
        .take_while(|(_, s)| *s >= threshold)
        .map(|(t, _)| t.to_string())
        .collect()
}

fn check_quantile(quantile: f64) -> Result<()> {
    if quantile > 0.0 && quantile <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "quantile must lie in (0, 1], got {quantile}"
        )))
    }
}

/// Picks element terms per document. In corpus mode the ranking is computed
/// once and then intersected with each document's terms.
#[derive(Debug, Clone)]
pub struct ElementSelector<'t> {
    table: &'t TfidfTable,
    quantile: f64,
    mode: RankMode,
    vocabulary: Option<BTreeSet<String>>,
}

impl<'t> ElementSelector<'t> {
    pub fn new(table: &'t TfidfTable, quantile: f64, mode: RankMode) -> Result<Self> {
        check_quantile(quantile)?;
        let vocabulary = match mode {
            RankMode::Corpus => Some(top_quantile(table.max_scores().into_iter(), quantile)),
            RankMode::Document => None,
        };
        Ok(ElementSelector {
            table,
            quantile,
            mode,
            vocabulary,
        })
    }

    /// The corpus-level element vocabulary (corpus mode), or the union of
    /// every document's selection (document mode).
    pub fn vocabulary(&self) -> BTreeSet<String> {
        match &self.vocabulary {
            Some(v) => v.clone(),
            None => self
                .table
                .doc_ids()
                .iter()
                .flat_map(|id| self.select_ranked(id).unwrap_or_default())
                .collect(),
        }
    }

    fn select_ranked(&self, doc_id: &str) -> Result<BTreeSet<String>> {
        let scores = self
            .table
            .doc_scores(doc_id)
            .ok_or_else(|| Error::UnknownDocument(doc_id.to_string()))?;
        Ok(match &self.vocabulary {
            Some(vocab) => scores.keys().filter(|t| vocab.contains(*t)).cloned().collect(),
            None => top_quantile(scores.iter().map(|(t, s)| (t.as_str(), *s)), self.quantile),
        })
    }

    pub fn extract(&self, doc: &TokenizedDoc) -> Result<BTreeSet<String>> {
        let mut picked = self.select_ranked(&doc.id)?;
        picked.retain(|t| doc.is_eligible(t));
        Ok(picked)
    }

    pub fn mode(&self) -> RankMode {
        self.mode
    }
}

pub fn extract_elements(
    doc: &TokenizedDoc,
    table: &TfidfTable,
    quantile: f64,
    mode: RankMode,
) -> Result<BTreeSet<String>> {
    ElementSelector::new(table, quantile, mode)?.extract(doc)
}
