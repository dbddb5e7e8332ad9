//! Synthetic corpora and market series with known structure.
//!
//! Documents draw most tokens from their topic's vocabulary with Zipf
//! frequencies, the rest from a shared vocabulary and, as ambiguity noise,
//! from other topics. Documents are laid out over consecutive weekdays.
//! Returns follow SWARCH dynamics plus a drift whose sign follows the
//! previous day's dominant topic.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{write_documents, Document, Lexicon};
use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::swarch::{simulate, write_returns, SwarchParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub topics: usize,
    pub docs_per_topic: usize,
    pub docs_per_day: usize,
    /// Distinct words per topic.
    pub topic_vocab: usize,
    pub shared_vocab: usize,
    pub title_len: usize,
    pub body_len: usize,
    /// Share of tokens drawn from the document's own topic.
    pub topic_share: f64,
    /// Share of tokens drawn from other topics.
    pub cross_share: f64,
    pub zipf_exponent: f64,
    /// Positive and negative lexicon words, each, taken from the shared vocabulary.
    pub lexicon_size: usize,
    pub start_date: NaiveDate,
    /// Coupling between the previous day's dominant topic and the return.
    pub signal: f64,
    /// Drift magnitude at full coupling.
    pub drift: f64,
    pub market: SwarchParams,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            topics: 2,
            docs_per_topic: 80,
            docs_per_day: 3,
            topic_vocab: 60,
            shared_vocab: 80,
            title_len: 6,
            body_len: 40,
            topic_share: 0.6,
            cross_share: 0.1,
            zipf_exponent: 1.0,
            lexicon_size: 8,
            start_date: NaiveDate::from_ymd_opt(2015, 1, 5).expect("valid date"),
            signal: 0.0,
            drift: 0.02,
            market: SwarchParams {
                mean: 0.0,
                ar: 0.0,
                alpha0: 1e-4,
                alpha1: 0.2,
                gamma_high: 4.0,
                p11: 0.98,
                p22: 0.95,
            },
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.topics,
            self.docs_per_topic,
            self.docs_per_day,
            self.topic_vocab,
            self.shared_vocab,
            self.title_len,
            self.body_len,
        ];
        let shares = self.topic_share >= 0.0 && self.cross_share >= 0.0 && self.topic_share + self.cross_share <= 1.0;
        if counts.contains(&0)
            || !shares
            || !(0.0..=1.0).contains(&self.signal)
            || self.zipf_exponent.is_nan()
            || self.zipf_exponent < 0.0
            || !self.drift.is_finite()
            || 2 * self.lexicon_size > self.shared_vocab
        {
            return Err(Error::InvalidConfig(format!("invalid synth config {self:?}")));
        }
        if self.topics == 1 && self.cross_share > 0.0 {
            return Err(Error::InvalidConfig(
                "cross-topic noise needs at least two topics".into(),
            ));
        }
        self.market.validate()
    }

    pub fn n_docs(&self) -> usize {
        self.topics * self.docs_per_topic
    }

    pub fn n_days(&self) -> usize {
        self.n_docs().div_ceil(self.docs_per_day)
    }
}

pub fn topic_word(topic: usize, rank: usize) -> String {
    format!("t{topic}w{rank}")
}

pub fn shared_word(rank: usize) -> String {
    format!("s{rank}")
}

/// Consecutive weekdays from `start` (rolled forward off weekends).
pub fn trading_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date in range");
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub documents: Vec<Document>,
    /// Topic of each document.
    pub topics: Vec<usize>,
    pub days: Vec<NaiveDate>,
    pub lexicon: Lexicon,
}

impl SynthCorpus {
    /// Majority topic per day, lowest index on ties; `None` on empty days.
    pub fn dominant_topics(&self, n_topics: usize) -> Vec<Option<usize>> {
        self.days
            .iter()
            .map(|day| {
                let mut counts = vec![0usize; n_topics];
                for (doc, &t) in self.documents.iter().zip(&self.topics) {
                    if doc.date == *day {
                        counts[t] += 1;
                    }
                }
                let best = counts.iter().copied().max().unwrap_or(0);
                (best > 0).then(|| counts.iter().position(|&c| c == best).expect("max exists"))
            })
            .collect()
    }
}

fn zipf(n: usize, s: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|k| (k as f64).powf(-s))).expect("positive weights")
}

/// Documents with `topic<k>` labels, spread over consecutive weekdays.
pub fn gen_corpus(config: &SynthConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let mut rng = rng_for(config.seed, "synth:corpus");
    let mut topics: Vec<usize> = (0..config.topics)
        .flat_map(|t| std::iter::repeat_n(t, config.docs_per_topic))
        .collect();
    topics.shuffle(&mut rng);
    let days = trading_days(config.start_date, config.n_days());
    let topic_dist = zipf(config.topic_vocab, config.zipf_exponent);
    let shared_dist = zipf(config.shared_vocab, config.zipf_exponent);
    let draw = |rng: &mut rand_chacha::ChaCha8Rng, topic: usize| {
        let u: f64 = rng.random();
        if u < config.topic_share {
            topic_word(topic, topic_dist.sample(rng))
        } else if u < config.topic_share + config.cross_share {
            let mut other = rng.random_range(0..config.topics - 1);
            if other >= topic {
                other += 1;
            }
            topic_word(other, topic_dist.sample(rng))
        } else {
            shared_word(shared_dist.sample(rng))
        }
    };
    let mut documents = Vec::with_capacity(topics.len());
    for (i, &topic) in topics.iter().enumerate() {
        let title: Vec<String> = (0..config.title_len).map(|_| draw(&mut rng, topic)).collect();
        let body: Vec<String> = (0..config.body_len).map(|_| draw(&mut rng, topic)).collect();
        let mut doc = Document::new(
            format!("doc{i:05}"),
            title.join(" "),
            body.join(" "),
            days[i / config.docs_per_day],
        );
        doc.labels = vec![format!("topic{topic}")];
        documents.push(doc);
    }
    // lexicon words come from the tail of the shared vocabulary
    let tail = config.shared_vocab - 2 * config.lexicon_size + 1;
    let positive: BTreeSet<String> = (tail..tail + config.lexicon_size).map(shared_word).collect();
    let negative: BTreeSet<String> = (tail + config.lexicon_size..=config.shared_vocab)
        .map(shared_word)
        .collect();
    Ok(SynthCorpus {
        documents,
        topics,
        days,
        lexicon: Lexicon { positive, negative },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthMarket {
    pub returns: Vec<(NaiveDate, f64)>,
    /// True regime per day, 1 = high volatility.
    pub regimes: Vec<u8>,
    pub drift: Vec<f64>,
}

/// SWARCH returns over the corpus days. Day `t` gets drift
/// `signal · drift · (+1 for even, −1 for odd dominant topic of day t−1)`.
pub fn gen_market(config: &SynthConfig, corpus: &SynthCorpus) -> Result<SynthMarket> {
    config.validate()?;
    let dominant = corpus.dominant_topics(config.topics);
    let mut drift = vec![0.0; corpus.days.len()];
    for t in 1..drift.len() {
        if let Some(topic) = dominant[t - 1] {
            let sign = if topic % 2 == 0 { 1.0 } else { -1.0 };
            drift[t] = config.signal * config.drift * sign;
        }
    }
    let mut rng = rng_for(config.seed, "synth:market");
    let (ys, regimes) = simulate(&config.market, corpus.days.len(), Some(&drift), &mut rng);
    Ok(SynthMarket {
        returns: corpus.days.iter().copied().zip(ys).collect(),
        regimes,
        drift,
    })
}

/// File names written by [`write_synth`].
pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const TOPICS_FILE: &str = "topics.csv";
pub const POSITIVE_FILE: &str = "lexicon_positive.txt";
pub const NEGATIVE_FILE: &str = "lexicon_negative.txt";
pub const RETURNS_FILE: &str = "returns.csv";
pub const REGIMES_FILE: &str = "true_regimes.csv";

fn write_text(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    body(&mut out).and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

/// Writes corpus, topic labels, lexicon, returns and the true regime path.
pub fn write_synth(dir: &Path, corpus: &SynthCorpus, market: &SynthMarket) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_documents(&dir.join(CORPUS_FILE), &corpus.documents)?;
    write_text(&dir.join(TOPICS_FILE), |out| {
        writeln!(out, "doc_id,topic")?;
        for (doc, t) in corpus.documents.iter().zip(&corpus.topics) {
            writeln!(out, "{},{t}", doc.id)?;
        }
        Ok(())
    })?;
    for (name, words) in [
        (POSITIVE_FILE, &corpus.lexicon.positive),
        (NEGATIVE_FILE, &corpus.lexicon.negative),
    ] {
        write_text(&dir.join(name), |out| {
            words.iter().try_for_each(|w| writeln!(out, "{w}"))
        })?;
    }
    write_returns(&dir.join(RETURNS_FILE), &market.returns)?;
    write_text(&dir.join(REGIMES_FILE), |out| {
        writeln!(out, "date,regime")?;
        for ((d, _), r) in market.returns.iter().zip(&market.regimes) {
            writeln!(out, "{d},{r}")?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{compute_tfidf, tokenize, ElementSelector, Field, RankMode, TokenizerConfig};

    #[test]
    fn deterministic_given_seed() {
        let cfg = SynthConfig::default();
        let a = gen_corpus(&cfg).unwrap();
        assert_eq!(a, gen_corpus(&cfg).unwrap());
        assert_eq!(gen_market(&cfg, &a).unwrap(), gen_market(&cfg, &a).unwrap());
        let other = gen_corpus(&SynthConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.documents, other.documents);
    }

    #[test]
    fn layout_and_labels() {
        let cfg = SynthConfig::default();
        let c = gen_corpus(&cfg).unwrap();
        assert_eq!(c.documents.len(), 160);
        assert_eq!(c.days.len(), 54);
        assert!(c
            .days
            .iter()
            .all(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)));
        for (doc, t) in c.documents.iter().zip(&c.topics) {
            assert_eq!(doc.labels, vec![format!("topic{t}")]);
        }
        assert_eq!(
            (0..2)
                .map(|t| c.topics.iter().filter(|&&x| x == t).count())
                .collect::<Vec<_>>(),
            vec![80, 80]
        );
        assert!(c.lexicon.positive.is_disjoint(&c.lexicon.negative));
        assert_eq!(c.lexicon.positive.len(), 8);
    }

    #[test]
    fn same_topic_documents_share_more_elements() {
        let cfg = SynthConfig {
            cross_share: 0.0,
            ..SynthConfig::default()
        };
        let c = gen_corpus(&cfg).unwrap();
        let tok: Vec<_> = c
            .documents
            .iter()
            .map(|d| tokenize(d, &TokenizerConfig::default()))
            .collect();
        let table = compute_tfidf(&tok, Field::Combined).unwrap();
        let sel = ElementSelector::new(&table, 0.3, RankMode::Corpus).unwrap();
        let elems: Vec<_> = tok.iter().map(|t| sel.extract(t).unwrap()).collect();
        let (mut intra, mut inter, mut ni, mut nx) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..elems.len() {
            for j in i + 1..elems.len() {
                let overlap = elems[i].intersection(&elems[j]).count() as f64;
                if c.topics[i] == c.topics[j] {
                    intra += overlap;
                    ni += 1.0;
                } else {
                    inter += overlap;
                    nx += 1.0;
                }
            }
        }
        assert!(intra / ni > inter / nx);
    }

    #[test]
    fn drift_follows_previous_dominant_topic() {
        let cfg = SynthConfig {
            signal: 0.8,
            drift: 0.01,
            ..SynthConfig::default()
        };
        let c = gen_corpus(&cfg).unwrap();
        let m = gen_market(&cfg, &c).unwrap();
        let dom = c.dominant_topics(2);
        assert_eq!(m.drift[0], 0.0);
        for t in 1..m.drift.len() {
            let expected = match dom[t - 1] {
                Some(0) => 0.008,
                Some(_) => -0.008,
                None => 0.0,
            };
            assert!((m.drift[t] - expected).abs() < 1e-15);
        }
        let flat = gen_market(
            &SynthConfig {
                signal: 0.0,
                ..cfg.clone()
            },
            &c,
        )
        .unwrap();
        assert!(flat.drift.iter().all(|&d| d == 0.0));
        assert_eq!(m.regimes, flat.regimes);
    }

    #[test]
    fn rejects_bad_configs() {
        for cfg in [
            SynthConfig {
                topics: 0,
                ..SynthConfig::default()
            },
            SynthConfig {
                signal: 1.5,
                ..SynthConfig::default()
            },
            SynthConfig {
                topic_share: 0.9,
                cross_share: 0.2,
                ..SynthConfig::default()
            },
            SynthConfig {
                lexicon_size: 50,
                ..SynthConfig::default()
            },
        ] {
            assert!(gen_corpus(&cfg).is_err());
        }
    }

    #[test]
    fn writes_all_files() {
        let cfg = SynthConfig::default();
        let c = gen_corpus(&cfg).unwrap();
        let m = gen_market(&cfg, &c).unwrap();
        let dir = std::env::temp_dir().join(format!("drnews-synth-{}", std::process::id()));
        write_synth(&dir, &c, &m).unwrap();
        for f in [
            CORPUS_FILE,
            TOPICS_FILE,
            POSITIVE_FILE,
            NEGATIVE_FILE,
            RETURNS_FILE,
            REGIMES_FILE,
        ] {
            assert!(dir.join(f).exists(), "{f}");
        }
        let docs = crate::corpus::read_documents(&dir.join(CORPUS_FILE)).unwrap();
        assert_eq!(docs, c.documents);
        std::fs::remove_dir_all(dir).ok();
    }
}
