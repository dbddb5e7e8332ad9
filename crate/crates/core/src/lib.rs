//! Distributed news representations for market prediction.
//!
//! The pipeline runs in stages:
//!
//! 1. [`corpus`]: tokenize articles, score terms by tf-idf, pick element
//!    terms and build per-article feature bags.
//! 2. [`graph`]: connect articles to their elements in a weighted bipartite
//!    network and peel off sparse nodes.
//! 3. [`walk`]: sample second-order biased random walks.
//! 4. [`subnode`]: train feature vectors with a skip-gram objective in which
//!    every article is the sum of its feature vectors.
//! 5. [`swarch`]: label crisis days with a two-regime switching ARCH filter.
//! 6. [`predictor`]: an attention-pooled LSTM over daily news plus an LSTM
//!    over returns, trained with Adam.
//! 7. [`eval`]: accuracy, MCC and crisis-onset forewarning.
//!
//! [`pipeline`] chains stages 1 to 4 in memory. [`synth`] generates corpora
//! and market series with known structure.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod graph;
pub mod pipeline;
pub mod predictor;
pub mod rng;
pub mod subnode;
pub mod swarch;
pub mod synth;
pub mod walk;

pub use error::{Error, Result};
