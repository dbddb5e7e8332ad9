//! Bi-input attention-LSTM classifier.
//!
//! Each day's news vectors are attention-pooled into a daily vector; one
//! LSTM reads the daily vectors of a window and another reads the daily
//! returns. The two final hidden states are concatenated and mapped to
//! class probabilities by a softmax layer. Gradients are derived by hand
//! and training uses Adam.

mod model;
mod samples;
mod train;

pub use model::{loss, softmax, Block, Model, Shapes, PROB_FLOOR};
pub use samples::{
    build_samples, Labeler, NewsItem, Sample, SampleConfig, SampleSet, TradingDay, DOWN, DOWN_THRESHOLD, PRESERVE, UP,
    UP_THRESHOLD,
};
pub use train::{
    argmax, evaluate_loss, export_attention, load_checkpoint, predict, save_checkpoint, train, write_attention_csv,
    AttentionRow, Checkpoint, EpochStats, PredictorConfig, Split, TrainHistory,
};
