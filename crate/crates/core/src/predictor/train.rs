use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{Model, Shapes};
use super::samples::{read_framed, write_framed, SampleSet};
use crate::error::{Error, Result};
use crate::rng::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    pub attention_dim: usize,
    pub news_hidden: usize,
    pub market_hidden: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Carry LSTM state over days without news instead of feeding zeros.
    pub mask_empty_days: bool,
    /// Inverse-frequency class weights in the loss.
    pub class_weights: bool,
    /// Leading share of samples used for training when `train_end` is unset.
    pub train_fraction: f64,
    /// Last target date of the training split.
    pub train_end: Option<NaiveDate>,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            attention_dim: 64,
            news_hidden: 64,
            market_hidden: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            l2: 1e-4,
            batch_size: 32,
            epochs: 50,
            patience: 5,
            seed: 0,
            mask_empty_days: false,
            class_weights: false,
            train_fraction: 0.7,
            train_end: None,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.attention_dim > 0
            && self.news_hidden > 0
            && self.market_hidden > 0
            && self.learning_rate >= 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.l2 >= 0.0
            && self.batch_size > 0
            && self.epochs > 0
            && self.train_fraction > 0.0
            && self.train_fraction <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid predictor config {self:?}")))
        }
    }

    pub fn shapes(&self, set: &SampleSet) -> Shapes {
        Shapes {
            input_dim: set.dim,
            attention_dim: self.attention_dim,
            news_hidden: self.news_hidden,
            market_hidden: self.market_hidden,
            market_dim: set.market_dim,
            classes: set.classes,
        }
    }
}

/// Chronological train / validation / test ranges over sample indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

impl Split {
    /// Training takes the leading samples (by `train_end` date when set,
    /// else by fraction); the remainder is halved into validation then test.
    pub fn chronological(set: &SampleSet, config: &PredictorConfig) -> Self {
        let n = set.samples.len();
        let train_len = match config.train_end {
            Some(end) => set
                .samples
                .iter()
                .take_while(|s| set.days[s.target].date <= end)
                .count(),
            None => ((n as f64) * config.train_fraction).floor() as usize,
        };
        let rest = n - train_len;
        let val_end = train_len + rest / 2;
        Split {
            train: 0..train_len,
            validation: train_len..val_end,
            test: val_end..n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub validation_loss: Option<f64>,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were kept (1-based).
    pub best_epoch: usize,
    pub stopped_early: bool,
    /// Number of log-probabilities clamped at the floor.
    pub clamped: u64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &PredictorConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

fn class_weights(set: &SampleSet, indices: &[usize], enabled: bool) -> Vec<f64> {
    let mut weights = vec![1.0; set.classes];
    if !enabled || indices.is_empty() {
        return weights;
    }
    let mut counts = vec![0usize; set.classes];
    for &i in indices {
        counts[set.samples[i].label] += 1;
    }
    for (w, &c) in weights.iter_mut().zip(&counts) {
        if c > 0 {
            *w = indices.len() as f64 / (set.classes * c) as f64;
        }
    }
    weights
}

/// Mean weighted cross-entropy and accuracy without parameter updates.
pub fn evaluate_loss(model: &Model, set: &SampleSet, indices: &[usize], weights: &[f64]) -> Result<(f64, f64)> {
    if indices.is_empty() {
        return Ok((0.0, 0.0));
    }
    let probs = predict(model, set, indices)?;
    let mut total = 0.0;
    let mut correct = 0;
    for (p, &i) in probs.iter().zip(indices) {
        let label = set.samples[i].label;
        total += -weights[label] * p[label].max(super::model::PROB_FLOOR).ln();
        correct += usize::from(argmax(p) == label);
    }
    let n = indices.len() as f64;
    Ok((total / n, correct as f64 / n))
}

pub fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |best, (i, &v)| if v > best.1 { (i, v) } else { best },
        )
        .0
}

/// Class probabilities for the given samples, computed in parallel and
/// returned in input order.
pub fn predict(model: &Model, set: &SampleSet, indices: &[usize]) -> Result<Vec<Vec<f64>>> {
    indices.par_iter().map(|&i| model.predict(set, i)).collect()
}

/// Mini-batch Adam on `split.train`, early-stopped on validation loss (on
/// training loss when the validation split is empty). Per-sample gradients
/// are computed in parallel and summed in sample order.
pub fn train(set: &SampleSet, split: &Split, config: &PredictorConfig) -> Result<(Model, TrainHistory)> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(Error::Shape("empty training split".into()));
    }
    let mut init_rng = rng_for(config.seed, "predictor:init");
    let mut model = Model::random(config.shapes(set), config.mask_empty_days, &mut init_rng)?;
    let train_idx: Vec<usize> = split.train.clone().collect();
    let val_idx: Vec<usize> = split.validation.clone().collect();
    let weights = class_weights(set, &train_idx, config.class_weights);
    let mut order = train_idx.clone();
    let mut shuffle_rng = rng_for(config.seed, "predictor:shuffle");
    let mut adam = Adam::new(model.params().len());
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut since_best = 0;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let parts: Vec<(f64, bool, Vec<f64>)> = batch
                .par_iter()
                .map(|&i| {
                    let mut grad = vec![0.0; model.params().len()];
                    let label = set.samples[i].label;
                    let days = set.window(i).expect("sample index in range");
                    let (ce, clamped) = model.accumulate(days, label, weights[label], &mut grad);
                    (ce, clamped, grad)
                })
                .collect();
            let scale = 1.0 / batch.len() as f64;
            let mut grad = vec![0.0; model.params().len()];
            for (ce, clamped, g) in &parts {
                epoch_loss += ce;
                history.clamped += u64::from(*clamped);
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            for (g, q) in grad.iter_mut().zip(model.params()) {
                *g = *g * scale + 2.0 * config.l2 * q;
            }
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("non-finite gradient; config {config:?}"),
                });
            }
            adam.step(model.params_mut(), &grad, config);
        }
        let train_loss = epoch_loss / order.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("training loss {train_loss}; config {config:?}"),
            });
        }
        let (_, train_accuracy) = evaluate_loss(&model, set, &train_idx, &weights)?;
        let validation = if val_idx.is_empty() {
            None
        } else {
            Some(evaluate_loss(&model, set, &val_idx, &weights)?)
        };
        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            train_accuracy,
            validation_loss: validation.map(|v| v.0),
            validation_accuracy: validation.map(|v| v.1),
        });
        let monitored = validation.map_or(train_loss, |v| v.0);
        if best.as_ref().is_none_or(|(b, _)| monitored < *b) {
            best = Some((monitored, model.params().to_vec()));
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if config.patience > 0 && since_best >= config.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    if let Some((_, params)) = best {
        model.params_mut().copy_from_slice(&params);
    }
    Ok((model, history))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRow {
    pub date: NaiveDate,
    pub doc_id: String,
    pub alpha: f64,
}

/// Attention weight of every news item on each distinct day covered by
/// the given samples, in day order.
pub fn export_attention(model: &Model, set: &SampleSet, indices: &[usize]) -> Result<Vec<AttentionRow>> {
    let days: BTreeSet<usize> = indices
        .iter()
        .map(|&i| {
            set.samples
                .get(i)
                .map(|s| s.start..s.target)
                .ok_or_else(|| Error::Shape(format!("no sample {i}")))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut rows = Vec::new();
    for t in days {
        let day = &set.days[t];
        if let Some(alpha) = model.window_attention(std::slice::from_ref(day))?.pop().flatten() {
            for (id, a) in day.doc_ids.iter().zip(alpha) {
                rows.push(AttentionRow {
                    date: day.date,
                    doc_id: id.clone(),
                    alpha: a,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_attention_csv<W: Write>(rows: &[AttentionRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "date,doc_id,alpha")?;
    for r in rows {
        writeln!(out, "{},{},{}", r.date, r.doc_id, r.alpha)?;
    }
    out.flush()
}

const MODEL_MAGIC: &[u8; 8] = b"DRNMDL1\n";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub shapes: Shapes,
    pub mask_empty_days: bool,
    pub config: PredictorConfig,
    pub seed: u64,
    pub epoch: usize,
    pub history: TrainHistory,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(model: &Model, config: &PredictorConfig, history: &TrainHistory) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            shapes: *model.shapes(),
            mask_empty_days: model.mask_empty_days(),
            config: config.clone(),
            seed: config.seed,
            epoch: history.best_epoch,
            history: history.clone(),
            metadata: BTreeMap::new(),
        }
    }
}

pub fn save_checkpoint(path: &Path, model: &Model, meta: &Checkpoint) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_framed(std::io::BufWriter::new(file), MODEL_MAGIC, meta, model.params()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, Checkpoint)> {
    let (meta, params): (Checkpoint, Vec<f64>) = read_framed(path, MODEL_MAGIC)?;
    if meta.version != CHECKPOINT_VERSION {
        return Err(Error::parse(
            path.display().to_string(),
            format!("unsupported checkpoint version {}", meta.version),
        ));
    }
    let model = Model::from_params(meta.shapes, meta.mask_empty_days, params)?;
    Ok((model, meta))
}
