use std::cell::Cell;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::objective::{log_sigmoid, sigmoid};
use super::{Decomposition, EmbeddingTable};
use crate::error::{Error, Result};
use crate::rng::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dim: usize,
    /// Context positions on each side of the center.
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// The rate decays linearly from `learning_rate` to this value.
    pub min_learning_rate: f64,
    /// Noise distribution is node frequency raised to this power.
    pub noise_exponent: f64,
    pub seed: u64,
    /// Also use element nodes as centers.
    pub symmetric: bool,
    /// Scale each feature's gradient by `1 / |bag|`.
    pub normalize_gradient: bool,
    /// Lock-free concurrent updates across rayon threads. Not reproducible.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 128,
            window: 10,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_learning_rate: 1e-4,
            noise_exponent: 1.0,
            seed: 0,
            symmetric: false,
            normalize_gradient: false,
            parallel: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.dim == 0 || self.window == 0 || self.epochs == 0 {
            return bad(format!(
                "dim, window and epochs must be >= 1 (got {}, {}, {})",
                self.dim, self.window, self.epochs
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.min_learning_rate >= 0.0 && self.min_learning_rate <= self.learning_rate) {
            return bad(format!(
                "min_learning_rate must lie in [0, learning_rate], got {}",
                self.min_learning_rate
            ));
        }
        if !(self.noise_exponent >= 0.0 && self.noise_exponent.is_finite()) {
            return bad(format!("noise_exponent must be >= 0, got {}", self.noise_exponent));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubnodeModel {
    /// Input vectors, one per feature.
    pub features: EmbeddingTable,
    /// Output (context) vectors, one per graph node.
    pub contexts: EmbeddingTable,
    /// Mean pair loss per epoch.
    pub epoch_loss: Vec<f64>,
}

trait Store {
    fn get(&self, i: usize) -> f64;
    fn add(&self, i: usize, delta: f64);
}

impl Store for [Cell<f64>] {
    #[inline]
    fn get(&self, i: usize) -> f64 {
        self[i].get()
    }

    #[inline]
    fn add(&self, i: usize, delta: f64) {
        self[i].set(self[i].get() + delta);
    }
}

/// Racy read-add-write; lost updates are tolerated.
impl Store for [AtomicU64] {
    #[inline]
    fn get(&self, i: usize) -> f64 {
        f64::from_bits(self[i].load(Ordering::Relaxed))
    }

    #[inline]
    fn add(&self, i: usize, delta: f64) {
        let v = f64::from_bits(self[i].load(Ordering::Relaxed)) + delta;
        self[i].store(v.to_bits(), Ordering::Relaxed);
    }
}

struct NoiseTable {
    cumulative: Vec<f64>,
}

impl NoiseTable {
    fn new(dec: &Decomposition, exponent: f64) -> Self {
        let mut counts = vec![0usize; dec.nodes.len()];
        for seq in &dec.sequences {
            for &n in seq {
                counts[n] += 1;
            }
        }
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                if c > 0 {
                    acc += (c as f64).powf(exponent);
                }
                acc
            })
            .collect();
        NoiseTable { cumulative }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().unwrap_or(&0.0);
        let u = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

struct Trainer<'a> {
    dec: &'a Decomposition,
    cfg: &'a TrainConfig,
    noise: NoiseTable,
    total_centers: usize,
    progress: AtomicUsize,
}

struct ChunkStats {
    loss: f64,
    pairs: usize,
}

impl Trainer<'_> {
    fn is_center(&self, node: usize) -> bool {
        self.cfg.symmetric || self.dec.is_news[node]
    }

    fn learning_rate(&self) -> f64 {
        let done = self.progress.fetch_add(1, Ordering::Relaxed) as f64;
        let frac = (done / self.total_centers.max(1) as f64).min(1.0);
        self.cfg.learning_rate - (self.cfg.learning_rate - self.cfg.min_learning_rate) * frac
    }

    fn run<S: Store + ?Sized, R: Rng>(
        &self,
        feats: &S,
        outs: &S,
        sequences: &[Vec<usize>],
        rng: &mut R,
        epoch: usize,
    ) -> Result<ChunkStats> {
        let d = self.cfg.dim;
        let mut h = vec![0.0; d];
        let mut grad_h = vec![0.0; d];
        let mut targets: Vec<(usize, f64)> = Vec::with_capacity(self.cfg.negatives + 1);
        let mut stats = ChunkStats { loss: 0.0, pairs: 0 };
        for seq in sequences {
            for (s, &center) in seq.iter().enumerate() {
                if !self.is_center(center) {
                    continue;
                }
                let lr = self.learning_rate();
                let bag = &self.dec.bags[center];
                h.fill(0.0);
                for &g in bag {
                    for (k, hk) in h.iter_mut().enumerate() {
                        *hk += feats.get(g * d + k);
                    }
                }
                let coef = if self.cfg.normalize_gradient {
                    1.0 / bag.len() as f64
                } else {
                    1.0
                };
                let lo = s.saturating_sub(self.cfg.window);
                let hi = (s + self.cfg.window).min(seq.len() - 1);
                for (j, &u) in seq.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == s {
                        continue;
                    }
                    targets.clear();
                    targets.push((u, 1.0));
                    for _ in 0..self.cfg.negatives {
                        if let Some(neg) = (0..10).map(|_| self.noise.sample(rng)).find(|&n| n != u) {
                            targets.push((neg, 0.0));
                        }
                    }
                    grad_h.fill(0.0);
                    let mut pair_loss = 0.0;
                    for &(t, label) in &targets {
                        let base = t * d;
                        let f: f64 = h.iter().enumerate().map(|(k, hk)| hk * outs.get(base + k)).sum();
                        pair_loss -= if label > 0.0 { log_sigmoid(f) } else { log_sigmoid(-f) };
                        let g = sigmoid(f) - label;
                        for (k, hk) in h.iter().enumerate() {
                            grad_h[k] += g * outs.get(base + k);
                            outs.add(base + k, -lr * g * hk);
                        }
                    }
                    if !pair_loss.is_finite() {
                        return Err(Error::NonFinite {
                            stage: "subnode training",
                            detail: format!(
                                "epoch {epoch}, center `{}` at position {s}, context `{}`, lr {lr}, loss {pair_loss}",
                                self.dec.nodes[center], self.dec.nodes[u]
                            ),
                        });
                    }
                    stats.loss += pair_loss;
                    stats.pairs += 1;
                    let step = lr * coef;
                    for &g in bag {
                        for (k, gk) in grad_h.iter().enumerate() {
                            feats.add(g * d + k, -step * gk);
                        }
                    }
                    let shift = step * bag.len() as f64;
                    for (hk, gk) in h.iter_mut().zip(&grad_h) {
                        *hk -= shift * gk;
                    }
                }
            }
        }
        Ok(stats)
    }
}

fn check_finite(values: &[f64], names: &[String], dim: usize, what: &'static str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(pos) => Err(Error::NonFinite {
            stage: what,
            detail: format!("`{}` component {}", names[pos / dim], pos % dim),
        }),
        None => Ok(()),
    }
}

/// Skip-gram with negative sampling over the decomposed walks. For every
/// center position and every context within the window, one positive and
/// `negatives` noise updates are applied to the summed center vector and
/// the gradient is passed unchanged to every feature in the bag.
pub fn train(dec: &Decomposition, cfg: &TrainConfig) -> Result<SubnodeModel> {
    cfg.validate()?;
    let d = cfg.dim;
    let mut init_rng = rng_for(cfg.seed, "subnode:init");
    let half = 0.5 / d as f64;
    let init: Vec<f64> = (0..dec.features.len() * d)
        .map(|_| init_rng.random_range(-half..half))
        .collect();

    let centers_per_epoch: usize = dec
        .sequences
        .iter()
        .map(|seq| seq.iter().filter(|&&n| cfg.symmetric || dec.is_news[n]).count())
        .sum();
    let trainer = Trainer {
        dec,
        cfg,
        noise: NoiseTable::new(dec, cfg.noise_exponent),
        total_centers: centers_per_epoch * cfg.epochs,
        progress: AtomicUsize::new(0),
    };
    let n_out = dec.nodes.len() * d;
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);

    let (features, outputs) = if cfg.parallel {
        let feats: Vec<AtomicU64> = init.iter().map(|v| AtomicU64::new(v.to_bits())).collect();
        let outs: Vec<AtomicU64> = (0..n_out).map(|_| AtomicU64::new(0f64.to_bits())).collect();
        let threads = rayon::current_num_threads().max(1);
        let chunk = dec.sequences.len().div_ceil(threads).max(1);
        for epoch in 0..cfg.epochs {
            let stats: Vec<ChunkStats> = dec
                .sequences
                .par_chunks(chunk)
                .enumerate()
                .map(|(c, seqs)| {
                    let mut rng = rng_for(cfg.seed, &format!("subnode:{epoch}:{c}"));
                    trainer.run(feats.as_slice(), outs.as_slice(), seqs, &mut rng, epoch)
                })
                .collect::<Result<_>>()?;
            let (loss, pairs) = stats.iter().fold((0.0, 0), |(l, p), s| (l + s.loss, p + s.pairs));
            epoch_loss.push(loss / pairs.max(1) as f64);
        }
        let unwrap = |v: Vec<AtomicU64>| {
            v.into_iter()
                .map(|a| f64::from_bits(a.into_inner()))
                .collect::<Vec<_>>()
        };
        (unwrap(feats), unwrap(outs))
    } else {
        let feats: Vec<Cell<f64>> = init.into_iter().map(Cell::new).collect();
        let outs: Vec<Cell<f64>> = (0..n_out).map(|_| Cell::new(0.0)).collect();
        let mut rng = rng_for(cfg.seed, "subnode:sgd");
        for epoch in 0..cfg.epochs {
            let stats = trainer.run(feats.as_slice(), outs.as_slice(), &dec.sequences, &mut rng, epoch)?;
            epoch_loss.push(stats.loss / stats.pairs.max(1) as f64);
        }
        let unwrap = |v: Vec<Cell<f64>>| v.into_iter().map(Cell::into_inner).collect::<Vec<_>>();
        (unwrap(feats), unwrap(outs))
    };
    check_finite(&features, &dec.features, d, "subnode feature vectors")?;
    check_finite(&outputs, &dec.nodes, d, "subnode context vectors")?;
    Ok(SubnodeModel {
        features: EmbeddingTable::new(dec.features.clone(), d, features)?,
        contexts: EmbeddingTable::new(dec.nodes.clone(), d, outputs)?,
        epoch_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two news nodes sharing elements; one walk alternating between them.
    fn tiny() -> Decomposition {
        Decomposition {
            features: vec!["elem:a".into(), "elem:b".into(), "month:1".into()],
            nodes: vec!["elem:a".into(), "elem:b".into(), "k1".into(), "k2".into()],
            is_news: vec![false, false, true, true],
            bags: vec![vec![0], vec![1], vec![0, 2], vec![1, 2]],
            sequences: vec![vec![2, 0, 3, 1, 2, 1, 3, 0]],
        }
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = TrainConfig {
            dim: 0,
            ..TrainConfig::default()
        };
        assert!(train(&tiny(), &cfg).is_err());
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let cfg = TrainConfig {
            dim: 8,
            window: 2,
            epochs: 3,
            seed: 9,
            ..TrainConfig::default()
        };
        let a = train(&tiny(), &cfg).unwrap();
        let b = train(&tiny(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.epoch_loss.len(), 3);
    }

    #[test]
    fn zero_negatives_only_touch_contexts_in_the_window() {
        let cfg = TrainConfig {
            dim: 4,
            window: 1,
            negatives: 0,
            epochs: 1,
            ..TrainConfig::default()
        };
        let dec = Decomposition {
            sequences: vec![vec![2, 0]],
            ..tiny()
        };
        let m = train(&dec, &cfg).unwrap();
        // only elem:a (node 0) was a positive context; other output rows stay zero
        assert!(m.contexts.get("elem:a").unwrap().iter().any(|v| *v != 0.0));
        for other in ["elem:b", "k1", "k2"] {
            assert!(m.contexts.get(other).unwrap().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn parallel_mode_runs() {
        let cfg = TrainConfig {
            dim: 8,
            window: 2,
            epochs: 2,
            parallel: true,
            ..TrainConfig::default()
        };
        let m = train(&tiny(), &cfg).unwrap();
        assert!(m.epoch_loss.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn noise_table_skips_unused_nodes() {
        use rand::SeedableRng;
        let dec = Decomposition {
            sequences: vec![vec![2, 0, 2]],
            ..tiny()
        };
        let table = NoiseTable::new(&dec, 1.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let draws: Vec<usize> = (0..1000).map(|_| table.sample(&mut rng)).collect();
        assert!(draws.iter().all(|&n| n == 0 || n == 2));
        let twos = draws.iter().filter(|&&n| n == 2).count();
        assert!((550..780).contains(&twos));
    }
}
