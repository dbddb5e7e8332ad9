//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use drnews::corpus::{compute_tfidf, FeatureBag, FeatureConfig, Field, TokenizedDoc};
use drnews::eval::onset_metrics;
use drnews::graph::{AttributedGraph, Node, NodeKind};
use drnews::pipeline::{embed_corpus, EmbedConfig};
use drnews::predictor::{Model, Sample, SampleSet, Shapes, TradingDay};
use drnews::subnode::{infer_unseen, pair_gradient, pair_loss};
use drnews::swarch::{fit_swarch, hamilton_filter, simulate, FitConfig, SwarchParams};
use drnews::synth::{gen_corpus, SynthConfig};
use drnews::walk::{sample_walks, SamplerKind, WalkConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Beta, ChiSquared, ContinuousCDF};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- tf-idf

fn brute_tfidf(docs: &[Vec<String>]) -> Vec<BTreeMap<String, f64>> {
    let n = docs.len() as f64;
    let mut out = Vec::new();
    for doc in docs {
        let mut scores = BTreeMap::new();
        for term in doc {
            if scores.contains_key(term) {
                continue;
            }
            let count = doc.iter().filter(|t| *t == term).count() as f64;
            let mut df = 0.0;
            for other in docs {
                if other.contains(term) {
                    df += 1.0;
                }
            }
            scores.insert(term.clone(), count / doc.len() as f64 * (n / df).ln());
        }
        out.push(scores);
    }
    out
}

fn tfidf_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let mut mismatched_keys = 0;
    for _ in 0..25 {
        let vocab = rng.random_range(3..30);
        let docs: Vec<TokenizedDoc> = (0..20)
            .map(|i| {
                let mut field = |max: usize| -> Vec<String> {
                    let len = rng.random_range(1..max);
                    (0..len).map(|_| format!("w{}", rng.random_range(0..vocab))).collect()
                };
                TokenizedDoc {
                    id: format!("d{i}"),
                    title: field(8),
                    body: field(40),
                    eligible: None,
                }
            })
            .collect();
        for field in [Field::Title, Field::Body, Field::Combined] {
            let table = compute_tfidf(&docs, field).map_err(|e| e.to_string())?;
            let streams: Vec<Vec<String>> = docs
                .iter()
                .map(|d| d.field(field).into_iter().map(String::from).collect())
                .collect();
            for (doc, expected) in docs.iter().zip(brute_tfidf(&streams)) {
                let got = table.doc_scores(&doc.id).ok_or("missing document")?;
                if got.len() != expected.len() {
                    mismatched_keys += 1;
                }
                for (term, want) in &expected {
                    worst = worst.max((table.score(&doc.id, term) - want).abs());
                }
            }
        }
    }
    verdict(
        worst <= 1e-12 && mismatched_keys == 0,
        format!("75 tables over 20 docs, max |diff| = {worst:.2e}"),
    )
}

// ---------------------------------------------------------------- walks

const WALK_EDGES: [(&str, &str, f64); 12] = [
    ("n0", "e0", 1.0),
    ("n0", "e1", 2.0),
    ("n0", "e2", 0.5),
    ("n1", "e1", 1.5),
    ("n1", "e2", 1.0),
    ("n1", "e3", 3.0),
    ("n2", "e0", 1.2),
    ("n2", "e3", 0.7),
    ("n2", "e4", 2.2),
    ("n3", "e1", 0.6),
    ("n3", "e4", 1.0),
    ("n3", "e5", 2.5),
];

fn walk_graph() -> AttributedGraph {
    let mut nodes = Vec::new();
    for i in 0..4 {
        let mut bag = FeatureBag::new();
        bag.insert(format!("month:{}", i + 1));
        nodes.push(Node {
            id: format!("n{i}"),
            kind: NodeKind::News,
            features: bag,
        });
    }
    for j in 0..6 {
        let mut bag = FeatureBag::new();
        bag.insert(format!("elem:e{j}"));
        nodes.push(Node {
            id: format!("e{j}"),
            kind: NodeKind::Element,
            features: bag,
        });
    }
    let edges = WALK_EDGES
        .iter()
        .map(|(a, b, w)| (a.to_string(), b.to_string(), *w))
        .collect();
    AttributedGraph::from_parts(nodes, edges, BTreeMap::new()).unwrap()
}

/// Next-step probabilities from the edge list alone.
fn biased_step(prev: Option<&str>, cur: &str, p: f64, q: f64) -> BTreeMap<String, f64> {
    let neighbours = |v: &str| -> Vec<(String, f64)> {
        WALK_EDGES
            .iter()
            .filter_map(|(a, b, w)| match (*a == v, *b == v) {
                (true, _) => Some((b.to_string(), *w)),
                (_, true) => Some((a.to_string(), *w)),
                _ => None,
            })
            .collect()
    };
    let mut mass = BTreeMap::new();
    for (x, w) in neighbours(cur) {
        let bias = match prev {
            None => 1.0,
            Some(t) if x == t => 1.0 / p,
            Some(t) if neighbours(t).iter().any(|(y, _)| *y == x) => 1.0,
            Some(_) => 1.0 / q,
        };
        mass.insert(x, bias * w);
    }
    let z: f64 = mass.values().sum();
    mass.values_mut().for_each(|m| *m /= z);
    mass
}

fn walk_chi_square() -> Outcome {
    let start = Instant::now();
    let g = walk_graph();
    let mut lines = Vec::new();
    let mut ok = true;
    for (p, q) in [(1.0, 1.0), (4.0, 1.0), (1.0, 4.0)] {
        for sampler in [SamplerKind::Cumulative, SamplerKind::Alias] {
            let cfg = WalkConfig {
                length: 101,
                walks_per_node: 100,
                p,
                q,
                seed: 5,
                sampler,
            };
            let walks = sample_walks(&g, &cfg).map_err(|e| e.to_string())?;
            let mut counts: BTreeMap<(Option<String>, String), BTreeMap<String, f64>> = BTreeMap::new();
            let mut steps = 0usize;
            for walk in &walks {
                let ids: Vec<&str> = walk.iter().map(|&i| g.node(i).id.as_str()).collect();
                for i in 1..ids.len() {
                    let prev = (i >= 2).then(|| ids[i - 2].to_string());
                    *counts
                        .entry((prev, ids[i - 1].to_string()))
                        .or_default()
                        .entry(ids[i].to_string())
                        .or_default() += 1.0;
                    steps += 1;
                }
            }
            let (mut stat, mut df, mut used) = (0.0, 0usize, 0usize);
            for ((prev, cur), observed) in &counts {
                let probs = biased_step(prev.as_deref(), cur, p, q);
                let visits: f64 = observed.values().sum();
                if probs.len() < 2 || probs.values().any(|pr| pr * visits < 5.0) {
                    continue;
                }
                used += 1;
                df += probs.len() - 1;
                for (x, pr) in &probs {
                    let o = observed.get(x).copied().unwrap_or(0.0);
                    let e = pr * visits;
                    stat += (o - e) * (o - e) / e;
                }
                if observed.keys().any(|x| !probs.contains_key(x)) {
                    ok = false;
                }
            }
            let critical = ChiSquared::new(df as f64).unwrap().inverse_cdf(0.999);
            let pass = steps >= 100_000 && stat <= critical && used > 10;
            ok &= pass;
            lines.push(format!(
                "(p={p},q={q},{sampler:?}) chi2={stat:.1}/{critical:.1} df={df}"
            ));
        }
    }
    let elapsed = start.elapsed();
    verdict(
        ok && elapsed < Duration::from_secs(10),
        format!("{} in {:.2}s", lines.join("; "), elapsed.as_secs_f64()),
    )
}

// ---------------------------------------------------------------- subnode

fn subnode_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (d, bag, m) = (8, 3, 5);
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        // layout: bag feature vectors, then the positive, then the negatives
        let mut theta: Vec<f64> = (0..(bag + 1 + m) * d).map(|_| rng.random_range(-0.8..0.8)).collect();
        let loss = |t: &[f64]| {
            let mut h = vec![0.0; d];
            for g in 0..bag {
                for k in 0..d {
                    h[k] += t[g * d + k];
                }
            }
            let pos = &t[bag * d..(bag + 1) * d];
            let negs: Vec<&[f64]> = (0..m).map(|j| &t[(bag + 1 + j) * d..(bag + 2 + j) * d]).collect();
            (h, pos.to_vec(), negs.iter().map(|n| n.to_vec()).collect::<Vec<_>>())
        };
        let (h, pos, negs) = loss(&theta);
        let neg_refs: Vec<&[f64]> = negs.iter().map(Vec::as_slice).collect();
        let (value, grad) = pair_gradient(&h, &pos, &neg_refs);
        if (value - pair_loss(&h, &pos, &neg_refs)).abs() > 1e-12 {
            return Err("pair_gradient and pair_loss disagree on the loss".into());
        }
        let mut analytic = Vec::new();
        for _ in 0..bag {
            analytic.extend_from_slice(&grad.h);
        }
        analytic.extend_from_slice(&grad.positive);
        for n in &grad.negatives {
            analytic.extend_from_slice(n);
        }
        let eval = |t: &[f64]| {
            let (h, pos, negs) = loss(t);
            let refs: Vec<&[f64]> = negs.iter().map(Vec::as_slice).collect();
            pair_loss(&h, &pos, &refs)
        };
        let mut numeric = vec![0.0; theta.len()];
        for i in 0..theta.len() {
            let x = theta[i];
            theta[i] = x + eps;
            let up = eval(&theta);
            theta[i] = x - eps;
            let down = eval(&theta);
            theta[i] = x;
            numeric[i] = (up - down) / (2.0 * eps);
        }
        let diff: f64 = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        worst = worst.max(diff / norm(&analytic).max(norm(&numeric)));
    }
    verdict(worst <= 1e-6, format!("10 points, max relative error {worst:.2e}"))
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

struct Quality {
    rate: f64,
    /// Held-out (vector, bag) pairs for the additivity check.
    unseen: Vec<(Vec<f64>, Vec<Vec<f64>>)>,
}

fn nearest_centroid_rate(features: FeatureConfig) -> Result<Quality, String> {
    let synth = SynthConfig::default();
    let corpus = gen_corpus(&synth).map_err(|e| e.to_string())?;
    let (train, held) = corpus.documents.split_at(120);
    let mut cfg = EmbedConfig {
        features,
        ..EmbedConfig::default()
    };
    cfg.elements.quantile = 0.2;
    cfg.walk.length = 40;
    cfg.walk.walks_per_node = 10;
    cfg.train.dim = 64;
    cfg.train.window = 5;
    cfg.train.epochs = 5;
    let run = embed_corpus(train, Some(corpus.lexicon.clone()), &cfg).map_err(|e| e.to_string())?;
    let topic: HashMap<&str, usize> = corpus
        .documents
        .iter()
        .map(|d| d.id.as_str())
        .zip(corpus.topics.iter().copied())
        .collect();
    let mut centroids = vec![vec![0.0; cfg.train.dim]; synth.topics];
    let mut sizes = vec![0.0; synth.topics];
    for (id, v, _) in &run.vectors {
        let t = topic[id.as_str()];
        sizes[t] += 1.0;
        centroids[t].iter_mut().zip(v).for_each(|(c, x)| *c += x);
    }
    for (c, n) in centroids.iter_mut().zip(&sizes) {
        c.iter_mut().for_each(|x| *x /= n);
    }
    let mut hits = 0;
    let mut unseen = Vec::new();
    for doc in held {
        let Ok((v, _)) = infer_unseen(doc, &run.model.features, &run.featurizer) else {
            continue;
        };
        let own = topic[doc.id.as_str()];
        let best = (0..synth.topics)
            .max_by(|&a, &b| cosine(&v, &centroids[a]).total_cmp(&cosine(&v, &centroids[b])))
            .unwrap();
        if best == own {
            hits += 1;
        }
        let bag = run.featurizer.bag(doc).map_err(|e| e.to_string())?;
        let parts = bag
            .iter()
            .filter_map(|f| run.model.features.get(f))
            .map(<[f64]>::to_vec)
            .collect();
        unseen.push((v, parts));
    }
    Ok(Quality {
        rate: hits as f64 / held.len() as f64,
        unseen,
    })
}

fn with_topic_label(base: FeatureConfig) -> FeatureConfig {
    FeatureConfig { labels: true, ..base }
}

fn embedding_quality() -> Outcome {
    let start = Instant::now();
    let plus = nearest_centroid_rate(with_topic_label(FeatureConfig::semantic_only()))?;
    let minus = nearest_centroid_rate(FeatureConfig::semantic_only())?;
    let elapsed = start.elapsed();
    verdict(
        plus.rate >= 0.9 && plus.rate > minus.rate && elapsed < Duration::from_secs(60),
        format!(
            "with topic label {:.3}, semantic only {:.3}, {:.1}s",
            plus.rate,
            minus.rate,
            elapsed.as_secs_f64()
        ),
    )
}

fn unseen_additivity() -> Outcome {
    let q = nearest_centroid_rate(with_topic_label(FeatureConfig::default()))?;
    let mut mismatches = 0;
    for (v, parts) in &q.unseen {
        let mut sum = vec![0.0; v.len()];
        for part in parts {
            sum.iter_mut().zip(part).for_each(|(s, x)| *s += x);
        }
        let same = sum.iter().zip(v).all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            mismatches += 1;
        }
    }
    verdict(
        mismatches == 0 && !q.unseen.is_empty(),
        format!("{} held-out documents, {mismatches} bitwise mismatches", q.unseen.len()),
    )
}

// ---------------------------------------------------------------- swarch

fn enumerate_paths(y: &[f64], p: &SwarchParams) -> (Vec<f64>, f64) {
    let gamma = [1.0, p.gamma_high];
    let trans = [[p.p11, 1.0 - p.p11], [1.0 - p.p22, p.p22]];
    let high = (1.0 - p.p11) / (2.0 - p.p11 - p.p22);
    let pi = [1.0 - high, high];
    let resid = |t: usize| y[t] - p.mean - p.ar * y[t - 1];
    let normal = |e: f64, v: f64| (-e * e / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
    let mut marginals = vec![high, high];
    let mut likelihood = 1.0;
    for t in 2..y.len() {
        // paths over the regimes of days 1..=t
        let (mut total, mut in_high) = (0.0, 0.0);
        for path in 0u64..(1 << t) {
            let s = |day: usize| ((path >> (day - 1)) & 1) as usize;
            let mut w = pi[s(1)];
            for day in 2..=t {
                let var = gamma[s(day)] * (p.alpha0 + p.alpha1 * resid(day - 1).powi(2) / gamma[s(day - 1)]);
                w *= trans[s(day - 1)][s(day)] * normal(resid(day), var);
            }
            total += w;
            if s(t) == 1 {
                in_high += w;
            }
        }
        marginals.push(in_high / total);
        likelihood = total;
    }
    (marginals, likelihood.ln())
}

fn swarch_filter_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (mut worst_p, mut worst_ll, mut worst_sum): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..6 {
        let params = SwarchParams {
            mean: rng.random_range(-0.002..0.002),
            ar: rng.random_range(-0.3..0.3),
            alpha0: rng.random_range(5e-5..5e-4),
            alpha1: rng.random_range(0.0..0.6),
            gamma_high: rng.random_range(1.5..8.0),
            p11: rng.random_range(0.6..0.99),
            p22: rng.random_range(0.6..0.99),
        };
        for t in [3, 7, 12] {
            let (y, _) = simulate(&params, t, None, &mut rng);
            let out = hamilton_filter(&y, &params).map_err(|e| e.to_string())?;
            let (marginals, ll) = enumerate_paths(&y, &params);
            for (a, b) in out.regimes.prob_high.iter().zip(&marginals) {
                worst_p = worst_p.max((a - b).abs());
            }
            worst_ll = worst_ll.max((out.log_likelihood - ll).abs());
            for f in &out.filtered {
                worst_sum = worst_sum.max((f[0] + f[1] - 1.0).abs());
            }
        }
    }
    verdict(
        worst_p <= 1e-8 && worst_ll <= 1e-8 && worst_sum <= 1e-12,
        format!("max |dp| {worst_p:.2e}, max |dll| {worst_ll:.2e}, max |sum-1| {worst_sum:.2e}"),
    )
}

fn swarch_recovery() -> Outcome {
    let start = Instant::now();
    let truth = SynthConfig::default().market;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (y, regimes) = simulate(&truth, 2000, None, &mut rng);
    let fit = fit_swarch(&y, None, &FitConfig::default()).map_err(|e| e.to_string())?;
    let gamma = fit.params.gamma_high;
    let rel = (gamma - truth.gamma_high).abs() / truth.gamma_high;
    let filtered = hamilton_filter(&y, &fit.params).map_err(|e| e.to_string())?;
    let mean_prob = |state: u8| {
        let picked: Vec<f64> = filtered
            .regimes
            .prob_high
            .iter()
            .zip(&regimes)
            .filter(|(_, s)| **s == state)
            .map(|(p, _)| *p)
            .collect();
        picked.iter().sum::<f64>() / picked.len() as f64
    };
    let (on_high, on_low) = (mean_prob(1), mean_prob(0));
    let elapsed = start.elapsed();
    verdict(
        rel <= 0.25 && gamma > 1.0 && on_high > on_low && elapsed < Duration::from_secs(60),
        format!(
            "gamma {gamma:.3} vs {} (rel {rel:.3}), P(high) on high days {on_high:.2} vs low days {on_low:.2}, {:.1}s",
            truth.gamma_high,
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- predictor

fn tiny_set(rng: &mut ChaCha8Rng, empty_middle_day: bool) -> SampleSet {
    let date = NaiveDate::from_ymd_opt(2021, 6, 1).unwrap();
    let days = (0..3)
        .map(|i| {
            let n = if empty_middle_day && i == 1 { 0 } else { i + 1 };
            TradingDay {
                date: date + chrono::Duration::days(i as i64),
                doc_ids: (0..n).map(|k| format!("d{i}{k}")).collect(),
                news: (0..n * 4).map(|_| rng.random_range(-1.0..1.0)).collect(),
                market: vec![rng.random_range(-1.0..1.0)],
                ret: 0.0,
            }
        })
        .collect();
    SampleSet {
        dim: 4,
        market_dim: 1,
        window: 2,
        classes: 3,
        labeler: "movement".into(),
        days,
        samples: vec![Sample {
            start: 0,
            target: 2,
            label: 2,
        }],
        metadata: BTreeMap::new(),
    }
}

fn predictor_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let shapes = Shapes {
        input_dim: 4,
        attention_dim: 3,
        news_hidden: 3,
        market_hidden: 3,
        market_dim: 1,
        classes: 3,
    };
    let eps = 1e-5;
    let l2 = 1e-3;
    let mut worst: (f64, String) = (0.0, String::new());
    let mut blocks_checked = 0;
    for masked in [false, true] {
        let set = tiny_set(&mut rng, masked);
        let mut model = Model::random(shapes, masked, &mut rng).map_err(|e| e.to_string())?;
        for v in model.params_mut() {
            *v = rng.random_range(-0.7..0.7);
        }
        let (_, analytic) = model.loss_and_gradient(&set, 0, l2).map_err(|e| e.to_string())?;
        for block in model.blocks() {
            let mut diff = 0.0;
            let mut norm_a = 0.0;
            let mut norm_n = 0.0;
            for i in block.range.clone() {
                let x = model.params()[i];
                model.params_mut()[i] = x + eps;
                let up = model.loss_and_gradient(&set, 0, l2).unwrap().0;
                model.params_mut()[i] = x - eps;
                let down = model.loss_and_gradient(&set, 0, l2).unwrap().0;
                model.params_mut()[i] = x;
                let numeric = (up - down) / (2.0 * eps);
                diff += (analytic[i] - numeric).powi(2);
                norm_a += analytic[i].powi(2);
                norm_n += numeric * numeric;
            }
            let rel = diff.sqrt() / f64::max(norm_a, norm_n).sqrt().max(1e-8);
            blocks_checked += 1;
            if rel >= worst.0 {
                worst = (rel, block.name.clone());
            }
        }
    }
    verdict(
        worst.0 <= 1e-4,
        format!(
            "{blocks_checked} blocks, worst relative error {:.2e} ({})",
            worst.0, worst.1
        ),
    )
}

// ---------------------------------------------------------------- end to end

fn signal_config(signal: f64) -> String {
    format!(
        r#"seed = 1
[paths]
artifacts = "art"
[elements]
quantile = 0.2
[walk]
length = 20
walks_per_node = 4
[train]
dim = 16
window = 5
epochs = 3
[synth]
docs_per_topic = 3000
signal = {signal:?}
[samples]
window = 5
labeler = "direction"
[predictor]
attention_dim = 8
news_hidden = 8
market_hidden = 8
epochs = 40
patience = 8
learning_rate = 0.002
"#
    )
}

/// Clopper–Pearson interval at 95%.
fn binomial_interval(hits: f64, n: f64) -> (f64, f64) {
    let lo = if hits == 0.0 {
        0.0
    } else {
        Beta::new(hits, n - hits + 1.0).unwrap().inverse_cdf(0.025)
    };
    let hi = if hits == n {
        1.0
    } else {
        Beta::new(hits + 1.0, n - hits).unwrap().inverse_cdf(0.975)
    };
    (lo, hi)
}

fn test_accuracy(dir: &Path) -> Result<(f64, f64), String> {
    let text = std::fs::read_to_string(dir.join("art/metrics.json")).map_err(|e| e.to_string())?;
    let json: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let acc = json["accuracy"].as_f64().ok_or("no accuracy")?;
    let n = json["samples"].as_f64().ok_or("no sample count")?;
    Ok((acc, n))
}

fn end_to_end_signal() -> Outcome {
    let start = Instant::now();
    let mut report = Vec::new();
    let mut ok = true;
    for (signal, expect_signal) in [(0.8, true), (0.0, false)] {
        let dir = common::scratch(&format!("signal-{signal}"));
        std::fs::write(dir.join("pipeline.toml"), signal_config(signal)).unwrap();
        for name in common::PIPELINE {
            common::stage(&dir, "pipeline.toml", name, &[]);
        }
        let (acc, n) = test_accuracy(&dir)?;
        let (lo, hi) = binomial_interval((acc * n).round(), n);
        ok &= if expect_signal {
            lo > 0.5
        } else {
            lo <= 0.5 && 0.5 <= hi
        };
        report.push(format!(
            "rho={signal}: acc {acc:.3} on {n} days, 95% CI [{lo:.3}, {hi:.3}]"
        ));
    }
    let elapsed = start.elapsed();
    verdict(
        ok && elapsed < Duration::from_secs(300),
        format!("{}; {:.1}s", report.join("; "), elapsed.as_secs_f64()),
    )
}

// ---------------------------------------------------------------- onsets

fn onset_example() -> Outcome {
    let truth = [0, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 1, 1, 0];
    let predicted = [0, 0, 0, 1, 0, 1, 0, 0, 0, 1, 0, 0, 1, 0, 0];
    let report = onset_metrics(&truth, &predicted, None, 5).map_err(|e| e.to_string())?;
    let avg = report.avg_days_ahead.unwrap_or(f64::NAN);
    let pct = report.percent_forewarned.unwrap_or(f64::NAN);
    verdict(
        report.total_onsets == 2
            && report.forewarned_onsets == 2
            && (avg - 2.5).abs() < 1e-12
            && (pct - 100.0).abs() < 1e-12,
        format!(
            "{} of {} onsets forewarned ({pct}%), avg {avg} days ahead",
            report.forewarned_onsets, report.total_onsets
        ),
    )
}

// ---------------------------------------------------------------- determinism

const DETERMINISM_CONFIG: &str = r#"seed = 4
[paths]
artifacts = "art"
[elements]
quantile = 0.2
[walk]
length = 20
walks_per_node = 3
[train]
dim = 16
window = 4
epochs = 2
[synth]
docs_per_topic = 150
signal = 0.5
[swarch]
starts = 2
[samples]
window = 5
labeler = "crisis"
[predictor]
attention_dim = 6
news_hidden = 6
market_hidden = 6
epochs = 4
"#;

fn full_run(dir: &Path) {
    std::fs::write(dir.join("pipeline.toml"), DETERMINISM_CONFIG).unwrap();
    let stages: [(&str, &[&str]); 13] = [
        ("synth", &[]),
        ("tfidf", &[]),
        ("graph", &[]),
        ("walk", &[]),
        ("train-embed", &[]),
        ("embed", &[]),
        ("infer", &["--input", "art/corpus.jsonl"]),
        ("fit-swarch", &[]),
        ("label", &[]),
        ("build-samples", &[]),
        ("train-predict", &[]),
        ("evaluate", &[]),
        ("attention-export", &[]),
    ];
    for (name, extra) in stages {
        common::stage(dir, "pipeline.toml", name, extra);
    }
}

fn artifact_files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                if path.file_name().is_some_and(|n| n != "manifests") {
                    stack.push(path);
                }
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let a = common::scratch("determinism-a");
    let b = common::scratch("determinism-b");
    full_run(&a);
    full_run(&b);
    let fa = artifact_files(&a.join("art"));
    let fb = artifact_files(&b.join("art"));
    let differing: Vec<&String> = fa.keys().filter(|k| fa.get(*k) != fb.get(*k)).collect();
    verdict(
        fa.len() >= 20 && fa.keys().eq(fb.keys()) && differing.is_empty(),
        format!("{} artifacts compared, differing: {differing:?}", fa.len()),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("tf-idf matches brute force", tfidf_oracle),
        ("walk transitions pass chi-square", walk_chi_square),
        ("subnode gradients match finite differences", subnode_gradients),
        ("embedding quality on two-topic corpus", embedding_quality),
        ("unseen news vectors are exact sums", unseen_additivity),
        ("regime filter matches path enumeration", swarch_filter_oracle),
        ("regime model recovery", swarch_recovery),
        ("predictor gradients match finite differences", predictor_gradients),
        ("end-to-end signal detection", end_to_end_signal),
        ("onset forewarning example", onset_example),
        ("pipeline reruns are byte-identical", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
