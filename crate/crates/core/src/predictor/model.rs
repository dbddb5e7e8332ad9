//! Attention pooling, the two LSTM encoders, the softmax output layer and
//! their hand-derived gradients over a flat parameter vector.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::samples::{SampleSet, TradingDay};
use crate::error::{Error, Result};

/// Probabilities below this are clamped inside the log-loss.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shapes {
    /// News vector dimension `d`.
    pub input_dim: usize,
    pub attention_dim: usize,
    pub news_hidden: usize,
    pub market_hidden: usize,
    /// Per-day market input length (1 + lags).
    pub market_dim: usize,
    pub classes: usize,
}

impl Shapes {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            self.input_dim,
            self.attention_dim,
            self.news_hidden,
            self.market_hidden,
            self.market_dim,
        ];
        if sizes.contains(&0) || self.classes < 2 {
            return Err(Error::InvalidConfig(format!("invalid model shapes {self:?}")));
        }
        Ok(())
    }
}

/// Gate order inside an LSTM block: candidate, update, forget, output.
const GATES: [&str; 4] = ["c", "u", "f", "o"];

#[derive(Debug, Clone, Copy)]
struct LstmLayout {
    input: usize,
    hidden: usize,
    weights: [usize; 4],
    biases: [usize; 4],
}

impl LstmLayout {
    fn cols(&self) -> usize {
        self.hidden + self.input
    }
}

#[derive(Debug, Clone)]
struct Layout {
    attn_w: usize,
    attn_b: usize,
    attn_u: usize,
    news: LstmLayout,
    market: LstmLayout,
    out_w: usize,
    out_b: usize,
    total: usize,
}

impl Layout {
    fn new(s: &Shapes) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let start = at;
            at += n;
            start
        };
        let attn_w = take(s.attention_dim * s.input_dim);
        let attn_b = take(s.attention_dim);
        let attn_u = take(s.attention_dim);
        let mut lstm = |input: usize, hidden: usize| {
            let weights = [(); 4].map(|_| take(hidden * (hidden + input)));
            let biases = [(); 4].map(|_| take(hidden));
            LstmLayout {
                input,
                hidden,
                weights,
                biases,
            }
        };
        let news = lstm(s.input_dim, s.news_hidden);
        let market = lstm(s.market_dim, s.market_hidden);
        let out_w = take(s.classes * (s.news_hidden + s.market_hidden));
        let out_b = take(s.classes);
        Layout {
            attn_w,
            attn_b,
            attn_u,
            news,
            market,
            out_w,
            out_b,
            total: at,
        }
    }
}

/// A named contiguous slice of the parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub range: Range<usize>,
    /// Weight matrices get a fan-based init; biases start at zero.
    pub fan: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    shapes: Shapes,
    mask_empty_days: bool,
    params: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out += W x` with `W` row-major `rows × x.len()`.
fn matvec_add(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let top = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - top).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

/// Cross-entropy of the true class plus `l2 · Σ q²`. The flag reports
/// whether the probability had to be clamped.
pub fn loss(probs: &[f64], label: usize, params: &[f64], l2: f64) -> (f64, bool) {
    let p = probs[label];
    let clamped = p < PROB_FLOOR;
    let ce = -p.max(PROB_FLOOR).ln();
    let penalty = if l2 == 0.0 {
        0.0
    } else {
        l2 * params.iter().map(|q| q * q).sum::<f64>()
    };
    (ce + penalty, clamped)
}

/// Per-step LSTM state kept for the backward pass.
#[derive(Debug, Clone)]
struct Step {
    xc: Vec<f64>,
    cand: Vec<f64>,
    update: Vec<f64>,
    forget: Vec<f64>,
    output: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
    a: Vec<f64>,
    skipped: bool,
}

struct DayAttention {
    u: Vec<f64>,
    alpha: Vec<f64>,
}

struct Forward {
    attention: Vec<Option<DayAttention>>,
    news_steps: Vec<Step>,
    market_steps: Vec<Step>,
    hidden: Vec<f64>,
    probs: Vec<f64>,
}

impl Model {
    /// Zero-initialised model.
    pub fn zeros(shapes: Shapes, mask_empty_days: bool) -> Result<Self> {
        shapes.validate()?;
        let total = Layout::new(&shapes).total;
        Ok(Model {
            shapes,
            mask_empty_days,
            params: vec![0.0; total],
        })
    }

    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn random<R: Rng>(shapes: Shapes, mask_empty_days: bool, rng: &mut R) -> Result<Self> {
        let mut model = Model::zeros(shapes, mask_empty_days)?;
        for block in model.blocks() {
            if let Some((fan_in, fan_out)) = block.fan {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                for q in &mut model.params[block.range] {
                    *q = rng.random_range(-limit..limit);
                }
            }
        }
        Ok(model)
    }

    pub fn from_params(shapes: Shapes, mask_empty_days: bool, params: Vec<f64>) -> Result<Self> {
        shapes.validate()?;
        let total = Layout::new(&shapes).total;
        if params.len() != total {
            return Err(Error::Shape(format!(
                "expected {total} parameters, got {}",
                params.len()
            )));
        }
        if params.iter().any(|q| !q.is_finite()) {
            return Err(Error::NonFinite {
                stage: "model load",
                detail: "parameters contain non-finite values".into(),
            });
        }
        Ok(Model {
            shapes,
            mask_empty_days,
            params,
        })
    }

    pub fn shapes(&self) -> &Shapes {
        &self.shapes
    }

    pub fn mask_empty_days(&self) -> bool {
        self.mask_empty_days
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layout(&self) -> Layout {
        Layout::new(&self.shapes)
    }

    pub fn blocks(&self) -> Vec<Block> {
        let s = &self.shapes;
        let l = self.layout();
        let mut out = vec![
            Block {
                name: "attention.W_n".into(),
                range: l.attn_w..l.attn_b,
                fan: Some((s.input_dim, s.attention_dim)),
            },
            Block {
                name: "attention.b_n".into(),
                range: l.attn_b..l.attn_u,
                fan: None,
            },
            Block {
                name: "attention.u_w".into(),
                range: l.attn_u..l.attn_u + s.attention_dim,
                fan: Some((s.attention_dim, 1)),
            },
        ];
        for (prefix, lstm) in [("news", l.news), ("market", l.market)] {
            for (g, name) in GATES.iter().enumerate() {
                out.push(Block {
                    name: format!("{prefix}.W_{name}"),
                    range: lstm.weights[g]..lstm.weights[g] + lstm.hidden * lstm.cols(),
                    fan: Some((lstm.cols(), lstm.hidden)),
                });
            }
            for (g, name) in GATES.iter().enumerate() {
                out.push(Block {
                    name: format!("{prefix}.b_{name}"),
                    range: lstm.biases[g]..lstm.biases[g] + lstm.hidden,
                    fan: None,
                });
            }
        }
        out.push(Block {
            name: "output.W".into(),
            range: l.out_w..l.out_b,
            fan: Some((s.news_hidden + s.market_hidden, s.classes)),
        });
        out.push(Block {
            name: "output.b".into(),
            range: l.out_b..l.total,
            fan: None,
        });
        out
    }

    fn attend(&self, l: &Layout, news: &[f64], n: usize) -> (Vec<f64>, DayAttention) {
        let d = self.shapes.input_dim;
        let a = self.shapes.attention_dim;
        let p = &self.params;
        let w = &p[l.attn_w..l.attn_b];
        let uw = &p[l.attn_u..l.attn_u + a];
        let mut u = Vec::with_capacity(n * a);
        let mut scores = Vec::with_capacity(n);
        for i in 0..n {
            let mut pre = p[l.attn_b..l.attn_u].to_vec();
            matvec_add(w, &news[i * d..(i + 1) * d], &mut pre);
            let ui: Vec<f64> = pre.iter().map(|v| v.tanh()).collect();
            scores.push(ui.iter().zip(uw).map(|(x, y)| x * y).sum::<f64>());
            u.extend(ui);
        }
        let alpha = softmax(&scores);
        let mut pooled = vec![0.0; d];
        for (i, &w) in alpha.iter().enumerate() {
            for (o, x) in pooled.iter_mut().zip(&news[i * d..(i + 1) * d]) {
                *o += w * x;
            }
        }
        (pooled, DayAttention { u, alpha })
    }

    /// Daily vector and attention weights for `n` news stacked row-wise in
    /// `news`. Requires `n ≥ 1`.
    pub fn attention_pool(&self, news: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if n == 0 || news.len() != n * self.shapes.input_dim {
            return Err(Error::Shape(format!(
                "attention over {n} news needs {} values, got {}",
                n * self.shapes.input_dim,
                news.len()
            )));
        }
        let (pooled, att) = self.attend(&self.layout(), news, n);
        Ok((pooled, att.alpha))
    }

    fn lstm_forward(&self, l: &LstmLayout, inputs: &[Vec<f64>], skip: &[bool]) -> Vec<Step> {
        let h = l.hidden;
        let p = &self.params;
        let mut a = vec![0.0; h];
        let mut c = vec![0.0; h];
        let mut steps = Vec::with_capacity(inputs.len());
        for (x, &skipped) in inputs.iter().zip(skip) {
            let mut xc = a.clone();
            xc.extend_from_slice(x);
            if skipped {
                steps.push(Step {
                    xc,
                    cand: vec![],
                    update: vec![],
                    forget: vec![],
                    output: vec![],
                    c_prev: c.clone(),
                    tanh_c: vec![],
                    a: a.clone(),
                    skipped,
                });
                continue;
            }
            let gate = |g: usize| {
                let mut z = p[l.biases[g]..l.biases[g] + h].to_vec();
                matvec_add(&p[l.weights[g]..l.weights[g] + h * l.cols()], &xc, &mut z);
                z
            };
            let cand: Vec<f64> = gate(0).into_iter().map(f64::tanh).collect();
            let update: Vec<f64> = gate(1).into_iter().map(sigmoid).collect();
            let forget: Vec<f64> = gate(2).into_iter().map(sigmoid).collect();
            let output: Vec<f64> = gate(3).into_iter().map(sigmoid).collect();
            let c_new: Vec<f64> = (0..h).map(|k| update[k] * cand[k] + forget[k] * c[k]).collect();
            let tanh_c: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
            let a_new: Vec<f64> = (0..h).map(|k| output[k] * tanh_c[k]).collect();
            steps.push(Step {
                xc,
                cand,
                update,
                forget,
                output,
                c_prev: std::mem::replace(&mut c, c_new),
                tanh_c,
                a: a_new.clone(),
                skipped,
            });
            a = a_new;
        }
        steps
    }

    /// Runs an LSTM over `inputs` from zero state and returns the final
    /// hidden state. `news` selects the news encoder, otherwise the market one.
    pub fn lstm_encode(&self, inputs: &[Vec<f64>], news: bool) -> Result<Vec<f64>> {
        let l = self.layout();
        let lstm = if news { l.news } else { l.market };
        if inputs.is_empty() || inputs.iter().any(|x| x.len() != lstm.input) {
            return Err(Error::Shape(format!(
                "LSTM expects non-empty inputs of length {}",
                lstm.input
            )));
        }
        let steps = self.lstm_forward(&lstm, inputs, &vec![false; inputs.len()]);
        Ok(steps.last().map(|s| s.a.clone()).unwrap_or_default())
    }

    fn check_window(&self, days: &[TradingDay]) -> Result<()> {
        let s = &self.shapes;
        for day in days {
            if day.news.len() != day.doc_ids.len() * s.input_dim || day.market.len() != s.market_dim {
                return Err(Error::Shape(format!(
                    "day {} does not match model shapes (d = {}, market = {})",
                    day.date, s.input_dim, s.market_dim
                )));
            }
        }
        if days.is_empty() {
            return Err(Error::Shape("empty window".into()));
        }
        Ok(())
    }

    fn run(&self, days: &[TradingDay]) -> Forward {
        let l = self.layout();
        let d = self.shapes.input_dim;
        let mut attention = Vec::with_capacity(days.len());
        let mut pooled = Vec::with_capacity(days.len());
        let mut skip = Vec::with_capacity(days.len());
        for day in days {
            let n = day.doc_ids.len();
            if n == 0 {
                attention.push(None);
                pooled.push(vec![0.0; d]);
                skip.push(self.mask_empty_days);
            } else {
                let (v, att) = self.attend(&l, &day.news, n);
                attention.push(Some(att));
                pooled.push(v);
                skip.push(false);
            }
        }
        let market: Vec<Vec<f64>> = days.iter().map(|day| day.market.clone()).collect();
        let news_steps = self.lstm_forward(&l.news, &pooled, &skip);
        let market_steps = self.lstm_forward(&l.market, &market, &vec![false; days.len()]);
        let mut hidden = news_steps.last().map(|s| s.a.clone()).unwrap_or_default();
        hidden.extend_from_slice(&market_steps.last().map(|s| s.a.clone()).unwrap_or_default());
        let mut logits = self.params[l.out_b..l.total].to_vec();
        matvec_add(&self.params[l.out_w..l.out_b], &hidden, &mut logits);
        Forward {
            attention,
            news_steps,
            market_steps,
            hidden,
            probs: softmax(&logits),
        }
    }

    /// Class probabilities for a window of trading days.
    pub fn forward(&self, days: &[TradingDay]) -> Result<Vec<f64>> {
        self.check_window(days)?;
        Ok(self.run(days).probs)
    }

    pub fn predict(&self, set: &SampleSet, sample: usize) -> Result<Vec<f64>> {
        self.forward(set.window(sample)?)
    }

    fn lstm_backward(&self, l: &LstmLayout, steps: &[Step], da_top: &[f64], grad: &mut [f64]) -> Vec<Vec<f64>> {
        let h = l.hidden;
        let cols = l.cols();
        let p = &self.params;
        let mut da = da_top.to_vec();
        let mut dc = vec![0.0; h];
        let mut dxs = vec![vec![0.0; l.input]; steps.len()];
        for (t, step) in steps.iter().enumerate().rev() {
            if step.skipped {
                continue;
            }
            let mut dz = [vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]];
            for k in 0..h {
                let dgo = da[k] * step.tanh_c[k];
                dc[k] += da[k] * step.output[k] * (1.0 - step.tanh_c[k] * step.tanh_c[k]);
                let dcand = dc[k] * step.update[k];
                let dgu = dc[k] * step.cand[k];
                let dgf = dc[k] * step.c_prev[k];
                dz[0][k] = dcand * (1.0 - step.cand[k] * step.cand[k]);
                dz[1][k] = dgu * step.update[k] * (1.0 - step.update[k]);
                dz[2][k] = dgf * step.forget[k] * (1.0 - step.forget[k]);
                dz[3][k] = dgo * step.output[k] * (1.0 - step.output[k]);
                dc[k] *= step.forget[k];
            }
            let mut dxc = vec![0.0; cols];
            for (g, dzg) in dz.iter().enumerate() {
                let w0 = l.weights[g];
                for (r, &delta) in dzg.iter().enumerate() {
                    if delta == 0.0 {
                        continue;
                    }
                    let row = w0 + r * cols;
                    for (col, x) in step.xc.iter().enumerate() {
                        grad[row + col] += delta * x;
                        dxc[col] += p[row + col] * delta;
                    }
                    grad[l.biases[g] + r] += delta;
                }
            }
            da.copy_from_slice(&dxc[..h]);
            dxs[t] = dxc[h..].to_vec();
        }
        dxs
    }

    fn attention_backward(&self, l: &Layout, news: &[f64], att: &DayAttention, dd: &[f64], grad: &mut [f64]) {
        let d = self.shapes.input_dim;
        let a = self.shapes.attention_dim;
        let n = att.alpha.len();
        let uw = &self.params[l.attn_u..l.attn_u + a];
        let dalpha: Vec<f64> = (0..n)
            .map(|i| news[i * d..(i + 1) * d].iter().zip(dd).map(|(x, y)| x * y).sum())
            .collect();
        let mean: f64 = att.alpha.iter().zip(&dalpha).map(|(x, y)| x * y).sum();
        for i in 0..n {
            let ds = att.alpha[i] * (dalpha[i] - mean);
            if ds == 0.0 {
                continue;
            }
            let ui = &att.u[i * a..(i + 1) * a];
            let ni = &news[i * d..(i + 1) * d];
            for r in 0..a {
                grad[l.attn_u + r] += ds * ui[r];
                let dpre = ds * uw[r] * (1.0 - ui[r] * ui[r]);
                grad[l.attn_b + r] += dpre;
                let row = l.attn_w + r * d;
                for (c, x) in ni.iter().enumerate() {
                    grad[row + c] += dpre * x;
                }
            }
        }
    }

    /// Weighted cross-entropy for one window, accumulating its gradient into
    /// `grad` (no L2 term). Returns the loss and whether it was clamped.
    pub(crate) fn accumulate(&self, days: &[TradingDay], label: usize, weight: f64, grad: &mut [f64]) -> (f64, bool) {
        let l = self.layout();
        let fwd = self.run(days);
        let (ce, clamped) = loss(&fwd.probs, label, &[], 0.0);
        let hn = self.shapes.news_hidden;
        let cols = hn + self.shapes.market_hidden;
        let mut dz = fwd.probs.clone();
        dz[label] -= 1.0;
        dz.iter_mut().for_each(|v| *v *= weight);
        let mut dh = vec![0.0; cols];
        for (j, &delta) in dz.iter().enumerate() {
            grad[l.out_b + j] += delta;
            let row = l.out_w + j * cols;
            for (k, &x) in fwd.hidden.iter().enumerate() {
                grad[row + k] += delta * x;
                dh[k] += self.params[row + k] * delta;
            }
        }
        let dx_news = self.lstm_backward(&l.news, &fwd.news_steps, &dh[..hn], grad);
        self.lstm_backward(&l.market, &fwd.market_steps, &dh[hn..], grad);
        for ((day, att), dd) in days.iter().zip(&fwd.attention).zip(&dx_news) {
            if let Some(att) = att {
                self.attention_backward(&l, &day.news, att, dd, grad);
            }
        }
        (weight * ce, clamped)
    }

    /// Loss (cross-entropy plus `l2 · ‖Q‖²`) and its full gradient for one
    /// sample.
    pub fn loss_and_gradient(&self, set: &SampleSet, sample: usize, l2: f64) -> Result<(f64, Vec<f64>)> {
        let days = set.window(sample)?;
        self.check_window(days)?;
        let label = set.samples[sample].label;
        if label >= self.shapes.classes {
            return Err(Error::Shape(format!(
                "label {label} outside {} classes",
                self.shapes.classes
            )));
        }
        let mut grad = vec![0.0; self.params.len()];
        let (ce, _) = self.accumulate(days, label, 1.0, &mut grad);
        let mut penalty = 0.0;
        for (g, q) in grad.iter_mut().zip(&self.params) {
            penalty += q * q;
            *g += 2.0 * l2 * q;
        }
        Ok((ce + l2 * penalty, grad))
    }

    /// Attention weights of every non-empty day in a window.
    pub fn window_attention(&self, days: &[TradingDay]) -> Result<Vec<Option<Vec<f64>>>> {
        self.check_window(days)?;
        let l = self.layout();
        Ok(days
            .iter()
            .map(|day| {
                let n = day.doc_ids.len();
                (n > 0).then(|| self.attend(&l, &day.news, n).1.alpha)
            })
            .collect())
    }
}
