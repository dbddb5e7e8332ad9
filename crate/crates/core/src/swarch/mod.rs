//! Two-regime switching ARCH, SWARCH(2,1).
//!
//! ```text
//! y_t = u + θ y_{t-1} + ε_t,          ε_t | past ~ N(0, σ²_t)
//! σ²_t = γ_{s_t} (α_0 + α_1 ε²_{t-1} / γ_{s_{t-1}}),   γ_1 = 1
//! ```
//!
//! `s_t` follows a two-state Markov chain with staying probabilities
//! `p11`, `p22`. Because the variance depends on both `s_t` and `s_{t-1}`,
//! the likelihood of each observation is evaluated per state pair. Regime 2
//! is the high-volatility (crisis) state.

mod simplex;

use std::path::Path;

use chrono::NaiveDate;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::parse_date;
use crate::error::{Error, Result};
use crate::rng::rng_for;

pub use simplex::{minimize, SimplexOptions, SimplexResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwarchParams {
    pub mean: f64,
    pub ar: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    /// Variance scale of regime 2 relative to regime 1.
    pub gamma_high: f64,
    pub p11: f64,
    pub p22: f64,
}

impl SwarchParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mean.is_finite()
            && self.ar.abs() < 1.0
            && self.alpha0 > 0.0
            && self.alpha0.is_finite()
            && self.alpha1 >= 0.0
            && self.alpha1.is_finite()
            && self.gamma_high >= 1.0
            && self.gamma_high.is_finite()
            && self.p11 > 0.0
            && self.p11 < 1.0
            && self.p22 > 0.0
            && self.p22 < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid SWARCH parameters {self:?}")))
        }
    }

    /// Stationary probability of the high-volatility regime.
    pub fn ergodic_high(&self) -> f64 {
        (1.0 - self.p11) / (2.0 - self.p11 - self.p22)
    }

    fn transition(&self) -> [[f64; 2]; 2] {
        [[self.p11, 1.0 - self.p11], [1.0 - self.p22, self.p22]]
    }
}

/// Filtering probabilities of the high regime with their 0/1 labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSeries {
    pub prob_high: Vec<f64>,
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub regimes: RegimeSeries,
    /// `[P(s_t = 1 | Y_t), P(s_t = 2 | Y_t)]` per day.
    pub filtered: Vec<[f64; 2]>,
    pub log_likelihood: f64,
}

/// Unconstrained-form filter: arbitrary regime scales and transition
/// matrix `trans[i][j] = P(s_t = j | s_{t-1} = i)`.
///
/// Days 0 and 1 carry the ergodic distribution: residuals start at day 1
/// and the first variance needs the previous residual.
pub(crate) fn filter_general(
    y: &[f64],
    mean: f64,
    ar: f64,
    alpha0: f64,
    alpha1: f64,
    gamma: [f64; 2],
    trans: [[f64; 2]; 2],
) -> Result<(Vec<[f64; 2]>, f64)> {
    let n = y.len();
    if n < 3 {
        return Err(Error::Degenerate(format!("need at least 3 observations, got {n}")));
    }
    let p_high = trans[0][1] / (trans[0][1] + trans[1][0]);
    let ergodic = [1.0 - p_high, p_high];
    let mut filtered = vec![ergodic, ergodic];
    let mut prev = ergodic;
    let mut eps_prev = y[1] - mean - ar * y[0];
    let mut loglik = 0.0;
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    for t in 2..n {
        let eps = y[t] - mean - ar * y[t - 1];
        let mut log_joint = [[f64::NEG_INFINITY; 2]; 2];
        for (j, row) in log_joint.iter_mut().enumerate() {
            for (i, cell) in row.iter_mut().enumerate() {
                let var = gamma[j] * (alpha0 + alpha1 * eps_prev * eps_prev / gamma[i]);
                let prior = prev[i] * trans[i][j];
                if prior > 0.0 {
                    *cell = prior.ln() - 0.5 * (ln_2pi + var.ln() + eps * eps / var);
                }
            }
        }
        let top = log_joint.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = log_joint.iter().flatten().map(|l| (l - top).exp()).sum();
        let log_f = top + sum.ln();
        if !log_f.is_finite() {
            return Err(Error::NonFinite {
                stage: "hamilton filter",
                detail: format!("likelihood at t = {t} is {log_f}"),
            });
        }
        loglik += log_f;
        let mut post = [0.0; 2];
        for (j, row) in log_joint.iter().enumerate() {
            post[j] = row.iter().map(|l| (l - log_f).exp()).sum();
        }
        let z = post[0] + post[1];
        post = [post[0] / z, post[1] / z];
        filtered.push(post);
        prev = post;
        eps_prev = eps;
    }
    Ok((filtered, loglik))
}

pub fn hamilton_filter(returns: &[f64], params: &SwarchParams) -> Result<FilterOutput> {
    params.validate()?;
    let (filtered, log_likelihood) = filter_general(
        returns,
        params.mean,
        params.ar,
        params.alpha0,
        params.alpha1,
        [1.0, params.gamma_high],
        params.transition(),
    )?;
    let prob_high: Vec<f64> = filtered.iter().map(|p| p[1]).collect();
    let labels = label_crises(&prob_high, 0.5);
    Ok(FilterOutput {
        regimes: RegimeSeries { prob_high, labels },
        filtered,
        log_likelihood,
    })
}

/// 1 where the high-regime probability is at least `threshold`.
pub fn label_crises(prob_high: &[f64], threshold: f64) -> Vec<u8> {
    prob_high.iter().map(|&p| u8::from(p >= threshold)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub starts: usize,
    pub seed: u64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            starts: 8,
            seed: 0,
            max_iterations: 5000,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: SwarchParams,
    pub log_likelihood: f64,
    /// Index of the winning start.
    pub best_start: usize,
    pub converged_starts: usize,
    pub iterations: usize,
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Maps parameters to an unconstrained vector; `scale` is the sample
/// standard deviation so mean and α_0 are optimised on a unit scale.
struct Transform {
    scale: f64,
}

impl Transform {
    fn forward(&self, p: &SwarchParams) -> Vec<f64> {
        vec![
            p.mean / self.scale,
            p.ar.clamp(-0.999, 0.999).atanh(),
            (p.alpha0 / (self.scale * self.scale)).ln(),
            p.alpha1.max(1e-8).ln(),
            p.gamma_high.ln(),
            logit(p.p11.clamp(1e-6, 1.0 - 1e-6)),
            logit(p.p22.clamp(1e-6, 1.0 - 1e-6)),
        ]
    }

    /// `gamma_high` may come out below 1 here; see [`relabel`].
    fn backward(&self, x: &[f64]) -> SwarchParams {
        SwarchParams {
            mean: x[0] * self.scale,
            ar: x[1].tanh(),
            alpha0: x[2].exp() * self.scale * self.scale,
            alpha1: x[3].exp(),
            gamma_high: x[4].exp(),
            p11: logistic(x[5]),
            p22: logistic(x[6]),
        }
    }
}

fn raw_loglik(y: &[f64], p: &SwarchParams) -> Result<f64> {
    let bad = !(p.p11 > 0.0 && p.p11 < 1.0 && p.p22 > 0.0 && p.p22 < 1.0 && p.gamma_high > 0.0 && p.alpha0 > 0.0);
    if bad {
        return Err(Error::Degenerate("parameters outside the open domain".into()));
    }
    filter_general(y, p.mean, p.ar, p.alpha0, p.alpha1, [1.0, p.gamma_high], p.transition()).map(|r| r.1)
}

/// Swaps regime labels so that regime 2 has the larger scale, renormalising
/// so that γ_1 = 1. The likelihood is unchanged.
pub fn relabel(p: SwarchParams) -> SwarchParams {
    if p.gamma_high >= 1.0 {
        return p;
    }
    SwarchParams {
        alpha0: p.alpha0 * p.gamma_high,
        gamma_high: 1.0 / p.gamma_high,
        p11: p.p22,
        p22: p.p11,
        ..p
    }
}

fn starting_points(y: &[f64], n: usize, seed: u64) -> Vec<SwarchParams> {
    let len = y.len() as f64;
    let mean = y.iter().sum::<f64>() / len;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / len;
    let lag: f64 = y.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / len;
    let ar = (lag / var).clamp(-0.5, 0.5);
    let base = SwarchParams {
        mean: mean * (1.0 - ar),
        ar,
        alpha0: 0.5 * var,
        alpha1: 0.2,
        gamma_high: 4.0,
        p11: 0.95,
        p22: 0.9,
    };
    let mut rng = rng_for(seed, "swarch:starts");
    let mut starts = vec![base];
    while starts.len() < n {
        let alpha1 = rng.random_range(0.02..0.6);
        let gamma_high = rng.random_range(1.5f64.ln()..15f64.ln()).exp();
        starts.push(SwarchParams {
            alpha1,
            alpha0: var * (1.0 - alpha1) * rng.random_range(0.1..1.0),
            gamma_high,
            p11: rng.random_range(0.8..0.995),
            p22: rng.random_range(0.6..0.99),
            ..base
        });
    }
    starts
}

/// Maximum likelihood by Nelder–Mead over transformed parameters, from
/// `config.starts` deterministic starting points (or just `init` when
/// given). Starts run in parallel; the best log-likelihood wins, earliest
/// start on ties.
pub fn fit_swarch(returns: &[f64], init: Option<&SwarchParams>, config: &FitConfig) -> Result<FitResult> {
    if returns.len() < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 observations, got {}",
            returns.len()
        )));
    }
    if returns.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("returns contain non-finite values".into()));
    }
    let len = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / len;
    let var = returns.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / len;
    if var <= f64::MIN_POSITIVE || var.sqrt() <= 1e-12 * mean.abs().max(1.0) {
        return Err(Error::Degenerate("return series has zero variance".into()));
    }
    let transform = Transform { scale: var.sqrt() };
    let starts = match init {
        Some(p) => {
            p.validate()?;
            vec![*p]
        }
        None => starting_points(returns, config.starts.max(1), config.seed),
    };
    let options = SimplexOptions {
        tolerance: config.tolerance,
        max_iterations: config.max_iterations,
        steps: vec![0.1, 0.1, 0.3, 0.3, 0.3, 0.5, 0.5],
        max_restarts: 10,
    };
    let results: Vec<SimplexResult> = starts
        .par_iter()
        .map(|start| {
            let objective = |x: &[f64]| match raw_loglik(returns, &transform.backward(x)) {
                Ok(ll) => -ll,
                Err(_) => f64::INFINITY,
            };
            minimize(objective, &transform.forward(start), &options)
        })
        .collect();

    let converged_starts = results.iter().filter(|r| r.converged && r.value.is_finite()).count();
    let best = results
        .iter()
        .enumerate()
        .filter(|(_, r)| r.value.is_finite())
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)));
    let Some((best_start, best)) = best else {
        return Err(Error::NoConvergence {
            best_loglik: f64::NEG_INFINITY,
        });
    };
    if converged_starts == 0 {
        return Err(Error::NoConvergence {
            best_loglik: -best.value,
        });
    }
    let params = relabel(transform.backward(&best.x));
    let log_likelihood = hamilton_filter(returns, &params)?.log_likelihood;
    Ok(FitResult {
        params,
        log_likelihood,
        best_start,
        converged_starts,
        iterations: results.iter().map(|r| r.iterations).sum(),
    })
}

/// Draws a path of length `n` (regime 1 = 0, regime 2 = 1). `drift[t]`, if
/// given, is added to `y_t` on top of the SWARCH dynamics.
pub fn simulate<R: Rng>(params: &SwarchParams, n: usize, drift: Option<&[f64]>, rng: &mut R) -> (Vec<f64>, Vec<u8>) {
    let gamma = [1.0, params.gamma_high];
    let trans = params.transition();
    let mut state = usize::from(rng.random::<f64>() < params.ergodic_high());
    let mut y_prev = params.mean / (1.0 - params.ar);
    let mut eps_prev = 0.0;
    let mut state_prev = state;
    let mut ys = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    for t in 0..n {
        if t > 0 {
            state = usize::from(rng.random::<f64>() < trans[state_prev][1]);
        }
        let var = gamma[state] * (params.alpha0 + params.alpha1 * eps_prev * eps_prev / gamma[state_prev]);
        let z: f64 = StandardNormal.sample(rng);
        let eps = var.sqrt() * z;
        let y = params.mean + params.ar * y_prev + eps + drift.map_or(0.0, |d| d[t]);
        ys.push(y);
        states.push(state as u8);
        y_prev = y;
        eps_prev = eps;
        state_prev = state;
    }
    (ys, states)
}

#[derive(Serialize, Deserialize)]
struct ReturnRow {
    date: String,
    #[serde(rename = "return")]
    ret: f64,
}

/// Reads a `date,return` CSV with strictly increasing dates.
pub fn read_returns(path: &Path) -> Result<Vec<(NaiveDate, f64)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path.display().to_string(), e))?;
    let mut out: Vec<(NaiveDate, f64)> = Vec::new();
    for (i, row) in reader.deserialize::<ReturnRow>().enumerate() {
        let loc = format!("{}:{}", path.display(), i + 2);
        let row = row.map_err(|e| Error::parse(&loc, e))?;
        let date = parse_date(&row.date).map_err(|m| Error::parse(&loc, m))?;
        if !row.ret.is_finite() {
            return Err(Error::parse(loc, "non-finite return"));
        }
        if out.last().is_some_and(|(d, _)| *d >= date) {
            return Err(Error::parse(loc, "dates must be strictly increasing"));
        }
        out.push((date, row.ret));
    }
    Ok(out)
}

pub fn write_returns(path: &Path, returns: &[(NaiveDate, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path.display().to_string(), e))?;
    for &(date, ret) in returns {
        w.serialize(ReturnRow {
            date: date.to_string(),
            ret,
        })
        .map_err(|e| Error::parse(path.display().to_string(), e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeRow {
    pub date: NaiveDate,
    pub prob_high: f64,
    pub crisis_label: u8,
}

/// Writes `date,prob_high,crisis_label`.
pub fn write_regimes(path: &Path, dates: &[NaiveDate], regimes: &RegimeSeries) -> Result<()> {
    if dates.len() != regimes.prob_high.len() || dates.len() != regimes.labels.len() {
        return Err(Error::Shape("dates and regime series differ in length".into()));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path.display().to_string(), e))?;
    for ((&date, &prob_high), &crisis_label) in dates.iter().zip(&regimes.prob_high).zip(&regimes.labels) {
        w.serialize(RegimeRow {
            date,
            prob_high,
            crisis_label,
        })
        .map_err(|e| Error::parse(path.display().to_string(), e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_regimes(path: &Path) -> Result<Vec<RegimeRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path.display().to_string(), e))?;
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::parse(format!("{}:{}", path.display(), i + 2), e)))
        .collect()
}
