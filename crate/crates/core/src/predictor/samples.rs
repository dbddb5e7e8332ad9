//! Rolling-window samples over trading days and their binary store.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Next-day movement thresholds on simple returns.
pub const UP_THRESHOLD: f64 = 0.0033;
pub const DOWN_THRESHOLD: f64 = -0.0029;

pub const DOWN: usize = 0;
pub const PRESERVE: usize = 1;
pub const UP: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradingDay {
    pub date: NaiveDate,
    pub doc_ids: Vec<String>,
    /// News vectors stacked row-wise, `doc_ids.len() × dim`.
    pub news: Vec<f64>,
    /// Scaled return of the day followed by its lags.
    pub market: Vec<f64>,
    /// Raw return of the day.
    pub ret: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    /// First day of the input window.
    pub start: usize,
    /// Day whose label is predicted; the window is `start..target`.
    pub target: usize,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub dim: usize,
    pub market_dim: usize,
    pub window: usize,
    pub classes: usize,
    pub labeler: String,
    pub days: Vec<TradingDay>,
    pub samples: Vec<Sample>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleConfig {
    pub window: usize,
    pub stride: usize,
    /// Multiplier applied to returns fed to the market encoder.
    pub return_scale: f64,
    /// Number of past returns appended to each day's market input.
    pub market_lags: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            window: 20,
            stride: 1,
            return_scale: 100.0,
            market_lags: 0,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.stride == 0 || !(self.return_scale.is_finite() && self.return_scale > 0.0) {
            return Err(Error::InvalidConfig(format!("invalid sample config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Labeler {
    /// DOWN / PRESERVE / UP by strict return thresholds.
    Movement { up: f64, down: f64 },
    /// 1 when the return is positive.
    Direction,
    /// Crisis labels keyed by date.
    Crisis(BTreeMap<NaiveDate, u8>),
}

impl Labeler {
    pub fn movement() -> Self {
        Labeler::Movement {
            up: UP_THRESHOLD,
            down: DOWN_THRESHOLD,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            Labeler::Movement { .. } => 3,
            Labeler::Direction | Labeler::Crisis(_) => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Labeler::Movement { .. } => "movement",
            Labeler::Direction => "direction",
            Labeler::Crisis(_) => "crisis",
        }
    }

    pub fn label(&self, date: NaiveDate, ret: f64) -> Result<usize> {
        match self {
            Labeler::Movement { up, down } => Ok(if ret > *up {
                UP
            } else if ret < *down {
                DOWN
            } else {
                PRESERVE
            }),
            Labeler::Direction => Ok(usize::from(ret > 0.0)),
            Labeler::Crisis(labels) => labels
                .get(&date)
                .map(|&l| usize::from(l))
                .ok_or_else(|| Error::DateGaps(vec![date.to_string()])),
        }
    }
}

/// One news item: document id and its vector.
pub type NewsItem = (String, Vec<f64>);

/// Aligns news with trading days and cuts rolling windows. News dated on a
/// day without a return is an error listing those dates. News within a day
/// keep the given order.
pub fn build_samples(
    news: &BTreeMap<NaiveDate, Vec<NewsItem>>,
    returns: &[(NaiveDate, f64)],
    config: &SampleConfig,
    labeler: &Labeler,
) -> Result<SampleSet> {
    config.validate()?;
    if let Some(w) = returns.windows(2).find(|w| w[0].0 >= w[1].0) {
        return Err(Error::InvalidConfig(format!(
            "return dates not increasing at {}",
            w[1].0
        )));
    }
    let trading: BTreeSet<NaiveDate> = returns.iter().map(|r| r.0).collect();
    let gaps: Vec<String> = news
        .keys()
        .filter(|d| !trading.contains(d))
        .map(|d| d.to_string())
        .collect();
    if !gaps.is_empty() {
        return Err(Error::DateGaps(gaps));
    }
    let dim = news.values().flatten().map(|(_, v)| v.len()).next().unwrap_or(0);
    if dim == 0 {
        return Err(Error::Shape("no news vectors".into()));
    }
    if let Some((id, v)) = news.values().flatten().find(|(_, v)| v.len() != dim) {
        return Err(Error::Shape(format!(
            "vector for {id} has length {}, expected {dim}",
            v.len()
        )));
    }
    let market_dim = 1 + config.market_lags;
    let days: Vec<TradingDay> = returns
        .iter()
        .enumerate()
        .map(|(t, &(date, ret))| {
            let items = news.get(&date).map(Vec::as_slice).unwrap_or_default();
            let market = (0..market_dim)
                .map(|lag| {
                    if lag <= t {
                        returns[t - lag].1 * config.return_scale
                    } else {
                        0.0
                    }
                })
                .collect();
            TradingDay {
                date,
                doc_ids: items.iter().map(|(id, _)| id.clone()).collect(),
                news: items.iter().flat_map(|(_, v)| v.iter().copied()).collect(),
                market,
                ret,
            }
        })
        .collect();
    let mut samples = Vec::new();
    let mut start = 0;
    while start + config.window < days.len() {
        let target = start + config.window;
        samples.push(Sample {
            start,
            target,
            label: labeler.label(days[target].date, days[target].ret)?,
        });
        start += config.stride;
    }
    Ok(SampleSet {
        dim,
        market_dim,
        window: config.window,
        classes: labeler.classes(),
        labeler: labeler.name().into(),
        days,
        samples,
        metadata: BTreeMap::new(),
    })
}

const SAMPLE_MAGIC: &[u8; 8] = b"DRNSMP1\n";
const STORE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct DayIndex {
    date: NaiveDate,
    doc_ids: Vec<String>,
    ret: f64,
    /// Offset of the day's news block, in f64 values.
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct StoreHeader {
    version: u32,
    dim: usize,
    market_dim: usize,
    window: usize,
    classes: usize,
    labeler: String,
    metadata: BTreeMap<String, String>,
    days: Vec<DayIndex>,
    samples: Vec<Sample>,
    news_values: usize,
}

/// Writes `magic, u64 header length, JSON header, f64 LE payload`.
pub(crate) fn write_framed<W: Write, H: Serialize>(
    mut out: W,
    magic: &[u8; 8],
    header: &H,
    payload: &[f64],
) -> std::io::Result<()> {
    let json = serde_json::to_vec(header).map_err(std::io::Error::other)?;
    out.write_all(magic)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    let mut buf = Vec::with_capacity(payload.len() * 8);
    for v in payload {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    out.flush()
}

pub(crate) fn read_framed<H: for<'de> Deserialize<'de>>(path: &Path, magic: &[u8; 8]) -> Result<(H, Vec<f64>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let loc = path.display().to_string();
    if bytes.len() < 16 || &bytes[..8] != magic {
        return Err(Error::parse(loc, "unrecognised file header"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes
        .get(16..16 + len)
        .ok_or_else(|| Error::parse(&loc, "truncated header"))?;
    let header: H = serde_json::from_slice(body).map_err(|e| Error::parse(&loc, e))?;
    let rest = &bytes[16 + len..];
    if rest.len() % 8 != 0 {
        return Err(Error::parse(loc, "payload is not a whole number of f64 values"));
    }
    let values = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((header, values))
}

impl SampleSet {
    /// Input days of a sample.
    pub fn window(&self, sample: usize) -> Result<&[TradingDay]> {
        let s = self
            .samples
            .get(sample)
            .ok_or_else(|| Error::Shape(format!("no sample {sample}")))?;
        self.days
            .get(s.start..s.target)
            .ok_or_else(|| Error::Shape(format!("sample {sample} runs past the last day")))
    }

    pub fn labels(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.samples[i].label).collect()
    }

    /// Binary record file: a JSON index (dates, doc ids, returns, labels,
    /// offsets) followed by news vectors then market inputs as f64 LE.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut offset = 0;
        let mut payload = Vec::new();
        let days = self
            .days
            .iter()
            .map(|d| {
                let idx = DayIndex {
                    date: d.date,
                    doc_ids: d.doc_ids.clone(),
                    ret: d.ret,
                    offset,
                };
                offset += d.news.len();
                payload.extend_from_slice(&d.news);
                idx
            })
            .collect();
        let news_values = payload.len();
        for d in &self.days {
            payload.extend_from_slice(&d.market);
        }
        let header = StoreHeader {
            version: STORE_VERSION,
            dim: self.dim,
            market_dim: self.market_dim,
            window: self.window,
            classes: self.classes,
            labeler: self.labeler.clone(),
            metadata: self.metadata.clone(),
            days,
            samples: self.samples.clone(),
            news_values,
        };
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        write_framed(std::io::BufWriter::new(file), SAMPLE_MAGIC, &header, &payload).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let (h, values): (StoreHeader, Vec<f64>) = read_framed(path, SAMPLE_MAGIC)?;
        let loc = path.display().to_string();
        if h.version != STORE_VERSION {
            return Err(Error::parse(
                loc,
                format!("unsupported sample store version {}", h.version),
            ));
        }
        if values.len() != h.news_values + h.days.len() * h.market_dim {
            return Err(Error::parse(loc, "payload size does not match the index"));
        }
        let (news, market) = values.split_at(h.news_values);
        let mut days = Vec::with_capacity(h.days.len());
        for (i, d) in h.days.into_iter().enumerate() {
            let len = d.doc_ids.len() * h.dim;
            let block = news
                .get(d.offset..d.offset + len)
                .ok_or_else(|| Error::parse(&loc, format!("day {} points outside the payload", d.date)))?;
            days.push(TradingDay {
                date: d.date,
                news: block.to_vec(),
                doc_ids: d.doc_ids,
                market: market[i * h.market_dim..(i + 1) * h.market_dim].to_vec(),
                ret: d.ret,
            });
        }
        if h.samples
            .iter()
            .any(|s| s.target >= days.len() || s.start > s.target || s.label >= h.classes)
        {
            return Err(Error::parse(loc, "sample index out of range"));
        }
        Ok(SampleSet {
            dim: h.dim,
            market_dim: h.market_dim,
            window: h.window,
            classes: h.classes,
            labeler: h.labeler,
            days,
            samples: h.samples,
            metadata: h.metadata,
        })
    }
}
