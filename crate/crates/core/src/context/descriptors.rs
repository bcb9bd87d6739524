//! Daily atomic text units: a price-market description generated from panel
//! statistics and a news-market description from a CSV feed or the seeded
//! synthetic news generator.
//!
//! The price descriptor for decision day t summarizes the *previous*
//! session, so a prompt built on the morning of t never cites that day's
//! own prices.

use super::ContextError;
use crate::data::{DataError, MarketPanel, PanelField};
use chrono::NaiveDate;
use std::collections::BTreeMap;
use std::path::Path;

/// Descriptor pair for one decision day. `source_date` is the latest date
/// whose data fed the text (prices come from session t−1, news is the
/// morning feed dated t), used by the provenance audit.
#[derive(Debug, Clone)]
pub struct MarketDescriptors {
    pub date: NaiveDate,
    pub s_price: String,
    pub s_news: String,
    pub source_date: NaiveDate,
}

/// Price-market description for decision day `date_idx`, built from the
/// session at `date_idx - 1`: index move, breadth, and extreme movers.
pub fn price_descriptor(panel: &MarketPanel, date_idx: usize) -> Result<String, ContextError> {
    if date_idx == 0 || date_idx >= panel.n_dates() {
        return Err(ContextError::DateOutOfRange(date_idx));
    }
    let s = date_idx - 1;
    let closes = panel.field(PanelField::Close);
    let mut moves: Vec<(usize, f64)> = Vec::new();
    for t in 0..panel.n_tickers() {
        let c1 = closes.get(s, t);
        let c0 = if s == 0 { f64::NAN } else { closes.get(s - 1, t) };
        if c0.is_finite() && c1.is_finite() && c0 > 0.0 {
            moves.push((t, c1 / c0 - 1.0));
        }
    }
    let session = panel.dates()[s];
    if moves.is_empty() {
        return Ok(format!(
            "Prior session {session}: no return data available across the universe."
        ));
    }
    let mean = moves.iter().map(|(_, r)| r).sum::<f64>() / moves.len() as f64;
    let advancers = moves.iter().filter(|(_, r)| *r > 0.0).count();
    let breadth = advancers as f64 / moves.len() as f64;
    let mut sorted = moves.clone();
    sorted.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite"));
    let fmt_move =
        |(t, r): &(usize, f64)| format!("{} {:+.2}%", panel.tickers()[*t], r * 100.0);
    let top: Vec<String> = sorted.iter().take(3).map(fmt_move).collect();
    let bottom: Vec<String> = sorted.iter().rev().take(3).map(fmt_move).collect();
    let dispersion = {
        let var = moves.iter().map(|(_, r)| (r - mean) * (r - mean)).sum::<f64>()
            / moves.len() as f64;
        var.sqrt()
    };
    Ok(format!(
        "Prior session {session}: universe moved {:+.2}% equal-weighted; breadth {:.0}% advancers; \
         cross-sectional dispersion {:.2}%. Leaders: {}. Laggards: {}.",
        mean * 100.0,
        breadth * 100.0,
        dispersion * 100.0,
        top.join(", "),
        bottom.join(", ")
    ))
}

/// Where news text comes from.
#[derive(Debug, Clone)]
pub enum NewsSource {
    /// `date,headline,body` CSV rows grouped by date.
    Csv(BTreeMap<NaiveDate, Vec<(String, String)>>),
    /// Seeded deterministic generator for synthetic experiments.
    Synthetic { seed: u64 },
}

impl NewsSource {
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let headers = reader.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| DataError::MalformedHeader(format!("missing column `{name}`")))
        };
        let (date_col, headline_col, body_col) = (col("date")?, col("headline")?, col("body")?);
        let mut map: BTreeMap<NaiveDate, Vec<(String, String)>> = BTreeMap::new();
        for record in reader.records() {
            let record = record?;
            let date: NaiveDate = match record.get(date_col).unwrap_or("").trim().parse() {
                Ok(d) => d,
                Err(_) => continue,
            };
            map.entry(date).or_default().push((
                record.get(headline_col).unwrap_or("").to_string(),
                record.get(body_col).unwrap_or("").to_string(),
            ));
        }
        Ok(NewsSource::Csv(map))
    }
}

const HEADLINE_THEMES: [&str; 8] = [
    "Policy easing hopes lift cyclical names",
    "Liquidity rotation accelerates into small caps",
    "Earnings season keeps dispersion elevated",
    "Index heavyweights drag on sentiment",
    "Volume surges hint at positioning change",
    "Macro data lands in line, focus shifts to flows",
    "Risk appetite steadies after choppy session",
    "Sector rotation favors laggards into the close",
];

/// News-market description for a date. CSV mode errors when the date has no
/// rows; the synthetic generator is total and deterministic.
pub fn news_descriptor(source: &NewsSource, date: NaiveDate) -> Result<String, ContextError> {
    match source {
        NewsSource::Csv(map) => {
            let rows = map
                .get(&date)
                .ok_or(ContextError::MissingDescriptor { date, field: "s_news" })?;
            let mut out = format!("News {date}:");
            for (headline, body) in rows {
                out.push_str(&format!("\n- {headline}: {body}"));
            }
            Ok(out)
        }
        NewsSource::Synthetic { seed } => {
            let mix = seed
                .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                .wrapping_add(date.num_days_from_ce() as u64);
            let first = (mix % HEADLINE_THEMES.len() as u64) as usize;
            let second = ((mix / 7) % HEADLINE_THEMES.len() as u64) as usize;
            Ok(format!(
                "News {date}:\n- {}\n- {}",
                HEADLINE_THEMES[first], HEADLINE_THEMES[second]
            ))
        }
    }
}

/// Build the descriptor pair for one decision day.
pub fn build_descriptors(
    panel: &MarketPanel,
    news: &NewsSource,
    date_idx: usize,
) -> Result<MarketDescriptors, ContextError> {
    if date_idx == 0 || date_idx >= panel.n_dates() {
        return Err(ContextError::DateOutOfRange(date_idx));
    }
    let date = panel.dates()[date_idx];
    Ok(MarketDescriptors {
        date,
        s_price: price_descriptor(panel, date_idx)?,
        s_news: news_descriptor(news, date)?,
        source_date: date,
    })
}
