//! Market data: daily/minute bars, dense panels, CSV ingestion, validation,
//! and seeded synthetic markets with a planted factor signal.
//!
//! Panels are immutable after construction and safe to share read-only across
//! parallel workers. Missing values are carried explicitly as NaN cells in the
//! per-field grids; ingestion never fills them — downstream modules decide.

mod csv_io;
mod synth;
mod validate;

pub use csv_io::{
    load_daily_bars, load_minute_bars, save_daily_bars, save_minute_bars, IngestReport, RowIssue,
};
pub use synth::{generate_synthetic_market, SyntheticSpec};
pub use validate::{validate_panel, CalendarMode, PanelReport, PanelViolation};

use chrono::NaiveDate;
use std::collections::BTreeMap;
use thiserror::Error;

/// Default daily price band ratio applied when limit columns are absent.
pub const DEFAULT_LIMIT_RATIO: f64 = 0.10;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("non-monotone dates for ticker {ticker} at line {line}")]
    NonMonotoneDates { ticker: String, line: u64 },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("empty input: {0}")]
    Empty(String),
}

/// One validated daily observation for a single ticker.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyBar {
    pub date: NaiveDate,
    pub ticker: String,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
    pub prev_close: f64,
    pub limit_up: Option<f64>,
    pub limit_down: Option<f64>,
    pub is_ipo_day: bool,
}

impl DailyBar {
    /// Check the bar-level invariants, returning the first violation found.
    /// NaN fields are treated as missing and skipped by the price-shape
    /// checks; they surface later through the panel mask instead.
    pub fn check(&self) -> Result<(), String> {
        for (name, v) in [
            ("open", self.open),
            ("high", self.high),
            ("low", self.low),
            ("close", self.close),
            ("prev_close", self.prev_close),
        ] {
            if v.is_finite() && v <= 0.0 {
                return Err(format!("{name} must be > 0, got {v}"));
            }
        }
        if self.volume.is_finite() && self.volume < 0.0 {
            return Err(format!("volume must be >= 0, got {}", self.volume));
        }
        let body_max = self.open.max(self.close);
        let body_min = self.open.min(self.close);
        if self.low.is_finite() && body_min.is_finite() && self.low > body_min {
            return Err(format!("low {} > min(open, close) {}", self.low, body_min));
        }
        if self.high.is_finite() && body_max.is_finite() && self.high < body_max {
            return Err(format!("high {} < max(open, close) {}", self.high, body_max));
        }
        if let Some(up) = self.limit_up {
            if self.high.is_finite() && self.high > up {
                return Err(format!("high {} above limit_up {up}", self.high));
            }
        }
        if let Some(down) = self.limit_down {
            if self.low.is_finite() && self.low < down {
                return Err(format!("low {} below limit_down {down}", self.low));
            }
        }
        Ok(())
    }
}

/// One intraday observation inside the 30-minute execution window
/// (minute_index 1..=30 maps 09:31–10:00).
#[derive(Debug, Clone, PartialEq)]
pub struct MinuteBar {
    pub date: NaiveDate,
    pub ticker: String,
    pub minute_index: u32,
    pub price: f64,
    pub volume: f64,
}

impl MinuteBar {
    pub fn check(&self) -> Result<(), String> {
        if !(1..=30).contains(&self.minute_index) {
            return Err(format!("minute_index {} outside 1..=30", self.minute_index));
        }
        if !(self.price > 0.0) {
            return Err(format!("price must be > 0, got {}", self.price));
        }
        if !(self.volume >= 0.0) {
            return Err(format!("volume must be >= 0, got {}", self.volume));
        }
        Ok(())
    }
}

/// Per-field value matrices over the panel, addressed by (date, ticker).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PanelField {
    Open,
    High,
    Low,
    Close,
    Volume,
    PrevClose,
}

impl PanelField {
    pub const ALL: [PanelField; 6] = [
        PanelField::Open,
        PanelField::High,
        PanelField::Low,
        PanelField::Close,
        PanelField::Volume,
        PanelField::PrevClose,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PanelField::Open => "open",
            PanelField::High => "high",
            PanelField::Low => "low",
            PanelField::Close => "close",
            PanelField::Volume => "volume",
            PanelField::PrevClose => "prev_close",
        }
    }
}

/// Dense date × ticker matrix with NaN marking missing cells.
#[derive(Debug, Clone)]
pub struct Grid {
    n_dates: usize,
    n_tickers: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn filled(n_dates: usize, n_tickers: usize, value: f64) -> Self {
        Grid { n_dates, n_tickers, data: vec![value; n_dates * n_tickers] }
    }

    pub fn missing(n_dates: usize, n_tickers: usize) -> Self {
        Self::filled(n_dates, n_tickers, f64::NAN)
    }

    pub fn n_dates(&self) -> usize {
        self.n_dates
    }

    pub fn n_tickers(&self) -> usize {
        self.n_tickers
    }

    #[inline]
    pub fn get(&self, date_idx: usize, ticker_idx: usize) -> f64 {
        self.data[date_idx * self.n_tickers + ticker_idx]
    }

    #[inline]
    pub fn set(&mut self, date_idx: usize, ticker_idx: usize, value: f64) {
        self.data[date_idx * self.n_tickers + ticker_idx] = value;
    }

    /// Cross-section for one date.
    pub fn row(&self, date_idx: usize) -> &[f64] {
        &self.data[date_idx * self.n_tickers..(date_idx + 1) * self.n_tickers]
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().copied()
    }

    /// Fraction of cells that are missing (NaN).
    pub fn missing_density(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().filter(|v| v.is_nan()).count() as f64 / self.data.len() as f64
    }

    /// Bitwise equality that treats NaN cells as equal. Used by round-trip
    /// tests where NaN marks missing data.
    pub fn bits_eq(&self, other: &Grid) -> bool {
        self.n_dates == other.n_dates
            && self.n_tickers == other.n_tickers
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()))
    }
}

/// Immutable daily market panel: strictly increasing date axis, a fixed
/// ticker axis, and one [`Grid`] per field.
#[derive(Debug, Clone)]
pub struct MarketPanel {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    ticker_index: BTreeMap<String, usize>,
    open: Grid,
    high: Grid,
    low: Grid,
    close: Grid,
    volume: Grid,
    prev_close: Grid,
    limit_up: Grid,
    limit_down: Grid,
    ipo: Vec<bool>,
}

impl MarketPanel {
    /// Assemble a panel from validated bars. Ticker axis is sorted; the date
    /// axis is the sorted set of dates present. Missing limit prices default
    /// to `prev_close × (1 ± limit_ratio)` where prev_close is available.
    pub fn from_bars(bars: &[DailyBar], limit_ratio: f64) -> Self {
        let mut dates: Vec<NaiveDate> = bars.iter().map(|b| b.date).collect();
        dates.sort_unstable();
        dates.dedup();
        let mut tickers: Vec<String> = bars.iter().map(|b| b.ticker.clone()).collect();
        tickers.sort_unstable();
        tickers.dedup();
        let date_index: BTreeMap<NaiveDate, usize> =
            dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        let ticker_index: BTreeMap<String, usize> =
            tickers.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();

        let (nd, nt) = (dates.len(), tickers.len());
        let mut panel = MarketPanel {
            dates,
            tickers,
            ticker_index,
            open: Grid::missing(nd, nt),
            high: Grid::missing(nd, nt),
            low: Grid::missing(nd, nt),
            close: Grid::missing(nd, nt),
            volume: Grid::missing(nd, nt),
            prev_close: Grid::missing(nd, nt),
            limit_up: Grid::missing(nd, nt),
            limit_down: Grid::missing(nd, nt),
            ipo: vec![false; nd * nt],
        };

        for bar in bars {
            let d = date_index[&bar.date];
            let t = panel.ticker_index[&bar.ticker];
            panel.open.set(d, t, bar.open);
            panel.high.set(d, t, bar.high);
            panel.low.set(d, t, bar.low);
            panel.close.set(d, t, bar.close);
            panel.volume.set(d, t, bar.volume);
            panel.prev_close.set(d, t, bar.prev_close);
            let up = bar
                .limit_up
                .or_else(|| finite(bar.prev_close).map(|p| p * (1.0 + limit_ratio)));
            let down = bar
                .limit_down
                .or_else(|| finite(bar.prev_close).map(|p| p * (1.0 - limit_ratio)));
            panel.limit_up.set(d, t, up.unwrap_or(f64::NAN));
            panel.limit_down.set(d, t, down.unwrap_or(f64::NAN));
            panel.ipo[d * nt + t] = bar.is_ipo_day;
        }
        panel
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn date_index(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    pub fn ticker_index(&self, ticker: &str) -> Option<usize> {
        self.ticker_index.get(ticker).copied()
    }

    pub fn field(&self, field: PanelField) -> &Grid {
        match field {
            PanelField::Open => &self.open,
            PanelField::High => &self.high,
            PanelField::Low => &self.low,
            PanelField::Close => &self.close,
            PanelField::Volume => &self.volume,
            PanelField::PrevClose => &self.prev_close,
        }
    }

    pub fn limit_up(&self, date_idx: usize, ticker_idx: usize) -> f64 {
        self.limit_up.get(date_idx, ticker_idx)
    }

    pub fn limit_down(&self, date_idx: usize, ticker_idx: usize) -> f64 {
        self.limit_down.get(date_idx, ticker_idx)
    }

    pub fn is_ipo_day(&self, date_idx: usize, ticker_idx: usize) -> bool {
        self.ipo[date_idx * self.n_tickers() + ticker_idx]
    }

    /// True when every field of the (date, ticker) cell is missing.
    pub fn cell_absent(&self, date_idx: usize, ticker_idx: usize) -> bool {
        PanelField::ALL.iter().all(|f| self.field(*f).get(date_idx, ticker_idx).is_nan())
    }

    /// Simple daily returns close_t / close_{t-1} − 1; first date missing.
    pub fn daily_returns(&self) -> Grid {
        self.forward_returns_from(1)
            .map(|g| shift_down(&g, 1))
            .unwrap_or_else(|| Grid::missing(self.n_dates(), self.n_tickers()))
    }

    /// Forward close-to-close returns over `horizon` days:
    /// `ret[t][i] = close[t+horizon][i] / close[t][i] − 1`.
    /// Returns `None` when the panel is shorter than the horizon.
    pub fn forward_returns(&self, horizon: usize) -> Grid {
        self.forward_returns_from(horizon)
            .unwrap_or_else(|| Grid::missing(self.n_dates(), self.n_tickers()))
    }

    fn forward_returns_from(&self, horizon: usize) -> Option<Grid> {
        let (nd, nt) = (self.n_dates(), self.n_tickers());
        if horizon == 0 || nd <= horizon {
            return None;
        }
        let mut out = Grid::missing(nd, nt);
        for d in 0..nd - horizon {
            for t in 0..nt {
                let c0 = self.close.get(d, t);
                let c1 = self.close.get(d + horizon, t);
                if c0.is_finite() && c1.is_finite() && c0 > 0.0 {
                    out.set(d, t, c1 / c0 - 1.0);
                }
            }
        }
        Some(out)
    }

    /// Equal-weight universe return between two date indexes (buy and hold
    /// over the window, averaged over tickers with both closes present).
    pub fn universe_return(&self, from_idx: usize, to_idx: usize) -> Option<f64> {
        if to_idx <= from_idx || to_idx >= self.n_dates() {
            return None;
        }
        let mut sum = 0.0;
        let mut n = 0usize;
        for t in 0..self.n_tickers() {
            let c0 = self.close.get(from_idx, t);
            let c1 = self.close.get(to_idx, t);
            if c0.is_finite() && c1.is_finite() && c0 > 0.0 {
                sum += c1 / c0 - 1.0;
                n += 1;
            }
        }
        if n == 0 {
            None
        } else {
            Some(sum / n as f64)
        }
    }

    /// Bitwise equality across axes and every field grid (NaN == NaN).
    pub fn bits_eq(&self, other: &MarketPanel) -> bool {
        self.dates == other.dates
            && self.tickers == other.tickers
            && PanelField::ALL.iter().all(|f| self.field(*f).bits_eq(other.field(*f)))
            && self.limit_up.bits_eq(&other.limit_up)
            && self.limit_down.bits_eq(&other.limit_down)
            && self.ipo == other.ipo
    }

    /// Decompose the panel back into bars, one per (date, ticker) cell with
    /// at least one present field. Inverse of [`MarketPanel::from_bars`] for
    /// panels whose limits were supplied explicitly.
    pub fn to_bars(&self) -> Vec<DailyBar> {
        let mut bars = Vec::new();
        for d in 0..self.n_dates() {
            for t in 0..self.n_tickers() {
                if self.cell_absent(d, t) {
                    continue;
                }
                bars.push(DailyBar {
                    date: self.dates[d],
                    ticker: self.tickers[t].clone(),
                    open: self.open.get(d, t),
                    high: self.high.get(d, t),
                    low: self.low.get(d, t),
                    close: self.close.get(d, t),
                    volume: self.volume.get(d, t),
                    prev_close: self.prev_close.get(d, t),
                    limit_up: finite(self.limit_up.get(d, t)),
                    limit_down: finite(self.limit_down.get(d, t)),
                    is_ipo_day: self.is_ipo_day(d, t),
                });
            }
        }
        bars
    }
}

/// Minute bars grouped by (date, ticker), each group sorted by minute index.
#[derive(Debug, Clone, Default)]
pub struct MinutePanel {
    groups: BTreeMap<(NaiveDate, String), Vec<MinuteBar>>,
}

impl MinutePanel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert a bar; returns false (bar dropped) when its (date, ticker,
    /// minute_index) slot is already occupied.
    pub fn insert(&mut self, bar: MinuteBar) -> bool {
        let key = (bar.date, bar.ticker.clone());
        let group = self.groups.entry(key).or_default();
        if group.iter().any(|b| b.minute_index == bar.minute_index) {
            return false;
        }
        let pos = group.partition_point(|b| b.minute_index < bar.minute_index);
        group.insert(pos, bar);
        true
    }

    pub fn bars(&self, date: NaiveDate, ticker: &str) -> Option<&[MinuteBar]> {
        self.groups.get(&(date, ticker.to_string())).map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(NaiveDate, String), &Vec<MinuteBar>)> {
        self.groups.iter()
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn shift_down(grid: &Grid, k: usize) -> Grid {
    let (nd, nt) = (grid.n_dates(), grid.n_tickers());
    let mut out = Grid::missing(nd, nt);
    for d in k..nd {
        for t in 0..nt {
            out.set(d, t, grid.get(d - k, t));
        }
    }
    out
}
