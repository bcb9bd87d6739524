//! Slot-rotation portfolio execution.
//!
//! Capital is split across H independent slots; on day ordinal t only slot
//! `t mod H` rebalances while the rest mark to market, which caps average
//! daily turnover near 1/H. Orders fill at the 30-minute morning VWAP (or at
//! the close in frictionless mode) under limit-move and IPO constraints with
//! a per-side proportional fee. Deferred sells are retried every subsequent
//! day until they execute.

use crate::data::{MarketPanel, MinuteBar, MinutePanel, PanelField};
use crate::dsl::FactorTensor;
use crate::linear::{predict_returns, LinearModel};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("no liquidity: total minute volume is zero")]
    NoLiquidity,
    #[error("price unavailable for {ticker} on {date}")]
    PriceUnavailable { ticker: String, date: NaiveDate },
    #[error("invalid execution config: {0}")]
    InvalidConfig(String),
    #[error("backtest range [{0}, {1}) invalid for panel of {2} dates (start must leave one prior day)")]
    BadRange(usize, usize, usize),
    #[error("equity curve needs at least 2 points")]
    CurveTooShort,
}

/// How orders are priced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PriceMode {
    /// 30-minute morning VWAP from the minute panel.
    #[default]
    Vwap,
    /// Daily close; used by the frictionless reward mode.
    Close,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecutionConfig {
    /// Holding period = number of slots.
    pub h: usize,
    /// Stocks per slot.
    pub top_n: usize,
    /// Per-side proportional fee.
    pub fee_rate: f64,
    /// Minutes in the execution window (1..=30 are used).
    pub vwap_window: usize,
    pub price_mode: PriceMode,
    pub initial_capital: f64,
}

impl Default for ExecutionConfig {
    fn default() -> Self {
        ExecutionConfig {
            h: 5,
            top_n: 10,
            fee_rate: 0.001,
            vwap_window: 30,
            price_mode: PriceMode::Vwap,
            initial_capital: 1_000_000.0,
        }
    }
}

impl ExecutionConfig {
    pub fn validate(&self) -> Result<(), ExecError> {
        if self.h < 1 {
            return Err(ExecError::InvalidConfig("h must be >= 1".into()));
        }
        if self.top_n < 1 {
            return Err(ExecError::InvalidConfig("top_n must be >= 1".into()));
        }
        if !(0.0..0.05).contains(&self.fee_rate) {
            return Err(ExecError::InvalidConfig("fee_rate must be in [0, 0.05)".into()));
        }
        if self.initial_capital <= 0.0 {
            return Err(ExecError::InvalidConfig("initial_capital must be > 0".into()));
        }
        Ok(())
    }
}

/// Day ordinal to rebalancing slot.
pub fn slot_index(t: usize, h: usize) -> usize {
    t % h
}

/// Volume-weighted average price over the available minute bars.
pub fn compute_vwap(bars: &[MinuteBar]) -> Result<f64, ExecError> {
    let mut notional = 0.0;
    let mut volume = 0.0;
    for bar in bars.iter().filter(|b| (1..=30).contains(&b.minute_index)) {
        notional += bar.price * bar.volume;
        volume += bar.volume;
    }
    if volume <= 0.0 {
        return Err(ExecError::NoLiquidity);
    }
    Ok(notional / volume)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Buy,
    Sell,
}

/// Why an order did not execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    LimitUp,
    LimitDown,
    IpoDay,
    NoLiquidity,
}

/// One trade-log line. `reason` is set exactly when the order was rejected
/// or deferred instead of executed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TradeRecord {
    pub date: NaiveDate,
    pub ticker: String,
    pub side: Side,
    pub shares: f64,
    pub price: f64,
    pub fee: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<RejectReason>,
}

impl TradeRecord {
    pub fn executed(&self) -> bool {
        self.reason.is_none()
    }
}

/// One sub-portfolio. Share counts stay nonnegative; `pending_sells` holds
/// positions whose exit was deferred by a constraint.
#[derive(Debug, Clone)]
pub struct SlotPortfolio {
    pub slot_id: usize,
    pub holdings: BTreeMap<usize, f64>,
    pub cash: f64,
    pub last_rebalance_date: Option<NaiveDate>,
    pub pending_sells: Vec<usize>,
}

impl SlotPortfolio {
    pub fn new(slot_id: usize, cash: f64) -> Self {
        SlotPortfolio {
            slot_id,
            holdings: BTreeMap::new(),
            cash,
            last_rebalance_date: None,
            pending_sells: Vec::new(),
        }
    }

    /// Mark-to-market value given a price lookup.
    pub fn value(&self, price_of: impl Fn(usize) -> f64) -> f64 {
        self.cash + self.holdings.iter().map(|(t, sh)| sh * price_of(*t)).sum::<f64>()
    }
}

/// Daily net value curve (nv[0] = 1.0 before the first day), per-day returns,
/// and the full trade log.
#[derive(Debug, Clone)]
pub struct EquityCurve {
    pub dates: Vec<NaiveDate>,
    /// Length dates.len() + 1; nv[i + 1] = nv[i] * (1 + returns[i]).
    pub nv: Vec<f64>,
    pub returns: Vec<f64>,
    pub trades: Vec<TradeRecord>,
    /// Mean over days of (buy notional + sell notional) / 2 / prior value.
    pub avg_daily_turnover: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Metrics {
    /// Cumulative return nv_end − 1.
    pub cr: f64,
    /// Annualized return (1 + CR)^(252 / n_days) − 1.
    pub ar: f64,
    /// Annualized Sharpe (risk-free 0); missing when return std is zero.
    pub sr: Option<f64>,
    /// Maximum drawdown as a positive fraction.
    pub mdd: f64,
}

/// CR, AR, SR, MDD from a curve. SR uses sample std and sqrt(252).
pub fn compute_metrics(curve: &EquityCurve) -> Result<Metrics, ExecError> {
    if curve.nv.len() < 2 {
        return Err(ExecError::CurveTooShort);
    }
    let n_days = curve.returns.len() as f64;
    let cr = curve.nv.last().unwrap() - 1.0;
    let ar = (1.0 + cr).powf(252.0 / n_days) - 1.0;
    let mean = curve.returns.iter().sum::<f64>() / n_days;
    let sr = if curve.returns.len() < 2 {
        None
    } else {
        let var = curve.returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>()
            / (n_days - 1.0);
        let std = var.sqrt();
        if std == 0.0 {
            None
        } else {
            Some(mean / std * 252.0_f64.sqrt())
        }
    };
    let mut peak = f64::MIN;
    let mut mdd = 0.0_f64;
    for &v in &curve.nv {
        peak = peak.max(v);
        mdd = mdd.max((peak - v) / peak);
    }
    Ok(Metrics { cr, ar, sr, mdd })
}

/// Rank tickers by predicted score, descending, ties broken by ticker index.
/// A fully degenerate cross-section (every live score identical — e.g. an
/// empty selection scoring beta0 everywhere) carries no information and
/// yields an empty target list.
pub fn rank_candidates(scores: &[f64], top_n: usize) -> Vec<usize> {
    let mut live: Vec<(usize, f64)> =
        scores.iter().enumerate().filter(|(_, s)| s.is_finite()).map(|(t, s)| (t, *s)).collect();
    if live.is_empty() {
        return Vec::new();
    }
    let max = live.iter().map(|(_, s)| *s).fold(f64::MIN, f64::max);
    let min = live.iter().map(|(_, s)| *s).fold(f64::MAX, f64::min);
    if max == min {
        return Vec::new();
    }
    live.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite scores").then(a.0.cmp(&b.0)));
    live.truncate(top_n);
    live.into_iter().map(|(t, _)| t).collect()
}

/// Everything the engine needs to price and constrain one trading day.
pub struct DayMarket<'a> {
    pub panel: &'a MarketPanel,
    pub minutes: &'a MinutePanel,
    pub date_idx: usize,
    pub price_mode: PriceMode,
}

impl<'a> DayMarket<'a> {
    pub fn date(&self) -> NaiveDate {
        self.panel.dates()[self.date_idx]
    }

    /// Execution price for a ticker today.
    pub fn exec_price(&self, ticker_idx: usize) -> Result<f64, ExecError> {
        match self.price_mode {
            PriceMode::Vwap => {
                let bars = self
                    .minutes
                    .bars(self.date(), &self.panel.tickers()[ticker_idx])
                    .ok_or(ExecError::NoLiquidity)?;
                compute_vwap(bars)
            }
            PriceMode::Close => {
                let close = self.panel.field(PanelField::Close).get(self.date_idx, ticker_idx);
                if close.is_finite() {
                    Ok(close)
                } else {
                    Err(ExecError::PriceUnavailable {
                        ticker: self.panel.tickers()[ticker_idx].clone(),
                        date: self.date(),
                    })
                }
            }
        }
    }

    /// Constraint check for an order at `price`. Limit detection uses the
    /// execution price itself: a buy at or above limit-up (or a sell at or
    /// below limit-down) is blocked.
    pub fn order_block(&self, ticker_idx: usize, side: Side, price: f64) -> Option<RejectReason> {
        if self.panel.is_ipo_day(self.date_idx, ticker_idx) {
            return Some(RejectReason::IpoDay);
        }
        match side {
            Side::Buy => {
                let up = self.panel.limit_up(self.date_idx, ticker_idx);
                if up.is_finite() && price >= up {
                    return Some(RejectReason::LimitUp);
                }
            }
            Side::Sell => {
                let down = self.panel.limit_down(self.date_idx, ticker_idx);
                if down.is_finite() && price <= down {
                    return Some(RejectReason::LimitDown);
                }
            }
        }
        None
    }
}

/// Result of one slot rebalance.
#[derive(Debug, Default)]
pub struct RebalanceOutcome {
    pub trades: Vec<TradeRecord>,
    pub buy_notional: f64,
    pub sell_notional: f64,
    pub fees: f64,
}

fn try_sell_all(
    slot: &mut SlotPortfolio,
    ticker_idx: usize,
    market: &DayMarket<'_>,
    fee_rate: f64,
    out: &mut RebalanceOutcome,
) -> bool {
    let shares = match slot.holdings.get(&ticker_idx) {
        Some(s) => *s,
        None => return true,
    };
    let ticker = market.panel.tickers()[ticker_idx].clone();
    let price = match market.exec_price(ticker_idx) {
        Ok(p) => p,
        Err(_) => {
            out.trades.push(TradeRecord {
                date: market.date(),
                ticker,
                side: Side::Sell,
                shares: 0.0,
                price: f64::NAN,
                fee: 0.0,
                reason: Some(RejectReason::NoLiquidity),
            });
            return false;
        }
    };
    if let Some(reason) = market.order_block(ticker_idx, Side::Sell, price) {
        out.trades.push(TradeRecord {
            date: market.date(),
            ticker,
            side: Side::Sell,
            shares: 0.0,
            price,
            fee: 0.0,
            reason: Some(reason),
        });
        return false;
    }
    let notional = shares * price;
    let fee = notional * fee_rate;
    slot.cash += notional - fee;
    slot.holdings.remove(&ticker_idx);
    out.sell_notional += notional;
    out.fees += fee;
    out.trades.push(TradeRecord {
        date: market.date(),
        ticker,
        side: Side::Sell,
        shares,
        price,
        fee,
        reason: None,
    });
    true
}

/// Retry previously deferred sells; positions that still cannot exit stay
/// pending.
pub fn retry_pending_sells(
    slot: &mut SlotPortfolio,
    market: &DayMarket<'_>,
    fee_rate: f64,
) -> RebalanceOutcome {
    let mut out = RebalanceOutcome::default();
    let pending = std::mem::take(&mut slot.pending_sells);
    for ticker_idx in pending {
        if !try_sell_all(slot, ticker_idx, market, fee_rate, &mut out) {
            slot.pending_sells.push(ticker_idx);
        }
    }
    out
}

/// Rebalance one slot toward the ranked target list: sell every non-target
/// holding, then spread the remaining cash equally across targets. Rejected
/// buys leave their tranche in cash; blocked sells defer.
pub fn rebalance_slot(
    slot: &mut SlotPortfolio,
    targets: &[usize],
    market: &DayMarket<'_>,
    config: &ExecutionConfig,
) -> RebalanceOutcome {
    let mut out = RebalanceOutcome::default();

    // A pending exit that re-enters the target list is simply kept.
    slot.pending_sells.retain(|t| !targets.contains(t));

    // Zero-turnover short circuit: identical holdings set means nothing to do.
    let held: Vec<usize> = slot.holdings.keys().copied().collect();
    let mut sorted_targets = targets.to_vec();
    sorted_targets.sort_unstable();
    if !targets.is_empty() && held == sorted_targets && slot.pending_sells.is_empty() {
        slot.last_rebalance_date = Some(market.date());
        return out;
    }

    let to_sell: Vec<usize> =
        slot.holdings.keys().copied().filter(|t| !targets.contains(t)).collect();
    for ticker_idx in to_sell {
        if !try_sell_all(slot, ticker_idx, market, config.fee_rate, &mut out)
            && !slot.pending_sells.contains(&ticker_idx)
        {
            slot.pending_sells.push(ticker_idx);
        }
    }

    if !targets.is_empty() {
        let tranche = slot.cash / targets.len() as f64;
        for &ticker_idx in targets {
            let ticker = market.panel.tickers()[ticker_idx].clone();
            let price = match market.exec_price(ticker_idx) {
                Ok(p) => p,
                Err(_) => {
                    out.trades.push(TradeRecord {
                        date: market.date(),
                        ticker,
                        side: Side::Buy,
                        shares: 0.0,
                        price: f64::NAN,
                        fee: 0.0,
                        reason: Some(RejectReason::NoLiquidity),
                    });
                    continue;
                }
            };
            if let Some(reason) = market.order_block(ticker_idx, Side::Buy, price) {
                out.trades.push(TradeRecord {
                    date: market.date(),
                    ticker,
                    side: Side::Buy,
                    shares: 0.0,
                    price,
                    fee: 0.0,
                    reason: Some(reason),
                });
                continue;
            }
            let shares = tranche / (price * (1.0 + config.fee_rate));
            if shares <= 0.0 {
                continue;
            }
            let notional = shares * price;
            let fee = notional * config.fee_rate;
            slot.cash -= notional + fee;
            *slot.holdings.entry(ticker_idx).or_insert(0.0) += shares;
            out.buy_notional += notional;
            out.fees += fee;
            out.trades.push(TradeRecord {
                date: market.date(),
                ticker,
                side: Side::Buy,
                shares,
                price,
                fee,
                reason: None,
            });
        }
    }
    slot.last_rebalance_date = Some(market.date());
    out
}

/// Full slot-rotation backtest over panel date indexes `range` (half-open).
/// `policy` maps a date index to the active factor selection A_t; scoring
/// uses the previous day's factor values through the frozen model.
pub fn run_backtest(
    panel: &MarketPanel,
    minutes: &MinutePanel,
    tensor: &FactorTensor,
    model: &LinearModel,
    policy: &mut dyn FnMut(usize) -> Vec<String>,
    config: &ExecutionConfig,
    range: std::ops::Range<usize>,
) -> Result<EquityCurve, ExecError> {
    config.validate()?;
    if range.start < 1 || range.end > panel.n_dates() || range.start >= range.end {
        return Err(ExecError::BadRange(range.start, range.end, panel.n_dates()));
    }

    let nt = panel.n_tickers();
    let mut slots: Vec<SlotPortfolio> = (0..config.h)
        .map(|k| SlotPortfolio::new(k, config.initial_capital / config.h as f64))
        .collect();

    // Last seen close per ticker for mark-to-market carry-forward.
    let mut marks: Vec<f64> =
        (0..nt).map(|t| panel.field(PanelField::Close).get(range.start - 1, t)).collect();

    let mut dates = Vec::with_capacity(range.len());
    let mut nv = Vec::with_capacity(range.len() + 1);
    nv.push(1.0);
    let mut returns = Vec::with_capacity(range.len());
    let mut trades = Vec::new();
    let mut turnover_sum = 0.0;
    let mut prev_value = config.initial_capital;

    for (ordinal, date_idx) in range.clone().enumerate() {
        let market = DayMarket { panel, minutes, date_idx, price_mode: config.price_mode };

        let mut day_buy = 0.0;
        let mut day_sell = 0.0;

        for slot in slots.iter_mut() {
            let out = retry_pending_sells(slot, &market, config.fee_rate);
            day_sell += out.sell_notional;
            trades.extend(out.trades);
        }

        let k = slot_index(ordinal, config.h);
        let selection = policy(date_idx);
        let scores = predict_returns(model, &selection, &tensor.cross_section(date_idx - 1));
        let targets = rank_candidates(&scores, config.top_n);
        let out = rebalance_slot(&mut slots[k], &targets, &market, config);
        day_buy += out.buy_notional;
        day_sell += out.sell_notional;
        trades.extend(out.trades);

        // Mark to market at today's close.
        for t in 0..nt {
            let c = panel.field(PanelField::Close).get(date_idx, t);
            if c.is_finite() {
                marks[t] = c;
            }
        }
        let total: f64 = slots.iter().map(|s| s.value(|t| marks[t])).sum();
        let r = total / prev_value - 1.0;
        turnover_sum += (day_buy + day_sell) / 2.0 / prev_value;
        prev_value = total;
        returns.push(r);
        nv.push(nv.last().unwrap() * (1.0 + r));
        dates.push(market.date());
    }

    Ok(EquityCurve {
        dates,
        nv,
        returns,
        trades,
        avg_daily_turnover: turnover_sum / range.len() as f64,
    })
}

/// Serialize the curve as JSON lines: one record per day.
pub fn equity_jsonl(curve: &EquityCurve) -> String {
    let mut out = String::new();
    for (i, date) in curve.dates.iter().enumerate() {
        let record = serde_json::json!({
            "date": date.to_string(),
            "nv": curve.nv[i + 1],
            "ret": curve.returns[i],
        });
        out.push_str(&record.to_string());
        out.push('\n');
    }
    out
}

/// Serialize the trade log as JSON lines.
pub fn trades_jsonl(curve: &EquityCurve) -> String {
    let mut out = String::new();
    for trade in &curve.trades {
        out.push_str(&serde_json::to_string(trade).expect("trade serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests;
