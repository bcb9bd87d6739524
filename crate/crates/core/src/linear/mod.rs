//! Fixed linear scorer and factor-quality statistics.
//!
//! The scorer is fit once on a historical window by pooled OLS (with a ridge
//! fallback for singular designs) and then frozen: nothing here re-estimates
//! during screening or backtests. Factor values are standardized in two
//! steps — a cross-sectional z-score per date, then the pooled fit-window
//! (mean, std) that the model stores and reuses at prediction time.

use crate::data::{Grid, MarketPanel};
use crate::dsl::{FactorCrossSection, FactorTensor};
use crate::numfmt::format_sig;
use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeSet;
use thiserror::Error;

const MODEL_SIG_DIGITS: usize = 12;
/// Condition-number threshold that flips the normal equations to ridge.
const RIDGE_CONDITION_LIMIT: f64 = 1e10;

#[derive(Debug, Error)]
pub enum LinearError {
    #[error("empty fit window or no usable observations")]
    EmptyWindow,
    #[error("window [{0}, {1}) outside data range")]
    WindowOutOfRange(usize, usize),
    #[error("normal equations unsolvable even with ridge fallback")]
    Unsolvable,
    #[error("malformed model record: {0}")]
    Malformed(String),
}

/// One fitted coefficient with the pooled standardization stats it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorCoef {
    pub id: String,
    pub beta: f64,
    pub pool_mean: f64,
    pub pool_std: f64,
}

/// Frozen linear scorer: intercept plus per-factor coefficients over
/// standardized factor values.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub beta0: f64,
    pub coefs: Vec<FactorCoef>,
    pub fit_window: (NaiveDate, NaiveDate),
}

impl LinearModel {
    pub fn coef(&self, id: &str) -> Option<&FactorCoef> {
        self.coefs.iter().find(|c| c.id == id)
    }

    /// Serialize as a plain text record at 12 significant digits; the format
    /// round-trips exactly through [`LinearModel::from_text`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("linear_model v1\n");
        out.push_str(&format!("fit_window {} {}\n", self.fit_window.0, self.fit_window.1));
        out.push_str(&format!("beta0 {}\n", format_sig(self.beta0, MODEL_SIG_DIGITS)));
        for c in &self.coefs {
            out.push_str(&format!(
                "factor {} beta {} mean {} std {}\n",
                c.id,
                format_sig(c.beta, MODEL_SIG_DIGITS),
                format_sig(c.pool_mean, MODEL_SIG_DIGITS),
                format_sig(c.pool_std, MODEL_SIG_DIGITS),
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, LinearError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| LinearError::Malformed("empty record".into()))?;
        if header.trim() != "linear_model v1" {
            return Err(LinearError::Malformed(format!("unexpected header `{header}`")));
        }
        let mut beta0 = None;
        let mut fit_window = None;
        let mut coefs = Vec::new();
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["fit_window", start, end] => {
                    let s: NaiveDate = start
                        .parse()
                        .map_err(|_| LinearError::Malformed(format!("bad date `{start}`")))?;
                    let e: NaiveDate = end
                        .parse()
                        .map_err(|_| LinearError::Malformed(format!("bad date `{end}`")))?;
                    fit_window = Some((s, e));
                }
                ["beta0", v] => {
                    beta0 = Some(parse_num(v)?);
                }
                ["factor", id, "beta", b, "mean", m, "std", s] => {
                    coefs.push(FactorCoef {
                        id: id.to_string(),
                        beta: parse_num(b)?,
                        pool_mean: parse_num(m)?,
                        pool_std: parse_num(s)?,
                    });
                }
                _ => return Err(LinearError::Malformed(format!("unrecognized line `{line}`"))),
            }
        }
        Ok(LinearModel {
            beta0: beta0.ok_or_else(|| LinearError::Malformed("missing beta0".into()))?,
            coefs,
            fit_window: fit_window
                .ok_or_else(|| LinearError::Malformed("missing fit_window".into()))?,
        })
    }
}

fn parse_num(s: &str) -> Result<f64, LinearError> {
    s.parse().map_err(|_| LinearError::Malformed(format!("bad number `{s}`")))
}

/// Outcome of a fit, including what was dropped and whether ridge kicked in.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: LinearModel,
    pub dropped: Vec<String>,
    pub ridge_used: bool,
    pub n_obs: usize,
}

/// Cross-sectional population z-scores of one slice; NaN cells stay NaN.
/// Degenerate cross-sections (fewer than 2 values or zero spread) come out
/// all-NaN so they never enter a fit pool.
pub fn cross_sectional_zscores(values: &[f64]) -> Vec<f64> {
    let present: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    if present.len() < 2 {
        return vec![f64::NAN; values.len()];
    }
    let mean = present.iter().sum::<f64>() / present.len() as f64;
    let var = present.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / present.len() as f64;
    let std = var.sqrt();
    if std == 0.0 {
        return vec![f64::NAN; values.len()];
    }
    values.iter().map(|v| (v - mean) / std).collect()
}

/// Pooled OLS of forward returns on per-date standardized factor values over
/// `window` (date indexes, half-open). Factors that are all-missing in the
/// window are dropped. Designs with condition number beyond 1e10 get a ridge
/// term `1e-6 * trace / k` on the factor diagonal.
pub fn fit_ols(
    tensor: &FactorTensor,
    forward_returns: &Grid,
    window: std::ops::Range<usize>,
    panel: &MarketPanel,
) -> Result<FitOutcome, LinearError> {
    if window.start >= window.end {
        return Err(LinearError::EmptyWindow);
    }
    if window.end > tensor.n_dates() || forward_returns.n_dates() != tensor.n_dates() {
        return Err(LinearError::WindowOutOfRange(window.start, window.end));
    }
    let nf = tensor.n_factors();
    let nt = tensor.n_tickers();

    // Stage 1: per-date cross-sectional z-scores inside the window.
    let mut staged: Vec<Vec<f64>> = Vec::with_capacity(nf);
    for f in 0..nf {
        let mut grid = Vec::with_capacity(window.len() * nt);
        for d in window.clone() {
            grid.extend(cross_sectional_zscores(tensor.factor_row(f, d)));
        }
        staged.push(grid);
    }

    // Stage 2: pooled stats over the window, stored on the model.
    let mut kept: Vec<usize> = Vec::new();
    let mut dropped = Vec::new();
    let mut pool_stats = Vec::with_capacity(nf);
    for f in 0..nf {
        let present: Vec<f64> = staged[f].iter().copied().filter(|v| !v.is_nan()).collect();
        if present.len() < 2 {
            dropped.push(tensor.factor_ids()[f].clone());
            pool_stats.push((f64::NAN, f64::NAN));
            continue;
        }
        let mean = present.iter().sum::<f64>() / present.len() as f64;
        let var =
            present.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / present.len() as f64;
        let std = var.sqrt();
        if std == 0.0 {
            dropped.push(tensor.factor_ids()[f].clone());
            pool_stats.push((f64::NAN, f64::NAN));
            continue;
        }
        kept.push(f);
        pool_stats.push((mean, std));
    }
    if kept.is_empty() {
        return Err(LinearError::EmptyWindow);
    }

    // Assemble complete rows: forward return plus every kept factor present.
    let k = kept.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for (wi, d) in window.clone().enumerate() {
        for t in 0..nt {
            let y = forward_returns.get(d, t);
            if y.is_nan() {
                continue;
            }
            let mut row = Vec::with_capacity(k + 1);
            row.push(1.0);
            let mut ok = true;
            for &f in &kept {
                let staged_v = staged[f][wi * nt + t];
                if staged_v.is_nan() {
                    ok = false;
                    break;
                }
                let (m, s) = pool_stats[f];
                row.push((staged_v - m) / s);
            }
            if ok {
                rows.push(row);
                ys.push(y);
            }
        }
    }
    let n = rows.len();
    if n < k + 1 {
        return Err(LinearError::EmptyWindow);
    }

    let x = DMatrix::from_fn(n, k + 1, |i, j| rows[i][j]);
    let y = DVector::from_vec(ys);
    let mut a = &x.transpose() * &x;
    let b = &x.transpose() * &y;

    let cond = condition_number(&a);
    let ridge_used = !(cond <= RIDGE_CONDITION_LIMIT);
    if ridge_used {
        let trace_factors: f64 = (1..=k).map(|j| a[(j, j)]).sum();
        let lambda = 1e-6 * trace_factors / k as f64;
        for j in 1..=k {
            a[(j, j)] += lambda;
        }
    }

    let solution = a
        .clone()
        .cholesky()
        .map(|c| c.solve(&b))
        .or_else(|| a.lu().solve(&b))
        .ok_or(LinearError::Unsolvable)?;

    let coefs = kept
        .iter()
        .enumerate()
        .map(|(j, &f)| FactorCoef {
            id: tensor.factor_ids()[f].clone(),
            beta: solution[j + 1],
            pool_mean: pool_stats[f].0,
            pool_std: pool_stats[f].1,
        })
        .collect();

    Ok(FitOutcome {
        model: LinearModel {
            beta0: solution[0],
            coefs,
            fit_window: (panel.dates()[window.start], panel.dates()[window.end - 1]),
        },
        dropped,
        ridge_used,
        n_obs: n,
    })
}

fn condition_number(a: &DMatrix<f64>) -> f64 {
    let svd = a.clone().svd(false, false);
    let max = svd.singular_values.iter().cloned().fold(f64::MIN, f64::max);
    let min = svd.singular_values.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Per-ticker predicted return `beta0 + Σ_{i in selection} beta_i * V_i` with
/// V standardized exactly as at fit time. Unselected coefficients contribute
/// zero; a ticker missing any selected value scores missing. Selected ids
/// without a fitted coefficient (dropped or unknown) contribute nothing.
pub fn predict_returns(
    model: &LinearModel,
    selection: &[String],
    cross: &FactorCrossSection<'_>,
) -> Vec<f64> {
    let nt = cross.n_tickers();
    let selected: BTreeSet<&str> = selection.iter().map(|s| s.as_str()).collect();
    let active: Vec<(&FactorCoef, usize)> = model
        .coefs
        .iter()
        .filter(|c| selected.contains(c.id.as_str()))
        .filter_map(|c| cross.factor_index(&c.id).map(|f| (c, f)))
        .collect();

    let mut scores = vec![model.beta0; nt];
    for (coef, f) in active {
        let z = cross_sectional_zscores(cross.factor_values(f));
        for t in 0..nt {
            if scores[t].is_nan() {
                continue;
            }
            if z[t].is_nan() {
                scores[t] = f64::NAN;
            } else {
                scores[t] += coef.beta * (z[t] - coef.pool_mean) / coef.pool_std;
            }
        }
    }
    scores
}

/// Spearman rank correlation with average-tie ranks over the common
/// non-missing support. `None` with fewer than 3 common points or when
/// either side is constant.
pub fn rank_ic(factor: &[f64], forward: &[f64]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = factor
        .iter()
        .zip(forward)
        .filter(|(a, b)| !a.is_nan() && !b.is_nan())
        .map(|(a, b)| (*a, *b))
        .collect();
    if pairs.len() < 3 {
        return None;
    }
    let xr = average_ranks(pairs.iter().map(|p| p.0));
    let yr = average_ranks(pairs.iter().map(|p| p.1));
    pearson(&xr, &yr)
}

fn average_ranks(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let values: Vec<f64> = values.collect();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|a, b| values[*a].partial_cmp(&values[*b]).expect("no NaN here"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Per-factor quality summary over a backtest window.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FactorPerformance {
    pub factor_id: String,
    /// Mean daily RankIC at the first horizon.
    pub mean_rank_ic: f64,
    /// Sample std of the daily RankIC series at the first horizon.
    pub ic_volatility: f64,
    /// (horizon, mean RankIC) pairs — the decay profile.
    pub decay: Vec<(usize, f64)>,
    /// Compounded top-minus-bottom decile spread at the first horizon.
    pub long_short_cum_return: f64,
    /// Number of dates with a defined RankIC at the first horizon.
    pub n_obs: usize,
    /// False when the factor never produced a usable cross-section.
    pub feasible: bool,
}

/// Backtest every factor of the tensor against forward returns at the given
/// horizons (first horizon drives the headline stats).
pub fn factor_backtest(
    tensor: &FactorTensor,
    panel: &MarketPanel,
    horizons: &[usize],
) -> Vec<FactorPerformance> {
    assert!(!horizons.is_empty(), "at least one horizon required");
    let fwd: Vec<Grid> = horizons.iter().map(|h| panel.forward_returns(*h)).collect();
    let nd = tensor.n_dates();
    let mut out = Vec::with_capacity(tensor.n_factors());
    for f in 0..tensor.n_factors() {
        let mut decay = Vec::with_capacity(horizons.len());
        let mut head_ics: Vec<f64> = Vec::new();
        for (hi, h) in horizons.iter().enumerate() {
            let mut ics = Vec::new();
            for d in 0..nd.saturating_sub(*h) {
                if let Some(ic) = rank_ic(tensor.factor_row(f, d), fwd[hi].row(d)) {
                    ics.push(ic);
                }
            }
            let mean = if ics.is_empty() {
                f64::NAN
            } else {
                ics.iter().sum::<f64>() / ics.len() as f64
            };
            decay.push((*h, mean));
            if hi == 0 {
                head_ics = ics;
            }
        }
        let mean_rank_ic = decay[0].1;
        let ic_volatility = if head_ics.len() < 2 {
            f64::NAN
        } else {
            let m = mean_rank_ic;
            (head_ics.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
                / (head_ics.len() - 1) as f64)
                .sqrt()
        };
        let long_short = decile_long_short(tensor, f, &fwd[0]);
        out.push(FactorPerformance {
            factor_id: tensor.factor_ids()[f].clone(),
            mean_rank_ic,
            ic_volatility,
            decay,
            long_short_cum_return: long_short,
            n_obs: head_ics.len(),
            feasible: !head_ics.is_empty(),
        });
    }
    out
}

/// Compound return of a daily top-decile-minus-bottom-decile spread.
fn decile_long_short(tensor: &FactorTensor, f: usize, fwd: &Grid) -> f64 {
    let mut nav = 1.0;
    let mut traded = false;
    for d in 0..tensor.n_dates() {
        let factor = tensor.factor_row(f, d);
        let mut scored: Vec<(usize, f64)> = factor
            .iter()
            .enumerate()
            .filter(|(t, v)| !v.is_nan() && !fwd.get(d, *t).is_nan())
            .map(|(t, v)| (t, *v))
            .collect();
        if scored.len() < 3 {
            continue;
        }
        scored.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("no NaN"));
        let bucket = (scored.len() as f64 / 10.0).ceil() as usize;
        let bucket = bucket.max(1);
        let bottom: f64 =
            scored[..bucket].iter().map(|(t, _)| fwd.get(d, *t)).sum::<f64>() / bucket as f64;
        let top: f64 = scored[scored.len() - bucket..]
            .iter()
            .map(|(t, _)| fwd.get(d, *t))
            .sum::<f64>()
            / bucket as f64;
        nav *= 1.0 + (top - bottom);
        traded = true;
    }
    if traded {
        nav - 1.0
    } else {
        f64::NAN
    }
}

#[cfg(test)]
mod tests;
