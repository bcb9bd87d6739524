//! Cross-sectional evaluation of factor ASTs over market panels.
//!
//! Evaluation is a pure function of (expr, panel, date). Missing inputs
//! propagate: any NaN operand of a pointwise op yields NaN, a NaN anywhere in
//! a rolling window yields NaN, and cross-sectional operators work over the
//! non-missing subset of each date. Non-finite intermediate results (division
//! by zero, log of a nonpositive value) are demoted to missing rather than
//! left as infinities.

use super::{BinOp, Builtin, FactorExpr, FieldRef};
use crate::data::{Grid, MarketPanel, PanelField};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("date {0} not present in panel")]
    DateNotInPanel(chrono::NaiveDate),
    #[error("insufficient history: expression needs {required} prior day(s), date index {date_idx} available")]
    InsufficientHistory { required: usize, date_idx: usize },
}

/// Largest number of prior trading days the expression reaches back.
pub fn max_lookback(expr: &FactorExpr) -> usize {
    match expr {
        FactorExpr::Field(FieldRef::Returns) => 1,
        FactorExpr::Field(_) | FactorExpr::Literal(_) => 0,
        FactorExpr::Neg(inner) => max_lookback(inner),
        FactorExpr::Binary { lhs, rhs, .. } => max_lookback(lhs).max(max_lookback(rhs)),
        FactorExpr::Ternary { cond, then, otherwise } => max_lookback(cond)
            .max(max_lookback(then))
            .max(max_lookback(otherwise)),
        FactorExpr::Call { func, args, window } => {
            let inner = args.iter().map(max_lookback).max().unwrap_or(0);
            let w = window.unwrap_or(0);
            match func {
                Builtin::Delay | Builtin::Delta => inner + w,
                Builtin::TsSum
                | Builtin::TsMean
                | Builtin::TsMin
                | Builtin::TsMax
                | Builtin::TsRank
                | Builtin::TsArgMax
                | Builtin::TsArgMin
                | Builtin::Stddev
                | Builtin::Correlation
                | Builtin::Covariance
                | Builtin::DecayLinear
                | Builtin::Adv => inner + w.saturating_sub(1),
                _ => inner,
            }
        }
    }
}

/// Evaluate the expression for one date, returning one value per ticker in
/// panel ticker order (NaN marks missing).
pub fn evaluate_alpha(
    expr: &FactorExpr,
    panel: &MarketPanel,
    date: chrono::NaiveDate,
) -> Result<Vec<f64>, EvalError> {
    let date_idx = panel.date_index(date).ok_or(EvalError::DateNotInPanel(date))?;
    let required = max_lookback(expr);
    if date_idx < required {
        return Err(EvalError::InsufficientHistory { required, date_idx });
    }
    let grid = evaluate_matrix(expr, panel);
    Ok(grid.row(date_idx).to_vec())
}

/// Evaluate the expression over every date of the panel at once. Rows before
/// the expression's lookback come out all-missing.
pub fn evaluate_matrix(expr: &FactorExpr, panel: &MarketPanel) -> Grid {
    let ctx = Ctx { panel };
    ctx.eval(expr)
}

struct Ctx<'a> {
    panel: &'a MarketPanel,
}

impl<'a> Ctx<'a> {
    fn shape(&self) -> (usize, usize) {
        (self.panel.n_dates(), self.panel.n_tickers())
    }

    fn eval(&self, expr: &FactorExpr) -> Grid {
        match expr {
            FactorExpr::Field(field) => self.field(*field),
            FactorExpr::Literal(v) => {
                let (nd, nt) = self.shape();
                Grid::filled(nd, nt, *v)
            }
            FactorExpr::Neg(inner) => map1(&self.eval(inner), |v| -v),
            FactorExpr::Binary { op, lhs, rhs } => {
                let a = self.eval(lhs);
                let b = self.eval(rhs);
                map2(&a, &b, binop_fn(*op))
            }
            FactorExpr::Ternary { cond, then, otherwise } => {
                let c = self.eval(cond);
                let a = self.eval(then);
                let b = self.eval(otherwise);
                let (nd, nt) = self.shape();
                let mut out = Grid::missing(nd, nt);
                for d in 0..nd {
                    for t in 0..nt {
                        let cv = c.get(d, t);
                        if cv.is_nan() {
                            continue;
                        }
                        out.set(d, t, if cv != 0.0 { a.get(d, t) } else { b.get(d, t) });
                    }
                }
                out
            }
            FactorExpr::Call { func, args, window } => self.call(*func, args, *window),
        }
    }

    fn field(&self, field: FieldRef) -> Grid {
        let panel = self.panel;
        match field {
            FieldRef::Open => panel.field(PanelField::Open).clone(),
            FieldRef::High => panel.field(PanelField::High).clone(),
            FieldRef::Low => panel.field(PanelField::Low).clone(),
            FieldRef::Close => panel.field(PanelField::Close).clone(),
            FieldRef::Volume => panel.field(PanelField::Volume).clone(),
            FieldRef::Vwap => {
                let h = panel.field(PanelField::High);
                let l = panel.field(PanelField::Low);
                let c = panel.field(PanelField::Close);
                let (nd, nt) = self.shape();
                let mut out = Grid::missing(nd, nt);
                for d in 0..nd {
                    for t in 0..nt {
                        out.set(d, t, sanitize((h.get(d, t) + l.get(d, t) + c.get(d, t)) / 3.0));
                    }
                }
                out
            }
            FieldRef::Returns => panel.daily_returns(),
        }
    }

    fn call(&self, func: Builtin, args: &[FactorExpr], window: Option<usize>) -> Grid {
        match func {
            Builtin::Rank => cross_sectional_rank(&self.eval(&args[0])),
            Builtin::Scale => cross_sectional_scale(&self.eval(&args[0])),
            Builtin::Abs => map1(&self.eval(&args[0]), f64::abs),
            Builtin::Log => map1(&self.eval(&args[0]), f64::ln),
            Builtin::Sign => map1(&self.eval(&args[0]), signum_zero),
            Builtin::Min => map2(&self.eval(&args[0]), &self.eval(&args[1]), f64::min),
            Builtin::Max => map2(&self.eval(&args[0]), &self.eval(&args[1]), f64::max),
            Builtin::SignedPower => {
                let exp = match args[1] {
                    FactorExpr::Literal(v) => v,
                    _ => unreachable!("parser enforces literal exponent"),
                };
                map1(&self.eval(&args[0]), move |v| signum_zero(v) * v.abs().powf(exp))
            }
            Builtin::Delay => shift(&self.eval(&args[0]), window.unwrap()),
            Builtin::Delta => {
                let x = self.eval(&args[0]);
                let lag = shift(&x, window.unwrap());
                map2(&x, &lag, |a, b| a - b)
            }
            Builtin::TsSum => rolling(&self.eval(&args[0]), window.unwrap(), |w| w.iter().sum()),
            Builtin::TsMean => rolling(&self.eval(&args[0]), window.unwrap(), |w| {
                w.iter().sum::<f64>() / w.len() as f64
            }),
            Builtin::TsMin => {
                rolling(&self.eval(&args[0]), window.unwrap(), |w| w.iter().copied().fold(f64::INFINITY, f64::min))
            }
            Builtin::TsMax => {
                rolling(&self.eval(&args[0]), window.unwrap(), |w| w.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            }
            Builtin::TsRank => rolling(&self.eval(&args[0]), window.unwrap(), |w| {
                let last = *w.last().unwrap();
                let below = w.iter().filter(|v| **v < last).count() as f64;
                let ties = w.iter().filter(|v| **v == last).count() as f64;
                // Average rank of the newest value, scaled into (0, 1].
                (below + (ties + 1.0) / 2.0) / w.len() as f64
            }),
            Builtin::TsArgMax => rolling(&self.eval(&args[0]), window.unwrap(), |w| argext(w, true)),
            Builtin::TsArgMin => rolling(&self.eval(&args[0]), window.unwrap(), |w| argext(w, false)),
            Builtin::Stddev => rolling(&self.eval(&args[0]), window.unwrap(), sample_std),
            Builtin::DecayLinear => rolling(&self.eval(&args[0]), window.unwrap(), |w| {
                let denom = (w.len() * (w.len() + 1)) as f64 / 2.0;
                w.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum::<f64>() / denom
            }),
            Builtin::Correlation => {
                rolling2(&self.eval(&args[0]), &self.eval(&args[1]), window.unwrap(), pearson)
            }
            Builtin::Covariance => {
                rolling2(&self.eval(&args[0]), &self.eval(&args[1]), window.unwrap(), sample_cov)
            }
            Builtin::Adv => {
                let volume = self.field(FieldRef::Volume);
                let vwap = self.field(FieldRef::Vwap);
                let dollar = map2(&volume, &vwap, |v, p| v * p);
                rolling(&dollar, window.unwrap(), |w| w.iter().sum::<f64>() / w.len() as f64)
            }
        }
    }
}

fn sanitize(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::NAN
    }
}

fn signum_zero(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        // Preserves NaN through the arithmetic below.
        v * 0.0
    }
}

fn binop_fn(op: BinOp) -> impl Fn(f64, f64) -> f64 + Copy {
    move |a, b| match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => a / b,
        BinOp::Pow => a.powf(b),
        BinOp::Lt => cmp(a, b, |o| o == std::cmp::Ordering::Less),
        BinOp::Le => cmp(a, b, |o| o != std::cmp::Ordering::Greater),
        BinOp::Gt => cmp(a, b, |o| o == std::cmp::Ordering::Greater),
        BinOp::Ge => cmp(a, b, |o| o != std::cmp::Ordering::Less),
        BinOp::Eq => cmp(a, b, |o| o == std::cmp::Ordering::Equal),
        BinOp::Ne => cmp(a, b, |o| o != std::cmp::Ordering::Equal),
        BinOp::And => bool_to(a != 0.0 && b != 0.0),
        BinOp::Or => bool_to(a != 0.0 || b != 0.0),
    }
}

fn cmp(a: f64, b: f64, f: impl Fn(std::cmp::Ordering) -> bool) -> f64 {
    match a.partial_cmp(&b) {
        Some(ord) => bool_to(f(ord)),
        None => f64::NAN,
    }
}

fn bool_to(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn map1(grid: &Grid, f: impl Fn(f64) -> f64) -> Grid {
    let (nd, nt) = (grid.n_dates(), grid.n_tickers());
    let mut out = Grid::missing(nd, nt);
    for d in 0..nd {
        for t in 0..nt {
            let v = grid.get(d, t);
            if !v.is_nan() {
                out.set(d, t, sanitize(f(v)));
            }
        }
    }
    out
}

fn map2(a: &Grid, b: &Grid, f: impl Fn(f64, f64) -> f64) -> Grid {
    let (nd, nt) = (a.n_dates(), a.n_tickers());
    let mut out = Grid::missing(nd, nt);
    for d in 0..nd {
        for t in 0..nt {
            let (x, y) = (a.get(d, t), b.get(d, t));
            if !x.is_nan() && !y.is_nan() {
                out.set(d, t, sanitize(f(x, y)));
            }
        }
    }
    out
}

fn shift(grid: &Grid, k: usize) -> Grid {
    let (nd, nt) = (grid.n_dates(), grid.n_tickers());
    let mut out = Grid::missing(nd, nt);
    for d in k..nd {
        for t in 0..nt {
            out.set(d, t, grid.get(d - k, t));
        }
    }
    out
}

/// Apply `f` to each complete, NaN-free trailing window of length `w`,
/// oldest value first.
fn rolling(grid: &Grid, w: usize, f: impl Fn(&[f64]) -> f64) -> Grid {
    let (nd, nt) = (grid.n_dates(), grid.n_tickers());
    let mut out = Grid::missing(nd, nt);
    if w == 0 {
        return out;
    }
    let mut buf = vec![0.0; w];
    for t in 0..nt {
        for d in (w - 1)..nd {
            let mut ok = true;
            for (i, slot) in buf.iter_mut().enumerate() {
                let v = grid.get(d + 1 - w + i, t);
                if v.is_nan() {
                    ok = false;
                    break;
                }
                *slot = v;
            }
            if ok {
                out.set(d, t, sanitize(f(&buf)));
            }
        }
    }
    out
}

fn rolling2(a: &Grid, b: &Grid, w: usize, f: impl Fn(&[f64], &[f64]) -> f64) -> Grid {
    let (nd, nt) = (a.n_dates(), a.n_tickers());
    let mut out = Grid::missing(nd, nt);
    if w == 0 {
        return out;
    }
    let mut xs = vec![0.0; w];
    let mut ys = vec![0.0; w];
    for t in 0..nt {
        for d in (w - 1)..nd {
            let mut ok = true;
            for i in 0..w {
                let x = a.get(d + 1 - w + i, t);
                let y = b.get(d + 1 - w + i, t);
                if x.is_nan() || y.is_nan() {
                    ok = false;
                    break;
                }
                xs[i] = x;
                ys[i] = y;
            }
            if ok {
                out.set(d, t, sanitize(f(&xs, &ys)));
            }
        }
    }
    out
}

/// 1-based position (oldest = 1) of the first maximum (or minimum) in the window.
fn argext(w: &[f64], max: bool) -> f64 {
    let mut best = 0usize;
    for (i, v) in w.iter().enumerate() {
        let better = if max { *v > w[best] } else { *v < w[best] };
        if better {
            best = i;
        }
    }
    (best + 1) as f64
}

fn sample_std(w: &[f64]) -> f64 {
    if w.len() < 2 {
        return f64::NAN;
    }
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let ss = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (ss / (w.len() - 1) as f64).sqrt()
}

fn sample_cov(xs: &[f64], ys: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let s: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    s / (xs.len() - 1) as f64
}

/// Pearson correlation; a window with zero variance on either side yields
/// missing rather than a fabricated 0.
fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
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
        return f64::NAN;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Average-tie ranks scaled to (0, 1] over the non-missing cross-section.
fn cross_sectional_rank(grid: &Grid) -> Grid {
    let (nd, nt) = (grid.n_dates(), grid.n_tickers());
    let mut out = Grid::missing(nd, nt);
    let mut present: Vec<(usize, f64)> = Vec::with_capacity(nt);
    for d in 0..nd {
        present.clear();
        for t in 0..nt {
            let v = grid.get(d, t);
            if !v.is_nan() {
                present.push((t, v));
            }
        }
        if present.is_empty() {
            continue;
        }
        present.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("NaN filtered"));
        let n = present.len() as f64;
        let mut i = 0usize;
        while i < present.len() {
            let mut j = i;
            while j + 1 < present.len() && present[j + 1].1 == present[i].1 {
                j += 1;
            }
            // 1-based positions i+1..=j+1 share the average rank.
            let avg = (i + 1 + j + 1) as f64 / 2.0;
            for k in i..=j {
                out.set(d, present[k].0, avg / n);
            }
            i = j + 1;
        }
    }
    out
}

/// Rescale each date's cross-section so that its absolute values sum to 1.
fn cross_sectional_scale(grid: &Grid) -> Grid {
    let (nd, nt) = (grid.n_dates(), grid.n_tickers());
    let mut out = Grid::missing(nd, nt);
    for d in 0..nd {
        let denom: f64 = grid.row(d).iter().filter(|v| !v.is_nan()).map(|v| v.abs()).sum();
        if denom == 0.0 {
            continue;
        }
        for t in 0..nt {
            let v = grid.get(d, t);
            if !v.is_nan() {
                out.set(d, t, v / denom);
            }
        }
    }
    out
}
