//! Dense factor value tensor: every catalog factor evaluated over every
//! (date, ticker) cell of a panel. Computed once and shared read-only by the
//! linear model, reward pipeline, and baselines.

use super::{evaluate_matrix, max_lookback, FactorCatalog};
use crate::data::MarketPanel;

#[derive(Debug, Clone)]
pub struct FactorTensor {
    factor_ids: Vec<String>,
    n_dates: usize,
    n_tickers: usize,
    /// Layout: [factor][date][ticker].
    values: Vec<f64>,
    lookbacks: Vec<usize>,
}

impl FactorTensor {
    /// Evaluate all catalog factors over the panel.
    pub fn evaluate(catalog: &FactorCatalog, panel: &MarketPanel) -> Self {
        let n_dates = panel.n_dates();
        let n_tickers = panel.n_tickers();
        let mut values = Vec::with_capacity(catalog.len() * n_dates * n_tickers);
        let mut factor_ids = Vec::with_capacity(catalog.len());
        let mut lookbacks = Vec::with_capacity(catalog.len());
        for entry in catalog.iter() {
            let grid = evaluate_matrix(&entry.expr, panel);
            for d in 0..n_dates {
                values.extend_from_slice(grid.row(d));
            }
            factor_ids.push(entry.id.clone());
            lookbacks.push(max_lookback(&entry.expr));
        }
        FactorTensor { factor_ids, n_dates, n_tickers, values, lookbacks }
    }

    pub fn n_factors(&self) -> usize {
        self.factor_ids.len()
    }

    pub fn n_dates(&self) -> usize {
        self.n_dates
    }

    pub fn n_tickers(&self) -> usize {
        self.n_tickers
    }

    pub fn factor_ids(&self) -> &[String] {
        &self.factor_ids
    }

    pub fn factor_index(&self, id: &str) -> Option<usize> {
        self.factor_ids.iter().position(|f| f == id)
    }

    /// Days of history factor `f` needs before its first defined value.
    pub fn lookback(&self, f: usize) -> usize {
        self.lookbacks[f]
    }

    /// Largest lookback across all factors.
    pub fn max_lookback(&self) -> usize {
        self.lookbacks.iter().copied().max().unwrap_or(0)
    }

    #[inline]
    pub fn value(&self, f: usize, d: usize, t: usize) -> f64 {
        self.values[(f * self.n_dates + d) * self.n_tickers + t]
    }

    /// All tickers' values of factor `f` on date `d`.
    pub fn factor_row(&self, f: usize, d: usize) -> &[f64] {
        let start = (f * self.n_dates + d) * self.n_tickers;
        &self.values[start..start + self.n_tickers]
    }

    pub fn cross_section(&self, d: usize) -> FactorCrossSection<'_> {
        FactorCrossSection { tensor: self, date_idx: d }
    }
}

/// Borrowed view of all factor values for one date.
#[derive(Debug, Clone, Copy)]
pub struct FactorCrossSection<'a> {
    tensor: &'a FactorTensor,
    date_idx: usize,
}

impl<'a> FactorCrossSection<'a> {
    pub fn date_idx(&self) -> usize {
        self.date_idx
    }

    pub fn n_tickers(&self) -> usize {
        self.tensor.n_tickers
    }

    pub fn factor_index(&self, id: &str) -> Option<usize> {
        self.tensor.factor_index(id)
    }

    pub fn value(&self, factor_idx: usize, ticker_idx: usize) -> f64 {
        self.tensor.value(factor_idx, self.date_idx, ticker_idx)
    }

    pub fn factor_values(&self, factor_idx: usize) -> &'a [f64] {
        self.tensor.factor_row(factor_idx, self.date_idx)
    }
}
