//! Context-gated alpha factor screening framework.
//!
//! The crate covers the full sub-model machinery of a semantic factor-gating
//! pipeline:
//!
//! - [`data`] — daily/minute market data ingestion, validation, and seeded
//!   synthetic markets with a planted factor signal.
//! - [`dsl`] — an Alpha101-style factor expression language: parser, AST,
//!   cross-sectional evaluator, and factor catalogs.
//! - [`linear`] — the fixed linear scorer (OLS with ridge fallback), RankIC
//!   utilities, and factor backtesting.
//! - [`exec`] — slot-rotation portfolio execution with VWAP pricing, limit
//!   and IPO constraints, transaction costs, and performance metrics.
//! - [`reward`] — the market-feedback reward pipeline: base excess return,
//!   judge-adjusted reward, and structural penalties.
//! - [`grpo`] — group relative policy optimization and a toy autoregressive
//!   selection policy trained against the reward module.
//! - [`context`] — semantic layer: market descriptors, iterative weekly
//!   memory, factor profiles, decision contexts, and response parsing over a
//!   pluggable text-generation client.
//! - [`baselines`] — reference gating strategies (IC momentum, Lasso,
//!   buy-and-hold) and the TopN × HoldingDays sweep.

pub mod baselines;
pub mod context;
pub mod data;
pub mod dsl;
pub mod exec;
pub mod grpo;
pub mod linear;
pub mod numfmt;
pub mod reward;
