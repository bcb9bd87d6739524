//! Alpha101-style factor expression language.
//!
//! Formulas are C-like infix expressions with function calls, a `?:` ternary,
//! and case-insensitive function and field names, e.g.
//! `rank(close - delay(close, 1))` or `(-1 * correlation(open, volume, 10))`.
//! Parsed ASTs evaluate over a [`MarketPanel`](crate::data::MarketPanel) to
//! one cross-section per date; ASTs and catalogs are immutable and safe to
//! share across threads.

mod catalog;
mod eval;
mod lexer;
mod parser;
mod tensor;

pub use catalog::{default_catalog, load_catalog, load_catalog_str, CatalogEntry, FactorCatalog};
pub use eval::{evaluate_alpha, evaluate_matrix, max_lookback, EvalError};
pub use parser::{parse_alpha, unparse, ParseError};
pub use tensor::{FactorCrossSection, FactorTensor};

/// Raw panel series addressable from a formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldRef {
    Open,
    High,
    Low,
    Close,
    Volume,
    /// (high + low + close) / 3 proxy; daily panels rarely carry true VWAP.
    Vwap,
    /// close_t / close_{t-1} − 1.
    Returns,
}

impl FieldRef {
    pub fn name(self) -> &'static str {
        match self {
            FieldRef::Open => "open",
            FieldRef::High => "high",
            FieldRef::Low => "low",
            FieldRef::Close => "close",
            FieldRef::Volume => "volume",
            FieldRef::Vwap => "vwap",
            FieldRef::Returns => "returns",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "open" => FieldRef::Open,
            "high" => FieldRef::High,
            "low" => FieldRef::Low,
            "close" => FieldRef::Close,
            "volume" => FieldRef::Volume,
            "vwap" => FieldRef::Vwap,
            "returns" => FieldRef::Returns,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }
}

/// Builtin function set. Frozen: exactly the 22 operators below.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    Rank,
    Delay,
    Delta,
    TsSum,
    TsMean,
    TsMin,
    TsMax,
    TsRank,
    TsArgMax,
    TsArgMin,
    Stddev,
    Correlation,
    Covariance,
    DecayLinear,
    SignedPower,
    Scale,
    Abs,
    Log,
    Sign,
    Min,
    Max,
    Adv,
}

/// Static description of one builtin operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuiltinSpec {
    pub builtin: Builtin,
    pub name: &'static str,
    pub arity: usize,
    /// Takes a trailing window argument (positive integer literal).
    pub windowed: bool,
    /// Operates across tickers within one date.
    pub cross_sectional: bool,
}

const BUILTINS: [BuiltinSpec; 22] = [
    BuiltinSpec { builtin: Builtin::Rank, name: "rank", arity: 1, windowed: false, cross_sectional: true },
    BuiltinSpec { builtin: Builtin::Delay, name: "delay", arity: 2, windowed: true, cross_sectional: false },
    BuiltinSpec { builtin: Builtin::Delta, name: "delta", arity: 2, windowed: true, cross_sectional: false },
    BuiltinSpec { builtin: Builtin::TsSum, name: "ts_sum", arity: 2, windowed: true, cross_sectional: false },
    BuiltinSpec { builtin: Builtin::TsMean, name: "ts_mean", arity: 2, windowed: true, cross_sectional: false },
    BuiltinSpec { builtin: Builtin::TsMin, name: "ts_min", arity: 2, windowed: true, cross_sectional: false },
    BuiltinSpec { builtin: Builtin::TsMax, name: "ts_max", arity: 2, windowed: true, cross_sectional: false },
    BuiltinSpec { builtin: Builtin::TsRank, name: "ts_rank", arity: 2, windowed: true, cross_sectional: false },
    BuiltinSpec { builtin: Builtin::TsArgMax, name: "ts_argmax", arity: 2, windowed: true, cross_sectional: false },
    BuiltinSpec { builtin: Builtin::TsArgMin, name: "ts_argmin", arity: 2, windowed: true, cross_sectional: false },
    BuiltinSpec { builtin: Builtin::Stddev, name: "stddev", arity: 2, windowed: true, cross_sectional: false },
    BuiltinSpec { builtin: Builtin::Correlation, name: "correlation", arity: 3, windowed: true, cross_sectional: false },
    BuiltinSpec { builtin: Builtin::Covariance, name: "covariance", arity: 3, windowed: true, cross_sectional: false },
    BuiltinSpec { builtin: Builtin::DecayLinear, name: "decay_linear", arity: 2, windowed: true, cross_sectional: false },
    BuiltinSpec { builtin: Builtin::SignedPower, name: "signedpower", arity: 2, windowed: false, cross_sectional: false },
    BuiltinSpec { builtin: Builtin::Scale, name: "scale", arity: 1, windowed: false, cross_sectional: true },
    BuiltinSpec { builtin: Builtin::Abs, name: "abs", arity: 1, windowed: false, cross_sectional: false },
    BuiltinSpec { builtin: Builtin::Log, name: "log", arity: 1, windowed: false, cross_sectional: false },
    BuiltinSpec { builtin: Builtin::Sign, name: "sign", arity: 1, windowed: false, cross_sectional: false },
    BuiltinSpec { builtin: Builtin::Min, name: "min", arity: 2, windowed: false, cross_sectional: false },
    BuiltinSpec { builtin: Builtin::Max, name: "max", arity: 2, windowed: false, cross_sectional: false },
    BuiltinSpec { builtin: Builtin::Adv, name: "adv", arity: 1, windowed: true, cross_sectional: false },
];

/// The frozen builtin operator set.
pub fn builtin_catalog() -> &'static [BuiltinSpec] {
    &BUILTINS
}

impl Builtin {
    pub fn spec(self) -> &'static BuiltinSpec {
        BUILTINS.iter().find(|s| s.builtin == self).expect("every builtin has a spec")
    }

    pub fn from_name(name: &str) -> Option<Builtin> {
        BUILTINS.iter().find(|s| s.name == name).map(|s| s.builtin)
    }

    pub fn name(self) -> &'static str {
        self.spec().name
    }
}

/// Factor formula AST. Trees are finite by construction; windows are stored
/// as validated positive integers.
#[derive(Debug, Clone, PartialEq)]
pub enum FactorExpr {
    Field(FieldRef),
    Literal(f64),
    Neg(Box<FactorExpr>),
    Binary { op: BinOp, lhs: Box<FactorExpr>, rhs: Box<FactorExpr> },
    Ternary { cond: Box<FactorExpr>, then: Box<FactorExpr>, otherwise: Box<FactorExpr> },
    Call { func: Builtin, args: Vec<FactorExpr>, window: Option<usize> },
}

impl FactorExpr {
    /// Structural equality; literal payloads compare bitwise so NaN-free
    /// trees round-trip cleanly through text.
    pub fn structurally_eq(&self, other: &FactorExpr) -> bool {
        match (self, other) {
            (FactorExpr::Field(a), FactorExpr::Field(b)) => a == b,
            (FactorExpr::Literal(a), FactorExpr::Literal(b)) => a.to_bits() == b.to_bits(),
            (FactorExpr::Neg(a), FactorExpr::Neg(b)) => a.structurally_eq(b),
            (
                FactorExpr::Binary { op: oa, lhs: la, rhs: ra },
                FactorExpr::Binary { op: ob, lhs: lb, rhs: rb },
            ) => oa == ob && la.structurally_eq(lb) && ra.structurally_eq(rb),
            (
                FactorExpr::Ternary { cond: ca, then: ta, otherwise: ea },
                FactorExpr::Ternary { cond: cb, then: tb, otherwise: eb },
            ) => ca.structurally_eq(cb) && ta.structurally_eq(tb) && ea.structurally_eq(eb),
            (
                FactorExpr::Call { func: fa, args: aa, window: wa },
                FactorExpr::Call { func: fb, args: ab, window: wb },
            ) => {
                fa == fb
                    && wa == wb
                    && aa.len() == ab.len()
                    && aa.iter().zip(ab).all(|(x, y)| x.structurally_eq(y))
            }
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_set_is_frozen_at_22() {
        assert_eq!(builtin_catalog().len(), 22);
    }

    #[test]
    fn correlation_is_windowed_arity_3() {
        let spec = Builtin::Correlation.spec();
        assert_eq!(spec.arity, 3);
        assert!(spec.windowed);
        assert!(!spec.cross_sectional);
    }

    #[test]
    fn rank_is_cross_sectional_arity_1() {
        let spec = Builtin::Rank.spec();
        assert_eq!(spec.arity, 1);
        assert!(spec.cross_sectional);
        assert!(!spec.windowed);
    }
}
