//! Report-only panel validation: invariant violations, missing-value density
//! per field, and date gaps under the strict weekday calendar.

use super::{MarketPanel, PanelField};
use chrono::{Datelike, Duration, NaiveDate, Weekday};

/// How the date axis is judged for gaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CalendarMode {
    /// Trading days are exactly the dates present in the panel; no gaps.
    #[default]
    PanelDates,
    /// Missing weekdays between consecutive panel dates are reported.
    Strict,
}

#[derive(Debug, Clone)]
pub struct PanelViolation {
    pub date: NaiveDate,
    pub ticker: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct PanelReport {
    pub violations: Vec<PanelViolation>,
    /// (field name, fraction of missing cells).
    pub missing_density: Vec<(&'static str, f64)>,
    /// Consecutive panel dates with at least one weekday strictly between.
    pub date_gaps: Vec<(NaiveDate, NaiveDate)>,
}

impl PanelReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty() && self.date_gaps.is_empty()
    }
}

/// Scan a panel for per-cell invariant violations and missing data. This is
/// report-only; nothing is mutated or filled.
pub fn validate_panel(panel: &MarketPanel, mode: CalendarMode) -> PanelReport {
    let mut report = PanelReport::default();

    for field in PanelField::ALL {
        report.missing_density.push((field.name(), panel.field(field).missing_density()));
    }

    for d in 0..panel.n_dates() {
        for t in 0..panel.n_tickers() {
            let open = panel.field(PanelField::Open).get(d, t);
            let high = panel.field(PanelField::High).get(d, t);
            let low = panel.field(PanelField::Low).get(d, t);
            let close = panel.field(PanelField::Close).get(d, t);
            let mut fail = |message: String| {
                report.violations.push(PanelViolation {
                    date: panel.dates()[d],
                    ticker: panel.tickers()[t].clone(),
                    message,
                });
            };
            let body_min = open.min(close);
            let body_max = open.max(close);
            if low.is_finite() && body_min.is_finite() && low > body_min {
                fail(format!("low {low} > min(open, close) {body_min}"));
            }
            if high.is_finite() && body_max.is_finite() && high < body_max {
                fail(format!("high {high} < max(open, close) {body_max}"));
            }
            let up = panel.limit_up(d, t);
            let down = panel.limit_down(d, t);
            if up.is_finite() && high.is_finite() && high > up {
                fail(format!("high {high} above limit_up {up}"));
            }
            if down.is_finite() && low.is_finite() && low < down {
                fail(format!("low {low} below limit_down {down}"));
            }
            for field in [PanelField::Open, PanelField::High, PanelField::Low, PanelField::Close] {
                let v = panel.field(field).get(d, t);
                if v.is_finite() && v <= 0.0 {
                    fail(format!("{} must be > 0, got {v}", field.name()));
                }
            }
            let vol = panel.field(PanelField::Volume).get(d, t);
            if vol.is_finite() && vol < 0.0 {
                fail(format!("volume must be >= 0, got {vol}"));
            }
        }
    }

    if mode == CalendarMode::Strict {
        for pair in panel.dates().windows(2) {
            if weekdays_between(pair[0], pair[1]) > 0 {
                report.date_gaps.push((pair[0], pair[1]));
            }
        }
    }

    report
}

fn weekdays_between(a: NaiveDate, b: NaiveDate) -> usize {
    let mut n = 0;
    let mut day = a + Duration::days(1);
    while day < b {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            n += 1;
        }
        day += Duration::days(1);
    }
    n
}
