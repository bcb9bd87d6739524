//! CSV ingestion and serialization for daily and minute bars.
//!
//! Daily schema: `date,ticker,open,high,low,close,volume,prev_close,limit_up,limit_down,is_ipo_day`
//! with ISO-8601 dates, empty cells meaning missing, and the limit columns
//! optional. Minute schema: `date,ticker,minute_index,price,volume`.
//! Serialization writes 10 significant digits.

use super::{DailyBar, DataError, MarketPanel, MinuteBar, MinutePanel, DEFAULT_LIMIT_RATIO};
use crate::numfmt::format_sig;
use chrono::NaiveDate;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

const PANEL_SIG_DIGITS: usize = 10;

/// One excluded input row with the reason it was dropped.
#[derive(Debug, Clone)]
pub struct RowIssue {
    pub line: u64,
    pub message: String,
}

/// Per-file ingestion outcome: rows rejected by invariant checks are reported
/// here rather than failing the whole load.
#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: Vec<RowIssue>,
}

impl IngestReport {
    fn reject(&mut self, line: u64, message: impl Into<String>) {
        self.rejected.push(RowIssue { line, message: message.into() });
    }
}

struct DailyColumns {
    date: usize,
    ticker: usize,
    open: usize,
    high: usize,
    low: usize,
    close: usize,
    volume: usize,
    prev_close: usize,
    limit_up: Option<usize>,
    limit_down: Option<usize>,
    is_ipo_day: usize,
}

fn locate(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

fn require(headers: &csv::StringRecord, name: &str) -> Result<usize, DataError> {
    locate(headers, name)
        .ok_or_else(|| DataError::MalformedHeader(format!("missing column `{name}`")))
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(file))
}

fn parse_price(field: &str, name: &str) -> Result<f64, String> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(f64::NAN);
    }
    field.parse::<f64>().map_err(|_| format!("unparsable {name} `{field}`"))
}

/// Load a daily-bar CSV into a panel. Rows violating bar invariants are
/// excluded and reported; structural problems (missing file, bad header,
/// dates running backwards within a ticker) are hard errors.
pub fn load_daily_bars(path: impl AsRef<Path>) -> Result<(MarketPanel, IngestReport), DataError> {
    load_daily_bars_with(path, DEFAULT_LIMIT_RATIO)
}

/// Same as [`load_daily_bars`] with an explicit limit-band ratio for rows
/// that do not carry limit columns.
pub fn load_daily_bars_with(
    path: impl AsRef<Path>,
    limit_ratio: f64,
) -> Result<(MarketPanel, IngestReport), DataError> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    let headers = reader.headers()?.clone();
    let cols = DailyColumns {
        date: require(&headers, "date")?,
        ticker: require(&headers, "ticker")?,
        open: require(&headers, "open")?,
        high: require(&headers, "high")?,
        low: require(&headers, "low")?,
        close: require(&headers, "close")?,
        volume: require(&headers, "volume")?,
        prev_close: require(&headers, "prev_close")?,
        limit_up: locate(&headers, "limit_up"),
        limit_down: locate(&headers, "limit_down"),
        is_ipo_day: require(&headers, "is_ipo_day")?,
    };

    let mut report = IngestReport::default();
    let mut bars: Vec<DailyBar> = Vec::new();
    let mut last_date: BTreeMap<String, (NaiveDate, u64)> = BTreeMap::new();
    let mut seen: BTreeMap<(NaiveDate, String), u64> = BTreeMap::new();

    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        match parse_daily_row(&record, &cols) {
            Ok(bar) => {
                if let Some((prev, _)) = last_date.get(&bar.ticker) {
                    if bar.date < *prev {
                        return Err(DataError::NonMonotoneDates { ticker: bar.ticker, line });
                    }
                }
                if seen.contains_key(&(bar.date, bar.ticker.clone())) {
                    report.reject(line, format!("duplicate (date, ticker) {} {}", bar.date, bar.ticker));
                    continue;
                }
                if let Err(msg) = bar.check() {
                    report.reject(line, msg);
                    continue;
                }
                last_date.insert(bar.ticker.clone(), (bar.date, line));
                seen.insert((bar.date, bar.ticker.clone()), line);
                report.accepted += 1;
                bars.push(bar);
            }
            Err(msg) => report.reject(line, msg),
        }
    }

    Ok((MarketPanel::from_bars(&bars, limit_ratio), report))
}

fn parse_daily_row(record: &csv::StringRecord, cols: &DailyColumns) -> Result<DailyBar, String> {
    let get = |idx: usize| record.get(idx).unwrap_or("");
    let date: NaiveDate = get(cols.date)
        .trim()
        .parse()
        .map_err(|_| format!("unparsable date `{}`", get(cols.date)))?;
    let ticker = get(cols.ticker).trim().to_string();
    if ticker.is_empty() {
        return Err("empty ticker".to_string());
    }
    let optional = |idx: Option<usize>, name: &str| -> Result<Option<f64>, String> {
        match idx {
            None => Ok(None),
            Some(i) => {
                let v = parse_price(get(i), name)?;
                Ok(v.is_finite().then_some(v))
            }
        }
    };
    let ipo = match get(cols.is_ipo_day).trim() {
        "" | "0" => false,
        "1" => true,
        other => return Err(format!("is_ipo_day must be 0 or 1, got `{other}`")),
    };
    Ok(DailyBar {
        date,
        ticker,
        open: parse_price(get(cols.open), "open")?,
        high: parse_price(get(cols.high), "high")?,
        low: parse_price(get(cols.low), "low")?,
        close: parse_price(get(cols.close), "close")?,
        volume: parse_price(get(cols.volume), "volume")?,
        prev_close: parse_price(get(cols.prev_close), "prev_close")?,
        limit_up: optional(cols.limit_up, "limit_up")?,
        limit_down: optional(cols.limit_down, "limit_down")?,
        is_ipo_day: ipo,
    })
}

/// Write a panel back to the daily CSV schema at 10 significant digits.
pub fn save_daily_bars(panel: &MarketPanel, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut out = std::fs::File::create(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let io_err = |source: std::io::Error| DataError::Io { path: path.display().to_string(), source };
    writeln!(out, "date,ticker,open,high,low,close,volume,prev_close,limit_up,limit_down,is_ipo_day")
        .map_err(io_err)?;
    let cell = |v: f64| if v.is_nan() { String::new() } else { format_sig(v, PANEL_SIG_DIGITS) };
    for bar in panel.to_bars() {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            bar.date,
            bar.ticker,
            cell(bar.open),
            cell(bar.high),
            cell(bar.low),
            cell(bar.close),
            cell(bar.volume),
            cell(bar.prev_close),
            bar.limit_up.map(|v| format_sig(v, PANEL_SIG_DIGITS)).unwrap_or_default(),
            bar.limit_down.map(|v| format_sig(v, PANEL_SIG_DIGITS)).unwrap_or_default(),
            if bar.is_ipo_day { 1 } else { 0 },
        )
        .map_err(io_err)?;
    }
    Ok(())
}

/// Load a minute-bar CSV into groups keyed by (date, ticker). Out-of-range
/// minute indexes and duplicate slots are rejected with diagnostics.
pub fn load_minute_bars(path: impl AsRef<Path>) -> Result<(MinutePanel, IngestReport), DataError> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    let headers = reader.headers()?.clone();
    let date_col = require(&headers, "date")?;
    let ticker_col = require(&headers, "ticker")?;
    let index_col = require(&headers, "minute_index")?;
    let price_col = require(&headers, "price")?;
    let volume_col = require(&headers, "volume")?;

    let mut panel = MinutePanel::new();
    let mut report = IngestReport::default();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let get = |idx: usize| record.get(idx).unwrap_or("").trim();
        let parsed = (|| -> Result<MinuteBar, String> {
            let date: NaiveDate =
                get(date_col).parse().map_err(|_| format!("unparsable date `{}`", get(date_col)))?;
            let ticker = get(ticker_col).to_string();
            if ticker.is_empty() {
                return Err("empty ticker".to_string());
            }
            let minute_index: u32 = get(index_col)
                .parse()
                .map_err(|_| format!("unparsable minute_index `{}`", get(index_col)))?;
            let bar = MinuteBar {
                date,
                ticker,
                minute_index,
                price: parse_price(get(price_col), "price")?,
                volume: parse_price(get(volume_col), "volume")?,
            };
            bar.check()?;
            Ok(bar)
        })();
        match parsed {
            Ok(bar) => {
                if panel.insert(bar) {
                    report.accepted += 1;
                } else {
                    report.reject(line, "duplicate minute_index for (date, ticker)");
                }
            }
            Err(msg) => report.reject(line, msg),
        }
    }
    Ok((panel, report))
}

/// Write minute groups back to the minute CSV schema.
pub fn save_minute_bars(panel: &MinutePanel, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut out = std::fs::File::create(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let io_err = |source: std::io::Error| DataError::Io { path: path.display().to_string(), source };
    writeln!(out, "date,ticker,minute_index,price,volume").map_err(io_err)?;
    for ((date, ticker), bars) in panel.iter() {
        for bar in bars {
            writeln!(
                out,
                "{},{},{},{},{}",
                date,
                ticker,
                bar.minute_index,
                format_sig(bar.price, PANEL_SIG_DIGITS),
                format_sig(bar.volume, PANEL_SIG_DIGITS),
            )
            .map_err(io_err)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PanelField;
    use std::io::Write as _;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn two_row_csv_parses_into_panel() {
        let f = write_tmp(
            "date,ticker,open,high,low,close,volume,prev_close,limit_up,limit_down,is_ipo_day\n\
             2024-01-02,AAA,10,10.5,9.5,10.2,1000,10,11,9,0\n\
             2024-01-02,BBB,20,21,19,20.4,2000,20,22,18,0\n",
        );
        let (panel, report) = load_daily_bars(f.path()).unwrap();
        assert_eq!(report.accepted, 2);
        assert!(report.rejected.is_empty());
        assert_eq!(panel.n_dates(), 1);
        assert_eq!(panel.n_tickers(), 2);
        assert_eq!(panel.field(PanelField::Close).get(0, 0), 10.2);
    }

    #[test]
    fn low_above_high_row_is_rejected_with_warning() {
        let f = write_tmp(
            "date,ticker,open,high,low,close,volume,prev_close,limit_up,limit_down,is_ipo_day\n\
             2024-01-02,AAA,10,10.5,9.5,10.2,1000,10,,,0\n\
             2024-01-03,AAA,10,9.0,12.0,10.0,1000,10.2,,,0\n",
        );
        let (panel, report) = load_daily_bars(f.path()).unwrap();
        assert_eq!(report.accepted, 1);
        assert_eq!(report.rejected.len(), 1);
        assert_eq!(report.rejected[0].line, 3);
        assert_eq!(panel.n_dates(), 1);
    }

    #[test]
    fn missing_header_is_hard_error() {
        let f = write_tmp("date,ticker,open,high,low,close,volume\n2024-01-02,AAA,1,1,1,1,1\n");
        assert!(matches!(load_daily_bars(f.path()), Err(DataError::MalformedHeader(_))));
    }

    #[test]
    fn backwards_dates_within_ticker_are_hard_error() {
        let f = write_tmp(
            "date,ticker,open,high,low,close,volume,prev_close,limit_up,limit_down,is_ipo_day\n\
             2024-01-03,AAA,10,10.5,9.5,10.2,1000,10,,,0\n\
             2024-01-02,AAA,10,10.5,9.5,10.2,1000,10,,,0\n",
        );
        assert!(matches!(
            load_daily_bars(f.path()),
            Err(DataError::NonMonotoneDates { .. })
        ));
    }

    #[test]
    fn empty_cells_become_missing() {
        let f = write_tmp(
            "date,ticker,open,high,low,close,volume,prev_close,limit_up,limit_down,is_ipo_day\n\
             2024-01-02,AAA,10,10.5,9.5,,1000,10,,,0\n",
        );
        let (panel, report) = load_daily_bars(f.path()).unwrap();
        assert_eq!(report.accepted, 1);
        assert!(panel.field(PanelField::Close).get(0, 0).is_nan());
        assert_eq!(panel.field(PanelField::Open).get(0, 0), 10.0);
    }

    #[test]
    fn minute_loader_rejects_out_of_range_and_duplicates() {
        let f = write_tmp(
            "date,ticker,minute_index,price,volume\n\
             2024-01-02,AAA,1,10.0,100\n\
             2024-01-02,AAA,0,10.0,100\n\
             2024-01-02,AAA,31,10.0,100\n\
             2024-01-02,AAA,1,11.0,100\n\
             2024-01-02,AAA,2,10.1,50\n",
        );
        let (panel, report) = load_minute_bars(f.path()).unwrap();
        assert_eq!(report.accepted, 2);
        assert_eq!(report.rejected.len(), 3);
        let bars = panel.bars("2024-01-02".parse().unwrap(), "AAA").unwrap();
        assert_eq!(bars.len(), 2);
        assert_eq!(bars[0].price, 10.0);
    }

    #[test]
    fn interleaved_tickers_group_like_brute_force() {
        let f = write_tmp(
            "date,ticker,minute_index,price,volume\n\
             2024-01-02,BBB,2,20.0,10\n\
             2024-01-02,AAA,1,10.0,100\n\
             2024-01-03,AAA,1,10.5,80\n\
             2024-01-02,BBB,1,19.9,15\n\
             2024-01-02,AAA,2,10.1,90\n",
        );
        let (panel, _) = load_minute_bars(f.path()).unwrap();

        // Brute-force group-by oracle over the same rows.
        let rows = [
            ("2024-01-02", "BBB", 2u32),
            ("2024-01-02", "AAA", 1),
            ("2024-01-03", "AAA", 1),
            ("2024-01-02", "BBB", 1),
            ("2024-01-02", "AAA", 2),
        ];
        let mut oracle: std::collections::BTreeMap<(String, String), Vec<u32>> = Default::default();
        for (d, t, m) in rows {
            oracle.entry((d.to_string(), t.to_string())).or_default().push(m);
        }
        for v in oracle.values_mut() {
            v.sort_unstable();
        }
        for ((d, t), minutes) in oracle {
            let date: chrono::NaiveDate = d.parse().unwrap();
            let got: Vec<u32> =
                panel.bars(date, &t).unwrap().iter().map(|b| b.minute_index).collect();
            assert_eq!(got, minutes);
        }
    }
}
