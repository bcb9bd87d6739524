use super::*;
use crate::data::{DailyBar, MarketPanel, MinuteBar, MinutePanel};
use crate::dsl::{load_catalog_str, FactorTensor};
use crate::linear::{FactorCoef, LinearModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn date(i: usize) -> NaiveDate {
    let start: NaiveDate = "2024-01-01".parse().unwrap();
    start + chrono::Duration::days(i as i64)
}

struct Fixture {
    panel: MarketPanel,
    minutes: MinutePanel,
}

/// Build a market where closes and volumes are supplied per (date, ticker)
/// and every (date, ticker) has a single minute bar at the close price.
fn market(closes: &[Vec<f64>], volumes: &[Vec<f64>]) -> Fixture {
    let mut bars = Vec::new();
    let mut minutes = MinutePanel::new();
    for (d, row) in closes.iter().enumerate() {
        for (t, close) in row.iter().enumerate() {
            let ticker = format!("T{t:02}");
            bars.push(DailyBar {
                date: date(d),
                ticker: ticker.clone(),
                open: *close,
                high: *close * 1.05,
                low: *close * 0.95,
                close: *close,
                volume: volumes[d][t],
                prev_close: *close,
                limit_up: Some(close * 1.10),
                limit_down: Some(close * 0.90),
                is_ipo_day: false,
            });
            minutes.insert(MinuteBar {
                date: date(d),
                ticker,
                minute_index: 1,
                price: *close,
                volume: 1000.0,
            });
        }
    }
    Fixture { panel: MarketPanel::from_bars(&bars, 0.1), minutes }
}

fn unit_model(factor: &str) -> LinearModel {
    LinearModel {
        beta0: 0.0,
        coefs: vec![FactorCoef {
            id: factor.to_string(),
            beta: 1.0,
            pool_mean: 0.0,
            pool_std: 1.0,
        }],
        fit_window: (date(0), date(1)),
    }
}

#[test]
fn slot_index_examples() {
    assert_eq!(slot_index(7, 5), 2);
    assert_eq!(slot_index(0, 5), 0);
    assert_eq!(slot_index(5, 5), 0);
}

#[test]
fn vwap_identity_and_hand_case() {
    let mk = |idx, price, volume| MinuteBar {
        date: date(0),
        ticker: "A".into(),
        minute_index: idx,
        price,
        volume,
    };
    assert_eq!(compute_vwap(&[mk(1, 10.0, 100.0)]).unwrap(), 10.0);
    let two = [mk(1, 10.0, 1.0), mk(2, 20.0, 3.0)];
    assert!((compute_vwap(&two).unwrap() - 17.5).abs() < 1e-15);
    let dead = [mk(1, 10.0, 0.0), mk(2, 11.0, 0.0)];
    assert!(matches!(compute_vwap(&dead), Err(ExecError::NoLiquidity)));
}

#[test]
fn vwap_matches_brute_force_weighted_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let bars: Vec<MinuteBar> = (1..=30)
            .map(|m| MinuteBar {
                date: date(0),
                ticker: "A".into(),
                minute_index: m,
                price: rng.gen_range(5.0..500.0),
                volume: rng.gen_range(0.0..10_000.0_f64).floor(),
            })
            .collect();
        let total: f64 = bars.iter().map(|b| b.volume).sum();
        if total == 0.0 {
            continue;
        }
        let expected: f64 = bars.iter().map(|b| b.price * b.volume).sum::<f64>() / total;
        assert!((compute_vwap(&bars).unwrap() - expected).abs() < 1e-12);
    }
}

#[test]
fn equal_weight_construction_on_empty_slot() {
    let fx = market(&[vec![10.0, 20.0, 30.0]], &[vec![1.0, 1.0, 1.0]]);
    let market_day =
        DayMarket { panel: &fx.panel, minutes: &fx.minutes, date_idx: 0, price_mode: PriceMode::Vwap };
    let config = ExecutionConfig { fee_rate: 0.0, ..Default::default() };
    let mut slot = SlotPortfolio::new(0, 9000.0);
    let out = rebalance_slot(&mut slot, &[0, 1], &market_day, &config);
    assert_eq!(out.trades.len(), 2);
    let v0 = slot.holdings[&0] * 10.0;
    let v1 = slot.holdings[&1] * 20.0;
    assert!((v0 - 4500.0).abs() < 20.0 + 1e-9, "position near equal weight: {v0}");
    assert!((v0 - v1).abs() < 1e-9, "tranches equal");
    assert!(slot.cash.abs() < 1e-9);
}

#[test]
fn buy_at_limit_up_is_rejected_and_cash_retained() {
    let mut bars = vec![DailyBar {
        date: date(0),
        ticker: "HOT".into(),
        open: 10.0,
        high: 11.0,
        low: 9.9,
        close: 11.0,
        volume: 100.0,
        prev_close: 10.0,
        limit_up: Some(11.0),
        limit_down: Some(9.0),
        is_ipo_day: false,
    }];
    bars.push(DailyBar { ticker: "OK".into(), limit_up: Some(20.0), high: 15.0, close: 15.0, open: 15.0, low: 14.0, ..bars[0].clone() });
    let mut minutes = MinutePanel::new();
    minutes.insert(MinuteBar { date: date(0), ticker: "HOT".into(), minute_index: 1, price: 11.0, volume: 50.0 });
    minutes.insert(MinuteBar { date: date(0), ticker: "OK".into(), minute_index: 1, price: 15.0, volume: 50.0 });
    let panel = MarketPanel::from_bars(&bars, 0.1);
    let market_day = DayMarket { panel: &panel, minutes: &minutes, date_idx: 0, price_mode: PriceMode::Vwap };
    let config = ExecutionConfig::default();
    let mut slot = SlotPortfolio::new(0, 10_000.0);
    let hot = panel.ticker_index("HOT").unwrap();
    let ok = panel.ticker_index("OK").unwrap();
    let out = rebalance_slot(&mut slot, &[hot, ok], &market_day, &config);
    let rejected: Vec<_> = out.trades.iter().filter(|t| !t.executed()).collect();
    assert_eq!(rejected.len(), 1);
    assert_eq!(rejected[0].reason, Some(RejectReason::LimitUp));
    assert_eq!(rejected[0].ticker, "HOT");
    // The HOT tranche stays in cash.
    assert!((slot.cash - 5000.0).abs() < 1e-9, "cash {}", slot.cash);
    assert!(!slot.holdings.contains_key(&hot));
    assert!(slot.holdings.contains_key(&ok));
}

#[test]
fn round_trip_fee_cost_matches_hand_arithmetic() {
    let fx = market(
        &[vec![10.0, 10.0], vec![10.0, 10.0]],
        &[vec![1.0, 1.0], vec![1.0, 1.0]],
    );
    let config = ExecutionConfig { fee_rate: 0.001, ..Default::default() };
    let mut slot = SlotPortfolio::new(0, 1000.0);
    let day0 = DayMarket { panel: &fx.panel, minutes: &fx.minutes, date_idx: 0, price_mode: PriceMode::Vwap };
    rebalance_slot(&mut slot, &[0], &day0, &config);
    let day1 = DayMarket { panel: &fx.panel, minutes: &fx.minutes, date_idx: 1, price_mode: PriceMode::Vwap };
    rebalance_slot(&mut slot, &[], &day1, &config);
    assert!(slot.holdings.is_empty());
    let expected = 1000.0 * (1.0 - 0.001) / (1.0 + 0.001);
    assert!((slot.cash - expected).abs() < 1e-6, "cash {} vs {expected}", slot.cash);
}

#[test]
fn cash_conservation_through_a_rebalance() {
    let fx = market(&[vec![12.0, 34.0, 56.0, 78.0]], &[vec![1.0; 4]]);
    let config = ExecutionConfig { fee_rate: 0.0025, ..Default::default() };
    let mut slot = SlotPortfolio::new(0, 50_000.0);
    let day = DayMarket { panel: &fx.panel, minutes: &fx.minutes, date_idx: 0, price_mode: PriceMode::Vwap };
    let before = slot.value(|t| fx.panel.field(PanelField::Close).get(0, t));
    let out = rebalance_slot(&mut slot, &[0, 2, 3], &day, &config);
    let after = slot.value(|t| fx.panel.field(PanelField::Close).get(0, t));
    assert!(
        ((before - out.fees) - after).abs() < 1e-9 * before,
        "value must change only by fees: {before} -> {after}, fees {}",
        out.fees
    );
}

#[test]
fn metrics_trivial_and_hand_cases() {
    let flat = EquityCurve {
        dates: vec![date(0), date(1), date(2)],
        nv: vec![1.0, 1.0, 1.0, 1.0],
        returns: vec![0.0, 0.0, 0.0],
        trades: vec![],
        avg_daily_turnover: 0.0,
    };
    let m = compute_metrics(&flat).unwrap();
    assert_eq!(m.cr, 0.0);
    assert_eq!(m.mdd, 0.0);
    assert!(m.sr.is_none());

    let curve = EquityCurve {
        dates: vec![date(0), date(1), date(2)],
        nv: vec![1.0, 1.2, 0.9, 1.1],
        returns: vec![0.2, -0.25, 2.0 / 9.0],
        trades: vec![],
        avg_daily_turnover: 0.0,
    };
    let m = compute_metrics(&curve).unwrap();
    assert!((m.mdd - 0.25).abs() < 1e-12);

    // Constant daily return closed form over 126 days.
    let r = 0.001;
    let mut nv = vec![1.0];
    for _ in 0..126 {
        nv.push(nv.last().unwrap() * (1.0 + r));
    }
    let curve = EquityCurve {
        dates: (0..126).map(date).collect(),
        nv,
        returns: vec![r; 126],
        trades: vec![],
        avg_daily_turnover: 0.0,
    };
    let m = compute_metrics(&curve).unwrap();
    let expected = (1.0 + r).powi(252) - 1.0;
    assert!((m.ar - expected).abs() < 1e-10, "ar {} vs {expected}", m.ar);
    assert!(m.sr.is_none(), "zero dispersion has no Sharpe");
}

#[test]
fn mdd_matches_brute_force_on_random_curves() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let n = rng.gen_range(2..40);
        let mut nv = vec![1.0];
        let mut returns = Vec::new();
        for _ in 0..n {
            let r = rng.gen_range(-0.05..0.05);
            returns.push(r);
            nv.push(nv.last().unwrap() * (1.0 + r));
        }
        let curve = EquityCurve {
            dates: (0..n).map(date).collect(),
            nv: nv.clone(),
            returns,
            trades: vec![],
            avg_daily_turnover: 0.0,
        };
        let got = compute_metrics(&curve).unwrap().mdd;
        let mut brute = 0.0_f64;
        for i in 0..nv.len() {
            for j in i..nv.len() {
                brute = brute.max((nv[i] - nv[j]) / nv[i]);
            }
        }
        assert!((got - brute).abs() < 1e-12);
    }
}

#[test]
fn degenerate_scores_produce_no_targets() {
    assert!(rank_candidates(&[0.1, 0.1, 0.1], 2).is_empty());
    assert!(rank_candidates(&[f64::NAN, f64::NAN], 2).is_empty());
    assert_eq!(rank_candidates(&[0.3, 0.1, 0.2], 2), vec![0, 2]);
    // Ties inside a dispersed cross-section break by ticker order.
    assert_eq!(rank_candidates(&[0.3, 0.3, 0.1], 2), vec![0, 1]);
}

#[test]
fn null_policy_curve_is_all_cash() {
    let closes: Vec<Vec<f64>> = (0..10).map(|d| vec![10.0 + d as f64, 20.0, 30.0]).collect();
    let volumes: Vec<Vec<f64>> = (0..10).map(|_| vec![1.0, 2.0, 3.0]).collect();
    let fx = market(&closes, &volumes);
    let catalog = load_catalog_str("f,volume\n").unwrap();
    let tensor = FactorTensor::evaluate(&catalog, &fx.panel);
    let model = unit_model("f");
    let config = ExecutionConfig { h: 2, top_n: 2, ..Default::default() };
    let mut policy = |_d: usize| Vec::<String>::new();
    let curve =
        run_backtest(&fx.panel, &fx.minutes, &tensor, &model, &mut policy, &config, 1..10).unwrap();
    assert!(curve.trades.is_empty());
    assert!(curve.returns.iter().all(|r| *r == 0.0));
    assert!(curve.nv.iter().all(|v| *v == 1.0));
}

#[test]
fn full_rotation_turnover_is_one_over_h() {
    // Flat prices, zero fees; the volume factor rotates the single target
    // every rebalance, so each rebalancing slot turns over fully.
    let n_days = 21;
    let n_tickers = 4;
    let closes: Vec<Vec<f64>> = (0..n_days).map(|_| vec![100.0; n_tickers]).collect();
    let volumes: Vec<Vec<f64>> = (0..n_days)
        .map(|d| {
            (0..n_tickers)
                .map(|t| if t == (d + 1) % n_tickers { 2000.0 } else { 1000.0 })
                .collect()
        })
        .collect();
    let fx = market(&closes, &volumes);
    let catalog = load_catalog_str("f,volume\n").unwrap();
    let tensor = FactorTensor::evaluate(&catalog, &fx.panel);
    let model = unit_model("f");
    let config = ExecutionConfig {
        h: 2,
        top_n: 1,
        fee_rate: 0.0,
        price_mode: PriceMode::Close,
        ..Default::default()
    };
    let mut policy = |_d: usize| vec!["f".to_string()];
    let curve =
        run_backtest(&fx.panel, &fx.minutes, &tensor, &model, &mut policy, &config, 1..n_days)
            .unwrap();

    // Per-day one-side turnover from the trade log, skipping the ramp-up
    // days while slots first deploy cash.
    let total = config.initial_capital;
    for (i, d) in curve.dates.iter().enumerate().skip(config.h) {
        let buys: f64 = curve
            .trades
            .iter()
            .filter(|t| t.date == *d && t.side == Side::Buy && t.executed())
            .map(|t| t.shares * t.price)
            .sum();
        let sells: f64 = curve
            .trades
            .iter()
            .filter(|t| t.date == *d && t.side == Side::Sell && t.executed())
            .map(|t| t.shares * t.price)
            .sum();
        let one_side = (buys + sells) / 2.0 / total;
        assert!(
            (one_side - 0.5).abs() < 1e-9,
            "day {i} turnover {one_side} expected 1/H = 0.5"
        );
    }
    assert!(curve.returns.iter().all(|r| r.abs() < 1e-12), "flat prices, zero fees");
}

#[test]
fn deferred_sell_retries_until_executed() {
    // Day 0: buy; day 1: price pinned at limit-down so the exit defers;
    // day 2: normal pricing lets the retry go through.
    let mk_bar = |d: usize, close: f64, limit_down: f64| DailyBar {
        date: date(d),
        ticker: "X".into(),
        open: close,
        high: close * 1.01,
        low: close,
        close,
        volume: 100.0,
        prev_close: close,
        limit_up: Some(close * 1.2),
        limit_down: Some(limit_down),
        is_ipo_day: false,
    };
    let bars = vec![
        mk_bar(0, 10.0, 8.0),
        mk_bar(1, 9.0, 9.0),
        mk_bar(2, 9.5, 8.0),
    ];
    let mut minutes = MinutePanel::new();
    for (d, price) in [(0, 10.0), (1, 9.0), (2, 9.5)] {
        minutes.insert(MinuteBar {
            date: date(d),
            ticker: "X".into(),
            minute_index: 1,
            price,
            volume: 10.0,
        });
    }
    let panel = MarketPanel::from_bars(&bars, 0.1);
    let config = ExecutionConfig { fee_rate: 0.0, ..Default::default() };
    let mut slot = SlotPortfolio::new(0, 1000.0);

    let day0 = DayMarket { panel: &panel, minutes: &minutes, date_idx: 0, price_mode: PriceMode::Vwap };
    rebalance_slot(&mut slot, &[0], &day0, &config);
    assert!(slot.holdings.contains_key(&0));

    let day1 = DayMarket { panel: &panel, minutes: &minutes, date_idx: 1, price_mode: PriceMode::Vwap };
    let out = rebalance_slot(&mut slot, &[], &day1, &config);
    assert_eq!(out.trades.last().unwrap().reason, Some(RejectReason::LimitDown));
    assert!(slot.holdings.contains_key(&0), "deferred sell keeps the position");
    assert_eq!(slot.pending_sells, vec![0]);

    let day2 = DayMarket { panel: &panel, minutes: &minutes, date_idx: 2, price_mode: PriceMode::Vwap };
    let out = retry_pending_sells(&mut slot, &day2, config.fee_rate);
    assert!(out.trades.last().unwrap().executed());
    assert!(slot.holdings.is_empty());
    assert!(slot.pending_sells.is_empty());
}

#[test]
fn ipo_day_ticker_is_never_traded() {
    let mut bars = vec![DailyBar {
        date: date(0),
        ticker: "NEW".into(),
        open: 10.0,
        high: 10.5,
        low: 9.5,
        close: 10.0,
        volume: 100.0,
        prev_close: 10.0,
        limit_up: Some(20.0),
        limit_down: Some(5.0),
        is_ipo_day: true,
    }];
    bars.push(DailyBar { ticker: "OLD".into(), is_ipo_day: false, ..bars[0].clone() });
    let mut minutes = MinutePanel::new();
    for t in ["NEW", "OLD"] {
        minutes.insert(MinuteBar {
            date: date(0),
            ticker: t.into(),
            minute_index: 1,
            price: 10.0,
            volume: 10.0,
        });
    }
    let panel = MarketPanel::from_bars(&bars, 0.1);
    let day = DayMarket { panel: &panel, minutes: &minutes, date_idx: 0, price_mode: PriceMode::Vwap };
    let config = ExecutionConfig::default();
    let mut slot = SlotPortfolio::new(0, 1000.0);
    let new_idx = panel.ticker_index("NEW").unwrap();
    let old_idx = panel.ticker_index("OLD").unwrap();
    let out = rebalance_slot(&mut slot, &[new_idx, old_idx], &day, &config);
    let executed: Vec<_> = out.trades.iter().filter(|t| t.executed()).collect();
    assert_eq!(executed.len(), 1);
    assert_eq!(executed[0].ticker, "OLD");
    let rejected: Vec<_> = out.trades.iter().filter(|t| !t.executed()).collect();
    assert_eq!(rejected[0].reason, Some(RejectReason::IpoDay));
}
