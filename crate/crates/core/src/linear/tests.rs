use super::*;
use crate::data::{DailyBar, MarketPanel};
use crate::dsl::{load_catalog_str, FactorTensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn zscored_random(
    rng: &mut ChaCha8Rng,
    n_dates: usize,
    n_tickers: usize,
) -> Vec<Vec<f64>> {
    (0..n_dates)
        .map(|_| {
            let raw: Vec<f64> = (0..n_tickers).map(|_| rng.gen_range(-1.0..1.0)).collect();
            cross_sectional_zscores(&raw)
        })
        .collect()
}

/// Assemble a FactorTensor with fully controlled values via a panel whose
/// open/high/low/close/volume columns carry the first five factors and
/// arithmetic formulas recover them exactly.
fn controlled_tensor(values: &[Vec<Vec<f64>>]) -> (FactorTensor, MarketPanel) {
    let nf = values.len();
    assert!(nf <= 3, "controlled tensor supports up to 3 factors");
    let n_dates = values[0].len();
    let n_tickers = values[0][0].len();
    let start: chrono::NaiveDate = "2024-01-01".parse().unwrap();
    let mut bars = Vec::new();
    for d in 0..n_dates {
        for t in 0..n_tickers {
            // Encode factor values in close / open / volume; keep bar
            // invariants satisfied by construction with wide high/low.
            let f0 = values[0][d][t];
            let f1 = if nf > 1 { values[1][d][t] } else { 0.0 };
            let f2 = if nf > 2 { values[2][d][t] } else { 0.0 };
            let close = 1000.0 + f0;
            let open = 1000.0 + f1;
            let volume = 1000.0 + f2;
            bars.push(DailyBar {
                date: start + chrono::Duration::days(d as i64),
                ticker: format!("T{t:02}"),
                open,
                high: open.max(close) + 10.0,
                low: open.min(close) - 10.0,
                close,
                volume,
                prev_close: close,
                limit_up: None,
                limit_down: None,
                is_ipo_day: false,
            });
        }
    }
    let panel = MarketPanel::from_bars(&bars, 0.1);
    let mut catalog_src = String::from("f0,(close - 1000)\n");
    if nf > 1 {
        catalog_src.push_str("f1,(open - 1000)\n");
    }
    if nf > 2 {
        catalog_src.push_str("f2,(volume - 1000)\n");
    }
    let catalog = load_catalog_str(&catalog_src).unwrap();
    (FactorTensor::evaluate(&catalog, &panel), panel)
}

fn grid_from(values: &[Vec<f64>]) -> crate::data::Grid {
    let nd = values.len();
    let nt = values[0].len();
    let mut g = crate::data::Grid::missing(nd, nt);
    for d in 0..nd {
        for t in 0..nt {
            g.set(d, t, values[d][t]);
        }
    }
    g
}

#[test]
fn noiseless_recovery_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (nd, nt) = (30, 12);
    let f0 = zscored_random(&mut rng, nd, nt);
    let f1 = zscored_random(&mut rng, nd, nt);
    let f2 = zscored_random(&mut rng, nd, nt);
    // y = 0.5 * f2 + 0.1, the other factors are ignored.
    let y: Vec<Vec<f64>> = (0..nd)
        .map(|d| (0..nt).map(|t| 0.5 * f2[d][t] + 0.1).collect())
        .collect();
    let (tensor, panel) = controlled_tensor(&[f0, f1, f2]);
    let fwd = grid_from(&y);
    let outcome = fit_ols(&tensor, &fwd, 0..nd, &panel).unwrap();
    assert!(!outcome.ridge_used);
    let model = outcome.model;
    assert!((model.beta0 - 0.1).abs() < 1e-8, "beta0 {}", model.beta0);
    assert!((model.coef("f2").unwrap().beta - 0.5).abs() < 1e-8);
    assert!(model.coef("f0").unwrap().beta.abs() < 1e-8);
    assert!(model.coef("f1").unwrap().beta.abs() < 1e-8);
}

#[test]
fn duplicate_columns_get_symmetric_ridge_betas() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (nd, nt) = (25, 10);
    let f0 = zscored_random(&mut rng, nd, nt);
    let dup = f0.clone();
    let y: Vec<Vec<f64>> = (0..nd)
        .map(|d| (0..nt).map(|t| 0.4 * f0[d][t] + 0.02).collect())
        .collect();
    let (tensor, panel) = controlled_tensor(&[f0, dup]);
    let outcome = fit_ols(&tensor, &grid_from(&y), 0..nd, &panel).unwrap();
    assert!(outcome.ridge_used, "duplicate columns must trip the ridge fallback");
    let b0 = outcome.model.coef("f0").unwrap().beta;
    let b1 = outcome.model.coef("f1").unwrap().beta;
    assert!(b0.is_finite() && b1.is_finite());
    assert!((b0 - b1).abs() < 1e-6, "ridge betas should split evenly: {b0} vs {b1}");
    assert!(((b0 + b1) - 0.4).abs() < 1e-4);
}

/// Hand-rolled normal-equations oracle: builds X'X and X'y explicitly and
/// solves by Gaussian elimination with partial pivoting. Independent of the
/// nalgebra path used by the implementation.
fn normal_equations_oracle(rows: &[Vec<f64>], ys: &[f64]) -> Vec<f64> {
    let k = rows[0].len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for (row, y) in rows.iter().zip(ys) {
        for i in 0..k {
            for j in 0..k {
                a[i][j] += row[i] * row[j];
            }
            a[i][k] += row[i] * y;
        }
    }
    // Gaussian elimination.
    for col in 0..k {
        let pivot = (col..k).max_by(|x, y| a[*x][col].abs().partial_cmp(&a[*y][col].abs()).unwrap()).unwrap();
        a.swap(col, pivot);
        let p = a[col][col];
        assert!(p.abs() > 1e-12, "oracle hit a singular design");
        for j in col..=k {
            a[col][j] /= p;
        }
        for row in 0..k {
            if row != col {
                let factor = a[row][col];
                for j in col..=k {
                    a[row][j] -= factor * a[col][j];
                }
            }
        }
    }
    (0..k).map(|i| a[i][k]).collect()
}

#[test]
fn random_pool_matches_normal_equations_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (nd, nt) = (60, 20);
    let f0 = zscored_random(&mut rng, nd, nt);
    let f1 = zscored_random(&mut rng, nd, nt);
    let f2 = zscored_random(&mut rng, nd, nt);
    let y: Vec<Vec<f64>> = (0..nd)
        .map(|d| {
            (0..nt)
                .map(|t| {
                    0.3 * f0[d][t] - 0.2 * f1[d][t] + 0.05 * f2[d][t]
                        + 0.01
                        + 0.002 * rng.gen_range(-1.0..1.0)
                })
                .collect()
        })
        .collect();
    let (tensor, panel) = controlled_tensor(&[f0.clone(), f1.clone(), f2.clone()]);
    let outcome = fit_ols(&tensor, &grid_from(&y), 0..nd, &panel).unwrap();

    // The implementation standardizes per-date z-scores with pooled stats;
    // replicate that exact pool here for the oracle.
    let pool_stats = |f: &Vec<Vec<f64>>| {
        let all: Vec<f64> = f.iter().flatten().copied().collect();
        let m = all.iter().sum::<f64>() / all.len() as f64;
        let v = all.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / all.len() as f64;
        (m, v.sqrt())
    };
    let stats = [pool_stats(&f0), pool_stats(&f1), pool_stats(&f2)];
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    for d in 0..nd {
        for t in 0..nt {
            rows.push(vec![
                1.0,
                (f0[d][t] - stats[0].0) / stats[0].1,
                (f1[d][t] - stats[1].0) / stats[1].1,
                (f2[d][t] - stats[2].0) / stats[2].1,
            ]);
            ys.push(y[d][t]);
        }
    }
    let oracle = normal_equations_oracle(&rows, &ys);
    assert!((outcome.model.beta0 - oracle[0]).abs() < 1e-8);
    assert!((outcome.model.coef("f0").unwrap().beta - oracle[1]).abs() < 1e-8);
    assert!((outcome.model.coef("f1").unwrap().beta - oracle[2]).abs() < 1e-8);
    assert!((outcome.model.coef("f2").unwrap().beta - oracle[3]).abs() < 1e-8);

    // Residual orthogonality on the training pool.
    let k = 4;
    let mut grad: Vec<f64> = vec![0.0; k];
    for (row, yv) in rows.iter().zip(&ys) {
        let pred: f64 = row
            .iter()
            .zip(
                std::iter::once(&outcome.model.beta0)
                    .chain(outcome.model.coefs.iter().map(|c| &c.beta)),
            )
            .map(|(x, b)| x * b)
            .sum();
        for i in 0..k {
            grad[i] += row[i] * (yv - pred);
        }
    }
    for g in &grad {
        assert!((g / rows.len() as f64).abs() < 1e-8, "orthogonality violated: {g}");
    }
}

#[test]
fn empty_selection_scores_beta0_everywhere() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f0 = zscored_random(&mut rng, 10, 6);
    let (tensor, _panel) = controlled_tensor(&[f0]);
    let model = LinearModel {
        beta0: 0.0123,
        coefs: vec![FactorCoef { id: "f0".into(), beta: 0.5, pool_mean: 0.0, pool_std: 1.0 }],
        fit_window: ("2024-01-01".parse().unwrap(), "2024-01-10".parse().unwrap()),
    };
    let scores = predict_returns(&model, &[], &tensor.cross_section(5));
    assert!(scores.iter().all(|s| (*s - 0.0123).abs() < 1e-15));
}

#[test]
fn hand_evaluated_single_factor_score() {
    // Cross-section [4, 0, 0, 0, 0] z-scores to 2.0 for the first ticker.
    let values = vec![vec![4.0, 0.0, 0.0, 0.0, 0.0]];
    let (tensor, _panel) = controlled_tensor(&[values]);
    let model = LinearModel {
        beta0: 0.1,
        coefs: vec![FactorCoef { id: "f0".into(), beta: 0.5, pool_mean: 0.0, pool_std: 1.0 }],
        fit_window: ("2024-01-01".parse().unwrap(), "2024-01-01".parse().unwrap()),
    };
    let scores = predict_returns(&model, &["f0".to_string()], &tensor.cross_section(0));
    assert!((scores[0] - 1.1).abs() < 1e-12, "got {}", scores[0]);
}

#[test]
fn full_selection_reproduces_fitted_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (nd, nt) = (20, 8);
    let f0 = zscored_random(&mut rng, nd, nt);
    let f1 = zscored_random(&mut rng, nd, nt);
    let y: Vec<Vec<f64>> = (0..nd)
        .map(|d| {
            (0..nt)
                .map(|t| 0.2 * f0[d][t] - 0.1 * f1[d][t] + 0.003 * rng.gen_range(-1.0..1.0))
                .collect()
        })
        .collect();
    let (tensor, panel) = controlled_tensor(&[f0, f1]);
    let fwd = grid_from(&y);
    let outcome = fit_ols(&tensor, &fwd, 0..nd, &panel).unwrap();
    let model = &outcome.model;
    let selection: Vec<String> = vec!["f0".into(), "f1".into()];

    // Recompute fitted values through predict_returns on a training date and
    // compare with the direct X*beta evaluation.
    for d in [0, 7, nd - 1] {
        let scores = predict_returns(model, &selection, &tensor.cross_section(d));
        for t in 0..nt {
            let z0 = cross_sectional_zscores(tensor.factor_row(0, d))[t];
            let z1 = cross_sectional_zscores(tensor.factor_row(1, d))[t];
            let c0 = model.coef("f0").unwrap();
            let c1 = model.coef("f1").unwrap();
            let direct = model.beta0
                + c0.beta * (z0 - c0.pool_mean) / c0.pool_std
                + c1.beta * (z1 - c1.pool_mean) / c1.pool_std;
            assert!((scores[t] - direct).abs() < 1e-10);
        }
    }
}

#[test]
fn unselected_beta_never_moves_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let f0 = zscored_random(&mut rng, 6, 5);
    let f1 = zscored_random(&mut rng, 6, 5);
    let (tensor, _panel) = controlled_tensor(&[f0, f1]);
    let mk = |beta1: f64| LinearModel {
        beta0: 0.01,
        coefs: vec![
            FactorCoef { id: "f0".into(), beta: 0.3, pool_mean: 0.0, pool_std: 1.0 },
            FactorCoef { id: "f1".into(), beta: beta1, pool_mean: 0.0, pool_std: 1.0 },
        ],
        fit_window: ("2024-01-01".parse().unwrap(), "2024-01-06".parse().unwrap()),
    };
    let selection = vec!["f0".to_string()];
    let a = predict_returns(&mk(0.5), &selection, &tensor.cross_section(2));
    let b = predict_returns(&mk(-9.0), &selection, &tensor.cross_section(2));
    assert_eq!(a, b);
}

#[test]
fn rank_ic_matches_trivial_cases_and_oracle() {
    let fwd = [0.01, 0.03, -0.02, 0.05, 0.0];
    assert!((rank_ic(&fwd, &fwd).unwrap() - 1.0).abs() < 1e-15);
    let neg: Vec<f64> = fwd.iter().map(|v| -v).collect();
    assert!((rank_ic(&neg, &fwd).unwrap() + 1.0).abs() < 1e-15);

    // Brute-force rank-then-Pearson oracle on random 10-point vectors.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..50 {
        let xs: Vec<f64> = (0..10).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let ys: Vec<f64> = (0..10).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let got = rank_ic(&xs, &ys).unwrap();
        let rank = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .map(|x| {
                    let less = v.iter().filter(|o| **o < *x).count() as f64;
                    let eq = v.iter().filter(|o| **o == *x).count() as f64;
                    less + (eq + 1.0) / 2.0
                })
                .collect()
        };
        let rx = rank(&xs);
        let ry = rank(&ys);
        let n = 10.0;
        let mx = rx.iter().sum::<f64>() / n;
        let my = ry.iter().sum::<f64>() / n;
        let num: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
        let dx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
        let dy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
        let expected = num / (dx * dy).sqrt();
        assert!((got - expected).abs() < 1e-12);
    }
}

#[test]
fn rank_ic_needs_three_common_points() {
    let a = [1.0, f64::NAN, 2.0, 3.0];
    let b = [0.1, 0.2, f64::NAN, 0.3];
    assert!(rank_ic(&a, &b).is_none());
    let c = [1.0, 1.0, 1.0, 1.0];
    let d = [0.1, 0.2, 0.3, 0.4];
    assert!(rank_ic(&c, &d).is_none(), "constant side has no ranks to correlate");
}

#[test]
fn model_text_round_trip_is_a_fixpoint() {
    let model = LinearModel {
        beta0: 0.000123456789123,
        coefs: vec![
            FactorCoef {
                id: "alpha_006".into(),
                beta: -0.00456789123456,
                pool_mean: 0.0000123,
                pool_std: 0.999999999999,
            },
            FactorCoef { id: "alpha_012".into(), beta: 0.25, pool_mean: -0.5, pool_std: 2.0 },
        ],
        fit_window: ("2024-01-02".parse().unwrap(), "2024-03-29".parse().unwrap()),
    };
    let text = model.to_text();
    let parsed = LinearModel::from_text(&text).unwrap();
    assert_eq!(text, parsed.to_text());
    assert_eq!(parsed.coefs.len(), 2);
    assert_eq!(parsed.fit_window, model.fit_window);
}

#[test]
fn adding_constant_to_beta0_preserves_ranking() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let f0 = zscored_random(&mut rng, 4, 9);
    let (tensor, _panel) = controlled_tensor(&[f0]);
    let mk = |b0: f64| LinearModel {
        beta0: b0,
        coefs: vec![FactorCoef { id: "f0".into(), beta: 0.7, pool_mean: 0.0, pool_std: 1.0 }],
        fit_window: ("2024-01-01".parse().unwrap(), "2024-01-04".parse().unwrap()),
    };
    let sel = vec!["f0".to_string()];
    let a = predict_returns(&mk(0.0), &sel, &tensor.cross_section(1));
    let b = predict_returns(&mk(123.0), &sel, &tensor.cross_section(1));
    let order = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|x, y| v[*y].partial_cmp(&v[*x]).unwrap());
        idx
    };
    assert_eq!(order(&a), order(&b));
}
