use chrono::{Duration, NaiveDate};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::*;
use crate::factor_model::{excess_returns, ReturnPanel};
use crate::regression::{ols, Coefficient, RegressionFit};

fn normal(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    Normal::new(0.0, sd).unwrap().sample(rng)
}

fn weeks(n: usize) -> Vec<NaiveDate> {
    let start = NaiveDate::from_ymd_opt(2013, 1, 4).unwrap();
    (0..n).map(|i| start + Duration::weeks(i as i64)).collect()
}

fn fit_with(sse: f64, sst: f64, n: usize, r: usize) -> RegressionFit {
    RegressionFit {
        intercept: Some(Coefficient {
            estimate: 0.1,
            std_error: 0.05,
            t_stat: 2.0,
            p_value: 0.05,
        }),
        coefficients: Vec::new(),
        dropped: Vec::new(),
        n,
        r,
        sse,
        sst,
        sigma2: sse / (n - r - 1) as f64,
        residuals: Vec::new(),
    }
}

#[test]
fn adjusted_r2_reference_values() {
    assert_eq!(adjusted_r2_insample(&fit_with(0.0, 3.0, 20, 2)), Some(1.0));
    let v = adjusted_r2_insample(&fit_with(50.0, 100.0, 100, 5)).unwrap();
    assert!((v - (1.0 - 0.5 * 99.0 / 94.0)).abs() < 1e-15);
    assert!((v - 0.4734).abs() < 1e-4);
    assert_eq!(adjusted_r2_insample(&fit_with(0.0, 0.0, 20, 2)), None);
    assert_eq!(adjusted_r2_insample(&fit_with(1.0, 2.0, 3, 2)), None);
}

#[test]
fn intercept_only_fit_has_zero_adjusted_r2() {
    let y = [0.3, -0.1, 0.4, 0.05, 0.2];
    let fit = ols(&y, &[], true).unwrap();
    assert!(adjusted_r2_insample(&fit).unwrap().abs() < 1e-12);
}

#[test]
fn out_of_sample_adjusted_r2() {
    let actual = [0.1, -0.2, 0.3, 0.05, -0.1, 0.2];
    assert_eq!(adjusted_r2_oos(&actual, &actual, 0.0, 2).unwrap(), Some(1.0));
    let m = 0.07;
    let flat = vec![m; actual.len()];
    assert!(adjusted_r2_oos(&flat, &actual, m, 0).unwrap().unwrap().abs() < 1e-15);
    let bad = vec![0.5; actual.len()];
    assert!(adjusted_r2_oos(&bad, &actual, m, 1).unwrap().unwrap() < 0.0);
    // Hand evaluation for r = 1.
    let pred = [0.0, -0.1, 0.2, 0.1, 0.0, 0.1];
    let sse: f64 = pred.iter().zip(&actual).map(|(p, y)| (y - p) * (y - p)).sum();
    let sst: f64 = actual.iter().map(|y| (y - m) * (y - m)).sum();
    let want = 1.0 - (sse / 4.0) / (sst / 5.0);
    assert!((adjusted_r2_oos(&pred, &actual, m, 1).unwrap().unwrap() - want).abs() < 1e-15);
    assert_eq!(adjusted_r2_oos(&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0], 1.0, 0).unwrap(), None);
    assert!(adjusted_r2_oos(&[1.0], &[1.0, 2.0], 0.0, 0).is_err());
    assert!(adjusted_r2_oos(&[1.0, 2.0], &[1.0, 2.0], 0.0, 1).is_err());
}

#[test]
fn intercept_test_edge_cases() {
    let mut fit = fit_with(1.0, 2.0, 30, 2);
    fit.intercept.as_mut().unwrap().estimate = 0.0;
    fit.intercept.as_mut().unwrap().t_stat = 0.0;
    assert_eq!(intercept_test(&fit), Some(1.0));
    let mut fit = fit_with(0.0, 2.0, 30, 2);
    fit.sigma2 = 0.0;
    assert_eq!(intercept_test(&fit), None);
    let mut fit = fit_with(1.0, 2.0, 30, 2);
    fit.intercept = None;
    assert_eq!(intercept_test(&fit), None);
    // t = 2 on 27 degrees of freedom.
    let p = intercept_test(&fit_with(1.0, 2.0, 30, 2)).unwrap();
    assert!((p - crate::stats::t_two_sided_p(2.0, 27.0)).abs() < 1e-15);
}

#[test]
fn nested_f_test_reference_values() {
    let r = nested_f_test(100.0, 80.0, 5, 265, 5).unwrap();
    assert!((r.f_stat - 12.75).abs() < 1e-12);
    assert_eq!((r.r1, r.r2, r.n), (5, 5, 265));
    assert!(r.p_value > 0.0 && r.p_value < 1e-9);
    let same = nested_f_test(3.0, 3.0, 2, 50, 5).unwrap();
    assert_eq!((same.f_stat, same.p_value), (0.0, 1.0));
    let exact = nested_f_test(3.0, 0.0, 2, 50, 5).unwrap();
    assert_eq!((exact.f_stat, exact.p_value), (f64::INFINITY, 0.0));
    assert!(nested_f_test(3.0, 4.0, 2, 50, 5).is_err());
    assert!(nested_f_test(3.0, 2.0, 2, 7, 5).is_err());
    assert!(nested_f_test(3.0, 2.0, 0, 50, 5).is_err());
}

#[test]
fn corrections_on_hand_examples() {
    let ones = vec![1.0; 6];
    for method in [Correction::Bonferroni, Correction::Bh, Correction::Bhy] {
        let r = multiple_test_correct(&ones, method, 0.05).unwrap();
        assert_eq!(r.n_rejected(), 0);
        assert!(r.qvalues.iter().all(|&q| q == 1.0));
    }
    let p = [0.04, 0.01, 0.05, 0.02];
    let bh = multiple_test_correct(&p, Correction::Bh, 0.05).unwrap();
    assert_eq!(bh.rejected, vec![true; 4]);
    let bonf = multiple_test_correct(&p, Correction::Bonferroni, 0.05).unwrap();
    assert_eq!(bonf.rejected, vec![false, true, false, false]);
    // c(4) = 25/12; thresholds k * 0.05 / (4 * 25/12) = 0.006k.
    let bhy = multiple_test_correct(&p, Correction::Bhy, 0.05).unwrap();
    assert_eq!(bhy.rejected, vec![false; 4]);
    assert!((harmonic(4) - 25.0 / 12.0).abs() < 1e-15);
    assert_eq!(bucket_counts(&[0.0, 0.05, 0.050001, 0.9, 0.9000001, 1.0]), [2, 2, 2]);
    assert!(multiple_test_correct(&[1.2], Correction::Bh, 0.05).is_err());
    assert!(multiple_test_correct(&[0.2], Correction::Bh, 0.0).is_err());
    let empty = multiple_test_correct(&[], Correction::Bhy, 0.05).unwrap();
    assert!(empty.rejected.is_empty());
}

/// `q_k = min_{j >= k} min(1, m c p_(j) / j)` evaluated directly.
fn naive_qvalues(p: &[f64], c: f64) -> Vec<f64> {
    let m = p.len();
    let mut sorted: Vec<(f64, usize)> = p.iter().copied().zip(0..).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out = vec![0.0; m];
    for k in 0..m {
        let q = (k..m)
            .map(|j| (m as f64 * c * sorted[j].0 / (j + 1) as f64).min(1.0))
            .fold(f64::INFINITY, f64::min);
        out[sorted[k].1] = q;
    }
    out
}

proptest! {
    #[test]
    fn bh_contains_bhy_and_bonferroni(p in prop::collection::vec(0.0f64..=1.0, 1..60), level in 0.01f64..0.2) {
        let bh = multiple_test_correct(&p, Correction::Bh, level).unwrap();
        let bhy = multiple_test_correct(&p, Correction::Bhy, level).unwrap();
        let bonf = multiple_test_correct(&p, Correction::Bonferroni, level).unwrap();
        for i in 0..p.len() {
            prop_assert!(!bhy.rejected[i] || bh.rejected[i]);
            prop_assert!(!bonf.rejected[i] || bh.rejected[i]);
        }
    }

    #[test]
    fn qvalues_match_direct_formula(p in prop::collection::vec(0.0f64..=1.0, 1..40)) {
        for (method, c) in [(Correction::Bh, 1.0), (Correction::Bhy, harmonic(p.len()))] {
            let r = multiple_test_correct(&p, method, 0.05).unwrap();
            let want = naive_qvalues(&p, c);
            for i in 0..p.len() {
                prop_assert!((r.qvalues[i] - want[i]).abs() <= 1e-12 * want[i].max(1e-300));
                prop_assert!(r.qvalues[i] >= p[i] * (1.0 - 1e-15) && r.qvalues[i] <= 1.0);
            }
        }
    }

    #[test]
    fn step_up_decisions_agree_with_qvalues(p in prop::collection::vec(0.0f64..=1.0, 1..40), level in 0.01f64..0.2) {
        for method in [Correction::Bh, Correction::Bhy] {
            let r = multiple_test_correct(&p, method, level).unwrap();
            for i in 0..p.len() {
                // Away from the boundary the two descriptions coincide.
                if (r.qvalues[i] - level).abs() > 1e-12 {
                    prop_assert_eq!(r.rejected[i], r.qvalues[i] <= level);
                }
            }
        }
    }

    #[test]
    fn rejected_f_test_implies_higher_adjusted_r2(seed in 0u64..10_000, n in 30usize..120, r2 in 1usize..4, signal in 0.0f64..0.6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..5 + r2).map(|_| (0..n).map(|_| normal(&mut rng, 1.0)).collect()).collect();
        let y: Vec<f64> = (0..n).map(|t| 0.5 * cols[0][t] + signal * cols[5][t] + normal(&mut rng, 1.0)).collect();
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        let restricted = ols(&y, &refs[..5], true).unwrap();
        let full = ols(&y, &refs, true).unwrap();
        let f = nested_f_test(restricted.sse, full.sse, r2, n, 5).unwrap();
        if f.p_value < 0.05 {
            prop_assert!(adjusted_r2_insample(&full).unwrap() >= adjusted_r2_insample(&restricted).unwrap());
        }
    }
}

#[test]
fn industry_vocabulary_has_seventeen_names() {
    let mut names = INDUSTRIES.to_vec();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), 17);
    assert!(IndustryMap::new([("A".to_string(), "Banking".to_string())]).is_err());
    assert!(IndustryMap::new([("A".into(), "Energy".into()), ("A".into(), "Energy".into())]).is_err());
}

fn stock_eval(stock: &str, model: Model, ins: f64, oos: f64) -> StockEvaluation {
    StockEvaluation {
        stock: stock.into(),
        model,
        n_regressors: 1,
        in_sample: Some(ins),
        oos_explanation: Some(oos),
        oos_prediction: None,
        intercept_p: Some(0.5),
    }
}

#[test]
fn industry_means_and_symmetry() {
    let map = IndustryMap::new(
        INDUSTRIES
            .iter()
            .enumerate()
            .map(|(i, ind)| (format!("S{i}"), ind.to_string())),
    )
    .unwrap();
    let evals: Vec<StockEvaluation> = (0..17)
        .map(|i| stock_eval(&format!("S{i}"), Model::Neus, i as f64 / 20.0, i as f64 / 40.0))
        .collect();
    let report = industry_summary(&evals, &map);
    assert_eq!(report.rows.len(), 34);
    for (i, ind) in INDUSTRIES.iter().enumerate() {
        let ins = report
            .rows
            .iter()
            .find(|r| r.industry == *ind && r.sample == Sample::InSample)
            .unwrap();
        assert_eq!(ins.mean_adjusted_r2, i as f64 / 20.0);
        assert_eq!(ins.n_stocks, 1);
    }

    let map = IndustryMap::new([
        ("A".to_string(), "Energy".to_string()),
        ("B".to_string(), "Energy".to_string()),
        ("C".to_string(), "Utilities".to_string()),
    ])
    .unwrap();
    let mut evals = vec![
        stock_eval("A", Model::Neus, 0.2, 0.1),
        stock_eval("B", Model::Neus, 0.4, 0.3),
        stock_eval("C", Model::Ff5, 0.5, 0.5),
        stock_eval("D", Model::Neus, 0.9, 0.9),
    ];
    let report = industry_summary(&evals, &map);
    let energy = report
        .rows
        .iter()
        .find(|r| r.industry == "Energy" && r.sample == Sample::InSample)
        .unwrap();
    assert!((energy.mean_adjusted_r2 - 0.3).abs() < 1e-15);
    assert_eq!(report.unclassified, vec!["D"]);
    assert_eq!(report.rows.last().unwrap().industry, UNCLASSIFIED);
    evals.reverse();
    assert_eq!(industry_summary(&evals, &map), report);
}

#[test]
fn industry_map_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("industries.csv");
    let map = IndustryMap::new([
        ("AAA".to_string(), "Real Estate/Construction".to_string()),
        ("BBB".to_string(), "Technology".to_string()),
    ])
    .unwrap();
    map.write_csv(&path).unwrap();
    assert_eq!(IndustryMap::load(&path).unwrap(), map);
}

#[test]
fn ff5_file_is_read_in_percent() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ff5.csv");
    std::fs::write(
        &path,
        "date,Mkt-RF,SMB,HML,RMW,CMA,RF\n20130104,1.5,-0.2,0.1,0.0,0.3,0.01\n2013-01-11,-2.0,0.5,0.25,-0.1,0.0,0.02\n",
    )
    .unwrap();
    let f = Ff5Factors::load(&path).unwrap();
    assert_eq!(f.dates, weeks(2));
    assert_eq!(f.factors[0], vec![0.015, -0.02]);
    assert_eq!(f.factors[2], vec![0.001, 0.0025]);
    assert_eq!(f.risk_free, vec![0.0001, 0.0002]);

    // Columns are found by name.
    std::fs::write(&path, "RF,date,CMA,RMW,HML,SMB,Mkt-RF\n0.01,2013-01-04,5,4,3,2,1\n").unwrap();
    let g = Ff5Factors::load(&path).unwrap();
    assert_eq!(g.factors.iter().map(|s| s[0]).collect::<Vec<_>>(), vec![0.01, 0.02, 0.03, 0.04, 0.05]);

    std::fs::write(&path, "date,Mkt-RF,SMB,HML,RMW,RF\n2013-01-04,1,2,3,4,5\n").unwrap();
    assert!(matches!(Ff5Factors::load(&path), Err(Error::Parse { .. })));

    let err = f.align(&weeks(3)).unwrap_err();
    assert!(err.to_string().contains("2013-01-18"), "{err}");
    assert_eq!(f.align(&weeks(2)[1..]).unwrap().factors[0], vec![-0.02]);
}

#[test]
fn ff5_write_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ff5.csv");
    let f = Ff5Factors {
        dates: weeks(3),
        factors: [
            vec![0.01, 0.02, -0.03],
            vec![0.0, 0.001, 0.002],
            vec![-0.004, 0.005, 0.006],
            vec![0.007, -0.008, 0.009],
            vec![0.25, 0.5, -0.75],
        ],
        risk_free: vec![0.0001, 0.0002, 0.0003],
    };
    f.write_csv(&path).unwrap();
    let g = Ff5Factors::load(&path).unwrap();
    assert_eq!(g.dates, f.dates);
    for k in 0..5 {
        for t in 0..3 {
            assert!((g.factors[k][t] - f.factors[k][t]).abs() < 1e-15);
        }
    }
}

/// Excess panel of `p` prototypes plus stocks, with five factor series of
/// which the first is the market.
struct Fixture {
    panel: ExcessPanel,
    ff5: Ff5Factors,
}

fn fixture(t: usize, p: usize, seed: u64, stocks: &[(&str, &dyn Fn(&[Vec<f64>], &[f64], &mut ChaCha8Rng) -> Vec<f64>)]) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rf = 0.0005;
    let mkt: Vec<f64> = (0..t).map(|_| 0.002 + normal(&mut rng, 0.02)).collect();
    let protos: Vec<Vec<f64>> = (0..p)
        .map(|_| {
            let beta = rng.random_range(0.5..1.5);
            mkt.iter().map(|m| beta * m + normal(&mut rng, 0.02)).collect()
        })
        .collect();
    let mut tickers: Vec<String> = (0..p).map(|j| format!("B{j}")).collect();
    let mut returns: Vec<Vec<f64>> = protos.iter().map(|s| s.iter().map(|v| v + rf).collect()).collect();
    for (name, f) in stocks {
        tickers.push(name.to_string());
        returns.push(f(&protos, &mkt, &mut rng).iter().map(|v| v + rf).collect());
    }
    let market = mkt.iter().map(|m| m + rf).collect();
    let raw = ReturnPanel::new(weeks(t), tickers, returns, market, vec![rf; t]).unwrap();
    let panel = excess_returns(&raw).unwrap();
    let mut factors: [Vec<f64>; 5] = Default::default();
    factors[0] = panel.market.clone();
    for f in factors.iter_mut().skip(1) {
        *f = (0..t).map(|_| normal(&mut rng, 0.01)).collect();
    }
    let ff5 = Ff5Factors {
        dates: panel.dates.clone(),
        factors,
        risk_free: vec![rf; t],
    };
    Fixture { panel, ff5 }
}

#[test]
fn baseline_shares_the_final_fit_path() {
    let combo = |protos: &[Vec<f64>], mkt: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..mkt.len()).map(|t| mkt[t] + 0.5 * protos[0][t] + normal(rng, 0.01)).collect()
    };
    let fx = fixture(120, 4, 5, &[("S", &combo)]);
    let s = fx.panel.position("S").unwrap();
    let mut ff5 = fx.ff5.clone();
    for j in 0..4 {
        ff5.factors[j + 1] = fx.panel.returns[j].clone();
    }
    let base = baseline_ff5_fit(&fx.panel, &ff5, s, 20..120, 0).unwrap();
    let direct = crate::factor_model::finalize_fit(&fx.panel, s, &[0, 1, 2, 3], 20..120, crate::factor_model::Mode::Explanation).unwrap();
    assert_eq!(base, direct);
}

#[test]
fn factor_combination_fits_exactly() {
    let fx = fixture(80, 2, 9, &[]);
    let mut panel = fx.panel.clone();
    let y: Vec<f64> = (0..80)
        .map(|t| 0.001 + (0..5).map(|k| (k as f64 + 1.0) * 0.3 * fx.ff5.factors[k][t]).sum::<f64>())
        .collect();
    panel.returns[0] = y;
    let fit = baseline_ff5_fit(&panel, &fx.ff5, 0, 10..80, 0).unwrap();
    assert!((fit.r_squared().unwrap() - 1.0).abs() < 1e-12);
    let misaligned = fx.ff5.align(&fx.ff5.dates[1..]).unwrap();
    assert!(baseline_ff5_fit(&panel, &misaligned, 0, 10..80, 0).is_err());
}

fn planted(protos: &[Vec<f64>], mkt: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..mkt.len())
        .map(|t| 0.9 * mkt[t] + 0.8 * protos[1][t] - 0.6 * protos[3][t] + normal(rng, 0.005))
        .collect()
}

fn selection(stock: &str, support: &[&str]) -> SelectionResult {
    SelectionResult {
        stock: stock.into(),
        mode: crate::factor_model::Mode::Explanation,
        penalty: crate::factor_model::Penalty::Mcp,
        path: vec![1.0],
        path_coefficients: vec![vec![]],
        mse: vec![1.0],
        se: vec![0.1],
        lambda_index: 0,
        lambda: 1.0,
        support: support.iter().map(|s| s.to_string()).collect(),
        capped: false,
        coefficients: vec![0.0; support.len()],
        market_beta: 1.0,
        intercept: 0.0,
        sigma2: 1.0,
        dropped: vec![],
        path_converged: true,
    }
}

#[test]
fn evaluation_favours_the_planted_model() {
    let gap = |protos: &[Vec<f64>], mkt: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
        let mut s = planted(protos, mkt, rng);
        s[150] = f64::NAN;
        s
    };
    let fx = fixture(200, 5, 21, &[("S", &planted), ("T", &planted), ("GAP", &gap)]);
    let split = Split { train_end: 100, valid_end: 150 };
    let explanation = vec![selection("S", &["B1", "B3"]), selection("T", &[]), selection("GAP", &["B1"])];
    let prediction = vec![selection("S", &["B1"])];
    let inputs = EvaluationInputs {
        panel: &fx.panel,
        ff5: &fx.ff5,
        split,
        window: 60,
        explanation: &explanation,
        prediction: &prediction,
    };
    let eval = evaluate(&inputs, &EvaluationConfig::default()).unwrap();
    assert_eq!(eval.skipped.len(), 1);
    assert_eq!(eval.skipped[0].stock, "GAP");
    assert_eq!(eval.stocks.len(), 4);
    let get = |stock: &str, model| eval.stocks.iter().find(|e| e.stock == stock && e.model == model).unwrap();
    let (neus, ff5) = (get("S", Model::Neus), get("S", Model::Ff5));
    assert_eq!(neus.n_regressors, 3);
    assert!(neus.in_sample.unwrap() > 0.9);
    assert!(neus.in_sample.unwrap() > ff5.in_sample.unwrap());
    assert!(neus.oos_explanation.unwrap() > ff5.oos_explanation.unwrap());
    assert!(neus.oos_prediction.is_some() && ff5.oos_prediction.is_some());
    assert!(get("T", Model::Neus).oos_prediction.is_none());

    // Only S adds regressors to the baseline.
    assert_eq!(eval.ftests.len(), 1);
    let f = &eval.ftests[0].record;
    assert_eq!((f.r1, f.r2, f.n), (5, 2, 60));
    assert!(f.p_value < 1e-10);

    // The in-sample NEUS fit for S is the final fit on the last training window.
    let s = fx.panel.position("S").unwrap();
    let fit = crate::factor_model::finalize_fit(&fx.panel, s, &[1, 3], 40..100, crate::factor_model::Mode::Explanation).unwrap();
    assert_eq!(neus.in_sample, adjusted_r2_insample(&fit));
    assert_eq!(neus.intercept_p, intercept_test(&fit));

    let threaded = evaluate(&inputs, &EvaluationConfig { threads: 3, ..Default::default() }).unwrap();
    assert_eq!(threaded, eval);
}

#[test]
fn out_of_sample_explanation_matches_direct_rolling_fit() {
    let fx = fixture(160, 4, 8, &[("S", &planted)]);
    let split = Split { train_end: 80, valid_end: 120 };
    let explanation = vec![selection("S", &["B1", "B3"])];
    let inputs = EvaluationInputs {
        panel: &fx.panel,
        ff5: &fx.ff5,
        split,
        window: 50,
        explanation: &explanation,
        prediction: &[],
    };
    let eval = evaluate(&inputs, &EvaluationConfig::default()).unwrap();
    let s = fx.panel.position("S").unwrap();
    let y = &fx.panel.returns[s];
    let regs = [fx.panel.market.as_slice(), &fx.panel.returns[1], &fx.panel.returns[3]];
    // Independent rolling refits through the plain least-squares routine.
    let (mut sse, mut sst) = (0.0, 0.0);
    let base = y[80..120].iter().sum::<f64>() / 40.0;
    for t in 120..160 {
        let cols: Vec<&[f64]> = regs.iter().map(|r| &r[t - 50..t]).collect();
        let fit = ols(&y[t - 50..t], &cols, true).unwrap();
        let pred = fit.alpha() + (0..3).map(|k| fit.coefficients[k].estimate * regs[k][t]).sum::<f64>();
        sse += (y[t] - pred).powi(2);
        sst += (y[t] - base).powi(2);
    }
    let want = 1.0 - (sse / 36.0) / (sst / 39.0);
    let got = eval.stocks.iter().find(|e| e.model == Model::Neus).unwrap().oos_explanation.unwrap();
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
}

#[test]
fn evaluation_rejects_bad_setup() {
    let fx = fixture(100, 4, 2, &[("S", &planted)]);
    let explanation = vec![selection("S", &["B1"])];
    let mut inputs = EvaluationInputs {
        panel: &fx.panel,
        ff5: &fx.ff5,
        split: Split { train_end: 40, valid_end: 70 },
        window: 50,
        explanation: &explanation,
        prediction: &[],
    };
    assert!(matches!(evaluate(&inputs, &EvaluationConfig::default()), Err(Error::Config(_))));
    let shifted = fx.ff5.align(&fx.ff5.dates[1..]).unwrap();
    inputs.ff5 = &shifted;
    inputs.window = 30;
    assert!(matches!(evaluate(&inputs, &EvaluationConfig::default()), Err(Error::Data(_))));
    inputs.ff5 = &fx.ff5;
    let unknown = vec![selection("S", &["NOPE"])];
    inputs.explanation = &unknown;
    assert!(matches!(evaluate(&inputs, &EvaluationConfig::default()), Err(Error::Lookup(_))));
}

#[test]
fn report_files_have_fixed_layout() {
    let fx = fixture(200, 5, 33, &[("S", &planted), ("T", &planted)]);
    let explanation = vec![selection("S", &["B1", "B3"]), selection("T", &["B1"])];
    let inputs = EvaluationInputs {
        panel: &fx.panel,
        ff5: &fx.ff5,
        split: Split { train_end: 100, valid_end: 150 },
        window: 60,
        explanation: &explanation,
        prediction: &explanation,
    };
    let eval = evaluate(&inputs, &EvaluationConfig::default()).unwrap();
    let map = IndustryMap::new([("S".to_string(), "Energy".to_string())]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = write_reports(dir.path(), &eval, &map, 0.05).unwrap();
    let read = |i: usize| std::fs::read_to_string(&paths[i]).unwrap();

    let intercept = read(0);
    let lines: Vec<&str> = intercept.lines().collect();
    assert_eq!(lines[0], "p_value,NEUS,FF5,NEUS_fdr_q,FF5_fdr_q");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("0-0.05,") && lines[2].starts_with("0.05-0.9,") && lines[3].starts_with("0.9-1,"));

    let comparison = read(1);
    let lines: Vec<&str> = comparison.lines().collect();
    assert!(lines[0].starts_with("# adjusted R2"));
    assert_eq!(lines[1], "task,NEUS_mean,NEUS_se,NEUS_n,FF5_mean,FF5_se,FF5_n");
    let tasks: Vec<&str> = lines[2..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(tasks, ["in_sample_explanation", "out_of_sample_explanation", "out_of_sample_prediction"]);
    let rows = comparison_report(&eval);
    let cells: Vec<&str> = lines[2].split(',').collect();
    assert_eq!(cells[1], crate::format::sig(rows[0].mean[0], 6));
    assert_eq!(cells[3], "2");

    let industry = read(2);
    assert!(industry.starts_with("industry,model,sample,n_stocks,mean_adjusted_r2\nEnergy,NEUS,in_sample,1,"));
    assert!(industry.contains("\nUnclassified,FF5,out_of_sample,1,"));

    let ftest = read(3);
    let lines: Vec<&str> = ftest.lines().collect();
    assert_eq!(lines[0], "stock,n,r1,r2,ss_f,ss_g,f_stat,p_value,bonferroni_reject,bh_reject");
    assert!(lines[1].starts_with("S,60,5,2,"));
    assert!(lines[1].ends_with(",true,true"));
    assert_eq!(lines.len(), 3);
}

#[test]
fn intercept_report_shares() {
    let mut eval = Evaluation::default();
    for (i, p) in [0.01, 0.5, 0.95, 0.7].iter().enumerate() {
        let mut e = stock_eval(&format!("S{i}"), Model::Neus, 0.1, 0.1);
        e.intercept_p = Some(*p);
        eval.stocks.push(e);
    }
    let mut none = stock_eval("Z", Model::Ff5, 0.1, 0.1);
    none.intercept_p = None;
    eval.stocks.push(none);
    let r = intercept_report(&eval, 0.05).unwrap();
    assert_eq!(r.n, [4, 0]);
    assert_eq!(r.p_shares[0], [0.25, 0.5, 0.25]);
    // BHY q-values: c(4) = 25/12; the smallest becomes 0.01 * 4 * 25/12 = 0.0833.
    assert_eq!(r.q_shares[0], [0.0, 0.25, 0.75]);
    assert!(r.p_shares[1][0].is_nan());
}
