//! Cross-checks against independent oracles: exhaustive path
//! enumeration for DTW, a closed-form Pearson formula, and exact
//! rational arithmetic for the least-squares fit.

use chrono::NaiveDate;
use demand_pulse_core::dtw::{dtw_distance, CostKind, CostMatrix};
use demand_pulse_core::spatial::ols_fit;
use demand_pulse_core::{correlate, DateIndexedSeries};
use num::rational::BigRational;
use num::{BigInt, ToPrimitive, Zero};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn series_from(values: &[f64]) -> DateIndexedSeries {
    let start = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
    let entries = values
        .iter()
        .enumerate()
        .map(|(i, &v)| (start + chrono::Days::new(i as u64), v))
        .collect();
    DateIndexedSeries::new("s", entries).unwrap()
}

/// Minimum-cost monotone path total, found by trying every path.
fn exhaustive_dtw(cost: &CostMatrix) -> f64 {
    fn walk(cost: &CostMatrix, i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + cost.at(i, j);
        if i + 1 == cost.rows() && j + 1 == cost.cols() {
            if acc < *best {
                *best = acc;
            }
            return;
        }
        if i + 1 < cost.rows() && j + 1 < cost.cols() {
            walk(cost, i + 1, j + 1, acc, best);
        }
        if i + 1 < cost.rows() {
            walk(cost, i + 1, j, acc, best);
        }
        if j + 1 < cost.cols() {
            walk(cost, i, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(cost, 0, 0, 0.0, &mut best);
    best
}

#[test]
fn dtw_matches_exhaustive_path_enumeration() {
    // Dyadic values make every path sum exact, so equality is exact.
    const POOL: [f64; 6] = [0.0, 0.5, 1.0, 1.75, 2.0, 3.0];
    let mut rng = StdRng::seed_from_u64(0xd7d7);
    let mut checked = 0u64;
    for _ in 0..2500 {
        let n = rng.gen_range(1..=6);
        let m = rng.gen_range(1..=6);
        let q: Vec<f64> = (0..n).map(|_| POOL[rng.gen_range(0..POOL.len())]).collect();
        let c: Vec<f64> = (0..m).map(|_| POOL[rng.gen_range(0..POOL.len())]).collect();
        for kind in [CostKind::Absolute, CostKind::Squared] {
            let cost = CostMatrix::from_values(&q, &c, kind).unwrap();
            let result = dtw_distance(&cost);
            let oracle = exhaustive_dtw(&cost);
            assert_eq!(result.distance, oracle, "q={q:?} c={c:?} kind={kind:?}");

            // The reported path must be valid and achieve the distance.
            result.path.validate(n, m).unwrap();
            let along: f64 = result.path.0.iter().map(|&(i, j)| cost.at(i - 1, j - 1)).sum();
            assert_eq!(along, result.distance);
            checked += 1;
        }
    }
    assert!(checked >= 5000);
}

/// Closed-form single-pass Pearson formula (a different algorithm from
/// the two-pass implementation).
fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let syy: f64 = y.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

#[test]
fn pearson_matches_closed_form_oracle() {
    let mut rng = StdRng::seed_from_u64(42);
    for _ in 0..1000 {
        let n = rng.gen_range(3..=50);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let got = correlate::pearson_values(&x, &y).unwrap();
        let want = pearson_oracle(&x, &y);
        assert!(
            (got - want).abs() < 1e-12,
            "implementation {got} vs oracle {want}"
        );
    }
}

#[test]
fn pearson_survives_large_offsets_where_the_naive_formula_cannot() {
    let mut rng = StdRng::seed_from_u64(7);
    for _ in 0..100 {
        let n = rng.gen_range(5..=60);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let base = correlate::pearson_values(&x, &y).unwrap();
        let shifted_x: Vec<f64> = x.iter().map(|v| v + 1.0e8).collect();
        let shifted = correlate::pearson_values(&shifted_x, &y).unwrap();
        assert!(
            (base - shifted).abs() < 1e-6,
            "two-pass correlation must be shift-stable: {base} vs {shifted}"
        );
    }
}

#[test]
fn pearson_is_affine_invariant() {
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..200 {
        let n = rng.gen_range(3..=40);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let scaled: Vec<f64> = x.iter().map(|v| 3.0 * v + 7.0).collect();
        let a = correlate::pearson_values(&x, &y).unwrap();
        let b = correlate::pearson_values(&scaled, &y).unwrap();
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn pearson_squared_matches_exact_rational_arithmetic() {
    let big = |v: i64| BigRational::from_integer(BigInt::from(v));
    let mut rng = StdRng::seed_from_u64(1234);
    let mut effective = 0;
    while effective < 200 {
        let n = rng.gen_range(3..=30);
        let x: Vec<i64> = (0..n).map(|_| rng.gen_range(-50..=50)).collect();
        let y: Vec<i64> = (0..n).map(|_| rng.gen_range(-50..=50)).collect();
        let nq = big(n as i64);
        let sx: BigRational = x.iter().map(|&v| big(v)).sum();
        let sy: BigRational = y.iter().map(|&v| big(v)).sum();
        let mx = sx / nq.clone();
        let my = sy / nq;
        let sxx: BigRational = x.iter().map(|&v| (big(v) - mx.clone()).pow(2)).sum();
        let syy: BigRational = y.iter().map(|&v| (big(v) - my.clone()).pow(2)).sum();
        let sxy: BigRational = x
            .iter()
            .zip(&y)
            .map(|(&a, &b)| (big(a) - mx.clone()) * (big(b) - my.clone()))
            .sum();
        if sxx.is_zero() || syy.is_zero() {
            continue;
        }
        effective += 1;
        let r2_exact = (sxy.clone() * sxy.clone() / (sxx * syy)).to_f64().unwrap();

        let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
        let r = correlate::pearson_values(&xf, &yf).unwrap();
        assert!((r * r - r2_exact).abs() < 1e-12, "r²={} exact={r2_exact}", r * r);
        let num_sign = if sxy.is_zero() {
            0.0
        } else if sxy > BigRational::zero() {
            1.0
        } else {
            -1.0
        };
        if num_sign != 0.0 {
            assert_eq!(r.signum(), num_sign);
        }
    }
}

/// Normal equations solved in exact rational arithmetic.
fn ols_oracle(points: &[(i64, i64)]) -> (f64, f64, Option<f64>) {
    let big = |v: i64| BigRational::from_integer(BigInt::from(v));
    let n = big(points.len() as i64);
    let sx: BigRational = points.iter().map(|p| big(p.0)).sum();
    let sy: BigRational = points.iter().map(|p| big(p.1)).sum();
    let mx = sx / n.clone();
    let my = sy / n;
    let sxx: BigRational = points.iter().map(|p| (big(p.0) - mx.clone()).pow(2)).sum();
    let sxy: BigRational = points
        .iter()
        .map(|p| (big(p.0) - mx.clone()) * (big(p.1) - my.clone()))
        .sum();
    let slope = sxy / sxx;
    let intercept = my.clone() - slope.clone() * mx;
    let ss_tot: BigRational = points.iter().map(|p| (big(p.1) - my.clone()).pow(2)).sum();
    let ss_res: BigRational = points
        .iter()
        .map(|p| {
            let fitted = intercept.clone() + slope.clone() * big(p.0);
            (big(p.1) - fitted).pow(2)
        })
        .sum();
    let r2 = if ss_tot.is_zero() {
        None
    } else {
        Some((BigRational::from_integer(BigInt::from(1)) - ss_res / ss_tot).to_f64().unwrap())
    };
    (slope.to_f64().unwrap(), intercept.to_f64().unwrap(), r2)
}

#[test]
fn least_squares_matches_exact_rational_oracle() {
    let mut rng = StdRng::seed_from_u64(99);
    let mut effective = 0;
    while effective < 100 {
        let n = rng.gen_range(2..=77);
        let points: Vec<(i64, i64)> = (0..n)
            .map(|_| (rng.gen_range(0..=5000), rng.gen_range(0..=5000)))
            .collect();
        let first_x = points[0].0;
        if points.iter().all(|p| p.0 == first_x) {
            continue;
        }
        effective += 1;
        let float_points: Vec<(f64, f64)> =
            points.iter().map(|&(x, y)| (x as f64, y as f64)).collect();
        let fit = ols_fit(&float_points).unwrap();
        let (slope, intercept, r2) = ols_oracle(&points);
        assert!((fit.slope - slope).abs() < 1e-9 * slope.abs().max(1.0));
        assert!((fit.intercept - intercept).abs() < 1e-9 * intercept.abs().max(1.0));
        match (fit.r_squared, r2) {
            (Some(a), Some(b)) => assert!((a - b).abs() < 1e-9),
            (got, want) => assert_eq!(got.is_some(), want.is_some()),
        }
    }
}

#[test]
fn correlation_matrix_cells_match_pairwise_calls() {
    let mut rng = StdRng::seed_from_u64(5);
    let series: Vec<DateIndexedSeries> = (0..5)
        .map(|k| {
            let values: Vec<f64> = (0..30).map(|_| rng.gen_range(-10.0..10.0)).collect();
            series_from(&values).relabeled(format!("s{k}"))
        })
        .collect();
    let matrix = correlate::correlation_matrix(&series);
    for i in 0..5 {
        for j in 0..5 {
            let cell = matrix.value(i, j).unwrap();
            if i == j {
                assert_eq!(cell, 1.0);
            } else {
                let direct = correlate::pearson(&series[i], &series[j]).unwrap();
                assert_eq!(cell, direct, "cell ({i},{j})");
            }
        }
    }
}
