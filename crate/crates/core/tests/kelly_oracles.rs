use kelly_core::expectation::ScenarioSet;
use kelly_core::kelly::{kelly_constrained, kelly_fully_invested, kelly_numerical, kelly_unconstrained, SolverOptions};
use kelly_core::{AssetUniverse, ExpectationMethod};
use proptest::prelude::*;

/// Maximiser of `sum q (m + D/2) - sum q^2 D / 2` over `q >= 0` and
/// `sum q <= 1` (or `= 1`), by trying every support with the budget free and bound.
fn enumerate_small_parameter_optimum(m: &[f64], d: &[f64], fully_invested: bool) -> Vec<f64> {
    let n = m.len();
    let value = |q: &[f64]| {
        (0..n)
            .map(|i| q[i] * (m[i] + d[i] / 2.0) - q[i] * q[i] * d[i] / 2.0)
            .sum::<f64>()
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    if !fully_invested {
        best = Some((0.0, vec![0.0; n]));
    }
    for mask in 1u32..(1 << n) {
        let s: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let mut candidates = Vec::new();
        if !fully_invested {
            let mut q = vec![0.0; n];
            s.iter().for_each(|&i| q[i] = 0.5 + m[i] / d[i]);
            candidates.push(q);
        }
        let inv: f64 = s.iter().map(|&i| 1.0 / d[i]).sum();
        let raw: f64 = s.iter().map(|&i| 0.5 + m[i] / d[i]).sum();
        let gamma = (1.0 - raw) / inv;
        let mut q = vec![0.0; n];
        s.iter().for_each(|&i| q[i] = 0.5 + (m[i] + gamma) / d[i]);
        candidates.push(q);
        for q in candidates {
            let total: f64 = q.iter().sum();
            let feasible = s.iter().all(|&i| q[i] > 0.0)
                && if fully_invested {
                    (total - 1.0).abs() < 1e-9
                } else {
                    total <= 1.0 + 1e-12
                };
            if feasible {
                let v = value(&q);
                if best.as_ref().is_none_or(|b| v > b.0) {
                    best = Some((v, q));
                }
            }
        }
    }
    best.unwrap().1
}

/// `E[ln(1 + q (e^eta - 1))]` by composite Simpson over +-12 standard deviations.
fn growth_by_simpson(q: f64, m: f64, d: f64) -> f64 {
    let s = d.sqrt();
    let n = 20_000;
    let (lo, hi) = (m - 12.0 * s, m + 12.0 * s);
    let h = (hi - lo) / n as f64;
    let f = |x: f64| {
        let z = (x - m) / s;
        (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt()) * (q * x.exp_m1()).ln_1p()
    };
    let mut acc = f(lo) + f(hi);
    for k in 1..n {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(lo + k as f64 * h);
    }
    acc * h / 3.0
}

fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..120 {
        let c = b - r * (b - a);
        let e = a + r * (b - a);
        if f(c) > f(e) {
            b = e;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

fn params(max_n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-0.2f64..0.3, 0.01f64..0.5), 1..=max_n)
}

proptest! {
    #[test]
    fn constrained_closed_form_is_the_enumerated_optimum(p in params(8)) {
        let u = AssetUniverse::from_params(&p).unwrap();
        let sol = kelly_constrained(&u).unwrap();
        let oracle = enumerate_small_parameter_optimum(&u.means(), &u.variances(), false);
        for (a, b) in sol.fractions.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-9, "{:?} vs {:?}", sol.fractions, oracle);
        }
    }

    #[test]
    fn fully_invested_closed_form_is_the_enumerated_optimum(p in params(8)) {
        let u = AssetUniverse::from_params(&p).unwrap();
        let sol = kelly_fully_invested(&u).unwrap();
        let oracle = enumerate_small_parameter_optimum(&u.means(), &u.variances(), true);
        for (a, b) in sol.fractions.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-9, "{:?} vs {:?}", sol.fractions, oracle);
        }
        prop_assert!((sol.fractions.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn closed_forms_are_invariant_under_time_rescaling(p in params(6), eps in 0.001f64..10.0) {
        let u = AssetUniverse::from_params(&p).unwrap();
        let v = u.scaled(eps).unwrap();
        let (a, b) = (kelly_constrained(&u).unwrap(), kelly_constrained(&v).unwrap());
        prop_assert_eq!(&a.active_set, &b.active_set);
        for (x, y) in a.fractions.iter().zip(&b.fractions) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        let (x, y) = (kelly_unconstrained(&u).unwrap(), kelly_unconstrained(&v).unwrap());
        for (x, y) in x.iter().zip(&y) {
            prop_assert!((x - y).abs() < 1e-9 * x.abs().max(1.0));
        }
    }
}

#[test]
fn single_asset_numerical_matches_simpson_oracle() {
    for (m, d) in [
        (0.0, 0.04),
        (0.01, 0.04),
        (-0.05, 0.25),
        (0.1, 0.25),
        (0.2, 1.0),
        (-0.3, 1.0),
    ] {
        let u = AssetUniverse::from_params(&[(m, d)]).unwrap();
        let q = kelly_numerical(&u, &SolverOptions::default()).unwrap().fractions[0];
        let oracle = golden_section_max(|x| growth_by_simpson(x, m, d), 0.0, 1.0);
        assert!((q - oracle).abs() < 1e-5, "m={m} D={d}: {q} vs {oracle}");
    }
}

#[test]
fn numerical_optimum_dominates_feasible_grid() {
    let u = AssetUniverse::from_params(&[(0.1, 0.04), (0.15, 0.09), (0.2, 0.25)]).unwrap();
    let method = ExpectationMethod::GaussHermite { order: 32 };
    let sol = kelly_numerical(&u, &SolverOptions::with_method(method)).unwrap();
    let set = ScenarioSet::new(&u, &method).unwrap();
    let best = set.growth_stats(&sol.fractions).unwrap().v;
    let steps = 20;
    for i in 0..=steps {
        for j in 0..=steps - i {
            for k in 0..=steps - i - j {
                let q = [
                    i as f64 / steps as f64,
                    j as f64 / steps as f64,
                    k as f64 / steps as f64,
                ];
                assert!(set.growth_stats(&q).unwrap().v <= best + 1e-12, "{q:?}");
            }
        }
    }
    assert!((sol.fractions[1] - 0.3428).abs() < 1e-3);
}

#[test]
fn numerical_agrees_across_expectation_methods() {
    let u = AssetUniverse::from_params(&[(0.02, 0.05), (0.03, 0.08)]).unwrap();
    let gh = kelly_numerical(&u, &SolverOptions::default()).unwrap();
    let mc = kelly_numerical(
        &u,
        &SolverOptions {
            tolerance: 1e-8,
            ..SolverOptions::with_method(ExpectationMethod::MonteCarlo {
                samples: 400_000,
                seed: 9,
            })
        },
    )
    .unwrap();
    for (a, b) in gh.fractions.iter().zip(&mc.fractions) {
        assert!((a - b).abs() < 0.02, "{:?} vs {:?}", gh.fractions, mc.fractions);
    }
}
