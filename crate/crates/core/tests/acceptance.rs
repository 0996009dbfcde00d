//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p kelly-core --test acceptance`. The process exits
//! nonzero when any criterion fails.

use std::time::Instant;

use kelly_core::condensation::{
    equal_vol_portfolio, mc_alpha1_from_pairs, powerlaw_alpha1, tail_uniform_pairs, two_asset_phase,
    typical_ipr_asymptotic, typical_size_uniform, uniform_mc, MedianRule, PhaseRegion, PowerLawSpec, UniformSpec,
};
use kelly_core::expectation::{approx_expectation, fourth_derivative_max, gauss_expectation_1d};
use kelly_core::kelly::{constrained_from_params, first_order_correction, kelly_fraction_single, kelly_numerical};
use kelly_core::lef::{
    approx_growth, exact_point, growth_grid, growth_range, lef_approx_system, lef_curve, lef_point_at_coordinate,
    SignPolicy,
};
use kelly_core::markowitz::{constrained_frontier, kelly_frontier_gap, on_frontier_residual};
use kelly_core::rng::CounterRng;
use kelly_core::simulate::{named_portfolios, random_perturbations, simulate_growth};
use kelly_core::{AssetUniverse, ExpectationMethod, SolverOptions};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn fig1() -> AssetUniverse {
    AssetUniverse::from_params(&[(0.1, 0.04), (0.15, 0.09), (0.2, 0.25)]).unwrap()
}

fn numerical_single(m: f64, d: f64) -> Result<f64, String> {
    let u = AssetUniverse::from_params(&[(m, d)]).map_err(|e| e.to_string())?;
    kelly_numerical(&u, &SolverOptions::default())
        .map(|s| s.fractions[0])
        .map_err(|e| e.to_string())
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst_small: f64 = f64::NEG_INFINITY;
    let mut worst_big: f64 = 0.0;
    for d in [0.01, 0.04, 0.25, 1.0] {
        for k in 0..41 {
            let m = -d / 2.0 + d * k as f64 / 40.0;
            let diff = (kelly_fraction_single(m, d) - numerical_single(m, d)?).abs();
            if d < 1.0 {
                worst_small = worst_small.max(diff - first_order_correction(m, d).abs() - 0.01);
            } else {
                worst_big = worst_big.max(diff);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst_small <= 0.0 && worst_big <= 0.05 && secs < 60.0,
        format!(
            "max(diff - |correction| - 0.01) = {worst_small:.3e} (need <= 0), max diff at D=1 = {worst_big:.4} (need <= 0.05), {secs:.2}s"
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    for d in [0.04, 0.25, 1.0] {
        worst = worst.max(numerical_single(-d / 2.0, d)?.abs());
        worst = worst.max((numerical_single(d / 2.0, d)? - 1.0).abs());
    }
    check(
        worst <= 1e-3,
        format!("max distance to 0 / 1 = {worst:.3e} (need <= 1e-3)"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = CounterRng::new(2024, 3);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = 1 + (rng.next_uniform() * 10.0) as usize;
        let params: Vec<(f64, f64)> = (0..n)
            .map(|_| (-0.05 + 0.35 * rng.next_uniform(), 0.01 + 0.29 * rng.next_uniform()))
            .collect();
        let u = AssetUniverse::from_params(&params).map_err(|e| e.to_string())?;
        worst = worst.max(on_frontier_residual(&u).map_err(|e| e.to_string())?);
    }
    let gaps: Vec<f64> = [1.0, 0.1, 0.01]
        .iter()
        .map(|&eps| kelly_frontier_gap(&fig1().scaled(eps).unwrap(), 2001).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    check(
        worst <= 1e-10 && decreasing,
        format!("max residual = {worst:.2e} (need <= 1e-10), relative gaps for eps 1/0.1/0.01 = {gaps:?}"),
    )
}

/// The region label and the closed-form Kelly sign pattern describe the same portfolio.
fn phase_agrees(m1: f64, m2: f64, d1: f64, d2: f64) -> bool {
    let (Ok(region), Ok(sol)) = (
        two_asset_phase(m1, m2, d1, d2),
        constrained_from_params(&[m1, m2], &[d1, d2]),
    ) else {
        return false;
    };
    let q = sol.fractions;
    let sum = q[0] + q[1];
    match region {
        PhaseRegion::A => q == [0.0, 0.0],
        PhaseRegion::F1 | PhaseRegion::D1 => q == [1.0, 0.0],
        PhaseRegion::F2 | PhaseRegion::D2 => q == [0.0, 1.0],
        PhaseRegion::E => q[0] > 0.0 && q[1] > 0.0 && sol.binding && (sum - 1.0).abs() < 1e-12,
        PhaseRegion::C => q[0] > 0.0 && q[1] > 0.0 && !sol.binding && sum <= 1.0,
        PhaseRegion::B1 => q[0] > 0.0 && q[0] < 1.0 && q[1] == 0.0,
        PhaseRegion::B2 => q[1] > 0.0 && q[1] < 1.0 && q[0] == 0.0,
    }
}

fn criterion_4() -> Outcome {
    let q2 = |m1: f64| -> Result<f64, String> {
        let u = AssetUniverse::from_params(&[(m1, 0.1), (0.0, 0.2)]).map_err(|e| e.to_string())?;
        kelly_numerical(&u, &SolverOptions::default())
            .map(|s| s.fractions[1])
            .map_err(|e| e.to_string())
    };
    let (above, below) = (q2(0.16)?, q2(0.14)?);
    let mut mismatches = 0;
    for i in 0..50 {
        for j in 0..50 {
            let m1 = -0.3 + 0.7 * i as f64 / 49.0;
            let m2 = -0.3 + 0.7 * j as f64 / 49.0;
            if !phase_agrees(m1, m2, 0.1, 0.2) {
                mismatches += 1;
            }
        }
    }
    check(
        above < 1e-3 && below > 1e-3 && mismatches == 0,
        format!("q2(m1=0.16) = {above:.2e}, q2(m1=0.14) = {below:.4}, phase-grid mismatches = {mismatches}/2500"),
    )
}

/// Best support of `sum q (m + D/2) - (D/2) sum q^2` over `q >= 0, sum q <= 1`
/// by enumerating every subset and both budget cases.
fn brute_force_support(ms: &[f64], d: f64) -> Vec<usize> {
    let n = ms.len();
    let objective = |q: &[(usize, f64)]| {
        q.iter()
            .map(|&(i, x)| x * (ms[i] + d / 2.0) - d / 2.0 * x * x)
            .sum::<f64>()
    };
    let mut best = (0.0, Vec::new());
    for mask in 1u32..(1 << n) {
        let s: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let k = s.len() as f64;
        let free: Vec<(usize, f64)> = s.iter().map(|&i| (i, 0.5 + ms[i] / d)).collect();
        let gamma = d * (1.0 / k - 0.5) - s.iter().map(|&i| ms[i]).sum::<f64>() / k;
        let bound: Vec<(usize, f64)> = s.iter().map(|&i| (i, 0.5 + (ms[i] + gamma) / d)).collect();
        for cand in [free, bound] {
            let total: f64 = cand.iter().map(|c| c.1).sum();
            if cand.iter().all(|c| c.1 > 0.0) && total <= 1.0 + 1e-12 {
                let v = objective(&cand);
                if v > best.0 {
                    best = (v, s.clone());
                }
            }
        }
    }
    best.1
}

fn criterion_5() -> Outcome {
    let mut rng = CounterRng::new(77, 5);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = 1 + (rng.next_uniform() * 12.0) as usize;
        let d = 0.005 + 0.095 * rng.next_uniform();
        let ms: Vec<f64> = (0..n).map(|_| d * (-1.0 + 3.0 * rng.next_uniform())).collect();
        let p = equal_vol_portfolio(&ms, d).map_err(|e| e.to_string())?;
        let support: Vec<usize> = (0..n).filter(|&i| p.fractions[i] > 0.0).collect();
        if support != brute_force_support(&ms, d) {
            mismatches += 1;
        }
    }
    check(mismatches == 0, format!("active-set mismatches = {mismatches}/1000"))
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut worst_size: f64 = 0.0;
    let mut worst_ipr: f64 = 0.0;
    for l in [0.05, 0.07, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5] {
        let spec = UniformSpec::centered(1000, 0.01, -0.05, l).map_err(|e| e.to_string())?;
        let mt = typical_size_uniform(&spec).map_err(|e| e.to_string())?;
        let mc = uniform_mc(&spec, 10_000, 6).map_err(|e| e.to_string())?;
        worst_size = worst_size.max((mc.mean_size / mt - 1.0).abs());
        worst_ipr = worst_ipr.max((mc.mean_ipr / typical_ipr_asymptotic(mt) - 1.0).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst_size <= 0.1 && worst_ipr <= 0.1 && secs < 300.0,
        format!("max relative error: size {worst_size:.4}, IPR {worst_ipr:.4} (need <= 0.1), {secs:.2}s"),
    )
}

fn strictly_monotone(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0]) || xs.windows(2).all(|w| w[1] > w[0])
}

fn criterion_7() -> Outcome {
    let spec = PowerLawSpec::new(1000, 0.1, 0.1, 1.0).map_err(|e| e.to_string())?;
    let pairs = tail_uniform_pairs(&spec, 100_000, 7);
    let ds: Vec<f64> = (0..10).map(|k| 0.2 + 1.8 * k as f64 / 9.0).collect();
    let mut median = Vec::new();
    let mut mc = Vec::new();
    for &d in &ds {
        median.push(powerlaw_alpha1(&spec, d, MedianRule::Rounded).map_err(|e| e.to_string())?);
        mc.push(mc_alpha1_from_pairs(&pairs, spec.m_min, d).map_err(|e| e.to_string())?);
    }
    let worst = median.iter().zip(&mc).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(
        worst <= 0.5 && strictly_monotone(&median) && strictly_monotone(&mc),
        format!(
            "max |alpha1_median - alpha1_mc| = {worst:.3} (need <= 0.5), monotone: median {}, mc {}",
            strictly_monotone(&median),
            strictly_monotone(&mc)
        ),
    )
}

fn criterion_8() -> Outcome {
    let u = fig1();
    let method = ExpectationMethod::default();
    let e = |x: kelly_core::Error| x.to_string();
    let range = growth_range(&u, &method, SignPolicy::NoShort).map_err(e)?;
    let curve = lef_curve(&u, &growth_grid(&range, 40), &method, SignPolicy::NoShort).map_err(e)?;
    let mut worst_left: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    for s in &curve {
        let p = exact_point(&u, &s.fractions);
        let ef = &constrained_frontier(&u, &[p.mu_p]).map_err(e)?[0];
        let rel = (p.sigma_p - ef.sigma_p) / ef.sigma_p;
        worst_left = worst_left.min(rel);
        worst_gap = worst_gap.max(rel.abs());
    }
    // approximate system against direct minimisation at equal sum q (m + D/2)
    let mt = u.approx_mean_returns();
    let lo = mt.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = approx_growth(&u, &range.argmax);
    let mut worst_frac: f64 = 0.0;
    for k in 0..=10 {
        let c = lo + (hi - lo) * k as f64 / 10.0;
        let a = lef_approx_system(&u, c, SignPolicy::NoShort).map_err(e)?;
        let x = lef_point_at_coordinate(&u, c, &method, SignPolicy::NoShort).map_err(e)?;
        let d = a
            .fractions
            .iter()
            .zip(&x.fractions)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        worst_frac = worst_frac.max(d);
    }
    // informational: the same comparison at equal nominal v_P
    let mut nominal: f64 = 0.0;
    for s in &curve {
        if let Ok(a) = lef_approx_system(&u, s.v_p, SignPolicy::NoShort) {
            let d = a
                .fractions
                .iter()
                .zip(&s.fractions)
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max);
            nominal = nominal.max(d);
        }
    }
    check(
        worst_left >= -1e-9 && worst_gap < 0.05 && worst_frac <= 0.05,
        format!(
            "min relative offset right of EF = {worst_left:.2e} (need >= 0), max relative gap = {:.3}% (need < 5%), max |q_approx - q_exact| = {worst_frac:.4} (need <= 0.05; {nominal:.3} at equal nominal v_P)",
            100.0 * worst_gap
        ),
    )
}

fn criterion_9() -> Outcome {
    let g = |q: f64| move |e: f64| e.exp_m1() / (1.0 + q * e.exp_m1());
    // with s = q e^eta / (1 - q + q e^eta): g'' = s(1-s)(1-2s)/(q(1-q)) and
    // g'''' = g'' (1 - 12 s + 12 s^2); for q = 0, g = e^eta - 1
    let s_of = |q: f64, e: f64| q * e.exp() / (1.0 - q + q * e.exp());
    let g2 = |q: f64| {
        move |e: f64| {
            if q == 0.0 {
                e.exp()
            } else {
                let s = s_of(q, e);
                s * (1.0 - s) * (1.0 - 2.0 * s) / (q * (1.0 - q))
            }
        }
    };
    let g4 = |q: f64| {
        move |e: f64| {
            if q == 0.0 {
                e.exp()
            } else {
                let s = s_of(q, e);
                s * (1.0 - s) * (1.0 - 2.0 * s) * (1.0 - 12.0 * s + 12.0 * s * s) / (q * (1.0 - q))
            }
        }
    };
    let method = ExpectationMethod::GaussHermite { order: 64 };
    let mut worst_ratio: f64 = 0.0;
    let mut failures = 0;
    for q in [0.0, 0.25, 0.5, 0.75] {
        for d in [0.01, 0.04, 0.09, 0.16, 0.25] {
            for k in 0..21 {
                let m = -0.5 + k as f64 / 20.0;
                let exact = gauss_expectation_1d(g(q), m, d, &method).map_err(|e| e.to_string())?;
                let second = g2(q);
                let approx = approx_expectation(g(q), Some(&second), m, d);
                let bound = fourth_derivative_max(g4(q), m, d, 4001) * d * d / 8.0;
                let err = (exact - approx).abs();
                if err > bound {
                    failures += 1;
                }
                if bound > 0.0 {
                    worst_ratio = worst_ratio.max(err / bound);
                }
            }
        }
    }
    check(
        failures == 0,
        format!("violations = {failures}/420, worst error/bound = {worst_ratio:.3}"),
    )
}

fn criterion_10() -> Outcome {
    let u = fig1();
    let e = |x: kelly_core::Error| x.to_string();
    let kelly = kelly_numerical(&u, &SolverOptions::default()).map_err(e)?.fractions;
    let mut items = vec![("kelly".to_string(), kelly.clone())];
    for (k, p) in random_perturbations(&kelly, 20, 0.05, 0.01, 10)
        .map_err(e)?
        .into_iter()
        .enumerate()
    {
        items.push((format!("perturbed-{k}"), p));
    }
    let report = simulate_growth(&u, &named_portfolios(items).map_err(e)?, 100, 100_000, 10).map_err(e)?;
    let zs: Vec<f64> = report.strategies[1..].iter().map(|s| s.z_below_first()).collect();
    let min_z = zs.iter().cloned().fold(f64::INFINITY, f64::min);
    check(
        min_z >= 3.0,
        format!(
            "Kelly growth {:.6} +- {:.6}; smallest paired margin = {min_z:.1} standard errors (need >= 3)",
            report.strategies[0].mean, report.strategies[0].stderr
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("single-asset closed form vs exact", criterion_1),
        ("exact profitability boundaries", criterion_2),
        ("Kelly point on the efficient frontier", criterion_3),
        ("two-asset condensation threshold", criterion_4),
        ("equal-volatility greedy vs brute force", criterion_5),
        ("typical portfolio size and IPR", criterion_6),
        ("power-law condensation", criterion_7),
        ("logarithmic vs mean-variance frontier", criterion_8),
        ("small-variance expectation bound", criterion_9),
        ("growth optimality by simulation", criterion_10),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let (tag, detail) = match run() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag}: {name}: {detail}", k + 1);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
