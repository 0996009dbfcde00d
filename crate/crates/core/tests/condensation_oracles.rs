use kelly_core::condensation::{
    condensation_thresholds, equal_vol_portfolio, ipr, mc_condensation_prob, powerlaw_alpha1, two_asset_phase,
    typical_ipr_asymptotic, typical_size_uniform, uniform_mc, MedianRule, PhaseRegion, PowerLawSpec, UniformSpec,
};
use kelly_core::kelly::{constrained_from_params, kelly_numerical, SolverOptions};
use kelly_core::AssetUniverse;
use proptest::prelude::*;

/// Maximiser of `sum q (m + D/2) - (D/2) sum q^2` over `q >= 0`, `sum q <= 1`
/// by enumerating supports.
fn brute_force(ms: &[f64], d: f64) -> Vec<f64> {
    let n = ms.len();
    let value = |q: &[f64]| {
        (0..n)
            .map(|i| q[i] * (ms[i] + d / 2.0) - d / 2.0 * q[i] * q[i])
            .sum::<f64>()
    };
    let mut best = (0.0, vec![0.0; n]);
    for mask in 1u32..(1 << n) {
        let s: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let k = s.len() as f64;
        let gamma = d * (1.0 / k - 0.5) - s.iter().map(|&i| ms[i]).sum::<f64>() / k;
        for g in [0.0, gamma] {
            let mut q = vec![0.0; n];
            s.iter().for_each(|&i| q[i] = 0.5 + (ms[i] + g) / d);
            if s.iter().all(|&i| q[i] > 0.0) && q.iter().sum::<f64>() <= 1.0 + 1e-12 {
                let v = value(&q);
                if v > best.0 {
                    best = (v, q);
                }
            }
        }
    }
    best.1
}

proptest! {
    #[test]
    fn equal_volatility_matches_brute_force(
        d in 0.005f64..0.2,
        raw in prop::collection::vec(-1.0f64..2.0, 1..=12),
    ) {
        let ms: Vec<f64> = raw.iter().map(|x| x * d).collect();
        let p = equal_vol_portfolio(&ms, d).unwrap();
        let oracle = brute_force(&ms, d);
        for (a, b) in p.fractions.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-9, "{:?} vs {:?}", p.fractions, oracle);
        }
        prop_assert_eq!(p.report.m, oracle.iter().filter(|q| **q > 0.0).count());
    }

    #[test]
    fn equal_volatility_agrees_with_general_closed_form(
        d in 0.005f64..0.2,
        raw in prop::collection::vec(-1.0f64..2.0, 1..=20),
    ) {
        let ms: Vec<f64> = raw.iter().map(|x| x * d).collect();
        let p = equal_vol_portfolio(&ms, d).unwrap();
        let g = constrained_from_params(&ms, &vec![d; ms.len()]).unwrap();
        for (a, b) in p.fractions.iter().zip(&g.fractions) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn participation_ratio_bounds(q in prop::collection::vec(0.0f64..1.0, 1..30)) {
        prop_assume!(q.iter().sum::<f64>() > 1e-6);
        let r = ipr(&q).unwrap();
        let support = q.iter().filter(|x| **x > 0.0).count() as f64;
        let s: f64 = q.iter().sum();
        // for the normalised weights q / s the ratio lies in [1, support]
        let normalised = r * s * s;
        prop_assert!(normalised >= 1.0 - 1e-9 && normalised <= support + 1e-9);
    }

    #[test]
    fn condensed_region_is_single_asset(m2 in -0.1f64..0.1, d1 in 0.02f64..0.5, d2 in 0.02f64..0.5, extra in 1e-6f64..0.5) {
        let (_, high) = condensation_thresholds(m2, d1, d2);
        let m1 = high + extra;
        if two_asset_phase(m1, m2, d1, d2).unwrap() == PhaseRegion::F1 {
            let q = constrained_from_params(&[m1, m2], &[d1, d2]).unwrap().fractions;
            prop_assert_eq!(q, vec![1.0, 0.0]);
        }
    }
}

#[test]
fn condensation_threshold_against_exact_growth() {
    // the small-parameter threshold for D1 = 0.1, D2 = 0.2, m2 = 0 is 0.15
    let (_, high) = condensation_thresholds(0.0, 0.1, 0.2);
    assert!((high - 0.15).abs() < 1e-12);
    let q2 = |m1: f64| {
        let u = AssetUniverse::from_params(&[(m1, 0.1), (0.0, 0.2)]).unwrap();
        kelly_numerical(&u, &SolverOptions::default()).unwrap().fractions[1]
    };
    assert!(q2(0.16) < 1e-3);
    assert!(q2(0.14) > 1e-3);
}

#[test]
fn uniform_monte_carlo_tracks_typical_size() {
    for l in [0.1, 0.3] {
        let spec = UniformSpec::centered(1000, 0.01, -0.05, l).unwrap();
        let mt = typical_size_uniform(&spec).unwrap();
        let mc = uniform_mc(&spec, 2000, 12).unwrap();
        assert!((mc.mean_size / mt - 1.0).abs() < 0.1, "L={l}: {} vs {mt}", mc.mean_size);
        assert!((mc.mean_ipr / typical_ipr_asymptotic(mt) - 1.0).abs() < 0.1);
    }
}

#[test]
fn median_root_is_near_even_odds() {
    let base = PowerLawSpec::new(1000, 0.1, 0.1, 1.0).unwrap();
    for d in [0.3, 1.0] {
        let alpha = powerlaw_alpha1(&base, d, MedianRule::Exact).unwrap();
        let spec = PowerLawSpec::new(1000, 0.1, 0.1, alpha).unwrap();
        let (p, _) = mc_condensation_prob(&spec, d, 100_000, 3).unwrap();
        assert!((p - 0.5).abs() < 0.15, "D={d}: P = {p}");
    }
}
