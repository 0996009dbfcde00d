//! Monte Carlo growth of rebalanced portfolios on common random numbers.
//!
//! Every strategy sees the same price paths, so paired differences of
//! log-growth have far smaller standard errors than the strategies' own.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AssetUniverse, ConstraintPolicy, NoiseModel, Portfolio};
use crate::projection::project_capped_simplex;
use crate::rng::{CounterRng, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthEstimate {
    pub name: String,
    /// Mean of `ln W_T / T` over paths.
    pub mean: f64,
    pub stderr: f64,
    /// Difference to the first strategy, averaged pathwise.
    pub diff_to_first: f64,
    pub diff_stderr: f64,
}

impl GrowthEstimate {
    /// `(first - this) / stderr` of the paired difference.
    pub fn z_below_first(&self) -> f64 {
        if self.diff_stderr > 0.0 {
            -self.diff_to_first / self.diff_stderr
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub horizon: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub strategies: Vec<GrowthEstimate>,
}

fn mean_and_stderr(sum: f64, sum_sq: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

/// Per-step mean log-growth of each named portfolio, rebalanced every step,
/// over `n_paths` paths of length `horizon`. Results depend only on the
/// inputs, not on the thread count.
pub fn simulate_growth(
    universe: &AssetUniverse,
    strategies: &[(String, Portfolio)],
    horizon: usize,
    n_paths: usize,
    seed: u64,
) -> Result<SimulationReport> {
    if horizon == 0 || n_paths == 0 {
        return Err(Error::invalid("horizon and n_paths must be at least 1"));
    }
    if strategies.is_empty() {
        return Err(Error::invalid("at least one strategy is required"));
    }
    let noise = NoiseModel::new(universe);
    let n = noise.n_assets();
    for (_, p) in strategies {
        if p.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: p.len(),
            });
        }
    }
    let k = strategies.len();
    let per_path: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map_init(
            || (Vec::new(), vec![0.0; horizon * n], vec![0.0; n]),
            |(z, eta, r), p| {
                noise.fill_path(seed, p as u64, horizon, z, eta);
                let mut log_w = vec![0.0; k];
                for t in 0..horizon {
                    for i in 0..n {
                        r[i] = eta[t * n + i].exp_m1();
                    }
                    for (s, (_, port)) in strategies.iter().enumerate() {
                        let gain: f64 = port.fractions().iter().zip(r.iter()).map(|(a, b)| a * b).sum();
                        log_w[s] += gain.ln_1p();
                    }
                }
                log_w.iter().map(|x| x / horizon as f64).collect()
            },
        )
        .collect();
    let mut out = Vec::with_capacity(k);
    for s in 0..k {
        let (mut a, mut a2, mut d, mut d2) = (0.0, 0.0, 0.0, 0.0);
        for g in &per_path {
            let diff = g[s] - g[0];
            a += g[s];
            a2 += g[s] * g[s];
            d += diff;
            d2 += diff * diff;
        }
        let (mean, stderr) = mean_and_stderr(a, a2, n_paths);
        let (diff_to_first, diff_stderr) = mean_and_stderr(d, d2, n_paths);
        out.push(GrowthEstimate {
            name: strategies[s].0.clone(),
            mean,
            stderr,
            diff_to_first,
            diff_stderr,
        });
    }
    Ok(SimulationReport {
        horizon,
        n_paths,
        seed,
        strategies: out,
    })
}

/// `count` feasible perturbations of `base`: each component moves by a
/// uniform draw in `[-amplitude, amplitude]`, the result is projected onto
/// `{q >= 0, sum q <= 1}`, and draws that land within `min_distance`
/// (max-norm) of `base` are redrawn.
pub fn random_perturbations(
    base: &[f64],
    count: usize,
    amplitude: f64,
    min_distance: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if !(amplitude > 0.0) || !(min_distance >= 0.0) || min_distance >= amplitude {
        return Err(Error::invalid("need 0 <= min_distance < amplitude"));
    }
    let mut out = Vec::with_capacity(count);
    for item in 0..count {
        let mut rng = CounterRng::for_item(seed, Domain::Perturbation, item as u64);
        let mut tries = 0;
        loop {
            let y: Vec<f64> = base
                .iter()
                .map(|q| q + amplitude * (2.0 * rng.next_uniform() - 1.0))
                .collect();
            let p = project_capped_simplex(&y);
            let dist = p.iter().zip(base).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if dist >= min_distance {
                out.push(p);
                break;
            }
            tries += 1;
            if tries > 10_000 {
                return Err(Error::Internal("could not draw a perturbation".into()));
            }
        }
    }
    Ok(out)
}

/// Named no-short, no-borrow portfolios for [`simulate_growth`].
pub fn named_portfolios(items: Vec<(String, Vec<f64>)>) -> Result<Vec<(String, Portfolio)>> {
    items
        .into_iter()
        .map(|(name, q)| Ok((name, Portfolio::new(q, ConstraintPolicy::NoShortNoBorrow)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig1() -> AssetUniverse {
        AssetUniverse::from_params(&[(0.1, 0.04), (0.15, 0.09), (0.2, 0.25)]).unwrap()
    }

    #[test]
    fn cash_has_zero_growth_and_single_asset_has_m() {
        let u = fig1();
        let s = named_portfolios(vec![("cash".into(), vec![0.0; 3]), ("a3".into(), vec![0.0, 0.0, 1.0])]).unwrap();
        let r = simulate_growth(&u, &s, 10, 20_000, 7).unwrap();
        assert_eq!(r.strategies[0].mean, 0.0);
        assert_eq!(r.strategies[0].stderr, 0.0);
        let a3 = &r.strategies[1];
        // ln W_T / T is the mean of T normal draws
        let se = (0.25f64 / 10.0 / 20_000.0).sqrt();
        assert!((a3.stderr - se).abs() < 0.05 * se);
        assert!((a3.mean - 0.2).abs() < 4.0 * se, "{}", a3.mean);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let u = fig1();
        let s = named_portfolios(vec![
            ("k".into(), vec![0.0, 0.35, 0.65]),
            ("e".into(), vec![0.3, 0.3, 0.3]),
        ])
        .unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_growth(&u, &s, 5, 3000, 11).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn perturbations_are_feasible_and_distinct() {
        let base = [0.0, 0.3428, 0.6572];
        let ps = random_perturbations(&base, 50, 0.05, 0.01, 3).unwrap();
        assert_eq!(ps.len(), 50);
        for p in &ps {
            assert!(p.iter().all(|x| *x >= 0.0));
            assert!(p.iter().sum::<f64>() <= 1.0 + 1e-12);
            let d = p.iter().zip(&base).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!((0.01..=0.05 + 1e-12).contains(&d), "{d}");
        }
        assert_eq!(ps, random_perturbations(&base, 50, 0.05, 0.01, 3).unwrap());
    }

    #[test]
    fn rejects_invalid_portfolios() {
        assert!(named_portfolios(vec![("x".into(), vec![-0.1, 0.5, 0.5])]).is_err());
        let s = named_portfolios(vec![("x".into(), vec![0.5, 0.5])]).unwrap();
        assert!(simulate_growth(&fig1(), &s, 5, 10, 1).is_err());
    }
}
