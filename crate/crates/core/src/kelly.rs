//! Kelly-optimal fractions.
//!
//! Closed forms come from the small-parameter expansion of `E[ln W1]`,
//! `v ~ sum q_i (m_i + D_i/2) - sum q_i^2 D_i / 2`, whose constrained
//! maximiser is `q_i = 1/2 + (m_i + gamma) / D_i` on the active set.
//! [`kelly_numerical`] maximises the exact growth rate and serves as the
//! reference for the closed forms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expectation::{ExpectationMethod, ScenarioSet};
use crate::model::AssetUniverse;
use crate::projection::{project_capped_simplex, project_simplex};

/// `(m_<, m_>) = (-D/2, D/2)`: below `m_<` nothing is invested, above `m_>`
/// everything is.
pub fn profitability_thresholds(d: f64) -> (f64, f64) {
    (-0.5 * d, 0.5 * d)
}

/// `clamp(1/2 + m/D, 0, 1)`. For `D = 0`: 1 if `m > 0`, else 0.
pub fn kelly_fraction_single(m: f64, d: f64) -> f64 {
    if d == 0.0 {
        return if m > 0.0 { 1.0 } else { 0.0 };
    }
    (0.5 + m / d).clamp(0.0, 1.0)
}

/// Next term of the single-asset expansion: `m (4m^2 - D^2) / (4 D^2)`.
pub fn first_order_correction(m: f64, d: f64) -> f64 {
    m * (4.0 * m * m - d * d) / (4.0 * d * d)
}

fn require_positive_variance(universe: &AssetUniverse) -> Result<()> {
    match universe.assets().iter().position(|a| a.d <= 0.0) {
        Some(index) => Err(Error::ZeroVariance { index }),
        None => Ok(()),
    }
}

/// Raw `1/2 + m_i / D_i`, unclipped.
pub fn kelly_unconstrained(universe: &AssetUniverse) -> Result<Vec<f64>> {
    require_positive_variance(universe)?;
    Ok(universe.assets().iter().map(|a| 0.5 + a.m / a.d).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedSolution {
    pub fractions: Vec<f64>,
    /// Indices with strictly positive fraction.
    pub active_set: Vec<usize>,
    /// Multiplier of the budget constraint; absent when it does not bind.
    pub gamma: Option<f64>,
    pub binding: bool,
}

/// Closed-form Kelly fractions under `q >= 0`, `sum q <= 1`.
pub fn kelly_constrained(universe: &AssetUniverse) -> Result<ConstrainedSolution> {
    require_positive_variance(universe)?;
    constrained_from_params(&universe.means(), &universe.variances())
}

/// Closed-form Kelly fractions under `q >= 0`, `sum q = 1`; `gamma` may have either sign.
pub fn kelly_fully_invested(universe: &AssetUniverse) -> Result<ConstrainedSolution> {
    require_positive_variance(universe)?;
    fully_invested_from_params(&universe.means(), &universe.variances())
}

/// [`kelly_constrained`] on raw `(m, D)` slices.
pub fn constrained_from_params(m: &[f64], d: &[f64]) -> Result<ConstrainedSolution> {
    check_params(m, d)?;
    let clipped: Vec<f64> = m.iter().zip(d).map(|(mi, di)| (0.5 + mi / di).max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= 1.0 {
        let active_set = (0..m.len()).filter(|&i| clipped[i] > 0.0).collect();
        return Ok(ConstrainedSolution {
            fractions: clipped,
            active_set,
            gamma: None,
            binding: false,
        });
    }
    fully_invested_from_params(m, d)
}

/// [`kelly_fully_invested`] on raw `(m, D)` slices.
pub fn fully_invested_from_params(m: &[f64], d: &[f64]) -> Result<ConstrainedSolution> {
    check_params(m, d)?;
    let (fractions, gamma, active_set) = eliminate(m, d, (0..m.len()).collect())?;
    Ok(ConstrainedSolution {
        fractions,
        active_set,
        gamma: Some(gamma),
        binding: true,
    })
}

fn check_params(m: &[f64], d: &[f64]) -> Result<()> {
    if m.len() != d.len() {
        return Err(Error::DimensionMismatch {
            expected: m.len(),
            got: d.len(),
        });
    }
    if m.is_empty() {
        return Err(Error::EmptyUniverse);
    }
    if let Some(index) = d.iter().position(|x| !(*x > 0.0)) {
        return Err(Error::ZeroVariance { index });
    }
    Ok(())
}

/// `gamma` for a given active set under `sum q = 1`.
pub fn budget_multiplier(m: &[f64], d: &[f64], active: &[usize]) -> f64 {
    let raw: f64 = active.iter().map(|&i| 0.5 + m[i] / d[i]).sum();
    let inv: f64 = active.iter().map(|&i| 1.0 / d[i]).sum();
    (1.0 - raw) / inv
}

/// Repeatedly solves for `gamma` and drops the most negative fraction
/// (lowest index on ties, zero counts as excluded) until all are positive.
fn eliminate(m: &[f64], d: &[f64], mut active: Vec<usize>) -> Result<(Vec<f64>, f64, Vec<usize>)> {
    loop {
        if active.is_empty() {
            return Err(Error::Internal("elimination emptied the active set".into()));
        }
        let gamma = budget_multiplier(m, d, &active);
        let mut worst: Option<(usize, f64)> = None;
        for (pos, &i) in active.iter().enumerate() {
            let q = 0.5 + (m[i] + gamma) / d[i];
            if q <= 0.0 && worst.is_none_or(|(_, w)| q < w) {
                worst = Some((pos, q));
            }
        }
        match worst {
            Some((pos, _)) => {
                active.remove(pos);
            }
            None => {
                let mut q = vec![0.0; m.len()];
                for &i in &active {
                    q[i] = 0.5 + (m[i] + gamma) / d[i];
                }
                // remove rounding drift from the budget
                let total: f64 = q.iter().sum();
                q.iter_mut().for_each(|x| *x /= total);
                return Ok((q, gamma, active));
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Bound on the projected-gradient residual `||q - P(q + grad v)||_inf`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub method: ExpectationMethod,
    /// Impose `sum q = 1` instead of `sum q <= 1`.
    pub fully_invested: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 5_000,
            method: ExpectationMethod::default(),
            fully_invested: false,
        }
    }
}

impl SolverOptions {
    pub fn with_method(method: ExpectationMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericalSolution {
    pub fractions: Vec<f64>,
    /// Growth rate `E[ln W1]` at the solution.
    pub v: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Maximises the exact `E[ln W1]` over `{q >= 0, sum q <= 1}` (or the simplex
/// when `fully_invested`) by projected gradient ascent with Barzilai-Borwein
/// steps and an exact line search, starting from the closed-form solution.
pub fn kelly_numerical(universe: &AssetUniverse, options: &SolverOptions) -> Result<NumericalSolution> {
    options.validate()?;
    require_positive_variance(universe)?;
    let set = ScenarioSet::new(universe, &options.method)?;
    let start = if options.fully_invested {
        kelly_fully_invested(universe)?.fractions
    } else {
        kelly_constrained(universe)?.fractions
    };
    maximize_growth(&set, &start, options)
}

/// The ascent of [`kelly_numerical`] on a prepared scenario set.
pub fn maximize_growth(set: &ScenarioSet, start: &[f64], options: &SolverOptions) -> Result<NumericalSolution> {
    options.validate()?;
    if start.len() != set.n_assets() {
        return Err(Error::DimensionMismatch {
            expected: set.n_assets(),
            got: start.len(),
        });
    }
    let project = |y: &[f64]| {
        if options.fully_invested {
            project_simplex(y, 1.0)
        } else {
            project_capped_simplex(y)
        }
    };
    let mut q = project(start);
    let mut stats = set.growth_stats(&q)?;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut residual = f64::INFINITY;
    for iteration in 0..options.max_iterations {
        let g = &stats.grad;
        let unit: Vec<f64> = q.iter().zip(g).map(|(a, b)| a + b).collect();
        residual = inf_dist(&q, &project(&unit));
        if residual <= options.tolerance {
            return Ok(NumericalSolution {
                fractions: q,
                v: stats.v,
                residual,
                iterations: iteration,
            });
        }
        let alpha = match &prev {
            Some((q0, g0)) => {
                let s: Vec<f64> = q.iter().zip(q0).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g.iter().zip(g0).map(|(a, b)| a - b).collect();
                let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
                let ss: f64 = s.iter().map(|a| a * a).sum();
                let a = -ss / sy;
                if a.is_finite() && a > 0.0 {
                    a.clamp(1e-8, 1e8)
                } else {
                    1.0
                }
            }
            None => {
                // Newton-like scale from the curvature along the gradient.
                let (d1, d2) = set.directional(&q, g);
                if d2 < 0.0 {
                    (-d1 / d2).clamp(1e-8, 1e8)
                } else {
                    1.0
                }
            }
        };
        let trial: Vec<f64> = q.iter().zip(g).map(|(a, b)| a + alpha * b).collect();
        let target = project(&trial);
        let dir: Vec<f64> = target.iter().zip(&q).map(|(a, b)| a - b).collect();
        let t = line_search(set, &q, &dir);
        let next: Vec<f64> = q.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
        let next = project(&next);
        if inf_dist(&next, &q) == 0.0 {
            log::debug!("kelly ascent stalled at residual {residual:e}");
            break;
        }
        prev = Some((q, stats.grad.clone()));
        q = next;
        stats = set.growth_stats(&q)?;
    }
    Err(Error::NotConverged {
        iterations: options.max_iterations,
        residual,
        best: q,
    })
}

/// Maximiser of the concave `t -> E[ln W1(q + t dir)]` on `[0, 1]`.
fn line_search(set: &ScenarioSet, q: &[f64], dir: &[f64]) -> f64 {
    let at = |t: f64| {
        let p: Vec<f64> = q.iter().zip(dir).map(|(a, b)| a + t * b).collect();
        set.directional(&p, dir)
    };
    let (d0, c0) = at(0.0);
    if d0 <= 0.0 {
        return 0.0;
    }
    let (d1, _) = at(1.0);
    if d1 >= 0.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut t = if c0 < 0.0 { (-d0 / c0).clamp(0.0, 1.0) } else { 0.5 };
    for _ in 0..60 {
        if !(t > lo && t < hi) {
            t = 0.5 * (lo + hi);
        }
        let (d, c) = at(t);
        if d > 0.0 {
            lo = t;
        } else if d < 0.0 {
            hi = t;
        } else {
            return t;
        }
        if hi - lo <= 1e-15 * hi.max(1e-300) {
            break;
        }
        t = if c < 0.0 { t - d / c } else { 0.5 * (lo + hi) };
    }
    0.5 * (lo + hi)
}

fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
