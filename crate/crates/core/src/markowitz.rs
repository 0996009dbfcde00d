//! Mean-variance frontiers for uncorrelated assets with a zero-rate riskless asset.
//!
//! With `C_k = sum mu_j^k / sigma_j^2` the efficient frontier is
//! `sigma^2 = (C0 mu^2 - 2 C1 mu + C2) / (C0 C2 - C1^2)`. Both numerator and
//! denominator are evaluated in their sum-of-squares forms, which keeps them
//! accurate when the assets are nearly alike.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kelly::kelly_fully_invested;
use crate::model::AssetUniverse;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSums {
    /// `C_k = sum mu_j^k / sigma_j^2`.
    pub c: [f64; 3],
    /// `C~_k = sum (m_j + D_j/2)^k / D_j`.
    pub c_tilde: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub mu_p: f64,
    pub sigma_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fractions: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KellyPoint {
    pub mu_k: f64,
    pub sigma_k: f64,
    pub active_set: Vec<usize>,
}

fn sums(mu: &[f64], var: &[f64]) -> [f64; 3] {
    let mut c = [0.0; 3];
    for (m, v) in mu.iter().zip(var) {
        c[0] += 1.0 / v;
        c[1] += m / v;
        c[2] += m * m / v;
    }
    c
}

fn positive_variances(var: &[f64]) -> Result<()> {
    match var.iter().position(|v| !(*v > 0.0)) {
        Some(index) => Err(Error::ZeroVariance { index }),
        None => Ok(()),
    }
}

pub fn moment_sums(universe: &AssetUniverse) -> Result<MomentSums> {
    let var = universe.return_variances();
    positive_variances(&var)?;
    Ok(MomentSums {
        c: sums(&universe.mean_returns(), &var),
        c_tilde: sums(&universe.approx_mean_returns(), &universe.variances()),
    })
}

/// `C0 C2 - C1^2 = (1/2) sum_ij (mu_i - mu_j)^2 / (s_i s_j)`.
fn determinant(mu: &[f64], var: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..mu.len() {
        for j in 0..i {
            acc += (mu[i] - mu[j]).powi(2) / (var[i] * var[j]);
        }
    }
    acc
}

/// Frontier variance at `target` from the stable forms.
pub fn frontier_variance(mu: &[f64], var: &[f64], target: f64) -> Result<f64> {
    positive_variances(var)?;
    let det = determinant(mu, var);
    let c = sums(mu, var);
    if !(det > 1e-13 * c[0] * c[2].max(f64::MIN_POSITIVE)) {
        return Err(Error::Degenerate(
            "frontier needs at least two assets with distinct mean returns".into(),
        ));
    }
    let num: f64 = mu.iter().zip(var).map(|(m, v)| (target - m).powi(2) / v).sum();
    Ok(num / det)
}

/// Mean-variance fractions on the capital market line: `q_i = mu_P mu_i / (C2 sigma_i^2)`.
pub fn mv_fractions(universe: &AssetUniverse, mu_p: f64) -> Result<Vec<f64>> {
    if !(mu_p >= 0.0) {
        return Err(Error::invalid("target return must be nonnegative"));
    }
    let s = moment_sums(universe)?;
    if !(s.c[2] > 0.0) {
        return Err(Error::Degenerate("all mean returns vanish".into()));
    }
    Ok(universe
        .mean_returns()
        .iter()
        .zip(universe.return_variances())
        .map(|(m, v)| mu_p * m / (s.c[2] * v))
        .collect())
}

/// `sigma_P = mu_P / sqrt(C2)`.
pub fn cml_sigma(universe: &AssetUniverse, mu_p: f64) -> Result<f64> {
    let s = moment_sums(universe)?;
    if !(s.c[2] > 0.0) {
        return Err(Error::Degenerate("all mean returns vanish".into()));
    }
    Ok(mu_p.abs() / s.c[2].sqrt())
}

/// Fully invested minimum-variance `sigma_P` at `mu_P`, shorting allowed.
pub fn efficient_frontier(universe: &AssetUniverse, mu_p: f64) -> Result<f64> {
    frontier_variance(&universe.mean_returns(), &universe.return_variances(), mu_p).map(f64::sqrt)
}

/// Fractions generating [`efficient_frontier`]: `q_i = (a + b mu_i) / sigma_i^2`.
pub fn ef_fractions(universe: &AssetUniverse, mu_p: f64) -> Result<Vec<f64>> {
    let mu = universe.mean_returns();
    let var = universe.return_variances();
    frontier_variance(&mu, &var, mu_p)?;
    let (a, b) = two_constraint_multipliers(&mu, &var, mu_p);
    Ok(mu.iter().zip(&var).map(|(m, v)| (a + b * m) / v).collect())
}

/// Solves `sum (a + b mu_i)/v_i = 1`, `sum mu_i (a + b mu_i)/v_i = t`.
fn two_constraint_multipliers(mu: &[f64], var: &[f64], t: f64) -> (f64, f64) {
    let det = determinant(mu, var);
    let a: f64 = mu.iter().zip(var).map(|(m, v)| m * (m - t) / v).sum::<f64>() / det;
    let b: f64 = mu.iter().zip(var).map(|(m, v)| (t - m) / v).sum::<f64>() / det;
    (a, b)
}

/// Tangency point of the capital market line with the frontier, `mu* = C2 / C1`.
pub fn market_portfolio(universe: &AssetUniverse) -> Result<FrontierPoint> {
    let s = moment_sums(universe)?;
    if !(s.c[1] > 0.0) {
        return Err(Error::Degenerate("no tangency for nonpositive C1".into()));
    }
    let mu_p = s.c[2] / s.c[1];
    Ok(FrontierPoint {
        mu_p,
        sigma_p: cml_sigma(universe, mu_p)?,
        fractions: Some(mv_fractions(universe, mu_p)?),
    })
}

/// Efficient frontier with `mu_i -> m_i + D_i/2` and `sigma_i^2 -> D_i`.
pub fn approx_frontier(universe: &AssetUniverse, mu_p: f64) -> Result<f64> {
    frontier_variance(&universe.approx_mean_returns(), &universe.variances(), mu_p).map(f64::sqrt)
}

/// Minimum of `sum q_i^2 var_i` over `q >= 0`, `sum q = 1`, `sum q mu = target`.
///
/// Primal active-set method started from the pair of assets bracketing the
/// target. The free-set solution is `q_i = (a + b mu_i)/var_i`; an asset held
/// at zero has multiplier `-(a + b mu_i)`, and the most negative one is
/// released first.
pub fn min_variance_no_short(mu: &[f64], var: &[f64], target: f64) -> Result<Vec<f64>> {
    positive_variances(var)?;
    let n = mu.len();
    if n == 0 || n != var.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: var.len(),
        });
    }
    let lo_mu = mu.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi_mu = mu.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = lo_mu.abs().max(hi_mu.abs()).max(1e-300);
    let tol = 1e-12 * scale;
    if !(target >= lo_mu - tol && target <= hi_mu + tol) {
        return Err(Error::Unattainable {
            target,
            reason: format!("outside the range of mean returns [{lo_mu}, {hi_mu}]"),
        });
    }
    let target = target.clamp(lo_mu, hi_mu);

    // Starting vertex: closest assets below and above the target.
    let below = (0..n)
        .filter(|&i| mu[i] <= target)
        .max_by(|&i, &j| mu[i].total_cmp(&mu[j]).then(var[j].total_cmp(&var[i])))
        .expect("target not below every mean");
    let above = (0..n)
        .filter(|&i| mu[i] >= target)
        .min_by(|&i, &j| mu[i].total_cmp(&mu[j]).then(var[i].total_cmp(&var[j])))
        .expect("target not above every mean");
    let mut q = vec![0.0; n];
    let mut free = vec![false; n];
    if mu[above] - mu[below] <= tol {
        q[below] = 1.0;
        free[below] = true;
    } else {
        let w = (target - mu[below]) / (mu[above] - mu[below]);
        q[below] = 1.0 - w;
        q[above] = w;
        free[below] = true;
        free[above] = true;
    }

    for _ in 0..(20 * n + 100) {
        let idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
        let fmu: Vec<f64> = idx.iter().map(|&i| mu[i]).collect();
        let fvar: Vec<f64> = idx.iter().map(|&i| var[i]).collect();
        let spread =
            fmu.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - fmu.iter().cloned().fold(f64::INFINITY, f64::min);
        let singular = spread <= tol;
        let (a, b) = if singular {
            (1.0 / sums(&fmu, &fvar)[0], 0.0)
        } else {
            two_constraint_multipliers(&fmu, &fvar, target)
        };
        let step: Vec<f64> = (0..n)
            .map(|i| if free[i] { (a + b * mu[i]) / var[i] - q[i] } else { 0.0 })
            .collect();
        let moved = step.iter().any(|s| s.abs() > 1e-14);
        if moved {
            let mut alpha = 1.0;
            let mut blocking = None;
            for &i in &idx {
                if step[i] < 0.0 {
                    let ratio = -q[i] / step[i];
                    if ratio < alpha {
                        alpha = ratio;
                        blocking = Some(i);
                    }
                }
            }
            for &i in &idx {
                q[i] = (q[i] + alpha * step[i]).max(0.0);
            }
            if let Some(i) = blocking {
                q[i] = 0.0;
                free[i] = false;
            }
            continue;
        }
        let fixed: Vec<usize> = (0..n).filter(|&i| !free[i]).collect();
        if singular {
            // All free assets sit at the target; progress needs a pair straddling it.
            let pick = |side: f64| {
                fixed
                    .iter()
                    .copied()
                    .filter(|&k| side * (mu[k] - target) > tol)
                    .min_by(|&i, &j| var[i].total_cmp(&var[j]))
            };
            let same: Option<usize> = fixed.iter().copied().find(|&k| (mu[k] - target).abs() <= tol);
            if let Some(k) = same {
                free[k] = true;
                continue;
            }
            match (pick(1.0), pick(-1.0)) {
                (Some(i), Some(j)) => {
                    free[i] = true;
                    free[j] = true;
                    continue;
                }
                _ => return Ok(normalise(q)),
            }
        }
        let worst = fixed
            .iter()
            .map(|&k| (k, -(a + b * mu[k])))
            .filter(|&(_, nu)| nu < -1e-14 * a.abs().max(b.abs() * scale).max(1e-300))
            .min_by(|x, y| x.1.total_cmp(&y.1));
        match worst {
            Some((k, _)) => free[k] = true,
            None => return Ok(normalise(q)),
        }
    }
    Err(Error::NotConverged {
        iterations: 20 * n + 100,
        residual: f64::NAN,
        best: q,
    })
}

fn normalise(mut q: Vec<f64>) -> Vec<f64> {
    let s: f64 = q.iter().sum();
    q.iter_mut().for_each(|x| *x /= s);
    q
}

/// No-short-sale frontier at each target in `mu_grid`.
pub fn constrained_frontier(universe: &AssetUniverse, mu_grid: &[f64]) -> Result<Vec<FrontierPoint>> {
    let mu = universe.mean_returns();
    let var = universe.return_variances();
    mu_grid
        .iter()
        .map(|&t| {
            let q = min_variance_no_short(&mu, &var, t)?;
            let s2: f64 = q.iter().zip(&var).map(|(x, v)| x * x * v).sum();
            Ok(FrontierPoint {
                mu_p: t,
                sigma_p: s2.sqrt(),
                fractions: Some(q),
            })
        })
        .collect()
}

/// Kelly point in the `(sigma, mu)` plane from the small-parameter sums over
/// the active set of the fully invested Kelly portfolio:
/// `mu_K = (C~0 C~2 - C~1^2 + C~1)/C~0`, `sigma_K^2 = (C~0 C~2 - C~1^2 + 1)/C~0`.
pub fn kelly_point(universe: &AssetUniverse) -> Result<KellyPoint> {
    let sol = kelly_fully_invested(universe)?;
    if sol.active_set.is_empty() {
        return Err(Error::Degenerate("empty active set".into()));
    }
    let (mu, var) = active_tilde(universe, &sol.active_set);
    let c = sums(&mu, &var);
    let det = determinant(&mu, &var);
    Ok(KellyPoint {
        mu_k: (det + c[1]) / c[0],
        sigma_k: ((det + 1.0) / c[0]).sqrt(),
        active_set: sol.active_set,
    })
}

fn active_tilde(universe: &AssetUniverse, active: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let a = universe.assets();
    (
        active.iter().map(|&i| a[i].m + 0.5 * a[i].d).collect(),
        active.iter().map(|&i| a[i].d).collect(),
    )
}

/// `|sigma_K^2 - sigma~(mu_K)^2|` with the approximate frontier over the active set.
/// A single active asset has no frontier curve; its residual is `|sigma_K^2 - D|`.
pub fn on_frontier_residual(universe: &AssetUniverse) -> Result<f64> {
    let k = kelly_point(universe)?;
    let (mu, var) = active_tilde(universe, &k.active_set);
    let s2 = k.sigma_k * k.sigma_k;
    if mu.len() == 1 {
        return Ok((s2 - var[0]).abs());
    }
    match frontier_variance(&mu, &var, k.mu_k) {
        Ok(f) => Ok((s2 - f).abs()),
        // identical active assets collapse the frontier to one point
        Err(Error::Degenerate(_)) => Ok((s2 - 1.0 / sums(&mu, &var)[0]).abs()),
        Err(e) => Err(e),
    }
}

/// Smallest Euclidean distance from `(sigma, mu)` to the polyline through `curve`.
pub fn distance_to_curve(sigma: f64, mu: f64, curve: &[FrontierPoint]) -> f64 {
    let mut best = f64::INFINITY;
    for w in curve.windows(2) {
        let (x0, y0, x1, y1) = (w[0].sigma_p, w[0].mu_p, w[1].sigma_p, w[1].mu_p);
        let (dx, dy) = (x1 - x0, y1 - y0);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 {
            (((sigma - x0) * dx + (mu - y0) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let d = ((x0 + t * dx - sigma).powi(2) + (y0 + t * dy - mu).powi(2)).sqrt();
        best = best.min(d);
    }
    if curve.len() == 1 {
        best = ((curve[0].sigma_p - sigma).powi(2) + (curve[0].mu_p - mu).powi(2)).sqrt();
    }
    best
}

/// Evenly spaced targets spanning `[min mu_i, max mu_i]`.
pub fn return_grid(universe: &AssetUniverse, points: usize) -> Vec<f64> {
    let mu = universe.mean_returns();
    let lo = mu.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = mu.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let points = points.max(2);
    (0..points)
        .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
        .collect()
}

/// Distance from the Kelly point to the constrained frontier, relative to `sigma_K`.
pub fn kelly_frontier_gap(universe: &AssetUniverse, grid_points: usize) -> Result<f64> {
    let k = kelly_point(universe)?;
    let curve = constrained_frontier(universe, &return_grid(universe, grid_points))?;
    Ok(distance_to_curve(k.sigma_k, k.mu_k, &curve) / k.sigma_k)
}
