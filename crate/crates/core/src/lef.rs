//! Logarithmic efficient frontier: the portfolios minimising `Var(ln W1)` at
//! fixed `E[ln W1] = v_P` with `sum q = 1`.
//!
//! Stationarity reads `grad E[(ln W1)^2] + gamma1 grad E[ln W1] + gamma2 = 0`.
//! [`lef_point`] solves it by Newton iteration on the full KKT system with
//! quadrature derivatives; [`lef_approx_system`] solves the small-parameter
//! version in closed-form moments. Both share the same active-set driver,
//! which adds `q >= 0` under [`SignPolicy::NoShort`].

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expectation::{ExpectationMethod, ScenarioSet};
use crate::kelly::{fully_invested_from_params, maximize_growth, SolverOptions};
use crate::markowitz::{ef_fractions, min_variance_no_short, FrontierPoint};
use crate::model::AssetUniverse;

/// Truncated probability mass above which an unrestricted point is flagged.
pub const NONPHYSICAL_MASS: f64 = 1e-8;
const KKT_TOL: f64 = 1e-11;
const ACCEPT_TOL: f64 = 1e-8;
const ENDPOINT_TOL: f64 = 1e-10;
const MAX_ITER: usize = 300;
const SCAN_POINTS: usize = 200;
/// Targets closer than this (relative) to `v_max` start from the quadratic model.
const NEAR_MAX: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SignPolicy {
    /// Only `sum q = 1`; expectations drop scenarios with `W1 <= 0`.
    #[default]
    Unrestricted,
    /// Adds `q >= 0`.
    NoShort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LefSolution {
    pub fractions: Vec<f64>,
    pub v_p: f64,
    pub var_log: f64,
    /// Absent at endpoints, where the feasible set is a single point.
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
    pub truncated_mass: f64,
    pub nonphysical: bool,
}

impl LefSolution {
    pub fn has_short(&self) -> bool {
        self.fractions.iter().any(|q| *q < 0.0)
    }
}

/// Attainable growth rates `[v_min, v_max]` and the maximiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthRange {
    /// `min_i m_i`, the growth of the worst single asset.
    pub v_min: f64,
    /// Maximal growth; without sign constraints, the largest found where the
    /// truncated mass stays below [`NONPHYSICAL_MASS`].
    pub v_max: f64,
    pub argmax: Vec<f64>,
}

/// Value and derivatives of the stationarity system at `q`:
/// `f + gamma1 h + gamma2 = 0`, `c = 0`, `sum q = 1`.
struct Local {
    f: Vec<f64>,
    df: DMatrix<f64>,
    h: Vec<f64>,
    dh: DMatrix<f64>,
    c: f64,
    dc: Vec<f64>,
}

struct KktSolution {
    q: Vec<f64>,
    gamma1: f64,
    gamma2: f64,
}

fn least_squares_gammas(local: &Local, free: &[bool]) -> (f64, f64) {
    let idx: Vec<usize> = (0..free.len()).filter(|&i| free[i]).collect();
    let a = DMatrix::from_fn(idx.len(), 2, |r, c| if c == 0 { local.h[idx[r]] } else { 1.0 });
    let b = DVector::from_iterator(idx.len(), idx.iter().map(|&i| -local.f[i]));
    match a.svd(true, true).solve(&b, 1e-14) {
        Ok(x) => (x[0], x[1]),
        Err(_) => (0.0, 0.0),
    }
}

fn residual(local: &Local, q: &[f64], free: &[bool], g1: f64, g2: f64) -> Vec<f64> {
    let mut r: Vec<f64> = (0..q.len())
        .filter(|&i| free[i])
        .map(|i| local.f[i] + g1 * local.h[i] + g2)
        .collect();
    r.push(local.c);
    r.push(q.iter().sum::<f64>() - 1.0);
    r
}

fn inf_norm(r: &[f64]) -> f64 {
    r.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Damped Newton on the KKT system with a primal active set for `q >= 0`.
fn solve_kkt(start: &[f64], policy: SignPolicy, eval: impl Fn(&[f64]) -> Result<Local>) -> Result<KktSolution> {
    let n = start.len();
    let mut q = start.to_vec();
    let mut free: Vec<bool> = match policy {
        SignPolicy::Unrestricted => vec![true; n],
        SignPolicy::NoShort => q.iter().map(|x| *x > 0.0).collect(),
    };
    if policy == SignPolicy::NoShort {
        q.iter_mut().for_each(|x| *x = x.max(0.0));
    }
    let mut local = eval(&q)?;
    let (mut g1, mut g2) = least_squares_gammas(&local, &free);
    let mut best = f64::INFINITY;
    for _ in 0..MAX_ITER {
        if free.iter().filter(|f| **f).count() < 2 {
            // one free asset cannot move along sum q = 1
            let k = release_candidate(&local, &free, g1, g2)
                .ok_or_else(|| Error::Degenerate("no second asset to release".into()))?;
            free[k] = true;
            continue;
        }
        let r = residual(&local, &q, &free, g1, g2);
        let norm = inf_norm(&r);
        best = best.min(norm);
        if norm <= KKT_TOL {
            if policy == SignPolicy::NoShort {
                if let Some(k) = release_candidate(&local, &free, g1, g2) {
                    free[k] = true;
                    continue;
                }
            }
            return Ok(KktSolution {
                q,
                gamma1: g1,
                gamma2: g2,
            });
        }
        let idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
        let k = idx.len();
        let mut jac = DMatrix::zeros(k + 2, k + 2);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                jac[(a, b)] = local.df[(i, j)] + g1 * local.dh[(i, j)];
            }
            jac[(a, k)] = local.h[i];
            jac[(a, k + 1)] = 1.0;
            jac[(k, a)] = local.dc[i];
            jac[(k + 1, a)] = 1.0;
        }
        let step = jac
            .lu()
            .solve(&DVector::from_iterator(k + 2, r.iter().map(|x| -x)))
            .ok_or_else(|| Error::Singular("LEF Newton system".into()))?;
        if policy == SignPolicy::NoShort {
            let mut alpha = 1.0;
            let mut blocking = None;
            for (a, &i) in idx.iter().enumerate() {
                if step[a] < 0.0 && q[i] + step[a] < 0.0 {
                    let t = -q[i] / step[a];
                    if t < alpha {
                        alpha = t;
                        blocking = Some(i);
                    }
                }
            }
            if let Some(b) = blocking {
                for (a, &i) in idx.iter().enumerate() {
                    q[i] += alpha * step[a];
                }
                q[b] = 0.0;
                free[b] = false;
                g1 += alpha * step[k];
                g2 += alpha * step[k + 1];
                local = eval(&q)?;
                continue;
            }
        }
        // backtrack on the residual norm; the Newton direction is a descent
        // direction for it
        let merit = r.iter().map(|x| x * x).sum::<f64>();
        let mut alpha = 1.0;
        loop {
            let mut trial = q.clone();
            for (a, &i) in idx.iter().enumerate() {
                trial[i] += alpha * step[a];
            }
            let (t1, t2) = (g1 + alpha * step[k], g2 + alpha * step[k + 1]);
            let trial_local = eval(&trial)?;
            let tr = residual(&trial_local, &trial, &free, t1, t2);
            let trial_merit = tr.iter().map(|x| x * x).sum::<f64>();
            if trial_merit < merit || alpha < 1e-6 {
                q = trial;
                g1 = t1;
                g2 = t2;
                local = trial_local;
                break;
            }
            alpha *= 0.5;
        }
    }
    let r = residual(&local, &q, &free, g1, g2);
    let norm = inf_norm(&r);
    if norm <= ACCEPT_TOL {
        return Ok(KktSolution {
            q,
            gamma1: g1,
            gamma2: g2,
        });
    }
    Err(Error::NotConverged {
        iterations: MAX_ITER,
        residual: best.min(norm),
        best: q,
    })
}

/// Held-at-zero asset with the most negative multiplier, if any.
fn release_candidate(local: &Local, free: &[bool], g1: f64, g2: f64) -> Option<usize> {
    let mut pick = None;
    let mut worst = -KKT_TOL.sqrt();
    for i in 0..free.len() {
        if !free[i] {
            let nu = local.f[i] + g1 * local.h[i] + g2;
            if nu < worst {
                worst = nu;
                pick = Some(i);
            }
        }
    }
    pick
}

fn truncate_for(policy: SignPolicy) -> bool {
    policy == SignPolicy::Unrestricted
}

/// `E[ln W]` of a lognormal with the given mean and variance of `W`; cheap
/// stand-in for the exact growth during initialisation.
fn lognormal_growth(mu: f64, var: f64) -> f64 {
    let w = 1.0 + mu;
    if w <= 0.0 {
        return f64::NEG_INFINITY;
    }
    w.ln() - 0.5 * (var / (w * w)).ln_1p()
}

fn portfolio_moments(cov: &DMatrix<f64>, mu: &[f64], q: &[f64]) -> (f64, f64) {
    let qv = DVector::from_column_slice(q);
    let var = (qv.transpose() * cov * &qv)[(0, 0)];
    (q.iter().zip(mu).map(|(a, b)| a * b).sum(), var.max(0.0))
}

/// Mean-variance frontier fractions whose lognormal growth proxy crosses `v_p`,
/// taking the crossing nearest the low-risk end.
fn initial_guess(universe: &AssetUniverse, v_p: f64, policy: SignPolicy) -> Vec<f64> {
    let n = universe.len();
    let mu = universe.mean_returns();
    let var = universe.return_variances();
    let cov = universe.return_covariance();
    let lo = mu.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = mu.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let fractions = |t: f64| -> Option<Vec<f64>> {
        match policy {
            SignPolicy::NoShort => min_variance_no_short(&mu, &var, t).ok(),
            SignPolicy::Unrestricted => ef_fractions(universe, t).ok(),
        }
    };
    let growth = |t: f64| -> Option<f64> {
        fractions(t).map(|q| {
            let (m, v) = portfolio_moments(&cov, &mu, &q);
            lognormal_growth(m, v)
        })
    };
    let (from, to) = match policy {
        SignPolicy::NoShort => (lo, hi),
        SignPolicy::Unrestricted => {
            let c0: f64 = var.iter().map(|v| 1.0 / v).sum();
            let c1: f64 = mu.iter().zip(&var).map(|(m, v)| m / v).sum();
            let vertex = c1 / c0;
            let span = (hi - lo).max(1e-3);
            let up = growth(vertex).is_none_or(|g| g < v_p);
            if up {
                (vertex, vertex + 3.0 * span)
            } else {
                (vertex, vertex - 3.0 * span)
            }
        }
    };
    let at = |k: usize| from + (to - from) * k as f64 / SCAN_POINTS as f64;
    let mut prev = growth(at(0));
    let mut best: Option<(f64, f64)> = prev.map(|g| (at(0), g));
    for k in 1..=SCAN_POINTS {
        let cur = growth(at(k));
        if let (Some(a), Some(b)) = (prev, cur) {
            if (a - v_p) * (b - v_p) <= 0.0 {
                let (mut x0, mut x1) = (at(k - 1), at(k));
                let s0 = a - v_p;
                for _ in 0..60 {
                    let mid = 0.5 * (x0 + x1);
                    match growth(mid) {
                        Some(g) if (g - v_p) * s0 > 0.0 => x0 = mid,
                        _ => x1 = mid,
                    }
                }
                if let Some(q) = fractions(0.5 * (x0 + x1)) {
                    return q;
                }
            }
        }
        if let Some(b) = cur {
            if best.is_none_or(|(_, g)| b > g) {
                best = Some((at(k), b));
            }
        }
        prev = cur;
    }
    best.and_then(|(t, _)| fractions(t))
        .unwrap_or_else(|| vec![1.0 / n as f64; n])
}

/// Start for targets just below the maximum, where the feasible set is a
/// small ellipse around the maximiser: minimises the linearised
/// `E[(ln W1)^2]` over the quadratic model `v_max + d'Hd/2 = v_p` within the
/// maximiser's support.
fn near_max_guess(set: &ScenarioSet, range: &GrowthRange, v_p: f64, truncate: bool) -> Result<Option<Vec<f64>>> {
    let q0 = &range.argmax;
    let support: Vec<usize> = (0..q0.len()).filter(|&i| q0[i].abs() > 1e-12).collect();
    let k = support.len();
    if k < 2 {
        return Ok(None);
    }
    let lm = set.log_moments(q0, truncate)?;
    // sum-zero basis e_j - e_last on the support
    let z = DMatrix::from_fn(k, k - 1, |r, c| {
        if r == c {
            1.0
        } else if r == k - 1 {
            -1.0
        } else {
            0.0
        }
    });
    let h = DMatrix::from_fn(k, k, |a, b| -lm.hess_v[(support[a], support[b])]);
    let g = DVector::from_iterator(k, support.iter().map(|&i| lm.grad_v2[i]));
    let a = z.transpose() * h * &z;
    let gt = z.transpose() * g;
    let Some(x) = a.clone().cholesky().map(|c| c.solve(&gt)) else {
        return Ok(None);
    };
    let curv = gt.dot(&x);
    if !(curv > 0.0) {
        return Ok(None);
    }
    let t = (2.0 * (range.v_max - v_p) / curv).sqrt();
    let delta = z * (-t * x);
    let mut q = q0.clone();
    for (a, &i) in support.iter().enumerate() {
        q[i] += delta[a];
    }
    Ok(Some(q))
}

/// Ascent of the truncated growth on `sum q = 1`, confined to truncated mass
/// at most [`NONPHYSICAL_MASS`].
fn maximize_on_plane(set: &ScenarioSet, start: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = start.len();
    let mut q = start.to_vec();
    let mut lm = set.log_moments(&q, true)?;
    for _ in 0..MAX_ITER {
        let mean_g = lm.grad_v.iter().sum::<f64>() / n as f64;
        let pg: Vec<f64> = lm.grad_v.iter().map(|g| g - mean_g).collect();
        if inf_norm(&pg) <= KKT_TOL {
            return Ok((q, lm.v));
        }
        let mut jac = DMatrix::zeros(n + 1, n + 1);
        for i in 0..n {
            for j in 0..n {
                jac[(i, j)] = lm.hess_v[(i, j)];
            }
            jac[(i, n)] = 1.0;
            jac[(n, i)] = 1.0;
        }
        let mut rhs = DVector::zeros(n + 1);
        for i in 0..n {
            rhs[i] = -lm.grad_v[i];
        }
        let mut dir: Vec<f64> = match jac.lu().solve(&rhs) {
            Some(s) => s.iter().take(n).cloned().collect(),
            None => pg.clone(),
        };
        if dir.iter().zip(&pg).map(|(a, b)| a * b).sum::<f64>() <= 0.0 {
            dir = pg.clone();
        }
        let mut alpha = 1.0;
        let mut moved = false;
        while alpha >= 1e-10 {
            let trial: Vec<f64> = q.iter().zip(&dir).map(|(a, b)| a + alpha * b).collect();
            let tl = set.log_moments(&trial, true)?;
            // dropping scenarios with W1 <= 0 removes their -inf contribution,
            // so the truncated growth is unbounded outside the physical region
            if tl.truncated_mass <= NONPHYSICAL_MASS && tl.v > lm.v {
                q = trial;
                lm = tl;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !moved {
            // stationary, or held at the edge of the physical region
            return Ok((q, lm.v));
        }
    }
    Err(Error::NotConverged {
        iterations: MAX_ITER,
        residual: f64::NAN,
        best: q,
    })
}

fn range_on(
    set: &ScenarioSet,
    universe: &AssetUniverse,
    method: &ExpectationMethod,
    policy: SignPolicy,
) -> Result<GrowthRange> {
    let m = universe.means();
    let d = universe.variances();
    if let Some(index) = d.iter().position(|x| !(*x > 0.0)) {
        return Err(Error::ZeroVariance { index });
    }
    let v_min = m.iter().cloned().fold(f64::INFINITY, f64::min);
    let start = fully_invested_from_params(&m, &d)?.fractions;
    let (argmax, v_max) = match policy {
        SignPolicy::NoShort => {
            let opts = SolverOptions {
                fully_invested: true,
                ..SolverOptions::with_method(*method)
            };
            let sol = maximize_growth(set, &start, &opts)?;
            (sol.fractions, sol.v)
        }
        SignPolicy::Unrestricted => {
            let opts = SolverOptions {
                fully_invested: true,
                ..SolverOptions::with_method(*method)
            };
            let q0 = maximize_growth(set, &start, &opts)?.fractions;
            maximize_on_plane(set, &q0)?
        }
    };
    Ok(GrowthRange { v_min, v_max, argmax })
}

/// Attainable `[min_i m_i, max E[ln W1]]` on the feasible set of `policy`.
pub fn growth_range(universe: &AssetUniverse, method: &ExpectationMethod, policy: SignPolicy) -> Result<GrowthRange> {
    let set = ScenarioSet::new(universe, method)?;
    range_on(&set, universe, method, policy)
}

fn endpoint(set: &ScenarioSet, q: Vec<f64>, v_p: f64, policy: SignPolicy) -> Result<LefSolution> {
    let lm = set.log_moments(&q, truncate_for(policy))?;
    Ok(LefSolution {
        fractions: q,
        v_p,
        var_log: lm.var_log().max(0.0),
        gamma1: None,
        gamma2: None,
        truncated_mass: lm.truncated_mass,
        nonphysical: lm.truncated_mass > NONPHYSICAL_MASS,
    })
}

fn point_on(
    set: &ScenarioSet,
    universe: &AssetUniverse,
    range: &GrowthRange,
    v_p: f64,
    policy: SignPolicy,
) -> Result<LefSolution> {
    let n = universe.len();
    let scale = 1.0f64.max(v_p.abs());
    if !v_p.is_finite() || v_p < range.v_min - 1e-9 * scale || v_p > range.v_max + 1e-9 * scale {
        return Err(Error::Unattainable {
            target: v_p,
            reason: format!("growth rates span [{}, {}]", range.v_min, range.v_max),
        });
    }
    if n == 1 || v_p >= range.v_max - ENDPOINT_TOL * scale {
        return endpoint(set, range.argmax.clone(), v_p, policy);
    }
    if policy == SignPolicy::NoShort && v_p <= range.v_min + ENDPOINT_TOL * scale {
        // strict concavity leaves only the vertices of the worst assets
        let a = universe.assets();
        let k = (0..n)
            .filter(|&i| a[i].m <= range.v_min)
            .min_by(|&i, &j| a[i].d.total_cmp(&a[j].d))
            .unwrap_or(0);
        let mut q = vec![0.0; n];
        q[k] = 1.0;
        return endpoint(set, q, v_p, policy);
    }
    let truncate = truncate_for(policy);
    let near_max = range.v_max - v_p < NEAR_MAX * scale;
    let start = match near_max {
        true => near_max_guess(set, range, v_p, truncate)?,
        false => None,
    }
    .unwrap_or_else(|| initial_guess(universe, v_p, policy));
    let sol = solve_kkt(&start, policy, |q| {
        let lm = set.log_moments(q, truncate)?;
        Ok(Local {
            f: lm.grad_v2,
            df: lm.hess_v2,
            h: lm.grad_v.clone(),
            dh: lm.hess_v,
            c: lm.v - v_p,
            dc: lm.grad_v,
        })
    })?;
    let lm = set.log_moments(&sol.q, truncate)?;
    Ok(LefSolution {
        fractions: sol.q,
        v_p,
        var_log: lm.var_log().max(0.0),
        gamma1: Some(sol.gamma1),
        gamma2: Some(sol.gamma2),
        truncated_mass: lm.truncated_mass,
        nonphysical: lm.truncated_mass > NONPHYSICAL_MASS,
    })
}

/// Minimiser of `E[(ln W1)^2]` over `{sum q = 1, E[ln W1] = v_p}`.
pub fn lef_point(
    universe: &AssetUniverse,
    v_p: f64,
    method: &ExpectationMethod,
    policy: SignPolicy,
) -> Result<LefSolution> {
    let set = ScenarioSet::new(universe, method)?;
    let range = range_on(&set, universe, method, policy)?;
    point_on(&set, universe, &range, v_p, policy)
}

/// [`lef_point`] at every grid value, sharing the scenario set.
pub fn lef_curve(
    universe: &AssetUniverse,
    v_grid: &[f64],
    method: &ExpectationMethod,
    policy: SignPolicy,
) -> Result<Vec<LefSolution>> {
    let set = ScenarioSet::new(universe, method)?;
    let range = range_on(&set, universe, method, policy)?;
    v_grid
        .par_iter()
        .map(|&v| point_on(&set, universe, &range, v, policy))
        .collect()
}

/// Exact `(sigma_P, mu_P)` of a portfolio from the lognormal return moments.
pub fn exact_point(universe: &AssetUniverse, q: &[f64]) -> FrontierPoint {
    let (mu_p, var) = portfolio_moments(&universe.return_covariance(), &universe.mean_returns(), q);
    FrontierPoint {
        mu_p,
        sigma_p: var.sqrt(),
        fractions: Some(q.to_vec()),
    }
}

/// LEF points in the `(sigma_P, mu_P)` plane.
pub fn lef_frontier(
    universe: &AssetUniverse,
    v_grid: &[f64],
    method: &ExpectationMethod,
    policy: SignPolicy,
) -> Result<Vec<FrontierPoint>> {
    Ok(lef_curve(universe, v_grid, method, policy)?
        .iter()
        .map(|s| exact_point(universe, &s.fractions))
        .collect())
}

/// Evenly spaced growth targets over the attainable range.
pub fn growth_grid(range: &GrowthRange, points: usize) -> Vec<f64> {
    let points = points.max(2);
    (0..points)
        .map(|k| range.v_min + (range.v_max - range.v_min) * k as f64 / (points - 1) as f64)
        .collect()
}

/// Small-parameter LEF: `E[ln W1] ~ sum q_i mu~_i` with `mu~ = m + D/2`,
/// `E[R_i ln W1 / W1] ~ q_i D_i + mu~_i sum_{j != i} q_j mu~_j` and
/// `E[R_i / W1] ~ m_i + D_i (1 - 2 q_i) / 2`.
pub fn lef_approx_system(universe: &AssetUniverse, v_p: f64, policy: SignPolicy) -> Result<LefSolution> {
    let n = universe.len();
    let m = universe.means();
    let d = universe.variances();
    if let Some(index) = d.iter().position(|x| !(*x > 0.0)) {
        return Err(Error::ZeroVariance { index });
    }
    if m.iter().chain(&d).any(|x| x.abs() > 0.3) {
        warn!("LEF approximation used outside the small-parameter regime (some |m| or D > 0.3)");
    }
    let mt = universe.approx_mean_returns();
    let var_log = |q: &[f64]| q.iter().zip(&d).map(|(a, b)| a * a * b).sum::<f64>();
    let lo = mt.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = mt.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = 1.0f64.max(v_p.abs());
    let tol = 1e-12 * scale;
    let unattainable = || Error::Unattainable {
        target: v_p,
        reason: format!("sum q (m + D/2) spans [{lo}, {hi}]"),
    };
    if n == 1 || hi - lo <= tol {
        if (v_p - lo).abs() > tol.max(1e-12) {
            return Err(unattainable());
        }
        let q = vec![1.0 / n as f64; n];
        return Ok(LefSolution {
            var_log: var_log(&q),
            fractions: q,
            v_p,
            gamma1: None,
            gamma2: None,
            truncated_mass: 0.0,
            nonphysical: false,
        });
    }
    if policy == SignPolicy::NoShort && (v_p < lo - tol || v_p > hi + tol) {
        return Err(unattainable());
    }
    let start = match policy {
        SignPolicy::NoShort => min_variance_no_short(&mt, &d, v_p.clamp(lo, hi))?,
        SignPolicy::Unrestricted => {
            // minimum of sum q^2 D on the two constraint planes
            let c0: f64 = d.iter().map(|x| 1.0 / x).sum();
            let c1: f64 = mt.iter().zip(&d).map(|(a, b)| a / b).sum();
            let c2: f64 = mt.iter().zip(&d).map(|(a, b)| a * a / b).sum();
            let det = c0 * c2 - c1 * c1;
            let a = (c2 - v_p * c1) / det;
            let b = (v_p * c0 - c1) / det;
            mt.iter().zip(&d).map(|(x, y)| (a + b * x) / y).collect()
        }
    };
    let sol = solve_kkt(&start, policy, |q| {
        let s: f64 = q.iter().zip(&mt).map(|(a, b)| a * b).sum();
        let f = (0..n)
            .map(|i| 2.0 * q[i] * d[i] + 2.0 * mt[i] * (s - q[i] * mt[i]))
            .collect();
        let df = DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 * d[i] } else { 2.0 * mt[i] * mt[j] });
        let h = (0..n).map(|i| m[i] + 0.5 * d[i] * (1.0 - 2.0 * q[i])).collect();
        let dh = DMatrix::from_fn(n, n, |i, j| if i == j { -d[i] } else { 0.0 });
        Ok(Local {
            f,
            df,
            h,
            dh,
            c: s - v_p,
            dc: mt.clone(),
        })
    })?;
    Ok(LefSolution {
        var_log: var_log(&sol.q),
        fractions: sol.q,
        v_p,
        gamma1: Some(sol.gamma1),
        gamma2: Some(sol.gamma2),
        truncated_mass: 0.0,
        nonphysical: false,
    })
}

/// [`lef_point`] whose portfolio has `sum q (m + D/2) = coordinate`, found by
/// bisection on `v_P`. This is the coordinate [`lef_approx_system`] fixes.
pub fn lef_point_at_coordinate(
    universe: &AssetUniverse,
    coordinate: f64,
    method: &ExpectationMethod,
    policy: SignPolicy,
) -> Result<LefSolution> {
    let set = ScenarioSet::new(universe, method)?;
    let range = range_on(&set, universe, method, policy)?;
    let at = |v: f64| point_on(&set, universe, &range, v, policy);
    let f = |s: &LefSolution| approx_growth(universe, &s.fractions) - coordinate;
    let (mut lo, mut hi) = (at(range.v_min)?, at(range.v_max)?);
    let (f_lo, f_hi) = (f(&lo), f(&hi));
    if f_lo * f_hi > 0.0 {
        return Err(Error::NoRoot("sum q (m + D/2) along the LEF".into()));
    }
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi.abs() <= 1e-14 * 1.0f64.max(coordinate.abs()) {
        return Ok(hi);
    }
    let rising = f_hi > f_lo;
    for _ in 0..200 {
        if hi.v_p - lo.v_p <= 1e-13 * 1.0f64.max(hi.v_p.abs()) {
            break;
        }
        let mid = at(0.5 * (lo.v_p + hi.v_p))?;
        if (f(&mid) < 0.0) == rising {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if f(&lo).abs() <= f(&hi).abs() { lo } else { hi })
}

/// `sum q_i (m_i + D_i/2)`, the growth coordinate fixed by [`lef_approx_system`].
pub fn approx_growth(universe: &AssetUniverse, q: &[f64]) -> f64 {
    q.iter().zip(universe.approx_mean_returns()).map(|(a, b)| a * b).sum()
}
