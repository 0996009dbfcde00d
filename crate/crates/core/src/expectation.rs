//! Gaussian expectations: exact integration (Gauss-Hermite or Monte Carlo)
//! and the small-variance expansion `E[g] ~ g(m) + D g''(m) / 2`.
//!
//! Portfolio statistics are computed on a [`ScenarioSet`]: a fixed weighted
//! set of joint return draws. Every quantity evaluated on one set shares the
//! same nodes, so differences between nearby portfolios are free of
//! integration noise.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AssetUniverse, Portfolio};
use crate::quadrature::tensor_normal_rule;
use crate::rng::{CounterRng, Domain};

pub const DEFAULT_QUAD_ORDER: usize = 64;
pub const MIN_QUAD_ORDER: usize = 16;
pub const MAX_QUAD_ASSETS: usize = 4;
pub const MIN_MC_SAMPLES: usize = 10_000;
pub const DEFAULT_MC_SAMPLES: usize = 200_000;

/// Number of scenarios summed per parallel task; fixed so sums do not depend
/// on the thread count.
const CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExpectationMethod {
    /// Tensor-product Gauss-Hermite with `order` nodes per dimension.
    GaussHermite { order: usize },
    /// Antithetic Monte Carlo with `samples` draws (rounded up to even).
    MonteCarlo { samples: usize, seed: u64 },
}

impl Default for ExpectationMethod {
    fn default() -> Self {
        Self::GaussHermite {
            order: DEFAULT_QUAD_ORDER,
        }
    }
}

impl ExpectationMethod {
    /// Quadrature for small universes, seeded Monte Carlo above the tensor-grid cap.
    pub fn for_dimension(n_assets: usize, seed: u64) -> Self {
        if n_assets <= MAX_QUAD_ASSETS {
            Self::default()
        } else {
            Self::MonteCarlo {
                samples: DEFAULT_MC_SAMPLES,
                seed,
            }
        }
    }

    pub fn validate(&self, n_assets: usize) -> Result<()> {
        match *self {
            Self::GaussHermite { order } => {
                if order < MIN_QUAD_ORDER {
                    return Err(Error::InvalidMethod(format!(
                        "quadrature order {order} is below {MIN_QUAD_ORDER}"
                    )));
                }
                if n_assets > MAX_QUAD_ASSETS {
                    return Err(Error::InvalidMethod(format!(
                        "tensor quadrature is limited to {MAX_QUAD_ASSETS} assets, got {n_assets}"
                    )));
                }
            }
            Self::MonteCarlo { samples, .. } => {
                if samples < MIN_MC_SAMPLES {
                    return Err(Error::InvalidMethod(format!(
                        "{samples} Monte Carlo samples is below {MIN_MC_SAMPLES}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `E[g(eta)]` for `eta ~ N(m, D)`.
pub fn gauss_expectation_1d(g: impl Fn(f64) -> f64, m: f64, d: f64, method: &ExpectationMethod) -> Result<f64> {
    if !(d >= 0.0 && d.is_finite() && m.is_finite()) {
        return Err(Error::invalid("need finite m and D >= 0"));
    }
    method.validate(1)?;
    let eval = |eta: f64| {
        let y = g(eta);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::NonFiniteIntegrand { at: eta })
        }
    };
    if d == 0.0 {
        return eval(m);
    }
    let s = d.sqrt();
    match *method {
        ExpectationMethod::GaussHermite { order } => {
            let (z, w) = tensor_normal_rule(order, 1);
            let mut acc = 0.0;
            for (zk, wk) in z.iter().zip(&w) {
                acc += wk * eval(m + s * zk)?;
            }
            Ok(acc)
        }
        ExpectationMethod::MonteCarlo { samples, seed } => {
            let pairs = samples.div_ceil(2);
            let mut rng = CounterRng::for_item(seed, Domain::Expectation, 0);
            let mut acc = 0.0;
            for _ in 0..pairs {
                let z = rng.next_normal();
                acc += eval(m + s * z)? + eval(m - s * z)?;
            }
            Ok(acc / (2 * pairs) as f64)
        }
    }
}

/// `g(m) + (D/2) g''(m)`. Without an analytic `g''`, a central difference
/// with step `max(1e-5, sqrt(D)/100)` is used.
pub fn approx_expectation(g: impl Fn(f64) -> f64, g_second: Option<&dyn Fn(f64) -> f64>, m: f64, d: f64) -> f64 {
    let g0 = g(m);
    let g2 = match g_second {
        Some(f) => f(m),
        None => {
            let h = (d.sqrt() / 100.0).max(1e-5);
            (g(m + h) - 2.0 * g0 + g(m - h)) / (h * h)
        }
    };
    g0 + 0.5 * d * g2
}

/// Bound `M D^2 / 8` on the error of [`approx_expectation`], where `M`
/// bounds `|g''''|` on `[m - 2D, m + 2D]`.
pub fn approx_error_bound(fourth_derivative_max: f64, d: f64) -> f64 {
    fourth_derivative_max * d * d / 8.0
}

/// Largest `|g''''|` over `samples` evenly spaced points of `[m - 2D, m + 2D]`.
pub fn fourth_derivative_max(g4: impl Fn(f64) -> f64, m: f64, d: f64, samples: usize) -> f64 {
    let samples = samples.max(2);
    let (lo, hi) = (m - 2.0 * d, m + 2.0 * d);
    (0..samples)
        .map(|k| g4(lo + (hi - lo) * k as f64 / (samples - 1) as f64).abs())
        .fold(0.0, f64::max)
}

/// As [`fourth_derivative_max`] with `g''''` from a five-point difference.
pub fn estimate_fourth_derivative_max(g: impl Fn(f64) -> f64, m: f64, d: f64, samples: usize) -> f64 {
    const H: f64 = 5e-3;
    let g4 = |x: f64| (g(x - 2.0 * H) - 4.0 * g(x - H) + 6.0 * g(x) - 4.0 * g(x + H) + g(x + 2.0 * H)) / H.powi(4);
    fourth_derivative_max(g4, m, d, samples)
}

/// Central-difference Hessian with per-axis step `eps^(1/4) max(1, |x_i|)`.
pub fn finite_difference_hessian(g: impl Fn(&[f64]) -> f64, x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|xi| f64::EPSILON.powf(0.25) * xi.abs().max(1.0)).collect();
    let mut p = x.to_vec();
    let g0 = g(x);
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        p[i] = x[i] + h[i];
        let up = g(&p);
        p[i] = x[i] - h[i];
        let dn = g(&p);
        p[i] = x[i];
        hess[(i, i)] = (up - 2.0 * g0 + dn) / (h[i] * h[i]);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| {
                p[i] = x[i] + si * h[i];
                p[j] = x[j] + sj * h[j];
                let v = g(&p);
                p[i] = x[i];
                p[j] = x[j];
                v
            };
            let v =
                (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0)) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// `g(m) + Tr(S V) / 2` for `eta ~ N(m, S)`, with `V` the Hessian of `g` at `m`
/// (finite differences when not supplied).
pub fn approx_expectation_correlated(
    g: impl Fn(&[f64]) -> f64,
    m: &[f64],
    s: &DMatrix<f64>,
    hessian: Option<&DMatrix<f64>>,
) -> Result<f64> {
    let n = m.len();
    if s.nrows() != n || s.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: s.nrows(),
        });
    }
    let owned;
    let v = match hessian {
        Some(v) => {
            if v.nrows() != n || v.ncols() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: v.nrows(),
                });
            }
            v
        }
        None => {
            owned = finite_difference_hessian(&g, m);
            &owned
        }
    };
    let trace: f64 = (0..n).map(|i| (0..n).map(|j| s[(i, j)] * v[(j, i)]).sum::<f64>()).sum();
    Ok(g(m) + 0.5 * trace)
}

/// Growth statistics of a portfolio: `v = E[ln W1]`, `v2 = E[(ln W1)^2]`,
/// `grad_i = E[R_i / W1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthStats {
    pub v: f64,
    pub v2: f64,
    pub grad: Vec<f64>,
}

impl GrowthStats {
    pub fn variance(&self) -> f64 {
        (self.v2 - self.v * self.v).max(0.0)
    }
}

/// Log-wealth moments with first and second derivatives in `q`.
#[derive(Debug, Clone)]
pub struct LogMoments {
    pub v: f64,
    pub v2: f64,
    pub grad_v: Vec<f64>,
    pub grad_v2: Vec<f64>,
    pub hess_v: DMatrix<f64>,
    pub hess_v2: DMatrix<f64>,
    /// Probability mass of scenarios with `W1 <= 0`, excluded from the sums.
    pub truncated_mass: f64,
}

impl LogMoments {
    pub fn var_log(&self) -> f64 {
        self.v2 - self.v * self.v
    }
}

/// Weighted joint draws of the simple returns `R`.
#[derive(Debug, Clone)]
pub struct ScenarioSet {
    n: usize,
    returns: Vec<f64>,
    weights: Vec<f64>,
    antithetic: bool,
}

impl ScenarioSet {
    pub fn new(universe: &AssetUniverse, method: &ExpectationMethod) -> Result<Self> {
        let n = universe.len();
        method.validate(n)?;
        let means = universe.means();
        let full = universe.noise_factor();
        let cols: Vec<usize> = (0..full.ncols())
            .filter(|&c| full.column(c).iter().any(|x| *x != 0.0))
            .collect();
        let k = cols.len();
        let factor = DMatrix::from_fn(n, k, |i, c| full[(i, cols[c])]);
        let to_returns = |z: &[f64], sign: f64, out: &mut [f64]| {
            for i in 0..n {
                let mut eta = means[i];
                for (c, zc) in z.iter().enumerate() {
                    eta += sign * factor[(i, c)] * zc;
                }
                out[i] = eta.exp_m1();
            }
        };
        match *method {
            ExpectationMethod::GaussHermite { order } => {
                let (points, weights) = tensor_normal_rule(order, k);
                let mut returns = vec![0.0; weights.len() * n];
                returns
                    .par_chunks_mut(n)
                    .enumerate()
                    .for_each(|(s, out)| to_returns(&points[s * k..(s + 1) * k], 1.0, out));
                Ok(Self {
                    n,
                    returns,
                    weights,
                    antithetic: false,
                })
            }
            ExpectationMethod::MonteCarlo { samples, seed } => {
                let pairs = samples.div_ceil(2);
                let mut returns = vec![0.0; 2 * pairs * n];
                returns.par_chunks_mut(2 * n).enumerate().for_each(|(p, out)| {
                    let mut z = vec![0.0; k];
                    CounterRng::for_item(seed, Domain::Expectation, p as u64).fill_normals(0, &mut z);
                    let (plus, minus) = out.split_at_mut(n);
                    to_returns(&z, 1.0, plus);
                    to_returns(&z, -1.0, minus);
                });
                Ok(Self {
                    n,
                    returns,
                    weights: vec![1.0 / (2 * pairs) as f64; 2 * pairs],
                    antithetic: true,
                })
            }
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn n_assets(&self) -> usize {
        self.n
    }

    pub fn is_monte_carlo(&self) -> bool {
        self.antithetic
    }

    pub fn weight(&self, s: usize) -> f64 {
        self.weights[s]
    }

    pub fn scenario(&self, s: usize) -> &[f64] {
        &self.returns[s * self.n..(s + 1) * self.n]
    }

    /// Weighted sums of `len` accumulators, reduced in a fixed order.
    fn accumulate<F>(&self, len: usize, f: F) -> Vec<f64>
    where
        F: Fn(&mut [f64], &[f64], f64) + Sync,
    {
        let chunks = self.len().div_ceil(CHUNK);
        let partials: Vec<Vec<f64>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = vec![0.0; len];
                for s in c * CHUNK..((c + 1) * CHUNK).min(self.len()) {
                    f(&mut acc, self.scenario(s), self.weights[s]);
                }
                acc
            })
            .collect();
        let mut total = vec![0.0; len];
        for p in partials {
            for (t, x) in total.iter_mut().zip(p) {
                *t += x;
            }
        }
        total
    }

    fn check_len(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: q.len(),
            });
        }
        Ok(())
    }

    /// `E[f(R)]`.
    pub fn expect(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> f64 {
        self.accumulate(1, |acc, r, w| acc[0] += w * f(r))[0]
    }

    /// `E[f(R)]` and its standard error (zero for quadrature). Monte Carlo
    /// errors are computed from antithetic pair means.
    pub fn expect_with_stderr(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> (f64, f64) {
        if !self.antithetic {
            return (self.expect(f), 0.0);
        }
        let pairs = self.len() / 2;
        let vals: Vec<f64> = (0..pairs)
            .into_par_iter()
            .map(|p| 0.5 * (f(self.scenario(2 * p)) + f(self.scenario(2 * p + 1))))
            .collect();
        let mean = vals.iter().sum::<f64>() / pairs as f64;
        let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (pairs - 1).max(1) as f64;
        (mean, (var / pairs as f64).sqrt())
    }

    /// Growth statistics; fails if any scenario has nonpositive wealth.
    pub fn growth_stats(&self, q: &[f64]) -> Result<GrowthStats> {
        self.check_len(q)?;
        let n = self.n;
        let acc = self.accumulate(n + 3, |acc, r, w| {
            let wealth = 1.0 + r.iter().zip(q).map(|(a, b)| a * b).sum::<f64>();
            if wealth <= 0.0 {
                acc[n + 2] += 1.0;
                return;
            }
            let l = wealth.ln();
            acc[0] += w * l;
            acc[1] += w * l * l;
            for i in 0..n {
                acc[2 + i] += w * r[i] / wealth;
            }
        });
        if acc[n + 2] > 0.0 {
            return Err(Error::Degenerate(format!(
                "wealth is nonpositive in {} scenarios",
                acc[n + 2]
            )));
        }
        Ok(GrowthStats {
            v: acc[0],
            v2: acc[1],
            grad: acc[2..2 + n].to_vec(),
        })
    }

    /// `E[ln W1]` with Monte Carlo standard error.
    pub fn growth_rate_with_stderr(&self, q: &[f64]) -> Result<(f64, f64)> {
        self.check_len(q)?;
        let (v, se) = self.expect_with_stderr(|r| (1.0 + r.iter().zip(q).map(|(a, b)| a * b).sum::<f64>()).ln());
        if v.is_finite() {
            Ok((v, se))
        } else {
            Err(Error::Degenerate("wealth is nonpositive in some scenario".into()))
        }
    }

    /// First and second derivative of `t -> E[ln W1(q + t d)]` at `t = 0`.
    pub fn directional(&self, q: &[f64], d: &[f64]) -> (f64, f64) {
        let acc = self.accumulate(2, |acc, r, w| {
            let wealth = 1.0 + r.iter().zip(q).map(|(a, b)| a * b).sum::<f64>();
            let x = r.iter().zip(d).map(|(a, b)| a * b).sum::<f64>() / wealth;
            acc[0] += w * x;
            acc[1] -= w * x * x;
        });
        (acc[0], acc[1])
    }

    /// Hessian of `E[ln W1]`: `-E[R_i R_j / W1^2]`.
    pub fn growth_hessian(&self, q: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let acc = self.accumulate(n * n, |acc, r, w| {
            let wealth = 1.0 + r.iter().zip(q).map(|(a, b)| a * b).sum::<f64>();
            let s = w / (wealth * wealth);
            for i in 0..n {
                for j in 0..=i {
                    acc[i * n + j] -= s * r[i] * r[j];
                }
            }
        });
        symmetric_from_lower(n, &acc)
    }

    /// Moments of `ln W1` with derivatives. With `truncate`, scenarios with
    /// `W1 <= 0` are dropped (no renormalisation) and their mass reported;
    /// otherwise such scenarios are an error.
    pub fn log_moments(&self, q: &[f64], truncate: bool) -> Result<LogMoments> {
        self.check_len(q)?;
        let n = self.n;
        let base = 3 + 2 * n;
        let acc = self.accumulate(base + 2 * n * n, |acc, r, w| {
            let wealth = 1.0 + r.iter().zip(q).map(|(a, b)| a * b).sum::<f64>();
            if wealth <= 0.0 {
                acc[2] += w;
                return;
            }
            let l = wealth.ln();
            acc[0] += w * l;
            acc[1] += w * l * l;
            let inv = 1.0 / wealth;
            let s2 = w * inv * inv;
            for i in 0..n {
                let x = r[i] * inv;
                acc[3 + i] += w * x;
                acc[3 + n + i] += 2.0 * w * l * x;
                for j in 0..=i {
                    let rr = s2 * r[i] * r[j];
                    acc[base + i * n + j] -= rr;
                    acc[base + n * n + i * n + j] += 2.0 * rr * (1.0 - l);
                }
            }
        });
        if !truncate && acc[2] > 0.0 {
            return Err(Error::Degenerate(format!(
                "wealth is nonpositive on probability mass {:e}",
                acc[2]
            )));
        }
        Ok(LogMoments {
            v: acc[0],
            v2: acc[1],
            grad_v: acc[3..3 + n].to_vec(),
            grad_v2: acc[3 + n..3 + 2 * n].to_vec(),
            hess_v: symmetric_from_lower(n, &acc[base..base + n * n]),
            hess_v2: symmetric_from_lower(n, &acc[base + n * n..]),
            truncated_mass: acc[2],
        })
    }
}

fn symmetric_from_lower(n: usize, lower: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if j <= i { lower[i * n + j] } else { lower[j * n + i] })
}

/// Growth statistics of a valid portfolio under `method`.
pub fn growth_stats(
    portfolio: &Portfolio,
    universe: &AssetUniverse,
    method: &ExpectationMethod,
) -> Result<GrowthStats> {
    if portfolio.len() != universe.len() {
        return Err(Error::DimensionMismatch {
            expected: universe.len(),
            got: portfolio.len(),
        });
    }
    ScenarioSet::new(universe, method)?.growth_stats(portfolio.fractions())
}
