//! Assets, universes, portfolios and the multiplicative price model.
//!
//! Each asset's log-return per step is Gaussian with mean `m` and variance
//! `D`; the simple return `R = exp(eta) - 1` is therefore lognormal.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{CounterRng, Domain};

/// Slack allowed below zero when checking nonnegativity of fractions.
pub const NONNEG_SLACK: f64 = 1e-15;
/// Absolute tolerance on budget equalities and inequalities.
pub const BUDGET_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Asset {
    pub name: String,
    pub m: f64,
    #[serde(rename = "D")]
    pub d: f64,
}

impl Asset {
    pub fn new(name: impl Into<String>, m: f64, d: f64) -> Result<Self> {
        let asset = Self {
            name: name.into(),
            m,
            d,
        };
        asset.validate()?;
        Ok(asset)
    }

    fn validate(&self) -> Result<()> {
        let fail = |reason: &str| {
            Err(Error::InvalidAsset {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if !self.m.is_finite() {
            return fail("m must be finite");
        }
        if !(self.d.is_finite() && self.d >= 0.0) {
            return fail("D must be finite and nonnegative");
        }
        let (mu, sigma2) = self.moments();
        if !(mu.is_finite() && sigma2.is_finite()) {
            return fail("return moments overflow");
        }
        Ok(())
    }

    /// Mean and variance of the lognormal simple return.
    pub fn moments(&self) -> (f64, f64) {
        asset_moments(self)
    }

    pub fn mean_return(&self) -> f64 {
        (self.m + 0.5 * self.d).exp() - 1.0
    }

    pub fn return_variance(&self) -> f64 {
        self.d.exp_m1() * (2.0 * self.m + self.d).exp()
    }
}

/// `(mu, sigma2)` with `mu = exp(m + D/2) - 1` and
/// `sigma2 = (exp(D) - 1) exp(2m + D)`.
pub fn asset_moments(asset: &Asset) -> (f64, f64) {
    (asset.mean_return(), asset.return_variance())
}

#[derive(Debug, Serialize, Deserialize)]
struct UniverseFile {
    assets: Vec<Asset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    covariance: Option<Vec<Vec<f64>>>,
}

/// An ordered set of assets with an optional log-return covariance `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetUniverse {
    assets: Vec<Asset>,
    covariance: Option<DMatrix<f64>>,
}

impl AssetUniverse {
    pub fn new(assets: Vec<Asset>) -> Result<Self> {
        if assets.is_empty() {
            return Err(Error::EmptyUniverse);
        }
        for a in &assets {
            a.validate()?;
        }
        Ok(Self {
            assets,
            covariance: None,
        })
    }

    /// Builds a universe from `(m, D)` pairs named `a1, a2, ...`.
    pub fn from_params(params: &[(f64, f64)]) -> Result<Self> {
        let assets = params
            .iter()
            .enumerate()
            .map(|(i, &(m, d))| Asset::new(format!("a{}", i + 1), m, d))
            .collect::<Result<Vec<_>>>()?;
        Self::new(assets)
    }

    pub fn with_covariance(assets: Vec<Asset>, covariance: DMatrix<f64>) -> Result<Self> {
        let mut u = Self::new(assets)?;
        validate_covariance(&u.assets, &covariance)?;
        u.covariance = Some(covariance);
        Ok(u)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: UniverseFile = serde_json::from_str(text)?;
        match file.covariance {
            None => Self::new(file.assets),
            Some(rows) => {
                let n = rows.len();
                if rows.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidCovariance("matrix is not square".into()));
                }
                if n != file.assets.len() {
                    return Err(Error::DimensionMismatch {
                        expected: file.assets.len(),
                        got: n,
                    });
                }
                let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
                Self::with_covariance(file.assets, m)
            }
        }
    }

    pub fn to_json(&self) -> String {
        let file = UniverseFile {
            assets: self.assets.clone(),
            covariance: self.covariance.as_ref().map(|c| {
                (0..c.nrows())
                    .map(|i| (0..c.ncols()).map(|j| c[(i, j)]).collect())
                    .collect()
            }),
        };
        serde_json::to_string_pretty(&file).expect("universe serialises")
    }

    pub fn len(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    pub fn assets(&self) -> &[Asset] {
        &self.assets
    }

    pub fn covariance(&self) -> Option<&DMatrix<f64>> {
        self.covariance.as_ref()
    }

    pub fn is_correlated(&self) -> bool {
        self.covariance
            .as_ref()
            .is_some_and(|c| (0..c.nrows()).any(|i| (0..c.ncols()).any(|j| i != j && c[(i, j)] != 0.0)))
    }

    pub fn means(&self) -> Vec<f64> {
        self.assets.iter().map(|a| a.m).collect()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.assets.iter().map(|a| a.d).collect()
    }

    pub fn mean_returns(&self) -> Vec<f64> {
        self.assets.iter().map(Asset::mean_return).collect()
    }

    pub fn return_variances(&self) -> Vec<f64> {
        self.assets.iter().map(Asset::return_variance).collect()
    }

    /// `m_i + D_i / 2`, the small-parameter approximation of the mean return.
    pub fn approx_mean_returns(&self) -> Vec<f64> {
        self.assets.iter().map(|a| a.m + 0.5 * a.d).collect()
    }

    /// Log-return covariance; diagonal `D` when none was given.
    pub fn log_covariance(&self) -> DMatrix<f64> {
        match &self.covariance {
            Some(c) => c.clone(),
            None => DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.variances())),
        }
    }

    /// Covariance of simple returns, `exp(m_i + m_j + (D_i + D_j)/2) (exp(S_ij) - 1)`.
    pub fn return_covariance(&self) -> DMatrix<f64> {
        let s = self.log_covariance();
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| {
            let (a, b) = (&self.assets[i], &self.assets[j]);
            (a.m + b.m + 0.5 * (a.d + b.d)).exp() * s[(i, j)].exp_m1()
        })
    }

    /// Factor `L` (n x k) with `L L^T = S`, keeping only positive eigen-directions,
    /// so a singular PSD covariance yields a reduced-rank factor.
    pub fn noise_factor(&self) -> DMatrix<f64> {
        match &self.covariance {
            None => DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                self.len(),
                self.assets.iter().map(|a| a.d.sqrt()),
            )),
            Some(c) => psd_factor(c),
        }
    }

    /// Every `m_i`, `D_i` (and `S`) multiplied by `factor`, i.e. a change of time step.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::invalid("scale factor must be positive"));
        }
        let assets = self
            .assets
            .iter()
            .map(|a| Asset::new(a.name.clone(), a.m * factor, a.d * factor))
            .collect::<Result<Vec<_>>>()?;
        match &self.covariance {
            None => Self::new(assets),
            Some(c) => Self::with_covariance(assets, c * factor),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let assets = indices
            .iter()
            .map(|&i| self.assets.get(i).cloned().ok_or(Error::invalid("index out of range")))
            .collect::<Result<Vec<_>>>()?;
        match &self.covariance {
            None => Self::new(assets),
            Some(c) => {
                let k = indices.len();
                Self::with_covariance(assets, DMatrix::from_fn(k, k, |a, b| c[(indices[a], indices[b])]))
            }
        }
    }
}

fn validate_covariance(assets: &[Asset], c: &DMatrix<f64>) -> Result<()> {
    let n = assets.len();
    if c.nrows() != n || c.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: c.nrows(),
        });
    }
    if c.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidCovariance("non-finite entry".into()));
    }
    let scale = c.iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
    for i in 0..n {
        for j in 0..i {
            if (c[(i, j)] - c[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::InvalidCovariance(format!("not symmetric at ({i}, {j})")));
            }
        }
        if (c[(i, i)] - assets[i].d).abs() > 1e-12 * assets[i].d.max(1.0) {
            return Err(Error::InvalidCovariance(format!(
                "diagonal entry {i} is {} but asset D is {}",
                c[(i, i)],
                assets[i].d
            )));
        }
    }
    let eig = SymmetricEigen::new(c.clone());
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-10 * scale {
        return Err(Error::InvalidCovariance(format!(
            "not positive semi-definite (eigenvalue {min:e})"
        )));
    }
    Ok(())
}

fn psd_factor(c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = c.nrows();
    let eig = SymmetricEigen::new(c.clone());
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let keep: Vec<usize> = (0..n)
        .filter(|&k| eig.eigenvalues[k] > 1e-12 * scale.max(f64::MIN_POSITIVE))
        .collect();
    let mut l = DMatrix::zeros(n, keep.len().max(1));
    for (col, &k) in keep.iter().enumerate() {
        let s = eig.eigenvalues[k].sqrt();
        for i in 0..n {
            l[(i, col)] = eig.eigenvectors[(i, k)] * s;
        }
    }
    l
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintPolicy {
    /// `q_i >= 0` and `sum q_i <= 1`; the remainder is held in cash.
    NoShortNoBorrow,
    /// As above with `sum q_i = 1`.
    FullyInvested,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PortfolioViolation {
    NonFinite { index: usize },
    ShortPosition { index: usize, value: f64 },
    SumExceedsOne { sum: f64, excess: f64 },
    NotFullyInvested { sum: f64 },
}

impl fmt::Display for PortfolioViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonFinite { index } => write!(f, "non-finite fraction at index {index}"),
            Self::ShortPosition { index, value } => {
                write!(f, "short position at index {index} ({value})")
            }
            Self::SumExceedsOne { sum, excess } => {
                write!(f, "sum {sum} exceeds 1 by {excess:e}")
            }
            Self::NotFullyInvested { sum } => write!(f, "sum {sum} differs from 1"),
        }
    }
}

impl std::error::Error for PortfolioViolation {}

#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    fractions: Vec<f64>,
    policy: ConstraintPolicy,
}

impl Portfolio {
    pub fn new(fractions: Vec<f64>, policy: ConstraintPolicy) -> Result<Self, PortfolioViolation> {
        validate_portfolio(&fractions, policy)?;
        Ok(Self { fractions, policy })
    }

    pub fn cash(n: usize) -> Self {
        Self {
            fractions: vec![0.0; n],
            policy: ConstraintPolicy::NoShortNoBorrow,
        }
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn policy(&self) -> ConstraintPolicy {
        self.policy
    }

    pub fn len(&self) -> usize {
        self.fractions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fractions.is_empty()
    }

    pub fn invested(&self) -> f64 {
        self.fractions.iter().sum()
    }
}

/// Checks the no-short/no-borrow constraints (and full investment under
/// [`ConstraintPolicy::FullyInvested`]), reporting the first violation.
pub fn validate_portfolio(fractions: &[f64], policy: ConstraintPolicy) -> Result<(), PortfolioViolation> {
    for (index, &q) in fractions.iter().enumerate() {
        if !q.is_finite() {
            return Err(PortfolioViolation::NonFinite { index });
        }
        if q < -NONNEG_SLACK {
            return Err(PortfolioViolation::ShortPosition { index, value: q });
        }
    }
    let sum: f64 = fractions.iter().sum();
    if sum > 1.0 + BUDGET_TOL {
        return Err(PortfolioViolation::SumExceedsOne { sum, excess: sum - 1.0 });
    }
    if policy == ConstraintPolicy::FullyInvested && (sum - 1.0).abs() > BUDGET_TOL {
        return Err(PortfolioViolation::NotFullyInvested { sum });
    }
    Ok(())
}

/// Wealth after one step from unit capital: `1 + sum q_i R_i`.
pub fn portfolio_wealth(portfolio: &Portfolio, returns: &[f64]) -> Result<f64> {
    if returns.len() != portfolio.len() {
        return Err(Error::DimensionMismatch {
            expected: portfolio.len(),
            got: returns.len(),
        });
    }
    if let Some(r) = returns.iter().find(|r| !(**r > -1.0)) {
        return Err(Error::invalid(format!("return {r} is not above -1")));
    }
    Ok(1.0 + dot(portfolio.fractions(), returns))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Simulated prices, stored path-major as `[path][t][asset]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePaths {
    n_paths: usize,
    horizon: usize,
    n_assets: usize,
    seed: u64,
    prices: Vec<f64>,
}

impl PricePaths {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn price(&self, path: usize, t: usize, asset: usize) -> f64 {
        self.prices[(path * (self.horizon + 1) + t) * self.n_assets + asset]
    }

    pub fn path(&self, path: usize) -> &[f64] {
        let len = (self.horizon + 1) * self.n_assets;
        &self.prices[path * len..(path + 1) * len]
    }

    /// CSV with header `path,t,asset,price`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "path,t,asset,price")?;
        for p in 0..self.n_paths {
            for t in 0..=self.horizon {
                for a in 0..self.n_assets {
                    writeln!(w, "{p},{t},{a},{:e}", self.price(p, t, a))?;
                }
            }
        }
        Ok(())
    }
}

/// Draws the log-return noise of one path into `eta` (`horizon x n_assets`).
/// Counter `(step * k + factor)` of stream `path` feeds factor `factor` at `step`.
pub(crate) struct NoiseModel {
    means: Vec<f64>,
    factor: DMatrix<f64>,
    diagonal: bool,
}

impl NoiseModel {
    pub(crate) fn new(universe: &AssetUniverse) -> Self {
        Self {
            means: universe.means(),
            factor: universe.noise_factor(),
            diagonal: !universe.is_correlated(),
        }
    }

    pub(crate) fn n_assets(&self) -> usize {
        self.means.len()
    }

    pub(crate) fn fill_path(&self, seed: u64, path: u64, horizon: usize, z: &mut Vec<f64>, eta: &mut [f64]) {
        let n = self.means.len();
        let k = self.factor.ncols();
        z.resize(horizon * k, 0.0);
        let mut rng = CounterRng::for_item(seed, Domain::PricePath, path);
        rng.fill_normals(0, z);
        for t in 0..horizon {
            let zt = &z[t * k..(t + 1) * k];
            let out = &mut eta[t * n..(t + 1) * n];
            if self.diagonal {
                for i in 0..n {
                    out[i] = self.means[i] + self.factor[(i, i)] * zt[i];
                }
            } else {
                for i in 0..n {
                    let mut s = self.means[i];
                    for (c, zc) in zt.iter().enumerate() {
                        s += self.factor[(i, c)] * zc;
                    }
                    out[i] = s;
                }
            }
        }
    }
}

/// Simulates `p_i(t) = p_i(t-1) exp(eta_i(t))` from `p_i(0) = 1`.
///
/// Output depends only on `(universe, horizon, n_paths, seed)`; paths are
/// generated in parallel from independent counter-addressed streams.
pub fn simulate_paths(universe: &AssetUniverse, horizon: usize, n_paths: usize, seed: u64) -> Result<PricePaths> {
    if horizon == 0 || n_paths == 0 {
        return Err(Error::invalid("horizon and n_paths must be at least 1"));
    }
    let noise = NoiseModel::new(universe);
    let n = universe.len();
    let stride = (horizon + 1) * n;
    let mut prices = vec![0.0; n_paths * stride];
    prices.par_chunks_mut(stride).enumerate().for_each_init(
        || (Vec::new(), vec![0.0; horizon * n]),
        |(z, eta), (p, out)| {
            noise.fill_path(seed, p as u64, horizon, z, eta);
            let mut log_price = vec![0.0; n];
            out[..n].fill(1.0);
            for t in 0..horizon {
                for i in 0..n {
                    log_price[i] += eta[t * n + i];
                    out[(t + 1) * n + i] = log_price[i].exp();
                }
            }
        },
    );
    Ok(PricePaths {
        n_paths,
        horizon,
        n_assets: n,
        seed,
        prices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn riskless_moments_vanish() {
        let a = Asset::new("cash-like", 0.0, 0.0).unwrap();
        assert_eq!(asset_moments(&a), (0.0, 0.0));
    }

    #[test]
    fn lognormal_moments() {
        let a = Asset::new("a", 0.1, 0.04).unwrap();
        let (mu, s2) = asset_moments(&a);
        assert!((mu - 0.127_497).abs() < 1e-6);
        assert!((s2 - 0.051_881).abs() < 1e-6);
    }

    #[test]
    fn zero_mean_return_on_martingale_line() {
        for d in [0.01, 0.3, 2.0] {
            let a = Asset::new("a", -d / 2.0, d).unwrap();
            assert!(a.mean_return().abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_assets() {
        assert!(Asset::new("x", f64::NAN, 0.1).is_err());
        assert!(Asset::new("x", 0.0, -0.1).is_err());
        assert!(matches!(AssetUniverse::new(vec![]), Err(Error::EmptyUniverse)));
    }

    #[test]
    fn wealth_examples() {
        let cash = Portfolio::cash(3);
        assert_eq!(portfolio_wealth(&cash, &[0.3, -0.5, 9.0]).unwrap(), 1.0);
        let one = Portfolio::new(vec![1.0], ConstraintPolicy::FullyInvested).unwrap();
        assert_eq!(portfolio_wealth(&one, &[0.5]).unwrap(), 1.5);
        let two = Portfolio::new(vec![0.25, 0.25], ConstraintPolicy::NoShortNoBorrow).unwrap();
        assert!((portfolio_wealth(&two, &[-0.9, -0.9]).unwrap() - 0.55).abs() < 1e-15);
        assert!(matches!(
            portfolio_wealth(&two, &[0.1]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(portfolio_wealth(&two, &[-1.0, 0.0]).is_err());
    }

    #[test]
    fn validation_reports_first_violation() {
        for policy in [ConstraintPolicy::NoShortNoBorrow, ConstraintPolicy::FullyInvested] {
            assert!(validate_portfolio(&[0.5, 0.5], policy).is_ok());
        }
        let short = validate_portfolio(&[-0.1, 0.6], ConstraintPolicy::NoShortNoBorrow).unwrap_err();
        assert_eq!(short, PortfolioViolation::ShortPosition { index: 0, value: -0.1 });
        assert!(short.to_string().starts_with("short position at index 0"));
        let over = validate_portfolio(&[0.7, 0.7], ConstraintPolicy::NoShortNoBorrow).unwrap_err();
        assert!(over.to_string().starts_with("sum 1.4 exceeds 1"));
        assert!(matches!(
            validate_portfolio(&[0.2, 0.3], ConstraintPolicy::FullyInvested),
            Err(PortfolioViolation::NotFullyInvested { .. })
        ));
        assert!(validate_portfolio(&[-1e-16, 1.0], ConstraintPolicy::FullyInvested).is_ok());
    }

    #[test]
    fn covariance_validation() {
        let assets = vec![Asset::new("a", 0.0, 0.01).unwrap(), Asset::new("b", 0.0, 0.01).unwrap()];
        let ok = DMatrix::from_row_slice(2, 2, &[0.01, 0.005, 0.005, 0.01]);
        assert!(AssetUniverse::with_covariance(assets.clone(), ok).is_ok());
        let singular = DMatrix::from_row_slice(2, 2, &[0.01, 0.01, 0.01, 0.01]);
        let u = AssetUniverse::with_covariance(assets.clone(), singular).unwrap();
        assert_eq!(u.noise_factor().ncols(), 1);
        let not_psd = DMatrix::from_row_slice(2, 2, &[0.01, 0.02, 0.02, 0.01]);
        assert!(matches!(
            AssetUniverse::with_covariance(assets.clone(), not_psd),
            Err(Error::InvalidCovariance(_))
        ));
        let bad_diag = DMatrix::from_row_slice(2, 2, &[0.02, 0.0, 0.0, 0.01]);
        assert!(AssetUniverse::with_covariance(assets, bad_diag).is_err());
    }

    #[test]
    fn json_round_trip_and_errors() {
        let text = r#"{"assets":[{"name":"a1","m":0.1,"D":0.04},{"name":"a2","m":0.15,"D":0.09}],
                       "covariance":[[0.04,0.01],[0.01,0.09]]}"#;
        let u = AssetUniverse::from_json(text).unwrap();
        assert_eq!(u.len(), 2);
        assert!(u.is_correlated());
        assert_eq!(AssetUniverse::from_json(&u.to_json()).unwrap(), u);
        assert!(matches!(
            AssetUniverse::from_json(r#"{"assets":[]}"#),
            Err(Error::EmptyUniverse)
        ));
        let err = AssetUniverse::from_json("{\n \"assets\": [ {\"name\": 1} ]\n}").unwrap_err();
        assert!(err.to_string().contains("line"));
    }

    #[test]
    fn deterministic_growth_without_noise() {
        let u = AssetUniverse::from_params(&[(0.05, 0.0), (-0.02, 0.0)]).unwrap();
        let paths = simulate_paths(&u, 30, 3, 1).unwrap();
        for p in 0..3 {
            for t in 0..=30 {
                for (i, m) in [0.05f64, -0.02].iter().enumerate() {
                    let expect = (m * t as f64).exp();
                    assert!((paths.price(p, t, i) - expect).abs() <= 1e-13 * expect);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_paths() {
        let u = AssetUniverse::from_params(&[(0.1, 0.04), (0.15, 0.09)]).unwrap();
        let a = simulate_paths(&u, 5, 50, 9).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| simulate_paths(&u, 5, 50, 9).unwrap());
        assert_eq!(a, b);
        assert_ne!(a, simulate_paths(&u, 5, 50, 10).unwrap());
    }

    #[test]
    fn one_step_log_returns_match_parameters() {
        let u = AssetUniverse::from_params(&[(0.05, 0.01)]).unwrap();
        let n = 100_000;
        let paths = simulate_paths(&u, 1, n, 2024).unwrap();
        let logs: Vec<f64> = (0..n).map(|p| paths.price(p, 1, 0).ln()).collect();
        let mean = logs.iter().sum::<f64>() / n as f64;
        let var = logs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se_mean = (0.01f64 / n as f64).sqrt();
        assert!((mean - 0.05).abs() < 4.0 * se_mean, "mean {mean}");
        let se_var = 0.01 * (2.0 / (n - 1) as f64).sqrt();
        assert!((var - 0.01).abs() < 5.0 * se_var, "var {var}");
    }

    #[test]
    fn correlated_paths_reproduce_covariance() {
        let assets = vec![
            Asset::new("a", 0.0, 0.04).unwrap(),
            Asset::new("b", 0.01, 0.09).unwrap(),
        ];
        let s = DMatrix::from_row_slice(2, 2, &[0.04, 0.03, 0.03, 0.09]);
        let u = AssetUniverse::with_covariance(assets, s).unwrap();
        let n = 100_000;
        let paths = simulate_paths(&u, 1, n, 5).unwrap();
        let (mut sa, mut sb, mut sab) = (0.0, 0.0, 0.0);
        for p in 0..n {
            let a = paths.price(p, 1, 0).ln();
            let b = paths.price(p, 1, 1).ln() - 0.01;
            sa += a * a;
            sb += b * b;
            sab += a * b;
        }
        let nf = n as f64;
        assert!((sa / nf - 0.04).abs() < 0.002);
        assert!((sb / nf - 0.09).abs() < 0.004);
        assert!((sab / nf - 0.03).abs() < 0.002);
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let u = AssetUniverse::from_params(&[(0.0, 0.01)]).unwrap();
        let paths = simulate_paths(&u, 2, 2, 3).unwrap();
        let mut buf = Vec::new();
        paths.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "path,t,asset,price");
        assert_eq!(lines.len(), 1 + 2 * 3);
        assert!(lines[1].starts_with("0,0,0,1e0"));
    }
}
