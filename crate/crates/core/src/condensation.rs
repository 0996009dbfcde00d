//! Portfolio condensation: when the constrained Kelly portfolio holds only a
//! few of the profitable assets.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{CounterRng, Domain};

/// Regions of the two-asset phase diagram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhaseRegion {
    /// Both assets unprofitable: all cash.
    A,
    /// Only asset 1 held, partially.
    B1,
    /// Only asset 2 held, partially.
    B2,
    /// Both held, some cash left.
    C,
    /// Everything in asset 1; asset 2 unprofitable.
    D1,
    /// Everything in asset 2; asset 1 unprofitable.
    D2,
    /// Fully invested in both.
    E,
    /// Everything in asset 1 although asset 2 is profitable.
    F1,
    /// Everything in asset 2 although asset 1 is profitable.
    F2,
}

impl PhaseRegion {
    pub const ALL: [PhaseRegion; 9] = [
        Self::A,
        Self::B1,
        Self::B2,
        Self::C,
        Self::D1,
        Self::D2,
        Self::E,
        Self::F1,
        Self::F2,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::A => "A",
            Self::B1 => "B1",
            Self::B2 => "B2",
            Self::C => "C",
            Self::D1 => "D1",
            Self::D2 => "D2",
            Self::E => "E",
            Self::F1 => "F1",
            Self::F2 => "F2",
        }
    }
}

impl fmt::Display for PhaseRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// `(m1'', m1') = (m2 - (D1+D2)/2, m2 + (D1+D2)/2)`: above `m1'` the portfolio
/// condenses on asset 1, below `m1''` on asset 2.
pub fn condensation_thresholds(m2: f64, d1: f64, d2: f64) -> (f64, f64) {
    let half = 0.5 * (d1 + d2);
    (m2 - half, m2 + half)
}

/// Classifies `(m1, m2)` for fixed variances. Points on a boundary go to the
/// region on the lower-`m1` side; boundaries independent of `m1` go to the
/// less invested side.
pub fn two_asset_phase(m1: f64, m2: f64, d1: f64, d2: f64) -> Result<PhaseRegion> {
    if !(d1 > 0.0 && d2 > 0.0) {
        return Err(Error::invalid("variances must be positive"));
    }
    if !(m1.is_finite() && m2.is_finite()) {
        return Err(Error::invalid("mean log-returns must be finite"));
    }
    let p1 = m1 > -0.5 * d1;
    let p2 = m2 > -0.5 * d2;
    Ok(match (p1, p2) {
        (false, false) => PhaseRegion::A,
        (true, false) => {
            if m1 > 0.5 * d1 {
                PhaseRegion::D1
            } else {
                PhaseRegion::B1
            }
        }
        (false, true) => {
            if m2 > 0.5 * d2 {
                PhaseRegion::D2
            } else {
                PhaseRegion::B2
            }
        }
        (true, true) => {
            // unconstrained fractions fit the budget: m1/D1 + m2/D2 <= 0
            if (0.5 + m1 / d1) + (0.5 + m2 / d2) <= 1.0 {
                PhaseRegion::C
            } else {
                let (low, high) = condensation_thresholds(m2, d1, d2);
                if m1 > high {
                    PhaseRegion::F1
                } else if m1 <= low {
                    PhaseRegion::F2
                } else {
                    PhaseRegion::E
                }
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensationReport {
    /// Number of assets held.
    #[serde(rename = "M")]
    pub m: usize,
    /// Typical size from the order-statistics analysis, when applicable.
    #[serde(rename = "M_T", default, skip_serializing_if = "Option::is_none")]
    pub typical_size: Option<f64>,
    pub ipr: f64,
    /// `gamma(M)` when the budget constraint binds.
    #[serde(rename = "gamma_M", default, skip_serializing_if = "Option::is_none")]
    pub gamma_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqualVolPortfolio {
    pub report: CondensationReport,
    /// Fractions in the order of the input means.
    pub fractions: Vec<f64>,
}

/// `R = 1 / sum q_i^2`.
pub fn ipr(fractions: &[f64]) -> Result<f64> {
    let s2: f64 = fractions.iter().map(|q| q * q).sum();
    if !(fractions.iter().sum::<f64>() > 0.0) || s2 == 0.0 {
        return Err(Error::invalid("participation ratio of an empty portfolio"));
    }
    Ok(1.0 / s2)
}

/// Kelly portfolio for assets sharing the variance `D`. Assets are ranked by
/// decreasing `m` (ties in input order). When the budget binds, `M` is the
/// count of ranks with `sum_{i<=M} (m_i - m_M) < D`; that sum is
/// nondecreasing in `M`.
pub fn equal_vol_portfolio(ms: &[f64], d: f64) -> Result<EqualVolPortfolio> {
    if ms.is_empty() {
        return Err(Error::EmptyUniverse);
    }
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::invalid("D must be positive"));
    }
    if ms.iter().any(|m| !m.is_finite()) {
        return Err(Error::invalid("mean log-returns must be finite"));
    }
    let mut order: Vec<usize> = (0..ms.len()).collect();
    order.sort_by(|&i, &j| ms[j].total_cmp(&ms[i]));
    let sorted: Vec<f64> = order.iter().map(|&i| ms[i]).collect();
    let (m, gamma, q_sorted) = equal_vol_sorted(&sorted, d);
    let mut fractions = vec![0.0; ms.len()];
    for (rank, &i) in order.iter().enumerate() {
        fractions[i] = q_sorted.get(rank).copied().unwrap_or(0.0);
    }
    let ipr = if m == 0 { 0.0 } else { ipr(&fractions)? };
    Ok(EqualVolPortfolio {
        report: CondensationReport {
            m,
            typical_size: None,
            ipr,
            gamma_m: gamma,
        },
        fractions,
    })
}

/// Core of [`equal_vol_portfolio`] on means sorted in decreasing order.
/// Returns `(M, gamma, fractions of the first M ranks)`.
fn equal_vol_sorted(sorted: &[f64], d: f64) -> (usize, Option<f64>, Vec<f64>) {
    let raw_sum: f64 = sorted.iter().map(|m| (0.5 + m / d).max(0.0)).sum();
    if raw_sum <= 1.0 {
        let q: Vec<f64> = sorted.iter().map(|m| 0.5 + m / d).take_while(|q| *q > 0.0).collect();
        return (q.len(), None, q);
    }
    let mut cum = 0.0;
    let mut size = 0;
    for (k, &mk) in sorted.iter().enumerate() {
        cum += mk;
        let gap = cum - (k + 1) as f64 * mk;
        if gap < d {
            size = k + 1;
        } else {
            break;
        }
    }
    let total: f64 = sorted[..size].iter().sum();
    let gamma = d * (1.0 / size as f64 - 0.5) - total / size as f64;
    let q = sorted[..size].iter().map(|m| 0.5 + (m + gamma) / d).collect();
    (size, Some(gamma), q)
}

/// `N` means drawn uniformly from `[a, b]`, common variance `D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformSpec {
    pub n: usize,
    pub d: f64,
    pub a: f64,
    pub b: f64,
}

impl UniformSpec {
    pub fn new(n: usize, d: f64, a: f64, b: f64) -> Result<Self> {
        let s = Self { n, d, a, b };
        s.validate()?;
        Ok(s)
    }

    /// Support `[x - L, x + L]`.
    pub fn centered(n: usize, d: f64, x: f64, half_width: f64) -> Result<Self> {
        Self::new(n, d, x - half_width, x + half_width)
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("N must be at least 1"));
        }
        if !(self.d > 0.0 && self.d.is_finite()) {
            return Err(Error::invalid("D must be positive"));
        }
        if !(self.b > self.a && self.a.is_finite() && self.b.is_finite()) {
            return Err(Error::invalid("need finite a < b"));
        }
        Ok(())
    }

    /// Mean of the `i`-th largest draw (1-based): `b - (b - a) i / (N + 1)`.
    pub fn typical_mean(&self, i: f64) -> f64 {
        self.b - (self.b - self.a) * i / (self.n as f64 + 1.0)
    }

    /// The typical realisation `m_bar_1 > ... > m_bar_N`.
    pub fn typical_means(&self) -> Vec<f64> {
        (1..=self.n).map(|i| self.typical_mean(i as f64)).collect()
    }
}

/// Typical portfolio size (real valued):
/// 0 when `b + D/2 <= 0`; `sqrt(2ND/(b-a))` when the asset at that rank is
/// still profitable; otherwise the expected number of profitable assets
/// `N (b + D/2)/(b - a)`. Capped at `N`.
pub fn typical_size_uniform(spec: &UniformSpec) -> Result<f64> {
    spec.validate()?;
    let (n, d, a, b) = (spec.n as f64, spec.d, spec.a, spec.b);
    if b + 0.5 * d <= 0.0 {
        return Ok(0.0);
    }
    let saturated = (2.0 * n * d / (b - a)).sqrt();
    let size = if spec.typical_mean(saturated) + 0.5 * d > 0.0 {
        saturated
    } else {
        n * (b + 0.5 * d) / (b - a)
    };
    Ok(size.min(n))
}

/// `[B^2 M (M+1)(2M+1)/6]^-1` with `B = (b - a)/(D (N + 1))`.
pub fn typical_ipr(spec: &UniformSpec, typical_size: f64) -> f64 {
    let bb = (spec.b - spec.a) / (spec.d * (spec.n as f64 + 1.0));
    let m = typical_size;
    1.0 / (bb * bb * m * (m + 1.0) * (2.0 * m + 1.0) / 6.0)
}

/// Large-`M` form of [`typical_ipr`] in the saturated regime: `3 M / 4`.
pub fn typical_ipr_asymptotic(typical_size: f64) -> f64 {
    0.75 * typical_size
}

/// Kelly portfolio of the typical realisation.
pub fn typical_portfolio(spec: &UniformSpec) -> Result<EqualVolPortfolio> {
    spec.validate()?;
    let mut p = equal_vol_portfolio(&spec.typical_means(), spec.d)?;
    p.report.typical_size = Some(typical_size_uniform(spec)?);
    Ok(p)
}

/// `mu_P = sum q_i (exp(m_bar_i + D/2) - 1)` on the typical realisation.
pub fn typical_portfolio_return(spec: &UniformSpec) -> Result<f64> {
    let p = typical_portfolio(spec)?;
    Ok(spec
        .typical_means()
        .iter()
        .zip(&p.fractions)
        .map(|(m, q)| q * (m + 0.5 * spec.d).exp_m1())
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformMcSummary {
    pub repetitions: usize,
    pub mean_size: f64,
    pub size_stderr: f64,
    /// Mean participation ratio over repetitions with a nonempty portfolio.
    pub mean_ipr: f64,
    pub ipr_stderr: f64,
}

/// Monte Carlo averages of `M` and `R` over independent draws of the means.
/// Repetition `k` uses its own counter stream, so the result does not depend
/// on scheduling.
pub fn uniform_mc(spec: &UniformSpec, repetitions: usize, seed: u64) -> Result<UniformMcSummary> {
    spec.validate()?;
    if repetitions < 2 {
        return Err(Error::invalid("need at least two repetitions"));
    }
    let results: Vec<(f64, Option<f64>)> = (0..repetitions)
        .into_par_iter()
        .map(|k| {
            let mut rng = CounterRng::for_item(seed, Domain::UniformCondensation, k as u64);
            let mut ms: Vec<f64> = (0..spec.n)
                .map(|_| spec.a + (spec.b - spec.a) * rng.next_uniform())
                .collect();
            ms.sort_by(|x, y| y.total_cmp(x));
            let (size, _, q) = equal_vol_sorted(&ms, spec.d);
            let r = if size == 0 {
                None
            } else {
                Some(1.0 / q.iter().map(|x| x * x).sum::<f64>())
            };
            (size as f64, r)
        })
        .collect();
    let sizes: Vec<f64> = results.iter().map(|r| r.0).collect();
    let iprs: Vec<f64> = results.iter().filter_map(|r| r.1).collect();
    let (mean_size, size_stderr) = mean_stderr(&sizes);
    let (mean_ipr, ipr_stderr) = if iprs.is_empty() {
        (0.0, 0.0)
    } else {
        mean_stderr(&iprs)
    };
    Ok(UniformMcSummary {
        repetitions,
        mean_size,
        size_stderr,
        mean_ipr,
        ipr_stderr,
    })
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `N` assets of which a fraction `r` has means in the tail
/// `f(m) ~ m^(-alpha-1)`, `m > m_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawSpec {
    pub n: usize,
    pub r: f64,
    pub m_min: f64,
    pub alpha: f64,
}

impl PowerLawSpec {
    pub fn new(n: usize, r: f64, m_min: f64, alpha: f64) -> Result<Self> {
        let s = Self { n, r, m_min, alpha };
        s.validate_tail()?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid("alpha must be positive"));
        }
        Ok(s)
    }

    fn validate_tail(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r <= 1.0) {
            return Err(Error::invalid("tail fraction r must lie in (0, 1]"));
        }
        if !(self.m_min > 0.0 && self.m_min.is_finite()) {
            return Err(Error::invalid("m_min must be positive"));
        }
        if self.tail_count() < 2 {
            return Err(Error::invalid("the tail must hold at least two assets"));
        }
        Ok(())
    }

    /// Number of assets in the tail, `round(N r)`.
    pub fn tail_count(&self) -> usize {
        (self.n as f64 * self.r).round() as usize
    }
}

/// How the medians of the two largest tail draws are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MedianRule {
    /// Rounded constants: `m~1 = m_min (n/ln 2)^(1/alpha)`, `m~2 = m_min (n/1.68)^(1/alpha)`.
    #[default]
    Rounded,
    /// Exact finite-`n` medians of the largest and second largest draw.
    Exact,
}

/// Medians of the uniform variates `u` with `m = m_min u^(-1/alpha)` that
/// produce the largest and second largest of `n` tail draws.
pub fn median_tail_uniforms(n: usize, rule: MedianRule) -> (f64, f64) {
    let nf = n as f64;
    match rule {
        MedianRule::Rounded => (std::f64::consts::LN_2 / nf, 1.68 / nf),
        MedianRule::Exact => {
            let u1 = -(-std::f64::consts::LN_2 / nf).exp_m1();
            // P(second smallest <= u) = 1 - (1-u)^n - n u (1-u)^(n-1)
            let cdf = |u: f64| {
                let l = (-u).ln_1p();
                1.0 - (nf * l).exp() - nf * u * ((nf - 1.0) * l).exp()
            };
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if cdf(mid) < 0.5 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            (u1, 0.5 * (lo + hi))
        }
    }
}

/// `m~1 - m~2` at exponent `alpha`, evaluated in log space.
pub fn median_gap(spec_tail: &PowerLawSpec, alpha: f64, rule: MedianRule) -> f64 {
    let (u1, u2) = median_tail_uniforms(spec_tail.tail_count(), rule);
    let top = -u1.ln() / alpha;
    spec_tail.m_min * top.exp() * -((u1 / u2).ln() / alpha).exp_m1()
}

const ALPHA_BRACKET: (f64, f64) = (0.01, 100.0);

/// Root of a decreasing function on the alpha bracket by bisection.
fn bisect_alpha(f: impl Fn(f64) -> f64, what: &str) -> Result<f64> {
    let (mut lo, mut hi) = ALPHA_BRACKET;
    if !(f(lo) > 0.0 && f(hi) < 0.0) {
        return Err(Error::NoRoot(what.to_string()));
    }
    // bisect in log(alpha): the bracket spans four decades
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-14 {
            break;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Exponent `alpha_1` solving `m~1(alpha) - m~2(alpha) = D`; for smaller
/// `alpha` the portfolio typically holds only the best asset. The `alpha`
/// field of `spec` is ignored.
pub fn powerlaw_alpha1(spec: &PowerLawSpec, d: f64, rule: MedianRule) -> Result<f64> {
    spec.validate_tail()?;
    if !(d > 0.0) {
        return Err(Error::invalid("D must be positive"));
    }
    bisect_alpha(|a| median_gap(spec, a, rule) - d, "median gap = D")
}

/// Per-trial uniforms behind the two largest tail draws, from common random
/// numbers so that every `alpha` sees the same samples.
pub fn tail_uniform_pairs(spec: &PowerLawSpec, trials: usize, seed: u64) -> Vec<(f64, f64)> {
    let n = spec.tail_count();
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = CounterRng::for_item(seed, Domain::PowerLaw, t as u64);
            let (mut u1, mut u2) = (f64::INFINITY, f64::INFINITY);
            for _ in 0..n {
                let u = rng.next_uniform();
                if u < u1 {
                    u2 = u1;
                    u1 = u;
                } else if u < u2 {
                    u2 = u;
                }
            }
            (u1, u2)
        })
        .collect()
}

fn gap_exceeds(pairs: &[(f64, f64)], m_min: f64, alpha: f64, d: f64) -> usize {
    pairs
        .iter()
        .filter(|(u1, u2)| m_min * (u1.powf(-1.0 / alpha) - u2.powf(-1.0 / alpha)) > d)
        .count()
}

/// Empirical `P(m1 - m2 > D)` over `trials` draws of the tail by inverse-
/// transform sampling, with its binomial standard error.
pub fn mc_condensation_prob(spec: &PowerLawSpec, d: f64, trials: usize, seed: u64) -> Result<(f64, f64)> {
    spec.validate_tail()?;
    if !(spec.alpha > 0.0) {
        return Err(Error::invalid("alpha must be positive"));
    }
    if trials < 1000 {
        return Err(Error::invalid("need at least 1000 trials"));
    }
    let pairs = tail_uniform_pairs(spec, trials, seed);
    let p = gap_exceeds(&pairs, spec.m_min, spec.alpha, d) as f64 / trials as f64;
    Ok((p, (p * (1.0 - p) / trials as f64).sqrt()))
}

/// Root of `P(m1 - m2 > D) = 1/2` in `alpha` from common random numbers.
pub fn mc_alpha1(spec: &PowerLawSpec, d: f64, trials: usize, seed: u64) -> Result<f64> {
    spec.validate_tail()?;
    let pairs = tail_uniform_pairs(spec, trials, seed);
    mc_alpha1_from_pairs(&pairs, spec.m_min, d)
}

/// [`mc_alpha1`] on precomputed uniforms, for sweeping `D`.
pub fn mc_alpha1_from_pairs(pairs: &[(f64, f64)], m_min: f64, d: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("no trials"));
    }
    let half = pairs.len() as f64 / 2.0;
    bisect_alpha(
        |a| gap_exceeds(pairs, m_min, a, d) as f64 - half,
        "P(m1 - m2 > D) = 1/2",
    )
}
