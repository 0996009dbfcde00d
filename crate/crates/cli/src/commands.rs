use std::fs;

use kelly_core::condensation::{
    mc_alpha1_from_pairs, powerlaw_alpha1, tail_uniform_pairs, two_asset_phase, typical_ipr_asymptotic,
    typical_portfolio_return, typical_size_uniform, uniform_mc, MedianRule, PowerLawSpec, UniformSpec,
};
use kelly_core::expectation::{DEFAULT_MC_SAMPLES, DEFAULT_QUAD_ORDER, MAX_QUAD_ASSETS};
use kelly_core::kelly::{
    kelly_constrained, kelly_fraction_single, kelly_numerical, kelly_unconstrained, SolverOptions,
};
use kelly_core::lef::{exact_point, growth_grid, growth_range, lef_curve, LefSolution, SignPolicy};
use kelly_core::markowitz::{
    cml_sigma, constrained_frontier, efficient_frontier, kelly_point, market_portfolio, mv_fractions, return_grid,
};
use kelly_core::simulate::{named_portfolios, random_perturbations, simulate_growth};
use kelly_core::{AssetUniverse, ExpectationMethod, FrontierPoint, ScenarioSet};
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::output::{num, opt, Sink, Table};
use crate::{FigureArgs, GlobalArgs, MethodArg, PhaseArgs, PowerLawArgs, SimulateArgs, UniformArgs};

const FIG1_UNIVERSE: [(f64, f64); 3] = [(0.1, 0.04), (0.15, 0.09), (0.2, 0.25)];
const FIG2_VOLATILITIES: [f64; 4] = [0.01, 0.04, 0.25, 1.0];
const FIG5_RIGHT_SIZES: [usize; 9] = [10, 20, 50, 100, 200, 500, 1000, 2000, 5000];
/// LEF targets per frontier grid point when interpolating `sigma_LEF`.
const LEF_OVERSAMPLE: usize = 4;

pub struct Context {
    args: GlobalArgs,
    sink: Sink,
}

impl Context {
    pub fn new(args: GlobalArgs) -> Self {
        let sink = Sink::new(args.out.clone());
        Self { args, sink }
    }

    fn seed(&self, what: &str) -> CliResult<u64> {
        self.args
            .seed
            .ok_or_else(|| CliError::config(format!("--seed is required for {what}")))
    }

    fn universe(&self) -> CliResult<AssetUniverse> {
        let path = self
            .args
            .universe
            .as_ref()
            .ok_or_else(|| CliError::config("--universe is required for this command"))?;
        let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        AssetUniverse::from_json(&text).map_err(|source| CliError::Universe {
            path: path.clone(),
            source,
        })
    }

    fn universe_or_fig1(&self) -> CliResult<AssetUniverse> {
        if self.args.universe.is_some() {
            self.universe()
        } else {
            Ok(AssetUniverse::from_params(&FIG1_UNIVERSE)?)
        }
    }

    fn method(&self, n_assets: usize) -> CliResult<ExpectationMethod> {
        let kind = self.args.method.unwrap_or(if n_assets <= MAX_QUAD_ASSETS {
            MethodArg::Quad
        } else {
            MethodArg::Mc
        });
        let method = match kind {
            MethodArg::Quad => ExpectationMethod::GaussHermite {
                order: self.args.quad_order.unwrap_or(DEFAULT_QUAD_ORDER),
            },
            MethodArg::Mc => ExpectationMethod::MonteCarlo {
                samples: self.args.mc_samples.unwrap_or(DEFAULT_MC_SAMPLES),
                seed: self.seed("Monte Carlo expectations")?,
            },
        };
        method.validate(n_assets).map_err(|e| CliError::config(e.to_string()))?;
        Ok(method)
    }

    fn policy(&self) -> SignPolicy {
        if self.args.no_short {
            SignPolicy::NoShort
        } else {
            SignPolicy::Unrestricted
        }
    }

    pub fn optimize(&self) -> CliResult<()> {
        let u = self.universe()?;
        let method = self.method(u.len())?;
        let set = ScenarioSet::new(&u, &method)?;
        let unconstrained = kelly_unconstrained(&u)?;
        let constrained = kelly_constrained(&u)?;
        let v_constrained = set.growth_stats(&constrained.fractions)?.v;
        let numerical = kelly_numerical(&u, &SolverOptions::with_method(method))?;
        let numerical_active: Vec<usize> = (0..u.len()).filter(|&i| numerical.fractions[i] > 0.0).collect();
        let point = kelly_point(&u)?;
        let mv = mv_fractions(&u, point.mu_k)?;
        let doc = json!({
            "assets": u.assets().iter().map(|a| a.name.as_str()).collect::<Vec<_>>(),
            "method": method,
            "unconstrained": {
                "fractions": unconstrained,
                "v": set.growth_stats(&unconstrained).ok().map(|s| s.v),
            },
            "constrained": {
                "fractions": constrained.fractions,
                "gamma": constrained.gamma,
                "active_set": constrained.active_set,
                "binding": constrained.binding,
                "v": v_constrained,
            },
            "numerical": {
                "fractions": numerical.fractions,
                "active_set": numerical_active,
                "binding": (numerical.fractions.iter().sum::<f64>() - 1.0).abs() < 1e-9,
                "v": numerical.v,
                "residual": numerical.residual,
                "iterations": numerical.iterations,
            },
            "mv_fractions": { "mu_p": point.mu_k, "fractions": mv },
            "kelly_point": point,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("json value serialises");
        text.push('\n');
        self.sink.write(&text)
    }

    fn frontier_table(&self, u: &AssetUniverse, points: usize, with_lef: bool) -> CliResult<Table> {
        if points < 2 {
            return Err(CliError::config("--points must be at least 2"));
        }
        let grid = return_grid(u, points);
        let constrained = constrained_frontier(u, &grid)?;
        let lef = if with_lef {
            let method = self.method(u.len())?;
            let range = growth_range(u, &method, self.policy())?;
            let curve = lef_curve(u, &growth_grid(&range, LEF_OVERSAMPLE * points), &method, self.policy())?;
            Some(curve.iter().map(|s| exact_point(u, &s.fractions)).collect::<Vec<_>>())
        } else {
            None
        };
        let mut header = vec!["mu_P", "sigma_EF", "sigma_CML", "sigma_constrained"];
        if with_lef {
            header.push("sigma_LEF");
        }
        let mut table = Table::new(header);
        for (mu, c) in grid.iter().zip(&constrained) {
            let mut row = vec![
                num(*mu),
                opt(efficient_frontier(u, *mu).ok()),
                opt(cml_sigma(u, *mu).ok()),
                num(c.sigma_p),
            ];
            if let Some(curve) = &lef {
                row.push(opt(sigma_at(curve, *mu)));
            }
            table.push(row);
        }
        Ok(table)
    }

    pub fn frontier(&self, points: usize, with_lef: bool) -> CliResult<()> {
        let u = self.universe()?;
        self.sink.write(&self.frontier_table(&u, points, with_lef)?.render())
    }

    fn lef_table(&self, u: &AssetUniverse, points: usize) -> CliResult<Table> {
        if points < 2 {
            return Err(CliError::config("--points must be at least 2"));
        }
        let method = self.method(u.len())?;
        let range = growth_range(u, &method, self.policy())?;
        let curve = lef_curve(u, &growth_grid(&range, points), &method, self.policy())?;
        let mut header: Vec<String> = vec!["v_P".into(), "mu_P".into(), "sigma_P".into()];
        header.extend((1..=u.len()).map(|i| format!("q_{i}")));
        header.extend(["gamma1".into(), "gamma2".into(), "flag_nonphysical".into()]);
        let mut table = Table::new(header);
        for s in &curve {
            table.push(lef_row(u, s));
        }
        Ok(table)
    }

    pub fn lef(&self, points: usize) -> CliResult<()> {
        let u = self.universe()?;
        self.sink.write(&self.lef_table(&u, points)?.render())
    }

    fn phase_table(&self, a: &PhaseArgs) -> CliResult<Table> {
        if a.points < 2 || !(a.hi > a.lo) {
            return Err(CliError::config("phase grid needs --points >= 2 and --hi > --lo"));
        }
        let axis: Vec<f64> = (0..a.points)
            .map(|k| a.lo + (a.hi - a.lo) * k as f64 / (a.points - 1) as f64)
            .collect();
        let mut table = Table::new(["m1", "m2", "region"]);
        for &m2 in &axis {
            for &m1 in &axis {
                let region = two_asset_phase(m1, m2, a.d1, a.d2)?;
                table.push(vec![num(m1), num(m2), region.label().to_string()]);
            }
        }
        Ok(table)
    }

    pub fn phase(&self, a: &PhaseArgs) -> CliResult<()> {
        self.sink.write(&self.phase_table(a)?.render())
    }

    fn uniform_table(&self, a: &UniformArgs, seed: u64) -> CliResult<Table> {
        let widths =
            a.l.clone()
                .unwrap_or_else(|| (1..=50).map(|k| 0.01 * k as f64).collect());
        let mut table = Table::new(["L", "M_T_analytic", "M_T_mc", "ipr_analytic", "ipr_mc", "mu_P_pct"]);
        for l in widths {
            let spec = UniformSpec::centered(a.n, a.d, a.x, l)?;
            let mt = typical_size_uniform(&spec)?;
            let mc = uniform_mc(&spec, a.reps, seed)?;
            let mu = typical_portfolio_return(&spec)?;
            table.push(vec![
                num(l),
                num(mt),
                num(mc.mean_size),
                opt((mt > 0.0).then(|| typical_ipr_asymptotic(mt))),
                num(mc.mean_ipr),
                num(100.0 * mu),
            ]);
        }
        Ok(table)
    }

    fn uniform_by_size_table(&self, reps: usize, seed: u64) -> CliResult<Table> {
        let mut table = Table::new(["N", "M_T_analytic", "M_T_mc", "ipr_analytic", "ipr_mc"]);
        for n in FIG5_RIGHT_SIZES {
            let spec = UniformSpec::new(n, 0.01, 0.0, 0.1)?;
            let mt = typical_size_uniform(&spec)?;
            let mc = uniform_mc(&spec, reps, seed)?;
            table.push(vec![
                n.to_string(),
                num(mt),
                num(mc.mean_size),
                num(typical_ipr_asymptotic(mt)),
                num(mc.mean_ipr),
            ]);
        }
        Ok(table)
    }

    pub fn condense_uniform(&self, a: &UniformArgs) -> CliResult<()> {
        let seed = self.seed("condense uniform")?;
        self.sink.write(&self.uniform_table(a, seed)?.render())
    }

    fn powerlaw_table(&self, a: &PowerLawArgs, seed: u64) -> CliResult<Table> {
        let spec = PowerLawSpec::new(a.n, a.r, a.m_min, 1.0)?;
        let ds =
            a.d.clone()
                .unwrap_or_else(|| (0..21).map(|k| 10f64.powf(-1.0 + k as f64 / 10.0)).collect());
        let rule = if a.exact_median {
            MedianRule::Exact
        } else {
            MedianRule::Rounded
        };
        let pairs = tail_uniform_pairs(&spec, a.trials, seed);
        let mut table = Table::new(["D", "alpha1_median", "alpha1_mc"]);
        for d in ds {
            let median = powerlaw_alpha1(&spec, d, rule);
            let mc = mc_alpha1_from_pairs(&pairs, spec.m_min, d);
            for e in [median.as_ref().err(), mc.as_ref().err()].into_iter().flatten() {
                log::warn!("D = {d}: {e}");
            }
            table.push(vec![num(d), opt(median.ok()), opt(mc.ok())]);
        }
        Ok(table)
    }

    pub fn condense_powerlaw(&self, a: &PowerLawArgs) -> CliResult<()> {
        let seed = self.seed("condense powerlaw")?;
        self.sink.write(&self.powerlaw_table(a, seed)?.render())
    }

    pub fn simulate(&self, a: &SimulateArgs) -> CliResult<()> {
        let seed = self.seed("simulate")?;
        let u = self.universe()?;
        let method = self.method(u.len())?;
        let kelly = kelly_numerical(&u, &SolverOptions::with_method(method))?.fractions;
        let mut items = vec![("kelly".to_string(), kelly.clone())];
        if a.cash {
            items.push(("cash".to_string(), vec![0.0; u.len()]));
        }
        for spec in &a.portfolios {
            items.push(parse_portfolio(spec, u.len())?);
        }
        if a.perturb > 0 {
            let perturbed = random_perturbations(&kelly, a.perturb, a.amplitude, a.min_distance, seed)?;
            items.extend(
                perturbed
                    .into_iter()
                    .enumerate()
                    .map(|(i, q)| (format!("perturbed_{}", i + 1), q)),
            );
        }
        let strategies = named_portfolios(items).map_err(|e| CliError::config(e.to_string()))?;
        let report = simulate_growth(&u, &strategies, a.horizon, a.paths, seed)?;
        let mut header: Vec<String> = [
            "strategy",
            "mean",
            "stderr",
            "diff_to_kelly",
            "diff_stderr",
            "z_below_kelly",
        ]
        .map(String::from)
        .to_vec();
        header.extend((1..=u.len()).map(|i| format!("q_{i}")));
        let mut table = Table::new(header);
        for (est, (_, p)) in report.strategies.iter().zip(&strategies) {
            let mut row = vec![
                est.name.clone(),
                num(est.mean),
                num(est.stderr),
                num(est.diff_to_first),
                num(est.diff_stderr),
                num(est.z_below_first()),
            ];
            row.extend(p.fractions().iter().map(|q| num(*q)));
            table.push(row);
        }
        self.sink.write(&table.render())
    }

    pub fn figure(&self, a: &FigureArgs) -> CliResult<()> {
        match a.fig {
            1 | 3 => {
                let u = self.universe_or_fig1()?;
                self.sink
                    .write(&self.frontier_table(&u, a.points.unwrap_or(101), false)?.render())?;
                self.sink.companion("points", &marker_table(&u)?.render())
            }
            2 => self
                .sink
                .write(&self.single_asset_table(a.points.unwrap_or(41))?.render()),
            4 => {
                let args = PhaseArgs {
                    d1: 0.1,
                    d2: 0.2,
                    lo: -0.3,
                    hi: 0.4,
                    points: a.points.unwrap_or(141),
                };
                self.sink.write(&self.phase_table(&args)?.render())
            }
            5 => {
                let seed = self.seed("figure 5")?;
                let args = UniformArgs {
                    n: 1000,
                    d: 0.01,
                    x: -0.05,
                    l: a.points.map(|p| (1..=p).map(|k| 0.5 * k as f64 / p as f64).collect()),
                    reps: a.reps.unwrap_or(10_000),
                };
                self.sink.write(&self.uniform_table(&args, seed)?.render())?;
                self.sink
                    .companion("right", &self.uniform_by_size_table(args.reps, seed)?.render())
            }
            6 => {
                let seed = self.seed("figure 6")?;
                let args = PowerLawArgs {
                    n: 1000,
                    r: 0.1,
                    m_min: 0.1,
                    d: a.points.map(|p| {
                        let p = p.max(2);
                        (0..p)
                            .map(|k| 10f64.powf(-1.0 + 2.0 * k as f64 / (p - 1) as f64))
                            .collect()
                    }),
                    trials: a.trials.unwrap_or(100_000),
                    exact_median: false,
                };
                self.sink.write(&self.powerlaw_table(&args, seed)?.render())
            }
            7 => {
                let u = self.universe_or_fig1()?;
                let points = a.points.unwrap_or(101);
                self.sink.write(&self.frontier_table(&u, points, true)?.render())?;
                self.sink.companion("lef", &self.lef_table(&u, points)?.render())?;
                self.sink.companion("points", &marker_table(&u)?.render())
            }
            other => Err(CliError::config(format!("unknown figure {other}"))),
        }
    }

    /// Closed-form against numerically maximised single-asset fractions on
    /// `m in [-D, D]`.
    fn single_asset_table(&self, points: usize) -> CliResult<Table> {
        if points < 2 {
            return Err(CliError::config("--points must be at least 2"));
        }
        let method = self.method(1)?;
        let mut table = Table::new(["D", "m", "q_closed", "q_numerical"]);
        for d in FIG2_VOLATILITIES {
            for k in 0..points {
                let m = -d + 2.0 * d * k as f64 / (points - 1) as f64;
                let u = AssetUniverse::from_params(&[(m, d)])?;
                let q = kelly_numerical(&u, &SolverOptions::with_method(method))?.fractions[0];
                table.push(vec![num(d), num(m), num(kelly_fraction_single(m, d)), num(q)]);
            }
        }
        Ok(table)
    }
}

fn lef_row(u: &AssetUniverse, s: &LefSolution) -> Vec<String> {
    let p = exact_point(u, &s.fractions);
    let mut row = vec![num(s.v_p), num(p.mu_p), num(p.sigma_p)];
    row.extend(s.fractions.iter().map(|q| num(*q)));
    row.extend([opt(s.gamma1), opt(s.gamma2), u8::from(s.nonphysical).to_string()]);
    row
}

/// Individual assets, the market portfolio and the Kelly portfolio in the
/// `(sigma_P, mu_P)` plane.
fn marker_table(u: &AssetUniverse) -> CliResult<Table> {
    let mut table = Table::new(["label", "sigma_P", "mu_P"]);
    for a in u.assets() {
        table.push(vec![
            a.name.clone(),
            num(a.return_variance().sqrt()),
            num(a.mean_return()),
        ]);
    }
    if let Ok(m) = market_portfolio(u) {
        table.push(vec!["market".into(), num(m.sigma_p), num(m.mu_p)]);
    }
    let k = kelly_point(u)?;
    table.push(vec!["kelly".into(), num(k.sigma_k), num(k.mu_k)]);
    Ok(table)
}

/// `sigma` at return `mu` by linear interpolation along the first curve
/// segment bracketing `mu`.
fn sigma_at(curve: &[FrontierPoint], mu: f64) -> Option<f64> {
    curve.windows(2).find_map(|w| {
        let (a, b) = (&w[0], &w[1]);
        let (lo, hi) = if a.mu_p <= b.mu_p { (a, b) } else { (b, a) };
        if mu < lo.mu_p || mu > hi.mu_p {
            return None;
        }
        if hi.mu_p == lo.mu_p {
            return Some(lo.sigma_p.min(hi.sigma_p));
        }
        let t = (mu - lo.mu_p) / (hi.mu_p - lo.mu_p);
        Some(lo.sigma_p + t * (hi.sigma_p - lo.sigma_p))
    })
}

fn parse_portfolio(spec: &str, n: usize) -> CliResult<(String, Vec<f64>)> {
    let bad = |why: &str| CliError::config(format!("invalid comparison portfolio `{spec}`: {why}"));
    let (name, values) = spec.split_once('=').ok_or_else(|| bad("expected name=q1,q2,..."))?;
    if name.is_empty() {
        return Err(bad("empty name"));
    }
    let q = values
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| bad(&e.to_string()))?;
    if q.len() != n {
        return Err(bad(&format!("expected {n} fractions, got {}", q.len())));
    }
    Ok((name.to_string(), q))
}
