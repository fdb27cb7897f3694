//! Command-line front end: JSON config in, JSON or CSV reports out.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cones::{construct_tcie_cone, ConvexCone};
use crate::error::{Error, Result};
use crate::market::{Atom, Family, Market, MarketSpec, PeriodDistribution};
use crate::policy::{frontier_point, tc_frontier_point, Policy, TimeConsistentAux};
use crate::sim::{exceedance_prob, simulate, terminal_stats};
use crate::solver::{backward_recursion, Backend, ExpectationBackend, OptimizerKind, RecursionTable, SolverOptions};
use crate::{tcie, vssm};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "conemv", version, about = "Multi-period mean-variance portfolios under cone constraints")]
pub struct Cli {
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `numerics.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `numerics.samples` (SAA sample size).
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Overrides `numerics.paths` (simulated paths).
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the backward recursion and print K and C per period.
    Solve,
    /// Tabulate pre-committed and time-consistent frontier variances.
    Frontier {
        #[arg(long)]
        mean_min: Option<f64>,
        #[arg(long)]
        mean_max: Option<f64>,
        #[arg(long, default_value_t = 50)]
        points: usize,
        #[arg(long)]
        include_lower_branch: bool,
    },
    /// Simulate the configured policy.
    Simulate,
    /// Time-consistency-in-efficiency verdict and diagnostics.
    Tcie,
    /// Density moments of the signed supermartingale measure.
    Vssm,
    /// Emit a cone fragment for the `cones` section.
    MakeCone {
        /// Half-space bounded by the hyperplane orthogonal to the mean excess return.
        #[arg(long)]
        from_mean: bool,
    },
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub market: MarketConfig,
    #[serde(default)]
    pub cones: Option<ConesConfig>,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Deserialize, Debug, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Gaussian,
    StudentT,
    Discrete,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub value: Vec<f64>,
    pub prob: f64,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct AnnualStats {
    pub expected_returns: Vec<f64>,
    pub volatilities: Vec<f64>,
    pub correlations: Vec<Vec<f64>>,
}

#[derive(Deserialize, Debug, Clone, Default)]
#[serde(deny_unknown_fields)]
pub struct PeriodConfig {
    pub family: Option<FamilyName>,
    pub df: Option<u32>,
    pub mean: Option<Vec<f64>>,
    pub covariance: Option<Vec<Vec<f64>>>,
    pub atoms: Option<Vec<AtomConfig>>,
    pub annual: Option<AnnualStats>,
}

/// Period fields at the top level apply to every period; `periods` lists
/// per-period overrides.
#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    pub horizon: usize,
    pub riskless_rates: Vec<f64>,
    #[serde(flatten)]
    pub shared: PeriodConfig,
    #[serde(default)]
    pub periods: Option<Vec<PeriodConfig>>,
}

#[derive(Deserialize, Serialize, Debug, Clone, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConeConfig {
    WholeSpace,
    NonnegOrthant,
    HalfSpace { normal: Vec<f64> },
    Polyhedral { rows: Vec<Vec<f64>> },
}

#[derive(Deserialize, Debug, Clone)]
#[serde(untagged)]
pub enum ConesConfig {
    Single(ConeConfig),
    PerPeriod(Vec<ConeConfig>),
}

#[derive(Deserialize, Debug, Clone, Copy, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKindName {
    #[default]
    Precommitted,
    TimeConsistent,
    MinimumVariance,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(default)]
    pub kind: PolicyKindName,
    #[serde(default = "default_x0")]
    pub x0: f64,
    pub d: Option<f64>,
}

fn default_x0() -> f64 {
    1.0
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { kind: PolicyKindName::default(), x0: 1.0, d: None }
    }
}

#[derive(Deserialize, Debug, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum BackendName {
    Exact,
    Saa,
}

#[derive(Deserialize, Debug, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerName {
    ProjectedGradient,
    Penalty,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    /// Defaults to `exact` for discrete markets and `saa` otherwise.
    pub backend: Option<BackendName>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerName,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_moment_matching")]
    pub moment_matching: bool,
}

fn default_samples() -> usize {
    1_000_000
}
fn default_seed() -> u64 {
    7
}
fn default_optimizer() -> OptimizerName {
    OptimizerName::ProjectedGradient
}
fn default_tol() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    5000
}
fn default_paths() -> usize {
    1_000_000
}
fn default_moment_matching() -> bool {
    true
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            backend: None,
            samples: default_samples(),
            seed: default_seed(),
            optimizer: default_optimizer(),
            tol: default_tol(),
            max_iter: default_max_iter(),
            paths: default_paths(),
            moment_matching: default_moment_matching(),
        }
    }
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    if m == 0 || n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config(format!("{what} must be a non-empty rectangular matrix")));
    }
    Ok(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
}

impl PeriodConfig {
    fn merged(&self, over: &PeriodConfig) -> PeriodConfig {
        PeriodConfig {
            family: over.family.or(self.family),
            df: over.df.or(self.df),
            mean: over.mean.clone().or_else(|| self.mean.clone()),
            covariance: over.covariance.clone().or_else(|| self.covariance.clone()),
            atoms: over.atoms.clone().or_else(|| self.atoms.clone()),
            annual: over.annual.clone().or_else(|| self.annual.clone()),
        }
    }

    fn build(&self, t: usize, riskless: f64) -> Result<PeriodDistribution> {
        let family = match self.family.ok_or_else(|| Error::Config(format!("period {t}: missing family")))? {
            FamilyName::Gaussian => Family::Gaussian,
            FamilyName::StudentT => {
                Family::StudentT { df: self.df.ok_or_else(|| Error::Config(format!("period {t}: student_t needs df")))? }
            }
            FamilyName::Discrete => {
                let atoms = self.atoms.as_ref().ok_or_else(|| Error::Config(format!("period {t}: discrete needs atoms")))?;
                return PeriodDistribution::discrete(atoms.iter().map(|a| Atom::new(a.value.clone(), a.prob)).collect());
            }
        };
        if let Some(a) = &self.annual {
            let corr = matrix(&a.correlations, "correlations")?;
            return PeriodDistribution::from_annual_stats(&a.expected_returns, &a.volatilities, &corr, riskless, family);
        }
        let mean = self.mean.as_ref().ok_or_else(|| Error::Config(format!("period {t}: missing mean")))?;
        let cov = matrix(
            self.covariance.as_ref().ok_or_else(|| Error::Config(format!("period {t}: missing covariance")))?,
            "covariance",
        )?;
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::InvalidMarket(format!("period {t}: covariance shape does not match mean")));
        }
        Ok(PeriodDistribution { mean: DVector::from_column_slice(mean), covariance: cov, family })
    }
}

impl MarketConfig {
    pub fn to_spec(&self) -> Result<MarketSpec> {
        let horizon = self.horizon;
        if horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        let rates = match self.riskless_rates.len() {
            1 => vec![self.riskless_rates[0]; horizon],
            k if k == horizon => self.riskless_rates.clone(),
            k => return Err(Error::Config(format!("riskless_rates has {k} entries for horizon {horizon}"))),
        };
        let overrides = match &self.periods {
            None => vec![PeriodConfig::default(); horizon],
            Some(p) if p.len() == horizon => p.clone(),
            Some(p) => return Err(Error::Config(format!("periods has {} entries for horizon {horizon}", p.len()))),
        };
        let periods =
            overrides.iter().enumerate().map(|(t, o)| self.shared.merged(o).build(t, rates[t])).collect::<Result<Vec<_>>>()?;
        Ok(MarketSpec::new(rates, periods))
    }
}

impl ConeConfig {
    pub fn to_cone(&self, n: usize) -> Result<ConvexCone> {
        let cone = match self {
            ConeConfig::WholeSpace => ConvexCone::WholeSpace(n),
            ConeConfig::NonnegOrthant => ConvexCone::NonnegOrthant(n),
            ConeConfig::HalfSpace { normal } => ConvexCone::half_space(DVector::from_column_slice(normal))?,
            ConeConfig::Polyhedral { rows } => ConvexCone::polyhedral(matrix(rows, "rows")?)?,
        };
        if cone.dim() != n {
            return Err(Error::InvalidCone(format!("cone dimension {} does not match {n} assets", cone.dim())));
        }
        Ok(cone)
    }

    pub fn from_cone(cone: &ConvexCone) -> Self {
        match cone {
            ConvexCone::WholeSpace(_) => ConeConfig::WholeSpace,
            ConvexCone::NonnegOrthant(_) => ConeConfig::NonnegOrthant,
            ConvexCone::HalfSpace { normal } => ConeConfig::HalfSpace { normal: normal.iter().copied().collect() },
            ConvexCone::Polyhedral { rows } => {
                ConeConfig::Polyhedral { rows: rows.row_iter().map(|r| r.iter().copied().collect()).collect() }
            }
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn cones(&self, horizon: usize, n: usize) -> Result<Vec<ConvexCone>> {
        match &self.cones {
            None => Ok(vec![ConvexCone::WholeSpace(n); horizon]),
            Some(ConesConfig::Single(c)) => Ok(vec![c.to_cone(n)?; horizon]),
            Some(ConesConfig::PerPeriod(list)) if list.len() == horizon => list.iter().map(|c| c.to_cone(n)).collect(),
            Some(ConesConfig::PerPeriod(list)) => {
                Err(Error::Config(format!("cones has {} entries for horizon {horizon}", list.len())))
            }
        }
    }

    pub fn backend_mode(&self, market: &Market) -> ExpectationBackend {
        let n = &self.numerics;
        let backend = n.backend.unwrap_or(if market.is_discrete() { BackendName::Exact } else { BackendName::Saa });
        match backend {
            BackendName::Exact => ExpectationBackend::ExactDiscrete,
            BackendName::Saa => ExpectationBackend::Saa { samples: n.samples, seed: n.seed, moment_matching: n.moment_matching },
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            optimizer: match self.numerics.optimizer {
                OptimizerName::ProjectedGradient => OptimizerKind::ProjectedGradient,
                OptimizerName::Penalty => OptimizerKind::Penalty,
            },
            tol: self.numerics.tol,
            max_iter: self.numerics.max_iter,
            ..SolverOptions::default()
        }
    }
}

/// A validated, solved configuration.
pub struct Session {
    pub config: RunConfig,
    pub market: Market,
    pub cones: Vec<ConvexCone>,
    pub backend: Backend,
    pub table: RecursionTable,
}

impl Session {
    pub fn prepare(config: RunConfig) -> Result<(RunConfig, Market, Vec<ConvexCone>)> {
        let market = config.market.to_spec()?.validate()?;
        let cones = config.cones(market.horizon(), market.n_assets())?;
        Ok((config, market, cones))
    }

    pub fn solve(config: RunConfig) -> Result<Self> {
        let (config, market, cones) = Self::prepare(config)?;
        let backend = Backend::build(&market, config.backend_mode(&market))?;
        let table = backward_recursion(&market, &cones, &backend, &config.solver_options())?;
        Ok(Self { config, market, cones, backend, table })
    }

    fn x0(&self) -> f64 {
        self.config.policy.x0
    }

    fn target(&self) -> Result<f64> {
        self.config.policy.d.ok_or_else(|| Error::Config("policy.d is required".into()))
    }

    pub fn policy(&self) -> Result<Policy> {
        let x0 = self.x0();
        match self.config.policy.kind {
            PolicyKindName::MinimumVariance => Ok(Policy::minimum_variance(&self.table, x0)),
            PolicyKindName::Precommitted => Policy::precommitted(&self.table, x0, self.target()?),
            PolicyKindName::TimeConsistent => Policy::time_consistent(&self.table, &self.market, x0, self.target()?),
        }
    }
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

pub fn table_json(table: &RecursionTable) -> serde_json::Value {
    let periods: Vec<_> = table
        .periods
        .iter()
        .enumerate()
        .map(|(t, p)| {
            json!({
                "t": t,
                "k_plus": vec_of(&p.k_plus),
                "k_minus": vec_of(&p.k_minus),
                "c_plus": p.c_plus,
                "c_minus": p.c_minus,
                "residuals": {
                    "plus": {
                        "iterations": p.diag_plus.iterations,
                        "projected_gradient": p.diag_plus.pg_residual,
                        "variational_inequality": p.diag_plus.vi_residual,
                        "complementarity": p.diag_plus.complementarity,
                        "h_value": p.h_plus,
                    },
                    "minus": {
                        "iterations": p.diag_minus.iterations,
                        "projected_gradient": p.diag_minus.pg_residual,
                        "variational_inequality": p.diag_minus.vi_residual,
                        "complementarity": p.diag_minus.complementarity,
                        "h_value": p.h_minus,
                    },
                },
            })
        })
        .collect();
    json!({ "backend": table.backend, "horizon": table.horizon(), "rho": table.rho, "periods": periods })
}

fn cmd_solve(s: &Session) -> Result<String> {
    Ok(serde_json::to_string_pretty(&table_json(&s.table)).expect("serializable"))
}

fn cmd_frontier(
    s: &Session,
    mean_min: Option<f64>,
    mean_max: Option<f64>,
    points: usize,
    lower: bool,
    format: Format,
) -> Result<String> {
    let x0 = s.x0();
    let base = s.table.rho(0) * x0;
    let lo = mean_min.unwrap_or(base);
    let hi = mean_max.unwrap_or_else(|| s.config.policy.d.map_or(base + 0.4, |d| base + 2.0 * (d - base).abs().max(0.1)));
    if !(hi >= lo) || points < 1 {
        return Err(Error::Config(format!("empty frontier range [{lo}, {hi}] with {points} points")));
    }
    let tc = TimeConsistentAux::new(&s.market).ok();
    let mut rows = Vec::new();
    for i in 0..points {
        let mut mean = if points == 1 { lo } else { lo + (hi - lo) * i as f64 / (points - 1) as f64 };
        if (mean - base).abs() <= 1e-12 * (1.0 + base.abs()) {
            mean = base;
        }
        if mean < base && !lower {
            continue;
        }
        let pre = frontier_point(&s.table, x0, mean).ok().map(|p| p.variance);
        let tcv = tc.as_ref().and_then(|a| tc_frontier_point(a, x0, mean).ok());
        rows.push((mean, pre, tcv));
    }
    match format {
        Format::Csv => {
            let cell = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x}"));
            let mut out = String::from("mean,var_precommitted,var_time_consistent\n");
            for (m, p, t) in rows {
                out.push_str(&format!("{m},{},{}\n", cell(p), cell(t)));
            }
            Ok(out)
        }
        Format::Json => {
            let rows: Vec<_> =
                rows.into_iter().map(|(m, p, t)| json!({"mean": m, "var_precommitted": p, "var_time_consistent": t})).collect();
            Ok(serde_json::to_string_pretty(&rows).expect("serializable"))
        }
    }
}

fn cmd_simulate(s: &Session, format: Format) -> Result<String> {
    let policy = s.policy()?;
    let n = s.config.numerics.paths;
    let ens = simulate(&policy, &s.market, n, s.config.numerics.seed)?;
    let stats = terminal_stats(&ens);
    let horizon = s.market.horizon();
    let exceed = match policy.kind() {
        crate::policy::PolicyKind::Precommitted => {
            let th: Vec<f64> = (0..=horizon).map(|t| policy.threshold(t)).collect();
            Some((th.clone(), exceedance_prob(&ens, &th)?))
        }
        _ => None,
    };
    match format {
        Format::Csv => {
            let Some((th, r)) = exceed else {
                return Err(Error::Config("CSV output needs a precommitted policy".into()));
            };
            let mut out = String::from("t,threshold,above,first_crossing\n");
            for t in 1..horizon {
                out.push_str(&format!("{t},{},{},{}\n", th[t], r.above[t], r.first_crossing[t]));
            }
            Ok(out)
        }
        Format::Json => {
            let mut v = json!({
                "policy": policy.kind().name(),
                "n_paths": n,
                "seed": s.config.numerics.seed,
                "x0": policy.x0(),
                "target": policy.target(),
                "terminal": stats,
            });
            if let Some((th, r)) = exceed {
                v["mu_star"] = json!(policy.mu_star());
                v["thresholds"] = json!(th);
                v["exceedance"] = json!(r);
            }
            Ok(serde_json::to_string_pretty(&v).expect("serializable"))
        }
    }
}

fn cmd_tcie(s: &Session) -> Result<String> {
    let verdict = tcie::check_tcie(&s.table, &s.market)?;
    let probs = (0..s.market.horizon()).map(|t| tcie::transition_probs(&s.table, t, &s.backend)).collect::<Result<Vec<_>>>()?;
    let mut v = json!({
        "is_tcie": verdict.is_tcie,
        "reason": verdict.reason.label(),
        "detail": verdict.reason,
        "flip_period": verdict.flip_period,
        "periods": verdict.periods,
        "transition_probs": probs,
    });
    if let Some(d) = s.config.policy.d {
        let th = (0..=s.market.horizon()).map(|t| tcie::threshold(&s.table, s.x0(), d, t)).collect::<Result<Vec<_>>>();
        if let Ok(th) = th {
            v["thresholds"] = json!(th);
        }
    }
    Ok(serde_json::to_string_pretty(&v).expect("serializable"))
}

fn cmd_vssm(s: &Session) -> Result<String> {
    let x0 = s.x0();
    let d = s.config.policy.d.unwrap_or_else(|| s.table.rho(0) * x0 + 0.1);
    let policy = Policy::precommitted(&s.table, x0, d)?;
    let ens = simulate(&policy, &s.market, s.config.numerics.paths, s.config.numerics.seed)?;
    let report = vssm::density_report(&s.table, &ens)?;
    let mut v = serde_json::to_value(&report).expect("serializable");
    if s.market.is_discrete() {
        v["exact"] = json!(vssm::exact_density_moments(&s.table, &s.market)?);
        let checks = (0..s.market.horizon())
            .map(|t| vssm::supermartingale_check(&s.table, &s.market, &s.cones, t, 1e-9))
            .collect::<Result<Vec<_>>>()?;
        v["supermartingale"] = json!(checks);
    }
    Ok(serde_json::to_string_pretty(&v).expect("serializable"))
}

fn cmd_make_cone(config: RunConfig, from_mean: bool) -> Result<String> {
    if !from_mean {
        return Err(Error::Config("make-cone needs --from-mean".into()));
    }
    let (_, market, _) = Session::prepare(config)?;
    let mean = market.mean(0).clone();
    if (1..market.horizon()).any(|t| market.mean(t) != &mean) {
        let list = (0..market.horizon())
            .map(|t| construct_tcie_cone(market.mean(t)).map(|c| ConeConfig::from_cone(&c)))
            .collect::<Result<Vec<_>>>()?;
        return Ok(serde_json::to_string_pretty(&list).expect("serializable"));
    }
    let cone = construct_tcie_cone(&mean)?;
    Ok(serde_json::to_string_pretty(&ConeConfig::from_cone(&cone)).expect("serializable"))
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidMarket(_)
        | Error::InvalidCone(_)
        | Error::DimensionMismatch { .. }
        | Error::BackendMismatch(_)
        | Error::InvalidTarget(_)
        | Error::ZeroMeanExcess
        | Error::Config(_) => EXIT_CONFIG,
        Error::NoConvergence { .. }
        | Error::ConsistencyError { .. }
        | Error::TargetUnattainable { .. }
        | Error::InsufficientConditioningEvents(_) => EXIT_RUNTIME,
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut config = RunConfig::from_json(&text)?;
    if let Some(seed) = cli.seed {
        config.numerics.seed = seed;
    }
    if let Some(samples) = cli.samples {
        config.numerics.samples = samples;
    }
    if let Some(paths) = cli.paths {
        config.numerics.paths = paths;
    }
    Ok(config)
}

fn execute(cli: &Cli) -> Result<(String, Option<PathBuf>)> {
    let config = load_config(cli)?;
    let out = cli.out.clone().or_else(|| config.output.clone());
    let default_format = if matches!(cli.command, Command::Frontier { .. }) { Format::Csv } else { Format::Json };
    let format = cli.format.unwrap_or(default_format);
    let json_only = matches!(cli.command, Command::Solve | Command::Tcie | Command::Vssm | Command::MakeCone { .. });
    if json_only && format == Format::Csv {
        return Err(Error::Config("this subcommand only emits JSON".into()));
    }
    let text = match &cli.command {
        Command::MakeCone { from_mean } => cmd_make_cone(config, *from_mean)?,
        cmd => {
            let session = Session::solve(config)?;
            match cmd {
                Command::Solve => cmd_solve(&session)?,
                Command::Frontier { mean_min, mean_max, points, include_lower_branch } => {
                    cmd_frontier(&session, *mean_min, *mean_max, *points, *include_lower_branch, format)?
                }
                Command::Simulate => cmd_simulate(&session, format)?,
                Command::Tcie => cmd_tcie(&session)?,
                Command::Vssm => cmd_vssm(&session)?,
                Command::MakeCone { .. } => unreachable!(),
            }
        }
    };
    Ok((text, out))
}

/// Runs the CLI on `args`, writing the report to `stdout` (or `--out`) and
/// diagnostics to `stderr`. Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(stderr, "{e}") } else { write!(stdout, "{e}") };
            return code;
        }
    };
    match execute(&cli) {
        Ok((text, None)) => {
            let _ = writeln!(stdout, "{}", text.trim_end());
            EXIT_OK
        }
        Ok((text, Some(path))) => match fs::write(&path, text) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                let _ = writeln!(stderr, "error: cannot write {}: {e}", path.display());
                EXIT_RUNTIME
            }
        },
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}
