//! `clutterscope` command-line interface.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on bad input. Output is
//! assembled in memory and written in one go, so a non-zero exit never
//! leaves partial output on stdout.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::classify::{classify, ClassifyOptions, MosRule, RankMode, DEFAULT_N_MAX};
use crate::error::Error;
use crate::montecarlo::{fmt_f64, run_experiment_with, EdgeMode, ExperimentPlan, MosClassifier, RankPolicy};
use crate::numkit::RngStream;
use crate::scenario::{synthesize_window, ClutterBasis, DataWindow, Model, ScenarioSpec};

#[derive(Debug, Parser)]
#[command(name = "clutterscope", version, about = "Reference-window clutter scenario classification")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize one data window as JSON.
    Gen(GenArgs),
    /// Classify a stored data window.
    Classify(ClassifyArgs),
    /// Monte Carlo classification sweep over CPR values (CSV).
    Sweep(SweepArgs),
    /// Monte Carlo rank-estimation experiment (CSV).
    Rank(SweepArgs),
    /// Mean convergence residual of the power-ratio fit per sweep (CSV).
    Convergence(ConvergenceArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Clutter variation model (1 or 2).
    #[arg(long, default_value_t = 1)]
    pub model: u8,
    /// True hypothesis index.
    #[arg(long, default_value_t = 0)]
    pub hyp: usize,
    /// Channels N.
    #[arg(long, default_value_t = 9)]
    pub n: usize,
    /// Primary snapshots K_P.
    #[arg(long, default_value_t = 8)]
    pub kp: usize,
    /// Secondary snapshots K_S (even).
    #[arg(long, default_value_t = 32)]
    pub ks: usize,
    /// Clutter-to-noise ratio in dB.
    #[arg(long, default_value_t = 30.0, allow_negative_numbers = true)]
    pub cnr: f64,
    /// Clutter angles in degrees.
    #[arg(long, value_delimiter = ',', default_values_t = [-20.0, 0.0, 10.0], allow_negative_numbers = true)]
    pub angles: Vec<f64>,
    /// Edge positions (one or two, comma separated).
    #[arg(long, value_delimiter = ',')]
    pub edges: Vec<usize>,
    /// Model 1 two-edge scaling of the outer power-ratio exponent.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Model 2 two-edge scaling of the outer clutter power.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Model 2 only: angle set for the non-primary regions.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub alt_angles: Option<Vec<f64>>,
}

impl ScenarioArgs {
    fn spec(&self, cpr_db: f64) -> Result<ScenarioSpec, Error> {
        let spec = ScenarioSpec {
            model: Model::from_number(self.model)?,
            hypothesis: self.hyp,
            kp: self.kp,
            ks: self.ks,
            edges: self.edges.clone(),
            cpr_db,
            alpha: self.alpha,
            beta: self.beta,
            basis: ClutterBasis { angles_deg: self.angles.clone(), n: self.n, cnr_db: self.cnr, noise_power: 1.0 },
            alt_angles_deg: self.alt_angles.clone(),
        };
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleName {
    Aic,
    Gic,
    Bic,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Clutter power ratio in dB.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub cpr: f64,
    #[arg(long, env = "CLUTTERSCOPE_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Stream index within the seed.
    #[arg(long, default_value_t = 0)]
    pub stream: u64,
    /// Output file (stdout when absent).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ClassifyArgs {
    /// DataWindow JSON file.
    pub input: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub model: u8,
    #[arg(long, value_enum, default_value_t = RuleName::Bic)]
    pub rule: RuleName,
    /// GIC parameter ρ.
    #[arg(long, default_value_t = 2.0)]
    pub rho: f64,
    /// Clutter rank, or `auto` to estimate it.
    #[arg(long, default_value = "3")]
    pub rank: String,
    /// Largest rank tried in auto mode.
    #[arg(long)]
    pub m_upper: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_N_MAX)]
    pub n_max: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// CPR grid `start:stop:step`, a list `a,b,c`, or a single value (dB).
    #[arg(long, default_value = "0:25:1", allow_hyphen_values = true)]
    pub cpr: String,
    /// Rules to score: aic, bic, gic<rho> (e.g. gic4). Defaults to AIC, GIC2, GIC4, BIC.
    #[arg(long = "rule", value_delimiter = ',')]
    pub rules: Vec<String>,
    /// Monte Carlo trials per CPR value.
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, env = "CLUTTERSCOPE_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Draw edges uniformly per trial instead of using --edges.
    #[arg(long)]
    pub random_edges: bool,
    /// Clutter rank handling: `known` or `auto`.
    #[arg(long, default_value = "known")]
    pub rank: String,
    #[arg(long)]
    pub m_upper: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_N_MAX)]
    pub n_max: usize,
    /// Worker threads (all cores when absent).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// CSV output file (stdout when absent).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Also write the full report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ConvergenceArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value = "10", allow_hyphen_values = true)]
    pub cpr: String,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, env = "CLUTTERSCOPE_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Sweeps of the cyclic fit to record.
    #[arg(long, default_value_t = 10)]
    pub n_max: usize,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

/// Failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidInput(_) | Error::Json(_) => 2,
            Error::Degenerate(_) | Error::NoConvergence | Error::Io(_) => 1,
        };
        Self { code, message: e.to_string() }
    }
}

fn bad_input(msg: impl Into<String>) -> CliError {
    CliError { code: 2, message: msg.into() }
}

/// Parses `start:stop:step`, `a,b,c` or a single value.
pub fn parse_cpr_grid(s: &str) -> Result<Vec<f64>, Error> {
    let num = |t: &str| -> Result<f64, Error> {
        let v: f64 = t.trim().parse().map_err(|_| Error::invalid(format!("bad number '{t}' in CPR grid")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::invalid("CPR values must be finite"))
        }
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if step <= 0.0 || stop < start {
                return Err(Error::invalid("CPR grid needs step > 0 and stop >= start"));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|i| start + step * i as f64).collect())
        }
        [single] => single.split(',').map(num).collect(),
        _ => Err(Error::invalid(format!("bad CPR grid '{s}' (start:stop:step or a,b,c)"))),
    }
}

fn parse_rules(names: &[String]) -> Result<Vec<MosRule>, Error> {
    if names.is_empty() {
        return Ok(MosRule::standard_set());
    }
    names.iter().map(|n| n.parse()).collect()
}

fn rank_policy(s: &str) -> Result<RankPolicy, Error> {
    match s.to_ascii_lowercase().as_str() {
        "known" => Ok(RankPolicy::Known),
        "auto" => Ok(RankPolicy::Auto),
        other => Err(Error::invalid(format!("rank mode must be 'known' or 'auto', got '{other}'"))),
    }
}

fn header(argv: &[String], resolved: &[(&str, String)]) -> String {
    let mut out = format!("# clutterscope {}\n", argv.join(" "));
    for (k, v) in resolved {
        out.push_str(&format!("# {k}={v}\n"));
    }
    out
}

fn scenario_echo(s: &ScenarioArgs) -> Vec<(&'static str, String)> {
    let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    let mut out = vec![
        ("model", s.model.to_string()),
        ("hyp", s.hyp.to_string()),
        ("n", s.n.to_string()),
        ("kp", s.kp.to_string()),
        ("ks", s.ks.to_string()),
        ("cnr_db", s.cnr.to_string()),
        ("angles", list(&s.angles)),
        ("edges", s.edges.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(",")),
        ("alpha", s.alpha.to_string()),
        ("beta", s.beta.to_string()),
    ];
    if let Some(a) = &s.alt_angles {
        out.push(("alt_angles", list(a)));
    }
    out
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError { code: 1, message: e.to_string() };
    match path {
        Some(p) => fs::write(p, text).map_err(io),
        None => {
            out.write_all(text.as_bytes()).map_err(io)?;
            out.flush().map_err(io)
        }
    }
}

fn cmd_gen(a: &GenArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = a.scenario.spec(a.cpr)?;
    let window = synthesize_window(&spec, RngStream::new(a.seed, a.stream))?;
    let mut text = window.to_json()?;
    text.push('\n');
    emit(out, a.out.as_deref(), &text)
}

/// Classifies a stored window and prints the decision as JSON.
pub fn cmd_classify(a: &ClassifyArgs, argv: &[String], out: &mut dyn Write) -> Result<(), CliError> {
    let text = fs::read_to_string(&a.input)
        .map_err(|e| bad_input(format!("cannot read {}: {e}", a.input.display())))?;
    let window = DataWindow::from_json(&text)?;
    let model = Model::from_number(a.model)?;
    let rule = match a.rule {
        RuleName::Aic => MosRule::aic(),
        RuleName::Bic => MosRule::bic(),
        RuleName::Gic => MosRule::gic(a.rho)?,
    };
    let rank = if a.rank.eq_ignore_ascii_case("auto") {
        RankMode::Auto
    } else {
        RankMode::Known(a.rank.parse().map_err(|_| bad_input(format!("rank must be an integer or 'auto', got '{}'", a.rank)))?)
    };
    let opts = ClassifyOptions { n_max: a.n_max, m_upper: a.m_upper };
    let outcome = classify(&window, model, &rule, rank, &opts)?;
    let scores: Vec<_> = outcome
        .scores
        .iter()
        .map(|s| {
            json!({
                "hypothesis": s.hypothesis.to_string(),
                "loglik": s.loglik,
                "param_count": s.param_count,
                "penalized": s.penalized,
                "kappa": s.kappa,
                "edges": s.edges,
            })
        })
        .collect();
    let doc = json!({
        "chosen": outcome.chosen.to_string(),
        "edges": outcome.edges,
        "r": outcome.r_used,
        "r_estimated": outcome.r_estimated,
        "rule": rule.to_string(),
        "scores": scores,
        "args": argv,
    });
    let mut text = serde_json::to_string_pretty(&doc).map_err(Error::from)?;
    text.push('\n');
    emit(out, None, &text)
}

fn build_plan(a: &SweepArgs, rank: RankPolicy, rules: Vec<MosRule>) -> Result<ExperimentPlan, Error> {
    let sweep = parse_cpr_grid(&a.cpr)?;
    let base = a.scenario.spec(sweep[0])?;
    let mut plan = ExperimentPlan::new(base, sweep, rules, a.trials, a.seed);
    plan.edge_mode = if a.random_edges { EdgeMode::RandomUniform } else { EdgeMode::Fixed };
    plan.rank_mode = rank;
    plan.n_max = a.n_max;
    plan.m_upper = a.m_upper;
    plan.validate()?;
    Ok(plan)
}

fn sweep_echo(a: &SweepArgs, plan: &ExperimentPlan) -> Vec<(&'static str, String)> {
    let mut e = scenario_echo(&a.scenario);
    e.extend([
        ("cpr_grid", plan.sweep.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")),
        ("rules", plan.rules.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(",")),
        ("trials", plan.trials.to_string()),
        ("seed", plan.master_seed.to_string()),
        ("edge_mode", format!("{:?}", plan.edge_mode)),
        ("rank_mode", format!("{:?}", plan.rank_mode)),
        ("n_max", plan.n_max.to_string()),
    ]);
    e
}

/// Runs a classification sweep and writes the CSV report.
pub fn cmd_sweep(a: &SweepArgs, argv: &[String], out: &mut dyn Write, rank_only: bool) -> Result<(), CliError> {
    let (rank, rules) = if rank_only {
        (RankPolicy::Auto, vec![MosRule::bic()])
    } else {
        (rank_policy(&a.rank)?, parse_rules(&a.rules)?)
    };
    let plan = build_plan(a, rank, rules)?;
    let report = run_experiment_with(&plan, &MosClassifier, a.jobs)?;
    let text = header(argv, &sweep_echo(a, &plan)) + &report.to_csv();
    if let Some(p) = &a.json {
        emit(out, Some(p), &report.to_json()?)?;
    }
    emit(out, a.out.as_deref(), &text)
}

fn cmd_convergence(a: &ConvergenceArgs, argv: &[String], out: &mut dyn Write) -> Result<(), CliError> {
    if a.scenario.model != 1 {
        return Err(bad_input("convergence studies apply to model 1"));
    }
    let sweep = parse_cpr_grid(&a.cpr)?;
    let mut plan = ExperimentPlan::new(a.scenario.spec(sweep[0])?, sweep, vec![MosRule::aic()], a.trials, a.seed);
    plan.n_max = a.n_max;
    plan.validate()?;
    let report = run_experiment_with(&plan, &MosClassifier, a.jobs)?;
    let mut echo = scenario_echo(&a.scenario);
    echo.extend([
        ("cpr_grid", plan.sweep.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")),
        ("trials", plan.trials.to_string()),
        ("seed", plan.master_seed.to_string()),
        ("n_max", plan.n_max.to_string()),
    ]);
    let mut text = header(argv, &echo);
    text.push_str("cpr_db,n,delta_psi,trials\n");
    for p in &report.points {
        for (i, d) in p.delta_psi.iter().enumerate() {
            text.push_str(&format!("{},{},{},{}\n", fmt_f64(p.cpr_db), i + 1, fmt_f64(*d), plan.trials));
        }
    }
    emit(out, a.out.as_deref(), &text)
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let config = match RunConfig::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let argv: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let result = match &config.command {
        Command::Gen(a) => cmd_gen(a, out),
        Command::Classify(a) => cmd_classify(a, &argv, out),
        Command::Sweep(a) => cmd_sweep(a, &argv, out, false),
        Command::Rank(a) => cmd_sweep(a, &argv, out, true),
        Command::Convergence(a) => cmd_convergence(a, &argv, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "clutterscope: {}", e.message);
            e.code
        }
    }
}
