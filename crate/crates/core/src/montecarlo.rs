//! Seeded Monte Carlo runner and performance metrics.
//!
//! Trial `t` of every sweep point draws from `RngStream(master_seed, t)`:
//! random edges first (when enabled), then the window. Each window is fitted
//! once and decided under every rule. Trials run on a rayon pool, are
//! collected in trial order and aggregated serially, so the report does not
//! depend on the worker count.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{fit_window, ClassifyOptions, MosRule, Nuisance, RankMode};
use crate::error::{Error, Result};
use crate::numkit::RngStream;
use crate::scenario::{edge_ranges, random_edges, synthesize_window_with, DataWindow, HypothesisId, ScenarioSpec};

/// z-quantile of the two-sided 95% interval.
const Z95: f64 = 1.959963984540054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeMode {
    /// Use the edges of the base scenario.
    Fixed,
    /// Draw every trial's edges uniformly over the admissible ranges.
    RandomUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RankPolicy {
    /// Classify with the true clutter rank.
    Known,
    /// Estimate the rank per window first.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub base: ScenarioSpec,
    /// CPR values in dB; each one is a full set of `trials` windows.
    pub sweep: Vec<f64>,
    pub rules: Vec<MosRule>,
    pub trials: usize,
    pub master_seed: u64,
    pub edge_mode: EdgeMode,
    pub rank_mode: RankPolicy,
    pub n_max: usize,
    pub m_upper: Option<usize>,
}

impl ExperimentPlan {
    pub fn new(base: ScenarioSpec, sweep: Vec<f64>, rules: Vec<MosRule>, trials: usize, master_seed: u64) -> Self {
        Self {
            base,
            sweep,
            rules,
            trials,
            master_seed,
            edge_mode: EdgeMode::Fixed,
            rank_mode: RankPolicy::Known,
            n_max: crate::classify::DEFAULT_N_MAX,
            m_upper: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::invalid("an experiment needs at least one trial"));
        }
        if self.sweep.is_empty() {
            return Err(Error::invalid("CPR sweep is empty"));
        }
        if self.rules.is_empty() {
            return Err(Error::invalid("no MOS rules given"));
        }
        if self.n_max < 1 {
            return Err(Error::invalid("n_max must be at least 1"));
        }
        for &cpr in &self.sweep {
            let mut spec = self.spec_at(cpr);
            if self.edge_mode == EdgeMode::RandomUniform {
                // edges are redrawn per trial; check the rest with admissible ones
                let ranges = edge_ranges(spec.model, spec.hypothesis, spec.rank(), spec.ks)?;
                spec.edges = ranges.iter().map(|r| r.0).collect();
            }
            spec.validate()?;
        }
        Ok(())
    }

    fn spec_at(&self, cpr: f64) -> ScenarioSpec {
        self.base.clone().with_cpr(cpr)
    }

    fn options(&self) -> ClassifyOptions {
        ClassifyOptions { n_max: self.n_max, m_upper: self.m_upper }
    }
}

/// Decision of one rule on one window.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleDecision {
    pub chosen: HypothesisId,
    pub edges: Vec<usize>,
}

/// Everything a trial contributes to the report.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDecisions {
    /// One decision per plan rule, in plan order.
    pub per_rule: Vec<RuleDecision>,
    pub r_used: usize,
    /// Objective trace of the whole-secondary power-ratio fit, when available.
    pub objective_trace: Option<Vec<f64>>,
}

/// Window classifier used by the runner. Implementations must be pure.
pub trait TrialClassifier: Sync {
    fn decide(&self, window: &DataWindow, plan: &ExperimentPlan) -> Result<TrialDecisions>;
}

/// The compressed-likelihood classifier of [`crate::classify`].
#[derive(Debug, Clone, Copy, Default)]
pub struct MosClassifier;

impl TrialClassifier for MosClassifier {
    fn decide(&self, window: &DataWindow, plan: &ExperimentPlan) -> Result<TrialDecisions> {
        let rank = match plan.rank_mode {
            RankPolicy::Known => RankMode::Known(plan.base.rank()),
            RankPolicy::Auto => RankMode::Auto,
        };
        let fits = fit_window(window, plan.base.model, rank, &plan.options())?;
        let per_rule = plan
            .rules
            .iter()
            .map(|rule| {
                let out = fits.decide_rule(rule);
                RuleDecision { chosen: out.chosen, edges: out.edges }
            })
            .collect();
        let objective_trace = fits.fits.get(1).and_then(|f| match &f.nuisance {
            Nuisance::Model1 { objective_traces, .. } => objective_traces.first().cloned(),
            Nuisance::Model2 { .. } => None,
        });
        Ok(TrialDecisions { per_rule, r_used: fits.r_used, objective_trace })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub cpr_db: f64,
    pub rule: String,
    pub pcc: f64,
    pub ci_halfwidth: f64,
    /// `confusion[true][predicted]`; only the row of the simulated truth is filled.
    pub confusion: Vec<Vec<u64>>,
    /// RMS error per true edge, over trials whose decision has the same
    /// number of edges as the truth. `None` when no trial qualifies.
    pub rms_edges: Option<Vec<f64>>,
    /// Trials that entered the RMS.
    pub rms_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub cpr_db: f64,
    /// Fraction of windows whose estimated rank equals the true rank (AUTO only).
    pub rank_accuracy: Option<f64>,
    /// Mean `ΔΨ(n)` for `n = 1..=n_max` (model 1 only).
    pub delta_psi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub hypothesis_true: HypothesisId,
    pub trials: usize,
    pub cells: Vec<CellReport>,
    pub points: Vec<SweepPoint>,
}

impl MetricReport {
    pub fn cell(&self, cpr_db: f64, rule: &MosRule) -> Option<&CellReport> {
        let name = rule.to_string();
        self.cells.iter().find(|c| c.cpr_db == cpr_db && c.rule == name)
    }

    pub fn point(&self, cpr_db: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.cpr_db == cpr_db)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per (CPR, rule). RMS columns follow the edges of the truth:
    /// `rms_k1` for one-edge hypotheses, `rms_k2`/`rms_k3` for two edges.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cpr_db,rule,hypothesis_true,pcc,ci_halfwidth,rms_k1,rms_k2,rms_k3,rank_acc,trials\n");
        for cell in &self.cells {
            let mut rms = [String::new(), String::new(), String::new()];
            if let Some(v) = &cell.rms_edges {
                let offset = if v.len() == 2 { 1 } else { 0 };
                for (i, x) in v.iter().enumerate() {
                    rms[i + offset] = fmt_f64(*x);
                }
            }
            let rank_acc = self
                .point(cell.cpr_db)
                .and_then(|p| p.rank_accuracy)
                .map(fmt_f64)
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                fmt_f64(cell.cpr_db),
                cell.rule,
                self.hypothesis_true,
                fmt_f64(cell.pcc),
                fmt_f64(cell.ci_halfwidth),
                rms[0],
                rms[1],
                rms[2],
                rank_acc,
                self.trials
            );
        }
        out
    }
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Runs `plan` with the compressed-likelihood classifier.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<MetricReport> {
    run_experiment_with(plan, &MosClassifier, None)
}

/// Runs `plan` with `classifier` on at most `jobs` workers (all cores when `None`).
pub fn run_experiment_with<C: TrialClassifier>(
    plan: &ExperimentPlan,
    classifier: &C,
    jobs: Option<usize>,
) -> Result<MetricReport> {
    plan.validate()?;
    let truth = plan.base.hypothesis_id()?;
    let work: Vec<(usize, u64)> = (0..plan.sweep.len())
        .flat_map(|p| (0..plan.trials as u64).map(move |t| (p, t)))
        .collect();
    let run = || -> Result<Vec<(Vec<usize>, TrialDecisions)>> {
        work.par_iter().map(|&(p, t)| run_trial(plan, classifier, plan.sweep[p], t)).collect()
    };
    let results = match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?
            .install(run)?,
        None => run()?,
    };

    let mut cells = Vec::new();
    let mut points = Vec::new();
    for (p, &cpr) in plan.sweep.iter().enumerate() {
        let trials = &results[p * plan.trials..(p + 1) * plan.trials];
        for (ri, rule) in plan.rules.iter().enumerate() {
            cells.push(aggregate_cell(cpr, rule, truth, trials, ri)?);
        }
        let rank_accuracy = (plan.rank_mode == RankPolicy::Auto).then(|| {
            trials.iter().filter(|(_, d)| d.r_used == plan.base.rank()).count() as f64 / plan.trials as f64
        });
        points.push(SweepPoint { cpr_db: cpr, rank_accuracy, delta_psi: mean_delta_psi(trials)? });
    }
    Ok(MetricReport { hypothesis_true: truth, trials: plan.trials, cells, points })
}

fn run_trial<C: TrialClassifier>(
    plan: &ExperimentPlan,
    classifier: &C,
    cpr: f64,
    t: u64,
) -> Result<(Vec<usize>, TrialDecisions)> {
    let mut rng = RngStream::new(plan.master_seed, t).rng();
    let mut spec = plan.spec_at(cpr);
    if plan.edge_mode == EdgeMode::RandomUniform {
        spec.edges = random_edges(spec.model, spec.hypothesis, spec.rank(), spec.ks, &mut rng)?;
    }
    let window = synthesize_window_with(&spec, &mut rng)?;
    let decisions = classifier.decide(&window, plan)?;
    if decisions.per_rule.len() != plan.rules.len() {
        return Err(Error::invalid("classifier returned the wrong number of decisions"));
    }
    Ok((spec.edges, decisions))
}

fn aggregate_cell(
    cpr: f64,
    rule: &MosRule,
    truth: HypothesisId,
    trials: &[(Vec<usize>, TrialDecisions)],
    ri: usize,
) -> Result<CellReport> {
    let h = truth.model.hypothesis_count();
    let mut confusion = vec![vec![0u64; h]; h];
    let mut records = Vec::new();
    for (edges, d) in trials {
        let dec = &d.per_rule[ri];
        confusion[truth.index][dec.chosen.index] += 1;
        if !edges.is_empty() && dec.edges.len() == edges.len() {
            records.push((edges.clone(), dec.edges.clone()));
        }
    }
    let l = trials.len();
    let pcc = confusion[truth.index][truth.index] as f64 / l as f64;
    let rms_edges = if records.is_empty() { None } else { Some(rms_edges(&records)?) };
    Ok(CellReport {
        cpr_db: cpr,
        rule: rule.to_string(),
        pcc,
        ci_halfwidth: wilson_halfwidth(pcc, l),
        confusion,
        rms_trials: records.len(),
        rms_edges,
    })
}

fn mean_delta_psi(trials: &[(Vec<usize>, TrialDecisions)]) -> Result<Vec<f64>> {
    let series = trials
        .iter()
        .filter_map(|(_, d)| d.objective_trace.as_ref())
        .filter(|t| t.len() >= 2)
        .map(|t| convergence_residual(t))
        .collect::<Result<Vec<_>>>()?;
    let Some(len) = series.iter().map(Vec::len).min() else {
        return Ok(Vec::new());
    };
    Ok((0..len).map(|n| series.iter().map(|s| s[n]).sum::<f64>() / series.len() as f64).collect())
}

/// Per-edge root-mean-square of integer edge errors.
pub fn rms_edges(records: &[(Vec<usize>, Vec<usize>)]) -> Result<Vec<f64>> {
    let arity = records.first().ok_or_else(|| Error::invalid("no edge records"))?.0.len();
    let mut sq = vec![0.0; arity];
    for (truth, est) in records {
        if truth.len() != arity || est.len() != arity {
            return Err(Error::invalid("edge records have inconsistent arity"));
        }
        for (i, (a, b)) in truth.iter().zip(est).enumerate() {
            let d = *a as f64 - *b as f64;
            sq[i] += d * d;
        }
    }
    Ok(sq.into_iter().map(|s| (s / records.len() as f64).sqrt()).collect())
}

/// `ΔΨ(n) = |(Ψ(n) − Ψ(n−1)) / Ψ(n)|` for `n = 1..len−1`; a zero
/// denominator gives `+∞`.
pub fn convergence_residual(trace: &[f64]) -> Result<Vec<f64>> {
    if trace.len() < 2 {
        return Err(Error::invalid("objective trace needs at least two values"));
    }
    Ok(trace
        .windows(2)
        .map(|w| if w[1] == 0.0 { f64::INFINITY } else { ((w[1] - w[0]) / w[1]).abs() })
        .collect())
}

/// Half-width of the 95% Wilson score interval for a proportion `p` over `n` trials.
pub fn wilson_halfwidth(p: f64, n: usize) -> f64 {
    let n = n as f64;
    let z2 = Z95 * Z95;
    Z95 / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt()
}
