//! Compressed log-likelihoods, model-order-selection penalties and decisions.
//!
//! Fitting is separated from deciding: [`fit_window`] computes every
//! hypothesis' compressed log-likelihood once, and [`ModelFits::decide`]
//! applies a penalty factor. Monte Carlo runs reuse one fit for all rules.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{
    cyclic_gamma_fit, model2_from_spectra, model2_loglik, primary_noise_and_eigs, subspace_estimate,
    PrimaryEstimates, SegmentSpectrum,
};
use crate::numkit::{hermitian_eigenvalues, CMatrix, HermitianMatrix};
use crate::scenario::{edge_ranges, DataWindow, HypothesisId, Model};

/// Default number of cyclic sweeps in the power-ratio fits.
pub const DEFAULT_N_MAX: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MosKind {
    Aic,
    Gic,
    Bic,
}

/// Model-order-selection rule. `rho` is present exactly for GIC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MosRule {
    kind: MosKind,
    rho: Option<f64>,
}

impl MosRule {
    pub fn aic() -> Self {
        Self { kind: MosKind::Aic, rho: None }
    }

    pub fn bic() -> Self {
        Self { kind: MosKind::Bic, rho: None }
    }

    pub fn gic(rho: f64) -> Result<Self> {
        if !(rho >= 1.0) || !rho.is_finite() {
            return Err(Error::invalid(format!("GIC needs finite rho >= 1, got {rho}")));
        }
        Ok(Self { kind: MosKind::Gic, rho: Some(rho) })
    }

    pub fn kind(&self) -> MosKind {
        self.kind
    }

    pub fn rho(&self) -> Option<f64> {
        self.rho
    }

    /// AIC, GIC(ρ=2), GIC(ρ=4) and BIC.
    pub fn standard_set() -> Vec<Self> {
        vec![Self::aic(), Self { kind: MosKind::Gic, rho: Some(2.0) }, Self { kind: MosKind::Gic, rho: Some(4.0) }, Self::bic()]
    }
}

impl fmt::Display for MosRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.kind, self.rho) {
            (MosKind::Aic, _) => write!(f, "AIC"),
            (MosKind::Bic, _) => write!(f, "BIC"),
            (MosKind::Gic, Some(rho)) => write!(f, "GIC{rho}"),
            (MosKind::Gic, None) => write!(f, "GIC"),
        }
    }
}

/// Parses `aic`, `bic`, `gic<rho>` (e.g. `gic4`, `gic2.5`), case-insensitive.
impl FromStr for MosRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "aic" => Ok(Self::aic()),
            "bic" => Ok(Self::bic()),
            _ => {
                let rho = lower
                    .strip_prefix("gic")
                    .filter(|r| !r.is_empty())
                    .ok_or_else(|| Error::invalid(format!("unknown rule '{s}' (aic, bic, gic<rho>)")))?;
                let rho: f64 = rho.parse().map_err(|_| Error::invalid(format!("bad GIC rho in '{s}'")))?;
                Self::gic(rho)
            }
        }
    }
}

/// Penalty factor κ of a rule for an `N`-channel window with `K_P + K_S` snapshots.
pub fn penalty_factor(rule: &MosRule, n: usize, kp: usize, ks: usize) -> f64 {
    match rule.kind {
        MosKind::Aic => 2.0,
        MosKind::Gic => 1.0 + rule.rho.expect("GIC carries rho"),
        MosKind::Bic => ((2 * n * (kp + ks)) as f64).ln(),
    }
}

/// Real parameters of a rank-`r` Hermitian clutter component, `r(2N − r)`.
pub fn subspace_params(r: usize, n: usize) -> usize {
    r * (2 * n - r)
}

/// Number of free real parameters of a hypothesis.
pub fn param_count(model: Model, hypothesis: usize, r: usize, n: usize) -> Result<usize> {
    if r == 0 || r >= n {
        return Err(Error::invalid(format!("rank r = {r} must satisfy 1 <= r < N = {n}")));
    }
    let p = subspace_params(r, n);
    Ok(match (model, hypothesis) {
        (Model::One, 0) => p + 1,
        (Model::One, 1) => p + r + 1,
        (Model::One, 2) => p + r + 2,
        (Model::One, 3) => p + 2 * r + 3,
        (Model::Two, 0) => p + 1,
        (Model::Two, 1) => 2 * p + 1,
        (Model::Two, 2) => 2 * p + 2,
        (Model::Two, 3) => 3 * p + 3,
        (Model::Two, 4) => 3 * p + 2,
        (m, h) => {
            return Err(Error::invalid(format!(
                "hypothesis index {h} out of range for model {}",
                m.number()
            )))
        }
    })
}

/// Estimates behind one compressed log-likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Nuisance {
    Model1 {
        sigma2: f64,
        lambdas: Vec<f64>,
        /// One power-ratio profile per non-primary region.
        gammas: Vec<Vec<f64>>,
        /// Objective after every sweep of each power-ratio fit.
        objective_traces: Vec<Vec<f64>>,
    },
    Model2 {
        sigma2: f64,
        lambda_sets: Vec<Vec<f64>>,
    },
}

/// Rule-independent fit of one hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisFit {
    pub hypothesis: HypothesisId,
    pub loglik: f64,
    pub param_count: usize,
    pub edges: Vec<usize>,
    pub nuisance: Nuisance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisScore {
    pub hypothesis: HypothesisId,
    pub loglik: f64,
    pub param_count: usize,
    pub kappa: f64,
    /// `−2·loglik + κ·param_count`.
    pub penalized: f64,
    pub edges: Vec<usize>,
    pub nuisance: Nuisance,
}

impl HypothesisScore {
    pub fn from_fit(fit: &HypothesisFit, kappa: f64) -> Self {
        Self {
            hypothesis: fit.hypothesis,
            loglik: fit.loglik,
            param_count: fit.param_count,
            kappa,
            penalized: -2.0 * fit.loglik + kappa * fit.param_count as f64,
            edges: fit.edges.clone(),
            nuisance: fit.nuisance.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationOutcome {
    pub chosen: HypothesisId,
    pub edges: Vec<usize>,
    pub scores: Vec<HypothesisScore>,
    pub r_used: usize,
    pub r_estimated: bool,
}

impl ClassificationOutcome {
    pub fn chosen_score(&self) -> &HypothesisScore {
        self.scores.iter().find(|s| s.hypothesis == self.chosen).expect("chosen is scored")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RankMode {
    Known(usize),
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyOptions {
    pub n_max: usize,
    /// Largest rank tried by the rank stage; `None` picks the largest rank
    /// every hypothesis can accommodate.
    pub m_upper: Option<usize>,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self { n_max: DEFAULT_N_MAX, m_upper: None }
    }
}

/// All hypothesis fits of one model on one window.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFits {
    pub model: Model,
    pub n: usize,
    pub kp: usize,
    pub ks: usize,
    pub r_used: usize,
    pub r_estimated: bool,
    pub fits: Vec<HypothesisFit>,
}

impl ModelFits {
    pub fn decide_rule(&self, rule: &MosRule) -> ClassificationOutcome {
        self.decide(penalty_factor(rule, self.n, self.kp, self.ks))
    }

    /// Minimal penalized score; ties go to the earliest fit.
    pub fn decide(&self, kappa: f64) -> ClassificationOutcome {
        let scores: Vec<HypothesisScore> = self.fits.iter().map(|f| HypothesisScore::from_fit(f, kappa)).collect();
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if s.penalized < scores[best].penalized {
                best = i;
            }
        }
        ClassificationOutcome {
            chosen: scores[best].hypothesis,
            edges: scores[best].edges.clone(),
            r_used: self.r_used,
            r_estimated: self.r_estimated,
            scores,
        }
    }
}

/// Largest rank usable on a window: `r < N`, `r < K_P` and room for both
/// edge grids of the two-edge hypothesis (`r ≤ K_S/2 − 1`).
pub fn max_admissible_rank(n: usize, kp: usize, ks: usize) -> usize {
    (n - 1).min(kp.saturating_sub(1)).min((ks / 2).saturating_sub(1))
}

fn check_window_rank(window: &DataWindow, r: usize) -> Result<()> {
    let limit = max_admissible_rank(window.n(), window.kp(), window.ks());
    if r == 0 || r > limit {
        return Err(Error::invalid(format!(
            "rank {r} not usable with N = {}, K_P = {}, K_S = {} (need 1 <= r <= {limit})",
            window.n(),
            window.kp(),
            window.ks()
        )));
    }
    Ok(())
}

/// Fits every hypothesis of `model`, estimating the rank first in AUTO mode.
pub fn fit_window(window: &DataWindow, model: Model, rank: RankMode, opts: &ClassifyOptions) -> Result<ModelFits> {
    let (r, r_estimated) = match rank {
        RankMode::Known(r) => (r, false),
        RankMode::Auto => {
            let limit = max_admissible_rank(window.n(), window.kp(), window.ks());
            let m = opts.m_upper.unwrap_or(limit).min(limit);
            (estimate_rank(window, m, &MosRule::bic())?, true)
        }
    };
    check_window_rank(window, r)?;
    let fits = match model {
        Model::One => {
            let ctx = Model1Context::new(window, r, opts.n_max)?;
            (0..4).map(|h| ctx.best_fit(h)).collect::<Result<Vec<_>>>()?
        }
        Model::Two => {
            let ctx = Model2Context::new(window, r)?;
            (0..5).map(|h| ctx.best_fit(h)).collect::<Result<Vec<_>>>()?
        }
    };
    Ok(ModelFits { model, n: window.n(), kp: window.kp(), ks: window.ks(), r_used: r, r_estimated, fits })
}

/// Scores every hypothesis of `model` under `rule` and picks the minimum.
pub fn classify(
    window: &DataWindow,
    model: Model,
    rule: &MosRule,
    rank: RankMode,
    opts: &ClassifyOptions,
) -> Result<ClassificationOutcome> {
    Ok(fit_window(window, model, rank, opts)?.decide_rule(rule))
}

/// Model 1 hypothesis at its best edge(s).
pub fn compressed_ll_model1(window: &DataWindow, hypothesis: usize, r: usize) -> Result<HypothesisFit> {
    check_window_rank(window, r)?;
    Model1Context::new(window, r, DEFAULT_N_MAX)?.best_fit(hypothesis)
}

/// Model 2 hypothesis at its best edge(s).
pub fn compressed_ll_model2(window: &DataWindow, hypothesis: usize, r: usize) -> Result<HypothesisFit> {
    check_window_rank(window, r)?;
    Model2Context::new(window, r)?.best_fit(hypothesis)
}

/// Rank minimizing `−2·h_{II,0}(r) + κ·p(r)` over `r = 1..=m_upper`; ties
/// go to the smaller rank.
pub fn estimate_rank(window: &DataWindow, m_upper: usize, rule: &MosRule) -> Result<usize> {
    let n = window.n();
    if m_upper == 0 || m_upper >= n {
        return Err(Error::invalid(format!("M_upper = {m_upper} must satisfy 1 <= M_upper < N = {n}")));
    }
    let kappa = penalty_factor(rule, n, window.kp(), window.ks());
    let all = HermitianMatrix::gram(&window.zp).add(&HermitianMatrix::gram(&window.zs));
    let spectrum = [SegmentSpectrum::from_gram(&all, window.kp() + window.ks())?];
    let mut best = (f64::INFINITY, 1);
    for r in 1..=m_upper {
        let est = model2_from_spectra(&spectrum, r)?;
        let score = -2.0 * model2_loglik(&spectrum, &est) + kappa * subspace_params(r, n) as f64;
        if score < best.0 {
            best = (score, r);
        }
    }
    Ok(best.1)
}

/// Which secondary bins share the primary covariance under a one-edge
/// hypothesis: `1..=k` when `k > K_S/2`, else `k+1..=K_S`.
fn primary_side_is_leading(k: usize, ks: usize) -> bool {
    k > ks / 2
}

/// Shared statistics of the Model 1 fits.
///
/// Every snapshot is projected on the estimated subspace once; per-direction
/// powers of the secondary bins are kept as prefix sums so any segment's
/// projected-Gram diagonal costs `O(r)`.
pub struct Model1Context {
    n: usize,
    kp: usize,
    ks: usize,
    r: usize,
    n_max: usize,
    est: PrimaryEstimates,
    s_primary: Vec<f64>,
    /// `prefix[k][i]`: power of bins `1..=k` along estimated direction `i`.
    prefix: Vec<Vec<f64>>,
    /// Log-likelihood part shared by all hypotheses (noise subspace and the
    /// `π` constant).
    common: f64,
}

impl Model1Context {
    pub fn new(window: &DataWindow, r: usize, n_max: usize) -> Result<Self> {
        let u = subspace_estimate(&window.zp, &window.zs)?;
        Self::with_subspace(window, r, n_max, u.u_hat.as_matrix())
    }

    /// Same statistics with a caller-supplied unitary in place of the
    /// estimated subspace (diagnostics with a known clutter basis).
    pub fn with_subspace(window: &DataWindow, r: usize, n_max: usize, u: &CMatrix) -> Result<Self> {
        let (n, kp, ks) = (window.n(), window.kp(), window.ks());
        if u.nrows() != n || u.ncols() != n {
            return Err(Error::invalid("subspace basis must be N x N"));
        }
        let est = primary_noise_and_eigs(&window.zp, r)?;
        let lead = u.columns(0, r).adjoint();
        let powers = |z: &CMatrix| -> CMatrix { &lead * z };
        let pp = powers(&window.zp);
        let ps = powers(&window.zs);
        let s_primary: Vec<f64> = (0..r).map(|i| pp.row(i).norm_squared()).collect();
        let mut prefix = vec![vec![0.0; r]; ks + 1];
        for k in 0..ks {
            for i in 0..r {
                prefix[k + 1][i] = prefix[k][i] + ps[(i, k)].norm_sqr();
            }
        }
        let total_power = window.zp.norm_squared() + window.zs.norm_squared();
        let signal: f64 = s_primary.iter().sum::<f64>() + prefix[ks].iter().sum::<f64>();
        let noise_part = (total_power - signal).max(0.0);
        let k_all = (kp + ks) as f64;
        let common = -(n as f64) * k_all * PI.ln() - k_all * (n - r) as f64 * est.sigma2.ln() - noise_part / est.sigma2;
        Ok(Self { n, kp, ks, r, n_max, est, s_primary, prefix, common })
    }

    pub fn estimates(&self) -> &PrimaryEstimates {
        &self.est
    }

    /// Projected-Gram diagonal of secondary bins `start..=end` (1-based).
    fn segment(&self, start: usize, end: usize) -> Vec<f64> {
        (0..self.r).map(|i| self.prefix[end][i] - self.prefix[start - 1][i]).collect()
    }

    /// `Σ_i [−K log(σ² + γ_i λ_i) − s_i / (σ² + γ_i λ_i)]`.
    fn term(&self, count: usize, s: &[f64], gammas: Option<&[f64]>) -> f64 {
        let k = count as f64;
        (0..self.r)
            .map(|i| {
                let g = gammas.map_or(1.0, |g| g[i]);
                let c = self.est.sigma2 + g * self.est.lambdas[i];
                -k * c.ln() - s[i] / c
            })
            .sum()
    }

    fn nuisance(&self, gammas: Vec<Vec<f64>>, traces: Vec<Vec<f64>>) -> Nuisance {
        Nuisance::Model1 {
            sigma2: self.est.sigma2,
            lambdas: self.est.lambdas.clone(),
            gammas,
            objective_traces: traces,
        }
    }

    fn id(&self, h: usize) -> HypothesisId {
        HypothesisId { model: Model::One, index: h }
    }

    fn fit(&self, h: usize, loglik: f64, edges: Vec<usize>, nuisance: Nuisance) -> Result<HypothesisFit> {
        Ok(HypothesisFit {
            hypothesis: self.id(h),
            loglik,
            param_count: param_count(Model::One, h, self.r, self.n)?,
            edges,
            nuisance,
        })
    }

    pub fn h0(&self) -> Result<HypothesisFit> {
        let s: Vec<f64> = self.s_primary.iter().zip(&self.prefix[self.ks]).map(|(a, b)| a + b).collect();
        let ll = self.common + self.term(self.kp + self.ks, &s, None);
        self.fit(0, ll, vec![], self.nuisance(vec![], vec![]))
    }

    pub fn h1(&self) -> Result<HypothesisFit> {
        let s_sec = self.segment(1, self.ks);
        let g = cyclic_gamma_fit(&s_sec, &self.est, self.ks, self.n_max)?;
        let ll = self.common + self.term(self.kp, &self.s_primary, None) + self.term(self.ks, &s_sec, Some(&g.gammas));
        self.fit(1, ll, vec![], self.nuisance(vec![g.gammas], vec![g.objective_trace]))
    }

    /// One-edge hypothesis at edge `k`.
    pub fn h2_at(&self, k: usize) -> Result<HypothesisFit> {
        let ((ps, pe), (as_, ae)) = if primary_side_is_leading(k, self.ks) {
            ((1, k), (k + 1, self.ks))
        } else {
            ((k + 1, self.ks), (1, k))
        };
        let s_prim: Vec<f64> = self.segment(ps, pe).iter().zip(&self.s_primary).map(|(a, b)| a + b).collect();
        let n_alt = ae + 1 - as_;
        let s_alt = self.segment(as_, ae);
        let g = cyclic_gamma_fit(&s_alt, &self.est, n_alt, self.n_max)?;
        let ll = self.common
            + self.term(self.kp + pe + 1 - ps, &s_prim, None)
            + self.term(n_alt, &s_alt, Some(&g.gammas));
        self.fit(2, ll, vec![k], self.nuisance(vec![g.gammas], vec![g.objective_trace]))
    }

    /// Two-edge hypothesis at edges `(k2, k3)`.
    pub fn h3_at(&self, k2: usize, k3: usize) -> Result<HypothesisFit> {
        let s_mid: Vec<f64> = self.segment(k2 + 1, k3).iter().zip(&self.s_primary).map(|(a, b)| a + b).collect();
        let s_left = self.segment(1, k2);
        let s_right = self.segment(k3 + 1, self.ks);
        let gl = cyclic_gamma_fit(&s_left, &self.est, k2, self.n_max)?;
        let gr = cyclic_gamma_fit(&s_right, &self.est, self.ks - k3, self.n_max)?;
        let ll = self.common
            + self.term(self.kp + k3 - k2, &s_mid, None)
            + self.term(k2, &s_left, Some(&gl.gammas))
            + self.term(self.ks - k3, &s_right, Some(&gr.gammas));
        let nuisance = self.nuisance(vec![gl.gammas, gr.gammas], vec![gl.objective_trace, gr.objective_trace]);
        self.fit(3, ll, vec![k2, k3], nuisance)
    }

    pub fn best_fit(&self, h: usize) -> Result<HypothesisFit> {
        match h {
            0 => self.h0(),
            1 => self.h1(),
            2 | 3 => grid_max(Model::One, h, self.r, self.ks, |e| match e {
                [k] => self.h2_at(*k),
                [k2, k3] => self.h3_at(*k2, *k3),
                _ => unreachable!(),
            }),
            _ => Err(Error::invalid(format!("model 1 has no hypothesis {h}"))),
        }
    }
}

/// Best fit over the admissible edge grid; lexicographically smallest edges
/// win ties.
fn grid_max<F>(model: Model, h: usize, r: usize, ks: usize, mut eval: F) -> Result<HypothesisFit>
where
    F: FnMut(&[usize]) -> Result<HypothesisFit>,
{
    let ranges = edge_ranges(model, h, r, ks)?;
    let mut best: Option<HypothesisFit> = None;
    let mut consider = |edges: &[usize]| -> Result<()> {
        let fit = eval(edges)?;
        if best.as_ref().is_none_or(|b| fit.loglik > b.loglik) {
            best = Some(fit);
        }
        Ok(())
    };
    match ranges.as_slice() {
        [(lo, hi)] => {
            for k in *lo..=*hi {
                consider(&[k])?;
            }
        }
        [(lo2, hi2), (lo3, hi3)] => {
            for k2 in *lo2..=*hi2 {
                for k3 in *lo3..=*hi3 {
                    consider(&[k2, k3])?;
                }
            }
        }
        _ => unreachable!("edge hypotheses have one or two edges"),
    }
    best.ok_or_else(|| Error::invalid(format!("empty edge grid for K_S = {ks}, r = {r}")))
}

/// Shared statistics of the Model 2 fits: primary Gram and prefix Grams of
/// the secondary bins.
pub struct Model2Context {
    n: usize,
    kp: usize,
    ks: usize,
    r: usize,
    gram_p: HermitianMatrix,
    /// `prefix[k]`: Gram of bins `1..=k`.
    prefix: Vec<HermitianMatrix>,
}

impl Model2Context {
    pub fn new(window: &DataWindow, r: usize) -> Result<Self> {
        let (n, kp, ks) = (window.n(), window.kp(), window.ks());
        let mut prefix = Vec::with_capacity(ks + 1);
        let mut acc = CMatrix::zeros(n, n);
        prefix.push(HermitianMatrix::new(acc.clone())?);
        for col in window.zs.column_iter() {
            acc += col * col.adjoint();
            prefix.push(HermitianMatrix::new(acc.clone())?);
        }
        Ok(Self { n, kp, ks, r, gram_p: HermitianMatrix::gram(&window.zp), prefix })
    }

    /// Gram of secondary bins `start..=end` (1-based).
    fn segment(&self, start: usize, end: usize) -> HermitianMatrix {
        self.prefix[end].sub(&self.prefix[start - 1])
    }

    fn evaluate(&self, h: usize, segments: Vec<(HermitianMatrix, usize)>, edges: Vec<usize>) -> Result<HypothesisFit> {
        let spectra = segments
            .iter()
            .map(|(g, c)| Ok(SegmentSpectrum { eigenvalues: hermitian_eigenvalues(g)?, count: *c }))
            .collect::<Result<Vec<_>>>()?;
        let est = model2_from_spectra(&spectra, self.r)?;
        let loglik = model2_loglik(&spectra, &est);
        Ok(HypothesisFit {
            hypothesis: HypothesisId { model: Model::Two, index: h },
            loglik,
            param_count: param_count(Model::Two, h, self.r, self.n)?,
            edges,
            nuisance: Nuisance::Model2 { sigma2: est.sigma2, lambda_sets: est.lambda_sets },
        })
    }

    pub fn h0(&self) -> Result<HypothesisFit> {
        let all = self.gram_p.add(&self.prefix[self.ks]);
        self.evaluate(0, vec![(all, self.kp + self.ks)], vec![])
    }

    pub fn h1(&self) -> Result<HypothesisFit> {
        let segs = vec![(self.gram_p.clone(), self.kp), (self.prefix[self.ks].clone(), self.ks)];
        self.evaluate(1, segs, vec![])
    }

    pub fn h2_at(&self, k: usize) -> Result<HypothesisFit> {
        let ((ps, pe), (as_, ae)) = if primary_side_is_leading(k, self.ks) {
            ((1, k), (k + 1, self.ks))
        } else {
            ((k + 1, self.ks), (1, k))
        };
        let prim = self.gram_p.add(&self.segment(ps, pe));
        let segs = vec![(prim, self.kp + pe + 1 - ps), (self.segment(as_, ae), ae + 1 - as_)];
        self.evaluate(2, segs, vec![k])
    }

    pub fn h3_at(&self, k2: usize, k3: usize) -> Result<HypothesisFit> {
        let mid = self.gram_p.add(&self.segment(k2 + 1, k3));
        let segs = vec![
            (mid, self.kp + k3 - k2),
            (self.segment(1, k2), k2),
            (self.segment(k3 + 1, self.ks), self.ks - k3),
        ];
        self.evaluate(3, segs, vec![k2, k3])
    }

    pub fn h4_at(&self, k: usize) -> Result<HypothesisFit> {
        let segs = vec![
            (self.gram_p.clone(), self.kp),
            (self.segment(1, k), k),
            (self.segment(k + 1, self.ks), self.ks - k),
        ];
        self.evaluate(4, segs, vec![k])
    }

    pub fn best_fit(&self, h: usize) -> Result<HypothesisFit> {
        match h {
            0 => self.h0(),
            1 => self.h1(),
            2..=4 => grid_max(Model::Two, h, self.r, self.ks, |e| match (h, e) {
                (2, [k]) => self.h2_at(*k),
                (3, [k2, k3]) => self.h3_at(*k2, *k3),
                (4, [k]) => self.h4_at(*k),
                _ => unreachable!(),
            }),
            _ => Err(Error::invalid(format!("model 2 has no hypothesis {h}"))),
        }
    }
}
