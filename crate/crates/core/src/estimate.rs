//! Parameter estimators shared by the classifiers.
//!
//! Model 1 uses primary-only noise and eigenvalue estimates, a common
//! subspace estimate from unit-normalized snapshots, and a cyclic
//! coordinate-ascent fit of the descending power-ratio profile. Model 2
//! estimates are closed-form in the eigenvalues of per-segment Gram matrices.

use crate::error::{Error, Result};
use crate::numkit::{hermitian_eigenvalues, unitary_from_first_column, CMatrix, CVector, HermitianMatrix, UnitaryMatrix, C64};

/// Relative floor applied to noise-power estimates.
pub const SIGMA2_FLOOR_REL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PrimaryEstimates {
    pub sigma2: f64,
    /// Clutter eigenvalue estimates, non-increasing and non-negative.
    pub lambdas: Vec<f64>,
    /// Set when the trailing eigenvalue sum fell below the floor.
    pub degenerate: bool,
}

impl PrimaryEstimates {
    pub fn rank(&self) -> usize {
        self.lambdas.len()
    }

    pub fn no_clutter(&self) -> bool {
        self.lambdas.iter().all(|&l| l == 0.0)
    }
}

fn check_rank(n: usize, k: usize, r: usize) -> Result<()> {
    if r == 0 || r >= n {
        return Err(Error::invalid(format!("rank r = {r} must satisfy 1 <= r < N = {n}")));
    }
    if k <= r {
        return Err(Error::invalid(format!("need more than r = {r} snapshots, got {k}")));
    }
    Ok(())
}

fn floored_sigma2(trailing: f64, count: usize, n: usize, r: usize, trace: f64) -> (f64, bool) {
    let sigma2 = trailing / (count as f64 * (n - r) as f64);
    let floor = (SIGMA2_FLOOR_REL * trace / (count as f64 * n as f64)).max(f64::MIN_POSITIVE);
    if sigma2 < floor || !sigma2.is_finite() {
        (floor, true)
    } else {
        (sigma2, false)
    }
}

/// Noise power and clutter eigenvalues from the primary Gram matrix `Z_P Z_P†`.
pub fn primary_noise_and_eigs(zp: &CMatrix, r: usize) -> Result<PrimaryEstimates> {
    check_rank(zp.nrows(), zp.ncols(), r)?;
    let mu = hermitian_eigenvalues(&HermitianMatrix::gram(zp))?;
    Ok(primary_from_eigenvalues(&mu, zp.ncols(), r))
}

/// [`primary_noise_and_eigs`] from descending Gram eigenvalues.
pub fn primary_from_eigenvalues(mu: &[f64], kp: usize, r: usize) -> PrimaryEstimates {
    let n = mu.len();
    let trailing: f64 = mu[r..].iter().sum();
    let trace: f64 = mu.iter().sum();
    let (sigma2, degenerate) = floored_sigma2(trailing, kp, n, r, trace);
    let lambdas = mu[..r].iter().map(|m| (m / kp as f64 - sigma2).max(0.0)).collect();
    PrimaryEstimates { sigma2, lambdas, degenerate }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceEstimate {
    pub u_hat: UnitaryMatrix,
}

/// Estimate of the clutter eigenvector matrix from all `K_P + K_S` snapshots.
///
/// The first column is the normalized sum of the unit-normalized snapshots;
/// the remaining columns come from the deterministic Householder completion.
pub fn subspace_estimate(zp: &CMatrix, zs: &CMatrix) -> Result<SubspaceEstimate> {
    if zp.nrows() != zs.nrows() {
        return Err(Error::invalid("primary and secondary channel counts differ"));
    }
    let mut mu = CVector::zeros(zp.nrows());
    for col in zp.column_iter().chain(zs.column_iter()) {
        let norm = col.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::invalid("zero-norm or non-finite snapshot"));
        }
        mu += col / C64::new(norm, 0.0);
    }
    let len = mu.norm();
    if len < 1e-12 {
        return Err(Error::Degenerate(format!("normalized snapshots cancel (|mu| = {len:e})")));
    }
    let d = mu / C64::new(len, 0.0);
    Ok(SubspaceEstimate { u_hat: unitary_from_first_column(&d)? })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaEstimate {
    /// Power-ratio estimates, non-increasing and non-negative.
    pub gammas: Vec<f64>,
    pub iterations_used: usize,
    /// Objective before the first sweep, then after every sweep.
    pub objective_trace: Vec<f64>,
    /// Set when every clutter eigenvalue estimate is zero.
    pub no_clutter: bool,
}

/// Power-ratio objective `Σ_i [−K log c_i − s_i / c_i]`, `c_i = σ² + γ_i λ_i`.
pub fn gamma_objective(gammas: &[f64], s_diag: &[f64], est: &PrimaryEstimates, k_eff: f64) -> f64 {
    gammas
        .iter()
        .zip(s_diag)
        .zip(&est.lambdas)
        .map(|((g, s), l)| {
            let c = est.sigma2 + g * l;
            -k_eff * c.ln() - s / c
        })
        .sum()
}

fn gammas_from_tau(tau: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut g: Vec<f64> = tau
        .iter()
        .rev()
        .map(|t| {
            acc += t;
            acc
        })
        .collect();
    g.reverse();
    g
}

/// Cyclic coordinate ascent over the cumulative-sum parameterization
/// `γ_i = Σ_{j≥i} τ_j`, `τ_j ≥ 0`, starting from `γ ≡ 1` and running exactly
/// `n_max` sweeps over `h = 1..=r`.
pub fn cyclic_gamma_fit(s_diag: &[f64], est: &PrimaryEstimates, k_eff: usize, n_max: usize) -> Result<GammaEstimate> {
    let r = est.rank();
    if s_diag.len() != r {
        return Err(Error::invalid(format!("expected {r} projected powers, got {}", s_diag.len())));
    }
    if k_eff == 0 {
        return Err(Error::invalid("effective snapshot count must be positive"));
    }
    if s_diag.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(Error::invalid("projected powers must be finite and non-negative"));
    }
    let k = k_eff as f64;
    if est.no_clutter() {
        let gammas = vec![1.0; r];
        let psi = gamma_objective(&gammas, s_diag, est, k);
        return Ok(GammaEstimate {
            gammas,
            iterations_used: 0,
            objective_trace: vec![psi],
            no_clutter: true,
        });
    }
    let mut tau = vec![0.0; r];
    tau[r - 1] = 1.0;
    let mut trace = Vec::with_capacity(n_max + 1);
    trace.push(gamma_objective(&gammas_from_tau(&tau), s_diag, est, k));
    for _ in 0..n_max {
        for h in 1..=r {
            tau[h - 1] = coordinate_update(h, &tau, s_diag, est, k_eff);
        }
        trace.push(gamma_objective(&gammas_from_tau(&tau), s_diag, est, k));
    }
    Ok(GammaEstimate {
        gammas: gammas_from_tau(&tau),
        iterations_used: n_max,
        objective_trace: trace,
        no_clutter: false,
    })
}

/// One-dimensional objective in `τ_h` with the other coordinates fixed.
struct Coordinate {
    /// `(A_i, s_i, λ_i)` for `i ≤ h` with `λ_i > 0`.
    terms: Vec<(f64, f64, f64)>,
    sigma2: f64,
    k: f64,
}

impl Coordinate {
    fn value(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(a, s, l)| {
                let c = self.sigma2 + (a + t) * l;
                -self.k * c.ln() - s / c
            })
            .sum()
    }

    fn slope(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(a, s, l)| {
                let c = self.sigma2 + (a + t) * l;
                l * (s / c - self.k) / c
            })
            .sum()
    }

    /// Unconstrained maximizer of each term.
    fn term_peaks(&self) -> impl Iterator<Item = f64> + '_ {
        self.terms.iter().map(|&(a, s, l)| (s / self.k - self.sigma2) / l - a)
    }
}

const SCAN_PIECES: usize = 16;

/// Maximizer of the coordinate objective over `τ_h ≥ 0`.
///
/// Every term is unimodal in `τ_h` with peak `τ_i*`, so the maximizer lies in
/// `[max(0, min τ_i*), max(0, max τ_i*)]`. Each sub-interval between sorted
/// peaks is scanned for sign changes of the derivative, each root refined by
/// bisection, and the best of the roots, the bracket ends and the incoming
/// value is kept. The incoming value wins ties, so the objective never
/// decreases.
pub fn coordinate_update(h: usize, tau: &[f64], s_diag: &[f64], est: &PrimaryEstimates, k_eff: usize) -> f64 {
    let r = tau.len();
    assert!(h >= 1 && h <= r, "coordinate index {h} out of 1..={r}");
    let current = tau[h - 1];
    let terms: Vec<(f64, f64, f64)> = (0..h)
        .filter(|&i| est.lambdas[i] > 0.0)
        .map(|i| {
            let a: f64 = tau[i..].iter().sum::<f64>() - current;
            (a, s_diag[i], est.lambdas[i])
        })
        .collect();
    if terms.is_empty() {
        return current;
    }
    let f = Coordinate { terms, sigma2: est.sigma2, k: k_eff as f64 };

    let mut knots: Vec<f64> = f.term_peaks().map(|p| p.max(0.0)).collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();

    let mut candidates = vec![knots[0], knots[knots.len() - 1]];
    for w in knots.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let step = (hi - lo) / SCAN_PIECES as f64;
        let mut a = lo;
        let mut fa = f.slope(a);
        for j in 1..=SCAN_PIECES {
            let b = if j == SCAN_PIECES { hi } else { lo + step * j as f64 };
            let fb = f.slope(b);
            if fa > 0.0 && fb <= 0.0 {
                candidates.push(bisect_root(&f, a, b));
            }
            a = b;
            fa = fb;
        }
    }

    let mut best = current;
    let mut best_val = f.value(current);
    for t in candidates {
        let v = f.value(t);
        if v > best_val {
            best = t;
            best_val = v;
        }
    }
    best
}

/// Root of a decreasing crossing `slope(a) > 0 ≥ slope(b)`.
fn bisect_root(f: &Coordinate, mut a: f64, mut b: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if f.slope(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    if f.value(a) >= f.value(b) {
        a
    } else {
        b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model2SegmentEstimates {
    pub sigma2: f64,
    /// One non-increasing, non-negative `r`-vector per segment.
    pub lambda_sets: Vec<Vec<f64>>,
    pub degenerate: bool,
}

/// Descending eigenvalues of a segment Gram matrix with its snapshot count.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSpectrum {
    pub eigenvalues: Vec<f64>,
    pub count: usize,
}

impl SegmentSpectrum {
    pub fn from_gram(gram: &HermitianMatrix, count: usize) -> Result<Self> {
        Ok(Self { eigenvalues: hermitian_eigenvalues(gram)?, count })
    }
}

/// Closed-form estimates for segments that each carry their own clutter
/// eigenvalues and share the noise power.
pub fn model2_segment_mles(grams: &[(HermitianMatrix, usize)], r: usize) -> Result<Model2SegmentEstimates> {
    let spectra = grams
        .iter()
        .map(|(g, c)| SegmentSpectrum::from_gram(g, *c))
        .collect::<Result<Vec<_>>>()?;
    model2_from_spectra(&spectra, r)
}

/// [`model2_segment_mles`] from precomputed segment spectra.
pub fn model2_from_spectra(segments: &[SegmentSpectrum], r: usize) -> Result<Model2SegmentEstimates> {
    let first = segments.first().ok_or_else(|| Error::invalid("no segments"))?;
    let n = first.eigenvalues.len();
    if r == 0 || r >= n {
        return Err(Error::invalid(format!("rank r = {r} must satisfy 1 <= r < N = {n}")));
    }
    if segments.iter().any(|s| s.count == 0 || s.eigenvalues.len() != n) {
        return Err(Error::invalid("segments need a positive count and N eigenvalues"));
    }
    let total: usize = segments.iter().map(|s| s.count).sum();
    let trailing: f64 = segments.iter().map(|s| s.eigenvalues[r..].iter().sum::<f64>()).sum();
    let trace: f64 = segments.iter().map(|s| s.eigenvalues.iter().sum::<f64>()).sum();
    let (sigma2, degenerate) = floored_sigma2(trailing, total, n, r, trace);
    let lambda_sets = segments
        .iter()
        .map(|s| s.eigenvalues[..r].iter().map(|m| (m / s.count as f64 - sigma2).max(0.0)).collect())
        .collect();
    Ok(Model2SegmentEstimates { sigma2, lambda_sets, degenerate })
}

/// Gaussian log-likelihood of the segments at the given estimates, with each
/// segment covariance aligned to its own Gram eigenvectors.
pub fn model2_loglik(segments: &[SegmentSpectrum], est: &Model2SegmentEstimates) -> f64 {
    let n = segments[0].eigenvalues.len();
    let total: usize = segments.iter().map(|s| s.count).sum();
    let s2 = est.sigma2;
    let mut ll = -((n * total) as f64) * std::f64::consts::PI.ln();
    for (seg, lambdas) in segments.iter().zip(&est.lambda_sets) {
        let r = lambdas.len();
        let count = seg.count as f64;
        for (mu, l) in seg.eigenvalues.iter().zip(lambdas) {
            let c = s2 + l;
            ll -= count * c.ln() + mu / c;
        }
        ll -= count * (n - r) as f64 * s2.ln();
        ll -= seg.eigenvalues[r..].iter().sum::<f64>() / s2;
    }
    ll
}
