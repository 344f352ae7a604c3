//! Complex linear-algebra and sampling kernels.
//!
//! Only what the classifiers need: Hermitian eigendecomposition with
//! descending eigenvalues, Gram matrices, uniform-linear-array steering
//! vectors, a deterministic unitary completion of a unit vector and
//! circular complex Gaussian snapshot generation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Relative tolerance used when accepting a stored matrix as Hermitian.
const HERMITIAN_TOL: f64 = 1e-10;

/// Complex Hermitian matrix whose stored entries satisfy `A[(i,j)] == conj(A[(j,i)])`
/// bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    /// Accepts a square, finite matrix that is Hermitian up to rounding and
    /// stores its exactly Hermitian part.
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::invalid(format!(
                "matrix is {}x{}, expected square",
                m.nrows(),
                m.ncols()
            )));
        }
        if !m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::invalid("matrix has non-finite entries"));
        }
        let scale = m.norm().max(f64::MIN_POSITIVE);
        let skew = (&m - m.adjoint()).norm();
        if skew > HERMITIAN_TOL * scale {
            return Err(Error::invalid(format!(
                "matrix is not Hermitian (skew part {skew:.3e})"
            )));
        }
        Ok(Self::hermitize(m))
    }

    /// `Z Z†` for a snapshot block `Z` (N × K).
    pub fn gram(z: &CMatrix) -> Self {
        Self::hermitize(z * z.adjoint())
    }

    pub fn identity(n: usize) -> Self {
        Self(CMatrix::identity(n, n))
    }

    fn hermitize(mut m: CMatrix) -> Self {
        let n = m.nrows();
        for i in 0..n {
            m[(i, i)] = C64::new(m[(i, i)].re, 0.0);
            for j in (i + 1)..n {
                let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
                m[(i, j)] = avg;
                m[(j, i)] = avg.conj();
            }
        }
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.0[(i, i)].re).sum()
    }

    /// Sum of two Hermitian matrices of equal size.
    pub fn add(&self, other: &Self) -> Self {
        Self::hermitize(&self.0 + &other.0)
    }

    /// Difference of two Hermitian matrices of equal size.
    pub fn sub(&self, other: &Self) -> Self {
        Self::hermitize(&self.0 - &other.0)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self(self.0.map(|z| z * c))
    }
}

/// Eigenvalues in non-increasing order with the matching unitary eigenvector matrix.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl EigenSystem {
    /// `V diag(values) V†`.
    pub fn recompose(&self) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &v) in self.values.iter().enumerate() {
            for i in 0..n {
                scaled[(i, j)] *= v;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

/// Square unitary matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix(CMatrix);

impl UnitaryMatrix {
    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn column(&self, j: usize) -> CVector {
        self.0.column(j).into_owned()
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// Identifies one reproducible random sequence. Two streams with equal
/// `(seed, stream_id)` produce identical draws; distinct `stream_id`s are
/// independent ChaCha streams under the same key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

fn check_finite(a: &CMatrix) -> Result<()> {
    if a.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid("non-finite matrix entry"))
    }
}

/// Full Hermitian eigendecomposition, eigenvalues sorted non-increasing.
///
/// Ties keep the order returned by the underlying solver.
pub fn hermitian_eig(a: &HermitianMatrix) -> Result<EigenSystem> {
    check_finite(a.as_matrix())?;
    let eig = SymmetricEigen::try_new(a.as_matrix().clone(), f64::EPSILON, 10_000)
        .ok_or(Error::NoConvergence)?;
    let n = a.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(EigenSystem { values, vectors })
}

/// Eigenvalues only, non-increasing.
pub fn hermitian_eigenvalues(a: &HermitianMatrix) -> Result<Vec<f64>> {
    check_finite(a.as_matrix())?;
    let mut values: Vec<f64> = a.as_matrix().symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(|x, y| y.total_cmp(x));
    Ok(values)
}

/// Uniform-linear-array steering vector with half-wavelength spacing:
/// entry `m` is `exp(jπ m sinθ)/√N`.
pub fn steering_vector(theta_deg: f64, n: usize) -> Result<CVector> {
    if n < 2 {
        return Err(Error::invalid(format!("steering vector needs N >= 2, got {n}")));
    }
    let phase = std::f64::consts::PI * theta_deg.to_radians().sin();
    let norm = 1.0 / (n as f64).sqrt();
    Ok(CVector::from_fn(n, |m, _| C64::from_polar(norm, phase * m as f64)))
}

/// Deterministic unitary `Q` with `Q e₁ = d`.
///
/// Built as a phase-adjusted Householder reflection: with `φ = d₀/|d₀|`
/// (or 1 when `d₀ = 0`) and `v = e₁ − φ̄ d`, `Q = φ (I − 2 v v†/‖v‖²)`.
/// When `d` is already a multiple of `e₁` the result is `φ I`, so `d = e₁`
/// gives the identity.
pub fn unitary_from_first_column(d: &CVector) -> Result<UnitaryMatrix> {
    let n = d.len();
    if n == 0 {
        return Err(Error::invalid("empty vector"));
    }
    if !d.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::invalid("non-finite vector entry"));
    }
    let norm = d.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::invalid(format!("expected unit vector, norm is {norm}")));
    }
    let d = d / C64::new(norm, 0.0);

    let d0 = d[0];
    let a0 = d0.norm();
    let phase = if a0 > 0.0 { d0 / a0 } else { C64::new(1.0, 0.0) };

    // tail = Σ_{j≥1} |d_j|²; v₀ = 1 − |d₀| computed as tail/(1 + |d₀|) to avoid cancellation.
    let tail: f64 = d.iter().skip(1).map(|z| z.norm_sqr()).sum();
    if tail == 0.0 {
        return Ok(UnitaryMatrix(CMatrix::identity(n, n) * phase));
    }
    let mut v = d.map(|z| -(phase.conj() * z));
    v[0] = C64::new(tail / (1.0 + a0), 0.0);
    let vnorm2 = v.norm_squared();

    let mut q = CMatrix::identity(n, n);
    let coef = 2.0 / vnorm2;
    for j in 0..n {
        let vj = v[j].conj();
        for i in 0..n {
            q[(i, j)] -= v[i] * vj * coef;
        }
    }
    Ok(UnitaryMatrix(q * phase))
}

/// Factor `F = V diag(√(floor + max(λᵢ, 0)))` so that `F F† = floor·I + A`
/// for `A = V diag(λ) V†`. Works for rank-deficient `A`.
pub fn covariance_factor(eig: &EigenSystem, floor: f64) -> CMatrix {
    let n = eig.values.len();
    let mut f = eig.vectors.clone();
    for (j, &l) in eig.values.iter().enumerate() {
        let s = (floor + l.max(0.0)).sqrt();
        for i in 0..n {
            f[(i, j)] *= s;
        }
    }
    f
}

/// Draws `count` i.i.d. snapshots `F x` with `x ~ CN(0, I)`.
///
/// Each snapshot consumes `2N` standard normals from `rng` (real then
/// imaginary part per entry, scaled by `1/√2`).
pub fn sample_snapshots_with<R: rand::Rng + ?Sized>(
    cov_factor: &CMatrix,
    count: usize,
    rng: &mut R,
) -> Result<CMatrix> {
    if count < 1 {
        return Err(Error::invalid("snapshot count must be at least 1"));
    }
    let n = cov_factor.ncols();
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut x = CMatrix::zeros(n, count);
    for k in 0..count {
        for i in 0..n {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            x[(i, k)] = C64::new(re * scale, im * scale);
        }
    }
    Ok(cov_factor * x)
}

/// [`sample_snapshots_with`] on a fresh generator for `stream`.
pub fn sample_snapshots(cov_factor: &CMatrix, count: usize, stream: RngStream) -> Result<CMatrix> {
    sample_snapshots_with(cov_factor, count, &mut stream.rng())
}
