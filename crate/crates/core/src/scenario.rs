//! Clutter covariances, per-hypothesis segment layouts and synthetic data windows.
//!
//! Secondary-bin indices are 1-based throughout this module, matching the
//! way edges are reported (`K = 10` means bins `1..=10` lie on one side).
//! The cells under test sit conceptually between bins `K_S/2` and `K_S/2 + 1`.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Open01};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::numkit::{
    covariance_factor, hermitian_eig, sample_snapshots_with, steering_vector, C64, CMatrix,
    EigenSystem, HermitianMatrix, RngStream,
};

/// Clutter covariance variation model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Model {
    /// Shared eigenvectors, per-direction power scaling between regions.
    One,
    /// Arbitrary covariance per region (same rank).
    Two,
}

impl Model {
    pub fn from_number(m: u8) -> Result<Self> {
        match m {
            1 => Ok(Model::One),
            2 => Ok(Model::Two),
            other => Err(Error::invalid(format!("model must be 1 or 2, got {other}"))),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Model::One => 1,
            Model::Two => 2,
        }
    }

    pub fn hypothesis_count(self) -> usize {
        match self {
            Model::One => 4,
            Model::Two => 5,
        }
    }

    /// Number of edge positions carried by a hypothesis.
    pub fn edge_arity(self, hypothesis: usize) -> Result<usize> {
        match (self, hypothesis) {
            (_, 0) | (_, 1) => Ok(0),
            (_, 2) => Ok(1),
            (_, 3) => Ok(2),
            (Model::Two, 4) => Ok(1),
            (m, h) => Err(Error::invalid(format!(
                "hypothesis index {h} out of range for model {}",
                m.number()
            ))),
        }
    }
}

impl Serialize for Model {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.number())
    }
}

impl<'de> Deserialize<'de> for Model {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = u8::deserialize(d)?;
        Model::from_number(m).map_err(serde::de::Error::custom)
    }
}

/// Hypothesis label, printed as `H_I0` … `H_II4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HypothesisId {
    pub model: Model,
    pub index: usize,
}

impl HypothesisId {
    pub fn new(model: Model, index: usize) -> Result<Self> {
        if index >= model.hypothesis_count() {
            return Err(Error::invalid(format!(
                "hypothesis index {index} out of range for model {}",
                model.number()
            )));
        }
        Ok(Self { model, index })
    }
}

impl fmt::Display for HypothesisId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let roman = match self.model {
            Model::One => "I",
            Model::Two => "II",
        };
        write!(f, "H_{roman}{}", self.index)
    }
}

/// Angular support and power of the primary-data clutter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClutterBasis {
    pub angles_deg: Vec<f64>,
    pub n: usize,
    pub cnr_db: f64,
    pub noise_power: f64,
}

impl ClutterBasis {
    pub fn validate(&self) -> Result<()> {
        let r = self.angles_deg.len();
        if self.n < 2 {
            return Err(Error::invalid(format!("need N >= 2 channels, got {}", self.n)));
        }
        if r == 0 || r >= self.n {
            return Err(Error::invalid(format!(
                "need 1 <= |angles| < N, got {r} angles for N = {}",
                self.n
            )));
        }
        for (i, a) in self.angles_deg.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::invalid("non-finite clutter angle"));
            }
            if self.angles_deg[..i].iter().any(|b| b == a) {
                return Err(Error::invalid(format!("duplicate clutter angle {a}")));
            }
        }
        if !(self.noise_power > 0.0) || !self.noise_power.is_finite() {
            return Err(Error::invalid("noise power must be positive"));
        }
        if !self.cnr_db.is_finite() {
            return Err(Error::invalid("CNR must be finite"));
        }
        Ok(())
    }

    pub fn rank(&self) -> usize {
        self.angles_deg.len()
    }

    /// Primary clutter power `σ_c² = σ²·10^(CNR/10)`.
    pub fn clutter_power(&self) -> f64 {
        self.noise_power * 10f64.powf(self.cnr_db / 10.0)
    }
}

impl Default for ClutterBasis {
    fn default() -> Self {
        Self {
            angles_deg: vec![-20.0, 0.0, 10.0],
            n: 9,
            cnr_db: 30.0,
            noise_power: 1.0,
        }
    }
}

/// Generative description of one hypothesis instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub model: Model,
    pub hypothesis: usize,
    pub kp: usize,
    pub ks: usize,
    /// Edge positions: `[K1]` for one-edge hypotheses, `[K2, K3]` for the
    /// two-edge hypothesis, empty otherwise.
    pub edges: Vec<usize>,
    pub cpr_db: f64,
    /// Model 1, two-edge hypothesis: `Δ₄ = α·Δ₃`.
    pub alpha: f64,
    /// Model 2, two-edge hypothesis: `σ²_{c,4} = β·σ²_{c,3}`.
    pub beta: f64,
    pub basis: ClutterBasis,
    /// Model 2 only: angle set for the non-primary regions. Defaults to the
    /// primary angles with scaled power.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alt_angles_deg: Option<Vec<f64>>,
}

impl ScenarioSpec {
    /// Defaults of the reference experiment: N = 9, K_P = 8, K_S = 32,
    /// CNR = 30 dB, angles {−20°, 0°, 10°}.
    pub fn reference(model: Model, hypothesis: usize) -> Self {
        Self {
            model,
            hypothesis,
            kp: 8,
            ks: 32,
            edges: Vec::new(),
            cpr_db: 0.0,
            alpha: 1.0,
            beta: 1.0,
            basis: ClutterBasis::default(),
            alt_angles_deg: None,
        }
    }

    pub fn with_edges(mut self, edges: Vec<usize>) -> Self {
        self.edges = edges;
        self
    }

    pub fn with_cpr(mut self, cpr_db: f64) -> Self {
        self.cpr_db = cpr_db;
        self
    }

    pub fn rank(&self) -> usize {
        self.basis.rank()
    }

    pub fn n(&self) -> usize {
        self.basis.n
    }

    pub fn hypothesis_id(&self) -> Result<HypothesisId> {
        HypothesisId::new(self.model, self.hypothesis)
    }

    pub fn validate(&self) -> Result<()> {
        self.basis.validate()?;
        let r = self.rank();
        let arity = self.model.edge_arity(self.hypothesis)?;
        if !self.ks.is_multiple_of(2) {
            return Err(Error::invalid(format!("K_S must be even, got {}", self.ks)));
        }
        if self.kp <= r || self.ks <= r {
            return Err(Error::invalid(format!(
                "need K_P > r and K_S > r (K_P = {}, K_S = {}, r = {r})",
                self.kp, self.ks
            )));
        }
        if !self.cpr_db.is_finite() {
            return Err(Error::invalid("CPR must be finite"));
        }
        if !(self.alpha > 0.0) || !(self.beta > 0.0) {
            return Err(Error::invalid("alpha and beta must be positive"));
        }
        if let Some(alt) = &self.alt_angles_deg {
            ClutterBasis { angles_deg: alt.clone(), ..self.basis.clone() }.validate()?;
            if alt.len() != r {
                return Err(Error::invalid("alternative angle set must keep the clutter rank"));
            }
        }
        if self.edges.len() != arity {
            return Err(Error::invalid(format!(
                "{} takes {arity} edge(s), got {}",
                self.hypothesis_id()?,
                self.edges.len()
            )));
        }
        let ranges = edge_ranges(self.model, self.hypothesis, r, self.ks)?;
        for (k, (lo, hi)) in self.edges.iter().zip(ranges) {
            if *k < lo || *k > hi {
                return Err(Error::invalid(format!(
                    "edge {k} outside admissible range {lo}..={hi} for {}",
                    self.hypothesis_id()?
                )));
            }
        }
        Ok(())
    }
}

/// Inclusive admissible ranges for each edge of a hypothesis.
pub fn edge_ranges(model: Model, hypothesis: usize, r: usize, ks: usize) -> Result<Vec<(usize, usize)>> {
    let half = ks / 2;
    Ok(match (model, hypothesis) {
        (_, 0) | (_, 1) => vec![],
        (_, 2) | (Model::Two, 4) => vec![(r, ks.saturating_sub(r))],
        (_, 3) => vec![(r, half), (half + 1, ks.saturating_sub(r))],
        (m, h) => {
            return Err(Error::invalid(format!(
                "hypothesis index {h} out of range for model {}",
                m.number()
            )))
        }
    })
}

/// Discrete-uniform edge positions over the admissible ranges.
pub fn random_edges<R: Rng + ?Sized>(
    model: Model,
    hypothesis: usize,
    r: usize,
    ks: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    edge_ranges(model, hypothesis, r, ks)?
        .into_iter()
        .map(|(lo, hi)| {
            if lo > hi {
                Err(Error::invalid(format!("empty edge range {lo}..={hi}")))
            } else {
                Ok(rng.random_range(lo..=hi))
            }
        })
        .collect()
}

/// Which covariance a run of secondary bins follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovarianceTag {
    Primary,
    Alt1,
    Alt2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    /// First bin, 1-based.
    pub start: usize,
    /// Last bin, inclusive.
    pub end: usize,
    pub tag: CovarianceTag,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentLayout {
    pub segments: Vec<Segment>,
}

impl SegmentLayout {
    fn new(raw: &[(usize, usize, CovarianceTag)]) -> Self {
        let segments = raw
            .iter()
            .filter(|(s, e, _)| s <= e)
            .map(|&(start, end, tag)| Segment { start, end, tag })
            .collect();
        Self { segments }
    }
}

/// Contiguous covariance segments of the secondary data under `spec`.
///
/// One-edge hypotheses put the primary covariance on the larger side of the
/// edge (the side next to the cells under test): bins `1..=K` when `K > K_S/2`,
/// bins `K+1..=K_S` otherwise. The arbitrary-variation one-edge hypothesis
/// (index 4) has no primary segment.
pub fn segment_layout(spec: &ScenarioSpec) -> Result<SegmentLayout> {
    spec.validate()?;
    use CovarianceTag::*;
    let ks = spec.ks;
    let layout = match (spec.model, spec.hypothesis) {
        (_, 0) => SegmentLayout::new(&[(1, ks, Primary)]),
        (_, 1) => SegmentLayout::new(&[(1, ks, Alt1)]),
        (_, 2) => {
            let k = spec.edges[0];
            if k > ks / 2 {
                SegmentLayout::new(&[(1, k, Primary), (k + 1, ks, Alt1)])
            } else {
                SegmentLayout::new(&[(1, k, Alt1), (k + 1, ks, Primary)])
            }
        }
        (_, 3) => {
            let (k2, k3) = (spec.edges[0], spec.edges[1]);
            SegmentLayout::new(&[(1, k2, Alt1), (k2 + 1, k3, Primary), (k3 + 1, ks, Alt2)])
        }
        (Model::Two, 4) => {
            let k = spec.edges[0];
            SegmentLayout::new(&[(1, k, Alt1), (k + 1, ks, Alt2)])
        }
        _ => unreachable!("validated above"),
    };
    Ok(layout)
}

/// Primary clutter covariance `M = σ_c² Σ v(θ)v(θ)†` and its eigensystem.
///
/// Eigenvalues beyond the clutter rank are set to exactly zero.
pub fn build_primary_clutter(basis: &ClutterBasis) -> Result<(HermitianMatrix, EigenSystem)> {
    basis.validate()?;
    clutter_from_angles(&basis.angles_deg, basis.n, basis.clutter_power())
}

fn clutter_from_angles(angles: &[f64], n: usize, power: f64) -> Result<(HermitianMatrix, EigenSystem)> {
    let mut acc = CMatrix::zeros(n, n);
    for &theta in angles {
        let v = steering_vector(theta, n)?;
        acc += &v * v.adjoint();
    }
    let m = HermitianMatrix::new(acc * C64::new(power, 0.0))?;
    let mut eig = hermitian_eig(&m)?;
    for v in eig.values.iter_mut().skip(angles.len()) {
        *v = 0.0;
    }
    Ok((m, eig))
}

/// Descending power-ratio profile `γ_i = 10^Δ ω_(i)` from sorted `U(0,1)` draws.
pub fn draw_gamma_profile<R: Rng + ?Sized>(delta: f64, r: usize, rng: &mut R) -> Vec<f64> {
    let scale = 10f64.powf(delta);
    let mut omega: Vec<f64> = (0..r).map(|_| Open01.sample(rng)).collect();
    omega.sort_by(|a, b| b.total_cmp(a));
    omega.into_iter().map(|w| scale * w).collect()
}

/// Primary (N × K_P) and secondary (N × K_S) snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct DataWindow {
    pub zp: CMatrix,
    pub zs: CMatrix,
    pub truth: Option<ScenarioSpec>,
}

impl DataWindow {
    pub fn new(zp: CMatrix, zs: CMatrix, truth: Option<ScenarioSpec>) -> Result<Self> {
        if zp.nrows() != zs.nrows() {
            return Err(Error::invalid(format!(
                "primary has {} channels, secondary has {}",
                zp.nrows(),
                zs.nrows()
            )));
        }
        if zp.nrows() < 2 || zp.ncols() == 0 || zs.ncols() == 0 {
            return Err(Error::invalid("window needs N >= 2 and non-empty primary/secondary data"));
        }
        if !zp.iter().chain(zs.iter()).all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::invalid("window has non-finite samples"));
        }
        Ok(Self { zp, zs, truth })
    }

    pub fn n(&self) -> usize {
        self.zp.nrows()
    }

    pub fn kp(&self) -> usize {
        self.zp.ncols()
    }

    pub fn ks(&self) -> usize {
        self.zs.ncols()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&WindowFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: WindowFile = serde_json::from_str(s)?;
        file.try_into()
    }
}

/// On-disk layout: snapshots are listed column by column, each as `N`
/// `[re, im]` pairs.
#[derive(Serialize, Deserialize)]
struct WindowFile {
    n: usize,
    kp: usize,
    ks: usize,
    zp: Vec<Vec<[f64; 2]>>,
    zs: Vec<Vec<[f64; 2]>>,
    truth: Option<ScenarioSpec>,
}

fn columns_of(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    m.column_iter().map(|c| c.iter().map(|z| [z.re, z.im]).collect()).collect()
}

fn matrix_from_columns(cols: &[Vec<[f64; 2]>], n: usize, k: usize, what: &str) -> Result<CMatrix> {
    if cols.len() != k {
        return Err(Error::invalid(format!("{what}: expected {k} snapshots, found {}", cols.len())));
    }
    let mut m = CMatrix::zeros(n, k);
    for (j, col) in cols.iter().enumerate() {
        if col.len() != n {
            return Err(Error::invalid(format!(
                "{what}: snapshot {j} has {} entries, expected {n}",
                col.len()
            )));
        }
        for (i, [re, im]) in col.iter().enumerate() {
            m[(i, j)] = C64::new(*re, *im);
        }
    }
    Ok(m)
}

impl From<&DataWindow> for WindowFile {
    fn from(w: &DataWindow) -> Self {
        Self {
            n: w.n(),
            kp: w.kp(),
            ks: w.ks(),
            zp: columns_of(&w.zp),
            zs: columns_of(&w.zs),
            truth: w.truth.clone(),
        }
    }
}

impl TryFrom<WindowFile> for DataWindow {
    type Error = Error;

    fn try_from(f: WindowFile) -> Result<Self> {
        let zp = matrix_from_columns(&f.zp, f.n, f.kp, "zp")?;
        let zs = matrix_from_columns(&f.zs, f.n, f.ks, "zs")?;
        DataWindow::new(zp, zs, f.truth)
    }
}

/// Factor of `σ²I + U diag(γ_i λ_i) U†` for the shared-eigenvector model.
fn scaled_factor(primary: &EigenSystem, gammas: &[f64], noise: f64) -> CMatrix {
    let mut eig = primary.clone();
    for (v, g) in eig.values.iter_mut().zip(gammas) {
        *v *= g;
    }
    covariance_factor(&eig, noise)
}

/// Draws one window under `spec` from the generator of `stream`.
pub fn synthesize_window(spec: &ScenarioSpec, stream: RngStream) -> Result<DataWindow> {
    synthesize_window_with(spec, &mut stream.rng())
}

/// [`synthesize_window`] drawing from an existing generator.
///
/// Draw order: power-ratio profiles of the non-primary regions (model 1),
/// then the primary snapshots, then the secondary segments in bin order.
pub fn synthesize_window_with<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<DataWindow> {
    let layout = segment_layout(spec)?;
    let (_, eig) = build_primary_clutter(&spec.basis)?;
    let noise = spec.basis.noise_power;
    let r = spec.rank();
    let n = spec.n();
    let primary_factor = covariance_factor(&eig, noise);

    let (alt1, alt2) = match spec.model {
        Model::One => {
            let delta = spec.cpr_db / 10.0;
            let delta2 = if spec.hypothesis == 3 { spec.alpha * delta } else { delta };
            let g1 = draw_gamma_profile(delta, r, rng);
            let g2 = if spec.hypothesis == 3 {
                draw_gamma_profile(delta2, r, rng)
            } else {
                g1.clone()
            };
            (scaled_factor(&eig, &g1, noise), scaled_factor(&eig, &g2, noise))
        }
        Model::Two => {
            let angles = spec.alt_angles_deg.as_deref().unwrap_or(&spec.basis.angles_deg);
            let p1 = spec.basis.clutter_power() * 10f64.powf(spec.cpr_db / 10.0);
            let p2 = match spec.hypothesis {
                3 => spec.beta * p1,
                4 => 1.5 * p1,
                _ => p1,
            };
            let (_, e1) = clutter_from_angles(angles, n, p1)?;
            let (_, e2) = clutter_from_angles(angles, n, p2)?;
            (covariance_factor(&e1, noise), covariance_factor(&e2, noise))
        }
    };

    let zp = sample_snapshots_with(&primary_factor, spec.kp, rng)?;
    let mut zs = CMatrix::zeros(n, spec.ks);
    for seg in &layout.segments {
        let factor = match seg.tag {
            CovarianceTag::Primary => &primary_factor,
            CovarianceTag::Alt1 => &alt1,
            CovarianceTag::Alt2 => &alt2,
        };
        let block = sample_snapshots_with(factor, seg.len(), rng)?;
        zs.columns_mut(seg.start - 1, seg.len()).copy_from(&block);
    }
    DataWindow::new(zp, zs, Some(spec.clone()))
}

/// Model 1 non-primary covariance `U Γ Λ Γ U†` for a given profile (test helper
/// and diagnostics).
pub fn model1_alt_clutter(primary: &EigenSystem, gammas: &[f64]) -> CMatrix {
    let mut eig = primary.clone();
    for (v, g) in eig.values.iter_mut().zip(gammas) {
        *v *= g;
    }
    eig.recompose()
}

/// Model 2 non-primary clutter `σ²_{c,l} Σ v(θ)v(θ)†` for a CPR in dB.
pub fn model2_alt_clutter(spec: &ScenarioSpec, cpr_db: f64) -> Result<HermitianMatrix> {
    let angles = spec.alt_angles_deg.as_deref().unwrap_or(&spec.basis.angles_deg);
    let power = spec.basis.clutter_power() * 10f64.powf(cpr_db / 10.0);
    Ok(clutter_from_angles(angles, spec.n(), power)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(layout: &SegmentLayout) -> Vec<(usize, usize, CovarianceTag)> {
        layout.segments.iter().map(|s| (s.start, s.end, s.tag)).collect()
    }

    #[test]
    fn single_dyad_clutter() {
        let basis = ClutterBasis { angles_deg: vec![0.0], n: 4, cnr_db: 0.0, noise_power: 1.0 };
        let (m, eig) = build_primary_clutter(&basis).unwrap();
        let v = steering_vector(0.0, 4).unwrap();
        assert!((m.as_matrix() - &v * v.adjoint()).norm() < 1e-14);
        assert!((eig.values[0] - 1.0).abs() < 1e-12);
        assert!(eig.values[1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn reference_clutter_trace() {
        let (m, eig) = build_primary_clutter(&ClutterBasis::default()).unwrap();
        assert!((m.trace() - 3000.0).abs() < 1e-9);
        let min = hermitian_eig(&m).unwrap().values.last().copied().unwrap();
        assert!(min >= -1e-10 * m.trace());
        assert_eq!(eig.values.iter().filter(|&&v| v > 0.0).count(), 3);
    }

    #[test]
    fn gamma_profile_sorted_and_bounded() {
        let mut rng = RngStream::new(1, 2).rng();
        for _ in 0..1000 {
            let g = draw_gamma_profile(1.3, 4, &mut rng);
            assert!(g.windows(2).all(|w| w[0] >= w[1]));
            assert!(g.iter().all(|&x| x > 0.0 && x < 10f64.powf(1.3)));
        }
    }

    #[test]
    fn gamma_max_order_statistic_mean() {
        // E[max of 3 uniforms] = 3/4
        let mut rng = RngStream::new(77, 0).rng();
        let draws = 100_000;
        let mean: f64 = (0..draws).map(|_| draw_gamma_profile(0.0, 3, &mut rng)[0]).sum::<f64>()
            / draws as f64;
        assert!((mean - 0.75).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn layout_one_edge_cut_side() {
        let spec = ScenarioSpec::reference(Model::One, 2).with_edges(vec![25]);
        assert_eq!(
            tags(&segment_layout(&spec).unwrap()),
            vec![(1, 25, CovarianceTag::Primary), (26, 32, CovarianceTag::Alt1)]
        );
        let spec = ScenarioSpec::reference(Model::One, 2).with_edges(vec![10]);
        assert_eq!(
            tags(&segment_layout(&spec).unwrap()),
            vec![(1, 10, CovarianceTag::Alt1), (11, 32, CovarianceTag::Primary)]
        );
    }

    #[test]
    fn layout_homogeneous_and_two_edge() {
        let spec = ScenarioSpec::reference(Model::One, 0);
        assert_eq!(tags(&segment_layout(&spec).unwrap()), vec![(1, 32, CovarianceTag::Primary)]);
        let spec = ScenarioSpec::reference(Model::Two, 3).with_edges(vec![4, 20]);
        assert_eq!(
            tags(&segment_layout(&spec).unwrap()),
            vec![
                (1, 4, CovarianceTag::Alt1),
                (5, 20, CovarianceTag::Primary),
                (21, 32, CovarianceTag::Alt2)
            ]
        );
        let spec = ScenarioSpec::reference(Model::Two, 4).with_edges(vec![10]);
        assert_eq!(
            tags(&segment_layout(&spec).unwrap()),
            vec![(1, 10, CovarianceTag::Alt1), (11, 32, CovarianceTag::Alt2)]
        );
    }

    #[test]
    fn layout_rejects_bad_edges() {
        for (model, hyp, edges) in [
            (Model::One, 2, vec![2]),
            (Model::One, 2, vec![30]),
            (Model::One, 3, vec![17, 20]),
            (Model::One, 3, vec![4, 16]),
            (Model::One, 3, vec![4, 30]),
            (Model::Two, 4, vec![1]),
            (Model::One, 4, vec![10]),
            (Model::One, 0, vec![10]),
        ] {
            let spec = ScenarioSpec::reference(model, hyp).with_edges(edges.clone());
            assert!(
                matches!(segment_layout(&spec), Err(Error::InvalidInput(_))),
                "{model:?} {hyp} {edges:?}"
            );
        }
    }

    #[test]
    fn layouts_partition_every_admissible_edge() {
        for (model, hyp) in [(Model::One, 2), (Model::One, 3), (Model::Two, 2), (Model::Two, 3), (Model::Two, 4)] {
            let ranges = edge_ranges(model, hyp, 3, 32).unwrap();
            let mut combos: Vec<Vec<usize>> = vec![vec![]];
            for (lo, hi) in ranges {
                combos = combos
                    .into_iter()
                    .flat_map(|c| (lo..=hi).map(move |k| [c.clone(), vec![k]].concat()))
                    .collect();
            }
            for edges in combos {
                let spec = ScenarioSpec::reference(model, hyp).with_edges(edges);
                let layout = segment_layout(&spec).unwrap();
                let mut next = 1;
                for s in &layout.segments {
                    assert_eq!(s.start, next);
                    assert!(s.end >= s.start);
                    next = s.end + 1;
                }
                assert_eq!(next, 33);
            }
        }
    }

    #[test]
    fn model1_alt_shares_eigenvectors() {
        let (_, eig) = build_primary_clutter(&ClutterBasis::default()).unwrap();
        let mut rng = RngStream::new(4, 4).rng();
        let g = draw_gamma_profile(1.0, 3, &mut rng);
        let alt = model1_alt_clutter(&eig, &g);
        let mut direct = CMatrix::zeros(9, 9);
        for i in 0..3 {
            let u = eig.vectors.column(i);
            direct += u * u.adjoint() * C64::new(g[i] * eig.values[i], 0.0);
        }
        assert!((alt - direct).norm() <= 1e-12 * 3000.0 * 10.0);
    }

    #[test]
    fn model2_cpr_bookkeeping() {
        let spec = ScenarioSpec::reference(Model::Two, 1);
        let (m, _) = build_primary_clutter(&spec.basis).unwrap();
        for cpr in [-5.0, 0.0, 7.3, 20.0] {
            let r = model2_alt_clutter(&spec, cpr).unwrap();
            assert!((10.0 * (r.trace() / m.trace()).log10() - cpr).abs() < 1e-9);
        }
    }

    #[test]
    fn two_edge_middle_uses_primary_covariance() {
        // Make the outer regions far stronger so the middle block is identifiable.
        let spec = ScenarioSpec::reference(Model::One, 3).with_edges(vec![4, 20]).with_cpr(25.0);
        let w = synthesize_window(&spec, RngStream::new(9, 1)).unwrap();
        let power = |j: usize| w.zs.column(j).norm_squared();
        let mid: f64 = (4..20).map(power).sum::<f64>() / 16.0;
        let outer: f64 = (0..4).chain(20..32).map(power).sum::<f64>() / 16.0;
        assert!(mid < outer);
        assert_eq!(w.zs.ncols(), 32);
        assert_eq!(w.zp.ncols(), 8);
    }

    #[test]
    fn homogeneous_sample_covariance_is_consistent() {
        let mut spec = ScenarioSpec::reference(Model::One, 0);
        spec.kp = 2000;
        spec.ks = 8000;
        let w = synthesize_window(&spec, RngStream::new(21, 0)).unwrap();
        let total = (w.kp() + w.ks()) as f64;
        let sample = (&w.zp * w.zp.adjoint() + &w.zs * w.zs.adjoint()) / C64::new(total, 0.0);
        let (m, _) = build_primary_clutter(&spec.basis).unwrap();
        let truth = m.as_matrix() + CMatrix::identity(9, 9);
        let rel = (sample - &truth).norm() / truth.norm();
        assert!(rel < 0.05, "rel {rel}");
    }

    #[test]
    fn synthesis_is_deterministic() {
        let spec = ScenarioSpec::reference(Model::Two, 4).with_edges(vec![12]).with_cpr(10.0);
        let a = synthesize_window(&spec, RngStream::new(5, 5)).unwrap();
        let b = synthesize_window(&spec, RngStream::new(5, 5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn json_round_trip_and_shape_errors() {
        let spec = ScenarioSpec::reference(Model::One, 2).with_edges(vec![10]).with_cpr(5.0);
        let w = synthesize_window(&spec, RngStream::new(1, 1)).unwrap();
        let text = w.to_json().unwrap();
        let back = DataWindow::from_json(&text).unwrap();
        assert_eq!(w, back);

        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["kp"] = serde_json::json!(7);
        assert!(DataWindow::from_json(&v.to_string()).is_err());
        assert!(DataWindow::from_json(&text[..text.len() / 2]).is_err());
    }

    #[test]
    fn random_edges_stay_in_range() {
        let mut rng = RngStream::new(8, 0).rng();
        for _ in 0..500 {
            let e = random_edges(Model::One, 3, 3, 32, &mut rng).unwrap();
            assert!((3..=16).contains(&e[0]) && (17..=29).contains(&e[1]));
            let e = random_edges(Model::Two, 4, 3, 32, &mut rng).unwrap();
            assert!((3..=29).contains(&e[0]));
        }
    }
}
