//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p clutterscope --test acceptance`. The process exits
//! non-zero when any criterion fails. Every experiment uses a fixed master
//! seed, so the numbers below are reproducible run to run.

use std::process::ExitCode;
use std::time::Instant;

use clutterscope::classify::{
    fit_window, ClassifyOptions, Model1Context, Model2Context, MosRule, RankMode,
};
use clutterscope::estimate::{
    coordinate_update, cyclic_gamma_fit, gamma_objective, model2_from_spectra, model2_loglik,
    PrimaryEstimates, SegmentSpectrum,
};
use clutterscope::montecarlo::{
    run_experiment, run_experiment_with, EdgeMode, ExperimentPlan, MetricReport, MosClassifier,
    RankPolicy,
};
use clutterscope::numkit::{
    hermitian_eigenvalues, sample_snapshots_with, unitary_from_first_column, CMatrix,
    HermitianMatrix, RngStream,
};
use clutterscope::scenario::{edge_ranges, synthesize_window, ClutterBasis, DataWindow, Model, ScenarioSpec};
use rand::Rng;

type Suite = fn() -> Result<String, String>;
type Criterion = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn plan(model: Model, h: usize, edges: Vec<usize>, cpr: Vec<f64>, rules: Vec<MosRule>, trials: usize, seed: u64) -> ExperimentPlan {
    ExperimentPlan::new(ScenarioSpec::reference(model, h).with_edges(edges), cpr, rules, trials, seed)
}

fn pcc_summary(report: &MetricReport) -> String {
    report
        .cells
        .iter()
        .map(|c| format!("{}@{}dB={:.3}±{:.3}", c.rule, c.cpr_db, c.pcc, c.ci_halfwidth))
        .collect::<Vec<_>>()
        .join(" ")
}

fn criterion_1() -> Outcome {
    let report = run_experiment(&plan(Model::One, 0, vec![], vec![0.0], MosRule::standard_set(), 200, 101)).unwrap();
    let pass = report.cells.iter().all(|c| c.pcc >= 0.99);
    outcome(pass, format!("H_I0 L=200, need Pcc >= 0.99 for every rule: {}", pcc_summary(&report)))
}

fn criterion_2() -> Outcome {
    let report = run_experiment(&plan(Model::Two, 0, vec![], vec![0.0], MosRule::standard_set(), 500, 102)).unwrap();
    let pass = report.cells.iter().all(|c| {
        if c.rule == "AIC" {
            (0.94..=1.0).contains(&c.pcc)
        } else {
            c.pcc >= 0.99
        }
    });
    outcome(pass, format!("H_II0 L=500, need AIC in [0.94, 1] and others >= 0.99: {}", pcc_summary(&report)))
}

fn criterion_3() -> Outcome {
    let report = run_experiment(&plan(Model::One, 1, vec![], vec![16.0], MosRule::standard_set(), 300, 103)).unwrap();
    let pass = report.cells.iter().all(|c| c.pcc >= 0.65);
    outcome(pass, format!("H_I1 CPR=16 dB L=300, need Pcc >= 0.65 for every rule: {}", pcc_summary(&report)))
}

fn criterion_4() -> Outcome {
    let rules = vec![MosRule::aic(), MosRule::gic(4.0).unwrap()];
    let k10 = run_experiment(&plan(Model::One, 2, vec![10], vec![10.0], rules.clone(), 300, 104)).unwrap();
    let k25 = run_experiment(&plan(Model::One, 2, vec![25], vec![10.0], rules, 300, 104)).unwrap();
    let aic = k10.cell(10.0, &MosRule::aic()).unwrap().pcc;
    let a25 = k25.cell(10.0, &MosRule::aic()).unwrap().pcc;
    let g25 = k25.cell(10.0, &MosRule::gic(4.0).unwrap()).unwrap().pcc;
    outcome(
        aic >= 0.65,
        format!(
            "H_I2 K=10 CPR=10 dB L=300, need AIC Pcc >= 0.65: AIC={aic:.3}; recorded for K=25: AIC={a25:.3} GIC4={g25:.3} (AIC >= GIC4: {})",
            a25 >= g25
        ),
    )
}

fn criterion_5() -> Outcome {
    let report = run_experiment(&plan(Model::Two, 1, vec![], vec![10.0], vec![MosRule::aic()], 300, 105)).unwrap();
    let pcc = report.cells[0].pcc;
    outcome(pcc >= 0.80, format!("H_II1 CPR=10 dB L=300, need AIC Pcc >= 0.80: AIC={pcc:.3}"))
}

fn criterion_6() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for (model, h, cprs) in [(Model::One, 0, vec![0.0]), (Model::Two, 1, vec![0.0, 10.0, 20.0])] {
        let mut p = plan(model, h, vec![], cprs, vec![MosRule::bic()], 300, 106);
        p.rank_mode = RankPolicy::Auto;
        let report = run_experiment(&p).unwrap();
        for pt in &report.points {
            let acc = pt.rank_accuracy.unwrap();
            pass &= acc >= 0.97;
            details.push(format!("{}@{}dB={acc:.3}", report.hypothesis_true, pt.cpr_db));
        }
    }
    outcome(pass, format!("BIC rank accuracy L=300, need >= 0.97: {}", details.join(" ")))
}

fn criterion_7() -> Outcome {
    let report = run_experiment(&plan(Model::One, 1, vec![], vec![10.0], vec![MosRule::aic()], 300, 107)).unwrap();
    let dpsi = &report.points[0].delta_psi;
    let d6 = dpsi[5];
    let shown: Vec<String> = dpsi.iter().map(|d| format!("{d:.2e}")).collect();
    outcome(d6 < 1e-4, format!("H_I1 CPR=10 dB L=300, need mean dPsi(6) < 1e-4: dPsi(1..6)=[{}]", shown.join(", ")))
}

fn criterion_8() -> Outcome {
    let mut pass = true;
    let mut details = Vec::new();
    for (h, edges, limits) in [(2, vec![10], vec![3.0]), (3, vec![4, 20], vec![2.0, 2.0])] {
        let mut p = plan(Model::One, h, edges, vec![20.0, 25.0], MosRule::standard_set(), 300, 108);
        p.edge_mode = EdgeMode::RandomUniform;
        let report = run_experiment(&p).unwrap();
        for c in &report.cells {
            let ok = c.rms_edges.as_ref().is_some_and(|v| v.iter().zip(&limits).all(|(x, l)| x <= l));
            pass &= ok;
            let rms = match &c.rms_edges {
                Some(v) => v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/"),
                None => "n/a".into(),
            };
            details.push(format!("H_I{h} {}@{}dB={rms} (n={})", c.rule, c.cpr_db, c.rms_trials));
        }
    }
    outcome(pass, format!("random edges L=300, need RMS_1 <= 3, RMS_2/RMS_3 <= 2: {}", details.join(" ")))
}

fn gammas_from_tau(tau: &[f64]) -> Vec<f64> {
    (0..tau.len()).map(|i| tau[i..].iter().sum()).collect()
}

fn prop_monotone() -> Result<String, String> {
    let mut rng = RngStream::new(901, 0).rng();
    for inst in 0..1000 {
        let r = rng.random_range(1..=5usize);
        let mut lambdas: Vec<f64> = (0..r).map(|_| 10f64.powf(rng.random_range(-1.0..4.0))).collect();
        lambdas.sort_by(|a, b| b.total_cmp(a));
        let est = PrimaryEstimates { sigma2: 10f64.powf(rng.random_range(-1.0..1.0)), lambdas, degenerate: false };
        let k = rng.random_range(1..40usize);
        let s: Vec<f64> = (0..r).map(|_| 10f64.powf(rng.random_range(-1.0..5.0))).collect();
        let mut tau: Vec<f64> = (0..r).map(|_| rng.random_range(0.0..3.0)).collect();
        let mut prev = gamma_objective(&gammas_from_tau(&tau), &s, &est, k as f64);
        for _ in 0..3 {
            for h in 1..=r {
                tau[h - 1] = coordinate_update(h, &tau, &s, &est, k);
                let now = gamma_objective(&gammas_from_tau(&tau), &s, &est, k as f64);
                if now < prev - 1e-12 * prev.abs().max(1.0) {
                    return Err(format!("instance {inst}: {now} < {prev}"));
                }
                prev = now;
            }
        }
    }
    Ok("1000 instances".into())
}

fn prop_r1_closed_form() -> Result<String, String> {
    let mut rng = RngStream::new(902, 0).rng();
    for inst in 0..1000 {
        let sigma2 = 10f64.powf(rng.random_range(-2.0..2.0));
        let lambda = 10f64.powf(rng.random_range(-1.0..4.0));
        let k = rng.random_range(1..64usize);
        let s = 10f64.powf(rng.random_range(-2.0..5.0)) * k as f64;
        let est = PrimaryEstimates { sigma2, lambdas: vec![lambda], degenerate: false };
        let got = cyclic_gamma_fit(&[s], &est, k, 6).unwrap().gammas[0];
        let want = ((s / k as f64 - sigma2) / lambda).max(0.0);
        if (got - want).abs() > 1e-10 * want.max(1.0) {
            return Err(format!("instance {inst}: {got} vs {want}"));
        }
    }
    Ok("1000 instances".into())
}

fn tiny_segment_ll(mu: &[f64], count: f64, sigma2: f64, lambda: f64) -> f64 {
    -count * (sigma2 + lambda).ln() - mu[0] / (sigma2 + lambda) - count * sigma2.ln() - mu[1] / sigma2
}

fn prop_tiny_grid_oracle() -> Result<String, String> {
    let mut checked = 0;
    let mut seed = 0;
    let mut worst: f64 = 0.0;
    while checked < 3 {
        seed += 1;
        let mut rng = RngStream::new(903, seed).rng();
        let spectra: Vec<SegmentSpectrum> = (0..2)
            .map(|_| {
                let mut z = sample_snapshots_with(&CMatrix::identity(2, 2), 3, &mut rng).unwrap();
                z.row_mut(0).scale_mut(4.0);
                SegmentSpectrum::from_gram(&HermitianMatrix::gram(&z), 3).unwrap()
            })
            .collect();
        let est = model2_from_spectra(&spectra, 1).unwrap();
        if est.lambda_sets.iter().any(|l| l[0] <= 0.0) {
            continue;
        }
        let scale = spectra.iter().map(|s| s.eigenvalues[0]).fold(0.0, f64::max);
        let grid: Vec<f64> = (0..2000).map(|i| scale * 1e-4 * 10f64.powf(6.0 * i as f64 / 1999.0)).collect();
        let mut best = (f64::NEG_INFINITY, 0.0, [0.0; 2]);
        for &s2 in &grid {
            let mut total = 0.0;
            let mut lams = [0.0; 2];
            for (j, seg) in spectra.iter().enumerate() {
                let (v, l) = grid
                    .iter()
                    .map(|&l| (tiny_segment_ll(&seg.eigenvalues, 3.0, s2, l), l))
                    .fold((f64::NEG_INFINITY, 0.0), |a, b| if b.0 > a.0 { b } else { a });
                total += v;
                lams[j] = l;
            }
            if total > best.0 {
                best = (total, s2, lams);
            }
        }
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
        worst = worst.max(rel(best.1, est.sigma2));
        for j in 0..2 {
            worst = worst.max(rel(best.2[j], est.lambda_sets[j][0]));
        }
        checked += 1;
    }
    if worst < 1e-2 {
        Ok(format!("max relative gap {worst:.1e}"))
    } else {
        Err(format!("max relative gap {worst:.1e}"))
    }
}

fn prop_nested() -> Result<String, String> {
    let mut rng = RngStream::new(904, 0).rng();
    let mut checked = 0;
    while checked < 500 {
        let n = rng.random_range(3..7usize);
        let r = rng.random_range(1..n);
        let counts = [rng.random_range(n..2 * n + 4), rng.random_range(n..2 * n + 4)];
        let grams: Vec<HermitianMatrix> = counts
            .iter()
            .map(|&c| {
                let mut z = sample_snapshots_with(&CMatrix::identity(n, n), c, &mut rng).unwrap();
                z.row_mut(0).scale_mut(10.0);
                HermitianMatrix::gram(&z)
            })
            .collect();
        let split: Vec<SegmentSpectrum> =
            grams.iter().zip(counts).map(|(g, c)| SegmentSpectrum::from_gram(g, c).unwrap()).collect();
        let merged = [SegmentSpectrum::from_gram(&grams[0].add(&grams[1]), counts[0] + counts[1]).unwrap()];
        let two = model2_from_spectra(&split, r).unwrap();
        let one = model2_from_spectra(&merged, r).unwrap();
        if two.lambda_sets.iter().chain(&one.lambda_sets).flatten().any(|&l| l == 0.0) {
            continue;
        }
        let (l2, l1) = (model2_loglik(&split, &two), model2_loglik(&merged, &one));
        if l2 < l1 - 1e-9 {
            return Err(format!("split {l2} < merged {l1}"));
        }
        checked += 1;
    }
    Ok("500 unclamped instances".into())
}

fn small_window(model: Model, h: usize, edges: Vec<usize>, seed: u64) -> DataWindow {
    let mut spec = ScenarioSpec::reference(model, h).with_edges(edges).with_cpr(8.0);
    spec.ks = 12;
    spec.basis = ClutterBasis { angles_deg: vec![-20.0, 10.0], ..ClutterBasis::default() };
    synthesize_window(&spec, RngStream::new(905, seed)).unwrap()
}

fn edge_grid(model: Model, h: usize, r: usize, ks: usize) -> Vec<Vec<usize>> {
    let ranges = edge_ranges(model, h, r, ks).unwrap();
    let mut grid = vec![vec![]];
    for (lo, hi) in ranges {
        grid = grid.into_iter().flat_map(|g| (lo..=hi).map(move |k| [g.clone(), vec![k]].concat())).collect();
    }
    grid
}

type Scored = (f64, Vec<usize>);

fn prop_grid_exhaustive() -> Result<String, String> {
    let mut cases = 0;
    for seed in 0..20 {
        for (model, h, edges) in [
            (Model::One, 2, vec![4]),
            (Model::One, 3, vec![3, 8]),
            (Model::Two, 2, vec![9]),
            (Model::Two, 3, vec![3, 8]),
            (Model::Two, 4, vec![5]),
        ] {
            let w = small_window(model, h, edges, seed);
            let (fit, rescan): (_, Vec<Scored>) = match model {
                Model::One => {
                    let ctx = Model1Context::new(&w, 2, 6).unwrap();
                    let all = edge_grid(model, h, 2, 12)
                        .into_iter()
                        .map(|e| {
                            let f = if h == 2 { ctx.h2_at(e[0]) } else { ctx.h3_at(e[0], e[1]) };
                            (f.unwrap().loglik, e)
                        })
                        .collect();
                    (ctx.best_fit(h).unwrap(), all)
                }
                Model::Two => {
                    let ctx = Model2Context::new(&w, 2).unwrap();
                    let all = edge_grid(model, h, 2, 12)
                        .into_iter()
                        .map(|e| {
                            let f = match h {
                                2 => ctx.h2_at(e[0]),
                                3 => ctx.h3_at(e[0], e[1]),
                                _ => ctx.h4_at(e[0]),
                            };
                            (f.unwrap().loglik, e)
                        })
                        .collect();
                    (ctx.best_fit(h).unwrap(), all)
                }
            };
            let best = rescan.iter().fold(&rescan[0], |a, b| if b.0 > a.0 { b } else { a });
            if fit.edges != best.1 || fit.loglik != best.0 {
                return Err(format!("{model:?} H{h} seed {seed}: {:?} vs {:?}", fit.edges, best.1));
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} windows at K_S=12"))
}

fn prop_unitary_invariance() -> Result<String, String> {
    let mut flips = 0;
    for t in 0..100u64 {
        let h = (t % 5) as usize;
        let edges = match h {
            2 => vec![10],
            3 => vec![6, 22],
            4 => vec![14],
            _ => vec![],
        };
        let spec = ScenarioSpec::reference(Model::Two, h).with_edges(edges).with_cpr(8.0);
        let w = synthesize_window(&spec, RngStream::new(906, t)).unwrap();
        let mut rng = RngStream::new(907, t).rng();
        let d = sample_snapshots_with(&CMatrix::identity(9, 9), 1, &mut rng).unwrap().column(0).normalize();
        let q = unitary_from_first_column(&d).unwrap().into_matrix();
        let rotated = DataWindow::new(&q * &w.zp, &q * &w.zs, None).unwrap();
        let opts = ClassifyOptions::default();
        let a = fit_window(&w, Model::Two, RankMode::Known(3), &opts).unwrap();
        let b = fit_window(&rotated, Model::Two, RankMode::Known(3), &opts).unwrap();
        for rule in MosRule::standard_set() {
            let (x, y) = (a.decide_rule(&rule), b.decide_rule(&rule));
            if x.chosen != y.chosen || x.edges != y.edges {
                flips += 1;
            }
        }
        // sanity: rotation left the Gram spectra unchanged
        let g1 = hermitian_eigenvalues(&HermitianMatrix::gram(&w.zp)).unwrap();
        let g2 = hermitian_eigenvalues(&HermitianMatrix::gram(&rotated.zp)).unwrap();
        if g1.iter().zip(&g2).any(|(x, y)| (x - y).abs() > 1e-9 * g1[0]) {
            return Err("rotation changed the primary spectrum".into());
        }
    }
    if flips == 0 {
        Ok("100 windows, 0 decision flips".into())
    } else {
        Err(format!("{flips} decision flips"))
    }
}

fn prop_determinism() -> Result<String, String> {
    let mut p = plan(Model::One, 3, vec![4, 20], vec![5.0, 15.0], MosRule::standard_set(), 24, 908);
    p.edge_mode = EdgeMode::RandomUniform;
    p.rank_mode = RankPolicy::Auto;
    let serial = run_experiment_with(&p, &MosClassifier, Some(1)).unwrap();
    let parallel = run_experiment_with(&p, &MosClassifier, Some(4)).unwrap();
    let again = run_experiment(&p).unwrap();
    if serial == parallel && serial == again && serial.to_csv() == again.to_csv() {
        Ok("serial, 4 workers and default pool agree bit for bit".into())
    } else {
        Err("reports differ".into())
    }
}

fn criterion_9() -> Outcome {
    let suites: [(&str, Suite); 7] = [
        ("coordinate-ascent monotonicity", prop_monotone),
        ("r=1 closed form", prop_r1_closed_form),
        ("tiny-instance grid oracle", prop_tiny_grid_oracle),
        ("nested loglik ordering", prop_nested),
        ("exhaustive edge grid", prop_grid_exhaustive),
        ("common-unitary invariance", prop_unitary_invariance),
        ("determinism and parallel equivalence", prop_determinism),
    ];
    let mut pass = true;
    let mut details = Vec::new();
    for (name, f) in suites {
        match f() {
            Ok(d) => details.push(format!("{name}: ok ({d})")),
            Err(d) => {
                pass = false;
                details.push(format!("{name}: FAILED ({d})"));
            }
        }
    }
    outcome(pass, details.join("; "))
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 9] = [
        ("homogeneous model 1", criterion_1),
        ("homogeneous model 2", criterion_2),
        ("H_I1 classification", criterion_3),
        ("H_I2 edge sensitivity", criterion_4),
        ("H_II1 classification", criterion_5),
        ("rank stage", criterion_6),
        ("cyclic fit convergence", criterion_7),
        ("edge RMS", criterion_8),
        ("property suites", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!o.pass);
        println!("criterion {} [{tag}] {name} ({:.1}s): {}", i + 1, start.elapsed().as_secs_f64(), o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
