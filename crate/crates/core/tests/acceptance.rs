//! The acceptance gate: twelve criteria, one printed PASS/FAIL line each.
//!
//! Heavy runs live under `target/acceptance/` and resume from their stage
//! artifacts, so only the first execution pays the full pipeline cost. Run
//! with `cargo test --test acceptance -- --nocapture` to see every line;
//! the same lines are persisted to `target/acceptance/acceptance_report.txt`.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mtopt::pipeline::{
    BaselineConfig, DatasetConfig, EvaluationConfig, FamilyChoice, IsresBudgetConfig,
    ObjectiveConfig, OptimizerConfig, RunConfig, SeedConfig, SurrogateConfig,
};
use mtopt::sim::ScenarioConfig;
use mtopt::space::AffineConstraint;
use mtopt::{
    augmented_lagrangian, build_space, closure_holm_oracle, decode, fixed_sequence_graph,
    fwer_estimate, holm_graph, local_refine, remove_hypothesis, run_pipeline, run_procedure,
    sample_pvalues, sample_uniform, train, ALConfig, Correlation, Dataset, FamilyConfig, Graph,
    NetworkSpec, OptProblem, RefineConfig, Report, Scenario, TrainConfig, WithGradient,
};

const ALPHA: f64 = 0.025;

// ---------------------------------------------------------------------------
// Harness plumbing
// ---------------------------------------------------------------------------

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn accept_root() -> PathBuf {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance");
    fs::create_dir_all(&root).expect("create acceptance root");
    root
}

/// Pipeline runs are cached by name so several criteria can share one.
struct DeskRuns {
    reports: HashMap<String, Result<Report, String>>,
}

impl DeskRuns {
    fn new() -> DeskRuns {
        DeskRuns { reports: HashMap::new() }
    }

    fn dir(name: &str) -> PathBuf {
        let dir = accept_root().join(name);
        fs::create_dir_all(&dir).expect("create run dir");
        // A crash in an earlier harness run can leave the lock behind;
        // nothing else touches these directories, so clear it.
        let _ = fs::remove_file(dir.join(".lock"));
        dir
    }

    fn report(&mut self, name: &str, cfg: &RunConfig) -> Result<Report, String> {
        if let Some(r) = self.reports.get(name) {
            return r.clone();
        }
        let out = run_pipeline(cfg, &Self::dir(name)).map_err(|e| format!("{name}: {e}"));
        self.reports.insert(name.to_string(), out.clone());
        out
    }
}

/// Desk-scale pipeline configuration: B = 2,000 graphs, n = 10^5 panel
/// rows, four optimizer starts, equal objective weights.
fn desk_config(powers: Vec<f64>, rho: f64, seed_base: u64) -> RunConfig {
    let m = powers.len();
    RunConfig {
        scenario: ScenarioConfig {
            m,
            marginal_powers: Some(powers),
            means: None,
            correlation: Correlation::Exchangeable(rho),
            alpha: ALPHA,
        },
        family: FamilyChoice::Named("fully_free".to_string()),
        objective: ObjectiveConfig { weights: vec![1.0 / m as f64; m], gate: None },
        dataset: DatasetConfig { graphs: 2_000, panel_rows: 100_000 },
        surrogate: SurrogateConfig::default(),
        optimizer: OptimizerConfig { starts: 4, ..Default::default() },
        baselines: BaselineConfig {
            isres: false,
            isres_budget: IsresBudgetConfig::default(),
            refine_only_starts: 0,
            brute_force: true,
        },
        evaluation: EvaluationConfig::default(),
        seeds: SeedConfig { base: seed_base },
    }
}

fn s1_config(rho: f64, seed_base: u64) -> RunConfig {
    desk_config(vec![0.8, 0.8, 0.8], rho, seed_base)
}

/// Random p-values with mass near zero, occasional exact zeros, and ties.
fn random_pvalues(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let mut p: Vec<f64> = (0..m)
        .map(|_| {
            let u: f64 = rng.random();
            match rng.random_range(0..4u8) {
                0 => u,
                1 => u * u * u,
                2 => u * 0.05,
                _ => {
                    if rng.random::<f64>() < 0.15 {
                        0.0
                    } else {
                        u * 0.01
                    }
                }
            }
        })
        .collect();
    if m >= 2 && rng.random::<f64>() < 0.2 {
        let i = rng.random_range(0..m);
        let j = rng.random_range(0..m);
        p[i] = p[j];
    }
    p
}

/// A random feasible graph: Dirichlet-style alphas scaled to a random
/// share of the budget, rows either strictly substochastic or normalized
/// to full mass.
fn random_graph(rng: &mut ChaCha8Rng, m: usize, alpha_total: f64) -> Graph {
    let draw = |rng: &mut ChaCha8Rng, k: usize| -> Vec<f64> {
        (0..k).map(|_| -f64::ln(1.0 - rng.random::<f64>())).collect()
    };
    let alphas_raw = draw(rng, m);
    let asum: f64 = alphas_raw.iter().sum();
    let ascale = rng.random::<f64>();
    let alphas: Vec<f64> =
        alphas_raw.iter().map(|v| v / asum * alpha_total * ascale).collect();
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = vec![0.0; m];
        if m > 1 {
            let raw = draw(rng, m - 1);
            let rsum: f64 = raw.iter().sum();
            let full_mass = rng.random::<f64>() < 0.5;
            let scale = if full_mass { 1.0 } else { rng.random::<f64>() };
            let mut k = 0;
            for (j, slot) in row.iter_mut().enumerate() {
                if j != i {
                    *slot = raw[k] / rsum * scale;
                    k += 1;
                }
            }
        }
        rows.push(row);
    }
    Graph::new(alphas, rows).expect("constructed graph is valid")
}

/// Explore every order of rejecting currently-rejectable hypotheses and
/// collect each terminal rejection set.
fn dfs_orders(
    g: &Graph,
    p: &[f64],
    active: &mut Vec<bool>,
    rejected: &mut BTreeSet<usize>,
    out: &mut BTreeSet<BTreeSet<usize>>,
) {
    let eligible: Vec<usize> =
        (0..g.m()).filter(|&j| active[j] && p[j] <= g.alphas()[j]).collect();
    if eligible.is_empty() {
        out.insert(rejected.clone());
        return;
    }
    for j in eligible {
        let next = remove_hypothesis(g, j).unwrap();
        active[j] = false;
        rejected.insert(j);
        dfs_orders(&next, p, active, rejected, out);
        rejected.remove(&j);
        active[j] = true;
    }
}

// ---------------------------------------------------------------------------
// Criteria 1-3: desk-scale value reproduction
// ---------------------------------------------------------------------------

/// Check one scenario family's held-out values against targets (fractions).
fn check_table_values(
    runs: &mut DeskRuns,
    cases: &[(&str, RunConfig, f64)],
    tol: f64,
) -> Result<String, String> {
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, cfg, target) in cases {
        let report = runs.report(name, cfg)?;
        let row = report
            .method("fnn_pipeline")
            .ok_or_else(|| format!("{name}: no fnn_pipeline row"))?;
        let diff = row.value_holdout - target;
        if diff.abs() > tol {
            ok = false;
        }
        parts.push(format!(
            "{name}: {:.2}% vs {:.1}% ({:+.2}pp)",
            100.0 * row.value_holdout,
            100.0 * target,
            100.0 * diff
        ));
    }
    let detail = format!("held-out values within ±{:.1}pp — {}", 100.0 * tol, parts.join(", "));
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_1(runs: &mut DeskRuns) -> Result<String, String> {
    let cases: Vec<(&str, RunConfig, f64)> = vec![
        ("s1_rho0", s1_config(0.0, 42), 0.750),
        ("s1_rho3", s1_config(0.3, 43), 0.741),
        ("s1_rho7", s1_config(0.7, 44), 0.729),
    ];
    check_table_values(runs, &cases, 0.010)
}

fn criterion_2(runs: &mut DeskRuns) -> Result<String, String> {
    let powers = vec![0.90, 0.90, 0.95];
    let cases: Vec<(&str, RunConfig, f64)> = vec![
        ("s2_rho0", desk_config(powers.clone(), 0.0, 52), 0.903),
        ("s2_rho3", desk_config(powers.clone(), 0.3, 53), 0.895),
        ("s2_rho7", desk_config(powers, 0.7, 54), 0.891),
    ];
    check_table_values(runs, &cases, 0.010)
}

fn criterion_3(runs: &mut DeskRuns) -> Result<String, String> {
    let cfg = desk_config(vec![0.80, 0.80, 0.90, 0.90, 0.95, 0.95], 0.9, 62);
    let report = runs.report("s4_rho9", &cfg)?;
    let row = report
        .method("fnn_pipeline")
        .ok_or_else(|| "s4_rho9: no fnn_pipeline row".to_string())?;
    let max = report
        .dataset_max
        .as_ref()
        .ok_or_else(|| "s4_rho9: no dataset max".to_string())?;
    let gap = row.value_train - max.value;
    let detail = format!(
        "m=6 rho=0.9: pipeline {:.2}% vs dataset max {:.2}% on the training panel (gap {:+.2}pp, need ≥ +1.0)",
        100.0 * row.value_train,
        100.0 * max.value,
        100.0 * gap
    );
    if gap >= 0.010 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// Criteria 4-7: procedure correctness at scale
// ---------------------------------------------------------------------------

fn criterion_4() -> Result<String, String> {
    let mut checked = 0usize;
    let mut mismatches = 0usize;
    for m in 2..=4 {
        let g = holm_graph(m, ALPHA);
        let mut r = rng(41_000 + m as u64);
        for _ in 0..10_000 {
            let p = random_pvalues(&mut r, m);
            let fast = run_procedure(&g, &p).map_err(|e| e.to_string())?;
            let oracle = closure_holm_oracle(&p, ALPHA).map_err(|e| e.to_string())?;
            checked += 1;
            if fast.rejected != oracle.rejected {
                mismatches += 1;
            }
        }
    }
    let detail =
        format!("Holm graph vs closed-testing oracle: {mismatches} mismatches in {checked} p-vectors (m = 2..4)");
    if mismatches == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_5() -> Result<String, String> {
    let mut checked = 0usize;
    let mut mismatches = 0usize;
    for m in 2..=6 {
        let g = fixed_sequence_graph(m, ALPHA);
        let mut r = rng(51_000 + m as u64);
        for _ in 0..10_000 {
            let p = random_pvalues(&mut r, m);
            // Direct loop: test in order at the full level, stopping at the
            // first failure; an exact zero is rejectable anywhere (0/0 := 0).
            let first_fail = (0..m).find(|&k| p[k] > ALPHA).unwrap_or(m);
            let direct: Vec<bool> = (0..m).map(|k| k < first_fail || p[k] == 0.0).collect();
            let got = run_procedure(&g, &p).map_err(|e| e.to_string())?;
            checked += 1;
            if got.rejected != direct {
                mismatches += 1;
            }
        }
    }
    let detail = format!(
        "fixed-sequence graph vs direct sequential loop: {mismatches} mismatches in {checked} p-vectors (m = 2..6)"
    );
    if mismatches == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_6() -> Result<String, String> {
    let m = 4;
    let space =
        build_space(&FamilyConfig::fully_free(m, ALPHA)).map_err(|e| e.to_string())?;
    let xs = sample_uniform(&space, 100, 4_242);
    let graphs: Vec<Graph> = xs
        .iter()
        .map(|x| decode(&space, x))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let n = 1_000_000usize;
    let bound = ALPHA + 3.0 * (ALPHA * (1.0 - ALPHA) / n as f64).sqrt();
    let mut worst: f64 = 0.0;
    let mut cases = 0usize;
    let mut violations = 0usize;
    for (k, rho) in [0.0, 0.5].into_iter().enumerate() {
        let null = Scenario::new(vec![0.0; m], Correlation::Exchangeable(rho), ALPHA)
            .map_err(|e| e.to_string())?;
        let panel = sample_pvalues(&null, n, 90_000 + k as u64);
        for g in &graphs {
            let fwer = fwer_estimate(g, &panel).map_err(|e| e.to_string())?;
            worst = worst.max(fwer);
            cases += 1;
            if fwer > bound {
                violations += 1;
            }
        }
    }
    let detail = format!(
        "{cases} (graph, correlation) cases on 10^6-row null panels: worst FWER {worst:.5} vs bound {bound:.5}, {violations} violations"
    );
    if violations == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_7() -> Result<String, String> {
    let mut instances = 0usize;
    let mut ambiguous = 0usize;
    let mut disagreements = 0usize;
    for m in 2..=4 {
        let mut r = rng(71_000 + m as u64);
        let per_m = if m == 2 { 334 } else { 333 };
        for _ in 0..per_m {
            let g = random_graph(&mut r, m, ALPHA);
            let p = random_pvalues(&mut r, m);
            let mut active = vec![true; m];
            let mut rejected = BTreeSet::new();
            let mut outcomes = BTreeSet::new();
            dfs_orders(&g, &p, &mut active, &mut rejected, &mut outcomes);
            instances += 1;
            if outcomes.len() != 1 {
                ambiguous += 1;
            }
            let library: BTreeSet<usize> = run_procedure(&g, &p)
                .map_err(|e| e.to_string())?
                .rejected
                .iter()
                .enumerate()
                .filter_map(|(i, &rj)| rj.then_some(i))
                .collect();
            if !outcomes.contains(&library) {
                disagreements += 1;
            }
        }
    }
    let detail = format!(
        "{instances} random (graph, p) instances, all rejection orders exhausted: {ambiguous} order-dependent, {disagreements} library disagreements"
    );
    if ambiguous == 0 && disagreements == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// Criterion 8: analytic input gradients
// ---------------------------------------------------------------------------

fn criterion_8() -> Result<String, String> {
    let archs: [&[usize]; 5] = [&[6], &[8, 4], &[5, 5], &[10], &[7, 3]];
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut nets = 0usize;
    let mut checks = 0usize;
    for i in 0..100u64 {
        let dim = 2 + (i as usize % 7); // 2..=8 inputs
        let spec = NetworkSpec {
            hidden: archs[i as usize % archs.len()].to_vec(),
            dropout: if i % 4 == 0 { 0.2 } else { 0.0 },
        };
        // A small smooth synthetic problem; the trained weights are
        // effectively random but well-scaled.
        let mut r = rng(80_000 + i);
        let w: Vec<f64> = (0..dim).map(|_| r.random::<f64>() * 4.0 - 2.0).collect();
        let b: f64 = r.random::<f64>() - 0.5;
        let mut data = Dataset::new(dim);
        for _ in 0..48 {
            let x: Vec<f64> = (0..dim).map(|_| r.random::<f64>()).collect();
            let z: f64 = x.iter().zip(&w).map(|(xi, wi)| xi * wi).sum::<f64>() + b;
            let y = 0.2 + 0.6 / (1.0 + (-z).exp());
            data.push(&x, y);
        }
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            rho: 0.9,
            delta: 1e-8,
            batch: 16,
            epochs: 30,
            seed: 80_000 + i,
        };
        let net = train(&data, &spec, &cfg).map_err(|e| e.to_string())?;
        nets += 1;
        for _ in 0..10 {
            let x: Vec<f64> = (0..dim).map(|_| r.random::<f64>()).collect();
            let analytic = net.input_gradient(&x);
            let mut numeric = vec![0.0; dim];
            for (k, nk) in numeric.iter_mut().enumerate() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                *nk = (net.forward(&xp) - net.forward(&xm)) / (2.0 * h);
            }
            let num_norm: f64 = numeric.iter().map(|v| v * v).sum::<f64>().sqrt();
            let diff_norm: f64 = analytic
                .iter()
                .zip(&numeric)
                .map(|(a, n)| (a - n) * (a - n))
                .sum::<f64>()
                .sqrt();
            let rel = diff_norm / num_norm.max(1e-10);
            worst = worst.max(rel);
            checks += 1;
        }
    }
    let detail = format!(
        "{nets} networks x 10 inputs ({checks} checks): worst relative error {worst:.2e} vs central differences (h = 1e-5, limit 1e-4)"
    );
    if worst <= 1e-4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// Criterion 9: surrogate fit quality and training determinism
// ---------------------------------------------------------------------------

fn criterion_9(runs: &mut DeskRuns) -> Result<String, String> {
    let cfg = s1_config(0.0, 42);
    let report = runs.report("s1_rho0", &cfg)?;
    let mse = report
        .train
        .validation_mse
        .ok_or_else(|| "s1_rho0: no validation split".to_string())?;
    if mse >= 5e-5 {
        return Err(format!("validation MSE {mse:.2e} not under 5e-5"));
    }
    // Retrain from the persisted dataset with the same split, structure,
    // and seed; the weights must come out bit-identical.
    let csv = fs::read_to_string(accept_root().join("s1_rho0/dataset.csv"))
        .map_err(|e| format!("read dataset.csv: {e}"))?;
    let data = Dataset::from_csv(&csv).map_err(|e| e.to_string())?;
    let n = data.len();
    let holdout = ((n as f64) * cfg.surrogate.holdout_fraction).round() as usize;
    let split = n - holdout.min(n.saturating_sub(2));
    let train_rows: Vec<usize> = (0..split).collect();
    let tc = TrainConfig {
        learning_rate: cfg.surrogate.learning_rate,
        rho: cfg.surrogate.rho,
        delta: cfg.surrogate.delta,
        batch: cfg.surrogate.batch,
        epochs: cfg.surrogate.final_epochs,
        seed: cfg.seeds.train(),
    };
    let net = train(&data.select(&train_rows), &report.train.chosen, &tc)
        .map_err(|e| e.to_string())?;
    let same = net.digest() == report.train.network_digest;
    let detail = format!(
        "validation MSE {mse:.2e} < 5e-5; retrain digest {} the stored network",
        if same { "matches" } else { "differs from" }
    );
    if same {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// Criterion 10: constrained-optimizer exactness on known optima
// ---------------------------------------------------------------------------

fn criterion_10() -> Result<String, String> {
    let mut worst: f64 = 0.0;
    let mut solved = 0usize;
    let cases = 20usize;
    for case in 0..cases {
        let mut r = rng(100_000 + case as u64);
        let d = 2 + case % 9; // 2..=10
        let a: Vec<f64> = (0..d).map(|_| 0.5 + 2.5 * r.random::<f64>()).collect();
        let c: Vec<f64> = (0..d).map(|_| 0.2 + 0.6 * r.random::<f64>()).collect();
        let csum: f64 = c.iter().sum();
        // Concave quadratic f(x) = -sum_k a_k (x_k - c_k)^2 over [0,1]^d
        // with one extra budget constraint sum_k x_k <= s. Half the cases
        // make it active; the active optimum follows from stationarity of
        // the Lagrangian on the budget plane.
        let active = case % 2 == 0;
        let (s, expected) = if active {
            let s_inv: f64 = a.iter().map(|ak| 1.0 / (2.0 * ak)).sum();
            let mut delta = 0.05 + 0.1 * r.random::<f64>();
            let expected = loop {
                let lambda = delta / s_inv;
                let xs: Vec<f64> =
                    c.iter().zip(&a).map(|(ck, ak)| ck - lambda / (2.0 * ak)).collect();
                if xs.iter().all(|&v| v >= 0.05) {
                    break xs;
                }
                delta *= 0.5;
            };
            (csum - delta, expected)
        } else {
            (csum + 0.5, c.clone())
        };
        let a_f = a.clone();
        let c_f = c.clone();
        let value = move |x: &[f64]| -> f64 {
            -x.iter()
                .zip(&a_f)
                .zip(&c_f)
                .map(|((xk, ak), ck)| ak * (xk - ck) * (xk - ck))
                .sum::<f64>()
        };
        let a_g = a.clone();
        let c_g = c.clone();
        let grad = move |x: &[f64]| -> Vec<f64> {
            x.iter()
                .zip(&a_g)
                .zip(&c_g)
                .map(|((xk, ak), ck)| -2.0 * ak * (xk - ck))
                .collect()
        };
        let objective = WithGradient(value, grad);
        let problem = OptProblem::from_bounds(&objective, vec![0.0; d], vec![1.0; d])
            .with_extra_constraints(vec![AffineConstraint {
                label: "budget".to_string(),
                coeffs: vec![1.0; d],
                offset: -s,
            }]);
        let starts: Vec<Vec<f64>> =
            (0..3).map(|_| (0..d).map(|_| r.random::<f64>()).collect()).collect();
        let al = augmented_lagrangian(&problem, &starts, &ALConfig::default())
            .map_err(|e| e.to_string())?;
        let refined = local_refine(&problem, &al.x, &RefineConfig::default())
            .map_err(|e| e.to_string())?;
        let err = refined
            .x
            .iter()
            .zip(&expected)
            .map(|(xk, ek)| (xk - ek).abs())
            .fold(0.0f64, f64::max);
        worst = worst.max(err);
        if err <= 1e-3 {
            solved += 1;
        }
    }
    let detail = format!(
        "{solved}/{cases} random affine-constrained concave quadratics (d ≤ 10) within 1e-3 per coordinate; worst error {worst:.2e}"
    );
    if solved == cases {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// Criterion 11: the hand-checked update formula
// ---------------------------------------------------------------------------

fn criterion_11() -> Result<String, String> {
    let g = Graph::new(
        vec![0.0125, 0.0, 0.0125, 0.0],
        vec![
            vec![0.0, 0.8, 0.2, 0.0],
            vec![0.0, 0.0, 0.6, 0.4],
            vec![0.2, 0.0, 0.0, 0.8],
            vec![0.6, 0.4, 0.0, 0.0],
        ],
    )
    .map_err(|e| e.to_string())?;
    let after = remove_hypothesis(&g, 0).map_err(|e| e.to_string())?;
    let want_alphas = [0.0, 0.01, 0.015, 0.0];
    let tol = 1e-12;
    let alpha_err = after
        .alphas()
        .iter()
        .zip(&want_alphas)
        .map(|(got, want)| (got - want).abs())
        .fold(0.0f64, f64::max);
    let t32_err = (after.t(2, 1) - 1.0 / 6.0).abs();
    let t34_err = (after.t(2, 3) - 5.0 / 6.0).abs();
    let removed_clear = after.alphas()[0] == 0.0
        && (0..4).all(|j| after.t(0, j) == 0.0)
        && (0..4).all(|i| after.t(i, 0) == 0.0);
    let worst = alpha_err.max(t32_err).max(t34_err);
    let detail = format!(
        "removing H1: alphas (0, 0.01, 0.015, 0), t_32 = 1/6, t_34 = 5/6; worst deviation {worst:.1e} (limit 1e-12), removed slots {}",
        if removed_clear { "cleared" } else { "NOT cleared" }
    );
    if worst <= tol && removed_clear {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// Criterion 12: timing ordering
// ---------------------------------------------------------------------------

fn timing_config() -> RunConfig {
    RunConfig {
        scenario: ScenarioConfig {
            m: 3,
            marginal_powers: Some(vec![0.80, 0.75, 0.70]),
            means: None,
            correlation: Correlation::Exchangeable(0.3),
            alpha: ALPHA,
        },
        family: FamilyChoice::Named("fully_free".to_string()),
        objective: ObjectiveConfig { weights: vec![1.0 / 3.0; 3], gate: None },
        dataset: DatasetConfig { graphs: 300, panel_rows: 20_000 },
        surrogate: SurrogateConfig {
            candidates: vec![NetworkSpec::new(vec![24, 24])],
            cv_folds: 3,
            cv_epochs: 300,
            final_epochs: 4_000,
            ..Default::default()
        },
        optimizer: OptimizerConfig {
            starts: 2,
            refine: RefineConfig { max_evals: 600, ..Default::default() },
            ..Default::default()
        },
        baselines: BaselineConfig {
            isres: true,
            isres_budget: IsresBudgetConfig::WallSecs(3.0),
            refine_only_starts: 1,
            brute_force: true,
        },
        evaluation: EvaluationConfig::default(),
        seeds: SeedConfig { base: 72 },
    }
}

fn criterion_12(runs: &mut DeskRuns) -> Result<String, String> {
    let cfg = timing_config();
    let report = runs.report("timing", &cfg)?;
    let fnn = report
        .method("fnn_pipeline")
        .ok_or_else(|| "timing: no fnn_pipeline row".to_string())?;
    let refine_only = report
        .method("refine_only")
        .ok_or_else(|| "timing: no refine_only row".to_string())?;
    let isres = report.method("isres").ok_or_else(|| "timing: no isres row".to_string())?;
    let budget = 3.0;
    let ordering = refine_only.elapsed_secs < fnn.elapsed_secs;
    let hit_budget = isres.elapsed_secs >= 0.9 * budget && isres.elapsed_secs <= 10.0 * budget;
    let detail = format!(
        "local refiner {:.2}s < full pipeline {:.2}s: {}; evolution strategy ran {:.2}s against a {:.1}s wall budget: {}",
        refine_only.elapsed_secs,
        fnn.elapsed_secs,
        if ordering { "yes" } else { "NO" },
        isres.elapsed_secs,
        budget,
        if hit_budget { "hit" } else { "MISSED" }
    );
    if ordering && hit_budget {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// The gate
// ---------------------------------------------------------------------------

#[test]
fn acceptance() {
    let mut runs = DeskRuns::new();
    let criteria: Vec<(usize, Result<String, String>)> = vec![
        (1, criterion_1(&mut runs)),
        (2, criterion_2(&mut runs)),
        (3, criterion_3(&mut runs)),
        (4, criterion_4()),
        (5, criterion_5()),
        (6, criterion_6()),
        (7, criterion_7()),
        (8, criterion_8()),
        (9, criterion_9(&mut runs)),
        (10, criterion_10()),
        (11, criterion_11()),
        (12, criterion_12(&mut runs)),
    ];
    let mut lines = String::new();
    let mut failures = Vec::new();
    for (id, outcome) in &criteria {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        let line = format!("criterion {id:02} {tag} — {detail}");
        println!("{line}");
        lines.push_str(&line);
        lines.push('\n');
        if outcome.is_err() {
            failures.push(*id);
        }
    }
    let _ = fs::write(accept_root().join("acceptance_report.txt"), &lines);
    assert!(
        failures.is_empty(),
        "acceptance criteria failed: {failures:?}\n{lines}"
    );
}
