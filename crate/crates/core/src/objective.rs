//! Decision matrices and the weighted empirical objective.
//!
//! The target being optimized is the expected weighted number of
//! rejections, `sum_i v_i E[D_i]`, estimated on a p-value panel as the
//! weighted average of per-hypothesis rejection rates. The gated variant
//! counts a rejection only when the designated gate hypothesis is also
//! rejected (the gate's own weight must be zero).
//!
//! All estimators reduce integer counts first and divide once at the end,
//! in fixed index order, so values are bit-identical no matter how rows are
//! partitioned across worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{validate_graph, Graph};
use crate::procedure::ProcedureRunner;
use crate::sim::PValuePanel;

/// Tolerance for weight-sum and gate-weight validation.
const WEIGHT_TOL: f64 = 1e-12;

/// Nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;
    fn try_from(w: Vec<f64>) -> Result<WeightVector> {
        WeightVector::new(w)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Vec<f64> {
        w.0
    }
}

impl WeightVector {
    /// Validate: nonempty, nonnegative, sum within 1e-12 of one.
    pub fn new(weights: Vec<f64>) -> Result<WeightVector> {
        if weights.is_empty() {
            return Err(Error::config("weight vector is empty"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::config(
                "weights must be finite and nonnegative",
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::config(format!(
                "weights sum to {sum}, expected 1 within {WEIGHT_TOL:e}"
            )));
        }
        Ok(WeightVector(weights))
    }

    /// Equal weights `1/m`.
    pub fn equal(m: usize) -> Result<WeightVector> {
        if m == 0 {
            return Err(Error::config("weight vector is empty"));
        }
        WeightVector::new(vec![1.0 / m as f64; m])
    }

    /// The weights.
    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    /// Number of hypotheses covered.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// True when the vector is empty (never, post-validation).
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// What to estimate: plain weighted rejections, or rejections gated on one
/// hypothesis also being rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    weights: WeightVector,
    gate: Option<usize>,
}

impl ObjectiveSpec {
    /// Plain weighted objective.
    pub fn plain(weights: WeightVector) -> ObjectiveSpec {
        ObjectiveSpec { weights, gate: None }
    }

    /// Gated objective: hypothesis `gate` (0-indexed) must itself be
    /// rejected for any other rejection to count, and must carry zero
    /// weight.
    pub fn gated(weights: WeightVector, gate: usize) -> Result<ObjectiveSpec> {
        if gate >= weights.len() {
            return Err(Error::config(format!(
                "gate index {gate} out of range for {} hypotheses",
                weights.len()
            )));
        }
        if weights.weights()[gate].abs() > WEIGHT_TOL {
            return Err(Error::config(format!(
                "gate hypothesis {gate} must have zero weight, has {}",
                weights.weights()[gate]
            )));
        }
        Ok(ObjectiveSpec { weights, gate: Some(gate) })
    }

    /// The weight vector.
    pub fn weights(&self) -> &WeightVector {
        &self.weights
    }

    /// The gate index, if gated.
    pub fn gate(&self) -> Option<usize> {
        self.gate
    }

    /// `"plain"` or `"gated"`.
    pub fn kind(&self) -> &'static str {
        if self.gate.is_some() {
            "gated"
        } else {
            "plain"
        }
    }

    /// Number of hypotheses covered.
    pub fn m(&self) -> usize {
        self.weights.len()
    }
}

/// Decisions for every panel row: `n x m`, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionMatrix {
    n: usize,
    m: usize,
    data: Vec<bool>,
}

impl DecisionMatrix {
    /// Number of rows (replicates).
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of hypotheses.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Decisions for replicate `i`.
    pub fn row(&self, i: usize) -> &[bool] {
        &self.data[i * self.m..(i + 1) * self.m]
    }
}

fn check_graph_for_panel(g: &Graph, panel: &PValuePanel) -> Result<()> {
    if g.m() != panel.m() {
        return Err(Error::config(format!(
            "graph has {} hypotheses, panel has {}",
            g.m(),
            panel.m()
        )));
    }
    let report = validate_graph(g, f64::INFINITY);
    if !report.feasible {
        return Err(Error::infeasible(format!(
            "infeasible graph: {:?}",
            report.violations
        )));
    }
    Ok(())
}

/// Run the procedure on every panel row. Parallel over row blocks; the
/// output is identical for any worker count.
pub fn decide_all(g: &Graph, panel: &PValuePanel) -> Result<DecisionMatrix> {
    check_graph_for_panel(g, panel)?;
    let m = g.m();
    let n = panel.n();
    let mut data = vec![false; n * m];
    data.par_chunks_mut(1024 * m)
        .zip(panel.values().par_chunks(1024 * m))
        .for_each(|(out_chunk, p_chunk)| {
            let mut runner = ProcedureRunner::new(m);
            for (out, p) in out_chunk.chunks_mut(m).zip(p_chunk.chunks(m)) {
                runner.run(g, p, out);
            }
        });
    Ok(DecisionMatrix { n, m, data })
}

/// Canonical reduction from per-hypothesis counts to the objective value:
/// `sum_i v_i * (count_i / n)`, left to right. Every estimator in the crate
/// funnels through this so recomputations agree bit-for-bit.
fn value_from_counts(counts: &[u64], n: usize, weights: &[f64]) -> f64 {
    let nf = n as f64;
    let mut value = 0.0;
    for (v, &c) in weights.iter().zip(counts) {
        value += v * (c as f64 / nf);
    }
    value
}

/// Per-hypothesis rejection counts under the spec's gating rule.
fn gated_counts(d: &DecisionMatrix, spec: &ObjectiveSpec) -> Vec<u64> {
    let mut counts = vec![0u64; d.m];
    for i in 0..d.n {
        let row = d.row(i);
        if let Some(g) = spec.gate {
            if !row[g] {
                continue;
            }
        }
        for (c, &r) in counts.iter_mut().zip(row) {
            *c += r as u64;
        }
    }
    counts
}

/// The empirical weighted objective for a decision matrix.
pub fn empirical_objective(d: &DecisionMatrix, spec: &ObjectiveSpec) -> Result<f64> {
    if spec.m() != d.m {
        return Err(Error::config(format!(
            "objective covers {} hypotheses, decisions have {}",
            spec.m(),
            d.m
        )));
    }
    Ok(value_from_counts(&gated_counts(d, spec), d.n, spec.weights().weights()))
}

/// The empirical objective with its Monte Carlo standard error.
///
/// The per-row score is `s_j = sum_i v_i D'_ij`; the standard error is the
/// sample standard deviation of the scores over `sqrt(n)`, computed from
/// integer pair counts so it is exactly reproducible.
pub fn empirical_objective_with_se(
    d: &DecisionMatrix,
    spec: &ObjectiveSpec,
) -> Result<(f64, f64)> {
    if spec.m() != d.m {
        return Err(Error::config(format!(
            "objective covers {} hypotheses, decisions have {}",
            spec.m(),
            d.m
        )));
    }
    let m = d.m;
    let mut pair_counts = vec![0u64; m * m];
    for i in 0..d.n {
        let row = d.row(i);
        if let Some(g) = spec.gate {
            if !row[g] {
                continue;
            }
        }
        for a in 0..m {
            if row[a] {
                for b in 0..m {
                    if row[b] {
                        pair_counts[a * m + b] += 1;
                    }
                }
            }
        }
    }
    let diag: Vec<u64> = (0..m).map(|i| pair_counts[i * m + i]).collect();
    let w = spec.weights().weights();
    let value = value_from_counts(&diag, d.n, w);
    let nf = d.n as f64;
    let mut second_moment = 0.0;
    for a in 0..m {
        for b in 0..m {
            second_moment += w[a] * w[b] * (pair_counts[a * m + b] as f64 / nf);
        }
    }
    let variance = ((second_moment - value * value) * nf / (nf - 1.0)).max(0.0);
    Ok((value, (variance / nf).sqrt()))
}

/// Fused panel evaluation: decisions are never materialized, only counted.
/// This is the hot path for dataset generation and true-objective
/// refinement; it produces exactly the same value as
/// `empirical_objective(decide_all(g, panel), spec)`.
pub fn objective_value_on_panel(
    g: &Graph,
    panel: &PValuePanel,
    spec: &ObjectiveSpec,
) -> Result<f64> {
    if spec.m() != g.m() {
        return Err(Error::config(format!(
            "objective covers {} hypotheses, graph has {}",
            spec.m(),
            g.m()
        )));
    }
    check_graph_for_panel(g, panel)?;
    let m = g.m();
    let counts = panel
        .values()
        .par_chunks(1024 * m)
        .fold(
            || (vec![0u64; m], ProcedureRunner::new(m), vec![false; m]),
            |(mut counts, mut runner, mut out), chunk| {
                for p in chunk.chunks(m) {
                    runner.run(g, p, &mut out);
                    let gate_ok = spec.gate().map_or(true, |gi| out[gi]);
                    if gate_ok {
                        for (c, &r) in counts.iter_mut().zip(out.iter()) {
                            *c += r as u64;
                        }
                    }
                }
                (counts, runner, out)
            },
        )
        .map(|(counts, _, _)| counts)
        .reduce(
            || vec![0u64; m],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    Ok(value_from_counts(&counts, panel.n(), spec.weights().weights()))
}

/// Fused panel evaluation returning value and Monte Carlo standard error.
pub fn objective_with_se_on_panel(
    g: &Graph,
    panel: &PValuePanel,
    spec: &ObjectiveSpec,
) -> Result<(f64, f64)> {
    let d = decide_all(g, panel)?;
    empirical_objective_with_se(&d, spec)
}

/// Familywise error estimate on a null panel: the share of rows with at
/// least one rejection.
pub fn fwer_estimate(g: &Graph, null_panel: &PValuePanel) -> Result<f64> {
    check_graph_for_panel(g, null_panel)?;
    let m = g.m();
    let count: u64 = null_panel
        .values()
        .par_chunks(1024 * m)
        .fold(
            || (0u64, ProcedureRunner::new(m), vec![false; m]),
            |(mut count, mut runner, mut out), chunk| {
                for p in chunk.chunks(m) {
                    runner.run(g, p, &mut out);
                    count += out.iter().any(|&r| r) as u64;
                }
                (count, runner, out)
            },
        )
        .map(|(c, _, _)| c)
        .reduce(|| 0u64, |a, b| a + b);
    Ok(count as f64 / null_panel.n() as f64)
}

/// One row of an objective report CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectiveReportRow {
    /// Digest of the scenario the panel was drawn from.
    pub scenario_digest: String,
    /// Digest of the evaluated graph.
    pub graph_digest: String,
    /// `"plain"` or `"gated"`.
    pub spec_kind: String,
    /// Panel rows used.
    pub n: usize,
    /// Estimated objective value.
    pub value: f64,
    /// Monte Carlo standard error.
    pub se: f64,
}

impl ObjectiveReportRow {
    /// CSV header matching [`ObjectiveReportRow::to_csv_row`].
    pub fn csv_header() -> &'static str {
        "scenario_digest,graph_digest,spec_kind,n,value,se"
    }

    /// One CSV line; doubles use shortest round-trip formatting.
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.scenario_digest, self.graph_digest, self.spec_kind, self.n, self.value, self.se
        )
    }
}
