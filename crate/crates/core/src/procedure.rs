//! The sequentially rejective graphical test.
//!
//! Given a feasible graph and a vector of one-sided p-values, the procedure
//! repeatedly picks the active hypothesis with the smallest ratio
//! `p_i / alpha_i`, rejects it if `p_i <= alpha_i`, and redistributes its
//! level along the graph's transitions; it stops at the first failure. The
//! final rejection set does not depend on which eligible hypothesis is
//! rejected first, so the argmin walk is just a deterministic canonical
//! order (smallest index on ties).
//!
//! [`closure_holm_oracle`] implements the closed-testing procedure with
//! equal-weight Bonferroni over every nonempty intersection hypothesis. It
//! is exponential in `m` and exists to cross-check the graph engine: on the
//! Holm graph the two must agree everywhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{validate_graph, Graph};

/// Denominator threshold below which the transition update is degenerate
/// (`t_lj * t_jl = 1` within tolerance) and row `l` is zeroed instead.
pub const DEGENERATE_DENOM_TOL: f64 = 1e-12;

/// Rejection decisions for one p-value vector, indexed like the hypotheses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionVector {
    /// `rejected[i]` is true iff hypothesis `i` was rejected.
    pub rejected: Vec<bool>,
}

impl DecisionVector {
    /// Number of rejected hypotheses.
    pub fn count(&self) -> usize {
        self.rejected.iter().filter(|&&r| r).count()
    }
}

/// Ratio used to pick the next candidate: `p/alpha` with the conventions
/// `p/0 = +inf` for `p > 0` and `0/0 = 0`.
#[inline]
fn ratio(p: f64, alpha: f64) -> f64 {
    if alpha > 0.0 {
        p / alpha
    } else if p == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Shared update: remove hypothesis `j` from `(alphas, trans)` in place,
/// passing its level along row `j` and rewiring the surviving transitions.
/// Rows/columns of previously removed hypotheses are already zero and stay
/// zero, so no survivor bookkeeping is needed here.
fn remove_in_place(alphas: &mut [f64], trans: &mut [f64], m: usize, j: usize) {
    let aj = alphas[j];
    for l in 0..m {
        if l != j {
            alphas[l] += aj * trans[j * m + l];
        }
    }
    for l in 0..m {
        if l == j {
            continue;
        }
        let tlj = trans[l * m + j];
        let tjl = trans[j * m + l];
        let denom = 1.0 - tlj * tjl;
        if denom <= DEGENERATE_DENOM_TOL {
            // The level would cycle entirely between l and j; the updated
            // row is defined as zero.
            for k in 0..m {
                trans[l * m + k] = 0.0;
            }
            continue;
        }
        for k in 0..m {
            if k != l && k != j {
                trans[l * m + k] = (trans[l * m + k] + tlj * trans[j * m + k]) / denom;
            }
        }
        trans[l * m + j] = 0.0;
    }
    for k in 0..m {
        trans[j * m + k] = 0.0;
    }
    alphas[j] = 0.0;
}

/// Remove hypothesis `j` (0-indexed) from the graph, redistributing its
/// alpha along its outgoing transitions and rewiring the remaining
/// transition mass. The removed hypothesis keeps its slot with zeroed alpha,
/// row, and column, so indices are stable.
pub fn remove_hypothesis(g: &Graph, j: usize) -> Result<Graph> {
    if j >= g.m() {
        return Err(Error::config(format!(
            "remove_hypothesis: index {} out of range for {} hypotheses",
            j,
            g.m()
        )));
    }
    let mut alphas = g.alphas().to_vec();
    let mut trans = g.transitions_flat().to_vec();
    remove_in_place(&mut alphas, &mut trans, g.m(), j);
    Ok(Graph::from_flat(alphas, trans))
}

/// Reusable scratch state for running the procedure many times without
/// allocating. `decide_all` and the optimizers keep one per worker thread.
#[derive(Debug, Clone)]
pub struct ProcedureRunner {
    m: usize,
    alphas: Vec<f64>,
    trans: Vec<f64>,
    active: Vec<bool>,
}

impl ProcedureRunner {
    /// Scratch for graphs over `m` hypotheses.
    pub fn new(m: usize) -> Self {
        ProcedureRunner {
            m,
            alphas: vec![0.0; m],
            trans: vec![0.0; m * m],
            active: vec![true; m],
        }
    }

    /// Run the procedure for one p-value vector, writing decisions into
    /// `out`. The graph is assumed feasible and dimensions are only
    /// debug-checked: validation belongs to the callers that loop over
    /// panels.
    pub fn run(&mut self, g: &Graph, p: &[f64], out: &mut [bool]) {
        let m = self.m;
        debug_assert_eq!(g.m(), m);
        debug_assert_eq!(p.len(), m);
        debug_assert_eq!(out.len(), m);
        self.alphas.copy_from_slice(g.alphas());
        self.trans.copy_from_slice(g.transitions_flat());
        for (a, o) in self.active.iter_mut().zip(out.iter_mut()) {
            *a = true;
            *o = false;
        }
        loop {
            let mut best = f64::INFINITY;
            let mut best_j = usize::MAX;
            for i in 0..m {
                if self.active[i] {
                    let r = ratio(p[i], self.alphas[i]);
                    if r < best || best_j == usize::MAX {
                        best = r;
                        best_j = i;
                    }
                }
            }
            if best_j == usize::MAX {
                break;
            }
            if p[best_j] <= self.alphas[best_j] {
                out[best_j] = true;
                self.active[best_j] = false;
                remove_in_place(&mut self.alphas, &mut self.trans, m, best_j);
            } else {
                break;
            }
        }
    }
}

/// Run the sequentially rejective procedure for one p-value vector.
///
/// Validates that the graph is structurally feasible (nonnegative alphas,
/// transitions in `[0,1]` with zero diagonal, row sums at most one) and that
/// the p-values are NaN-free and match the graph's dimension.
pub fn run_procedure(g: &Graph, p: &[f64]) -> Result<DecisionVector> {
    if p.len() != g.m() {
        return Err(Error::config(format!(
            "run_procedure: {} p-values for {} hypotheses",
            p.len(),
            g.m()
        )));
    }
    if p.iter().any(|x| x.is_nan()) {
        return Err(Error::config("run_procedure: NaN p-value"));
    }
    // The familywise total is a property of the scenario, not the graph, so
    // feasibility is checked here against the graph's own alpha sum.
    let report = validate_graph(g, f64::INFINITY);
    if !report.feasible {
        return Err(Error::infeasible(format!(
            "run_procedure: infeasible graph: {:?}",
            report.violations
        )));
    }
    let mut runner = ProcedureRunner::new(g.m());
    let mut out = vec![false; g.m()];
    runner.run(g, p, &mut out);
    Ok(DecisionVector { rejected: out })
}

/// Exhaustive closed-testing procedure with equal-weight Bonferroni tests:
/// the intersection hypothesis over a set `I` is rejected iff
/// `min_{i in I} p_i <= alpha_total / |I|`, and an elementary hypothesis is
/// rejected iff every intersection containing it is rejected. Exponential in
/// `m`; limited to `m <= 12`. Agrees with [`run_procedure`] on the Holm
/// graph, which is what makes it a useful oracle.
pub fn closure_holm_oracle(p: &[f64], alpha_total: f64) -> Result<DecisionVector> {
    let m = p.len();
    if m == 0 || m > 12 {
        return Err(Error::config(format!(
            "closure_holm_oracle: m = {m} outside supported range 1..=12"
        )));
    }
    if p.iter().any(|x| x.is_nan()) {
        return Err(Error::config("closure_holm_oracle: NaN p-value"));
    }
    let mut rejected = vec![true; m];
    for mask in 1u32..(1 << m) {
        let size = mask.count_ones() as f64;
        let threshold = alpha_total / size;
        let mut intersection_rejected = false;
        for (i, &pi) in p.iter().enumerate() {
            if mask & (1 << i) != 0 && pi <= threshold {
                intersection_rejected = true;
                break;
            }
        }
        if !intersection_rejected {
            for (i, r) in rejected.iter_mut().enumerate() {
                if mask & (1 << i) != 0 {
                    *r = false;
                }
            }
        }
    }
    Ok(DecisionVector { rejected })
}
