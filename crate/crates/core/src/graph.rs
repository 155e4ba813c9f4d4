//! Graphical multiple-testing procedures as data.
//!
//! A procedure on `m` hypotheses is a pair `g = (alphas, transitions)`: an
//! initial allocation `alphas` of the one-sided familywise level across the
//! hypotheses, and an `m x m` transition matrix whose entry `t[i][j]` is the
//! fraction of hypothesis `i`'s level passed to `j` when `i` is rejected.
//! Feasibility requires nonnegative entries, zero diagonal, row sums at most
//! one, and total initial alpha at most the familywise level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for feasibility checks on graphs.
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// A graphical procedure: initial alpha allocation plus transition matrix.
///
/// The transition matrix is stored flat in row-major order; hypotheses are
/// indexed from 0. Serialized form is `{"alphas": [...], "transitions":
/// [[row 0], [row 1], ...]}` and round-trips doubles bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "GraphJson", try_from = "GraphJson")]
pub struct Graph {
    m: usize,
    alphas: Vec<f64>,
    trans: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    alphas: Vec<f64>,
    transitions: Vec<Vec<f64>>,
}

impl From<Graph> for GraphJson {
    fn from(g: Graph) -> Self {
        let transitions = (0..g.m)
            .map(|i| g.trans[i * g.m..(i + 1) * g.m].to_vec())
            .collect();
        GraphJson { alphas: g.alphas, transitions }
    }
}

impl TryFrom<GraphJson> for Graph {
    type Error = Error;

    fn try_from(j: GraphJson) -> Result<Graph> {
        Graph::new(j.alphas, j.transitions)
    }
}

impl Graph {
    /// Build a graph from an alpha vector and nested transition rows,
    /// checking structure only (dimensions and finiteness). Feasibility is
    /// the domain of [`validate_graph`].
    pub fn new(alphas: Vec<f64>, transitions: Vec<Vec<f64>>) -> Result<Graph> {
        let m = alphas.len();
        if m == 0 {
            return Err(Error::config("graph must have at least one hypothesis"));
        }
        if transitions.len() != m {
            return Err(Error::config(format!(
                "transition matrix has {} rows for {} hypotheses",
                transitions.len(),
                m
            )));
        }
        let mut trans = Vec::with_capacity(m * m);
        for (i, row) in transitions.iter().enumerate() {
            if row.len() != m {
                return Err(Error::config(format!(
                    "transition row {} has length {}, expected {}",
                    i,
                    row.len(),
                    m
                )));
            }
            trans.extend_from_slice(row);
        }
        if alphas.iter().any(|a| !a.is_finite()) {
            return Err(Error::config("alpha allocation contains a non-finite entry"));
        }
        if trans.iter().any(|t| !t.is_finite()) {
            return Err(Error::config("transition matrix contains a non-finite entry"));
        }
        Ok(Graph { m, alphas, trans })
    }

    /// Build from flat row-major transitions (internal fast path).
    pub(crate) fn from_flat(alphas: Vec<f64>, trans: Vec<f64>) -> Graph {
        let m = alphas.len();
        debug_assert_eq!(trans.len(), m * m);
        Graph { m, alphas, trans }
    }

    /// Number of hypotheses.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Initial alpha allocation.
    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// Transition entry from hypothesis `i` to `j`.
    pub fn t(&self, i: usize, j: usize) -> f64 {
        self.trans[i * self.m + j]
    }

    /// Flat row-major view of the transition matrix.
    pub fn transitions_flat(&self) -> &[f64] {
        &self.trans
    }

    /// Sum of the initial alpha allocation.
    pub fn total_alpha(&self) -> f64 {
        self.alphas.iter().sum()
    }

    /// Canonical JSON serialization of this graph.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serialization cannot fail")
    }

    /// Parse a graph from its JSON serialization.
    pub fn from_json(s: &str) -> Result<Graph> {
        serde_json::from_str(s).map_err(|e| Error::json("<graph json>", e))
    }

    /// Hex SHA-256 digest of the canonical JSON form.
    pub fn digest(&self) -> String {
        crate::pipeline::digest_str(&self.to_json())
    }
}

/// One feasibility violation: which constraint, and by how much.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    /// Human-readable constraint identifier, e.g. `"row_sum[2]"`.
    pub constraint: String,
    /// Positive magnitude of the violation.
    pub magnitude: f64,
}

/// Outcome of checking a graph against the feasibility constraints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    /// True iff no constraint is violated beyond [`FEASIBILITY_TOL`].
    pub feasible: bool,
    /// All violations found, each with its magnitude.
    pub violations: Vec<Violation>,
}

/// Check a graph against the feasibility constraints at familywise level
/// `alpha_total`: nonnegative alphas summing to at most `alpha_total`,
/// transitions in `[0, 1]` with zero diagonal, and row sums at most one.
/// `feasible` is true exactly when `violations` is empty; violations smaller
/// than [`FEASIBILITY_TOL`] are ignored.
pub fn validate_graph(g: &Graph, alpha_total: f64) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |constraint: String, magnitude: f64| {
        if magnitude > FEASIBILITY_TOL {
            violations.push(Violation { constraint, magnitude });
        }
    };

    for (i, &a) in g.alphas.iter().enumerate() {
        push(format!("alpha[{i}] >= 0"), -a);
    }
    push("total_alpha <= alpha_total".to_string(), g.total_alpha() - alpha_total);

    for i in 0..g.m {
        let mut row_sum = 0.0;
        for j in 0..g.m {
            let t = g.t(i, j);
            row_sum += t;
            push(format!("t[{i}][{j}] >= 0"), -t);
            push(format!("t[{i}][{j}] <= 1"), t - 1.0);
            if i == j {
                push(format!("diag[{i}] == 0"), t.abs());
            }
        }
        push(format!("row_sum[{i}] <= 1"), row_sum - 1.0);
    }

    ValidationReport { feasible: violations.is_empty(), violations }
}

/// The Holm (equal-weight) graph: `alpha_total / m` on every hypothesis and
/// uniform recycling `1/(m-1)` to every other hypothesis.
pub fn holm_graph(m: usize, alpha_total: f64) -> Graph {
    assert!(m >= 1, "holm_graph requires at least one hypothesis");
    let alphas = vec![alpha_total / m as f64; m];
    let mut trans = vec![0.0; m * m];
    if m > 1 {
        let share = 1.0 / (m - 1) as f64;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    trans[i * m + j] = share;
                }
            }
        }
    }
    Graph { m, alphas, trans }
}

/// The fixed-sequence graph: full level on the first hypothesis and a chain
/// passing everything to the next hypothesis in index order.
pub fn fixed_sequence_graph(m: usize, alpha_total: f64) -> Graph {
    assert!(m >= 1, "fixed_sequence_graph requires at least one hypothesis");
    let mut alphas = vec![0.0; m];
    alphas[0] = alpha_total;
    let mut trans = vec![0.0; m * m];
    for i in 0..m.saturating_sub(1) {
        trans[i * m + (i + 1)] = 1.0;
    }
    Graph { m, alphas, trans }
}
