//! Free-parameter families over graphs.
//!
//! A family fixes some graph entries, leaves others free, and designates at
//! most one entry per budget group as the *remainder* that absorbs whatever
//! the group's budget leaves over. The two groups kinds are the alpha
//! allocation (budget `alpha_total`) and each transition row (budget 1).
//! The free entries, stacked alphas-first then transitions row-major, form
//! the coordinate vector `x` the optimizers work on.
//!
//! Hypotheses and matrix entries are 1-indexed in configuration files
//! (matching the usual H1..Hm naming) and 0-indexed in code.

use std::collections::BTreeMap;

use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{validate_graph, Graph};
use crate::rng::stream_rng;

/// Tolerance for boundary clamping and fixed-entry consistency checks.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Status of one graph entry within a family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EntryStatus {
    /// Held at the given value.
    Fixed(f64),
    /// A free coordinate of the family.
    Free,
    /// Absorbs the group's remaining budget.
    Remainder,
}

impl Serialize for EntryStatus {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            EntryStatus::Fixed(v) => s.serialize_str(&format!("fixed:{v}")),
            EntryStatus::Free => s.serialize_str("free"),
            EntryStatus::Remainder => s.serialize_str("remainder"),
        }
    }
}

impl<'de> Deserialize<'de> for EntryStatus {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        match s.as_str() {
            "free" => Ok(EntryStatus::Free),
            "remainder" => Ok(EntryStatus::Remainder),
            other => match other.strip_prefix("fixed:") {
                Some(v) => v
                    .trim()
                    .parse::<f64>()
                    .map(EntryStatus::Fixed)
                    .map_err(|e| serde::de::Error::custom(format!("bad fixed value: {e}"))),
                None => Err(serde::de::Error::custom(format!(
                    "entry status must be \"free\", \"remainder\", or \"fixed:<value>\", got {other:?}"
                ))),
            },
        }
    }
}

/// One transition row's mask. Column indices are 1-based in JSON; columns
/// not mentioned are fixed at zero, and the diagonal may not appear.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowConfig {
    /// Free columns.
    #[serde(default)]
    pub free: Vec<usize>,
    /// Columns pinned to explicit values.
    #[serde(default)]
    pub fixed: BTreeMap<usize, f64>,
    /// The column that absorbs the row's leftover mass, if any. A row with
    /// free columns and no remainder is constrained by the row-sum
    /// inequality instead.
    #[serde(default)]
    pub remainder: Option<usize>,
}

/// A family of graphs: which entries are fixed, free, or remainders.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    /// Number of hypotheses.
    pub m: usize,
    /// Familywise one-sided level (the alpha group's budget).
    pub alpha_total: f64,
    /// Status per hypothesis alpha. If any entry is free, exactly one must
    /// be the remainder.
    pub alpha: Vec<EntryStatus>,
    /// One mask per transition row.
    pub rows: Vec<RowConfig>,
}

impl FamilyConfig {
    /// The unrestricted family: every alpha and every off-diagonal
    /// transition varies, with the largest index of each group as its
    /// remainder. Dimension is `(m - 1) + m * (m - 2)`.
    pub fn fully_free(m: usize, alpha_total: f64) -> FamilyConfig {
        let mut alpha = vec![EntryStatus::Free; m];
        alpha[m - 1] = EntryStatus::Remainder;
        let rows = (0..m)
            .map(|i| {
                // 1-based columns excluding the diagonal; the largest is the
                // remainder, the rest are free.
                let cols: Vec<usize> = (1..=m).filter(|&j| j != i + 1).collect();
                match cols.split_last() {
                    Some((&last, rest)) => RowConfig {
                        free: rest.to_vec(),
                        fixed: BTreeMap::new(),
                        remainder: Some(last),
                    },
                    None => RowConfig::default(),
                }
            })
            .collect();
        FamilyConfig { m, alpha_total, alpha, rows }
    }

    /// Parse from JSON.
    pub fn from_json(s: &str) -> Result<FamilyConfig> {
        serde_json::from_str(s).map_err(|e| Error::json("<family json>", e))
    }

    /// Canonical JSON form.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("family serialization cannot fail")
    }
}

/// Where one coordinate of `x` lives in the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordKind {
    /// Alpha of hypothesis `i` (0-based).
    Alpha(usize),
    /// Transition from `i` to `j` (0-based).
    Transition(usize, usize),
}

impl CoordKind {
    fn label(&self) -> String {
        match self {
            CoordKind::Alpha(i) => format!("alpha[{}]", i + 1),
            CoordKind::Transition(i, j) => format!("t[{}][{}]", i + 1, j + 1),
        }
    }
}

/// Resolved status of one graph slot.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    Fixed(f64),
    Free(usize),
    Remainder,
}

/// One budget group: the free coordinates it contains, its fixed mass, its
/// limit, and which graph slot (if any) is its remainder.
#[derive(Debug, Clone)]
struct Group {
    label: String,
    coord_ids: Vec<usize>,
    fixed_sum: f64,
    limit: f64,
}

/// A single affine constraint `coeffs . x + offset <= 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AffineConstraint {
    /// Human-readable identity, e.g. `"row_sum[3]"`.
    pub label: String,
    /// Dense coefficient vector.
    pub coeffs: Vec<f64>,
    /// Constant offset.
    pub offset: f64,
}

impl AffineConstraint {
    /// Evaluate `coeffs . x + offset`.
    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.coeffs.len());
        let mut v = self.offset;
        for (c, xi) in self.coeffs.iter().zip(x) {
            v += c * xi;
        }
        v
    }
}

/// The affine inequality system `c_k(x) <= 0` describing a family's
/// feasible set: coordinate bounds and group budgets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintSet {
    /// Dimension of `x`.
    pub dim: usize,
    /// The constraints.
    pub constraints: Vec<AffineConstraint>,
}

impl ConstraintSet {
    /// All constraint values at `x`.
    pub fn values(&self, x: &[f64]) -> Vec<f64> {
        self.constraints.iter().map(|c| c.value(x)).collect()
    }

    /// Largest constraint value (positive means infeasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.value(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Whether every constraint holds within `tol`.
    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        self.max_violation(x) <= tol
    }

    /// Project `x` onto the feasible set by cyclic projection onto the
    /// violated halfspaces, until the largest violation is at most `tol`.
    /// For this crate's constraint systems (disjoint bounds plus group
    /// sums) a handful of sweeps suffices; the sweep cap guards pathological
    /// inputs. Returns the final maximum violation.
    pub fn project(&self, x: &mut [f64], tol: f64, max_sweeps: usize) -> f64 {
        for _ in 0..max_sweeps {
            let mut worst = f64::NEG_INFINITY;
            for c in &self.constraints {
                let v = c.value(x);
                worst = worst.max(v);
                if v > tol {
                    let norm2: f64 = c.coeffs.iter().map(|a| a * a).sum();
                    if norm2 > 0.0 {
                        let step = v / norm2;
                        for (xi, a) in x.iter_mut().zip(&c.coeffs) {
                            *xi -= step * a;
                        }
                    }
                }
            }
            if worst <= tol {
                return worst;
            }
        }
        self.max_violation(x)
    }
}

/// A validated family with its coordinate layout and constraint system.
#[derive(Debug, Clone)]
pub struct ParamSpace {
    m: usize,
    alpha_total: f64,
    coords: Vec<CoordKind>,
    hi: Vec<f64>,
    alpha_slots: Vec<Slot>,
    trans_slots: Vec<Slot>,
    groups: Vec<Group>,
    constraints: ConstraintSet,
    family: FamilyConfig,
}

/// Build and validate a [`ParamSpace`] from a family configuration.
pub fn build_space(cfg: &FamilyConfig) -> Result<ParamSpace> {
    let m = cfg.m;
    if m == 0 {
        return Err(Error::config("family needs at least one hypothesis"));
    }
    if !(cfg.alpha_total > 0.0 && cfg.alpha_total < 1.0) {
        return Err(Error::config(format!(
            "alpha_total {} outside (0, 1)",
            cfg.alpha_total
        )));
    }
    if cfg.alpha.len() != m {
        return Err(Error::config(format!(
            "{} alpha statuses for {} hypotheses",
            cfg.alpha.len(),
            m
        )));
    }
    if cfg.rows.len() != m {
        return Err(Error::config(format!(
            "{} row masks for {} hypotheses",
            cfg.rows.len(),
            m
        )));
    }

    let mut coords = Vec::new();
    let mut hi = Vec::new();
    let mut groups = Vec::new();

    // Alpha group.
    let mut alpha_slots = vec![Slot::Fixed(0.0); m];
    {
        let mut coord_ids = Vec::new();
        let mut fixed_sum = 0.0;
        let mut n_free = 0usize;
        let mut n_rem = 0usize;
        for (i, st) in cfg.alpha.iter().enumerate() {
            match st {
                EntryStatus::Fixed(v) => {
                    if !v.is_finite() || *v < 0.0 || *v > cfg.alpha_total {
                        return Err(Error::config(format!(
                            "fixed alpha[{}] = {v} outside [0, alpha_total]",
                            i + 1
                        )));
                    }
                    alpha_slots[i] = Slot::Fixed(*v);
                    fixed_sum += v;
                }
                EntryStatus::Free => {
                    alpha_slots[i] = Slot::Free(coords.len());
                    coord_ids.push(coords.len());
                    coords.push(CoordKind::Alpha(i));
                    hi.push(cfg.alpha_total);
                    n_free += 1;
                }
                EntryStatus::Remainder => {
                    alpha_slots[i] = Slot::Remainder;
                    n_rem += 1;
                }
            }
        }
        if n_rem > 1 {
            return Err(Error::config("alpha mask has more than one remainder"));
        }
        if n_free > 0 && n_rem != 1 {
            return Err(Error::config(
                "alpha mask with free entries must designate exactly one remainder",
            ));
        }
        if fixed_sum > cfg.alpha_total + BOUNDARY_TOL {
            return Err(Error::config(format!(
                "fixed alphas sum to {fixed_sum}, above alpha_total {}",
                cfg.alpha_total
            )));
        }
        if n_free > 0 || n_rem == 1 {
            groups.push(Group {
                label: "alpha".to_string(),
                coord_ids,
                fixed_sum,
                limit: cfg.alpha_total,
            });
        }
    }

    // Transition rows.
    let mut trans_slots = vec![Slot::Fixed(0.0); m * m];
    for (i, row) in cfg.rows.iter().enumerate() {
        let mut seen = vec![false; m];
        let mut coord_ids = Vec::new();
        let mut fixed_sum = 0.0;
        let resolve = |j_1based: usize| -> Result<usize> {
            if j_1based == 0 || j_1based > m {
                return Err(Error::config(format!(
                    "row {}: column {j_1based} out of range 1..={m}",
                    i + 1
                )));
            }
            if j_1based == i + 1 {
                return Err(Error::config(format!(
                    "row {}: diagonal entry cannot be configured",
                    i + 1
                )));
            }
            Ok(j_1based - 1)
        };
        for &j1 in &row.free {
            let j = resolve(j1)?;
            if seen[j] {
                return Err(Error::config(format!(
                    "row {}: column {j1} listed twice",
                    i + 1
                )));
            }
            seen[j] = true;
            trans_slots[i * m + j] = Slot::Free(coords.len());
            coord_ids.push(coords.len());
            coords.push(CoordKind::Transition(i, j));
            hi.push(1.0);
        }
        for (&j1, &v) in &row.fixed {
            let j = resolve(j1)?;
            if seen[j] {
                return Err(Error::config(format!(
                    "row {}: column {j1} listed twice",
                    i + 1
                )));
            }
            seen[j] = true;
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!(
                    "row {}: fixed t[{}] = {v} outside [0, 1]",
                    i + 1,
                    j1
                )));
            }
            trans_slots[i * m + j] = Slot::Fixed(v);
            fixed_sum += v;
        }
        if let Some(j1) = row.remainder {
            let j = resolve(j1)?;
            if seen[j] {
                return Err(Error::config(format!(
                    "row {}: column {j1} listed twice",
                    i + 1
                )));
            }
            seen[j] = true;
            trans_slots[i * m + j] = Slot::Remainder;
        }
        if fixed_sum > 1.0 + BOUNDARY_TOL {
            return Err(Error::config(format!(
                "row {}: fixed transitions sum to {fixed_sum}, above 1",
                i + 1
            )));
        }
        if !coord_ids.is_empty() || row.remainder.is_some() {
            groups.push(Group {
                label: format!("row[{}]", i + 1),
                coord_ids,
                fixed_sum,
                limit: 1.0,
            });
        }
    }

    // Assemble the affine constraint system: bounds then group budgets.
    let dim = coords.len();
    let mut constraints = Vec::new();
    for (c, kind) in coords.iter().enumerate() {
        let mut lo = vec![0.0; dim];
        lo[c] = -1.0;
        constraints.push(AffineConstraint {
            label: format!("{} >= 0", kind.label()),
            coeffs: lo,
            offset: 0.0,
        });
        let mut up = vec![0.0; dim];
        up[c] = 1.0;
        constraints.push(AffineConstraint {
            label: format!("{} <= {}", kind.label(), hi[c]),
            coeffs: up,
            offset: -hi[c],
        });
    }
    for g in &groups {
        if g.coord_ids.is_empty() {
            continue;
        }
        let mut coeffs = vec![0.0; dim];
        for &c in &g.coord_ids {
            coeffs[c] = 1.0;
        }
        constraints.push(AffineConstraint {
            label: format!("{}_sum <= budget", g.label),
            coeffs,
            offset: g.fixed_sum - g.limit,
        });
    }

    Ok(ParamSpace {
        m,
        alpha_total: cfg.alpha_total,
        coords,
        hi,
        alpha_slots,
        trans_slots,
        groups,
        constraints: ConstraintSet { dim, constraints },
        family: cfg.clone(),
    })
}

impl ParamSpace {
    /// Number of hypotheses.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Familywise level.
    pub fn alpha_total(&self) -> f64 {
        self.alpha_total
    }

    /// Dimension of the free coordinate vector.
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// What each coordinate of `x` controls, alphas first then transitions
    /// row-major.
    pub fn coords(&self) -> &[CoordKind] {
        &self.coords
    }

    /// Natural upper bound per coordinate (`alpha_total` or 1).
    pub fn upper_bounds(&self) -> &[f64] {
        &self.hi
    }

    /// The affine inequality system for this family.
    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    /// The family configuration this space was built from.
    pub fn family(&self) -> &FamilyConfig {
        &self.family
    }

    /// Hex digest of the canonical family JSON.
    pub fn digest(&self) -> String {
        crate::pipeline::digest_str(&self.family.to_json())
    }

    fn slot_value(&self, slot: Slot, x: &[f64]) -> f64 {
        match slot {
            Slot::Fixed(v) => v,
            Slot::Free(c) => x[c],
            Slot::Remainder => unreachable!("remainders are resolved per group"),
        }
    }
}

/// Decode a free vector into its graph.
///
/// Free coordinates land directly in their slots; each remainder receives
/// its group's budget minus the group sum. Values within 1e-9 of a boundary
/// are clamped onto it; violations beyond that tolerance are infeasibility
/// errors.
pub fn decode(space: &ParamSpace, x: &[f64]) -> Result<Graph> {
    if x.len() != space.dim() {
        return Err(Error::config(format!(
            "decode: vector has {} coordinates, family has {}",
            x.len(),
            space.dim()
        )));
    }
    let clamp = |value: f64, hi: f64, label: &dyn Fn() -> String| -> Result<f64> {
        if !value.is_finite() {
            return Err(Error::infeasible(format!("{} is not finite", label())));
        }
        if value < -BOUNDARY_TOL || value > hi + BOUNDARY_TOL {
            return Err(Error::infeasible(format!(
                "{} = {value} outside [0, {hi}]",
                label()
            )));
        }
        Ok(value.clamp(0.0, hi))
    };

    // Free coordinates, bounds-checked.
    let mut xv = vec![0.0; x.len()];
    for (c, &val) in x.iter().enumerate() {
        let kind = space.coords[c];
        xv[c] = clamp(val, space.hi[c], &|| kind.label())?;
    }

    // Group budgets and remainders.
    let mut remainders: Vec<f64> = Vec::with_capacity(space.groups.len());
    for g in &space.groups {
        let budget = (g.limit - g.fixed_sum).max(0.0);
        let free_sum: f64 = g.coord_ids.iter().map(|&c| xv[c]).sum();
        let leftover = budget - free_sum;
        if leftover < -BOUNDARY_TOL {
            return Err(Error::infeasible(format!(
                "{} exceeds its budget by {:.3e}",
                g.label, -leftover
            )));
        }
        if leftover < 0.0 {
            // Overshoot within tolerance: pull the free coordinates back
            // onto the budget so the decoded graph is exactly feasible.
            let scale = budget / free_sum;
            for &c in &g.coord_ids {
                xv[c] *= scale;
            }
            remainders.push(0.0);
        } else {
            remainders.push(leftover);
        }
    }

    let mut alphas = vec![0.0; space.m];
    let mut trans = vec![0.0; space.m * space.m];
    let mut group_iter = space.groups.iter().zip(&remainders);
    let mut next_group = group_iter.next();
    // The alpha group (if present) is first, then rows in order; resolve
    // remainders by walking slots group by group.
    let mut take_remainder = |label: &str| -> f64 {
        while let Some((g, &r)) = next_group {
            if g.label == label {
                return r;
            }
            next_group = group_iter.next();
        }
        unreachable!("remainder without its group")
    };
    for i in 0..space.m {
        alphas[i] = match space.alpha_slots[i] {
            Slot::Remainder => take_remainder("alpha"),
            slot => space.slot_value(slot, &xv),
        };
    }
    for i in 0..space.m {
        for j in 0..space.m {
            trans[i * space.m + j] = match space.trans_slots[i * space.m + j] {
                Slot::Remainder => take_remainder(&format!("row[{}]", i + 1)),
                slot => space.slot_value(slot, &xv),
            };
        }
    }

    let g = Graph::from_flat(alphas, trans);
    let report = validate_graph(&g, space.alpha_total);
    if !report.feasible {
        return Err(Error::infeasible(format!(
            "decoded graph violates feasibility: {:?}",
            report.violations
        )));
    }
    Ok(g)
}

/// Encode a graph that belongs to the family back into its free vector.
///
/// Fixed entries must match within 1e-9 and remainder entries must equal
/// their group's leftover within 1e-9; mismatches are errors naming the
/// entry.
pub fn encode(space: &ParamSpace, g: &Graph) -> Result<Vec<f64>> {
    if g.m() != space.m {
        return Err(Error::config(format!(
            "encode: graph has {} hypotheses, family has {}",
            g.m(),
            space.m
        )));
    }
    let mut x = vec![0.0; space.dim()];
    let check_fixed = |label: String, want: f64, got: f64| -> Result<()> {
        if (want - got).abs() > BOUNDARY_TOL {
            return Err(Error::config(format!(
                "graph is outside the family: {label} is {got}, family fixes it at {want}"
            )));
        }
        Ok(())
    };
    for i in 0..space.m {
        match space.alpha_slots[i] {
            Slot::Fixed(v) => check_fixed(format!("alpha[{}]", i + 1), v, g.alphas()[i])?,
            Slot::Free(c) => x[c] = g.alphas()[i],
            Slot::Remainder => {}
        }
    }
    for i in 0..space.m {
        for j in 0..space.m {
            match space.trans_slots[i * space.m + j] {
                Slot::Fixed(v) => {
                    check_fixed(format!("t[{}][{}]", i + 1, j + 1), v, g.t(i, j))?
                }
                Slot::Free(c) => x[c] = g.t(i, j),
                Slot::Remainder => {}
            }
        }
    }
    // Remainder consistency: the graph's remainder entries must equal the
    // leftover implied by the free coordinates.
    for grp in &space.groups {
        let free_sum: f64 = grp.coord_ids.iter().map(|&c| x[c]).sum();
        let leftover = (grp.limit - grp.fixed_sum - free_sum).max(0.0);
        let slot_value = if grp.label == "alpha" {
            space
                .alpha_slots
                .iter()
                .position(|s| matches!(s, Slot::Remainder))
                .map(|i| g.alphas()[i])
        } else {
            let i: usize = grp.label[4..grp.label.len() - 1].parse::<usize>().unwrap() - 1;
            (0..space.m)
                .find(|&j| matches!(space.trans_slots[i * space.m + j], Slot::Remainder))
                .map(|j| g.t(i, j))
        };
        if let Some(got) = slot_value {
            if (got - leftover).abs() > BOUNDARY_TOL {
                return Err(Error::config(format!(
                    "graph is outside the family: {} remainder is {got}, leftover is {leftover}",
                    grp.label
                )));
            }
        }
    }
    Ok(x)
}

/// Evaluate a family's constraint system at `x`.
pub fn constraint_values(space: &ParamSpace, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != space.dim() {
        return Err(Error::config(format!(
            "constraint_values: vector has {} coordinates, family has {}",
            x.len(),
            space.dim()
        )));
    }
    Ok(space.constraints.values(x))
}

/// Draw `count` feasible free vectors, flat over each budget group's
/// simplex.
///
/// Each group's free coordinates (plus one implicit cell for the remainder
/// or slack) get a symmetric Dirichlet draw — normalized unit-rate
/// exponentials — scaled by the group's budget. Sample `b` draws from
/// ChaCha stream `(seed, b)`, so any prefix of the sequence is independent
/// of `count` and of the caller's threading.
pub fn sample_uniform(space: &ParamSpace, count: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..count).map(|b| sample_one(space, seed, b as u64)).collect()
}

/// Draw the `index`-th sample of the `(space, seed)` sequence.
pub fn sample_one(space: &ParamSpace, seed: u64, index: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, index);
    let mut x = vec![0.0; space.dim()];
    for g in &space.groups {
        if g.coord_ids.is_empty() {
            continue;
        }
        let budget = (g.limit - g.fixed_sum).max(0.0);
        let cells = g.coord_ids.len() + 1;
        let mut draws = Vec::with_capacity(cells);
        let mut total = 0.0;
        for _ in 0..cells {
            let e: f64 = Exp1.sample(&mut rng);
            draws.push(e);
            total += e;
        }
        for (&c, &e) in g.coord_ids.iter().zip(&draws) {
            x[c] = budget * (e / total);
        }
    }
    x
}
