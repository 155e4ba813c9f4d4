//! Cross-cutting invariants checked on randomized instances: procedure
//! equivalences, order invariance, monotonicity, conservation laws, and
//! estimator identities.

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mtopt::{
    closure_holm_oracle, decide_all, empirical_objective, fixed_sequence_graph, holm_graph,
    objective_value_on_panel, remove_hypothesis, run_procedure, Correlation, Graph, ObjectiveSpec,
    Scenario, WeightVector,
};

const ALPHA: f64 = 0.025;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
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
    let alphas: Vec<f64> = alphas_raw
        .iter()
        .map(|v| v / asum * alpha_total * ascale)
        .collect();
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

/// Random p-values with mass near zero, occasional exact zeros, and ties.
fn random_pvalues(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let mut p: Vec<f64> = (0..m)
        .map(|_| {
            let u: f64 = rng.random();
            match rng.random_range(0..4u8) {
                0 => u,           // uniform
                1 => u * u * u,   // concentrated near zero
                2 => u * 0.05,    // near the decision boundary
                _ => {
                    if rng.random::<f64>() < 0.15 {
                        0.0 // exact zero
                    } else {
                        u * 0.01
                    }
                }
            }
        })
        .collect();
    // Occasionally duplicate a coordinate to create exact ratio ties.
    if m >= 2 && rng.random::<f64>() < 0.2 {
        let i = rng.random_range(0..m);
        let j = rng.random_range(0..m);
        p[i] = p[j];
    }
    p
}

fn rejected_set(g: &Graph, p: &[f64]) -> BTreeSet<usize> {
    run_procedure(g, p)
        .unwrap()
        .rejected
        .iter()
        .enumerate()
        .filter_map(|(i, &r)| r.then_some(i))
        .collect()
}

// ---------------------------------------------------------------------------
// Procedure equivalences
// ---------------------------------------------------------------------------

#[test]
fn holm_graph_reproduces_the_closed_testing_oracle() {
    for m in 2..=4 {
        let g = holm_graph(m, ALPHA);
        let mut r = rng(900 + m as u64);
        for _ in 0..2_000 {
            let p = random_pvalues(&mut r, m);
            let fast = run_procedure(&g, &p).unwrap();
            let oracle = closure_holm_oracle(&p, ALPHA).unwrap();
            assert_eq!(fast.rejected, oracle.rejected, "m={m} p={p:?}");
        }
    }
}

#[test]
fn fixed_sequence_graph_matches_a_direct_sequential_loop() {
    for m in 2..=6 {
        let g = fixed_sequence_graph(m, ALPHA);
        let mut r = rng(1_700 + m as u64);
        for _ in 0..2_000 {
            let p = random_pvalues(&mut r, m);
            // Direct loop: test hypotheses in order at the full level,
            // stopping at the first failure. A p-value of exactly zero is
            // rejectable even with zero budget (the 0/0 convention), so
            // zeros are rejected wherever they sit — the chain rewires
            // around them.
            let first_fail = (0..m).find(|&k| p[k] > ALPHA).unwrap_or(m);
            let direct: Vec<bool> = (0..m)
                .map(|k| k < first_fail || p[k] == 0.0)
                .collect();
            let got = run_procedure(&g, &p).unwrap();
            assert_eq!(got.rejected, direct, "m={m} p={p:?}");
        }
    }
}

// ---------------------------------------------------------------------------
// Order invariance
// ---------------------------------------------------------------------------

/// Explore every order of rejecting currently-rejectable hypotheses and
/// collect each terminal rejection set.
fn dfs_orders(
    g: &Graph,
    p: &[f64],
    active: &mut Vec<bool>,
    rejected: &mut BTreeSet<usize>,
    out: &mut BTreeSet<BTreeSet<usize>>,
) {
    let eligible: Vec<usize> = (0..g.m())
        .filter(|&j| active[j] && p[j] <= g.alphas()[j])
        .collect();
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

#[test]
fn rejection_order_does_not_change_the_final_set() {
    for m in 2..=4 {
        let mut r = rng(2_600 + m as u64);
        for _ in 0..300 {
            let g = random_graph(&mut r, m, ALPHA);
            let p = random_pvalues(&mut r, m);
            let mut active = vec![true; m];
            let mut rejected = BTreeSet::new();
            let mut outcomes = BTreeSet::new();
            dfs_orders(&g, &p, &mut active, &mut rejected, &mut outcomes);
            assert_eq!(outcomes.len(), 1, "m={m} p={p:?} outcomes={outcomes:?}");
            // The library's argmin-order run lands on the same set.
            let library = rejected_set(&g, &p);
            assert!(outcomes.contains(&library), "m={m} p={p:?}");
        }
    }
}

// ---------------------------------------------------------------------------
// Monotonicity and equivariance
// ---------------------------------------------------------------------------

#[test]
fn lowering_a_pvalue_never_loses_rejections() {
    let m = 4;
    let mut r = rng(35);
    for _ in 0..1_000 {
        let g = random_graph(&mut r, m, ALPHA);
        let p = random_pvalues(&mut r, m);
        let before = rejected_set(&g, &p);
        let mut p2 = p.clone();
        let k = r.random_range(0..m);
        p2[k] = if r.random::<f64>() < 0.2 {
            0.0
        } else {
            p[k] * r.random::<f64>()
        };
        let after = rejected_set(&g, &p2);
        assert!(
            before.is_subset(&after),
            "p={p:?} p2={p2:?} before={before:?} after={after:?}"
        );
    }
}

#[test]
fn relabeling_hypotheses_permutes_decisions() {
    let m = 4;
    let mut r = rng(44);
    for _ in 0..500 {
        let g = random_graph(&mut r, m, ALPHA);
        let p = random_pvalues(&mut r, m);
        // Random permutation sigma: position i of the relabeled problem
        // holds original hypothesis sigma[i].
        let mut sigma: Vec<usize> = (0..m).collect();
        for i in (1..m).rev() {
            let j = r.random_range(0..=i);
            sigma.swap(i, j);
        }
        let alphas: Vec<f64> = sigma.iter().map(|&s| g.alphas()[s]).collect();
        let rows: Vec<Vec<f64>> = sigma
            .iter()
            .map(|&si| sigma.iter().map(|&sj| g.t(si, sj)).collect())
            .collect();
        let perm_g = Graph::new(alphas, rows).unwrap();
        let perm_p: Vec<f64> = sigma.iter().map(|&s| p[s]).collect();
        let base = run_procedure(&g, &p).unwrap();
        let perm = run_procedure(&perm_g, &perm_p).unwrap();
        for i in 0..m {
            assert_eq!(
                perm.rejected[i], base.rejected[sigma[i]],
                "sigma={sigma:?} p={p:?}"
            );
        }
    }
}

// ---------------------------------------------------------------------------
// Conservation under removal
// ---------------------------------------------------------------------------

#[test]
fn alpha_never_grows_under_removal() {
    let m = 5;
    let mut r = rng(57);
    for _ in 0..400 {
        let mut g = random_graph(&mut r, m, ALPHA);
        let mut order: Vec<usize> = (0..m).collect();
        for i in (1..m).rev() {
            let j = r.random_range(0..=i);
            order.swap(i, j);
        }
        let mut total = g.total_alpha();
        assert!(total <= ALPHA + 1e-12);
        for &j in order.iter().take(m - 1) {
            g = remove_hypothesis(&g, j).unwrap();
            let next = g.total_alpha();
            assert!(
                next <= total + 1e-12,
                "alpha grew from {total} to {next}"
            );
            total = next;
        }
    }
}

#[test]
fn full_mass_rows_conserve_alpha_exactly() {
    // When every transition row carries full mass, removals redistribute
    // the removed hypothesis's alpha without leakage.
    let m = 5;
    let mut r = rng(58);
    for _ in 0..400 {
        let draw = |rng: &mut ChaCha8Rng, k: usize| -> Vec<f64> {
            (0..k).map(|_| -f64::ln(1.0 - rng.random::<f64>())).collect()
        };
        let araw = draw(&mut r, m);
        let asum: f64 = araw.iter().sum();
        let alphas: Vec<f64> = araw.iter().map(|v| v / asum * ALPHA).collect();
        let mut rows = Vec::with_capacity(m);
        for i in 0..m {
            let raw = draw(&mut r, m - 1);
            let rsum: f64 = raw.iter().sum();
            let mut row = vec![0.0; m];
            let mut k = 0;
            for (j, slot) in row.iter_mut().enumerate() {
                if j != i {
                    *slot = raw[k] / rsum;
                    k += 1;
                }
            }
            rows.push(row);
        }
        let mut g = Graph::new(alphas, rows).unwrap();
        let start = g.total_alpha();
        for _ in 0..m - 1 {
            let j = (0..g.m()).find(|&j| g.alphas()[j] > 0.0).unwrap();
            g = remove_hypothesis(&g, j).unwrap();
            assert!(
                (g.total_alpha() - start).abs() <= 1e-9,
                "leaked: {} vs {start}",
                g.total_alpha()
            );
        }
    }
}

#[test]
fn removal_zeroes_the_removed_slots() {
    let m = 4;
    let mut r = rng(61);
    for _ in 0..300 {
        let g = random_graph(&mut r, m, ALPHA);
        let j = r.random_range(0..m);
        let h = remove_hypothesis(&g, j).unwrap();
        assert_eq!(h.alphas()[j], 0.0);
        for k in 0..m {
            assert_eq!(h.t(j, k), 0.0, "row slot {k}");
            assert_eq!(h.t(k, j), 0.0, "column slot {k}");
        }
    }
}

// ---------------------------------------------------------------------------
// Estimator identities
// ---------------------------------------------------------------------------

#[test]
fn estimator_matches_direct_average_bitwise_on_dyadic_weights() {
    // Dyadic weights and a power-of-two panel size make both evaluation
    // orders exact, so the canonical reduction, the fused panel path, and
    // a per-row average all agree to the bit.
    let m = 4;
    let scenario = Scenario::new(
        vec![2.0, 2.2, 1.8, 2.4],
        Correlation::Exchangeable(0.4),
        ALPHA,
    )
    .unwrap();
    let panel = mtopt::sample_pvalues(&scenario, 512, 77);
    let weights = WeightVector::new(vec![0.5, 0.25, 0.125, 0.125]).unwrap();
    let spec = ObjectiveSpec::plain(weights.clone());
    let mut r = rng(71);
    for _ in 0..25 {
        let g = random_graph(&mut r, m, ALPHA);
        let d = decide_all(&g, &panel).unwrap();
        let canonical = empirical_objective(&d, &spec).unwrap();
        let fused = objective_value_on_panel(&g, &panel, &spec).unwrap();
        assert_eq!(canonical.to_bits(), fused.to_bits());
        let mut per_row = 0.0;
        for i in 0..d.n() {
            let mut s = 0.0;
            for (k, &rej) in d.row(i).iter().enumerate() {
                if rej {
                    s += weights.weights()[k];
                }
            }
            per_row += s / d.n() as f64;
        }
        assert_eq!(canonical.to_bits(), per_row.to_bits());
    }
}

#[test]
fn estimator_matches_direct_average_closely_on_general_weights() {
    let m = 3;
    let scenario = Scenario::new(vec![2.0, 2.5, 1.5], Correlation::Exchangeable(0.2), ALPHA)
        .unwrap();
    let panel = mtopt::sample_pvalues(&scenario, 999, 78);
    let weights = WeightVector::new(vec![0.4, 0.35, 0.25]).unwrap();
    let spec = ObjectiveSpec::plain(weights.clone());
    let mut r = rng(72);
    for _ in 0..25 {
        let g = random_graph(&mut r, m, ALPHA);
        let d = decide_all(&g, &panel).unwrap();
        let canonical = empirical_objective(&d, &spec).unwrap();
        let mut per_row = 0.0;
        for i in 0..d.n() {
            let mut s = 0.0;
            for (k, &rej) in d.row(i).iter().enumerate() {
                if rej {
                    s += weights.weights()[k];
                }
            }
            per_row += s;
        }
        per_row /= d.n() as f64;
        assert!(
            (canonical - per_row).abs() <= 1e-14,
            "{canonical} vs {per_row}"
        );
    }
}

#[test]
fn gated_objective_never_exceeds_plain() {
    // The gate hypothesis carries zero weight; gating can only drop rows
    // from the count, so the gated value is dominated by the plain value
    // under the same weights.
    let m = 3;
    let scenario = Scenario::new(vec![2.4, 2.0, 1.6], Correlation::Exchangeable(0.5), ALPHA)
        .unwrap();
    let panel = mtopt::sample_pvalues(&scenario, 4_096, 79);
    let mut r = rng(73);
    for _ in 0..20 {
        let g = random_graph(&mut r, m, ALPHA);
        for gate in 0..m {
            let mut w = vec![0.6, 0.4];
            w.insert(gate, 0.0);
            let weights = WeightVector::new(w).unwrap();
            let plain = ObjectiveSpec::plain(weights.clone());
            let gated = ObjectiveSpec::gated(weights, gate).unwrap();
            let v_plain = objective_value_on_panel(&g, &panel, &plain).unwrap();
            let v_gated = objective_value_on_panel(&g, &panel, &gated).unwrap();
            assert!(
                v_gated <= v_plain,
                "gate {gate}: {v_gated} > {v_plain}"
            );
        }
    }
}

// ---------------------------------------------------------------------------
// Property-based checks
// ---------------------------------------------------------------------------

proptest! {
    #[test]
    fn normal_cdf_inverts_quantile(p in 1e-12f64..=0.999_999_999_999f64) {
        let x = mtopt::normal::quantile(p);
        let back = mtopt::normal::cdf(x);
        let tol = 1e-12 * p.min(1.0 - p) + 1e-16;
        prop_assert!((back - p).abs() <= tol, "p={p} x={x} back={back}");
    }

    #[test]
    fn weight_vectors_validate_the_simplex(raw in proptest::collection::vec(0.01f64..1.0, 2..5)) {
        let sum: f64 = raw.iter().sum();
        let normalized: Vec<f64> = raw.iter().map(|v| v / sum).collect();
        prop_assert!(WeightVector::new(normalized).is_ok());
        let off: Vec<f64> = raw.iter().map(|v| v / sum * 1.1).collect();
        prop_assert!(WeightVector::new(off).is_err());
    }

    #[test]
    fn random_feasible_graphs_round_trip_json(seed in 0u64..1_000) {
        let mut r = rng(seed);
        let g = random_graph(&mut r, 4, ALPHA);
        let back = Graph::from_json(&g.to_json()).unwrap();
        prop_assert_eq!(g, back);
    }
}
