//! Constrained maximization over a family's free coordinates.
//!
//! Four solvers share the [`ObjectiveFn`] interface and the affine
//! [`ConstraintSet`] from the parameter space:
//!
//! - [`augmented_lagrangian`]: the primary surrogate optimizer — an
//!   augmented-Lagrangian outer loop around gradient descent with Armijo
//!   backtracking, run from several starts;
//! - [`local_refine`]: a projected Nelder–Mead polish step that evaluates
//!   the (possibly noisy, gradient-free) true objective;
//! - [`isres_baseline`]: a stochastic-ranking evolution strategy baseline;
//! - [`brute_force_baseline`]: the best row of an evaluated dataset.
//!
//! All solvers maximize. Every result reports the point after projection
//! onto the feasible set, with its objective value recomputed there.

use std::time::Instant;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fnn::{Dataset, Network};
use crate::rng::stream_rng;
use crate::space::{AffineConstraint, ConstraintSet};

/// A scalar objective over free coordinates, maximized by the solvers.
pub trait ObjectiveFn {
    /// Objective value at `x`.
    fn value(&self, x: &[f64]) -> f64;

    /// Exact gradient at `x`, when the objective has one.
    fn gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// Plain closures are gradient-free objectives.
impl<F: Fn(&[f64]) -> f64> ObjectiveFn for F {
    fn value(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// A value closure paired with its gradient closure.
pub struct WithGradient<F, G>(pub F, pub G)
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>;

impl<F, G> ObjectiveFn for WithGradient<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    fn value(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some((self.1)(x))
    }
}

/// The trained surrogate is an exact-gradient objective.
impl ObjectiveFn for Network {
    fn value(&self, x: &[f64]) -> f64 {
        self.forward(x)
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(self.input_gradient(x))
    }
}

/// A maximization problem: objective, box bounds, and the full affine
/// constraint system (which restates the bounds).
pub struct OptProblem<'a> {
    /// The objective to maximize.
    pub objective: &'a dyn ObjectiveFn,
    /// Per-coordinate lower bounds.
    pub lo: Vec<f64>,
    /// Per-coordinate upper bounds.
    pub hi: Vec<f64>,
    /// Affine inequalities `c_k(x) <= 0`.
    pub constraints: ConstraintSet,
}

impl<'a> OptProblem<'a> {
    /// A problem over a parameter space's constraint system.
    pub fn from_space(
        objective: &'a dyn ObjectiveFn,
        space: &crate::space::ParamSpace,
    ) -> OptProblem<'a> {
        OptProblem {
            objective,
            lo: vec![0.0; space.dim()],
            hi: space.upper_bounds().to_vec(),
            constraints: space.constraints().clone(),
        }
    }

    /// A box-constrained problem.
    pub fn from_bounds(
        objective: &'a dyn ObjectiveFn,
        lo: Vec<f64>,
        hi: Vec<f64>,
    ) -> OptProblem<'a> {
        assert_eq!(lo.len(), hi.len(), "bound dimension mismatch");
        let dim = lo.len();
        let mut constraints = Vec::with_capacity(2 * dim);
        for c in 0..dim {
            let mut down = vec![0.0; dim];
            down[c] = -1.0;
            constraints.push(AffineConstraint {
                label: format!("x[{c}] >= {}", lo[c]),
                coeffs: down,
                offset: lo[c],
            });
            let mut up = vec![0.0; dim];
            up[c] = 1.0;
            constraints.push(AffineConstraint {
                label: format!("x[{c}] <= {}", hi[c]),
                coeffs: up,
                offset: -hi[c],
            });
        }
        OptProblem {
            objective,
            lo,
            hi,
            constraints: ConstraintSet { dim, constraints },
        }
    }

    /// The same problem with extra affine inequalities.
    pub fn with_extra_constraints(mut self, extra: Vec<AffineConstraint>) -> OptProblem<'a> {
        self.constraints.constraints.extend(extra);
        self
    }

    fn dim(&self) -> usize {
        self.lo.len()
    }
}

/// One start's outcome inside a multi-start run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartSummary {
    /// Index into the list of starts.
    pub start: usize,
    /// Final projected objective value.
    pub value: f64,
    /// Inner iterations spent.
    pub inner_iters: usize,
    /// Whether the outer loop met its movement tolerance.
    pub converged: bool,
}

/// A solver outcome: the best feasible point found.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptResult {
    /// The maximizer, projected onto the feasible set.
    pub x: Vec<f64>,
    /// Objective value recomputed at `x`.
    pub value: f64,
    /// Objective value calls.
    pub evaluations: u64,
    /// Gradient calls.
    pub gradient_evals: u64,
    /// Wall-clock seconds spent.
    pub elapsed_secs: f64,
    /// Whether the solver met its own convergence criterion (budgeted
    /// solvers that ran out of budget report `false`).
    pub converged: bool,
    /// Per-start summaries for multi-start solvers.
    pub starts: Vec<StartSummary>,
}

/// Augmented-Lagrangian solver settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ALConfig {
    /// Initial penalty scale; the quadratic penalty weight is `1 / (2 mu)`.
    pub mu0: f64,
    /// Factor by which `mu` shrinks between outer iterations.
    pub mu_shrink: f64,
    /// Maximum outer iterations per start.
    pub outer_iters: usize,
    /// Maximum gradient-descent iterations per outer iteration.
    pub inner_iters: usize,
    /// Cap on inner iterations over all outer iterations of one start.
    pub inner_total_cap: usize,
    /// Relative per-coordinate movement tolerance for outer convergence.
    pub tol: f64,
    /// Absolute movement floor under the relative tolerance.
    pub tol_floor: f64,
    /// Armijo sufficient-decrease coefficient.
    pub armijo_c1: f64,
    /// Maximum step halvings per line search.
    pub armijo_halvings: usize,
}

impl Default for ALConfig {
    fn default() -> ALConfig {
        ALConfig {
            mu0: 0.1,
            mu_shrink: 4.0,
            outer_iters: 12,
            inner_iters: 2_000,
            inner_total_cap: 100_000,
            tol: 1e-5,
            tol_floor: 1e-10,
            armijo_c1: 1e-4,
            armijo_halvings: 40,
        }
    }
}

/// Maximize with an augmented Lagrangian from several starts.
///
/// Each start minimizes `-f(x) + (1/(2 mu)) sum_k [max(0, lambda_k mu +
/// c_k(x))^2 - (lambda_k mu)^2]` by gradient descent with Armijo
/// backtracking, then updates `lambda_k <- max(0, lambda_k + c_k(x)/mu)`
/// and shrinks `mu`. A start stops when no coordinate moved more than
/// `max(tol * |x_i|, tol_floor)` across an outer iteration. The best
/// start's point is projected onto the feasible set and re-evaluated.
///
/// The objective must provide gradients.
pub fn augmented_lagrangian(
    problem: &OptProblem,
    starts: &[Vec<f64>],
    cfg: &ALConfig,
) -> Result<OptResult> {
    let t0 = Instant::now();
    if starts.is_empty() {
        return Err(Error::config("augmented Lagrangian needs at least one start"));
    }
    let dim = problem.dim();
    for s in starts {
        if s.len() != dim {
            return Err(Error::config(format!(
                "start has {} coordinates, problem has {dim}",
                s.len()
            )));
        }
    }
    if problem.objective.gradient(&starts[0]).is_none() {
        return Err(Error::config(
            "augmented Lagrangian requires an objective with gradients",
        ));
    }

    let f = problem.objective;
    let cons = &problem.constraints;
    let mut evals = 0u64;
    let mut grads = 0u64;
    let mut summaries = Vec::with_capacity(starts.len());
    let mut best: Option<(Vec<f64>, f64, bool)> = None;

    for (si, start) in starts.iter().enumerate() {
        let mut x = start.clone();
        let mut lambda = vec![0.0; cons.constraints.len()];
        let mut mu = cfg.mu0;
        let mut inner_used = 0usize;
        let mut converged = false;

        // L and its gradient at the current multiplier state.
        let lagrangian = |x: &[f64], lambda: &[f64], mu: f64, evals: &mut u64| -> f64 {
            *evals += 1;
            let fx = f.value(x);
            let mut pen = 0.0;
            for (k, c) in cons.constraints.iter().enumerate() {
                let t = lambda[k] * mu + c.value(x);
                if t > 0.0 {
                    pen += t * t - (lambda[k] * mu).powi(2);
                }
                // When t <= 0 the bracket max(0, t)^2 - (lambda mu)^2 is
                // -(lambda mu)^2, a constant in x; dropping it leaves the
                // minimizer unchanged and keeps L bounded below.
            }
            let val = -fx + pen / (2.0 * mu);
            if val.is_nan() {
                f64::INFINITY
            } else {
                val
            }
        };
        let lagrangian_grad =
            |x: &[f64], lambda: &[f64], mu: f64, grads: &mut u64| -> Vec<f64> {
                *grads += 1;
                let mut g: Vec<f64> = f
                    .gradient(x)
                    .expect("gradient availability checked above")
                    .iter()
                    .map(|v| -v)
                    .collect();
                for (k, c) in cons.constraints.iter().enumerate() {
                    let t = lambda[k] * mu + c.value(x);
                    if t > 0.0 {
                        let w = t / mu;
                        for (gk, a) in g.iter_mut().zip(&c.coeffs) {
                            *gk += w * a;
                        }
                    }
                }
                g
            };

        'outer: for _outer in 0..cfg.outer_iters {
            let x_before = x.clone();
            let mut step = 1.0;
            let mut lx = lagrangian(&x, &lambda, mu, &mut evals);
            for _inner in 0..cfg.inner_iters {
                if inner_used >= cfg.inner_total_cap {
                    break 'outer;
                }
                inner_used += 1;
                let g = lagrangian_grad(&x, &lambda, mu, &mut grads);
                let gnorm2: f64 = g.iter().map(|v| v * v).sum();
                if gnorm2 == 0.0 {
                    break;
                }
                // Armijo backtracking from an adaptive initial step.
                step *= 2.0;
                let mut accepted = false;
                for _ in 0..=cfg.armijo_halvings {
                    let cand: Vec<f64> =
                        x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
                    let lc = lagrangian(&cand, &lambda, mu, &mut evals);
                    if lc <= lx - cfg.armijo_c1 * step * gnorm2 {
                        x = cand;
                        lx = lc;
                        accepted = true;
                        break;
                    }
                    step *= 0.5;
                }
                if !accepted {
                    break;
                }
                // Inner movement test at a tenth of the outer tolerance.
                let moved = x.iter().zip(&g).any(|(xi, gi)| {
                    (step * gi).abs() > 0.1 * (cfg.tol * xi.abs()).max(cfg.tol_floor)
                });
                if !moved {
                    break;
                }
            }
            for (k, c) in cons.constraints.iter().enumerate() {
                lambda[k] = (lambda[k] + c.value(&x) / mu).max(0.0);
            }
            mu /= cfg.mu_shrink;
            let still = x
                .iter()
                .zip(&x_before)
                .all(|(a, b)| (a - b).abs() <= (cfg.tol * b.abs()).max(cfg.tol_floor));
            if still {
                converged = true;
                break;
            }
        }

        // Project and re-evaluate; the projected value is the start's score.
        cons.project(&mut x, 1e-12, 500);
        evals += 1;
        let value = f.value(&x);
        summaries.push(StartSummary {
            start: si,
            value,
            inner_iters: inner_used,
            converged,
        });
        let better = match &best {
            Some((_, bv, _)) => value > *bv,
            None => true,
        };
        if better {
            best = Some((x, value, converged));
        }
    }

    let (x, value, converged) = best.expect("at least one start ran");
    Ok(OptResult {
        x,
        value,
        evaluations: evals,
        gradient_evals: grads,
        elapsed_secs: t0.elapsed().as_secs_f64(),
        converged,
        starts: summaries,
    })
}

/// Projected Nelder–Mead settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineConfig {
    /// Initial simplex displacement per coordinate.
    pub initial_step: f64,
    /// Relative per-coordinate simplex-diameter tolerance.
    pub tol: f64,
    /// Maximum objective evaluations.
    pub max_evals: usize,
}

impl Default for RefineConfig {
    fn default() -> RefineConfig {
        RefineConfig { initial_step: 0.02, tol: 1e-4, max_evals: 10_000 }
    }
}

/// Polish a candidate by derivative-free local search on the true
/// objective.
///
/// Nelder–Mead runs on raw coordinates, but every evaluation first projects
/// the point onto the feasible set, so the simplex may wander while all
/// scores come from feasible points. The best projected point ever seen —
/// the projected start included — is returned, so the result never falls
/// below the start's value.
pub fn local_refine(
    problem: &OptProblem,
    x0: &[f64],
    cfg: &RefineConfig,
) -> Result<OptResult> {
    let t0 = Instant::now();
    let dim = problem.dim();
    if x0.len() != dim {
        return Err(Error::config(format!(
            "start has {} coordinates, problem has {dim}",
            x0.len()
        )));
    }
    if cfg.max_evals == 0 {
        return Err(Error::config("refinement needs a positive evaluation budget"));
    }
    let f = problem.objective;
    let cons = &problem.constraints;
    let mut evals = 0u64;
    let mut best_x: Option<Vec<f64>> = None;
    let mut best_v = f64::NEG_INFINITY;

    // Maximize f(project(x)); Nelder-Mead below minimizes the negation.
    let score = |x: &[f64], evals: &mut u64, best_x: &mut Option<Vec<f64>>, best_v: &mut f64| -> f64 {
        let mut p = x.to_vec();
        cons.project(&mut p, 1e-12, 500);
        *evals += 1;
        let v = f.value(&p);
        if v > *best_v {
            *best_v = v;
            *best_x = Some(p);
        }
        if v.is_nan() {
            f64::INFINITY
        } else {
            -v
        }
    };

    // Initial simplex: x0 plus one displaced vertex per coordinate.
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(x0.to_vec());
    for k in 0..dim {
        let mut v = x0.to_vec();
        v[k] += cfg.initial_step;
        simplex.push(v);
    }
    let mut scores: Vec<f64> = simplex
        .iter()
        .map(|v| score(v, &mut evals, &mut best_x, &mut best_v))
        .collect();

    const RHO: f64 = 1.0; // reflection
    const CHI: f64 = 2.0; // expansion
    const GAMMA: f64 = 0.5; // contraction
    const SIGMA: f64 = 0.5; // shrink

    while evals < cfg.max_evals as u64 {
        // Order vertices best (lowest negated score) first.
        let mut idx: Vec<usize> = (0..simplex.len()).collect();
        idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
        let reorder: Vec<Vec<f64>> = idx.iter().map(|&i| simplex[i].clone()).collect();
        let rescores: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        simplex = reorder;
        scores = rescores;

        // Convergence: per-coordinate simplex diameter within tolerance.
        let tight = (0..dim).all(|k| {
            let b = simplex[0][k];
            simplex
                .iter()
                .all(|v| (v[k] - b).abs() <= (cfg.tol * b.abs()).max(1e-8))
        });
        if tight {
            let (x, value) = (best_x.clone().unwrap(), best_v);
            return Ok(OptResult {
                x,
                value,
                evaluations: evals,
                gradient_evals: 0,
                elapsed_secs: t0.elapsed().as_secs_f64(),
                converged: true,
                starts: Vec::new(),
            });
        }

        // Centroid of all but the worst vertex.
        let worst = simplex.len() - 1;
        let mut centroid = vec![0.0; dim];
        for v in &simplex[..worst] {
            for (ck, vk) in centroid.iter_mut().zip(v) {
                *ck += vk;
            }
        }
        for ck in &mut centroid {
            *ck /= worst as f64;
        }

        let blend = |a: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(c, w)| c + a * (c - w))
                .collect()
        };
        let reflected = blend(RHO);
        let fr = score(&reflected, &mut evals, &mut best_x, &mut best_v);
        if fr < scores[0] {
            let expanded = blend(RHO * CHI);
            let fe = score(&expanded, &mut evals, &mut best_x, &mut best_v);
            if fe < fr {
                simplex[worst] = expanded;
                scores[worst] = fe;
            } else {
                simplex[worst] = reflected;
                scores[worst] = fr;
            }
        } else if fr < scores[worst - 1] {
            simplex[worst] = reflected;
            scores[worst] = fr;
        } else {
            let contracted = if fr < scores[worst] {
                blend(RHO * GAMMA)
            } else {
                blend(-GAMMA)
            };
            let fc = score(&contracted, &mut evals, &mut best_x, &mut best_v);
            if fc < scores[worst].min(fr) {
                simplex[worst] = contracted;
                scores[worst] = fc;
            } else {
                // Shrink toward the best vertex.
                for v in 1..simplex.len() {
                    let shrunk: Vec<f64> = simplex[0]
                        .iter()
                        .zip(&simplex[v])
                        .map(|(b, w)| b + SIGMA * (w - b))
                        .collect();
                    scores[v] = score(&shrunk, &mut evals, &mut best_x, &mut best_v);
                    simplex[v] = shrunk;
                }
            }
        }
    }

    let (x, value) = (best_x.unwrap(), best_v);
    Ok(OptResult {
        x,
        value,
        evaluations: evals,
        gradient_evals: 0,
        elapsed_secs: t0.elapsed().as_secs_f64(),
        converged: false,
        starts: Vec::new(),
    })
}

/// How long the evolution strategy may run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum IsresBudget {
    /// Wall-clock seconds. Generations complete; the loop exits once the
    /// elapsed time passes the budget.
    Wall(f64),
    /// Objective-evaluation count, for bit-reproducible runs.
    Evals(u64),
}

/// Evolution-strategy settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsresConfig {
    /// Population size; defaults to `min(20 d, 400)`.
    #[serde(default)]
    pub population: Option<usize>,
    /// Probability of comparing by objective when ranking an infeasible
    /// pair.
    #[serde(default = "default_pf")]
    pub pf: f64,
    /// Run budget.
    pub budget: IsresBudget,
    /// Stream seed.
    #[serde(default)]
    pub seed: u64,
}

fn default_pf() -> f64 {
    0.45
}

impl IsresConfig {
    /// An evaluation-count budget with default population and ranking
    /// probability.
    pub fn with_evals(evals: u64, seed: u64) -> IsresConfig {
        IsresConfig {
            population: None,
            pf: default_pf(),
            budget: IsresBudget::Evals(evals),
            seed,
        }
    }
}

/// Maximize with a self-adaptive evolution strategy under stochastic
/// ranking.
///
/// A `(mu, lambda)` strategy with `lambda = min(20 d, 400)` and `mu =
/// lambda / 7`: offspring mutate parent coordinates with per-coordinate
/// log-normally adapted step sizes, clamp to the box, and are ranked by a
/// stochastic bubble sort that compares objective values with probability
/// `pf` (always, for feasible pairs) and constraint violation `sum
/// max(0, c_k)^2` otherwise. Runs at least one generation; always reports
/// `converged = false` since it stops on budget, not on a criterion. The
/// returned point is the best feasible individual ever seen (fallback:
/// smallest violation), projected and re-evaluated.
pub fn isres_baseline(problem: &OptProblem, cfg: &IsresConfig) -> Result<OptResult> {
    let t0 = Instant::now();
    let dim = problem.dim();
    if dim == 0 {
        return Err(Error::config("evolution strategy needs at least one coordinate"));
    }
    if !(0.0..=1.0).contains(&cfg.pf) {
        return Err(Error::config("pf must lie in [0, 1]"));
    }
    let f = problem.objective;
    let cons = &problem.constraints;
    let lambda = cfg.population.unwrap_or_else(|| (20 * dim).min(400)).max(2);
    let mu = (lambda / 7).max(1);
    let nf = dim as f64;
    let tau = 1.0 / (2.0 * nf.sqrt()).sqrt();
    let tau_prime = 1.0 / (2.0 * nf).sqrt();

    let range: Vec<f64> = problem
        .lo
        .iter()
        .zip(&problem.hi)
        .map(|(l, h)| (h - l).max(0.0))
        .collect();
    let sigma_floor: Vec<f64> = range.iter().map(|r| 1e-12 * r.max(1.0)).collect();

    let violation = |x: &[f64]| -> f64 {
        cons.constraints
            .iter()
            .map(|c| c.value(x).max(0.0).powi(2))
            .sum()
    };

    // Generation 0: uniform in the box, sigma at range / sqrt(dim).
    let mut rng = stream_rng(cfg.seed, 0);
    let mut pop_x: Vec<Vec<f64>> = (0..lambda)
        .map(|_| {
            (0..dim)
                .map(|k| {
                    let u: f64 = rng.random();
                    problem.lo[k] + u * range[k]
                })
                .collect()
        })
        .collect();
    let mut pop_sigma: Vec<Vec<f64>> =
        vec![range.iter().map(|r| r / nf.sqrt()).collect(); lambda];

    let mut evals = 0u64;
    let mut best: Option<(Vec<f64>, f64)> = None; // feasible best
    let mut least_bad: Option<(Vec<f64>, f64)> = None; // smallest violation

    let mut generation = 0u64;
    loop {
        // Evaluate.
        let mut fx = Vec::with_capacity(lambda);
        let mut phi = Vec::with_capacity(lambda);
        for x in &pop_x {
            evals += 1;
            let v = f.value(x);
            let p = violation(x);
            fx.push(if v.is_nan() { f64::NEG_INFINITY } else { v });
            phi.push(p);
            if p <= 1e-9 {
                match &best {
                    Some((_, bv)) if *bv >= v => {}
                    _ => best = Some((x.clone(), v)),
                }
            }
            match &least_bad {
                Some((_, lp)) if *lp <= p => {}
                _ => least_bad = Some((x.clone(), p)),
            }
        }

        let done = match cfg.budget {
            IsresBudget::Wall(secs) => t0.elapsed().as_secs_f64() >= secs,
            IsresBudget::Evals(n) => evals >= n,
        };
        if done {
            break;
        }

        // Stochastic ranking: bubble passes with probabilistic criterion.
        let mut order: Vec<usize> = (0..lambda).collect();
        let mut rank_rng = stream_rng(cfg.seed, 1 + 2 * generation);
        for _ in 0..lambda {
            let mut swapped = false;
            for j in 0..lambda - 1 {
                let (a, b) = (order[j], order[j + 1]);
                let both_feasible = phi[a] == 0.0 && phi[b] == 0.0;
                let u: f64 = rank_rng.random();
                let swap = if both_feasible || u < cfg.pf {
                    fx[a] < fx[b]
                } else {
                    phi[a] > phi[b]
                };
                if swap {
                    order.swap(j, j + 1);
                    swapped = true;
                }
            }
            if !swapped {
                break;
            }
        }

        // Offspring: cycle through the mu best parents.
        let mut mut_rng = stream_rng(cfg.seed, 2 + 2 * generation);
        let mut next_x = Vec::with_capacity(lambda);
        let mut next_sigma = Vec::with_capacity(lambda);
        for j in 0..lambda {
            let p = order[j % mu];
            let global: f64 = StandardNormal.sample(&mut mut_rng);
            let mut cx = Vec::with_capacity(dim);
            let mut cs = Vec::with_capacity(dim);
            for k in 0..dim {
                let local: f64 = StandardNormal.sample(&mut mut_rng);
                let mut s =
                    pop_sigma[p][k] * (tau_prime * global + tau * local).exp();
                s = s.clamp(sigma_floor[k], range[k].max(sigma_floor[k]));
                let step: f64 = StandardNormal.sample(&mut mut_rng);
                let v = (pop_x[p][k] + s * step).clamp(problem.lo[k], problem.hi[k]);
                cs.push(s);
                cx.push(v);
            }
            next_x.push(cx);
            next_sigma.push(cs);
        }
        pop_x = next_x;
        pop_sigma = next_sigma;
        generation += 1;
    }

    let (mut x, _) = best
        .or(least_bad)
        .expect("at least one generation was evaluated");
    cons.project(&mut x, 1e-12, 500);
    evals += 1;
    let value = f.value(&x);
    Ok(OptResult {
        x,
        value,
        evaluations: evals,
        gradient_evals: 0,
        elapsed_secs: t0.elapsed().as_secs_f64(),
        converged: false,
        starts: Vec::new(),
    })
}

/// The best row of an evaluated dataset: the trivial exhaustive baseline.
///
/// Ties go to the lowest row index. Returns the row's coordinates and
/// stored value without re-evaluating anything.
pub fn brute_force_baseline(data: &Dataset) -> Result<OptResult> {
    let t0 = Instant::now();
    let idx = data
        .argmax()
        .ok_or_else(|| Error::config("brute force needs a nonempty dataset"))?;
    Ok(OptResult {
        x: data.row(idx).to_vec(),
        value: data.target(idx),
        evaluations: data.len() as u64,
        gradient_evals: 0,
        elapsed_secs: t0.elapsed().as_secs_f64(),
        converged: true,
        starts: Vec::new(),
    })
}
