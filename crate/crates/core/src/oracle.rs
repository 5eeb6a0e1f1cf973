//! Independent verification: exhaustive k-subset search, approximation
//! bound certification, the uniform random placement baseline, and a
//! randomized property suite for monotonicity, diminishing returns and the
//! layer-cake identity.

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{report, MetricsReport, TransmitterSet};
use crate::objective::{s_integral_oracle, KappaSpacing};
use crate::optimizer::{PlacementProblem, PlacementResult};
use crate::propagation::RadioConfig;

pub const DEFAULT_SUBSET_CAP: u128 = 200_000;

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForceResult {
    /// Best k-subset of the non-fixed candidates, lexicographically first among ties.
    pub best_subset: Vec<usize>,
    pub fixed: Vec<usize>,
    /// `S(best ∪ fixed)`.
    pub best_value: f64,
    pub subsets_evaluated: u128,
    /// Number of subsets attaining `best_value` exactly.
    pub ties: usize,
    pub problem_fingerprint: String,
}

/// Exact maximizer of `S(T ∪ fixed)` over all `k`-subsets `T` of the
/// remaining candidates.
pub fn brute_force_optimal(
    problem: &PlacementProblem,
    k: usize,
    fixed: &[usize],
    cap: u128,
) -> Result<BruteForceResult> {
    TransmitterSet::new(Vec::new(), fixed.to_vec()).validate(problem.n_candidates())?;
    let pool: Vec<usize> = (0..problem.n_candidates())
        .filter(|i| !fixed.contains(i))
        .collect();
    if k == 0 || k > pool.len() {
        return Err(Error::validation(format!(
            "k = {k} must lie in 1..={}",
            pool.len()
        )));
    }
    let required = binomial(pool.len(), k);
    if required > cap {
        return Err(Error::CapExceeded { required, cap });
    }
    let subsets: Vec<Vec<usize>> = pool.iter().copied().combinations(k).collect();
    let values: Vec<f64> = subsets
        .par_iter()
        .map(|s| problem.s_eval(&TransmitterSet::new(s.clone(), fixed.to_vec())))
        .collect();
    let (mut best, mut best_value, mut ties) = (0usize, f64::NEG_INFINITY, 0usize);
    for (i, &v) in values.iter().enumerate() {
        if v > best_value {
            best = i;
            best_value = v;
            ties = 1;
        } else if v == best_value {
            ties += 1;
        }
    }
    Ok(BruteForceResult {
        best_subset: subsets[best].clone(),
        fixed: fixed.to_vec(),
        best_value,
        subsets_evaluated: values.len() as u128,
        ties,
        problem_fingerprint: problem.fingerprint(),
    })
}

/// `1 − exp(−n(1 − ε)/k)`.
pub fn bound_constant(n: usize, k: usize, epsilon: f64) -> f64 {
    1.0 - (-(n as f64) * (1.0 - epsilon) / k as f64).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub n: usize,
    pub k: usize,
    pub epsilon: f64,
    pub bound_constant: f64,
    /// Greedy improvement over the fixed set divided by the optimal improvement.
    pub ratio: f64,
    /// `ratio − bound_constant`.
    pub margin: f64,
    pub pass: bool,
}

/// Checks `S(T_n) − S(F) ≥ (1 − e^{−n(1−ε)/k}) · (S(T*_k) − S(F))`, where `F`
/// is the fixed set (empty in the plain setting, where `S(∅) = 0`).
pub fn certify_bound(
    problem: &PlacementProblem,
    greedy: &PlacementResult,
    oracle: &BruteForceResult,
    epsilon: f64,
) -> Result<BoundCertificate> {
    if problem.fingerprint() != oracle.problem_fingerprint {
        return Err(Error::ProblemMismatch(
            "brute-force result was computed on a different problem".into(),
        ));
    }
    if greedy.selection.fixed != oracle.fixed {
        return Err(Error::ProblemMismatch("fixed sets differ".into()));
    }
    let n = greedy.selection.selected.len();
    let k = oracle.best_subset.len();
    let base = greedy.initial_value;
    let achieved = greedy.final_value() - base;
    let optimal = oracle.best_value - base;
    let c = bound_constant(n, k, epsilon);
    let ratio = if optimal > 0.0 {
        achieved / optimal
    } else {
        1.0
    };
    Ok(BoundCertificate {
        n,
        k,
        epsilon,
        bound_constant: c,
        ratio,
        margin: ratio - c,
        pass: achieved >= c * optimal - 1e-12,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineDraw {
    pub subset: Vec<usize>,
    pub value: f64,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub draws: Vec<BaselineDraw>,
    pub averaged: MetricsReport,
}

/// Averages metrics over `draws` uniform subsets of `count` candidates.
pub fn random_baseline(
    problem: &PlacementProblem,
    radio: &RadioConfig,
    count: usize,
    draws: usize,
    seed: u64,
) -> Result<BaselineResult> {
    let n = problem.n_candidates();
    if count == 0 || count > n {
        return Err(Error::validation(format!(
            "cannot draw {count} towers from {n} candidates"
        )));
    }
    if draws == 0 {
        return Err(Error::validation("need at least one draw"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(draws);
    for _ in 0..draws {
        let mut subset = rand::seq::index::sample(&mut rng, n, count).into_vec();
        subset.sort_unstable();
        let set = TransmitterSet::selected(subset.clone());
        out.push(BaselineDraw {
            value: problem.s_eval(&set),
            report: report(&set, &problem.fields, radio, problem.objective.mode)?,
            subset,
        });
    }
    let reports: Vec<MetricsReport> = out.iter().map(|d| d.report.clone()).collect();
    Ok(BaselineResult {
        averaged: MetricsReport::average(&reports)?,
        draws: out,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub monotone_pairs: usize,
    pub submodular_triples: usize,
    pub equivalence_sets: usize,
    pub kappa_samples: usize,
    pub kappa_spacing: KappaSpacing,
    pub seed: u64,
}

impl SuiteConfig {
    /// `trials` diminishing-returns triples, a fifth as many nesting pairs,
    /// and up to 20 layer-cake checks.
    pub fn from_trials(trials: usize, seed: u64) -> Self {
        SuiteConfig {
            monotone_pairs: trials.div_ceil(5),
            submodular_triples: trials,
            equivalence_sets: trials.min(20),
            kappa_samples: 100_000,
            kappa_spacing: KappaSpacing::Log1p,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub t: Option<usize>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub trials: usize,
    pub tolerance: f64,
    pub pass: bool,
    pub skipped: Option<String>,
    pub counterexamples: Vec<Counterexample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub checks: Vec<PropertyCheck>,
    pub warnings: Vec<String>,
}

impl SuiteReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn random_subset(rng: &mut ChaCha8Rng, pool: &[usize], size: usize) -> Vec<usize> {
    let mut v = pool.to_vec();
    v.shuffle(rng);
    v.truncate(size);
    v.sort_unstable();
    v
}

/// Randomized checks of monotonicity (`S(A) ≤ S(B)` for `A ⊆ B`),
/// diminishing returns (`G(t|A) ≥ G(t|B)`), and agreement between the
/// closed-form and layer-cake evaluations of `S`. Failures are collected,
/// not raised.
pub fn property_suite(problem: &PlacementProblem, cfg: &SuiteConfig) -> SuiteReport {
    const MONOTONE_TOL: f64 = 1e-12;
    const SUBMODULAR_TOL: f64 = 1e-9;
    const EQUIVALENCE_TOL: f64 = 1e-3;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = problem.n_candidates();
    let all: Vec<usize> = (0..n).collect();
    let mut warnings = Vec::new();
    if cfg.monotone_pairs + cfg.submodular_triples + cfg.equivalence_sets == 0 {
        warnings.push("no trials requested; every check passes vacuously".to_string());
    }

    let mut mono = Vec::new();
    for _ in 0..cfg.monotone_pairs {
        let b = {
            let size = rng.gen_range(1..=n);
            random_subset(&mut rng, &all, size)
        };
        let a = {
            let size = rng.gen_range(0..=b.len());
            random_subset(&mut rng, &b, size)
        };
        let (sa, sb) = (
            problem.s_eval(&TransmitterSet::selected(a.clone())),
            problem.s_eval(&TransmitterSet::selected(b.clone())),
        );
        if sa > sb + MONOTONE_TOL {
            mono.push(Counterexample {
                a,
                b,
                t: None,
                lhs: sa,
                rhs: sb,
            });
        }
    }

    let mut dr = Vec::new();
    let mut dr_skip = None;
    if n < 2 && cfg.submodular_triples > 0 {
        dr_skip = Some("needs at least two candidates".to_string());
    } else {
        for _ in 0..cfg.submodular_triples {
            let b = {
                let size = rng.gen_range(0..n);
                random_subset(&mut rng, &all, size)
            };
            let rest: Vec<usize> = all.iter().copied().filter(|i| !b.contains(i)).collect();
            let t = rest[rng.gen_range(0..rest.len())];
            let a = {
                let size = rng.gen_range(0..=b.len());
                random_subset(&mut rng, &b, size)
            };
            let obj = &problem.objective;
            let ga = obj
                .gain(t, &TransmitterSet::selected(a.clone()), &problem.fields)
                .expect("t not in A");
            let gb = obj
                .gain(t, &TransmitterSet::selected(b.clone()), &problem.fields)
                .expect("t not in B");
            if ga < gb - SUBMODULAR_TOL {
                dr.push(Counterexample {
                    a,
                    b,
                    t: Some(t),
                    lhs: ga,
                    rhs: gb,
                });
            }
        }
    }

    let mut eq = Vec::new();
    let mut eq_skip = None;
    if problem.objective.weight.marginal(0.0).is_none() {
        eq_skip = Some("utility table has no closed-form marginal weight".to_string());
    } else {
        for _ in 0..cfg.equivalence_sets {
            let t = {
                let size = rng.gen_range(0..=n);
                random_subset(&mut rng, &all, size)
            };
            let set = TransmitterSet::selected(t.clone());
            let closed = problem.s_eval(&set);
            let layered = s_integral_oracle(
                &set,
                &problem.fields,
                &problem.objective,
                cfg.kappa_samples,
                cfg.kappa_spacing,
            )
            .expect("marginal weight available");
            if (layered - closed).abs() / closed.max(1e-12) >= EQUIVALENCE_TOL {
                eq.push(Counterexample {
                    a: t,
                    b: Vec::new(),
                    t: None,
                    lhs: layered,
                    rhs: closed,
                });
            }
        }
    }

    let check =
        |name: &str, trials, tolerance, skipped: Option<String>, cx: Vec<Counterexample>| {
            PropertyCheck {
                name: name.to_string(),
                trials: if skipped.is_some() { 0 } else { trials },
                tolerance,
                pass: cx.is_empty(),
                skipped,
                counterexamples: cx,
            }
        };
    SuiteReport {
        checks: vec![
            check("monotonicity", cfg.monotone_pairs, MONOTONE_TOL, None, mono),
            check(
                "diminishing_returns",
                cfg.submodular_triples,
                SUBMODULAR_TOL,
                dr_skip,
                dr,
            ),
            check(
                "layer_cake_equivalence",
                cfg.equivalence_sets,
                EQUIVALENCE_TOL,
                eq_skip,
                eq,
            ),
        ],
        warnings,
    }
}
