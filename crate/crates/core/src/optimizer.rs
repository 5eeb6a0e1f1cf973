//! ε-greedy transmitter selection.
//!
//! Each iteration evaluates the marginal gain of every unselected candidate
//! against the current aggregate raster, keeps the candidates whose gain is
//! at least `(1 − ε)` times the best one, and picks one of those uniformly at
//! random. Randomness comes from a ChaCha8 stream seeded with the configured
//! 64-bit seed; the near-optimal set is ordered by candidate index before the
//! draw, so a run is fully determined by `(problem, config)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::TransmitterSet;
use crate::objective::{Objective, ObjectiveState};
use crate::propagation::PowerField;

/// Gains at or below this are treated as zero.
pub const GAIN_FLOOR: f64 = 1e-15;

/// Precomputed candidate fields together with the objective.
#[derive(Debug, Clone)]
pub struct PlacementProblem {
    pub fields: Vec<PowerField>,
    pub objective: Objective,
}

impl PlacementProblem {
    pub fn new(fields: Vec<PowerField>, objective: Objective) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::validation("no candidate fields"));
        }
        let n = fields[0].values.len();
        if fields.iter().any(|f| f.values.len() != n) {
            return Err(Error::validation("candidate fields differ in size"));
        }
        Ok(PlacementProblem { fields, objective })
    }

    pub fn n_candidates(&self) -> usize {
        self.fields.len()
    }

    pub fn s_eval(&self, set: &TransmitterSet) -> f64 {
        self.objective.s_eval(set, &self.fields)
    }

    /// Digest of the fields and objective configuration.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for f in &self.fields {
            for v in &f.values {
                h.update(v.to_le_bytes());
            }
        }
        h.update(format!("{:?}", self.objective.mode).as_bytes());
        h.update(serde_json::to_vec(&self.objective.weight).expect("plain data serializes"));
        for d in &self.objective.density.weights {
            h.update(d.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Termination {
    /// Stop once this many sites have been selected.
    Budget(usize),
    /// Stop once `S(T)` reaches this value.
    Coverage(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub epsilon: f64,
    pub termination: Termination,
    pub seed: u64,
    /// Candidate indices that are always part of the deployment.
    pub fixed: Vec<usize>,
    /// Use stale-gain bounds to skip evaluations. Only honored for ε = 0 and
    /// a concave utility.
    pub lazy: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            epsilon: 0.0,
            termination: Termination::Budget(1),
            seed: 0,
            fixed: Vec::new(),
            lazy: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self, n_candidates: usize) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon < 1.0) {
            return Err(Error::validation("epsilon must lie in [0, 1)"));
        }
        match self.termination {
            Termination::Budget(0) => return Err(Error::validation("budget must be at least 1")),
            Termination::Coverage(b) if !(b > 0.0 && b.is_finite()) => {
                return Err(Error::validation("coverage target must be positive"))
            }
            _ => {}
        }
        TransmitterSet::new(Vec::new(), self.fixed.clone()).validate(n_candidates)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerminatedBy {
    Budget,
    Coverage,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub chosen: usize,
    pub chosen_gain: f64,
    pub max_gain: f64,
    /// Size of the near-optimal set the choice was drawn from.
    pub omega_size: usize,
    pub value_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementResult {
    pub selection: TransmitterSet,
    /// `S` of the fixed set alone.
    pub initial_value: f64,
    pub trajectory: Vec<IterationRecord>,
    pub terminated_by: TerminatedBy,
    pub lazy_used: bool,
    pub gain_evaluations: usize,
}

impl PlacementResult {
    pub fn final_value(&self) -> f64 {
        self.trajectory
            .last()
            .map_or(self.initial_value, |r| r.value_after)
    }
}

/// `S` of the full candidate set, an upper bound for any deployment.
pub fn feasibility_precheck(problem: &PlacementProblem) -> f64 {
    let all = TransmitterSet::selected((0..problem.n_candidates()).collect::<Vec<_>>());
    problem.s_eval(&all)
}

#[derive(Debug, Clone, Copy)]
struct Bound {
    value: f64,
    index: usize,
}

impl PartialEq for Bound {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Bound {}

impl PartialOrd for Bound {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Bound {
    // Max-heap on value; lower index first among equal values.
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then_with(|| other.index.cmp(&self.index))
    }
}

/// Stale upper bounds on marginal gains. Under a concave utility gains only
/// shrink as the set grows, so a candidate whose stale bound is below the
/// best fresh gain cannot be a maximizer.
#[derive(Debug, Clone)]
pub struct LazyGainSchedule {
    heap: BinaryHeap<Bound>,
    evaluations: usize,
}

impl LazyGainSchedule {
    pub fn new(n_candidates: usize, epsilon: f64, objective: &Objective) -> Result<Self> {
        if epsilon > 0.0 {
            return Err(Error::Refused(format!(
                "lazy evaluation needs every gain when epsilon = {epsilon} > 0"
            )));
        }
        if !objective.weight.is_concave() {
            return Err(Error::Refused(
                "lazy evaluation needs a concave utility".into(),
            ));
        }
        Ok(LazyGainSchedule {
            heap: (0..n_candidates)
                .map(|index| Bound {
                    value: f64::INFINITY,
                    index,
                })
                .collect(),
            evaluations: 0,
        })
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    /// Drops a candidate from future consideration.
    fn retain(&mut self, in_set: &[bool]) {
        self.heap.retain(|b| !in_set[b.index]);
    }

    /// Returns `(max gain, maximizers in index order)` for the current state.
    pub fn next_maximizers(
        &mut self,
        state: &ObjectiveState,
        problem: &PlacementProblem,
    ) -> Option<(f64, Vec<usize>)> {
        let mut fresh: Vec<(usize, f64)> = Vec::new();
        let mut best = f64::NEG_INFINITY;
        while let Some(top) = self.heap.peek() {
            let slack = 1e-12 * best.abs();
            if !fresh.is_empty() && top.value < best - slack {
                break;
            }
            let top = self.heap.pop().expect("peeked");
            let g = state.gain(&problem.objective, &problem.fields[top.index]);
            self.evaluations += 1;
            best = best.max(g);
            fresh.push((top.index, g));
        }
        if fresh.is_empty() {
            return None;
        }
        for &(index, g) in &fresh {
            self.heap.push(Bound { value: g, index });
        }
        let mut winners: Vec<usize> = fresh
            .iter()
            .filter(|(_, g)| *g >= best)
            .map(|(i, _)| *i)
            .collect();
        winners.sort_unstable();
        Some((best, winners))
    }
}

/// Runs the ε-greedy selection.
pub fn ia_spa(problem: &PlacementProblem, cfg: &OptimizerConfig) -> Result<PlacementResult> {
    let n = problem.n_candidates();
    cfg.validate(n)?;
    if let Termination::Coverage(beta) = cfg.termination {
        let bound = feasibility_precheck(problem);
        if beta > bound {
            return Err(Error::InfeasibleTarget {
                target: beta,
                bound,
            });
        }
    }

    let obj = &problem.objective;
    let mut in_set = vec![false; n];
    let mut state = ObjectiveState::empty(obj.density.len());
    for &f in &cfg.fixed {
        in_set[f] = true;
        state.add(obj, &problem.fields[f]);
    }
    let initial_value = state.value;

    let mut lazy = if cfg.lazy {
        LazyGainSchedule::new(n, cfg.epsilon, obj).ok()
    } else {
        None
    };
    if let Some(l) = lazy.as_mut() {
        l.retain(&in_set);
    }
    let lazy_used = lazy.is_some();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut selected = Vec::new();
    let mut trajectory = Vec::new();
    let mut evaluations = 0usize;

    let terminated_by = loop {
        match cfg.termination {
            Termination::Budget(k) if selected.len() >= k => break TerminatedBy::Budget,
            Termination::Coverage(beta) if state.value >= beta => break TerminatedBy::Coverage,
            _ => {}
        }
        let remaining: Vec<usize> = (0..n).filter(|&i| !in_set[i]).collect();
        if remaining.is_empty() {
            break TerminatedBy::Exhausted;
        }

        // Near-optimal set as (candidate, gain) in index order.
        let (max_gain, omega): (f64, Vec<(usize, f64)>) = match lazy.as_mut() {
            Some(l) => {
                let before = l.evaluations();
                let (best, winners) = l
                    .next_maximizers(&state, problem)
                    .expect("remaining candidates exist");
                evaluations += l.evaluations() - before;
                (best, winners.into_iter().map(|x| (x, best)).collect())
            }
            None => {
                let gains: Vec<f64> = remaining
                    .par_iter()
                    .map(|&x| state.gain(obj, &problem.fields[x]))
                    .collect();
                evaluations += gains.len();
                let best = gains.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let threshold = (1.0 - cfg.epsilon) * best;
                let omega = remaining
                    .into_iter()
                    .zip(gains)
                    .filter(|(_, g)| *g >= threshold)
                    .collect();
                (best, omega)
            }
        };
        if max_gain <= GAIN_FLOOR {
            break TerminatedBy::Exhausted;
        }

        let (chosen, chosen_gain) = omega[rng.gen_range(0..omega.len())];
        in_set[chosen] = true;
        if let Some(l) = lazy.as_mut() {
            l.retain(&in_set);
        }
        state.add(obj, &problem.fields[chosen]);
        selected.push(chosen);
        trajectory.push(IterationRecord {
            chosen,
            chosen_gain,
            max_gain,
            omega_size: omega.len(),
            value_after: state.value,
        });
    };

    Ok(PlacementResult {
        selection: TransmitterSet::new(selected, cfg.fixed.clone()),
        initial_value,
        trajectory,
        terminated_by,
        lazy_used,
        gain_evaluations: evaluations,
    })
}
