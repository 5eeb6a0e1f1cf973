//! The network quality functional
//!
//! ```text
//! S(T) = Σ_y f(y) · W̄(P(y, T))
//! ```
//!
//! where `P(y, T)` is the aggregated SNR at cell `y`, `f` a priority density
//! over the receiver grid and `W̄` a non-decreasing utility with `W̄(0) = 0`.
//! The same quantity can be written as a layer-cake integral over SNR levels,
//! `∫₀ᴹ w(κ) · mass{y : P(y, T) > κ} dκ` with `w = W̄'`; [`s_integral_oracle`]
//! evaluates that form by quadrature as an independent check.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{Aggregation, TransmitterSet};
use crate::propagation::PowerField;
use crate::scene::{ReceiverGrid, Scene};

/// Utility families `W̄`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum WeightSpec {
    /// `ln(1 + x)`.
    #[default]
    Log1p,
    /// `x / (x + c)`.
    Saturating { c: f64 },
    /// Piecewise-linear through `(x, W̄(x))` knots, constant past the last knot.
    Table { points: Vec<[f64; 2]> },
}

impl WeightSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            WeightSpec::Log1p => Ok(()),
            WeightSpec::Saturating { c } => {
                if c.is_finite() && *c > 0.0 {
                    Ok(())
                } else {
                    Err(Error::validation("saturating weight needs c > 0"))
                }
            }
            WeightSpec::Table { points } => {
                if points.len() < 2 {
                    return Err(Error::validation("weight table needs at least two points"));
                }
                if points[0] != [0.0, 0.0] {
                    return Err(Error::validation("weight table must start at (0, 0)"));
                }
                if points.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::validation("weight table has non-finite entries"));
                }
                for w in points.windows(2) {
                    if w[1][0] <= w[0][0] {
                        return Err(Error::validation("weight table x values must increase"));
                    }
                    if w[1][1] < w[0][1] {
                        return Err(Error::validation("weight table must be non-decreasing"));
                    }
                }
                Ok(())
            }
        }
    }

    /// `W̄(x)` without clamping.
    pub fn wbar(&self, x: f64) -> f64 {
        match self {
            WeightSpec::Log1p => x.ln_1p(),
            WeightSpec::Saturating { c } => x / (x + c),
            WeightSpec::Table { points } => {
                if x <= 0.0 {
                    return 0.0;
                }
                let i = points.partition_point(|p| p[0] <= x);
                if i >= points.len() {
                    return points[points.len() - 1][1];
                }
                let ([x0, y0], [x1, y1]) = (points[i - 1], points[i]);
                y0 + (x - x0) / (x1 - x0) * (y1 - y0)
            }
        }
    }

    /// Closed-form derivative `w(κ)`, when one exists.
    pub fn marginal(&self, kappa: f64) -> Option<f64> {
        match self {
            WeightSpec::Log1p => Some(1.0 / (1.0 + kappa)),
            WeightSpec::Saturating { c } => Some(c / ((kappa + c) * (kappa + c))),
            WeightSpec::Table { .. } => None,
        }
    }

    pub fn is_concave(&self) -> bool {
        match self {
            WeightSpec::Log1p | WeightSpec::Saturating { .. } => true,
            WeightSpec::Table { points } => {
                let slopes: Vec<f64> = points
                    .windows(2)
                    .map(|w| (w[1][1] - w[0][1]) / (w[1][0] - w[0][0]))
                    .collect();
                slopes
                    .windows(2)
                    .all(|s| s[1] <= s[0] * (1.0 + 1e-12) + 1e-300)
            }
        }
    }
}

/// Non-negative cell weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorityDensity {
    pub weights: Vec<f64>,
}

impl PriorityDensity {
    /// Normalizes arbitrary non-negative weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = weights
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::validation(format!(
                "density weight {v} at cell {i} is invalid"
            )));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::validation("density has zero total mass"));
        }
        Ok(PriorityDensity {
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(n_cells: usize) -> Result<Self> {
        Self::from_weights(vec![1.0; n_cells])
    }

    /// Uniform over cells whose centers are outdoors.
    pub fn uniform_outdoor(scene: &Scene, grid: &ReceiverGrid) -> Result<Self> {
        Self::from_weights(
            grid.centers()
                .map(|c| if scene.is_indoor(c) { 0.0 } else { 1.0 })
                .collect(),
        )
    }

    pub fn point_mass(cell: usize, n_cells: usize) -> Result<Self> {
        let mut w = vec![0.0; n_cells];
        *w.get_mut(cell)
            .ok_or_else(|| Error::validation("point mass outside grid"))? = 1.0;
        Self::from_weights(w)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Upper bound `M` on any aggregate value reachable from the candidate set.
pub fn compute_m(fields: &[PowerField], mode: Aggregation) -> f64 {
    let Some(first) = fields.first() else {
        return 0.0;
    };
    match mode {
        Aggregation::Max => fields.iter().map(PowerField::max_value).fold(0.0, f64::max),
        Aggregation::Sum => (0..first.values.len())
            .map(|y| fields.iter().map(|f| f.values[y]).sum::<f64>())
            .fold(0.0, f64::max),
    }
}

/// Aggregation mode, utility and density, plus the bound `M` derived from
/// the candidate fields.
#[derive(Debug)]
pub struct Objective {
    pub mode: Aggregation,
    pub weight: WeightSpec,
    pub density: PriorityDensity,
    bound: f64,
    clamped: AtomicU64,
}

impl Clone for Objective {
    fn clone(&self) -> Self {
        Objective {
            mode: self.mode,
            weight: self.weight.clone(),
            density: self.density.clone(),
            bound: self.bound,
            clamped: AtomicU64::new(self.clamped.load(Ordering::Relaxed)),
        }
    }
}

impl Objective {
    pub fn new(
        mode: Aggregation,
        weight: WeightSpec,
        density: PriorityDensity,
        fields: &[PowerField],
    ) -> Result<Self> {
        weight.validate()?;
        if let Some(f) = fields.first() {
            if f.values.len() != density.len() {
                return Err(Error::validation(format!(
                    "density has {} cells but the grid has {}",
                    density.len(),
                    f.values.len()
                )));
            }
        }
        Ok(Objective {
            mode,
            weight,
            density,
            bound: compute_m(fields, mode),
            clamped: AtomicU64::new(0),
        })
    }

    /// The bound `M`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// How many evaluations saw an aggregate above `M` and were clamped.
    pub fn clamp_count(&self) -> u64 {
        self.clamped.load(Ordering::Relaxed)
    }

    /// `W̄(min(x, M))`.
    pub fn wbar(&self, x: f64) -> f64 {
        let x = if x > self.bound {
            // Subset sums can exceed the full sum by an ulp; only count real excursions.
            if x > self.bound * (1.0 + 1e-9) {
                self.clamped.fetch_add(1, Ordering::Relaxed);
            }
            self.bound
        } else {
            x
        };
        self.weight.wbar(x)
    }

    pub fn state(&self, set: &TransmitterSet, fields: &[PowerField]) -> ObjectiveState {
        let mut st = ObjectiveState::empty(self.density.len());
        for t in set.all() {
            st.add(self, &fields[t]);
        }
        st
    }

    /// `S(T)`; zero for the empty set.
    pub fn s_eval(&self, set: &TransmitterSet, fields: &[PowerField]) -> f64 {
        self.state(set, fields).value
    }

    /// `S(T ∪ {x}) − S(T)` computed incrementally.
    pub fn gain(&self, x: usize, set: &TransmitterSet, fields: &[PowerField]) -> Result<f64> {
        if set.all().any(|t| t == x) {
            return Err(Error::validation(format!(
                "candidate {x} is already in the set"
            )));
        }
        Ok(self.state(set, fields).gain(self, &fields[x]))
    }
}

/// Aggregate raster for a transmitter set, with cached per-cell utilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveState {
    pub aggregate: Vec<f64>,
    utility: Vec<f64>,
    /// `S` of the current set.
    pub value: f64,
}

impl ObjectiveState {
    pub fn empty(n_cells: usize) -> Self {
        ObjectiveState {
            aggregate: vec![0.0; n_cells],
            utility: vec![0.0; n_cells],
            value: 0.0,
        }
    }

    pub fn add(&mut self, obj: &Objective, field: &PowerField) {
        for ((a, u), &p) in self
            .aggregate
            .iter_mut()
            .zip(self.utility.iter_mut())
            .zip(&field.values)
        {
            *a = obj.mode.combine(*a, p);
            *u = obj.wbar(*a);
        }
        self.value = obj
            .density
            .weights
            .iter()
            .zip(&self.utility)
            .map(|(d, u)| d * u)
            .sum();
    }

    /// Marginal gain of adding `field`; only cells whose aggregate changes contribute.
    pub fn gain(&self, obj: &Objective, field: &PowerField) -> f64 {
        let mut g = 0.0;
        for (((&a, &u), &p), &d) in self
            .aggregate
            .iter()
            .zip(&self.utility)
            .zip(&field.values)
            .zip(&obj.density.weights)
        {
            if d == 0.0 {
                continue;
            }
            let next = obj.mode.combine(a, p);
            if next != a {
                g += d * (obj.wbar(next) - u);
            }
        }
        g
    }
}

/// Node placement for the κ quadrature.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KappaSpacing {
    /// Uniform nodes in κ over `[0, M]`.
    Linear,
    /// Uniform nodes in `s = ln(1 + κ)` over `[0, ln(1 + M)]`, integrating
    /// `w(κ(s)) · (1 + κ(s)) · mass(κ(s))` in `s`. Suited to SNR ranges that
    /// span many decades.
    #[default]
    Log1p,
}

/// Layer-cake evaluation of `S(T)` by trapezoid quadrature over SNR levels.
///
/// Uses only the marginal weight `w` and the density mass above each level,
/// never the closed-form `W̄`.
pub fn s_integral_oracle(
    set: &TransmitterSet,
    fields: &[PowerField],
    obj: &Objective,
    kappa_samples: usize,
    spacing: KappaSpacing,
) -> Result<f64> {
    if obj.weight.marginal(0.0).is_none() {
        return Err(Error::Unsupported(
            "weight table has no closed-form marginal weight".into(),
        ));
    }
    if kappa_samples < 2 {
        return Err(Error::validation("need at least two κ samples"));
    }
    let n = obj.density.len();
    let mut agg = vec![0.0f64; n];
    for t in set.all() {
        for (a, &p) in agg.iter_mut().zip(&fields[t].values) {
            *a = obj.mode.combine(*a, p);
        }
    }
    let m = obj.bound();
    let mut cells: Vec<(f64, f64)> = agg
        .into_iter()
        .map(|a| a.min(m))
        .zip(obj.density.weights.iter().copied())
        .collect();
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    // suffix[i] = density mass of cells[i..]
    let mut suffix = vec![0.0; cells.len() + 1];
    for i in (0..cells.len()).rev() {
        suffix[i] = suffix[i + 1] + cells[i].1;
    }
    // Nodes landing on a jump take the midpoint of the two one-sided limits.
    let (mut below, mut at_or_below) = (0usize, 0usize);
    let mut mass_above = |kappa: f64| {
        while below < cells.len() && cells[below].0 < kappa {
            below += 1;
        }
        while at_or_below < cells.len() && cells[at_or_below].0 <= kappa {
            at_or_below += 1;
        }
        0.5 * (suffix[below] + suffix[at_or_below])
    };

    let w = |k: f64| obj.weight.marginal(k).expect("checked above");
    let intervals = kappa_samples - 1;
    let (upper, to_kappa, jacobian): (f64, fn(f64) -> f64, fn(f64) -> f64) = match spacing {
        KappaSpacing::Linear => (m, |s| s, |_| 1.0),
        KappaSpacing::Log1p => (m.ln_1p(), f64::exp_m1, |k| 1.0 + k),
    };
    if upper == 0.0 {
        return Ok(0.0);
    }
    let h = upper / intervals as f64;
    let mut total = 0.0;
    for i in 0..=intervals {
        let s = if i == intervals { upper } else { h * i as f64 };
        let k = to_kappa(s).min(m);
        // One-sided limits at the ends of (0, M).
        let mass = if i == 0 {
            suffix[cells.partition_point(|c| c.0 <= 0.0)]
        } else if i == intervals {
            suffix[cells.partition_point(|c| c.0 < m)]
        } else {
            mass_above(k)
        };
        let f = w(k) * jacobian(k) * mass;
        total += if i == 0 || i == intervals { 0.5 * f } else { f };
    }
    Ok(total * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;
    use crate::scene::Site;
    use proptest::prelude::*;

    fn grid(n: usize) -> ReceiverGrid {
        ReceiverGrid {
            origin: Point2::new(0.0, 0.0),
            spacing: 1.0,
            rows: 1,
            cols: n,
            height: 1.5,
        }
    }

    fn fields(rows: &[Vec<f64>]) -> Vec<PowerField> {
        let g = grid(rows[0].len());
        rows.iter()
            .map(|v| PowerField {
                site: Site::new(0.0, 0.0, 0.0),
                grid: g.clone(),
                values: v.clone(),
            })
            .collect()
    }

    fn obj(mode: Aggregation, weight: WeightSpec, f: &[PowerField]) -> Objective {
        let n = f[0].values.len();
        Objective::new(mode, weight, PriorityDensity::uniform(n).unwrap(), f).unwrap()
    }

    #[test]
    fn wbar_examples() {
        assert_eq!(WeightSpec::Log1p.wbar(0.0), 0.0);
        assert_eq!(WeightSpec::Saturating { c: 1.0 }.wbar(1.0), 0.5);
        assert!((WeightSpec::Log1p.wbar(std::f64::consts::E - 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn table_validation_and_interpolation() {
        let bad_origin = WeightSpec::Table {
            points: vec![[0.0, 0.1], [1.0, 1.0]],
        };
        assert!(bad_origin.validate().is_err());
        let decreasing = WeightSpec::Table {
            points: vec![[0.0, 0.0], [1.0, 1.0], [2.0, 0.5]],
        };
        assert!(decreasing.validate().is_err());
        let t = WeightSpec::Table {
            points: vec![[0.0, 0.0], [2.0, 1.0], [4.0, 1.5]],
        };
        t.validate().unwrap();
        assert_eq!(t.wbar(1.0), 0.5);
        assert_eq!(t.wbar(3.0), 1.25);
        assert_eq!(t.wbar(10.0), 1.5);
        assert!(t.is_concave());
        let convex = WeightSpec::Table {
            points: vec![[0.0, 0.0], [1.0, 0.1], [2.0, 2.0]],
        };
        assert!(!convex.is_concave());
    }

    #[test]
    fn bound_m() {
        let one = fields(&[vec![1.0, 5.0, 2.0]]);
        assert_eq!(compute_m(&one, Aggregation::Max), 5.0);
        assert_eq!(compute_m(&one, Aggregation::Sum), 5.0);
        let disjoint = fields(&[vec![3.0, 0.0], vec![0.0, 7.0]]);
        assert_eq!(compute_m(&disjoint, Aggregation::Max), 7.0);
        let twins = fields(&[vec![1.0, 4.0], vec![1.0, 4.0]]);
        assert_eq!(compute_m(&twins, Aggregation::Sum), 8.0);
    }

    #[test]
    fn s_eval_examples() {
        let f = fields(&[vec![3.0, 8.0], vec![5.0, 1.0]]);
        let o = obj(Aggregation::Max, WeightSpec::Log1p, &f);
        assert_eq!(o.s_eval(&TransmitterSet::default(), &f), 0.0);
        let both = TransmitterSet::selected(vec![0, 1]);
        let expect = (5.0f64.ln_1p() + 8.0f64.ln_1p()) / 2.0;
        assert!((o.s_eval(&both, &f) - expect).abs() < 1e-15);

        let point = Objective::new(
            Aggregation::Max,
            WeightSpec::Log1p,
            PriorityDensity::point_mass(1, 2).unwrap(),
            &f,
        )
        .unwrap();
        assert_eq!(
            point.s_eval(&TransmitterSet::selected(vec![1]), &f),
            1.0f64.ln_1p()
        );
    }

    #[test]
    fn gain_examples() {
        let f = fields(&[
            vec![3.0, 8.0],
            vec![5.0, 1.0],
            vec![0.0, 0.0],
            vec![3.0, 8.0],
        ]);
        let o = obj(Aggregation::Max, WeightSpec::Log1p, &f);
        let empty = TransmitterSet::default();
        let single = TransmitterSet::selected(vec![0]);
        assert_eq!(o.gain(0, &empty, &f).unwrap(), o.s_eval(&single, &f));
        assert_eq!(o.gain(2, &single, &f).unwrap(), 0.0);
        assert_eq!(o.gain(3, &single, &f).unwrap(), 0.0);
        assert!(o.gain(0, &single, &f).is_err());
    }

    #[test]
    fn density_is_normalized() {
        let d = PriorityDensity::from_weights(vec![1.0, 3.0]).unwrap();
        assert_eq!(d.weights, vec![0.25, 0.75]);
        assert!(PriorityDensity::from_weights(vec![0.0, 0.0]).is_err());
        assert!(PriorityDensity::from_weights(vec![1.0, -1.0]).is_err());
    }

    #[test]
    fn density_grid_mismatch_is_rejected() {
        let f = fields(&[vec![1.0, 2.0, 3.0]]);
        assert!(Objective::new(
            Aggregation::Max,
            WeightSpec::Log1p,
            PriorityDensity::uniform(2).unwrap(),
            &f
        )
        .is_err());
    }

    #[test]
    fn clamping_is_counted() {
        let f = fields(&[vec![1.0, 2.0]]);
        let o = obj(Aggregation::Max, WeightSpec::Log1p, &f);
        assert_eq!(o.wbar(10.0), 2.0f64.ln_1p());
        assert_eq!(o.clamp_count(), 1);
    }

    #[test]
    fn oracle_empty_set_is_zero() {
        let f = fields(&[vec![3.0, 8.0]]);
        let o = obj(Aggregation::Max, WeightSpec::Log1p, &f);
        for n in [2, 10, 1000] {
            for sp in [KappaSpacing::Linear, KappaSpacing::Log1p] {
                assert_eq!(
                    s_integral_oracle(&TransmitterSet::default(), &f, &o, n, sp).unwrap(),
                    0.0
                );
            }
        }
    }

    #[test]
    fn oracle_refuses_tables() {
        let f = fields(&[vec![3.0]]);
        let o = obj(
            Aggregation::Max,
            WeightSpec::Table {
                points: vec![[0.0, 0.0], [10.0, 1.0]],
            },
            &f,
        );
        assert!(matches!(
            s_integral_oracle(
                &TransmitterSet::selected(vec![0]),
                &f,
                &o,
                100,
                KappaSpacing::Linear
            ),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn oracle_single_cell_linear_spacing() {
        let f = fields(&[vec![7.5]]);
        let o = obj(Aggregation::Max, WeightSpec::Log1p, &f);
        let t = TransmitterSet::selected(vec![0]);
        let exact = o.s_eval(&t, &f);
        let q = s_integral_oracle(&t, &f, &o, 100_000, KappaSpacing::Linear).unwrap();
        assert!(((q - exact) / exact).abs() < 1e-4);
    }

    #[test]
    fn oracle_error_shrinks_with_samples() {
        // Smooth case: a single cell at the bound, so the indicator never jumps inside (0, M).
        let f = fields(&[vec![20.0]]);
        let t = TransmitterSet::selected(vec![0]);
        for w in [WeightSpec::Log1p, WeightSpec::Saturating { c: 1.0 }] {
            let o = obj(Aggregation::Max, w, &f);
            let exact = o.s_eval(&t, &f);
            let mut prev = f64::INFINITY;
            for n in [11, 21, 41, 81, 161] {
                let err =
                    (s_integral_oracle(&t, &f, &o, n, KappaSpacing::Linear).unwrap() - exact).abs();
                assert!(err < prev, "error did not shrink at n={n}");
                prev = err;
            }
        }
    }

    proptest! {
        #[test]
        fn incremental_gain_matches_from_scratch(
            vals in prop::collection::vec(prop::collection::vec(0.0f64..1e4, 12), 4..7),
            sum_mode in any::<bool>(),
        ) {
            let f = fields(&vals);
            let mode = if sum_mode { Aggregation::Sum } else { Aggregation::Max };
            let o = obj(mode, WeightSpec::Log1p, &f);
            let n = vals.len();
            let t = TransmitterSet::selected((0..n - 1).collect::<Vec<_>>());
            let with = TransmitterSet::selected((0..n).collect::<Vec<_>>());
            let scratch = o.s_eval(&with, &f) - o.s_eval(&t, &f);
            let inc = o.gain(n - 1, &t, &f).unwrap();
            prop_assert!((inc - scratch).abs() <= 1e-12 * o.s_eval(&with, &f).max(1e-300));
        }

        #[test]
        fn oracle_matches_closed_form(
            vals in prop::collection::vec(prop::collection::vec(0.0f64..1e7, 16), 1..5),
            sum_mode in any::<bool>(),
            sat in any::<bool>(),
        ) {
            let f = fields(&vals);
            let mode = if sum_mode { Aggregation::Sum } else { Aggregation::Max };
            let w = if sat { WeightSpec::Saturating { c: 10.0 } } else { WeightSpec::Log1p };
            let o = obj(mode, w, &f);
            let t = TransmitterSet::selected((0..vals.len()).collect::<Vec<_>>());
            let exact = o.s_eval(&t, &f);
            let q = s_integral_oracle(&t, &f, &o, 100_000, KappaSpacing::Log1p).unwrap();
            prop_assert!((q - exact).abs() / exact.max(1e-12) < 1e-3);
        }
    }
}
