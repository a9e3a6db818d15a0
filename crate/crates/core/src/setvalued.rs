//! Set-valued right-hand sides `F(t, x) = conv{γ_j(t, x)} + ρ(t, x)·B`, pointwise
//! (Nemytskii) lifts, the time-hull `F̂`, and tangent selections.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::convex::{tangent_point, ConvexSet, SetKind, SetValue};
use crate::error::{check_dim, check_finite, Error, Result};

pub type VectorFn = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(f64, &DVector<f64>) -> f64 + Send + Sync>;
pub type ValueFn = Arc<dyn Fn(f64, &DVector<f64>) -> Result<SetValue> + Send + Sync>;
/// `(t, grid index, pointwise state) -> vector`.
pub type PointwiseFn = Arc<dyn Fn(f64, usize, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type PointwiseRadius = Arc<dyn Fn(f64, usize, &DVector<f64>) -> f64 + Send + Sync>;

/// Single-valued right-hand side `f(t, x)` used by the integrator.
pub trait Selection: Send + Sync {
    fn dim(&self) -> usize;
    fn select(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>>;
}

/// A plain vector field given by a closure.
#[derive(Clone)]
pub struct VectorField {
    dim: usize,
    f: VectorFn,
}

impl VectorField {
    pub fn new(
        dim: usize,
        f: impl Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self { dim, f: Arc::new(f) }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(dim, move |_, _| DVector::zeros(dim))
    }
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField").field("dim", &self.dim).finish()
    }
}

impl Selection for VectorField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn select(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim, x.len())?;
        let v = (self.f)(t, x);
        check_dim(self.dim, v.len())?;
        check_finite(&v, "vector field value")?;
        Ok(v)
    }
}

/// Pointwise reaction `φ(t, i, y) = conv{φ_j(t, i, y)} + ρ(t, i, y)·B` acting on each grid
/// node, with its pointwise constraint set.
#[derive(Clone)]
pub struct PointwiseReaction {
    dim: usize,
    generators: Vec<PointwiseFn>,
    radius: PointwiseRadius,
    constraint: ConvexSet,
}

impl PointwiseReaction {
    pub fn new(
        generators: Vec<PointwiseFn>,
        radius: PointwiseRadius,
        constraint: ConvexSet,
    ) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::InvalidInput("pointwise reaction needs a generator".into()));
        }
        Ok(Self {
            dim: constraint.dim(),
            generators,
            radius,
            constraint,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constraint(&self) -> &ConvexSet {
        &self.constraint
    }

    pub fn value(&self, t: f64, i: usize, y: &DVector<f64>) -> Result<SetValue> {
        check_dim(self.dim, y.len())?;
        let points: Vec<DVector<f64>> = self.generators.iter().map(|g| g(t, i, y)).collect();
        for p in &points {
            check_dim(self.dim, p.len())?;
            check_finite(p, "pointwise generator value")?;
        }
        let r = (self.radius)(t, i, y);
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::InvalidInput(format!("pointwise radius must be >= 0, got {r}")));
        }
        Ok(SetValue::hull(points, r))
    }

    /// Samples `φ(t, i, y) ∩ T_K(y) ≠ ∅` at the vertices/anchor of `K` and at random
    /// points of `K`.
    pub fn check_tangency(&self, grid: usize, samples: usize, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = vec![self.constraint.anchor().clone()];
        if let SetKind::Box { lo, hi } = self.constraint.kind() {
            let corner = |pick_hi: &dyn Fn(usize) -> bool| {
                DVector::from_fn(self.dim, |k, _| {
                    let b = if pick_hi(k) { hi[k] } else { lo[k] };
                    if b.is_finite() {
                        b
                    } else {
                        lo[k].max(hi[k].min(0.0))
                    }
                })
            };
            points.push(corner(&|_| false));
            points.push(corner(&|_| true));
        }
        for _ in 0..samples {
            let raw = DVector::from_fn(self.dim, |_, _| rng.random_range(-2.0..2.0));
            points.push(self.constraint.project(&raw)?);
        }
        for y in &points {
            let cone = self.constraint.tangent_cone_default(y)?;
            for i in 0..grid {
                let t = rng.random_range(0.0..1.0);
                let value = self.value(t, i, y)?;
                if tangent_point(&cone, &value, &value.barycenter(), 1e-10).is_none() {
                    return Err(Error::TangencyViolation {
                        t,
                        x: y.iter().copied().collect(),
                    });
                }
            }
        }
        Ok(())
    }

    /// The grid constraint `K^M`.
    pub fn lifted_set(&self, grid: usize) -> Result<ConvexSet> {
        if let SetKind::Box { lo, hi } = self.constraint.kind() {
            let n = self.dim;
            return ConvexSet::boxed(
                DVector::from_fn(n * grid, |k, _| lo[k % n]),
                DVector::from_fn(n * grid, |k, _| hi[k % n]),
            );
        }
        ConvexSet::product(vec![self.constraint.clone(); grid])
    }
}

#[derive(Clone)]
enum Repr {
    Hull {
        generators: Vec<VectorFn>,
        radius: ScalarFn,
    },
    Nemytskii {
        reaction: PointwiseReaction,
        grid: usize,
    },
    Value(ValueFn),
}

/// A map with nonempty compact convex values and linear growth `‖F(t,x)‖ ≤ c(1 + ‖x‖)`.
#[derive(Clone)]
pub struct SetValuedMap {
    dim: usize,
    growth_c: f64,
    repr: Repr,
}

impl fmt::Debug for SetValuedMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.repr {
            Repr::Hull { generators, .. } => format!("hull of {} generators", generators.len()),
            Repr::Nemytskii { grid, .. } => format!("pointwise lift on {grid} nodes"),
            Repr::Value(_) => "value function".to_string(),
        };
        f.debug_struct("SetValuedMap")
            .field("dim", &self.dim)
            .field("growth_c", &self.growth_c)
            .field("kind", &kind)
            .finish()
    }
}

fn check_growth_constant(c: f64) -> Result<()> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidInput(format!("growth constant must be positive, got {c}")));
    }
    Ok(())
}

impl SetValuedMap {
    pub fn from_generators(
        dim: usize,
        generators: Vec<VectorFn>,
        radius: ScalarFn,
        growth_c: f64,
    ) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::InvalidInput("map needs at least one generator".into()));
        }
        check_growth_constant(growth_c)?;
        Ok(Self {
            dim,
            growth_c,
            repr: Repr::Hull { generators, radius },
        })
    }

    /// `F(t, x) = {f(t, x)}`.
    pub fn single_valued(
        dim: usize,
        f: impl Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        growth_c: f64,
    ) -> Result<Self> {
        Self::from_generators(dim, vec![Arc::new(f)], Arc::new(|_, _| 0.0), growth_c)
    }

    /// A map given directly by its values, e.g. a blend of other maps.
    pub fn from_value_fn(dim: usize, value: ValueFn, growth_c: f64) -> Result<Self> {
        check_growth_constant(growth_c)?;
        Ok(Self {
            dim,
            growth_c,
            repr: Repr::Value(value),
        })
    }

    /// Pointwise lift of `φ` to `grid` nodes: `F(t, u) = Π_i φ(t, i, u_i)`.
    pub fn nemytskii(reaction: PointwiseReaction, grid: usize, growth_c: f64) -> Result<Self> {
        if grid == 0 {
            return Err(Error::InvalidInput("grid must have at least one node".into()));
        }
        check_growth_constant(growth_c)?;
        Ok(Self {
            dim: reaction.dim * grid,
            growth_c,
            repr: Repr::Nemytskii { reaction, grid },
        })
    }

    /// `F(t, x) = Mx + b + ρB`.
    pub fn linear(matrix: DMatrix<f64>, offset: DVector<f64>, radius: f64) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(Error::InvalidInput("linear map needs a square matrix".into()));
        }
        check_dim(n, offset.len())?;
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::InvalidInput(format!("radius must be >= 0, got {radius}")));
        }
        if matrix.iter().chain(offset.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("linear map data must be finite".into()));
        }
        let c = matrix.norm().max(offset.norm() + radius).max(1e-12);
        Self::from_generators(
            n,
            vec![Arc::new(move |_, x| &matrix * x + &offset)],
            Arc::new(move |_, _| radius),
            c,
        )
    }

    pub fn zero(dim: usize) -> Result<Self> {
        Self::linear(DMatrix::zeros(dim, dim), DVector::zeros(dim), 0.0)
    }

    /// Constant box `Π [lo_i, hi_i]`.
    pub fn interval(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        if (0..lo.len()).any(|i| !(lo[i] <= hi[i]) || !lo[i].is_finite() || !hi[i].is_finite()) {
            return Err(Error::InvalidInput("interval needs finite lo <= hi".into()));
        }
        let c = DVector::from_fn(lo.len(), |i, _| lo[i].abs().max(hi[i].abs()))
            .norm()
            .max(1e-12);
        let (l, h) = (lo.clone(), hi.clone());
        let reaction = PointwiseReaction::new(
            vec![
                Arc::new(move |_, i, _| DVector::from_element(1, l[i])),
                Arc::new(move |_, i, _| DVector::from_element(1, h[i])),
            ],
            Arc::new(|_, _, _| 0.0),
            ConvexSet::whole(1)?,
        )?;
        Self::nemytskii(reaction, lo.len(), c)
    }

    /// `φ(y) = [0, rate·ȳ(1 − ȳ)]` with `ȳ` the state clamped to `[0, 1]`, on every node.
    /// Tangent to `[0, 1]` because the value at both endpoints is `{0}`.
    pub fn logistic_interval(grid: usize, rate: f64) -> Result<Self> {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::InvalidInput(format!("rate must be >= 0, got {rate}")));
        }
        let reaction = logistic_reaction(rate)?;
        Self::nemytskii(reaction, grid, (0.25 * rate * (grid as f64).sqrt()).max(1e-12))
    }

    /// `gain · Sign(x_i)` per coordinate, with `Sign(0) = [−1, 1]`.
    pub fn regularized_sign(grid: usize, gain: f64) -> Result<Self> {
        if !gain.is_finite() {
            return Err(Error::InvalidInput("gain must be finite".into()));
        }
        let reaction = PointwiseReaction::new(
            vec![
                Arc::new(move |_, _, y| {
                    DVector::from_element(1, gain * if y[0] > 0.0 { 1.0 } else { -1.0 })
                }),
                Arc::new(move |_, _, y| {
                    DVector::from_element(1, gain * if y[0] < 0.0 { -1.0 } else { 1.0 })
                }),
            ],
            Arc::new(|_, _, _| 0.0),
            ConvexSet::whole(1)?,
        )?;
        Self::nemytskii(reaction, grid, (gain.abs() * (grid as f64).sqrt()).max(1e-12))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn growth_c(&self) -> f64 {
        self.growth_c
    }

    pub fn reaction(&self) -> Option<&PointwiseReaction> {
        match &self.repr {
            Repr::Nemytskii { reaction, .. } => Some(reaction),
            _ => None,
        }
    }

    /// `F(t, x)`.
    pub fn value(&self, t: f64, x: &DVector<f64>) -> Result<SetValue> {
        check_dim(self.dim, x.len())?;
        if !t.is_finite() {
            return Err(Error::InvalidInput(format!("time must be finite, got {t}")));
        }
        match &self.repr {
            Repr::Hull { generators, radius } => {
                let points: Vec<DVector<f64>> = generators.iter().map(|g| g(t, x)).collect();
                for p in &points {
                    check_dim(self.dim, p.len())?;
                    check_finite(p, "generator value")?;
                }
                let r = radius(t, x);
                if !(r >= 0.0) || !r.is_finite() {
                    return Err(Error::InvalidInput(format!("radius must be >= 0, got {r}")));
                }
                Ok(SetValue::hull(points, r))
            }
            Repr::Nemytskii { reaction, grid } => {
                let n = reaction.dim;
                let factors = (0..*grid)
                    .map(|i| reaction.value(t, i, &x.rows(i * n, n).into_owned()))
                    .collect::<Result<Vec<_>>>()?;
                Ok(SetValue::Product(factors))
            }
            Repr::Value(f) => {
                let v = f(t, x)?;
                check_dim(self.dim, v.dim())?;
                Ok(v)
            }
        }
    }

    /// Hull points and radius at `(t, x)`. Products are flattened to their coordinatewise
    /// generators.
    pub fn evaluate(&self, t: f64, x: &DVector<f64>) -> Result<(Vec<DVector<f64>>, f64)> {
        let v = self.value(t, x)?;
        Ok((v.hull_points(), v.radius()))
    }

    /// Inner approximation of `F̂(t, x) = cl conv F([0, t], x)` from `time_samples`
    /// uniformly spaced times.
    pub fn hull_map(&self, t: f64, x: &DVector<f64>, time_samples: usize) -> Result<SetValue> {
        if time_samples < 2 {
            return Err(Error::InvalidInput("hull_map needs at least two time samples".into()));
        }
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("hull_map time must be >= 0, got {t}")));
        }
        let values = (0..time_samples)
            .map(|k| self.value(t * k as f64 / (time_samples - 1) as f64, x))
            .collect::<Result<Vec<_>>>()?;
        Ok(merge_hulls(&values))
    }

    /// Largest sampled ratio `sup‖F(t,x)‖ / (1 + ‖x‖)` over `x` in the ball of radius
    /// `spread`. Fails if it exceeds the declared constant.
    pub fn check_growth(&self, samples: usize, spread: f64, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let t = rng.random_range(0.0..1.0);
            let x = random_in_ball(&mut rng, self.dim, spread);
            let ratio = self.value(t, &x)?.magnitude() / (1.0 + x.norm());
            worst = worst.max(ratio);
        }
        if worst > self.growth_c * (1.0 + 1e-12) {
            return Err(Error::Precondition(format!(
                "sampled growth ratio {worst} exceeds declared constant {}",
                self.growth_c
            )));
        }
        Ok(worst)
    }

    /// For each `δ`, an upper bound of the excess `sup d(v, F(t, x))` over values `v` at
    /// sampled points of `B((t, x), δ)`. Samples are the axis points `x ± δe_i`, times
    /// `t ± δ`, and `random_samples` random points of the ball.
    pub fn husc_probe(
        &self,
        t: f64,
        x: &DVector<f64>,
        deltas: &[f64],
        random_samples: usize,
        seed: u64,
    ) -> Result<Vec<f64>> {
        let center = self.value(t, x)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        deltas
            .iter()
            .map(|&delta| {
                let mut probes: Vec<(f64, DVector<f64>)> = Vec::new();
                for i in 0..self.dim {
                    for s in [-1.0, 1.0] {
                        let mut y = x.clone();
                        y[i] += s * delta;
                        probes.push((t, y));
                    }
                }
                probes.push(((t - delta).max(0.0), x.clone()));
                probes.push((t + delta, x.clone()));
                for _ in 0..random_samples {
                    let dt = rng.random_range(-delta..delta);
                    probes.push(((t + dt).max(0.0), x + random_in_ball(&mut rng, self.dim, delta)));
                }
                let mut worst: f64 = 0.0;
                for (s, y) in &probes {
                    worst = worst.max(excess(&self.value(*s, y)?, &center));
                }
                Ok(worst)
            })
            .collect()
    }
}

fn logistic_reaction(rate: f64) -> Result<PointwiseReaction> {
    PointwiseReaction::new(
        vec![
            Arc::new(|_, _, _| DVector::zeros(1)),
            Arc::new(move |_, _, y| {
                let c = y[0].clamp(0.0, 1.0);
                DVector::from_element(1, rate * c * (1.0 - c))
            }),
        ],
        Arc::new(|_, _, _| 0.0),
        ConvexSet::boxed(DVector::zeros(1), DVector::from_element(1, 1.0))?,
    )
}

/// Hull of a union of values; products with matching structure stay products.
fn merge_hulls(values: &[SetValue]) -> SetValue {
    let structure = values[0].factor_dims();
    if let SetValue::Product(first) = &values[0] {
        let same = values.iter().all(|v| matches!(v, SetValue::Product(_)))
            && values.iter().all(|v| v.factor_dims() == structure);
        if same {
            let factors = (0..first.len())
                .map(|k| {
                    let column: Vec<SetValue> = values
                        .iter()
                        .map(|v| match v {
                            SetValue::Product(fs) => fs[k].clone(),
                            SetValue::Hull { .. } => unreachable!(),
                        })
                        .collect();
                    merge_hulls(&column)
                })
                .collect();
            return SetValue::Product(factors);
        }
    }
    let points = values.iter().flat_map(SetValue::hull_points).collect();
    let radius = values.iter().map(SetValue::radius).fold(0.0, f64::max);
    SetValue::hull(points, radius)
}

/// Upper bound of `sup_{v ∈ a} d(v, b)`; exact when `a` has no ball part.
fn excess(a: &SetValue, b: &SetValue) -> f64 {
    match (a, b) {
        (SetValue::Product(fa), SetValue::Product(fb)) if a.factor_dims() == b.factor_dims() => fa
            .iter()
            .zip(fb)
            .map(|(x, y)| excess(x, y).powi(2))
            .sum::<f64>()
            .sqrt(),
        _ => {
            let r = a.radius();
            a.hull_points()
                .iter()
                .map(|p| b.distance(p))
                .fold(0.0, f64::max)
                + if r > 0.0 { r } else { 0.0 }
        }
    }
}

pub(crate) fn random_in_ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> DVector<f64> {
    let g = DVector::from_fn(dim, |_, _| gaussian(rng));
    let n = g.norm().max(f64::MIN_POSITIVE);
    let r = radius * rng.random_range(0.0f64..1.0).powf(1.0 / dim as f64);
    g * (r / n)
}

pub(crate) fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box–Muller
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// How a point of `F(t, x) ∩ T_K(x)` is picked.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionRule {
    /// Nearest feasible point to the barycenter of the generators.
    Barycenter,
    /// Nearest feasible point to generator `j` (clamped to the last generator).
    Vertex(usize),
    /// Nearest feasible point to a fixed random convex combination of the generators.
    Seeded(u64),
}

/// Tangent selection `f(t, x) ∈ T_K(x)` with `d(f(t, x), F(t, x)) ≤ α`.
///
/// The exact intersection `F(t, x) ∩ T_K(x)` is tried first; if it is empty the value is
/// enlarged by `α`. A point is produced per call, so continuity in `x` is only sampled
/// (see [`TangentSelection::lipschitz_estimate`]).
#[derive(Clone, Debug)]
pub struct TangentSelection {
    map: SetValuedMap,
    set: ConvexSet,
    alpha: f64,
    rule: SelectionRule,
}

impl TangentSelection {
    pub fn new(map: SetValuedMap, set: ConvexSet, alpha: f64, rule: SelectionRule) -> Result<Self> {
        check_dim(set.dim(), map.dim())?;
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidInput(format!("alpha must be >= 0, got {alpha}")));
        }
        Ok(Self {
            map,
            set,
            alpha,
            rule,
        })
    }

    pub fn map(&self) -> &SetValuedMap {
        &self.map
    }

    pub fn set(&self) -> &ConvexSet {
        &self.set
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rule(&self) -> SelectionRule {
        self.rule
    }

    fn seed_point(&self, value: &SetValue) -> DVector<f64> {
        match self.rule {
            SelectionRule::Barycenter => value.barycenter(),
            SelectionRule::Vertex(j) => value.weighted(&mut |_, m| {
                let mut w = vec![0.0; m];
                w[j.min(m - 1)] = 1.0;
                w
            }),
            SelectionRule::Seeded(seed) => value.weighted(&mut |factor, m| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(factor as u64);
                let e: Vec<f64> = (0..m)
                    .map(|_| -rng.random_range(f64::MIN_POSITIVE..1.0).ln())
                    .collect();
                let s: f64 = e.iter().sum();
                e.into_iter().map(|v| v / s).collect()
            }),
        }
    }

    pub fn eval(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        let value = self.map.value(t, x)?;
        let cone = self.set.tangent_cone_default(x)?;
        let seed = self.seed_point(&value);
        if let Some(p) = tangent_point(&cone, &value, &seed, 1e-10) {
            return Ok(p);
        }
        if self.alpha > 0.0 {
            if let Some(p) = tangent_point(&cone, &value.enlarged(self.alpha), &seed, 1e-10) {
                return Ok(p);
            }
        }
        Err(Error::TangencyViolation {
            t,
            x: x.iter().copied().collect(),
        })
    }

    /// Largest difference quotient `‖f(x) − f(y)‖ / ‖x − y‖` over random pairs in
    /// `K ∩ B(center, radius)` at separation `≤ radius/10`. A diagnostic only.
    pub fn lipschitz_estimate(
        &self,
        t: f64,
        center: &DVector<f64>,
        radius: f64,
        pairs: usize,
        seed: u64,
    ) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.set.dim();
        let mut worst: f64 = 0.0;
        for _ in 0..pairs {
            let x = self.set.project(&(center + random_in_ball(&mut rng, n, radius)))?;
            let y = self.set.project(&(&x + random_in_ball(&mut rng, n, radius / 10.0)))?;
            let d = (&x - &y).norm();
            if d > 1e-12 {
                worst = worst.max((self.eval(t, &x)? - self.eval(t, &y)?).norm() / d);
            }
        }
        Ok(worst)
    }
}

impl Selection for TangentSelection {
    fn dim(&self) -> usize {
        self.map.dim
    }

    fn select(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.eval(t, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn evaluate_examples() {
        let f = SetValuedMap::single_valued(2, |_, x| -x, 1.0).unwrap();
        assert_eq!(f.evaluate(0.0, &v(&[2.0, 0.0])).unwrap(), (vec![v(&[-2.0, 0.0])], 0.0));

        let pm = SetValuedMap::from_generators(
            1,
            vec![Arc::new(|_, _| v(&[1.0])), Arc::new(|_, _| v(&[-1.0]))],
            Arc::new(|_, _| 0.0),
            1.0,
        )
        .unwrap();
        let val = pm.value(0.3, &v(&[5.0])).unwrap();
        assert!(val.contains(&v(&[0.0]), 0.0) && !val.contains(&v(&[1.1]), 1e-12));

        let ball = SetValuedMap::linear(DMatrix::zeros(2, 2), DVector::zeros(2), 0.1).unwrap();
        let val = ball.value(0.0, &v(&[1.0, 1.0])).unwrap();
        assert!((val.distance(&v(&[1.0, 0.0])) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn nemytskii_logistic_value() {
        let f = SetValuedMap::logistic_interval(2, 1.0).unwrap();
        let val = f.value(0.0, &v(&[0.5, 1.0])).unwrap();
        // [0, 0.25] × {0}
        assert!(val.contains(&v(&[0.25, 0.0]), 0.0));
        assert!(val.contains(&v(&[0.1, 0.0]), 0.0));
        assert!((val.distance(&v(&[0.3, 0.0])) - 0.05).abs() < 1e-15);
        assert!((val.distance(&v(&[0.0, 0.1])) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn nemytskii_zero_reaction() {
        let f = SetValuedMap::interval(DVector::zeros(3), DVector::zeros(3)).unwrap();
        let val = f.value(0.5, &v(&[1.0, -2.0, 3.0])).unwrap();
        assert!(val.is_single_point());
        assert_eq!(val.barycenter(), DVector::zeros(3));
    }

    #[test]
    fn pointwise_tangency_lifts_to_the_box() {
        let f = SetValuedMap::logistic_interval(4, 2.0).unwrap();
        let reaction = f.reaction().unwrap();
        reaction.check_tangency(4, 50, 1).unwrap();
        let k = reaction.lifted_set(4).unwrap();
        let sel = TangentSelection::new(f, k.clone(), 0.0, SelectionRule::Barycenter).unwrap();
        for x in [v(&[0.0, 1.0, 0.3, 0.0]), v(&[1.0, 1.0, 1.0, 1.0])] {
            let w = sel.eval(0.0, &x).unwrap();
            assert!(k.tangent_cone_default(&x).unwrap().contains(&w, 1e-12));
        }
    }

    #[test]
    fn hull_map_examples() {
        let f = SetValuedMap::single_valued(1, |t, _| v(&[t]), 1.0).unwrap();
        let h = f.hull_map(0.8, &v(&[0.0]), 9).unwrap();
        assert!(h.contains(&v(&[0.0]), 1e-15) && h.contains(&v(&[0.8]), 1e-15));
        assert!((h.distance(&v(&[0.9])) - 0.1).abs() < 1e-12);

        let c = SetValuedMap::single_valued(1, |_, x| -x, 1.0).unwrap();
        let h = c.hull_map(0.7, &v(&[2.0]), 5).unwrap();
        assert!(h.is_single_point() && h.barycenter() == v(&[-2.0]));
    }

    #[test]
    fn hull_map_of_arc_converges() {
        let f = SetValuedMap::single_valued(2, |t, _| v(&[t.cos(), t.sin()]), 1.0).unwrap();
        let x = v(&[0.0, 0.0]);
        // chord midpoint of [0, 1] lies in the hull; arc midpoint is nearly reached
        let coarse = f.hull_map(1.0, &x, 3).unwrap();
        let mid_chord = (v(&[1.0, 0.0]) + v(&[1f64.cos(), 1f64.sin()])) * 0.5;
        assert!(coarse.contains(&mid_chord, 1e-12));
        let arc_mid = v(&[0.5f64.cos(), 0.5f64.sin()]);
        let mut last = f64::INFINITY;
        for n in [3, 9, 33, 129] {
            let d = f.hull_map(1.0, &x, n).unwrap().distance(&arc_mid);
            assert!(d <= last + 1e-15);
            last = d;
        }
        // sagitta of a chord of angle 1/128 is about (1/128)²/8
        assert!(last < 1e-5);
    }

    #[test]
    fn husc_probe_examples() {
        let c = SetValuedMap::interval(v(&[-1.0]), v(&[1.0])).unwrap();
        assert_eq!(c.husc_probe(0.0, &v(&[0.3]), &[0.1, 0.01], 10, 3).unwrap(), vec![0.0, 0.0]);

        let id = SetValuedMap::single_valued(1, |_, x| x.clone(), 1.0).unwrap();
        let e = id.husc_probe(0.0, &v(&[0.0]), &[0.1, 0.01], 10, 3).unwrap();
        assert!((e[0] - 0.1).abs() < 1e-15 && (e[1] - 0.01).abs() < 1e-15);

        let sign = SetValuedMap::regularized_sign(1, 1.0).unwrap();
        assert_eq!(sign.husc_probe(0.0, &v(&[0.0]), &[0.1, 0.01], 10, 3).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn selection_examples() {
        let f = SetValuedMap::interval(v(&[-1.0]), v(&[2.0])).unwrap();
        let k = ConvexSet::orthant(1).unwrap();
        let sel = TangentSelection::new(f.clone(), k.clone(), 0.0, SelectionRule::Barycenter).unwrap();
        assert_eq!(sel.eval(0.0, &v(&[3.0])).unwrap(), v(&[0.5]));
        assert_eq!(sel.eval(0.0, &v(&[0.0])).unwrap(), v(&[0.5]));
        let low = TangentSelection::new(f, k.clone(), 0.0, SelectionRule::Vertex(0)).unwrap();
        assert_eq!(low.eval(0.0, &v(&[0.0])).unwrap(), v(&[0.0]));
        assert_eq!(low.eval(0.0, &v(&[1.0])).unwrap(), v(&[-1.0]));

        let down = SetValuedMap::linear(DMatrix::zeros(1, 1), v(&[-1.0]), 0.0).unwrap();
        let sel = TangentSelection::new(down.clone(), k.clone(), 0.0, SelectionRule::Barycenter)
            .unwrap();
        assert!(matches!(sel.eval(0.2, &v(&[0.0])), Err(Error::TangencyViolation { t, .. }) if t == 0.2));
        // the α-enlarged value reaches the cone once α ≥ 1
        let sel = TangentSelection::new(down, k, 1.0, SelectionRule::Barycenter).unwrap();
        assert!(sel.eval(0.0, &v(&[0.0])).unwrap()[0].abs() < 1e-9);
    }

    #[test]
    fn seeded_rule_is_deterministic_and_in_value() {
        let f = SetValuedMap::interval(v(&[-1.0, 0.0]), v(&[1.0, 3.0])).unwrap();
        let k = ConvexSet::whole(2).unwrap();
        let a = TangentSelection::new(f.clone(), k.clone(), 0.0, SelectionRule::Seeded(7)).unwrap();
        let b = TangentSelection::new(f.clone(), k, 0.0, SelectionRule::Seeded(8)).unwrap();
        let x = v(&[0.0, 0.0]);
        let wa = a.eval(0.0, &x).unwrap();
        assert_eq!(wa, a.eval(0.0, &x).unwrap());
        assert_ne!(wa, b.eval(0.0, &x).unwrap());
        assert!(f.value(0.0, &x).unwrap().contains(&wa, 1e-15));
    }

    #[test]
    fn growth_certificates() {
        let f = SetValuedMap::linear(DMatrix::identity(2, 2) * 2.0, v(&[1.0, 0.0]), 0.5).unwrap();
        assert!(f.check_growth(200, 5.0, 1).unwrap() <= f.growth_c());
        let g = SetValuedMap::single_valued(1, |_, x| x * 10.0, 1.0).unwrap();
        assert!(matches!(g.check_growth(50, 5.0, 1), Err(Error::Precondition(_))));
    }

    #[test]
    fn lipschitz_estimate_of_linear_field() {
        let f = SetValuedMap::linear(DMatrix::identity(2, 2) * -3.0, DVector::zeros(2), 0.0).unwrap();
        let sel = TangentSelection::new(f, ConvexSet::whole(2).unwrap(), 0.0, SelectionRule::Barycenter)
            .unwrap();
        let l = sel.lipschitz_estimate(0.0, &v(&[0.0, 0.0]), 1.0, 50, 2).unwrap();
        assert!((l - 3.0).abs() < 1e-9);
    }
}
