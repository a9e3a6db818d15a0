//! Projected time stepping of `u̇ ∈ Au + F(t, u)`, `u ∈ K`: trajectories, Poincaré
//! operators, funnel samples, the unprojected drift diagnostic and the homotopy flows
//! joining `P_t` to the one-step map `r∘J_h(I + hf)`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::convex::{ConvexSet, Retraction};
use crate::error::{check_dim, Error, Result};
use crate::operator::{LinearOperator, Resolvent};
use crate::setvalued::{Selection, SelectionRule, SetValuedMap, TangentSelection};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `u⁺ = r(J_h(u + h f(t, u)))`.
    #[default]
    ProjectedResolvent,
    /// `u⁺ = r(S(h)(u + h f(t, u)))`.
    ProjectedSemigroup,
}

#[derive(Clone, Debug)]
enum Linear {
    Resolvent(Resolvent),
    Semigroup(DMatrix<f64>),
}

/// One-step map with the linear part factored once.
#[derive(Clone, Debug)]
pub struct Stepper<'a> {
    set: &'a ConvexSet,
    h: f64,
    linear: Linear,
    scheme: Scheme,
    retraction: Retraction,
}

impl<'a> Stepper<'a> {
    pub fn new(op: &LinearOperator, set: &'a ConvexSet, scheme: Scheme, h: f64) -> Result<Self> {
        check_dim(op.dim(), set.dim())?;
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Domain(format!("step must be positive, got {h}")));
        }
        let linear = match scheme {
            Scheme::ProjectedResolvent => Linear::Resolvent(op.resolvent(h)?),
            Scheme::ProjectedSemigroup => {
                if h * op.growth_omega() >= 1.0 {
                    return Err(Error::Domain(format!(
                        "h * omega = {} must be < 1",
                        h * op.growth_omega()
                    )));
                }
                Linear::Semigroup(op.semigroup(h)?)
            }
        };
        Ok(Self {
            set,
            h,
            linear,
            scheme,
            retraction: Retraction::Metric,
        })
    }

    pub fn with_retraction(mut self, retraction: Retraction) -> Self {
        self.retraction = retraction;
        self
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// `J_h y` or `S(h) y`, before projection.
    pub fn linear_apply(&self, y: &DVector<f64>) -> DVector<f64> {
        match &self.linear {
            Linear::Resolvent(r) => r.apply(y),
            Linear::Semigroup(s) => s * y,
        }
    }

    /// Next state from `u` and forcing `w`.
    pub fn advance(&self, u: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.set.retract(&self.linear_apply(&(u + w * self.h)), self.retraction)
    }
}

/// States, forcings and constraint distances on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// `w_k = f(t_k, u_k)`; one fewer than states.
    pub forcings: Vec<DVector<f64>>,
    pub distances: Vec<f64>,
    pub scheme: Scheme,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn max_distance(&self) -> f64 {
        self.distances.iter().copied().fold(0.0, f64::max)
    }

    /// Columns `t, u_1..u_N, w_1..w_N, d(u;K)`. The last row repeats the final forcing.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, |s| s.len());
        let mut out = String::from("t");
        for i in 1..=n {
            write!(out, ",u_{i}").unwrap();
        }
        for i in 1..=n {
            write!(out, ",w_{i}").unwrap();
        }
        out.push_str(",dist_K\n");
        for k in 0..self.states.len() {
            write!(out, "{}", self.times[k]).unwrap();
            for x in self.states[k].iter() {
                write!(out, ",{x}").unwrap();
            }
            let w = self
                .forcings
                .get(k)
                .or_else(|| self.forcings.last())
                .cloned()
                .unwrap_or_else(|| DVector::zeros(n));
            for x in w.iter() {
                write!(out, ",{x}").unwrap();
            }
            writeln!(out, ",{}", self.distances[k]).unwrap();
        }
        out
    }
}

/// Number of uniform steps covering `[0, t_end]` with step at most `h`.
pub fn step_count(t_end: f64, h: f64) -> usize {
    if t_end <= 0.0 {
        0
    } else {
        (t_end / h - 1e-9).ceil().max(1.0) as usize
    }
}

fn check_in_set(set: &ConvexSet, x: &DVector<f64>) -> Result<()> {
    check_dim(set.dim(), x.len())?;
    let d = set.distance(x)?;
    if d > ConvexSet::default_activity_tol(x) {
        return Err(Error::Precondition(format!("initial state is {d:.3e} outside K")));
    }
    Ok(())
}

fn check_tangent(set: &ConvexSet, t: f64, u: &DVector<f64>, w: &DVector<f64>) -> Result<()> {
    let cone = set.tangent_cone_default(u)?;
    if cone.contains(w, 1e-9 * (1.0 + w.norm())) {
        Ok(())
    } else {
        Err(Error::TangencyViolation {
            t,
            x: u.iter().copied().collect(),
        })
    }
}

/// A single step `r(J_h(u + h f(t, u)))` (or the semigroup variant). Tangency of `f` is
/// not checked here.
pub fn step(
    op: &LinearOperator,
    set: &ConvexSet,
    f: &dyn Selection,
    u: &DVector<f64>,
    t: f64,
    h: f64,
    scheme: Scheme,
) -> Result<DVector<f64>> {
    check_in_set(set, u)?;
    let stepper = Stepper::new(op, set, scheme, h)?;
    stepper.advance(u, &f.select(t, u)?)
}

/// Runs a prepared stepper from `x0` for `steps` steps starting at time 0.
pub fn run(
    stepper: &Stepper<'_>,
    f: &dyn Selection,
    x0: &DVector<f64>,
    steps: usize,
) -> Result<Trajectory> {
    check_in_set(stepper.set, x0)?;
    check_dim(f.dim(), x0.len())?;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0.clone()],
        forcings: Vec::with_capacity(steps),
        distances: vec![stepper.set.distance(x0)?],
        scheme: stepper.scheme,
    };
    let mut u = x0.clone();
    for k in 0..steps {
        let t = k as f64 * stepper.h;
        let w = match f.select(t, &u).and_then(|w| {
            check_tangent(stepper.set, t, &u, &w)?;
            Ok(w)
        }) {
            Ok(w) => w,
            Err(e) => {
                return Err(Error::Aborted {
                    source: Box::new(e),
                    partial: Box::new(traj),
                })
            }
        };
        u = stepper.advance(&u, &w)?;
        traj.times.push((k + 1) as f64 * stepper.h);
        traj.distances.push(stepper.set.distance(&u)?);
        traj.states.push(u.clone());
        traj.forcings.push(w);
    }
    Ok(traj)
}

/// Mild-solution approximation on `[0, t_end]` with step at most `h`.
pub fn solve(
    op: &LinearOperator,
    set: &ConvexSet,
    f: &dyn Selection,
    x0: &DVector<f64>,
    t_end: f64,
    h: f64,
    scheme: Scheme,
) -> Result<Trajectory> {
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::Domain(format!("t_end must be >= 0, got {t_end}")));
    }
    let n = step_count(t_end, h);
    if n == 0 {
        check_in_set(set, x0)?;
        return Ok(Trajectory {
            times: vec![0.0],
            states: vec![x0.clone()],
            forcings: Vec::new(),
            distances: vec![set.distance(x0)?],
            scheme,
        });
    }
    let stepper = Stepper::new(op, set, scheme, t_end / n as f64)?;
    run(&stepper, f, x0, n)
}

/// `P_t(x0)`: the endpoint of [`solve`].
pub fn poincare(
    op: &LinearOperator,
    set: &ConvexSet,
    f: &dyn Selection,
    x0: &DVector<f64>,
    t: f64,
    h: f64,
    scheme: Scheme,
) -> Result<DVector<f64>> {
    Ok(solve(op, set, f, x0, t, h, scheme)?.last().clone())
}

/// `P_t` with its stepper prepared once, for repeated evaluation.
pub struct PoincareMap<'a> {
    stepper: Stepper<'a>,
    f: &'a dyn Selection,
    steps: usize,
}

impl<'a> PoincareMap<'a> {
    pub fn new(
        op: &LinearOperator,
        set: &'a ConvexSet,
        f: &'a dyn Selection,
        t: f64,
        h: f64,
        scheme: Scheme,
    ) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("Poincaré time must be positive, got {t}")));
        }
        let steps = step_count(t, h);
        Ok(Self {
            stepper: Stepper::new(op, set, scheme, t / steps as f64)?,
            f,
            steps,
        })
    }

    pub fn apply(&self, x0: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(run(&self.stepper, self.f, x0, self.steps)?.last().clone())
    }
}

/// Funnel strategy for [`funnel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    TangentBarycenter,
    Vertex(usize),
    RandomSeeded(u64),
}

impl Strategy {
    pub fn rule(self) -> SelectionRule {
        match self {
            Strategy::TangentBarycenter => SelectionRule::Barycenter,
            Strategy::Vertex(j) => SelectionRule::Vertex(j),
            Strategy::RandomSeeded(s) => SelectionRule::Seeded(s),
        }
    }
}

/// One trajectory per strategy; the endpoints sample the solution funnel `Σ_t(x0)`.
#[allow(clippy::too_many_arguments)]
pub fn funnel(
    op: &LinearOperator,
    set: &ConvexSet,
    map: &SetValuedMap,
    x0: &DVector<f64>,
    t: f64,
    h: f64,
    strategies: &[Strategy],
    scheme: Scheme,
) -> Vec<Result<Trajectory>> {
    strategies
        .iter()
        .map(|s| {
            let sel = TangentSelection::new(map.clone(), set.clone(), 0.0, s.rule())?;
            solve(op, set, &sel, x0, t, h, scheme)
        })
        .collect()
}

/// `max_k d(J_h(u_k + h f(t_k, u_k)); K) / h` along the projected trajectory.
pub fn viability_drift(
    op: &LinearOperator,
    set: &ConvexSet,
    f: &dyn Selection,
    x0: &DVector<f64>,
    t: f64,
    h: f64,
) -> Result<f64> {
    check_in_set(set, x0)?;
    let n = step_count(t, h).max(1);
    let dt = if t > 0.0 { t / n as f64 } else { h };
    let stepper = Stepper::new(op, set, Scheme::ProjectedResolvent, dt)?;
    let mut u = x0.clone();
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let w = f.select(k as f64 * dt, &u)?;
        let y = stepper.linear_apply(&(&u + w * dt));
        worst = worst.max(set.distance(&y)? / dt);
        u = set.project(&y)?;
    }
    Ok(worst)
}

/// The flows of `u̇ = zAu + g_z(u)` joining `P_t` (`z = 1`) to the flow of `u̇ = −u + g(u)`
/// (`z = 0`), where `g = r∘J_h(I + hf)` and `g_z = zf + (1 − z)(−I + g)`.
pub struct HomotopyFlowSpec<'a> {
    z: f64,
    h: f64,
    op: &'a LinearOperator,
    set: &'a ConvexSet,
    f: &'a dyn Selection,
    resolvent: Resolvent,
}

impl<'a> HomotopyFlowSpec<'a> {
    pub fn new(
        z: f64,
        h: f64,
        op: &'a LinearOperator,
        set: &'a ConvexSet,
        f: &'a dyn Selection,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&z) {
            return Err(Error::Domain(format!("z must lie in [0, 1], got {z}")));
        }
        check_dim(op.dim(), set.dim())?;
        check_dim(op.dim(), f.dim())?;
        Ok(Self {
            z,
            h,
            op,
            set,
            f,
            resolvent: op.resolvent(h)?,
        })
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// `g(x) = r(J_h(x + h f(t, x)))`.
    pub fn g(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.set
            .project(&self.resolvent.apply(&(x + self.f.select(t, x)? * self.h)))
    }

    /// `g_z(x) = z f(x) + (1 − z)(−x + g(x))`.
    pub fn g_z(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        let fx = self.f.select(t, x)?;
        let gx = self.set.project(&self.resolvent.apply(&(x + &fx * self.h)))?;
        Ok(fx * self.z + (gx - x) * (1.0 - self.z))
    }

    /// `A_z = (z − 1 − z/h) I + zA`.
    pub fn a_z(&self) -> DMatrix<f64> {
        let n = self.op.dim();
        DMatrix::identity(n, n) * (self.z - 1.0 - self.z / self.h) + self.op.matrix() * self.z
    }

    /// `f_z(x) = (z/h)(x + h f(x)) + (1 − z) r(J_h(x + h f(x)))`.
    pub fn f_z(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        let y = x + self.f.select(t, x)? * self.h;
        let gy = self.set.project(&self.resolvent.apply(&y))?;
        Ok(y * (self.z / self.h) + gy * (1.0 - self.z))
    }

    /// `‖A_z x + f_z(x) − (zAx + g_z(x))‖`.
    pub fn identity_residual(&self, t: f64, x: &DVector<f64>) -> Result<f64> {
        let lhs = self.a_z() * x + self.f_z(t, x)?;
        let rhs = self.op.apply(x) * self.z + self.g_z(t, x)?;
        Ok((lhs - rhs).norm())
    }
}

struct BlendedField<'s, 'a> {
    spec: &'s HomotopyFlowSpec<'a>,
}

impl Selection for BlendedField<'_, '_> {
    fn dim(&self) -> usize {
        self.spec.op.dim()
    }

    fn select(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.spec.g_z(t, x)
    }
}

/// Endpoint at time `t` of `u̇ = zAu + g_z(u)`, `u(0) = x0`, stepped with step at most `dt`.
pub fn homotopy_flow(
    spec: &HomotopyFlowSpec<'_>,
    x0: &DVector<f64>,
    t: f64,
    dt: f64,
    scheme: Scheme,
) -> Result<DVector<f64>> {
    let op_z = spec.op.scaled(spec.z)?;
    let field = BlendedField { spec };
    poincare(&op_z, spec.set, &field, x0, t, dt, scheme)
}
