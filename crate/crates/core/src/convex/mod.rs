//! Closed convex constraint sets: membership, metric projection, tangent cones and the
//! tangency feasibility problem `(conv P + ρB) ∩ T_K(x)`.

pub mod qp;
mod value;

use nalgebra::DVector;

pub use value::{tangent_point, SetValue};

use crate::error::{check_dim, Error, Result};
use value::concat;

#[derive(Clone, Debug, PartialEq)]
pub enum SetKind {
    /// `lo ≤ x ≤ hi`; infinite entries leave a side unconstrained.
    Box { lo: DVector<f64>, hi: DVector<f64> },
    /// `⟨a_i, x⟩ ≤ b_i`.
    Halfspaces {
        normals: Vec<DVector<f64>>,
        offsets: Vec<f64>,
    },
    Ball { center: DVector<f64>, radius: f64 },
    Product(Vec<ConvexSet>),
}

/// Which retraction `r : ℝᴺ → K` to use. Both satisfy `‖y − r(y)‖ ≤ 2 d(y; K)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Retraction {
    /// Nearest-point map.
    #[default]
    Metric,
    /// `y ↦ P_K(2 P_K(y) − y)`: reflect through the nearest point, then project.
    Reflected,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvexSet {
    kind: SetKind,
    dim: usize,
    anchor: DVector<f64>,
}

impl ConvexSet {
    pub fn boxed(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        if lo.is_empty() {
            return Err(Error::InvalidInput("box must have positive dimension".into()));
        }
        for i in 0..lo.len() {
            if lo[i].is_nan() || hi[i].is_nan() || !(lo[i] <= hi[i]) {
                return Err(Error::InvalidInput(format!(
                    "box bounds must satisfy lo <= hi (coordinate {i}: {} > {})",
                    lo[i], hi[i]
                )));
            }
            if lo[i] == f64::INFINITY || hi[i] == f64::NEG_INFINITY {
                return Err(Error::EmptySet);
            }
        }
        let anchor = DVector::from_fn(lo.len(), |i, _| 0f64.clamp(lo[i], hi[i]));
        Ok(Self {
            dim: lo.len(),
            kind: SetKind::Box { lo, hi },
            anchor,
        })
    }

    /// All of `ℝᴺ`.
    pub fn whole(dim: usize) -> Result<Self> {
        Self::boxed(
            DVector::from_element(dim, f64::NEG_INFINITY),
            DVector::from_element(dim, f64::INFINITY),
        )
    }

    /// The nonnegative orthant `ℝᴺ₊`.
    pub fn orthant(dim: usize) -> Result<Self> {
        Self::boxed(DVector::zeros(dim), DVector::from_element(dim, f64::INFINITY))
    }

    pub fn halfspaces(normals: Vec<DVector<f64>>, offsets: Vec<f64>) -> Result<Self> {
        if normals.is_empty() || normals.len() != offsets.len() {
            return Err(Error::InvalidInput(
                "halfspaces need matching nonempty normals and offsets".into(),
            ));
        }
        let dim = normals[0].len();
        for (a, b) in normals.iter().zip(&offsets) {
            check_dim(dim, a.len())?;
            if a.iter().all(|&c| c == 0.0) {
                return Err(Error::InvalidInput("halfspace normal must be nonzero".into()));
            }
            if !b.is_finite() || a.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidInput("halfspace data must be finite".into()));
            }
        }
        let anchor = qp::project_polyhedron(&normals, &offsets, &DVector::zeros(dim))?.point;
        Ok(Self {
            dim,
            kind: SetKind::Halfspaces { normals, offsets },
            anchor,
        })
    }

    pub fn ball(center: DVector<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "ball needs finite center and positive radius, got {radius}"
            )));
        }
        Ok(Self {
            dim: center.len(),
            anchor: center.clone(),
            kind: SetKind::Ball { center, radius },
        })
    }

    pub fn product(factors: Vec<ConvexSet>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidInput("product needs at least one factor".into()));
        }
        let dim = factors.iter().map(|f| f.dim).sum();
        let anchor = concat(factors.iter().map(|f| &f.anchor));
        Ok(Self {
            dim,
            kind: SetKind::Product(factors),
            anchor,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &SetKind {
        &self.kind
    }

    /// A point of the set, computed at construction.
    pub fn anchor(&self) -> &DVector<f64> {
        &self.anchor
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        Ok(self.distance(x)? <= tol)
    }

    /// Metric projection `r(y)`.
    pub fn project(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim, y.len())?;
        Ok(match &self.kind {
            SetKind::Box { lo, hi } => DVector::from_fn(self.dim, |i, _| y[i].clamp(lo[i], hi[i])),
            SetKind::Ball { center, radius } => {
                let d = y - center;
                let n = d.norm();
                if n <= *radius {
                    y.clone()
                } else {
                    center + d * (*radius / n)
                }
            }
            SetKind::Halfspaces { normals, offsets } => {
                if normals.iter().zip(offsets).all(|(a, b)| a.dot(y) <= *b) {
                    y.clone()
                } else {
                    qp::project_polyhedron(normals, offsets, y)?.point
                }
            }
            SetKind::Product(factors) => {
                let mut parts = Vec::with_capacity(factors.len());
                let mut offset = 0;
                for f in factors {
                    parts.push(f.project(&y.rows(offset, f.dim).into_owned())?);
                    offset += f.dim;
                }
                concat(parts.iter())
            }
        })
    }

    pub fn retract(&self, y: &DVector<f64>, kind: Retraction) -> Result<DVector<f64>> {
        let p = self.project(y)?;
        match kind {
            Retraction::Metric => Ok(p),
            Retraction::Reflected => self.project(&(&p * 2.0 - y)),
        }
    }

    /// `d(y; K)`.
    pub fn distance(&self, y: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim, y.len())?;
        Ok(match &self.kind {
            SetKind::Box { lo, hi } => (0..self.dim)
                .map(|i| {
                    let e = (lo[i] - y[i]).max(y[i] - hi[i]).max(0.0);
                    e * e
                })
                .sum::<f64>()
                .sqrt(),
            SetKind::Ball { center, radius } => ((y - center).norm() - radius).max(0.0),
            _ => (y - self.project(y)?).norm(),
        })
    }

    /// `⟨k − r(y), y − r(y)⟩`, nonpositive for the metric projection.
    pub fn variational_residual(&self, y: &DVector<f64>, k: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim, k.len())?;
        let tol = 1e-9 * (1.0 + k.norm());
        if self.distance(k)? > tol {
            return Err(Error::Precondition(format!(
                "comparison point is not in K (distance {:.3e})",
                self.distance(k)?
            )));
        }
        let r = self.project(y)?;
        Ok((k - &r).dot(&(y - &r)))
    }

    pub fn default_activity_tol(x: &DVector<f64>) -> f64 {
        1e-9 * (1.0 + x.norm())
    }

    pub fn tangent_cone_default(&self, x: &DVector<f64>) -> Result<TangentCone> {
        self.tangent_cone(x, Self::default_activity_tol(x))
    }

    /// `T_K(x)` in active-constraint form. Constraints within `activity_tol` of being
    /// tight are treated as active.
    pub fn tangent_cone(&self, x: &DVector<f64>, activity_tol: f64) -> Result<TangentCone> {
        check_dim(self.dim, x.len())?;
        let d = self.distance(x)?;
        if d > activity_tol {
            return Err(Error::Precondition(format!(
                "base point is {d:.3e} away from K (tolerance {activity_tol:.3e})"
            )));
        }
        let mut normals = Vec::new();
        self.collect_normals(x, activity_tol, 0, self.dim, &mut normals);
        Ok(TangentCone {
            base_point: x.clone(),
            normals,
        })
    }

    fn collect_normals(
        &self,
        x: &DVector<f64>,
        tol: f64,
        offset: usize,
        ambient: usize,
        out: &mut Vec<DVector<f64>>,
    ) {
        let unit = |i: usize, s: f64| {
            let mut e = DVector::zeros(ambient);
            e[offset + i] = s;
            e
        };
        match &self.kind {
            SetKind::Box { lo, hi } => {
                for i in 0..self.dim {
                    if lo[i].is_finite() && x[i] - lo[i] <= tol {
                        out.push(unit(i, -1.0));
                    }
                    if hi[i].is_finite() && hi[i] - x[i] <= tol {
                        out.push(unit(i, 1.0));
                    }
                }
            }
            SetKind::Ball { center, radius } => {
                let d = x - center;
                let n = d.norm();
                if n >= radius - tol && n > 0.0 {
                    let mut e = DVector::zeros(ambient);
                    e.rows_mut(offset, self.dim).copy_from(&(d / n));
                    out.push(e);
                }
            }
            SetKind::Halfspaces { normals, offsets } => {
                for (a, b) in normals.iter().zip(offsets) {
                    let an = a.norm();
                    if b - a.dot(x) <= tol * an {
                        let mut e = DVector::zeros(ambient);
                        e.rows_mut(offset, self.dim).copy_from(&(a / an));
                        out.push(e);
                    }
                }
            }
            SetKind::Product(factors) => {
                let mut local = 0;
                for f in factors {
                    let part = x.rows(local, f.dim).into_owned();
                    f.collect_normals(&part, tol, offset + local, ambient, out);
                    local += f.dim;
                }
            }
        }
    }

    /// Whether the closed box `[lo, hi]` lies in the interior of `K`.
    pub fn interior_contains_box(&self, lo: &DVector<f64>, hi: &DVector<f64>) -> bool {
        match &self.kind {
            SetKind::Box { lo: klo, hi: khi } => {
                (0..self.dim).all(|i| klo[i] < lo[i] && hi[i] < khi[i])
            }
            SetKind::Ball { center, radius } => {
                // farthest corner
                let far = DVector::from_fn(self.dim, |i, _| {
                    (lo[i] - center[i]).abs().max((hi[i] - center[i]).abs())
                });
                far.norm() < *radius
            }
            SetKind::Halfspaces { normals, offsets } => normals.iter().zip(offsets).all(|(a, b)| {
                let s: f64 = (0..self.dim).map(|i| (a[i] * lo[i]).max(a[i] * hi[i])).sum();
                s < *b
            }),
            SetKind::Product(factors) => {
                let mut offset = 0;
                factors.iter().all(|f| {
                    let l = lo.rows(offset, f.dim).into_owned();
                    let h = hi.rows(offset, f.dim).into_owned();
                    offset += f.dim;
                    f.interior_contains_box(&l, &h)
                })
            }
        }
    }

    /// Whether the closed ball `B(center, radius)` lies in the interior of `K`.
    pub fn interior_contains_ball(&self, center: &DVector<f64>, radius: f64) -> bool {
        match &self.kind {
            SetKind::Box { lo, hi } => {
                (0..self.dim).all(|i| lo[i] < center[i] - radius && center[i] + radius < hi[i])
            }
            SetKind::Ball { center: c, radius: r } => (center - c).norm() + radius < *r,
            SetKind::Halfspaces { normals, offsets } => normals
                .iter()
                .zip(offsets)
                .all(|(a, b)| a.dot(center) + radius * a.norm() < *b),
            SetKind::Product(factors) => {
                let mut offset = 0;
                factors.iter().all(|f| {
                    let c = center.rows(offset, f.dim).into_owned();
                    offset += f.dim;
                    f.interior_contains_ball(&c, radius)
                })
            }
        }
    }
}

/// `T_K(x) = {v : ⟨n_j, v⟩ ≤ 0}` for unit normals `n_j` of the active constraints. An
/// empty normal list is the whole space.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentCone {
    base_point: DVector<f64>,
    normals: Vec<DVector<f64>>,
}

impl TangentCone {
    pub fn full(base_point: DVector<f64>) -> Self {
        Self {
            base_point,
            normals: Vec::new(),
        }
    }

    pub fn base_point(&self) -> &DVector<f64> {
        &self.base_point
    }

    pub fn normals(&self) -> &[DVector<f64>] {
        &self.normals
    }

    pub fn dim(&self) -> usize {
        self.base_point.len()
    }

    pub fn is_full(&self) -> bool {
        self.normals.is_empty()
    }

    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        self.normals.iter().all(|n| n.dot(v) <= tol)
    }

    /// Each normal supported on a single coordinate, as for boxes.
    fn coordinate_normal(n: &DVector<f64>) -> Option<(usize, f64)> {
        let mut hit = None;
        for (i, &c) in n.iter().enumerate() {
            if c != 0.0 {
                if hit.is_some() {
                    return None;
                }
                hit = Some((i, c));
            }
        }
        hit
    }

    /// Nearest point of the cone to `v`.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.contains(v, 0.0) {
            return v.clone();
        }
        let coords: Option<Vec<(usize, f64)>> =
            self.normals.iter().map(Self::coordinate_normal).collect();
        if let Some(coords) = coords {
            let mut out = v.clone();
            for (i, s) in coords {
                if s * out[i] > 0.0 {
                    out[i] = 0.0;
                }
            }
            return out;
        }
        let zeros = vec![0.0; self.normals.len()];
        qp::project_polyhedron(&self.normals, &zeros, v)
            .map(|p| p.point)
            // a cone always contains 0, so failure means only numerical trouble
            .unwrap_or_else(|_| DVector::zeros(v.len()))
    }

    /// `d(v; T_K(x))`.
    pub fn distance(&self, v: &DVector<f64>) -> f64 {
        (v - self.project(v)).norm()
    }

    /// Splits the cone into blocks of the given sizes when no normal straddles two blocks.
    pub fn split(&self, dims: &[usize]) -> Option<Vec<TangentCone>> {
        if dims.iter().sum::<usize>() != self.dim() {
            return None;
        }
        let mut starts = Vec::with_capacity(dims.len());
        let mut acc = 0;
        for &d in dims {
            starts.push(acc);
            acc += d;
        }
        let mut blocks: Vec<TangentCone> = dims
            .iter()
            .zip(&starts)
            .map(|(&d, &s)| TangentCone::full(self.base_point.rows(s, d).into_owned()))
            .collect();
        for n in &self.normals {
            let first = n.iter().position(|&c| c != 0.0)?;
            let last = n.iter().rposition(|&c| c != 0.0)?;
            let b = starts.partition_point(|&s| s <= first) - 1;
            if last >= starts[b] + dims[b] {
                return None;
            }
            blocks[b].normals.push(n.rows(starts[b], dims[b]).into_owned());
        }
        Some(blocks)
    }
}

/// Point of `(conv(hull_points) + radius·B) ∩ cone` nearest to the hull barycenter.
pub fn tangency_lp(
    cone: &TangentCone,
    hull_points: &[DVector<f64>],
    radius: f64,
) -> Option<DVector<f64>> {
    if hull_points.is_empty() {
        return None;
    }
    let value = SetValue::hull(hull_points.to_vec(), radius);
    tangent_point(cone, &value, &value.barycenter(), 1e-10)
}
