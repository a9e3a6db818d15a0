use nalgebra::DVector;

use super::qp::min_norm_point;
use super::TangentCone;

/// A compact convex set `conv{p_1..p_m} + ρB`, or a Cartesian product of such sets.
///
/// Products arise from pointwise (Nemytskii) lifts: the value of the lifted map is the
/// product of the pointwise values, which is not the hull of finitely many diagonal
/// combinations.
#[derive(Clone, Debug, PartialEq)]
pub enum SetValue {
    Hull {
        points: Vec<DVector<f64>>,
        radius: f64,
    },
    Product(Vec<SetValue>),
}

impl SetValue {
    pub fn hull(points: Vec<DVector<f64>>, radius: f64) -> Self {
        assert!(!points.is_empty(), "hull value needs at least one point");
        SetValue::Hull { points, radius }
    }

    pub fn point(p: DVector<f64>) -> Self {
        SetValue::Hull {
            points: vec![p],
            radius: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SetValue::Hull { points, .. } => points[0].len(),
            SetValue::Product(factors) => factors.iter().map(SetValue::dim).sum(),
        }
    }

    pub fn factor_dims(&self) -> Vec<usize> {
        match self {
            SetValue::Hull { .. } => vec![self.dim()],
            SetValue::Product(factors) => factors.iter().map(SetValue::dim).collect(),
        }
    }

    /// Generators of the hull. For products these are the coordinatewise combinations
    /// `(p^1_j, …, p^M_j)`, which span an inner approximation of the product.
    pub fn hull_points(&self) -> Vec<DVector<f64>> {
        match self {
            SetValue::Hull { points, .. } => points.clone(),
            SetValue::Product(factors) => {
                let per: Vec<Vec<DVector<f64>>> = factors.iter().map(|f| f.hull_points()).collect();
                let count = per.iter().map(Vec::len).max().unwrap_or(0);
                (0..count)
                    .map(|j| concat(per.iter().map(|pts| &pts[j.min(pts.len() - 1)])))
                    .collect()
            }
        }
    }

    pub fn radius(&self) -> f64 {
        match self {
            SetValue::Hull { radius, .. } => *radius,
            SetValue::Product(factors) => {
                factors.iter().map(|f| f.radius().powi(2)).sum::<f64>().sqrt()
            }
        }
    }

    /// `sup ‖v‖` over the set.
    pub fn magnitude(&self) -> f64 {
        match self {
            SetValue::Hull { points, radius } => {
                points.iter().map(|p| p.norm()).fold(0.0, f64::max) + radius
            }
            SetValue::Product(factors) => {
                factors.iter().map(|f| f.magnitude().powi(2)).sum::<f64>().sqrt()
            }
        }
    }

    pub fn is_single_point(&self) -> bool {
        match self {
            SetValue::Hull { points, radius } => {
                *radius == 0.0 && points.iter().all(|p| p == &points[0])
            }
            SetValue::Product(factors) => factors.iter().all(SetValue::is_single_point),
        }
    }

    pub fn barycenter(&self) -> DVector<f64> {
        self.weighted(&mut |_, m| vec![1.0 / m as f64; m])
    }

    /// Point `Σ_j w_j p_j` per factor, with weights supplied per `(factor index, count)`.
    pub fn weighted(&self, weights: &mut dyn FnMut(usize, usize) -> Vec<f64>) -> DVector<f64> {
        fn go(
            v: &SetValue,
            next: &mut usize,
            weights: &mut dyn FnMut(usize, usize) -> Vec<f64>,
        ) -> DVector<f64> {
            match v {
                SetValue::Hull { points, .. } => {
                    let w = weights(*next, points.len());
                    *next += 1;
                    let mut out = DVector::zeros(points[0].len());
                    for (p, wj) in points.iter().zip(w) {
                        out.axpy(wj, p, 1.0);
                    }
                    out
                }
                SetValue::Product(factors) => {
                    let parts: Vec<DVector<f64>> =
                        factors.iter().map(|f| go(f, next, weights)).collect();
                    concat(parts.iter())
                }
            }
        }
        let mut next = 0;
        go(self, &mut next, weights)
    }

    /// Nearest point of the set.
    pub fn project(&self, y: &DVector<f64>) -> DVector<f64> {
        match self {
            SetValue::Hull { points, radius } => {
                let core = project_hull(points, y);
                let d = (y - &core).norm();
                if d <= *radius {
                    y.clone()
                } else {
                    &core + (y - &core) * (*radius / d)
                }
            }
            SetValue::Product(factors) => {
                let mut offset = 0;
                let parts: Vec<DVector<f64>> = factors
                    .iter()
                    .map(|f| {
                        let n = f.dim();
                        let p = f.project(&y.rows(offset, n).into_owned());
                        offset += n;
                        p
                    })
                    .collect();
                concat(parts.iter())
            }
        }
    }

    pub fn distance(&self, y: &DVector<f64>) -> f64 {
        match self {
            SetValue::Hull { points, radius } => {
                let core = project_hull(points, y);
                ((y - core).norm() - radius).max(0.0)
            }
            SetValue::Product(factors) => {
                let mut offset = 0;
                factors
                    .iter()
                    .map(|f| {
                        let n = f.dim();
                        let d = f.distance(&y.rows(offset, n).into_owned());
                        offset += n;
                        d * d
                    })
                    .sum::<f64>()
                    .sqrt()
            }
        }
    }

    pub fn contains(&self, y: &DVector<f64>, tol: f64) -> bool {
        self.distance(y) <= tol
    }

    /// Support function `sup_{v ∈ value} ⟨v, dir⟩`.
    pub fn support(&self, dir: &DVector<f64>) -> f64 {
        match self {
            SetValue::Hull { points, radius } => {
                points.iter().map(|p| p.dot(dir)).fold(f64::NEG_INFINITY, f64::max)
                    + radius * dir.norm()
            }
            SetValue::Product(factors) => {
                let mut offset = 0;
                factors
                    .iter()
                    .map(|f| {
                        let n = f.dim();
                        let s = f.support(&dir.rows(offset, n).into_owned());
                        offset += n;
                        s
                    })
                    .sum()
            }
        }
    }

    /// The set enlarged by a ball of radius `eps` (inner approximation for products).
    pub fn enlarged(&self, eps: f64) -> SetValue {
        match self {
            SetValue::Hull { points, radius } => SetValue::Hull {
                points: points.clone(),
                radius: radius + eps,
            },
            SetValue::Product(factors) => {
                let share = eps / (factors.len() as f64).sqrt();
                SetValue::Product(factors.iter().map(|f| f.enlarged(share)).collect())
            }
        }
    }

    /// `a·u + b·self` for a point `u`; a Minkowski combination of a point and the set.
    pub fn affine_blend(&self, u: &DVector<f64>, a: f64, b: f64) -> SetValue {
        match self {
            SetValue::Hull { points, radius } => SetValue::Hull {
                points: points.iter().map(|p| u * a + p * b).collect(),
                radius: radius * b.abs(),
            },
            SetValue::Product(factors) => {
                let mut offset = 0;
                SetValue::Product(
                    factors
                        .iter()
                        .map(|f| {
                            let n = f.dim();
                            let part = f.affine_blend(&u.rows(offset, n).into_owned(), a, b);
                            offset += n;
                            part
                        })
                        .collect(),
                )
            }
        }
    }

    pub fn split(&self, y: &DVector<f64>) -> Vec<DVector<f64>> {
        let mut offset = 0;
        self.factor_dims()
            .into_iter()
            .map(|n| {
                let part = y.rows(offset, n).into_owned();
                offset += n;
                part
            })
            .collect()
    }
}

pub(crate) fn concat<'a>(parts: impl Iterator<Item = &'a DVector<f64>>) -> DVector<f64> {
    let data: Vec<f64> = parts.flat_map(|p| p.iter().copied()).collect();
    DVector::from_vec(data)
}

fn project_hull(points: &[DVector<f64>], y: &DVector<f64>) -> DVector<f64> {
    match points.len() {
        1 => points[0].clone(),
        2 => {
            let d = &points[1] - &points[0];
            let dd = d.norm_squared();
            if dd == 0.0 {
                return points[0].clone();
            }
            let s = ((y - &points[0]).dot(&d) / dd).clamp(0.0, 1.0);
            &points[0] + d * s
        }
        _ => {
            let shifted: Vec<DVector<f64>> = points.iter().map(|p| p - y).collect();
            let (x, _) = min_norm_point(&shifted);
            x + y
        }
    }
}

/// Nearest point to `seed` in `value ∩ cone`, or `None` when the intersection is empty.
///
/// Products are solved factor by factor whenever the cone splits along the same blocks.
/// Otherwise Dykstra's alternating projections are run and the answer is projected onto
/// the cone, so cone constraints hold to rounding.
pub fn tangent_point(
    cone: &TangentCone,
    value: &SetValue,
    seed: &DVector<f64>,
    feasibility_tol: f64,
) -> Option<DVector<f64>> {
    if let SetValue::Product(factors) = value {
        if let Some(parts) = cone.split(&value.factor_dims()) {
            let seeds = value.split(seed);
            let mut out = Vec::with_capacity(factors.len());
            for ((f, c), s) in factors.iter().zip(&parts).zip(&seeds) {
                out.push(tangent_point(c, f, s, feasibility_tol)?);
            }
            return Some(concat(out.iter()));
        }
    }
    if value.is_single_point() {
        let p = value.barycenter();
        return cone.contains(&p, feasibility_tol).then_some(p);
    }
    if value.contains(seed, 0.0) && cone.contains(seed, 0.0) {
        return Some(seed.clone());
    }
    if cone.is_full() {
        return Some(value.project(seed));
    }

    let scale = 1.0 + seed.norm() + value.magnitude();
    let mut x = seed.clone();
    let mut p = DVector::zeros(seed.len());
    let mut q = DVector::zeros(seed.len());
    for _ in 0..20_000 {
        let y = cone.project(&(&x + &p));
        p = &x + &p - &y;
        let x_next = value.project(&(&y + &q));
        q = &y + &q - &x_next;
        let moved = (&x_next - &x).norm();
        let gap = (&x_next - &y).norm();
        x = x_next;
        if gap <= 1e-13 * scale && moved <= 1e-14 * scale {
            break;
        }
    }
    let candidate = cone.project(&x);
    value
        .contains(&candidate, feasibility_tol * scale)
        .then_some(candidate)
}
