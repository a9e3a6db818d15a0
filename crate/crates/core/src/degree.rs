//! Brouwer degree in dimensions 1 to 3 by boundary integration, the constrained
//! fixed-point index `Ind_K(f, U)`, and the constrained degree `deg_K(A + G, U)` as the
//! stabilised index of `r∘J_h(I + hg)` over a sweep of `(α, h)`.
//!
//! Results are floating-point computations with stability evidence, not rigorous
//! enclosures. The sweep criterion can in principle settle on a wrong integer when the
//! limit is approached very slowly.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::convex::{ConvexSet, Retraction, SetKind};
use crate::error::{check_dim, Error, Result};
use crate::operator::LinearOperator;
use crate::setvalued::{SelectionRule, SetValuedMap, TangentSelection};

/// A map `ℝᴺ → ℝᴺ` whose evaluation may fail.
pub type PointMap<'a> = dyn Fn(&DVector<f64>) -> Result<DVector<f64>> + 'a;

const MAX_BISECTIONS: u32 = 40;
const MAX_SUBDIVISIONS: u32 = 14;
const MAX_UNIFORM_LEVEL_3D: u32 = 5;

#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Ball { center: DVector<f64>, radius: f64 },
    Box { lo: DVector<f64>, hi: DVector<f64> },
}

impl Shape {
    pub fn ball(center: DVector<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!("region ball needs radius > 0, got {radius}")));
        }
        Ok(Shape::Ball { center, radius })
    }

    pub fn boxed(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        if (0..lo.len()).any(|i| !(lo[i] < hi[i]) || !lo[i].is_finite() || !hi[i].is_finite()) {
            return Err(Error::InvalidInput("region box needs finite lo < hi".into()));
        }
        Ok(Shape::Box { lo, hi })
    }

    pub fn dim(&self) -> usize {
        match self {
            Shape::Ball { center, .. } => center.len(),
            Shape::Box { lo, .. } => lo.len(),
        }
    }

    pub fn center(&self) -> DVector<f64> {
        match self {
            Shape::Ball { center, .. } => center.clone(),
            Shape::Box { lo, hi } => (lo + hi) * 0.5,
        }
    }

    pub fn bounding_box(&self) -> (DVector<f64>, DVector<f64>) {
        match self {
            Shape::Ball { center, radius } => (center.add_scalar(-radius), center.add_scalar(*radius)),
            Shape::Box { lo, hi } => (lo.clone(), hi.clone()),
        }
    }

    /// Membership in the open shape.
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        match self {
            Shape::Ball { center, radius } => (x - center).norm() < *radius,
            Shape::Box { lo, hi } => (0..x.len()).all(|i| lo[i] < x[i] && x[i] < hi[i]),
        }
    }

    /// Membership in the closed shape.
    pub fn closure_contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        match self {
            Shape::Ball { center, radius } => (x - center).norm() <= radius + tol,
            Shape::Box { lo, hi } => {
                (0..x.len()).all(|i| lo[i] - tol <= x[i] && x[i] <= hi[i] + tol)
            }
        }
    }

    /// Boundary nodes at a refinement level (two endpoints in 1-D).
    pub fn boundary_nodes(&self, level: u32) -> Vec<DVector<f64>> {
        match self.dim() {
            1 => {
                let (lo, hi) = self.bounding_box();
                vec![lo, hi]
            }
            2 => {
                let count = 8usize << level;
                (0..count)
                    .map(|k| curve_point(self, k as f64 / count as f64).0)
                    .collect()
            }
            _ => {
                let mut out = Vec::new();
                let mut seen = std::collections::HashSet::new();
                for tri in base_triangles(self) {
                    collect_vertices(self, &tri, level, &mut seen, &mut out);
                }
                out
            }
        }
    }
}

/// Refinement parameters of boundary meshes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshParams {
    pub base_level: u32,
    pub max_level: u32,
}

impl Default for MeshParams {
    fn default() -> Self {
        Self {
            base_level: 1,
            max_level: 8,
        }
    }
}

/// `U = shape ∩ K`, relatively open in `K`.
#[derive(Clone, Debug, PartialEq)]
pub struct OpenRegion {
    ambient: ConvexSet,
    shape: Shape,
    mesh: MeshParams,
    margin: f64,
}

impl OpenRegion {
    pub fn new(ambient: ConvexSet, shape: Shape) -> Result<Self> {
        check_dim(ambient.dim(), shape.dim())?;
        if !meets(&ambient, &shape)? {
            return Err(Error::InvalidInput("region does not meet the constraint set".into()));
        }
        Ok(Self {
            ambient,
            shape,
            mesh: MeshParams::default(),
            margin: 2.0,
        })
    }

    pub fn with_mesh(mut self, mesh: MeshParams) -> Self {
        self.mesh = mesh;
        self
    }

    /// Margin of the bounding box `B` in units of `diam(U)`.
    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = margin;
        self
    }

    pub fn ambient(&self) -> &ConvexSet {
        &self.ambient
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn mesh(&self) -> MeshParams {
        self.mesh
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    pub fn contains(&self, x: &DVector<f64>) -> Result<bool> {
        Ok(self.shape.contains(x) && self.ambient.distance(x)? == 0.0)
    }

    pub fn closure_contains(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        Ok(self.shape.closure_contains(x, tol) && self.ambient.distance(x)? <= tol)
    }

    fn ambient_is_whole(&self) -> bool {
        matches!(self.ambient.kind(), SetKind::Box { lo, hi }
            if lo.iter().all(|v| v.is_infinite()) && hi.iter().all(|v| v.is_infinite()))
    }

    fn shape_in_interior(&self) -> bool {
        match &self.shape {
            Shape::Ball { center, radius } => self.ambient.interior_contains_ball(center, *radius),
            Shape::Box { lo, hi } => self.ambient.interior_contains_box(lo, hi),
        }
    }

    /// Bounding box of `U`, clipped to `K` when `K` is a box.
    pub fn region_bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let (mut lo, mut hi) = self.shape.bounding_box();
        if let SetKind::Box { lo: klo, hi: khi } = self.ambient.kind() {
            for i in 0..lo.len() {
                lo[i] = lo[i].max(klo[i]).min(hi[i]);
                hi[i] = hi[i].min(khi[i]).max(lo[i]);
            }
        }
        (lo, hi)
    }

    /// The box `B ⊃ U` enlarged by `margin · diam(U)` on every side.
    pub fn margin_box(&self) -> (DVector<f64>, DVector<f64>) {
        let (lo, hi) = self.region_bounds();
        let diam = (&hi - &lo).norm();
        let pad = self.margin * diam;
        (lo.add_scalar(-pad), hi.add_scalar(pad))
    }

    /// Domain on which `I − f∘r` is integrated, with a label. `V = r⁻¹(U) ∩ B` when it has
    /// a closed form, otherwise the shape itself, which gives the same degree by excision
    /// since every fixed point of `f∘r` lies in `K`.
    fn index_domain(&self, retraction: Retraction) -> Result<(Shape, &'static str)> {
        if self.ambient_is_whole() || self.shape_in_interior() {
            return Ok((self.shape.clone(), "region"));
        }
        if let (Retraction::Metric, SetKind::Box { lo: klo, hi: khi }, Shape::Box { lo, hi }) =
            (retraction, self.ambient.kind(), &self.shape)
        {
            let (blo, bhi) = self.margin_box();
            let vlo = DVector::from_fn(lo.len(), |i, _| if lo[i] >= klo[i] { lo[i] } else { blo[i] });
            let vhi = DVector::from_fn(lo.len(), |i, _| if hi[i] <= khi[i] { hi[i] } else { bhi[i] });
            return Ok((Shape::boxed(vlo, vhi)?, "preimage_box"));
        }
        Ok((self.shape.clone(), "excision_shape"))
    }

    /// Boundary nodes of `∂_K U` (shape boundary nodes lying in `K`).
    pub fn relative_boundary_nodes(&self, level: u32) -> Result<Vec<DVector<f64>>> {
        let mut out = Vec::new();
        for p in self.shape.boundary_nodes(level) {
            if self.ambient.distance(&p)? <= 1e-12 * (1.0 + p.norm()) {
                out.push(p);
            }
        }
        Ok(out)
    }
}

/// Whether the open shape meets `K`: tries the nearest point of `K` to the center and a
/// coarse grid of the bounding box.
fn meets(ambient: &ConvexSet, shape: &Shape) -> Result<bool> {
    let c = shape.center();
    if shape.contains(&ambient.project(&c)?) {
        return Ok(true);
    }
    let (lo, hi) = shape.bounding_box();
    let n = c.len();
    for code in 0..9usize.pow(n as u32) {
        let mut rem = code;
        let x = DVector::from_fn(n, |i, _| {
            let k = rem % 9;
            rem /= 9;
            lo[i] + (hi[i] - lo[i]) * (k as f64 + 0.5) / 9.0
        });
        if shape.contains(&x) && ambient.distance(&x)? == 0.0 {
            return Ok(true);
        }
    }
    Ok(false)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityEntry {
    pub param: String,
    pub value: i64,
}

/// One entry of an `(α, h)` sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub h: f64,
    pub value: Option<i64>,
    pub residual: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeCertificate {
    pub value: i64,
    pub method: String,
    pub domain: String,
    pub h: Option<f64>,
    pub alpha: Option<f64>,
    pub mesh_level: u32,
    /// Largest inward displacement applied to boundary nodes that hit an exact zero.
    pub perturbation: f64,
    pub stability: Vec<StabilityEntry>,
    pub min_boundary_residual: f64,
    pub sweep: Vec<SweepRow>,
}

impl DegreeCertificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }
}

// ---------------------------------------------------------------- boundary geometry

/// Point on the counterclockwise boundary curve at parameter `s ∈ [0, 1)`, with the
/// direction towards the center.
fn curve_point(shape: &Shape, s: f64) -> (DVector<f64>, DVector<f64>) {
    let p = match shape {
        Shape::Ball { center, radius } => {
            let a = TAU * s;
            DVector::from_vec(vec![center[0] + radius * a.cos(), center[1] + radius * a.sin()])
        }
        Shape::Box { lo, hi } => {
            let q = 4.0 * s;
            let e = (q.floor() as usize).min(3);
            let u = q - e as f64;
            let (w, h) = (hi[0] - lo[0], hi[1] - lo[1]);
            let (x, y) = match e {
                0 => (lo[0] + u * w, lo[1]),
                1 => (hi[0], lo[1] + u * h),
                2 => (hi[0] - u * w, hi[1]),
                _ => (lo[0], hi[1] - u * h),
            };
            DVector::from_vec(vec![x, y])
        }
    };
    let inward = inward_direction(shape, &p);
    (p, inward)
}

fn inward_direction(shape: &Shape, p: &DVector<f64>) -> DVector<f64> {
    let d = shape.center() - p;
    let n = d.norm();
    if n > 0.0 {
        d / n
    } else {
        DVector::zeros(p.len())
    }
}

fn perimeter(shape: &Shape) -> f64 {
    match shape {
        Shape::Ball { radius, .. } => TAU * radius,
        Shape::Box { lo, hi } => 2.0 * ((hi[0] - lo[0]) + (hi[1] - lo[1])),
    }
}

type Tri = [DVector<f64>; 3];

/// Outward-oriented base triangulation in reference coordinates: octahedron faces for a
/// ball, two triangles per face for a box.
fn base_triangles(shape: &Shape) -> Vec<Tri> {
    let e = |i: usize, s: f64| {
        let mut v = DVector::zeros(3);
        v[i] = s;
        v
    };
    match shape {
        Shape::Ball { .. } => {
            let mut out = Vec::with_capacity(8);
            for sx in [1.0, -1.0] {
                for sy in [1.0, -1.0] {
                    for sz in [1.0, -1.0] {
                        let (a, b, c) = (e(0, sx), e(1, sy), e(2, sz));
                        if sx * sy * sz > 0.0 {
                            out.push([a, b, c]);
                        } else {
                            out.push([a, c, b]);
                        }
                    }
                }
            }
            out
        }
        Shape::Box { lo, hi } => {
            let mut out = Vec::with_capacity(12);
            for i in 0..3 {
                let (j, k) = ((i + 1) % 3, (i + 2) % 3);
                for (side, outward) in [(lo[i], false), (hi[i], true)] {
                    let corner = |a: f64, b: f64| {
                        let mut v = DVector::zeros(3);
                        v[i] = side;
                        v[j] = a;
                        v[k] = b;
                        v
                    };
                    let p00 = corner(lo[j], lo[k]);
                    let p10 = corner(hi[j], lo[k]);
                    let p11 = corner(hi[j], hi[k]);
                    let p01 = corner(lo[j], hi[k]);
                    if outward {
                        out.push([p00.clone(), p10, p11.clone()]);
                        out.push([p00, p11, p01]);
                    } else {
                        out.push([p00.clone(), p11.clone(), p10]);
                        out.push([p00, p01, p11]);
                    }
                }
            }
            out
        }
    }
}

fn realize(shape: &Shape, q: &DVector<f64>) -> DVector<f64> {
    match shape {
        Shape::Ball { center, radius } => center + q * (*radius / q.norm()),
        Shape::Box { .. } => q.clone(),
    }
}

fn midpoints(t: &Tri) -> [DVector<f64>; 3] {
    [
        (&t[0] + &t[1]) * 0.5,
        (&t[1] + &t[2]) * 0.5,
        (&t[2] + &t[0]) * 0.5,
    ]
}

fn split4(t: &Tri) -> [Tri; 4] {
    let [m01, m12, m20] = midpoints(t);
    [
        [t[0].clone(), m01.clone(), m20.clone()],
        [m01.clone(), t[1].clone(), m12.clone()],
        [m20.clone(), m12.clone(), t[2].clone()],
        [m01, m12, m20],
    ]
}

fn key3(q: &DVector<f64>) -> [u64; 3] {
    [q[0].to_bits(), q[1].to_bits(), q[2].to_bits()]
}

fn collect_vertices(
    shape: &Shape,
    t: &Tri,
    level: u32,
    seen: &mut std::collections::HashSet<[u64; 3]>,
    out: &mut Vec<DVector<f64>>,
) {
    if level == 0 {
        for q in t {
            if seen.insert(key3(q)) {
                out.push(realize(shape, q));
            }
        }
        return;
    }
    for sub in split4(t) {
        collect_vertices(shape, &sub, level - 1, seen, out);
    }
}

// ---------------------------------------------------------------- evaluation with memo

struct Evaluator<'m, 'a> {
    map: &'m PointMap<'a>,
    shape: &'m Shape,
    tol: f64,
    min_residual: f64,
    perturbation: f64,
}

impl Evaluator<'_, '_> {
    /// Map value at a boundary node. An exact zero moves the node inward by `mesh_h/3`.
    fn eval(&mut self, p: &DVector<f64>, mesh_h: f64) -> Result<DVector<f64>> {
        let mut point = p.clone();
        let mut v = (self.map)(&point)?;
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!("map is not finite at {:?}", p.as_slice())));
        }
        if v.norm() == 0.0 {
            let shift = mesh_h / 3.0;
            point = p + inward_direction(self.shape, p) * shift;
            v = (self.map)(&point)?;
            self.perturbation = self.perturbation.max(shift);
        }
        let r = v.norm();
        if r <= self.tol {
            return Err(Error::ZeroOnBoundary {
                point: point.iter().copied().collect(),
                residual: r,
            });
        }
        self.min_residual = self.min_residual.min(r);
        Ok(v)
    }
}

fn signed_angle(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let cross = a[0] * b[1] - a[1] * b[0];
    let dot = a[0] * b[0] + a[1] * b[1];
    cross.atan2(dot)
}

fn unit(v: &DVector<f64>) -> DVector<f64> {
    v / v.norm()
}

/// Signed solid angle of the spherical triangle spanned by three unit vectors.
fn solid_angle(a: &DVector<f64>, b: &DVector<f64>, c: &DVector<f64>) -> f64 {
    let triple = a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
        + a[2] * (b[0] * c[1] - b[1] * c[0]);
    2.0 * triple.atan2(1.0 + a.dot(b) + b.dot(c) + c.dot(a))
}

fn round_turns(total: f64, full: f64) -> Result<i64> {
    let turns = total / full;
    let k = turns.round();
    if (turns - k).abs() > 0.25 {
        return Err(Error::inconclusive(format!(
            "boundary integral {turns:.6} turns is not close to an integer"
        )));
    }
    Ok(k as i64)
}

struct Winding<'e, 'm, 'a> {
    ev: &'e mut Evaluator<'m, 'a>,
    cache: HashMap<u64, DVector<f64>>,
    perimeter: f64,
}

impl Winding<'_, '_, '_> {
    fn at(&mut self, s: f64, mesh_h: f64) -> Result<DVector<f64>> {
        let s = if s >= 1.0 { 0.0 } else { s };
        if let Some(v) = self.cache.get(&s.to_bits()) {
            return Ok(v.clone());
        }
        let (p, _) = curve_point(self.ev.shape, s);
        let v = self.ev.eval(&p, mesh_h)?;
        self.cache.insert(s.to_bits(), v.clone());
        Ok(v)
    }

    fn segment(&mut self, s0: f64, v0: &DVector<f64>, s1: f64, v1: &DVector<f64>, depth: u32) -> Result<f64> {
        let d = signed_angle(v0, v1);
        if d.abs() < FRAC_PI_2 {
            return Ok(d);
        }
        if depth >= MAX_BISECTIONS {
            // a jump that survives this much bisection means the map vanishes in between
            let (p, _) = curve_point(self.ev.shape, s0);
            return Err(Error::ZeroOnBoundary {
                point: p.iter().copied().collect(),
                residual: v0.norm().min(v1.norm()),
            });
        }
        let sm = 0.5 * (s0 + s1);
        let vm = self.at(sm, self.perimeter * (s1 - s0) * 0.5)?;
        Ok(self.segment(s0, v0, sm, &vm, depth + 1)? + self.segment(sm, &vm, s1, v1, depth + 1)?)
    }

    fn level(&mut self, level: u32) -> Result<i64> {
        let count = 8usize << level;
        let h = self.perimeter / count as f64;
        let mut total = 0.0;
        let first = self.at(0.0, h)?;
        let mut prev = first.clone();
        for k in 1..=count {
            let s1 = k as f64 / count as f64;
            let v1 = if k == count { first.clone() } else { self.at(s1, h)? };
            total += self.segment((k - 1) as f64 / count as f64, &prev, s1, &v1, 0)?;
            prev = v1;
        }
        round_turns(total, TAU)
    }
}

struct Sphere<'e, 'm, 'a> {
    ev: &'e mut Evaluator<'m, 'a>,
    cache: HashMap<[u64; 3], DVector<f64>>,
}

impl Sphere<'_, '_, '_> {
    fn at(&mut self, q: &DVector<f64>, mesh_h: f64) -> Result<DVector<f64>> {
        let key = key3(q);
        if let Some(v) = self.cache.get(&key) {
            return Ok(v.clone());
        }
        let p = realize(self.ev.shape, q);
        let v = unit(&self.ev.eval(&p, mesh_h)?);
        self.cache.insert(key, v.clone());
        Ok(v)
    }

    fn edge(&self, t: &Tri) -> f64 {
        let p: Vec<DVector<f64>> = t.iter().map(|q| realize(self.ev.shape, q)).collect();
        (&p[0] - &p[1]).norm().max((&p[1] - &p[2]).norm()).max((&p[2] - &p[0]).norm())
    }

    fn triangle(&mut self, t: &Tri, uniform: u32, depth: u32) -> Result<f64> {
        if uniform > 0 {
            let mut s = 0.0;
            for sub in split4(t) {
                s += self.triangle(&sub, uniform - 1, depth)?;
            }
            return Ok(s);
        }
        let h = self.edge(t);
        let a = self.at(&t[0], h)?;
        let b = self.at(&t[1], h)?;
        let c = self.at(&t[2], h)?;
        if a.dot(&b) > 0.0 && b.dot(&c) > 0.0 && c.dot(&a) > 0.0 {
            return Ok(solid_angle(&a, &b, &c));
        }
        if depth >= MAX_SUBDIVISIONS {
            let p = realize(self.ev.shape, &t[0]);
            return Err(Error::ZeroOnBoundary {
                point: p.iter().copied().collect(),
                residual: self.ev.min_residual,
            });
        }
        let mut s = 0.0;
        for sub in split4(t) {
            s += self.triangle(&sub, 0, depth + 1)?;
        }
        Ok(s)
    }
}

/// `deg_B(map, shape)` for `N ≤ 3`. The integer must agree on two consecutive refinement
/// levels (1-D needs a single evaluation).
pub fn brouwer_degree(
    map: &PointMap<'_>,
    shape: &Shape,
    mesh: &MeshParams,
    tol: f64,
) -> Result<DegreeCertificate> {
    let n = shape.dim();
    let mut ev = Evaluator {
        map,
        shape,
        tol,
        min_residual: f64::INFINITY,
        perturbation: 0.0,
    };
    let finish = |value: i64, method: &str, level: u32, stability: Vec<StabilityEntry>, ev: &Evaluator| {
        DegreeCertificate {
            value,
            method: method.to_string(),
            domain: "region".into(),
            h: None,
            alpha: None,
            mesh_level: level,
            perturbation: ev.perturbation,
            stability,
            min_boundary_residual: ev.min_residual,
            sweep: Vec::new(),
        }
    };
    match n {
        1 => {
            let (lo, hi) = shape.bounding_box();
            let h = (hi[0] - lo[0]) / (1u64 << mesh.max_level) as f64;
            let fa = ev.eval(&lo, h)?;
            let fb = ev.eval(&hi, h)?;
            check_dim(1, fa.len())?;
            let value = ((fb[0].signum() - fa[0].signum()) / 2.0) as i64;
            let stability = vec![StabilityEntry {
                param: "endpoints".into(),
                value,
            }];
            Ok(finish(value, "sign_change", 0, stability, &ev))
        }
        2 => {
            let mut stability = Vec::new();
            let perim = perimeter(shape);
            let mut w = Winding {
                ev: &mut ev,
                cache: HashMap::new(),
                perimeter: perim,
            };
            let mut prev = None;
            for level in mesh.base_level..=mesh.max_level {
                let v = w.level(level)?;
                stability.push(StabilityEntry {
                    param: format!("level {level}"),
                    value: v,
                });
                if prev == Some(v) {
                    return Ok(finish(v, "winding_number", level, stability, &ev));
                }
                prev = Some(v);
            }
            Err(Error::Inconclusive {
                reason: format!("winding number did not stabilise by level {}", mesh.max_level),
                sweep: Vec::new(),
            })
        }
        3 => {
            let mut stability = Vec::new();
            let base = base_triangles(shape);
            let mut sp = Sphere {
                ev: &mut ev,
                cache: HashMap::new(),
            };
            let mut prev = None;
            let top = mesh.max_level.min(MAX_UNIFORM_LEVEL_3D).max(mesh.base_level);
            for level in mesh.base_level..=top {
                let mut total = 0.0;
                for t in &base {
                    total += sp.triangle(t, level, 0)?;
                }
                let v = round_turns(total, 4.0 * PI)?;
                stability.push(StabilityEntry {
                    param: format!("level {level}"),
                    value: v,
                });
                if prev == Some(v) {
                    return Ok(finish(v, "solid_angle", level, stability, &ev));
                }
                prev = Some(v);
            }
            Err(Error::inconclusive(format!(
                "solid-angle degree did not stabilise by level {top}"
            )))
        }
        _ => Err(Error::Precondition(format!(
            "degree is computed for dimensions 1 to 3 only, got {n}; reduce the instance first"
        ))),
    }
}

/// `Ind_K(f, U) = deg_B(I − f∘r, V)`.
pub fn fixed_point_index(
    f: &PointMap<'_>,
    region: &OpenRegion,
    retraction: Retraction,
    tol: f64,
) -> Result<DegreeCertificate> {
    let set = &region.ambient;
    let composite = |x: &DVector<f64>| -> Result<DVector<f64>> {
        let rx = set.retract(x, retraction)?;
        Ok(x - f(&rx)?)
    };
    let (domain, label) = region.index_domain(retraction)?;
    let mut cert = brouwer_degree(&composite, &domain, &region.mesh, tol)?;
    cert.domain = label.to_string();
    if region.shape_in_interior() && !region.ambient_is_whole() {
        let direct = |x: &DVector<f64>| -> Result<DVector<f64>> { Ok(x - f(x)?) };
        let on_u = brouwer_degree(&direct, &region.shape, &region.mesh, tol)?;
        if on_u.value != cert.value {
            return Err(Error::inconclusive(format!(
                "index on V ({}) differs from the degree on U ({})",
                cert.value, on_u.value
            )));
        }
    }
    Ok(cert)
}

/// Knobs for the constrained degree.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DegreeOptions {
    pub rule: SelectionRule,
    pub retraction: Retraction,
    pub tol: f64,
    /// Time at which `G = F(time, ·)` is frozen.
    pub time: f64,
}

impl Default for DegreeOptions {
    fn default() -> Self {
        Self {
            rule: SelectionRule::Barycenter,
            retraction: Retraction::Metric,
            tol: 1e-9,
            time: 0.0,
        }
    }
}

/// `Ind_K(r∘J_h(I + hg), U)` for the tangent selection `g` of `G` with accuracy `α`.
pub fn constrained_index(
    op: &LinearOperator,
    map: &SetValuedMap,
    region: &OpenRegion,
    alpha: f64,
    h: f64,
    opts: &DegreeOptions,
) -> Result<DegreeCertificate> {
    let set = &region.ambient;
    check_dim(op.dim(), set.dim())?;
    let sel = TangentSelection::new(map.clone(), set.clone(), alpha, opts.rule)?;
    let resolvent = op.resolvent(h)?;
    let one_step = |x: &DVector<f64>| -> Result<DVector<f64>> {
        let g = sel.eval(opts.time, x)?;
        set.retract(&resolvent.apply(&(x + g * h)), opts.retraction)
    };
    let mut cert = fixed_point_index(&one_step, region, opts.retraction, opts.tol)?;
    cert.method = "constrained_index".into();
    cert.h = Some(h);
    cert.alpha = Some(alpha);
    Ok(cert)
}

/// `min d(−Ax, G(t, x))` over boundary nodes of `∂_K U`, with the minimiser.
pub fn rhs_boundary_residual(
    op: &LinearOperator,
    map: &SetValuedMap,
    region: &OpenRegion,
    time: f64,
) -> Result<(f64, DVector<f64>)> {
    let level = region.mesh.base_level + if region.dim() == 3 { 1 } else { 3 };
    let mut best = (f64::INFINITY, region.shape.center());
    for x in region.relative_boundary_nodes(level)? {
        let r = map.value(time, &x)?.distance(&-op.apply(&x));
        if r < best.0 {
            best = (r, x);
        }
    }
    Ok(best)
}

/// `deg_K(A + G, U)`: the integer on which the last three sweep entries agree.
pub fn degree_rhs(
    op: &LinearOperator,
    map: &SetValuedMap,
    region: &OpenRegion,
    sweep: &[(f64, f64)],
    opts: &DegreeOptions,
) -> Result<DegreeCertificate> {
    if region.dim() > 3 {
        return Err(Error::Precondition(format!(
            "degree is computed for dimensions 1 to 3 only, got {}",
            region.dim()
        )));
    }
    let (residual, at) = rhs_boundary_residual(op, map, region, opts.time)?;
    if residual <= opts.tol {
        return Err(Error::BoundaryResidual {
            point: at.iter().copied().collect(),
            residual,
        });
    }
    let mut rows = Vec::with_capacity(sweep.len());
    let mut certs = Vec::with_capacity(sweep.len());
    for &(alpha, h) in sweep {
        match constrained_index(op, map, region, alpha, h, opts) {
            Ok(c) => {
                rows.push(SweepRow {
                    alpha,
                    h,
                    value: Some(c.value),
                    residual: Some(c.min_boundary_residual),
                    error: None,
                });
                certs.push(Some(c));
            }
            Err(e) => {
                rows.push(SweepRow {
                    alpha,
                    h,
                    value: None,
                    residual: None,
                    error: Some(e.to_string()),
                });
                certs.push(None);
            }
        }
    }
    if rows.len() < 3 {
        return Err(Error::Inconclusive {
            reason: "degree sweep needs at least three entries".into(),
            sweep: rows,
        });
    }
    let tail: Vec<Option<i64>> = rows[rows.len() - 3..].iter().map(|r| r.value).collect();
    match tail[..] {
        [Some(a), Some(b), Some(c)] if a == b && b == c => {
            let last = certs.pop().flatten().expect("stable tail has certificates");
            let stability = rows
                .iter()
                .filter_map(|r| {
                    r.value.map(|v| StabilityEntry {
                        param: format!("alpha={} h={}", r.alpha, r.h),
                        value: v,
                    })
                })
                .collect();
            Ok(DegreeCertificate {
                value: a,
                method: "constrained_degree".into(),
                stability,
                min_boundary_residual: residual.min(last.min_boundary_residual),
                sweep: rows,
                ..last
            })
        }
        _ => Err(Error::Inconclusive {
            reason: "degree sweep did not stabilise over its last three entries".into(),
            sweep: rows,
        }),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomotopyReport {
    pub z: Vec<f64>,
    pub values: Vec<i64>,
    pub min_residual: f64,
    pub constant: bool,
}

/// Degrees of `A + H(z, ·)` along sampled `z`. A vanishing boundary residual is reported
/// as an error naming `z`, never as a degree jump.
pub fn degree_homotopy_check(
    op: &LinearOperator,
    family: &dyn Fn(f64) -> Result<SetValuedMap>,
    region: &OpenRegion,
    z_samples: &[f64],
    sweep: &[(f64, f64)],
    opts: &DegreeOptions,
) -> Result<HomotopyReport> {
    let mut values = Vec::with_capacity(z_samples.len());
    let mut min_residual = f64::INFINITY;
    for &z in z_samples {
        let map = family(z)?;
        let (residual, _) = rhs_boundary_residual(op, &map, region, opts.time)?;
        if residual <= opts.tol {
            return Err(Error::HomotopyResidual { z, residual });
        }
        min_residual = min_residual.min(residual);
        values.push(degree_rhs(op, &map, region, sweep, opts)?.value);
    }
    let constant = values.windows(2).all(|w| w[0] == w[1]);
    Ok(HomotopyReport {
        z: z_samples.to_vec(),
        values,
        min_residual,
        constant,
    })
}

/// Searches `cl U` for `x` with `d(0, Ax + G(t, x)) ≤ accept`: a grid scan followed by a
/// compass search from the best grid points.
pub fn locate_zero(
    op: &LinearOperator,
    map: &SetValuedMap,
    region: &OpenRegion,
    time: f64,
    accept: f64,
) -> Result<Option<(DVector<f64>, f64)>> {
    let n = region.dim();
    let residual = |x: &DVector<f64>| -> Result<f64> { Ok(map.value(time, x)?.distance(&-op.apply(x))) };
    let (lo, hi) = region.region_bounds();
    let per_axis = match n {
        1 => 2001,
        2 => 121,
        _ => 31,
    };
    let mut scored: Vec<(f64, DVector<f64>)> = Vec::new();
    let total = (per_axis as u64).pow(n as u32);
    for code in 0..total {
        let mut rem = code;
        let x = DVector::from_fn(n, |i, _| {
            let k = rem % per_axis as u64;
            rem /= per_axis as u64;
            lo[i] + (hi[i] - lo[i]) * k as f64 / (per_axis - 1) as f64
        });
        if region.closure_contains(&x, 0.0)? {
            scored.push((residual(&x)?, x));
        }
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let spacing = (0..n)
        .map(|i| (hi[i] - lo[i]) / (per_axis - 1) as f64)
        .fold(0.0, f64::max);
    let mut best: Option<(DVector<f64>, f64)> = None;
    for (r0, x0) in scored.into_iter().take(8) {
        let (x, r) = compass_search(&residual, region, x0, r0, spacing)?;
        if best.as_ref().is_none_or(|b| r < b.1) {
            best = Some((x, r));
        }
        if best.as_ref().is_some_and(|b| b.1 <= accept) {
            break;
        }
    }
    Ok(best.filter(|b| b.1 <= accept))
}

fn compass_search(
    residual: &dyn Fn(&DVector<f64>) -> Result<f64>,
    region: &OpenRegion,
    mut x: DVector<f64>,
    mut r: f64,
    mut step: f64,
) -> Result<(DVector<f64>, f64)> {
    let n = x.len();
    let floor = 1e-15 * (1.0 + x.norm());
    let mut evals = 0;
    while step > floor && r > 0.0 && evals < 200_000 {
        let mut improved = false;
        for i in 0..n {
            for s in [1.0, -1.0] {
                let mut y = x.clone();
                y[i] += s * step;
                if !region.closure_contains(&y, 0.0)? {
                    continue;
                }
                evals += 1;
                let ry = residual(&y)?;
                if ry < r {
                    x = y;
                    r = ry;
                    improved = true;
                    break;
                }
            }
            if improved {
                break;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok((x, r))
}
