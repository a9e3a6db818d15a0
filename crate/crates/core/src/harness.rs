//! End-to-end checks that the fixed-point index of the Poincaré operator `P_t` equals the
//! constrained degree `deg_K(A + F(0, ·), U)` for small `t`, plus the boundary scans that
//! explain why `t` has to be small.

use std::fmt::Write as _;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::convex::{ConvexSet, Retraction, SetValue};
use crate::degree::{self, DegreeCertificate, DegreeOptions, OpenRegion};
use crate::error::{Error, Result};
use crate::integrator::{self, HomotopyFlowSpec, PoincareMap, Scheme, Strategy};
use crate::operator::LinearOperator;
use crate::setvalued::{SelectionRule, SetValuedMap, TangentSelection};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweeps {
    /// Poincaré times, strictly decreasing.
    pub t: Vec<f64>,
    /// Resolvent steps for the degree, strictly decreasing.
    pub h: Vec<f64>,
    /// Selection accuracies for the degree, paired with `h`.
    pub alpha: Vec<f64>,
    /// Integration step of the Poincaré operators.
    pub poincare_h: f64,
}

impl Sweeps {
    /// `(α_i, h_i)`, the shorter list extended by its last value.
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        let n = self.h.len().max(self.alpha.len());
        (0..n)
            .map(|i| {
                let a = self.alpha[i.min(self.alpha.len() - 1)];
                let h = self.h[i.min(self.h.len() - 1)];
                (a, h)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let decreasing = |xs: &[f64], name: &str| -> Result<()> {
            if xs.is_empty() || xs.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::Config(format!("sweep {name} must be nonempty and positive")));
            }
            if xs.windows(2).any(|w| w[1] >= w[0]) {
                return Err(Error::Config(format!("sweep {name} must be strictly decreasing")));
            }
            Ok(())
        };
        decreasing(&self.t, "t")?;
        decreasing(&self.h, "h")?;
        if self.alpha.is_empty() || self.alpha.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config("sweep alpha must be nonempty and nonnegative".into()));
        }
        if !(self.poincare_h > 0.0) {
            return Err(Error::Config("poincare_h must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedDegree {
    pub value: i64,
    pub note: String,
}

/// A complete problem instance.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub op: LinearOperator,
    pub set: ConvexSet,
    pub map: SetValuedMap,
    pub region: Option<OpenRegion>,
    pub sweeps: Sweeps,
    pub seeds: Vec<u64>,
    pub scheme: Scheme,
    pub expected_degree: Option<ExpectedDegree>,
}

impl Scenario {
    pub fn region(&self) -> Result<&OpenRegion> {
        self.region
            .as_ref()
            .ok_or_else(|| Error::Config(format!("scenario {} has no region", self.name)))
    }

    /// The single-valued field used for Poincaré operators.
    pub fn selection(&self, rule: SelectionRule) -> Result<TangentSelection> {
        let alpha = *self.sweeps.alpha.last().expect("validated sweep");
        TangentSelection::new(self.map.clone(), self.set.clone(), alpha, rule)
    }

    /// Barycenter, the first two vertices, then one seeded strategy per scenario seed.
    pub fn strategies(&self) -> Vec<Strategy> {
        let mut s = vec![Strategy::TangentBarycenter, Strategy::Vertex(0), Strategy::Vertex(1)];
        s.extend(self.seeds.iter().map(|&k| Strategy::RandomSeeded(k)));
        s
    }
}

/// Index of `P_t` at one sweep time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexRow {
    pub t: f64,
    pub h: f64,
    pub alpha: f64,
    pub index: Option<i64>,
    pub residual: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub scenario: String,
    pub rhs_certificate: DegreeCertificate,
    pub index_table: Vec<IndexRow>,
    /// Largest sweep `t` such that the index agrees with the degree at every `t' ≤ t`.
    pub t_star: Option<f64>,
    pub pass: bool,
    pub expected_degree: Option<i64>,
}

impl VerificationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Columns `t, h, alpha, index, residual, rhs_value, pass`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,h,alpha,index,residual,rhs_value,pass\n");
        let rhs = self.rhs_certificate.value;
        for r in &self.index_table {
            let index = r.index.map_or(String::new(), |v| v.to_string());
            let residual = r.residual.map_or(String::new(), |v| format!("{v:e}"));
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.t,
                r.h,
                r.alpha,
                index,
                residual,
                rhs,
                r.index == Some(rhs)
            )
            .unwrap();
        }
        out
    }
}

fn boundary_nodes(region: &OpenRegion) -> Result<Vec<DVector<f64>>> {
    region.relative_boundary_nodes(region.mesh().base_level + 2)
}

fn is_single_valued(s: &Scenario, nodes: &[DVector<f64>]) -> Result<bool> {
    for x in nodes {
        if !s.map.value(0.0, x)?.is_single_point() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `min ‖x − u(t)‖` over boundary nodes and funnel strategies.
pub fn funnel_guard(s: &Scenario, t: f64) -> Result<f64> {
    let region = s.region()?;
    let mut floor = f64::INFINITY;
    for x in boundary_nodes(region)? {
        for tr in integrator::funnel(
            &s.op,
            &s.set,
            &s.map,
            &x,
            t,
            s.sweeps.poincare_h,
            &s.strategies(),
            s.scheme,
        ) {
            floor = floor.min((&x - tr?.last()).norm());
        }
    }
    Ok(floor)
}

/// Computes `deg_K(A + F(0, ·), U)` once and `Ind_K(P_t, U)` for every sweep `t`.
pub fn verify(s: &Scenario) -> Result<VerificationReport> {
    if s.op.growth_m() != 1.0 {
        return Err(Error::Precondition(format!(
            "growth bound M = {} but the degree formula is checked only for M = 1",
            s.op.growth_m()
        )));
    }
    s.sweeps.validate()?;
    let region = s.region()?;
    let opts = DegreeOptions::default();
    let rhs = degree::degree_rhs(&s.op, &s.map, region, &s.sweeps.pairs(), &opts)?;

    let selection = s.selection(SelectionRule::Barycenter)?;
    let alpha = selection.alpha();
    let multivalued = !is_single_valued(s, &boundary_nodes(region)?)?;
    let mut rows = Vec::with_capacity(s.sweeps.t.len());
    for &t in &s.sweeps.t {
        let h = s.sweeps.poincare_h;
        let result = PoincareMap::new(&s.op, &s.set, &selection, t, h, s.scheme).and_then(|p| {
            let map = |x: &DVector<f64>| p.apply(x);
            degree::fixed_point_index(&map, region, Retraction::Metric, opts.tol)
        });
        let mut row = IndexRow {
            t,
            h,
            alpha,
            index: None,
            residual: None,
            error: None,
        };
        match result {
            Ok(c) => {
                row.index = Some(c.value);
                row.residual = Some(c.min_boundary_residual);
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        if multivalued && row.index.is_some() {
            let floor = funnel_guard(s, t)?;
            if floor <= opts.tol {
                row.index = None;
                row.error = Some(format!("funnel returns to a boundary point (floor {floor:.3e})"));
            }
            row.residual = row.residual.map(|r| r.min(floor));
        }
        rows.push(row);
    }

    let mut ascending: Vec<&IndexRow> = rows.iter().collect();
    ascending.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut t_star = None;
    for r in &ascending {
        if r.index == Some(rhs.value) {
            t_star = Some(r.t);
        } else {
            break;
        }
    }
    let pass = ascending.len() >= 3 && ascending[..3].iter().all(|r| r.index == Some(rhs.value));
    Ok(VerificationReport {
        scenario: s.name.clone(),
        rhs_certificate: rhs,
        index_table: rows,
        t_star,
        pass,
        expected_degree: s.expected_degree.as_ref().map(|e| e.value),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExclusionRow {
    pub t: f64,
    /// `min ‖x − u(t)‖` over boundary nodes, `z` samples and funnel strategies.
    pub floor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub horizon: f64,
    pub z: Vec<f64>,
    pub rows: Vec<ExclusionRow>,
    pub global_min: f64,
    /// Largest sampled `t` below which every floor exceeds the threshold.
    pub t_star: Option<f64>,
    pub threshold: f64,
}

impl ExclusionReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,floor\n");
        for r in &self.rows {
            writeln!(out, "{},{:e}", r.t, r.floor).unwrap();
        }
        out
    }
}

/// `G(z, x) = (1 − z) f(x) + z F̂(T, x)` with `f` the barycentric tangent selection.
pub fn exclusion_homotopy(s: &Scenario, z: f64, horizon: f64) -> Result<SetValuedMap> {
    let f = s.selection(SelectionRule::Barycenter)?;
    let map = s.map.clone();
    let c = map.growth_c();
    SetValuedMap::from_value_fn(
        map.dim(),
        std::sync::Arc::new(move |_, x| {
            let fx = f.eval(0.0, x)?;
            let hull: SetValue = map.hull_map(horizon, x, 9)?;
            Ok(hull.affine_blend(&fx, 1.0 - z, z))
        }),
        // f(x) lies within α of F(0, x), so the blend grows at most like F plus α
        c + s.sweeps.alpha.last().copied().unwrap_or(0.0),
    )
}

/// Floors of `‖x − u(t)‖` for solutions of `u̇ ∈ Au + G(z, u)` from boundary points.
/// A zero floor is a finding, not an error.
pub fn boundary_exclusion_scan(
    s: &Scenario,
    horizon: Option<f64>,
    z_samples: &[f64],
    t_samples: &[f64],
    threshold: f64,
) -> Result<ExclusionReport> {
    let region = s.region()?;
    let t_max_sweep = s.sweeps.t.iter().copied().fold(0.0, f64::max);
    let horizon = horizon.unwrap_or(2.0 * t_max_sweep);
    let mut ts: Vec<f64> = t_samples.to_vec();
    ts.sort_by(f64::total_cmp);
    let t_end = *ts.last().ok_or_else(|| Error::Config("no t samples".into()))?;
    let steps = integrator::step_count(t_end, s.sweeps.poincare_h);
    let dt = t_end / steps as f64;
    let nodes = boundary_nodes(region)?;
    let strategies = if is_single_valued(s, &nodes)? {
        vec![Strategy::TangentBarycenter]
    } else {
        s.strategies()
    };

    let mut floors = vec![f64::INFINITY; ts.len()];
    for &z in z_samples {
        let g = exclusion_homotopy(s, z, horizon)?;
        for x in &nodes {
            for tr in integrator::funnel(&s.op, &s.set, &g, x, t_end, dt, &strategies, s.scheme) {
                let tr = tr?;
                for (k, &t) in ts.iter().enumerate() {
                    let idx = ((t / dt).round() as usize).min(tr.len() - 1);
                    floors[k] = floors[k].min((x - &tr.states[idx]).norm());
                }
            }
        }
    }
    let rows: Vec<ExclusionRow> = ts
        .iter()
        .zip(&floors)
        .map(|(&t, &floor)| ExclusionRow { t, floor })
        .collect();
    let mut t_star = None;
    for r in &rows {
        if r.floor > threshold {
            t_star = Some(r.t);
        } else {
            break;
        }
    }
    Ok(ExclusionReport {
        horizon,
        z: z_samples.to_vec(),
        global_min: floors.iter().copied().fold(f64::INFINITY, f64::min),
        rows,
        t_star,
        threshold,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeReport {
    pub t: f64,
    pub h: f64,
    pub z: Vec<f64>,
    /// `min ‖x − Θ_t(x, z)‖` over boundary nodes, per `z`.
    pub stage1: Vec<f64>,
    /// `min ‖x − r(Ψ̂_t(z, x))‖` over boundary nodes, per `z`.
    pub stage2: Vec<f64>,
    pub stage1_min: f64,
    pub stage2_min: f64,
    /// `max ‖A_z x + f_z(x) − (zAx + g_z(x))‖` over the same nodes.
    pub identity_residual: f64,
}

/// `Ψ̂_t(z, x) = (1 − c) x + c Θ_{zt}(x, 0)` with `c = 1/(z(t + z − zt))`, and `g(x)` at `z = 0`.
pub fn psi_hat(
    spec0: &HomotopyFlowSpec<'_>,
    x: &DVector<f64>,
    z: f64,
    t: f64,
    dt: f64,
    scheme: Scheme,
) -> Result<DVector<f64>> {
    if z == 0.0 {
        return spec0.g(0.0, x);
    }
    let c = 1.0 / (z * (t + z - z * t));
    let theta = integrator::homotopy_flow(spec0, x, z * t, dt, scheme)?;
    Ok(x * (1.0 - c) + theta * c)
}

/// Boundary residuals of the two homotopies joining `P_t` to `g = r∘J_h(I + hf)`.
pub fn homotopy_bridge_check(
    s: &Scenario,
    t: f64,
    h: f64,
    z_samples: &[f64],
) -> Result<BridgeReport> {
    let region = s.region()?;
    let f = s.selection(SelectionRule::Barycenter)?;
    let dt = s.sweeps.poincare_h.min(t / 50.0);
    let nodes = boundary_nodes(region)?;
    let spec0 = HomotopyFlowSpec::new(0.0, h, &s.op, &s.set, &f)?;
    let mut stage1 = Vec::with_capacity(z_samples.len());
    let mut stage2 = Vec::with_capacity(z_samples.len());
    let mut identity: f64 = 0.0;
    for &z in z_samples {
        let spec = HomotopyFlowSpec::new(z, h, &s.op, &s.set, &f)?;
        let mut m1 = f64::INFINITY;
        let mut m2 = f64::INFINITY;
        for x in &nodes {
            identity = identity.max(spec.identity_residual(0.0, x)?);
            let theta = integrator::homotopy_flow(&spec, x, t, dt, s.scheme)?;
            m1 = m1.min((x - theta).norm());
            let psi = s.set.project(&psi_hat(&spec0, x, z, t, dt, s.scheme)?)?;
            m2 = m2.min((x - psi).norm());
        }
        stage1.push(m1);
        stage2.push(m2);
    }
    Ok(BridgeReport {
        t,
        h,
        z: z_samples.to_vec(),
        stage1_min: stage1.iter().copied().fold(f64::INFINITY, f64::min),
        stage2_min: stage2.iter().copied().fold(f64::INFINITY, f64::min),
        stage1,
        stage2,
        identity_residual: identity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degree::Shape;
    use nalgebra::DMatrix;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn sweeps() -> Sweeps {
        Sweeps {
            t: vec![0.5, 0.2, 0.1, 0.05, 0.02],
            h: vec![1e-1, 3e-2, 1e-2],
            alpha: vec![1e-2, 1e-3, 1e-4],
            poincare_h: 1e-3,
        }
    }

    fn scalar_sink() -> Scenario {
        let set = ConvexSet::whole(1).unwrap();
        Scenario {
            name: "scalar_sink".into(),
            op: LinearOperator::new(-DMatrix::identity(1, 1)).unwrap(),
            map: SetValuedMap::zero(1).unwrap(),
            region: Some(OpenRegion::new(set.clone(), Shape::boxed(v(&[-1.0]), v(&[1.0])).unwrap()).unwrap()),
            set,
            sweeps: sweeps(),
            seeds: vec![1],
            scheme: Scheme::ProjectedSemigroup,
            expected_degree: Some(ExpectedDegree {
                value: 1,
                note: "I − P_t = (1 − e^{−t})".into(),
            }),
        }
    }

    #[test]
    fn pairs_extend_the_shorter_list() {
        let mut s = sweeps();
        s.alpha = vec![0.1];
        assert_eq!(s.pairs(), vec![(0.1, 1e-1), (0.1, 3e-2), (0.1, 1e-2)]);
        s.h = vec![1e-1, 1e-1];
        assert!(s.validate().is_err());
    }

    #[test]
    fn scalar_sink_verifies() {
        let r = verify(&scalar_sink()).unwrap();
        assert!(r.pass);
        assert_eq!(r.rhs_certificate.value, 1);
        assert_eq!(r.t_star, Some(0.5));
        let csv = r.to_csv();
        assert!(csv.starts_with("t,h,alpha,index,residual,rhs_value,pass\n0.5,0.001,"));
        assert_eq!(csv.lines().count(), 6);
    }

    #[test]
    fn growth_above_one_is_refused() {
        let mut s = scalar_sink();
        s.op = s.op.clone().with_growth(2.0, 0.0).unwrap();
        assert!(matches!(verify(&s), Err(Error::Precondition(_))));
    }

    #[test]
    fn scalar_bridge_residuals_are_positive() {
        let s = scalar_sink();
        let z: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let r = homotopy_bridge_check(&s, 0.05, 1e-2, &z).unwrap();
        assert!(r.stage1_min > 0.0 && r.stage2_min > 0.0);
        assert!(r.identity_residual <= 1e-12);
    }

    #[test]
    fn bridge_endpoints() {
        let s = scalar_sink();
        let f = s.selection(SelectionRule::Barycenter).unwrap();
        let x = v(&[1.0]);
        let (t, h, dt) = (0.05, 1e-2, 1e-3);
        let spec1 = HomotopyFlowSpec::new(1.0, h, &s.op, &s.set, &f).unwrap();
        let theta = integrator::homotopy_flow(&spec1, &x, t, dt, s.scheme).unwrap();
        let p = integrator::poincare(&s.op, &s.set, &f, &x, t, dt, s.scheme).unwrap();
        assert!((theta - p).norm() <= 1e-9);
        let spec0 = HomotopyFlowSpec::new(0.0, h, &s.op, &s.set, &f).unwrap();
        let g = spec0.g(0.0, &x).unwrap();
        assert!((psi_hat(&spec0, &x, 0.0, t, dt, s.scheme).unwrap() - &g).norm() <= 1e-9);
        // Ψ̂ approaches g as z → 0
        let gaps: Vec<f64> = [1e-1, 1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&z| (psi_hat(&spec0, &x, z, t, dt, s.scheme).unwrap() - &g).norm())
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    }

    #[test]
    fn exclusion_floor_of_scalar_sink() {
        let s = scalar_sink();
        let r = boundary_exclusion_scan(&s, None, &[0.0, 0.5, 1.0], &[0.1, 0.5], 1e-6).unwrap();
        for row in &r.rows {
            assert!((row.floor - (1.0 - (-row.t).exp())).abs() < 1e-3);
        }
        assert_eq!(r.t_star, Some(0.5));
        assert_eq!(r.horizon, 1.0);
    }

    #[test]
    fn boundary_equilibrium_gives_zero_floor() {
        // ẋ = x(1 − x²) has equilibria at ±1 on ∂U
        let mut s = scalar_sink();
        s.op = LinearOperator::zero(1).unwrap();
        s.map = SetValuedMap::single_valued(1, |_, x| v(&[x[0] * (1.0 - x[0] * x[0])]), 10.0).unwrap();
        let r = boundary_exclusion_scan(&s, None, &[0.0, 1.0], &[0.1, 0.5], 1e-6).unwrap();
        assert!(r.rows.iter().all(|row| row.floor == 0.0));
        assert_eq!(r.t_star, None);
    }
}
