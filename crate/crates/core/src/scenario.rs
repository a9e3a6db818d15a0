//! Scenario files: one JSON document with `operator`, `set`, `map`, `region` and `sweeps`
//! sections, built into a runnable [`Scenario`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::convex::ConvexSet;
use crate::degree::{MeshParams, OpenRegion, Shape};
use crate::error::{Error, Result};
use crate::harness::{ExpectedDegree, Scenario, Sweeps};
use crate::integrator::Scheme;
use crate::operator::LinearOperator;
use crate::setvalued::SetValuedMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    /// Dense, row-major.
    Matrix {
        rows: Vec<Vec<f64>>,
    },
    Diag {
        values: Vec<f64>,
    },
    #[serde(rename = "dirichlet_laplacian_1d")]
    DirichletLaplacian1d {
        n: usize,
    },
    Zero {
        dim: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub struct GrowthSpec {
    pub m: f64,
    pub omega: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    /// `null` bounds are infinite.
    Box {
        lo: Vec<Option<f64>>,
        hi: Vec<Option<f64>>,
    },
    Halfspaces {
        normals: Vec<Vec<f64>>,
        offsets: Vec<f64>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Product {
        factors: Vec<SetSpec>,
    },
    Whole {
        dim: usize,
    },
    Orthant {
        dim: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    Zero {
        dim: usize,
    },
    /// `F(x) = Mx + b + B(0, radius)`.
    Linear {
        matrix: Vec<Vec<f64>>,
        offset: Vec<f64>,
        #[serde(default)]
        radius: f64,
    },
    Interval {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    LogisticInterval {
        grid: usize,
        rate: f64,
    },
    RegularizedSign {
        grid: usize,
        gain: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub shape: ShapeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<MeshParams>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub x0: Vec<f64>,
    pub t_end: f64,
    pub h: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub operator: OperatorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth: Option<GrowthSpec>,
    pub set: SetSpec,
    pub map: MapSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionSpec>,
    pub sweeps: Sweeps,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_degree: Option<ExpectedDegree>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSpec>,
}

fn vector(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(Error::Config("matrix rows must be nonempty and of equal length".into()));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

impl OperatorSpec {
    pub fn build(&self) -> Result<LinearOperator> {
        match self {
            OperatorSpec::Matrix { rows } => LinearOperator::new(matrix(rows)?),
            OperatorSpec::Diag { values } => LinearOperator::diag(values),
            OperatorSpec::DirichletLaplacian1d { n } => LinearOperator::dirichlet_laplacian_1d(*n),
            OperatorSpec::Zero { dim } => LinearOperator::zero(*dim),
        }
    }
}

impl SetSpec {
    pub fn build(&self) -> Result<ConvexSet> {
        match self {
            SetSpec::Box { lo, hi } => {
                let lo = DVector::from_iterator(lo.len(), lo.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)));
                let hi = DVector::from_iterator(hi.len(), hi.iter().map(|v| v.unwrap_or(f64::INFINITY)));
                ConvexSet::boxed(lo, hi)
            }
            SetSpec::Halfspaces { normals, offsets } => {
                ConvexSet::halfspaces(normals.iter().map(|n| vector(n)).collect(), offsets.clone())
            }
            SetSpec::Ball { center, radius } => ConvexSet::ball(vector(center), *radius),
            SetSpec::Product { factors } => {
                ConvexSet::product(factors.iter().map(SetSpec::build).collect::<Result<_>>()?)
            }
            SetSpec::Whole { dim } => ConvexSet::whole(*dim),
            SetSpec::Orthant { dim } => ConvexSet::orthant(*dim),
        }
    }
}

impl MapSpec {
    pub fn build(&self) -> Result<SetValuedMap> {
        match self {
            MapSpec::Zero { dim } => SetValuedMap::zero(*dim),
            MapSpec::Linear {
                matrix: m,
                offset,
                radius,
            } => SetValuedMap::linear(matrix(m)?, vector(offset), *radius),
            MapSpec::Interval { lo, hi } => SetValuedMap::interval(vector(lo), vector(hi)),
            MapSpec::LogisticInterval { grid, rate } => SetValuedMap::logistic_interval(*grid, *rate),
            MapSpec::RegularizedSign { grid, gain } => SetValuedMap::regularized_sign(*grid, *gain),
        }
    }
}

impl RegionSpec {
    pub fn build(&self, ambient: ConvexSet) -> Result<OpenRegion> {
        let shape = match &self.shape {
            ShapeSpec::Ball { center, radius } => Shape::ball(vector(center), *radius)?,
            ShapeSpec::Box { lo, hi } => Shape::boxed(vector(lo), vector(hi))?,
        };
        let mut region = OpenRegion::new(ambient, shape)?;
        if let Some(m) = self.margin {
            region = region.with_margin(m);
        }
        if let Some(mesh) = self.mesh {
            region = region.with_mesh(mesh);
        }
        Ok(region)
    }
}

impl ScenarioSpec {
    /// Parses a scenario document; errors carry the line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("scenario parse error: {e}")))
    }

    /// Parses after applying `key=value` overrides on dotted paths (`sweeps.h=[0.1,0.01]`,
    /// `region.shape.radius=2`, `seeds.0=7`). Values are JSON, falling back to strings.
    pub fn from_json_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: Value = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("scenario parse error: {e}")))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        serde_json::from_value(doc).map_err(|e| Error::Config(format!("scenario error after overrides: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn build(&self) -> Result<Scenario> {
        let mut op = self.operator.build()?;
        if let Some(g) = &self.growth {
            op = op.with_growth(g.m, g.omega)?;
        }
        let set = self.set.build()?;
        let map = self.map.build()?;
        let n = op.dim();
        for (what, d) in [("set", set.dim()), ("map", map.dim())] {
            if d != n {
                return Err(Error::Config(format!("{what} has dimension {d}, operator has {n}")));
            }
        }
        let region = match &self.region {
            Some(r) => {
                let region = r.build(set.clone())?;
                if region.dim() != n {
                    return Err(Error::Config(format!(
                        "region has dimension {}, operator has {n}",
                        region.dim()
                    )));
                }
                Some(region)
            }
            None => None,
        };
        self.sweeps.validate()?;
        if let Some(sim) = &self.simulate {
            if sim.x0.len() != n {
                return Err(Error::Config(format!("simulate.x0 has length {}, expected {n}", sim.x0.len())));
            }
        }
        Ok(Scenario {
            name: self.name.clone(),
            op,
            set,
            map,
            region,
            sweeps: self.sweeps.clone(),
            seeds: self.seeds.clone(),
            scheme: self.scheme,
            expected_degree: self.expected_degree.clone(),
        })
    }
}

fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let keys: Vec<&str> = path.split('.').collect();
    for (depth, key) in keys.iter().enumerate() {
        let last = depth + 1 == keys.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(key.to_string(), value);
                    return Ok(());
                }
                map.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let i: usize = key
                    .parse()
                    .map_err(|_| Error::Config(format!("override {path}: {key:?} is not an index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(i)
                    .ok_or_else(|| Error::Config(format!("override {path}: index {i} out of range {len}")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::Config(format!("override {path}: {key:?} is not inside an object"))),
        };
    }
    Err(Error::Config("empty override path".into()))
}

const BUNDLED: &[(&str, &str)] = &[
    ("linear_sink_2d", include_str!("../scenarios/linear_sink_2d.json")),
    ("saddle_2d", include_str!("../scenarios/saddle_2d.json")),
    ("rotation_sink_2d", include_str!("../scenarios/rotation_sink_2d.json")),
    ("orthant_contraction", include_str!("../scenarios/orthant_contraction.json")),
    ("orthant_corner", include_str!("../scenarios/orthant_corner.json")),
    ("interval_sink_2d", include_str!("../scenarios/interval_sink_2d.json")),
    ("orthant_logistic", include_str!("../scenarios/orthant_logistic.json")),
    ("center_2d", include_str!("../scenarios/center_2d.json")),
];

/// Names of the scenarios shipped with the crate.
pub fn list_scenarios() -> Vec<&'static str> {
    BUNDLED.iter().map(|(n, _)| *n).collect()
}

pub fn bundled_source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn bundled(name: &str) -> Result<ScenarioSpec> {
    let text = bundled_source(name).ok_or_else(|| Error::Config(format!("no bundled scenario {name:?}")))?;
    ScenarioSpec::from_json(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_parse_and_build() {
        for name in list_scenarios() {
            let spec = bundled(name).unwrap();
            assert_eq!(spec.name, name);
            spec.build().unwrap();
        }
    }

    #[test]
    fn round_trip() {
        for name in list_scenarios() {
            let spec = bundled(name).unwrap();
            assert_eq!(ScenarioSpec::from_json(&spec.to_json()).unwrap(), spec);
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = bundled_source("linear_sink_2d").unwrap().replacen("\"sweeps\"", "\"colour\": 1, \"sweeps\"", 1);
        let err = ScenarioSpec::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("colour"), "{err}");
    }

    #[test]
    fn parse_errors_have_a_location() {
        let err = ScenarioSpec::from_json("{\n  \"name\": \"x\",\n  oops\n}").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn overrides() {
        let text = bundled_source("linear_sink_2d").unwrap();
        let spec = ScenarioSpec::from_json_with_overrides(
            text,
            &["sweeps.h=[0.2,0.1]".into(), "region.shape.radius=2".into(), "seeds.0=99".into(), "name=other".into()],
        )
        .unwrap();
        assert_eq!(spec.sweeps.h, vec![0.2, 0.1]);
        assert_eq!(spec.region.unwrap().shape, ShapeSpec::Ball { center: vec![0.0, 0.0], radius: 2.0 });
        assert_eq!(spec.seeds[0], 99);
        assert_eq!(spec.name, "other");
        assert!(ScenarioSpec::from_json_with_overrides(text, &["seeds.9=1".into()]).is_err());
        assert!(ScenarioSpec::from_json_with_overrides(text, &["nonsense".into()]).is_err());
        assert!(ScenarioSpec::from_json_with_overrides(text, &["bogus=1".into()]).is_err());
    }

    #[test]
    fn null_box_bounds_are_infinite() {
        let s: SetSpec = serde_json::from_str(r#"{"kind":"box","lo":[0,null],"hi":[null,1]}"#).unwrap();
        let k = s.build().unwrap();
        assert!(k.contains(&vector(&[5.0, -7.0]), 0.0).unwrap());
        assert!(!k.contains(&vector(&[-1.0, 0.0]), 0.0).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_a_config_error() {
        let text = bundled_source("linear_sink_2d").unwrap();
        let spec = ScenarioSpec::from_json_with_overrides(text, &["set.dim=3".into()]).unwrap();
        assert!(matches!(spec.build(), Err(Error::Config(_))));
    }
}
