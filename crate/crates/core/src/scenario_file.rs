//! On-disk scenario format (JSON, schema version 1).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::characteristics::U2PointData;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Rect;
use crate::pipeline::{Expectations, Scenario, Task, Tolerances};
use crate::tensor::{ElasticityCoefficients, TENSOR_KEYS};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub tensor: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_order: Option<BTreeMap<String, String>>,
    pub point: [f64; 2],
    pub omega: OmegaSpec,
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<ToleranceSpec>,
    pub tasks: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point_data: Option<Vec<f64>>,
    /// Which second derivative is missing from four-value point data (`uxx` or `uyy`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point_data_omitted: Option<String>,
    /// Closed-form solution family to test against the point data and the null space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expectations>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaSpec {
    pub center: [f64; 2],
    pub halfwidths: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub riemann_n: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    pub rank: Option<f64>,
    pub picard: Option<f64>,
    pub ivp: Option<f64>,
    pub reconstruct: Option<f64>,
    pub transfer: Option<f64>,
    pub nullspace_threshold: Option<f64>,
    pub nullspace_gap: Option<f64>,
    pub basis_residual: Option<f64>,
}

const LOWER_KEYS: [&str; 12] = [
    "b111", "b112", "b121", "b122", "b211", "b212", "b221", "b222", "c11", "c12", "c21", "c22",
];

fn parse_field(key: &str, text: &str) -> Result<ScalarField> {
    ScalarField::parse(text).map_err(|source| Error::Parse {
        key: key.to_string(),
        source,
    })
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::input(key, format!("must be positive and finite, got {v}")))
    }
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<ScenarioFile> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| {
            let key = e.to_string();
            let key = key
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "scenario".into());
            Error::input(key, format!("{e}"))
        })?;
        Ok(file)
    }

    pub fn to_scenario(&self) -> Result<Scenario> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::input(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        for k in self.tensor.keys() {
            if !TENSOR_KEYS.contains(&k.as_str()) {
                return Err(Error::input(format!("tensor.{k}"), "unknown tensor component"));
            }
        }
        let mut a = Vec::with_capacity(6);
        for k in TENSOR_KEYS {
            let text = self
                .tensor
                .get(k)
                .ok_or_else(|| Error::input(format!("tensor.{k}"), "missing tensor component"))?;
            a.push(parse_field(&format!("tensor.{k}"), text)?);
        }
        let a: [ScalarField; 6] = a.try_into().expect("six components");
        let mut coefficients = ElasticityCoefficients::new(a);
        if let Some(lower) = &self.lower_order {
            for (k, text) in lower {
                if !LOWER_KEYS.contains(&k.as_str()) {
                    return Err(Error::input(format!("lower_order.{k}"), "unknown lower-order key"));
                }
                let f = parse_field(&format!("lower_order.{k}"), text)?;
                let idx: Vec<usize> = k[1..].bytes().map(|b| (b - b'1') as usize).collect();
                if k.starts_with('b') {
                    coefficients.b[idx[0]][idx[1]][idx[2]] = f;
                } else {
                    coefficients.c[idx[0]][idx[1]] = f;
                }
            }
        }
        let omega = Rect {
            center: self.omega.center,
            halfwidths: self.omega.halfwidths,
        };
        omega.validate().map_err(|e| Error::input("omega", e.to_string()))?;
        let point = (self.point[0], self.point[1]);
        if !omega.contains(point.0, point.1) {
            return Err(Error::input("point", format!("{point:?} lies outside omega")));
        }
        if self.grid.n < 17 {
            return Err(Error::input("grid.n", format!("must be at least 17, got {}", self.grid.n)));
        }
        let riemann_n = self.grid.riemann_n.unwrap_or(33);
        if riemann_n < 9 || riemann_n % 2 == 0 {
            return Err(Error::input("grid.riemann_n", format!("must be odd and at least 9, got {riemann_n}")));
        }
        let mut tolerances = Tolerances::default();
        if let Some(t) = &self.tolerances {
            let set = |slot: &mut f64, v: Option<f64>, key: &str| -> Result<()> {
                if let Some(v) = v {
                    *slot = positive(&format!("tolerances.{key}"), v)?;
                }
                Ok(())
            };
            set(&mut tolerances.rank, t.rank, "rank")?;
            set(&mut tolerances.picard, t.picard, "picard")?;
            set(&mut tolerances.ivp, t.ivp, "ivp")?;
            set(&mut tolerances.reconstruct, t.reconstruct, "reconstruct")?;
            set(&mut tolerances.transfer, t.transfer, "transfer")?;
            set(&mut tolerances.nullspace_threshold, t.nullspace_threshold, "nullspace_threshold")?;
            set(&mut tolerances.nullspace_gap, t.nullspace_gap, "nullspace_gap")?;
            set(&mut tolerances.basis_residual, t.basis_residual, "basis_residual")?;
        }
        let mut tasks = Vec::new();
        for t in &self.tasks {
            let task = Task::from_name(t).ok_or_else(|| Error::input("tasks", format!("unknown task `{t}`")))?;
            if !tasks.contains(&task) {
                tasks.push(task);
            }
        }
        if tasks.is_empty() {
            return Err(Error::input("tasks", "at least one task is required"));
        }
        let point_data = match &self.point_data {
            None => {
                if self.point_data_omitted.is_some() {
                    return Err(Error::input("point_data_omitted", "given without point_data"));
                }
                None
            }
            Some(v) if v.len() == 5 => {
                if self.point_data_omitted.is_some() {
                    return Err(Error::input("point_data_omitted", "only meaningful for four values"));
                }
                Some(U2PointData::five([v[0], v[1], v[2], v[3], v[4]]))
            }
            Some(v) if v.len() == 4 => {
                let (uxx, uyy) = match self.point_data_omitted.as_deref().unwrap_or("uyy") {
                    "uyy" => (Some(v[3]), None),
                    "uxx" => (None, Some(v[3])),
                    other => {
                        return Err(Error::input(
                            "point_data_omitted",
                            format!("expected `uxx` or `uyy`, got `{other}`"),
                        ))
                    }
                };
                Some(U2PointData {
                    u: v[0],
                    ux: v[1],
                    uy: v[2],
                    uxx,
                    uyy,
                })
            }
            Some(v) => {
                return Err(Error::input("point_data", format!("expected 4 or 5 values, got {}", v.len())))
            }
        };
        if let Some(v) = &self.point_data {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::input("point_data", "values must be finite"));
            }
        }
        let family = self
            .family
            .iter()
            .flatten()
            .enumerate()
            .map(|(i, text)| parse_field(&format!("family[{i}]"), text))
            .collect::<Result<Vec<_>>>()?;
        Ok(Scenario {
            name: self.name.clone().unwrap_or_else(|| "scenario".into()),
            coefficients,
            point,
            omega,
            n: self.grid.n,
            riemann_n,
            tolerances,
            tasks,
            point_data,
            family,
            expect: self.expect.clone().unwrap_or_default(),
            seed: crate::nullspace::NullspaceOptions::default().seed,
        })
    }
}

pub fn load_scenario(text: &str) -> Result<Scenario> {
    ScenarioFile::from_json(text)?.to_scenario()
}
