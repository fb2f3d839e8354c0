//! JSON model documents.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};
use crate::model::{Mode, ReservoirModel, SystemModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexJson {
    pub re: f64,
    pub im: f64,
}

impl From<ComplexJson> for C64 {
    fn from(z: ComplexJson) -> Self {
        C64::new(z.re, z.im)
    }
}

impl From<C64> for ComplexJson {
    fn from(z: C64) -> Self {
        ComplexJson { re: z.re, im: z.im }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemJson {
    pub dim: usize,
    pub h_s: Vec<Vec<ComplexJson>>,
    pub d: Vec<Vec<ComplexJson>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeJson {
    pub omega: f64,
    pub l: f64,
    pub g0: ComplexJson,
    pub g1: ComplexJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirJson {
    pub xi: f64,
    pub modes: Vec<ModeJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshJson {
    pub delta_e: f64,
}

/// Model document: `{"system": .., "reservoir": .., "mesh": ..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub system: SystemJson,
    pub reservoir: ReservoirJson,
    pub mesh: MeshJson,
}

/// Validated model ready for the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedModel {
    pub system: SystemModel,
    pub reservoir: ReservoirModel,
    pub delta_e: f64,
}

fn matrix(rows: &[Vec<ComplexJson>], dim: usize, name: &str) -> Result<CMat> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Config(format!("{name} must be {dim}x{dim}")));
    }
    Ok(CMat::from_fn(dim, dim, |i, j| rows[i][j].into()))
}

fn rows_of(m: &CMat) -> Vec<Vec<ComplexJson>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].into()).collect())
        .collect()
}

impl ModelDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model document serializes")
    }

    pub fn from_model(system: &SystemModel, reservoir: &ReservoirModel, delta_e: f64) -> Self {
        ModelDocument {
            system: SystemJson {
                dim: system.dim(),
                h_s: rows_of(system.h_s()),
                d: rows_of(system.d_op()),
            },
            reservoir: ReservoirJson {
                xi: reservoir.xi(),
                modes: reservoir
                    .modes()
                    .iter()
                    .map(|m| ModeJson {
                        omega: m.omega,
                        l: m.l_val,
                        g0: m.g0.into(),
                        g1: m.g1.into(),
                    })
                    .collect(),
            },
            mesh: MeshJson { delta_e },
        }
    }

    pub fn load(&self) -> Result<LoadedModel> {
        let dim = self.system.dim;
        if dim == 0 {
            return Err(Error::Config("system.dim must be positive".into()));
        }
        let system = SystemModel::new(
            matrix(&self.system.h_s, dim, "system.h_s")?,
            matrix(&self.system.d, dim, "system.d")?,
        )?;
        let modes = self
            .reservoir
            .modes
            .iter()
            .map(|m| Mode {
                omega: m.omega,
                l_val: m.l,
                g0: m.g0.into(),
                g1: m.g1.into(),
            })
            .collect();
        let reservoir = ReservoirModel::new(modes, self.reservoir.xi)?;
        if !(self.mesh.delta_e > 0.0) || !self.mesh.delta_e.is_finite() {
            return Err(Error::Config("mesh.delta_e must be positive".into()));
        }
        Ok(LoadedModel {
            system,
            reservoir,
            delta_e: self.mesh.delta_e,
        })
    }
}

pub fn load_model_str(text: &str) -> Result<LoadedModel> {
    ModelDocument::from_json(text)?.load()
}
