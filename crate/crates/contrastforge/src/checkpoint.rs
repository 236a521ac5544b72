//! JSON checkpoints. Values are stored as 64-bit floats so a reload is
//! bit-exact.

use std::path::Path;

use contrastforge_core::causal::{CausalParams, Pooling};
use contrastforge_core::graph::{BaseModel, BaseTrainRecord, EmbeddingTable, NormalizedAdjacency};
use contrastforge_core::numerics::{Matrix, Param};
use contrastforge_core::train::TrainRecord;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::fsutil::{atomic_write, read_to_string};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredMatrix {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl StoredMatrix {
    fn new(name: &str, m: &Matrix) -> Self {
        Self { name: name.to_string(), rows: m.rows(), cols: m.cols(), data: m.as_slice().to_vec() }
    }

    fn matrix(&self) -> Result<Matrix> {
        Ok(Matrix::from_vec(self.rows, self.cols, self.data.clone())?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseCheckpoint {
    pub num_layers: usize,
    pub users: StoredMatrix,
    pub items: StoredMatrix,
    pub record: BaseTrainRecord,
}

impl BaseCheckpoint {
    pub fn new(model: &BaseModel, record: BaseTrainRecord) -> Self {
        Self {
            num_layers: model.num_layers,
            users: StoredMatrix::new("users", &model.layer_zero.users),
            items: StoredMatrix::new("items", &model.layer_zero.items),
            record,
        }
    }

    pub fn model(&self, adj: &NormalizedAdjacency) -> Result<BaseModel> {
        let table = EmbeddingTable::new(self.users.matrix()?, self.items.matrix()?)?;
        Ok(BaseModel::new(adj, table, self.num_layers)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalCheckpoint {
    pub seed: u64,
    pub epoch: usize,
    pub pooling: Pooling,
    pub params: Vec<StoredMatrix>,
}

impl CausalCheckpoint {
    pub fn new(seed: u64, epoch: usize, params: &CausalParams) -> Self {
        Self {
            seed,
            epoch,
            pooling: params.pooling,
            params: params.to_params().iter().map(|p| StoredMatrix::new(&p.name, &p.value)).collect(),
        }
    }

    pub fn params(&self) -> Result<CausalParams> {
        let params =
            self.params.iter().map(|m| Ok(Param::new(m.name.clone(), m.matrix()?))).collect::<Result<Vec<_>>>()?;
        Ok(CausalParams::from_params(&params, self.pooling)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub seed: u64,
    pub record: TrainRecord,
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("checkpoint serializes");
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_to_string(path)?).map_err(|e| Error::format(path, e.to_string()))
}
