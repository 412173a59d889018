//! Checkpoint files: a JSON tensor dump with shape headers and a config
//! fingerprint. Loading refuses checkpoints whose fingerprint does not match
//! the current configuration, so a policy is never run against observation
//! scaling or network shapes it was not trained with.

use nalgebra::{DMatrix, DVector};
use std::path::Path;

use super::{ActorCritic, PolicyError, PpoConfig};
use crate::env::{EnvConfig, ACT_DIM, OBS_DIM};
use crate::policy::nn::Mlp;

#[derive(serde::Serialize, serde::Deserialize)]
struct Tensor {
    shape: [usize; 2],
    data: Vec<f64>,
}

impl Tensor {
    fn from_matrix(m: &DMatrix<f64>) -> Self {
        Tensor {
            shape: [m.nrows(), m.ncols()],
            data: m.as_slice().to_vec(),
        }
    }

    fn from_vector(v: &DVector<f64>) -> Self {
        Tensor {
            shape: [v.len(), 1],
            data: v.as_slice().to_vec(),
        }
    }

    fn to_matrix(&self) -> Result<DMatrix<f64>, PolicyError> {
        if self.shape[0] * self.shape[1] != self.data.len() {
            return Err(PolicyError::CheckpointIo(format!(
                "tensor shape {:?} does not match {} values",
                self.shape,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_column_slice(self.shape[0], self.shape[1], &self.data))
    }

    fn to_vector(&self) -> Result<DVector<f64>, PolicyError> {
        if self.shape[1] != 1 || self.shape[0] != self.data.len() {
            return Err(PolicyError::CheckpointIo(format!(
                "tensor shape {:?} is not a column vector",
                self.shape
            )));
        }
        Ok(DVector::from_column_slice(&self.data))
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct MlpDump {
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
    w3: Tensor,
    b3: Tensor,
    out_tanh: bool,
}

impl MlpDump {
    fn from_mlp(m: &Mlp) -> Self {
        MlpDump {
            w1: Tensor::from_matrix(&m.w1),
            b1: Tensor::from_vector(&m.b1),
            w2: Tensor::from_matrix(&m.w2),
            b2: Tensor::from_vector(&m.b2),
            w3: Tensor::from_matrix(&m.w3),
            b3: Tensor::from_vector(&m.b3),
            out_tanh: m.out_tanh,
        }
    }

    fn to_mlp(&self) -> Result<Mlp, PolicyError> {
        Ok(Mlp {
            w1: self.w1.to_matrix()?,
            b1: self.b1.to_vector()?,
            w2: self.w2.to_matrix()?,
            b2: self.b2.to_vector()?,
            w3: self.w3.to_matrix()?,
            b3: self.b3.to_vector()?,
            out_tanh: self.out_tanh,
        })
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct CheckpointFile {
    fingerprint: String,
    policy: MlpDump,
    log_std: Vec<f64>,
    value: MlpDump,
}

/// Fingerprint of everything a checkpoint must agree on with the runtime:
/// observation layout and scaling, action width, and network shape.
pub fn fingerprint(env: &EnvConfig, ppo: &PpoConfig) -> String {
    format!(
        "obs{}-act{}-h{}|kq{:?}|kv{:?}|kl{:?}",
        OBS_DIM, ACT_DIM, ppo.hidden, env.k_q, env.k_v, env.k_l
    )
}

pub fn save(ac: &ActorCritic, fingerprint: &str, path: &Path) -> Result<(), PolicyError> {
    let file = CheckpointFile {
        fingerprint: fingerprint.to_string(),
        policy: MlpDump::from_mlp(&ac.policy),
        log_std: ac.log_std.clone(),
        value: MlpDump::from_mlp(&ac.value),
    };
    let text = serde_json::to_string(&file).map_err(|e| PolicyError::CheckpointIo(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| PolicyError::CheckpointIo(e.to_string()))
}

pub fn load(path: &Path, expected_fingerprint: &str) -> Result<ActorCritic, PolicyError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| PolicyError::CheckpointIo(e.to_string()))?;
    let file: CheckpointFile =
        serde_json::from_str(&text).map_err(|e| PolicyError::CheckpointIo(e.to_string()))?;
    if file.fingerprint != expected_fingerprint {
        return Err(PolicyError::FingerprintMismatch {
            expected: expected_fingerprint.to_string(),
            found: file.fingerprint,
        });
    }
    Ok(ActorCritic {
        policy: file.policy.to_mlp()?,
        log_std: file.log_std,
        value: file.value.to_mlp()?,
    })
}
