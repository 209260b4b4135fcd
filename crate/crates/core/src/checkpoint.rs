//! Versioned JSON checkpoints.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::TrainConfig;
use crate::encoder::{EncoderParams, ReferenceEncoder, TokenVocab};
use crate::geometry::BallSpec;
use crate::normalize::DefinitionMap;
use crate::ontology::{Iri, LabelMap};
use crate::trainer::{OntModel, RoleParamHead, TrainLog, TrainingData};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("malformed checkpoint: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {found} (expected {CHECKPOINT_VERSION})")]
    Version { found: u32 },
    #[error("inconsistent checkpoint: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub ball: BallSpec,
    pub config: TrainConfig,
    pub vocab: TokenVocab,
    pub encoder: EncoderParams,
    pub role_head: RoleParamHead,
    /// Score weight picked on validation data, once selected.
    pub lambda: Option<f64>,
    /// Atomic concepts of the training signature: the ranking pool.
    pub candidates: Vec<Iri>,
    pub labels: LabelMap,
    pub definitions: DefinitionMap,
    pub log: TrainLog,
}

impl Checkpoint {
    pub fn new(model: OntModel, cfg: &TrainConfig, data: &TrainingData, log: TrainLog) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            ball: model.ball,
            config: cfg.clone(),
            vocab: model.vocab,
            encoder: model.encoder,
            role_head: model.role_head,
            lambda: None,
            candidates: data.pool_iris(),
            labels: data.labels.clone(),
            definitions: data.definitions.clone(),
            log,
        }
    }

    pub fn encoder(&self) -> ReferenceEncoder {
        ReferenceEncoder {
            ball: self.ball,
            vocab: self.vocab.clone(),
            params: self.encoder.clone(),
        }
    }

    pub fn model(&self) -> OntModel {
        OntModel {
            ball: self.ball,
            vocab: self.vocab.clone(),
            encoder: self.encoder.clone(),
            role_head: self.role_head.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CheckpointError> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version { found: ck.version });
        }
        ck.encoder
            .check(ck.vocab.len(), &ck.ball)
            .map_err(|e| CheckpointError::Shape(e.to_string()))?;
        if ck.role_head.m != ck.ball.rotation_pairs() || ck.role_head.d_tok != ck.encoder.d_tok {
            return Err(CheckpointError::Shape("role head does not match encoder".into()));
        }
        Ok(ck)
    }
}
