//! Training configuration and its flat `key = value` file format.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BallSpec, GeometryError, DEFAULT_EPS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {value:?}")]
    BadValue { line: usize, key: String, value: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Ball(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Contrastive margin.
    pub alpha: f64,
    /// Centripetal margin.
    pub beta: f64,
    pub learning_rate: f64,
    /// Negatives per loss direction.
    pub n_neg: usize,
    pub epochs: usize,
    pub seed: u64,
    pub batch_size: usize,
    /// Candidate weights for the norm term of the score.
    pub lambda_grid: Vec<f64>,
    pub dim: usize,
    pub kappa: f64,
    pub eps: f64,
    /// Width of the token table rows.
    pub d_tok: usize,
    /// Half-width of the uniform initialization interval.
    pub init_range: f64,
    /// Reuse one negative sample set for both directions of a role or
    /// conjunction term instead of drawing one per direction.
    pub share_term_negatives: bool,
}

pub fn default_lambda_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 3.0,
            beta: 0.5,
            learning_rate: 1e-5,
            n_neg: 1,
            epochs: 1,
            seed: 0,
            batch_size: 128,
            lambda_grid: default_lambda_grid(),
            dim: 64,
            kappa: 1.0,
            eps: DEFAULT_EPS,
            d_tok: 32,
            init_range: 0.05,
            share_term_negatives: false,
        }
    }
}

impl TrainConfig {
    pub fn ball(&self) -> Result<BallSpec, GeometryError> {
        BallSpec::new(self.dim, self.kappa, self.eps)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be a finite value >= 0");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be a finite value >= 0");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be a finite value >= 0");
        }
        if self.n_neg == 0 {
            return bad("n_neg must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.d_tok == 0 {
            return bad("d_tok must be at least 1");
        }
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return bad("lambda_grid must be a non-empty list of values in [0, 1]");
        }
        if !(self.init_range >= 0.0 && self.init_range.is_finite()) {
            return bad("init_range must be a finite value >= 0");
        }
        self.ball()?;
        Ok(())
    }

    /// Overrides fields from `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, source: &str) -> Result<(), ConfigError> {
        for (idx, raw) in source.lines().enumerate() {
            let line = idx + 1;
            let text = raw.split('#').next().unwrap_or("").trim();
            if text.is_empty() {
                continue;
            }
            let (key, value) = text.split_once('=').ok_or(ConfigError::Syntax { line })?;
            self.set(key.trim(), value.trim(), line)?;
        }
        Ok(())
    }

    pub fn from_text(source: &str) -> Result<Self, ConfigError> {
        let mut cfg = TrainConfig::default();
        cfg.apply_text(source)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        let bad = || ConfigError::BadValue {
            line,
            key: key.to_string(),
            value: value.to_string(),
        };
        fn num<T: std::str::FromStr>(v: &str, bad: impl Fn() -> ConfigError) -> Result<T, ConfigError> {
            v.parse::<T>().map_err(|_| bad())
        }
        match key {
            "alpha" => self.alpha = num(value, bad)?,
            "beta" => self.beta = num(value, bad)?,
            "learning_rate" => self.learning_rate = num(value, bad)?,
            "n_neg" => self.n_neg = num(value, bad)?,
            "epochs" => self.epochs = num(value, bad)?,
            "seed" => self.seed = num(value, bad)?,
            "batch_size" => self.batch_size = num(value, bad)?,
            "dim" => self.dim = num(value, bad)?,
            "kappa" => self.kappa = num(value, bad)?,
            "eps" => self.eps = num(value, bad)?,
            "d_tok" => self.d_tok = num(value, bad)?,
            "init_range" => self.init_range = num(value, bad)?,
            "share_term_negatives" => self.share_term_negatives = num(value, bad)?,
            "lambda_grid" => {
                self.lambda_grid = value
                    .split(',')
                    .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
                    .collect::<Result<_, _>>()?;
            }
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let grid: Vec<String> = self.lambda_grid.iter().map(|l| l.to_string()).collect();
        format!(
            "alpha = {}\nbeta = {}\nlearning_rate = {}\nn_neg = {}\nepochs = {}\nseed = {}\n\
             batch_size = {}\nlambda_grid = {}\ndim = {}\nkappa = {}\neps = {}\nd_tok = {}\n\
             init_range = {}\nshare_term_negatives = {}\n",
            self.alpha,
            self.beta,
            self.learning_rate,
            self.n_neg,
            self.epochs,
            self.seed,
            self.batch_size,
            grid.join(","),
            self.dim,
            self.kappa,
            self.eps,
            self.d_tok,
            self.init_range,
            self.share_term_negatives
        )
    }
}
