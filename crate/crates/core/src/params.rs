//! Model parameters and their validation.
//!
//! Field names on the wire (`K`, `Q_size`, `N`, ...) are the canonical
//! symbol names; the Rust fields are named by role.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("invalid parameter `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("register partition impossible: Q_size = {q_size} < n_split^n_reg = {needed}")]
    RegisterPartition { q_size: usize, needed: u128 },
    #[error("lifetime T = {lifetime} must be < N = {age_levels} (ages only run to N-1)")]
    LifetimeTooLong { lifetime: usize, age_levels: usize },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config I/O error: {0}")]
    Io(String),
}

/// Which orbital indices receive recording units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RecordScope {
    /// Every orbital index gets `w_red` fresh records.
    #[default]
    All,
    /// Only indices occupied at times `0..=T` from the initial index get
    /// records. Keeps micro configurations within exact state-vector reach.
    Lifetime,
}

fn default_w_red() -> usize {
    8
}

fn default_n_reg() -> usize {
    4
}

fn default_n_split() -> usize {
    2
}

/// All scalar knobs of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Orbital cycle length.
    #[serde(rename = "K")]
    pub orbit_len: usize,
    /// Number of branching indices.
    #[serde(rename = "Q_size")]
    pub branch_points: usize,
    /// Age levels per record (ages 0..N-1).
    #[serde(rename = "N")]
    pub age_levels: usize,
    /// Record capacity; also the cap of the recall-length law.
    #[serde(rename = "I")]
    pub records: usize,
    /// Lifetime in steps.
    #[serde(rename = "T")]
    pub lifetime: usize,
    pub alpha: f64,
    #[serde(rename = "L0")]
    pub l0: f64,
    pub d_min: usize,
    #[serde(default = "default_n_reg")]
    pub n_reg: usize,
    #[serde(default = "default_n_split")]
    pub n_split: usize,
    pub seed: u64,
    /// Records written per orbital index.
    #[serde(default = "default_w_red")]
    pub w_red: usize,
    #[serde(default)]
    pub record_scope: RecordScope,
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ParamError {
    ParamError::Invalid {
        field,
        reason: reason.into(),
    }
}

impl ModelParams {
    /// Parses a key/value (TOML) config.
    pub fn from_config_str(text: &str) -> Result<Self, ParamError> {
        let params: ModelParams =
            toml::from_str(text).map_err(|e| ParamError::Parse(e.message().to_string()))?;
        params.validate()?;
        Ok(params)
    }

    pub fn from_config_file(path: &Path) -> Result<Self, ParamError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ParamError::Io(format!("{}: {e}", path.display())))?;
        Self::from_config_str(&text)
    }

    /// Number of register subsets `n_split^n_reg`, saturating.
    pub fn register_subsets(&self) -> u128 {
        (self.n_split as u128)
            .checked_pow(self.n_reg as u32)
            .unwrap_or(u128::MAX)
    }

    /// Branching probability per step, `Q_size / K`.
    pub fn sigma(&self) -> f64 {
        self.branch_points as f64 / self.orbit_len as f64
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if self.orbit_len < 1 {
            return Err(invalid("K", "must be >= 1"));
        }
        if self.branch_points < 1 || self.branch_points > self.orbit_len {
            return Err(invalid("Q_size", "must be in 1..=K"));
        }
        if self.n_split < 2 {
            return Err(invalid("n_split", "must be >= 2"));
        }
        if self.n_reg < 1 {
            return Err(invalid("n_reg", "must be >= 1"));
        }
        if self.age_levels < 2 {
            return Err(invalid("N", "must be >= 2"));
        }
        if !(self.alpha > 1.0 && self.alpha < 2.0) {
            return Err(invalid("alpha", format!("{} not in (1, 2)", self.alpha)));
        }
        if !(self.l0 >= 1.0) || !self.l0.is_finite() {
            return Err(invalid("L0", "must be finite and >= 1"));
        }
        if (self.records as f64) <= self.l0 {
            return Err(invalid("I", "cap I must exceed L0"));
        }
        if self.d_min < 1 {
            return Err(invalid("d_min", "must be >= 1"));
        }
        if self.d_min * self.branch_points > self.orbit_len {
            return Err(invalid(
                "d_min",
                format!(
                    "Q_size * d_min = {} exceeds K = {}",
                    self.d_min * self.branch_points,
                    self.orbit_len
                ),
            ));
        }
        if self.w_red < 1 {
            return Err(invalid("w_red", "must be >= 1"));
        }
        if self.lifetime >= self.age_levels {
            return Err(ParamError::LifetimeTooLong {
                lifetime: self.lifetime,
                age_levels: self.age_levels,
            });
        }
        let needed = self.register_subsets();
        if (self.branch_points as u128) < needed {
            return Err(ParamError::RegisterPartition {
                q_size: self.branch_points,
                needed,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn micro(seed: u64) -> ModelParams {
        ModelParams {
            orbit_len: 12,
            branch_points: 2,
            age_levels: 8,
            records: 200,
            lifetime: 4,
            alpha: 1.5,
            l0: 1.0,
            d_min: 6,
            n_reg: 1,
            n_split: 2,
            seed,
            w_red: 2,
            record_scope: RecordScope::All,
        }
    }
}
