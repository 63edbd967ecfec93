//! `key = value` configuration text.
//!
//! Blank lines and `#` comments are ignored. Readers take the keys they
//! understand; whatever is left over is rejected as unknown, and every
//! missing or malformed key is reported in a single error.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::losses::LossConfig;
use crate::nn::{AdamConfig, NetworkShape};
use crate::walker::WalkConfig;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { key: String, line: usize },
    #[error("{}", describe(.missing, .unknown, .invalid))]
    Rejected {
        missing: Vec<String>,
        unknown: Vec<String>,
        invalid: Vec<String>,
    },
}

fn describe(missing: &[String], unknown: &[String], invalid: &[String]) -> String {
    let mut parts = Vec::new();
    if !missing.is_empty() {
        parts.push(format!("missing required keys: {}", missing.join(", ")));
    }
    if !unknown.is_empty() {
        parts.push(format!("unknown keys: {}", unknown.join(", ")));
    }
    if !invalid.is_empty() {
        parts.push(format!("invalid values: {}", invalid.join("; ")));
    }
    parts.join("; ")
}

#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (String, usize)>,
    missing: Vec<String>,
    invalid: Vec<String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    text: raw.to_string(),
                });
            };
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    text: raw.to_string(),
                });
            }
            if entries.insert(key.clone(), (v.trim().to_string(), i + 1)).is_some() {
                return Err(ConfigError::Duplicate { key, line: i + 1 });
            }
        }
        Ok(KeyValues {
            entries,
            ..Default::default()
        })
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Option<Option<T>>
    where
        T::Err: fmt::Display,
    {
        let (value, line) = self.entries.remove(key)?;
        match value.parse() {
            Ok(v) => Some(Some(v)),
            Err(e) => {
                self.invalid.push(format!("line {line}: {key} = {value:?} ({e})"));
                Some(None)
            }
        }
    }

    /// Records the key as missing (or invalid) and returns `None` on failure.
    pub fn required<T: FromStr>(&mut self, key: &str) -> Option<T>
    where
        T::Err: fmt::Display,
    {
        match self.take(key) {
            Some(v) => v,
            None => {
                self.missing.push(key.to_string());
                None
            }
        }
    }

    pub fn optional<T: FromStr>(&mut self, key: &str, default: T) -> T
    where
        T::Err: fmt::Display,
    {
        self.take(key).flatten().unwrap_or(default)
    }

    pub fn optional_or_none<T: FromStr>(&mut self, key: &str) -> Option<T>
    where
        T::Err: fmt::Display,
    {
        self.take(key).flatten()
    }

    pub fn reject(&mut self, problem: impl Into<String>) {
        self.invalid.push(problem.into());
    }

    /// Fail if anything was missing, malformed or left unread.
    pub fn finish(self) -> Result<(), ConfigError> {
        let unknown: Vec<String> = self.entries.into_keys().collect();
        if self.missing.is_empty() && unknown.is_empty() && self.invalid.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Rejected {
                missing: self.missing,
                unknown,
                invalid: self.invalid,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Paper,
    Desk,
}

impl Preset {
    pub fn shape(self) -> NetworkShape {
        match self {
            Preset::Paper => NetworkShape::paper(),
            Preset::Desk => NetworkShape::desk(),
        }
    }
}

impl FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            _ => Err("expected `paper` or `desk`".into()),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Paper => "paper",
            Preset::Desk => "desk",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl FromStr for Precision {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            _ => Err("expected `f32` or `f64`".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub preset: Preset,
    pub epochs: u64,
    pub seed: u64,
    pub batch_size: usize,
    pub walk: WalkConfig,
    pub loss: LossConfig,
    pub adam: AdamConfig,
    pub precision: Precision,
    /// Worker threads; 1 is fully sequential, 0 uses every core.
    pub threads: usize,
    pub embed_walks: usize,
}

impl TrainConfig {
    /// Defaults for everything except the three required keys.
    pub fn new(preset: Preset, epochs: u64, seed: u64) -> Self {
        TrainConfig {
            preset,
            epochs,
            seed,
            batch_size: 64,
            walk: WalkConfig::default(),
            loss: LossConfig::default(),
            adam: AdamConfig::default(),
            precision: Precision::F32,
            threads: 1,
            embed_walks: 32,
        }
    }

    pub fn shape(&self) -> NetworkShape {
        self.preset.shape()
    }

    /// Read the training keys out of `kv`. Problems are recorded in `kv`
    /// and surface from [`KeyValues::finish`].
    pub fn read(kv: &mut KeyValues) -> Option<Self> {
        let preset = kv.required("preset");
        let epochs = kv.required("epochs");
        let seed = kv.required("seed");
        let d = TrainConfig::new(Preset::Desk, 1, 0);
        let batch_size = kv.optional("batch_size", d.batch_size);
        let walk = WalkConfig {
            length: kv.optional("walk_len", d.walk.length),
            jump_prob: kv.optional("jump_prob", d.walk.jump_prob),
        };
        let loss = LossConfig {
            temperature: kv.optional("temperature", d.loss.temperature),
            alpha: kv.optional("alpha", d.loss.alpha),
            clusters: kv.optional("clusters", d.loss.clusters),
            cluster_start_epoch: kv.optional("cluster_start_epoch", d.loss.cluster_start_epoch),
            means_update_period: kv.optional("means_update_period", d.loss.means_update_period),
        };
        let adam = AdamConfig {
            learning_rate: kv.optional("learning_rate", d.adam.learning_rate),
            beta1: kv.optional("beta1", d.adam.beta1),
            beta2: kv.optional("beta2", d.adam.beta2),
            epsilon: kv.optional("adam_epsilon", d.adam.epsilon),
        };
        let precision = kv.optional("precision", d.precision);
        let threads = kv.optional("threads", d.threads);
        let embed_walks = kv.optional("embed_walks", d.embed_walks);
        let config = TrainConfig {
            preset: preset?,
            epochs: epochs?,
            seed: seed?,
            batch_size,
            walk,
            loss,
            adam,
            precision,
            threads,
            embed_walks,
        };
        match config.validate() {
            Ok(()) => Some(config),
            Err(e) => {
                kv.reject(e);
                None
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut kv = KeyValues::parse(text)?;
        let config = Self::read(&mut kv);
        kv.finish()?;
        Ok(config.expect("finish() reports every failure of read()"))
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.batch_size < 2 {
            return Err("batch_size must be at least 2".into());
        }
        if self.epochs < 1 {
            return Err("epochs must be at least 1".into());
        }
        if self.embed_walks < 2 {
            return Err("embed_walks must be at least 2".into());
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err("learning_rate must be positive".into());
        }
        self.walk.validate().map_err(|e| e.to_string())?;
        self.loss.validate().map_err(|e| e.to_string())?;
        Ok(())
    }

    /// The config as `key = value` text that [`TrainConfig::parse`] reads back.
    pub fn to_text(&self) -> String {
        format!(
            "preset = {}\nepochs = {}\nseed = {}\nbatch_size = {}\nwalk_len = {}\njump_prob = {}\n\
             temperature = {}\nalpha = {}\nclusters = {}\ncluster_start_epoch = {}\n\
             means_update_period = {}\nlearning_rate = {}\nbeta1 = {}\nbeta2 = {}\n\
             adam_epsilon = {}\nprecision = {}\nthreads = {}\nembed_walks = {}\n",
            self.preset,
            self.epochs,
            self.seed,
            self.batch_size,
            self.walk.length,
            self.walk.jump_prob,
            self.loss.temperature,
            self.loss.alpha,
            self.loss.clusters,
            self.loss.cluster_start_epoch,
            self.loss.means_update_period,
            self.adam.learning_rate,
            self.adam.beta1,
            self.adam.beta2,
            self.adam.epsilon,
            match self.precision {
                Precision::F32 => "f32",
                Precision::F64 => "f64",
            },
            self.threads,
            self.embed_walks,
        )
    }

    /// SHA-256 over everything that shapes the training trajectory. The
    /// epoch budget and thread count are excluded so a finished run can be
    /// extended, or resumed with a different thread count.
    pub fn hash(&self) -> String {
        let mut c = *self;
        c.epochs = 0;
        c.threads = 0;
        let json = serde_json::to_string(&c).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
