//! Label-derived random streams.
//!
//! Every source of randomness in a run hangs off one base seed. A stream is
//! identified by the base seed plus an ordered list of labels, hashed with
//! SHA-256 into a ChaCha8 key, so two tasks never share generator state and
//! adding a new consumer never perturbs existing ones.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub type Stream = ChaCha8Rng;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Int(u64),
    Str(String),
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label::Str(s.to_string())
    }
}

impl From<String> for Label {
    fn from(s: String) -> Self {
        Label::Str(s)
    }
}

impl From<u64> for Label {
    fn from(v: u64) -> Self {
        Label::Int(v)
    }
}

impl From<usize> for Label {
    fn from(v: usize) -> Self {
        Label::Int(v as u64)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Int(v) => write!(f, "{v}"),
            Label::Str(s) => f.write_str(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub base: u64,
    pub labels: Vec<Label>,
}

impl RngSeed {
    pub fn new(base: u64) -> Self {
        RngSeed {
            base,
            labels: Vec::new(),
        }
    }

    /// Child seed with one more label appended.
    pub fn derive(&self, label: impl Into<Label>) -> RngSeed {
        let mut labels = self.labels.clone();
        labels.push(label.into());
        RngSeed {
            base: self.base,
            labels,
        }
    }

    pub fn key(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"onlinerec/v1");
        h.update(self.base.to_le_bytes());
        for label in &self.labels {
            match label {
                Label::Int(v) => {
                    h.update([0u8]);
                    h.update(v.to_le_bytes());
                }
                Label::Str(s) => {
                    h.update([1u8]);
                    h.update((s.len() as u64).to_le_bytes());
                    h.update(s.as_bytes());
                }
            }
        }
        h.finalize().into()
    }

    pub fn stream(&self) -> Stream {
        ChaCha8Rng::from_seed(self.key())
    }

    /// Path form used in metadata, e.g. `7/trial/0/env`.
    pub fn path(&self) -> String {
        let mut s = self.base.to_string();
        for l in &self.labels {
            s.push('/');
            s.push_str(&l.to_string());
        }
        s
    }
}

/// Generator for `seed` extended by `label`.
pub fn derive_stream(seed: &RngSeed, label: impl Into<Label>) -> Stream {
    seed.derive(label).stream()
}
