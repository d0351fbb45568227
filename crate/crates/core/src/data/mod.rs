//! Embedding datasets, their on-disk formats, the session protocol and a
//! synthetic cluster generator.

pub(crate) mod io;
mod protocol;
mod synth;

pub use io::{load_embeddings, read_binary, read_csv, save_embeddings, write_binary, write_csv, Format};
pub use protocol::{build_protocol, ProtocolConfig, Session, SessionStream};
pub use synth::{synth_generate, SynthSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::{DualFeature, FeatureVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub class_id: u32,
    pub split: Split,
    pub feature: FeatureVector,
    pub transformed: Option<FeatureVector>,
}

impl Record {
    pub fn dual(&self) -> Option<DualFeature> {
        self.transformed.as_ref().map(|t| DualFeature {
            original: self.feature.clone(),
            transformed: t.clone(),
        })
    }
}

/// Labeled feature vectors, optionally paired with a transformed channel.
///
/// Invariants checked on construction: every vector has length `dim`,
/// class ids cover `0..class_count` without gaps, and the transformed
/// channel is present on all records or on none.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingDataset {
    dim: usize,
    class_count: u32,
    has_transformed: bool,
    records: Vec<Record>,
}

impl EmbeddingDataset {
    pub fn new(dim: usize, records: Vec<Record>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Format("dimension must be positive".into()));
        }
        let has_transformed = records.first().is_some_and(|r| r.transformed.is_some());
        let mut max_class = None::<u32>;
        for (i, r) in records.iter().enumerate() {
            if r.feature.dim() != dim {
                return Err(Error::Format(format!(
                    "record {i}: feature length {} != dim {dim}",
                    r.feature.dim()
                )));
            }
            match (&r.transformed, has_transformed) {
                (Some(t), true) if t.dim() != dim => {
                    return Err(Error::Format(format!(
                        "record {i}: transformed length {} != dim {dim}",
                        t.dim()
                    )))
                }
                (Some(_), true) | (None, false) => {}
                _ => {
                    return Err(Error::Format(format!(
                        "record {i}: transformed channel must be present on all records or none"
                    )))
                }
            }
            max_class = Some(max_class.map_or(r.class_id, |m| m.max(r.class_id)));
        }
        let class_count = match max_class {
            None => 0,
            Some(max) => {
                let mut seen = vec![false; max as usize + 1];
                for r in &records {
                    seen[r.class_id as usize] = true;
                }
                if let Some(missing) = seen.iter().position(|s| !s) {
                    return Err(Error::LabelGap {
                        missing: missing as u32,
                        max,
                    });
                }
                max + 1
            }
        };
        Ok(Self {
            dim,
            class_count,
            has_transformed,
            records,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_count(&self) -> u32 {
        self.class_count
    }

    pub fn has_transformed(&self) -> bool {
        self.has_transformed
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Dual feature of record `i`; errors when the dataset is single-channel.
    pub fn dual(&self, i: usize) -> Result<DualFeature> {
        self.records[i]
            .dual()
            .ok_or_else(|| Error::Config("dataset has no transformed channel".into()))
    }

    /// Record indices of one class and split, in record order.
    pub fn indices_of(&self, class_id: u32, split: Split) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.class_id == class_id && r.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// True when `other` has the same record count, labels and splits.
    pub fn aligned_with(&self, other: &EmbeddingDataset) -> bool {
        self.records.len() == other.records.len()
            && self
                .records
                .iter()
                .zip(&other.records)
                .all(|(a, b)| a.class_id == b.class_id && a.split == b.split)
    }
}
