//! Dual-component prototype classifiers.
//!
//! The bank is agnostic of the feature space it lives in; a run keeps one
//! bank over transferable features and one over discriminative features.
//! Prototypes are stored unnormalized.

use std::collections::BTreeMap;

use crate::data::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::vector::{mean, Component, DualFeature, FeatureVector};

#[derive(Clone, Debug, PartialEq)]
pub struct DualPrototype {
    pub class_id: u32,
    /// Mean of the original-channel features.
    pub p1: FeatureVector,
    /// Mean of the transformed-channel features.
    pub p2: FeatureVector,
    /// Number of samples averaged into each component.
    pub source_count: usize,
}

impl DualPrototype {
    pub fn component(&self, j: Component) -> &FeatureVector {
        match j {
            Component::Original => &self.p1,
            Component::Transformed => &self.p2,
        }
    }

    pub(crate) fn component_mut(&mut self, j: Component) -> &mut FeatureVector {
        match j {
            Component::Original => &mut self.p1,
            Component::Transformed => &mut self.p2,
        }
    }

    pub fn as_dual(&self) -> DualFeature {
        DualFeature {
            original: self.p1.clone(),
            transformed: self.p2.clone(),
        }
    }
}

/// Per-class training features, each class's samples in record order.
pub type ClassSamples = BTreeMap<u32, Vec<DualFeature>>;

/// Group the dual features of `indices` by class, keeping index order.
pub fn group_by_class(ds: &EmbeddingDataset, indices: &[usize]) -> Result<ClassSamples> {
    let mut out = ClassSamples::new();
    for &i in indices {
        out.entry(ds.records()[i].class_id).or_default().push(ds.dual(i)?);
    }
    Ok(out)
}

pub fn build_prototypes(train: &ClassSamples) -> Result<Vec<DualPrototype>> {
    train
        .iter()
        .map(|(&class_id, samples)| {
            if samples.is_empty() {
                return Err(Error::EmptyClass(class_id));
            }
            let p1 = mean(samples.iter().map(|s| &s.original))?;
            let p2 = mean(samples.iter().map(|s| &s.transformed))?;
            if p1.is_zero() || p2.is_zero() {
                return Err(Error::ZeroVector);
            }
            Ok(DualPrototype {
                class_id,
                p1,
                p2,
                source_count: samples.len(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrototypeBank {
    dim: usize,
    prototypes: BTreeMap<u32, DualPrototype>,
    /// Accumulated novel-class directions `Δ_{c,j}`, base classes only.
    resistance: BTreeMap<(u32, Component), FeatureVector>,
    session_of: BTreeMap<u32, usize>,
}

impl PrototypeBank {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            prototypes: BTreeMap::new(),
            resistance: BTreeMap::new(),
            session_of: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.prototypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.is_empty()
    }

    pub fn get(&self, class_id: u32) -> Option<&DualPrototype> {
        self.prototypes.get(&class_id)
    }

    pub(crate) fn get_mut(&mut self, class_id: u32) -> Option<&mut DualPrototype> {
        self.prototypes.get_mut(&class_id)
    }

    /// Prototypes in ascending class id.
    pub fn iter(&self) -> impl Iterator<Item = &DualPrototype> {
        self.prototypes.values()
    }

    pub fn class_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.prototypes.keys().copied()
    }

    pub fn session_of(&self, class_id: u32) -> Option<usize> {
        self.session_of.get(&class_id).copied()
    }

    pub fn is_base(&self, class_id: u32) -> bool {
        self.session_of(class_id) == Some(0)
    }

    pub fn resistance(&self, class_id: u32, j: Component) -> Option<&FeatureVector> {
        self.resistance.get(&(class_id, j))
    }

    pub(crate) fn resistance_mut(&mut self, class_id: u32, j: Component) -> Option<&mut FeatureVector> {
        self.resistance.get_mut(&(class_id, j))
    }

    pub(crate) fn resistance_entries(&self) -> impl Iterator<Item = (&(u32, Component), &FeatureVector)> {
        self.resistance.iter()
    }

    pub fn same_classes(&self, other: &PrototypeBank) -> bool {
        self.prototypes.keys().eq(other.prototypes.keys())
    }

    /// Add the prototypes of one session. Existing entries are untouched;
    /// classes added at session 0 get zeroed resistance accumulators.
    pub fn extend(&mut self, novel: Vec<DualPrototype>, session: usize) -> Result<()> {
        for (k, p) in novel.iter().enumerate() {
            if self.prototypes.contains_key(&p.class_id)
                || novel[..k].iter().any(|q| q.class_id == p.class_id)
            {
                return Err(Error::DuplicateClass(p.class_id));
            }
            for v in [&p.p1, &p.p2] {
                if v.dim() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        found: v.dim(),
                    });
                }
                if v.is_zero() {
                    return Err(Error::ZeroVector);
                }
            }
        }
        for p in novel {
            if session == 0 {
                for j in Component::BOTH {
                    self.resistance.insert((p.class_id, j), FeatureVector::zeros(self.dim));
                }
            }
            self.session_of.insert(p.class_id, session);
            self.prototypes.insert(p.class_id, p);
        }
        Ok(())
    }

    pub(crate) fn restore(
        dim: usize,
        prototypes: Vec<(DualPrototype, usize)>,
        resistance: Vec<((u32, Component), FeatureVector)>,
    ) -> Result<Self> {
        let mut bank = Self::new(dim);
        for (p, s) in prototypes {
            if bank.prototypes.contains_key(&p.class_id) {
                return Err(Error::DuplicateClass(p.class_id));
            }
            bank.session_of.insert(p.class_id, s);
            bank.prototypes.insert(p.class_id, p);
        }
        for (key, delta) in resistance {
            if !bank.is_base(key.0) {
                return Err(Error::Format(format!(
                    "resistance accumulator for non-base class {}",
                    key.0
                )));
            }
            bank.resistance.insert(key, delta);
        }
        Ok(bank)
    }
}
