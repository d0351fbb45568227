//! N-way K-shot session protocol over an embedding dataset.
//!
//! Classes are assigned to sessions in ascending id order: ids
//! `0..base_class_count` form the base session and each following block of
//! `ways` ids is one incremental session. The seed only drives K-shot
//! subsampling, keyed by `(session, class)`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingDataset, Split};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub base_class_count: usize,
    pub sessions: usize,
    pub ways: usize,
    pub shots: usize,
    pub seed: u64,
    /// Labeled samples of each past incremental class revealed again in
    /// later sessions. Zero reproduces the standard protocol.
    #[serde(default)]
    pub revisit_shots: usize,
}

impl ProtocolConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn total_classes(&self) -> usize {
        self.base_class_count + self.sessions * self.ways
    }

    /// Session index of a class under block assignment, if it is covered.
    pub fn session_of(&self, class_id: u32) -> Option<usize> {
        let c = class_id as usize;
        if c < self.base_class_count {
            Some(0)
        } else if c < self.total_classes() {
            Some(1 + (c - self.base_class_count) / self.ways)
        } else {
            None
        }
    }

    pub fn classes_of(&self, session: usize) -> Vec<u32> {
        if session == 0 {
            (0..self.base_class_count as u32).collect()
        } else {
            let start = self.base_class_count + (session - 1) * self.ways;
            (start as u32..(start + self.ways) as u32).collect()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.ways == 0 || self.shots == 0 {
            return Err(Error::InfeasibleProtocol("ways and shots must be at least 1".into()));
        }
        if self.base_class_count == 0 {
            return Err(Error::InfeasibleProtocol("base session needs at least one class".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Session {
    pub index: usize,
    pub classes: Vec<u32>,
    /// Record indices of this session's training data.
    pub train: Vec<usize>,
    /// Record indices of the cumulative test set over all seen classes.
    pub test: Vec<usize>,
    /// Labeled records of past incremental classes seen again this session.
    pub revisit: Vec<usize>,
}

/// Ordered sessions holding record indices into the dataset they were built
/// from. Any dataset aligned with that one (same labels and splits in the
/// same order, e.g. the other feature space) can be indexed with it.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionStream {
    pub config: ProtocolConfig,
    pub sessions: Vec<Session>,
    class_session: BTreeMap<u32, usize>,
}

impl SessionStream {
    pub fn session_of(&self, class_id: u32) -> Option<usize> {
        self.class_session.get(&class_id).copied()
    }

    pub fn class_sessions(&self) -> &BTreeMap<u32, usize> {
        &self.class_session
    }

    pub fn base_classes(&self) -> &[u32] {
        &self.sessions[0].classes
    }

    pub fn is_base(&self, class_id: u32) -> bool {
        self.session_of(class_id) == Some(0)
    }
}

pub fn build_protocol(ds: &EmbeddingDataset, cfg: &ProtocolConfig) -> Result<SessionStream> {
    cfg.validate()?;
    let total = cfg.total_classes();
    if total > ds.class_count() as usize {
        return Err(Error::InfeasibleProtocol(format!(
            "{} base + {} x {} incremental classes exceed the dataset's {} classes",
            cfg.base_class_count,
            cfg.sessions,
            cfg.ways,
            ds.class_count()
        )));
    }

    let mut class_session = BTreeMap::new();
    let mut shot_sets: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    let mut sessions = Vec::with_capacity(cfg.sessions + 1);

    for t in 0..=cfg.sessions {
        let classes = cfg.classes_of(t);
        let mut train = Vec::new();
        for &c in &classes {
            class_session.insert(c, t);
            let pool = ds.indices_of(c, Split::Train);
            if t == 0 {
                if pool.is_empty() {
                    return Err(Error::EmptyClass(c));
                }
                train.extend(pool);
            } else {
                if pool.len() < cfg.shots {
                    return Err(Error::InsufficientShots {
                        class: c,
                        available: pool.len(),
                        required: cfg.shots,
                    });
                }
                let mut rng = seed::rng(seed::mix(cfg.seed, &[t as u64, u64::from(c)]));
                let mut picked: Vec<usize> = sample(&mut rng, pool.len(), cfg.shots)
                    .into_iter()
                    .map(|k| pool[k])
                    .collect();
                picked.sort_unstable();
                train.extend(&picked);
                shot_sets.insert(c, picked);
            }
        }

        let mut revisit = Vec::new();
        if cfg.revisit_shots > 0 && t >= 2 {
            for c in cfg.classes_of(1)[0]..cfg.classes_of(t)[0] {
                let used = &shot_sets[&c];
                let spare: Vec<usize> = ds
                    .indices_of(c, Split::Train)
                    .into_iter()
                    .filter(|i| !used.contains(i))
                    .collect();
                let n = cfg.revisit_shots.min(spare.len());
                let mut rng = seed::rng(seed::mix(cfg.seed, &[t as u64, u64::from(c), 0x5245_5649]));
                let mut picked: Vec<usize> = sample(&mut rng, spare.len(), n)
                    .into_iter()
                    .map(|k| spare[k])
                    .collect();
                picked.sort_unstable();
                revisit.extend(picked);
            }
        }

        let test = ds
            .records()
            .iter()
            .enumerate()
            .filter(|(_, r)| {
                r.split == Split::Test && class_session.get(&r.class_id).is_some_and(|&s| s <= t)
            })
            .map(|(i, _)| i)
            .collect();

        sessions.push(Session {
            index: t,
            classes,
            train,
            test,
            revisit,
        });
    }

    Ok(SessionStream {
        config: cfg.clone(),
        sessions,
        class_session,
    })
}
