//! Per-class queues of margin-admitted embeddings.
//!
//! Only anchors whose margin clears the threshold are cached. Once a class
//! queue holds `capacity_m` entries it is ready: in [`CacheMode::DrainAndClear`]
//! draining hands out the whole queue and empties it, in
//! [`CacheMode::SlidingWindow`] draining copies the current window and the
//! queue keeps rolling, evicting its oldest entry on each new admission.
//!
//! Entries are detached snapshots; nothing here participates in a graph.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{Embedding, Margin};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    #[default]
    DrainAndClear,
    SlidingWindow,
}

impl std::str::FromStr for CacheMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drain_and_clear" => Ok(CacheMode::DrainAndClear),
            "sliding_window" => Ok(CacheMode::SlidingWindow),
            other => Err(Error::contract(format!("unknown cache mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for CacheMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CacheMode::DrainAndClear => "drain_and_clear",
            CacheMode::SlidingWindow => "sliding_window",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheConfig {
    pub capacity_m: usize,
    pub delta: f64,
    pub mode: CacheMode,
}

impl CacheConfig {
    pub fn validate(&self) -> Result<()> {
        if self.capacity_m == 0 {
            return Err(Error::contract("capacity_m must be at least 1"));
        }
        if !(self.delta > 0.0) {
            return Err(Error::contract(format!("delta must be positive, got {}", self.delta)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CacheEntry {
    pub embedding: Embedding,
    pub sample_id: usize,
    pub step_enqueued: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassStats {
    pub occupancy: usize,
    pub admitted: u64,
    pub rejected: u64,
    pub drains: u64,
    /// Entries pushed out of a full queue by a newer admission.
    pub evicted: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassQueue {
    pub class_id: usize,
    entries: VecDeque<CacheEntry>,
    capacity: usize,
    stats: ClassStats,
}

impl ClassQueue {
    fn new(class_id: usize, capacity: usize) -> Self {
        ClassQueue {
            class_id,
            entries: VecDeque::with_capacity(capacity),
            capacity,
            stats: ClassStats::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    pub fn entries(&self) -> impl Iterator<Item = &CacheEntry> {
        self.entries.iter()
    }

    /// Steps since the oldest entry was enqueued.
    pub fn max_staleness(&self, now: u64) -> Option<u64> {
        self.entries.front().map(|e| now.saturating_sub(e.step_enqueued))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NegativeCache {
    config: CacheConfig,
    queues: Vec<ClassQueue>,
}

impl NegativeCache {
    pub fn new(classes: usize, config: CacheConfig) -> Result<Self> {
        config.validate()?;
        let queues = (0..classes).map(|c| ClassQueue::new(c, config.capacity_m)).collect();
        Ok(NegativeCache { config, queues })
    }

    pub fn config(&self) -> &CacheConfig {
        &self.config
    }

    pub fn classes(&self) -> usize {
        self.queues.len()
    }

    pub fn queue(&self, class_id: usize) -> Result<&ClassQueue> {
        self.queues.get(class_id).ok_or_else(|| unknown_class(class_id, self.queues.len()))
    }

    /// Caches `emb` when `rho > delta`. A full queue makes room by dropping its
    /// oldest entry.
    pub fn enqueue_if_margin(
        &mut self,
        class_id: usize,
        emb: Embedding,
        sample_id: usize,
        rho: Margin,
        step: u64,
    ) -> Result<bool> {
        let classes = self.queues.len();
        let delta = self.config.delta;
        let q = self
            .queues
            .get_mut(class_id)
            .ok_or_else(|| unknown_class(class_id, classes))?;
        if !rho.passes(delta) {
            q.stats.rejected += 1;
            return Ok(false);
        }
        if q.entries.len() == q.capacity {
            q.entries.pop_front();
            q.stats.evicted += 1;
        }
        q.entries.push_back(CacheEntry {
            embedding: emb,
            sample_id,
            step_enqueued: step,
        });
        q.stats.admitted += 1;
        Ok(true)
    }

    /// The full queue contents when the class holds exactly `capacity_m`
    /// entries, otherwise `None`. Draining clears the queue only in
    /// drain-and-clear mode.
    pub fn drain_ready(&mut self, class_id: usize) -> Option<Vec<CacheEntry>> {
        let mode = self.config.mode;
        let q = self.queues.get_mut(class_id)?;
        if !q.is_full() {
            return None;
        }
        q.stats.drains += 1;
        Some(match mode {
            CacheMode::DrainAndClear => q.entries.drain(..).collect(),
            CacheMode::SlidingWindow => q.entries.iter().cloned().collect(),
        })
    }

    pub fn stats(&self) -> Vec<ClassStats> {
        self.queues
            .iter()
            .map(|q| ClassStats {
                occupancy: q.entries.len(),
                ..q.stats.clone()
            })
            .collect()
    }

    /// `{class_id: {occupancy, admitted, rejected, drains, evicted}}`.
    pub fn stats_json(&self) -> serde_json::Value {
        let map: BTreeMap<String, ClassStats> = self
            .stats()
            .into_iter()
            .enumerate()
            .map(|(c, s)| (c.to_string(), s))
            .collect();
        serde_json::to_value(map).expect("stats serialize")
    }

    pub fn total_stored(&self) -> usize {
        self.queues.iter().map(ClassQueue::len).sum()
    }

    pub fn max_staleness(&self, now: u64) -> Option<u64> {
        self.queues.iter().filter_map(|q| q.max_staleness(now)).max()
    }
}

fn unknown_class(class_id: usize, classes: usize) -> Error {
    Error::contract(format!("unknown class {class_id} (cache has {classes} classes)"))
}

/// Embeddings of `entries`, minus any entry produced by `sample_id`.
pub fn negatives_excluding(entries: &[CacheEntry], sample_id: usize) -> Vec<Embedding> {
    entries
        .iter()
        .filter(|e| e.sample_id != sample_id)
        .map(|e| e.embedding.clone())
        .collect()
}
