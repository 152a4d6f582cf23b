use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::dag::NodeId;

/// How a store decides what to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvictionPolicy {
    /// Keep the pinned set; other outputs are admitted under LRU only after
    /// [`CacheStore::enable_lru`].
    PinnedThenLru,
    /// No pins; every output competes under admission control and LRU.
    LruOnly,
    /// Pins are the estimator outputs chosen by the rule-based baseline.
    RuleBased,
}

impl fmt::Display for EvictionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvictionPolicy::PinnedThenLru => "pinned-then-lru",
            EvictionPolicy::LruOnly => "lru-only",
            EvictionPolicy::RuleBased => "rule-based",
        })
    }
}

pub const DEFAULT_ADMISSION_FRACTION: f64 = 0.3;

#[derive(Debug, Clone)]
struct Entry<V> {
    value: V,
    bytes: u64,
    last_access: u64,
}

/// Byte-budgeted store of materialized node outputs.
#[derive(Debug, Clone)]
pub struct CacheStore<V> {
    budget: u64,
    pinned: BTreeSet<NodeId>,
    entries: BTreeMap<NodeId, Entry<V>>,
    policy: EvictionPolicy,
    admission_fraction: f64,
    lru_enabled: bool,
    used: u64,
    clock: u64,
}

impl<V: Clone> CacheStore<V> {
    pub fn new(
        budget: u64,
        policy: EvictionPolicy,
        pinned: impl IntoIterator<Item = NodeId>,
    ) -> Self {
        let pinned = match policy {
            EvictionPolicy::LruOnly => BTreeSet::new(),
            _ => pinned.into_iter().collect(),
        };
        CacheStore {
            budget,
            pinned,
            entries: BTreeMap::new(),
            policy,
            admission_fraction: DEFAULT_ADMISSION_FRACTION,
            lru_enabled: policy == EvictionPolicy::LruOnly,
            used: 0,
            clock: 0,
        }
    }

    pub fn with_admission_fraction(mut self, fraction: f64) -> Self {
        self.admission_fraction = fraction;
        self
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn policy(&self) -> EvictionPolicy {
        self.policy
    }

    pub fn is_pinned(&self, id: NodeId) -> bool {
        self.pinned.contains(&id)
    }

    pub fn lru_enabled(&self) -> bool {
        self.lru_enabled
    }

    /// Lets non-pinned outputs compete for the space left by the pins.
    pub fn enable_lru(&mut self) {
        self.lru_enabled = true;
    }

    /// Stops treating `id` as pinned, so it is recomputed on demand.
    pub fn unpin(&mut self, id: NodeId) {
        self.pinned.remove(&id);
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.entries.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Looks up an entry and marks it as most recently used.
    pub fn get(&mut self, id: NodeId) -> Option<V> {
        self.clock += 1;
        let clock = self.clock;
        self.entries.get_mut(&id).map(|e| {
            e.last_access = clock;
            e.value.clone()
        })
    }

    /// Frees at least `needed` bytes by evicting non-pinned entries, least
    /// recently used first. Returns the evicted ids with their sizes, or
    /// `None` (evicting nothing) when that much space cannot be freed.
    pub fn evict_lru(&mut self, needed: u64) -> Option<Vec<(NodeId, u64)>> {
        let free = self.budget - self.used;
        if free >= needed {
            return Some(Vec::new());
        }
        let mut victims: Vec<(u64, NodeId, u64)> = self
            .entries
            .iter()
            .filter(|(id, _)| !self.pinned.contains(id))
            .map(|(&id, e)| (e.last_access, id, e.bytes))
            .collect();
        let evictable: u64 = victims.iter().map(|v| v.2).sum();
        if free + evictable < needed {
            return None;
        }
        victims.sort();
        let mut evicted = Vec::new();
        let mut free = free;
        for (_, id, bytes) in victims {
            if free >= needed {
                break;
            }
            self.entries.remove(&id);
            self.used -= bytes;
            free += bytes;
            evicted.push((id, bytes));
        }
        debug_assert!(self.used <= self.budget);
        Some(evicted)
    }

    /// Decides whether an output of `bytes` for `id` may enter the store and,
    /// if so, evicts enough to make room. Returns the eviction list on
    /// admission.
    pub fn cache_admit(&mut self, id: NodeId, bytes: u64) -> Option<Vec<(NodeId, u64)>> {
        if bytes > self.budget || self.entries.contains_key(&id) {
            return None;
        }
        let pinned = self.pinned.contains(&id);
        if !pinned {
            if !self.lru_enabled || bytes as f64 > self.admission_fraction * self.budget as f64 {
                return None;
            }
        }
        self.evict_lru(bytes)
    }

    /// Admits and stores `value`. Returns the evictions it caused, or `None`
    /// when the value was not admitted.
    pub fn put(&mut self, id: NodeId, value: V, bytes: u64) -> Option<Vec<(NodeId, u64)>> {
        let evicted = self.cache_admit(id, bytes)?;
        self.clock += 1;
        self.entries.insert(
            id,
            Entry {
                value,
                bytes,
                last_access: self.clock,
            },
        );
        self.used += bytes;
        assert!(self.used <= self.budget, "cache store over budget");
        Some(evicted)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(n: u64) -> NodeId {
        NodeId(n)
    }

    #[test]
    fn oversized_rejected() {
        let mut s: CacheStore<()> = CacheStore::new(100, EvictionPolicy::PinnedThenLru, [id(1)]);
        assert!(s.cache_admit(id(1), 101).is_none());
    }

    #[test]
    fn pinned_admitted_after_evictions() {
        let mut s: CacheStore<()> = CacheStore::new(100, EvictionPolicy::PinnedThenLru, [id(9)]);
        s.enable_lru();
        assert!(s.put(id(1), (), 30).is_some());
        assert!(s.put(id(2), (), 30).is_some());
        let evicted = s.put(id(9), (), 70).unwrap();
        assert_eq!(evicted, vec![(id(1), 30)]);
        assert!(s.contains(id(9)) && s.contains(id(2)) && !s.contains(id(1)));
        assert_eq!(s.used(), 100);
    }

    #[test]
    fn admission_fraction_threshold() {
        let mut s: CacheStore<()> = CacheStore::new(100, EvictionPolicy::LruOnly, []);
        assert!(s.cache_admit(id(1), 50).is_none());
        assert!(s.cache_admit(id(1), 30).is_some());
        let mut s = s.with_admission_fraction(0.6);
        assert!(s.cache_admit(id(1), 50).is_some());
    }

    #[test]
    fn unpinned_needs_lru_enabled() {
        let mut s: CacheStore<()> = CacheStore::new(100, EvictionPolicy::PinnedThenLru, [id(1)]);
        assert!(s.put(id(2), (), 10).is_none());
        s.enable_lru();
        assert!(s.put(id(2), (), 10).is_some());
    }

    #[test]
    fn evicts_single_entry() {
        let mut s: CacheStore<()> = CacheStore::new(100, EvictionPolicy::LruOnly, []);
        s.put(id(1), (), 30).unwrap();
        assert_eq!(s.evict_lru(100).unwrap(), vec![(id(1), 30)]);
        assert!(s.is_empty());
    }

    #[test]
    fn evicts_least_recent_first() {
        let mut s: CacheStore<u8> =
            CacheStore::new(60, EvictionPolicy::LruOnly, []).with_admission_fraction(1.0);
        s.put(id(1), 1, 30).unwrap();
        s.put(id(2), 2, 30).unwrap();
        assert_eq!(s.evict_lru(30).unwrap(), vec![(id(1), 30)]);
        s.put(id(1), 1, 30).unwrap();
        assert_eq!(s.get(id(2)), Some(2));
        assert_eq!(s.evict_lru(30).unwrap(), vec![(id(1), 30)]);
    }

    #[test]
    fn all_pinned_denies() {
        let mut s: CacheStore<()> =
            CacheStore::new(60, EvictionPolicy::PinnedThenLru, [id(1), id(2)]);
        s.put(id(1), (), 30).unwrap();
        s.put(id(2), (), 30).unwrap();
        assert!(s.evict_lru(10).is_none());
        assert_eq!(s.len(), 2);
    }
}
