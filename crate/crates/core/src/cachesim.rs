//! Trace-driven two-level cache model: `M / B` lines of `B` words, a miss
//! whenever the touched block is not resident. LRU runs online; Belady's MIN
//! runs offline over a complete trace.

use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use crate::arena::{AccessEvent, OpClass};
use crate::par::{self, Exec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Policy {
    Lru,
    Opt,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Lru => "lru",
            Policy::Opt => "opt",
        })
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "lru" => Ok(Policy::Lru),
            "opt" | "min" | "belady" => Ok(Policy::Opt),
            other => Err(format!("unknown policy {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CacheConfig {
    /// Cache size in words.
    pub memory: u64,
    /// Block size in words.
    pub block: u64,
    pub policy: Policy,
}

impl CacheConfig {
    pub fn new(memory: u64, block: u64, policy: Policy) -> Self {
        assert!(block >= 1, "block size must be positive");
        assert!(memory >= block, "cache must hold at least one block");
        CacheConfig {
            memory,
            block,
            policy,
        }
    }

    pub fn lines(&self) -> usize {
        (self.memory / self.block) as usize
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub accesses: u64,
    pub misses: u64,
    pub accesses_by_class: [u64; 4],
    pub misses_by_class: [u64; 4],
}

impl CacheStats {
    fn record(&mut self, class: OpClass, miss: bool) {
        self.accesses += 1;
        self.accesses_by_class[class as usize] += 1;
        if miss {
            self.misses += 1;
            self.misses_by_class[class as usize] += 1;
        }
    }

    pub fn misses_of(&self, class: OpClass) -> u64 {
        self.misses_by_class[class as usize]
    }

    pub fn accesses_of(&self, class: OpClass) -> u64 {
        self.accesses_by_class[class as usize]
    }
}

const NIL: usize = usize::MAX;

/// Online LRU cache over block ids. Feed it events in trace order.
#[derive(Clone, Debug)]
pub struct LruCache {
    block: u64,
    capacity: usize,
    index: HashMap<u64, usize>,
    blocks: Vec<u64>,
    prev: Vec<usize>,
    next: Vec<usize>,
    head: usize,
    tail: usize,
    stats: CacheStats,
}

impl LruCache {
    pub fn new(config: CacheConfig) -> Self {
        let capacity = config.lines();
        LruCache {
            block: config.block,
            capacity,
            index: HashMap::with_capacity(capacity),
            blocks: Vec::with_capacity(capacity),
            prev: Vec::with_capacity(capacity),
            next: Vec::with_capacity(capacity),
            head: NIL,
            tail: NIL,
            stats: CacheStats::default(),
        }
    }

    fn unlink(&mut self, slot: usize) {
        let (p, n) = (self.prev[slot], self.next[slot]);
        if p == NIL {
            self.head = n;
        } else {
            self.next[p] = n;
        }
        if n == NIL {
            self.tail = p;
        } else {
            self.prev[n] = p;
        }
    }

    fn push_front(&mut self, slot: usize) {
        self.prev[slot] = NIL;
        self.next[slot] = self.head;
        if self.head != NIL {
            self.prev[self.head] = slot;
        }
        self.head = slot;
        if self.tail == NIL {
            self.tail = slot;
        }
    }

    /// Touches `address`; returns whether it missed.
    pub fn access(&mut self, address: u64, class: OpClass) -> bool {
        let block = address / self.block;
        let miss = match self.index.get(&block) {
            Some(&slot) => {
                if self.head != slot {
                    self.unlink(slot);
                    self.push_front(slot);
                }
                false
            }
            None => {
                let slot = if self.blocks.len() < self.capacity {
                    self.blocks.push(block);
                    self.prev.push(NIL);
                    self.next.push(NIL);
                    self.blocks.len() - 1
                } else {
                    let victim = self.tail;
                    self.unlink(victim);
                    self.index.remove(&self.blocks[victim]);
                    self.blocks[victim] = block;
                    victim
                };
                self.index.insert(block, slot);
                self.push_front(slot);
                true
            }
        };
        self.stats.record(class, miss);
        miss
    }

    pub fn feed(&mut self, trace: &[AccessEvent]) {
        for ev in trace {
            self.access(ev.address(), ev.op_class());
        }
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }
}

pub fn sim_lru(trace: &[AccessEvent], config: CacheConfig) -> CacheStats {
    let mut cache = LruCache::new(config);
    cache.feed(trace);
    cache.stats()
}

/// Belady MIN: on a miss with a full cache, evict the block whose next use is
/// furthest away (never-again first, ties to the lowest block id).
pub fn sim_opt(trace: &[AccessEvent], config: CacheConfig) -> CacheStats {
    let b = config.block;
    let capacity = config.lines();
    let blocks: Vec<u64> = trace.iter().map(|e| e.address() / b).collect();
    let mut next_use = vec![u64::MAX; blocks.len()];
    let mut seen: HashMap<u64, u64> = HashMap::new();
    for (k, &blk) in blocks.iter().enumerate().rev() {
        if let Some(&n) = seen.get(&blk) {
            next_use[k] = n;
        }
        seen.insert(blk, k as u64);
    }
    let mut resident: HashMap<u64, u64> = HashMap::with_capacity(capacity);
    // Max element = furthest next use, then lowest block id.
    let mut by_next: BTreeSet<(u64, Reverse<u64>)> = BTreeSet::new();
    let mut stats = CacheStats::default();
    for (k, ev) in trace.iter().enumerate() {
        let blk = blocks[k];
        let miss = match resident.get(&blk).copied() {
            Some(old) => {
                by_next.remove(&(old, Reverse(blk)));
                false
            }
            None => {
                if resident.len() == capacity {
                    let victim = by_next.pop_last().expect("full cache has entries");
                    resident.remove(&victim.1 .0);
                }
                true
            }
        };
        resident.insert(blk, next_use[k]);
        by_next.insert((next_use[k], Reverse(blk)));
        stats.record(ev.op_class(), miss);
    }
    stats
}

pub fn simulate(trace: &[AccessEvent], config: CacheConfig) -> CacheStats {
    match config.policy {
        Policy::Lru => sim_lru(trace, config),
        Policy::Opt => sim_opt(trace, config),
    }
}

/// Runs every configuration over the same trace.
pub fn simulate_sweep(trace: &[AccessEvent], configs: &[CacheConfig], exec: Exec) -> Vec<CacheStats> {
    par::map_slice(exec, configs, |c| simulate(trace, *c))
}

/// A set of LRU caches consuming a trace in chunks, so long runs never need
/// the whole trace in memory.
#[derive(Clone, Debug)]
pub struct LruBank {
    configs: Vec<CacheConfig>,
    caches: Vec<LruCache>,
    exec: Exec,
}

impl LruBank {
    pub fn new(configs: &[CacheConfig], exec: Exec) -> Self {
        LruBank {
            configs: configs.to_vec(),
            caches: configs.iter().map(|c| LruCache::new(*c)).collect(),
            exec,
        }
    }

    pub fn feed(&mut self, chunk: &[AccessEvent]) {
        match self.exec {
            #[cfg(feature = "parallel")]
            Exec::Parallel if self.caches.len() > 1 => {
                use rayon::prelude::*;
                self.caches.par_iter_mut().for_each(|c| c.feed(chunk));
            }
            _ => self.caches.iter_mut().for_each(|c| c.feed(chunk)),
        }
    }

    pub fn configs(&self) -> &[CacheConfig] {
        &self.configs
    }

    pub fn stats(&self) -> Vec<CacheStats> {
        self.caches.iter().map(|c| c.stats()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arena::AccessKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reads(addresses: &[u64]) -> Vec<AccessEvent> {
        addresses
            .iter()
            .map(|&a| AccessEvent::new(AccessKind::Read, a, OpClass::Read))
            .collect()
    }

    fn random_trace(rng: &mut ChaCha8Rng) -> Vec<AccessEvent> {
        let len = rng.random_range(1..400);
        let span = rng.random_range(1..2048u64);
        (0..len)
            .map(|_| {
                let class = OpClass::ALL[rng.random_range(0..4)];
                AccessEvent::new(AccessKind::Read, rng.random_range(0..span), class)
            })
            .collect()
    }

    #[test]
    fn lru_known_answers() {
        let scan: Vec<u64> = (0..64).collect();
        assert_eq!(sim_lru(&reads(&scan), CacheConfig::new(64, 16, Policy::Lru)).misses, 4);
        assert_eq!(sim_lru(&reads(&[0, 16, 0]), CacheConfig::new(16, 16, Policy::Lru)).misses, 3);
        assert_eq!(
            sim_lru(&reads(&[0, 16, 32, 0, 16, 32]), CacheConfig::new(32, 16, Policy::Lru)).misses,
            6
        );
    }

    #[test]
    fn opt_known_answers() {
        let scan: Vec<u64> = (0..64).collect();
        assert_eq!(sim_opt(&reads(&scan), CacheConfig::new(64, 16, Policy::Opt)).misses, 4);
        assert_eq!(
            sim_opt(&reads(&[0, 16, 32, 0, 16, 32]), CacheConfig::new(32, 16, Policy::Opt)).misses,
            4
        );
    }

    #[test]
    fn class_counts_sum_to_totals() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_trace(&mut rng);
        for s in [
            sim_lru(&t, CacheConfig::new(128, 16, Policy::Lru)),
            sim_opt(&t, CacheConfig::new(128, 16, Policy::Opt)),
        ] {
            assert!(s.misses <= s.accesses);
            assert_eq!(s.accesses_by_class.iter().sum::<u64>(), s.accesses);
            assert_eq!(s.misses_by_class.iter().sum::<u64>(), s.misses);
        }
    }

    #[test]
    fn opt_never_worse_and_lru_competitive() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let t = random_trace(&mut rng);
            let b = 1 << rng.random_range(0..5);
            let lines = rng.random_range(2..16u64);
            let m = lines * b;
            let lru = sim_lru(&t, CacheConfig::new(m, b, Policy::Lru));
            let opt = sim_opt(&t, CacheConfig::new(m, b, Policy::Opt));
            assert!(opt.misses <= lru.misses);
            assert_eq!(opt.accesses, lru.accesses);
            if lines % 2 == 0 {
                let half = sim_opt(&t, CacheConfig::new(m / 2, b, Policy::Opt));
                assert!(lru.misses <= 2 * half.misses + m / b);
            }
        }
    }

    #[test]
    fn deterministic_and_chunking_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_trace(&mut rng);
        let cfgs = [
            CacheConfig::new(64, 16, Policy::Lru),
            CacheConfig::new(256, 16, Policy::Lru),
            CacheConfig::new(64, 4, Policy::Opt),
        ];
        let a = simulate_sweep(&t, &cfgs, Exec::Parallel);
        let b = simulate_sweep(&t, &cfgs, Exec::Sequential);
        assert_eq!(a, b);
        let mut bank = LruBank::new(&cfgs[..2], Exec::Parallel);
        for chunk in t.chunks(7) {
            bank.feed(chunk);
        }
        assert_eq!(bank.stats(), a[..2].to_vec());
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("LRU".parse::<Policy>().unwrap(), Policy::Lru);
        assert_eq!("opt".parse::<Policy>().unwrap(), Policy::Opt);
        assert!("fifo".parse::<Policy>().is_err());
    }
}
