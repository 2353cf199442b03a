//! Applies operation streams to a structure while metering its trace.

use std::fmt;
use std::str::FromStr;

use chronoarray::cachesim::{simulate_sweep, LruBank};
use chronoarray::{AccessEvent, Arena, CacheConfig, CacheStats, Exec, PersistentArray, Policy};

use crate::workload::Op;
use crate::{BenchError, Result};

/// Traces are drained into the simulators once they reach this many events.
pub const DRAIN_CHUNK: usize = 1 << 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CheckMode {
    #[default]
    Off,
    Final,
    EveryOp,
}

impl fmt::Display for CheckMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckMode::Off => "off",
            CheckMode::Final => "final",
            CheckMode::EveryOp => "every-op",
        })
    }
}

impl FromStr for CheckMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "off" => Ok(CheckMode::Off),
            "final" => Ok(CheckMode::Final),
            "every-op" => Ok(CheckMode::EveryOp),
            other => Err(format!("unknown check mode {other:?}")),
        }
    }
}

enum Sink {
    /// Online LRU caches fed chunk by chunk.
    Lru(LruBank),
    /// Whole trace kept for offline policies.
    Full(Vec<AccessEvent>),
}

/// Cache simulators for a set of configurations sharing one trace.
pub struct Meter {
    configs: Vec<CacheConfig>,
    sink: Sink,
    exec: Exec,
}

impl Meter {
    pub fn new(configs: &[CacheConfig], exec: Exec) -> Self {
        let sink = if configs.iter().all(|c| c.policy == Policy::Lru) {
            Sink::Lru(LruBank::new(configs, exec))
        } else {
            Sink::Full(Vec::new())
        };
        Meter {
            configs: configs.to_vec(),
            sink,
            exec,
        }
    }

    pub fn configs(&self) -> &[CacheConfig] {
        &self.configs
    }

    pub fn feed(&mut self, events: &[AccessEvent]) {
        match &mut self.sink {
            Sink::Lru(bank) => bank.feed(events),
            Sink::Full(all) => all.extend_from_slice(events),
        }
    }

    /// Moves the arena's pending trace into the simulators.
    pub fn drain(&mut self, arena: &mut Arena) {
        let events = arena.take_trace();
        self.feed(&events);
    }

    fn drain_if_large(&mut self, arena: &mut Arena) {
        if arena.trace_len() >= DRAIN_CHUNK {
            self.drain(arena);
        }
    }

    pub fn finish(self) -> Vec<CacheStats> {
        match self.sink {
            Sink::Lru(bank) => bank.stats(),
            Sink::Full(all) => simulate_sweep(&all, &self.configs, self.exec),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub writes: u64,
    pub reads: u64,
    pub preads: u64,
}

pub fn apply(p: &mut PersistentArray, op: Op) -> Result<()> {
    match op {
        Op::Write { column, value } => {
            p.write(column, value)?;
        }
        Op::Read { column } => {
            p.read(column)?;
        }
        Op::PRead { version, column } => {
            p.persistent_read(version, column)?;
        }
    }
    Ok(())
}

/// Runs `ops` in order. With a meter, the structure's trace is drained into
/// it as it grows and once more at the end.
pub fn run_ops(
    p: &mut PersistentArray,
    ops: &[Op],
    mut meter: Option<&mut Meter>,
    check: CheckMode,
) -> Result<OpCounts> {
    let mut counts = OpCounts::default();
    for (k, &op) in ops.iter().enumerate() {
        apply(p, op)?;
        match op {
            Op::Write { .. } => counts.writes += 1,
            Op::Read { .. } => counts.reads += 1,
            Op::PRead { .. } => counts.preads += 1,
        }
        if let Some(m) = meter.as_deref_mut() {
            m.drain_if_large(p.arena_mut());
        }
        if check == CheckMode::EveryOp {
            p.check_invariants()
                .map_err(|detail| BenchError::Invariant { op: k as u64 + 1, detail })?;
        }
    }
    if let Some(m) = meter {
        m.drain(p.arena_mut());
    }
    if check == CheckMode::Final {
        p.check_invariants().map_err(|detail| BenchError::Invariant {
            op: ops.len() as u64,
            detail,
        })?;
    }
    Ok(counts)
}
