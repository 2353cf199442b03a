//! Flat word-addressed memory with an access trace.
//!
//! Everything the persistent structure stores lives in one [`Arena`]: the
//! global variables, the current array, the write log and both kinds of
//! space-time trees. Every [`Arena::load`] and [`Arena::store`] appends an
//! [`AccessEvent`] so the exact access sequence can later be replayed through
//! a cache model.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub type Word = u64;

/// Absent address / absent value.
pub const NULL_ADDR: Word = u64::MAX;
/// Top side of an open rectangle.
pub const OPEN_TOP: Word = u64::MAX - 1;
/// Payloads must be strictly below this value.
pub const PAYLOAD_LIMIT: Word = u64::MAX - 1;

/// Default cap on the arena size, in words (2 GiB of payload).
pub const DEFAULT_BUDGET: u64 = 1 << 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RegionLabel {
    Globals,
    CArray,
    Log,
    TopTree,
    BottomTrees,
}

impl RegionLabel {
    pub const ALL: [RegionLabel; 5] = [
        RegionLabel::Globals,
        RegionLabel::CArray,
        RegionLabel::Log,
        RegionLabel::TopTree,
        RegionLabel::BottomTrees,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RegionLabel::Globals => "GLOBALS",
            RegionLabel::CArray => "C_ARRAY",
            RegionLabel::Log => "LOG",
            RegionLabel::TopTree => "TOP_TREE",
            RegionLabel::BottomTrees => "BOTTOM_TREES",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Region {
    pub label: RegionLabel,
    pub base: u64,
    pub length: u64,
}

impl Region {
    pub fn end(&self) -> u64 {
        self.base + self.length
    }
}

/// Which primitive an access is charged to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpClass {
    Read = 0,
    PRead = 1,
    Write = 2,
    Maint = 3,
}

impl OpClass {
    pub const ALL: [OpClass; 4] = [OpClass::Read, OpClass::PRead, OpClass::Write, OpClass::Maint];

    pub fn from_code(code: u8) -> Option<OpClass> {
        OpClass::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            OpClass::Read => "READ",
            OpClass::PRead => "PREAD",
            OpClass::Write => "WRITE",
            OpClass::Maint => "MAINT",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AccessKind {
    Read = 0,
    Write = 1,
}

/// One traced access, packed into a single word: `address << 3 | kind << 2 | class`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct AccessEvent(u64);

impl AccessEvent {
    pub fn new(kind: AccessKind, address: u64, op_class: OpClass) -> Self {
        debug_assert!(address < (1 << 61));
        AccessEvent(address << 3 | (kind as u64) << 2 | op_class as u64)
    }

    pub fn kind(self) -> AccessKind {
        if self.0 & 0b100 == 0 {
            AccessKind::Read
        } else {
            AccessKind::Write
        }
    }

    pub fn address(self) -> u64 {
        self.0 >> 3
    }

    pub fn op_class(self) -> OpClass {
        match self.0 & 0b11 {
            0 => OpClass::Read,
            1 => OpClass::PRead,
            2 => OpClass::Write,
            _ => OpClass::Maint,
        }
    }
}

impl std::fmt::Debug for AccessEvent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}@{}({})", self.kind(), self.address(), self.op_class().name())
    }
}

pub type AccessTrace = Vec<AccessEvent>;

#[derive(Clone, Debug)]
pub struct Arena {
    words: Vec<Word>,
    regions: Vec<Region>,
    trace: AccessTrace,
    tracing: bool,
    budget: u64,
}

impl Arena {
    /// Builds an arena from `(label, length)` pairs. Regions are packed in
    /// the fixed label order, which is also the repacking order on growth.
    pub fn new(plan: &[(RegionLabel, u64)]) -> Result<Self> {
        Self::with_budget(plan, DEFAULT_BUDGET)
    }

    pub fn with_budget(plan: &[(RegionLabel, u64)], budget: u64) -> Result<Self> {
        let mut sorted: Vec<(RegionLabel, u64)> = plan.to_vec();
        sorted.sort_by_key(|(label, _)| *label);
        for pair in sorted.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::DuplicateRegion(pair[0].0));
            }
        }
        let mut regions = Vec::with_capacity(sorted.len());
        let mut base = 0u64;
        for (label, length) in sorted {
            regions.push(Region {
                label,
                base,
                length,
            });
            base = base
                .checked_add(length)
                .ok_or(Error::BudgetExceeded {
                    budget,
                    requested: u64::MAX,
                })?;
        }
        if base > budget {
            return Err(Error::BudgetExceeded {
                budget,
                requested: base,
            });
        }
        Ok(Arena {
            words: vec![0; base as usize],
            regions,
            trace: Vec::new(),
            tracing: true,
            budget,
        })
    }

    pub fn size(&self) -> u64 {
        self.words.len() as u64
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn region(&self, label: RegionLabel) -> Result<Region> {
        self.regions
            .iter()
            .find(|r| r.label == label)
            .copied()
            .ok_or(Error::UnknownRegion(label))
    }

    /// Turns recording on or off. With tracing off, loads and stores still
    /// work but leave no events behind.
    pub fn set_tracing(&mut self, on: bool) {
        self.tracing = on;
    }

    pub fn tracing(&self) -> bool {
        self.tracing
    }

    #[inline]
    fn check(&self, address: u64) -> Result<usize> {
        if address < self.words.len() as u64 {
            Ok(address as usize)
        } else {
            Err(Error::OutOfRange {
                address,
                size: self.size(),
            })
        }
    }

    #[inline]
    pub fn load(&mut self, address: u64, op_class: OpClass) -> Result<Word> {
        let idx = self.check(address)?;
        if self.tracing {
            self.trace
                .push(AccessEvent::new(AccessKind::Read, address, op_class));
        }
        Ok(self.words[idx])
    }

    #[inline]
    pub fn store(&mut self, address: u64, word: Word, op_class: OpClass) -> Result<()> {
        let idx = self.check(address)?;
        if self.tracing {
            self.trace
                .push(AccessEvent::new(AccessKind::Write, address, op_class));
        }
        self.words[idx] = word;
        Ok(())
    }

    /// Untraced read, for validators and census code that must not perturb
    /// the cost accounting.
    pub fn peek(&self, address: u64) -> Result<Word> {
        let idx = self.check(address)?;
        Ok(self.words[idx])
    }

    pub fn dump(&self) -> &[Word] {
        &self.words
    }

    /// Returns and clears the accumulated trace.
    pub fn take_trace(&mut self) -> AccessTrace {
        std::mem::take(&mut self.trace)
    }

    pub fn trace_len(&self) -> usize {
        self.trace.len()
    }

    /// Extends `label` to `new_length` words. Later regions are shifted up and
    /// their words copied with traced MAINT accesses; the freed span is zeroed.
    pub fn grow_region(&mut self, label: RegionLabel, new_length: u64) -> Result<()> {
        let pos = self
            .regions
            .iter()
            .position(|r| r.label == label)
            .ok_or(Error::UnknownRegion(label))?;
        let old = self.regions[pos];
        if new_length < old.length {
            return Err(Error::Shrink {
                label,
                old: old.length,
                new: new_length,
            });
        }
        let delta = new_length - old.length;
        if delta == 0 {
            return Ok(());
        }
        let requested = self.size().saturating_add(delta);
        if requested > self.budget {
            return Err(Error::BudgetExceeded {
                budget: self.budget,
                requested,
            });
        }
        let tail_start = old.end();
        let tail_end = self.size();
        self.words.resize(requested as usize, 0);
        // Move the tail backwards so overlapping spans copy correctly.
        for src in (tail_start..tail_end).rev() {
            let w = self.load(src, OpClass::Maint)?;
            self.store(src + delta, w, OpClass::Maint)?;
        }
        let clear_end = tail_start + delta.min(tail_end - tail_start);
        self.words[tail_start as usize..clear_end as usize].fill(0);
        self.regions[pos].length = new_length;
        for r in self.regions.iter_mut().skip(pos + 1) {
            r.base += delta;
        }
        Ok(())
    }
}

/// Writes a trace as little-endian records: class byte, kind byte, 8-byte address.
pub fn write_trace_dump<W: Write>(mut out: W, trace: &[AccessEvent]) -> Result<()> {
    let mut buf = [0u8; 10];
    for ev in trace {
        buf[0] = ev.op_class() as u8;
        buf[1] = ev.kind() as u8;
        buf[2..].copy_from_slice(&ev.address().to_le_bytes());
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_trace_dump<R: Read>(mut input: R) -> Result<AccessTrace> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() % 10 != 0 {
        return Err(Error::Io(format!(
            "trace dump length {} is not a multiple of 10",
            bytes.len()
        )));
    }
    bytes
        .chunks_exact(10)
        .map(|rec| {
            let class = OpClass::from_code(rec[0])
                .ok_or_else(|| Error::Io(format!("bad op class byte {}", rec[0])))?;
            let kind = match rec[1] {
                0 => AccessKind::Read,
                1 => AccessKind::Write,
                b => return Err(Error::Io(format!("bad access kind byte {b}"))),
            };
            let mut addr = [0u8; 8];
            addr.copy_from_slice(&rec[2..]);
            Ok(AccessEvent::new(kind, u64::from_le_bytes(addr), class))
        })
        .collect()
}
