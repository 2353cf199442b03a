//! Seeded operation streams.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::BenchError;

/// Largest value a generated write stores; far below the reserved sentinels.
pub const VALUE_LIMIT: u64 = 1 << 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WorkloadKind {
    SeqWrite,
    RandWrite,
    UniqueWrite,
    Pscan,
    PreadRand,
    Mixed,
}

impl WorkloadKind {
    pub const ALL: [WorkloadKind; 6] = [
        WorkloadKind::SeqWrite,
        WorkloadKind::RandWrite,
        WorkloadKind::UniqueWrite,
        WorkloadKind::Pscan,
        WorkloadKind::PreadRand,
        WorkloadKind::Mixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WorkloadKind::SeqWrite => "seq-write",
            WorkloadKind::RandWrite => "rand-write",
            WorkloadKind::UniqueWrite => "unique-write",
            WorkloadKind::Pscan => "pscan",
            WorkloadKind::PreadRand => "pread-rand",
            WorkloadKind::Mixed => "mixed",
        }
    }
}

impl fmt::Display for WorkloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WorkloadKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        WorkloadKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown workload {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Write { column: u64, value: u64 },
    Read { column: u64 },
    PRead { version: u64, column: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Workload {
    pub kind: WorkloadKind,
    pub ops: u64,
    pub u0: u64,
    pub seed: u64,
    /// Column range `[0, width)` for generated writes and reads; defaults to `u0`.
    pub width: Option<u64>,
    /// Versions `0..=history` already exist before the stream starts.
    pub history: u64,
    /// Fixed version for `pscan`; defaults to `history / 2`.
    pub version: Option<u64>,
}

impl Workload {
    pub fn new(kind: WorkloadKind, ops: u64, u0: u64, seed: u64) -> Self {
        Workload {
            kind,
            ops,
            u0,
            seed,
            width: None,
            history: 0,
            version: None,
        }
    }

    pub fn width(&self) -> u64 {
        self.width.unwrap_or(self.u0)
    }

    pub fn scan_version(&self) -> u64 {
        self.version.unwrap_or(self.history / 2)
    }
}

pub fn gen_workload(w: &Workload) -> Result<Vec<Op>, BenchError> {
    if w.ops == 0 {
        return Err(BenchError::Workload("ops must be at least 1".into()));
    }
    if w.u0 < 2 || !w.u0.is_power_of_two() {
        return Err(BenchError::Workload(format!("u0 = {} is not a power of two >= 2", w.u0)));
    }
    let width = w.width();
    if width == 0 {
        return Err(BenchError::Workload("width must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(w.seed);
    let n = w.ops;
    let ops = match w.kind {
        WorkloadKind::SeqWrite => (0..n)
            .map(|k| Op::Write {
                column: k % width,
                value: rng.random_range(0..VALUE_LIMIT),
            })
            .collect(),
        WorkloadKind::RandWrite => (0..n)
            .map(|_| Op::Write {
                column: rng.random_range(0..width),
                value: rng.random_range(0..VALUE_LIMIT),
            })
            .collect(),
        WorkloadKind::UniqueWrite => {
            let mut columns: Vec<u64> = (0..width.max(n)).collect();
            columns.shuffle(&mut rng);
            columns.truncate(n as usize);
            columns
                .into_iter()
                .map(|column| Op::Write {
                    column,
                    value: rng.random_range(0..VALUE_LIMIT),
                })
                .collect()
        }
        WorkloadKind::Pscan => {
            if n > width {
                return Err(BenchError::Workload(format!("scan width {n} exceeds {width} columns")));
            }
            let version = w.scan_version();
            if version > w.history {
                return Err(BenchError::Workload(format!(
                    "scan version {version} is past the history ({})",
                    w.history
                )));
            }
            let start = rng.random_range(0..=width - n);
            (start..start + n).map(|column| Op::PRead { version, column }).collect()
        }
        WorkloadKind::PreadRand => (0..n)
            .map(|_| Op::PRead {
                version: rng.random_range(0..=w.history),
                column: rng.random_range(0..width),
            })
            .collect(),
        WorkloadKind::Mixed => {
            let mut latest = w.history;
            (0..n)
                .map(|_| match rng.random_range(0..4) {
                    0 | 1 => {
                        latest += 1;
                        Op::Write {
                            column: rng.random_range(0..width),
                            value: rng.random_range(0..VALUE_LIMIT),
                        }
                    }
                    2 => Op::Read {
                        column: rng.random_range(0..width),
                    },
                    _ => Op::PRead {
                        version: rng.random_range(0..=latest),
                        column: rng.random_range(0..width),
                    },
                })
                .collect()
        }
    };
    Ok(ops)
}
