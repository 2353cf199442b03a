//! Brute-force partially persistent array: per-column version histories.
//! Used as ground truth; it is never traced.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::persist::VersionedAnswer;

#[derive(Clone, Debug, Default)]
pub struct History {
    columns: HashMap<u64, Vec<(u64, u64)>>,
    v: u64,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn version(&self) -> u64 {
        self.v
    }

    pub fn write(&mut self, column: u64, value: u64) -> u64 {
        self.v += 1;
        self.columns.entry(column).or_default().push((self.v, value));
        self.v
    }

    pub fn pread(&self, v: u64, column: u64) -> Result<VersionedAnswer> {
        if v > self.v {
            return Err(Error::FutureVersion {
                requested: v,
                latest: self.v,
            });
        }
        let Some(h) = self.columns.get(&column) else {
            return Ok(VersionedAnswer::Unwritten);
        };
        let k = h.partition_point(|&(ver, _)| ver <= v);
        Ok(if k == 0 {
            VersionedAnswer::Unwritten
        } else {
            VersionedAnswer::Value(h[k - 1].1)
        })
    }

    /// Columns that have been written at least once.
    pub fn columns(&self) -> impl Iterator<Item = u64> + '_ {
        self.columns.keys().copied()
    }
}
