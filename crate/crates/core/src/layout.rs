//! Biased van Emde Boas order for complete ternary trees.
//!
//! A tree of `L` levels is cut into a top piece of
//! `max(1, ceil(eps * (L - 1)))` levels and `3^top` bottom pieces holding the
//! remaining levels. The top piece is laid out first, then the bottom pieces
//! in attachment order, each piece recursively with the same `eps`.
//!
//! Ranks index node slots; callers scale by the record size.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Child step: left, right or upper.
pub type Step = u8;
pub const LEFT: Step = 0;
pub const RIGHT: Step = 1;
pub const UPPER: Step = 2;

/// Exact rational split parameter in (0, 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Epsilon {
    num: u32,
    den: u32,
}

impl Epsilon {
    pub const HALF: Epsilon = Epsilon { num: 1, den: 2 };

    pub fn new(num: u32, den: u32) -> Result<Self> {
        if den == 0 || num == 0 || num >= den {
            return Err(Error::InvalidEpsilon(format!("{num}/{den}")));
        }
        Ok(Epsilon { num, den })
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `max(1, ceil(eps * n))`
    pub fn top_levels(self, n: u32) -> u32 {
        let scaled = n as u64 * self.num as u64;
        (scaled.div_ceil(self.den as u64) as u32).max(1)
    }

    /// Block-size exponent `(1 - eps) / log2(3)` used by the locality bounds.
    pub fn locality_exponent(self) -> f64 {
        (1.0 - self.as_f64()) / 3f64.log2()
    }
}

impl Default for Epsilon {
    fn default() -> Self {
        Epsilon::HALF
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Epsilon {
    type Err = Error;

    /// Accepts `p/q` or a decimal such as `0.25`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidEpsilon(s.to_string());
        if let Some((n, d)) = s.split_once('/') {
            let n = n.trim().parse().map_err(|_| bad())?;
            let d = d.trim().parse().map_err(|_| bad())?;
            return Epsilon::new(n, d);
        }
        let s = s.trim();
        let (int, frac) = s.split_once('.').ok_or_else(bad)?;
        if !int.trim_start_matches('0').is_empty() || frac.is_empty() || frac.len() > 9 {
            return Err(bad());
        }
        let num: u32 = frac.parse().map_err(|_| bad())?;
        let den = 10u32.pow(frac.len() as u32);
        let g = gcd(num, den);
        Epsilon::new(num / g.max(1), den / g.max(1))
    }
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LayoutParams {
    pub epsilon: Epsilon,
    pub levels: u32,
}

impl LayoutParams {
    pub fn new(epsilon: Epsilon, levels: u32) -> Self {
        assert!(levels >= 1, "a tree has at least one level");
        LayoutParams { epsilon, levels }
    }

    /// Layout for a space bound `u` (a power of two): `log2(u) + 1` levels.
    pub fn for_width(epsilon: Epsilon, u: u64) -> Self {
        LayoutParams::new(epsilon, u.trailing_zeros() + 1)
    }

    pub fn slots(&self) -> u64 {
        slot_count(self.levels)
    }
}

/// Number of nodes in a complete ternary tree of `levels` levels.
pub fn slot_count(levels: u32) -> u64 {
    (3u64.pow(levels) - 1) / 2
}

/// Checked variant for sizing decisions on untrusted widths.
pub fn checked_slot_count(levels: u32) -> Option<u64> {
    3u64.checked_pow(levels).map(|p| (p - 1) / 2)
}

fn validate(path: &[Step], levels: u32) -> Result<()> {
    if path.len() >= levels as usize {
        return Err(Error::PathTooLong {
            len: path.len(),
            levels,
        });
    }
    if let Some(&s) = path.iter().find(|&&s| s > UPPER) {
        return Err(Error::InvalidStep(s));
    }
    Ok(())
}

fn rank_unchecked(path: &[Step], levels: u32, eps: Epsilon) -> u64 {
    let mut path = path;
    let mut levels = levels;
    let mut rank = 0u64;
    loop {
        if levels == 1 || path.is_empty() {
            return rank;
        }
        let top = eps.top_levels(levels - 1);
        if top >= levels || path.len() < top as usize {
            levels = top.min(levels);
            continue;
        }
        let bottom = levels - top;
        let piece = path[..top as usize]
            .iter()
            .fold(0u64, |acc, &s| acc * 3 + s as u64);
        rank += slot_count(top) + piece * slot_count(bottom);
        path = &path[top as usize..];
        levels = bottom;
    }
}

/// Slot index of the node at `path` in a complete ternary tree.
pub fn veb_rank(path: &[Step], params: LayoutParams) -> Result<u64> {
    validate(path, params.levels)?;
    Ok(rank_unchecked(path, params.levels, params.epsilon))
}

/// Inverse of [`veb_rank`].
pub fn veb_inverse(rank: u64, params: LayoutParams) -> Result<Vec<Step>> {
    let slots = params.slots();
    if rank >= slots {
        return Err(Error::RankOutOfRange { rank, slots });
    }
    let mut path = Vec::new();
    let mut rank = rank;
    let mut levels = params.levels;
    while levels > 1 && rank > 0 {
        let top = params.epsilon.top_levels(levels - 1).min(levels);
        let top_slots = slot_count(top);
        if rank < top_slots {
            levels = top;
            continue;
        }
        let bottom = levels - top;
        let rest = rank - top_slots;
        let piece_slots = slot_count(bottom);
        let mut piece = rest / piece_slots;
        let start = path.len();
        for _ in 0..top {
            path.push((piece % 3) as Step);
            piece /= 3;
        }
        path[start..].reverse();
        rank = rest % piece_slots;
        levels = bottom;
    }
    Ok(path)
}

/// Present paths in slot order. `present` must be closed under parents.
pub fn compressed_order<F>(present: F, params: LayoutParams) -> Result<Vec<Vec<Step>>>
where
    F: Fn(&[Step]) -> bool,
{
    let mut out = Vec::new();
    let mut seen: HashSet<Vec<Step>> = HashSet::new();
    for rank in 0..params.slots() {
        let path = veb_inverse(rank, params)?;
        if present(&path) {
            seen.insert(path.clone());
            out.push(path);
        }
    }
    for path in &out {
        if let Some((_, parent)) = path.split_last() {
            if !seen.contains(parent) {
                return Err(Error::NotParentClosed);
            }
        }
    }
    Ok(out)
}

/// Number of distinct `b`-word blocks touched by `addresses`.
pub fn distinct_blocks<I>(addresses: I, b: u64) -> Result<usize>
where
    I: IntoIterator<Item = u64>,
{
    if b == 0 {
        return Err(Error::ZeroBlock);
    }
    let mut blocks: Vec<u64> = addresses.into_iter().map(|a| a / b).collect();
    blocks.sort_unstable();
    blocks.dedup();
    Ok(blocks.len())
}

/// Precomputed child slots of a complete ternary tree, so node placement
/// during updates costs a table lookup instead of a rank computation.
#[derive(Clone, Debug)]
pub struct TernaryLayout {
    params: LayoutParams,
    children: Vec<[u32; 3]>,
}

impl TernaryLayout {
    pub fn build(params: LayoutParams) -> Self {
        Self::build_with(params, crate::par::Exec::default())
    }

    pub fn build_with(params: LayoutParams, exec: crate::par::Exec) -> Self {
        let slots = params.slots();
        assert!(slots <= u32::MAX as u64, "layout too large for a slot table");
        let leaf_depth = params.levels as usize - 1;
        let entry = |rank: u64| -> [u32; 3] {
            let mut path = veb_inverse(rank, params).expect("rank in range");
            if path.len() == leaf_depth {
                return [u32::MAX; 3];
            }
            let mut out = [0u32; 3];
            for step in 0..3u8 {
                path.push(step);
                out[step as usize] = rank_unchecked(&path, params.levels, params.epsilon) as u32;
                path.pop();
            }
            out
        };
        let children = crate::par::map_range(exec, 0..slots, entry);
        TernaryLayout { params, children }
    }

    pub fn params(&self) -> LayoutParams {
        self.params
    }

    pub fn slots(&self) -> u64 {
        self.children.len() as u64
    }

    /// Slot of child `step` of the node at `slot`; `None` below the last level.
    #[inline]
    pub fn child(&self, slot: u64, step: Step) -> Option<u64> {
        let c = self.children[slot as usize][step as usize];
        (c != u32::MAX).then_some(c as u64)
    }
}
