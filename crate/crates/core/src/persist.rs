//! The partially persistent array.
//!
//! History is kept as a forest of space-time trees, one per band of `U`
//! versions. The newest tree (the top tree) accepts writes and lives in a
//! reserved ternary van Emde Boas region; finished trees are compressed into
//! the bottom-tree region. `C` holds the present value of every cell so
//! plain reads never touch the trees.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write as _};
use std::path::Path;

use crate::arena::{Arena, OpClass, RegionLabel, Word, DEFAULT_BUDGET, NULL_ADDR, PAYLOAD_LIMIT};
use crate::error::{Error, Result};
use crate::layout::{checked_slot_count, Epsilon, LayoutParams, TernaryLayout};
use crate::sttree::{
    self, check_tree_invariants, close_open_rects, collect_nodes, init_complete_tree,
    leaf_answer, locate_leaf, mark_full_and_reconfigure, peek_record, place_point, read_record, read_rect,
    write_record, Located, NodeRef, TreeKind, NODE_WORDS,
};

/// Value of a cell at some version.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VersionedAnswer {
    Unwritten,
    Value(u64),
}

impl VersionedAnswer {
    pub(crate) fn from_word(w: Word) -> Self {
        if w == NULL_ADDR {
            VersionedAnswer::Unwritten
        } else {
            VersionedAnswer::Value(w)
        }
    }

    #[cfg(test)]
    pub(crate) fn to_word(self) -> Word {
        match self {
            VersionedAnswer::Unwritten => NULL_ADDR,
            VersionedAnswer::Value(x) => x,
        }
    }

    pub fn value(self) -> Option<u64> {
        match self {
            VersionedAnswer::Unwritten => None,
            VersionedAnswer::Value(x) => Some(x),
        }
    }
}

mod globals {
    pub const U: u64 = 0;
    pub const V: u64 = 1;
    pub const LOG_LEN: u64 = 2;
    pub const BOTTOM_USED: u64 = 3;
    pub const FINGER_KIND: u64 = 4;
    pub const FINGER_OFFSET: u64 = 5;
    pub const TOP_FINISHED: u64 = 6;
    pub const TREES: u64 = 7;
    pub const WORDS: u64 = 8;
}

const C_ENTRY_WORDS: u64 = 2;
const LOG_RECORD_WORDS: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Options {
    pub u0: u64,
    pub epsilon: Epsilon,
    /// Arena size cap in words.
    pub budget: u64,
    pub tracing: bool,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            u0: 2,
            epsilon: Epsilon::HALF,
            budget: DEFAULT_BUDGET,
            tracing: true,
        }
    }
}

/// One tree of the directory; tree `j` covers rows `j*U + 1 ..= (j+1)*U`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreeEntry {
    pub root: NodeRef,
    pub first_row: u64,
    /// Node count for compressed trees, `None` for the top tree.
    pub nodes: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpaceReport {
    pub regions: Vec<(RegionLabel, u64)>,
    pub total: u64,
}

impl SpaceReport {
    pub fn words(&self, label: RegionLabel) -> u64 {
        self.regions
            .iter()
            .find(|(l, _)| *l == label)
            .map_or(0, |(_, w)| *w)
    }
}

/// Event counters, reset by a rebuild (replay regenerates them).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Counters {
    /// Third children added, indexed by the height of the full child below.
    pub third_child_by_height: Vec<u64>,
    pub rollovers: u64,
    pub rebuilds: u64,
    pub rectangles_closed: u64,
}

#[derive(Clone, Debug)]
pub struct PersistentArray {
    arena: Arena,
    layout: TernaryLayout,
    epsilon: Epsilon,
    u: u64,
    v: u64,
    log_len: u64,
    bottom_used: u64,
    directory: Vec<TreeEntry>,
    top_finished: bool,
    finger: NodeRef,
    last_locate: Option<Located>,
    counters: Counters,
}

fn top_tree_words(u: u64) -> Option<u64> {
    checked_slot_count(u.trailing_zeros() + 1)?.checked_mul(NODE_WORDS)
}

impl PersistentArray {
    pub fn new(u0: u64) -> Result<Self> {
        Self::with_options(Options {
            u0,
            ..Options::default()
        })
    }

    pub fn with_options(opts: Options) -> Result<Self> {
        let u = opts.u0;
        if u < 2 || !u.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(u));
        }
        let top_words = top_tree_words(u).ok_or(Error::BudgetExceeded {
            budget: opts.budget,
            requested: u64::MAX,
        })?;
        // Half a record per reserved top-tree slot, so the first LOG growth
        // (which relocates the top tree) is paid for by the writes before it.
        let log_records = (8 * u).max(16).max(top_words / NODE_WORDS / 2);
        let mut arena = Arena::with_budget(
            &[
                (RegionLabel::Globals, globals::WORDS),
                (RegionLabel::CArray, C_ENTRY_WORDS * u),
                (RegionLabel::Log, LOG_RECORD_WORDS * log_records),
                (RegionLabel::TopTree, top_words),
                (RegionLabel::BottomTrees, 0),
            ],
            opts.budget,
        )?;
        arena.set_tracing(opts.tracing);
        let layout = TernaryLayout::build(LayoutParams::for_width(opts.epsilon, u));
        let mut this = PersistentArray {
            arena,
            layout,
            epsilon: opts.epsilon,
            u,
            v: 0,
            log_len: 0,
            bottom_used: 0,
            directory: Vec::new(),
            top_finished: false,
            finger: NodeRef::top(0),
            last_locate: None,
            counters: Counters::default(),
        };
        this.set_global(globals::U, u, OpClass::Maint)?;
        this.start_history()?;
        Ok(this)
    }

    /// Replays a saved write log into a fresh structure.
    pub fn load_log<P: AsRef<Path>>(path: P, opts: Options) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut this = Self::with_options(opts)?;
        for (k, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            let line_no = k + 1;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: &str| Error::MalformedLog {
                line: line_no,
                reason: reason.to_string(),
            };
            let fields: Vec<u64> = line
                .split_whitespace()
                .map(|f| f.parse::<u64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(&e.to_string()))?;
            let [version, column, value] = fields[..] else {
                return Err(bad("expected three fields"));
            };
            if version != this.v + 1 {
                return Err(bad("versions must be consecutive from 1"));
            }
            this.write(column, value)?;
        }
        Ok(this)
    }

    pub fn save_log<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        for (version, column, value) in self.log_records()? {
            writeln!(out, "{version} {column} {value}")?;
        }
        out.flush()?;
        Ok(())
    }

    /// Write log contents (untraced).
    pub fn log_records(&self) -> Result<Vec<(u64, u64, u64)>> {
        let base = self.arena.region(RegionLabel::Log)?.base;
        (0..self.log_len)
            .map(|k| {
                let a = base + k * LOG_RECORD_WORDS;
                Ok((self.arena.peek(a)?, self.arena.peek(a + 1)?, self.arena.peek(a + 2)?))
            })
            .collect()
    }

    pub fn u(&self) -> u64 {
        self.u
    }

    pub fn version(&self) -> u64 {
        self.v
    }

    pub fn epsilon(&self) -> Epsilon {
        self.epsilon
    }

    pub fn arena(&self) -> &Arena {
        &self.arena
    }

    pub fn arena_mut(&mut self) -> &mut Arena {
        &mut self.arena
    }

    pub fn layout(&self) -> &TernaryLayout {
        &self.layout
    }

    pub fn directory(&self) -> &[TreeEntry] {
        &self.directory
    }

    pub fn top_root(&self) -> NodeRef {
        NodeRef::top(0)
    }

    pub fn finger(&self) -> NodeRef {
        self.finger
    }

    /// Navigation statistics of the most recent persistent read.
    pub fn last_locate(&self) -> Option<Located> {
        self.last_locate
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    fn set_global(&mut self, slot: u64, w: Word, class: OpClass) -> Result<()> {
        let base = self.arena.region(RegionLabel::Globals)?.base;
        self.arena.store(base + slot, w, class)
    }

    fn c_addr(&self, column: u64) -> Result<u64> {
        Ok(self.arena.region(RegionLabel::CArray)?.base + C_ENTRY_WORDS * column)
    }

    /// Empty history under the current `U`: C cleared, one fresh top tree.
    fn start_history(&mut self) -> Result<()> {
        self.v = 0;
        self.bottom_used = 0;
        self.directory.clear();
        self.top_finished = false;
        self.counters = Counters {
            rebuilds: self.counters.rebuilds,
            ..Counters::default()
        };
        self.set_global(globals::V, 0, OpClass::Maint)?;
        self.set_global(globals::BOTTOM_USED, 0, OpClass::Maint)?;
        for i in 0..self.u {
            let a = self.c_addr(i)?;
            self.arena.store(a, NULL_ADDR, OpClass::Maint)?;
        }
        self.fresh_top_tree(false)
    }

    /// Builds a new top tree starting at row `V + 1`, seeded from C when
    /// `from_c` is set, and repoints C's leaf references and the finger.
    fn fresh_top_tree(&mut self, from_c: bool) -> Result<()> {
        let mut base = vec![NULL_ADDR; self.u as usize];
        if from_c {
            for (i, b) in base.iter_mut().enumerate() {
                let a = self.c_addr(i as u64)?;
                *b = self.arena.load(a, OpClass::Maint)?;
            }
        }
        let built = init_complete_tree(
            &mut self.arena,
            &self.layout,
            self.u,
            self.v + 1,
            &base,
            OpClass::Maint,
        )?;
        for (i, leaf) in built.leaves.iter().enumerate() {
            let a = self.c_addr(i as u64)?;
            self.arena.store(a + 1, leaf.offset, OpClass::Maint)?;
        }
        self.directory.push(TreeEntry {
            root: built.root,
            first_row: self.v + 1,
            nodes: None,
        });
        self.top_finished = false;
        self.set_global(globals::TOP_FINISHED, 0, OpClass::Maint)?;
        self.set_global(globals::TREES, self.directory.len() as u64, OpClass::Maint)?;
        self.set_finger(built.root, OpClass::Maint)
    }

    fn set_finger(&mut self, node: NodeRef, class: OpClass) -> Result<()> {
        self.finger = node;
        self.set_global(globals::FINGER_KIND, node.kind as u64, class)?;
        self.set_global(globals::FINGER_OFFSET, node.offset, class)
    }

    /// Present value of cell `column`.
    pub fn read(&mut self, column: u64) -> Result<VersionedAnswer> {
        if column >= self.u {
            return Ok(VersionedAnswer::Unwritten);
        }
        let a = self.c_addr(column)?;
        let w = self.arena.load(a, OpClass::Read)?;
        Ok(VersionedAnswer::from_word(w))
    }

    /// Sets cell `column` to `value`, creating a new version. Returns it.
    pub fn write(&mut self, column: u64, value: u64) -> Result<u64> {
        if value >= PAYLOAD_LIMIT {
            return Err(Error::ReservedPayload(value));
        }
        if column >= self.u {
            self.rebuild(column)?;
        }
        self.append_log(column, value)?;
        self.apply_write(column, value)?;
        Ok(self.v)
    }

    fn append_log(&mut self, column: u64, value: u64) -> Result<()> {
        let region = self.arena.region(RegionLabel::Log)?;
        let needed = (self.log_len + 1) * LOG_RECORD_WORDS;
        if needed > region.length {
            // Growing LOG relocates every later region; grow by at least a
            // quarter of their size so the copy amortizes to O(1) words per write.
            let trailing = self.arena.size() - region.end();
            let grown = (region.length * 2)
                .max(region.length + trailing / 4)
                .max(needed)
                .next_multiple_of(LOG_RECORD_WORDS);
            self.arena.grow_region(RegionLabel::Log, grown)?;
        }
        let base = self.arena.region(RegionLabel::Log)?.base + self.log_len * LOG_RECORD_WORDS;
        self.arena.store(base, self.v + 1, OpClass::Write)?;
        self.arena.store(base + 1, column, OpClass::Write)?;
        self.arena.store(base + 2, value, OpClass::Write)?;
        self.log_len += 1;
        self.set_global(globals::LOG_LEN, self.log_len, OpClass::Write)
    }

    fn needs_rollover(&self) -> bool {
        let top_index = self.directory.len() as u64 - 1;
        self.top_finished || self.v + 1 > (top_index + 1) * self.u
    }

    fn apply_write(&mut self, column: u64, value: u64) -> Result<()> {
        if self.needs_rollover() {
            self.roll_top_tree()?;
        }
        self.v += 1;
        let v = self.v;
        self.set_global(globals::V, v, OpClass::Write)?;
        let c = self.c_addr(column)?;
        self.arena.store(c, value, OpClass::Write)?;
        let start = NodeRef::top(self.arena.load(c + 1, OpClass::Write)?);
        let top = self.top_root();
        let found = locate_leaf(&mut self.arena, start, column, v, &|_| Some(top), OpClass::Write)?;
        self.arena.store(c + 1, found.leaf.offset, OpClass::Write)?;
        place_point(&mut self.arena, found.leaf, v, value, OpClass::Write)?;

        let c_base = self.c_addr(0)?;
        let source = move |arena: &mut Arena, col: u64| {
            arena.load(c_base + C_ENTRY_WORDS * col, OpClass::Maint)
        };
        let outcome = mark_full_and_reconfigure(
            &mut self.arena,
            &self.layout,
            found.leaf,
            v,
            &source,
            OpClass::Maint,
        )?;
        self.counters.rectangles_closed += outcome.closed as u64;
        if let Some(h) = outcome.third_child_height {
            let h = h as usize;
            if self.counters.third_child_by_height.len() <= h {
                self.counters.third_child_by_height.resize(h + 1, 0);
            }
            self.counters.third_child_by_height[h] += 1;
        }
        if outcome.root_finished {
            self.top_finished = true;
            self.set_global(globals::TOP_FINISHED, 1, OpClass::Maint)?;
        }
        Ok(())
    }

    /// Closes the top tree, copies its live nodes in slot order into the
    /// bottom-tree region with rewritten pointers, and starts a new top tree
    /// seeded from C.
    pub fn roll_top_tree(&mut self) -> Result<()> {
        let class = OpClass::Maint;
        let root = self.top_root();
        let closed = close_open_rects(&mut self.arena, root, self.v, class)?;
        self.counters.rectangles_closed += closed as u64;

        let mut live = Vec::new();
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            live.push(n.offset);
            for step in [crate::layout::LEFT, crate::layout::RIGHT, crate::layout::UPPER] {
                if let Some(c) = sttree::child_of(&mut self.arena, n, step, class)? {
                    // A third child added by the tree's last write covers no
                    // rows of this tree; it is dropped.
                    if read_rect(&mut self.arena, c, class)?.t_lo <= self.v {
                        stack.push(c);
                    }
                }
            }
        }
        // Offsets are slot multiples, so sorting offsets sorts by layout rank.
        live.sort_unstable();
        let start = self.bottom_used;
        let new_offset: HashMap<u64, u64> = live
            .iter()
            .enumerate()
            .map(|(k, &old)| (old, start + k as u64 * NODE_WORDS))
            .collect();
        let needed = start + live.len() as u64 * NODE_WORDS;
        let region = self.arena.region(RegionLabel::BottomTrees)?;
        if needed > region.length {
            self.arena.grow_region(RegionLabel::BottomTrees, needed)?;
        }
        let remap = |w: Word| new_offset.get(&w).copied().unwrap_or(NULL_ADDR);
        for &old in &live {
            let mut rec = read_record(&mut self.arena, NodeRef::top(old), class)?;
            rec.parent = remap(rec.parent);
            rec.left = remap(rec.left);
            rec.right = remap(rec.right);
            rec.upper = remap(rec.upper);
            write_record(&mut self.arena, NodeRef::bottom(new_offset[&old]), &rec, class)?;
        }
        self.bottom_used = needed;
        self.set_global(globals::BOTTOM_USED, needed, class)?;
        let last = self.directory.last_mut().expect("top tree present");
        last.root = NodeRef::bottom(start);
        last.nodes = Some(live.len() as u64);
        self.counters.rollovers += 1;
        self.fresh_top_tree(true)
    }

    /// Grows `U` past `trigger_column` and rebuilds every tree by replaying
    /// the write log.
    pub fn rebuild(&mut self, trigger_column: u64) -> Result<()> {
        let budget = self.arena.budget();
        let too_big = |requested: u64| Error::BudgetExceeded { budget, requested };
        let smallest_above = trigger_column
            .checked_add(1)
            .and_then(u64::checked_next_power_of_two)
            .ok_or(too_big(u64::MAX))?;
        let new_u = smallest_above.max(self.u.checked_mul(2).ok_or(too_big(u64::MAX))?);
        let top_words = top_tree_words(new_u).ok_or(too_big(u64::MAX))?;
        let c_words = new_u.checked_mul(C_ENTRY_WORDS).ok_or(too_big(u64::MAX))?;
        let top_now = self.arena.region(RegionLabel::TopTree)?.length;
        let c_now = self.arena.region(RegionLabel::CArray)?.length;
        let projected = self
            .arena
            .size()
            .checked_add(top_words.saturating_sub(top_now))
            .and_then(|s| s.checked_add(c_words.saturating_sub(c_now)))
            .ok_or(too_big(u64::MAX))?;
        if projected > budget {
            return Err(too_big(projected));
        }

        let log_base = self.arena.region(RegionLabel::Log)?.base;
        let mut records = Vec::with_capacity(self.log_len as usize);
        for k in 0..self.log_len {
            let a = log_base + k * LOG_RECORD_WORDS;
            let column = self.arena.load(a + 1, OpClass::Maint)?;
            let value = self.arena.load(a + 2, OpClass::Maint)?;
            records.push((column, value));
        }
        self.arena.grow_region(RegionLabel::CArray, c_words)?;
        self.arena.grow_region(RegionLabel::TopTree, top_words)?;
        self.layout = TernaryLayout::build(LayoutParams::for_width(self.epsilon, new_u));
        self.u = new_u;
        self.set_global(globals::U, new_u, OpClass::Maint)?;
        self.counters.rebuilds += 1;
        self.start_history()?;
        for (column, value) in records {
            self.apply_write(column, value)?;
        }
        Ok(())
    }

    /// `A_v[column]`. Moves the finger to the leaf that answered.
    pub fn persistent_read(&mut self, v: u64, column: u64) -> Result<VersionedAnswer> {
        if v > self.v {
            return Err(Error::FutureVersion {
                requested: v,
                latest: self.v,
            });
        }
        if v == 0 || column >= self.u {
            return Ok(VersionedAnswer::Unwritten);
        }
        let dir = &self.directory;
        let u = self.u;
        let root_for = |v: u64| dir.get(((v - 1) / u) as usize).map(|e| e.root);
        let found = locate_leaf(
            &mut self.arena,
            self.finger,
            column,
            v,
            &root_for,
            OpClass::PRead,
        )?;
        self.last_locate = Some(found);
        self.set_finger(found.leaf, OpClass::PRead)?;
        leaf_answer(&mut self.arena, found.leaf, v, OpClass::PRead)
    }

    pub fn space_report(&self) -> SpaceReport {
        let regions: Vec<(RegionLabel, u64)> = self
            .arena
            .regions()
            .iter()
            .map(|r| (r.label, r.length))
            .collect();
        SpaceReport {
            total: self.arena.size(),
            regions,
        }
    }

    /// Node counts of the compressed trees, oldest first.
    pub fn bottom_tree_sizes(&self) -> Vec<u64> {
        self.directory.iter().filter_map(|e| e.nodes).collect()
    }

    /// Leaves answering `(v, i)` for every `i` in `columns`, plus all their
    /// ancestors, without tracing or moving the finger.
    pub fn query_footprint(&self, v: u64, columns: std::ops::Range<u64>) -> Result<Vec<NodeRef>> {
        if v == 0 || v > self.v {
            return Err(Error::FutureVersion {
                requested: v,
                latest: self.v,
            });
        }
        let root = self.directory[((v - 1) / self.u) as usize].root;
        let mut out = std::collections::BTreeSet::new();
        for col in columns.start..columns.end.min(self.u) {
            let mut node = root;
            loop {
                out.insert(node);
                let rec = peek_record(&self.arena, node)?;
                if rec.is_leaf() {
                    break;
                }
                let next = rec
                    .children()
                    .into_iter()
                    .filter(|&w| w != NULL_ADDR)
                    .map(|w| NodeRef {
                        kind: node.kind,
                        offset: w,
                    })
                    .find(|c| {
                        peek_record(&self.arena, *c)
                            .map(|r| r.rect.contains(col, v))
                            .unwrap_or(false)
                    })
                    .ok_or(Error::Uncovered { column: col, version: v })?;
                node = next;
            }
        }
        Ok(out.into_iter().collect())
    }

    /// Full structural audit (untraced): every tree's node rules, the
    /// directory's row bands, C against the log, and every leaf's base value
    /// against the history reconstructed from the log.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let log = self.log_records().map_err(|e| e.to_string())?;
        if log.len() as u64 != self.v {
            return Err(format!("log holds {} records, V = {}", log.len(), self.v));
        }
        let mut history: HashMap<u64, Vec<(u64, u64)>> = HashMap::new();
        for (k, &(version, column, value)) in log.iter().enumerate() {
            if version != k as u64 + 1 {
                return Err(format!("log record {k} has version {version}"));
            }
            if column >= self.u {
                return Err(format!("logged column {column} >= U = {}", self.u));
            }
            history.entry(column).or_default().push((version, value));
        }
        let value_at = |column: u64, v: u64| -> Word {
            history
                .get(&column)
                .and_then(|h| {
                    let k = h.partition_point(|&(ver, _)| ver <= v);
                    (k > 0).then(|| h[k - 1].1)
                })
                .unwrap_or(NULL_ADDR)
        };

        let trees = self.directory.len() as u64;
        if trees != self.v.div_ceil(self.u).max(1) {
            return Err(format!("{trees} trees for V = {}", self.v));
        }
        let height = self.u.trailing_zeros();
        for (j, entry) in self.directory.iter().enumerate() {
            let j = j as u64;
            let is_top = j + 1 == trees;
            let summary = check_tree_invariants(&self.arena, entry.root)
                .map_err(|v| format!("tree {j}: {v}"))?;
            let rec = peek_record(&self.arena, entry.root).map_err(|e| e.to_string())?;
            if rec.rect.x_lo != 0 || rec.rect.height != height || rec.rect.t_lo != j * self.u + 1 {
                return Err(format!("tree {j}: root rectangle {:?}", rec.rect));
            }
            if entry.first_row != rec.rect.t_lo {
                return Err(format!("tree {j}: directory row {} != root row", entry.first_row));
            }
            let nodes = collect_nodes(&self.arena, entry.root).map_err(|e| e.to_string())?;
            if is_top {
                if entry.root.kind != TreeKind::Top {
                    return Err("last tree is not in the top region".into());
                }
                if !self.top_finished && !rec.rect.is_open() {
                    return Err("top tree closed but not finished".into());
                }
            } else {
                if entry.root.kind != TreeKind::Bottom || rec.rect.t_hi != (j + 1) * self.u {
                    return Err(format!("bottom tree {j}: rows end at {}", rec.rect.t_hi));
                }
                if entry.nodes != Some(summary.nodes) {
                    return Err(format!("bottom tree {j}: node count mismatch"));
                }
            }
            for n in nodes {
                let r = peek_record(&self.arena, n).map_err(|e| e.to_string())?;
                if !is_top && r.rect.is_open() {
                    return Err(format!("bottom tree {j}: open node at {}", n.offset));
                }
                if r.is_leaf() {
                    let expect = value_at(r.rect.x_lo, r.rect.t_lo - 1);
                    if r.base_value != expect {
                        return Err(format!(
                            "tree {j}: leaf ({}, {}) base {} != A_{}[{}] = {}",
                            r.rect.x_lo,
                            r.rect.t_lo,
                            r.base_value,
                            r.rect.t_lo - 1,
                            r.rect.x_lo,
                            expect
                        ));
                    }
                    if r.has_point() {
                        let logged = log.get(r.point_version as usize - 1);
                        if logged != Some(&(r.point_version, r.rect.x_lo, r.point_label)) {
                            return Err(format!("tree {j}: point {} not in log", r.point_version));
                        }
                    }
                }
            }
        }

        let c_base = self.arena.region(RegionLabel::CArray).map_err(|e| e.to_string())?.base;
        for i in 0..self.u {
            let a = c_base + C_ENTRY_WORDS * i;
            let value = self.arena.peek(a).map_err(|e| e.to_string())?;
            let leaf = self.arena.peek(a + 1).map_err(|e| e.to_string())?;
            if value != value_at(i, self.v) {
                return Err(format!("C[{i}] = {value} disagrees with the log"));
            }
            let rec = peek_record(&self.arena, NodeRef::top(leaf)).map_err(|e| e.to_string())?;
            if !rec.is_leaf() || rec.rect.x_lo != i {
                return Err(format!("C[{i}] leaf reference is stale"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use VersionedAnswer::{Unwritten, Value};

    #[test]
    fn fresh_structure() {
        let mut p = PersistentArray::new(2).unwrap();
        assert_eq!((p.u(), p.version(), p.directory().len()), (2, 0, 1));
        assert_eq!(p.read(0).unwrap(), Unwritten);
        p.check_invariants().unwrap();

        let p = PersistentArray::new(8).unwrap();
        let s = check_tree_invariants(p.arena(), p.top_root()).unwrap();
        assert_eq!(s.nodes, 15);
        assert_eq!(p.space_report().words(RegionLabel::TopTree), 40 * NODE_WORDS);

        assert_eq!(PersistentArray::new(3).unwrap_err(), Error::NotPowerOfTwo(3));
        assert_eq!(PersistentArray::new(1).unwrap_err(), Error::NotPowerOfTwo(1));
    }

    #[test]
    fn reads() {
        let mut p = PersistentArray::new(8).unwrap();
        p.write(3, 42).unwrap();
        assert_eq!(p.read(3).unwrap(), Value(42));
        let size = p.arena().size();
        p.arena_mut().take_trace();
        assert_eq!(p.read(1_000_000_000).unwrap(), Unwritten);
        assert_eq!(p.arena().size(), size);
        p.read(5).unwrap();
        let t = p.arena_mut().take_trace();
        let c = p.arena().region(RegionLabel::CArray).unwrap();
        assert_eq!(t.len(), 1);
        assert!(t.iter().all(|e| e.op_class() == OpClass::Read
            && e.address() >= c.base
            && e.address() < c.end()));
    }

    #[test]
    fn first_write() {
        let mut p = PersistentArray::new(2).unwrap();
        assert_eq!(p.write(0, 7).unwrap(), 1);
        assert_eq!(p.read(0).unwrap(), Value(7));
        p.check_invariants().unwrap();
    }

    #[test]
    fn writes_past_u_rebuild() {
        let mut p = PersistentArray::new(2).unwrap();
        p.write(0, 10).unwrap();
        p.write(1, 11).unwrap();
        p.write(0, 12).unwrap();
        let before: Vec<_> = (0..=3)
            .flat_map(|v| (0..2).map(move |i| (v, i)))
            .map(|(v, i)| p.persistent_read(v, i).unwrap())
            .collect();
        p.write(5, 1).unwrap();
        assert_eq!(p.u(), 8);
        assert_eq!(p.counters().rebuilds, 1);
        let after: Vec<_> = (0..=3)
            .flat_map(|v| (0..2).map(move |i| (v, i)))
            .map(|(v, i)| p.persistent_read(v, i).unwrap())
            .collect();
        assert_eq!(before, after);
        assert_eq!(p.persistent_read(4, 5).unwrap(), Value(1));
        p.check_invariants().unwrap();
    }

    #[test]
    fn rebuild_arithmetic() {
        let mut p = PersistentArray::new(2).unwrap();
        for k in 0..3 {
            p.write(k % 2, k).unwrap();
        }
        assert_eq!(p.directory().len(), 2);
        p.write(4, 9).unwrap();
        assert_eq!(p.u(), 8);
        assert_eq!(p.directory().len(), 1);
        p.check_invariants().unwrap();
    }

    #[test]
    fn huge_column_is_refused_by_the_budget() {
        let mut p = PersistentArray::new(2).unwrap();
        p.write(0, 1).unwrap();
        assert!(matches!(
            p.write(1 << 40, 1),
            Err(Error::BudgetExceeded { .. })
        ));
        // Nothing changed.
        assert_eq!((p.u(), p.version()), (2, 1));
        assert_eq!(p.read(0).unwrap(), Value(1));
        p.check_invariants().unwrap();
    }

    #[test]
    fn third_write_rolls_over() {
        let mut p = PersistentArray::new(2).unwrap();
        p.write(0, 1).unwrap();
        p.write(1, 2).unwrap();
        assert_eq!(p.directory().len(), 1);
        p.write(0, 3).unwrap();
        assert_eq!(p.directory().len(), 2);
        assert_eq!(p.counters().rollovers, 1);
        let sizes = p.bottom_tree_sizes();
        assert_eq!(sizes.len(), 1);
        assert!(sizes[0] <= 8 * 2 * (1 + 1));
        p.check_invariants().unwrap();
    }

    #[test]
    fn persistent_reads_by_definition() {
        let mut p = PersistentArray::new(2).unwrap();
        p.write(0, 'a' as u64).unwrap();
        p.write(1, 'b' as u64).unwrap();
        p.write(0, 'c' as u64).unwrap();
        assert_eq!(p.persistent_read(2, 0).unwrap(), Value('a' as u64));
        assert_eq!(p.persistent_read(3, 0).unwrap(), Value('c' as u64));
        assert_eq!(p.persistent_read(2, 1).unwrap(), Value('b' as u64));
        assert_eq!(p.persistent_read(1, 1).unwrap(), Unwritten);
        for i in 0..4 {
            assert_eq!(p.persistent_read(0, i).unwrap(), Unwritten);
        }
        assert_eq!(
            p.persistent_read(4, 0).unwrap_err(),
            Error::FutureVersion {
                requested: 4,
                latest: 3
            }
        );
    }

    #[test]
    fn repeated_read_needs_no_climb() {
        let mut p = PersistentArray::new(8).unwrap();
        for k in 0..30 {
            p.write((k * 5) % 8, k).unwrap();
        }
        p.persistent_read(13, 6).unwrap();
        p.persistent_read(13, 6).unwrap();
        let loc = p.last_locate().unwrap();
        assert_eq!((loc.up_steps, loc.down_steps, loc.jumped), (0, 0, false));
    }

    #[test]
    fn reserved_payloads_rejected() {
        let mut p = PersistentArray::new(2).unwrap();
        assert_eq!(
            p.write(0, u64::MAX).unwrap_err(),
            Error::ReservedPayload(u64::MAX)
        );
        assert_eq!(
            p.write(0, u64::MAX - 1).unwrap_err(),
            Error::ReservedPayload(u64::MAX - 1)
        );
        assert_eq!(p.write(0, u64::MAX - 2).unwrap(), 1);
        assert_eq!(p.read(0).unwrap(), Value(u64::MAX - 2));
    }

    #[test]
    fn new_top_tree_is_seeded_from_c() {
        let mut p = PersistentArray::new(4).unwrap();
        for (k, col) in [0u64, 2, 2, 3, 1].into_iter().enumerate() {
            p.write(col, 100 + k as u64).unwrap();
        }
        assert_eq!(p.counters().rollovers, 1);
        let tree = collect_nodes(p.arena(), p.top_root()).unwrap();
        let mut leaves: Vec<_> = tree
            .iter()
            .map(|n| peek_record(p.arena(), *n).unwrap())
            .filter(|r| r.is_leaf() && r.rect.t_lo == 5)
            .map(|r| (r.rect.x_lo, r.base_value))
            .collect();
        leaves.sort();
        let mut expected = Vec::new();
        for i in 0..4 {
            expected.push((i, p.persistent_read(4, i).unwrap().to_word()));
        }
        assert_eq!(leaves, expected);
    }

    #[test]
    fn space_report_counts_the_log() {
        let mut p = PersistentArray::new(8).unwrap();
        for k in 0..100 {
            p.write(k % 8, k).unwrap();
        }
        let s = p.space_report();
        assert!(s.words(RegionLabel::Log) >= 3 * 100);
        assert_eq!(s.total, s.regions.iter().map(|r| r.1).sum::<u64>());
        assert_eq!(s.total, p.arena().size());
    }
}
