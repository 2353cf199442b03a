//! Space-time tree nodes and the structural algorithms on them.
//!
//! A node at height `h` owns the rectangle `[x_lo, x_lo + 2^h) x [t_lo, t_hi]`
//! of the (column, version) grid; `t_hi = OPEN_TOP` means unbounded above.
//! Internal nodes have a left and a right child splitting the columns in half,
//! and possibly an upper child stacked on top of a full, closed sibling.
//!
//! Records are `NODE_WORDS` words in the arena. Child and parent pointers are
//! word offsets relative to the region the tree lives in, so regions can be
//! relocated without touching node contents.

use crate::arena::{Arena, OpClass, RegionLabel, Word, NULL_ADDR, OPEN_TOP};
use crate::error::{Error, Result};
use crate::layout::{Step, TernaryLayout, LEFT, RIGHT, UPPER};
use crate::persist::VersionedAnswer;

pub const NODE_WORDS: u64 = 12;

pub mod field {
    pub const FLAGS: u64 = 0;
    pub const X_LO: u64 = 1;
    pub const HEIGHT: u64 = 2;
    pub const T_LO: u64 = 3;
    pub const T_HI: u64 = 4;
    pub const PARENT: u64 = 5;
    pub const LEFT: u64 = 6;
    pub const RIGHT: u64 = 7;
    pub const UPPER: u64 = 8;
    pub const POINT_VERSION: u64 = 9;
    pub const POINT_LABEL: u64 = 10;
    pub const BASE_VALUE: u64 = 11;
}

pub const FLAG_LEAF: Word = 1;
pub const FLAG_FULL: Word = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TreeKind {
    Top,
    Bottom,
}

impl TreeKind {
    pub fn region(self) -> RegionLabel {
        match self {
            TreeKind::Top => RegionLabel::TopTree,
            TreeKind::Bottom => RegionLabel::BottomTrees,
        }
    }
}

/// A node location: tree region plus word offset inside it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef {
    pub kind: TreeKind,
    pub offset: u64,
}

impl NodeRef {
    pub fn top(offset: u64) -> Self {
        NodeRef {
            kind: TreeKind::Top,
            offset,
        }
    }

    pub fn bottom(offset: u64) -> Self {
        NodeRef {
            kind: TreeKind::Bottom,
            offset,
        }
    }

    /// Absolute arena address of the record's first word.
    pub fn address(self, arena: &Arena) -> Result<u64> {
        Ok(arena.region(self.kind.region())?.base + self.offset)
    }

    fn sibling_ref(self, word: Word) -> Option<NodeRef> {
        (word != NULL_ADDR).then_some(NodeRef {
            kind: self.kind,
            offset: word,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rect {
    pub x_lo: u64,
    pub height: u32,
    pub t_lo: u64,
    /// Inclusive top row, or `OPEN_TOP`.
    pub t_hi: u64,
}

impl Rect {
    pub fn width(&self) -> u64 {
        1 << self.height
    }

    pub fn is_open(&self) -> bool {
        self.t_hi == OPEN_TOP
    }

    pub fn contains(&self, column: u64, version: u64) -> bool {
        column >= self.x_lo
            && column - self.x_lo < self.width()
            && version >= self.t_lo
            && (self.is_open() || version <= self.t_hi)
    }
}

/// Decoded node record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeRecord {
    pub flags: Word,
    pub rect: Rect,
    pub parent: Word,
    pub left: Word,
    pub right: Word,
    pub upper: Word,
    pub point_version: Word,
    pub point_label: Word,
    pub base_value: Word,
}

impl NodeRecord {
    pub fn is_leaf(&self) -> bool {
        self.flags & FLAG_LEAF != 0
    }

    pub fn is_full(&self) -> bool {
        self.flags & FLAG_FULL != 0
    }

    pub fn has_point(&self) -> bool {
        self.point_version != NULL_ADDR
    }

    fn to_words(self) -> [Word; NODE_WORDS as usize] {
        [
            self.flags,
            self.rect.x_lo,
            self.rect.height as Word,
            self.rect.t_lo,
            self.rect.t_hi,
            self.parent,
            self.left,
            self.right,
            self.upper,
            self.point_version,
            self.point_label,
            self.base_value,
        ]
    }

    fn from_words(w: &[Word]) -> Self {
        NodeRecord {
            flags: w[0],
            rect: Rect {
                x_lo: w[1],
                height: w[2] as u32,
                t_lo: w[3],
                t_hi: w[4],
            },
            parent: w[5],
            left: w[6],
            right: w[7],
            upper: w[8],
            point_version: w[9],
            point_label: w[10],
            base_value: w[11],
        }
    }

    pub fn children(&self) -> [Word; 3] {
        [self.left, self.right, self.upper]
    }
}

#[inline]
fn get(arena: &mut Arena, node: NodeRef, f: u64, class: OpClass) -> Result<Word> {
    let addr = node.address(arena)? + f;
    arena.load(addr, class)
}

#[inline]
fn set(arena: &mut Arena, node: NodeRef, f: u64, word: Word, class: OpClass) -> Result<()> {
    let addr = node.address(arena)? + f;
    arena.store(addr, word, class)
}

pub fn read_rect(arena: &mut Arena, node: NodeRef, class: OpClass) -> Result<Rect> {
    Ok(Rect {
        x_lo: get(arena, node, field::X_LO, class)?,
        height: get(arena, node, field::HEIGHT, class)? as u32,
        t_lo: get(arena, node, field::T_LO, class)?,
        t_hi: get(arena, node, field::T_HI, class)?,
    })
}

pub fn parent_of(arena: &mut Arena, node: NodeRef, class: OpClass) -> Result<Option<NodeRef>> {
    let w = get(arena, node, field::PARENT, class)?;
    Ok(node.sibling_ref(w))
}

pub fn child_of(
    arena: &mut Arena,
    node: NodeRef,
    step: Step,
    class: OpClass,
) -> Result<Option<NodeRef>> {
    let f = match step {
        LEFT => field::LEFT,
        RIGHT => field::RIGHT,
        _ => field::UPPER,
    };
    let w = get(arena, node, f, class)?;
    Ok(node.sibling_ref(w))
}

/// Traced read of a whole record.
pub fn read_record(arena: &mut Arena, node: NodeRef, class: OpClass) -> Result<NodeRecord> {
    let base = node.address(arena)?;
    let mut w = [0; NODE_WORDS as usize];
    for (k, slot) in w.iter_mut().enumerate() {
        *slot = arena.load(base + k as u64, class)?;
    }
    Ok(NodeRecord::from_words(&w))
}

pub fn write_record(
    arena: &mut Arena,
    node: NodeRef,
    record: &NodeRecord,
    class: OpClass,
) -> Result<()> {
    let base = node.address(arena)?;
    for (k, w) in record.to_words().into_iter().enumerate() {
        arena.store(base + k as u64, w, class)?;
    }
    Ok(())
}

/// Untraced read of a whole record.
pub fn peek_record(arena: &Arena, node: NodeRef) -> Result<NodeRecord> {
    let base = node.address(arena)?;
    let end = base + NODE_WORDS;
    if end > arena.size() {
        return Err(Error::OutOfRange {
            address: end - 1,
            size: arena.size(),
        });
    }
    Ok(NodeRecord::from_words(
        &arena.dump()[base as usize..end as usize],
    ))
}

/// Supplies the base value of a column when leaves are populated.
pub type ColumnSource<'a> = &'a dyn Fn(&mut Arena, u64) -> Result<Word>;

/// Result of building a complete binary tree.
#[derive(Clone, Debug)]
pub struct BuiltTree {
    pub root: NodeRef,
    /// Leaves in column order.
    pub leaves: Vec<NodeRef>,
}

#[allow(clippy::too_many_arguments)]
fn build_complete(
    arena: &mut Arena,
    layout: &TernaryLayout,
    slot: u64,
    parent: Word,
    x_lo: u64,
    height: u32,
    t_lo: u64,
    base: ColumnSource<'_>,
    class: OpClass,
    leaves: &mut Vec<NodeRef>,
) -> Result<NodeRef> {
    let node = NodeRef::top(slot * NODE_WORDS);
    let mut record = NodeRecord {
        flags: 0,
        rect: Rect {
            x_lo,
            height,
            t_lo,
            t_hi: OPEN_TOP,
        },
        parent,
        left: NULL_ADDR,
        right: NULL_ADDR,
        upper: NULL_ADDR,
        point_version: NULL_ADDR,
        point_label: NULL_ADDR,
        base_value: NULL_ADDR,
    };
    if height == 0 {
        record.flags = FLAG_LEAF;
        record.base_value = base(arena, x_lo)?;
        write_record(arena, node, &record, class)?;
        leaves.push(node);
        return Ok(node);
    }
    let half = 1u64 << (height - 1);
    let left_slot = layout.child(slot, LEFT).ok_or(Error::RegionTooSmall {
        have: layout.slots(),
        need: slot + 1,
    })?;
    let right_slot = layout.child(slot, RIGHT).expect("sibling of an existing child");
    let left = build_complete(
        arena, layout, left_slot, node.offset, x_lo, height - 1, t_lo, base, class, leaves,
    )?;
    let right = build_complete(
        arena,
        layout,
        right_slot,
        node.offset,
        x_lo + half,
        height - 1,
        t_lo,
        base,
        class,
        leaves,
    )?;
    record.left = left.offset;
    record.right = right.offset;
    write_record(arena, node, &record, class)?;
    Ok(node)
}

/// Lays out a complete binary tree of width `u` in the top-tree region with
/// every rectangle open from row `t_lo`. Leaf `i` gets `base_values[i]`.
pub fn init_complete_tree(
    arena: &mut Arena,
    layout: &TernaryLayout,
    u: u64,
    t_lo: u64,
    base_values: &[Word],
    class: OpClass,
) -> Result<BuiltTree> {
    if u < 2 || !u.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(u));
    }
    let levels = u.trailing_zeros() + 1;
    let need = crate::layout::slot_count(levels);
    let have = arena.region(RegionLabel::TopTree)?.length / NODE_WORDS;
    if have < need || layout.slots() < need || layout.params().levels != levels {
        return Err(Error::RegionTooSmall {
            have: have.min(layout.slots()),
            need,
        });
    }
    assert_eq!(base_values.len() as u64, u, "one base value per column");
    let source = |_: &mut Arena, col: u64| Ok(base_values[col as usize]);
    let mut leaves = Vec::with_capacity(u as usize);
    let root = build_complete(
        arena,
        layout,
        0,
        NULL_ADDR,
        0,
        levels - 1,
        t_lo,
        &source,
        class,
        &mut leaves,
    )?;
    Ok(BuiltTree { root, leaves })
}

/// Outcome of a navigation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Located {
    pub leaf: NodeRef,
    pub up_steps: u32,
    pub down_steps: u32,
    pub jumped: bool,
}

/// Finds the leaf whose rectangle contains `(column, version)`: climb from
/// `start` until a containing node or a root, jump to `root_for(version)` on
/// a root miss, then descend through the containing children.
pub fn locate_leaf(
    arena: &mut Arena,
    start: NodeRef,
    column: u64,
    version: u64,
    root_for: &dyn Fn(u64) -> Option<NodeRef>,
    class: OpClass,
) -> Result<Located> {
    let uncovered = Error::Uncovered { column, version };
    let mut node = start;
    let mut up_steps = 0;
    let mut jumped = false;
    loop {
        if read_rect(arena, node, class)?.contains(column, version) {
            break;
        }
        match parent_of(arena, node, class)? {
            Some(p) => {
                node = p;
                up_steps += 1;
            }
            None => {
                node = root_for(version).ok_or(uncovered.clone())?;
                jumped = true;
                if !read_rect(arena, node, class)?.contains(column, version) {
                    return Err(uncovered);
                }
                break;
            }
        }
    }
    let mut down_steps = 0;
    'descend: loop {
        if get(arena, node, field::FLAGS, class)? & FLAG_LEAF != 0 {
            return Ok(Located {
                leaf: node,
                up_steps,
                down_steps,
                jumped,
            });
        }
        for step in [LEFT, RIGHT, UPPER] {
            if let Some(c) = child_of(arena, node, step, class)? {
                if read_rect(arena, c, class)?.contains(column, version) {
                    node = c;
                    down_steps += 1;
                    continue 'descend;
                }
            }
        }
        return Err(uncovered);
    }
}

/// Value of the leaf's column at `version`.
pub fn leaf_answer(
    arena: &mut Arena,
    leaf: NodeRef,
    version: u64,
    class: OpClass,
) -> Result<VersionedAnswer> {
    let t_lo = get(arena, leaf, field::T_LO, class)?;
    let t_hi = get(arena, leaf, field::T_HI, class)?;
    if version < t_lo || (t_hi != OPEN_TOP && version > t_hi) {
        let column = get(arena, leaf, field::X_LO, class)?;
        return Err(Error::Uncovered { column, version });
    }
    let point = get(arena, leaf, field::POINT_VERSION, class)?;
    let word = if point != NULL_ADDR && point <= version {
        get(arena, leaf, field::POINT_LABEL, class)?
    } else {
        get(arena, leaf, field::BASE_VALUE, class)?
    };
    Ok(VersionedAnswer::from_word(word))
}

/// Stores the point `(column, version)` with `label` in an open leaf.
pub fn place_point(
    arena: &mut Arena,
    leaf: NodeRef,
    version: u64,
    label: Word,
    class: OpClass,
) -> Result<()> {
    set(arena, leaf, field::POINT_VERSION, version, class)?;
    set(arena, leaf, field::POINT_LABEL, label, class)
}

/// Sets the top side of every open rectangle under `node` to `version`.
/// Closed children are inspected but never descended into. Returns the
/// number of rectangles closed.
pub fn close_open_rects(
    arena: &mut Arena,
    node: NodeRef,
    version: u64,
    class: OpClass,
) -> Result<usize> {
    let mut closed = 0;
    let mut stack = vec![node];
    while let Some(n) = stack.pop() {
        if get(arena, n, field::T_HI, class)? != OPEN_TOP {
            continue;
        }
        set(arena, n, field::T_HI, version, class)?;
        closed += 1;
        for step in [UPPER, RIGHT, LEFT] {
            if let Some(c) = child_of(arena, n, step, class)? {
                stack.push(c);
            }
        }
    }
    Ok(closed)
}

/// Hangs a fresh complete tree above `full_child` as `parent`'s upper child.
/// Rectangles start at `version + 1`; leaves take their base values from `source`.
#[allow(clippy::too_many_arguments)]
pub fn add_third_child(
    arena: &mut Arena,
    layout: &TernaryLayout,
    parent: NodeRef,
    full_child: NodeRef,
    version: u64,
    source: ColumnSource<'_>,
    class: OpClass,
) -> Result<NodeRef> {
    debug_assert_eq!(parent.kind, TreeKind::Top);
    if get(arena, parent, field::UPPER, class)? != NULL_ADDR {
        return Err(Error::ThirdChildExists);
    }
    let x_lo = get(arena, full_child, field::X_LO, class)?;
    let height = get(arena, full_child, field::HEIGHT, class)? as u32;
    let slot = layout
        .child(parent.offset / NODE_WORDS, UPPER)
        .expect("internal nodes have child slots");
    let mut leaves = Vec::new();
    let child = build_complete(
        arena,
        layout,
        slot,
        parent.offset,
        x_lo,
        height,
        version + 1,
        source,
        class,
        &mut leaves,
    )?;
    set(arena, parent, field::UPPER, child.offset, class)?;
    Ok(child)
}

/// What a reconfiguration did.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Reconfig {
    /// Height of the full child a third child was added above.
    pub third_child_height: Option<u32>,
    /// Number of rectangles closed.
    pub closed: usize,
    /// The root became full and its tree is now closed.
    pub root_finished: bool,
}

/// Marks `leaf` full and restores the rule that open nodes are never full:
/// climb while the parent already has three children (each such parent
/// becomes full), then close the highest full node's subtree and add a third
/// child above it.
pub fn mark_full_and_reconfigure(
    arena: &mut Arena,
    layout: &TernaryLayout,
    leaf: NodeRef,
    version: u64,
    source: ColumnSource<'_>,
    class: OpClass,
) -> Result<Reconfig> {
    let flags = get(arena, leaf, field::FLAGS, class)?;
    set(arena, leaf, field::FLAGS, flags | FLAG_FULL, class)?;
    let mut node = leaf;
    loop {
        let Some(parent) = parent_of(arena, node, class)? else {
            let closed = close_open_rects(arena, node, version, class)?;
            return Ok(Reconfig {
                third_child_height: None,
                closed,
                root_finished: true,
            });
        };
        if get(arena, parent, field::UPPER, class)? != NULL_ADDR {
            let flags = get(arena, parent, field::FLAGS, class)?;
            set(arena, parent, field::FLAGS, flags | FLAG_FULL, class)?;
            node = parent;
            continue;
        }
        let closed = close_open_rects(arena, node, version, class)?;
        let height = get(arena, node, field::HEIGHT, class)? as u32;
        add_third_child(arena, layout, parent, node, version, source, class)?;
        return Ok(Reconfig {
            third_child_height: Some(height),
            closed,
            root_finished: false,
        });
    }
}

/// Exact number of points stored under `node` (untraced).
pub fn count_points_in(arena: &Arena, node: NodeRef) -> Result<u64> {
    let mut total = 0;
    let mut stack = vec![node];
    while let Some(n) = stack.pop() {
        let rec = peek_record(arena, n)?;
        if rec.has_point() {
            total += 1;
        }
        stack.extend(rec.children().into_iter().filter_map(|w| n.sibling_ref(w)));
    }
    Ok(total)
}

/// Every node reachable from `root`, in depth-first pre-order (untraced).
pub fn collect_nodes(arena: &Arena, root: NodeRef) -> Result<Vec<NodeRef>> {
    let mut out = Vec::new();
    let mut stack = vec![root];
    while let Some(n) = stack.pop() {
        out.push(n);
        let rec = peek_record(arena, n)?;
        for w in [rec.upper, rec.right, rec.left] {
            if let Some(c) = n.sibling_ref(w) {
                stack.push(c);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub node: NodeRef,
    pub what: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}@{}: {}", self.node.kind, self.node.offset, self.what)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TreeSummary {
    pub nodes: u64,
    pub leaves: u64,
    pub points: u64,
}

/// Validates the structural rules of every node under `root` (untraced),
/// including the point-count lower bound for full nodes.
pub fn check_tree_invariants(
    arena: &Arena,
    root: NodeRef,
) -> std::result::Result<TreeSummary, Violation> {
    let fail = |node: NodeRef, what: String| Violation { node, what };
    let root_rec = peek_record(arena, root).map_err(|e| fail(root, e.to_string()))?;
    if root_rec.parent != NULL_ADDR {
        return Err(fail(root, "root has a parent".into()));
    }
    let mut summary = TreeSummary::default();
    check_node(arena, root, &root_rec, &mut summary)?;
    Ok(summary)
}

/// Returns the number of points under `node`.
fn check_node(
    arena: &Arena,
    node: NodeRef,
    rec: &NodeRecord,
    summary: &mut TreeSummary,
) -> std::result::Result<u64, Violation> {
    let fail = |what: &str| Violation {
        node,
        what: what.to_string(),
    };
    summary.nodes += 1;
    let r = rec.rect;
    if r.height >= 63 {
        return Err(fail("height out of range"));
    }
    if !r.x_lo.is_multiple_of(r.width()) {
        return Err(fail("x_lo not aligned to width"));
    }
    if r.t_lo < 1 {
        return Err(fail("t_lo below 1"));
    }
    if !r.is_open() && r.t_hi < r.t_lo {
        return Err(fail("empty row range"));
    }
    if r.is_open() && rec.is_full() {
        return Err(fail("open node full"));
    }
    let is_leaf = rec.is_leaf();
    let no_children = rec.children().iter().all(|&w| w == NULL_ADDR);
    if is_leaf != (r.height == 0) || is_leaf != no_children {
        return Err(fail("leaf flag, height and children disagree"));
    }
    if is_leaf {
        summary.leaves += 1;
        if rec.is_full() != rec.has_point() {
            return Err(fail("leaf fullness does not match point presence"));
        }
        if rec.has_point() {
            summary.points += 1;
            let v = rec.point_version;
            if v < r.t_lo || (!r.is_open() && v > r.t_hi) {
                return Err(fail("point outside leaf rows"));
            }
            return Ok(1);
        }
        return Ok(0);
    }
    if rec.has_point() {
        return Err(fail("internal node carries a point"));
    }
    if rec.left == NULL_ADDR || rec.right == NULL_ADDR {
        return Err(fail("internal node missing left or right child"));
    }
    let half = r.width() / 2;
    let mut kids = Vec::with_capacity(3);
    for (step, w) in rec.children().into_iter().enumerate() {
        let Some(c) = node.sibling_ref(w) else {
            continue;
        };
        let crec = peek_record(arena, c).map_err(|e| fail(&e.to_string()))?;
        if crec.parent != node.offset {
            return Err(fail("child's parent pointer does not point back"));
        }
        if crec.rect.height + 1 != r.height {
            return Err(fail("child height is not one less"));
        }
        kids.push((step as Step, c, crec));
    }
    let (_, _, left) = kids[0];
    let (_, _, right) = kids[1];
    if left.rect.x_lo != r.x_lo || right.rect.x_lo != r.x_lo + half {
        return Err(fail("left/right children do not split the columns"));
    }
    if left.rect.t_lo != r.t_lo || right.rect.t_lo != r.t_lo {
        return Err(fail("child does not start at the parent's bottom row"));
    }
    let full_children = kids.iter().filter(|(_, _, c)| c.is_full()).count();
    if full_children > 2 {
        return Err(fail("three full children"));
    }
    if rec.is_full() != (full_children == 2) {
        return Err(fail("fullness does not match two full children"));
    }
    if let Some(&(_, _, upper)) = kids.get(2) {
        let below = if upper.rect.x_lo == left.rect.x_lo {
            left
        } else if upper.rect.x_lo == right.rect.x_lo {
            right
        } else {
            return Err(fail("upper child is not aligned with a lower child"));
        };
        let other = if upper.rect.x_lo == left.rect.x_lo {
            right
        } else {
            left
        };
        if !below.is_full() {
            return Err(fail("upper child sits on a non-full child"));
        }
        if below.rect.is_open() || upper.rect.t_lo != below.rect.t_hi + 1 {
            return Err(fail("upper child is not stacked on its sibling"));
        }
        if upper.rect.t_hi != r.t_hi || other.rect.t_hi != r.t_hi {
            return Err(fail("children do not reach the parent's top row"));
        }
    } else if left.rect.t_hi != r.t_hi || right.rect.t_hi != r.t_hi {
        return Err(fail("children do not reach the parent's top row"));
    }
    let mut points = 0;
    for (_, c, crec) in &kids {
        points += check_node(arena, *c, crec, summary)?;
    }
    if rec.is_full() && points < r.width() {
        return Err(fail("full node holds fewer than 2^h points"));
    }
    Ok(points)
}
