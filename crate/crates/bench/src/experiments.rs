//! Experiment drivers. Each returns measured rows plus the pass/fail checks
//! that make up its in-run assertions.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use chronoarray::cachesim::simulate_sweep;
use chronoarray::layout::{distinct_blocks, LayoutParams, TernaryLayout, LEFT, RIGHT};
use chronoarray::par::{map_slice, Exec};
use chronoarray::persist::Options;
use chronoarray::sttree::NODE_WORDS;
use chronoarray::{CacheConfig, CacheStats, Epsilon, OpClass, PersistentArray, Policy, RegionLabel};

use crate::driver::{run_ops, CheckMode, Meter};
use crate::fit::{envelope, envelope2};
use crate::frozen;
use crate::row::{ExperimentRow, Extra};
use crate::workload::{gen_workload, Op, Workload, WorkloadKind};
use crate::{BenchError, Result};

pub const DEFAULT_SEED: u64 = 0x5eed;
/// Cache blocks (words) swept by the cost experiments unless overridden.
pub const DEFAULT_BLOCKS: [u64; 3] = [16, 64, 256];
/// Lines per cache when no memory size is given.
pub const DEFAULT_LINES: u64 = 64;

/// Limits on fitted constants.
pub const LIMIT_LAYOUT_C: f64 = 8.0;
pub const LIMIT_LAYOUT_RATIO: f64 = 2.5;
pub const LIMIT_FOOTPRINT_C: f64 = 8.0;
pub const LIMIT_PSCAN_C: f64 = 8.0;
pub const LIMIT_WRITE_C: f64 = 8.0;
pub const LIMIT_WRITE_C0: f64 = 4.0;
pub const LIMIT_SPACE_C1: f64 = 2.0;
pub const LIMIT_SPACE_C2: f64 = 16.0 * NODE_WORDS as f64;
pub const LIMIT_ROLL_C: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Experiment {
    ReadScan,
    Pscan,
    LayoutBlocks,
    WriteRandom,
    WriteUnique,
    Space,
    RebuildCounts,
    RollCost,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::ReadScan,
        Experiment::Pscan,
        Experiment::LayoutBlocks,
        Experiment::WriteRandom,
        Experiment::WriteUnique,
        Experiment::Space,
        Experiment::RebuildCounts,
        Experiment::RollCost,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::ReadScan => "exp_read_scan",
            Experiment::Pscan => "exp_pscan",
            Experiment::LayoutBlocks => "exp_layout_blocks",
            Experiment::WriteRandom => "exp_write_random",
            Experiment::WriteUnique => "exp_write_unique",
            Experiment::Space => "exp_space",
            Experiment::RebuildCounts => "exp_rebuild_counts",
            Experiment::RollCost => "exp_roll_cost",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| BenchError::UnknownExperiment(s.to_string()))
    }
}

/// Everything an experiment run can be told. `None` means the experiment's
/// own default.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub workload: Option<WorkloadKind>,
    pub ops: Option<u64>,
    pub u0: Option<u64>,
    pub epsilon: Epsilon,
    pub blocks: Option<Vec<u64>>,
    pub memories: Option<Vec<u64>>,
    pub policy: Policy,
    pub seed: u64,
    pub check: CheckMode,
    pub log: Option<PathBuf>,
    pub replay: Option<PathBuf>,
    pub width: Option<u64>,
    pub version: Option<u64>,
    pub scan_widths: Option<Vec<u64>>,
    pub exec: Exec,
    pub wallclock: bool,
}

impl RunConfig {
    pub fn new(experiment: Experiment) -> Self {
        RunConfig {
            experiment,
            workload: None,
            ops: None,
            u0: None,
            epsilon: Epsilon::HALF,
            blocks: None,
            memories: None,
            policy: Policy::Lru,
            seed: DEFAULT_SEED,
            check: CheckMode::Off,
            log: None,
            replay: None,
            width: None,
            version: None,
            scan_widths: None,
            exec: Exec::default(),
            wallclock: false,
        }
    }

    /// True when every knob that changes the measurement is at its default,
    /// so the frozen regression constants apply.
    pub fn is_reference(&self) -> bool {
        let base = RunConfig::new(self.experiment);
        self.workload.is_none()
            && self.ops.is_none()
            && self.u0.is_none()
            && self.epsilon == base.epsilon
            && self.blocks.is_none()
            && self.memories.is_none()
            && self.policy == base.policy
            && self.seed == base.seed
            && self.replay.is_none()
            && self.width.is_none()
            && self.version.is_none()
            && self.scan_widths.is_none()
    }

    fn blocks_or(&self, default: &[u64]) -> Vec<u64> {
        self.blocks.clone().unwrap_or_else(|| default.to_vec())
    }

    /// Cross product of block and memory sizes; memory defaults to 64 lines.
    pub fn caches(&self, default_blocks: &[u64]) -> Result<Vec<CacheConfig>> {
        let mut out = Vec::new();
        for b in self.blocks_or(default_blocks) {
            if b == 0 {
                return Err(BenchError::Config("block size must be positive".into()));
            }
            let memories = self.memories.clone().unwrap_or_else(|| vec![DEFAULT_LINES * b]);
            for m in memories {
                if m >= b {
                    out.push(CacheConfig::new(m, b, self.policy));
                }
            }
        }
        if out.is_empty() {
            return Err(BenchError::Config("no cache configuration has M >= B".into()));
        }
        Ok(out)
    }

    fn options(&self, u0: u64, tracing: bool) -> Options {
        Options {
            u0,
            epsilon: self.epsilon,
            tracing,
            ..Options::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }

    fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check::new(name, value <= limit, format!("{value:.4} <= {limit:.4}"))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub rows: Vec<ExperimentRow>,
    pub checks: Vec<Check>,
    /// Informational measurements that carry no assertion.
    pub notes: Vec<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub fn run_experiment(cfg: &RunConfig) -> Result<Outcome> {
    let start = Instant::now();
    let mut out = match cfg.experiment {
        Experiment::ReadScan => exp_read_scan(cfg),
        Experiment::Pscan => exp_pscan(cfg),
        Experiment::LayoutBlocks => exp_layout_blocks(cfg),
        Experiment::WriteRandom => exp_write_random(cfg),
        Experiment::WriteUnique => exp_write_unique(cfg),
        Experiment::Space => exp_space(cfg),
        Experiment::RebuildCounts => exp_rebuild_counts(cfg),
        Experiment::RollCost => exp_roll_cost(cfg),
    }?;
    if cfg.wallclock {
        let ms = start.elapsed().as_millis() as u64;
        out.rows.iter_mut().for_each(|r| r.wallclock_ms = ms);
    }
    Ok(out)
}

fn block_power(b: u64, eps: Epsilon) -> f64 {
    (b as f64).powf(eps.locality_exponent())
}

fn log_base(u: u64, b: u64) -> f64 {
    (u as f64).ln() / (b as f64).ln()
}

fn log2(u: u64) -> f64 {
    u.trailing_zeros() as f64
}

fn row(cfg: &RunConfig, p_u: u64, v: u64, cache: Option<&CacheConfig>) -> ExperimentRow {
    ExperimentRow {
        experiment: cfg.experiment.name().to_string(),
        u: p_u,
        v,
        epsilon: cfg.epsilon.to_string(),
        b: cache.map_or(0, |c| c.block),
        m: cache.map_or(0, |c| c.memory),
        policy: cache.map_or("-".to_string(), |c| c.policy.to_string()),
        ..Default::default()
    }
}

/// A fresh structure, or one replayed from `--replay`, with tracing off and
/// the construction trace discarded.
fn start_structure(cfg: &RunConfig, u0: u64) -> Result<PersistentArray> {
    let mut p = match &cfg.replay {
        Some(path) => PersistentArray::load_log(path, cfg.options(u0, false))?,
        None => PersistentArray::with_options(cfg.options(u0, false))?,
    };
    p.arena_mut().take_trace();
    Ok(p)
}

/// Random writes over `[0, width)` appended untraced, unless the history came
/// from a replayed log.
fn build_history(cfg: &RunConfig, p: &mut PersistentArray, writes: u64, u0: u64) -> Result<()> {
    if cfg.replay.is_some() || writes == 0 {
        return Ok(());
    }
    let mut w = Workload::new(WorkloadKind::RandWrite, writes, u0, cfg.seed);
    w.width = cfg.width;
    w.history = p.version();
    let ops = gen_workload(&w)?;
    let tracing = p.arena().tracing();
    p.arena_mut().set_tracing(false);
    run_ops(p, &ops, None, cfg.check)?;
    p.arena_mut().set_tracing(tracing);
    Ok(())
}

fn finish_structure(cfg: &RunConfig, p: &PersistentArray, out: &mut Outcome) -> Result<()> {
    if cfg.check != CheckMode::Off {
        let res = p.check_invariants();
        out.checks.push(Check::new(
            "invariants",
            res.is_ok(),
            res.err().unwrap_or_else(|| "all trees valid".into()),
        ));
    }
    if let Some(path) = &cfg.log {
        p.save_log(path)?;
    }
    Ok(())
}

fn class_rows(cfg: &RunConfig, u: u64, v: u64, cache: &CacheConfig, s: &CacheStats, extra: &str) -> Vec<ExperimentRow> {
    OpClass::ALL
        .iter()
        .map(|&class| ExperimentRow {
            op_class: class.name().to_string(),
            accesses: s.accesses_of(class),
            misses: s.misses_of(class),
            extra: extra.to_string(),
            ..row(cfg, u, v, Some(cache))
        })
        .collect()
}

fn monotone_in_memory(configs: &[CacheConfig], misses: &[u64]) -> Check {
    let mut by_block: BTreeMap<u64, Vec<(u64, u64)>> = BTreeMap::new();
    for (c, &m) in configs.iter().zip(misses) {
        if c.policy == Policy::Lru {
            by_block.entry(c.block).or_default().push((c.memory, m));
        }
    }
    let mut bad = Vec::new();
    for (b, mut cells) in by_block {
        cells.sort_unstable();
        for pair in cells.windows(2) {
            if pair[1].1 > pair[0].1 {
                bad.push(format!("B={b}: M={} has {} > {}", pair[1].0, pair[1].1, pair[0].1));
            }
        }
    }
    let detail = if bad.is_empty() { "non-increasing".to_string() } else { bad.join("; ") };
    Check::new("lru misses non-increasing in M", bad.is_empty(), detail)
}

fn exp_read_scan(cfg: &RunConfig) -> Result<Outcome> {
    let u0 = cfg.u0.unwrap_or(4096);
    let mut p = start_structure(cfg, u0)?;
    if cfg.replay.is_none() {
        let w = Workload::new(WorkloadKind::SeqWrite, u0, u0, cfg.seed);
        p.arena_mut().set_tracing(false);
        run_ops(&mut p, &gen_workload(&w)?, None, cfg.check)?;
    }
    let u = p.u();
    let n = cfg.ops.unwrap_or(u);
    let ops: Vec<Op> = (0..n).map(|k| Op::Read { column: k % u }).collect();
    let caches = cfg.caches(&DEFAULT_BLOCKS)?;
    let mut meter = Meter::new(&caches, cfg.exec);
    p.arena_mut().set_tracing(true);
    run_ops(&mut p, &ops, Some(&mut meter), CheckMode::Off)?;
    let stats = meter.finish();

    let mut out = Outcome::default();
    for (c, s) in caches.iter().zip(&stats) {
        let bound = 2.0 * n as f64 / c.block as f64 + 4.0;
        let misses = s.misses_of(OpClass::Read);
        out.rows.push(ExperimentRow {
            op_class: OpClass::Read.name().into(),
            accesses: s.accesses_of(OpClass::Read),
            misses,
            arena_words: p.arena().size(),
            extra: Extra::new().int("reads", n).float("bound", bound).finish(),
            ..row(cfg, u, p.version(), Some(c))
        });
        out.checks.push(Check::at_most(
            format!("read misses B={} M={}", c.block, c.memory),
            misses as f64,
            bound,
        ));
    }
    let misses: Vec<u64> = stats.iter().map(|s| s.misses).collect();
    out.checks.push(monotone_in_memory(&caches, &misses));
    finish_structure(cfg, &p, &mut out)?;
    Ok(out)
}

/// Distinct `b`-word blocks holding the leaves for `columns` at version `v`
/// and all their ancestors, each node counted with all of its words.
pub fn footprint_blocks(p: &PersistentArray, v: u64, columns: std::ops::Range<u64>, b: u64) -> Result<(u64, u64)> {
    let nodes = p.query_footprint(v, columns)?;
    let mut addrs = Vec::with_capacity(nodes.len() * NODE_WORDS as usize);
    for n in &nodes {
        let a = n.address(p.arena())?;
        addrs.extend(a..a + NODE_WORDS);
    }
    let blocks = distinct_blocks(addrs, b)?;
    Ok((nodes.len() as u64, blocks as u64))
}

fn exp_pscan(cfg: &RunConfig) -> Result<Outcome> {
    let u0 = cfg.u0.unwrap_or(4096);
    let mut p = start_structure(cfg, u0)?;
    build_history(cfg, &mut p, cfg.ops.unwrap_or(32_768), u0)?;
    let u = p.u();
    let big_v = p.version();
    let v = cfg.version.unwrap_or(big_v / 2);
    if v > big_v {
        return Err(BenchError::Config(format!("version {v} is past the history ({big_v})")));
    }
    let widths: Vec<u64> = cfg
        .scan_widths
        .clone()
        .unwrap_or_else(|| vec![256, 512, 1024, 2048, 4096])
        .into_iter()
        .filter(|&w| w >= 1 && w <= u)
        .collect();
    if widths.is_empty() {
        return Err(BenchError::Config(format!("no scan width fits in U = {u}")));
    }
    let blocks = cfg.blocks_or(&[64, 256]);
    let eps = cfg.epsilon;
    let mut out = Outcome::default();

    // Footprint census over three scan positions per width.
    let cells: Vec<(u64, u64)> = blocks.iter().flat_map(|&b| widths.iter().map(move |&w| (b, w))).collect();
    let census = map_slice(cfg.exec, &cells, |&(b, w)| -> Result<(u64, u64)> {
        let mut worst = (0, 0);
        for start in [0, (u - w) / 2, u - w] {
            let cell = footprint_blocks(&p, v, start..start + w, b)?;
            if cell.1 > worst.1 {
                worst = cell;
            }
        }
        Ok(worst)
    });
    let mut fp_points = Vec::new();
    let mut by_cell = BTreeMap::new();
    for (&(b, w), res) in cells.iter().zip(census) {
        let (nodes, blk) = res?;
        let basis = w as f64 / block_power(b, eps) + log_base(u, b) + 1.0;
        fp_points.push((blk as f64, basis));
        by_cell.insert((b, w), blk);
        out.rows.push(ExperimentRow {
            op_class: "census".into(),
            b,
            accesses: nodes,
            misses: blk,
            arena_words: p.arena().size(),
            extra: Extra::new().int("w", w).float("basis", basis).float("c", blk as f64 / basis).finish(),
            ..row(cfg, u, v, None)
        });
    }
    let fp_c = envelope(&fp_points);
    out.checks.push(Check::at_most("footprint constant", fp_c, LIMIT_FOOTPRINT_C));
    for (&(b, w), &blk) in &by_cell {
        if let Some(&blk2) = by_cell.get(&(b, 2 * w)) {
            out.checks.push(Check::at_most(
                format!("footprint scaling B={b} w={w}->{}", 2 * w),
                blk2 as f64,
                2.5 * blk as f64 + 4.0,
            ));
        }
    }
    if cfg.is_reference() {
        out.checks.push(Check::at_most(
            "footprint constant (frozen)",
            fp_c,
            frozen::HEADROOM * frozen::FOOTPRINT_C,
        ));
    }

    // Traced scans, one per width, simulated on every cache.
    let caches = cfg.caches(&[64, 256])?;
    let mut scan_points = Vec::new();
    p.arena_mut().set_tracing(true);
    for &w in &widths {
        let mut wl = Workload::new(WorkloadKind::Pscan, w, u0, cfg.seed);
        wl.width = Some(u);
        wl.history = big_v;
        wl.version = Some(v);
        let ops = gen_workload(&wl)?;
        p.arena_mut().take_trace();
        run_ops(&mut p, &ops, None, CheckMode::Off)?;
        let trace = p.arena_mut().take_trace();
        let stats = simulate_sweep(&trace, &caches, cfg.exec);
        for (c, s) in caches.iter().zip(&stats) {
            let misses = s.misses_of(OpClass::PRead);
            let basis = w as f64 / block_power(c.block, eps) * (1.0 + log_base(u, c.block));
            scan_points.push((misses as f64, basis));
            out.rows.push(ExperimentRow {
                op_class: OpClass::PRead.name().into(),
                accesses: s.accesses_of(OpClass::PRead),
                misses,
                arena_words: p.arena().size(),
                extra: Extra::new()
                    .int("w", w)
                    .float("basis", basis)
                    .float("c", misses as f64 / basis)
                    .float("per_cell", misses as f64 / w as f64)
                    .finish(),
                ..row(cfg, u, v, Some(c))
            });
            if c.block == 256 && c.memory == DEFAULT_LINES * 256 && w == 4096 {
                out.checks.push(Check::at_most(
                    "pscan misses vs w/4 (B=256, w=4096)",
                    misses as f64,
                    w as f64 / 4.0,
                ));
            }
        }
    }
    let scan_c = envelope(&scan_points);
    out.checks.push(Check::at_most("pscan constant", scan_c, LIMIT_PSCAN_C));
    if cfg.is_reference() {
        out.checks.push(Check::at_most(
            "pscan constant (frozen)",
            scan_c,
            frozen::HEADROOM * frozen::PSCAN_C,
        ));
    }
    out.notes.push(format!("footprint C = {fp_c:.4}, pscan C = {scan_c:.4}, v = {v}"));
    finish_structure(cfg, &p, &mut out)?;
    Ok(out)
}

/// Slots of the complete binary (left/right only) subtree of `root` with
/// `height` levels below it.
pub fn binary_subtree_slots(layout: &TernaryLayout, root: u64, height: u32) -> Vec<u64> {
    let mut all = vec![root];
    let mut frontier = vec![root];
    for _ in 0..height {
        frontier = frontier
            .iter()
            .flat_map(|&s| [layout.child(s, LEFT), layout.child(s, RIGHT)])
            .flatten()
            .collect();
        all.extend_from_slice(&frontier);
    }
    all
}

/// Per-height block counts for one layout and block size: subtrees truncated
/// from the root, and the worst subtree rooted at a node of that height.
pub struct LayoutCensus {
    pub u: u64,
    pub b: u64,
    pub root_family: Vec<u64>,
    pub node_family: Vec<u64>,
    pub nodes: Vec<u64>,
}

pub fn layout_census(eps: Epsilon, u: u64, b: u64, exec: Exec) -> Result<LayoutCensus> {
    let layout = TernaryLayout::build_with(LayoutParams::for_width(eps, u), exec);
    let lg = u.trailing_zeros();
    let mut census = LayoutCensus {
        u,
        b,
        root_family: Vec::new(),
        node_family: Vec::new(),
        nodes: Vec::new(),
    };
    for h in 0..=lg {
        let slots = binary_subtree_slots(&layout, 0, h);
        census.nodes.push(slots.len() as u64);
        census.root_family.push(distinct_blocks(slots, b)? as u64);
        let depth = lg - h;
        let roots = binary_subtree_slots(&layout, 0, depth).split_off((1 << depth) - 1);
        let mut worst = 0;
        for r in roots {
            worst = worst.max(distinct_blocks(binary_subtree_slots(&layout, r, h), b)? as u64);
        }
        census.node_family.push(worst);
    }
    Ok(census)
}

fn exp_layout_blocks(cfg: &RunConfig) -> Result<Outcome> {
    let widths = match cfg.u0 {
        Some(u) => vec![u],
        None => vec![256, 1024],
    };
    let blocks = cfg.blocks_or(&[64, 256]);
    let eps = cfg.epsilon;
    let cells: Vec<(u64, u64)> = widths.iter().flat_map(|&u| blocks.iter().map(move |&b| (u, b))).collect();
    // Each cell builds its own child table sequentially; cells run in parallel.
    let results = map_slice(cfg.exec, &cells, |&(u, b)| layout_census(eps, u, b, Exec::Sequential));

    let mut out = Outcome::default();
    let mut points = Vec::new();
    let mut root_ratio: f64 = 0.0;
    for res in results {
        let c = res?;
        let bx = block_power(c.b, eps);
        let slots = LayoutParams::for_width(eps, c.u).slots();
        for h in 0..c.root_family.len() {
            let basis = 1.0 + (1u64 << h) as f64 / bx;
            for (family, counts) in [("root", &c.root_family), ("node", &c.node_family)] {
                points.push((counts[h] as f64, basis));
                out.rows.push(ExperimentRow {
                    op_class: "census".into(),
                    b: c.b,
                    accesses: c.nodes[h],
                    misses: counts[h],
                    arena_words: slots,
                    extra: Extra::new()
                        .int("family", family)
                        .int("h", format!("{h:02}"))
                        .float("basis", basis)
                        .float("c", counts[h] as f64 / basis)
                        .finish(),
                    ..row(cfg, c.u, 0, None)
                });
            }
            if (1u64 << h) as f64 >= bx && h + 1 < c.node_family.len() {
                let ratio = c.node_family[h + 1] as f64 / c.node_family[h] as f64;
                out.checks.push(Check::at_most(
                    format!("layout growth U={} B={} h={h}", c.u, c.b),
                    ratio,
                    LIMIT_LAYOUT_RATIO,
                ));
                root_ratio = root_ratio.max(c.root_family[h + 1] as f64 / c.root_family[h] as f64);
            }
        }
    }
    let fitted = envelope(&points);
    out.checks.push(Check::at_most("layout constant", fitted, LIMIT_LAYOUT_C));
    if cfg.is_reference() {
        out.checks.push(Check::at_most(
            "layout constant (frozen)",
            fitted,
            frozen::HEADROOM * frozen::LAYOUT_C,
        ));
    }
    out.notes.push(format!(
        "layout C = {fitted:.4}; largest growth step of root-truncated subtrees = {root_ratio:.2}"
    ));
    Ok(out)
}

/// Per-write WRITE+MAINT misses for each cache.
fn per_write(stats: &[CacheStats], writes: u64) -> Vec<f64> {
    stats
        .iter()
        .map(|s| (s.misses_of(OpClass::Write) + s.misses_of(OpClass::Maint)) as f64 / writes.max(1) as f64)
        .collect()
}

struct WriteRun {
    u: u64,
    v: u64,
    words: u64,
    writes: u64,
    stats: Vec<CacheStats>,
}

fn traced_run(cfg: &RunConfig, p: &mut PersistentArray, ops: &[Op], caches: &[CacheConfig]) -> Result<WriteRun> {
    let mut meter = Meter::new(caches, cfg.exec);
    p.arena_mut().take_trace();
    p.arena_mut().set_tracing(true);
    let counts = run_ops(p, ops, Some(&mut meter), cfg.check)?;
    p.arena_mut().set_tracing(false);
    Ok(WriteRun {
        u: p.u(),
        v: p.version(),
        words: p.arena().size(),
        writes: counts.writes,
        stats: meter.finish(),
    })
}

fn exp_write_random(cfg: &RunConfig) -> Result<Outcome> {
    let u0 = cfg.u0.unwrap_or(4096);
    let kind = cfg.workload.unwrap_or(WorkloadKind::RandWrite);
    let mut p = start_structure(cfg, u0)?;
    let mut w = Workload::new(kind, cfg.ops.unwrap_or(100_000), u0, cfg.seed);
    w.width = cfg.width;
    w.history = p.version();
    let ops = gen_workload(&w)?;
    let caches = cfg.caches(&DEFAULT_BLOCKS)?;
    let run = traced_run(cfg, &mut p, &ops, &caches)?;

    let mut out = Outcome::default();
    let averages = per_write(&run.stats, run.writes);
    let eps = cfg.epsilon;
    let features: Vec<f64> = caches.iter().map(|c| log2(run.u) / block_power(c.block, eps)).collect();
    for ((c, s), (&avg, &f)) in caches.iter().zip(&run.stats).zip(averages.iter().zip(&features)) {
        let extra = Extra::new().int("workload", kind).int("writes", run.writes).finish();
        let mut rows = class_rows(cfg, run.u, run.v, c, s, &extra);
        rows.push(ExperimentRow {
            op_class: "WRITE+MAINT".into(),
            accesses: s.accesses_of(OpClass::Write) + s.accesses_of(OpClass::Maint),
            misses: s.misses_of(OpClass::Write) + s.misses_of(OpClass::Maint),
            extra: Extra::new()
                .int("workload", kind)
                .int("writes", run.writes)
                .float("per_write", avg)
                .float("feature", f)
                .finish(),
            ..row(cfg, run.u, run.v, Some(c))
        });
        for r in &mut rows {
            r.arena_words = run.words;
        }
        out.rows.extend(rows);
    }
    if run.writes > 0 {
        let xs: Vec<[f64; 2]> = features.iter().map(|&f| [f, 1.0]).collect();
        let distinct = {
            let mut f = features.clone();
            f.sort_by(f64::total_cmp);
            f.dedup();
            f.len()
        };
        let [c, c0] = if distinct >= 2 {
            envelope2(&xs, &averages)
        } else {
            [envelope(&averages.iter().zip(&features).map(|(&a, &f)| (a, f)).collect::<Vec<_>>()), 0.0]
        };
        out.checks.push(Check::at_most("write constant C", c, LIMIT_WRITE_C));
        out.checks.push(Check::at_most("write constant C'", c0, LIMIT_WRITE_C0));
        if cfg.is_reference() {
            for ((cache, &avg), &f) in caches.iter().zip(&averages).zip(&features) {
                out.checks.push(Check::at_most(
                    format!("write cost (frozen) B={}", cache.block),
                    avg,
                    frozen::HEADROOM * (frozen::WRITE_C * f + frozen::WRITE_C0),
                ));
            }
        }
        out.notes.push(format!("write fit C = {c:.4}, C' = {c0:.4}"));
    }
    let misses: Vec<u64> = run.stats.iter().map(|s| s.misses).collect();
    out.checks.push(monotone_in_memory(&caches, &misses));
    finish_structure(cfg, &p, &mut out)?;
    Ok(out)
}

fn exp_write_unique(cfg: &RunConfig) -> Result<Outcome> {
    let u0 = cfg.u0.unwrap_or(4096);
    let n = cfg.ops.unwrap_or(u0);
    let caches = cfg.caches(&DEFAULT_BLOCKS)?;
    let mut out = Outcome::default();
    let mut averages = BTreeMap::new();
    for kind in [WorkloadKind::UniqueWrite, WorkloadKind::RandWrite] {
        let mut p = start_structure(cfg, u0)?;
        let mut w = Workload::new(kind, n, u0, cfg.seed);
        w.width = cfg.width;
        w.history = p.version();
        let run = traced_run(cfg, &mut p, &gen_workload(&w)?, &caches)?;
        let avg = per_write(&run.stats, run.writes);
        for ((c, s), &a) in caches.iter().zip(&run.stats).zip(&avg) {
            out.rows.push(ExperimentRow {
                op_class: "WRITE+MAINT".into(),
                accesses: s.accesses_of(OpClass::Write) + s.accesses_of(OpClass::Maint),
                misses: s.misses_of(OpClass::Write) + s.misses_of(OpClass::Maint),
                arena_words: run.words,
                extra: Extra::new()
                    .int("workload", kind)
                    .int("writes", run.writes)
                    .float("per_write", a)
                    .finish(),
                ..row(cfg, run.u, run.v, Some(c))
            });
        }
        averages.insert(kind.name(), avg);
        if kind == WorkloadKind::UniqueWrite {
            finish_structure(cfg, &p, &mut out)?;
        }
    }
    let unique = &averages["unique-write"];
    let random = &averages["rand-write"];
    for ((c, &a), &b) in caches.iter().zip(unique).zip(random) {
        out.checks.push(Check::at_most(
            format!("unique <= random per write B={} M={}", c.block, c.memory),
            a,
            b,
        ));
    }
    Ok(out)
}

fn exp_space(cfg: &RunConfig) -> Result<Outcome> {
    let u0 = cfg.u0.unwrap_or(256);
    let n = cfg.ops.unwrap_or(1 << 17);
    let mut p = start_structure(cfg, u0)?;
    let mut w = Workload::new(WorkloadKind::RandWrite, n, u0, cfg.seed);
    w.width = cfg.width;
    let ops = gen_workload(&w)?;

    let mut checkpoints: Vec<u64> = (10..64).map(|k| 1u64 << k).take_while(|&c| c < n).collect();
    checkpoints.push(n);
    let mut out = Outcome::default();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut worst_tree = (0u64, 0u64);
    let mut done = 0usize;
    for &cp in &checkpoints {
        let upto = cp as usize;
        run_ops(&mut p, &ops[done..upto], None, cfg.check)?;
        done = upto;
        let u = p.u();
        let report = p.space_report();
        let tree_bound = 8 * u * (1 + u.trailing_zeros() as u64);
        let largest = p.bottom_tree_sizes().into_iter().max().unwrap_or(0);
        if largest * tree_bound.max(1) > worst_tree.0 * worst_tree.1.max(1) || worst_tree == (0, 0) {
            worst_tree = (largest, tree_bound);
        }
        out.checks.push(Check::at_most(
            format!("bottom tree nodes V={cp}"),
            largest as f64,
            tree_bound as f64,
        ));
        let a = 3f64.powf(log2(u)) * NODE_WORDS as f64;
        let b = cp as f64 * log2(u);
        xs.push([a, b]);
        ys.push(report.total as f64);
        let mut extra = Extra::new();
        for label in RegionLabel::ALL {
            extra = extra.int(&label.name().to_ascii_lowercase(), report.words(label));
        }
        out.rows.push(ExperimentRow {
            op_class: "space".into(),
            accesses: p.bottom_tree_sizes().iter().sum(),
            misses: 0,
            arena_words: report.total,
            extra: extra.int("largest_tree", largest).int("tree_bound", tree_bound).finish(),
            ..row(cfg, u, cp, None)
        });
    }
    let [c1, c2] = envelope2(&xs, &ys);
    out.checks.push(Check::at_most("space constant c1", c1, LIMIT_SPACE_C1));
    out.checks.push(Check::at_most("space constant c2", c2, LIMIT_SPACE_C2));
    if cfg.is_reference() {
        for (x, &y) in xs.iter().zip(&ys) {
            out.checks.push(Check::at_most(
                format!("space (frozen) V={}", x[1] / log2(p.u())),
                y,
                frozen::HEADROOM * (frozen::SPACE_C1 * x[0] + frozen::SPACE_C2 * x[1]),
            ));
        }
    }
    out.notes.push(format!(
        "space fit c1 = {c1:.4}, c2 = {c2:.4}; largest bottom tree {} of {} nodes allowed",
        worst_tree.0, worst_tree.1
    ));
    finish_structure(cfg, &p, &mut out)?;
    Ok(out)
}

fn exp_rebuild_counts(cfg: &RunConfig) -> Result<Outcome> {
    let u0 = cfg.u0.unwrap_or(4096);
    let n = cfg.ops.unwrap_or(20_000);
    let mut p = start_structure(cfg, u0)?;
    build_history(cfg, &mut p, n, u0)?;
    let n = p.version();
    let u = p.u();
    let counters = p.counters().clone();
    let mut out = Outcome::default();
    let lg = u.trailing_zeros() as u64;
    let mut violations = 0;
    for h in 0..lg as usize {
        let count = counters.third_child_by_height.get(h).copied().unwrap_or(0);
        let bound = 4 * n / (1u64 << h) + lg;
        if count > bound {
            violations += 1;
        }
        out.rows.push(ExperimentRow {
            op_class: "third-child".into(),
            accesses: n,
            misses: count,
            arena_words: p.arena().size(),
            extra: Extra::new()
                .int("h", format!("{h:02}"))
                .int("bound", bound)
                .float("rate", count as f64 * (1u64 << h) as f64 / n.max(1) as f64)
                .finish(),
            ..row(cfg, u, n, None)
        });
    }
    out.checks.push(Check::new(
        "third-child counts within 4N/2^h + log2 U",
        violations == 0,
        format!("{violations} violations over {lg} heights"),
    ));
    out.notes.push(format!(
        "rollovers = {}, rebuilds = {}, rectangles closed = {}",
        counters.rollovers, counters.rebuilds, counters.rectangles_closed
    ));
    finish_structure(cfg, &p, &mut out)?;
    Ok(out)
}

fn exp_roll_cost(cfg: &RunConfig) -> Result<Outcome> {
    let u0 = cfg.u0.unwrap_or(4096);
    let mut p = start_structure(cfg, u0)?;
    let n = cfg.ops.unwrap_or(8 * p.u());
    let mut w = Workload::new(WorkloadKind::RandWrite, n, u0, cfg.seed);
    w.width = cfg.width;
    w.history = p.version();
    let ops = gen_workload(&w)?;
    let caches = cfg.caches(&DEFAULT_BLOCKS)?;
    let mut meter = Meter::new(&caches, cfg.exec);
    let mut rolls = 0u64;
    let mut copied = 0u64;
    let mut roll_u = p.u();
    for &op in &ops {
        let u = p.u();
        let v = p.version();
        if v > 0 && v % u == 0 && p.directory().len() as u64 * u == v {
            p.arena_mut().take_trace();
            p.arena_mut().set_tracing(true);
            p.roll_top_tree()?;
            p.arena_mut().set_tracing(false);
            meter.drain(p.arena_mut());
            rolls += 1;
            copied += p.directory()[p.directory().len() - 2].nodes.unwrap_or(0);
            roll_u = u;
        }
        crate::driver::apply(&mut p, op)?;
        if cfg.check == CheckMode::EveryOp {
            p.check_invariants()
                .map_err(|detail| BenchError::Invariant { op: p.version(), detail })?;
        }
    }
    let stats = meter.finish();
    let mut out = Outcome::default();
    let eps = cfg.epsilon;
    let mut points = Vec::new();
    for (c, s) in caches.iter().zip(&stats) {
        let per_roll = s.misses as f64 / rolls.max(1) as f64;
        let basis = roll_u as f64 * log2(roll_u) / block_power(c.block, eps);
        points.push((per_roll, basis));
        out.rows.push(ExperimentRow {
            op_class: OpClass::Maint.name().into(),
            accesses: s.accesses,
            misses: s.misses,
            arena_words: p.arena().size(),
            extra: Extra::new()
                .int("rollovers", rolls)
                .int("nodes_copied", copied)
                .float("per_rollover", per_roll)
                .float("basis", basis)
                .float("c", per_roll / basis)
                .finish(),
            ..row(cfg, roll_u, p.version(), Some(c))
        });
    }
    if rolls > 0 {
        let c = envelope(&points);
        out.checks.push(Check::at_most("rollover constant", c, LIMIT_ROLL_C));
        if cfg.is_reference() {
            out.checks.push(Check::at_most(
                "rollover constant (frozen)",
                c,
                frozen::HEADROOM * frozen::ROLL_C,
            ));
        }
        out.notes.push(format!("{rolls} rollovers, {copied} nodes copied, C = {c:.4}"));
    } else {
        out.notes.push("no rollover happened; raise --ops".into());
    }
    finish_structure(cfg, &p, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert!(matches!("exp_nope".parse::<Experiment>(), Err(BenchError::UnknownExperiment(_))));
    }

    #[test]
    fn cache_cross_product_skips_small_memories() {
        let mut cfg = RunConfig::new(Experiment::ReadScan);
        assert_eq!(cfg.caches(&[16, 64]).unwrap().len(), 2);
        cfg.blocks = Some(vec![16, 256]);
        cfg.memories = Some(vec![128, 1024]);
        let c = cfg.caches(&DEFAULT_BLOCKS).unwrap();
        assert_eq!(c.len(), 3);
        cfg.memories = Some(vec![8]);
        assert!(cfg.caches(&DEFAULT_BLOCKS).is_err());
    }

    #[test]
    fn reference_detection() {
        let mut cfg = RunConfig::new(Experiment::Space);
        assert!(cfg.is_reference());
        cfg.wallclock = true;
        cfg.exec = Exec::Sequential;
        assert!(cfg.is_reference());
        cfg.ops = Some(10);
        assert!(!cfg.is_reference());
    }

    #[test]
    fn small_layout_census() {
        let c = layout_census(Epsilon::HALF, 8, 4, Exec::Sequential).unwrap();
        assert_eq!(c.nodes, vec![1, 3, 7, 15]);
        assert_eq!(c.root_family.last(), c.node_family.last());
        assert_eq!(c.node_family[0], 1);
    }

    #[test]
    fn read_scan_small() {
        let mut cfg = RunConfig::new(Experiment::ReadScan);
        cfg.u0 = Some(64);
        cfg.blocks = Some(vec![8]);
        let out = run_experiment(&cfg).unwrap();
        assert!(out.passed(), "{:?}", out.checks);
        assert_eq!(out.rows.len(), 1);
        assert_eq!(out.rows[0].accesses, 64);
    }
}
