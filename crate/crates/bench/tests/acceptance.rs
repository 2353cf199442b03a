//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use chronoarray::cachesim::{sim_lru, sim_opt};
use chronoarray::{AccessEvent, AccessKind, CacheConfig, History, OpClass, PersistentArray, Policy};
use chronobench::{run_experiment, CheckMode, Experiment, Outcome, RunConfig, WorkloadKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion = (&'static str, Box<dyn FnOnce() -> Verdict>);

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict { pass, detail: detail.into() }
    }
}

/// Folds the named checks of an outcome into one verdict. Every prefix must
/// match at least one check.
fn from_checks(out: &Outcome, prefixes: &[&str]) -> Verdict {
    let mut failed = Vec::new();
    let mut seen = 0;
    for c in &out.checks {
        if prefixes.iter().any(|p| c.name.starts_with(p)) {
            seen += 1;
            if !c.pass {
                failed.push(format!("{} ({})", c.name, c.detail));
            }
        }
    }
    let missing: Vec<_> = prefixes
        .iter()
        .filter(|p| !out.checks.iter().any(|c| c.name.starts_with(*p)))
        .collect();
    if !missing.is_empty() {
        return Verdict::new(false, format!("missing checks {missing:?}"));
    }
    if failed.is_empty() {
        Verdict::new(true, format!("{seen} checks"))
    } else {
        Verdict::new(false, failed.join("; "))
    }
}

fn run(cfg: RunConfig, prefixes: &[&str]) -> Verdict {
    match run_experiment(&cfg) {
        Ok(out) => from_checks(&out, prefixes),
        Err(e) => Verdict::new(false, format!("error: {e}")),
    }
}

fn oracle_equivalence() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce);
    let mut p = PersistentArray::new(2).expect("construct");
    let mut h = History::new();
    for _ in 0..20_000 {
        let col = rng.random_range(0..2048);
        let x = rng.random_range(0..1 << 40);
        if p.write(col, x).expect("write") != h.write(col, x) {
            return Verdict::new(false, "version numbers diverged");
        }
    }
    let rolls = p.counters().rollovers;
    let rebuilds = p.counters().rebuilds;
    let mut wrong = 0u64;
    for _ in 0..50_000 {
        let v = rng.random_range(0..=h.version());
        let i = rng.random_range(0..p.u());
        if p.persistent_read(v, i).expect("pread") != h.pread(v, i).expect("oracle") {
            wrong += 1;
        }
    }

    let mut small_queries = 0u64;
    for seed in 0..8u64 {
        for u0 in [2, 4, 8, 16] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut p = PersistentArray::new(u0).expect("construct");
            let mut h = History::new();
            for _ in 0..64 {
                let col = rng.random_range(0..16);
                let x = rng.random_range(0..1000);
                p.write(col, x).expect("write");
                h.write(col, x);
                for v in 0..=h.version() {
                    for i in 0..p.u() {
                        small_queries += 1;
                        if p.persistent_read(v, i).expect("pread") != h.pread(v, i).expect("oracle") {
                            wrong += 1;
                        }
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Verdict::new(
        wrong == 0 && rolls >= 8 && rebuilds >= 2 && secs < 60.0,
        format!(
            "{wrong} mismatches over 50000 + {small_queries} queries, {rolls} rollovers, {rebuilds} rebuilds, {secs:.1} s"
        ),
    )
}

fn invariants_every_op() -> Verdict {
    let mut cfg = RunConfig::new(Experiment::WriteRandom);
    cfg.workload = Some(WorkloadKind::Mixed);
    cfg.ops = Some(2000);
    cfg.u0 = Some(2);
    cfg.width = Some(256);
    cfg.check = CheckMode::EveryOp;
    run(cfg, &["invariants"])
}

fn unique_vs_random() -> Verdict {
    let fit = run(RunConfig::new(Experiment::WriteRandom), &["write constant", "write cost (frozen)"]);
    let unique = run(RunConfig::new(Experiment::WriteUnique), &["unique <= random"]);
    Verdict::new(fit.pass && unique.pass, format!("fit: {}; unique: {}", fit.detail, unique.detail))
}

fn trace(addresses: &[u64]) -> Vec<AccessEvent> {
    addresses
        .iter()
        .map(|&a| AccessEvent::new(AccessKind::Read, a, OpClass::Read))
        .collect()
}

fn cache_known_answers() -> Verdict {
    let scan: Vec<u64> = (0..64).collect();
    let pingpong = [0, 16, 32, 0, 16, 32];
    let lru = |t: &[u64], m| sim_lru(&trace(t), CacheConfig::new(m, 16, Policy::Lru)).misses;
    let opt = |t: &[u64], m| sim_opt(&trace(t), CacheConfig::new(m, 16, Policy::Opt)).misses;
    let known = [
        ("lru scan", lru(&scan, 64), 4),
        ("lru thrash", lru(&[0, 16, 0], 16), 3),
        ("lru pingpong", lru(&pingpong, 32), 6),
        ("opt scan", opt(&scan, 64), 4),
        ("opt pingpong", opt(&pingpong, 32), 4),
        ("opt thrash", opt(&[0, 16, 0], 16), 3),
    ];
    let mut bad: Vec<String> = known
        .iter()
        .filter(|(_, got, want)| got != want)
        .map(|(name, got, want)| format!("{name}: {got} != {want}"))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worse = 0;
    for _ in 0..1000 {
        let b = 1u64 << rng.random_range(0..5);
        let m = b * rng.random_range(1..9);
        let span = rng.random_range(1..512);
        let t: Vec<u64> = (0..rng.random_range(1..400)).map(|_| rng.random_range(0..span)).collect();
        let ev = trace(&t);
        if sim_opt(&ev, CacheConfig::new(m, b, Policy::Opt)).misses > sim_lru(&ev, CacheConfig::new(m, b, Policy::Lru)).misses {
            worse += 1;
        }
    }
    if worse > 0 {
        bad.push(format!("OPT > LRU on {worse} traces"));
    }
    if bad.is_empty() {
        Verdict::new(true, "6 known answers, OPT <= LRU on 1000 traces")
    } else {
        Verdict::new(false, bad.join("; "))
    }
}

fn main() -> ExitCode {
    let criteria: Vec<Criterion> = vec![
        ("oracle equivalence", Box::new(oracle_equivalence)),
        ("structural invariants every op", Box::new(invariants_every_op)),
        (
            "layout block locality",
            Box::new(|| run(RunConfig::new(Experiment::LayoutBlocks), &["layout growth", "layout constant"])),
        ),
        (
            "third-child counts",
            Box::new(|| run(RunConfig::new(Experiment::RebuildCounts), &["third-child counts"])),
        ),
        (
            "space",
            Box::new(|| run(RunConfig::new(Experiment::Space), &["bottom tree nodes", "space constant", "space (frozen)"])),
        ),
        (
            "query footprint",
            Box::new(|| run(RunConfig::new(Experiment::Pscan), &["footprint constant", "footprint scaling"])),
        ),
        (
            "read scan",
            Box::new(|| {
                let mut cfg = RunConfig::new(Experiment::ReadScan);
                cfg.blocks = Some(vec![256]);
                run(cfg, &["read misses B=256 M=16384"])
            }),
        ),
        (
            "persistent read scan",
            Box::new(|| run(RunConfig::new(Experiment::Pscan), &["pscan constant", "pscan misses vs w/4"])),
        ),
        ("write cost and unique writes", Box::new(unique_vs_random)),
        ("cache simulator", Box::new(cache_known_answers)),
    ];

    let mut failures = 0;
    for (n, (title, f)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let v = f();
        let status = if v.pass { "PASS" } else { "FAIL" };
        if !v.pass {
            failures += 1;
        }
        println!(
            "criterion {:>2} {status} {title}: {} [{:.1} s]",
            n + 1,
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{failures} of 10 criteria failed");
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
