use chronoarray::{History, Options, PersistentArray, VersionedAnswer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn both(u0: u64) -> (PersistentArray, History) {
    (PersistentArray::new(u0).unwrap(), History::new())
}

fn write(p: &mut PersistentArray, h: &mut History, col: u64, x: u64) {
    let a = p.write(col, x).unwrap();
    let b = h.write(col, x);
    assert_eq!(a, b);
}

fn sweep(p: &mut PersistentArray, h: &History) {
    for v in 0..=h.version() {
        for i in 0..p.u() {
            assert_eq!(p.persistent_read(v, i).unwrap(), h.pread(v, i).unwrap(), "v={v} i={i}");
        }
    }
}

#[test]
fn exhaustive_small_widths() {
    for (seed, u0) in [(1, 2), (2, 4), (3, 8), (4, 16), (5, 2), (6, 16)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut p, mut h) = both(u0);
        for _ in 0..64 {
            let col = rng.random_range(0..16);
            write(&mut p, &mut h, col, rng.random_range(0..1000));
            sweep(&mut p, &h);
        }
        assert!(p.u() <= 16);
        p.check_invariants().unwrap();
    }
}

#[test]
fn sampled_at_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut p, mut h) = both(2);
    for _ in 0..6000 {
        let col = rng.random_range(0..512);
        write(&mut p, &mut h, col, rng.random());
    }
    assert!(p.counters().rollovers >= 8, "{:?}", p.counters());
    for _ in 0..20_000 {
        let v = rng.random_range(0..=h.version());
        let i = rng.random_range(0..p.u());
        assert_eq!(p.persistent_read(v, i).unwrap(), h.pread(v, i).unwrap());
    }
    for i in 0..p.u() {
        assert_eq!(p.persistent_read(p.version(), i).unwrap(), p.read(i).unwrap());
    }
    p.check_invariants().unwrap();
}

#[test]
fn past_versions_never_change() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut p = PersistentArray::new(8).unwrap();
    let mut snapshots: Vec<(u64, u64, VersionedAnswer)> = Vec::new();
    for step in 0..400 {
        let col = rng.random_range(0..40);
        p.write(col, step).unwrap();
        let v = rng.random_range(0..p.version());
        let i = rng.random_range(0..p.u());
        snapshots.push((v, i, p.persistent_read(v, i).unwrap()));
        if step % 50 == 49 {
            for &(v, i, a) in &snapshots {
                assert_eq!(p.persistent_read(v, i).unwrap(), a);
            }
        }
    }
}

#[test]
fn rollover_and_rebuild_preserve_answers() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (mut p, mut h) = both(4);
    for _ in 0..30 {
        let col = rng.random_range(0..4);
        write(&mut p, &mut h, col, rng.random_range(0..50));
    }
    let before: Vec<_> = (0..=h.version())
        .flat_map(|v| (0..4).map(move |i| (v, i)))
        .map(|(v, i)| p.persistent_read(v, i).unwrap())
        .collect();

    p.roll_top_tree().unwrap();
    p.rebuild(37).unwrap();
    assert_eq!(p.u(), 64);
    assert_eq!(p.version(), h.version());
    let after: Vec<_> = (0..=h.version())
        .flat_map(|v| (0..4).map(move |i| (v, i)))
        .map(|(v, i)| p.persistent_read(v, i).unwrap())
        .collect();
    assert_eq!(before, after);
    p.check_invariants().unwrap();
    sweep(&mut p, &h);
}

#[test]
fn directory_tiles_the_versions() {
    let mut p = PersistentArray::new(16).unwrap();
    for k in 0..100 {
        p.write(k % 16, k).unwrap();
    }
    let dir = p.directory();
    assert_eq!(dir.len(), 7);
    for (j, t) in dir.iter().enumerate() {
        assert_eq!(t.first_row, j as u64 * 16 + 1);
    }
    assert!(dir[..6].iter().all(|t| t.nodes.is_some()));
    assert!(dir[6].nodes.is_none());
}

#[test]
fn saved_log_replays_to_the_same_arena() {
    let dir = std::env::temp_dir().join(format!("chronoarray-log-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("writes.log");
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut p = PersistentArray::new(2).unwrap();
    for _ in 0..700 {
        p.write(rng.random_range(0..100), rng.random_range(0..1 << 40)).unwrap();
    }
    p.save_log(&path).unwrap();
    let q = PersistentArray::load_log(&path, Options::default()).unwrap();
    assert_eq!(q.u(), p.u());
    assert_eq!(q.version(), p.version());
    assert_eq!(q.arena().dump(), p.arena().dump());
    assert_eq!(q.arena().regions(), p.arena().regions());

    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replacen("1 ", "2 ", 1)).unwrap();
    assert!(PersistentArray::load_log(&path, Options::default()).is_err());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn future_versions_are_errors() {
    let mut p = PersistentArray::new(4).unwrap();
    p.write(1, 5).unwrap();
    assert!(p.persistent_read(2, 1).is_err());
    assert_eq!(p.persistent_read(0, 1).unwrap(), VersionedAnswer::Unwritten);
}
