use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use chronoarray::{Epsilon, Exec, Policy};
use chronobench::{run_experiment, write_csv, CheckMode, Experiment, RunConfig, WorkloadKind};

/// Runs one experiment on the persistent array and reports cache misses.
#[derive(Parser, Debug)]
#[command(name = "chronobench", version)]
struct Cli {
    /// exp_read_scan, exp_pscan, exp_layout_blocks, exp_write_random,
    /// exp_write_unique, exp_space, exp_rebuild_counts or exp_roll_cost.
    #[arg(long)]
    experiment: Experiment,
    /// Operation stream for exp_write_random.
    #[arg(long)]
    workload: Option<WorkloadKind>,
    #[arg(long)]
    ops: Option<u64>,
    #[arg(long)]
    u0: Option<u64>,
    /// Layout bias, as `p/q` or a decimal.
    #[arg(long, default_value = "1/2")]
    epsilon: Epsilon,
    /// Block sizes in words (node slots for exp_layout_blocks).
    #[arg(long, value_delimiter = ',')]
    block: Option<Vec<u64>>,
    /// Cache sizes in words; defaults to 64 blocks.
    #[arg(long, value_delimiter = ',')]
    memory: Option<Vec<u64>>,
    #[arg(long, default_value = "lru")]
    policy: Policy,
    #[arg(long, default_value_t = chronobench::experiments::DEFAULT_SEED)]
    seed: u64,
    /// Output file; rows go to stdout when absent.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value = "off")]
    check_invariants: CheckMode,
    /// Save the write log here after the run.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Start from the history in this write log instead of generating one.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Column range for generated writes (defaults to u0).
    #[arg(long)]
    width: Option<u64>,
    /// Version queried by exp_pscan (defaults to V/2).
    #[arg(long)]
    at_version: Option<u64>,
    /// Scan widths for exp_pscan.
    #[arg(long, value_delimiter = ',')]
    scan_width: Option<Vec<u64>>,
    /// Run cells on one thread.
    #[arg(long)]
    sequential: bool,
    /// Record elapsed time; off by default so output is byte-reproducible.
    #[arg(long)]
    wallclock: bool,
}

impl Cli {
    fn config(self) -> (RunConfig, Option<PathBuf>) {
        let cfg = RunConfig {
            experiment: self.experiment,
            workload: self.workload,
            ops: self.ops,
            u0: self.u0,
            epsilon: self.epsilon,
            blocks: self.block,
            memories: self.memory,
            policy: self.policy,
            seed: self.seed,
            check: self.check_invariants,
            log: self.log,
            replay: self.replay,
            width: self.width,
            version: self.at_version,
            scan_widths: self.scan_width,
            exec: if self.sequential { Exec::Sequential } else { Exec::Parallel },
            wallclock: self.wallclock,
        };
        (cfg, self.csv)
    }
}

/// Runs the command; rows go to `out` unless `--csv` is given, notes and
/// check lines go to `err`. Returns whether every check passed.
fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> bool {
    let (cfg, csv) = cli.config();
    let outcome = match run_experiment(&cfg) {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return false;
        }
    };
    let written = match &csv {
        Some(path) => chronobench::emit_csv(&outcome.rows, path),
        None => write_csv(&outcome.rows, out),
    };
    if let Err(e) = written {
        let _ = writeln!(err, "error: {e}");
        return false;
    }
    for note in &outcome.notes {
        let _ = writeln!(err, "note: {note}");
    }
    for c in &outcome.checks {
        let _ = writeln!(err, "{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    outcome.passed()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if run(cli, &mut std::io::stdout().lock(), &mut std::io::stderr().lock()) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn invoke(args: &[&str]) -> (bool, String, String) {
        let cli = Cli::try_parse_from(std::iter::once("chronobench").chain(args.iter().copied())).unwrap();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let ok = run(cli, &mut out, &mut err);
        (ok, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn parses_lists_and_modes() {
        let cli = Cli::try_parse_from([
            "chronobench",
            "--experiment",
            "exp_pscan",
            "--block",
            "16,64",
            "--memory=1024,4096",
            "--check-invariants",
            "every-op",
            "--policy",
            "opt",
        ])
        .unwrap();
        let (cfg, csv) = cli.config();
        assert_eq!(cfg.experiment, Experiment::Pscan);
        assert_eq!(cfg.blocks, Some(vec![16, 64]));
        assert_eq!(cfg.memories, Some(vec![1024, 4096]));
        assert_eq!(cfg.check, CheckMode::EveryOp);
        assert_eq!(cfg.policy, Policy::Opt);
        assert!(csv.is_none());
        assert!(!cfg.is_reference());
    }

    #[test]
    fn rejects_bad_arguments() {
        for args in [
            &["--experiment", "exp_nothing"][..],
            &["--experiment", "exp_space", "--check-invariants", "sometimes"],
            &["--experiment", "exp_space", "--policy", "fifo"],
            &["--experiment", "exp_space", "--epsilon", "3/2"],
            &[],
        ] {
            let full = std::iter::once("chronobench").chain(args.iter().copied());
            assert!(Cli::try_parse_from(full).is_err(), "{args:?}");
        }
    }

    #[test]
    fn stdout_csv_is_reproducible() {
        let args = ["--experiment", "exp_write_random", "--u0", "64", "--ops", "500", "--block", "16"];
        let (ok, a, err) = invoke(&args);
        assert!(ok, "{err}");
        assert!(a.starts_with("experiment,"));
        assert!(a.lines().count() > 1);
        let (_, b, _) = invoke(&args);
        assert_eq!(a, b);
        let mut seq = args.to_vec();
        seq.push("--sequential");
        assert_eq!(invoke(&seq).1, a);
    }

    #[test]
    fn replayed_log_gives_the_same_rows() {
        let dir = std::env::temp_dir().join(format!("chronobench-cli-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let log = dir.join("history.log");
        let log = log.to_str().unwrap();
        let common = ["--experiment", "exp_pscan", "--u0", "256", "--ops", "1000", "--scan-width", "64,128"];
        let mut first = common.to_vec();
        first.extend(["--log", log]);
        let (ok, a, err) = invoke(&first);
        assert!(ok, "{err}");
        let mut second = common.to_vec();
        second.extend(["--replay", log]);
        let (ok, b, err) = invoke(&second);
        assert!(ok, "{err}");
        assert_eq!(a, b);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn failed_checks_are_reported() {
        let (ok, _, err) = invoke(&["--experiment", "exp_write_unique", "--u0", "1024", "--block", "64"]);
        assert!(!ok);
        assert!(err.lines().any(|l| l.starts_with("FAIL unique <= random")), "{err}");
    }

    #[test]
    fn runtime_errors_are_reported() {
        let (ok, out, err) = invoke(&["--experiment", "exp_pscan", "--u0", "256", "--ops", "100", "--at-version", "5000"]);
        assert!(!ok);
        assert!(out.is_empty());
        assert!(err.starts_with("error:"), "{err}");
    }
}
