//! Runs every acceptance check at its stated tolerance and prints one
//! PASS/FAIL line per check.

use std::io::Write;
use std::process::Command;
use std::time::Instant;

use qnet_cli::acceptance::{self, Outcome, CRITERIA};

const SEED: u64 = 1;

/// Writes straight to stderr so the report shows up without `--nocapture`.
fn report(l: &str) {
    let _ = writeln!(std::io::stderr(), "{l}");
}

fn line(o: &Outcome, secs: f64, within_time: bool) -> String {
    let status = if o.pass && within_time { "PASS" } else { "FAIL" };
    let limit = acceptance::time_limit(o.id).map_or(String::new(), |l| format!(" (limit {l:.0}s)"));
    format!(
        "{status} criterion {:>2} {:<40} checks={:<5} max_error={:.3e} tol={:.0e} time={secs:.2}s{limit}{}",
        o.id,
        o.name,
        o.checks,
        o.max_error,
        o.tolerance,
        if o.note.is_empty() { String::new() } else { format!(" note: {}", o.note) }
    )
}

fn selftest_stdout() -> (Vec<u8>, i32, f64) {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_qnet"))
        .args(["--selftest", "--seed", &SEED.to_string()])
        .output()
        .expect("qnet binary runs");
    (out.stdout, out.status.code().unwrap_or(-1), start.elapsed().as_secs_f64())
}

#[test]
fn acceptance_criteria() {
    let mut lines = Vec::new();
    let mut all = true;
    report("");
    for id in 1..=CRITERIA {
        let t = acceptance::run_timed(id, SEED);
        let secs = t.elapsed.as_secs_f64();
        let within = acceptance::time_limit(id).map_or(true, |l| secs <= l);
        all &= t.outcome.pass && within;
        let l = line(&t.outcome, secs, within);
        report(&l);
        lines.push(l);
    }

    let (a, code_a, secs_a) = selftest_stdout();
    let (b, code_b, secs_b) = selftest_stdout();
    let identical = a == b && !a.is_empty();
    let pass10 = identical && code_a == 0 && code_b == 0;
    all &= pass10;
    let l = format!(
        "{} criterion 10 selftest_reproducible                    bytes={} identical={identical} exit=({code_a},{code_b}) time={:.2}s",
        if pass10 { "PASS" } else { "FAIL" },
        a.len(),
        secs_a + secs_b
    );
    report(&l);
    lines.push(l);

    assert!(all, "acceptance failures:\n{}", lines.iter().filter(|l| l.starts_with("FAIL")).cloned().collect::<Vec<_>>().join("\n"));
}
