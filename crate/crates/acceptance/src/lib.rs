//! Reporting harness for the acceptance suite in `tests/acceptance.rs`.

use std::io::Write;
use std::time::{Duration, Instant};

use parking_lot::Mutex;

static SERIAL: Mutex<()> = Mutex::new(());

/// Outcome of one criterion: whether it held, and what was measured.
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

/// Runs `check` alone (criteria carry runtime budgets), writes one
/// `PASS`/`FAIL` line straight to stderr so it survives output capture, and
/// panics on failure.
pub fn criterion(name: &str, budget: Duration, check: impl FnOnce() -> Verdict) {
    let _guard = SERIAL.lock();
    let start = Instant::now();
    let verdict = check();
    let elapsed = start.elapsed();
    let in_time = elapsed <= budget;
    let pass = verdict.pass && in_time;
    let line = format!(
        "{} {name}: {} [{:.2}s of {:.0}s{}]\n",
        if pass { "PASS" } else { "FAIL" },
        verdict.detail,
        elapsed.as_secs_f64(),
        budget.as_secs_f64(),
        if in_time { "" } else { ", over budget" },
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "{}", line.trim_end());
}
