//! Runner for the acceptance checks in `tests/acceptance.rs`.
//!
//! Each check returns an [`Outcome`]; [`run`] times it against its limit and
//! prints one `PASS` or `FAIL` line per check plus any indented notes.

use std::time::{Duration, Instant};

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
    pub notes: Vec<String>,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
            notes: Vec::new(),
        }
    }
}

pub struct Check {
    pub name: &'static str,
    pub limit: Duration,
    pub run: fn() -> Outcome,
}

/// Runs every check in order and returns how many failed. A check that
/// passes but overruns its limit counts as failed.
pub fn run(checks: &[Check]) -> usize {
    let mut failed = 0;
    for (i, c) in checks.iter().enumerate() {
        let start = Instant::now();
        let out = (c.run)();
        let elapsed = start.elapsed();
        let pass = out.pass && elapsed <= c.limit;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {}. {}: {} [{:.2}s, limit {}s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            c.name,
            out.detail,
            elapsed.as_secs_f64(),
            c.limit.as_secs()
        );
        for note in &out.notes {
            println!("     {note}");
        }
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    failed
}
