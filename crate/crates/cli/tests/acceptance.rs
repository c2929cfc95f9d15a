//! Acceptance run: every criterion prints its checks and a PASS/FAIL summary line.
//! Runs without the libtest harness so the report is always shown.
//!
//! A few sub-checks are red for reasons documented with the project: the model
//! does not have the stated property at these parameters. They are listed in
//! `KNOWN_RED` and stay red in the printed report. The run requires them to
//! keep failing, so that either a regression or a change in the underlying
//! numbers shows up.

use std::process::ExitCode;

use rankfeedback_cli::verify::{criterion, Check, VerifyOptions};

/// `(criterion, check name prefix)` of sub-checks expected to fail.
const KNOWN_RED: [(u8, &str); 3] = [
    (7, "P non-increasing in gamma"),
    (9, "effective-gamma reduction matches the coupled solver"),
    (9, "PeR and PoR of opposite sign at q=0.9"),
];

fn known_red(c: &Check) -> bool {
    KNOWN_RED.iter().any(|&(n, name)| c.criterion == n && c.name.starts_with(name))
}

/// Returns the problems found for criterion `n`; empty means it behaves as expected.
fn run(n: u8) -> Vec<String> {
    let checks = criterion(n, &VerifyOptions::default());
    if checks.is_empty() {
        return vec![format!("criterion {n} produced no checks")];
    }
    for c in &checks {
        println!("{c}");
    }
    let failed: Vec<&Check> = checks.iter().filter(|c| c.failed()).collect();
    let status = if failed.is_empty() { "PASS" } else { "FAIL" };
    println!("{status} criterion {n}: {} checks, {} failed", checks.len(), failed.len());

    let mut problems: Vec<String> = failed.iter().filter(|c| !known_red(c)).map(|c| c.to_string()).collect();
    for &(_, name) in KNOWN_RED.iter().filter(|(m, _)| *m == n) {
        match checks.iter().find(|c| c.name.starts_with(name)) {
            None => problems.push(format!("criterion {n}: check {name:?} missing")),
            Some(c) if c.pass => problems.push(format!("criterion {n}: {name:?} now passes; update KNOWN_RED")),
            Some(_) => {}
        }
    }
    problems
}

fn main() -> ExitCode {
    let only: Option<u8> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut problems = Vec::new();
    for n in (1..=13).filter(|n| only.map_or(true, |o| o == *n)) {
        problems.extend(run(n));
        println!();
    }
    if problems.is_empty() {
        println!("acceptance: all criteria behave as expected");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} unexpected result(s)", problems.len());
        for p in &problems {
            println!("  {p}");
        }
        ExitCode::FAILURE
    }
}
