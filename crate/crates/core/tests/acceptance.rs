//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Runs without the libtest harness so the lines are always shown.

use std::process::ExitCode;

use tpxspec::acceptance::Suite;
use tpxspec::Exec;

const SEED: u64 = 20_240_601;

fn main() -> ExitCode {
    let filter: Vec<u8> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .filter(|id| (1..=9).contains(id))
        .collect();
    let suite = Suite::new(SEED, Exec::default());
    let mut failed = 0;
    for id in 1..=9u8 {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let outcome = suite.run(id);
        println!("{outcome}");
        failed += usize::from(!outcome.passed);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        eprintln!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
