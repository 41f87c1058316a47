//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod closed_loop;
mod expr_oracle;
mod sync_oracle;
mod validation_gate;

use std::any::Any;
use std::panic;
use std::time::Instant;

/// A passing criterion reports a short summary of what it measured.
pub type Outcome = Result<String, String>;

type Criterion = (u32, &'static str, fn() -> Outcome);

fn panic_message(payload: Box<dyn Any + Send>) -> String {
    match payload.downcast::<String>() {
        Ok(s) => *s,
        Err(payload) => payload.downcast::<&str>().map(|s| s.to_string()).unwrap_or_else(|_| "panicked".into()),
    }
}

fn check(number: u32, title: &str, criterion: fn() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = panic::catch_unwind(criterion).unwrap_or_else(|p| Err(panic_message(p)));
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(summary) => {
            println!("criterion {number} {title}: PASS ({summary}; {secs:.2}s)");
            true
        }
        Err(why) => {
            println!("criterion {number} {title}: FAIL ({why}; {secs:.2}s)");
            false
        }
    }
}

fn main() {
    let criteria: [Criterion; 8] = [
        (1, "closed-loop watering", closed_loop::watering),
        (2, "closed-loop lighting", closed_loop::lighting),
        (3, "hot rule swap", closed_loop::hot_swap),
        (4, "sync convergence oracle", sync_oracle::convergence),
        (5, "echo suppression", closed_loop::echo_suppression),
        (6, "expression evaluator oracle", expr_oracle::evaluator),
        (7, "fertility notification", closed_loop::fertility),
        (8, "validation gate", validation_gate::gate),
    ];
    let mut failed = 0;
    for (number, title, criterion) in criteria {
        if !check(number, title, criterion) {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
