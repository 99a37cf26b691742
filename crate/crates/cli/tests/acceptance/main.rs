//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any
//! criterion fails.

mod determinism;
mod gradients;
mod invariance;
mod passthrough;
mod qp_oracle;
mod residual;
mod training;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

/// `Ok(detail)` passes, `Err(detail)` fails.
pub type Verdict = Result<String, String>;

struct Report {
    failures: usize,
}

impl Report {
    fn record(&mut self, id: &str, name: &str, verdict: Verdict, seconds: f64) {
        let (tag, detail) = match verdict {
            Ok(d) => ("PASS", d),
            Err(d) => {
                self.failures += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} [{id}] {name}: {detail} ({seconds:.1} s)");
    }

    /// Run `check`, turning a panic into a failure.
    fn run<T>(&mut self, id: &str, name: &str, check: impl FnOnce() -> T) -> Option<T> {
        let started = Instant::now();
        match catch_unwind(AssertUnwindSafe(check)) {
            Ok(v) => Some(v),
            Err(p) => {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panicked".to_string());
                self.record(id, name, Err(format!("panic: {msg}")), started.elapsed().as_secs_f64());
                None
            }
        }
    }

    fn check(&mut self, id: &str, name: &str, check: impl FnOnce() -> Verdict) {
        let started = Instant::now();
        if let Some(v) = self.run(id, name, check) {
            self.record(id, name, v, started.elapsed().as_secs_f64());
        }
    }
}

fn main() {
    let mut report = Report { failures: 0 };

    let started = Instant::now();
    let names = training::NAMES;
    match report.run("1-3", "training", training::train_both) {
        Some(Ok(runs)) => {
            let seconds = started.elapsed().as_secs_f64();
            report.record("1", names[0], training::shielded_is_safe(&runs), seconds);
            report.record("2", names[1], training::unshielded_collides(&runs), seconds);
            report.record("3", names[2], training::shield_helps_early(&runs), seconds);
        }
        Some(Err(e)) => {
            let seconds = started.elapsed().as_secs_f64();
            for (id, name) in ["1", "2", "3"].into_iter().zip(names) {
                report.record(id, name, Err(format!("training failed: {e}")), seconds);
            }
        }
        None => {}
    }

    report.check("4", invariance::NAME, invariance::check);
    report.check("5", qp_oracle::NAME, qp_oracle::check);
    report.check("6", passthrough::NAME, passthrough::check);
    report.check("7", residual::NAME, residual::check);
    report.check("8", gradients::NAME, gradients::check);
    report.check("9", determinism::NAME, determinism::check);

    if report.failures > 0 {
        println!("{} acceptance criteria failed", report.failures);
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
