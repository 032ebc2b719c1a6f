//! Runs every acceptance criterion at its stated tolerance and prints one
//! line per criterion.
//!
//! Criterion 8 asks for a 32-gon plan within 1.001 of the exact distance. The
//! regular 32-gon is the shortest closed 32-gon enclosing a given area and
//! its ratio is √(32 tan(π/32)/π) ≈ 1.00161, so no plan of that shape can
//! pass. The criterion is reported as failing; the run only errors if
//! anything else fails, including the other two parts of criterion 8.

use std::process::{Command, ExitCode};
use std::time::Instant;

use subriemann::verify::{CriterionReport, Scope, Status, Suite};

const SEED: u64 = 7;

fn verify_binary() -> (Vec<u8>, Option<i32>) {
    let out = Command::new(env!("CARGO_BIN_EXE_subriemann"))
        .args(["verify", "--model", "heisenberg-1", "--seed", "7", "--quiet-timestamps"])
        .output()
        .expect("run subriemann verify");
    (out.stdout, out.status.code())
}

fn metric(r: &CriterionReport, key: &str) -> f64 {
    r.checks.iter().find_map(|c| c.metrics.get(key).copied()).unwrap_or(f64::NAN)
}

/// Criterion 8 fails only on the 32-gon ratio, which sits at the polygon bound.
fn only_the_polygon_bound_fails(r: &CriterionReport) -> bool {
    let n32 = metric(r, "ratio_ngon32");
    let bound = (32.0 * (std::f64::consts::PI / 32.0).tan() / std::f64::consts::PI).sqrt();
    metric(r, "ratio_ngon16") <= 1.007 && metric(r, "dh_upper_budget4") <= 4.01 && (n32 - bound).abs() <= 1e-9
}

fn main() -> ExitCode {
    let suite = Suite { scope: Scope::All, seed: SEED };
    let mut unexpected = Vec::new();
    for id in 1..=13u8 {
        let start = Instant::now();
        let mut report = match suite.run(id) {
            Ok(r) => r,
            Err(e) => {
                println!("[FAIL] {id:>2}: error {e}");
                unexpected.push(id);
                continue;
            }
        };
        let mut extra = String::new();
        if id == 13 {
            let (a, code_a) = verify_binary();
            let (b, code_b) = verify_binary();
            let same = !a.is_empty() && a == b && code_a == code_b;
            extra = format!("; cli verify twice: {} ({} bytes, exit {code_a:?})", if same { "identical" } else { "DIFFERENT" }, a.len());
            if !same {
                report.status = Status::Fail;
            }
        }
        println!("{}{extra}  ({:.1}s)", report.summary(), start.elapsed().as_secs_f64());
        for c in report.checks.iter().filter(|c| !c.passed) {
            println!("       {}: {} {:?}", c.model, c.note, c.metrics);
        }
        let known = id == 8 && only_the_polygon_bound_fails(&report);
        if report.status != Status::Pass && !known {
            unexpected.push(id);
        }
        if known {
            println!("       expected: the regular 32-gon ratio is {:.6} > 1.001", metric(&report, "ratio_ngon32"));
        }
    }
    if unexpected.is_empty() {
        println!("acceptance: all criteria pass except 8 (32-gon bound)");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: unexpected failures {unexpected:?}");
        ExitCode::FAILURE
    }
}
