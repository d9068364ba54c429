//! The invariant suite with dense real-space oracles, Hardy-Kato sampling and
//! finite-difference gradient checks.

use relstar::check::{run_checks, CheckOptions};

fn main() -> relstar::Result<()> {
    let report = run_checks(&CheckOptions::default())?;
    for r in &report.results {
        println!("{:<22} {} worst {:.3e} (tolerance {:.1e})", r.name, if r.passed { "ok  " } else { "FAIL" }, r.worst, r.tolerance);
    }
    let faulty = run_checks(&CheckOptions { coulomb_scale: 3.0, hardy_kato_points: 16, ..CheckOptions::default() })?;
    for r in faulty.failures() {
        println!("with a scaled Coulomb table: {} fails ({})", r.name, r.detail);
    }
    Ok(())
}
