//! Concentration of HF minimizers as the coupling approaches kappa_N from
//! below, with square-root rate fits.

use relstar::analysis::{blowup_scan, BlowupConfig};
use relstar::minimizer::{solve_kappa_n, KappaConfig};

fn main() -> relstar::Result<()> {
    let critical = solve_kappa_n(2, &KappaConfig { grid_points: 24, seeds: 1, ..KappaConfig::default() })?;
    let config = BlowupConfig { fractions: vec![0.9, 0.95, 0.98], ..BlowupConfig::default() };
    let scan = blowup_scan(&critical, &config)?;
    println!("kappa_2 = {:.6}, d* = {:.4}", scan.kappa_critical, scan.d_star);
    for r in &scan.rows {
        println!(
            "f {:.3}: epsilon {:.5}, I + mN {:.5}, ratio {:.4}, restarts {}",
            r.fraction, r.epsilon, r.gap, r.ratio, r.restarts
        );
    }
    if let (Some(e), Some(g)) = (scan.epsilon_fit, scan.gap_fit) {
        println!("epsilon exponent {:.4}, gap exponent {:.4}", e.exponent, g.exponent);
    }
    Ok(())
}
