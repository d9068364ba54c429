//! Critical coupling kappa_N with stationarity diagnostics and d_N*.

use relstar::analysis::extract_d_star;
use relstar::minimizer::{solve_kappa_n, KappaConfig};

fn main() -> relstar::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(2);
    let config = KappaConfig { grid_points: 24, seeds: 2, ..KappaConfig::default() };
    let r = solve_kappa_n(n, &config)?;
    println!("kappa_{n} = {:.8} at {}^3 (converged {}, best seed {})", r.kappa, r.grid_points, r.converged, r.best_seed);
    println!("confinement error {:.3e}", r.confinement_error);
    println!("virial residual {:.3e}, Pohozaev residual {:.3e}", r.virial_residual, r.pohozaev_residual);
    println!("eigenvalues {:?} (sum {:.6})", r.eigen.eigenvalues, r.eigen.sum);
    for s in &r.starts {
        println!("  seed {:>2}: kappa {:.8}, iterations {}", s.seed, s.kappa, s.iterations);
    }
    let d = extract_d_star(&r)?;
    println!("d_{n}* = {:.6} (N^2 = {}, bound holds {})", d.value, n * n, d.bound_holds);
    Ok(())
}
