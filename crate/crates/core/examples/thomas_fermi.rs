//! The Thomas-Fermi constant tau_c and the large-N comparison of a kappa_N
//! table against it.

use relstar::thomas_fermi::{chandrasekhar_scaling_check, tau_c, TfConfig};

fn main() -> relstar::Result<()> {
    let t = tau_c(&TfConfig::default())?;
    let m = &t.minimizer;
    println!("tau_c = {:.8} (refinement delta {:.2e}, {} iterations)", t.value, t.refinement_delta, m.iterations);
    println!("profile monotone up to {:.2e}", m.monotonicity_violation);
    let support = m.radii.iter().zip(&m.density).filter(|(_, f)| **f > 1e-12 * m.density[0]).map(|(r, _)| *r).fold(0.0, f64::max);
    println!("support radius of the minimizer (unit mass) {support:.4}");

    let table = [(2, 4.6135), (3, 2.6), (4, 1.8)];
    let c = chandrasekhar_scaling_check(&table, t.value)?;
    for r in &c.rows {
        println!("N = {}: kappa^(3/2) N = {:.4}, deviation {:.1}%", r.n, r.scaled, 100.0 * r.deviation);
    }
    println!("trend {:?}", c.trend);
    Ok(())
}
