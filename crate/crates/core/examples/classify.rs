//! Existence classification of couplings against a kappa_N table.

use relstar::analysis::{classify_kappa, KappaEntry};

fn main() -> relstar::Result<()> {
    let table = vec![
        KappaEntry { n: 2, kappa: 4.6135, confinement_error: 2e-6 },
        KappaEntry { n: 3, kappa: 2.62, confinement_error: 5e-6 },
        KappaEntry { n: 4, kappa: 1.82, confinement_error: 5e-6 },
    ];
    for kappa in [5.0, 4.6135, 3.0, 2.0] {
        match classify_kappa(kappa, &table) {
            Ok(c) => println!("kappa {kappa}: {:?}, N_HF = {}, margin {:.3e}", c.exists, c.n_hf, c.margin),
            Err(e) => println!("kappa {kappa}: {e}"),
        }
    }
    if let Err(e) = classify_kappa(1.0, &table) {
        println!("kappa 1.0: {e}");
    }
    Ok(())
}
