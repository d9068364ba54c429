//! Dilation trajectory of a BCS trial state with non-positive massless
//! energy: the massive energy tends to -m Tr(gamma) without reaching it.

use relstar::analysis::{hfb_scaling_trajectory, trajectory_trial_state, zero_energy_coupling};
use relstar::grid::SpectralGrid;

fn main() -> relstar::Result<()> {
    let grid = SpectralGrid::new(32, 1.0)?;
    let state = trajectory_trial_state(&grid, 0.08, std::f64::consts::FRAC_PI_4)?;
    let kappa = zero_energy_coupling(&state)?;
    let betas: Vec<f64> = (0..=6).map(|k| 2f64.powi(k)).collect();
    let t = hfb_scaling_trajectory(&state, 1.0, kappa, &betas)?;
    println!("lambda = {}, E_0 = {:.6}", t.trace, t.massless_energy);
    for r in &t.rows {
        println!(
            "beta {:>5}: E_m + m lambda = {:>12.6}, beta E_0 = {:>12.6}, Tr(B gamma) = {:.6}, residual {:.1e}",
            r.beta, r.energy_plus_mass, r.scaled_massless, r.mass_gap, r.identity_residual
        );
    }
    if let Some(f) = t.gap_slope {
        println!("mass-gap slope {:.4} (r^2 {:.6})", f.exponent, f.r_squared);
    }
    println!("all rows above -m lambda: {}", t.above_floor);
    Ok(())
}
