//! Kinetic, direct, exchange and pairing terms, energies and quotients of
//! trial states.

use relstar::functionals::{gn_quotient, gn_quotient_hfb, hf_energy, hfb_energy, inverse_sqrt_trace, QuotientVariant};
use relstar::grid::SpectralGrid;
use relstar::states::{harmonic_gaussian_frame, random_pairing_state};

fn main() -> relstar::Result<()> {
    let grid = SpectralGrid::new(24, 1.0)?;
    let state = harmonic_gaussian_frame(&grid, 2, 0.045)?;
    let e = hf_energy(&state, 1.0, 2.0)?;
    println!("HF energy at m = 1, kappa = 2: {e:#?}");
    let q = gn_quotient(&state, QuotientVariant::Hf)?;
    println!("HF quotient {:.6} = {:.6} / {:.6}", q.value, q.numerator, q.denominator);
    let d = inverse_sqrt_trace(&state)?;
    println!("Tr((-Delta)^(-1/2) gamma) = {:.6} (zero-mode bias {:.2e})", d.value, d.zero_mode_bias);

    let pairing = random_pairing_state(&grid, 2, 3)?;
    let eh = hfb_energy(&pairing, 1.0, 2.0)?;
    println!("HFB energy: total {:.6}, pairing term {:.6}", eh.total, eh.pairing);
    println!("HFB quotient {:.6}", gn_quotient_hfb(&pairing)?.value);
    Ok(())
}
