//! Fourier multipliers on the periodic grid: kinetic symbols, the truncated
//! Coulomb kernel and Parseval.

use relstar::grid::{apply_multiplier, build_multiplier, convolve_coulomb, MultiplierKind, SpectralGrid};
use relstar::states::random_smooth_frame;

fn main() -> relstar::Result<()> {
    let grid = SpectralGrid::new(32, 4.0)?;
    println!("n = {}, L = {}, h = {}, R = {}", grid.n(), grid.box_length(), grid.spacing(), grid.coulomb_radius());

    let u = random_smooth_frame(&grid, 1, 7)?.orbitals()[0].clone();
    let hat = grid.unitary_coefficients(&u);
    let a: f64 = u.iter().map(|v| v.norm_sqr()).sum();
    let b: f64 = hat.iter().map(|v| v.norm_sqr()).sum();
    println!("Parseval: {a:.15} vs {b:.15}");

    for (name, kind) in [
        ("massless", MultiplierKind::KineticMassless),
        ("massive m=1", MultiplierKind::KineticMassive { mass: 1.0 }),
        ("mass gap m=1, beta=8", MultiplierKind::MassGap { mass: 1.0, dilation: 8.0 }),
    ] {
        let t = build_multiplier(&grid, kind)?;
        let ku = apply_multiplier(&grid, &t, &u)?;
        let q: f64 = u.iter().zip(&ku).map(|(x, y)| (x.conj() * y).re).sum();
        println!("<u, K u> for {name}: {q:.6}");
    }

    let centre = grid.len() / 2 + grid.n() / 2 + grid.n() * grid.n() / 2;
    let mut point = vec![0.0; grid.len()];
    point[centre] = 1.0 / grid.cell_volume();
    let v = convolve_coulomb(&grid, &point, grid.coulomb_radius())?;
    for k in [1usize, 2, 4, 8] {
        let i = centre + k;
        let r = grid.spacing() * k as f64;
        println!("point-mass potential at r = {r:.3}: {:.4} (1/r = {:.4})", v[i], 1.0 / r);
    }
    Ok(())
}
