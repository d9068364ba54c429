//! Orthonormal frames, densities, dilations, BCS pairing states and
//! checkpoints.

use relstar::checkpoint::Checkpoint;
use relstar::states::{check_admissibility, harmonic_gaussian_frame, random_pairing_state};
use relstar::grid::SpectralGrid;

fn main() -> relstar::Result<()> {
    let grid = SpectralGrid::new(16, 1.0)?;
    let frame = harmonic_gaussian_frame(&grid, 4, 0.1)?;
    println!("orthonormality residual {:.2e}", frame.orthonormality_residual());
    println!("trace {}, projection {}", frame.trace(), frame.is_projection());
    let d = frame.density();
    println!("density mass {:.12}", d.total_mass);

    let dilated = frame.dilate(2.0)?;
    println!("dilation by 2: L {} -> {}", frame.grid().box_length(), dilated.grid().box_length());

    let pairing = random_pairing_state(&grid, 2, 11)?;
    println!("pair angles {:?}", pairing.pair_angles());
    println!("lambdas {:?}", pairing.lambdas());
    println!("amplitudes {:?}", pairing.amplitudes());
    println!("admissible {:?}", check_admissibility(&pairing));

    let dir = std::env::temp_dir().join("relstar_example.rstr");
    Checkpoint::from_pairing(&pairing, 1.0, 0.5).save(&dir)?;
    let back = Checkpoint::load(&dir)?.pairing_state()?;
    println!("checkpoint round trip exact: {}", back == pairing);
    Ok(())
}
