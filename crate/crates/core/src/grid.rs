//! Periodic cubic grid and Fourier-multiplier operators.
//!
//! Fields are stored row-major with `x` fastest: the value at cell
//! `(ix, iy, iz)` lives at `ix + n * (iy + n * iz)`. Frequency tables use the
//! same layout in FFT order, so axis index `i` carries the integer frequency
//! `i` for `i < n/2` and `i - n` otherwise (the single Nyquist index `n/2`
//! maps to `-n/2`).
//!
//! Transforms are unnormalized forward / `1/n^3` inverse, which makes
//! `apply_multiplier` an exact Fourier multiplier on the grid. Energies are
//! computed through the unitary coefficients `fft(c) / n^{3/2}`, so Parseval
//! holds without extra factors.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::C64;

/// Minimal 3-D FFT built from 1-D plans applied axis by axis.
pub struct Fft3 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft3").field("n", &self.n).finish()
    }
}

impl Fft3 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn forward(&self, data: &mut [C64]) {
        self.transform(data, &*self.forward);
    }

    /// Inverse transform including the `1/n^3` factor.
    pub fn inverse(&self, data: &mut [C64]) {
        self.transform(data, &*self.inverse);
        let scale = 1.0 / (self.n * self.n * self.n) as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn transform(&self, data: &mut [C64], plan: &dyn Fft<f64>) {
        let n = self.n;
        let n2 = n * n;
        assert_eq!(data.len(), n2 * n, "field length does not match grid");
        let mut scratch = vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        // x lines are contiguous
        plan.process_with_scratch(data, &mut scratch);

        let mut lines = vec![C64::new(0.0, 0.0); n2];
        // y lines: transpose each z plane
        for z in 0..n {
            let plane = &mut data[z * n2..(z + 1) * n2];
            for y in 0..n {
                for x in 0..n {
                    lines[x * n + y] = plane[y * n + x];
                }
            }
            plan.process_with_scratch(&mut lines, &mut scratch);
            for y in 0..n {
                for x in 0..n {
                    plane[y * n + x] = lines[x * n + y];
                }
            }
        }
        // z lines: gather per y slab
        for y in 0..n {
            for z in 0..n {
                let row = z * n2 + y * n;
                for x in 0..n {
                    lines[x * n + z] = data[row + x];
                }
            }
            plan.process_with_scratch(&mut lines, &mut scratch);
            for z in 0..n {
                let row = z * n2 + y * n;
                for x in 0..n {
                    data[row + x] = lines[x * n + z];
                }
            }
        }
    }
}

/// Periodic cube `[-L/2, L/2)^3` sampled on `n^3` points.
#[derive(Clone)]
pub struct SpectralGrid {
    n: usize,
    box_length: f64,
    fft: Arc<Fft3>,
}

impl fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralGrid")
            .field("n", &self.n)
            .field("box_length", &self.box_length)
            .finish()
    }
}

impl PartialEq for SpectralGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.box_length == other.box_length
    }
}

impl SpectralGrid {
    pub fn new(n: usize, box_length: f64) -> Result<Self> {
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be even and >= 8, got {n}"
            )));
        }
        check_box_length(box_length)?;
        Ok(Self { n, box_length, fft: Arc::new(Fft3::new(n)) })
    }

    /// Same sampling, different physical size. This is how dilations are
    /// realized: field arrays stay untouched and only the length scale moves.
    pub fn with_box_length(&self, box_length: f64) -> Result<Self> {
        check_box_length(box_length)?;
        Ok(Self { n: self.n, box_length, fft: Arc::clone(&self.fft) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn spacing(&self) -> f64 {
        self.box_length / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn fft(&self) -> &Fft3 {
        &self.fft
    }

    /// Default truncation radius of the Coulomb kernel.
    pub fn coulomb_radius(&self) -> f64 {
        0.5 * self.box_length
    }

    /// Signed integer frequency carried by axis index `i`.
    pub fn frequency_index(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Per-axis angular frequencies `2 pi k / L` in FFT order.
    pub fn frequency_table(&self) -> Vec<f64> {
        let dk = 2.0 * PI / self.box_length;
        (0..self.n).map(|i| dk * self.frequency_index(i) as f64).collect()
    }

    /// `|xi|` for every Fourier index, in storage order.
    pub fn frequency_norms(&self) -> Vec<f64> {
        let freqs = self.frequency_table();
        let n = self.n;
        let mut out = Vec::with_capacity(self.len());
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let (a, b, c) = (freqs[x], freqs[y], freqs[z]);
                    out.push((a * a + b * b + c * c).sqrt());
                }
            }
        }
        out
    }

    /// Cell coordinates relative to the box centre, `(i - n/2) h` per axis.
    pub fn position(&self, index: usize) -> [f64; 3] {
        let n = self.n;
        let h = self.spacing();
        let half = (n / 2) as f64;
        let x = index % n;
        let y = (index / n) % n;
        let z = index / (n * n);
        [(x as f64 - half) * h, (y as f64 - half) * h, (z as f64 - half) * h]
    }

    /// Distance of every cell from the box centre.
    pub fn radii(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let p = self.position(i);
                (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
            })
            .collect()
    }

    pub fn check_field(&self, field: &[C64]) -> Result<()> {
        if field.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), found: field.len() });
        }
        Ok(())
    }

    /// Unitary Fourier coefficients `fft(c) / n^{3/2}`.
    pub fn unitary_coefficients(&self, field: &[C64]) -> Vec<C64> {
        let mut out = field.to_vec();
        self.fft.forward(&mut out);
        let s = 1.0 / (self.len() as f64).sqrt();
        for v in out.iter_mut() {
            *v *= s;
        }
        out
    }
}

fn check_box_length(box_length: f64) -> Result<()> {
    if !(box_length.is_finite() && box_length > 0.0) {
        return Err(Error::InvalidGrid(format!("box length must be positive, got {box_length}")));
    }
    Ok(())
}

/// Which Fourier multiplier to tabulate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MultiplierKind {
    /// `sqrt(|xi|^2 + m^2) - m`
    KineticMassive { mass: f64 },
    /// `|xi|`
    KineticMassless,
    /// `1/|xi|`, zero mode set to 0
    InverseSqrtLaplacian,
    /// Fourier transform of `1_{|x| < R} / |x|`
    CoulombTruncated { radius: f64 },
    /// `m^2 / (sqrt(beta^2 |xi|^2 + m^2) + beta |xi|)`
    MassGap { mass: f64, dilation: f64 },
}

/// Real multiplier table in storage order.
#[derive(Debug, Clone, PartialEq)]
pub struct Multiplier {
    pub values: Vec<f64>,
}

impl Multiplier {
    pub fn ones(grid: &SpectralGrid) -> Self {
        Self { values: vec![1.0; grid.len()] }
    }
}

pub fn multiplier_value(kind: &MultiplierKind, xi: f64) -> f64 {
    match *kind {
        MultiplierKind::KineticMassive { mass } if mass == 0.0 => xi,
        MultiplierKind::KineticMassive { mass } => {
            // sqrt(x^2+m^2) - m without cancellation
            xi * xi / ((xi * xi + mass * mass).sqrt() + mass).max(f64::MIN_POSITIVE)
        }
        MultiplierKind::KineticMassless => xi,
        MultiplierKind::InverseSqrtLaplacian => {
            if xi > 0.0 {
                1.0 / xi
            } else {
                0.0
            }
        }
        MultiplierKind::CoulombTruncated { radius } => {
            if xi > 0.0 {
                let s = (0.5 * xi * radius).sin();
                8.0 * PI * s * s / (xi * xi)
            } else {
                2.0 * PI * radius * radius
            }
        }
        MultiplierKind::MassGap { mass, dilation } => {
            let bx = dilation * xi;
            mass * mass / ((bx * bx + mass * mass).sqrt() + bx)
        }
    }
}

pub fn build_multiplier(grid: &SpectralGrid, kind: MultiplierKind) -> Result<Multiplier> {
    match kind {
        MultiplierKind::KineticMassive { mass } => check_mass(mass)?,
        MultiplierKind::CoulombTruncated { radius } => {
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "truncation radius must be positive, got {radius}"
                )));
            }
            // allow round-off when the radius was derived from L
            if radius > 0.5 * grid.box_length() * (1.0 + 1e-12) {
                return Err(Error::InvalidParameter(format!(
                    "truncation radius {radius} exceeds half the box length {}",
                    0.5 * grid.box_length()
                )));
            }
        }
        MultiplierKind::MassGap { mass, dilation } => {
            if !(mass > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "mass gap requires m > 0, got {mass}"
                )));
            }
            if !(dilation > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "dilation must be positive, got {dilation}"
                )));
            }
        }
        MultiplierKind::KineticMassless | MultiplierKind::InverseSqrtLaplacian => {}
    }
    let values = grid
        .frequency_norms()
        .into_iter()
        .map(|xi| multiplier_value(&kind, xi))
        .collect();
    Ok(Multiplier { values })
}

fn check_mass(mass: f64) -> Result<()> {
    if !(mass >= 0.0 && mass.is_finite()) {
        return Err(Error::InvalidParameter(format!("mass must be nonnegative, got {mass}")));
    }
    Ok(())
}

/// Forward transform, pointwise multiply, inverse transform.
pub fn apply_multiplier(
    grid: &SpectralGrid,
    table: &Multiplier,
    field: &[C64],
) -> Result<Vec<C64>> {
    grid.check_field(field)?;
    if table.values.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), found: table.values.len() });
    }
    let mut out = field.to_vec();
    apply_multiplier_in_place(grid, table, &mut out);
    Ok(out)
}

pub(crate) fn apply_multiplier_in_place(grid: &SpectralGrid, table: &Multiplier, data: &mut [C64]) {
    grid.fft().forward(data);
    for (v, m) in data.iter_mut().zip(&table.values) {
        *v *= *m;
    }
    grid.fft().inverse(data);
}

/// Potential `(|x|^{-1} 1_{|x|<R}) * rho` of a physical density.
pub fn convolve_coulomb(grid: &SpectralGrid, density: &[f64], radius: f64) -> Result<Vec<f64>> {
    if density.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), found: density.len() });
    }
    let table = build_multiplier(grid, MultiplierKind::CoulombTruncated { radius })?;
    let mut work: Vec<C64> = density.iter().map(|&r| C64::new(r, 0.0)).collect();
    apply_multiplier_in_place(grid, &table, &mut work);
    Ok(work.into_iter().map(|v| v.re).collect())
}

/// `<f, M f>` from unitary coefficients: `sum_k M_k |f_k|^2`.
pub(crate) fn spectral_quadratic_form(coeffs: &[C64], table: &[f64]) -> f64 {
    coeffs.iter().zip(table).map(|(c, m)| m * c.norm_sqr()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: &SpectralGrid, seed: u64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..grid.len()).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(SpectralGrid::new(6, 1.0).is_err());
        assert!(SpectralGrid::new(9, 1.0).is_err());
        assert!(SpectralGrid::new(8, 0.0).is_err());
        let g = SpectralGrid::new(8, 2.0).unwrap();
        assert_eq!(g.spacing() * 8.0, 2.0);
    }

    #[test]
    fn frequency_table_is_symmetric_except_nyquist() {
        let g = SpectralGrid::new(12, 3.0).unwrap();
        let f = g.frequency_table();
        assert_eq!(f[0], 0.0);
        assert_eq!(f[6], -2.0 * PI / 3.0 * 6.0);
        for k in 1..6 {
            assert_eq!(f[k], -f[12 - k]);
        }
    }

    #[test]
    fn kinetic_multiplier_values() {
        let v = multiplier_value(&MultiplierKind::KineticMassive { mass: 0.0 }, 1.0);
        assert!((v - 1.0).abs() < 1e-15);
        let v = multiplier_value(&MultiplierKind::KineticMassive { mass: 3.0 }, 4.0);
        assert!((v - 2.0).abs() < 1e-15);
        let g = SpectralGrid::new(8, 5.0).unwrap();
        let a = build_multiplier(&g, MultiplierKind::KineticMassive { mass: 0.0 }).unwrap();
        let b = build_multiplier(&g, MultiplierKind::KineticMassless).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn coulomb_zero_mode_and_radius_check() {
        let g = SpectralGrid::new(8, 4.0).unwrap();
        let t = build_multiplier(&g, MultiplierKind::CoulombTruncated { radius: 1.5 }).unwrap();
        assert!((t.values[0] - 2.0 * PI * 1.5 * 1.5).abs() < 1e-12);
        // small-|xi| limit agrees with the zero mode
        let near = multiplier_value(&MultiplierKind::CoulombTruncated { radius: 1.5 }, 1e-6);
        assert!((near - t.values[0]).abs() / t.values[0] < 1e-9);
        assert!(build_multiplier(&g, MultiplierKind::CoulombTruncated { radius: 2.1 }).is_err());
        assert!(build_multiplier(&g, MultiplierKind::KineticMassive { mass: -1.0 }).is_err());
    }

    #[test]
    fn mass_gap_bounded_and_decaying() {
        let kind = |beta| MultiplierKind::MassGap { mass: 1.0, dilation: beta };
        let mut prev = f64::INFINITY;
        for beta in [1.0, 2.0, 4.0, 16.0, 256.0, 1e6] {
            let v = multiplier_value(&kind(beta), 0.7);
            assert!(v > 0.0 && v <= 1.0);
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn massive_kinetic_decomposition_and_bound() {
        for &m in &[0.1, 1.0, 7.0] {
            for i in 1..200 {
                let xi = 0.05 * i as f64;
                let t = multiplier_value(&MultiplierKind::KineticMassive { mass: m }, xi);
                assert!(t <= xi * xi / (2.0 * m) + 1e-14);
                let b = multiplier_value(&MultiplierKind::MassGap { mass: m, dilation: 1.0 }, xi);
                // T_m = |xi| + B_m - m
                assert!((t - (xi + b - m)).abs() < 1e-12 * (1.0 + xi));
                assert!(b > 0.0 && b <= m);
            }
        }
    }

    #[test]
    fn identity_multiplier_roundtrip() {
        let g = SpectralGrid::new(8, 1.0).unwrap();
        let f = random_field(&g, 1);
        let out = apply_multiplier(&g, &Multiplier::ones(&g), &f).unwrap();
        let dev = f.iter().zip(&out).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(dev < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let g = SpectralGrid::new(8, 1.0).unwrap();
        let err = apply_multiplier(&g, &Multiplier::ones(&g), &vec![C64::new(0.0, 0.0); 10]);
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn plane_wave_is_eigenfunction() {
        let g = SpectralGrid::new(16, 3.0).unwrap();
        let k = [2i64, -1, 3];
        let dk = 2.0 * PI / g.box_length();
        let xi = dk * ((k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64).sqrt();
        let wave: Vec<C64> = (0..g.len())
            .map(|i| {
                let p = g.position(i);
                let phase = dk * (k[0] as f64 * p[0] + k[1] as f64 * p[1] + k[2] as f64 * p[2]);
                C64::from_polar(1.0, phase)
            })
            .collect();
        let t = build_multiplier(&g, MultiplierKind::KineticMassless).unwrap();
        let out = apply_multiplier(&g, &t, &wave).unwrap();
        for (a, b) in wave.iter().zip(&out) {
            assert!((a * xi - b).norm() < 1e-11);
        }
    }

    #[test]
    fn fft_matches_direct_dft() {
        let g = SpectralGrid::new(8, 1.0).unwrap();
        let f = random_field(&g, 7);
        let mut fast = f.clone();
        g.fft().forward(&mut fast);
        let n = 8usize;
        for probe in [0usize, 5, 77, 300, 511] {
            let (kx, ky, kz) = (probe % n, (probe / n) % n, probe / (n * n));
            let mut acc = C64::new(0.0, 0.0);
            for (idx, v) in f.iter().enumerate() {
                let (x, y, z) = (idx % n, (idx / n) % n, idx / (n * n));
                let phase = -2.0 * PI * ((kx * x + ky * y + kz * z) as f64) / n as f64;
                acc += v * C64::from_polar(1.0, phase);
            }
            assert!((acc - fast[probe]).norm() < 1e-10);
        }
    }

    #[test]
    fn parseval_for_massive_kinetic() {
        let g = SpectralGrid::new(8, 2.0).unwrap();
        let f = random_field(&g, 3);
        let m = 0.8;
        let t = build_multiplier(&g, MultiplierKind::KineticMassive { mass: m }).unwrap();
        let tf = apply_multiplier(&g, &t, &f).unwrap();
        let direct: f64 = f.iter().zip(&tf).map(|(a, b)| (a.conj() * b).re).sum::<f64>() / g.len() as f64;
        let coeffs = g.unitary_coefficients(&f);
        let spectral: f64 = coeffs
            .iter()
            .zip(g.frequency_norms())
            .map(|(c, xi)| ((xi * xi + m * m).sqrt() - m) * c.norm_sqr())
            .sum::<f64>()
            / g.len() as f64;
        assert!((direct - spectral).abs() <= 1e-12 * spectral.abs());
    }

    #[test]
    fn multiplier_tables_are_even_and_nonnegative() {
        let g = SpectralGrid::new(8, 2.0).unwrap();
        let n = 8;
        let kinds = [
            MultiplierKind::KineticMassive { mass: 0.5 },
            MultiplierKind::KineticMassless,
            MultiplierKind::InverseSqrtLaplacian,
            MultiplierKind::CoulombTruncated { radius: 1.0 },
            MultiplierKind::MassGap { mass: 1.0, dilation: 3.0 },
        ];
        let neg = |i: usize| (n - i) % n;
        for kind in kinds {
            let t = build_multiplier(&g, kind).unwrap();
            for z in 1..n {
                for y in 1..n {
                    for x in 1..n {
                        if x == n / 2 || y == n / 2 || z == n / 2 {
                            continue;
                        }
                        let a = t.values[x + n * (y + n * z)];
                        let b = t.values[neg(x) + n * (neg(y) + n * neg(z))];
                        assert!(a >= 0.0);
                        assert_eq!(a, b);
                    }
                }
            }
        }
    }

    #[test]
    fn coulomb_of_zero_density_is_zero() {
        let g = SpectralGrid::new(8, 1.0).unwrap();
        let v = convolve_coulomb(&g, &vec![0.0; g.len()], 0.5).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }
}
