//! Finite-rank density matrices, orthonormal frames and BCS pairing states.
//!
//! An orbital is stored as its grid coefficients `c` normalized so that
//! `sum |c|^2 = 1`; the physical wavefunction is `c / h^{3/2}`. With this
//! convention inner products are plain sums and a dilation only rescales the
//! grid.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::SpectralGrid;
use crate::C64;

/// Tolerated deviation from orthonormality after public operations.
pub const ORTHONORMALITY_TOLERANCE: f64 = 1e-10;

/// Largest accepted Gram condition number in [`orthonormalize`].
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// `N` orthonormal orbitals with occupations, i.e. `gamma = sum occ_j |u_j><u_j|`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitalSet {
    grid: SpectralGrid,
    orbitals: Vec<Vec<C64>>,
    occupations: Vec<f64>,
    orthonormality_residual: f64,
}

impl OrbitalSet {
    /// Projection state (all occupations 1) from coefficient arrays that are
    /// already orthonormal.
    pub fn new(grid: SpectralGrid, orbitals: Vec<Vec<C64>>) -> Result<Self> {
        let count = orbitals.len();
        Self::with_occupations(grid, orbitals, vec![1.0; count])
    }

    pub fn with_occupations(
        grid: SpectralGrid,
        orbitals: Vec<Vec<C64>>,
        occupations: Vec<f64>,
    ) -> Result<Self> {
        if let Some(bad) = occupations.iter().find(|&&o| !(o > 0.0 && o <= 1.0)) {
            return Err(Error::InvalidParameter(format!("occupation {bad} outside (0, 1]")));
        }
        Self::build(grid, orbitals, occupations)
    }

    pub(crate) fn build(
        grid: SpectralGrid,
        orbitals: Vec<Vec<C64>>,
        occupations: Vec<f64>,
    ) -> Result<Self> {
        if orbitals.is_empty() {
            return Err(Error::InvalidParameter("at least one orbital is required".into()));
        }
        if occupations.len() != orbitals.len() {
            return Err(Error::DimensionMismatch {
                expected: orbitals.len(),
                found: occupations.len(),
            });
        }
        for u in &orbitals {
            grid.check_field(u)?;
        }
        let residual = orthonormality_residual(&orbitals);
        if residual > ORTHONORMALITY_TOLERANCE {
            return Err(Error::Invariant(format!(
                "orbitals are not orthonormal (residual {residual:.3e})"
            )));
        }
        Ok(Self { grid, orbitals, occupations, orthonormality_residual: residual })
    }

    /// Orbitals given as physical wavefunction samples.
    pub fn from_physical(grid: SpectralGrid, fields: Vec<Vec<C64>>) -> Result<Self> {
        let s = grid.cell_volume().sqrt();
        let coeffs = fields.into_iter().map(|f| f.into_iter().map(|v| v * s).collect()).collect();
        Self::new(grid, coeffs)
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn count(&self) -> usize {
        self.orbitals.len()
    }

    pub fn orbitals(&self) -> &[Vec<C64>] {
        &self.orbitals
    }

    pub fn orbital(&self, j: usize) -> Result<&[C64]> {
        self.orbitals
            .get(j)
            .map(|v| v.as_slice())
            .ok_or(Error::IndexOutOfRange { index: j, count: self.count() })
    }

    /// Physical wavefunction samples `c / h^{3/2}`.
    pub fn physical_orbital(&self, j: usize) -> Result<Vec<C64>> {
        let s = 1.0 / self.grid.cell_volume().sqrt();
        Ok(self.orbital(j)?.iter().map(|v| v * s).collect())
    }

    pub fn occupations(&self) -> &[f64] {
        &self.occupations
    }

    pub fn orthonormality_residual(&self) -> f64 {
        self.orthonormality_residual
    }

    /// `Tr gamma`.
    pub fn trace(&self) -> f64 {
        self.occupations.iter().sum()
    }

    /// Operator norm `||gamma||`, the largest occupation.
    pub fn operator_norm(&self) -> f64 {
        self.occupations.iter().cloned().fold(0.0, f64::max)
    }

    pub fn is_projection(&self) -> bool {
        self.occupations.iter().all(|&o| o == 1.0)
    }

    /// Per-cell masses `sum_j occ_j |c_j|^2`, summing to `Tr gamma`.
    pub fn cell_masses(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.grid.len()];
        for (u, &o) in self.orbitals.iter().zip(&self.occupations) {
            for (pi, v) in p.iter_mut().zip(u) {
                *pi += o * v.norm_sqr();
            }
        }
        p
    }

    pub fn density(&self) -> DensityField {
        let p = self.cell_masses();
        let total_mass = p.iter().sum();
        let inv = 1.0 / self.grid.cell_volume();
        DensityField { values: p.into_iter().map(|v| v * inv).collect(), total_mass }
    }

    /// Physical pair density `u_j conj(u_k)`.
    pub fn pair_density(&self, j: usize, k: usize) -> Result<Vec<C64>> {
        let a = self.orbital(j)?;
        let b = self.orbital(k)?;
        let inv = 1.0 / self.grid.cell_volume();
        Ok(a.iter().zip(b).map(|(x, y)| x * y.conj() * inv).collect())
    }

    /// `gamma_beta(x, y) = beta^3 gamma(beta x, beta y)`, realized by shrinking
    /// the box by `beta`.
    pub fn dilate(&self, beta: f64) -> Result<Self> {
        check_dilation(beta)?;
        let mut out = self.clone();
        out.grid = self.grid.with_box_length(self.grid.box_length() / beta)?;
        Ok(out)
    }

    /// Same arrays on a grid of the given box length.
    pub fn relabel(&self, box_length: f64) -> Result<Self> {
        let mut out = self.clone();
        out.grid = self.grid.with_box_length(box_length)?;
        Ok(out)
    }

    /// `v_j = sum_l u_l R_{lj}` for a unitary `R`; `gamma` is unchanged when all
    /// occupations are equal.
    pub fn rotate(&self, r: &DMatrix<C64>) -> Result<Self> {
        let n = self.count();
        if r.nrows() != n || r.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: r.nrows() });
        }
        let orbitals = combine(&self.orbitals, r);
        Self::build(self.grid.clone(), orbitals, self.occupations.clone())
    }

    pub(crate) fn from_parts_unchecked(
        grid: SpectralGrid,
        orbitals: Vec<Vec<C64>>,
        occupations: Vec<f64>,
    ) -> Self {
        let residual = orthonormality_residual(&orbitals);
        Self { grid, orbitals, occupations, orthonormality_residual: residual }
    }

    pub(crate) fn into_parts(self) -> (SpectralGrid, Vec<Vec<C64>>, Vec<f64>) {
        (self.grid, self.orbitals, self.occupations)
    }

    pub(crate) fn set_occupations(&mut self, occupations: Vec<f64>) {
        debug_assert_eq!(occupations.len(), self.count());
        self.occupations = occupations;
    }
}

fn check_dilation(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("dilation must be positive, got {beta}")));
    }
    Ok(())
}

/// Physical density `rho(x) = sum occ_j |u_j(x)|^2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityField {
    pub values: Vec<f64>,
    pub total_mass: f64,
}

pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn gram_matrix(orbitals: &[Vec<C64>]) -> DMatrix<C64> {
    let n = orbitals.len();
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = inner(&orbitals[i], &orbitals[j]);
            s[(i, j)] = v;
            s[(j, i)] = v.conj();
        }
    }
    s
}

pub fn orthonormality_residual(orbitals: &[Vec<C64>]) -> f64 {
    let s = gram_matrix(orbitals);
    let mut worst: f64 = 0.0;
    for i in 0..s.nrows() {
        for j in 0..s.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((s[(i, j)] - target).norm());
        }
    }
    worst
}

/// `out_j = sum_l u_l m_{lj}`.
pub(crate) fn combine(orbitals: &[Vec<C64>], m: &DMatrix<C64>) -> Vec<Vec<C64>> {
    let n = orbitals.len();
    let len = orbitals[0].len();
    (0..m.ncols())
        .map(|j| {
            let mut out = vec![C64::new(0.0, 0.0); len];
            for l in 0..n {
                let c = m[(l, j)];
                if c == C64::new(0.0, 0.0) {
                    continue;
                }
                for (o, v) in out.iter_mut().zip(&orbitals[l]) {
                    *o += v * c;
                }
            }
            out
        })
        .collect()
}

/// `S^{-1/2}` of a Hermitian positive definite Gram matrix.
pub(crate) fn inverse_sqrt(s: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let eig = SymmetricEigen::new(s.clone());
    let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    if !(min > 0.0) || max / min > MAX_GRAM_CONDITION {
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        return Err(Error::RankDeficient { condition });
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::new(1.0 / l.sqrt(), 0.0)));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.adjoint())
}

/// Symmetric orthonormalization of raw coefficient arrays.
pub(crate) fn lowdin(raw: &[Vec<C64>]) -> Result<Vec<Vec<C64>>> {
    let s = gram_matrix(raw);
    let inv = inverse_sqrt(&s)?;
    Ok(combine(raw, &inv))
}

/// Lowdin orthonormalization; the result spans the same subspace.
pub fn orthonormalize(grid: &SpectralGrid, raw: Vec<Vec<C64>>) -> Result<OrbitalSet> {
    if raw.is_empty() {
        return Err(Error::InvalidParameter("at least one orbital is required".into()));
    }
    for u in &raw {
        grid.check_field(u)?;
    }
    let orbitals = lowdin(&raw)?;
    OrbitalSet::new(grid.clone(), orbitals)
}

/// Result of the block-matrix admissibility test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdmissibilityCertificate {
    pub ok: bool,
    pub max_violation: f64,
}

/// Checks `lambda in [0,1]` and `c^2 <= lambda (1 - lambda)` pairwise.
pub fn pair_block_admissibility(lambdas: &[f64], amplitudes: &[f64]) -> AdmissibilityCertificate {
    let mut worst: f64 = 0.0;
    for (&l, &c) in lambdas.iter().zip(amplitudes) {
        worst = worst.max(-l).max(l - 1.0);
        worst = worst.max(c * c - l * (1.0 - l));
    }
    AdmissibilityCertificate { ok: worst <= 1e-12, max_violation: worst.max(0.0) }
}

/// BCS pairing state: orbital pairs `(u_{2k}, u_{2k+1})` with angle `theta_k`,
/// occupations `sin^2 theta_k` and amplitudes `sin theta_k cos theta_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairingState {
    base: OrbitalSet,
    pair_angles: Vec<f64>,
}

impl PairingState {
    /// Orbital occupations of `frame` are replaced by the derived `lambda_k`.
    pub fn new(frame: OrbitalSet, pair_angles: Vec<f64>) -> Result<Self> {
        if frame.count() % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "pairing needs an even number of orbitals, got {}",
                frame.count()
            )));
        }
        if pair_angles.len() * 2 != frame.count() {
            return Err(Error::DimensionMismatch {
                expected: frame.count() / 2,
                found: pair_angles.len(),
            });
        }
        if let Some(bad) =
            pair_angles.iter().find(|&&t| !(0.0..=std::f64::consts::FRAC_PI_2).contains(&t))
        {
            return Err(Error::InvalidParameter(format!("pair angle {bad} outside [0, pi/2]")));
        }
        let mut base = frame;
        base.set_occupations(pair_occupations(&pair_angles));
        Ok(Self { base, pair_angles })
    }

    pub fn base(&self) -> &OrbitalSet {
        &self.base
    }

    pub fn grid(&self) -> &SpectralGrid {
        self.base.grid()
    }

    pub fn pair_count(&self) -> usize {
        self.pair_angles.len()
    }

    pub fn pair_angles(&self) -> &[f64] {
        &self.pair_angles
    }

    /// `lambda_k = sin^2 theta_k`.
    pub fn lambdas(&self) -> Vec<f64> {
        self.pair_angles.iter().map(|t| t.sin().powi(2)).collect()
    }

    /// `c_k = sin theta_k cos theta_k`.
    pub fn amplitudes(&self) -> Vec<f64> {
        self.pair_angles.iter().map(|t| t.sin() * t.cos()).collect()
    }

    /// `Tr(alpha alpha^*) = 2 sum c_k^2`.
    pub fn pairing_trace(&self) -> f64 {
        2.0 * self.amplitudes().iter().map(|c| c * c).sum::<f64>()
    }

    pub fn dilate(&self, beta: f64) -> Result<Self> {
        Ok(Self { base: self.base.dilate(beta)?, pair_angles: self.pair_angles.clone() })
    }

    pub fn relabel(&self, box_length: f64) -> Result<Self> {
        Ok(Self { base: self.base.relabel(box_length)?, pair_angles: self.pair_angles.clone() })
    }

    pub(crate) fn from_parts_unchecked(base: OrbitalSet, pair_angles: Vec<f64>) -> Self {
        let mut base = base;
        base.set_occupations(pair_occupations(&pair_angles));
        Self { base, pair_angles }
    }
}

pub(crate) fn pair_occupations(angles: &[f64]) -> Vec<f64> {
    angles
        .iter()
        .flat_map(|t| {
            let l = t.sin().powi(2);
            [l, l]
        })
        .collect()
}

pub fn check_admissibility(state: &PairingState) -> AdmissibilityCertificate {
    pair_block_admissibility(&state.lambdas(), &state.amplitudes())
}

/// Real-valued harmonic polynomials in ascending degree.
pub fn harmonic_polynomial(index: usize, p: [f64; 3]) -> f64 {
    let [x, y, z] = p;
    let r2 = x * x + y * y + z * z;
    match index {
        0 => 1.0,
        1 => x,
        2 => y,
        3 => z,
        4 => x * y,
        5 => x * z,
        6 => y * z,
        7 => x * x - y * y,
        8 => 3.0 * z * z - r2,
        9 => x * y * z,
        10 => x * (x * x - 3.0 * y * y),
        11 => y * (3.0 * x * x - y * y),
        12 => z * (x * x - y * y),
        13 => x * (5.0 * z * z - r2),
        14 => y * (5.0 * z * z - r2),
        15 => z * (5.0 * z * z - 3.0 * r2),
        _ => panic!("harmonic polynomial index {index} not tabulated"),
    }
}

pub const MAX_HARMONICS: usize = 16;

/// Gaussians of width `width` times the first `count` harmonic polynomials,
/// centred in the box and orthonormalized.
pub fn harmonic_gaussian_frame(grid: &SpectralGrid, count: usize, width: f64) -> Result<OrbitalSet> {
    harmonic_frame_with(grid, count, |_| (width, [0.0; 3]))
}

/// Seeded variant: every orbital gets its own width and centre jitter, and
/// the frame is mixed by a random near-identity matrix.
pub fn seeded_harmonic_frame(
    grid: &SpectralGrid,
    count: usize,
    width: f64,
    seed: u64,
) -> Result<OrbitalSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params: Vec<(f64, [f64; 3])> = (0..count)
        .map(|_| {
            let w = width * rng.gen_range(0.85..1.15);
            let c = [
                rng.gen_range(-0.25..0.25) * width,
                rng.gen_range(-0.25..0.25) * width,
                rng.gen_range(-0.25..0.25) * width,
            ];
            (w, c)
        })
        .collect();
    let frame = harmonic_frame_with(grid, count, |j| params[j])?;
    let mut mix = DMatrix::<C64>::identity(count, count);
    for v in mix.iter_mut() {
        *v += C64::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2));
    }
    let (grid, orbitals, _) = frame.into_parts();
    orthonormalize(&grid, combine(&orbitals, &mix))
}

fn harmonic_frame_with(
    grid: &SpectralGrid,
    count: usize,
    param: impl Fn(usize) -> (f64, [f64; 3]),
) -> Result<OrbitalSet> {
    if count == 0 || count > MAX_HARMONICS {
        return Err(Error::InvalidParameter(format!(
            "frame size must be in 1..={MAX_HARMONICS}, got {count}"
        )));
    }
    let raw: Vec<Vec<C64>> = (0..count)
        .map(|j| {
            let (w, c) = param(j);
            (0..grid.len())
                .map(|i| {
                    let p = grid.position(i);
                    let q = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
                    let r2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2];
                    let poly = harmonic_polynomial(j, [q[0] / w, q[1] / w, q[2] / w]);
                    C64::new(poly * (-0.5 * r2 / (w * w)).exp(), 0.0)
                })
                .collect()
        })
        .collect();
    orthonormalize(grid, raw)
}

/// Random smooth orbitals: a few random Gaussian wave packets each.
pub fn random_smooth_frame(grid: &SpectralGrid, count: usize, seed: u64) -> Result<OrbitalSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = grid.box_length();
    let raw: Vec<Vec<C64>> = (0..count).map(|_| random_packet(grid, &mut rng, l)).collect();
    orthonormalize(grid, raw)
}

pub(crate) fn random_packet(grid: &SpectralGrid, rng: &mut ChaCha8Rng, l: f64) -> Vec<C64> {
    let mut field = vec![C64::new(0.0, 0.0); grid.len()];
    let packets = rng.gen_range(1..=3);
    for _ in 0..packets {
        let w = l * rng.gen_range(0.05..0.15);
        let c = [
            rng.gen_range(-0.15..0.15) * l,
            rng.gen_range(-0.15..0.15) * l,
            rng.gen_range(-0.15..0.15) * l,
        ];
        let k = [
            rng.gen_range(-1.0..1.0) / w,
            rng.gen_range(-1.0..1.0) / w,
            rng.gen_range(-1.0..1.0) / w,
        ];
        let amp = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        for (i, f) in field.iter_mut().enumerate() {
            let p = grid.position(i);
            let q = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
            let r2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2];
            let phase = k[0] * q[0] + k[1] * q[1] + k[2] * q[2];
            *f += amp * C64::from_polar((-0.5 * r2 / (w * w)).exp(), phase);
        }
    }
    field
}

/// Random admissible pairing state with angles in `[0, pi/2]`.
pub fn random_pairing_state(grid: &SpectralGrid, pairs: usize, seed: u64) -> Result<PairingState> {
    let frame = random_smooth_frame(grid, 2 * pairs, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let angles = (0..pairs).map(|_| rng.gen_range(0.0..std::f64::consts::FRAC_PI_2)).collect();
    PairingState::new(frame, angles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn grid8() -> SpectralGrid {
        SpectralGrid::new(8, 2.0).unwrap()
    }

    #[test]
    fn density_mass_equals_trace() {
        let g = grid8();
        let s = random_smooth_frame(&g, 3, 1).unwrap();
        let d = s.density();
        assert!((d.total_mass - 3.0).abs() < 1e-12);
        let integral: f64 = d.values.iter().sum::<f64>() * g.cell_volume();
        assert!((integral - 3.0).abs() < 1e-12);
        assert!(d.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn density_matches_dense_kernel_diagonal() {
        let g = grid8();
        let s = random_smooth_frame(&g, 2, 4).unwrap();
        let u0 = s.physical_orbital(0).unwrap();
        let u1 = s.physical_orbital(1).unwrap();
        let d = s.density();
        for x in 0..g.len() {
            let gamma_xx = u0[x] * u0[x].conj() + u1[x] * u1[x].conj();
            assert!((gamma_xx.re - d.values[x]).abs() <= 1e-12 * d.values[x].max(1e-300));
            assert!(gamma_xx.im.abs() < 1e-14);
        }
    }

    #[test]
    fn pair_density_properties() {
        let g = grid8();
        let s = random_smooth_frame(&g, 2, 9).unwrap();
        let p01 = s.pair_density(0, 1).unwrap();
        let p10 = s.pair_density(1, 0).unwrap();
        for (a, b) in p01.iter().zip(&p10) {
            assert!((a - b.conj()).norm() < 1e-15 * (1.0 + a.norm()));
        }
        let total: C64 = p01.iter().sum::<C64>() * g.cell_volume();
        assert!(total.norm() < 1e-10);
        let p00 = s.pair_density(0, 0).unwrap();
        assert!(p00.iter().all(|v| v.im == 0.0));
        assert!(s.pair_density(0, 2).is_err());
    }

    #[test]
    fn orthonormalize_cases() {
        let g = grid8();
        let s = random_smooth_frame(&g, 3, 2).unwrap();
        assert!(s.orthonormality_residual() < 1e-12);
        let again = orthonormalize(&g, s.orbitals().to_vec()).unwrap();
        for (a, b) in again.orbitals().iter().zip(s.orbitals()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).norm() < 1e-12);
            }
        }
        let u = s.orbitals()[0].clone();
        assert!(matches!(orthonormalize(&g, vec![u.clone(), u]), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn dilation_relabels_only() {
        let g = grid8();
        let s = random_smooth_frame(&g, 2, 3).unwrap();
        assert_eq!(s.dilate(1.0).unwrap(), s);
        let d = s.dilate(2.5).unwrap();
        assert_eq!(d.orbitals(), s.orbitals());
        assert_eq!(d.grid().box_length(), 0.8);
        let twice = s.dilate(2.0).unwrap().dilate(3.0).unwrap();
        assert_eq!(twice.grid().box_length(), s.dilate(6.0).unwrap().grid().box_length());
        assert!(s.dilate(0.0).is_err());
        assert!(s.dilate(-1.0).is_err());
    }

    #[test]
    fn admissibility_examples() {
        let g = grid8();
        let frame = random_smooth_frame(&g, 2, 5).unwrap();
        let vac = PairingState::new(frame.clone(), vec![0.0]).unwrap();
        let c = check_admissibility(&vac);
        assert!(c.ok && c.max_violation == 0.0);
        let half = PairingState::new(frame, vec![FRAC_PI_4]).unwrap();
        assert!((half.lambdas()[0] - 0.5).abs() < 1e-15);
        assert!((half.amplitudes()[0] - 0.5).abs() < 1e-15);
        assert!(check_admissibility(&half).ok);
        let bad = pair_block_admissibility(&[0.5], &[(0.25f64 + 1e-3).sqrt()]);
        assert!(!bad.ok);
        assert!((bad.max_violation - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn pairing_rejects_odd_frames_and_bad_angles() {
        let g = grid8();
        let f3 = random_smooth_frame(&g, 3, 1).unwrap();
        assert!(PairingState::new(f3, vec![0.1]).is_err());
        let f2 = random_smooth_frame(&g, 2, 1).unwrap();
        assert!(PairingState::new(f2, vec![2.0]).is_err());
    }

    #[test]
    fn harmonic_frames_are_orthonormal() {
        let g = SpectralGrid::new(16, 1.0).unwrap();
        for n in 1..=6 {
            let s = harmonic_gaussian_frame(&g, n, 0.08).unwrap();
            assert!(s.orthonormality_residual() < 1e-12);
            let t = seeded_harmonic_frame(&g, n, 0.08, 11).unwrap();
            assert!(t.orthonormality_residual() < 1e-12);
        }
    }
}
