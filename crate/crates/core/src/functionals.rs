//! Kinetic, direct, exchange and pairing terms; HF / HFB / reduced energies;
//! Gagliardo-Nirenberg quotients.
//!
//! With coefficients `c_j` (unit l2 sum), cell masses `p = sum occ_j |c_j|^2`
//! and the Coulomb multiplier `K`:
//!
//! * `T  = sum_j occ_j sum_k M(xi_k) |c^_jk|^2` (unitary DFT `c^`),
//! * `V  = ifft(K fft p) / h^3`, `D = sum p V`,
//! * `W_jk = ifft(K fft(c_j conj c_k)) / h^3`,
//!   `X = sum_jk occ_j occ_k sum conj(c_j conj c_k) W_jk`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{build_multiplier, spectral_quadratic_form, MultiplierKind, SpectralGrid};
use crate::states::{DensityField, OrbitalSet, PairingState};
use crate::C64;

pub use crate::thomas_fermi::tf_objective;

/// Relative tolerance separating a vanishing quotient denominator from a
/// small one.
pub const DEGENERACY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub direct: f64,
    pub exchange: f64,
    pub pairing: f64,
    pub total: f64,
    pub kappa: f64,
    pub mass: f64,
}

impl EnergyBreakdown {
    pub fn assemble(kinetic: f64, direct: f64, exchange: f64, pairing: f64, mass: f64, kappa: f64) -> Self {
        let total = kinetic - 0.5 * kappa * (direct - exchange) - 0.5 * kappa * pairing;
        Self { kinetic, direct, exchange, pairing, total, kappa, mass }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum QuotientVariant {
    #[serde(rename = "HF")]
    Hf,
    RelaxedRank,
    #[serde(rename = "HFB")]
    Hfb,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuotientValue {
    pub numerator: f64,
    pub denominator: f64,
    pub value: f64,
    pub variant: QuotientVariant,
}

impl QuotientValue {
    pub fn new(numerator: f64, denominator: f64, variant: QuotientVariant) -> Result<Self> {
        if !(denominator > DEGENERACY_TOLERANCE * numerator.abs().max(f64::MIN_POSITIVE)) {
            return Err(Error::DegenerateDenominator { numerator, denominator });
        }
        Ok(Self { numerator, denominator, value: numerator / denominator, variant })
    }
}

/// `Tr((-Delta)^{-1/2} gamma)` with the dropped zero mode's estimated weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InverseSqrtTrace {
    pub value: f64,
    pub zero_mode_bias: f64,
}

/// Multiplier tables for one grid and mass.
#[derive(Debug, Clone)]
pub(crate) struct Engine {
    pub grid: SpectralGrid,
    pub kinetic: Vec<f64>,
    pub massless: Vec<f64>,
    pub coulomb: Vec<f64>,
}

impl Engine {
    pub fn new(grid: &SpectralGrid, mass: f64) -> Result<Self> {
        let kinetic = build_multiplier(grid, MultiplierKind::KineticMassive { mass })?.values;
        let massless = build_multiplier(grid, MultiplierKind::KineticMassless)?.values;
        let coulomb = build_multiplier(
            grid,
            MultiplierKind::CoulombTruncated { radius: grid.coulomb_radius() },
        )?
        .values;
        Ok(Self { grid: grid.clone(), kinetic, massless, coulomb })
    }

    fn convolve(&self, field: &mut [C64]) {
        let fft = self.grid.fft();
        fft.forward(field);
        for (v, k) in field.iter_mut().zip(&self.coulomb) {
            *v *= *k;
        }
        fft.inverse(field);
    }

    /// Forward transforms, kinetic traces, pair potentials, `D` and `X`.
    pub fn evaluate(&self, orbitals: &[Vec<C64>], occupations: &[f64]) -> MeanField {
        let n = orbitals.len();
        let norm = 1.0 / self.grid.len() as f64;
        let hats: Vec<Vec<C64>> = orbitals
            .par_iter()
            .map(|u| {
                let mut h = u.clone();
                self.grid.fft().forward(&mut h);
                h
            })
            .collect();
        let kinetic_each: Vec<f64> =
            hats.iter().map(|h| spectral_quadratic_form(h, &self.kinetic) * norm).collect();
        let massless_each: Vec<f64> =
            hats.iter().map(|h| spectral_quadratic_form(h, &self.massless) * norm).collect();

        let index: Vec<(usize, usize)> =
            (0..n).flat_map(|j| (j..n).map(move |k| (j, k))).collect();
        let inv_h3 = 1.0 / self.grid.cell_volume();
        let pairs: Vec<Vec<C64>> = index
            .par_iter()
            .map(|&(j, k)| {
                let mut q: Vec<C64> =
                    orbitals[j].iter().zip(&orbitals[k]).map(|(a, b)| a * b.conj()).collect();
                self.convolve(&mut q);
                for v in q.iter_mut() {
                    *v *= inv_h3;
                }
                q
            })
            .collect();

        let mut potential = vec![0.0; self.grid.len()];
        for j in 0..n {
            let w = &pairs[tri(n, j, j)];
            for (v, x) in potential.iter_mut().zip(w) {
                *v += occupations[j] * x.re;
            }
        }
        let mut direct = 0.0;
        for (j, u) in orbitals.iter().enumerate() {
            direct += occupations[j] * u.iter().zip(&potential).map(|(c, v)| c.norm_sqr() * v).sum::<f64>();
        }
        let mut exchange = 0.0;
        for &(j, k) in &index {
            let w = &pairs[tri(n, j, k)];
            let s: f64 = orbitals[j]
                .iter()
                .zip(&orbitals[k])
                .zip(w)
                .map(|((a, b), x)| ((a * b.conj()).conj() * x).re)
                .sum();
            let weight = if j == k { 1.0 } else { 2.0 };
            exchange += weight * occupations[j] * occupations[k] * s;
        }
        let kinetic = dot(occupations, &kinetic_each);
        let kinetic_massless = dot(occupations, &massless_each);
        MeanField {
            n,
            hats,
            kinetic_each,
            massless_each,
            kinetic,
            kinetic_massless,
            direct,
            exchange,
            potential,
            pairs,
        }
    }

    /// `ifft(table * hat)`.
    pub fn multiplier_action(&self, hat: &[C64], table: &[f64]) -> Vec<C64> {
        let mut out: Vec<C64> = hat.iter().zip(table).map(|(h, m)| h * m).collect();
        self.grid.fft().inverse(&mut out);
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn tri(n: usize, j: usize, k: usize) -> usize {
    // row-major upper triangle including the diagonal
    j * n - j * (j + 1) / 2 + k
}

/// Everything derived from one set of orbitals.
#[derive(Debug, Clone)]
pub(crate) struct MeanField {
    n: usize,
    pub hats: Vec<Vec<C64>>,
    pub kinetic_each: Vec<f64>,
    pub massless_each: Vec<f64>,
    pub kinetic: f64,
    pub kinetic_massless: f64,
    pub direct: f64,
    pub exchange: f64,
    pub potential: Vec<f64>,
    pairs: Vec<Vec<C64>>,
}

impl MeanField {
    /// `W_jk(x) = (Coulomb * (c_j conj c_k))(x) / h^3` at one point.
    #[inline]
    fn w(&self, j: usize, k: usize, x: usize) -> C64 {
        if j <= k {
            self.pairs[tri(self.n, j, k)][x]
        } else {
            self.pairs[tri(self.n, k, j)][x].conj()
        }
    }

    /// `(K c)_j = sum_k occ_k c_k W_jk`.
    pub fn exchange_action(&self, j: usize, orbitals: &[Vec<C64>], occupations: &[f64]) -> Vec<C64> {
        let len = orbitals[j].len();
        let mut out = vec![C64::new(0.0, 0.0); len];
        for (k, u) in orbitals.iter().enumerate() {
            let o = occupations[k];
            if o == 0.0 {
                continue;
            }
            for x in 0..len {
                out[x] += u[x] * self.w(j, k, x) * o;
            }
        }
        out
    }

    /// `M_kl = J(a_k conj a_l, b_k conj b_l) - J(a_k conj b_l, b_k conj a_l)`
    /// with `a_k = u_{2k}`, `b_k = u_{2k+1}`.
    fn pairing_matrix(&self, orbitals: &[Vec<C64>]) -> Vec<f64> {
        let k = self.n / 2;
        let len = orbitals[0].len();
        let mut m = vec![0.0; k * k];
        for p in 0..k {
            for q in 0..k {
                let (ap, bp, aq, bq) = (2 * p, 2 * p + 1, 2 * q, 2 * q + 1);
                let mut s = C64::new(0.0, 0.0);
                for x in 0..len {
                    s += orbitals[ap][x] * orbitals[aq][x].conj() * self.w(bp, bq, x);
                    s -= orbitals[ap][x] * orbitals[bq][x].conj() * self.w(bp, aq, x);
                }
                m[p * k + q] = s.re;
            }
        }
        m
    }

    /// `X(alpha) = 2 sum_kl c_k c_l M_kl`.
    pub fn pairing(&self, orbitals: &[Vec<C64>], amplitudes: &[f64]) -> f64 {
        if amplitudes.iter().all(|&c| c == 0.0) {
            return 0.0;
        }
        let k = amplitudes.len();
        let m = self.pairing_matrix(orbitals);
        let mut s = 0.0;
        for p in 0..k {
            for q in 0..k {
                s += amplitudes[p] * amplitudes[q] * m[p * k + q];
            }
        }
        2.0 * s
    }

    /// `dX(alpha)/dc_k` for each pair amplitude.
    pub fn pairing_amplitude_gradient(&self, orbitals: &[Vec<C64>], amplitudes: &[f64]) -> Vec<f64> {
        let k = amplitudes.len();
        let m = self.pairing_matrix(orbitals);
        (0..k)
            .map(|p| 2.0 * (0..k).map(|q| amplitudes[q] * (m[p * k + q] + m[q * k + p])).sum::<f64>())
            .collect()
    }

    /// Wirtinger gradient of `X(alpha)` with respect to every orbital.
    pub fn pairing_orbital_gradient(&self, orbitals: &[Vec<C64>], amplitudes: &[f64]) -> Vec<Vec<C64>> {
        let len = orbitals[0].len();
        let k = amplitudes.len();
        let mut out = vec![vec![C64::new(0.0, 0.0); len]; self.n];
        for p in 0..k {
            let (ap, bp) = (2 * p, 2 * p + 1);
            for q in 0..k {
                let c = 2.0 * amplitudes[p] * amplitudes[q];
                if c == 0.0 {
                    continue;
                }
                let (aq, bq) = (2 * q, 2 * q + 1);
                for x in 0..len {
                    let ga = orbitals[aq][x] * self.w(bq, bp, x) - orbitals[bq][x] * self.w(aq, bp, x);
                    let gb = orbitals[aq][x] * self.w(bq, ap, x) - orbitals[bq][x] * self.w(aq, ap, x);
                    out[ap][x] += ga * c;
                    out[bp][x] -= gb * c;
                }
            }
        }
        out
    }
}

pub fn kinetic_trace(state: &OrbitalSet, kind: MultiplierKind) -> Result<f64> {
    let table = build_multiplier(state.grid(), kind)?.values;
    let norm = 1.0 / state.grid().len() as f64;
    let mut total = 0.0;
    for (u, &o) in state.orbitals().iter().zip(state.occupations()) {
        let mut h = u.clone();
        state.grid().fft().forward(&mut h);
        total += o * spectral_quadratic_form(&h, &table) * norm;
    }
    Ok(total)
}

/// `D(rho_1, rho_2)` for physical densities on `grid`.
pub fn direct_term(grid: &SpectralGrid, rho_1: &[f64], rho_2: &[f64]) -> Result<f64> {
    if rho_1.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), found: rho_1.len() });
    }
    let v = crate::grid::convolve_coulomb(grid, rho_2, grid.coulomb_radius())?;
    Ok(rho_1.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() * grid.cell_volume())
}

pub fn direct_term_of(state: &OrbitalSet) -> f64 {
    let d: DensityField = state.density();
    direct_term(state.grid(), &d.values, &d.values).expect("density matches its grid")
}

pub fn exchange_term(state: &OrbitalSet) -> Result<f64> {
    let engine = Engine::new(state.grid(), 0.0)?;
    Ok(engine.evaluate(state.orbitals(), state.occupations()).exchange)
}

pub fn pairing_term(state: &PairingState) -> Result<f64> {
    let cert = crate::states::check_admissibility(state);
    if !cert.ok {
        return Err(Error::Inadmissible(cert.max_violation));
    }
    let engine = Engine::new(state.grid(), 0.0)?;
    let base = state.base();
    let mf = engine.evaluate(base.orbitals(), base.occupations());
    Ok(mf.pairing(base.orbitals(), &state.amplitudes()))
}

fn check_couplings(mass: f64, kappa: f64) -> Result<()> {
    if !(mass >= 0.0 && mass.is_finite()) {
        return Err(Error::InvalidParameter(format!("mass must be nonnegative, got {mass}")));
    }
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidParameter(format!("coupling must be nonnegative, got {kappa}")));
    }
    Ok(())
}

pub fn hf_energy(state: &OrbitalSet, mass: f64, kappa: f64) -> Result<EnergyBreakdown> {
    check_couplings(mass, kappa)?;
    let engine = Engine::new(state.grid(), mass)?;
    let mf = engine.evaluate(state.orbitals(), state.occupations());
    Ok(EnergyBreakdown::assemble(mf.kinetic, mf.direct, mf.exchange, 0.0, mass, kappa))
}

pub fn hfb_energy(state: &PairingState, mass: f64, kappa: f64) -> Result<EnergyBreakdown> {
    check_couplings(mass, kappa)?;
    let cert = crate::states::check_admissibility(state);
    if !cert.ok {
        return Err(Error::Inadmissible(cert.max_violation));
    }
    let engine = Engine::new(state.grid(), mass)?;
    let base = state.base();
    let mf = engine.evaluate(base.orbitals(), base.occupations());
    let pairing = mf.pairing(base.orbitals(), &state.amplitudes());
    Ok(EnergyBreakdown::assemble(mf.kinetic, mf.direct, mf.exchange, pairing, mass, kappa))
}

/// `Tr(sqrt(-Delta) gamma) - (kappa/2) D`.
pub fn reduced_energy(state: &OrbitalSet, kappa: f64) -> Result<f64> {
    check_couplings(0.0, kappa)?;
    let engine = Engine::new(state.grid(), 0.0)?;
    let mf = engine.evaluate(state.orbitals(), state.occupations());
    Ok(mf.kinetic_massless - 0.5 * kappa * mf.direct)
}

pub fn gn_quotient(state: &OrbitalSet, variant: QuotientVariant) -> Result<QuotientValue> {
    let engine = Engine::new(state.grid(), 0.0)?;
    let mf = engine.evaluate(state.orbitals(), state.occupations());
    let scale = match variant {
        QuotientVariant::Hf => 1.0,
        QuotientVariant::RelaxedRank => state.operator_norm(),
        QuotientVariant::Hfb => {
            return Err(Error::InvalidParameter(
                "the HFB quotient needs a pairing state; use gn_quotient_hfb".into(),
            ))
        }
    };
    QuotientValue::new(2.0 * scale * mf.kinetic_massless, mf.direct - mf.exchange, variant)
}

pub fn gn_quotient_hfb(state: &PairingState) -> Result<QuotientValue> {
    let engine = Engine::new(state.grid(), 0.0)?;
    let base = state.base();
    let mf = engine.evaluate(base.orbitals(), base.occupations());
    let pairing = mf.pairing(base.orbitals(), &state.amplitudes());
    QuotientValue::new(2.0 * mf.kinetic_massless, mf.direct - mf.exchange + pairing, QuotientVariant::Hfb)
}

pub fn inverse_sqrt_trace(state: &OrbitalSet) -> Result<InverseSqrtTrace> {
    let grid = state.grid();
    let table = build_multiplier(grid, MultiplierKind::InverseSqrtLaplacian)?.values;
    let norm = 1.0 / grid.len() as f64;
    let mut value = 0.0;
    let mut zero = 0.0;
    for (u, &o) in state.orbitals().iter().zip(state.occupations()) {
        let mut h = u.clone();
        grid.fft().forward(&mut h);
        value += o * spectral_quadratic_form(&h, &table) * norm;
        zero += o * h[0].norm_sqr() * norm;
    }
    // 1/|xi| integrated over the ball of the zero cell's volume
    let bias = (3.0 / (4.0 * std::f64::consts::PI)).powf(2.0 / 3.0) * grid.box_length() * zero;
    Ok(InverseSqrtTrace { value, zero_mode_bias: bias })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{random_pairing_state, random_smooth_frame};
    use std::f64::consts::PI;

    #[test]
    fn rank_one_cancellation() {
        let g = SpectralGrid::new(8, 2.0).unwrap();
        let s = random_smooth_frame(&g, 1, 3).unwrap();
        let e = hf_energy(&s, 1.0, 0.7).unwrap();
        assert!((e.direct - e.exchange).abs() <= 1e-13 * e.direct);
        assert!((e.total - e.kinetic).abs() <= 1e-12 * e.kinetic.abs().max(e.direct));
        assert!(matches!(
            gn_quotient(&s, QuotientVariant::Hf),
            Err(Error::DegenerateDenominator { .. })
        ));
    }

    #[test]
    fn exchange_bounded_by_direct() {
        let g = SpectralGrid::new(8, 2.0).unwrap();
        for seed in 0..5 {
            let s = random_smooth_frame(&g, 3, seed).unwrap();
            let e = hf_energy(&s, 0.0, 1.0).unwrap();
            assert!(e.exchange >= 0.0 && e.exchange <= e.direct * (1.0 + 1e-12));
        }
    }

    #[test]
    fn massless_energy_scales_under_dilation() {
        let g = SpectralGrid::new(8, 2.0).unwrap();
        let s = random_pairing_state(&g, 1, 8).unwrap();
        let e = hfb_energy(&s, 0.0, 0.9).unwrap();
        let d = hfb_energy(&s.dilate(3.0).unwrap(), 0.0, 0.9).unwrap();
        for (a, b) in [
            (e.kinetic, d.kinetic),
            (e.direct, d.direct),
            (e.exchange, d.exchange),
            (e.pairing, d.pairing),
            (e.total, d.total),
        ] {
            assert!((3.0 * a - b).abs() <= 1e-12 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn plane_wave_traces() {
        let g = SpectralGrid::new(8, 2.0).unwrap();
        let dk = 2.0 * PI / g.box_length();
        let wave: Vec<C64> = (0..g.len())
            .map(|i| C64::from_polar(1.0 / (g.len() as f64).sqrt(), dk * g.position(i)[0]))
            .collect();
        let s = OrbitalSet::new(g.clone(), vec![wave]).unwrap();
        let t = kinetic_trace(&s, MultiplierKind::KineticMassless).unwrap();
        assert!((t - dk).abs() < 1e-12);
        let inv = inverse_sqrt_trace(&s).unwrap();
        assert!((inv.value - 1.0 / dk).abs() < 1e-12);
        let flat = vec![C64::new(1.0 / (g.len() as f64).sqrt(), 0.0); g.len()];
        let c = OrbitalSet::new(g, vec![flat]).unwrap();
        assert!(kinetic_trace(&c, MultiplierKind::KineticMassless).unwrap().abs() < 1e-14);
    }

    #[test]
    fn theta_zero_pairing_matches_hf() {
        let g = SpectralGrid::new(8, 2.0).unwrap();
        let frame = random_smooth_frame(&g, 2, 1).unwrap();
        let p = PairingState::new(frame.clone(), vec![0.0]).unwrap();
        assert_eq!(pairing_term(&p).unwrap(), 0.0);
        let half = PairingState::new(frame, vec![PI / 2.0]).unwrap();
        let hf = hf_energy(half.base(), 1.0, 0.5).unwrap();
        let hfb = hfb_energy(&half, 1.0, 0.5).unwrap();
        assert!((hf.total - hfb.total).abs() < 1e-12 * hf.total.abs());
    }

    #[test]
    fn quotient_values() {
        let g = SpectralGrid::new(8, 2.0).unwrap();
        let s = random_smooth_frame(&g, 2, 5).unwrap();
        let q = gn_quotient(&s, QuotientVariant::Hf).unwrap();
        let d = gn_quotient(&s.dilate(2.0).unwrap(), QuotientVariant::Hf).unwrap();
        assert!((q.value - d.value).abs() < 1e-12 * q.value);
        assert_eq!(q.value, q.numerator / q.denominator);
        let r = gn_quotient(&s, QuotientVariant::RelaxedRank).unwrap();
        assert_eq!(r.value, q.value);
    }

    #[test]
    fn tri_index_covers_upper_triangle() {
        let n = 5;
        let mut seen = vec![false; n * (n + 1) / 2];
        for j in 0..n {
            for k in j..n {
                let t = tri(n, j, k);
                assert!(!seen[t]);
                seen[t] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }
}
