//! Invariant suite: dense oracles, inequalities, gradients and round trips.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::error::Result;
use crate::functionals::{gn_quotient_hfb, Engine};
use crate::grid::{build_multiplier, MultiplierKind, SpectralGrid};
use crate::minimizer::{objective_gradient, objective_value, Objective};
use crate::states::{check_admissibility, random_pairing_state, random_smooth_frame, OrbitalSet};
use crate::thomas_fermi::{
    default_start, minimize_radial, tf_objective, tf_objective_gradient, RadialGrid, TfConfig,
};
use crate::C64;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckResult {
    fn bounded(name: &str, worst: f64, tolerance: f64, detail: String) -> Self {
        Self { name: name.into(), passed: worst <= tolerance, worst, tolerance, detail }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub results: Vec<CheckResult>,
    pub all_passed: bool,
}

impl CheckReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.results.iter().filter(|r| !r.passed)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOptions {
    pub seed: u64,
    pub hardy_kato_points: usize,
    pub hardy_kato_states: usize,
    pub oracle_states: usize,
    pub gradient_directions: usize,
    pub tf_samples: usize,
    /// Multiplies the Coulomb table used by the Hardy-Kato sampler.
    pub coulomb_scale: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            seed: 2024,
            hardy_kato_points: 32,
            hardy_kato_states: 200,
            oracle_states: 20,
            gradient_directions: 20,
            tf_samples: 100,
            coulomb_scale: 1.0,
        }
    }
}

pub fn run_checks(options: &CheckOptions) -> Result<CheckReport> {
    let results = vec![
        parseval(options)?,
        hardy_kato(options)?,
        dense_kinetic(options)?,
        dense_direct_check(options)?,
        dense_exchange_check(options)?,
        dense_pairing_check(options)?,
        exchange_below_direct(options)?,
        pairing_bound(options)?,
        dilation_covariance(options)?,
        admissibility(options)?,
        gradients(options)?,
        tf_upper_bound(options)?,
        checkpoint_roundtrip(options)?,
    ];
    let all_passed = results.iter().all(|r| r.passed);
    Ok(CheckReport { results, all_passed })
}

fn oracle_grid() -> Result<SpectralGrid> {
    SpectralGrid::new(8, 2.0)
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Real-space kernel `k(d) = n^-3 sum_xi M(xi) e^{i xi d}` by direct summation.
pub fn dense_kernel(grid: &SpectralGrid, table: &[f64]) -> Vec<C64> {
    let n = grid.n();
    let len = grid.len();
    let freq: Vec<[i64; 3]> = (0..len)
        .map(|i| [grid.frequency_index(i % n), grid.frequency_index((i / n) % n), grid.frequency_index(i / (n * n))])
        .collect();
    let w = 2.0 * PI / n as f64;
    (0..len)
        .map(|d| {
            let off = [(d % n) as i64, ((d / n) % n) as i64, (d / (n * n)) as i64];
            let s: C64 = freq
                .iter()
                .zip(table)
                .map(|(f, &m)| {
                    let phase = w * (f[0] * off[0] + f[1] * off[1] + f[2] * off[2]) as f64;
                    C64::from_polar(m, phase)
                })
                .sum();
            s / len as f64
        })
        .collect()
}

fn offset(n: usize, x: usize, y: usize) -> usize {
    let sub = |a: usize, b: usize| (a + n - b) % n;
    let (x0, x1, x2) = (x % n, (x / n) % n, x / (n * n));
    let (y0, y1, y2) = (y % n, (y / n) % n, y / (n * n));
    sub(x0, y0) + n * (sub(x1, y1) + n * sub(x2, y2))
}

/// `sum_xy a(x, y) k(x - y)` over all grid pairs.
fn double_sum(grid: &SpectralGrid, kernel: &[C64], a: impl Fn(usize, usize) -> C64) -> C64 {
    let n = grid.n();
    let len = grid.len();
    let mut s = C64::new(0.0, 0.0);
    for x in 0..len {
        for y in 0..len {
            s += a(x, y) * kernel[offset(n, x, y)];
        }
    }
    s
}

/// `sum_j o_j <c_j, K c_j>` by real-space double sum.
pub fn dense_kinetic_trace(state: &OrbitalSet, kind: MultiplierKind) -> Result<f64> {
    let grid = state.grid();
    let kernel = dense_kernel(grid, &build_multiplier(grid, kind)?.values);
    let mut total = 0.0;
    for (c, &o) in state.orbitals().iter().zip(state.occupations()) {
        total += o * double_sum(grid, &kernel, |x, y| c[x].conj() * c[y]).re;
    }
    Ok(total)
}

fn coulomb_kernel(grid: &SpectralGrid) -> Result<Vec<C64>> {
    let table =
        build_multiplier(grid, MultiplierKind::CoulombTruncated { radius: grid.coulomb_radius() })?.values;
    Ok(dense_kernel(grid, &table))
}

pub fn dense_direct(state: &OrbitalSet) -> Result<f64> {
    let grid = state.grid();
    let kernel = coulomb_kernel(grid)?;
    let p = state.cell_masses();
    Ok(double_sum(grid, &kernel, |x, y| C64::new(p[x] * p[y], 0.0)).re / grid.cell_volume())
}

pub fn dense_exchange(state: &OrbitalSet) -> Result<f64> {
    let grid = state.grid();
    let kernel = coulomb_kernel(grid)?;
    let gamma = |x: usize, y: usize| -> C64 {
        state.orbitals().iter().zip(state.occupations()).map(|(c, &o)| c[x] * c[y].conj() * o).sum()
    };
    Ok(double_sum(grid, &kernel, |x, y| C64::new(gamma(x, y).norm_sqr(), 0.0)).re / grid.cell_volume())
}

/// `sum_xy |alpha(x, y)|^2 k(x - y)` with
/// `alpha = sum_k c_k (a_k (x) b_k - b_k (x) a_k)`.
pub fn dense_pairing(orbitals: &[Vec<C64>], amplitudes: &[f64], grid: &SpectralGrid) -> Result<f64> {
    let kernel = coulomb_kernel(grid)?;
    let alpha = |x: usize, y: usize| -> C64 {
        amplitudes
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let (a, b) = (&orbitals[2 * k], &orbitals[2 * k + 1]);
                (a[x] * b[y] - b[x] * a[y]) * c
            })
            .sum()
    };
    Ok(double_sum(grid, &kernel, |x, y| C64::new(alpha(x, y).norm_sqr(), 0.0)).re / grid.cell_volume())
}

fn random_occupations(rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
    (0..count).map(|_| rng.gen_range(0.2..1.0)).collect()
}

fn random_state(grid: &SpectralGrid, count: usize, seed: u64) -> Result<OrbitalSet> {
    let frame = random_smooth_frame(grid, count, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xacc);
    let occ = random_occupations(&mut rng, count);
    OrbitalSet::with_occupations(grid.clone(), frame.orbitals().to_vec(), occ)
}

fn parseval(options: &CheckOptions) -> Result<CheckResult> {
    let grid = SpectralGrid::new(16, 3.0)?;
    let mut worst: f64 = 0.0;
    for s in 0..options.oracle_states as u64 {
        let state = random_smooth_frame(&grid, 1, options.seed + s)?;
        let c = &state.orbitals()[0];
        let hat = grid.unitary_coefficients(c);
        let a: f64 = c.iter().map(|v| v.norm_sqr()).sum();
        let b: f64 = hat.iter().map(|v| v.norm_sqr()).sum();
        worst = worst.max(relative(a, b));
    }
    Ok(CheckResult::bounded("parseval", worst, 1e-12, "sum |c|^2 against sum |c_hat|^2".into()))
}

/// Samples `<u, V_0 u> / ((pi/2) <u, |xi| u>)` over random smooth states,
/// where `V_0` is the potential of a unit point mass at the box centre.
pub fn hardy_kato_ratios(
    grid: &SpectralGrid,
    coulomb: &[f64],
    states: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = grid.n();
    let centre = (n / 2) * (1 + n + n * n);
    let mut point = vec![C64::new(0.0, 0.0); grid.len()];
    point[centre] = C64::new(1.0, 0.0);
    grid.fft().forward(&mut point);
    for (v, k) in point.iter_mut().zip(coulomb) {
        *v *= *k;
    }
    grid.fft().inverse(&mut point);
    let potential: Vec<f64> = point.iter().map(|v| v.re / grid.cell_volume()).collect();
    let massless = build_multiplier(grid, MultiplierKind::KineticMassless)?.values;
    let engine_norm = 1.0 / grid.len() as f64;
    (0..states as u64)
        .map(|s| {
            let state = random_smooth_frame(grid, 1, seed.wrapping_add(s))?;
            let c = &state.orbitals()[0];
            let lhs: f64 = c.iter().zip(&potential).map(|(v, p)| v.norm_sqr() * p).sum();
            let mut hat = c.clone();
            grid.fft().forward(&mut hat);
            let t: f64 = hat.iter().zip(&massless).map(|(v, m)| v.norm_sqr() * m).sum::<f64>() * engine_norm;
            Ok(lhs / (0.5 * PI * t))
        })
        .collect()
}

fn hardy_kato(options: &CheckOptions) -> Result<CheckResult> {
    let grid = SpectralGrid::new(options.hardy_kato_points, 4.0)?;
    let coulomb: Vec<f64> =
        build_multiplier(&grid, MultiplierKind::CoulombTruncated { radius: grid.coulomb_radius() })?
            .values
            .iter()
            .map(|v| v * options.coulomb_scale)
            .collect();
    let ratios = hardy_kato_ratios(&grid, &coulomb, options.hardy_kato_states, options.seed)?;
    let worst = ratios.iter().cloned().fold(0.0, f64::max);
    let violations = ratios.iter().filter(|&&r| r > 1.0).count();
    Ok(CheckResult::bounded(
        "hardy_kato",
        worst,
        1.0,
        format!("{} states, {} violations", ratios.len(), violations),
    ))
}

fn dense_kinetic(options: &CheckOptions) -> Result<CheckResult> {
    let grid = oracle_grid()?;
    let engine = Engine::new(&grid, 0.7)?;
    let mut worst: f64 = 0.0;
    for s in 0..options.oracle_states as u64 {
        let state = random_state(&grid, 2, options.seed + s)?;
        let mf = engine.evaluate(state.orbitals(), state.occupations());
        worst = worst.max(relative(mf.kinetic, dense_kinetic_trace(&state, MultiplierKind::KineticMassive { mass: 0.7 })?));
        worst = worst.max(relative(mf.kinetic_massless, dense_kinetic_trace(&state, MultiplierKind::KineticMassless)?));
    }
    Ok(CheckResult::bounded("dense_kinetic", worst, 1e-10, "spectral against real-space, 8^3".into()))
}

fn dense_direct_check(options: &CheckOptions) -> Result<CheckResult> {
    let grid = oracle_grid()?;
    let engine = Engine::new(&grid, 0.0)?;
    let mut worst: f64 = 0.0;
    for s in 0..options.oracle_states as u64 {
        let state = random_state(&grid, 2, options.seed + 100 + s)?;
        let mf = engine.evaluate(state.orbitals(), state.occupations());
        worst = worst.max(relative(mf.direct, dense_direct(&state)?));
    }
    Ok(CheckResult::bounded("dense_direct", worst, 1e-10, "spectral against real-space, 8^3".into()))
}

fn dense_exchange_check(options: &CheckOptions) -> Result<CheckResult> {
    let grid = oracle_grid()?;
    let engine = Engine::new(&grid, 0.0)?;
    let mut worst: f64 = 0.0;
    for s in 0..options.oracle_states as u64 {
        let state = random_state(&grid, 2, options.seed + 200 + s)?;
        let mf = engine.evaluate(state.orbitals(), state.occupations());
        worst = worst.max(relative(mf.exchange, dense_exchange(&state)?));
    }
    Ok(CheckResult::bounded("dense_exchange", worst, 1e-10, "spectral against real-space, 8^3".into()))
}

fn dense_pairing_check(options: &CheckOptions) -> Result<CheckResult> {
    let grid = oracle_grid()?;
    let engine = Engine::new(&grid, 0.0)?;
    let mut worst: f64 = 0.0;
    for s in 0..options.oracle_states as u64 {
        let state = random_pairing_state(&grid, 2, options.seed + 300 + s)?;
        let base = state.base();
        let mf = engine.evaluate(base.orbitals(), base.occupations());
        let fast = mf.pairing(base.orbitals(), &state.amplitudes());
        worst = worst.max(relative(fast, dense_pairing(base.orbitals(), &state.amplitudes(), &grid)?));
    }
    Ok(CheckResult::bounded("dense_pairing", worst, 1e-10, "spectral against real-space, 8^3".into()))
}

fn exchange_below_direct(options: &CheckOptions) -> Result<CheckResult> {
    let grid = SpectralGrid::new(16, 3.0)?;
    let engine = Engine::new(&grid, 0.0)?;
    let mut worst = f64::NEG_INFINITY;
    for s in 0..options.oracle_states as u64 {
        let state = random_state(&grid, 3, options.seed + 400 + s)?;
        let mf = engine.evaluate(state.orbitals(), state.occupations());
        worst = worst.max((mf.exchange - mf.direct) / mf.direct);
    }
    Ok(CheckResult::bounded("exchange_below_direct", worst, 0.0, "max (X - D) / D".into()))
}

fn pairing_bound(options: &CheckOptions) -> Result<CheckResult> {
    let grid = SpectralGrid::new(16, 3.0)?;
    let engine = Engine::new(&grid, 0.0)?;
    let mut worst: f64 = 0.0;
    for s in 0..options.oracle_states as u64 {
        let state = random_pairing_state(&grid, 2, options.seed + 500 + s)?;
        let base = state.base();
        let mf = engine.evaluate(base.orbitals(), base.occupations());
        let x = mf.pairing(base.orbitals(), &state.amplitudes());
        worst = worst.max(x / (0.5 * PI * mf.kinetic_massless));
    }
    Ok(CheckResult::bounded("pairing_bound", worst, 1.0, "max X(alpha) / ((pi/2) T_0)".into()))
}

fn dilation_covariance(options: &CheckOptions) -> Result<CheckResult> {
    let grid = SpectralGrid::new(16, 3.0)?;
    let mut worst: f64 = 0.0;
    for s in 0..options.oracle_states as u64 {
        let state = random_pairing_state(&grid, 1, options.seed + 600 + s)?;
        let beta = 0.5 + 0.15 * s as f64;
        let dilated = state.dilate(beta)?;
        let a = gn_quotient_hfb(&state)?;
        let b = gn_quotient_hfb(&dilated)?;
        worst = worst.max(relative(a.numerator * beta, b.numerator));
        worst = worst.max(relative(a.denominator * beta, b.denominator));
        worst = worst.max(relative(a.value, b.value));
    }
    Ok(CheckResult::bounded("dilation_covariance", worst, 1e-12, "T_0, D - X + X(alpha) scale by beta".into()))
}

fn admissibility(options: &CheckOptions) -> Result<CheckResult> {
    let grid = oracle_grid()?;
    let mut worst: f64 = 0.0;
    for s in 0..options.oracle_states as u64 {
        let state = random_pairing_state(&grid, 2, options.seed + 700 + s)?;
        worst = worst.max(check_admissibility(&state).max_violation);
    }
    Ok(CheckResult::bounded("admissibility", worst, 1e-12, "c_k^2 <= lambda_k (1 - lambda_k)".into()))
}

fn random_direction(rng: &mut ChaCha8Rng, count: usize, len: usize) -> Vec<Vec<C64>> {
    (0..count)
        .map(|_| (0..len).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())
        .collect()
}

fn shifted(base: &[Vec<C64>], dir: &[Vec<C64>], t: f64) -> Vec<Vec<C64>> {
    base.iter().zip(dir).map(|(b, d)| b.iter().zip(d).map(|(x, y)| x + y * t).collect()).collect()
}

fn shifted_real(base: &[f64], dir: &[f64], t: f64) -> Vec<f64> {
    base.iter().zip(dir).map(|(b, d)| b + d * t).collect()
}

/// Worst relative mismatch between the analytic directional derivative and a
/// central difference.
pub fn gradient_mismatch(objective: Objective, directions: usize, seed: u64) -> Result<f64> {
    let grid = oracle_grid()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairing = matches!(objective, Objective::HfbEnergy { .. } | Objective::QuotientHfb { .. });
    let state = random_pairing_state(&grid, 2, seed)?;
    let orbitals = state.base().orbitals().to_vec();
    let angles: Vec<f64> = if pairing { state.pair_angles().to_vec() } else { Vec::new() };
    let occupations = if pairing {
        state.base().occupations().to_vec()
    } else {
        random_occupations(&mut rng, orbitals.len())
    };
    let g = objective_gradient(&grid, objective, &orbitals, &occupations, &angles)?;
    let eps = 1e-4;
    let mut worst: f64 = 0.0;
    for _ in 0..directions {
        let dc = random_direction(&mut rng, orbitals.len(), grid.len());
        let scale = 0.02;
        let dc: Vec<Vec<C64>> = dc.into_iter().map(|v| v.into_iter().map(|z| z * scale).collect()).collect();
        let do_: Vec<f64> = if pairing { vec![0.0; occupations.len()] } else { (0..occupations.len()).map(|_| rng.gen_range(-0.1..0.1)).collect() };
        let dt: Vec<f64> = (0..angles.len()).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let f = |t: f64| {
            objective_value(
                &grid,
                objective,
                &shifted(&orbitals, &dc, t),
                &shifted_real(&occupations, &do_, t),
                &shifted_real(&angles, &dt, t),
            )
        };
        let fd = (f(eps)? - f(-eps)?) / (2.0 * eps);
        let mut analytic = 0.0;
        for (gj, dj) in g.orbitals.iter().zip(&dc) {
            analytic += 2.0 * gj.iter().zip(dj).map(|(a, b)| (a.conj() * b).re).sum::<f64>();
        }
        if !pairing {
            analytic += g.occupations.iter().zip(&do_).map(|(a, b)| a * b).sum::<f64>();
        }
        analytic += g.angles.iter().zip(&dt).map(|(a, b)| a * b).sum::<f64>();
        let err = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-8 * g.value.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}

pub fn tf_gradient_mismatch(directions: usize, seed: u64) -> Result<f64> {
    let grid = RadialGrid::logarithmic(256, 1e-2, 1e2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f0: Vec<f64> =
        default_start(&grid).iter().zip(&grid.radii).map(|(v, r)| (v + 0.05) * (-r).exp()).collect();
    let (_, g) = tf_objective_gradient(&grid, &f0)?;
    let eps = 1e-4;
    let mut worst: f64 = 0.0;
    for _ in 0..directions {
        let d: Vec<f64> = f0.iter().map(|v| v * rng.gen_range(-0.1..0.1)).collect();
        let fd = (tf_objective(&grid, &shifted_real(&f0, &d, eps))?
            - tf_objective(&grid, &shifted_real(&f0, &d, -eps))?)
            / (2.0 * eps);
        let analytic: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        worst = worst.max((fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-12));
    }
    Ok(worst)
}

pub fn gradient_objectives() -> [Objective; 5] {
    [
        Objective::HfEnergy { mass: 1.0, kappa: 0.7 },
        Objective::HfbEnergy { mass: 1.0, kappa: 0.7 },
        Objective::QuotientHf,
        Objective::QuotientRelaxed,
        Objective::QuotientHfb { trace: None },
    ]
}

fn gradients(options: &CheckOptions) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (i, objective) in gradient_objectives().into_iter().enumerate() {
        let e = gradient_mismatch(objective, options.gradient_directions, options.seed + i as u64)?;
        parts.push(format!("{objective:?}: {e:.2e}"));
        worst = worst.max(e);
    }
    let e = tf_gradient_mismatch(options.gradient_directions, options.seed)?;
    parts.push(format!("TfObjective: {e:.2e}"));
    worst = worst.max(e);
    Ok(CheckResult::bounded("gradients", worst, 1e-5, parts.join("; ")))
}

fn tf_upper_bound(options: &CheckOptions) -> Result<CheckResult> {
    let grid = RadialGrid::logarithmic(512, 1e-3, 1e3)?;
    let config = TfConfig { points: 512, ..TfConfig::default() };
    let best = minimize_radial(&grid, &default_start(&grid), &config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..options.tf_samples {
        let a = rng.gen_range(0.2..5.0);
        let p = rng.gen_range(1.0..4.0);
        let bump = rng.gen_range(0.0..1.0);
        let f: Vec<f64> = grid
            .radii
            .iter()
            .map(|&r| (-(r / a).powf(p)).exp() + bump * (1.0 - (r / a).powi(2)).max(0.0))
            .collect();
        let value = tf_objective(&grid, &f)?;
        worst = worst.max((best.value - value) / best.value);
    }
    Ok(CheckResult::bounded(
        "tf_upper_bound",
        worst,
        1e-9,
        format!("minimum {:.10}, max relative undercut of random profiles", best.value),
    ))
}

fn checkpoint_roundtrip(options: &CheckOptions) -> Result<CheckResult> {
    let grid = oracle_grid()?;
    let state = random_pairing_state(&grid, 2, options.seed)?;
    let cp = Checkpoint::from_pairing(&state, 1.0, 0.5);
    let mut buf = Vec::new();
    cp.write_to(&mut buf)?;
    let back = Checkpoint::read_from(&mut buf.as_slice())?.pairing_state()?;
    let same = back == state;
    Ok(CheckResult {
        name: "checkpoint_roundtrip".into(),
        passed: same,
        worst: if same { 0.0 } else { 1.0 },
        tolerance: 0.0,
        detail: format!("{} bytes", buf.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> CheckOptions {
        CheckOptions {
            hardy_kato_points: 16,
            hardy_kato_states: 20,
            oracle_states: 2,
            gradient_directions: 3,
            tf_samples: 10,
            ..CheckOptions::default()
        }
    }

    #[test]
    fn quick_suite_passes() {
        let report = run_checks(&quick()).unwrap();
        for r in &report.results {
            assert!(r.passed, "{}: {:e} > {:e} ({})", r.name, r.worst, r.tolerance, r.detail);
        }
    }

    #[test]
    fn scaled_coulomb_table_breaks_hardy_kato() {
        let options = CheckOptions { coulomb_scale: 3.0, ..quick() };
        let r = hardy_kato(&options).unwrap();
        assert!(!r.passed, "{r:?}");
    }

    #[test]
    fn dense_kernel_of_identity_is_delta() {
        let grid = oracle_grid().unwrap();
        let k = dense_kernel(&grid, &vec![1.0; grid.len()]);
        assert!((k[0].re - 1.0).abs() < 1e-12);
        assert!(k[1..].iter().all(|v| v.norm() < 1e-12));
    }
}
