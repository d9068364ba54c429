//! Property tests for the invariants of the functionals, states and reports.

use proptest::prelude::*;

use relstar::analysis::{classify_kappa, Existence, KappaEntry};
use relstar::checkpoint::Checkpoint;
use relstar::functionals::{direct_term_of, exchange_term, gn_quotient, gn_quotient_hfb, hf_energy, QuotientVariant};
use relstar::grid::{build_multiplier, MultiplierKind, SpectralGrid};
use relstar::report::{format_f64, to_json_string};
use relstar::states::{check_admissibility, random_pairing_state, random_smooth_frame, OrbitalSet};
use relstar::thomas_fermi::{default_start, tf_objective, RadialGrid};
use relstar::C64;

fn grid() -> SpectralGrid {
    SpectralGrid::new(8, 2.0).unwrap()
}

fn occupied(seed: u64, occ: &[f64]) -> OrbitalSet {
    let g = grid();
    let frame = random_smooth_frame(&g, occ.len(), seed).unwrap();
    OrbitalSet::with_occupations(g, frame.orbitals().to_vec(), occ.to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn exchange_never_exceeds_direct(seed in 0u64..10_000, occ in prop::collection::vec(0.05f64..1.0, 1..4)) {
        let s = occupied(seed, &occ);
        let (d, x) = (direct_term_of(&s), exchange_term(&s).unwrap());
        prop_assert!(x <= d * (1.0 + 1e-12));
        prop_assert!(x >= 0.0);
    }

    #[test]
    fn single_orbital_has_no_net_interaction(seed in 0u64..10_000) {
        let s = occupied(seed, &[1.0]);
        let (d, x) = (direct_term_of(&s), exchange_term(&s).unwrap());
        prop_assert!((d - x).abs() <= 1e-12 * d);
    }

    #[test]
    fn density_integrates_to_trace(seed in 0u64..10_000, occ in prop::collection::vec(0.0f64..1.0, 1..4)) {
        let s = occupied(seed, &occ);
        let d = s.density();
        let total: f64 = occ.iter().sum();
        prop_assert!((d.total_mass - total).abs() <= 1e-12 * total.max(1.0));
        prop_assert!(d.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn quotient_is_dilation_invariant(seed in 0u64..10_000, beta in 0.25f64..4.0) {
        let s = random_smooth_frame(&grid(), 2, seed).unwrap();
        let a = gn_quotient(&s, QuotientVariant::Hf).unwrap();
        let b = gn_quotient(&s.dilate(beta).unwrap(), QuotientVariant::Hf).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-12 * a.value);
        prop_assert!((a.numerator * beta - b.numerator).abs() <= 1e-12 * b.numerator);
    }

    #[test]
    fn quotient_is_unitarily_invariant(seed in 0u64..10_000, angle in 0.0f64..6.3) {
        let s = random_smooth_frame(&grid(), 2, seed).unwrap();
        let (c, sn) = (angle.cos(), angle.sin());
        let r = nalgebra::DMatrix::from_row_slice(2, 2, &[
            C64::new(c, 0.0), C64::new(0.0, -sn),
            C64::new(0.0, -sn), C64::new(c, 0.0),
        ]);
        let rotated = s.rotate(&r).unwrap();
        let a = gn_quotient(&s, QuotientVariant::Hf).unwrap().value;
        let b = gn_quotient(&rotated, QuotientVariant::Hf).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-10 * a);
    }

    #[test]
    fn hfb_quotient_is_dilation_invariant(seed in 0u64..10_000, beta in 0.25f64..4.0) {
        let p = random_pairing_state(&grid(), 2, seed).unwrap();
        let a = gn_quotient_hfb(&p).unwrap().value;
        let b = gn_quotient_hfb(&p.dilate(beta).unwrap()).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn random_pairing_states_are_admissible(seed in 0u64..10_000, pairs in 1usize..4) {
        let p = random_pairing_state(&grid(), pairs, seed).unwrap();
        let cert = check_admissibility(&p);
        prop_assert!(cert.ok);
        prop_assert!((p.base().trace() - 2.0 * p.lambdas().iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn energy_nonnegative_below_hardy_kato(seed in 0u64..10_000, kappa in 0.0f64..0.5, mass in 0.0f64..2.0) {
        let s = random_smooth_frame(&grid(), 2, seed).unwrap();
        let e = hf_energy(&s, mass, kappa).unwrap();
        prop_assert!(e.total >= 0.0);
    }

    #[test]
    fn multiplier_tables_are_nonnegative(mass in 0.0f64..10.0, dilation in 0.1f64..100.0) {
        let g = grid();
        for kind in [
            MultiplierKind::KineticMassive { mass },
            MultiplierKind::KineticMassless,
            MultiplierKind::MassGap { mass, dilation },
            MultiplierKind::CoulombTruncated { radius: g.coulomb_radius() },
        ] {
            let t = build_multiplier(&g, kind).unwrap();
            prop_assert!(t.values.iter().all(|v| *v >= 0.0 && v.is_finite()));
        }
    }

    #[test]
    fn checkpoints_round_trip(seed in 0u64..10_000, pairs in 1usize..3, mass in 0.0f64..3.0) {
        let p = random_pairing_state(&grid(), pairs, seed).unwrap();
        let cp = Checkpoint::from_pairing(&p, mass, 1.25);
        let mut buf = Vec::new();
        cp.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(back.pairing_state().unwrap(), p);
    }

    #[test]
    fn tf_objective_is_scale_invariant(c in 0.01f64..100.0) {
        let g = RadialGrid::logarithmic(128, 1e-2, 1e1).unwrap();
        let f = default_start(&g);
        let scaled: Vec<f64> = f.iter().map(|v| v * c).collect();
        let a = tf_objective(&g, &f).unwrap();
        let b = tf_objective(&g, &scaled).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn floats_survive_json(v in any::<f64>()) {
        let text = to_json_string(&v).unwrap();
        if v.is_finite() {
            let back: f64 = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back.to_bits(), v.to_bits());
        } else {
            prop_assert!(text.starts_with('"'));
        }
        let s = format_f64(v);
        if v.is_finite() {
            prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
        } else {
            prop_assert!(["nan", "inf", "-inf"].contains(&s.as_str()));
        }
    }

    #[test]
    fn classification_is_monotone(a in 0.9f64..5.0, b in 0.9f64..5.0) {
        let table = vec![
            KappaEntry { n: 2, kappa: 4.6, confinement_error: 1e-4 },
            KappaEntry { n: 3, kappa: 2.5, confinement_error: 1e-4 },
            KappaEntry { n: 4, kappa: 1.7, confinement_error: 1e-4 },
            KappaEntry { n: 5, kappa: 1.2, confinement_error: 1e-4 },
        ];
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let cl = classify_kappa(lo, &table);
        let ch = classify_kappa(hi, &table);
        if let (Ok(cl), Ok(ch)) = (cl, ch) {
            if cl.exists != Existence::Boundary && ch.exists != Existence::Boundary {
                prop_assert!(cl.n_hf >= ch.n_hf);
            }
        }
    }
}
