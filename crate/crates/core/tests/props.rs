//! Randomized invariants of the solver, the file formats and the diagnostics.

use fbmin_core::blowup::{classify_regular, rescale};
use fbmin_core::diagnostics::{extract_free_boundary, fb_condition_residual, weiss_curve};
use fbmin_core::homogeneous::{halfplane_field, HalfPlaneSpec};
use fbmin_core::io::{decode_csv, decode_fbm, decode_mask_pgm, encode_csv, encode_fbm, encode_mask_pgm};
use fbmin_core::{
    evaluate_j, flip_polish, harmonic_replace, minimize, BoundaryData, GridSpec, Mask, ScalarField,
    SolverConfig, VectorField, WeightField,
};
use proptest::prelude::*;

fn boundary(n: usize, m: usize, amp: Vec<f64>, phase: Vec<f64>) -> BoundaryData<f64> {
    let g = GridSpec::square(-1.0, 1.0, n).unwrap();
    BoundaryData::from_fn(g, m, |p: [f64; 2], o: &mut [f64]| {
        for (k, v) in o.iter_mut().enumerate() {
            *v = (amp[k] * (2.0 * p[0] + 3.0 * p[1] + phase[k]).sin()).max(0.0);
        }
    })
    .unwrap()
}

fn data() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
    (1usize..=2).prop_flat_map(|m| {
        (
            Just(m),
            prop::collection::vec(0.0f64..2.0, m),
            prop::collection::vec(0.0f64..6.3, m),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn minimize_beats_simple_competitors((m, amp, phase) in data(), seed in 0u64..100) {
        let bd = boundary(9, m, amp, phase);
        let g = bd.grid().clone();
        let q = WeightField::constant(g.clone(), 1.0).unwrap();
        let mut cfg = SolverConfig::for_spacing(g.h_max());
        cfg.seed = seed;
        let sol = minimize(&g, &q, &bd, &cfg).unwrap();
        prop_assert!(sol.u.check_admissible().is_ok());
        prop_assert!(bd.matches(&sol.u));
        let j = sol.energy.total;
        prop_assert_eq!(j, evaluate_j(&sol.u, &q).unwrap().total);

        let mut zero = VectorField::zeros(g.clone(), m);
        bd.apply(&mut zero);
        prop_assert!(j <= evaluate_j(&zero, &q).unwrap().total + 1e-12);
        let all = Mask::from_fn(g.clone(), |_| true);
        let full = harmonic_replace(&zero, &all, &bd, 1e-12).unwrap();
        prop_assert!(j <= evaluate_j(&full, &q).unwrap().total + 1e-12);
    }

    #[test]
    fn polish_never_raises_the_energy(
        (m, amp, phase) in data(),
        cx in -0.5f64..0.5, cy in -0.5f64..0.5, r in 0.2f64..0.9,
    ) {
        let bd = boundary(11, m, amp, phase);
        let g = bd.grid().clone();
        let q = WeightField::from_fn(g.clone(), |p: [f64; 2]| 1.0 + 0.2 * p[1]).unwrap();
        let mask = Mask::from_fn(g.clone(), |p| (p[0] - cx).hypot(p[1] - cy) > r);
        let mut start = VectorField::zeros(g.clone(), m);
        bd.apply(&mut start);
        let start = harmonic_replace(&start, &mask, &bd, 1e-12).unwrap();
        let before = evaluate_j(&start, &q).unwrap().total;
        let sol = flip_polish(&start, &q, &bd, &SolverConfig::for_spacing(g.h_max())).unwrap();
        prop_assert!(sol.energy.total <= before + 1e-12 * before.max(1.0));
        prop_assert!(sol.u.check_admissible().is_ok() && bd.matches(&sol.u));
    }

    #[test]
    fn single_precision_agrees_with_double((m, amp, phase) in data()) {
        let bd = boundary(9, m, amp.clone(), phase.clone());
        let g = bd.grid().clone();
        let q = WeightField::constant(g.clone(), 1.0).unwrap();
        let j64 = minimize(&g, &q, &bd, &SolverConfig::for_spacing(g.h_max())).unwrap().energy.total;

        let g32 = GridSpec::<f32>::square(-1.0, 1.0, 9).unwrap();
        let bd32 = BoundaryData::from_fn(g32.clone(), m, |p: [f32; 2], o: &mut [f32]| {
            for (k, v) in o.iter_mut().enumerate() {
                let s = (2.0 * p[0] as f64 + 3.0 * p[1] as f64 + phase[k]).sin();
                *v = (amp[k] * s).max(0.0) as f32;
            }
        })
        .unwrap();
        let q32 = WeightField::constant(g32.clone(), 1.0f32).unwrap();
        let j32 = minimize(&g32, &q32, &bd32, &SolverConfig::for_spacing(g32.h_max())).unwrap().energy.total;
        prop_assert!((j32 as f64 - j64).abs() <= 1e-3 * j64.max(1.0), "{} vs {}", j32, j64);
    }

    #[test]
    fn field_files_round_trip(nx in 3usize..12, ny in 3usize..12, seed in 0u64..1000) {
        let g = GridSpec::new([-1.0, 0.5], [2.0, 1.75], [nx, ny]).unwrap();
        let f = ScalarField::from_fn(g.clone(), |p| ((p[0] * 7.3 + seed as f64).sin() * 1e3 * p[1]).max(-5.0));
        prop_assert_eq!(&decode_fbm::<f64>(&encode_fbm(&f)).unwrap(), &f);
        let csv = encode_csv(&f);
        prop_assert_eq!(&decode_csv::<f64, _>(csv.as_bytes()).unwrap(), &f);
        let mask = Mask::from_fn(g.clone(), |p| (p[0] + seed as f64).sin() > 0.0);
        let back = decode_mask_pgm(&encode_mask_pgm(&mask), &g).unwrap();
        prop_assert_eq!(back.flags(), mask.flags());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn half_planes_satisfy_the_diagnostics(
        angle in 0.0f64..std::f64::consts::TAU,
        mix in 0.0f64..1.0,
        q0 in 0.5f64..2.0,
    ) {
        let nu = [angle.cos(), angle.sin()];
        let e = vec![mix.sqrt(), (1.0 - mix).sqrt()];
        let g = GridSpec::square(-1.0, 1.0, 129).unwrap();
        let u = halfplane_field(&HalfPlaneSpec::new(q0, nu, e.clone()).unwrap(), &g);
        let q = WeightField::constant(g.clone(), q0).unwrap();
        let fb = extract_free_boundary(&u.positivity_mask()).unwrap();

        let rep = fb_condition_residual(&u, &q, &fb).unwrap();
        prop_assert!(rep.points.iter().any(|p| !p.cut));
        prop_assert!(rep.max_uncut <= 1e-10, "{}", rep.max_uncut);

        let x = fb.points[fb.nearest([0.0, 0.0]).unwrap().0];
        let target = q0 * q0 * std::f64::consts::FRAC_PI_2;
        let c = weiss_curve(&u, &q, x, &[0.1, 0.2, 0.4]).unwrap();
        for k in 0..3 {
            prop_assert!((c.values[k] - target).abs() <= c.tol[k], "{:?} vs {}", c, target);
        }

        let frame = rescale(&u, x, 0.3, &GridSpec::square(-1.0, 1.0, 33).unwrap()).unwrap();
        let fit = classify_regular(&frame, q0).unwrap();
        prop_assert!(fit.residual <= 0.05, "{:?}", fit);
        prop_assert!(fit.direction[0] * nu[0] + fit.direction[1] * nu[1] >= 0.999, "{:?}", fit);
    }
}
