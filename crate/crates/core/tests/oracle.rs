//! Minimum energies of small instances frozen from an independent exhaustive
//! enumeration (per-mask quadratic solves in double precision).

use fbmin_core::{brute_force_minimize, minimize, BoundaryData, GridSpec, SolverConfig, WeightField};

fn boundary_value(i: usize, j: usize, k: usize) -> f64 {
    if (i + 2 * j + k).is_multiple_of(3) {
        0.0
    } else {
        ((3 * i + 5 * j + 2 * k) % 7) as f64 * 0.5
    }
}

fn instance(
    n: usize,
    m: usize,
    hi: f64,
    q: impl Fn([f64; 2]) -> f64,
) -> (GridSpec<f64>, WeightField<f64>, BoundaryData<f64>) {
    let g = GridSpec::square(0.0, hi, n).unwrap();
    let w = WeightField::from_fn(g.clone(), q).unwrap();
    let vals = (0..m)
        .map(|k| {
            (0..g.len())
                .map(|p| {
                    let (i, j) = g.ij(p);
                    if g.is_boundary_index(p) {
                        boundary_value(i, j, k)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let bd = BoundaryData::new(g.clone(), vals).unwrap();
    (g, w, bd)
}

fn check(name: &str, n: usize, m: usize, hi: f64, q: impl Fn([f64; 2]) -> f64, expected: f64) {
    let (g, w, bd) = instance(n, m, hi, q);
    let brute = brute_force_minimize(&g, &w, &bd).unwrap().solution.energy.total;
    assert!((brute - expected).abs() <= 1e-9 * expected, "{name}: oracle {brute} vs {expected}");
    let sol = minimize(&g, &w, &bd, &SolverConfig::for_spacing(g.h_max())).unwrap();
    assert!(
        (sol.energy.total - expected).abs() <= 1e-9 * expected,
        "{name}: minimize {} vs {expected}",
        sol.energy.total
    );
    assert!(sol.u.check_admissible().is_ok() && bd.matches(&sol.u), "{name}");
}

#[test]
fn scalar_three_by_three() {
    check("unit_3x3_scalar", 5, 1, 4.0, |_| 1.0, 67.36495535714286);
}

#[test]
fn scalar_four_by_four() {
    check("unit_4x4_scalar", 6, 1, 5.0, |_| 1.0, 83.12943181818181);
}

#[test]
fn pair_four_by_four() {
    check("unit_4x4_pair", 6, 2, 5.0, |_| 1.0, 134.75147727272727);
}

#[test]
fn pair_with_sloped_weight() {
    check("sloped_weight_3x3_pair", 5, 2, 4.0, |p| 0.5 + 0.25 * p[0], 110.06361607142857);
}

#[test]
fn unit_square_with_heavy_weight() {
    check("fine_square_4x4", 6, 1, 1.0, |_| 2.0, 62.129431818181814);
}
