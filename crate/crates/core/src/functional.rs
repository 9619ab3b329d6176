//! The cavitation functional `J(u) = ∫ |∇u|² + Q² χ{|u|>0}`, its relaxation,
//! the metric `d`, and the logarithmic barrier `ψ_ρ`.

use crate::error::{FbError, Result};
use crate::grid::{cell_grad_sq, GridSpec, VectorField, WeightField};
use crate::scalar::{lit, to_f64, Scalar};

/// The two terms of `J`; `total` is always `dirichlet + volume`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown<T> {
    pub dirichlet: T,
    pub volume: T,
    pub total: T,
}

impl<T: Scalar> EnergyBreakdown<T> {
    pub fn new(dirichlet: T, volume: T) -> Self {
        EnergyBreakdown {
            dirichlet,
            volume,
            total: dirichlet + volume,
        }
    }
}

/// Inclusive rectangle of cell indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellRange {
    pub ci0: usize,
    pub cj0: usize,
    pub ci1: usize,
    pub cj1: usize,
}

impl CellRange {
    pub fn all<T: Scalar>(grid: &GridSpec<T>) -> Self {
        CellRange {
            ci0: 0,
            cj0: 0,
            ci1: grid.cells_x() - 1,
            cj1: grid.cells_y() - 1,
        }
    }

    /// Cells touching any node in the node rectangle `[i0, i1] x [j0, j1]`.
    pub fn around_nodes<T: Scalar>(
        grid: &GridSpec<T>,
        i0: usize,
        j0: usize,
        i1: usize,
        j1: usize,
    ) -> Self {
        CellRange {
            ci0: i0.saturating_sub(1),
            cj0: j0.saturating_sub(1),
            ci1: i1.min(grid.cells_x() - 1),
            cj1: j1.min(grid.cells_y() - 1),
        }
    }
}

fn check_pair<T: Scalar>(u: &VectorField<T>, q: &WeightField<T>) -> Result<()> {
    if !u.grid().same_as(q.grid()) {
        return Err(FbError::GridMismatch);
    }
    Ok(())
}

#[inline]
fn cell_positive<T: Scalar>(comps: &[Vec<T>], nodes: [usize; 4], tol: T) -> bool {
    let tol2 = tol * tol;
    nodes
        .iter()
        .any(|&p| comps.iter().map(|c| c[p] * c[p]).sum::<T>() > tol2)
}

/// Exact `J` restricted to a rectangle of cells, with an explicit positivity threshold.
pub fn energy_on_cells<T: Scalar>(
    grid: &GridSpec<T>,
    comps: &[Vec<T>],
    q: &WeightField<T>,
    tol: T,
    range: CellRange,
) -> EnergyBreakdown<T> {
    let area = grid.cell_area();
    let mut dir = T::zero();
    let mut vol = T::zero();
    for cj in range.cj0..=range.cj1 {
        for ci in range.ci0..=range.ci1 {
            for c in comps {
                dir += cell_grad_sq(grid, c, ci, cj);
            }
            if cell_positive(comps, grid.cell_nodes(ci, cj), tol) {
                let qm = q.cell_mean(ci, cj);
                vol += qm * qm;
            }
        }
    }
    EnergyBreakdown::new(dir * area, vol * area)
}

/// `Σ_cells Σ_i |∇u_i|² · area` with the edge-based cell quadrature.
pub fn dirichlet_energy<T: Scalar>(u: &VectorField<T>) -> T {
    let grid = u.grid();
    let area = grid.cell_area();
    let mut acc = T::zero();
    for c in u.comps() {
        for cj in 0..grid.cells_y() {
            for ci in 0..grid.cells_x() {
                acc += cell_grad_sq(grid, c, ci, cj);
            }
        }
    }
    acc * area
}

/// `Σ_cells Q̄² · area` over cells with at least one positive node.
pub fn volume_term<T: Scalar>(u: &VectorField<T>, q: &WeightField<T>) -> Result<T> {
    check_pair(u, q)?;
    let grid = u.grid();
    let tol = u.positivity_tol();
    let mut acc = T::zero();
    for cj in 0..grid.cells_y() {
        for ci in 0..grid.cells_x() {
            if cell_positive(u.comps(), grid.cell_nodes(ci, cj), tol) {
                let qm = q.cell_mean(ci, cj);
                acc += qm * qm;
            }
        }
    }
    Ok(acc * grid.cell_area())
}

pub fn evaluate_j<T: Scalar>(u: &VectorField<T>, q: &WeightField<T>) -> Result<EnergyBreakdown<T>> {
    let vol = volume_term(u, q)?;
    Ok(EnergyBreakdown::new(dirichlet_energy(u), vol))
}

#[inline]
fn beta<T: Scalar>(t: T, eps: T) -> T {
    (t / eps).min(T::one())
}

#[inline]
fn cell_center_value<T: Scalar>(comps: &[Vec<T>], nodes: [usize; 4], out: &mut [T]) -> T {
    let quarter: T = lit(0.25);
    let mut n2 = T::zero();
    for (k, c) in comps.iter().enumerate() {
        let v = quarter * (c[nodes[0]] + c[nodes[1]] + c[nodes[2]] + c[nodes[3]]);
        out[k] = v;
        n2 += v * v;
    }
    n2.sqrt()
}

fn check_eps<T: Scalar>(eps: T) -> Result<()> {
    if eps > T::zero() && eps.is_finite() {
        Ok(())
    } else {
        Err(FbError::InvalidArgument(format!(
            "smoothing width must be positive, got {}",
            to_f64(eps)
        )))
    }
}

/// Relaxed functional: Dirichlet energy plus `Σ_cells Q̄² β_ε(|u(cell centre)|) · area`
/// with `β_ε(t) = min(1, t/ε)`.
pub fn evaluate_j_smoothed<T: Scalar>(u: &VectorField<T>, q: &WeightField<T>, eps: T) -> Result<T> {
    check_pair(u, q)?;
    check_eps(eps)?;
    let grid = u.grid();
    let mut buf = vec![T::zero(); u.m()];
    let mut vol = T::zero();
    for cj in 0..grid.cells_y() {
        for ci in 0..grid.cells_x() {
            let t = cell_center_value(u.comps(), grid.cell_nodes(ci, cj), &mut buf);
            let qm = q.cell_mean(ci, cj);
            vol += qm * qm * beta(t, eps);
        }
    }
    Ok(dirichlet_energy(u) + vol * grid.cell_area())
}

/// Gradient of [`evaluate_j_smoothed`] with respect to every node value.
///
/// `β_ε` is differentiated as `1/ε` below the kink and `0` above it; the
/// norm is differentiated as zero at the origin.
pub fn smoothed_gradient<T: Scalar>(
    u: &VectorField<T>,
    q: &WeightField<T>,
    eps: T,
) -> Result<Vec<Vec<T>>> {
    check_pair(u, q)?;
    check_eps(eps)?;
    let grid = u.grid();
    let [hx, hy] = grid.h();
    let wx = hy / hx;
    let wy = hx / hy;
    let area = grid.cell_area();
    let quarter: T = lit(0.25);
    let m = u.m();
    let mut grad = vec![vec![T::zero(); grid.len()]; m];
    let mut buf = vec![T::zero(); m];
    for cj in 0..grid.cells_y() {
        for ci in 0..grid.cells_x() {
            let nodes = grid.cell_nodes(ci, cj);
            let [a, b, c, d] = nodes;
            for k in 0..m {
                let v = u.comp(k);
                let dx0 = v[b] - v[a];
                let dx1 = v[d] - v[c];
                let dy0 = v[c] - v[a];
                let dy1 = v[d] - v[b];
                let g = &mut grad[k];
                g[a] -= wx * dx0 + wy * dy0;
                g[b] += wx * dx0 - wy * dy1;
                g[c] += wy * dy0 - wx * dx1;
                g[d] += wx * dx1 + wy * dy1;
            }
            let t = cell_center_value(u.comps(), nodes, &mut buf);
            if t > T::zero() && t < eps {
                let qm = q.cell_mean(ci, cj);
                let s = qm * qm * area / eps / t * quarter;
                for k in 0..m {
                    let gk = s * buf[k];
                    for &p in &nodes {
                        grad[k][p] += gk;
                    }
                }
            }
        }
    }
    Ok(grad)
}

/// `d(u, v) = ‖u − v‖_{H¹} + |{|u|>0} Δ {|v|>0}|` on the grid.
pub fn metric_d<T: Scalar>(u: &VectorField<T>, v: &VectorField<T>) -> Result<T> {
    if !u.same_grid(v) {
        return Err(FbError::GridMismatch);
    }
    let grid = u.grid();
    let area = grid.cell_area();
    let quarter: T = lit(0.25);
    let mut diff = vec![T::zero(); grid.len()];
    let mut sq = T::zero();
    for k in 0..u.m() {
        for (p, d) in diff.iter_mut().enumerate() {
            *d = u.comp(k)[p] - v.comp(k)[p];
        }
        for cj in 0..grid.cells_y() {
            for ci in 0..grid.cells_x() {
                let [a, b, c, e] = grid.cell_nodes(ci, cj);
                let l2 = quarter
                    * (diff[a] * diff[a]
                        + diff[b] * diff[b]
                        + diff[c] * diff[c]
                        + diff[e] * diff[e]);
                sq += (l2 + cell_grad_sq(grid, &diff, ci, cj)) * area;
            }
        }
    }
    let mask_part = u
        .positivity_mask()
        .symmetric_difference_area(&v.positivity_mask())?;
    Ok(sq.sqrt() + mask_part)
}

/// `ψ_ρ(x) = (ln|x| − ln ρ)⁺ / (−ln ρ)`: zero on `B_ρ`, one on `∂B_1`, harmonic between.
pub fn psi_rho<T: Scalar>(x: [T; 2], rho: T) -> Result<T> {
    if !(rho > T::zero() && rho < T::one()) {
        return Err(FbError::InvalidArgument(format!(
            "rho must lie in (0, 1), got {}",
            to_f64(rho)
        )));
    }
    let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
    if r <= rho {
        return Ok(T::zero());
    }
    Ok((r.ln() - rho.ln()) / (-rho.ln()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn g(n: usize) -> GridSpec<f64> {
        GridSpec::square(-1.0, 1.0, n).unwrap()
    }

    fn ones(grid: &GridSpec<f64>) -> WeightField<f64> {
        WeightField::constant(grid.clone(), 1.0).unwrap()
    }

    #[test]
    fn dirichlet_examples() {
        let grid = g(33);
        assert_eq!(dirichlet_energy(&VectorField::zeros(grid.clone(), 2)), 0.0);
        let lin = VectorField::from_fn(grid.clone(), 1, |p, o| o[0] = 0.7 * p[0] - 1.3 * p[1]);
        assert_abs_diff_eq!(dirichlet_energy(&lin), (0.49 + 1.69) * 4.0, epsilon = 1e-12);
        for n in [33, 65, 129] {
            let grid = g(n);
            let h = grid.h()[0];
            let ramp = VectorField::from_fn(grid, 2, |p, o| {
                o[0] = p[0].max(0.0);
                o[1] = 0.0;
            });
            let e = dirichlet_energy(&ramp);
            assert!((e - 2.0).abs() <= 2.0 * h + 1e-12, "n={n} e={e}");
        }
    }

    #[test]
    fn volume_examples() {
        let grid = g(33);
        let q = ones(&grid);
        assert_eq!(
            volume_term(&VectorField::zeros(grid.clone(), 2), &q).unwrap(),
            0.0
        );
        let full = VectorField::from_fn(grid.clone(), 3, |_, o| o.fill(1.0));
        assert_abs_diff_eq!(volume_term(&full, &q).unwrap(), 4.0, epsilon = 1e-12);
        let h = grid.h()[0];
        let ramp = VectorField::from_fn(grid.clone(), 2, |p, o| {
            o[0] = p[0].max(0.0);
            o[1] = 0.0;
        });
        let v = volume_term(&ramp, &q).unwrap();
        assert!((v - 2.0).abs() <= 2.0 * h + 1e-12);
        let other = GridSpec::square(-1.0, 1.0, 17).unwrap();
        assert_eq!(
            volume_term(&ramp, &ones(&other)),
            Err(FbError::GridMismatch)
        );
    }

    #[test]
    fn evaluate_j_examples() {
        let grid = g(65);
        let q = ones(&grid);
        assert_eq!(
            evaluate_j(&VectorField::zeros(grid.clone(), 2), &q)
                .unwrap()
                .total,
            0.0
        );
        let ramp = VectorField::from_fn(grid.clone(), 2, |p, o| {
            o[0] = p[0].max(0.0);
            o[1] = 0.0;
        });
        let j = evaluate_j(&ramp, &q).unwrap();
        assert_eq!(j.total, j.dirichlet + j.volume);
        assert!((j.total - 4.0).abs() <= 4.0 * grid.h()[0]);
        let full = VectorField::from_fn(grid.clone(), 2, |_, o| o.fill(1.0));
        assert_abs_diff_eq!(evaluate_j(&full, &q).unwrap().total, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn smoothed_examples() {
        let grid = g(17);
        let q = ones(&grid);
        let eps = 0.1;
        assert_eq!(
            evaluate_j_smoothed(&VectorField::zeros(grid.clone(), 2), &q, eps).unwrap(),
            0.0
        );
        let sat = VectorField::from_fn(grid.clone(), 2, |_, o| {
            o[0] = eps;
            o[1] = 0.0;
        });
        assert_abs_diff_eq!(
            evaluate_j_smoothed(&sat, &q, eps).unwrap(),
            4.0,
            epsilon = 1e-12
        );
        let half = VectorField::from_fn(grid.clone(), 2, |_, o| {
            o[0] = eps / 2.0;
            o[1] = 0.0;
        });
        assert_abs_diff_eq!(
            evaluate_j_smoothed(&half, &q, eps).unwrap(),
            2.0,
            epsilon = 1e-12
        );
        assert!(evaluate_j_smoothed(&half, &q, 0.0).is_err());
    }

    #[test]
    fn smoothed_never_exceeds_exact() {
        let grid = g(33);
        let q = WeightField::from_fn(grid.clone(), |p| 1.0 + 0.5 * p[0] * p[0]).unwrap();
        let u = VectorField::from_fn(grid.clone(), 2, |p, o| {
            o[0] = (p[0] - 0.1).max(0.0);
            o[1] = (0.3 * p[1] - 0.2 * p[0]).max(0.0);
        });
        let exact = evaluate_j(&u, &q).unwrap().total;
        for eps in [1e-4, 1e-2, 0.1, 1.0, 10.0] {
            assert!(evaluate_j_smoothed(&u, &q, eps).unwrap() <= exact + 1e-12);
        }
    }

    fn smooth_random_field(grid: &GridSpec<f64>, rng: &mut ChaCha8Rng) -> VectorField<f64> {
        let a: [f64; 6] = std::array::from_fn(|_| rng.gen_range(0.5..2.0));
        VectorField::from_fn(grid.clone(), 2, |p, o| {
            o[0] = 0.6 + 0.3 * (a[0] * p[0] + a[1] * p[1]).sin();
            o[1] = 0.5 + 0.2 * (a[2] * p[0] * p[1] + a[3]).cos() + 0.1 * a[4] * p[1];
        })
    }

    fn check_gradient(eps: f64, seed: u64) {
        let grid = g(21);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = WeightField::from_fn(grid.clone(), |p| 1.0 + 0.3 * (p[0] + p[1]).abs()).unwrap();
        let u = smooth_random_field(&grid, &mut rng);
        let grad = smoothed_gradient(&u, &q, eps).unwrap();
        let step = 1e-6;
        for _ in 0..100 {
            let k = rng.gen_range(0..2);
            let p = rng.gen_range(0..grid.len());
            let mut up = u.clone();
            up.comp_mut(k)[p] += step;
            let mut dn = u.clone();
            dn.comp_mut(k)[p] -= step;
            let fd = (evaluate_j_smoothed(&up, &q, eps).unwrap()
                - evaluate_j_smoothed(&dn, &q, eps).unwrap())
                / (2.0 * step);
            let an = grad[k][p];
            let rel = (fd - an).abs() / an.abs().max(1e-3);
            assert!(rel <= 1e-5, "eps={eps} node {p} comp {k}: fd {fd} vs {an}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        check_gradient(5.0, 1);
        check_gradient(1e-3, 2);
    }

    #[test]
    fn metric_examples() {
        let grid = g(33);
        let u = VectorField::from_fn(grid.clone(), 2, |p, o| {
            o[0] = p[0].max(0.0);
            o[1] = p[1] * p[1];
        });
        assert_eq!(metric_d(&u, &u).unwrap(), 0.0);
        let c = 0.7;
        let zero = VectorField::zeros(grid.clone(), 1);
        let konst = VectorField::from_fn(grid.clone(), 1, |_, o| o[0] = c);
        assert_abs_diff_eq!(
            metric_d(&zero, &konst).unwrap(),
            2.0 * c + 4.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn psi_rho_examples() {
        let rho = 0.25f64;
        assert_eq!(psi_rho([rho, 0.0], rho).unwrap(), 0.0);
        assert_abs_diff_eq!(psi_rho([0.0, 1.0], rho).unwrap(), 1.0, epsilon = 1e-15);
        let s = rho.sqrt() / 2f64.sqrt();
        assert_abs_diff_eq!(psi_rho([s, s], rho).unwrap(), 0.5, epsilon = 1e-14);
        assert_eq!(psi_rho([0.01, 0.0], rho).unwrap(), 0.0);
        assert!(psi_rho([0.5, 0.0], 1.0).is_err());
        assert!(psi_rho([0.5, 0.0], 0.0).is_err());
    }

    #[test]
    fn psi_rho_is_discretely_harmonic_in_annulus() {
        let rho = 0.2;
        let h = 1e-3;
        for &(x, y) in &[(0.5, 0.1), (-0.3, 0.6), (0.0, -0.8)] {
            let f = |a: f64, b: f64| psi_rho([a, b], rho).unwrap();
            let lap =
                (f(x + h, y) + f(x - h, y) + f(x, y + h) + f(x, y - h) - 4.0 * f(x, y)) / (h * h);
            assert!(lap.abs() < 1e-4, "{lap}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn field(grid: &GridSpec<f64>, a: f64, b: f64, c: f64) -> VectorField<f64> {
            VectorField::from_fn(grid.clone(), 2, |p, o| {
                o[0] = (a * p[0] + b).max(0.0);
                o[1] = (c * p[1] * p[0] + 0.2 * b).max(0.0);
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]
            #[test]
            fn metric_is_symmetric_and_triangular(
                a in -2.0f64..2.0, b in -1.0f64..1.0, c in -2.0f64..2.0,
                d in -2.0f64..2.0, e in -1.0f64..1.0, f in -2.0f64..2.0,
                x in -2.0f64..2.0, y in -1.0f64..1.0, z in -2.0f64..2.0,
            ) {
                let grid = g(17);
                let u = field(&grid, a, b, c);
                let v = field(&grid, d, e, f);
                let w = field(&grid, x, y, z);
                let uv = metric_d(&u, &v).unwrap();
                prop_assert_eq!(uv, metric_d(&v, &u).unwrap());
                let uw = metric_d(&u, &w).unwrap();
                let wv = metric_d(&w, &v).unwrap();
                prop_assert!(uv <= uw + wv + 1e-12);
            }

            #[test]
            fn energy_is_nonnegative(a in -2.0f64..2.0, b in -1.0f64..1.0, c in -2.0f64..2.0) {
                let grid = g(9);
                let q = ones(&grid);
                let j = evaluate_j(&field(&grid, a, b, c), &q).unwrap();
                prop_assert!(j.total >= 0.0 && j.dirichlet >= 0.0 && j.volume >= 0.0);
                prop_assert_eq!(j.total, j.dirichlet + j.volume);
            }
        }
    }
}
