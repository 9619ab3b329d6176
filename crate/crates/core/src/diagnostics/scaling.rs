use serde::Serialize;

use crate::error::{FbError, Result};
use crate::grid::{default_sphere_samples, interp, sphere_mean, GridSpec, Mask, VectorField};
use crate::scalar::{lit, pi, to_f64, Scalar};

use super::free_boundary::{dist, estimate_normal, FreeBoundary};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub r: f64,
    /// Circle mean of each component divided by `r`.
    pub sphere_avg_over_r: Vec<f64>,
    pub sup_over_r: f64,
    pub zero_density: f64,
    /// Largest difference quotient of `u` along grid edges inside `B_{r/3}`.
    pub lipschitz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub center: [f64; 2],
    pub rows: Vec<ScalingRow>,
    pub sup_min: f64,
    pub sup_max: f64,
    pub avg_min: f64,
    pub avg_max: f64,
    pub density_min: f64,
    pub density_max: f64,
    pub lipschitz_max: f64,
}

pub(crate) fn check_radii<T: Scalar>(grid: &GridSpec<T>, x: [T; 2], radii: &[T]) -> Result<()> {
    if radii.is_empty() {
        return Err(FbError::InvalidArgument("no radii given".into()));
    }
    let min_r = grid.h_max() * lit(4.0) * lit(1.0 - 1e-9);
    for &r in radii {
        if r < min_r {
            return Err(FbError::InvalidArgument(format!(
                "radius {} is below four grid spacings",
                to_f64(r)
            )));
        }
        grid.check_ball(x, r)?;
    }
    Ok(())
}

/// `|B_r(x) ∩ {|u| = 0}| / |B_r|` with zero cells those having no positive node.
pub fn zero_density<T: Scalar>(mask: &Mask<T>, x: [T; 2], r: T) -> Result<T> {
    let zero = mask.grid().integrate_ball_cells(x, r, |ci, cj| {
        if mask.cell_positive(ci, cj) {
            T::zero()
        } else {
            T::one()
        }
    })?;
    Ok(zero / (pi::<T>() * r * r))
}

fn sup_in_ball<T: Scalar>(u: &VectorField<T>, x: [T; 2], r: T) -> T {
    let grid = u.grid();
    let (i0, i1) = grid.node_range(0, x[0] - r, x[0] + r);
    let (j0, j1) = grid.node_range(1, x[1] - r, x[1] + r);
    let mut best = T::zero();
    for j in j0..=j1 {
        for i in i0..=i1 {
            if dist(grid.node(i, j), x) <= r {
                best = best.max(u.norm_at(grid.idx(i, j)));
            }
        }
    }
    best
}

fn lipschitz_in_ball<T: Scalar>(u: &VectorField<T>, x: [T; 2], r: T) -> T {
    let grid = u.grid();
    let [hx, hy] = grid.h();
    let (i0, i1) = grid.node_range(0, x[0] - r, x[0] + r);
    let (j0, j1) = grid.node_range(1, x[1] - r, x[1] + r);
    let inside = |i: usize, j: usize| dist(grid.node(i, j), x) <= r;
    let diff = |p: usize, q: usize| {
        u.comps()
            .iter()
            .map(|c| (c[p] - c[q]).powi(2))
            .sum::<T>()
            .sqrt()
    };
    let mut best = T::zero();
    for j in j0..=j1 {
        for i in i0..=i1 {
            if !inside(i, j) {
                continue;
            }
            let p = grid.idx(i, j);
            if i < i1 && inside(i + 1, j) {
                best = best.max(diff(p, p + 1) / hx);
            }
            if j < j1 && inside(i, j + 1) {
                best = best.max(diff(p, p + grid.nx()) / hy);
            }
        }
    }
    best
}

/// Growth, nondegeneracy, density and Lipschitz ratios at a free boundary
/// point over the given radii.
pub fn scaling_report<T: Scalar>(
    u: &VectorField<T>,
    fb: &FreeBoundary<T>,
    x: [T; 2],
    radii: &[T],
) -> Result<ScalingReport> {
    let grid = u.grid();
    fb.require_near(x)?;
    check_radii(grid, x, radii)?;
    let mask = u.positivity_mask();
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let n = default_sphere_samples(grid, r);
        let mut avgs = Vec::with_capacity(u.m());
        for k in 0..u.m() {
            let c = u.comp(k);
            avgs.push(to_f64(
                sphere_mean(grid, n, x, r, |p| interp(grid, c, p))? / r,
            ));
        }
        rows.push(ScalingRow {
            r: to_f64(r),
            sphere_avg_over_r: avgs,
            sup_over_r: to_f64(sup_in_ball(u, x, r) / r),
            zero_density: to_f64(zero_density(&mask, x, r)?),
            lipschitz: to_f64(lipschitz_in_ball(u, x, r / lit(3.0))),
        });
    }
    let fold = |f: &dyn Fn(&ScalingRow) -> f64| {
        rows.iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    };
    let (sup_min, sup_max) = fold(&|r| r.sup_over_r);
    let (avg_min, avg_max) = fold(&|r| r.sphere_avg_over_r.iter().sum());
    let (density_min, density_max) = fold(&|r| r.zero_density);
    let (_, lipschitz_max) = fold(&|r| r.lipschitz);
    Ok(ScalingReport {
        center: [to_f64(x[0]), to_f64(x[1])],
        rows,
        sup_min,
        sup_max,
        avg_min,
        avg_max,
        density_min,
        density_max,
        lipschitz_max,
    })
}

/// Flatness `σ*` of the positivity set in `B_ρ(x)` in the direction `ν`.
pub fn flatness_with_normal<T: Scalar>(mask: &Mask<T>, x: [T; 2], rho: T, nu: [T; 2]) -> Result<T> {
    let grid = mask.grid();
    grid.check_ball(x, rho)?;
    let (i0, i1) = grid.node_range(0, x[0] - rho, x[0] + rho);
    let (j0, j1) = grid.node_range(1, x[1] - rho, x[1] + rho);
    let mut top = T::neg_infinity();
    let mut any_zero = false;
    for j in j0..=j1 {
        for i in i0..=i1 {
            let p = grid.node(i, j);
            if dist(p, x) > rho {
                continue;
            }
            if mask.get(grid.idx(i, j)) {
                top = top.max((p[0] - x[0]) * nu[0] + (p[1] - x[1]) * nu[1]);
            } else {
                any_zero = true;
            }
        }
    }
    if !any_zero {
        return Ok(T::one());
    }
    Ok((top / rho).max(T::zero()).min(T::one()))
}

/// `(σ*, ν)` at a free boundary point, with `ν` fitted over `B_ρ(x)`.
pub fn flatness<T: Scalar>(
    u: &VectorField<T>,
    fb: &FreeBoundary<T>,
    x: [T; 2],
    rho: T,
) -> Result<(T, [T; 2])> {
    let grid = u.grid();
    grid.check_ball(x, rho)?;
    fb.require_near(x)?;
    let fit = rho.max(super::default_fit_radius(grid));
    let nu = estimate_normal(fb, grid, x, fit)?;
    let sigma = flatness_with_normal(&u.positivity_mask(), x, rho, nu)?;
    Ok((sigma, nu))
}

/// Exact Euclidean distance from every node to the nearest node where `target` holds.
pub(crate) fn distance_to<T: Scalar>(grid: &GridSpec<T>, target: impl Fn(usize) -> bool) -> Vec<T> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let [hx, hy] = grid.h();
    let big = T::max_value() / lit(4.0);
    let mut f: Vec<T> = (0..grid.len())
        .map(|p| if target(p) { T::zero() } else { big })
        .collect();
    let mut line = Vec::new();
    let mut out = Vec::new();
    for j in 0..ny {
        line.clear();
        line.extend((0..nx).map(|i| f[grid.idx(i, j)]));
        lower_envelope(&line, hx, &mut out);
        for i in 0..nx {
            f[grid.idx(i, j)] = out[i];
        }
    }
    for i in 0..nx {
        line.clear();
        line.extend((0..ny).map(|j| f[grid.idx(i, j)]));
        lower_envelope(&line, hy, &mut out);
        for j in 0..ny {
            f[grid.idx(i, j)] = out[j];
        }
    }
    f.into_iter()
        .map(|v| if v >= big { T::infinity() } else { v.sqrt() })
        .collect()
}

/// `out[q] = min_p f[p] + (h(q − p))²` by the parabola envelope.
fn lower_envelope<T: Scalar>(f: &[T], h: T, out: &mut Vec<T>) {
    let n = f.len();
    out.clear();
    out.resize(n, T::zero());
    let big = T::max_value() / lit(4.0);
    let sites: Vec<usize> = (0..n).filter(|&p| f[p] < big).collect();
    if sites.is_empty() {
        out.iter_mut().for_each(|v| *v = big);
        return;
    }
    let h2 = h * h;
    let pos = |p: usize| T::from_usize(p).unwrap();
    let cross = |a: usize, b: usize| {
        ((f[b] / h2 + pos(b) * pos(b)) - (f[a] / h2 + pos(a) * pos(a)))
            / (lit::<T>(2.0) * (pos(b) - pos(a)))
    };
    let mut v: Vec<usize> = vec![sites[0]];
    let mut z: Vec<T> = vec![T::neg_infinity(), T::infinity()];
    for &q in &sites[1..] {
        let mut s = cross(*v.last().unwrap(), q);
        while s <= z[v.len() - 1] {
            v.pop();
            z.pop();
            s = cross(*v.last().unwrap(), q);
        }
        v.push(q);
        *z.last_mut().unwrap() = s;
        z.push(T::infinity());
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < pos(q) {
            k += 1;
        }
        let d = pos(q) - pos(v[k]);
        *o = f[v[k]] + h2 * d * d;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NtaRow {
    pub r: f64,
    pub corkscrew: [f64; 2],
    /// `r / (clearance of the best corkscrew point)`.
    pub best_m: f64,
    pub corkscrew_pass: bool,
    pub complement_density: f64,
    pub density_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NtaReport {
    pub center: [f64; 2],
    pub m: f64,
    pub c: f64,
    pub rows: Vec<NtaRow>,
    pub pass: bool,
}

/// Corkscrew and complement density tests for the positivity set at `x`.
///
/// The clearance of a node `a ∈ B_r(x)` is `min(dist(a, zero set), r − |a − x|)`;
/// the corkscrew test passes when some node has clearance above `r / M`.
pub fn nta_check<T: Scalar>(
    mask: &Mask<T>,
    fb: &FreeBoundary<T>,
    x: [T; 2],
    radii: &[T],
    big_m: T,
    c: T,
) -> Result<NtaReport> {
    let grid = mask.grid();
    fb.require_near(x)?;
    check_radii(grid, x, radii)?;
    if !(big_m > T::one()) {
        return Err(FbError::InvalidArgument(
            "corkscrew parameter M must exceed 1".into(),
        ));
    }
    let dz = distance_to(grid, |p| !mask.get(p));
    let mut rows = Vec::new();
    for &r in radii {
        let (i0, i1) = grid.node_range(0, x[0] - r, x[0] + r);
        let (j0, j1) = grid.node_range(1, x[1] - r, x[1] + r);
        let mut best = (T::zero(), x);
        for j in j0..=j1 {
            for i in i0..=i1 {
                let p = grid.idx(i, j);
                let a = grid.node(i, j);
                let inner = r - dist(a, x);
                if !mask.get(p) || inner <= T::zero() {
                    continue;
                }
                let clearance = dz[p].min(inner);
                if clearance > best.0 {
                    best = (clearance, a);
                }
            }
        }
        let density = zero_density(mask, x, r)?;
        rows.push(NtaRow {
            r: to_f64(r),
            corkscrew: [to_f64(best.1[0]), to_f64(best.1[1])],
            best_m: if best.0 > T::zero() {
                to_f64(r / best.0)
            } else {
                f64::INFINITY
            },
            corkscrew_pass: best.0 > r / big_m,
            complement_density: to_f64(density),
            density_pass: density >= c,
        });
    }
    let pass = rows.iter().all(|r| r.corkscrew_pass && r.density_pass);
    Ok(NtaReport {
        center: [to_f64(x[0]), to_f64(x[1])],
        m: to_f64(big_m),
        c: to_f64(c),
        rows,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::extract_free_boundary;
    use crate::homogeneous::{halfplane_field, HalfPlaneSpec};

    fn half_plane(n: usize, q0: f64) -> (VectorField<f64>, FreeBoundary<f64>) {
        let g = GridSpec::square(-1.0, 1.0, n).unwrap();
        let spec = HalfPlaneSpec::new(q0, [1.0, 0.0], vec![1.0]).unwrap();
        let u = halfplane_field(&spec, &g);
        let fb = extract_free_boundary(&u.positivity_mask()).unwrap();
        (u, fb)
    }

    #[test]
    fn half_plane_growth_is_exact() {
        let (u, fb) = half_plane(129, 1.5);
        let h = u.grid().h_max();
        let x = [h / 2.0, 0.0];
        let rep = scaling_report(&u, &fb, x, &[0.1, 0.2, 0.4]).unwrap();
        for row in &rep.rows {
            // the sup sits at the node nearest the rim on the positive axis
            assert!((row.sup_over_r - 1.5).abs() <= 1.5 * h / row.r, "{row:?}");
            assert!((row.zero_density - 0.5).abs() < h / row.r, "{row:?}");
            assert!((row.lipschitz - 1.5).abs() < 1e-12);
        }
        // on grid-aligned centres the sup is attained exactly
        let rep = scaling_report(&u, &fb, [0.0, 0.0], &[0.125, 0.25]).unwrap();
        for row in &rep.rows {
            assert!((row.sup_over_r - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_field_has_no_boundary_point() {
        let g = GridSpec::square(-1.0, 1.0, 17).unwrap();
        let u = VectorField::zeros(g, 1);
        assert!(extract_free_boundary(&u.positivity_mask()).is_err());
    }

    #[test]
    fn small_radii_rejected() {
        let (u, fb) = half_plane(65, 1.0);
        let h = u.grid().h_max();
        assert!(scaling_report(&u, &fb, [h / 2.0, 0.0], &[2.0 * h]).is_err());
        assert!(matches!(
            scaling_report(&u, &fb, [0.5, 0.0], &[0.2]),
            Err(FbError::NotOnFreeBoundary(..))
        ));
    }

    #[test]
    fn half_plane_is_flat() {
        let (u, fb) = half_plane(129, 1.0);
        let h = u.grid().h_max();
        let rho = 0.25;
        let (sigma, nu) = flatness(&u, &fb, [h / 2.0, 0.1], rho).unwrap();
        assert!(sigma <= 2.0 * h / rho);
        assert!((nu[0] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn tilted_flatness() {
        let g = GridSpec::<f64>::square(-1.0, 1.0, 129).unwrap();
        let h = g.h_max();
        let rho = 0.5;
        // zero beyond 0.3ρ along ν = (0, 1), positive below
        let mask = Mask::from_fn(g.clone(), |p| p[1] < 0.3 * rho);
        let s = flatness_with_normal(&mask, [0.0, 0.0], rho, [0.0, 1.0]).unwrap();
        assert!((s - 0.3).abs() <= 2.0 * h / rho);
        let full = Mask::from_fn(g, |_| true);
        assert_eq!(
            flatness_with_normal(&full, [0.0, 0.0], rho, [0.0, 1.0]).unwrap(),
            1.0
        );
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        let g = GridSpec::new([0.0, 0.0], [1.0, 2.0], [13, 21]).unwrap();
        let target = |p: usize| p % 17 == 3 || p == 100;
        let d = distance_to(&g, target);
        for p in 0..g.len() {
            let brute = (0..g.len())
                .filter(|&q| target(q))
                .map(|q| dist(g.node_at(p), g.node_at(q)))
                .fold(f64::INFINITY, f64::min);
            assert!((d[p] - brute).abs() < 1e-12, "{p}: {} vs {brute}", d[p]);
        }
    }

    #[test]
    fn half_plane_nta() {
        let (u, fb) = half_plane(129, 1.0);
        let mask = u.positivity_mask();
        let h = u.grid().h_max();
        let rep = nta_check(&mask, &fb, [h / 2.0, 0.0], &[0.125, 0.25, 0.5], 3.0, 0.05).unwrap();
        assert!(rep.pass);
        for row in &rep.rows {
            assert!((row.complement_density - 0.5).abs() < h / row.r);
            // best clearance is close to r/2
            assert!((row.best_m - 2.0).abs() < 0.2, "{row:?}");
            assert!(row.corkscrew[0] > 0.0);
        }
    }

    #[test]
    fn full_mask_fails_density() {
        let (u, fb) = half_plane(65, 1.0);
        let g = u.grid().clone();
        let full = Mask::from_fn(g.clone(), |_| true);
        let rep = nta_check(&full, &fb, [g.h_max() / 2.0, 0.0], &[0.25, 0.5], 3.0, 0.05).unwrap();
        assert!(rep.rows.iter().all(|r| r.corkscrew_pass && !r.density_pass));
    }
}
