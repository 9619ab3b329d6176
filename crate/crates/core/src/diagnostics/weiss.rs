use serde::Serialize;

use crate::error::{FbError, Result};
use crate::grid::{
    cell_grad_sq, default_sphere_samples, sphere_mean, GridSpec, VectorField, WeightField,
};
use crate::scalar::{lit, pi, to_f64, Scalar};

use super::scaling::check_radii;

/// Multiplier of `Q_max² h / r` in the per-radius tolerance.
pub const WEISS_TOL_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeissCurve {
    pub center: [f64; 2],
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub tol: Vec<f64>,
}

impl WeissCurve {
    /// CSV with header `r,W,tol`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,W,tol\n");
        for k in 0..self.radii.len() {
            s.push_str(&format!(
                "{:?},{:?},{:?}\n",
                self.radii[k], self.values[k], self.tol[k]
            ));
        }
        s
    }

    /// Largest drop `W(r_k) − W(r_{k+1})` between consecutive radii (zero if none).
    pub fn max_drop(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(0.0, f64::max)
    }

    /// Whether every consecutive drop stays within `slack`.
    pub fn monotone_within(&self, slack: f64) -> bool {
        self.values.windows(2).all(|w| w[1] >= w[0] - slack)
    }

    /// Whether each drop stays within the larger radius' tolerance.
    pub fn monotone_within_tolerance(&self) -> bool {
        self.values
            .windows(2)
            .zip(self.tol.windows(2))
            .all(|(w, t)| w[1] >= w[0] - t[0].max(t[1]))
    }
}

/// Distance from positive node `a` towards zero node `b` at which `|u|`,
/// extrapolated linearly from `a` and the node behind it, vanishes.
fn crossing<T: Scalar>(grid: &GridSpec<T>, norm: &[T], a: usize, b: usize, tol: T) -> T {
    let (ia, ja) = grid.ij(a);
    let (ib, jb) = grid.ij(b);
    let len = if ja == jb { grid.h()[0] } else { grid.h()[1] };
    let half = len * lit(0.5);
    let behind = (2 * ia as isize - ib as isize, 2 * ja as isize - jb as isize);
    if behind.0 < 0
        || behind.1 < 0
        || behind.0 >= grid.nx() as isize
        || behind.1 >= grid.ny() as isize
    {
        return half;
    }
    let c = grid.idx(behind.0 as usize, behind.1 as usize);
    let rise = norm[c] - norm[a];
    if !(norm[c] > tol) || !(rise > T::zero()) {
        return half;
    }
    (norm[a] / rise * len).min(len)
}

/// Positive area fraction of a cell, from the polygon through its positive
/// corners and the extrapolated crossings on its cut edges.
pub(crate) fn positive_fraction<T: Scalar>(
    grid: &GridSpec<T>,
    norm: &[T],
    ci: usize,
    cj: usize,
    tol: T,
) -> T {
    let [p00, p10, p01, p11] = grid.cell_nodes(ci, cj);
    let ring = [p00, p10, p11, p01];
    let pos: Vec<bool> = ring.iter().map(|&p| norm[p] > tol).collect();
    if pos.iter().all(|&b| b) {
        return T::one();
    }
    if !pos.iter().any(|&b| b) {
        return T::zero();
    }
    let [hx, hy] = grid.h();
    let corner = [
        [T::zero(), T::zero()],
        [hx, T::zero()],
        [hx, hy],
        [T::zero(), hy],
    ];
    let mut poly: Vec<[T; 2]> = Vec::with_capacity(6);
    for k in 0..4 {
        let l = (k + 1) % 4;
        if pos[k] {
            poly.push(corner[k]);
        }
        if pos[k] != pos[l] {
            let (a, b, ca, cb) = if pos[k] {
                (ring[k], ring[l], corner[k], corner[l])
            } else {
                (ring[l], ring[k], corner[l], corner[k])
            };
            let d = crossing(grid, norm, a, b, tol);
            let len = ((cb[0] - ca[0]).powi(2) + (cb[1] - ca[1]).powi(2)).sqrt();
            let s = d / len;
            poly.push([ca[0] + s * (cb[0] - ca[0]), ca[1] + s * (cb[1] - ca[1])]);
        }
    }
    let mut twice = T::zero();
    for k in 0..poly.len() {
        let a = poly[k];
        let b = poly[(k + 1) % poly.len()];
        twice += a[0] * b[1] - a[1] * b[0];
    }
    (twice.abs() * lit(0.5) / (hx * hy)).min(T::one())
}

/// `W(r) = r⁻² ∫_{B_r(x)} (|∇u|² + Q² χ) − r⁻³ ∫_{∂B_r(x)} |u|²`.
///
/// The positive area of cells cut by the interface is reconstructed from
/// the crossings of `|u|` along their edges.
pub fn weiss_value<T: Scalar>(
    u: &VectorField<T>,
    q: &WeightField<T>,
    x: [T; 2],
    r: T,
) -> Result<T> {
    let grid = u.grid();
    if !grid.same_as(q.grid()) {
        return Err(FbError::GridMismatch);
    }
    let tol = u.positivity_tol();
    let (ci0, cj0, ci1, cj1) = grid.cell_window(x, r);
    let mut norm = vec![T::zero(); grid.len()];
    let (i0, i1) = (ci0.saturating_sub(1), (ci1 + 3).min(grid.nx()));
    let (j0, j1) = (cj0.saturating_sub(1), (cj1 + 3).min(grid.ny()));
    for j in j0..j1 {
        for i in i0..i1 {
            let p = grid.idx(i, j);
            norm[p] = u.norm_at(p);
        }
    }
    let bulk = grid.integrate_ball_cells(x, r, |ci, cj| {
        let mut e = T::zero();
        for c in u.comps() {
            e += cell_grad_sq(grid, c, ci, cj);
        }
        let frac = positive_fraction(grid, &norm, ci, cj, tol);
        if frac > T::zero() {
            let qm = q.cell_mean(ci, cj);
            e += qm * qm * frac;
        }
        e
    })?;
    let n = default_sphere_samples(grid, r);
    let mean_sq = sphere_mean(grid, n, x, r, |p| {
        let v = u.sample(p)?;
        Ok(v.iter().map(|&a| a * a).sum::<T>())
    })?;
    let boundary = lit::<T>(2.0) * pi::<T>() * r * mean_sq;
    Ok(bulk / (r * r) - boundary / (r * r * r))
}

/// Weiss energies at increasing radii about `x`.
pub fn weiss_curve<T: Scalar>(
    u: &VectorField<T>,
    q: &WeightField<T>,
    x: [T; 2],
    radii: &[T],
) -> Result<WeissCurve> {
    let grid = u.grid();
    check_radii(grid, x, radii)?;
    if radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(FbError::InvalidArgument(
            "radii must be strictly increasing".into(),
        ));
    }
    let h = to_f64(grid.h_max());
    let qmax = to_f64(q.q_max());
    let mut values = Vec::with_capacity(radii.len());
    for &r in radii {
        values.push(to_f64(weiss_value(u, q, x, r)?));
    }
    Ok(WeissCurve {
        center: [to_f64(x[0]), to_f64(x[1])],
        radii: radii.iter().map(|&r| to_f64(r)).collect(),
        tol: radii
            .iter()
            .map(|&r| WEISS_TOL_FACTOR * qmax * qmax * h / to_f64(r))
            .collect(),
        values,
    })
}

/// Dyadic radii `r_max, r_max/2, …` down to `r_min`, returned in increasing order.
pub fn dyadic_radii<T: Scalar>(r_min: T, r_max: T) -> Vec<T> {
    let mut out = Vec::new();
    let mut r = r_max;
    while r >= r_min * lit(1.0 - 1e-12) {
        out.push(r);
        r *= lit(0.5);
    }
    out.reverse();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::homogeneous::{halfplane_field, HalfPlaneSpec};
    use std::f64::consts::PI;

    #[test]
    fn cut_cells_get_exact_fractions_for_linear_profiles() {
        let g = GridSpec::square(-1.0, 1.0, 33).unwrap();
        let nu = [0.6f64, -0.8];
        let u = VectorField::from_fn(g.clone(), 1, |p, o| o[0] = (p[0] * nu[0] + p[1] * nu[1] - 0.01).max(0.0));
        let norm: Vec<f64> = (0..g.len()).map(|p| u.norm_at(p)).collect();
        let tol = u.positivity_tol();
        // sub-sampled area of {ν·x > 0.01} per cell
        let k = 400;
        for cj in 10..22 {
            for ci in 10..22 {
                let c0 = g.node(ci, cj);
                let [hx, hy] = g.h();
                let mut inside = 0;
                for a in 0..k {
                    for b in 0..k {
                        let x = c0[0] + (a as f64 + 0.5) / k as f64 * hx;
                        let y = c0[1] + (b as f64 + 0.5) / k as f64 * hy;
                        if x * nu[0] + y * nu[1] > 0.01 {
                            inside += 1;
                        }
                    }
                }
                let want = inside as f64 / (k * k) as f64;
                let got = positive_fraction(&g, &norm, ci, cj, tol);
                assert!((got - want).abs() < 5e-3, "cell {ci},{cj}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn zero_field() {
        let g = GridSpec::square(-1.0, 1.0, 65).unwrap();
        let u = VectorField::zeros(g.clone(), 2);
        let q = WeightField::constant(g, 1.0).unwrap();
        let c = weiss_curve(&u, &q, [0.0, 0.0], &[0.125, 0.25, 0.5]).unwrap();
        assert!(c.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn half_plane_is_constant() {
        for (q0, nu) in [(1.0, [1.0, 0.0]), (0.7, [0.6, -0.8])] {
            let g = GridSpec::square(-1.0, 1.0, 257).unwrap();
            let spec = HalfPlaneSpec::new(q0, nu, vec![0.6, 0.8]).unwrap();
            let u = halfplane_field(&spec, &g);
            let q = WeightField::constant(g.clone(), q0).unwrap();
            let c = weiss_curve(&u, &q, [0.0, 0.0], &dyadic_radii(0.05, 0.4)).unwrap();
            let target = q0 * q0 * PI / 2.0;
            for k in 0..c.radii.len() {
                assert!((c.values[k] - target).abs() <= c.tol[k], "{c:?}");
            }
        }
    }

    #[test]
    fn radii_checks() {
        let g = GridSpec::square(-1.0, 1.0, 65).unwrap();
        let u = VectorField::zeros(g.clone(), 1);
        let q = WeightField::constant(g, 1.0).unwrap();
        assert!(weiss_curve(&u, &q, [0.0, 0.0], &[0.2, 0.1]).is_err());
        assert!(weiss_curve(&u, &q, [0.9, 0.0], &[0.2]).is_err());
        assert!(weiss_curve(&u, &q, [0.0, 0.0], &[0.01]).is_err());
    }

    #[test]
    fn csv_layout() {
        let c = WeissCurve {
            center: [0.0, 0.0],
            radii: vec![0.1, 0.2],
            values: vec![1.5, 1.25],
            tol: vec![0.5, 0.25],
        };
        assert_eq!(c.to_csv(), "r,W,tol\n0.1,1.5,0.5\n0.2,1.25,0.25\n");
        assert_eq!(c.max_drop(), 0.25);
        assert!(c.monotone_within(0.3) && !c.monotone_within(0.2));
        assert!(c.monotone_within_tolerance());
    }

    #[test]
    fn dyadic() {
        assert_eq!(dyadic_radii(0.1, 0.4), vec![0.1, 0.2, 0.4]);
        assert_eq!(dyadic_radii(0.11, 0.4), vec![0.2, 0.4]);
    }
}
