use serde::Serialize;

use crate::error::{FbError, Result};
use crate::grid::{
    cell_grad, cell_grad_sq, default_sphere_samples, interp, interp_gradient, sphere_mean,
    VectorField, WeightField,
};
use crate::scalar::{lit, pi, to_f64, Scalar};

use super::free_boundary::{dist, FreeBoundary};

/// Both sides of one identity and their normalized difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs − rhs| / |lhs|`, zero when both sides vanish.
    pub residual: f64,
}

impl IdentityCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        let diff = (lhs - rhs).abs();
        let residual = if diff == 0.0 {
            0.0
        } else if lhs == 0.0 {
            f64::INFINITY
        } else {
            diff / lhs.abs()
        };
        IdentityCheck { lhs, rhs, residual }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityResiduals {
    pub center: [f64; 2],
    pub r: f64,
    pub energy: IdentityCheck,
    pub pohozaev: IdentityCheck,
    pub domain_variation: IdentityCheck,
}

/// A vector test field: value `Ψ(x)` and Jacobian `J[j][k] = ∂_k Ψ_j`.
pub type TestField<T> = dyn Fn([T; 2]) -> ([T; 2], [[T; 2]; 2]);

/// `Ψ(x) = η(x) d` with `η = (1 − |x − c|²/r²)²` on `B_r(c)`.
pub fn bump_field<T: Scalar>(
    c: [T; 2],
    r: T,
    d: [T; 2],
) -> impl Fn([T; 2]) -> ([T; 2], [[T; 2]; 2]) {
    move |x| {
        let dx = x[0] - c[0];
        let dy = x[1] - c[1];
        let s = T::one() - (dx * dx + dy * dy) / (r * r);
        if s <= T::zero() {
            return ([T::zero(); 2], [[T::zero(); 2]; 2]);
        }
        let eta = s * s;
        let k = lit::<T>(-4.0) * s / (r * r);
        let g = [k * dx, k * dy];
        (
            [eta * d[0], eta * d[1]],
            [[d[0] * g[0], d[0] * g[1]], [d[1] * g[0], d[1] * g[1]]],
        )
    }
}

/// Residuals of the energy identity, the Pohožaev identity on `B_r(x)` and
/// the first domain variation against `psi`.
///
/// The measure `∇χ{|u|>0}` is the interface measure times the inner normal;
/// its pairing with a field `F` is the sum of `Q² F·jump` over interface
/// points.
pub fn identity_residuals<T: Scalar>(
    u: &VectorField<T>,
    q: &WeightField<T>,
    fb: &FreeBoundary<T>,
    x: [T; 2],
    r: T,
    psi: &TestField<T>,
) -> Result<IdentityResiduals> {
    let grid = u.grid();
    if !grid.same_as(q.grid()) {
        return Err(FbError::GridMismatch);
    }
    grid.check_ball(x, r)?;
    let two: T = lit(2.0);
    let circle = two * pi::<T>() * r;
    let n = default_sphere_samples(grid, r);

    let grad_sq = grid.integrate_ball_cells(x, r, |ci, cj| {
        u.comps()
            .iter()
            .map(|c| cell_grad_sq(grid, c, ci, cj))
            .sum::<T>()
    })?;
    let radial = |p: [T; 2]| {
        let d = dist(p, x);
        [(p[0] - x[0]) / d, (p[1] - x[1]) / d]
    };
    let flux = circle
        * sphere_mean(grid, n, x, r, |p| {
            let nu = radial(p);
            let mut acc = T::zero();
            for c in u.comps() {
                let g = interp_gradient(grid, c, p)?;
                acc += interp(grid, c, p)? * (g[0] * nu[0] + g[1] * nu[1]);
            }
            Ok(acc)
        })?;
    let energy = IdentityCheck::new(to_f64(grad_sq), to_f64(flux));

    let sphere_term = r
        * circle
        * sphere_mean(grid, n, x, r, |p| {
            let nu = radial(p);
            let mut acc = T::zero();
            for c in u.comps() {
                let g = interp_gradient(grid, c, p)?;
                let dn = g[0] * nu[0] + g[1] * nu[1];
                acc += g[0] * g[0] + g[1] * g[1] - two * dn * dn;
            }
            Ok(acc)
        })?;
    let mut measure_term = T::zero();
    for k in 0..fb.len() {
        let p = fb.points[k];
        if dist(p, x) >= r {
            continue;
        }
        let qp = q.at(p)?;
        let mu = fb.jumps[k];
        measure_term += qp * qp * ((p[0] - x[0]) * mu[0] + (p[1] - x[1]) * mu[1]);
    }
    let pohozaev = IdentityCheck::new(
        to_f64(two * grad_sq),
        to_f64(two * grad_sq + sphere_term + measure_term),
    );

    let area = grid.cell_area();
    let mut volume = T::zero();
    for cj in 0..grid.cells_y() {
        for ci in 0..grid.cells_x() {
            let (_, jac) = psi(grid.cell_center(ci, cj));
            let div = jac[0][0] + jac[1][1];
            if jac.iter().flatten().all(|&v| v == T::zero()) {
                continue;
            }
            let mut acc = T::zero();
            for c in u.comps() {
                let g = cell_grad(grid, c, ci, cj);
                let quad = g[0] * (jac[0][0] * g[0] + jac[0][1] * g[1])
                    + g[1] * (jac[1][0] * g[0] + jac[1][1] * g[1]);
                acc += two * quad - (g[0] * g[0] + g[1] * g[1]) * div;
            }
            volume += acc * area;
        }
    }
    let mut surface = T::zero();
    for k in 0..fb.len() {
        let p = fb.points[k];
        let (v, _) = psi(p);
        if v[0] == T::zero() && v[1] == T::zero() {
            continue;
        }
        let qp = q.at(p)?;
        let mu = fb.jumps[k];
        surface += qp * qp * (v[0] * mu[0] + v[1] * mu[1]);
    }
    let domain_variation = IdentityCheck::new(to_f64(volume), to_f64(-surface));

    Ok(IdentityResiduals {
        center: [to_f64(x[0]), to_f64(x[1])],
        r: to_f64(r),
        energy,
        pohozaev,
        domain_variation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::extract_free_boundary;
    use crate::grid::GridSpec;
    use crate::homogeneous::{halfplane_field, HalfPlaneSpec};

    fn run(n: usize, nu: [f64; 2]) -> IdentityResiduals {
        let g = GridSpec::square(-1.0, 1.0, n).unwrap();
        let spec = HalfPlaneSpec::new(1.0, nu, vec![0.6, 0.8]).unwrap();
        let u = halfplane_field(&spec, &g);
        let q = WeightField::constant(g.clone(), 1.0).unwrap();
        let fb = extract_free_boundary(&u.positivity_mask()).unwrap();
        let x = fb.points[fb.nearest([0.0, 0.0]).unwrap().0];
        let psi = bump_field(x, 0.4, [1.0, 0.5]);
        identity_residuals(&u, &q, &fb, x, 0.4, &psi).unwrap()
    }

    #[test]
    fn half_plane_residuals_shrink() {
        for nu in [[1.0, 0.0], [0.6, -0.8]] {
            let coarse = run(257, nu);
            let fine = run(513, nu);
            for (a, b) in [
                (coarse.energy, fine.energy),
                (coarse.pohozaev, fine.pohozaev),
                (coarse.domain_variation, fine.domain_variation),
            ] {
                assert!(b.residual <= 0.05, "{fine:?}");
                assert!(a.residual / b.residual >= 1.5, "{coarse:?} {fine:?}");
            }
        }
    }

    #[test]
    fn zero_field_and_zero_test_field() {
        let g = GridSpec::square(-1.0, 1.0, 33).unwrap();
        let q = WeightField::constant(g.clone(), 1.0).unwrap();
        let empty = FreeBoundary {
            points: vec![],
            normals: vec![],
            weights: vec![],
            jumps: vec![],
            edges: vec![],
            h: g.h_max(),
        };
        let u = VectorField::zeros(g.clone(), 2);
        let psi = bump_field([0.0, 0.0], 0.5, [1.0, 0.0]);
        let r = identity_residuals(&u, &q, &empty, [0.0, 0.0], 0.5, &psi).unwrap();
        for c in [r.energy, r.pohozaev, r.domain_variation] {
            assert_eq!((c.lhs, c.residual), (0.0, 0.0));
        }
        let none = |_: [f64; 2]| ([0.0; 2], [[0.0; 2]; 2]);
        let spec = HalfPlaneSpec::scalar(1.0, [1.0, 0.0]).unwrap();
        let v = halfplane_field(&spec, &g);
        let fb = extract_free_boundary(&v.positivity_mask()).unwrap();
        let r = identity_residuals(&v, &q, &fb, [0.0, 0.0], 0.5, &none).unwrap();
        assert_eq!(r.domain_variation.residual, 0.0);
    }
}
