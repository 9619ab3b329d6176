use crate::error::Result;
use crate::functional::{energy_on_cells, psi_rho, CellRange};
use crate::grid::{GridSpec, VectorField, WeightField};
use crate::scalar::{from_usize, Scalar};

/// Centres and radii visited by [`truncation_sweep`], in units of the grid spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationLattice<T> {
    pub spacing: usize,
    pub radii: Vec<usize>,
    pub rho: T,
}

impl<T: Scalar> Default for TruncationLattice<T> {
    fn default() -> Self {
        TruncationLattice {
            spacing: 8,
            radii: vec![8, 16, 32],
            rho: T::from_f64(0.5).unwrap(),
        }
    }
}

/// Caps every component on `B_r(x)` by `r·M·ψ_ρ((y−x)/r)`; returns the
/// previous values of the nodes that changed.
fn apply_barrier<T: Scalar>(
    grid: &GridSpec<T>,
    comps: &mut [Vec<T>],
    x: [T; 2],
    r: T,
    rho: T,
) -> Result<Vec<(usize, Vec<T>)>> {
    grid.check_ball(x, r)?;
    psi_rho([T::zero(), T::zero()], rho)?;
    let (i0, i1) = grid.node_range(0, x[0] - r, x[0] + r);
    let (j0, j1) = grid.node_range(1, x[1] - r, x[1] + r);
    let mut nodes = Vec::new();
    // r · M_{x,r} with M = sup_{B_r} |u| / r is just the sup
    let mut height = T::zero();
    for j in j0..=j1 {
        for i in i0..=i1 {
            let y = grid.node(i, j);
            let d = [(y[0] - x[0]) / r, (y[1] - x[1]) / r];
            if d[0] * d[0] + d[1] * d[1] <= T::one() {
                let p = grid.idx(i, j);
                let n2: T = comps.iter().map(|c| c[p] * c[p]).sum();
                height = height.max(n2.sqrt());
                nodes.push((p, d));
            }
        }
    }
    let mut saved = Vec::new();
    for (p, d) in nodes {
        let bar = height * psi_rho(d, rho)?;
        if comps.iter().any(|c| c[p] > bar) {
            saved.push((p, comps.iter().map(|c| c[p]).collect()));
            for c in comps.iter_mut() {
                c[p] = c[p].min(bar);
            }
        }
    }
    Ok(saved)
}

fn restore<T: Scalar>(comps: &mut [Vec<T>], saved: &[(usize, Vec<T>)]) {
    for (p, old) in saved {
        for (c, &v) in comps.iter_mut().zip(old) {
            c[*p] = v;
        }
    }
}

/// Applies the truncation in place when it strictly lowers `J`; returns the
/// local energies before and after when accepted.
pub(crate) fn try_truncation<T: Scalar>(
    grid: &GridSpec<T>,
    comps: &mut [Vec<T>],
    q: &WeightField<T>,
    tol: T,
    x: [T; 2],
    r: T,
    rho: T,
) -> Result<Option<(T, T)>> {
    let (ci0, cj0, ci1, cj1) = grid.cell_window(x, r);
    let range = CellRange { ci0, cj0, ci1, cj1 };
    let saved = apply_barrier(grid, comps, x, r, rho)?;
    if saved.is_empty() {
        return Ok(None);
    }
    let after = energy_on_cells(grid, comps, q, tol, range).total;
    restore(comps, &saved);
    let before = energy_on_cells(grid, comps, q, tol, range).total;
    if after < before {
        apply_barrier(grid, comps, x, r, rho)?;
        return Ok(Some((before, after)));
    }
    Ok(None)
}

/// `min(u_i(y), r·M·ψ_ρ((y−x)/r))` on `B_r(x)` with `M = sup_{B_r(x)} |u| / r`;
/// accepted iff the exact `J` strictly decreases.
pub fn truncation_move<T: Scalar>(
    u: &VectorField<T>,
    q: &WeightField<T>,
    x: [T; 2],
    r: T,
    rho: T,
) -> Result<(VectorField<T>, bool)> {
    if !u.grid().same_as(q.grid()) {
        return Err(crate::error::FbError::GridMismatch);
    }
    let grid = u.grid().clone();
    let tol = u.positivity_tol();
    let mut cand = u.clone();
    let saved = apply_barrier(&grid, cand.comps_mut(), x, r, rho)?;
    if saved.is_empty() {
        return Ok((cand, false));
    }
    let (ci0, cj0, ci1, cj1) = grid.cell_window(x, r);
    let range = CellRange { ci0, cj0, ci1, cj1 };
    let after = energy_on_cells(&grid, cand.comps(), q, tol, range).total;
    let before = energy_on_cells(&grid, u.comps(), q, tol, range).total;
    Ok((cand, after < before))
}

/// Visits every lattice centre whose balls fit in the domain; returns the
/// number of accepted truncations.
pub fn truncation_sweep<T: Scalar>(
    u: &mut VectorField<T>,
    q: &WeightField<T>,
    lattice: &TruncationLattice<T>,
) -> Result<usize> {
    let grid = u.grid().clone();
    let tol = u.positivity_tol();
    let h = grid.h_max();
    let step = lattice.spacing.max(1);
    let mut accepted = 0;
    for &rk in &lattice.radii {
        let r = h * from_usize(rk);
        for j in (step..grid.ny()).step_by(step) {
            for i in (step..grid.nx()).step_by(step) {
                let x = grid.node(i, j);
                if grid.check_ball(x, r).is_err() {
                    continue;
                }
                if try_truncation(&grid, u.comps_mut(), q, tol, x, r, lattice.rho)?.is_some() {
                    accepted += 1;
                }
            }
        }
    }
    Ok(accepted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::evaluate_j;

    fn grid(n: usize) -> GridSpec<f64> {
        GridSpec::square(-1.0, 1.0, n).unwrap()
    }

    #[test]
    fn zero_neighbourhood_is_left_alone() {
        let g = grid(65);
        let q = WeightField::constant(g.clone(), 1.0).unwrap();
        let u = VectorField::from_fn(g, 1, |p, o| o[0] = (p[0] - 0.5).max(0.0));
        let (c, acc) = truncation_move(&u, &q, [-0.5, 0.0], 0.25, 0.5).unwrap();
        assert!(!acc);
        assert_eq!(c, u);
    }

    #[test]
    fn half_plane_resists_truncation() {
        let g = grid(129);
        let q = WeightField::constant(g.clone(), 1.0).unwrap();
        let u = VectorField::from_fn(g, 1, |p, o| o[0] = p[0].max(0.0));
        for r in [0.05, 0.1, 0.2] {
            let (_, acc) = truncation_move(&u, &q, [0.0, 0.0], r, 0.5).unwrap();
            assert!(!acc, "r = {r}");
        }
    }

    #[test]
    fn thin_film_is_removed() {
        let g = grid(129);
        let q = WeightField::constant(g.clone(), 1.0).unwrap();
        let delta = 1e-3;
        let u = VectorField::from_fn(g, 1, |p, o| {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            o[0] = if r < 0.3 { delta } else { delta + (r - 0.3) };
        });
        let (c, acc) = truncation_move(&u, &q, [0.0, 0.0], 0.4, 0.5).unwrap();
        assert!(acc);
        let before = evaluate_j(&u, &q).unwrap().total;
        let after = evaluate_j(&c, &q).unwrap().total;
        assert!(after < before);
        assert_eq!(c.sample_norm([0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn ball_must_fit() {
        let g = grid(33);
        let q = WeightField::constant(g.clone(), 1.0).unwrap();
        let u = VectorField::zeros(g, 1);
        assert!(truncation_move(&u, &q, [0.9, 0.0], 0.2, 0.5).is_err());
    }
}
