use std::cmp::Ordering;

use crate::error::{FbError, Result};
use crate::functional::{energy_on_cells, CellRange};
use crate::grid::{BoundaryData, GridSpec, VectorField, WeightField};
use crate::scalar::{lit, Scalar};

use super::polish::finish;
use super::Solution;

pub const MAX_BRUTE_INTERIOR: usize = 25;

#[derive(Debug, Clone)]
pub struct BruteForceResult<T> {
    pub solution: Solution<T>,
    /// Lowest `J` among fields whose positivity set differs from the winner's.
    pub runner_up: Option<T>,
    pub masks_tried: usize,
}

/// In-place Cholesky factorization of a dense SPD matrix (row-major, `n × n`).
fn cholesky<T: Scalar>(a: &mut [T], n: usize) -> Result<()> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > T::zero()) {
            return Err(FbError::SolveFailed {
                residual: f64::NAN,
                iterations: 0,
            });
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Ok(())
}

fn cholesky_solve<T: Scalar>(l: &[T], n: usize, b: &mut [T]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Fills the interior nodes listed in `free` with the discrete harmonic
/// extension of the remaining values, by a dense direct solve.
fn dense_fill<T: Scalar>(grid: &GridSpec<T>, comps: &mut [Vec<T>], free: &[usize]) -> Result<()> {
    let n = free.len();
    if n == 0 {
        return Ok(());
    }
    let [hx, hy] = grid.h();
    let wx = hy / hx;
    let wy = hx / hy;
    let nx = grid.nx();
    let mut a = vec![T::zero(); n * n];
    for (s, &p) in free.iter().enumerate() {
        a[s * n + s] = lit::<T>(2.0) * (wx + wy);
        for (q, w) in [(p - 1, wx), (p + 1, wx), (p - nx, wy), (p + nx, wy)] {
            if let Some(t) = free.iter().position(|&f| f == q) {
                a[s * n + t] = -w;
            }
        }
    }
    cholesky(&mut a, n)?;
    for c in comps.iter_mut() {
        let mut b = vec![T::zero(); n];
        for (s, &p) in free.iter().enumerate() {
            for (q, w) in [(p - 1, wx), (p + 1, wx), (p - nx, wy), (p + nx, wy)] {
                if !free.contains(&q) {
                    b[s] += w * c[q];
                }
            }
        }
        cholesky_solve(&a, n, &mut b);
        for (s, &p) in free.iter().enumerate() {
            c[p] = b[s].max(T::zero());
        }
    }
    Ok(())
}

/// Smaller positivity set first, then the set whose first differing node is zero.
fn mask_order(a: &[bool], b: &[bool]) -> Ordering {
    let ca = a.iter().filter(|&&x| x).count();
    let cb = b.iter().filter(|&&x| x).count();
    ca.cmp(&cb).then_with(|| {
        for (x, y) in a.iter().zip(b) {
            if x != y {
                return if *x {
                    Ordering::Greater
                } else {
                    Ordering::Less
                };
            }
        }
        Ordering::Equal
    })
}

/// Exhaustive minimization over every interior positivity mask.
///
/// Each mask is filled with its harmonic extension by a dense Cholesky
/// solve, and the exact `J` decides. Values closer than `1e-12·max(1, J)`
/// count as ties.
pub fn brute_force_minimize<T: Scalar>(
    grid: &GridSpec<T>,
    q: &WeightField<T>,
    g: &BoundaryData<T>,
) -> Result<BruteForceResult<T>> {
    if !grid.same_as(q.grid()) || !grid.same_as(g.grid()) {
        return Err(FbError::GridMismatch);
    }
    let interior: Vec<usize> = (0..grid.len())
        .filter(|&p| !grid.is_boundary_index(p))
        .collect();
    let k = interior.len();
    if k > MAX_BRUTE_INTERIOR {
        return Err(FbError::InteriorTooLarge(k));
    }
    let tol = g.positivity_tol();
    let tol2 = tol * tol;
    let range = CellRange::all(grid);
    let base: Vec<Vec<T>> = (0..g.m()).map(|c| g.comp(c).to_vec()).collect();
    let total = 1usize << k;

    let mut best: Option<(T, Vec<bool>, Vec<Vec<T>>)> = None;
    let mut results: Vec<(T, Vec<bool>)> = Vec::with_capacity(total);
    let mut comps = base.clone();
    for bits in 0..total {
        let free: Vec<usize> = (0..k)
            .filter(|b| bits >> b & 1 == 1)
            .map(|b| interior[b])
            .collect();
        comps.clone_from(&base);
        dense_fill(grid, &mut comps, &free)?;
        let j = energy_on_cells(grid, &comps, q, tol, range).total;
        let pos: Vec<bool> = interior
            .iter()
            .map(|&p| comps.iter().map(|c| c[p] * c[p]).sum::<T>() > tol2)
            .collect();
        let better = match &best {
            None => true,
            Some((jb, pb, _)) => {
                let tie = lit::<T>(1e-12) * jb.abs().max(T::one());
                j < *jb - tie || ((j - *jb).abs() <= tie && mask_order(&pos, pb) == Ordering::Less)
            }
        };
        if better {
            best = Some((j, pos.clone(), comps.clone()));
        }
        results.push((j, pos));
    }
    let (_, best_pos, best_comps) = best.expect("at least one mask");
    let runner_up = results
        .iter()
        .filter(|(_, p)| *p != best_pos)
        .map(|(j, _)| *j)
        .fold(None, |acc: Option<T>, j| Some(acc.map_or(j, |a| a.min(j))));
    let u = VectorField::new(grid.clone(), best_comps)?;
    Ok(BruteForceResult {
        solution: finish(u, q, tol, Vec::new())?,
        runner_up,
        masks_tried: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(n: usize) -> (GridSpec<f64>, WeightField<f64>) {
        let g = GridSpec::square(0.0, (n - 1) as f64, n).unwrap();
        let q = WeightField::constant(g.clone(), 1.0).unwrap();
        (g, q)
    }

    #[test]
    fn zero_data() {
        let (g, q) = setup(5);
        let bd = BoundaryData::from_fn(g.clone(), 1, |_, o| o[0] = 0.0).unwrap();
        let r = brute_force_minimize(&g, &q, &bd).unwrap();
        assert_eq!(r.solution.energy.total, 0.0);
        assert!(r.solution.mask.none());
    }

    #[test]
    fn tall_data_prefers_full_mask() {
        let (g, q) = setup(6);
        let bd = BoundaryData::from_fn(g.clone(), 1, |_, o| o[0] = 10.0).unwrap();
        let r = brute_force_minimize(&g, &q, &bd).unwrap();
        assert!(r.solution.mask.all());
        assert!((r.solution.energy.total - 25.0).abs() < 1e-9);
        assert_eq!(r.masks_tried, 1 << 16);
    }

    #[test]
    fn interior_limit() {
        let (g, q) = setup(8);
        let bd = BoundaryData::from_fn(g.clone(), 1, |_, o| o[0] = 1.0).unwrap();
        assert!(matches!(
            brute_force_minimize(&g, &q, &bd),
            Err(FbError::InteriorTooLarge(36))
        ));
    }

    #[test]
    fn dense_fill_reproduces_affine() {
        let (g, _) = setup(5);
        let mut comps = vec![(0..g.len())
            .map(|p| g.node_at(p)[0] + 2.0 * g.node_at(p)[1])
            .collect::<Vec<f64>>()];
        let exact = comps[0].clone();
        let free: Vec<usize> = (0..g.len()).filter(|&p| !g.is_boundary_index(p)).collect();
        for &p in &free {
            comps[0][p] = 0.0;
        }
        dense_fill(&g, &mut comps, &free).unwrap();
        for p in 0..g.len() {
            assert!((comps[0][p] - exact[p]).abs() < 1e-12);
        }
    }
}
