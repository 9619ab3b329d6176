//! Discrete harmonic replacement: the 5-point Laplace problem on a set of
//! free interior nodes, every other node held fixed.

use crate::error::{FbError, Result};
use crate::grid::{BoundaryData, GridSpec, Mask, VectorField};
use crate::scalar::{lit, to_f64, Scalar};
use rayon::prelude::*;

const FIXED: usize = usize::MAX;

/// Default relative residual target: `1e-2 · sqrt(machine epsilon)`.
pub fn default_tolerance<T: Scalar>() -> T {
    T::epsilon().sqrt() * lit(1e-2)
}

/// Matrix-free conjugate gradients for the masked 5-point operator.
///
/// `free` lists the unknown node indices (all interior) and `slot` maps a node
/// index back to its position in `free`. Returns the iteration count.
pub(crate) fn solve_laplace<T, F>(
    grid: &GridSpec<T>,
    vals: &mut [T],
    free: &[usize],
    slot: F,
    tol: T,
) -> Result<usize>
where
    T: Scalar,
    F: Fn(usize) -> Option<usize>,
{
    let n = free.len();
    if n == 0 {
        return Ok(0);
    }
    let [hx, hy] = grid.h();
    let wx = hy / hx;
    let wy = hx / hy;
    let nx = grid.nx();
    let diag = lit::<T>(2.0) * (wx + wy);

    let mut nbr = vec![[FIXED; 4]; n];
    let mut b = vec![T::zero(); n];
    let mut x = vec![T::zero(); n];
    for (s, &p) in free.iter().enumerate() {
        debug_assert!(!grid.is_boundary_index(p));
        let around = [(p - 1, wx), (p + 1, wx), (p - nx, wy), (p + nx, wy)];
        for (k, &(q, w)) in around.iter().enumerate() {
            match slot(q) {
                Some(t) => nbr[s][k] = t,
                None => b[s] += w * vals[q],
            }
        }
        x[s] = vals[p];
    }
    let weights = [wx, wx, wy, wy];
    let apply = |v: &[T], out: &mut [T]| {
        for s in 0..n {
            let mut acc = diag * v[s];
            for k in 0..4 {
                let t = nbr[s][k];
                if t != FIXED {
                    acc -= weights[k] * v[t];
                }
            }
            out[s] = acc;
        }
    };
    let dot = |a: &[T], c: &[T]| a.iter().zip(c).map(|(p, q)| *p * *q).sum::<T>();

    let mut ax = vec![T::zero(); n];
    apply(&x, &mut ax);
    let mut r: Vec<T> = b.iter().zip(&ax).map(|(bi, ai)| *bi - *ai).collect();
    let b_norm = dot(&b, &b).sqrt();
    let r0 = dot(&r, &r).sqrt();
    let scale = if b_norm > T::zero() { b_norm } else { r0 };
    let target = tol * scale;
    let mut rr = r0 * r0;
    let mut iters = 0;
    if r0 > target {
        let mut p = r.clone();
        let mut ap = vec![T::zero(); n];
        let max_iter = n + 1000;
        loop {
            apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > T::zero()) {
                break;
            }
            let alpha = rr / pap;
            for s in 0..n {
                x[s] += alpha * p[s];
                r[s] -= alpha * ap[s];
            }
            iters += 1;
            let rr_new = dot(&r, &r);
            if rr_new.sqrt() <= target {
                rr = rr_new;
                break;
            }
            if iters >= max_iter || !rr_new.is_finite() {
                return Err(FbError::SolveFailed {
                    residual: to_f64(rr_new.sqrt() / scale),
                    iterations: iters,
                });
            }
            let beta = rr_new / rr;
            rr = rr_new;
            for s in 0..n {
                p[s] = r[s] + beta * p[s];
            }
        }
    }
    if !(rr.sqrt() <= target) {
        // recompute the true residual before giving up
        apply(&x, &mut ax);
        let res = b
            .iter()
            .zip(&ax)
            .map(|(bi, ai)| (*bi - *ai) * (*bi - *ai))
            .sum::<T>()
            .sqrt();
        if !(res <= target * lit(10.0)) {
            return Err(FbError::SolveFailed {
                residual: to_f64(res / scale),
                iterations: iters,
            });
        }
    }
    for (s, &p) in free.iter().enumerate() {
        vals[p] = x[s];
    }
    Ok(iters)
}

/// Replaces every component by its discrete harmonic extension on the
/// interior nodes of `mask`; other nodes keep their values and the domain
/// boundary is reset to `g`. Results are clamped at zero.
pub fn harmonic_replace<T: Scalar>(
    u: &VectorField<T>,
    mask: &Mask<T>,
    g: &BoundaryData<T>,
    tol: T,
) -> Result<VectorField<T>> {
    let grid = u.grid();
    if !grid.same_as(mask.grid()) || !grid.same_as(g.grid()) || u.m() != g.m() {
        return Err(FbError::GridMismatch);
    }
    let mut out = u.clone();
    g.apply(&mut out);
    let mut slots = vec![FIXED; grid.len()];
    let mut free = Vec::new();
    for p in 0..grid.len() {
        if mask.get(p) && !grid.is_boundary_index(p) {
            slots[p] = free.len();
            free.push(p);
        }
    }
    let slot = |q: usize| {
        let s = slots[q];
        (s != FIXED).then_some(s)
    };
    out.comps_mut()
        .par_iter_mut()
        .try_for_each(|vals| -> Result<()> {
            solve_laplace(grid, vals, &free, slot, tol)?;
            for v in vals.iter_mut() {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
            Ok(())
        })?;
    Ok(out)
}

/// Harmonic solve restricted to the node window `[i0, i1] x [j0, j1]`
/// (interior nodes only), where `free_flag(p)` says which window nodes are unknown.
pub(crate) fn window_solve<T, F>(
    grid: &GridSpec<T>,
    comps: &mut [Vec<T>],
    window: (usize, usize, usize, usize),
    free_flag: F,
    tol: T,
) -> Result<()>
where
    T: Scalar,
    F: Fn(usize) -> bool,
{
    let (i0, j0, i1, j1) = window;
    let w = i1 - i0 + 1;
    let mut local = vec![FIXED; w * (j1 - j0 + 1)];
    let mut free = Vec::new();
    for j in j0..=j1 {
        for i in i0..=i1 {
            let p = grid.idx(i, j);
            if !grid.is_boundary(i, j) && free_flag(p) {
                local[(j - j0) * w + (i - i0)] = free.len();
                free.push(p);
            }
        }
    }
    let slot = |q: usize| {
        let (i, j) = grid.ij(q);
        if i < i0 || i > i1 || j < j0 || j > j1 {
            return None;
        }
        let s = local[(j - j0) * w + (i - i0)];
        (s != FIXED).then_some(s)
    };
    for vals in comps.iter_mut() {
        solve_laplace(grid, vals, &free, slot, tol)?;
        for &p in &free {
            if vals[p] < T::zero() {
                vals[p] = T::zero();
            }
        }
    }
    Ok(())
}
