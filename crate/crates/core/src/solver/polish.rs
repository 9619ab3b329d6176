use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{FbError, Result};
use crate::functional::{energy_on_cells, evaluate_j, metric_d, CellRange};
use crate::grid::{BoundaryData, GridSpec, VectorField, WeightField};
use crate::scalar::{lit, Scalar};

use super::{
    harmonic_replace, window_solve, zero_outside, IterationRecord, MoveKind, Solution, SolverConfig,
};

/// Relative margin an addition has to beat; removals only need `ΔJ ≤ 0`.
const ADD_MARGIN: f64 = 1e-13;
const MAX_PASSES: usize = 10_000;
/// Largest Chebyshev radius of the front segments tried as one move.
const SEGMENT_RADIUS: usize = 3;

fn same_set(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len() && a.iter().all(|x| b.contains(x))
}

pub(crate) struct Trace<T> {
    pub records: Vec<IterationRecord<T>>,
}

impl<T: Scalar> Trace<T> {
    pub fn new() -> Self {
        Trace {
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, kind: MoveKind, j_before: T, j_after: T, d_moved: T) {
        let iteration = self.records.len();
        self.records.push(IterationRecord {
            iteration,
            kind,
            j_before,
            j_after,
            d_moved,
        });
    }
}

struct Polisher<'a, T> {
    grid: &'a GridSpec<T>,
    q: &'a WeightField<T>,
    tol: T,
    htol: T,
    radius: usize,
    pos: Vec<bool>,
    saved: Vec<T>,
}

impl<'a, T: Scalar> Polisher<'a, T> {
    fn refresh(&mut self, comps: &[Vec<T>], window: (usize, usize, usize, usize)) {
        let tol2 = self.tol * self.tol;
        let (i0, j0, i1, j1) = window;
        for j in j0..=j1 {
            for i in i0..=i1 {
                let p = self.grid.idx(i, j);
                self.pos[p] = comps.iter().map(|c| c[p] * c[p]).sum::<T>() > tol2;
            }
        }
    }

    fn is_interface(&self, p: usize) -> bool {
        let nx = self.grid.nx();
        let v = self.pos[p];
        [p - 1, p + 1, p - nx, p + nx]
            .iter()
            .any(|&q| self.pos[q] != v)
    }

    fn window(&self, p: usize) -> (usize, usize, usize, usize) {
        let (i, j) = self.grid.ij(p);
        let r = self.radius + SEGMENT_RADIUS;
        (
            i.saturating_sub(r).max(1),
            j.saturating_sub(r).max(1),
            (i + r).min(self.grid.nx() - 2),
            (j + r).min(self.grid.ny() - 2),
        )
    }

    /// Candidate node sets at `p`: the node, adjacent pairs, 2×2 blocks and
    /// short front segments, restricted to interior nodes sharing `p`'s state.
    fn moves(&self, p: usize) -> Vec<Vec<usize>> {
        let nx = self.grid.nx();
        let state = self.pos[p];
        let usable = |q: usize| !self.grid.is_boundary_index(q) && self.pos[q] == state;
        let mut out = vec![vec![p]];
        for q in [p - 1, p + 1, p - nx, p + nx] {
            if usable(q) {
                out.push(vec![p, q]);
            }
        }
        for (dx, dy) in [(-1isize, -1isize), (1, -1), (-1, 1), (1, 1)] {
            let a = (p as isize + dx) as usize;
            let b = (p as isize + dy * nx as isize) as usize;
            let c = (p as isize + dx + dy * nx as isize) as usize;
            let set: Vec<usize> = std::iter::once(p)
                .chain([a, b, c].into_iter().filter(|&q| usable(q)))
                .collect();
            if set.len() > 2 {
                out.push(set);
            }
        }
        for r in 1..=SEGMENT_RADIUS {
            let seg = self.front_segment(p, r);
            if seg.len() > 1 && !out.iter().any(|s| same_set(s, &seg)) {
                out.push(seg);
            }
        }
        out
    }

    /// Interface nodes sharing `p`'s state that are 8-connected to `p` within
    /// Chebyshev distance `r`.
    fn front_segment(&self, p: usize, r: usize) -> Vec<usize> {
        let (pi, pj) = self.grid.ij(p);
        let state = self.pos[p];
        let mut seg = vec![p];
        let mut k = 0;
        while k < seg.len() {
            let (i, j) = self.grid.ij(seg[k]);
            k += 1;
            for dj in -1isize..=1 {
                for di in -1isize..=1 {
                    let (ni, nj) = (i as isize + di, j as isize + dj);
                    if (di == 0 && dj == 0)
                        || ni.abs_diff(pi as isize) > r
                        || nj.abs_diff(pj as isize) > r
                        || ni < 1
                        || nj < 1
                        || ni as usize >= self.grid.nx() - 1
                        || nj as usize >= self.grid.ny() - 1
                    {
                        continue;
                    }
                    let q = self.grid.idx(ni as usize, nj as usize);
                    if self.pos[q] == state && !seg.contains(&q) && self.is_interface(q) {
                        seg.push(q);
                    }
                }
            }
        }
        seg
    }

    /// Tries the moves at `p` in order and keeps the first that is accepted.
    fn visit(&mut self, comps: &mut [Vec<T>], p: usize, j_scale: T) -> Result<Option<T>> {
        if self.grid.is_boundary_index(p) || !self.is_interface(p) {
            return Ok(None);
        }
        let removing = self.pos[p];
        let window = self.window(p);
        let (i0, j0, i1, j1) = window;
        let range = CellRange::around_nodes(self.grid, i0, j0, i1, j1);
        let before = energy_on_cells(self.grid, comps, self.q, self.tol, range).total;
        let margin = lit::<T>(ADD_MARGIN) * j_scale.abs().max(T::one());
        let w = i1 - i0 + 1;
        let count = w * (j1 - j0 + 1);
        self.saved.clear();
        for c in comps.iter() {
            for j in j0..=j1 {
                let row = self.grid.idx(i0, j);
                self.saved.extend_from_slice(&c[row..row + w]);
            }
        }
        for set in self.moves(p) {
            for c in comps.iter_mut() {
                for &s in &set {
                    c[s] = T::zero();
                }
            }
            let pos = &self.pos;
            let free = |q: usize| {
                if set.contains(&q) {
                    !removing
                } else {
                    pos[q]
                }
            };
            window_solve(self.grid, comps, window, free, self.htol)?;
            let after = energy_on_cells(self.grid, comps, self.q, self.tol, range).total;
            let delta = after - before;
            if !delta.is_finite() {
                return Err(FbError::NonFinite("local energy in flip polish".into()));
            }
            let ok = if removing {
                delta <= T::zero()
            } else {
                delta < -margin
            };
            if ok {
                self.refresh(comps, window);
                return Ok(Some(delta));
            }
            for (k, c) in comps.iter_mut().enumerate() {
                for j in j0..=j1 {
                    let row = self.grid.idx(i0, j);
                    let off = k * count + (j - j0) * w;
                    c[row..row + w].copy_from_slice(&self.saved[off..off + w]);
                }
            }
        }
        Ok(None)
    }
}

/// Runs interface passes until one accepts nothing; returns the number of accepted moves.
fn polish_passes<T: Scalar>(
    u: &mut VectorField<T>,
    q: &WeightField<T>,
    tol: T,
    cfg: &SolverConfig<T>,
    rng: &mut ChaCha8Rng,
) -> Result<usize> {
    let grid = u.grid().clone();
    let mut pol = Polisher {
        grid: &grid,
        q,
        tol,
        htol: cfg.harmonic_tol,
        radius: cfg.flip_radius,
        pos: u.positivity_mask_with(tol).flags().to_vec(),
        saved: Vec::new(),
    };
    let j_scale = evaluate_j(u, q)?.total;
    let comps = u.comps_mut();
    let mut total = 0;
    for _ in 0..MAX_PASSES {
        let mut order: Vec<usize> = (0..grid.len())
            .filter(|&p| !grid.is_boundary_index(p) && pol.is_interface(p))
            .collect();
        order.shuffle(rng);
        let mut accepted = 0;
        for p in order {
            if pol.visit(comps, p, j_scale)?.is_some() {
                accepted += 1;
            }
        }
        total += accepted;
        if accepted == 0 {
            break;
        }
    }
    Ok(total)
}

/// Iterated local search: perturb the mask in a small random window, re-solve
/// and polish nearby, and keep the result iff the exact `J` strictly drops.
/// Returns the number of kicks kept.
pub(crate) fn kick_search<T: Scalar>(
    u: &mut VectorField<T>,
    q: &WeightField<T>,
    g: &BoundaryData<T>,
    cfg: &SolverConfig<T>,
    rng: &mut ChaCha8Rng,
    trace: &mut Trace<T>,
) -> Result<usize> {
    let grid = u.grid().clone();
    let interior: Vec<usize> = (0..grid.len())
        .filter(|&p| !grid.is_boundary_index(p))
        .collect();
    if interior.is_empty() || cfg.kick_rounds == 0 {
        return Ok(0);
    }
    let tol = g.positivity_tol();
    let mut pol = Polisher {
        grid: &grid,
        q,
        tol,
        htol: cfg.harmonic_tol,
        radius: cfg.flip_radius,
        pos: u.positivity_mask_with(tol).flags().to_vec(),
        saved: Vec::new(),
    };
    let mut j = evaluate_j(u, q)?.total;
    let mut kept = 0;
    let clip = |a: usize, d: usize, n: usize| (a.saturating_sub(d).max(1), (a + d).min(n - 2));
    for _ in 0..cfg.kick_rounds {
        let centre = interior[rng.gen_range(0..interior.len())];
        let k = rng.gen_range(1..=3usize);
        let mode = rng.gen_range(0..3u8);
        let (ci, cj) = grid.ij(centre);
        let reach = k + cfg.flip_radius;
        // every node the kick and the follow-up visits can touch
        let span = reach + 2 + cfg.flip_radius;
        let (r0, r1) = clip(ci, span, grid.nx());
        let (s0, s1) = clip(cj, span, grid.ny());
        let range = CellRange::around_nodes(&grid, r0, s0, r1, s1);
        let region: Vec<usize> = (s0..=s1)
            .flat_map(|jj| (r0..=r1).map(move |ii| (ii, jj)))
            .map(|(ii, jj)| grid.idx(ii, jj))
            .collect();
        let saved: Vec<(Vec<T>, bool)> = region
            .iter()
            .map(|&p| (u.comps().iter().map(|c| c[p]).collect(), pol.pos[p]))
            .collect();
        let before = energy_on_cells(&grid, u.comps(), q, tol, range).total;

        let (i0, i1) = clip(ci, k, grid.nx());
        let (j0, j1) = clip(cj, k, grid.ny());
        for jj in j0..=j1 {
            for ii in i0..=i1 {
                let p = grid.idx(ii, jj);
                pol.pos[p] = match mode {
                    0 => pol.pos[p] ^ rng.gen_bool(0.5),
                    1 => false,
                    _ => true,
                };
                if !pol.pos[p] {
                    for c in u.comps_mut() {
                        c[p] = T::zero();
                    }
                }
            }
        }
        let (w0, w1) = clip(ci, reach, grid.nx());
        let (v0, v1) = clip(cj, reach, grid.ny());
        let pos = &pol.pos;
        window_solve(
            &grid,
            u.comps_mut(),
            (w0, v0, w1, v1),
            |p| pos[p],
            cfg.harmonic_tol,
        )?;
        pol.refresh(u.comps(), (w0, v0, w1, v1));
        let (a0, a1) = clip(ci, reach + 2, grid.nx());
        let (b0, b1) = clip(cj, reach + 2, grid.ny());
        let near: Vec<usize> = (b0..=b1)
            .flat_map(|jj| (a0..=a1).map(move |ii| (ii, jj)))
            .map(|(ii, jj)| grid.idx(ii, jj))
            .collect();
        for _ in 0..50 {
            let mut accepted = 0;
            for &p in &near {
                if pol.visit(u.comps_mut(), p, j)?.is_some() {
                    accepted += 1;
                }
            }
            if accepted == 0 {
                break;
            }
        }
        let after = energy_on_cells(&grid, u.comps(), q, tol, range).total;
        if after - before < -lit::<T>(ADD_MARGIN) * j.abs().max(T::one()) {
            let mut old = u.clone();
            for (&p, (vals, _)) in region.iter().zip(&saved) {
                for (c, &v) in old.comps_mut().iter_mut().zip(vals) {
                    c[p] = v;
                }
            }
            let j_new = evaluate_j(u, q)?.total;
            trace.push(MoveKind::Flip, j, j_new, metric_d(&old, u)?);
            j = j_new;
            kept += 1;
        } else {
            for (&p, (vals, flag)) in region.iter().zip(&saved) {
                for (c, &v) in u.comps_mut().iter_mut().zip(vals) {
                    c[p] = v;
                }
                pol.pos[p] = *flag;
            }
        }
    }
    Ok(kept)
}

/// Alternates flip passes with global harmonic replacement until neither changes `J`.
pub(crate) fn polish_into<T: Scalar>(
    u: &mut VectorField<T>,
    q: &WeightField<T>,
    g: &BoundaryData<T>,
    cfg: &SolverConfig<T>,
    rng: &mut ChaCha8Rng,
    trace: &mut Trace<T>,
) -> Result<()> {
    let tol = g.positivity_tol();
    let mut j = evaluate_j(u, q)?.total;
    for _ in 0..cfg.max_outer {
        let before = u.clone();
        let moved = polish_passes(u, q, tol, cfg, rng)?;
        let j_flip = evaluate_j(u, q)?.total;
        if moved > 0 {
            trace.push(MoveKind::Flip, j, j_flip, metric_d(&before, u)?);
        }
        j = j_flip;

        let mask = u.positivity_mask_with(tol);
        let mut start = u.clone();
        zero_outside(&mut start, &mask);
        let cand = harmonic_replace(&start, &mask, g, cfg.harmonic_tol)?;
        let j_harm = evaluate_j(&cand, q)?.total;
        let improved = j_harm < j - lit::<T>(ADD_MARGIN) * j.abs().max(T::one());
        if j_harm <= j {
            let d = metric_d(u, &cand)?;
            if d > T::zero() {
                trace.push(MoveKind::Harmonic, j, j_harm, d);
            }
            *u = cand;
            j = j_harm;
        }
        if moved == 0 && !improved {
            break;
        }
    }
    Ok(())
}

/// Exact local search over the positivity mask.
///
/// The field is first made harmonic on its own positivity set. Interface nodes
/// are then visited in a seeded random order; at each one the node, an
/// adjacent pair or a 2×2 block is switched off (or on), the harmonic problem
/// is re-solved in a window of `cfg.flip_radius` nodes, and the move is kept
/// iff the exact `J` does not increase (removals) or strictly decreases
/// (additions).
pub fn flip_polish<T: Scalar>(
    u: &VectorField<T>,
    q: &WeightField<T>,
    g: &BoundaryData<T>,
    cfg: &SolverConfig<T>,
) -> Result<Solution<T>> {
    let grid = u.grid();
    if !grid.same_as(q.grid()) || !grid.same_as(g.grid()) || u.m() != g.m() {
        return Err(FbError::GridMismatch);
    }
    cfg.validate(grid.h_max())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace = Trace::new();
    let tol = g.positivity_tol();
    let mut work = u.clone();
    g.apply(&mut work);
    let mask = work.positivity_mask_with(tol);
    zero_outside(&mut work, &mask);
    let j0 = evaluate_j(&work, q)?.total;
    let mut cur = harmonic_replace(&work, &mask, g, cfg.harmonic_tol)?;
    let j1 = evaluate_j(&cur, q)?.total;
    if j1 <= j0 {
        trace.push(MoveKind::Harmonic, j0, j1, metric_d(&work, &cur)?);
    } else {
        cur = work;
    }
    polish_into(&mut cur, q, g, cfg, &mut rng, &mut trace)?;
    finish(cur, q, tol, trace.records)
}

pub(crate) fn finish<T: Scalar>(
    u: VectorField<T>,
    q: &WeightField<T>,
    tol: T,
    trace: Vec<IterationRecord<T>>,
) -> Result<Solution<T>> {
    u.check_admissible()?;
    let energy = evaluate_j(&u, q)?;
    let mask = u.positivity_mask_with(tol);
    Ok(Solution {
        u,
        mask,
        energy,
        trace,
    })
}
