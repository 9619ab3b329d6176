use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{FbError, Result};
use crate::functional::{evaluate_j, metric_d};
use crate::grid::{BoundaryData, GridSpec, Mask, VectorField, WeightField};
use crate::scalar::Scalar;

use super::polish::{finish, kick_search, polish_into, Trace};
use super::truncation::{truncation_sweep, TruncationLattice};
use super::{descent_step, harmonic_replace, zero_outside, MoveKind, Solution, SolverConfig};

/// Grids smaller than this are not coarsened further.
const COARSEST: usize = 17;

/// Nested grid hierarchy from coarse to fine (the last entry is `grid`).
fn hierarchy<T: Scalar>(grid: &GridSpec<T>, enabled: bool) -> Result<Vec<GridSpec<T>>> {
    let mut out = vec![grid.clone()];
    if enabled {
        loop {
            let g = out.last().unwrap();
            let [nx, ny] = g.dims();
            if nx % 2 == 0 || ny % 2 == 0 || nx.div_ceil(2) < COARSEST || ny.div_ceil(2) < COARSEST {
                break;
            }
            let coarse = GridSpec::new(g.lo(), g.hi(), [nx.div_ceil(2), ny.div_ceil(2)])?;
            out.push(coarse);
        }
    }
    out.reverse();
    Ok(out)
}

/// Every `2^k`-th node of a fine array.
fn subsample<T: Scalar>(fine: &GridSpec<T>, coarse: &GridSpec<T>, vals: &[T]) -> Vec<T> {
    let sx = (fine.nx() - 1) / (coarse.nx() - 1);
    let sy = (fine.ny() - 1) / (coarse.ny() - 1);
    let mut out = Vec::with_capacity(coarse.len());
    for j in 0..coarse.ny() {
        for i in 0..coarse.nx() {
            out.push(vals[fine.idx(i * sx, j * sy)]);
        }
    }
    out
}

/// Bilinear prolongation onto the grid with twice the resolution.
fn prolong<T: Scalar>(coarse: &GridSpec<T>, fine: &GridSpec<T>, vals: &[T]) -> Vec<T> {
    let half = T::from_f64(0.5).unwrap();
    let quarter = T::from_f64(0.25).unwrap();
    let mut out = vec![T::zero(); fine.len()];
    for j in 0..fine.ny() {
        for i in 0..fine.nx() {
            let (ci, cj) = (i / 2, j / 2);
            let v = |a: usize, b: usize| vals[coarse.idx(a, b)];
            out[fine.idx(i, j)] = match (i % 2, j % 2) {
                (0, 0) => v(ci, cj),
                (1, 0) => half * (v(ci, cj) + v(ci + 1, cj)),
                (0, _) => half * (v(ci, cj) + v(ci, cj + 1)),
                _ => quarter * (v(ci, cj) + v(ci + 1, cj) + v(ci, cj + 1) + v(ci + 1, cj + 1)),
            };
        }
    }
    out
}

struct Level<T> {
    grid: GridSpec<T>,
    q: WeightField<T>,
    g: BoundaryData<T>,
}

fn restrict<T: Scalar>(
    fine: &GridSpec<T>,
    coarse: &GridSpec<T>,
    q: &WeightField<T>,
    g: &BoundaryData<T>,
) -> Result<Level<T>> {
    let qv = subsample(fine, coarse, q.values());
    let qc = WeightField::new(coarse.clone(), qv, q.q_min(), q.q_max())?;
    let gv = (0..g.m())
        .map(|k| subsample(fine, coarse, g.comp(k)))
        .collect();
    let gc = BoundaryData::new(coarse.clone(), gv)?;
    Ok(Level {
        grid: coarse.clone(),
        q: qc,
        g: gc,
    })
}

/// Harmonic replacement on the field's own positivity set.
fn snap<T: Scalar>(
    u: &VectorField<T>,
    g: &BoundaryData<T>,
    tol: T,
    htol: T,
) -> Result<VectorField<T>> {
    let mask = u.positivity_mask_with(tol);
    let mut start = u.clone();
    g.apply(&mut start);
    zero_outside(&mut start, &mask);
    harmonic_replace(&start, &mask, g, htol)
}

/// ε-continuation on one level. The incumbent is judged by the exact `J`;
/// the working iterate follows the relaxed dynamics regardless.
fn continuation<T: Scalar>(
    lvl: &Level<T>,
    start: VectorField<T>,
    eps: &[T],
    cfg: &SolverConfig<T>,
    trace: &mut Trace<T>,
) -> Result<VectorField<T>> {
    let tol = lvl.g.positivity_tol();
    let mut best = start;
    let mut j_best = evaluate_j(&best, &lvl.q)?.total;
    let mut working = best.clone();
    for &e in eps {
        for _ in 0..cfg.descent_iters {
            let (next, accepted) = descent_step(&working, &lvl.q, e, &cfg.step)?;
            if !accepted {
                break;
            }
            working = next;
        }
        let cand = snap(&working, &lvl.g, tol, cfg.harmonic_tol)?;
        let j = evaluate_j(&cand, &lvl.q)?.total;
        if !j.is_finite() {
            return Err(FbError::NonFinite("energy during continuation".into()));
        }
        if j <= j_best {
            trace.push(MoveKind::Descent, j_best, j, metric_d(&best, &cand)?);
            best = cand.clone();
            j_best = j;
        }
        working = cand;
    }
    Ok(best)
}

fn truncate<T: Scalar>(
    lvl: &Level<T>,
    u: &mut VectorField<T>,
    cfg: &SolverConfig<T>,
    trace: &mut Trace<T>,
) -> Result<()> {
    let before = u.clone();
    let j0 = evaluate_j(u, &lvl.q)?.total;
    let hits = truncation_sweep(u, &lvl.q, &TruncationLattice::default())?;
    if hits == 0 {
        return Ok(());
    }
    let j1 = evaluate_j(u, &lvl.q)?.total;
    trace.push(MoveKind::Truncation, j0, j1, metric_d(&before, u)?);
    let tol = lvl.g.positivity_tol();
    let cand = snap(u, &lvl.g, tol, cfg.harmonic_tol)?;
    let j2 = evaluate_j(&cand, &lvl.q)?.total;
    if j2 <= j1 {
        trace.push(MoveKind::Harmonic, j1, j2, metric_d(u, &cand)?);
        *u = cand;
    }
    Ok(())
}

/// Approximate absolute minimizer of `J` with boundary data `g`.
///
/// On nested grids the pipeline starts at the coarsest level from the harmonic
/// extension of `g`, runs ε-continuation descent, truncation sweeps and the
/// exact polish, and prolongs the result as the starting point of the next
/// level. The trace only records moves taken on the final grid.
pub fn minimize<T: Scalar>(
    grid: &GridSpec<T>,
    q: &WeightField<T>,
    g: &BoundaryData<T>,
    cfg: &SolverConfig<T>,
) -> Result<Solution<T>> {
    if !grid.same_as(q.grid()) || !grid.same_as(g.grid()) {
        return Err(FbError::GridMismatch);
    }
    let h = grid.h_max();
    cfg.validate(h)?;
    let tol = g.positivity_tol();
    if g.is_zero() {
        return finish(VectorField::zeros(grid.clone(), g.m()), q, tol, Vec::new());
    }
    let grids = hierarchy(grid, cfg.multilevel)?;
    let mut levels: Vec<Level<T>> = Vec::with_capacity(grids.len());
    for cg in &grids {
        levels.push(restrict(grid, cg, q, g)?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut current: Option<VectorField<T>> = None;
    let mut trace = Trace::new();
    for (li, lvl) in levels.iter().enumerate() {
        let last = li + 1 == levels.len();
        let mut scratch = Trace::new();
        let log = if last { &mut trace } else { &mut scratch };
        let start = match current.take() {
            None => {
                let full = Mask::from_fn(lvl.grid.clone(), |_| true);
                harmonic_replace(
                    &VectorField::zeros(lvl.grid.clone(), g.m()),
                    &full,
                    &lvl.g,
                    cfg.harmonic_tol,
                )?
            }
            Some(prev) => {
                let comps = prev
                    .comps()
                    .iter()
                    .map(|c| prolong(prev.grid(), &lvl.grid, c))
                    .collect();
                let mut v = VectorField::new(lvl.grid.clone(), comps)?;
                lvl.g.apply(&mut v);
                snap(&v, &lvl.g, tol, cfg.harmonic_tol)?
            }
        };
        // a coarse level keeps the schedule entries above its own spacing
        let hl = lvl.grid.h_max();
        let eps: Vec<T> = if li == 0 && last {
            cfg.eps_schedule.clone()
        } else if last {
            // a prolonged start only needs the tail of the schedule
            let fine: Vec<T> = cfg
                .eps_schedule
                .iter()
                .copied()
                .filter(|&e| e <= hl * T::from_f64(4.0).unwrap())
                .collect();
            fine
        } else if li == 0 {
            let mut e: Vec<T> = cfg
                .eps_schedule
                .iter()
                .copied()
                .filter(|&e| e > hl)
                .collect();
            e.push(hl);
            e
        } else {
            vec![hl]
        };
        let mut u = continuation(lvl, start, &eps, cfg, log)?;
        truncate(lvl, &mut u, cfg, log)?;
        polish_into(&mut u, &lvl.q, &lvl.g, cfg, &mut rng, log)?;
        if last && kick_search(&mut u, &lvl.q, &lvl.g, cfg, &mut rng, log)? > 0 {
            polish_into(&mut u, &lvl.q, &lvl.g, cfg, &mut rng, log)?;
        }
        current = Some(u);
    }
    let u = current.expect("at least one level");
    finish(u, q, tol, trace.records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_data_gives_zero() {
        let g = GridSpec::square(-1.0, 1.0, 17).unwrap();
        let q = WeightField::constant(g.clone(), 1.0).unwrap();
        let bd = BoundaryData::from_fn(g.clone(), 2, |_, o| o.fill(0.0)).unwrap();
        let s = minimize(&g, &q, &bd, &SolverConfig::for_spacing(g.h_max())).unwrap();
        assert_eq!(s.energy.total, 0.0);
        assert!(s.u.comps().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn tall_constant_data_keeps_full_support() {
        let g = GridSpec::<f64>::square(-1.0, 1.0, 65).unwrap();
        let q = WeightField::constant(g.clone(), 1.0).unwrap();
        let bd = BoundaryData::from_fn(g.clone(), 1, |_, o| o[0] = 10.0).unwrap();
        let s = minimize(&g, &q, &bd, &SolverConfig::for_spacing(g.h_max())).unwrap();
        assert!((s.energy.total - 4.0).abs() < 1e-9);
        assert!(s.u.comp(0).iter().all(|&v| (v - 10.0).abs() < 1e-8));
        assert!(s.mask.all());
    }

    #[test]
    fn prolongation_of_affine_is_exact() {
        let c = GridSpec::square(0.0, 1.0, 5).unwrap();
        let f = GridSpec::square(0.0, 1.0, 9).unwrap();
        let vals: Vec<f64> = (0..c.len())
            .map(|p| {
                let x = c.node_at(p);
                2.0 * x[0] - x[1]
            })
            .collect();
        let out = prolong(&c, &f, &vals);
        for p in 0..f.len() {
            let x = f.node_at(p);
            assert!((out[p] - (2.0 * x[0] - x[1])).abs() < 1e-14);
        }
        assert_eq!(subsample(&f, &c, &out), vals);
    }
}
