//! Partial hodograph transform near a flat interface patch.
//!
//! Inside a window with transverse coordinate `y′` and normal coordinate `t`,
//! the lead component `u₁` is inverted column by column: `v₁(y′, y_n)` is the
//! height at which `u₁(y′, ·) = y_n`. The remaining components become
//! `v_k(y) = u_k(y′, v₁(y))`. The straightened system is
//!
//! ```text
//! L(v₁) f = a ∂_nn f + ∂_pp f − 2 (∂_p v₁ / ∂_n v₁) ∂_pn f,   a = (1 + (∂_p v₁)²) / (∂_n v₁)²
//! L(v₁) v₁ = 0,  L(v₁) v_k = 0,   Q² = a (1 + Σ_k (∂_n v_k)²) on {y_n = 0}
//! ```

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{FbError, Result};
use crate::grid::{interp, interp_cubic, GridSpec, VectorField, WeightField};
use crate::scalar::{lit, to_f64, Scalar};

/// Halvings per level solve.
pub const BISECTION_STEPS: usize = 60;

/// An oriented window: points `origin + y′ τ + t ν` with `t ∈ [t_min, t_max]`,
/// where `τ = (ν₂, −ν₁)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HodographWindow<T> {
    pub origin: [T; 2],
    pub normal: [T; 2],
    pub t_min: T,
    pub t_max: T,
}

impl<T: Scalar> HodographWindow<T> {
    pub fn new(origin: [T; 2], normal: [T; 2], t_min: T, t_max: T) -> Result<Self> {
        let n = (normal[0] * normal[0] + normal[1] * normal[1]).sqrt();
        if !(n > T::zero()) || !(t_max > t_min) {
            return Err(FbError::InvalidArgument("degenerate hodograph window".into()));
        }
        Ok(HodographWindow {
            origin,
            normal: [normal[0] / n, normal[1] / n],
            t_min,
            t_max,
        })
    }

    /// Axis-aligned box `[lo, hi]` with columns along `x₂`; `y′` is measured from the box centre.
    pub fn axis_box(lo: [T; 2], hi: [T; 2]) -> Result<Self> {
        let half: T = lit(0.5);
        Self::new([half * (lo[0] + hi[0]), lo[1]], [T::zero(), T::one()], T::zero(), hi[1] - lo[1])
    }

    pub fn tangent(&self) -> [T; 2] {
        [self.normal[1], -self.normal[0]]
    }

    pub fn point(&self, yp: T, t: T) -> [T; 2] {
        let tau = self.tangent();
        [
            self.origin[0] + yp * tau[0] + t * self.normal[0],
            self.origin[1] + yp * tau[1] + t * self.normal[1],
        ]
    }

    /// `origin · ν`, added to `t` so that axis boxes report absolute heights.
    fn offset(&self) -> T {
        self.origin[0] * self.normal[0] + self.origin[1] * self.normal[1]
    }
}

#[derive(Debug, Clone)]
pub struct HodographPatch<T> {
    pub window: HodographWindow<T>,
    /// Nodes `(y′, y_n)`; the first row is `y_n = y_min`.
    pub ygrid: GridSpec<T>,
    pub lead: usize,
    /// Heights `v₁` along `ν`, offset by `origin · ν`.
    pub v1: Vec<T>,
    /// `(k, v_k)` for the other components.
    pub companions: Vec<(usize, Vec<T>)>,
    /// `∂_n v₁`, central inside and one-sided on the edges.
    pub dn: Vec<T>,
    /// `∂_p v₁`, central inside and one-sided on the edges.
    pub dp: Vec<T>,
    /// Largest `|y_n − u₁(y′, v₁(y))|`.
    pub round_trip: T,
}

/// Samples `u₁` along one column and rejects decreases beyond `tol`.
fn check_column<T: Scalar>(grid: &GridSpec<T>, c: &[T], w: &HodographWindow<T>, yp: T, tol: T) -> Result<()> {
    let steps = ((to_f64(w.t_max - w.t_min) / to_f64(grid.h_max()) * 4.0).ceil() as usize).max(8);
    let dt = (w.t_max - w.t_min) / lit(steps as f64);
    let mut prev = interp(grid, c, w.point(yp, w.t_min))?;
    for s in 1..=steps {
        let t = w.t_min + dt * lit(s as f64);
        let cur = interp(grid, c, w.point(yp, t))?;
        if cur < prev - tol {
            return Err(FbError::NotMonotone(to_f64(yp)));
        }
        prev = cur;
    }
    Ok(())
}

/// Smallest `t` in the window with `u₁ > level` (or `≥ level` for positive levels).
///
/// A bisection on the bilinear interpolant brackets the crossing within two
/// grid spacings; a second bisection on the cubic interpolant refines it.
fn solve_level<T: Scalar>(grid: &GridSpec<T>, c: &[T], w: &HodographWindow<T>, yp: T, level: T) -> Result<T> {
    let test = |v: T| if level > T::zero() { v >= level } else { v > level };
    let linear = |t: T| -> Result<bool> { Ok(test(interp(grid, c, w.point(yp, t))?)) };
    let cubic = |t: T| -> Result<bool> { Ok(test(interp_cubic(grid, c, w.point(yp, t))?)) };
    if linear(w.t_min)? {
        return Err(FbError::InvalidArgument(format!(
            "column at {} starts above level {}",
            to_f64(yp),
            to_f64(level)
        )));
    }
    if !linear(w.t_max)? {
        let top = interp(grid, c, w.point(yp, w.t_max))?;
        return Err(FbError::LevelAboveColumn {
            level: to_f64(level),
            column_max: to_f64(top),
            at: to_f64(yp),
        });
    }
    let t0 = bisect(&linear, w.t_min, w.t_max)?;
    let reach = grid.h_max() * lit(2.0);
    let (lo, hi) = ((t0 - reach).max(w.t_min), (t0 + reach).min(w.t_max));
    if cubic(lo)? || !cubic(hi)? {
        return Err(FbError::NotMonotone(to_f64(yp)));
    }
    bisect(&cubic, lo, hi)
}

fn bisect<T: Scalar>(above: &dyn Fn(T) -> Result<bool>, mut lo: T, mut hi: T) -> Result<T> {
    let half: T = lit(0.5);
    for _ in 0..BISECTION_STEPS {
        let mid = half * (lo + hi);
        if above(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(half * (lo + hi))
}

/// Derivative along one axis: central inside, second-order one-sided on the edges.
fn axis_derivative<T: Scalar>(g: &GridSpec<T>, f: &[T], axis: usize) -> Vec<T> {
    let (nx, ny) = (g.nx(), g.ny());
    let h = g.h()[axis];
    let (n, stride) = if axis == 0 { (nx, 1) } else { (ny, nx) };
    let two: T = lit(2.0);
    let (three, four): (T, T) = (lit(3.0), lit(4.0));
    let mut out = vec![T::zero(); f.len()];
    for p in 0..f.len() {
        let (i, j) = g.ij(p);
        let k = if axis == 0 { i } else { j };
        out[p] = if k == 0 {
            (-three * f[p] + four * f[p + stride] - f[p + 2 * stride]) / (two * h)
        } else if k == n - 1 {
            (three * f[p] - four * f[p - stride] + f[p - 2 * stride]) / (two * h)
        } else {
            (f[p + stride] - f[p - stride]) / (two * h)
        };
    }
    out
}

/// Layers of zero nodes filled in by [`signed_extension`].
pub const EXTENSION_LAYERS: usize = 2;

/// Components continued linearly across the interface.
///
/// Layer by layer, each zero node next to the known nodes (initially the
/// positive ones) receives the mean of the extrapolations `2 u(a) − u(b)`
/// over the axial and diagonal directions `z → a → b` with `a, b` known.
pub fn signed_extension<T: Scalar>(u: &VectorField<T>, layers: usize) -> Vec<Vec<T>> {
    let grid = u.grid();
    let (nx, ny) = (grid.nx() as isize, grid.ny() as isize);
    let tol = u.positivity_tol();
    let mut known: Vec<bool> = (0..grid.len()).map(|p| u.norm_at(p) > tol).collect();
    let mut out: Vec<Vec<T>> = u.comps().to_vec();
    let (two, three): (T, T) = (lit(2.0), lit(3.0));
    for _ in 0..layers {
        let mut fresh: Vec<(usize, Vec<T>)> = Vec::new();
        for z in 0..grid.len() {
            if known[z] {
                continue;
            }
            let (i, j) = grid.ij(z);
            let (i, j) = (i as isize, j as isize);
            let mut sums = vec![T::zero(); u.m()];
            let mut count = 0usize;
            for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)] {
                let (i2, j2) = (i + 2 * di, j + 2 * dj);
                if i2 < 0 || j2 < 0 || i2 >= nx || j2 >= ny {
                    continue;
                }
                let a = grid.idx((i + di) as usize, (j + dj) as usize);
                let b = grid.idx(i2 as usize, j2 as usize);
                if !(known[a] && known[b]) {
                    continue;
                }
                let (i3, j3) = (i + 3 * di, j + 3 * dj);
                let c3 = (i3 >= 0 && j3 >= 0 && i3 < nx && j3 < ny)
                    .then(|| grid.idx(i3 as usize, j3 as usize))
                    .filter(|&c| known[c]);
                for (k, c) in out.iter().enumerate() {
                    sums[k] += match c3 {
                        Some(d) => three * (c[a] - c[b]) + c[d],
                        None => two * c[a] - c[b],
                    };
                }
                count += 1;
            }
            if count > 0 {
                let n: T = lit(count as f64);
                fresh.push((z, sums.into_iter().map(|v| v / n).collect()));
            }
        }
        for (z, vals) in fresh {
            for (k, v) in vals.into_iter().enumerate() {
                out[k][z] = v;
            }
            known[z] = true;
        }
    }
    out
}

/// Inverts the lead component column by column over `ygrid`.
///
/// `ygrid` has `y′` along its first axis and the level `y_n ≥ 0` along its
/// second. Every column of the window is checked for monotonicity of `u₁`.
/// Levels are solved on the cubic interpolant of the [`signed_extension`],
/// whose zero level crosses cut cells instead of following their edges and
/// whose second differences stay bounded under refinement of `ygrid`.
pub fn hodograph_transform<T: Scalar>(
    u: &VectorField<T>,
    lead: usize,
    window: &HodographWindow<T>,
    ygrid: &GridSpec<T>,
) -> Result<HodographPatch<T>> {
    if lead >= u.m() {
        return Err(FbError::InvalidArgument(format!("lead component {lead} out of range")));
    }
    if ygrid.lo()[1] < T::zero() {
        return Err(FbError::InvalidArgument("levels must be nonnegative".into()));
    }
    if ygrid.nx() < 3 || ygrid.ny() < 3 {
        return Err(FbError::TooFewNodes(ygrid.nx(), ygrid.ny()));
    }
    let grid = u.grid();
    for yp in [ygrid.lo()[0], ygrid.hi()[0]] {
        for t in [window.t_min, window.t_max] {
            let p = window.point(yp, t);
            if !grid.contains(p) {
                return Err(FbError::OutsideDomain(to_f64(p[0]), to_f64(p[1])));
            }
        }
    }
    let c = u.comp(lead);
    let scale = c.iter().fold(T::one(), |a, &b| a.max(b.abs()));
    let tol = lit::<T>(1e-12) * scale;
    let (nx, ny) = (ygrid.nx(), ygrid.ny());
    let offset = window.offset();

    let ext = signed_extension(u, EXTENSION_LAYERS);
    let e = &ext[lead];

    let columns: Vec<Vec<T>> = (0..nx)
        .into_par_iter()
        .map(|i| {
            let yp = ygrid.coord(0, i);
            check_column(grid, c, window, yp, tol)?;
            (0..ny)
                .map(|j| solve_level(grid, e, window, yp, ygrid.coord(1, j)))
                .collect::<Result<Vec<T>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut t_of = vec![T::zero(); ygrid.len()];
    for (i, col) in columns.iter().enumerate() {
        for (j, &t) in col.iter().enumerate() {
            t_of[ygrid.idx(i, j)] = t;
        }
    }
    let mut round_trip = T::zero();
    for p in 0..ygrid.len() {
        let y = ygrid.node_at(p);
        let back = interp_cubic(grid, e, window.point(y[0], t_of[p]))?;
        round_trip = round_trip.max((back - y[1]).abs());
    }
    let companions = (0..u.m())
        .filter(|&k| k != lead)
        .map(|k| {
            let vals = (0..ygrid.len())
                .map(|p| interp_cubic(grid, &ext[k], window.point(ygrid.node_at(p)[0], t_of[p])))
                .collect::<Result<Vec<T>>>()?;
            Ok((k, vals))
        })
        .collect::<Result<Vec<_>>>()?;
    let v1: Vec<T> = t_of.iter().map(|&t| t + offset).collect();
    let dn = axis_derivative(ygrid, &v1, 1);
    let dp = axis_derivative(ygrid, &v1, 0);
    if let Some(p) = (0..dn.len()).find(|&p| !(dn[p] > T::zero())) {
        let y = ygrid.node_at(p);
        return Err(FbError::NotMonotone(to_f64(y[0])));
    }
    Ok(HodographPatch {
        window: *window,
        ygrid: ygrid.clone(),
        lead,
        v1,
        companions,
        dn,
        dp,
        round_trip,
    })
}

#[derive(Debug, Clone)]
pub struct OperatorResidual<T> {
    /// `L(v₁)v₁` then `L(v₁)v_k`, zero on the patch edges.
    pub fields: Vec<Vec<T>>,
    /// Largest magnitude of each field over interior nodes.
    pub max: Vec<T>,
}

impl<T: Scalar> OperatorResidual<T> {
    /// Largest magnitude over all fields at the nodes `(i, j)` of `ygrid` with
    /// both indices divisible by `stride`. With `stride = 2` on a `2n − 1` grid
    /// these are the nodes of the `n` grid.
    pub fn max_on_subgrid(&self, ygrid: &GridSpec<T>, stride: usize) -> T {
        let stride = stride.max(1);
        let mut m = T::zero();
        for j in (0..ygrid.ny()).step_by(stride) {
            for i in (0..ygrid.nx()).step_by(stride) {
                let p = ygrid.idx(i, j);
                for f in &self.fields {
                    m = m.max(f[p].abs());
                }
            }
        }
        m
    }
}

/// Applies `L(v₁)` with central differences at interior y-nodes.
pub fn operator_residual<T: Scalar>(patch: &HodographPatch<T>) -> Result<OperatorResidual<T>> {
    let g = &patch.ygrid;
    let (nx, ny) = (g.nx(), g.ny());
    if nx < 5 || ny < 5 {
        return Err(FbError::TooFewNodes(nx, ny));
    }
    let [hp, hn] = g.h();
    let (one, two, four): (T, T, T) = (T::one(), lit(2.0), lit(4.0));
    let apply = |f: &[T]| -> Vec<T> {
        let mut out = vec![T::zero(); f.len()];
        for j in 1..ny - 1 {
            for i in 1..nx - 1 {
                let p = g.idx(i, j);
                let (d, s) = (patch.dn[p], patch.dp[p]);
                let a = (one + s * s) / (d * d);
                let fnn = (f[p + nx] - two * f[p] + f[p - nx]) / (hn * hn);
                let fpp = (f[p + 1] - two * f[p] + f[p - 1]) / (hp * hp);
                let fpn = (f[p + nx + 1] - f[p + nx - 1] - f[p - nx + 1] + f[p - nx - 1]) / (four * hp * hn);
                out[p] = a * fnn + fpp - two * (s / d) * fpn;
            }
        }
        out
    };
    let mut fields = vec![apply(&patch.v1)];
    for (_, v) in &patch.companions {
        fields.push(apply(v));
    }
    let max = fields
        .iter()
        .map(|f| f.iter().fold(T::zero(), |a, &b| a.max(b.abs())))
        .collect();
    Ok(OperatorResidual { fields, max })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryResidual {
    pub y_prime: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    /// `|lhs − rhs| / lhs` per column.
    pub residual: Vec<f64>,
    pub max: f64,
}

/// Compares `Q²` with `a (1 + Σ_k (∂_n v_k)²)` on the row `y_n = 0`.
pub fn fb_bc_residual<T: Scalar>(patch: &HodographPatch<T>, q: &WeightField<T>) -> Result<BoundaryResidual> {
    let g = &patch.ygrid;
    if g.lo()[1] != T::zero() {
        return Err(FbError::InvalidArgument("patch lacks the y_n = 0 row".into()));
    }
    let companions_dn: Vec<Vec<T>> = patch
        .companions
        .iter()
        .map(|(_, v)| axis_derivative(g, v, 1))
        .collect();
    let offset = patch.window.offset();
    let mut out = BoundaryResidual {
        y_prime: vec![],
        lhs: vec![],
        rhs: vec![],
        residual: vec![],
        max: 0.0,
    };
    for i in 0..g.nx() {
        let p = g.idx(i, 0);
        let yp = g.coord(0, i);
        let qx = q.at(patch.window.point(yp, patch.v1[p] - offset))?;
        let (d, s) = (patch.dn[p], patch.dp[p]);
        let mut bracket = T::one();
        for dv in &companions_dn {
            bracket += dv[p] * dv[p];
        }
        let lhs = to_f64(qx * qx);
        let rhs = to_f64((T::one() + s * s) / (d * d) * bracket);
        let r = (lhs - rhs).abs() / lhs;
        out.max = out.max.max(r);
        out.y_prime.push(to_f64(yp));
        out.lhs.push(lhs);
        out.rhs.push(rhs);
        out.residual.push(r);
    }
    Ok(out)
}

/// Smallest eigenvalue over all y-nodes of `[[a, −∂_p v₁/∂_n v₁], [−∂_p v₁/∂_n v₁, 1]]`.
pub fn ellipticity_margin<T: Scalar>(patch: &HodographPatch<T>) -> T {
    let (one, half): (T, T) = (T::one(), lit(0.5));
    let mut margin = T::infinity();
    for p in 0..patch.v1.len() {
        let (d, s) = (patch.dn[p], patch.dp[p]);
        let a = (one + s * s) / (d * d);
        let b = s / d;
        let mean = half * (a + one);
        let rad = (half * half * (a - one) * (a - one) + b * b).sqrt();
        margin = margin.min(mean - rad);
    }
    margin
}
