use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{FbError, Result};
use crate::grid::{cell_grad, interp_gradient, VectorField, WeightField};
use crate::scalar::{lit, to_f64, Scalar};

use super::free_boundary::{dist, FreeBoundary};

/// Probe offsets along the inner normal, in grid spacings.
pub const PROBE_OFFSETS: [f64; 3] = [2.0, 4.0, 8.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FbPointResidual {
    pub point: [f64; 2],
    pub q: f64,
    /// Fitted slope of `|u|` along the inner normal.
    pub slope: f64,
    /// `|slope − Q| / Q`.
    pub residual: f64,
    pub component_slopes: Vec<f64>,
    /// `|Σ s_i² − Q²| / Q²`.
    pub squared_residual: f64,
    /// Some probe lies in a cell with both zero and positive corners.
    pub cut: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FbConditionReport {
    pub points: Vec<FbPointResidual>,
    /// Interface points whose probes leave the domain.
    pub skipped: Vec<[f64; 2]>,
    pub median: f64,
    pub max: f64,
    /// Largest residual over points whose probes avoid cut cells; NaN when
    /// every point has a cut probe.
    pub max_uncut: f64,
}

/// Least-squares slope of `y` against `t` with a free intercept.
fn fit_slope(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let num: f64 = t.iter().zip(y).map(|(a, b)| (a - mt) * (b - my)).sum();
    let den: f64 = t.iter().map(|a| (a - mt) * (a - mt)).sum();
    num / den
}

/// Median of `v` (sorted in place); NaN when empty.
pub fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One-sided gradient of `|u|` against `Q` at every interface point.
///
/// The probe direction is the gradient of `|u|` at `x − 4hν`, or `−ν` where
/// that gradient vanishes. `|u|` and each `u_i` are sampled at `2h, 4h, 8h`
/// along it and a line is fitted through the three samples.
pub fn fb_condition_residual<T: Scalar>(
    u: &VectorField<T>,
    q: &WeightField<T>,
    fb: &FreeBoundary<T>,
) -> Result<FbConditionReport> {
    if !u.grid().same_as(q.grid()) {
        return Err(FbError::GridMismatch);
    }
    if fb.is_empty() {
        return Err(FbError::EmptyFreeBoundary("no interface points".into()));
    }
    let grid = u.grid();
    let h = grid.h_max();
    let t: Vec<f64> = PROBE_OFFSETS.iter().map(|k| k * to_f64(h)).collect();
    let tol = u.positivity_tol();
    let cut_cell = |p: [T; 2]| -> Result<bool> {
        let (ci, cj, _, _) = grid.locate(p)?;
        let pos = grid.cell_nodes(ci, cj).map(|k| u.norm_at(k) > tol);
        Ok(pos.iter().any(|&b| b) && !pos.iter().all(|&b| b))
    };
    let direction = |x: [T; 2], nu: [T; 2]| -> Result<[T; 2]> {
        let inner = [-nu[0], -nu[1]];
        let s: T = h * lit(PROBE_OFFSETS[1]);
        let p = [x[0] + inner[0] * s, x[1] + inner[1] * s];
        if !grid.contains(p) {
            return Ok(inner);
        }
        let vals = u.sample(p)?;
        let n = vals.iter().map(|&v| v * v).sum::<T>().sqrt();
        if !(n > tol) {
            return Ok(inner);
        }
        let mut g = [T::zero(); 2];
        for (c, &v) in u.comps().iter().zip(&vals) {
            let d = interp_gradient(grid, c, p)?;
            g[0] += v * d[0] / n;
            g[1] += v * d[1] / n;
        }
        let len = (g[0] * g[0] + g[1] * g[1]).sqrt();
        Ok(if len > T::zero() { [g[0] / len, g[1] / len] } else { inner })
    };
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for (x, nu) in fb.points.iter().zip(&fb.normals) {
        let d = direction(*x, *nu)?;
        let probes: Vec<[T; 2]> = PROBE_OFFSETS
            .iter()
            .map(|&k| {
                let s: T = h * lit(k);
                [x[0] + d[0] * s, x[1] + d[1] * s]
            })
            .collect();
        let xf = [to_f64(x[0]), to_f64(x[1])];
        if probes.iter().any(|p| !grid.contains(*p)) {
            skipped.push(xf);
            continue;
        }
        let mut cut = false;
        for p in &probes {
            cut |= cut_cell(*p)?;
        }
        let mut norms = Vec::with_capacity(3);
        let mut comps = vec![Vec::with_capacity(3); u.m()];
        for p in &probes {
            let vals = u.sample(*p)?;
            norms.push(to_f64(vals.iter().map(|&v| v * v).sum::<T>().sqrt()));
            for (c, v) in comps.iter_mut().zip(vals) {
                c.push(to_f64(v));
            }
        }
        let qx = to_f64(q.at(*x)?);
        let slope = fit_slope(&t, &norms);
        let component_slopes: Vec<f64> = comps.iter().map(|c| fit_slope(&t, c)).collect();
        let sq: f64 = component_slopes.iter().map(|s| s * s).sum();
        points.push(FbPointResidual {
            point: xf,
            q: qx,
            slope,
            residual: (slope - qx).abs() / qx,
            component_slopes,
            squared_residual: (sq - qx * qx).abs() / (qx * qx),
            cut,
        });
    }
    let mut r: Vec<f64> = points.iter().map(|p| p.residual).collect();
    let max = r.iter().copied().fold(0.0, f64::max);
    let max_uncut = points
        .iter()
        .filter(|p| !p.cut)
        .map(|p| p.residual)
        .fold(f64::NAN, f64::max);
    Ok(FbConditionReport {
        median: median(&mut r),
        max,
        max_uncut,
        points,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderEstimate {
    pub lambda: f64,
    pub seminorm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightTraces {
    /// Positive nodes of the region.
    pub nodes: Vec<usize>,
    /// `w[i][k] = u_i / |u|` at `nodes[k]`.
    pub w: Vec<Vec<f64>>,
    pub holder: Vec<HolderEstimate>,
    /// Largest `|Σ w_i² − 1|`.
    pub normalization_error: f64,
    pub min_weight: f64,
    pub pairs: usize,
}

/// Hölder exponents of the empirical seminorm.
pub const HOLDER_EXPONENTS: [f64; 2] = [0.25, 0.5];
const MAX_PAIRS: usize = 4096;

/// Directions `u/|u|` on the positive nodes of `B_radius(center)` and their
/// empirical Hölder seminorms over sampled node pairs.
pub fn weight_traces<T: Scalar>(
    u: &VectorField<T>,
    center: [T; 2],
    radius: T,
    seed: u64,
) -> Result<WeightTraces> {
    let grid = u.grid();
    let tol = u.positivity_tol();
    let nodes: Vec<usize> = (0..grid.len())
        .filter(|&p| dist(grid.node_at(p), center) <= radius && u.norm_at(p) > tol)
        .collect();
    if nodes.is_empty() {
        return Err(FbError::InvalidArgument(
            "region lies in the zero set".into(),
        ));
    }
    let w: Vec<Vec<f64>> = (0..u.m())
        .map(|i| {
            nodes
                .iter()
                .map(|&p| to_f64(u.comp(i)[p] / u.norm_at(p)))
                .collect()
        })
        .collect();
    let mut normalization_error = 0.0f64;
    let mut min_weight = f64::INFINITY;
    for k in 0..nodes.len() {
        let s: f64 = w.iter().map(|c| c[k] * c[k]).sum();
        normalization_error = normalization_error.max((s - 1.0).abs());
        for c in &w {
            min_weight = min_weight.min(c[k]);
        }
    }
    let n = nodes.len();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    if n * (n - 1) / 2 <= MAX_PAIRS {
        for a in 0..n {
            for b in a + 1..n {
                pairs.push((a, b));
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        while pairs.len() < MAX_PAIRS {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if a != b {
                pairs.push((a, b));
            }
        }
    }
    let pos: Vec<[f64; 2]> = nodes
        .iter()
        .map(|&p| {
            let x = grid.node_at(p);
            [to_f64(x[0]), to_f64(x[1])]
        })
        .collect();
    let holder = HOLDER_EXPONENTS
        .iter()
        .map(|&lambda| {
            let mut sup = 0.0f64;
            for &(a, b) in &pairs {
                let d = ((pos[a][0] - pos[b][0]).powi(2) + (pos[a][1] - pos[b][1]).powi(2)).sqrt();
                let dl = d.powf(lambda);
                for c in &w {
                    sup = sup.max((c[a] - c[b]).abs() / dl);
                }
            }
            HolderEstimate {
                lambda,
                seminorm: sup,
            }
        })
        .collect();
    Ok(WeightTraces {
        nodes,
        w,
        holder,
        normalization_error,
        min_weight,
        pairs: pairs.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureResidual {
    /// Per component `−∫∇u_i·∇φ − Σ w_i Q φ |segment|`.
    pub defects: Vec<f64>,
    /// `Σ Q |φ| |segment|` over the interface.
    pub scale: f64,
    /// `max_i |defect_i| / scale` (zero when the scale vanishes).
    pub residual: f64,
}

/// Weak form of `Δu_i = w_i Q H¹⌞∂{|u|>0}` tested against `φ`.
///
/// `phi` returns the value and gradient of the test function. The volume
/// integral uses cell gradients and the cell-centre gradient of `φ`; the
/// interface integral sums over interface points with their segment weights,
/// taking `w` at the positive node of each edge.
pub fn measure_residual<T, F>(
    u: &VectorField<T>,
    q: &WeightField<T>,
    fb: &FreeBoundary<T>,
    phi: F,
) -> Result<MeasureResidual>
where
    T: Scalar,
    F: Fn([T; 2]) -> (T, [T; 2]),
{
    if !u.grid().same_as(q.grid()) {
        return Err(FbError::GridMismatch);
    }
    if fb.is_empty() {
        return Err(FbError::EmptyFreeBoundary("no interface points".into()));
    }
    let grid = u.grid();
    let area = grid.cell_area();
    let mut defects = vec![T::zero(); u.m()];
    for cj in 0..grid.cells_y() {
        for ci in 0..grid.cells_x() {
            let (_, gphi) = phi(grid.cell_center(ci, cj));
            if gphi[0] == T::zero() && gphi[1] == T::zero() {
                continue;
            }
            for (k, d) in defects.iter_mut().enumerate() {
                let gu = cell_grad(grid, u.comp(k), ci, cj);
                *d -= (gu[0] * gphi[0] + gu[1] * gphi[1]) * area;
            }
        }
    }
    let mut scale = T::zero();
    for (k, x) in fb.points.iter().enumerate() {
        let (v, _) = phi(*x);
        if v == T::zero() {
            continue;
        }
        let qx = q.at(*x)?;
        let pos = fb.edges[k].0;
        let norm = u.norm_at(pos);
        let wgt = fb.weights[k];
        for (i, d) in defects.iter_mut().enumerate() {
            let wi = if norm > T::zero() {
                u.comp(i)[pos] / norm
            } else {
                T::zero()
            };
            *d -= wi * qx * v * wgt;
        }
        scale += qx * v.abs() * wgt;
    }
    let worst = defects.iter().map(|d| d.abs()).fold(T::zero(), T::max);
    let residual = if scale > T::zero() {
        worst / scale
    } else {
        T::zero()
    };
    Ok(MeasureResidual {
        defects: defects.into_iter().map(to_f64).collect(),
        scale: to_f64(scale),
        residual: to_f64(residual),
    })
}

/// Smooth bump `(1 − |x − c|²/r²)²` on `B_r(c)` with its gradient.
pub fn bump<T: Scalar>(c: [T; 2], r: T) -> impl Fn([T; 2]) -> (T, [T; 2]) {
    move |x| {
        let dx = x[0] - c[0];
        let dy = x[1] - c[1];
        let s = T::one() - (dx * dx + dy * dy) / (r * r);
        if s <= T::zero() {
            return (T::zero(), [T::zero(); 2]);
        }
        let k = lit::<T>(-4.0) * s / (r * r);
        (s * s, [k * dx, k * dy])
    }
}
