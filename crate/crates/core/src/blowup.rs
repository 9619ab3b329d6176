//! Linear blowups `u_{x,r}(y) = u(x + r y) / r` and their comparison with
//! half-plane profiles `Q (ν·y)⁺ e`.

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::diagnostics::FreeBoundary;
use crate::error::{FbError, Result};
use crate::grid::{interp, GridSpec, VectorField, WeightField};
use crate::scalar::{lit, to_f64, Scalar};

/// Angular samples of the direction scan.
pub const ANGLE_SAMPLES: usize = 1024;
const GOLDEN_STEPS: usize = 120;

#[derive(Debug, Clone)]
pub struct BlowupFrame<T> {
    pub center: [T; 2],
    pub r: T,
    /// Rescaled field on the target grid.
    pub field: VectorField<T>,
    /// Bound on the interpolation error of the frame values.
    pub tolerance: T,
}

impl<T: Scalar> BlowupFrame<T> {
    /// `{x, r, tolerance}` for export next to the field files.
    pub fn sidecar(&self) -> Value {
        json!({
            "x": [to_f64(self.center[0]), to_f64(self.center[1])],
            "r": to_f64(self.r),
            "tolerance": to_f64(self.tolerance),
        })
    }
}

/// Largest difference quotient of `u` over grid edges with a node in the box `[lo, hi]`.
fn lipschitz_in_box<T: Scalar>(u: &VectorField<T>, lo: [T; 2], hi: [T; 2]) -> T {
    let grid = u.grid();
    let [hx, hy] = grid.h();
    let (i0, i1) = grid.node_range(0, lo[0] - hx, hi[0] + hx);
    let (j0, j1) = grid.node_range(1, lo[1] - hy, hi[1] + hy);
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
            let p = grid.idx(i, j);
            if i < i1 {
                best = best.max(diff(p, p + 1) / hx);
            }
            if j < j1 {
                best = best.max(diff(p, p + grid.nx()) / hy);
            }
        }
    }
    best
}

/// Samples `u(x + r y) / r` at the nodes `y` of `target`.
pub fn rescale<T: Scalar>(u: &VectorField<T>, x: [T; 2], r: T, target: &GridSpec<T>) -> Result<BlowupFrame<T>> {
    if !(r > T::zero()) || !r.is_finite() {
        return Err(FbError::InvalidArgument("blowup radius must be positive".into()));
    }
    let src = u.grid();
    let lo = [x[0] + r * target.lo()[0], x[1] + r * target.lo()[1]];
    let hi = [x[0] + r * target.hi()[0], x[1] + r * target.hi()[1]];
    for p in [lo, hi, [lo[0], hi[1]], [hi[0], lo[1]]] {
        if !src.contains(p) {
            return Err(FbError::OutsideDomain(to_f64(p[0]), to_f64(p[1])));
        }
    }
    let mut comps = Vec::with_capacity(u.m());
    for c in u.comps() {
        let vals = (0..target.len())
            .map(|p| {
                let y = target.node_at(p);
                let z = [x[0] + r * y[0], x[1] + r * y[1]];
                interp(src, c, z).map(|v| (v / r).max(T::zero()))
            })
            .collect::<Result<Vec<T>>>()?;
        comps.push(vals);
    }
    let lip = lipschitz_in_box(u, lo, hi);
    let tolerance = lip * (src.h_max() / r + target.h_max());
    Ok(BlowupFrame {
        center: x,
        r,
        field: VectorField::new(target.clone(), comps)?,
        tolerance,
    })
}

/// `Q_r(y) = Q(x + r y)` on the target grid.
pub fn rescale_weight<T: Scalar>(q: &WeightField<T>, x: [T; 2], r: T, target: &GridSpec<T>) -> Result<WeightField<T>> {
    let vals = (0..target.len())
        .map(|p| {
            let y = target.node_at(p);
            q.at([x[0] + r * y[0], x[1] + r * y[1]])
        })
        .collect::<Result<Vec<T>>>()?;
    WeightField::new(target.clone(), vals, q.q_min(), q.q_max())
}

/// Nodes of the closed unit ball of a frame grid.
fn unit_ball_nodes<T: Scalar>(grid: &GridSpec<T>) -> Vec<usize> {
    (0..grid.len())
        .filter(|&p| {
            let y = grid.node_at(p);
            y[0] * y[0] + y[1] * y[1] <= T::one() + lit(1e-12)
        })
        .collect()
}

/// Sup over the unit ball of `|a − b|`.
pub fn frame_distance<T: Scalar>(a: &BlowupFrame<T>, b: &BlowupFrame<T>) -> Result<T> {
    if !a.field.same_grid(&b.field) || a.field.m() != b.field.m() {
        return Err(FbError::GridMismatch);
    }
    let mut best = T::zero();
    for p in unit_ball_nodes(a.field.grid()) {
        let d = (0..a.field.m())
            .map(|k| (a.field.comp(k)[p] - b.field.comp(k)[p]).powi(2))
            .sum::<T>()
            .sqrt();
        best = best.max(d);
    }
    Ok(best)
}

#[derive(Debug, Clone)]
pub struct BlowupSequence<T> {
    pub frames: Vec<BlowupFrame<T>>,
    /// Sup distances between consecutive frames.
    pub distances: Vec<T>,
}

/// Frames at decreasing radii about an interface point and their consecutive distances.
pub fn blowup_sequence<T: Scalar>(
    u: &VectorField<T>,
    fb: &FreeBoundary<T>,
    x: [T; 2],
    radii: &[T],
    target: &GridSpec<T>,
) -> Result<BlowupSequence<T>> {
    if radii.len() < 2 {
        return Err(FbError::InvalidArgument("a blowup sequence needs at least two radii".into()));
    }
    if radii.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(FbError::InvalidArgument("blowup radii must be strictly decreasing".into()));
    }
    fb.require_near(x)?;
    let frames = radii
        .iter()
        .map(|&r| rescale(u, x, r, target))
        .collect::<Result<Vec<_>>>()?;
    let distances = frames
        .windows(2)
        .map(|w| frame_distance(&w[0], &w[1]))
        .collect::<Result<Vec<_>>>()?;
    Ok(BlowupSequence { frames, distances })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularFit<T> {
    /// Unit `ν` of the profile `Q (ν·y)⁺ e`; it points into the positivity set.
    pub direction: [T; 2],
    /// Nonnegative unit weights.
    pub e: Vec<T>,
    /// Sup misfit over the unit ball.
    pub residual: T,
}

impl<T: Scalar> RegularFit<T> {
    /// Outer normal of the positivity set, `−ν`.
    pub fn outer_normal(&self) -> [T; 2] {
        [-self.direction[0], -self.direction[1]]
    }
}

struct Samples {
    y: Vec<[f64; 2]>,
    u: Vec<Vec<f64>>,
    norm_sq: f64,
}

impl Samples {
    /// `(Σ|u|² − 2Q|b| + Q² Σs², b)` with `b = Σ u s`, `s = (ν·y)⁺`.
    fn objective(&self, q: f64, theta: f64) -> (f64, Vec<f64>) {
        let nu = [theta.cos(), theta.sin()];
        let m = self.u.len();
        let mut b = vec![0.0; m];
        let mut ss = 0.0;
        for (k, y) in self.y.iter().enumerate() {
            let s = (nu[0] * y[0] + nu[1] * y[1]).max(0.0);
            if s > 0.0 {
                ss += s * s;
                for (i, bi) in b.iter_mut().enumerate() {
                    *bi += self.u[i][k] * s;
                }
            }
        }
        let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        (self.norm_sq - 2.0 * q * nb + q * q * ss, b)
    }

    fn misfit(&self, q: f64, nu: [f64; 2], e: &[f64]) -> f64 {
        let mut best = 0.0f64;
        for (k, y) in self.y.iter().enumerate() {
            let s = (nu[0] * y[0] + nu[1] * y[1]).max(0.0);
            let d: f64 = e
                .iter()
                .enumerate()
                .map(|(i, ei)| (self.u[i][k] - q * s * ei).powi(2))
                .sum::<f64>()
                .sqrt();
            best = best.max(d);
        }
        best
    }
}

fn unit_nonneg(b: &[f64]) -> Option<Vec<f64>> {
    let c: Vec<f64> = b.iter().map(|v| v.max(0.0)).collect();
    let n = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    (n > 0.0).then(|| c.iter().map(|v| v / n).collect())
}

/// Least-squares half-plane profile for a frame, given `Q(x)`.
///
/// The direction is found by a scan over [`ANGLE_SAMPLES`] angles followed by
/// golden-section refinement of the misfit energy. A final polish regresses
/// each component linearly on the nodes well inside the fitted positivity set
/// and takes the dominant singular pair of the resulting `m × 2` matrix; it is
/// kept when it lowers the sup misfit.
pub fn classify_regular<T: Scalar>(frame: &BlowupFrame<T>, q: T) -> Result<RegularFit<T>> {
    let grid = frame.field.grid();
    let qf = to_f64(q);
    if !(qf > 0.0) {
        return Err(FbError::InvalidArgument("Q(x) must be positive".into()));
    }
    let nodes = unit_ball_nodes(grid);
    let mut samples = Samples {
        y: nodes
            .iter()
            .map(|&p| {
                let y = grid.node_at(p);
                [to_f64(y[0]), to_f64(y[1])]
            })
            .collect(),
        u: (0..frame.field.m())
            .map(|k| nodes.iter().map(|&p| to_f64(frame.field.comp(k)[p])).collect())
            .collect(),
        norm_sq: 0.0,
    };
    if samples.u.iter().flatten().any(|v| !v.is_finite()) {
        return Err(FbError::NonFinite("frame values".into()));
    }
    samples.norm_sq = samples.u.iter().flatten().map(|v| v * v).sum();
    if samples.norm_sq == 0.0 {
        return Err(FbError::UndefinedDirection("frame vanishes on the unit ball".into()));
    }

    let two_pi = 2.0 * std::f64::consts::PI;
    let step = two_pi / ANGLE_SAMPLES as f64;
    let scan: Vec<f64> = (0..ANGLE_SAMPLES)
        .into_par_iter()
        .map(|k| samples.objective(qf, k as f64 * step).0)
        .collect();
    // ties go to the smallest angle
    let k0 = (0..ANGLE_SAMPLES).fold(0, |best, k| if scan[k] < scan[best] { k } else { best });
    let (mut a, mut b) = ((k0 as f64 - 1.0) * step, (k0 as f64 + 1.0) * step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (samples.objective(qf, c).0, samples.objective(qf, d).0);
    for _ in 0..GOLDEN_STEPS {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = samples.objective(qf, c).0;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = samples.objective(qf, d).0;
        }
    }
    let theta = 0.5 * (a + b);
    let (_, bvec) = samples.objective(qf, theta);
    let mut nu = [theta.cos(), theta.sin()];
    let mut e = unit_nonneg(&bvec).ok_or_else(|| FbError::UndefinedDirection("no positive overlap".into()))?;
    let mut residual = samples.misfit(qf, nu, &e);

    if let Some((nu2, e2)) = polish(&samples, nu, to_f64(grid.h_max())) {
        let r2 = samples.misfit(qf, nu2, &e2);
        if r2 < residual {
            nu = nu2;
            e = e2;
            residual = r2;
        }
    }
    Ok(RegularFit {
        direction: [lit(nu[0]), lit(nu[1])],
        e: e.into_iter().map(lit).collect(),
        residual: lit(residual),
    })
}

/// Rank-one refit `u ≈ (Q e)(ν·y)` on the nodes more than two spacings inside
/// the fitted positivity set.
fn polish(s: &Samples, nu: [f64; 2], h: f64) -> Option<([f64; 2], Vec<f64>)> {
    let inside: Vec<usize> = (0..s.y.len())
        .filter(|&k| nu[0] * s.y[k][0] + nu[1] * s.y[k][1] > 2.0 * h)
        .collect();
    if inside.len() < 3 {
        return None;
    }
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &k in &inside {
        let y = s.y[k];
        sxx += y[0] * y[0];
        sxy += y[0] * y[1];
        syy += y[1] * y[1];
    }
    let det = sxx * syy - sxy * sxy;
    if !(det.abs() > 1e-300) {
        return None;
    }
    // rows a_i with u_i ≈ a_i · y
    let rows: Vec<[f64; 2]> = s
        .u
        .iter()
        .map(|ui| {
            let (mut bx, mut by) = (0.0, 0.0);
            for &k in &inside {
                bx += ui[k] * s.y[k][0];
                by += ui[k] * s.y[k][1];
            }
            [(syy * bx - sxy * by) / det, (sxx * by - sxy * bx) / det]
        })
        .collect();
    let (mut m00, mut m01, mut m11) = (0.0, 0.0, 0.0);
    for a in &rows {
        m00 += a[0] * a[0];
        m01 += a[0] * a[1];
        m11 += a[1] * a[1];
    }
    let tr = 0.5 * (m00 + m11);
    let disc = (0.25 * (m00 - m11).powi(2) + m01 * m01).sqrt();
    let lam = tr + disc;
    let v1 = [m01, lam - m00];
    let v2 = [lam - m11, m01];
    let v = if v1[0].hypot(v1[1]) >= v2[0].hypot(v2[1]) { v1 } else { v2 };
    let n = v[0].hypot(v[1]);
    if !(n > 0.0) {
        return None;
    }
    let mut v = [v[0] / n, v[1] / n];
    if v[0] * nu[0] + v[1] * nu[1] < 0.0 {
        v = [-v[0], -v[1]];
    }
    let ev: Vec<f64> = rows.iter().map(|a| a[0] * v[0] + a[1] * v[1]).collect();
    unit_nonneg(&ev).map(|e| (v, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::extract_free_boundary;
    use crate::homogeneous::{halfplane_field, HalfPlaneSpec};
    use std::f64::consts::FRAC_1_SQRT_2;

    fn unit_grid(n: usize) -> GridSpec<f64> {
        GridSpec::square(-1.0, 1.0, n).unwrap()
    }

    #[test]
    fn homogeneous_field_is_invariant() {
        let src = unit_grid(257);
        let spec = HalfPlaneSpec::new(1.3, [0.6, 0.8], vec![1.0]).unwrap();
        let u = halfplane_field(&spec, &src);
        let target = unit_grid(33);
        let exact = halfplane_field(&spec, &target);
        for r in [0.25, 0.5] {
            let f = rescale(&u, [0.0, 0.0], r, &target).unwrap();
            let err = (0..target.len())
                .map(|p| (f.field.comp(0)[p] - exact.comp(0)[p]).abs())
                .fold(0.0, f64::max);
            assert!(err <= f.tolerance, "r {r}: {err} > {}", f.tolerance);
        }
    }

    #[test]
    fn constant_field_scales() {
        let src = unit_grid(33);
        let u = VectorField::from_fn(src, 1, |_, o| o[0] = 3.0);
        let f = rescale(&u, [0.1, 0.0], 0.25, &unit_grid(9)).unwrap();
        assert!(f.field.comp(0).iter().all(|&v| (v - 12.0).abs() < 1e-12));
        assert!(rescale(&u, [0.9, 0.0], 0.25, &unit_grid(9)).is_err());
    }

    #[test]
    fn composition() {
        let src = unit_grid(129);
        let u = VectorField::from_fn(src, 1, |p, o| o[0] = (p[0] + 0.3 * p[1] * p[1]).max(0.0));
        let target = unit_grid(65);
        let x = [0.05, -0.1];
        let a = rescale(&u, x, 0.5, &target).unwrap();
        let ab = rescale(&a.field, [0.0, 0.0], 0.5, &target).unwrap();
        let direct = rescale(&u, x, 0.25, &target).unwrap();
        let d = frame_distance(&ab, &direct).unwrap();
        assert!(d <= 2.0 * direct.tolerance.max(ab.tolerance), "{d}");
    }

    #[test]
    fn sequence_on_half_plane() {
        let src = unit_grid(257);
        let spec = HalfPlaneSpec::scalar(1.0, [1.0, 0.0]).unwrap();
        let u = halfplane_field(&spec, &src);
        let fb = extract_free_boundary(&u.positivity_mask()).unwrap();
        let target = unit_grid(33);
        let seq = blowup_sequence(&u, &fb, [0.0, 0.0], &[0.5, 0.25, 0.125], &target).unwrap();
        for (k, d) in seq.distances.iter().enumerate() {
            assert!(*d <= seq.frames[k + 1].tolerance, "{d}");
        }
        assert!(blowup_sequence(&u, &fb, [0.0, 0.0], &[0.2], &target).is_err());
        assert!(blowup_sequence(&u, &fb, [0.0, 0.0], &[0.2, 0.4], &target).is_err());
    }

    #[test]
    fn classify_exact_profile() {
        let target = unit_grid(65);
        let spec = HalfPlaneSpec::new(1.0, [-1.0, 0.0], vec![1.0, 0.0]).unwrap();
        let frame = BlowupFrame {
            center: [0.0, 0.0],
            r: 1.0,
            field: halfplane_field(&spec, &target),
            tolerance: 0.0,
        };
        let fit = classify_regular(&frame, 1.0).unwrap();
        assert!(fit.residual <= 1e-10, "{fit:?}");
        assert!((fit.direction[0] + 1.0).abs() < 1e-12 && fit.direction[1].abs() < 1e-12);
        assert!((fit.e[0] - 1.0).abs() < 1e-12 && fit.e[1] == 0.0);
        assert_eq!(fit.outer_normal(), [1.0, -0.0]);
    }

    #[test]
    fn classify_shared_profile() {
        let target = unit_grid(65);
        let spec = HalfPlaneSpec::new(2.0, [0.6, -0.8], vec![FRAC_1_SQRT_2, FRAC_1_SQRT_2]).unwrap();
        let frame = BlowupFrame {
            center: [0.0, 0.0],
            r: 1.0,
            field: halfplane_field(&spec, &target),
            tolerance: 0.0,
        };
        let fit = classify_regular(&frame, 2.0).unwrap();
        assert!(fit.residual <= 1e-10, "{fit:?}");
        assert!((fit.e[0] - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((fit.direction[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn classify_zero_frame() {
        let target = unit_grid(17);
        let frame = BlowupFrame {
            center: [0.0, 0.0],
            r: 1.0,
            field: VectorField::zeros(target, 2),
            tolerance: 0.0,
        };
        assert!(matches!(classify_regular(&frame, 1.0), Err(FbError::UndefinedDirection(_))));
    }

    #[test]
    fn weiss_scaling_identity() {
        use crate::diagnostics::weiss_value;
        // frame nodes coincide with source nodes, so both quadratures agree
        let src = unit_grid(257);
        let spec = HalfPlaneSpec::new(1.0, [0.6, 0.8], vec![0.6, 0.8]).unwrap();
        let u = halfplane_field(&spec, &src);
        let q = WeightField::from_fn(src.clone(), |p| 1.0 + 0.2 * p[0]).unwrap();
        let (r, s) = (0.5, 0.5);
        let target = unit_grid(129);
        let frame = rescale(&u, [0.0, 0.0], r, &target).unwrap();
        let qr = rescale_weight(&q, [0.0, 0.0], r, &target).unwrap();
        let lhs = weiss_value(&u, &q, [0.0, 0.0], r * s).unwrap();
        let rhs = weiss_value(&frame.field, &qr, [0.0, 0.0], s).unwrap();
        assert!((lhs - rhs).abs() < 1e-8, "{lhs} {rhs}");
    }
}
