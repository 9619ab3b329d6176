//! Node-centred uniform grids on axis-aligned boxes, and the scalar, vector,
//! mask and weight fields that live on them.
//!
//! Storage is row-major: node `(i, j)` (i along x, j along y) sits at index
//! `j * nx + i`. Cell `(ci, cj)` spans nodes `(ci..=ci+1, cj..=cj+1)`.

use crate::error::{FbError, Result};
use crate::scalar::{from_usize, lit, pi, to_f64, Scalar};

/// Relative threshold below which a node counts as zero.
pub const POSITIVITY_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec<T> {
    lo: [T; 2],
    hi: [T; 2],
    n: [usize; 2],
    h: [T; 2],
}

impl<T: Scalar> GridSpec<T> {
    /// Builds the grid on `[lo[0], hi[0]] x [lo[1], hi[1]]` with `n[a]` nodes along axis `a`.
    pub fn new(lo: [T; 2], hi: [T; 2], n: [usize; 2]) -> Result<Self> {
        for a in 0..2 {
            if !(lo[a].is_finite() && hi[a].is_finite()) || hi[a] <= lo[a] {
                return Err(FbError::DegenerateBox(format!(
                    "axis {a}: [{}, {}]",
                    to_f64(lo[a]),
                    to_f64(hi[a])
                )));
            }
        }
        if n[0] < 3 || n[1] < 3 {
            return Err(FbError::TooFewNodes(n[0], n[1]));
        }
        let h = [
            (hi[0] - lo[0]) / from_usize(n[0] - 1),
            (hi[1] - lo[1]) / from_usize(n[1] - 1),
        ];
        Ok(GridSpec { lo, hi, n, h })
    }

    /// Square grid `[a, b]^2` with `n` nodes per axis.
    pub fn square(a: T, b: T, n: usize) -> Result<Self> {
        Self::new([a, a], [b, b], [n, n])
    }

    pub fn lo(&self) -> [T; 2] {
        self.lo
    }
    pub fn hi(&self) -> [T; 2] {
        self.hi
    }
    pub fn h(&self) -> [T; 2] {
        self.h
    }
    pub fn nx(&self) -> usize {
        self.n[0]
    }
    pub fn ny(&self) -> usize {
        self.n[1]
    }
    pub fn dims(&self) -> [usize; 2] {
        self.n
    }
    /// Larger of the two spacings.
    pub fn h_max(&self) -> T {
        self.h[0].max(self.h[1])
    }
    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn cell_area(&self) -> T {
        self.h[0] * self.h[1]
    }
    pub fn area(&self) -> T {
        (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])
    }
    pub fn cells_x(&self) -> usize {
        self.n[0] - 1
    }
    pub fn cells_y(&self) -> usize {
        self.n[1] - 1
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.n[0] + i
    }

    #[inline]
    pub fn ij(&self, p: usize) -> (usize, usize) {
        (p % self.n[0], p / self.n[0])
    }

    /// Coordinate of node index `k` along `axis`; the last node reproduces the box edge exactly.
    #[inline]
    pub fn coord(&self, axis: usize, k: usize) -> T {
        if k + 1 == self.n[axis] {
            self.hi[axis]
        } else {
            self.lo[axis] + from_usize::<T>(k) * self.h[axis]
        }
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> [T; 2] {
        [self.coord(0, i), self.coord(1, j)]
    }

    #[inline]
    pub fn node_at(&self, p: usize) -> [T; 2] {
        let (i, j) = self.ij(p);
        self.node(i, j)
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i + 1 == self.n[0] || j + 1 == self.n[1]
    }

    #[inline]
    pub fn is_boundary_index(&self, p: usize) -> bool {
        let (i, j) = self.ij(p);
        self.is_boundary(i, j)
    }

    /// Node indices of cell `(ci, cj)` in the order `(0,0), (1,0), (0,1), (1,1)`.
    #[inline]
    pub fn cell_nodes(&self, ci: usize, cj: usize) -> [usize; 4] {
        let p = self.idx(ci, cj);
        let nx = self.n[0];
        [p, p + 1, p + nx, p + nx + 1]
    }

    pub fn cell_center(&self, ci: usize, cj: usize) -> [T; 2] {
        let half: T = lit(0.5);
        [
            self.coord(0, ci) + half * self.h[0],
            self.coord(1, cj) + half * self.h[1],
        ]
    }

    fn slack(&self, axis: usize) -> T {
        lit::<T>(1e-9) * (self.hi[axis] - self.lo[axis])
    }

    pub fn contains(&self, p: [T; 2]) -> bool {
        (0..2).all(|a| {
            p[a].is_finite()
                && p[a] >= self.lo[a] - self.slack(a)
                && p[a] <= self.hi[a] + self.slack(a)
        })
    }

    /// Cell containing `p` and local coordinates `(s, t)` in `[0, 1]^2`.
    pub fn locate(&self, p: [T; 2]) -> Result<(usize, usize, T, T)> {
        if !self.contains(p) {
            return Err(FbError::OutsideDomain(to_f64(p[0]), to_f64(p[1])));
        }
        let mut out = [(0usize, T::zero()); 2];
        for a in 0..2 {
            let r = (p[a] - self.lo[a]) / self.h[a];
            let max_cell = self.n[a] - 2;
            let c = r
                .floor()
                .max(T::zero())
                .to_usize()
                .unwrap_or(0)
                .min(max_cell);
            let s = (r - from_usize(c)).max(T::zero()).min(T::one());
            out[a] = (c, s);
        }
        Ok((out[0].0, out[1].0, out[0].1, out[1].1))
    }

    /// Nearest node to `p` (clamped into the grid).
    pub fn nearest_node(&self, p: [T; 2]) -> (usize, usize) {
        let mut k = [0usize; 2];
        for a in 0..2 {
            let r = ((p[a] - self.lo[a]) / self.h[a]).round();
            let r = r.max(T::zero()).to_usize().unwrap_or(0);
            k[a] = r.min(self.n[a] - 1);
        }
        (k[0], k[1])
    }

    /// Errors unless the closed disk of radius `r` about `c` lies in the box.
    pub fn check_ball(&self, c: [T; 2], r: T) -> Result<()> {
        let inside = r > T::zero()
            && (0..2).all(|a| {
                c[a] - r >= self.lo[a] - self.slack(a) && c[a] + r <= self.hi[a] + self.slack(a)
            });
        if inside {
            Ok(())
        } else {
            Err(FbError::BallExitsDomain {
                x: to_f64(c[0]),
                y: to_f64(c[1]),
                radius: to_f64(r),
            })
        }
    }

    /// Inclusive node index range along `axis` covering `[a, b]`.
    pub fn node_range(&self, axis: usize, a: T, b: T) -> (usize, usize) {
        let lo = ((a - self.lo[axis]) / self.h[axis]).ceil();
        let hi = ((b - self.lo[axis]) / self.h[axis]).floor();
        let last = self.n[axis] - 1;
        let lo = lo.max(T::zero()).to_usize().unwrap_or(0).min(last);
        let hi = hi.max(T::zero()).to_usize().unwrap_or(0).min(last);
        (lo, hi)
    }

    /// Fraction of cell `(ci, cj)` covered by the disk `B_r(c)`.
    pub fn cell_disk_overlap(&self, ci: usize, cj: usize, c: [T; 2], r: T) -> T {
        let x0 = self.coord(0, ci);
        let y0 = self.coord(1, cj);
        let x1 = x0 + self.h[0];
        let y1 = y0 + self.h[1];
        let r2 = r * r;
        let far_x = (x0 - c[0]).abs().max((x1 - c[0]).abs());
        let far_y = (y0 - c[1]).abs().max((y1 - c[1]).abs());
        if far_x * far_x + far_y * far_y <= r2 {
            return T::one();
        }
        let near_x = (c[0].max(x0).min(x1)) - c[0];
        let near_y = (c[1].max(y0).min(y1)) - c[1];
        if near_x * near_x + near_y * near_y >= r2 {
            return T::zero();
        }
        let area = rect_disk_area(x0 - c[0], x1 - c[0], y0 - c[1], y1 - c[1], r);
        (area / (self.h[0] * self.h[1]))
            .max(T::zero())
            .min(T::one())
    }

    /// Cells meeting `B_r(c)` with their overlap fractions, in row-major order.
    pub fn ball_cells(&self, c: [T; 2], r: T) -> Vec<(usize, usize, T)> {
        let mut out = Vec::new();
        let (ci0, cj0, ci1, cj1) = self.cell_window(c, r);
        for cj in cj0..=cj1 {
            for ci in ci0..=ci1 {
                let f = self.cell_disk_overlap(ci, cj, c, r);
                if f > T::zero() {
                    out.push((ci, cj, f));
                }
            }
        }
        out
    }

    /// Inclusive cell index window covering the bounding box of `B_r(c)`.
    pub fn cell_window(&self, c: [T; 2], r: T) -> (usize, usize, usize, usize) {
        let mut lo = [0usize; 2];
        let mut hi = [0usize; 2];
        for a in 0..2 {
            let max_cell = self.n[a] - 2;
            let l = ((c[a] - r - self.lo[a]) / self.h[a]).floor() - T::one();
            let u = ((c[a] + r - self.lo[a]) / self.h[a]).floor() + T::one();
            lo[a] = l.max(T::zero()).to_usize().unwrap_or(0).min(max_cell);
            hi[a] = u.max(T::zero()).to_usize().unwrap_or(0).min(max_cell);
        }
        (lo[0], lo[1], hi[0], hi[1])
    }

    /// `∫_{B_r(c)} f` for a cell-wise constant density `f(ci, cj)`.
    pub fn integrate_ball_cells<F>(&self, c: [T; 2], r: T, f: F) -> Result<T>
    where
        F: Fn(usize, usize) -> T,
    {
        self.check_ball(c, r)?;
        let area = self.cell_area();
        let mut acc = T::zero();
        for (ci, cj, frac) in self.ball_cells(c, r) {
            acc += f(ci, cj) * frac * area;
        }
        Ok(acc)
    }

    /// Whether two grids describe the same node set.
    pub fn same_as(&self, other: &Self) -> bool {
        self == other
    }
}

/// `∫ sqrt(r² − x²) dx`.
fn half_chord_integral<T: Scalar>(x: T, r: T) -> T {
    let x = x.max(-r).min(r);
    let half: T = lit(0.5);
    half * (x * (r * r - x * x).max(T::zero()).sqrt() + r * r * (x / r).asin())
}

/// Exact area of `[x0, x1] × [y0, y1] ∩ B_r(0)`.
///
/// Integrates the vertical chord length `min(y1, s) − max(y0, −s)` with
/// `s = sqrt(r² − x²)` piecewise between its breakpoints.
fn rect_disk_area<T: Scalar>(x0: T, x1: T, y0: T, y1: T, r: T) -> T {
    let a = x0.max(-r);
    let b = x1.min(r);
    if !(b > a) {
        return T::zero();
    }
    let mut cuts = vec![a, b];
    for y in [y0, y1] {
        if y.abs() < r {
            let x = (r * r - y * y).sqrt();
            for c in [-x, x] {
                if c > a && c < b {
                    cuts.push(c);
                }
            }
        }
    }
    cuts.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let half: T = lit(0.5);
    let mut area = T::zero();
    for w in cuts.windows(2) {
        let (p, q) = (w[0], w[1]);
        if !(q > p) {
            continue;
        }
        let m = half * (p + q);
        let s = (r * r - m * m).max(T::zero()).sqrt();
        let top_const = y1 < s;
        let bottom_const = y0 > -s;
        if y1.min(s) - y0.max(-s) <= T::zero() {
            continue;
        }
        let chord = half_chord_integral(q, r) - half_chord_integral(p, r);
        let width = q - p;
        area += match (top_const, bottom_const) {
            (true, true) => (y1 - y0) * width,
            (true, false) => y1 * width + chord,
            (false, true) => chord - y0 * width,
            (false, false) => chord + chord,
        };
    }
    area
}

/// Bilinear interpolation of node values `vals` at `p` (no bounds check beyond `locate`).
pub fn interp<T: Scalar>(grid: &GridSpec<T>, vals: &[T], p: [T; 2]) -> Result<T> {
    let (ci, cj, s, t) = grid.locate(p)?;
    let [a, b, c, d] = grid.cell_nodes(ci, cj);
    let one = T::one();
    Ok((one - s) * (one - t) * vals[a]
        + s * (one - t) * vals[b]
        + (one - s) * t * vals[c]
        + s * t * vals[d])
}

/// Gradient of the bilinear interpolant at `p`.
pub fn interp_gradient<T: Scalar>(grid: &GridSpec<T>, vals: &[T], p: [T; 2]) -> Result<[T; 2]> {
    let (ci, cj, s, t) = grid.locate(p)?;
    let [a, b, c, d] = grid.cell_nodes(ci, cj);
    let one = T::one();
    let [hx, hy] = grid.h();
    let gx = ((one - t) * (vals[b] - vals[a]) + t * (vals[d] - vals[c])) / hx;
    let gy = ((one - s) * (vals[c] - vals[a]) + s * (vals[d] - vals[b])) / hy;
    Ok([gx, gy])
}

/// Cubic convolution weights (Keys, `a = −1/2`) for offsets `−1, 0, 1, 2` at fraction `s`.
fn keys_weights<T: Scalar>(s: T) -> [T; 4] {
    let half: T = lit(0.5);
    let (s2, s3) = (s * s, s * s * s);
    let (two, three, four, five): (T, T, T, T) = (lit(2.0), lit(3.0), lit(4.0), lit(5.0));
    [
        half * (-s3 + two * s2 - s),
        half * (three * s3 - five * s2 + two),
        half * (-three * s3 + four * s2 + s),
        half * (s3 - s2),
    ]
}

/// Tensor-product cubic convolution of node values at `p`.
///
/// The interpolant is `C¹` and reproduces quadratics away from the edges;
/// stencil indices are clamped at the domain boundary.
pub fn interp_cubic<T: Scalar>(grid: &GridSpec<T>, vals: &[T], p: [T; 2]) -> Result<T> {
    let (ci, cj, s, t) = grid.locate(p)?;
    let wx = keys_weights(s);
    let wy = keys_weights(t);
    let clamp = |k: isize, n: usize| k.max(0).min(n as isize - 1) as usize;
    let mut acc = T::zero();
    for (b, wyb) in wy.iter().enumerate() {
        let j = clamp(cj as isize + b as isize - 1, grid.ny());
        let mut row = T::zero();
        for (a, wxa) in wx.iter().enumerate() {
            let i = clamp(ci as isize + a as isize - 1, grid.nx());
            row += *wxa * vals[grid.idx(i, j)];
        }
        acc += *wyb * row;
    }
    Ok(acc)
}

/// Averaged forward-difference gradient on a cell (unchecked indices).
#[inline]
pub fn cell_grad<T: Scalar>(grid: &GridSpec<T>, vals: &[T], ci: usize, cj: usize) -> [T; 2] {
    let [a, b, c, d] = grid.cell_nodes(ci, cj);
    let half: T = lit(0.5);
    let [hx, hy] = grid.h();
    [
        half * ((vals[b] - vals[a]) + (vals[d] - vals[c])) / hx,
        half * ((vals[c] - vals[a]) + (vals[d] - vals[b])) / hy,
    ]
}

/// Cell-level `|∇u|²`: mean of the squared forward differences on the cell's
/// two edges per axis. Exact for affine fields; the induced energy has the
/// 5-point Laplacian as its Euler-Lagrange operator.
#[inline]
pub fn cell_grad_sq<T: Scalar>(grid: &GridSpec<T>, vals: &[T], ci: usize, cj: usize) -> T {
    let [a, b, c, d] = grid.cell_nodes(ci, cj);
    let half: T = lit(0.5);
    let [hx, hy] = grid.h();
    let dx0 = vals[b] - vals[a];
    let dx1 = vals[d] - vals[c];
    let dy0 = vals[c] - vals[a];
    let dy1 = vals[d] - vals[b];
    half * (dx0 * dx0 + dx1 * dx1) / (hx * hx) + half * (dy0 * dy0 + dy1 * dy1) / (hy * hy)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T> {
    grid: GridSpec<T>,
    values: Vec<T>,
}

impl<T: Scalar> ScalarField<T> {
    pub fn new(grid: GridSpec<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(FbError::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(FbError::NonFinite(format!("scalar field node {p}")));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn constant(grid: GridSpec<T>, c: T) -> Self {
        let values = vec![c; grid.len()];
        ScalarField { grid, values }
    }

    pub fn from_fn<F: Fn([T; 2]) -> T>(grid: GridSpec<T>, f: F) -> Self {
        let values = (0..grid.len()).map(|p| f(grid.node_at(p))).collect();
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }
    pub fn values(&self) -> &[T] {
        &self.values
    }
    pub fn into_values(self) -> Vec<T> {
        self.values
    }
    pub fn at(&self, i: usize, j: usize) -> T {
        self.values[self.grid.idx(i, j)]
    }

    pub fn interpolate(&self, p: [T; 2]) -> Result<T> {
        interp(&self.grid, &self.values, p)
    }

    pub fn interpolate_gradient(&self, p: [T; 2]) -> Result<[T; 2]> {
        interp_gradient(&self.grid, &self.values, p)
    }

    pub fn cell_gradient(&self, ci: usize, cj: usize) -> Result<[T; 2]> {
        if ci >= self.grid.cells_x() || cj >= self.grid.cells_y() {
            return Err(FbError::CellOutOfRange(ci, cj));
        }
        Ok(cell_grad(&self.grid, &self.values, ci, cj))
    }

    /// Mean of the interpolated field over `n_samples` equally spaced points on `∂B_r(c)`.
    pub fn sphere_average(&self, c: [T; 2], r: T, n_samples: usize) -> Result<T> {
        sphere_mean(&self.grid, n_samples, c, r, |p| self.interpolate(p))
    }

    /// `∫_{B_r(c)} u` with cell averages weighted by the cell/disk overlap.
    pub fn ball_integrate(&self, c: [T; 2], r: T) -> Result<T> {
        let quarter: T = lit(0.25);
        self.grid.integrate_ball_cells(c, r, |ci, cj| {
            let [a, b, cc, d] = self.grid.cell_nodes(ci, cj);
            quarter * (self.values[a] + self.values[b] + self.values[cc] + self.values[d])
        })
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }
    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }
}

/// Mean of `f` at `n` equally spaced points on the circle `∂B_r(c)`.
pub fn sphere_mean<T, F>(grid: &GridSpec<T>, n: usize, c: [T; 2], r: T, f: F) -> Result<T>
where
    T: Scalar,
    F: Fn([T; 2]) -> Result<T>,
{
    if n < 8 {
        return Err(FbError::InvalidArgument(format!(
            "sphere quadrature needs at least 8 samples, got {n}"
        )));
    }
    grid.check_ball(c, r)?;
    let two_pi = lit::<T>(2.0) * pi::<T>();
    let mut acc = T::zero();
    for k in 0..n {
        let th = two_pi * from_usize(k) / from_usize(n);
        let p = clamp_into(grid, [c[0] + r * th.cos(), c[1] + r * th.sin()]);
        acc += f(p)?;
    }
    Ok(acc / from_usize(n))
}

/// Clamps a point that sits within rounding slack of the box back onto it.
pub(crate) fn clamp_into<T: Scalar>(grid: &GridSpec<T>, p: [T; 2]) -> [T; 2] {
    let lo = grid.lo();
    let hi = grid.hi();
    [p[0].max(lo[0]).min(hi[0]), p[1].max(lo[1]).min(hi[1])]
}

/// Default number of circle samples for radius `r`: about eight per grid spacing of arc.
pub fn default_sphere_samples<T: Scalar>(grid: &GridSpec<T>, r: T) -> usize {
    let per = lit::<T>(8.0) * lit::<T>(2.0) * pi::<T>() * r / grid.h_max();
    per.ceil().to_usize().unwrap_or(64).max(64)
}

/// Per-node positivity flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask<T> {
    grid: GridSpec<T>,
    flags: Vec<bool>,
}

impl<T: Scalar> Mask<T> {
    pub fn new(grid: GridSpec<T>, flags: Vec<bool>) -> Result<Self> {
        if flags.len() != grid.len() {
            return Err(FbError::InvalidArgument(format!(
                "expected {} flags, got {}",
                grid.len(),
                flags.len()
            )));
        }
        Ok(Mask { grid, flags })
    }

    pub fn from_fn<F: Fn([T; 2]) -> bool>(grid: GridSpec<T>, f: F) -> Self {
        let flags = (0..grid.len()).map(|p| f(grid.node_at(p))).collect();
        Mask { grid, flags }
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }
    pub fn flags(&self) -> &[bool] {
        &self.flags
    }
    pub fn get(&self, p: usize) -> bool {
        self.flags[p]
    }
    pub fn set(&mut self, p: usize, v: bool) {
        self.flags[p] = v;
    }
    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
    pub fn all(&self) -> bool {
        self.flags.iter().all(|&f| f)
    }
    pub fn none(&self) -> bool {
        !self.flags.iter().any(|&f| f)
    }

    /// A cell is positive when any of its four nodes is.
    #[inline]
    pub fn cell_positive(&self, ci: usize, cj: usize) -> bool {
        self.grid.cell_nodes(ci, cj).iter().any(|&p| self.flags[p])
    }

    /// Area of the symmetric difference of the positive-cell sets.
    pub fn symmetric_difference_area(&self, other: &Mask<T>) -> Result<T> {
        if !self.grid.same_as(&other.grid) {
            return Err(FbError::GridMismatch);
        }
        let mut n = 0usize;
        for cj in 0..self.grid.cells_y() {
            for ci in 0..self.grid.cells_x() {
                if self.cell_positive(ci, cj) != other.cell_positive(ci, cj) {
                    n += 1;
                }
            }
        }
        Ok(from_usize::<T>(n) * self.grid.cell_area())
    }
}

/// `m` nonnegative scalar components on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField<T> {
    grid: GridSpec<T>,
    comps: Vec<Vec<T>>,
}

impl<T: Scalar> VectorField<T> {
    pub fn new(grid: GridSpec<T>, comps: Vec<Vec<T>>) -> Result<Self> {
        if comps.is_empty() {
            return Err(FbError::InvalidArgument("at least one component".into()));
        }
        for (k, c) in comps.iter().enumerate() {
            if c.len() != grid.len() {
                return Err(FbError::InvalidArgument(format!(
                    "component {k}: expected {} values, got {}",
                    grid.len(),
                    c.len()
                )));
            }
            if let Some(p) = c.iter().position(|v| !v.is_finite()) {
                return Err(FbError::NonFinite(format!("component {k} node {p}")));
            }
        }
        Ok(VectorField { grid, comps })
    }

    pub fn zeros(grid: GridSpec<T>, m: usize) -> Self {
        let comps = vec![vec![T::zero(); grid.len()]; m.max(1)];
        VectorField { grid, comps }
    }

    /// Samples `f(x, out)` at every node; `out` has length `m`.
    pub fn from_fn<F: Fn([T; 2], &mut [T])>(grid: GridSpec<T>, m: usize, f: F) -> Self {
        let mut comps = vec![vec![T::zero(); grid.len()]; m.max(1)];
        let mut buf = vec![T::zero(); m.max(1)];
        for p in 0..grid.len() {
            f(grid.node_at(p), &mut buf);
            for k in 0..comps.len() {
                comps[k][p] = buf[k];
            }
        }
        VectorField { grid, comps }
    }

    pub fn from_components(fields: Vec<ScalarField<T>>) -> Result<Self> {
        let grid = fields
            .first()
            .ok_or_else(|| FbError::InvalidArgument("at least one component".into()))?
            .grid()
            .clone();
        if fields.iter().any(|f| !f.grid().same_as(&grid)) {
            return Err(FbError::GridMismatch);
        }
        Self::new(grid, fields.into_iter().map(|f| f.into_values()).collect())
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }
    pub fn m(&self) -> usize {
        self.comps.len()
    }
    pub fn comp(&self, k: usize) -> &[T] {
        &self.comps[k]
    }
    pub fn comp_mut(&mut self, k: usize) -> &mut [T] {
        &mut self.comps[k]
    }
    pub fn comps(&self) -> &[Vec<T>] {
        &self.comps
    }
    pub(crate) fn comps_mut(&mut self) -> &mut [Vec<T>] {
        &mut self.comps
    }

    pub fn component(&self, k: usize) -> ScalarField<T> {
        ScalarField {
            grid: self.grid.clone(),
            values: self.comps[k].clone(),
        }
    }

    #[inline]
    pub fn norm_sq_at(&self, p: usize) -> T {
        self.comps.iter().map(|c| c[p] * c[p]).sum()
    }

    #[inline]
    pub fn norm_at(&self, p: usize) -> T {
        self.norm_sq_at(p).sqrt()
    }

    /// Interpolated vector value at a point.
    pub fn sample(&self, p: [T; 2]) -> Result<Vec<T>> {
        self.comps
            .iter()
            .map(|c| interp(&self.grid, c, p))
            .collect()
    }

    /// Length of the interpolated vector at a point.
    pub fn sample_norm(&self, p: [T; 2]) -> Result<T> {
        Ok(self.sample(p)?.iter().map(|v| *v * *v).sum::<T>().sqrt())
    }

    /// `|u|` as a scalar field.
    pub fn norm_field(&self) -> ScalarField<T> {
        let values = (0..self.grid.len()).map(|p| self.norm_at(p)).collect();
        ScalarField {
            grid: self.grid.clone(),
            values,
        }
    }

    /// `u_1 + ... + u_m` as a scalar field.
    pub fn sum_field(&self) -> ScalarField<T> {
        let values = (0..self.grid.len())
            .map(|p| self.comps.iter().map(|c| c[p]).sum())
            .collect();
        ScalarField {
            grid: self.grid.clone(),
            values,
        }
    }

    /// Largest absolute value over boundary nodes and components.
    pub fn boundary_max(&self) -> T {
        let mut m = T::zero();
        for p in 0..self.grid.len() {
            if self.grid.is_boundary_index(p) {
                for c in &self.comps {
                    m = m.max(c[p].abs());
                }
            }
        }
        m
    }

    /// Scale-aware positivity threshold derived from the boundary data carried by the field.
    pub fn positivity_tol(&self) -> T {
        positivity_tol_for(self.boundary_max())
    }

    pub fn positivity_mask(&self) -> Mask<T> {
        self.positivity_mask_with(self.positivity_tol())
    }

    pub fn positivity_mask_with(&self, tol: T) -> Mask<T> {
        let flags = (0..self.grid.len())
            .map(|p| self.norm_at(p) > tol)
            .collect();
        Mask {
            grid: self.grid.clone(),
            flags,
        }
    }

    /// Errors unless every value is finite and nonnegative.
    pub fn check_admissible(&self) -> Result<()> {
        for (k, c) in self.comps.iter().enumerate() {
            for (p, &v) in c.iter().enumerate() {
                if !v.is_finite() {
                    return Err(FbError::NonFinite(format!("component {k} node {p}")));
                }
                if v < T::zero() {
                    let (i, j) = self.grid.ij(p);
                    return Err(FbError::NotAdmissible(format!(
                        "component {} is negative ({}) at node ({i}, {j})",
                        k + 1,
                        to_f64(v)
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.grid.same_as(&other.grid) && self.m() == other.m()
    }
}

/// `tol_pos = 1e-10 * max(1, scale)`.
pub fn positivity_tol_for<T: Scalar>(scale: T) -> T {
    lit::<T>(POSITIVITY_REL_TOL) * scale.max(T::one())
}

/// The coefficient `Q` sampled at nodes with its recorded bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField<T> {
    grid: GridSpec<T>,
    values: Vec<T>,
    q_min: T,
    q_max: T,
}

impl<T: Scalar> WeightField<T> {
    pub fn new(grid: GridSpec<T>, values: Vec<T>, q_min: T, q_max: T) -> Result<Self> {
        if !(q_min > T::zero()) {
            return Err(FbError::WeightBounds(format!(
                "q_min must be positive, got {}",
                to_f64(q_min)
            )));
        }
        if q_max < q_min {
            return Err(FbError::WeightBounds(format!(
                "q_max {} below q_min {}",
                to_f64(q_max),
                to_f64(q_min)
            )));
        }
        if values.len() != grid.len() {
            return Err(FbError::InvalidArgument(format!(
                "expected {} weights, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(p) = values
            .iter()
            .position(|&q| !q.is_finite() || q < q_min || q > q_max)
        {
            return Err(FbError::WeightBounds(format!(
                "node {p} has Q = {} outside [{}, {}]",
                to_f64(values[p]),
                to_f64(q_min),
                to_f64(q_max)
            )));
        }
        Ok(WeightField {
            grid,
            values,
            q_min,
            q_max,
        })
    }

    pub fn constant(grid: GridSpec<T>, q: T) -> Result<Self> {
        let values = vec![q; grid.len()];
        Self::new(grid, values, q, q)
    }

    /// Samples `f` and records its observed extrema as bounds.
    pub fn from_fn<F: Fn([T; 2]) -> T>(grid: GridSpec<T>, f: F) -> Result<Self> {
        let values: Vec<T> = (0..grid.len()).map(|p| f(grid.node_at(p))).collect();
        let q_min = values.iter().copied().fold(T::infinity(), T::min);
        let q_max = values.iter().copied().fold(T::neg_infinity(), T::max);
        Self::new(grid, values, q_min, q_max)
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }
    pub fn values(&self) -> &[T] {
        &self.values
    }
    pub fn q_min(&self) -> T {
        self.q_min
    }
    pub fn q_max(&self) -> T {
        self.q_max
    }

    pub fn at(&self, p: [T; 2]) -> Result<T> {
        interp(&self.grid, &self.values, p)
    }

    /// Cell average of the node samples.
    #[inline]
    pub fn cell_mean(&self, ci: usize, cj: usize) -> T {
        let [a, b, c, d] = self.grid.cell_nodes(ci, cj);
        lit::<T>(0.25) * (self.values[a] + self.values[b] + self.values[c] + self.values[d])
    }

    /// Oscillation of `Q` over the nodes of `B_r(c)`.
    pub fn oscillation(&self, c: [T; 2], r: T) -> T {
        let (i0, i1) = self.grid.node_range(0, c[0] - r, c[0] + r);
        let (j0, j1) = self.grid.node_range(1, c[1] - r, c[1] + r);
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for j in j0..=j1 {
            for i in i0..=i1 {
                let x = self.grid.node(i, j);
                let dx = x[0] - c[0];
                let dy = x[1] - c[1];
                if dx * dx + dy * dy <= r * r {
                    let q = self.values[self.grid.idx(i, j)];
                    lo = lo.min(q);
                    hi = hi.max(q);
                }
            }
        }
        if hi >= lo {
            hi - lo
        } else {
            T::zero()
        }
    }
}

/// Nonnegative Dirichlet data for each component; only boundary nodes carry values.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData<T> {
    grid: GridSpec<T>,
    values: Vec<Vec<T>>,
}

impl<T: Scalar> BoundaryData<T> {
    /// Samples `f(x, out)` at the boundary nodes.
    pub fn from_fn<F: Fn([T; 2], &mut [T])>(grid: GridSpec<T>, m: usize, f: F) -> Result<Self> {
        let m = m.max(1);
        let mut values = vec![vec![T::zero(); grid.len()]; m];
        let mut buf = vec![T::zero(); m];
        for p in 0..grid.len() {
            if grid.is_boundary_index(p) {
                f(grid.node_at(p), &mut buf);
                for k in 0..m {
                    values[k][p] = buf[k];
                }
            }
        }
        Self::new(grid, values)
    }

    /// Takes the boundary values from full-size arrays; interior entries are ignored.
    pub fn new(grid: GridSpec<T>, mut values: Vec<Vec<T>>) -> Result<Self> {
        if values.is_empty() {
            return Err(FbError::InvalidArgument("at least one component".into()));
        }
        for (k, c) in values.iter_mut().enumerate() {
            if c.len() != grid.len() {
                return Err(FbError::InvalidArgument(format!(
                    "boundary component {k}: expected {} values, got {}",
                    grid.len(),
                    c.len()
                )));
            }
            for p in 0..grid.len() {
                if !grid.is_boundary_index(p) {
                    c[p] = T::zero();
                    continue;
                }
                let v = c[p];
                if !v.is_finite() {
                    return Err(FbError::NonFinite(format!(
                        "boundary component {k} node {p}"
                    )));
                }
                if v < T::zero() {
                    return Err(FbError::NotAdmissible(format!(
                        "boundary datum of component {} is negative at node {p}",
                        k + 1
                    )));
                }
            }
        }
        Ok(BoundaryData { grid, values })
    }

    /// Boundary trace of a field.
    pub fn from_field(u: &VectorField<T>) -> Result<Self> {
        Self::new(u.grid().clone(), u.comps().to_vec())
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }
    pub fn m(&self) -> usize {
        self.values.len()
    }
    pub fn comp(&self, k: usize) -> &[T] {
        &self.values[k]
    }
    pub fn max_value(&self) -> T {
        self.values
            .iter()
            .flat_map(|c| c.iter().copied())
            .fold(T::zero(), T::max)
    }
    pub fn is_zero(&self) -> bool {
        self.max_value() <= T::zero()
    }
    pub fn positivity_tol(&self) -> T {
        positivity_tol_for(self.max_value())
    }

    /// Overwrites the boundary nodes of `u` with the data.
    pub fn apply(&self, u: &mut VectorField<T>) {
        for (k, c) in u.comps_mut().iter_mut().enumerate() {
            for p in 0..c.len() {
                if self.grid.is_boundary_index(p) {
                    c[p] = self.values[k][p];
                }
            }
        }
    }

    /// Whether `u` equals the data on every boundary node.
    pub fn matches(&self, u: &VectorField<T>) -> bool {
        u.m() == self.m()
            && u.grid().same_as(&self.grid)
            && (0..self.m()).all(|k| {
                (0..self.grid.len())
                    .filter(|&p| self.grid.is_boundary_index(p))
                    .all(|p| u.comp(k)[p] == self.values[k][p])
            })
    }
}

/// Convenience constructor for `make_grid`.
pub fn make_grid<T: Scalar>(lo: [T; 2], hi: [T; 2], nodes: [usize; 2]) -> Result<GridSpec<T>> {
    GridSpec::new(lo, hi, nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn g(n: usize) -> GridSpec<f64> {
        GridSpec::square(-1.0, 1.0, n).unwrap()
    }

    #[test]
    fn make_grid_examples() {
        let a = g(3);
        assert_eq!(a.h(), [1.0, 1.0]);
        assert_eq!(a.node(1, 1), [0.0, 0.0]);
        assert_eq!(a.node(2, 2), [1.0, 1.0]);
        assert_eq!(a.node(0, 0), [-1.0, -1.0]);
        assert_eq!(g(257).h(), [1.0 / 128.0, 1.0 / 128.0]);
        let b = GridSpec::new([0.0, 0.0], [1.0, 2.0], [3, 5]).unwrap();
        assert_eq!(b.h(), [0.5, 0.5]);
        assert_eq!(b.node(2, 4), [1.0, 2.0]);
    }

    #[test]
    fn corners_reproduced_exactly() {
        let grid = GridSpec::new([-0.3, 0.1], [0.7, 1.3], [11, 7]).unwrap();
        assert_eq!(grid.node(10, 6), [0.7, 1.3]);
        assert_eq!(grid.node(0, 0), [-0.3, 0.1]);
    }

    #[test]
    fn make_grid_errors() {
        assert!(matches!(
            GridSpec::square(1.0, 1.0, 5),
            Err(FbError::DegenerateBox(_))
        ));
        assert!(matches!(
            GridSpec::<f64>::new([0.0, 0.0], [1.0, 1.0], [2, 5]),
            Err(FbError::TooFewNodes(2, 5))
        ));
    }

    #[test]
    fn interpolation_examples() {
        let grid = g(9);
        let c = ScalarField::constant(grid.clone(), 5.0);
        assert_abs_diff_eq!(c.interpolate([0.123, -0.77]).unwrap(), 5.0, epsilon = 1e-14);
        let x1 = ScalarField::from_fn(grid.clone(), |p| p[0]);
        assert_abs_diff_eq!(x1.interpolate([0.3, 0.7]).unwrap(), 0.3, epsilon = 1e-12);
        let xy = ScalarField::from_fn(g(257), |p| p[0] * p[1]);
        assert_abs_diff_eq!(xy.interpolate([0.5, 0.5]).unwrap(), 0.25, epsilon = 1e-12);
        assert!(matches!(
            x1.interpolate([1.5, 0.0]),
            Err(FbError::OutsideDomain(..))
        ));
    }

    #[test]
    fn cell_gradient_examples() {
        let grid = g(9);
        let x1 = ScalarField::from_fn(grid.clone(), |p| p[0]);
        let c = ScalarField::constant(grid.clone(), 2.5);
        for cj in 0..8 {
            for ci in 0..8 {
                let gx = x1.cell_gradient(ci, cj).unwrap();
                assert_abs_diff_eq!(gx[0], 1.0, epsilon = 1e-12);
                assert_abs_diff_eq!(gx[1], 0.0, epsilon = 1e-12);
                assert_eq!(c.cell_gradient(ci, cj).unwrap(), [0.0, 0.0]);
            }
        }
        assert!(x1.cell_gradient(8, 0).is_err());
    }

    #[test]
    fn cell_gradient_of_ramp_across_kink() {
        // nodes at x1 in {-0.5, 0, 0.5}: the two cells either side of the kink
        // carry slopes 0 and 1, so the stencil averaged across x1 = 0 gives 0.5.
        let grid = GridSpec::new([-0.5, 0.0], [0.5, 1.0], [3, 3]).unwrap();
        let ramp = ScalarField::from_fn(grid, |p: [f64; 2]| p[0].max(0.0));
        let left = ramp.cell_gradient(0, 0).unwrap();
        let right = ramp.cell_gradient(1, 0).unwrap();
        assert_eq!(left, [0.0, 0.0]);
        assert_eq!(right, [1.0, 0.0]);
        assert_abs_diff_eq!(0.5 * (left[0] + right[0]), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn sphere_average_examples() {
        let grid = g(257);
        let c = ScalarField::constant(grid.clone(), 3.0);
        assert_abs_diff_eq!(
            c.sphere_average([0.1, -0.2], 0.5, 64).unwrap(),
            3.0,
            epsilon = 1e-14
        );
        let x1 = ScalarField::from_fn(grid.clone(), |p| p[0]);
        assert_abs_diff_eq!(
            x1.sphere_average([0.0, 0.0], 0.5, 64).unwrap(),
            0.0,
            epsilon = 1e-14
        );
        let ramp = ScalarField::from_fn(grid.clone(), |p| p[0].max(0.0));
        let r = 0.4;
        let avg = ramp.sphere_average([0.0, 0.0], r, 1024).unwrap();
        assert_abs_diff_eq!(avg, r / PI, epsilon = 1e-4);
        assert!(matches!(
            ramp.sphere_average([0.8, 0.0], 0.4, 64),
            Err(FbError::BallExitsDomain { .. })
        ));
        assert!(ramp.sphere_average([0.0, 0.0], 0.4, 4).is_err());
    }

    #[test]
    fn ball_integrate_examples() {
        let grid = g(129);
        let h = grid.h()[0];
        let one = ScalarField::constant(grid.clone(), 1.0);
        for &r in &[0.1, 0.25, 0.5, 0.9] {
            let v = one.ball_integrate([0.05, -0.03], r).unwrap();
            let exact = PI * r * r;
            assert!((v - exact).abs() / exact <= 2.0 * h / r, "r={r}");
        }
        let zero = ScalarField::constant(grid.clone(), 0.0);
        assert_eq!(zero.ball_integrate([0.0, 0.0], 0.5).unwrap(), 0.0);
        let half = ScalarField::from_fn(grid.clone(), |p| if p[0] > 0.0 { 1.0 } else { 0.0 });
        let v = half.ball_integrate([0.0, 0.0], 0.5).unwrap();
        let exact = PI * 0.25 / 2.0;
        // node indicator: the straddling column contributes half a cell layer
        assert!(
            (v - exact).abs() <= 2.0 * h * 0.5 + 2.0 * h / 0.5 * exact,
            "{v} vs {exact}"
        );
        assert!(one.ball_integrate([0.0, 0.0], 1.2).is_err());
    }

    #[test]
    fn disk_overlap_is_tight_for_interior_and_exterior_cells() {
        let grid = g(11);
        assert_eq!(grid.cell_disk_overlap(5, 5, [0.1, 0.1], 0.9), 1.0);
        assert_eq!(grid.cell_disk_overlap(0, 0, [0.5, 0.5], 0.2), 0.0);
        let f = grid.cell_disk_overlap(5, 5, [0.0, 0.0], 0.15);
        assert!(f > 0.0 && f < 1.0);
    }

    #[test]
    fn disk_overlaps_sum_to_disk_area() {
        let grid = g(37);
        for (c, r) in [
            ([0.0, 0.0], 0.5),
            ([0.123, -0.271], 0.61),
            ([0.3, 0.3], 0.05),
        ] {
            let total: f64 = grid
                .ball_cells(c, r)
                .iter()
                .map(|&(_, _, f)| f * grid.cell_area())
                .sum();
            assert_abs_diff_eq!(total, PI * r * r, epsilon = 1e-12);
        }
        // a quarter disk cut by the cell corners
        let one = GridSpec::square(0.0, 2.0, 3).unwrap();
        assert_abs_diff_eq!(
            one.cell_disk_overlap(0, 0, [0.0, 0.0], 0.5),
            PI / 16.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn positivity_and_bounds() {
        let grid = g(5);
        let u = VectorField::from_fn(grid.clone(), 2, |p, out| {
            out[0] = p[0].max(0.0);
            out[1] = 0.0;
        });
        let mask = u.positivity_mask();
        assert_eq!(mask.count(), 2 * 5);
        assert!(mask.cell_positive(2, 0));
        assert!(!mask.cell_positive(1, 0));
        assert!(WeightField::constant(grid.clone(), 0.0).is_err());
        assert!(WeightField::new(grid.clone(), vec![1.0; 25], 1.0, 0.5).is_err());
        let mut bad = u.clone();
        bad.comp_mut(1)[7] = -1e-3;
        assert!(matches!(
            bad.check_admissible(),
            Err(FbError::NotAdmissible(_))
        ));
    }

    #[test]
    fn boundary_data_is_boundary_only() {
        let grid = g(5);
        let bd = BoundaryData::from_fn(grid.clone(), 1, |p, o| o[0] = 1.0 + p[0]).unwrap();
        assert_eq!(bd.comp(0)[grid.idx(2, 2)], 0.0);
        assert_eq!(bd.comp(0)[grid.idx(4, 2)], 2.0);
        let neg = BoundaryData::from_fn(grid.clone(), 1, |p, o| o[0] = p[0]);
        assert!(neg.is_err());
        let mut u = VectorField::zeros(grid, 1);
        bd.apply(&mut u);
        assert!(bd.matches(&u));
    }

    #[test]
    fn works_in_single_precision() {
        let grid = GridSpec::<f32>::square(-1.0, 1.0, 33).unwrap();
        let f = ScalarField::from_fn(grid, |p| 2.0 * p[0] - p[1]);
        assert!((f.interpolate([0.25, 0.5]).unwrap() - 0.0).abs() < 1e-6);
        let one = ScalarField::constant(f.grid().clone(), 1.0f32);
        let v = one.ball_integrate([0.0, 0.0], 0.5).unwrap();
        assert!((v - std::f32::consts::PI * 0.25).abs() < 0.02);
    }

    #[test]
    fn cubic_reproduces_quadratics_inside() {
        let g = GridSpec::<f64>::square(-1.0, 1.0, 33).unwrap();
        let f = |p: [f64; 2]| 0.3 + p[0] - 2.0 * p[1] + p[0] * p[1] - 0.7 * p[1] * p[1];
        let vals: Vec<f64> = (0..g.len()).map(|k| f(g.node_at(k))).collect();
        for p in [[0.013, -0.402], [0.5, 0.5], [-0.77, 0.31]] {
            assert!((interp_cubic(&g, &vals, p).unwrap() - f(p)).abs() < 1e-12);
        }
        let node = g.node(7, 9);
        assert_eq!(interp_cubic(&g, &vals, node).unwrap(), vals[g.idx(7, 9)]);
        assert!(interp_cubic(&g, &vals, [1.5, 0.0]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn bilinear_reproduces_per_axis_affine(
                a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0, d in -3.0f64..3.0,
                x in -1.0f64..1.0, y in -1.0f64..1.0,
            ) {
                let f = |p: [f64; 2]| a + b * p[0] + c * p[1] + d * p[0] * p[1];
                let field = ScalarField::from_fn(g(17), f);
                let v = field.interpolate([x, y]).unwrap();
                prop_assert!((v - f([x, y])).abs() <= 1e-12);
            }

            #[test]
            fn cell_gradient_is_linear(
                seed in 0u64..1000, ci in 0usize..8, cj in 0usize..8, s in -2.0f64..2.0,
            ) {
                let grid = g(9);
                let f1 = ScalarField::from_fn(grid.clone(), |p| (p[0] * 3.0 + seed as f64).sin() * p[1]);
                let f2 = ScalarField::from_fn(grid.clone(), |p| (p[1] * 2.0 - seed as f64).cos() + p[0]);
                let sum = ScalarField::new(
                    grid.clone(),
                    f1.values().iter().zip(f2.values()).map(|(a, b)| a + s * b).collect(),
                ).unwrap();
                let g1 = f1.cell_gradient(ci, cj).unwrap();
                let g2 = f2.cell_gradient(ci, cj).unwrap();
                let gs = sum.cell_gradient(ci, cj).unwrap();
                for a in 0..2 {
                    prop_assert!((gs[a] - (g1[a] + s * g2[a])).abs() <= 1e-12 * (1.0 + gs[a].abs()));
                }
            }
        }
    }
}
