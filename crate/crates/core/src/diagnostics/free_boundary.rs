use crate::error::{FbError, Result};
use crate::grid::{GridSpec, Mask};
use crate::scalar::{lit, to_f64, Scalar};

/// Interface points at the midpoints of sign-changing grid edges.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeBoundary<T> {
    pub points: Vec<[T; 2]>,
    /// Unit outer normals of the positivity set.
    pub normals: Vec<[T; 2]>,
    /// Length of interface carried by each point.
    pub weights: Vec<T>,
    /// Share of the measure `∇χ{|u|>0}` carried by each point: the spacing
    /// across the edge times the unit vector from its zero node to its
    /// positive node.
    pub jumps: Vec<[T; 2]>,
    /// `(positive node, zero node)` of the edge behind each point.
    pub edges: Vec<(usize, usize)>,
    pub h: T,
}

impl<T: Scalar> FreeBoundary<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index and distance of the interface point closest to `x`.
    pub fn nearest(&self, x: [T; 2]) -> Option<(usize, T)> {
        self.points
            .iter()
            .enumerate()
            .map(|(k, p)| (k, dist(*p, x)))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)))
    }

    /// Errors unless some interface point lies within one grid spacing of `x`.
    pub fn require_near(&self, x: [T; 2]) -> Result<usize> {
        match self.nearest(x) {
            Some((k, d)) if d <= self.h * lit(1.0 + 1e-9) => Ok(k),
            _ => Err(FbError::NotOnFreeBoundary(to_f64(x[0]), to_f64(x[1]))),
        }
    }

    /// Up to `count` interface points whose `radius`-balls fit inside the
    /// domain, spread out by farthest-point sampling from the first eligible
    /// point in storage order.
    pub fn spread_points(&self, grid: &GridSpec<T>, radius: T, count: usize) -> Vec<usize> {
        let eligible: Vec<usize> = (0..self.len())
            .filter(|&k| grid.check_ball(self.points[k], radius).is_ok())
            .collect();
        let mut chosen: Vec<usize> = Vec::new();
        if eligible.is_empty() || count == 0 {
            return chosen;
        }
        // start from the eligible point nearest to their centroid
        let n = T::from_usize(eligible.len()).unwrap();
        let mut c = [T::zero(); 2];
        for &k in &eligible {
            c[0] += self.points[k][0] / n;
            c[1] += self.points[k][1] / n;
        }
        let first = *eligible
            .iter()
            .min_by(|&&a, &&b| {
                dist(self.points[a], c)
                    .partial_cmp(&dist(self.points[b], c))
                    .unwrap()
                    .then(a.cmp(&b))
            })
            .unwrap();
        chosen.push(first);
        while chosen.len() < count.min(eligible.len()) {
            let next = eligible
                .iter()
                .copied()
                .filter(|k| !chosen.contains(k))
                .max_by(|&a, &b| {
                    let da = chosen
                        .iter()
                        .map(|&s| dist(self.points[a], self.points[s]))
                        .fold(T::infinity(), T::min);
                    let db = chosen
                        .iter()
                        .map(|&s| dist(self.points[b], self.points[s]))
                        .fold(T::infinity(), T::min);
                    da.partial_cmp(&db).unwrap().then(b.cmp(&a))
                })
                .unwrap();
            chosen.push(next);
        }
        chosen
    }
}

pub(crate) fn dist<T: Scalar>(a: [T; 2], b: [T; 2]) -> T {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Default radius for the line fits behind the normals.
pub fn default_fit_radius<T: Scalar>(grid: &GridSpec<T>) -> T {
    grid.h_max() * lit(8.0)
}

/// Extracts the interface of `mask` and estimates a normal at every point.
pub fn extract_free_boundary<T: Scalar>(mask: &Mask<T>) -> Result<FreeBoundary<T>> {
    let grid = mask.grid();
    if mask.all() || mask.none() {
        return Err(FbError::EmptyFreeBoundary(
            if mask.all() {
                "mask is positive everywhere"
            } else {
                "mask is zero everywhere"
            }
            .into(),
        ));
    }
    let (nx, ny) = (grid.nx(), grid.ny());
    let half: T = lit(0.5);
    let mut points = Vec::new();
    let mut edges = Vec::new();
    let mut add = |p: usize, q: usize| {
        if mask.get(p) != mask.get(q) {
            let (pos, zero) = if mask.get(p) { (p, q) } else { (q, p) };
            let a = grid.node_at(p);
            let b = grid.node_at(q);
            points.push([half * (a[0] + b[0]), half * (a[1] + b[1])]);
            edges.push((pos, zero));
        }
    };
    for j in 0..ny {
        for i in 0..nx {
            let p = grid.idx(i, j);
            if i + 1 < nx {
                add(p, p + 1);
            }
            if j + 1 < ny {
                add(p, p + nx);
            }
        }
    }

    let mut fb = FreeBoundary {
        points,
        normals: Vec::new(),
        weights: Vec::new(),
        jumps: Vec::new(),
        edges,
        h: grid.h_max(),
    };
    let radius = default_fit_radius(grid);
    let mut normals: Vec<[T; 2]> = Vec::with_capacity(fb.len());
    for k in 0..fb.len() {
        let n = match estimate_normal(&fb, grid, fb.points[k], radius) {
            Ok(n) => n,
            Err(_) => edge_direction(grid, fb.edges[k]),
        };
        normals.push(n);
    }
    fb.weights = (0..fb.len())
        .map(|k| edge_weight(grid, fb.edges[k], normals[k]))
        .collect();
    fb.jumps = fb.edges.iter().map(|&e| edge_jump(grid, e)).collect();
    fb.normals = normals;
    Ok(fb)
}

/// Interface length carried by one crossed edge: the spacing across the edge
/// times the normal component along it. For a straight interface the
/// weights of its crossed edges sum to its length.
fn edge_weight<T: Scalar>(grid: &GridSpec<T>, (pos, zero): (usize, usize), nu: [T; 2]) -> T {
    let [hx, hy] = grid.h();
    if pos.abs_diff(zero) == 1 {
        hy * nu[0].abs()
    } else {
        hx * nu[1].abs()
    }
}

fn edge_jump<T: Scalar>(grid: &GridSpec<T>, (pos, zero): (usize, usize)) -> [T; 2] {
    let [hx, hy] = grid.h();
    let d = edge_direction(grid, (pos, zero));
    let across = if pos.abs_diff(zero) == 1 { hy } else { hx };
    [-d[0] * across, -d[1] * across]
}

fn edge_direction<T: Scalar>(grid: &GridSpec<T>, (pos, zero): (usize, usize)) -> [T; 2] {
    let a = grid.node_at(pos);
    let b = grid.node_at(zero);
    let d = [b[0] - a[0], b[1] - a[1]];
    let n = (d[0] * d[0] + d[1] * d[1]).sqrt();
    [d[0] / n, d[1] / n]
}

/// Unit normal at `x` from a weighted principal-axis line fit of the interface
/// points within `radius`, oriented from the positivity set into the zero set.
pub fn estimate_normal<T: Scalar>(
    fb: &FreeBoundary<T>,
    grid: &GridSpec<T>,
    x: [T; 2],
    radius: T,
) -> Result<[T; 2]> {
    let near: Vec<usize> = (0..fb.len())
        .filter(|&k| dist(fb.points[k], x) <= radius)
        .collect();
    if near.len() < 4 {
        return Err(FbError::TooFewNeighbors {
            x: to_f64(x[0]),
            y: to_f64(x[1]),
            found: near.len(),
        });
    }
    // smooth radial weights damp the lattice pattern of the midpoints
    let omega: Vec<T> = near
        .iter()
        .map(|&k| {
            let s = T::one() - (dist(fb.points[k], x) / radius).powi(2);
            s * s + lit(1e-3)
        })
        .collect();
    let total: T = omega.iter().copied().sum();
    let mut c = [T::zero(); 2];
    let mut orient = [T::zero(); 2];
    for (&k, &w) in near.iter().zip(&omega) {
        c[0] += w * fb.points[k][0] / total;
        c[1] += w * fb.points[k][1] / total;
        let e = edge_direction(grid, fb.edges[k]);
        orient[0] += e[0];
        orient[1] += e[1];
    }
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&k, &w) in near.iter().zip(&omega) {
        let dx = fb.points[k][0] - c[0];
        let dy = fb.points[k][1] - c[1];
        sxx += w * dx * dx;
        sxy += w * dx * dy;
        syy += w * dy * dy;
    }
    let half: T = lit(0.5);
    let mean = half * (sxx + syy);
    let spread = ((half * (sxx - syy)).powi(2) + sxy * sxy).sqrt();
    let scale = sxx + syy;
    let mut normal = if spread <= T::epsilon() * lit(16.0) * scale {
        // isotropic cloud: no preferred line
        orient
    } else {
        let lam = mean - spread;
        let v1 = [sxy, lam - sxx];
        let v2 = [lam - syy, sxy];
        let n1 = v1[0] * v1[0] + v1[1] * v1[1];
        let n2 = v2[0] * v2[0] + v2[1] * v2[1];
        if n1 >= n2 {
            v1
        } else {
            v2
        }
    };
    let len = (normal[0] * normal[0] + normal[1] * normal[1]).sqrt();
    if !(len > T::zero()) {
        return Err(FbError::UndefinedDirection(
            "degenerate interface fit".into(),
        ));
    }
    normal = [normal[0] / len, normal[1] / len];
    if normal[0] * orient[0] + normal[1] * orient[1] < T::zero() {
        normal = [-normal[0], -normal[1]];
    }
    Ok(normal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> GridSpec<f64> {
        GridSpec::square(-1.0, 1.0, n).unwrap()
    }

    #[test]
    fn half_plane_interface() {
        let g = grid(41);
        let mask = Mask::from_fn(g.clone(), |p| p[0] > 1e-12);
        let fb = extract_free_boundary(&mask).unwrap();
        assert_eq!(fb.len(), 41);
        for (p, n) in fb.points.iter().zip(&fb.normals) {
            assert!(p[0].abs() <= g.h_max());
            assert!((n[0] + 1.0).abs() < 1e-6 && n[1].abs() < 1e-6);
        }
        // interior points carry one spacing of interface each
        let k = fb.nearest([0.025, 0.0]).unwrap().0;
        assert!((fb.weights[k] - g.h_max()).abs() < 1e-12);
    }

    #[test]
    fn horizontal_interface_with_positivity_below() {
        let g = grid(41);
        let mask = Mask::from_fn(g.clone(), |p| p[1] < 0.3);
        let fb = extract_free_boundary(&mask).unwrap();
        let n = estimate_normal(&fb, &g, [0.0, 0.3], 0.2).unwrap();
        assert!(n[0].abs() < 1e-6 && (n[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_masks_have_no_interface() {
        let g = grid(9);
        assert!(extract_free_boundary(&Mask::from_fn(g.clone(), |_| true)).is_err());
        assert!(extract_free_boundary(&Mask::from_fn(g, |_| false)).is_err());
    }

    #[test]
    fn disk_perimeter_and_radial_normals() {
        let g = grid(201);
        let r = 0.5;
        let mask = Mask::from_fn(g.clone(), |p| p[0] * p[0] + p[1] * p[1] < r * r);
        let fb = extract_free_boundary(&mask).unwrap();
        // one point per crossed edge: the count is the ℓ¹ length of the circle
        let expected = 8.0 * r / g.h_max();
        let count = fb.len() as f64;
        assert!(
            (count - expected).abs() <= 0.05 * expected,
            "{count} vs {expected}"
        );
        let total: f64 = fb.weights.iter().sum();
        assert!(
            (total - 2.0 * PI * r).abs() < 0.01 * 2.0 * PI * r,
            "{total}"
        );
        for theta in [0.3, 1.4, 2.5, 4.0, 5.5] {
            let x = [r * f64::cos(theta), r * f64::sin(theta)];
            let n = estimate_normal(&fb, &g, x, 0.1).unwrap();
            let err = ((n[0] - theta.cos()).powi(2) + (n[1] - theta.sin()).powi(2)).sqrt();
            assert!(err < 0.1, "theta {theta}: {n:?}");
        }
    }

    #[test]
    fn too_few_neighbours() {
        let g = grid(21);
        let mask = Mask::from_fn(g.clone(), |p| p[0] > 0.0);
        let fb = extract_free_boundary(&mask).unwrap();
        assert!(matches!(
            estimate_normal(&fb, &g, [0.05, 0.0], 0.01),
            Err(FbError::TooFewNeighbors { .. })
        ));
    }
}
