//! First-order homogeneous minimizers in the plane.
//!
//! The half-plane profiles `u = Q₀ (x·ν)⁺ e` are exact minimizers for constant
//! `Q ≡ Q₀`. Any other homogeneous candidate with a connected positivity cone
//! would be an arc of angle `θ` on the unit circle on which each component is
//! a Dirichlet eigenfunction with eigenvalue `n − 1 = 1`; the arc eigenvalue
//! `(π/θ)²` equals one only at `θ = π`.

use serde::Serialize;

use crate::error::{FbError, Result};
use crate::grid::{GridSpec, VectorField};
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct HalfPlaneSpec<T> {
    pub q0: T,
    /// Unit direction pointing into the positivity set.
    pub nu: [T; 2],
    /// Nonnegative unit weights, one per component.
    pub e: Vec<T>,
}

impl<T: Scalar> HalfPlaneSpec<T> {
    pub fn new(q0: T, nu: [T; 2], e: Vec<T>) -> Result<Self> {
        let tol: T = lit(1e-12);
        if !(q0 > T::zero()) || !q0.is_finite() {
            return Err(FbError::InvalidArgument(
                "Q₀ must be positive and finite".into(),
            ));
        }
        let nn = (nu[0] * nu[0] + nu[1] * nu[1]).sqrt();
        if !((nn - T::one()).abs() <= tol) {
            return Err(FbError::InvalidArgument("ν must be a unit vector".into()));
        }
        if e.is_empty() {
            return Err(FbError::InvalidArgument(
                "e needs at least one component".into(),
            ));
        }
        if e.iter().any(|&v| v < -tol || !v.is_finite()) {
            return Err(FbError::InvalidArgument("e must be nonnegative".into()));
        }
        let ne = e.iter().map(|&v| v * v).sum::<T>().sqrt();
        if !((ne - T::one()).abs() <= tol) {
            return Err(FbError::InvalidArgument("e must be a unit vector".into()));
        }
        Ok(HalfPlaneSpec { q0, nu, e })
    }

    /// Scalar profile `e = (1)`.
    pub fn scalar(q0: T, nu: [T; 2]) -> Result<Self> {
        Self::new(q0, nu, vec![T::one()])
    }

    pub fn m(&self) -> usize {
        self.e.len()
    }

    pub fn eval(&self, x: [T; 2], out: &mut [T]) {
        let s = (x[0] * self.nu[0] + x[1] * self.nu[1]).max(T::zero()) * self.q0;
        for (o, &e) in out.iter_mut().zip(&self.e) {
            *o = (e * s).max(T::zero());
        }
    }
}

/// `u_i(x) = e_i Q₀ (x·ν)⁺` sampled at the grid nodes.
pub fn halfplane_field<T: Scalar>(spec: &HalfPlaneSpec<T>, grid: &GridSpec<T>) -> VectorField<T> {
    VectorField::from_fn(grid.clone(), spec.m(), |x, out| spec.eval(x, out))
}

const POWER_ITERS: usize = 200;
const RAYLEIGH_TOL: f64 = 1e-12;

/// Thomas algorithm for the tridiagonal Toeplitz matrix with diagonal `d`
/// and off-diagonals `o`.
fn thomas(d: f64, o: f64, b: &[f64], out: &mut [f64], scratch: &mut [f64]) {
    let n = b.len();
    let mut denom = d;
    scratch[0] = o / denom;
    out[0] = b[0] / denom;
    for k in 1..n {
        denom = d - o * scratch[k - 1];
        scratch[k] = o / denom;
        out[k] = (b[k] - o * out[k - 1]) / denom;
    }
    for k in (0..n - 1).rev() {
        out[k] -= scratch[k] * out[k + 1];
    }
}

/// Result of [`arc_eigenpair`].
#[derive(Debug, Clone, PartialEq)]
pub struct ArcEigen {
    pub lambda: f64,
    /// Eigenvector at the interior nodes `φ_k = k θ/(n + 1)`, unit max norm, positive.
    pub vector: Vec<f64>,
    pub iterations: usize,
}

fn check_arc(theta: f64, n: usize) -> Result<()> {
    if !(theta > 0.0 && theta < 2.0 * std::f64::consts::PI) {
        return Err(FbError::InvalidArgument(format!(
            "arc angle {theta} outside (0, 2π)"
        )));
    }
    if n < 16 {
        return Err(FbError::InvalidArgument(format!(
            "need at least 16 nodes, got {n}"
        )));
    }
    Ok(())
}

/// Smallest Dirichlet eigenpair of `−d²/dφ²` on `(0, θ)` with `n` interior nodes,
/// by inverse power iteration on the three-point stencil.
pub fn arc_eigenpair(theta: f64, n: usize) -> Result<ArcEigen> {
    check_arc(theta, n)?;
    let h = theta / (n as f64 + 1.0);
    let d = 2.0 / (h * h);
    let o = -1.0 / (h * h);
    let apply = |x: &[f64], k: usize| {
        let left = if k > 0 { x[k - 1] } else { 0.0 };
        let right = if k + 1 < n { x[k + 1] } else { 0.0 };
        d * x[k] + o * (left + right)
    };
    let mut x: Vec<f64> = vec![1.0; n];
    let mut y = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut lambda = f64::NAN;
    let mut iterations = POWER_ITERS;
    for it in 0..POWER_ITERS {
        thomas(d, o, &x, &mut y, &mut scratch);
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (a, b) in x.iter_mut().zip(&y) {
            *a = b / norm;
        }
        let num: f64 = (0..n).map(|k| x[k] * apply(&x, k)).sum();
        let next = num / x.iter().map(|v| v * v).sum::<f64>();
        let done = (next - lambda).abs() <= RAYLEIGH_TOL * next.abs();
        lambda = next;
        if done {
            iterations = it + 1;
            break;
        }
    }
    let top = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bottom = x.iter().copied().fold(f64::INFINITY, f64::min);
    let sign = if top.abs() >= bottom.abs() { 1.0 } else { -1.0 };
    let scale = sign * if sign > 0.0 { top } else { bottom };
    let vector = x.iter().map(|v| v * sign / scale.abs()).collect();
    Ok(ArcEigen {
        lambda,
        vector,
        iterations,
    })
}

/// First Dirichlet eigenvalue of the arc of angle `θ`; the closed form is `(π/θ)²`.
pub fn arc_first_eigenvalue(theta: f64, n: usize) -> Result<f64> {
    Ok(arc_eigenpair(theta, n)?.lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomogeneousClassification {
    /// Root of `λ₁(θ) = 1`.
    pub theta_star: f64,
    pub theta_error: f64,
    pub nodes: usize,
    pub sweep_thetas: Vec<f64>,
    pub sweep_lambdas: Vec<f64>,
    pub strictly_decreasing: bool,
    /// Ground state at `θ*` positive at every interior node.
    pub ground_state_positive: bool,
    /// Max deviation of the ground state from `sin(φ)`.
    pub ground_state_error: f64,
    /// `λ₁` of the arc just short of the full circle; far below one.
    pub punctured_lambda: f64,
    pub half_plane_only: bool,
}

/// Locates the only arc on which a homogeneous cone can carry degree-one
/// eigenfunctions, and certifies monotonicity and the positive ground state.
pub fn classify_homogeneous_2d(nodes: usize) -> Result<HomogeneousClassification> {
    let pi = std::f64::consts::PI;
    let f = |t: f64| arc_first_eigenvalue(t, nodes).map(|l| l - 1.0);
    let (mut lo, mut hi) = (pi / 2.0, 3.0 * pi / 2.0);
    let (flo, fhi) = (f(lo)?, f(hi)?);
    if !(flo > 0.0 && fhi < 0.0) {
        return Err(FbError::InvalidArgument(
            "eigenvalue does not bracket one".into(),
        ));
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    let theta_star = 0.5 * (lo + hi);
    let sweep_thetas: Vec<f64> = (1..=32).map(|k| 2.0 * pi * k as f64 / 33.0).collect();
    let sweep_lambdas = sweep_thetas
        .iter()
        .map(|&t| arc_first_eigenvalue(t, nodes))
        .collect::<Result<Vec<_>>>()?;
    let strictly_decreasing = sweep_lambdas.windows(2).all(|w| w[1] < w[0]);
    let ground = arc_eigenpair(theta_star, nodes)?;
    let h = theta_star / (nodes as f64 + 1.0);
    let ground_state_positive = ground.vector.iter().all(|&v| v > 0.0);
    let ground_state_error = ground
        .vector
        .iter()
        .enumerate()
        .map(|(k, v)| (v - ((k + 1) as f64 * h * pi / theta_star).sin()).abs())
        .fold(0.0, f64::max);
    let punctured_lambda = arc_first_eigenvalue(2.0 * pi * (1.0 - 1e-9), nodes)?;
    let theta_error = (theta_star - pi).abs();
    Ok(HomogeneousClassification {
        theta_star,
        theta_error,
        nodes,
        sweep_thetas,
        sweep_lambdas,
        strictly_decreasing,
        ground_state_positive,
        ground_state_error,
        punctured_lambda,
        half_plane_only: strictly_decreasing && ground_state_positive && punctured_lambda < 1.0,
    })
}
