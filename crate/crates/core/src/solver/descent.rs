use crate::error::Result;
use crate::functional::{evaluate_j_smoothed, smoothed_gradient};
use crate::grid::{VectorField, WeightField};
use crate::scalar::Scalar;

use super::StepRule;

/// One projected gradient step on the relaxed functional with Armijo backtracking.
///
/// Boundary nodes keep their values. The sufficient-decrease test uses the
/// projected displacement, `J_ε(u') ≤ J_ε(u) − c·⟨∇J_ε, u − u'⟩`, which equals
/// `c·τ·‖∇J_ε‖²` whenever no component is clamped.
pub fn descent_step<T: Scalar>(
    u: &VectorField<T>,
    q: &WeightField<T>,
    eps: T,
    rule: &StepRule<T>,
) -> Result<(VectorField<T>, bool)> {
    rule.validate()?;
    let grid = u.grid().clone();
    let mut grad = smoothed_gradient(u, q, eps)?;
    let mut any = false;
    for (k, g) in grad.iter_mut().enumerate() {
        let v = u.comp(k);
        for (p, gp) in g.iter_mut().enumerate() {
            // directions blocked by the boundary or by the constraint u ≥ 0
            if grid.is_boundary_index(p) || (v[p] <= T::zero() && *gp > T::zero()) {
                *gp = T::zero();
            }
            if *gp != T::zero() {
                any = true;
            }
        }
    }
    if !any {
        return Ok((u.clone(), false));
    }
    let j0 = evaluate_j_smoothed(u, q, eps)?;
    let mut tau = rule.initial;
    let mut trial = u.clone();
    while tau >= rule.min_step {
        let mut decrease = T::zero();
        for (k, g) in grad.iter().enumerate() {
            let old = u.comp(k);
            let new = trial.comp_mut(k);
            for p in 0..new.len() {
                let v = (old[p] - tau * g[p]).max(T::zero());
                decrease += g[p] * (old[p] - v);
                new[p] = v;
            }
        }
        let j1 = evaluate_j_smoothed(&trial, q, eps)?;
        if !j1.is_finite() {
            return Err(crate::error::FbError::NonFinite("relaxed energy".into()));
        }
        if decrease > T::zero() && j1 <= j0 - rule.c_dec * decrease {
            return Ok((trial, true));
        }
        tau *= rule.backtrack;
    }
    Ok((u.clone(), false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BoundaryData, GridSpec, Mask};
    use crate::solver::harmonic_replace;

    fn setup() -> (GridSpec<f64>, WeightField<f64>) {
        let g = GridSpec::square(-1.0, 1.0, 33).unwrap();
        let q = WeightField::constant(g.clone(), 1.0).unwrap();
        (g, q)
    }

    #[test]
    fn fixed_point_is_not_accepted() {
        let (g, q) = setup();
        let u = VectorField::from_fn(g, 1, |_, o| o[0] = 2.0);
        let (v, acc) = descent_step(&u, &q, 0.1, &StepRule::default()).unwrap();
        assert!(!acc);
        assert_eq!(v, u);
    }

    #[test]
    fn over_wide_mask_decreases_and_stays_nonnegative() {
        let (g, q) = setup();
        let bd = BoundaryData::from_fn(g.clone(), 2, |p, o| {
            o[0] = (0.2 * p[1]).max(0.0);
            o[1] = 0.0;
        })
        .unwrap();
        let u0 = VectorField::zeros(g.clone(), 2);
        let full = Mask::from_fn(g.clone(), |_| true);
        let u = harmonic_replace(&u0, &full, &bd, 1e-12).unwrap();
        let eps = 0.05;
        let j0 = evaluate_j_smoothed(&u, &q, eps).unwrap();
        let (v, acc) = descent_step(&u, &q, eps, &StepRule::default()).unwrap();
        assert!(acc);
        assert!(evaluate_j_smoothed(&v, &q, eps).unwrap() < j0);
        assert!(v.comps().iter().flatten().all(|&x| x >= 0.0));
        assert!(bd.matches(&v));
    }
}
