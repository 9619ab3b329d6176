//! Minimization of the cavitation functional on a grid.
//!
//! The pipeline is ε-continuation projected descent on the relaxed
//! functional, harmonic replacement on the current positivity set,
//! truncation sweeps, and an exact local search over the positivity mask.
//! [`brute_force_minimize`] enumerates every mask on tiny grids.

mod brute;
mod descent;
mod harmonic;
mod minimize;
mod polish;
mod truncation;

use std::fmt;

use serde::Serialize;

use crate::error::{FbError, Result};
use crate::functional::EnergyBreakdown;
use crate::grid::{Mask, VectorField};
use crate::scalar::{lit, to_f64, Scalar};

pub use brute::{brute_force_minimize, BruteForceResult};
pub use descent::descent_step;
pub use harmonic::{default_tolerance, harmonic_replace};
pub use minimize::minimize;
pub use polish::flip_polish;
pub use truncation::{truncation_move, truncation_sweep, TruncationLattice};

pub(crate) use harmonic::window_solve;

/// Backtracking rule for the projected descent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRule<T> {
    pub initial: T,
    pub backtrack: T,
    pub c_dec: T,
    pub min_step: T,
}

impl<T: Scalar> Default for StepRule<T> {
    fn default() -> Self {
        StepRule {
            initial: lit(0.1),
            backtrack: lit(0.5),
            c_dec: lit(1e-4),
            min_step: lit(1e-10),
        }
    }
}

impl<T: Scalar> StepRule<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.initial > T::zero()
            && self.backtrack > T::zero()
            && self.backtrack < T::one()
            && self.c_dec > T::zero()
            && self.c_dec < T::one()
            && self.min_step > T::zero()
            && self.min_step <= self.initial;
        if ok {
            Ok(())
        } else {
            Err(FbError::InvalidArgument(
                "step rule needs initial ≥ min_step > 0 and backtrack, c_dec in (0, 1)".into(),
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T> {
    /// Strictly decreasing; the last entry must not exceed the grid spacing.
    pub eps_schedule: Vec<T>,
    /// Descent steps per ε stage.
    pub descent_iters: usize,
    /// Rounds of polish and global harmonic replacement.
    pub max_outer: usize,
    pub step: StepRule<T>,
    pub harmonic_tol: T,
    /// Half-width in nodes of the local re-solve window used by the polish.
    pub flip_radius: usize,
    /// Random mask perturbations tried after the polish on the final grid.
    pub kick_rounds: usize,
    pub seed: u64,
    /// Run on nested coarser grids first when the node counts allow it.
    pub multilevel: bool,
}

impl<T: Scalar> SolverConfig<T> {
    /// Halving ε schedule from `1` down to the first value not above `h`.
    pub fn for_spacing(h: T) -> Self {
        let mut eps = vec![T::one()];
        while *eps.last().unwrap() > h {
            let next = *eps.last().unwrap() * lit(0.5);
            eps.push(next);
        }
        SolverConfig {
            eps_schedule: eps,
            descent_iters: 40,
            max_outer: 20,
            step: StepRule::default(),
            harmonic_tol: default_tolerance(),
            flip_radius: 4,
            kick_rounds: 64,
            seed: 0,
            multilevel: true,
        }
    }

    pub fn validate(&self, h: T) -> Result<()> {
        let bad = |m: String| Err(FbError::InvalidArgument(m));
        if self.eps_schedule.is_empty() {
            return bad("ε schedule is empty".into());
        }
        if self
            .eps_schedule
            .iter()
            .any(|e| !(*e > T::zero()) || !e.is_finite())
        {
            return bad("ε schedule entries must be positive and finite".into());
        }
        if self.eps_schedule.windows(2).any(|w| !(w[1] < w[0])) {
            return bad("ε schedule must be strictly decreasing".into());
        }
        let last = *self.eps_schedule.last().unwrap();
        if last > h * (T::one() + lit(1e-12)) {
            return bad(format!(
                "last ε ({}) exceeds the grid spacing ({})",
                to_f64(last),
                to_f64(h)
            ));
        }
        if !(self.harmonic_tol > T::zero()) {
            return bad("harmonic tolerance must be positive".into());
        }
        if self.flip_radius == 0 {
            return bad("flip radius must be at least 1".into());
        }
        if self.max_outer == 0 {
            return bad("max_outer must be at least 1".into());
        }
        self.step.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MoveKind {
    Descent,
    Harmonic,
    Truncation,
    Flip,
}

impl fmt::Display for MoveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MoveKind::Descent => "descent",
            MoveKind::Harmonic => "harmonic",
            MoveKind::Truncation => "truncation",
            MoveKind::Flip => "flip",
        })
    }
}

/// One accepted move. Flip and truncation records summarize a whole pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord<T> {
    pub iteration: usize,
    pub kind: MoveKind,
    pub j_before: T,
    pub j_after: T,
    pub d_moved: T,
}

#[derive(Debug, Clone)]
pub struct Solution<T> {
    pub u: VectorField<T>,
    pub mask: Mask<T>,
    pub energy: EnergyBreakdown<T>,
    pub trace: Vec<IterationRecord<T>>,
}

/// Trace as CSV with the header `iter,kind,J_before,J_after,d_moved`.
pub fn trace_csv<T: Scalar>(trace: &[IterationRecord<T>]) -> String {
    let mut s = String::from("iter,kind,J_before,J_after,d_moved\n");
    for r in trace {
        s.push_str(&format!(
            "{},{},{:?},{:?},{:?}\n",
            r.iteration,
            r.kind,
            to_f64(r.j_before),
            to_f64(r.j_after),
            to_f64(r.d_moved)
        ));
    }
    s
}

/// Sets every interior node outside `mask` to zero.
pub(crate) fn zero_outside<T: Scalar>(u: &mut VectorField<T>, mask: &Mask<T>) {
    let grid = u.grid().clone();
    for c in u.comps_mut() {
        for (p, v) in c.iter_mut().enumerate() {
            if !mask.get(p) && !grid.is_boundary_index(p) {
                *v = T::zero();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_ends_below_spacing() {
        let c = SolverConfig::<f64>::for_spacing(1.0 / 64.0);
        assert!(c.validate(1.0 / 64.0).is_ok());
        assert_eq!(*c.eps_schedule.last().unwrap(), 1.0 / 64.0);
    }

    #[test]
    fn rejects_bad_schedules() {
        let mut c = SolverConfig::<f64>::for_spacing(0.1);
        c.eps_schedule = vec![0.5, 0.5, 0.05];
        assert!(c.validate(0.1).is_err());
        c.eps_schedule = vec![0.5, 0.2];
        assert!(c.validate(0.1).is_err());
        c.eps_schedule = vec![];
        assert!(c.validate(0.1).is_err());
    }

    #[test]
    fn trace_csv_header() {
        let t = vec![IterationRecord {
            iteration: 0,
            kind: MoveKind::Flip,
            j_before: 2.0,
            j_after: 1.5,
            d_moved: 0.25,
        }];
        assert_eq!(
            trace_csv(&t),
            "iter,kind,J_before,J_after,d_moved\n0,flip,2.0,1.5,0.25\n"
        );
    }
}
