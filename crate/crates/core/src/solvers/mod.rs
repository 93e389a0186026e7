//! Minimization procedures for the fusion energy.
//!
//! * [`pdhg_fixed`]: primal-dual iteration for a fixed confidence field.
//! * [`acs`] / [`ama`]: alternating block minimization, with the `x` block
//!   solved inexactly by warm-started PDHG.
//! * [`pdhg_biconvex`]: joint primal-dual iteration over `(x, Λ)`.

mod alternating;
mod biconvex;
mod pdhg;
mod trace;

use crate::energy::{ModelParams, ObservationBundle};
use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField, SymTensorField, VectorField};
use crate::harness::baseline::{baseline_fuse, BaselineKind};

pub use alternating::{acs, ama, AlternatingConfig, AlternatingOutput, ProximalSchedule};
pub use biconvex::{pdhg_biconvex, BiconvexConfig, BiconvexOutput};
pub use pdhg::{pdhg_fixed, pdhg_fixed_from, PdhgConfig, PdhgOutput};
pub use trace::{SolverTrace, TraceRecord, Verdict};

/// Multiplier applied to power-iteration norm estimates, which approach the
/// true norm from below.
pub const NORM_SAFETY: f64 = 1.01;

/// Power iterations used when estimating `‖M‖` at solver start.
pub const NORM_ITERS: usize = 100;

/// `x` and the TGV auxiliary field `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalState {
    pub x: ScalarField,
    pub v: VectorField,
}

impl PrimalState {
    pub fn new(x: ScalarField) -> Self {
        let v = VectorField::zeros(x.grid);
        Self { x, v }
    }
}

/// Dual variables of the TGV term (`q1`, `q2`) and of each fidelity term (`p`).
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub q1: VectorField,
    pub q2: SymTensorField,
    pub p: Vec<ScalarField>,
}

impl DualState {
    pub fn zeros(grid: Grid, k: usize) -> Self {
        Self {
            q1: VectorField::zeros(grid),
            q2: SymTensorField::zeros(grid),
            p: vec![ScalarField::zeros(grid); k],
        }
    }

    /// Largest violation of `|q1| ≤ α1`, `|q2| ≤ α0`, `|p_k| ≤ 1` over all pixels
    /// (zero when feasible).
    pub fn feasibility_violation(&self, alpha1: f64, alpha0: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.q1.grid.len() {
            worst = worst.max(self.q1.magnitude(i) - alpha1);
            worst = worst.max(self.q2.magnitude(i) - alpha0);
            for p in &self.p {
                worst = worst.max(p.data[i].abs() - 1.0);
            }
        }
        worst.max(0.0)
    }
}

/// Primal and dual step sizes with the norms they were derived from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes {
    pub tau: f64,
    pub sigma_q: f64,
    pub sigma_p: f64,
    pub norm_m: f64,
    pub norm_lambda: f64,
}

impl StepSizes {
    /// `σq τ ‖M‖² ≤ 1/(K+1)` and `σp τ ‖Λ‖² ≤ 1/(K+1)`, up to rounding.
    pub fn satisfies_bounds(&self, k: usize) -> bool {
        let limit = 1.0 / (k as f64 + 1.0) * (1.0 + 1e-12);
        self.sigma_q * self.tau * self.norm_m * self.norm_m <= limit
            && self.sigma_p * self.tau * self.norm_lambda * self.norm_lambda <= limit
    }
}

/// Step sizes meeting both bounds with equality for primal step `balance`.
pub fn compute_steps(k: usize, norm_m: f64, norm_lambda: f64, balance: f64) -> Result<StepSizes> {
    if k == 0 {
        return Err(Error::domain("need at least one observation"));
    }
    for (name, v) in [("norm_m", norm_m), ("norm_lambda", norm_lambda), ("balance", balance)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(format!("{name} must be positive, got {v}")));
        }
    }
    let kp1 = k as f64 + 1.0;
    Ok(StepSizes {
        tau: balance,
        sigma_q: 1.0 / (kp1 * balance * norm_m * norm_m),
        sigma_p: 1.0 / (kp1 * balance * norm_lambda * norm_lambda),
        norm_m,
        norm_lambda,
    })
}

/// Default primal step `5·10⁻⁴ · range / α1`, with `range` the observed depth
/// range. Without a first-order weight it falls back to `0.05 · range`.
pub fn default_tau(bundle: &ObservationBundle, params: &ModelParams) -> f64 {
    let range = match bundle.value_range() {
        Some((lo, hi)) if hi > lo => hi - lo,
        _ => 1.0,
    };
    if params.alpha1 > 0.0 {
        5e-4 * range / params.alpha1
    } else {
        0.05 * range
    }
}

/// Starting depth: per-pixel lower median of the valid observations; pixels
/// without observations take the median over all valid samples.
pub fn initial_estimate(bundle: &ObservationBundle) -> ScalarField {
    let (mut x, valid) = baseline_fuse(bundle, BaselineKind::Median);
    let mut all: Vec<f64> = x.data.iter().zip(&valid).filter(|(_, &ok)| ok).map(|(&d, _)| d).collect();
    let fill = if all.is_empty() {
        0.0
    } else {
        all.sort_by(f64::total_cmp);
        all[(all.len() - 1) / 2]
    };
    for (d, &ok) in x.data.iter_mut().zip(&valid) {
        if !ok {
            *d = fill;
        }
    }
    x
}
