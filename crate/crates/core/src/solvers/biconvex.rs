//! Joint primal-dual iteration over `(x, Λ)`.
//!
//! The operator of this iteration is not monotone, so convergence is not
//! guaranteed; the solver reports a verdict instead of assuming one.

use std::time::Instant;

use super::pdhg::{model_operator_norm, validate_state, Kernel};
use super::{compute_steps, default_tau, initial_estimate, DualState, PrimalState, SolverTrace, TraceRecord, Verdict};
use crate::energy::{eval_energy, lambda_acs_update, lambda_pdhg_resolvent, ConfidenceField, ModelParams, ObservationBundle};
use crate::error::Result;
use crate::field::{distance, GridVector, ScalarField};

#[derive(Debug, Clone, PartialEq)]
pub struct BiconvexConfig {
    pub max_iters: usize,
    /// Primal step; defaults to [`default_tau`].
    pub tau: Option<f64>,
    /// Step of the `Λ` resolvent; defaults to the primal step.
    pub tau_lambda: Option<f64>,
    /// Converged once the RMS `Λ` and `x` changes fall below `tol` times their
    /// values in the first iteration.
    pub tol: f64,
    /// Diverged once `‖x‖` exceeds this multiple of `‖x_0‖`.
    pub divergence_factor: f64,
    pub norm_seed: u64,
}

impl Default for BiconvexConfig {
    fn default() -> Self {
        Self { max_iters: 1000, tau: None, tau_lambda: None, tol: 1e-6, divergence_factor: 1e6, norm_seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct BiconvexOutput {
    pub primal: PrimalState,
    pub lambda: ConfidenceField,
    pub dual: DualState,
    pub trace: SolverTrace,
}

impl BiconvexOutput {
    pub fn verdict(&self) -> Verdict {
        self.trace.verdict
    }
}

pub fn pdhg_biconvex(
    bundle: &ObservationBundle,
    params: &ModelParams,
    config: &BiconvexConfig,
) -> Result<BiconvexOutput> {
    let grid = bundle.grid();
    let n = grid.len();
    let mut primal = PrimalState::new(initial_estimate(bundle));
    let mut dual = DualState::zeros(grid, bundle.len());
    validate_state(bundle, params, &primal, &dual)?;
    let mut lambda = lambda_acs_update(&primal.x, bundle, params)?;

    let norm_m = model_operator_norm(grid, params.regularizer, config.norm_seed);
    let tau = config.tau.unwrap_or_else(|| default_tau(bundle, params));
    let tau_lambda = config.tau_lambda.unwrap_or(tau);
    let x0_norm = primal.x.norm().max(f64::MIN_POSITIVE);

    let mut kernel = Kernel::new(grid);
    let mut trace = SolverTrace::new();
    let start = Instant::now();
    let mut initial: Option<(f64, f64)> = None;
    let mut shifted = ScalarField::zeros(grid);

    for iter in 1..=config.max_iters {
        // Λ̃ = Λ_n − τΛ Σ_k (x_n − d_k) ⊙ p_k
        shifted.data.copy_from_slice(lambda.values());
        for (p, obs) in dual.p.iter().zip(bundle.iter()) {
            for i in 0..n {
                if obs.valid[i] {
                    shifted.data[i] -= tau_lambda * (primal.x.data[i] - obs.depth.data[i]) * p.data[i];
                }
            }
        }
        if !shifted.is_finite() {
            trace.verdict = Verdict::Diverged;
            break;
        }
        let next_lambda = lambda_pdhg_resolvent(&shifted, tau_lambda, params)?;
        let steps = compute_steps(bundle.len(), norm_m, next_lambda.max(), tau)?;

        let mut next_primal = primal.clone();
        let mut next_dual = dual.clone();
        let info = kernel.step(&mut next_primal, &mut next_dual, bundle, params, next_lambda.values(), &steps, None);

        let finite = info.dx.is_finite() && info.dq.is_finite() && next_primal.x.is_finite() && next_dual.q1.is_finite();
        if !finite || next_primal.x.norm() > config.divergence_factor * x0_norm {
            trace.verdict = Verdict::Diverged;
            break;
        }
        let dlambda = distance(next_lambda.as_field(), lambda.as_field()) / (n as f64).sqrt();
        let dx = (distance(&next_primal.x, &primal.x)) / (n as f64).sqrt();
        primal = next_primal;
        dual = next_dual;
        lambda = next_lambda;

        let energy = eval_energy(&primal.x, &primal.v, &lambda, bundle, params)?.total;
        trace.records.push(TraceRecord {
            iter,
            energy,
            dx: info.dx,
            dq: info.dq,
            dlambda,
            seconds: start.elapsed().as_secs_f64(),
            lambda_max: lambda.max(),
        });
        let (l0, x0) = *initial.get_or_insert((dlambda, dx));
        if iter > 1 && dlambda <= config.tol * l0 && dx <= config.tol * x0 {
            trace.verdict = Verdict::Converged;
            break;
        }
    }
    Ok(BiconvexOutput { primal, lambda, dual, trace })
}
