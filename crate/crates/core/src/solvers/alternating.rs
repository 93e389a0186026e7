//! Alternating block minimization over `Λ` and `x`.
//!
//! Each outer iteration updates `Λ` in closed form and then runs a bounded
//! number of warm-started PDHG iterations for `x`. The running PDHG state is
//! kept across outer iterations; its primal iterate replaces the accepted one
//! only when it does not increase the block objective, so the recorded energy
//! sequence is nonincreasing.

use std::time::Instant;

use super::pdhg::{model_operator_norm, validate_state, Kernel};
use super::{compute_steps, default_tau, initial_estimate, DualState, PrimalState, SolverTrace, TraceRecord, Verdict};
use crate::energy::{eval_energy, lambda_acs_update, lambda_ama_update, ConfidenceField, ModelParams, ObservationBundle};
use crate::error::{Error, Result};
use crate::field::{distance, GridVector};

/// Geometric schedule `μ_n = min(start · growth^n, max)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProximalSchedule {
    pub start: f64,
    pub growth: f64,
    pub max: f64,
}

impl ProximalSchedule {
    pub fn constant(value: f64) -> Self {
        Self { start: value, growth: 1.0, max: value }
    }

    pub fn at(&self, n: usize) -> f64 {
        (self.start * self.growth.powi(n as i32)).min(self.max)
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.start > 0.0 && self.growth >= 1.0 && self.max >= self.start) {
            return Err(Error::domain(format!(
                "{name} schedule needs start > 0, growth ≥ 1, max ≥ start; got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlternatingConfig {
    pub outer_iters: usize,
    /// PDHG iterations per `x` block.
    pub inner_iters: usize,
    /// Primal step; defaults to [`default_tau`].
    pub tau: Option<f64>,
    /// Stop when the RMS changes of `x` and `Λ` both fall below this; 0 disables.
    pub outer_tol: f64,
    /// When false `Λ` stays at its initial value.
    pub adapt: bool,
    /// Initial confidence; defaults to the exact update at the initial `x`.
    pub initial_lambda: Option<ConfidenceField>,
    /// Initial depth; defaults to the per-pixel median of the observations.
    pub initial_x: Option<crate::field::ScalarField>,
    pub norm_seed: u64,
}

impl Default for AlternatingConfig {
    fn default() -> Self {
        Self {
            outer_iters: 100,
            inner_iters: 50,
            tau: None,
            outer_tol: 0.0,
            adapt: true,
            initial_lambda: None,
            initial_x: None,
            norm_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlternatingOutput {
    pub primal: PrimalState,
    pub lambda: ConfidenceField,
    pub dual: DualState,
    pub trace: SolverTrace,
}

/// Alternate convex search: exact `Λ` block, inexact `x` block.
pub fn acs(bundle: &ObservationBundle, params: &ModelParams, config: &AlternatingConfig) -> Result<AlternatingOutput> {
    alternate(bundle, params, config, None)
}

/// Alternating minimization with proximal terms `‖x − x_n‖²/(2μ_n)` and
/// `‖Λ − Λ_n‖²/(2ν_n)`.
pub fn ama(
    bundle: &ObservationBundle,
    params: &ModelParams,
    config: &AlternatingConfig,
    mu: ProximalSchedule,
    nu: ProximalSchedule,
) -> Result<AlternatingOutput> {
    mu.validate("mu")?;
    nu.validate("nu")?;
    alternate(bundle, params, config, Some((mu, nu)))
}

fn rms(d: f64, n: usize) -> f64 {
    d / (n as f64).sqrt()
}

fn alternate(
    bundle: &ObservationBundle,
    params: &ModelParams,
    config: &AlternatingConfig,
    proximal: Option<(ProximalSchedule, ProximalSchedule)>,
) -> Result<AlternatingOutput> {
    let grid = bundle.grid();
    params.validate(grid)?;
    let n = grid.len();
    let x0 = match &config.initial_x {
        Some(x) => {
            grid.check(x.grid)?;
            x.clone()
        }
        None => initial_estimate(bundle),
    };
    let mut accepted = PrimalState::new(x0);
    let mut running = accepted.clone();
    let mut dual = DualState::zeros(grid, bundle.len());
    validate_state(bundle, params, &running, &dual)?;

    let mut lambda = match &config.initial_lambda {
        Some(l) => {
            grid.check(l.grid())?;
            l.clone()
        }
        None => lambda_acs_update(&accepted.x, bundle, params)?,
    };

    let norm_m = model_operator_norm(grid, params.regularizer, config.norm_seed);
    let tau = config.tau.unwrap_or_else(|| default_tau(bundle, params));
    let mut kernel = Kernel::new(grid);
    let mut trace = SolverTrace::new();
    let start = Instant::now();

    for outer in 0..config.outer_iters {
        let next_lambda = if !config.adapt {
            lambda.clone()
        } else if let Some((_, nu)) = proximal {
            lambda_ama_update(&lambda, &accepted.x, bundle, params, nu.at(outer))?
        } else {
            lambda_acs_update(&accepted.x, bundle, params)?
        };
        let steps = compute_steps(bundle.len(), norm_m, next_lambda.max(), tau)?;
        let mu = proximal.map(|(mu, _)| mu.at(outer));

        let mut dq2 = 0.0;
        for _ in 0..config.inner_iters {
            let anchor = mu.map(|m| (accepted.x.data.as_slice(), m));
            let info = kernel.step(&mut running, &mut dual, bundle, params, next_lambda.values(), &steps, anchor);
            dq2 = info.dq * info.dq;
        }

        let block_objective = |p: &PrimalState| -> Result<f64> {
            let e = eval_energy(&p.x, &p.v, &next_lambda, bundle, params)?.total;
            Ok(match mu {
                Some(m) => e + distance(&p.x, &accepted.x).powi(2) / (2.0 * m),
                None => e,
            })
        };
        let keep = block_objective(&accepted)?;
        let candidate = block_objective(&running)?;
        let mut dx = 0.0;
        if candidate <= keep {
            dx = rms(distance(&(running.x.clone(), running.v.clone()), &(accepted.x.clone(), accepted.v.clone())), n);
            accepted = running.clone();
        }
        let dlambda = rms(distance(next_lambda.as_field(), lambda.as_field()), n);
        lambda = next_lambda;
        let energy = eval_energy(&accepted.x, &accepted.v, &lambda, bundle, params)?.total;
        trace.records.push(TraceRecord {
            iter: outer + 1,
            energy,
            dx,
            dq: dq2.sqrt(),
            dlambda,
            seconds: start.elapsed().as_secs_f64(),
            lambda_max: lambda.max(),
        });
        if !(energy.is_finite() && running.x.is_finite()) {
            trace.verdict = Verdict::Diverged;
            break;
        }
        if config.outer_tol > 0.0 && outer > 0 && dx < config.outer_tol && dlambda < config.outer_tol {
            trace.verdict = Verdict::Converged;
            break;
        }
    }
    Ok(AlternatingOutput { primal: accepted, lambda, dual, trace })
}
