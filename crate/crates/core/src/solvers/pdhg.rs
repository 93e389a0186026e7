use std::time::Instant;

use super::{compute_steps, default_tau, initial_estimate, DualState, PrimalState, SolverTrace, StepSizes, TraceRecord, Verdict};
use super::{NORM_ITERS, NORM_SAFETY};
use crate::energy::{eval_energy, ConfidenceField, Fidelity, ModelParams, ObservationBundle, Regularizer};
use crate::error::{Error, Result};
use crate::field::{Grid, GridVector, VectorField};
use crate::grid::{backward_div, forward_diff, grad_norm, tgv_norm};

#[derive(Debug, Clone, PartialEq)]
pub struct PdhgConfig {
    pub max_iters: usize,
    /// Stop once the RMS primal plus dual change drops below this; 0 disables.
    pub tol: f64,
    /// Primal step; defaults to [`default_tau`].
    pub tau: Option<f64>,
    /// Explicit step sizes, checked against the step bounds.
    pub steps: Option<StepSizes>,
    pub norm_seed: u64,
    /// Evaluate the energy at every iteration for the trace.
    pub record_energy: bool,
}

impl Default for PdhgConfig {
    fn default() -> Self {
        Self { max_iters: 500, tol: 0.0, tau: None, steps: None, norm_seed: 0, record_energy: true }
    }
}

#[derive(Debug, Clone)]
pub struct PdhgOutput {
    pub primal: PrimalState,
    pub dual: DualState,
    pub trace: SolverTrace,
}

/// RMS changes of one iteration.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct StepInfo {
    pub dx: f64,
    pub dq: f64,
}

/// `‖M‖` for the regularizer in use, inflated by [`NORM_SAFETY`].
pub(crate) fn model_operator_norm(grid: Grid, regularizer: Regularizer, seed: u64) -> f64 {
    let n = match regularizer {
        Regularizer::Tgv => tgv_norm(grid, NORM_ITERS, seed),
        Regularizer::Tv => grad_norm(grid, NORM_ITERS, seed),
    };
    n * NORM_SAFETY
}

/// Preallocated buffers for one primal-dual sweep.
pub(crate) struct Kernel {
    grid: Grid,
    divq: Vec<f64>,
    psum: Vec<f64>,
    xbar: Vec<f64>,
    vbar: VectorField,
    sdiv: VectorField,
    du: Vec<f64>,
    dv: Vec<f64>,
    vuu: Vec<f64>,
    vuv: Vec<f64>,
    vvu: Vec<f64>,
    vvv: Vec<f64>,
}

impl Kernel {
    pub fn new(grid: Grid) -> Self {
        let n = grid.len();
        Self {
            grid,
            divq: vec![0.0; n],
            psum: vec![0.0; n],
            xbar: vec![0.0; n],
            vbar: VectorField::zeros(grid),
            sdiv: VectorField::zeros(grid),
            du: vec![0.0; n],
            dv: vec![0.0; n],
            vuu: vec![0.0; n],
            vuv: vec![0.0; n],
            vvu: vec![0.0; n],
            vvv: vec![0.0; n],
        }
    }

    /// One iteration: primal descent, over-relaxation, dual ascent.
    ///
    /// `anchor = Some((x_n, μ))` folds `‖x − x_n‖²/(2μ)` into the primal step.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        primal: &mut PrimalState,
        dual: &mut DualState,
        bundle: &ObservationBundle,
        params: &ModelParams,
        lambda: &[f64],
        steps: &StepSizes,
        anchor: Option<(&[f64], f64)>,
    ) -> StepInfo {
        let grid = self.grid;
        let n = grid.len();
        let tau = steps.tau;
        let tgv = params.regularizer == Regularizer::Tgv;
        let mut dx2 = 0.0;
        let mut dq2 = 0.0;

        // primal: x ← x − τ(Mᵀq + Σ_k Λ p_k)
        backward_div(grid, &dual.q1.u, &dual.q1.v, &mut self.divq);
        self.psum.iter_mut().for_each(|s| *s = 0.0);
        for p in &dual.p {
            for (s, &pk) in self.psum.iter_mut().zip(&p.data) {
                *s += pk;
            }
        }
        let x = &mut primal.x.data;
        for i in 0..n {
            let g = -self.divq[i] + lambda[i] * self.psum[i];
            let mut xn = x[i] - tau * g;
            if let Some((xa, mu)) = anchor {
                let r = tau / mu;
                xn = (xn + r * xa[i]) / (1.0 + r);
            }
            self.xbar[i] = 2.0 * xn - x[i];
            dx2 += (xn - x[i]) * (xn - x[i]);
            x[i] = xn;
        }
        if tgv {
            backward_div(grid, &dual.q2.xx, &dual.q2.xy, &mut self.sdiv.u);
            backward_div(grid, &dual.q2.xy, &dual.q2.yy, &mut self.sdiv.v);
            let v = &mut primal.v;
            for i in 0..n {
                let un = v.u[i] + tau * (dual.q1.u[i] + self.sdiv.u[i]);
                let vn = v.v[i] + tau * (dual.q1.v[i] + self.sdiv.v[i]);
                self.vbar.u[i] = 2.0 * un - v.u[i];
                self.vbar.v[i] = 2.0 * vn - v.v[i];
                dx2 += (un - v.u[i]).powi(2) + (vn - v.v[i]).powi(2);
                v.u[i] = un;
                v.v[i] = vn;
            }
        }

        // dual of the regularizer
        let (sq, a1, a0) = (steps.sigma_q, params.alpha1, params.alpha0);
        forward_diff(grid, &self.xbar, &mut self.du, &mut self.dv);
        if tgv {
            forward_diff(grid, &self.vbar.u, &mut self.vuu, &mut self.vuv);
            forward_diff(grid, &self.vbar.v, &mut self.vvu, &mut self.vvv);
        }
        let q1 = &mut dual.q1;
        let q2 = &mut dual.q2;
        for i in 0..n {
            let (mut a, mut b) = if tgv {
                (q1.u[i] + sq * (self.du[i] - self.vbar.u[i]), q1.v[i] + sq * (self.dv[i] - self.vbar.v[i]))
            } else {
                (q1.u[i] + sq * self.du[i], q1.v[i] + sq * self.dv[i])
            };
            let m = a.hypot(b);
            if m > a1 {
                let s = if a1 > 0.0 { a1 / m } else { 0.0 };
                a *= s;
                b *= s;
            }
            dq2 += (a - q1.u[i]).powi(2) + (b - q1.v[i]).powi(2);
            q1.u[i] = a;
            q1.v[i] = b;

            if tgv {
                let mut txx = q2.xx[i] + sq * self.vuu[i];
                let mut tyy = q2.yy[i] + sq * self.vvv[i];
                let mut txy = q2.xy[i] + sq * 0.5 * (self.vuv[i] + self.vvu[i]);
                let m = (txx * txx + tyy * tyy + 2.0 * txy * txy).sqrt();
                if m > a0 {
                    let s = if a0 > 0.0 { a0 / m } else { 0.0 };
                    txx *= s;
                    tyy *= s;
                    txy *= s;
                }
                dq2 += (txx - q2.xx[i]).powi(2) + (tyy - q2.yy[i]).powi(2) + 2.0 * (txy - q2.xy[i]).powi(2);
                q2.xx[i] = txx;
                q2.yy[i] = tyy;
                q2.xy[i] = txy;
            }
        }

        // dual of each fidelity term; invalid pixels keep p = 0
        let sp = steps.sigma_p;
        for (p, obs) in dual.p.iter_mut().zip(bundle.iter()) {
            let d = &obs.depth.data;
            for i in 0..n {
                if !obs.valid[i] {
                    continue;
                }
                let raw = p.data[i] + sp * lambda[i] * (self.xbar[i] - d[i]);
                let new = match params.fidelity {
                    Fidelity::L1 => raw.clamp(-1.0, 1.0),
                    Fidelity::L2 => raw / (1.0 + sp),
                };
                dq2 += (new - p.data[i]).powi(2);
                p.data[i] = new;
            }
        }

        let nf = n as f64;
        StepInfo { dx: (dx2 / nf).sqrt(), dq: (dq2 / nf).sqrt() }
    }
}

pub(crate) fn validate_state(
    bundle: &ObservationBundle,
    params: &ModelParams,
    primal: &PrimalState,
    dual: &DualState,
) -> Result<()> {
    let grid = bundle.grid();
    params.validate(grid)?;
    grid.check(primal.x.grid)?;
    grid.check(primal.v.grid)?;
    grid.check(dual.q1.grid)?;
    grid.check(dual.q2.grid)?;
    if dual.p.len() != bundle.len() {
        return Err(Error::config(format!(
            "dual state has {} fidelity duals for {} observations",
            dual.p.len(),
            bundle.len()
        )));
    }
    for p in &dual.p {
        grid.check(p.grid)?;
    }
    Ok(())
}

/// Resolves the step sizes for a fixed confidence field, rejecting explicit
/// steps that violate either bound.
pub(crate) fn resolve_steps(
    config: &PdhgConfig,
    bundle: &ObservationBundle,
    params: &ModelParams,
    norm_m: f64,
    norm_lambda: f64,
) -> Result<StepSizes> {
    let k = bundle.len();
    match config.steps {
        Some(s) => {
            let checked = StepSizes { norm_m: norm_m.max(s.norm_m), norm_lambda: norm_lambda.max(s.norm_lambda), ..s };
            if !(s.tau > 0.0 && s.sigma_q > 0.0 && s.sigma_p > 0.0) || !checked.satisfies_bounds(k) {
                return Err(Error::config(format!(
                    "step sizes violate σq·τ·‖M‖² ≤ 1/(K+1) or σp·τ·‖Λ‖² ≤ 1/(K+1) for K = {k}"
                )));
            }
            Ok(checked)
        }
        None => compute_steps(k, norm_m, norm_lambda, config.tau.unwrap_or_else(|| default_tau(bundle, params))),
    }
}

/// PDHG for a fixed spatially varying confidence field, started from the
/// median of the observations with zero duals.
pub fn pdhg_fixed(
    bundle: &ObservationBundle,
    lambda: &ConfidenceField,
    params: &ModelParams,
    config: &PdhgConfig,
) -> Result<PdhgOutput> {
    let grid = bundle.grid();
    let primal = PrimalState::new(initial_estimate(bundle));
    let dual = DualState::zeros(grid, bundle.len());
    pdhg_fixed_from(bundle, lambda, params, config, primal, dual)
}

/// Warm-started variant of [`pdhg_fixed`].
pub fn pdhg_fixed_from(
    bundle: &ObservationBundle,
    lambda: &ConfidenceField,
    params: &ModelParams,
    config: &PdhgConfig,
    mut primal: PrimalState,
    mut dual: DualState,
) -> Result<PdhgOutput> {
    validate_state(bundle, params, &primal, &dual)?;
    let grid = bundle.grid();
    grid.check(lambda.grid())?;
    let norm_m = model_operator_norm(grid, params.regularizer, config.norm_seed);
    let steps = resolve_steps(config, bundle, params, norm_m, lambda.max())?;

    let mut kernel = Kernel::new(grid);
    let mut trace = SolverTrace::new();
    let start = Instant::now();
    for iter in 1..=config.max_iters {
        let info = kernel.step(&mut primal, &mut dual, bundle, params, lambda.values(), &steps, None);
        let energy = if config.record_energy {
            eval_energy(&primal.x, &primal.v, lambda, bundle, params)?.total
        } else {
            f64::NAN
        };
        trace.records.push(TraceRecord {
            iter,
            energy,
            dx: info.dx,
            dq: info.dq,
            dlambda: 0.0,
            seconds: start.elapsed().as_secs_f64(),
            lambda_max: lambda.max(),
        });
        if !(info.dx.is_finite() && info.dq.is_finite() && primal.x.is_finite()) {
            trace.verdict = Verdict::Diverged;
            break;
        }
        if config.tol > 0.0 && info.dx + info.dq < config.tol {
            trace.verdict = Verdict::Converged;
            break;
        }
    }
    Ok(PdhgOutput { primal, dual, trace })
}
