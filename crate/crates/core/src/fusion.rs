//! Reference-view fusion: registration of the views, per-method priors and
//! solver dispatch.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::energy::{ConfidenceField, Fidelity, ModelParams, Observation, ObservationBundle, Regularizer};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{edge_confidence, gaussian_blur, geometric_confidence, prior_to_hyperparams, reproject};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::harness::baseline::{baseline_fuse, BaselineKind};
use crate::solvers::{
    acs, ama, initial_estimate, pdhg_biconvex, pdhg_fixed, AlternatingConfig, BiconvexConfig, PdhgConfig,
    ProximalSchedule, SolverTrace, Verdict,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "mean")]
    Mean,
    #[serde(rename = "median")]
    Median,
    /// TV with quadratic fidelity, uniform confidence `c`.
    #[serde(rename = "rof")]
    Rof,
    /// TV-L1, uniform confidence `c`.
    #[serde(rename = "l1")]
    L1,
    /// TGV-L1, uniform confidence `c`.
    #[serde(rename = "tgv-fusion")]
    TgvFusion,
    /// TGV-L1 with confidence fixed to `c` times the geometric prior.
    #[serde(rename = "l1-heuristic")]
    L1Heuristic,
    /// TGV with quadratic fidelity and adaptive confidence.
    #[serde(rename = "rof-adapt")]
    RofAdapt,
    /// TGV-L1 with adaptive confidence and uniform `W`.
    #[serde(rename = "l1-adapt")]
    L1Adapt,
    /// Adaptive confidence bounded by the geometric prior.
    #[serde(rename = "adapt-hprior")]
    AdaptHprior,
    /// Adaptive confidence bounded by the geometric and image-edge priors.
    #[serde(rename = "adapt-hprior+g")]
    AdaptHpriorG,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Mean,
        Method::Median,
        Method::Rof,
        Method::L1,
        Method::TgvFusion,
        Method::L1Heuristic,
        Method::RofAdapt,
        Method::L1Adapt,
        Method::AdaptHprior,
        Method::AdaptHpriorG,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mean => "mean",
            Method::Median => "median",
            Method::Rof => "rof",
            Method::L1 => "l1",
            Method::TgvFusion => "tgv-fusion",
            Method::L1Heuristic => "l1-heuristic",
            Method::RofAdapt => "rof-adapt",
            Method::L1Adapt => "l1-adapt",
            Method::AdaptHprior => "adapt-hprior",
            Method::AdaptHpriorG => "adapt-hprior+g",
        }
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, Method::RofAdapt | Method::L1Adapt | Method::AdaptHprior | Method::AdaptHpriorG)
    }

    pub fn is_baseline(self) -> bool {
        matches!(self, Method::Mean | Method::Median)
    }

    pub fn allowed_solvers(self) -> &'static [SolverKind] {
        if self.is_baseline() {
            &[]
        } else if self.is_adaptive() {
            &[SolverKind::Acs, SolverKind::Ama, SolverKind::Pdhg]
        } else {
            &[SolverKind::Pdhg]
        }
    }

    /// Resolves an optional solver choice; baselines take none.
    pub fn resolve_solver(self, solver: Option<SolverKind>) -> Result<Option<SolverKind>> {
        let allowed = self.allowed_solvers();
        match solver {
            None => Ok(allowed.first().copied()),
            Some(s) if allowed.contains(&s) => Ok(Some(s)),
            Some(s) => Err(Error::config(format!(
                "solver {s} cannot run method {self}; allowed: {}",
                if allowed.is_empty() {
                    "none".to_string()
                } else {
                    allowed.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")
                }
            ))),
        }
    }

    fn model(self) -> (Fidelity, Regularizer) {
        match self {
            Method::Rof => (Fidelity::L2, Regularizer::Tv),
            Method::L1 => (Fidelity::L1, Regularizer::Tv),
            Method::RofAdapt => (Fidelity::L2, Regularizer::Tgv),
            _ => (Fidelity::L1, Regularizer::Tgv),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            Error::config(format!(
                "unknown method {s:?}; expected one of {}",
                Method::ALL.map(Method::name).join(", ")
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Acs,
    Ama,
    /// Fixed-confidence PDHG, or the joint iteration for adaptive methods.
    Pdhg,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Acs => "acs",
            SolverKind::Ama => "ama",
            SolverKind::Pdhg => "pdhg",
        })
    }
}

impl FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "acs" => Ok(SolverKind::Acs),
            "ama" => Ok(SolverKind::Ama),
            "pdhg" => Ok(SolverKind::Pdhg),
            _ => Err(Error::config(format!("unknown solver {s:?}; expected acs, ama or pdhg"))),
        }
    }
}

/// Model and solver knobs shared by every method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSettings {
    pub alpha1: f64,
    pub alpha0: f64,
    pub b: f64,
    /// Uniform diagonal of `W` for methods without a prior.
    pub w: f64,
    /// Uniform confidence of the fixed-confidence methods.
    pub c: f64,
    /// Outer iterations; fixed-confidence and joint solvers run
    /// `iters · inner_iters` PDHG iterations.
    pub iters: usize,
    pub inner_iters: usize,
    pub tau: Option<f64>,
    pub tau_lambda: Option<f64>,
    /// Convergence tolerance of the joint solver, relative to its first-iteration
    /// changes. The alternating solvers always run their full budget.
    pub tol: f64,
    /// Proximal schedule start; defaults to `√N`.
    pub mu0: Option<f64>,
    pub nu0: Option<f64>,
    pub prox_growth: f64,
    pub prox_max: f64,
    /// Smoothing applied to the median estimate before taking normals.
    pub prior_sigma: f64,
    pub edge_gain: f64,
    pub edge_exponent: f64,
    pub edge_sigma: f64,
    pub norm_seed: u64,
}

impl Default for FusionSettings {
    fn default() -> Self {
        Self {
            alpha1: 0.6,
            alpha0: 1.2,
            b: 1.0,
            w: 0.5,
            c: 0.12,
            iters: 40,
            inner_iters: 25,
            tau: None,
            tau_lambda: None,
            tol: 1e-6,
            mu0: None,
            nu0: None,
            prox_growth: 1.5,
            prox_max: 1e8,
            prior_sigma: 1.5,
            edge_gain: 2.0,
            edge_exponent: 1.0,
            edge_sigma: 1.0,
            norm_seed: 0,
        }
    }
}

/// Depth views with camera-to-world poses and shared intrinsics.
#[derive(Debug, Clone)]
pub struct ViewSet {
    pub views: Vec<(ScalarField, Vec<bool>)>,
    pub poses: Vec<Pose>,
    pub camera: CameraIntrinsics,
}

impl ViewSet {
    /// Forward-warps every view into the reference camera.
    pub fn to_reference(&self, reference: usize) -> Result<ObservationBundle> {
        if self.views.is_empty() {
            return Err(Error::config("no views to fuse"));
        }
        if self.views.len() != self.poses.len() {
            return Err(Error::config(format!("{} views but {} poses", self.views.len(), self.poses.len())));
        }
        let ref_pose = self.poses.get(reference).ok_or_else(|| {
            Error::config(format!("reference index {reference} out of range for {} views", self.views.len()))
        })?;
        let grid = self.views[0].0.grid;
        let observations = self
            .views
            .iter()
            .zip(&self.poses)
            .map(|((d, valid), pose)| {
                grid.check(d.grid)?;
                let (warped, mask) = reproject(d, valid, &Pose::relative(pose, ref_pose), &self.camera);
                Ok(Observation::masked(warped, mask))
            })
            .collect::<Result<Vec<_>>>()?;
        ObservationBundle::new(observations)
    }
}

#[derive(Debug, Clone)]
pub struct FusionResult {
    pub depth: ScalarField,
    /// Pixels seen by at least one observation.
    pub valid: Vec<bool>,
    pub lambda: Option<ConfidenceField>,
    pub trace: Option<SolverTrace>,
}

impl FusionResult {
    pub fn verdict(&self) -> Option<Verdict> {
        self.trace.as_ref().map(|t| t.verdict)
    }
}

/// Confidence from the surface orientation of a smoothed median estimate.
pub fn geometric_prior(bundle: &ObservationBundle, camera: &CameraIntrinsics, sigma: f64) -> ConfidenceField {
    let (_, valid) = baseline_fuse(bundle, BaselineKind::Median);
    let smooth = gaussian_blur(&initial_estimate(bundle), sigma);
    geometric_confidence(&smooth, &valid, camera)
}

fn schedule(start: Option<f64>, n: usize, settings: &FusionSettings) -> ProximalSchedule {
    let start = start.unwrap_or((n as f64).sqrt());
    ProximalSchedule { start, growth: settings.prox_growth, max: settings.prox_max.max(start) }
}

/// Runs `method` on a registered bundle. `intensity` is the reference-view
/// image and is required only by [`Method::AdaptHpriorG`].
pub fn fuse(
    bundle: &ObservationBundle,
    camera: &CameraIntrinsics,
    intensity: Option<&ScalarField>,
    method: Method,
    solver: Option<SolverKind>,
    settings: &FusionSettings,
) -> Result<FusionResult> {
    let solver = method.resolve_solver(solver)?;
    let grid = bundle.grid();
    let observed: Vec<bool> = bundle.valid_counts().iter().map(|&n| n > 0).collect();

    let kind = match method {
        Method::Mean => Some(BaselineKind::Mean),
        Method::Median => Some(BaselineKind::Median),
        _ => None,
    };
    if let Some(kind) = kind {
        let (depth, valid) = baseline_fuse(bundle, kind);
        return Ok(FusionResult { depth, valid, lambda: None, trace: None });
    }

    let (fidelity, regularizer) = method.model();
    let mut params = ModelParams::with_defaults(grid, settings.alpha1, settings.alpha0);
    params.fidelity = fidelity;
    params.regularizer = regularizer;
    params.b = settings.b;
    params.w = ScalarField::constant(grid, settings.w);

    if !method.is_adaptive() {
        let lambda = match method {
            Method::L1Heuristic => {
                let prior = geometric_prior(bundle, camera, settings.prior_sigma);
                ConfidenceField::new(prior.as_field().map(|p| settings.c * p))?
            }
            _ => ConfidenceField::constant(grid, settings.c)?,
        };
        let config = PdhgConfig {
            max_iters: settings.iters * settings.inner_iters,
            tau: settings.tau,
            norm_seed: settings.norm_seed,
            ..PdhgConfig::default()
        };
        let out = pdhg_fixed(bundle, &lambda, &params, &config)?;
        return Ok(FusionResult { depth: out.primal.x, valid: observed, lambda: Some(lambda), trace: Some(out.trace) });
    }

    match method {
        Method::AdaptHprior => {
            let prior = geometric_prior(bundle, camera, settings.prior_sigma);
            (params.w, params.b) = prior_to_hyperparams(&[prior], settings.b)?;
        }
        Method::AdaptHpriorG => {
            let image = intensity.ok_or_else(|| Error::config("adapt-hprior+g needs a reference intensity image"))?;
            grid.check(image.grid)?;
            let geo = geometric_prior(bundle, camera, settings.prior_sigma);
            let edge = edge_confidence(image, settings.edge_gain, settings.edge_exponent, settings.edge_sigma)?;
            // strong image gradients mark likely depth edges, where the data is trusted less
            let edge_trust = ConfidenceField::new(edge.as_field().map(|e| 1.0 / (1.0 + e)))?;
            (params.w, params.b) = prior_to_hyperparams(&[geo, edge_trust], settings.b)?;
        }
        _ => {}
    }

    let alternating = AlternatingConfig {
        outer_iters: settings.iters,
        inner_iters: settings.inner_iters,
        tau: settings.tau,
        outer_tol: 0.0,
        norm_seed: settings.norm_seed,
        ..AlternatingConfig::default()
    };
    let (x, lambda, trace) = match solver.expect("adaptive methods always resolve a solver") {
        SolverKind::Acs => {
            let o = acs(bundle, &params, &alternating)?;
            (o.primal.x, o.lambda, o.trace)
        }
        SolverKind::Ama => {
            let n = grid.len();
            let o = ama(bundle, &params, &alternating, schedule(settings.mu0, n, settings), schedule(settings.nu0, n, settings))?;
            (o.primal.x, o.lambda, o.trace)
        }
        SolverKind::Pdhg => {
            let config = BiconvexConfig {
                max_iters: settings.iters * settings.inner_iters,
                tau: settings.tau,
                tau_lambda: settings.tau_lambda,
                tol: settings.tol,
                norm_seed: settings.norm_seed,
                ..BiconvexConfig::default()
            };
            let o = pdhg_biconvex(bundle, &params, &config)?;
            (o.primal.x, o.lambda, o.trace)
        }
    };
    Ok(FusionResult { depth: x, valid: observed, lambda: Some(lambda), trace: Some(trace) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_roundtrip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("tv".parse::<Method>().is_err());
    }

    #[test]
    fn solver_combinations() {
        assert!(Method::Median.resolve_solver(Some(SolverKind::Pdhg)).is_err());
        assert_eq!(Method::Median.resolve_solver(None).unwrap(), None);
        assert!(Method::L1.resolve_solver(Some(SolverKind::Acs)).is_err());
        assert_eq!(Method::L1.resolve_solver(None).unwrap(), Some(SolverKind::Pdhg));
        for s in [SolverKind::Acs, SolverKind::Ama, SolverKind::Pdhg] {
            assert_eq!(Method::AdaptHprior.resolve_solver(Some(s)).unwrap(), Some(s));
        }
    }
}
