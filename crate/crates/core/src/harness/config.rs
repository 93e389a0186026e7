//! Run configuration: a TOML file with `[model]`, `[solver]` and `[scene]`
//! sections. Every key is optional; see `docs/config.md`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{FusionSettings, Method, SolverKind};
use crate::harness::noise::NoiseKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub alpha1: f64,
    pub alpha0: f64,
    pub b: f64,
    pub w: f64,
    pub c: f64,
    pub prior_sigma: f64,
    pub edge_gain: f64,
    pub edge_exponent: f64,
    pub edge_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub method: Method,
    pub solver: Option<SolverKind>,
    pub reference: Option<usize>,
    pub iters: usize,
    pub inner_iters: usize,
    pub tau: Option<f64>,
    pub tau_lambda: Option<f64>,
    pub tol: f64,
    pub mu0: Option<f64>,
    pub nu0: Option<f64>,
    pub prox_growth: f64,
    pub prox_max: f64,
    pub norm_seed: u64,
    pub threads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneKind {
    /// Aligned copies of the box field; identity poses.
    Boxes,
    /// Ray-cast object on an orbit.
    Orbit,
    /// Ray-cast urban scene along a straight path.
    Translation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSection {
    pub kind: SceneKind,
    pub width: usize,
    pub height: usize,
    pub views: usize,
    pub noise: NoiseKind,
    pub noise_scale: f64,
    pub seed: u64,
    /// Path step: radians for orbits, model units for translations.
    pub spacing: Option<f64>,
    /// Box background depth.
    pub background: f64,
    /// Box depth offsets from the background, smallest box first.
    pub offsets: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub solver: SolverSection,
    pub scene: SceneSection,
}

impl Default for ModelSection {
    fn default() -> Self {
        let s = FusionSettings::default();
        Self {
            alpha1: s.alpha1,
            alpha0: s.alpha0,
            b: s.b,
            w: s.w,
            c: s.c,
            prior_sigma: s.prior_sigma,
            edge_gain: s.edge_gain,
            edge_exponent: s.edge_exponent,
            edge_sigma: s.edge_sigma,
        }
    }
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = FusionSettings::default();
        Self {
            method: Method::AdaptHprior,
            solver: None,
            reference: None,
            iters: s.iters,
            inner_iters: s.inner_iters,
            tau: s.tau,
            tau_lambda: s.tau_lambda,
            tol: s.tol,
            mu0: s.mu0,
            nu0: s.nu0,
            prox_growth: s.prox_growth,
            prox_max: s.prox_max,
            norm_seed: s.norm_seed,
            threads: 1,
        }
    }
}

impl Default for SceneSection {
    fn default() -> Self {
        Self {
            kind: SceneKind::Boxes,
            width: 128,
            height: 128,
            views: 11,
            noise: NoiseKind::Laplace,
            noise_scale: 0.6,
            seed: 0,
            spacing: None,
            background: 3.0,
            offsets: [-1.0, 1.0, -1.0, 1.0],
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn settings(&self) -> FusionSettings {
        let (m, s) = (&self.model, &self.solver);
        FusionSettings {
            alpha1: m.alpha1,
            alpha0: m.alpha0,
            b: m.b,
            w: m.w,
            c: m.c,
            iters: s.iters,
            inner_iters: s.inner_iters,
            tau: s.tau,
            tau_lambda: s.tau_lambda,
            tol: s.tol,
            mu0: s.mu0,
            nu0: s.nu0,
            prox_growth: s.prox_growth,
            prox_max: s.prox_max,
            prior_sigma: m.prior_sigma,
            edge_gain: m.edge_gain,
            edge_exponent: m.edge_exponent,
            edge_sigma: m.edge_sigma,
            norm_seed: s.norm_seed,
        }
    }
}
