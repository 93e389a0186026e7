//! The confidence-driven fusion energy
//!
//! ```text
//! E(x, Λ) = TGV(x) + Σ_k ‖Λ(x − d_k)‖₁ + ½ tr(W⁻¹Λ) − b log det Λ
//! ```
//!
//! with diagonal `Λ` stored as a per-pixel [`ConfidenceField`], together with
//! the proximal maps of its pieces and the closed-form confidence updates used
//! by the alternating and primal-dual solvers.

use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField, SymTensorField, VectorField};
use crate::grid;

/// Diagonal of `Λ`; every entry strictly positive and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceField(ScalarField);

impl ConfidenceField {
    pub fn new(values: ScalarField) -> Result<Self> {
        if let Some(i) = values.data.iter().position(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::domain(format!(
                "confidence must be positive and finite, found {} at pixel {i}",
                values.data[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn constant(grid: Grid, value: f64) -> Result<Self> {
        Self::new(ScalarField::constant(grid, value))
    }

    pub fn grid(&self) -> Grid {
        self.0.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.0.data
    }

    pub fn as_field(&self) -> &ScalarField {
        &self.0
    }

    pub fn into_field(self) -> ScalarField {
        self.0
    }

    /// Spectral norm of the diagonal matrix, i.e. the largest entry.
    pub fn max(&self) -> f64 {
        self.0.max()
    }
}

/// Data-attachment norm. `L2` is the ROF-style ablation `½‖Λ(x − d)‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fidelity {
    #[default]
    L1,
    L2,
}

/// `Tgv` is second-order TGV; `Tv` pins the auxiliary field `v` to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Regularizer {
    #[default]
    Tgv,
    Tv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Weight of `|∇x − v|`.
    pub alpha1: f64,
    /// Weight of `|ε(v)|`.
    pub alpha0: f64,
    pub b: f64,
    /// Diagonal of `W`.
    pub w: ScalarField,
    pub fidelity: Fidelity,
    pub regularizer: Regularizer,
}

impl ModelParams {
    /// `W = ½ I`, `b = 1`, so the confidence upper bound `2bW` is 1.
    pub fn with_defaults(grid: Grid, alpha1: f64, alpha0: f64) -> Self {
        Self {
            alpha1,
            alpha0,
            b: 1.0,
            w: ScalarField::constant(grid, 0.5),
            fidelity: Fidelity::L1,
            regularizer: Regularizer::Tgv,
        }
    }

    pub fn validate(&self, grid: Grid) -> Result<()> {
        grid.check(self.w.grid)?;
        if !(self.alpha1 >= 0.0 && self.alpha0 >= 0.0) {
            return Err(Error::domain("TGV weights must be non-negative"));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::domain(format!("b must be positive, got {}", self.b)));
        }
        if self.w.data.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::domain("W must be positive and finite"));
        }
        Ok(())
    }

    /// `2b · max_i W_ii`, the upper bound of every exact confidence update.
    pub fn confidence_bound(&self) -> f64 {
        2.0 * self.b * self.w.max()
    }
}

/// One depth observation registered to the reference grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Depth; invalid pixels hold the sentinel `0.0`.
    pub depth: ScalarField,
    pub valid: Vec<bool>,
    pub prior: Option<ScalarField>,
}

impl Observation {
    /// Pixels with finite positive depth are valid.
    pub fn from_depth(depth: ScalarField) -> Self {
        let valid = depth.data.iter().map(|&d| d.is_finite() && d > 0.0).collect();
        Self::masked(depth, valid)
    }

    /// Every pixel valid, whatever its value.
    pub fn dense(depth: ScalarField) -> Self {
        let valid = vec![true; depth.grid.len()];
        Self { depth, valid, prior: None }
    }

    pub fn masked(mut depth: ScalarField, valid: Vec<bool>) -> Self {
        assert_eq!(valid.len(), depth.grid.len(), "mask length must match grid");
        for (d, &ok) in depth.data.iter_mut().zip(&valid) {
            if !ok || !d.is_finite() {
                *d = 0.0;
            }
        }
        Self { depth, valid, prior: None }
    }
}

/// `K` observations sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBundle {
    grid: Grid,
    observations: Vec<Observation>,
}

impl ObservationBundle {
    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        let first = observations
            .first()
            .ok_or_else(|| Error::config("bundle needs at least one observation"))?;
        let grid = first.depth.grid;
        for o in &observations {
            grid.check(o.depth.grid)?;
            if o.valid.len() != grid.len() {
                return Err(Error::config("mask length does not match grid"));
            }
            if let Some(p) = &o.prior {
                grid.check(p.grid)?;
            }
        }
        Ok(Self { grid, observations })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Observation> {
        self.observations.iter()
    }

    /// Number of valid observations per pixel.
    pub fn valid_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.grid.len()];
        for o in &self.observations {
            for (c, &ok) in counts.iter_mut().zip(&o.valid) {
                *c += ok as usize;
            }
        }
        counts
    }

    /// Smallest and largest valid depth, if any pixel is valid.
    pub fn value_range(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for o in &self.observations {
            for (&d, &ok) in o.depth.data.iter().zip(&o.valid) {
                if ok {
                    lo = lo.min(d);
                    hi = hi.max(d);
                }
            }
        }
        (lo <= hi).then_some((lo, hi))
    }
}

/// Per-term breakdown of `E(x, v, Λ)`.
///
/// `tgv_term` is evaluated at the supplied `v` and therefore bounds the true
/// TGV value from above unless `v` is optimal for `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub tgv_term: f64,
    pub fidelity_term: f64,
    pub trace_term: f64,
    pub logdet_term: f64,
    pub total: f64,
    pub lower_bound: f64,
}

/// Per-pixel sum over valid observations of `|x − d_k|` (L1) or `(x − d_k)²` (L2).
pub fn residual_sums(x: &ScalarField, bundle: &ObservationBundle, fidelity: Fidelity) -> Vec<f64> {
    let mut sums = vec![0.0; x.grid.len()];
    for o in bundle.iter() {
        for i in 0..sums.len() {
            if o.valid[i] {
                let r = x.data[i] - o.depth.data[i];
                sums[i] += match fidelity {
                    Fidelity::L1 => r.abs(),
                    Fidelity::L2 => r * r,
                };
            }
        }
    }
    sums
}

/// `α1 Σ|∇x − v| + α0 Σ|ε(v)|` with isotropic per-pixel magnitudes.
pub fn tgv_value(x: &ScalarField, v: &VectorField, alpha1: f64, alpha0: f64) -> Result<f64> {
    let (first, second) = grid::tgv_apply(x, v)?;
    let n = x.grid.len();
    let a: f64 = (0..n).map(|i| first.magnitude(i)).sum();
    let b: f64 = (0..n).map(|i| second.magnitude(i)).sum();
    Ok(alpha1 * a + alpha0 * b)
}

pub fn eval_energy(
    x: &ScalarField,
    v: &VectorField,
    lambda: &ConfidenceField,
    bundle: &ObservationBundle,
    params: &ModelParams,
) -> Result<EnergyReport> {
    let grid = bundle.grid();
    grid.check(x.grid)?;
    grid.check(lambda.grid())?;
    params.validate(grid)?;
    let lam = lambda.values();
    let w = &params.w.data;
    let b = params.b;

    let tgv_term = tgv_value(x, v, params.alpha1, params.alpha0)?;
    let fidelity_term = match params.fidelity {
        Fidelity::L1 => {
            let res = residual_sums(x, bundle, Fidelity::L1);
            lam.iter().zip(&res).map(|(l, r)| l * r).sum()
        }
        Fidelity::L2 => {
            let res = residual_sums(x, bundle, Fidelity::L2);
            lam.iter().zip(&res).map(|(l, r)| 0.5 * l * l * r).sum()
        }
    };
    let trace_term: f64 = lam.iter().zip(w).map(|(l, w)| l / (2.0 * w)).sum();
    let logdet_term: f64 = -b * lam.iter().map(|l| l.ln()).sum::<f64>();
    let lower_bound: f64 = w.iter().map(|w| b * (1.0 - (2.0 * b * w).ln())).sum();
    Ok(EnergyReport {
        tgv_term,
        fidelity_term,
        trace_term,
        logdet_term,
        total: tgv_term + fidelity_term + trace_term + logdet_term,
        lower_bound,
    })
}

/// Positive root of `a2 λ² + a1 λ + a0 = 0` for `a2 > 0`, `a0 < 0`, avoiding
/// cancellation for either sign of `a1`.
#[inline]
pub(crate) fn positive_root(a2: f64, a1: f64, a0: f64) -> f64 {
    let disc = (a1 * a1 - 4.0 * a2 * a0).sqrt();
    if a1 <= 0.0 {
        (disc - a1) / (2.0 * a2)
    } else {
        -2.0 * a0 / (a1 + disc)
    }
}

/// Projects `q1` onto `|q1| ≤ α1` and `q2` onto `|q2| ≤ α0` pixelwise, in place.
pub fn project_tgv_dual(q1: &mut VectorField, q2: &mut SymTensorField, alpha1: f64, alpha0: f64) {
    for i in 0..q1.grid.len() {
        let m = q1.magnitude(i);
        if m > alpha1 {
            let s = if alpha1 > 0.0 { alpha1 / m } else { 0.0 };
            q1.u[i] *= s;
            q1.v[i] *= s;
        }
        let m = q2.magnitude(i);
        if m > alpha0 {
            let s = if alpha0 > 0.0 { alpha0 / m } else { 0.0 };
            q2.xx[i] *= s;
            q2.yy[i] *= s;
            q2.xy[i] *= s;
        }
    }
}

/// Resolvent of the TGV conjugate: projection onto the dual balls.
pub fn prox_tgv_dual(
    q1: &VectorField,
    q2: &SymTensorField,
    alpha1: f64,
    alpha0: f64,
) -> (VectorField, SymTensorField) {
    let mut a = q1.clone();
    let mut b = q2.clone();
    project_tgv_dual(&mut a, &mut b, alpha1, alpha0);
    (a, b)
}

/// Resolvent of the L1 conjugate: clamp to `[-1, 1]`.
pub fn prox_l1_dual(p: &ScalarField) -> ScalarField {
    p.map(|x| x.clamp(-1.0, 1.0))
}

/// Exact minimizer of `E(x, ·)` for fixed `x`.
///
/// L1: `λ_i = b / (Σ_k |x_i − d_k,i| + 1/(2W_ii))`. Pixels without valid
/// observations take the upper bound `2bW_ii`.
pub fn lambda_acs_update(
    x: &ScalarField,
    bundle: &ObservationBundle,
    params: &ModelParams,
) -> Result<ConfidenceField> {
    if !(params.b > 0.0) {
        return Err(Error::domain(format!("b must be positive, got {}", params.b)));
    }
    bundle.grid().check(x.grid)?;
    params.validate(bundle.grid())?;
    let res = residual_sums(x, bundle, params.fidelity);
    let b = params.b;
    let data = res
        .iter()
        .zip(&params.w.data)
        .map(|(&r, &w)| {
            let c = 0.5 / w;
            match params.fidelity {
                Fidelity::L1 => b / (r + c),
                // r λ² + c λ − b = 0
                Fidelity::L2 => {
                    if r > 0.0 {
                        positive_root(r, c, -b)
                    } else {
                        b / c
                    }
                }
            }
        })
        .collect();
    ConfidenceField::new(ScalarField { grid: x.grid, data })
}

/// Minimizer of `E(x, Λ) + ‖Λ − Λ_n‖²/(2ν)` over `Λ`.
///
/// L1: the positive root of `λ² − aλ − bν = 0` with
/// `a = λ_n − ν(Σ_k|x_i − d_k,i| + 1/(2W_ii))`.
pub fn lambda_ama_update(
    previous: &ConfidenceField,
    x: &ScalarField,
    bundle: &ObservationBundle,
    params: &ModelParams,
    nu: f64,
) -> Result<ConfidenceField> {
    if !(nu > 0.0) {
        return Err(Error::domain(format!("nu must be positive, got {nu}")));
    }
    if !(params.b > 0.0) {
        return Err(Error::domain(format!("b must be positive, got {}", params.b)));
    }
    bundle.grid().check(x.grid)?;
    bundle.grid().check(previous.grid())?;
    params.validate(bundle.grid())?;
    let res = residual_sums(x, bundle, params.fidelity);
    let b = params.b;
    let data = previous
        .values()
        .iter()
        .zip(res.iter().zip(&params.w.data))
        .map(|(&prev, (&r, &w))| {
            let c = 0.5 / w;
            match params.fidelity {
                Fidelity::L1 => {
                    let a = prev - nu * (r + c);
                    positive_root(1.0, -a, -b * nu)
                }
                // (νr + 1) λ² − (λ_n − νc) λ − bν = 0
                Fidelity::L2 => positive_root(nu * r + 1.0, nu * c - prev, -b * nu),
            }
        })
        .collect();
    ConfidenceField::new(ScalarField { grid: x.grid, data })
}

/// Resolvent `(Id + τ ∂G)⁻¹` of `G(Λ) = ½ tr(W⁻¹Λ) − b log det Λ`:
/// the positive root of `λ² + (τ/(2W_ii) − λ̃)λ − τb = 0`.
///
/// `shifted` is the unconstrained argument `λ̃` and may be any finite value.
pub fn lambda_pdhg_resolvent(
    shifted: &ScalarField,
    tau_lambda: f64,
    params: &ModelParams,
) -> Result<ConfidenceField> {
    if !(tau_lambda > 0.0) {
        return Err(Error::domain(format!("tau_lambda must be positive, got {tau_lambda}")));
    }
    params.validate(shifted.grid)?;
    let b = params.b;
    let data = shifted
        .data
        .iter()
        .zip(&params.w.data)
        .map(|(&lt, &w)| positive_root(1.0, tau_lambda * 0.5 / w - lt, -tau_lambda * b))
        .collect();
    ConfidenceField::new(ScalarField { grid: shifted.grid, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn single(x: f64, d: f64, w: f64, b: f64) -> (ScalarField, ObservationBundle, ModelParams) {
        let g = Grid::new(1, 1);
        let bundle = ObservationBundle::new(vec![Observation::dense(ScalarField::constant(g, d))]).unwrap();
        let mut params = ModelParams::with_defaults(g, 1.0, 1.0);
        params.w = ScalarField::constant(g, w);
        params.b = b;
        (ScalarField::constant(g, x), bundle, params)
    }

    #[test]
    fn nonconvexity_example_values() {
        let n = 16;
        let g = Grid::new(4, 4);
        let bundle = ObservationBundle::new(vec![Observation::dense(ScalarField::zeros(g))]).unwrap();
        let mut params = ModelParams::with_defaults(g, 1.0, 2.0);
        params.w = ScalarField::constant(g, 0.5);
        params.b = (E - 1.0) / (E + 2.0);
        let v = VectorField::zeros(g);

        let e0 = eval_energy(&ScalarField::zeros(g), &v, &ConfidenceField::constant(g, 1.0).unwrap(), &bundle, &params)
            .unwrap();
        assert_eq!(e0.total, n as f64);

        let e1 = eval_energy(
            &ScalarField::constant(g, 2.0),
            &v,
            &ConfidenceField::constant(g, 1.0 / E).unwrap(),
            &bundle,
            &params,
        )
        .unwrap();
        let expected = n as f64 * (3.0 / E + params.b);
        assert!((e1.total - expected).abs() < 1e-12);
    }

    #[test]
    fn dual_projections() {
        let g = Grid::new(1, 1);
        let q1 = VectorField { grid: g, u: vec![3.0], v: vec![4.0] };
        let q2 = SymTensorField::zeros(g);
        let (p, _) = prox_tgv_dual(&q1, &q2, 1.0, 1.0);
        assert!((p.u[0] - 0.6).abs() < 1e-15 && (p.v[0] - 0.8).abs() < 1e-15);
        let inside = VectorField { grid: g, u: vec![0.3], v: vec![0.4] };
        assert_eq!(prox_tgv_dual(&inside, &q2, 1.0, 1.0).0, inside);
        let (pp, _) = prox_tgv_dual(&p, &q2, 1.0, 1.0);
        assert_eq!(pp, p);

        let f = ScalarField::from_rows(&[vec![1.7, -0.3, -2.0]]).unwrap();
        assert_eq!(prox_l1_dual(&f).data, vec![1.0, -0.3, -1.0]);
    }

    #[test]
    fn tensor_projection_uses_doubled_off_diagonal() {
        let g = Grid::new(1, 1);
        let q1 = VectorField::zeros(g);
        let q2 = SymTensorField { grid: g, xx: vec![0.0], yy: vec![0.0], xy: vec![1.0] };
        let (_, t) = prox_tgv_dual(&q1, &q2, 1.0, 1.0);
        assert!((t.magnitude(0) - 1.0).abs() < 1e-15);
        assert!((t.xy[0] - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn acs_update_examples() {
        let (x, bundle, params) = single(0.0, 0.0, 1.0, 1.0);
        assert_eq!(lambda_acs_update(&x, &bundle, &params).unwrap().values()[0], 2.0);
        let (x, bundle, params) = single(1.5, 0.0, 1.0, 1.0);
        assert_eq!(lambda_acs_update(&x, &bundle, &params).unwrap().values()[0], 0.5);

        let (x, bundle, mut params) = single(1.5, 0.0, 1.0, 1.0);
        params.b = 0.0;
        assert!(matches!(lambda_acs_update(&x, &bundle, &params), Err(Error::Domain(_))));
    }

    #[test]
    fn acs_update_without_observations_returns_bound() {
        let g = Grid::new(2, 1);
        let bundle = ObservationBundle::new(vec![Observation::masked(
            ScalarField::constant(g, 4.0),
            vec![false, true],
        )])
        .unwrap();
        let mut params = ModelParams::with_defaults(g, 1.0, 1.0);
        params.w = ScalarField::from_rows(&[vec![0.3, 0.3]]).unwrap();
        params.b = 2.0;
        let lam = lambda_acs_update(&ScalarField::constant(g, 100.0), &bundle, &params).unwrap();
        assert!((lam.values()[0] - 1.2).abs() < 1e-15);
        assert!(lam.values()[1] < 1.2);
    }

    #[test]
    fn ama_update_examples() {
        let (x, bundle, params) = single(0.0, 0.0, 1.0, 1.0);
        let prev = ConfidenceField::constant(x.grid, 1.0).unwrap();
        let l = lambda_ama_update(&prev, &x, &bundle, &params, 1.0).unwrap().values()[0];
        let expected = (0.5 + (0.25f64 + 4.0).sqrt()) / 2.0;
        assert!((l - expected).abs() < 1e-14);
        assert!((l - 1.28078).abs() < 1e-5);

        let (x, bundle, params) = single(3.7, 1.2, 0.8, 0.6);
        let prev = ConfidenceField::constant(x.grid, 0.9).unwrap();
        let ama = lambda_ama_update(&prev, &x, &bundle, &params, 1e8).unwrap().values()[0];
        let acs = lambda_acs_update(&x, &bundle, &params).unwrap().values()[0];
        assert!(((ama - acs) / acs).abs() < 1e-6);

        assert!(lambda_ama_update(&prev, &x, &bundle, &params, 0.0).is_err());
    }

    #[test]
    fn pdhg_resolvent_examples() {
        let g = Grid::new(1, 1);
        let mut params = ModelParams::with_defaults(g, 1.0, 1.0);
        params.w = ScalarField::constant(g, 1.0);
        params.b = 1.0;
        let l = lambda_pdhg_resolvent(&ScalarField::constant(g, 1.0), 1.0, &params).unwrap();
        assert!((l.values()[0] - 1.28078).abs() < 1e-5);

        params.b = 1e-12;
        let l = lambda_pdhg_resolvent(&ScalarField::constant(g, 50.0), 1.0, &params).unwrap();
        assert!((l.values()[0] - 49.5).abs() < 1e-9);

        params.b = 1e-3;
        let l = lambda_pdhg_resolvent(&ScalarField::constant(g, -1e9), 1.0, &params).unwrap();
        assert!(l.values()[0] > 0.0);

        assert!(lambda_pdhg_resolvent(&ScalarField::constant(g, 1.0), -1.0, &params).is_err());
    }

    #[test]
    fn l2_updates_reduce_to_bound_at_zero_residual() {
        let (x, bundle, mut params) = single(2.0, 2.0, 0.25, 3.0);
        params.fidelity = Fidelity::L2;
        let l = lambda_acs_update(&x, &bundle, &params).unwrap().values()[0];
        assert!((l - 1.5).abs() < 1e-14);
        let prev = ConfidenceField::constant(x.grid, 0.2).unwrap();
        let a = lambda_ama_update(&prev, &x, &bundle, &params, 1e9).unwrap().values()[0];
        assert!((a - 1.5).abs() < 1e-6);
    }

    #[test]
    fn confidence_rejects_non_positive() {
        let g = Grid::new(2, 1);
        assert!(ConfidenceField::new(ScalarField::from_rows(&[vec![1.0, 0.0]]).unwrap()).is_err());
        assert!(ConfidenceField::constant(g, f64::NAN).is_err());
    }
}
