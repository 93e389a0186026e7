//! Acceptance criteria 1–13. Each test prints one `PASS`/`FAIL` line to the
//! real stdout (bypassing libtest capture) and then asserts.

mod common;

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use common::*;
use nalgebra::Vector3;
use rand::Rng;
use std::f64::consts::E;
use tgv_fusion::energy::{
    eval_energy, lambda_acs_update, lambda_ama_update, lambda_pdhg_resolvent, ConfidenceField, ModelParams, Observation,
    ObservationBundle, Regularizer,
};
use tgv_fusion::fusion::{fuse, FusionSettings, Method, SolverKind, ViewSet};
use tgv_fusion::geometry::{reproject, CameraIntrinsics, Pose};
use tgv_fusion::grid::{div, grad, sym_div, sym_grad, tgv_adjoint, tgv_apply};
use tgv_fusion::harness::baseline::{baseline_fuse, BaselineKind};
use tgv_fusion::harness::noise::{add_noise_masked, NoiseKind, NoiseSpec};
use tgv_fusion::harness::scene::{
    default_boxes, make_boxes_scene, synth_camera_path, AnalyticScene, PathKind, ORBIT_STEP,
};
use tgv_fusion::solvers::{
    acs, ama, compute_steps, pdhg_fixed, AlternatingConfig, AlternatingOutput, PdhgConfig, ProximalSchedule, Verdict,
};
use tgv_fusion::{Grid, GridVector, ScalarField, VectorField};

fn report(n: u32, what: &str, ok: bool, detail: String, start: Instant) {
    let line = format!(
        "{} criterion {n}: {what} ({detail}; {:.2}s)\n",
        if ok { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(ok, "{}", line.trim_end());
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn criterion_01_adjointness() {
    let start = Instant::now();
    let g = Grid::new(16, 16);
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let mut r = rng(seed);
        let x = random_scalar(g, &mut r);
        let v = random_vector(g, &mut r);
        let p = random_vector(g, &mut r);
        let q = random_tensor(g, &mut r);
        worst = worst.max(rel_gap(grad(&x).dot(&p), -x.dot(&div(&p))));
        worst = worst.max(rel_gap(sym_grad(&v).dot(&q), -v.dot(&sym_div(&q))));
        let lhs = tgv_apply(&x, &v).unwrap().dot(&(p.clone(), q.clone()));
        let rhs = (x, v).dot(&tgv_adjoint(&p, &q).unwrap());
        worst = worst.max(rel_gap(lhs, rhs));
    }
    report(1, "adjointness of grad/div, sym_grad/sym_div, M/Mᵀ", worst <= 1e-10, format!("max relative gap {worst:.2e}"), start);
}

#[test]
fn criterion_02_closed_form_lambda_oracles() {
    let start = Instant::now();
    let mut r = rng(2);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let (w, b) = (r.random_range(0.05..5.0), r.random_range(0.05..5.0));
        let d: Vec<f64> = (0..r.random_range(1..4)).map(|_| r.random_range(-5.0..5.0)).collect();
        let x = r.random_range(-5.0..5.0);
        let (bundle, params) = one_pixel(&d, w, b);
        let g = bundle.grid();
        let xf = ScalarField::constant(g, x);
        let res: f64 = d.iter().map(|d| (x - d).abs()).sum();
        let c = 0.5 / w;

        let l = lambda_acs_update(&xf, &bundle, &params).unwrap().values()[0];
        let f = |l: f64| acs_objective(l, res, c, b);
        worst = worst.max(f(l) - grid_min(f, 1e-6, 3.0 * b * w, 10_000));

        let (prev, nu) = (r.random_range(0.01..5.0), r.random_range(0.01..100.0));
        let prev_field = ConfidenceField::constant(g, prev).unwrap();
        let l = lambda_ama_update(&prev_field, &xf, &bundle, &params, nu).unwrap().values()[0];
        let f = |l: f64| acs_objective(l, res, c, b) + (l - prev).powi(2) / (2.0 * nu);
        worst = worst.max(f(l) - grid_min(f, 1e-6, 2.0 * b * w + prev + 1.0, 10_000));

        let (shifted, tau) = (r.random_range(-10.0..10.0), r.random_range(0.01..10.0));
        let l = lambda_pdhg_resolvent(&ScalarField::constant(g, shifted), tau, &params).unwrap().values()[0];
        let f = |l: f64| l * c - b * l.ln() + (l - shifted).powi(2) / (2.0 * tau);
        worst = worst.max(f(l) - grid_min(f, 1e-6, shifted.abs() + 2.0 * b * w + 2.0 * (tau * b).sqrt() + 1.0, 10_000));
    }
    report(2, "ACS, AMA and resolvent updates beat grid search", worst <= 1e-9, format!("max excess {worst:.2e}"), start);
}

#[test]
fn criterion_03_nonconvexity_witness() {
    let start = Instant::now();
    let g = Grid::new(4, 4);
    let n = g.len() as f64;
    let bundle = ObservationBundle::new(vec![Observation::dense(ScalarField::zeros(g))]).unwrap();
    let mut params = ModelParams::with_defaults(g, 1.0, 1.0);
    params.w = ScalarField::constant(g, 0.5);
    params.b = (E - 1.0) / (E + 2.0);
    let v = VectorField::zeros(g);
    let e = |x: f64, l: f64| {
        eval_energy(&ScalarField::constant(g, x), &v, &ConfidenceField::constant(g, l).unwrap(), &bundle, &params)
            .unwrap()
            .total
    };
    let (e0, e1) = (e(0.0, 1.0), e(2.0, 1.0 / E));
    let margin = e(1.0, 0.5 * (1.0 + 1.0 / E)) - 0.5 * (e0 + e1);
    report(3, "nonconvexity witness", e0 == n && margin > 0.0, format!("E(z0) = {e0}, midpoint margin {margin:.4}"), start);
}

struct AcsRun {
    bundle: ObservationBundle,
    params: ModelParams,
    cfg: AlternatingConfig,
    out: AlternatingOutput,
    seconds: f64,
}

fn acs_run() -> &'static AcsRun {
    static RUN: OnceLock<AcsRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let (_, bundle) = boxes_bundle(64, 11, 0.6, 7);
        let params = ModelParams::with_defaults(bundle.grid(), 0.6, 1.2);
        let cfg = AlternatingConfig { outer_iters: 500, inner_iters: 10, ..Default::default() };
        let t = Instant::now();
        let out = acs(&bundle, &params, &cfg).unwrap();
        AcsRun { bundle, params, cfg, out, seconds: t.elapsed().as_secs_f64() }
    })
}

#[test]
fn criterion_04_boundedness_and_lambda_bound() {
    let start = Instant::now();
    let run = acs_run();
    let lower = eval_energy(&run.out.primal.x, &run.out.primal.v, &run.out.lambda, &run.bundle, &run.params).unwrap().lower_bound;
    let bound = run.params.confidence_bound() + 1e-12;
    let records = &run.out.trace.records;
    let min_e = records.iter().map(|r| r.energy).fold(f64::INFINITY, f64::min);
    let max_l = records.iter().map(|r| r.lambda_max).fold(0.0, f64::max);
    let ok = records.len() == 500 && min_e >= lower && max_l <= bound && run.out.lambda.max() <= bound;
    report(
        4,
        "ACS energy above lower bound, Λ below 2b·max W",
        ok,
        format!("{} iterates, min E {min_e:.3} ≥ {lower:.3}, max λ {max_l:.6} ≤ {:.6}, ACS {:.1}s", records.len(), bound, run.seconds),
        start,
    );
}

#[test]
fn criterion_05_acs_monotonicity() {
    let start = Instant::now();
    let e = acs_run().out.trace.energies();
    let worst = e.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    report(5, "ACS energy nonincreasing", worst <= 1e-8, format!("largest increase {worst:.2e} over {} steps", e.len() - 1), start);
}

#[test]
fn criterion_06_acs_ama_equivalence() {
    let start = Instant::now();
    let run = acs_run();
    let big = ProximalSchedule::constant(1e8);
    let out = ama(&run.bundle, &run.params, &run.cfg, big, big).unwrap();
    let gap = rms(&out.primal.x.data, &run.out.primal.x.data);
    report(6, "AMA with μ = ν = 1e8 matches ACS", gap <= 1e-4, format!("RMS gap {gap:.2e}"), start);
}

#[test]
fn criterion_07_weighted_median_oracle() {
    let start = Instant::now();
    let g = Grid::new(32, 32);
    let mut r = rng(7);
    let obs: Vec<Observation> = (0..5).map(|_| Observation::dense(random_scalar(g, &mut r))).collect();
    let bundle = ObservationBundle::new(obs).unwrap();
    let lam = ConfidenceField::new(ScalarField::from_fn(g, |_, _| r.random_range(0.2..1.5))).unwrap();
    let params = ModelParams::with_defaults(g, 0.0, 0.0);
    let out = pdhg_fixed(&bundle, &lam, &params, &PdhgConfig { max_iters: 20000, record_energy: false, ..Default::default() }).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..g.len() {
        // brute force over the samples: minimizers of Σ_k λ_i |x − d_k|
        let d: Vec<f64> = bundle.iter().map(|o| o.depth.data[i]).collect();
        let cost = |x: f64| d.iter().map(|dk| lam.values()[i] * (x - dk).abs()).sum::<f64>();
        let best = d.iter().map(|&x| cost(x)).fold(f64::INFINITY, f64::min);
        let minimizers: Vec<f64> = d.iter().cloned().filter(|&x| cost(x) <= best + 1e-12).collect();
        let lo = minimizers.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = minimizers.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let x = out.primal.x.data[i];
        worst = worst.max((lo - x).max(x - hi).max(0.0));
    }
    report(7, "α = 0 recovers the weighted median", worst <= 1e-3, format!("max distance to interval {worst:.2e}"), start);
}

/// Largest in-box deviation from the background after TV-L1 with uniform `c`.
fn box_deviations(truth: &ScalarField, c: f64, boxes: &[tgv_fusion::harness::scene::BoxSpec], background: f64) -> Vec<f64> {
    let g = truth.grid;
    let bundle = ObservationBundle::new(vec![Observation::dense(truth.clone())]).unwrap();
    let mut params = ModelParams::with_defaults(g, 1.0, 0.0);
    params.regularizer = Regularizer::Tv;
    let lam = ConfidenceField::constant(g, c).unwrap();
    let cfg = PdhgConfig { max_iters: 2000, tau: Some(0.05), record_energy: false, ..Default::default() };
    let x = pdhg_fixed(&bundle, &lam, &params, &cfg).unwrap().primal.x;
    boxes
        .iter()
        .map(|b| {
            let mut dev: f64 = 0.0;
            for r in b.row..b.row + b.side {
                for col in b.col..b.col + b.side {
                    dev = dev.max((x.get(r, col) - background).abs());
                }
            }
            dev / (b.depth - background).abs()
        })
        .collect()
}

#[test]
fn criterion_08_scale_space_ordering() {
    let start = Instant::now();
    let boxes = default_boxes(128, 3.0, [-1.0, 1.0, -1.0, 1.0]);
    let truth = make_boxes_scene(Grid::new(128, 128), &boxes, 3.0).unwrap();
    // bisect the largest c at which each box has vanished
    let threshold = |which: usize| {
        let (mut lo, mut hi) = (0.01, 2.0);
        for _ in 0..10 {
            let mid = 0.5 * (lo + hi);
            if box_deviations(&truth, mid, &boxes, 3.0)[which] < 0.1 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let small = boxes.iter().position(|b| b.side == 8).unwrap();
    let large = boxes.iter().position(|b| b.side == 32).unwrap();
    let (ts, tl) = (threshold(small), threshold(large));
    report(8, "8-px box vanishes at higher c than 32-px box", ts > tl, format!("c*(8) = {ts:.4}, c*(32) = {tl:.4}"), start);
}

fn masked_rmse(x: &[f64], gt: &[f64], mask: &[bool]) -> f64 {
    let (s, n) = x.iter().zip(gt).zip(mask).filter(|(_, &m)| m).fold((0.0, 0usize), |(s, n), ((a, b), _)| (s + (a - b).powi(2), n + 1));
    (s / n as f64).sqrt()
}

/// Eleven noisy views of an analytic scene reprojected into the middle view.
fn analytic_bundle(
    scene: &AnalyticScene,
    kind: PathKind,
    spacing: f64,
    noise: f64,
) -> (ObservationBundle, CameraIntrinsics, ScalarField, Vec<bool>, ScalarField) {
    let grid = Grid::new(64, 64);
    let camera = CameraIntrinsics::virtual_camera(64, 64);
    let poses = synth_camera_path(kind, 11, spacing).unwrap();
    let views = poses
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let r = scene.render(grid, &camera, p);
            let spec = NoiseSpec { kind: NoiseKind::Laplace, scale: noise, seed: 100 + k as u64 };
            (add_noise_masked(&r.depth, &r.valid, &spec).unwrap(), r.valid)
        })
        .collect();
    let truth = scene.render(grid, &camera, &poses[5]);
    let set = ViewSet { views, poses, camera };
    (set.to_reference(5).unwrap(), camera, truth.depth, truth.valid, truth.intensity)
}

#[test]
fn criterion_09_fusion_quality_ordering() {
    let start = Instant::now();
    let (bundle, camera, gt, valid, intensity) = analytic_bundle(&AnalyticScene::object(), PathKind::Orbit, ORBIT_STEP, 0.6);
    let reference = masked_rmse(&bundle.observations()[5].depth.data, &gt.data, &valid);
    let median = masked_rmse(&baseline_fuse(&bundle, BaselineKind::Median).0.data, &gt.data, &valid);
    let fused = fuse(&bundle, &camera, Some(&intensity), Method::AdaptHprior, Some(SolverKind::Acs), &FusionSettings::default()).unwrap();
    let adapt = masked_rmse(&fused.depth.data, &gt.data, &valid);
    report(
        9,
        "RMSE adapt-hprior < median < reference view",
        adapt < median && median < reference,
        format!("{adapt:.4} < {median:.4} < {reference:.4}"),
        start,
    );
}

#[test]
fn criterion_10_step_size_validity() {
    let start = Instant::now();
    let mut r = rng(10);
    let mut ok = true;
    for _ in 0..1000 {
        let k = r.random_range(1..64);
        let (nm, nl, tau) = (10f64.powf(r.random_range(-3.0..3.0)), 10f64.powf(r.random_range(-3.0..3.0)), 10f64.powf(r.random_range(-4.0..2.0)));
        let s = compute_steps(k, nm, nl, tau).unwrap();
        let limit = 1.0 / (k as f64 + 1.0);
        ok &= s.sigma_q * s.tau * nm * nm <= limit * (1.0 + 1e-12) && s.sigma_p * s.tau * nl * nl <= limit * (1.0 + 1e-12);
    }
    report(10, "step sizes satisfy both bounds", ok, "1000 draws".into(), start);
}

#[test]
fn criterion_11_reprojection_oracles() {
    let start = Instant::now();
    let g = Grid::new(33, 25);
    let cam = CameraIntrinsics::new(40.0, 16.0, 12.0).unwrap();
    let valid = vec![true; g.len()];
    let mut r = rng(11);
    let depth = ScalarField::from_fn(g, |_, _| r.random_range(1.0..9.0));
    let (same, mask) = reproject(&depth, &valid, &Pose::identity(), &cam);
    let identity_ok = mask.iter().all(|&m| m) && same == depth;

    let plane = ScalarField::constant(g, 5.0);
    let (adv, amask) = reproject(&plane, &valid, &Pose::from_translation(Vector3::new(0.0, 0.0, -1.0)), &cam);
    let centre = g.index(12, 16);
    let advance_err = (adv.data[centre] - 4.0).abs();

    let mut round_trip: f64 = 0.0;
    for (z, t) in [(4.0, Vector3::new(3.0 * 4.0 / cam.f, 0.0, 0.0)), (7.0, Vector3::new(0.0, 0.0, 0.5))] {
        let src = ScalarField::constant(g, z);
        let pose = Pose::from_translation(t);
        let (fwd, fmask) = reproject(&src, &valid, &pose, &cam);
        let (back, bmask) = reproject(&fwd, &fmask, &pose.inverse(), &cam);
        for i in (0..g.len()).filter(|&i| bmask[i]) {
            round_trip = round_trip.max((back.data[i] - src.data[i]).abs());
        }
    }
    let ok = identity_ok && amask[centre] && advance_err < 1e-6 && round_trip < 1e-6;
    report(11, "reprojection identity, plane advance, round trip", ok, format!("advance error {advance_err:.1e}, round-trip error {round_trip:.1e}"), start);
}

#[test]
fn criterion_12_semiconvexity() {
    let start = Instant::now();
    let g = Grid::new(8, 8);
    let omega = (g.len() as f64).sqrt();
    let mut r = rng(12);
    let bundle = ObservationBundle::new(vec![Observation::dense(random_scalar(g, &mut r))]).unwrap();
    let params = ModelParams::with_defaults(g, 1.0, 1.0);
    let v = VectorField::zeros(g);
    let augmented = |x: &ScalarField, l: &ConfidenceField| {
        let fid = eval_energy(x, &v, l, &bundle, &params).unwrap().fidelity_term;
        fid + 0.5 * omega * (x.dot(x) + l.as_field().dot(l.as_field()))
    };
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let (x0, x1) = (random_scalar(g, &mut r), random_scalar(g, &mut r));
        let l0 = ConfidenceField::new(ScalarField::from_fn(g, |_, _| r.random_range(0.01..3.0))).unwrap();
        let l1 = ConfidenceField::new(ScalarField::from_fn(g, |_, _| r.random_range(0.01..3.0))).unwrap();
        let t: f64 = r.random_range(0.0..1.0);
        let mix = |a: &[f64], b: &[f64]| ScalarField::from_vec(g, a.iter().zip(b).map(|(a, b)| t * a + (1.0 - t) * b).collect()).unwrap();
        let xm = mix(&x0.data, &x1.data);
        let lm = ConfidenceField::new(mix(l0.values(), l1.values())).unwrap();
        let chord = t * augmented(&x0, &l0) + (1.0 - t) * augmented(&x1, &l1);
        worst = worst.max(augmented(&xm, &lm) - chord);
    }
    report(12, "√N-augmented fidelity is convex along segments", worst <= 1e-9, format!("max violation {worst:.2e}"), start);
}

#[test]
fn criterion_13_biconvex_reporting() {
    let start = Instant::now();
    let (bundle, camera, _, _, intensity) = analytic_bundle(&AnalyticScene::urban(), PathKind::Translation, 4.0, 6.0);
    let settings = FusionSettings { alpha1: 0.02, alpha0: 0.04, ..FusionSettings::default() };
    let out = fuse(&bundle, &camera, Some(&intensity), Method::AdaptHprior, Some(SolverKind::Pdhg), &settings).unwrap();
    let trace = out.trace.as_ref().unwrap();
    let verdict = trace.verdict;
    let finite_state = out.depth.is_finite() && out.lambda.as_ref().unwrap().values().iter().all(|v| v.is_finite());
    let finite_trace = trace.records.iter().all(|r| r.energy.is_finite() && r.dx.is_finite() && r.dlambda.is_finite());
    let converged_ok = verdict != Verdict::Converged || {
        let (first, last) = (trace.records[0], *trace.records.last().unwrap());
        last.dlambda <= 1e-6 * first.dlambda && last.dx <= 1e-6 * first.dx
    };
    let ok = finite_trace && converged_ok && (finite_state || verdict == Verdict::Diverged);
    report(13, "joint PDHG reports a verdict without silent NaN", ok, format!("verdict {verdict} after {} iterations", trace.len()), start);
}
