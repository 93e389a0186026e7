//! Runs every method on small synthetic bundles and prints RMSE and timing.
//!
//! `cargo run --release -p tgv-fusion --example desk_experiment [scene]`
//! with `scene` one of `boxes`, `orbit`, `urban` (default: all).

use std::time::Instant;

use tgv_fusion::fusion::{fuse, FusionSettings, Method, SolverKind, ViewSet};
use tgv_fusion::geometry::CameraIntrinsics;
use tgv_fusion::harness::noise::{add_noise_masked, NoiseKind, NoiseSpec};
use tgv_fusion::harness::scene::{
    default_boxes, make_boxes_scene, noisy_bundle, synth_camera_path, AnalyticScene, PathKind, ORBIT_STEP,
};
use tgv_fusion::Grid;

fn rmse(x: &[f64], gt: &[f64], mask: &[bool]) -> f64 {
    let (s, n) = x.iter().zip(gt).zip(mask).filter(|(_, &m)| m).fold((0.0, 0), |(s, n), ((a, b), _)| (s + (a - b).powi(2), n + 1));
    (s / n as f64).sqrt()
}

fn runs() -> Vec<(Method, Option<SolverKind>)> {
    vec![
        (Method::Median, None),
        (Method::Mean, None),
        (Method::Rof, None),
        (Method::L1, None),
        (Method::TgvFusion, None),
        (Method::L1Heuristic, None),
        (Method::RofAdapt, Some(SolverKind::Acs)),
        (Method::L1Adapt, Some(SolverKind::Acs)),
        (Method::AdaptHprior, Some(SolverKind::Acs)),
        (Method::AdaptHprior, Some(SolverKind::Ama)),
        (Method::AdaptHprior, Some(SolverKind::Pdhg)),
        (Method::AdaptHpriorG, Some(SolverKind::Acs)),
    ]
}

fn main() {
    let which = std::env::args().nth(1);
    let mut settings = FusionSettings::default();
    let env = |k: &str| std::env::var(k).ok().and_then(|v| v.parse::<f64>().ok());
    if let Some(v) = env("ALPHA1") {
        settings.alpha1 = v;
    }
    if let Some(v) = env("ALPHA0") {
        settings.alpha0 = v;
    }
    if let Some(v) = env("C") {
        settings.c = v;
    }
    if let Some(v) = env("TAU") {
        settings.tau = Some(v);
    }
    if let Some(v) = env("TAU_LAMBDA") {
        settings.tau_lambda = Some(v);
    }
    let grid = Grid::new(64, 64);
    let camera = CameraIntrinsics::virtual_camera(64, 64);
    let noise = |scale| NoiseSpec { kind: NoiseKind::Laplace, scale, seed: 7 };

    for scene in ["boxes", "orbit", "urban"] {
        if which.as_deref().is_some_and(|w| w != scene) {
            continue;
        }
        let (bundle, gt, gt_valid, intensity) = match scene {
            "boxes" => {
                let gt = make_boxes_scene(grid, &default_boxes(64, 3.0, [-1.0, 1.0, -1.0, 1.0]), 3.0).unwrap();
                let valid = vec![true; grid.len()];
                let b = noisy_bundle(&gt, &valid, 11, &noise(0.6)).unwrap();
                (b, gt.clone(), valid, gt.map(|d| d / 4.0))
            }
            _ => {
                let (s, kind, spacing, scale) = if scene == "orbit" {
                    (AnalyticScene::object(), PathKind::Orbit, ORBIT_STEP, env("NOISE").unwrap_or(0.06))
                } else {
                    (AnalyticScene::urban(), PathKind::Translation, 4.0, 6.0)
                };
                let poses = synth_camera_path(kind, 11, spacing).unwrap();
                let views = poses
                    .iter()
                    .enumerate()
                    .map(|(k, p)| {
                        let r = s.render(grid, &camera, p);
                        let d = add_noise_masked(&r.depth, &r.valid, &NoiseSpec { seed: 100 + k as u64, ..noise(scale) }).unwrap();
                        (d, r.valid)
                    })
                    .collect();
                let r = s.render(grid, &camera, &poses[5]);
                let set = ViewSet { views, poses, camera };
                (set.to_reference(5).unwrap(), r.depth, r.valid, r.intensity)
            }
        };
        let reference = if scene == "boxes" { 0 } else { 5 };
        let noisy = rmse(&bundle.observations()[reference].depth.data, &gt.data, &gt_valid);
        println!("== {scene}: reference-view rmse {noisy:.4}");
        for (m, s) in runs() {
            let t = Instant::now();
            let out = fuse(&bundle, &camera, Some(&intensity), m, s, &settings).unwrap();
            println!(
                "{:>16} {:>5} rmse {:.4}  {:>6.2}s  {}",
                m.name(),
                s.map(|s| s.to_string()).unwrap_or_default(),
                rmse(&out.depth.data, &gt.data, &gt_valid),
                t.elapsed().as_secs_f64(),
                out.verdict().map(|v| v.to_string()).unwrap_or_default()
            );
        }
    }
}
