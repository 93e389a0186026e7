#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tgv_fusion::energy::ObservationBundle;
use tgv_fusion::harness::noise::{NoiseKind, NoiseSpec};
use tgv_fusion::harness::scene::{default_boxes, make_boxes_scene, noisy_bundle};
use tgv_fusion::{Grid, ScalarField, SymTensorField, VectorField};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_scalar(grid: Grid, rng: &mut ChaCha8Rng) -> ScalarField {
    ScalarField::from_fn(grid, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_vector(grid: Grid, rng: &mut ChaCha8Rng) -> VectorField {
    VectorField {
        grid,
        u: (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        v: (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
    }
}

pub fn random_tensor(grid: Grid, rng: &mut ChaCha8Rng) -> SymTensorField {
    let mut ch = || (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    SymTensorField { grid, xx: ch(), yy: ch(), xy: ch() }
}

/// Boxes scene scaled to `size`, background 3 with unit steps.
pub fn boxes_truth(size: usize) -> ScalarField {
    make_boxes_scene(Grid::new(size, size), &default_boxes(size, 3.0, [-1.0, 1.0, -1.0, 1.0]), 3.0).unwrap()
}

/// `k` Laplace-noised aligned copies of the boxes scene.
pub fn boxes_bundle(size: usize, k: usize, scale: f64, seed: u64) -> (ScalarField, ObservationBundle) {
    let truth = boxes_truth(size);
    let valid = vec![true; truth.grid.len()];
    let bundle = noisy_bundle(&truth, &valid, k, &NoiseSpec { kind: NoiseKind::Laplace, scale, seed }).unwrap();
    (truth, bundle)
}

pub fn rms(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Per-pixel L1 confidence objective `λ(r + c) − b ln λ`, with `c = 1/(2W)`.
pub fn acs_objective(l: f64, r: f64, c: f64, b: f64) -> f64 {
    l * (r + c) - b * l.ln()
}

/// Minimum over `points` equally spaced samples of `f` on `[lo, hi]`.
pub fn grid_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> f64 {
    (0..points).map(|i| f(lo + (hi - lo) * i as f64 / (points - 1) as f64)).fold(f64::INFINITY, f64::min)
}

/// One-pixel problem with a single observation `d`, `W = w`, `b`.
pub fn one_pixel(
    d: &[f64],
    w: f64,
    b: f64,
) -> (tgv_fusion::energy::ObservationBundle, tgv_fusion::energy::ModelParams) {
    use tgv_fusion::energy::{ModelParams, Observation, ObservationBundle};
    let g = Grid::new(1, 1);
    let bundle =
        ObservationBundle::new(d.iter().map(|&d| Observation::dense(ScalarField::constant(g, d))).collect()).unwrap();
    let mut params = ModelParams::with_defaults(g, 1.0, 1.0);
    params.w = ScalarField::constant(g, w);
    params.b = b;
    (bundle, params)
}
