use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::field::ScalarField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Laplace,
    Gaussian,
}

/// i.i.d. additive noise: Laplace with scale `b`, or Normal with standard
/// deviation `σ`, both given by `scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub scale: f64,
    pub seed: u64,
}

/// Laplace(0, b) by inversion of a uniform on (−½, ½).
fn laplace(rng: &mut ChaCha8Rng, b: f64) -> f64 {
    let u: f64 = rand::Rng::random_range(rng, -0.5..0.5);
    -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Noise samples for `n` pixels, drawn in row-major order.
pub fn noise_samples(n: usize, spec: &NoiseSpec) -> Result<Vec<f64>> {
    if !(spec.scale >= 0.0 && spec.scale.is_finite()) {
        return Err(Error::domain(format!("noise scale must be non-negative, got {}", spec.scale)));
    }
    if spec.scale == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok(match spec.kind {
        NoiseKind::Laplace => (0..n).map(|_| laplace(&mut rng, spec.scale)).collect(),
        NoiseKind::Gaussian => {
            let normal = Normal::new(0.0, spec.scale).map_err(|e| Error::domain(e.to_string()))?;
            (0..n).map(|_| normal.sample(&mut rng)).collect()
        }
    })
}

pub fn add_noise(d: &ScalarField, spec: &NoiseSpec) -> Result<ScalarField> {
    let noise = noise_samples(d.grid.len(), spec)?;
    Ok(ScalarField { grid: d.grid, data: d.data.iter().zip(noise).map(|(a, n)| a + n).collect() })
}

/// Like [`add_noise`] but leaves invalid pixels untouched. The noise drawn for
/// a pixel does not depend on the mask.
pub fn add_noise_masked(d: &ScalarField, valid: &[bool], spec: &NoiseSpec) -> Result<ScalarField> {
    let noise = noise_samples(d.grid.len(), spec)?;
    let data = d.data.iter().zip(noise).zip(valid).map(|((a, n), &ok)| if ok { a + n } else { *a }).collect();
    Ok(ScalarField { grid: d.grid, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;

    #[test]
    fn zero_scale_is_identity() {
        let d = ScalarField::from_fn(Grid::new(5, 5), |r, c| (r + c) as f64);
        let spec = NoiseSpec { kind: NoiseKind::Laplace, scale: 0.0, seed: 3 };
        assert_eq!(add_noise(&d, &spec).unwrap(), d);
    }

    #[test]
    fn laplace_mean_absolute_deviation_matches_scale() {
        let spec = NoiseSpec { kind: NoiseKind::Laplace, scale: 0.6, seed: 42 };
        let s = noise_samples(1_000_000, &spec).unwrap();
        let mad = s.iter().map(|x| x.abs()).sum::<f64>() / s.len() as f64;
        assert!((mad - 0.6).abs() < 0.006, "mad = {mad}");
    }

    #[test]
    fn gaussian_standard_deviation_matches_scale() {
        let spec = NoiseSpec { kind: NoiseKind::Gaussian, scale: 0.3, seed: 1 };
        let s = noise_samples(200_000, &spec).unwrap();
        let sd = (s.iter().map(|x| x * x).sum::<f64>() / s.len() as f64).sqrt();
        assert!((sd - 0.3).abs() < 0.003);
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let d = ScalarField::constant(Grid::new(16, 16), 2.0);
        let spec = NoiseSpec { kind: NoiseKind::Gaussian, scale: 0.5, seed: 9 };
        let a = add_noise(&d, &spec).unwrap();
        let b = add_noise(&d, &spec).unwrap();
        assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(add_noise(&d, &NoiseSpec { scale: -1.0, ..spec }).is_err());
    }
}
