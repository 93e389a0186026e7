use std::io::Write;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::NormalMap;

/// Values paired with their validity mask.
#[derive(Debug, Clone, Copy)]
pub struct Masked<'a> {
    pub values: &'a ScalarField,
    pub valid: &'a [bool],
}

impl<'a> Masked<'a> {
    pub fn new(values: &'a ScalarField, valid: &'a [bool]) -> Self {
        Self { values, valid }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MetricsReport {
    pub rmse: f64,
    pub zmae: f64,
    pub nmae_degrees: f64,
    /// Geometric mean of `rmse`, `zmae` and `nmae_degrees`.
    pub z_avg: f64,
    /// `(n, percentage of disparity errors above n)`.
    pub out: Vec<(f64, f64)>,
    pub d_avg: f64,
    pub density: f64,
}

/// `f · baseline / depth`; invalid pixels stay invalid with value `0.0`.
pub fn depth_to_disparity(depth: &ScalarField, valid: &[bool], f: f64, baseline: f64) -> Result<ScalarField> {
    let mut out = ScalarField::zeros(depth.grid);
    for (i, (&d, &ok)) in depth.data.iter().zip(valid).enumerate() {
        if !ok {
            continue;
        }
        if !(d > 0.0) {
            return Err(Error::domain(format!("nonpositive depth {d} at valid pixel {i}")));
        }
        out.data[i] = f * baseline / d;
    }
    Ok(out)
}

fn geometric_mean(values: &[f64]) -> f64 {
    if values.iter().any(|&v| v <= 0.0) {
        return 0.0;
    }
    (values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp()
}

/// Depth, normal and disparity errors over mutually valid pixels.
///
/// Depth metrics use pixels valid in both depth masks; `density` is the
/// share of ground-truth-valid pixels the estimate covers.
pub fn evaluate(
    estimate: Masked<'_>,
    truth: Masked<'_>,
    normals_estimate: &NormalMap,
    normals_truth: &NormalMap,
    disparity_estimate: Masked<'_>,
    disparity_truth: Masked<'_>,
    thresholds: &[f64],
) -> Result<MetricsReport> {
    let grid = truth.values.grid;
    for g in [estimate.values.grid, disparity_estimate.values.grid, disparity_truth.values.grid] {
        grid.check(g)?;
    }
    let n = grid.len();
    if estimate.valid.len() != n || truth.valid.len() != n || normals_estimate.len() != n || normals_truth.len() != n {
        return Err(Error::domain("masks and normal maps must cover the grid"));
    }

    let (mut sq, mut abs, mut count, mut truth_count) = (0.0, 0.0, 0usize, 0usize);
    for i in 0..n {
        if truth.valid[i] {
            truth_count += 1;
            if estimate.valid[i] {
                let e = estimate.values.data[i] - truth.values.data[i];
                sq += e * e;
                abs += e.abs();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyReport("no pixel is valid in both estimate and ground truth".into()));
    }

    let (mut angle, mut normal_count) = (0.0, 0usize);
    for (a, b) in normals_estimate.iter().zip(normals_truth) {
        if let (Some(a), Some(b)) = (a, b) {
            angle += a.cross(b).norm().atan2(a.dot(b)).to_degrees();
            normal_count += 1;
        }
    }

    let mut disp_errors = Vec::new();
    for i in 0..n {
        if disparity_estimate.valid[i] && disparity_truth.valid[i] {
            disp_errors.push((disparity_estimate.values.data[i] - disparity_truth.values.data[i]).abs());
        }
    }
    let disp_n = disp_errors.len().max(1) as f64;
    let out = thresholds
        .iter()
        .map(|&t| (t, 100.0 * disp_errors.iter().filter(|&&e| e > t).count() as f64 / disp_n))
        .collect();

    let rmse = (sq / count as f64).sqrt();
    let zmae = abs / count as f64;
    let nmae_degrees = if normal_count > 0 { angle / normal_count as f64 } else { 0.0 };
    Ok(MetricsReport {
        rmse,
        zmae,
        nmae_degrees,
        z_avg: geometric_mean(&[rmse, zmae, nmae_degrees]),
        out,
        d_avg: disp_errors.iter().sum::<f64>() / disp_n,
        density: 100.0 * count as f64 / truth_count.max(1) as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Averaging {
    Arithmetic,
    Geometric,
}

impl Averaging {
    pub fn label(self) -> &'static str {
        match self {
            Averaging::Arithmetic => "arithmetic-mean",
            Averaging::Geometric => "geometric-mean",
        }
    }

    fn apply(self, v: &[f64]) -> f64 {
        match self {
            Averaging::Arithmetic => v.iter().sum::<f64>() / v.len() as f64,
            Averaging::Geometric => geometric_mean(v),
        }
    }
}

/// Field-wise average of reports sharing the same thresholds.
pub fn aggregate(reports: &[MetricsReport], how: Averaging) -> Result<MetricsReport> {
    let first = reports.first().ok_or_else(|| Error::EmptyReport("nothing to aggregate".into()))?;
    let col = |f: &dyn Fn(&MetricsReport) -> f64| how.apply(&reports.iter().map(f).collect::<Vec<_>>());
    let pct = |v: f64| v.clamp(0.0, 100.0);
    let out = (0..first.out.len()).map(|j| (first.out[j].0, pct(col(&|r| r.out[j].1)))).collect();
    Ok(MetricsReport {
        rmse: col(&|r| r.rmse),
        zmae: col(&|r| r.zmae),
        nmae_degrees: col(&|r| r.nmae_degrees),
        z_avg: col(&|r| r.z_avg),
        out,
        d_avg: col(&|r| r.d_avg),
        density: pct(col(&|r| r.density)),
    })
}

/// One CSV row per `(name, report)`, header derived from the first report.
pub fn write_metrics_csv<W: Write>(writer: W, rows: &[(String, MetricsReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["name".to_string(), "rmse".into(), "zmae".into(), "nmae_deg".into(), "z_avg".into()];
    if let Some((_, r)) = rows.first() {
        header.extend(r.out.iter().map(|(t, _)| format!("out_{t}")));
    }
    header.extend(["d_avg".to_string(), "density".into()]);
    w.write_record(&header)?;
    for (name, r) in rows {
        let mut rec = vec![name.clone()];
        rec.extend([r.rmse, r.zmae, r.nmae_degrees, r.z_avg].iter().map(f64::to_string));
        rec.extend(r.out.iter().map(|(_, p)| p.to_string()));
        rec.extend([r.d_avg.to_string(), r.density.to_string()]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
