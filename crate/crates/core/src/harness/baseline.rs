use crate::energy::ObservationBundle;
use crate::field::ScalarField;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Mean,
    /// Lower median for an even number of observations.
    Median,
}

/// Per-pixel mean or lower median of the valid observations. Pixels without
/// any valid observation are returned invalid with value `0.0`.
pub fn baseline_fuse(bundle: &ObservationBundle, kind: BaselineKind) -> (ScalarField, Vec<bool>) {
    let grid = bundle.grid();
    let mut out = ScalarField::zeros(grid);
    let mut valid = vec![false; grid.len()];
    let mut samples = Vec::with_capacity(bundle.len());
    for i in 0..grid.len() {
        samples.clear();
        samples.extend(bundle.iter().filter(|o| o.valid[i]).map(|o| o.depth.data[i]));
        if samples.is_empty() {
            continue;
        }
        valid[i] = true;
        out.data[i] = match kind {
            BaselineKind::Mean => samples.iter().sum::<f64>() / samples.len() as f64,
            BaselineKind::Median => {
                samples.sort_by(f64::total_cmp);
                samples[(samples.len() - 1) / 2]
            }
        };
    }
    (out, valid)
}
