//! Discrete differential operators on pixel grids.
//!
//! Forward differences with unit spacing and Neumann boundaries: the
//! horizontal difference vanishes in the last column and the vertical one in
//! the last row. Every divergence here is the exact negative adjoint of the
//! corresponding gradient under the inner products of [`GridVector`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::field::{Grid, GridVector, ScalarField, SymTensorField, VectorField};

/// Forward difference along columns (`du`) and rows (`dv`) into preallocated buffers.
pub(crate) fn forward_diff(grid: Grid, x: &[f64], du: &mut [f64], dv: &mut [f64]) {
    let (w, h) = (grid.width, grid.height);
    for r in 0..h {
        let row = r * w;
        for c in 0..w {
            let i = row + c;
            du[i] = if c + 1 < w { x[i + 1] - x[i] } else { 0.0 };
            dv[i] = if r + 1 < h { x[i + w] - x[i] } else { 0.0 };
        }
    }
}

/// `out = div(pu, pv)`, the negative adjoint of [`forward_diff`].
pub(crate) fn backward_div(grid: Grid, pu: &[f64], pv: &[f64], out: &mut [f64]) {
    let (w, h) = (grid.width, grid.height);
    for r in 0..h {
        let row = r * w;
        for c in 0..w {
            let i = row + c;
            let mut s = 0.0;
            if c + 1 < w {
                s += pu[i];
            }
            if c > 0 {
                s -= pu[i - 1];
            }
            if r + 1 < h {
                s += pv[i];
            }
            if r > 0 {
                s -= pv[i - w];
            }
            out[i] = s;
        }
    }
}

pub fn grad(x: &ScalarField) -> VectorField {
    let mut out = VectorField::zeros(x.grid);
    forward_diff(x.grid, &x.data, &mut out.u, &mut out.v);
    out
}

/// Discrete divergence, `div = -gradᵀ`.
pub fn div(p: &VectorField) -> ScalarField {
    let mut out = ScalarField::zeros(p.grid);
    backward_div(p.grid, &p.u, &p.v, &mut out.data);
    out
}

pub(crate) fn sym_grad_into(v: &VectorField, out: &mut SymTensorField) {
    let grid = v.grid;
    let n = grid.len();
    let mut uu = vec![0.0; n];
    let mut uv = vec![0.0; n];
    let mut vu = vec![0.0; n];
    let mut vv = vec![0.0; n];
    forward_diff(grid, &v.u, &mut uu, &mut uv);
    forward_diff(grid, &v.v, &mut vu, &mut vv);
    for i in 0..n {
        out.xx[i] = uu[i];
        out.yy[i] = vv[i];
        out.xy[i] = 0.5 * (uv[i] + vu[i]);
    }
}

/// Symmetrized gradient `(∇v + ∇vᵀ)/2`.
pub fn sym_grad(v: &VectorField) -> SymTensorField {
    let mut out = SymTensorField::zeros(v.grid);
    sym_grad_into(v, &mut out);
    out
}

pub(crate) fn sym_div_into(t: &SymTensorField, out: &mut VectorField) {
    let grid = t.grid;
    backward_div(grid, &t.xx, &t.xy, &mut out.u);
    backward_div(grid, &t.xy, &t.yy, &mut out.v);
}

/// Negative adjoint of [`sym_grad`] with the `xy` channel weighted twice.
pub fn sym_div(t: &SymTensorField) -> VectorField {
    let mut out = VectorField::zeros(t.grid);
    sym_div_into(t, &mut out);
    out
}

/// The second-order TGV operator `(x, v) ↦ (∇x − v, ε(v))`.
pub fn tgv_apply(x: &ScalarField, v: &VectorField) -> Result<(VectorField, SymTensorField)> {
    x.grid.check(v.grid)?;
    let mut first = grad(x);
    for i in 0..x.grid.len() {
        first.u[i] -= v.u[i];
        first.v[i] -= v.v[i];
    }
    Ok((first, sym_grad(v)))
}

/// Exact adjoint of [`tgv_apply`]: `(q1, q2) ↦ (−div q1, −q1 − sym_div q2)`.
pub fn tgv_adjoint(q1: &VectorField, q2: &SymTensorField) -> Result<(ScalarField, VectorField)> {
    q1.grid.check(q2.grid)?;
    let mut x = div(q1);
    x.scale(-1.0);
    let mut v = sym_div(q2);
    for i in 0..q1.grid.len() {
        v.u[i] = -q1.u[i] - v.u[i];
        v.v[i] = -q1.v[i] - v.v[i];
    }
    Ok((x, v))
}

/// Power-iteration estimate of the induced 2-norm of a linear operator.
///
/// `start` fixes the shape of the domain; its contents are replaced by a
/// seeded random vector. The returned value is `‖A z‖` for the final unit
/// iterate `z`, so it approaches the true norm from below.
pub fn operator_norm<D, R>(
    start: D,
    apply: impl Fn(&D) -> R,
    adjoint: impl Fn(&R) -> D,
    iters: usize,
    seed: u64,
) -> f64
where
    D: GridVector,
    R: GridVector,
{
    let iters = iters.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = start;
    for ch in z.channels_mut() {
        ch.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
    }
    let n = z.norm();
    if n == 0.0 {
        return 0.0;
    }
    z.scale(1.0 / n);
    for _ in 0..iters {
        let mut next = adjoint(&apply(&z));
        let n = next.norm();
        if n == 0.0 {
            return 0.0;
        }
        next.scale(1.0 / n);
        z = next;
    }
    apply(&z).norm()
}

/// Norm of the forward-difference gradient on `grid`.
pub fn grad_norm(grid: Grid, iters: usize, seed: u64) -> f64 {
    operator_norm(ScalarField::zeros(grid), grad, |p| {
        let mut d = div(p);
        d.scale(-1.0);
        d
    }, iters, seed)
}

/// Norm of the TGV operator [`tgv_apply`] on `grid`.
pub fn tgv_norm(grid: Grid, iters: usize, seed: u64) -> f64 {
    operator_norm(
        (ScalarField::zeros(grid), VectorField::zeros(grid)),
        |(x, v)| tgv_apply(x, v).expect("shared grid"),
        |(q1, q2)| tgv_adjoint(q1, q2).expect("shared grid"),
        iters,
        seed,
    )
}
