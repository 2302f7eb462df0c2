//! Monotone rational-quadratic splines on `[-tail, tail]`, identity outside.
//!
//! A spline row is parameterized by `3K+1` raw values per transformed channel:
//! K bin widths, K bin heights (both via softmax with a minimum bin size) and
//! K+1 knot derivatives (via shifted softplus with a minimum). All-zero raw
//! parameters give the identity map with zero log-det.

use crate::diffcore::{ops, Result, Tensor};

pub const MIN_BIN_SIZE: f64 = 1e-3;
pub const MIN_DERIVATIVE: f64 = 1e-3;

/// Shift applied to raw derivative params so zero raw input maps to slope 1.
pub fn derivative_shift() -> f64 {
    ((1.0 - MIN_DERIVATIVE).exp() - 1.0).ln()
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Knot arrays from raw conditioner output (value path).
/// `raw` is `rows × (3K+1)` row-major; returns `rows × (K+1)` arrays.
pub fn knots_from_raw(
    raw: &[f64],
    rows: usize,
    k_bins: usize,
    tail: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let stride = 3 * k_bins + 1;
    let kp1 = k_bins + 1;
    let span = 2.0 * tail - k_bins as f64 * MIN_BIN_SIZE;
    let shift = derivative_shift();
    let mut xpos = vec![0.0; rows * kp1];
    let mut ypos = vec![0.0; rows * kp1];
    let mut der = vec![0.0; rows * kp1];
    let mut buf = vec![0.0; k_bins];
    for r in 0..rows {
        let row = &raw[r * stride..(r + 1) * stride];
        for (dst, src, pos0) in [
            (&mut xpos, &row[0..k_bins], r * kp1),
            (&mut ypos, &row[k_bins..2 * k_bins], r * kp1),
        ] {
            let m = src.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (b, &x) in buf.iter_mut().zip(src) {
                *b = (x - m).exp();
                z += *b;
            }
            dst[pos0] = -tail;
            let mut acc = -tail;
            for j in 0..k_bins {
                acc += buf[j] / z * span + MIN_BIN_SIZE;
                dst[pos0 + j + 1] = acc;
            }
        }
        for j in 0..kp1 {
            der[r * kp1 + j] = softplus(row[2 * k_bins + j] + shift) + MIN_DERIVATIVE;
        }
    }
    (xpos, ypos, der)
}

/// Largest k with xpos[k] <= x, clamped to a valid bin.
fn bin_index(x: f64, xpos: &[f64], k_bins: usize) -> usize {
    let mut k = 0;
    while k + 1 < k_bins && xpos[k + 1] <= x {
        k += 1;
    }
    k
}

/// Value-path forward of one element. Returns (y, d log|dy/dx|).
pub fn forward_value(x: f64, xpos: &[f64], ypos: &[f64], der: &[f64], k_bins: usize) -> (f64, f64) {
    if x < xpos[0] || x > xpos[k_bins] {
        return (x, 0.0);
    }
    let k = bin_index(x, xpos, k_bins);
    let w = xpos[k + 1] - xpos[k];
    let dy = ypos[k + 1] - ypos[k];
    let s = dy / w;
    let xi = (x - xpos[k]) / w;
    let xi1m = xi * (1.0 - xi);
    let e = der[k + 1] + der[k] - 2.0 * s;
    let den = s + e * xi1m;
    let y = ypos[k] + dy * (s * xi * xi + der[k] * xi1m) / den;
    let deriv = s * s * (der[k + 1] * xi * xi + 2.0 * s * xi1m + der[k] * (1.0 - xi) * (1.0 - xi))
        / (den * den);
    (y, deriv.ln())
}

/// Value-path inverse of one element. Returns (x, d log|dx/dy|).
pub fn inverse_value(y: f64, xpos: &[f64], ypos: &[f64], der: &[f64], k_bins: usize) -> (f64, f64) {
    if y < ypos[0] || y > ypos[k_bins] {
        return (y, 0.0);
    }
    let k = bin_index(y, ypos, k_bins);
    let w = xpos[k + 1] - xpos[k];
    let dy = ypos[k + 1] - ypos[k];
    let s = dy / w;
    let e = der[k + 1] + der[k] - 2.0 * s;
    let r = y - ypos[k];
    let a = dy * (s - der[k]) + r * e;
    let b = dy * der[k] - r * e;
    let c = -s * r;
    // stable quadratic root in [0, 1]
    let disc = (b * b - 4.0 * a * c).max(0.0);
    let xi = 2.0 * c / (-b - disc.sqrt());
    let xi = xi.clamp(0.0, 1.0);
    let x = xpos[k] + xi * w;
    let xi1m = xi * (1.0 - xi);
    let den = s + e * xi1m;
    let deriv = s * s * (der[k + 1] * xi * xi + 2.0 * s * xi1m + der[k] * (1.0 - xi) * (1.0 - xi))
        / (den * den);
    (x, -deriv.ln())
}

/// Graph-path knot computation mirroring `knots_from_raw`.
pub fn knots_graph(
    raw: &Tensor,
    k_bins: usize,
    tail: f64,
) -> Result<(Tensor, Tensor, Tensor)> {
    let rows = raw.rows();
    let span = 2.0 * tail - k_bins as f64 * MIN_BIN_SIZE;
    let left = Tensor::constant(vec![rows, 1], vec![-tail; rows]);
    let mut positions = Vec::with_capacity(2);
    for range in [(0, k_bins), (k_bins, 2 * k_bins)] {
        let raw_part = ops::slice_cols(raw, range.0, range.1)?;
        let widths = ops::affine(&ops::softmax_rows(&raw_part)?, span, MIN_BIN_SIZE);
        let cums = ops::add_scalar(&ops::cumsum_cols(&widths)?, -tail);
        positions.push(ops::concat_cols(&[left.clone(), cums])?);
    }
    let ypos = positions.pop().unwrap();
    let xpos = positions.pop().unwrap();
    let d_raw = ops::slice_cols(raw, 2 * k_bins, 3 * k_bins + 1)?;
    let der = ops::add_scalar(
        &ops::softplus(&ops::add_scalar(&d_raw, derivative_shift())),
        MIN_DERIVATIVE,
    );
    Ok((xpos, ypos, der))
}

/// Graph-path batched spline: `x` is `[r, 1]`, knot tensors `[r, K+1]`.
/// Returns (y `[r,1]`, per-element log|dy/dx| `[r,1]`).
pub fn transform_graph(
    x: &Tensor,
    xpos: &Tensor,
    ypos: &Tensor,
    der: &Tensor,
    k_bins: usize,
) -> Result<(Tensor, Tensor)> {
    let rows = x.rows();
    // Bin assignment and tail mask come from values; they are
    // piecewise-constant in the inputs so no gradient flows through them.
    let mut idx_lo = vec![0usize; rows];
    // out-of-range rows still get a valid bin so the masked branch stays finite
    let mut idx_hi = vec![1usize; rows];
    let mut in_mask = vec![0.0; rows];
    {
        let xv = x.values();
        let xp = xpos.values();
        let kp1 = k_bins + 1;
        for i in 0..rows {
            let row = &xp[i * kp1..(i + 1) * kp1];
            if xv[i] >= row[0] && xv[i] <= row[k_bins] {
                in_mask[i] = 1.0;
                let k = bin_index(xv[i], row, k_bins);
                idx_lo[i] = k;
                idx_hi[i] = k + 1;
            }
        }
    }
    let xk = ops::select_col_per_row(xpos, &idx_lo)?;
    let xk1 = ops::select_col_per_row(xpos, &idx_hi)?;
    let yk = ops::select_col_per_row(ypos, &idx_lo)?;
    let yk1 = ops::select_col_per_row(ypos, &idx_hi)?;
    let dk = ops::select_col_per_row(der, &idx_lo)?;
    let dk1 = ops::select_col_per_row(der, &idx_hi)?;

    let w = ops::sub(&xk1, &xk)?;
    let dy = ops::sub(&yk1, &yk)?;
    let s = ops::div(&dy, &w)?;
    let xi = ops::div(&ops::sub(x, &xk)?, &w)?;
    let one_m_xi = ops::affine(&xi, -1.0, 1.0);
    let xi1m = ops::mul(&xi, &one_m_xi)?;
    let e = ops::add(&ops::add(&dk1, &dk)?, &ops::mul_scalar(&s, -2.0))?;
    let den = ops::add(&s, &ops::mul(&e, &xi1m)?)?;
    let num = ops::mul(
        &dy,
        &ops::add(&ops::mul(&s, &ops::square(&xi))?, &ops::mul(&dk, &xi1m)?)?,
    )?;
    let y_in = ops::add(&yk, &ops::div(&num, &den)?)?;
    let deriv_num = ops::mul(
        &ops::square(&s),
        &ops::add(
            &ops::add(
                &ops::mul(&dk1, &ops::square(&xi))?,
                &ops::mul_scalar(&ops::mul(&s, &xi1m)?, 2.0),
            )?,
            &ops::mul(&dk, &ops::square(&one_m_xi))?,
        )?,
    )?;
    let deriv = ops::div(&deriv_num, &ops::square(&den))?;
    let logd_in = ops::log(&deriv);

    let mask_in = Tensor::constant(vec![rows, 1], in_mask.clone());
    let mask_out = Tensor::constant(
        vec![rows, 1],
        in_mask.iter().map(|m| 1.0 - m).collect(),
    );
    let y = ops::add(&ops::mul(&y_in, &mask_in)?, &ops::mul(x, &mask_out)?)?;
    let logdet = ops::mul(&logd_in, &mask_in)?;
    Ok((y, logdet))
}
