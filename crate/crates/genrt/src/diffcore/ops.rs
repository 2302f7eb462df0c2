//! Differentiable operations. Each op computes values eagerly and records a
//! backward closure on the output node.
//!
//! Broadcasting is deliberately narrow: elementwise ops accept equal shapes,
//! a trailing row vector `[c]`/`[1,c]` against `[r,c]`, a column `[r,1]`
//! against `[r,c]`, or a scalar `[1]`.

use super::tensor::{DiffError, Result, Tensor};

pub const LOG_CLAMP: f64 = 1e-12;

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> DiffError {
    DiffError::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Broadcast {
    Same,
    Row,
    Col,
    Scalar,
}

fn broadcast_kind(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Broadcast> {
    if a.shape() == b.shape() {
        return Ok(Broadcast::Same);
    }
    if b.len() == 1 {
        return Ok(Broadcast::Scalar);
    }
    let (r, c) = (a.rows(), a.cols());
    if a.shape().len() == 2 && b.len() == c && b.shape().len() <= 2 && b.rows() * b.cols() == c {
        if b.shape().len() == 2 && b.shape() == [r, 1] && r == c {
            // ambiguous square case: prefer column
            return Ok(Broadcast::Col);
        }
        if b.shape() != [r, 1] {
            return Ok(Broadcast::Row);
        }
    }
    if a.shape().len() == 2 && b.shape() == [r, 1] {
        return Ok(Broadcast::Col);
    }
    Err(shape_err(op, a, b))
}

fn binary_broadcast(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
    // (grad_out, a_val, b_val) -> (grad_a_contrib, grad_b_contrib)
    df: impl Fn(f64, f64, f64) -> (f64, f64) + 'static,
) -> Result<Tensor> {
    let kind = broadcast_kind(op, a, b)?;
    let (r, c) = (a.rows(), a.cols());
    let av = a.values();
    let bv = b.values();
    let b_index = move |i: usize, j: usize| match kind {
        Broadcast::Same => i * c + j,
        Broadcast::Row => j,
        Broadcast::Col => i,
        Broadcast::Scalar => 0,
    };
    let mut out = Vec::with_capacity(av.len());
    for i in 0..r {
        for j in 0..c {
            out.push(f(av[i * c + j], bv[b_index(i, j)]));
        }
    }
    drop(av);
    drop(bv);
    let shape = a.shape().to_vec();
    let back = move |g: &[f64], parents: &[Tensor]| {
        let (pa, pb) = (&parents[0], &parents[1]);
        let av = pa.to_vec();
        let bv = pb.to_vec();
        let mut ga = vec![0.0; av.len()];
        let mut gb = vec![0.0; bv.len()];
        for i in 0..r {
            for j in 0..c {
                let k = i * c + j;
                let bk = b_index(i, j);
                let (da, db) = df(g[k], av[k], bv[bk]);
                ga[k] += da;
                gb[bk] += db;
            }
        }
        if pa.requires_grad() {
            accumulate(pa, &ga);
        }
        if pb.requires_grad() {
            accumulate(pb, &gb);
        }
    };
    Ok(Tensor::from_op(shape, out, vec![a.clone(), b.clone()], back))
}

fn accumulate(t: &Tensor, g: &[f64]) {
    t.accumulate_grad(g);
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    binary_broadcast("add", a, b, |x, y| x + y, |g, _, _| (g, g))
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    binary_broadcast("sub", a, b, |x, y| x - y, |g, _, _| (g, -g))
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    binary_broadcast("mul", a, b, |x, y| x * y, |g, x, y| (g * y, g * x))
}

pub fn div(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    binary_broadcast(
        "div",
        a,
        b,
        |x, y| x / y,
        |g, x, y| (g / y, -g * x / (y * y)),
    )
}

fn unary(
    a: &Tensor,
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64, f64) -> f64 + 'static, // (x, y) -> dy/dx
) -> Tensor {
    let out: Vec<f64> = a.values().iter().map(|&x| f(x)).collect();
    let shape = a.shape().to_vec();
    let yv = out.clone();
    let back = move |g: &[f64], parents: &[Tensor]| {
        let p = &parents[0];
        if !p.requires_grad() {
            return;
        }
        let xv = p.to_vec();
        let ga: Vec<f64> = g
            .iter()
            .zip(xv.iter().zip(yv.iter()))
            .map(|(&gi, (&x, &y))| gi * df(x, y))
            .collect();
        accumulate(p, &ga);
    };
    Tensor::from_op(shape, out, vec![a.clone()], back)
}

pub fn neg(a: &Tensor) -> Tensor {
    unary(a, |x| -x, |_, _| -1.0)
}

pub fn relu(a: &Tensor) -> Tensor {
    unary(a, |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
}

pub fn tanh(a: &Tensor) -> Tensor {
    unary(a, |x| x.tanh(), |_, y| 1.0 - y * y)
}

pub fn exp(a: &Tensor) -> Tensor {
    unary(a, |x| x.exp(), |_, y| y)
}

/// Natural log with the argument clamped to `LOG_CLAMP`; flat (zero gradient)
/// below the clamp.
pub fn log(a: &Tensor) -> Tensor {
    unary(
        a,
        |x| x.max(LOG_CLAMP).ln(),
        |x, _| if x > LOG_CLAMP { 1.0 / x } else { 0.0 },
    )
}

pub fn square(a: &Tensor) -> Tensor {
    unary(a, |x| x * x, |x, _| 2.0 * x)
}

pub fn abs(a: &Tensor) -> Tensor {
    unary(a, |x| x.abs(), |x, _| x.signum())
}

pub fn softplus(a: &Tensor) -> Tensor {
    unary(
        a,
        |x| {
            if x > 30.0 {
                x
            } else if x < -30.0 {
                x.exp()
            } else {
                x.exp().ln_1p()
            }
        },
        |x, _| 1.0 / (1.0 + (-x).exp()),
    )
}

pub fn add_scalar(a: &Tensor, c: f64) -> Tensor {
    unary(a, move |x| x + c, |_, _| 1.0)
}

pub fn mul_scalar(a: &Tensor, c: f64) -> Tensor {
    unary(a, move |x| x * c, move |_, _| c)
}

/// a*x + b elementwise with constants.
pub fn affine(t: &Tensor, a: f64, b: f64) -> Tensor {
    unary(t, move |x| a * x + b, move |_, _| a)
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape().len() != 2 || b.shape().len() != 2 || a.cols() != b.rows() {
        return Err(shape_err("matmul", a, b));
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let av = a.to_vec();
    let bv = b.to_vec();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let aip = av[i * k + p];
            if aip == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aip * bv[p * n + j];
            }
        }
    }
    let back = move |g: &[f64], parents: &[Tensor]| {
        let (pa, pb) = (&parents[0], &parents[1]);
        let av = pa.to_vec();
        let bv = pb.to_vec();
        if pa.requires_grad() {
            // dA = G · Bᵀ
            let mut ga = vec![0.0; m * k];
            for i in 0..m {
                for j in 0..n {
                    let gij = g[i * n + j];
                    if gij == 0.0 {
                        continue;
                    }
                    for p in 0..k {
                        ga[i * k + p] += gij * bv[p * n + j];
                    }
                }
            }
            accumulate(pa, &ga);
        }
        if pb.requires_grad() {
            // dB = Aᵀ · G
            let mut gb = vec![0.0; k * n];
            for i in 0..m {
                for p in 0..k {
                    let aip = av[i * k + p];
                    if aip == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        gb[p * n + j] += aip * g[i * n + j];
                    }
                }
            }
            accumulate(pb, &gb);
        }
    };
    Ok(Tensor::from_op(
        vec![m, n],
        out,
        vec![a.clone(), b.clone()],
        back,
    ))
}

pub fn transpose(a: &Tensor) -> Result<Tensor> {
    if a.shape().len() != 2 {
        return Err(DiffError::BadArg {
            op: "transpose",
            msg: format!("expected 2-d tensor, got {:?}", a.shape()),
        });
    }
    let (r, c) = (a.rows(), a.cols());
    let av = a.values();
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = av[i * c + j];
        }
    }
    drop(av);
    let back = move |g: &[f64], parents: &[Tensor]| {
        let p = &parents[0];
        if !p.requires_grad() {
            return;
        }
        let mut ga = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                ga[i * c + j] = g[j * r + i];
            }
        }
        accumulate(p, &ga);
    };
    Ok(Tensor::from_op(vec![c, r], out, vec![a.clone()], back))
}

/// Square diagonal matrix from a vector.
pub fn diag_embed(v: &Tensor) -> Result<Tensor> {
    if v.shape().len() != 1 {
        return Err(DiffError::BadArg {
            op: "diag_embed",
            msg: format!("expected 1-d tensor, got {:?}", v.shape()),
        });
    }
    let d = v.len();
    let mut out = vec![0.0; d * d];
    for (i, &x) in v.values().iter().enumerate() {
        out[i * d + i] = x;
    }
    let back = move |g: &[f64], parents: &[Tensor]| {
        let p = &parents[0];
        if !p.requires_grad() {
            return;
        }
        let ga: Vec<f64> = (0..d).map(|i| g[i * d + i]).collect();
        accumulate(p, &ga);
    };
    Ok(Tensor::from_op(vec![d, d], out, vec![v.clone()], back))
}

fn rows_cols(op: &'static str, a: &Tensor) -> Result<(usize, usize)> {
    if a.shape().len() != 2 {
        return Err(DiffError::BadArg {
            op,
            msg: format!("expected 2-d tensor, got {:?}", a.shape()),
        });
    }
    Ok((a.rows(), a.cols()))
}

pub fn softmax_rows(a: &Tensor) -> Result<Tensor> {
    let (r, c) = rows_cols("softmax_rows", a)?;
    let av = a.values();
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let row = &av[i * c..(i + 1) * c];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for j in 0..c {
            let e = (row[j] - m).exp();
            out[i * c + j] = e;
            z += e;
        }
        for j in 0..c {
            out[i * c + j] /= z;
        }
    }
    drop(av);
    let pv = out.clone();
    let back = move |g: &[f64], parents: &[Tensor]| {
        let p = &parents[0];
        if !p.requires_grad() {
            return;
        }
        let mut ga = vec![0.0; r * c];
        for i in 0..r {
            let dot: f64 = (0..c).map(|j| g[i * c + j] * pv[i * c + j]).sum();
            for j in 0..c {
                ga[i * c + j] = pv[i * c + j] * (g[i * c + j] - dot);
            }
        }
        accumulate(p, &ga);
    };
    Ok(Tensor::from_op(vec![r, c], out, vec![a.clone()], back))
}

pub fn log_softmax_rows(a: &Tensor) -> Result<Tensor> {
    let (r, c) = rows_cols("log_softmax_rows", a)?;
    let av = a.values();
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let row = &av[i * c..(i + 1) * c];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
        for j in 0..c {
            out[i * c + j] = row[j] - lse;
        }
    }
    drop(av);
    let lsv = out.clone();
    let back = move |g: &[f64], parents: &[Tensor]| {
        let p = &parents[0];
        if !p.requires_grad() {
            return;
        }
        let mut ga = vec![0.0; r * c];
        for i in 0..r {
            let gsum: f64 = g[i * c..(i + 1) * c].iter().sum();
            for j in 0..c {
                ga[i * c + j] = g[i * c + j] - lsv[i * c + j].exp() * gsum;
            }
        }
        accumulate(p, &ga);
    };
    Ok(Tensor::from_op(vec![r, c], out, vec![a.clone()], back))
}

pub fn logsumexp_rows(a: &Tensor) -> Result<Tensor> {
    let (r, c) = rows_cols("logsumexp_rows", a)?;
    let av = a.values();
    let mut out = vec![0.0; r];
    for i in 0..r {
        let row = &av[i * c..(i + 1) * c];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        out[i] = m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
    }
    drop(av);
    let lse = out.clone();
    let back = move |g: &[f64], parents: &[Tensor]| {
        let p = &parents[0];
        if !p.requires_grad() {
            return;
        }
        let xv = p.to_vec();
        let mut ga = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                ga[i * c + j] = g[i] * (xv[i * c + j] - lse[i]).exp();
            }
        }
        accumulate(p, &ga);
    };
    Ok(Tensor::from_op(vec![r, 1], out, vec![a.clone()], back))
}

pub fn sum(a: &Tensor) -> Result<Tensor> {
    let s: f64 = a.values().iter().sum();
    let n = a.len();
    let back = move |g: &[f64], parents: &[Tensor]| {
        let p = &parents[0];
        if p.requires_grad() {
            accumulate(p, &vec![g[0]; n]);
        }
    };
    Ok(Tensor::from_op(vec![1], vec![s], vec![a.clone()], back))
}

pub fn mean(a: &Tensor) -> Result<Tensor> {
    if a.is_empty() {
        return Err(DiffError::BadArg {
            op: "mean",
            msg: "empty tensor".into(),
        });
    }
    let n = a.len();
    let s: f64 = a.values().iter().sum::<f64>() / n as f64;
    let back = move |g: &[f64], parents: &[Tensor]| {
        let p = &parents[0];
        if p.requires_grad() {
            accumulate(p, &vec![g[0] / n as f64; n]);
        }
    };
    Ok(Tensor::from_op(vec![1], vec![s], vec![a.clone()], back))
}

/// Row sums of a 2-d tensor, shape `[r, 1]`.
pub fn sum_cols(a: &Tensor) -> Result<Tensor> {
    let (r, c) = rows_cols("sum_cols", a)?;
    let av = a.values();
    let out: Vec<f64> = (0..r).map(|i| av[i * c..(i + 1) * c].iter().sum()).collect();
    drop(av);
    let back = move |g: &[f64], parents: &[Tensor]| {
        let p = &parents[0];
        if !p.requires_grad() {
            return;
        }
        let mut ga = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                ga[i * c + j] = g[i];
            }
        }
        accumulate(p, &ga);
    };
    Ok(Tensor::from_op(vec![r, 1], out, vec![a.clone()], back))
}

pub fn concat_cols(parts: &[Tensor]) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(DiffError::BadArg {
            op: "concat_cols",
            msg: "no inputs".into(),
        });
    }
    let r = parts[0].rows();
    for p in parts {
        if p.shape().len() != 2 || p.rows() != r {
            return Err(shape_err("concat_cols", &parts[0], p));
        }
    }
    let widths: Vec<usize> = parts.iter().map(|p| p.cols()).collect();
    let total: usize = widths.iter().sum();
    let mut out = vec![0.0; r * total];
    let mut off = 0;
    for (p, &w) in parts.iter().zip(&widths) {
        let pv = p.values();
        for i in 0..r {
            out[i * total + off..i * total + off + w].copy_from_slice(&pv[i * w..(i + 1) * w]);
        }
        off += w;
    }
    let widths_b = widths.clone();
    let back = move |g: &[f64], parents: &[Tensor]| {
        let mut off = 0;
        for (p, &w) in parents.iter().zip(&widths_b) {
            if p.requires_grad() {
                let mut gp = vec![0.0; r * w];
                for i in 0..r {
                    gp[i * w..(i + 1) * w].copy_from_slice(&g[i * total + off..i * total + off + w]);
                }
                accumulate(p, &gp);
            }
            off += w;
        }
    };
    Ok(Tensor::from_op(vec![r, total], out, parts.to_vec(), back))
}

pub fn concat_rows(parts: &[Tensor]) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(DiffError::BadArg {
            op: "concat_rows",
            msg: "no inputs".into(),
        });
    }
    let c = parts[0].cols();
    for p in parts {
        if p.shape().len() != 2 || p.cols() != c {
            return Err(shape_err("concat_rows", &parts[0], p));
        }
    }
    let heights: Vec<usize> = parts.iter().map(|p| p.rows()).collect();
    let total: usize = heights.iter().sum();
    let mut out = Vec::with_capacity(total * c);
    for p in parts {
        out.extend_from_slice(&p.values());
    }
    let heights_b = heights.clone();
    let back = move |g: &[f64], parents: &[Tensor]| {
        let mut off = 0;
        for (p, &h) in parents.iter().zip(&heights_b) {
            if p.requires_grad() {
                accumulate(p, &g[off * c..(off + h) * c]);
            }
            off += h;
        }
    };
    Ok(Tensor::from_op(vec![total, c], out, parts.to_vec(), back))
}

/// Columns `[start, end)` of a 2-d tensor.
pub fn slice_cols(a: &Tensor, start: usize, end: usize) -> Result<Tensor> {
    let (r, c) = rows_cols("slice_cols", a)?;
    if start >= end || end > c {
        return Err(DiffError::BadArg {
            op: "slice_cols",
            msg: format!("range {start}..{end} out of 0..{c}"),
        });
    }
    let w = end - start;
    let av = a.values();
    let mut out = vec![0.0; r * w];
    for i in 0..r {
        out[i * w..(i + 1) * w].copy_from_slice(&av[i * c + start..i * c + end]);
    }
    drop(av);
    let back = move |g: &[f64], parents: &[Tensor]| {
        let p = &parents[0];
        if !p.requires_grad() {
            return;
        }
        let mut ga = vec![0.0; r * c];
        for i in 0..r {
            ga[i * c + start..i * c + end].copy_from_slice(&g[i * w..(i + 1) * w]);
        }
        accumulate(p, &ga);
    };
    Ok(Tensor::from_op(vec![r, w], out, vec![a.clone()], back))
}

/// Per-row column pick: `out[i] = a[i, idx[i]]`, shape `[r, 1]`.
pub fn select_col_per_row(a: &Tensor, idx: &[usize]) -> Result<Tensor> {
    let (r, c) = rows_cols("select_col_per_row", a)?;
    if idx.len() != r {
        return Err(DiffError::BadArg {
            op: "select_col_per_row",
            msg: format!("index length {} != rows {}", idx.len(), r),
        });
    }
    if let Some(&bad) = idx.iter().find(|&&j| j >= c) {
        return Err(DiffError::BadArg {
            op: "select_col_per_row",
            msg: format!("column index {bad} out of range 0..{c}"),
        });
    }
    let av = a.values();
    let out: Vec<f64> = idx.iter().enumerate().map(|(i, &j)| av[i * c + j]).collect();
    drop(av);
    let idx_b = idx.to_vec();
    let back = move |g: &[f64], parents: &[Tensor]| {
        let p = &parents[0];
        if !p.requires_grad() {
            return;
        }
        let mut ga = vec![0.0; r * c];
        for (i, &j) in idx_b.iter().enumerate() {
            ga[i * c + j] = g[i];
        }
        accumulate(p, &ga);
    };
    Ok(Tensor::from_op(vec![r, 1], out, vec![a.clone()], back))
}

/// Row gather: `out[i, :] = a[idx[i], :]`. Backward scatters (and sums on
/// repeated indices).
pub fn select_rows(a: &Tensor, idx: &[usize]) -> Result<Tensor> {
    let (r, c) = rows_cols("select_rows", a)?;
    if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
        return Err(DiffError::BadArg {
            op: "select_rows",
            msg: format!("row index {bad} out of range 0..{r}"),
        });
    }
    let av = a.values();
    let mut out = Vec::with_capacity(idx.len() * c);
    for &i in idx {
        out.extend_from_slice(&av[i * c..(i + 1) * c]);
    }
    drop(av);
    let n = idx.len();
    let idx_b = idx.to_vec();
    let back = move |g: &[f64], parents: &[Tensor]| {
        let p = &parents[0];
        if !p.requires_grad() {
            return;
        }
        let mut ga = vec![0.0; r * c];
        for (k, &i) in idx_b.iter().enumerate() {
            for j in 0..c {
                ga[i * c + j] += g[k * c + j];
            }
        }
        accumulate(p, &ga);
    };
    Ok(Tensor::from_op(vec![n, c], out, vec![a.clone()], back))
}

/// Prefix sums along each row.
pub fn cumsum_cols(a: &Tensor) -> Result<Tensor> {
    let (r, c) = rows_cols("cumsum_cols", a)?;
    let av = a.values();
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let mut acc = 0.0;
        for j in 0..c {
            acc += av[i * c + j];
            out[i * c + j] = acc;
        }
    }
    drop(av);
    let back = move |g: &[f64], parents: &[Tensor]| {
        let p = &parents[0];
        if !p.requires_grad() {
            return;
        }
        let mut ga = vec![0.0; r * c];
        for i in 0..r {
            let mut acc = 0.0;
            for j in (0..c).rev() {
                acc += g[i * c + j];
                ga[i * c + j] = acc;
            }
        }
        accumulate(p, &ga);
    };
    Ok(Tensor::from_op(vec![r, c], out, vec![a.clone()], back))
}

/// Row-major reinterpretation; element count must match.
pub fn reshape(a: &Tensor, shape: Vec<usize>) -> Result<Tensor> {
    if shape.iter().product::<usize>() != a.len() {
        return Err(DiffError::BadArg {
            op: "reshape",
            msg: format!("cannot view {:?} as {:?}", a.shape(), shape),
        });
    }
    let out = a.to_vec();
    let back = move |g: &[f64], parents: &[Tensor]| {
        let p = &parents[0];
        if p.requires_grad() {
            accumulate(p, g);
        }
    };
    Ok(Tensor::from_op(shape, out, vec![a.clone()], back))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn softmax_symmetry() {
        let x = Tensor::constant(vec![1, 2], vec![0.0, 0.0]);
        let p = softmax_rows(&x).unwrap();
        assert_eq!(p.to_vec(), vec![0.5, 0.5]);
    }

    #[test]
    fn relu_values() {
        let x = Tensor::constant(vec![2], vec![-1.0, 2.0]);
        assert_eq!(relu(&x).to_vec(), vec![0.0, 2.0]);
    }

    #[test]
    fn logsumexp_value() {
        let x = Tensor::constant(vec![1, 2], vec![0.0, 3.0f64.ln()]);
        let y = logsumexp_rows(&x).unwrap();
        assert!(close(y.item(), 4.0f64.ln(), 1e-12));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = Tensor::constant(vec![3, 4], (0..12).map(|i| (i as f64).sin() * 5.0).collect());
        let p = softmax_rows(&x).unwrap();
        let pv = p.to_vec();
        for i in 0..3 {
            let s: f64 = pv[i * 4..(i + 1) * 4].iter().sum();
            assert!(close(s, 1.0, 1e-12));
        }
        // log_softmax == log ∘ softmax
        let lp = log_softmax_rows(&x).unwrap();
        for (l, p) in lp.to_vec().iter().zip(pv.iter()) {
            assert!(close(*l, p.ln(), 1e-9));
        }
    }

    #[test]
    fn shape_mismatch_names_op() {
        let a = Tensor::constant(vec![2, 3], vec![0.0; 6]);
        let b = Tensor::constant(vec![2, 2], vec![0.0; 4]);
        let err = matmul(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("matmul") && msg.contains("[2, 3]") && msg.contains("[2, 2]"));
    }

    #[test]
    fn matmul_grads() {
        let a = Tensor::param(vec![1, 2], vec![1.0, 2.0]);
        let b = Tensor::param(vec![2, 1], vec![3.0, 4.0]);
        let y = matmul(&a, &b).unwrap();
        assert_eq!(y.item(), 11.0);
        y.backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![3.0, 4.0]);
        assert_eq!(b.grad().unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn row_and_col_broadcast() {
        let a = Tensor::param(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let row = Tensor::param(vec![2], vec![10.0, 20.0]);
        let y = add(&a, &row).unwrap();
        assert_eq!(y.to_vec(), vec![11.0, 22.0, 13.0, 24.0]);
        let col = Tensor::param(vec![2, 1], vec![1.0, 2.0]);
        let z = mul(&a, &col).unwrap();
        assert_eq!(z.to_vec(), vec![1.0, 2.0, 6.0, 8.0]);
        let loss = sum(&z).unwrap();
        loss.backward().unwrap();
        assert_eq!(col.grad().unwrap(), vec![3.0, 7.0]);
    }

    #[test]
    fn cumsum_and_slice() {
        let a = Tensor::param(vec![1, 3], vec![1.0, 2.0, 3.0]);
        let cs = cumsum_cols(&a).unwrap();
        assert_eq!(cs.to_vec(), vec![1.0, 3.0, 6.0]);
        let s = slice_cols(&cs, 1, 3).unwrap();
        let loss = sum(&s).unwrap();
        loss.backward().unwrap();
        // d(3+6)/da = [2, 2, 1]... prefix structure
        assert_eq!(a.grad().unwrap(), vec![2.0, 2.0, 1.0]);
    }
}
