//! Spline coupling: one half of the dimensions conditions a monotone
//! rational-quadratic spline applied to the other half. A four-layer
//! perceptron produces the raw spline parameters; its last layer starts at
//! zero so a fresh coupling is the identity.

use rand_chacha::ChaCha8Rng;

use crate::diffcore::{ops, Result, Tensor};
use crate::nn::{self, Linear};

use super::spline;

pub struct Coupling {
    layers: Vec<Linear>,
    pub dim: usize,
    /// dimensions passed through unchanged
    pub d_id: usize,
    /// dimensions transformed by the spline
    pub d_tr: usize,
    pub k_bins: usize,
    pub tail: f64,
    /// when set, the *first* half is transformed and the second conditions
    pub swap: bool,
}

impl Coupling {
    pub fn new(
        dim: usize,
        hidden: usize,
        k_bins: usize,
        tail: f64,
        swap: bool,
        rng: &mut ChaCha8Rng,
    ) -> Coupling {
        assert!(dim >= 2, "coupling needs at least 2 dimensions");
        let half = dim / 2;
        let (d_id, d_tr) = if swap { (dim - half, half) } else { (half, dim - half) };
        let out = d_tr * (3 * k_bins + 1);
        let layers = vec![
            Linear::new(d_id, hidden, rng),
            Linear::new(hidden, hidden, rng),
            Linear::new(hidden, hidden, rng),
            Linear::zeros(hidden, out),
        ];
        Coupling {
            layers,
            dim,
            d_id,
            d_tr,
            k_bins,
            tail,
            swap,
        }
    }

    fn split_graph(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        // (identity part, transformed part)
        if self.swap {
            let tr = ops::slice_cols(x, 0, self.d_tr)?;
            let id = ops::slice_cols(x, self.d_tr, self.dim)?;
            Ok((id, tr))
        } else {
            let id = ops::slice_cols(x, 0, self.d_id)?;
            let tr = ops::slice_cols(x, self.d_id, self.dim)?;
            Ok((id, tr))
        }
    }

    fn join_values(&self, id: &[f64], tr: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n * self.dim];
        for i in 0..n {
            let (first, second, wf) = if self.swap {
                (tr, id, self.d_tr)
            } else {
                (id, tr, self.d_id)
            };
            let ws = self.dim - wf;
            out[i * self.dim..i * self.dim + wf].copy_from_slice(&first[i * wf..(i + 1) * wf]);
            out[i * self.dim + wf..(i + 1) * self.dim]
                .copy_from_slice(&second[i * ws..(i + 1) * ws]);
        }
        out
    }

    fn conditioner_graph(&self, id: &Tensor) -> Result<Tensor> {
        let mut h = self.layers[0].forward(id)?;
        for layer in &self.layers[1..] {
            h = layer.forward(&ops::tanh(&h))?;
        }
        Ok(h)
    }

    fn conditioner_values(&self, id: &[f64], n: usize) -> Vec<f64> {
        let mut h = self.layers[0].forward_values(id, n);
        for layer in &self.layers[1..] {
            nn::tanh_values(&mut h);
            h = layer.forward_values(&h, n);
        }
        h
    }

    /// Graph forward: (y `[B,d]`, per-sample log-det `[B,1]`).
    pub fn forward_graph(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let n = x.rows();
        let (id, tr) = self.split_graph(x)?;
        let raw = self.conditioner_graph(&id)?;
        // [B, d_tr*(3K+1)] viewed as [B*d_tr, 3K+1]; same row-major layout
        let raw_rows = ops::reshape(&raw, vec![n * self.d_tr, 3 * self.k_bins + 1])?;
        let (xp, yp, der) = spline::knots_graph(&raw_rows, self.k_bins, self.tail)?;
        let x_col = ops::reshape(&tr, vec![n * self.d_tr, 1])?;
        let (y_col, ld_col) = spline::transform_graph(&x_col, &xp, &yp, &der, self.k_bins)?;
        let y_tr = ops::reshape(&y_col, vec![n, self.d_tr])?;
        let logdet = ops::sum_cols(&ops::reshape(&ld_col, vec![n, self.d_tr])?)?;
        let y = if self.swap {
            ops::concat_cols(&[y_tr, id])?
        } else {
            ops::concat_cols(&[id, y_tr])?
        };
        Ok((y, logdet))
    }

    fn split_values<'a>(&self, x: &'a [f64], n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut id = vec![0.0; n * self.d_id];
        let mut tr = vec![0.0; n * self.d_tr];
        for i in 0..n {
            let row = &x[i * self.dim..(i + 1) * self.dim];
            if self.swap {
                tr[i * self.d_tr..(i + 1) * self.d_tr].copy_from_slice(&row[0..self.d_tr]);
                id[i * self.d_id..(i + 1) * self.d_id].copy_from_slice(&row[self.d_tr..]);
            } else {
                id[i * self.d_id..(i + 1) * self.d_id].copy_from_slice(&row[0..self.d_id]);
                tr[i * self.d_tr..(i + 1) * self.d_tr].copy_from_slice(&row[self.d_id..]);
            }
        }
        (id, tr)
    }

    /// Value forward: (y, per-sample log-det).
    pub fn forward_values(&self, x: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
        let (id, tr) = self.split_values(x, n);
        let raw = self.conditioner_values(&id, n);
        let (xp, yp, der) =
            spline::knots_from_raw(&raw, n * self.d_tr, self.k_bins, self.tail);
        let kp1 = self.k_bins + 1;
        let mut y_tr = vec![0.0; n * self.d_tr];
        let mut logdet = vec![0.0; n];
        for i in 0..n {
            for j in 0..self.d_tr {
                let r = i * self.d_tr + j;
                let (y, ld) = spline::forward_value(
                    tr[r],
                    &xp[r * kp1..(r + 1) * kp1],
                    &yp[r * kp1..(r + 1) * kp1],
                    &der[r * kp1..(r + 1) * kp1],
                    self.k_bins,
                );
                y_tr[r] = y;
                logdet[i] += ld;
            }
        }
        (self.join_values(&id, &y_tr, n), logdet)
    }

    /// Value inverse: (x, per-sample log-det of the inverse).
    pub fn inverse_values(&self, y: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
        let (id, tr) = self.split_values(y, n);
        // identity half is unchanged, so the conditioner sees the same input
        let raw = self.conditioner_values(&id, n);
        let (xp, yp, der) =
            spline::knots_from_raw(&raw, n * self.d_tr, self.k_bins, self.tail);
        let kp1 = self.k_bins + 1;
        let mut x_tr = vec![0.0; n * self.d_tr];
        let mut logdet = vec![0.0; n];
        for i in 0..n {
            for j in 0..self.d_tr {
                let r = i * self.d_tr + j;
                let (x, ld) = spline::inverse_value(
                    tr[r],
                    &xp[r * kp1..(r + 1) * kp1],
                    &yp[r * kp1..(r + 1) * kp1],
                    &der[r * kp1..(r + 1) * kp1],
                    self.k_bins,
                );
                x_tr[r] = x;
                logdet[i] += ld;
            }
        }
        (self.join_values(&id, &x_tr, n), logdet)
    }

    pub fn params(&self, prefix: &str) -> Vec<(String, Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.params(&format!("{prefix}.cond{i}")))
            .collect()
    }
}
