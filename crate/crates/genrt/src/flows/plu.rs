//! Invertible d×d linear map in P·L·U form. P is a fixed permutation, L is
//! unit lower-triangular, U is upper-triangular with its diagonal held as
//! sign·exp(log_s), so the map stays invertible and the log-det is Σ log_s.

use crate::diffcore::{ops, Result, Tensor};

pub struct PluLinear {
    /// free entries; only the strictly lower triangle is used
    pub l_params: Tensor,
    /// free entries; only the strictly upper triangle is used
    pub u_params: Tensor,
    /// log-magnitudes of the U diagonal
    pub log_s: Tensor,
    /// fixed diagonal signs (±1), not trained
    sign: Vec<f64>,
    /// fixed permutation: row i of P·M is row perm[i] of M
    perm: Vec<usize>,
    pub dim: usize,
    mask_l: Tensor,
    mask_u: Tensor,
    eye: Tensor,
}

impl PluLinear {
    pub fn identity(dim: usize) -> PluLinear {
        let mut mask_l = vec![0.0; dim * dim];
        let mut mask_u = vec![0.0; dim * dim];
        let mut eye = vec![0.0; dim * dim];
        for i in 0..dim {
            eye[i * dim + i] = 1.0;
            for j in 0..dim {
                if j < i {
                    mask_l[i * dim + j] = 1.0;
                }
                if j > i {
                    mask_u[i * dim + j] = 1.0;
                }
            }
        }
        PluLinear {
            l_params: Tensor::param(vec![dim, dim], vec![0.0; dim * dim]),
            u_params: Tensor::param(vec![dim, dim], vec![0.0; dim * dim]),
            log_s: Tensor::param(vec![dim], vec![0.0; dim]),
            sign: vec![1.0; dim],
            perm: (0..dim).collect(),
            dim,
            mask_l: Tensor::constant(vec![dim, dim], mask_l),
            mask_u: Tensor::constant(vec![dim, dim], mask_u),
            eye: Tensor::constant(vec![dim, dim], eye),
        }
    }

    /// W = P·L·U as a graph tensor.
    fn weight_graph(&self) -> Result<Tensor> {
        let l = ops::add(&ops::mul(&self.l_params, &self.mask_l)?, &self.eye)?;
        let diag = {
            let mags = ops::exp(&self.log_s);
            let signed = ops::mul(&mags, &Tensor::constant(vec![self.dim], self.sign.clone()))?;
            ops::diag_embed(&signed)?
        };
        let u = ops::add(&ops::mul(&self.u_params, &self.mask_u)?, &diag)?;
        let lu = ops::matmul(&l, &u)?;
        // permutation is identity from init; kept for checkpoint compatibility
        if self.perm.iter().enumerate().all(|(i, &p)| i == p) {
            Ok(lu)
        } else {
            let mut pmat = vec![0.0; self.dim * self.dim];
            for (i, &p) in self.perm.iter().enumerate() {
                pmat[i * self.dim + p] = 1.0;
            }
            ops::matmul(&Tensor::constant(vec![self.dim, self.dim], pmat), &lu)
        }
    }

    /// Graph forward on row features: y_i = W·x_i, plus the shared log-det.
    pub fn forward_graph(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let w = self.weight_graph()?;
        let y = ops::matmul(x, &ops::transpose(&w)?)?;
        let logdet = ops::sum(&self.log_s)?;
        Ok((y, logdet))
    }

    fn l_values(&self) -> Vec<f64> {
        let d = self.dim;
        let lp = self.l_params.values();
        let mut l = vec![0.0; d * d];
        for i in 0..d {
            l[i * d + i] = 1.0;
            for j in 0..i {
                l[i * d + j] = lp[i * d + j];
            }
        }
        l
    }

    fn u_values(&self) -> Vec<f64> {
        let d = self.dim;
        let up = self.u_params.values();
        let ls = self.log_s.values();
        let mut u = vec![0.0; d * d];
        for i in 0..d {
            u[i * d + i] = self.sign[i] * ls[i].exp();
            for j in (i + 1)..d {
                u[i * d + j] = up[i * d + j];
            }
        }
        u
    }

    pub fn forward_values(&self, x: &[f64], n: usize) -> Vec<f64> {
        let d = self.dim;
        let l = self.l_values();
        let u = self.u_values();
        let mut y = vec![0.0; n * d];
        // y = x·(PLU)ᵀ computed as two triangular products
        let mut tmp = vec![0.0; d];
        let mut tmp2 = vec![0.0; d];
        for s in 0..n {
            let xi = &x[s * d..(s + 1) * d];
            for i in 0..d {
                tmp[i] = (i..d).map(|j| u[i * d + j] * xi[j]).sum();
            }
            for i in 0..d {
                tmp2[i] = (0..=i).map(|j| l[i * d + j] * tmp[j]).sum();
            }
            for i in 0..d {
                y[s * d + self.perm_inverse_row(i)] = tmp2[i];
            }
        }
        y
    }

    fn perm_inverse_row(&self, i: usize) -> usize {
        // with identity perm this is i
        self.perm.iter().position(|&p| p == i).unwrap()
    }

    pub fn inverse_values(&self, y: &[f64], n: usize) -> Vec<f64> {
        let d = self.dim;
        let l = self.l_values();
        let u = self.u_values();
        let mut x = vec![0.0; n * d];
        let mut z = vec![0.0; d];
        for s in 0..n {
            // undo P
            let yi: Vec<f64> = (0..d).map(|i| y[s * d + self.perm_inverse_row(i)]).collect();
            // solve L z = y (unit lower)
            for i in 0..d {
                z[i] = yi[i] - (0..i).map(|j| l[i * d + j] * z[j]).sum::<f64>();
            }
            // solve U x = z
            for i in (0..d).rev() {
                let s_rest: f64 = ((i + 1)..d).map(|j| u[i * d + j] * x[s * d + j]).sum();
                x[s * d + i] = (z[i] - s_rest) / u[i * d + i];
            }
        }
        x
    }

    pub fn logdet_value(&self) -> f64 {
        self.log_s.values().iter().sum()
    }

    pub fn params(&self, prefix: &str) -> Vec<(String, Tensor)> {
        vec![
            (format!("{prefix}.l"), self.l_params.clone()),
            (format!("{prefix}.u"), self.u_params.clone()),
            (format!("{prefix}.log_s"), self.log_s.clone()),
        ]
    }
}
