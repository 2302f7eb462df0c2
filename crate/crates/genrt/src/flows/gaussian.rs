//! Multivariate Gaussian class model: the cheaper backend for class-wise
//! feature distributions.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const LN_2PI: f64 = 1.8378770664093453;

pub struct GaussianClassModel {
    pub class_id: usize,
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
    /// lower Cholesky factor of the (ridged) covariance
    chol: Vec<f64>,
    pub dim: usize,
    pub sample_count: usize,
}

fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

impl GaussianClassModel {
    /// Sample mean and ridged sample covariance. Fewer than two samples fall
    /// back to identity covariance around whatever mean is available.
    pub fn fit(class_id: usize, features: &[f64], n: usize, dim: usize) -> GaussianClassModel {
        let mut mean = vec![0.0; dim];
        for i in 0..n {
            for j in 0..dim {
                mean[j] += features[i * dim + j];
            }
        }
        if n > 0 {
            for m in mean.iter_mut() {
                *m /= n as f64;
            }
        }
        let mut cov = vec![0.0; dim * dim];
        if n >= 2 {
            for i in 0..n {
                for a in 0..dim {
                    let da = features[i * dim + a] - mean[a];
                    for b in 0..dim {
                        cov[a * dim + b] += da * (features[i * dim + b] - mean[b]);
                    }
                }
            }
            for c in cov.iter_mut() {
                *c /= (n - 1) as f64;
            }
            // scale-aware ridge
            let trace: f64 = (0..dim).map(|i| cov[i * dim + i]).sum();
            let eps = (1e-4 * trace / dim as f64).max(1e-10);
            for i in 0..dim {
                cov[i * dim + i] += eps;
            }
        } else {
            for i in 0..dim {
                cov[i * dim + i] = 1.0;
            }
        }
        let chol = cholesky(&cov, dim).unwrap_or_else(|| {
            // cov was not PD despite the ridge: retreat to identity
            let mut l = vec![0.0; dim * dim];
            for i in 0..dim {
                l[i * dim + i] = 1.0;
            }
            l
        });
        GaussianClassModel {
            class_id,
            mean,
            cov,
            chol,
            dim,
            sample_count: n,
        }
    }

    pub fn log_prob_values(&self, x: &[f64], n: usize) -> Vec<f64> {
        let d = self.dim;
        let log_det: f64 = (0..d).map(|i| self.chol[i * d + i].ln()).sum::<f64>() * 2.0;
        let mut out = vec![0.0; n];
        let mut z = vec![0.0; d];
        for s in 0..n {
            // solve L z = (x - μ)
            for i in 0..d {
                let mut v = x[s * d + i] - self.mean[i];
                for k in 0..i {
                    v -= self.chol[i * d + k] * z[k];
                }
                z[i] = v / self.chol[i * d + i];
            }
            let maha: f64 = z.iter().map(|v| v * v).sum();
            out[s] = -0.5 * (maha + log_det + d as f64 * LN_2PI);
        }
        out
    }

    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; n * d];
        let mut z = vec![0.0; d];
        for s in 0..n {
            for v in z.iter_mut() {
                *v = StandardNormal.sample(rng);
            }
            for i in 0..d {
                let mut v = self.mean[i];
                for k in 0..=i {
                    v += self.chol[i * d + k] * z[k];
                }
                out[s * d + i] = v;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn fit_recovers_mean() {
        let g = GaussianClassModel::fit(0, &[0.0, 0.0, 2.0, 2.0], 2, 2);
        assert_eq!(g.mean, vec![1.0, 1.0]);
    }

    #[test]
    fn standard_fit_density_at_mean() {
        // fit on a large standard-normal cloud; density at the mean ≈ -ln(2π)
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 20000;
        let data: Vec<f64> = (0..n * 2).map(|_| StandardNormal.sample(&mut rng)).collect();
        let g = GaussianClassModel::fit(0, &data, n, 2);
        let lp = g.log_prob_values(&g.mean.clone(), 1);
        assert!((lp[0] + LN_2PI).abs() < 0.05, "{}", lp[0]);
    }

    #[test]
    fn sample_then_fit_recovers_mean() {
        let g = GaussianClassModel::fit(0, &[0.0, 0.0, 2.0, 2.0, 1.0, -1.0, 3.0, 1.0], 4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 10000;
        let s = g.sample(n, &mut rng);
        let refit = GaussianClassModel::fit(0, &s, n, 2);
        for j in 0..2 {
            let sigma = g.cov[j * 2 + j].sqrt();
            let tol = 3.0 * sigma / (n as f64).sqrt();
            assert!((refit.mean[j] - g.mean[j]).abs() < tol);
        }
    }

    #[test]
    fn degenerate_fit_falls_back_to_identity() {
        let g = GaussianClassModel::fit(0, &[1.0, 2.0], 1, 2);
        assert_eq!(g.cov[0], 1.0);
        assert_eq!(g.cov[3], 1.0);
        assert!(g.log_prob_values(&[1.0, 2.0], 1)[0].is_finite());
    }
}
