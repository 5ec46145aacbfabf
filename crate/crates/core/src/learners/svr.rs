//! Epsilon-insensitive support vector regression with an RBF kernel,
//! solved by SMO-style most-violating-pair coordinate optimization.

use serde::{Deserialize, Serialize};

use super::spec::SvrParams;
use crate::data::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    /// Dual coefficients beta_i = alpha_i - alpha*_i on the standardized scale.
    pub beta: Vec<f64>,
    pub bias: f64,
    /// Standardized training inputs (support rows kept with beta != 0 pruned lazily).
    pub train_x: Matrix,
    pub sigma: f64,
    pub x_means: Vec<f64>,
    pub x_sds: Vec<f64>,
    pub y_mean: f64,
    pub y_sd: f64,
    pub duality_gap: f64,
}

pub fn rbf(u: &[f64], v: &[f64], sigma: f64) -> f64 {
    let d2: f64 = u.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
    (-d2 / (2.0 * sigma * sigma)).exp()
}

pub fn standardize_columns(x: &Matrix) -> (Matrix, Vec<f64>, Vec<f64>) {
    let (n, p) = (x.nrows(), x.ncols());
    let mut means = vec![0.0; p];
    let mut sds = vec![0.0; p];
    for c in 0..p {
        let col = x.column(c);
        let m = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
        means[c] = m;
        sds[c] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    let mut z = Matrix::zeros(n, p);
    for r in 0..n {
        for c in 0..p {
            z.set(r, c, (x.get(r, c) - means[c]) / sds[c]);
        }
    }
    (z, means, sds)
}

/// Raw SMO solve on already-standardized data. Returns (beta, bias, gap).
///
/// Dual: minimize 1/2 b'Kb - y'b + eps*sum(alpha + alpha*) over
/// alpha, alpha* in [0, C] with sum(beta) = 0.
pub fn solve_smo(
    kernel: &[Vec<f64>],
    y: &[f64],
    c: f64,
    epsilon: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, f64, f64)> {
    let n = y.len();
    let mut alpha = vec![0.0f64; n];
    let mut alpha_star = vec![0.0f64; n];
    let mut h = vec![0.0f64; n]; // h = K beta

    let mut iter = 0usize;
    let mut violation;
    loop {
        // Most-violating pair over the 2n-variable formulation.
        // For alpha_i   (sign +): directional gradient g = h_i - y_i + eps.
        // For alpha*_i  (sign -): directional gradient g = h_i - y_i - eps.
        let mut min_up = f64::INFINITY;
        let mut max_low = f64::NEG_INFINITY;
        let mut i_up = usize::MAX;
        let mut i_low = usize::MAX;
        let mut up_is_star = false;
        let mut low_is_star = false;
        for i in 0..n {
            let g_a = h[i] - y[i] + epsilon;
            let g_s = h[i] - y[i] - epsilon;
            if alpha[i] < c && g_a < min_up {
                min_up = g_a;
                i_up = i;
                up_is_star = false;
            }
            if alpha_star[i] > 0.0 && g_s < min_up {
                min_up = g_s;
                i_up = i;
                up_is_star = true;
            }
            if alpha[i] > 0.0 && g_a > max_low {
                max_low = g_a;
                i_low = i;
                low_is_star = false;
            }
            if alpha_star[i] < c && g_s > max_low {
                max_low = g_s;
                i_low = i;
                low_is_star = true;
            }
        }
        violation = max_low - min_up;
        if violation <= tol || i_up == usize::MAX || i_low == usize::MAX {
            break;
        }
        if iter >= max_iter {
            return Err(Error::Convergence(format!(
                "SMO did not reach KKT tolerance after {max_iter} iterations (violation {violation:.3e})"
            )));
        }
        iter += 1;

        let (iu, il) = (i_up, i_low);
        let eta = (kernel[iu][iu] + kernel[il][il] - 2.0 * kernel[iu][il]).max(1e-12);
        let mut lambda = violation / eta;
        // Box limits: the up-variable increases, the low-variable decreases.
        let up_room = if up_is_star { alpha_star[iu] } else { c - alpha[iu] };
        let low_room = if low_is_star { c - alpha_star[il] } else { alpha[il] };
        lambda = lambda.min(up_room).min(low_room);
        if lambda <= 0.0 {
            break;
        }
        if up_is_star {
            alpha_star[iu] -= lambda;
        } else {
            alpha[iu] += lambda;
        }
        if low_is_star {
            alpha_star[il] += lambda;
        } else {
            alpha[il] -= lambda;
        }
        // beta_iu += lambda, beta_il -= lambda.
        for r in 0..n {
            h[r] += lambda * (kernel[iu][r] - kernel[il][r]);
        }
    }

    let beta: Vec<f64> = (0..n).map(|i| alpha[i] - alpha_star[i]).collect();

    // Bias from free support vectors, else midpoint of the KKT interval.
    let mut b_sum = 0.0;
    let mut b_count = 0usize;
    for i in 0..n {
        if alpha[i] > 1e-9 && alpha[i] < c - 1e-9 {
            b_sum += y[i] - h[i] - epsilon;
            b_count += 1;
        }
        if alpha_star[i] > 1e-9 && alpha_star[i] < c - 1e-9 {
            b_sum += y[i] - h[i] + epsilon;
            b_count += 1;
        }
    }
    let bias = if b_count > 0 {
        b_sum / b_count as f64
    } else {
        let mut min_up = f64::INFINITY;
        let mut max_low = f64::NEG_INFINITY;
        for i in 0..n {
            let g_a = h[i] - y[i] + epsilon;
            let g_s = h[i] - y[i] - epsilon;
            if alpha[i] < c {
                min_up = min_up.min(g_a);
            }
            if alpha_star[i] > 0.0 {
                min_up = min_up.min(g_s);
            }
            if alpha[i] > 0.0 {
                max_low = max_low.max(g_a);
            }
            if alpha_star[i] < c {
                max_low = max_low.max(g_s);
            }
        }
        if min_up.is_finite() && max_low.is_finite() {
            -(min_up + max_low) / 2.0
        } else {
            0.0
        }
    };

    // Duality gap at the solution.
    let quad = 0.5 * beta.iter().zip(&h).map(|(b, hh)| b * hh).sum::<f64>();
    let dual = -(quad + epsilon * (alpha.iter().sum::<f64>() + alpha_star.iter().sum::<f64>())
        - y.iter().zip(&beta).map(|(yi, bi)| yi * bi).sum::<f64>());
    let primal = quad
        + c * (0..n)
            .map(|i| (y[i] - h[i] - bias).abs() - epsilon)
            .map(|v| v.max(0.0))
            .sum::<f64>();
    let gap = primal - dual;

    Ok((beta, bias, gap))
}

pub fn fit_svr(x: &Matrix, y: &[f64], params: &SvrParams) -> Result<SvrModel> {
    let n = x.nrows();
    let (z, x_means, x_sds) = standardize_columns(x);
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let y_var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64;
    let y_sd = if y_var > 0.0 { y_var.sqrt() } else { 1.0 };
    let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_sd).collect();

    let kernel: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| rbf(z.row(i), z.row(j), params.sigma)).collect())
        .collect();
    let (beta, bias, gap) = solve_smo(
        &kernel,
        &ys,
        params.c,
        params.epsilon,
        params.tol,
        params.max_iter,
    )?;

    Ok(SvrModel {
        beta,
        bias,
        train_x: z,
        sigma: params.sigma,
        x_means,
        x_sds,
        y_mean,
        y_sd,
        duality_gap: gap,
    })
}

impl SvrModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let z: Vec<f64> = row
            .iter()
            .enumerate()
            .map(|(c, v)| (v - self.x_means[c]) / self.x_sds[c])
            .collect();
        let f: f64 = self
            .beta
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(i, b)| b * rbf(self.train_x.row(i), &z, self.sigma))
            .sum::<f64>()
            + self.bias;
        f * self.y_sd + self.y_mean
    }

    pub fn support_vector_count(&self) -> usize {
        self.beta.iter().filter(|b| b.abs() > 1e-9).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn params(c: f64, sigma: f64, epsilon: f64) -> SvrParams {
        SvrParams {
            c,
            sigma,
            epsilon,
            ..SvrParams::default()
        }
    }

    #[test]
    fn flat_targets_inside_tube_give_bias_only() {
        // All |y - mean| <= eps on the standardized scale: no support vectors.
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let y = [1.0, 1.01, 0.99, 1.0];
        let model = fit_svr(&x, &y, &params(10.0, 1.0, 2.0)).unwrap();
        assert_eq!(model.support_vector_count(), 0);
        let mean = y.iter().sum::<f64>() / 4.0;
        assert_abs_diff_eq!(model.predict_row(&[1.5]), mean, epsilon = 0.05);
    }

    #[test]
    fn identical_points_predict_their_target() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        let y = [3.0, 3.0];
        let model = fit_svr(&x, &y, &params(1.0, 1.0, 0.1)).unwrap();
        assert_abs_diff_eq!(model.predict_row(&[1.0, 2.0]), 3.0, epsilon = 1e-6);
    }

    #[test]
    fn fits_smooth_function() {
        let mut rng = crate::seed::rng(31);
        let rows: Vec<Vec<f64>> = (0..80).map(|_| vec![rng.gen_range(-2.0..2.0)]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0].sin()).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let model = fit_svr(&x, &y, &params(10.0, 0.5, 0.01)).unwrap();
        let preds: Vec<f64> = rows.iter().map(|r| model.predict_row(r)).collect();
        let r2 = crate::metrics::r2(&y, &preds).unwrap();
        assert!(r2 > 0.95, "R2 = {r2}");
    }

    /// Projected-gradient QP oracle over (alpha, alpha*) in the box with
    /// the sum constraint, used to cross-check the SMO dual objective.
    pub fn projected_gradient_dual(
        kernel: &[Vec<f64>],
        y: &[f64],
        c: f64,
        epsilon: f64,
        iters: usize,
    ) -> f64 {
        let n = y.len();
        let dim = 2 * n;
        let sign = |k: usize| if k < n { 1.0 } else { -1.0 };
        let idx = |k: usize| if k < n { k } else { k - n };
        let mut t = vec![0.0f64; dim];

        // Projection of z onto {t in [0,C]^dim : sum(sign*t) = 0} by
        // bisection on the hyperplane multiplier.
        let project = |z: &[f64]| -> Vec<f64> {
            let constraint = |nu: f64| -> f64 {
                (0..dim)
                    .map(|k| sign(k) * (z[k] + nu * sign(k)).clamp(0.0, c))
                    .sum()
            };
            let (mut lo, mut hi) = (-1e6, 1e6);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if constraint(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let nu = 0.5 * (lo + hi);
            (0..dim).map(|k| (z[k] + nu * sign(k)).clamp(0.0, c)).collect()
        };

        // Lipschitz estimate: row sums of |Q| are bounded by n (RBF <= 1).
        let step = 1.0 / (n as f64 + 1.0);
        for _ in 0..iters {
            let beta: Vec<f64> = (0..n).map(|i| t[i] - t[n + i]).collect();
            let h: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| kernel[i][j] * beta[j]).sum())
                .collect();
            let grad: Vec<f64> = (0..dim)
                .map(|k| sign(k) * h[idx(k)] + epsilon - sign(k) * y[idx(k)])
                .collect();
            let z: Vec<f64> = (0..dim).map(|k| t[k] - step * grad[k]).collect();
            t = project(&z);
        }
        let beta: Vec<f64> = (0..n).map(|i| t[i] - t[n + i]).collect();
        let h: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| kernel[i][j] * beta[j]).sum())
            .collect();
        let quad = 0.5 * beta.iter().zip(&h).map(|(b, hh)| b * hh).sum::<f64>();
        -(quad + epsilon * t.iter().sum::<f64>()
            - y.iter().zip(&beta).map(|(yi, bi)| yi * bi).sum::<f64>())
    }

    #[test]
    fn dual_matches_projected_gradient_oracle() {
        let mut rng = crate::seed::rng(32);
        for trial in 0..5 {
            let n = 10;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let y: Vec<f64> = rows.iter().map(|r| r[0] + 0.5 * r[1]).collect();
            let x = Matrix::from_rows(&rows).unwrap();
            let (z, _, _) = standardize_columns(&x);
            let kernel: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..n).map(|j| rbf(z.row(i), z.row(j), 1.0)).collect())
                .collect();
            let (beta, _, gap) = solve_smo(&kernel, &y, 5.0, 0.1, 1e-4, 200_000).unwrap();
            let quad = {
                let h: Vec<f64> = (0..n)
                    .map(|i| (0..n).map(|j| kernel[i][j] * beta[j]).sum())
                    .collect();
                0.5 * beta.iter().zip(&h).map(|(b, hh)| b * hh).sum::<f64>()
            };
            let abs_sum: f64 = beta.iter().map(|b| b.abs()).sum();
            let smo_dual = -(quad + 0.1 * abs_sum
                - y.iter().zip(&beta).map(|(yi, bi)| yi * bi).sum::<f64>());
            let oracle = projected_gradient_dual(&kernel, &y, 5.0, 0.1, 20_000);
            assert!(
                (smo_dual - oracle).abs() < 1e-3,
                "trial {trial}: SMO dual {smo_dual} vs oracle {oracle}"
            );
            assert!(gap.abs() < 1e-3, "trial {trial}: duality gap {gap}");
        }
    }
}
