//! Single-hidden-layer network: sigmoid hidden units, linear output,
//! full-batch gradient descent on MSE plus L2 weight decay.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::spec::AnnParams;
use super::svr::standardize_columns;
use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    /// Flat layout: w1 (size*p), b1 (size), w2 (size), b2 (1).
    pub params: Vec<f64>,
    pub size: usize,
    pub n_inputs: usize,
    pub x_means: Vec<f64>,
    pub x_sds: Vec<f64>,
    pub y_mean: f64,
    pub y_sd: f64,
    pub loss_curve: Vec<f64>,
}

pub fn param_count(p: usize, size: usize) -> usize {
    size * p + size + size + 1
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Forward pass on one standardized row.
pub fn forward(params: &[f64], p: usize, size: usize, row: &[f64]) -> f64 {
    let (w1, rest) = params.split_at(size * p);
    let (b1, rest) = rest.split_at(size);
    let (w2, b2) = rest.split_at(size);
    let mut out = b2[0];
    for j in 0..size {
        let z = b1[j]
            + w1[j * p..(j + 1) * p]
                .iter()
                .zip(row)
                .map(|(w, x)| w * x)
                .sum::<f64>();
        out += w2[j] * sigmoid(z);
    }
    out
}

/// Full-batch loss and analytic gradient.
///
/// loss = (1/n) sum (f(x_i) - y_i)^2 + decay * (|w1|^2 + |w2|^2); biases
/// are not decayed.
pub fn loss_grad(
    params: &[f64],
    x: &Matrix,
    y: &[f64],
    size: usize,
    decay: f64,
) -> (f64, Vec<f64>) {
    let n = x.nrows();
    let p = x.ncols();
    let (w1, rest) = params.split_at(size * p);
    let (b1, rest) = rest.split_at(size);
    let (w2, b2) = rest.split_at(size);

    let mut grad = vec![0.0f64; params.len()];
    let (gw1, grest) = grad.split_at_mut(size * p);
    let (gb1, grest) = grest.split_at_mut(size);
    let (gw2, gb2) = grest.split_at_mut(size);

    let mut loss = 0.0;
    let mut act = vec![0.0f64; size];
    for r in 0..n {
        let row = x.row(r);
        let mut out = b2[0];
        for j in 0..size {
            let z = b1[j]
                + w1[j * p..(j + 1) * p]
                    .iter()
                    .zip(row)
                    .map(|(w, v)| w * v)
                    .sum::<f64>();
            act[j] = sigmoid(z);
            out += w2[j] * act[j];
        }
        let diff = out - y[r];
        loss += diff * diff;
        let dout = 2.0 * diff / n as f64;
        gb2[0] += dout;
        for j in 0..size {
            gw2[j] += dout * act[j];
            let dz = dout * w2[j] * act[j] * (1.0 - act[j]);
            gb1[j] += dz;
            for c in 0..p {
                gw1[j * p + c] += dz * row[c];
            }
        }
    }
    loss /= n as f64;

    let w_sq: f64 = w1.iter().chain(w2).map(|w| w * w).sum();
    loss += decay * w_sq;
    for (g, w) in gw1.iter_mut().zip(w1) {
        *g += 2.0 * decay * w;
    }
    for (g, w) in gw2.iter_mut().zip(w2) {
        *g += 2.0 * decay * w;
    }
    (loss, grad)
}

pub fn fit_mlp(x: &Matrix, y: &[f64], params: &AnnParams, seed_value: u64) -> Result<MlpModel> {
    let n = x.nrows();
    let p = x.ncols();
    let (z, x_means, x_sds) = standardize_columns(x);
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let y_var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64;
    let y_sd = if y_var > 0.0 { y_var.sqrt() } else { 1.0 };
    let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_sd).collect();

    let mut rng = seed::rng(seed::derive(seed_value, "mlp-init", 0));
    let scale = (1.0 / p as f64).sqrt();
    let mut theta: Vec<f64> = (0..param_count(p, params.size))
        .map(|_| rng.gen_range(-scale..scale))
        .collect();

    let mut loss_curve = Vec::with_capacity(params.epochs + 1);
    for epoch in 0..=params.epochs {
        let (loss, grad) = loss_grad(&theta, &z, &ys, params.size, params.decay);
        if !loss.is_finite() {
            return Err(Error::Convergence(format!(
                "ANN loss diverged at epoch {epoch}; try a smaller step size"
            )));
        }
        loss_curve.push(loss);
        if epoch == params.epochs {
            break;
        }
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= params.step * g;
        }
    }

    Ok(MlpModel {
        params: theta,
        size: params.size,
        n_inputs: p,
        x_means,
        x_sds,
        y_mean,
        y_sd,
        loss_curve,
    })
}

impl MlpModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let z: Vec<f64> = row
            .iter()
            .enumerate()
            .map(|(c, v)| (v - self.x_means[c]) / self.x_sds[c])
            .collect();
        forward(&self.params, self.n_inputs, self.size, &z) * self.y_sd + self.y_mean
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_epochs_is_finite_initial_pass() {
        let (x, y) = crate::synthetic::friedman1(30, 0.1, 40);
        let params = AnnParams {
            epochs: 0,
            ..AnnParams::default()
        };
        let model = fit_mlp(&x, &y, &params, 3).unwrap();
        assert_eq!(model.loss_curve.len(), 1);
        for r in 0..x.nrows() {
            assert!(model.predict_row(x.row(r)).is_finite());
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = crate::seed::rng(41);
        let (x, y) = crate::synthetic::friedman1(20, 0.2, 42);
        let (z, _, _) = standardize_columns(&x);
        let size = 4;
        let dim = param_count(x.ncols(), size);
        for _ in 0..5 {
            let theta: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let (_, grad) = loss_grad(&theta, &z, &y, size, 0.01);
            let h = 1e-5;
            let mut max_rel = 0.0f64;
            for k in 0..dim {
                let mut tp = theta.clone();
                tp[k] += h;
                let mut tm = theta.clone();
                tm[k] -= h;
                let fd = (loss_grad(&tp, &z, &y, size, 0.01).0
                    - loss_grad(&tm, &z, &y, size, 0.01).0)
                    / (2.0 * h);
                let denom = grad[k].abs().max(fd.abs()).max(1e-8);
                max_rel = max_rel.max((grad[k] - fd).abs() / denom);
            }
            assert!(max_rel < 1e-4, "max relative gradient error {max_rel}");
        }
    }

    #[test]
    fn learns_linear_target() {
        let mut rng = crate::seed::rng(43);
        let rows: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 3.0 * r[0]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let params = AnnParams {
            size: 2,
            decay: 0.001,
            epochs: 6000,
            step: 0.2,
        };
        let model = fit_mlp(&x, &y, &params, 5).unwrap();
        let preds: Vec<f64> = rows.iter().map(|r| model.predict_row(r)).collect();
        let r2 = crate::metrics::r2(&y, &preds).unwrap();
        assert!(r2 > 0.99, "training R2 = {r2}");
    }

    #[test]
    fn deterministic_for_seed() {
        let (x, y) = crate::synthetic::friedman1(40, 0.3, 44);
        let params = AnnParams {
            epochs: 200,
            ..AnnParams::default()
        };
        let a = fit_mlp(&x, &y, &params, 6).unwrap();
        let b = fit_mlp(&x, &y, &params, 6).unwrap();
        for r in 0..x.nrows() {
            assert_eq!(a.predict_row(x.row(r)).to_bits(), b.predict_row(x.row(r)).to_bits());
        }
    }

    #[test]
    fn loss_curve_descends() {
        let (x, y) = crate::synthetic::friedman1(80, 0.2, 45);
        let params = AnnParams {
            epochs: 500,
            step: 0.05,
            ..AnnParams::default()
        };
        let model = fit_mlp(&x, &y, &params, 7).unwrap();
        let first = model.loss_curve[0];
        let last = *model.loss_curve.last().unwrap();
        assert!(last < first, "loss {first} -> {last}");
        assert_abs_diff_eq!(model.loss_curve.len() as f64, 501.0);
    }
}
