//! Feed-forward network with several rectifier hidden layers and a linear
//! output, trained by mini-batch SGD on mean squared error with inverted
//! dropout. Dropout is disabled at predict time.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::spec::{DnnParams, WeightInit};
use super::svr::standardize_columns;
use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnnModel {
    /// Flat layout per layer: W (out*in, row-major) then b (out).
    pub params: Vec<f64>,
    pub dims: Vec<usize>,
    pub x_means: Vec<f64>,
    pub x_sds: Vec<f64>,
    pub y_mean: f64,
    pub y_sd: f64,
    pub loss_curve: Vec<f64>,
}

pub fn layer_dims(p: usize, hidden: usize, size: usize) -> Vec<usize> {
    let mut dims = vec![p];
    dims.extend(std::iter::repeat(size).take(hidden));
    dims.push(1);
    dims
}

pub fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

/// Mean squared error (1/N) sum (f(x_i) - y_i)^2 and its gradient.
///
/// `masks`, when given, holds one 0/1 vector per hidden layer, applied to
/// that layer's activations scaled by 1/keep (inverted dropout). A fixed
/// mask makes the loss deterministic for finite-difference checks.
pub fn loss_grad(
    params: &[f64],
    dims: &[usize],
    x: &Matrix,
    rows: &[usize],
    y: &[f64],
    masks: Option<&[Vec<f64>]>,
    keep: f64,
) -> (f64, Vec<f64>) {
    let layers = dims.len() - 1;
    let n = rows.len();
    let mut grad = vec![0.0f64; params.len()];
    let mut offsets = Vec::with_capacity(layers);
    let mut off = 0usize;
    for l in 0..layers {
        offsets.push(off);
        off += dims[l + 1] * dims[l] + dims[l + 1];
    }

    let mut loss = 0.0;
    for &r in rows {
        // Forward, keeping pre-mask activations per layer.
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers + 1);
        acts.push(x.row(r).to_vec());
        for l in 0..layers {
            let (w, b) = layer_slices(params, dims, &offsets, l);
            let input = &acts[l];
            let mut out = vec![0.0f64; dims[l + 1]];
            for j in 0..dims[l + 1] {
                let mut z = b[j];
                for (wi, xi) in w[j * dims[l]..(j + 1) * dims[l]].iter().zip(input) {
                    z += wi * xi;
                }
                if l < layers - 1 {
                    z = z.max(0.0);
                    if let Some(m) = masks {
                        z *= m[l][j] / keep;
                    }
                }
                out[j] = z;
            }
            acts.push(out);
        }
        let diff = acts[layers][0] - y[r];
        loss += diff * diff;

        // Backward.
        let mut delta = vec![2.0 * diff / n as f64];
        for l in (0..layers).rev() {
            let (w, _) = layer_slices(params, dims, &offsets, l);
            let input = &acts[l];
            let goff = offsets[l];
            let wlen = dims[l + 1] * dims[l];
            let mut delta_prev = vec![0.0f64; dims[l]];
            for j in 0..dims[l + 1] {
                let d = delta[j];
                if d == 0.0 {
                    continue;
                }
                grad[goff + wlen + j] += d;
                for i in 0..dims[l] {
                    grad[goff + j * dims[l] + i] += d * input[i];
                    delta_prev[i] += d * w[j * dims[l] + i];
                }
            }
            if l > 0 {
                // Rectifier derivative, including any dropout scaling, via
                // the stored post-activation values.
                for i in 0..dims[l] {
                    if acts[l][i] <= 0.0 {
                        delta_prev[i] = 0.0;
                    } else if let Some(m) = masks {
                        delta_prev[i] *= m[l - 1][i] / keep;
                    }
                }
            }
            delta = delta_prev;
        }
    }
    (loss / n as f64, grad)
}

fn layer_slices<'a>(
    params: &'a [f64],
    dims: &[usize],
    offsets: &[usize],
    l: usize,
) -> (&'a [f64], &'a [f64]) {
    let off = offsets[l];
    let wlen = dims[l + 1] * dims[l];
    (&params[off..off + wlen], &params[off + wlen..off + wlen + dims[l + 1]])
}

pub fn init_params(dims: &[usize], init: WeightInit, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
    let mut params = Vec::with_capacity(param_count(dims));
    for w in dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        match init {
            WeightInit::Uniform => {
                let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
                for _ in 0..fan_out * fan_in {
                    params.push(rng.gen_range(-r..r));
                }
            }
            WeightInit::HeNormal => {
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
                for _ in 0..fan_out * fan_in {
                    params.push(normal.sample(rng));
                }
            }
        }
        params.extend(std::iter::repeat(0.0).take(fan_out));
    }
    params
}

pub fn fit_dnn(x: &Matrix, y: &[f64], params: &DnnParams, seed_value: u64) -> Result<DnnModel> {
    let n = x.nrows();
    let p = x.ncols();
    let (z, x_means, x_sds) = standardize_columns(x);
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let y_var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64;
    let y_sd = if y_var > 0.0 { y_var.sqrt() } else { 1.0 };
    let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_sd).collect();

    let dims = layer_dims(p, params.hidden, params.size);
    let mut rng = seed::rng(seed::derive(seed_value, "dnn-init", 0));
    let mut theta = init_params(&dims, params.init, &mut rng);
    let keep = 1.0 - params.dropout;
    let all_rows: Vec<usize> = (0..n).collect();

    let mut loss_curve = Vec::with_capacity(params.epochs + 1);
    loss_curve.push(loss_grad(&theta, &dims, &z, &all_rows, &ys, None, 1.0).0);

    for epoch in 0..params.epochs {
        let mut epoch_rng = seed::rng(seed::derive(seed_value, "dnn-epoch", epoch as u64));
        let mut order = all_rows.clone();
        use rand::seq::SliceRandom;
        order.shuffle(&mut epoch_rng);
        for batch in order.chunks(params.batch_size) {
            let masks: Option<Vec<Vec<f64>>> = if params.dropout > 0.0 {
                Some(
                    (0..params.hidden)
                        .map(|_| {
                            (0..params.size)
                                .map(|_| if epoch_rng.gen::<f64>() < keep { 1.0 } else { 0.0 })
                                .collect()
                        })
                        .collect(),
                )
            } else {
                None
            };
            let (_, grad) = loss_grad(&theta, &dims, &z, batch, &ys, masks.as_deref(), keep);
            for (t, g) in theta.iter_mut().zip(&grad) {
                *t -= params.learning_rate * g;
            }
        }
        let full = loss_grad(&theta, &dims, &z, &all_rows, &ys, None, 1.0).0;
        if !full.is_finite() {
            return Err(Error::Convergence(format!(
                "DNN loss diverged at epoch {epoch}; try a smaller learning rate"
            )));
        }
        loss_curve.push(full);
    }

    Ok(DnnModel {
        params: theta,
        dims,
        x_means,
        x_sds,
        y_mean,
        y_sd,
        loss_curve,
    })
}

impl DnnModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let z: Vec<f64> = row
            .iter()
            .enumerate()
            .map(|(c, v)| (v - self.x_means[c]) / self.x_sds[c])
            .collect();
        let layers = self.dims.len() - 1;
        let mut off = 0usize;
        let mut act = z;
        for l in 0..layers {
            let (din, dout) = (self.dims[l], self.dims[l + 1]);
            let w = &self.params[off..off + dout * din];
            let b = &self.params[off + dout * din..off + dout * din + dout];
            off += dout * din + dout;
            let mut out = vec![0.0f64; dout];
            for j in 0..dout {
                let mut v = b[j];
                for (wi, xi) in w[j * din..(j + 1) * din].iter().zip(&act) {
                    v += wi * xi;
                }
                out[j] = if l < layers - 1 { v.max(0.0) } else { v };
            }
            act = out;
        }
        act[0] * self.y_sd + self.y_mean
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_params() -> DnnParams {
        DnnParams {
            hidden: 2,
            size: 16,
            init: WeightInit::HeNormal,
            learning_rate: 0.01,
            dropout: 0.0,
            epochs: 30,
            batch_size: 16,
        }
    }

    /// Independent forward pass used as the loss oracle: rebuilds the layer
    /// matrices from the flat vector and evaluates them with plain loops.
    fn oracle_forward(params: &[f64], dims: &[usize], row: &[f64]) -> f64 {
        let mut act: Vec<f64> = row.to_vec();
        let mut off = 0;
        for l in 0..dims.len() - 1 {
            let (din, dout) = (dims[l], dims[l + 1]);
            let mut next = Vec::with_capacity(dout);
            for j in 0..dout {
                let mut v = params[off + dout * din + j];
                for i in 0..din {
                    v += params[off + j * din + i] * act[i];
                }
                next.push(if l < dims.len() - 2 { v.max(0.0) } else { v });
            }
            off += dout * din + dout;
            act = next;
        }
        act[0]
    }

    #[test]
    fn loss_matches_forward_pass_oracle() {
        let mut rng = crate::seed::rng(50);
        let (x, y) = crate::synthetic::friedman1(25, 0.2, 51);
        let dims = layer_dims(x.ncols(), 3, 8);
        let theta: Vec<f64> = (0..param_count(&dims))
            .map(|_| rng.gen_range(-0.4..0.4))
            .collect();
        let rows: Vec<usize> = (0..x.nrows()).collect();
        let (loss, _) = loss_grad(&theta, &dims, &x, &rows, &y, None, 1.0);
        let oracle: f64 = (0..x.nrows())
            .map(|r| (oracle_forward(&theta, &dims, x.row(r)) - y[r]).powi(2))
            .sum::<f64>()
            / x.nrows() as f64;
        assert_abs_diff_eq!(loss, oracle, epsilon = 1e-10);
    }

    #[test]
    fn gradient_matches_central_differences_with_fixed_masks() {
        let mut rng = crate::seed::rng(52);
        let (x, y) = crate::synthetic::friedman1(15, 0.2, 53);
        let dims = layer_dims(x.ncols(), 2, 6);
        let rows: Vec<usize> = (0..x.nrows()).collect();
        let keep = 0.7;
        for trial in 0..5 {
            let theta: Vec<f64> = (0..param_count(&dims))
                .map(|_| rng.gen_range(-0.5..0.5))
                .collect();
            let masks: Vec<Vec<f64>> = (0..2)
                .map(|_| (0..6).map(|_| if rng.gen::<f64>() < keep { 1.0 } else { 0.0 }).collect())
                .collect();
            let (_, grad) = loss_grad(&theta, &dims, &x, &rows, &y, Some(&masks), keep);
            let h = 1e-5;
            let mut max_rel = 0.0f64;
            for k in 0..theta.len() {
                let mut tp = theta.clone();
                tp[k] += h;
                let mut tm = theta.clone();
                tm[k] -= h;
                let fp = loss_grad(&tp, &dims, &x, &rows, &y, Some(&masks), keep).0;
                let fm = loss_grad(&tm, &dims, &x, &rows, &y, Some(&masks), keep).0;
                let fd = (fp - fm) / (2.0 * h);
                let denom = grad[k].abs().max(fd.abs()).max(1e-6);
                max_rel = max_rel.max((grad[k] - fd).abs() / denom);
            }
            assert!(max_rel < 1e-4, "trial {trial}: max relative error {max_rel}");
        }
    }

    #[test]
    fn no_dropout_training_is_deterministic() {
        let (x, y) = crate::synthetic::friedman1(60, 0.3, 54);
        let a = fit_dnn(&x, &y, &small_params(), 8).unwrap();
        let b = fit_dnn(&x, &y, &small_params(), 8).unwrap();
        assert_eq!(a.params.len(), b.params.len());
        for (u, v) in a.params.iter().zip(&b.params) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn training_reduces_loss() {
        let (x, y) = crate::synthetic::friedman1(150, 0.3, 55);
        let params = DnnParams {
            epochs: 60,
            ..small_params()
        };
        let model = fit_dnn(&x, &y, &params, 9).unwrap();
        let first = model.loss_curve[0];
        let last = *model.loss_curve.last().unwrap();
        assert!(last < 0.5 * first, "loss {first} -> {last}");
    }

    #[test]
    fn dropout_training_still_finite_and_seeded() {
        let (x, y) = crate::synthetic::friedman1(80, 0.3, 56);
        let params = DnnParams {
            dropout: 0.3,
            epochs: 20,
            ..small_params()
        };
        let a = fit_dnn(&x, &y, &params, 10).unwrap();
        let b = fit_dnn(&x, &y, &params, 10).unwrap();
        for r in 0..x.nrows() {
            let pa = a.predict_row(x.row(r));
            assert!(pa.is_finite());
            assert_eq!(pa.to_bits(), b.predict_row(x.row(r)).to_bits());
        }
    }

    #[test]
    fn uniform_init_also_trains() {
        let (x, y) = crate::synthetic::friedman1(80, 0.3, 57);
        let params = DnnParams {
            init: WeightInit::Uniform,
            epochs: 40,
            ..small_params()
        };
        let model = fit_dnn(&x, &y, &params, 11).unwrap();
        assert!(model.loss_curve.last().unwrap() < &model.loss_curve[0]);
    }
}
