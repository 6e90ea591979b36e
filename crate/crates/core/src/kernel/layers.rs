//! Elementwise and row-wise layers with their adjoints.
//!
//! Matrices are `[rows × cols]` row-major; "row-wise" ops treat each row
//! as an independent sample.

use rand::Rng;

use super::tensor::{axpy, dot, Tensor};
use crate::error::{Error, Result};

pub const LAYERNORM_EPS: f64 = 1e-5;

/// `y = W·x + b` for a single vector.
pub fn matvec(w: &Tensor, x: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if w.shape().len() != 2 || w.cols() != x.len() || w.rows() != b.len() {
        return Err(Error::dim(format!(
            "matvec: W {:?}, x [{}], b [{}]",
            w.shape(),
            x.len(),
            b.len()
        )));
    }
    let y: Vec<f64> = (0..w.rows()).map(|i| dot(w.row(i), x) + b[i]).collect();
    Ok(y)
}

/// Batched affine map `Y = X·Wᵀ + b`, X `[B×n]`, W `[m×n]`, b `[m]`.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (batch, n) = (x.rows(), x.cols());
    let m = w.rows();
    if w.shape().len() != 2 || w.cols() != n || b.len() != m {
        return Err(Error::dim(format!(
            "linear: X {:?}, W {:?}, b {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let mut out = vec![0.0; batch * m];
    for r in 0..batch {
        let xr = x.row(r);
        let yr = &mut out[r * m..(r + 1) * m];
        for (i, y) in yr.iter_mut().enumerate() {
            *y = dot(w.row(i), xr) + b.data()[i];
        }
    }
    Tensor::matrix(batch, m, out)
}

/// Gradients of [`linear`]: `(dX, dW, db)`. `dX` is skipped unless `need_dx`.
pub fn linear_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
    need_dx: bool,
) -> (Option<Tensor>, Tensor, Tensor) {
    let (batch, n) = (x.rows(), x.cols());
    let m = w.rows();
    let mut dx = need_dx.then(|| Tensor::zeros(&[batch, n]));
    let mut dw = Tensor::zeros(&[m, n]);
    let mut db = Tensor::zeros(&[m]);
    for r in 0..batch {
        let xr = x.row(r);
        let gr = dy.row(r);
        for (i, &g) in gr.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            db.data_mut()[i] += g;
            axpy(g, xr, dw.row_mut(i));
            if let Some(dx) = dx.as_mut() {
                axpy(g, w.row(i), dx.row_mut(r));
            }
        }
    }
    (dx, dw, db)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Exact (erf-based) GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

/// Numerically stable softmax of one vector.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Vector-Jacobian product of softmax: `p ⊙ (g − ⟨g, p⟩)`.
pub fn softmax_backward(probs: &[f64], upstream: &[f64]) -> Vec<f64> {
    let inner = dot(probs, upstream);
    probs
        .iter()
        .zip(upstream)
        .map(|(p, g)| p * (g - inner))
        .collect()
}

pub fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Saved per-row statistics of a layer-norm forward pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub normalized: Tensor,
    pub inv_std: Vec<f64>,
}

/// Row-wise `γ ⊙ (x − μ)/√(σ² + ε) + β` with biased variance.
pub fn layernorm(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<(Tensor, LayerNormCache)> {
    let n = x.cols();
    if gamma.len() != n || beta.len() != n {
        return Err(Error::dim(format!(
            "layernorm: width {n}, gamma {:?}, beta {:?}",
            gamma.shape(),
            beta.shape()
        )));
    }
    let mut out = x.clone();
    let mut normalized = x.clone();
    let mut inv_std = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / n as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let istd = 1.0 / (var + LAYERNORM_EPS).sqrt();
        inv_std.push(istd);
        let nr = normalized.row_mut(r);
        for (j, v) in nr.iter_mut().enumerate() {
            *v = (row[j] - mean) * istd;
        }
        let nr = normalized.row(r).to_vec();
        for (j, o) in out.row_mut(r).iter_mut().enumerate() {
            *o = gamma.data()[j] * nr[j] + beta.data()[j];
        }
    }
    Ok((out, LayerNormCache { normalized, inv_std }))
}

/// Gradients of [`layernorm`]: `(dx, dγ, dβ)`.
pub fn layernorm_backward(
    cache: &LayerNormCache,
    gamma: &Tensor,
    dy: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let n = dy.cols();
    let mut dx = Tensor::zeros(dy.shape());
    let mut dgamma = Tensor::zeros(&[n]);
    let mut dbeta = Tensor::zeros(&[n]);
    for r in 0..dy.rows() {
        let g = dy.row(r);
        let xhat = cache.normalized.row(r);
        let mut dxhat = vec![0.0; n];
        for j in 0..n {
            dgamma.data_mut()[j] += g[j] * xhat[j];
            dbeta.data_mut()[j] += g[j];
            dxhat[j] = g[j] * gamma.data()[j];
        }
        let mean_d = dxhat.iter().sum::<f64>() / n as f64;
        let mean_dx = dot(&dxhat, xhat) / n as f64;
        let istd = cache.inv_std[r];
        for (j, d) in dx.row_mut(r).iter_mut().enumerate() {
            *d = istd * (dxhat[j] - mean_d - xhat[j] * mean_dx);
        }
    }
    (dx, dgamma, dbeta)
}

/// Inverted-dropout mask: each entry is 0 with probability `p`, else `1/(1−p)`.
pub fn dropout_mask<R: Rng + ?Sized>(len: usize, p: f64, rng: &mut R) -> Result<Vec<f64>> {
    check_dropout_rate(p)?;
    let keep = 1.0 / (1.0 - p);
    Ok((0..len)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect())
}

pub fn check_dropout_rate(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::config(format!("dropout rate {p} outside [0, 1)")));
    }
    Ok(())
}

/// Average over the rows of `[L×n]`, giving a vector of width `n`.
pub fn mean_pool(x: &Tensor) -> Vec<f64> {
    let (l, n) = (x.rows(), x.cols());
    let mut out = vec![0.0; n];
    for r in 0..l {
        axpy(1.0, x.row(r), &mut out);
    }
    out.iter_mut().for_each(|v| *v /= l as f64);
    out
}

/// Adjoint of [`mean_pool`]: every row receives `upstream / L`.
pub fn mean_pool_backward(rows: usize, upstream: &[f64]) -> Tensor {
    let scaled: Vec<f64> = upstream.iter().map(|g| g / rows as f64).collect();
    let data = (0..rows).flat_map(|_| scaled.iter().copied()).collect();
    Tensor::matrix(rows, upstream.len(), data).expect("rows > 0")
}
