//! Classification and contrastive objectives.
//!
//! Each loss has a plain evaluation and a tape recording with a hand-written
//! adjoint. The contrastive terms compare rows of two `[B×d]` batches by
//! cosine similarity, using the other rows of the batch as negatives.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::tensor::{dot, l2_norm};
use crate::kernel::{Adjoint, GradTape, Tensor, Var};

/// Weight of the averaged intra-modal terms.
pub const INTRA_WEIGHT: f64 = 0.3;
/// Weight of the cross-modal term.
pub const CROSS_WEIGHT: f64 = 0.7;
pub const TAU_INTRA: f64 = 0.07;
pub const TAU_CROSS: f64 = 0.05;
pub const AUGMENT_SIGMA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LossBreakdown {
    pub ce: f64,
    pub intra_text: f64,
    pub intra_image: f64,
    pub cross: f64,
    pub total: f64,
}

pub fn total_loss(ce: f64, intra_text: f64, intra_image: f64, cross: f64) -> LossBreakdown {
    LossBreakdown {
        ce,
        intra_text,
        intra_image,
        cross,
        total: ce + INTRA_WEIGHT * (intra_text + intra_image) / 2.0 + CROSS_WEIGHT * cross,
    }
}

fn row_softmax(row: &[f64]) -> (Vec<f64>, f64) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    (e.iter().map(|v| v / s).collect(), m + s.ln())
}

fn check_labels(logits: &Tensor, labels: &[usize]) -> Result<()> {
    if logits.rows() != labels.len() {
        return Err(Error::dim(format!(
            "{} label(s) for {} logit row(s)",
            labels.len(),
            logits.rows()
        )));
    }
    let c = logits.cols();
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::Contract(format!("label {bad} out of range for {c} classes")));
    }
    Ok(())
}

/// Mean over rows of `−log softmax(logits)[label]`.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    check_labels(logits, labels)?;
    let b = labels.len() as f64;
    Ok(labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let (_, lse) = row_softmax(logits.row(i));
            lse - logits.row(i)[y]
        })
        .sum::<f64>()
        / b)
}

struct CrossEntropyAdjoint {
    labels: Vec<usize>,
}

impl Adjoint for CrossEntropyAdjoint {
    fn name(&self) -> &'static str {
        "cross_entropy"
    }

    fn backward(&self, up: &Tensor, inputs: &[&Tensor], _: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let logits = inputs[0];
        let scale = up.data()[0] / self.labels.len() as f64;
        let mut g = Tensor::zeros(logits.shape());
        for (i, &y) in self.labels.iter().enumerate() {
            let (p, _) = row_softmax(logits.row(i));
            let row = g.row_mut(i);
            for (j, pj) in p.into_iter().enumerate() {
                row[j] = scale * (pj - if j == y { 1.0 } else { 0.0 });
            }
        }
        vec![Some(g)]
    }
}

pub fn record_cross_entropy(tape: &mut GradTape, logits: Var, labels: &[usize]) -> Result<Var> {
    let value = cross_entropy(tape.value(logits), labels)?;
    tape.custom(
        &[logits],
        Tensor::scalar(value),
        Box::new(CrossEntropyAdjoint {
            labels: labels.to_vec(),
        }),
    )
}

fn unit_rows(x: &Tensor, what: &str) -> Result<(Tensor, Vec<f64>)> {
    let mut out = x.clone();
    let mut norms = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let n = l2_norm(x.row(i));
        if !(n > 0.0) {
            return Err(Error::Degenerate(format!("{what} row {i} has zero norm")));
        }
        out.row_mut(i).iter_mut().for_each(|v| *v /= n);
        norms.push(n);
    }
    Ok((out, norms))
}

struct InfoNceForward {
    xn: Tensor,
    yn: Tensor,
    x_norms: Vec<f64>,
    y_norms: Vec<f64>,
    /// Row-softmax of the similarity matrix.
    probs: Vec<Vec<f64>>,
    loss: f64,
}

fn info_nce_forward(x: &Tensor, y: &Tensor, tau: f64) -> Result<InfoNceForward> {
    if x.shape() != y.shape() || x.shape().len() != 2 {
        return Err(Error::dim(format!("info_nce: {:?} vs {:?}", x.shape(), y.shape())));
    }
    if !(tau > 0.0) {
        return Err(Error::config(format!("temperature {tau} must be > 0")));
    }
    let (xn, x_norms) = unit_rows(x, "anchor")?;
    let (yn, y_norms) = unit_rows(y, "positive")?;
    let b = x.rows();
    let mut probs = Vec::with_capacity(b);
    let mut loss = 0.0;
    for i in 0..b {
        let s: Vec<f64> = (0..b).map(|j| dot(xn.row(i), yn.row(j)) / tau).collect();
        let (p, lse) = row_softmax(&s);
        let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        loss += if s[i] == m {
            // Keeps relative accuracy when the positive dominates.
            s.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, v)| (v - s[i]).exp())
                .sum::<f64>()
                .ln_1p()
        } else {
            lse - s[i]
        };
        probs.push(p);
    }
    Ok(InfoNceForward {
        xn,
        yn,
        x_norms,
        y_norms,
        probs,
        loss: loss / b as f64,
    })
}

/// Mean over anchors `i` of `−log(exp(cos(x_i,y_i)/τ) / Σ_j exp(cos(x_i,y_j)/τ))`.
pub fn info_nce(x: &Tensor, y: &Tensor, tau: f64) -> Result<f64> {
    Ok(info_nce_forward(x, y, tau)?.loss)
}

struct InfoNceAdjoint {
    tau: f64,
    fwd: InfoNceForward,
}

/// Gradient through `x ↦ x/‖x‖` for one row.
fn unnormalize_grad(unit: &[f64], norm: f64, g_unit: &[f64]) -> Vec<f64> {
    let proj = dot(unit, g_unit);
    unit.iter().zip(g_unit).map(|(u, g)| (g - u * proj) / norm).collect()
}

impl Adjoint for InfoNceAdjoint {
    fn name(&self) -> &'static str {
        "info_nce"
    }

    fn backward(&self, up: &Tensor, _: &[&Tensor], _: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        let f = &self.fwd;
        let b = f.xn.rows();
        let d = f.xn.cols();
        let scale = up.data()[0] / (self.tau * b as f64);
        let mut gxn = Tensor::zeros(&[b, d]);
        let mut gyn = Tensor::zeros(&[b, d]);
        for i in 0..b {
            for j in 0..b {
                let ds = scale * (f.probs[i][j] - if i == j { 1.0 } else { 0.0 });
                if ds == 0.0 {
                    continue;
                }
                for k in 0..d {
                    gxn.row_mut(i)[k] += ds * f.yn.get(j, k);
                    gyn.row_mut(j)[k] += ds * f.xn.get(i, k);
                }
            }
        }
        let finish = |unit: &Tensor, norms: &[f64], g: &Tensor| -> Tensor {
            let mut out = Tensor::zeros(&[b, d]);
            for i in 0..b {
                out.row_mut(i)
                    .copy_from_slice(&unnormalize_grad(unit.row(i), norms[i], g.row(i)));
            }
            out
        };
        vec![
            needs[0].then(|| finish(&f.xn, &f.x_norms, &gxn)),
            needs[1].then(|| finish(&f.yn, &f.y_norms, &gyn)),
        ]
    }
}

pub fn record_info_nce(tape: &mut GradTape, x: Var, y: Var, tau: f64) -> Result<Var> {
    let fwd = info_nce_forward(tape.value(x), tape.value(y), tau)?;
    let value = Tensor::scalar(fwd.loss);
    tape.custom(&[x, y], value, Box::new(InfoNceAdjoint { tau, fwd }))
}

fn gaussian_like<R: Rng + ?Sized>(shape: &[usize], sigma: f64, rng: &mut R) -> Tensor {
    let mut n = Tensor::zeros(shape);
    for v in n.data_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v = sigma * z;
    }
    n
}

/// `y_i = (x_i + n_i)·‖x_i‖/‖x_i + n_i‖` for a fixed noise draw `n`.
fn augment_with(x: &Tensor, noise: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.add_assign(noise);
    for i in 0..y.rows() {
        let a = l2_norm(x.row(i));
        let b = l2_norm(y.row(i));
        let s = if b > 0.0 { a / b } else { 0.0 };
        y.row_mut(i).iter_mut().for_each(|v| *v *= s);
    }
    y
}

/// Gaussian perturbation with per-row norm restoration.
pub fn augment<R: Rng + ?Sized>(x: &Tensor, sigma: f64, rng: &mut R) -> Tensor {
    if sigma == 0.0 {
        return x.clone();
    }
    let noise = gaussian_like(x.shape(), sigma, rng);
    augment_with(x, &noise)
}

struct AugmentAdjoint {
    noise: Tensor,
}

impl Adjoint for AugmentAdjoint {
    fn name(&self) -> &'static str {
        "augment"
    }

    fn backward(&self, up: &Tensor, inputs: &[&Tensor], _: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let x = inputs[0];
        let mut gx = Tensor::zeros(x.shape());
        for i in 0..x.rows() {
            let xr = x.row(i);
            let u: Vec<f64> = xr.iter().zip(self.noise.row(i)).map(|(a, n)| a + n).collect();
            let g = up.row(i);
            let a = l2_norm(xr);
            let b = l2_norm(&u);
            if b == 0.0 {
                continue;
            }
            let gu = dot(g, &u);
            let out = gx.row_mut(i);
            for k in 0..xr.len() {
                let via_a = if a > 0.0 { gu * xr[k] / (a * b) } else { 0.0 };
                out[k] = a / b * g[k] + via_a - gu * a * u[k] / (b * b * b);
            }
        }
        vec![Some(gx)]
    }
}

/// Differentiable [`augment`]; the noise is drawn once and held fixed.
pub fn record_augment<R: Rng + ?Sized>(tape: &mut GradTape, x: Var, sigma: f64, rng: &mut R) -> Result<Var> {
    if sigma == 0.0 {
        return Ok(x);
    }
    let noise = gaussian_like(tape.value(x).shape(), sigma, rng);
    let y = augment_with(tape.value(x), &noise);
    tape.custom(&[x], y, Box::new(AugmentAdjoint { noise }))
}
