//! Reverse-mode differentiation over a linear record of ops.
//!
//! Every value is a `[rows × cols]` matrix (a batch of row vectors) or a
//! scalar of shape `[1]`. Ops are appended during the forward pass; the
//! backward pass walks the record from the output towards the leaves.

use num_complex::Complex64;
use rand::Rng;

use super::dft;
use super::layers::{self, LayerNormCache};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Adjoint of an op defined outside the kernel (losses, augmentation).
pub trait Adjoint: Send {
    fn name(&self) -> &'static str;

    /// Gradients w.r.t. each input; entries for inputs with `needs[i] == false`
    /// may be `None`.
    fn backward(
        &self,
        upstream: &Tensor,
        inputs: &[&Tensor],
        output: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>>;
}

enum Op {
    Leaf,
    Linear { x: Var, w: Var, b: Var },
    DftMagnitude { x: Var, spectra: Vec<Vec<Complex64>> },
    Sigmoid { x: Var },
    Gelu { x: Var },
    LayerNorm { x: Var, gamma: Var, beta: Var, cache: LayerNormCache },
    MaskMul { x: Var, mask: Vec<f64> },
    Mul { a: Var, b: Var },
    Add { a: Var, b: Var },
    Scale { x: Var, factor: f64 },
    MeanCols { x: Var },
    Concat { parts: Vec<Var> },
    Custom { inputs: Vec<Var>, adjoint: Box<dyn Adjoint> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Linear { .. } => "linear",
            Op::DftMagnitude { .. } => "dft_magnitude",
            Op::Sigmoid { .. } => "sigmoid",
            Op::Gelu { .. } => "gelu",
            Op::LayerNorm { .. } => "layernorm",
            Op::MaskMul { .. } => "dropout",
            Op::Mul { .. } => "mul",
            Op::Add { .. } => "add",
            Op::Scale { .. } => "scale",
            Op::MeanCols { .. } => "mean_cols",
            Op::Concat { .. } => "concat",
            Op::Custom { adjoint, .. } => adjoint.name(),
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Single-owner recording of one forward pass.
#[derive(Default)]
pub struct GradTape {
    nodes: Vec<Node>,
}

/// Result of [`GradTape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    visited: Vec<Var>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros shaped like `like` if nothing flowed there.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }

    /// Non-leaf nodes in the order their adjoints ran.
    pub fn visit_order(&self) -> &[Var] {
        &self.visited
    }
}

fn as_matrix(t: Tensor) -> Tensor {
    if t.shape().len() == 1 {
        let n = t.len();
        t.reshape(vec![1, n]).expect("same size")
    } else {
        t
    }
}

impl GradTape {
    pub fn new() -> Self {
        GradTape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Result<Var> {
        let name = op.name();
        let value = value.ensure_finite(name)?;
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A trainable leaf. Gradients are accumulated for it.
    pub fn param(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that receives no gradient (data, detached values).
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf, false)
    }

    /// `X·Wᵀ + b` with `x` as `[B×n]` (or `[n]`, treated as one row).
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = layers::linear(self.value(x), self.value(w), self.value(b))?;
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(y, Op::Linear { x, w, b }, needs)
    }

    /// Row-wise magnitude spectrum.
    pub fn dft_magnitude(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (rows, cols) = (xv.rows(), xv.cols());
        let mut out = Vec::with_capacity(rows * cols);
        let mut spectra = Vec::with_capacity(rows);
        for r in 0..rows {
            let spec = dft::dft(xv.row(r));
            out.extend(spec.iter().map(|c| c.norm()));
            spectra.push(spec);
        }
        let y = Tensor::matrix(rows, cols, out)?;
        let needs = self.needs(x);
        self.push(y, Op::DftMagnitude { x, spectra }, needs)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let mut y = self.value(x).clone();
        y.data_mut().iter_mut().for_each(|v| *v = layers::sigmoid(*v));
        let needs = self.needs(x);
        self.push(y, Op::Sigmoid { x }, needs)
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let mut y = self.value(x).clone();
        y.data_mut().iter_mut().for_each(|v| *v = layers::gelu(*v));
        let needs = self.needs(x);
        self.push(y, Op::Gelu { x }, needs)
    }

    pub fn layernorm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let xv = as_matrix(self.value(x).clone());
        let (y, cache) = layers::layernorm(&xv, self.value(gamma), self.value(beta))?;
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.push(
            y,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                cache,
            },
            needs,
        )
    }

    /// Inverted dropout when `rng` is given; identity (same `Var`) otherwise.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: Option<&mut R>) -> Result<Var> {
        layers::check_dropout_rate(p)?;
        let Some(rng) = rng else {
            return Ok(x);
        };
        let mask = layers::dropout_mask(self.value(x).len(), p, rng)?;
        self.mask_mul(x, mask)
    }

    /// Elementwise product with a fixed mask.
    pub fn mask_mul(&mut self, x: Var, mask: Vec<f64>) -> Result<Var> {
        let mut y = self.value(x).clone();
        if mask.len() != y.len() {
            return Err(Error::dim(format!(
                "mask of {} for tensor {:?}",
                mask.len(),
                y.shape()
            )));
        }
        y.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
        let needs = self.needs(x);
        self.push(y, Op::MaskMul { x, mask }, needs)
    }

    fn same_shape(&self, a: Var, b: Var, op: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::dim(format!("{op}: {sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let mut y = self.value(a).clone();
        y.data_mut()
            .iter_mut()
            .zip(self.value(b).data())
            .for_each(|(v, w)| *v *= w);
        let needs = self.needs(a) || self.needs(b);
        self.push(y, Op::Mul { a, b }, needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let mut y = self.value(a).clone();
        y.add_assign(self.value(b));
        let needs = self.needs(a) || self.needs(b);
        self.push(y, Op::Add { a, b }, needs)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let mut y = self.value(x).clone();
        y.data_mut().iter_mut().for_each(|v| *v *= factor);
        let needs = self.needs(x);
        self.push(y, Op::Scale { x, factor }, needs)
    }

    /// `[B×n] → [B×1]`, the mean of each row.
    pub fn mean_cols(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let n = xv.cols() as f64;
        let data: Vec<f64> = (0..xv.rows())
            .map(|r| xv.row(r).iter().sum::<f64>() / n)
            .collect();
        let y = Tensor::matrix(data.len(), 1, data)?;
        let needs = self.needs(x);
        self.push(y, Op::MeanCols { x }, needs)
    }

    /// Column-wise concatenation of `[B×n_i]` blocks.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::dim("concat of nothing"))?;
        let rows = self.value(first).rows();
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(Error::dim("concat: row counts differ"));
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let y = Tensor::matrix(rows, total, data)?;
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(
            y,
            Op::Concat {
                parts: parts.to_vec(),
            },
            needs,
        )
    }

    /// Records an externally defined op whose forward value is already computed.
    pub fn custom(
        &mut self,
        inputs: &[Var],
        output: Tensor,
        adjoint: Box<dyn Adjoint>,
    ) -> Result<Var> {
        let needs = inputs.iter().any(|&v| self.needs(v));
        self.push(
            output,
            Op::Custom {
                inputs: inputs.to_vec(),
                adjoint,
            },
            needs,
        )
    }

    /// Gradients of the scalar `output` w.r.t. every node that needs one.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out_val = self.value(output);
        if out_val.len() != 1 {
            return Err(Error::dim(format!(
                "backward needs a scalar output, got {:?}",
                out_val.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::filled(out_val.shape(), 1.0));
        let mut visited = Vec::new();

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) || !node.needs_grad {
                continue;
            }
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            visited.push(Var(idx));
            for (input, g) in self.adjoint(node, &upstream)? {
                if !self.needs(input) {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
            grads[idx] = Some(upstream);
        }
        Ok(Gradients { grads, visited })
    }

    fn adjoint(&self, node: &Node, up: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let out = match &node.op {
            Op::Leaf => Vec::new(),
            Op::Linear { x, w, b } => {
                let xv = as_matrix(self.value(*x).clone());
                let (dx, dw, db) = layers::linear_backward(&xv, self.value(*w), up, self.needs(*x));
                let mut v = vec![(*w, dw), (*b, db.reshape(self.value(*b).shape().to_vec())?)];
                if let Some(dx) = dx {
                    v.push((*x, dx.reshape(self.value(*x).shape().to_vec())?));
                }
                v
            }
            Op::DftMagnitude { x, spectra } => {
                let mut dx = Tensor::zeros(up.shape());
                for (r, spec) in spectra.iter().enumerate() {
                    let g = dft::dft_magnitude_backward_with(spec, up.row(r));
                    dx.row_mut(r).copy_from_slice(&g);
                }
                vec![(*x, dx.reshape(self.value(*x).shape().to_vec())?)]
            }
            Op::Sigmoid { x } => {
                let mut dx = up.clone();
                dx.data_mut()
                    .iter_mut()
                    .zip(node.value.data())
                    .for_each(|(g, s)| *g *= s * (1.0 - s));
                vec![(*x, dx)]
            }
            Op::Gelu { x } => {
                let mut dx = up.clone();
                dx.data_mut()
                    .iter_mut()
                    .zip(self.value(*x).data())
                    .for_each(|(g, xv)| *g *= layers::gelu_grad(*xv));
                vec![(*x, dx)]
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                cache,
            } => {
                let (dx, dg, db) = layers::layernorm_backward(cache, self.value(*gamma), up);
                vec![
                    (*x, dx.reshape(self.value(*x).shape().to_vec())?),
                    (*gamma, dg.reshape(self.value(*gamma).shape().to_vec())?),
                    (*beta, db.reshape(self.value(*beta).shape().to_vec())?),
                ]
            }
            Op::MaskMul { x, mask } => {
                let mut dx = up.clone();
                dx.data_mut().iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
                vec![(*x, dx)]
            }
            Op::Mul { a, b } => {
                let mut da = up.clone();
                da.data_mut()
                    .iter_mut()
                    .zip(self.value(*b).data())
                    .for_each(|(g, bv)| *g *= bv);
                let mut db = up.clone();
                db.data_mut()
                    .iter_mut()
                    .zip(self.value(*a).data())
                    .for_each(|(g, av)| *g *= av);
                vec![(*a, da), (*b, db)]
            }
            Op::Add { a, b } => vec![(*a, up.clone()), (*b, up.clone())],
            Op::Scale { x, factor } => {
                let mut dx = up.clone();
                dx.data_mut().iter_mut().for_each(|g| *g *= factor);
                vec![(*x, dx)]
            }
            Op::MeanCols { x } => {
                let xv = self.value(*x);
                let n = xv.cols();
                let mut dx = Tensor::zeros(xv.shape());
                for r in 0..xv.rows() {
                    let g = up.data()[r] / n as f64;
                    dx.row_mut(r).iter_mut().for_each(|v| *v = g);
                }
                vec![(*x, dx)]
            }
            Op::Concat { parts } => {
                let mut offset = 0;
                let mut v = Vec::with_capacity(parts.len());
                for &p in parts {
                    let pv = self.value(p);
                    let w = pv.cols();
                    let mut dp = Tensor::zeros(pv.shape());
                    for r in 0..pv.rows() {
                        dp.row_mut(r).copy_from_slice(&up.row(r)[offset..offset + w]);
                    }
                    offset += w;
                    v.push((p, dp));
                }
                v
            }
            Op::Custom { inputs, adjoint } => {
                let values: Vec<&Tensor> = inputs.iter().map(|&i| self.value(i)).collect();
                let needs: Vec<bool> = inputs.iter().map(|&i| self.needs(i)).collect();
                let grads = adjoint.backward(up, &values, &node.value, &needs);
                inputs
                    .iter()
                    .zip(grads)
                    .filter_map(|(&i, g)| g.map(|g| (i, g)))
                    .collect()
            }
        };
        Ok(out)
    }
}
