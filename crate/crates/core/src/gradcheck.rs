//! Central finite-difference checks of every recorded op.
//!
//! A check evaluates a scalar function of some leaf tensors on the tape,
//! compares the reverse-mode gradient with `(f(θ+h) − f(θ−h)) / 2h` taken
//! coordinate by coordinate, and reports the norm-wise relative error
//! `‖g_tape − g_fd‖ / max(‖g_tape‖, ‖g_fd‖)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::fusion::{record_fusion, FusionFlags, FusionVars};
use crate::head::{record_classifier, ClassifierVars};
use crate::kernel::tensor::l2_norm;
use crate::kernel::{Adjoint, GradTape, Tensor, Var};
use crate::objectives::{record_augment, record_cross_entropy, record_info_nce};
use crate::rng::{substream, Stream};

pub const STEP: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-4;
pub const POINTS: usize = 10;

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub points: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = l2_norm(analytic).max(l2_norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        l2_norm(&diff) / scale
    }
}

fn evaluate<F>(inputs: &[Tensor], f: &F) -> Result<f64>
where
    F: Fn(&mut GradTape, &[Var]) -> Result<Var>,
{
    let mut tape = GradTape::new();
    let vars = inputs
        .iter()
        .map(|t| tape.param(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut tape, &vars)?;
    Ok(tape.value(out).data()[0])
}

/// Relative error between tape and finite-difference gradients of `f` at `inputs`.
pub fn check_point<F>(inputs: &[Tensor], f: &F) -> Result<f64>
where
    F: Fn(&mut GradTape, &[Var]) -> Result<Var>,
{
    let mut tape = GradTape::new();
    let vars = inputs
        .iter()
        .map(|t| tape.param(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    let mut analytic = Vec::new();
    for (v, t) in vars.iter().zip(inputs) {
        analytic.extend_from_slice(grads.get_or_zeros(*v, t).data());
    }
    let mut numeric = Vec::with_capacity(analytic.len());
    let mut work = inputs.to_vec();
    for i in 0..inputs.len() {
        for k in 0..inputs[i].len() {
            let orig = inputs[i].data()[k];
            work[i].data_mut()[k] = orig + STEP;
            let plus = evaluate(&work, f)?;
            work[i].data_mut()[k] = orig - STEP;
            let minus = evaluate(&work, f)?;
            work[i].data_mut()[k] = orig;
            numeric.push((plus - minus) / (2.0 * STEP));
        }
    }
    Ok(relative_error(&analytic, &numeric))
}

struct WeightedSum {
    weights: Tensor,
}

impl Adjoint for WeightedSum {
    fn name(&self) -> &'static str {
        "weighted_sum"
    }

    fn backward(&self, up: &Tensor, _: &[&Tensor], _: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let mut g = self.weights.clone();
        g.data_mut().iter_mut().for_each(|w| *w *= up.data()[0]);
        vec![Some(g)]
    }
}

/// `Σ r ⊙ y`, a scalar that exercises every coordinate of `y`.
pub fn weighted_sum(tape: &mut GradTape, y: Var, weights: Tensor) -> Result<Var> {
    let value: f64 = tape.value(y).data().iter().zip(weights.data()).map(|(a, b)| a * b).sum();
    tape.custom(&[y], Tensor::scalar(value), Box::new(WeightedSum { weights }))
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape")
}

fn run_suite<G, F>(name: &str, seed: u64, index: u64, gen: G, f: F) -> Result<CheckReport>
where
    G: Fn(&mut ChaCha8Rng) -> (Vec<Tensor>, Tensor),
    F: Fn(&mut GradTape, &[Var]) -> Result<Var>,
{
    let mut rng = substream(seed, Stream::Gradcheck, index);
    let mut worst: f64 = 0.0;
    for _ in 0..POINTS {
        let (inputs, r) = gen(&mut rng);
        let g = |tape: &mut GradTape, vars: &[Var]| -> Result<Var> {
            let y = f(tape, vars)?;
            if tape.value(y).len() == 1 {
                Ok(y)
            } else {
                weighted_sum(tape, y, r.clone())
            }
        };
        worst = worst.max(check_point(&inputs, &g)?);
    }
    Ok(CheckReport {
        name: name.to_string(),
        points: POINTS,
        max_rel_error: worst,
        passed: worst <= TOLERANCE,
    })
}

const B: usize = 3;
const D: usize = 8;
const K: usize = 4;

fn fusion_vars(v: &[Var]) -> FusionVars {
    FusionVars {
        text_filter: (v[2], v[3]),
        image_filter: Some((v[4], v[5])),
        text_gate: (v[6], v[7]),
        image_gate: (v[8], v[9]),
    }
}

fn fusion_inputs(rng: &mut ChaCha8Rng) -> Vec<Tensor> {
    vec![
        random(rng, &[B, D]),
        random(rng, &[B, D]),
        random(rng, &[K, D]),
        random(rng, &[K]),
        random(rng, &[K, D]),
        random(rng, &[K]),
        random(rng, &[D, 1]),
        random(rng, &[D]),
        random(rng, &[D, 1]),
        random(rng, &[D]),
    ]
}

fn classifier_inputs(rng: &mut ChaCha8Rng, in_dim: usize, h: [usize; 2], c: usize) -> Vec<Tensor> {
    let mut gamma = |n: usize| -> Tensor {
        Tensor::vector((0..n).map(|_| rng.random_range(0.5..1.5)).collect())
    };
    let g1 = gamma(h[0]);
    let g2 = gamma(h[1]);
    vec![
        random(rng, &[h[0], in_dim]),
        random(rng, &[h[0]]),
        g1,
        random(rng, &[h[0]]),
        random(rng, &[h[1], h[0]]),
        random(rng, &[h[1]]),
        g2,
        random(rng, &[h[1]]),
        random(rng, &[c, h[1]]),
        random(rng, &[c]),
    ]
}

/// Every suite, at [`POINTS`] random points each.
pub fn run_all(seed: u64) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();

    out.push(run_suite(
        "projection",
        seed,
        0,
        |r| (vec![random(r, &[B, 5]), random(r, &[4, 5]), random(r, &[4])], random(r, &[B, 4])),
        |t, v| t.linear(v[0], v[1], v[2]),
    )?);
    out.push(run_suite(
        "dft_magnitude",
        seed,
        1,
        |r| (vec![random(r, &[B, D])], random(r, &[B, D])),
        |t, v| t.dft_magnitude(v[0]),
    )?);
    out.push(run_suite(
        "filter_bank",
        seed,
        2,
        |r| (vec![random(r, &[B, D]), random(r, &[K, D]), random(r, &[K])], random(r, &[B, K])),
        |t, v| {
            let m = t.dft_magnitude(v[0])?;
            t.linear(m, v[1], v[2])
        },
    )?);
    out.push(run_suite(
        "gates",
        seed,
        3,
        |r| (fusion_inputs(r), random(r, &[B, 2 * D])),
        |t, v| {
            let o = record_fusion(t, v[0], v[1], &fusion_vars(v), FusionFlags::default())?;
            t.concat(&[o.t_enhanced, o.v_enhanced])
        },
    )?);
    out.push(run_suite(
        "sigmoid",
        seed,
        4,
        |r| (vec![random(r, &[B, 5])], random(r, &[B, 5])),
        |t, v| t.sigmoid(v[0]),
    )?);
    out.push(run_suite(
        "layernorm",
        seed,
        5,
        |r| (vec![random(r, &[B, 6]), random(r, &[6]), random(r, &[6])], random(r, &[B, 6])),
        |t, v| t.layernorm(v[0], v[1], v[2]),
    )?);
    out.push(run_suite(
        "gelu",
        seed,
        6,
        |r| (vec![random(r, &[B, 5])], random(r, &[B, 5])),
        |t, v| t.gelu(v[0]),
    )?);
    out.push(run_suite(
        "dropout",
        seed,
        7,
        |r| (vec![random(r, &[B, 5])], random(r, &[B, 5])),
        |t, v| {
            let mut mask_rng = ChaCha8Rng::seed_from_u64(17);
            t.dropout(v[0], 0.3, Some(&mut mask_rng))
        },
    )?);
    out.push(run_suite(
        "mlp",
        seed,
        8,
        |r| {
            let mut inputs = classifier_inputs(r, 2 * D, [D, 6], 3);
            inputs.push(random(r, &[B, 2 * D]));
            (inputs, Tensor::scalar(1.0))
        },
        |t, v| {
            let vars = ClassifierVars::from_list(v[..10].to_vec())?;
            let mut drop_rng = ChaCha8Rng::seed_from_u64(23);
            let logits = record_classifier(t, v[10], &vars, 0.1, Some(&mut drop_rng))?;
            record_cross_entropy(t, logits, &[0, 2, 1])
        },
    )?);
    out.push(run_suite(
        "cross_entropy",
        seed,
        9,
        |r| (vec![random(r, &[B, 4])], Tensor::scalar(1.0)),
        |t, v| record_cross_entropy(t, v[0], &[3, 0, 1]),
    )?);
    out.push(run_suite(
        "info_nce",
        seed,
        10,
        |r| (vec![random(r, &[B, 5]), random(r, &[B, 5])], Tensor::scalar(1.0)),
        |t, v| record_info_nce(t, v[0], v[1], 0.07),
    )?);
    out.push(run_suite(
        "augment",
        seed,
        11,
        |r| (vec![random(r, &[B, 5])], random(r, &[B, 5])),
        |t, v| {
            let mut noise = ChaCha8Rng::seed_from_u64(31);
            record_augment(t, v[0], 0.1, &mut noise)
        },
    )?);
    out.push(run_suite(
        "intra_modal_pair",
        seed,
        12,
        |r| (vec![random(r, &[B, 5])], Tensor::scalar(1.0)),
        |t, v| {
            let mut noise = ChaCha8Rng::seed_from_u64(37);
            let a = record_augment(t, v[0], 0.1, &mut noise)?;
            record_info_nce(t, v[0], a, 0.07)
        },
    )?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_conventions() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((relative_error(&[1.0, 0.0], &[0.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!((relative_error(&[3.0, 4.0], &[3.0, 4.5]) - 0.5 / 4.5f64.hypot(3.0)).abs() < 1e-15);
    }

    #[test]
    fn deliberately_wrong_adjoint_fails() {
        struct Wrong;
        impl Adjoint for Wrong {
            fn name(&self) -> &'static str {
                "wrong"
            }
            fn backward(&self, up: &Tensor, inputs: &[&Tensor], _: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
                let mut g = inputs[0].clone();
                g.data_mut().iter_mut().for_each(|v| *v = up.data()[0]);
                vec![Some(g)]
            }
        }
        let f = |t: &mut GradTape, v: &[Var]| -> Result<Var> {
            let s: f64 = t.value(v[0]).data().iter().map(|x| x * x).sum();
            t.custom(&[v[0]], Tensor::scalar(s), Box::new(Wrong))
        };
        let err = check_point(&[Tensor::vector(vec![0.5, -1.0, 2.0])], &f).unwrap();
        assert!(err > 0.1);
    }

    #[test]
    fn every_suite_passes() {
        for r in run_all(7).unwrap() {
            assert!(r.passed, "{} rel error {:e}", r.name, r.max_rel_error);
        }
    }
}
