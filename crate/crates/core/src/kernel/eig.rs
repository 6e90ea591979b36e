//! Symmetric eigendecomposition by cyclic Jacobi rotations.

use super::tensor::Tensor;
use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;

/// Eigenvalues (ascending) and the matching eigenvectors as columns of `V`,
/// with `A = V·diag(λ)·Vᵀ`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Tensor,
}

impl SymmetricEigen {
    /// `V·diag(f(λ))·Vᵀ`, i.e. a spectral function of the decomposed matrix.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Tensor {
        let d = self.values.len();
        let v = &self.vectors;
        let fl: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = Tensor::zeros(&[d, d]);
        for i in 0..d {
            for j in i..d {
                let s: f64 = (0..d).map(|k| v.get(i, k) * fl[k] * v.get(j, k)).sum();
                out.set(i, j, s);
                out.set(j, i, s);
            }
        }
        out
    }
}

pub fn hermitian_eig(a: &Tensor) -> Result<SymmetricEigen> {
    let shape = a.shape();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(Error::Contract(format!(
            "eigendecomposition needs a square matrix, got {shape:?}"
        )));
    }
    let d = shape[0];
    for i in 0..d {
        for j in (i + 1)..d {
            let (x, y) = (a.get(i, j), a.get(j, i));
            if (x - y).abs() > SYMMETRY_TOL {
                return Err(Error::Contract(format!(
                    "matrix not symmetric at ({i},{j}): {x} vs {y}"
                )));
            }
        }
    }

    let mut m = a.clone();
    // Symmetrize exactly so rotations act on a truly symmetric matrix.
    for i in 0..d {
        for j in (i + 1)..d {
            let s = 0.5 * (m.get(i, j) + m.get(j, i));
            m.set(i, j, s);
            m.set(j, i, s);
        }
    }
    let mut v = Tensor::eye(d, d);
    let scale = m.norm().max(f64::MIN_POSITIVE);

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..d)
            .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j).powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= f64::EPSILON * scale * 1e-2 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (m.get(p, p), m.get(q, q));
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut m, p, q, c, s);
                for k in 0..d {
                    let (vkp, vkq) = (v.get(k, p), v.get(k, q));
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| m.get(i, i).total_cmp(&m.get(j, j)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vectors = Tensor::zeros(&[d, d]);
    for (new_col, &old_col) in order.iter().enumerate() {
        for k in 0..d {
            vectors.set(k, new_col, v.get(k, old_col));
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

/// Applies `Jᵀ·M·J` for the rotation in the (p, q) plane.
fn rotate(m: &mut Tensor, p: usize, q: usize, c: f64, s: f64) {
    let d = m.rows();
    for k in 0..d {
        let (mkp, mkq) = (m.get(k, p), m.get(k, q));
        m.set(k, p, c * mkp - s * mkq);
        m.set(k, q, s * mkp + c * mkq);
    }
    for k in 0..d {
        let (mpk, mqk) = (m.get(p, k), m.get(q, k));
        m.set(p, k, c * mpk - s * mqk);
        m.set(q, k, s * mpk + c * mqk);
    }
}
