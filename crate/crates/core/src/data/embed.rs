//! Stand-ins for the pretrained encoders and the projections into `d_model`.

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{PAD_TOKEN, TEXT_DIM};
use crate::error::Result;
use crate::kernel::{matvec, Tensor};

fn token_vector(token: u32) -> Vec<f64> {
    // Fixed salt so the table never depends on any run seed.
    let mut rng = ChaCha8Rng::seed_from_u64(0x7E47_0000_0000_0000 ^ u64::from(token));
    let scale = 1.0 / (TEXT_DIM as f64).sqrt();
    (0..TEXT_DIM)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        })
        .collect()
}

/// Deterministic hash-seeded token embedding, mean-pooled over non-pad tokens.
pub fn embed_text_stub(tokens: &[u32]) -> Vec<f64> {
    let mut acc = vec![0.0; TEXT_DIM];
    let mut count = 0usize;
    for &t in tokens.iter().filter(|&&t| t != PAD_TOKEN) {
        for (a, v) in acc.iter_mut().zip(token_vector(t)) {
            *a += v;
        }
        count += 1;
    }
    if count == 0 {
        warn!("question has only pad tokens; using a zero text embedding");
        return acc;
    }
    acc.iter_mut().for_each(|a| *a /= count as f64);
    acc
}

/// `W_t·e + b_t`, with `W_t` of shape `[d_model × 300]`.
pub fn project_text(e: &[f64], w: &Tensor, b: &[f64]) -> Result<Vec<f64>> {
    matvec(w, e, b)
}

/// `W_v·v + b_v`, with `W_v` of shape `[d_model × image_dim]`.
pub fn project_image(v: &[f64], w: &Tensor, b: &[f64]) -> Result<Vec<f64>> {
    matvec(w, v, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::kernel::tensor::l2_norm;

    #[test]
    fn identical_tokens_identical_vectors() {
        assert_eq!(embed_text_stub(&[4, 8, 15]), embed_text_stub(&[4, 8, 15]));
    }

    #[test]
    fn repeated_token_pools_to_itself() {
        let once = embed_text_stub(&[42]);
        let thrice = embed_text_stub(&[42, 42, 42, 0, 0]);
        for (a, b) in once.iter().zip(&thrice) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn disjoint_token_sets_differ() {
        let a = embed_text_stub(&[1, 2, 3]);
        let b = embed_text_stub(&[4, 5, 6]);
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        assert!(l2_norm(&diff) > 0.0);
    }

    #[test]
    fn all_pad_is_zero_vector() {
        let e = embed_text_stub(&[0; 50]);
        assert_eq!(e.len(), TEXT_DIM);
        assert!(e.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn projections_check_dimensions() {
        let w = Tensor::eye(4, TEXT_DIM);
        let e: Vec<f64> = (0..TEXT_DIM).map(|i| i as f64).collect();
        assert_eq!(project_text(&e, &w, &[0.0; 4]).unwrap(), vec![0.0, 1.0, 2.0, 3.0]);
        assert!(matches!(
            project_image(&[1.0; 5], &Tensor::eye(4, 768), &[0.0; 4]),
            Err(Error::Dimension(_))
        ));
    }
}
