//! Fidelity-based knowledge retrieval.
//!
//! Feature vectors become pure states `x/‖x‖`, compared through the
//! fidelity of their density matrices. The top-K entries are aggregated
//! with a temperature softmax over their raw embeddings. Nothing here is
//! differentiated: the selection is a lookup.

use serde::{Deserialize, Serialize};

use crate::data::KnowledgeBase;
use crate::error::{Error, Result};
use crate::kernel::tensor::{dot, l2_norm};
use crate::kernel::{hermitian_eig, softmax, Tensor};

pub const DEFAULT_TOP_K: usize = 3;
pub const RETRIEVAL_TEMPERATURE: f64 = 0.1;
/// Norms at or below this are treated as zero.
pub const DEGENERATE_NORM: f64 = 1e-12;
/// Eigenvalues below this fail the PSD check; those above it are clamped at 0.
pub const PSD_TOLERANCE: f64 = 1e-8;

/// Unit-norm real amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amplitudes: Vec<f64>,
}

impl QuantumState {
    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }
}

pub fn normalize_to_state(x: &[f64]) -> Result<QuantumState> {
    let n = l2_norm(x);
    if !(n > DEGENERATE_NORM) {
        return Err(Error::Degenerate(format!(
            "cannot normalize a vector of norm {n:e} to a state"
        )));
    }
    Ok(QuantumState {
        amplitudes: x.iter().map(|v| v / n).collect(),
    })
}

/// Symmetric PSD matrix of unit trace. Keeps its generating state when rank 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    rho: Tensor,
    pure: Option<QuantumState>,
}

impl DensityMatrix {
    /// Validates a general (possibly mixed) density matrix.
    pub fn from_matrix(rho: Tensor) -> Result<Self> {
        let d = rho.rows();
        if rho.shape() != [d, d] {
            return Err(Error::dim(format!("density matrix of shape {:?}", rho.shape())));
        }
        let trace: f64 = (0..d).map(|i| rho.get(i, i)).sum();
        if (trace - 1.0).abs() > 1e-9 {
            return Err(Error::Contract(format!("density matrix trace {trace} ≠ 1")));
        }
        let eig = hermitian_eig(&rho)?;
        if let Some(&min) = eig.values.first() {
            if min < -PSD_TOLERANCE {
                return Err(Error::PsdViolation(min));
            }
        }
        Ok(DensityMatrix { rho, pure: None })
    }

    pub fn rho(&self) -> &Tensor {
        &self.rho
    }

    pub fn dim(&self) -> usize {
        self.rho.rows()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.rho.get(i, i)).sum()
    }

    pub fn pure_state(&self) -> Option<&QuantumState> {
        self.pure.as_ref()
    }
}

/// `|ψ⟩⟨ψ|`.
pub fn density(state: &QuantumState) -> DensityMatrix {
    let a = &state.amplitudes;
    let d = a.len();
    let mut data = Vec::with_capacity(d * d);
    for &x in a {
        data.extend(a.iter().map(|&y| x * y));
    }
    DensityMatrix {
        rho: Tensor::matrix(d, d, data).expect("d×d"),
        pure: Some(state.clone()),
    }
}

/// `⟨ψ|φ⟩²`, clamped into `[0, 1]`.
pub fn pure_fidelity(a: &QuantumState, b: &QuantumState) -> f64 {
    dot(&a.amplitudes, &b.amplitudes).powi(2).clamp(0.0, 1.0)
}

/// Fidelity of two density matrices; the pure-state formula when both are rank 1.
pub fn fidelity(q: &DensityMatrix, k: &DensityMatrix) -> Result<f64> {
    if q.dim() != k.dim() {
        return Err(Error::dim(format!("fidelity of {}-d and {}-d states", q.dim(), k.dim())));
    }
    match (&q.pure, &k.pure) {
        (Some(a), Some(b)) => Ok(pure_fidelity(a, b)),
        _ => fidelity_general(q, k),
    }
}

fn clamp_psd(value: f64) -> Result<f64> {
    if value < -PSD_TOLERANCE {
        return Err(Error::PsdViolation(value));
    }
    Ok(value.max(0.0))
}

/// Eigenvalues at or below this are rounding noise of a rank-deficient
/// matrix. Left in, each would add `√ε ≈ 1e-8` to a trace of square roots.
fn noise_floor(values: &[f64]) -> f64 {
    let top = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    64.0 * f64::EPSILON * values.len() as f64 * top
}

/// Non-negative square root of one eigenvalue, zeroing noise-level values.
fn eig_sqrt(v: f64, floor: f64) -> Result<f64> {
    let v = clamp_psd(v)?;
    Ok(if v <= floor { 0.0 } else { v.sqrt() })
}

fn psd_sqrt(a: &Tensor) -> Result<Tensor> {
    let eig = hermitian_eig(a)?;
    let floor = noise_floor(&eig.values);
    for &v in &eig.values {
        eig_sqrt(v, floor)?;
    }
    Ok(eig.reconstruct_with(|v| if v <= floor { 0.0 } else { v.sqrt() }))
}

fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, m, p) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; n * p];
    for i in 0..n {
        for k in 0..m {
            let aik = a.get(i, k);
            if aik == 0.0 {
                continue;
            }
            for j in 0..p {
                out[i * p + j] += aik * b.get(k, j);
            }
        }
    }
    Tensor::matrix(n, p, out).expect("conforming")
}

fn symmetrize(a: &mut Tensor) {
    let n = a.rows();
    for i in 0..n {
        for j in i + 1..n {
            let m = 0.5 * (a.get(i, j) + a.get(j, i));
            a.set(i, j, m);
            a.set(j, i, m);
        }
    }
}

/// `(Tr √(√ρ_q ρ_k √ρ_q))²` through two eigendecompositions.
pub fn fidelity_general(q: &DensityMatrix, k: &DensityMatrix) -> Result<f64> {
    if q.dim() != k.dim() {
        return Err(Error::dim(format!("fidelity of {}-d and {}-d states", q.dim(), k.dim())));
    }
    let sq = psd_sqrt(&q.rho)?;
    let mut inner = matmul(&matmul(&sq, &k.rho), &sq);
    // Rounding leaves the product asymmetric at the 1e-17 level.
    symmetrize(&mut inner);
    let eig = hermitian_eig(&inner)?;
    let floor = noise_floor(&eig.values);
    let mut tr = 0.0;
    for &v in &eig.values {
        tr += eig_sqrt(v, floor)?;
    }
    Ok((tr * tr).clamp(0.0, 1.0))
}

/// `½(t + v)`.
pub fn form_query(t: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if t.len() != v.len() {
        return Err(Error::dim(format!("query halves of {} and {}", t.len(), v.len())));
    }
    Ok(t.iter().zip(v).map(|(a, b)| 0.5 * (a + b)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    /// State fidelity, `cos²`.
    #[default]
    Fidelity,
    /// Signed cosine similarity.
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalResult {
    /// Knowledge-base positions, best first.
    pub indices: Vec<usize>,
    pub ids: Vec<String>,
    pub similarities: Vec<f64>,
    pub weights: Vec<f64>,
    pub k_agg: Vec<f64>,
}

/// A knowledge base with its entries pre-normalized to states.
#[derive(Debug, Clone)]
pub struct Retriever<'a> {
    kb: &'a KnowledgeBase,
    states: Vec<QuantumState>,
    top_k: usize,
    temperature: f64,
    similarity: Similarity,
}

impl<'a> Retriever<'a> {
    pub fn new(kb: &'a KnowledgeBase, top_k: usize, temperature: f64, similarity: Similarity) -> Result<Self> {
        if kb.is_empty() {
            return Err(Error::Retrieval("knowledge base is empty".into()));
        }
        if top_k == 0 || top_k > kb.len() {
            return Err(Error::config(format!(
                "top-k {top_k} must be in 1..={}",
                kb.len()
            )));
        }
        if !(temperature > 0.0) {
            return Err(Error::config(format!("retrieval temperature {temperature} must be > 0")));
        }
        let states = kb
            .entries()
            .iter()
            .map(|e| normalize_to_state(&e.embedding))
            .collect::<Result<Vec<_>>>()?;
        Ok(Retriever {
            kb,
            states,
            top_k,
            temperature,
            similarity,
        })
    }

    pub fn knowledge(&self) -> &KnowledgeBase {
        self.kb
    }

    /// Similarity of `q` to every entry, in knowledge-base order.
    pub fn scores(&self, q: &[f64]) -> Result<Vec<f64>> {
        if q.len() != self.kb.dim() {
            return Err(Error::dim(format!(
                "query of width {} against knowledge of width {}",
                q.len(),
                self.kb.dim()
            )));
        }
        let psi = normalize_to_state(q)?;
        Ok(self
            .states
            .iter()
            .map(|s| match self.similarity {
                Similarity::Fidelity => pure_fidelity(&psi, s),
                Similarity::Cosine => dot(psi.amplitudes(), s.amplitudes()),
            })
            .collect())
    }

    pub fn retrieve(&self, q: &[f64]) -> Result<RetrievalResult> {
        let scores = self.scores(q)?;
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        order.truncate(self.top_k);
        let similarities: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
        let scaled: Vec<f64> = similarities.iter().map(|s| s / self.temperature).collect();
        let weights = softmax(&scaled);
        let mut k_agg = vec![0.0; self.kb.dim()];
        for (&i, &w) in order.iter().zip(&weights) {
            for (a, e) in k_agg.iter_mut().zip(&self.kb.entries()[i].embedding) {
                *a += w * e;
            }
        }
        Ok(RetrievalResult {
            ids: order.iter().map(|&i| self.kb.entries()[i].id.clone()).collect(),
            indices: order,
            similarities,
            weights,
            k_agg,
        })
    }
}

/// One-shot retrieval with fidelity similarity.
pub fn retrieve(q: &[f64], kb: &KnowledgeBase, top_k: usize, temperature: f64) -> Result<RetrievalResult> {
    Retriever::new(kb, top_k, temperature, Similarity::Fidelity)?.retrieve(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::KnowledgeEntry;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn general_path_is_exact_on_rank_one_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let a = density(&normalize_to_state(&random_vec(&mut rng, 24)).unwrap());
            let b = density(&normalize_to_state(&random_vec(&mut rng, 24)).unwrap());
            let fast = fidelity(&a, &b).unwrap();
            assert!((fidelity_general(&a, &b).unwrap() - fast).abs() < 1e-12);
            assert!((fidelity_general(&b, &a).unwrap() - fast).abs() < 1e-12);
        }
    }

    fn kb_from(vectors: Vec<Vec<f64>>) -> KnowledgeBase {
        KnowledgeBase::new(
            vectors
                .into_iter()
                .enumerate()
                .map(|(i, embedding)| KnowledgeEntry {
                    id: format!("k{i}"),
                    text: String::new(),
                    embedding,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn three_four_five() {
        let s = normalize_to_state(&[3.0, 4.0]).unwrap();
        assert!((s.amplitudes()[0] - 0.6).abs() < 1e-15);
        assert!((s.amplitudes()[1] - 0.8).abs() < 1e-15);
        let again = normalize_to_state(s.amplitudes()).unwrap();
        assert_eq!(again, s);
        assert!(matches!(normalize_to_state(&[0.0, 0.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn density_examples() {
        let e1 = density(&normalize_to_state(&[1.0, 0.0, 0.0]).unwrap());
        assert_eq!(e1.rho().data(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let h = density(&normalize_to_state(&[1.0, 1.0]).unwrap());
        for v in h.rho().data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let rho = density(&normalize_to_state(&random_vec(&mut rng, 7)).unwrap());
            assert!((rho.trace() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn fidelity_examples() {
        let st = |x: &[f64]| density(&normalize_to_state(x).unwrap());
        let q = st(&[1.0, 0.0]);
        assert_eq!(fidelity(&q, &q).unwrap(), 1.0);
        assert_eq!(fidelity(&q, &st(&[0.0, 1.0])).unwrap(), 0.0);
        assert!((fidelity(&q, &st(&[1.0, 1.0])).unwrap() - 0.5).abs() < 1e-15);
        assert!((fidelity_general(&q, &st(&[1.0, 1.0])).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn fast_path_matches_general_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = density(&normalize_to_state(&random_vec(&mut rng, 16)).unwrap());
            let b = density(&normalize_to_state(&random_vec(&mut rng, 16)).unwrap());
            let fast = fidelity(&a, &b).unwrap();
            let slow = fidelity_general(&a, &b).unwrap();
            assert!((fast - slow).abs() <= 1e-7, "{fast} vs {slow}");
        }
    }

    #[test]
    fn mixed_states_use_general_path() {
        let mixed = DensityMatrix::from_matrix(Tensor::matrix(2, 2, vec![0.5, 0.0, 0.0, 0.5]).unwrap()).unwrap();
        let pure = density(&normalize_to_state(&[1.0, 0.0]).unwrap());
        assert!((fidelity(&mixed, &pure).unwrap() - 0.5).abs() < 1e-9);
        assert!((fidelity(&mixed, &mixed).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn negative_eigenvalue_is_psd_violation() {
        let bad = Tensor::matrix(2, 2, vec![1.5, 0.0, 0.0, -0.5]).unwrap();
        assert!(matches!(DensityMatrix::from_matrix(bad), Err(Error::PsdViolation(_))));
        let trace_two = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(DensityMatrix::from_matrix(trace_two), Err(Error::Contract(_))));
    }

    #[test]
    fn query_is_elementwise_mean() {
        assert_eq!(form_query(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
        let q = form_query(&[1.0, -2.0], &[-1.0, 2.0]).unwrap();
        assert_eq!(q, vec![0.0, 0.0]);
        assert!(matches!(normalize_to_state(&q), Err(Error::Degenerate(_))));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (t, v) = (random_vec(&mut rng, 9), random_vec(&mut rng, 9));
        let q = form_query(&t, &v).unwrap();
        for i in 0..9 {
            assert_eq!(q[i], (t[i] + v[i]) / 2.0);
        }
    }

    #[test]
    fn self_match_ranks_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let vectors: Vec<Vec<f64>> = (0..10).map(|_| random_vec(&mut rng, 6)).collect();
        let q = vectors[4].clone();
        let kb = kb_from(vectors);
        let r = retrieve(&q, &kb, 3, 0.1).unwrap();
        assert_eq!(r.indices[0], 4);
        assert!((r.similarities[0] - 1.0).abs() < 1e-12);
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn equal_similarities_tie_break_by_index() {
        let kb = kb_from(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]]);
        let r = retrieve(&[1.0, 1.0], &kb, 3, 0.1).unwrap();
        assert_eq!(r.indices, vec![0, 1, 2]);
        for w in &r.weights {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_of_one_zero_zero() {
        let kb = kb_from(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let r = retrieve(&[1.0, 0.0, 0.0], &kb, 3, 0.1).unwrap();
        assert_eq!(r.similarities, vec![1.0, 0.0, 0.0]);
        let e = (-10.0f64).exp();
        let oracle = [1.0 / (1.0 + 2.0 * e), e / (1.0 + 2.0 * e)];
        assert!((r.weights[0] - oracle[0]).abs() < 1e-15);
        assert!((r.weights[0] - 0.999909).abs() < 1e-6);
        assert!((r.weights[1] - 4.54e-5).abs() < 1e-7);
        assert!((r.weights[2] - oracle[1]).abs() < 1e-15);
    }

    #[test]
    fn aggregation_uses_raw_embeddings() {
        let kb = kb_from(vec![vec![10.0, 0.0], vec![0.0, 0.001]]);
        let r = retrieve(&[1.0, 0.0], &kb, 1, 0.1).unwrap();
        assert_eq!(r.k_agg, vec![10.0, 0.0]);
    }

    #[test]
    fn retrieval_errors() {
        let empty = KnowledgeBase::default();
        assert!(matches!(retrieve(&[1.0], &empty, 3, 0.1), Err(Error::Retrieval(_))));
        let kb = kb_from(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(retrieve(&[1.0, 0.0], &kb, 3, 0.1), Err(Error::Config(_))));
        assert!(matches!(retrieve(&[1.0, 0.0, 0.0], &kb, 1, 0.1), Err(Error::Dimension(_))));
    }

    #[test]
    fn cosine_similarity_keeps_sign() {
        let kb = kb_from(vec![vec![-1.0, 0.0], vec![0.5, 0.5]]);
        let r = Retriever::new(&kb, 2, 0.1, Similarity::Cosine).unwrap();
        let s = r.scores(&[1.0, 0.0]).unwrap();
        assert!((s[0] + 1.0).abs() < 1e-15);
        let f = Retriever::new(&kb, 2, 0.1, Similarity::Fidelity).unwrap();
        assert_eq!(f.retrieve(&[1.0, 0.0]).unwrap().indices, vec![0, 1]);
        assert_eq!(r.retrieve(&[1.0, 0.0]).unwrap().indices, vec![1, 0]);
    }

    fn unit_vec(d: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1.0f64..1.0, d).prop_filter("nonzero", |v| l2_norm(v) > 1e-3)
    }

    proptest! {
        #[test]
        fn fidelity_is_symmetric_and_bounded(a in unit_vec(8), b in unit_vec(8)) {
            let ra = density(&normalize_to_state(&a).unwrap());
            let rb = density(&normalize_to_state(&b).unwrap());
            let ab = fidelity(&ra, &rb).unwrap();
            let ba = fidelity(&rb, &ra).unwrap();
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((ab - ba).abs() <= 1e-9);
            prop_assert!((fidelity(&ra, &ra).unwrap() - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn retrieval_ignores_query_scale(
            q in unit_vec(6),
            entries in prop::collection::vec(unit_vec(6), 3..12),
            c in 1e-3f64..1e3,
        ) {
            let kb = kb_from(entries);
            let scaled: Vec<f64> = q.iter().map(|x| x * c).collect();
            let a = retrieve(&q, &kb, 3, 0.1).unwrap();
            let b = retrieve(&scaled, &kb, 3, 0.1).unwrap();
            prop_assert_eq!(a.indices, b.indices);
        }
    }
}
