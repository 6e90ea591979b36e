//! Feature concatenation and the MLP classifier.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{GradTape, Tensor, Var};

pub const DEFAULT_HIDDEN: [usize; 2] = [1024, 256];
pub const DEFAULT_DROPOUT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// `[t ‖ v]`, `2·d_model` wide.
    #[default]
    FreqOnly,
    /// `[t ‖ v ‖ k_agg]`, `3·d_model` wide.
    FreqPlusKnowledge,
}

impl FusionMode {
    pub fn input_dim(self, d_model: usize) -> usize {
        match self {
            FusionMode::FreqOnly => 2 * d_model,
            FusionMode::FreqPlusKnowledge => 3 * d_model,
        }
    }
}

pub fn fuse(t: &[f64], v: &[f64], k_agg: Option<&[f64]>, mode: FusionMode) -> Result<Vec<f64>> {
    if t.len() != v.len() {
        return Err(Error::dim(format!("fuse: text {} vs image {}", t.len(), v.len())));
    }
    let mut z = Vec::with_capacity(mode.input_dim(t.len()));
    z.extend_from_slice(t);
    z.extend_from_slice(v);
    match (mode, k_agg) {
        (FusionMode::FreqOnly, _) => {}
        (FusionMode::FreqPlusKnowledge, Some(k)) if k.len() == t.len() => z.extend_from_slice(k),
        (FusionMode::FreqPlusKnowledge, Some(k)) => {
            return Err(Error::dim(format!("fuse: knowledge {} vs features {}", k.len(), t.len())))
        }
        (FusionMode::FreqPlusKnowledge, None) => {
            return Err(Error::Contract("knowledge fusion without an aggregated entry".into()))
        }
    }
    Ok(z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `[out × in]`
    pub w: Tensor,
    pub b: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormLayer {
    pub gamma: Tensor,
    pub beta: Tensor,
}

/// `Linear → LayerNorm → GELU → Dropout` twice, then `Linear`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub fc1: DenseLayer,
    pub norm1: NormLayer,
    pub fc2: DenseLayer,
    pub norm2: NormLayer,
    pub fc3: DenseLayer,
}

impl DenseLayer {
    /// `U(±1/√fan_in)` weights and biases.
    pub fn init<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..bound)).collect() };
        DenseLayer {
            w: Tensor::matrix(fan_out, fan_in, draw(fan_out * fan_in)).expect("shape"),
            b: Tensor::vector(draw(fan_out)),
        }
    }
}

impl NormLayer {
    pub fn new(width: usize) -> Self {
        NormLayer {
            gamma: Tensor::filled(&[width], 1.0),
            beta: Tensor::zeros(&[width]),
        }
    }
}

impl ClassifierParams {
    pub fn init<R: Rng + ?Sized>(rng: &mut R, in_dim: usize, hidden: [usize; 2], classes: usize) -> Self {
        let fc1 = DenseLayer::init(rng, in_dim, hidden[0]);
        let fc2 = DenseLayer::init(rng, hidden[0], hidden[1]);
        let fc3 = DenseLayer::init(rng, hidden[1], classes);
        ClassifierParams {
            fc1,
            norm1: NormLayer::new(hidden[0]),
            fc2,
            norm2: NormLayer::new(hidden[1]),
            fc3,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.fc1.w.cols()
    }

    pub fn classes(&self) -> usize {
        self.fc3.w.rows()
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("head.fc1.w".into(), &self.fc1.w),
            ("head.fc1.b".into(), &self.fc1.b),
            ("head.norm1.gamma".into(), &self.norm1.gamma),
            ("head.norm1.beta".into(), &self.norm1.beta),
            ("head.fc2.w".into(), &self.fc2.w),
            ("head.fc2.b".into(), &self.fc2.b),
            ("head.norm2.gamma".into(), &self.norm2.gamma),
            ("head.norm2.beta".into(), &self.norm2.beta),
            ("head.fc3.w".into(), &self.fc3.w),
            ("head.fc3.b".into(), &self.fc3.b),
        ]
    }

    /// Same order as [`ClassifierParams::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.fc1.w,
            &mut self.fc1.b,
            &mut self.norm1.gamma,
            &mut self.norm1.beta,
            &mut self.fc2.w,
            &mut self.fc2.b,
            &mut self.norm2.gamma,
            &mut self.norm2.beta,
            &mut self.fc3.w,
            &mut self.fc3.b,
        ]
    }

    pub fn bind(&self, tape: &mut GradTape) -> Result<ClassifierVars> {
        let mut vars = Vec::with_capacity(10);
        for (_, t) in self.named_tensors() {
            vars.push(tape.param(t.clone())?);
        }
        Ok(ClassifierVars { vars })
    }
}

/// Tape handles in [`ClassifierParams::named_tensors`] order.
#[derive(Debug, Clone)]
pub struct ClassifierVars {
    vars: Vec<Var>,
}

impl ClassifierVars {
    pub fn from_list(vars: Vec<Var>) -> Result<Self> {
        if vars.len() != 10 {
            return Err(Error::dim(format!("classifier needs 10 tensors, got {}", vars.len())));
        }
        Ok(ClassifierVars { vars })
    }

    pub fn list(&self) -> &[Var] {
        &self.vars
    }
}

/// Logits `[B×C]` for a `[B×in_dim]` input. Dropout runs only when `rng` is given.
pub fn record_classifier<R: Rng + ?Sized>(
    tape: &mut GradTape,
    z: Var,
    vars: &ClassifierVars,
    dropout: f64,
    mut rng: Option<&mut R>,
) -> Result<Var> {
    let v = &vars.vars;
    let mut h = z;
    for layer in 0..2 {
        let o = layer * 4;
        h = tape.linear(h, v[o], v[o + 1])?;
        h = tape.layernorm(h, v[o + 2], v[o + 3])?;
        h = tape.gelu(h)?;
        h = tape.dropout(h, dropout, rng.as_deref_mut())?;
    }
    tape.linear(h, v[8], v[9])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Train,
    Eval,
}

/// Logits for a single fused vector. `rng` is consumed only in train mode.
pub fn classify<R: Rng + ?Sized>(
    z: &[f64],
    params: &ClassifierParams,
    dropout: f64,
    mode: RunMode,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if z.len() != params.in_dim() {
        return Err(Error::dim(format!(
            "classifier expects {} inputs, got {}",
            params.in_dim(),
            z.len()
        )));
    }
    let mut tape = GradTape::new();
    let vars = params.bind(&mut tape)?;
    let x = tape.constant(Tensor::matrix(1, z.len(), z.to_vec())?)?;
    let rng = match mode {
        RunMode::Train => Some(rng),
        RunMode::Eval => None,
    };
    let out = record_classifier(&mut tape, x, &vars, dropout, rng)?;
    Ok(tape.value(out).data().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(rng: &mut ChaCha8Rng) -> ClassifierParams {
        ClassifierParams::init(rng, 16, [8, 6], 3)
    }

    #[test]
    fn fusion_widths() {
        let t = vec![1.0; 256];
        let v = vec![2.0; 256];
        let k = vec![3.0; 256];
        assert_eq!(fuse(&t, &v, None, FusionMode::FreqOnly).unwrap().len(), 512);
        let z = fuse(&t, &v, Some(&k), FusionMode::FreqPlusKnowledge).unwrap();
        assert_eq!(z.len(), 768);
        assert_eq!(&z[..256], &t[..]);
        assert_eq!(&z[256..512], &v[..]);
        assert_eq!(&z[512..], &k[..]);
        assert!(fuse(&t, &v, None, FusionMode::FreqPlusKnowledge).is_err());
    }

    #[test]
    fn zero_network_outputs_final_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = toy(&mut rng);
        for t in p.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        p.fc3.b = Tensor::vector(vec![1.0, 2.0, 3.0]);
        let logits = classify(&[0.7; 16], &p, 0.1, RunMode::Eval, &mut rng).unwrap();
        assert_eq!(logits, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn eval_is_deterministic_and_leaves_rng_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = toy(&mut rng);
        let z: Vec<f64> = (0..16).map(|i| (i as f64).sin()).collect();
        let before = rng.clone();
        let a = classify(&z, &p, 0.1, RunMode::Eval, &mut rng).unwrap();
        let b = classify(&z, &p, 0.1, RunMode::Eval, &mut rng).unwrap();
        assert_eq!(a, b);
        assert_eq!(rng, before);
        assert_eq!(a.len(), p.classes());
    }

    #[test]
    fn swapping_class_rows_swaps_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = toy(&mut rng);
        let mut q = p.clone();
        let h = q.fc3.w.cols();
        for j in 0..h {
            let (a, b) = (q.fc3.w.get(0, j), q.fc3.w.get(2, j));
            q.fc3.w.set(0, j, b);
            q.fc3.w.set(2, j, a);
        }
        q.fc3.b.data_mut().swap(0, 2);
        let z: Vec<f64> = (0..16).map(|i| (i as f64 * 0.3).cos()).collect();
        let a = classify(&z, &p, 0.1, RunMode::Eval, &mut rng).unwrap();
        let b = classify(&z, &q, 0.1, RunMode::Eval, &mut rng).unwrap();
        assert_eq!((a[0], a[1], a[2]), (b[2], b[1], b[0]));
    }

    #[test]
    fn wrong_width_is_dimension_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = toy(&mut rng);
        assert!(matches!(
            classify(&[0.0; 15], &p, 0.1, RunMode::Eval, &mut rng),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn dropout_average_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = toy(&mut rng);
        let z: Vec<f64> = (0..16).map(|i| (i as f64 * 0.7).sin()).collect();
        let mean_over = |seeds: std::ops::Range<u64>| -> Vec<f64> {
            let n = (seeds.end - seeds.start) as f64;
            let mut acc = vec![0.0; 3];
            for s in seeds {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                let l = classify(&z, &p, 0.1, RunMode::Train, &mut r).unwrap();
                acc.iter_mut().zip(&l).for_each(|(a, v)| *a += v / n);
            }
            acc
        };
        let a = mean_over(0..10_000);
        let b = mean_over(10_000..20_000);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-2, "{a:?} vs {b:?}");
        }
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let one = classify(&z, &p, 0.1, RunMode::Train, &mut r).unwrap();
        let eval = classify(&z, &p, 0.1, RunMode::Eval, &mut r).unwrap();
        assert_ne!(one, eval);
    }
}
