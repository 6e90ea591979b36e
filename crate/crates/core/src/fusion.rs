//! Frequency spectrum representation and cross-modal co-selection.
//!
//! Both projected modalities are mapped to magnitude spectra, each spectrum
//! is summarized by `K` learnable filter banks, and the averaged summary of
//! one modality drives a sigmoid gate over the other modality's full-width
//! spectrum.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{dft_magnitude, matvec, sigmoid, GradTape, Tensor, Var};

pub const DEFAULT_FILTERS: usize = 4;

/// Which parts of the stage run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionFlags {
    /// Magnitude spectrum; off means the stage sees spatial features.
    pub frequency: bool,
    /// Filter banks and gates; off passes the (spectral) features through.
    pub co_selection: bool,
}

impl Default for FusionFlags {
    fn default() -> Self {
        FusionFlags {
            frequency: true,
            co_selection: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    /// `[K × d_model]`
    pub w: Tensor,
    /// `[K]`
    pub b: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    /// `[d_model × 1]`
    pub w: Tensor,
    /// `[d_model]`
    pub b: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    pub text_filter: FilterBank,
    /// `None` ties the image filters to the text filters.
    pub image_filter: Option<FilterBank>,
    /// Gate on the text spectrum, driven by the image summary.
    pub text_gate: Gate,
    /// Gate on the image spectrum, driven by the text summary.
    pub image_gate: Gate,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-bound..bound)).collect(),
    )
    .expect("shape matches")
}

impl FilterBank {
    pub fn init<R: Rng + ?Sized>(rng: &mut R, filters: usize, d_model: usize) -> Self {
        let bound = 1.0 / (d_model as f64).sqrt();
        FilterBank {
            w: uniform(rng, &[filters, d_model], bound),
            b: uniform(rng, &[filters], bound),
        }
    }
}

impl Gate {
    pub fn init<R: Rng + ?Sized>(rng: &mut R, d_model: usize) -> Self {
        Gate {
            w: uniform(rng, &[d_model, 1], 1.0),
            b: uniform(rng, &[d_model], 1.0),
        }
    }
}

impl FusionParams {
    pub fn init<R: Rng + ?Sized>(rng: &mut R, d_model: usize, filters: usize, tie_filters: bool) -> Self {
        let text_filter = FilterBank::init(rng, filters, d_model);
        let image_filter = (!tie_filters).then(|| FilterBank::init(rng, filters, d_model));
        FusionParams {
            text_filter,
            image_filter,
            text_gate: Gate::init(rng, d_model),
            image_gate: Gate::init(rng, d_model),
        }
    }

    pub fn image_filter(&self) -> &FilterBank {
        self.image_filter.as_ref().unwrap_or(&self.text_filter)
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("fusion.filter.text.w".to_string(), &self.text_filter.w),
            ("fusion.filter.text.b".to_string(), &self.text_filter.b),
        ];
        if let Some(f) = &self.image_filter {
            out.push(("fusion.filter.image.w".to_string(), &f.w));
            out.push(("fusion.filter.image.b".to_string(), &f.b));
        }
        out.push(("fusion.gate.text.w".to_string(), &self.text_gate.w));
        out.push(("fusion.gate.text.b".to_string(), &self.text_gate.b));
        out.push(("fusion.gate.image.w".to_string(), &self.image_gate.w));
        out.push(("fusion.gate.image.b".to_string(), &self.image_gate.b));
        out
    }

    /// Same order as [`FusionParams::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.text_filter.w, &mut self.text_filter.b];
        if let Some(f) = &mut self.image_filter {
            out.push(&mut f.w);
            out.push(&mut f.b);
        }
        out.push(&mut self.text_gate.w);
        out.push(&mut self.text_gate.b);
        out.push(&mut self.image_gate.w);
        out.push(&mut self.image_gate.b);
        out
    }

    pub fn bind(&self, tape: &mut GradTape) -> Result<FusionVars> {
        let text_filter = (tape.param(self.text_filter.w.clone())?, tape.param(self.text_filter.b.clone())?);
        let image_filter = match &self.image_filter {
            Some(f) => Some((tape.param(f.w.clone())?, tape.param(f.b.clone())?)),
            None => None,
        };
        Ok(FusionVars {
            text_filter,
            image_filter,
            text_gate: (tape.param(self.text_gate.w.clone())?, tape.param(self.text_gate.b.clone())?),
            image_gate: (tape.param(self.image_gate.w.clone())?, tape.param(self.image_gate.b.clone())?),
        })
    }
}

/// Tape handles for [`FusionParams`].
#[derive(Debug, Clone)]
pub struct FusionVars {
    pub text_filter: (Var, Var),
    pub image_filter: Option<(Var, Var)>,
    pub text_gate: (Var, Var),
    pub image_gate: (Var, Var),
}

impl FusionVars {
    /// Same order as [`FusionParams::named_tensors`].
    pub fn list(&self) -> Vec<Var> {
        let mut out = vec![self.text_filter.0, self.text_filter.1];
        if let Some((w, b)) = self.image_filter {
            out.push(w);
            out.push(b);
        }
        out.extend([self.text_gate.0, self.text_gate.1, self.image_gate.0, self.image_gate.1]);
        out
    }
}

/// Per-sample outputs of the stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFeatures {
    pub t_freq: Vec<f64>,
    pub v_freq: Vec<f64>,
    pub t_compressed: Vec<f64>,
    pub v_compressed: Vec<f64>,
    pub t_enhanced: Vec<f64>,
    pub v_enhanced: Vec<f64>,
}

/// Magnitude spectra of both projected modalities.
pub fn spectral_transform(t: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (dft_magnitude(t), dft_magnitude(v))
}

/// `f[k] = Σ_j W[k,j]·m[j] + b[k]`.
pub fn filter_compress(m_freq: &[f64], bank: &FilterBank) -> Result<Vec<f64>> {
    matvec(&bank.w, m_freq, bank.b.data())
}

fn gate_values(summary: &[f64], gate: &Gate) -> Result<Vec<f64>> {
    if gate.w.cols() != 1 || gate.w.rows() != gate.b.len() {
        return Err(Error::dim(format!(
            "gate W {:?} / b {:?}",
            gate.w.shape(),
            gate.b.shape()
        )));
    }
    let pooled = summary.iter().sum::<f64>() / summary.len() as f64;
    Ok(gate
        .w
        .data()
        .iter()
        .zip(gate.b.data())
        .map(|(w, b)| sigmoid(w * pooled + b))
        .collect())
}

/// Cross-modal gating: `t_enh = t_freq ⊙ σ(W_gate1·avg(v_comp) + b_gate1)`
/// and symmetrically for the image side.
pub fn co_select(
    t_freq: &[f64],
    v_freq: &[f64],
    t_comp: &[f64],
    v_comp: &[f64],
    params: &FusionParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let g_text = gate_values(v_comp, &params.text_gate)?;
    let g_image = gate_values(t_comp, &params.image_gate)?;
    if g_text.len() != t_freq.len() || g_image.len() != v_freq.len() {
        return Err(Error::dim(format!(
            "gate width {} / {} for spectra {} / {}",
            g_text.len(),
            g_image.len(),
            t_freq.len(),
            v_freq.len()
        )));
    }
    let t_enh = t_freq.iter().zip(&g_text).map(|(a, g)| a * g).collect();
    let v_enh = v_freq.iter().zip(&g_image).map(|(a, g)| a * g).collect();
    Ok((t_enh, v_enh))
}

/// Whole stage for one projected sample.
pub fn fsru_forward(t: &[f64], v: &[f64], params: &FusionParams, flags: FusionFlags) -> Result<SpectralFeatures> {
    let (t_freq, v_freq) = if flags.frequency {
        spectral_transform(t, v)
    } else {
        (t.to_vec(), v.to_vec())
    };
    if !flags.co_selection {
        return Ok(SpectralFeatures {
            t_enhanced: t_freq.clone(),
            v_enhanced: v_freq.clone(),
            t_freq,
            v_freq,
            t_compressed: Vec::new(),
            v_compressed: Vec::new(),
        });
    }
    let t_compressed = filter_compress(&t_freq, &params.text_filter)?;
    let v_compressed = filter_compress(&v_freq, params.image_filter())?;
    let (t_enhanced, v_enhanced) = co_select(&t_freq, &v_freq, &t_compressed, &v_compressed, params)?;
    Ok(SpectralFeatures {
        t_freq,
        v_freq,
        t_compressed,
        v_compressed,
        t_enhanced,
        v_enhanced,
    })
}

/// Tape handles for the stage outputs of a batch.
#[derive(Debug, Clone, Copy)]
pub struct FusionOutput {
    pub t_freq: Var,
    pub v_freq: Var,
    pub t_enhanced: Var,
    pub v_enhanced: Var,
}

/// Batched, differentiable version of [`fsru_forward`] on `[B×d_model]` inputs.
pub fn record_fusion(
    tape: &mut GradTape,
    t: Var,
    v: Var,
    vars: &FusionVars,
    flags: FusionFlags,
) -> Result<FusionOutput> {
    let (t_freq, v_freq) = if flags.frequency {
        (tape.dft_magnitude(t)?, tape.dft_magnitude(v)?)
    } else {
        (t, v)
    };
    if !flags.co_selection {
        return Ok(FusionOutput {
            t_freq,
            v_freq,
            t_enhanced: t_freq,
            v_enhanced: v_freq,
        });
    }
    let (tfw, tfb) = vars.text_filter;
    let (ifw, ifb) = vars.image_filter.unwrap_or(vars.text_filter);
    let t_comp = tape.linear(t_freq, tfw, tfb)?;
    let v_comp = tape.linear(v_freq, ifw, ifb)?;
    let v_pool = tape.mean_cols(v_comp)?;
    let t_pool = tape.mean_cols(t_comp)?;
    let g_text_pre = tape.linear(v_pool, vars.text_gate.0, vars.text_gate.1)?;
    let g_image_pre = tape.linear(t_pool, vars.image_gate.0, vars.image_gate.1)?;
    let g_text = tape.sigmoid(g_text_pre)?;
    let g_image = tape.sigmoid(g_image_pre)?;
    Ok(FusionOutput {
        t_freq,
        v_freq,
        t_enhanced: tape.mul(t_freq, g_text)?,
        v_enhanced: tape.mul(v_freq, g_image)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(99)
    }

    fn rand_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn zero_gates(params: &mut FusionParams) {
        for g in [&mut params.text_gate, &mut params.image_gate] {
            g.w.data_mut().fill(0.0);
            g.b.data_mut().fill(0.0);
        }
    }

    #[test]
    fn constant_text_is_dc_only() {
        let (tf, _) = spectral_transform(&[2.0; 8], &[0.0; 8]);
        assert!((tf[0] - 16.0).abs() < 1e-12);
        assert!(tf[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn shifted_image_has_identical_spectrum() {
        let mut r = rng();
        let v = rand_vec(&mut r, 16);
        let mut shifted = v.clone();
        shifted.rotate_left(5);
        let (_, a) = spectral_transform(&[0.0; 16], &v);
        let (_, b) = spectral_transform(&[0.0; 16], &shifted);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn identity_filters_and_zero_filters() {
        let bank = FilterBank {
            w: Tensor::eye(4, 4),
            b: Tensor::zeros(&[4]),
        };
        let m = [0.5, 1.5, 2.5, 3.5];
        assert_eq!(filter_compress(&m, &bank).unwrap(), m.to_vec());
        let bank = FilterBank {
            w: Tensor::zeros(&[4, 4]),
            b: Tensor::vector(vec![1.0, -2.0, 3.0, 0.25]),
        };
        assert_eq!(filter_compress(&m, &bank).unwrap(), vec![1.0, -2.0, 3.0, 0.25]);
    }

    #[test]
    fn filter_matches_loop_oracle() {
        let mut r = rng();
        let bank = FilterBank::init(&mut r, 4, 8);
        let m = rand_vec(&mut r, 8);
        let got = filter_compress(&m, &bank).unwrap();
        for k in 0..4 {
            let mut acc = bank.b.data()[k];
            for j in 0..8 {
                acc += bank.w.get(k, j) * m[j];
            }
            assert!((got[k] - acc).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_gate_halves_spectrum() {
        let mut r = rng();
        let mut p = FusionParams::init(&mut r, 8, 4, false);
        zero_gates(&mut p);
        let tf = rand_vec(&mut r, 8);
        let vf = rand_vec(&mut r, 8);
        let (te, ve) = co_select(&tf, &vf, &[1.0; 4], &[2.0; 4], &p).unwrap();
        for i in 0..8 {
            assert_eq!(te[i], 0.5 * tf[i]);
            assert_eq!(ve[i], 0.5 * vf[i]);
        }
    }

    #[test]
    fn saturated_gate_passes_spectrum() {
        let mut r = rng();
        let mut p = FusionParams::init(&mut r, 8, 4, false);
        zero_gates(&mut p);
        p.text_gate.b.data_mut().fill(50.0);
        p.image_gate.b.data_mut().fill(50.0);
        let tf = rand_vec(&mut r, 8);
        let vf = rand_vec(&mut r, 8);
        let (te, ve) = co_select(&tf, &vf, &[1.0; 4], &[1.0; 4], &p).unwrap();
        for i in 0..8 {
            assert!((te[i] - tf[i]).abs() <= 1e-12);
            assert!((ve[i] - vf[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn co_select_matches_transcribed_formula() {
        let mut r = rng();
        let p = FusionParams::init(&mut r, 8, 4, false);
        let (tf, vf) = (rand_vec(&mut r, 8), rand_vec(&mut r, 8));
        let (tc, vc) = (rand_vec(&mut r, 4), rand_vec(&mut r, 4));
        let (te, ve) = co_select(&tf, &vf, &tc, &vc, &p).unwrap();
        let avg_v = (vc[0] + vc[1] + vc[2] + vc[3]) / 4.0;
        let avg_t = (tc[0] + tc[1] + tc[2] + tc[3]) / 4.0;
        for i in 0..8 {
            let gt = 1.0 / (1.0 + (-(p.text_gate.w.data()[i] * avg_v + p.text_gate.b.data()[i])).exp());
            let gi = 1.0 / (1.0 + (-(p.image_gate.w.data()[i] * avg_t + p.image_gate.b.data()[i])).exp());
            assert!((te[i] - tf[i] * gt).abs() <= 1e-12);
            assert!((ve[i] - vf[i] * gi).abs() <= 1e-12);
        }
    }

    #[test]
    fn gates_never_amplify() {
        let mut r = rng();
        for _ in 0..20 {
            let p = FusionParams::init(&mut r, 16, 4, true);
            let t = rand_vec(&mut r, 16);
            let v = rand_vec(&mut r, 16);
            let s = fsru_forward(&t, &v, &p, FusionFlags::default()).unwrap();
            assert!(s.t_freq.iter().all(|&x| x >= 0.0));
            for (e, f) in s.t_enhanced.iter().zip(&s.t_freq) {
                assert!(e.abs() <= f.abs());
            }
            for (e, f) in s.v_enhanced.iter().zip(&s.v_freq) {
                assert!(e.abs() <= f.abs());
            }
        }
    }

    #[test]
    fn disabled_stage_is_identity_on_projected_features() {
        let mut r = rng();
        let p = FusionParams::init(&mut r, 8, 4, false);
        let t = rand_vec(&mut r, 8);
        let v = rand_vec(&mut r, 8);
        let flags = FusionFlags {
            frequency: false,
            co_selection: false,
        };
        let s = fsru_forward(&t, &v, &p, flags).unwrap();
        assert_eq!(s.t_enhanced, t);
        assert_eq!(s.v_enhanced, v);
    }

    #[test]
    fn tied_filters_reuse_text_bank() {
        let mut r = rng();
        let p = FusionParams::init(&mut r, 8, 4, true);
        assert!(p.image_filter.is_none());
        assert_eq!(p.image_filter(), &p.text_filter);
        assert_eq!(p.named_tensors().len(), 6);
    }

    #[test]
    fn tape_matches_pure_stage() {
        let mut r = rng();
        let p = FusionParams::init(&mut r, 8, 4, false);
        let rows: Vec<Vec<f64>> = (0..3).map(|_| rand_vec(&mut r, 8)).collect();
        let vrows: Vec<Vec<f64>> = (0..3).map(|_| rand_vec(&mut r, 8)).collect();
        let mut tape = GradTape::new();
        let vars = p.bind(&mut tape).unwrap();
        let t = tape.constant(Tensor::from_rows(&rows).unwrap()).unwrap();
        let v = tape.constant(Tensor::from_rows(&vrows).unwrap()).unwrap();
        let out = record_fusion(&mut tape, t, v, &vars, FusionFlags::default()).unwrap();
        for i in 0..3 {
            let s = fsru_forward(&rows[i], &vrows[i], &p, FusionFlags::default()).unwrap();
            for (a, b) in tape.value(out.t_enhanced).row(i).iter().zip(&s.t_enhanced) {
                assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in tape.value(out.v_enhanced).row(i).iter().zip(&s.v_enhanced) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert_eq!(vars.list().len(), p.named_tensors().len());
    }
}
