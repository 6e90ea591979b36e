//! Discrete Fourier transform of real feature vectors.
//!
//! Convention: unnormalized forward transform,
//! `X[k] = Σ_n x[n]·exp(−2πi·kn/d)`, so Parseval reads
//! `Σ_k |X[k]|² = d·Σ_n x[n]²`.

use std::f64::consts::PI;

use num_complex::Complex64;

/// Zero-magnitude bins divide by this instead of `|X[k]|` in the adjoint.
pub const MAGNITUDE_EPS: f64 = 1e-12;

/// Forward transform of a real vector. Radix-2 for power-of-two lengths,
/// direct summation otherwise.
pub fn dft(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform(&mut buf, false);
    buf
}

/// In-place complex transform; `inverse` flips the exponent sign (no 1/d).
pub fn transform(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    if n.is_power_of_two() {
        fft_radix2(buf, inverse);
    } else {
        let out = naive(buf, inverse);
        buf.copy_from_slice(&out);
    }
}

fn twiddle(k: usize, n: usize, inverse: bool) -> Complex64 {
    let sign = if inverse { 1.0 } else { -1.0 };
    let angle = sign * 2.0 * PI * (k % n) as f64 / n as f64;
    Complex64::new(angle.cos(), angle.sin())
}

fn naive(input: &[Complex64], inverse: bool) -> Vec<Complex64> {
    let n = input.len();
    (0..n)
        .map(|k| {
            input
                .iter()
                .enumerate()
                .map(|(j, &v)| v * twiddle(k * j, n, inverse))
                .sum()
        })
        .collect()
}

fn fft_radix2(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    let bits = n.trailing_zeros();

    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if i < j {
            buf.swap(i, j);
        }
    }

    // Twiddles are evaluated directly rather than by recurrence to keep
    // round-off at the level of a single sin/cos.
    let table: Vec<Complex64> = (0..n / 2).map(|k| twiddle(k, n, inverse)).collect();

    let mut size = 2;
    while size <= n {
        let half = size / 2;
        let stride = n / size;
        for start in (0..n).step_by(size) {
            for k in 0..half {
                let w = table[k * stride];
                let u = buf[start + k];
                let v = buf[start + k + half] * w;
                buf[start + k] = u + v;
                buf[start + k + half] = u - v;
            }
        }
        size *= 2;
    }
}

/// `|X[k]|` for every bin.
pub fn dft_magnitude(x: &[f64]) -> Vec<f64> {
    dft(x).iter().map(|c| c.norm()).collect()
}

/// Adjoint of [`dft_magnitude`]:
/// `grad[n] = Σ_k upstream[k]·Re(conj(X[k])·exp(−2πi·kn/d)) / max(|X[k]|, ε)`.
///
/// The sum over `k` is the real part of an inverse transform of
/// `upstream[k]·X[k]/max(|X[k]|, ε)`, so this is O(d log d) for power-of-two `d`.
pub fn dft_magnitude_backward(x: &[f64], upstream: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), upstream.len());
    let spectrum = dft(x);
    dft_magnitude_backward_with(&spectrum, upstream)
}

/// Same as [`dft_magnitude_backward`] with the forward spectrum already known.
pub fn dft_magnitude_backward_with(spectrum: &[Complex64], upstream: &[f64]) -> Vec<f64> {
    let mut weighted: Vec<Complex64> = spectrum
        .iter()
        .zip(upstream)
        .map(|(&xk, &g)| xk * (g / xk.norm().max(MAGNITUDE_EPS)))
        .collect();
    transform(&mut weighted, true);
    weighted.iter().map(|c| c.re).collect()
}
