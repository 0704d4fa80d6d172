//! Mixed-radix discrete Fourier transform for arbitrary lengths.
//!
//! EEG windows are rarely a power of two (3 s at 256 Hz is 768 samples), so
//! the plan factors the length into primes and runs a recursive
//! decimation-in-time transform. Prime factors larger than the small radices
//! fall back to a direct DFT over that factor, which keeps every length
//! supported at `O(n · Σ pᵢ)` cost.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;

use num_complex::Complex64;

/// Precomputed twiddle factors and factorization for one transform length.
#[derive(Debug, Clone)]
pub struct FftPlan {
    len: usize,
    factors: Vec<usize>,
    /// `twiddles[j] = exp(-2πi·j/len)`
    twiddles: Vec<Complex64>,
    max_factor: usize,
}

impl FftPlan {
    /// Builds a plan for transforms of `len` points. `len` must be non-zero.
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "FFT length must be non-zero");
        let factors = factorize(len);
        let max_factor = factors.iter().copied().max().unwrap_or(1);
        let twiddles = (0..len)
            .map(|j| {
                let angle = -2.0 * PI * (j as f64) / (len as f64);
                Complex64::new(angle.cos(), angle.sin())
            })
            .collect();
        Self {
            len,
            factors,
            twiddles,
            max_factor,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Forward transform, `output[k] = Σ input[j]·exp(-2πi·jk/n)`.
    pub fn forward(&self, input: &[Complex64], output: &mut [Complex64]) {
        assert_eq!(input.len(), self.len);
        assert_eq!(output.len(), self.len);
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.max_factor * 2];
        self.recurse(input, 1, output, &self.factors, 1, &mut scratch);
    }

    /// Inverse transform including the `1/n` normalization.
    pub fn inverse(&self, input: &[Complex64], output: &mut [Complex64]) {
        assert_eq!(input.len(), self.len);
        let conj: Vec<Complex64> = input.iter().map(|c| c.conj()).collect();
        self.forward(&conj, output);
        let scale = 1.0 / self.len as f64;
        for c in output.iter_mut() {
            *c = c.conj() * scale;
        }
    }

    /// In-place forward transform.
    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        let input = buf.to_vec();
        self.forward(&input, buf);
    }

    /// In-place inverse transform (normalized).
    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        let input = buf.to_vec();
        self.inverse(&input, buf);
    }

    fn twiddle(&self, exponent: usize) -> Complex64 {
        self.twiddles[exponent % self.len]
    }

    // `input` is read at `stride`; `output` receives the `output.len()`-point
    // transform. `tw_step` maps a root of unity of the sub-length onto the
    // full-length table.
    fn recurse(
        &self,
        input: &[Complex64],
        stride: usize,
        output: &mut [Complex64],
        factors: &[usize],
        tw_step: usize,
        scratch: &mut [Complex64],
    ) {
        let n = output.len();
        if n == 1 {
            output[0] = input[0];
            return;
        }
        let radix = factors[0];
        let sub = n / radix;
        for r in 0..radix {
            self.recurse(
                &input[r * stride..],
                stride * radix,
                &mut output[r * sub..(r + 1) * sub],
                &factors[1..],
                tw_step * radix,
                scratch,
            );
        }

        let (rotated, _) = scratch.split_at_mut(radix);
        match radix {
            2 => {
                for k in 0..sub {
                    let a = output[k];
                    let b = output[sub + k] * self.twiddle(k * tw_step);
                    output[k] = a + b;
                    output[sub + k] = a - b;
                }
            }
            _ => {
                // W_radix^{rq} in full-table units.
                let radix_step = self.len / radix;
                for k in 0..sub {
                    for (r, slot) in rotated.iter_mut().enumerate() {
                        *slot = output[r * sub + k] * self.twiddle(r * k * tw_step);
                    }
                    for q in 0..radix {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for (r, value) in rotated.iter().enumerate() {
                            acc += value * self.twiddle(((r * q) % radix) * radix_step);
                        }
                        output[q * sub + k] = acc;
                    }
                }
            }
        }
    }
}

fn factorize(mut n: usize) -> Vec<usize> {
    let mut factors = Vec::new();
    // Radix 2 last in the list means it is applied at the innermost levels,
    // where the dedicated butterfly does most of the work.
    let mut odd = Vec::new();
    let mut twos = 0;
    while n.is_multiple_of(2) {
        twos += 1;
        n /= 2;
    }
    let mut p = 3;
    while p * p <= n {
        while n.is_multiple_of(p) {
            odd.push(p);
            n /= p;
        }
        p += 2;
    }
    if n > 1 {
        odd.push(n);
    }
    factors.extend(odd);
    factors.extend(core::iter::repeat_n(2, twos));
    factors
}
