//! Power-of-two radix-2 FFT and FFT-based causal convolution.
//!
//! The convolutional execution path of the state-space layer needs one
//! operation: causal (linear, truncated) convolution of a real signal with a
//! real kernel of the same length. Both inputs are zero-padded to the next
//! power of two at or above `2 * len - 1`, so no circular wrap-around ever
//! reaches the retained prefix.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
// Float methods on f64 come from this trait under no_std; std builds shadow it.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Smallest power of two that is `>= n`.
pub fn next_power_of_two(n: usize) -> usize {
    n.next_power_of_two()
}

/// In-place iterative radix-2 Cooley-Tukey FFT.
///
/// `sign` is -1 for the forward transform and +1 for the inverse (the inverse
/// here is unnormalized; [`ifft_in_place`] applies the 1/n factor).
fn fft_radix2(buf: &mut [Complex64], sign: f64) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    if n <= 1 {
        return;
    }

    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }

    // Butterfly passes. Twiddles are derived per stage from a root computed
    // with sin/cos; accumulated by multiplication within a stage, which is
    // accurate enough at the transform sizes used here (<= 2^20).
    let mut len = 2usize;
    while len <= n {
        let ang = sign * 2.0 * core::f64::consts::PI / len as f64;
        let root = Complex64::new(ang.cos(), ang.sin());
        let half = len / 2;
        let mut start = 0;
        while start < n {
            let mut w = Complex64::new(1.0, 0.0);
            for k in 0..half {
                let even = buf[start + k];
                let odd = buf[start + k + half] * w;
                buf[start + k] = even + odd;
                buf[start + k + half] = even - odd;
                w *= root;
            }
            start += len;
        }
        len <<= 1;
    }
}

/// Forward FFT, in place. Length must be a power of two.
pub fn fft_in_place(buf: &mut [Complex64]) {
    fft_radix2(buf, -1.0);
}

/// Inverse FFT, in place, normalized by 1/n. Length must be a power of two.
pub fn ifft_in_place(buf: &mut [Complex64]) {
    fft_radix2(buf, 1.0);
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// Spectrum of a real kernel, zero-padded to `padded` points.
///
/// Splitting this out lets callers transform a kernel once and reuse it
/// across every batch sequence convolved with it.
pub fn real_spectrum(signal: &[f64], padded: usize) -> Result<Vec<Complex64>> {
    if !padded.is_power_of_two() || padded < signal.len() {
        return Err(Error::InvalidArgument(alloc::format!(
            "padded length {padded} must be a power of two >= signal length {}",
            signal.len()
        )));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); padded];
    for (slot, &v) in buf.iter_mut().zip(signal.iter()) {
        slot.re = v;
    }
    fft_in_place(&mut buf);
    Ok(buf)
}

/// Causal convolution of `signal` with a kernel given by its spectrum.
///
/// Returns the first `signal.len()` taps of the linear convolution, i.e.
/// `y[t] = sum_{k<=t} kernel[k] * signal[t-k]`. `kernel_spectrum` must come
/// from [`real_spectrum`] with `padded >= next_power_of_two(2*len - 1)`.
pub fn conv_with_spectrum(signal: &[f64], kernel_spectrum: &[Complex64]) -> Result<Vec<f64>> {
    let padded = kernel_spectrum.len();
    let min = next_power_of_two(2 * signal.len().max(1) - 1);
    if padded < min {
        return Err(Error::InvalidArgument(alloc::format!(
            "spectrum length {padded} too short for signal length {} (need >= {min})",
            signal.len()
        )));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); padded];
    for (slot, &v) in buf.iter_mut().zip(signal.iter()) {
        slot.re = v;
    }
    fft_in_place(&mut buf);
    for (v, k) in buf.iter_mut().zip(kernel_spectrum.iter()) {
        *v *= k;
    }
    ifft_in_place(&mut buf);
    Ok(buf.iter().take(signal.len()).map(|z| z.re).collect())
}

/// One-shot causal convolution of two equal-length real sequences.
pub fn causal_conv(signal: &[f64], kernel: &[f64]) -> Result<Vec<f64>> {
    if signal.len() != kernel.len() {
        return Err(Error::ShapeMismatch(alloc::format!(
            "signal length {} != kernel length {}",
            signal.len(),
            kernel.len()
        )));
    }
    if signal.is_empty() {
        return Ok(Vec::new());
    }
    let padded = next_power_of_two(2 * signal.len() - 1);
    let spectrum = real_spectrum(kernel, padded)?;
    conv_with_spectrum(signal, &spectrum)
}
