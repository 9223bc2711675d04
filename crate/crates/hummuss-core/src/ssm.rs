//! Diagonal state-space parameters, discretization, and kernel materialization.
//!
//! One [`DssmParams`] drives a single scalar channel. The continuous-time
//! system is diagonal with complex eigenvalues stored as conjugate pairs:
//! only one member of each pair is kept, and every real-valued output doubles
//! the real part of the retained half (`re(z) + re(conj(z)) = 2*re(z)`).
//!
//! The stored real parts live in log space: the eigenvalue real part is
//! `-exp(lambda_re)`, which keeps the system strictly stable no matter what a
//! training step writes into `lambda_re`. The step size is stored the same
//! way (`delta = exp(delta_log)`).

use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64;
// Float methods on f64 come from this trait under no_std; std builds shadow it.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Learnable parameters of one diagonal SSM channel.
///
/// All vectors have length `state_dim / 2` (one entry per conjugate pair).
#[derive(Debug, Clone, PartialEq)]
pub struct DssmParams {
    /// Log-parameterized eigenvalue real parts: `re(lambda_j) = -exp(lambda_re[j])`.
    pub lambda_re: Vec<f64>,
    /// Eigenvalue imaginary parts, used as stored.
    pub lambda_im: Vec<f64>,
    /// Output mixing weights, one complex weight per retained pair.
    pub c: Vec<Complex64>,
    /// Log step size: `delta = exp(delta_log)` seconds per frame.
    pub delta_log: f64,
    /// Real feedthrough weight applied to the current input.
    pub d: f64,
}

/// Zero-order-hold discretization of one channel: `a_bar[j] = exp(lambda_j * delta)`,
/// `b_bar[j] = (exp(lambda_j * delta) - 1) / lambda_j` (input vector B is all ones).
#[derive(Debug, Clone, PartialEq)]
pub struct Discretized {
    pub a_bar: Vec<Complex64>,
    pub b_bar: Vec<Complex64>,
}

/// Materialized real convolution kernel of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub taps: Vec<f64>,
}

/// `exp(z) - 1` without cancellation for small `|z|`.
///
/// The naive form loses up to half the significand when `|z|` is tiny, which
/// would wreck the relative accuracy of `b_bar` for slow channels. Splitting
/// the real part as `expm1(x)*cos(y) - 2*sin^2(y/2)` keeps every term small
/// when `z` is small.
pub fn cexpm1(z: Complex64) -> Complex64 {
    let (x, y) = (z.re, z.im);
    let half_sin = (0.5 * y).sin();
    Complex64::new(
        libm::expm1(x) * y.cos() - 2.0 * half_sin * half_sin,
        x.exp() * y.sin(),
    )
}

/// ZOH discretization of a single eigenvalue at step size `delta`.
pub fn zoh(lambda: Complex64, delta: f64) -> (Complex64, Complex64) {
    let z = lambda * delta;
    let a_bar = z.exp();
    let b_bar = cexpm1(z) / lambda;
    (a_bar, b_bar)
}

impl DssmParams {
    /// Linear-frequency initialization.
    ///
    /// Eigenvalues start at `-1/2 + i*pi*j` for pair index `j = 1..=state_dim/2`
    /// (so `lambda_re` holds `ln(1/2)`), `c` is standard complex normal, the
    /// step size is log-uniform over `[0.001, 0.1]` seconds, and the
    /// feedthrough starts at zero.
    pub fn init_linear<R: Rng + ?Sized>(state_dim: usize, rng: &mut R) -> Result<Self> {
        if state_dim == 0 || state_dim % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "state_dim must be even and nonzero, got {state_dim}"
            )));
        }
        let pairs = state_dim / 2;
        let lambda_re = alloc::vec![0.5f64.ln(); pairs];
        let lambda_im = (1..=pairs).map(|j| core::f64::consts::PI * j as f64).collect();
        let c = (0..pairs)
            .map(|_| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex64::new(re, im)
            })
            .collect();
        let log_lo = 0.001f64.ln();
        let log_hi = 0.1f64.ln();
        let delta_log = rng.gen_range(log_lo..log_hi);
        Ok(DssmParams {
            lambda_re,
            lambda_im,
            c,
            delta_log,
            d: 0.0,
        })
    }

    /// Number of retained conjugate pairs (`state_dim / 2`).
    pub fn pairs(&self) -> usize {
        self.lambda_re.len()
    }

    /// Full state dimension including the implicit conjugate half.
    pub fn state_dim(&self) -> usize {
        2 * self.pairs()
    }

    /// Eigenvalue of pair `j`: `-exp(lambda_re[j]) + i * lambda_im[j]`.
    pub fn lambda(&self, j: usize) -> Complex64 {
        Complex64::new(-self.lambda_re[j].exp(), self.lambda_im[j])
    }

    /// Step size in seconds.
    pub fn delta(&self) -> f64 {
        self.delta_log.exp()
    }

    /// Learnable scalar count: two eigenvalue vectors, a complex `c` vector
    /// (two scalars per pair), the log step size, and the feedthrough.
    pub fn param_count(&self) -> usize {
        4 * self.pairs() + 2
    }

    /// ZOH discretization at the trained step size.
    pub fn discretize(&self) -> Discretized {
        self.discretize_with_factor(1.0)
            .expect("factor 1.0 is always valid")
    }

    /// ZOH discretization with the step size scaled by `factor`.
    ///
    /// `factor > 1` stretches the step (lower frame rate), `factor < 1`
    /// shrinks it. This is the whole of frame-rate adaptation: the learned
    /// dynamics stay fixed and only the hold interval changes.
    pub fn discretize_with_factor(&self, factor: f64) -> Result<Discretized> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "delta rescale factor must be positive and finite, got {factor}"
            )));
        }
        let delta = factor * self.delta();
        let mut a_bar = Vec::with_capacity(self.pairs());
        let mut b_bar = Vec::with_capacity(self.pairs());
        for j in 0..self.pairs() {
            let (a, b) = zoh(self.lambda(j), delta);
            a_bar.push(a);
            b_bar.push(b);
        }
        Ok(Discretized { a_bar, b_bar })
    }

    /// Materialize the causal convolution kernel over `len` taps.
    ///
    /// Tap `k` is `re(2 * sum_j c[j] * b_bar[j] * exp(lambda_j * k * delta))`,
    /// the closed-form unrolling of the discrete recursion. The exponential is
    /// evaluated directly per tap rather than by accumulating powers of
    /// `a_bar`, so this route and the recursion stay numerically independent.
    pub fn compute_kernel(&self, len: usize) -> Result<Kernel> {
        self.compute_kernel_with_factor(len, 1.0)
    }

    /// [`DssmParams::compute_kernel`] with the step size scaled by `factor`.
    pub fn compute_kernel_with_factor(&self, len: usize, factor: f64) -> Result<Kernel> {
        if len == 0 {
            return Err(Error::InvalidArgument(
                "kernel length must be at least 1".into(),
            ));
        }
        let disc = self.discretize_with_factor(factor)?;
        let delta = factor * self.delta();
        let mut taps = alloc::vec![0.0f64; len];
        for j in 0..self.pairs() {
            let lambda = self.lambda(j);
            let cb = self.c[j] * disc.b_bar[j];
            for (k, tap) in taps.iter_mut().enumerate() {
                let e = (lambda * (k as f64 * delta)).exp();
                *tap += 2.0 * (cb * e).re;
            }
        }
        Ok(Kernel { taps })
    }
}
