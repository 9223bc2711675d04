//! Executing a bank of diagonal SSM channels over sequences.
//!
//! A [`DssmLayer`] holds one [`DssmParams`] per channel and runs them with
//! interchangeable executors:
//!
//! * [`conv_fft`]: materialized kernel, FFT causal convolution. Parallel over
//!   the whole sequence; the training-time path.
//! * [`conv_naive`]: same kernel applied by the direct `O(L^2)` sum. Slow,
//!   kept as the reference the fast paths are checked against.
//! * [`DssmLayer::scan`]: the discrete recursion applied across the sequence.
//!   Structurally causal: output at `t` is computed before any later input is
//!   touched, so prefixes are bit-stable under suffix edits.
//! * [`DssmLayer::step`]: one frame of the recursion against persistent
//!   [`SsmState`], `O(1)` per frame regardless of history length.
//!
//! All four agree to floating-point accuracy; the executors differ only in
//! cost profile.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::ssm::{Discretized, DssmParams, Kernel};

/// Dense `[batch, len, channels]` sequence tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqTensor {
    pub data: Vec<f64>,
    pub batch: usize,
    pub len: usize,
    pub channels: usize,
}

impl SeqTensor {
    pub fn zeros(batch: usize, len: usize, channels: usize) -> Self {
        SeqTensor {
            data: vec![0.0; batch * len * channels],
            batch,
            len,
            channels,
        }
    }

    pub fn from_vec(data: Vec<f64>, batch: usize, len: usize, channels: usize) -> Result<Self> {
        if data.len() != batch * len * channels {
            return Err(Error::ShapeMismatch(format!(
                "data length {} != {batch}x{len}x{channels}",
                data.len()
            )));
        }
        Ok(SeqTensor {
            data,
            batch,
            len,
            channels,
        })
    }

    #[inline]
    pub fn idx(&self, b: usize, t: usize, h: usize) -> usize {
        (b * self.len + t) * self.channels + h
    }

    #[inline]
    pub fn at(&self, b: usize, t: usize, h: usize) -> f64 {
        self.data[self.idx(b, t, h)]
    }

    /// Contiguous view of one time step of one batch element.
    #[inline]
    pub fn frame(&self, b: usize, t: usize) -> &[f64] {
        let start = (b * self.len + t) * self.channels;
        &self.data[start..start + self.channels]
    }

    #[inline]
    pub fn frame_mut(&mut self, b: usize, t: usize) -> &mut [f64] {
        let start = (b * self.len + t) * self.channels;
        &mut self.data[start..start + self.channels]
    }

    /// Time-reversed copy: output frame `t` is input frame `len - 1 - t`.
    pub fn flip_time(&self) -> SeqTensor {
        let mut out = SeqTensor::zeros(self.batch, self.len, self.channels);
        for b in 0..self.batch {
            for t in 0..self.len {
                out.frame_mut(b, t).copy_from_slice(self.frame(b, self.len - 1 - t));
            }
        }
        out
    }
}

/// Persistent recurrent state of one layer: one complex vector per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SsmState {
    /// `[channels * pairs]` complex state, channel-major.
    pub state: Vec<Complex64>,
    pub channels: usize,
    pub pairs: usize,
    /// Timestamp of the last consumed frame, if the caller tracks time.
    pub last_timestamp: Option<f64>,
}

impl SsmState {
    pub fn new(channels: usize, pairs: usize) -> Self {
        SsmState {
            state: vec![Complex64::new(0.0, 0.0); channels * pairs],
            channels,
            pairs,
            last_timestamp: None,
        }
    }

    /// Zero the state and forget the last timestamp.
    pub fn reset(&mut self) {
        for v in self.state.iter_mut() {
            *v = Complex64::new(0.0, 0.0);
        }
        self.last_timestamp = None;
    }

    /// Bytes held by the recurrent state proper (complex entries only).
    /// Constant for the life of the state, however many frames pass through.
    pub fn accounted_bytes(&self) -> usize {
        self.state.len() * core::mem::size_of::<Complex64>()
    }
}

/// FFT-based causal convolution of every channel, plus feedthrough.
///
/// `y[b,t,h] = sum_{k<=t} kernels[h].taps[k] * u[b,t-k,h] + d[h] * u[b,t,h]`.
/// Signals are zero-padded to the next power of two at or above `2*len - 1`,
/// so the linear convolution is exact (no circular aliasing). Each kernel is
/// transformed once and its spectrum shared across the batch.
pub fn conv_fft(u: &SeqTensor, kernels: &[Kernel], d: &[f64]) -> Result<SeqTensor> {
    check_conv_args(u, kernels.len(), d.len())?;
    for (h, k) in kernels.iter().enumerate() {
        if k.taps.len() != u.len {
            return Err(Error::ShapeMismatch(format!(
                "kernel {h} has {} taps, sequence length is {}",
                k.taps.len(),
                u.len
            )));
        }
    }
    let mut y = SeqTensor::zeros(u.batch, u.len, u.channels);
    if u.len == 0 || u.batch == 0 || u.channels == 0 {
        return Ok(y);
    }
    let padded = fft::next_power_of_two(2 * u.len - 1);
    let mut series = vec![0.0f64; u.len];
    for h in 0..u.channels {
        let spectrum = fft::real_spectrum(&kernels[h].taps, padded)?;
        for b in 0..u.batch {
            for t in 0..u.len {
                series[t] = u.at(b, t, h);
            }
            let conv = fft::conv_with_spectrum(&series, &spectrum)?;
            for t in 0..u.len {
                let i = y.idx(b, t, h);
                y.data[i] = conv[t] + d[h] * series[t];
            }
        }
    }
    Ok(y)
}

/// Direct-sum causal convolution; the `O(L^2)` reference executor.
pub fn conv_naive(u: &SeqTensor, kernels: &[Kernel], d: &[f64]) -> Result<SeqTensor> {
    check_conv_args(u, kernels.len(), d.len())?;
    for (h, k) in kernels.iter().enumerate() {
        if k.taps.len() != u.len {
            return Err(Error::ShapeMismatch(format!(
                "kernel {h} has {} taps, sequence length is {}",
                k.taps.len(),
                u.len
            )));
        }
    }
    let mut y = SeqTensor::zeros(u.batch, u.len, u.channels);
    for b in 0..u.batch {
        for h in 0..u.channels {
            let taps = &kernels[h].taps;
            for t in 0..u.len {
                let mut acc = 0.0;
                for k in 0..=t {
                    acc += taps[k] * u.at(b, t - k, h);
                }
                let i = y.idx(b, t, h);
                y.data[i] = acc + d[h] * u.at(b, t, h);
            }
        }
    }
    Ok(y)
}

fn check_conv_args(u: &SeqTensor, kernels: usize, d: usize) -> Result<()> {
    if kernels != u.channels || d != u.channels {
        return Err(Error::ShapeMismatch(format!(
            "{} kernels / {} feedthrough weights for {} channels",
            kernels, d, u.channels
        )));
    }
    Ok(())
}

/// A bank of per-channel diagonal SSMs executed together.
#[derive(Debug, Clone, PartialEq)]
pub struct DssmLayer {
    pub params: Vec<DssmParams>,
}

impl DssmLayer {
    /// Build a layer of `channels` independently initialized channels.
    pub fn init_linear<R: rand::Rng + ?Sized>(
        channels: usize,
        state_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let params = (0..channels)
            .map(|_| DssmParams::init_linear(state_dim, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(DssmLayer { params })
    }

    pub fn channels(&self) -> usize {
        self.params.len()
    }

    /// Pairs per channel. All channels share one state size.
    pub fn pairs(&self) -> usize {
        self.params.first().map_or(0, |p| p.pairs())
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.param_count()).sum()
    }

    /// Materialize every channel's kernel at sequence length `len`.
    pub fn kernels(&self, len: usize) -> Result<Vec<Kernel>> {
        self.params.iter().map(|p| p.compute_kernel(len)).collect()
    }

    /// Kernels with the step size scaled by `factor`.
    pub fn kernels_with_factor(&self, len: usize, factor: f64) -> Result<Vec<Kernel>> {
        self.params
            .iter()
            .map(|p| p.compute_kernel_with_factor(len, factor))
            .collect()
    }

    /// Per-channel feedthrough weights.
    pub fn feedthrough(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.d).collect()
    }

    /// Per-channel ZOH discretization at the trained step size.
    pub fn discretize(&self) -> Vec<Discretized> {
        self.params.iter().map(|p| p.discretize()).collect()
    }

    /// Per-channel discretization with the step size scaled by `factor`.
    pub fn discretize_with_factor(&self, factor: f64) -> Result<Vec<Discretized>> {
        self.params
            .iter()
            .map(|p| p.discretize_with_factor(factor))
            .collect()
    }

    /// Run the layer by FFT convolution (sequence-parallel path).
    pub fn forward_fft(&self, u: &SeqTensor) -> Result<SeqTensor> {
        self.forward_fft_with_factor(u, 1.0)
    }

    /// [`DssmLayer::forward_fft`] with the step size scaled by `factor`.
    pub fn forward_fft_with_factor(&self, u: &SeqTensor, factor: f64) -> Result<SeqTensor> {
        if u.len == 0 {
            return Ok(u.clone());
        }
        conv_fft(u, &self.kernels_with_factor(u.len, factor)?, &self.feedthrough())
    }

    /// Run the layer by the direct convolution sum (reference path).
    pub fn forward_naive(&self, u: &SeqTensor) -> Result<SeqTensor> {
        if u.len == 0 {
            return Ok(u.clone());
        }
        conv_naive(u, &self.kernels(u.len)?, &self.feedthrough())
    }

    /// Run the layer by the recursion, scanning time left to right.
    ///
    /// Identical arithmetic to stepping a fresh [`SsmState`] through the
    /// sequence, batched over `b`. Used where bit-exact causality matters.
    pub fn scan(&self, u: &SeqTensor) -> Result<SeqTensor> {
        self.scan_with_factor(u, 1.0)
    }

    /// [`DssmLayer::scan`] with the step size scaled by `factor`.
    pub fn scan_with_factor(&self, u: &SeqTensor, factor: f64) -> Result<SeqTensor> {
        if u.channels != self.channels() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} channels, layer has {}",
                u.channels,
                self.channels()
            )));
        }
        let disc = self.discretize_with_factor(factor)?;
        let mut y = SeqTensor::zeros(u.batch, u.len, u.channels);
        let mut out_t = vec![0.0f64; u.channels];
        for b in 0..u.batch {
            let mut state = self.init_state();
            for t in 0..u.len {
                self.step_into(&disc, &mut state, u.frame(b, t), &mut out_t)?;
                y.frame_mut(b, t).copy_from_slice(&out_t);
            }
        }
        Ok(y)
    }

    /// Fresh zero state sized for this layer.
    pub fn init_state(&self) -> SsmState {
        SsmState::new(self.channels(), self.pairs())
    }

    /// Advance one frame: update the state in place, return the outputs.
    ///
    /// Per channel `h`: `x <- a_bar o x + b_bar * u_t[h]`, then
    /// `y_t[h] = re(2 * <c_h, x>) + d_h * u_t[h]`. Cost is
    /// `O(channels * pairs)` whatever the history length.
    pub fn step(
        &self,
        disc: &[Discretized],
        state: &mut SsmState,
        u_t: &[f64],
    ) -> Result<Vec<f64>> {
        let mut out = vec![0.0f64; self.channels()];
        self.step_into(disc, state, u_t, &mut out)?;
        Ok(out)
    }

    /// Allocation-free form of [`DssmLayer::step`].
    pub fn step_into(
        &self,
        disc: &[Discretized],
        state: &mut SsmState,
        u_t: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        let channels = self.channels();
        let pairs = self.pairs();
        if u_t.len() != channels || out.len() != channels || disc.len() != channels {
            return Err(Error::ShapeMismatch(format!(
                "step got {} inputs / {} outputs / {} discretizations for {} channels",
                u_t.len(),
                out.len(),
                disc.len(),
                channels
            )));
        }
        if state.channels != channels || state.pairs != pairs {
            return Err(Error::ShapeMismatch(format!(
                "state is {}x{}, layer is {}x{}",
                state.channels, state.pairs, channels, pairs
            )));
        }
        for h in 0..channels {
            let p = &self.params[h];
            let dh = &disc[h];
            let xs = &mut state.state[h * pairs..(h + 1) * pairs];
            let u = u_t[h];
            let mut acc = 0.0f64;
            for j in 0..pairs {
                let x = dh.a_bar[j] * xs[j] + dh.b_bar[j] * u;
                xs[j] = x;
                // Conjugate-pair doubling: the dropped half contributes the
                // complex conjugate, so the real output is 2 * re(c * x).
                acc += 2.0 * (p.c[j] * x).re;
            }
            out[h] = acc + p.d * u;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_input(rng: &mut ChaCha8Rng, b: usize, l: usize, h: usize) -> SeqTensor {
        let data = (0..b * l * h).map(|_| rng.gen_range(-1.0..1.0)).collect();
        SeqTensor::from_vec(data, b, l, h).unwrap()
    }

    #[test]
    fn flip_is_an_involution_and_reverses_indices() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_input(&mut rng, 2, 5, 3);
        let f = x.flip_time();
        assert_eq!(f.at(1, 0, 2), x.at(1, 4, 2));
        assert_eq!(f.flip_time(), x);
        // Length-1 sequences are fixed points.
        let one = random_input(&mut rng, 1, 1, 3);
        assert_eq!(one.flip_time(), one);
    }

    #[test]
    fn length_one_sequence_is_pure_feedthrough_plus_first_tap() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut layer = DssmLayer::init_linear(2, 4, &mut rng).unwrap();
        layer.params[0].d = 0.7;
        layer.params[1].d = -0.2;
        let u = random_input(&mut rng, 1, 1, 2);
        let kernels = layer.kernels(1).unwrap();
        let y = layer.forward_fft(&u).unwrap();
        for h in 0..2 {
            let want = (kernels[h].taps[0] + layer.params[h].d) * u.at(0, 0, h);
            assert!((y.at(0, 0, h) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_batch_is_valid_and_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let layer = DssmLayer::init_linear(3, 4, &mut rng).unwrap();
        let u = SeqTensor::zeros(0, 16, 3);
        let y = layer.forward_fft(&u).unwrap();
        assert_eq!(y.data.len(), 0);
        assert_eq!((y.batch, y.len, y.channels), (0, 16, 3));
    }

    #[test]
    fn state_reset_forgets_history() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let layer = DssmLayer::init_linear(2, 6, &mut rng).unwrap();
        let disc = layer.discretize();
        let mut state = layer.init_state();
        let first = layer.step(&disc, &mut state, &[0.3, -0.4]).unwrap();
        for _ in 0..10 {
            layer.step(&disc, &mut state, &[1.0, 1.0]).unwrap();
        }
        state.reset();
        let again = layer.step(&disc, &mut state, &[0.3, -0.4]).unwrap();
        assert_eq!(first, again, "reset state must reproduce the first step exactly");
    }

    #[test]
    fn step_validates_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let layer = DssmLayer::init_linear(2, 4, &mut rng).unwrap();
        let disc = layer.discretize();
        let mut state = layer.init_state();
        assert!(layer.step(&disc, &mut state, &[1.0]).is_err());
        let mut wrong = SsmState::new(3, 2);
        assert!(layer.step(&disc, &mut wrong, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn seq_tensor_shape_checked_on_construction() {
        assert!(SeqTensor::from_vec(vec![0.0; 5], 1, 2, 3).is_err());
        assert!(SeqTensor::from_vec(vec![0.0; 6], 1, 2, 3).is_ok());
    }

    #[test]
    fn interleaved_streams_match_isolated_runs_exactly() {
        // Two sequences stepped through separate states, interleaving the
        // calls, must behave as if each had the layer to itself.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let layer = DssmLayer::init_linear(2, 8, &mut rng).unwrap();
        let disc = layer.discretize();
        let ua: Vec<[f64; 2]> = (0..20).map(|_| [rng.gen(), rng.gen()]).collect();
        let ub: Vec<[f64; 2]> = (0..20).map(|_| [rng.gen(), rng.gen()]).collect();

        let mut sa = layer.init_state();
        let mut sb = layer.init_state();
        let mut inter_a = Vec::new();
        let mut inter_b = Vec::new();
        for t in 0..20 {
            inter_a.push(layer.step(&disc, &mut sa, &ua[t]).unwrap());
            inter_b.push(layer.step(&disc, &mut sb, &ub[t]).unwrap());
        }

        let mut solo = layer.init_state();
        for t in 0..20 {
            let y = layer.step(&disc, &mut solo, &ua[t]).unwrap();
            assert_eq!(y, inter_a[t]);
        }
        solo.reset();
        for t in 0..20 {
            let y = layer.step(&disc, &mut solo, &ub[t]).unwrap();
            assert_eq!(y, inter_b[t]);
        }
    }
}
