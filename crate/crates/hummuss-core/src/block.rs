//! Gated diagonal-SSM mixing blocks.
//!
//! Two flavors share one weight layout:
//!
//! * bidirectional: two DSSM banks, one over the sequence as given and one
//!   over its reversal, recombined multiplicatively and gated;
//! * unidirectional: the forward bank only, so the block is causal and can be
//!   stepped one frame at a time against persistent state.
//!
//! Channel counts follow the reference layout: the DSSM banks run at
//! `d_model / k` channels and the gate runs at `n * d_model` with rational
//! `n`, which must land on an integer width.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

// Float methods on f64 come from this trait under no_std; std builds shadow it.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::layer::{DssmLayer, SeqTensor, SsmState};
use crate::linalg::Matrix;
use crate::ssm::Discretized;

/// Layer-norm variance floor.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Exact-erf GELU, `0.5 * x * (1 + erf(x / sqrt(2)))`.
#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * core::f64::consts::FRAC_1_SQRT_2))
}

fn gelu_slice(xs: &mut [f64]) {
    for x in xs.iter_mut() {
        *x = gelu(*x);
    }
}

/// Layer norm of one token over its channel axis, with affine scale/shift.
pub fn layer_norm_token(x: &[f64], gamma: &[f64], beta: &[f64], out: &mut [f64]) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    for i in 0..x.len() {
        out[i] = (x[i] - mean) * inv * gamma[i] + beta[i];
    }
}

/// Time reversal of a sequence tensor.
pub fn flip(x: &SeqTensor) -> SeqTensor {
    x.flip_time()
}

/// Which halves of the block exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Bidirectional,
    Unidirectional,
}

/// Gate width `n * d_model`, validated to be a positive integer.
pub fn gate_dim(d_model: usize, n_expand: f64) -> Result<usize> {
    let exact = n_expand * d_model as f64;
    let rounded = libm::round(exact);
    if !(exact.is_finite() && (exact - rounded).abs() < 1e-9 && rounded >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "gate expansion {n_expand} x d_model {d_model} = {exact} is not a positive integer"
        )));
    }
    Ok(rounded as usize)
}

/// Weights of one gated block. No projection carries a bias; the only shifts
/// are the layer-norm affine terms.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    pub kind: BlockKind,
    pub d_model: usize,
    /// DSSM channel count, `d_model / k`.
    pub d_inner: usize,
    /// Gate width, `n * d_model`.
    pub d_gate: usize,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    /// `d_model x d_gate`, identity-gate branch.
    pub w_id: Matrix,
    /// `d_model x d_inner`, into the forward DSSM.
    pub w_f1: Matrix,
    /// Out of the forward DSSM: `d_inner x d_model` (bi) or `d_inner x d_gate` (uni).
    pub w_f2: Matrix,
    /// `d_model x d_inner`, into the backward DSSM (bi only).
    pub w_b1: Option<Matrix>,
    /// `d_inner x d_model`, out of the backward DSSM (bi only).
    pub w_b2: Option<Matrix>,
    /// `d_model x d_gate`, combining the two directions (bi only).
    pub w_cb: Option<Matrix>,
    /// `d_gate x d_model`, back to the residual stream.
    pub w_out: Matrix,
    pub fwd: DssmLayer,
    pub bwd: Option<DssmLayer>,
}

impl BlockWeights {
    /// Random block. `k` divides the DSSM width out of `d_model`; `n_expand`
    /// scales the gate width and must produce an integer.
    pub fn init<R: Rng + ?Sized>(
        kind: BlockKind,
        d_model: usize,
        k: usize,
        n_expand: f64,
        state_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if d_model == 0 || k == 0 || d_model % k != 0 {
            return Err(Error::InvalidArgument(format!(
                "d_model {d_model} must be a positive multiple of k {k}"
            )));
        }
        let d_inner = d_model / k;
        let d_gate = gate_dim(d_model, n_expand)?;
        let bi = kind == BlockKind::Bidirectional;
        let f2_cols = if bi { d_model } else { d_gate };
        Ok(BlockWeights {
            kind,
            d_model,
            d_inner,
            d_gate,
            gamma: vec![1.0; d_model],
            beta: vec![0.0; d_model],
            w_id: Matrix::init_fan_in(d_model, d_gate, rng),
            w_f1: Matrix::init_fan_in(d_model, d_inner, rng),
            w_f2: Matrix::init_fan_in(d_inner, f2_cols, rng),
            w_b1: bi.then(|| Matrix::init_fan_in(d_model, d_inner, rng)),
            w_b2: bi.then(|| Matrix::init_fan_in(d_inner, d_model, rng)),
            w_cb: bi.then(|| Matrix::init_fan_in(d_model, d_gate, rng)),
            w_out: Matrix::init_fan_in(d_gate, d_model, rng),
            fwd: DssmLayer::init_linear(d_inner, state_dim, rng)?,
            bwd: if bi {
                Some(DssmLayer::init_linear(d_inner, state_dim, rng)?)
            } else {
                None
            },
        })
    }

    pub fn param_count(&self) -> usize {
        let mats = [
            Some(&self.w_id),
            Some(&self.w_f1),
            Some(&self.w_f2),
            self.w_b1.as_ref(),
            self.w_b2.as_ref(),
            self.w_cb.as_ref(),
            Some(&self.w_out),
        ];
        let dense: usize = mats.iter().flatten().map(|m| m.len()).sum();
        let ssm = self.fwd.param_count() + self.bwd.as_ref().map_or(0, |l| l.param_count());
        dense + ssm + self.gamma.len() + self.beta.len()
    }

    fn check_input(&self, x: &SeqTensor) -> Result<()> {
        if x.channels != self.d_model {
            return Err(Error::ShapeMismatch(format!(
                "block expects {} channels, input has {}",
                self.d_model, x.channels
            )));
        }
        Ok(())
    }

    /// Layer norm applied to every token, returned as a flat token-major buffer.
    fn normed_tokens(&self, x: &SeqTensor) -> Vec<f64> {
        let tokens = x.batch * x.len;
        let d = self.d_model;
        let mut out = vec![0.0; tokens * d];
        for i in 0..tokens {
            layer_norm_token(
                &x.data[i * d..(i + 1) * d],
                &self.gamma,
                &self.beta,
                &mut out[i * d..(i + 1) * d],
            );
        }
        out
    }
}

/// How the unidirectional DSSM bank traverses the sequence in a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CausalExec {
    /// Recursion scanned over time. Prefix outputs are bit-stable under
    /// suffix edits, which is what offline/streaming comparisons and the
    /// causality guarantee are stated against.
    Scan,
    /// Materialized kernel, FFT convolution; the sequence-parallel form.
    /// Same math, but the transform mixes rounding across all positions.
    Conv,
}

/// Full bidirectional block: `x + (gelu((x_f o x_b) w_cb) o gelu(x_n w_id)) w_out`.
pub fn bi_forward(x: &SeqTensor, w: &BlockWeights) -> Result<SeqTensor> {
    bi_forward_with_factor(x, w, 1.0)
}

/// [`bi_forward`] with the DSSM step size scaled by `factor` (used when a
/// bidirectional block runs over a resampled time axis).
pub fn bi_forward_with_factor(x: &SeqTensor, w: &BlockWeights, factor: f64) -> Result<SeqTensor> {
    if w.kind != BlockKind::Bidirectional {
        return Err(Error::InvalidMode(
            "bi_forward called on a unidirectional block".into(),
        ));
    }
    w.check_input(x)?;
    let (bwd, w_b1, w_b2, w_cb) = (
        w.bwd.as_ref().expect("bidirectional block has bwd bank"),
        w.w_b1.as_ref().expect("bidirectional block has w_b1"),
        w.w_b2.as_ref().expect("bidirectional block has w_b2"),
        w.w_cb.as_ref().expect("bidirectional block has w_cb"),
    );
    let tokens = x.batch * x.len;
    let x_n = w.normed_tokens(x);

    let mut x_id = w.w_id.tokens_mul(&x_n, tokens);
    gelu_slice(&mut x_id);

    // Forward direction: project in, run the DSSM bank, project out.
    let mut v_f = w.w_f1.tokens_mul(&x_n, tokens);
    gelu_slice(&mut v_f);
    let s_f = w
        .fwd
        .forward_fft_with_factor(&SeqTensor::from_vec(v_f, x.batch, x.len, w.d_inner)?, factor)?;
    let x_f = w.w_f2.tokens_mul(&s_f.data, tokens);

    // Backward direction: same pipeline on the reversed sequence, then
    // reverse the result back into input order.
    let x_n_rev = SeqTensor::from_vec(x_n, x.batch, x.len, w.d_model)?.flip_time();
    let mut v_b = w_b1.tokens_mul(&x_n_rev.data, tokens);
    gelu_slice(&mut v_b);
    let s_b = bwd
        .forward_fft_with_factor(&SeqTensor::from_vec(v_b, x.batch, x.len, w.d_inner)?, factor)?;
    let x_b_rev = w_b2.tokens_mul(&s_b.data, tokens);
    let x_b = SeqTensor::from_vec(x_b_rev, x.batch, x.len, w.d_model)?.flip_time();

    let mut mixed: Vec<f64> = x_f
        .iter()
        .zip(x_b.data.iter())
        .map(|(f, b)| f * b)
        .collect();
    let mut x_cb = w_cb.tokens_mul(&mixed, tokens);
    gelu_slice(&mut x_cb);
    mixed.clear();

    let gated: Vec<f64> = x_cb
        .iter()
        .zip(x_id.iter())
        .map(|(c, i)| c * i)
        .collect();
    let update = w.w_out.tokens_mul(&gated, tokens);

    let mut out = x.clone();
    for (o, u) in out.data.iter_mut().zip(update.iter()) {
        *o += u;
    }
    Ok(out)
}

/// Causal block over a whole sequence: `x + (x_f o gelu(x_n w_id)) w_out`.
pub fn uni_forward(x: &SeqTensor, w: &BlockWeights) -> Result<SeqTensor> {
    uni_forward_opts(x, w, CausalExec::Scan, 1.0)
}

/// [`uni_forward`] with an explicit executor for the DSSM bank.
pub fn uni_forward_exec(x: &SeqTensor, w: &BlockWeights, exec: CausalExec) -> Result<SeqTensor> {
    uni_forward_opts(x, w, exec, 1.0)
}

/// [`uni_forward`] with an explicit executor and step-size scale.
pub fn uni_forward_opts(
    x: &SeqTensor,
    w: &BlockWeights,
    exec: CausalExec,
    factor: f64,
) -> Result<SeqTensor> {
    if w.kind != BlockKind::Unidirectional {
        return Err(Error::InvalidMode(
            "uni_forward called on a bidirectional block".into(),
        ));
    }
    w.check_input(x)?;
    let tokens = x.batch * x.len;
    let x_n = w.normed_tokens(x);

    let mut x_id = w.w_id.tokens_mul(&x_n, tokens);
    gelu_slice(&mut x_id);

    let mut v = w.w_f1.tokens_mul(&x_n, tokens);
    gelu_slice(&mut v);
    let v = SeqTensor::from_vec(v, x.batch, x.len, w.d_inner)?;
    let s = match exec {
        CausalExec::Scan => w.fwd.scan_with_factor(&v, factor)?,
        CausalExec::Conv => w.fwd.forward_fft_with_factor(&v, factor)?,
    };
    let x_f = w.w_f2.tokens_mul(&s.data, tokens);

    let gated: Vec<f64> = x_f.iter().zip(x_id.iter()).map(|(f, i)| f * i).collect();
    let update = w.w_out.tokens_mul(&gated, tokens);

    let mut out = x.clone();
    for (o, u) in out.data.iter_mut().zip(update.iter()) {
        *o += u;
    }
    Ok(out)
}

/// Streaming state of one unidirectional block: the DSSM state plus the
/// discretization in force (cached so uniform-rate streams discretize once).
#[derive(Debug, Clone)]
pub struct BlockState {
    pub ssm: SsmState,
    pub disc: Vec<Discretized>,
    factor: f64,
}

impl BlockState {
    pub fn new(w: &BlockWeights) -> Result<Self> {
        if w.kind != BlockKind::Unidirectional {
            return Err(Error::InvalidMode(
                "only unidirectional blocks carry streaming state".into(),
            ));
        }
        Ok(BlockState {
            ssm: w.fwd.init_state(),
            disc: w.fwd.discretize(),
            factor: 1.0,
        })
    }

    /// Set the step-size scale for subsequent steps, rediscretizing only when
    /// the factor actually changes.
    pub fn set_factor(&mut self, w: &BlockWeights, factor: f64) -> Result<()> {
        if factor == self.factor {
            return Ok(());
        }
        self.disc = w.fwd.discretize_with_factor(factor)?;
        self.factor = factor;
        Ok(())
    }

    pub fn reset(&mut self, w: &BlockWeights) {
        self.ssm.reset();
        if self.factor != 1.0 {
            self.disc = w.fwd.discretize();
            self.factor = 1.0;
        }
    }

    /// Bytes of recurrent state proper.
    pub fn accounted_bytes(&self) -> usize {
        self.ssm.accounted_bytes()
    }
}

/// One frame through a unidirectional block, advancing `state` in place.
///
/// Arithmetic is identical to what [`uni_forward`] performs at one time step,
/// so frame-by-frame streaming reproduces the offline pass.
pub fn uni_step(u_t: &[f64], w: &BlockWeights, state: &mut BlockState) -> Result<Vec<f64>> {
    // Split borrow: the discretization is read-only while the SSM state mutates.
    let BlockState { ssm, disc, .. } = state;
    uni_step_with(u_t, w, disc, ssm)
}

/// [`uni_step`] against caller-managed discretization and SSM state.
///
/// This is the primitive the model's streaming path uses: many parallel
/// streams (one per joint) share one discretization while each advances its
/// own state.
pub fn uni_step_with(
    u_t: &[f64],
    w: &BlockWeights,
    disc: &[Discretized],
    ssm: &mut SsmState,
) -> Result<Vec<f64>> {
    if w.kind != BlockKind::Unidirectional {
        return Err(Error::InvalidMode(
            "uni_step called on a bidirectional block".into(),
        ));
    }
    if u_t.len() != w.d_model {
        return Err(Error::ShapeMismatch(format!(
            "step expects {} channels, frame has {}",
            w.d_model,
            u_t.len()
        )));
    }
    let mut x_n = vec![0.0; w.d_model];
    layer_norm_token(u_t, &w.gamma, &w.beta, &mut x_n);

    let mut x_id = vec![0.0; w.d_gate];
    w.w_id.vec_mul_into(&x_n, &mut x_id);
    gelu_slice(&mut x_id);

    let mut v = vec![0.0; w.d_inner];
    w.w_f1.vec_mul_into(&x_n, &mut v);
    gelu_slice(&mut v);

    let mut s = vec![0.0; w.d_inner];
    w.fwd.step_into(disc, ssm, &v, &mut s)?;

    let mut x_f = vec![0.0; w.d_gate];
    w.w_f2.vec_mul_into(&s, &mut x_f);

    for (f, i) in x_f.iter_mut().zip(x_id.iter()) {
        *f *= i;
    }
    let mut update = vec![0.0; w.d_model];
    w.w_out.vec_mul_into(&x_f, &mut update);

    Ok(u_t.iter().zip(update.iter()).map(|(x, u)| x + u).collect())
}
