//! Full motion model: lift, stacked spatiotemporal layers, representation
//! head, and 3D pose readout.
//!
//! Each spatiotemporal layer runs two parallel streams over a `[batch,
//! frames, joints, d_model]` tensor: one applies a spatial block (over the
//! joint axis, per frame) then a temporal block (over the frame axis, per
//! joint), the other applies them in the opposite order. A learned per-token
//! softmax fuses the two stream outputs.
//!
//! In the causal configuration the temporal blocks are unidirectional, so the
//! whole model can be driven frame by frame: spatial blocks see only the
//! current frame's joints and carry no state, temporal blocks keep one
//! recurrent state per joint.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

// Float methods on f64 come from this trait under no_std; std builds shadow it.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::block::{
    bi_forward, bi_forward_with_factor, uni_forward_opts, uni_step_with, BlockKind, BlockWeights,
    CausalExec,
};
use crate::error::{Error, Result};
use crate::layer::{SeqTensor, SsmState};
use crate::linalg::Matrix;
use crate::ssm::Discretized;

/// Output coordinate width: x, y, z.
pub const POSE_DIM: usize = 3;

/// Hyperparameters of a [`HummussModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct HummussConfig {
    /// Number of stacked spatiotemporal layers.
    pub n_blocks: usize,
    /// Input feature width per joint (x, y, confidence = 3).
    pub d_in: usize,
    /// Residual stream width.
    pub d_model: usize,
    /// Representation width produced by the head.
    pub d_rep: usize,
    /// SSM state size per channel (even; pairs = state_dim / 2).
    pub state_dim: usize,
    /// DSSM width divisor for spatial blocks.
    pub k_spatial: usize,
    /// DSSM width divisor for temporal blocks.
    pub k_temporal: usize,
    /// Gate expansion ratio; `n_expand * d_model` must be an integer.
    pub n_expand: f64,
    /// Causal (streamable) temporal blocks if true, bidirectional if false.
    pub causal: bool,
    /// Frame rate the step size is trained against.
    pub nominal_fps: f64,
}

impl HummussConfig {
    /// Reference causal configuration: 5 layers, d_model 256, state 128,
    /// gate expansion 3, spatial k=1, temporal k=2, representation 512.
    pub fn default_causal() -> Self {
        HummussConfig {
            n_blocks: 5,
            d_in: 3,
            d_model: 256,
            d_rep: 512,
            state_dim: 128,
            k_spatial: 1,
            k_temporal: 2,
            n_expand: 3.0,
            causal: true,
            nominal_fps: 30.0,
        }
    }

    /// Reference bidirectional configuration; only the gate expansion (2.5)
    /// and temporal block kind differ from the causal preset.
    pub fn default_bidirectional() -> Self {
        HummussConfig {
            n_expand: 2.5,
            causal: false,
            ..Self::default_causal()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_blocks == 0 {
            return Err(Error::InvalidArgument("n_blocks must be >= 1".into()));
        }
        if self.d_in == 0 || self.d_model == 0 || self.d_rep == 0 {
            return Err(Error::InvalidArgument(
                "d_in, d_model, d_rep must be >= 1".into(),
            ));
        }
        if self.state_dim == 0 || self.state_dim % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "state_dim must be even and nonzero, got {}",
                self.state_dim
            )));
        }
        for (name, k) in [("k_spatial", self.k_spatial), ("k_temporal", self.k_temporal)] {
            if k == 0 || self.d_model % k != 0 {
                return Err(Error::InvalidArgument(format!(
                    "{name} = {k} must be a nonzero divisor of d_model {}",
                    self.d_model
                )));
            }
        }
        crate::block::gate_dim(self.d_model, self.n_expand)?;
        if !(self.nominal_fps > 0.0 && self.nominal_fps.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "nominal_fps must be positive and finite, got {}",
                self.nominal_fps
            )));
        }
        Ok(())
    }
}

/// Dense `[batch, frames, joints, dim]` tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionTensor {
    pub data: Vec<f64>,
    pub batch: usize,
    pub frames: usize,
    pub joints: usize,
    pub dim: usize,
}

impl MotionTensor {
    pub fn zeros(batch: usize, frames: usize, joints: usize, dim: usize) -> Self {
        MotionTensor {
            data: vec![0.0; batch * frames * joints * dim],
            batch,
            frames,
            joints,
            dim,
        }
    }

    pub fn from_vec(
        data: Vec<f64>,
        batch: usize,
        frames: usize,
        joints: usize,
        dim: usize,
    ) -> Result<Self> {
        if data.len() != batch * frames * joints * dim {
            return Err(Error::ShapeMismatch(format!(
                "data length {} != {batch}x{frames}x{joints}x{dim}",
                data.len()
            )));
        }
        Ok(MotionTensor {
            data,
            batch,
            frames,
            joints,
            dim,
        })
    }

    #[inline]
    pub fn idx(&self, b: usize, f: usize, j: usize, d: usize) -> usize {
        ((b * self.frames + f) * self.joints + j) * self.dim + d
    }

    #[inline]
    pub fn at(&self, b: usize, f: usize, j: usize, d: usize) -> f64 {
        self.data[self.idx(b, f, j, d)]
    }

    /// Swap the frame and joint axes: `[b, f, j, d] -> [b, j, f, d]`.
    pub fn transpose_fj(&self) -> MotionTensor {
        let mut out = MotionTensor::zeros(self.batch, self.joints, self.frames, self.dim);
        // `out.frames` is the joint count here; index arithmetic is spelled
        // out against `self` to keep the mapping readable.
        for b in 0..self.batch {
            for f in 0..self.frames {
                for j in 0..self.joints {
                    let src = self.idx(b, f, j, 0);
                    let dst = ((b * self.joints + j) * self.frames + f) * self.dim;
                    out.data[dst..dst + self.dim]
                        .copy_from_slice(&self.data[src..src + self.dim]);
                }
            }
        }
        out
    }

    /// View `[b, f, j, d]` as sequences over joints: batch `b*f`, length `j`.
    /// The memory layout already matches, so this is a reshape.
    fn into_joint_sequences(self) -> SeqTensor {
        SeqTensor {
            batch: self.batch * self.frames,
            len: self.joints,
            channels: self.dim,
            data: self.data,
        }
    }

    fn from_joint_sequences(seq: SeqTensor, batch: usize, frames: usize) -> MotionTensor {
        MotionTensor {
            batch,
            frames,
            joints: seq.len,
            dim: seq.channels,
            data: seq.data,
        }
    }
}

/// One two-stream spatiotemporal layer.
///
/// Stream 1 is spatial-then-temporal, stream 2 is temporal-then-spatial.
/// Spatial blocks are always bidirectional (a frame's joints are all
/// available at once); temporal blocks follow the configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatioTemporalLayer {
    pub spatial1: BlockWeights,
    pub temporal1: BlockWeights,
    pub temporal2: BlockWeights,
    pub spatial2: BlockWeights,
    /// Per-token fusion: `[2*d_model, 2]` producing softmax logits for the
    /// (temporal-then-spatial, spatial-then-temporal) pair.
    pub w_fuse: Matrix,
}

impl SpatioTemporalLayer {
    fn init<R: Rng + ?Sized>(cfg: &HummussConfig, rng: &mut R) -> Result<Self> {
        let temporal_kind = if cfg.causal {
            BlockKind::Unidirectional
        } else {
            BlockKind::Bidirectional
        };
        let spatial = |rng: &mut R| {
            BlockWeights::init(
                BlockKind::Bidirectional,
                cfg.d_model,
                cfg.k_spatial,
                cfg.n_expand,
                cfg.state_dim,
                rng,
            )
        };
        let temporal = |rng: &mut R| {
            BlockWeights::init(
                temporal_kind,
                cfg.d_model,
                cfg.k_temporal,
                cfg.n_expand,
                cfg.state_dim,
                rng,
            )
        };
        Ok(SpatioTemporalLayer {
            spatial1: spatial(rng)?,
            temporal1: temporal(rng)?,
            temporal2: temporal(rng)?,
            spatial2: spatial(rng)?,
            w_fuse: Matrix::init_fan_in(2 * cfg.d_model, 2, rng),
        })
    }

    pub fn param_count(&self) -> usize {
        self.spatial1.param_count()
            + self.temporal1.param_count()
            + self.temporal2.param_count()
            + self.spatial2.param_count()
            + self.w_fuse.len()
    }
}

/// Temporal execution options for an offline pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardOpts {
    /// Executor for unidirectional temporal blocks.
    pub temporal_exec: CausalExec,
    /// Step-size scale applied to temporal blocks (frame-rate adaptation).
    pub delta_factor: f64,
}

impl Default for ForwardOpts {
    fn default() -> Self {
        ForwardOpts {
            temporal_exec: CausalExec::Scan,
            delta_factor: 1.0,
        }
    }
}

/// The assembled model.
#[derive(Debug, Clone, PartialEq)]
pub struct HummussModel {
    pub config: HummussConfig,
    /// Input lift, `d_in x d_model` plus bias.
    pub lift_w: Matrix,
    pub lift_b: Vec<f64>,
    pub layers: Vec<SpatioTemporalLayer>,
    /// Representation head, `d_model x d_rep` plus bias.
    pub head_w: Matrix,
    pub head_b: Vec<f64>,
    /// Pose readout, `d_rep x 3` plus bias.
    pub readout_w: Matrix,
    pub readout_b: Vec<f64>,
}

impl HummussModel {
    pub fn init<R: Rng + ?Sized>(config: HummussConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let layers = (0..config.n_blocks)
            .map(|_| SpatioTemporalLayer::init(&config, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(HummussModel {
            lift_w: Matrix::init_fan_in(config.d_in, config.d_model, rng),
            lift_b: vec![0.0; config.d_model],
            head_w: Matrix::init_fan_in(config.d_model, config.d_rep, rng),
            head_b: vec![0.0; config.d_rep],
            readout_w: Matrix::init_fan_in(config.d_rep, POSE_DIM, rng),
            readout_b: vec![0.0; POSE_DIM],
            layers,
            config,
        })
    }

    /// Total learnable scalar count (complex entries count as two).
    pub fn param_count(&self) -> usize {
        let affine = self.lift_w.len()
            + self.lift_b.len()
            + self.head_w.len()
            + self.head_b.len()
            + self.readout_w.len()
            + self.readout_b.len();
        affine + self.layers.iter().map(|l| l.param_count()).sum::<usize>()
    }

    /// Offline pass over whole sequences.
    ///
    /// Returns the representation `[b, f, j, d_rep]` and the 3D pose
    /// `[b, f, j, 3]`. In the causal configuration the temporal blocks run by
    /// recursion scan, so outputs are exactly prefix-stable; see
    /// [`HummussModel::forward_conv`] for the sequence-parallel form.
    pub fn forward(&self, x: &MotionTensor) -> Result<(MotionTensor, MotionTensor)> {
        self.forward_opts(x, ForwardOpts::default())
    }

    /// Offline pass running causal temporal blocks by FFT convolution, the
    /// execution used when the whole sequence is available and throughput
    /// matters more than bit-stable prefixes.
    pub fn forward_conv(&self, x: &MotionTensor) -> Result<(MotionTensor, MotionTensor)> {
        self.forward_opts(
            x,
            ForwardOpts {
                temporal_exec: CausalExec::Conv,
                ..ForwardOpts::default()
            },
        )
    }

    /// Offline pass with explicit execution options.
    pub fn forward_opts(
        &self,
        x: &MotionTensor,
        opts: ForwardOpts,
    ) -> Result<(MotionTensor, MotionTensor)> {
        if x.dim != self.config.d_in {
            return Err(Error::ShapeMismatch(format!(
                "input feature width {} != configured d_in {}",
                x.dim, self.config.d_in
            )));
        }
        let tokens = x.batch * x.frames * x.joints;
        let mut h = self.lift_w.tokens_mul(&x.data, tokens);
        add_bias(&mut h, &self.lift_b);
        let mut m = MotionTensor::from_vec(h, x.batch, x.frames, x.joints, self.config.d_model)?;

        for layer in &self.layers {
            m = self.spatiotemporal_forward(layer, &m, opts)?;
        }

        let mut rep = self.head_w.tokens_mul(&m.data, tokens);
        add_bias(&mut rep, &self.head_b);
        let mut pose = self.readout_w.tokens_mul(&rep, tokens);
        add_bias(&mut pose, &self.readout_b);

        Ok((
            MotionTensor::from_vec(rep, x.batch, x.frames, x.joints, self.config.d_rep)?,
            MotionTensor::from_vec(pose, x.batch, x.frames, x.joints, POSE_DIM)?,
        ))
    }

    fn temporal_forward(
        &self,
        w: &BlockWeights,
        x: &SeqTensor,
        opts: ForwardOpts,
    ) -> Result<SeqTensor> {
        match w.kind {
            BlockKind::Unidirectional => {
                uni_forward_opts(x, w, opts.temporal_exec, opts.delta_factor)
            }
            BlockKind::Bidirectional => bi_forward_with_factor(x, w, opts.delta_factor),
        }
    }

    fn spatiotemporal_forward(
        &self,
        layer: &SpatioTemporalLayer,
        m: &MotionTensor,
        opts: ForwardOpts,
    ) -> Result<MotionTensor> {
        let (batch, frames) = (m.batch, m.frames);

        // Stream 1: spatial over each frame's joints, then temporal per joint.
        let s1 = bi_forward(&m.clone().into_joint_sequences(), &layer.spatial1)?;
        let s1_m = MotionTensor::from_joint_sequences(s1, batch, frames);
        let t1_in = s1_m.transpose_fj().into_joint_sequences();
        let t1 = self.temporal_forward(&layer.temporal1, &t1_in, opts)?;
        let x_ts = MotionTensor::from_joint_sequences(t1, batch, m.joints).transpose_fj();

        // Stream 2: temporal per joint first, then spatial per frame.
        let t2_in = m.transpose_fj().into_joint_sequences();
        let t2 = self.temporal_forward(&layer.temporal2, &t2_in, opts)?;
        let t2_m = MotionTensor::from_joint_sequences(t2, batch, m.joints).transpose_fj();
        let s2 = bi_forward(&t2_m.into_joint_sequences(), &layer.spatial2)?;
        let x_st = MotionTensor::from_joint_sequences(s2, batch, frames);

        // Per-token softmax fusion of the two streams.
        let d = m.dim;
        let mut out = MotionTensor::zeros(batch, frames, m.joints, d);
        let tokens = batch * frames * m.joints;
        for i in 0..tokens {
            let st = &x_st.data[i * d..(i + 1) * d];
            let ts = &x_ts.data[i * d..(i + 1) * d];
            let (a_st, a_ts) = fuse_weights(st, ts, &layer.w_fuse);
            let o = &mut out.data[i * d..(i + 1) * d];
            for c in 0..d {
                o[c] = a_st * st[c] + a_ts * ts[c];
            }
        }
        Ok(out)
    }

    /// Fresh streaming state for sequences of `joints` joints per frame.
    pub fn init_state(&self, joints: usize) -> Result<ModelState> {
        if !self.config.causal {
            return Err(Error::InvalidMode(
                "bidirectional temporal blocks cannot stream; use forward()".into(),
            ));
        }
        if joints == 0 {
            return Err(Error::InvalidArgument("joints must be >= 1".into()));
        }
        let mk = |w: &BlockWeights| TemporalState {
            states: (0..joints).map(|_| w.fwd.init_state()).collect(),
            disc: w.fwd.discretize(),
            factor: 1.0,
        };
        Ok(ModelState {
            stream1: self.layers.iter().map(|l| mk(&l.temporal1)).collect(),
            stream2: self.layers.iter().map(|l| mk(&l.temporal2)).collect(),
            joints,
            last_timestamp: None,
            frames_seen: 0,
        })
    }

    /// Consume one frame (`joints * d_in` features) and emit that frame's
    /// representation (`joints * d_rep`) and pose (`joints * 3`).
    ///
    /// With `timestamp_ms` provided, the temporal step size is scaled by the
    /// gap to the previous frame times the nominal rate, so irregular or
    /// re-rated streams are consumed without retraining. Timestamps must be
    /// strictly increasing. Without timestamps every step uses the trained
    /// step size.
    pub fn stream_step(
        &self,
        frame: &[f64],
        timestamp_ms: Option<f64>,
        state: &mut ModelState,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        if !self.config.causal {
            return Err(Error::InvalidMode(
                "bidirectional temporal blocks cannot stream; use forward()".into(),
            ));
        }
        let joints = state.joints;
        if frame.len() != joints * self.config.d_in {
            return Err(Error::ShapeMismatch(format!(
                "frame has {} features, state expects {} joints x {} = {}",
                frame.len(),
                joints,
                self.config.d_in,
                joints * self.config.d_in
            )));
        }

        let factor = match (timestamp_ms, state.last_timestamp) {
            (Some(ts), Some(last)) => {
                if !(ts > last) {
                    return Err(Error::InvalidArgument(format!(
                        "timestamps must be strictly increasing, got {ts} after {last}"
                    )));
                }
                (ts - last) / 1000.0 * self.config.nominal_fps
            }
            // First timed frame, or untimed stream: trained step size.
            _ => 1.0,
        };
        if let Some(ts) = timestamp_ms {
            state.last_timestamp = Some(ts);
        }

        // Lift.
        let d = self.config.d_model;
        let mut x = vec![0.0; joints * d];
        for j in 0..joints {
            self.lift_w.vec_mul_into(
                &frame[j * self.config.d_in..(j + 1) * self.config.d_in],
                &mut x[j * d..(j + 1) * d],
            );
            for (v, b) in x[j * d..(j + 1) * d].iter_mut().zip(self.lift_b.iter()) {
                *v += b;
            }
        }

        for (i, layer) in self.layers.iter().enumerate() {
            // Stream 1: spatial on this frame, then one temporal step per joint.
            let s1_in = SeqTensor::from_vec(x.clone(), 1, joints, d)?;
            let s1 = bi_forward(&s1_in, &layer.spatial1)?;
            let ts1 = &mut state.stream1[i];
            ts1.set_factor(&layer.temporal1, factor)?;
            let mut x_ts = vec![0.0; joints * d];
            for j in 0..joints {
                let y = uni_step_with(
                    s1.frame(0, j),
                    &layer.temporal1,
                    &ts1.disc,
                    &mut ts1.states[j],
                )?;
                x_ts[j * d..(j + 1) * d].copy_from_slice(&y);
            }

            // Stream 2: one temporal step per joint, then spatial on the result.
            let ts2 = &mut state.stream2[i];
            ts2.set_factor(&layer.temporal2, factor)?;
            let mut t2 = vec![0.0; joints * d];
            for j in 0..joints {
                let y = uni_step_with(
                    &x[j * d..(j + 1) * d],
                    &layer.temporal2,
                    &ts2.disc,
                    &mut ts2.states[j],
                )?;
                t2[j * d..(j + 1) * d].copy_from_slice(&y);
            }
            let s2 = bi_forward(&SeqTensor::from_vec(t2, 1, joints, d)?, &layer.spatial2)?;

            // Fuse per joint.
            for j in 0..joints {
                let st = s2.frame(0, j);
                let ts = &x_ts[j * d..(j + 1) * d];
                let (a_st, a_ts) = fuse_weights(st, ts, &layer.w_fuse);
                for c in 0..d {
                    x[j * d + c] = a_st * st[c] + a_ts * ts[c];
                }
            }
        }

        // Head and readout.
        let mut rep = vec![0.0; joints * self.config.d_rep];
        let mut pose = vec![0.0; joints * POSE_DIM];
        for j in 0..joints {
            let r = &mut rep[j * self.config.d_rep..(j + 1) * self.config.d_rep];
            self.head_w.vec_mul_into(&x[j * d..(j + 1) * d], r);
            for (v, b) in r.iter_mut().zip(self.head_b.iter()) {
                *v += b;
            }
            let p = &mut pose[j * POSE_DIM..(j + 1) * POSE_DIM];
            self.readout_w.vec_mul_into(r, p);
            for (v, b) in p.iter_mut().zip(self.readout_b.iter()) {
                *v += b;
            }
        }

        state.frames_seen += 1;
        Ok((rep, pose))
    }

    /// Visit every learnable scalar in a fixed order (complex values visit
    /// real then imaginary part). The order matches [`flatten_params`].
    pub fn for_each_param_mut<F: FnMut(&mut f64)>(&mut self, mut f: F) {
        visit_matrix(&mut self.lift_w, &mut f);
        visit_slice(&mut self.lift_b, &mut f);
        for layer in &mut self.layers {
            visit_block(&mut layer.spatial1, &mut f);
            visit_block(&mut layer.temporal1, &mut f);
            visit_block(&mut layer.temporal2, &mut f);
            visit_block(&mut layer.spatial2, &mut f);
            visit_matrix(&mut layer.w_fuse, &mut f);
        }
        visit_matrix(&mut self.head_w, &mut f);
        visit_slice(&mut self.head_b, &mut f);
        visit_matrix(&mut self.readout_w, &mut f);
        visit_slice(&mut self.readout_b, &mut f);
    }

    /// All learnable scalars as one flat vector.
    pub fn flatten_params(&mut self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.for_each_param_mut(|v| out.push(*v));
        out
    }

    /// Overwrite every learnable scalar from a flat vector.
    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} parameters",
                flat.len(),
                self.param_count()
            )));
        }
        let mut it = flat.iter();
        self.for_each_param_mut(|v| *v = *it.next().expect("length checked"));
        Ok(())
    }
}

fn add_bias(tokens: &mut [f64], bias: &[f64]) {
    for row in tokens.chunks_exact_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias.iter()) {
            *v += b;
        }
    }
}

/// Softmax fusion coefficients for one token: logits are
/// `[x_st || x_ts] * w_fuse`, returned as `(a_st, a_ts)`, each in (0, 1),
/// summing to 1.
pub fn fuse_weights(st: &[f64], ts: &[f64], w_fuse: &Matrix) -> (f64, f64) {
    let d = st.len();
    let mut l0 = 0.0;
    let mut l1 = 0.0;
    for c in 0..d {
        l0 += st[c] * w_fuse.at(c, 0);
        l1 += st[c] * w_fuse.at(c, 1);
    }
    for c in 0..d {
        l0 += ts[c] * w_fuse.at(d + c, 0);
        l1 += ts[c] * w_fuse.at(d + c, 1);
    }
    let m = l0.max(l1);
    let e0 = (l0 - m).exp();
    let e1 = (l1 - m).exp();
    let z = e0 + e1;
    (e0 / z, e1 / z)
}

/// Recurrent state of one temporal block across all joints, sharing one
/// discretization (all joints advance with the same step size).
#[derive(Debug, Clone)]
pub struct TemporalState {
    /// One SSM state per joint.
    pub states: Vec<SsmState>,
    pub disc: Vec<Discretized>,
    factor: f64,
}

impl TemporalState {
    fn set_factor(&mut self, w: &BlockWeights, factor: f64) -> Result<()> {
        if factor == self.factor {
            return Ok(());
        }
        self.disc = w.fwd.discretize_with_factor(factor)?;
        self.factor = factor;
        Ok(())
    }

    fn accounted_bytes(&self) -> usize {
        self.states.iter().map(|s| s.accounted_bytes()).sum()
    }

    fn reset(&mut self, w: &BlockWeights) {
        for s in &mut self.states {
            s.reset();
        }
        if self.factor != 1.0 {
            self.disc = w.fwd.discretize();
            self.factor = 1.0;
        }
    }
}

/// Streaming state of the whole model: per layer and stream, one
/// [`TemporalState`]; spatial blocks are stateless.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub stream1: Vec<TemporalState>,
    pub stream2: Vec<TemporalState>,
    joints: usize,
    pub last_timestamp: Option<f64>,
    pub frames_seen: u64,
}

impl ModelState {
    pub fn joints(&self) -> usize {
        self.joints
    }

    /// Bytes of recurrent state proper (the complex SSM entries). Constant in
    /// the number of frames processed.
    pub fn accounted_bytes(&self) -> usize {
        self.stream1
            .iter()
            .chain(self.stream2.iter())
            .map(|t| t.accounted_bytes())
            .sum()
    }

    /// Zero all SSM state and forget stream time, keeping the shape.
    pub fn reset(&mut self, model: &HummussModel) {
        for (t, l) in self.stream1.iter_mut().zip(model.layers.iter()) {
            t.reset(&l.temporal1);
        }
        for (t, l) in self.stream2.iter_mut().zip(model.layers.iter()) {
            t.reset(&l.temporal2);
        }
        self.last_timestamp = None;
        self.frames_seen = 0;
    }
}

fn visit_matrix<F: FnMut(&mut f64)>(m: &mut Matrix, f: &mut F) {
    for v in m.data.iter_mut() {
        f(v);
    }
}

fn visit_slice<F: FnMut(&mut f64)>(s: &mut [f64], f: &mut F) {
    for v in s.iter_mut() {
        f(v);
    }
}

fn visit_block<F: FnMut(&mut f64)>(w: &mut BlockWeights, f: &mut F) {
    visit_slice(&mut w.gamma, f);
    visit_slice(&mut w.beta, f);
    visit_matrix(&mut w.w_id, f);
    visit_matrix(&mut w.w_f1, f);
    visit_matrix(&mut w.w_f2, f);
    if let Some(m) = w.w_b1.as_mut() {
        visit_matrix(m, f);
    }
    if let Some(m) = w.w_b2.as_mut() {
        visit_matrix(m, f);
    }
    if let Some(m) = w.w_cb.as_mut() {
        visit_matrix(m, f);
    }
    visit_matrix(&mut w.w_out, f);
    visit_dssm(&mut w.fwd, f);
    if let Some(l) = w.bwd.as_mut() {
        visit_dssm(l, f);
    }
}

fn visit_dssm<F: FnMut(&mut f64)>(layer: &mut crate::layer::DssmLayer, f: &mut F) {
    for p in layer.params.iter_mut() {
        visit_slice(&mut p.lambda_re, f);
        visit_slice(&mut p.lambda_im, f);
        for c in p.c.iter_mut() {
            f(&mut c.re);
            f(&mut c.im);
        }
        f(&mut p.delta_log);
        f(&mut p.d);
    }
}
