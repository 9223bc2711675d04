//! Pretraining-task machinery at toy scale: losses, keypoint corruption,
//! synthetic motion, and a finite-difference trainer used to demonstrate that
//! the assembled model is trainable end to end.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

// Float methods on f64 come from this trait under no_std; std builds shadow it.
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{HummussModel, MotionTensor, POSE_DIM};

/// A 2D keypoint sequence with per-joint confidence, `[frames, joints]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton2DSeq {
    /// `[frames, joints, 2]` pixel-normalized coordinates.
    pub xy: Vec<f64>,
    /// `[frames, joints]` confidences in `[0, 1]`; 0 marks a missing joint.
    pub conf: Vec<f64>,
    pub frames: usize,
    pub joints: usize,
}

impl Skeleton2DSeq {
    pub fn zeros(frames: usize, joints: usize) -> Self {
        Skeleton2DSeq {
            xy: vec![0.0; frames * joints * 2],
            conf: vec![0.0; frames * joints],
            frames,
            joints,
        }
    }

    #[inline]
    pub fn xy_at(&self, f: usize, j: usize) -> (f64, f64) {
        let i = (f * self.joints + j) * 2;
        (self.xy[i], self.xy[i + 1])
    }

    #[inline]
    pub fn conf_at(&self, f: usize, j: usize) -> f64 {
        self.conf[f * self.joints + j]
    }

    /// Pack into model input features `[1, frames, joints, 3]` as (x, y, conf).
    pub fn to_motion(&self) -> MotionTensor {
        let mut m = MotionTensor::zeros(1, self.frames, self.joints, 3);
        for f in 0..self.frames {
            for j in 0..self.joints {
                let (x, y) = self.xy_at(f, j);
                let base = m.idx(0, f, j, 0);
                m.data[base] = x;
                m.data[base + 1] = y;
                m.data[base + 2] = self.conf_at(f, j);
            }
        }
        m
    }
}

/// A 3D joint-position sequence, coordinates in meters centered near the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton3DSeq {
    /// `[frames, joints, 3]`.
    pub xyz: Vec<f64>,
    pub frames: usize,
    pub joints: usize,
}

impl Skeleton3DSeq {
    pub fn zeros(frames: usize, joints: usize) -> Self {
        Skeleton3DSeq {
            xyz: vec![0.0; frames * joints * 3],
            frames,
            joints,
        }
    }

    #[inline]
    pub fn at(&self, f: usize, j: usize) -> (f64, f64, f64) {
        let i = (f * self.joints + j) * 3;
        (self.xyz[i], self.xyz[i + 1], self.xyz[i + 2])
    }

    /// Orthographic projection: drop depth, confidence 1 everywhere.
    pub fn project(&self) -> Skeleton2DSeq {
        let mut out = Skeleton2DSeq::zeros(self.frames, self.joints);
        for f in 0..self.frames {
            for j in 0..self.joints {
                let (x, y, _) = self.at(f, j);
                let i = (f * self.joints + j) * 2;
                out.xy[i] = x;
                out.xy[i + 1] = y;
                out.conf[f * self.joints + j] = 1.0;
            }
        }
        out
    }
}

fn check_pred(pred: &MotionTensor, frames: usize, joints: usize) -> Result<()> {
    if pred.batch != 1 || pred.dim != POSE_DIM {
        return Err(Error::ShapeMismatch(format!(
            "prediction must be [1, frames, joints, 3], got [{}, {}, {}, {}]",
            pred.batch, pred.frames, pred.joints, pred.dim
        )));
    }
    if pred.frames != frames || pred.joints != joints {
        return Err(Error::ShapeMismatch(format!(
            "prediction is {}x{} frames x joints, target is {frames}x{joints}",
            pred.frames, pred.joints
        )));
    }
    Ok(())
}

/// Squared-error 3D loss with a velocity term.
///
/// `sum_{t,j} |p - g|^2 + lambda_v * sum_{t>=2,j} |(p_t - p_{t-1}) - (g_t - g_{t-1})|^2`.
/// Plain sums, not means; velocity differences start at the second frame.
pub fn loss_3d(pred: &MotionTensor, gt: &Skeleton3DSeq, lambda_v: f64) -> Result<f64> {
    check_pred(pred, gt.frames, gt.joints)?;
    let mut pos = 0.0;
    let mut vel = 0.0;
    for f in 0..gt.frames {
        for j in 0..gt.joints {
            let (gx, gy, gz) = gt.at(f, j);
            let base = pred.idx(0, f, j, 0);
            let dx = pred.data[base] - gx;
            let dy = pred.data[base + 1] - gy;
            let dz = pred.data[base + 2] - gz;
            pos += dx * dx + dy * dy + dz * dz;
            if f >= 1 {
                let (px, py, pz) = gt.at(f - 1, j);
                let prev = pred.idx(0, f - 1, j, 0);
                let vx = (pred.data[base] - pred.data[prev]) - (gx - px);
                let vy = (pred.data[base + 1] - pred.data[prev + 1]) - (gy - py);
                let vz = (pred.data[base + 2] - pred.data[prev + 2]) - (gz - pz);
                vel += vx * vx + vy * vy + vz * vz;
            }
        }
    }
    Ok(pos + lambda_v * vel)
}

/// Confidence-weighted 2D reprojection loss.
///
/// `sum_{t,j} conf_{t,j} * |proj(p) - target|^2` with orthographic projection
/// (the prediction's x, y against the target keypoint). Joints with zero
/// confidence contribute nothing.
pub fn loss_2d(pred: &MotionTensor, target: &Skeleton2DSeq) -> Result<f64> {
    check_pred(pred, target.frames, target.joints)?;
    let mut acc = 0.0;
    for f in 0..target.frames {
        for j in 0..target.joints {
            let (tx, ty) = target.xy_at(f, j);
            let base = pred.idx(0, f, j, 0);
            let dx = pred.data[base] - tx;
            let dy = pred.data[base + 1] - ty;
            acc += target.conf_at(f, j) * (dx * dx + dy * dy);
        }
    }
    Ok(acc)
}

/// How to corrupt detected keypoints for pretraining.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionSpec {
    /// Per-(frame, joint) probability of masking the joint out entirely
    /// (coordinates and confidence zeroed).
    pub mask_prob: f64,
    /// Std-dev of Gaussian jitter.
    pub gauss_sigma: f64,
    /// Half-width of uniform jitter.
    pub uniform_halfwidth: f64,
    /// Probability that a surviving joint gets Gaussian (vs uniform) jitter.
    pub mix_prob: f64,
    pub seed: u64,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        CorruptionSpec {
            mask_prob: 0.15,
            gauss_sigma: 0.01,
            uniform_halfwidth: 0.02,
            mix_prob: 0.5,
            seed: 0,
        }
    }
}

/// Mask and jitter a keypoint sequence, deterministically under the seed.
///
/// Each (frame, joint) cell independently either drops out with probability
/// `mask_prob` (zero coordinates, zero confidence) or keeps its confidence
/// and receives additive jitter, Gaussian with probability `mix_prob`, else
/// uniform. Draw counts per cell are fixed, so the stream of random numbers
/// consumed never depends on earlier outcomes.
pub fn corrupt(clean: &Skeleton2DSeq, spec: &CorruptionSpec) -> Result<Skeleton2DSeq> {
    if !(0.0..=1.0).contains(&spec.mask_prob) || !(0.0..=1.0).contains(&spec.mix_prob) {
        return Err(Error::InvalidArgument(format!(
            "mask_prob {} and mix_prob {} must lie in [0, 1]",
            spec.mask_prob, spec.mix_prob
        )));
    }
    if spec.gauss_sigma < 0.0 || spec.uniform_halfwidth < 0.0 {
        return Err(Error::InvalidArgument(
            "noise magnitudes must be nonnegative".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = clean.clone();
    for f in 0..clean.frames {
        for j in 0..clean.joints {
            let u_mask: f64 = rng.gen();
            let u_mix: f64 = rng.gen();
            let g1: f64 = StandardNormal.sample(&mut rng);
            let g2: f64 = StandardNormal.sample(&mut rng);
            let u1: f64 = rng.gen_range(-1.0..1.0);
            let u2: f64 = rng.gen_range(-1.0..1.0);
            let i = (f * clean.joints + j) * 2;
            if u_mask < spec.mask_prob {
                out.xy[i] = 0.0;
                out.xy[i + 1] = 0.0;
                out.conf[f * clean.joints + j] = 0.0;
            } else if u_mix < spec.mix_prob {
                out.xy[i] += spec.gauss_sigma * g1;
                out.xy[i + 1] += spec.gauss_sigma * g2;
            } else {
                out.xy[i] += spec.uniform_halfwidth * u1;
                out.xy[i + 1] += spec.uniform_halfwidth * u2;
            }
        }
    }
    Ok(out)
}

/// Deterministic synthetic motion: smooth sums of low-frequency sinusoids.
///
/// Every joint follows a shared root trajectory plus a fixed offset (a rigid
/// "bone" vector) plus a small joint-local wiggle. All curve parameters are
/// drawn from the seed before any frame is sampled, so the same seed at a
/// doubled fps samples the same continuous curves twice as densely. Frame `k`
/// is the curve value at `t = k / fps` seconds. The 2D sequence is the
/// orthographic projection with confidence 1.
pub fn synth_motion(
    joints: usize,
    frames: usize,
    fps: f64,
    seed: u64,
) -> Result<(Skeleton3DSeq, Skeleton2DSeq)> {
    if joints == 0 {
        return Err(Error::InvalidArgument("joints must be >= 1".into()));
    }
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "fps must be positive and finite, got {fps}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Root trajectory parameters: amplitude, frequency (Hz), phase per axis.
    let mut root = [[0.0f64; 3]; 3];
    for axis in root.iter_mut() {
        *axis = [
            rng.gen_range(0.1..0.3),
            rng.gen_range(0.1..0.5),
            rng.gen_range(0.0..core::f64::consts::TAU),
        ];
    }
    // Per joint: offset vector and wiggle (amplitude, frequency, phase) per axis.
    let mut offsets = Vec::with_capacity(joints);
    let mut wiggles = Vec::with_capacity(joints);
    for _ in 0..joints {
        offsets.push([
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
        ]);
        let mut w = [[0.0f64; 3]; 3];
        for axis in w.iter_mut() {
            *axis = [
                rng.gen_range(0.02..0.08),
                rng.gen_range(0.3..1.5),
                rng.gen_range(0.0..core::f64::consts::TAU),
            ];
        }
        wiggles.push(w);
    }

    let mut gt = Skeleton3DSeq::zeros(frames, joints);
    for k in 0..frames {
        let t = k as f64 / fps;
        for j in 0..joints {
            for c in 0..3 {
                let [ra, rf, rp] = root[c];
                let [wa, wf, wp] = wiggles[j][c];
                let v = ra * (core::f64::consts::TAU * rf * t + rp).sin()
                    + offsets[j][c]
                    + wa * (core::f64::consts::TAU * wf * t + wp).sin();
                gt.xyz[(k * joints + j) * 3 + c] = v;
            }
        }
    }
    let proj = gt.project();
    Ok((gt, proj))
}

/// Which objective a training step minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// 3D position + velocity loss against ground truth.
    ThreeD,
    /// Confidence-weighted 2D reprojection loss.
    TwoD,
}

/// One entry of a training trace: the objective in force and the loss value
/// after the step (entry 0 is the loss before any update).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub phase: LossKind,
    pub loss: f64,
}

/// One supervised sequence: corrupted input keypoints, the clean detected
/// keypoints (2D target), and ground-truth 3D.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub input: Skeleton2DSeq,
    pub target2d: Skeleton2DSeq,
    pub gt3d: Skeleton3DSeq,
}

/// Velocity-term weight used by the trainer.
pub const TRAIN_LAMBDA_V: f64 = 1.0;

fn dataset_loss(model: &HummussModel, data: &[TrainSample], kind: LossKind) -> Result<f64> {
    let mut total = 0.0;
    for sample in data {
        let input = sample.input.to_motion();
        let (_, pose) = model.forward(&input)?;
        total += match kind {
            LossKind::ThreeD => loss_3d(&pose, &sample.gt3d, TRAIN_LAMBDA_V)?,
            LossKind::TwoD => loss_2d(&pose, &sample.target2d)?,
        };
    }
    if !total.is_finite() {
        return Err(Error::NonFinite(format!("dataset loss = {total}")));
    }
    Ok(total)
}

/// Finite-difference descent on the 3D loss; see [`toy_train_schedule`].
pub fn toy_train(
    model: &mut HummussModel,
    data: &[TrainSample],
    steps: usize,
    step_size: f64,
) -> Result<Vec<f64>> {
    let trace = toy_train_schedule(model, data, &[(LossKind::ThreeD, steps)], step_size)?;
    Ok(trace.into_iter().map(|e| e.loss).collect())
}

/// Block-coordinate finite-difference descent with a loss schedule.
///
/// Each step picks the next block of coordinates (cycling from the readout
/// end of the parameter vector backward, so the output-adjacent weights are
/// refined first), estimates their partials by central differences with a
/// relative offset of 1e-4, and applies a gradient step. The step length
/// adapts: it backtracks while the loss would increase and grows again after
/// clean successes. Deterministic; no randomness is consumed.
///
/// `phases` is the curriculum: `(objective, step count)` pairs executed in
/// order. The returned trace has one labeled entry per step, preceded by one
/// entry for the initial loss of the first phase.
pub fn toy_train_schedule(
    model: &mut HummussModel,
    data: &[TrainSample],
    phases: &[(LossKind, usize)],
    step_size: f64,
) -> Result<Vec<TraceEntry>> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if !(step_size > 0.0 && step_size.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "step_size must be positive and finite, got {step_size}"
        )));
    }
    const FD_RELATIVE_H: f64 = 1e-4;
    const BLOCK: usize = 64;
    const MAX_BACKTRACKS: usize = 10;

    let mut theta = model.flatten_params();
    let p = theta.len();
    let n_chunks = p.div_ceil(BLOCK);

    let eval = |model: &mut HummussModel, theta: &[f64], kind: LossKind| -> Result<f64> {
        model.set_params(theta)?;
        dataset_loss(model, data, kind)
    };

    let first_kind = phases.first().map(|(k, _)| *k).unwrap_or(LossKind::ThreeD);
    let mut current = eval(model, &theta, first_kind)?;
    let mut trace = vec![TraceEntry {
        phase: first_kind,
        loss: current,
    }];

    let mut eta = step_size;
    let mut grad = vec![0.0f64; BLOCK];
    let mut global_step = 0usize;
    for &(kind, phase_steps) in phases {
        // Loss scale changes between phases; re-evaluate the baseline.
        current = eval(model, &theta, kind)?;
        for _ in 0..phase_steps {
            // Blocks cycle from the tail (readout) backward.
            let chunk = global_step % n_chunks;
            let end = p - chunk * BLOCK;
            let start = end.saturating_sub(BLOCK);
            let width = end - start;

            for (g, i) in grad[..width].iter_mut().zip(start..end) {
                let h = FD_RELATIVE_H * (1.0 + theta[i].abs());
                let orig = theta[i];
                theta[i] = orig + h;
                let up = eval(model, &theta, kind)?;
                theta[i] = orig - h;
                let down = eval(model, &theta, kind)?;
                theta[i] = orig;
                *g = (up - down) / (2.0 * h);
            }

            // Gradient step with backtracking on the true loss.
            let mut accepted = false;
            for _ in 0..=MAX_BACKTRACKS {
                for (offset, i) in (start..end).enumerate() {
                    theta[i] -= eta * grad[offset];
                }
                let candidate = eval(model, &theta, kind)?;
                if candidate <= current {
                    current = candidate;
                    accepted = true;
                    // Reward a clean success so eta recovers after backtracks.
                    eta = (eta * 1.5).min(step_size);
                    break;
                }
                for (offset, i) in (start..end).enumerate() {
                    theta[i] += eta * grad[offset];
                }
                eta *= 0.5;
            }
            if !accepted {
                // Keep theta; record the unchanged loss for this step.
            }
            trace.push(TraceEntry {
                phase: kind,
                loss: current,
            });
            global_step += 1;
        }
    }
    model.set_params(&theta)?;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_seq(frames: usize, joints: usize, v: f64) -> Skeleton3DSeq {
        let mut s = Skeleton3DSeq::zeros(frames, joints);
        for x in s.xyz.iter_mut() {
            *x = v;
        }
        s
    }

    #[test]
    fn loss_3d_hand_example() {
        // pred (0,0,0),(1,0,0) vs gt all zeros, lambda 1:
        // position 1.0 + velocity 1.0 = 2.0 exactly.
        let gt = constant_seq(2, 1, 0.0);
        let pred =
            MotionTensor::from_vec(vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0], 1, 2, 1, 3).unwrap();
        assert_eq!(loss_3d(&pred, &gt, 1.0).unwrap(), 2.0);
        // Velocity term off: only the position unit remains.
        assert_eq!(loss_3d(&pred, &gt, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn loss_3d_is_zero_on_perfect_prediction() {
        let (gt, _) = synth_motion(3, 10, 30.0, 1).unwrap();
        let pred = MotionTensor::from_vec(gt.xyz.clone(), 1, 10, 3, 3).unwrap();
        assert_eq!(loss_3d(&pred, &gt, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn loss_3d_shape_checks() {
        let gt = constant_seq(2, 1, 0.0);
        let pred = MotionTensor::zeros(1, 3, 1, 3);
        assert!(loss_3d(&pred, &gt, 1.0).is_err());
        let pred = MotionTensor::zeros(2, 2, 1, 3);
        assert!(loss_3d(&pred, &gt, 1.0).is_err());
    }

    #[test]
    fn loss_2d_ignores_zero_confidence_joints() {
        let mut target = Skeleton2DSeq::zeros(1, 2);
        target.xy = vec![5.0, 5.0, 1.0, 2.0];
        target.conf = vec![0.0, 1.0];
        // Prediction matches joint 1 exactly and misses joint 0 wildly; the
        // miss is invisible because its confidence is zero.
        let pred =
            MotionTensor::from_vec(vec![0.0, 0.0, 9.0, 1.0, 2.0, 9.0], 1, 1, 2, 3).unwrap();
        assert_eq!(loss_2d(&pred, &target).unwrap(), 0.0);
    }

    #[test]
    fn loss_2d_projects_orthographically() {
        // Depth never enters: two predictions differing only in z give the
        // same reprojection loss.
        let (gt, proj) = synth_motion(2, 4, 30.0, 7).unwrap();
        let mut pred = MotionTensor::from_vec(gt.xyz.clone(), 1, 4, 2, 3).unwrap();
        let a = loss_2d(&pred, &proj).unwrap();
        for f in 0..4 {
            for j in 0..2 {
                let i = pred.idx(0, f, j, 2);
                pred.data[i] += 10.0;
            }
        }
        let b = loss_2d(&pred, &proj).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, 0.0);
    }

    #[test]
    fn corrupt_is_deterministic_under_seed() {
        let (_, clean) = synth_motion(4, 20, 30.0, 3).unwrap();
        let spec = CorruptionSpec::default();
        let a = corrupt(&clean, &spec).unwrap();
        let b = corrupt(&clean, &spec).unwrap();
        assert_eq!(a, b);
        let other = corrupt(
            &clean,
            &CorruptionSpec {
                seed: 1,
                ..CorruptionSpec::default()
            },
        )
        .unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn corrupt_masks_zero_both_coordinates_and_confidence() {
        let (_, clean) = synth_motion(3, 50, 30.0, 9).unwrap();
        let spec = CorruptionSpec {
            mask_prob: 0.5,
            ..CorruptionSpec::default()
        };
        let noisy = corrupt(&clean, &spec).unwrap();
        let mut masked = 0;
        for f in 0..50 {
            for j in 0..3 {
                if noisy.conf_at(f, j) == 0.0 {
                    masked += 1;
                    let (x, y) = noisy.xy_at(f, j);
                    assert_eq!((x, y), (0.0, 0.0));
                }
            }
        }
        assert!(masked > 0, "with mask_prob 0.5 some joints must drop");
    }

    #[test]
    fn corrupt_validates_probabilities() {
        let (_, clean) = synth_motion(1, 2, 30.0, 0).unwrap();
        let bad = CorruptionSpec {
            mask_prob: 1.5,
            ..CorruptionSpec::default()
        };
        assert!(corrupt(&clean, &bad).is_err());
    }

    #[test]
    fn synth_motion_doubled_fps_resamples_the_same_curves() {
        let (base, _) = synth_motion(3, 16, 25.0, 11).unwrap();
        let (dense, _) = synth_motion(3, 32, 50.0, 11).unwrap();
        for k in 0..16 {
            for j in 0..3 {
                for c in 0..3 {
                    let a = base.xyz[(k * 3 + j) * 3 + c];
                    let b = dense.xyz[((2 * k) * 3 + j) * 3 + c];
                    assert!(
                        (a - b).abs() < 1e-12,
                        "frame {k} joint {j} coord {c}: {a} vs {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn synth_motion_is_bounded_and_projects_consistently() {
        let (gt, proj) = synth_motion(5, 40, 30.0, 2).unwrap();
        assert!(gt.xyz.iter().all(|v| v.abs() < 1.0));
        for f in 0..40 {
            for j in 0..5 {
                let (x, y, _) = gt.at(f, j);
                assert_eq!(proj.xy_at(f, j), (x, y));
                assert_eq!(proj.conf_at(f, j), 1.0);
            }
        }
    }
}
