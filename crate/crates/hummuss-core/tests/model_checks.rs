//! Full-model invariants: streaming equals batch execution, causality of the
//! causal variant, executor duality, fusion behavior, and state accounting.

use hummuss_core::block::CausalExec;
use hummuss_core::model::{
    fuse_weights, ForwardOpts, HummussConfig, HummussModel, MotionTensor,
};
use hummuss_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_causal() -> HummussConfig {
    HummussConfig {
        n_blocks: 2,
        d_in: 3,
        d_model: 16,
        d_rep: 8,
        state_dim: 8,
        k_spatial: 1,
        k_temporal: 2,
        n_expand: 2.0,
        causal: true,
        nominal_fps: 30.0,
    }
}

fn random_motion(rng: &mut ChaCha8Rng, b: usize, f: usize, j: usize, d: usize) -> MotionTensor {
    let data = (0..b * f * j * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    MotionTensor::from_vec(data, b, f, j, d).unwrap()
}

#[test]
fn untimed_streaming_is_bit_identical_to_the_batch_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let model = HummussModel::init(tiny_causal(), &mut rng).unwrap();
    let (frames, joints) = (25, 5);
    let x = random_motion(&mut rng, 1, frames, joints, 3);
    let (rep, pose) = model.forward(&x).unwrap();

    let mut state = model.init_state(joints).unwrap();
    for f in 0..frames {
        let frame = &x.data[f * joints * 3..(f + 1) * joints * 3];
        let (r, p) = model.stream_step(frame, None, &mut state).unwrap();
        for j in 0..joints {
            for c in 0..8 {
                assert_eq!(
                    r[j * 8 + c].to_bits(),
                    rep.at(0, f, j, c).to_bits(),
                    "rep f={f} j={j} c={c}"
                );
            }
            for c in 0..3 {
                assert_eq!(
                    p[j * 3 + c].to_bits(),
                    pose.at(0, f, j, c).to_bits(),
                    "pose f={f} j={j} c={c}"
                );
            }
        }
    }
    assert_eq!(state.frames_seen, frames as u64);
}

#[test]
fn nominal_timestamps_stream_close_to_the_batch_forward() {
    // Timestamps at exact nominal instants give per-step factors that differ
    // from 1.0 only by float rounding, so outputs track the batch pass far
    // inside the 1e-5 agreement contract.
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let model = HummussModel::init(tiny_causal(), &mut rng).unwrap();
    let (frames, joints) = (30, 4);
    let x = random_motion(&mut rng, 1, frames, joints, 3);
    let (_, pose) = model.forward(&x).unwrap();

    let mut state = model.init_state(joints).unwrap();
    for f in 0..frames {
        let frame = &x.data[f * joints * 3..(f + 1) * joints * 3];
        let ts = f as f64 * (1000.0 / 30.0);
        let (_, p) = model.stream_step(frame, Some(ts), &mut state).unwrap();
        for (c, v) in p.iter().enumerate() {
            let want = pose.data[f * joints * 3 + c];
            assert!((v - want).abs() < 1e-9, "f={f} c={c}: {} vs {want}", v);
        }
    }
}

#[test]
fn scan_and_conv_forwards_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let model = HummussModel::init(tiny_causal(), &mut rng).unwrap();
    let x = random_motion(&mut rng, 2, 40, 5, 3);
    let (rep_s, pose_s) = model.forward(&x).unwrap();
    let (rep_c, pose_c) = model.forward_conv(&x).unwrap();
    for (a, b) in rep_s.data.iter().zip(rep_c.data.iter()) {
        assert!((a - b).abs() <= 1e-8);
    }
    for (a, b) in pose_s.data.iter().zip(pose_c.data.iter()) {
        assert!((a - b).abs() <= 1e-8);
    }
}

#[test]
fn suffix_edits_leave_causal_prefix_outputs_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let model = HummussModel::init(tiny_causal(), &mut rng).unwrap();
    let (frames, joints) = (30, 4);
    let x = random_motion(&mut rng, 1, frames, joints, 3);
    let (_, pose) = model.forward(&x).unwrap();

    let cut = 18;
    let mut edited = x.clone();
    for f in cut..frames {
        for j in 0..joints {
            for d in 0..3 {
                let i = edited.idx(0, f, j, d);
                edited.data[i] = rng.gen_range(-5.0..5.0);
            }
        }
    }
    let (_, pose2) = model.forward(&edited).unwrap();
    for f in 0..cut {
        for j in 0..joints {
            for d in 0..3 {
                assert_eq!(
                    pose.at(0, f, j, d).to_bits(),
                    pose2.at(0, f, j, d).to_bits(),
                    "f={f} j={j} d={d}"
                );
            }
        }
    }
}

#[test]
fn interleaved_streams_match_separate_runs_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let model = HummussModel::init(tiny_causal(), &mut rng).unwrap();
    let joints = 3;
    let a = random_motion(&mut rng, 1, 20, joints, 3);
    let b = random_motion(&mut rng, 1, 20, joints, 3);

    let run_alone = |x: &MotionTensor| -> Vec<Vec<f64>> {
        let mut st = model.init_state(joints).unwrap();
        (0..20)
            .map(|f| {
                let frame = &x.data[f * joints * 3..(f + 1) * joints * 3];
                model.stream_step(frame, None, &mut st).unwrap().1
            })
            .collect()
    };
    let solo_a = run_alone(&a);
    let solo_b = run_alone(&b);

    let mut st_a = model.init_state(joints).unwrap();
    let mut st_b = model.init_state(joints).unwrap();
    for f in 0..20 {
        let fa = &a.data[f * joints * 3..(f + 1) * joints * 3];
        let fb = &b.data[f * joints * 3..(f + 1) * joints * 3];
        let (_, pa) = model.stream_step(fa, None, &mut st_a).unwrap();
        let (_, pb) = model.stream_step(fb, None, &mut st_b).unwrap();
        assert_eq!(pa, solo_a[f]);
        assert_eq!(pb, solo_b[f]);
    }
}

#[test]
fn streaming_state_size_does_not_grow_with_frames() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let model = HummussModel::init(tiny_causal(), &mut rng).unwrap();
    let joints = 3;
    let frame: Vec<f64> = (0..joints * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let mut state = model.init_state(joints).unwrap();
    for _ in 0..100 {
        model.stream_step(&frame, None, &mut state).unwrap();
    }
    let after_100 = state.accounted_bytes();
    for _ in 0..9_900 {
        model.stream_step(&frame, None, &mut state).unwrap();
    }
    assert_eq!(state.accounted_bytes(), after_100);
    assert_eq!(state.frames_seen, 10_000);
}

#[test]
fn stream_mode_guards() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    let causal = HummussModel::init(tiny_causal(), &mut rng).unwrap();
    let mut state = causal.init_state(2).unwrap();
    let frame = vec![0.1; 2 * 3];
    causal.stream_step(&frame, Some(10.0), &mut state).unwrap();
    // Equal and decreasing timestamps are rejected, state stays usable.
    assert!(matches!(
        causal.stream_step(&frame, Some(10.0), &mut state),
        Err(Error::InvalidArgument(_))
    ));
    assert!(matches!(
        causal.stream_step(&frame, Some(5.0), &mut state),
        Err(Error::InvalidArgument(_))
    ));
    causal.stream_step(&frame, Some(11.0), &mut state).unwrap();

    let mut bi_cfg = tiny_causal();
    bi_cfg.causal = false;
    bi_cfg.n_expand = 2.5;
    let bi = HummussModel::init(bi_cfg, &mut rng).unwrap();
    assert!(matches!(bi.init_state(2), Err(Error::InvalidMode(_))));
}

#[test]
fn default_configs_land_in_the_expected_parameter_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    for config in [
        HummussConfig::default_causal(),
        HummussConfig::default_bidirectional(),
    ] {
        let mut model = HummussModel::init(config, &mut rng).unwrap();
        let n = model.param_count();
        assert!(
            (15_000_000..=17_000_000).contains(&n),
            "param count {n} outside [15M, 17M]"
        );
        assert_eq!(model.flatten_params().len(), n);
    }
}

#[test]
fn fusion_coefficients_are_a_proper_convex_pair() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let model = HummussModel::init(tiny_causal(), &mut rng).unwrap();
    let w_fuse = &model.layers[0].w_fuse;
    let d = model.config.d_model;
    for _ in 0..200 {
        let st: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let ts: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let (a_st, a_ts) = fuse_weights(&st, &ts, w_fuse);
        assert!(a_st > 0.0 && a_st < 1.0);
        assert!(a_ts > 0.0 && a_ts < 1.0);
        assert!((a_st + a_ts - 1.0).abs() < 1e-12);
    }
    // Extreme logits stay finite thanks to the max-subtracted softmax.
    let big: Vec<f64> = vec![1e6; d];
    let small: Vec<f64> = vec![-1e6; d];
    let (a_st, a_ts) = fuse_weights(&big, &small, w_fuse);
    assert!(a_st.is_finite() && a_ts.is_finite());
    assert!((a_st + a_ts - 1.0).abs() < 1e-12);
}

#[test]
fn delta_factor_forward_matches_streaming_with_matching_timestamps() {
    // Running offline with a doubled step size equals streaming the same
    // frames with timestamps spaced at two nominal periods.
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let model = HummussModel::init(tiny_causal(), &mut rng).unwrap();
    let (frames, joints) = (20, 3);
    let x = random_motion(&mut rng, 1, frames, joints, 3);
    let (_, pose) = model
        .forward_opts(
            &x,
            ForwardOpts {
                temporal_exec: CausalExec::Scan,
                delta_factor: 2.0,
            },
        )
        .unwrap();

    let mut state = model.init_state(joints).unwrap();
    // Seed the previous-timestamp origin so the first frame's gap is also
    // two periods rather than the untimed default of one.
    state.last_timestamp = Some(-2.0 * 1000.0 / 30.0);
    for f in 0..frames {
        let frame = &x.data[f * joints * 3..(f + 1) * joints * 3];
        let ts = (f as f64) * 2.0 * (1000.0 / 30.0) + 0.0;
        let (_, p) = model.stream_step(frame, Some(ts), &mut state).unwrap();
        for (c, v) in p.iter().enumerate() {
            let want = pose.data[f * joints * 3 + c];
            assert!(
                (v - want).abs() < 1e-9,
                "f={f} c={c}: stream {v} vs offline {want}"
            );
        }
    }
}
