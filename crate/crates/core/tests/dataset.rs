use cgan_anomaly::dataset::{
    generate_synthetic_corpus, load_ucsd_layout, pair_frames, write_ucsd_layout, AnomalyType, Frame, SyntheticSpec,
    VideoSequence,
};
use cgan_anomaly::Error;

fn spec() -> SyntheticSpec {
    SyntheticSpec {
        resolution: (32, 48),
        n_train_videos: 2,
        n_test_videos: 3,
        frames_per_video: 30,
        agent_count: 4,
        ..Default::default()
    }
}

#[test]
fn fast_mover_masks_follow_the_analytic_trajectory() {
    let s = SyntheticSpec {
        anomaly_type: AnomalyType::FastMover,
        anomaly_speed_multiplier: 3.0,
        normal_speed: 1.0,
        ..spec()
    };
    let corpus = generate_synthetic_corpus(&s).unwrap();
    let (h, w) = s.resolution;
    for (video, track) in corpus.split.test.iter().zip(&corpus.anomalies) {
        assert_eq!(track.video_id, video.id);
        assert_eq!(track.velocity.abs(), 3.0);
        let masks = video.ground_truth.as_ref().unwrap().pixel_masks.as_ref().unwrap();
        for (t, mask) in masks.iter().enumerate() {
            let x = if t >= track.t_start {
                Some(track.x_enter + track.velocity * (t - track.t_start) as f64)
            } else {
                None
            };
            for row in 0..h {
                for col in 0..w {
                    let inside = x.is_some_and(|x| {
                        let overlap = ((col + 1) as f64).min(x + track.size_w as f64) - (col as f64).max(x);
                        row >= track.top && row < track.top + track.size_h && overlap >= 0.5
                    });
                    assert_eq!(mask.data[row * w + col], inside, "{} t={t} ({row},{col})", video.id);
                }
            }
        }
    }
}

#[test]
fn labels_equal_mask_nonempty_and_training_is_normal() {
    let corpus = generate_synthetic_corpus(&spec()).unwrap();
    for v in &corpus.split.test {
        let gt = v.ground_truth.as_ref().unwrap();
        for (l, m) in gt.frame_labels.iter().zip(gt.pixel_masks.as_ref().unwrap()) {
            assert_eq!(*l, !m.is_empty());
        }
        assert!(gt.has_abnormal());
    }
    assert!(corpus.split.train.iter().all(|v| !v.has_abnormal_frames()));
}

#[test]
fn disk_round_trip_preserves_frames_and_ground_truth() {
    let s = spec();
    let corpus = generate_synthetic_corpus(&s).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_ucsd_layout(&corpus.split, dir.path(), Some(&s)).unwrap();
    let back = load_ucsd_layout(dir.path()).unwrap();
    assert_eq!(back, corpus.split);
}

#[test]
fn loader_rejects_missing_root_and_empty_train() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        load_ucsd_layout(&dir.path().join("nope")),
        Err(Error::Config(_))
    ));
    std::fs::create_dir_all(dir.path().join("Train")).unwrap();
    std::fs::create_dir_all(dir.path().join("Test")).unwrap();
    assert!(matches!(load_ucsd_layout(dir.path()), Err(Error::Config(_))));
}

#[test]
fn frames_are_ordered_numerically() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("Train").join("Train001");
    std::fs::create_dir_all(&train).unwrap();
    std::fs::create_dir_all(dir.path().join("Test")).unwrap();
    for i in 1..=12u8 {
        let img = image::RgbImage::from_pixel(8, 8, image::Rgb([i, i, i]));
        img.save(train.join(format!("{i}.png"))).unwrap();
    }
    let split = load_ucsd_layout(dir.path()).unwrap();
    let v = &split.train[0];
    assert_eq!(v.len(), 12);
    for (t, f) in v.frames.iter().enumerate() {
        assert_eq!(f.index, t);
        assert_eq!(f.pixels()[0], t as u8 + 1);
    }
}

#[test]
fn pairs_are_consecutive() {
    let frames: Vec<Frame> = (0..5)
        .map(|t| Frame::new("v", t, 8, 8, vec![t as u8; 192]).unwrap())
        .collect();
    let v = VideoSequence::new("v", frames.clone(), None).unwrap();
    let pairs = pair_frames(&v).unwrap();
    assert_eq!(pairs.len(), 4);
    for (k, (a, b)) in pairs.iter().enumerate() {
        assert_eq!((a.index, b.index), (k, k + 1));
    }
    assert!(matches!(
        VideoSequence::new("w", frames[..1].to_vec(), None),
        Err(Error::DegenerateVideo { len: 1, .. })
    ));
}
