use std::time::{Duration, Instant};

use corrmine::encoder::{EncoderConfig, EncoderModel};
use corrmine::eval::{check_batch, gradient_check, GradCheckConfig};
use corrmine::training::{Batch, Direction};

#[test]
fn hundred_random_trials_pass_quickly() {
    let start = Instant::now();
    let r = gradient_check(&GradCheckConfig::default()).unwrap();
    let elapsed = start.elapsed();
    assert_eq!(r.trials.len(), 100);
    assert!(r.passed && r.max_rel_error < 1e-4, "max rel error {}", r.max_rel_error);
    assert!(elapsed < Duration::from_secs(10), "{elapsed:?}");
}

#[test]
fn linear_path_model_is_near_exact() {
    // raw inner products through an identity projection: only the
    // log-sum-exp is nonlinear, so the error is the O(h^2) truncation
    // (about 4e-8 here), three orders below the working tolerance
    let mut model = EncoderModel::new(EncoderConfig {
        vocab_size: 12,
        embed_dim: 4,
        out_dim: 4,
        normalize: false,
        temperature: 1.0,
        init_scale: 0.5,
        seed: 3,
    })
    .unwrap();
    model.projection.iter_mut().for_each(|w| *w = 0.0);
    for d in 0..4 {
        model.projection[d * 4 + d] = 1.0;
    }
    let batch = Batch {
        doc_ids: (0..4).map(|i| format!("d{i}")).collect(),
        anchors: vec![vec![vec![1, 2]], vec![vec![3]], vec![vec![4, 5, 6]], vec![vec![7, 1]]],
        positives: vec![vec![vec![8]], vec![vec![9, 3]], vec![vec![10]], vec![vec![11, 2]]],
    };
    for direction in [Direction::AnchorToPositive, Direction::Symmetric] {
        let err = check_batch(&model, &batch, direction, 1e-4).unwrap();
        assert!(err < 1e-7, "{direction:?}: {err:e}");
    }
}

#[test]
fn impossible_tolerance_reports_failures() {
    let r = gradient_check(&GradCheckConfig {
        trials: 20,
        tolerance: 1e-12,
        ..Default::default()
    })
    .unwrap();
    assert!(!r.passed);
    assert!(r.failures > 0);
    assert!(r.max_rel_error > 1e-12);
}
