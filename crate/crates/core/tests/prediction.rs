use dsrm_core::features::{extract_features, fit_stats, Backend, FeatureMatrix, FeatureStats, TinyCnnParams};
use dsrm_core::patch_grid::{build_grid, ImageBuffer};
use dsrm_core::regressor::{predict_features, predict_image, Checkpoint, Extractor, RegressorParams};

fn constant_features(rows: usize, cols: usize, dim: usize) -> FeatureMatrix {
    FeatureMatrix::new(rows, cols, dim, vec![0.5; rows * cols * dim], Backend::Precomputed).unwrap()
}

#[test]
fn head_bias_only_network_predicts_bias_everywhere() {
    let grid = build_grid(200, 200, 100, 50).unwrap();
    let mut params = RegressorParams::zeros(4, 3);
    params.head_b.data_mut()[0] = 2.0;
    let pred = predict_features(&constant_features(3, 3, 4), &grid, &FeatureStats::identity(4), &params).unwrap();
    assert_eq!(pred.count, 18.0);
    assert!(pred.local.values().iter().all(|&v| v == 2.0));
    assert!((pred.density.mass() - 18.0).abs() < 1e-9);
}

#[test]
fn negative_local_predictions_are_clamped() {
    let grid = build_grid(100, 150, 100, 50).unwrap();
    let mut params = RegressorParams::zeros(2, 2);
    params.head_b.data_mut()[0] = -1.0;
    let pred = predict_features(&constant_features(1, 2, 2), &grid, &FeatureStats::identity(2), &params).unwrap();
    assert_eq!(pred.count, 0.0);
    assert_eq!(pred.density.mass(), 0.0);
}

#[test]
fn grid_mismatch_is_rejected() {
    let grid = build_grid(200, 200, 100, 50).unwrap();
    let params = RegressorParams::zeros(4, 3);
    assert!(predict_features(&constant_features(2, 3, 4), &grid, &FeatureStats::identity(4), &params).is_err());
}

#[test]
fn image_prediction_is_deterministic_and_survives_checkpointing() {
    let (h, w) = (160, 160);
    let pixels: Vec<f64> = (0..h * w * 3).map(|k| ((k * 7919) % 255) as f64 / 255.0).collect();
    let image = ImageBuffer::new(h, w, pixels).unwrap();
    let grid = build_grid(h, w, 100, 50).unwrap();
    let cnn = TinyCnnParams::new(8, 5);
    let features = extract_features(&image, &grid, &cnn).unwrap();
    let stats = fit_stats(std::slice::from_ref(&features)).unwrap();
    let params = RegressorParams::with_hidden(8, 6, 11);

    let a = predict_image(&image, &grid, Extractor::TinyCnn(&cnn), &stats, &params).unwrap();
    let b = predict_image(&image, &grid, Extractor::Precomputed(&features), &stats, &params).unwrap();
    assert_eq!(a, b);
    assert!((a.count - a.local.values().iter().map(|v| v.max(0.0)).sum::<f64>()).abs() < 1e-12);

    let ckpt = Checkpoint::new(Backend::TinyCnn, params, stats, Some(cnn));
    let restored = Checkpoint::from_bytes(&ckpt.to_bytes().unwrap()).unwrap();
    let c = predict_image(
        &image,
        &grid,
        Extractor::TinyCnn(restored.cnn.as_ref().unwrap()),
        &restored.stats,
        &restored.regressor,
    )
    .unwrap();
    assert_eq!(a, c);
}
