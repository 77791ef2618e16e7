//! Seeded end-to-end regressions: the full pipeline on synthetic data has to
//! clear the persistence baseline and keep its interpretability outputs
//! consistent.

use sparse_time::data::{prepare_dataset, synth_series, SynthKind};
use sparse_time::eval::{build_report, evaluate_split, naive_baseline};
use sparse_time::model::{init_params, softmax_alpha};
use sparse_time::train::{train, TrainConfig};

#[test]
fn seasonal_model_beats_persistence_baseline() {
    let seed = 1;
    let series = synth_series(SynthKind::Seasonal { period: 20.0, noise: 0.05 }, 600, 1, seed);
    let (data, _) = prepare_dataset(&series, 16, 0, 5).unwrap();

    let cfg = TrainConfig {
        seed,
        hidden_dim: 16,
        ..TrainConfig::default()
    };
    let params = init_params(1, cfg.hidden_dim, seed);
    let (best, log) = train(params, &data, &cfg).unwrap();

    let model = evaluate_split(&best, &data.test).unwrap();
    let naive = naive_baseline(&data.test, 0).unwrap();
    let model_r2 = model.r2.unwrap();
    let naive_r2 = naive.r2.unwrap();
    assert!(
        model_r2 > naive_r2,
        "trained model (R² {model_r2:.3}) must beat persistence (R² {naive_r2:.3}) \
         after {} epochs",
        log.epochs.len()
    );
    assert!(model.mae < naive.mae);
}

#[test]
fn report_alpha_matches_trained_parameters() {
    let seed = 4;
    let series = synth_series(SynthKind::Seasonal { period: 14.0, noise: 0.1 }, 240, 2, seed);
    let (data, _) = prepare_dataset(&series, 10, 1, 5).unwrap();
    let cfg = TrainConfig {
        seed,
        max_epochs: 20,
        ..TrainConfig::default()
    };
    let params = init_params(2, cfg.hidden_dim, seed);
    let (best, _) = train(params, &data, &cfg).unwrap();

    let report = build_report(&best, &data, serde_json::json!({"run": "test"}), false).unwrap();
    assert_eq!(report.alpha, softmax_alpha(&best.theta));
    let sum: f64 = report.alpha.iter().sum();
    assert!((sum - 1.0).abs() < 1e-12);
    assert_eq!(report.param_count, best.param_count());
    // Quadratic identity between the reported split metrics and a direct pass.
    let direct = evaluate_split(&best, &data.validation).unwrap();
    assert_eq!(report.validation, direct);
}
