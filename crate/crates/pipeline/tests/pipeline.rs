//! End-to-end pipeline contracts on desk-scale synthetic data:
//! determinism, train/test isolation, degenerate-training behavior, sweep
//! and export shapes, and model persistence.

use srnr_core::signal::split_train_test;
use srnr_pipeline::config::{Classifier, PipelineConfig};
use srnr_pipeline::runner::{
    export_features, prepare_subject, run_pipeline, signal_digest, sweep_network_size, FeatureStage,
};
use srnr_pipeline::synth::{synthesize_dataset, SynthSpec};

fn small_synth(seed: u64) -> srnr_core::signal::RawRecording {
    synthesize_dataset(&SynthSpec {
        n_classes: 5,
        reps: 4,
        seed,
        sample_rate_hz: 2000.0,
        channels: 12,
        movement_ms: 2600.0,
        rest_ms: 1400.0,
        subject_id: 1,
    })
    .unwrap()
}

fn small_config(seed: u64) -> PipelineConfig {
    let mut config = PipelineConfig {
        include_rest: false,
        ..Default::default()
    };
    config.readout.epochs = 60;
    config.with_master_seed(seed)
}

#[test]
fn identical_runs_produce_identical_reports() {
    let rec = small_synth(3);
    let config = small_config(3);
    let a = run_pipeline(&config, std::slice::from_ref(&rec)).unwrap();
    let b = run_pipeline(&config, &[rec]).unwrap();
    // Bit-identical up to timings.
    assert_eq!(
        serde_json::to_string(&a.report.without_timings()).unwrap(),
        serde_json::to_string(&b.report.without_timings()).unwrap()
    );
    assert_eq!(a.models.len(), b.models.len());
    for (ma, mb) in a.models.iter().zip(&b.models) {
        assert_eq!(ma, mb);
    }
}

#[test]
fn calibration_and_training_never_see_test_windows() {
    let rec = small_synth(5);
    let config = small_config(5);
    let output = run_pipeline(&config, std::slice::from_ref(&rec)).unwrap();

    // Rebuild the subject and folds exactly as the runner does, and check
    // that each fold's recorded calibration-corpus digest equals a digest
    // recomputed from the training windows ALONE. Digest equality pins the
    // corpus to the training side; disjointness pins the fold.
    let prepared = prepare_subject(&config, &rec).unwrap();
    let folds = split_train_test(&prepared.windows, &config.split.split_spec()).unwrap();
    let subject_report = &output.report.subjects[0];
    assert_eq!(subject_report.folds.len(), folds.len());

    for (fold_report, fold) in subject_report.folds.iter().zip(&folds) {
        assert!(fold.test.iter().all(|i| !fold.train.contains(i)));
        let expected = signal_digest(
            fold.train
                .iter()
                .flat_map(|&w| prepared.band_signals[w].iter().map(Vec::as_slice)),
        );
        assert_eq!(
            fold_report.calibration.corpus_sha256, expected,
            "fold {}: calibration consumed something other than the training windows",
            fold_report.fold
        );
        assert_ne!(fold_report.train_sha256, fold_report.test_sha256);
    }
}

#[test]
fn zero_epoch_training_stays_at_chance_level() {
    let rec = small_synth(7);
    let mut config = small_config(7);
    config.readout.epochs = 0;
    let output = run_pipeline(&config, &[rec]).unwrap();
    let k = output.report.subjects[0].labels.len() as f64;
    let chance = 100.0 / k;
    assert!(
        output.report.overall.mean_accuracy <= 2.0 * chance,
        "untrained accuracy {:.1}% exceeds twice chance ({:.1}%)",
        output.report.overall.mean_accuracy,
        chance
    );
}

#[test]
fn svm_readout_also_runs() {
    let rec = small_synth(11);
    let mut config = small_config(11);
    config.readout.classifier = Classifier::LinearSvm;
    let output = run_pipeline(&config, &[rec]).unwrap();
    assert!(output.report.overall.mean_accuracy > 50.0);
    assert!(output.report.subjects[0].folds[0].loss_curve.is_none());
    assert!(output.models[0].svm.is_some());
}

#[test]
fn sweep_single_size_gives_one_row_and_fixed_columns() {
    let rec = small_synth(13);
    let config = small_config(13);
    let table = sweep_network_size(&config, &[10], &[rec]).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert_eq!(table.rows[0].size, 10);
    let csv = table.to_csv();
    assert!(csv.starts_with("size,mean_acc,std_acc\n"));
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn bigger_reservoir_does_not_lose_to_single_neuron() {
    // Statistical check over 5 seeds: mean accuracy at N=10 must not trail
    // N=1 by more than 5 points.
    let mut acc1 = Vec::new();
    let mut acc10 = Vec::new();
    for seed in 20..25u64 {
        let rec = small_synth(seed);
        let config = small_config(seed);
        let table = sweep_network_size(&config, &[1, 10], &[rec]).unwrap();
        acc1.push(table.rows[0].mean_acc);
        acc10.push(table.rows[1].mean_acc);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(
        mean(&acc10) >= mean(&acc1) - 5.0,
        "N=10 mean {:.1}% vs N=1 mean {:.1}%",
        mean(&acc10),
        mean(&acc1)
    );
}

#[test]
fn exported_feature_matrices_have_contract_shapes() {
    let rec = small_synth(17);
    let config = small_config(17);
    let prepared = prepare_subject(&config, &rec).unwrap();
    let n_windows = prepared.windows.len();

    let pre = export_features(
        &config,
        FeatureStage::PreReservoir,
        std::slice::from_ref(&rec),
    )
    .unwrap();
    assert_eq!(pre.dim, 48); // 4 bands x 12 channels, 1 bin
    assert_eq!(pre.rows.len(), n_windows);
    let header = pre.to_csv().lines().next().unwrap().to_string();
    assert!(header.starts_with("f0,") && header.ends_with(",label"));
    assert_eq!(header.split(',').count(), 48 + 1);

    let post = export_features(&config, FeatureStage::PostReservoir, &[rec]).unwrap();
    assert_eq!(post.dim, 480); // 48 banks x 10 neurons
    assert_eq!(post.rows.len(), n_windows);
}

#[test]
fn trained_models_round_trip_through_json() {
    let rec = small_synth(19);
    let mut config = small_config(19);
    config.split.folds = 2;
    let output = run_pipeline(&config, &[rec]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    output.models[0].save_json(&path).unwrap();
    let loaded = srnr_pipeline::runner::TrainedModel::load_json(&path).unwrap();
    assert_eq!(loaded, output.models[0]);
    assert_eq!(loaded.config_sha256, config.sha256());
}

#[test]
fn stage_timings_account_for_the_total() {
    let rec = small_synth(23);
    let config = small_config(23);
    let output = run_pipeline(&config, &[rec]).unwrap();
    let t = &output.report.timings;
    assert!(t.total_s > 0.0);
    let ratio = t.stage_sum() / t.total_s;
    assert!(
        (0.95..=1.0).contains(&ratio),
        "stage sum {:.3}s vs total {:.3}s (ratio {ratio:.3})",
        t.stage_sum(),
        t.total_s
    );
}

#[test]
fn markdown_and_confusion_outputs_render() {
    let rec = small_synth(29);
    let mut config = small_config(29);
    config.split.folds = 2;
    let output = run_pipeline(&config, &[rec]).unwrap();
    let md = output.report.to_markdown();
    assert!(md.contains("# Run report"));
    assert!(md.contains("| Subject |"));

    let pooled = output.report.pooled_confusion();
    assert_eq!(pooled.len(), 5);
    let total: u64 = pooled.iter().flatten().sum();
    let tested: usize = output.report.subjects[0]
        .folds
        .iter()
        .map(|f| f.test_windows)
        .sum();
    assert_eq!(total, tested as u64);
}
