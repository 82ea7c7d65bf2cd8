//! Cross-module integration: a labeled two-class recording walked through
//! the public API: normalize, window, filterbank, rate-capped encoding,
//! parallel reservoirs, count features, classifier, metrics.

use srnr_core::encoding::{calibrate_encoder, encode_channels, LifParams};
use srnr_core::filterbank::{bands_from_cutoffs, expand_channels, DEFAULT_CUTOFFS_HZ};
use srnr_core::metrics::compute_metrics;
use srnr_core::raster::RowMeaning;
use srnr_core::readout::{bin_spike_counts, train_delta_softmax, DeltaTrainConfig, FeatureVector};
use srnr_core::reservoir::{derive_bank_seed, init_mask, run_parallel_reservoirs, ReservoirConfig};
use srnr_core::signal::{normalize_recording, segment_windows, split_train_test, RawRecording, SplitMode, SplitSpec};

/// Two classes of deterministic multichannel signal: a slow large wave and
/// a fast small one, distinguishable by band energy.
fn two_class_recording() -> RawRecording {
    let rate = 2000.0;
    let seg = 4400; // 2200 ms per segment
    let mut samples = vec![Vec::new(); 3];
    let mut labels = Vec::new();
    let mut reps = Vec::new();
    for rep in 0..4u16 {
        for class in 1..=2u16 {
            for t in 0..seg {
                let phase = t as f64 / rate;
                for (c, channel) in samples.iter_mut().enumerate() {
                    let freq = if class == 1 { 55.0 } else { 320.0 };
                    let amp = if class == 1 { 1.0 } else { 0.45 };
                    channel.push(amp * (2.0 * std::f64::consts::PI * freq * phase + c as f64).sin());
                }
                labels.push(class);
                reps.push(rep + 1);
            }
        }
    }
    RawRecording::new(samples, rate, labels, reps, 9).unwrap()
}

#[test]
fn full_chain_classifies_the_two_waves() {
    let recording = normalize_recording(&two_class_recording()).unwrap();
    let windows = segment_windows(&recording, 200.0).unwrap();
    assert!(windows.len() >= 80); // 11 per segment x 8 segments, balanced
    assert!(windows.iter().all(|w| w.len() == 400));

    let bands = bands_from_cutoffs(&DEFAULT_CUTOFFS_HZ, 4, 2000.0);
    let band_signals: Vec<Vec<Vec<f64>>> = windows.iter().map(|w| expand_channels(w, &bands).unwrap()).collect();
    assert_eq!(band_signals[0].len(), 12); // 4 bands x 3 channels

    let spec = SplitSpec {
        train_fraction: 0.8,
        n_folds: 1,
        rng_seed: 31,
        mode: SplitMode::DisjointFolds,
    };
    let fold = &split_train_test(&windows, &spec).unwrap()[0];

    let corpus: Vec<&[f64]> = fold
        .train
        .iter()
        .flat_map(|&w| band_signals[w].iter().map(Vec::as_slice))
        .collect();
    let encoder = LifParams::default().with_dt(0.0005);
    let calibration = calibrate_encoder(&corpus, &encoder, 300.0).unwrap();
    assert!(calibration.max_rate_hz <= 300.0);

    let configs: Vec<ReservoirConfig> = (0..12)
        .map(|bank| ReservoirConfig {
            n_neurons: 10,
            mask: init_mask(10, 0.5, derive_bank_seed(77, bank)).unwrap(),
            neuron: LifParams::default().with_dt(0.0005),
            spike_current: 1.0,
        })
        .collect();

    let features: Vec<FeatureVector> = windows
        .iter()
        .zip(&band_signals)
        .map(|(window, signals)| {
            let encoded = encode_channels(signals, &calibration.params).unwrap();
            assert_eq!(encoded.row_meaning(), RowMeaning::EncoderChannel);
            let projected = run_parallel_reservoirs(&encoded, &configs).unwrap();
            assert_eq!(projected.rows(), 120);
            let mut fv = bin_spike_counts(&projected, 1).unwrap();
            fv.label = (window.label - 1) as usize;
            fv
        })
        .collect();

    let train: Vec<FeatureVector> = fold.train.iter().map(|&w| features[w].clone()).collect();
    let (model, loss) = train_delta_softmax(
        &train,
        &DeltaTrainConfig {
            n_classes: 2,
            epochs: 40,
            alpha: 0.005,
            batch: 1,
            seed: 5,
        },
    )
    .unwrap();
    assert!(loss.last().unwrap() < &loss[0]);

    let predictions: Vec<usize> = fold
        .test
        .iter()
        .map(|&w| model.predict(&features[w].to_f64()).unwrap())
        .collect();
    let truths: Vec<usize> = fold.test.iter().map(|&w| features[w].label).collect();
    let report = compute_metrics(&predictions, &truths, 2).unwrap();
    assert!(
        report.accuracy >= 95.0,
        "two trivially distinct waves should classify: {:.1}%",
        report.accuracy
    );
}
