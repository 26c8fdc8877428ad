use std::fs;
use std::path::Path;

use proptest::prelude::*;

use ssi3d::data::{
    load_container, prepare, save_container, DatasetManifest, NormalizationStats, PipelineConfig,
    PreparedSplit, Split,
};
use ssi3d::model::{ModelSpec, Scale, TemporalMode, N_TARGETS};
use ssi3d::synth::{generate_corpus, SynthConfig};

fn small(seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        n_train: 3,
        n_dev: 2,
        n_test: 2,
        frames: 30,
        ..SynthConfig::tiny()
    }
}

fn tiny_pipeline() -> PipelineConfig {
    PipelineConfig::for_spec(&ModelSpec::cnn2d(Scale::Tiny))
}

fn column_moments(split: &PreparedSplit, d: usize) -> (f64, f64) {
    let col: Vec<f64> = split
        .sequences()
        .iter()
        .flat_map(|s| s.targets.data().chunks(N_TARGETS).map(move |r| r[d] as f64))
        .collect();
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    (
        mean,
        col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n,
    )
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn train_split_is_exactly_normalized(seed in any::<u64>(), noise in 0.0f64..0.2, vw in 0.0f64..1.0) {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = SynthConfig { noise_std: noise, velocity_weight: vw, ..small(seed) };
        let corpus = generate_corpus(&cfg, tmp.path()).unwrap();
        let data = prepare(&corpus.manifest_path, &tiny_pipeline(), None).unwrap();
        let px = data.train.sequences().iter().flat_map(|s| s.frames.data().iter().copied());
        let (lo, hi) = px.fold((f32::INFINITY, f32::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        prop_assert_eq!((lo, hi), (-1.0, 1.0));
        for d in 0..N_TARGETS {
            let (mean, var) = column_moments(&data.train, d);
            prop_assert!(mean.abs() < 1e-6 && (var - 1.0).abs() < 1e-6, "dim {} mean {} var {}", d, mean, var);
        }
    }
}

fn tamper(path: &Path) {
    let mut seq = load_container(path).unwrap();
    seq.frames = seq.frames.map(|v| 5.0 * v + 3.0);
    seq.targets = seq.targets.map(|v| -4.0 * v + 10.0);
    save_container(&seq, path).unwrap();
}

#[test]
fn statistics_ignore_dev_and_test_data() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = generate_corpus(&small(21), tmp.path()).unwrap();
    let before = prepare(&corpus.manifest_path, &tiny_pipeline(), None).unwrap();
    let manifest = DatasetManifest::load(&corpus.manifest_path).unwrap();
    for split in [Split::Dev, Split::Test] {
        for p in manifest.paths(split) {
            tamper(&tmp.path().join(p));
        }
    }
    let after = prepare(&corpus.manifest_path, &tiny_pipeline(), None).unwrap();
    assert_eq!(before.stats, after.stats);
    assert_eq!(before.train.sequences(), after.train.sequences());
    assert_ne!(before.dev.sequences(), after.dev.sequences());
}

#[test]
fn given_stats_are_applied_unchanged() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = generate_corpus(&small(4), tmp.path()).unwrap();
    let fitted = prepare(&corpus.manifest_path, &tiny_pipeline(), None)
        .unwrap()
        .stats;
    let path = tmp.path().join("stats.txt");
    fitted.save(&path).unwrap();
    let reloaded = NormalizationStats::load(&path).unwrap();
    assert_eq!(reloaded, fitted);
    let again = prepare(&corpus.manifest_path, &tiny_pipeline(), Some(reloaded)).unwrap();
    assert_eq!(again.stats, fitted);
}

#[test]
fn taller_frames_are_resampled_to_model_height() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        height: 64,
        ..small(8)
    };
    let corpus = generate_corpus(&cfg, tmp.path()).unwrap();
    let spec = ModelSpec::cnn3d(Scale::Tiny, 2, TemporalMode::Sampled).unwrap();
    let data = prepare(
        &corpus.manifest_path,
        &PipelineConfig::for_spec(&spec),
        None,
    )
    .unwrap();
    assert!(data
        .train
        .sequences()
        .iter()
        .all(|s| s.frames.shape() == [30, 32, 16, 1]));
    assert_eq!(
        ssi3d::data::ExampleSource::<f32>::input_shape(&data.train),
        [5, 32, 16, 1]
    );
}

#[test]
fn scan_line_mismatch_is_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        width: 20,
        ..small(8)
    };
    let corpus = generate_corpus(&cfg, tmp.path()).unwrap();
    let err = prepare(&corpus.manifest_path, &tiny_pipeline(), None).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn duplicate_sequence_ids_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = generate_corpus(&small(2), tmp.path()).unwrap();
    fs::copy(
        tmp.path().join("train_000.uds"),
        tmp.path().join("dev_000.uds"),
    )
    .unwrap();
    let err = prepare(&corpus.manifest_path, &tiny_pipeline(), None).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("train_000"), "{err}");
}
