//! Sequence containers, manifests, preprocessing and windowing.

pub mod container;
pub mod dataset;
pub mod manifest;
pub mod preprocess;
pub mod windows;

pub use container::{
    decode_container, encode_container, load_container, save_container, UltrasoundSequence,
};
pub use dataset::{
    load_split, normalize_split, prepare, prepare_split, resolve_entry, ExampleSource,
    InMemoryExamples, PipelineConfig, PreparedData, PreparedSplit,
};
pub use manifest::{DatasetManifest, Split};
pub use preprocess::{
    minmax_normalize, resample_scanlines, MinMax, NormalizationStats, TargetScaler,
};
pub use windows::{make_windows, WindowMode, WindowedExample};
