//! Automatic sleep staging from polysomnography recordings.
//!
//! The pipeline runs end-to-end from raw EDF files to a cross-validated
//! accuracy report:
//!
//! 1. [`edf`] / [`hypnogram`] — parse EDF signal files and plain-text stage
//!    annotations into validated [`recording::Recording`]s.
//! 2. [`dsp`] — condition each channel (50 Hz notch, band-pass, decimation
//!    to 64 Hz), all zero-phase.
//! 3. [`features`] — 28 per-second features (band powers, entropy, kurtosis,
//!    spectral means, EOG correlation, EMG median, EEG fractal exponent),
//!    nonlinear-transformed and z-scored with training-set statistics.
//! 4. [`sae`] — a sparse auto-encoder over feature frames, optionally
//!    conditioned on past frames, pre-trained unsupervised with momentum SGD.
//! 5. [`attention`] — per-class reconstruction probabilities that focus the
//!    auto-encoder on the inputs that matter for each sleep stage, either
//!    fixed from a t-test or learned during training.
//! 6. [`classify`] — softmax fine-tuning on the encoder and per-second
//!    prediction.
//! 7. [`hmm`] — hidden Markov smoothing of the predicted stage sequence.
//! 8. [`harness`] — recording-level splits, 5-fold cross-validation, random
//!    hyperparameter search, and report generation.
//!
//! Every step is usable on its own; see the `examples/` directory for one
//! runnable example per capability and the `sleepstage` binary for batch
//! operation.

pub mod attention;
pub mod classify;
pub mod config;
pub mod dsp;
pub mod edf;
pub mod features;
pub mod harness;
pub mod hmm;
pub mod hypnogram;
pub mod optim;
pub mod plot;
pub mod recording;
pub mod report;
pub mod sae;
pub mod synth;

pub use hypnogram::StageLabel;
pub use recording::Recording;

/// Number of sleep stages (W, S1, S2, SWS, REM).
pub const STAGE_COUNT: usize = 5;
