//! Feature-space engine for few-shot class-incremental learning.
//!
//! The crate covers the whole evaluation path at desk scale:
//!
//! - [`data`]: embedding datasets, the `FSE1` binary format, N-way K-shot
//!   session protocols and a synthetic cluster generator;
//! - [`proto`] and [`gmm`]: prototype and diagonal Gaussian-mixture
//!   classifier banks over dual (original, transformed) features;
//! - [`inference`]: nearest-class-mean and two-stage dual-feature
//!   classification;
//! - [`selfopt`]: resistance, calibration and labeled absorption;
//! - [`stim`]: a small ReLU extractor with a selection head, trained with
//!   margin cross-entropy on intra-class and fused inter-class targets;
//! - [`metrics`]: session accuracy families, Base/Inc, CInc/PInc, BICP, PD;
//! - [`pipeline`]: the session loop and the file-level commands;
//! - [`bench`]: the bundled synthetic benchmark.
//!
//! ```
//! use fscil::data::{synth_generate, ProtocolConfig, SynthSpec};
//! use fscil::pipeline::{run_session_stream, RunConfig};
//!
//! let ds = synth_generate(&SynthSpec { classes: 6, dim: 8, ..SynthSpec::default() }).unwrap();
//! let protocol = ProtocolConfig {
//!     base_class_count: 4, sessions: 2, ways: 1, shots: 5, seed: 0, revisit_shots: 0,
//! };
//! let out = run_session_stream(&RunConfig::baseline(protocol), Some(&ds), None).unwrap();
//! assert_eq!(out.report.sessions.len(), 3);
//! ```

pub mod bench;
pub mod data;
pub mod error;
pub mod gmm;
pub mod inference;
pub mod metrics;
pub mod pipeline;
pub mod proto;
pub mod seed;
pub mod selfopt;
pub mod snapshot;
pub mod stim;
pub mod vector;

pub use error::{Error, Result};
pub use vector::{cosine, cosine_set, fmo, DualFeature, FeatureVector};
