//! The bundled synthetic benchmark: a plain cross-entropy extractor with
//! NCM on `g` against the stimulated extractor with the full dual,
//! resistance and calibration stream.

use serde::{Deserialize, Serialize};

use crate::data::{synth_generate, ProtocolConfig, SynthSpec};
use crate::error::Result;
use crate::metrics::{fmo_report, MetricsReport};
use crate::pipeline::{base_training_set, run_session_stream, RunConfig};
use crate::stim::{export_features, train, Layout, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub data: SynthSpec,
    pub protocol: ProtocolConfig,
    pub layout: Layout,
    pub epochs: usize,
    pub seed: u64,
}

impl BenchmarkSpec {
    /// 40 classes of 60-dim inputs, 20 base classes, 4 sessions of 5-way 5-shot.
    pub fn standard(seed: u64) -> Self {
        Self {
            data: SynthSpec {
                classes: 40,
                dim: 60,
                train_per_class: 30,
                test_per_class: 60,
                spread: 0.15,
                separation: 1.0,
                seed,
            },
            protocol: ProtocolConfig {
                base_class_count: 20,
                sessions: 4,
                ways: 5,
                shots: 5,
                seed,
                revisit_shots: 0,
            },
            layout: Layout {
                hidden: 64,
                feature_dim: 32,
                use_sr: true,
                sr_hidden: 64,
                sr_out: 32,
            },
            epochs: 60,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkOutcome {
    /// Mean base-class FMO of `g` under plain cross-entropy training.
    pub baseline_fmo: f64,
    /// The same after intra and inter stimulation.
    pub stimulated_fmo: f64,
    pub baseline: MetricsReport,
    pub full: MetricsReport,
}

pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<BenchmarkOutcome> {
    let raw = synth_generate(&spec.data)?;
    let base = spec.protocol.base_class_count as u32;
    let samples = base_training_set(&raw, base);

    let plain_cfg = TrainConfig {
        epochs: spec.epochs,
        seed: spec.seed,
        layout: Layout {
            use_sr: false,
            ..spec.layout.clone()
        },
        ..TrainConfig::plain()
    };
    let stim_cfg = TrainConfig {
        epochs: spec.epochs,
        seed: spec.seed,
        layout: spec.layout.clone(),
        ..TrainConfig::default()
    };
    let (plain, _) = train(&samples, &plain_cfg)?;
    let (stim, _) = train(&samples, &stim_cfg)?;
    let (plain_g, _) = export_features(&plain, &raw)?;
    let (g, g_tilde) = export_features(&stim, &raw)?;

    let is_base = |r: &crate::data::Record| r.class_id < base;
    let baseline = run_session_stream(&RunConfig::baseline(spec.protocol.clone()), Some(&plain_g), None)?;
    let full = run_session_stream(&RunConfig::full(spec.protocol.clone()), Some(&g), Some(&g_tilde))?;
    Ok(BenchmarkOutcome {
        baseline_fmo: fmo_report(&plain_g, is_base)?,
        stimulated_fmo: fmo_report(&g, is_base)?,
        baseline: baseline.report,
        full: full.report,
    })
}
