//! Train the toy extractor with intra-class targets, fused inter-class
//! virtual classes and the selection head, then compare base-class FMO
//! against plain cross-entropy training on the same data.

use fscil::bench::BenchmarkSpec;
use fscil::data::synth_generate;
use fscil::metrics::fmo_report;
use fscil::pipeline::base_training_set;
use fscil::stim::{export_features, train, Layout, TrainConfig, TrainLog};

fn run() -> fscil::Result<(f64, f64, TrainLog)> {
    let spec = BenchmarkSpec::standard(42);
    let base = spec.protocol.base_class_count as u32;
    let raw = synth_generate(&spec.data)?;
    let samples = base_training_set(&raw, base);

    let plain = TrainConfig {
        epochs: spec.epochs,
        seed: spec.seed,
        layout: Layout {
            use_sr: false,
            ..spec.layout.clone()
        },
        ..TrainConfig::plain()
    };
    let stimulated = TrainConfig {
        epochs: spec.epochs,
        seed: spec.seed,
        layout: spec.layout.clone(),
        ..TrainConfig::default()
    };
    let (plain_model, _) = train(&samples, &plain)?;
    let (model, log) = train(&samples, &stimulated)?;

    let is_base = |r: &fscil::data::Record| r.class_id < base;
    let plain_fmo = fmo_report(&export_features(&plain_model, &raw)?.0, is_base)?;
    let stim_fmo = fmo_report(&export_features(&model, &raw)?.0, is_base)?;
    Ok((plain_fmo, stim_fmo, log))
}

fn main() -> fscil::Result<()> {
    let (plain, stim, log) = run()?;
    for e in log.epochs.iter().step_by(10) {
        println!("epoch {:2}: loss {:.4} train acc {:.3}", e.epoch, e.loss, e.train_acc);
    }
    println!("mean base-class FMO: plain {plain:.3}, stimulated {stim:.3}");
    Ok(())
}
