//! Nearest-class-mean over a synthetic session stream.
//!
//! Builds base prototypes, then adds five novel classes per session from
//! five shots each, and prints the per-session accuracy families.

use fscil::data::{synth_generate, ProtocolConfig, SynthSpec};
use fscil::metrics::MetricsReport;
use fscil::pipeline::{run_session_stream, RunConfig};

pub fn run() -> fscil::Result<MetricsReport> {
    let ds = synth_generate(&SynthSpec {
        classes: 20,
        dim: 16,
        train_per_class: 20,
        test_per_class: 20,
        spread: 0.3,
        separation: 1.0,
        seed: 7,
    })?;
    let protocol = ProtocolConfig {
        base_class_count: 10,
        sessions: 2,
        ways: 5,
        shots: 5,
        seed: 7,
        revisit_shots: 0,
    };
    let out = run_session_stream(&RunConfig::baseline(protocol), Some(&ds), None)?;
    Ok(out.report)
}

fn main() -> fscil::Result<()> {
    let report = run()?;
    for s in &report.sessions {
        println!(
            "session {}: overall {:.3}  base {:?}  inc {:?}",
            s.session, s.overall, s.base, s.inc
        );
    }
    println!("average {:.3}, PD {:.3}", report.averages.overall, report.pd);
    Ok(())
}
