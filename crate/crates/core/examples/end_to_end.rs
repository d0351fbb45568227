//! The bundled synthetic benchmark: plain cross-entropy with NCM against
//! stimulated training with the full dual, resistance and calibration run.
//!
//! Pass a seed as the first argument (default 42).

use fscil::bench::{run_benchmark, BenchmarkOutcome, BenchmarkSpec};

fn run(seed: u64) -> fscil::Result<BenchmarkOutcome> {
    run_benchmark(&BenchmarkSpec::standard(seed))
}

fn main() -> fscil::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    let out = run(seed)?;
    let f = |v: Option<f64>| v.map_or("-".into(), |x| format!("{x:.4}"));
    println!("base-class FMO      {:.3} -> {:.3}", out.baseline_fmo, out.stimulated_fmo);
    for (name, r) in [("baseline", &out.baseline), ("full", &out.full)] {
        println!(
            "{name:9} overall {:.4}  base {}  inc {}  base/inc {}  pd {:.4}",
            r.averages.overall,
            f(r.averages.base),
            f(r.averages.inc),
            f(r.base_inc),
            r.pd
        );
    }
    Ok(())
}
