//! Session metrics from published overall accuracies and from raw
//! (true, predicted) pairs.

use std::collections::BTreeMap;

use fscil::metrics::{aggregate, session_metrics, MetricsReport, SessionMetrics, SessionResult};

const ROWS: [(&str, [f64; 9]); 2] = [
    ("Ours", [86.22, 77.89, 74.36, 70.51, 68.14, 65.35, 62.84, 61.20, 59.88]),
    ("CEC", [72.00, 66.83, 62.97, 59.43, 56.70, 53.73, 51.19, 49.24, 47.63]),
];

pub fn run() -> fscil::Result<(Vec<(&'static str, MetricsReport)>, MetricsReport)> {
    let mut published = Vec::new();
    for (name, row) in ROWS {
        let sessions: Vec<SessionMetrics> = row
            .iter()
            .enumerate()
            .map(|(t, a)| SessionMetrics::overall_only(t, a / 100.0))
            .collect();
        published.push((name, aggregate(&sessions)?));
    }

    // Two base classes, then one new class per session.
    let arrivals = BTreeMap::from([(0, 0), (1, 0), (2, 1), (3, 2)]);
    let pairs: [&[(u32, u32)]; 3] = [
        &[(0, 0), (0, 0), (1, 1), (1, 0)],
        &[(0, 0), (0, 0), (1, 1), (1, 1), (2, 2), (2, 0)],
        &[(0, 0), (0, 2), (1, 1), (1, 1), (2, 2), (2, 3), (3, 3), (3, 3)],
    ];
    let sessions = pairs
        .iter()
        .enumerate()
        .map(|(t, p)| {
            session_metrics(&SessionResult {
                session: t,
                pairs: p.to_vec(),
                class_session: arrivals.clone(),
            })
        })
        .collect::<fscil::Result<Vec<_>>>()?;
    Ok((published, aggregate(&sessions)?))
}

fn main() -> fscil::Result<()> {
    let (published, stream) = run()?;
    for (name, r) in published {
        println!("{name:5} avg {:.2}  PD {:.2}", 100.0 * r.averages.overall, 100.0 * r.pd);
    }
    let fmt = |v: Option<f64>| v.map_or("-".into(), |x| format!("{x:.3}"));
    println!(
        "stream: avg {:.3}  Base/Inc {}  CInc/PInc {}  BICP {}",
        stream.averages.overall,
        fmt(stream.base_inc),
        fmt(stream.cinc_pinc),
        fmt(stream.bicp)
    );
    stream.write_csv(std::io::stdout())?;
    Ok(())
}
