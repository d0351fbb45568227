//! Accuracy families, imbalance ratios, BICP, PD and FMO diagnostics.
//!
//! Accuracies are per-sample averages in `[0, 1]`. A family with no test
//! samples in a session, or outside its session range (Inc from session 1,
//! PInc from session 2), is `None` rather than zero.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingDataset, Record};
use crate::error::{Error, Result};
use crate::inference::Prediction;
use crate::vector::fmo;

/// Predictions of one session together with the class arrival map.
#[derive(Clone, Debug)]
pub struct SessionResult {
    pub session: usize,
    /// `(true, predicted)` per test sample.
    pub pairs: Vec<(u32, u32)>,
    pub class_session: BTreeMap<u32, usize>,
}

impl SessionResult {
    pub fn from_predictions(session: usize, predictions: &[Prediction], class_session: BTreeMap<u32, usize>) -> Self {
        Self {
            session,
            pairs: predictions.iter().map(|p| (p.true_label, p.final_label)).collect(),
            class_session,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub session: usize,
    pub samples: usize,
    pub overall: f64,
    pub base: Option<f64>,
    pub inc: Option<f64>,
    pub cinc: Option<f64>,
    pub pinc: Option<f64>,
}

impl SessionMetrics {
    /// A session known only by its overall accuracy, e.g. a published table row.
    pub fn overall_only(session: usize, overall: f64) -> Self {
        Self {
            session,
            samples: 0,
            overall,
            base: None,
            inc: None,
            cinc: None,
            pinc: None,
        }
    }
}

#[derive(Clone, Copy, Default)]
struct Tally {
    correct: usize,
    total: usize,
}

impl Tally {
    fn add(&mut self, hit: bool) {
        self.total += 1;
        self.correct += usize::from(hit);
    }

    fn accuracy(self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

pub fn session_metrics(res: &SessionResult) -> Result<SessionMetrics> {
    if res.pairs.is_empty() {
        return Err(Error::EmptyResult);
    }
    let t = res.session;
    let (mut all, mut base, mut inc, mut cinc, mut pinc) =
        (Tally::default(), Tally::default(), Tally::default(), Tally::default(), Tally::default());
    for &(truth, predicted) in &res.pairs {
        let s = *res.class_session.get(&truth).ok_or(Error::UnknownClass(truth))?;
        if s > t {
            return Err(Error::UnknownClass(truth));
        }
        let hit = truth == predicted;
        all.add(hit);
        if s == 0 {
            base.add(hit);
        } else {
            inc.add(hit);
            if s == t {
                cinc.add(hit);
            } else {
                pinc.add(hit);
            }
        }
    }
    Ok(SessionMetrics {
        session: t,
        samples: all.total,
        overall: all.accuracy().expect("nonempty"),
        base: base.accuracy(),
        inc: inc.accuracy(),
        cinc: cinc.accuracy(),
        pinc: pinc.accuracy(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub overall: f64,
    pub base: Option<f64>,
    pub inc: Option<f64>,
    pub cinc: Option<f64>,
    pub pinc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sessions: Vec<SessionMetrics>,
    pub averages: Averages,
    pub base_inc: Option<f64>,
    pub cinc_pinc: Option<f64>,
    pub bicp: Option<f64>,
    pub pd: f64,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

fn ratio(num: Option<f64>, den: Option<f64>) -> Option<f64> {
    match (num, den) {
        (Some(n), Some(d)) if d > 0.0 => Some(n / d),
        _ => None,
    }
}

/// Combine sessions `0..=T`, which must be present in order.
pub fn aggregate(sessions: &[SessionMetrics]) -> Result<MetricsReport> {
    let (first, last) = match (sessions.first(), sessions.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::EmptyResult),
    };
    for (t, s) in sessions.iter().enumerate() {
        if s.session != t {
            return Err(Error::MissingSession(t));
        }
    }
    let from = |t0: usize| sessions.iter().filter(move |s| s.session >= t0);
    let averages = Averages {
        overall: sessions.iter().map(|s| s.overall).sum::<f64>() / sessions.len() as f64,
        base: mean_defined(sessions.iter().map(|s| s.base)),
        inc: mean_defined(sessions.iter().map(|s| s.inc)),
        cinc: mean_defined(sessions.iter().map(|s| s.cinc)),
        pinc: mean_defined(sessions.iter().map(|s| s.pinc)),
    };
    let base_inc = ratio(
        mean_defined(from(1).map(|s| s.base)),
        mean_defined(from(1).map(|s| s.inc)),
    );
    let cinc_pinc = ratio(
        mean_defined(from(2).map(|s| s.cinc)),
        mean_defined(from(2).map(|s| s.pinc)),
    );
    let bicp = match (base_inc, cinc_pinc) {
        (Some(a), Some(b)) => Some((a + b) / 2.0),
        _ => None,
    };
    Ok(MetricsReport {
        sessions: sessions.to_vec(),
        averages,
        base_inc,
        cinc_pinc,
        bicp,
        pd: first.overall - last.overall,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsReport {
    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    /// One row per session; undefined families are empty cells.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["session", "samples", "overall", "base", "inc", "cinc", "pinc"])?;
        for s in &self.sessions {
            out.write_record([
                s.session.to_string(),
                s.samples.to_string(),
                s.overall.to_string(),
                cell(s.base),
                cell(s.inc),
                cell(s.cinc),
                cell(s.pinc),
            ])?;
        }
        out.flush().map_err(|e| Error::Format(format!("write failed: {e}")))
    }

    /// Whitespace-separated accuracy-vs-session table, `NaN` where undefined.
    pub fn write_gnuplot<W: Write>(&self, mut w: W) -> Result<()> {
        let f = |v: Option<f64>| v.map_or_else(|| "NaN".to_string(), |x| format!("{x:.6}"));
        let mut text = String::from("# session overall base inc cinc pinc\n");
        for s in &self.sessions {
            text.push_str(&format!(
                "{} {:.6} {} {} {} {}\n",
                s.session,
                s.overall,
                f(s.base),
                f(s.inc),
                f(s.cinc),
                f(s.pinc)
            ));
        }
        w.write_all(text.as_bytes())
            .map_err(|e| Error::Format(format!("write failed: {e}")))
    }
}

/// Mean FMO of the original channel over the records selected by `filter`.
pub fn fmo_report(ds: &EmbeddingDataset, filter: impl Fn(&Record) -> bool) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in ds.records().iter().filter(|r| filter(r)) {
        sum += fmo(&r.feature)?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptySelection);
    }
    Ok(sum / n as f64)
}
