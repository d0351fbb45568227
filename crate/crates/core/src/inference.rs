//! Nearest-class-mean and separately dual-feature classification.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::data::SessionStream;
use crate::error::{Error, Result};
use crate::proto::PrototypeBank;
use crate::vector::{cosine_set, DualFeature};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    CoarseOnly,
    Refined,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::CoarseOnly => "coarse_only",
            Stage::Refined => "refined",
        }
    }
}

/// Output of one classifier call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Decision {
    pub coarse_label: u32,
    pub final_label: u32,
    pub stage: Stage,
}

impl Decision {
    /// A single-stage decision.
    pub fn single(label: u32) -> Self {
        Self {
            coarse_label: label,
            final_label: label,
            stage: Stage::CoarseOnly,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub query_index: usize,
    pub true_label: u32,
    pub coarse_label: u32,
    pub final_label: u32,
    pub stage: Stage,
}

/// Argmax of `cosine_set(x, [P_{c,1}, P_{c,2}])`; ties go to the lowest id.
pub fn ncm_classify(x: &DualFeature, bank: &PrototypeBank) -> Result<u32> {
    let mut best: Option<(u32, f64)> = None;
    for p in bank.iter() {
        let s = cosine_set(x, &p.as_dual())?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((p.class_id, s));
        }
    }
    best.map(|(c, _)| c).ok_or(Error::EmptyBank)
}

/// Two-stage classification: a coarse label from the transferable bank `h`;
/// base-class hits are re-classified over every class of `h_tilde`.
pub fn dual_classify(
    x_transferable: &DualFeature,
    x_discriminative: &DualFeature,
    h: &PrototypeBank,
    h_tilde: &PrototypeBank,
) -> Result<Decision> {
    if !h.same_classes(h_tilde) {
        return Err(Error::BankMismatch);
    }
    let coarse = ncm_classify(x_transferable, h)?;
    refine(coarse, h.is_base(coarse), || ncm_classify(x_discriminative, h_tilde))
}

/// The branch shared by the prototype and mixture variants.
pub fn refine(coarse: u32, coarse_is_base: bool, second_stage: impl FnOnce() -> Result<u32>) -> Result<Decision> {
    if !coarse_is_base {
        return Ok(Decision::single(coarse));
    }
    Ok(Decision {
        coarse_label: coarse,
        final_label: second_stage()?,
        stage: Stage::Refined,
    })
}

/// Classify every record of session `t`'s cumulative test set, in order.
/// The classifier receives the record index.
pub fn evaluate_session<F>(stream: &SessionStream, t: usize, labels: &[u32], mut classify: F) -> Result<Vec<Prediction>>
where
    F: FnMut(usize) -> Result<Decision>,
{
    let session = stream.sessions.get(t).ok_or(Error::MissingSession(t))?;
    session
        .test
        .iter()
        .map(|&i| {
            let d = classify(i)?;
            Ok(Prediction {
                query_index: i,
                true_label: labels[i],
                coarse_label: d.coarse_label,
                final_label: d.final_label,
                stage: d.stage,
            })
        })
        .collect()
}

pub fn write_predictions<W: Write>(predictions: &[Prediction], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["query_index", "true", "coarse", "final", "stage"])?;
    for p in predictions {
        out.write_record([
            p.query_index.to_string(),
            p.true_label.to_string(),
            p.coarse_label.to_string(),
            p.final_label.to_string(),
            p.stage.as_str().to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::Format(format!("write failed: {e}")))
}

pub fn read_predictions<R: Read>(r: R) -> Result<Vec<Prediction>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["query_index", "true", "coarse", "final", "stage"] {
        return Err(Error::Format("prediction dump header must be query_index,true,coarse,final,stage".into()));
    }
    let mut out = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let num = |k: usize| -> Result<u64> {
            row[k]
                .parse()
                .map_err(|_| Error::Format(format!("row {}: bad integer {:?}", line + 1, &row[k])))
        };
        let stage = match &row[4] {
            "coarse_only" => Stage::CoarseOnly,
            "refined" => Stage::Refined,
            s => return Err(Error::Format(format!("row {}: bad stage {s:?}", line + 1))),
        };
        out.push(Prediction {
            query_index: num(0)? as usize,
            true_label: num(1)? as u32,
            coarse_label: num(2)? as u32,
            final_label: num(3)? as u32,
            stage,
        });
    }
    Ok(out)
}
