//! Pause/resume snapshots of classifier banks.
//!
//! A snapshot reuses the embedding file header with version 2 and stores
//! values as `f64` so a resumed stream continues bit-exactly:
//!
//! ```text
//! header      "FSE1" | u32 2 | u32 dim | u32 class_count | u64 record_count | u32 flags=1
//! records     u32 class | u32 session | u64 source_count | dim×f64 p1 | dim×f64 p2
//! resistance  u32 count, then u32 class | u8 j | dim×f64 Δ
//! mixtures    u8 present; if 1: u32 dim | u32 count, then
//!             u32 class | u8 j | u32 session | u32 M | M×f64 π | M·dim×f64 μ | M·dim×f64 Σ | dim×f64 prior
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::io::{read_header, write_header, LeReader, FLAG_TRANSFORMED};
use crate::error::{Error, Result};
use crate::gmm::{GmmBank, GmmParams};
use crate::proto::{DualPrototype, PrototypeBank};
use crate::vector::{Component, FeatureVector};

pub const SNAPSHOT_VERSION: u32 = 2;

fn put_f64s(buf: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

fn component_byte(j: Component) -> u8 {
    j.index() as u8
}

fn component_of(b: u8) -> Result<Component> {
    match b {
        0 => Ok(Component::Original),
        1 => Ok(Component::Transformed),
        other => Err(Error::Format(format!("bad component byte {other}"))),
    }
}

pub fn write_snapshot<W: Write>(bank: &PrototypeBank, gmm: Option<&GmmBank>, mut w: W) -> Result<()> {
    let mut buf = Vec::new();
    write_header(&mut buf, SNAPSHOT_VERSION, bank.dim(), bank.len() as u32, bank.len(), FLAG_TRANSFORMED)
        .expect("writing to memory");
    for p in bank.iter() {
        buf.extend_from_slice(&p.class_id.to_le_bytes());
        let session = bank.session_of(p.class_id).expect("bank invariant") as u32;
        buf.extend_from_slice(&session.to_le_bytes());
        buf.extend_from_slice(&(p.source_count as u64).to_le_bytes());
        put_f64s(&mut buf, p.p1.as_slice());
        put_f64s(&mut buf, p.p2.as_slice());
    }
    let deltas: Vec<_> = bank.resistance_entries().collect();
    buf.extend_from_slice(&(deltas.len() as u32).to_le_bytes());
    for (&(c, j), delta) in deltas {
        buf.extend_from_slice(&c.to_le_bytes());
        buf.push(component_byte(j));
        put_f64s(&mut buf, delta.as_slice());
    }
    match gmm {
        None => buf.push(0),
        Some(g) => {
            buf.push(1);
            buf.extend_from_slice(&(g.dim() as u32).to_le_bytes());
            let entries: Vec<_> = g.entries().collect();
            buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
            for (&(c, j), params) in entries {
                buf.extend_from_slice(&c.to_le_bytes());
                buf.push(component_byte(j));
                let session = g.session_of(c).expect("bank invariant") as u32;
                buf.extend_from_slice(&session.to_le_bytes());
                buf.extend_from_slice(&(params.components() as u32).to_le_bytes());
                put_f64s(&mut buf, &params.weights);
                for m in &params.means {
                    put_f64s(&mut buf, m.as_slice());
                }
                for v in &params.variances {
                    put_f64s(&mut buf, v.as_slice());
                }
                put_f64s(&mut buf, params.mean_prior.as_slice());
            }
        }
    }
    w.write_all(&buf)
        .map_err(|e| Error::Format(format!("write failed: {e}")))
}

fn read_vector<R: Read>(r: &mut LeReader<R>, dim: usize, what: &str) -> Result<FeatureVector> {
    let v = (0..dim).map(|_| r.f64(what)).collect::<Result<Vec<_>>>()?;
    FeatureVector::new(v)
}

pub fn read_snapshot<R: Read>(reader: R) -> Result<(PrototypeBank, Option<GmmBank>)> {
    let mut r = LeReader::new(reader);
    let header = read_header(&mut r)?;
    if header.version != SNAPSHOT_VERSION {
        return Err(Error::Format(format!(
            "not a bank snapshot: version {} (expected {SNAPSHOT_VERSION})",
            header.version
        )));
    }
    let dim = header.dim;
    let mut prototypes = Vec::new();
    for _ in 0..header.record_count {
        let class_id = r.u32("class_id")?;
        let session = r.u32("session")? as usize;
        let source_count = r.u64("source_count")? as usize;
        let p1 = read_vector(&mut r, dim, "p1")?;
        let p2 = read_vector(&mut r, dim, "p2")?;
        prototypes.push((
            DualPrototype {
                class_id,
                p1,
                p2,
                source_count,
            },
            session,
        ));
    }
    let mut resistance = Vec::new();
    for _ in 0..r.u32("resistance count")? {
        let c = r.u32("resistance class")?;
        let j = component_of(r.u8("resistance component")?)?;
        resistance.push(((c, j), read_vector(&mut r, dim, "resistance")?));
    }
    let bank = PrototypeBank::restore(dim, prototypes, resistance)?;

    let gmm = match r.u8("mixture flag")? {
        0 => None,
        1 => Some(read_gmm(&mut r)?),
        other => return Err(Error::Format(format!("bad mixture flag {other}"))),
    };
    r.expect_eof()?;
    Ok((bank, gmm))
}

fn read_gmm<R: Read>(r: &mut LeReader<R>) -> Result<GmmBank> {
    let dim = r.u32("mixture dim")? as usize;
    let count = r.u32("mixture count")?;
    if count % 2 != 0 {
        return Err(Error::Format("mixture entries must come in component pairs".into()));
    }
    let mut bank = GmmBank::new(dim);
    let mut pending: Option<(u32, usize, GmmParams)> = None;
    for _ in 0..count {
        let c = r.u32("mixture class")?;
        let j = component_of(r.u8("mixture component")?)?;
        let session = r.u32("mixture session")? as usize;
        let m = r.u32("mixture size")? as usize;
        if m == 0 {
            return Err(Error::Format("mixture with zero components".into()));
        }
        let weights = (0..m).map(|_| r.f64("weight")).collect::<Result<Vec<_>>>()?;
        let means = (0..m).map(|_| read_vector(r, dim, "mean")).collect::<Result<Vec<_>>>()?;
        let variances = (0..m).map(|_| read_vector(r, dim, "variance")).collect::<Result<Vec<_>>>()?;
        let mean_prior = read_vector(r, dim, "mean prior")?;
        let params = GmmParams {
            weights,
            means,
            variances,
            mean_prior,
        };
        match (pending.take(), j) {
            (None, Component::Original) => pending = Some((c, session, params)),
            (Some((pc, ps, first)), Component::Transformed) if pc == c && ps == session => {
                bank.insert(c, session, [first, params])?;
            }
            _ => return Err(Error::Format(format!("mixture entries for class {c} are out of order"))),
        }
    }
    Ok(bank)
}

pub fn save_snapshot(path: impl AsRef<Path>, bank: &PrototypeBank, gmm: Option<&GmmBank>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_snapshot(bank, gmm, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<(PrototypeBank, Option<GmmBank>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_snapshot(BufReader::new(file))
}
