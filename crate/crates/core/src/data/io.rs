//! FSE1 binary and CSV embedding formats.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! "FSE1" | u32 version=1 | u32 dim | u32 class_count | u64 record_count | u32 flags
//! record_count × [u32 class_id | u8 split | dim × f32 feature | (flags & 1) dim × f32 transformed]
//! ```
//!
//! Features are held as `f64` in memory and narrowed to `f32` on write.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::{EmbeddingDataset, Record, Split};
use crate::error::{Error, Result};
use crate::vector::FeatureVector;

pub const MAGIC: &[u8; 4] = b"FSE1";
pub const VERSION: u32 = 1;
pub const FLAG_TRANSFORMED: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Binary,
    Csv,
}

impl Format {
    /// `.csv` selects CSV; everything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Binary,
        }
    }
}

pub fn load_embeddings(path: impl AsRef<Path>, format: Format) -> Result<EmbeddingDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    match format {
        Format::Binary => read_binary(reader),
        Format::Csv => read_csv(reader),
    }
}

pub fn save_embeddings(ds: &EmbeddingDataset, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    match format {
        Format::Binary => write_binary(ds, &mut writer),
        Format::Csv => write_csv(ds, &mut writer),
    }?;
    writer.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn write_header<W: Write>(
    w: &mut W,
    version: u32,
    dim: usize,
    class_count: u32,
    record_count: usize,
    flags: u32,
) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&version.to_le_bytes())?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    w.write_all(&class_count.to_le_bytes())?;
    w.write_all(&(record_count as u64).to_le_bytes())?;
    w.write_all(&flags.to_le_bytes())
}

pub(crate) fn write_records<W: Write>(ds: &EmbeddingDataset, w: &mut W) -> std::io::Result<()> {
    for r in ds.records() {
        w.write_all(&r.class_id.to_le_bytes())?;
        w.write_all(&[match r.split {
            Split::Train => 0u8,
            Split::Test => 1u8,
        }])?;
        write_f32s(w, &r.feature)?;
        if let Some(t) = &r.transformed {
            write_f32s(w, t)?;
        }
    }
    Ok(())
}

fn write_f32s<W: Write>(w: &mut W, v: &FeatureVector) -> std::io::Result<()> {
    for &x in v.as_slice() {
        w.write_all(&(x as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn write_binary<W: Write>(ds: &EmbeddingDataset, w: &mut W) -> Result<()> {
    let flags = if ds.has_transformed() { FLAG_TRANSFORMED } else { 0 };
    let io = |e| Error::Format(format!("write failed: {e}"));
    write_header(w, VERSION, ds.dim(), ds.class_count(), ds.len(), flags).map_err(io)?;
    write_records(ds, w).map_err(io)
}

/// Little-endian cursor that turns short reads into format errors.
pub(crate) struct LeReader<R> {
    inner: R,
}

impl<R: Read> LeReader<R> {
    pub(crate) fn new(inner: R) -> Self {
        Self { inner }
    }

    pub(crate) fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::Format(format!("unexpected end of data reading {what}")))?;
        Ok(buf)
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.bytes::<1>(what)?[0])
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(what)?))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(what)?))
    }

    pub(crate) fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes(what)?))
    }

    pub(crate) fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(what)?))
    }

    pub(crate) fn expect_eof(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::Format("trailing bytes after last record".into())),
            Err(e) => Err(Error::Format(format!("read failed: {e}"))),
        }
    }
}

pub(crate) struct Header {
    pub version: u32,
    pub dim: usize,
    pub class_count: u32,
    pub record_count: u64,
    pub flags: u32,
}

pub(crate) fn read_header<R: Read>(r: &mut LeReader<R>) -> Result<Header> {
    let magic: [u8; 4] = r.bytes("magic")?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = r.u32("version")?;
    let dim = r.u32("dim")? as usize;
    if dim == 0 {
        return Err(Error::Format("dim must be positive".into()));
    }
    let class_count = r.u32("class_count")?;
    let record_count = r.u64("record_count")?;
    let flags = r.u32("flags")?;
    if flags & !FLAG_TRANSFORMED != 0 {
        return Err(Error::Format(format!("unknown flags {flags:#x}")));
    }
    Ok(Header {
        version,
        dim,
        class_count,
        record_count,
        flags,
    })
}

pub(crate) fn read_records<R: Read>(r: &mut LeReader<R>, header: &Header) -> Result<EmbeddingDataset> {
    let dual = header.flags & FLAG_TRANSFORMED != 0;
    let mut records = Vec::with_capacity(header.record_count.min(1 << 20) as usize);
    for i in 0..header.record_count {
        let class_id = r.u32("class_id")?;
        if class_id >= header.class_count {
            return Err(Error::Format(format!(
                "record {i}: class id {class_id} >= class_count {}",
                header.class_count
            )));
        }
        let split = match r.u8("split")? {
            0 => Split::Train,
            1 => Split::Test,
            s => return Err(Error::Format(format!("record {i}: bad split byte {s}"))),
        };
        let feature = read_f32s(r, header.dim)?;
        let transformed = if dual { Some(read_f32s(r, header.dim)?) } else { None };
        records.push(Record {
            class_id,
            split,
            feature,
            transformed,
        });
    }
    let ds = EmbeddingDataset::new(header.dim, records)?;
    if ds.class_count() != header.class_count {
        // Ids are all below the header count, so a shortfall is a gap.
        return Err(Error::LabelGap {
            missing: ds.class_count(),
            max: header.class_count - 1,
        });
    }
    Ok(ds)
}

fn read_f32s<R: Read>(r: &mut LeReader<R>, dim: usize) -> Result<FeatureVector> {
    let mut v = Vec::with_capacity(dim);
    for _ in 0..dim {
        v.push(f64::from(r.f32("feature")?));
    }
    FeatureVector::new(v)
}

pub fn read_binary<R: Read>(reader: R) -> Result<EmbeddingDataset> {
    let mut r = LeReader::new(reader);
    let header = read_header(&mut r)?;
    if header.version != VERSION {
        return Err(Error::Format(format!(
            "unsupported version {} (expected {VERSION})",
            header.version
        )));
    }
    let ds = read_records(&mut r, &header)?;
    r.expect_eof()?;
    Ok(ds)
}

pub fn write_csv<W: Write>(ds: &EmbeddingDataset, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let d = ds.dim();
    let mut header = vec!["class_id".to_string(), "split".to_string()];
    header.extend((0..d).map(|i| format!("f{i}")));
    if ds.has_transformed() {
        header.extend((0..d).map(|i| format!("t{i}")));
    }
    out.write_record(&header)?;
    for r in ds.records() {
        let mut row = vec![r.class_id.to_string(), r.split.as_str().to_string()];
        row.extend(r.feature.as_slice().iter().map(|x| x.to_string()));
        if let Some(t) = &r.transformed {
            row.extend(t.as_slice().iter().map(|x| x.to_string()));
        }
        out.write_record(&row)?;
    }
    out.flush().map_err(|e| Error::Format(format!("write failed: {e}")))
}

pub fn read_csv<R: Read>(reader: R) -> Result<EmbeddingDataset> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 3 || &header[0] != "class_id" || &header[1] != "split" {
        return Err(Error::Format("CSV header must start with class_id,split,f0".into()));
    }
    let feature_cols = header.iter().skip(2).take_while(|h| h.starts_with('f')).count();
    let transformed_cols = header.len() - 2 - feature_cols;
    for (i, name) in header.iter().skip(2).enumerate() {
        let expected = if i < feature_cols {
            format!("f{i}")
        } else {
            format!("t{}", i - feature_cols)
        };
        if name != expected {
            return Err(Error::Format(format!("unexpected CSV column {name:?}, expected {expected:?}")));
        }
    }
    if transformed_cols != 0 && transformed_cols != feature_cols {
        return Err(Error::Format("transformed columns must match feature columns".into()));
    }
    let dim = feature_cols;
    let mut records = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        if row.len() != header.len() {
            return Err(Error::Format(format!(
                "row {}: {} fields, header has {}",
                line + 1,
                row.len(),
                header.len()
            )));
        }
        let class_id: u32 = row[0]
            .parse()
            .map_err(|_| Error::Format(format!("row {}: bad class id {:?}", line + 1, &row[0])))?;
        let split = match &row[1] {
            "train" => Split::Train,
            "test" => Split::Test,
            s => return Err(Error::Format(format!("row {}: bad split {s:?}", line + 1))),
        };
        let parse = |cells: &[&str]| -> Result<FeatureVector> {
            let v = cells
                .iter()
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Format(format!("row {}: bad number {c:?}", line + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            FeatureVector::new(v)
        };
        let cells: Vec<&str> = row.iter().skip(2).collect();
        let feature = parse(&cells[..dim])?;
        let transformed = if transformed_cols > 0 {
            Some(parse(&cells[dim..])?)
        } else {
            None
        };
        records.push(Record {
            class_id,
            split,
            feature,
            transformed,
        });
    }
    EmbeddingDataset::new(dim, records)
}
