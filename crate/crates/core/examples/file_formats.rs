//! Write and read the embedding formats, a prediction dump and a bank
//! snapshot in a temporary directory.

use std::path::PathBuf;

use fscil::data::{load_embeddings, save_embeddings, synth_generate, Format, SynthSpec};
use fscil::inference::{read_predictions, write_predictions, Prediction, Stage};
use fscil::proto::{build_prototypes, group_by_class, PrototypeBank};
use fscil::snapshot::{load_snapshot, save_snapshot};

pub fn run() -> fscil::Result<Vec<(PathBuf, u64)>> {
    let dir = std::env::temp_dir().join(format!("fscil-formats-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| fscil::Error::io(&dir, e))?;
    let ds = synth_generate(&SynthSpec {
        classes: 4,
        dim: 6,
        train_per_class: 5,
        test_per_class: 2,
        ..SynthSpec::default()
    })?;

    let bin = dir.join("features.fse");
    let csv = dir.join("features.csv");
    save_embeddings(&ds, &bin, Format::Binary)?;
    let from_bin = load_embeddings(&bin, Format::from_path(&bin))?;
    save_embeddings(&from_bin, &csv, Format::Csv)?;
    assert_eq!(load_embeddings(&csv, Format::Csv)?, from_bin);

    let train: Vec<usize> = (0..ds.len()).filter(|&i| ds.records()[i].split == fscil::data::Split::Train).collect();
    let mut bank = PrototypeBank::new(ds.dim());
    bank.extend(build_prototypes(&group_by_class(&ds, &train)?)?, 0)?;
    let snap = dir.join("bank.snap");
    save_snapshot(&snap, &bank, None)?;
    assert_eq!(load_snapshot(&snap)?.0, bank);

    let preds = dir.join("predictions_session_0.csv");
    let dump = vec![Prediction {
        query_index: 0,
        true_label: 1,
        coarse_label: 1,
        final_label: 1,
        stage: Stage::CoarseOnly,
    }];
    let file = std::fs::File::create(&preds).map_err(|e| fscil::Error::io(&preds, e))?;
    write_predictions(&dump, file)?;
    let file = std::fs::File::open(&preds).map_err(|e| fscil::Error::io(&preds, e))?;
    assert_eq!(read_predictions(file)?, dump);

    let mut sizes = Vec::new();
    for p in [bin, csv, snap, preds] {
        let len = std::fs::metadata(&p).map_err(|e| fscil::Error::io(&p, e))?.len();
        sizes.push((p, len));
    }
    std::fs::remove_dir_all(&dir).map_err(|e| fscil::Error::io(&dir, e))?;
    Ok(sizes)
}

fn main() -> fscil::Result<()> {
    for (path, len) in run()? {
        println!("{:>6} bytes  {}", len, path.file_name().unwrap().to_string_lossy());
    }
    Ok(())
}
