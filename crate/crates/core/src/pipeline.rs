//! Session-loop orchestration and the file-level commands behind the CLI.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    build_protocol, load_embeddings, save_embeddings, synth_generate, EmbeddingDataset, Format, ProtocolConfig,
    SessionStream, Split, SynthSpec,
};
use crate::error::{Error, Result};
use crate::gmm::{gmm_classify, GmmBank, Weighting};
use crate::inference::{
    dual_classify, evaluate_session, ncm_classify, read_predictions, refine, write_predictions, Decision, Prediction,
};
use crate::metrics::{aggregate, session_metrics, MetricsReport, SessionResult};
use crate::proto::{build_prototypes, PrototypeBank};
use crate::selfopt::{
    absorb_labeled, accumulate_resistance, calibrate_gmm_bank, calibrate_prototypes, resist_for_inference, resist_gmm,
    CalibConfig, ResistConfig,
};
use crate::snapshot::save_snapshot;
use crate::stim::{export_features, train, write_model, TrainConfig, TrainLog};
use crate::seed;
use crate::vector::DualFeature;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    #[default]
    Prototype,
    Bgmm,
}

/// Which dataset a single-feature run classifies in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSpace {
    #[default]
    Transferable,
    Discriminative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentCounts {
    pub base: usize,
    pub incremental: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmSettings {
    pub components: ComponentCounts,
    pub weighting: Weighting,
}

impl Default for GmmSettings {
    fn default() -> Self {
        Self {
            components: ComponentCounts {
                base: 3,
                incremental: 1,
            },
            weighting: Weighting::Pi,
        }
    }
}

/// The protocol, inline or as a path to its JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProtocolSource {
    Inline(ProtocolConfig),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub g_dataset: Option<PathBuf>,
    #[serde(default)]
    pub g_tilde_dataset: Option<PathBuf>,
    pub protocol: ProtocolSource,
    #[serde(default)]
    pub classifier_kind: ClassifierKind,
    #[serde(default)]
    pub dual_feature: bool,
    #[serde(default)]
    pub feature_space: FeatureSpace,
    #[serde(default)]
    pub enable_resistance: bool,
    #[serde(default)]
    pub enable_calibration: bool,
    #[serde(default)]
    pub enable_absorb_labeled: bool,
    /// Also calibrate the discriminative classifiers in dual runs.
    #[serde(default)]
    pub calibrate_discriminative: bool,
    #[serde(default)]
    pub resist: ResistConfig,
    #[serde(default)]
    pub calib: CalibConfig,
    #[serde(default)]
    pub gmm: GmmSettings,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub save_snapshots: bool,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    /// A plain NCM run over the transferable space.
    pub fn baseline(protocol: ProtocolConfig) -> Self {
        Self {
            g_dataset: None,
            g_tilde_dataset: None,
            protocol: ProtocolSource::Inline(protocol),
            classifier_kind: ClassifierKind::Prototype,
            dual_feature: false,
            feature_space: FeatureSpace::Transferable,
            enable_resistance: false,
            enable_calibration: false,
            enable_absorb_labeled: false,
            calibrate_discriminative: false,
            resist: ResistConfig::default(),
            calib: CalibConfig::default(),
            gmm: GmmSettings::default(),
            output_dir: None,
            save_snapshots: false,
            seed: 0,
        }
    }

    /// Dual features with resistance and calibration enabled.
    pub fn full(protocol: ProtocolConfig) -> Self {
        Self {
            dual_feature: true,
            enable_resistance: true,
            enable_calibration: true,
            ..Self::baseline(protocol)
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    /// Make relative paths relative to `dir`.
    pub fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        self.g_dataset.as_mut().map(fix);
        self.g_tilde_dataset.as_mut().map(fix);
        self.output_dir.as_mut().map(fix);
        if let ProtocolSource::File(p) = &mut self.protocol {
            fix(p);
        }
    }

    pub fn protocol_config(&self) -> Result<ProtocolConfig> {
        match &self.protocol {
            ProtocolSource::Inline(p) => Ok(p.clone()),
            ProtocolSource::File(path) => ProtocolConfig::from_json_file(path),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.resist.validate()?;
        self.calib.validate()?;
        let c = self.gmm.components;
        if self.classifier_kind == ClassifierKind::Bgmm && (c.base == 0 || c.incremental == 0) {
            return Err(Error::Config("bgmm needs at least one component per class group".into()));
        }
        Ok(())
    }
}

/// Everything a run produces, before it is written anywhere.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub predictions: Vec<Vec<Prediction>>,
    pub report: MetricsReport,
}

/// Per-record dual features; a single-channel dataset pairs each feature
/// with itself.
fn dual_features(ds: &EmbeddingDataset) -> Vec<DualFeature> {
    ds.records()
        .iter()
        .map(|r| {
            r.dual().unwrap_or_else(|| DualFeature {
                original: r.feature.clone(),
                transformed: r.feature.clone(),
            })
        })
        .collect()
}

fn pick(feats: &[DualFeature], indices: &[usize]) -> Vec<DualFeature> {
    indices.iter().map(|&i| feats[i].clone()).collect()
}

/// One feature space of a run: its features and the classifier state built
/// over them.
struct Space {
    feats: Vec<DualFeature>,
    protos: PrototypeBank,
    gmm: GmmBank,
}

impl Space {
    fn new(ds: &EmbeddingDataset) -> Self {
        Self {
            feats: dual_features(ds),
            protos: PrototypeBank::new(ds.dim()),
            gmm: GmmBank::new(ds.dim()),
        }
    }
}

/// Number of evaluation workers: `FSCIL_THREADS` if set, else the machine's
/// available parallelism.
pub fn worker_count() -> usize {
    std::env::var("FSCIL_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Map `f` over `items` on up to `workers` threads, keeping input order.
fn parallel_map<T, U, F>(items: &[T], workers: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| s.spawn(|| part.iter().map(&f).collect::<Vec<U>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("evaluation worker panicked"))
            .collect()
    })
}

/// Run the protocol over in-memory datasets. `g` is the transferable space,
/// `g_tilde` the discriminative one; which are required depends on the
/// configuration.
pub fn run_session_stream(
    cfg: &RunConfig,
    g: Option<&EmbeddingDataset>,
    g_tilde: Option<&EmbeddingDataset>,
) -> Result<RunOutput> {
    run_inner(cfg, g, g_tilde, None)
}

fn run_inner(
    cfg: &RunConfig,
    g: Option<&EmbeddingDataset>,
    g_tilde: Option<&EmbeddingDataset>,
    snapshot_dir: Option<&Path>,
) -> Result<RunOutput> {
    cfg.validate()?;
    let protocol = cfg.protocol_config()?;

    // `primary` answers the coarse (or only) question, `secondary` refines.
    let (primary_ds, secondary_ds) = if cfg.dual_feature {
        match (g, g_tilde) {
            (Some(a), Some(b)) => {
                if !a.aligned_with(b) {
                    return Err(Error::Config("g and g_tilde datasets are not record-aligned".into()));
                }
                (a, Some(b))
            }
            _ => return Err(Error::Config("dual_feature needs both g and g_tilde datasets".into())),
        }
    } else {
        let ds = match cfg.feature_space {
            FeatureSpace::Transferable => g,
            FeatureSpace::Discriminative => g_tilde,
        };
        let ds = ds.ok_or_else(|| Error::Config(format!("{:?} dataset is required", cfg.feature_space)))?;
        (ds, None)
    };

    let mut protocol = protocol;
    protocol.seed = seed::mix(seed::derive(cfg.seed, "protocol"), &[protocol.seed]);
    let stream = build_protocol(primary_ds, &protocol)?;
    let labels: Vec<u32> = primary_ds.records().iter().map(|r| r.class_id).collect();

    let mut primary = Space::new(primary_ds);
    let mut secondary = secondary_ds.map(Space::new);
    let workers = worker_count();
    let weighting = cfg.gmm.weighting;
    let mut all_predictions = Vec::with_capacity(stream.sessions.len());
    let mut metrics = Vec::with_capacity(stream.sessions.len());

    for session in &stream.sessions {
        let t = session.index;
        let gmm_seed = seed::mix(seed::derive(cfg.seed, "gmm"), &[t as u64]);
        let m = if t == 0 {
            cfg.gmm.components.base
        } else {
            cfg.gmm.components.incremental
        };
        // The resisted side is the refining space in dual runs, else the only one.
        let resisted_is_secondary = secondary.is_some();

        match cfg.classifier_kind {
            ClassifierKind::Prototype => {
                let mut novel = Vec::new();
                for space in std::iter::once(&mut primary).chain(secondary.as_mut()) {
                    let grouped = group_by_class_feats(&space.feats, &labels, &session.train);
                    novel.push(build_prototypes(&grouped)?);
                }
                let mut novel = novel.into_iter();
                let primary_novel = novel.next().expect("primary space");
                let secondary_novel = novel.next();
                if cfg.enable_resistance && t > 0 {
                    match (&mut secondary, &secondary_novel) {
                        (Some(s), Some(n)) => accumulate_resistance(&mut s.protos, n)?,
                        _ => accumulate_resistance(&mut primary.protos, &primary_novel)?,
                    }
                }
                primary.protos.extend(primary_novel, t)?;
                if let (Some(s), Some(n)) = (&mut secondary, secondary_novel) {
                    s.protos.extend(n, t)?;
                }
                if cfg.enable_absorb_labeled && !session.revisit.is_empty() {
                    for space in std::iter::once(&mut primary).chain(secondary.as_mut()) {
                        let grouped = group_by_class_feats(&space.feats, &labels, &session.revisit);
                        for (c, samples) in grouped {
                            absorb_labeled(&mut space.protos, c, &samples)?;
                        }
                    }
                }
                if cfg.enable_calibration {
                    let pool = pick(&primary.feats, &session.test);
                    calibrate_prototypes(&mut primary.protos, &pool, &cfg.calib)?;
                    if cfg.calibrate_discriminative {
                        if let Some(s) = &mut secondary {
                            let pool = pick(&s.feats, &session.test);
                            calibrate_prototypes(&mut s.protos, &pool, &cfg.calib)?;
                        }
                    }
                }
            }
            ClassifierKind::Bgmm => {
                for space in std::iter::once(&mut primary).chain(secondary.as_mut()) {
                    let grouped = group_by_class_feats(&space.feats, &labels, &session.train);
                    for (c, samples) in &grouped {
                        space.gmm.fit_class(*c, t, samples, m, gmm_seed)?;
                    }
                }
                if cfg.enable_resistance && t > 0 {
                    let resist = session_resist(cfg, t);
                    let target = if resisted_is_secondary {
                        &mut secondary.as_mut().expect("checked").gmm
                    } else {
                        &mut primary.gmm
                    };
                    resist_gmm(target, &session.classes, &resist, weighting)?;
                }
                if cfg.enable_calibration {
                    let pool = pick(&primary.feats, &session.test);
                    calibrate_gmm_bank(&mut primary.gmm, &pool, &cfg.calib, weighting)?;
                    if cfg.calibrate_discriminative {
                        if let Some(s) = &mut secondary {
                            let pool = pick(&s.feats, &session.test);
                            calibrate_gmm_bank(&mut s.gmm, &pool, &cfg.calib, weighting)?;
                        }
                    }
                }
            }
        }

        if let Some(dir) = snapshot_dir {
            let gmm_of = |s: &Space| (cfg.classifier_kind == ClassifierKind::Bgmm).then_some(&s.gmm).cloned();
            save_snapshot(dir.join(format!("bank_primary_session_{t}.snap")), &primary.protos, gmm_of(&primary).as_ref())?;
            if let Some(s) = &secondary {
                save_snapshot(dir.join(format!("bank_secondary_session_{t}.snap")), &s.protos, gmm_of(s).as_ref())?;
            }
        }

        let predictions = match cfg.classifier_kind {
            ClassifierKind::Prototype => {
                let resist = session_resist(cfg, t);
                let view = |bank: &PrototypeBank| -> Result<Option<PrototypeBank>> {
                    if cfg.enable_resistance {
                        resist_for_inference(bank, &resist).map(Some)
                    } else {
                        Ok(None)
                    }
                };
                match &secondary {
                    Some(s) => {
                        let h_tilde_view = view(&s.protos)?;
                        let h_tilde = h_tilde_view.as_ref().unwrap_or(&s.protos);
                        evaluate_parallel(&stream, t, &labels, workers, |i| {
                            dual_classify(&primary.feats[i], &s.feats[i], &primary.protos, h_tilde)
                        })?
                    }
                    None => {
                        let resisted = view(&primary.protos)?;
                        let bank = resisted.as_ref().unwrap_or(&primary.protos);
                        evaluate_parallel(&stream, t, &labels, workers, |i| {
                            ncm_classify(&primary.feats[i], bank).map(Decision::single)
                        })?
                    }
                }
            }
            ClassifierKind::Bgmm => match &secondary {
                Some(s) => evaluate_parallel(&stream, t, &labels, workers, |i| {
                    let coarse = gmm_classify(&primary.feats[i], &primary.gmm, weighting)?;
                    refine(coarse, primary.gmm.is_base(coarse), || gmm_classify(&s.feats[i], &s.gmm, weighting))
                })?,
                None => evaluate_parallel(&stream, t, &labels, workers, |i| {
                    gmm_classify(&primary.feats[i], &primary.gmm, weighting).map(Decision::single)
                })?,
            },
        };

        let result = SessionResult::from_predictions(t, &predictions, stream.class_sessions().clone());
        metrics.push(session_metrics(&result)?);
        all_predictions.push(predictions);
    }

    Ok(RunOutput {
        predictions: all_predictions,
        report: aggregate(&metrics)?,
    })
}

fn session_resist(cfg: &RunConfig, t: usize) -> ResistConfig {
    ResistConfig {
        seed: seed::mix(seed::derive(cfg.seed, "resist"), &[cfg.resist.seed, t as u64]),
        ..cfg.resist.clone()
    }
}

fn group_by_class_feats(feats: &[DualFeature], labels: &[u32], indices: &[usize]) -> BTreeMap<u32, Vec<DualFeature>> {
    let mut out: BTreeMap<u32, Vec<DualFeature>> = BTreeMap::new();
    for &i in indices {
        out.entry(labels[i]).or_default().push(feats[i].clone());
    }
    out
}

fn evaluate_parallel<F>(stream: &SessionStream, t: usize, labels: &[u32], workers: usize, classify: F) -> Result<Vec<Prediction>>
where
    F: Fn(usize) -> Result<Decision> + Sync,
{
    let session = stream.sessions.get(t).ok_or(Error::MissingSession(t))?;
    let decisions = parallel_map(&session.test, workers, |&i| classify(i));
    let mut decisions = decisions.into_iter();
    evaluate_session(stream, t, labels, |_| decisions.next().expect("one decision per query"))
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write `report.json`, `report.csv` and `accuracy.dat` into `dir`.
pub fn write_report_files(report: &MetricsReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("report.json");
    let mut w = create_file(&path)?;
    report.write_json(&mut w)?;
    w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    finish(w, &path)?;
    let path = dir.join("report.csv");
    let mut w = create_file(&path)?;
    report.write_csv(&mut w)?;
    finish(w, &path)?;
    let path = dir.join("accuracy.dat");
    let mut w = create_file(&path)?;
    report.write_gnuplot(&mut w)?;
    finish(w, &path)
}

pub fn predictions_file(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("predictions_session_{t}.csv"))
}

pub fn cmd_synth(spec: &SynthSpec, output: &Path) -> Result<EmbeddingDataset> {
    let ds = synth_generate(spec)?;
    save_embeddings(&ds, output, Format::from_path(output))?;
    Ok(ds)
}

/// Inputs of `cmd_train`.
#[derive(Clone, Debug)]
pub struct TrainJob {
    pub raw_dataset: PathBuf,
    /// Classes `0..base_class_count` are trained on; the rest are only exported.
    pub base_class_count: u32,
    pub config: TrainConfig,
    pub output_dir: PathBuf,
}

/// Paths written by `cmd_train`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutputs {
    pub model: PathBuf,
    pub log: PathBuf,
    pub g: PathBuf,
    pub g_tilde: PathBuf,
}

/// Base-class training pairs of a raw dataset.
pub fn base_training_set(raw: &EmbeddingDataset, base_class_count: u32) -> Vec<(crate::vector::FeatureVector, u32)> {
    raw.records()
        .iter()
        .filter(|r| r.split == Split::Train && r.class_id < base_class_count)
        .map(|r| (r.feature.clone(), r.class_id))
        .collect()
}

pub fn cmd_train(job: &TrainJob) -> Result<(TrainOutputs, TrainLog)> {
    let raw = load_embeddings(&job.raw_dataset, Format::from_path(&job.raw_dataset))?;
    let samples = base_training_set(&raw, job.base_class_count);
    let (model, log) = train(&samples, &job.config)?;
    let (g, g_tilde) = export_features(&model, &raw)?;

    let dir = &job.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let out = TrainOutputs {
        model: dir.join("model.bin"),
        log: dir.join("train_log.csv"),
        g: dir.join("g.fse"),
        g_tilde: dir.join("g_tilde.fse"),
    };
    let mut w = create_file(&out.model)?;
    write_model(&model, &mut w)?;
    finish(w, &out.model)?;
    let mut w = create_file(&out.log)?;
    log.write_csv(&mut w)?;
    finish(w, &out.log)?;
    save_embeddings(&g, &out.g, Format::Binary)?;
    save_embeddings(&g_tilde, &out.g_tilde, Format::Binary)?;
    let cfg_path = dir.join("train_config.json");
    let mut w = create_file(&cfg_path)?;
    serde_json::to_writer_pretty(&mut w, &job.config)?;
    finish(w, &cfg_path)?;
    Ok((out, log))
}

/// Load the configured datasets, run, and write predictions and reports.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunOutput> {
    let load = |p: &Option<PathBuf>| -> Result<Option<EmbeddingDataset>> {
        p.as_ref()
            .map(|p| load_embeddings(p, Format::from_path(p)))
            .transpose()
    };
    let g = load(&cfg.g_dataset)?;
    let g_tilde = load(&cfg.g_tilde_dataset)?;
    let dir = cfg
        .output_dir
        .clone()
        .ok_or_else(|| Error::Config("output_dir is required".into()))?;
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let snapshots = cfg.save_snapshots.then_some(dir.as_path());
    let out = run_inner(cfg, g.as_ref(), g_tilde.as_ref(), snapshots)?;
    for (t, preds) in out.predictions.iter().enumerate() {
        let path = predictions_file(&dir, t);
        let mut w = create_file(&path)?;
        write_predictions(preds, &mut w)?;
        finish(w, &path)?;
    }
    write_report_files(&out.report, &dir)?;
    Ok(out)
}

/// Recompute the report from the prediction dumps in `dir`.
pub fn cmd_report(protocol: &ProtocolConfig, dir: &Path, output_dir: &Path) -> Result<MetricsReport> {
    let class_session: BTreeMap<u32, usize> = (0..protocol.total_classes() as u32)
        .map(|c| (c, protocol.session_of(c).expect("covered class")))
        .collect();
    let mut sessions = Vec::new();
    for t in 0.. {
        let path = predictions_file(dir, t);
        if !path.exists() {
            break;
        }
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let preds = read_predictions(std::io::BufReader::new(file))?;
        let result = SessionResult::from_predictions(t, &preds, class_session.clone());
        sessions.push(session_metrics(&result)?);
    }
    if sessions.is_empty() {
        return Err(Error::MissingSession(0));
    }
    let report = aggregate(&sessions)?;
    write_report_files(&report, output_dir)?;
    Ok(report)
}
