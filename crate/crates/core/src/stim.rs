//! Desk-scale mapping-ability stimulation.
//!
//! A small ReLU extractor `g` followed by a selection-and-reorganization
//! head `SR` is trained by SGD with momentum against a classifier matrix
//! `η` that holds one row per `(class, component)` plus rows for virtual
//! classes created by inter-class fusion. Component 2 of every class is
//! fitted by the index-reversed input (the intra-class transform).
//!
//! Gradients are derived by hand; `Gradients` mirrors the parameter order
//! of [`ToyModel::params`].

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::io::LeReader;
use crate::data::{EmbeddingDataset, Record};
use crate::error::{Error, Result};
use crate::seed;
use crate::vector::FeatureVector;

/// The intra-class transform: index reversal, an exact involution.
pub fn transform(x: &FeatureVector) -> FeatureVector {
    FeatureVector::from_finite(x.as_slice().iter().rev().copied().collect())
}

/// `(x, T(x))`.
pub fn make_intra_pair(x: &FeatureVector) -> (FeatureVector, FeatureVector) {
    (x.clone(), transform(x))
}

/// An input together with its transformed counterpart.
#[derive(Clone, Debug, PartialEq)]
pub struct IntraPair {
    pub original: FeatureVector,
    pub transformed: FeatureVector,
}

impl IntraPair {
    pub fn of(x: &FeatureVector) -> Self {
        let (original, transformed) = make_intra_pair(x);
        Self { original, transformed }
    }
}

/// Inter-class fusion: every channel becomes `λ·(i-channel) + (1−λ)·(j-channel)`.
pub fn fuse_inter(xi: &IntraPair, xj: &IntraPair, lambda: f64, range: [f64; 2]) -> Result<IntraPair> {
    if !(range[0]..=range[1]).contains(&lambda) {
        return Err(Error::LambdaOutOfRange {
            lambda,
            lo: range[0],
            hi: range[1],
        });
    }
    if std::ptr::eq(xi, xj) || xi == xj {
        return Err(Error::SelfFusion);
    }
    Ok(IntraPair {
        original: xj.original.blend(&xi.original, lambda)?,
        transformed: xj.transformed.blend(&xi.transformed, lambda)?,
    })
}

/// Cross-entropy with a margin `δ` subtracted from the target logit:
/// `−ln(e^{z_y−δ} / (Σ_{j≠y} e^{z_j} + e^{z_y−δ}))`. Returns the loss and
/// its gradient with respect to the logits.
pub fn margin_ce_loss(logits: &[f64], target: usize, delta: f64) -> (f64, Vec<f64>) {
    let mut z = logits.to_vec();
    z[target] -= delta;
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = max + sum.ln() - z[target];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[target] -= 1.0;
    (loss, grad)
}

/// Affine layer with row-major weights `[outputs × inputs]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

impl Dense {
    fn random(inputs: usize, outputs: usize, with_bias: bool, rng: &mut seed::Rng) -> Self {
        let scale = (2.0 / inputs as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            inputs,
            outputs,
            weights,
            bias: with_bias.then(|| vec![0.01; outputs]),
        }
    }

    fn identity(inputs: usize, outputs: usize) -> Self {
        let mut weights = vec![0.0; inputs * outputs];
        for i in 0..inputs.min(outputs) {
            weights[i * inputs + i] = 1.0;
        }
        Self {
            inputs,
            outputs,
            weights,
            bias: Some(vec![0.0; outputs]),
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|o| {
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                let mut acc = self.bias.as_ref().map_or(0.0, |b| b[o]);
                for i in 0..self.inputs {
                    acc += row[i] * x[i];
                }
                acc
            })
            .collect()
    }

    /// Accumulate parameter gradients and return the input gradient.
    fn backward(&self, x: &[f64], dout: &[f64], dw: &mut [f64], db: Option<&mut [f64]>) -> Vec<f64> {
        let mut dx = vec![0.0; self.inputs];
        for o in 0..self.outputs {
            let g = dout[o];
            if g == 0.0 {
                continue;
            }
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let drow = &mut dw[o * self.inputs..(o + 1) * self.inputs];
            for i in 0..self.inputs {
                drow[i] += g * x[i];
                dx[i] += g * row[i];
            }
        }
        if let Some(db) = db {
            for o in 0..self.outputs {
                db[o] += dout[o];
            }
        }
        dx
    }
}

fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.max(0.0)).collect()
}

fn relu_backward(pre: &[f64], dout: &[f64]) -> Vec<f64> {
    pre.iter()
        .zip(dout)
        .map(|(&z, &d)| if z > 0.0 { d } else { 0.0 })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyModel {
    /// `input → hidden → d`, both followed by ReLU so `g(x) ≥ 0`.
    pub extractor: [Dense; 2],
    /// `d → sr_hidden → d̃` with a ReLU between the layers.
    pub sr: Option<[Dense; 2]>,
    /// Classifier matrix `η`, no bias.
    pub classifier: Dense,
    pub base_classes: usize,
    pub virtual_pool: usize,
    /// 2 when the intra-class transform trains a second component per class.
    pub components: usize,
}

/// Intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    input: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    pub features: Vec<f64>,
    sr: Option<SrForward>,
    pub logits: Vec<f64>,
}

#[derive(Clone, Debug)]
struct SrForward {
    u1: Vec<f64>,
    b1: Vec<f64>,
    out: Vec<f64>,
}

impl Forward {
    /// The discriminative features `g̃(x)`; equal to `g(x)` without SR.
    pub fn discriminative(&self) -> &[f64] {
        self.sr.as_ref().map_or(&self.features, |s| &s.out)
    }

    /// All pre-activations that pass through a ReLU.
    pub fn pre_activations(&self) -> impl Iterator<Item = f64> + '_ {
        self.z1
            .iter()
            .chain(&self.z2)
            .chain(self.sr.iter().flat_map(|s| s.u1.iter()))
            .copied()
    }
}

/// Parameter gradients in [`ToyModel::params`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

impl Gradients {
    fn scale(&mut self, factor: f64) {
        for g in &mut self.0 {
            for v in g.iter_mut() {
                *v *= factor;
            }
        }
    }
}

impl ToyModel {
    pub fn new_random(
        input_dim: usize,
        layout: &Layout,
        base_classes: usize,
        virtual_pool: usize,
        components: usize,
        seed: u64,
    ) -> Self {
        let mut rng = seed::rng(seed);
        let extractor = [
            Dense::random(input_dim, layout.hidden, true, &mut rng),
            Dense::random(layout.hidden, layout.feature_dim, true, &mut rng),
        ];
        let (sr, head_in) = if layout.use_sr {
            (
                Some([
                    Dense::random(layout.feature_dim, layout.sr_hidden, true, &mut rng),
                    Dense::random(layout.sr_hidden, layout.sr_out, true, &mut rng),
                ]),
                layout.sr_out,
            )
        } else {
            (None, layout.feature_dim)
        };
        let rows = components * (base_classes + virtual_pool);
        let mut classifier = Dense::random(head_in, rows, false, &mut rng);
        for w in &mut classifier.weights {
            *w *= 0.5;
        }
        Self {
            extractor,
            sr,
            classifier,
            base_classes,
            virtual_pool,
            components,
        }
    }

    /// Identity extractor and SR (`g(x) = max(x, 0)` padded or truncated to
    /// `feature_dim`), zero classifier. A diagnostic starting point.
    pub fn identity(input_dim: usize, feature_dim: usize, base_classes: usize) -> Self {
        Self {
            extractor: [
                Dense::identity(input_dim, feature_dim),
                Dense::identity(feature_dim, feature_dim),
            ],
            sr: Some([
                Dense::identity(feature_dim, feature_dim),
                Dense::identity(feature_dim, feature_dim),
            ]),
            classifier: Dense {
                inputs: feature_dim,
                outputs: base_classes,
                weights: vec![0.0; feature_dim * base_classes],
                bias: None,
            },
            base_classes,
            virtual_pool: 0,
            components: 1,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.extractor[0].inputs
    }

    pub fn feature_dim(&self) -> usize {
        self.extractor[1].outputs
    }

    pub fn discriminative_dim(&self) -> usize {
        self.sr.as_ref().map_or(self.feature_dim(), |s| s[1].outputs)
    }

    pub fn rows(&self) -> usize {
        self.classifier.outputs
    }

    /// Classifier row of a real class component (`j` is 0 or 1).
    pub fn class_row(&self, class: usize, j: usize) -> usize {
        class * self.components + j
    }

    /// Classifier row of a virtual-class slot component.
    pub fn virtual_row(&self, slot: usize, j: usize) -> usize {
        self.components * self.base_classes + slot * self.components + j
    }

    fn layers(&self) -> Vec<&Dense> {
        let mut out: Vec<&Dense> = self.extractor.iter().collect();
        if let Some(sr) = &self.sr {
            out.extend(sr.iter());
        }
        out.push(&self.classifier);
        out
    }

    fn layers_mut(&mut self) -> Vec<&mut Dense> {
        let mut out: Vec<&mut Dense> = self.extractor.iter_mut().collect();
        if let Some(sr) = &mut self.sr {
            out.extend(sr.iter_mut());
        }
        out.push(&mut self.classifier);
        out
    }

    /// Parameter slices: each layer's weights, then its bias if any.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in self.layers() {
            out.push(l.weights.as_slice());
            if let Some(b) = &l.bias {
                out.push(b.as_slice());
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in self.layers_mut() {
            out.push(l.weights.as_mut_slice());
            if let Some(b) = &mut l.bias {
                out.push(b.as_mut_slice());
            }
        }
        out
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients(self.params().iter().map(|p| vec![0.0; p.len()]).collect())
    }

    pub fn forward(&self, x: &[f64]) -> Forward {
        let z1 = self.extractor[0].forward(x);
        let a1 = relu(&z1);
        let z2 = self.extractor[1].forward(&a1);
        let features = relu(&z2);
        let sr = self.sr.as_ref().map(|sr| {
            let u1 = sr[0].forward(&features);
            let b1 = relu(&u1);
            let out = sr[1].forward(&b1);
            SrForward { u1, b1, out }
        });
        let head_in = sr.as_ref().map_or(&features, |s| &s.out);
        let logits = self.classifier.forward(head_in);
        Forward {
            input: x.to_vec(),
            z1,
            a1,
            z2,
            features,
            sr,
            logits,
        }
    }

    /// Accumulate the gradient of a loss with logit gradient `dlogits`.
    pub fn backward(&self, fwd: &Forward, dlogits: &[f64], grads: &mut Gradients) {
        let g = &mut grads.0;
        let has_sr = self.sr.is_some();
        // slot layout: ext0 w,b | ext1 w,b | [sr0 w,b | sr1 w,b] | eta w
        let eta_slot = if has_sr { 8 } else { 4 };
        let head_in = fwd.sr.as_ref().map_or(&fwd.features, |s| &s.out);
        let (before, eta) = g.split_at_mut(eta_slot);
        let mut dfeat = self.classifier.backward(head_in, dlogits, &mut eta[0], None);

        if let (Some(sr), Some(sf)) = (&self.sr, &fwd.sr) {
            let (ext, srg) = before.split_at_mut(4);
            let (s0, s1) = srg.split_at_mut(2);
            let (s1w, s1b) = s1.split_at_mut(1);
            let db1 = sr[1].backward(&sf.b1, &dfeat, &mut s1w[0], Some(&mut s1b[0]));
            let du1 = relu_backward(&sf.u1, &db1);
            let (s0w, s0b) = s0.split_at_mut(1);
            dfeat = sr[0].backward(&fwd.features, &du1, &mut s0w[0], Some(&mut s0b[0]));
            backprop_extractor(self, fwd, &dfeat, ext);
        } else {
            backprop_extractor(self, fwd, &dfeat, before);
        }
    }

    /// Loss and gradients of one input against one classifier row.
    pub fn loss_and_grad(&self, x: &[f64], target: usize, delta: f64) -> (f64, Gradients) {
        let fwd = self.forward(x);
        let (loss, dlogits) = margin_ce_loss(&fwd.logits, target, delta);
        let mut grads = self.zero_gradients();
        self.backward(&fwd, &dlogits, &mut grads);
        (loss, grads)
    }

    /// `g(x)`.
    pub fn transferable(&self, x: &FeatureVector) -> FeatureVector {
        FeatureVector::from_finite(self.forward(x.as_slice()).features)
    }

    /// `g̃(x) = SR(g(x))`.
    pub fn discriminative(&self, x: &FeatureVector) -> FeatureVector {
        FeatureVector::from_finite(self.forward(x.as_slice()).discriminative().to_vec())
    }
}

fn backprop_extractor(model: &ToyModel, fwd: &Forward, dfeat: &[f64], g: &mut [Vec<f64>]) {
    let dz2 = relu_backward(&fwd.z2, dfeat);
    let (e0, e1) = g.split_at_mut(2);
    let (e1w, e1b) = e1.split_at_mut(1);
    let da1 = model.extractor[1].backward(&fwd.a1, &dz2, &mut e1w[0], Some(&mut e1b[0]));
    let dz1 = relu_backward(&fwd.z1, &da1);
    let (e0w, e0b) = e0.split_at_mut(1);
    model.extractor[0].backward(&fwd.input, &dz1, &mut e0w[0], Some(&mut e0b[0]));
}

/// Layer widths of the toy model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Layout {
    pub hidden: usize,
    pub feature_dim: usize,
    pub use_sr: bool,
    pub sr_hidden: usize,
    pub sr_out: usize,
}

impl Default for Layout {
    fn default() -> Self {
        Self {
            hidden: 64,
            feature_dim: 32,
            use_sr: true,
            sr_hidden: 64,
            sr_out: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Margin subtracted from the target logit.
    pub delta: f64,
    /// Fusion weights are drawn uniformly from this closed range.
    pub lambda_range: [f64; 2],
    /// Train a second component per class on transformed inputs.
    pub intra: bool,
    /// Virtual-class slots; `None` means four per base class, 0 disables fusion.
    pub virtual_pool: Option<usize>,
    pub layout: Layout,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            delta: 0.0,
            lambda_range: [0.4, 0.6],
            intra: true,
            virtual_pool: None,
            layout: Layout::default(),
            lr: 0.01,
            momentum: 0.9,
            epochs: 30,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Plain cross-entropy: no transform channel, no fusion.
    pub fn plain() -> Self {
        Self {
            intra: false,
            virtual_pool: Some(0),
            ..Self::default()
        }
    }

    pub fn resolved_virtual_pool(&self, base_classes: usize) -> usize {
        self.virtual_pool.unwrap_or(4 * base_classes)
    }

    pub fn validate(&self, base_classes: usize) -> Result<()> {
        let [lo, hi] = self.lambda_range;
        if !(lo > 0.0 && hi < 1.0 && lo <= hi) {
            return Err(Error::Config(format!("lambda_range [{lo}, {hi}] must lie inside (0, 1)")));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::Config("delta must be non-negative".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("lr must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        let l = &self.layout;
        if l.hidden == 0 || l.feature_dim == 0 || (l.use_sr && (l.sr_hidden == 0 || l.sr_out == 0)) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if base_classes == 0 {
            return Err(Error::Config("training set has no classes".into()));
        }
        if self.resolved_virtual_pool(base_classes) > 0 && base_classes < 2 {
            return Err(Error::Config("inter-class fusion needs at least two classes".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Mean batch loss of every optimizer step, before the update.
    pub step_losses: Vec<f64>,
}

impl TrainLog {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epoch", "loss", "train_acc"])?;
        for e in &self.epochs {
            out.write_record([e.epoch.to_string(), e.loss.to_string(), e.train_acc.to_string()])?;
        }
        out.flush().map_err(|e| Error::Format(format!("write failed: {e}")))
    }
}

/// Slot of the unordered class pair `{a, b}` in the virtual pool.
pub fn virtual_slot(a: u32, b: u32, pool: usize) -> usize {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    (seed::mix(0x7669_7274, &[u64::from(lo), u64::from(hi)]) % pool as u64) as usize
}

/// Train on labeled raw inputs whose labels are `0..C`.
pub fn train(samples: &[(FeatureVector, u32)], cfg: &TrainConfig) -> Result<(ToyModel, TrainLog)> {
    let Some(first) = samples.first() else {
        return Err(Error::Config("training set is empty".into()));
    };
    let input_dim = first.0.dim();
    if let Some((bad, _)) = samples.iter().find(|(x, _)| x.dim() != input_dim) {
        return Err(Error::DimensionMismatch {
            expected: input_dim,
            found: bad.dim(),
        });
    }
    let classes = samples.iter().map(|s| s.1).max().map_or(0, |m| m as usize + 1);
    cfg.validate(classes)?;
    let pool = cfg.resolved_virtual_pool(classes);
    let components = if cfg.intra { 2 } else { 1 };

    let mut model = ToyModel::new_random(
        input_dim,
        &cfg.layout,
        classes,
        pool,
        components,
        seed::derive(cfg.seed, "init"),
    );
    let pairs: Vec<IntraPair> = samples.iter().map(|(x, _)| IntraPair::of(x)).collect();
    let mut rng = seed::rng(seed::derive(cfg.seed, "batches"));
    let mut velocity = model.zero_gradients();
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..samples.len()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_items = 0usize;
        let mut correct = 0usize;

        for batch in order.chunks(cfg.batch_size) {
            // (input, target row)
            let mut items: Vec<(&FeatureVector, usize)> = Vec::new();
            let mut fused_store: Vec<(IntraPair, usize)> = Vec::new();
            for &i in batch {
                let y = samples[i].1 as usize;
                items.push((&pairs[i].original, model.class_row(y, 0)));
                if cfg.intra {
                    items.push((&pairs[i].transformed, model.class_row(y, 1)));
                }
                if pool > 0 {
                    let j = loop {
                        let j = rng.random_range(0..samples.len());
                        if samples[j].1 != samples[i].1 {
                            break j;
                        }
                    };
                    let lambda = rng.random_range(cfg.lambda_range[0]..=cfg.lambda_range[1]);
                    let fused = fuse_inter(&pairs[i], &pairs[j], lambda, cfg.lambda_range)?;
                    fused_store.push((fused, virtual_slot(samples[i].1, samples[j].1, pool)));
                }
            }
            for (fused, slot) in &fused_store {
                items.push((&fused.original, model.virtual_row(*slot, 0)));
                if cfg.intra {
                    items.push((&fused.transformed, model.virtual_row(*slot, 1)));
                }
            }

            let mut grads = model.zero_gradients();
            let mut batch_loss = 0.0;
            for (x, target) in &items {
                let fwd = model.forward(x.as_slice());
                let (loss, dlogits) = margin_ce_loss(&fwd.logits, *target, cfg.delta);
                batch_loss += loss;
                model.backward(&fwd, &dlogits, &mut grads);
            }
            for &i in batch {
                let fwd = model.forward(pairs[i].original.as_slice());
                if predicted_class(&model, &fwd.logits) == Some(samples[i].1 as usize) {
                    correct += 1;
                }
            }
            grads.scale(1.0 / items.len() as f64);
            log.step_losses.push(batch_loss / items.len() as f64);
            epoch_loss += batch_loss;
            epoch_items += items.len();

            for ((p, v), g) in model.params_mut().into_iter().zip(&mut velocity.0).zip(&grads.0) {
                for k in 0..p.len() {
                    v[k] = cfg.momentum * v[k] + g[k];
                    p[k] -= cfg.lr * v[k];
                }
            }
        }
        if model.params().iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::Config(format!("training diverged at epoch {epoch}; lower lr")));
        }
        log.epochs.push(EpochLog {
            epoch,
            loss: epoch_loss / epoch_items as f64,
            train_acc: correct as f64 / samples.len() as f64,
        });
    }
    Ok((model, log))
}

/// Real class of the highest-scoring row, `None` for a virtual row.
fn predicted_class(model: &ToyModel, logits: &[f64]) -> Option<usize> {
    let mut best = 0;
    for (k, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = k;
        }
    }
    (best < model.components * model.base_classes).then_some(best / model.components)
}

/// Map a raw dataset into both feature spaces. Each record's transformed
/// channel is the feature of the index-reversed input. Values are rounded
/// to `f32` so the outputs survive the binary format unchanged.
pub fn export_features(model: &ToyModel, raw: &EmbeddingDataset) -> Result<(EmbeddingDataset, EmbeddingDataset)> {
    if raw.dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            found: raw.dim(),
        });
    }
    let round = |v: &[f64]| FeatureVector::from_finite(v.iter().map(|&x| f64::from(x as f32)).collect());
    let mut g_records = Vec::with_capacity(raw.len());
    let mut gt_records = Vec::with_capacity(raw.len());
    for r in raw.records() {
        let a = model.forward(r.feature.as_slice());
        let b = model.forward(transform(&r.feature).as_slice());
        g_records.push(Record {
            class_id: r.class_id,
            split: r.split,
            feature: round(&a.features),
            transformed: Some(round(&b.features)),
        });
        gt_records.push(Record {
            class_id: r.class_id,
            split: r.split,
            feature: round(a.discriminative()),
            transformed: Some(round(b.discriminative())),
        });
    }
    Ok((
        EmbeddingDataset::new(model.feature_dim(), g_records)?,
        EmbeddingDataset::new(model.discriminative_dim(), gt_records)?,
    ))
}

const MODEL_MAGIC: &[u8; 4] = b"FSM1";
const MODEL_VERSION: u32 = 1;

/// Versioned binary model snapshot: header, then every layer's shape and
/// `f64` little-endian weights.
pub fn write_model<W: Write>(model: &ToyModel, mut w: W) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    buf.extend_from_slice(&(model.base_classes as u32).to_le_bytes());
    buf.extend_from_slice(&(model.virtual_pool as u32).to_le_bytes());
    buf.extend_from_slice(&(model.components as u32).to_le_bytes());
    let layers = model.layers();
    buf.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for l in layers {
        buf.extend_from_slice(&(l.outputs as u32).to_le_bytes());
        buf.extend_from_slice(&(l.inputs as u32).to_le_bytes());
        buf.push(u8::from(l.bias.is_some()));
        for v in &l.weights {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(b) = &l.bias {
            for v in b {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    w.write_all(&buf)
        .map_err(|e| Error::Format(format!("write failed: {e}")))
}

pub fn read_model<R: Read>(r: R) -> Result<ToyModel> {
    let mut r = LeReader::new(r);
    let magic: [u8; 4] = r.bytes("model magic")?;
    if &magic != MODEL_MAGIC {
        return Err(Error::Format("not a model snapshot".into()));
    }
    let version = r.u32("model version")?;
    if version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let base_classes = r.u32("base_classes")? as usize;
    let virtual_pool = r.u32("virtual_pool")? as usize;
    let components = r.u32("components")? as usize;
    let count = r.u32("layer count")? as usize;
    if count != 3 && count != 5 {
        return Err(Error::Format(format!("unexpected layer count {count}")));
    }
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let outputs = r.u32("layer outputs")? as usize;
        let inputs = r.u32("layer inputs")? as usize;
        let has_bias = r.u8("bias flag")? != 0;
        let weights = (0..outputs * inputs)
            .map(|_| r.f64("weight"))
            .collect::<Result<Vec<_>>>()?;
        let bias = if has_bias {
            Some((0..outputs).map(|_| r.f64("bias")).collect::<Result<Vec<_>>>()?)
        } else {
            None
        };
        layers.push(Dense {
            inputs,
            outputs,
            weights,
            bias,
        });
    }
    r.expect_eof()?;
    for pair in layers.windows(2) {
        if pair[0].outputs != pair[1].inputs {
            return Err(Error::Format("layer shapes do not chain".into()));
        }
    }
    let classifier = layers.pop().expect("layer count checked");
    let mut it = layers.into_iter();
    let extractor = [it.next().expect("checked"), it.next().expect("checked")];
    let sr = match (it.next(), it.next()) {
        (Some(a), Some(b)) => Some([a, b]),
        _ => None,
    };
    if classifier.outputs != components * (base_classes + virtual_pool) {
        return Err(Error::Format("classifier rows do not match class counts".into()));
    }
    Ok(ToyModel {
        extractor,
        sr,
        classifier,
        base_classes,
        virtual_pool,
        components,
    })
}
