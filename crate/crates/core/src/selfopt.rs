//! Classifier self-optimization: resistance of base-class classifiers
//! against novel-class directions, calibration from confidently matched
//! unlabeled features, and running-mean absorption of labeled old-class
//! samples.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{m_step, normalize_weights, overall_mean, responsibilities, GmmBank, GmmParams, MeanPrior, Weighting};
use crate::proto::{DualPrototype, PrototypeBank};
use crate::seed;
use crate::vector::{cosine, l2_normalize, mean, Component, DualFeature, FeatureVector};

pub const CALIBRATION_TOLERANCE: f64 = 1e-6;
pub const CALIBRATION_MAX_ITERATIONS: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResistConfig {
    /// Upper bound of the prototype shift `γ ~ U(0, gamma_max]`.
    pub gamma_max: f64,
    /// Upper bound of the weight decay factor `γ′ ~ U(0, gamma_prime_max]`.
    pub gamma_prime_max: f64,
    pub seed: u64,
}

impl Default for ResistConfig {
    fn default() -> Self {
        Self {
            gamma_max: 0.3,
            gamma_prime_max: 1.0,
            seed: 0,
        }
    }
}

impl ResistConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_max > 0.0 && self.gamma_max.is_finite()) {
            return Err(Error::Config("gamma_max must be positive".into()));
        }
        if !(self.gamma_prime_max > 0.0 && self.gamma_prime_max <= 1.0) {
            return Err(Error::Config("gamma_prime_max must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// A value per class group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupWeights {
    pub base: f64,
    pub incremental: f64,
}

impl GroupWeights {
    pub fn for_class(&self, is_base: bool) -> f64 {
        if is_base {
            self.base
        } else {
            self.incremental
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibConfig {
    /// Cosine threshold a pool feature must exceed.
    pub r: f64,
    /// Maximum number of pool features per classifier (`R`).
    #[serde(rename = "R", alias = "max_pool")]
    pub max_pool: usize,
    /// Prototype blend weights.
    pub alpha: GroupWeights,
    /// Mean-prior strengths for mixture calibration.
    pub alpha_prime: GroupWeights,
}

impl Default for CalibConfig {
    fn default() -> Self {
        Self {
            r: 0.8,
            max_pool: 40,
            alpha: GroupWeights {
                base: 0.1,
                incremental: 0.6,
            },
            alpha_prime: GroupWeights {
                base: 20.0,
                incremental: 10.0,
            },
        }
    }
}

impl CalibConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > -1.0 && self.r < 1.0) {
            return Err(Error::Config("r must lie in (-1, 1)".into()));
        }
        if self.max_pool == 0 {
            return Err(Error::Config("R must be at least 1".into()));
        }
        for a in [self.alpha.base, self.alpha.incremental] {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config("alpha must lie in [0, 1]".into()));
            }
        }
        for a in [self.alpha_prime.base, self.alpha_prime.incremental] {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::Config("alpha_prime must be non-negative".into()));
            }
        }
        Ok(())
    }
}

/// Fold one session's novel prototypes into the base-class accumulators:
/// `Δ_{c,j} += Σ_i max(S(P̃_{c,j}, P̃_{i,j}), 0) · P̃_{i,j} / ‖P̃_{i,j}‖`.
/// The prototypes themselves are not modified.
pub fn accumulate_resistance(bank: &mut PrototypeBank, novel: &[DualPrototype]) -> Result<()> {
    let base: Vec<u32> = bank.class_ids().filter(|&c| bank.is_base(c)).collect();
    for c in base {
        for j in Component::BOTH {
            let anchor = bank.get(c).ok_or(Error::UnknownClass(c))?.component(j).clone();
            let mut increment = FeatureVector::zeros(bank.dim());
            for p in novel {
                let v = p.component(j);
                let weight = cosine(&anchor, v)?.max(0.0);
                if weight > 0.0 {
                    increment.add_scaled_in_place(&l2_normalize(v)?, weight);
                }
            }
            let delta = bank.resistance_mut(c, j).ok_or(Error::UnknownClass(c))?;
            delta.add_scaled_in_place(&increment, 1.0);
        }
    }
    Ok(())
}

/// `p − γ Δ / ‖Δ‖`; a zero `Δ` leaves `p` unchanged.
pub fn resist_prototype(p: &FeatureVector, delta: &FeatureVector, gamma: f64) -> Result<FeatureVector> {
    let norm = delta.norm();
    if norm == 0.0 {
        return Ok(p.clone());
    }
    let shifted = p.add_scaled(delta, -gamma / norm)?;
    if shifted.is_zero() {
        return Err(Error::ZeroVector);
    }
    Ok(shifted)
}

/// Draw from `U(0, max]`.
fn draw_upper_closed(rng: &mut seed::Rng, max: f64) -> f64 {
    (1.0 - rng.random::<f64>()) * max
}

/// One-shot pre-inference view `P̃′ = P̃ − γ Δ / ‖Δ‖` over base classes.
/// A `γ` is drawn for every base `(c, j)` in ascending order whether or
/// not its accumulator is zero, so the stream depends only on the class set.
pub fn resist_for_inference(bank: &PrototypeBank, cfg: &ResistConfig) -> Result<PrototypeBank> {
    cfg.validate()?;
    let mut rng = seed::rng(cfg.seed);
    let mut view = bank.clone();
    let base: Vec<u32> = bank.class_ids().filter(|&c| bank.is_base(c)).collect();
    for c in base {
        for j in Component::BOTH {
            let gamma = draw_upper_closed(&mut rng, cfg.gamma_max);
            let Some(delta) = bank.resistance(c, j) else { continue };
            let p = view.get_mut(c).ok_or(Error::UnknownClass(c))?.component_mut(j);
            *p = resist_prototype(p, delta, gamma)?;
        }
    }
    Ok(view)
}

/// Indices of at most `max` candidates whose cosine with `reference`
/// exceeds `threshold`, most similar first (ties by index).
pub fn select_pool<'a, I>(reference: &FeatureVector, candidates: I, threshold: f64, max: usize) -> Result<Vec<usize>>
where
    I: IntoIterator<Item = &'a FeatureVector>,
{
    let mut hits = Vec::new();
    for (i, f) in candidates.into_iter().enumerate() {
        let s = cosine(reference, f)?;
        if s > threshold {
            hits.push((i, s));
        }
    }
    hits.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    hits.truncate(max);
    Ok(hits.into_iter().map(|(i, _)| i).collect())
}

/// Blend every prototype toward the mean of its matched pool features,
/// `P_{c,j} ← (1 − α_c) P_{c,j} + α_c avg(X_test)`. All matches are taken
/// against the bank as it was on entry. Returns the number of updated
/// prototype components.
pub fn calibrate_prototypes(bank: &mut PrototypeBank, pool: &[DualFeature], cfg: &CalibConfig) -> Result<usize> {
    cfg.validate()?;
    let frozen = bank.clone();
    let mut updated = 0;
    for p in frozen.iter() {
        let alpha = cfg.alpha.for_class(frozen.is_base(p.class_id));
        if alpha == 0.0 {
            continue;
        }
        for j in Component::BOTH {
            let reference = p.component(j);
            let picked = select_pool(reference, pool.iter().map(|x| x.channel(j)), cfg.r, cfg.max_pool)?;
            if picked.is_empty() {
                continue;
            }
            let avg = mean(picked.iter().map(|&i| pool[i].channel(j)))?;
            let blended = reference.blend(&avg, alpha)?;
            if blended.is_zero() {
                return Err(Error::ZeroVector);
            }
            *bank
                .get_mut(p.class_id)
                .ok_or(Error::UnknownClass(p.class_id))?
                .component_mut(j) = blended;
            updated += 1;
        }
    }
    Ok(updated)
}

/// Running-mean update with trusted labeled samples of an already seen
/// class: `α = n_new / (n_old + n_new)`.
pub fn absorb_labeled(bank: &mut PrototypeBank, class_id: u32, samples: &[DualFeature]) -> Result<()> {
    let proto = bank.get_mut(class_id).ok_or(Error::UnknownClass(class_id))?;
    if samples.is_empty() {
        return Ok(());
    }
    let n_new = samples.len();
    let alpha = n_new as f64 / (proto.source_count + n_new) as f64;
    for j in Component::BOTH {
        let avg = mean(samples.iter().map(|s| s.channel(j)))?;
        let blended = proto.component(j).blend(&avg, alpha)?;
        if blended.is_zero() {
            return Err(Error::ZeroVector);
        }
        *proto.component_mut(j) = blended;
    }
    proto.source_count += n_new;
    Ok(())
}

/// Decay, for every old class and component, the weight of the mixture
/// component closest to each novel class's overall mean:
/// `π^k ← γ′ (1 − S(μ^k, μ_i)) π^k`, then renormalize. Novel classes are
/// applied in ascending id. A decay that would zero every weight is skipped.
pub fn resist_gmm(
    bank: &mut GmmBank,
    novel_classes: &[u32],
    cfg: &ResistConfig,
    weighting: Weighting,
) -> Result<()> {
    cfg.validate()?;
    let mut novel: Vec<u32> = novel_classes.to_vec();
    novel.sort_unstable();
    let mut targets = Vec::with_capacity(novel.len());
    for &i in &novel {
        let pair = bank.mean_pair(i, weighting).ok_or(Error::UnknownClass(i))?;
        targets.push(pair);
    }
    let old: Vec<u32> = bank.class_ids().filter(|c| !novel.contains(c)).collect();
    let mut rng = seed::rng(cfg.seed);
    for c in old {
        for j in Component::BOTH {
            let entry = bank.get_mut(c, j).ok_or(Error::UnknownClass(c))?;
            for target in &targets {
                let gamma = draw_upper_closed(&mut rng, cfg.gamma_prime_max);
                let target = target.channel(j);
                let mut best = (0usize, f64::NEG_INFINITY);
                for (m, mu) in entry.means.iter().enumerate() {
                    let s = cosine(mu, target)?;
                    if s > best.1 {
                        best = (m, s);
                    }
                }
                let (k, s) = best;
                let mut weights = entry.weights.clone();
                weights[k] *= gamma * (1.0 - s);
                if weights.iter().sum::<f64>() > 0.0 {
                    normalize_weights(&mut weights);
                    entry.weights = weights;
                }
            }
        }
    }
    Ok(())
}

/// MAP-EM on pool features with the means pulled toward the fit-time mean
/// prior: `μ^m ← (Σ_n r_nm x_n + α′ μ^p) / (Σ_n r_nm + α′)`. Weights and
/// variances take the ordinary M-step over the pool. An empty pool leaves
/// the entry unchanged.
pub fn calibrate_gmm(entry: &GmmParams, pool: &[FeatureVector], alpha_prime: f64) -> GmmParams {
    if pool.is_empty() {
        return entry.clone();
    }
    let prior_mean = entry.mean_prior.clone();
    let prior = MeanPrior {
        mean: &prior_mean,
        strength: alpha_prime,
    };
    let mut params = entry.clone();
    let (mut resp, mut ll) = responsibilities(&params, pool);
    for _ in 0..CALIBRATION_MAX_ITERATIONS {
        params = m_step(pool, &resp, &params, Some(prior));
        let (next_resp, next_ll) = responsibilities(&params, pool);
        resp = next_resp;
        let change = (next_ll - ll).abs();
        ll = next_ll;
        if change < CALIBRATION_TOLERANCE {
            break;
        }
    }
    params
}

/// Calibrate every mixture of the bank from the shared pool. Each entry
/// selects its pool features against its own overall mean (channel-matched)
/// as the bank stood on entry. Returns the number of updated entries.
pub fn calibrate_gmm_bank(
    bank: &mut GmmBank,
    pool: &[DualFeature],
    cfg: &CalibConfig,
    weighting: Weighting,
) -> Result<usize> {
    cfg.validate()?;
    let frozen = bank.clone();
    let mut updated = 0;
    for (&(c, j), entry) in frozen.entries() {
        let reference = overall_mean(entry, weighting);
        let picked = select_pool(&reference, pool.iter().map(|x| x.channel(j)), cfg.r, cfg.max_pool)?;
        if picked.is_empty() {
            continue;
        }
        let features: Vec<FeatureVector> = picked.iter().map(|&i| pool[i].channel(j).clone()).collect();
        let alpha_prime = cfg.alpha_prime.for_class(frozen.is_base(c));
        *bank.get_mut(c, j).ok_or(Error::UnknownClass(c))? = calibrate_gmm(entry, &features, alpha_prime);
        updated += 1;
    }
    Ok(updated)
}
