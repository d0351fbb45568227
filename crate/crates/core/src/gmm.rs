//! Diagonal-covariance Gaussian mixture classifiers.
//!
//! Each class holds one mixture per dual component. Fitting is plain EM
//! seeded by k-means++; the mean prior recorded at fit time anchors the
//! MAP calibration step in `selfopt`.

use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::vector::{cosine_set, mean, Component, DualFeature, FeatureVector};

pub const VARIANCE_FLOOR: f64 = 1e-6;
pub const FIT_TOLERANCE: f64 = 1e-6;
pub const FIT_MAX_ITERATIONS: usize = 200;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// How component means are combined into one class mean.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// `Σ_m π^m μ^m`.
    #[default]
    Pi,
    /// `Σ_m Σ^m ⊙ μ^m`, entrywise.
    Sigma,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GmmParams {
    pub weights: Vec<f64>,
    pub means: Vec<FeatureVector>,
    /// Diagonal variances, one vector per component.
    pub variances: Vec<FeatureVector>,
    /// Overall mean of the samples the mixture was fitted on.
    pub mean_prior: FeatureVector,
}

impl GmmParams {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.mean_prior.dim()
    }

    /// `ln(π_m N(x | μ_m, Σ_m))` for every component.
    pub fn component_log_densities(&self, x: &FeatureVector) -> Vec<f64> {
        (0..self.components())
            .map(|m| {
                let w = self.weights[m];
                if w <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let mu = self.means[m].as_slice();
                let var = self.variances[m].as_slice();
                let mut acc = 0.0;
                for i in 0..x.dim() {
                    let d = x[i] - mu[i];
                    acc += LN_2PI + var[i].ln() + d * d / var[i];
                }
                w.ln() - 0.5 * acc
            })
            .collect()
    }

    pub fn log_likelihood(&self, samples: &[FeatureVector]) -> f64 {
        samples
            .iter()
            .map(|x| log_sum_exp(&self.component_log_densities(x)))
            .sum()
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// E-step: per-sample responsibilities and the data log-likelihood.
pub fn responsibilities(params: &GmmParams, samples: &[FeatureVector]) -> (Vec<Vec<f64>>, f64) {
    let mut total = 0.0;
    let resp = samples
        .iter()
        .map(|x| {
            let logs = params.component_log_densities(x);
            let lse = log_sum_exp(&logs);
            total += lse;
            logs.iter().map(|l| (l - lse).exp()).collect()
        })
        .collect();
    (resp, total)
}

/// Mean prior `μ^p` with its strength `α′` for the MAP mean update.
#[derive(Clone, Copy, Debug)]
pub struct MeanPrior<'a> {
    pub mean: &'a FeatureVector,
    pub strength: f64,
}

/// M-step over `samples` weighted by `resp`.
///
/// With a prior the mean update becomes
/// `μ_m = (Σ_n r_nm x_n + α′ μ^p) / (Σ_n r_nm + α′)`. Components that
/// receive no mass keep their previous mean and variance with weight zero.
/// The mean prior carried on the result is `previous.mean_prior`.
pub fn m_step(
    samples: &[FeatureVector],
    resp: &[Vec<f64>],
    previous: &GmmParams,
    prior: Option<MeanPrior<'_>>,
) -> GmmParams {
    let m_count = previous.components();
    let dim = previous.dim();
    let n = samples.len() as f64;
    let mut weights = vec![0.0; m_count];
    let mut means = previous.means.clone();
    let mut variances = previous.variances.clone();

    for m in 0..m_count {
        let mass: f64 = resp.iter().map(|r| r[m]).sum();
        weights[m] = mass / n;
        let strength = prior.map_or(0.0, |p| p.strength);
        if mass + strength <= 0.0 {
            continue;
        }
        let mut acc = vec![0.0; dim];
        for (x, r) in samples.iter().zip(resp) {
            for i in 0..dim {
                acc[i] += r[m] * x[i];
            }
        }
        if let Some(p) = prior {
            for (a, pm) in acc.iter_mut().zip(p.mean.as_slice()) {
                *a += p.strength * pm;
            }
        }
        let mu: Vec<f64> = acc.iter().map(|a| a / (mass + strength)).collect();
        if mass > 0.0 {
            let mut var = vec![0.0; dim];
            for (x, r) in samples.iter().zip(resp) {
                for i in 0..dim {
                    let d = x[i] - mu[i];
                    var[i] += r[m] * d * d;
                }
            }
            variances[m] = FeatureVector::from_finite(
                var.into_iter().map(|v| (v / mass).max(VARIANCE_FLOOR)).collect(),
            );
        }
        means[m] = FeatureVector::from_finite(mu);
    }

    normalize_weights(&mut weights);
    GmmParams {
        weights,
        means,
        variances,
        mean_prior: previous.mean_prior.clone(),
    }
}

pub(crate) fn normalize_weights(weights: &mut [f64]) {
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        for w in weights.iter_mut() {
            *w /= total;
        }
    }
}

fn squared_distance(a: &FeatureVector, b: &FeatureVector) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.dim() {
        let d = a[i] - b[i];
        acc += d * d;
    }
    acc
}

/// k-means++ seeding: first center uniform, the rest by D² sampling.
fn kmeans_pp_centers(samples: &[FeatureVector], k: usize, rng: &mut seed::Rng) -> Vec<usize> {
    let mut centers = vec![rng.random_range(0..samples.len())];
    let mut d2: Vec<f64> = samples
        .iter()
        .map(|x| squared_distance(x, &samples[centers[0]]))
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut cumulative = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                cumulative += d;
                if d > 0.0 && cumulative > target {
                    pick = Some(i);
                    break;
                }
            }
            pick.or_else(|| d2.iter().rposition(|&d| d > 0.0)).unwrap_or(0)
        } else {
            // All remaining samples coincide with a center.
            (0..samples.len())
                .find(|i| !centers.contains(i))
                .unwrap_or(0)
        };
        centers.push(next);
        for (i, x) in samples.iter().enumerate() {
            d2[i] = d2[i].min(squared_distance(x, &samples[next]));
        }
    }
    centers
}

fn initial_params(samples: &[FeatureVector], k: usize, rng: &mut seed::Rng) -> Result<GmmParams> {
    let dim = samples[0].dim();
    let overall = mean(samples.iter())?;
    let mut global_var = vec![0.0; dim];
    for x in samples {
        for i in 0..dim {
            let d = x[i] - overall[i];
            global_var[i] += d * d;
        }
    }
    let global_var = FeatureVector::from_finite(
        global_var
            .into_iter()
            .map(|v| (v / samples.len() as f64).max(VARIANCE_FLOOR))
            .collect(),
    );

    let centers = kmeans_pp_centers(samples, k, rng);
    let resp: Vec<Vec<f64>> = samples
        .iter()
        .map(|x| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (m, &c) in centers.iter().enumerate() {
                let d = squared_distance(x, &samples[c]);
                if d < best_d {
                    best_d = d;
                    best = m;
                }
            }
            let mut r = vec![0.0; k];
            r[best] = 1.0;
            r
        })
        .collect();
    let seedling = GmmParams {
        weights: vec![1.0 / k as f64; k],
        means: centers.iter().map(|&c| samples[c].clone()).collect(),
        variances: vec![global_var; k],
        mean_prior: overall,
    };
    Ok(m_step(samples, &resp, &seedling, None))
}

/// Fit a mixture and return the log-likelihood after every EM iteration
/// (the first entry is the likelihood of the k-means++ initialization).
pub fn fit_gmm_traced(samples: &[FeatureVector], components: usize, seed: u64) -> Result<(GmmParams, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    if components == 0 {
        return Err(Error::Config("mixture needs at least one component".into()));
    }
    let dim = samples[0].dim();
    if let Some(bad) = samples.iter().find(|s| s.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.dim(),
        });
    }
    let k = components.min(samples.len());
    let mut rng = seed::rng(seed);
    let mut params = initial_params(samples, k, &mut rng)?;
    let (mut resp, mut ll) = responsibilities(&params, samples);
    let mut trace = vec![ll];
    for _ in 0..FIT_MAX_ITERATIONS {
        let next = m_step(samples, &resp, &params, None);
        let (next_resp, next_ll) = responsibilities(&next, samples);
        trace.push(next_ll);
        params = next;
        resp = next_resp;
        let improvement = next_ll - ll;
        ll = next_ll;
        if improvement < FIT_TOLERANCE {
            break;
        }
    }
    Ok((params, trace))
}

pub fn fit_gmm(samples: &[FeatureVector], components: usize, seed: u64) -> Result<GmmParams> {
    fit_gmm_traced(samples, components, seed).map(|(p, _)| p)
}

pub fn overall_mean(params: &GmmParams, weighting: Weighting) -> FeatureVector {
    let dim = params.dim();
    let mut acc = vec![0.0; dim];
    for m in 0..params.components() {
        let mu = &params.means[m];
        match weighting {
            Weighting::Pi => {
                let w = params.weights[m];
                for i in 0..dim {
                    acc[i] += w * mu[i];
                }
            }
            Weighting::Sigma => {
                let var = &params.variances[m];
                for i in 0..dim {
                    acc[i] += var[i] * mu[i];
                }
            }
        }
    }
    FeatureVector::from_finite(acc)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GmmBank {
    dim: usize,
    entries: BTreeMap<(u32, Component), GmmParams>,
    session_of: BTreeMap<u32, usize>,
}

impl GmmBank {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: BTreeMap::new(),
            session_of: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.session_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.session_of.is_empty()
    }

    pub fn get(&self, class_id: u32, j: Component) -> Option<&GmmParams> {
        self.entries.get(&(class_id, j))
    }

    pub(crate) fn get_mut(&mut self, class_id: u32, j: Component) -> Option<&mut GmmParams> {
        self.entries.get_mut(&(class_id, j))
    }

    pub fn class_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.session_of.keys().copied()
    }

    pub fn session_of(&self, class_id: u32) -> Option<usize> {
        self.session_of.get(&class_id).copied()
    }

    pub fn is_base(&self, class_id: u32) -> bool {
        self.session_of(class_id) == Some(0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(u32, Component), &GmmParams)> {
        self.entries.iter()
    }

    pub fn insert(&mut self, class_id: u32, session: usize, pair: [GmmParams; 2]) -> Result<()> {
        if self.session_of.contains_key(&class_id) {
            return Err(Error::DuplicateClass(class_id));
        }
        for p in &pair {
            if p.dim() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    found: p.dim(),
                });
            }
        }
        let [first, second] = pair;
        self.entries.insert((class_id, Component::Original), first);
        self.entries.insert((class_id, Component::Transformed), second);
        self.session_of.insert(class_id, session);
        Ok(())
    }

    /// Fit both components of one class from its dual training features.
    pub fn fit_class(
        &mut self,
        class_id: u32,
        session: usize,
        samples: &[DualFeature],
        components: usize,
        seed: u64,
    ) -> Result<()> {
        if samples.is_empty() {
            return Err(Error::EmptyClass(class_id));
        }
        let originals: Vec<FeatureVector> = samples.iter().map(|s| s.original.clone()).collect();
        let transformed: Vec<FeatureVector> = samples.iter().map(|s| s.transformed.clone()).collect();
        let a = fit_gmm(&originals, components, seed::mix(seed, &[u64::from(class_id), 1]))?;
        let b = fit_gmm(&transformed, components, seed::mix(seed, &[u64::from(class_id), 2]))?;
        self.insert(class_id, session, [a, b])
    }

    /// Overall-mean pair of one class.
    pub fn mean_pair(&self, class_id: u32, weighting: Weighting) -> Option<DualFeature> {
        let a = self.get(class_id, Component::Original)?;
        let b = self.get(class_id, Component::Transformed)?;
        Some(DualFeature {
            original: overall_mean(a, weighting),
            transformed: overall_mean(b, weighting),
        })
    }
}

/// Argmax of `cosine_set` against each class's overall-mean pair.
pub fn gmm_classify(x: &DualFeature, bank: &GmmBank, weighting: Weighting) -> Result<u32> {
    let mut best: Option<(u32, f64)> = None;
    for c in bank.class_ids() {
        let pair = bank.mean_pair(c, weighting).ok_or(Error::UnknownClass(c))?;
        let s = cosine_set(x, &pair)?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((c, s));
        }
    }
    best.map(|(c, _)| c).ok_or(Error::EmptyBank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn single_component_is_closed_form() {
        let samples = vec![fv(&[1.0, 2.0]), fv(&[3.0, 2.5]), fv(&[2.0, 4.0]), fv(&[0.0, 3.5])];
        let p = fit_gmm(&samples, 1, 9).unwrap();
        assert_eq!(p.weights, vec![1.0]);
        assert!((p.means[0][0] - 1.5).abs() < 1e-12);
        assert!((p.means[0][1] - 3.0).abs() < 1e-12);
        // biased variance: mean of squared deviations
        assert!((p.variances[0][0] - 1.25).abs() < 1e-12);
        assert!((p.variances[0][1] - 0.625).abs() < 1e-12);
        assert_eq!(p.mean_prior, p.means[0]);
    }

    #[test]
    fn components_capped_by_sample_count() {
        let samples = vec![fv(&[1.0]), fv(&[2.0])];
        let p = fit_gmm(&samples, 3, 1).unwrap();
        assert_eq!(p.components(), 2);
        assert!(matches!(fit_gmm(&[], 1, 1), Err(Error::EmptySampleSet)));
    }

    #[test]
    fn identical_samples_hit_variance_floor() {
        let samples = vec![fv(&[0.5, 0.5]); 5];
        let p = fit_gmm(&samples, 3, 4).unwrap();
        let total: f64 = p.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        for v in &p.variances {
            assert!(v.as_slice().iter().all(|&x| x >= VARIANCE_FLOOR));
        }
    }

    #[test]
    fn separates_two_clusters() {
        let mut rng = seed::rng(11);
        let sigma = 0.1;
        let mut samples = Vec::new();
        for center in [[0.0, 0.0], [3.0, 3.0]] {
            for _ in 0..50 {
                let x: f64 = rng.sample(StandardNormal);
                let y: f64 = rng.sample(StandardNormal);
                samples.push(fv(&[center[0] + sigma * x, center[1] + sigma * y]));
            }
        }
        let p = fit_gmm(&samples, 2, 5).unwrap();
        let bound = 3.0 * sigma / 50f64.sqrt() * 2f64.sqrt();
        let mut found = [false, false];
        for (m, mu) in p.means.iter().enumerate() {
            for (k, center) in [[0.0, 0.0], [3.0, 3.0]].iter().enumerate() {
                let d = ((mu[0] - center[0]).powi(2) + (mu[1] - center[1]).powi(2)).sqrt();
                if d < bound {
                    found[k] = true;
                    assert!((p.weights[m] - 0.5).abs() < 0.1);
                }
            }
        }
        assert_eq!(found, [true, true]);
    }

    #[test]
    fn overall_mean_modes() {
        let p = GmmParams {
            weights: vec![0.25, 0.75],
            means: vec![fv(&[0.0, 4.0]), fv(&[4.0, 0.0])],
            variances: vec![fv(&[1.0, 1.0]), fv(&[1.0, 1.0])],
            mean_prior: fv(&[3.0, 1.0]),
        };
        assert_eq!(overall_mean(&p, Weighting::Pi), fv(&[3.0, 1.0]));
        assert_eq!(overall_mean(&p, Weighting::Sigma), fv(&[4.0, 4.0]));
        let single = GmmParams {
            weights: vec![1.0],
            means: vec![fv(&[2.0, 3.0])],
            variances: vec![fv(&[1.0, 1.0])],
            mean_prior: fv(&[2.0, 3.0]),
        };
        assert_eq!(overall_mean(&single, Weighting::Pi), fv(&[2.0, 3.0]));
        assert_eq!(overall_mean(&single, Weighting::Sigma), fv(&[2.0, 3.0]));
    }

    fn unit_bank(pairs: &[(u32, [f64; 2])]) -> GmmBank {
        let mut bank = GmmBank::new(2);
        for &(c, m) in pairs {
            let p = GmmParams {
                weights: vec![1.0],
                means: vec![fv(&m)],
                variances: vec![fv(&[1.0, 1.0])],
                mean_prior: fv(&m),
            };
            bank.insert(c, 0, [p.clone(), p]).unwrap();
        }
        bank
    }

    #[test]
    fn classify_exact_and_ties() {
        let bank = unit_bank(&[(0, [1.0, 0.0]), (1, [0.0, 1.0]), (2, [1.0, 1.0])]);
        let q = DualFeature::new(fv(&[0.0, 2.0]), fv(&[0.0, 3.0])).unwrap();
        assert_eq!(gmm_classify(&q, &bank, Weighting::Pi).unwrap(), 1);
        let tied = unit_bank(&[(5, [1.0, 0.0]), (3, [1.0, 0.0])]);
        let q = DualFeature::new(fv(&[1.0, 0.1]), fv(&[1.0, 0.1])).unwrap();
        assert_eq!(gmm_classify(&q, &tied, Weighting::Pi).unwrap(), 3);
        assert!(matches!(
            gmm_classify(&q, &GmmBank::new(2), Weighting::Pi),
            Err(Error::EmptyBank)
        ));
    }
}
