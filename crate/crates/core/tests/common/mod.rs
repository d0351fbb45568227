#![allow(dead_code)]

use fscil::gmm::{GmmBank, GmmParams};
use fscil::proto::{DualPrototype, PrototypeBank};
use fscil::{DualFeature, FeatureVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fv(v: &[f64]) -> FeatureVector {
    FeatureVector::new(v.to_vec()).unwrap()
}

/// Uniform entries in `[-1, 1]`, or `[0, 1]` when `non_negative`; never zero.
pub fn random_vector(rng: &mut ChaCha8Rng, dim: usize, non_negative: bool) -> FeatureVector {
    loop {
        let v: Vec<f64> = (0..dim)
            .map(|_| {
                let u: f64 = rng.random();
                if non_negative {
                    u
                } else {
                    2.0 * u - 1.0
                }
            })
            .collect();
        if v.iter().any(|x| *x != 0.0) {
            return FeatureVector::new(v).unwrap();
        }
    }
}

pub fn random_dual(rng: &mut ChaCha8Rng, dim: usize, non_negative: bool) -> DualFeature {
    DualFeature::new(random_vector(rng, dim, non_negative), random_vector(rng, dim, non_negative)).unwrap()
}

/// Random prototypes for `n` classes; some are exact duplicates of an
/// earlier class to create ties.
pub fn random_prototypes(rng: &mut ChaCha8Rng, n: usize, dim: usize, non_negative: bool) -> Vec<DualPrototype> {
    let mut out: Vec<DualPrototype> = Vec::with_capacity(n);
    for c in 0..n as u32 {
        let dual = if c > 0 && rng.random_bool(0.1) {
            out[rng.random_range(0..out.len())].as_dual()
        } else {
            random_dual(rng, dim, non_negative)
        };
        out.push(DualPrototype {
            class_id: c,
            p1: dual.original,
            p2: dual.transformed,
            source_count: 1,
        });
    }
    out
}

/// Bank with classes `0..base` in session 0 and the rest in session 1.
pub fn bank_of(protos: &[DualPrototype], base: usize, dim: usize) -> PrototypeBank {
    let mut bank = PrototypeBank::new(dim);
    bank.extend(protos[..base].to_vec(), 0).unwrap();
    if protos.len() > base {
        bank.extend(protos[base..].to_vec(), 1).unwrap();
    }
    bank
}

/// Cosine written out independently of the library.
pub fn naive_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    ab / (aa.sqrt() * bb.sqrt())
}

pub fn naive_set_score(x: &DualFeature, p: &DualFeature) -> f64 {
    0.5 * (naive_cosine(x.original.as_slice(), p.original.as_slice())
        + naive_cosine(x.transformed.as_slice(), p.transformed.as_slice()))
}

/// Exhaustive argmax; the first maximal entry in the given order wins.
pub fn oracle_argmax(x: &DualFeature, candidates: &[(u32, DualFeature)]) -> u32 {
    let scores: Vec<f64> = candidates.iter().map(|(_, p)| naive_set_score(x, p)).collect();
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    candidates
        .iter()
        .zip(&scores)
        .filter(|(_, s)| **s == best)
        .map(|((c, _), _)| *c)
        .min()
        .unwrap()
}

pub fn random_gmm(rng: &mut ChaCha8Rng, m: usize, dim: usize) -> GmmParams {
    let mut weights: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    GmmParams {
        weights,
        means: (0..m).map(|_| random_vector(rng, dim, true)).collect(),
        variances: (0..m)
            .map(|_| FeatureVector::new((0..dim).map(|_| rng.random_range(0.01..0.5)).collect()).unwrap())
            .collect(),
        mean_prior: random_vector(rng, dim, true),
    }
}

pub fn random_gmm_bank(rng: &mut ChaCha8Rng, n: usize, base: usize, dim: usize) -> GmmBank {
    let mut bank = GmmBank::new(dim);
    for c in 0..n as u32 {
        let m = rng.random_range(1..=3);
        let pair = [random_gmm(rng, m, dim), random_gmm(rng, m, dim)];
        bank.insert(c, usize::from(c as usize >= base), pair).unwrap();
    }
    bank
}

/// Gaussian blob samples around `center`.
pub fn blob(rng: &mut ChaCha8Rng, center: &[f64], spread: f64, n: usize) -> Vec<FeatureVector> {
    use rand_distr::{Distribution, StandardNormal};
    (0..n)
        .map(|_| {
            FeatureVector::new(
                center
                    .iter()
                    .map(|c| c + spread * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
                    .collect(),
            )
            .unwrap()
        })
        .collect()
}
