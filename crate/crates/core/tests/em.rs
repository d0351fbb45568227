//! EM, MAP calibration and mixture resistance contracts.

mod common;

use common::*;
use fscil::gmm::{fit_gmm, fit_gmm_traced, m_step, responsibilities, GmmParams, MeanPrior, Weighting, VARIANCE_FLOOR};
use fscil::selfopt::{calibrate_gmm, resist_gmm, ResistConfig};
use fscil::vector::Component;
use fscil::FeatureVector;
use rand::Rng;

fn assert_simplex(w: &[f64]) {
    assert!(w.iter().all(|&x| x >= 0.0), "{w:?}");
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12, "{w:?}");
}

fn two_blobs(rng: &mut rand_chacha::ChaCha8Rng, dim: usize, n: usize) -> Vec<FeatureVector> {
    let a: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    let b: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut s = blob(rng, &a, 0.3, n / 2);
    s.extend(blob(rng, &b, 0.5, n - n / 2));
    s
}

#[test]
fn single_component_matches_closed_form() {
    let mut rng = rng(21);
    for trial in 0..50 {
        let dim = rng.random_range(1..=8);
        let n = rng.random_range(2..40);
        let samples = blob(&mut rng, &vec![0.5; dim], 0.4, n);
        let p = fit_gmm(&samples, 1, trial).unwrap();
        assert_eq!(p.weights, vec![1.0]);
        for i in 0..dim {
            let mu = samples.iter().map(|x| x[i]).sum::<f64>() / n as f64;
            let var = samples.iter().map(|x| (x[i] - mu).powi(2)).sum::<f64>() / n as f64;
            assert!((p.means[0][i] - mu).abs() < 1e-9);
            assert!((p.variances[0][i] - var.max(VARIANCE_FLOOR)).abs() < 1e-9);
        }
    }
}

#[test]
fn log_likelihood_never_decreases() {
    let mut rng = rng(22);
    for trial in 0..100 {
        let dim = rng.random_range(1..=6);
        let n = rng.random_range(6..60);
        let samples = two_blobs(&mut rng, dim, n);
        let m = rng.random_range(1..=4);
        let (p, trace) = fit_gmm_traced(&samples, m, trial).unwrap();
        for w in trace.windows(2) {
            assert!(w[1] - w[0] >= -1e-9, "trial {trial}: {trace:?}");
        }
        assert_simplex(&p.weights);
    }
}

#[test]
fn weights_stay_on_simplex_through_resist_and_calibrate() {
    let mut rng = rng(23);
    for trial in 0..60 {
        let dim = rng.random_range(2..=6);
        let mut bank = fscil::gmm::GmmBank::new(dim);
        for c in 0..6u32 {
            let samples: Vec<_> = two_blobs(&mut rng, dim, 20)
                .into_iter()
                .map(|x| fscil::DualFeature::new(x.clone(), x).unwrap())
                .collect();
            bank.fit_class(c, usize::from(c >= 4), &samples, 3, trial).unwrap();
        }
        let cfg = ResistConfig { seed: trial, ..ResistConfig::default() };
        resist_gmm(&mut bank, &[4, 5], &cfg, Weighting::Pi).unwrap();
        for (_, p) in bank.entries() {
            assert_simplex(&p.weights);
            let pool = two_blobs(&mut rng, dim, 12);
            assert_simplex(&calibrate_gmm(p, &pool, 10.0).weights);
        }
    }
}

#[test]
fn zero_prior_strength_is_plain_m_step() {
    let mut rng = rng(24);
    for _ in 0..40 {
        let dim = rng.random_range(1..=6);
        let samples = two_blobs(&mut rng, dim, 30);
        let p = random_gmm(&mut rng, 3, dim);
        let (resp, _) = responsibilities(&p, &samples);
        let prior = MeanPrior { mean: &p.mean_prior, strength: 0.0 };
        assert_eq!(m_step(&samples, &resp, &p, Some(prior)), m_step(&samples, &resp, &p, None));
    }
}

#[test]
fn huge_prior_strength_pins_means_to_prior() {
    let mut rng = rng(25);
    for _ in 0..20 {
        let dim = rng.random_range(1..=6);
        let p = fit_gmm(&two_blobs(&mut rng, dim, 30), 2, 1).unwrap();
        let calibrated = calibrate_gmm(&p, &two_blobs(&mut rng, dim, 20), 1e9);
        for mu in &calibrated.means {
            for i in 0..dim {
                assert!((mu[i] - p.mean_prior[i]).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn empty_pool_leaves_mixture_unchanged() {
    let mut rng = rng(26);
    let p = random_gmm(&mut rng, 2, 4);
    assert_eq!(calibrate_gmm(&p, &[], 10.0), p);
}

#[test]
fn aligned_component_is_decayed_away() {
    let e1 = fv(&[1.0, 0.0]);
    let e2 = fv(&[0.0, 1.0]);
    let old = GmmParams {
        weights: vec![0.5, 0.5],
        means: vec![e1.clone(), e2.clone()],
        variances: vec![fv(&[0.1, 0.1]); 2],
        mean_prior: fv(&[0.5, 0.5]),
    };
    let novel = GmmParams {
        weights: vec![1.0],
        means: vec![e1.clone()],
        variances: vec![fv(&[0.1, 0.1])],
        mean_prior: e1,
    };
    let mut bank = fscil::gmm::GmmBank::new(2);
    bank.insert(0, 0, [old.clone(), old]).unwrap();
    bank.insert(1, 1, [novel.clone(), novel]).unwrap();
    resist_gmm(&mut bank, &[1], &ResistConfig::default(), Weighting::Pi).unwrap();
    for j in Component::BOTH {
        assert_eq!(bank.get(0, j).unwrap().weights, vec![0.0, 1.0]);
        assert_eq!(bank.get(1, j).unwrap().weights, vec![1.0]);
    }
}
