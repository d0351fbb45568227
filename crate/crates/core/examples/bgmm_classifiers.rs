//! Gaussian-mixture classifiers per class, with resistance and MAP
//! calibration applied when novel classes arrive.

use fscil::gmm::{gmm_classify, GmmBank, Weighting};
use fscil::selfopt::{calibrate_gmm_bank, resist_gmm, CalibConfig, ResistConfig};
use fscil::vector::Component;
use fscil::{DualFeature, FeatureVector};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

fn cluster(rng: &mut rand_chacha::ChaCha8Rng, centers: &[[f64; 4]], n: usize) -> Vec<DualFeature> {
    let noise = Normal::new(0.0, 0.08).unwrap();
    (0..n)
        .map(|k| {
            let c = centers[k % centers.len()];
            let v: Vec<f64> = c.iter().map(|x| (x + noise.sample(rng)).max(0.0) + 1e-3).collect();
            let f = FeatureVector::new(v).unwrap();
            DualFeature::new(f.clone(), fscil::stim::transform(&f)).unwrap()
        })
        .collect()
}

pub fn run() -> fscil::Result<(GmmBank, f64)> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let base = [
        vec![[1.0, 0.2, 0.0, 0.0], [0.8, 0.0, 0.4, 0.0]],
        vec![[0.0, 1.0, 0.1, 0.0], [0.0, 0.7, 0.0, 0.6]],
        vec![[0.0, 0.0, 1.0, 0.3]],
    ];
    let novel = [[0.7, 0.1, 0.5, 0.1], [0.1, 0.1, 0.1, 1.0]];

    let mut bank = GmmBank::new(4);
    for (c, centers) in base.iter().enumerate() {
        bank.fit_class(c as u32, 0, &cluster(&mut rng, centers, 30), 3, 11)?;
    }
    for (i, center) in novel.iter().enumerate() {
        bank.fit_class(3 + i as u32, 1, &cluster(&mut rng, &[*center], 5), 1, 11)?;
    }
    resist_gmm(&mut bank, &[3, 4], &ResistConfig::default(), Weighting::Pi)?;

    let mut test = Vec::new();
    for (c, centers) in base.iter().enumerate() {
        test.extend(cluster(&mut rng, centers, 20).into_iter().map(|x| (c as u32, x)));
    }
    for (i, center) in novel.iter().enumerate() {
        test.extend(cluster(&mut rng, &[*center], 20).into_iter().map(|x| (3 + i as u32, x)));
    }
    let pool: Vec<DualFeature> = test.iter().map(|(_, x)| x.clone()).collect();
    calibrate_gmm_bank(&mut bank, &pool, &CalibConfig::default(), Weighting::Pi)?;

    let mut hits = 0;
    for (y, x) in &test {
        hits += usize::from(gmm_classify(x, &bank, Weighting::Pi)? == *y);
    }
    Ok((bank, hits as f64 / test.len() as f64))
}

fn main() -> fscil::Result<()> {
    let (bank, accuracy) = run()?;
    for c in bank.class_ids() {
        let p = bank.get(c, Component::Original).unwrap();
        let w: Vec<String> = p.weights.iter().map(|w| format!("{w:.3}")).collect();
        println!("class {c} (session {}): weights [{}]", bank.session_of(c).unwrap(), w.join(", "));
    }
    println!("accuracy {accuracy:.3}");
    Ok(())
}
