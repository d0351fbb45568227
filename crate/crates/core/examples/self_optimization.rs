//! Resistance, calibration and labeled absorption on one prototype bank.

use fscil::proto::{DualPrototype, PrototypeBank};
use fscil::selfopt::{
    absorb_labeled, accumulate_resistance, calibrate_prototypes, resist_for_inference, CalibConfig, ResistConfig,
};
use fscil::vector::{cosine, Component};
use fscil::{DualFeature, FeatureVector};

fn fv(v: &[f64]) -> FeatureVector {
    FeatureVector::new(v.to_vec()).unwrap()
}

fn dual(v: &[f64]) -> DualFeature {
    let f = fv(v);
    DualFeature::new(f.clone(), fscil::stim::transform(&f)).unwrap()
}

fn proto(class_id: u32, v: &[f64]) -> DualPrototype {
    let d = dual(v);
    DualPrototype {
        class_id,
        p1: d.original,
        p2: d.transformed,
        source_count: 5,
    }
}

pub struct Summary {
    pub base_shift: f64,
    pub calibrated: usize,
    pub absorbed_count: usize,
}

pub fn run() -> fscil::Result<Summary> {
    let mut bank = PrototypeBank::new(3);
    bank.extend(vec![proto(0, &[1.0, 0.2, 0.0]), proto(1, &[0.0, 1.0, 0.3])], 0)?;

    // A novel class that leans toward base class 0.
    let novel = vec![proto(2, &[0.8, 0.0, 0.6])];
    accumulate_resistance(&mut bank, &novel)?;
    bank.extend(novel, 1)?;

    let view = resist_for_inference(&bank, &ResistConfig { seed: 1, ..ResistConfig::default() })?;
    let before = bank.get(0).unwrap().component(Component::Original);
    let after = view.get(0).unwrap().component(Component::Original);
    let base_shift = 1.0 - cosine(before, after)?;

    let pool: Vec<DualFeature> = [[0.9, 0.25, 0.05], [0.95, 0.15, 0.0], [0.7, 0.1, 0.7], [0.1, 0.9, 0.35]]
        .iter()
        .map(|v| dual(v))
        .collect();
    let calibrated = calibrate_prototypes(&mut bank, &pool, &CalibConfig { max_pool: 2, ..CalibConfig::default() })?;

    absorb_labeled(&mut bank, 2, &[dual(&[0.75, 0.05, 0.65]), dual(&[0.85, 0.0, 0.55])])?;
    Ok(Summary {
        base_shift,
        calibrated,
        absorbed_count: bank.get(2).unwrap().source_count,
    })
}

fn main() -> fscil::Result<()> {
    let s = run()?;
    println!("resisted base prototype moved by 1 - cos = {:.4}", s.base_shift);
    println!("calibrated {} prototype components", s.calibrated);
    println!("class 2 now averages {} labeled samples", s.absorbed_count);
    Ok(())
}
