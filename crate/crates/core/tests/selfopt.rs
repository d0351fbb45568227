//! Self-optimization contracts: calibration, absorption and resistance.

mod common;

use common::*;
use fscil::proto::{DualPrototype, PrototypeBank};
use fscil::selfopt::{
    absorb_labeled, accumulate_resistance, calibrate_prototypes, resist_for_inference, resist_prototype,
    select_pool, CalibConfig, GroupWeights, ResistConfig,
};
use fscil::vector::{mean, Component};
use fscil::DualFeature;
use rand::Rng;

fn proto(c: u32, a: &[f64], b: &[f64]) -> DualPrototype {
    DualPrototype {
        class_id: c,
        p1: fv(a),
        p2: fv(b),
        source_count: 5,
    }
}

fn random_setup(seed: u64) -> (PrototypeBank, Vec<DualFeature>) {
    let mut rng = rng(seed);
    let dim = rng.random_range(2..=8);
    let protos = random_prototypes(&mut rng, 8, dim, true);
    let mut bank = bank_of(&protos, 5, dim);
    accumulate_resistance(&mut bank, &[]).unwrap();
    let pool = (0..40).map(|_| random_dual(&mut rng, dim, true)).collect();
    (bank, pool)
}

#[test]
fn resist_prototype_hand_oracle() {
    let out = resist_prototype(&fv(&[1.0, 0.0]), &fv(&[0.0, 2.0]), 0.5).unwrap();
    assert_eq!(out.as_slice(), &[1.0, -0.5]);
    let same = resist_prototype(&fv(&[1.0, 0.0]), &fv(&[0.0, 0.0]), 0.5).unwrap();
    assert_eq!(same.as_slice(), &[1.0, 0.0]);
}

#[test]
fn accumulator_hand_oracle() {
    let mut bank = PrototypeBank::new(2);
    bank.extend(vec![proto(0, &[1.0, 0.0], &[0.0, 1.0])], 0).unwrap();
    let novel = vec![proto(1, &[1.0, 1.0], &[-1.0, 0.0])];
    accumulate_resistance(&mut bank, &novel).unwrap();
    let h = 0.5_f64;
    let d1 = bank.resistance(0, Component::Original).unwrap();
    assert!((d1[0] - h).abs() < 1e-15 && (d1[1] - h).abs() < 1e-15);
    // The transformed novel prototype is orthogonal, so it contributes nothing.
    assert!(bank.resistance(0, Component::Transformed).unwrap().is_zero());
}

#[test]
fn zero_alpha_and_empty_pool_are_exact_noops() {
    for seed in 0..30 {
        let (bank, pool) = random_setup(seed);
        let mut a = bank.clone();
        let cfg = CalibConfig {
            alpha: GroupWeights { base: 0.0, incremental: 0.0 },
            r: -0.99,
            ..CalibConfig::default()
        };
        assert_eq!(calibrate_prototypes(&mut a, &pool, &cfg).unwrap(), 0);
        assert_eq!(a, bank);
        let mut b = bank.clone();
        assert_eq!(calibrate_prototypes(&mut b, &[], &CalibConfig::default()).unwrap(), 0);
        assert_eq!(b, bank);
    }
}

#[test]
fn calibration_is_a_convex_combination() {
    for seed in 0..30 {
        let (bank, pool) = random_setup(seed);
        let cfg = CalibConfig { r: 0.6, max_pool: 7, ..CalibConfig::default() };
        let mut out = bank.clone();
        calibrate_prototypes(&mut out, &pool, &cfg).unwrap();
        for p in bank.iter() {
            let alpha = cfg.alpha.for_class(bank.is_base(p.class_id));
            for j in Component::BOTH {
                let before = p.component(j);
                let picked = select_pool(before, pool.iter().map(|x| x.channel(j)), cfg.r, cfg.max_pool).unwrap();
                assert!(picked.len() <= cfg.max_pool);
                let after = out.get(p.class_id).unwrap().component(j);
                if picked.is_empty() {
                    assert_eq!(after, before);
                    continue;
                }
                let avg = mean(picked.iter().map(|&i| pool[i].channel(j))).unwrap();
                for i in 0..before.dim() {
                    let expected = (1.0 - alpha) * before[i] + alpha * avg[i];
                    assert!((after[i] - expected).abs() < 1e-12);
                    let (lo, hi) = (before[i].min(avg[i]), before[i].max(avg[i]));
                    assert!(after[i] >= lo - 1e-12 && after[i] <= hi + 1e-12);
                }
            }
        }
    }
}

#[test]
fn streaming_absorb_matches_batch() {
    let mut rng = rng(41);
    for _ in 0..50 {
        let dim = rng.random_range(1..=8);
        let protos = random_prototypes(&mut rng, 3, dim, true);
        let bank = bank_of(&protos, 3, dim);
        let samples: Vec<DualFeature> = (0..rng.random_range(1..12)).map(|_| random_dual(&mut rng, dim, true)).collect();
        let mut batch = bank.clone();
        absorb_labeled(&mut batch, 1, &samples).unwrap();
        let mut stream = bank.clone();
        for s in &samples {
            absorb_labeled(&mut stream, 1, std::slice::from_ref(s)).unwrap();
        }
        let (a, b) = (batch.get(1).unwrap(), stream.get(1).unwrap());
        assert_eq!(a.source_count, b.source_count);
        for j in Component::BOTH {
            for i in 0..dim {
                assert!((a.component(j)[i] - b.component(j)[i]).abs() < 1e-9);
            }
        }
        let mut noop = bank.clone();
        absorb_labeled(&mut noop, 1, &[]).unwrap();
        assert_eq!(noop, bank);
    }
}

#[test]
fn resist_view_leaves_bank_untouched() {
    let mut rng = rng(42);
    for seed in 0..30 {
        let dim = rng.random_range(2..=8);
        let protos = random_prototypes(&mut rng, 9, dim, true);
        let mut bank = bank_of(&protos[..6], 6, dim);
        accumulate_resistance(&mut bank, &protos[6..]).unwrap();
        bank.extend(protos[6..].to_vec(), 1).unwrap();
        let before = bank.clone();
        let cfg = ResistConfig { seed, ..ResistConfig::default() };
        let view = resist_for_inference(&bank, &cfg).unwrap();
        assert_eq!(bank, before);
        assert_eq!(view, resist_for_inference(&bank, &cfg).unwrap());
        for p in bank.iter() {
            let v = view.get(p.class_id).unwrap();
            for j in Component::BOTH {
                let shift = v.component(j).add_scaled(p.component(j), -1.0).unwrap().norm();
                if bank.is_base(p.class_id) {
                    assert!(shift <= cfg.gamma_max + 1e-12);
                } else {
                    assert_eq!(shift, 0.0);
                }
            }
        }
    }
}
