//! Two-stage classification with a transferable and a discriminative bank.
//!
//! The coarse label comes from the transferable bank `h`. When it names a
//! base class the query is re-scored in the discriminative bank `h̃`, which
//! can move it to a novel class.

use fscil::inference::{dual_classify, Decision, Stage};
use fscil::proto::{DualPrototype, PrototypeBank};
use fscil::{DualFeature, FeatureVector};

fn fv(v: &[f64]) -> FeatureVector {
    FeatureVector::new(v.to_vec()).unwrap()
}

fn proto(class_id: u32, v: &[f64]) -> DualPrototype {
    let t: Vec<f64> = v.iter().rev().copied().collect();
    DualPrototype {
        class_id,
        p1: fv(v),
        p2: fv(&t),
        source_count: 5,
    }
}

fn bank(base: &[(u32, [f64; 3])], novel: &[(u32, [f64; 3])]) -> fscil::Result<PrototypeBank> {
    let mut b = PrototypeBank::new(3);
    b.extend(base.iter().map(|(c, v)| proto(*c, v)).collect(), 0)?;
    b.extend(novel.iter().map(|(c, v)| proto(*c, v)).collect(), 1)?;
    Ok(b)
}

pub fn run() -> fscil::Result<Vec<Decision>> {
    // In h the novel class 2 sits close to base class 0; in h̃ they separate.
    let h = bank(&[(0, [1.0, 0.1, 0.0]), (1, [0.0, 1.0, 0.0])], &[(2, [0.9, 0.2, 0.1])])?;
    let h_tilde = bank(&[(0, [1.0, 0.0, 0.0]), (1, [0.0, 1.0, 0.0])], &[(2, [0.0, 0.1, 1.0])])?;

    let query = |g: &[f64], gt: &[f64]| {
        let g = fv(g);
        let gt = fv(gt);
        (
            DualFeature::new(g.clone(), fscil::stim::transform(&g)).unwrap(),
            DualFeature::new(gt.clone(), fscil::stim::transform(&gt)).unwrap(),
        )
    };
    let mut out = Vec::new();
    for (g, gt) in [
        ([1.0, 0.1, 0.0], [0.9, 0.0, 0.1]),
        ([0.95, 0.15, 0.05], [0.05, 0.1, 0.9]),
        ([0.9, 0.2, 0.1], [0.1, 0.1, 1.0]),
        ([0.0, 1.0, 0.1], [0.0, 1.0, 0.1]),
    ] {
        let (x, xt) = query(&g, &gt);
        out.push(dual_classify(&x, &xt, &h, &h_tilde)?);
    }
    Ok(out)
}

fn main() -> fscil::Result<()> {
    for (i, d) in run()?.iter().enumerate() {
        let how = match d.stage {
            Stage::CoarseOnly => "coarse only",
            Stage::Refined => "refined",
        };
        println!("query {i}: coarse {} -> final {} ({how})", d.coarse_label, d.final_label);
    }
    Ok(())
}
