use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingDataset, Record, Split};
use crate::error::{Error, Result};
use crate::seed;
use crate::stim::make_intra_pair;
use crate::vector::FeatureVector;

/// Gaussian-cluster generator parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: u32,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Per-coordinate standard deviation around the class center.
    pub spread: f64,
    /// Radius of the sphere the class centers lie on.
    pub separation: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: 20,
            dim: 32,
            train_per_class: 20,
            test_per_class: 20,
            spread: 0.05,
            separation: 1.0,
            seed: 0,
        }
    }
}

/// Class `c` is drawn from an isotropic Gaussian around `separation * u_c`,
/// `u_c` a random unit direction. Values are rounded to `f32` so the
/// dataset survives the binary format unchanged; the transformed channel is
/// the intra-class transform of each sample.
pub fn synth_generate(spec: &SynthSpec) -> Result<EmbeddingDataset> {
    if spec.classes == 0 || spec.dim == 0 || spec.train_per_class + spec.test_per_class == 0 {
        return Err(Error::Config("class count, dim and sample counts must be positive".into()));
    }
    if !(spec.spread > 0.0 && spec.spread.is_finite()) {
        return Err(Error::Config("spread must be positive".into()));
    }
    if !(spec.separation > 0.0 && spec.separation.is_finite()) {
        return Err(Error::Config("separation must be positive".into()));
    }

    let mut rng = seed::rng(seed::derive(spec.seed, "synth"));
    let mut centers = Vec::with_capacity(spec.classes as usize);
    for _ in 0..spec.classes {
        let dir = loop {
            let v: Vec<f64> = (0..spec.dim).map(|_| rng.sample(StandardNormal)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-12 {
                break v.into_iter().map(|x| x / n).collect::<Vec<_>>();
            }
        };
        centers.push(dir.into_iter().map(|x| x * spec.separation).collect::<Vec<f64>>());
    }

    let mut records = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for k in 0..spec.train_per_class + spec.test_per_class {
            let values: Vec<f64> = center
                .iter()
                .map(|&m| {
                    let z: f64 = rng.sample(StandardNormal);
                    f64::from((m + spec.spread * z) as f32)
                })
                .collect();
            let feature = FeatureVector::new(values)?;
            let (_, transformed) = make_intra_pair(&feature);
            records.push(Record {
                class_id: c as u32,
                split: if k < spec.train_per_class { Split::Train } else { Split::Test },
                feature,
                transformed: Some(transformed),
            });
        }
    }
    EmbeddingDataset::new(spec.dim, records)
}
