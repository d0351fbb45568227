//! Vector math shared by every classifier and metric.
//!
//! All reductions accumulate left-to-right over indices, so a given build
//! produces bit-identical results for identical inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A feature vector `g(x)`: finite activations of fixed dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// Caller guarantees all entries are finite.
    pub(crate) fn from_finite(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        dot_unchecked(&self.0, &self.0).sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, other: &Self, factor: f64) -> Result<Self> {
        check_dims(self, other)?;
        Ok(Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + factor * b)
                .collect(),
        ))
    }

    pub(crate) fn add_scaled_in_place(&mut self, other: &Self, factor: f64) {
        debug_assert_eq!(self.dim(), other.dim());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += factor * b;
        }
    }

    /// Convex blend `(1 - alpha) * self + alpha * other`.
    pub fn blend(&self, other: &Self, alpha: f64) -> Result<Self> {
        check_dims(self, other)?;
        Ok(Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| (1.0 - alpha) * a + alpha * b)
                .collect(),
        ))
    }
}

impl std::ops::Index<usize> for FeatureVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// The two-element feature set `[g(x), g(x̂)]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualFeature {
    pub original: FeatureVector,
    pub transformed: FeatureVector,
}

impl DualFeature {
    pub fn new(original: FeatureVector, transformed: FeatureVector) -> Result<Self> {
        check_dims(&original, &transformed)?;
        Ok(Self {
            original,
            transformed,
        })
    }

    pub fn dim(&self) -> usize {
        self.original.dim()
    }

    /// Channel 1 is the original, channel 2 the transformed member.
    pub fn channel(&self, j: Component) -> &FeatureVector {
        match j {
            Component::Original => &self.original,
            Component::Transformed => &self.transformed,
        }
    }
}

/// Index `j` of a dual classifier component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Component {
    Original,
    Transformed,
}

impl Component {
    pub const BOTH: [Component; 2] = [Component::Original, Component::Transformed];

    pub fn index(self) -> usize {
        match self {
            Component::Original => 0,
            Component::Transformed => 1,
        }
    }
}

fn check_dims(a: &FeatureVector, b: &FeatureVector) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

pub(crate) fn dot_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

pub fn dot(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    check_dims(a, b)?;
    Ok(dot_unchecked(&a.0, &b.0))
}

pub fn l2_normalize(v: &FeatureVector) -> Result<FeatureVector> {
    let n = v.norm();
    if n == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(FeatureVector(v.0.iter().map(|x| x / n).collect()))
}

pub fn cosine(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    check_dims(a, b)?;
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let c = dot_unchecked(&a.0, &b.0) / (na * nb);
    Ok(c.clamp(-1.0, 1.0))
}

/// Mean of the member-wise cosines of two dual features.
pub fn cosine_set(a: &DualFeature, b: &DualFeature) -> Result<f64> {
    let c1 = cosine(&a.original, &b.original)?;
    let c2 = cosine(&a.transformed, &b.transformed)?;
    Ok((c1 + c2) / 2.0)
}

/// Feature-mapping occupancy: the sum of the L2-normalized entries.
pub fn fmo(v: &FeatureVector) -> Result<f64> {
    Ok(l2_normalize(v)?.0.iter().sum())
}

/// Arithmetic mean in the given order.
pub fn mean<'a, I>(vectors: I) -> Result<FeatureVector>
where
    I: IntoIterator<Item = &'a FeatureVector>,
{
    let mut iter = vectors.into_iter();
    let first = iter.next().ok_or(Error::EmptySampleSet)?;
    let mut acc = first.0.clone();
    let mut count = 1usize;
    for v in iter {
        if v.dim() != acc.len() {
            return Err(Error::DimensionMismatch {
                expected: acc.len(),
                found: v.dim(),
            });
        }
        for (a, b) in acc.iter_mut().zip(&v.0) {
            *a += b;
        }
        count += 1;
    }
    let n = count as f64;
    Ok(FeatureVector(acc.into_iter().map(|a| a / n).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn normalize_three_four() {
        let n = l2_normalize(&fv(&[3.0, 4.0])).unwrap();
        assert!((n[0] - 0.6).abs() < 1e-12);
        assert!((n[1] - 0.8).abs() < 1e-12);
        assert_eq!(l2_normalize(&fv(&[1.0, 0.0, 0.0])).unwrap(), fv(&[1.0, 0.0, 0.0]));
        assert!(matches!(l2_normalize(&fv(&[0.0, 0.0])), Err(Error::ZeroVector)));
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&fv(&[2.0, 0.0]), &fv(&[2.0, 0.0])).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&fv(&[1.0, 0.0]), &fv(&[0.0, 1.0])).unwrap(), 0.0);
        let c = cosine(&fv(&[1.0, 1.0]), &fv(&[1.0, 0.0])).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-8);
        assert!(matches!(
            cosine(&fv(&[1.0]), &fv(&[1.0, 0.0])),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            cosine(&fv(&[0.0, 0.0]), &fv(&[1.0, 0.0])),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn cosine_set_examples() {
        let a = DualFeature::new(fv(&[1.0, 0.0]), fv(&[0.0, 1.0])).unwrap();
        assert!((cosine_set(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let b = DualFeature::new(fv(&[0.0, 1.0]), fv(&[1.0, 0.0])).unwrap();
        assert_eq!(cosine_set(&a, &b).unwrap(), 0.0);
        let c = DualFeature::new(fv(&[3.0, 0.0]), fv(&[5.0, 0.0])).unwrap();
        assert_eq!(cosine_set(&a, &c).unwrap(), 0.5);
    }

    #[test]
    fn fmo_examples() {
        let mut one_hot = vec![0.0; 8];
        one_hot[3] = 2.5;
        assert!((fmo(&fv(&one_hot)).unwrap() - 1.0).abs() < 1e-12);
        assert!((fmo(&fv(&[0.7; 16])).unwrap() - 4.0).abs() < 1e-12);
        assert!((fmo(&fv(&[3.0, 4.0])).unwrap() - 1.4).abs() < 1e-12);
        assert!(matches!(fmo(&fv(&[0.0; 4])), Err(Error::ZeroVector)));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(FeatureVector::new(vec![1.0, f64::NAN]), Err(Error::NonFinite)));
        assert!(matches!(FeatureVector::new(vec![f64::INFINITY]), Err(Error::NonFinite)));
    }

    #[test]
    fn mean_of_two() {
        let m = mean([&fv(&[0.0, 2.0]), &fv(&[2.0, 0.0])]).unwrap();
        assert_eq!(m, fv(&[1.0, 1.0]));
        assert!(matches!(mean(std::iter::empty()), Err(Error::EmptySampleSet)));
    }
}
