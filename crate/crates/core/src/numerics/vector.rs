use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A non-empty vector of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyVector);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dense vector"));
        }
        Ok(DenseVector(values))
    }

    pub fn zeros(len: usize) -> Result<Self> {
        Self::new(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &DenseVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(&self, other: &DenseVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn scaled(&self, c: f64) -> Result<DenseVector> {
        DenseVector::new(self.0.iter().map(|v| v * c).collect())
    }
}

impl TryFrom<Vec<f64>> for DenseVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        DenseVector::new(values)
    }
}

impl From<DenseVector> for Vec<f64> {
    fn from(v: DenseVector) -> Self {
        v.0
    }
}

impl std::ops::Index<usize> for DenseVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Cosine of the angle between `a` and `b`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &DenseVector, b: &DenseVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "cosine_similarity",
            expected: a.len(),
            found: b.len(),
        });
    }
    let (na2, nb2) = (a.dot(a), b.dot(b));
    if na2 == 0.0 || nb2 == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((a.dot(b) / (na2 * nb2).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn self_and_antiparallel() {
        let a = v(&[0.3, -1.2, 4.0]);
        assert_eq!(cosine_similarity(&a, &a).unwrap(), 1.0);
        let neg = a.scaled(-1.0).unwrap();
        assert_eq!(cosine_similarity(&a, &neg).unwrap(), -1.0);
    }

    #[test]
    fn hand_evaluated_pair() {
        let s = cosine_similarity(&v(&[1.0, 1.0]), &v(&[1.0, 0.0])).unwrap();
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn zero_norm_is_an_error() {
        let z = DenseVector::zeros(3).unwrap();
        assert!(matches!(
            cosine_similarity(&z, &v(&[1.0, 0.0, 0.0])),
            Err(Error::ZeroNorm)
        ));
    }

    #[test]
    fn rejects_nan_and_empty() {
        assert!(DenseVector::new(vec![]).is_err());
        assert!(DenseVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(DenseVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn length_mismatch() {
        assert!(cosine_similarity(&v(&[1.0]), &v(&[1.0, 2.0])).is_err());
    }
}
