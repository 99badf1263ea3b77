use crate::kg::EntityId;
use crate::scalar::Scalar;

use super::{FuzzyError, TNorm};

/// A fuzzy set over entities: one truth value in [0, 1] per entity.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> FuzzyVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self, FuzzyError> {
        if let Some(v) = values.iter().find(|v| !(**v >= T::zero() && **v <= T::one())) {
            return Err(FuzzyError::OutOfRange(v.to_f64_lossy()));
        }
        Ok(FuzzyVector { values })
    }

    pub(crate) fn from_vec_unchecked(values: Vec<T>) -> Self {
        let v = FuzzyVector { values };
        v.debug_check();
        v
    }

    #[inline]
    pub(crate) fn debug_check(&self) {
        debug_assert!(
            self.values.iter().all(|v| *v >= T::zero() && *v <= T::one()),
            "fuzzy vector left [0, 1]"
        );
    }

    pub fn ones(n: usize) -> Self {
        FuzzyVector {
            values: vec![T::one(); n],
        }
    }

    pub fn zeros(n: usize) -> Self {
        FuzzyVector {
            values: vec![T::zero(); n],
        }
    }

    pub fn one_hot(n: usize, at: usize) -> Self {
        let mut v = Self::zeros(n);
        v.values[at] = T::one();
        v
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize) -> T {
        self.values[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = T> + '_ {
        self.values.iter().copied()
    }

    fn same_len(&self, other: &Self) -> Result<(), FuzzyError> {
        if self.len() == other.len() {
            Ok(())
        } else {
            Err(FuzzyError::LengthMismatch {
                left: self.len(),
                right: other.len(),
            })
        }
    }

    /// Elementwise t-norm.
    pub fn combine(&self, kind: TNorm, other: &Self) -> Result<Self, FuzzyError> {
        self.same_len(other)?;
        Ok(Self::from_vec_unchecked(
            self.iter().zip(other.iter()).map(|(a, b)| kind.t(a, b)).collect(),
        ))
    }

    /// Elementwise t-conorm.
    pub fn combine_conorm(&self, kind: TNorm, other: &Self) -> Result<Self, FuzzyError> {
        self.same_len(other)?;
        Ok(Self::from_vec_unchecked(
            self.iter().zip(other.iter()).map(|(a, b)| kind.s(a, b)).collect(),
        ))
    }

    /// Elementwise maximum, in place.
    pub fn max_assign(&mut self, other: &Self) -> Result<(), FuzzyError> {
        self.same_len(other)?;
        for (a, b) in self.values.iter_mut().zip(other.iter()) {
            *a = a.max(b);
        }
        Ok(())
    }

    /// `t(v_i, s)` for every entry.
    pub fn scale(&self, kind: TNorm, s: T) -> Self {
        Self::from_vec_unchecked(self.iter().map(|v| kind.t(v, s)).collect())
    }

    pub fn complement(&self) -> Self {
        Self::from_vec_unchecked(self.iter().map(|v| T::one() - v).collect())
    }

    pub fn max_value(&self) -> T {
        self.iter().fold(T::zero(), T::max)
    }

    /// Entities with a strictly positive value.
    pub fn support(&self) -> Vec<EntityId> {
        self.iter()
            .enumerate()
            .filter(|(_, v)| *v > T::zero())
            .map(|(i, _)| EntityId(i as u32))
            .collect()
    }

    pub fn is_binary(&self) -> bool {
        self.iter().all(|v| v == T::zero() || v == T::one())
    }

    /// The `k` largest entries, ties broken by ascending index.
    pub fn top_k(&self, k: usize) -> Vec<(EntityId, T)> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            self.values[b]
                .partial_cmp(&self.values[a])
                .expect("no NaN in fuzzy vectors")
                .then(a.cmp(&b))
        });
        idx.into_iter()
            .take(k)
            .map(|i| (EntityId(i as u32), self.values[i]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> FuzzyVector<f64> {
        FuzzyVector::new(xs.to_vec()).unwrap()
    }

    #[test]
    fn combine_examples() {
        let u = v(&[0.5, 1.0, 0.3]);
        for k in TNorm::ALL {
            assert_eq!(u.combine(k, &FuzzyVector::ones(3)).unwrap(), u);
            assert_eq!(u.combine(k, &FuzzyVector::zeros(3)).unwrap(), FuzzyVector::zeros(3));
        }
        assert_eq!(
            v(&[0.5, 1.0]).combine(TNorm::Product, &v(&[0.4, 0.5])).unwrap(),
            v(&[0.2, 0.5])
        );
        assert!(u.combine(TNorm::Godel, &FuzzyVector::ones(2)).is_err());
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(FuzzyVector::new(vec![0.2, 1.1]).is_err());
        assert!(FuzzyVector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn top_k_ties_by_index() {
        let u = v(&[0.5, 0.9, 0.5, 0.9]);
        let ids: Vec<u32> = u.top_k(3).into_iter().map(|(e, _)| e.0).collect();
        assert_eq!(ids, vec![1, 3, 0]);
    }
}
