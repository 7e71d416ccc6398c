//! Nodal vectors: one 3-vector per finite element node.
//!
//! The same container carries surface positions and coefficient vectors of
//! vector-valued finite element functions.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::linalg::{self, Vec3};
use crate::scalar::Real;

/// `N` three-component entries; positions of `Γ_h[x]` or FE coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodalVector<T>(pub Vec<Vec3<T>>);

impl<T: Real> NodalVector<T> {
    pub fn zeros(n: usize) -> Self {
        NodalVector(vec![[T::zero(); 3]; n])
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize) -> Vec3<T>) -> Self {
        NodalVector((0..n).map(f).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Vec3<T>> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[Vec3<T>] {
        &self.0
    }

    pub fn all_finite(&self) -> bool {
        self.0
            .iter()
            .all(|v| v.iter().all(|c| c.is_finite()))
    }

    /// Maximum Euclidean norm over entries.
    pub fn max_norm(&self) -> T {
        self.0
            .iter()
            .map(linalg::norm3)
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// Maximum Euclidean distance to another vector of the same length.
    pub fn max_distance(&self, other: &Self) -> T {
        assert_eq!(self.len(), other.len());
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| linalg::dist3(a, b))
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// Sum over entries of the componentwise dot product.
    pub fn dot(&self, other: &Self) -> T {
        assert_eq!(self.len(), other.len());
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| linalg::dot3(a, b))
            .sum()
    }

    pub fn scaled(&self, s: T) -> Self {
        NodalVector(self.0.iter().map(|v| linalg::scale3(v, s)).collect())
    }

    /// `a·x + b·y` entrywise.
    pub fn lin_comb(a: T, x: &Self, b: T, y: &Self) -> Self {
        assert_eq!(x.len(), y.len());
        NodalVector(
            x.0.iter()
                .zip(y.0.iter())
                .map(|(u, v)| {
                    [
                        a * u[0] + b * v[0],
                        a * u[1] + b * v[1],
                        a * u[2] + b * v[2],
                    ]
                })
                .collect(),
        )
    }

    /// `self += alpha * other` in place.
    pub fn axpy(&mut self, alpha: T, other: &Self) {
        assert_eq!(self.len(), other.len());
        for (y, x) in self.0.iter_mut().zip(other.0.iter()) {
            linalg::axpy3(y, alpha, x);
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::lin_comb(T::one(), self, -T::one(), other)
    }

    pub fn add_constant(&self, shift: &Vec3<T>) -> Self {
        NodalVector(self.0.iter().map(|v| linalg::add3(v, shift)).collect())
    }

    /// Constant-ones coefficient vector (each node carries `(1,1,1)`).
    pub fn ones(n: usize) -> Self {
        NodalVector(vec![[T::one(); 3]; n])
    }
}

impl<T> Index<usize> for NodalVector<T> {
    type Output = Vec3<T>;
    fn index(&self, i: usize) -> &Vec3<T> {
        &self.0[i]
    }
}

impl<T> IndexMut<usize> for NodalVector<T> {
    fn index_mut(&mut self, i: usize) -> &mut Vec3<T> {
        &mut self.0[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lin_comb_matches_axpy() {
        let x = NodalVector(vec![[1.0, 2.0, 3.0], [0.0, -1.0, 4.0]]);
        let y = NodalVector(vec![[0.5, 0.0, 1.0], [2.0, 2.0, 2.0]]);
        let z = NodalVector::lin_comb(2.0, &x, -1.0, &y);
        let mut w = x.scaled(2.0);
        w.axpy(-1.0, &y);
        assert_eq!(z, w);
    }

    #[test]
    fn finite_detection() {
        let mut x = NodalVector::<f64>::zeros(2);
        assert!(x.all_finite());
        x[1][2] = f64::NAN;
        assert!(!x.all_finite());
    }
}
