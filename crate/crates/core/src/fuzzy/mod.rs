//! t-norms and fuzzy vector/matrix operations.

mod io;
mod matrix;
mod vector;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub use io::{read_matrix_set, write_matrix_set, MatrixFileHeader};
pub use matrix::{FuzzyMatrix, MatrixSet, RelationMatrices};
pub use vector::FuzzyVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TNorm {
    Godel,
    #[default]
    Product,
    Lukasiewicz,
}

impl TNorm {
    pub const ALL: [TNorm; 3] = [TNorm::Godel, TNorm::Product, TNorm::Lukasiewicz];

    /// The t-norm, without range checks.
    #[inline]
    pub fn t<T: Scalar>(self, a: T, b: T) -> T {
        match self {
            TNorm::Godel => a.min(b),
            TNorm::Product => a * b,
            TNorm::Lukasiewicz => {
                if a == T::one() {
                    b
                } else if b == T::one() {
                    a
                } else {
                    (a + b - T::one()).max(T::zero())
                }
            }
        }
    }

    /// The dual t-conorm `1 - t(1-a, 1-b)`, in closed form.
    #[inline]
    pub fn s<T: Scalar>(self, a: T, b: T) -> T {
        match self {
            TNorm::Godel => a.max(b),
            TNorm::Product => (a + b - a * b).min(T::one()),
            TNorm::Lukasiewicz => (a + b).min(T::one()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TNorm::Godel => "godel",
            TNorm::Product => "product",
            TNorm::Lukasiewicz => "lukasiewicz",
        }
    }
}

impl fmt::Display for TNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TNorm {
    type Err = FuzzyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "godel" | "goedel" | "gödel" | "min" => Ok(TNorm::Godel),
            "product" | "prod" => Ok(TNorm::Product),
            "lukasiewicz" | "łukasiewicz" | "luk" => Ok(TNorm::Lukasiewicz),
            _ => Err(FuzzyError::UnknownTNorm(s.to_string())),
        }
    }
}

fn check_unit<T: Scalar>(v: T) -> Result<T, FuzzyError> {
    if v >= T::zero() && v <= T::one() {
        Ok(v)
    } else {
        Err(FuzzyError::OutOfRange(v.to_f64_lossy()))
    }
}

/// Range-checked t-norm.
pub fn tnorm<T: Scalar>(kind: TNorm, a: T, b: T) -> Result<T, FuzzyError> {
    Ok(kind.t(check_unit(a)?, check_unit(b)?))
}

/// Range-checked t-conorm.
pub fn tconorm<T: Scalar>(kind: TNorm, a: T, b: T) -> Result<T, FuzzyError> {
    Ok(kind.s(check_unit(a)?, check_unit(b)?))
}

#[derive(Debug, Error)]
pub enum FuzzyError {
    #[error("truth value {0} is outside [0, 1]")]
    OutOfRange(f64),
    #[error("stored matrix entry {0} is outside (0, 1]")]
    BadStoredValue(f64),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("row {row}: column {col} is out of range or not strictly increasing")]
    BadColumn { row: usize, col: usize },
    #[error("unknown t-norm `{0}` (expected godel, product or lukasiewicz)")]
    UnknownTNorm(String),
    #[error("matrix file {path}: {message}")]
    Format { path: String, message: String },
    #[error("matrix file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
