//! Finite weighted measure spaces, weighted L_p norms and dual pairings.
//!
//! Every atom carries a strictly positive mass, so `L_p(m)' = L_{p'}(m)` holds
//! exactly and all pairings reduce to weighted sums.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Smallest admissible atom weight.
pub const MIN_WEIGHT: f64 = 1e-300;

/// A finite measure space: `n` atoms with masses `m_1, ..., m_n`.
///
/// Cloning is cheap; the weights are shared.
#[derive(Clone)]
pub struct MeasureSpace {
    weights: Arc<[f64]>,
}

impl MeasureSpace {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptySpace);
        }
        for (index, &value) in weights.iter().enumerate() {
            if !value.is_finite() || value < MIN_WEIGHT {
                return Err(Error::InvalidWeight { index, value });
            }
        }
        Ok(Self { weights: weights.into() })
    }

    /// `n` atoms of unit mass.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weight_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.weights)
    }

    pub fn is_uniform(&self) -> bool {
        self.weights.iter().all(|&w| w == self.weights[0])
    }

    pub(crate) fn check_len(&self, found: usize) -> Result<()> {
        if found != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), found });
        }
        Ok(())
    }

    pub(crate) fn check_same(&self, other: &MeasureSpace) -> Result<()> {
        self.check_len(other.len())?;
        if self != other {
            return Err(Error::SpaceMismatch);
        }
        Ok(())
    }
}

impl PartialEq for MeasureSpace {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.weights, &other.weights) || self.weights[..] == other.weights[..]
    }
}

impl fmt::Debug for MeasureSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MeasureSpace").field("weights", &&self.weights[..]).finish()
    }
}

/// An exponent in `[1, inf]`. Infinity is a distinguished variant, never a large float.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub const ONE: Exponent = Exponent::Finite(1.0);
    pub const TWO: Exponent = Exponent::Finite(2.0);

    pub fn new(p: f64) -> Result<Self> {
        if p == f64::INFINITY {
            Ok(Exponent::Infinity)
        } else if p.is_finite() && p >= 1.0 {
            Ok(Exponent::Finite(p))
        } else {
            Err(Error::InvalidExponent(p))
        }
    }

    /// The conjugate exponent `p/(p-1)`, with `1 <-> inf`.
    pub fn dual(self) -> Exponent {
        match self {
            Exponent::Infinity => Exponent::ONE,
            Exponent::Finite(1.0) => Exponent::Infinity,
            Exponent::Finite(p) => Exponent::Finite(p / (p - 1.0)),
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Exponent::Finite(p) => p,
            Exponent::Infinity => f64::INFINITY,
        }
    }

    pub fn is_one(self) -> bool {
        self == Exponent::ONE
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinity => f.write_str("inf"),
        }
    }
}

// Serialized as a number, or the string "inf".
impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Exponent::Finite(p) => serializer.serialize_f64(*p),
            Exponent::Infinity => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let p = match Raw::deserialize(deserializer)? {
            Raw::Num(p) => p,
            Raw::Text(s) => match s.trim().to_ascii_lowercase().as_str() {
                "inf" | "infinity" => f64::INFINITY,
                other => other.parse().map_err(serde::de::Error::custom)?,
            },
        };
        Exponent::new(p).map_err(serde::de::Error::custom)
    }
}

/// Free-function form of [`Exponent::dual`].
pub fn dual_exponent(p: Exponent) -> Exponent {
    p.dual()
}

/// A real vector over a [`MeasureSpace`], tagged with the exponent of the
/// L_p space it is meant to live in.
#[derive(Debug, Clone, PartialEq)]
pub struct LpElement {
    values: DVector<f64>,
    exponent: Exponent,
    space: MeasureSpace,
    nonneg: bool,
}

impl LpElement {
    pub fn new(space: &MeasureSpace, values: DVector<f64>, exponent: Exponent) -> Result<Self> {
        space.check_len(values.len())?;
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: index, col: 0 });
        }
        Ok(Self { values, exponent, space: space.clone(), nonneg: false })
    }

    pub fn from_slice(space: &MeasureSpace, values: &[f64], exponent: Exponent) -> Result<Self> {
        Self::new(space, DVector::from_column_slice(values), exponent)
    }

    /// Like [`LpElement::new`], but additionally enforces and records `values >= 0`.
    pub fn nonneg(space: &MeasureSpace, values: DVector<f64>, exponent: Exponent) -> Result<Self> {
        let mut element = Self::new(space, values, exponent)?;
        if let Some((index, &value)) = element.values.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(Error::NegativeEntry { index, value });
        }
        element.nonneg = true;
        Ok(element)
    }

    /// The `i`-th indicator vector `e_i`.
    pub fn basis(space: &MeasureSpace, i: usize, exponent: Exponent) -> Self {
        let mut values = DVector::zeros(space.len());
        values[i] = 1.0;
        Self { values, exponent, space: space.clone(), nonneg: true }
    }

    pub fn ones(space: &MeasureSpace, exponent: Exponent) -> Self {
        Self { values: DVector::from_element(space.len(), 1.0), exponent, space: space.clone(), nonneg: true }
    }

    pub fn zeros(space: &MeasureSpace, exponent: Exponent) -> Self {
        Self { values: DVector::zeros(space.len()), exponent, space: space.clone(), nonneg: true }
    }

    /// Rewraps computed values on the same space; the nonnegativity flag is not carried over.
    pub(crate) fn with_values(&self, values: DVector<f64>) -> Self {
        Self { values, exponent: self.exponent, space: self.space.clone(), nonneg: false }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    pub fn exponent(&self) -> Exponent {
        self.exponent
    }

    pub fn space(&self) -> &MeasureSpace {
        &self.space
    }

    pub fn is_nonneg(&self) -> bool {
        self.nonneg
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `<f, g> = sum_i f_i g_i m_i`.
pub fn dual_pairing(f: &LpElement, g: &LpElement) -> Result<f64> {
    f.space.check_same(&g.space)?;
    Ok(weighted_dot(f.space.weights(), f.values.as_slice(), g.values.as_slice()))
}

pub(crate) fn weighted_dot(weights: &[f64], f: &[f64], g: &[f64]) -> f64 {
    weights.iter().zip(f).zip(g).map(|((m, a), b)| a * b * m).sum()
}

/// Weighted L_p norm of `u` for the requested exponent (independent of `u`'s tag).
pub fn lp_norm(u: &LpElement, p: Exponent) -> f64 {
    weighted_lp_norm(u.space.weights(), u.values.as_slice(), p)
}

pub(crate) fn weighted_lp_norm(weights: &[f64], values: &[f64], p: Exponent) -> f64 {
    match p {
        Exponent::Infinity => values.iter().fold(0.0, |acc: f64, v| acc.max(v.abs())),
        Exponent::Finite(1.0) => weights.iter().zip(values).map(|(m, v)| v.abs() * m).sum(),
        Exponent::Finite(p) => {
            let s: f64 = weights.iter().zip(values).map(|(m, v)| v.abs().powf(p) * m).sum();
            s.powf(1.0 / p)
        }
    }
}
