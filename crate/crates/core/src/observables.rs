//! Bounded observables: tensor products of per-coordinate functions, plus
//! general functions supported on the diagonal-orbit atoms.

use crate::error::{Error, Result};
use crate::scalar::{q_to_f64, Q};
use crate::systems::{CircleSystem, FiniteSystem};
use num_traits::{Signed, Zero};
use std::collections::HashMap;
use std::f64::consts::TAU;

/// F = f_1 ⊗ ... ⊗ f_H on a finite system, with each factor a value table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorObservable {
    factors: Vec<Vec<Q>>,
}

impl TensorObservable {
    pub fn new(factors: Vec<Vec<Q>>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidObservable("need at least one factor".into()));
        }
        Ok(Self { factors })
    }

    /// All factors identically equal to `value`.
    pub fn constant(h: usize, m: usize, value: Q) -> Result<Self> {
        Self::new(vec![vec![value; m]; h])
    }

    pub fn factors(&self) -> &[Vec<Q>] {
        &self.factors
    }

    pub fn validate_for(&self, sys: &FiniteSystem) -> Result<()> {
        if self.factors.len() != sys.num_maps() {
            return Err(Error::InvalidObservable(format!(
                "{} factors for a system with {} maps",
                self.factors.len(),
                sys.num_maps()
            )));
        }
        if let Some(f) = self.factors.iter().find(|f| f.len() != sys.num_atoms()) {
            return Err(Error::InvalidObservable(format!(
                "factor table has {} entries, space has {} atoms",
                f.len(),
                sys.num_atoms()
            )));
        }
        Ok(())
    }

    pub fn eval(&self, z: &[usize]) -> Q {
        self.factors
            .iter()
            .zip(z)
            .map(|(f, &x)| f[x].clone())
            .product()
    }

    /// Product of the per-factor sup norms; an upper bound for |F|.
    pub fn bound(&self) -> Q {
        self.factors
            .iter()
            .map(|f| f.iter().map(|v| v.abs()).max().unwrap_or_else(Q::zero))
            .product()
    }
}

/// A general bounded function given by its values on (part of) X^H.
///
/// Points outside the table evaluate to zero; the solvers only ever look up
/// points of the diagonal-orbit support, which the table covers.
#[derive(Debug, Clone, Default)]
pub struct SupportFunction {
    values: HashMap<Vec<usize>, Q>,
}

impl SupportFunction {
    pub fn new(values: HashMap<Vec<usize>, Q>) -> Self {
        Self { values }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Vec<usize>, Q)>) -> Self {
        Self {
            values: pairs.into_iter().collect(),
        }
    }

    pub fn eval(&self, z: &[usize]) -> Q {
        self.values.get(z).cloned().unwrap_or_else(Q::zero)
    }

    pub fn bound(&self) -> Q {
        self.values
            .values()
            .map(|v| v.abs())
            .max()
            .unwrap_or_else(Q::zero)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Observable on a finite system: tensor form when available, else a plain
/// value table over the orbit support.
#[derive(Debug, Clone)]
pub enum FiniteObservable {
    Tensor(TensorObservable),
    General(SupportFunction),
}

impl FiniteObservable {
    pub fn eval(&self, z: &[usize]) -> Q {
        match self {
            FiniteObservable::Tensor(t) => t.eval(z),
            FiniteObservable::General(g) => g.eval(z),
        }
    }

    pub fn bound(&self) -> Q {
        match self {
            FiniteObservable::Tensor(t) => t.bound(),
            FiniteObservable::General(g) => g.bound(),
        }
    }

    pub fn is_tensor(&self) -> bool {
        matches!(self, FiniteObservable::Tensor(_))
    }

    pub fn validate_for(&self, sys: &FiniteSystem) -> Result<()> {
        match self {
            FiniteObservable::Tensor(t) => t.validate_for(sys),
            FiniteObservable::General(g) => {
                for z in g.values.keys() {
                    if z.len() != sys.num_maps()
                        || z.iter().any(|&c| c >= sys.num_atoms())
                    {
                        return Err(Error::InvalidObservable(
                            "support-function point outside the system".into(),
                        ));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Closed-form factor on the circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CircleFn {
    Const(f64),
    /// cos(2 pi x)
    Cos,
    /// sin(2 pi x)
    Sin,
    /// Indicator of the arc [lo, hi) in [0, 1).
    Indicator { lo: f64, hi: f64 },
    /// cos(2 pi x) - cos(2 pi (x + alpha)): a planted coboundary factor.
    CosCoboundary { alpha: f64 },
}

impl CircleFn {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            CircleFn::Const(c) => c,
            CircleFn::Cos => (TAU * x).cos(),
            CircleFn::Sin => (TAU * x).sin(),
            CircleFn::Indicator { lo, hi } => {
                let x = crate::scalar::wrap_unit(x);
                if lo <= x && x < hi {
                    1.0
                } else {
                    0.0
                }
            }
            CircleFn::CosCoboundary { alpha } => (TAU * x).cos() - (TAU * (x + alpha)).cos(),
        }
    }

    pub fn sup_bound(&self) -> f64 {
        match *self {
            CircleFn::Const(c) => c.abs(),
            CircleFn::Cos | CircleFn::Sin => 1.0,
            CircleFn::Indicator { .. } => 1.0,
            CircleFn::CosCoboundary { .. } => 2.0,
        }
    }
}

/// F = f_1 ⊗ ... ⊗ f_H on a circle system.
#[derive(Debug, Clone)]
pub struct CircleObservable {
    factors: Vec<CircleFn>,
}

impl CircleObservable {
    pub fn new(factors: Vec<CircleFn>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidObservable("need at least one factor".into()));
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[CircleFn] {
        &self.factors
    }

    pub fn validate_for(&self, sys: &CircleSystem) -> Result<()> {
        if self.factors.len() != sys.num_maps() {
            return Err(Error::InvalidObservable(format!(
                "{} factors for a system with {} maps",
                self.factors.len(),
                sys.num_maps()
            )));
        }
        Ok(())
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.factors.iter().zip(z).map(|(f, &x)| f.eval(x)).product()
    }

    pub fn bound(&self) -> f64 {
        self.factors.iter().map(|f| f.sup_bound()).product()
    }
}

/// Observable paired with the matching system flavor.
#[derive(Debug, Clone)]
pub enum Observable {
    Finite(FiniteObservable),
    Circle(CircleObservable),
}

/// Convenience: |F| as f64 for reporting.
pub fn bound_f64(obs: &Observable) -> f64 {
    match obs {
        Observable::Finite(o) => q_to_f64(&o.bound()),
        Observable::Circle(o) => o.bound(),
    }
}
