//! Combiner mechanisms and activations applied at non-root SCM nodes.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MechanismKind {
    Linear,
    Polynomial,
    Product,
    Max,
    Min,
    Gated,
    Distance,
}

impl MechanismKind {
    pub const ALL: [MechanismKind; 7] = [
        MechanismKind::Linear,
        MechanismKind::Polynomial,
        MechanismKind::Product,
        MechanismKind::Max,
        MechanismKind::Min,
        MechanismKind::Gated,
        MechanismKind::Distance,
    ];
}

impl FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "linear" => Self::Linear,
            "polynomial" => Self::Polynomial,
            "product" => Self::Product,
            "max" => Self::Max,
            "min" => Self::Min,
            "gated" => Self::Gated,
            "distance" => Self::Distance,
            other => return Err(Error::Config(format!("unknown mechanism `{other}`"))),
        })
    }
}

/// A parent-combining function with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Mechanism {
    /// `sum_j w_j p_j + bias`
    Linear { weights: Vec<f64>, bias: f64 },
    /// `sum_k c_k s^k` with `s = sum_j w_j p_j`, degree at most 3.
    Polynomial { weights: Vec<f64>, coeffs: Vec<f64> },
    /// `prod_j (p_j + shift_j)`
    Product { shifts: Vec<f64> },
    Max,
    Min,
    /// The first parent selects one of two linear forms over all parents.
    Gated { threshold: f64, on: Vec<f64>, off: Vec<f64> },
    /// Negative Euclidean distance to an anchor point.
    Distance { anchor: Vec<f64> },
}

impl Mechanism {
    pub fn kind(&self) -> MechanismKind {
        match self {
            Mechanism::Linear { .. } => MechanismKind::Linear,
            Mechanism::Polynomial { .. } => MechanismKind::Polynomial,
            Mechanism::Product { .. } => MechanismKind::Product,
            Mechanism::Max => MechanismKind::Max,
            Mechanism::Min => MechanismKind::Min,
            Mechanism::Gated { .. } => MechanismKind::Gated,
            Mechanism::Distance { .. } => MechanismKind::Distance,
        }
    }

    /// Random parameters for `kind` over `n_parents` inputs.
    pub fn sample<R: Rng>(kind: MechanismKind, n_parents: usize, rng: &mut R) -> Mechanism {
        let scale = 1.0 / (n_parents.max(1) as f64).sqrt();
        fn normals<R: Rng>(rng: &mut R, n: usize, s: f64) -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    z * s
                })
                .collect()
        }
        match kind {
            MechanismKind::Linear => Mechanism::Linear {
                weights: normals(rng, n_parents, scale),
                bias: normals(rng, 1, 0.5)[0],
            },
            MechanismKind::Polynomial => {
                let weights = normals(rng, n_parents, scale);
                let degree = rng.random_range(1..=3usize);
                let coeffs = normals(rng, degree + 1, 1.0);
                Mechanism::Polynomial { weights, coeffs }
            }
            MechanismKind::Product => Mechanism::Product { shifts: normals(rng, n_parents, 1.0) },
            MechanismKind::Max => Mechanism::Max,
            MechanismKind::Min => Mechanism::Min,
            MechanismKind::Gated => Mechanism::Gated {
                threshold: normals(rng, 1, 0.5)[0],
                on: normals(rng, n_parents, scale),
                off: normals(rng, n_parents, scale),
            },
            MechanismKind::Distance => Mechanism::Distance { anchor: normals(rng, n_parents, 1.0) },
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            Mechanism::Linear { weights, .. } | Mechanism::Polynomial { weights, .. } => {
                Some(weights.len())
            }
            Mechanism::Product { shifts } => Some(shifts.len()),
            Mechanism::Gated { on, .. } => Some(on.len()),
            Mechanism::Distance { anchor } => Some(anchor.len()),
            Mechanism::Max | Mechanism::Min => None,
        }
    }

    /// Combine parent columns (each of length `n_rows`) into one column.
    pub fn apply(&self, parents: &[&[f64]]) -> Result<Vec<f64>> {
        if parents.is_empty() {
            return Err(Error::Config("mechanism needs at least one parent".into()));
        }
        if let Some(a) = self.arity() {
            if a != parents.len() {
                return Err(Error::Dimension(format!(
                    "mechanism has {a} parameters per parent, got {} parents",
                    parents.len()
                )));
            }
        }
        let n_rows = parents[0].len();
        if parents.iter().any(|p| p.len() != n_rows) {
            return Err(Error::Dimension("parent columns differ in length".into()));
        }
        let dot = |w: &[f64], r: usize| -> f64 { w.iter().zip(parents).map(|(w, p)| w * p[r]).sum() };
        let out = (0..n_rows)
            .map(|r| match self {
                Mechanism::Linear { weights, bias } => dot(weights, r) + bias,
                Mechanism::Polynomial { weights, coeffs } => {
                    let s = dot(weights, r);
                    // Horner
                    coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
                }
                Mechanism::Product { shifts } => {
                    shifts.iter().zip(parents).map(|(s, p)| p[r] + s).product()
                }
                Mechanism::Max => parents.iter().map(|p| p[r]).fold(f64::NEG_INFINITY, f64::max),
                Mechanism::Min => parents.iter().map(|p| p[r]).fold(f64::INFINITY, f64::min),
                Mechanism::Gated { threshold, on, off } => {
                    if parents[0][r] > *threshold {
                        dot(on, r)
                    } else {
                        dot(off, r)
                    }
                }
                Mechanism::Distance { anchor } => -anchor
                    .iter()
                    .zip(parents)
                    .map(|(a, p)| (p[r] - a) * (p[r] - a))
                    .sum::<f64>()
                    .sqrt(),
            })
            .collect();
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActivationKind {
    Identity,
    Tanh,
    SoftRelu,
    Sinusoid,
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "identity" => Self::Identity,
            "tanh" => Self::Tanh,
            "soft_relu" => Self::SoftRelu,
            "sinusoid" => Self::Sinusoid,
            other => return Err(Error::Config(format!("unknown activation `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Tanh,
    /// `ln(1 + e^x)`, a smooth ReLU.
    SoftRelu,
    /// `sin(omega x + phase)`
    Sinusoid { omega: f64, phase: f64 },
}

impl Activation {
    pub const OMEGA_RANGE: (f64, f64) = (0.1, 100.0);

    pub fn kind(&self) -> ActivationKind {
        match self {
            Activation::Identity => ActivationKind::Identity,
            Activation::Tanh => ActivationKind::Tanh,
            Activation::SoftRelu => ActivationKind::SoftRelu,
            Activation::Sinusoid { .. } => ActivationKind::Sinusoid,
        }
    }

    /// Random parameters; sinusoid frequencies are log-uniform over
    /// [`Self::OMEGA_RANGE`].
    pub fn sample<R: Rng>(kind: ActivationKind, rng: &mut R) -> Activation {
        match kind {
            ActivationKind::Identity => Activation::Identity,
            ActivationKind::Tanh => Activation::Tanh,
            ActivationKind::SoftRelu => Activation::SoftRelu,
            ActivationKind::Sinusoid => {
                let (lo, hi) = Self::OMEGA_RANGE;
                let omega = rng.random_range(lo.ln()..hi.ln()).exp();
                let phase = rng.random_range(0.0..2.0 * PI);
                Activation::Sinusoid { omega, phase }
            }
        }
    }

    pub fn apply_scalar(&self, x: f64) -> f64 {
        match *self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::SoftRelu => {
                if x > 30.0 {
                    x
                } else {
                    x.exp().ln_1p()
                }
            }
            Activation::Sinusoid { omega, phase } => (omega * x + phase).sin(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.apply_scalar(v)).collect()
    }
}
