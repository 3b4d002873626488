//! Single-parameter learnable basis functions.
//!
//! Every basis is written as `φ(x; k) = base(k·x)`: the learnable scalar `k`
//! scales the input before a fixed nonlinearity is applied. With `z = k·x`,
//!
//! ```text
//! ∂φ/∂x = k · base'(z)
//! ∂φ/∂k = x · base'(z)
//! ```
//!
//! so each basis only needs `base` and `base'`. Piecewise bases return the
//! right-hand (positive side in `z`) derivative at their kinks.

use std::fmt;
use std::str::FromStr;

use crate::error::{Result, SkanError};
use crate::tensor::Real;

/// Negative-side slope of the leaky ReLU base.
pub const LEAKY_SLOPE: f64 = 0.01;

/// `√(2/π)`, the tanh-GELU input scale.
const GELU_SCALE: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

/// Identifies one of the nine basis families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BasisId {
    LRelu,
    LLeakyRelu,
    LSwish,
    LMish,
    LSoftplus,
    LHardSigmoid,
    LElu,
    /// Learnable shifted softplus, `ln(1 + e^{kx}) − ln 2`.
    LShiftedSoftplus,
    LGelu,
}

/// Whether a basis is known to train on MNIST at the reference settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trainability {
    Trainable,
    /// Reported to produce no usable runs at the reference settings. The
    /// engine still trains these when asked.
    ReportedDivergent,
}

/// Value and both partial derivatives of `φ(x; k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisEval {
    pub value: f64,
    pub d_dx: f64,
    pub d_dk: f64,
}

#[inline(always)]
fn sigmoid<T: Real>(z: T) -> T {
    let one = T::one();
    if z >= T::zero() {
        one / (one + (-z).exp())
    } else {
        let e = z.exp();
        e / (one + e)
    }
}

/// `ln(1 + e^z)` as `max(z, 0) + ln(1 + e^{−|z|})`.
#[inline(always)]
fn softplus<T: Real>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

impl BasisId {
    pub const ALL: [BasisId; 9] = [
        BasisId::LRelu,
        BasisId::LLeakyRelu,
        BasisId::LSwish,
        BasisId::LMish,
        BasisId::LSoftplus,
        BasisId::LHardSigmoid,
        BasisId::LElu,
        BasisId::LShiftedSoftplus,
        BasisId::LGelu,
    ];

    /// Lowercase name accepted on the command line and written to CSV and
    /// checkpoints.
    pub fn cli_name(self) -> &'static str {
        match self {
            BasisId::LRelu => "lrelu",
            BasisId::LLeakyRelu => "lleakyrelu",
            BasisId::LSwish => "lswish",
            BasisId::LMish => "lmish",
            BasisId::LSoftplus => "lsoftplus",
            BasisId::LHardSigmoid => "lhardsigmoid",
            BasisId::LElu => "lelu",
            BasisId::LShiftedSoftplus => "lss",
            BasisId::LGelu => "lgelu",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            BasisId::LRelu => "LReLU",
            BasisId::LLeakyRelu => "LLeakyReLU",
            BasisId::LSwish => "LSwish",
            BasisId::LMish => "LMish",
            BasisId::LSoftplus => "LSoftplus",
            BasisId::LHardSigmoid => "LHardSigmoid",
            BasisId::LElu => "LELU",
            BasisId::LShiftedSoftplus => "LShiftedSoftplus",
            BasisId::LGelu => "LGELU",
        }
    }

    pub fn trainability(self) -> Trainability {
        match self {
            BasisId::LElu | BasisId::LLeakyRelu | BasisId::LHardSigmoid => {
                Trainability::ReportedDivergent
            }
            _ => Trainability::Trainable,
        }
    }

    /// Points in `z = k·x` where the base is not differentiable.
    pub fn kinks(self) -> &'static [f64] {
        match self {
            BasisId::LRelu | BasisId::LLeakyRelu => &[0.0],
            BasisId::LHardSigmoid => &[-3.0, 3.0],
            _ => &[],
        }
    }

    /// Distance from `z` to the nearest kink, or infinity for smooth bases.
    pub fn kink_distance(self, z: f64) -> f64 {
        self.kinks()
            .iter()
            .map(|c| (z - c).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// The fixed nonlinearity applied to `z = k·x`.
    #[inline]
    pub fn base<T: Real>(self, z: T) -> T {
        let one = T::one();
        match self {
            BasisId::LRelu => z.max(T::zero()),
            BasisId::LLeakyRelu => {
                if z >= T::zero() {
                    z
                } else {
                    T::from_f64(LEAKY_SLOPE) * z
                }
            }
            BasisId::LSwish => z * sigmoid(z),
            BasisId::LMish => z * softplus(z).tanh(),
            BasisId::LSoftplus => softplus(z),
            BasisId::LHardSigmoid => {
                let three = T::from_f64(3.0);
                let six = T::from_f64(6.0);
                ((z + three) / six).max(T::zero()).min(one)
            }
            BasisId::LElu => {
                if z < T::zero() {
                    z.exp_m1()
                } else {
                    z
                }
            }
            BasisId::LShiftedSoftplus => BasisId::LSoftplus.base(z) - T::LN_2(),
            BasisId::LGelu => {
                let half = T::from_f64(0.5);
                let u = T::from_f64(GELU_SCALE) * (z + T::from_f64(GELU_CUBIC) * z * z * z);
                half * z * (one + u.tanh())
            }
        }
    }

    /// `(base(z), base′(z))`, bitwise equal to calling both, but sharing the
    /// exponential where the two have one in common.
    #[inline]
    pub fn base_and_deriv<T: Real>(self, z: T) -> (T, T) {
        let one = T::one();
        match self {
            BasisId::LSoftplus | BasisId::LShiftedSoftplus | BasisId::LMish => {
                let e = (-z.abs()).exp();
                let sp = z.max(T::zero()) + e.ln_1p();
                let s = if z >= T::zero() {
                    one / (one + e)
                } else {
                    e / (one + e)
                };
                match self {
                    BasisId::LSoftplus => (sp, s),
                    BasisId::LShiftedSoftplus => (sp - T::LN_2(), s),
                    _ => {
                        let t = sp.tanh();
                        (z * t, t + z * (one - t * t) * s)
                    }
                }
            }
            BasisId::LSwish => {
                let s = sigmoid(z);
                (z * s, s + z * s * (one - s))
            }
            _ => (self.base(z), self.base_deriv(z)),
        }
    }

    /// `d base / dz`, right-hand at kinks.
    #[inline]
    pub fn base_deriv<T: Real>(self, z: T) -> T {
        let zero = T::zero();
        let one = T::one();
        match self {
            BasisId::LRelu => {
                if z >= zero {
                    one
                } else {
                    zero
                }
            }
            BasisId::LLeakyRelu => {
                if z >= zero {
                    one
                } else {
                    T::from_f64(LEAKY_SLOPE)
                }
            }
            BasisId::LSwish => {
                let s = sigmoid(z);
                s + z * s * (one - s)
            }
            BasisId::LMish => {
                let t = softplus(z).tanh();
                t + z * (one - t * t) * sigmoid(z)
            }
            BasisId::LSoftplus | BasisId::LShiftedSoftplus => sigmoid(z),
            BasisId::LHardSigmoid => {
                let three = T::from_f64(3.0);
                if z >= -three && z < three {
                    one / T::from_f64(6.0)
                } else {
                    zero
                }
            }
            BasisId::LElu => {
                if z < zero {
                    z.exp()
                } else {
                    one
                }
            }
            BasisId::LGelu => {
                let half = T::from_f64(0.5);
                let c = T::from_f64(GELU_SCALE);
                let a = T::from_f64(GELU_CUBIC);
                let z2 = z * z;
                let t = (c * (z + a * z2 * z)).tanh();
                half * (one + t) + half * z * (one - t * t) * c * (one + T::from_f64(3.0) * a * z2)
            }
        }
    }
}

impl fmt::Display for BasisId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for BasisId {
    type Err = SkanError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        if lower == "lshiftedsoftplus" {
            return Ok(BasisId::LShiftedSoftplus);
        }
        BasisId::ALL
            .into_iter()
            .find(|b| b.cli_name() == lower)
            .ok_or_else(|| {
                let names: Vec<_> = BasisId::ALL.iter().map(|b| b.cli_name()).collect();
                SkanError::Config(format!(
                    "unknown basis `{s}` (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}

fn check_finite(op: &'static str, x: f64, k: f64) -> Result<()> {
    if !x.is_finite() {
        return Err(SkanError::Domain {
            op,
            name: "x",
            value: x,
        });
    }
    if !k.is_finite() {
        return Err(SkanError::Domain {
            op,
            name: "k",
            value: k,
        });
    }
    Ok(())
}

/// `φ_id(x; k)`.
pub fn eval(id: BasisId, x: f64, k: f64) -> Result<f64> {
    check_finite("basis::eval", x, k)?;
    Ok(id.base(k * x))
}

/// `φ_id(x; k)` with both partial derivatives.
pub fn grad(id: BasisId, x: f64, k: f64) -> Result<BasisEval> {
    check_finite("basis::grad", x, k)?;
    let z = k * x;
    let d = id.base_deriv(z);
    Ok(BasisEval {
        value: id.base(z),
        d_dx: k * d,
        d_dk: x * d,
    })
}

/// All nine bases with their reported trainability.
pub fn list_trainable() -> Vec<(BasisId, Trainability)> {
    BasisId::ALL
        .into_iter()
        .map(|b| (b, b.trainability()))
        .collect()
}

/// The six bases reported to train.
pub fn trainable_bases() -> Vec<BasisId> {
    BasisId::ALL
        .into_iter()
        .filter(|b| b.trainability() == Trainability::Trainable)
        .collect()
}
