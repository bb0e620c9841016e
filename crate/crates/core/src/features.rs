//! Challenge encodings for the modeling attack.
//!
//! Both maps send bit 0 to +1 and bit 1 to -1 and append a constant +1
//! coordinate, so a model over either map has `n + 1` weights and needs no
//! separate intercept.

use std::fmt;
use std::str::FromStr;

use crate::bits::Challenge;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureMapKind {
    /// Per-bit ±1 encoding.
    RawBits,
    /// Suffix products of the ±1 encoding; the arbiter PUF is linear here.
    Parity,
}

impl FeatureMapKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMapKind::RawBits => "raw",
            FeatureMapKind::Parity => "parity",
        }
    }

    /// Feature dimension for an `n`-bit challenge.
    pub fn dimension(self, n: usize) -> usize {
        n + 1
    }

    /// Write the features of `c` into `out`, which must hold `n + 1` values.
    pub fn encode_into(self, c: &Challenge, out: &mut [f64]) {
        let n = c.width();
        assert_eq!(out.len(), n + 1, "feature buffer has the wrong length");
        out[n] = 1.0;
        match self {
            FeatureMapKind::RawBits => {
                for (i, slot) in out[..n].iter_mut().enumerate() {
                    *slot = sign(c.get(i));
                }
            }
            FeatureMapKind::Parity => {
                let mut acc = 1.0;
                for i in (0..n).rev() {
                    acc *= sign(c.get(i));
                    out[i] = acc;
                }
            }
        }
    }

    pub fn encode(self, c: &Challenge) -> FeatureVector {
        let mut values = vec![0.0; c.width() + 1];
        self.encode_into(c, &mut values);
        FeatureVector {
            values,
            kind: self,
            n: c.width(),
        }
    }
}

impl fmt::Display for FeatureMapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureMapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(FeatureMapKind::RawBits),
            "parity" => Ok(FeatureMapKind::Parity),
            other => Err(Error::invalid_parameter(format!(
                "unknown feature map {other:?} (expected \"raw\" or \"parity\")"
            ))),
        }
    }
}

#[inline]
fn sign(bit: bool) -> f64 {
    if bit {
        -1.0
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
    kind: FeatureMapKind,
    n: usize,
}

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> FeatureMapKind {
        self.kind
    }

    /// Width of the source challenge.
    pub fn challenge_width(&self) -> usize {
        self.n
    }

    /// Recover the challenge; both maps are injective.
    pub fn decode(&self) -> Challenge {
        let v = &self.values;
        let bits: Vec<bool> = match self.kind {
            FeatureMapKind::RawBits => v[..self.n].iter().map(|&x| x < 0.0).collect(),
            FeatureMapKind::Parity => (0..self.n).map(|i| v[i] * v[i + 1] < 0.0).collect(),
        };
        Challenge::from_bits(&bits)
    }
}

/// Parity transform: `phi_i = prod_{j >= i} (1 - 2 c_j)`, then a trailing 1.
pub fn phi(c: &Challenge) -> FeatureVector {
    FeatureMapKind::Parity.encode(c)
}

/// Raw transform: `1 - 2 c_i` per bit, then a trailing 1.
pub fn raw(c: &Challenge) -> FeatureVector {
    FeatureMapKind::RawBits.encode(c)
}
