//! Fixed-width bit words and their hex rendering.
//!
//! Bit order is MSB-first everywhere: bit index 0 is the most significant bit
//! of the hex word and is the challenge bit consumed by the first delay stage.
//! A word of width `w` renders as `ceil(w / 4)` uppercase hex digits; when `w`
//! is not a multiple of four the unused high bits of the leading digit are
//! zero.

use std::fmt;
use std::ops::Deref;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HexError {
    #[error("word width must be at least 1")]
    ZeroWidth,
    #[error("empty hex word")]
    Empty,
    #[error("invalid character {ch:?} at offset {offset}")]
    InvalidDigit { offset: usize, ch: char },
    #[error("malformed width prefix {prefix:?}")]
    BadPrefix { prefix: String },
    #[error("prefix declares {declared} bits but {width} were expected")]
    PrefixWidth { declared: usize, width: usize },
    #[error("{digits} hex digits exceed a {width}-bit word (at most {max} digits)")]
    TooManyDigits {
        digits: usize,
        width: usize,
        max: usize,
    },
    #[error("value does not fit in {width} bits")]
    Overflow { width: usize },
}

/// Packed fixed-width bit vector.
///
/// Bits past `width` in the last limb are always zero, so derived equality
/// and hashing are exact.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitWord {
    width: usize,
    limbs: Vec<u64>,
}

const LIMB: usize = 64;

fn limb_count(width: usize) -> usize {
    width.div_ceil(LIMB)
}

fn hex_digit_count(width: usize) -> usize {
    width.div_ceil(4)
}

impl BitWord {
    pub fn zeros(width: usize) -> Self {
        BitWord {
            width,
            limbs: vec![0; limb_count(width)],
        }
    }

    pub fn ones(width: usize) -> Self {
        Self::from_fn(width, |_| true)
    }

    pub fn from_fn(width: usize, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut word = Self::zeros(width);
        for i in 0..width {
            if f(i) {
                word.set(i, true);
            }
        }
        word
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        Self::from_fn(bits.len(), |i| bits[i])
    }

    /// Low `width` bits of `value`, most significant first.
    pub fn from_u64(value: u64, width: usize) -> Self {
        assert!(width <= 64, "from_u64 supports widths up to 64");
        Self::from_fn(width, |i| (value >> (width - 1 - i)) & 1 == 1)
    }

    /// Uniformly random word.
    pub fn random<R: Rng + ?Sized>(width: usize, rng: &mut R) -> Self {
        let mut limbs: Vec<u64> = (0..limb_count(width)).map(|_| rng.random()).collect();
        let tail = width % LIMB;
        if tail != 0 {
            if let Some(last) = limbs.last_mut() {
                *last &= !0u64 << (LIMB - tail);
            }
        }
        BitWord { width, limbs }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(
            i < self.width,
            "bit {i} out of range for width {}",
            self.width
        );
        (self.limbs[i / LIMB] >> (LIMB - 1 - i % LIMB)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(
            i < self.width,
            "bit {i} out of range for width {}",
            self.width
        );
        let mask = 1u64 << (LIMB - 1 - i % LIMB);
        if value {
            self.limbs[i / LIMB] |= mask;
        } else {
            self.limbs[i / LIMB] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        let v = self.get(i);
        self.set(i, !v);
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = bool> + '_ {
        (0..self.width).map(move |i| self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        self.limbs.iter().map(|l| l.count_ones() as usize).sum()
    }

    /// Number of differing positions. Panics on width mismatch.
    pub fn hamming_distance(&self, other: &BitWord) -> usize {
        assert_eq!(self.width, other.width, "hamming distance across widths");
        self.limbs
            .iter()
            .zip(&other.limbs)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    pub fn complement(&self) -> Self {
        Self::from_fn(self.width, |i| !self.get(i))
    }

    /// Uppercase, zero-padded hex without prefix.
    pub fn to_hex(&self) -> String {
        let digits = hex_digit_count(self.width);
        let pad = digits * 4 - self.width;
        let mut out = String::with_capacity(digits);
        for d in 0..digits {
            let mut nibble = 0u32;
            for k in 0..4 {
                // Position in the padded bitstream; the first `pad` bits are zero.
                let pos = d * 4 + k;
                nibble <<= 1;
                if pos >= pad && self.get(pos - pad) {
                    nibble |= 1;
                }
            }
            out.push(char::from_digit(nibble, 16).unwrap().to_ascii_uppercase());
        }
        out
    }

    /// Parse a hex word of the given width.
    ///
    /// Accepts bare hex or a Verilog-style size prefix (`64h...`, `64'h...`,
    /// `'h...`). Shorter inputs are zero-extended on the left.
    pub fn parse_hex(text: &str, width: usize) -> Result<Self, HexError> {
        if width == 0 {
            return Err(HexError::ZeroWidth);
        }
        let lead = text.len() - text.trim_start().len();
        let trimmed = text.trim();
        let (digits, offset) = match trimmed.find(['h', 'H']) {
            Some(pos) => {
                let prefix = &trimmed[..pos];
                let size = prefix.strip_suffix('\'').unwrap_or(prefix);
                if !size.chars().all(|c| c.is_ascii_digit()) {
                    return Err(HexError::BadPrefix {
                        prefix: trimmed[..=pos].to_string(),
                    });
                }
                if !size.is_empty() {
                    let declared: usize = size.parse().map_err(|_| HexError::BadPrefix {
                        prefix: trimmed[..=pos].to_string(),
                    })?;
                    if declared != width {
                        return Err(HexError::PrefixWidth { declared, width });
                    }
                }
                (&trimmed[pos + 1..], lead + pos + 1)
            }
            None => (trimmed, lead),
        };
        if digits.is_empty() {
            return Err(HexError::Empty);
        }
        let mut nibbles = Vec::with_capacity(digits.len());
        for (i, ch) in digits.char_indices() {
            match ch.to_digit(16) {
                Some(v) => nibbles.push(v as u8),
                None => {
                    return Err(HexError::InvalidDigit {
                        offset: offset + i,
                        ch,
                    })
                }
            }
        }
        let max = hex_digit_count(width);
        if nibbles.len() > max {
            return Err(HexError::TooManyDigits {
                digits: nibbles.len(),
                width,
                max,
            });
        }
        // Bitstream of the digits, right-aligned into `width`.
        let total = nibbles.len() * 4;
        let mut word = Self::zeros(width);
        for pos in 0..total {
            let bit = (nibbles[pos / 4] >> (3 - pos % 4)) & 1 == 1;
            if total > width && pos < total - width {
                if bit {
                    return Err(HexError::Overflow { width });
                }
                continue;
            }
            let idx = pos + width - total;
            if bit {
                word.set(idx, true);
            }
        }
        Ok(word)
    }
}

impl fmt::Debug for BitWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitWord({}'h{})", self.width, self.to_hex())
    }
}

impl fmt::Display for BitWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

macro_rules! word_newtype {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(BitWord);

        impl $name {
            pub fn new(bits: BitWord) -> Self {
                $name(bits)
            }

            pub fn from_bits(bits: &[bool]) -> Self {
                $name(BitWord::from_bits(bits))
            }

            pub fn from_u64(value: u64, width: usize) -> Self {
                $name(BitWord::from_u64(value, width))
            }

            pub fn parse_hex(text: &str, width: usize) -> Result<Self, HexError> {
                BitWord::parse_hex(text, width).map($name)
            }

            pub fn bits(&self) -> &BitWord {
                &self.0
            }

            pub fn into_bits(self) -> BitWord {
                self.0
            }
        }

        impl Deref for $name {
            type Target = BitWord;

            fn deref(&self) -> &BitWord {
                &self.0
            }
        }

        impl From<BitWord> for $name {
            fn from(bits: BitWord) -> Self {
                $name(bits)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({}'h{})", stringify!($name), self.width(), self.to_hex())
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }
    };
}

word_newtype!(
    /// Select-line input of a PUF; bit 0 drives the first stage.
    Challenge
);

word_newtype!(
    /// PUF output word, one bit per arbiter.
    Response
);

impl Challenge {
    pub fn random<R: Rng + ?Sized>(width: usize, rng: &mut R) -> Self {
        Challenge(BitWord::random(width, rng))
    }
}
