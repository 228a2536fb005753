//! PAM constellations, natural-order message mapping and nearest-point
//! detection, plus the chunking rule for messages longer than one symbol.

use crate::error::{Error, Result};

/// Largest supported bits-per-symbol. Beyond this, `f64` spacing errors make
/// block error rates rise with `K` instead of falling.
pub const MAX_BITS: u32 = 23;

/// `2^K` equally spaced real amplitudes `{±η, ±3η, …, ±(2^K−1)η}` whose mean
/// energy under uniform messages equals `target_power`.
#[derive(Debug, Clone, PartialEq)]
pub struct PamConstellation {
    bits: u32,
    eta: f64,
    target_power: f64,
}

impl PamConstellation {
    pub fn new(bits: u32, target_power: f64) -> Result<Self> {
        if !(1..=MAX_BITS).contains(&bits) {
            return Err(Error::validation(format!(
                "bits per symbol must be in 1..={MAX_BITS}, got {bits}"
            )));
        }
        if !(target_power > 0.0 && target_power.is_finite()) {
            return Err(Error::validation(format!(
                "constellation power must be positive, got {target_power}"
            )));
        }
        let m2 = (1u64 << (2 * bits)) as f64;
        let eta = (3.0 * target_power / (m2 - 1.0)).sqrt();
        Ok(PamConstellation {
            bits,
            eta,
            target_power,
        })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn order(&self) -> u32 {
        1 << self.bits
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn target_power(&self) -> f64 {
        self.target_power
    }

    /// Amplitude of point `index` (ascending order).
    #[inline]
    pub fn point(&self, index: u32) -> f64 {
        let m = self.order() as f64;
        (2.0 * index as f64 - (m - 1.0)) * self.eta
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.order()).map(|i| self.point(i)).collect()
    }

    /// Natural-order map: word `W` goes to `points[W]`.
    pub fn map(&self, word: u32) -> Result<f64> {
        if word >= self.order() {
            return Err(Error::validation(format!(
                "message {word} out of range for {}-bit constellation",
                self.bits
            )));
        }
        Ok(self.point(word))
    }

    /// Nearest-point detector. Exact midpoints resolve to the lower index.
    #[inline]
    pub fn demap(&self, estimate: f64) -> u32 {
        let top = self.order() - 1;
        if estimate.is_nan() {
            return 0;
        }
        // Continuous index u; point i sits at u = i, midpoints at i + 1/2.
        let u = 0.5 * (estimate / self.eta + top as f64);
        let idx = (u - 0.5).ceil();
        if idx <= 0.0 {
            0
        } else if idx >= top as f64 {
            top
        } else {
            let i = idx as u32;
            // u is rounded, so near a midpoint ceil(u - 1/2) can be off by
            // one step; settle it on the true distances.
            let here = (estimate - self.point(i)).abs();
            if i > 0 && (estimate - self.point(i - 1)).abs() <= here {
                return i - 1;
            }
            if i < top && (estimate - self.point(i + 1)).abs() < here {
                return i + 1;
            }
            i
        }
    }
}

/// A `T`-bit message split into `m = T/K` chunks of `K` bits each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageChunks {
    total_bits: usize,
    bits_per_chunk: usize,
    /// Chunk values, first chunk first, most significant bit first within a chunk.
    words: Vec<u32>,
}

/// Split `bits` into consecutive `k`-bit chunks.
pub fn chunk(bits: &[bool], k: usize) -> Result<MessageChunks> {
    if k == 0 || k > MAX_BITS as usize {
        return Err(Error::validation(format!(
            "chunk size must be in 1..={MAX_BITS}, got {k}"
        )));
    }
    if bits.is_empty() || !bits.len().is_multiple_of(k) {
        return Err(Error::validation(format!(
            "chunk size {k} does not divide message length {}",
            bits.len()
        )));
    }
    let words = bits
        .chunks(k)
        .map(|c| c.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32))
        .collect();
    Ok(MessageChunks {
        total_bits: bits.len(),
        bits_per_chunk: k,
        words,
    })
}

impl MessageChunks {
    pub fn from_words(words: Vec<u32>, bits_per_chunk: usize) -> Result<Self> {
        if bits_per_chunk == 0 || bits_per_chunk > MAX_BITS as usize {
            return Err(Error::validation("chunk size out of range"));
        }
        if let Some(w) = words.iter().find(|&&w| w >= 1 << bits_per_chunk) {
            return Err(Error::validation(format!(
                "chunk value {w} does not fit in {bits_per_chunk} bits"
            )));
        }
        Ok(MessageChunks {
            total_bits: words.len() * bits_per_chunk,
            bits_per_chunk,
            words,
        })
    }

    pub fn total_bits(&self) -> usize {
        self.total_bits
    }

    pub fn bits_per_chunk(&self) -> usize {
        self.bits_per_chunk
    }

    pub fn count(&self) -> usize {
        self.words.len()
    }

    pub fn words(&self) -> &[u32] {
        &self.words
    }

    /// Concatenate the chunks back into the bit string.
    pub fn to_bits(&self) -> Vec<bool> {
        let k = self.bits_per_chunk;
        self.words
            .iter()
            .flat_map(|&w| (0..k).rev().map(move |i| (w >> i) & 1 == 1))
            .collect()
    }

    /// A block error occurs when any chunk is decoded wrongly.
    pub fn block_error(&self, decoded: &MessageChunks) -> bool {
        self.words != decoded.words
    }
}
