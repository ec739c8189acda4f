use std::str::FromStr;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Constellation {
    Qpsk,
    Qam16,
    Qam64,
}

impl Constellation {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Constellation::Qpsk => 2,
            Constellation::Qam16 => 4,
            Constellation::Qam64 => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Constellation::Qpsk => "qpsk",
            Constellation::Qam16 => "qam16",
            Constellation::Qam64 => "qam64",
        }
    }

    pub const ALL: [Constellation; 3] = [Constellation::Qpsk, Constellation::Qam16, Constellation::Qam64];
}

impl FromStr for Constellation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "qpsk" | "qam4" => Ok(Constellation::Qpsk),
            "qam16" | "16qam" => Ok(Constellation::Qam16),
            "qam64" | "64qam" => Ok(Constellation::Qam64),
            other => Err(Error::Config(format!("unknown constellation `{other}`"))),
        }
    }
}

/// Gray-labelled square QAM with unit average energy.
///
/// A label of `2m` bits is read MSB first; the first `m` bits select the
/// in-phase level and the last `m` the quadrature level. On each axis level
/// `k` (counting down from the most positive amplitude) carries the Gray code
/// `k ^ (k >> 1)`, so QPSK maps `00 → (1+j)/√2` and `11 → (−1−j)/√2`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstellationMap<T: Real> {
    kind: Constellation,
    /// `points[label]`.
    points: Vec<Complex<T>>,
}

fn gray_to_level(code: usize) -> usize {
    let mut k = code;
    let mut shift = code >> 1;
    while shift != 0 {
        k ^= shift;
        shift >>= 1;
    }
    k
}

impl<T: Real> ConstellationMap<T> {
    pub fn new(kind: Constellation) -> Self {
        let m = kind.bits_per_symbol() / 2;
        let levels = 1usize << m;
        let energy = 2.0 * ((levels * levels) as f64 - 1.0) / 3.0;
        let scale = 1.0 / energy.sqrt();
        let amplitude = |code: usize| ((levels - 1) as f64 - 2.0 * gray_to_level(code) as f64) * scale;
        let mask = levels - 1;
        let points = (0..levels * levels)
            .map(|label| Complex::new(T::lit(amplitude(label >> m)), T::lit(amplitude(label & mask))))
            .collect();
        Self { kind, points }
    }

    pub fn kind(&self) -> Constellation {
        self.kind
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.kind.bits_per_symbol()
    }

    pub fn points(&self) -> &[Complex<T>] {
        &self.points
    }

    /// Maps bits (one `0`/`1` per byte) to symbols.
    pub fn map_bits(&self, bits: &[u8]) -> Result<Vec<Complex<T>>> {
        let k = self.bits_per_symbol();
        if !bits.len().is_multiple_of(k) {
            return Err(Error::Config(format!(
                "{} bits is not a multiple of {k} bits per {} symbol",
                bits.len(),
                self.kind.name()
            )));
        }
        Ok(bits
            .chunks(k)
            .map(|chunk| {
                let label = chunk.iter().fold(0usize, |acc, &b| (acc << 1) | usize::from(b & 1));
                self.points[label]
            })
            .collect())
    }

    /// Label of the nearest point; the lowest label wins exact ties.
    pub fn decide(&self, z: Complex<T>) -> usize {
        let mut best = 0;
        let mut best_d = (z - self.points[0]).norm_sqr();
        for (label, p) in self.points.iter().enumerate().skip(1) {
            let d = (z - *p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = label;
            }
        }
        best
    }

    /// Hard minimum-distance demapping back to bits.
    pub fn demap(&self, symbols: &[Complex<T>]) -> Vec<u8> {
        let k = self.bits_per_symbol();
        let mut out = Vec::with_capacity(symbols.len() * k);
        for z in symbols {
            let label = self.decide(*z);
            out.extend((0..k).rev().map(|i| ((label >> i) & 1) as u8));
        }
        out
    }

    /// `(bits, point)` table in label order.
    pub fn gray_table(&self) -> Vec<(String, Complex<T>)> {
        let k = self.bits_per_symbol();
        self.points
            .iter()
            .enumerate()
            .map(|(label, p)| (format!("{label:0k$b}"), *p))
            .collect()
    }
}
