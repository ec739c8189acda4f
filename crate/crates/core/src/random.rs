//! Seeded random streams and complex Gaussian sampling.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::scalar::Real;

/// Random stream used for every simulated trial.
pub type Stream = ChaCha12Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a path of indices into an independent sub-seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &i| {
        splitmix64(acc ^ splitmix64(i.wrapping_add(0x5851_F42D_4C95_7F2D)))
    })
}

pub fn stream(seed: u64) -> Stream {
    Stream::seed_from_u64(seed)
}

pub fn substream(master: u64, path: &[u64]) -> Stream {
    stream(derive_seed(master, path))
}

/// Circularly-symmetric complex Gaussian with total variance `variance`.
pub fn complex_normal<T: Real, R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex<T> {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(T::lit(s * re), T::lit(s * im))
}

/// Matrix with i.i.d. unit-variance complex Gaussian entries.
pub fn gaussian_matrix<T: Real, R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<Complex<T>> {
    DMatrix::from_fn(rows, cols, |_, _| complex_normal(rng, 1.0))
}

pub fn gaussian_vector<T: Real, R: Rng + ?Sized>(rng: &mut R, len: usize) -> DVector<Complex<T>> {
    DVector::from_fn(len, |_, _| complex_normal(rng, 1.0))
}
