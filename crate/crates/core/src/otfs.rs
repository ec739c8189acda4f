//! OTFS baseline: symplectic finite Fourier transforms, OTFS modulation over
//! the OFDM operator, and the single-tap time-frequency detector.

use nalgebra::DVector;
use ndarray::Array2;
use num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{check_dim, Error, Result};
use crate::kernel::{ofdm_analyze, ofdm_synthesize, FrameGrid, KernelMatrix};
use crate::scalar::{modulus, Real};

/// Delay-Doppler symbols `x[τ, ν]` with `n_delay = n_subcarriers` rows and
/// `n_doppler = n_symbols` columns.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayDopplerGrid<T: Real> {
    pub symbols: Array2<Complex<T>>,
}

impl<T: Real> DelayDopplerGrid<T> {
    pub fn zeros(grid: &FrameGrid) -> Self {
        Self {
            symbols: Array2::zeros((grid.n_subcarriers, grid.n_symbols)),
        }
    }

    /// Fills the grid delay-major from `symbols` (`x[τ, ν] = symbols[τ N + ν]`).
    pub fn from_symbols(grid: &FrameGrid, symbols: &[Complex<T>]) -> Result<Self> {
        let (m, n) = (grid.n_subcarriers, grid.n_symbols);
        check_dim("delay-Doppler symbols", m * n, symbols.len())?;
        Ok(Self {
            symbols: Array2::from_shape_vec((m, n), symbols.to_vec()).expect("length checked"),
        })
    }

    pub fn n_delay(&self) -> usize {
        self.symbols.nrows()
    }

    pub fn n_doppler(&self) -> usize {
        self.symbols.ncols()
    }

    /// Symbols in delay-major order.
    pub fn to_symbols(&self) -> Vec<Complex<T>> {
        self.symbols.iter().copied().collect()
    }

    pub fn energy(&self) -> T {
        self.symbols.iter().fold(T::zero(), |a, z| a + z.norm_sqr())
    }
}

/// Time-frequency grid `X[t, f]` (`n_symbols × n_subcarriers`).
pub type TfGrid<T> = Array2<Complex<T>>;

/// Inverse SFFT: `X[t,f] = (MN)^{-1/2} Σ_{τ,ν} x[τ,ν] e^{j2π(tν/N − fτ/M)}`.
pub fn isfft<T: Real>(dd: &DelayDopplerGrid<T>) -> TfGrid<T> {
    let (m, n) = (dd.n_delay(), dd.n_doppler());
    let mut planner = FftPlanner::<T>::new();
    let inv_n = planner.plan_fft_inverse(n);
    let fwd_m = planner.plan_fft_forward(m);
    let scale = T::one() / T::from_count(m * n).sqrt();

    // y[τ, t] = Σ_ν x[τ,ν] e^{+j2π tν/N}
    let mut y = dd.symbols.clone();
    for mut row in y.rows_mut() {
        let mut buf: Vec<Complex<T>> = row.iter().copied().collect();
        inv_n.process(&mut buf);
        row.iter_mut().zip(buf).for_each(|(d, s)| *d = s);
    }
    // X[t, f] = Σ_τ y[τ, t] e^{-j2π fτ/M}
    let mut out = Array2::zeros((n, m));
    for t in 0..n {
        let mut buf: Vec<Complex<T>> = y.column(t).iter().copied().collect();
        fwd_m.process(&mut buf);
        for (f, z) in buf.into_iter().enumerate() {
            out[[t, f]] = z * scale;
        }
    }
    out
}

/// SFFT, the inverse of [`isfft`].
pub fn sfft<T: Real>(tf: &TfGrid<T>) -> DelayDopplerGrid<T> {
    let (n, m) = tf.dim();
    let mut planner = FftPlanner::<T>::new();
    let fwd_n = planner.plan_fft_forward(n);
    let inv_m = planner.plan_fft_inverse(m);
    let scale = T::one() / T::from_count(m * n).sqrt();

    // z[t, τ] = Σ_f X[t,f] e^{+j2π fτ/M}
    let mut z = tf.clone();
    for mut row in z.rows_mut() {
        let mut buf: Vec<Complex<T>> = row.iter().copied().collect();
        inv_m.process(&mut buf);
        row.iter_mut().zip(buf).for_each(|(d, s)| *d = s);
    }
    // x[τ, ν] = Σ_t z[t, τ] e^{-j2π tν/N}
    let mut out = Array2::zeros((m, n));
    for tau in 0..m {
        let mut buf: Vec<Complex<T>> = z.column(tau).iter().copied().collect();
        fwd_n.process(&mut buf);
        for (nu, v) in buf.into_iter().enumerate() {
            out[[tau, nu]] = v * scale;
        }
    }
    DelayDopplerGrid { symbols: out }
}

/// Flattens a TF grid in frame order (`t · F + f`).
pub fn tf_to_vector<T: Real>(tf: &TfGrid<T>) -> DVector<Complex<T>> {
    DVector::from_iterator(tf.len(), tf.iter().copied())
}

pub fn tf_from_vector<T: Real>(grid: &FrameGrid, v: &DVector<Complex<T>>) -> Result<TfGrid<T>> {
    check_dim("TF vector", grid.per_user(), v.len())?;
    Ok(
        Array2::from_shape_vec((grid.n_symbols, grid.n_subcarriers), v.iter().copied().collect())
            .expect("length checked"),
    )
}

fn check_dd<T: Real>(dd: &DelayDopplerGrid<T>, grid: &FrameGrid) -> Result<()> {
    if !grid.is_single_user() {
        return Err(Error::UnsupportedDomain("OTFS is single-user".into()));
    }
    check_dim("delay bins", grid.n_subcarriers, dd.n_delay())?;
    check_dim("Doppler bins", grid.n_symbols, dd.n_doppler())
}

/// Time samples of an OTFS frame (rectangular pulses).
pub fn otfs_modulate<T: Real>(dd: &DelayDopplerGrid<T>, grid: &FrameGrid) -> Result<DVector<Complex<T>>> {
    check_dd(dd, grid)?;
    ofdm_synthesize(grid, &tf_to_vector(&isfft(dd)))
}

/// Per-bin zero-forcing with the kernel diagonal; bins with
/// `|K[i,i]| ≤ 1e-12 ‖K‖_F` are zeroed.
pub fn single_tap_equalize<T: Real>(y_tf: &DVector<Complex<T>>, k_tf: &KernelMatrix<T>) -> Result<DVector<Complex<T>>> {
    check_dim("TF signal vs kernel", k_tf.data().nrows(), y_tf.len())?;
    let eps = T::lit(1e-12) * k_tf.frobenius_sq().sqrt();
    Ok(DVector::from_fn(y_tf.len(), |i, _| {
        let h = k_tf.data()[(i, i)];
        if modulus(h) > eps {
            y_tf[i] / h
        } else {
            Complex::new(T::zero(), T::zero())
        }
    }))
}

/// OTFS receiver with the time-frequency single-tap detector (perfect CSI).
pub fn otfs_demodulate_tfst<T: Real>(
    r_time: &DVector<Complex<T>>,
    k_tf: &KernelMatrix<T>,
    grid: &FrameGrid,
) -> Result<DelayDopplerGrid<T>> {
    let y = ofdm_analyze(grid, r_time)?;
    let eq = single_tap_equalize(&y, k_tf)?;
    Ok(sfft(&tf_from_vector(grid, &eq)?))
}
