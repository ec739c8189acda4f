//! Discrete channel kernels on a user × symbol × subcarrier grid.
//!
//! Flat indices are user-major: `u * (n_symbols * n_subcarriers) + t * n_subcarriers + f`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use ndarray::Array4;
use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::scalar::{cis, is_finite, Real};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameGrid {
    pub n_users_rx: usize,
    pub n_users_tx: usize,
    pub n_symbols: usize,
    pub n_subcarriers: usize,
    pub subcarrier_spacing_hz: f64,
}

impl FrameGrid {
    pub fn new(
        n_users_rx: usize,
        n_users_tx: usize,
        n_symbols: usize,
        n_subcarriers: usize,
        subcarrier_spacing_hz: f64,
    ) -> Result<Self> {
        let grid = Self {
            n_users_rx,
            n_users_tx,
            n_symbols,
            n_subcarriers,
            subcarrier_spacing_hz,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn single_user(n_symbols: usize, n_subcarriers: usize, subcarrier_spacing_hz: f64) -> Result<Self> {
        Self::new(1, 1, n_symbols, n_subcarriers, subcarrier_spacing_hz)
    }

    /// Grid without time-frequency structure: `d_out` rows, `d_in` columns.
    pub fn flat(d_out: usize, d_in: usize) -> Self {
        Self {
            n_users_rx: d_out,
            n_users_tx: d_in,
            n_symbols: 1,
            n_subcarriers: 1,
            subcarrier_spacing_hz: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_users_rx == 0 || self.n_users_tx == 0 || self.n_symbols == 0 || self.n_subcarriers == 0 {
            return Err(Error::Config(format!("frame grid has an empty axis: {self:?}")));
        }
        if !(self.subcarrier_spacing_hz > 0.0 && self.subcarrier_spacing_hz.is_finite()) {
            return Err(Error::Config("subcarrier spacing must be positive".into()));
        }
        Ok(())
    }

    pub fn symbol_duration_s(&self) -> f64 {
        1.0 / self.subcarrier_spacing_hz
    }

    pub fn frame_duration_s(&self) -> f64 {
        self.n_symbols as f64 * self.symbol_duration_s()
    }

    /// Resource elements per user.
    pub fn per_user(&self) -> usize {
        self.n_symbols * self.n_subcarriers
    }

    pub fn dim_out(&self) -> usize {
        self.n_users_rx * self.per_user()
    }

    pub fn dim_in(&self) -> usize {
        self.n_users_tx * self.per_user()
    }

    pub fn is_single_user(&self) -> bool {
        self.n_users_rx == 1 && self.n_users_tx == 1
    }

    pub fn index(&self, user: usize, symbol: usize, subcarrier: usize) -> usize {
        user * self.per_user() + symbol * self.n_subcarriers + subcarrier
    }

    /// Inverse of [`FrameGrid::index`].
    pub fn unravel(&self, flat: usize) -> (usize, usize, usize) {
        let u = flat / self.per_user();
        let rem = flat % self.per_user();
        (u, rem / self.n_subcarriers, rem % self.n_subcarriers)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    TimeFrequency = 0,
    TimeDomain = 1,
    DelayDopplerLocal = 2,
}

impl Domain {
    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Domain::TimeFrequency),
            1 => Ok(Domain::TimeDomain),
            2 => Ok(Domain::DelayDopplerLocal),
            t => Err(Error::Format(format!("unknown domain tag {t}"))),
        }
    }
}

/// Flattened channel kernel: rows index the output grid, columns the input grid.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix<T: Real> {
    data: DMatrix<Complex<T>>,
    grid: FrameGrid,
    domain: Domain,
}

impl<T: Real> KernelMatrix<T> {
    pub fn new(data: DMatrix<Complex<T>>, grid: FrameGrid, domain: Domain) -> Result<Self> {
        grid.validate()?;
        check_dim("kernel rows", grid.dim_out(), data.nrows())?;
        check_dim("kernel columns", grid.dim_in(), data.ncols())?;
        if let Some(pos) = data.iter().position(|z| !is_finite(*z)) {
            return Err(Error::Numeric(format!("kernel entry {pos} is not finite")));
        }
        Ok(Self { data, grid, domain })
    }

    /// Kernel without grid structure.
    pub fn from_matrix(data: DMatrix<Complex<T>>) -> Result<Self> {
        let grid = FrameGrid::flat(data.nrows(), data.ncols());
        Self::new(data, grid, Domain::TimeDomain)
    }

    pub fn data(&self) -> &DMatrix<Complex<T>> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<Complex<T>> {
        self.data
    }

    pub fn grid(&self) -> &FrameGrid {
        &self.grid
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn frobenius_sq(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
    }

    pub fn apply(&self, x: &DVector<Complex<T>>) -> Result<DVector<Complex<T>>> {
        check_dim("kernel input", self.data.ncols(), x.len())?;
        Ok(&self.data * x)
    }
}

fn fft_pair<T: Real>(n: usize) -> (Arc<dyn Fft<T>>, Arc<dyn Fft<T>>) {
    let mut planner = FftPlanner::new();
    (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
}

fn require_single_user(grid: &FrameGrid) -> Result<()> {
    if grid.is_single_user() {
        Ok(())
    } else {
        Err(Error::UnsupportedDomain(format!(
            "operation needs a single-user grid, got {}x{} users",
            grid.n_users_rx, grid.n_users_tx
        )))
    }
}

/// Unitary OFDM synthesis matrix: block-diagonal over symbols of the
/// `1/√F`-scaled inverse DFT, mapping TF coefficients to time samples.
pub fn ofdm_operator<T: Real>(grid: &FrameGrid) -> Result<DMatrix<Complex<T>>> {
    grid.validate()?;
    require_single_user(grid)?;
    let f_len = grid.n_subcarriers;
    let d = grid.per_user();
    let scale = T::one() / T::from_count(f_len).sqrt();
    let two_pi = T::two_pi();
    let mut a = DMatrix::zeros(d, d);
    for t in 0..grid.n_symbols {
        for n in 0..f_len {
            for f in 0..f_len {
                let phase = two_pi * T::from_count((f * n) % f_len) / T::from_count(f_len);
                a[(t * f_len + n, t * f_len + f)] = cis(phase) * scale;
            }
        }
    }
    Ok(a)
}

/// Applies the per-symbol transform `fft` (then `scale`) to consecutive
/// length-`f_len` segments of `buf`.
fn transform_segments<T: Real>(buf: &mut [Complex<T>], f_len: usize, fft: &dyn Fft<T>, scale: T) {
    for seg in buf.chunks_mut(f_len) {
        fft.process(seg);
        for z in seg.iter_mut() {
            *z *= scale;
        }
    }
}

/// Time samples of the TF coefficients `x_tf` (`A · x_tf`).
pub fn ofdm_synthesize<T: Real>(grid: &FrameGrid, x_tf: &DVector<Complex<T>>) -> Result<DVector<Complex<T>>> {
    require_single_user(grid)?;
    check_dim("TF signal", grid.per_user(), x_tf.len())?;
    let (_, inv) = fft_pair::<T>(grid.n_subcarriers);
    let mut out = x_tf.clone();
    let scale = T::one() / T::from_count(grid.n_subcarriers).sqrt();
    transform_segments(out.as_mut_slice(), grid.n_subcarriers, inv.as_ref(), scale);
    Ok(out)
}

/// TF coefficients of the time samples `r` (`Aᴴ · r`).
pub fn ofdm_analyze<T: Real>(grid: &FrameGrid, r: &DVector<Complex<T>>) -> Result<DVector<Complex<T>>> {
    require_single_user(grid)?;
    check_dim("time signal", grid.per_user(), r.len())?;
    let (fwd, _) = fft_pair::<T>(grid.n_subcarriers);
    let mut out = r.clone();
    let scale = T::one() / T::from_count(grid.n_subcarriers).sqrt();
    transform_segments(out.as_mut_slice(), grid.n_subcarriers, fwd.as_ref(), scale);
    Ok(out)
}

/// Time-frequency kernel `K = Aᴴ H A` of a time-domain channel matrix.
pub fn tf_kernel_from_time<T: Real>(h_td: &DMatrix<Complex<T>>, grid: &FrameGrid) -> Result<KernelMatrix<T>> {
    grid.validate()?;
    require_single_user(grid)?;
    let d = grid.per_user();
    check_dim("time-domain matrix rows", d, h_td.nrows())?;
    check_dim("time-domain matrix columns", d, h_td.ncols())?;
    let f_len = grid.n_subcarriers;
    let (fwd, inv) = fft_pair::<T>(f_len);
    let scale = T::one() / T::from_count(f_len).sqrt();

    // H·A acts on each row; work on the transpose so rows become contiguous columns.
    let mut ht = h_td.transpose();
    for mut col in ht.column_iter_mut() {
        transform_segments(col.as_mut_slice(), f_len, inv.as_ref(), scale);
    }
    let mut k = ht.transpose();
    for mut col in k.column_iter_mut() {
        transform_segments(col.as_mut_slice(), f_len, fwd.as_ref(), scale);
    }
    KernelMatrix::new(k, *grid, Domain::TimeFrequency)
}

/// Local delay-Doppler response `h_w[t, f, τ, ν]` on a finite grid.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalResponse<T: Real> {
    data: Array4<Complex<T>>,
    grid: FrameGrid,
}

impl<T: Real> LocalResponse<T> {
    pub fn new(data: Array4<Complex<T>>, grid: FrameGrid) -> Result<Self> {
        require_single_user(&grid)?;
        let (t, f) = (grid.n_symbols, grid.n_subcarriers);
        if data.dim() != (t, f, t, f) {
            return Err(Error::Format(format!(
                "local response shape {:?} does not match grid ({t}, {f}, {t}, {f})",
                data.dim()
            )));
        }
        Ok(Self { data, grid })
    }

    pub fn data(&self) -> &Array4<Complex<T>> {
        &self.data
    }

    pub fn grid(&self) -> &FrameGrid {
        &self.grid
    }

    /// Kernel with rows over `(τ, ν)` and columns over `(t, f)`, the layout
    /// whose decomposition puts the output eigenwaves in the delay-Doppler plane.
    pub fn scattering_kernel(&self) -> KernelMatrix<T> {
        let (nt, nf) = (self.grid.n_symbols, self.grid.n_subcarriers);
        let d = nt * nf;
        let m = DMatrix::from_fn(d, d, |row, col| {
            let (tau, nu) = (row / nf, row % nf);
            let (t, f) = (col / nf, col % nf);
            self.data[[t, f, tau, nu]]
        });
        KernelMatrix::new(m, self.grid, Domain::DelayDopplerLocal).expect("shape checked at construction")
    }
}

/// Cyclic reindex `h_w[t,f,τ,ν] = K[(t,f),(t-τ, f-ν)]` (indices modulo the grid).
pub fn kernel_to_ldr<T: Real>(k: &KernelMatrix<T>) -> Result<LocalResponse<T>> {
    if k.domain != Domain::TimeFrequency {
        return Err(Error::UnsupportedDomain(format!(
            "expected a time-frequency kernel, got {:?}",
            k.domain
        )));
    }
    require_single_user(&k.grid)?;
    let (nt, nf) = (k.grid.n_symbols, k.grid.n_subcarriers);
    let data = Array4::from_shape_fn((nt, nf, nt, nf), |(t, f, tau, nu)| {
        let tp = (t + nt - tau) % nt;
        let fp = (f + nf - nu) % nf;
        k.data[(t * nf + f, tp * nf + fp)]
    });
    LocalResponse::new(data, k.grid)
}

/// Inverse of [`kernel_to_ldr`].
pub fn ldr_to_kernel<T: Real>(h: &LocalResponse<T>) -> Result<KernelMatrix<T>> {
    let (nt, nf) = (h.grid.n_symbols, h.grid.n_subcarriers);
    let d = nt * nf;
    let m = DMatrix::from_fn(d, d, |row, col| {
        let (t, f) = (row / nf, row % nf);
        let (tp, fp) = (col / nf, col % nf);
        h.data[[t, f, (t + nt - tp) % nt, (f + nf - fp) % nf]]
    });
    KernelMatrix::new(m, h.grid, Domain::TimeFrequency)
}

/// Multi-user kernel whose block `(u, u')` is the link from transmit user `u'`
/// to receive user `u`.
pub fn mu_kernel<T: Real>(per_link: &[Vec<KernelMatrix<T>>]) -> Result<KernelMatrix<T>> {
    let n_rx = per_link.len();
    let first = per_link
        .first()
        .and_then(|row| row.first())
        .ok_or_else(|| Error::Config("multi-user kernel needs at least one link".into()))?;
    let n_tx = per_link[0].len();
    let base = first.grid;
    require_single_user(&base)?;
    for (u, row) in per_link.iter().enumerate() {
        check_dim("links per receive user", n_tx, row.len())?;
        for (v, link) in row.iter().enumerate() {
            if link.grid != base || link.domain != first.domain {
                return Err(Error::Config(format!("link ({u}, {v}) has a different grid or domain")));
            }
        }
    }
    let block = base.per_user();
    let mut data = DMatrix::zeros(n_rx * block, n_tx * block);
    for (u, row) in per_link.iter().enumerate() {
        for (v, link) in row.iter().enumerate() {
            data.view_mut((u * block, v * block), (block, block))
                .copy_from(&link.data);
        }
    }
    let grid = FrameGrid {
        n_users_rx: n_rx,
        n_users_tx: n_tx,
        ..base
    };
    KernelMatrix::new(data, grid, first.domain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{gaussian_matrix, gaussian_vector, stream};

    type C = Complex<f64>;

    fn max_abs(m: &DMatrix<C>) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn single_subcarrier_operator_is_identity() {
        let g = FrameGrid::single_user(3, 1, 15e3).unwrap();
        let a = ofdm_operator::<f64>(&g).unwrap();
        assert!(max_abs(&(a - DMatrix::identity(3, 3))) < 1e-15);
    }

    #[test]
    fn two_point_operator() {
        let g = FrameGrid::single_user(1, 2, 15e3).unwrap();
        let a = ofdm_operator::<f64>(&g).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let want = DMatrix::from_row_slice(2, 2, &[C::new(s, 0.0), C::new(s, 0.0), C::new(s, 0.0), C::new(-s, 0.0)]);
        assert!(max_abs(&(a - want)) < 1e-15);
    }

    #[test]
    fn operator_is_unitary() {
        for (t, f) in [(1, 1), (2, 4), (4, 16), (3, 5)] {
            let g = FrameGrid::single_user(t, f, 15e3).unwrap();
            let a = ofdm_operator::<f64>(&g).unwrap();
            let d = a.nrows();
            assert!(max_abs(&(a.adjoint() * &a - DMatrix::identity(d, d))) < 1e-12);
        }
    }

    #[test]
    fn multi_user_operator_rejected() {
        let g = FrameGrid::new(2, 2, 1, 4, 15e3).unwrap();
        assert!(matches!(ofdm_operator::<f64>(&g), Err(Error::UnsupportedDomain(_))));
    }

    #[test]
    fn fast_synthesis_matches_operator() {
        let g = FrameGrid::single_user(3, 8, 15e3).unwrap();
        let a = ofdm_operator::<f64>(&g).unwrap();
        let mut rng = stream(2);
        let x = gaussian_vector::<f64, _>(&mut rng, 24);
        let fast = ofdm_synthesize(&g, &x).unwrap();
        assert!((fast - &a * &x).norm() < 1e-12);
        let back = ofdm_analyze(&g, &(&a * &x)).unwrap();
        assert!((back - x).norm() < 1e-12);
    }

    #[test]
    fn identity_channel_gives_identity_kernel() {
        let g = FrameGrid::single_user(2, 4, 15e3).unwrap();
        let k = tf_kernel_from_time::<f64>(&DMatrix::identity(8, 8), &g).unwrap();
        assert!(max_abs(&(k.data() - DMatrix::identity(8, 8))) < 1e-14);
        assert_eq!(k.domain(), Domain::TimeFrequency);
    }

    #[test]
    fn circulant_blocks_diagonalize_to_tap_dft() {
        // one symbol of four samples, taps (1, 0.5j): circulant C[i,j] = h[(i-j) mod 4]
        let g = FrameGrid::single_user(1, 4, 15e3).unwrap();
        let taps = [C::new(1.0, 0.0), C::new(0.0, 0.5)];
        let h = DMatrix::from_fn(4, 4, |i, j| {
            let l = (i + 4 - j) % 4;
            taps.get(l).copied().unwrap_or_default()
        });
        let k = tf_kernel_from_time(&h, &g).unwrap();
        // DFT by hand: H[f] = 1 + 0.5j·e^{-jπf/2} → (1+0.5j, 1.5, 1-0.5j, 0.5)
        let want = [C::new(1.0, 0.5), C::new(1.5, 0.0), C::new(1.0, -0.5), C::new(0.5, 0.0)];
        for (r, &wr) in want.iter().enumerate() {
            for c in 0..4 {
                let w = if r == c { wr } else { C::default() };
                assert!((k.data()[(r, c)] - w).norm() < 1e-12, "({r},{c})");
            }
        }
    }

    #[test]
    fn tf_kernel_matches_dense_product_and_propagation() {
        let g = FrameGrid::single_user(3, 4, 15e3).unwrap();
        let mut rng = stream(5);
        let h = gaussian_matrix::<f64, _>(&mut rng, 12, 12);
        let a = ofdm_operator::<f64>(&g).unwrap();
        let k = tf_kernel_from_time(&h, &g).unwrap();
        let dense = a.adjoint() * &h * &a;
        assert!(max_abs(&(k.data() - &dense)) < 1e-12);
        let s = gaussian_vector::<f64, _>(&mut rng, 12);
        let lhs = k.data() * (a.adjoint() * &s);
        let rhs = a.adjoint() * (&h * &s);
        assert!((lhs - rhs).norm() < 1e-10);
        let rel = (k.frobenius_sq() - h.norm_squared()).abs() / h.norm_squared();
        assert!(rel < 1e-10);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let g = FrameGrid::single_user(2, 2, 15e3).unwrap();
        let h = DMatrix::<C>::identity(3, 3);
        assert!(matches!(tf_kernel_from_time(&h, &g), Err(Error::Dimension { .. })));
    }

    #[test]
    fn identity_kernel_concentrates_at_origin() {
        let g = FrameGrid::single_user(3, 4, 15e3).unwrap();
        let k = KernelMatrix::new(DMatrix::<C>::identity(12, 12), g, Domain::TimeFrequency).unwrap();
        let h = kernel_to_ldr(&k).unwrap();
        for ((t, f, tau, nu), z) in h.data().indexed_iter() {
            let want = if tau == 0 && nu == 0 { 1.0 } else { 0.0 };
            assert_eq!(*z, C::new(want, 0.0), "({t},{f},{tau},{nu})");
        }
    }

    #[test]
    fn ldr_round_trip_is_exact() {
        let g = FrameGrid::single_user(3, 5, 15e3).unwrap();
        let mut rng = stream(8);
        let k = KernelMatrix::new(gaussian_matrix::<f64, _>(&mut rng, 15, 15), g, Domain::TimeFrequency).unwrap();
        let back = ldr_to_kernel(&kernel_to_ldr(&k).unwrap()).unwrap();
        assert_eq!(back, k);

        let h = LocalResponse::<f64>::new(
            Array4::from_shape_fn((3, 5, 3, 5), |_| crate::random::complex_normal(&mut rng, 1.0)),
            g,
        )
        .unwrap();
        let again = kernel_to_ldr(&ldr_to_kernel(&h).unwrap()).unwrap();
        assert_eq!(again, h);

        let zero = LocalResponse::new(Array4::<C>::zeros((3, 5, 3, 5)), g).unwrap();
        assert!(ldr_to_kernel(&zero).unwrap().data().iter().all(|z| *z == C::default()));
    }

    #[test]
    fn flat_time_invariant_kernel_maps_to_origin_constant() {
        let g = FrameGrid::single_user(2, 3, 15e3).unwrap();
        let c = C::new(0.3, -1.2);
        let k = KernelMatrix::new(DMatrix::from_diagonal_element(6, 6, c), g, Domain::TimeFrequency).unwrap();
        let h = kernel_to_ldr(&k).unwrap();
        for t in 0..2 {
            for f in 0..3 {
                assert_eq!(h.data()[[t, f, 0, 0]], c);
            }
        }
    }

    #[test]
    fn ldr_rejects_multi_user_and_time_domain() {
        let g = FrameGrid::new(2, 2, 1, 2, 15e3).unwrap();
        let k = KernelMatrix::new(DMatrix::<C>::identity(4, 4), g, Domain::TimeFrequency).unwrap();
        assert!(matches!(kernel_to_ldr(&k), Err(Error::UnsupportedDomain(_))));
        let k = KernelMatrix::from_matrix(DMatrix::<C>::identity(4, 4)).unwrap();
        assert!(matches!(kernel_to_ldr(&k), Err(Error::UnsupportedDomain(_))));
    }

    #[test]
    fn mu_kernel_of_scalars() {
        let g = FrameGrid::single_user(1, 1, 15e3).unwrap();
        let s =
            |v: f64| KernelMatrix::new(DMatrix::from_element(1, 1, C::new(v, 0.0)), g, Domain::TimeFrequency).unwrap();
        let k = mu_kernel(&[vec![s(1.0), s(2.0)], vec![s(3.0), s(4.0)]]).unwrap();
        let want = DMatrix::from_row_slice(
            2,
            2,
            &[C::new(1.0, 0.0), C::new(2.0, 0.0), C::new(3.0, 0.0), C::new(4.0, 0.0)],
        );
        assert_eq!(k.data(), &want);
        assert_eq!((k.grid().n_users_rx, k.grid().n_users_tx), (2, 2));

        let single = mu_kernel(&[vec![s(5.0)]]).unwrap();
        assert_eq!(single.data(), s(5.0).data());
    }

    #[test]
    fn mu_kernel_rejects_mixed_grids() {
        let g1 = FrameGrid::single_user(1, 2, 15e3).unwrap();
        let g2 = FrameGrid::single_user(2, 1, 15e3).unwrap();
        let a = KernelMatrix::new(DMatrix::<C>::identity(2, 2), g1, Domain::TimeFrequency).unwrap();
        let b = KernelMatrix::new(DMatrix::<C>::identity(2, 2), g2, Domain::TimeFrequency).unwrap();
        assert!(matches!(mu_kernel(&[vec![a, b]]), Err(Error::Config(_))));
    }

    #[test]
    fn non_finite_kernel_rejected() {
        let mut m = DMatrix::<C>::identity(2, 2);
        m[(0, 1)] = C::new(f64::NAN, 0.0);
        assert!(matches!(KernelMatrix::from_matrix(m), Err(Error::Numeric(_))));
    }

    #[test]
    fn index_round_trip() {
        let g = FrameGrid::new(2, 3, 4, 5, 1.0).unwrap();
        for i in 0..g.dim_out() {
            let (u, t, f) = g.unravel(i);
            assert_eq!(g.index(u, t, f), i);
        }
        assert_eq!(g.index(1, 2, 3), 20 + 2 * 5 + 3);
    }
}
