//! Channel statistics expressed through the eigenwave decomposition.
//!
//! The 2-D and 4-D statistics fold `ψ_n` and `φ_n` onto the per-user
//! `(n_symbols, n_subcarriers)` plane. When the set comes from
//! [`LocalResponse::scattering_kernel`](crate::kernel::LocalResponse::scattering_kernel),
//! `ψ_n` lives on the delay-Doppler plane and `φ_n` on the time-frequency plane.

use nalgebra::DMatrix;
use ndarray::{Array2, Array4};
use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hogmt::EigenwaveSet;
use crate::kernel::KernelMatrix;
use crate::modem::{waterfill, PowerAllocation};
use crate::scalar::{modulus, Real};

/// `(Σ |K_ij|², Σ λ_n)`.
pub fn total_gain<T: Real>(k: &KernelMatrix<T>, e: &EigenwaveSet<T>) -> (T, T) {
    let eigen = e.lambdas().into_iter().fold(T::zero(), |a, l| a + l);
    (k.frobenius_sq(), eigen)
}

fn plane_shape<T: Real>(e: &EigenwaveSet<T>) -> Result<(usize, usize)> {
    let g = e.grid();
    if !g.is_single_user() {
        return Err(Error::UnsupportedDomain(
            "eigenwave statistics need a single-user grid".into(),
        ));
    }
    Ok((g.n_symbols, g.n_subcarriers))
}

/// Global scattering `C̄ = Σ λ_n |ψ_n|²` and local path gain `ρ² = Σ λ_n |φ_n|²`.
pub fn eigen_scattering<T: Real>(e: &EigenwaveSet<T>) -> Result<(Array2<T>, Array2<T>)> {
    let shape = plane_shape(e)?;
    let lambdas = e.lambdas();
    let accumulate = |m: &DMatrix<Complex<T>>| {
        let mut out = Array2::from_elem(shape, T::zero());
        for (n, l) in lambdas.iter().enumerate() {
            for (i, z) in m.column(n).iter().enumerate() {
                out[[i / shape.1, i % shape.1]] += *l * z.norm_sqr();
            }
        }
        out
    };
    Ok((accumulate(e.psis()), accumulate(e.phis())))
}

/// `|R(Δ₁, Δ₂)|` with `R(Δ) = Σ_x g[x + Δ] g*[x]` taken cyclically, via FFT.
pub fn cyclic_autocorrelation<T: Real>(g: &Array2<Complex<T>>) -> Array2<T> {
    let (a, b) = g.dim();
    let spectrum = fft2(g, false);
    let power = spectrum.mapv(|z| Complex::new(z.norm_sqr(), T::zero()));
    let scale = T::one() / T::from_count(a * b);
    fft2(&power, true).mapv(|z| modulus(z) * scale)
}

fn fft2<T: Real>(g: &Array2<Complex<T>>, inverse: bool) -> Array2<Complex<T>> {
    let (a, b) = g.dim();
    let mut planner = FftPlanner::<T>::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(b), planner.plan_fft_inverse(a))
    } else {
        (planner.plan_fft_forward(b), planner.plan_fft_forward(a))
    };
    let mut out = g.clone();
    for mut row in out.rows_mut() {
        let mut buf: Vec<Complex<T>> = row.iter().copied().collect();
        row_fft.process(&mut buf);
        row.iter_mut().zip(buf).for_each(|(d, s)| *d = s);
    }
    for mut col in out.columns_mut() {
        let mut buf: Vec<Complex<T>> = col.iter().copied().collect();
        col_fft.process(&mut buf);
        col.iter_mut().zip(buf).for_each(|(d, s)| *d = s);
    }
    out
}

fn plane<T: Real>(col: nalgebra::DVectorView<'_, Complex<T>>, shape: (usize, usize)) -> Array2<Complex<T>> {
    Array2::from_shape_fn(shape, |(i, j)| col[i * shape.1 + j])
}

/// `Σ_n λ_n a_n ⊗ b_n` as a 4-D array, with `a_n`, `b_n` given as columns.
fn weighted_outer<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, lambdas: &[T], shape: (usize, usize)) -> Array4<T> {
    let mut scaled = a.clone();
    for (n, l) in lambdas.iter().enumerate() {
        scaled.column_mut(n).scale_mut(*l);
    }
    let m = scaled * b.transpose();
    Array4::from_shape_fn((shape.0, shape.1, shape.0, shape.1), |(i, j, k, l)| {
        m[(i * shape.1 + j, k * shape.1 + l)]
    })
}

fn magnitude_columns<T: Real>(
    m: &DMatrix<Complex<T>>,
    shape: (usize, usize),
    f: impl Fn(Array2<Complex<T>>) -> Array2<T>,
) -> DMatrix<T> {
    let d = shape.0 * shape.1;
    let mut out = DMatrix::zeros(d, m.ncols());
    for n in 0..m.ncols() {
        let v = f(plane(m.column(n), shape));
        for (i, x) in v.iter().enumerate() {
            out[(i, n)] = *x;
        }
    }
    out
}

/// `|𝓡[a, b, c, d]| = Σ_n λ_n |R_ψn(a, b)| |R_φn(c, d)|`; the first two axes are
/// lags over the `ψ` plane, the last two over the `φ` plane.
pub fn eigen_ccf<T: Real>(e: &EigenwaveSet<T>) -> Result<Array4<T>> {
    let shape = plane_shape(e)?;
    let rpsi = magnitude_columns(e.psis(), shape, |g| cyclic_autocorrelation(&g));
    let rphi = magnitude_columns(e.phis(), shape, |g| cyclic_autocorrelation(&g));
    Ok(weighted_outer(&rpsi, &rphi, &e.lambdas(), shape))
}

/// Local scattering function `C_H[t, f, τ, ν] = Σ_n λ_n |φ_n(t,f)|² |ψ_n(τ,ν)|²`.
pub fn eigen_lsf<T: Real>(e: &EigenwaveSet<T>) -> Result<Array4<T>> {
    let shape = plane_shape(e)?;
    let sq = |g: Array2<Complex<T>>| g.mapv(|z| z.norm_sqr());
    let phi2 = magnitude_columns(e.phis(), shape, sq);
    let psi2 = magnitude_columns(e.psis(), shape, sq);
    Ok(weighted_outer(&phi2, &psi2, &e.lambdas(), shape))
}

/// Average capacity `(1/T) Σ log2(1 + P_n λ_n / N0)` in bits/s under water filling.
pub fn average_capacity<T: Real>(
    lambdas: &[T],
    noise_power: T,
    total_power: T,
    frame_duration_s: T,
) -> Result<(T, PowerAllocation<T>)> {
    if !(frame_duration_s > T::zero()) {
        return Err(Error::Config("frame duration must be positive".into()));
    }
    let alloc = waterfill(lambdas, noise_power, total_power)?;
    let bits = alloc.sum_rate_bits(lambdas)?;
    Ok((bits / frame_duration_s, alloc))
}

/// How a [`ChannelStats`] was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsMode {
    PerRealization,
    Averaged { realizations: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStats<T: Real> {
    pub total_gain: T,
    pub lambda_spectrum: Vec<T>,
    pub scattering: Array2<T>,
    pub tf_path_gain: Array2<T>,
    pub ccf: Array4<T>,
    pub lsf: Array4<T>,
    pub mode: StatsMode,
}

impl<T: Real> ChannelStats<T> {
    pub fn from_eigenwaves(e: &EigenwaveSet<T>) -> Result<Self> {
        let lambda_spectrum = e.lambdas();
        let (scattering, tf_path_gain) = eigen_scattering(e)?;
        Ok(Self {
            total_gain: lambda_spectrum.iter().fold(T::zero(), |a, l| a + *l),
            lambda_spectrum,
            scattering,
            tf_path_gain,
            ccf: eigen_ccf(e)?,
            lsf: eigen_lsf(e)?,
            mode: StatsMode::PerRealization,
        })
    }

    /// Element-wise mean over realizations sharing one grid.
    pub fn average(items: &[Self]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::Config("no realizations to average".into()))?;
        let n = T::from_count(items.len());
        let mut acc = first.clone();
        for s in &items[1..] {
            if s.lambda_spectrum.len() != acc.lambda_spectrum.len() || s.ccf.dim() != acc.ccf.dim() {
                return Err(Error::Config("realizations have different grids".into()));
            }
            acc.total_gain += s.total_gain;
            acc.lambda_spectrum
                .iter_mut()
                .zip(&s.lambda_spectrum)
                .for_each(|(a, b)| *a += *b);
            acc.scattering += &s.scattering;
            acc.tf_path_gain += &s.tf_path_gain;
            acc.ccf += &s.ccf;
            acc.lsf += &s.lsf;
        }
        acc.total_gain /= n;
        acc.lambda_spectrum.iter_mut().for_each(|a| *a /= n);
        acc.scattering.mapv_inplace(|x| x / n);
        acc.tf_path_gain.mapv_inplace(|x| x / n);
        acc.ccf.mapv_inplace(|x| x / n);
        acc.lsf.mapv_inplace(|x| x / n);
        acc.mode = StatsMode::Averaged {
            realizations: items.len(),
        };
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hogmt::decompose;
    use crate::kernel::{kernel_to_ldr, tf_kernel_from_time, Domain, FrameGrid};
    use crate::random::{gaussian_matrix, stream};
    use crate::scalar::cis;
    use ndarray::Axis;

    type C = Complex<f64>;

    fn grid(t: usize, f: usize) -> FrameGrid {
        FrameGrid::single_user(t, f, 15e3).unwrap()
    }

    fn random_kernel(g: &FrameGrid, seed: u64, domain: Domain) -> KernelMatrix<f64> {
        let mut rng = stream(seed);
        KernelMatrix::new(gaussian_matrix(&mut rng, g.dim_out(), g.dim_in()), *g, domain).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn total_gain_of_diagonal_and_zero() {
        let k = KernelMatrix::from_matrix(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C::new(3.0, 0.0),
            C::new(2.0, 0.0),
            C::new(1.0, 0.0),
        ])))
        .unwrap();
        let (d, e) = total_gain(&k, &decompose(&k, None).unwrap());
        assert!((d - 14.0).abs() < 1e-12 && (e - 14.0).abs() < 1e-12);

        let z = KernelMatrix::<f64>::from_matrix(DMatrix::zeros(4, 4)).unwrap();
        assert_eq!(total_gain(&z, &decompose(&z, None).unwrap()), (0.0, 0.0));
    }

    #[test]
    fn total_gain_identity_on_random_kernel() {
        let k = random_kernel(&grid(4, 4), 1, Domain::TimeFrequency);
        let (d, e) = total_gain(&k, &decompose(&k, None).unwrap());
        assert!(rel(d, e) < 1e-10);
    }

    #[test]
    fn scattering_normalization() {
        let g = grid(2, 4);
        let k = random_kernel(&g, 2, Domain::DelayDopplerLocal);
        let e = decompose(&k, None).unwrap();
        let total: f64 = e.lambdas().iter().sum();
        let (s, p) = eigen_scattering(&e).unwrap();
        assert!(rel(s.sum(), total) < 1e-10);
        assert!(rel(p.sum(), total) < 1e-10);
        assert!(s.iter().chain(p.iter()).all(|x| *x >= 0.0));
    }

    #[test]
    fn rank_one_scattering_is_exact() {
        let g = grid(2, 3);
        let e = decompose(&random_kernel(&g, 3, Domain::DelayDopplerLocal), Some(1)).unwrap();
        let (s, _) = eigen_scattering(&e).unwrap();
        let l = e.lambdas()[0];
        for (i, z) in e.psis().column(0).iter().enumerate() {
            assert!((s[[i / 3, i % 3]] - l * z.norm_sqr()).abs() < 1e-14);
        }
    }

    #[test]
    fn identity_kernel_gives_uniform_arrays() {
        let g = grid(2, 4);
        let k = KernelMatrix::<f64>::new(DMatrix::identity(8, 8), g, Domain::DelayDopplerLocal).unwrap();
        let (s, p) = eigen_scattering(&decompose(&k, None).unwrap()).unwrap();
        for x in s.iter().chain(p.iter()) {
            assert!((*x - 1.0f64).abs() < 1e-12);
        }
    }

    /// Brute-force double loop for `|R_g(Δ)|`.
    fn autocorr_direct(g: &Array2<C>) -> Array2<f64> {
        let (a, b) = g.dim();
        Array2::from_shape_fn((a, b), |(da, db)| {
            let mut acc = C::default();
            for x in 0..a {
                for y in 0..b {
                    acc += g[[(x + da) % a, (y + db) % b]] * g[[x, y]].conj();
                }
            }
            acc.norm()
        })
    }

    #[test]
    fn fft_autocorrelation_matches_direct_loop() {
        let mut rng = stream(4);
        let m = gaussian_matrix::<f64, _>(&mut rng, 3, 5);
        let g = Array2::from_shape_fn((3, 5), |(i, j)| m[(i, j)]);
        let fast = cyclic_autocorrelation(&g);
        let slow = autocorr_direct(&g);
        for (a, b) in fast.iter().zip(slow.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ccf_zero_lag_and_rank_two_oracle() {
        let g = grid(3, 4);
        let e = decompose(&random_kernel(&g, 5, Domain::DelayDopplerLocal), Some(2)).unwrap();
        let ccf = eigen_ccf(&e).unwrap();
        let l = e.lambdas();
        assert!(rel(ccf[[0, 0, 0, 0]], l.iter().sum()) < 1e-10);

        let shape = (3, 4);
        let rpsi: Vec<_> = (0..2)
            .map(|n| autocorr_direct(&plane(e.psis().column(n), shape)))
            .collect();
        let rphi: Vec<_> = (0..2)
            .map(|n| autocorr_direct(&plane(e.phis().column(n), shape)))
            .collect();
        for ((a, b, c, d), v) in ccf.indexed_iter() {
            let want: f64 = (0..2).map(|n| l[n] * rpsi[n][[a, b]] * rphi[n][[c, d]]).sum();
            assert!((v - want).abs() < 1e-10, "{a} {b} {c} {d}");
        }
    }

    #[test]
    fn lsf_marginals_match_scattering() {
        let g = grid(2, 4);
        let e = decompose(&random_kernel(&g, 6, Domain::DelayDopplerLocal), None).unwrap();
        let lsf = eigen_lsf(&e).unwrap();
        let (s, p) = eigen_scattering(&e).unwrap();
        let over_delay_doppler = lsf.sum_axis(Axis(3)).sum_axis(Axis(2));
        let over_tf = lsf.sum_axis(Axis(0)).sum_axis(Axis(0));
        for (a, b) in over_delay_doppler.iter().zip(p.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in over_tf.iter().zip(s.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn lsf_rank_one_is_separable_and_zero_kernel_is_zero() {
        let g = grid(2, 2);
        let e = decompose(&random_kernel(&g, 7, Domain::DelayDopplerLocal), Some(1)).unwrap();
        let lsf = eigen_lsf(&e).unwrap();
        let l = e.lambdas()[0];
        for ((t, f, tau, nu), v) in lsf.indexed_iter() {
            let want = l * e.phis()[(t * 2 + f, 0)].norm_sqr() * e.psis()[(tau * 2 + nu, 0)].norm_sqr();
            assert!((v - want).abs() < 1e-14);
        }
        let z = KernelMatrix::<f64>::new(DMatrix::zeros(4, 4), g, Domain::DelayDopplerLocal).unwrap();
        assert!(eigen_lsf(&decompose(&z, None).unwrap())
            .unwrap()
            .iter()
            .all(|x| *x == 0.0));
    }

    #[test]
    fn statistics_ignore_a_global_phase() {
        let g = grid(2, 3);
        let k = random_kernel(&g, 8, Domain::DelayDopplerLocal);
        let rotated = KernelMatrix::new(k.data() * cis(0.7), g, Domain::DelayDopplerLocal).unwrap();
        let a = ChannelStats::from_eigenwaves(&decompose(&k, None).unwrap()).unwrap();
        let b = ChannelStats::from_eigenwaves(&decompose(&rotated, None).unwrap()).unwrap();
        let close = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(p, q)| (p - q).abs() < 1e-10);
        assert!(close(&a.lambda_spectrum, &b.lambda_spectrum));
        assert!(close(
            a.scattering.as_slice().unwrap(),
            b.scattering.as_slice().unwrap()
        ));
        assert!(close(
            a.tf_path_gain.as_slice().unwrap(),
            b.tf_path_gain.as_slice().unwrap()
        ));
        assert!(close(a.ccf.as_slice().unwrap(), b.ccf.as_slice().unwrap()));
        assert!(close(a.lsf.as_slice().unwrap(), b.lsf.as_slice().unwrap()));
    }

    #[test]
    fn ldr_statistics_of_a_channel() {
        use crate::channel::{self, ChannelConfig, Preset};
        let cfg = ChannelConfig::eva(16, 4).with_preset(Preset::A);
        let ch = channel::generate(&cfg, &mut stream(9)).unwrap();
        let g = grid(4, 16);
        let k = tf_kernel_from_time(&ch.matrix::<f64>(), &g).unwrap();
        let sk = kernel_to_ldr(&k).unwrap().scattering_kernel();
        let e = decompose(&sk, None).unwrap();
        let stats = ChannelStats::from_eigenwaves(&e).unwrap();
        assert!(rel(stats.total_gain, k.frobenius_sq()) < 1e-10);
        assert!(rel(stats.scattering.sum(), stats.total_gain) < 1e-10);
        let avg = ChannelStats::average(&[stats.clone(), stats.clone()]).unwrap();
        assert_eq!(avg.mode, StatsMode::Averaged { realizations: 2 });
        assert!(rel(avg.total_gain, stats.total_gain) < 1e-12);
    }

    #[test]
    fn capacity_examples() {
        let (c, a) = average_capacity::<f64>(&[4.0, 1.0], 1.0, 2.0, 1.0).unwrap();
        assert!((c - (6.5f64.log2() + 1.625f64.log2())).abs() < 1e-12);
        assert!((c - 3.40088).abs() < 1e-5);
        assert!((a.powers()[0] - 1.375).abs() < 1e-12);
        let (c1, _) = average_capacity::<f64>(&[1.0], 1.0, 3.0, 1.0).unwrap();
        assert!((c1 - 2.0).abs() < 1e-12);
        let (c0, _) = average_capacity::<f64>(&[4.0, 1.0], 1.0, 1e-12, 1.0).unwrap();
        assert!(c0 < 1e-10);
        assert!(average_capacity::<f64>(&[1.0], 1.0, 1.0, 0.0).is_err());
    }
}
