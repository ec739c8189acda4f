use eigenwave::hogmt::{decompose, reconstruct};
use eigenwave::io::{decode_array, decode_kernel, encode_array, encode_kernel};
use eigenwave::kernel::{kernel_to_ldr, ldr_to_kernel, Domain, FrameGrid, KernelMatrix};
use eigenwave::modem::waterfill;
use eigenwave::otfs::{isfft, sfft, DelayDopplerGrid};
use eigenwave::random::{gaussian_matrix, gaussian_vector, stream};
use eigenwave::sim::wilson_interval;
use eigenwave::stats::cyclic_autocorrelation;
use eigenwave::C64;
use nalgebra::DMatrix;
use ndarray::Array2;
use proptest::prelude::*;

fn random_kernel(seed: u64, rows: usize, cols: usize, rank: usize) -> DMatrix<C64> {
    let mut rng = stream(seed);
    let a = gaussian_matrix(&mut rng, rows, rank);
    let b = gaussian_matrix(&mut rng, rank, cols);
    a * b
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decomposition_reconstructs(seed in any::<u64>(), rows in 1usize..12, cols in 1usize..12, rank in 1usize..12) {
        let m = random_kernel(seed, rows, cols, rank);
        let k = KernelMatrix::from_matrix(m.clone()).unwrap();
        let e = decompose(&k, None).unwrap();
        let err = (reconstruct(&e).into_data() - &m).norm();
        prop_assert!(err <= 1e-10 * (1.0 + m.norm()));
        let (dp, dq) = e.orthonormality_defect();
        prop_assert!(dp < 1e-10 && dq < 1e-10);
        prop_assert!(e.sigmas().windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(e.sigmas().iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn leading_entry_of_psi_is_real_positive(seed in any::<u64>(), d in 1usize..10) {
        let k = KernelMatrix::from_matrix(random_kernel(seed, d, d, d)).unwrap();
        let e = decompose(&k, None).unwrap();
        for n in 0..e.len() {
            let col = e.psis().column(n);
            let big = col.iter().fold(C64::new(0.0, 0.0), |a, z| if z.norm() > a.norm() + 1e-12 { *z } else { a });
            prop_assert!(big.re > 0.0 && big.im.abs() < 1e-12);
        }
    }

    #[test]
    fn waterfill_spends_the_budget(seed in any::<u64>(), n in 1usize..16, n0 in 1e-3f64..10.0, p in 1e-2f64..100.0) {
        use rand::Rng;
        let mut rng = stream(seed);
        let lambdas: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
        let alloc = waterfill(&lambdas, n0, p).unwrap();
        let total: f64 = alloc.powers().iter().sum();
        prop_assert!((total - p).abs() <= 1e-9 * p);
        prop_assert!(alloc.powers().iter().all(|&x| x >= 0.0));
        // stronger eigenvalues never get less power
        for i in 0..n {
            for j in 0..n {
                if lambdas[i] > lambdas[j] {
                    prop_assert!(alloc.powers()[i] + 1e-12 >= alloc.powers()[j]);
                }
            }
        }
    }

    #[test]
    fn sfft_inverts_isfft(seed in any::<u64>(), nt in 1usize..6, nf in 1usize..9) {
        let grid = FrameGrid::single_user(nt, nf, 15e3).unwrap();
        let mut rng = stream(seed);
        let x = gaussian_vector::<f64, _>(&mut rng, nt * nf);
        let dd = DelayDopplerGrid::from_symbols(&grid, x.as_slice()).unwrap();
        let back = sfft(&isfft(&dd));
        prop_assert!((back.energy() - dd.energy()).abs() < 1e-10 * (1.0 + dd.energy()));
        for (a, b) in back.to_symbols().iter().zip(x.iter()) {
            prop_assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn ldr_round_trip(seed in any::<u64>(), nt in 1usize..4, nf in 1usize..5) {
        let grid = FrameGrid::single_user(nt, nf, 15e3).unwrap();
        let m = random_kernel(seed, nt * nf, nt * nf, nt * nf);
        let k = KernelMatrix::new(m.clone(), grid, Domain::TimeFrequency).unwrap();
        let back = ldr_to_kernel(&kernel_to_ldr(&k).unwrap()).unwrap();
        prop_assert!((back.into_data() - m).norm() < 1e-10);
    }

    #[test]
    fn kernel_bytes_round_trip(seed in any::<u64>(), rows in 1usize..8, cols in 1usize..8) {
        let k = KernelMatrix::from_matrix(random_kernel(seed, rows, cols, 3)).unwrap();
        let (back, prov) = decode_kernel(&encode_kernel(&k, None).unwrap()).unwrap();
        prop_assert!(prov.is_none());
        prop_assert_eq!(back.data(), k.data());
    }

    #[test]
    fn array_bytes_round_trip(data in proptest::collection::vec(-1e6f64..1e6, 1..40)) {
        let shape = [data.len()];
        let (s, d, _) = decode_array(&encode_array(&shape, &data, None).unwrap()).unwrap();
        prop_assert_eq!(s, shape.to_vec());
        prop_assert_eq!(d, data);
    }

    #[test]
    fn autocorrelation_peaks_at_zero_lag(seed in any::<u64>(), a in 1usize..6, b in 1usize..6) {
        let mut rng = stream(seed);
        let v = gaussian_vector::<f64, _>(&mut rng, a * b);
        let g = Array2::from_shape_fn((a, b), |(x, y)| v[x * b + y]);
        let r = cyclic_autocorrelation(&g);
        let energy: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((r[[0, 0]] - energy).abs() < 1e-10 * (1.0 + energy));
        prop_assert!(r.iter().all(|&x| x <= r[[0, 0]] + 1e-10));
    }

    #[test]
    fn wilson_interval_brackets_the_estimate(n in 1u64..100_000, frac in 0.0f64..=1.0) {
        let k = ((n as f64) * frac).round() as u64;
        let (lo, hi) = wilson_interval(k, n, 1.96);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }
}
