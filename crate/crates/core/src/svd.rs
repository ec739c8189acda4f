//! One-sided (Hestenes) Jacobi singular value decomposition for dense complex
//! matrices.
//!
//! Column pairs of the working matrix are rotated until every pair is
//! orthogonal to within `m · ε` relative to the column norms. Singular values
//! are the final column norms; left singular vectors are the normalized
//! columns. The method is slower than bidiagonalization but has high relative
//! accuracy and needs no special handling for clustered values.

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

const MAX_SWEEPS: usize = 80;

/// Thin SVD `A = U · diag(σ) · Vᴴ` with `σ` sorted non-increasing.
#[derive(Clone, Debug)]
pub struct Svd<T: Real> {
    pub sigmas: Vec<T>,
    /// `m × k` left singular vectors, `k = min(m, n)`.
    pub u: DMatrix<Complex<T>>,
    /// `n × k` right singular vectors.
    pub v: DMatrix<Complex<T>>,
}

struct Jacobi<T: Real> {
    work: Vec<Vec<Complex<T>>>,
    right: Option<Vec<Vec<Complex<T>>>>,
    sweeps: usize,
}

#[inline]
fn dotc<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    let mut re = T::zero();
    let mut im = T::zero();
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re + x.im * y.im;
        im += x.re * y.im - x.im * y.re;
    }
    Complex::new(re, im)
}

#[inline]
fn norm_sq<T: Real>(a: &[Complex<T>]) -> T {
    a.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
}

/// `(x, y) ← (c·x − s·e·y, s·x + c·e·y)`.
#[inline]
fn rotate<T: Real>(x: &mut [Complex<T>], y: &mut [Complex<T>], c: T, s: T, e: Complex<T>) {
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        let ye = *yi * e;
        let xo = *xi;
        *xi = xo * c - ye * s;
        *yi = xo * s + ye * c;
    }
}

fn pair_mut<V>(v: &mut [V], i: usize, j: usize) -> (&mut V, &mut V) {
    debug_assert!(i < j);
    let (lo, hi) = v.split_at_mut(j);
    (&mut lo[i], &mut hi[0])
}

impl<T: Real> Jacobi<T> {
    fn run(a: &DMatrix<Complex<T>>, vectors: bool) -> Result<Self> {
        let (m, n) = a.shape();
        debug_assert!(m >= n);
        let work: Vec<Vec<Complex<T>>> = a.column_iter().map(|c| c.iter().copied().collect()).collect();
        let right = vectors.then(|| {
            (0..n)
                .map(|j| {
                    let mut e = vec![Complex::new(T::zero(), T::zero()); n];
                    e[j] = Complex::new(T::one(), T::zero());
                    e
                })
                .collect()
        });
        let mut jac = Self { work, right, sweeps: 0 };
        let tol = T::default_epsilon() * T::from_count(m.max(1));
        let mut norms: Vec<T> = jac.work.iter().map(|c| norm_sq(c)).collect();
        // columns at rounding level are deflated; their coupling ratio cannot settle
        let total = norms.iter().fold(T::zero(), |acc, x| acc + *x);
        let negligible = tol * tol * total;

        loop {
            for (nrm, col) in norms.iter_mut().zip(jac.work.iter_mut()) {
                if *nrm > T::zero() && *nrm <= negligible {
                    col.iter_mut().for_each(|z| *z = Complex::new(T::zero(), T::zero()));
                    *nrm = T::zero();
                }
            }
            let mut rotated = false;
            let mut worst = T::zero();
            for i in 0..n {
                for j in (i + 1)..n {
                    let (alpha, beta) = (norms[i], norms[j]);
                    if alpha == T::zero() || beta == T::zero() {
                        continue;
                    }
                    let gamma = dotc(&jac.work[i], &jac.work[j]);
                    let g = gamma.norm_sqr().sqrt();
                    let scale = (alpha * beta).sqrt();
                    let ratio = g / scale;
                    if ratio > worst {
                        worst = ratio;
                    }
                    if !(ratio > tol) {
                        continue;
                    }
                    rotated = true;
                    let e = Complex::new(gamma.re / g, -gamma.im / g);
                    let zeta = (beta - alpha) / (g + g);
                    let root = (T::one() + zeta * zeta).sqrt();
                    let t = if zeta >= T::zero() {
                        T::one() / (zeta + root)
                    } else {
                        -T::one() / (root - zeta)
                    };
                    let c = T::one() / (T::one() + t * t).sqrt();
                    let s = c * t;
                    let (x, y) = pair_mut(&mut jac.work, i, j);
                    rotate(x, y, c, s, e);
                    if let Some(v) = jac.right.as_mut() {
                        let (x, y) = pair_mut(v, i, j);
                        rotate(x, y, c, s, e);
                    }
                    norms[i] = alpha - t * g;
                    norms[j] = beta + t * g;
                }
            }
            jac.sweeps += 1;
            // exact norms for the next sweep
            for (nrm, col) in norms.iter_mut().zip(&jac.work) {
                *nrm = norm_sq(col);
            }
            if !rotated {
                return Ok(jac);
            }
            if jac.sweeps >= MAX_SWEEPS {
                return Err(Error::Numeric(format!(
                    "Jacobi SVD did not converge after {} sweeps on a {m}x{n} matrix \
                     (largest relative column coupling {:e}, tolerance {:e})",
                    jac.sweeps,
                    worst.as_f64(),
                    tol.as_f64()
                )));
            }
        }
    }
}

/// Extends `basis` (orthonormal columns, some marked missing) to a full
/// orthonormal set by Gram-Schmidt on standard basis vectors. The first
/// candidate keeping half its norm is taken, else the best one seen.
fn complete_basis<T: Real>(basis: &mut [Option<Vec<Complex<T>>>], dim: usize) {
    let zero = Complex::new(T::zero(), T::zero());
    let mut candidate = 0usize;
    for slot in 0..basis.len() {
        if basis[slot].is_some() {
            continue;
        }
        let mut best: Option<(T, Vec<Complex<T>>)> = None;
        for _ in 0..dim {
            let mut v = vec![zero; dim];
            v[candidate] = Complex::new(T::one(), T::zero());
            candidate = (candidate + 1) % dim;
            for _ in 0..2 {
                for q in basis.iter().flatten() {
                    let p = dotc(q, &v);
                    for (vi, qi) in v.iter_mut().zip(q) {
                        *vi -= *qi * p;
                    }
                }
            }
            let nrm = norm_sq(&v).sqrt();
            let done = nrm > T::lit(0.5);
            if best.as_ref().is_none_or(|(b, _)| nrm > *b) {
                best = Some((nrm, v));
            }
            if done {
                break;
            }
        }
        let (nrm, mut v) = best.expect("dimension is positive");
        for vi in v.iter_mut() {
            *vi /= nrm;
        }
        basis[slot] = Some(v);
    }
}

fn columns_to_matrix<T: Real>(cols: &[Vec<Complex<T>>], rows: usize) -> DMatrix<Complex<T>> {
    DMatrix::from_fn(rows, cols.len(), |r, c| cols[c][r])
}

fn decompose_tall<T: Real>(a: &DMatrix<Complex<T>>, vectors: bool) -> Result<Svd<T>> {
    let (m, n) = a.shape();
    let jac = Jacobi::run(a, vectors)?;
    let raw: Vec<T> = jac.work.iter().map(|c| norm_sq(c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        raw[y]
            .partial_cmp(&raw[x])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.cmp(&y))
    });
    let sigmas: Vec<T> = order.iter().map(|&i| raw[i]).collect();

    if !vectors {
        return Ok(Svd {
            sigmas,
            u: DMatrix::zeros(m, 0),
            v: DMatrix::zeros(n, 0),
        });
    }

    // directions of columns at the rounding floor are not trustworthy
    let floor = sigmas.first().copied().unwrap_or_else(T::zero) * T::default_epsilon() * T::from_count(m.max(1));
    let mut left: Vec<Option<Vec<Complex<T>>>> = order
        .iter()
        .map(|&i| {
            let s = raw[i];
            if s > floor && s > T::zero() {
                Some(jac.work[i].iter().map(|z| *z / s).collect())
            } else {
                None
            }
        })
        .collect();
    complete_basis(&mut left, m);
    let left: Vec<Vec<Complex<T>>> = left.into_iter().map(|c| c.expect("completed basis")).collect();
    let right = jac.right.expect("vectors requested");
    let right: Vec<Vec<Complex<T>>> = order.iter().map(|&i| right[i].clone()).collect();
    Ok(Svd {
        sigmas,
        u: columns_to_matrix(&left, m),
        v: columns_to_matrix(&right, n),
    })
}

/// Full thin SVD of `a`.
pub fn svd<T: Real>(a: &DMatrix<Complex<T>>) -> Result<Svd<T>> {
    if a.nrows() >= a.ncols() {
        decompose_tall(a, true)
    } else {
        let t = decompose_tall(&a.adjoint(), true)?;
        Ok(Svd {
            sigmas: t.sigmas,
            u: t.v,
            v: t.u,
        })
    }
}

/// Singular values only, sorted non-increasing.
pub fn singular_values<T: Real>(a: &DMatrix<Complex<T>>) -> Result<Vec<T>> {
    let s = if a.nrows() >= a.ncols() {
        decompose_tall(a, false)?
    } else {
        decompose_tall(&a.adjoint(), false)?
    };
    Ok(s.sigmas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{gaussian_matrix, stream};

    type C = Complex<f64>;

    fn check(a: &DMatrix<C>, tol: f64) {
        let s = svd(a).unwrap();
        let k = a.nrows().min(a.ncols());
        assert_eq!(s.sigmas.len(), k);
        assert!(s.sigmas.windows(2).all(|w| w[0] >= w[1]));
        let sig = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            k,
            s.sigmas.iter().map(|&x| C::new(x, 0.0)),
        ));
        let rec = &s.u * sig * s.v.adjoint();
        let scale = a.norm().max(1e-300);
        assert!((rec - a).norm() / scale < tol, "reconstruction");
        let eye = DMatrix::<C>::identity(k, k);
        let du = (s.u.adjoint() * &s.u - &eye)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        let dv = (s.v.adjoint() * &s.v - &eye)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(du < tol && dv < tol, "orthonormality {du:e} {dv:e}");
    }

    #[test]
    fn random_square_and_rectangular() {
        let mut rng = stream(1);
        for &(m, n) in &[(1, 1), (2, 2), (5, 5), (16, 16), (7, 3), (3, 7), (40, 40)] {
            let a = gaussian_matrix::<f64, _>(&mut rng, m, n);
            check(&a, 1e-12);
        }
    }

    #[test]
    fn rank_deficient_and_zero() {
        check(&DMatrix::<C>::zeros(4, 4), 1e-12);
        let mut rng = stream(2);
        let b = gaussian_matrix::<f64, _>(&mut rng, 6, 2);
        let c = gaussian_matrix::<f64, _>(&mut rng, 2, 6);
        let a = &b * &c;
        check(&a, 1e-12);
        let s = svd(&a).unwrap();
        assert!(s.sigmas[2] < 1e-12 * s.sigmas[0]);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C::new(3.0, 0.0),
            C::new(0.0, 0.0),
            C::new(1.0, 0.0),
        ]));
        check(&d, 1e-14);
        assert_eq!(svd(&d).unwrap().sigmas, vec![3.0, 1.0, 0.0]);
    }

    #[test]
    fn large_low_rank_converges() {
        let mut rng = stream(12);
        let b = gaussian_matrix::<f64, _>(&mut rng, 64, 5);
        let c = gaussian_matrix::<f64, _>(&mut rng, 5, 64);
        let a = &b * &c;
        check(&a, 1e-12);
        let s = svd(&a).unwrap();
        assert!(s.sigmas[5] < 1e-12 * s.sigmas[0]);
    }

    #[test]
    fn completes_a_single_missing_direction() {
        // rank m-1 with a null direction spread over every coordinate
        let m = 16;
        let mut rng = stream(13);
        let q = svd(&gaussian_matrix::<f64, _>(&mut rng, m, m)).unwrap().u;
        let mut d = nalgebra::DVector::from_element(m, C::new(1.0, 0.0));
        d[m - 1] = C::new(0.0, 0.0);
        let a = &q * DMatrix::from_diagonal(&d) * q.adjoint();
        check(&a, 1e-12);
    }

    #[test]
    fn golden_ratio_example() {
        let a = DMatrix::from_row_slice(
            2,
            2,
            &[C::new(1.0, 0.0), C::new(1.0, 0.0), C::new(0.0, 0.0), C::new(1.0, 0.0)],
        );
        let s = singular_values(&a).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((s[0] - phi).abs() < 1e-14);
        assert!((s[1] - (phi - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn matches_nalgebra_singular_values() {
        let mut rng = stream(3);
        for n in [4usize, 9, 24] {
            let a = gaussian_matrix::<f64, _>(&mut rng, n, n);
            let ours = singular_values(&a).unwrap();
            let mut reference: Vec<f64> = a.clone().singular_values().iter().copied().collect();
            reference.sort_by(|x, y| y.partial_cmp(x).unwrap());
            for (x, y) in ours.iter().zip(&reference) {
                assert!((x - y).abs() < 1e-11 * reference[0]);
            }
        }
    }

    #[test]
    fn single_precision() {
        let mut rng = stream(4);
        let a = gaussian_matrix::<f32, _>(&mut rng, 12, 12);
        let s = svd(&a).unwrap();
        let k = 12;
        let sig = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            k,
            s.sigmas.iter().map(|&x| Complex::new(x, 0.0)),
        ));
        let rec = &s.u * sig * s.v.adjoint();
        assert!((rec - &a).norm() / a.norm() < 1e-5);
    }
}
