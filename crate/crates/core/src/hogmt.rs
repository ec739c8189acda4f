//! Discrete higher-order kernel decomposition into jointly orthogonal eigenwaves.
//!
//! A flattened kernel `K` is factored as `K = Σ_n σ_n ψ_n φ_nᴴ`. The input-side
//! eigenwave `φ_n` is what the transmitter sends (`K φ_n = σ_n ψ_n`), and the
//! receiver matched-filters with `ψ_nᴴ`. Folding a column back onto the
//! kernel's grid gives the multidimensional eigenfunction.

use nalgebra::{DMatrix, DVector};
use ndarray::Array3;
use num_complex::Complex;

use crate::error::{check_dim, Error, Result};
use crate::kernel::{Domain, FrameGrid, KernelMatrix};
use crate::scalar::{is_finite, modulus, Real};
use crate::svd;

/// Ordered triples `(σ_n, ψ_n, φ_n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenwaveSet<T: Real> {
    sigmas: Vec<T>,
    psis: DMatrix<Complex<T>>,
    phis: DMatrix<Complex<T>>,
    grid: FrameGrid,
    domain: Domain,
}

impl<T: Real> EigenwaveSet<T> {
    /// Assembles a set from raw parts, checking shapes and the ordering of `sigmas`.
    pub fn from_parts(
        sigmas: Vec<T>,
        psis: DMatrix<Complex<T>>,
        phis: DMatrix<Complex<T>>,
        grid: FrameGrid,
        domain: Domain,
    ) -> Result<Self> {
        check_dim("eigenwave count (psi)", sigmas.len(), psis.ncols())?;
        check_dim("eigenwave count (phi)", sigmas.len(), phis.ncols())?;
        check_dim("psi length", grid.dim_out(), psis.nrows())?;
        check_dim("phi length", grid.dim_in(), phis.nrows())?;
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= T::zero())) {
            return Err(Error::Numeric("singular values must be finite and non-negative".into()));
        }
        if sigmas.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Numeric("singular values must be non-increasing".into()));
        }
        Ok(Self {
            sigmas,
            psis,
            phis,
            grid,
            domain,
        })
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }

    pub fn sigmas(&self) -> &[T] {
        &self.sigmas
    }

    /// Per-frame eigenvalues `λ_n = σ_n²`.
    pub fn lambdas(&self) -> Vec<T> {
        self.sigmas.iter().map(|s| *s * *s).collect()
    }

    pub fn psis(&self) -> &DMatrix<Complex<T>> {
        &self.psis
    }

    pub fn phis(&self) -> &DMatrix<Complex<T>> {
        &self.phis
    }

    pub fn grid(&self) -> &FrameGrid {
        &self.grid
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Re-labels the grid, e.g. after loading a file that carries only dimensions.
    pub fn with_grid(mut self, grid: FrameGrid, domain: Domain) -> Result<Self> {
        check_dim("psi length", grid.dim_out(), self.psis.nrows())?;
        check_dim("phi length", grid.dim_in(), self.phis.nrows())?;
        self.grid = grid;
        self.domain = domain;
        Ok(self)
    }

    /// Keeps the `rank` strongest eigenwaves.
    pub fn truncated(&self, rank: usize) -> Self {
        let r = rank.min(self.len());
        Self {
            sigmas: self.sigmas[..r].to_vec(),
            psis: self.psis.columns(0, r).into_owned(),
            phis: self.phis.columns(0, r).into_owned(),
            grid: self.grid,
            domain: self.domain,
        }
    }

    /// Largest entries of `|ΨᴴΨ − I|` and `|ΦᴴΦ − I|`.
    pub fn orthonormality_defect(&self) -> (T, T) {
        fn defect<T: Real>(m: &DMatrix<Complex<T>>) -> T {
            let g = m.adjoint() * m;
            let mut worst = T::zero();
            for ((r, c), z) in g.iter().enumerate().map(|(i, z)| ((i % g.nrows(), i / g.nrows()), z)) {
                let target = if r == c {
                    Complex::new(T::one(), T::zero())
                } else {
                    Complex::new(T::zero(), T::zero())
                };
                let d = modulus(*z - target);
                if d > worst {
                    worst = d;
                }
            }
            worst
        }
        (defect(&self.psis), defect(&self.phis))
    }

    /// `ψ_n` folded onto `(user, symbol, subcarrier)` of the output grid.
    pub fn fold_psi(&self, n: usize) -> Array3<Complex<T>> {
        let g = &self.grid;
        let col = self.psis.column(n);
        Array3::from_shape_fn((g.n_users_rx, g.n_symbols, g.n_subcarriers), |(u, t, f)| {
            col[g.index(u, t, f)]
        })
    }

    /// `φ_n` folded onto `(user, symbol, subcarrier)` of the input grid.
    pub fn fold_phi(&self, n: usize) -> Array3<Complex<T>> {
        let g = &self.grid;
        let col = self.phis.column(n);
        Array3::from_shape_fn((g.n_users_tx, g.n_symbols, g.n_subcarriers), |(u, t, f)| {
            col[g.index(u, t, f)]
        })
    }
}

/// Rotates each pair so the largest-magnitude entry of `ψ_n` is real and
/// positive (first such entry on ties).
fn canonicalize<T: Real>(psis: &mut DMatrix<Complex<T>>, phis: &mut DMatrix<Complex<T>>) {
    for n in 0..psis.ncols() {
        let mut best = 0usize;
        let mut best_mag = T::zero();
        for (i, z) in psis.column(n).iter().enumerate() {
            let m = z.norm_sqr();
            if m > best_mag {
                best_mag = m;
                best = i;
            }
        }
        if best_mag == T::zero() {
            continue;
        }
        let z = psis[(best, n)];
        let mag = best_mag.sqrt();
        let rot = Complex::new(z.re / mag, -z.im / mag);
        for v in psis.column_mut(n).iter_mut() {
            *v *= rot;
        }
        for v in phis.column_mut(n).iter_mut() {
            *v *= rot;
        }
        psis[(best, n)] = Complex::new(mag, T::zero());
    }
}

/// Decomposes `k` into eigenwaves, optionally keeping only the `rank_limit`
/// strongest.
pub fn decompose<T: Real>(k: &KernelMatrix<T>, rank_limit: Option<usize>) -> Result<EigenwaveSet<T>> {
    let data = k.data();
    if let Some(pos) = data.iter().position(|z| !is_finite(*z)) {
        return Err(Error::Numeric(format!("kernel entry {pos} is not finite")));
    }
    let full = data.nrows().min(data.ncols());
    if let Some(r) = rank_limit {
        if r > full {
            return Err(Error::Config(format!(
                "rank limit {r} exceeds min(D_out, D_in) = {full}"
            )));
        }
    }
    let svd::Svd { sigmas, mut u, mut v } = svd::svd(data)?;
    canonicalize(&mut u, &mut v);
    let set = EigenwaveSet {
        sigmas,
        psis: u,
        phis: v,
        grid: *k.grid(),
        domain: k.domain(),
    };
    Ok(match rank_limit {
        Some(r) => set.truncated(r),
        None => set,
    })
}

/// `Σ_n σ_n ψ_n φ_nᴴ` on the set's grid.
pub fn reconstruct<T: Real>(e: &EigenwaveSet<T>) -> KernelMatrix<T> {
    let scaled = DMatrix::from_fn(e.psis.nrows(), e.len(), |r, c| e.psis[(r, c)] * e.sigmas[c]);
    let data = scaled * e.phis.adjoint();
    KernelMatrix::new(data, e.grid, e.domain).expect("eigenwave shapes match the grid")
}

/// Cross-talk matrix `C[m, n] = ψ_mᴴ K φ_n`.
pub fn crosstalk<T: Real>(e: &EigenwaveSet<T>, k: &KernelMatrix<T>) -> Result<DMatrix<Complex<T>>> {
    check_dim("kernel rows vs psi length", e.psis.nrows(), k.data().nrows())?;
    check_dim("kernel columns vs phi length", e.phis.nrows(), k.data().ncols())?;
    Ok(e.psis.adjoint() * k.data() * &e.phis)
}

/// Projection `⟨Φ_a, Φ_b⟩ = Σ_k (Σ_n a_n φ_n[k]) · conj(Σ_m b_m φ_m[k])`,
/// evaluated by explicit summation over the grid.
pub fn eigenwave_projection<T: Real>(e: &EigenwaveSet<T>, a: &[Complex<T>], b: &[Complex<T>]) -> Result<Complex<T>> {
    check_dim("coefficients a", e.len(), a.len())?;
    check_dim("coefficients b", e.len(), b.len())?;
    let combine = |coef: &[Complex<T>]| -> DVector<Complex<T>> {
        let mut out = DVector::zeros(e.phis.nrows());
        for (n, c) in coef.iter().enumerate() {
            out.axpy(*c, &e.phis.column(n), Complex::new(T::one(), T::zero()));
        }
        out
    };
    let (fa, fb) = (combine(a), combine(b));
    Ok(fa
        .iter()
        .zip(fb.iter())
        .fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| acc + *x * y.conj()))
}
