use nalgebra::DVector;
use num_complex::Complex;

use super::power::PowerAllocation;
use crate::error::{check_dim, Error, Result};
use crate::hogmt::EigenwaveSet;
use crate::scalar::Real;

/// One eigenwave-multiplexed frame.
#[derive(Clone, Debug, PartialEq)]
pub struct MemFrame<T: Real> {
    /// Data symbols of the active eigenwaves, in eigenwave order.
    pub data_symbols: Vec<Complex<T>>,
    /// Input-grid signal `Σ_{n active} √P_n s_n φ_n`.
    pub tx_signal: DVector<Complex<T>>,
    pub active_mask: Vec<bool>,
}

/// Matched-filter outputs of the active eigenwaves.
#[derive(Clone, Debug, PartialEq)]
pub struct MemEstimates<T: Real> {
    /// Eigenwave index of each estimate.
    pub indices: Vec<usize>,
    /// `ŝ_n = ψ_nᴴ r = σ_n √P_n s_n + v_n`.
    pub raw: Vec<Complex<T>>,
    /// `ŝ_n / (σ_n √P_n)`; zero where the gain vanishes.
    pub equalized: Vec<Complex<T>>,
}

/// Places one data symbol on each active eigenwave.
pub fn mem_modulate<T: Real>(
    e: &EigenwaveSet<T>,
    symbols: &[Complex<T>],
    alloc: &PowerAllocation<T>,
) -> Result<MemFrame<T>> {
    check_dim("power allocation length", e.len(), alloc.len())?;
    let mask = alloc.active_mask();
    let n_active = mask.iter().filter(|&&a| a).count();
    check_dim("data symbols per active eigenwave", n_active, symbols.len())?;

    let phis = e.phis();
    let mut tx = DVector::zeros(phis.nrows());
    let one = Complex::new(T::one(), T::zero());
    let mut next = symbols.iter();
    for (n, &p) in alloc.powers().iter().enumerate() {
        if p > T::zero() {
            let s = *next.next().expect("count checked");
            tx.axpy(s * p.sqrt(), &phis.column(n), one);
        }
    }
    Ok(MemFrame {
        data_symbols: symbols.to_vec(),
        tx_signal: tx,
        active_mask: mask,
    })
}

/// Matched-filters `r` with `ψ_nᴴ` for every active eigenwave.
pub fn mem_demodulate<T: Real>(
    e: &EigenwaveSet<T>,
    r: &DVector<Complex<T>>,
    alloc: &PowerAllocation<T>,
) -> Result<MemEstimates<T>> {
    check_dim("received signal", e.psis().nrows(), r.len())?;
    check_dim("power allocation length", e.len(), alloc.len())?;
    let mut out = MemEstimates {
        indices: Vec::new(),
        raw: Vec::new(),
        equalized: Vec::new(),
    };
    for (n, &p) in alloc.powers().iter().enumerate() {
        if !(p > T::zero()) {
            continue;
        }
        let est = e.psis().column(n).dotc(r);
        let gain = e.sigmas()[n] * p.sqrt();
        out.indices.push(n);
        out.raw.push(est);
        out.equalized.push(if gain > T::zero() {
            est / gain
        } else {
            Complex::new(T::zero(), T::zero())
        });
    }
    Ok(out)
}

/// Deactivates the `⌈fraction · N⌉` eigenwaves with the smallest `σ_n`
/// (higher index first among equals).
pub fn zp_select<T: Real>(e: &EigenwaveSet<T>, fraction: f64) -> Result<Vec<bool>> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Config(format!("zero-pad fraction {fraction} outside [0, 1)")));
    }
    let n = e.len();
    let count = ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let sigmas = e.sigmas();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sigmas[a].partial_cmp(&sigmas[b]).expect("finite").then(b.cmp(&a)));
    let mut mask = vec![true; n];
    for &i in order.iter().take(count) {
        mask[i] = false;
    }
    Ok(mask)
}
