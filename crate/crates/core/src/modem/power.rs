use crate::error::{check_dim, Error, Result};
use crate::scalar::Real;

/// Per-eigenwave transmit powers `P_n` under a total budget `P`.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerAllocation<T: Real> {
    powers: Vec<T>,
    total_power: T,
    noise_power: T,
    water_level: Option<T>,
}

impl<T: Real> PowerAllocation<T> {
    /// Splits `total_power` evenly over the active eigenwaves; inactive ones get
    /// exactly zero. `noise_power` may be zero (noiseless link).
    pub fn equal(active: &[bool], total_power: T, noise_power: T) -> Result<Self> {
        let n_active = active.iter().filter(|&&a| a).count();
        if !(total_power > T::zero()) || noise_power < T::zero() {
            return Err(Error::Config(
                "total power must be positive and noise power non-negative".into(),
            ));
        }
        if n_active == 0 {
            return Err(Error::Config("no active eigenwaves to carry power".into()));
        }
        let share = total_power / T::from_count(n_active);
        Ok(Self {
            powers: active.iter().map(|&a| if a { share } else { T::zero() }).collect(),
            total_power,
            noise_power,
            water_level: None,
        })
    }

    /// Explicit powers; checked against the budget.
    pub fn from_powers(powers: Vec<T>, total_power: T, noise_power: T) -> Result<Self> {
        if powers.iter().any(|p| !(p.is_finite() && *p >= T::zero())) {
            return Err(Error::Config("powers must be finite and non-negative".into()));
        }
        let sum = powers.iter().fold(T::zero(), |a, p| a + *p);
        if sum > total_power + T::lit(1e-9) {
            return Err(Error::Config(format!(
                "allocated power {} exceeds budget {}",
                sum.as_f64(),
                total_power.as_f64()
            )));
        }
        Ok(Self {
            powers,
            total_power,
            noise_power,
            water_level: None,
        })
    }

    pub fn powers(&self) -> &[T] {
        &self.powers
    }

    pub fn len(&self) -> usize {
        self.powers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.powers.is_empty()
    }

    pub fn total_power(&self) -> T {
        self.total_power
    }

    pub fn noise_power(&self) -> T {
        self.noise_power
    }

    /// Water level `μ` when produced by [`waterfill`].
    pub fn water_level(&self) -> Option<T> {
        self.water_level
    }

    pub fn active_mask(&self) -> Vec<bool> {
        self.powers.iter().map(|p| *p > T::zero()).collect()
    }

    pub fn active_count(&self) -> usize {
        self.powers.iter().filter(|p| **p > T::zero()).count()
    }

    /// `Σ_n log2(1 + λ_n P_n / N0)` in bits per frame.
    pub fn sum_rate_bits(&self, lambdas: &[T]) -> Result<T> {
        check_dim("eigenvalues", self.powers.len(), lambdas.len())?;
        if !(self.noise_power > T::zero()) {
            return Err(Error::Config("sum rate needs positive noise power".into()));
        }
        Ok(self.powers.iter().zip(lambdas).fold(T::zero(), |acc, (p, l)| {
            acc + (T::one() + *l * *p / self.noise_power).log2()
        }))
    }
}

/// Water-filling `P_n = max(0, μ − N0/λ_n)` with `Σ P_n = P`.
///
/// The active set is found exactly: eigenwaves are ranked by `λ_n`, and the
/// largest prefix whose weakest member still receives positive power fixes `μ`.
pub fn waterfill<T: Real>(lambdas: &[T], noise_power: T, total_power: T) -> Result<PowerAllocation<T>> {
    if !(noise_power > T::zero()) || !(total_power > T::zero()) {
        return Err(Error::Config(
            "water filling needs positive noise and total power".into(),
        ));
    }
    if lambdas.iter().any(|l| !(l.is_finite() && *l >= T::zero())) {
        return Err(Error::Config("eigenvalues must be finite and non-negative".into()));
    }
    let mut order: Vec<usize> = (0..lambdas.len()).filter(|&i| lambdas[i] > T::zero()).collect();
    if order.is_empty() {
        return Err(Error::NoCapacity);
    }
    order.sort_by(|&a, &b| lambdas[b].partial_cmp(&lambdas[a]).expect("finite").then(a.cmp(&b)));

    let floors: Vec<T> = order.iter().map(|&i| noise_power / lambdas[i]).collect();
    let mut prefix = T::zero();
    let mut level = T::zero();
    for (k, floor) in floors.iter().enumerate() {
        let candidate = (total_power + prefix + *floor) / T::from_count(k + 1);
        if candidate > *floor {
            level = candidate;
            prefix += *floor;
        } else {
            break;
        }
    }

    let mut powers = vec![T::zero(); lambdas.len()];
    for &i in &order {
        let p = level - noise_power / lambdas[i];
        if p > T::zero() {
            powers[i] = p;
        }
    }
    Ok(PowerAllocation {
        powers,
        total_power,
        noise_power,
        water_level: Some(level),
    })
}
