//! TD-target constructions.
//!
//! Every function here works on values already read off the networks at the
//! next state: the bootstrap value(s) `Q̄(s', a')`, the protester value
//! `V(s')`, the log-density of a sampled next action. The agents module does
//! the network evaluation and calls into these per sample.
//!
//! `done` marks a true terminal transition; the whole bracketed bootstrap term
//! is multiplied by `1 − done`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::nn::Real;

/// Cautious weight `ω ∈ [0, 1]` mixing the target critic with the protester.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct CautiousWeight(f64);

impl CautiousWeight {
    pub fn new(omega: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&omega) {
            return Err(Error::invalid(format!("cautious weight {omega} outside [0, 1]")));
        }
        Ok(Self(omega))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// `N × M` atoms of a distributional critic for one `(s, a)`, network-major.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomSet<T> {
    networks: usize,
    atoms_per_network: usize,
    atoms: Vec<T>,
}

impl<T: Real> AtomSet<T> {
    pub fn new(networks: usize, atoms_per_network: usize, atoms: Vec<T>) -> Result<Self> {
        if networks == 0 || atoms_per_network == 0 {
            return Err(Error::invalid("an atom set needs N >= 1 and M >= 1"));
        }
        if atoms.len() != networks * atoms_per_network {
            return Err(Error::DimensionMismatch {
                expected: networks * atoms_per_network,
                got: atoms.len(),
            });
        }
        if atoms.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("atoms must be finite"));
        }
        Ok(Self {
            networks,
            atoms_per_network,
            atoms,
        })
    }

    /// One row of `M` atoms per network.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::invalid("ragged atom rows"));
        }
        Self::new(rows.len(), m, rows.concat())
    }

    pub fn networks(&self) -> usize {
        self.networks
    }

    pub fn atoms_per_network(&self) -> usize {
        self.atoms_per_network
    }

    pub fn as_slice(&self) -> &[T] {
        &self.atoms
    }

    pub fn min(&self) -> T {
        self.atoms.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn mean(&self) -> T {
        self.atoms.iter().copied().sum::<T>() / T::lit(self.atoms.len() as f64)
    }

    /// The `k·N` smallest pooled atoms, ascending. Ties keep pooled order.
    pub fn truncated(&self, k: usize) -> Result<Vec<T>> {
        if k == 0 {
            return Err(Error::invalid("must keep at least one atom per network"));
        }
        if k > self.atoms_per_network {
            return Err(Error::TruncationTooLarge {
                k,
                m: self.atoms_per_network,
            });
        }
        let mut pooled = self.atoms.clone();
        pooled.sort_by(|a, b| a.partial_cmp(b).expect("finite atoms"));
        pooled.truncate(k * self.networks);
        Ok(pooled)
    }
}

/// Equally weighted target atoms for the quantile critics.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetDistribution<T>(pub Vec<T>);

impl<T: Real> TargetDistribution<T> {
    pub fn mean(&self) -> T {
        self.0.iter().copied().sum::<T>() / T::lit(self.0.len() as f64)
    }
}

fn mask<T: Real>(done: bool) -> T {
    if done {
        T::zero()
    } else {
        T::one()
    }
}

/// `y = r + γ·Q̄(s', π̄(s'))`.
pub fn standard_target<T: Real>(r: T, gamma: T, q_next: T, done: bool) -> T {
    r + mask::<T>(done) * gamma * q_next
}

/// `y = r + γ·min(Q̄₁, Q̄₂)`.
pub fn min_q_target<T: Real>(r: T, gamma: T, q1_next: T, q2_next: T, done: bool) -> T {
    r + mask::<T>(done) * gamma * q1_next.min(q2_next)
}

fn blend<T: Real>(omega: CautiousWeight, q: T, v: T) -> T {
    let w = T::lit(omega.get());
    (T::one() - w) * q + w * v
}

/// `y = r + γ[(1 − ω)·Q̄(s', a') + ω·V(s')]`.
pub fn moderate_target<T: Real>(r: T, gamma: T, omega: CautiousWeight, q_next: T, v_next: T, done: bool) -> T {
    r + mask::<T>(done) * gamma * blend(omega, q_next, v_next)
}

/// Moderate target with the entropy bonus:
/// `y = r + γ[(1 − ω)·Q̄(s', a') + ω·V(s') − α·log π(a'|s')]`.
#[allow(clippy::too_many_arguments)]
pub fn mac_target<T: Real>(
    r: T,
    gamma: T,
    omega: CautiousWeight,
    alpha: T,
    q_next: T,
    v_next: T,
    log_prob_next: T,
    done: bool,
) -> T {
    r + mask::<T>(done) * gamma * (blend(omega, q_next, v_next) - alpha * log_prob_next)
}

/// `y = r + γ[min_i Q̄_i(s', a') − α·log π(a'|s')]`.
pub fn sac_min_q_target<T: Real>(r: T, gamma: T, alpha: T, q1_next: T, q2_next: T, log_prob_next: T, done: bool) -> T {
    r + mask::<T>(done) * gamma * (q1_next.min(q2_next) - alpha * log_prob_next)
}

/// Truncated pooled target: keep the `k·N` smallest of the `N·M` target atoms
/// and map each through `y_i = r + γ[z_(i) − α·log π(a'|s')]`.
pub fn tqc_target_atoms<T: Real>(
    r: T,
    gamma: T,
    alpha: T,
    atoms_next: &AtomSet<T>,
    k: usize,
    log_prob_next: T,
    done: bool,
) -> Result<TargetDistribution<T>> {
    let m = mask::<T>(done);
    let kept = atoms_next.truncated(k)?;
    Ok(TargetDistribution(
        kept.into_iter().map(|z| r + m * gamma * (z - alpha * log_prob_next)).collect(),
    ))
}

/// Moderate truncated target:
/// `y_i = r + γ[(1 − ω)·z_(i) + ω·V(s') − α·log π(a'|s')]`.
#[allow(clippy::too_many_arguments)]
pub fn mqc_target_atoms<T: Real>(
    r: T,
    gamma: T,
    omega: CautiousWeight,
    alpha: T,
    atoms_next: &AtomSet<T>,
    v_next: T,
    k: usize,
    log_prob_next: T,
    done: bool,
) -> Result<TargetDistribution<T>> {
    let m = mask::<T>(done);
    let kept = atoms_next.truncated(k)?;
    Ok(TargetDistribution(
        kept.into_iter()
            .map(|z| r + m * gamma * (blend(omega, z, v_next) - alpha * log_prob_next))
            .collect(),
    ))
}

fn argmax(values: &[f64]) -> Result<usize> {
    if values.is_empty() {
        return Err(Error::EmptyActionGrid);
    }
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    Ok(best)
}

/// `y = r + γ·max_a' Q(s', a')` over a finite action grid.
pub fn greedy_target(r: f64, gamma: f64, q_next: &[f64], done: bool) -> Result<f64> {
    let a = argmax(q_next)?;
    Ok(standard_target(r, gamma, q_next[a], done))
}

/// Double-Q target over a finite action grid: critic 2 selects
/// (`argmax`, lowest index on ties), critic 1 evaluates.
pub fn double_q_target(r: f64, gamma: f64, q1_next: &[f64], q2_next: &[f64], done: bool) -> Result<f64> {
    if q1_next.len() != q2_next.len() {
        return Err(Error::DimensionMismatch {
            expected: q1_next.len(),
            got: q2_next.len(),
        });
    }
    let a = argmax(q2_next)?;
    Ok(standard_target(r, gamma, q1_next[a], done))
}

/// One draw of `clip(N(0, σ²), −c, c)`.
pub fn smoothing_noise<R: Rng + ?Sized>(rng: &mut R, sigma: f64, clip: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    (sigma * z).clamp(-clip, clip)
}

/// Adds target-smoothing noise to a normalized action and clips the result
/// back into `[-1, 1]`.
pub fn smoothed_action<T: Real>(action: T, noise: T) -> T {
    (action + noise).max(-T::one()).min(T::one())
}


#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn moderate_is_nonincreasing_in_omega(
            r in -5.0f64..5.0, q in -10.0f64..10.0, gap in 0.0f64..10.0,
            a in 0.0f64..=1.0, b in 0.0f64..=1.0,
        ) {
            let v = q - gap;
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let y_lo = moderate_target(r, 0.99, CautiousWeight::new(lo).unwrap(), q, v, false);
            let y_hi = moderate_target(r, 0.99, CautiousWeight::new(hi).unwrap(), q, v, false);
            prop_assert!(y_hi <= y_lo + 1e-12);
        }

        #[test]
        fn min_q_below_either_critic(r in -5.0f64..5.0, q1 in -10.0f64..10.0, q2 in -10.0f64..10.0) {
            prop_assert!(min_q_target(r, 0.9, q1, q2, false) <= standard_target(r, 0.9, q1, false));
        }

        #[test]
        fn truncated_atoms_sorted_and_monotone(
            rows in proptest::collection::vec(proptest::collection::vec(-50.0f64..50.0, 5), 1..4),
            r in -2.0f64..2.0,
        ) {
            let atoms = AtomSet::from_rows(&rows).unwrap();
            let mut prev_mean = f64::INFINITY;
            for k in (1..=5).rev() {
                let y = tqc_target_atoms(r, 0.99, 0.1, &atoms, k, 0.3, false).unwrap();
                prop_assert_eq!(y.0.len(), k * rows.len());
                prop_assert!(y.0.windows(2).all(|p| p[0] <= p[1]));
                prop_assert!(y.mean() <= prev_mean + 1e-9);
                prev_mean = y.mean();
            }
        }
    }
}
