//! Expectile regression and the protester losses.
//!
//! The protester `V_ψ(s)` regresses critic values `Q_θ(s, a)` at buffered
//! actions under the asymmetric squared loss
//!
//! ```text
//! ℓ_τ(y, x) = τ·(y − x)²        if y ≥ x
//!             (1 − τ)·(y − x)²  if y < x
//! ```
//!
//! With a small level (default `τ = 0.01`) the fitted value sits near the
//! bottom of the per-state value distribution.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::nn::{Gradients, Mlp, Real};
use crate::targets::AtomSet;

/// Expectile level `τ ∈ (0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct ExpectileLevel(f64);

impl ExpectileLevel {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::invalid(format!("expectile level {tau} outside (0, 1)")));
        }
        Ok(Self(tau))
    }

    /// A level usable by a protester, which must aim below the mean.
    pub fn lower(tau: f64) -> Result<Self> {
        let level = Self::new(tau)?;
        if tau >= 0.5 {
            return Err(Error::invalid(format!("protester expectile level {tau} must be below 0.5")));
        }
        Ok(level)
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

fn weight<T: Real>(y: T, x: T, tau: ExpectileLevel) -> T {
    // y == x takes the upper branch.
    if y >= x {
        T::lit(tau.get())
    } else {
        T::lit(1.0 - tau.get())
    }
}

pub fn expectile_loss<T: Real>(y: T, x: T, tau: ExpectileLevel) -> T {
    let d = y - x;
    weight(y, x, tau) * d * d
}

/// `∂ℓ_τ(y, x) / ∂x`.
pub fn expectile_loss_grad<T: Real>(y: T, x: T, tau: ExpectileLevel) -> T {
    -T::lit(2.0) * weight(y, x, tau) * (y - x)
}

/// First-order residual `τ·Σ_{y≥x}(y − x) − (1 − τ)·Σ_{y<x}(x − y)`; zero at
/// the expectile and strictly decreasing in `x`.
pub fn expectile_residual(samples: &[f64], x: f64, tau: ExpectileLevel) -> f64 {
    let t = tau.get();
    samples
        .iter()
        .map(|&y| if y >= x { t * (y - x) } else { -(1.0 - t) * (x - y) })
        .sum()
}

/// The `τ`-expectile of a finite sample, by bisection on the first-order
/// condition until the residual is below `1e-10` in magnitude or the bracket
/// collapses to adjacent floats.
pub fn scalar_expectile(samples: &[f64], tau: ExpectileLevel) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("expectile samples must be finite"));
    }
    let mut lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Ok(lo);
    }
    loop {
        let mid = 0.5 * (lo + hi);
        let f = expectile_residual(samples, mid, tau);
        if f.abs() < 1e-10 || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        if f > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Loss value and protester gradients.
#[derive(Clone, Debug)]
pub struct ProtesterLoss<T> {
    pub loss: T,
    pub grads: Gradients<T>,
    /// Protester outputs `V_ψ(s)` on the batch.
    pub values: Vec<T>,
}

/// `mean_i ℓ_τ(Q_θ(s_i, a_i), V_ψ(s_i))`. The critic values are constants;
/// nothing here touches critic parameters.
pub fn protester_loss<T: Real>(
    protester: &Mlp<T>,
    states: ArrayView2<T>,
    critic_values: &[T],
    tau: ExpectileLevel,
) -> Result<ProtesterLoss<T>> {
    let batch = states.nrows();
    if batch == 0 {
        return Err(Error::invalid("protester batch is empty"));
    }
    if critic_values.len() != batch {
        return Err(Error::DimensionMismatch {
            expected: batch,
            got: critic_values.len(),
        });
    }
    if protester.output_dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: protester.output_dim(),
        });
    }
    let trace = protester.trace(states)?;
    let n = T::lit(batch as f64);
    let mut loss = T::zero();
    let mut upstream = Array2::zeros((batch, 1));
    let mut values = Vec::with_capacity(batch);
    for (i, &q) in critic_values.iter().enumerate() {
        let v = trace.output()[[i, 0]];
        loss += expectile_loss(q, v, tau);
        upstream[[i, 0]] = expectile_loss_grad(q, v, tau) / n;
        values.push(v);
    }
    let back = protester.backward(&trace, upstream.view())?;
    Ok(ProtesterLoss {
        loss: loss / n,
        grads: back.grads,
        values,
    })
}

/// Regression targets for the distributional protester: the minimum over all
/// `N·M` online-critic atoms of each sample.
pub fn atom_minima<T: Real>(atoms: &[AtomSet<T>]) -> Vec<T> {
    atoms.iter().map(AtomSet::min).collect()
}

/// Distributional protester loss: [`protester_loss`] against the per-sample
/// minimum atom.
pub fn protester_loss_distributional<T: Real>(
    protester: &Mlp<T>,
    states: ArrayView2<T>,
    atoms: &[AtomSet<T>],
    tau: ExpectileLevel,
) -> Result<ProtesterLoss<T>> {
    protester_loss(protester, states, &atom_minima(atoms), tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Adam;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lvl(t: f64) -> ExpectileLevel {
        ExpectileLevel::new(t).unwrap()
    }

    /// Mean expectile loss minimised over a dense grid.
    fn grid_expectile(samples: &[f64], tau: f64) -> f64 {
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let n = 200_000;
        (0..=n)
            .map(|i| lo + (hi - lo) * i as f64 / n as f64)
            .map(|x| {
                let l: f64 = samples.iter().map(|&y| expectile_loss(y, x, lvl(tau))).sum();
                (l, x)
            })
            .fold((f64::INFINITY, 0.0), |best, cur| if cur.0 < best.0 { cur } else { best })
            .1
    }

    #[test]
    fn loss_branches() {
        assert_eq!(expectile_loss(2.0, 1.0, lvl(0.5)), 0.5);
        assert!((expectile_loss(2.0, 1.0, lvl(0.01)) - 0.01f64).abs() < 1e-15);
        assert!((expectile_loss(0.0, 1.0, lvl(0.01)) - 0.99f64).abs() < 1e-15);
        for y in [-3.0, 0.0, 2.5] {
            assert_eq!(expectile_loss(y, y, lvl(0.2)), 0.0);
        }
    }

    #[test]
    fn levels_are_validated() {
        assert!(ExpectileLevel::new(0.0).is_err());
        assert!(ExpectileLevel::new(1.0).is_err());
        assert!(ExpectileLevel::lower(0.5).is_err());
        assert!(ExpectileLevel::lower(0.01).is_ok());
    }

    #[test]
    fn expectile_of_half_is_mean() {
        assert!((scalar_expectile(&[1.0, 2.0, 3.0], lvl(0.5)).unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn two_point_expectile_equals_level() {
        for tau in [0.01, 0.13, 0.5, 0.99] {
            let e = scalar_expectile(&[0.0, 1.0], lvl(tau)).unwrap();
            assert!((e - tau).abs() < 1e-8);
            let grid = grid_expectile(&[0.0, 1.0], tau);
            assert!((grid - tau).abs() < 1e-4, "grid {grid} vs {tau}");
        }
        let low = scalar_expectile(&[0.0, 1.0], lvl(0.01)).unwrap();
        let high = scalar_expectile(&[0.0, 1.0], lvl(0.99)).unwrap();
        assert!(low < high);
    }

    #[test]
    fn matches_grid_oracle_on_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let samples: Vec<f64> = (0..7).map(|_| rng.gen_range(-3.0..3.0)).collect();
            for tau in [0.05, 0.3, 0.8] {
                let e = scalar_expectile(&samples, lvl(tau)).unwrap();
                assert!((e - grid_expectile(&samples, tau)).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn empty_samples_error() {
        assert!(matches!(scalar_expectile(&[], lvl(0.3)), Err(Error::EmptySamples)));
    }

    #[test]
    fn small_level_approaches_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let s: Vec<f64> = (0..20).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let min = s.iter().copied().fold(f64::INFINITY, f64::min);
            let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e = scalar_expectile(&s, lvl(1e-6)).unwrap();
            assert!(e - min < 1e-3 * (max - min));
        }
    }

    fn constant_protester(v: f64) -> Mlp<f64> {
        let mut net = Mlp::<f64>::zeros(&[1, 1]).unwrap();
        net.layers_mut()[0].bias[0] = v;
        net
    }

    #[test]
    fn exact_protester_has_zero_loss() {
        let states = Array2::zeros((4, 1));
        let out = protester_loss(&constant_protester(1.5), states.view(), &[1.5; 4], lvl(0.01)).unwrap();
        assert_eq!(out.loss, 0.0);
        assert_eq!(out.grads.max_abs(), 0.0);
    }

    #[test]
    fn constant_protester_converges_to_expectile() {
        let q = [0.3, -1.2, 2.0, 0.9, -0.4, 1.1];
        let tau = lvl(0.1);
        let want = scalar_expectile(&q, tau).unwrap();
        let mut net = constant_protester(0.0);
        let mut opt = Adam::new(1e-2);
        let states = Array2::zeros((q.len(), 1));
        for _ in 0..5000 {
            let out = protester_loss(&net, states.view(), &q, tau).unwrap();
            opt.step(&mut net, &out.grads).unwrap();
        }
        let got = net.layers()[0].bias[0];
        assert!((got - want).abs() < 1e-3, "{got} vs {want}");
    }

    #[test]
    fn distributional_targets_are_atom_minima() {
        let atoms = AtomSet::from_rows(&[vec![1.0, 4.0, 2.0], vec![3.0, 0.0, 5.0]]).unwrap();
        assert_eq!(atom_minima(&[atoms]), vec![0.0]);
        let single = AtomSet::new(1, 1, vec![0.7]).unwrap();
        let states = Array2::zeros((1, 1));
        let net = constant_protester(0.2);
        let a = protester_loss_distributional(&net, states.view(), &[single], lvl(0.01)).unwrap();
        let b = protester_loss(&net, states.view(), &[0.7], lvl(0.01)).unwrap();
        assert_eq!(a.loss, b.loss);
        assert_eq!(a.grads, b.grads);
    }

    #[test]
    fn distributional_constant_target() {
        let c = -2.5;
        let atoms: Vec<_> = (0..8).map(|_| AtomSet::new(2, 3, vec![c; 6]).unwrap()).collect();
        let states = Array2::zeros((8, 1));
        let mut net = constant_protester(1.0);
        let mut opt = Adam::new(1e-2);
        for _ in 0..3000 {
            let out = protester_loss_distributional(&net, states.view(), &atoms, lvl(0.01)).unwrap();
            opt.step(&mut net, &out.grads).unwrap();
        }
        assert!((net.layers()[0].bias[0] - c).abs() < 1e-3);
    }
}
