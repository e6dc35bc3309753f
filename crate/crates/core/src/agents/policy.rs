//! Actor output heads.
//!
//! Actors emit raw network outputs; the heads here turn them into actions in
//! the normalized box `[-1, 1]^A` and push action gradients back.
//!
//! * Deterministic: `a = tanh(out)`.
//! * Squashed Gaussian: the actor emits `[μ | log σ]` (width `2A`),
//!   `log σ` is clamped to `[-20, 2]`, `u = μ + σ·ε` with `ε ~ N(0, I)` and
//!   `a = tanh(u)`. The log-density includes the change of variables:
//!
//! ```text
//! log π(a|s) = Σ_i [ −½ε_i² − log σ_i − ½ log 2π − log(1 − tanh²u_i) ]
//! log(1 − tanh²u) = 2·(log 2 − u − softplus(−2u))
//! ```

use ndarray::{s, Array2, ArrayView2, Zip};
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::nn::Real;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Numerically stable `log(1 − tanh²u)`.
pub fn log_one_minus_tanh_sq<T: Real>(u: T) -> T {
    T::lit(2.0) * (T::lit(std::f64::consts::LN_2) - u - softplus(T::lit(-2.0) * u))
}

pub fn tanh_actions<T: Real>(out: ArrayView2<T>) -> Array2<T> {
    out.mapv(Float::tanh)
}

/// `∂L/∂out` for `a = tanh(out)` given `∂L/∂a`.
pub fn tanh_backward<T: Real>(actions: ArrayView2<T>, d_actions: ArrayView2<T>) -> Array2<T> {
    let mut d = d_actions.to_owned();
    Zip::from(&mut d).and(actions).for_each(|g, &a| *g *= T::one() - a * a);
    d
}

/// Standard normal draws shaped `(rows, cols)`.
pub fn gaussian_noise<T: Real, R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Array2<T> {
    Array2::from_shape_simple_fn((rows, cols), || T::lit(rng.sample::<f64, _>(StandardNormal)))
}

/// A reparameterized squashed-Gaussian sample with what its backward pass needs.
#[derive(Clone, Debug)]
pub struct SquashedSample<T> {
    pub action: Array2<T>,
    pub log_prob: Vec<T>,
    pre_tanh: Array2<T>,
    std: Array2<T>,
    noise: Array2<T>,
    /// `false` where the raw log-std was clamped.
    log_std_free: Array2<bool>,
}

/// The deterministic action of a squashed-Gaussian head: `tanh(μ)`.
pub fn squashed_mean<T: Real>(out: ArrayView2<T>, action_dim: usize) -> Result<Array2<T>> {
    check_width(out, action_dim)?;
    Ok(out.slice(s![.., ..action_dim]).mapv(Float::tanh))
}

fn check_width<T>(out: ArrayView2<T>, action_dim: usize) -> Result<()> {
    if out.ncols() != 2 * action_dim {
        return Err(Error::DimensionMismatch {
            expected: 2 * action_dim,
            got: out.ncols(),
        });
    }
    Ok(())
}

pub fn squashed_sample<T: Real>(out: ArrayView2<T>, noise: ArrayView2<T>) -> Result<SquashedSample<T>> {
    let action_dim = noise.ncols();
    check_width(out, action_dim)?;
    if noise.nrows() != out.nrows() {
        return Err(Error::DimensionMismatch {
            expected: out.nrows(),
            got: noise.nrows(),
        });
    }
    let mean = out.slice(s![.., ..action_dim]);
    let raw = out.slice(s![.., action_dim..]);
    let (lo, hi) = (T::lit(LOG_STD_MIN), T::lit(LOG_STD_MAX));
    let log_std = raw.mapv(|v| v.max(lo).min(hi));
    let log_std_free = raw.mapv(|v| v > lo && v < hi);
    let std = log_std.mapv(Float::exp);
    let pre_tanh = &mean + &(&std * &noise);
    let action = pre_tanh.mapv(Float::tanh);
    let half_log_2pi = T::lit(0.5 * (2.0 * std::f64::consts::PI).ln());
    let half = T::lit(0.5);
    let log_prob = (0..out.nrows())
        .map(|b| {
            (0..action_dim)
                .map(|i| {
                    let e = noise[[b, i]];
                    -half * e * e - log_std[[b, i]] - half_log_2pi - log_one_minus_tanh_sq(pre_tanh[[b, i]])
                })
                .sum()
        })
        .collect();
    Ok(SquashedSample {
        action,
        log_prob,
        pre_tanh,
        std,
        noise: noise.to_owned(),
        log_std_free,
    })
}

impl<T: Real> SquashedSample<T> {
    pub fn pre_tanh(&self) -> &Array2<T> {
        &self.pre_tanh
    }

    /// `∂L/∂out` from `∂L/∂a` and `∂L/∂log π`, with the noise held fixed.
    pub fn backward(&self, d_action: ArrayView2<T>, d_log_prob: &[T]) -> Result<Array2<T>> {
        let (rows, action_dim) = self.action.dim();
        if d_action.dim() != (rows, action_dim) || d_log_prob.len() != rows {
            return Err(Error::ShapeMismatch("squashed-sample upstream gradient".into()));
        }
        let two = T::lit(2.0);
        let mut d_out = Array2::zeros((rows, 2 * action_dim));
        for b in 0..rows {
            let dlp = d_log_prob[b];
            for i in 0..action_dim {
                let a = self.action[[b, i]];
                let du = d_action[[b, i]] * (T::one() - a * a) + dlp * two * self.pre_tanh[[b, i]].tanh();
                d_out[[b, i]] = du;
                if self.log_std_free[[b, i]] {
                    d_out[[b, action_dim + i]] = du * self.std[[b, i]] * self.noise[[b, i]] - dlp;
                }
            }
        }
        Ok(d_out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::stream_rng;
    use ndarray::array;

    #[test]
    fn stable_log_jacobian_matches_direct_form() {
        for u in [-3.0f64, -0.5, 0.0, 0.7, 2.5] {
            let direct = (1.0 - u.tanh().powi(2)).ln();
            assert!((log_one_minus_tanh_sq(u) - direct).abs() < 1e-12);
        }
        assert!(log_one_minus_tanh_sq(40.0f64).is_finite());
        assert!(log_one_minus_tanh_sq(-40.0f64).is_finite());
    }

    #[test]
    fn zero_mean_unit_std_zero_noise_density() {
        let out = array![[0.0f64, 0.0]];
        let s = squashed_sample(out.view(), array![[0.0]].view()).unwrap();
        assert_eq!(s.action[[0, 0]], 0.0);
        assert!((s.log_prob[0] + 0.918_938_533_204_672_7).abs() < 1e-12);
    }

    #[test]
    fn log_std_is_clamped() {
        let out = array![[0.0f64, 50.0], [0.0, -50.0]];
        let s = squashed_sample(out.view(), array![[1.0], [1.0]].view()).unwrap();
        assert!((s.std[[0, 0]] - 2f64.exp()).abs() < 1e-12);
        assert!((s.std[[1, 0]] - (-20f64).exp()).abs() < 1e-20);
        let d = s.backward(array![[1.0], [1.0]].view(), &[1.0, 1.0]).unwrap();
        assert_eq!(d[[0, 1]], 0.0);
        assert_eq!(d[[1, 1]], 0.0);
    }

    #[test]
    fn actions_stay_in_bounds() {
        let mut rng = stream_rng(0, 0, 0);
        let out: Array2<f64> = gaussian_noise::<f64, _>(&mut rng, 1000, 4) * 10.0;
        let noise = gaussian_noise(&mut rng, 1000, 2);
        let s = squashed_sample(out.view(), noise.view()).unwrap();
        assert!(s.action.iter().all(|a| (-1.0..=1.0).contains(a)));
        assert!(s.log_prob.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = stream_rng(1, 0, 0);
        let out: Array2<f64> = gaussian_noise(&mut rng, 3, 4);
        let noise: Array2<f64> = gaussian_noise(&mut rng, 3, 2);
        let c: Array2<f64> = gaussian_noise(&mut rng, 3, 2);
        let objective = |o: &Array2<f64>| {
            let s = squashed_sample(o.view(), noise.view()).unwrap();
            (&s.action * &c).sum() + 0.3 * s.log_prob.iter().sum::<f64>()
        };
        let s = squashed_sample(out.view(), noise.view()).unwrap();
        let g = s.backward(c.view(), &[0.3; 3]).unwrap();
        let h = 1e-6;
        for idx in [(0, 0), (1, 3), (2, 1), (2, 2)] {
            let mut p = out.clone();
            p[idx] += h;
            let mut m = out.clone();
            m[idx] -= h;
            let fd = (objective(&p) - objective(&m)) / (2.0 * h);
            assert!((fd - g[idx]).abs() < 1e-7, "{idx:?}: {fd} vs {}", g[idx]);
        }
    }

    #[test]
    fn tanh_head_gradient() {
        let out = array![[0.3f64, -1.2]];
        let a = tanh_actions(out.view());
        let d = tanh_backward(a.view(), array![[1.0, 2.0]].view());
        assert!((d[[0, 0]] - (1.0 - 0.3f64.tanh().powi(2))).abs() < 1e-15);
        assert!((d[[0, 1]] - 2.0 * (1.0 - 1.2f64.tanh().powi(2))).abs() < 1e-15);
    }
}
