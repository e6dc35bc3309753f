//! Critic and actor losses with their parameter gradients.
//!
//! Every function takes network inputs as batches and returns the batch-mean
//! loss together with gradients for exactly one network. Regression targets
//! are plain numbers, so no gradient ever reaches a target network or the
//! protester from here.

use ndarray::{s, Array2, ArrayView2};

use super::policy::{squashed_sample, tanh_actions, tanh_backward};
use crate::error::{Error, Result};
use crate::nn::{concat_columns, Gradients, Mlp, Real};

/// Loss, gradients and the network's outputs on the batch.
#[derive(Clone, Debug)]
pub struct CriticLoss<T> {
    pub loss: T,
    pub grads: Gradients<T>,
    /// `(batch, outputs)` predictions before the step.
    pub predictions: Array2<T>,
}

#[derive(Clone, Debug)]
pub struct ActorLoss<T> {
    pub loss: T,
    pub grads: Gradients<T>,
    /// `log π(a|s)` of the reparameterized actions (stochastic actors only).
    pub log_prob: Vec<T>,
}

fn check_batch(rows: usize, targets: usize) -> Result<()> {
    if rows == 0 {
        return Err(Error::invalid("empty batch"));
    }
    if rows != targets {
        return Err(Error::DimensionMismatch {
            expected: rows,
            got: targets,
        });
    }
    Ok(())
}

/// `mean_i (y_i − Q(s_i, a_i))²` for a single-output critic fed `[s | a]`.
pub fn td_loss<T: Real>(critic: &Mlp<T>, inputs: ArrayView2<T>, targets: &[T]) -> Result<CriticLoss<T>> {
    check_batch(inputs.nrows(), targets.len())?;
    if critic.output_dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: critic.output_dim(),
        });
    }
    let trace = critic.trace(inputs)?;
    let n = T::lit(targets.len() as f64);
    let two = T::lit(2.0);
    let mut loss = T::zero();
    let mut upstream = Array2::zeros((targets.len(), 1));
    for (i, &y) in targets.iter().enumerate() {
        let d = trace.output()[[i, 0]] - y;
        loss += d * d;
        upstream[[i, 0]] = two * d / n;
    }
    let back = critic.backward(&trace, upstream.view())?;
    Ok(CriticLoss {
        loss: loss / n,
        grads: back.grads,
        predictions: trace.output().clone(),
    })
}

/// Quantile midpoints `τ̂_m = (2m − 1) / 2M`, `m = 1..M`.
pub fn quantile_midpoints<T: Real>(m: usize) -> Vec<T> {
    (1..=m).map(|i| T::lit((2 * i - 1) as f64 / (2 * m) as f64)).collect()
}

/// Huber function with threshold `κ` and its derivative.
pub fn huber<T: Real>(u: T, kappa: T) -> (T, T) {
    let half = T::lit(0.5);
    if u.abs() <= kappa {
        (half * u * u, u)
    } else {
        (kappa * (u.abs() - half * kappa), kappa * u.signum())
    }
}

/// Quantile Huber loss of one atom `θ` at midpoint `τ̂` against one target
/// `z`: `|τ̂ − 1{z − θ < 0}|·H_κ(z − θ)/κ`, with its derivative in `θ`.
pub fn quantile_huber<T: Real>(theta: T, z: T, tau_hat: T, kappa: T) -> (T, T) {
    let u = z - theta;
    let indicator = if u < T::zero() { T::one() } else { T::zero() };
    let w = (tau_hat - indicator).abs();
    let (h, dh) = huber(u, kappa);
    (w * h / kappa, -w * dh / kappa)
}

/// Quantile Huber loss of one `M`-atom critic against `K` equally weighted
/// target atoms per sample, averaged over atoms, targets and the batch, then
/// divided by `networks` so that summing over an ensemble gives the mean
/// over networks. Threshold `κ = 1`.
pub fn quantile_huber_loss<T: Real>(
    critic: &Mlp<T>,
    inputs: ArrayView2<T>,
    targets: ArrayView2<T>,
    networks: usize,
) -> Result<CriticLoss<T>> {
    check_batch(inputs.nrows(), targets.nrows())?;
    if targets.ncols() == 0 || networks == 0 {
        return Err(Error::invalid("quantile loss needs target atoms and a positive network count"));
    }
    let atoms = critic.output_dim();
    let tau_hat = quantile_midpoints::<T>(atoms);
    let kappa = T::one();
    let trace = critic.trace(inputs)?;
    let out = trace.output();
    let (batch, k) = targets.dim();
    let norm = T::lit((batch * atoms * k * networks) as f64);
    let mut loss = T::zero();
    let mut upstream = Array2::zeros((batch, atoms));
    for b in 0..batch {
        for m in 0..atoms {
            let theta = out[[b, m]];
            let mut g = T::zero();
            for j in 0..k {
                let (l, d) = quantile_huber(theta, targets[[b, j]], tau_hat[m], kappa);
                loss += l;
                g += d;
            }
            upstream[[b, m]] = g / norm;
        }
    }
    let back = critic.backward(&trace, upstream.view())?;
    Ok(CriticLoss {
        loss: loss / norm,
        grads: back.grads,
        predictions: out.clone(),
    })
}

/// `−mean_i Q(s_i, tanh(actor(s_i)))`, gradients for the actor only.
pub fn deterministic_actor_loss<T: Real>(actor: &Mlp<T>, critic: &Mlp<T>, states: ArrayView2<T>) -> Result<ActorLoss<T>> {
    let batch = states.nrows();
    check_batch(batch, batch)?;
    let state_dim = states.ncols();
    let actor_trace = actor.trace(states)?;
    let actions = tanh_actions(actor_trace.output().view());
    let inputs = concat_columns(states, actions.view());
    let critic_trace = critic.trace(inputs.view())?;
    let n = T::lit(batch as f64);
    let loss = -critic_trace.output().column(0).sum() / n;
    let upstream = Array2::from_elem((batch, 1), -T::one() / n);
    let d_inputs = critic.backward(&critic_trace, upstream.view())?.input_grad;
    let d_actions = d_inputs.slice(s![.., state_dim..]);
    let d_out = tanh_backward(actions.view(), d_actions);
    let grads = actor.backward(&actor_trace, d_out.view())?.grads;
    Ok(ActorLoss {
        loss,
        grads,
        log_prob: Vec::new(),
    })
}

/// How stochastic actor losses read a value off the critic ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CriticReduce {
    /// Per-sample minimum over single-output critics (one critic: itself).
    Min,
    /// Mean of all atoms of all critics.
    AtomMean,
}

/// `mean_i [α·log π(ã_i|s_i) − Q(s_i, ã_i)]` with `ã = f_φ(ε; s)`,
/// gradients for the actor only.
pub fn stochastic_actor_loss<T: Real>(
    actor: &Mlp<T>,
    critics: &[&Mlp<T>],
    reduce: CriticReduce,
    states: ArrayView2<T>,
    noise: ArrayView2<T>,
    alpha: T,
) -> Result<ActorLoss<T>> {
    let batch = states.nrows();
    check_batch(batch, noise.nrows())?;
    if critics.is_empty() {
        return Err(Error::invalid("actor loss needs at least one critic"));
    }
    let state_dim = states.ncols();
    let action_dim = noise.ncols();
    let actor_trace = actor.trace(states)?;
    let sample = squashed_sample(actor_trace.output().view(), noise)?;
    let inputs = concat_columns(states, sample.action.view());
    let traces = critics
        .iter()
        .map(|c| c.trace(inputs.view()))
        .collect::<Result<Vec<_>>>()?;
    let n = T::lit(batch as f64);
    let mut q = vec![T::zero(); batch];
    let mut upstreams: Vec<Array2<T>> = traces.iter().map(|t| Array2::zeros(t.output().dim())).collect();
    match reduce {
        CriticReduce::Min => {
            for b in 0..batch {
                let mut best = 0;
                for (c, t) in traces.iter().enumerate().skip(1) {
                    if t.output()[[b, 0]] < traces[best].output()[[b, 0]] {
                        best = c;
                    }
                }
                q[b] = traces[best].output()[[b, 0]];
                upstreams[best][[b, 0]] = -T::one() / n;
            }
        }
        CriticReduce::AtomMean => {
            let total: usize = traces.iter().map(|t| t.output().ncols()).sum();
            let per = T::lit(total as f64);
            for b in 0..batch {
                q[b] = traces.iter().map(|t| t.output().row(b).sum()).sum::<T>() / per;
            }
            for u in &mut upstreams {
                u.fill(-T::one() / (n * per));
            }
        }
    }
    let mut d_actions = Array2::zeros((batch, action_dim));
    for ((critic, trace), up) in critics.iter().zip(&traces).zip(&upstreams) {
        let d_in = critic.backward(trace, up.view())?.input_grad;
        d_actions += &d_in.slice(s![.., state_dim..]);
    }
    let loss = sample
        .log_prob
        .iter()
        .zip(&q)
        .map(|(&lp, &qv)| alpha * lp - qv)
        .sum::<T>()
        / n;
    let d_log_prob = vec![alpha / n; batch];
    let d_out = sample.backward(d_actions.view(), &d_log_prob)?;
    let grads = actor.backward(&actor_trace, d_out.view())?.grads;
    Ok(ActorLoss {
        loss,
        grads,
        log_prob: sample.log_prob,
    })
}

/// `∂/∂log α` of `mean_i[−α·(log π_i + H̄)]`: `−α·mean_i(log π_i + H̄)`.
pub fn temperature_grad<T: Real>(log_alpha: T, log_probs: &[T], target_entropy: T) -> T {
    if log_probs.is_empty() {
        return T::zero();
    }
    let n = T::lit(log_probs.len() as f64);
    let mean = log_probs.iter().map(|&lp| lp + target_entropy).sum::<T>() / n;
    -log_alpha.exp() * mean
}

/// The temperature objective `mean_i[−α·(log π_i + H̄)]` itself.
pub fn temperature_loss<T: Real>(log_alpha: T, log_probs: &[T], target_entropy: T) -> T {
    let n = T::lit(log_probs.len().max(1) as f64);
    -log_alpha.exp() * log_probs.iter().map(|&lp| lp + target_entropy).sum::<T>() / n
}
