//! Off-policy actor-critic agents.
//!
//! One [`Agent`] type covers all nine algorithms. Behaviour switches on
//! [`Algorithm::family`]:
//!
//! * Deterministic (DDPG, DDPG(min-Q), MPG, TD3, MPG-SD): per update the
//!   counter `u` advances, the critics and the protester step from the same
//!   pre-step critic outputs, and every `d`-th update the actor steps against
//!   the freshly updated first critic before the target actor and target
//!   critics are soft-updated.
//! * Stochastic (SAC(min-Q), MAC) and distributional (TQC, MQC): every loss
//!   is computed from pre-step parameters with a single temperature value,
//!   then all optimizer steps are applied and the target critics are
//!   soft-updated. `a'` is sampled from the current actor.
//!
//! All actions are in the normalized box `[-1, 1]^A`; the replay buffer
//! stores normalized actions. Each source of randomness draws from its own
//! stream derived from the agent seed, so changing one component never
//! shifts another's random numbers.

pub mod checkpoint;
pub mod config;
pub mod losses;
pub mod policy;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub use config::{AgentConfig, Algorithm, Family};
use losses::{
    deterministic_actor_loss, quantile_huber_loss, stochastic_actor_loss, td_loss, temperature_grad, CriticLoss,
    CriticReduce,
};
use policy::{gaussian_noise, squashed_mean, squashed_sample, tanh_actions};

use crate::error::{Error, Result};
use crate::expectile::{protester_loss, ExpectileLevel};
use crate::mdp::{ActionVec, EnvSpec, Policy, StateVec, Transition};
use crate::nn::{concat_columns, soft_update, Adam, Gradients, Mlp, Real};
use crate::replay::ReplayBuffer;
use crate::seeding::{derive_seed, stream_rng};
use crate::targets::{
    mac_target, moderate_target, mqc_target_atoms, sac_min_q_target, smoothed_action, smoothing_noise,
    standard_target, tqc_target_atoms, AtomSet, CautiousWeight,
};

const STREAM_ACTOR: u64 = 1;
const STREAM_CRITIC: u64 = 10;
const STREAM_PROTESTER: u64 = 20;
const STREAM_REPLAY: u64 = 30;
const STREAM_EXPLORE: u64 = 31;
const STREAM_TARGET_NOISE: u64 = 32;
const STREAM_POLICY: u64 = 33;

/// A minibatch converted to the agent's float type.
#[derive(Clone, Debug)]
pub struct Batch<T> {
    pub states: Array2<T>,
    pub actions: Array2<T>,
    pub rewards: Vec<T>,
    pub next_states: Array2<T>,
    pub dones: Vec<bool>,
}

impl<T: Real> Batch<T> {
    pub fn from_transitions(items: &[&Transition]) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::invalid("empty batch"))?;
        let (sd, ad) = (first.s.0.len(), first.a.0.len());
        let n = items.len();
        let mut states = Array2::zeros((n, sd));
        let mut next_states = Array2::zeros((n, sd));
        let mut actions = Array2::zeros((n, ad));
        for (i, t) in items.iter().enumerate() {
            if t.s.0.len() != sd || t.s_next.0.len() != sd || t.a.0.len() != ad {
                return Err(Error::ShapeMismatch(format!("transition {i} has inconsistent dimensions")));
            }
            for j in 0..sd {
                states[[i, j]] = T::lit(t.s.0[j]);
                next_states[[i, j]] = T::lit(t.s_next.0[j]);
            }
            for j in 0..ad {
                actions[[i, j]] = T::lit(t.a.0[j]);
            }
        }
        Ok(Self {
            states,
            actions,
            rewards: items.iter().map(|t| T::lit(t.r)).collect(),
            next_states,
            dones: items.iter().map(|t| t.done).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    fn inputs(&self) -> Array2<T> {
        concat_columns(self.states.view(), self.actions.view())
    }

    fn reward_mean(&self) -> f64 {
        self.rewards.iter().map(|r| r.as_f64()).sum::<f64>() / self.len().max(1) as f64
    }
}

/// Regression targets for the critics.
#[derive(Clone, Debug, PartialEq)]
pub enum Targets<T> {
    Scalar(Vec<T>),
    /// `(batch, k·N)` target atoms.
    Atoms(Array2<T>),
}

impl<T: Real> Targets<T> {
    pub fn mean(&self) -> f64 {
        let (sum, n) = match self {
            Self::Scalar(v) => (v.iter().map(|x| x.as_f64()).sum::<f64>(), v.len()),
            Self::Atoms(a) => (a.iter().map(|x| x.as_f64()).sum::<f64>(), a.len()),
        };
        sum / n.max(1) as f64
    }
}

/// Losses and temperature from one update.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: Option<f64>,
    pub protester_loss: Option<f64>,
    pub alpha: Option<f64>,
}

struct CriticStep<T> {
    losses: Vec<CriticLoss<T>>,
    protester: Option<(T, Gradients<T>)>,
}

#[derive(Clone, Debug)]
pub struct Agent<T: Real> {
    cfg: AgentConfig,
    spec: EnvSpec,
    omega: CautiousWeight,
    tau: ExpectileLevel,
    actor: Mlp<T>,
    actor_target: Option<Mlp<T>>,
    critics: Vec<Mlp<T>>,
    critic_targets: Vec<Mlp<T>>,
    protester: Option<Mlp<T>>,
    actor_opt: Adam<T>,
    critic_opts: Vec<Adam<T>>,
    protester_opt: Adam<T>,
    log_alpha: T,
    alpha_opt: Adam<T>,
    buffer: ReplayBuffer,
    updates: u64,
    explore_rng: ChaCha8Rng,
    target_noise_rng: ChaCha8Rng,
    policy_rng: ChaCha8Rng,
}

impl<T: Real> Agent<T> {
    pub fn new(cfg: AgentConfig, spec: &EnvSpec, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let (sd, ad) = (spec.state_dim, spec.action_dim);
        let family = cfg.algorithm.family();
        let dims = |input: usize, output: usize| {
            let mut d = vec![input];
            d.extend(&cfg.hidden);
            d.push(output);
            d
        };
        let actor_out = if family == Family::Deterministic { ad } else { 2 * ad };
        let actor = Mlp::new(&dims(sd, actor_out), &mut stream_rng(seed, STREAM_ACTOR, 0))?;
        let critic_out = if family == Family::Distributional { cfg.atoms } else { 1 };
        let critics = (0..cfg.n_critics)
            .map(|i| Mlp::new(&dims(sd + ad, critic_out), &mut stream_rng(seed, STREAM_CRITIC + i as u64, 0)))
            .collect::<Result<Vec<_>>>()?;
        let protester = if cfg.algorithm.is_moderate() {
            Some(Mlp::new(&dims(sd, 1), &mut stream_rng(seed, STREAM_PROTESTER, 0))?)
        } else {
            None
        };
        Ok(Self {
            omega: cfg.cautious_weight()?,
            tau: cfg.expectile_level()?,
            actor_target: (family == Family::Deterministic).then(|| actor.clone()),
            critic_targets: critics.clone(),
            actor_opt: Adam::new(cfg.lr_actor),
            critic_opts: (0..cfg.n_critics).map(|_| Adam::new(cfg.lr_critic)).collect(),
            protester_opt: Adam::new(cfg.lr_protester),
            log_alpha: T::lit(cfg.alpha_init.ln()),
            alpha_opt: Adam::new(cfg.lr_alpha),
            buffer: ReplayBuffer::new(cfg.buffer_size, derive_seed(seed, STREAM_REPLAY, 0))?,
            updates: 0,
            explore_rng: stream_rng(seed, STREAM_EXPLORE, 0),
            target_noise_rng: stream_rng(seed, STREAM_TARGET_NOISE, 0),
            policy_rng: stream_rng(seed, STREAM_POLICY, 0),
            spec: spec.clone(),
            actor,
            critics,
            protester,
            cfg,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn algorithm(&self) -> Algorithm {
        self.cfg.algorithm
    }

    pub fn env_spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// Update counter `u`.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn actor(&self) -> &Mlp<T> {
        &self.actor
    }

    pub fn actor_target(&self) -> Option<&Mlp<T>> {
        self.actor_target.as_ref()
    }

    pub fn critics(&self) -> &[Mlp<T>] {
        &self.critics
    }

    pub fn critic_targets(&self) -> &[Mlp<T>] {
        &self.critic_targets
    }

    pub fn protester(&self) -> Option<&Mlp<T>> {
        self.protester.as_ref()
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp().as_f64()
    }

    pub fn log_alpha(&self) -> T {
        self.log_alpha
    }

    pub(crate) fn nets_mut(&mut self) -> NetsMut<'_, T> {
        NetsMut {
            actor: &mut self.actor,
            actor_target: self.actor_target.as_mut(),
            critics: &mut self.critics,
            critic_targets: &mut self.critic_targets,
            protester: self.protester.as_mut(),
            log_alpha: &mut self.log_alpha,
        }
    }

    fn is_deterministic(&self) -> bool {
        self.cfg.algorithm.family() == Family::Deterministic
    }

    fn to_row(&self, s: &[f64]) -> Result<Array2<T>> {
        if s.len() != self.spec.state_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.state_dim,
                got: s.len(),
            });
        }
        Ok(Array2::from_shape_fn((1, s.len()), |(_, j)| T::lit(s[j])))
    }

    /// Greedy normalized actions for a batch of states: `tanh(actor(s))` or
    /// the squashed mean.
    pub fn greedy_actions(&self, states: ArrayView2<T>) -> Result<Array2<T>> {
        let out = self.actor.forward_batch(states)?;
        if self.is_deterministic() {
            Ok(tanh_actions(out.view()))
        } else {
            squashed_mean(out.view(), self.spec.action_dim)
        }
    }

    /// Greedy normalized action.
    pub fn act(&self, s: &[f64]) -> Result<Vec<f64>> {
        let a = self.greedy_actions(self.to_row(s)?.view())?;
        Ok(a.iter().map(|v| v.as_f64()).collect())
    }

    /// Behaviour action in normalized units: `clip(π(s) + N(0, σ²))` for the
    /// deterministic family, a reparameterized sample otherwise.
    pub fn act_explore(&mut self, s: &[f64]) -> Result<Vec<f64>> {
        let row = self.to_row(s)?;
        if self.is_deterministic() {
            let base = self.act(s)?;
            let std = self.cfg.exploration_std;
            if std == 0.0 {
                return Ok(base);
            }
            Ok(base
                .into_iter()
                .map(|a| (a + std * self.explore_rng.sample::<f64, _>(StandardNormal)).clamp(-1.0, 1.0))
                .collect())
        } else {
            let out = self.actor.forward_batch(row.view())?;
            let noise = gaussian_noise(&mut self.explore_rng, 1, self.spec.action_dim);
            let sample = squashed_sample(out.view(), noise.view())?;
            Ok(sample.action.iter().map(|v| v.as_f64()).collect())
        }
    }

    /// Stores a transition without training.
    pub fn observe(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    /// Stores a transition and, once the buffer holds a full batch, runs one
    /// update.
    pub fn train_step(&mut self, t: Transition) -> Result<Option<UpdateStats>> {
        self.buffer.push(t);
        if self.buffer.len() < self.cfg.batch_size {
            return Ok(None);
        }
        self.update().map(Some)
    }

    pub fn sample_batch(&mut self) -> Result<Batch<T>> {
        let n = self.cfg.batch_size;
        let sampled = self.buffer.sample(n)?;
        Batch::from_transitions(&sampled)
    }

    /// One full update on a fresh minibatch.
    pub fn update(&mut self) -> Result<UpdateStats> {
        let batch = self.sample_batch()?;
        self.update_on(&batch)
    }

    /// One full update on the given minibatch.
    pub fn update_on(&mut self, batch: &Batch<T>) -> Result<UpdateStats> {
        if self.is_deterministic() {
            self.update_deterministic(batch)
        } else {
            self.update_entropic(batch)
        }
    }

    fn update_deterministic(&mut self, batch: &Batch<T>) -> Result<UpdateStats> {
        self.updates += 1;
        let targets = self.compute_targets(batch)?;
        let step = self.critic_losses(batch, &targets)?;
        let mut stats = UpdateStats {
            critic_loss: mean_loss(&step.losses),
            protester_loss: step.protester.as_ref().map(|p| p.0.as_f64()),
            ..UpdateStats::default()
        };
        self.apply_critic_step(step)?;
        if self.updates % self.cfg.delay as u64 == 0 {
            let loss = deterministic_actor_loss(&self.actor, &self.critics[0], batch.states.view())?;
            self.actor_opt.step(&mut self.actor, &loss.grads)?;
            stats.actor_loss = Some(loss.loss.as_f64());
            self.soft_update_targets()?;
        }
        Ok(stats)
    }

    fn update_entropic(&mut self, batch: &Batch<T>) -> Result<UpdateStats> {
        let alpha = self.log_alpha.exp();
        let targets = self.compute_targets(batch)?;
        let step = self.critic_losses(batch, &targets)?;
        let actor = self.actor_loss_entropic(batch, alpha)?;
        let alpha_grad = self
            .cfg
            .auto_alpha
            .then(|| temperature_grad(self.log_alpha, &actor.log_prob, self.target_entropy()));
        let stats = UpdateStats {
            critic_loss: mean_loss(&step.losses),
            protester_loss: step.protester.as_ref().map(|p| p.0.as_f64()),
            actor_loss: Some(actor.loss.as_f64()),
            alpha: Some(alpha.as_f64()),
        };
        self.apply_critic_step(step)?;
        self.actor_opt.step(&mut self.actor, &actor.grads)?;
        if let Some(g) = alpha_grad {
            self.alpha_opt.step_scalar(&mut self.log_alpha, g)?;
        }
        let eta = T::lit(self.cfg.eta);
        for (t, c) in self.critic_targets.iter_mut().zip(&self.critics) {
            soft_update(t, c, eta)?;
        }
        self.updates += 1;
        Ok(stats)
    }

    fn target_entropy(&self) -> T {
        -T::lit(self.spec.action_dim as f64)
    }

    fn soft_update_targets(&mut self) -> Result<()> {
        let eta = T::lit(self.cfg.eta);
        if let Some(t) = self.actor_target.as_mut() {
            soft_update(t, &self.actor, eta)?;
        }
        for (t, c) in self.critic_targets.iter_mut().zip(&self.critics) {
            soft_update(t, c, eta)?;
        }
        Ok(())
    }

    /// Critic regression targets for `batch`. Consumes target-smoothing
    /// noise (deterministic family) or policy noise (otherwise).
    pub fn compute_targets(&mut self, batch: &Batch<T>) -> Result<Targets<T>> {
        let gamma = T::lit(self.cfg.gamma);
        let n = batch.len();
        let s2 = batch.next_states.view();
        let v_next = match &self.protester {
            Some(p) => Some(p.forward_batch(s2)?.column(0).to_vec()),
            None => None,
        };
        let family = self.cfg.algorithm.family();
        let (next_actions, log_prob) = if family == Family::Deterministic {
            let target_actor = self.actor_target.as_ref().expect("deterministic agents keep a target actor");
            let mut a = tanh_actions(target_actor.forward_batch(s2)?.view());
            let (sigma, clip) = (self.cfg.target_noise_std, self.cfg.target_noise_clip);
            if sigma > 0.0 {
                a.mapv_inplace(|v| {
                    let noise = T::lit(smoothing_noise(&mut self.target_noise_rng, sigma, clip));
                    smoothed_action(v, noise)
                });
            }
            (a, None)
        } else {
            let out = self.actor.forward_batch(s2)?;
            let noise = gaussian_noise(&mut self.policy_rng, n, self.spec.action_dim);
            let sample = squashed_sample(out.view(), noise.view())?;
            (sample.action, Some(sample.log_prob))
        };
        let inputs = concat_columns(s2, next_actions.view());
        let outs = self
            .critic_targets
            .iter()
            .map(|c| c.forward_batch(inputs.view()))
            .collect::<Result<Vec<_>>>()?;
        let alpha = self.log_alpha.exp();
        let omega = self.omega;
        let lp = |i: usize| log_prob.as_ref().map_or(T::zero(), |l| l[i]);
        let v = |i: usize| v_next.as_ref().map_or(T::zero(), |v| v[i]);
        let q_min = |i: usize| outs.iter().map(|o| o[[i, 0]]).fold(T::infinity(), T::min);
        let scalar = |f: &dyn Fn(usize) -> T| Targets::Scalar((0..n).map(f).collect());
        let (r, d) = (&batch.rewards, &batch.dones);
        let targets = match self.cfg.algorithm {
            Algorithm::Ddpg => scalar(&|i| standard_target(r[i], gamma, outs[0][[i, 0]], d[i])),
            Algorithm::DdpgMinQ | Algorithm::Td3 => scalar(&|i| standard_target(r[i], gamma, q_min(i), d[i])),
            Algorithm::Mpg | Algorithm::MpgSd => {
                scalar(&|i| moderate_target(r[i], gamma, omega, outs[0][[i, 0]], v(i), d[i]))
            }
            Algorithm::SacMinQ => scalar(&|i| sac_min_q_target(r[i], gamma, alpha, q_min(i), q_min(i), lp(i), d[i])),
            Algorithm::Mac => scalar(&|i| mac_target(r[i], gamma, omega, alpha, outs[0][[i, 0]], v(i), lp(i), d[i])),
            Algorithm::Tqc | Algorithm::Mqc => {
                let (nc, m, k) = (outs.len(), self.cfg.atoms, self.cfg.keep_atoms);
                let mut atoms = Array2::zeros((n, k * nc));
                for i in 0..n {
                    let pooled: Vec<T> = outs.iter().flat_map(|o| o.row(i).to_vec()).collect();
                    let set = AtomSet::new(nc, m, pooled)?;
                    let dist = if self.cfg.algorithm == Algorithm::Mqc {
                        mqc_target_atoms(r[i], gamma, omega, alpha, &set, v(i), k, lp(i), d[i])?
                    } else {
                        tqc_target_atoms(r[i], gamma, alpha, &set, k, lp(i), d[i])?
                    };
                    for (j, y) in dist.0.into_iter().enumerate() {
                        atoms[[i, j]] = y;
                    }
                }
                Targets::Atoms(atoms)
            }
        };
        let mean = targets.mean();
        if !mean.is_finite() {
            return Err(Error::NonFiniteLoss {
                what: "target",
                reward_mean: batch.reward_mean(),
                target_mean: mean,
            });
        }
        Ok(targets)
    }

    /// Critic losses and, for moderate agents, the protester loss, all from
    /// the current parameters. Nothing is stepped.
    fn critic_losses(&self, batch: &Batch<T>, targets: &Targets<T>) -> Result<CriticStep<T>> {
        let inputs = batch.inputs();
        let losses = match targets {
            Targets::Scalar(y) => self
                .critics
                .iter()
                .map(|c| td_loss(c, inputs.view(), y))
                .collect::<Result<Vec<_>>>()?,
            Targets::Atoms(y) => self
                .critics
                .iter()
                .map(|c| quantile_huber_loss(c, inputs.view(), y.view(), self.critics.len()))
                .collect::<Result<Vec<_>>>()?,
        };
        for l in &losses {
            if !l.loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    what: "critic",
                    reward_mean: batch.reward_mean(),
                    target_mean: targets.mean(),
                });
            }
        }
        let predictions: Vec<&Array2<T>> = losses.iter().map(|l| &l.predictions).collect();
        let protester = self.protester_loss_on(batch, &predictions, targets.mean())?;
        Ok(CriticStep { losses, protester })
    }

    /// Protester loss against the given critic outputs at the buffered
    /// actions: the single critic's value, or the minimum atom over all
    /// critics for distributional agents.
    fn protester_loss_on(
        &self,
        batch: &Batch<T>,
        predictions: &[&Array2<T>],
        target_mean: f64,
    ) -> Result<Option<(T, Gradients<T>)>> {
        let Some(p) = &self.protester else {
            return Ok(None);
        };
        let values: Vec<T> = if self.cfg.algorithm.family() == Family::Distributional {
            (0..batch.len())
                .map(|i| {
                    predictions
                        .iter()
                        .flat_map(|o| o.row(i).to_vec())
                        .fold(T::infinity(), T::min)
                })
                .collect()
        } else {
            predictions[0].column(0).to_vec()
        };
        let pl = protester_loss(p, batch.states.view(), &values, self.tau)?;
        if !pl.loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                what: "protester",
                reward_mean: batch.reward_mean(),
                target_mean,
            });
        }
        Ok(Some((pl.loss, pl.grads)))
    }

    fn apply_critic_step(&mut self, step: CriticStep<T>) -> Result<()> {
        for ((critic, opt), loss) in self.critics.iter_mut().zip(&mut self.critic_opts).zip(&step.losses) {
            opt.step(critic, &loss.grads)?;
        }
        if let (Some(p), Some((_, grads))) = (self.protester.as_mut(), step.protester.as_ref()) {
            self.protester_opt.step(p, grads)?;
        }
        Ok(())
    }

    fn actor_loss_entropic(&mut self, batch: &Batch<T>, alpha: T) -> Result<losses::ActorLoss<T>> {
        let noise = gaussian_noise(&mut self.policy_rng, batch.len(), self.spec.action_dim);
        let refs: Vec<&Mlp<T>> = self.critics.iter().collect();
        let reduce = if self.cfg.algorithm.family() == Family::Distributional {
            CriticReduce::AtomMean
        } else {
            CriticReduce::Min
        };
        stochastic_actor_loss(&self.actor, &refs, reduce, batch.states.view(), noise.view(), alpha)
    }

    /// Steps the critics once on `batch` and returns the pre-step mean loss.
    pub fn critic_update(&mut self, batch: &Batch<T>) -> Result<f64> {
        let targets = self.compute_targets(batch)?;
        self.critic_update_towards(batch, &targets)
    }

    /// Steps the critics once towards fixed targets.
    pub fn critic_update_towards(&mut self, batch: &Batch<T>, targets: &Targets<T>) -> Result<f64> {
        let mut step = self.critic_losses(batch, targets)?;
        step.protester = None;
        let loss = mean_loss(&step.losses);
        self.apply_critic_step(step)?;
        Ok(loss)
    }

    /// Steps the protester once against the current critic on `batch`.
    pub fn protester_update(&mut self, batch: &Batch<T>) -> Result<f64> {
        if self.protester.is_none() {
            return Err(Error::invalid(format!("{} has no protester", self.cfg.algorithm)));
        }
        let inputs = batch.inputs();
        let outs = self
            .critics
            .iter()
            .map(|c| c.forward_batch(inputs.view()))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Array2<T>> = outs.iter().collect();
        let (loss, grads) = self
            .protester_loss_on(batch, &refs, f64::NAN)?
            .expect("moderate agents have a protester");
        let p = self.protester.as_mut().expect("checked above");
        self.protester_opt.step(p, &grads)?;
        Ok(loss.as_f64())
    }

    /// Steps the actor once on `batch` and returns the pre-step loss.
    pub fn actor_update(&mut self, batch: &Batch<T>) -> Result<f64> {
        let loss = if self.is_deterministic() {
            deterministic_actor_loss(&self.actor, &self.critics[0], batch.states.view())?
        } else {
            let alpha = self.log_alpha.exp();
            self.actor_loss_entropic(batch, alpha)?
        };
        self.actor_opt.step(&mut self.actor, &loss.grads)?;
        Ok(loss.loss.as_f64())
    }

    /// One gradient step on `log α` and the new `α`. A no-op for agents
    /// without a temperature or with auto-tuning disabled.
    pub fn temperature_update(&mut self, batch: &Batch<T>) -> Result<f64> {
        if self.is_deterministic() || !self.cfg.auto_alpha {
            return Ok(self.alpha());
        }
        let out = self.actor.forward_batch(batch.states.view())?;
        let noise = gaussian_noise(&mut self.policy_rng, batch.len(), self.spec.action_dim);
        let sample = squashed_sample(out.view(), noise.view())?;
        let g = temperature_grad(self.log_alpha, &sample.log_prob, self.target_entropy());
        self.alpha_opt.step_scalar(&mut self.log_alpha, g)?;
        Ok(self.alpha())
    }

    /// Mean target-critic value at `(s, π(s))` over the probe states, with
    /// the greedy action of the online actor. Two-critic agents take the
    /// minimum, distributional agents the mean of all atoms.
    pub fn measure_target_q(&self, probes: &[StateVec]) -> Result<f64> {
        if probes.is_empty() {
            return Err(Error::invalid("no probe states"));
        }
        let sd = self.spec.state_dim;
        let mut states = Array2::zeros((probes.len(), sd));
        for (i, p) in probes.iter().enumerate() {
            if p.0.len() != sd {
                return Err(Error::DimensionMismatch {
                    expected: sd,
                    got: p.0.len(),
                });
            }
            for j in 0..sd {
                states[[i, j]] = T::lit(p.0[j]);
            }
        }
        let actions = self.greedy_actions(states.view())?;
        let inputs = concat_columns(states.view(), actions.view());
        let outs = self
            .critic_targets
            .iter()
            .map(|c| c.forward_batch(inputs.view()))
            .collect::<Result<Vec<_>>>()?;
        let n = probes.len();
        let total: f64 = if self.cfg.algorithm.family() == Family::Distributional {
            let per = (outs.len() * outs[0].ncols()) as f64;
            (0..n)
                .map(|i| outs.iter().map(|o| o.row(i).iter().map(|v| v.as_f64()).sum::<f64>()).sum::<f64>() / per)
                .sum()
        } else {
            (0..n)
                .map(|i| outs.iter().map(|o| o[[i, 0]].as_f64()).fold(f64::INFINITY, f64::min))
                .sum()
        };
        Ok(total / n as f64)
    }
}

pub(crate) struct NetsMut<'a, T> {
    pub actor: &'a mut Mlp<T>,
    pub actor_target: Option<&'a mut Mlp<T>>,
    pub critics: &'a mut Vec<Mlp<T>>,
    pub critic_targets: &'a mut Vec<Mlp<T>>,
    pub protester: Option<&'a mut Mlp<T>>,
    pub log_alpha: &'a mut T,
}

fn mean_loss<T: Real>(losses: &[CriticLoss<T>]) -> f64 {
    losses.iter().map(|l| l.loss.as_f64()).sum::<f64>() / losses.len().max(1) as f64
}

/// Evaluation view of an agent: greedy actions in environment units.
impl<T: Real> Policy for Agent<T> {
    fn act(&self, state: &StateVec) -> ActionVec {
        let unit = Agent::act(self, &state.0).expect("state matches the environment the agent was built for");
        self.spec.denormalize(&unit)
    }
}

#[cfg(test)]
mod tests;
