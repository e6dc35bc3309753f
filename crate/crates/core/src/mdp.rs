//! Environments and the evaluation protocol.
//!
//! Three small continuous-control tasks stand in for a physics simulator:
//!
//! * `pendulum`: torque-limited swing-up, state `(cos θ, sin θ, θ̇)`.
//! * `pointmass`: a 2-D point mass pushed toward the origin.
//! * `noisybandit-K`: one state, rewards `N(0, 1)` whatever the action, so the
//!   true action value is zero everywhere. The action interval is split into
//!   `K` equal arms (all with mean zero); any learned value above zero is
//!   overestimation.
//!
//! Episodes end either by a true terminal condition (`terminated`, the TD
//! bootstrap is masked) or by the step limit (`truncated`, bootstrapping
//! continues). None of the three tasks terminates; only the step limit ends
//! an episode.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seeding::{derive_seed, stream_rng};

#[derive(Clone, Debug, PartialEq)]
pub struct StateVec(pub Vec<f64>);

#[derive(Clone, Debug, PartialEq)]
pub struct ActionVec(pub Vec<f64>);

/// One replay entry. `done` marks a true terminal step only; time-limit
/// truncation leaves it `false` so the target keeps bootstrapping.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub s: StateVec,
    pub a: ActionVec,
    pub r: f64,
    pub s_next: StateVec,
    pub done: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub state_low: Vec<f64>,
    pub state_high: Vec<f64>,
    pub max_episode_steps: usize,
}

impl EnvSpec {
    pub fn clip_action(&self, a: &ActionVec) -> (ActionVec, bool) {
        let mut clipped = false;
        let values = a
            .0
            .iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(&v, (&lo, &hi))| {
                let c = v.clamp(lo, hi);
                clipped |= c != v;
                c
            })
            .collect();
        (ActionVec(values), clipped)
    }

    /// Maps an action in `[-1, 1]^d` onto the declared bounds.
    pub fn denormalize(&self, unit: &[f64]) -> ActionVec {
        ActionVec(
            unit.iter()
                .zip(self.action_low.iter().zip(&self.action_high))
                .map(|(&u, (&lo, &hi))| lo + (u + 1.0) * 0.5 * (hi - lo))
                .collect(),
        )
    }

    /// Inverse of [`EnvSpec::denormalize`].
    pub fn normalize(&self, a: &ActionVec) -> Vec<f64> {
        a.0.iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(&v, (&lo, &hi))| 2.0 * (v - lo) / (hi - lo) - 1.0)
            .collect()
    }

    pub fn contains_state(&self, s: &StateVec) -> bool {
        s.0.len() == self.state_dim
            && s.0
                .iter()
                .zip(self.state_low.iter().zip(&self.state_high))
                .all(|(&v, (&lo, &hi))| v.is_finite() && v >= lo && v <= hi)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub state: StateVec,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    /// The submitted action was outside the bounds and got clipped.
    pub clipped: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

pub trait Environment: Send {
    fn id(&self) -> String;
    fn spec(&self) -> &EnvSpec;
    /// Reseeds the environment and draws an initial state.
    fn reset(&mut self, seed: u64) -> StateVec;
    /// Advances one step; out-of-bounds actions are clipped.
    fn step(&mut self, action: &ActionVec) -> StepResult;
}

/// Builds an environment from its string id.
pub fn make_env(id: &str) -> Result<Box<dyn Environment>> {
    match id {
        "pendulum" => Ok(Box::new(Pendulum::new())),
        "pointmass" => Ok(Box::new(PointMass::new())),
        other => match other.strip_prefix("noisybandit-").map(str::parse::<usize>) {
            Some(Ok(k)) if k >= 1 => Ok(Box::new(NoisyBandit::new(k))),
            _ => Err(Error::UnknownEnvironment(id.to_string())),
        },
    }
}

fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

/// Torque-limited pendulum swing-up (θ = 0 is upright).
#[derive(Clone, Debug)]
pub struct Pendulum {
    spec: EnvSpec,
    theta: f64,
    theta_dot: f64,
    steps: usize,
    rng: ChaCha8Rng,
}

impl Pendulum {
    pub const MAX_SPEED: f64 = 8.0;
    pub const MAX_TORQUE: f64 = 2.0;
    pub const DT: f64 = 0.05;
    pub const GRAVITY: f64 = 10.0;
    pub const MASS: f64 = 1.0;
    pub const LENGTH: f64 = 1.0;

    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                state_dim: 3,
                action_dim: 1,
                action_low: vec![-Self::MAX_TORQUE],
                action_high: vec![Self::MAX_TORQUE],
                state_low: vec![-1.0, -1.0, -Self::MAX_SPEED],
                state_high: vec![1.0, 1.0, Self::MAX_SPEED],
                max_episode_steps: 200,
            },
            theta: 0.0,
            theta_dot: 0.0,
            steps: 0,
            rng: stream_rng(0, 0, 0),
        }
    }

    /// Puts the pendulum in an explicit configuration.
    pub fn set_state(&mut self, theta: f64, theta_dot: f64) -> StateVec {
        self.theta = theta;
        self.theta_dot = theta_dot;
        self.steps = 0;
        self.observe()
    }

    pub fn angle(&self) -> (f64, f64) {
        (self.theta, self.theta_dot)
    }

    fn observe(&self) -> StateVec {
        StateVec(vec![self.theta.cos(), self.theta.sin(), self.theta_dot])
    }

    /// Per-step cost `θ̃² + 0.1·θ̇² + 0.001·u²` with θ̃ wrapped to `[-π, π]`.
    pub fn cost(theta: f64, theta_dot: f64, torque: f64) -> f64 {
        let th = wrap_angle(theta);
        th * th + 0.1 * theta_dot * theta_dot + 0.001 * torque * torque
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for Pendulum {
    fn id(&self) -> String {
        "pendulum".into()
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> StateVec {
        self.rng = stream_rng(seed, 0, 0);
        let theta = self.rng.gen_range(-PI..PI);
        let theta_dot = self.rng.gen_range(-1.0..1.0);
        self.set_state(theta, theta_dot)
    }

    fn step(&mut self, action: &ActionVec) -> StepResult {
        let (a, clipped) = self.spec.clip_action(action);
        let u = a.0[0];
        let reward = -Self::cost(self.theta, self.theta_dot, u);
        let accel = 3.0 * Self::GRAVITY / (2.0 * Self::LENGTH) * self.theta.sin()
            + 3.0 / (Self::MASS * Self::LENGTH * Self::LENGTH) * u;
        self.theta_dot = (self.theta_dot + accel * Self::DT).clamp(-Self::MAX_SPEED, Self::MAX_SPEED);
        self.theta += self.theta_dot * Self::DT;
        self.steps += 1;
        StepResult {
            state: self.observe(),
            reward,
            terminated: false,
            truncated: self.steps >= self.spec.max_episode_steps,
            clipped,
        }
    }
}

/// Point mass on the plane; force actions, quadratic distance cost.
#[derive(Clone, Debug)]
pub struct PointMass {
    spec: EnvSpec,
    pos: [f64; 2],
    vel: [f64; 2],
    steps: usize,
}

impl PointMass {
    pub const DT: f64 = 0.1;
    pub const BOUND: f64 = 2.0;

    pub fn new() -> Self {
        let b = Self::BOUND;
        Self {
            spec: EnvSpec {
                state_dim: 4,
                action_dim: 2,
                action_low: vec![-1.0; 2],
                action_high: vec![1.0; 2],
                state_low: vec![-b; 4],
                state_high: vec![b; 4],
                max_episode_steps: 100,
            },
            pos: [0.0; 2],
            vel: [0.0; 2],
            steps: 0,
        }
    }

    pub fn set_state(&mut self, pos: [f64; 2], vel: [f64; 2]) -> StateVec {
        self.pos = pos;
        self.vel = vel;
        self.steps = 0;
        self.observe()
    }

    fn observe(&self) -> StateVec {
        StateVec(vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1]])
    }
}

impl Default for PointMass {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for PointMass {
    fn id(&self) -> String {
        "pointmass".into()
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> StateVec {
        let mut rng = stream_rng(seed, 0, 0);
        let pos = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        self.set_state(pos, [0.0; 2])
    }

    fn step(&mut self, action: &ActionVec) -> StepResult {
        let (a, clipped) = self.spec.clip_action(action);
        let dist2 = self.pos[0] * self.pos[0] + self.pos[1] * self.pos[1];
        let effort = a.0[0] * a.0[0] + a.0[1] * a.0[1];
        let reward = -(dist2 + 0.01 * effort);
        for i in 0..2 {
            self.vel[i] = (self.vel[i] + a.0[i] * Self::DT).clamp(-Self::BOUND, Self::BOUND);
            self.pos[i] = (self.pos[i] + self.vel[i] * Self::DT).clamp(-Self::BOUND, Self::BOUND);
        }
        self.steps += 1;
        StepResult {
            state: self.observe(),
            reward,
            terminated: false,
            truncated: self.steps >= self.spec.max_episode_steps,
            clipped,
        }
    }
}

/// Single-state bandit with `K` arms, every arm paying `N(0, 1)`.
///
/// The observation is a constant one-dimensional zero vector. Episodes last
/// one step and end by truncation, so TD targets bootstrap from the same
/// state forever and any bias in the bootstrap compounds.
#[derive(Clone, Debug)]
pub struct NoisyBandit {
    spec: EnvSpec,
    arms: usize,
    rng: ChaCha8Rng,
    steps: usize,
}

impl NoisyBandit {
    pub fn new(arms: usize) -> Self {
        Self {
            spec: EnvSpec {
                state_dim: 1,
                action_dim: 1,
                action_low: vec![-1.0],
                action_high: vec![1.0],
                state_low: vec![0.0],
                state_high: vec![0.0],
                max_episode_steps: 1,
            },
            arms,
            rng: stream_rng(0, 0, 0),
            steps: 0,
        }
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    /// Arm selected by a (clipped) continuous action.
    pub fn arm_of(&self, action: &ActionVec) -> usize {
        let (a, _) = self.spec.clip_action(action);
        let unit = (a.0[0] + 1.0) * 0.5;
        ((unit * self.arms as f64) as usize).min(self.arms - 1)
    }
}

impl Environment for NoisyBandit {
    fn id(&self) -> String {
        format!("noisybandit-{}", self.arms)
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> StateVec {
        self.rng = stream_rng(seed, 0, 0);
        self.steps = 0;
        StateVec(vec![0.0])
    }

    fn step(&mut self, action: &ActionVec) -> StepResult {
        let (_, clipped) = self.spec.clip_action(action);
        let reward: f64 = self.rng.sample(StandardNormal);
        self.steps += 1;
        StepResult {
            state: StateVec(vec![0.0]),
            reward,
            terminated: false,
            truncated: self.steps >= self.spec.max_episode_steps,
            clipped,
        }
    }
}

/// A deterministic action rule in environment units.
pub trait Policy {
    fn act(&self, state: &StateVec) -> ActionVec;
}

impl<F: Fn(&StateVec) -> ActionVec> Policy for F {
    fn act(&self, state: &StateVec) -> ActionVec {
        self(state)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub mean_return: f64,
    /// Population standard deviation over episodes.
    pub std_return: f64,
    pub returns: Vec<f64>,
}

impl Evaluation {
    pub fn from_returns(returns: Vec<f64>) -> Self {
        let n = returns.len() as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
        Self {
            mean_return: mean,
            std_return: var.sqrt(),
            returns,
        }
    }
}

/// Seed used for the `episode`-th evaluation episode under `seed`.
pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    derive_seed(seed, 0xe7a1, episode as u64)
}

/// Undiscounted return averaged over `episodes` rollouts of `policy`.
pub fn evaluate_policy(
    env: &mut dyn Environment,
    policy: &dyn Policy,
    episodes: usize,
    seed: u64,
) -> Result<Evaluation> {
    if episodes == 0 {
        return Err(Error::invalid("evaluation needs at least one episode"));
    }
    let returns = (0..episodes)
        .map(|ep| {
            let mut s = env.reset(episode_seed(seed, ep));
            let mut total = 0.0;
            for _ in 0..env.spec().max_episode_steps {
                let step = env.step(&policy.act(&s));
                total += step.reward;
                let done = step.done();
                s = step.state;
                if done {
                    break;
                }
            }
            total
        })
        .collect();
    Ok(Evaluation::from_returns(returns))
}
