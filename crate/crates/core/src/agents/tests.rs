use super::losses::{quantile_huber, temperature_grad};
use super::*;
use crate::mdp::{make_env, Environment};

fn small(algorithm: Algorithm) -> AgentConfig {
    AgentConfig {
        hidden: vec![16, 16],
        batch_size: 32,
        buffer_size: 10_000,
        ..AgentConfig::desk(algorithm)
    }
}

fn pendulum_transitions(n: usize, seed: u64) -> (EnvSpec, Vec<Transition>) {
    env_transitions("pendulum", n, seed)
}

fn env_transitions(id: &str, n: usize, seed: u64) -> (EnvSpec, Vec<Transition>) {
    let mut env = make_env(id).unwrap();
    let spec = env.spec().clone();
    let mut rng = stream_rng(seed, 99, 0);
    let mut s = env.reset(seed);
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let unit: Vec<f64> = (0..spec.action_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let step = env.step(&spec.denormalize(&unit));
        out.push(Transition {
            s: s.clone(),
            a: ActionVec(unit),
            r: step.reward,
            s_next: step.state.clone(),
            done: step.terminated,
        });
        s = if step.done() { env.reset(seed + t as u64 + 1) } else { step.state };
    }
    (spec, out)
}

fn filled(cfg: AgentConfig, seed: u64) -> Agent<f32> {
    let (spec, data) = pendulum_transitions(500, 7);
    let mut agent = Agent::new(cfg, &spec, seed).unwrap();
    for t in data {
        agent.observe(t);
    }
    agent
}

fn all_params(agent: &Agent<f32>) -> Vec<Vec<f32>> {
    let mut nets: Vec<&Mlp<f32>> = vec![agent.actor()];
    nets.extend(agent.actor_target());
    nets.extend(agent.critics());
    nets.extend(agent.critic_targets());
    nets.extend(agent.protester());
    nets.iter()
        .map(|n| n.tensors().concat())
        .chain(std::iter::once(vec![agent.log_alpha()]))
        .collect()
}

#[test]
fn zero_exploration_noise_is_greedy() {
    let cfg = AgentConfig {
        exploration_std: 0.0,
        ..small(Algorithm::Ddpg)
    };
    let mut agent = filled(cfg, 0);
    let s = [0.3, -0.2, 0.5];
    assert_eq!(agent.act_explore(&s).unwrap(), agent.act(&s).unwrap());
}

#[test]
fn exploration_noise_has_configured_std() {
    let mut agent = filled(small(Algorithm::Mpg), 1);
    let dims = agent.actor().dims();
    *agent.nets_mut().actor = Mlp::zeros(&dims).unwrap();
    let n = 100_000;
    let draws: Vec<f64> = (0..n).map(|_| agent.act_explore(&[0.0, 0.0, 0.0]).unwrap()[0]).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let std = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    assert!((std - 0.1).abs() < 0.005, "std {std}");
}

#[test]
fn stochastic_actions_stay_in_bounds() {
    for algo in [Algorithm::SacMinQ, Algorithm::Mac, Algorithm::Mqc] {
        let mut agent = filled(small(algo), 2);
        for i in 0..200 {
            let s = [(i as f64).cos(), (i as f64).sin(), i as f64 / 25.0 - 4.0];
            assert!(agent.act_explore(&s).unwrap().iter().all(|a| (-1.0..=1.0).contains(a)));
        }
    }
}

#[test]
fn every_algorithm_trains_without_error() {
    for algo in Algorithm::ALL {
        let mut agent = filled(small(algo), 3);
        for _ in 0..20 {
            let stats = agent.update().unwrap();
            assert!(stats.critic_loss.is_finite());
            assert_eq!(stats.protester_loss.is_some(), algo.is_moderate());
        }
        assert_eq!(agent.updates(), 20);
        assert!(all_params(&agent).iter().flatten().all(|v| v.is_finite()));
    }
}

#[test]
fn delayed_actor_moves_only_on_even_updates() {
    let mut agent = filled(small(Algorithm::MpgSd), 4);
    assert_eq!(agent.config().delay, 2);
    for _ in 0..10 {
        let before = agent.actor().clone();
        let target_before = agent.critic_targets()[0].clone();
        let stats = agent.update().unwrap();
        let moved = agent.actor() != &before;
        let even = agent.updates() % 2 == 0;
        assert_eq!(moved, even);
        assert_eq!(stats.actor_loss.is_some(), even);
        assert_eq!(agent.critic_targets()[0] != target_before, even);
    }
}

#[test]
fn mpg_sd_without_delay_or_smoothing_is_mpg() {
    let mut a = filled(small(Algorithm::Mpg), 5);
    let cfg = AgentConfig {
        delay: 1,
        target_noise_std: 0.0,
        ..small(Algorithm::MpgSd)
    };
    let mut b = filled(cfg, 5);
    for _ in 0..50 {
        a.update().unwrap();
        b.update().unwrap();
        assert_eq!(all_params(&a), all_params(&b));
    }
}

#[test]
fn mpg_with_zero_weight_is_ddpg() {
    let mut a = filled(small(Algorithm::Ddpg), 6);
    let cfg = AgentConfig {
        omega: 0.0,
        ..small(Algorithm::Mpg)
    };
    let mut b = filled(cfg, 6);
    for _ in 0..50 {
        let ba = a.sample_batch().unwrap();
        let bb = b.sample_batch().unwrap();
        assert_eq!(a.clone().compute_targets(&ba).unwrap(), b.clone().compute_targets(&bb).unwrap());
        a.update_on(&ba).unwrap();
        b.update_on(&bb).unwrap();
        assert_eq!(a.actor(), b.actor());
        assert_eq!(a.critics(), b.critics());
    }
}

#[test]
fn mqc_with_zero_weight_is_tqc() {
    let mut a = filled(small(Algorithm::Tqc), 7);
    let cfg = AgentConfig {
        omega: 0.0,
        ..small(Algorithm::Mqc)
    };
    let mut b = filled(cfg, 7);
    for _ in 0..20 {
        a.update().unwrap();
        b.update().unwrap();
        assert_eq!(a.actor(), b.actor());
        assert_eq!(a.critics(), b.critics());
        assert_eq!(a.log_alpha(), b.log_alpha());
    }
}

#[test]
fn single_updates_touch_only_their_parameters() {
    let mut agent = filled(small(Algorithm::Mac), 8);
    let batch = agent.sample_batch().unwrap();
    let snapshot = |a: &Agent<f32>| {
        (
            a.actor().clone(),
            a.critics().to_vec(),
            a.protester().cloned(),
            a.log_alpha(),
            a.critic_targets().to_vec(),
        )
    };
    let s0 = snapshot(&agent);
    agent.critic_update(&batch).unwrap();
    let s1 = snapshot(&agent);
    assert!(s1.1 != s0.1 && s1.0 == s0.0 && s1.2 == s0.2 && s1.3 == s0.3 && s1.4 == s0.4);
    agent.actor_update(&batch).unwrap();
    let s2 = snapshot(&agent);
    assert!(s2.0 != s1.0 && s2.1 == s1.1 && s2.2 == s1.2 && s2.3 == s1.3);
    agent.protester_update(&batch).unwrap();
    let s3 = snapshot(&agent);
    assert!(s3.2 != s2.2 && s3.0 == s2.0 && s3.1 == s2.1 && s3.3 == s2.3);
    agent.temperature_update(&batch).unwrap();
    let s4 = snapshot(&agent);
    assert!(s4.3 != s3.3 && s4.0 == s3.0 && s4.1 == s3.1 && s4.2 == s3.2);
}

#[test]
fn targets_at_current_outputs_give_zero_loss_and_no_change() {
    let mut agent = filled(small(Algorithm::Ddpg), 9);
    let batch = agent.sample_batch().unwrap();
    let inputs = batch.inputs();
    let current = agent.critics()[0].forward_batch(inputs.view()).unwrap().column(0).to_vec();
    let before = agent.critics().to_vec();
    let loss = agent.critic_update_towards(&batch, &Targets::Scalar(current)).unwrap();
    assert_eq!(loss, 0.0);
    assert_eq!(agent.critics(), &before[..]);
}

#[test]
fn critic_regresses_to_constant() {
    let (spec, data) = env_transitions("pointmass", 500, 3);
    let mut agent: Agent<f32> = Agent::new(AgentConfig::desk(Algorithm::Ddpg), &spec, 10).unwrap();
    for t in data {
        agent.observe(t);
    }
    let batch = agent.sample_batch().unwrap();
    let targets = Targets::Scalar(vec![3.5f32; batch.len()]);
    let mut steps = 0;
    loop {
        agent.critic_update_towards(&batch, &targets).unwrap();
        steps += 1;
        let out = agent.critics()[0].forward_batch(batch.inputs().view()).unwrap();
        if out.iter().all(|v| (v - 3.5).abs() < 1e-2) {
            break;
        }
        assert!(steps < 5000, "no convergence");
    }
}

#[test]
fn huber_quantile_spot_value() {
    let (l, _) = quantile_huber(0.0f64, 2.0, 0.5, 1.0);
    assert!((l - 0.75).abs() < 1e-15);
}

#[test]
fn ddpg_actor_loss_is_negative_mean_q() {
    let mut agent = filled(small(Algorithm::Ddpg), 11);
    let batch = agent.sample_batch().unwrap();
    let direct = {
        let a = agent.greedy_actions(batch.states.view()).unwrap();
        let q = agent.critics()[0]
            .forward_batch(concat_columns(batch.states.view(), a.view()).view())
            .unwrap();
        -q.mean().unwrap() as f64
    };
    let loss = agent.actor_update(&batch).unwrap();
    assert!((loss - direct).abs() < 1e-5, "{loss} vs {direct}");
}

#[test]
fn mac_actor_loss_without_temperature_is_negative_mean_q() {
    let cfg = AgentConfig {
        alpha_init: 1e-30,
        ..small(Algorithm::Mac)
    };
    let agent = filled(cfg, 12);
    let mut probe = agent.clone();
    let batch = probe.sample_batch().unwrap();
    let noise = gaussian_noise::<f32, _>(&mut stream_rng(0, 0, 0), batch.len(), 1);
    let refs: Vec<&Mlp<f32>> = agent.critics().iter().collect();
    let loss = stochastic_actor_loss(agent.actor(), &refs, CriticReduce::Min, batch.states.view(), noise.view(), 0.0)
        .unwrap();
    let out = agent.actor().forward_batch(batch.states.view()).unwrap();
    let a = squashed_sample(out.view(), noise.view()).unwrap().action;
    let q = agent.critics()[0]
        .forward_batch(concat_columns(batch.states.view(), a.view()).view())
        .unwrap();
    assert!((loss.loss + q.mean().unwrap()).abs() < 1e-5);
}

#[test]
fn action_independent_critic_gives_zero_actor_gradient() {
    let mut agent = filled(small(Algorithm::Ddpg), 13);
    let sd = agent.env_spec().state_dim;
    for row in sd..sd + agent.env_spec().action_dim {
        agent.nets_mut().critics[0].layers_mut()[0].weight.row_mut(row).fill(0.0);
    }
    let batch = agent.sample_batch().unwrap();
    let loss = deterministic_actor_loss(agent.actor(), &agent.critics()[0], batch.states.view()).unwrap();
    assert_eq!(loss.grads.max_abs(), 0.0);
}

#[test]
fn target_critics_follow_soft_update() {
    let mut agent = filled(small(Algorithm::Mac), 14);
    let eta = agent.config().eta as f32;
    for _ in 0..5 {
        let before = agent.critic_targets()[0].tensors().concat();
        agent.update().unwrap();
        let online = agent.critics()[0].tensors().concat();
        let after = agent.critic_targets()[0].tensors().concat();
        for ((b, o), a) in before.iter().zip(&online).zip(&after) {
            assert_eq!(*a, b + eta * (o - b));
        }
    }
}

#[test]
fn temperature_gradient_signs() {
    let target = -1.0f64;
    assert_eq!(temperature_grad(0.3, &[1.0, 1.0], target), 0.0);
    // Entropy below target: log π too high, descent raises α.
    assert!(temperature_grad(0.0, &[3.0, 2.0], target) < 0.0);
    assert!(temperature_grad(0.0, &[-3.0, -2.0], target) > 0.0);
}

#[test]
fn temperature_stays_positive() {
    let mut rng = stream_rng(15, 0, 0);
    let mut opt = Adam::<f64>::new(1e-2);
    let mut log_alpha = 0.0f64;
    for _ in 0..100_000 {
        let lp: Vec<f64> = (0..4).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let g = temperature_grad(log_alpha, &lp, -1.0);
        opt.step_scalar(&mut log_alpha, g).unwrap();
        assert!(log_alpha.exp() > 0.0);
    }
}

#[test]
fn measured_target_q_on_zero_nets_is_zero() {
    let mut agent = filled(small(Algorithm::Tqc), 16);
    let dims = agent.critic_targets()[0].dims();
    for t in agent.nets_mut().critic_targets.iter_mut() {
        *t = Mlp::zeros(&dims).unwrap();
    }
    let probes = vec![StateVec(vec![1.0, 0.0, 0.0]), StateVec(vec![0.0, 1.0, 2.0])];
    assert_eq!(agent.measure_target_q(&probes).unwrap(), 0.0);
}

#[test]
fn measured_target_q_is_reproducible() {
    let a = filled(small(Algorithm::Td3), 17);
    let b = filled(small(Algorithm::Td3), 17);
    let probes = vec![StateVec(vec![1.0, 0.0, 0.5]); 3];
    assert_eq!(a.measure_target_q(&probes).unwrap(), b.measure_target_q(&probes).unwrap());
}

#[test]
fn non_finite_rewards_are_reported() {
    let (spec, mut data) = pendulum_transitions(64, 18);
    for t in &mut data {
        t.r = f64::NAN;
    }
    let mut agent = Agent::<f32>::new(small(Algorithm::Ddpg), &spec, 0).unwrap();
    let refs: Vec<&Transition> = data.iter().collect();
    let batch = Batch::from_transitions(&refs).unwrap();
    assert!(matches!(agent.update_on(&batch), Err(Error::NonFiniteLoss { .. })));
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for algo in [Algorithm::MpgSd, Algorithm::Mqc] {
        let mut trained = filled(small(algo), 19);
        for _ in 0..5 {
            trained.update().unwrap();
        }
        let path = dir.path().join(algo.id());
        checkpoint::save(&trained, &path).unwrap();
        let mut fresh = filled(small(algo), 20);
        checkpoint::load(&mut fresh, &path).unwrap();
        assert_eq!(all_params(&fresh), all_params(&trained));
        let mut other = filled(small(Algorithm::Ddpg), 20);
        assert!(matches!(checkpoint::load(&mut other, &path), Err(Error::Checkpoint(_))));
    }
}

#[test]
fn train_step_collects_until_a_batch_is_available() {
    let (spec, data) = pendulum_transitions(40, 21);
    let mut agent = Agent::<f32>::new(small(Algorithm::Ddpg), &spec, 0).unwrap();
    for (i, t) in data.into_iter().enumerate() {
        let stats = agent.train_step(t).unwrap();
        assert_eq!(stats.is_some(), i + 1 >= 32);
    }
    assert_eq!(agent.updates(), 9);
}

#[test]
fn policy_view_denormalizes() {
    let agent = filled(small(Algorithm::Ddpg), 22);
    let s = StateVec(vec![1.0, 0.0, 0.0]);
    let unit = agent.act(&s.0).unwrap();
    let env_units = Policy::act(&agent, &s);
    assert!((env_units.0[0] - 2.0 * unit[0]).abs() < 1e-12);
    let _: &dyn Environment = &*make_env("pendulum").unwrap();
}
