//! Agent checkpoints: one binary file per network plus `manifest.txt`.
//!
//! The manifest records the algorithm id, the config hash and the log
//! temperature. Optimizer moments and the replay buffer are not saved.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use super::Agent;
use crate::error::{Error, Result};
use crate::nn::{read_checkpoint, write_checkpoint, Mlp, Real};

const MANIFEST: &str = "manifest.txt";

fn net_names<T: Real>(agent: &Agent<T>) -> Vec<String> {
    let mut names = vec!["actor".to_string()];
    if agent.actor_target().is_some() {
        names.push("actor_target".into());
    }
    for i in 0..agent.critics().len() {
        names.push(format!("critic_{i}"));
        names.push(format!("critic_target_{i}"));
    }
    if agent.protester().is_some() {
        names.push("protester".into());
    }
    names
}

fn net_by_name<'a, T: Real>(agent: &'a Agent<T>, name: &str) -> Option<&'a Mlp<T>> {
    match name {
        "actor" => Some(agent.actor()),
        "actor_target" => agent.actor_target(),
        "protester" => agent.protester(),
        _ => {
            if let Some(i) = name.strip_prefix("critic_target_") {
                agent.critic_targets().get(i.parse::<usize>().ok()?)
            } else {
                agent.critics().get(name.strip_prefix("critic_")?.parse::<usize>().ok()?)
            }
        }
    }
}

pub fn save<T: Real>(agent: &Agent<T>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let names = net_names(agent);
    for name in &names {
        let net = net_by_name(agent, name).expect("listed networks exist");
        let mut out = BufWriter::new(File::create(dir.join(format!("{name}.bin")))?);
        write_checkpoint(net, &mut out)?;
        out.flush()?;
    }
    let mut m = BufWriter::new(File::create(dir.join(MANIFEST))?);
    writeln!(m, "algorithm = {}", agent.algorithm())?;
    writeln!(m, "config_hash = {}", agent.config().hash())?;
    writeln!(m, "log_alpha = {:?}", agent.log_alpha().as_f64())?;
    writeln!(m, "nets = {}", names.join(" "))?;
    m.flush()?;
    Ok(())
}

/// Restores network parameters into an agent built from the same config.
pub fn load<T: Real>(agent: &mut Agent<T>, dir: &Path) -> Result<()> {
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    let field = |key: &str| {
        text.lines()
            .filter_map(|l| l.split_once('='))
            .find(|(k, _)| k.trim() == key)
            .map(|(_, v)| v.trim().to_string())
            .ok_or_else(|| Error::Checkpoint(format!("manifest lacks `{key}`")))
    };
    if field("algorithm")? != agent.algorithm().id() {
        return Err(Error::Checkpoint(format!(
            "checkpoint is for {}, agent is {}",
            field("algorithm")?,
            agent.algorithm()
        )));
    }
    if field("config_hash")? != agent.config().hash() {
        return Err(Error::Checkpoint("config hash differs".into()));
    }
    let log_alpha: f64 = field("log_alpha")?
        .parse()
        .map_err(|_| Error::Checkpoint("bad log_alpha".into()))?;
    let names = net_names(agent);
    let mut loaded = Vec::with_capacity(names.len());
    for name in &names {
        let net: Mlp<T> = read_checkpoint(BufReader::new(File::open(dir.join(format!("{name}.bin")))?))?;
        let expected = net_by_name(agent, name).expect("listed networks exist").dims();
        if net.dims() != expected {
            return Err(Error::Checkpoint(format!("{name}: dims {:?}, expected {expected:?}", net.dims())));
        }
        loaded.push(net);
    }
    let mut nets = agent.nets_mut();
    let mut it = names.iter().zip(loaded);
    for (name, net) in &mut it {
        match name.as_str() {
            "actor" => *nets.actor = net,
            "actor_target" => *nets.actor_target.as_deref_mut().expect("listed") = net,
            "protester" => *nets.protester.as_deref_mut().expect("listed") = net,
            other => {
                if let Some(i) = other.strip_prefix("critic_target_") {
                    nets.critic_targets[i.parse::<usize>().expect("own name")] = net;
                } else {
                    let i = other.strip_prefix("critic_").expect("own name");
                    nets.critics[i.parse::<usize>().expect("own name")] = net;
                }
            }
        }
    }
    *nets.log_alpha = T::lit(log_alpha);
    Ok(())
}
