use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::expectile::ExpectileLevel;
use crate::targets::CautiousWeight;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Ddpg,
    DdpgMinQ,
    Mpg,
    Td3,
    MpgSd,
    SacMinQ,
    Mac,
    Tqc,
    Mqc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// Deterministic tanh actor, exploration noise, target actor.
    Deterministic,
    /// Squashed-Gaussian actor with an entropy temperature.
    Stochastic,
    /// Squashed-Gaussian actor over quantile critics.
    Distributional,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Self::Ddpg,
        Self::DdpgMinQ,
        Self::Mpg,
        Self::Td3,
        Self::MpgSd,
        Self::SacMinQ,
        Self::Mac,
        Self::Tqc,
        Self::Mqc,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Self::Ddpg => "ddpg",
            Self::DdpgMinQ => "ddpg-minq",
            Self::Mpg => "mpg",
            Self::Td3 => "td3",
            Self::MpgSd => "mpg-sd",
            Self::SacMinQ => "sac-minq",
            Self::Mac => "mac",
            Self::Tqc => "tqc",
            Self::Mqc => "mqc",
        }
    }

    pub fn family(self) -> Family {
        match self {
            Self::Ddpg | Self::DdpgMinQ | Self::Mpg | Self::Td3 | Self::MpgSd => Family::Deterministic,
            Self::SacMinQ | Self::Mac => Family::Stochastic,
            Self::Tqc | Self::Mqc => Family::Distributional,
        }
    }

    /// Whether the target blends in a protester.
    pub fn is_moderate(self) -> bool {
        matches!(self, Self::Mpg | Self::MpgSd | Self::Mac | Self::Mqc)
    }

    pub fn default_critics(self) -> usize {
        match self {
            Self::Ddpg | Self::Mpg | Self::MpgSd | Self::Mac => 1,
            _ => 2,
        }
    }

    pub fn default_omega(self) -> f64 {
        match self {
            Self::Mpg | Self::MpgSd => 0.2,
            Self::Mac => 0.13,
            Self::Mqc => 0.01,
            _ => 0.0,
        }
    }

    fn smooths_targets(self) -> bool {
        matches!(self, Self::Td3 | Self::MpgSd)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.id() == s)
            .ok_or_else(|| Error::UnknownAlgorithm(s.to_string()))
    }
}

/// Hyperparameters for one agent. Learning rates: `lr_actor` (λ_π),
/// `lr_critic` (λ_Q), `lr_protester` (λ_V), `lr_alpha` for the temperature.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub eta: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_protester: f64,
    pub lr_alpha: f64,
    pub omega: f64,
    pub tau: f64,
    pub exploration_std: f64,
    pub target_noise_std: f64,
    pub target_noise_clip: f64,
    pub delay: usize,
    pub batch_size: usize,
    pub buffer_size: usize,
    pub hidden: Vec<usize>,
    pub alpha_init: f64,
    pub auto_alpha: bool,
    pub n_critics: usize,
    pub atoms: usize,
    pub keep_atoms: usize,
}

impl AgentConfig {
    /// Full-size settings: 400-300 networks and learning rate 1e-3 for the
    /// deterministic family, 256-256 and 3e-4 otherwise, batch 256, buffer
    /// 10⁶, γ = 0.99, η = 0.005.
    pub fn reference(algorithm: Algorithm) -> Self {
        let deterministic = algorithm.family() == Family::Deterministic;
        let lr = if deterministic { 1e-3 } else { 3e-4 };
        let smooth = algorithm.smooths_targets();
        Self {
            algorithm,
            gamma: 0.99,
            eta: 0.005,
            lr_actor: lr,
            lr_critic: lr,
            lr_protester: lr,
            lr_alpha: lr,
            omega: algorithm.default_omega(),
            tau: 0.01,
            exploration_std: 0.1,
            target_noise_std: if smooth { 0.2 } else { 0.0 },
            target_noise_clip: 0.5,
            delay: if smooth { 2 } else { 1 },
            batch_size: 256,
            buffer_size: 1_000_000,
            hidden: if deterministic { vec![400, 300] } else { vec![256, 256] },
            alpha_init: 1.0,
            auto_alpha: true,
            n_critics: algorithm.default_critics(),
            atoms: 25,
            keep_atoms: 23,
        }
    }

    /// Desk-scale settings: 64-64 networks, batch 128, buffer 10⁵ and
    /// learning rate 1e-3 for every algorithm. Everything else as
    /// [`AgentConfig::reference`].
    pub fn desk(algorithm: Algorithm) -> Self {
        Self {
            lr_actor: 1e-3,
            lr_critic: 1e-3,
            lr_protester: 1e-3,
            lr_alpha: 1e-3,
            batch_size: 128,
            buffer_size: 100_000,
            hidden: vec![64, 64],
            ..Self::reference(algorithm)
        }
    }

    pub fn cautious_weight(&self) -> Result<CautiousWeight> {
        CautiousWeight::new(self.omega)
    }

    pub fn expectile_level(&self) -> Result<ExpectileLevel> {
        ExpectileLevel::lower(self.tau)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::invalid(what.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad("eta must lie in (0, 1]");
        }
        for lr in [self.lr_actor, self.lr_critic, self.lr_protester, self.lr_alpha] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad("learning rates must be positive");
            }
        }
        self.cautious_weight()?;
        self.expectile_level()?;
        if !(self.exploration_std >= 0.0 && self.target_noise_std >= 0.0 && self.target_noise_clip >= 0.0) {
            return bad("noise scales must be nonnegative");
        }
        if self.delay == 0 {
            return bad("delay must be at least 1");
        }
        if self.batch_size == 0 || self.buffer_size < self.batch_size {
            return bad("need 0 < batch_size <= buffer_size");
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        if !(self.alpha_init > 0.0 && self.alpha_init.is_finite()) {
            return bad("alpha_init must be positive");
        }
        let n = self.n_critics;
        let ok = match self.algorithm {
            Algorithm::Ddpg | Algorithm::Mpg | Algorithm::MpgSd | Algorithm::Mac => n == 1,
            Algorithm::DdpgMinQ | Algorithm::Td3 | Algorithm::SacMinQ => n >= 2,
            Algorithm::Tqc | Algorithm::Mqc => n >= 1,
        };
        if !ok {
            return bad(&format!("{} cannot use {n} critics", self.algorithm));
        }
        if self.algorithm.family() == Family::Distributional {
            if self.atoms == 0 {
                return bad("atoms must be positive");
            }
            if self.keep_atoms == 0 || self.keep_atoms > self.atoms {
                return Err(Error::TruncationTooLarge {
                    k: self.keep_atoms,
                    m: self.atoms,
                });
            }
        }
        Ok(())
    }

    /// Canonical `key = value` pairs, in a fixed order.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let hidden = self.hidden.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        vec![
            ("algorithm", self.algorithm.to_string()),
            ("gamma", self.gamma.to_string()),
            ("eta", self.eta.to_string()),
            ("lr_actor", self.lr_actor.to_string()),
            ("lr_critic", self.lr_critic.to_string()),
            ("lr_protester", self.lr_protester.to_string()),
            ("lr_alpha", self.lr_alpha.to_string()),
            ("omega", self.omega.to_string()),
            ("tau", self.tau.to_string()),
            ("exploration_std", self.exploration_std.to_string()),
            ("target_noise_std", self.target_noise_std.to_string()),
            ("target_noise_clip", self.target_noise_clip.to_string()),
            ("delay", self.delay.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("buffer_size", self.buffer_size.to_string()),
            ("hidden", hidden),
            ("alpha_init", self.alpha_init.to_string()),
            ("auto_alpha", self.auto_alpha.to_string()),
            ("n_critics", self.n_critics.to_string()),
            ("atoms", self.atoms.to_string()),
            ("keep_atoms", self.keep_atoms.to_string()),
        ]
    }

    /// Sets one field from text. Returns `Ok(false)` for keys this type does
    /// not own. Changing `algorithm` here does not reset other fields.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn num<V: FromStr>(key: &str, value: &str) -> Result<V> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad value `{value}` for `{key}`")))
        }
        match key {
            "algorithm" => self.algorithm = value.trim().parse()?,
            "gamma" => self.gamma = num(key, value)?,
            "eta" => self.eta = num(key, value)?,
            "lr_actor" => self.lr_actor = num(key, value)?,
            "lr_critic" => self.lr_critic = num(key, value)?,
            "lr_protester" => self.lr_protester = num(key, value)?,
            "lr_alpha" => self.lr_alpha = num(key, value)?,
            "omega" => self.omega = num(key, value)?,
            "tau" => self.tau = num(key, value)?,
            "exploration_std" => self.exploration_std = num(key, value)?,
            "target_noise_std" => self.target_noise_std = num(key, value)?,
            "target_noise_clip" => self.target_noise_clip = num(key, value)?,
            "delay" => self.delay = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "buffer_size" => self.buffer_size = num(key, value)?,
            "hidden" => {
                self.hidden = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| num(key, s))
                    .collect::<Result<_>>()?
            }
            "alpha_init" => self.alpha_init = num(key, value)?,
            "auto_alpha" => self.auto_alpha = num(key, value)?,
            "n_critics" => self.n_critics = num(key, value)?,
            "atoms" => self.atoms = num(key, value)?,
            "keep_atoms" => self.keep_atoms = num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Hex SHA-256 of the canonical pairs.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.pairs() {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.id().parse::<Algorithm>().unwrap(), a);
        }
        assert!(matches!("sac".parse::<Algorithm>(), Err(Error::UnknownAlgorithm(_))));
    }

    #[test]
    fn presets_validate() {
        for a in Algorithm::ALL {
            AgentConfig::reference(a).validate().unwrap();
            AgentConfig::desk(a).validate().unwrap();
        }
    }

    #[test]
    fn reference_values() {
        let td3 = AgentConfig::reference(Algorithm::Td3);
        assert_eq!((td3.delay, td3.target_noise_std, td3.n_critics), (2, 0.2, 2));
        assert_eq!(td3.hidden, vec![400, 300]);
        let mqc = AgentConfig::reference(Algorithm::Mqc);
        assert_eq!((mqc.omega, mqc.atoms, mqc.keep_atoms, mqc.lr_critic), (0.01, 25, 23, 3e-4));
        assert_eq!(AgentConfig::reference(Algorithm::Mac).omega, 0.13);
        assert_eq!(AgentConfig::reference(Algorithm::MpgSd).omega, 0.2);
    }

    #[test]
    fn invalid_ranges_rejected() {
        let base = AgentConfig::desk(Algorithm::Mpg);
        let cases: Vec<Box<dyn Fn(&mut AgentConfig)>> = vec![
            Box::new(|c| c.gamma = 1.0),
            Box::new(|c| c.eta = 0.0),
            Box::new(|c| c.omega = 1.5),
            Box::new(|c| c.tau = 0.5),
            Box::new(|c| c.delay = 0),
            Box::new(|c| c.n_critics = 2),
            Box::new(|c| c.lr_critic = 0.0),
            Box::new(|c| c.batch_size = 0),
        ];
        for f in cases {
            let mut c = base.clone();
            f(&mut c);
            assert!(c.validate().is_err(), "{c:?}");
        }
        let mut tqc = AgentConfig::desk(Algorithm::Tqc);
        tqc.keep_atoms = 26;
        assert!(matches!(tqc.validate(), Err(Error::TruncationTooLarge { k: 26, m: 25 })));
    }

    #[test]
    fn pairs_round_trip_through_set() {
        let src = AgentConfig {
            omega: 0.35,
            hidden: vec![8, 4],
            auto_alpha: false,
            ..AgentConfig::desk(Algorithm::Mqc)
        };
        let mut dst = AgentConfig::reference(Algorithm::Ddpg);
        for (k, v) in src.pairs() {
            assert!(dst.set(k, &v).unwrap());
        }
        assert_eq!(dst, src);
        assert_eq!(dst.hash(), src.hash());
        assert!(!dst.set("steps", "10").unwrap());
        assert!(dst.set("gamma", "x").is_err());
    }

    #[test]
    fn hash_tracks_changes() {
        let a = AgentConfig::desk(Algorithm::Mpg);
        let mut b = a.clone();
        b.omega = 0.21;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
