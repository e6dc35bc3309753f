//! Finite-MDP laboratory for the moderate Bellman operator
//!
//! ```text
//! (T_m Q)(s, a) = R(s, a) + γ Σ_s' P(s'|s, a) [(1 − ω)·max_a' Q(s', a') + ω·min_a' Q(s', a')]
//! ```
//!
//! where the per-state minimum stands in for a protester that has converged
//! to the bottom of the action-value range. The operator is a
//! `γ`-contraction in the sup norm for every `ω ∈ [0, 1]`; this module checks
//! that numerically, finds its fixed point, evaluates fixed policies exactly,
//! and probes the bias of several next-state value estimators.
//!
//! Everything here is `f64`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Array3, ArrayView1, Axis};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::expectile::{scalar_expectile, ExpectileLevel};
use crate::seeding::stream_rng;
use crate::targets::CautiousWeight;

/// Explicit finite MDP: `P[s, a, s']`, `R[s, a]`, discount `γ ∈ (0, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MdpTable {
    transitions: Array3<f64>,
    rewards: Array2<f64>,
    gamma: f64,
}

/// Action values `Q[s, a]`.
pub type QTable = Array2<f64>;

impl MdpTable {
    pub fn new(transitions: Array3<f64>, rewards: Array2<f64>, gamma: f64) -> Result<Self> {
        let (s, a, s2) = transitions.dim();
        if s == 0 || a == 0 || s2 != s {
            return Err(Error::ShapeMismatch(format!("transition tensor {:?}", transitions.dim())));
        }
        if rewards.dim() != (s, a) {
            return Err(Error::ShapeMismatch(format!("reward table {:?}", rewards.dim())));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::invalid(format!("discount {gamma} outside (0, 1)")));
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::invalid("rewards must be finite"));
        }
        for row in transitions.lanes(Axis(2)) {
            if row.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::invalid("transition probabilities must be nonnegative"));
            }
            if (row.sum() - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("transition row sums to {}", row.sum())));
            }
        }
        Ok(Self {
            transitions,
            rewards,
            gamma,
        })
    }

    /// One state, `k` self-looping actions paying zero: every true value is 0.
    pub fn noisy_bandit(k: usize, gamma: f64) -> Result<Self> {
        Self::new(Array3::ones((1, k, 1)), Array2::zeros((1, k)), gamma)
    }

    /// One state whose actions self-loop with the given rewards.
    pub fn self_loop(rewards: &[f64], gamma: f64) -> Result<Self> {
        let k = rewards.len();
        let r = Array2::from_shape_vec((1, k), rewards.to_vec()).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Self::new(Array3::ones((1, k, 1)), r, gamma)
    }

    /// Dirichlet(1, …, 1) transition rows and rewards uniform in `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(states: usize, actions: usize, gamma: f64, rng: &mut R) -> Result<Self> {
        let mut p = Array3::zeros((states, actions, states));
        for mut row in p.lanes_mut(Axis(2)) {
            row.mapv_inplace(|_| rng.sample::<f64, _>(Exp1));
            let total = row.sum();
            row /= total;
            // Put the rounding residue on the last entry so the row sums to 1.
            let drift = 1.0 - row.sum();
            row[states - 1] += drift;
            if row[states - 1] < 0.0 {
                row[states - 1] = 0.0;
            }
        }
        let r = Array2::from_shape_fn((states, actions), |_| rng.gen_range(-1.0..1.0));
        Self::new(p, r, gamma)
    }

    pub fn states(&self) -> usize {
        self.rewards.nrows()
    }

    pub fn actions(&self) -> usize {
        self.rewards.ncols()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rewards(&self) -> &Array2<f64> {
        &self.rewards
    }

    pub fn transitions(&self) -> &Array3<f64> {
        &self.transitions
    }

    /// Plain-text form: a `S A gamma` header, then `S` reward rows of `A`
    /// values, then `S·A` transition rows of `S` values in `(s, a)` order.
    /// Numbers use Rust's shortest round-trip formatting.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} {:?}", self.states(), self.actions(), self.gamma);
        let line = |v: ArrayView1<f64>| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        for row in self.rewards.rows() {
            let _ = writeln!(out, "{}", line(row));
        }
        for row in self.transitions.lanes(Axis(2)) {
            let _ = writeln!(out, "{}", line(row));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let parse_row = |(no, line): (usize, &str), want: usize| -> Result<Vec<f64>> {
            let vals: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
            let vals = vals.map_err(|e| Error::Parse {
                line: no + 1,
                message: e.to_string(),
            })?;
            if vals.len() != want {
                return Err(Error::Parse {
                    line: no + 1,
                    message: format!("expected {want} values, found {}", vals.len()),
                });
            }
            Ok(vals)
        };
        let (no, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let bad_header = || Error::Parse {
            line: no + 1,
            message: "header must be `S A gamma`".into(),
        };
        if fields.len() != 3 {
            return Err(bad_header());
        }
        let s: usize = fields[0].parse().map_err(|_| bad_header())?;
        let a: usize = fields[1].parse().map_err(|_| bad_header())?;
        let gamma: f64 = fields[2].parse().map_err(|_| bad_header())?;
        let mut rewards = Vec::with_capacity(s * a);
        for _ in 0..s {
            let l = lines.next().ok_or(Error::Parse {
                line: no + 1,
                message: "missing reward rows".into(),
            })?;
            rewards.extend(parse_row(l, a)?);
        }
        let mut probs = Vec::with_capacity(s * a * s);
        for _ in 0..s * a {
            let l = lines.next().ok_or(Error::Parse {
                line: no + 1,
                message: "missing transition rows".into(),
            })?;
            probs.extend(parse_row(l, s)?);
        }
        let p = Array3::from_shape_vec((s, a, s), probs).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let r = Array2::from_shape_vec((s, a), rewards).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Self::new(p, r, gamma)
    }

    fn check_q(&self, q: &QTable) -> Result<()> {
        if q.dim() != self.rewards.dim() {
            return Err(Error::ShapeMismatch(format!(
                "Q table {:?} for an MDP with {:?}",
                q.dim(),
                self.rewards.dim()
            )));
        }
        Ok(())
    }

    /// `R + γ·P·next_value`, for a per-state next value.
    fn backup(&self, next_value: &[f64]) -> QTable {
        let (ns, na) = self.rewards.dim();
        Array2::from_shape_fn((ns, na), |(s, a)| {
            let expected: f64 = (0..ns).map(|s2| self.transitions[[s, a, s2]] * next_value[s2]).sum();
            self.rewards[[s, a]] + self.gamma * expected
        })
    }
}

fn row_max(q: &QTable) -> Vec<f64> {
    q.rows().into_iter().map(|r| r.fold(f64::NEG_INFINITY, |m, &v| m.max(v))).collect()
}

fn row_min(q: &QTable) -> Vec<f64> {
    q.rows().into_iter().map(|r| r.fold(f64::INFINITY, |m, &v| m.min(v))).collect()
}

fn sup_norm_diff(a: &QTable, b: &QTable) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// One application of the moderate operator with the exact per-state minimum.
pub fn moderate_bellman_apply(m: &MdpTable, q: &QTable, omega: CautiousWeight) -> Result<QTable> {
    m.check_q(q)?;
    let w = omega.get();
    let next: Vec<f64> = row_max(q)
        .into_iter()
        .zip(row_min(q))
        .map(|(hi, lo)| (1.0 - w) * hi + w * lo)
        .collect();
    Ok(m.backup(&next))
}

/// The classical optimality operator `R + γ·P·max_a' Q`.
pub fn optimality_apply(m: &MdpTable, q: &QTable) -> Result<QTable> {
    m.check_q(q)?;
    Ok(m.backup(&row_max(q)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContractionCheck {
    /// `‖T_m Q₁ − T_m Q₂‖∞`
    pub lhs: f64,
    /// `γ·‖Q₁ − Q₂‖∞`
    pub rhs: f64,
    pub holds: bool,
}

pub fn contraction_check(m: &MdpTable, q1: &QTable, q2: &QTable, omega: CautiousWeight) -> Result<ContractionCheck> {
    let t1 = moderate_bellman_apply(m, q1, omega)?;
    let t2 = moderate_bellman_apply(m, q2, omega)?;
    let lhs = sup_norm_diff(&t1, &t2);
    let rhs = m.gamma * sup_norm_diff(q1, q2);
    Ok(ContractionCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-10,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPoint {
    pub q: QTable,
    pub iterations: usize,
}

/// Iterates `T_m` from `start` until successive iterates differ by less than
/// `tol·(1 − γ)/γ`, which bounds the Bellman residual of the result by `tol`.
pub fn fixed_point_from(m: &MdpTable, omega: CautiousWeight, tol: f64, start: QTable) -> Result<FixedPoint> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    m.check_q(&start)?;
    let stop = tol * (1.0 - m.gamma) / m.gamma;
    let mut q = start;
    let mut iterations = 0;
    loop {
        let next = moderate_bellman_apply(m, &q, omega)?;
        iterations += 1;
        let delta = sup_norm_diff(&next, &q);
        q = next;
        if delta < stop {
            return Ok(FixedPoint { q, iterations });
        }
    }
}

pub fn fixed_point(m: &MdpTable, omega: CautiousWeight, tol: f64) -> Result<FixedPoint> {
    fixed_point_from(m, omega, tol, Array2::zeros(m.rewards.dim()))
}

/// Textbook value iteration on `V`, returning `Q* = R + γ·P·V*`.
pub fn value_iteration(m: &MdpTable, tol: f64) -> QTable {
    let mut v = vec![0.0; m.states()];
    loop {
        let q = m.backup(&v);
        let next = row_max(&q);
        let delta = next.iter().zip(&v).fold(0.0f64, |d, (a, b)| d.max((a - b).abs()));
        v = next;
        if delta < tol * (1.0 - m.gamma) {
            return m.backup(&v);
        }
    }
}

/// Exact `Q^π` from `(I − γ·P_π)·q = r` over state-action pairs.
pub fn policy_eval_exact(m: &MdpTable, policy: &Array2<f64>) -> Result<QTable> {
    let (ns, na) = m.rewards.dim();
    if policy.dim() != (ns, na) {
        return Err(Error::ShapeMismatch(format!("policy {:?}", policy.dim())));
    }
    for row in policy.rows() {
        if row.iter().any(|&p| p < 0.0) || (row.sum() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("policy rows must be distributions"));
        }
    }
    let n = ns * na;
    let mut a = DMatrix::<f64>::identity(n, n);
    for s in 0..ns {
        for act in 0..na {
            let i = s * na + act;
            for s2 in 0..ns {
                let p = m.transitions[[s, act, s2]];
                if p == 0.0 {
                    continue;
                }
                for a2 in 0..na {
                    a[(i, s2 * na + a2)] -= m.gamma * p * policy[[s2, a2]];
                }
            }
        }
    }
    let b = DVector::from_iterator(n, m.rewards.iter().copied());
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::invalid("policy evaluation system is singular"))?;
    Ok(Array2::from_shape_vec((ns, na), x.iter().copied().collect()).expect("shape"))
}

/// Next-state value estimators compared by [`bias_probe`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProbeEstimator {
    /// `max_a Q̃₁(a)`
    Greedy,
    /// `Q̃₁(argmax_a Q̃₂(a))`
    Double,
    /// `min(Q̃₁(a*), Q̃₂(a*))` with `a* = argmax_a Q̃₁(a)`
    Min,
    /// `(1 − ω)·max_a Q̃₁(a) + ω·expectile_τ({Q̃₁(a)})`
    Moderate { omega: CautiousWeight, tau: ExpectileLevel },
}

impl ProbeEstimator {
    pub fn parse(name: &str, omega: f64, tau: f64) -> Result<Self> {
        Ok(match name {
            "greedy" => Self::Greedy,
            "double" => Self::Double,
            "min" => Self::Min,
            "moderate" => Self::Moderate {
                omega: CautiousWeight::new(omega)?,
                tau: ExpectileLevel::new(tau)?,
            },
            other => return Err(Error::invalid(format!("unknown estimator `{other}`"))),
        })
    }

    pub fn name(&self) -> String {
        match self {
            Self::Greedy => "greedy".into(),
            Self::Double => "double".into(),
            Self::Min => "min".into(),
            Self::Moderate { omega, tau } => format!("moderate(omega={}, tau={})", omega.get(), tau.get()),
        }
    }

    fn estimate(&self, q1: &[f64], q2: &[f64]) -> f64 {
        let argmax = |q: &[f64]| {
            q.iter()
                .enumerate()
                .fold(0, |best, (i, &v)| if v > q[best] { i } else { best })
        };
        match *self {
            Self::Greedy => q1[argmax(q1)],
            Self::Double => q1[argmax(q2)],
            Self::Min => {
                let a = argmax(q1);
                q1[a].min(q2[a])
            }
            Self::Moderate { omega, tau } => {
                let w = omega.get();
                let low = scalar_expectile(q1, tau).expect("non-empty action set");
                (1.0 - w) * q1[argmax(q1)] + w * low
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiasEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub trials: usize,
}

/// Bias of an estimator of `max_a Q*(s, a)` when it only sees noisy copies
/// `Q̃ = Q* + N(0, σ²)` (independent noise per copy, action and trial).
///
/// `Q*` is the fixed point of the classical operator. Each trial averages the
/// error over all states.
pub fn bias_probe(
    m: &MdpTable,
    noise_std: f64,
    trials: usize,
    estimator: ProbeEstimator,
    seed: u64,
) -> Result<BiasEstimate> {
    if trials == 0 {
        return Err(Error::invalid("bias probe needs at least one trial"));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::invalid("noise std must be nonnegative"));
    }
    let q_star = value_iteration(m, 1e-12);
    let best = row_max(&q_star);
    let na = m.actions();
    let mut rng = stream_rng(seed, 0xb1a5, 0);
    let mut q1 = vec![0.0; na];
    let mut q2 = vec![0.0; na];
    let (mut sum, mut sum2) = (0.0, 0.0);
    for _ in 0..trials {
        let mut err = 0.0;
        for (s, row) in q_star.rows().into_iter().enumerate() {
            for a in 0..na {
                q1[a] = row[a] + noise_std * rng.sample::<f64, _>(StandardNormal);
                q2[a] = row[a] + noise_std * rng.sample::<f64, _>(StandardNormal);
            }
            err += estimator.estimate(&q1, &q2) - best[s];
        }
        err /= m.states() as f64;
        sum += err;
        sum2 += err * err;
    }
    let n = trials as f64;
    let mean = sum / n;
    let var = if trials > 1 { (sum2 - n * mean * mean).max(0.0) / (n - 1.0) } else { 0.0 };
    Ok(BiasEstimate {
        mean,
        std_err: (var / n).sqrt(),
        trials,
    })
}

/// Outcome of one brute-force check in [`verify_suite`].
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteCheck {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Largest violation seen, in the check's own units.
    pub worst: f64,
}

impl SuiteCheck {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn random_q<R: Rng + ?Sized>(m: &MdpTable, scale: f64, rng: &mut R) -> QTable {
    Array2::from_shape_fn((m.states(), m.actions()), |_| rng.gen_range(-scale..scale))
}

/// Randomized checks of the moderate operator: contraction on `trials`
/// instances, the two-action self-loop fixed point, agreement with value
/// iteration at `ω = 0`, and monotonicity of the fixed point in `ω`.
pub fn verify_suite(trials: usize, seed: u64) -> Result<Vec<SuiteCheck>> {
    let mut rng = stream_rng(seed, 0x7ab1, 0);
    let mut out = Vec::new();

    let mut c = SuiteCheck { name: "contraction", cases: trials, failures: 0, worst: f64::NEG_INFINITY };
    for _ in 0..trials {
        let (ns, na) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let m = MdpTable::random(ns, na, rng.gen_range(0.01..0.999), &mut rng)?;
        let q1 = random_q(&m, 10.0, &mut rng);
        let q2 = random_q(&m, 10.0, &mut rng);
        let check = contraction_check(&m, &q1, &q2, CautiousWeight::new(rng.gen_range(0.0..=1.0))?)?;
        c.worst = c.worst.max(check.lhs - check.rhs);
        c.failures += usize::from(!check.holds);
    }
    out.push(c);

    let omegas = [0.0, 0.13, 0.2, 1.0];
    let mut c = SuiteCheck { name: "self-loop fixed point", cases: omegas.len(), failures: 0, worst: 0.0 };
    let m = MdpTable::self_loop(&[1.0, 0.0], 0.5)?;
    for &omega in &omegas {
        let fp = fixed_point(&m, CautiousWeight::new(omega)?, 1e-12)?;
        let err = (fp.q[[0, 0]] - (2.0 - omega)).abs().max((fp.q[[0, 1]] - (1.0 - omega)).abs());
        c.worst = c.worst.max(err);
        c.failures += usize::from(err > 1e-8);
    }
    out.push(c);

    let cases = trials.clamp(1, 100);
    let mut eq = SuiteCheck { name: "omega = 0 matches value iteration", cases, failures: 0, worst: 0.0 };
    let mut mono = SuiteCheck { name: "fixed point decreases in omega", cases, failures: 0, worst: 0.0 };
    for _ in 0..cases {
        let m = MdpTable::random(rng.gen_range(1..=6), rng.gen_range(1..=6), rng.gen_range(0.1..0.95), &mut rng)?;
        let vi = value_iteration(&m, 1e-12);
        let fp0 = fixed_point(&m, CautiousWeight::new(0.0)?, 1e-12)?;
        let err = (&fp0.q - &vi).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        eq.worst = eq.worst.max(err);
        eq.failures += usize::from(err > 1e-8);
        let fp_half = fixed_point(&m, CautiousWeight::new(0.5)?, 1e-12)?;
        let rise = (&fp_half.q - &fp0.q).iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        mono.worst = mono.worst.max(rise);
        mono.failures += usize::from(rise > 1e-9);
    }
    out.push(eq);
    out.push(mono);
    Ok(out)
}
