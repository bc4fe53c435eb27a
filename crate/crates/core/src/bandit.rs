//! Multi-armed bandits over a fixed set of permutation bundles.
//!
//! Arms are indexed from 0. Rewards are Bernoulli: an arm pays 1 when one
//! of its permutations yields a CRC-valid decode.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::permutation::{random_stage_permutation, StagePermutation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BanditAlgo {
    #[serde(rename = "eps-greedy")]
    EpsGreedy,
    #[serde(rename = "ucb")]
    Ucb,
    #[serde(rename = "ts")]
    Thompson,
}

impl fmt::Display for BanditAlgo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::EpsGreedy => "eps-greedy",
            Self::Ucb => "ucb",
            Self::Thompson => "ts",
        })
    }
}

impl FromStr for BanditAlgo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eps-greedy" | "epsilon-greedy" | "egreedy" => Ok(Self::EpsGreedy),
            "ucb" => Ok(Self::Ucb),
            "ts" | "thompson" => Ok(Self::Thompson),
            _ => Err(Error::InvalidBandit(format!("unknown algorithm {s:?}"))),
        }
    }
}

/// Thompson-sampling posterior update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TsUpdate {
    /// Beta-Bernoulli conjugate update: `α += R`, `β += 1 - R`.
    #[default]
    Standard,
    /// `α += R`, `β += R`. Kept for comparison only; `β` never grows on a
    /// failure, so the posterior cannot concentrate below 1/2.
    Literal,
}

impl fmt::Display for TsUpdate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Standard => "standard",
            Self::Literal => "literal",
        })
    }
}

impl FromStr for TsUpdate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "literal" => Ok(Self::Literal),
            _ => Err(Error::InvalidBandit(format!("unknown Thompson update {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BanditConfig {
    pub algo: BanditAlgo,
    pub epsilon: f64,
    pub c: f64,
    /// Number of arms.
    pub k: usize,
    /// Permutations per frame including `π_0`; each arm holds `M - 1`.
    #[serde(rename = "M")]
    pub m: usize,
    pub ts_update: TsUpdate,
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self {
            algo: BanditAlgo::EpsGreedy,
            epsilon: 1.0 / 16.0,
            c: 1.0 / 8.0,
            k: 500,
            m: 7,
            ts_update: TsUpdate::Standard,
        }
    }
}

impl BanditConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidBandit("k must be at least 1".into()));
        }
        if self.m < 2 {
            return Err(Error::InvalidBandit(format!("M = {} must exceed 1", self.m)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidBandit(format!("epsilon = {} outside [0, 1]", self.epsilon)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidBandit(format!("c = {} must be positive", self.c)));
        }
        Ok(())
    }
}

/// Per-arm learner statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditState {
    pub algo: BanditAlgo,
    pub epsilon: f64,
    pub c: f64,
    pub ts_update: TsUpdate,
    /// Number of updates applied so far.
    pub t: u64,
    /// Running mean reward per arm.
    pub q: Vec<f64>,
    /// Pull count per arm.
    pub pulls: Vec<u64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl BanditState {
    pub fn new(cfg: &BanditConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            algo: cfg.algo,
            epsilon: cfg.epsilon,
            c: cfg.c,
            ts_update: cfg.ts_update,
            t: 0,
            q: vec![0.0; cfg.k],
            pulls: vec![0; cfg.k],
            alpha: vec![1.0; cfg.k],
            beta: vec![1.0; cfg.k],
        })
    }

    pub fn arms(&self) -> usize {
        self.q.len()
    }

    /// Picks an arm. Never mutates the state; all randomness comes from
    /// `rng`.
    pub fn select_action<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let k = self.arms();
        match self.algo {
            BanditAlgo::EpsGreedy => {
                let explore = rng.random::<f64>() < self.epsilon;
                if explore {
                    rng.random_range(0..k)
                } else {
                    argmax(self.q.iter().copied())
                }
            }
            BanditAlgo::Ucb => {
                if let Some(j) = self.pulls.iter().position(|&n| n == 0) {
                    return j;
                }
                let ln_t = (self.t.max(1) as f64).ln();
                argmax(
                    self.q
                        .iter()
                        .zip(&self.pulls)
                        .map(|(&q, &n)| q + self.c * (ln_t / n as f64).sqrt()),
                )
            }
            BanditAlgo::Thompson => argmax(self.alpha.iter().zip(&self.beta).map(|(&a, &b)| {
                Beta::new(a, b).expect("shape parameters stay >= 1").sample(rng)
            })),
        }
    }

    /// Applies reward `reward ∈ {0, 1}` to arm `j`.
    pub fn update(&mut self, j: usize, reward: u8) -> Result<()> {
        if reward > 1 {
            return Err(Error::InvalidReward(reward));
        }
        if j >= self.arms() {
            return Err(Error::InvalidBandit(format!("arm {j} out of range 0..{}", self.arms())));
        }
        let r = f64::from(reward);
        self.t += 1;
        self.pulls[j] += 1;
        self.q[j] += (r - self.q[j]) / self.pulls[j] as f64;
        if self.algo == BanditAlgo::Thompson {
            self.alpha[j] += r;
            self.beta[j] += match self.ts_update {
                TsUpdate::Standard => 1.0 - r,
                TsUpdate::Literal => r,
            };
        }
        Ok(())
    }

    /// Posterior mean `α / (α + β)` of arm `j`.
    pub fn posterior_mean(&self, j: usize) -> f64 {
        self.alpha[j] / (self.alpha[j] + self.beta[j])
    }
}

/// Index of the largest value; ties go to the lowest index.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// One arm: `M - 1` distinct non-identity stage permutations, tried in
/// stored order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Action {
    perms: Vec<StagePermutation>,
}

impl Action {
    pub fn new(perms: Vec<StagePermutation>) -> Result<Self> {
        if perms.is_empty() {
            return Err(Error::InvalidBandit("an action needs at least one permutation".into()));
        }
        for (i, p) in perms.iter().enumerate() {
            if p.is_identity() {
                return Err(Error::InvalidBandit("an action may not contain the identity".into()));
            }
            if perms[..i].contains(p) {
                return Err(Error::InvalidBandit(format!("permutation {p} repeated within an action")));
            }
        }
        Ok(Self { perms })
    }

    pub fn perms(&self) -> &[StagePermutation] {
        &self.perms
    }
}

/// `C(n! - 1, M - 1)`, the number of distinct actions.
pub fn k_max(n: usize, m: usize) -> Result<u128> {
    if n < 2 || m < 2 {
        return Err(Error::InvalidBandit(format!("k_max needs n >= 2 and M >= 2 (n = {n}, M = {m})")));
    }
    let overflow = || Error::Overflow { n, m };
    let fact = (2..=n as u128).try_fold(1u128, |acc, i| acc.checked_mul(i)).ok_or_else(overflow)?;
    binomial(fact - 1, (m - 1) as u128).ok_or_else(overflow)
}

fn binomial(a: u128, b: u128) -> Option<u128> {
    if b > a {
        return Some(0);
    }
    let b = b.min(a - b);
    let mut acc = 1u128;
    for i in 0..b {
        // acc * (a - i) is divisible by (i + 1).
        acc = acc.checked_mul(a - i)? / (i + 1);
    }
    Some(acc)
}

/// Draws `k` actions of `M - 1` non-identity permutations each. Draws are
/// independent across actions; a permutation repeated within one action is
/// redrawn.
pub fn build_action_set<R: Rng + ?Sized>(n: usize, k: usize, m: usize, rng: &mut R) -> Result<Vec<Action>> {
    if m < 2 {
        return Err(Error::InvalidBandit(format!("M = {m} must exceed 1")));
    }
    if k == 0 {
        return Err(Error::InvalidBandit("k must be at least 1".into()));
    }
    match k_max(n, m) {
        Ok(limit) if (k as u128) > limit => {
            return Err(Error::InvalidBandit(format!("k = {k} exceeds k_max = {limit} for n = {n}, M = {m}")));
        }
        Ok(_) | Err(Error::Overflow { .. }) => {}
        Err(e) => return Err(e),
    }
    (0..k)
        .map(|_| {
            let mut perms: Vec<StagePermutation> = Vec::with_capacity(m - 1);
            while perms.len() < m - 1 {
                let p = random_stage_permutation(n, rng, true)?;
                if !perms.contains(&p) {
                    perms.push(p);
                }
            }
            Action::new(perms)
        })
        .collect()
}
