//! Bandit-driven permutation decoding and the fixed-schedule baselines.
//!
//! Every scheme first decodes on the unpermuted graph. Only when that
//! attempt fails does a scheme spend further attempts on permuted graphs:
//! the bandit decoder picks a learned bundle, CP walks the cyclic stage
//! rotations, RP draws fresh random orders.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::{Action, BanditConfig, BanditState};
use crate::bp::{BpConfig, CabpDecoder, DecodeOutcome};
use crate::error::{Error, Result};
use crate::permutation::{cyclic_shift_set, random_stage_permutation, StagePermutation};
use crate::polar::PolarCode;
use crate::rng::{stream_rng, SimRng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Unpermuted graph only.
    Cabp,
    /// Cyclic stage rotations, identity first.
    CpCabp,
    /// Identity, then `M - 1` random non-identity orders drawn per frame.
    RpCabp,
    /// Identity, then a bandit-selected bundle.
    RlCabp,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cabp => "cabp",
            Self::CpCabp => "cp-cabp",
            Self::RpCabp => "rp-cabp",
            Self::RlCabp => "rl-cabp",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cabp" => Ok(Self::Cabp),
            "cp-cabp" => Ok(Self::CpCabp),
            "rp-cabp" => Ok(Self::RpCabp),
            "rl-cabp" => Ok(Self::RlCabp),
            _ => Err(Error::InvalidDecoderConfig(format!(
                "unknown decoder {s:?} (expected cabp, cp-cabp, rp-cabp or rl-cabp)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RlDecodeRecord {
    pub outcome: DecodeOutcome,
    /// The first attempt failed and the bandit chose an action.
    pub used_bandit: bool,
    pub action_id: Option<usize>,
    pub reward: Option<u8>,
    /// CABP invocations, first attempt included.
    pub attempts: usize,
    /// BP iterations summed over all attempts.
    pub total_iterations: usize,
    /// Bandit time step after this frame.
    pub time_step_after: u64,
}

/// Tries the permutations of `action` in stored order after a failed first
/// attempt, stopping at the first CRC-valid word. Returns the last outcome,
/// the number of extra attempts and the iterations they used.
pub fn retry_with_action<F>(action: &Action, mut decode: F) -> Result<(DecodeOutcome, usize, usize)>
where
    F: FnMut(&StagePermutation) -> Result<DecodeOutcome>,
{
    let mut extra = 0;
    let mut iterations = 0;
    let mut last = None;
    for p in action.perms() {
        let out = decode(p)?;
        extra += 1;
        iterations += out.iterations_used;
        let ok = out.crc_ok;
        last = Some(out);
        if ok {
            break;
        }
    }
    Ok((last.expect("actions are non-empty"), extra, iterations))
}

/// One frame of bandit-driven decoding. The action is selected only after
/// the first attempt fails, so a successful frame consumes nothing from
/// `rng` and leaves `state` untouched.
pub fn rl_cabp_decode<R: Rng + ?Sized>(
    llr: &[f64],
    actions: &[Action],
    state: &mut BanditState,
    decoder: &mut CabpDecoder,
    rng: &mut R,
) -> Result<RlDecodeRecord> {
    check_actions(actions, state, decoder.code())?;
    let first = decoder.decode(llr, &StagePermutation::identity(decoder.code().stages()))?;
    if first.crc_ok {
        return Ok(first_attempt_record(first, state.t));
    }
    let j = state.select_action(rng);
    finish_with_action(llr, actions, j, first, Some(state), decoder)
}

fn check_actions(actions: &[Action], state: &BanditState, code: &PolarCode) -> Result<()> {
    if actions.len() != state.arms() {
        return Err(Error::InvalidBandit(format!(
            "{} actions for a bandit with {} arms",
            actions.len(),
            state.arms()
        )));
    }
    if let Some(bad) = actions.iter().flat_map(|a| a.perms()).find(|p| p.stages() != code.stages()) {
        return Err(Error::InvalidPermutation(format!(
            "action permutation {bad} does not match a code with {} stages",
            code.stages()
        )));
    }
    Ok(())
}

fn first_attempt_record(first: DecodeOutcome, t: u64) -> RlDecodeRecord {
    RlDecodeRecord {
        total_iterations: first.iterations_used,
        outcome: first,
        used_bandit: false,
        action_id: None,
        reward: None,
        attempts: 1,
        time_step_after: t,
    }
}

/// Runs arm `j` after a failed first attempt and, when `state` is given,
/// feeds the reward back.
fn finish_with_action(
    llr: &[f64],
    actions: &[Action],
    j: usize,
    first: DecodeOutcome,
    state: Option<&mut BanditState>,
    decoder: &mut CabpDecoder,
) -> Result<RlDecodeRecord> {
    let (outcome, extra, iterations) = retry_with_action(&actions[j], |p| decoder.decode(llr, p))?;
    let reward = u8::from(outcome.crc_ok);
    let time_step_after = match state {
        Some(s) => {
            s.update(j, reward)?;
            s.t
        }
        None => 0,
    };
    Ok(RlDecodeRecord {
        outcome,
        used_bandit: true,
        action_id: Some(j),
        reward: Some(reward),
        attempts: 1 + extra,
        total_iterations: first.iterations_used + iterations,
        time_step_after,
    })
}

/// Whether the learner keeps updating while it decodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerMode {
    /// Updates after every bandit invocation.
    #[default]
    Continue,
    /// Selects from its current statistics but never updates them.
    Frozen,
}

impl fmt::Display for LearnerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Continue => "continue",
            Self::Frozen => "frozen",
        })
    }
}

impl FromStr for LearnerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continue" => Ok(Self::Continue),
            "frozen" => Ok(Self::Frozen),
            _ => Err(Error::InvalidBandit(format!("unknown learner mode {s:?}"))),
        }
    }
}

/// A bandit with its own seeded selection randomness.
///
/// Selection `d` draws from a substream keyed on `d`, so choosing an arm is
/// a pure function of the statistics and the number of earlier selections.
/// An arm may therefore be picked before the first attempt finishes and
/// discarded on success without perturbing later choices.
#[derive(Debug, Clone)]
pub struct Learner {
    state: BanditState,
    seed: u64,
    draws: u64,
    mode: LearnerMode,
    trace: Vec<u8>,
}

impl Learner {
    pub fn new(cfg: &BanditConfig, seed: u64, mode: LearnerMode) -> Result<Self> {
        Ok(Self {
            state: BanditState::new(cfg)?,
            seed,
            draws: 0,
            mode,
            trace: Vec::new(),
        })
    }

    pub fn state(&self) -> &BanditState {
        &self.state
    }

    pub fn mode(&self) -> LearnerMode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: LearnerMode) {
        self.mode = mode;
    }

    /// Rewards in invocation order.
    pub fn trace(&self) -> &[u8] {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.trace)
    }

    /// Bandit invocations so far, frozen ones included.
    pub fn invocations(&self) -> u64 {
        self.draws
    }

    fn selection_rng(&self) -> SimRng {
        stream_rng(self.seed, Stream::Bandit, self.draws, 0)
    }

    /// The arm the next invocation will play.
    pub fn peek_action(&self) -> usize {
        self.state.select_action(&mut self.selection_rng())
    }

    /// Reserves the next selection: returns [`peek_action`](Self::peek_action)
    /// and advances the selection counter.
    pub fn take_action(&mut self) -> usize {
        let j = self.peek_action();
        self.draws += 1;
        j
    }

    /// Records the reward for arm `j`, updating the statistics unless
    /// frozen.
    pub fn record(&mut self, j: usize, reward: u8) -> Result<()> {
        if self.mode == LearnerMode::Continue {
            self.state.update(j, reward)?;
        } else if reward > 1 {
            return Err(Error::InvalidReward(reward));
        }
        self.trace.push(reward);
        Ok(())
    }

    /// Decodes one frame, selecting lazily.
    pub fn decode(&mut self, llr: &[f64], actions: &[Action], decoder: &mut CabpDecoder) -> Result<RlDecodeRecord> {
        check_actions(actions, &self.state, decoder.code())?;
        let first = decoder.decode(llr, &StagePermutation::identity(decoder.code().stages()))?;
        self.continue_after(llr, actions, first, decoder)
    }

    /// Decodes one frame with the arm chosen before the first attempt, as a
    /// latency-hiding schedule would.
    pub fn decode_eager(&mut self, llr: &[f64], actions: &[Action], decoder: &mut CabpDecoder) -> Result<RlDecodeRecord> {
        check_actions(actions, &self.state, decoder.code())?;
        let j = self.peek_action();
        let first = decoder.decode(llr, &StagePermutation::identity(decoder.code().stages()))?;
        if first.crc_ok {
            return Ok(first_attempt_record(first, self.state.t));
        }
        let rec = self.play(llr, actions, first, decoder)?;
        debug_assert_eq!(rec.action_id, Some(j));
        Ok(rec)
    }

    /// Second half of [`decode`](Self::decode) for callers that ran the
    /// first attempt themselves.
    pub fn continue_after(
        &mut self,
        llr: &[f64],
        actions: &[Action],
        first: DecodeOutcome,
        decoder: &mut CabpDecoder,
    ) -> Result<RlDecodeRecord> {
        if first.crc_ok {
            return Ok(first_attempt_record(first, self.state.t));
        }
        self.play(llr, actions, first, decoder)
    }

    fn play(
        &mut self,
        llr: &[f64],
        actions: &[Action],
        first: DecodeOutcome,
        decoder: &mut CabpDecoder,
    ) -> Result<RlDecodeRecord> {
        let j = self.take_action();
        let mut rec = finish_with_action(llr, actions, j, first, None, decoder)?;
        self.record(j, rec.reward.expect("bandit was used"))?;
        rec.time_step_after = self.state.t;
        Ok(rec)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub outcome: DecodeOutcome,
    pub attempts: usize,
    pub total_iterations: usize,
}

/// A fixed-schedule decoder: CABP, CP-CABP or RP-CABP.
#[derive(Debug, Clone)]
pub struct BaselineDecoder {
    scheme: Scheme,
    m: usize,
    decoder: CabpDecoder,
    cyclic: Vec<StagePermutation>,
}

impl BaselineDecoder {
    /// `m` is the per-frame attempt budget for RP-CABP, identity included.
    pub fn new(scheme: Scheme, code: &PolarCode, cfg: BpConfig, m: usize) -> Result<Self> {
        if scheme == Scheme::RlCabp {
            return Err(Error::InvalidDecoderConfig("rl-cabp is not a fixed-schedule scheme".into()));
        }
        if scheme == Scheme::RpCabp {
            if m < 2 {
                return Err(Error::InvalidDecoderConfig(format!("RP-CABP needs M >= 2, got {m}")));
            }
            let orders = (2..=code.stages() as u128).try_fold(1u128, |a, i| a.checked_mul(i));
            if orders.is_some_and(|f| f - 1 < (m - 1) as u128) {
                return Err(Error::InvalidDecoderConfig(format!(
                    "{} stages give fewer than M - 1 = {} non-identity orders",
                    code.stages(),
                    m - 1
                )));
            }
        }
        Ok(Self {
            scheme,
            m,
            decoder: CabpDecoder::new(code, cfg)?,
            cyclic: cyclic_shift_set(code.stages()),
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Decodes one frame. Only RP-CABP reads `rng`, and only after the first
    /// attempt fails.
    pub fn decode<R: Rng + ?Sized>(&mut self, llr: &[f64], rng: &mut R) -> Result<BaselineRecord> {
        let n = self.decoder.code().stages();
        let first = self.decoder.decode(llr, &StagePermutation::identity(n))?;
        let mut rec = BaselineRecord {
            attempts: 1,
            total_iterations: first.iterations_used,
            outcome: first,
        };
        if rec.outcome.crc_ok {
            return Ok(rec);
        }
        match self.scheme {
            Scheme::Cabp | Scheme::RlCabp => {}
            Scheme::CpCabp => {
                for p in &self.cyclic[1..] {
                    if attempt(&mut self.decoder, llr, p, &mut rec)? {
                        break;
                    }
                }
            }
            Scheme::RpCabp => {
                let mut tried: Vec<StagePermutation> = Vec::with_capacity(self.m - 1);
                while tried.len() < self.m - 1 {
                    let p = random_stage_permutation(n, rng, true)?;
                    if tried.contains(&p) {
                        continue;
                    }
                    let ok = attempt(&mut self.decoder, llr, &p, &mut rec)?;
                    tried.push(p);
                    if ok {
                        break;
                    }
                }
            }
        }
        Ok(rec)
    }

}

fn attempt(decoder: &mut CabpDecoder, llr: &[f64], p: &StagePermutation, rec: &mut BaselineRecord) -> Result<bool> {
    let out = decoder.decode(llr, p)?;
    rec.attempts += 1;
    rec.total_iterations += out.iterations_used;
    let ok = out.crc_ok;
    rec.outcome = out;
    Ok(ok)
}

/// One-shot fixed-schedule decode; allocates a fresh decoder.
pub fn baseline_decode<R: Rng + ?Sized>(
    llr: &[f64],
    scheme: Scheme,
    code: &PolarCode,
    cfg: &BpConfig,
    m: usize,
    rng: &mut R,
) -> Result<BaselineRecord> {
    BaselineDecoder::new(scheme, code, *cfg, m)?.decode(llr, rng)
}
