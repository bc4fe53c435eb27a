//! Monte-Carlo campaigns: FER sweeps, bandit parameter studies and result
//! files.
//!
//! Frame `i` at a given Eb/N0 always carries the same payload and noise, so
//! schemes run with one base seed see identical channel realizations.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::bandit::{build_action_set, Action, BanditAlgo, BanditConfig};
use crate::bp::{BpConfig, CabpDecoder, DecodeOutcome};
use crate::channel::{ChannelConfig, RateConvention};
use crate::error::{Error, Result};
use crate::permutation::StagePermutation;
use crate::polar::{CrcPoly, FrozenSource, PolarCode};
use crate::rl::{retry_with_action, BaselineDecoder, Learner, LearnerMode, Scheme};
use crate::rng::{derive_seed, stream_rng, Stream};

/// Overrides the default output directory.
pub const OUTPUT_DIR_ENV: &str = "RLCABP_OUTPUT_DIR";

/// Mixed into the frame key of pretraining frames so they never coincide
/// with evaluation frames at the same Eb/N0.
const PRETRAIN_SALT: u64 = 0x7072_6574_7261_696e;

pub fn version_stamp() -> String {
    format!("rlcabp {}", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodeSpec {
    /// Number of stages; `N = 2^n`.
    pub n: usize,
    /// Information bits, CRC included.
    pub k: usize,
    pub crc: CrcPoly,
    /// Reliability order, least reliable first. Defaults to the NR sequence.
    pub reliability_file: Option<PathBuf>,
    /// Explicit frozen set; overrides `reliability_file`.
    pub frozen_file: Option<PathBuf>,
}

impl Default for CodeSpec {
    fn default() -> Self {
        Self {
            n: 7,
            k: 64,
            crc: CrcPoly::NR16,
            reliability_file: None,
            frozen_file: None,
        }
    }
}

impl CodeSpec {
    pub fn build(&self) -> Result<PolarCode> {
        let source = match (&self.frozen_file, &self.reliability_file) {
            (Some(f), _) => FrozenSource::frozen_file(f)?,
            (None, Some(r)) => FrozenSource::reliability_file(r)?,
            (None, None) => FrozenSource::nr(),
        };
        PolarCode::build(self.n, self.k, &source, self.crc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ordering {
    /// Bandit frames reach the learner in frame order; runs are reproducible.
    #[default]
    Strict,
    /// Bandit frames reach the learner as workers finish them. Faster with
    /// many threads, not reproducible.
    Relaxed,
}

impl fmt::Display for Ordering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Strict => "strict",
            Self::Relaxed => "relaxed",
        })
    }
}

impl FromStr for Ordering {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(Self::Strict),
            "relaxed" => Ok(Self::Relaxed),
            _ => Err(Error::InvalidCampaign(format!("unknown ordering {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderSpec {
    pub scheme: Scheme,
}

impl Default for DecoderSpec {
    fn default() -> Self {
        Self { scheme: Scheme::RlCabp }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerSpec {
    /// Whether the learner keeps updating during the sweep.
    pub mode: LearnerMode,
    /// Bandit invocations spent training before the first point.
    pub pretrain_steps: usize,
    pub pretrain_ebn0_db: f64,
    /// Frame cap for pretraining.
    pub pretrain_max_frames: u64,
    /// Start every point from a fresh (and freshly pretrained) learner.
    pub reset_per_point: bool,
    pub ordering: Ordering,
}

impl Default for LearnerSpec {
    fn default() -> Self {
        Self {
            mode: LearnerMode::Continue,
            pretrain_steps: 0,
            pretrain_ebn0_db: 3.0,
            pretrain_max_frames: 10_000_000,
            reset_per_point: false,
            ordering: Ordering::Strict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSpec {
    pub ebn0_db: Vec<f64>,
    pub max_frames: u64,
    pub min_frame_errors: u64,
    /// Bandit invocations per grid value in parameter studies.
    pub time_step_budget: usize,
    pub base_seed: u64,
    pub rate_convention: RateConvention,
    /// Frames decoded in parallel before the stop rule is checked.
    pub batch_size: usize,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            ebn0_db: vec![3.0],
            max_frames: 1_000_000,
            min_frame_errors: 100,
            time_step_budget: 10_000,
            base_seed: 1,
            rate_convention: RateConvention::KOverN,
            batch_size: 512,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
    #[default]
    Both,
}

impl OutputFormat {
    fn csv(self) -> bool {
        self != Self::Json
    }

    fn json(self) -> bool {
        self != Self::Csv
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "both" => Ok(Self::Both),
            _ => Err(Error::InvalidCampaign(format!("unknown output format {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Defaults to `$RLCABP_OUTPUT_DIR`, then `results`.
    pub dir: Option<PathBuf>,
    /// File stem.
    pub name: String,
    pub format: OutputFormat,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: None,
            name: "results".into(),
            format: OutputFormat::Both,
        }
    }
}

impl OutputSpec {
    pub fn resolved_dir(&self) -> PathBuf {
        self.dir.clone().unwrap_or_else(default_output_dir)
    }
}

pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("results"))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub code: CodeSpec,
    pub decoder: DecoderSpec,
    pub bp: BpConfig,
    pub bandit: BanditConfig,
    pub learner: LearnerSpec,
    pub sim: SimSpec,
    pub output: OutputSpec,
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        self.bp.validate()?;
        self.bandit.validate()?;
        let bad = |m: String| Err(Error::InvalidCampaign(m));
        if self.sim.ebn0_db.is_empty() {
            return bad("the Eb/N0 grid is empty".into());
        }
        if let Some(x) = self.sim.ebn0_db.iter().find(|x| !x.is_finite()) {
            return bad(format!("Eb/N0 {x} is not finite"));
        }
        if self.sim.max_frames == 0 {
            return bad("max_frames must be at least 1".into());
        }
        if self.sim.min_frame_errors == 0 {
            return bad("min_frame_errors must be at least 1".into());
        }
        if self.sim.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !self.learner.pretrain_ebn0_db.is_finite() {
            return bad("pretrain_ebn0_db is not finite".into());
        }
        Ok(())
    }
}

/// Exact two-sided binomial interval for `errors` out of `frames`.
pub fn clopper_pearson(errors: u64, frames: u64, confidence: f64) -> (f64, f64) {
    if frames == 0 {
        return (0.0, 1.0);
    }
    let tail = (1.0 - confidence) / 2.0;
    let (x, n) = (errors as f64, frames as f64);
    let low = if errors == 0 {
        0.0
    } else {
        Beta::new(x, n - x + 1.0).expect("positive shapes").inverse_cdf(tail)
    };
    let high = if errors >= frames {
        1.0
    } else {
        Beta::new(x + 1.0, n - x).expect("positive shapes").inverse_cdf(1.0 - tail)
    };
    (low, high)
}

/// One transmitted frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// Message word, frozen positions zero.
    pub u: Vec<u8>,
    pub llr: Vec<f64>,
}

/// Seeded frames for one channel: uniform payload, CRC, encode, BPSK/AWGN.
#[derive(Debug, Clone)]
pub struct FrameSource<'a> {
    code: &'a PolarCode,
    channel: ChannelConfig,
    base_seed: u64,
    key: u64,
}

impl<'a> FrameSource<'a> {
    pub fn new(code: &'a PolarCode, channel: ChannelConfig, base_seed: u64) -> Self {
        Self {
            code,
            channel,
            base_seed,
            key: channel.ebn0_db.to_bits(),
        }
    }

    fn salted(mut self, salt: u64) -> Self {
        self.key ^= salt;
        self
    }

    pub fn channel(&self) -> &ChannelConfig {
        &self.channel
    }

    pub fn frame(&self, idx: u64) -> Frame {
        let mut rng = stream_rng(self.base_seed, Stream::Payload, self.key, idx);
        let payload: Vec<u8> = (0..self.code.payload_len()).map(|_| rng.random_range(0..2u8)).collect();
        let info = self.code.crc_attach(&payload).expect("payload sized from the code");
        let u = self.code.message_from_info(&info).expect("info sized from the code");
        let x = self.code.encode(&u).expect("frozen bits are zero");
        let llr = self.channel.transmit(&x, &mut stream_rng(self.base_seed, Stream::Noise, self.key, idx));
        Frame { u, llr }
    }

    fn rp_rng(&self, idx: u64) -> crate::rng::SimRng {
        stream_rng(self.base_seed, Stream::RandomPermutations, self.key, idx)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct FrameTally {
    error: bool,
    undetected: bool,
    iterations: usize,
    attempts: usize,
    reward: Option<u8>,
}

fn tally_frame(code: &PolarCode, u: &[u8], out: &DecodeOutcome, iterations: usize, attempts: usize, reward: Option<u8>) -> FrameTally {
    let correct = code.info_set().iter().all(|&i| out.u_hat[i] == u[i]);
    FrameTally {
        error: !out.crc_ok || !correct,
        undetected: out.crc_ok && !correct,
        iterations,
        attempts,
        reward,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Tally {
    frames: u64,
    errors: u64,
    undetected: u64,
    iterations: u64,
    attempts: u64,
    invocations: u64,
    rewards: u64,
}

impl Tally {
    fn add(&mut self, f: &FrameTally) {
        self.frames += 1;
        self.errors += u64::from(f.error);
        self.undetected += u64::from(f.undetected);
        self.iterations += f.iterations as u64;
        self.attempts += f.attempts as u64;
        if let Some(r) = f.reward {
            self.invocations += 1;
            self.rewards += u64::from(r);
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct StopRule {
    max_frames: u64,
    min_errors: Option<u64>,
    min_invocations: Option<u64>,
}

impl StopRule {
    fn reached(&self, t: &Tally) -> bool {
        t.frames >= self.max_frames
            || self.min_errors.is_some_and(|e| t.errors >= e)
            || self.min_invocations.is_some_and(|i| t.invocations >= i)
    }
}

enum FirstPass {
    Done(FrameTally),
    Pending { frame: Frame, first: DecodeOutcome },
}

/// Decodes frames in parallel batches and applies the stop rule at the
/// exact frame where it triggers.
struct Engine<'a> {
    code: &'a PolarCode,
    bp: BpConfig,
    scheme: Scheme,
    m: usize,
    actions: &'a [Action],
    batch: usize,
    ordering: Ordering,
}

impl Engine<'_> {
    fn run(&self, source: &FrameSource, stop: StopRule, mut learner: Option<&mut Learner>) -> Result<Tally> {
        let mut tally = Tally::default();
        if self.scheme == Scheme::RlCabp && learner.is_none() {
            return Err(Error::InvalidCampaign("rl-cabp needs a learner".into()));
        }
        let mut seq = CabpDecoder::new(self.code, self.bp)?;
        let mut next = 0u64;
        while !stop.reached(&tally) {
            let end = (next + self.batch as u64).min(stop.max_frames);
            let passes = match (&mut learner, self.ordering) {
                (Some(l), Ordering::Relaxed) if self.scheme == Scheme::RlCabp => self.relaxed_batch(source, next..end, l)?,
                _ => self.first_passes(source, next..end)?,
            };
            for pass in passes {
                let f = match pass {
                    FirstPass::Done(f) => f,
                    FirstPass::Pending { frame, first } => {
                        let l = learner.as_deref_mut().expect("checked above");
                        let rec = l.continue_after(&frame.llr, self.actions, first, &mut seq)?;
                        tally_frame(self.code, &frame.u, &rec.outcome, rec.total_iterations, rec.attempts, rec.reward)
                    }
                };
                tally.add(&f);
                if stop.reached(&tally) {
                    break;
                }
            }
            next = end;
        }
        Ok(tally)
    }

    /// Everything that does not touch the learner, in parallel.
    fn first_passes(&self, source: &FrameSource, range: std::ops::Range<u64>) -> Result<Vec<FirstPass>> {
        match self.scheme {
            Scheme::RlCabp => {
                let dec = CabpDecoder::new(self.code, self.bp)?;
                let id = StagePermutation::identity(self.code.stages());
                range
                    .into_par_iter()
                    .map_init(
                        || dec.clone(),
                        |dec, idx| {
                            let frame = source.frame(idx);
                            let first = dec.decode(&frame.llr, &id)?;
                            Ok(if first.crc_ok {
                                FirstPass::Done(tally_frame(self.code, &frame.u, &first, first.iterations_used, 1, None))
                            } else {
                                FirstPass::Pending { frame, first }
                            })
                        },
                    )
                    .collect()
            }
            scheme => {
                let dec = BaselineDecoder::new(scheme, self.code, self.bp, self.m)?;
                range
                    .into_par_iter()
                    .map_init(
                        || dec.clone(),
                        |dec, idx| {
                            let frame = source.frame(idx);
                            let rec = dec.decode(&frame.llr, &mut source.rp_rng(idx))?;
                            Ok(FirstPass::Done(tally_frame(
                                self.code,
                                &frame.u,
                                &rec.outcome,
                                rec.total_iterations,
                                rec.attempts,
                                None,
                            )))
                        },
                    )
                    .collect()
            }
        }
    }

    /// Whole frames in parallel, sharing the learner under a lock.
    fn relaxed_batch(&self, source: &FrameSource, range: std::ops::Range<u64>, learner: &mut Learner) -> Result<Vec<FirstPass>> {
        let dec = CabpDecoder::new(self.code, self.bp)?;
        let shared = Mutex::new(learner);
        let id = StagePermutation::identity(self.code.stages());
        range
            .into_par_iter()
            .map_init(
                || dec.clone(),
                |dec, idx| {
                    let frame = source.frame(idx);
                    let first = dec.decode(&frame.llr, &id)?;
                    if first.crc_ok {
                        return Ok(FirstPass::Done(tally_frame(self.code, &frame.u, &first, first.iterations_used, 1, None)));
                    }
                    let j = shared.lock().expect("learner lock").take_action();
                    let (out, extra, iters) = retry_with_action(&self.actions[j], |p| dec.decode(&frame.llr, p))?;
                    let reward = u8::from(out.crc_ok);
                    shared.lock().expect("learner lock").record(j, reward)?;
                    Ok(FirstPass::Done(tally_frame(
                        self.code,
                        &frame.u,
                        &out,
                        first.iterations_used + iters,
                        1 + extra,
                        Some(reward),
                    )))
                },
            )
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub ebn0_db: f64,
    pub sigma2: f64,
    pub frames: u64,
    /// Frames whose information bits are wrong or whose CRC fails.
    pub frame_errors: u64,
    pub fer: f64,
    /// 95% Clopper-Pearson interval on the FER.
    pub fer_ci_low: f64,
    pub fer_ci_high: f64,
    /// CRC-valid but wrong; included in `frame_errors`.
    pub undetected_errors: u64,
    /// BP iterations per frame, summed over attempts.
    pub mean_iters: f64,
    pub mean_attempts: f64,
    pub bandit_invocations: u64,
    pub mean_reward: Option<f64>,
}

impl PointResult {
    fn from_tally(channel: &ChannelConfig, t: &Tally) -> Self {
        let frames = t.frames as f64;
        let (lo, hi) = clopper_pearson(t.errors, t.frames, 0.95);
        Self {
            ebn0_db: channel.ebn0_db,
            sigma2: channel.sigma2,
            frames: t.frames,
            frame_errors: t.errors,
            fer: t.errors as f64 / frames,
            fer_ci_low: lo,
            fer_ci_high: hi,
            undetected_errors: t.undetected,
            mean_iters: t.iterations as f64 / frames,
            mean_attempts: t.attempts as f64 / frames,
            bandit_invocations: t.invocations,
            mean_reward: (t.invocations > 0).then(|| t.rewards as f64 / t.invocations as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedInfo {
    pub base_seed: u64,
    /// Seed of the action-set stream.
    pub action_set_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub scheme: Scheme,
    pub learner_mode: LearnerMode,
    pub ordering: Ordering,
    /// False only for relaxed-order bandit runs.
    pub reproducible: bool,
    pub rate_convention: RateConvention,
    pub rate: f64,
    pub payload_bits: usize,
    pub crc_bits: usize,
    pub pretrain_steps: usize,
    /// Mean reward over pretraining; one entry per learner trained.
    pub pretrain_mean_reward: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub version: String,
    pub config: CampaignConfig,
    pub seeds: SeedInfo,
    pub metadata: RunMetadata,
    pub points: Vec<PointResult>,
    /// Reward per bandit invocation across all points, in learner order.
    pub reward_trace: Vec<u8>,
    /// Running mean of `reward_trace`.
    pub avg_cumulative_reward: Vec<f64>,
}

pub fn running_mean(trace: &[u8]) -> Vec<f64> {
    let mut sum = 0u64;
    trace
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            sum += u64::from(r);
            sum as f64 / (i + 1) as f64
        })
        .collect()
}

fn action_set(cfg: &CampaignConfig, k: usize) -> Result<Vec<Action>> {
    let mut rng = stream_rng(cfg.sim.base_seed, Stream::ActionSet, 0, 0);
    build_action_set(cfg.code.n, k, cfg.bandit.m, &mut rng)
}

fn channel_for(code: &PolarCode, cfg: &CampaignConfig, ebn0_db: f64) -> Result<ChannelConfig> {
    ChannelConfig::from_ebn0(ebn0_db, cfg.sim.rate_convention.rate(code))
}

/// Runs the FER sweep described by `cfg`.
pub fn run_fer_campaign(cfg: &CampaignConfig) -> Result<CampaignResult> {
    cfg.validate()?;
    let code = cfg.code.build()?;
    let scheme = cfg.decoder.scheme;
    let actions = if scheme == Scheme::RlCabp { action_set(cfg, cfg.bandit.k)? } else { Vec::new() };
    let engine = Engine {
        code: &code,
        bp: cfg.bp,
        scheme,
        m: cfg.bandit.m,
        actions: &actions,
        batch: cfg.sim.batch_size,
        ordering: cfg.learner.ordering,
    };
    let mut pretrain_means = Vec::new();
    let make_learner = |point: Option<usize>, pretrain_means: &mut Vec<f64>| -> Result<Learner> {
        let seed = match point {
            None => cfg.sim.base_seed,
            Some(p) => derive_seed(cfg.sim.base_seed, Stream::Bandit, u64::MAX, p as u64),
        };
        let mut learner = Learner::new(&cfg.bandit, seed, LearnerMode::Continue)?;
        if cfg.learner.pretrain_steps > 0 {
            let ch = channel_for(&code, cfg, cfg.learner.pretrain_ebn0_db)?;
            let source = FrameSource::new(&code, ch, cfg.sim.base_seed).salted(PRETRAIN_SALT);
            let stop = StopRule {
                max_frames: cfg.learner.pretrain_max_frames,
                min_errors: None,
                min_invocations: Some(cfg.learner.pretrain_steps as u64),
            };
            let t = engine.run(&source, stop, Some(&mut learner))?;
            if t.invocations < cfg.learner.pretrain_steps as u64 {
                return Err(Error::BudgetUnreachable {
                    budget: cfg.learner.pretrain_steps,
                    reached: t.invocations as usize,
                    max_frames: cfg.learner.pretrain_max_frames,
                });
            }
            pretrain_means.push(t.rewards as f64 / t.invocations as f64);
            learner.take_trace();
        }
        learner.set_mode(cfg.learner.mode);
        Ok(learner)
    };

    let rl = scheme == Scheme::RlCabp;
    let mut learner = if rl && !cfg.learner.reset_per_point {
        Some(make_learner(None, &mut pretrain_means)?)
    } else {
        None
    };
    let mut points = Vec::with_capacity(cfg.sim.ebn0_db.len());
    let mut reward_trace = Vec::new();
    for (p, &ebn0) in cfg.sim.ebn0_db.iter().enumerate() {
        if rl && cfg.learner.reset_per_point {
            learner = Some(make_learner(Some(p), &mut pretrain_means)?);
        }
        let ch = channel_for(&code, cfg, ebn0)?;
        let source = FrameSource::new(&code, ch, cfg.sim.base_seed);
        let stop = StopRule {
            max_frames: cfg.sim.max_frames,
            min_errors: Some(cfg.sim.min_frame_errors),
            min_invocations: None,
        };
        let t = engine.run(&source, stop, learner.as_mut())?;
        if let Some(l) = learner.as_mut() {
            reward_trace.extend(l.take_trace());
        }
        points.push(PointResult::from_tally(&ch, &t));
    }

    Ok(CampaignResult {
        version: version_stamp(),
        config: cfg.clone(),
        seeds: SeedInfo {
            base_seed: cfg.sim.base_seed,
            action_set_seed: derive_seed(cfg.sim.base_seed, Stream::ActionSet, 0, 0),
        },
        metadata: RunMetadata {
            scheme,
            learner_mode: cfg.learner.mode,
            ordering: cfg.learner.ordering,
            reproducible: !(rl && cfg.learner.ordering == Ordering::Relaxed),
            rate_convention: cfg.sim.rate_convention,
            rate: cfg.sim.rate_convention.rate(&code),
            payload_bits: code.payload_len(),
            crc_bits: code.crc_len(),
            pretrain_steps: if rl { cfg.learner.pretrain_steps } else { 0 },
            pretrain_mean_reward: pretrain_means,
        },
        avg_cumulative_reward: running_mean(&reward_trace),
        points,
        reward_trace,
    })
}

/// A bandit parameter varied by a study. An `Epsilon` row runs ε-greedy and
/// a `C` row runs UCB whatever the configured algorithm; `K` rows keep it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyParam {
    Epsilon,
    C,
    K,
}

impl fmt::Display for StudyParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Epsilon => "epsilon",
            Self::C => "c",
            Self::K => "k",
        })
    }
}

impl FromStr for StudyParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epsilon" | "eps" => Ok(Self::Epsilon),
            "c" => Ok(Self::C),
            "k" => Ok(Self::K),
            _ => Err(Error::InvalidCampaign(format!("unknown study parameter {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub param: StudyParam,
    pub value: f64,
    pub time_steps: usize,
    pub cumulative_reward: u64,
    /// `None` for a zero budget.
    pub mean_reward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub version: String,
    pub config: CampaignConfig,
    pub seeds: SeedInfo,
    pub ebn0_db: f64,
    /// Frames drawn to collect the failed first attempts shared by all rows.
    pub frames_scanned: u64,
    pub rows: Vec<StudyRow>,
    /// Reward trace per row, in row order.
    pub traces: Vec<Vec<u8>>,
}

impl StudyResult {
    /// Row with the largest mean reward; ties go to the earlier row.
    pub fn best_row(&self) -> Option<&StudyRow> {
        self.rows.iter().fold(None, |best: Option<&StudyRow>, r| match (best, r.mean_reward) {
            (Some(b), Some(m)) if b.mean_reward.is_some_and(|bm| bm >= m) => Some(b),
            (_, Some(_)) => Some(r),
            (b, None) => b,
        })
    }
}

/// Collects the first `budget` frames whose unpermuted decode fails.
fn failing_frames(code: &PolarCode, cfg: &CampaignConfig, source: &FrameSource, budget: usize) -> Result<(Vec<Vec<f64>>, u64)> {
    let dec = CabpDecoder::new(code, cfg.bp)?;
    let id = StagePermutation::identity(code.stages());
    let mut found = Vec::with_capacity(budget);
    let mut next = 0u64;
    while found.len() < budget && next < cfg.sim.max_frames {
        let end = (next + cfg.sim.batch_size as u64).min(cfg.sim.max_frames);
        let batch: Vec<(u64, Option<Vec<f64>>)> = (next..end)
            .into_par_iter()
            .map_init(
                || dec.clone(),
                |dec, idx| {
                    let frame = source.frame(idx);
                    let ok = dec.decode(&frame.llr, &id).map(|o| o.crc_ok)?;
                    Ok((idx, (!ok).then_some(frame.llr)))
                },
            )
            .collect::<Result<_>>()?;
        for (idx, llr) in batch {
            if let Some(llr) = llr {
                found.push(llr);
                if found.len() == budget {
                    return Ok((found, idx + 1));
                }
            }
        }
        next = end;
    }
    if found.len() < budget {
        return Err(Error::BudgetUnreachable {
            budget,
            reached: found.len(),
            max_frames: cfg.sim.max_frames,
        });
    }
    Ok((found, next))
}

fn single_point(cfg: &CampaignConfig) -> Result<f64> {
    match cfg.sim.ebn0_db.as_slice() {
        [x] => Ok(*x),
        grid => Err(Error::InvalidCampaign(format!(
            "a parameter study runs at a single Eb/N0, got {} points",
            grid.len()
        ))),
    }
}

fn run_study(cfg: &CampaignConfig, grid: &[(StudyParam, f64)]) -> Result<StudyResult> {
    cfg.validate()?;
    let ebn0 = single_point(cfg)?;
    let code = cfg.code.build()?;
    let ch = channel_for(&code, cfg, ebn0)?;
    let source = FrameSource::new(&code, ch, cfg.sim.base_seed);
    let budget = cfg.sim.time_step_budget;

    let mut row_cfgs = Vec::with_capacity(grid.len());
    for &(param, value) in grid {
        let mut b = cfg.bandit;
        match param {
            StudyParam::Epsilon => {
                b.algo = BanditAlgo::EpsGreedy;
                b.epsilon = value;
            }
            StudyParam::C => {
                b.algo = BanditAlgo::Ucb;
                b.c = value;
            }
            StudyParam::K => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::InvalidCampaign(format!("k = {value} is not a positive integer")));
                }
                b.k = value as usize;
            }
        }
        b.validate()?;
        row_cfgs.push(b);
    }
    let k_needed = row_cfgs.iter().map(|b| b.k).max().unwrap_or(cfg.bandit.k);
    // Action sets for smaller k are prefixes of this one.
    let actions = if grid.is_empty() { Vec::new() } else { action_set(cfg, k_needed)? };

    let (frames, scanned) = if budget > 0 && !grid.is_empty() {
        failing_frames(&code, cfg, &source, budget)?
    } else {
        (Vec::new(), 0)
    };

    // Each (frame, permutation) pair is decoded at most once across rows.
    let mut cache: HashMap<(usize, u64), (bool, usize)> = HashMap::new();
    let mut dec = CabpDecoder::new(&code, cfg.bp)?;
    let mut rows = Vec::with_capacity(grid.len());
    let mut traces = Vec::with_capacity(grid.len());
    for (&(param, value), b) in grid.iter().zip(&row_cfgs) {
        let mut learner = Learner::new(b, cfg.sim.base_seed, LearnerMode::Continue)?;
        let arms = &actions[..b.k];
        for (f, llr) in frames.iter().enumerate() {
            let j = learner.take_action();
            let (out, _, _) = retry_with_action(&arms[j], |p| {
                let (crc_ok, iterations_used) = match cache.get(&(f, p.id())) {
                    Some(&hit) => hit,
                    None => {
                        let o = dec.decode(llr, p)?;
                        cache.insert((f, p.id()), (o.crc_ok, o.iterations_used));
                        (o.crc_ok, o.iterations_used)
                    }
                };
                Ok(DecodeOutcome {
                    u_hat: Vec::new(),
                    crc_ok,
                    iterations_used,
                    permutation_id: crc_ok.then(|| p.id()),
                })
            })?;
            learner.record(j, u8::from(out.crc_ok))?;
        }
        let trace = learner.take_trace();
        let cumulative: u64 = trace.iter().map(|&r| u64::from(r)).sum();
        rows.push(StudyRow {
            param,
            value,
            time_steps: trace.len(),
            cumulative_reward: cumulative,
            mean_reward: (!trace.is_empty()).then(|| cumulative as f64 / trace.len() as f64),
        });
        traces.push(trace);
    }

    Ok(StudyResult {
        version: version_stamp(),
        config: cfg.clone(),
        seeds: SeedInfo {
            base_seed: cfg.sim.base_seed,
            action_set_seed: derive_seed(cfg.sim.base_seed, Stream::ActionSet, 0, 0),
        },
        ebn0_db: ebn0,
        frames_scanned: scanned,
        rows,
        traces,
    })
}

/// Mean reward over the first `time_step_budget` bandit invocations for each
/// grid value. All rows replay the same failed frames.
pub fn run_reward_study(cfg: &CampaignConfig, grid: &[(StudyParam, f64)]) -> Result<StudyResult> {
    run_study(cfg, grid)
}

/// Cumulative reward at the budget for each number of arms.
pub fn run_k_study(cfg: &CampaignConfig, k_grid: &[usize]) -> Result<StudyResult> {
    let grid: Vec<(StudyParam, f64)> = k_grid.iter().map(|&k| (StudyParam::K, k as f64)).collect();
    run_study(cfg, &grid)
}

#[derive(Serialize)]
struct CsvRow {
    ebn0_db: f64,
    frames: u64,
    errors: u64,
    fer: f64,
    mean_iters: f64,
    mean_attempts: f64,
    undetected_errors: u64,
}

const CSV_HEADER: [&str; 7] = [
    "ebn0_db",
    "frames",
    "errors",
    "fer",
    "mean_iters",
    "mean_attempts",
    "undetected_errors",
];

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes `<name>.csv`, `<name>.json` and, when the bandit ran,
/// `<name>_trace.csv` into `dir`. Returns the paths written.
pub fn emit_results(result: &CampaignResult, dir: &Path, name: &str, format: OutputFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if format.csv() {
        let path = dir.join(format!("{name}.csv"));
        // Header written by hand so an empty campaign still gets one.
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&path)?;
        w.write_record(CSV_HEADER)?;
        for p in &result.points {
            w.serialize(CsvRow {
                ebn0_db: p.ebn0_db,
                frames: p.frames,
                errors: p.frame_errors,
                fer: p.fer,
                mean_iters: p.mean_iters,
                mean_attempts: p.mean_attempts,
                undetected_errors: p.undetected_errors,
            })?;
        }
        w.flush()?;
        written.push(path);
        if !result.reward_trace.is_empty() {
            let path = dir.join(format!("{name}_trace.csv"));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["time_step", "reward", "avg_cumulative_reward"])?;
            for (i, (&r, &a)) in result.reward_trace.iter().zip(&result.avg_cumulative_reward).enumerate() {
                w.serialize((i + 1, r, a))?;
            }
            w.flush()?;
            written.push(path);
        }
    }
    if format.json() {
        let path = dir.join(format!("{name}.json"));
        write_json(&path, result)?;
        written.push(path);
    }
    Ok(written)
}

/// Writes `<name>.csv` (one row per grid value), `<name>.json` and
/// `<name>_traces.csv` (running mean reward per row).
pub fn emit_study(result: &StudyResult, dir: &Path, name: &str, format: OutputFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if format.csv() {
        let path = dir.join(format!("{name}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["param", "value", "time_steps", "cumulative_reward", "mean_reward"])?;
        for r in &result.rows {
            w.serialize((r.param.to_string(), r.value, r.time_steps, r.cumulative_reward, r.mean_reward))?;
        }
        w.flush()?;
        written.push(path);

        let path = dir.join(format!("{name}_traces.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        let mut header = vec!["time_step".to_string()];
        header.extend(result.rows.iter().map(|r| format!("{}={}", r.param, r.value)));
        w.write_record(&header)?;
        let means: Vec<Vec<f64>> = result.traces.iter().map(|t| running_mean(t)).collect();
        let steps = means.iter().map(Vec::len).max().unwrap_or(0);
        for i in 0..steps {
            let mut rec = vec![(i + 1).to_string()];
            rec.extend(means.iter().map(|m| m.get(i).map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        written.push(path);
    }
    if format.json() {
        let path = dir.join(format!("{name}.json"));
        write_json(&path, result)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(scheme: Scheme) -> CampaignConfig {
        let mut cfg = CampaignConfig::default();
        cfg.decoder.scheme = scheme;
        cfg.bandit.k = 20;
        cfg.sim.ebn0_db = vec![2.0, 3.0];
        cfg.sim.max_frames = 300;
        cfg.sim.min_frame_errors = 1_000;
        cfg.sim.batch_size = 64;
        cfg
    }

    #[test]
    fn clopper_pearson_reference_values() {
        // Reference values from scipy.stats.beta.ppf.
        let (lo, hi) = clopper_pearson(10, 100, 0.95);
        assert!((lo - 0.049_004_689_221_485_945).abs() < 1e-9, "{lo}");
        assert!((hi - 0.176_222_597_740_022_66).abs() < 1e-9, "{hi}");
        let (lo, hi) = clopper_pearson(0, 50, 0.95);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.071_121_736_464_197_64).abs() < 1e-9, "{hi}");
        assert_eq!(clopper_pearson(7, 7, 0.95).1, 1.0);
    }

    #[test]
    fn frames_are_reproducible_and_valid() {
        let code = PolarCode::nr(7, 64).unwrap();
        let ch = ChannelConfig::from_ebn0(3.0, 0.5).unwrap();
        let s = FrameSource::new(&code, ch, 4);
        let a = s.frame(17);
        assert_eq!(a, s.frame(17));
        assert_ne!(a.llr, s.frame(18).llr);
        assert!(code.crc_verify(&code.info_bits(&a.u)).unwrap());
        assert!(code.frozen_set().iter().all(|&i| a.u[i] == 0));
        let other = FrameSource::new(&code, ch, 4).salted(PRETRAIN_SALT);
        assert_ne!(other.frame(17).llr, a.llr);
    }

    #[test]
    fn high_snr_has_no_errors() {
        let mut cfg = quick(Scheme::Cabp);
        cfg.sim.ebn0_db = vec![20.0];
        cfg.sim.max_frames = 100;
        let r = run_fer_campaign(&cfg).unwrap();
        assert_eq!(r.points[0].frames, 100);
        assert_eq!(r.points[0].frame_errors, 0);
        assert_eq!(r.points[0].fer, 0.0);
        assert_eq!(r.points[0].mean_attempts, 1.0);
        assert_eq!(r.points[0].mean_iters, 50.0);
    }

    #[test]
    fn stop_rule_triggers_on_exact_frame() {
        let mut cfg = quick(Scheme::Cabp);
        cfg.sim.ebn0_db = vec![1.0];
        cfg.sim.min_frame_errors = 5;
        let r = run_fer_campaign(&cfg).unwrap();
        let p = &r.points[0];
        assert_eq!(p.frame_errors, 5);
        assert!(p.frames < 300);
        // The last counted frame is an error.
        let code = cfg.code.build().unwrap();
        let ch = ChannelConfig::from_ebn0(1.0, 0.5).unwrap();
        let src = FrameSource::new(&code, ch, cfg.sim.base_seed);
        let mut dec = CabpDecoder::new(&code, cfg.bp).unwrap();
        let last = src.frame(p.frames - 1);
        let out = dec.decode(&last.llr, &StagePermutation::identity(7)).unwrap();
        assert!(tally_frame(&code, &last.u, &out, 0, 1, None).error);
    }

    #[test]
    fn fer_is_exact_ratio_and_trace_matches_invocations() {
        let r = run_fer_campaign(&quick(Scheme::RlCabp)).unwrap();
        let mut invocations = 0;
        for p in &r.points {
            assert_eq!(p.fer, p.frame_errors as f64 / p.frames as f64);
            assert!(p.fer_ci_low <= p.fer && p.fer <= p.fer_ci_high);
            assert!(p.mean_attempts >= 1.0 && p.mean_attempts <= 7.0);
            invocations += p.bandit_invocations;
        }
        assert!(invocations > 0);
        assert_eq!(r.reward_trace.len() as u64, invocations);
        assert_eq!(r.avg_cumulative_reward.len(), r.reward_trace.len());
        assert!(r.metadata.reproducible);
    }

    #[test]
    fn rl_never_loses_a_cabp_frame() {
        let cabp = run_fer_campaign(&quick(Scheme::Cabp)).unwrap();
        let rl = run_fer_campaign(&quick(Scheme::RlCabp)).unwrap();
        for (a, b) in cabp.points.iter().zip(&rl.points) {
            assert_eq!(a.frames, b.frames);
            assert!(b.frame_errors <= a.frame_errors);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = quick(Scheme::RlCabp);
        assert_eq!(run_fer_campaign(&cfg).unwrap(), run_fer_campaign(&cfg).unwrap());
        let cfg = quick(Scheme::RpCabp);
        assert_eq!(run_fer_campaign(&cfg).unwrap(), run_fer_campaign(&cfg).unwrap());
    }

    #[test]
    fn batch_size_does_not_change_results() {
        let mut a = quick(Scheme::RlCabp);
        a.sim.min_frame_errors = 20;
        let mut b = a.clone();
        b.sim.batch_size = 7;
        let (ra, rb) = (run_fer_campaign(&a).unwrap(), run_fer_campaign(&b).unwrap());
        assert_eq!(ra.points, rb.points);
        assert_eq!(ra.reward_trace, rb.reward_trace);
    }

    #[test]
    fn pretraining_and_frozen_learner() {
        let mut cfg = quick(Scheme::RlCabp);
        cfg.learner.pretrain_steps = 10;
        cfg.learner.pretrain_ebn0_db = 1.5;
        cfg.learner.mode = LearnerMode::Frozen;
        cfg.learner.reset_per_point = true;
        let r = run_fer_campaign(&cfg).unwrap();
        assert_eq!(r.metadata.pretrain_mean_reward.len(), 2);
        assert_eq!(r.metadata.learner_mode, LearnerMode::Frozen);

        cfg.learner.pretrain_steps = 1_000;
        cfg.learner.pretrain_max_frames = 50;
        assert!(matches!(run_fer_campaign(&cfg), Err(Error::BudgetUnreachable { .. })));
    }

    #[test]
    fn relaxed_ordering_is_flagged() {
        let mut cfg = quick(Scheme::RlCabp);
        cfg.learner.ordering = Ordering::Relaxed;
        let r = run_fer_campaign(&cfg).unwrap();
        assert!(!r.metadata.reproducible);
        let total: u64 = r.points.iter().map(|p| p.bandit_invocations).sum();
        assert_eq!(r.reward_trace.len() as u64, total);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = quick(Scheme::Cabp);
        cfg.sim.ebn0_db.clear();
        assert!(run_fer_campaign(&cfg).is_err());
        let mut cfg = quick(Scheme::Cabp);
        cfg.sim.max_frames = 0;
        assert!(run_fer_campaign(&cfg).is_err());
        let mut cfg = quick(Scheme::Cabp);
        cfg.sim.min_frame_errors = 0;
        assert!(run_fer_campaign(&cfg).is_err());
        assert!(run_reward_study(&quick(Scheme::RlCabp), &[(StudyParam::Epsilon, 0.1)]).is_err());
    }

    fn study_cfg() -> CampaignConfig {
        let mut cfg = quick(Scheme::RlCabp);
        cfg.sim.ebn0_db = vec![2.0];
        cfg.sim.time_step_budget = 40;
        cfg.sim.max_frames = 10_000;
        cfg
    }

    #[test]
    fn reward_study_rows_and_determinism() {
        let cfg = study_cfg();
        let grid = [(StudyParam::Epsilon, 0.0625), (StudyParam::Epsilon, 1.0), (StudyParam::C, 0.125)];
        let a = run_reward_study(&cfg, &grid).unwrap();
        assert_eq!(a, run_reward_study(&cfg, &grid).unwrap());
        assert_eq!(a.rows.len(), 3);
        for (row, trace) in a.rows.iter().zip(&a.traces) {
            assert_eq!(row.time_steps, 40);
            assert_eq!(trace.len(), 40);
            assert_eq!(row.cumulative_reward, trace.iter().map(|&r| u64::from(r)).sum::<u64>());
        }
        assert!(a.best_row().is_some());
    }

    #[test]
    fn zero_budget_study_is_empty() {
        let mut cfg = study_cfg();
        cfg.sim.time_step_budget = 0;
        let r = run_reward_study(&cfg, &[(StudyParam::Epsilon, 0.5)]).unwrap();
        assert_eq!(r.rows[0].time_steps, 0);
        assert_eq!(r.rows[0].mean_reward, None);
        assert!(r.traces[0].is_empty());
        assert!(r.best_row().is_none());
    }

    #[test]
    fn unreachable_budget_is_an_error() {
        let mut cfg = study_cfg();
        cfg.sim.ebn0_db = vec![8.0];
        cfg.sim.max_frames = 100;
        assert!(matches!(
            run_k_study(&cfg, &[1]),
            Err(Error::BudgetUnreachable { reached: 0, .. })
        ));
    }

    #[test]
    fn single_arm_reward_matches_fixed_bundle() {
        let cfg = study_cfg();
        let r = run_k_study(&cfg, &[1, 5]).unwrap();
        // With one arm every frame plays action 0, so the reward is the
        // success count of that bundle over the collected frames.
        let code = cfg.code.build().unwrap();
        let action = &action_set(&cfg, 1).unwrap()[0];
        let ch = channel_for(&code, &cfg, 2.0).unwrap();
        let src = FrameSource::new(&code, ch, cfg.sim.base_seed);
        let (frames, _) = failing_frames(&code, &cfg, &src, 40).unwrap();
        let mut dec = CabpDecoder::new(&code, cfg.bp).unwrap();
        let wins = frames
            .iter()
            .filter(|llr| retry_with_action(action, |p| dec.decode(llr, p)).unwrap().0.crc_ok)
            .count() as u64;
        assert_eq!(r.rows[0].cumulative_reward, wins);
        assert_eq!(r.rows[1].param, StudyParam::K);
    }

    #[test]
    fn json_round_trip_and_csv_shape() {
        let dir = tempfile::tempdir().unwrap();
        let r = run_fer_campaign(&quick(Scheme::RlCabp)).unwrap();
        let files = emit_results(&r, dir.path(), "run", OutputFormat::Both).unwrap();
        assert_eq!(files.len(), 3);
        let back: CampaignResult = serde_json::from_str(&fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
        assert_eq!(back, r);
        let csv = fs::read_to_string(dir.path().join("run.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER.join(","));
        assert_eq!(lines.len(), 1 + cfg_points(&r));
        let trace = fs::read_to_string(dir.path().join("run_trace.csv")).unwrap();
        assert_eq!(trace.lines().count(), 1 + r.reward_trace.len());
    }

    fn cfg_points(r: &CampaignResult) -> usize {
        r.config.sim.ebn0_db.len()
    }

    #[test]
    fn empty_campaign_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = run_fer_campaign(&quick(Scheme::Cabp)).unwrap();
        r.points.clear();
        emit_results(&r, dir.path(), "empty", OutputFormat::Csv).unwrap();
        let csv = fs::read_to_string(dir.path().join("empty.csv")).unwrap();
        assert_eq!(csv, format!("{}\n", CSV_HEADER.join(",")));
        assert!(!dir.path().join("empty.json").exists());
    }

    #[test]
    fn study_files() {
        let dir = tempfile::tempdir().unwrap();
        let r = run_reward_study(&study_cfg(), &[(StudyParam::C, 0.25), (StudyParam::C, 0.5)]).unwrap();
        emit_study(&r, dir.path(), "study", OutputFormat::Both).unwrap();
        let back: StudyResult = serde_json::from_str(&fs::read_to_string(dir.path().join("study.json")).unwrap()).unwrap();
        assert_eq!(back, r);
        let csv = fs::read_to_string(dir.path().join("study.csv")).unwrap();
        assert_eq!(csv.lines().count(), 3);
        let traces = fs::read_to_string(dir.path().join("study_traces.csv")).unwrap();
        assert_eq!(traces.lines().next().unwrap(), "time_step,c=0.25,c=0.5");
        assert_eq!(traces.lines().count(), 41);
    }
}
