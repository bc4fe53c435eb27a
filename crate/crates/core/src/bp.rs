//! Belief-propagation decoding on the polar factor graph and its CRC-aided
//! variant.
//!
//! Messages live in two `(n + 1) × N` arrays: `r[s][i]` flows left to right
//! (information side towards the channel), `l[s][i]` right to left. Stage 0
//! is the information side, stage `n` the channel. One iteration is a full
//! right-to-left sweep (stages `n-1 .. 0`) followed by a full left-to-right
//! sweep (stages `0 .. n-1`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::permutation::StagePermutation;
use crate::polar::PolarCode;

/// Min-sum scale.
pub const ALPHA: f64 = 0.9375;
/// LLR saturation magnitude, also used as the "+∞" frozen pin.
pub const SAT: f64 = 40.0;

/// `alpha · sgn(x) · sgn(y) · min(|x|, |y|)` with `sgn(0) = +1`.
#[inline(always)]
pub fn minsum(x: f64, y: f64, alpha: f64) -> f64 {
    let m = alpha * x.abs().min(y.abs());
    if (x < 0.0) != (y < 0.0) {
        -m
    } else {
        m
    }
}

/// [`minsum`] with the standard scale of 0.9375.
#[inline(always)]
pub fn minsum_f(x: f64, y: f64) -> f64 {
    minsum(x, y, ALPHA)
}

#[inline(always)]
fn clamp(v: f64, sat: f64) -> f64 {
    v.clamp(-sat, sat)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BpConfig {
    pub i_max: usize,
    pub i_min: usize,
    pub alpha: f64,
    pub sat: f64,
    /// Exchange extrinsic information with the CRC factor graph from
    /// iteration `i_min` on.
    pub crc_aid: bool,
    /// Stop at the first CRC-valid hard decision from iteration `i_min` on.
    pub early_term: bool,
}

impl Default for BpConfig {
    fn default() -> Self {
        Self {
            i_max: 100,
            i_min: 50,
            alpha: ALPHA,
            sat: SAT,
            crc_aid: true,
            early_term: true,
        }
    }
}

impl BpConfig {
    /// Plain BP: no CRC aid, no early termination, decide after `i_max`.
    pub fn plain() -> Self {
        Self {
            crc_aid: false,
            early_term: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0 < self.i_min && self.i_min < self.i_max) {
            return Err(Error::InvalidDecoderConfig(format!(
                "need 0 < i_min < i_max, got i_min = {}, i_max = {}",
                self.i_min, self.i_max
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidDecoderConfig(format!("alpha = {} outside (0, 1]", self.alpha)));
        }
        if !(self.sat > 0.0 && self.sat.is_finite()) {
            return Err(Error::InvalidDecoderConfig(format!("sat = {} must be positive", self.sat)));
        }
        Ok(())
    }
}

/// The `r` and `l` message arrays of one decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageMemory {
    stages: usize,
    len: usize,
    r: Vec<f64>,
    l: Vec<f64>,
    initialized: bool,
}

impl MessageMemory {
    pub fn new(stages: usize) -> Self {
        let len = 1usize << stages;
        Self {
            stages,
            len,
            r: vec![0.0; (stages + 1) * len],
            l: vec![0.0; (stages + 1) * len],
            initialized: false,
        }
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Zeroes every message, sets `l[n] = channel` and pins `r[0][i] = +sat`
    /// wherever `pinned[i]`. Channel values are clamped to `±sat`.
    pub fn initialize(&mut self, channel: &[f64], pinned: &[bool], sat: f64) -> Result<()> {
        for len in [channel.len(), pinned.len()] {
            if len != self.len {
                return Err(Error::LengthMismatch {
                    expected: self.len,
                    actual: len,
                });
            }
        }
        self.r.fill(0.0);
        self.l.fill(0.0);
        for (r0, &pin) in self.r[..self.len].iter_mut().zip(pinned) {
            if pin {
                *r0 = sat;
            }
        }
        let base = self.stages * self.len;
        for (ln, &c) in self.l[base..].iter_mut().zip(channel) {
            *ln = clamp(c, sat);
        }
        self.initialized = true;
        Ok(())
    }

    pub fn r(&self, stage: usize) -> &[f64] {
        &self.r[stage * self.len..(stage + 1) * self.len]
    }

    pub fn l(&self, stage: usize) -> &[f64] {
        &self.l[stage * self.len..(stage + 1) * self.len]
    }

    pub fn r_mut(&mut self, stage: usize) -> &mut [f64] {
        &mut self.r[stage * self.len..(stage + 1) * self.len]
    }

    pub fn l_mut(&mut self, stage: usize) -> &mut [f64] {
        &mut self.l[stage * self.len..(stage + 1) * self.len]
    }

    /// One flooding iteration.
    pub fn iterate(&mut self, alpha: f64, sat: f64) -> Result<()> {
        if !self.initialized {
            return Err(Error::InvalidDecoderConfig("message memory used before initialization".into()));
        }
        self.iterate_unchecked(alpha, sat);
        Ok(())
    }

    fn iterate_unchecked(&mut self, alpha: f64, sat: f64) {
        let len = self.len;
        for s in (0..self.stages).rev() {
            let half = 1usize << s;
            let (l_lo, l_hi) = self.l.split_at_mut((s + 1) * len);
            let l_s = &mut l_lo[s * len..];
            let l_next = &l_hi[..len];
            let r_s = &self.r[s * len..(s + 1) * len];
            for block in (0..len).step_by(2 * half) {
                for i in block..block + half {
                    let j = i + half;
                    l_s[i] = clamp(minsum(l_next[i], l_next[j] + r_s[j], alpha), sat);
                    l_s[j] = clamp(minsum(l_next[i], r_s[i], alpha) + l_next[j], sat);
                }
            }
        }
        for s in 0..self.stages {
            let half = 1usize << s;
            let (r_lo, r_hi) = self.r.split_at_mut((s + 1) * len);
            let r_s = &r_lo[s * len..];
            let r_next = &mut r_hi[..len];
            let l_next = &self.l[(s + 1) * len..(s + 2) * len];
            for block in (0..len).step_by(2 * half) {
                for i in block..block + half {
                    let j = i + half;
                    r_next[i] = clamp(minsum(r_s[i], l_next[j] + r_s[j], alpha), sat);
                    r_next[j] = clamp(minsum(r_s[i], l_next[i], alpha) + r_s[j], sat);
                }
            }
        }
    }

    /// `û_i = 0` iff `r[0][i] + l[0][i] >= 0`.
    pub fn hard_decision(&self) -> Vec<u8> {
        self.r(0)
            .iter()
            .zip(self.l(0))
            .map(|(r, l)| u8::from(r + l < 0.0))
            .collect()
    }
}

/// Tanner graph of the CRC over the `K` information bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrcGraph {
    checks: Vec<Vec<usize>>,
    vars: usize,
}

impl CrcGraph {
    pub fn new(code: &PolarCode) -> Self {
        Self {
            checks: code.crc_parity_checks(),
            vars: code.k(),
        }
    }

    pub fn checks(&self) -> &[Vec<usize>] {
        &self.checks
    }

    /// One check-to-variable min-sum pass with the priors as
    /// variable-to-check messages. `out[v]` receives the sum of the check
    /// messages into variable `v`, clamped to `±sat`.
    pub fn extrinsic_into(&self, priors: &[f64], alpha: f64, sat: f64, out: &mut [f64]) {
        debug_assert_eq!(priors.len(), self.vars);
        out.fill(0.0);
        for check in &self.checks {
            let mut negative = false;
            let mut min1 = f64::INFINITY;
            let mut min2 = f64::INFINITY;
            let mut argmin = usize::MAX;
            for &v in check {
                let p = priors[v];
                negative ^= p < 0.0;
                let a = p.abs();
                if a < min1 {
                    min2 = min1;
                    min1 = a;
                    argmin = v;
                } else if a < min2 {
                    min2 = a;
                }
            }
            if check.len() < 2 {
                continue;
            }
            for &v in check {
                let mag = if v == argmin { min2 } else { min1 };
                let neg = negative ^ (priors[v] < 0.0);
                out[v] += if neg { -alpha * mag } else { alpha * mag };
            }
        }
        out.iter_mut().for_each(|o| *o = clamp(*o, sat));
    }
}

/// CRC-graph pass on natural-order stage-0 beliefs of length `N`. Returns a
/// length-`N` vector holding the extrinsic LLRs at the information
/// positions and zeros at the frozen ones.
pub fn crc_graph_pass(stage0_beliefs: &[f64], code: &PolarCode, alpha: f64, sat: f64) -> Result<Vec<f64>> {
    if stage0_beliefs.len() != code.len() {
        return Err(Error::LengthMismatch {
            expected: code.len(),
            actual: stage0_beliefs.len(),
        });
    }
    let graph = CrcGraph::new(code);
    let priors: Vec<f64> = code.info_set().iter().map(|&i| stage0_beliefs[i]).collect();
    let mut ext = vec![0.0; code.k()];
    graph.extrinsic_into(&priors, alpha, sat, &mut ext);
    let mut out = vec![0.0; code.len()];
    for (&i, e) in code.info_set().iter().zip(ext) {
        out[i] = e;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeOutcome {
    /// Estimated message word in natural index order.
    pub u_hat: Vec<u8>,
    pub crc_ok: bool,
    pub iterations_used: usize,
    /// Rank of the stage permutation that produced a CRC-valid word.
    pub permutation_id: Option<u64>,
}

/// A reusable CABP decoder. Owns its message memory, so one instance
/// serves one thread at a time.
#[derive(Debug, Clone)]
pub struct CabpDecoder {
    code: PolarCode,
    cfg: BpConfig,
    graph: CrcGraph,
    mem: MessageMemory,
    channel: Vec<f64>,
    pinned: Vec<bool>,
    priors: Vec<f64>,
    ext: Vec<f64>,
    info: Vec<u8>,
}

impl CabpDecoder {
    pub fn new(code: &PolarCode, cfg: BpConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            code: code.clone(),
            cfg,
            graph: CrcGraph::new(code),
            mem: MessageMemory::new(code.stages()),
            channel: vec![0.0; code.len()],
            pinned: vec![false; code.len()],
            priors: vec![0.0; code.k()],
            ext: vec![0.0; code.k()],
            info: vec![0; code.k()],
        })
    }

    pub fn code(&self) -> &PolarCode {
        &self.code
    }

    pub fn config(&self) -> &BpConfig {
        &self.cfg
    }

    /// Message memory as left by the last decode, in the permuted domain.
    pub fn memory(&self) -> &MessageMemory {
        &self.mem
    }

    /// Decodes `llr` on the factor graph whose stages are ordered by `perm`.
    pub fn decode(&mut self, llr: &[f64], perm: &StagePermutation) -> Result<DecodeOutcome> {
        if llr.len() != self.code.len() {
            return Err(Error::LengthMismatch {
                expected: self.code.len(),
                actual: llr.len(),
            });
        }
        if perm.stages() != self.code.stages() {
            return Err(Error::InvalidPermutation(format!(
                "{} stages for a code with {}",
                perm.stages(),
                self.code.stages()
            )));
        }
        Ok(self.decode_unchecked(llr, perm))
    }

    fn decode_unchecked(&mut self, llr: &[f64], perm: &StagePermutation) -> DecodeOutcome {
        let map = perm.decode_map().as_slice();
        for (i, &m) in map.iter().enumerate() {
            self.channel[m] = llr[i];
            self.pinned[m] = self.code.is_frozen(i);
        }
        let BpConfig {
            i_max,
            i_min,
            alpha,
            sat,
            crc_aid,
            early_term,
        } = self.cfg;
        self.mem
            .initialize(&self.channel, &self.pinned, sat)
            .expect("buffers sized from the code");

        for it in 1..=i_max {
            self.mem.iterate_unchecked(alpha, sat);
            if it < i_min {
                continue;
            }
            if crc_aid {
                self.crc_exchange(map, alpha, sat);
            }
            if early_term && self.check_crc(map) {
                return self.outcome(map, true, it, perm);
            }
        }
        let ok = self.check_crc(map);
        self.outcome(map, ok, i_max, perm)
    }

    fn crc_exchange(&mut self, map: &[usize], alpha: f64, sat: f64) {
        let info_set = self.code.info_set();
        let l0 = self.mem.l(0);
        for (p, &i) in self.priors.iter_mut().zip(info_set) {
            *p = l0[map[i]];
        }
        self.graph.extrinsic_into(&self.priors, alpha, sat, &mut self.ext);
        let r0 = self.mem.r_mut(0);
        for (&e, &i) in self.ext.iter().zip(info_set) {
            r0[map[i]] = e;
        }
    }

    fn check_crc(&mut self, map: &[usize]) -> bool {
        let r0 = self.mem.r(0);
        let l0 = self.mem.l(0);
        for (b, &i) in self.info.iter_mut().zip(self.code.info_set()) {
            let m = map[i];
            *b = u8::from(r0[m] + l0[m] < 0.0);
        }
        self.code.crc_check_unchecked(&self.info)
    }

    fn outcome(&self, map: &[usize], crc_ok: bool, iterations_used: usize, perm: &StagePermutation) -> DecodeOutcome {
        let r0 = self.mem.r(0);
        let l0 = self.mem.l(0);
        let u_hat = map.iter().map(|&m| u8::from(r0[m] + l0[m] < 0.0)).collect();
        DecodeOutcome {
            u_hat,
            crc_ok,
            iterations_used,
            permutation_id: crc_ok.then(|| perm.id()),
        }
    }
}

/// One-shot CABP decode; allocates a fresh decoder.
pub fn cabp_decode(llr: &[f64], perm: &StagePermutation, code: &PolarCode, cfg: &BpConfig) -> Result<DecodeOutcome> {
    CabpDecoder::new(code, *cfg)?.decode(llr, perm)
}
